fn main() {
    std::process::exit(ringqed::cli::run(std::env::args_os()));
}
