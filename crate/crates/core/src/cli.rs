//! Command-line front end.

use std::ffi::OsString;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand, ValueEnum};
use serde::Serialize;

use crate::analysis::{fit_od, FitResult};
use crate::ci::{ci_time_response, ci_transmission};
use crate::config::{CheckEntry, RunConfig};
use crate::error::{Error, Result};
use crate::noise::synthesize_counts;
use crate::params::{derive_cooperativity, derive_coupling_from_od, derive_od_from_coupling, hz, to_hz, RingResonator, SPEED_OF_LIGHT};
use crate::tc::{tc_time_response, tc_transmission};
use crate::trace::{ObservedKind, ObservedTrace};

pub const VERSION: &str = env!("CARGO_PKG_VERSION");

/// Relative tolerance of the parameter cross-check.
pub const CHECK_TOLERANCE: f64 = 0.02;

pub const EXIT_OK: i32 = 0;
pub const EXIT_CHECK_FAILED: i32 = 1;
pub const EXIT_CONFIG: i32 = 2;
pub const EXIT_IO: i32 = 3;
pub const EXIT_NOT_CONVERGED: i32 = 4;

#[derive(Debug, Parser)]
#[command(name = "ringqed", version, about = "Emitter ensembles in ring resonators: spectra, traces and OD fits")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, clap::Args)]
pub struct Common {
    /// Configuration file (TOML).
    #[arg(long)]
    pub config: PathBuf,
    /// Output directory.
    #[arg(long, default_value = ".")]
    pub out: PathBuf,
    /// Overrides the seed of the configuration.
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long, value_enum, default_value_t = Format::Csv)]
    pub format: Format,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Csv,
    Json,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Transmission spectra of the single-mode, cascaded and empty models.
    Spectrum(Common),
    /// Detector power and intracavity field after switch-on.
    Timetrace(Common),
    /// Cross-check tabulated cavity parameters.
    CheckParams(Common),
    /// Poisson photon counts drawn from the cascaded-model trace.
    SynthNoise {
        #[command(flatten)]
        common: Common,
        /// Expected total counts (overrides [noise] counts_total).
        #[arg(long)]
        counts: Option<f64>,
    },
    /// Fit the optical depth to a measured or synthetic trace.
    Fit {
        #[command(flatten)]
        common: Common,
        /// CSV with columns time_s,counts or time_s,power.
        #[arg(long)]
        data: PathBuf,
    },
}

/// Named columns of equal length.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Table {
    pub columns: Vec<String>,
    pub data: Vec<Vec<f64>>,
    #[serde(skip)]
    pub comments: Vec<String>,
}

impl Table {
    fn new(names: &[&str]) -> Self {
        Self {
            columns: names.iter().map(|s| s.to_string()).collect(),
            data: vec![Vec::new(); names.len()],
            comments: Vec::new(),
        }
    }

    fn push(&mut self, row: &[f64]) {
        for (col, &x) in self.data.iter_mut().zip(row) {
            col.push(x);
        }
    }

    pub fn rows(&self) -> usize {
        self.data.first().map_or(0, Vec::len)
    }

    pub fn column(&self, name: &str) -> Option<&[f64]> {
        self.columns.iter().position(|c| c == name).map(|i| self.data[i].as_slice())
    }

    fn to_csv(&self, sha256: &str) -> Result<Vec<u8>> {
        let mut text = format!("# ringqed {VERSION} config_sha256={sha256}\n");
        for c in &self.comments {
            let _ = writeln!(text, "# {c}");
        }
        let mut out = text.into_bytes();
        {
            let mut w = csv::Writer::from_writer(&mut out);
            w.write_record(&self.columns).map_err(csv_error)?;
            for i in 0..self.rows() {
                w.write_record(self.data.iter().map(|c| format!("{:e}", c[i]))).map_err(csv_error)?;
            }
            w.flush()?;
        }
        Ok(out)
    }

    fn to_json(&self, sha256: &str) -> Result<Vec<u8>> {
        #[derive(Serialize)]
        struct Doc<'a> {
            tool_version: &'a str,
            config_sha256: &'a str,
            comments: &'a [String],
            columns: &'a [String],
            data: &'a [Vec<f64>],
        }
        let doc = Doc {
            tool_version: VERSION,
            config_sha256: sha256,
            comments: &self.comments,
            columns: &self.columns,
            data: &self.data,
        };
        let mut bytes = serde_json::to_vec_pretty(&doc).map_err(|e| Error::domain(e.to_string()))?;
        bytes.push(b'\n');
        Ok(bytes)
    }
}

fn csv_error(e: csv::Error) -> Error {
    match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::Io(io),
        other => Error::domain(format!("{other:?}")),
    }
}

/// `power_tc`, `power_ci` and `power_empty` over the configured sweep.
pub fn spectrum_table(cfg: &RunConfig) -> Result<Table> {
    let params = cfg.system()?;
    let sweep = cfg.require_sweep()?;
    let empty = params.with_od(0.0)?;
    let mut table = Table::new(&["detuning_hz", "power_tc", "power_ci", "power_empty"]);
    let step = (sweep.stop - sweep.start) / (sweep.samples - 1) as f64;
    for i in 0..sweep.samples {
        let d = sweep.start + step * i as f64;
        table.push(&[
            to_hz(d),
            tc_transmission(params, d).norm_sqr(),
            ci_transmission(params, d).norm_sqr(),
            ci_transmission(&empty, d).norm_sqr(),
        ]);
    }
    Ok(table)
}

/// Both models on the cascaded-model grid.
pub fn timetrace_table(cfg: &RunConfig) -> Result<Table> {
    let params = cfg.system()?;
    let settings = cfg.require_trace()?;
    let dt = cfg.ci_dt()?;
    let duration = (settings.duration / dt).round() * dt;
    let ci = ci_time_response(params, &cfg.pulse, duration, dt)?;
    let tc = tc_time_response(params, &cfg.pulse, duration, dt)?;
    let mut table = Table::new(&["time_s", "det_power_tc", "det_power_ci", "ecav_re", "ecav_im"]);
    let (p_tc, p_ci, cav) = (tc.detector_power(), ci.detector_power(), ci.intracavity_ratio());
    for i in 0..ci.len().min(tc.len()) {
        table.push(&[ci.time(i), p_tc[i], p_ci[i], cav[i].re, cav[i].im]);
    }
    Ok(table)
}

/// Poisson counts binned from the cascaded-model trace.
pub fn noise_table(cfg: &RunConfig, counts_total: Option<f64>) -> Result<(Table, ObservedTrace)> {
    let params = cfg.system()?;
    let settings = cfg.require_trace()?;
    let total = counts_total
        .or(cfg.noise.counts_total)
        .ok_or_else(|| Error::config("noise.counts_total", "missing"))?;
    let dt = cfg.ci_dt()?;
    let duration = (settings.duration / dt).round() * dt;
    let trace = ci_time_response(params, &cfg.pulse, duration, dt)?;
    let data = synthesize_counts(&trace, total, cfg.noise.bin_samples, cfg.seed)?;
    let mut table = Table::new(&["time_s", "counts"]);
    for (t, c) in data.times.iter().zip(&data.values) {
        table.push(&[*t, *c]);
    }
    if let ObservedKind::Counts {
        counts_per_unit_power: Some(s),
    } = data.kind
    {
        table.comments.push(format!("counts_per_unit_power={s:e}"));
    }
    Ok((table, data))
}

/// Reads `time_s,counts` or `time_s,power` CSV data. Lines starting with `#`
/// are comments; `# counts_per_unit_power=<x>` sets the count conversion.
pub fn read_observed(path: &Path) -> Result<ObservedTrace> {
    let text = fs::read_to_string(path)?;
    parse_observed(&text)
}

pub fn parse_observed(text: &str) -> Result<ObservedTrace> {
    let bad = |m: String| Error::config("data", m);
    let mut scale = None;
    for line in text.lines() {
        if let Some(rest) = line.trim().strip_prefix('#') {
            if let Some(v) = rest.trim().strip_prefix("counts_per_unit_power=") {
                scale = Some(v.trim().parse::<f64>().map_err(|e| bad(format!("counts_per_unit_power: {e}")))?);
            }
        }
    }
    let mut reader = csv::ReaderBuilder::new()
        .comment(Some(b'#'))
        .trim(csv::Trim::All)
        .from_reader(text.as_bytes());
    let headers = reader.headers().map_err(|e| bad(e.to_string()))?.clone();
    let names: Vec<&str> = headers.iter().collect();
    let counts = match names.as_slice() {
        ["time_s", "counts"] => true,
        ["time_s", "power"] => false,
        _ => return Err(bad(format!("expected columns time_s,counts or time_s,power, got {names:?}"))),
    };
    let mut times = Vec::new();
    let mut values = Vec::new();
    for (line, record) in reader.records().enumerate() {
        let record = record.map_err(|e| bad(e.to_string()))?;
        let field = |i: usize| -> Result<f64> {
            record
                .get(i)
                .ok_or_else(|| bad(format!("row {}: missing field", line + 1)))?
                .parse::<f64>()
                .map_err(|e| bad(format!("row {}: {e}", line + 1)))
        };
        times.push(field(0)?);
        values.push(field(1)?);
    }
    let parsed = if counts {
        ObservedTrace::counts(times, values, scale)
    } else {
        ObservedTrace::power(times, values)
    };
    parsed.map_err(|e| match e {
        Error::Domain(m) => bad(m),
        other => other,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CheckLine {
    pub name: String,
    pub quantity: String,
    pub computed: f64,
    pub expected: Option<f64>,
    pub relative_error: Option<f64>,
    pub pass: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CheckReport {
    pub tool_version: String,
    pub config_sha256: String,
    pub tolerance: f64,
    pub checks: Vec<CheckLine>,
    pub all_pass: bool,
}

/// Recomputes the derived quantities of every `[[check]]` entry.
pub fn check_params(cfg: &RunConfig) -> Result<CheckReport> {
    if cfg.checks.is_empty() {
        return Err(Error::config("check", "no parameter sets listed"));
    }
    let gamma = cfg.gamma.ok_or_else(|| Error::config("atom.gamma", "missing"))?;
    let mut lines = Vec::new();
    for c in &cfg.checks {
        check_entry(c, gamma, &mut lines)?;
    }
    let all_pass = lines.iter().all(|l| l.pass);
    Ok(CheckReport {
        tool_version: VERSION.into(),
        config_sha256: cfg.sha256.clone(),
        tolerance: CHECK_TOLERANCE,
        checks: lines,
        all_pass,
    })
}

fn check_entry(c: &CheckEntry, gamma: f64, lines: &mut Vec<CheckLine>) -> Result<()> {
    let key = |field: &str| format!("check.{}.{field}", c.name);
    let mut add = |quantity: &str, computed: f64, expected: Option<f64>| {
        let relative_error = expected.map(|e| ((computed - e) / e).abs());
        lines.push(CheckLine {
            name: c.name.clone(),
            quantity: quantity.into(),
            computed,
            expected,
            relative_error,
            pass: relative_error.is_none_or(|r| r <= CHECK_TOLERANCE),
        });
    };
    let domain = |field: &str| {
        let k = key(field);
        move |e: Error| match e {
            Error::Domain(m) => Error::config(k.clone(), m),
            other => other,
        }
    };
    let ring = RingResonator::critically_coupled(c.t_rt, hz(c.kappa)).map_err(domain("kappa"))?;
    add("nu_fsr", ring.nu_fsr(), Some(c.nu_fsr));
    add("t_rt_from_nu_fsr", 1.0 / c.nu_fsr, Some(c.t_rt));
    if let (Some(l), Some(n)) = (c.l_cav, c.n_group) {
        add("t_rt_from_geometry", n * l / SPEED_OF_LIGHT, Some(c.t_rt));
    }
    let g = hz(c.g);
    add("od_from_g", derive_od_from_coupling(g, c.t_rt, gamma).map_err(domain("g"))?, Some(c.od));
    add(
        "g_from_od_hz",
        to_hz(derive_coupling_from_od(c.od, c.t_rt, gamma).map_err(domain("od"))?),
        Some(c.g),
    );
    add(
        "C",
        derive_cooperativity(g, ring.kappa(), gamma).map_err(domain("g"))?,
        Some(c.cooperativity),
    );
    add("tau_at", 0.5 / gamma, c.tau_at);
    add("r", ring.coupler_through(), c.r);
    add("a_loss", ring.roundtrip_loss(), c.a_loss);
    Ok(())
}

#[derive(Debug, Serialize)]
struct FitReport<'a> {
    tool_version: &'a str,
    config_sha256: &'a str,
    od_min: f64,
    od_max: f64,
    #[serde(flatten)]
    result: FitResult,
}

fn write_output(dir: &Path, name: &str, bytes: &[u8]) -> Result<PathBuf> {
    fs::create_dir_all(dir)?;
    let path = dir.join(name);
    fs::write(&path, bytes)?;
    Ok(path)
}

fn with_extension(name: &str, format: Format) -> String {
    let ext = match format {
        Format::Csv => "csv",
        Format::Json => "json",
    };
    if Path::new(name).extension().is_some() {
        Path::new(name).with_extension(ext).to_string_lossy().into_owned()
    } else {
        format!("{name}.{ext}")
    }
}

fn emit(table: &Table, cfg: &RunConfig, common: &Common, name: &str) -> Result<PathBuf> {
    let bytes = match common.format {
        Format::Csv => table.to_csv(&cfg.sha256)?,
        Format::Json => table.to_json(&cfg.sha256)?,
    };
    write_output(&common.out, &with_extension(name, common.format), &bytes)
}

fn execute(command: &Command) -> Result<i32> {
    let load = |c: &Common| RunConfig::from_path(&c.config, c.seed);
    match command {
        Command::Spectrum(common) => {
            let cfg = load(common)?;
            let table = spectrum_table(&cfg)?;
            let path = emit(&table, &cfg, common, &cfg.output.spectrum)?;
            println!("wrote {} ({} rows)", path.display(), table.rows());
        }
        Command::Timetrace(common) => {
            let cfg = load(common)?;
            let table = timetrace_table(&cfg)?;
            let path = emit(&table, &cfg, common, &cfg.output.timetrace)?;
            println!("wrote {} ({} rows)", path.display(), table.rows());
        }
        Command::CheckParams(common) => {
            let cfg = load(common)?;
            let report = check_params(&cfg)?;
            for l in &report.checks {
                let expected = l.expected.map_or("-".to_string(), |e| format!("{e:.6e}"));
                println!(
                    "{:<8} {:<20} {:>14.6e} {:>14} {}",
                    l.name,
                    l.quantity,
                    l.computed,
                    expected,
                    if l.pass { "PASS" } else { "FAIL" }
                );
            }
            let mut bytes = serde_json::to_vec_pretty(&report).map_err(|e| Error::domain(e.to_string()))?;
            bytes.push(b'\n');
            let path = write_output(&common.out, &cfg.output.check_report, &bytes)?;
            println!("wrote {}", path.display());
            if !report.all_pass {
                return Ok(EXIT_CHECK_FAILED);
            }
        }
        Command::SynthNoise { common, counts } => {
            let cfg = load(common)?;
            let (table, _) = noise_table(&cfg, *counts)?;
            let path = emit(&table, &cfg, common, &cfg.output.noise)?;
            println!("wrote {} ({} bins)", path.display(), table.rows());
        }
        Command::Fit { common, data } => {
            let cfg = load(common)?;
            let params = cfg.system()?;
            let observed = read_observed(data)?;
            let dt = cfg
                .trace
                .and_then(|t| t.dt)
                .unwrap_or_else(|| crate::ci::default_dt(params, &cfg.pulse));
            let result = fit_od(&observed, params, &cfg.pulse, dt, cfg.fit_bounds)?;
            let report = FitReport {
                tool_version: VERSION,
                config_sha256: &cfg.sha256,
                od_min: cfg.fit_bounds.0,
                od_max: cfg.fit_bounds.1,
                result,
            };
            let mut bytes = serde_json::to_vec_pretty(&report).map_err(|e| Error::domain(e.to_string()))?;
            bytes.push(b'\n');
            let path = write_output(&common.out, &cfg.output.fit, &bytes)?;
            println!(
                "od_hat = {:.6} residual = {:.3e} iterations = {} converged = {}",
                result.od_hat, result.residual, result.iterations, result.converged
            );
            println!("wrote {}", path.display());
            if !result.converged {
                return Ok(EXIT_NOT_CONVERGED);
            }
        }
    }
    Ok(EXIT_OK)
}

/// Exit code for an error.
pub fn exit_code(err: &Error) -> i32 {
    match err {
        Error::Io(_) => EXIT_IO,
        Error::Config { .. } | Error::Domain(_) => EXIT_CONFIG,
    }
}

/// Parses arguments, runs the command and returns the process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_CONFIG } else { EXIT_OK };
        }
    };
    match execute(&cli.command) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            exit_code(&e)
        }
    }
}
