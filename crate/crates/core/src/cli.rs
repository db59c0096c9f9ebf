//! Command-line front end: scenario resolution, artifact writing and exit codes.

use std::ffi::OsString;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

use crate::analysis::{scan_filter_width, scan_od, BeatSpectrum, FILTER_CELL_OD_CAP};
use crate::biphoton::CorrelationTrace;
use crate::error::{Error, Result};
use crate::filter::FilterTransmission;
use crate::io::{fmt_f64, write_json};
use crate::pipeline::{simulate, TraceReport};
use crate::scheme::{
    builtin, builtin_scenarios, validate_scenario, ScanKind, Scenario, FORMAT_VERSION,
};

pub const THREADS_ENV: &str = "BIPHOTON_SIM_THREADS";

pub const EXIT_OK: i32 = 0;
pub const EXIT_FAILURE: i32 = 1;
pub const EXIT_UNKNOWN_SCENARIO: i32 = 2;
pub const EXIT_INVALID_CONFIG: i32 = 3;
pub const EXIT_NUMERIC: i32 = 4;

#[derive(Debug, Parser)]
#[command(
    name = "biphoton-sim",
    version,
    about = "Photon-pair correlation simulator for warm-vapor four-wave mixing"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run the full pipeline for one scenario and write its artifacts.
    Run {
        /// Builtin scenario name or path to a TOML scenario file.
        scenario: String,
        #[command(flatten)]
        opts: CommonOpts,
    },
    /// Sweep one parameter of a scenario.
    Scan {
        #[arg(value_enum)]
        kind: ScanArg,
        scenario: String,
        /// Comma-separated values; defaults to the scenario's own scan.
        values: Option<String>,
        #[command(flatten)]
        opts: CommonOpts,
    },
    /// Check a scenario and report every violated constraint.
    Validate {
        scenario: String,
        #[arg(long = "set", value_name = "KEY=VALUE")]
        set: Vec<String>,
    },
    /// Print the builtin scenario names.
    ListScenarios,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ScanArg {
    Od,
    #[value(name = "filter_width", alias = "filter-width")]
    FilterWidth,
}

impl From<ScanArg> for ScanKind {
    fn from(a: ScanArg) -> Self {
        match a {
            ScanArg::Od => ScanKind::Od,
            ScanArg::FilterWidth => ScanKind::FilterWidth,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    #[default]
    Csv,
    Json,
}

#[derive(Debug, Clone, Args)]
pub struct CommonOpts {
    #[arg(long, default_value = "results")]
    pub out: PathBuf,
    /// Dotted-path override, e.g. `motional.v_t_mps=0`. Repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    pub set: Vec<String>,
    #[arg(long)]
    pub grid_points: Option<usize>,
    #[arg(long)]
    pub span_mhz: Option<f64>,
    #[arg(long, value_enum, default_value_t = Format::Csv)]
    pub format: Format,
}

impl CommonOpts {
    /// `--set` entries followed by the grid flags, in application order.
    pub fn overrides(&self) -> Vec<String> {
        let mut all = self.set.clone();
        if let Some(n) = self.grid_points {
            all.push(format!("grid.n_points={n}"));
        }
        if let Some(s) = self.span_mhz {
            all.push(format!("grid.span_mhz={}", fmt_f64(s)));
        }
        all
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct RunManifest {
    pub format_version: u32,
    pub tool_version: String,
    pub command: String,
    pub scenario: Scenario,
    pub overrides: Vec<String>,
    pub artifacts: Vec<PathBuf>,
    pub wall_time_s: f64,
}

pub fn exit_code(err: &Error) -> i32 {
    match err {
        Error::UnknownScenario { .. } => EXIT_UNKNOWN_SCENARIO,
        Error::InvalidScenario(_)
        | Error::Config(_)
        | Error::Parse(_)
        | Error::InvalidDrivenSystem(_) => EXIT_INVALID_CONFIG,
        Error::Domain(_)
        | Error::SingularSteadyState { .. }
        | Error::GridMismatch { .. }
        | Error::WindowTooShort { .. }
        | Error::DegenerateWindow(_) => EXIT_NUMERIC,
        Error::Io(_) | Error::Json(_) => EXIT_FAILURE,
    }
}

/// Builtin name first, then a TOML file path.
pub fn resolve_scenario(name_or_path: &str, overrides: &[String]) -> Result<Scenario> {
    let base = match builtin(name_or_path) {
        Ok(s) => s,
        Err(unknown) => {
            let path = Path::new(name_or_path);
            if !path.is_file() {
                return Err(unknown);
            }
            let text = std::fs::read_to_string(path)?;
            Scenario::from_config_str(&text)
                .map_err(|e| Error::Config(format!("{}: {e}", path.display())))?
        }
    };
    base.with_overrides(overrides)
}

/// Reads the thread cap; 0 or unset means one thread per core.
pub fn thread_cap() -> Result<usize> {
    match std::env::var(THREADS_ENV) {
        Err(_) => Ok(0),
        Ok(v) if v.trim().is_empty() => Ok(0),
        Ok(v) => v.trim().parse::<usize>().map_err(|_| {
            Error::Config(format!(
                "{THREADS_ENV} must be a nonnegative integer, got `{v}`"
            ))
        }),
    }
}

fn init_thread_pool() -> Result<()> {
    let n = thread_cap()?;
    // A pool that already exists (library use, tests) is left alone.
    let _ = rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global();
    Ok(())
}

/// Parses `args` (including the program name), runs the command and
/// returns the process exit code. Errors go to stderr.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return match e.kind() {
                clap::error::ErrorKind::DisplayHelp | clap::error::ErrorKind::DisplayVersion => {
                    EXIT_OK
                }
                _ => EXIT_INVALID_CONFIG,
            };
        }
    };
    match execute(&cli) {
        Ok(()) => EXIT_OK,
        Err(e) => {
            report_error(&e);
            exit_code(&e)
        }
    }
}

fn report_error(e: &Error) {
    match e {
        Error::UnknownScenario { name, available } => {
            eprintln!("error: unknown scenario `{name}`");
            eprintln!("available scenarios:");
            for n in available {
                eprintln!("  {n}");
            }
        }
        Error::InvalidScenario(violations) => {
            eprintln!("error: invalid scenario");
            for v in violations {
                eprintln!("  {v}");
            }
        }
        other => eprintln!("error: {other}"),
    }
}

pub fn execute(cli: &Cli) -> Result<()> {
    init_thread_pool()?;
    match &cli.command {
        Command::Run { scenario, opts } => {
            let m = run(scenario, opts)?;
            println!("{}", opts.out.join("manifest.json").display());
            eprintln!(
                "wrote {} artifacts in {:.2} s",
                m.artifacts.len(),
                m.wall_time_s
            );
        }
        Command::Scan {
            kind,
            scenario,
            values,
            opts,
        } => {
            let values = match values {
                Some(v) => Some(parse_values(v)?),
                None => None,
            };
            let m = scan((*kind).into(), scenario, values, opts)?;
            println!("{}", opts.out.join("manifest.json").display());
            eprintln!(
                "wrote {} artifacts in {:.2} s",
                m.artifacts.len(),
                m.wall_time_s
            );
        }
        Command::Validate { scenario, set } => {
            let s = resolve_scenario(scenario, set)?;
            let violations = validate_scenario(&s);
            if !violations.is_empty() {
                return Err(Error::InvalidScenario(violations));
            }
            println!("{}: ok", s.name);
        }
        Command::ListScenarios => {
            for s in builtin_scenarios() {
                println!("{}", s.name);
            }
        }
    }
    Ok(())
}

pub fn parse_values(text: &str) -> Result<Vec<f64>> {
    text.split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|s| {
            s.parse::<f64>()
                .map_err(|_| Error::Config(format!("scan value `{s}` is not a number")))
        })
        .collect()
}

fn scenario_header(s: &Scenario) -> Result<String> {
    s.to_config_string()
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    Ok(BufWriter::new(File::create(path)?))
}

fn write_trace(path: &Path, trace: &CorrelationTrace, s: &Scenario, format: Format) -> Result<()> {
    match format {
        Format::Csv => {
            let mut w = create(path)?;
            trace.write_csv(&mut w, &scenario_header(s)?)?;
            w.flush()?;
        }
        Format::Json => {
            #[derive(Serialize)]
            struct J<'a> {
                scenario: &'a Scenario,
                bin_ns: f64,
                delay_ns: &'a [f64],
                value: &'a [f64],
            }
            write_json(
                path,
                &J {
                    scenario: s,
                    bin_ns: trace.bin_ns,
                    delay_ns: &trace.delays_ns,
                    value: &trace.values,
                },
            )?;
        }
    }
    Ok(())
}

fn write_transmission(
    path: &Path,
    t: &FilterTransmission,
    s: &Scenario,
    format: Format,
) -> Result<()> {
    match format {
        Format::Csv => {
            let mut w = create(path)?;
            for line in scenario_header(s)?.lines() {
                writeln!(w, "# {line}")?;
            }
            t.write_csv(&mut w)?;
            w.flush()?;
        }
        Format::Json => {
            #[derive(Serialize)]
            struct J<'a> {
                scenario: &'a Scenario,
                detuning_mhz: Vec<f64>,
                re_t: Vec<f64>,
                im_t: Vec<f64>,
                intensity_transmission: Vec<f64>,
            }
            write_json(
                path,
                &J {
                    scenario: s,
                    detuning_mhz: t.grid.detunings(),
                    re_t: t.t_values.iter().map(|z| z.re).collect(),
                    im_t: t.t_values.iter().map(|z| z.im).collect(),
                    intensity_transmission: t.intensity(),
                },
            )?;
        }
    }
    Ok(())
}

fn write_spectrum(path: &Path, sp: &BeatSpectrum, s: &Scenario, format: Format) -> Result<()> {
    match format {
        Format::Csv => {
            let mut w = create(path)?;
            for line in scenario_header(s)?.lines() {
                writeln!(w, "# {line}")?;
            }
            writeln!(w, "# peak_freq_mhz = {}", fmt_f64(sp.peak_freq_mhz))?;
            writeln!(w, "freq_mhz,power")?;
            for (f, p) in sp.freqs_mhz.iter().zip(&sp.power) {
                writeln!(w, "{},{}", fmt_f64(*f), fmt_f64(*p))?;
            }
            w.flush()?;
        }
        Format::Json => {
            #[derive(Serialize)]
            struct J<'a> {
                scenario: &'a Scenario,
                spectrum: &'a BeatSpectrum,
            }
            write_json(
                path,
                &J {
                    scenario: s,
                    spectrum: sp,
                },
            )?;
        }
    }
    Ok(())
}

fn ext(format: Format) -> &'static str {
    match format {
        Format::Csv => "csv",
        Format::Json => "json",
    }
}

fn finish(
    command: &str,
    scenario: Scenario,
    opts: &CommonOpts,
    artifacts: Vec<PathBuf>,
    start: Instant,
) -> Result<RunManifest> {
    let manifest = RunManifest {
        format_version: FORMAT_VERSION,
        tool_version: env!("CARGO_PKG_VERSION").to_string(),
        command: command.to_string(),
        scenario,
        overrides: opts.overrides(),
        artifacts,
        wall_time_s: start.elapsed().as_secs_f64(),
    };
    write_json(&opts.out.join("manifest.json"), &manifest)?;
    Ok(manifest)
}

/// Full pipeline: trace, transmission, beat spectrum and fit report.
pub fn run(scenario: &str, opts: &CommonOpts) -> Result<RunManifest> {
    let start = Instant::now();
    let s = resolve_scenario(scenario, &opts.overrides())?;
    s.validate()?;
    let sim = simulate(&s)?;
    let spectrum = sim.beat_spectrum()?;
    let report = sim.report();

    std::fs::create_dir_all(&opts.out)?;
    let e = ext(opts.format);
    let trace_path = opts.out.join(format!("trace.{e}"));
    let transmission_path = opts.out.join(format!("transmission.{e}"));
    let spectrum_path = opts.out.join(format!("spectrum.{e}"));
    let fit_path = opts.out.join("fit.json");

    write_trace(&trace_path, &sim.trace, &s, opts.format)?;
    write_transmission(&transmission_path, &sim.transmission, &s, opts.format)?;
    write_spectrum(&spectrum_path, &spectrum, &s, opts.format)?;

    #[derive(Serialize)]
    struct FitFile<'a> {
        scenario: &'a Scenario,
        tau_ns: Option<f64>,
        #[serde(flatten)]
        report: &'a TraceReport,
    }
    let tau_ns = report.fit.as_ref().map(|f| f.tau_ns);
    write_json(
        &fit_path,
        &FitFile {
            scenario: &s,
            tau_ns,
            report: &report,
        },
    )?;

    finish(
        "run",
        s,
        opts,
        vec![trace_path, transmission_path, spectrum_path, fit_path],
        start,
    )
}

/// Parameter sweep. `values = None` falls back to the scenario's own scan.
pub fn scan(
    kind: ScanKind,
    scenario: &str,
    values: Option<Vec<f64>>,
    opts: &CommonOpts,
) -> Result<RunManifest> {
    let start = Instant::now();
    let s = resolve_scenario(scenario, &opts.overrides())?;
    s.validate()?;
    let values = match values {
        Some(v) => v,
        None => match &s.scan {
            Some(spec) if spec.kind == kind => spec.values.clone(),
            _ => Vec::new(),
        },
    };
    if values.is_empty() {
        return Err(Error::Config("scan needs at least one value".into()));
    }

    let (label, metric, notes, traces): (
        &str,
        &str,
        Vec<String>,
        Vec<(f64, f64, CorrelationTrace)>,
    ) = match kind {
        ScanKind::Od => {
            let pts = scan_od(&s, &values)?;
            let rows = pts
                .into_iter()
                .map(|p| (p.od, p.equivalent_width_ns, p.trace))
                .collect();
            ("od", "equivalent_width_ns", Vec::new(), rows)
        }
        ScanKind::FilterWidth => {
            let pts = scan_filter_width(&s, &values)?;
            let flagged: Vec<String> = pts
                .iter()
                .filter(|p| !p.reachable)
                .map(|p| fmt_f64(p.width_mhz))
                .collect();
            let mut notes = Vec::new();
            if !flagged.is_empty() {
                notes.push(format!(
                    "unreachable widths (filter-cell od capped at {}): {}",
                    fmt_f64(FILTER_CELL_OD_CAP),
                    flagged.join(" ")
                ));
            }
            let rows = pts
                .into_iter()
                .map(|p| (p.width_mhz, p.zero_delay, p.trace))
                .collect();
            ("filter_width_mhz", "zero_delay_coincidences", notes, rows)
        }
    };

    std::fs::create_dir_all(&opts.out)?;
    let e = ext(opts.format);
    let summary_path = opts.out.join(format!("summary.{e}"));
    match opts.format {
        Format::Csv => {
            let mut w = create(&summary_path)?;
            for line in scenario_header(&s)?.lines() {
                writeln!(w, "# {line}")?;
            }
            writeln!(w, "# value = {label}, metric = {metric}")?;
            for n in &notes {
                writeln!(w, "# {n}")?;
            }
            writeln!(w, "value,metric")?;
            for (v, m, _) in &traces {
                writeln!(w, "{},{}", fmt_f64(*v), fmt_f64(*m))?;
            }
            w.flush()?;
        }
        Format::Json => {
            #[derive(Serialize)]
            struct J<'a> {
                scenario: &'a Scenario,
                value_name: &'a str,
                metric_name: &'a str,
                notes: &'a [String],
                value: Vec<f64>,
                metric: Vec<f64>,
            }
            write_json(
                &summary_path,
                &J {
                    scenario: &s,
                    value_name: label,
                    metric_name: metric,
                    notes: &notes,
                    value: traces.iter().map(|r| r.0).collect(),
                    metric: traces.iter().map(|r| r.1).collect(),
                },
            )?;
        }
    }

    let mut artifacts = vec![summary_path];
    for (i, (v, _, trace)) in traces.iter().enumerate() {
        let path = opts.out.join(format!("trace_{i:03}.{e}"));
        let mut point = s.clone();
        point.scan = None;
        point.name = format!("{}[{label}={}]", s.name, fmt_f64(*v));
        write_trace(&path, trace, &point, opts.format)?;
        artifacts.push(path);
    }
    let command = match kind {
        ScanKind::Od => "scan od",
        ScanKind::FilterWidth => "scan filter_width",
    };
    finish(command, s, opts, artifacts, start)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scheme::builtin_names;

    #[test]
    fn values_parse_and_reject_garbage() {
        assert_eq!(parse_values("0.1, 1,10").unwrap(), vec![0.1, 1.0, 10.0]);
        assert!(parse_values("").unwrap().is_empty());
        assert!(parse_values("1,x").is_err());
    }

    #[test]
    fn exit_codes_by_error_kind() {
        let unknown = builtin("nope").unwrap_err();
        assert_eq!(exit_code(&unknown), EXIT_UNKNOWN_SCENARIO);
        assert_eq!(exit_code(&Error::Config("x".into())), EXIT_INVALID_CONFIG);
        assert_eq!(
            exit_code(&Error::WindowTooShort {
                bins: 1,
                required: 16
            }),
            EXIT_NUMERIC
        );
    }

    #[test]
    fn grid_flags_become_overrides() {
        let opts = CommonOpts {
            out: "x".into(),
            set: vec!["motional.v_t_mps=0".into()],
            grid_points: Some(1 << 15),
            span_mhz: Some(8192.0),
            format: Format::Csv,
        };
        assert_eq!(
            opts.overrides(),
            vec![
                "motional.v_t_mps=0",
                "grid.n_points=32768",
                "grid.span_mhz=8192.0"
            ]
        );
        let s = resolve_scenario("off_resonant", &opts.overrides()).unwrap();
        assert_eq!(s.grid.n_points, 1 << 15);
        assert_eq!(s.motional.v_t_mps, 0.0);
    }

    #[test]
    fn names_listed() {
        assert_eq!(builtin_names().len(), 5);
    }
}
