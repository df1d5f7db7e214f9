//! `tiltsim`: fly the tiltrotor scenarios from the command line.

mod plot;

use anyhow::{anyhow, Context, Result};
use clap::{Args, Parser, Subcommand};
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;
use tiltrotor_core::scenario::ScenarioConfig;
use tiltrotor_core::sim::{self, ControllerKind, Metrics, SimConfig, SimOutput};
use tiltrotor_core::ConfigError;

#[derive(Parser)]
#[command(name = "tiltsim", version, about = "Closed-loop tiltrotor VTOL simulator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Fly one scenario and write the log, metrics and plots.
    Run {
        config: PathBuf,
        #[command(flatten)]
        opts: CommonOpts,
        /// Override the controller named in the file.
        #[arg(long)]
        controller: Option<ControllerKind>,
    },
    /// Fly a scenario with the MPC and with the baseline and compare them.
    Compare {
        config: PathBuf,
        #[command(flatten)]
        opts: CommonOpts,
    },
    /// Fly a scenario once per value of one configuration entry.
    Sweep {
        config: PathBuf,
        /// Dotted path of the entry, e.g. `scenario.radius` or `sim.velocity_hz`.
        #[arg(long)]
        param: String,
        /// Comma-separated values; each is read as a TOML value.
        #[arg(long, value_delimiter = ',', required = true)]
        values: Vec<String>,
        #[command(flatten)]
        opts: CommonOpts,
        #[arg(long)]
        controller: Option<ControllerKind>,
    },
}

#[derive(Args, Clone)]
struct CommonOpts {
    /// Output directory.
    #[arg(long, default_value = "out")]
    out: PathBuf,
    #[arg(long)]
    seed: Option<u64>,
    /// Write SVG plots (default).
    #[arg(long, overrides_with = "no_plot")]
    plot: bool,
    #[arg(long, overrides_with = "plot")]
    no_plot: bool,
    #[arg(long, short)]
    verbose: bool,
}

impl CommonOpts {
    fn plots(&self) -> bool {
        !self.no_plot
    }
}

/// Failure classes, each with its own exit status.
#[derive(Debug, thiserror::Error)]
enum CliError {
    #[error("{path}: {source}")]
    Config { path: String, source: ConfigError },
    #[error("{0}")]
    Fault(String),
    #[error(transparent)]
    Other(#[from] anyhow::Error),
}

impl CliError {
    fn exit_code(&self) -> u8 {
        match self {
            CliError::Other(_) => 1,
            CliError::Config { .. } => 2,
            CliError::Fault(_) => 3,
        }
    }
}

fn load(path: &Path) -> Result<(ScenarioConfig, SimConfig), CliError> {
    ScenarioConfig::load(path).map_err(|source| CliError::Config { path: path.display().to_string(), source })
}

fn apply_overrides(sim: &mut SimConfig, opts: &CommonOpts, controller: Option<ControllerKind>) {
    if let Some(seed) = opts.seed {
        sim.seed = seed;
    }
    if let Some(c) = controller {
        sim.controller = c;
    }
}

fn fly(scenario: &ScenarioConfig, sim: &SimConfig, verbose: bool) -> SimOutput {
    if verbose {
        eprintln!(
            "flying {} with {} for {} s ({} / {} / {} Hz)",
            scenario.name,
            sim.controller.as_str(),
            sim.duration,
            sim.plant_hz,
            sim.attitude_hz,
            sim.velocity_hz
        );
    }
    let start = Instant::now();
    let out = sim::run(scenario, sim);
    if verbose {
        eprintln!(
            "  {} steps in {:.2} s, {} fallback ticks",
            out.log.len(),
            start.elapsed().as_secs_f64(),
            out.fallback_ticks
        );
    }
    out
}

/// Writes log.csv, metrics.txt and optionally the plots into `dir`.
fn write_outputs(out: &SimOutput, dir: &Path, plots: bool, verbose: bool) -> Result<()> {
    fs::create_dir_all(dir).with_context(|| format!("cannot create {}", dir.display()))?;
    let csv = dir.join("log.csv");
    let file = fs::File::create(&csv).with_context(|| format!("cannot create {}", csv.display()))?;
    sim::write_csv(&out.log, file).with_context(|| format!("cannot write {}", csv.display()))?;
    let mut text = out.metrics.to_text();
    if let Some(fault) = &out.fault {
        let _ = writeln!(text, "fault = {fault}");
    }
    fs::write(dir.join("metrics.txt"), text).context("cannot write metrics.txt")?;
    if plots && !out.log.is_empty() {
        for p in plot::emit_plots(&out.log, dir)? {
            if verbose {
                eprintln!("  wrote {}", p.display());
            }
        }
    }
    Ok(())
}

fn check_fault(out: &SimOutput) -> Result<(), CliError> {
    match &out.fault {
        Some(f) => Err(CliError::Fault(format!("simulation aborted: {f}"))),
        None => Ok(()),
    }
}

fn cmd_run(config: &Path, opts: &CommonOpts, controller: Option<ControllerKind>) -> Result<(), CliError> {
    let (scenario, mut sim) = load(config)?;
    apply_overrides(&mut sim, opts, controller);
    let out = fly(&scenario, &sim, opts.verbose);
    write_outputs(&out, &opts.out, opts.plots(), opts.verbose)?;
    print!("{}", out.metrics.to_text());
    check_fault(&out)
}

fn fmt_opt(v: Option<f64>) -> String {
    match v {
        Some(x) if x.is_finite() => format!("{x:.3}"),
        Some(_) => "never".into(),
        None => "n/a".into(),
    }
}

/// Side-by-side table of the headline metrics.
fn comparison_table(cols: &[(&str, &Metrics)]) -> String {
    let rows: [(&str, &dyn Fn(&Metrics) -> String); 4] = [
        ("rmse_vx [m/s]", &|m| format!("{:.3}", m.rmse_v[0])),
        ("rmse_vz [m/s]", &|m| format!("{:.3}", m.rmse_v[2])),
        ("max_pitch [deg]", &|m| format!("{:.3}", m.max_abs_pitch.to_degrees())),
        ("settle_time [s]", &|m| fmt_opt(m.settle_time)),
    ];
    let mut s = format!("{:<18}", "metric");
    for (name, _) in cols {
        let _ = write!(s, "{name:>12}");
    }
    s.push('\n');
    for (label, f) in rows {
        let _ = write!(s, "{label:<18}");
        for (_, m) in cols {
            let _ = write!(s, "{:>12}", f(m));
        }
        s.push('\n');
    }
    s
}

fn cmd_compare(config: &Path, opts: &CommonOpts) -> Result<(), CliError> {
    let (scenario, mut sim) = load(config)?;
    apply_overrides(&mut sim, opts, None);
    let runs: Vec<(ControllerKind, SimOutput)> = std::thread::scope(|s| {
        let handles: Vec<_> = [ControllerKind::Mpc, ControllerKind::BaselinePid]
            .into_iter()
            .map(|c| {
                let cfg = SimConfig { controller: c, ..sim.clone() };
                let scenario = &scenario;
                s.spawn(move || (c, fly(scenario, &cfg, opts.verbose)))
            })
            .collect();
        handles.into_iter().map(|h| h.join().expect("simulation thread panicked")).collect()
    });
    for (c, out) in &runs {
        write_outputs(out, &opts.out.join(c.as_str()), opts.plots(), opts.verbose)?;
    }
    let cols: Vec<(&str, &Metrics)> = runs.iter().map(|(c, o)| (c.as_str(), &o.metrics)).collect();
    let table = comparison_table(&cols);
    fs::write(opts.out.join("compare.txt"), &table).context("cannot write compare.txt")?;
    if opts.plots() {
        let logs: Vec<(&str, &[_])> = runs.iter().map(|(c, o)| (c.as_str(), o.log.as_slice())).collect();
        plot::emit_overlay(&logs, &opts.out)?;
    }
    print!("{table}");
    // A baseline that loses control is a result, not an error; the MPC is not.
    check_fault(&runs[0].1)
}

/// Sets `path` (dotted) in a TOML table, creating intermediate tables.
fn set_path(root: &mut toml::Table, path: &str, value: toml::Value) -> Result<()> {
    let mut keys: Vec<&str> = path.split('.').collect();
    let last = keys.pop().filter(|k| !k.is_empty()).ok_or_else(|| anyhow!("empty parameter path"))?;
    let mut table = root;
    for k in keys {
        let entry = table.entry(k).or_insert_with(|| toml::Value::Table(toml::Table::new()));
        table = entry.as_table_mut().ok_or_else(|| anyhow!("'{k}' in '{path}' is not a table"))?;
    }
    table.insert(last.to_string(), value);
    Ok(())
}

fn parse_value(text: &str) -> toml::Value {
    let wrapped = format!("v = {text}");
    match wrapped.parse::<toml::Table>() {
        Ok(mut t) => t.remove("v").unwrap_or_else(|| toml::Value::String(text.into())),
        Err(_) => toml::Value::String(text.to_string()),
    }
}

/// Scenario with `param` set to `value`. Integers are retried as floats for
/// entries that expect them.
fn variant(
    base: &toml::Table,
    dir: Option<&Path>,
    param: &str,
    value: &str,
) -> Result<(ScenarioConfig, SimConfig), CliError> {
    let attempt = |v: toml::Value| -> Result<(ScenarioConfig, SimConfig), CliError> {
        let mut table = base.clone();
        set_path(&mut table, param, v)?;
        let text = toml::to_string(&table).map_err(anyhow::Error::from)?;
        ScenarioConfig::from_toml_str(&text, dir)
            .map_err(|source| CliError::Config { path: format!("{param} = {value}"), source })
    };
    let v = parse_value(value);
    match (attempt(v.clone()), v) {
        (Err(_), toml::Value::Integer(i)) => attempt(toml::Value::Float(i as f64)),
        (result, _) => result,
    }
}

fn cmd_sweep(
    config: &Path,
    param: &str,
    values: &[String],
    opts: &CommonOpts,
    controller: Option<ControllerKind>,
) -> Result<(), CliError> {
    let text = fs::read_to_string(config).map_err(|source| CliError::Config {
        path: config.display().to_string(),
        source: ConfigError::Io { path: config.display().to_string(), source },
    })?;
    let base: toml::Table = text.parse().map_err(|e: toml::de::Error| CliError::Config {
        path: config.display().to_string(),
        source: ConfigError::Parse(e),
    })?;
    let variants = values
        .iter()
        .map(|v| {
            let (scenario, mut sim) = variant(&base, config.parent(), param, v)?;
            apply_overrides(&mut sim, opts, controller);
            Ok((v.clone(), scenario, sim))
        })
        .collect::<Result<Vec<_>, CliError>>()?;

    // Runs share nothing, so they fly in parallel.
    let outputs: Vec<SimOutput> = std::thread::scope(|s| {
        let handles: Vec<_> = variants.iter().map(|(_, sc, sim)| s.spawn(move || fly(sc, sim, opts.verbose))).collect();
        handles.into_iter().map(|h| h.join().expect("simulation thread panicked")).collect()
    });

    let mut table = format!(
        "{:<16}{:>12}{:>12}{:>14}{:>12}  {}\n",
        param, "rmse_vx", "rmse_vz", "max_pitch_deg", "settle_s", "fault"
    );
    for ((value, _, _), out) in variants.iter().zip(&outputs) {
        let name: String =
            value.chars().map(|c| if c.is_ascii_alphanumeric() || c == '.' || c == '-' { c } else { '_' }).collect();
        write_outputs(out, &opts.out.join(format!("{param}={name}")), opts.plots(), opts.verbose)?;
        let m = &out.metrics;
        let _ = writeln!(
            table,
            "{:<16}{:>12.3}{:>12.3}{:>14.3}{:>12}  {}",
            value,
            m.rmse_v[0],
            m.rmse_v[2],
            m.max_abs_pitch.to_degrees(),
            fmt_opt(m.settle_time),
            out.fault.as_ref().map_or("none".to_string(), |f| f.to_string())
        );
    }
    fs::write(opts.out.join("sweep.txt"), &table).context("cannot write sweep.txt")?;
    print!("{table}");
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Run { config, opts, controller } => cmd_run(config, opts, *controller),
        Command::Compare { config, opts } => cmd_compare(config, opts),
        Command::Sweep { config, param, values, opts, controller } => {
            cmd_sweep(config, param, values, opts, *controller)
        }
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
