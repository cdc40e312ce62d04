//! `fockcage` command-line front end.
//!
//! Exit codes: 0 success, 2 invalid input or output location, 3 numerical
//! failure.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use fockcage::error::Error;
use fockcage::output::{format_g9, write_atomic, write_bundle, OutputFormat, OutputSpec};
use fockcage::scenarios::{run_scenario_in, sweep, Registry, ScenarioDocument};

#[derive(Parser, Debug)]
#[command(name = "fockcage", version, about = "Fock-state lattice caging simulator")]
struct Cli {
    /// Load the registry from a directory of scenario files instead of the
    /// built-in set.
    #[arg(long, global = true, value_name = "DIR")]
    registry_dir: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// List registered scenarios.
    List,
    /// Type-check a scenario without running it.
    Validate(Target),
    /// Run one scenario and write its time series and metrics.
    Run {
        #[command(flatten)]
        target: Target,
        #[command(flatten)]
        output: OutputArgs,
        /// Output file; defaults to `<scenario>.<format>`.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run a scenario once per axis value.
    Sweep {
        #[command(flatten)]
        target: Target,
        #[command(flatten)]
        output: OutputArgs,
        /// Dotted path of the swept field, e.g. `swap.ratio`.
        #[arg(long)]
        axis: String,
        /// `start:stop:count` (inclusive, either direction) or `a,b,c`.
        #[arg(long)]
        range: String,
        /// Output directory, created if missing.
        #[arg(long)]
        out: PathBuf,
        /// Worker threads.
        #[arg(long, default_value_t = 1)]
        jobs: usize,
    },
}

#[derive(Args, Debug)]
struct Target {
    /// Registered name or path to a scenario file.
    #[arg(long)]
    scenario: String,
    /// `key=value` with a dotted key; repeatable.
    #[arg(long = "override", value_name = "KEY=VALUE")]
    overrides: Vec<String>,
    /// Shorthand for `--override seed=N`.
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Args, Debug)]
struct OutputArgs {
    #[arg(long, default_value = "csv")]
    format: String,
    /// Also write complex amplitudes.
    #[arg(long)]
    amplitudes: bool,
}

fn exit_code(e: &Error) -> u8 {
    if e.is_numerical() {
        3
    } else {
        2
    }
}

fn load_registry(dir: Option<&Path>) -> Result<Registry, Error> {
    let Some(dir) = dir else {
        return Ok(Registry::builtin());
    };
    let io = |e| Error::io(dir.display().to_string(), e);
    let mut files: Vec<PathBuf> = std::fs::read_dir(dir)
        .map_err(io)?
        .map(|entry| entry.map(|e| e.path()).map_err(io))
        .collect::<Result<_, _>>()?;
    files.retain(|p| p.extension().is_some_and(|x| x == "toml"));
    files.sort();
    let mut reg = Registry::empty();
    for f in files {
        let text = std::fs::read_to_string(&f).map_err(|e| Error::io(f.display().to_string(), e))?;
        reg.register(&text)?;
    }
    Ok(reg)
}

fn resolve_target(reg: &Registry, target: &Target) -> Result<ScenarioDocument, Error> {
    let path = Path::new(&target.scenario);
    let doc = if path.extension().is_some_and(|x| x == "toml") || path.is_file() {
        ScenarioDocument::load(path)?
    } else {
        reg.document(&target.scenario)?
    };
    let mut overrides = target.overrides.clone();
    if let Some(seed) = target.seed {
        overrides.push(format!("seed={seed}"));
    }
    doc.with_overrides(&overrides)
}

/// Values from `start:stop:count` or a comma list, in input order.
fn parse_range(spec: &str) -> Result<Vec<f64>, Error> {
    let bad = |m: String| Error::invalid("range", m);
    let num = |s: &str| s.trim().parse::<f64>().map_err(|e| bad(format!("`{s}`: {e}")));
    if let [start, stop, count] = spec.split(':').collect::<Vec<_>>()[..] {
        let (a, b) = (num(start)?, num(stop)?);
        let n: usize = count.trim().parse().map_err(|e| bad(format!("count `{count}`: {e}")))?;
        return Ok(match n {
            0 => Vec::new(),
            1 => vec![a],
            n => (0..n).map(|k| a + (b - a) * k as f64 / (n - 1) as f64).collect(),
        });
    }
    if spec.contains(':') {
        return Err(bad(format!("`{spec}` is not start:stop:count")));
    }
    spec.split(',').filter(|s| !s.trim().is_empty()).map(num).collect()
}

fn cmd_list(reg: &Registry) -> String {
    let mut out = String::new();
    if reg.is_empty() {
        return out;
    }
    let w = reg.entries().iter().map(|e| e.name.len()).max().unwrap_or(0).max(4);
    let r = reg.entries().iter().map(|e| e.reproduces.len()).max().unwrap_or(0).max(10);
    writeln!(out, "{:w$}  {:r$}  DESCRIPTION", "NAME", "REPRODUCES").expect("string write");
    for e in reg.entries() {
        writeln!(out, "{:w$}  {:r$}  {}", e.name, e.reproduces, e.description).expect("string write");
    }
    out
}

fn cmd_validate(reg: &Registry, target: &Target) -> Result<String, Error> {
    let cfg = resolve_target(reg, target)?.config()?;
    Ok(format!("{}: ok (config hash {})\n", cfg.name, cfg.provenance_hash()))
}

fn cmd_run(reg: &Registry, target: &Target, output: &OutputArgs, out: Option<&Path>) -> Result<String, Error> {
    let format: OutputFormat = output.format.parse()?;
    let doc = resolve_target(reg, target)?;
    let cfg = doc.config()?;
    let bundle = run_scenario_in(&cfg, doc.base_dir())?;
    let path = out
        .map(Path::to_path_buf)
        .unwrap_or_else(|| PathBuf::from(format!("{}.{}", cfg.name, format.extension())));
    let spec = OutputSpec {
        format,
        path,
        include_amplitudes: output.amplitudes,
    };
    let (series, metrics) = write_bundle(&spec, &bundle)?;
    let mut msg = format!("{}: wrote {} and {}\n", cfg.name, series.display(), metrics.display());
    for (k, v) in &bundle.metrics {
        writeln!(msg, "  {k} = {}", format_g9(*v)).expect("string write");
    }
    Ok(msg)
}

fn cmd_sweep(
    reg: &Registry,
    target: &Target,
    output: &OutputArgs,
    axis: &str,
    range: &str,
    out: &Path,
    jobs: usize,
) -> Result<String, Error> {
    let format: OutputFormat = output.format.parse()?;
    let values = parse_range(range)?;
    let doc = resolve_target(reg, target)?;
    let cfg = doc.config()?;
    std::fs::create_dir_all(out).map_err(|e| Error::io(out.display().to_string(), e))?;
    let probe = out.join(".fockcage-write-check");
    write_atomic(&probe, b"").and_then(|_| std::fs::remove_file(&probe).map_err(|e| Error::io(probe.display().to_string(), e)))?;
    let bundles = sweep(&doc, axis, &values, jobs)?;
    let summary = cfg.metrics.summary.clone().unwrap_or_else(|| "dominant_peak".into());
    let mut index = format!("point,{axis},{summary},file\n");
    for (k, (value, bundle)) in values.iter().zip(&bundles).enumerate() {
        let file = format!("point_{k:03}.{}", format.extension());
        let spec = OutputSpec {
            format,
            path: out.join(&file),
            include_amplitudes: output.amplitudes,
        };
        write_bundle(&spec, bundle)?;
        let metric = bundle.metrics.get(&summary).map_or(String::new(), |v| format_g9(*v));
        writeln!(index, "{k},{},{metric},{file}", format_g9(*value)).expect("string write");
    }
    let index_path = out.join("index.csv");
    write_atomic(&index_path, index.as_bytes())?;
    Ok(format!(
        "{}: {} points, index at {}\n",
        cfg.name,
        bundles.len(),
        index_path.display()
    ))
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = load_registry(cli.registry_dir.as_deref()).and_then(|reg| match &cli.command {
        Command::List => Ok(cmd_list(&reg)),
        Command::Validate(target) => cmd_validate(&reg, target),
        Command::Run { target, output, out } => cmd_run(&reg, target, output, out.as_deref()),
        Command::Sweep {
            target,
            output,
            axis,
            range,
            out,
            jobs,
        } => cmd_sweep(&reg, target, output, axis, range, out, *jobs),
    });
    match result {
        Ok(text) => {
            print!("{text}");
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
