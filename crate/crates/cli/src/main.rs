use std::fs;
use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use log::info;

use pagecurve_core::acceptance::{summarize, Filter, Suite, CRITERIA};
use pagecurve_core::evolve::SweepAxis;
use pagecurve_core::experiment::{export_program, run_experiment, ExperimentConfig, Scale, Task};

#[derive(Parser)]
#[command(name = "pagecurve", version, about = "Entanglement dynamics of an evaporating Ising chain")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a preset or a config file and write CSVs plus a manifest.
    Run(RunArgs),
    /// Run the acceptance suite and print a pass/fail table.
    Verify {
        /// Comma-separated groups (oracle, dmrg, shape, determinism) or criterion numbers.
        #[arg(long)]
        only: Option<String>,
        /// Scratch directory for the desk-scale runs.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Write the gate program of a configuration.
    ExportCircuit {
        #[command(flatten)]
        common: Common,
        /// Trotter steps per evaporation interval (default T/τ).
        #[arg(long)]
        steps: Option<usize>,
        /// Output file; standard output when omitted.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Args)]
struct Common {
    /// One of the figure presets, e.g. fig3-page-curve.
    preset: Option<String>,
    /// Flat `key = value` config file, applied after the preset.
    #[arg(long)]
    config: Option<PathBuf>,
    /// desk (N_I=8, M_I=24) or paper (N_I=15, M_I=150).
    #[arg(long)]
    scale: Option<String>,
    /// Seed of the DMRG starting state.
    #[arg(long)]
    seed: Option<u64>,
    /// Boundary coupling; replaces the h values of an h sweep.
    #[arg(long)]
    h: Option<f64>,
}

#[derive(Args)]
struct RunArgs {
    #[command(flatten)]
    common: Common,
    #[arg(long)]
    out: Option<PathBuf>,
    /// Sweep points run concurrently.
    #[arg(long)]
    workers: Option<usize>,
}

fn resolve(common: &Common) -> Result<ExperimentConfig> {
    let scale = common.scale.as_deref().map(str::parse::<Scale>).transpose()?;
    let mut config = ExperimentConfig::default();
    match (&common.preset, &common.config) {
        (None, None) => bail!("give a preset or --config"),
        (Some(p), _) => config.apply_preset(p.parse()?, scale.unwrap_or(Scale::Paper)),
        (None, Some(_)) => {}
    }
    if let Some(path) = &common.config {
        let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        config.apply_text(&text).with_context(|| format!("in {}", path.display()))?;
    }
    if let (Some(s), None) = (scale, &common.preset) {
        config.apply_scale(s);
    }
    if let Some(seed) = common.seed {
        config.dmrg.seed = seed;
    }
    if let Some(h) = common.h {
        config.params.h = h;
        if let Task::Sweep(SweepAxis::BoundaryCoupling(values)) = &mut config.task {
            *values = vec![h];
        }
    }
    Ok(config)
}

fn run(args: RunArgs) -> Result<ExitCode> {
    let mut config = resolve(&args.common)?;
    if let Some(out) = args.out {
        config.out = out;
    }
    if let Some(w) = args.workers {
        config.workers = w;
    }
    let outcome = run_experiment(&config)?;
    for f in &outcome.files {
        println!("{}", f.display());
    }
    for note in &outcome.notes {
        println!("{note}");
    }
    for (label, trace) in &outcome.traces {
        if trace.metadata.low_confidence {
            println!("warning: {label} is low-confidence (discarded weight above 1e-2)");
        }
    }
    for (label, err) in &outcome.failures {
        eprintln!("failed: {label}: {err}");
    }
    Ok(if outcome.failures.is_empty() { ExitCode::SUCCESS } else { ExitCode::FAILURE })
}

fn verify(only: Option<String>, out: Option<PathBuf>) -> Result<ExitCode> {
    let filter: Filter = only.as_deref().map(str::parse).transpose()?.unwrap_or_default();
    let workdir = out.unwrap_or_else(|| std::env::temp_dir().join(format!("pagecurve-verify-{}", std::process::id())));
    fs::create_dir_all(&workdir)?;
    let suite = Suite::new(workdir);
    let mut outcomes = Vec::new();
    for c in CRITERIA.iter().filter(|c| filter.selects(c)) {
        info!("criterion {}: {}", c.id, c.name);
        let o = suite.run_one(*c);
        println!("{o}");
        outcomes.push(o);
    }
    let (ok, tally) = summarize(&outcomes);
    println!("{tally}");
    Ok(if ok { ExitCode::SUCCESS } else { ExitCode::FAILURE })
}

fn export(common: Common, steps: Option<usize>, out: Option<PathBuf>) -> Result<ExitCode> {
    let config = resolve(&common)?;
    let text = export_program(&config, steps)?;
    match out {
        Some(path) => fs::write(&path, text).with_context(|| format!("writing {}", path.display()))?,
        None => print!("{text}"),
    }
    Ok(ExitCode::SUCCESS)
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Run(args) => run(args),
        Command::Verify { only, out } => verify(only, out),
        Command::ExportCircuit { common, steps, out } => export(common, steps, out),
    };
    result.unwrap_or_else(|e| {
        eprintln!("error: {e:#}");
        ExitCode::FAILURE
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use pagecurve_core::experiment::Preset;

    fn common(preset: Option<&str>) -> Common {
        Common { preset: preset.map(String::from), config: None, scale: Some("desk".into()), seed: None, h: None }
    }

    #[test]
    fn h_flag_narrows_the_sweep() {
        let mut c = common(Some("fig4-h-sweep"));
        c.h = Some(0.0);
        let config = resolve(&c).unwrap();
        assert_eq!(config.task, Task::Sweep(SweepAxis::BoundaryCoupling(vec![0.0])));
        assert_eq!(config.params.n_init, 8);
    }

    #[test]
    fn needs_a_source() {
        assert!(resolve(&common(None)).is_err());
        assert!(resolve(&common(Some("fig99"))).is_err());
    }

    #[test]
    fn presets_parse() {
        for p in Preset::ALL {
            resolve(&common(Some(p.name()))).unwrap();
        }
    }
}
