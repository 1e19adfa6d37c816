use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use dyngma::autodiff::ParameterVector;
use dyngma::experiment::{self, ExperimentConfig, StageError};
use dyngma::Error;

#[derive(Parser)]
#[command(
    name = "dyngma",
    version,
    about = "Learn SDE drift and diffusion from trajectories"
)]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Args)]
struct Common {
    #[arg(long)]
    config: PathBuf,
    /// Overrides `run.seed`.
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    out: PathBuf,
    /// Validate the config and exit.
    #[arg(long)]
    dry_run: bool,
}

#[derive(Subcommand)]
enum Cmd {
    /// Simulate the training dataset.
    Generate(Common),
    /// Generate, train and evaluate.
    Train(Common),
    /// Metrics of `<out>/checkpoint.bin`.
    Evaluate(Common),
    /// 1-d transition-density grid.
    Density(Common),
    /// Invariant histogram, free energies and potential.
    Invariant(Common),
    /// Gillespie SIR trajectories.
    Ssa(Common),
}

enum Failure {
    Config(String),
    Runtime(String),
}

impl From<StageError> for Failure {
    fn from(e: StageError) -> Self {
        match e.source {
            Error::Config(_) => Failure::Config(e.to_string()),
            _ => Failure::Runtime(e.to_string()),
        }
    }
}

fn configure_threads() -> Result<(), Failure> {
    let Ok(v) = std::env::var("DGMA_THREADS") else {
        return Ok(());
    };
    let n: usize = v.parse().ok().filter(|&n| n > 0).ok_or_else(|| {
        Failure::Config(format!(
            "DGMA_THREADS must be a positive integer, got {v:?}"
        ))
    })?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .map_err(|e| Failure::Runtime(e.to_string()))
}

fn load(c: &Common) -> Result<ExperimentConfig, Failure> {
    let cfg = ExperimentConfig::load(&c.config).map_err(|e| Failure::Config(e.to_string()))?;
    Ok(match c.seed {
        Some(s) => cfg.with_seed(s),
        None => cfg,
    })
}

fn checkpoint(out: &Path) -> Result<ParameterVector, Failure> {
    ParameterVector::load(&out.join("checkpoint.bin"))
        .map_err(|e| Failure::Runtime(format!("evaluate failed: {e}")))
}

fn run(cmd: Cmd) -> Result<(), Failure> {
    configure_threads()?;
    let (c, which) = match &cmd {
        Cmd::Generate(c) => (c, "generate"),
        Cmd::Train(c) => (c, "train"),
        Cmd::Evaluate(c) => (c, "evaluate"),
        Cmd::Density(c) => (c, "density"),
        Cmd::Invariant(c) => (c, "invariant"),
        Cmd::Ssa(c) => (c, "ssa"),
    };
    let cfg = load(c)?;
    let needs: &[(&str, bool)] = match cmd {
        Cmd::Generate(_) => &[("data", cfg.data.is_some())],
        Cmd::Train(_) => &[("train", cfg.train.is_some())],
        Cmd::Evaluate(_) => &[("model", cfg.model.is_some())],
        Cmd::Density(_) => &[("density", cfg.density.is_some())],
        Cmd::Invariant(_) => &[("invariant", cfg.invariant.is_some())],
        Cmd::Ssa(_) => &[("ssa", cfg.ssa.is_some())],
    };
    for (section, present) in needs {
        if !present {
            return Err(Failure::Config(format!(
                "{which} needs a [{section}] section"
            )));
        }
    }
    if c.dry_run {
        println!(
            "config ok: {which} on {} (seed {})",
            cfg.benchmark.name(),
            cfg.run.seed
        );
        return Ok(());
    }
    let out = c.out.as_path();
    match cmd {
        Cmd::Generate(_) => {
            let d = experiment::run_generate(&cfg, out)?;
            println!(
                "{} trajectories, {} states",
                d.trajectories.len(),
                d.n_points()
            );
        }
        Cmd::Train(_) => {
            let r = experiment::run_experiment(&cfg, out)?;
            println!(
                "epochs {} final loss {:.6e} e_f {:.4e} e_sigma {:.4e}",
                r.epochs, r.final_loss, r.metrics.e_f, r.metrics.e_sigma
            );
        }
        Cmd::Evaluate(_) => {
            let m = experiment::run_evaluate(&cfg, &checkpoint(out)?, out)?;
            println!("e_f {:.4e} e_sigma {:.4e}", m.e_f, m.e_sigma);
        }
        Cmd::Density(_) => {
            let r = experiment::run_density(&cfg, out)?;
            match r.e_p {
                Some((dy, em)) => println!(
                    "{} grid points; e_P dyngma {dy:.4e} em {em:.4e}",
                    r.rows.len()
                ),
                None => println!("{} grid points", r.rows.len()),
            }
        }
        Cmd::Invariant(_) => {
            let r = experiment::run_invariant(&cfg, out)?;
            if let Some(h) = &r.histogram {
                println!("joint histogram with {} cells", h.masses.len());
            }
            if let Some(v) = r.e_v {
                println!("e_V {v:.4e}");
            }
            if let Some(p) = r.e_p {
                println!("e_P {p:.4e}");
            }
        }
        Cmd::Ssa(_) => {
            let d = experiment::run_ssa(&cfg, out)?;
            println!("{} paths, {} records", d.trajectories.len(), d.n_points());
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli.cmd) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Config(m)) => {
            eprintln!("config error: {m}");
            ExitCode::from(2)
        }
        Err(Failure::Runtime(m)) => {
            eprintln!("error: {m}");
            ExitCode::from(1)
        }
    }
}
