use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, ValueEnum};

use rotgpe::elements::ElementKind;
use rotgpe::harness::experiments::{
    run_accuracy, run_conservation, run_evolution, run_groundstate, ErrorColumn,
};
use rotgpe::harness::{Experiment, HarnessError, RunConfig};

#[derive(Debug, Clone, Copy, ValueEnum)]
enum ExperimentArg {
    Accuracy,
    Conserve,
    Groundstate,
    Evolve,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum ElementArg {
    Q1,
    Eq1rot,
}

/// Finite element simulator for the rotating Gross-Pitaevskii equation.
#[derive(Debug, Parser)]
#[command(name = "rotgpe", version)]
struct Cli {
    experiment: ExperimentArg,
    /// key=value configuration file
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output directory (created if missing)
    #[arg(long, default_value = ".")]
    out: PathBuf,
    /// Overrides `element` from the config file
    #[arg(long, value_enum)]
    element: Option<ElementArg>,
    /// Full-size vortex lattice: [-16,16]^2, 512^2 cells, Omega=0.99, beta=100, T=3
    #[arg(long)]
    paper_scale: bool,
    /// Number of meshes in the accuracy study
    #[arg(long)]
    levels: Option<usize>,
}

fn run(cli: Cli) -> Result<(), HarnessError> {
    let experiment = match cli.experiment {
        ExperimentArg::Accuracy => Experiment::Accuracy,
        ExperimentArg::Conserve => Experiment::Conserve,
        ExperimentArg::Groundstate => Experiment::GroundState,
        ExperimentArg::Evolve => Experiment::Evolve,
    };
    let mut cfg = match &cli.config {
        Some(path) => RunConfig::from_file(experiment, path)?,
        None => RunConfig::defaults(experiment),
    };
    if cli.paper_scale {
        cfg.apply_paper_scale();
    }
    if let Some(e) = cli.element {
        cfg.element = match e {
            ElementArg::Q1 => ElementKind::ConformingQ1,
            ElementArg::Eq1rot => ElementKind::NonconformingEQ1Rot,
        };
    }
    if let Some(levels) = cli.levels {
        cfg.levels = levels;
    }
    cfg.validate()?;
    std::fs::create_dir_all(&cli.out).map_err(|source| rotgpe::harness::FileError::Io {
        path: cli.out.clone(),
        source,
    })?;
    let out = Some(cli.out.as_path());

    match experiment {
        Experiment::Accuracy => {
            let study = run_accuracy(&cfg, out)?;
            let table = &study.max_over_steps;
            print!("{}", table.to_csv());
            for (name, col) in [
                ("l2", ErrorColumn::L2),
                ("h1", ErrorColumn::H1),
                ("superclose", ErrorColumn::Superclose),
                ("postproc", ErrorColumn::Postproc),
            ] {
                if let Some(s) = table.fitted_slope(col) {
                    println!("# fitted {name} slope {s:.4}");
                }
            }
        }
        Experiment::Conserve => {
            let summary = run_conservation(&cfg, out)?;
            println!("{}", summary.summary_line());
        }
        Experiment::GroundState => {
            let gs = run_groundstate(&cfg, out)?;
            println!(
                "energy={:.12e} steps={} converged={} residual={:.3e}",
                gs.energy, gs.steps, gs.converged, gs.last_residual
            );
        }
        Experiment::Evolve => {
            let ev = run_evolution(&cfg, out)?;
            for (t, m) in ev.snapshot_times.iter().zip(&ev.second_moments) {
                println!("t={t:.4} second_moment={m:.12e}");
            }
            println!("{}", ev.conservation.summary_line());
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
