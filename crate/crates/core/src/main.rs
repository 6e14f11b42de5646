use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use loco::experiments::verify;
use loco::experiments::{
    resume_standard, run_continual, run_depth_sweep, run_lr_sweep, run_magnitude_track, run_rank_sweep,
    run_standard, ExperimentConfig, MagnitudeTrack, Mode,
};
use loco::{Error, Result};

#[derive(Parser)]
#[command(name = "loco", version, about = "Node-perturbation learning for spiking networks with cluster-orthogonal projection")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// Experiment config file; defaults apply to every key it omits.
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long)]
    out: Option<PathBuf>,
    /// `key=value`, applied after the config file. Repeatable.
    #[arg(long = "override", value_name = "KEY=VALUE")]
    overrides: Vec<String>,
}

#[derive(Subcommand)]
enum Command {
    /// Train one network, or the experiment named by `mode` in the config.
    Run {
        #[command(flatten)]
        common: Common,
        /// Continue from a checkpoint for `epochs` further epochs.
        #[arg(long)]
        resume: Option<PathBuf>,
    },
    /// Final accuracy against depth for LOCO and NP.
    SweepDepth(Common),
    /// Class-incremental training for LOCO and NP.
    Continual(Common),
    /// Accuracy of rank-constrained updates against rank.
    SweepRank(Common),
    /// Largest stable learning rate for NP and LOCO.
    SweepLr(Common),
    /// Per-update weight-change norms of paired LOCO and NP runs.
    TrackMagnitude(Common),
    /// Projector algebra, estimator alignment and variance checks.
    Verify {
        #[arg(long, default_value_t = 1)]
        seed: u64,
    },
}

fn resolve(common: &Common, mode: Option<Mode>) -> Result<ExperimentConfig> {
    let mut cfg = match &common.config {
        Some(path) => ExperimentConfig::load(path)?,
        None => ExperimentConfig::default(),
    };
    if let Some(mode) = mode {
        cfg.mode = mode;
    }
    for o in &common.overrides {
        cfg.apply_override(o)?;
    }
    if let Some(seed) = common.seed {
        cfg.seed = seed;
    }
    if let Some(out) = &common.out {
        cfg.output_dir = out.clone();
    }
    cfg.validate()?;
    Ok(cfg)
}

fn run(cli: Cli) -> Result<bool> {
    match cli.command {
        Command::Run { common, resume } => {
            let cfg = resolve(&common, None)?;
            match (cfg.mode, resume) {
                (Mode::Standard, Some(ckpt)) => {
                    let o = resume_standard(&cfg, &ckpt)?;
                    println!("final_accuracy {:.4}", o.final_eval.accuracy);
                }
                (_, Some(_)) => return Err(Error::Config("--resume needs mode = standard".into())),
                (Mode::Standard, None) => {
                    let o = run_standard(&cfg)?;
                    println!("final_accuracy {:.4}", o.final_eval.accuracy);
                }
                (Mode::DepthSweep, None) => print_cells(&run_depth_sweep(&cfg)?),
                (Mode::Continual, None) => print_phases(&run_continual(&cfg)?),
                (Mode::RankSweep, None) => print_cells(&run_rank_sweep(&cfg)?),
                (Mode::LrSweep, None) => print_lr(&run_lr_sweep(&cfg)?),
                (Mode::MagnitudeTrack, None) => print_magnitude(&run_magnitude_track(&cfg)?),
            }
            println!("outputs in {}", cfg.output_dir.display());
        }
        Command::SweepDepth(c) => print_cells(&run_depth_sweep(&resolve(&c, Some(Mode::DepthSweep))?)?),
        Command::Continual(c) => print_phases(&run_continual(&resolve(&c, Some(Mode::Continual))?)?),
        Command::SweepRank(c) => print_cells(&run_rank_sweep(&resolve(&c, Some(Mode::RankSweep))?)?),
        Command::SweepLr(c) => print_lr(&run_lr_sweep(&resolve(&c, Some(Mode::LrSweep))?)?),
        Command::TrackMagnitude(c) => print_magnitude(&run_magnitude_track(&resolve(&c, Some(Mode::MagnitudeTrack))?)?),
        Command::Verify { seed } => {
            let checks = verify::run_all(seed)?;
            for c in &checks {
                println!("{} {}: {}", if c.passed { "PASS" } else { "FAIL" }, c.name, c.detail);
            }
            return Ok(checks.iter().all(|c| c.passed));
        }
    }
    Ok(true)
}

fn print_cells(cells: &[loco::experiments::Cell]) {
    for c in cells {
        let flag = if c.diverged { " (diverged)" } else { "" };
        println!("{:<8} {:<12} {:.4}{flag}", c.label, c.rule, c.accuracy);
    }
}

fn print_phases(phases: &[loco::experiments::PhaseResult]) {
    for p in phases {
        println!("{:<6} phase {:<2} class {} accuracy {:.4}", p.rule, p.phase, p.class, p.accuracy);
    }
}

fn print_lr(s: &loco::experiments::LrSweep) {
    let show = |v: Option<f64>| v.map_or("none".to_string(), |x| x.to_string());
    println!("max stable eta np   {}", show(s.np.max_stable()));
    println!("max stable eta loco {}", show(s.loco.max_stable()));
    println!("gamma               {}", show(s.gamma()));
}

fn print_magnitude(t: &MagnitudeTrack) {
    println!("mean applied norm loco {:.6e}", MagnitudeTrack::mean(&t.loco_applied));
    println!("mean applied norm np   {:.6e}", MagnitudeTrack::mean(&t.np_applied));
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    match run(Cli::parse()) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
