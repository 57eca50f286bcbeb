use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use rayon::prelude::*;

use l1flow_core::experiment::write_outputs_to;
use l1flow_core::{
    delta_bound_estimate, fixture_paper_4agent, load_config, min_l1_lp, run_experiment,
    ExperimentConfig, Result,
};

#[derive(Parser)]
#[command(
    name = "l1flow",
    version,
    about = "Finite-time distributed Ax = b and minimum l1 flows"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one experiment config.
    Run {
        config: PathBuf,
        /// Output directory; overrides `output_dir` in the config.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Print the built-in 4-agent system as JSON.
    Fixture,
    /// Solve the config's stacked system as a minimum l1 linear program.
    Oracle { config: PathBuf },
    /// Run every config matching a glob pattern, in parallel.
    Sweep {
        pattern: String,
        /// Parent directory for per-config outputs when a config sets none.
        #[arg(long, default_value = "runs")]
        out: PathBuf,
    },
    /// Estimate the admissible limit gain for the config's system and network.
    Bound {
        config: PathBuf,
        #[arg(long)]
        samples: Option<usize>,
    },
}

fn output_dir(cfg: &ExperimentConfig, config: &Path, fallback_parent: &Path) -> PathBuf {
    match &cfg.output_dir {
        Some(d) => PathBuf::from(d),
        None => fallback_parent.join(config.file_stem().unwrap_or_default()),
    }
}

fn run_one(config: &Path, out: Option<&Path>, fallback_parent: &Path) -> Result<bool> {
    let cfg = load_config(config)?;
    let (traj, summary) = run_experiment(&cfg)?;
    let dir = out
        .map(Path::to_path_buf)
        .unwrap_or_else(|| output_dir(&cfg, config, fallback_parent));
    write_outputs_to(&traj, &summary, &cfg, &dir)?;
    println!(
        "{}: converged={} stop_time={:.6} consensus_residual={:.3e} constraint_residual={:.3e}{} -> {}",
        config.display(),
        summary.converged,
        summary.stop_time,
        summary.final_consensus_residual,
        summary.final_constraint_residual,
        summary
            .l1_gap
            .map(|g| format!(" l1_gap={g:.3e}"))
            .unwrap_or_default(),
        dir.display()
    );
    Ok(summary.converged)
}

fn execute(cli: Cli) -> Result<bool> {
    match cli.command {
        Command::Run { config, out } => run_one(&config, out.as_deref(), Path::new("runs")),
        Command::Fixture => {
            let (system, graph) = fixture_paper_4agent();
            let blocks: Vec<_> = system
                .blocks()
                .iter()
                .map(|(a, b)| {
                    serde_json::json!({
                        "a": a.row_iter().map(|r| r.iter().copied().collect::<Vec<_>>()).collect::<Vec<_>>(),
                        "b": b.iter().copied().collect::<Vec<_>>(),
                    })
                })
                .collect();
            let edges: Vec<_> = graph.edges().iter().map(|&(h, t)| [h + 1, t + 1]).collect();
            let doc = serde_json::json!({ "blocks": blocks, "edges": edges });
            println!("{}", serde_json::to_string_pretty(&doc)?);
            Ok(true)
        }
        Command::Oracle { config } => {
            let cfg = load_config(&config)?;
            let system = cfg.resolve()?.system;
            let cert = min_l1_lp(&system.stacked_a(), &system.stacked_b())?;
            println!("{}", serde_json::to_string_pretty(&cert)?);
            Ok(true)
        }
        Command::Sweep { pattern, out } => {
            let paths: Vec<PathBuf> = glob::glob(&pattern)
                .map_err(|e| l1flow_core::Error::Config(format!("bad glob `{pattern}`: {e}")))?
                .filter_map(std::result::Result::ok)
                .collect();
            if paths.is_empty() {
                return Err(l1flow_core::Error::Config(format!(
                    "no configs match `{pattern}`"
                )));
            }
            let results: Vec<_> = paths
                .par_iter()
                .map(|p| (p, run_one(p, None, &out)))
                .collect();
            let mut all = true;
            for (p, r) in results {
                match r {
                    Ok(converged) => all &= converged,
                    Err(e) => {
                        eprintln!("{}: error: {e}", p.display());
                        return Err(e);
                    }
                }
            }
            Ok(all)
        }
        Command::Bound { config, samples } => {
            let cfg = load_config(&config)?;
            let resolved = cfg.resolve()?;
            let est = delta_bound_estimate(
                &resolved.system,
                &resolved.graph,
                samples.unwrap_or(cfg.bound_samples),
            )?;
            println!("{}", serde_json::to_string_pretty(&est)?);
            Ok(true)
        }
    }
}

fn main() -> ExitCode {
    match execute(Cli::parse()) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(2),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(1)
        }
    }
}
