//! Config-driven runs: system and network construction, integration, oracle
//! comparison and file output.

mod config;
mod fixture;

pub use config::{
    load_config, ExperimentConfig, GraphSpec, InlineBlock, Resolved, StopConfig, SystemSource,
};
pub use fixture::fixture_paper_4agent;

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::filippov::{delta_bound_estimate, BoundEstimate, FlowKind, FlowSpec};
use crate::integrator::{integrate, StackedState, Trajectory};
use crate::linalg::feasible_init;
use crate::oracle::{min_l1_lp, Uniqueness};
use crate::{Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub flow: FlowKind,
    pub converged: bool,
    pub stop_time: f64,
    pub settle_time: Option<f64>,
    pub steps: usize,
    pub samples: usize,
    pub final_consensus_residual: f64,
    pub final_constraint_residual: f64,
    pub final_l1_norms: Vec<f64>,
    pub oracle_value: Option<f64>,
    pub oracle_unique: Option<Uniqueness>,
    /// `|mean_i ‖y_i‖₁ − oracle value|`.
    pub l1_gap: Option<f64>,
    /// `max_i |‖y_i‖₁ − oracle value|`.
    pub max_agent_l1_gap: Option<f64>,
    pub delta_bound: Option<BoundEstimate>,
    pub qp_unconverged: usize,
}

/// Builds the flow and its initial state for a validated config.
pub fn build_flow(cfg: &ExperimentConfig) -> Result<(FlowSpec, StackedState)> {
    let resolved = cfg.resolve()?;
    let system = resolved.system;
    let eps = cfg.epsilon_value();
    match cfg.flow {
        FlowKind::CentralizedL1 => {
            let y0 = feasible_init(&system.stacked_a(), &system.stacked_b(), cfg.init)?;
            let spec = FlowSpec::centralized_l1(system, eps)?;
            Ok((spec, StackedState::from_blocks(&[y0])?))
        }
        kind => {
            let blocks = system
                .blocks()
                .iter()
                .enumerate()
                .map(|(i, (a, b))| feasible_init(a, b, agent_init(cfg.init, i)))
                .collect::<Result<Vec<_>>>()?;
            let y0 = StackedState::from_blocks(&blocks)?;
            let spec = if kind == FlowKind::Consensus {
                FlowSpec::consensus(system, resolved.graph, eps)?
            } else {
                FlowSpec::distributed_l1(system, resolved.graph, cfg.schedule()?, eps)?
            };
            Ok((spec, y0))
        }
    }
}

/// Agents draw independent kernel perturbations from consecutive seeds.
fn agent_init(mode: crate::linalg::InitMode, agent: usize) -> crate::linalg::InitMode {
    match mode {
        crate::linalg::InitMode::MinNormPlusKernel { seed } => {
            crate::linalg::InitMode::MinNormPlusKernel {
                seed: seed.wrapping_add(agent as u64),
            }
        }
        other => other,
    }
}

pub fn run_experiment(cfg: &ExperimentConfig) -> Result<(Trajectory, RunSummary)> {
    let cfg = cfg.clone().validated()?;
    let (spec, y0) = build_flow(&cfg)?;
    let opts = cfg.integrator_options(spec.n());
    let traj = integrate(&spec, &y0, &opts)?;

    let last = traj.len() - 1;
    let final_l1_norms = traj.l1_norms[last].clone();
    let (mut oracle_value, mut oracle_unique, mut l1_gap, mut max_agent_l1_gap) =
        (None, None, None, None);
    if cfg.flow != FlowKind::Consensus {
        let system = spec.system();
        let cert = min_l1_lp(&system.stacked_a(), &system.stacked_b())?;
        let mean = final_l1_norms.iter().sum::<f64>() / final_l1_norms.len() as f64;
        l1_gap = Some((mean - cert.optimal_value).abs());
        max_agent_l1_gap = Some(
            final_l1_norms
                .iter()
                .map(|v| (v - cert.optimal_value).abs())
                .fold(0.0, f64::max),
        );
        oracle_value = Some(cert.optimal_value);
        oracle_unique = Some(cert.unique);
    }
    let delta_bound = if cfg.estimate_bound && cfg.flow != FlowKind::CentralizedL1 {
        Some(delta_bound_estimate(
            spec.system(),
            spec.graph(),
            cfg.bound_samples,
        )?)
    } else {
        None
    };

    let summary = RunSummary {
        flow: cfg.flow,
        converged: traj.converged,
        stop_time: traj.stop_time,
        settle_time: traj.settle_time,
        steps: traj.steps,
        samples: traj.len(),
        final_consensus_residual: traj.consensus_residual[last],
        final_constraint_residual: traj.constraint_residual[last],
        final_l1_norms,
        oracle_value,
        oracle_unique,
        l1_gap,
        max_agent_l1_gap,
        delta_bound,
        qp_unconverged: traj.qp_unconverged,
    };
    Ok((traj, summary))
}

pub fn trajectory_csv(traj: &Trajectory) -> Result<String> {
    let Some(first) = traj.states.first() else {
        return Err(Error::InvalidArgument("trajectory has no samples".into()));
    };
    let (m, n) = (first.m(), first.n());
    let mut out = String::from("t,consensus_residual,constraint_residual,k");
    for i in 1..=m {
        for j in 1..=n {
            write!(out, ",y_{i}_{j}").expect("string write");
        }
    }
    out.push('\n');
    for (s, y) in traj.states.iter().enumerate() {
        write!(
            out,
            "{:.16e},{:.16e},{:.16e},{:.16e}",
            traj.times[s], traj.consensus_residual[s], traj.constraint_residual[s], traj.k_value[s]
        )
        .expect("string write");
        for v in y.data().iter() {
            write!(out, ",{v:.16e}").expect("string write");
        }
        out.push('\n');
    }
    Ok(out)
}

/// Writes `trajectory.csv`, `summary.json` and the echoed `config.json`
/// into `cfg.output_dir`. Nothing is written if any part fails to render.
pub fn write_outputs(
    traj: &Trajectory,
    summary: &RunSummary,
    cfg: &ExperimentConfig,
) -> Result<Vec<PathBuf>> {
    let dir = cfg
        .output_dir
        .as_deref()
        .ok_or_else(|| Error::Config("field `output_dir`: required to write outputs".into()))?;
    write_outputs_to(traj, summary, cfg, Path::new(dir))
}

pub fn write_outputs_to(
    traj: &Trajectory,
    summary: &RunSummary,
    cfg: &ExperimentConfig,
    dir: &Path,
) -> Result<Vec<PathBuf>> {
    let files = [
        ("trajectory.csv", trajectory_csv(traj)?),
        (
            "summary.json",
            serde_json::to_string_pretty(summary)? + "\n",
        ),
        ("config.json", cfg.to_json_pretty() + "\n"),
    ];
    fs::create_dir_all(dir)?;
    let mut written = Vec::new();
    for (name, body) in &files {
        let path = dir.join(name);
        let tmp = dir.join(format!(".{name}.tmp"));
        fs::write(&tmp, body)?;
        fs::rename(&tmp, &path)?;
        written.push(path);
    }
    Ok(written)
}
