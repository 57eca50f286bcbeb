use std::path::Path;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::fixture::fixture_paper_4agent;
use crate::filippov::{FlowKind, KSchedule, ScheduleKind};
use crate::graph::Network;
use crate::integrator::{IntegratorOptions, SelectionPolicy, StopCriterion, StopKind};
use crate::linalg::{InitMode, PartitionedSystem};
use crate::{Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind", deny_unknown_fields)]
pub enum SystemSource {
    FixturePaper,
    Inline {
        blocks: Vec<InlineBlock>,
    },
    Random {
        seed: u64,
        m: usize,
        n: usize,
        n_i: usize,
    },
}

/// One agent's equations; `a` is row-major.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InlineBlock {
    pub a: Vec<Vec<f64>>,
    pub b: Vec<f64>,
}

/// A named topology (`path`, `ring`, `star`, `complete`, optionally with the
/// node count appended, e.g. `ring4`) or an explicit one-based edge list.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum GraphSpec {
    Named(String),
    Edges { edges: Vec<[usize; 2]> },
}

impl Default for GraphSpec {
    fn default() -> Self {
        GraphSpec::Named("path".into())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields)]
pub struct StopConfig {
    #[serde(default)]
    pub kind: StopKind,
    #[serde(default)]
    pub tol: Option<f64>,
    #[serde(default)]
    pub dwell: Option<f64>,
}

fn default_system() -> SystemSource {
    SystemSource::FixturePaper
}
fn default_delta_bar() -> f64 {
    0.1
}
fn default_delta() -> f64 {
    0.01
}
fn default_h() -> f64 {
    1e-3
}
fn default_t_max() -> f64 {
    100.0
}
fn default_sample_every() -> usize {
    10
}
fn default_bound_samples() -> usize {
    100_000
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    #[serde(default = "default_system")]
    pub system: SystemSource,
    #[serde(default)]
    pub graph: GraphSpec,
    pub flow: FlowKind,
    #[serde(default)]
    pub schedule: ScheduleKind,
    #[serde(default = "default_delta_bar")]
    pub delta_bar: f64,
    #[serde(default = "default_delta")]
    pub delta: f64,
    #[serde(default)]
    pub selection: SelectionPolicy,
    /// Dead zone of the explicit policy; defaults to `10·h`.
    #[serde(default)]
    pub epsilon: Option<f64>,
    #[serde(default = "default_h")]
    pub h: f64,
    #[serde(default = "default_t_max")]
    pub t_max: f64,
    #[serde(default)]
    pub stop: StopConfig,
    #[serde(default = "default_sample_every")]
    pub sample_every: usize,
    #[serde(default)]
    pub init: InitMode,
    #[serde(default)]
    pub output_dir: Option<String>,
    #[serde(default)]
    pub estimate_bound: bool,
    #[serde(default = "default_bound_samples")]
    pub bound_samples: usize,
}

/// The system and network a validated config describes.
#[derive(Clone, Debug)]
pub struct Resolved {
    pub system: PartitionedSystem,
    pub graph: Network,
}

fn field_err(field: &str, msg: impl std::fmt::Display) -> Error {
    Error::Config(format!("field `{field}`: {msg}"))
}

fn check_nonneg(field: &str, v: f64) -> Result<()> {
    if v.is_finite() && v >= 0.0 {
        Ok(())
    } else {
        Err(field_err(
            field,
            format!("must be finite and nonnegative, got {v}"),
        ))
    }
}

fn check_pos(field: &str, v: f64) -> Result<()> {
    if v.is_finite() && v > 0.0 {
        Ok(())
    } else {
        Err(field_err(
            field,
            format!("must be finite and positive, got {v}"),
        ))
    }
}

impl ExperimentConfig {
    /// A config for `flow` with every other field at its default.
    pub fn new(flow: FlowKind) -> Self {
        serde_json::from_value(serde_json::json!({ "flow": flow })).expect("defaults deserialize")
    }

    pub fn from_json_str(text: &str) -> Result<Self> {
        let cfg: Self = serde_json::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validated()
    }

    pub fn to_json_pretty(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    /// Checks every field and fills the derived defaults.
    pub fn validated(mut self) -> Result<Self> {
        check_pos("h", self.h)?;
        check_pos("t_max", self.t_max)?;
        if self.h > self.t_max {
            return Err(field_err("h", "step exceeds t_max"));
        }
        check_nonneg("delta_bar", self.delta_bar)?;
        check_nonneg("delta", self.delta)?;
        if self.sample_every == 0 {
            return Err(field_err("sample_every", "must be at least 1"));
        }
        if self.bound_samples == 0 {
            return Err(field_err("bound_samples", "must be at least 1"));
        }
        let resolved = self.resolve()?;
        let eps = *self.epsilon.get_or_insert(10.0 * self.h);
        check_nonneg("epsilon", eps)?;
        let tol = *self.stop.tol.get_or_insert(IntegratorOptions::default_tol(
            self.h,
            resolved.system.n(),
            self.selection,
        ));
        check_pos("stop.tol", tol)?;
        let dwell = *self.stop.dwell.get_or_insert(100.0 * self.h);
        check_nonneg("stop.dwell", dwell)?;
        Ok(self)
    }

    pub fn resolve(&self) -> Result<Resolved> {
        let system = match &self.system {
            SystemSource::FixturePaper => fixture_paper_4agent().0,
            SystemSource::Inline { blocks } => {
                let mut out = Vec::with_capacity(blocks.len());
                for (i, blk) in blocks.iter().enumerate() {
                    let rows = blk.a.len();
                    let cols = blk.a.first().map_or(0, Vec::len);
                    if rows == 0 || cols == 0 || blk.a.iter().any(|r| r.len() != cols) {
                        return Err(field_err(
                            "system.blocks",
                            format!("block {} must be a nonempty rectangular matrix", i + 1),
                        ));
                    }
                    let a = DMatrix::from_fn(rows, cols, |r, c| blk.a[r][c]);
                    out.push((a, DVector::from_column_slice(&blk.b)));
                }
                PartitionedSystem::new(out).map_err(|e| field_err("system", e))?
            }
            SystemSource::Random { seed, m, n, n_i } => {
                PartitionedSystem::random(*seed, *m, *n, *n_i)
                    .map_err(|e| field_err("system", e))?
            }
        };
        let graph = build_graph(&self.graph, system.m()).map_err(|e| field_err("graph", e))?;
        if graph.m() != system.m() {
            return Err(field_err(
                "graph",
                format!(
                    "has {} nodes but the system has {} agents",
                    graph.m(),
                    system.m()
                ),
            ));
        }
        if !graph.is_connected() {
            return Err(field_err("graph", "network must be connected"));
        }
        Ok(Resolved { system, graph })
    }

    pub fn schedule(&self) -> Result<KSchedule> {
        KSchedule::new(self.schedule, self.delta_bar, self.delta)
    }

    pub fn epsilon_value(&self) -> f64 {
        self.epsilon.unwrap_or(10.0 * self.h)
    }

    pub fn integrator_options(&self, n: usize) -> IntegratorOptions {
        let mut opts = IntegratorOptions::new(self.h, self.t_max, n, self.selection);
        opts.sample_every = self.sample_every;
        opts.stop = StopCriterion {
            kind: self.stop.kind,
            tol: self.stop.tol.unwrap_or(opts.stop.tol),
            dwell: self.stop.dwell.unwrap_or(opts.stop.dwell),
        };
        opts
    }
}

fn build_graph(spec: &GraphSpec, m: usize) -> Result<Network> {
    match spec {
        GraphSpec::Edges { edges } => {
            let pairs: Vec<(usize, usize)> = edges.iter().map(|e| (e[0], e[1])).collect();
            Network::from_one_based(m, &pairs)
        }
        GraphSpec::Named(name) => {
            let split = name
                .find(|c: char| c.is_ascii_digit())
                .unwrap_or(name.len());
            let (base, digits) = name.split_at(split);
            let size = if digits.is_empty() {
                m
            } else {
                digits
                    .parse()
                    .map_err(|_| Error::Network(format!("unrecognized graph name `{name}`")))?
            };
            match base {
                "path" => Ok(Network::path(size)),
                "ring" => Network::ring(size),
                "star" => Ok(Network::star(size)),
                "complete" => Ok(Network::complete(size)),
                _ => Err(Error::Network(format!(
                    "unknown graph `{name}`; expected path, ring, star or complete"
                ))),
            }
        }
    }
}

pub fn load_config(path: impl AsRef<Path>) -> Result<ExperimentConfig> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path)?;
    let cfg: ExperimentConfig = serde_json::from_str(&text)
        .map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
    cfg.validated()
        .map_err(|e| Error::Config(format!("{}: {e}", path.display())))
}
