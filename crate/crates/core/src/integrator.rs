//! Fixed-step integration of the sign-driven flows.
//!
//! Two ways of choosing the sign selection are available.
//!
//! [`SelectionPolicy::Explicit`] evaluates the right-hand side at the start
//! of the step, with a dead zone around zero. It is the textbook discretization
//! and chatters at amplitude `O(h)` around sliding surfaces.
//!
//! [`SelectionPolicy::Sliding`] (the default) picks the selection that is
//! consistent with the end-of-step state: `y⁺ = y − h P̄ G s` with
//! `s ∈ F[sgn](Gᵀ y⁺)`, where `G` stacks the agent and edge sign arguments.
//! Such an `s` is the solution of the box QP
//!
//! ```text
//! minimize (h/2) ‖P̄ G s‖² − sᵀ Gᵀ y   over the sign box,
//! ```
//!
//! which is the dual of a proximal step on the flow's Lyapunov function. The
//! update keeps every `A_i y_i = b_i`, never increases the Lyapunov function
//! and comes to rest exactly once the flow would, so finite-time arrival is
//! visible in discrete time without a dead zone.

use nalgebra::{DMatrix, DVector, DVectorView, DVectorViewMut};
use serde::{Deserialize, Serialize};

use crate::boxqp::BoxQp;
use crate::filippov::{assemble, edge_selections_with, sgn_select, FlowKind, FlowSpec, ZeroRule};
use crate::graph::Network;
use crate::linalg::ensure_finite_vector;
use crate::{Error, Result};

/// `y = col{y_1, …, y_m}` with `y_i ∈ ℝⁿ`.
#[derive(Clone, Debug, PartialEq)]
pub struct StackedState {
    m: usize,
    n: usize,
    data: DVector<f64>,
}

impl StackedState {
    pub fn zeros(m: usize, n: usize) -> Self {
        Self {
            m,
            n,
            data: DVector::zeros(m * n),
        }
    }

    pub fn from_vec(m: usize, n: usize, data: DVector<f64>) -> Result<Self> {
        if data.len() != m * n {
            return Err(Error::Dimension(format!(
                "state of length {} cannot hold {m} blocks of length {n}",
                data.len()
            )));
        }
        ensure_finite_vector(&data, "state")?;
        Ok(Self { m, n, data })
    }

    pub fn from_blocks(blocks: &[DVector<f64>]) -> Result<Self> {
        let Some(first) = blocks.first() else {
            return Err(Error::Dimension("state needs at least one block".into()));
        };
        let n = first.len();
        if blocks.iter().any(|b| b.len() != n) {
            return Err(Error::Dimension("state blocks differ in length".into()));
        }
        let data = DVector::from_iterator(
            n * blocks.len(),
            blocks.iter().flat_map(|b| b.iter().copied()),
        );
        Self::from_vec(blocks.len(), n, data)
    }

    /// `m` copies of `x`.
    pub fn replicate(m: usize, x: &DVector<f64>) -> Result<Self> {
        Self::from_blocks(&vec![x.clone(); m])
    }

    pub fn m(&self) -> usize {
        self.m
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn data(&self) -> &DVector<f64> {
        &self.data
    }

    pub fn into_data(self) -> DVector<f64> {
        self.data
    }

    pub fn block(&self, i: usize) -> DVectorView<'_, f64> {
        self.data.rows(i * self.n, self.n)
    }

    pub fn block_mut(&mut self, i: usize) -> DVectorViewMut<'_, f64> {
        self.data.rows_mut(i * self.n, self.n)
    }

    pub fn block_l1_norms(&self) -> Vec<f64> {
        (0..self.m).map(|i| self.block(i).lp_norm(1)).collect()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum StopKind {
    /// Consensus residual within `tol` and the state still within `tol` of
    /// where it was when that started, for `dwell`.
    #[default]
    ConsensusAndStationary,
    /// Only the stationarity part.
    Stationary,
    /// Always run to `t_max`; convergence is judged on the final dwell.
    MaxTime,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct StopCriterion {
    pub kind: StopKind,
    pub tol: f64,
    pub dwell: f64,
}

impl StopCriterion {
    pub fn validate(&self) -> Result<()> {
        if !(self.tol > 0.0 && self.tol.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "stop tolerance must be positive, got {}",
                self.tol
            )));
        }
        if !(self.dwell >= 0.0 && self.dwell.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "dwell must be nonnegative, got {}",
                self.dwell
            )));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum SelectionPolicy {
    /// End-of-step consistent selection from a box QP.
    #[default]
    Sliding,
    /// Start-of-step selection with the flow's dead zone.
    Explicit { zero_rule: ZeroRule },
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct IntegratorOptions {
    pub h: f64,
    pub t_max: f64,
    pub stop: StopCriterion,
    pub sample_every: usize,
    pub policy: SelectionPolicy,
    /// Steps between projections back onto `A_i y_i = b_i`; 0 disables.
    pub reproject_every: usize,
}

impl IntegratorOptions {
    /// Defaults for the given policy: stop tolerance `1e-8` for sliding
    /// selections and `100·h·n` for explicit ones, dwell `100·h`.
    pub fn new(h: f64, t_max: f64, n: usize, policy: SelectionPolicy) -> Self {
        Self {
            h,
            t_max,
            stop: StopCriterion {
                kind: StopKind::ConsensusAndStationary,
                tol: Self::default_tol(h, n, policy),
                dwell: 100.0 * h,
            },
            sample_every: 1,
            policy,
            reproject_every: 10_000,
        }
    }

    pub fn default_tol(h: f64, n: usize, policy: SelectionPolicy) -> f64 {
        match policy {
            SelectionPolicy::Sliding => 1e-8,
            SelectionPolicy::Explicit { .. } => 100.0 * h * n as f64,
        }
    }

    fn validate(&self) -> Result<()> {
        if !(self.h > 0.0 && self.h.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "step h must be positive, got {}",
                self.h
            )));
        }
        if !(self.t_max > 0.0 && self.t_max.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "t_max must be positive, got {}",
                self.t_max
            )));
        }
        if self.sample_every == 0 {
            return Err(Error::InvalidArgument(
                "sample_every must be at least 1".into(),
            ));
        }
        self.stop.validate()
    }
}

#[derive(Clone, Debug, Default)]
pub struct Trajectory {
    pub times: Vec<f64>,
    pub states: Vec<StackedState>,
    /// `‖H̄ᵀy‖₁`.
    pub consensus_residual: Vec<f64>,
    /// `max_i ‖A_i y_i − b_i‖_∞`.
    pub constraint_residual: Vec<f64>,
    pub k_value: Vec<f64>,
    /// `‖y_i‖₁` per block.
    pub l1_norms: Vec<Vec<f64>>,
    pub converged: bool,
    /// Time at which the stop condition had held for the dwell, or the final
    /// time if it never did.
    pub stop_time: f64,
    /// Start of the final stretch over which the stop condition held.
    pub settle_time: Option<f64>,
    pub steps: usize,
    /// QP solves that hit their iteration cap (sliding policy only).
    pub qp_unconverged: usize,
}

impl Trajectory {
    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn final_state(&self) -> Option<&StackedState> {
        self.states.last()
    }

    fn record(&mut self, t: f64, y: &StackedState, spec: &FlowSpec) -> Result<()> {
        self.times.push(t);
        self.consensus_residual
            .push(consensus_residual(y, spec.graph())?);
        self.constraint_residual.push(constraint_residual(y, spec));
        self.k_value.push(spec.gain(t)?);
        self.l1_norms.push(y.block_l1_norms());
        self.states.push(y.clone());
        Ok(())
    }
}

/// `‖H̄ᵀy‖₁ = Σ_(i,j) ‖y_i − y_j‖₁`.
pub fn consensus_residual(y: &StackedState, graph: &Network) -> Result<f64> {
    if y.m() != graph.m() {
        return Err(Error::Dimension(format!(
            "state has {} blocks but the network has {} nodes",
            y.m(),
            graph.m()
        )));
    }
    Ok(graph
        .edges()
        .iter()
        .map(|&(head, tail)| (y.block(head) - y.block(tail)).lp_norm(1))
        // an empty f64 sum is -0.0
        .fold(0.0, |acc, v| acc + v))
}

pub(crate) fn constraint_residual(y: &StackedState, spec: &FlowSpec) -> f64 {
    spec.constraints()
        .iter()
        .enumerate()
        .map(|(i, (a, b))| (a * y.block(i) - b).amax())
        .fold(0.0, f64::max)
}

/// `max ‖y(t) − y(t_end)‖_∞` over samples with `t ≥ t_end − window`.
pub fn stationarity_gap(traj: &Trajectory, window: f64) -> Result<f64> {
    let (Some(&t0), Some(&t_end), Some(last)) =
        (traj.times.first(), traj.times.last(), traj.states.last())
    else {
        return Err(Error::InvalidArgument("empty trajectory".into()));
    };
    if !(window >= 0.0) || window > t_end - t0 + 1e-12 * t_end.abs().max(1.0) {
        return Err(Error::InvalidArgument(format!(
            "window {window} exceeds the trajectory span {}",
            t_end - t0
        )));
    }
    let from = t_end - window - 1e-12 * t_end.abs().max(1.0);
    Ok(traj
        .times
        .iter()
        .zip(&traj.states)
        .filter(|(&t, _)| t >= from)
        .map(|(_, y)| (y.data() - last.data()).amax())
        .fold(0.0, f64::max))
}

/// Dual-QP step for the sliding policy.
struct SlidingStep {
    qp: BoxQp,
    /// `P̄ G`.
    kernel_map: DMatrix<f64>,
    /// `Gᵀ`.
    g_t: DMatrix<f64>,
    agent_dim: usize,
    s: DVector<f64>,
    lo: DVector<f64>,
    hi: DVector<f64>,
}

impl SlidingStep {
    fn new(spec: &FlowSpec, h: f64) -> Self {
        let n = spec.n();
        let m = spec.blocks();
        let mn = m * n;
        let mut p_bar = DMatrix::zeros(mn, mn);
        for (i, p) in spec.projectors().iter().enumerate() {
            p_bar.view_mut((i * n, i * n), (n, n)).copy_from(p.matrix());
        }
        let h_bar = spec.graph().expanded_incidence(n);
        let agent_dim = if spec.kind() == FlowKind::Consensus {
            0
        } else {
            mn
        };
        let edge_dim = h_bar.ncols();
        let mut g = DMatrix::zeros(mn, agent_dim + edge_dim);
        if agent_dim > 0 {
            g.view_mut((0, 0), (mn, mn)).fill_with_identity();
        }
        g.view_mut((0, agent_dim), (mn, edge_dim)).copy_from(&h_bar);
        let kernel_map = &p_bar * &g;
        let mut q = kernel_map.tr_mul(&kernel_map) * h;
        q = (&q + q.transpose()) * 0.5;
        let d = agent_dim + edge_dim;
        Self {
            qp: BoxQp::new(q),
            kernel_map,
            g_t: g.transpose(),
            agent_dim,
            s: DVector::zeros(d),
            lo: DVector::from_element(d, -1.0),
            hi: DVector::from_element(d, 1.0),
        }
    }

    /// Advances `y` in place; returns whether the QP converged.
    fn advance(&mut self, y: &mut DVector<f64>, gain: f64, h: f64) -> bool {
        for k in 0..self.agent_dim {
            self.lo[k] = -gain;
            self.hi[k] = gain;
        }
        let c = &self.g_t * &*y;
        let out = self.qp.solve(&c, &self.lo, &self.hi, &mut self.s);
        *y -= (&self.kernel_map * &self.s) * h;
        out.converged
    }
}

struct ExplicitStep {
    rule: ZeroRule,
    prev_edges: Option<Vec<DVector<f64>>>,
    prev_agents: Option<Vec<DVector<f64>>>,
}

impl ExplicitStep {
    fn rhs(&mut self, spec: &FlowSpec, y: &StackedState, gain: f64) -> Result<StackedState> {
        let eps = spec.deadzone();
        let edges: Vec<DVector<f64>> =
            edge_selections_with(y, spec.graph(), eps, self.rule, self.prev_edges.as_deref())?
                .into_iter()
                .map(|s| s.value)
                .collect();
        let agents = if spec.kind() != FlowKind::Consensus {
            let sel = (0..y.m())
                .map(|i| {
                    let prev = self.prev_agents.as_ref().map(|p| &p[i]);
                    Ok(sgn_select(&y.block(i).into_owned(), eps, self.rule, prev)?.value)
                })
                .collect::<Result<Vec<_>>>()?;
            Some(sel)
        } else {
            None
        };
        let weighted = agents
            .as_ref()
            .filter(|_| gain != 0.0)
            .map(|a| a.iter().map(|v| v * gain).collect::<Vec<_>>());
        let out = assemble(
            spec.projectors(),
            spec.graph(),
            spec.n(),
            &edges,
            weighted.as_deref(),
        );
        if self.rule == ZeroRule::Hold {
            self.prev_edges = Some(edges);
            self.prev_agents = agents;
        }
        Ok(out)
    }
}

enum Stepper {
    Sliding(Box<SlidingStep>),
    Explicit(ExplicitStep),
}

fn reproject(y: &mut StackedState, spec: &FlowSpec) -> Result<()> {
    for (i, ((a, b), rs)) in spec.constraints().iter().zip(spec.row_spaces()).enumerate() {
        let r = a * y.block(i) - b;
        let correction = rs.min_norm_solution(&r)?;
        let mut block = y.block_mut(i);
        block -= correction;
    }
    Ok(())
}

/// Integrates `spec` from `y0` with step `h`, `t_k = k·h`.
pub fn integrate(
    spec: &FlowSpec,
    y0: &StackedState,
    opts: &IntegratorOptions,
) -> Result<Trajectory> {
    opts.validate()?;
    spec.check_state(y0)?;
    ensure_finite_vector(y0.data(), "initial state")?;
    let r0 = constraint_residual(y0, spec);
    if r0 > 1e-9 {
        return Err(Error::Infeasible(format!(
            "initial state violates A_i y_i = b_i by {r0:.3e}"
        )));
    }

    let h = opts.h;
    let total_steps = ((opts.t_max / h) - 1e-9).ceil().max(1.0) as usize;
    let dwell_steps = (opts.stop.dwell / h - 1e-9).ceil().max(0.0) as usize;
    let tol = opts.stop.tol;

    let mut stepper = match opts.policy {
        SelectionPolicy::Sliding => Stepper::Sliding(Box::new(SlidingStep::new(spec, h))),
        SelectionPolicy::Explicit { zero_rule } => Stepper::Explicit(ExplicitStep {
            rule: zero_rule,
            prev_edges: None,
            prev_agents: None,
        }),
    };

    let mut traj = Trajectory::default();
    let mut y = y0.clone();
    traj.record(0.0, &y, spec)?;

    let condition = |y: &StackedState| -> Result<bool> {
        Ok(match opts.stop.kind {
            StopKind::Stationary => true,
            _ => consensus_residual(y, spec.graph())? <= tol,
        })
    };
    let mut anchor: Option<(usize, DVector<f64>)> = None;
    if condition(&y)? {
        anchor = Some((0, y.data().clone()));
    }

    let mut step = 0;
    let mut stopped = false;
    while step < total_steps {
        let t = step as f64 * h;
        let gain = spec.gain(t)?;
        match &mut stepper {
            Stepper::Sliding(s) => {
                let mut data = std::mem::replace(&mut y.data, DVector::zeros(0));
                if !s.advance(&mut data, gain, h) {
                    traj.qp_unconverged += 1;
                }
                y.data = data;
            }
            Stepper::Explicit(e) => {
                let dy = e.rhs(spec, &y, gain)?;
                y.data.axpy(h, dy.data(), 1.0);
            }
        }
        step += 1;
        if !y.data.iter().all(|v| v.is_finite()) {
            return Err(Error::BlowUp {
                step,
                time: step as f64 * h,
            });
        }
        if opts.reproject_every > 0 && step % opts.reproject_every == 0 {
            reproject(&mut y, spec)?;
        }

        let holds = condition(&y)?;
        anchor = match anchor.take() {
            Some((start, a)) if holds && (y.data() - &a).amax() <= tol => Some((start, a)),
            _ if holds => Some((step, y.data().clone())),
            _ => None,
        };

        let t_now = step as f64 * h;
        let reached = anchor
            .as_ref()
            .is_some_and(|(start, _)| step - start >= dwell_steps);
        let finishing = step == total_steps || (reached && opts.stop.kind != StopKind::MaxTime);
        if finishing || step % opts.sample_every == 0 {
            traj.record(t_now, &y, spec)?;
        }
        if finishing {
            stopped = reached;
            break;
        }
    }

    traj.steps = step;
    traj.stop_time = step as f64 * h;
    traj.converged = stopped;
    traj.settle_time = anchor
        .filter(|_| stopped)
        .map(|(start, _)| start as f64 * h);
    Ok(traj)
}
