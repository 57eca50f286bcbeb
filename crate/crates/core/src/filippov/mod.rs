//! Sign selections from the Filippov regularization of `sgn`, and the
//! right-hand sides of the three flows.
//!
//! Every flow has the form `ẏ_i = −P_i w_i` where `w_i` collects the
//! agent's sign terms: the per-edge selections `φ_ij` (consensus part) and,
//! for the distributed l1 flow, `k(t) φ_i`. One selection is computed per
//! oriented edge and handed out as `+φ` to the head and `−φ` to the tail, so
//! the antisymmetry `φ_ij = −φ_ji` holds for every state, including
//! coincident endpoints.

mod bound;
mod schedule;

pub use bound::{delta_bound_estimate, delta_bound_from_blocks, BoundEstimate, BoundRegime};
pub use schedule::{k_schedule, KSchedule, ScheduleKind};

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::graph::Network;
use crate::integrator::StackedState;
use crate::linalg::{
    ensure_finite_vector, kernel_projector_labeled, PartitionedSystem, Projector, RowSpace,
};
use crate::{Error, Result};

/// What to emit for entries inside the dead zone.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum ZeroRule {
    #[default]
    Zero,
    /// Re-emit the previous selection entry.
    Hold,
}

/// A member of `F[sgn](x)` up to a dead zone: `±1` where `|x_k| > ε`,
/// a value in `[−1, 1]` otherwise.
#[derive(Clone, Debug, PartialEq)]
pub struct SignSelection {
    pub value: DVector<f64>,
    pub deadzone: f64,
}

impl SignSelection {
    /// `true` if this selection is admissible for `x`.
    pub fn admissible_for(&self, x: &DVector<f64>) -> bool {
        self.value.len() == x.len()
            && self.value.iter().zip(x.iter()).all(|(&q, &xk)| {
                if xk > self.deadzone {
                    q == 1.0
                } else if xk < -self.deadzone {
                    q == -1.0
                } else {
                    (-1.0..=1.0).contains(&q)
                }
            })
    }
}

pub fn sgn_select(
    x: &DVector<f64>,
    eps: f64,
    rule: ZeroRule,
    previous: Option<&DVector<f64>>,
) -> Result<SignSelection> {
    if !(eps >= 0.0) {
        return Err(Error::InvalidArgument(format!(
            "dead zone must be nonnegative, got {eps}"
        )));
    }
    ensure_finite_vector(x, "sign argument")?;
    let value = DVector::from_fn(x.len(), |k, _| {
        let xk = x[k];
        if xk > eps {
            1.0
        } else if xk < -eps {
            -1.0
        } else {
            match (rule, previous) {
                (ZeroRule::Hold, Some(prev)) if prev.len() == x.len() => prev[k].clamp(-1.0, 1.0),
                _ => 0.0,
            }
        }
    });
    Ok(SignSelection {
        value,
        deadzone: eps,
    })
}

/// One selection per oriented edge `(i, j)` of `sgn(y_i − y_j)`.
pub fn edge_selections(y: &StackedState, graph: &Network, eps: f64) -> Result<Vec<SignSelection>> {
    edge_selections_with(y, graph, eps, ZeroRule::Zero, None)
}

pub(crate) fn edge_selections_with(
    y: &StackedState,
    graph: &Network,
    eps: f64,
    rule: ZeroRule,
    previous: Option<&[DVector<f64>]>,
) -> Result<Vec<SignSelection>> {
    if y.m() != graph.m() {
        return Err(Error::Dimension(format!(
            "state has {} blocks but the network has {} nodes",
            y.m(),
            graph.m()
        )));
    }
    graph
        .edges()
        .iter()
        .enumerate()
        .map(|(k, &(head, tail))| {
            let diff = y.block(head) - y.block(tail);
            sgn_select(&diff, eps, rule, previous.map(|p| &p[k]))
        })
        .collect()
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FlowKind {
    Consensus,
    CentralizedL1,
    DistributedL1,
}

/// A flow together with the data its right-hand side needs.
///
/// The centralized flow runs on a single stacked state; it is represented
/// as one agent holding the stacked `(A, b)` on a one-node network.
#[derive(Clone, Debug)]
pub struct FlowSpec {
    kind: FlowKind,
    system: PartitionedSystem,
    graph: Network,
    schedule: KSchedule,
    deadzone: f64,
    projectors: Vec<Projector>,
    constraints: Vec<(DMatrix<f64>, DVector<f64>)>,
    row_spaces: Vec<RowSpace>,
}

impl FlowSpec {
    pub fn consensus(system: PartitionedSystem, graph: Network, deadzone: f64) -> Result<Self> {
        Self::networked(
            FlowKind::Consensus,
            system,
            graph,
            KSchedule::zero(),
            deadzone,
        )
    }

    pub fn distributed_l1(
        system: PartitionedSystem,
        graph: Network,
        schedule: KSchedule,
        deadzone: f64,
    ) -> Result<Self> {
        Self::networked(FlowKind::DistributedL1, system, graph, schedule, deadzone)
    }

    pub fn centralized_l1(system: PartitionedSystem, deadzone: f64) -> Result<Self> {
        check_deadzone(deadzone)?;
        let a = system.stacked_a();
        let b = system.stacked_b();
        let projector = kernel_projector_labeled(&a, "stacked A")?;
        let row_space = RowSpace::new(&a, "stacked A")?;
        Ok(Self {
            kind: FlowKind::CentralizedL1,
            system,
            graph: Network::new(1, vec![])?,
            schedule: KSchedule::zero(),
            deadzone,
            projectors: vec![projector],
            constraints: vec![(a, b)],
            row_spaces: vec![row_space],
        })
    }

    fn networked(
        kind: FlowKind,
        system: PartitionedSystem,
        graph: Network,
        schedule: KSchedule,
        deadzone: f64,
    ) -> Result<Self> {
        check_deadzone(deadzone)?;
        if graph.m() != system.m() {
            return Err(Error::Dimension(format!(
                "network has {} nodes but the system has {} agents",
                graph.m(),
                system.m()
            )));
        }
        graph.require_connected()?;
        let projectors = system.projectors()?;
        let row_spaces = system.row_spaces()?;
        let constraints = system.blocks().to_vec();
        Ok(Self {
            kind,
            system,
            graph,
            schedule,
            deadzone,
            projectors,
            constraints,
            row_spaces,
        })
    }

    pub fn kind(&self) -> FlowKind {
        self.kind
    }

    pub fn system(&self) -> &PartitionedSystem {
        &self.system
    }

    /// The network the state lives on (one node for the centralized flow).
    pub fn graph(&self) -> &Network {
        &self.graph
    }

    pub fn schedule(&self) -> &KSchedule {
        &self.schedule
    }

    pub fn deadzone(&self) -> f64 {
        self.deadzone
    }

    /// Number of state blocks.
    pub fn blocks(&self) -> usize {
        self.projectors.len()
    }

    pub fn n(&self) -> usize {
        self.system.n()
    }

    pub fn projectors(&self) -> &[Projector] {
        &self.projectors
    }

    /// `(A_i, b_i)` per state block.
    pub fn constraints(&self) -> &[(DMatrix<f64>, DVector<f64>)] {
        &self.constraints
    }

    pub(crate) fn row_spaces(&self) -> &[RowSpace] {
        &self.row_spaces
    }

    /// `k(t)`; zero for flows without an l1 term.
    pub fn gain(&self, t: f64) -> Result<f64> {
        match self.kind {
            FlowKind::DistributedL1 => self.schedule.value(t),
            FlowKind::CentralizedL1 => Ok(1.0),
            FlowKind::Consensus => Ok(0.0),
        }
    }

    pub(crate) fn check_state(&self, y: &StackedState) -> Result<()> {
        if y.m() != self.blocks() || y.n() != self.n() {
            return Err(Error::Dimension(format!(
                "state is {}x{} blocks, flow expects {}x{}",
                y.m(),
                y.n(),
                self.blocks(),
                self.n()
            )));
        }
        Ok(())
    }

    fn require(&self, kind: FlowKind) -> Result<()> {
        if self.kind == kind {
            Ok(())
        } else {
            Err(Error::InvalidArgument(format!(
                "flow is {:?}, operation needs {:?}",
                self.kind, kind
            )))
        }
    }
}

fn check_deadzone(eps: f64) -> Result<()> {
    if eps >= 0.0 && eps.is_finite() {
        Ok(())
    } else {
        Err(Error::InvalidArgument(format!(
            "dead zone must be finite and nonnegative, got {eps}"
        )))
    }
}

/// `ẏ_i = −P_i (Σ_e ±φ_e + a_i)` where `a_i` is an optional, already
/// weighted agent term. Edge contributions are accumulated in edge order.
pub(crate) fn assemble(
    projectors: &[Projector],
    graph: &Network,
    n: usize,
    edge_terms: &[DVector<f64>],
    agent_terms: Option<&[DVector<f64>]>,
) -> StackedState {
    let m = projectors.len();
    let mut w = vec![DVector::<f64>::zeros(n); m];
    for (phi, &(head, tail)) in edge_terms.iter().zip(graph.edges()) {
        w[head] += phi;
        w[tail] -= phi;
    }
    if let Some(terms) = agent_terms {
        for (wi, ai) in w.iter_mut().zip(terms) {
            *wi += ai;
        }
    }
    let mut out = StackedState::zeros(m, n);
    for (i, (p, wi)) in projectors.iter().zip(&w).enumerate() {
        out.block_mut(i).copy_from(&-(p.matrix() * wi));
    }
    out
}

/// `ẏ_i = −P_i Σ_{j∈N_i} φ_ij`.
pub fn rhs_consensus(y: &StackedState, spec: &FlowSpec) -> Result<StackedState> {
    spec.require(FlowKind::Consensus)?;
    spec.check_state(y)?;
    let edges: Vec<_> = edge_selections(y, spec.graph(), spec.deadzone())?
        .into_iter()
        .map(|s| s.value)
        .collect();
    Ok(assemble(
        spec.projectors(),
        spec.graph(),
        spec.n(),
        &edges,
        None,
    ))
}

/// `ẏ = −P sgn(y)`.
pub fn rhs_centralized_l1(y: &DVector<f64>, p: &Projector, eps: f64) -> Result<DVector<f64>> {
    if y.len() != p.dim() {
        return Err(Error::Dimension(format!(
            "state has length {}, projector is {}x{}",
            y.len(),
            p.dim(),
            p.dim()
        )));
    }
    let phi = sgn_select(y, eps, ZeroRule::Zero, None)?.value;
    Ok(-(p.matrix() * phi))
}

/// `ẏ_i = −k(t) P_i φ_i − P_i Σ_{j∈N_i} φ_ij`.
pub fn rhs_distributed_l1(t: f64, y: &StackedState, spec: &FlowSpec) -> Result<StackedState> {
    spec.require(FlowKind::DistributedL1)?;
    spec.check_state(y)?;
    let k = spec.schedule().value(t)?;
    let edges: Vec<_> = edge_selections(y, spec.graph(), spec.deadzone())?
        .into_iter()
        .map(|s| s.value)
        .collect();
    let agent_terms = if k != 0.0 {
        let terms = (0..y.m())
            .map(|i| {
                let phi = sgn_select(
                    &y.block(i).into_owned(),
                    spec.deadzone(),
                    ZeroRule::Zero,
                    None,
                )?;
                Ok(phi.value * k)
            })
            .collect::<Result<Vec<_>>>()?;
        Some(terms)
    } else {
        None
    };
    Ok(assemble(
        spec.projectors(),
        spec.graph(),
        spec.n(),
        &edges,
        agent_terms.as_deref(),
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::dmatrix;

    fn v(x: &[f64]) -> DVector<f64> {
        DVector::from_vec(x.to_vec())
    }

    fn toy() -> (PartitionedSystem, Network) {
        let sys = PartitionedSystem::new(vec![
            (dmatrix![1.0, 0.0], v(&[1.0])),
            (dmatrix![0.0, 1.0], v(&[1.0])),
        ])
        .unwrap();
        (sys, Network::path(2))
    }

    #[test]
    fn sign_examples() {
        let s = sgn_select(&v(&[3.0, -2.0, 0.0]), 1e-9, ZeroRule::Zero, None).unwrap();
        assert_eq!(s.value, v(&[1.0, -1.0, 0.0]));

        let x = DVector::zeros(4);
        let s = sgn_select(&x, 0.0, ZeroRule::Zero, None).unwrap();
        assert_eq!(s.value, DVector::zeros(4));
        assert_eq!(s.value.dot(&x), x.lp_norm(1));

        let s = sgn_select(&v(&[5e-10, -7.0]), 1e-9, ZeroRule::Zero, None).unwrap();
        assert_eq!(s.value, v(&[0.0, -1.0]));
    }

    #[test]
    fn hold_rule_reuses_previous() {
        let prev = v(&[0.4, 1.0]);
        let s = sgn_select(&v(&[0.0, 2.0]), 1e-6, ZeroRule::Hold, Some(&prev)).unwrap();
        assert_eq!(s.value, v(&[0.4, 1.0]));
        assert!(s.admissible_for(&v(&[0.0, 2.0])));
    }

    #[test]
    fn sign_rejects_bad_input() {
        assert!(sgn_select(&v(&[f64::NAN]), 0.0, ZeroRule::Zero, None).is_err());
        assert!(sgn_select(&v(&[1.0]), -1.0, ZeroRule::Zero, None).is_err());
    }

    #[test]
    fn edge_selection_examples() {
        let g = Network::path(2);
        let y = StackedState::from_blocks(&[v(&[1.0, 0.0]), v(&[0.0, 1.0])]).unwrap();
        let sel = edge_selections(&y, &g, 0.0).unwrap();
        assert_eq!(sel[0].value, v(&[1.0, -1.0]));

        let y = StackedState::from_blocks(&[v(&[0.3, 0.3]), v(&[0.3, 0.3])]).unwrap();
        let sel = edge_selections(&y, &g, 0.0).unwrap();
        assert_eq!(sel[0].value, DVector::zeros(2));

        let eps = 1e-6;
        let y = StackedState::from_blocks(&[v(&[eps / 2.0, 2.0 * eps]), v(&[0.0, 0.0])]).unwrap();
        let sel = edge_selections(&y, &g, eps).unwrap();
        assert_eq!(sel[0].value, v(&[0.0, 1.0]));
    }

    #[test]
    fn consensus_rhs_examples() {
        let (sys, g) = toy();
        let spec = FlowSpec::consensus(sys, g, 1e-9).unwrap();
        let y = StackedState::from_blocks(&[v(&[1.0, 0.0]), v(&[0.0, 1.0])]).unwrap();
        let dy = rhs_consensus(&y, &spec).unwrap();
        assert!((dy.data() - v(&[0.0, 1.0, 1.0, 0.0])).amax() < 1e-15);

        let y = StackedState::from_blocks(&[v(&[1.0, 1.0]), v(&[1.0, 1.0])]).unwrap();
        assert_eq!(rhs_consensus(&y, &spec).unwrap().data().amax(), 0.0);
    }

    #[test]
    fn centralized_rhs_examples() {
        let p = crate::linalg::kernel_projector(&dmatrix![2.0, 1.0]).unwrap();
        let dy = rhs_centralized_l1(&v(&[0.8, 0.4]), &p, 1e-9).unwrap();
        assert!((dy - v(&[0.2, -0.4])).amax() < 1e-15);

        let dy = rhs_centralized_l1(&DVector::zeros(2), &p, 1e-9).unwrap();
        assert_eq!(dy.amax(), 0.0);

        let p = crate::linalg::kernel_projector(&DMatrix::identity(3, 3)).unwrap();
        let dy = rhs_centralized_l1(&v(&[1.0, -2.0, 0.5]), &p, 0.0).unwrap();
        assert_eq!(dy.amax(), 0.0);
    }

    #[test]
    fn distributed_rhs_examples() {
        let (sys, g) = toy();
        let spec = FlowSpec::distributed_l1(
            sys.clone(),
            g.clone(),
            KSchedule::constant(0.5).unwrap(),
            1e-9,
        )
        .unwrap();
        let y = StackedState::from_blocks(&[v(&[1.0, 1.0]), v(&[1.0, 1.0])]).unwrap();
        let dy = rhs_distributed_l1(0.0, &y, &spec).unwrap();
        assert!((dy.data() - v(&[0.0, -0.5, -0.5, 0.0])).amax() < 1e-15);

        // k ≡ 0 reduces to the consensus flow
        let spec0 =
            FlowSpec::distributed_l1(sys.clone(), g.clone(), KSchedule::zero(), 1e-9).unwrap();
        let specc = FlowSpec::consensus(sys, g, 1e-9).unwrap();
        let y = StackedState::from_blocks(&[v(&[1.0, 0.0]), v(&[0.0, 1.0])]).unwrap();
        assert_eq!(
            rhs_distributed_l1(3.0, &y, &spec0).unwrap(),
            rhs_consensus(&y, &specc).unwrap()
        );
    }

    #[test]
    fn single_agent_distributed_is_centralized() {
        let sys = PartitionedSystem::new(vec![(dmatrix![2.0, 1.0, 0.0], v(&[2.0]))]).unwrap();
        let p = sys.projectors().unwrap().remove(0);
        let spec = FlowSpec::distributed_l1(
            sys,
            Network::new(1, vec![]).unwrap(),
            KSchedule::constant(1.0).unwrap(),
            1e-9,
        )
        .unwrap();
        let y = v(&[0.8, 0.4, -0.1]);
        let state = StackedState::from_blocks(std::slice::from_ref(&y)).unwrap();
        assert_eq!(
            rhs_distributed_l1(0.0, &state, &spec)
                .unwrap()
                .data()
                .clone(),
            rhs_centralized_l1(&y, &p, 1e-9).unwrap()
        );
    }

    #[test]
    fn wrong_kind_is_rejected() {
        let (sys, g) = toy();
        let spec = FlowSpec::consensus(sys, g, 0.0).unwrap();
        let y = StackedState::zeros(2, 2);
        assert!(rhs_distributed_l1(0.0, &y, &spec).is_err());
    }

    #[test]
    fn disconnected_network_is_rejected() {
        let sys = PartitionedSystem::new(vec![
            (dmatrix![1.0, 0.0, 0.0], v(&[1.0])),
            (dmatrix![0.0, 1.0, 0.0], v(&[1.0])),
            (dmatrix![0.0, 0.0, 1.0], v(&[1.0])),
        ])
        .unwrap();
        let g = Network::new(3, vec![(0, 1)]).unwrap();
        assert!(matches!(
            FlowSpec::consensus(sys, g, 0.0),
            Err(Error::Network(_))
        ));
    }
}
