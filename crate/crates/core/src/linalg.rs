//! Dense real linear algebra: rank checks, kernel projectors, feasible
//! initial states and the block-stacked operators used by the flows.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::graph::Network;
use crate::{Error, Result};

pub type DenseMatrix = DMatrix<f64>;

/// Relative rank threshold, scaled by the largest row norm of the matrix.
pub const DEFAULT_RANK_TOL: f64 = 1e-10;

pub(crate) fn ensure_finite_matrix(m: &DMatrix<f64>, what: &str) -> Result<()> {
    if m.iter().all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(Error::NonFinite(what.to_string()))
    }
}

pub(crate) fn ensure_finite_vector(v: &DVector<f64>, what: &str) -> Result<()> {
    if v.iter().all(|x| x.is_finite()) {
        Ok(())
    } else {
        Err(Error::NonFinite(what.to_string()))
    }
}

pub(crate) fn max_abs(m: &DMatrix<f64>) -> f64 {
    m.iter().fold(0.0_f64, |acc, v| acc.max(v.abs()))
}

fn max_row_norm(a: &DMatrix<f64>) -> f64 {
    a.row_iter().map(|r| r.norm()).fold(0.0, f64::max)
}

/// Numerical rank from a column-pivoted QR of `Aᵀ`; diagonal entries of `R`
/// at or below `tol · max_row_norm(A)` count as zero.
pub fn numerical_rank(a: &DMatrix<f64>, tol: f64) -> Result<usize> {
    ensure_finite_matrix(a, "matrix")?;
    if a.nrows() == 0 || a.ncols() == 0 {
        return Ok(0);
    }
    let scale = max_row_norm(a);
    if scale == 0.0 {
        return Ok(0);
    }
    let qr = a.transpose().col_piv_qr();
    let r = qr.r();
    let threshold = tol * scale;
    Ok((0..r.nrows().min(r.ncols()))
        .filter(|&i| r[(i, i)].abs() > threshold)
        .count())
}

/// `true` iff the numerical rank of `a` equals its row count.
pub fn has_full_row_rank(a: &DMatrix<f64>, tol: f64) -> Result<bool> {
    if a.nrows() == 0 || a.ncols() == 0 {
        return Err(Error::InvalidArgument("empty matrix".into()));
    }
    if a.nrows() > a.ncols() {
        ensure_finite_matrix(a, "matrix")?;
        return Ok(false);
    }
    Ok(numerical_rank(a, tol)? == a.nrows())
}

/// Thin QR factorization `Aᵀ = Q R` of a full-row-rank matrix. All solves
/// against `A Aᵀ = Rᵀ R` go through the triangular factor.
#[derive(Clone, Debug)]
pub struct RowSpace {
    q: DMatrix<f64>,
    r: DMatrix<f64>,
}

impl RowSpace {
    pub fn new(a: &DMatrix<f64>, label: &str) -> Result<Self> {
        if !has_full_row_rank(a, DEFAULT_RANK_TOL)? {
            return Err(Error::RankDeficient(format!(
                "{label} ({}x{}) does not have full row rank",
                a.nrows(),
                a.ncols()
            )));
        }
        let qr = a.transpose().qr();
        Ok(Self {
            q: qr.q(),
            r: qr.r(),
        })
    }

    /// `Aᵀ (A Aᵀ)⁻¹ b = Q R⁻ᵀ b`.
    pub fn min_norm_solution(&self, b: &DVector<f64>) -> Result<DVector<f64>> {
        if b.len() != self.r.nrows() {
            return Err(Error::Dimension(format!(
                "right-hand side has length {}, expected {}",
                b.len(),
                self.r.nrows()
            )));
        }
        let w = self
            .r
            .transpose()
            .solve_lower_triangular(b)
            .ok_or_else(|| Error::RankDeficient("triangular factor is singular".into()))?;
        Ok(&self.q * w)
    }

    /// `I − Q Qᵀ`, symmetrized.
    pub fn kernel_projector_matrix(&self) -> DMatrix<f64> {
        let n = self.q.nrows();
        let mut p = DMatrix::identity(n, n) - &self.q * self.q.transpose();
        for i in 0..n {
            for j in (i + 1)..n {
                let v = 0.5 * (p[(i, j)] + p[(j, i)]);
                p[(i, j)] = v;
                p[(j, i)] = v;
            }
        }
        p
    }
}

/// Orthogonal projector onto `ker A` for the block `A` it was built from.
#[derive(Clone, Debug)]
pub struct Projector {
    matrix: DMatrix<f64>,
    source: DMatrix<f64>,
}

/// Max-norm residuals of the three projector identities.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ProjectorCheck {
    pub symmetry: f64,
    pub idempotence: f64,
    pub annihilation: f64,
}

impl ProjectorCheck {
    pub fn passes(&self, tol: f64) -> bool {
        self.symmetry <= tol && self.idempotence <= tol && self.annihilation <= tol
    }
}

impl Projector {
    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.matrix
    }

    pub fn source(&self) -> &DMatrix<f64> {
        &self.source
    }

    pub fn dim(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn apply(&self, v: &DVector<f64>) -> DVector<f64> {
        &self.matrix * v
    }

    pub fn certify(&self) -> ProjectorCheck {
        let p = &self.matrix;
        ProjectorCheck {
            symmetry: max_abs(&(p - p.transpose())),
            idempotence: max_abs(&(p * p - p)),
            annihilation: max_abs(&(&self.source * p)),
        }
    }
}

/// `P = I − Aᵀ(AAᵀ)⁻¹A`, the orthogonal projector onto `ker A`.
pub fn kernel_projector(a: &DMatrix<f64>) -> Result<Projector> {
    kernel_projector_labeled(a, "matrix")
}

pub(crate) fn kernel_projector_labeled(a: &DMatrix<f64>, label: &str) -> Result<Projector> {
    let rs = RowSpace::new(a, label)?;
    Ok(Projector {
        matrix: rs.kernel_projector_matrix(),
        source: a.clone(),
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum InitMode {
    /// `Aᵀ(AAᵀ)⁻¹ b`.
    #[default]
    MinNorm,
    /// Minimum-norm solution plus `P v` for a seeded uniform `v ∈ [−1, 1]ⁿ`.
    MinNormPlusKernel { seed: u64 },
}

/// A point satisfying `A y = b`.
pub fn feasible_init(a: &DMatrix<f64>, b: &DVector<f64>, mode: InitMode) -> Result<DVector<f64>> {
    ensure_finite_vector(b, "right-hand side")?;
    if b.len() != a.nrows() {
        return Err(Error::Dimension(format!(
            "b has length {} but A has {} rows",
            b.len(),
            a.nrows()
        )));
    }
    let rs = RowSpace::new(a, "matrix")?;
    let y = rs.min_norm_solution(b)?;
    match mode {
        InitMode::MinNorm => Ok(y),
        InitMode::MinNormPlusKernel { seed } => {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let v = DVector::from_fn(a.ncols(), |_, _| rng.random_range(-1.0..1.0));
            let p = rs.kernel_projector_matrix();
            Ok(y + p * v)
        }
    }
}

/// The agents' blocks `(A_i, b_i)`; the stacked `A` has full row rank.
#[derive(Clone, Debug)]
pub struct PartitionedSystem {
    n: usize,
    blocks: Vec<(DMatrix<f64>, DVector<f64>)>,
}

impl PartitionedSystem {
    pub fn new(blocks: Vec<(DMatrix<f64>, DVector<f64>)>) -> Result<Self> {
        let Some((first, _)) = blocks.first() else {
            return Err(Error::InvalidArgument(
                "system needs at least one agent".into(),
            ));
        };
        let n = first.ncols();
        if n == 0 {
            return Err(Error::InvalidArgument(
                "solution dimension must be positive".into(),
            ));
        }
        for (i, (a, b)) in blocks.iter().enumerate() {
            if a.ncols() != n {
                return Err(Error::Dimension(format!(
                    "block {} has {} columns, expected {n}",
                    i + 1,
                    a.ncols()
                )));
            }
            if a.nrows() == 0 {
                return Err(Error::Dimension(format!("block {} has no rows", i + 1)));
            }
            if b.len() != a.nrows() {
                return Err(Error::Dimension(format!(
                    "block {}: b has length {} but A has {} rows",
                    i + 1,
                    b.len(),
                    a.nrows()
                )));
            }
            ensure_finite_matrix(a, &format!("A_{}", i + 1))?;
            ensure_finite_vector(b, &format!("b_{}", i + 1))?;
        }
        let system = Self { n, blocks };
        if !has_full_row_rank(&system.stacked_a(), DEFAULT_RANK_TOL)? {
            return Err(Error::RankDeficient(
                "stacked A does not have full row rank".into(),
            ));
        }
        Ok(system)
    }

    /// Uniform `[0, 1)` entries from a seeded generator; redraws until the
    /// stacked matrix has full row rank.
    pub fn random(seed: u64, m: usize, n: usize, rows_per_agent: usize) -> Result<Self> {
        if m == 0 || n == 0 || rows_per_agent == 0 {
            return Err(Error::InvalidArgument(
                "random system needs m, n, n_i >= 1".into(),
            ));
        }
        if m * rows_per_agent > n {
            return Err(Error::InvalidArgument(format!(
                "m * n_i = {} exceeds n = {n}; stacked A cannot have full row rank",
                m * rows_per_agent
            )));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for _ in 0..100 {
            let blocks: Vec<_> = (0..m)
                .map(|_| {
                    let a = DMatrix::from_fn(rows_per_agent, n, |_, _| rng.random::<f64>());
                    let b = DVector::from_fn(rows_per_agent, |_, _| rng.random::<f64>());
                    (a, b)
                })
                .collect();
            match Self::new(blocks) {
                Ok(s) => return Ok(s),
                Err(Error::RankDeficient(_)) => continue,
                Err(e) => return Err(e),
            }
        }
        Err(Error::RankDeficient(
            "could not draw a full-row-rank system".into(),
        ))
    }

    pub fn m(&self) -> usize {
        self.blocks.len()
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn rows(&self) -> usize {
        self.blocks.iter().map(|(a, _)| a.nrows()).sum()
    }

    pub fn a_block(&self, i: usize) -> &DMatrix<f64> {
        &self.blocks[i].0
    }

    pub fn b_block(&self, i: usize) -> &DVector<f64> {
        &self.blocks[i].1
    }

    pub fn blocks(&self) -> &[(DMatrix<f64>, DVector<f64>)] {
        &self.blocks
    }

    pub fn stacked_a(&self) -> DMatrix<f64> {
        let mut a = DMatrix::zeros(self.rows(), self.n);
        let mut row = 0;
        for (ai, _) in &self.blocks {
            a.view_mut((row, 0), (ai.nrows(), self.n)).copy_from(ai);
            row += ai.nrows();
        }
        a
    }

    pub fn stacked_b(&self) -> DVector<f64> {
        DVector::from_iterator(
            self.rows(),
            self.blocks.iter().flat_map(|(_, b)| b.iter().copied()),
        )
    }

    /// `P_i` for every block; errors name the first rank-deficient block.
    pub fn projectors(&self) -> Result<Vec<Projector>> {
        self.blocks
            .iter()
            .enumerate()
            .map(|(i, (a, _))| kernel_projector_labeled(a, &format!("block A_{}", i + 1)))
            .collect()
    }

    pub(crate) fn row_spaces(&self) -> Result<Vec<RowSpace>> {
        self.blocks
            .iter()
            .enumerate()
            .map(|(i, (a, _))| RowSpace::new(a, &format!("block A_{}", i + 1)))
            .collect()
    }
}

/// Block-diagonal `P̄ = diag{P_i}` and `H̄ = H ⊗ I_n`.
pub fn stack_and_expand(
    system: &PartitionedSystem,
    graph: &Network,
) -> Result<(DMatrix<f64>, DMatrix<f64>)> {
    if graph.m() != system.m() {
        return Err(Error::Dimension(format!(
            "network has {} nodes but the system has {} agents",
            graph.m(),
            system.m()
        )));
    }
    let n = system.n();
    let mn = system.m() * n;
    let mut p_bar = DMatrix::zeros(mn, mn);
    for (i, p) in system.projectors()?.iter().enumerate() {
        p_bar.view_mut((i * n, i * n), (n, n)).copy_from(p.matrix());
    }
    Ok((p_bar, graph.expanded_incidence(n)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use nalgebra::dmatrix;

    #[test]
    fn full_row_rank_examples() {
        assert!(has_full_row_rank(&DMatrix::identity(2, 2), 1e-10).unwrap());
        assert!(!has_full_row_rank(&dmatrix![1.0, 2.0; 2.0, 4.0], 1e-10).unwrap());
        assert!(!has_full_row_rank(&dmatrix![1.0; 2.0], 1e-10).unwrap());
    }

    #[test]
    fn rank_rejects_non_finite() {
        let a = dmatrix![1.0, f64::NAN];
        assert!(matches!(
            has_full_row_rank(&a, 1e-10),
            Err(Error::NonFinite(_))
        ));
    }

    #[test]
    fn projector_closed_forms() {
        let p = kernel_projector(&dmatrix![1.0, 0.0]).unwrap();
        assert_abs_diff_eq!(p.matrix(), &dmatrix![0.0, 0.0; 0.0, 1.0], epsilon = 1e-15);

        let p = kernel_projector(&DMatrix::identity(2, 2)).unwrap();
        assert_abs_diff_eq!(p.matrix(), &DMatrix::zeros(2, 2), epsilon = 1e-15);

        let p = kernel_projector(&dmatrix![1.0, 1.0]).unwrap();
        assert_abs_diff_eq!(p.matrix(), &dmatrix![0.5, -0.5; -0.5, 0.5], epsilon = 1e-15);
        assert!(p.certify().passes(1e-10));
    }

    #[test]
    fn projector_rejects_rank_deficient() {
        let err = kernel_projector(&dmatrix![1.0, 2.0; 2.0, 4.0]).unwrap_err();
        assert!(matches!(err, Error::RankDeficient(_)));
    }

    #[test]
    fn min_norm_init_examples() {
        let y = feasible_init(
            &DMatrix::identity(2, 2),
            &DVector::from_vec(vec![3.0, -4.0]),
            InitMode::MinNorm,
        )
        .unwrap();
        assert_abs_diff_eq!(y, DVector::from_vec(vec![3.0, -4.0]), epsilon = 1e-14);

        let y = feasible_init(
            &dmatrix![2.0, 1.0],
            &DVector::from_vec(vec![2.0]),
            InitMode::MinNorm,
        )
        .unwrap();
        assert_abs_diff_eq!(y, DVector::from_vec(vec![0.8, 0.4]), epsilon = 1e-14);
    }

    #[test]
    fn kernel_init_stays_feasible_and_moves() {
        let a = dmatrix![2.0, 1.0, 0.5];
        let b = DVector::from_vec(vec![1.0]);
        let y0 = feasible_init(&a, &b, InitMode::MinNorm).unwrap();
        let y1 = feasible_init(&a, &b, InitMode::MinNormPlusKernel { seed: 7 }).unwrap();
        assert!((&a * &y1 - &b).amax() <= 1e-12);
        assert!((&y1 - &y0).amax() > 1e-3);
        let y2 = feasible_init(&a, &b, InitMode::MinNormPlusKernel { seed: 7 }).unwrap();
        assert_eq!(y1, y2);
    }

    #[test]
    fn init_dimension_mismatch() {
        let err = feasible_init(
            &dmatrix![1.0, 0.0],
            &DVector::from_vec(vec![1.0, 2.0]),
            InitMode::MinNorm,
        )
        .unwrap_err();
        assert!(matches!(err, Error::Dimension(_)));
    }

    #[test]
    fn system_rejects_duplicate_rows() {
        let blocks = vec![
            (dmatrix![1.0, 2.0], DVector::from_vec(vec![1.0])),
            (dmatrix![2.0, 4.0], DVector::from_vec(vec![2.0])),
        ];
        assert!(matches!(
            PartitionedSystem::new(blocks),
            Err(Error::RankDeficient(_))
        ));
    }

    #[test]
    fn stacking_single_agent_and_scalar_path() {
        let sys = PartitionedSystem::new(vec![(dmatrix![1.0, 0.0], DVector::from_vec(vec![1.0]))])
            .unwrap();
        let g = Network::new(1, vec![]).unwrap();
        let (p_bar, h_bar) = stack_and_expand(&sys, &g).unwrap();
        assert_eq!(p_bar, sys.projectors().unwrap()[0].matrix().clone());
        assert_eq!(h_bar.shape(), (2, 0));

        // n = 1: the Kronecker expansion is the incidence matrix itself
        let path = Network::path(2);
        assert_eq!(path.expanded_incidence(1), path.incidence_matrix());
    }

    #[test]
    fn stacking_node_count_mismatch() {
        let sys = PartitionedSystem::new(vec![(dmatrix![1.0, 0.0], DVector::from_vec(vec![1.0]))])
            .unwrap();
        let g = Network::path(2);
        assert!(matches!(
            stack_and_expand(&sys, &g),
            Err(Error::Dimension(_))
        ));
    }

    #[test]
    fn random_system_is_reproducible() {
        let a = PartitionedSystem::random(3, 3, 8, 2).unwrap();
        let b = PartitionedSystem::random(3, 3, 8, 2).unwrap();
        assert_eq!(a.stacked_a(), b.stacked_a());
        assert!(a.stacked_a().iter().all(|v| (0.0..1.0).contains(v)));
    }
}
