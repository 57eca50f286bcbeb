//! Box-constrained convex quadratic programs
//!
//! ```text
//! minimize ½ sᵀ Q s − cᵀ s   subject to   lo ≤ s ≤ hi
//! ```
//!
//! with `Q` symmetric positive semidefinite. The solver is a primal
//! active-set method: variables sit either on a bound or in the free set,
//! and each iteration minimizes over the free set. When the reduced Hessian
//! is singular and the gradient has a component in its kernel, the method
//! follows that zero-curvature descent direction to the next bound. Reduced
//! factorizations are cached by free set, which makes warm-started re-solves
//! with a slowly varying `c` cost a single cached solve.

use std::collections::HashMap;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};

const EIGEN_CUTOFF: f64 = 1e-11;
const CACHE_LIMIT: usize = 512;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum Slot {
    Free,
    Lower,
    Upper,
    Pinned,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct QpOutcome {
    pub iterations: usize,
    /// `false` when the iteration cap was hit; `s` is then feasible but may
    /// be slightly suboptimal.
    pub converged: bool,
}

/// Pseudo-inverse of a reduced Hessian from its eigendecomposition.
struct Reduced {
    vecs: DMatrix<f64>,
    inv_vals: DVector<f64>,
}

impl Reduced {
    fn new(q_ff: DMatrix<f64>) -> Self {
        let k = q_ff.nrows();
        let eig = q_ff.symmetric_eigen();
        let lambda_max = eig.eigenvalues.iter().fold(0.0_f64, |a, &v| a.max(v));
        let keep: Vec<usize> = if lambda_max > 0.0 {
            (0..k)
                .filter(|&i| eig.eigenvalues[i] > EIGEN_CUTOFF * lambda_max)
                .collect()
        } else {
            Vec::new()
        };
        let vecs = eig.eigenvectors.select_columns(keep.iter());
        let inv_vals =
            DVector::from_iterator(keep.len(), keep.iter().map(|&i| 1.0 / eig.eigenvalues[i]));
        Self { vecs, inv_vals }
    }

    /// Minimum-norm minimizer `p` of `½ pᵀQp + gᵀp` over the range of `Q`,
    /// and the component of `g` in `ker Q`.
    fn solve(&self, g: &DVector<f64>) -> (DVector<f64>, DVector<f64>) {
        let coeff = self.vecs.tr_mul(g);
        let in_range = &self.vecs * &coeff;
        let scaled = coeff.component_mul(&self.inv_vals);
        let p = -(&self.vecs * scaled);
        (p, g - in_range)
    }
}

pub struct BoxQp {
    q: DMatrix<f64>,
    scale: f64,
    cache: HashMap<Vec<usize>, Arc<Reduced>>,
}

impl BoxQp {
    /// `q` must be square, symmetric and positive semidefinite.
    pub fn new(q: DMatrix<f64>) -> Self {
        assert!(q.is_square(), "QP Hessian must be square");
        let scale = q.iter().fold(0.0_f64, |a, v| a.max(v.abs()));
        Self {
            q,
            scale,
            cache: HashMap::new(),
        }
    }

    pub fn dim(&self) -> usize {
        self.q.nrows()
    }

    pub fn hessian(&self) -> &DMatrix<f64> {
        &self.q
    }

    pub fn objective(&self, c: &DVector<f64>, s: &DVector<f64>) -> f64 {
        0.5 * s.dot(&(&self.q * s)) - c.dot(s)
    }

    fn reduced(&mut self, free: &[usize]) -> Arc<Reduced> {
        if let Some(r) = self.cache.get(free) {
            return Arc::clone(r);
        }
        if self.cache.len() >= CACHE_LIMIT {
            self.cache.clear();
        }
        let q_ff = DMatrix::from_fn(free.len(), free.len(), |a, b| self.q[(free[a], free[b])]);
        let r = Arc::new(Reduced::new(q_ff));
        self.cache.insert(free.to_vec(), Arc::clone(&r));
        r
    }

    /// Solves in place, warm-starting from `s` (clipped into the box).
    pub fn solve(
        &mut self,
        c: &DVector<f64>,
        lo: &DVector<f64>,
        hi: &DVector<f64>,
        s: &mut DVector<f64>,
    ) -> QpOutcome {
        let d = self.dim();
        assert_eq!(c.len(), d);
        assert_eq!(lo.len(), d);
        assert_eq!(hi.len(), d);
        assert_eq!(s.len(), d);

        let mut slots = vec![Slot::Free; d];
        for i in 0..d {
            debug_assert!(lo[i] <= hi[i]);
            if hi[i] <= lo[i] {
                s[i] = lo[i];
                slots[i] = Slot::Pinned;
            } else if s[i] <= lo[i] {
                s[i] = lo[i];
                slots[i] = Slot::Lower;
            } else if s[i] >= hi[i] {
                s[i] = hi[i];
                slots[i] = Slot::Upper;
            }
        }

        let box_scale = (0..d).fold(0.0_f64, |a, i| a.max(lo[i].abs()).max(hi[i].abs()));
        let tol = 1e-11 * (1.0 + c.amax() + self.scale * box_scale * d as f64);
        let max_iter = 10 * d + 100;
        let mut stationary_on_free = false;

        for iter in 0..max_iter {
            let g = &self.q * &*s - c;

            if !stationary_on_free {
                let free: Vec<usize> = (0..d).filter(|&i| slots[i] == Slot::Free).collect();
                if !free.is_empty() {
                    let red = self.reduced(&free);
                    let g_f = DVector::from_iterator(free.len(), free.iter().map(|&i| g[i]));
                    let (p, null_part) = red.solve(&g_f);
                    let (dir, newton) = if null_part.amax() > tol {
                        (-null_part, false)
                    } else {
                        (p, true)
                    };
                    if dir.amax() > 0.0 {
                        let mut alpha = if newton { 1.0 } else { f64::INFINITY };
                        let mut block: Option<(usize, Slot)> = None;
                        for (k, &i) in free.iter().enumerate() {
                            let pk = dir[k];
                            if pk > 0.0 {
                                let a = (hi[i] - s[i]) / pk;
                                if a < alpha {
                                    alpha = a;
                                    block = Some((i, Slot::Upper));
                                }
                            } else if pk < 0.0 {
                                let a = (lo[i] - s[i]) / pk;
                                if a < alpha {
                                    alpha = a;
                                    block = Some((i, Slot::Lower));
                                }
                            }
                        }
                        if !alpha.is_finite() {
                            // unreachable for a bounded box with a nonzero direction
                            return QpOutcome {
                                iterations: iter + 1,
                                converged: false,
                            };
                        }
                        let alpha = alpha.max(0.0);
                        for (k, &i) in free.iter().enumerate() {
                            s[i] = (s[i] + alpha * dir[k]).clamp(lo[i], hi[i]);
                        }
                        match block {
                            Some((i, slot)) => {
                                s[i] = if slot == Slot::Upper { hi[i] } else { lo[i] };
                                slots[i] = slot;
                            }
                            None => stationary_on_free = true,
                        }
                        continue;
                    }
                }
            }

            // Free set is optimal; check the sign of the bound multipliers.
            let mut worst: Option<(usize, f64)> = None;
            for i in 0..d {
                let violation = match slots[i] {
                    Slot::Lower => -g[i],
                    Slot::Upper => g[i],
                    _ => continue,
                };
                if violation > tol && worst.is_none_or(|(_, v)| violation > v) {
                    worst = Some((i, violation));
                }
            }
            match worst {
                None => {
                    return QpOutcome {
                        iterations: iter + 1,
                        converged: true,
                    }
                }
                Some((i, _)) => {
                    slots[i] = Slot::Free;
                    stationary_on_free = false;
                }
            }
        }
        QpOutcome {
            iterations: max_iter,
            converged: false,
        }
    }
}
