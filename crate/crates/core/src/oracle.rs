//! Independent minimum l1-norm solutions of `Ax = b`.
//!
//! [`min_l1_lp`] solves `min Σ(x⁺ + x⁻)` subject to `A(x⁺ − x⁻) = b`,
//! `x± ≥ 0` with a two-phase dense tableau simplex under Bland's rule. The
//! final basis is re-solved directly for accuracy and yields the dual
//! certificate `φ = Aᵀw` with `‖φ‖_∞ ≤ 1` and `φᵀx* = ‖x*‖₁`.
//!
//! [`vertex_enum_oracle`] enumerates every basic solution of small systems.

use itertools::Itertools;
use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::linalg::{
    ensure_finite_matrix, ensure_finite_vector, feasible_init, numerical_rank, InitMode,
    DEFAULT_RANK_TOL,
};
use crate::{Error, Result};

const PIVOT_TOL: f64 = 1e-11;
const COST_TOL: f64 = 1e-9;
const PIVOT_LIMIT: usize = 10_000;
const VERTEX_ENUM_MAX_COLS: usize = 20;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Uniqueness {
    Yes,
    No,
    Unknown,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OracleMethod {
    Simplex,
    VertexEnum,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct L1Certificate {
    pub x_star: Vec<f64>,
    pub optimal_value: f64,
    pub unique: Uniqueness,
    pub method: OracleMethod,
    /// `φ = Aᵀw` from the simplex duals.
    pub dual: Option<Vec<f64>>,
}

/// Residuals of the optimality certificate.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct DualCheck {
    /// `max(‖φ‖_∞ − 1, 0)`.
    pub box_violation: f64,
    /// `|φᵀx* − ‖x*‖₁|`.
    pub complementarity: f64,
    /// Distance of `φ` from the row space of `A`.
    pub range_residual: f64,
}

impl DualCheck {
    pub fn passes(&self, tol: f64) -> bool {
        self.box_violation <= tol && self.complementarity <= tol && self.range_residual <= tol
    }
}

impl L1Certificate {
    pub fn x(&self) -> DVector<f64> {
        DVector::from_column_slice(&self.x_star)
    }

    /// Checks the dual certificate against `A`; `None` without duals.
    pub fn check_dual(&self, a: &DMatrix<f64>) -> Option<DualCheck> {
        let phi = DVector::from_column_slice(self.dual.as_ref()?);
        let x = self.x();
        // least-squares fit of φ by Aᵀw
        let at = a.transpose();
        let w = at.clone().svd(true, true).solve(&phi, 1e-12).ok()?;
        Some(DualCheck {
            box_violation: (phi.amax() - 1.0).max(0.0),
            complementarity: (phi.dot(&x) - x.lp_norm(1)).abs(),
            range_residual: (at * w - &phi).amax(),
        })
    }
}

fn check_inputs(a: &DMatrix<f64>, b: &DVector<f64>) -> Result<()> {
    ensure_finite_matrix(a, "A")?;
    ensure_finite_vector(b, "b")?;
    if a.nrows() == 0 || a.ncols() == 0 {
        return Err(Error::InvalidArgument("empty matrix".into()));
    }
    if b.len() != a.nrows() {
        return Err(Error::Dimension(format!(
            "b has length {} but A has {} rows",
            b.len(),
            a.nrows()
        )));
    }
    Ok(())
}

/// `Aᵀ(AAᵀ)⁻¹b`.
pub fn any_solution(a: &DMatrix<f64>, b: &DVector<f64>) -> Result<DVector<f64>> {
    feasible_init(a, b, InitMode::MinNorm)
}

struct Tableau {
    /// `rows × (cols + 1)`; the last column is the right-hand side.
    t: DMatrix<f64>,
    /// Objective row, same width; holds reduced costs and `−value`.
    obj: DVector<f64>,
    basis: Vec<usize>,
    pivots: usize,
}

impl Tableau {
    fn pivot(&mut self, row: usize, col: usize) {
        let width = self.t.ncols();
        let p = self.t[(row, col)];
        for j in 0..width {
            self.t[(row, j)] /= p;
        }
        for i in 0..self.t.nrows() {
            if i != row {
                let f = self.t[(i, col)];
                if f != 0.0 {
                    for j in 0..width {
                        let v = self.t[(row, j)];
                        self.t[(i, j)] -= f * v;
                    }
                }
            }
        }
        let f = self.obj[col];
        if f != 0.0 {
            for j in 0..width {
                self.obj[j] -= f * self.t[(row, j)];
            }
        }
        self.basis[row] = col;
        self.pivots += 1;
    }

    /// Bland's rule over columns `< allowed`; `Ok(())` at optimality.
    fn optimize(&mut self, allowed: usize) -> Result<()> {
        let rhs = self.t.ncols() - 1;
        loop {
            if self.pivots > PIVOT_LIMIT {
                return Err(Error::Internal("simplex pivot limit exceeded".into()));
            }
            let Some(col) = (0..allowed).find(|&j| self.obj[j] < -COST_TOL) else {
                return Ok(());
            };
            let mut best: Option<(usize, f64)> = None;
            for i in 0..self.t.nrows() {
                let a = self.t[(i, col)];
                if a > PIVOT_TOL {
                    let ratio = self.t[(i, rhs)] / a;
                    best = match best {
                        Some((bi, br))
                            if ratio > br + 1e-14
                                || (ratio >= br - 1e-14 && self.basis[i] > self.basis[bi]) =>
                        {
                            Some((bi, br))
                        }
                        _ => Some((i, ratio)),
                    };
                }
            }
            let Some((row, _)) = best else {
                return Err(Error::Internal("l1 program reported unbounded".into()));
            };
            self.pivot(row, col);
        }
    }
}

/// Runs both phases on `b`; returns the final structural basis and the
/// rows that were kept (redundant rows are dropped).
fn simplex_basis(a: &DMatrix<f64>, b: &DVector<f64>) -> Result<(Vec<usize>, Vec<usize>, Vec<f64>)> {
    let (r, n) = a.shape();
    let structural = 2 * n;
    let width = structural + r + 1;
    let mut t = DMatrix::zeros(r, width);
    for i in 0..r {
        let sign = if b[i] < 0.0 { -1.0 } else { 1.0 };
        for j in 0..n {
            t[(i, j)] = sign * a[(i, j)];
            t[(i, n + j)] = -sign * a[(i, j)];
        }
        t[(i, structural + i)] = 1.0;
        t[(i, width - 1)] = sign * b[i];
    }
    // phase I objective: Σ artificials, expressed in nonbasic columns
    let mut obj = DVector::zeros(width);
    for i in 0..r {
        for j in 0..width {
            if !(structural..structural + r).contains(&j) {
                obj[j] -= t[(i, j)];
            }
        }
    }
    let mut tab = Tableau {
        t,
        obj,
        basis: (structural..structural + r).collect(),
        pivots: 0,
    };
    tab.optimize(structural)?;
    let infeasibility = -tab.obj[width - 1];
    let scale = 1.0 + b.amax();
    if infeasibility > 1e-9 * scale {
        return Err(Error::Infeasible(format!(
            "Ax = b has no solution (phase I residual {infeasibility:.3e})"
        )));
    }

    // drive zero-level artificials out of the basis
    let mut keep: Vec<usize> = (0..r).collect();
    for i in 0..r {
        if tab.basis[i] >= structural {
            if let Some(j) = (0..structural).find(|&j| tab.t[(i, j)].abs() > 1e-9) {
                tab.pivot(i, j);
            } else {
                keep.retain(|&k| k != i);
            }
        }
    }
    let rows: Vec<usize> = keep.clone();
    let t = tab.t.select_rows(rows.iter());
    let basis: Vec<usize> = rows.iter().map(|&i| tab.basis[i]).collect();

    // phase II objective: c = 1 on structural columns
    let mut obj = DVector::zeros(width);
    for j in 0..structural {
        obj[j] = 1.0;
    }
    for (i, &bj) in basis.iter().enumerate() {
        let f = obj[bj];
        for j in 0..width {
            obj[j] -= f * t[(i, j)];
        }
    }
    let mut tab = Tableau {
        t,
        obj,
        basis,
        pivots: tab.pivots,
    };
    tab.optimize(structural)?;
    let reduced = (0..structural).map(|j| tab.obj[j]).collect();
    Ok((tab.basis, keep, reduced))
}

pub fn min_l1_lp(a: &DMatrix<f64>, b: &DVector<f64>) -> Result<L1Certificate> {
    check_inputs(a, b)?;
    let (r, n) = a.shape();
    let outcome = match simplex_basis(a, b) {
        Err(Error::Internal(msg)) if msg.contains("pivot limit") => {
            // stalled on a degenerate vertex; perturb b and keep the basis
            let bumped = DVector::from_fn(r, |i, _| {
                b[i] + 1e-9 * (1.0 + b.amax()) * (i + 1) as f64 / r as f64
            });
            simplex_basis(a, &bumped)?
        }
        other => other?,
    };
    let (basis, rows, reduced) = outcome;

    // re-solve the final basis: A_B x_B = b and A_Bᵀ w = 1
    let k = basis.len();
    let col = |j: usize, i: usize| if j < n { a[(i, j)] } else { -a[(i, j - n)] };
    let a_b = DMatrix::from_fn(k, k, |ii, jj| col(basis[jj], rows[ii]));
    let b_rows = DVector::from_fn(k, |ii, _| b[rows[ii]]);
    let lu = a_b.clone().full_piv_lu();
    let x_b = lu
        .solve(&b_rows)
        .ok_or_else(|| Error::Internal("final simplex basis is singular".into()))?;
    let w = a_b
        .transpose()
        .full_piv_lu()
        .solve(&DVector::from_element(k, 1.0))
        .ok_or_else(|| Error::Internal("final simplex basis is singular".into()))?;

    let mut x = DVector::zeros(n);
    for (&j, &v) in basis.iter().zip(x_b.iter()) {
        if j < n {
            x[j] += v;
        } else {
            x[j - n] -= v;
        }
    }
    let mut w_full = DVector::zeros(r);
    for (ii, &i) in rows.iter().enumerate() {
        w_full[i] = w[ii];
    }
    let phi = a.transpose() * w_full;

    let unique = if (0..2 * n)
        .filter(|j| !basis.contains(j))
        .all(|j| reduced[j] > COST_TOL)
    {
        Uniqueness::Yes
    } else {
        Uniqueness::Unknown
    };
    Ok(L1Certificate {
        optimal_value: x.lp_norm(1),
        x_star: x.iter().copied().collect(),
        unique,
        method: OracleMethod::Simplex,
        dual: Some(phi.iter().copied().collect()),
    })
}

/// Exhaustive search over basic solutions; `A` may have at most 20 columns.
pub fn vertex_enum_oracle(a: &DMatrix<f64>, b: &DVector<f64>) -> Result<L1Certificate> {
    check_inputs(a, b)?;
    let n = a.ncols();
    if n > VERTEX_ENUM_MAX_COLS {
        return Err(Error::TooLarge(format!(
            "vertex enumeration is limited to {VERTEX_ENUM_MAX_COLS} columns, got {n}"
        )));
    }
    let rank = numerical_rank(a, DEFAULT_RANK_TOL)?;
    let scale = 1.0 + b.amax();
    let mut optima: Vec<DVector<f64>> = Vec::new();
    let mut best = f64::INFINITY;
    for support in (0..n).combinations(rank) {
        let a_s = a.select_columns(support.iter());
        if numerical_rank(&a_s.transpose(), DEFAULT_RANK_TOL)? < rank {
            continue;
        }
        let Ok(x_s) = a_s.clone().svd(true, true).solve(b, 1e-13) else {
            continue;
        };
        if (&a_s * &x_s - b).amax() > 1e-9 * scale {
            continue;
        }
        let mut x = DVector::zeros(n);
        for (&j, &v) in support.iter().zip(x_s.iter()) {
            x[j] = v;
        }
        let value = x.lp_norm(1);
        if value < best - 1e-9 * scale {
            best = value;
            optima = vec![x];
        } else if value <= best + 1e-9 * scale {
            best = best.min(value);
            if optima.iter().all(|o| (o - &x).amax() > 1e-9 * scale) {
                optima.push(x);
            }
        }
    }
    if optima.is_empty() {
        return Err(Error::Infeasible("Ax = b has no basic solution".into()));
    }
    let unique = if optima.len() == 1 {
        Uniqueness::Yes
    } else {
        Uniqueness::No
    };
    let chosen = optima
        .into_iter()
        .min_by(|p, q| {
            p.iter()
                .zip(q.iter())
                .map(|(u, v)| u.total_cmp(v))
                .find(|o| o.is_ne())
                .unwrap_or(std::cmp::Ordering::Equal)
        })
        .expect("nonempty");
    Ok(L1Certificate {
        optimal_value: chosen.lp_norm(1),
        x_star: chosen.iter().copied().collect(),
        unique,
        method: OracleMethod::VertexEnum,
        dual: None,
    })
}
