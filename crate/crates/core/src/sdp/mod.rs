//! Dense semidefinite programs of the form
//!
//! ```text
//! maximize   tr(C X)
//! subject to tr(F_i X)  (<=, >=, =)  b_i,   X ⪰ 0
//! ```
//!
//! solved by a primal-dual interior-point method ([`solve`]). [`residuals`]
//! recomputes the optimality certificates of a returned solution from the
//! problem data alone.

mod ipm;

pub use ipm::solve;

use std::fmt;
use std::time::Duration;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{from_rows, max_abs, min_eigenvalue, to_rows};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Sense {
    #[serde(rename = "<=")]
    Le,
    #[serde(rename = ">=")]
    Ge,
    #[serde(rename = "=")]
    Eq,
}

impl fmt::Display for Sense {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Sense::Le => "<=",
            Sense::Ge => ">=",
            Sense::Eq => "=",
        })
    }
}

/// Symmetric matrix stored as its upper-triangle nonzeros `(i, j, v)`, `i <= j`.
#[derive(Debug, Clone, PartialEq)]
pub struct SymSparse {
    dim: usize,
    entries: Vec<(usize, usize, f64)>,
}

impl SymSparse {
    pub fn new(dim: usize) -> Self {
        Self {
            dim,
            entries: Vec::new(),
        }
    }

    /// Sets entries `(i, j)` and `(j, i)` to `v`, replacing any previous value.
    pub fn set(&mut self, i: usize, j: usize, v: f64) {
        let (a, b) = if i <= j { (i, j) } else { (j, i) };
        assert!(b < self.dim, "entry ({a}, {b}) outside {0}x{0}", self.dim);
        match self.entries.iter_mut().find(|e| e.0 == a && e.1 == b) {
            Some(e) => e.2 = v,
            None => self.entries.push((a, b, v)),
        }
    }

    pub fn with(mut self, i: usize, j: usize, v: f64) -> Self {
        self.set(i, j, v);
        self
    }

    pub fn from_dense(m: &DMatrix<f64>) -> Result<Self> {
        if !m.is_square() {
            return Err(Error::invalid("constraint matrix must be square"));
        }
        if m.iter().any(|x| !x.is_finite()) {
            return Err(Error::invalid("constraint matrix has non-finite entries"));
        }
        if crate::linalg::asymmetry(m) > 1e-12 {
            return Err(Error::invalid("constraint matrix is not symmetric"));
        }
        let n = m.nrows();
        let mut entries = Vec::new();
        for j in 0..n {
            for i in 0..=j {
                let v = 0.5 * (m[(i, j)] + m[(j, i)]);
                if v != 0.0 {
                    entries.push((i, j, v));
                }
            }
        }
        Ok(Self { dim: n, entries })
    }

    pub fn to_dense(&self) -> DMatrix<f64> {
        let mut m = DMatrix::zeros(self.dim, self.dim);
        for &(i, j, v) in &self.entries {
            m[(i, j)] = v;
            m[(j, i)] = v;
        }
        m
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn entries(&self) -> &[(usize, usize, f64)] {
        &self.entries
    }

    pub fn nnz(&self) -> usize {
        self.entries.len()
    }

    /// `tr(F G)` for a square `G` (symmetry of `G` not assumed).
    pub fn dot(&self, g: &DMatrix<f64>) -> f64 {
        self.entries
            .iter()
            .map(|&(i, j, v)| {
                if i == j {
                    v * g[(i, i)]
                } else {
                    v * (g[(i, j)] + g[(j, i)])
                }
            })
            .sum()
    }

    /// `acc += s F`
    pub fn add_scaled_to(&self, acc: &mut DMatrix<f64>, s: f64) {
        for &(i, j, v) in &self.entries {
            acc[(i, j)] += s * v;
            if i != j {
                acc[(j, i)] += s * v;
            }
        }
    }

    pub fn frob_norm(&self) -> f64 {
        self.entries
            .iter()
            .map(|&(i, j, v)| if i == j { v * v } else { 2.0 * v * v })
            .sum::<f64>()
            .sqrt()
    }

    /// Sum of absolute values of all entries of the full symmetric matrix.
    fn abs_sum(&self) -> f64 {
        self.entries
            .iter()
            .map(|&(i, j, v)| if i == j { v.abs() } else { 2.0 * v.abs() })
            .sum()
    }

    pub fn scaled(&self, s: f64) -> Self {
        Self {
            dim: self.dim,
            entries: self.entries.iter().map(|&(i, j, v)| (i, j, v * s)).collect(),
        }
    }

    /// `W F W` for symmetric `W`.
    pub fn sandwich(&self, w: &DMatrix<f64>) -> DMatrix<f64> {
        let n = self.dim;
        if self.entries.len() >= n {
            let f = self.to_dense();
            return w * f * w;
        }
        let mut out = DMatrix::zeros(n, n);
        for &(i, j, v) in &self.entries {
            let wi = w.column(i);
            let wj = w.column(j);
            if i == j {
                out.ger(v, &wi, &wi, 1.0);
            } else {
                out.ger(v, &wi, &wj, 1.0);
                out.ger(v, &wj, &wi, 1.0);
            }
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConicRow {
    pub f: SymSparse,
    pub sense: Sense,
    pub rhs: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConicProblem {
    dim: usize,
    cost: DMatrix<f64>,
    rows: Vec<ConicRow>,
}

impl ConicProblem {
    pub fn new(cost: DMatrix<f64>, rows: Vec<ConicRow>) -> Result<Self> {
        if !cost.is_square() || cost.nrows() == 0 {
            return Err(Error::invalid(format!(
                "cost must be a non-empty square matrix, got {}x{}",
                cost.nrows(),
                cost.ncols()
            )));
        }
        if cost.iter().any(|x| !x.is_finite()) {
            return Err(Error::invalid("cost has non-finite entries"));
        }
        if crate::linalg::asymmetry(&cost) > 1e-12 {
            return Err(Error::invalid("cost is not symmetric"));
        }
        let dim = cost.nrows();
        for (k, row) in rows.iter().enumerate() {
            if row.f.dim() != dim {
                return Err(Error::invalid(format!(
                    "constraint {k} is {0}x{0} but the variable is {dim}x{dim}",
                    row.f.dim()
                )));
            }
            if !row.rhs.is_finite() || row.f.entries().iter().any(|e| !e.2.is_finite()) {
                return Err(Error::invalid(format!("constraint {k} has non-finite data")));
            }
        }
        let cost = crate::linalg::symmetrize(&cost);
        Ok(Self { dim, cost, rows })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn cost(&self) -> &DMatrix<f64> {
        &self.cost
    }

    pub fn rows(&self) -> &[ConicRow] {
        &self.rows
    }

    pub fn num_constraints(&self) -> usize {
        self.rows.len()
    }

    /// Same problem with the cost multiplied by `s`.
    pub fn with_scaled_cost(&self, s: f64) -> Self {
        Self {
            dim: self.dim,
            cost: &self.cost * s,
            rows: self.rows.clone(),
        }
    }

    pub fn to_document(&self) -> ConicDocument {
        ConicDocument {
            dim: self.dim,
            cost: to_rows(&self.cost),
            constraints: self
                .rows
                .iter()
                .map(|r| RowDocument {
                    f: to_rows(&r.f.to_dense()),
                    sense: r.sense,
                    rhs: r.rhs,
                })
                .collect(),
        }
    }
}

/// JSON form `{dim, cost, constraints: [{F, sense, rhs}]}` with dense
/// row-major matrices.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConicDocument {
    pub dim: usize,
    pub cost: Vec<Vec<f64>>,
    pub constraints: Vec<RowDocument>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RowDocument {
    #[serde(rename = "F")]
    pub f: Vec<Vec<f64>>,
    pub sense: Sense,
    pub rhs: f64,
}

impl ConicDocument {
    pub fn into_problem(self) -> Result<ConicProblem> {
        let cost = from_rows(&self.cost)?;
        if cost.nrows() != self.dim || cost.ncols() != self.dim {
            return Err(Error::invalid(format!(
                "conic document: dim = {} but cost is {}x{}",
                self.dim,
                cost.nrows(),
                cost.ncols()
            )));
        }
        let rows = self
            .constraints
            .into_iter()
            .enumerate()
            .map(|(k, r)| {
                let f = from_rows(&r.f)
                    .and_then(|m| SymSparse::from_dense(&m))
                    .map_err(|e| Error::invalid(format!("constraint {k}: {e}")))?;
                Ok(ConicRow {
                    f,
                    sense: r.sense,
                    rhs: r.rhs,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        ConicProblem::new(cost, rows)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolverOptions {
    pub rel_gap_tol: f64,
    pub feas_tol: f64,
    pub max_iters: usize,
    /// Fraction of the distance to the cone boundary taken per step.
    pub step_fraction: f64,
    /// Mehrotra predictor-corrector; when off, a fixed centering of 0.1 is used.
    pub predictor_corrector: bool,
    /// Worker threads for forming the Schur complement; 1 keeps everything on
    /// the calling thread.
    pub threads: usize,
    /// Print one line per iteration to stderr.
    pub verbose: bool,
}

impl Default for SolverOptions {
    fn default() -> Self {
        Self {
            rel_gap_tol: 1e-8,
            feas_tol: 1e-8,
            max_iters: 100,
            step_fraction: 0.98,
            predictor_corrector: true,
            threads: 1,
            verbose: false,
        }
    }
}

impl SolverOptions {
    pub fn validate(&self) -> Result<()> {
        let in_unit = |x: f64| x > 0.0 && x < 1.0;
        if !in_unit(self.rel_gap_tol) || !in_unit(self.feas_tol) {
            return Err(Error::invalid("solver tolerances must lie in (0, 1)"));
        }
        if self.max_iters == 0 {
            return Err(Error::invalid("max_iters must be at least 1"));
        }
        if !in_unit(self.step_fraction) {
            return Err(Error::invalid("step_fraction must lie in (0, 1)"));
        }
        if self.threads == 0 {
            return Err(Error::invalid("threads must be at least 1"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum SolveStatus {
    Optimal,
    MaxIters,
    PrimalInfeasible,
    /// The maximization is unbounded.
    DualInfeasible,
    NumericalFailure,
}

impl fmt::Display for SolveStatus {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            SolveStatus::Optimal => "Optimal",
            SolveStatus::MaxIters => "MaxIters",
            SolveStatus::PrimalInfeasible => "PrimalInfeasible",
            SolveStatus::DualInfeasible => "DualInfeasible",
            SolveStatus::NumericalFailure => "NumericalFailure",
        };
        f.write_str(s)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct IterationLog {
    pub iter: usize,
    pub rel_gap: f64,
    pub primal_resid: f64,
    pub dual_resid: f64,
    pub step_primal: f64,
    pub step_dual: f64,
}

#[derive(Debug, Clone)]
pub struct ConicSolution {
    pub x: DMatrix<f64>,
    /// Multipliers of the maximization's dual: `y_i >= 0` on `<=` rows,
    /// `y_i <= 0` on `>=` rows, free on equalities.
    pub y: DVector<f64>,
    /// `|b_i - tr(F_i X)|` slack per row (zero for equalities).
    pub slacks: DVector<f64>,
    /// Dual slack matrix `Σ y_i F_i - C`.
    pub z: DMatrix<f64>,
    pub primal_obj: f64,
    pub dual_obj: f64,
    pub rel_gap: f64,
    pub primal_resid: f64,
    pub dual_resid: f64,
    pub status: SolveStatus,
    pub iterations: usize,
    pub wall_time: Duration,
    pub history: Vec<IterationLog>,
    /// Human-readable note on why a non-optimal status was returned.
    pub message: Option<String>,
}

/// Certificates recomputed from `(X, y)` and the problem data.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Residuals {
    /// Largest absolute constraint violation of `X`, including any negative
    /// eigenvalue of `X`.
    pub primal_resid: f64,
    /// Largest negative eigenvalue of `Σ y_i F_i - C` and multiplier sign
    /// violation, relative to `γ = max|C|` (1 for a zero cost).
    pub dual_resid: f64,
    /// `|dual_obj - primal_obj| / (γ + |primal_obj| + |dual_obj|)`
    pub rel_gap: f64,
    pub primal_obj: f64,
    pub dual_obj: f64,
}

pub fn residuals(p: &ConicProblem, x: &DMatrix<f64>, y: &DVector<f64>) -> Result<Residuals> {
    if x.shape() != (p.dim, p.dim) || y.len() != p.rows.len() {
        return Err(Error::invalid(format!(
            "solution shapes: X is {}x{}, y has length {}; problem is {}x{} with {} rows",
            x.nrows(),
            x.ncols(),
            y.len(),
            p.dim,
            p.dim,
            p.rows.len()
        )));
    }
    let mut primal_resid = (-min_eigenvalue(&crate::linalg::symmetrize(x))).max(0.0);
    for row in &p.rows {
        let r = row.f.dot(x) - row.rhs;
        let viol = match row.sense {
            Sense::Le => r.max(0.0),
            Sense::Ge => (-r).max(0.0),
            Sense::Eq => r.abs(),
        };
        primal_resid = primal_resid.max(viol);
    }

    let cmax = max_abs(&p.cost);
    let cscale = if cmax > 0.0 { cmax } else { 1.0 };
    let mut z = -p.cost.clone();
    let mut sign_viol = 0.0f64;
    for (row, &yi) in p.rows.iter().zip(y.iter()) {
        row.f.add_scaled_to(&mut z, yi);
        let wrong = match row.sense {
            Sense::Le => (-yi).max(0.0),
            Sense::Ge => yi.max(0.0),
            Sense::Eq => 0.0,
        };
        sign_viol = sign_viol.max(wrong * row.f.abs_sum());
    }
    let dual_resid = (-min_eigenvalue(&z)).max(0.0).max(sign_viol) / cscale;

    let primal_obj = crate::linalg::frob_dot(&p.cost, x);
    let dual_obj: f64 = p.rows.iter().zip(y.iter()).map(|(r, yi)| r.rhs * yi).sum();
    let rel_gap = (dual_obj - primal_obj).abs() / (cscale + primal_obj.abs() + dual_obj.abs());
    Ok(Residuals {
        primal_resid,
        dual_resid,
        rel_gap,
        primal_obj,
        dual_obj,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn correlation_problem() -> ConicProblem {
        let cost = DMatrix::from_row_slice(2, 2, &[0.0, 1.0, 1.0, 0.0]);
        let rows = vec![
            ConicRow {
                f: SymSparse::new(2).with(0, 0, 1.0),
                sense: Sense::Eq,
                rhs: 1.0,
            },
            ConicRow {
                f: SymSparse::new(2).with(1, 1, 1.0),
                sense: Sense::Eq,
                rhs: 1.0,
            },
        ];
        ConicProblem::new(cost, rows).unwrap()
    }

    #[test]
    fn exact_correlation_optimum_has_zero_residuals() {
        let p = correlation_problem();
        let x = DMatrix::from_element(2, 2, 1.0);
        // Z = diag(y) - C = [[1,-1],[-1,1]] ⪰ 0 with y = (1, 1)
        let y = DVector::from_vec(vec![1.0, 1.0]);
        let r = residuals(&p, &x, &y).unwrap();
        assert!(r.primal_resid <= 1e-14);
        assert!(r.dual_resid <= 1e-14);
        assert!(r.rel_gap <= 1e-14);
        assert_eq!(r.primal_obj, 2.0);
        assert_eq!(r.dual_obj, 2.0);
    }

    #[test]
    fn perturbed_primal_shows_residual() {
        let p = correlation_problem();
        let mut x = DMatrix::from_element(2, 2, 1.0);
        x[(0, 0)] += 1e-3;
        let x = crate::linalg::symmetrize(&x);
        let r = residuals(&p, &x, &DVector::from_vec(vec![1.0, 1.0])).unwrap();
        assert!(r.primal_resid >= 9e-4);
    }

    #[test]
    fn wrong_sign_multiplier_is_dual_infeasible() {
        let cost = DMatrix::from_row_slice(1, 1, &[1.0]);
        let row = ConicRow {
            f: SymSparse::new(1).with(0, 0, 1.0),
            sense: Sense::Le,
            rhs: 1.0,
        };
        let p = ConicProblem::new(cost, vec![row]).unwrap();
        let x = DMatrix::from_element(1, 1, 1.0);
        let r = residuals(&p, &x, &DVector::from_vec(vec![-1.0])).unwrap();
        assert!(r.dual_resid > 0.5);
    }

    #[test]
    fn rejects_asymmetric_cost() {
        let cost = DMatrix::from_row_slice(2, 2, &[0.0, 1.0, 0.0, 0.0]);
        assert!(ConicProblem::new(cost, vec![]).is_err());
    }

    #[test]
    fn sparse_sandwich_matches_dense() {
        let w = DMatrix::from_row_slice(3, 3, &[2.0, 0.5, 0.1, 0.5, 1.0, -0.3, 0.1, -0.3, 1.5]);
        let f = SymSparse::new(3).with(0, 2, 0.7).with(1, 1, -2.0);
        let dense = &w * f.to_dense() * &w;
        let sparse = f.sandwich(&w);
        assert!((dense - sparse).abs().max() < 1e-14);
        let g = DMatrix::from_fn(3, 3, |i, j| (i * 3 + j) as f64);
        assert!((f.dot(&g) - crate::linalg::frob_dot(&f.to_dense(), &g)).abs() < 1e-13);
    }

    #[test]
    fn document_round_trip() {
        let p = correlation_problem();
        let text = serde_json::to_string(&p.to_document()).unwrap();
        assert!(text.contains("\"sense\":\"=\""));
        let back: ConicDocument = serde_json::from_str(&text).unwrap();
        assert_eq!(back.into_problem().unwrap(), p);
    }
}
