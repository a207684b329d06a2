//! Quadratic programs over the input and their semidefinite relaxations.
//!
//! A program `max uᵀQu + 2qᵀu + q0` under quadratic constraints is lifted to
//! the matrix variable `X = [[U, u], [uᵀ, 1]]` (or just `U` when the problem
//! has no linear terms), dropping the rank condition `U = uuᵀ`. The resulting
//! conic problem bounds the program from above; when the data satisfy the
//! nonnegativity conditions checked by [`check_exactness`] the bound is tight
//! and `√diag(U*)` is a global maximizer.

use std::time::Duration;

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result, Violation};
use crate::infomatrix::QuadraticObjective;
use crate::linalg::sorted_eigen;
use crate::sdp::{self, ConicDocument, ConicProblem, ConicRow, Sense, SolveStatus, SolverOptions, SymSparse};

/// Absolute per-constraint tolerance when certifying a candidate.
pub const CERTIFY_TOL: f64 = 1e-7;
/// Extracted points violating a constraint by more than this are treated as
/// an internal inconsistency.
pub const EXTRACT_TOL: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq)]
pub enum ConstraintSpec {
    /// `uᵀRu + 2rᵀu + r0 <= 0`
    Quadratic {
        r_mat: DMatrix<f64>,
        r_vec: DVector<f64>,
        r0: f64,
    },
    /// `|u_t| <= c_t`
    Amplitude { c: DVector<f64> },
    /// `0 <= u_t <= c_t`
    Box { c: DVector<f64> },
    /// `||u||_2 <= c`
    L2Budget { c: f64 },
    /// `u >= 0`, `Σ u_t <= b`
    L1Budget { b: f64 },
    /// `aᵀu <= b` with `u >= 0`
    LinearNonneg { a: DVector<f64>, b: f64 },
}

impl ConstraintSpec {
    pub fn amplitude(d: usize, c: f64) -> Self {
        ConstraintSpec::Amplitude {
            c: DVector::from_element(d, c),
        }
    }

    pub fn boxed(d: usize, c: f64) -> Self {
        ConstraintSpec::Box {
            c: DVector::from_element(d, c),
        }
    }

    pub fn kind(&self) -> &'static str {
        match self {
            ConstraintSpec::Quadratic { .. } => "quadratic",
            ConstraintSpec::Amplitude { .. } => "amplitude",
            ConstraintSpec::Box { .. } => "box",
            ConstraintSpec::L2Budget { .. } => "l2 budget",
            ConstraintSpec::L1Budget { .. } => "l1 budget",
            ConstraintSpec::LinearNonneg { .. } => "linear",
        }
    }

    fn validate(&self, d: usize, idx: usize) -> Result<()> {
        let bad = |msg: String| Err(Error::invalid(format!("constraint #{idx} ({}): {msg}", self.kind())));
        let positive_vec = |c: &DVector<f64>| c.len() == d && c.iter().all(|x| x.is_finite() && *x > 0.0);
        match self {
            ConstraintSpec::Quadratic { r_mat, r_vec, r0 } => {
                if r_mat.shape() != (d, d) || r_vec.len() != d {
                    return bad(format!("expected R {d}x{d} and r of length {d}"));
                }
                if r_mat.iter().chain(r_vec.iter()).any(|x| !x.is_finite()) || !r0.is_finite() {
                    return bad("non-finite data".into());
                }
                if crate::linalg::asymmetry(r_mat) > 1e-12 {
                    return bad("R is not symmetric".into());
                }
            }
            ConstraintSpec::Amplitude { c } | ConstraintSpec::Box { c } => {
                if !positive_vec(c) {
                    return bad(format!("bounds must be {d} positive finite numbers"));
                }
            }
            ConstraintSpec::L2Budget { c } => {
                if !(c.is_finite() && *c > 0.0) {
                    return bad(format!("budget must be positive, got {c}"));
                }
            }
            ConstraintSpec::L1Budget { b } => {
                if !(b.is_finite() && *b > 0.0) {
                    return bad(format!("budget must be positive, got {b}"));
                }
            }
            ConstraintSpec::LinearNonneg { a, b } => {
                if a.len() != d || a.iter().any(|x| !x.is_finite() || *x < 0.0) {
                    return bad(format!("a must be {d} nonnegative finite numbers"));
                }
                if !(b.is_finite() && *b >= 0.0) {
                    return bad(format!("b must be nonnegative, got {b}"));
                }
            }
        }
        Ok(())
    }

    /// Whether the constraint only involves `u ∘ u` through a convex set.
    pub fn is_diagonal_representable(&self) -> bool {
        match self {
            ConstraintSpec::Amplitude { .. } | ConstraintSpec::L2Budget { .. } => true,
            ConstraintSpec::Quadratic { r_mat, r_vec, .. } => {
                r_vec.iter().all(|x| *x == 0.0)
                    && (0..r_mat.nrows())
                        .all(|i| (0..r_mat.ncols()).all(|j| i == j || r_mat[(i, j)] == 0.0))
            }
            _ => false,
        }
    }

    /// Scalar constraint values `g_k(u)`, feasible when all are `<= 0`.
    fn values(&self, u: &DVector<f64>) -> Vec<(String, f64)> {
        let nonneg = |out: &mut Vec<(String, f64)>| {
            for (t, x) in u.iter().enumerate() {
                out.push((format!("u[{t}] >= 0"), -x));
            }
        };
        let mut out = Vec::new();
        match self {
            ConstraintSpec::Quadratic { r_mat, r_vec, r0 } => {
                let v = u.dot(&(r_mat * u)) + 2.0 * r_vec.dot(u) + r0;
                out.push(("uᵀRu + 2rᵀu + r0 <= 0".into(), v));
            }
            ConstraintSpec::Amplitude { c } => {
                for t in 0..u.len() {
                    out.push((format!("|u[{t}]| <= {}", c[t]), u[t].abs() - c[t]));
                }
            }
            ConstraintSpec::Box { c } => {
                for t in 0..u.len() {
                    out.push((format!("0 <= u[{t}] <= {}", c[t]), (u[t] - c[t]).max(-u[t])));
                }
            }
            ConstraintSpec::L2Budget { c } => {
                out.push((format!("||u||_2 <= {c}"), u.norm() - c));
            }
            ConstraintSpec::L1Budget { b } => {
                nonneg(&mut out);
                out.push((format!("||u||_1 <= {b}"), u.lp_norm(1) - b));
            }
            ConstraintSpec::LinearNonneg { a, b } => {
                nonneg(&mut out);
                out.push((format!("aᵀu <= {b}"), a.dot(u) - b));
            }
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct QuadraticProgram {
    objective: QuadraticObjective,
    constraints: Vec<ConstraintSpec>,
}

impl QuadraticProgram {
    pub fn new(objective: QuadraticObjective, constraints: Vec<ConstraintSpec>) -> Result<Self> {
        let d = objective.dim();
        if constraints.is_empty() {
            return Err(Error::invalid(
                "a quadratic program needs at least one constraint (the unconstrained maximum is unbounded)",
            ));
        }
        for (i, c) in constraints.iter().enumerate() {
            c.validate(d, i)?;
        }
        let has_box = constraints.iter().any(|c| matches!(c, ConstraintSpec::Box { .. }));
        if let Some(c) = constraints
            .iter()
            .find(|c| matches!(c, ConstraintSpec::L1Budget { .. } | ConstraintSpec::LinearNonneg { .. }))
        {
            if !has_box {
                return Err(Error::InvalidCombination(format!(
                    "{} constraint requires nonnegative inputs; add a box constraint",
                    c.kind()
                )));
            }
        }
        Ok(Self {
            objective,
            constraints,
        })
    }

    pub fn dim(&self) -> usize {
        self.objective.dim()
    }

    pub fn objective(&self) -> &QuadraticObjective {
        &self.objective
    }

    pub fn constraints(&self) -> &[ConstraintSpec] {
        &self.constraints
    }

    pub fn evaluate(&self, u: &[f64]) -> Result<f64> {
        self.objective.evaluate(u)
    }

    /// Same program with the objective scaled by `s`.
    pub fn with_scaled_objective(&self, s: f64) -> Self {
        Self {
            objective: self.objective.scaled(s),
            constraints: self.constraints.clone(),
        }
    }

    /// Every scalar constraint violated by more than `tol`.
    pub fn violations(&self, u: &[f64], tol: f64) -> Result<Vec<Violation>> {
        if u.len() != self.dim() {
            return Err(Error::invalid(format!(
                "candidate length: expected {}, got {}",
                self.dim(),
                u.len()
            )));
        }
        if u.iter().any(|x| !x.is_finite()) {
            return Err(Error::invalid("candidate has non-finite entries"));
        }
        let u = DVector::from_column_slice(u);
        let mut out = Vec::new();
        for (i, c) in self.constraints.iter().enumerate() {
            for (description, g) in c.values(&u) {
                if g > tol {
                    out.push(Violation {
                        constraint: i,
                        description,
                        magnitude: g,
                    });
                }
            }
        }
        Ok(out)
    }

    pub fn is_feasible(&self, u: &[f64], tol: f64) -> Result<bool> {
        Ok(self.violations(u, tol)?.is_empty())
    }
}

/// The conic relaxation together with the layout of its matrix variable.
#[derive(Debug, Clone, PartialEq)]
pub struct LiftedProblem {
    homogeneous: bool,
    d: usize,
    problem: ConicProblem,
}

impl LiftedProblem {
    /// No border row: the variable is `U` alone.
    pub fn is_homogeneous(&self) -> bool {
        self.homogeneous
    }

    pub fn input_dim(&self) -> usize {
        self.d
    }

    /// Side length of the matrix variable (`d` or `d + 1`).
    pub fn dim(&self) -> usize {
        self.problem.dim()
    }

    pub fn num_constraints(&self) -> usize {
        self.problem.num_constraints()
    }

    pub fn problem(&self) -> &ConicProblem {
        &self.problem
    }

    pub fn to_document(&self) -> ConicDocument {
        self.problem.to_document()
    }

    /// The `U` block of a lifted point.
    pub fn u_block(&self, x: &DMatrix<f64>) -> DMatrix<f64> {
        x.view((0, 0), (self.d, self.d)).into_owned()
    }

    /// The border column `u`, absent for homogeneous lifts.
    pub fn border(&self, x: &DMatrix<f64>) -> Option<DVector<f64>> {
        (!self.homogeneous).then(|| x.view((0, self.d), (self.d, 1)).column(0).into_owned())
    }

    /// `[[uuᵀ, u], [uᵀ, 1]]` (or `uuᵀ`): the image of a point of the program.
    pub fn lift_point(&self, u: &[f64]) -> DMatrix<f64> {
        let mut v = u.to_vec();
        if !self.homogeneous {
            v.push(1.0);
        }
        let v = DVector::from_vec(v);
        &v * v.transpose()
    }
}

fn unit(m: usize, i: usize, j: usize, v: f64) -> SymSparse {
    SymSparse::new(m).with(i, j, v)
}

fn u_block_matrix(m: usize, d: usize, f: impl Fn(usize, usize) -> f64) -> SymSparse {
    let mut s = SymSparse::new(m);
    for j in 0..d {
        for i in 0..=j {
            let v = f(i, j);
            if v != 0.0 {
                s.set(i, j, v);
            }
        }
    }
    s
}

fn homogeneous_lift(qp: &QuadraticProgram) -> bool {
    let obj = qp.objective();
    obj.q_vec().iter().all(|x| *x == 0.0)
        && obj.q0() == 0.0
        && qp.constraints.iter().all(ConstraintSpec::is_diagonal_representable)
}

/// Lifts the program to its semidefinite relaxation.
pub fn relax(qp: &QuadraticProgram) -> Result<LiftedProblem> {
    let d = qp.dim();
    let homogeneous = homogeneous_lift(qp);
    let m = if homogeneous { d } else { d + 1 };
    let obj = qp.objective();

    let mut cost = DMatrix::zeros(m, m);
    cost.view_mut((0, 0), (d, d)).copy_from(obj.q_mat());
    if !homogeneous {
        for t in 0..d {
            cost[(t, d)] = obj.q_vec()[t];
            cost[(d, t)] = obj.q_vec()[t];
        }
        cost[(d, d)] = obj.q0();
    }

    let le = |f: SymSparse, rhs: f64| ConicRow {
        f,
        sense: Sense::Le,
        rhs,
    };
    let mut rows = Vec::new();
    let mut pairs_added = false;
    for c in &qp.constraints {
        match c {
            ConstraintSpec::Quadratic { r_mat, r_vec, r0 } => {
                let mut f = u_block_matrix(m, d, |i, j| r_mat[(i, j)]);
                if homogeneous {
                    rows.push(le(f, -r0));
                } else {
                    for t in 0..d {
                        if r_vec[t] != 0.0 {
                            f.set(t, d, r_vec[t]);
                        }
                    }
                    if *r0 != 0.0 {
                        f.set(d, d, *r0);
                    }
                    rows.push(le(f, 0.0));
                }
            }
            ConstraintSpec::Amplitude { c } => {
                for t in 0..d {
                    rows.push(le(unit(m, t, t, 1.0), c[t] * c[t]));
                }
            }
            ConstraintSpec::Box { c } => {
                // U_tt <= c_t u_t, the bound u_t² <= c_t u_t of 0 <= u_t <= c_t
                for t in 0..d {
                    let f = unit(m, t, t, 1.0).with(t, d, -0.5 * c[t]);
                    rows.push(le(f, 0.0));
                }
                if !pairs_added {
                    for t in 0..d {
                        for s in 0..=t {
                            rows.push(ConicRow {
                                f: unit(m, s, t, 1.0),
                                sense: Sense::Ge,
                                rhs: 0.0,
                            });
                        }
                    }
                    pairs_added = true;
                }
            }
            ConstraintSpec::L2Budget { c } => {
                rows.push(le(u_block_matrix(m, d, |i, j| if i == j { 1.0 } else { 0.0 }), c * c));
            }
            ConstraintSpec::L1Budget { b } => {
                rows.push(le(u_block_matrix(m, d, |_, _| 1.0), b * b));
            }
            ConstraintSpec::LinearNonneg { a, b } => {
                rows.push(le(u_block_matrix(m, d, |i, j| a[i] * a[j]), b * b));
            }
        }
    }
    if !homogeneous {
        rows.push(ConicRow {
            f: unit(m, d, d, 1.0),
            sense: Sense::Eq,
            rhs: 1.0,
        });
    }
    Ok(LiftedProblem {
        homogeneous,
        d,
        problem: ConicProblem::new(cost, rows)?,
    })
}

/// Sufficient conditions for the relaxation to be tight with `√diag(U*)`
/// optimal: nonnegative off-diagonal `Q`, nonnegative `q`, and constraints
/// that see `u` only through `u ∘ u`.
pub fn check_exactness(qp: &QuadraticProgram) -> bool {
    let obj = qp.objective();
    let q = obj.q_mat();
    let qmax = crate::linalg::max_abs(q);
    let off_ok = (0..q.nrows()).all(|i| (0..q.ncols()).all(|j| i == j || q[(i, j)] >= -1e-12 * qmax));
    let qv = obj.q_vec();
    let qv_scale = qv.amax().max(1.0);
    let lin_ok = qv.iter().all(|x| *x >= -1e-12 * qv_scale);
    off_ok && lin_ok && qp.constraints.iter().all(ConstraintSpec::is_diagonal_representable)
}

/// `λ2/λ1` of a PSD matrix (0 for a zero or 1×1 matrix).
pub fn eigen_ratio(x: &DMatrix<f64>) -> f64 {
    let (vals, _) = sorted_eigen(&crate::linalg::symmetrize(x));
    if vals.len() < 2 || vals[0] <= 0.0 {
        return 0.0;
    }
    vals[1].max(0.0) / vals[0]
}

/// Recovers a point of the program from a relaxation solution, or `None` if
/// the solution is not (numerically) rank one and the exactness conditions
/// do not apply.
pub fn extract(
    qp: &QuadraticProgram,
    lifted: &LiftedProblem,
    x: &DMatrix<f64>,
    rank_tol: f64,
) -> Result<Option<DVector<f64>>> {
    if x.shape() != (lifted.dim(), lifted.dim()) {
        return Err(Error::invalid(format!(
            "lifted solution is {}x{}, expected {1}x{1}",
            x.nrows(),
            lifted.dim()
        )));
    }
    let d = lifted.input_dim();
    let u = if check_exactness(qp) {
        DVector::from_iterator(d, (0..d).map(|t| x[(t, t)].max(0.0).sqrt()))
    } else if eigen_ratio(x) <= rank_tol {
        match lifted.border(x) {
            Some(b) => {
                let pin = x[(d, d)];
                if pin.abs() < 1e-12 {
                    return Ok(None);
                }
                b / pin
            }
            None => {
                let (vals, vecs) = sorted_eigen(&crate::linalg::symmetrize(x));
                let mut v = vecs.column(0).into_owned() * vals[0].max(0.0).sqrt();
                if v.sum() < 0.0 {
                    v = -v;
                }
                v
            }
        }
    } else {
        return Ok(None);
    };
    let viol = qp.violations(u.as_slice(), EXTRACT_TOL)?;
    if !viol.is_empty() {
        let detail = viol.iter().map(|v| v.to_string()).collect::<Vec<_>>().join("; ");
        return Err(Error::Internal(format!("extracted input is infeasible: {detail}")));
    }
    Ok(Some(u))
}

#[derive(Debug, Clone, PartialEq)]
pub struct DesignOptions {
    pub solver: SolverOptions,
    /// Largest `λ2/λ1` accepted as rank one.
    pub rank_tol: f64,
}

impl Default for DesignOptions {
    fn default() -> Self {
        Self {
            solver: SolverOptions::default(),
            rank_tol: 1e-6,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolverSummary {
    pub status: SolveStatus,
    pub iterations: usize,
    pub wall_time: Duration,
    pub primal_obj: f64,
    pub dual_obj: f64,
    pub rel_gap: f64,
    pub primal_resid: f64,
    pub dual_resid: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DesignResult {
    /// Upper bound on the program's optimum (the relaxation's dual objective).
    pub relaxation_value: f64,
    pub x_star: Option<DMatrix<f64>>,
    pub extracted_u: Option<DVector<f64>>,
    /// A global maximizer was recovered from the relaxation.
    pub exact: bool,
    /// `λ2/λ1` of `x_star`.
    pub eigen_ratio: Option<f64>,
    /// The point whose value is `candidate_value`: the extracted input, or
    /// the certified candidate.
    pub candidate_u: Option<DVector<f64>>,
    pub candidate_value: Option<f64>,
    /// `candidate_value / relaxation_value`
    pub ratio: Option<f64>,
    pub solver: Option<SolverSummary>,
    pub lifted_dim: usize,
    pub lifted_constraints: usize,
}

impl DesignResult {
    /// `value=<v> exact=<flag> ratio=<r|n/a>`
    pub fn summary_line(&self) -> String {
        let ratio = match self.ratio {
            Some(r) => format!("{r:.6}"),
            None => "n/a".into(),
        };
        format!("value={:.6e} exact={} ratio={ratio}", self.relaxation_value, self.exact)
    }
}

/// Relaxes, solves and tries to recover a global maximizer. A non-optimal
/// solver status is an [`Error::Solver`].
pub fn design(qp: &QuadraticProgram, opts: &DesignOptions) -> Result<DesignResult> {
    let lifted = relax(qp)?;
    let sol = sdp::solve(lifted.problem(), &opts.solver)?;
    if sol.status != SolveStatus::Optimal {
        return Err(Error::Solver(format!(
            "status {} after {} iterations (rel_gap {:.2e}, primal_resid {:.2e}, dual_resid {:.2e}){}",
            sol.status,
            sol.iterations,
            sol.rel_gap,
            sol.primal_resid,
            sol.dual_resid,
            sol.message.as_deref().map(|m| format!(": {m}")).unwrap_or_default()
        )));
    }
    let extracted = extract(qp, &lifted, &sol.x, opts.rank_tol)?;
    let candidate_value = match &extracted {
        Some(u) => Some(qp.evaluate(u.as_slice())?),
        None => None,
    };
    let relaxation_value = sol.dual_obj;
    Ok(DesignResult {
        relaxation_value,
        eigen_ratio: Some(eigen_ratio(&sol.x)),
        exact: extracted.is_some(),
        ratio: candidate_value.and_then(|v| ratio(v, relaxation_value)),
        candidate_value,
        candidate_u: extracted.clone(),
        extracted_u: extracted,
        solver: Some(SolverSummary {
            status: sol.status,
            iterations: sol.iterations,
            wall_time: sol.wall_time,
            primal_obj: sol.primal_obj,
            dual_obj: sol.dual_obj,
            rel_gap: sol.rel_gap,
            primal_resid: sol.primal_resid,
            dual_resid: sol.dual_resid,
        }),
        x_star: Some(sol.x),
        lifted_dim: lifted.dim(),
        lifted_constraints: lifted.num_constraints(),
    })
}

fn ratio(candidate: f64, bound: f64) -> Option<f64> {
    (bound > 0.0).then(|| candidate / bound)
}

/// Bounds the optimality gap of a feasible candidate: the global optimum lies
/// in `[evaluate(candidate), relaxation_value]`.
pub fn certify(qp: &QuadraticProgram, candidate: &[f64], relaxation_value: f64) -> Result<DesignResult> {
    if !relaxation_value.is_finite() {
        return Err(Error::invalid("relaxation value must be finite"));
    }
    let viol = qp.violations(candidate, CERTIFY_TOL)?;
    if !viol.is_empty() {
        return Err(Error::Infeasible(viol));
    }
    let value = qp.evaluate(candidate)?;
    Ok(DesignResult {
        relaxation_value,
        x_star: None,
        extracted_u: None,
        exact: false,
        eigen_ratio: None,
        candidate_u: Some(DVector::from_column_slice(candidate)),
        candidate_value: Some(value),
        ratio: ratio(value, relaxation_value),
        solver: None,
        lifted_dim: 0,
        lifted_constraints: 0,
    })
}
