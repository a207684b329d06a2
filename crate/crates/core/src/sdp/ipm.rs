//! Infeasible-start primal-dual path following with Nesterov-Todd scaling and
//! Mehrotra predictor-corrector steps.
//!
//! Internally the problem is rewritten as a minimization
//!
//! ```text
//! min <C̃, X>   s.t.  <F̃_i, X> + σ_i s_i = b̃_i,   X ⪰ 0, s ≥ 0
//! ```
//!
//! with `C̃ = -C/γ`, `F̃_i = F_i/ρ_i`, `b̃_i = b_i/ρ_i`, `σ_i = +1` for `<=`,
//! `-1` for `>=` and no slack on equalities. `γ = max|C|` and `ρ_i = ||F_i||_F`.

use std::time::Instant;

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;

use super::{
    residuals, ConicProblem, ConicSolution, IterationLog, Residuals, Sense, SolveStatus,
    SolverOptions, SymSparse,
};
use crate::error::Result;
use crate::linalg::{max_abs, symmetrize};

const BLOWUP: f64 = 1e10;

struct Scaled {
    m: usize,
    f: Vec<SymSparse>,
    b: DVector<f64>,
    c: DMatrix<f64>,
    /// Slack sign per row, 0 on equalities.
    sigma: Vec<f64>,
    rho: Vec<f64>,
    gamma: f64,
}

impl Scaled {
    fn new(p: &ConicProblem) -> Self {
        let cmax = max_abs(p.cost());
        let gamma = if cmax > 0.0 { cmax } else { 1.0 };
        let mut f = Vec::with_capacity(p.rows().len());
        let mut b = DVector::zeros(p.rows().len());
        let mut sigma = Vec::with_capacity(p.rows().len());
        let mut rho = Vec::with_capacity(p.rows().len());
        for (i, row) in p.rows().iter().enumerate() {
            let nrm = row.f.frob_norm();
            let r = if nrm > 0.0 { nrm } else { 1.0 };
            f.push(row.f.scaled(1.0 / r));
            b[i] = row.rhs / r;
            rho.push(r);
            sigma.push(match row.sense {
                Sense::Le => 1.0,
                Sense::Ge => -1.0,
                Sense::Eq => 0.0,
            });
        }
        Self {
            m: p.dim(),
            f,
            b,
            c: -p.cost() / gamma,
            sigma,
            rho,
            gamma,
        }
    }

    fn rows(&self) -> usize {
        self.f.len()
    }

    fn adjoint(&self, y: &DVector<f64>) -> DMatrix<f64> {
        let mut out = DMatrix::zeros(self.m, self.m);
        for (fi, &yi) in self.f.iter().zip(y.iter()) {
            if yi != 0.0 {
                fi.add_scaled_to(&mut out, yi);
            }
        }
        out
    }

    /// Multipliers of the original maximization.
    fn external_y(&self, y: &DVector<f64>) -> DVector<f64> {
        DVector::from_iterator(
            y.len(),
            y.iter().zip(&self.rho).map(|(yi, r)| -self.gamma * yi / r),
        )
    }
}

struct Iterate {
    x: DMatrix<f64>,
    s: DVector<f64>,
    y: DVector<f64>,
    z_mat: DMatrix<f64>,
    z: DVector<f64>,
}

struct Direction {
    dx: DMatrix<f64>,
    ds: DVector<f64>,
    dy: DVector<f64>,
    dz_mat: DMatrix<f64>,
    dz: DVector<f64>,
}

/// Quantities fixed for one iteration.
struct Linearization<'a> {
    sc: &'a Scaled,
    w: DMatrix<f64>,
    g: DMatrix<f64>,
    g_inv: DMatrix<f64>,
    v: DVector<f64>,
    schur: nalgebra::Cholesky<f64, nalgebra::Dyn>,
    rp: DVector<f64>,
    rd_mat: DMatrix<f64>,
    rd: DVector<f64>,
}

impl Linearization<'_> {
    /// Solves the Newton system for complementarity targets `rc_mat` (cone)
    /// and `rc` (slacks).
    fn solve(&self, it: &Iterate, rc_mat: &DMatrix<f64>, rc: &DVector<f64>) -> Direction {
        let sc = self.sc;
        let t = rc_mat - &self.w * &self.rd_mat * &self.w;
        let mut rhs = DVector::zeros(sc.rows());
        for i in 0..sc.rows() {
            let mut v = self.rp[i] - sc.f[i].dot(&t);
            if sc.sigma[i] != 0.0 {
                v -= sc.sigma[i] * (rc[i] / it.z[i] - it.s[i] / it.z[i] * self.rd[i]);
            }
            rhs[i] = v;
        }
        let dy = self.schur.solve(&rhs);
        let dz_mat = &self.rd_mat - sc.adjoint(&dy);
        let dx = symmetrize(&(rc_mat - &self.w * &dz_mat * &self.w));
        let mut dz = DVector::zeros(sc.rows());
        let mut ds = DVector::zeros(sc.rows());
        for i in 0..sc.rows() {
            if sc.sigma[i] != 0.0 {
                dz[i] = self.rd[i] - sc.sigma[i] * dy[i];
                ds[i] = (rc[i] - it.s[i] * dz[i]) / it.z[i];
            }
        }
        Direction {
            dx,
            ds,
            dy,
            dz_mat,
            dz,
        }
    }

    /// `G H G^T` where `V H + H V = 2 R`.
    fn lift(&self, r: &DMatrix<f64>) -> DMatrix<f64> {
        let h = DMatrix::from_fn(r.nrows(), r.ncols(), |i, j| {
            2.0 * r[(i, j)] / (self.v[i] + self.v[j])
        });
        symmetrize(&(&self.g * h * self.g.transpose()))
    }
}

fn cholesky_l(m: &DMatrix<f64>) -> Option<DMatrix<f64>> {
    m.clone().cholesky().map(|c| c.l())
}

/// Largest `α` with `M + α D ⪰ 0`, given `L = chol(M)`.
fn cone_step(l: &DMatrix<f64>, d: &DMatrix<f64>) -> f64 {
    let a = l.solve_lower_triangular(d).expect("triangular factor is nonsingular");
    let b = l
        .solve_lower_triangular(&a.transpose())
        .expect("triangular factor is nonsingular");
    let lmin = crate::linalg::min_eigenvalue(&symmetrize(&b));
    if lmin >= 0.0 {
        f64::INFINITY
    } else {
        -1.0 / lmin
    }
}

fn orthant_step(v: &DVector<f64>, dv: &DVector<f64>, active: &[f64]) -> f64 {
    let mut a = f64::INFINITY;
    for i in 0..v.len() {
        if active[i] != 0.0 && dv[i] < 0.0 {
            a = a.min(-v[i] / dv[i]);
        }
    }
    a
}

fn schur_matrix(sc: &Scaled, it: &Iterate, w: &DMatrix<f64>, threads: usize) -> DMatrix<f64> {
    let r = sc.rows();
    let column = |j: usize| -> Vec<f64> {
        let gj = sc.f[j].sandwich(w);
        (0..r).map(|i| sc.f[i].dot(&gj)).collect()
    };
    let cols: Vec<Vec<f64>> = if threads > 1 && r > 1 {
        match rayon::ThreadPoolBuilder::new().num_threads(threads).build() {
            Ok(pool) => pool.install(|| (0..r).into_par_iter().map(column).collect()),
            Err(_) => (0..r).map(column).collect(),
        }
    } else {
        (0..r).map(column).collect()
    };
    let mut m = DMatrix::from_fn(r, r, |i, j| cols[j][i]);
    m = symmetrize(&m);
    for i in 0..r {
        if sc.sigma[i] != 0.0 {
            m[(i, i)] += it.s[i] / it.z[i];
        }
    }
    m
}

fn factor_schur(m: DMatrix<f64>) -> Option<nalgebra::Cholesky<f64, nalgebra::Dyn>> {
    let r = m.nrows();
    if let Some(c) = m.clone().cholesky() {
        return Some(c);
    }
    let scale = if r == 0 { 1.0 } else { m.trace().abs() / r as f64 }.max(f64::MIN_POSITIVE);
    for delta in [1e-12, 1e-9, 1e-6] {
        let mut reg = m.clone();
        for i in 0..r {
            reg[(i, i)] += delta * scale;
        }
        if let Some(c) = reg.cholesky() {
            return Some(c);
        }
    }
    None
}

#[allow(clippy::too_many_arguments)]
fn finish(
    p: &ConicProblem,
    sc: &Scaled,
    it: &Iterate,
    status: SolveStatus,
    iterations: usize,
    start: Instant,
    history: Vec<IterationLog>,
    message: Option<String>,
) -> Result<ConicSolution> {
    let y = sc.external_y(&it.y);
    let Residuals {
        primal_resid,
        dual_resid,
        rel_gap,
        primal_obj,
        dual_obj,
    } = residuals(p, &it.x, &y)?;
    let mut z = -p.cost().clone();
    for (row, &yi) in p.rows().iter().zip(y.iter()) {
        row.f.add_scaled_to(&mut z, yi);
    }
    let slacks = DVector::from_iterator(
        p.rows().len(),
        p.rows().iter().map(|r| match r.sense {
            Sense::Eq => 0.0,
            _ => (r.rhs - r.f.dot(&it.x)).abs(),
        }),
    );
    Ok(ConicSolution {
        x: it.x.clone(),
        y,
        slacks,
        z,
        primal_obj,
        dual_obj,
        rel_gap,
        primal_resid,
        dual_resid,
        status,
        iterations,
        wall_time: start.elapsed(),
        history,
        message,
    })
}

/// Solves the semidefinite program. Errors are reserved for invalid options;
/// numerical trouble and infeasibility are reported through the status.
pub fn solve(p: &ConicProblem, opts: &SolverOptions) -> Result<ConicSolution> {
    opts.validate()?;
    let start = Instant::now();
    let sc = Scaled::new(p);
    let (m, r) = (sc.m, sc.rows());
    let n_cone = m as f64 + sc.sigma.iter().filter(|s| **s != 0.0).count() as f64;

    let tau = 1.0 + sc.b.amax();
    let zeta = 1.0 + max_abs(&sc.c);
    let mut it = Iterate {
        x: DMatrix::identity(m, m) * tau,
        s: DVector::from_iterator(r, sc.sigma.iter().map(|s| if *s != 0.0 { tau } else { 0.0 })),
        y: DVector::zeros(r),
        z_mat: DMatrix::identity(m, m) * zeta,
        z: DVector::from_iterator(r, sc.sigma.iter().map(|s| if *s != 0.0 { zeta } else { 0.0 })),
    };
    let ones_if_ineq: Vec<f64> = sc.sigma.iter().map(|s| if *s != 0.0 { 1.0 } else { 0.0 }).collect();

    let mut history = Vec::new();
    let mut stalled = 0usize;
    for iter in 0..=opts.max_iters {
        let y_ext = sc.external_y(&it.y);
        let res = residuals(p, &it.x, &y_ext)?;
        if !(res.primal_obj.is_finite() && res.dual_obj.is_finite()) {
            return finish(p, &sc, &it, SolveStatus::NumericalFailure, iter, start, history,
                Some("iterates became non-finite".into()));
        }
        if res.rel_gap <= opts.rel_gap_tol
            && res.primal_resid <= opts.feas_tol
            && res.dual_resid <= opts.feas_tol
        {
            return finish(p, &sc, &it, SolveStatus::Optimal, iter, start, history, None);
        }
        // divergence of one side with the other side nearly feasible
        let pmin = crate::linalg::frob_dot(&sc.c, &it.x);
        let dmin = sc.b.dot(&it.y);
        let xnorm = it.x.norm();
        let ynorm = it.y.amax();
        if dmin > BLOWUP && ynorm > BLOWUP && res.dual_resid < 1e-6 * ynorm {
            return finish(p, &sc, &it, SolveStatus::PrimalInfeasible, iter, start, history,
                Some(format!("dual objective diverged ({dmin:.3e} in scaled units)")));
        }
        if pmin < -BLOWUP && xnorm > BLOWUP {
            return finish(p, &sc, &it, SolveStatus::DualInfeasible, iter, start, history,
                Some(format!("primal objective diverged ({:.3e})", -pmin)));
        }
        if iter == opts.max_iters {
            break;
        }

        let Some(lx) = cholesky_l(&it.x) else {
            return finish(p, &sc, &it, SolveStatus::NumericalFailure, iter, start, history,
                Some("X lost positive definiteness".into()));
        };
        let Some(lz) = cholesky_l(&it.z_mat) else {
            return finish(p, &sc, &it, SolveStatus::NumericalFailure, iter, start, history,
                Some("Z lost positive definiteness".into()));
        };

        // Nesterov-Todd scaling point
        let s_mat = symmetrize(&(lx.transpose() * &it.z_mat * &lx));
        let eig = crate::linalg::sorted_eigen(&s_mat);
        let lam = eig.0.map(|l| l.max(f64::MIN_POSITIVE));
        let u = eig.1;
        let g = &lx * &u * DMatrix::from_diagonal(&lam.map(|l| l.powf(-0.25)));
        let lx_inv = lx
            .solve_lower_triangular(&DMatrix::identity(m, m))
            .expect("Cholesky factor is nonsingular");
        let g_inv = DMatrix::from_diagonal(&lam.map(|l| l.powf(0.25))) * u.transpose() * lx_inv;
        let w = symmetrize(&(&g * g.transpose()));
        let v = lam.map(f64::sqrt);

        let mut rp = sc.b.clone();
        for i in 0..r {
            rp[i] -= sc.f[i].dot(&it.x) + sc.sigma[i] * it.s[i];
        }
        let rd_mat = symmetrize(&(&sc.c - sc.adjoint(&it.y) - &it.z_mat));
        let rd = DVector::from_iterator(
            r,
            (0..r).map(|i| if sc.sigma[i] != 0.0 { -sc.sigma[i] * it.y[i] - it.z[i] } else { 0.0 }),
        );
        let mu = (crate::linalg::frob_dot(&it.x, &it.z_mat) + it.s.dot(&it.z)) / n_cone;

        let Some(schur) = factor_schur(schur_matrix(&sc, &it, &w, opts.threads)) else {
            return finish(p, &sc, &it, SolveStatus::NumericalFailure, iter, start, history,
                Some("Schur complement is not positive definite".into()));
        };
        let lin = Linearization {
            sc: &sc,
            w,
            g,
            g_inv,
            v,
            schur,
            rp,
            rd_mat,
            rd,
        };

        let v2 = DMatrix::from_diagonal(&lin.v.map(|x| x * x));
        let sz = it.s.component_mul(&it.z);
        let (rc_mat, rc) = if opts.predictor_corrector {
            let aff = lin.solve(&it, &(-&it.x), &(-&sz));
            let ap = (0.98 * cone_step(&lx, &aff.dx).min(orthant_step(&it.s, &aff.ds, &ones_if_ineq)))
                .min(1.0);
            let ad = (0.98
                * cone_step(&lz, &aff.dz_mat).min(orthant_step(&it.z, &aff.dz, &ones_if_ineq)))
            .min(1.0);
            let x_a = &it.x + &aff.dx * ap;
            let z_a = &it.z_mat + &aff.dz_mat * ad;
            let s_a = &it.s + &aff.ds * ap;
            let zz_a = &it.z + &aff.dz * ad;
            let mu_aff = (crate::linalg::frob_dot(&x_a, &z_a) + s_a.dot(&zz_a)) / n_cone;
            let centering = (mu_aff / mu).clamp(0.0, 1.0).powi(3);

            let dxs = &lin.g_inv * &aff.dx * lin.g_inv.transpose();
            let dzs = lin.g.transpose() * &aff.dz_mat * &lin.g;
            let cross = symmetrize(&(dxs * dzs));
            let rmat = DMatrix::identity(m, m) * (centering * mu) - &v2 - cross;
            let rc = DVector::from_iterator(
                r,
                (0..r).map(|i| {
                    if sc.sigma[i] != 0.0 {
                        centering * mu - sz[i] - aff.ds[i] * aff.dz[i]
                    } else {
                        0.0
                    }
                }),
            );
            (lin.lift(&rmat), rc)
        } else {
            let centering = 0.1;
            let rmat = DMatrix::identity(m, m) * (centering * mu) - &v2;
            let rc = DVector::from_iterator(
                r,
                (0..r).map(|i| if sc.sigma[i] != 0.0 { centering * mu - sz[i] } else { 0.0 }),
            );
            (lin.lift(&rmat), rc)
        };
        let d = lin.solve(&it, &rc_mat, &rc);

        let ap = (opts.step_fraction
            * cone_step(&lx, &d.dx).min(orthant_step(&it.s, &d.ds, &ones_if_ineq)))
        .min(1.0);
        let ad = (opts.step_fraction
            * cone_step(&lz, &d.dz_mat).min(orthant_step(&it.z, &d.dz, &ones_if_ineq)))
        .min(1.0);

        history.push(IterationLog {
            iter,
            rel_gap: res.rel_gap,
            primal_resid: res.primal_resid,
            dual_resid: res.dual_resid,
            step_primal: ap,
            step_dual: ad,
        });
        if opts.verbose {
            eprintln!(
                "iter {iter:>3}  pobj {:+.9e}  dobj {:+.9e}  gap {:.2e}  pres {:.2e}  dres {:.2e}  ap {:.3}  ad {:.3}",
                res.primal_obj, res.dual_obj, res.rel_gap, res.primal_resid, res.dual_resid, ap, ad
            );
        }
        if !(ap.is_finite() && ad.is_finite()) {
            return finish(p, &sc, &it, SolveStatus::NumericalFailure, iter, start, history,
                Some("step length is not finite".into()));
        }
        if ap < 1e-10 && ad < 1e-10 {
            stalled += 1;
            if stalled >= 3 {
                return finish(p, &sc, &it, SolveStatus::NumericalFailure, iter + 1, start, history,
                    Some("step lengths collapsed".into()));
            }
        } else {
            stalled = 0;
        }

        it.x = symmetrize(&(&it.x + &d.dx * ap));
        it.s += &d.ds * ap;
        it.y += &d.dy * ad;
        it.z_mat = symmetrize(&(&it.z_mat + &d.dz_mat * ad));
        it.z += &d.dz * ad;
    }
    finish(
        p,
        &sc,
        &it,
        SolveStatus::MaxIters,
        opts.max_iters,
        start,
        history,
        Some(format!("no convergence within {} iterations", opts.max_iters)),
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sdp::ConicRow;

    fn row(f: SymSparse, sense: Sense, rhs: f64) -> ConicRow {
        ConicRow { f, sense, rhs }
    }

    #[test]
    fn spectral_example() {
        // max tr(diag(1,-1) X) s.t. tr X <= 1
        let cost = DMatrix::from_diagonal(&DVector::from_vec(vec![1.0, -1.0]));
        let f = SymSparse::new(2).with(0, 0, 1.0).with(1, 1, 1.0);
        let p = ConicProblem::new(cost, vec![row(f, Sense::Le, 1.0)]).unwrap();
        let sol = solve(&p, &SolverOptions::default()).unwrap();
        assert_eq!(sol.status, SolveStatus::Optimal, "{:?}", sol.message);
        assert!((sol.primal_obj - 1.0).abs() < 1e-7);
        assert!((sol.x[(0, 0)] - 1.0).abs() < 1e-6);
        assert!(sol.x[(1, 1)].abs() < 1e-6);
    }

    #[test]
    fn correlation_example() {
        let cost = DMatrix::from_row_slice(2, 2, &[0.0, 1.0, 1.0, 0.0]);
        let p = ConicProblem::new(
            cost,
            vec![
                row(SymSparse::new(2).with(0, 0, 1.0), Sense::Eq, 1.0),
                row(SymSparse::new(2).with(1, 1, 1.0), Sense::Eq, 1.0),
            ],
        )
        .unwrap();
        let sol = solve(&p, &SolverOptions::default()).unwrap();
        assert_eq!(sol.status, SolveStatus::Optimal);
        assert!((sol.primal_obj - 2.0).abs() < 1e-7);
        assert!((&sol.x - DMatrix::from_element(2, 2, 1.0)).amax() < 1e-6);
    }

    #[test]
    fn primal_infeasible() {
        let cost = DMatrix::from_diagonal(&DVector::from_vec(vec![1.0, 0.0]));
        let f = SymSparse::new(2).with(0, 0, 1.0).with(1, 1, 1.0);
        let p = ConicProblem::new(cost, vec![row(f, Sense::Le, -1.0)]).unwrap();
        let sol = solve(&p, &SolverOptions::default()).unwrap();
        assert_eq!(sol.status, SolveStatus::PrimalInfeasible, "{:?}", sol.message);
    }

    #[test]
    fn unbounded() {
        let cost = DMatrix::from_diagonal(&DVector::from_vec(vec![1.0, 0.0]));
        let f = SymSparse::new(2).with(1, 1, 1.0);
        let p = ConicProblem::new(cost, vec![row(f, Sense::Le, 1.0)]).unwrap();
        let sol = solve(&p, &SolverOptions::default()).unwrap();
        assert_eq!(sol.status, SolveStatus::DualInfeasible, "{:?}", sol.message);
    }

    #[test]
    fn ge_rows() {
        // max -X00 s.t. X00 >= 2 -> value -2, multiplier y <= 0
        let cost = DMatrix::from_element(1, 1, -1.0);
        let p = ConicProblem::new(cost, vec![row(SymSparse::new(1).with(0, 0, 1.0), Sense::Ge, 2.0)])
            .unwrap();
        let sol = solve(&p, &SolverOptions::default()).unwrap();
        assert_eq!(sol.status, SolveStatus::Optimal);
        assert!((sol.primal_obj + 2.0).abs() < 1e-7);
        assert!((sol.y[0] + 1.0).abs() < 1e-6);
    }
}
