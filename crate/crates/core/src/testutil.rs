// Random affine model families for tests. Included by unit tests and, via
// #[path], by the integration test targets, so only `inforelax::` paths here.

#![allow(dead_code)]

use inforelax::infomatrix::QuadraticObjective;
use inforelax::relax::{ConstraintSpec, QuadraticProgram};
use inforelax::ssmodel::{OutputMap, ParameterPartials, ParameterizedModel};
use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;

/// `A(θ) = A₀ + Σ θ_i dA_i`, likewise for `B` and `x₀`, so the stored
/// partials are exact and finite differences in θ are meaningful.
pub struct AffineFamily {
    pub a0: DMatrix<f64>,
    pub b0: DMatrix<f64>,
    pub x00: DVector<f64>,
    pub c: DMatrix<f64>,
    pub sigma: DMatrix<f64>,
    pub da: Vec<DMatrix<f64>>,
    pub db: Vec<DMatrix<f64>>,
    pub dx0: Vec<DVector<f64>>,
    pub theta: Vec<f64>,
    pub horizon: usize,
}

fn normal<R: Rng>(rng: &mut R, rows: usize, cols: usize, scale: f64) -> DMatrix<f64> {
    DMatrix::from_fn(rows, cols, |_, _| scale * rng.sample::<f64, _>(StandardNormal))
}

pub fn random_family<R: Rng>(
    rng: &mut R,
    n: usize,
    n_u: usize,
    n_y: usize,
    p: usize,
    horizon: usize,
    nonzero_initial: bool,
) -> AffineFamily {
    let theta: Vec<f64> = (0..p).map(|_| 0.3 * rng.sample::<f64, _>(StandardNormal)).collect();
    let da: Vec<_> = (0..p).map(|_| normal(rng, n, n, 0.3)).collect();
    let db: Vec<_> = (0..p).map(|_| normal(rng, n, n_u, 0.3)).collect();
    let dx0: Vec<DVector<f64>> = (0..p)
        .map(|_| {
            if nonzero_initial {
                DVector::from_iterator(n, normal(rng, n, 1, 0.3).iter().copied())
            } else {
                DVector::zeros(n)
            }
        })
        .collect();
    // Offset so that A(θ), B(θ), x0(θ) at the nominal θ are standard-normal·0.3.
    let mut a0 = normal(rng, n, n, 0.3);
    let mut b0 = normal(rng, n, n_u, 0.3);
    let mut x00 = if nonzero_initial {
        DVector::from_iterator(n, normal(rng, n, 1, 0.3).iter().copied())
    } else {
        DVector::zeros(n)
    };
    for i in 0..p {
        a0 -= &da[i] * theta[i];
        b0 -= &db[i] * theta[i];
        x00 -= &dx0[i] * theta[i];
    }
    let l = normal(rng, n_y, n_y, 0.5);
    let sigma = &l * l.transpose() + DMatrix::identity(n_y, n_y) * 0.5;
    let sigma = (&sigma + sigma.transpose()) * 0.5;
    AffineFamily {
        a0,
        b0,
        x00,
        c: normal(rng, n_y, n, 1.0),
        sigma,
        da,
        db,
        dx0,
        theta,
        horizon,
    }
}

impl AffineFamily {
    pub fn model_at(&self, theta: &[f64]) -> ParameterizedModel {
        let mut a = self.a0.clone();
        let mut b = self.b0.clone();
        let mut x0 = self.x00.clone();
        for (i, th) in theta.iter().enumerate() {
            a += &self.da[i] * *th;
            b += &self.db[i] * *th;
            x0 += &self.dx0[i] * *th;
        }
        let params = (0..theta.len())
            .map(|i| ParameterPartials {
                name: format!("theta{i}"),
                da: self.da[i].clone(),
                db: self.db[i].clone(),
                dx0: self.dx0[i].clone(),
            })
            .collect();
        ParameterizedModel::new(
            a,
            b,
            OutputMap::Constant(self.c.clone()),
            self.sigma.clone(),
            x0,
            params,
            self.horizon,
        )
        .expect("random family produces valid models")
    }

    pub fn nominal(&self) -> ParameterizedModel {
        self.model_at(&self.theta)
    }

    pub fn random_input<R: Rng>(&self, rng: &mut R) -> Vec<f64> {
        let len = self.horizon * self.b0.ncols();
        (0..len).map(|_| rng.sample::<f64, _>(StandardNormal)).collect()
    }
}

/// Random symmetric PSD weight matrix `G Gᵀ`.
pub fn random_psd<R: Rng>(rng: &mut R, p: usize) -> DMatrix<f64> {
    let g = normal(rng, p, p, 1.0);
    let k = &g * g.transpose();
    (&k + k.transpose()) * 0.5
}

/// A feasible point of `qp`: a random direction scaled toward the origin
/// until feasible, either onto the boundary or strictly inside.
pub fn sample_feasible<R: Rng>(qp: &QuadraticProgram, rng: &mut R) -> Vec<f64> {
    let d = qp.dim();
    let nonneg = qp
        .constraints()
        .iter()
        .any(|c| matches!(c, ConstraintSpec::Box { .. }));
    let reach = qp
        .constraints()
        .iter()
        .map(|c| match c {
            ConstraintSpec::Amplitude { c } | ConstraintSpec::Box { c } => c.amax(),
            ConstraintSpec::L2Budget { c } => *c,
            ConstraintSpec::L1Budget { b } => *b,
            _ => 1.0,
        })
        .fold(0.0f64, f64::max)
        .max(1.0);
    let dir: Vec<f64> = (0..d)
        .map(|_| {
            let x: f64 = rng.random_range(0.0..1.0) * 2.0 * reach;
            if nonneg { x } else { x - reach }
        })
        .collect();
    let scaled = |l: f64| dir.iter().map(|x| x * l).collect::<Vec<_>>();
    let feasible = |l: f64| qp.is_feasible(&scaled(l), 0.0).unwrap();
    assert!(feasible(0.0), "the origin must be feasible for this sampler");
    let (mut lo, mut hi) = (0.0, 1.0);
    if feasible(1.0) {
        lo = 1.0;
    } else {
        for _ in 0..80 {
            let mid = 0.5 * (lo + hi);
            if feasible(mid) {
                lo = mid;
            } else {
                hi = mid;
            }
        }
    }
    let shrink = if rng.random_bool(0.5) { 1.0 } else { rng.random_range(0.2..1.0) };
    scaled(lo * shrink)
}

/// Euclidean projection onto `{|u_t| <= c_t} ∩ {||u|| <= r}`:
/// `clip(v/(1+μ))` with the smallest `μ >= 0` meeting the ball.
pub fn project_box_ball(v: &[f64], c: &[f64], r: f64) -> Vec<f64> {
    let at = |mu: f64| -> Vec<f64> {
        v.iter()
            .zip(c)
            .map(|(x, ct)| (x / (1.0 + mu)).clamp(-ct, *ct))
            .collect()
    };
    let norm = |u: &[f64]| u.iter().map(|x| x * x).sum::<f64>().sqrt();
    let u0 = at(0.0);
    if norm(&u0) <= r {
        return u0;
    }
    let (mut lo, mut hi) = (0.0, 1.0);
    while norm(&at(hi)) > r {
        hi *= 2.0;
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if norm(&at(mid)) > r {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    at(hi)
}

/// Best value of projected-gradient ascent on `uᵀQu + 2qᵀu + q0` over the
/// box-ball set from `starts` random starting points.
pub fn projected_gradient_oracle<R: Rng>(
    obj: &QuadraticObjective,
    c: &[f64],
    r: f64,
    starts: usize,
    rng: &mut R,
) -> f64 {
    let d = obj.dim();
    let q = obj.q_mat();
    let qv = obj.q_vec();
    let lip = 2.0 * q.norm().max(1e-12);
    let mut best = f64::NEG_INFINITY;
    for _ in 0..starts {
        let start: Vec<f64> = (0..d).map(|t| rng.random_range(-c[t]..c[t])).collect();
        let mut u = project_box_ball(&start, c, r);
        for _ in 0..3000 {
            let uv = DVector::from_column_slice(&u);
            let grad = (q * &uv) * 2.0 + qv * 2.0;
            let step: Vec<f64> = u.iter().zip(grad.iter()).map(|(x, g)| x + g / lip).collect();
            let next = project_box_ball(&step, c, r);
            let moved = next.iter().zip(&u).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
            u = next;
            if moved < 1e-14 {
                break;
            }
        }
        best = best.max(obj.evaluate(&u).unwrap());
    }
    best
}

/// Random program meeting the exactness hypotheses: entrywise nonnegative
/// `Q`, nonnegative `q`, amplitude and energy bounds.
pub fn random_exact_instance<R: Rng>(rng: &mut R, d: usize, with_linear: bool) -> QuadraticProgram {
    let g = DMatrix::from_fn(d, d, |_, _| rng.random_range(0.0..1.0));
    let mut q = (&g + g.transpose()) * 0.5;
    for i in 0..d {
        // indefinite diagonals are allowed; only off-diagonal signs matter
        q[(i, i)] = rng.random_range(-0.5..1.5);
    }
    let qv = if with_linear {
        DVector::from_fn(d, |_, _| rng.random_range(0.0..1.0))
    } else {
        DVector::zeros(d)
    };
    let c = DVector::from_fn(d, |_, _| rng.random_range(0.3..1.5));
    let budget = rng.random_range(0.5..1.0) * c.norm();
    QuadraticProgram::new(
        QuadraticObjective::new(q, qv, 0.0).unwrap(),
        vec![
            ConstraintSpec::Amplitude { c },
            ConstraintSpec::L2Budget { c: budget },
        ],
    )
    .unwrap()
}
