//! Quadratic representation of the weighted Fisher information.
//!
//! For a fixed model the parameter sensitivities are affine in the stacked
//! input, `∂x_t/∂θ_i = m_i(t) + Σ_{k<t} M_i(t,k) u_k`, so `tr(K·I(θ))` is the
//! quadratic `uᵀQu + 2qᵀu + q₀`. The free-response part `m_i(t)` and the
//! forced part `M_i(t,k)` are built by recursion:
//!
//! ```text
//! m_i(0) = ∂x₀/∂θ_i,        m_i(t+1) = A m_i(t) + ∂A/∂θ_i · Aᵗ x₀
//! M_i(t,k) = Φ_i(t-k-1),    Φ_i(0) = ∂B/∂θ_i,   Φ_i(τ+1) = A Φ_i(τ) + ∂A/∂θ_i · A^τ B
//! ```
//!
//! `M_i(t,k)` depends only on the lag `t-k-1` because `A` and `B` are time
//! invariant, so only the `N` lag blocks are stored.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{asymmetry, from_rows, min_eigenvalue, symmetrize, to_rows};
use crate::ssmodel::ParameterizedModel;

/// PSD weight `K` of the information criterion `tr(K·I(θ))`.
#[derive(Debug, Clone, PartialEq)]
pub struct InformationWeights {
    k: DMatrix<f64>,
}

impl InformationWeights {
    pub fn new(k: DMatrix<f64>) -> Result<Self> {
        if !k.is_square() || k.nrows() == 0 {
            return Err(Error::invalid(format!(
                "information weight must be a non-empty square matrix, got {}x{}",
                k.nrows(),
                k.ncols()
            )));
        }
        if k.iter().any(|x| !x.is_finite()) {
            return Err(Error::invalid("information weight has non-finite entries"));
        }
        if asymmetry(&k) > 1e-12 {
            return Err(Error::invalid("information weight is not symmetric"));
        }
        let k = symmetrize(&k);
        let tr = k.trace();
        if min_eigenvalue(&k) < -1e-9 * tr.abs() {
            return Err(Error::invalid("information weight is not positive semidefinite"));
        }
        Ok(Self { k })
    }

    /// T-optimal criterion, `K = I`.
    pub fn identity(p: usize) -> Self {
        Self {
            k: DMatrix::identity(p, p),
        }
    }

    /// c-optimal criterion, `K = c cᵀ`.
    pub fn c_optimal(c: &[f64]) -> Result<Self> {
        if c.is_empty() || c.iter().any(|x| !x.is_finite()) {
            return Err(Error::invalid("c-optimal weight vector must be finite and non-empty"));
        }
        let c = DVector::from_column_slice(c);
        Ok(Self {
            k: &c * c.transpose(),
        })
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.k
    }

    pub fn dim(&self) -> usize {
        self.k.nrows()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SensitivityTensors {
    /// `free[t]` is n×p with column i equal to `m_i(t)`, `t = 0..=N`.
    free: Vec<DMatrix<f64>>,
    /// `forced[τ][i]` is the n×n_u block `Φ_i(τ)`, `τ = 0..N-1`.
    forced: Vec<Vec<DMatrix<f64>>>,
}

impl SensitivityTensors {
    /// `m_i^h(t)`
    pub fn free(&self, t: usize, i: usize, h: usize) -> f64 {
        self.free[t][(h, i)]
    }

    pub fn free_block(&self, t: usize) -> &DMatrix<f64> {
        &self.free[t]
    }

    /// `M_{kij}^h(t)`; zero when `k >= t`.
    pub fn forced(&self, t: usize, k: usize, i: usize, j: usize, h: usize) -> f64 {
        self.forced_block(t, k, i).map_or(0.0, |m| m[(h, j)])
    }

    /// The n×n_u block `M_i(t,k)`, or `None` when `k >= t`.
    pub fn forced_block(&self, t: usize, k: usize, i: usize) -> Option<&DMatrix<f64>> {
        if k >= t {
            None
        } else {
            Some(&self.forced[t - k - 1][i])
        }
    }

    pub fn horizon(&self) -> usize {
        self.free.len() - 1
    }
}

pub fn build_tensors(model: &ParameterizedModel) -> SensitivityTensors {
    let big_n = model.horizon();
    let a = model.a();
    let p = model.p();

    let mut free = Vec::with_capacity(big_n + 1);
    let mut m = DMatrix::zeros(model.n(), p);
    for (i, par) in model.params().iter().enumerate() {
        m.set_column(i, &par.dx0);
    }
    let mut free_resp = model.x0().clone();
    for t in 0..=big_n {
        free.push(m.clone());
        if t == big_n {
            break;
        }
        let mut next = a * &m;
        for (i, par) in model.params().iter().enumerate() {
            let mut col = next.column_mut(i);
            col += &par.da * &free_resp;
        }
        m = next;
        free_resp = a * free_resp;
    }

    let mut forced = Vec::with_capacity(big_n);
    let mut phi: Vec<DMatrix<f64>> = model.params().iter().map(|par| par.db.clone()).collect();
    let mut a_pow_b = model.b().clone();
    for _ in 0..big_n {
        forced.push(phi.clone());
        phi = phi
            .iter()
            .zip(model.params())
            .map(|(ph, par)| a * ph + &par.da * &a_pow_b)
            .collect();
        a_pow_b = a * a_pow_b;
    }

    SensitivityTensors { free, forced }
}

/// `uᵀQu + 2qᵀu + q₀` over the stacked input `u`, `d = N·n_u`.
#[derive(Debug, Clone, PartialEq)]
pub struct QuadraticObjective {
    q_mat: DMatrix<f64>,
    q_vec: DVector<f64>,
    q0: f64,
}

impl QuadraticObjective {
    /// Symmetrizes `q_mat`; rejects non-finite entries and shape mismatches.
    pub fn new(q_mat: DMatrix<f64>, q_vec: DVector<f64>, q0: f64) -> Result<Self> {
        let d = q_mat.nrows();
        if !q_mat.is_square() || q_vec.len() != d {
            return Err(Error::invalid(format!(
                "objective shapes: Q is {}x{}, q has length {}",
                q_mat.nrows(),
                q_mat.ncols(),
                q_vec.len()
            )));
        }
        if !q0.is_finite() || q_mat.iter().chain(q_vec.iter()).any(|x| !x.is_finite()) {
            return Err(Error::invalid("objective has non-finite entries"));
        }
        Ok(Self {
            q_mat: symmetrize(&q_mat),
            q_vec,
            q0,
        })
    }

    /// Homogeneous objective `uᵀQu`.
    pub fn homogeneous(q_mat: DMatrix<f64>) -> Result<Self> {
        let d = q_mat.nrows();
        Self::new(q_mat, DVector::zeros(d), 0.0)
    }

    pub fn dim(&self) -> usize {
        self.q_vec.len()
    }

    pub fn q_mat(&self) -> &DMatrix<f64> {
        &self.q_mat
    }

    pub fn q_vec(&self) -> &DVector<f64> {
        &self.q_vec
    }

    pub fn q0(&self) -> f64 {
        self.q0
    }

    pub fn evaluate(&self, u: &[f64]) -> Result<f64> {
        if u.len() != self.dim() {
            return Err(Error::invalid(format!(
                "objective expects an input of length {}, got {}",
                self.dim(),
                u.len()
            )));
        }
        let u = DVector::from_column_slice(u);
        Ok(u.dot(&(&self.q_mat * &u)) + 2.0 * self.q_vec.dot(&u) + self.q0)
    }

    /// Same objective with every coefficient multiplied by `s`.
    pub fn scaled(&self, s: f64) -> Self {
        Self {
            q_mat: &self.q_mat * s,
            q_vec: &self.q_vec * s,
            q0: self.q0 * s,
        }
    }

    pub fn to_document(&self) -> ObjectiveDocument {
        ObjectiveDocument {
            d: self.dim(),
            q_mat: to_rows(&self.q_mat),
            q_vec: self.q_vec.iter().copied().collect(),
            q0: self.q0,
        }
    }
}

/// JSON form `{d, Q, q, q0}`.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ObjectiveDocument {
    pub d: usize,
    #[serde(rename = "Q")]
    pub q_mat: Vec<Vec<f64>>,
    #[serde(rename = "q")]
    pub q_vec: Vec<f64>,
    pub q0: f64,
}

impl ObjectiveDocument {
    pub fn into_objective(self) -> Result<QuadraticObjective> {
        let q = from_rows(&self.q_mat)?;
        if q.nrows() != self.d || q.ncols() != self.d || self.q_vec.len() != self.d {
            return Err(Error::invalid(format!(
                "objective document: d = {} but Q is {}x{} and q has length {}",
                self.d,
                q.nrows(),
                q.ncols(),
                self.q_vec.len()
            )));
        }
        QuadraticObjective::new(q, DVector::from_vec(self.q_vec), self.q0)
    }
}

/// Assembles `(Q, q, q₀)` for `tr(K·I(θ))`, with `S_t = C_tᵀΣ⁻¹C_t`.
pub fn build_quadratic(
    model: &ParameterizedModel,
    weights: &InformationWeights,
) -> Result<QuadraticObjective> {
    let p = model.p();
    if weights.dim() != p {
        return Err(Error::invalid(format!(
            "information weight is {}x{} but the model has {p} parameters",
            weights.dim(),
            weights.dim()
        )));
    }
    let tensors = build_tensors(model);
    let k = weights.matrix();
    let nu = model.n_u();
    let n = model.n();
    let d = model.input_len();
    let mut q_mat = DMatrix::zeros(d, d);
    let mut q_vec = DVector::zeros(d);
    let mut q0 = 0.0;

    for t in 0..=model.horizon() {
        let s = model.weight_at(t);
        let m = tensors.free_block(t);
        let sm = s * m;
        // Σ_{ii'} K_{ii'} m_{i'}ᵀ S m_i
        let mm = m.transpose() * &sm;
        q0 += k.component_mul(&mm).sum();
        if t == 0 {
            continue;
        }
        let w = t * nu;
        // Γ_i = [M_i(t,0) .. M_i(t,t-1)], n × t·n_u
        let gammas: Vec<DMatrix<f64>> = (0..p)
            .map(|i| {
                let mut g = DMatrix::zeros(n, w);
                for kk in 0..t {
                    let blk = tensors.forced_block(t, kk, i).expect("k < t");
                    g.view_mut((0, kk * nu), (n, nu)).copy_from(blk);
                }
                g
            })
            .collect();
        for i in 0..p {
            // H_i = Σ_{i'} K_{ii'} Γ_{i'}
            let mut h = DMatrix::zeros(n, w);
            for (ip, g) in gammas.iter().enumerate() {
                if k[(i, ip)] != 0.0 {
                    h += g * k[(i, ip)];
                }
            }
            let sg = s * &gammas[i];
            let mut blk = q_mat.view_mut((0, 0), (w, w));
            blk += h.transpose() * &sg;
            let mut qv = q_vec.rows_mut(0, w);
            qv += h.transpose() * sm.column(i);
        }
    }
    QuadraticObjective::new(q_mat, q_vec, q0)
}
