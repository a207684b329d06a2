use nalgebra::{DMatrix, DVector};

use super::ParameterizedModel;
use crate::error::Result;

/// State and output trajectory over samples `t = 0..=N` (row `t`).
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub states: DMatrix<f64>,
    pub outputs: DMatrix<f64>,
}

/// Parameter sensitivities `∂x_t/∂θ`, one n×p matrix per sample.
#[derive(Debug, Clone, PartialEq)]
pub struct SensitivityTrajectory {
    pub sens: Vec<DMatrix<f64>>,
}

impl SensitivityTrajectory {
    /// `∂x_t^h / ∂θ_i`
    pub fn get(&self, t: usize, h: usize, i: usize) -> f64 {
        self.sens[t][(h, i)]
    }
}

pub fn simulate(model: &ParameterizedModel, u: &[f64]) -> Result<Trajectory> {
    model.check_input(u)?;
    let n = model.n();
    let big_n = model.horizon();
    let mut states = DMatrix::zeros(big_n + 1, n);
    let mut outputs = DMatrix::zeros(big_n + 1, model.n_y());
    let mut x = model.x0().clone();
    for t in 0..=big_n {
        states.set_row(t, &x.transpose());
        outputs.set_row(t, &(model.c_at(t) * &x).transpose());
        if t < big_n {
            x = model.a() * &x + model.b() * model.input_at(u, t);
        }
    }
    Ok(Trajectory { states, outputs })
}

/// Propagates `∂x_{t+1}/∂θ_i = A ∂x_t/∂θ_i + (∂A/∂θ_i) x_t + (∂B/∂θ_i) u_t`.
pub fn simulate_sensitivities(
    model: &ParameterizedModel,
    u: &[f64],
) -> Result<SensitivityTrajectory> {
    model.check_input(u)?;
    let n = model.n();
    let p = model.p();
    let big_n = model.horizon();
    let mut sens = Vec::with_capacity(big_n + 1);
    let mut s = DMatrix::zeros(n, p);
    for (i, par) in model.params().iter().enumerate() {
        s.set_column(i, &par.dx0);
    }
    let mut x: DVector<f64> = model.x0().clone();
    for t in 0..=big_n {
        sens.push(s.clone());
        if t == big_n {
            break;
        }
        let ut = model.input_at(u, t);
        let mut next = model.a() * &s;
        for (i, par) in model.params().iter().enumerate() {
            let forcing = &par.da * &x + &par.db * &ut;
            let mut col = next.column_mut(i);
            col += forcing;
        }
        s = next;
        x = model.a() * &x + model.b() * ut;
    }
    Ok(SensitivityTrajectory { sens })
}

/// `Σ_{t=0}^{N} (∇_θ x_t)ᵀ C_tᵀ Σ⁻¹ C_t (∇_θ x_t)`
pub fn fisher_information(model: &ParameterizedModel, u: &[f64]) -> Result<DMatrix<f64>> {
    let sens = simulate_sensitivities(model, u)?;
    let p = model.p();
    let mut info = DMatrix::zeros(p, p);
    for (t, s) in sens.sens.iter().enumerate() {
        info += s.transpose() * model.weight_at(t) * s;
    }
    Ok(crate::linalg::symmetrize(&info))
}
