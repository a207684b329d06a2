//! Parameterized discrete-time linear systems
//!
//! ```text
//! x_{t+1} = A(θ) x_t + B(θ) u_t,   y_t = C_t x_t,   Y_t ~ N(y_t, Σ)
//! ```
//!
//! together with the partial derivatives of `A`, `B` and `x_0` with respect to
//! each uncertain parameter. Simulation, sensitivity propagation, the Fisher
//! information matrix and zero-order-hold discretization live in the
//! submodules.

mod io;
mod simulate;
mod zoh;

pub use io::{write_trajectory_csv, ModelDocument, OutputDocument, ParamDocument};
pub use simulate::{
    fisher_information, simulate, simulate_sensitivities, SensitivityTrajectory, Trajectory,
};
pub use zoh::{zoh_discretize, ContinuousModel, DiscreteBlock};

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// Named values of the uncertain parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct ParameterVector {
    names: Vec<String>,
    values: Vec<f64>,
}

impl ParameterVector {
    pub fn new(names: Vec<String>, values: Vec<f64>) -> Result<Self> {
        if names.is_empty() {
            return Err(Error::invalid("parameter vector must not be empty"));
        }
        if names.len() != values.len() {
            return Err(Error::invalid(format!(
                "{} parameter names but {} values",
                names.len(),
                values.len()
            )));
        }
        for (i, name) in names.iter().enumerate() {
            if names[..i].contains(name) {
                return Err(Error::invalid(format!("duplicate parameter name '{name}'")));
            }
        }
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::invalid(format!("parameter '{}' is not finite", names[i])));
        }
        Ok(Self { names, values })
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.names.len()
    }

    pub fn is_empty(&self) -> bool {
        self.names.is_empty()
    }

    pub fn get(&self, name: &str) -> Option<f64> {
        self.names.iter().position(|n| n == name).map(|i| self.values[i])
    }
}

/// Derivatives of the model data with respect to one parameter θ_i.
#[derive(Debug, Clone, PartialEq)]
pub struct ParameterPartials {
    pub name: String,
    /// ∂A/∂θ_i, n×n
    pub da: DMatrix<f64>,
    /// ∂B/∂θ_i, n×n_u
    pub db: DMatrix<f64>,
    /// ∂x₀/∂θ_i
    pub dx0: DVector<f64>,
}

/// Output matrix, either constant or one matrix per sample `t = 0..=N`.
#[derive(Debug, Clone, PartialEq)]
pub enum OutputMap {
    Constant(DMatrix<f64>),
    Schedule(Vec<DMatrix<f64>>),
}

impl OutputMap {
    fn first(&self) -> Option<&DMatrix<f64>> {
        match self {
            OutputMap::Constant(c) => Some(c),
            OutputMap::Schedule(cs) => cs.first(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ParameterizedModel {
    a: DMatrix<f64>,
    b: DMatrix<f64>,
    c: OutputMap,
    sigma: DMatrix<f64>,
    x0: DVector<f64>,
    params: Vec<ParameterPartials>,
    horizon: usize,
    // C_tᵀ Σ⁻¹ C_t, one entry for a constant C
    weights: Vec<DMatrix<f64>>,
}

fn check_shape(what: &str, m: &DMatrix<f64>, rows: usize, cols: usize) -> Result<()> {
    if m.nrows() != rows || m.ncols() != cols {
        return Err(Error::Model(format!(
            "{what} must be {rows}x{cols}, got {}x{}",
            m.nrows(),
            m.ncols()
        )));
    }
    if m.iter().any(|x| !x.is_finite()) {
        return Err(Error::Model(format!("{what} has non-finite entries")));
    }
    Ok(())
}

impl ParameterizedModel {
    /// Validates dimensions and finiteness, and that Σ is symmetric positive
    /// definite.
    pub fn new(
        a: DMatrix<f64>,
        b: DMatrix<f64>,
        c: OutputMap,
        sigma: DMatrix<f64>,
        x0: DVector<f64>,
        params: Vec<ParameterPartials>,
        horizon: usize,
    ) -> Result<Self> {
        let n = a.nrows();
        if n == 0 {
            return Err(Error::Model("state dimension n must be at least 1".into()));
        }
        check_shape("A", &a, n, n)?;
        let n_u = b.ncols();
        if n_u == 0 {
            return Err(Error::Model("input dimension n_u must be at least 1".into()));
        }
        check_shape("B", &b, n, n_u)?;
        let n_y = c
            .first()
            .ok_or_else(|| Error::Model("empty output schedule".into()))?
            .nrows();
        if n_y == 0 {
            return Err(Error::Model("output dimension n_y must be at least 1".into()));
        }
        if horizon == 0 {
            return Err(Error::Model("horizon N must be at least 1".into()));
        }
        match &c {
            OutputMap::Constant(cm) => check_shape("C", cm, n_y, n)?,
            OutputMap::Schedule(cs) => {
                if cs.len() != horizon + 1 {
                    return Err(Error::Model(format!(
                        "output schedule needs N+1 = {} matrices, got {}",
                        horizon + 1,
                        cs.len()
                    )));
                }
                for (t, cm) in cs.iter().enumerate() {
                    check_shape(&format!("C[{t}]"), cm, n_y, n)?;
                }
            }
        }
        check_shape("Sigma", &sigma, n_y, n_y)?;
        if crate::linalg::asymmetry(&sigma) > 1e-12 {
            return Err(Error::Model("Sigma is not symmetric".into()));
        }
        if x0.len() != n || x0.iter().any(|x| !x.is_finite()) {
            return Err(Error::Model(format!(
                "x0 must be a finite {n}-vector, got length {}",
                x0.len()
            )));
        }
        if params.is_empty() {
            return Err(Error::Model("at least one uncertain parameter is required".into()));
        }
        for (i, p) in params.iter().enumerate() {
            if params[..i].iter().any(|q| q.name == p.name) {
                return Err(Error::Model(format!("duplicate parameter name '{}'", p.name)));
            }
            check_shape(&format!("dA[{}]", p.name), &p.da, n, n)?;
            check_shape(&format!("dB[{}]", p.name), &p.db, n, n_u)?;
            if p.dx0.len() != n || p.dx0.iter().any(|x| !x.is_finite()) {
                return Err(Error::Model(format!(
                    "dx0[{}] must be a finite {n}-vector",
                    p.name
                )));
            }
        }

        let chol = sigma
            .clone()
            .cholesky()
            .ok_or_else(|| Error::Model("Sigma is not positive definite".into()))?;
        let sigma_inv = chol.inverse();
        let weight = |cm: &DMatrix<f64>| {
            let w = cm.transpose() * &sigma_inv * cm;
            crate::linalg::symmetrize(&w)
        };
        let weights = match &c {
            OutputMap::Constant(cm) => vec![weight(cm)],
            OutputMap::Schedule(cs) => cs.iter().map(weight).collect(),
        };

        Ok(Self {
            a,
            b,
            c,
            sigma,
            x0,
            params,
            horizon,
            weights,
        })
    }

    pub fn n(&self) -> usize {
        self.a.nrows()
    }

    pub fn n_u(&self) -> usize {
        self.b.ncols()
    }

    pub fn n_y(&self) -> usize {
        self.sigma.nrows()
    }

    /// Number of uncertain parameters p.
    pub fn p(&self) -> usize {
        self.params.len()
    }

    /// Number of input samples N; states run over `0..=N`.
    pub fn horizon(&self) -> usize {
        self.horizon
    }

    /// Length `N·n_u` of the stacked input vector.
    pub fn input_len(&self) -> usize {
        self.horizon * self.n_u()
    }

    pub fn a(&self) -> &DMatrix<f64> {
        &self.a
    }

    pub fn b(&self) -> &DMatrix<f64> {
        &self.b
    }

    pub fn output_map(&self) -> &OutputMap {
        &self.c
    }

    /// Output matrix used at sample `t`.
    pub fn c_at(&self, t: usize) -> &DMatrix<f64> {
        match &self.c {
            OutputMap::Constant(c) => c,
            OutputMap::Schedule(cs) => &cs[t],
        }
    }

    pub fn sigma(&self) -> &DMatrix<f64> {
        &self.sigma
    }

    pub fn x0(&self) -> &DVector<f64> {
        &self.x0
    }

    pub fn params(&self) -> &[ParameterPartials] {
        &self.params
    }

    pub fn param_names(&self) -> Vec<String> {
        self.params.iter().map(|p| p.name.clone()).collect()
    }

    /// `S_t = C_tᵀ Σ⁻¹ C_t`.
    pub fn weight_at(&self, t: usize) -> &DMatrix<f64> {
        if self.weights.len() == 1 {
            &self.weights[0]
        } else {
            &self.weights[t]
        }
    }

    pub(crate) fn check_input(&self, u: &[f64]) -> Result<()> {
        if u.len() != self.input_len() {
            return Err(Error::invalid(format!(
                "input length: expected N*n_u = {}*{} = {}, got {}",
                self.horizon,
                self.n_u(),
                self.input_len(),
                u.len()
            )));
        }
        if u.iter().any(|x| !x.is_finite()) {
            return Err(Error::invalid("input contains non-finite values"));
        }
        Ok(())
    }

    /// Input vector applied at time `k` (0-based flattening `k·n_u + j`).
    pub(crate) fn input_at(&self, u: &[f64], k: usize) -> DVector<f64> {
        let nu = self.n_u();
        DVector::from_column_slice(&u[k * nu..(k + 1) * nu])
    }

    /// Copy of the model with the partials replaced by another parameter set.
    pub fn with_params(&self, params: Vec<ParameterPartials>) -> Result<Self> {
        Self::new(
            self.a.clone(),
            self.b.clone(),
            self.c.clone(),
            self.sigma.clone(),
            self.x0.clone(),
            params,
            self.horizon,
        )
    }

    /// Copy of the model with different dynamics and the same outputs,
    /// parameters and horizon.
    pub fn with_dynamics(&self, a: DMatrix<f64>, b: DMatrix<f64>, x0: DVector<f64>) -> Result<Self> {
        Self::new(
            a,
            b,
            self.c.clone(),
            self.sigma.clone(),
            x0,
            self.params.clone(),
            self.horizon,
        )
    }
}

#[cfg(test)]
pub(crate) mod testing {
    use super::*;

    /// `x_{t+1} = θ x_t + u_t`, `y = x`, Σ = 1, at θ = `theta`.
    pub fn scalar_model(theta: f64, horizon: usize) -> ParameterizedModel {
        ParameterizedModel::new(
            DMatrix::from_element(1, 1, theta),
            DMatrix::from_element(1, 1, 1.0),
            OutputMap::Constant(DMatrix::from_element(1, 1, 1.0)),
            DMatrix::from_element(1, 1, 1.0),
            DVector::zeros(1),
            vec![ParameterPartials {
                name: "theta".into(),
                da: DMatrix::from_element(1, 1, 1.0),
                db: DMatrix::zeros(1, 1),
                dx0: DVector::zeros(1),
            }],
            horizon,
        )
        .unwrap()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn partial(n: usize, nu: usize) -> ParameterPartials {
        ParameterPartials {
            name: "p".into(),
            da: DMatrix::zeros(n, n),
            db: DMatrix::zeros(n, nu),
            dx0: DVector::zeros(n),
        }
    }

    #[test]
    fn rejects_indefinite_sigma() {
        let r = ParameterizedModel::new(
            DMatrix::identity(2, 2),
            DMatrix::zeros(2, 1),
            OutputMap::Constant(DMatrix::identity(2, 2)),
            DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 2.0, 1.0]),
            DVector::zeros(2),
            vec![partial(2, 1)],
            3,
        );
        assert!(matches!(r, Err(Error::Model(m)) if m.contains("positive definite")));
    }

    #[test]
    fn rejects_bad_b_shape() {
        let r = ParameterizedModel::new(
            DMatrix::identity(2, 2),
            DMatrix::zeros(3, 1),
            OutputMap::Constant(DMatrix::identity(2, 2)),
            DMatrix::identity(2, 2),
            DVector::zeros(2),
            vec![partial(2, 1)],
            3,
        );
        assert!(matches!(r, Err(Error::Model(m)) if m.starts_with("B must be 2x1")));
    }

    #[test]
    fn rejects_short_schedule() {
        let r = ParameterizedModel::new(
            DMatrix::identity(1, 1),
            DMatrix::identity(1, 1),
            OutputMap::Schedule(vec![DMatrix::identity(1, 1); 3]),
            DMatrix::identity(1, 1),
            DVector::zeros(1),
            vec![partial(1, 1)],
            3,
        );
        assert!(matches!(r, Err(Error::Model(m)) if m.contains("N+1 = 4")));
    }

    #[test]
    fn parameter_vector_rejects_duplicates() {
        let r = ParameterVector::new(vec!["a".into(), "a".into()], vec![1.0, 2.0]);
        assert!(r.is_err());
        let ok = ParameterVector::new(vec!["a".into(), "b".into()], vec![1.0, 2.0]).unwrap();
        assert_eq!(ok.get("b"), Some(2.0));
    }

    #[test]
    fn input_length_message_names_expected() {
        let m = testing::scalar_model(0.5, 30);
        let err = m.check_input(&[0.0; 29]).unwrap_err().to_string();
        assert!(err.contains("30"), "{err}");
    }
}
