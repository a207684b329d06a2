//! Injection design for hyperpolarized [1-13C]pyruvate imaging.
//!
//! The injected bolus passes through an arterial input function realized as
//! a third-order system (the impulse response `A0 t² e^{-t/β}` sampled every
//! `dt`), which drives a two-pool pyruvate/lactate exchange model discretized
//! with a zero-order hold. Both pools are observed through `sin α` of the
//! flip angle, and each excitation consumes `1 - cos α` of the magnetization.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::infomatrix::{build_quadratic, InformationWeights, QuadraticObjective};
use crate::relax::{self, ConstraintSpec, DesignOptions, DesignResult, QuadraticProgram};
use crate::ssmodel::{zoh_discretize, ContinuousModel, OutputMap, ParameterPartials, ParameterizedModel};

/// Parameters that may be treated as uncertain.
pub const SUPPORTED_THETA: [&str; 6] = ["R1P", "R1L", "kPL", "kTRANS", "beta", "A0"];

/// Order of the partials in [`build_metabolism_model`].
pub const METABOLISM_PARAMS: [&str; 4] = ["R1P", "R1L", "kPL", "kTRANS"];

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct MriParameters {
    /// Pyruvate T1 relaxation rate, 1/s.
    #[serde(rename = "R1P")]
    pub r1p: f64,
    /// Lactate T1 relaxation rate, 1/s.
    #[serde(rename = "R1L")]
    pub r1l: f64,
    /// Pyruvate-to-lactate conversion rate, 1/s.
    #[serde(rename = "kPL")]
    pub kpl: f64,
    /// Vascular-to-tissue transfer rate, 1/s.
    #[serde(rename = "kTRANS")]
    pub ktrans: f64,
    /// Bolus arrival delay, s. Not part of the realized model.
    pub t0: f64,
    /// Shape exponent of the input function. The realization assumes 2.
    pub gamma: f64,
    /// Input-function time constant, s.
    pub beta: f64,
    /// Input-function amplitude.
    #[serde(rename = "A0")]
    pub a0: f64,
}

impl Default for MriParameters {
    fn default() -> Self {
        Self {
            r1p: 0.1,
            r1l: 0.1,
            kpl: 0.07,
            ktrans: 0.055,
            t0: 3.2596,
            gamma: 2.1430,
            beta: 3.4658,
            a0: 1.0411e4,
        }
    }
}

impl MriParameters {
    pub fn validate(&self) -> Result<()> {
        let fields = [
            ("R1P", self.r1p),
            ("R1L", self.r1l),
            ("kPL", self.kpl),
            ("kTRANS", self.ktrans),
            ("t0", self.t0),
            ("gamma", self.gamma),
            ("beta", self.beta),
            ("A0", self.a0),
        ];
        for (name, v) in fields {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::invalid(format!("parameter {name} must be positive, got {v}")));
            }
        }
        Ok(())
    }

    pub fn get(&self, name: &str) -> Option<f64> {
        Some(match name {
            "R1P" => self.r1p,
            "R1L" => self.r1l,
            "kPL" => self.kpl,
            "kTRANS" => self.ktrans,
            "t0" => self.t0,
            "gamma" => self.gamma,
            "beta" => self.beta,
            "A0" => self.a0,
            _ => return None,
        })
    }

    pub fn set(&mut self, name: &str, v: f64) -> Result<()> {
        let slot = match name {
            "R1P" => &mut self.r1p,
            "R1L" => &mut self.r1l,
            "kPL" => &mut self.kpl,
            "kTRANS" => &mut self.ktrans,
            "t0" => &mut self.t0,
            "gamma" => &mut self.gamma,
            "beta" => &mut self.beta,
            "A0" => &mut self.a0,
            _ => return Err(Error::invalid(format!("unknown parameter '{name}'"))),
        };
        *slot = v;
        Ok(())
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let p: Self = serde_json::from_str(text)?;
        p.validate()?;
        Ok(p)
    }
}

/// Flip angles in degrees for the (pyruvate, lactate) channels.
#[derive(Debug, Clone, PartialEq)]
pub enum FlipAngles {
    Constant([f64; 2]),
    /// One pair per sample `t = 0..=N`.
    Schedule(Vec<[f64; 2]>),
}

impl FlipAngles {
    /// The single angle pair, if the schedule does not vary in time.
    fn constant(&self) -> Option<[f64; 2]> {
        match self {
            FlipAngles::Constant(a) => Some(*a),
            FlipAngles::Schedule(list) => {
                let first = *list.first()?;
                list.iter().all(|a| *a == first).then_some(first)
            }
        }
    }

    fn all(&self) -> Vec<[f64; 2]> {
        match self {
            FlipAngles::Constant(a) => vec![*a],
            FlipAngles::Schedule(list) => list.clone(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AcquisitionSettings {
    /// Sampling interval, s.
    pub dt: f64,
    pub horizon: usize,
    pub flip_angles: FlipAngles,
    /// Measurement noise covariance, 2×2.
    pub sigma: DMatrix<f64>,
}

impl Default for AcquisitionSettings {
    fn default() -> Self {
        Self {
            dt: 2.0,
            horizon: 30,
            flip_angles: FlipAngles::Constant([15.0, 15.0]),
            sigma: DMatrix::identity(2, 2),
        }
    }
}

impl AcquisitionSettings {
    pub fn validate(&self) -> Result<()> {
        if !(self.dt.is_finite() && self.dt > 0.0) {
            return Err(Error::invalid(format!("dt must be positive, got {}", self.dt)));
        }
        if self.horizon == 0 {
            return Err(Error::invalid("horizon N must be at least 1"));
        }
        let angles = self.flip_angles.all();
        if let FlipAngles::Schedule(list) = &self.flip_angles {
            if list.len() != self.horizon + 1 {
                return Err(Error::invalid(format!(
                    "flip angle schedule needs N+1 = {} entries, got {}",
                    self.horizon + 1,
                    list.len()
                )));
            }
        }
        if angles.iter().flatten().any(|a| !(a.is_finite() && *a > 0.0 && *a <= 90.0)) {
            return Err(Error::invalid("flip angles must lie in (0, 90] degrees"));
        }
        if self.sigma.shape() != (2, 2) {
            return Err(Error::invalid("Sigma must be 2x2"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Norm {
    L2,
    L1,
}

impl std::str::FromStr for Norm {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "l2" => Ok(Norm::L2),
            "l1" => Ok(Norm::L1),
            _ => Err(Error::invalid(format!("unknown norm '{s}' (expected l2 or l1)"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DesignSpec {
    pub norm: Norm,
    /// Injection-rate bound per sample.
    pub rate_bound: f64,
    /// Bound on `||u||_2`.
    pub l2_budget: f64,
    /// Bound on the total injected amount `Σ u_t`.
    pub l1_budget: f64,
    pub theta_names: Vec<String>,
    /// Defaults to the identity over `theta_names`.
    pub weights: Option<InformationWeights>,
}

impl DesignSpec {
    pub fn new(norm: Norm) -> Self {
        Self {
            norm,
            rate_bound: 1.0,
            l2_budget: 4.0,
            l1_budget: 8.0,
            theta_names: vec!["kPL".into()],
            weights: None,
        }
    }

    pub fn with_theta(mut self, names: &[&str]) -> Self {
        self.theta_names = names.iter().map(|s| s.to_string()).collect();
        self
    }

    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("rate_bound", self.rate_bound),
            ("l2_budget", self.l2_budget),
            ("l1_budget", self.l1_budget),
        ] {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::invalid(format!("{name} must be positive, got {v}")));
            }
        }
        validate_theta(&self.theta_names)?;
        if let Some(w) = &self.weights {
            if w.dim() != self.theta_names.len() {
                return Err(Error::invalid(format!(
                    "weights are {0}x{0} but {1} parameters are uncertain",
                    w.dim(),
                    self.theta_names.len()
                )));
            }
        }
        Ok(())
    }

    fn weights(&self) -> InformationWeights {
        self.weights
            .clone()
            .unwrap_or_else(|| InformationWeights::identity(self.theta_names.len()))
    }
}

fn validate_theta(names: &[String]) -> Result<()> {
    if names.is_empty() {
        return Err(Error::invalid("at least one uncertain parameter is required"));
    }
    for (i, n) in names.iter().enumerate() {
        if !SUPPORTED_THETA.contains(&n.as_str()) {
            return Err(Error::invalid(format!(
                "'{n}' cannot be uncertain (supported: {})",
                SUPPORTED_THETA.join(", ")
            )));
        }
        if names[..i].contains(n) {
            return Err(Error::invalid(format!("parameter '{n}' listed twice")));
        }
    }
    Ok(())
}

/// Third-order realization of the sampled input function.
#[derive(Debug, Clone, PartialEq)]
pub struct AifModel {
    pub a: DMatrix<f64>,
    pub b: DMatrix<f64>,
    pub c: DMatrix<f64>,
}

fn decay(dt: f64, beta: f64) -> [f64; 3] {
    [(-dt / beta).exp(), (-2.0 * dt / beta).exp(), (-3.0 * dt / beta).exp()]
}

pub fn build_aif_model(p: &MriParameters, s: &AcquisitionSettings) -> AifModel {
    let [e1, e2, e3] = decay(s.dt, p.beta);
    AifModel {
        a: DMatrix::from_row_slice(3, 3, &[3.0 * e1, -3.0 * e2, e3, 1.0, 0.0, 0.0, 0.0, 1.0, 0.0]),
        b: DMatrix::from_column_slice(3, 1, &[1.0, 0.0, 0.0]),
        c: DMatrix::from_row_slice(1, 3, &[p.a0 * e1, p.a0 * e2, 0.0]),
    }
}

fn constant_angles(s: &AcquisitionSettings) -> Result<[f64; 2]> {
    s.flip_angles.constant().ok_or_else(|| {
        Error::Unsupported(
            "time-varying flip angles make the state matrix time-varying; only constant schedules are supported"
                .into(),
        )
    })
}

/// Continuous exchange model with partials in [`METABOLISM_PARAMS`] order.
pub fn build_metabolism_model(p: &MriParameters, s: &AcquisitionSettings) -> Result<ContinuousModel> {
    s.validate()?;
    let [ap, al] = constant_angles(s)?;
    let loss = |deg: f64| (1.0 - deg.to_radians().cos()) / s.dt;
    let ac = DMatrix::from_row_slice(
        2,
        2,
        &[-p.kpl - p.r1p - loss(ap), 0.0, p.kpl, -p.r1l - loss(al)],
    );
    let bc = DMatrix::from_column_slice(2, 1, &[p.ktrans, 0.0]);
    let z = DMatrix::zeros(2, 2);
    let zb = DMatrix::zeros(2, 1);
    Ok(ContinuousModel {
        ac,
        bc,
        dac: vec![
            DMatrix::from_row_slice(2, 2, &[-1.0, 0.0, 0.0, 0.0]),
            DMatrix::from_row_slice(2, 2, &[0.0, 0.0, 0.0, -1.0]),
            DMatrix::from_row_slice(2, 2, &[-1.0, 0.0, 1.0, 0.0]),
            z,
        ],
        dbc: vec![zb.clone(), zb.clone(), zb.clone(), DMatrix::from_column_slice(2, 1, &[1.0, 0.0])],
        dt: s.dt,
    })
}

fn output_row(angles: [f64; 2]) -> DMatrix<f64> {
    let mut c = DMatrix::zeros(2, 5);
    c[(0, 3)] = angles[0].to_radians().sin();
    c[(1, 4)] = angles[1].to_radians().sin();
    c
}

/// Five-state model (input function states 1-3, pyruvate, lactate) with
/// partials for `theta_names`.
pub fn build_combined_model(
    p: &MriParameters,
    s: &AcquisitionSettings,
    theta_names: &[String],
) -> Result<ParameterizedModel> {
    p.validate()?;
    s.validate()?;
    validate_theta(theta_names)?;
    let aif = build_aif_model(p, s);
    let disc = zoh_discretize(&build_metabolism_model(p, s)?)?;
    let [e1, e2, _] = decay(s.dt, p.beta);

    let coupling = |bbar: &DMatrix<f64>, row: [f64; 3]| bbar * DMatrix::from_row_slice(1, 3, &row);
    let mut a = DMatrix::zeros(5, 5);
    a.view_mut((0, 0), (3, 3)).copy_from(&aif.a);
    a.view_mut((3, 0), (2, 3)).copy_from(&coupling(&disc.b, [p.a0 * e1, p.a0 * e2, 0.0]));
    a.view_mut((3, 3), (2, 2)).copy_from(&disc.a);
    let mut b = DMatrix::zeros(5, 1);
    b[(0, 0)] = 1.0;

    let c = match &s.flip_angles {
        FlipAngles::Constant(angles) => OutputMap::Constant(output_row(*angles)),
        FlipAngles::Schedule(list) => OutputMap::Schedule(list.iter().map(|x| output_row(*x)).collect()),
    };

    let mut params = Vec::with_capacity(theta_names.len());
    for name in theta_names {
        let mut da = DMatrix::zeros(5, 5);
        if let Some(k) = METABOLISM_PARAMS.iter().position(|m| m == name) {
            da.view_mut((3, 0), (2, 3))
                .copy_from(&coupling(&disc.db[k], [p.a0 * e1, p.a0 * e2, 0.0]));
            da.view_mut((3, 3), (2, 2)).copy_from(&disc.da[k]);
        } else if name == "A0" {
            da.view_mut((3, 0), (2, 3)).copy_from(&coupling(&disc.b, [e1, e2, 0.0]));
        } else {
            // beta: d/dβ e^{-k dt/β} = (k dt/β²) e^{-k dt/β}
            let [e1, e2, e3] = decay(s.dt, p.beta);
            let g = s.dt / (p.beta * p.beta);
            let (d1, d2, d3) = (g * e1, 2.0 * g * e2, 3.0 * g * e3);
            da[(0, 0)] = 3.0 * d1;
            da[(0, 1)] = -3.0 * d2;
            da[(0, 2)] = d3;
            da.view_mut((3, 0), (2, 3))
                .copy_from(&coupling(&disc.b, [p.a0 * d1, p.a0 * d2, 0.0]));
        }
        params.push(ParameterPartials {
            name: name.clone(),
            da,
            db: DMatrix::zeros(5, 1),
            dx0: DVector::zeros(5),
        });
    }
    ParameterizedModel::new(a, b, c, s.sigma.clone(), DVector::zeros(5), params, s.horizon)
}

/// Maximum-rate injection until `budget` is used up; a fractional remainder
/// goes into the last active sample.
pub fn boxcar_input(horizon: usize, rate: f64, budget: f64) -> Result<Vec<f64>> {
    if !(rate.is_finite() && rate > 0.0) || !(budget.is_finite() && budget >= 0.0) {
        return Err(Error::invalid(format!("boxcar needs rate > 0 and budget >= 0, got {rate}, {budget}")));
    }
    let capacity = horizon as f64 * rate;
    if budget > capacity * (1.0 + 1e-12) {
        return Err(Error::invalid(format!(
            "budget {budget} exceeds what N*rate = {horizon}*{rate} = {capacity} can deliver"
        )));
    }
    let mut u = vec![0.0; horizon];
    let mut left = budget;
    for x in u.iter_mut() {
        if left <= 0.0 {
            break;
        }
        *x = rate.min(left);
        left -= *x;
    }
    Ok(u)
}

/// The model, objective and quadratic program of one design instance.
#[derive(Debug, Clone)]
pub struct MriInstance {
    pub model: ParameterizedModel,
    pub objective: QuadraticObjective,
    pub program: QuadraticProgram,
}

pub fn build_instance(p: &MriParameters, s: &AcquisitionSettings, spec: &DesignSpec) -> Result<MriInstance> {
    spec.validate()?;
    let model = build_combined_model(p, s, &spec.theta_names)?;
    let objective = build_quadratic(&model, &spec.weights())?;
    check_objective(&objective)?;
    let program = budget_program(objective.clone(), spec)?;
    Ok(MriInstance {
        model,
        objective,
        program,
    })
}

/// Rate bound plus the energy (`l2`) or volume (`l1`) budget of `spec` on
/// top of `objective`. Only the norm and bounds of `spec` are used.
pub fn budget_program(objective: QuadraticObjective, spec: &DesignSpec) -> Result<QuadraticProgram> {
    let d = objective.dim();
    let constraints = match spec.norm {
        Norm::L2 => vec![
            ConstraintSpec::amplitude(d, spec.rate_bound),
            ConstraintSpec::L2Budget { c: spec.l2_budget },
        ],
        Norm::L1 => vec![
            ConstraintSpec::boxed(d, spec.rate_bound),
            ConstraintSpec::L1Budget { b: spec.l1_budget },
        ],
    };
    QuadraticProgram::new(objective, constraints)
}

/// The exchange model gives an entrywise nonnegative, PSD `Q`.
fn check_objective(obj: &QuadraticObjective) -> Result<()> {
    let q = obj.q_mat();
    let scale = crate::linalg::max_abs(q);
    if q.iter().any(|x| *x < -1e-12 * scale) {
        return Err(Error::Internal("information objective has negative entries".into()));
    }
    let lmin = crate::linalg::min_eigenvalue(q);
    if lmin < -1e-9 * scale * q.nrows() as f64 {
        return Err(Error::Internal(format!("information objective is not PSD (λmin = {lmin:.3e})")));
    }
    Ok(())
}

/// Rate- and energy-limited design; the relaxation is tight here, so the
/// result carries the globally optimal input.
pub fn run_l2_design(
    p: &MriParameters,
    s: &AcquisitionSettings,
    spec: &DesignSpec,
    opts: &DesignOptions,
) -> Result<DesignResult> {
    if spec.norm != Norm::L2 {
        return Err(Error::invalid("run_l2_design needs norm = l2"));
    }
    let inst = build_instance(p, s, spec)?;
    let result = relax::design(&inst.program, opts)?;
    if !result.exact {
        return Err(Error::Extraction {
            ratio: result.eigen_ratio.unwrap_or(f64::NAN),
            tol: opts.rank_tol,
        });
    }
    Ok(result)
}

/// Rate- and volume-limited design: bounds the optimum with the relaxation and
/// certifies the boxcar injection against it.
pub fn run_l1_certification(
    p: &MriParameters,
    s: &AcquisitionSettings,
    spec: &DesignSpec,
    opts: &DesignOptions,
) -> Result<DesignResult> {
    if spec.norm != Norm::L1 {
        return Err(Error::invalid("run_l1_certification needs norm = l1"));
    }
    let inst = build_instance(p, s, spec)?;
    let boxcar = boxcar_input(s.horizon, spec.rate_bound, spec.l1_budget)?;
    let mut result = relax::design(&inst.program, opts)?;
    let cert = relax::certify(&inst.program, &boxcar, result.relaxation_value)?;
    result.candidate_u = cert.candidate_u;
    result.candidate_value = cert.candidate_value;
    result.ratio = cert.ratio;
    Ok(result)
}
