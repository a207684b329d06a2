//! Zero-order-hold discretization with exact parameter derivatives.
//!
//! With `M = [[Ac, Bc], [0, 0]]`, `exp(M·dt) = [[A, B], [0, I]]`. The
//! derivative of that map along `dM = [[∂Ac, ∂Bc], [0, 0]]` is the upper-right
//! block of `exp([[M, dM], [0, M]]·dt)` (Van Loan), which yields `∂A` and `∂B`
//! together.

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::linalg::{expm, one_norm};

#[derive(Debug, Clone, PartialEq)]
pub struct ContinuousModel {
    pub ac: DMatrix<f64>,
    pub bc: DMatrix<f64>,
    pub dac: Vec<DMatrix<f64>>,
    pub dbc: Vec<DMatrix<f64>>,
    pub dt: f64,
}

/// Discretized `A`, `B` and their parameter derivatives.
#[derive(Debug, Clone, PartialEq)]
pub struct DiscreteBlock {
    pub a: DMatrix<f64>,
    pub b: DMatrix<f64>,
    pub da: Vec<DMatrix<f64>>,
    pub db: Vec<DMatrix<f64>>,
}

fn checked_expm(m: &DMatrix<f64>, dt: f64, ac: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    expm(m).map_err(|e| match e {
        Error::Numeric(_) => Error::Numeric(format!(
            "zero-order hold with dt = {dt} overflowed (spectral bound ||Ac||_1*dt = {:.3e})",
            one_norm(ac) * dt
        )),
        other => other,
    })
}

pub fn zoh_discretize(cm: &ContinuousModel) -> Result<DiscreteBlock> {
    let n = cm.ac.nrows();
    let nu = cm.bc.ncols();
    if !cm.dt.is_finite() || cm.dt <= 0.0 {
        return Err(Error::invalid(format!("sampling interval must be positive, got {}", cm.dt)));
    }
    if cm.ac.ncols() != n || cm.bc.nrows() != n {
        return Err(Error::invalid(format!(
            "Ac is {}x{} but Bc is {}x{}",
            n,
            cm.ac.ncols(),
            cm.bc.nrows(),
            nu
        )));
    }
    if cm.dac.len() != cm.dbc.len() {
        return Err(Error::invalid("dAc and dBc must list the same parameters"));
    }
    for (i, (da, db)) in cm.dac.iter().zip(&cm.dbc).enumerate() {
        if da.shape() != (n, n) || db.shape() != (n, nu) {
            return Err(Error::invalid(format!("partials for parameter {i} have wrong shape")));
        }
    }
    let all_finite = cm.ac.iter().chain(cm.bc.iter()).all(|x| x.is_finite())
        && cm.dac.iter().chain(&cm.dbc).all(|m| m.iter().all(|x| x.is_finite()));
    if !all_finite {
        return Err(Error::invalid("continuous model has non-finite entries"));
    }

    let k = n + nu;
    let mut m = DMatrix::zeros(k, k);
    m.view_mut((0, 0), (n, n)).copy_from(&cm.ac);
    m.view_mut((0, n), (n, nu)).copy_from(&cm.bc);
    let m = m * cm.dt;
    let e = checked_expm(&m, cm.dt, &cm.ac)?;
    let a = e.view((0, 0), (n, n)).into_owned();
    let b = e.view((0, n), (n, nu)).into_owned();

    let mut da = Vec::with_capacity(cm.dac.len());
    let mut db = Vec::with_capacity(cm.dac.len());
    for (dac, dbc) in cm.dac.iter().zip(&cm.dbc) {
        let mut big = DMatrix::zeros(2 * k, 2 * k);
        big.view_mut((0, 0), (k, k)).copy_from(&m);
        big.view_mut((k, k), (k, k)).copy_from(&m);
        big.view_mut((0, k), (n, n)).copy_from(&(dac * cm.dt));
        big.view_mut((0, k + n), (n, nu)).copy_from(&(dbc * cm.dt));
        let eb = checked_expm(&big, cm.dt, &cm.ac)?;
        da.push(eb.view((0, k), (n, n)).into_owned());
        db.push(eb.view((0, k + n), (n, nu)).into_owned());
    }
    Ok(DiscreteBlock { a, b, da, db })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn scalar(a: f64, b: f64, dt: f64) -> ContinuousModel {
        ContinuousModel {
            ac: DMatrix::from_element(1, 1, a),
            bc: DMatrix::from_element(1, 1, b),
            dac: vec![DMatrix::from_element(1, 1, 1.0)],
            dbc: vec![DMatrix::from_element(1, 1, 0.0)],
            dt,
        }
    }

    #[test]
    fn zero_dynamics_is_integrator() {
        let d = zoh_discretize(&ContinuousModel {
            ac: DMatrix::zeros(2, 2),
            bc: DMatrix::from_column_slice(2, 1, &[1.5, -2.0]),
            dac: vec![],
            dbc: vec![],
            dt: 0.5,
        })
        .unwrap();
        assert_eq!(d.a, DMatrix::identity(2, 2));
        assert_relative_eq!(d.b[(0, 0)], 0.75, max_relative = 1e-15);
        assert_relative_eq!(d.b[(1, 0)], -1.0, max_relative = 1e-15);
    }

    #[test]
    fn scalar_closed_form() {
        for &(a, b, dt) in &[(-0.3, 2.0, 2.0), (0.7, -1.0, 0.25), (-5.0, 0.5, 1.0)] {
            let d = zoh_discretize(&scalar(a, b, dt)).unwrap();
            let ea: f64 = (a * dt).exp();
            assert_relative_eq!(d.a[(0, 0)], ea, max_relative = 1e-14);
            assert_relative_eq!(d.b[(0, 0)], (ea - 1.0) * b / a, max_relative = 1e-13);
            // d/da e^{a dt} = dt e^{a dt};  d/da (e^{a dt}-1) b/a
            assert_relative_eq!(d.da[0][(0, 0)], dt * ea, max_relative = 1e-13);
            let dbda = b * (dt * ea * a - (ea - 1.0)) / (a * a);
            assert_relative_eq!(d.db[0][(0, 0)], dbda, max_relative = 1e-12);
        }
    }

    #[test]
    fn rejects_nonpositive_dt() {
        assert!(zoh_discretize(&scalar(1.0, 1.0, 0.0)).is_err());
        assert!(zoh_discretize(&scalar(1.0, 1.0, -1.0)).is_err());
    }

    #[test]
    fn overflow_names_dt() {
        let err = zoh_discretize(&scalar(900.0, 1.0, 2.0)).unwrap_err().to_string();
        assert!(err.contains("dt = 2") && err.contains("spectral bound"), "{err}");
    }

    #[test]
    fn half_steps_compose() {
        let ac = DMatrix::from_row_slice(3, 3, &[-0.4, 0.2, 0.0, 0.1, -0.9, 0.3, 0.05, 0.0, -0.2]);
        let mk = |dt| ContinuousModel {
            ac: ac.clone(),
            bc: DMatrix::from_column_slice(3, 1, &[1.0, 0.0, 0.5]),
            dac: vec![],
            dbc: vec![],
            dt,
        };
        let full = zoh_discretize(&mk(2.0)).unwrap();
        let half = zoh_discretize(&mk(1.0)).unwrap();
        let sq = &half.a * &half.a;
        for (x, y) in full.a.iter().zip(sq.iter()) {
            assert_relative_eq!(*x, *y, max_relative = 1e-10, epsilon = 1e-15);
        }
    }

    #[test]
    fn derivatives_match_finite_differences() {
        let base = DMatrix::from_row_slice(2, 2, &[-0.3, 0.1, 0.2, -0.5]);
        let dac = DMatrix::from_row_slice(2, 2, &[-1.0, 0.0, 1.0, 0.0]);
        let dbc = DMatrix::from_column_slice(2, 1, &[0.4, -0.1]);
        let bc = DMatrix::from_column_slice(2, 1, &[1.0, 0.3]);
        let at = |s: f64| ContinuousModel {
            ac: &base + &dac * s,
            bc: &bc + &dbc * s,
            dac: vec![dac.clone()],
            dbc: vec![dbc.clone()],
            dt: 2.0,
        };
        let d = zoh_discretize(&at(0.0)).unwrap();
        let h = 1e-5;
        let p = zoh_discretize(&at(h)).unwrap();
        let m = zoh_discretize(&at(-h)).unwrap();
        let fda = (p.a - m.a) / (2.0 * h);
        let fdb = (p.b - m.b) / (2.0 * h);
        for (x, y) in d.da[0].iter().zip(fda.iter()) {
            assert_relative_eq!(*x, *y, max_relative = 1e-7, epsilon = 1e-10);
        }
        for (x, y) in d.db[0].iter().zip(fdb.iter()) {
            assert_relative_eq!(*x, *y, max_relative = 1e-7, epsilon = 1e-10);
        }
    }
}
