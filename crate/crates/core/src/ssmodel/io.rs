//! JSON model documents and CSV trajectory export.

use std::io::Write;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::{OutputMap, ParameterPartials, ParameterizedModel, Trajectory};
use crate::error::{Error, Result};
use crate::linalg::{from_rows, to_rows};

/// Row-major JSON form of a [`ParameterizedModel`].
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelDocument {
    pub n: usize,
    pub n_u: usize,
    pub n_y: usize,
    #[serde(rename = "N")]
    pub horizon: usize,
    #[serde(rename = "A")]
    pub a: Vec<Vec<f64>>,
    #[serde(rename = "B")]
    pub b: Vec<Vec<f64>>,
    #[serde(rename = "C")]
    pub c: OutputDocument,
    #[serde(rename = "Sigma")]
    pub sigma: Vec<Vec<f64>>,
    pub x0: Vec<f64>,
    pub params: Vec<ParamDocument>,
}

/// `C` is either one n_y×n matrix or a list of N+1 of them.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(untagged)]
pub enum OutputDocument {
    Constant(Vec<Vec<f64>>),
    Schedule(Vec<Vec<Vec<f64>>>),
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ParamDocument {
    pub name: String,
    #[serde(rename = "dA")]
    pub da: Vec<Vec<f64>>,
    #[serde(rename = "dB")]
    pub db: Vec<Vec<f64>>,
    pub dx0: Vec<f64>,
}

fn matrix(field: &str, rows: &[Vec<f64>], nrows: usize, ncols: usize) -> Result<DMatrix<f64>> {
    let m = from_rows(rows).map_err(|_| Error::Model(format!("field '{field}': ragged rows")))?;
    if m.nrows() != nrows || m.ncols() != ncols {
        return Err(Error::Model(format!(
            "field '{field}': expected {nrows}x{ncols}, got {}x{}",
            m.nrows(),
            m.ncols()
        )));
    }
    Ok(m)
}

fn vector(field: &str, v: &[f64], len: usize) -> Result<DVector<f64>> {
    if v.len() != len {
        return Err(Error::Model(format!(
            "field '{field}': expected length {len}, got {}",
            v.len()
        )));
    }
    Ok(DVector::from_column_slice(v))
}

impl ModelDocument {
    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn into_model(self) -> Result<ParameterizedModel> {
        let (n, nu, ny) = (self.n, self.n_u, self.n_y);
        let a = matrix("A", &self.a, n, n)?;
        let b = matrix("B", &self.b, n, nu)?;
        let c = match &self.c {
            OutputDocument::Constant(rows) => OutputMap::Constant(matrix("C", rows, ny, n)?),
            OutputDocument::Schedule(list) => OutputMap::Schedule(
                list.iter()
                    .enumerate()
                    .map(|(t, rows)| matrix(&format!("C[{t}]"), rows, ny, n))
                    .collect::<Result<_>>()?,
            ),
        };
        let sigma = matrix("Sigma", &self.sigma, ny, ny)?;
        let x0 = vector("x0", &self.x0, n)?;
        let params = self
            .params
            .iter()
            .enumerate()
            .map(|(i, p)| {
                Ok(ParameterPartials {
                    name: p.name.clone(),
                    da: matrix(&format!("params[{i}].dA"), &p.da, n, n)?,
                    db: matrix(&format!("params[{i}].dB"), &p.db, n, nu)?,
                    dx0: vector(&format!("params[{i}].dx0"), &p.dx0, n)?,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        ParameterizedModel::new(a, b, c, sigma, x0, params, self.horizon)
    }

    pub fn from_model(model: &ParameterizedModel) -> Self {
        Self {
            n: model.n(),
            n_u: model.n_u(),
            n_y: model.n_y(),
            horizon: model.horizon(),
            a: to_rows(model.a()),
            b: to_rows(model.b()),
            c: match model.output_map() {
                OutputMap::Constant(c) => OutputDocument::Constant(to_rows(c)),
                OutputMap::Schedule(cs) => OutputDocument::Schedule(cs.iter().map(to_rows).collect()),
            },
            sigma: to_rows(model.sigma()),
            x0: model.x0().iter().copied().collect(),
            params: model
                .params()
                .iter()
                .map(|p| ParamDocument {
                    name: p.name.clone(),
                    da: to_rows(&p.da),
                    db: to_rows(&p.db),
                    dx0: p.dx0.iter().copied().collect(),
                })
                .collect(),
        }
    }
}

fn fmt_num(x: f64) -> String {
    format!("{x:.16e}")
}

/// Writes `t,u_1..u_nu,x_1..x_n,y_1..y_ny`, one row per sample `t = 0..=N`.
/// The input columns are empty on the last row, where no input is applied.
pub fn write_trajectory_csv<W: Write>(
    model: &ParameterizedModel,
    u: &[f64],
    traj: &Trajectory,
    mut out: W,
) -> Result<()> {
    model.check_input(u)?;
    let (nu, n, ny) = (model.n_u(), model.n(), model.n_y());
    let mut header = vec!["t".to_string()];
    header.extend((1..=nu).map(|j| format!("u_{j}")));
    header.extend((1..=n).map(|h| format!("x_{h}")));
    header.extend((1..=ny).map(|h| format!("y_{h}")));
    writeln!(out, "{}", header.join(","))?;
    for t in 0..=model.horizon() {
        let mut row = vec![t.to_string()];
        for j in 0..nu {
            row.push(if t < model.horizon() { fmt_num(u[t * nu + j]) } else { String::new() });
        }
        row.extend(traj.states.row(t).iter().map(|&x| fmt_num(x)));
        row.extend(traj.outputs.row(t).iter().map(|&x| fmt_num(x)));
        writeln!(out, "{}", row.join(","))?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ssmodel::{simulate, testing::scalar_model};

    #[test]
    fn json_round_trip() {
        let m = scalar_model(0.5, 4);
        let doc = ModelDocument::from_model(&m);
        let back = ModelDocument::from_json(&doc.to_json().unwrap())
            .unwrap()
            .into_model()
            .unwrap();
        assert_eq!(back, m);
    }

    #[test]
    fn shape_error_names_field() {
        let text = r#"{"n":2,"n_u":1,"n_y":1,"N":3,"A":[[1,0],[0,1]],"B":[[1],[0]],
            "C":[[1,0]],"Sigma":[[1]],"x0":[0,0],
            "params":[{"name":"k","dA":[[0,0],[0,0]],"dB":[[1],[0],[0]],"dx0":[0,0]}]}"#;
        let err = ModelDocument::from_json(text).unwrap().into_model().unwrap_err();
        assert!(err.to_string().contains("params[0].dB"), "{err}");
    }

    #[test]
    fn malformed_json_reports_position() {
        let err = ModelDocument::from_json("{\"n\": 2,\n \"n_u\": }").unwrap_err();
        assert!(err.to_string().contains("line 2"), "{err}");
    }

    #[test]
    fn csv_layout() {
        let m = scalar_model(0.5, 3);
        let u = [1.0, 0.0, 0.0];
        let traj = simulate(&m, &u).unwrap();
        let mut buf = Vec::new();
        write_trajectory_csv(&m, &u, &traj, &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let lines: Vec<_> = text.lines().collect();
        assert_eq!(lines[0], "t,u_1,x_1,y_1");
        assert_eq!(lines.len(), 5);
        assert!(lines[4].starts_with("3,,"));
        let x2: f64 = lines[3].split(',').nth(2).unwrap().parse().unwrap();
        assert_eq!(x2, 0.5);
    }
}
