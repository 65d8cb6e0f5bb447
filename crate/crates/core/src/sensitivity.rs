//! Finite-difference sensitivity of the sensor temperatures to the model
//! parameters, and the identifiability measures derived from it.

use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::conductivity::TemperatureRange;
use crate::forward::ForwardSolver;
use crate::inference::ParameterVector;
use crate::{Error, Result};

pub const DEFAULT_EPSILON: f64 = 1e-5;

/// Sensitivity matrix `J` with one row per measurement (sensor-major, so
/// `[J₀; J₁]` for two sensors) and one column per parameter.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SensitivityReport {
    pub n_rows: usize,
    pub n_params: usize,
    /// Row-major `n_rows × n_params`.
    pub j: Vec<f64>,
    pub det_jtj: f64,
    /// `ln |JᵀJ|`; stays finite where the determinant under- or overflows.
    pub log_det_jtj: f64,
    pub column_max_abs: Vec<f64>,
    pub epsilon: f64,
    pub parameter_names: Vec<String>,
}

impl SensitivityReport {
    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.j[row * self.n_params + col]
    }

    pub fn column(&self, col: usize) -> Vec<f64> {
        (0..self.n_rows).map(|r| self.get(r, col)).collect()
    }

    pub fn from_matrix(
        j: Vec<f64>,
        n_rows: usize,
        n_params: usize,
        epsilon: f64,
        parameter_names: Vec<String>,
    ) -> Result<Self> {
        if j.len() != n_rows * n_params || parameter_names.len() != n_params {
            return Err(Error::InvalidConfig(
                "sensitivity matrix has wrong shape".into(),
            ));
        }
        let m = DMatrix::from_row_slice(n_rows, n_params, &j);
        let (det_jtj, log_det_jtj) = gram_determinant(&m);
        let column_max_abs = (0..n_params)
            .map(|c| m.column(c).iter().fold(0.0_f64, |a, v| a.max(v.abs())))
            .collect();
        Ok(Self {
            n_rows,
            n_params,
            j,
            det_jtj,
            log_det_jtj,
            column_max_abs,
            epsilon,
            parameter_names,
        })
    }

    /// CSV with one column per parameter.
    pub fn write_csv(&self, path: &std::path::Path) -> Result<()> {
        let mut w = csv::Writer::from_path(path)?;
        w.write_record(&self.parameter_names)?;
        for r in 0..self.n_rows {
            w.write_record(
                self.j[r * self.n_params..(r + 1) * self.n_params]
                    .iter()
                    .map(|v| v.to_string()),
            )?;
        }
        w.flush().map_err(|e| Error::io(path, e))
    }
}

/// Determinant and log-determinant of `JᵀJ` through an LU factorization.
fn gram_determinant(j: &DMatrix<f64>) -> (f64, f64) {
    let gram = j.transpose() * j;
    let lu = gram.lu();
    let det = lu.determinant();
    let u = lu.u();
    let mut log_det = 0.0;
    for i in 0..u.nrows() {
        log_det += u[(i, i)].abs().ln();
    }
    (det, log_det)
}

/// Central differences with relative step: column `n` is
/// `(T(P⁺) - T(P⁻)) / (2 ε Pₙ)` where `P±` scales component `n` by `1 ± ε`.
pub fn sensitivity_matrix(
    solver: &ForwardSolver,
    p_ref: &ParameterVector,
    range: TemperatureRange,
    epsilon: f64,
) -> Result<SensitivityReport> {
    if !(epsilon > 0.0 && epsilon < 1.0) {
        return Err(Error::InvalidConfig(format!(
            "epsilon {epsilon} must lie in (0, 1)"
        )));
    }
    let param = &p_ref.parametrization;
    let p = &p_ref.values;
    if let Some(n) = p.iter().position(|&v| v == 0.0) {
        return Err(Error::ZeroParameter(n));
    }
    if !param.is_positive(p, range) {
        return Err(Error::OutsideSupport(format!("reference {p:?}")));
    }
    let n_params = p.len();
    let columns: Vec<Vec<f64>> = (0..n_params)
        .into_par_iter()
        .map(|n| {
            let solve = |factor: f64| -> Result<Vec<f64>> {
                let mut q = p.clone();
                q[n] *= factor;
                if !param.is_positive(&q, range) {
                    return Err(Error::OutsideSupport(format!(
                        "parameter {n} perturbed by factor {factor}"
                    )));
                }
                Ok(solver.solve(&param.kappa(&q)?)?.stacked())
            };
            let plus = solve(1.0 + epsilon)?;
            let minus = solve(1.0 - epsilon)?;
            let h = 2.0 * epsilon * p[n];
            Ok(plus.iter().zip(&minus).map(|(a, b)| (a - b) / h).collect())
        })
        .collect::<Result<_>>()?;
    let n_rows = columns[0].len();
    let mut j = vec![0.0; n_rows * n_params];
    for (c, col) in columns.iter().enumerate() {
        for (r, v) in col.iter().enumerate() {
            j[r * n_params + c] = *v;
        }
    }
    SensitivityReport::from_matrix(j, n_rows, n_params, epsilon, param.parameter_names())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IdentifiabilitySummary {
    pub det_jtj: f64,
    pub log_det_jtj: f64,
    pub threshold: f64,
    pub ill_conditioned: bool,
    pub message: String,
    /// Parameter names from largest to smallest column magnitude.
    pub ranking: Vec<String>,
    pub column_max_abs: Vec<f64>,
}

/// Flags `|JᵀJ| < threshold` and ranks the parameters by how strongly the
/// measurements respond to them.
pub fn identifiability_summary(
    report: &SensitivityReport,
    threshold: f64,
) -> IdentifiabilitySummary {
    let mut order: Vec<usize> = (0..report.n_params).collect();
    order.sort_by(|&a, &b| report.column_max_abs[b].total_cmp(&report.column_max_abs[a]));
    let ill = !(report.det_jtj.abs() >= threshold);
    let message = if ill {
        "ill-conditioned, det ≈ 0".to_string()
    } else {
        format!("|JᵀJ| = {:.4e}", report.det_jtj)
    };
    IdentifiabilitySummary {
        det_jtj: report.det_jtj,
        log_det_jtj: report.log_det_jtj,
        threshold,
        ill_conditioned: ill,
        message,
        ranking: order
            .iter()
            .map(|&i| report.parameter_names[i].clone())
            .collect(),
        column_max_abs: report.column_max_abs.clone(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn names(n: usize) -> Vec<String> {
        (1..=n).map(|i| format!("p{i}")).collect()
    }

    #[test]
    fn determinant_of_known_matrix() {
        // JᵀJ = [[2, 1], [1, 2]]
        let j = vec![1.0, 0.0, 0.0, 1.0, 1.0, 1.0];
        let r = SensitivityReport::from_matrix(j, 3, 2, 1e-5, names(2)).unwrap();
        assert!((r.det_jtj - 3.0).abs() < 1e-12);
        assert!((r.log_det_jtj - 3f64.ln()).abs() < 1e-12);
        assert_eq!(r.column_max_abs, vec![1.0, 1.0]);
    }

    #[test]
    fn zero_column_is_flagged() {
        let j = vec![1.0, 0.0, 2.0, 0.0, 3.0, 0.0];
        let r = SensitivityReport::from_matrix(j, 3, 2, 1e-5, names(2)).unwrap();
        let s = identifiability_summary(&r, 1e-8);
        assert!(s.ill_conditioned);
        assert_eq!(s.message, "ill-conditioned, det ≈ 0");
        assert_eq!(s.ranking, vec!["p1", "p2"]);
    }

    #[test]
    fn row_order_does_not_matter() {
        let j = vec![1.0, 2.0, 0.5, -1.0, 3.0, 0.25];
        let swapped = vec![3.0, 0.25, 1.0, 2.0, 0.5, -1.0];
        let a = SensitivityReport::from_matrix(j, 3, 2, 1e-5, names(2)).unwrap();
        let b = SensitivityReport::from_matrix(swapped, 3, 2, 1e-5, names(2)).unwrap();
        assert!((a.det_jtj - b.det_jtj).abs() < 1e-12 * a.det_jtj.abs());
    }
}
