//! Convergence checks, posterior statistics and credible bands.

use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::conductivity::Conductivity;
use crate::inference::{Chain, Parametrization};
use crate::{Error, Result};

/// Largest admissible relative difference between the two Geweke means.
pub const GEWEKE_TOLERANCE: f64 = 1e-2;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GewekeResult {
    /// Mean of the first 10% of the series.
    pub m10: f64,
    /// Mean of the last 50%.
    pub m50: f64,
    pub pass: bool,
}

/// Compares the mean of the first 10% of `series` with the mean of its last
/// 50%. Passes when both `|(m10 - m50) / m10|` and `|(m10 - m50) / m50|` are
/// at most [`GEWEKE_TOLERANCE`].
pub fn geweke(series: &[f64]) -> Result<GewekeResult> {
    let n = series.len();
    if n < 2 {
        return Err(Error::EmptyChain(format!(
            "Geweke test needs at least 2 states, got {n}"
        )));
    }
    let n10 = (n / 10).max(1);
    let n50 = (n / 2).max(1);
    let m10 = mean(&series[..n10]);
    let m50 = mean(&series[n - n50..]);
    if m10 == 0.0 {
        return Err(Error::UndefinedRatio("m10"));
    }
    if m50 == 0.0 {
        return Err(Error::UndefinedRatio("m50"));
    }
    let d = m10 - m50;
    let pass = (d / m10).abs() <= GEWEKE_TOLERANCE && (d / m50).abs() <= GEWEKE_TOLERANCE;
    Ok(GewekeResult { m10, m50, pass })
}

fn mean(x: &[f64]) -> f64 {
    x.iter().sum::<f64>() / x.len() as f64
}

/// Geweke outcome for one parameter; `error` is set when a ratio is
/// undefined, in which case the parameter does not pass.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParameterGeweke {
    pub m10: Option<f64>,
    pub m50: Option<f64>,
    pub pass: bool,
    pub error: Option<String>,
}

impl From<Result<GewekeResult>> for ParameterGeweke {
    fn from(r: Result<GewekeResult>) -> Self {
        match r {
            Ok(g) => Self {
                m10: Some(g.m10),
                m50: Some(g.m50),
                pass: g.pass,
                error: None,
            },
            Err(e) => Self {
                m10: None,
                m50: None,
                pass: false,
                error: Some(e.to_string()),
            },
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PosteriorSummary {
    pub parameter_names: Vec<String>,
    pub burn_in: usize,
    pub retained: usize,
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
    /// `std / mean · 100`.
    pub relative_std_pct: Vec<f64>,
    pub truth: Option<Vec<f64>>,
    /// `|mean - truth| / |truth| · 100`.
    pub relative_error_pct: Option<Vec<f64>>,
    pub geweke: Vec<ParameterGeweke>,
    /// All parameters pass the Geweke test.
    pub converged: bool,
    pub acceptance_ratio: f64,
}

/// Statistics of the retained states. A chain that fails the Geweke test
/// still gets a summary, with `converged = false`.
pub fn summarize(
    chain: &Chain,
    parametrization: &Parametrization,
    truth: Option<&[f64]>,
) -> Result<PosteriorSummary> {
    let r = chain.retained_len();
    if r == 0 {
        return Err(Error::EmptyChain("no states after the burn-in".into()));
    }
    let n = chain.n_params;
    if parametrization.dim() != n {
        return Err(Error::InvalidConfig(format!(
            "chain has {n} parameters, parametrization expects {}",
            parametrization.dim()
        )));
    }
    if let Some(t) = truth {
        if t.len() != n {
            return Err(Error::InvalidConfig(format!(
                "truth has {} values for {n} parameters",
                t.len()
            )));
        }
    }
    let mut mean = vec![0.0; n];
    let mut std = vec![0.0; n];
    let mut geweke_out = Vec::with_capacity(n);
    for k in 0..n {
        let s = chain.parameter_series(k);
        let m = self::mean(&s);
        let var = if r > 1 {
            s.iter().map(|v| (v - m).powi(2)).sum::<f64>() / (r - 1) as f64
        } else {
            0.0
        };
        mean[k] = m;
        std[k] = var.sqrt();
        geweke_out.push(ParameterGeweke::from(geweke(&s)));
    }
    let relative_std_pct = mean.iter().zip(&std).map(|(m, s)| s / m * 100.0).collect();
    let relative_error_pct = truth.map(|t| {
        mean.iter()
            .zip(t)
            .map(|(m, t)| ((m - t) / t).abs() * 100.0)
            .collect()
    });
    Ok(PosteriorSummary {
        parameter_names: parametrization.parameter_names(),
        burn_in: chain.burn_in,
        retained: r,
        converged: geweke_out.iter().all(|g| g.pass),
        mean,
        std,
        relative_std_pct,
        truth: truth.map(<[f64]>::to_vec),
        relative_error_pct,
        geweke: geweke_out,
        acceptance_ratio: chain.acceptance_ratio(),
    })
}

/// Earliest burn-in, in steps of `len / 20` up to half the chain, after
/// which every parameter passes the Geweke test.
pub fn suggest_burn_in(chain: &Chain) -> Option<usize> {
    let len = chain.len();
    let stride = (len / 20).max(1);
    (0..=len / 2).step_by(stride).find(|&b| {
        (0..chain.n_params).all(|k| {
            let s: Vec<f64> = chain.states().skip(b).map(|x| x[k]).collect();
            geweke(&s).is_ok_and(|g| g.pass)
        })
    })
}

/// Pointwise credible band of κ(θ).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CredibleBand {
    pub level: f64,
    pub theta: Vec<f64>,
    pub lower: Vec<f64>,
    pub mean: Vec<f64>,
    pub upper: Vec<f64>,
}

impl CredibleBand {
    pub fn width(&self, i: usize) -> f64 {
        self.upper[i] - self.lower[i]
    }

    pub fn mean_width(&self) -> f64 {
        (0..self.theta.len()).map(|i| self.width(i)).sum::<f64>() / self.theta.len() as f64
    }

    /// Whether `kappa(θᵢ)` lies in `[lower, upper]` at each grid point.
    pub fn covers(&self, kappa: &impl Conductivity) -> Vec<bool> {
        self.theta
            .iter()
            .enumerate()
            .map(|(i, &t)| {
                let k = kappa.kappa(t);
                self.lower[i] <= k && k <= self.upper[i]
            })
            .collect()
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut w = csv::Writer::from_path(path)?;
        w.write_record(["theta", "lower", "mean", "upper"])?;
        for i in 0..self.theta.len() {
            w.write_record([
                self.theta[i].to_string(),
                self.lower[i].to_string(),
                self.mean[i].to_string(),
                self.upper[i].to_string(),
            ])?;
        }
        w.flush().map_err(|e| Error::io(path, e))
    }

    pub fn read_csv(path: &Path) -> Result<Self> {
        let mut r = csv::Reader::from_path(path)?;
        let mut band = CredibleBand {
            level: f64::NAN,
            theta: vec![],
            lower: vec![],
            mean: vec![],
            upper: vec![],
        };
        for (i, rec) in r.records().enumerate() {
            let rec = rec?;
            let mut vals = [0.0; 4];
            for (c, v) in vals.iter_mut().enumerate() {
                let s = rec.get(c).unwrap_or("");
                *v = s.trim().parse().map_err(|e| Error::Parse {
                    path: path.to_path_buf(),
                    row: i + 2,
                    column: ["theta", "lower", "mean", "upper"][c].into(),
                    message: format!("{s:?}: {e}"),
                })?;
            }
            band.theta.push(vals[0]);
            band.lower.push(vals[1]);
            band.mean.push(vals[2]);
            band.upper.push(vals[3]);
        }
        if band.theta.is_empty() {
            return Err(Error::NoRows(path.to_path_buf()));
        }
        Ok(band)
    }
}

/// Quantile of sorted data with linear interpolation between order
/// statistics.
pub fn quantile_sorted(sorted: &[f64], q: f64) -> f64 {
    let h = (sorted.len() - 1) as f64 * q;
    let lo = h.floor() as usize;
    let hi = h.ceil() as usize;
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

/// Evaluates κ(θ) for every retained state and takes the `(1 ∓ level)/2`
/// quantiles and the mean at each grid point.
pub fn credible_band(
    chain: &Chain,
    parametrization: &Parametrization,
    theta_grid: &[f64],
    level: f64,
) -> Result<CredibleBand> {
    if !(level > 0.0 && level < 1.0) {
        return Err(Error::InvalidConfig(format!(
            "credible level {level} must lie in (0, 1)"
        )));
    }
    if chain.retained_len() == 0 {
        return Err(Error::EmptyChain("no states after the burn-in".into()));
    }
    if theta_grid.is_empty() {
        return Err(Error::InvalidConfig("empty temperature grid".into()));
    }
    let kappas = chain
        .retained()
        .map(|s| parametrization.kappa(s))
        .collect::<Result<Vec<_>>>()?;
    let q_lo = (1.0 - level) / 2.0;
    let q_hi = (1.0 + level) / 2.0;
    let rows: Vec<(f64, f64, f64)> = theta_grid
        .par_iter()
        .map(|&t| {
            let mut v: Vec<f64> = kappas.iter().map(|k| k.kappa(t)).collect();
            let m = mean(&v);
            v.sort_unstable_by(f64::total_cmp);
            (quantile_sorted(&v, q_lo), m, quantile_sorted(&v, q_hi))
        })
        .collect();
    Ok(CredibleBand {
        level,
        theta: theta_grid.to_vec(),
        lower: rows.iter().map(|r| r.0).collect(),
        mean: rows.iter().map(|r| r.1).collect(),
        upper: rows.iter().map(|r| r.2).collect(),
    })
}
