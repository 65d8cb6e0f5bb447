//! Random-walk Metropolis-Hastings with Gaussian proposals, and the
//! adaptive-covariance variant used to tune the proposal.

use std::path::Path;

use log::{debug, warn};
use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::LogDensity;
use crate::linalg::cholesky_lower;
use crate::{Error, Result};

/// Every state of a Markov chain, rejected proposals included as repeats.
#[derive(Debug, Clone, PartialEq)]
pub struct Chain {
    pub n_params: usize,
    /// Row-major `len × n_params`.
    pub samples: Vec<f64>,
    pub log_posterior: Vec<f64>,
    /// Accepted proposals over the whole run.
    pub accepted: usize,
    /// Proposals made over the whole run (differs from `len()` when thinned).
    pub proposals: usize,
    /// Number of leading states to discard.
    pub burn_in: usize,
    pub seed: u64,
    /// Row-major `n_params × n_params`.
    pub proposal_covariance: Vec<f64>,
    /// Stored states are every `thin`-th state of the run.
    pub thin: usize,
}

impl Chain {
    fn new(n_params: usize, seed: u64, capacity: usize, thin: usize) -> Self {
        Self {
            n_params,
            samples: Vec::with_capacity(capacity * n_params),
            log_posterior: Vec::with_capacity(capacity),
            accepted: 0,
            proposals: 0,
            burn_in: 0,
            seed,
            proposal_covariance: Vec::new(),
            thin,
        }
    }

    pub fn len(&self) -> usize {
        self.log_posterior.len()
    }

    pub fn is_empty(&self) -> bool {
        self.log_posterior.is_empty()
    }

    pub fn state(&self, i: usize) -> &[f64] {
        &self.samples[i * self.n_params..(i + 1) * self.n_params]
    }

    pub fn states(&self) -> impl Iterator<Item = &[f64]> {
        self.samples.chunks_exact(self.n_params)
    }

    /// States after the burn-in.
    pub fn retained(&self) -> impl Iterator<Item = &[f64]> {
        self.states().skip(self.burn_in)
    }

    pub fn retained_len(&self) -> usize {
        self.len().saturating_sub(self.burn_in)
    }

    /// Series of one parameter over the retained states.
    pub fn parameter_series(&self, k: usize) -> Vec<f64> {
        self.retained().map(|s| s[k]).collect()
    }

    pub fn acceptance_ratio(&self) -> f64 {
        if self.proposals == 0 {
            0.0
        } else {
            self.accepted as f64 / self.proposals as f64
        }
    }

    pub fn last(&self) -> Option<&[f64]> {
        (!self.is_empty()).then(|| self.state(self.len() - 1))
    }

    pub fn set_burn_in(&mut self, burn_in: usize) -> Result<()> {
        if burn_in >= self.len() {
            return Err(Error::InvalidConfig(format!(
                "burn-in {burn_in} must be smaller than the chain length {}",
                self.len()
            )));
        }
        self.burn_in = burn_in;
        Ok(())
    }

    fn push(&mut self, x: &[f64], lp: f64) {
        self.samples.extend_from_slice(x);
        self.log_posterior.push(lp);
    }

    /// A chain holding the given states, with unknown log densities.
    pub fn from_states(n_params: usize, states: &[Vec<f64>]) -> Self {
        let mut c = Self::new(n_params, 0, states.len(), 1);
        for s in states {
            assert_eq!(s.len(), n_params, "state has wrong dimension");
            c.push(s, f64::NAN);
        }
        c
    }

    /// CSV with header `step,<names...>,log_posterior`.
    pub fn write_csv(&self, path: &Path, names: &[String]) -> Result<()> {
        if names.len() != self.n_params {
            return Err(Error::InvalidConfig(
                "parameter names do not match the chain".into(),
            ));
        }
        let mut w = csv::Writer::from_path(path)?;
        let mut header = vec!["step".to_string()];
        header.extend(names.iter().cloned());
        header.push("log_posterior".into());
        w.write_record(&header)?;
        let mut row = Vec::with_capacity(self.n_params + 2);
        for (i, s) in self.states().enumerate() {
            row.clear();
            row.push((i * self.thin).to_string());
            row.extend(s.iter().map(|v| v.to_string()));
            row.push(self.log_posterior[i].to_string());
            w.write_record(&row)?;
        }
        w.flush().map_err(|e| Error::io(path, e))
    }

    /// Reads the states written by [`Chain::write_csv`]; run statistics
    /// (acceptance counts, proposal covariance) are not part of the file.
    pub fn read_csv(path: &Path) -> Result<(Vec<String>, Self)> {
        let mut r = csv::Reader::from_path(path)?;
        let headers = r.headers()?.clone();
        if headers.len() < 3 {
            return Err(Error::Parse {
                path: path.to_path_buf(),
                row: 1,
                column: String::new(),
                message: "expected step, parameters and log_posterior columns".into(),
            });
        }
        let names: Vec<String> = headers
            .iter()
            .skip(1)
            .take(headers.len() - 2)
            .map(String::from)
            .collect();
        let n = names.len();
        let mut chain = Self::new(n, 0, 0, 1);
        let mut steps = Vec::new();
        let mut x = vec![0.0; n];
        for (i, rec) in r.records().enumerate() {
            let rec = rec?;
            let num = |c: usize| -> Result<f64> {
                let s = rec.get(c).unwrap_or("");
                s.trim().parse().map_err(|e| Error::Parse {
                    path: path.to_path_buf(),
                    row: i + 2,
                    column: headers.get(c).unwrap_or("").into(),
                    message: format!("{s:?}: {e}"),
                })
            };
            steps.push(num(0)?);
            for (k, v) in x.iter_mut().enumerate() {
                *v = num(k + 1)?;
            }
            let lp = num(n + 1)?;
            chain.push(&x, lp);
        }
        if chain.is_empty() {
            return Err(Error::NoRows(path.to_path_buf()));
        }
        if steps.len() > 1 {
            chain.thin = (steps[1] - steps[0]).max(1.0) as usize;
        }
        Ok((names, chain))
    }
}

/// Tuning of the adaptive phase.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AdaptiveConfig {
    pub steps: usize,
    /// Steps with the isotropic proposal before the empirical covariance
    /// is used; `None` means `10·N`.
    pub warmup: Option<usize>,
    /// Covariance scaling; `None` means `2.38²/N`.
    pub scale: Option<f64>,
    /// Diagonal regularization added to the empirical covariance.
    pub epsilon: f64,
    /// Initial proposal standard deviation relative to `|init|`.
    pub initial_rel_std: f64,
    pub initial_std_floor: f64,
    /// Acceptance rate targeted by a stochastic-approximation update of a
    /// global factor on the proposal covariance; `None` keeps the factor at 1.
    pub target_acceptance: Option<f64>,
    /// Estimate the covariance from the recent part of the history only,
    /// restarting the estimate each time the run length doubles.
    pub forget: bool,
    /// Number of leading adaptive states left out of the covariance that
    /// is handed to the fixed-proposal phase; `None` means half the run.
    pub discard: Option<usize>,
    /// Keep every `thin`-th state in the returned chain.
    pub thin: usize,
    /// Refactor the proposal covariance every this many steps; `None`
    /// means `max(1, N/4)`.
    pub update_every: Option<usize>,
}

impl Default for AdaptiveConfig {
    fn default() -> Self {
        Self {
            steps: 20_000,
            warmup: None,
            scale: None,
            epsilon: 1e-10,
            initial_rel_std: 0.05,
            initial_std_floor: 0.01,
            target_acceptance: Some(0.25),
            forget: true,
            discard: None,
            thin: 1,
            update_every: None,
        }
    }
}

/// Running mean and scatter matrix (Welford).
#[derive(Debug, Clone)]
struct RunningCovariance {
    n: usize,
    count: usize,
    mean: Vec<f64>,
    scatter: Vec<f64>,
    delta: Vec<f64>,
}

impl RunningCovariance {
    fn new(n: usize) -> Self {
        Self {
            n,
            count: 0,
            mean: vec![0.0; n],
            scatter: vec![0.0; n * n],
            delta: vec![0.0; n],
        }
    }

    fn push(&mut self, x: &[f64]) {
        self.count += 1;
        let inv = 1.0 / self.count as f64;
        for i in 0..self.n {
            self.delta[i] = x[i] - self.mean[i];
            self.mean[i] += self.delta[i] * inv;
        }
        for i in 0..self.n {
            let di = self.delta[i];
            let row = &mut self.scatter[i * self.n..(i + 1) * self.n];
            for j in 0..=i {
                // (x - old mean)ᵢ (x - new mean)ⱼ
                row[j] += di * (x[j] - self.mean[j]);
            }
        }
    }

    /// Unbiased covariance, full symmetric matrix.
    fn covariance(&self) -> Vec<f64> {
        let n = self.n;
        let d = (self.count.max(2) - 1) as f64;
        let mut c = vec![0.0; n * n];
        for i in 0..n {
            for j in 0..=i {
                let v = self.scatter[i * n + j] / d;
                c[i * n + j] = v;
                c[j * n + i] = v;
            }
        }
        c
    }
}

fn regularized(cov: &[f64], n: usize, scale: f64, eps: f64) -> Vec<f64> {
    let mut c: Vec<f64> = cov.iter().map(|v| v * scale).collect();
    for i in 0..n {
        c[i * n + i] += scale * eps;
    }
    c
}

/// `out = x + √λ·L·z` with `z` standard normal.
fn propose(
    rng: &mut ChaCha8Rng,
    x: &[f64],
    chol: &DMatrix<f64>,
    lambda: f64,
    z: &mut [f64],
    out: &mut [f64],
) {
    let n = x.len();
    let f = lambda.sqrt();
    for zi in z.iter_mut() {
        *zi = f * rng.sample::<f64, _>(StandardNormal);
    }
    for i in 0..n {
        let mut acc = x[i];
        for j in 0..=i {
            acc += chol[(i, j)] * z[j];
        }
        out[i] = acc;
    }
}

#[inline]
fn accept(rng: &mut ChaCha8Rng, lp_new: f64, lp_old: f64) -> bool {
    if lp_new == f64::NEG_INFINITY || lp_new.is_nan() {
        return false;
    }
    let delta = lp_new - lp_old;
    delta >= 0.0 || rng.random::<f64>().ln() < delta
}

fn start<T: LogDensity>(target: &T, init: &[f64]) -> Result<f64> {
    if init.len() != target.dim() {
        return Err(Error::InvalidConfig(format!(
            "initial state has {} components, target has {}",
            init.len(),
            target.dim()
        )));
    }
    let lp = target.ln_density(init);
    if !lp.is_finite() {
        return Err(Error::OutsideSupport(format!(
            "initial state {init:?} has log density {lp}"
        )));
    }
    Ok(lp)
}

/// Result of the adaptive phase.
#[derive(Debug, Clone)]
pub struct Adapted {
    /// Proposal covariance for the fixed-proposal phase, row-major.
    pub covariance: Vec<f64>,
    pub chain: Chain,
}

/// Adaptive Metropolis: after an isotropic warm-up the proposal covariance
/// is `λ·s_d·(Cov + ε·I)`, with `Cov` the empirical covariance of the chain
/// and `λ` a global factor driven towards the target acceptance rate.
///
/// The returned covariance is built the same way from the states after
/// `cfg.discard`, so the climb from a poor initial guess does not inflate it.
pub fn run_adaptive<T: LogDensity>(
    target: &T,
    init: &[f64],
    cfg: &AdaptiveConfig,
    seed: u64,
) -> Result<Adapted> {
    let n = target.dim();
    let mut lp = start(target, init)?;
    let update_every = cfg.update_every.unwrap_or((n / 4).max(1));
    if cfg.steps == 0 || cfg.thin == 0 || update_every == 0 {
        return Err(Error::InvalidConfig(
            "adaptive steps, thin and update_every must be positive".into(),
        ));
    }
    if let Some(a) = cfg.target_acceptance {
        if !(a > 0.0 && a < 1.0) {
            return Err(Error::InvalidConfig(format!(
                "target acceptance {a} must lie in (0, 1)"
            )));
        }
    }
    let warmup = cfg.warmup.unwrap_or(10 * n);
    let base_scale = cfg.scale.unwrap_or(2.38 * 2.38 / n as f64);
    let discard = cfg.discard.unwrap_or(cfg.steps / 2).min(cfg.steps - 1);
    let mut log_lambda = 0.0_f64;

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut x = init.to_vec();
    let mut y = vec![0.0; n];
    let mut z = vec![0.0; n];

    let mut chol = DMatrix::<f64>::zeros(n, n);
    for i in 0..n {
        chol[(i, i)] = (cfg.initial_rel_std * init[i].abs()).max(cfg.initial_std_floor);
    }

    let mut active = RunningCovariance::new(n);
    active.push(&x);
    // started at `recent_start`; replaces `active` once it spans half the run
    let mut recent = RunningCovariance::new(n);
    let mut recent_start = warmup.max(1);
    let mut tail = RunningCovariance::new(n);

    let mut chain = Chain::new(n, seed, cfg.steps / cfg.thin + 1, cfg.thin);

    for t in 0..cfg.steps {
        if cfg.forget && t >= 2 * recent_start {
            std::mem::swap(&mut active, &mut recent);
            recent = RunningCovariance::new(n);
            recent_start = t;
        }
        if t >= warmup && (t - warmup).is_multiple_of(update_every) && active.count > n {
            let c = regularized(&active.covariance(), n, base_scale, cfg.epsilon);
            match cholesky_lower(n, &c) {
                Ok(l) => chol = l,
                Err(_) => debug!("adaptive covariance not positive-definite at step {t}; keeping previous factor"),
            }
        }

        propose(&mut rng, &x, &chol, log_lambda.exp(), &mut z, &mut y);
        let lp_new = target.ln_density(&y);
        chain.proposals += 1;
        let alpha = if lp_new.is_nan() || lp_new == f64::NEG_INFINITY {
            0.0
        } else {
            (lp_new - lp).exp().min(1.0)
        };
        if accept(&mut rng, lp_new, lp) {
            x.copy_from_slice(&y);
            lp = lp_new;
            chain.accepted += 1;
        }
        if let Some(a) = cfg.target_acceptance {
            let gain = (t as f64 + 1.0).powf(-0.6);
            log_lambda = (log_lambda + gain * (alpha - a)).clamp(-40.0, 10.0);
        }

        active.push(&x);
        if cfg.forget && t >= recent_start {
            recent.push(&x);
        }
        if t >= discard {
            tail.push(&x);
        }
        if (t + 1) % cfg.thin == 0 {
            chain.push(&x, lp);
        }
    }

    let lambda = log_lambda.exp();
    if lambda < 1e-3 {
        warn!("adaptive proposal factor fell to {lambda:.3e}; the chain may not have reached equilibrium");
    }
    let covariance = regularized(&tail.covariance(), n, lambda * base_scale, cfg.epsilon);
    chain.proposal_covariance = covariance.clone();
    Ok(Adapted { covariance, chain })
}

/// Metropolis-Hastings with a fixed Gaussian random-walk proposal.
pub fn run_mh<T: LogDensity>(
    target: &T,
    init: &[f64],
    covariance: &[f64],
    steps: usize,
    seed: u64,
) -> Result<Chain> {
    let n = target.dim();
    if covariance.len() != n * n {
        return Err(Error::InvalidConfig(format!(
            "proposal covariance has {} entries, expected {}",
            covariance.len(),
            n * n
        )));
    }
    let chol = cholesky_lower(n, covariance)?;
    let mut lp = start(target, init)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut x = init.to_vec();
    let mut y = vec![0.0; n];
    let mut z = vec![0.0; n];
    let mut chain = Chain::new(n, seed, steps, 1);
    chain.proposal_covariance = covariance.to_vec();

    for _ in 0..steps {
        propose(&mut rng, &x, &chol, 1.0, &mut z, &mut y);
        let lp_new = target.ln_density(&y);
        chain.proposals += 1;
        if accept(&mut rng, lp_new, lp) {
            x.copy_from_slice(&y);
            lp = lp_new;
            chain.accepted += 1;
        }
        chain.push(&x, lp);
    }
    Ok(chain)
}
