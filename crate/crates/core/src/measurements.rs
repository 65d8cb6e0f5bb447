//! Synthetic sensor data and its CSV representation.
//!
//! Observations are stacked sensor-major: the first `M` entries are the
//! series of the first sensor at increasing times, then the next sensor, and
//! so on. With the default sensors that is `D = [T₀-series, T₁-series]`.

use std::path::{Path, PathBuf};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::conductivity::{ConductivityModel, TemperatureRange};
use crate::forward::ForwardSolver;
use crate::{Error, Result};

/// Standard deviation of the noise relative to the noiseless temperature.
pub const RELATIVE_NOISE: f64 = 0.01;

#[derive(Debug, Clone, PartialEq)]
pub struct MeasurementSet {
    pub sensor_positions: Vec<f64>,
    /// Time-step indices `m = 1..=M` shared by all sensors.
    pub time_indices: Vec<usize>,
    /// Observed temperatures `D`, sensor-major.
    pub observed: Vec<f64>,
    /// Noise standard deviation per observation.
    pub sigma: Vec<f64>,
    /// Noiseless forward solution `T`, when known.
    pub noiseless: Option<Vec<f64>>,
    pub seed: Option<u64>,
}

/// Sidecar manifest written next to the CSV.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MeasurementManifest {
    pub seed: Option<u64>,
    pub noise_scale: f64,
    pub relative_noise: f64,
    pub dtau: Option<f64>,
    pub n_steps: usize,
    pub sensor_positions: Vec<f64>,
    pub truth: Option<ConductivityModel>,
}

impl MeasurementSet {
    pub fn n_steps(&self) -> usize {
        self.time_indices.len()
    }

    pub fn n_sensors(&self) -> usize {
        self.sensor_positions.len()
    }

    pub fn len(&self) -> usize {
        self.observed.len()
    }

    pub fn is_empty(&self) -> bool {
        self.observed.is_empty()
    }

    /// Observations of one sensor, in time order.
    pub fn sensor_series(&self, sensor: usize) -> &[f64] {
        let m = self.n_steps();
        &self.observed[sensor * m..(sensor + 1) * m]
    }

    /// Minimum and maximum of the observed temperatures.
    pub fn theta_range(&self) -> Result<TemperatureRange> {
        let (lo, hi) = self
            .observed
            .iter()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &v| {
                (a.min(v), b.max(v))
            });
        TemperatureRange::new(lo, hi)
    }

    pub fn validate(&self) -> Result<()> {
        let u = self.n_steps() * self.n_sensors();
        if u == 0 {
            return Err(Error::InvalidConfig("measurement set is empty".into()));
        }
        if self.observed.len() != u || self.sigma.len() != u {
            return Err(Error::InvalidConfig(format!(
                "expected {u} observations and sigmas, got {} and {}",
                self.observed.len(),
                self.sigma.len()
            )));
        }
        if let Some(t) = &self.noiseless {
            if t.len() != u {
                return Err(Error::InvalidConfig(
                    "noiseless series has wrong length".into(),
                ));
            }
        }
        if let Some(j) = self.sigma.iter().position(|&s| !(s > 0.0 && s.is_finite())) {
            return Err(Error::InvalidConfig(format!(
                "sigma[{j}] = {} is not strictly positive",
                self.sigma[j]
            )));
        }
        if self.observed.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidConfig("non-finite observation".into()));
        }
        Ok(())
    }

    /// Writes the CSV and a sidecar manifest at `path` with extension `json`.
    pub fn save(&self, path: &Path, manifest: &MeasurementManifest) -> Result<()> {
        let mut w = csv::Writer::from_path(path).map_err(|e| csv_io(path, e))?;
        w.write_record(["time_index", "sensor_X", "T_noiseless", "D", "sigma"])?;
        let m = self.n_steps();
        for (s, x) in self.sensor_positions.iter().enumerate() {
            for (k, idx) in self.time_indices.iter().enumerate() {
                let j = s * m + k;
                let t = self
                    .noiseless
                    .as_ref()
                    .map(|t| t[j].to_string())
                    .unwrap_or_default();
                w.write_record([
                    idx.to_string(),
                    x.to_string(),
                    t,
                    self.observed[j].to_string(),
                    self.sigma[j].to_string(),
                ])?;
            }
        }
        w.flush().map_err(|e| Error::io(path, e))?;
        let json = serde_json::to_string_pretty(manifest)?;
        std::fs::write(manifest_path(path), json).map_err(|e| Error::io(path, e))
    }

    /// Reads a CSV written by [`MeasurementSet::save`]. The `T_noiseless`
    /// column may be missing or empty; the seed comes from the sidecar
    /// manifest when one exists.
    pub fn load(path: &Path) -> Result<Self> {
        let mut r = csv::ReaderBuilder::new()
            .trim(csv::Trim::All)
            .from_path(path)
            .map_err(|e| csv_io(path, e))?;
        let headers = r.headers()?.clone();
        let col = |name: &str| headers.iter().position(|h| h == name);
        let need = |name: &'static str| {
            col(name).ok_or_else(|| Error::Parse {
                path: path.to_path_buf(),
                row: 1,
                column: name.into(),
                message: "missing column".into(),
            })
        };
        let (c_idx, c_x, c_d, c_sigma) = if headers.is_empty() {
            return Err(Error::NoRows(path.to_path_buf()));
        } else {
            (
                need("time_index")?,
                need("sensor_X")?,
                need("D")?,
                need("sigma")?,
            )
        };
        let c_t = col("T_noiseless");

        struct Row {
            idx: usize,
            x: f64,
            t: Option<f64>,
            d: f64,
            sigma: f64,
        }
        let mut rows = Vec::new();
        for rec in r.records() {
            let rec = rec?;
            let line = rec.position().map_or(0, |p| p.line() as usize);
            let cell = |c: usize, name: &str| -> Result<&str> {
                rec.get(c).ok_or_else(|| Error::Parse {
                    path: path.to_path_buf(),
                    row: line,
                    column: name.into(),
                    message: "missing cell".into(),
                })
            };
            let num = |c: usize, name: &str| -> Result<f64> {
                let s = cell(c, name)?;
                s.parse::<f64>().map_err(|e| Error::Parse {
                    path: path.to_path_buf(),
                    row: line,
                    column: name.into(),
                    message: format!("{s:?}: {e}"),
                })
            };
            let idx_s = cell(c_idx, "time_index")?;
            let idx = idx_s.parse::<usize>().map_err(|e| Error::Parse {
                path: path.to_path_buf(),
                row: line,
                column: "time_index".into(),
                message: format!("{idx_s:?}: {e}"),
            })?;
            let t = match c_t {
                Some(c) if !cell(c, "T_noiseless")?.is_empty() => Some(num(c, "T_noiseless")?),
                _ => None,
            };
            rows.push(Row {
                idx,
                x: num(c_x, "sensor_X")?,
                t,
                d: num(c_d, "D")?,
                sigma: num(c_sigma, "sigma")?,
            });
        }
        if rows.is_empty() {
            return Err(Error::NoRows(path.to_path_buf()));
        }

        let mut sensors: Vec<f64> = Vec::new();
        for row in &rows {
            if !sensors.contains(&row.x) {
                sensors.push(row.x);
            }
        }
        let mut per_sensor: Vec<Vec<&Row>> = sensors
            .iter()
            .map(|x| rows.iter().filter(|r| r.x == *x).collect())
            .collect();
        for s in per_sensor.iter_mut() {
            s.sort_by_key(|r| r.idx);
        }
        let time_indices: Vec<usize> = per_sensor[0].iter().map(|r| r.idx).collect();
        for (s, series) in per_sensor.iter().enumerate() {
            let idx: Vec<usize> = series.iter().map(|r| r.idx).collect();
            if idx != time_indices {
                return Err(Error::InvalidConfig(format!(
                    "{}: sensor at X = {} has different time indices than the first sensor",
                    path.display(),
                    sensors[s]
                )));
            }
        }
        let flat: Vec<&Row> = per_sensor.into_iter().flatten().collect();
        let noiseless = if flat.iter().all(|r| r.t.is_some()) {
            Some(flat.iter().map(|r| r.t.unwrap_or_default()).collect())
        } else {
            None
        };
        let seed = std::fs::read_to_string(manifest_path(path))
            .ok()
            .and_then(|s| serde_json::from_str::<MeasurementManifest>(&s).ok())
            .and_then(|m| m.seed);
        let set = Self {
            sensor_positions: sensors,
            time_indices,
            observed: flat.iter().map(|r| r.d).collect(),
            sigma: flat.iter().map(|r| r.sigma).collect(),
            noiseless,
            seed,
        };
        set.validate()?;
        Ok(set)
    }
}

fn csv_io(path: &Path, e: csv::Error) -> Error {
    match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::io(path, io),
        other => Error::InvalidConfig(format!("{}: {other:?}", path.display())),
    }
}

pub fn manifest_path(csv_path: &Path) -> PathBuf {
    csv_path.with_extension("json")
}

/// Forward-solves with the true model and adds independent Gaussian noise
/// with `σⱼ = Tⱼ/100`. `noise_scale` multiplies the drawn noise only; `0.0`
/// gives `D = T` with the same σ.
pub fn generate_synthetic(
    solver: &ForwardSolver,
    truth: &ConductivityModel,
    seed: u64,
    noise_scale: f64,
) -> Result<MeasurementSet> {
    if !(noise_scale >= 0.0 && noise_scale.is_finite()) {
        return Err(Error::InvalidConfig(format!(
            "noise scale must be non-negative, got {noise_scale}"
        )));
    }
    let kappa = truth.prepare()?;
    let t = solver.solve(&kappa)?.stacked();
    let sigma: Vec<f64> = t.iter().map(|v| v * RELATIVE_NOISE).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let observed = t
        .iter()
        .zip(&sigma)
        .map(|(tj, sj)| {
            let z: f64 = StandardNormal.sample(&mut rng);
            tj + noise_scale * sj * z
        })
        .collect();
    let set = MeasurementSet {
        sensor_positions: solver.sensor_positions.clone(),
        time_indices: (1..=solver.grid.n_steps).collect(),
        observed,
        sigma,
        noiseless: Some(t),
        seed: Some(seed),
    };
    set.validate()?;
    Ok(set)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::forward::{nondimensionalize, Mesh, PhysicalConfig};

    const TRUTH: [f64; 4] = [0.0810, -0.4860, 0.0918, 4.2060];

    fn solver() -> ForwardSolver {
        let (p, g) = nondimensionalize(&PhysicalConfig::default()).unwrap();
        ForwardSolver::new(p, Mesh::uniform(5).unwrap(), g, &[0.0, 1.0]).unwrap()
    }

    fn small() -> MeasurementSet {
        MeasurementSet {
            sensor_positions: vec![0.0, 1.0],
            time_indices: vec![1, 2],
            observed: vec![1.1, 1.2, 1.0 / 3.0, 1.0],
            sigma: vec![0.011, 0.012, 0.01, 0.01],
            noiseless: None,
            seed: None,
        }
    }

    #[test]
    fn default_sizes_and_reproducibility() {
        let s = solver();
        let truth = ConductivityModel::cubic(TRUTH);
        let a = generate_synthetic(&s, &truth, 42, 1.0).unwrap();
        assert_eq!(a.n_steps(), 3000);
        assert_eq!(a.len(), 6000);
        let b = generate_synthetic(&s, &truth, 42, 1.0).unwrap();
        assert_eq!(a, b);
        let c = generate_synthetic(&s, &truth, 43, 1.0).unwrap();
        assert_ne!(a.observed, c.observed);

        let t = a.noiseless.as_ref().unwrap();
        let series = s.solve(&truth.prepare().unwrap()).unwrap();
        assert_eq!(
            t[..3000],
            (0..3000).map(|m| series.get(m, 0)).collect::<Vec<_>>()[..]
        );
        for (sj, tj) in a.sigma.iter().zip(t) {
            assert!((sj - tj / 100.0).abs() <= 1e-15 * tj);
        }
    }

    #[test]
    fn noise_off_reproduces_truth() {
        let s = solver();
        let set = generate_synthetic(&s, &ConductivityModel::cubic(TRUTH), 1, 0.0).unwrap();
        assert_eq!(Some(&set.observed), set.noiseless.as_ref());
    }

    #[test]
    fn noise_statistics() {
        let s = solver();
        let set = generate_synthetic(&s, &ConductivityModel::cubic(TRUTH), 7, 1.0).unwrap();
        let t = set.noiseless.as_ref().unwrap();
        let u = set.len() as f64;
        let rel: Vec<f64> = set
            .observed
            .iter()
            .zip(t)
            .map(|(d, t)| (d - t) / t)
            .collect();
        let mean = rel.iter().sum::<f64>() / u;
        let std = (rel.iter().map(|r| (r - mean).powi(2)).sum::<f64>() / (u - 1.0)).sqrt();
        assert!((std - 0.01).abs() <= 0.01 * 3.0 / u.sqrt(), "std {std}");

        let z: Vec<f64> = set
            .observed
            .iter()
            .zip(t)
            .zip(&set.sigma)
            .map(|((d, t), s)| (d - t) / s)
            .collect();
        let zm = z.iter().sum::<f64>() / u;
        let var: f64 = z.iter().map(|v| (v - zm).powi(2)).sum();
        let lag1: f64 = z.windows(2).map(|w| (w[0] - zm) * (w[1] - zm)).sum::<f64>() / var;
        assert!(lag1.abs() < 3.0 / u.sqrt(), "lag-1 autocorrelation {lag1}");
    }

    #[test]
    fn csv_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.csv");
        let s = solver();
        let truth = ConductivityModel::cubic(TRUTH);
        let set = generate_synthetic(&s, &truth, 42, 1.0).unwrap();
        let manifest = MeasurementManifest {
            seed: set.seed,
            noise_scale: 1.0,
            relative_noise: RELATIVE_NOISE,
            dtau: Some(s.grid.dtau),
            n_steps: set.n_steps(),
            sensor_positions: set.sensor_positions.clone(),
            truth: Some(truth),
        };
        set.save(&path, &manifest).unwrap();
        let back = MeasurementSet::load(&path).unwrap();
        assert_eq!(back, set);
    }

    #[test]
    fn load_without_noiseless_column() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("real.csv");
        std::fs::write(
            &path,
            "time_index,sensor_X,D,sigma\n1,0,1.1,0.011\n2,0,1.2,0.012\n1,1,0.9,0.01\n2,1,1,0.01\n",
        )
        .unwrap();
        let set = MeasurementSet::load(&path).unwrap();
        assert_eq!(set.noiseless, None);
        assert_eq!(set.sensor_series(1), &[0.9, 1.0]);
        assert_eq!(set.seed, None);
    }

    #[test]
    fn save_load_small_exact() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("s.csv");
        let set = small();
        let manifest = MeasurementManifest {
            seed: None,
            noise_scale: 1.0,
            relative_noise: RELATIVE_NOISE,
            dtau: None,
            n_steps: 2,
            sensor_positions: set.sensor_positions.clone(),
            truth: None,
        };
        set.save(&path, &manifest).unwrap();
        assert_eq!(MeasurementSet::load(&path).unwrap(), set);
    }

    #[test]
    fn non_numeric_cell_is_located() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("bad.csv");
        std::fs::write(
            &path,
            "time_index,sensor_X,T_noiseless,D,sigma\n1,0,,1.0,0.01\n2,0,,abc,0.01\n",
        )
        .unwrap();
        match MeasurementSet::load(&path) {
            Err(Error::Parse { row, column, .. }) => {
                assert_eq!(row, 3);
                assert_eq!(column, "D");
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn empty_file_has_no_rows() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("empty.csv");
        std::fs::write(&path, "").unwrap();
        let err = MeasurementSet::load(&path).unwrap_err();
        assert!(matches!(err, Error::NoRows(_)));
        assert!(err.to_string().ends_with("no rows"));

        std::fs::write(&path, "time_index,sensor_X,T_noiseless,D,sigma\n").unwrap();
        assert!(matches!(MeasurementSet::load(&path), Err(Error::NoRows(_))));
    }

    #[test]
    fn range_from_observations() {
        let r = small().theta_range().unwrap();
        assert_eq!(r.theta_min, 1.0 / 3.0);
        assert_eq!(r.theta_max, 1.2);
    }
}
