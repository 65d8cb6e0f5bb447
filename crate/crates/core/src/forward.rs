//! Dimensionless 1D transient heat conduction with temperature-dependent
//! conductivity.
//!
//! The slab `0 ≤ X ≤ 1` starts at θ = 1, receives a unit flux at `X = 0`
//! and exchanges heat with an ambient medium at `X = 1`. Space is discretized
//! with linear elements on a uniform mesh, time with backward Euler, and the
//! conductivity of each element is evaluated explicitly at the mean of its
//! nodal temperatures from the previous time level.

use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::conductivity::Conductivity;
use crate::linalg::Tridiagonal;
use crate::{Error, Result};

/// Dimensional description of the experiment (SI units).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PhysicalConfig {
    /// Slab length (m).
    pub length: f64,
    /// Initial temperature (K).
    pub initial_temperature: f64,
    /// Heat flux imposed at x = 0 (W/m²).
    pub heat_flux: f64,
    /// Heat transfer coefficient at x = L (W/m²·K).
    pub heat_transfer_coefficient: f64,
    /// Ambient temperature (K).
    pub ambient_temperature: f64,
    /// Density (kg/m³).
    pub density: f64,
    /// Specific heat (J/kg·K).
    pub specific_heat: f64,
    /// Time step (s).
    pub time_step: f64,
    /// Total measurement time (s).
    pub duration: f64,
}

impl Default for PhysicalConfig {
    /// Steel slab heated for ten minutes, sampled every 0.2 s.
    fn default() -> Self {
        Self {
            length: 0.01,
            initial_temperature: 300.0,
            heat_flux: 500e3,
            heat_transfer_coefficient: 600.0,
            ambient_temperature: 300.0,
            density: 7870.0,
            specific_heat: 486.0,
            time_step: 0.2,
            duration: 600.0,
        }
    }
}

impl PhysicalConfig {
    pub fn validate(&self) -> Result<()> {
        let fields = [
            ("length", self.length),
            ("initial_temperature", self.initial_temperature),
            ("heat_flux", self.heat_flux),
            ("heat_transfer_coefficient", self.heat_transfer_coefficient),
            ("ambient_temperature", self.ambient_temperature),
            ("density", self.density),
            ("specific_heat", self.specific_heat),
            ("time_step", self.time_step),
            ("duration", self.duration),
        ];
        for (name, v) in fields {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::InvalidConfig(format!(
                    "{name} must be strictly positive, got {v}"
                )));
            }
        }
        self.n_steps().map(|_| ())
    }

    fn n_steps(&self) -> Result<usize> {
        let ratio = self.duration / self.time_step;
        let n = ratio.round();
        if n < 1.0 || (ratio - n).abs() > 1e-9 * n {
            return Err(Error::InvalidConfig(format!(
                "duration {} s is not an integer multiple of the time step {} s",
                self.duration, self.time_step
            )));
        }
        Ok(n as usize)
    }
}

/// The physical parameters that survive nondimensionalization.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DimensionlessProblem {
    /// Dimensionless heat transfer coefficient `h T0 / q`.
    pub h: f64,
    /// Dimensionless ambient temperature `T∞ / T0`.
    pub theta_inf: f64,
    /// Always 1 by construction of the temperature scale.
    pub theta_init: f64,
}

impl DimensionlessProblem {
    pub fn new(h: f64, theta_inf: f64) -> Result<Self> {
        if !(h > 0.0 && theta_inf > 0.0 && h.is_finite() && theta_inf.is_finite()) {
            return Err(Error::InvalidConfig(format!(
                "H and theta_inf must be positive, got H = {h}, theta_inf = {theta_inf}"
            )));
        }
        Ok(Self {
            h,
            theta_inf,
            theta_init: 1.0,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TimeGrid {
    pub dtau: f64,
    pub n_steps: usize,
}

impl TimeGrid {
    pub fn new(dtau: f64, n_steps: usize) -> Result<Self> {
        if !(dtau > 0.0 && dtau.is_finite()) || n_steps == 0 {
            return Err(Error::InvalidConfig(format!(
                "time grid needs dtau > 0 and at least one step, got dtau = {dtau}, steps = {n_steps}"
            )));
        }
        Ok(Self { dtau, n_steps })
    }

    /// τ_m for m = 1..=n_steps.
    pub fn tau(&self, m: usize) -> f64 {
        m as f64 * self.dtau
    }
}

/// Scales the dimensional problem by L, T0, q and ρc_p.
pub fn nondimensionalize(cfg: &PhysicalConfig) -> Result<(DimensionlessProblem, TimeGrid)> {
    cfg.validate()?;
    let problem = DimensionlessProblem::new(
        cfg.heat_transfer_coefficient * cfg.initial_temperature / cfg.heat_flux,
        cfg.ambient_temperature / cfg.initial_temperature,
    )?;
    let dtau = cfg.heat_flux * cfg.time_step
        / (cfg.density * cfg.specific_heat * cfg.initial_temperature * cfg.length);
    let grid = TimeGrid::new(dtau, cfg.n_steps()?)?;
    Ok((problem, grid))
}

/// Uniform mesh of `[0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Mesh {
    pub n_elements: usize,
    pub dx: f64,
    pub node_coords: Vec<f64>,
}

impl Mesh {
    pub fn uniform(n_elements: usize) -> Result<Self> {
        if n_elements == 0 {
            return Err(Error::InvalidConfig(
                "mesh needs at least one element".into(),
            ));
        }
        let dx = 1.0 / n_elements as f64;
        let mut node_coords: Vec<f64> = (0..=n_elements).map(|i| i as f64 * dx).collect();
        node_coords[n_elements] = 1.0;
        Ok(Self {
            n_elements,
            dx,
            node_coords,
        })
    }

    pub fn n_nodes(&self) -> usize {
        self.n_elements + 1
    }

    /// Index of the node at `x`, if there is one.
    pub fn node_index(&self, x: f64) -> Result<usize> {
        let i = (x / self.dx).round();
        if !(0.0..=self.n_elements as f64).contains(&i)
            || (self.node_coords[i as usize] - x).abs() > 1e-9 * self.dx
        {
            return Err(Error::SensorNotOnMesh(x));
        }
        Ok(i as usize)
    }
}

/// Nodal dimensionless temperatures at one time level.
#[derive(Debug, Clone, PartialEq)]
pub struct StateField {
    pub theta: Vec<f64>,
}

impl StateField {
    pub fn uniform(mesh: &Mesh, value: f64) -> Self {
        Self {
            theta: vec![value; mesh.n_nodes()],
        }
    }

    pub fn initial(mesh: &Mesh, problem: &DimensionlessProblem) -> Self {
        Self::uniform(mesh, problem.theta_init)
    }
}

/// Consistent mass matrix of linear hat functions.
pub fn assemble_capacity(mesh: &Mesh) -> Tridiagonal {
    let n = mesh.n_nodes();
    let mut c = Tridiagonal::zeros(n);
    let (d, o) = (mesh.dx / 3.0, mesh.dx / 6.0);
    for e in 0..mesh.n_elements {
        c.diag[e] += d;
        c.diag[e + 1] += d;
        c.upper[e] += o;
        c.lower[e] += o;
    }
    c
}

#[inline]
fn element_kappa(kappa: &impl Conductivity, theta: &[f64], e: usize) -> Result<f64> {
    let mean = 0.5 * (theta[e] + theta[e + 1]);
    let k = kappa.kappa(mean);
    if !(k > 0.0 && k.is_finite()) {
        return Err(Error::NonPositiveConductivity {
            element: e,
            theta: mean,
            kappa: k,
        });
    }
    Ok(k)
}

/// Conductance matrix with κ per element taken at the mean nodal temperature.
pub fn assemble_conductance(
    mesh: &Mesh,
    kappa: &impl Conductivity,
    theta_m: &StateField,
) -> Result<Tridiagonal> {
    let mut k = Tridiagonal::zeros(mesh.n_nodes());
    for e in 0..mesh.n_elements {
        let s = element_kappa(kappa, &theta_m.theta, e)? / mesh.dx;
        k.diag[e] += s;
        k.diag[e + 1] += s;
        k.upper[e] -= s;
        k.lower[e] -= s;
    }
    Ok(k)
}

/// One backward-Euler step `[(1/Δτ)C + Kᵐ + G] θᵐ⁺¹ = (1/Δτ)Cθᵐ + g`.
pub fn step(
    theta_m: &StateField,
    problem: &DimensionlessProblem,
    mesh: &Mesh,
    grid: &TimeGrid,
    kappa: &impl Conductivity,
) -> Result<StateField> {
    let solver = ForwardSolver::new(*problem, mesh.clone(), *grid, &[])?;
    let mut ws = solver.workspace();
    ws.theta.copy_from_slice(&theta_m.theta);
    solver.advance(&mut ws, kappa)?;
    Ok(StateField { theta: ws.theta })
}

/// Time series at the sensors, one row per step `m = 1..=M`.
#[derive(Debug, Clone, PartialEq)]
pub struct SensorSeries {
    pub n_steps: usize,
    pub n_sensors: usize,
    /// Row-major `n_steps × n_sensors`.
    pub values: Vec<f64>,
}

impl SensorSeries {
    pub fn get(&self, m: usize, sensor: usize) -> f64 {
        self.values[m * self.n_sensors + sensor]
    }

    /// Sensor-major stacking: all steps of sensor 0, then sensor 1, ...
    pub fn stacked(&self) -> Vec<f64> {
        (0..self.n_sensors)
            .flat_map(|s| (0..self.n_steps).map(move |m| (m, s)))
            .map(|(m, s)| self.get(m, s))
            .collect()
    }

    pub fn max(&self) -> f64 {
        self.values
            .iter()
            .copied()
            .fold(f64::NEG_INFINITY, f64::max)
    }
}

/// Reusable buffers for one solve.
#[derive(Debug, Clone)]
pub struct Workspace {
    pub theta: Vec<f64>,
    rhs: Vec<f64>,
    scratch: Vec<f64>,
    system: Tridiagonal,
}

/// A discretized problem with its sensors, ready to be solved for any κ.
///
/// Holds no mutable state; concurrent solves from several threads are fine.
#[derive(Debug, Clone)]
pub struct ForwardSolver {
    pub problem: DimensionlessProblem,
    pub mesh: Mesh,
    pub grid: TimeGrid,
    pub sensor_positions: Vec<f64>,
    sensor_nodes: Vec<usize>,
    capacity: Tridiagonal,
}

impl ForwardSolver {
    pub fn new(
        problem: DimensionlessProblem,
        mesh: Mesh,
        grid: TimeGrid,
        sensor_positions: &[f64],
    ) -> Result<Self> {
        let sensor_nodes = sensor_positions
            .iter()
            .map(|&x| mesh.node_index(x))
            .collect::<Result<Vec<_>>>()?;
        let capacity = assemble_capacity(&mesh);
        Ok(Self {
            problem,
            mesh,
            grid,
            sensor_positions: sensor_positions.to_vec(),
            sensor_nodes,
            capacity,
        })
    }

    pub fn capacity(&self) -> &Tridiagonal {
        &self.capacity
    }

    pub fn sensor_nodes(&self) -> &[usize] {
        &self.sensor_nodes
    }

    pub fn n_sensors(&self) -> usize {
        self.sensor_nodes.len()
    }

    pub fn workspace(&self) -> Workspace {
        let n = self.mesh.n_nodes();
        Workspace {
            theta: vec![self.problem.theta_init; n],
            rhs: vec![0.0; n],
            scratch: vec![0.0; n],
            system: Tridiagonal::zeros(n),
        }
    }

    /// Advances `ws.theta` by one time step.
    pub fn advance(&self, ws: &mut Workspace, kappa: &impl Conductivity) -> Result<()> {
        let n = self.mesh.n_nodes();
        let inv_dt = 1.0 / self.grid.dtau;
        let inv_dx = 1.0 / self.mesh.dx;
        let c = &self.capacity;
        let a = &mut ws.system;

        for i in 0..n {
            a.diag[i] = c.diag[i] * inv_dt;
        }
        for e in 0..n - 1 {
            a.upper[e] = c.upper[e] * inv_dt;
            a.lower[e] = c.lower[e] * inv_dt;
        }
        for e in 0..self.mesh.n_elements {
            let s = element_kappa(kappa, &ws.theta, e)? * inv_dx;
            a.diag[e] += s;
            a.diag[e + 1] += s;
            a.upper[e] -= s;
            a.lower[e] -= s;
        }
        a.diag[n - 1] += self.problem.h;

        c.mul_vec(&ws.theta, &mut ws.rhs);
        for r in ws.rhs.iter_mut() {
            *r *= inv_dt;
        }
        ws.rhs[0] += 1.0;
        ws.rhs[n - 1] += self.problem.h * self.problem.theta_inf;

        a.solve_in_place(&mut ws.rhs, &mut ws.scratch)?;
        std::mem::swap(&mut ws.theta, &mut ws.rhs);
        Ok(())
    }

    /// Runs all steps from the initial condition, handing the full nodal
    /// field after each step `m` (0-based) to `visit`.
    pub fn run(
        &self,
        kappa: &impl Conductivity,
        mut visit: impl FnMut(usize, &[f64]),
    ) -> Result<()> {
        let mut ws = self.workspace();
        for m in 0..self.grid.n_steps {
            self.advance(&mut ws, kappa)?;
            visit(m, &ws.theta);
        }
        Ok(())
    }

    /// Sensor time series for `m = 1..=M`; the initial condition is not
    /// included.
    pub fn solve(&self, kappa: &impl Conductivity) -> Result<SensorSeries> {
        let ns = self.n_sensors();
        let mut values = Vec::with_capacity(self.grid.n_steps * ns);
        self.run(kappa, |_, theta| {
            values.extend(self.sensor_nodes.iter().map(|&i| theta[i]));
        })?;
        Ok(SensorSeries {
            n_steps: self.grid.n_steps,
            n_sensors: ns,
            values,
        })
    }

    /// Writes the full nodal field as CSV with header `tau,X0,...`.
    pub fn dump_field(&self, kappa: &impl Conductivity, path: &Path) -> Result<()> {
        let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        let mut w = std::io::BufWriter::new(file);
        let header: Vec<String> = std::iter::once("tau".to_string())
            .chain((0..self.mesh.n_nodes()).map(|i| format!("X{i}")))
            .collect();
        writeln!(w, "{}", header.join(",")).map_err(|e| Error::io(path, e))?;
        let mut io_err = None;
        self.run(kappa, |m, theta| {
            if io_err.is_some() {
                return;
            }
            let mut line = format!("{}", self.grid.tau(m + 1));
            for t in theta {
                line.push(',');
                line.push_str(&t.to_string());
            }
            if let Err(e) = writeln!(w, "{line}") {
                io_err = Some(e);
            }
        })?;
        if let Some(e) = io_err {
            return Err(Error::io(path, e));
        }
        w.flush().map_err(|e| Error::io(path, e))
    }
}

/// Convenience wrapper: builds a solver and runs it once.
pub fn solve_forward(
    problem: &DimensionlessProblem,
    mesh: &Mesh,
    grid: &TimeGrid,
    kappa: &impl Conductivity,
    sensor_positions: &[f64],
) -> Result<SensorSeries> {
    ForwardSolver::new(*problem, mesh.clone(), *grid, sensor_positions)?.solve(kappa)
}
