//! End-to-end acceptance checks. Prints one PASS/FAIL line per criterion and
//! exits non-zero if any criterion fails.
//!
//! Set `HEATCOND_ACCEPTANCE_OUT` to keep the run directories.

use std::collections::HashMap;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::{Path, PathBuf};
use std::process::Command;
use std::sync::Mutex;
use std::time::Instant;

use heatcond::conductivity::{Conductivity, ConductivityModel, Cubic, TemperatureRange};
use heatcond::diagnostics::geweke;
use heatcond::forward::{nondimensionalize, ForwardSolver, Mesh, PhysicalConfig, TimeGrid};
use heatcond::inference::{
    run_adaptive, run_mh, AdaptiveConfig, LogDensity, ParameterVector, Parametrization, Prior,
};
use heatcond::measurements::generate_synthetic;
use heatcond::sensitivity::sensitivity_matrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde_json::Value;

const TRUTH: [f64; 4] = [0.0810, -0.4860, 0.0918, 4.2060];
const TABLE_STD: [f64; 4] = [0.0851, 0.0239, 0.0100, 0.0279];
const INFER_PRESETS: [&str; 11] = [
    "cubic-uniform",
    "cubic-normal-10",
    "cubic-normal-1",
    "coeffs-uniform",
    "coeffs-normal-10",
    "coeffs-normal-1",
    "gmrf-qexact-2e-5",
    "gmrf-qexact-2e-4",
    "gmrf-qexact-2e-3",
    "gmrf-qneg",
    "gmrf-q0",
];

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: impl Into<String>) -> Outcome {
    Outcome {
        pass,
        detail: detail.into(),
    }
}

/// Runs `heatcond infer` once per preset and remembers the run directory.
struct Runs {
    root: PathBuf,
    done: Mutex<HashMap<String, PathBuf>>,
}

impl Runs {
    fn infer(&self, preset: &str) -> PathBuf {
        if let Some(d) = self.done.lock().unwrap().get(preset) {
            return d.clone();
        }
        let mut cmd = Command::new(env!("CARGO_BIN_EXE_heatcond"));
        cmd.args(["infer", "--preset", preset])
            .arg("--out")
            .arg(&self.root);
        if preset.starts_with("gmrf") {
            cmd.args(["--scale", "desk"]);
        }
        if preset == "cubic-uniform" {
            cmd.args(["--chains", "3"]);
        }
        let out = cmd.output().expect("cannot start heatcond");
        assert!(
            out.status.success(),
            "infer --preset {preset} failed: {}",
            String::from_utf8_lossy(&out.stderr)
        );
        let dir = self.root.join(preset);
        self.done.lock().unwrap().insert(preset.into(), dir.clone());
        dir
    }

    fn summary(&self, preset: &str, chain: usize) -> Value {
        let path = self
            .infer(preset)
            .join(format!("chain-{chain}/summary.json"));
        serde_json::from_slice(&std::fs::read(&path).unwrap()).unwrap()
    }

    fn band(&self, preset: &str) -> Band {
        Band::read(&self.infer(preset).join("chain-0/band.csv"))
    }
}

struct Band {
    theta: Vec<f64>,
    lower: Vec<f64>,
    mean: Vec<f64>,
    upper: Vec<f64>,
}

impl Band {
    fn read(path: &Path) -> Self {
        let mut b = Band {
            theta: vec![],
            lower: vec![],
            mean: vec![],
            upper: vec![],
        };
        for rec in csv::Reader::from_path(path).unwrap().records() {
            let r: Vec<f64> = rec.unwrap().iter().map(|x| x.parse().unwrap()).collect();
            b.theta.push(r[0]);
            b.lower.push(r[1]);
            b.mean.push(r[2]);
            b.upper.push(r[3]);
        }
        b
    }

    fn mean_width(&self) -> f64 {
        self.upper
            .iter()
            .zip(&self.lower)
            .map(|(u, l)| u - l)
            .sum::<f64>()
            / self.theta.len() as f64
    }

    fn nearest(&self, theta: f64) -> usize {
        (0..self.theta.len())
            .min_by(|&a, &b| {
                (self.theta[a] - theta)
                    .abs()
                    .total_cmp(&(self.theta[b] - theta).abs())
            })
            .unwrap()
    }
}

fn floats(v: &Value) -> Vec<f64> {
    v.as_array()
        .unwrap()
        .iter()
        .map(|x| x.as_f64().unwrap())
        .collect()
}

fn reference_solver() -> ForwardSolver {
    let (p, g) = nondimensionalize(&PhysicalConfig::default()).unwrap();
    ForwardSolver::new(p, Mesh::uniform(5).unwrap(), g, &[0.0, 1.0]).unwrap()
}

fn data_range(solver: &ForwardSolver) -> TemperatureRange {
    generate_synthetic(solver, &ConductivityModel::cubic(TRUTH), 42, 1.0)
        .unwrap()
        .theta_range()
        .unwrap()
}

fn c1_constants(_: &Runs) -> Outcome {
    let (p, g) = nondimensionalize(&PhysicalConfig::default()).unwrap();
    let pass = (p.h - 0.36).abs() < 1e-12
        && (p.theta_inf - 1.0).abs() < 1e-12
        && (g.dtau / 8.716e-3 - 1.0).abs() <= 5e-3
        && g.n_steps == 3000;
    outcome(
        pass,
        format!(
            "H = {}, θ∞ = {}, Δτ = {:.4e}, M = {}",
            p.h, p.theta_inf, g.dtau, g.n_steps
        ),
    )
}

fn c2_energy_balance(_: &Runs) -> Outcome {
    let solver = reference_solver();
    let truth = Cubic::new(TRUTH);
    let (h, inf, dt) = (solver.problem.h, solver.problem.theta_inf, solver.grid.dtau);
    let mut ws = solver.workspace();
    let n = ws.theta.len();
    let mut worst = 0.0_f64;
    let mut diff = vec![0.0; n];
    let mut cd = vec![0.0; n];
    for _ in 0..solver.grid.n_steps {
        let prev = ws.theta.clone();
        solver.advance(&mut ws, &truth).unwrap();
        for i in 0..n {
            diff[i] = ws.theta[i] - prev[i];
        }
        solver.capacity().mul_vec(&diff, &mut cd);
        // stored energy rate = flux in at X=0 minus convective loss at X=1
        let residual = cd.iter().sum::<f64>() / dt - (1.0 - h * (ws.theta[n - 1] - inf));
        worst = worst.max(residual.abs());
    }
    outcome(
        worst <= 1e-10,
        format!(
            "max residual {worst:.2e} over {} steps",
            solver.grid.n_steps
        ),
    )
}

fn c3_steady_state(_: &Runs) -> Outcome {
    let (p, _) = nondimensionalize(&PhysicalConfig::default()).unwrap();
    let mesh = Mesh::uniform(5).unwrap();
    let xs = mesh.node_coords.clone();
    let solver = ForwardSolver::new(p, mesh, TimeGrid::new(0.5, 2000).unwrap(), &[]).unwrap();
    let k = Cubic::new([0.0, 0.0, 0.0, 2.0]);
    let mut last = vec![];
    solver.run(&k, |_, th| last = th.to_vec()).unwrap();
    let err = xs
        .iter()
        .zip(&last)
        .map(|(x, t)| (t - (1.0 + 1.0 / p.h + (1.0 - x) / 2.0)).abs())
        .fold(0.0, f64::max);
    outcome(
        err <= 1e-6,
        format!("max nodal error {err:.2e} at τ = 1000"),
    )
}

fn c4_ground_truth(_: &Runs) -> Outcome {
    let solver = reference_solver();
    let k1 = Cubic::new(TRUTH).kappa(1.0);
    let range = data_range(&solver);
    let peak = solver.solve(&Cubic::new(TRUTH)).unwrap().max();
    let k4 = Cubic::new(TRUTH).kappa(range.theta_max);
    let pass = (k1 - 3.8928).abs() < 5e-5
        && (range.theta_max - 4.43).abs() <= 0.05
        && (k4 - 2.1146).abs() < 5e-3;
    outcome(
        pass,
        format!(
            "κ(1) = {k1:.4}; θ_max of the seed-42 data = {:.4}, κ(θ_max) = {k4:.4}; noiseless peak {peak:.4}",
            range.theta_max
        ),
    )
}

fn c5_determinants(_: &Runs) -> Outcome {
    let solver = reference_solver();
    let range = data_range(&solver);
    let param = Parametrization::conductivity_values(range);
    let truth = param
        .parameters_of(&ConductivityModel::cubic(TRUTH))
        .unwrap();
    let det = |p: Vec<f64>| {
        let pv = ParameterVector::new(p, param.clone()).unwrap();
        sensitivity_matrix(&solver, &pv, range, 1e-5)
            .unwrap()
            .det_jtj
    };
    let at_truth = det(truth);
    let at_ones = det(vec![1.0; 4]);
    let pass = (at_truth / 11.56 - 1.0).abs() <= 0.25 && (0.1..=10.0).contains(&(at_ones / 2.81e7));
    outcome(
        pass,
        format!("|JᵀJ| = {at_truth:.3} at the truth, {at_ones:.3e} at (1,1,1,1)"),
    )
}

fn c6_cubic_uniform(runs: &Runs) -> Outcome {
    let mut passed = 0;
    let mut notes = vec![];
    for c in 0..3 {
        let s = runs.summary("cubic-uniform", c);
        let mean = floats(&s["summary"]["mean"]);
        let std = floats(&s["summary"]["std"]);
        let truth = floats(&s["summary"]["truth"]);
        let mut ok = true;
        let mut errs = vec![];
        for n in 0..4 {
            let rel = (mean[n] - truth[n]).abs() / truth[n];
            errs.push(format!("{:.2}%", 100.0 * rel));
            let limit = if n == 0 { 0.10 } else { 0.03 };
            ok &= rel <= limit;
            ok &= (mean[n] - truth[n]).abs() <= 3.0 * TABLE_STD[n].max(std[n]);
            let ratio = std[n] / TABLE_STD[n];
            ok &= (1.0 / 3.0..=3.0).contains(&ratio);
        }
        if ok {
            passed += 1;
        }
        notes.push(format!(
            "seed {} {} [{}]",
            s["seed"],
            if ok { "ok" } else { "off" },
            errs.join(" ")
        ));
    }
    outcome(
        passed >= 2,
        format!("{passed}/3 chains; {}", notes.join("; ")),
    )
}

fn c7_acceptance(runs: &Runs) -> Outcome {
    let mut bad = vec![];
    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    for preset in INFER_PRESETS {
        let chains = if preset == "cubic-uniform" { 3 } else { 1 };
        for c in 0..chains {
            let a = runs.summary(preset, c)["acceptance_mh"].as_f64().unwrap();
            lo = lo.min(a);
            hi = hi.max(a);
            if !(0.20..=0.40).contains(&a) {
                bad.push(format!("{preset}/chain-{c} {a:.3}"));
            }
        }
    }
    let detail = format!(
        "{} presets, MH acceptance in [{lo:.3}, {hi:.3}]",
        INFER_PRESETS.len()
    );
    if bad.is_empty() {
        outcome(true, detail)
    } else {
        outcome(false, format!("{detail}; outside: {}", bad.join(", ")))
    }
}

fn c8_geweke(_: &Runs) -> Outcome {
    let constant = geweke(&vec![2.5; 1000]).unwrap().pass;
    let trend: Vec<f64> = (1..=1000).map(f64::from).collect();
    let trend = geweke(&trend).unwrap().pass;
    let mut boundary = vec![101.0; 10];
    boundary.extend(std::iter::repeat_n(100.0, 90));
    let b = geweke(&boundary).unwrap();
    outcome(
        constant && !trend && b.pass,
        format!(
            "constant {constant}, linear trend {trend}, boundary m10 = {} m50 = {} {}",
            b.m10, b.m50, b.pass
        ),
    )
}

fn c9_coverage(runs: &Runs) -> Outcome {
    let cov: Vec<f64> = (0..3)
        .map(|c| {
            runs.summary("cubic-uniform", c)["truth_coverage"]
                .as_f64()
                .unwrap()
        })
        .collect();
    let pts = runs.band("cubic-uniform").theta.len();
    outcome(
        cov[0] >= 0.95 && pts == 200,
        format!(
            "truth inside the 99% band at {:.1}% of {pts} points (other seeds {:.1}%, {:.1}%)",
            100.0 * cov[0],
            100.0 * cov[1],
            100.0 * cov[2]
        ),
    )
}

fn c10_prior_bias(runs: &Runs) -> Outcome {
    let band = runs.band("cubic-normal-1");
    let mu = 2.66;
    let truth = Cubic::new(TRUTH);
    let i = band.nearest(1.0);
    let m = band.mean[i];
    let closer = (m - mu).abs() < (m - 3.8928).abs();
    let escapes = (0..band.theta.len())
        .filter(|&j| (1.0..=2.0).contains(&band.theta[j]))
        .any(|j| {
            let t = truth.kappa(band.theta[j]);
            t < band.lower[j] || t > band.upper[j]
        });
    let outside_at_1 = {
        let t = truth.kappa(band.theta[i]);
        t < band.lower[i] || t > band.upper[i]
    };
    outcome(
        closer && escapes && outside_at_1,
        format!(
            "κ({:.3}) mean {m:.4} (μ = {mu}, truth 3.8928), band [{:.4}, {:.4}]",
            band.theta[i], band.lower[i], band.upper[i]
        ),
    )
}

fn c11_gmrf(runs: &Runs) -> Outcome {
    let w: Vec<f64> = ["gmrf-qexact-2e-5", "gmrf-qexact-2e-4", "gmrf-qexact-2e-3"]
        .iter()
        .map(|p| runs.band(p).mean_width())
        .collect();
    let monotone = w[0] < w[1] && w[1] < w[2];

    let band = runs.band("gmrf-qneg");
    let truth = Cubic::new(TRUTH);
    // local slope at θ = 1, central difference on the band grid
    let i = band.nearest(1.0);
    let (a, b) = (i.saturating_sub(1), i + 1);
    let slope = (band.mean[b] - band.mean[a]) / (band.theta[b] - band.theta[a]);
    let true_slope =
        (truth.kappa(band.theta[b]) - truth.kappa(band.theta[a])) / (band.theta[b] - band.theta[a]);
    let mid_err = (0..band.theta.len())
        .filter(|&j| (2.0..=4.0).contains(&band.theta[j]))
        .map(|j| (band.mean[j] / truth.kappa(band.theta[j]) - 1.0).abs())
        .fold(0.0, f64::max);
    let reversed = slope * true_slope < 0.0;
    outcome(
        monotone && reversed && mid_err <= 0.10,
        format!(
            "widths {:.4} < {:.4} < {:.4}: {monotone}; reversed prior: slope {slope:.3} vs {true_slope:.3}, mid-range error {:.1}%",
            w[0],
            w[1],
            w[2],
            100.0 * mid_err
        ),
    )
}

fn c12_shift_invariance(_: &Runs) -> Outcome {
    let range = TemperatureRange::new(1.0, 4.4).unwrap();
    let param = Parametrization::piecewise(range, 100);
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    let mut worst = 0.0_f64;
    for _ in 0..20 {
        let q_bar: Vec<f64> = (0..99).map(|_| rng.random_range(-0.05..0.05)).collect();
        let prior = Prior::Gmrf {
            q_bar,
            gamma2: 2e-4,
        };
        let p: Vec<f64> = (0..100).map(|_| rng.random_range(0.5..5.0)).collect();
        let base = prior.log_prior(&param, &p);
        for c in [0.1, 1.0, 10.0] {
            let shifted: Vec<f64> = p.iter().map(|x| x + c).collect();
            let v = prior.log_prior(&param, &shifted);
            worst = worst.max((v - base).abs() / base.abs().max(1.0));
        }
    }
    outcome(
        worst <= 1e-9,
        format!("largest relative change {worst:.1e} over 60 shifts"),
    )
}

struct Gauss2 {
    mean: [f64; 2],
    prec: [[f64; 2]; 2],
}

impl LogDensity for Gauss2 {
    fn dim(&self) -> usize {
        2
    }

    fn ln_density(&self, x: &[f64]) -> f64 {
        let d = [x[0] - self.mean[0], x[1] - self.mean[1]];
        -0.5 * (d[0] * (self.prec[0][0] * d[0] + self.prec[0][1] * d[1])
            + d[1] * (self.prec[1][0] * d[0] + self.prec[1][1] * d[1]))
    }
}

fn c13_sampler_oracle(_: &Runs) -> Outcome {
    let mean = [1.5, -0.7];
    let cov = [[2.0, 0.9], [0.9, 0.8]];
    let det = cov[0][0] * cov[1][1] - cov[0][1] * cov[1][0];
    let target = Gauss2 {
        mean,
        prec: [
            [cov[1][1] / det, -cov[0][1] / det],
            [-cov[1][0] / det, cov[0][0] / det],
        ],
    };
    let cfg = AdaptiveConfig {
        steps: 20_000,
        ..AdaptiveConfig::default()
    };
    let adapted = run_adaptive(&target, &[0.0, 0.0], &cfg, 13).unwrap();
    let r = 100_000;
    let chain = run_mh(
        &target,
        adapted.chain.last().unwrap(),
        &adapted.covariance,
        r,
        14,
    )
    .unwrap();
    let states: Vec<&[f64]> = chain.states().collect();

    let m: Vec<f64> = (0..2)
        .map(|k| states.iter().map(|s| s[k]).sum::<f64>() / r as f64)
        .collect();
    // Monte-Carlo standard error by batch means
    let batches = 100;
    let size = r / batches;
    let mut ok = true;
    let mut notes = vec![];
    for k in 0..2 {
        let bm: Vec<f64> = (0..batches)
            .map(|b| {
                states[b * size..(b + 1) * size]
                    .iter()
                    .map(|s| s[k])
                    .sum::<f64>()
                    / size as f64
            })
            .collect();
        let var = bm.iter().map(|x| (x - m[k]).powi(2)).sum::<f64>() / (batches - 1) as f64;
        let se = (var / batches as f64).sqrt();
        ok &= (m[k] - mean[k]).abs() <= 3.0 * se;
        notes.push(format!("mean[{k}] {:.4} (±{se:.4})", m[k]));
    }
    for (i, j) in [(0, 0), (0, 1), (1, 1)] {
        let c = states
            .iter()
            .map(|s| (s[i] - m[i]) * (s[j] - m[j]))
            .sum::<f64>()
            / (r - 1) as f64;
        ok &= (c / cov[i][j] - 1.0).abs() <= 0.10;
        notes.push(format!("cov[{i}{j}] {c:.3}"));
    }
    outcome(ok, notes.join(", "))
}

fn main() {
    let keep = std::env::var_os("HEATCOND_ACCEPTANCE_OUT").map(PathBuf::from);
    let tmp = tempfile::tempdir().unwrap();
    let root = keep.unwrap_or_else(|| tmp.path().to_path_buf());
    let runs = Runs {
        root,
        done: Mutex::new(HashMap::new()),
    };

    type Check = fn(&Runs) -> Outcome;
    let criteria: [(&str, Check); 13] = [
        ("dimensionless constants", c1_constants),
        ("forward energy balance", c2_energy_balance),
        ("steady-state oracle", c3_steady_state),
        ("ground-truth consistency", c4_ground_truth),
        ("sensitivity determinants", c5_determinants),
        ("cubic/uniform inference", c6_cubic_uniform),
        ("MH acceptance ratio", c7_acceptance),
        ("Geweke unit suite", c8_geweke),
        ("cubic/uniform band coverage", c9_coverage),
        ("normal prior bias", c10_prior_bias),
        ("GMRF suite", c11_gmrf),
        ("GMRF shift invariance", c12_shift_invariance),
        ("sampler on a 2-D Gaussian", c13_sampler_oracle),
    ];

    let mut failed = 0;
    for (i, (name, check)) in criteria.iter().enumerate() {
        let start = Instant::now();
        let result = catch_unwind(AssertUnwindSafe(|| check(&runs))).unwrap_or_else(|e| {
            let msg = e
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_default();
            outcome(false, format!("panicked: {msg}"))
        });
        if !result.pass {
            failed += 1;
        }
        println!(
            "criterion {:>2} {} {name}: {} ({:.1} s)",
            i + 1,
            if result.pass { "PASS" } else { "FAIL" },
            result.detail,
            start.elapsed().as_secs_f64()
        );
    }
    println!(
        "acceptance: {} passed, {failed} failed",
        criteria.len() - failed
    );
    if failed > 0 {
        std::process::exit(1);
    }
}
