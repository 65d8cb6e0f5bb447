use std::path::{Path, PathBuf};
use std::time::Instant;

use anyhow::{bail, Context};
use log::info;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use heatcond::conductivity::TemperatureRange;
use heatcond::diagnostics::{
    credible_band, suggest_burn_in, summarize, CredibleBand, PosteriorSummary,
};
use heatcond::forward::ForwardSolver;
use heatcond::inference::{
    run_adaptive, run_mh, AdaptiveConfig, Chain, Likelihood, LogDensity, ParameterVector,
    Parametrization, Posterior, Prior,
};
use heatcond::measurements::{
    generate_synthetic, MeasurementManifest, MeasurementSet, RELATIVE_NOISE,
};
use heatcond::sensitivity::{identifiability_summary, sensitivity_matrix, IdentifiabilitySummary};

use crate::config::{ExperimentConfig, ReferenceSpec};
use crate::output::{run_dir, write_json, Manifest};
use crate::Scale;

pub fn simulate(cfg: &ExperimentConfig, root: &Path, argv: &[String]) -> anyhow::Result<()> {
    cfg.validate()?;
    let solver = cfg.solver()?;
    let dir = run_dir(root, cfg)?;
    let kappa = cfg.truth.prepare()?;
    let series = solver.solve(&kappa)?;

    let path = dir.join("temperatures.csv");
    let mut w = csv::Writer::from_path(&path)?;
    let mut header = vec!["time_index".to_string(), "tau".to_string()];
    header.extend(
        solver
            .sensor_positions
            .iter()
            .map(|x| format!("theta_X{x}")),
    );
    w.write_record(&header)?;
    for m in 0..series.n_steps {
        let mut row = vec![(m + 1).to_string(), solver.grid.tau(m + 1).to_string()];
        row.extend((0..series.n_sensors).map(|s| series.get(m, s).to_string()));
        w.write_record(&row)?;
    }
    w.flush()?;
    solver.dump_field(&kappa, &dir.join("field.csv"))?;
    Manifest::new("simulate", argv, cfg)?.write(&dir)?;
    println!(
        "{} steps, {} nodes, max temperature {:.4}; wrote {}",
        series.n_steps,
        solver.mesh.n_nodes(),
        series.max(),
        path.display()
    );
    Ok(())
}

/// Reads the configured data file, or simulates measurements from the truth.
fn measurements(cfg: &ExperimentConfig, solver: &ForwardSolver) -> anyhow::Result<MeasurementSet> {
    match &cfg.data.file {
        Some(path) => Ok(MeasurementSet::load(path)?),
        None => Ok(generate_synthetic(
            solver,
            &cfg.truth,
            cfg.data.seed,
            cfg.data.noise_scale,
        )?),
    }
}

fn save_measurements(
    cfg: &ExperimentConfig,
    solver: &ForwardSolver,
    data: &MeasurementSet,
    dir: &Path,
) -> anyhow::Result<PathBuf> {
    let manifest = MeasurementManifest {
        seed: data.seed,
        noise_scale: cfg.data.noise_scale,
        relative_noise: RELATIVE_NOISE,
        dtau: Some(solver.grid.dtau),
        n_steps: data.n_steps(),
        sensor_positions: data.sensor_positions.clone(),
        truth: Some(cfg.truth.clone()),
    };
    let path = dir.join("measurements.csv");
    data.save(&path, &manifest)?;
    Ok(path)
}

pub fn generate_data(cfg: &ExperimentConfig, root: &Path, argv: &[String]) -> anyhow::Result<()> {
    cfg.validate()?;
    let solver = cfg.solver()?;
    let dir = run_dir(root, cfg)?;
    let data = measurements(cfg, &solver)?;
    let path = save_measurements(cfg, &solver, &data, &dir)?;
    Manifest::new("generate-data", argv, cfg)?.write(&dir)?;
    let range = data.theta_range()?;
    println!(
        "{} observations, temperature range [{:.4}, {:.4}]; wrote {}",
        data.len(),
        range.theta_min,
        range.theta_max,
        path.display()
    );
    Ok(())
}

#[derive(Debug, Serialize)]
struct SensitivityOutput {
    theta_range: TemperatureRange,
    parametrization: Parametrization,
    reference: Vec<f64>,
    epsilon: f64,
    n_rows: usize,
    identifiability: IdentifiabilitySummary,
}

pub fn sensitivity(cfg: &ExperimentConfig, root: &Path, argv: &[String]) -> anyhow::Result<()> {
    cfg.validate()?;
    let solver = cfg.solver()?;
    let dir = run_dir(root, cfg)?;
    let data = measurements(cfg, &solver)?;
    let range = data.theta_range()?;
    let s = &cfg.sensitivity;
    let param = s.parametrization.resolve(range)?;
    let reference = match &s.reference {
        ReferenceSpec::Named(_) => param.parameters_of(&cfg.truth)?,
        ReferenceSpec::Values(v) => v.clone(),
    };
    let p_ref = ParameterVector::new(reference.clone(), param.clone())?;
    let started = Instant::now();
    let report = sensitivity_matrix(&solver, &p_ref, range, s.epsilon)?;
    info!("sensitivity matrix in {:.2?}", started.elapsed());
    let summary = identifiability_summary(&report, s.threshold);
    report.write_csv(&dir.join("jacobian.csv"))?;
    write_json(
        &dir.join("sensitivity.json"),
        &SensitivityOutput {
            theta_range: range,
            parametrization: param,
            reference,
            epsilon: s.epsilon,
            n_rows: report.n_rows,
            identifiability: summary.clone(),
        },
    )?;
    Manifest::new("sensitivity", argv, cfg)?.write(&dir)?;
    println!("|J^T J| = {:.4e} ({})", summary.det_jtj, summary.message);
    println!("parameters by sensitivity: {}", summary.ranking.join(" > "));
    Ok(())
}

/// Stored next to each chain so that `report` can rebuild the summaries.
#[derive(Debug, Clone, Serialize, Deserialize)]
struct RunInfo {
    parametrization: Parametrization,
    theta_range: TemperatureRange,
    truth_parameters: Option<Vec<f64>>,
    truth_model: heatcond::conductivity::ConductivityModel,
    burn_in: usize,
    band_points: usize,
    level: f64,
    seed: u64,
    acceptance_adaptive: f64,
    acceptance_mh: f64,
    proposals_mh: usize,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct ChainReport {
    pub seed: u64,
    pub parametrization: String,
    pub theta_range: TemperatureRange,
    pub acceptance_adaptive: f64,
    pub acceptance_mh: f64,
    pub burn_in_suggestion: Option<usize>,
    pub band_level: f64,
    pub band_mean_width: f64,
    /// Fraction of band grid points where the truth lies inside the band.
    pub truth_coverage: f64,
    pub summary: PosteriorSummary,
}

fn chain_report(info: &RunInfo, chain: &Chain) -> anyhow::Result<(ChainReport, CredibleBand)> {
    let param = &info.parametrization;
    let summary = summarize(chain, param, info.truth_parameters.as_deref())?;
    let grid = info.theta_range.linspace(info.band_points);
    let band = credible_band(chain, param, &grid, info.level)?;
    let truth = info.truth_model.prepare()?;
    let covered = band.covers(&truth).iter().filter(|c| **c).count();
    Ok((
        ChainReport {
            seed: info.seed,
            parametrization: param.tag().into(),
            theta_range: info.theta_range,
            acceptance_adaptive: info.acceptance_adaptive,
            acceptance_mh: info.acceptance_mh,
            burn_in_suggestion: suggest_burn_in(chain),
            band_level: info.level,
            band_mean_width: band.mean_width(),
            truth_coverage: covered as f64 / grid.len() as f64,
            summary,
        },
        band,
    ))
}

fn write_chain_outputs(dir: &Path, info: &RunInfo, chain: &Chain) -> anyhow::Result<ChainReport> {
    let (report, band) = chain_report(info, chain)?;
    band.write_csv(&dir.join("band.csv"))?;
    write_json(&dir.join("summary.json"), &report)?;
    Ok(report)
}

/// Runs a short adaptive chain for the cubic through four conductivity values
/// with a uniform prior and returns its mean curve in `param`.
fn pilot_initial(
    cfg: &ExperimentConfig,
    solver: ForwardSolver,
    data: &MeasurementSet,
    range: TemperatureRange,
    param: &Parametrization,
) -> anyhow::Result<Vec<f64>> {
    let values = Parametrization::conductivity_values(range);
    let posterior = Posterior::new(
        Prior::TruncatedUniformImproper { range },
        Likelihood::new(solver, values.clone(), data)?,
    )?;
    let steps = cfg.inference.pilot_steps;
    let adaptive = AdaptiveConfig {
        steps,
        ..AdaptiveConfig::default()
    };
    let started = Instant::now();
    let run = run_adaptive(&posterior, &[1.0; 4], &adaptive, cfg.inference.seed)?;
    let kept = run.chain.len() - run.chain.len() / 2;
    let mut mean = [0.0; 4];
    for s in run.chain.states().skip(run.chain.len() / 2) {
        for (m, v) in mean.iter_mut().zip(s) {
            *m += v / kept as f64;
        }
    }
    info!(
        "pilot run ({steps} steps) in {:.1?}: conductivity values {mean:.4?}",
        started.elapsed()
    );
    Ok(param.parameters_of(&values.to_model(&mean)?)?)
}

pub fn infer(
    cfg: &ExperimentConfig,
    root: &Path,
    argv: &[String],
    scale: Scale,
) -> anyhow::Result<()> {
    cfg.validate()?;
    let solver = cfg.solver()?;
    let dir = run_dir(root, cfg)?;
    let data = measurements(cfg, &solver)?;
    save_measurements(cfg, &solver, &data, &dir)?;
    let range = data.theta_range()?;
    let inf = &cfg.inference;
    let param = inf.parametrization.resolve(range)?;
    let prior = cfg.prior(&param, range)?;
    let init = match cfg.initial(param.dim()) {
        Some(v) => v,
        None => pilot_initial(cfg, solver.clone(), &data, range, &param)?,
    };
    let likelihood = Likelihood::new(solver, param.clone(), &data)?;
    let posterior = Posterior::new(prior, likelihood)?;
    if !posterior.ln_density(&init).is_finite() {
        bail!("initial guess {init:?} lies outside the prior support");
    }
    let truth_parameters = param.parameters_of(&cfg.truth).ok();

    let mut manifest = Manifest::new("infer", argv, cfg)?;
    manifest.chain_seeds = (0..inf.chains as u64).map(|i| inf.seed + i).collect();
    manifest.write(&dir)?;
    info!(
        "{}: {} chains, {} adaptive + {} fixed-proposal steps ({scale:?} scale)",
        cfg.name, inf.chains, inf.adaptive.steps, inf.mh_steps
    );

    let reports: Vec<ChainReport> = (0..inf.chains)
        .into_par_iter()
        .map(|i| -> anyhow::Result<ChainReport> {
            let seed = inf.seed + i as u64;
            let chain_dir = dir.join(format!("chain-{i}"));
            std::fs::create_dir_all(&chain_dir)
                .with_context(|| format!("cannot create {}", chain_dir.display()))?;
            let started = Instant::now();
            let adapted = run_adaptive(&posterior, &init, &inf.adaptive, seed)?;
            info!("chain {i}: adaptive phase in {:.1?}", started.elapsed());
            adapted
                .chain
                .write_csv(&chain_dir.join("adaptive.csv"), &param.parameter_names())?;
            let start = if inf.mh_from_adapted {
                adapted.chain.last().map_or(init.clone(), <[f64]>::to_vec)
            } else {
                init.clone()
            };
            let mh_seed = seed.wrapping_add(0x9e37_79b9_7f4a_7c15);
            let mut chain = run_mh(
                &posterior,
                &start,
                &adapted.covariance,
                inf.mh_steps,
                mh_seed,
            )?;
            chain.set_burn_in(inf.burn_in)?;
            info!("chain {i}: done in {:.1?}", started.elapsed());
            chain.write_csv(&chain_dir.join("chain.csv"), &param.parameter_names())?;
            let run_info = RunInfo {
                parametrization: param.clone(),
                theta_range: range,
                truth_parameters: truth_parameters.clone(),
                truth_model: cfg.truth.clone(),
                burn_in: inf.burn_in,
                band_points: inf.band_points,
                level: inf.level,
                seed,
                acceptance_adaptive: adapted.chain.acceptance_ratio(),
                acceptance_mh: chain.acceptance_ratio(),
                proposals_mh: chain.proposals,
            };
            write_json(&chain_dir.join("run.json"), &run_info)?;
            write_chain_outputs(&chain_dir, &run_info, &chain)
        })
        .collect::<anyhow::Result<_>>()?;

    for (i, r) in reports.iter().enumerate() {
        print_report(&format!("chain-{i}"), r);
    }
    Ok(())
}

fn print_report(label: &str, r: &ChainReport) {
    let s = &r.summary;
    println!(
        "{label}: acceptance {:.3} (adaptive {:.3}), retained {}, converged {}",
        r.acceptance_mh, r.acceptance_adaptive, s.retained, s.converged
    );
    let show = s.parameter_names.len().min(8);
    for k in 0..show {
        let rel_err = s
            .relative_error_pct
            .as_ref()
            .map_or(String::new(), |e| format!("  rel.err {:6.2}%", e[k]));
        println!(
            "  {:>8}  mean {:>10.4}  std {:>8.4}  rel.std {:6.2}%{rel_err}",
            s.parameter_names[k], s.mean[k], s.std[k], s.relative_std_pct[k]
        );
    }
    if show < s.parameter_names.len() {
        println!("  ... {} more parameters", s.parameter_names.len() - show);
    }
    println!(
        "  {:.0}% band: mean width {:.4}, truth inside at {:.1}% of grid points",
        r.band_level * 100.0,
        r.band_mean_width,
        r.truth_coverage * 100.0
    );
}

pub fn report(run: &Path, burn_in: Option<usize>) -> anyhow::Result<()> {
    let mut dirs: Vec<PathBuf> = if run.join("run.json").exists() {
        vec![run.to_path_buf()]
    } else {
        let entries =
            std::fs::read_dir(run).with_context(|| format!("cannot read {}", run.display()))?;
        entries
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| p.join("run.json").exists())
            .collect()
    };
    if dirs.is_empty() {
        bail!("no chains found under {}", run.display());
    }
    dirs.sort();
    for dir in dirs {
        let info_path = dir.join("run.json");
        let text = std::fs::read_to_string(&info_path)
            .with_context(|| format!("cannot read {}", info_path.display()))?;
        let mut info: RunInfo = serde_json::from_str(&text)
            .with_context(|| format!("invalid {}", info_path.display()))?;
        let (_, mut chain) = Chain::read_csv(&dir.join("chain.csv"))?;
        chain.accepted = (info.acceptance_mh * info.proposals_mh as f64).round() as usize;
        chain.proposals = info.proposals_mh;
        if let Some(b) = burn_in {
            info.burn_in = b;
            write_json(&info_path, &info)?;
        }
        chain.set_burn_in(info.burn_in)?;
        let r = write_chain_outputs(&dir, &info, &chain)?;
        let label = dir
            .file_name()
            .map_or_else(String::new, |n| n.to_string_lossy().into_owned());
        print_report(&label, &r);
    }
    Ok(())
}
