//! Spectral radii of the estimation and detection Jacobi splits, the
//! distributed runs checked against the explicit recursion, and the
//! predicted error envelope against measured errors.

use icvec_core::backhaul::BusOptions;
use icvec_core::convergence::{
    build_split_detection, build_split_estimation, detection_rhs, estimation_rhs, estimation_unknowns,
    max_relative_deviation, predicted_error_decay, spectral_radius, SplitKind,
};
use icvec_core::detection::{run_ic_mud, Decision, DfeMode, MudSettings};
use icvec_core::estimation::{mle_centralized, run_ic_estimation, IcEstimationOptions, Schedule};
use icvec_core::linalg::frobenius_sq;
use icvec_core::model::rng::Stream;
use icvec_core::model::{apply_channel, draw_symbols, synth_channel, transmit, ScenarioConfig};
use icvec_core::training::{gen_training, orthogonalize, TrainingSet};
use icvec_core::CMatrix;
use serde::Serialize;

use crate::{CliError, Report, Runner, ScenarioFile, Table};

#[derive(Clone, Debug, Serialize)]
pub struct RadiusRow {
    pub seed: usize,
    pub alpha: f64,
    pub operators: usize,
    pub lines: usize,
    pub split: &'static str,
    pub training: &'static str,
    pub rho: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct EquivalenceRow {
    pub seed: usize,
    pub operators: usize,
    pub alpha: f64,
    pub split: &'static str,
    pub rounds: usize,
    pub max_deviation: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct EnvelopeRow {
    pub operators: usize,
    pub alpha: f64,
    pub iteration: usize,
    pub predicted: f64,
    pub measured: f64,
}

fn split_name(kind: SplitKind) -> &'static str {
    match kind {
        SplitKind::Estimation => "estimation",
        SplitKind::Detection => "detection",
    }
}

fn training(cfg: &ScenarioConfig, runner: &Runner, point: usize, seed: usize, orthogonal: bool) -> Result<TrainingSet, CliError> {
    let x = gen_training(cfg, &mut runner.rng(Stream::Training, point, seed))?;
    Ok(if orthogonal { orthogonalize(&x)? } else { x })
}

/// Maximum deviation between a noiseless IC estimation run (Jacobi
/// schedule) and the explicit recursion started from the same state.
pub fn estimation_equivalence(cfg: &ScenarioConfig, runner: &Runner, point: usize, seed: usize, rounds: usize) -> Result<f64, CliError> {
    let k = cfg.num_operators;
    let h = synth_channel(cfg, &mut runner.rng(Stream::Channel, point, seed))?;
    let x = gen_training(cfg, &mut runner.rng(Stream::Training, point, seed))?;
    let y = apply_channel(&h, x.full(), 0.0, &mut runner.rng(Stream::Noise, point, seed))?;
    let options = IcEstimationOptions { rounds, schedule: Schedule::Jacobi, ..Default::default() };
    let run = run_ic_estimation(&y, &x, &options)?;
    let measured: Vec<CMatrix> = run.snapshots.iter().map(estimation_unknowns).collect();
    let split = build_split_estimation(&x, Default::default())?;
    let explicit = split.iterate(&measured[0], &estimation_rhs(&y, k), rounds)?;
    Ok(max_relative_deviation(&measured, &explicit)?)
}

/// Same comparison for IC detection in linear zero-forcing mode.
pub fn detection_equivalence(cfg: &ScenarioConfig, runner: &Runner, point: usize, seed: usize, rounds: usize) -> Result<f64, CliError> {
    let k = cfg.num_operators;
    let settings = MudSettings::new(cfg.constellation).with_decision(Decision::Linear).with_dfe(DfeMode::Zf);
    let h = synth_channel(cfg, &mut runner.rng(Stream::Channel, point, seed))?;
    let x = draw_symbols(cfg, 8, &mut runner.rng(Stream::Symbols, point, seed))?;
    let y = transmit(&h, &x, cfg.noise_power, &mut runner.rng(Stream::Noise, point, seed))?;
    let groups: Vec<CMatrix> = (0..k).map(|op| h.column_group(op)).collect();
    let run = run_ic_mud(&groups, y.full(), cfg.noise_power, cfg.noise_power, &settings, rounds, &BusOptions::default())?;
    let measured: Vec<CMatrix> = run.snapshots.iter().map(|s| s.symbols.clone()).collect();
    let split = build_split_detection(&h, Default::default())?;
    let explicit = split.iterate(&measured[0], &detection_rhs(y.full(), k), rounds)?;
    Ok(max_relative_deviation(&measured, &explicit)?)
}

pub fn run(scenario: &ScenarioFile, runner: &Runner) -> Result<Report, CliError> {
    let c = &scenario.convergence;
    let lines = scenario.system.lines;
    let trials = scenario.sweep.trials;
    let iterations = scenario.sweep.iterations.max(1);
    let mut radii = Vec::new();
    let mut equivalence = Vec::new();
    let mut envelope = Vec::new();
    let mut point = 0usize;

    for &k in &scenario.system.operators {
        for a in scenario.sweep.alphas() {
            let cfg = scenario.config(k, a.alpha, 30.0);
            let this_point = point;
            point += 1;
            let per_seed = runner.map(trials, |seed| {
                let mut out = Vec::new();
                for &kind in &c.splits {
                    match kind {
                        SplitKind::Detection => {
                            let h = synth_channel(&cfg, &mut runner.rng(Stream::Channel, this_point, seed))?;
                            let rho = spectral_radius(&build_split_detection(&h, c.caps)?)?;
                            out.push(("channel", kind, rho));
                        }
                        SplitKind::Estimation => {
                            let x = training(&cfg, runner, this_point, seed, false)?;
                            out.push(("random", kind, spectral_radius(&build_split_estimation(&x, c.caps)?)?));
                            if c.orthogonal_rows {
                                let x = training(&cfg, runner, this_point, seed, true)?;
                                out.push(("orthogonal", kind, spectral_radius(&build_split_estimation(&x, c.caps)?)?));
                            }
                        }
                    }
                }
                Ok(out)
            })?;
            for (seed, entries) in per_seed.into_iter().enumerate() {
                for (label, kind, rho) in entries {
                    radii.push(RadiusRow { seed, alpha: a.alpha, operators: k, lines, split: split_name(kind), training: label, rho });
                }
            }

            // Small systems so the dense recursion fits in memory.
            let small = ScenarioConfig::new(k, c.equivalence_lines, c.equivalence_training_length)
                .with_alpha(a.alpha)
                .with_snr_db(30.0)
                .with_constellation(scenario.system.constellation);
            let eq_point = this_point | (1 << 31);
            let devs = runner.map(c.equivalence_seeds, |seed| {
                let mut out = Vec::new();
                for &kind in &c.splits {
                    let dev = match kind {
                        SplitKind::Estimation => estimation_equivalence(&small, runner, eq_point, seed, iterations)?,
                        SplitKind::Detection => detection_equivalence(&small, runner, eq_point, seed, iterations)?,
                    };
                    out.push((kind, dev));
                }
                Ok(out)
            })?;
            for (seed, entries) in devs.into_iter().enumerate() {
                for (kind, dev) in entries {
                    equivalence.push(EquivalenceRow {
                        seed,
                        operators: k,
                        alpha: a.alpha,
                        split: split_name(kind),
                        rounds: iterations,
                        max_deviation: dev,
                    });
                }
            }

            if c.splits.contains(&SplitKind::Estimation) {
                envelope.extend(estimation_envelope(&small, runner, eq_point, iterations)?.into_iter().enumerate().map(
                    |(i, (predicted, measured))| EnvelopeRow { operators: k, alpha: a.alpha, iteration: i, predicted, measured },
                ));
            }
        }
    }

    let worst = |split: &str| {
        equivalence.iter().filter(|r| r.split == split).map(|r| r.max_deviation).fold(0.0, f64::max)
    };
    let max_rho = |split: &str| radii.iter().filter(|r| r.split == split).map(|r| r.rho).fold(0.0, f64::max);
    let summary = serde_json::json!({
        "max_rho": { "detection": max_rho("detection"), "estimation": max_rho("estimation") },
        "max_deviation": { "detection": worst("detection"), "estimation": worst("estimation") },
    });
    Ok(Report {
        tables: vec![
            Table::from_rows("radii.csv", &radii)?,
            Table::from_rows("equivalence.csv", &equivalence)?,
            Table::from_rows("envelope.csv", &envelope)?,
        ],
        summary,
    })
}

/// `(‖J^i‖₂, ‖v_i − v*‖ / ‖v_0 − v*‖)` per round for one noisy estimation run
/// with non-orthogonal training.
fn estimation_envelope(cfg: &ScenarioConfig, runner: &Runner, point: usize, rounds: usize) -> Result<Vec<(f64, f64)>, CliError> {
    let h = synth_channel(cfg, &mut runner.rng(Stream::Channel, point, 1 << 20))?;
    let x = gen_training(cfg, &mut runner.rng(Stream::Training, point, 1 << 20))?;
    let y = apply_channel(&h, x.full(), cfg.noise_power, &mut runner.rng(Stream::Noise, point, 1 << 20))?;
    let target = estimation_unknowns(&mle_centralized(&y, &x)?.to_channel()?);
    let options = IcEstimationOptions { rounds, schedule: Schedule::Jacobi, ..Default::default() };
    let run = run_ic_estimation(&y, &x, &options)?;
    let errors: Vec<f64> =
        run.snapshots.iter().map(|s| frobenius_sq(&(estimation_unknowns(s) - &target)).sqrt()).collect();
    let first = errors[0].max(f64::MIN_POSITIVE);
    let predicted = predicted_error_decay(&build_split_estimation(&x, Default::default())?, rounds);
    Ok(predicted.into_iter().zip(errors).map(|(p, e)| (p, e / first)).collect())
}
