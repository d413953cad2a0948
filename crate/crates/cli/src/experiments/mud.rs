//! Detection sweep: SNR at the decision variable per iteration for each
//! cooperation scheme.

use icvec_core::backhaul::BusOptions;
use icvec_core::detection::{
    centralized_mud, interference_noise, run_dc_mud, run_ic_mud, run_no_coop, Decision, MudRun, MudSettings,
};
use icvec_core::metrics::{to_db, DecisionPower, SNR_CAP_DB};
use icvec_core::model::rng::Stream;
use icvec_core::model::{draw_symbols, synth_channel, transmit, ScenarioConfig};
use icvec_core::CMatrix;
use serde::Serialize;

use super::median;
use crate::scenario::Scheme;
use crate::{CliError, Report, Runner, ScenarioFile, Table};

/// Per-iteration outcome of one scheme in one trial.
#[derive(Clone, Debug)]
pub struct SchemeTrace {
    pub power: Vec<DecisionPower>,
    pub errors: Vec<usize>,
    pub sigma_n2: Vec<f64>,
    /// Complex scalars one operator sends per symbol time in each iteration.
    pub scalars_per_symbol: Vec<usize>,
}

impl SchemeTrace {
    fn from_run(run: &MudRun, truth: &CMatrix, settings: &MudSettings, iterations: usize) -> Result<Self, CliError> {
        let mut trace = Self { power: Vec::new(), errors: Vec::new(), sigma_n2: Vec::new(), scalars_per_symbol: Vec::new() };
        for i in 0..=iterations {
            // Single-shot schemes keep their only snapshot.
            let snap = &run.snapshots[i.min(run.snapshots.len() - 1)];
            trace.power.push(DecisionPower::measure(&snap.decisions, truth)?);
            trace.errors.push(
                snap.decisions
                    .iter()
                    .zip(truth.iter())
                    .filter(|(d, x)| settings.constellation.slice(**d) != **x)
                    .count(),
            );
            trace.sigma_n2.push(snap.sigma_n2.iter().sum::<f64>() / snap.sigma_n2.len().max(1) as f64);
            trace.scalars_per_symbol.push(run.log.as_ref().map_or(0, |l| l.sent_scalars_per_column(i, 0)));
        }
        Ok(trace)
    }

    pub fn last_power(&self) -> DecisionPower {
        *self.power.last().expect("at least one iteration")
    }
}

/// Settings of the detector behind a scheme.
pub fn scheme_settings(scenario: &ScenarioFile, scheme: Scheme) -> MudSettings {
    let decision = if scheme == Scheme::IcHard { Decision::Hard } else { Decision::Soft };
    MudSettings::new(scenario.system.constellation).with_decision(decision).with_dfe(scenario.detection.dfe)
}

/// One channel draw, one frame, every requested scheme.
pub fn trial(
    scenario: &ScenarioFile,
    schemes: &[Scheme],
    cfg: &ScenarioConfig,
    runner: &Runner,
    point: usize,
    index: usize,
) -> Result<Vec<SchemeTrace>, CliError> {
    let (k, n) = (cfg.num_operators, cfg.lines_per_operator);
    let iterations = scenario.sweep.iterations;
    let sigma2 = cfg.noise_power;
    let alpha = cfg.alpha()?;
    let h = synth_channel(cfg, &mut runner.rng(Stream::Channel, point, index))?;
    let x = draw_symbols(cfg, scenario.detection.frame_length, &mut runner.rng(Stream::Symbols, point, index))?;
    let y = transmit(&h, &x, sigma2, &mut runner.rng(Stream::Noise, point, index))?;
    let truth = x.full();
    let noise0 = interference_noise(n, k, alpha, sigma2);
    let bus = BusOptions::default();
    schemes
        .iter()
        .map(|&scheme| {
            let settings = scheme_settings(scenario, scheme);
            let run = match scheme {
                Scheme::Centralized => centralized_mud(&h, y.full(), sigma2, &settings, iterations)?,
                Scheme::IcSoft | Scheme::IcHard => {
                    let groups: Vec<CMatrix> = (0..k).map(|op| h.column_group(op)).collect();
                    run_ic_mud(&groups, y.full(), sigma2, noise0, &settings, iterations, &bus)?
                }
                Scheme::Dc => {
                    let rows: Vec<CMatrix> = (0..k).map(|op| h.row_group(op)).collect();
                    run_dc_mud(&rows, y.full(), sigma2, noise0, &settings, iterations, &bus)?
                }
                Scheme::NoCoop => run_no_coop(&h, y.full(), noise0, &settings)?,
            };
            SchemeTrace::from_run(&run, truth, &settings, iterations)
        })
        .collect()
}

/// Pooled SNR over trials: total signal over total error power.
pub fn pooled_snr_db(powers: impl Iterator<Item = DecisionPower>) -> f64 {
    let mut total = DecisionPower::default();
    for p in powers {
        total.merge(&p);
    }
    total.snr_db()
}

#[derive(Clone, Debug, Serialize)]
pub struct MudRow {
    pub operators: usize,
    pub snr_db: f64,
    pub alpha_db: f64,
    pub alpha: f64,
    pub scheme: &'static str,
    pub iteration: usize,
    pub snr_d_db: f64,
    pub snr_d_median_db: f64,
    pub ser: f64,
    pub sigma_n2_db: f64,
    pub scalars_per_symbol: usize,
}

pub fn run(scenario: &ScenarioFile, runner: &Runner) -> Result<Report, CliError> {
    let schemes = &scenario.detection.schemes;
    let iterations = scenario.sweep.iterations;
    let mut rows = Vec::new();
    let mut point = 0usize;
    for &k in &scenario.system.operators {
        for &snr_db in &scenario.sweep.snr_db {
            for a in scenario.sweep.alphas() {
                let cfg = scenario.config(k, a.alpha, snr_db);
                let this_point = point;
                let results = runner.map(scenario.sweep.trials, |t| trial(scenario, schemes, &cfg, runner, this_point, t))?;
                point += 1;
                for (s, &scheme) in schemes.iter().enumerate() {
                    for i in 0..=iterations {
                        let per_trial: Vec<&DecisionPower> = results.iter().map(|r| &r[s].power[i]).collect();
                        let medians: Vec<f64> = per_trial.iter().map(|p| p.snr_db()).collect();
                        let errors: usize = results.iter().map(|r| r[s].errors[i]).sum();
                        let symbols: usize = per_trial.iter().map(|p| p.count).sum();
                        let sigma = results.iter().map(|r| r[s].sigma_n2[i]).sum::<f64>() / results.len() as f64;
                        rows.push(MudRow {
                            operators: k,
                            snr_db,
                            alpha_db: a.alpha_db,
                            alpha: a.alpha,
                            scheme: scheme.name(),
                            iteration: i,
                            snr_d_db: pooled_snr_db(per_trial.iter().map(|p| **p)),
                            snr_d_median_db: median(&medians).min(SNR_CAP_DB),
                            ser: errors as f64 / symbols.max(1) as f64,
                            sigma_n2_db: to_db(sigma),
                            scalars_per_symbol: results[0][s].scalars_per_symbol[i],
                        });
                    }
                }
            }
        }
    }
    let finals: Vec<_> = rows
        .iter()
        .filter(|r| r.iteration == iterations)
        .map(|r| {
            serde_json::json!({
                "operators": r.operators, "snr_db": r.snr_db, "alpha_db": r.alpha_db,
                "scheme": r.scheme, "snr_d_db": r.snr_d_db,
            })
        })
        .collect();
    Ok(Report { tables: vec![Table::from_rows("mud.csv", &rows)?], summary: serde_json::json!({ "final": finals }) })
}
