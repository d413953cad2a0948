//! Channel-estimation sweep: normalized MSE per iteration for IC, DC and
//! centralized estimation, with the CRB alongside.

use icvec_core::estimation::{assemble, crb, Crb, dc_estimate, mle_centralized, run_ic_estimation, IcEstimationOptions};
use icvec_core::metrics::{mse_db, normalized_mse, BlockMse, Normalization};
use icvec_core::model::rng::Stream;
use icvec_core::model::{apply_channel, synth_channel};
use icvec_core::training::{gen_training, orthogonalize};
use serde::Serialize;

use super::mean_db;
use crate::{CliError, Report, Runner, ScenarioFile, Table};

#[derive(Clone, Debug, Serialize)]
pub struct ChanestRow {
    pub operators: usize,
    pub snr_db: f64,
    pub alpha: f64,
    pub method: &'static str,
    pub iter: usize,
    pub mse_self_db: f64,
    pub mse_alien_db: Option<f64>,
    pub crb_db: f64,
    pub crb_self_db: f64,
    pub crb_alien_db: Option<f64>,
    /// Complex scalars one operator sends in this iteration.
    pub scalars_sent: usize,
}

struct Trial {
    ic: Vec<BlockMse>,
    dc: BlockMse,
    centralized: BlockMse,
    ic_scalars: Vec<usize>,
    bound: Crb,
}

pub fn run(scenario: &ScenarioFile, runner: &Runner) -> Result<Report, CliError> {
    let iterations = scenario.sweep.iterations;
    let trials = scenario.sweep.trials;
    let mut rows = Vec::new();
    let mut point = 0usize;
    for &k in &scenario.system.operators {
        for &snr_db in &scenario.sweep.snr_db {
            for a in scenario.sweep.alphas() {
                let cfg = scenario.config(k, a.alpha, snr_db);
                let sigma2 = cfg.noise_power;
                let norm = Normalization::Ensemble { alpha: a.alpha };
                let options = IcEstimationOptions {
                    rounds: iterations,
                    schedule: scenario.estimation.schedule,
                    ..Default::default()
                };
                let this_point = point;
                let results = runner.map(trials, |t| {
                    let h = synth_channel(&cfg, &mut runner.rng(Stream::Channel, this_point, t))?;
                    let mut x = gen_training(&cfg, &mut runner.rng(Stream::Training, this_point, t))?;
                    if scenario.estimation.orthogonal_training {
                        x = orthogonalize(&x)?;
                    }
                    let y = apply_channel(&h, x.full(), sigma2, &mut runner.rng(Stream::Noise, this_point, t))?;
                    let centralized = normalized_mse(&mle_centralized(&y, &x)?.to_channel()?, &h, norm)?;
                    let n = cfg.lines_per_operator;
                    let parts = (0..k)
                        .map(|op| dc_estimate(op, &y.rows(op * n, n).into_owned(), &x))
                        .collect::<Result<Vec<_>, _>>()?;
                    let dc = normalized_mse(&assemble(&parts)?, &h, norm)?;
                    let run = run_ic_estimation(&y, &x, &options)?;
                    let ic = run.snapshots.iter().map(|s| normalized_mse(s, &h, norm)).collect::<Result<Vec<_>, _>>()?;
                    let ic_scalars = (0..=iterations).map(|i| run.log.sent_scalars(i, 0)).collect();
                    Ok(Trial { ic, dc, centralized, ic_scalars, bound: crb(sigma2, x.full())? })
                })?;
                point += 1;

                // The bound is per realization of the training; average it like the MSE.
                let mean = |f: fn(&Crb) -> f64| results.iter().map(|r| f(&r.bound)).sum::<f64>() / trials as f64;
                let per_entry = mean(|b| b.per_entry);
                let bound = Crb { trace: mean(|b| b.trace), per_entry }.normalized(cfg.lines_per_operator, a.alpha);
                let n = cfg.lines_per_operator;
                let t_len = cfg.training_length;
                let mut push = |method: &'static str, iteration: usize, mse: Vec<&BlockMse>, scalars: usize| {
                    let selfs: Vec<f64> = mse.iter().map(|m| m.self_blocks).collect();
                    let aliens: Option<Vec<f64>> = mse.iter().map(|m| m.alien_blocks).collect();
                    rows.push(ChanestRow {
                        operators: k,
                        snr_db,
                        alpha: a.alpha,
                        method,
                        iter: iteration,
                        mse_self_db: mean_db(&selfs),
                        mse_alien_db: aliens.map(|v| mean_db(&v)),
                        crb_db: mse_db(per_entry),
                        crb_self_db: bound.self_db(),
                        crb_alien_db: if k > 1 { bound.alien_db() } else { None },
                        scalars_sent: scalars,
                    });
                };
                for i in 0..=iterations {
                    push("ic", i, results.iter().map(|r| &r.ic[i]).collect(), results[0].ic_scalars[i]);
                }
                // Data cooperation ships each training block to every peer once.
                for i in 0..=iterations {
                    let scalars = if i == 1 { (k - 1) * n * t_len } else { 0 };
                    push("dc", i, results.iter().map(|r| &r.dc).collect(), scalars);
                }
                for i in 0..=iterations {
                    let scalars = if i == 1 && k > 1 { n * t_len } else { 0 };
                    push("centralized", i, results.iter().map(|r| &r.centralized).collect(), scalars);
                }
            }
        }
    }
    let final_ic: Vec<_> = rows
        .iter()
        .filter(|r| r.method == "ic" && r.iter == iterations)
        .map(|r| {
            serde_json::json!({
                "operators": r.operators, "snr_db": r.snr_db, "alpha": r.alpha,
                "mse_self_db": r.mse_self_db, "crb_self_db": r.crb_self_db,
            })
        })
        .collect();
    Ok(Report {
        tables: vec![Table::from_rows("chanest.csv", &rows)?],
        summary: serde_json::json!({ "final_ic": final_ic }),
    })
}
