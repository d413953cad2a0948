//! Band throughput per scheme from per-tone bit loading.
//!
//! A fixed number of tones is simulated, spread evenly over the union of the
//! configured bands. Each band counts its simulated tones and lets each one
//! stand for `(band width / tone spacing) / count` real tones.

use icvec_core::metrics::{bit_loading, throughput};
use serde::Serialize;

use super::mud::{pooled_snr_db, trial};
use crate::scenario::{Scheme, ThroughputSection};
use crate::{CliError, Report, Runner, ScenarioFile, Table};

/// Label of the reference where every operator gets `1/K` of the tones and
/// vectors only its own lines.
pub const EQUAL_SHARE: &str = "equal_share";

#[derive(Clone, Debug, Serialize)]
pub struct ToneRow {
    pub operators: usize,
    pub frequency_hz: f64,
    pub alpha_db: f64,
    pub snr_db: f64,
    pub scheme: &'static str,
    pub snr_d_db: f64,
    pub bits: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct BandRow {
    pub operators: usize,
    pub scheme: &'static str,
    pub band_start_hz: f64,
    pub band_stop_hz: f64,
    pub mbps: f64,
}

/// Simulated tone positions.
pub fn tone_grid(t: &ThroughputSection) -> Vec<f64> {
    let lo = t.bands_hz.iter().map(|b| b[0]).fold(f64::INFINITY, f64::min);
    let hi = t.bands_hz.iter().map(|b| b[1]).fold(f64::NEG_INFINITY, f64::max);
    let m = t.tone_samples;
    (0..m).map(|j| lo + (j as f64 + 0.5) * (hi - lo) / m as f64).collect()
}

/// `(tone index, weight)` pairs standing for one band. A band with positive
/// width but no simulated tone inside borrows the nearest one.
pub fn band_weights(band: [f64; 2], grid: &[f64], tone_spacing_hz: f64) -> Vec<(usize, f64)> {
    let width = band[1] - band[0];
    if width <= 0.0 || grid.is_empty() {
        return Vec::new();
    }
    let mut inside: Vec<usize> = (0..grid.len()).filter(|&j| grid[j] >= band[0] && grid[j] <= band[1]).collect();
    if inside.is_empty() {
        let mid = 0.5 * (band[0] + band[1]);
        let nearest = (0..grid.len())
            .min_by(|&a, &b| (grid[a] - mid).abs().total_cmp(&(grid[b] - mid).abs()))
            .expect("non-empty grid");
        inside.push(nearest);
    }
    let weight = width / tone_spacing_hz / inside.len() as f64;
    inside.into_iter().map(|j| (j, weight)).collect()
}

pub fn run(scenario: &ScenarioFile, runner: &Runner) -> Result<Report, CliError> {
    let t = scenario.throughput.as_ref().ok_or_else(|| CliError::Scenario("missing [throughput] table".into()))?;
    let coupling = t.coupling();
    let grid = tone_grid(t);
    let trials = scenario.sweep.trials;
    let schemes = &scenario.detection.schemes;
    let mut tone_rows = Vec::new();
    let mut band_rows = Vec::new();

    for (combo, &k) in scenario.system.operators.iter().enumerate() {
        // bits[scheme][tone]; the last column is the equal-share reference.
        let mut bits = vec![vec![0.0; grid.len()]; schemes.len() + 1];
        let cells = runner.map(grid.len() * trials, |cell| {
            let (j, trial_index) = (cell / trials, cell % trials);
            let f = grid[j];
            let cfg = scenario.config(k, coupling.alpha_at(f), t.snr_db_at(f));
            let shared = trial(scenario, schemes, &cfg, runner, 2 * (combo * grid.len() + j), trial_index)?;
            let single = scenario.config(1, 0.0, t.snr_db_at(f));
            let alone = trial(scenario, &[Scheme::Centralized], &single, runner, 2 * (combo * grid.len() + j) + 1, trial_index)?;
            Ok((shared, alone))
        })?;
        for (j, &f) in grid.iter().enumerate() {
            let cell = &cells[j * trials..(j + 1) * trials];
            let mut push = |col: usize, name: &'static str, snr_d_db: f64, share: f64| {
                let b = share * bit_loading(snr_d_db, &scenario.gap);
                bits[col][j] = b;
                tone_rows.push(ToneRow {
                    operators: k,
                    frequency_hz: f,
                    alpha_db: 20.0 * coupling.alpha_at(f).log10(),
                    snr_db: t.snr_db_at(f),
                    scheme: name,
                    snr_d_db,
                    bits: b,
                });
            };
            for (s, scheme) in schemes.iter().enumerate() {
                push(s, scheme.name(), pooled_snr_db(cell.iter().map(|(shared, _)| shared[s].last_power())), 1.0);
            }
            let alone = pooled_snr_db(cell.iter().map(|(_, alone)| alone[0].last_power()));
            push(schemes.len(), EQUAL_SHARE, alone, 1.0 / k as f64);
        }
        let names: Vec<&'static str> = schemes.iter().map(|s| s.name()).chain([EQUAL_SHARE]).collect();
        for &band in &t.bands_hz {
            let weights = band_weights(band, &grid, scenario.gap.tone_spacing_hz);
            for (col, &name) in names.iter().enumerate() {
                let weighted: Vec<f64> = weights.iter().map(|&(j, w)| w * bits[col][j]).collect();
                band_rows.push(BandRow {
                    operators: k,
                    scheme: name,
                    band_start_hz: band[0],
                    band_stop_hz: band[1],
                    mbps: throughput(&weighted, &scenario.gap, t.symbol_rate_hz),
                });
            }
        }
    }
    let summary = serde_json::json!({
        "bands": band_rows.iter().map(|r| serde_json::json!({
            "operators": r.operators, "scheme": r.scheme,
            "band_hz": [r.band_start_hz, r.band_stop_hz], "mbps": r.mbps,
        })).collect::<Vec<_>>(),
    });
    Ok(Report {
        tables: vec![Table::from_rows("table.csv", &band_rows)?, Table::from_rows("tones.csv", &tone_rows)?],
        summary,
    })
}
