//! Scenario files: TOML documents selecting an experiment and its sweep.

use std::path::Path;

use icvec_core::convergence::{SplitCaps, SplitKind};
use icvec_core::detection::DfeMode;
use icvec_core::estimation::Schedule;
use icvec_core::metrics::GapModel;
use icvec_core::model::{Constellation, Coupling, ScenarioConfig};
use serde::{Deserialize, Serialize};

use crate::CliError;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Experiment {
    Chanest,
    Mud,
    Throughput,
    Convergence,
}

impl Experiment {
    pub fn name(self) -> &'static str {
        match self {
            Experiment::Chanest => "chanest",
            Experiment::Mud => "mud",
            Experiment::Throughput => "throughput",
            Experiment::Convergence => "convergence",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioFile {
    pub experiment: Experiment,
    #[serde(default)]
    pub name: Option<String>,
    #[serde(default)]
    pub seed: u64,
    pub system: SystemSection,
    #[serde(default)]
    pub sweep: SweepSection,
    #[serde(default)]
    pub estimation: EstimationSection,
    #[serde(default)]
    pub detection: DetectionSection,
    #[serde(default)]
    pub throughput: Option<ThroughputSection>,
    #[serde(default)]
    pub convergence: ConvergenceSection,
    #[serde(default)]
    pub gap: GapModel,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SystemSection {
    pub lines: usize,
    /// One run per entry.
    pub operators: Vec<usize>,
    #[serde(default = "default_training_length")]
    pub training_length: usize,
    #[serde(default = "default_constellation")]
    pub constellation: Constellation,
}

fn default_training_length() -> usize {
    128
}

fn default_constellation() -> Constellation {
    Constellation::Qpsk
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepSection {
    /// Linear FEXT amplitudes.
    #[serde(default)]
    pub alpha: Option<Vec<f64>>,
    /// FEXT amplitudes in dB (`20 log10 α`).
    #[serde(default)]
    pub alpha_db: Option<Vec<f64>>,
    #[serde(default)]
    pub snr_db: Vec<f64>,
    #[serde(default = "default_iterations")]
    pub iterations: usize,
    #[serde(default = "default_trials")]
    pub trials: usize,
}

fn default_iterations() -> usize {
    6
}

fn default_trials() -> usize {
    10
}

/// One point of the coupling axis.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AlphaPoint {
    pub alpha: f64,
    pub alpha_db: f64,
}

impl SweepSection {
    pub fn alphas(&self) -> Vec<AlphaPoint> {
        let mut out: Vec<AlphaPoint> = self
            .alpha
            .iter()
            .flatten()
            .map(|&alpha| AlphaPoint { alpha, alpha_db: 20.0 * alpha.log10() })
            .collect();
        out.extend(
            self.alpha_db
                .iter()
                .flatten()
                .map(|&alpha_db| AlphaPoint { alpha: 10f64.powf(alpha_db / 20.0), alpha_db }),
        );
        out
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EstimationSection {
    pub orthogonal_training: bool,
    pub schedule: Schedule,
}

impl Default for EstimationSection {
    fn default() -> Self {
        Self { orthogonal_training: true, schedule: Schedule::SelfFirst }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scheme {
    Centralized,
    IcSoft,
    IcHard,
    Dc,
    NoCoop,
}

impl Scheme {
    pub const ALL: [Scheme; 5] = [Scheme::Centralized, Scheme::IcSoft, Scheme::IcHard, Scheme::Dc, Scheme::NoCoop];

    pub fn name(self) -> &'static str {
        match self {
            Scheme::Centralized => "centralized",
            Scheme::IcSoft => "ic_soft",
            Scheme::IcHard => "ic_hard",
            Scheme::Dc => "dc",
            Scheme::NoCoop => "no_coop",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DetectionSection {
    /// Symbols per line per trial.
    pub frame_length: usize,
    pub schemes: Vec<Scheme>,
    pub dfe: DfeMode,
}

impl Default for DetectionSection {
    fn default() -> Self {
        Self { frame_length: 200, schemes: Scheme::ALL.to_vec(), dfe: DfeMode::Mmse }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ThroughputSection {
    /// `[start, stop]` in Hz; one table row per band and scheme.
    pub bands_hz: Vec<[f64; 2]>,
    /// Number of simulated tones spread evenly over the union of the bands.
    pub tone_samples: usize,
    /// `[frequency_hz, alpha_db]` knots, linearly interpolated in α.
    pub alpha_profile_db: Vec<[f64; 2]>,
    /// `[frequency_hz, snr_db]` knots; when absent the PSDs fix one SNR.
    #[serde(default)]
    pub snr_profile_db: Option<Vec<[f64; 2]>>,
    #[serde(default = "default_signal_psd")]
    pub signal_psd_dbm_hz: f64,
    #[serde(default = "default_noise_psd")]
    pub noise_psd_dbm_hz: f64,
    pub symbol_rate_hz: f64,
}

fn default_signal_psd() -> f64 {
    -76.0
}

fn default_noise_psd() -> f64 {
    -140.0
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ConvergenceSection {
    pub splits: Vec<SplitKind>,
    /// Also sweep the estimation split with orthogonalized training.
    pub orthogonal_rows: bool,
    /// Seeds used for the explicit-recursion comparison.
    pub equivalence_seeds: usize,
    /// Training length and line count of the equivalence runs (kept small so
    /// the dense system fits the caps).
    pub equivalence_lines: usize,
    pub equivalence_training_length: usize,
    pub caps: SplitCaps,
}

impl Default for ConvergenceSection {
    fn default() -> Self {
        Self {
            splits: vec![SplitKind::Detection, SplitKind::Estimation],
            orthogonal_rows: true,
            equivalence_seeds: 10,
            equivalence_lines: 4,
            equivalence_training_length: 32,
            caps: SplitCaps::default(),
        }
    }
}

fn invalid(msg: impl Into<String>) -> CliError {
    CliError::Scenario(msg.into())
}

fn check_knots(name: &str, knots: &[[f64; 2]]) -> Result<(), CliError> {
    if knots.is_empty() {
        return Err(invalid(format!("{name} needs at least one knot")));
    }
    if knots.iter().flatten().any(|v| !v.is_finite()) {
        return Err(invalid(format!("{name} has non-finite values")));
    }
    if knots.windows(2).any(|w| w[1][0] <= w[0][0]) {
        return Err(invalid(format!("{name} frequencies must be strictly increasing")));
    }
    Ok(())
}

impl ScenarioFile {
    pub fn parse(text: &str) -> Result<Self, CliError> {
        let file: ScenarioFile = toml::from_str(text).map_err(|e| invalid(e.to_string()))?;
        file.validate()?;
        Ok(file)
    }

    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| invalid(format!("cannot read {}: {e}", path.display())))?;
        Self::parse(&text)
    }

    pub fn display_name(&self) -> String {
        self.name.clone().unwrap_or_else(|| self.experiment.name().to_string())
    }

    /// Core configuration for one point of the sweep.
    pub fn config(&self, operators: usize, alpha: f64, snr_db: f64) -> ScenarioConfig {
        ScenarioConfig::new(operators, self.system.lines, self.system.training_length)
            .with_alpha(alpha)
            .with_snr_db(snr_db)
            .with_constellation(self.system.constellation)
            .with_max_iterations(self.sweep.iterations.max(1))
            .with_seed(self.seed)
    }

    pub fn validate(&self) -> Result<(), CliError> {
        let s = &self.system;
        if s.lines == 0 {
            return Err(invalid("system.lines must be positive"));
        }
        if s.operators.is_empty() || s.operators.contains(&0) {
            return Err(invalid("system.operators must list positive operator counts"));
        }
        if self.sweep.trials == 0 {
            return Err(invalid("sweep.trials must be positive"));
        }
        self.gap.validate().map_err(|e| invalid(e.to_string()))?;
        let alphas = self.sweep.alphas();
        for a in &alphas {
            if !(a.alpha.is_finite() && a.alpha >= 0.0) {
                return Err(invalid(format!("invalid coupling {}", a.alpha)));
            }
        }
        if self.sweep.snr_db.iter().any(|v| !v.is_finite()) {
            return Err(invalid("sweep.snr_db values must be finite"));
        }
        let needs_sweep = |what: &str| -> Result<(), CliError> {
            if alphas.is_empty() {
                return Err(invalid(format!("{what} needs sweep.alpha or sweep.alpha_db")));
            }
            if self.sweep.snr_db.is_empty() {
                return Err(invalid(format!("{what} needs sweep.snr_db")));
            }
            Ok(())
        };
        match self.experiment {
            Experiment::Chanest => {
                needs_sweep("chanest")?;
                if s.training_length <= s.lines {
                    return Err(invalid("system.training_length must exceed system.lines"));
                }
                if alphas.iter().any(|a| a.alpha == 0.0) && s.operators.iter().any(|&k| k > 1) {
                    return Err(invalid("chanest normalizes alien MSE by α², so α must be positive"));
                }
            }
            Experiment::Mud => {
                needs_sweep("mud")?;
                if self.detection.frame_length == 0 {
                    return Err(invalid("detection.frame_length must be positive"));
                }
                if self.detection.schemes.is_empty() {
                    return Err(invalid("detection.schemes must not be empty"));
                }
            }
            Experiment::Throughput => {
                let t = self.throughput.as_ref().ok_or_else(|| invalid("throughput experiment needs a [throughput] table"))?;
                if t.bands_hz.is_empty() {
                    return Err(invalid("throughput.bands_hz must not be empty"));
                }
                for b in &t.bands_hz {
                    if !(b[0].is_finite() && b[1].is_finite() && b[0] >= 0.0 && b[1] >= b[0]) {
                        return Err(invalid(format!("invalid band {b:?}")));
                    }
                }
                if t.tone_samples == 0 {
                    return Err(invalid("throughput.tone_samples must be positive"));
                }
                check_knots("throughput.alpha_profile_db", &t.alpha_profile_db)?;
                if let Some(p) = &t.snr_profile_db {
                    check_knots("throughput.snr_profile_db", p)?;
                }
                if !(t.symbol_rate_hz > 0.0 && t.symbol_rate_hz.is_finite()) {
                    return Err(invalid("throughput.symbol_rate_hz must be positive"));
                }
                if !(t.signal_psd_dbm_hz.is_finite() && t.noise_psd_dbm_hz.is_finite()) {
                    return Err(invalid("PSD values must be finite"));
                }
                if self.detection.frame_length == 0 {
                    return Err(invalid("detection.frame_length must be positive"));
                }
            }
            Experiment::Convergence => {
                if alphas.is_empty() {
                    return Err(invalid("convergence needs sweep.alpha or sweep.alpha_db"));
                }
                let c = &self.convergence;
                if c.splits.is_empty() {
                    return Err(invalid("convergence.splits must not be empty"));
                }
                if c.splits.contains(&SplitKind::Estimation) && s.training_length <= s.lines {
                    return Err(invalid("system.training_length must exceed system.lines"));
                }
                if c.equivalence_seeds > 0 && c.equivalence_training_length <= c.equivalence_lines {
                    return Err(invalid("convergence.equivalence_training_length must exceed equivalence_lines"));
                }
                if c.equivalence_lines == 0 {
                    return Err(invalid("convergence.equivalence_lines must be positive"));
                }
            }
        }
        Ok(())
    }
}

/// Serialize a scenario back to TOML. Parsing the result gives the same
/// scenario.
pub fn to_toml(scenario: &ScenarioFile) -> Result<String, CliError> {
    toml::to_string(scenario).map_err(|e| CliError::Runtime(format!("toml: {e}")))
}

impl ThroughputSection {
    /// Linear α profile for the core coupling model.
    pub fn coupling(&self) -> Coupling {
        Coupling::Profile(self.alpha_profile_db.iter().map(|k| (k[0], 10f64.powf(k[1] / 20.0))).collect())
    }

    /// Receiver SNR in dB at a tone.
    pub fn snr_db_at(&self, frequency: f64) -> f64 {
        match &self.snr_profile_db {
            Some(knots) => Coupling::Profile(knots.iter().map(|k| (k[0], k[1])).collect()).alpha_at(frequency),
            None => self.signal_psd_dbm_hz - self.noise_psd_dbm_hz,
        }
    }
}
