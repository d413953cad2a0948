use serde::{Deserialize, Serialize};

use super::Constellation;
use crate::{Error, Result};

/// FEXT coupling `α` (linear amplitude relative to the unit direct path).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Coupling {
    Scalar(f64),
    /// Piecewise-linear profile over tone position (e.g. frequency in Hz):
    /// `(position, alpha)` knots with strictly increasing positions.
    /// Outside the knot range the end values are held.
    Profile(Vec<(f64, f64)>),
}

impl Coupling {
    pub fn validate(&self) -> Result<()> {
        match self {
            Coupling::Scalar(a) => check_alpha(*a),
            Coupling::Profile(knots) => {
                if knots.is_empty() {
                    return Err(Error::InvalidConfig("empty coupling profile".into()));
                }
                for w in knots.windows(2) {
                    if !(w[1].0 > w[0].0) {
                        return Err(Error::InvalidConfig(
                            "coupling profile positions must be strictly increasing".into(),
                        ));
                    }
                }
                knots.iter().try_for_each(|&(pos, a)| {
                    if !pos.is_finite() {
                        return Err(Error::InvalidConfig("non-finite profile position".into()));
                    }
                    check_alpha(a)
                })
            }
        }
    }

    /// Coupling at a tone position. A scalar coupling ignores the position.
    pub fn alpha_at(&self, position: f64) -> f64 {
        match self {
            Coupling::Scalar(a) => *a,
            Coupling::Profile(knots) => {
                let first = knots[0];
                let last = knots[knots.len() - 1];
                if position <= first.0 {
                    return first.1;
                }
                if position >= last.0 {
                    return last.1;
                }
                let i = knots.partition_point(|k| k.0 <= position);
                let (x0, y0) = knots[i - 1];
                let (x1, y1) = knots[i];
                y0 + (y1 - y0) * (position - x0) / (x1 - x0)
            }
        }
    }
}

fn check_alpha(a: f64) -> Result<()> {
    if a.is_finite() && a >= 0.0 {
        Ok(())
    } else {
        Err(Error::InvalidConfig(format!("coupling alpha must be finite and >= 0, got {a}")))
    }
}

/// Full description of one simulated system.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScenarioConfig {
    pub num_operators: usize,
    pub lines_per_operator: usize,
    pub training_length: usize,
    pub coupling: Coupling,
    /// AWGN power per received sample (linear); SNR = 1/σ².
    pub noise_power: f64,
    pub constellation: Constellation,
    pub max_iterations: usize,
    pub seed: u64,
}

impl ScenarioConfig {
    pub fn new(num_operators: usize, lines_per_operator: usize, training_length: usize) -> Self {
        Self {
            num_operators,
            lines_per_operator,
            training_length,
            coupling: Coupling::Scalar(0.0),
            noise_power: 0.1,
            constellation: Constellation::Qpsk,
            max_iterations: 6,
            seed: 0,
        }
    }

    pub fn with_alpha(mut self, alpha: f64) -> Self {
        self.coupling = Coupling::Scalar(alpha);
        self
    }

    pub fn with_noise_power(mut self, sigma2: f64) -> Self {
        self.noise_power = sigma2;
        self
    }

    pub fn with_snr_db(self, snr_db: f64) -> Self {
        self.with_noise_power(10f64.powf(-snr_db / 10.0))
    }

    pub fn with_constellation(mut self, c: Constellation) -> Self {
        self.constellation = c;
        self
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn with_max_iterations(mut self, n: usize) -> Self {
        self.max_iterations = n;
        self
    }

    /// Total number of lines `KN`.
    pub fn total_lines(&self) -> usize {
        self.num_operators * self.lines_per_operator
    }

    /// Scalar coupling; profile couplings must be resolved per tone first.
    pub fn alpha(&self) -> Result<f64> {
        match self.coupling {
            Coupling::Scalar(a) => Ok(a),
            Coupling::Profile(_) => Err(Error::InvalidConfig(
                "per-tone coupling profile needs a tone position".into(),
            )),
        }
    }

    /// Scalar configuration for one tone of a profiled scenario.
    pub fn at_tone(&self, position: f64) -> Self {
        let mut out = self.clone();
        out.coupling = Coupling::Scalar(self.coupling.alpha_at(position));
        out
    }

    pub fn validate(&self) -> Result<()> {
        if self.num_operators == 0 {
            return Err(Error::InvalidConfig("num_operators must be positive".into()));
        }
        if self.lines_per_operator == 0 {
            return Err(Error::InvalidConfig("lines_per_operator must be positive".into()));
        }
        if self.training_length <= self.lines_per_operator {
            return Err(Error::InvalidConfig(format!(
                "training_length ({}) must exceed lines_per_operator ({})",
                self.training_length, self.lines_per_operator
            )));
        }
        if !(self.noise_power.is_finite() && self.noise_power > 0.0) {
            return Err(Error::InvalidConfig(format!(
                "noise_power must be finite and positive, got {}",
                self.noise_power
            )));
        }
        if self.max_iterations == 0 {
            return Err(Error::InvalidConfig("max_iterations must be positive".into()));
        }
        self.coupling.validate()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn validation_catches_bad_fields() {
        let ok = ScenarioConfig::new(2, 10, 64).with_alpha(0.5);
        assert!(ok.validate().is_ok());
        assert!(ScenarioConfig::new(2, 10, 10).validate().is_err());
        assert!(ScenarioConfig::new(0, 10, 64).validate().is_err());
        assert!(ok.clone().with_alpha(-0.1).validate().is_err());
        assert!(ok.clone().with_noise_power(0.0).validate().is_err());
        assert!(ok.with_max_iterations(0).validate().is_err());
    }

    #[test]
    fn profile_interpolates_and_clamps() {
        let c = Coupling::Profile(vec![(0.0, 0.1), (10.0, 0.5), (20.0, 1.0)]);
        c.validate().unwrap();
        assert_eq!(c.alpha_at(-5.0), 0.1);
        assert!((c.alpha_at(5.0) - 0.3).abs() < 1e-15);
        assert!((c.alpha_at(15.0) - 0.75).abs() < 1e-15);
        assert_eq!(c.alpha_at(99.0), 1.0);
        assert!(Coupling::Profile(vec![(1.0, 0.1), (1.0, 0.2)]).validate().is_err());
    }
}
