//! Normalized MSE, SNR at the decision variable, gap-formula bit loading
//! and throughput aggregation.

use serde::{Deserialize, Serialize};

use crate::model::MultiOperatorChannel;
use crate::{CMatrix, Error, Result};

/// dB value reported for an exactly zero error.
pub const MSE_FLOOR_DB: f64 = -200.0;
/// dB value reported for an error-free decision variable.
pub const SNR_CAP_DB: f64 = 80.0;

pub fn to_db(linear: f64) -> f64 {
    10.0 * linear.log10()
}

pub fn from_db(db: f64) -> f64 {
    10f64.powf(db / 10.0)
}

/// Linear MSE to dB, clamped at [`MSE_FLOOR_DB`].
pub fn mse_db(linear: f64) -> f64 {
    if linear <= 0.0 {
        MSE_FLOOR_DB
    } else {
        to_db(linear).max(MSE_FLOOR_DB)
    }
}

/// Denominator used to normalize the channel error.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case")]
pub enum Normalization {
    /// Expected block power under the statistical model with coupling `alpha`:
    /// `N(1 + (N−1)α²)` for direct blocks and `N²α²` for alien blocks.
    Ensemble { alpha: f64 },
    /// Power of the true blocks of this realization.
    Realization,
}

/// Normalized error split into self (direct) and alien blocks, linear scale.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct BlockMse {
    pub self_blocks: f64,
    /// `None` when there is a single operator.
    pub alien_blocks: Option<f64>,
}

impl BlockMse {
    pub fn self_db(&self) -> f64 {
        mse_db(self.self_blocks)
    }

    pub fn alien_db(&self) -> Option<f64> {
        self.alien_blocks.map(mse_db)
    }
}

/// `‖Ĥ_ij − H_ij‖²_F` summed over self and over alien blocks, each divided by
/// the matching power.
pub fn normalized_mse(
    estimate: &MultiOperatorChannel,
    truth: &MultiOperatorChannel,
    normalization: Normalization,
) -> Result<BlockMse> {
    let (k, n) = (truth.operators(), truth.lines());
    if estimate.operators() != k || estimate.lines() != n {
        return Err(Error::dims(
            "estimate shape",
            format!("{k} operators x {n} lines"),
            format!("{} operators x {} lines", estimate.operators(), estimate.lines()),
        ));
    }
    let (mut err_self, mut err_alien, mut pow_self, mut pow_alien) = (0.0, 0.0, 0.0, 0.0);
    let nf = n as f64;
    for from in 0..k {
        for to in 0..k {
            let t = truth.block(from, to);
            let e = crate::linalg::frobenius_sq(&(estimate.block(from, to) - &t));
            let p = match normalization {
                Normalization::Ensemble { alpha } if from == to => nf * (1.0 + (nf - 1.0) * alpha * alpha),
                Normalization::Ensemble { alpha } => nf * nf * alpha * alpha,
                Normalization::Realization => crate::linalg::frobenius_sq(&t),
            };
            if from == to {
                err_self += e;
                pow_self += p;
            } else {
                err_alien += e;
                pow_alien += p;
            }
        }
    }
    if pow_self <= 0.0 {
        return Err(Error::ZeroPower { what: "direct channel blocks" });
    }
    let alien_blocks = if k == 1 {
        None
    } else if pow_alien <= 0.0 {
        return Err(Error::ZeroPower { what: "alien channel blocks" });
    } else {
        Some(err_alien / pow_alien)
    };
    Ok(BlockMse { self_blocks: err_self / pow_self, alien_blocks })
}

/// Mean signal and error power of a frame of decision variables.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize)]
pub struct DecisionPower {
    pub signal: f64,
    pub error: f64,
    pub count: usize,
}

impl DecisionPower {
    pub fn measure(decisions: &CMatrix, truth: &CMatrix) -> Result<Self> {
        if decisions.shape() != truth.shape() {
            return Err(Error::dims(
                "decision frame",
                format!("{:?}", truth.shape()),
                format!("{:?}", decisions.shape()),
            ));
        }
        Ok(Self {
            signal: truth.iter().map(|z| z.norm_sqr()).sum(),
            error: decisions.iter().zip(truth.iter()).map(|(d, x)| (d - x).norm_sqr()).sum(),
            count: truth.len(),
        })
    }

    pub fn merge(&mut self, other: &Self) {
        self.signal += other.signal;
        self.error += other.error;
        self.count += other.count;
    }

    /// Mean error power per symbol.
    pub fn error_power(&self) -> f64 {
        if self.count == 0 {
            0.0
        } else {
            self.error / self.count as f64
        }
    }

    pub fn snr_db(&self) -> f64 {
        if self.error <= 0.0 {
            return SNR_CAP_DB;
        }
        to_db(self.signal / self.error).min(SNR_CAP_DB)
    }
}

/// `10 log10(E|x|² / E|x̂ − x|²)` over a frame, capped at [`SNR_CAP_DB`].
pub fn snr_decision(decisions: &CMatrix, truth: &CMatrix) -> Result<f64> {
    Ok(DecisionPower::measure(decisions, truth)?.snr_db())
}

/// Gap-formula loading parameters.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GapModel {
    /// SNR gap in dB: 6 dB margin plus 9.8 dB for the target error rate,
    /// minus 5 dB of coding gain.
    pub gamma_db: f64,
    pub max_bits: f64,
    pub framing_overhead: f64,
    pub tone_spacing_hz: f64,
    /// Round loading down to whole bits.
    pub integer_bits: bool,
}

impl Default for GapModel {
    fn default() -> Self {
        Self {
            gamma_db: 6.0 + 9.8 - 5.0,
            max_bits: 12.0,
            framing_overhead: 0.12,
            tone_spacing_hz: 4312.5,
            integer_bits: false,
        }
    }
}

impl GapModel {
    pub fn validate(&self) -> Result<()> {
        if !self.gamma_db.is_finite() {
            return Err(Error::InvalidConfig("gap must be finite".into()));
        }
        if !(self.max_bits >= 0.0 && self.max_bits.is_finite()) {
            return Err(Error::InvalidConfig("max_bits must be a non-negative number".into()));
        }
        if !(0.0..1.0).contains(&self.framing_overhead) {
            return Err(Error::InvalidConfig("framing_overhead must lie in [0, 1)".into()));
        }
        if !(self.tone_spacing_hz > 0.0 && self.tone_spacing_hz.is_finite()) {
            return Err(Error::InvalidConfig("tone_spacing_hz must be positive".into()));
        }
        Ok(())
    }
}

/// `min(max_bits, log2(1 + SNR/Γ))`, floored at zero.
pub fn bit_loading(snr_d_db: f64, gap: &GapModel) -> f64 {
    if snr_d_db.is_nan() {
        return 0.0;
    }
    let bits = (1.0 + from_db(snr_d_db - gap.gamma_db)).log2();
    let bits = bits.clamp(0.0, gap.max_bits);
    if gap.integer_bits {
        bits.floor()
    } else {
        bits
    }
}

/// `(1 − overhead) · symbol_rate · Σ b` in Mbit/s.
pub fn throughput(per_tone_bits: &[f64], gap: &GapModel, symbol_rate_hz: f64) -> f64 {
    let total: f64 = per_tone_bits.iter().sum();
    (1.0 - gap.framing_overhead) * symbol_rate_hz * total / 1e6
}

/// Noise variance relative to a unit-power signal, from PSDs in dBm/Hz.
///
/// The tone bandwidth cancels, so only the PSD difference matters.
pub fn psd_to_noise_power(signal_dbm_hz: f64, noise_dbm_hz: f64) -> f64 {
    from_db(noise_dbm_hz - signal_dbm_hz)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::Complex64;

    #[test]
    fn gap_checks() {
        let g = GapModel::default();
        assert!((g.gamma_db - 10.8).abs() < 1e-12);
        assert!((bit_loading(10.8, &g) - 1.0).abs() < 1e-12);
        assert_eq!(bit_loading(80.0, &g), 12.0);
        assert_eq!(bit_loading(f64::NEG_INFINITY, &g), 0.0);
        let gi = GapModel { integer_bits: true, ..g };
        assert_eq!(bit_loading(20.0, &gi), bit_loading(20.0, &g).floor());
    }

    #[test]
    fn throughput_arithmetic() {
        let g = GapModel::default();
        let bits = vec![12.0; 1000];
        assert!((throughput(&bits, &g, 48_000.0) - 506.88).abs() < 1e-9);
        assert_eq!(throughput(&[0.0; 10], &g, 48_000.0), 0.0);
        let doubled = vec![12.0; 2000];
        assert!((throughput(&doubled, &g, 48_000.0) - 2.0 * 506.88).abs() < 1e-9);
    }

    #[test]
    fn snr_sentinels() {
        let x = CMatrix::from_element(2, 3, Complex64::new(1.0, -1.0));
        assert_eq!(snr_decision(&x, &x).unwrap(), SNR_CAP_DB);
        assert!(snr_decision(&CMatrix::zeros(2, 3), &x).unwrap().abs() < 1e-12);
    }

    #[test]
    fn mse_sentinels() {
        let full = CMatrix::from_fn(4, 4, |i, j| Complex64::new(1.0 + (i * 4 + j) as f64, 0.5));
        let h = MultiOperatorChannel::from_full(2, 2, full).unwrap();
        let norm = Normalization::Realization;
        let perfect = normalized_mse(&h, &h, norm).unwrap();
        assert_eq!(perfect.self_db(), MSE_FLOOR_DB);
        assert_eq!(perfect.alien_db(), Some(MSE_FLOOR_DB));
        let zero = MultiOperatorChannel::from_full(2, 2, CMatrix::zeros(4, 4)).unwrap();
        let m = normalized_mse(&zero, &h, norm).unwrap();
        assert!(m.self_db().abs() < 1e-12 && m.alien_db().unwrap().abs() < 1e-12);
        let id = MultiOperatorChannel::identity(2, 2);
        assert!(matches!(normalized_mse(&zero, &id, norm), Err(Error::ZeroPower { .. })));
    }

    #[test]
    fn psd_helper() {
        assert!((psd_to_noise_power(-76.0, -140.0) - 10f64.powf(-6.4)).abs() < 1e-18);
    }
}
