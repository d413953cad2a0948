//! Posterior-mean symbol estimator under Gaussian noise.

use serde::{Deserialize, Serialize};

use crate::model::Constellation;
use crate::{Complex64, Error, Result};

/// How a decision variable is turned into the symbol fed back.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Decision {
    /// Posterior mean `g_Λ`.
    #[default]
    Soft,
    /// Nearest constellation point.
    Hard,
    /// No decision at all; the (biased) filter output is fed back. Turns the
    /// DFE into a linear equalizer and the MUD iterations into plain Jacobi.
    Linear,
}

/// Posterior mean `E[a | y]` of a real symbol `a`, uniform over `alphabet`,
/// observed as `y = a + n` with `n ~ N(0, variance)`.
pub fn phi(y: f64, variance: f64, alphabet: &[f64]) -> Result<f64> {
    if alphabet.is_empty() {
        return Err(Error::InvalidArgument("empty alphabet".into()));
    }
    if !(variance > 0.0) {
        return Err(Error::InvalidArgument(format!("noise variance must be positive, got {variance}")));
    }
    Ok(phi_unchecked(y, variance, alphabet))
}

fn phi_unchecked(y: f64, variance: f64, alphabet: &[f64]) -> f64 {
    posterior_moments(y, variance, alphabet).0
}

/// Posterior mean and second moment `(E[a | y], E[a² | y])`.
fn posterior_moments(y: f64, variance: f64, alphabet: &[f64]) -> (f64, f64) {
    // Log-sum-exp with the largest exponent factored out.
    let exponent = |a: f64| -(y - a) * (y - a) / (2.0 * variance);
    let top = alphabet.iter().map(|&a| exponent(a)).fold(f64::NEG_INFINITY, f64::max);
    let (mut m1, mut m2, mut den) = (0.0, 0.0, 0.0);
    for &a in alphabet {
        let w = (exponent(a) - top).exp();
        m1 += a * w;
        m2 += a * a * w;
        den += w;
    }
    (m1 / den, m2 / den)
}

/// Posterior variance `E[|x − E[x|d]|² | d]` of a complex symbol observed as
/// `d = x + e`, `e ~ CN(0, variance)`. Zero for a noiseless observation.
pub fn posterior_variance(d: Complex64, variance: f64, constellation: Constellation) -> f64 {
    if !(variance > 0.0) {
        return 0.0;
    }
    let half = variance / 2.0;
    let (re1, re2) = posterior_moments(d.re, half, &constellation.real_alphabet());
    let (im1, im2) = posterior_moments(d.im, half, &constellation.imag_alphabet());
    ((re2 - re1 * re1) + (im2 - im1 * im1)).max(0.0)
}

/// Complex posterior mean for a separable square constellation. `variance`
/// is the complex noise variance; each component sees half of it.
pub fn g_lambda(y: Complex64, variance: f64, constellation: Constellation) -> Result<Complex64> {
    if !(variance > 0.0) {
        return Err(Error::InvalidArgument(format!("noise variance must be positive, got {variance}")));
    }
    let half = variance / 2.0;
    Ok(Complex64::new(
        phi_unchecked(y.re, half, &constellation.real_alphabet()),
        phi_unchecked(y.im, half, &constellation.imag_alphabet()),
    ))
}

/// Apply a decision rule to one unbiased decision variable.
pub fn decide(d: Complex64, variance: f64, constellation: Constellation, decision: Decision) -> Complex64 {
    match decision {
        Decision::Soft => {
            // A zero variance means a perfectly reliable observation.
            if variance > 0.0 {
                let half = variance / 2.0;
                Complex64::new(
                    phi_unchecked(d.re, half, &constellation.real_alphabet()),
                    phi_unchecked(d.im, half, &constellation.imag_alphabet()),
                )
            } else {
                constellation.slice(d)
            }
        }
        Decision::Hard => constellation.slice(d),
        Decision::Linear => d,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bpsk_is_tanh() {
        for &y in &[-3.0, -0.4, 0.0, 1.0, 2.5] {
            for &v in &[0.1, 1.0, 4.0] {
                assert!((phi(y, v, &[-1.0, 1.0]).unwrap() - (y / v).tanh()).abs() < 1e-12);
            }
        }
        assert!((phi(1.0, 1.0, &[-1.0, 1.0]).unwrap() - 0.761_594_155_955_764_9).abs() < 1e-12);
    }

    #[test]
    fn saturates_at_outer_symbol() {
        let v = phi(100.0, 1.0, &[-3.0, -1.0, 1.0, 3.0]).unwrap();
        assert!(v <= 3.0 && 3.0 - v < 1e-6);
        assert!(phi(1e6, 1e-3, &[-3.0, -1.0, 1.0, 3.0]).unwrap().is_finite());
    }

    #[test]
    fn rejects_bad_input() {
        assert!(phi(0.0, 1.0, &[]).is_err());
        assert!(phi(0.0, 0.0, &[1.0]).is_err());
        assert!(phi(0.0, -1.0, &[1.0]).is_err());
    }

    #[test]
    fn complex_splits_components() {
        let q = Constellation::Qpsk;
        let s = q.real_alphabet()[1];
        let y = Complex64::new(0.3, -0.2);
        let g = g_lambda(y, 0.5, q).unwrap();
        assert!((g.re - s * (0.3 * s / 0.25).tanh()).abs() < 1e-12);
        assert!((g.im - s * (-0.2 * s / 0.25).tanh()).abs() < 1e-12);
        assert_eq!(g_lambda(Complex64::new(0.7, 5.0), 1.0, Constellation::Bpsk).unwrap().im, 0.0);
    }

    #[test]
    fn posterior_variance_limits() {
        let q = Constellation::Qpsk;
        assert!(posterior_variance(Complex64::new(0.7, 0.7), 1e-6, q) < 1e-12);
        assert!((posterior_variance(Complex64::new(0.0, 0.0), 1e3, q) - 1.0).abs() < 1e-12);
        assert_eq!(posterior_variance(Complex64::new(0.1, 0.2), 0.0, q), 0.0);
    }

    #[test]
    fn decisions() {
        let c = Constellation::Qam16;
        let d = Complex64::new(0.2, -0.9);
        assert_eq!(decide(d, 0.1, c, Decision::Hard), c.slice(d));
        assert_eq!(decide(d, 0.1, c, Decision::Linear), d);
        assert_eq!(decide(d, 0.0, c, Decision::Soft), c.slice(d));
    }
}
