use std::fmt;
use std::str::FromStr;

use num_complex::Complex64;
use rand::Rng;
use serde::{Deserialize, Serialize};

/// Supported symbol alphabets, all normalized to unit average power.
///
/// The square QAM sizes are separable: real and imaginary parts are drawn
/// independently from the same PAM alphabet `{±1, ±3, …, ±(√M − 1)}·s`.
/// BPSK is real-valued (`{−1, +1}`).
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Constellation {
    Bpsk,
    Qpsk,
    Qam16,
    Qam64,
    Qam256,
    Qam4096,
}

impl Constellation {
    pub const ALL: [Constellation; 6] = [
        Constellation::Bpsk,
        Constellation::Qpsk,
        Constellation::Qam16,
        Constellation::Qam64,
        Constellation::Qam256,
        Constellation::Qam4096,
    ];

    pub fn size(self) -> usize {
        match self {
            Constellation::Bpsk => 2,
            Constellation::Qpsk => 4,
            Constellation::Qam16 => 16,
            Constellation::Qam64 => 64,
            Constellation::Qam256 => 256,
            Constellation::Qam4096 => 4096,
        }
    }

    pub fn bits_per_symbol(self) -> u32 {
        self.size().trailing_zeros()
    }

    /// Levels per real dimension.
    fn levels(self) -> usize {
        match self {
            Constellation::Bpsk => 2,
            other => (other.size() as f64).sqrt().round() as usize,
        }
    }

    fn scale(self) -> f64 {
        match self {
            Constellation::Bpsk => 1.0,
            other => {
                let m = other.size() as f64;
                (3.0 / (2.0 * (m - 1.0))).sqrt()
            }
        }
    }

    /// Alphabet of the real component, ascending.
    pub fn real_alphabet(self) -> Vec<f64> {
        let levels = self.levels();
        let s = self.scale();
        (0..levels)
            .map(|i| (2.0 * i as f64 - (levels as f64 - 1.0)) * s)
            .collect()
    }

    /// Alphabet of the imaginary component (`{0}` for BPSK).
    pub fn imag_alphabet(self) -> Vec<f64> {
        match self {
            Constellation::Bpsk => vec![0.0],
            other => other.real_alphabet(),
        }
    }

    pub fn points(self) -> Vec<Complex64> {
        let re = self.real_alphabet();
        let im = self.imag_alphabet();
        re.iter()
            .flat_map(|&a| im.iter().map(move |&b| Complex64::new(a, b)))
            .collect()
    }

    pub fn max_component(self) -> f64 {
        self.real_alphabet().last().copied().unwrap_or(0.0)
    }

    pub fn sample<R: Rng + ?Sized>(self, rng: &mut R) -> Complex64 {
        let re = self.real_alphabet();
        let im = self.imag_alphabet();
        let a = re[rng.random_range(0..re.len())];
        let b = im[rng.random_range(0..im.len())];
        Complex64::new(a, b)
    }

    /// Nearest constellation point; equidistant ties go to the
    /// smaller-magnitude level in each component.
    pub fn slice(self, y: Complex64) -> Complex64 {
        Complex64::new(
            slice_component(y.re, &self.real_alphabet()),
            slice_component(y.im, &self.imag_alphabet()),
        )
    }
}

fn slice_component(y: f64, alphabet: &[f64]) -> f64 {
    let mut best = alphabet[0];
    let mut best_dist = (y - best).abs();
    // Distances within a few ulps of each other count as a tie.
    let tol = 4.0 * f64::EPSILON * (y.abs() + 1.0);
    for &a in &alphabet[1..] {
        let d = (y - a).abs();
        let tie = (d - best_dist).abs() <= tol;
        if (!tie && d < best_dist) || (tie && a.abs() < best.abs()) {
            best = a;
            best_dist = d;
        }
    }
    best
}

impl fmt::Display for Constellation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Constellation::Bpsk => "bpsk",
            Constellation::Qpsk => "qpsk",
            Constellation::Qam16 => "qam16",
            Constellation::Qam64 => "qam64",
            Constellation::Qam256 => "qam256",
            Constellation::Qam4096 => "qam4096",
        };
        f.write_str(s)
    }
}

impl FromStr for Constellation {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Constellation::ALL
            .into_iter()
            .find(|c| c.to_string().eq_ignore_ascii_case(s))
            .ok_or_else(|| format!("unknown constellation `{s}`"))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn unit_average_power() {
        for c in Constellation::ALL {
            let pts = c.points();
            assert_eq!(pts.len(), c.size());
            let p: f64 = pts.iter().map(|z| z.norm_sqr()).sum::<f64>() / pts.len() as f64;
            assert!((p - 1.0).abs() < 1e-12, "{c}: {p}");
        }
    }

    #[test]
    fn slicer_ties_go_inward() {
        let c = Constellation::Qam16;
        let lv = c.real_alphabet();
        let mid = 0.5 * (lv[2] + lv[3]);
        assert_eq!(c.slice(Complex64::new(mid, 0.0)).re, lv[2]);
        assert_eq!(c.slice(Complex64::new(-mid, 0.0)).re, lv[1]);
        // Midway between -1 and +1 is 0: both candidates have the same
        // magnitude, keep the first one deterministically.
        assert_eq!(Constellation::Bpsk.slice(Complex64::new(0.0, 3.0)), Complex64::new(-1.0, 0.0));
    }

    #[test]
    fn parse_roundtrip() {
        for c in Constellation::ALL {
            assert_eq!(c.to_string().parse::<Constellation>().unwrap(), c);
        }
    }
}
