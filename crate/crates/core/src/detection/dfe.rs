//! Matrix decision-feedback equalizer built on a QR factorization.
//!
//! For a tall channel `H` (`M × L`) and observation `z = Hx + w`, the layers
//! are detected from the last to the first. Layer `i` removes the already
//! decided layers through the upper-triangular factor and scales by `r_ii`.

use serde::{Deserialize, Serialize};

use super::soft::{decide, Decision};
use crate::linalg::check_triangular_rank;
use crate::model::Constellation;
use crate::{CMatrix, Complex64, Error, Result};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DfeMode {
    /// QR of `H` itself.
    Zf,
    /// QR of `[H; σI]`, the MMSE matrix DFE.
    #[default]
    Mmse,
}

/// `Q₁` (the rows of `Q` that multiply the observation) and `R` of the
/// possibly augmented channel.
#[derive(Clone, Debug)]
pub struct DfeFactorization {
    mode: DfeMode,
    q1: CMatrix,
    r: CMatrix,
    noise: f64,
}

/// Outputs of one DFE pass over a frame (one column per symbol time).
#[derive(Clone, Debug, PartialEq)]
pub struct DfeOutput {
    /// Values fed back and returned as the detected symbols.
    pub symbols: CMatrix,
    /// Filter outputs before bias removal (equal to `unbiased` for ZF).
    pub biased: CMatrix,
    /// Unbiased decision variables `x + e`.
    pub unbiased: CMatrix,
    /// Variance of `e` per layer.
    pub layer_variance: Vec<f64>,
}

impl DfeFactorization {
    /// Factor `h` for detection under complex noise variance `noise`.
    ///
    /// MMSE with zero noise degenerates to ZF.
    pub fn new(h: &CMatrix, mode: DfeMode, noise: f64) -> Result<Self> {
        let (m, l) = h.shape();
        if l == 0 || m < l {
            return Err(Error::dims("equalized channel", format!("tall matrix with {l} columns"), m));
        }
        if !(noise >= 0.0 && noise.is_finite()) {
            return Err(Error::InvalidArgument(format!("noise variance must be >= 0, got {noise}")));
        }
        let mode = if noise == 0.0 { DfeMode::Zf } else { mode };
        let (q1, r) = match mode {
            DfeMode::Zf => {
                let qr = h.clone().qr();
                (qr.q(), qr.r())
            }
            DfeMode::Mmse => {
                let mut aug = CMatrix::zeros(m + l, l);
                aug.rows_mut(0, m).copy_from(h);
                for i in 0..l {
                    aug[(m + i, i)] = Complex64::new(noise.sqrt(), 0.0);
                }
                let qr = aug.qr();
                (qr.q().rows(0, m).into_owned(), qr.r())
            }
        };
        check_triangular_rank(&r, "equalized channel")?;
        Ok(Self { mode, q1, r, noise })
    }

    pub fn mode(&self) -> DfeMode {
        self.mode
    }

    pub fn q1(&self) -> &CMatrix {
        &self.q1
    }

    pub fn r(&self) -> &CMatrix {
        &self.r
    }

    /// Error variance of the unbiased decision variable of layer `i`.
    pub fn layer_variance(&self, i: usize) -> f64 {
        let r2 = self.r[(i, i)].norm_sqr();
        match self.mode {
            DfeMode::Zf => self.noise / r2,
            DfeMode::Mmse => self.noise / (r2 - self.noise).max(f64::MIN_POSITIVE),
        }
    }

    fn bias(&self, i: usize) -> f64 {
        match self.mode {
            DfeMode::Zf => 1.0,
            DfeMode::Mmse => 1.0 - self.noise / self.r[(i, i)].norm_sqr(),
        }
    }

    /// Run the back-substitution on every column of `z`.
    pub fn detect(&self, z: &CMatrix, constellation: Constellation, decision: Decision) -> Result<DfeOutput> {
        if z.nrows() != self.q1.nrows() {
            return Err(Error::dims("equalizer input rows", self.q1.nrows(), z.nrows()));
        }
        let l = self.r.ncols();
        let frames = z.ncols();
        let u = self.q1.adjoint() * z;
        let variances: Vec<f64> = (0..l).map(|i| self.layer_variance(i)).collect();
        let biases: Vec<f64> = (0..l).map(|i| self.bias(i)).collect();
        let mut symbols = CMatrix::zeros(l, frames);
        let mut biased = CMatrix::zeros(l, frames);
        let mut unbiased = CMatrix::zeros(l, frames);
        for f in 0..frames {
            for i in (0..l).rev() {
                let mut t = u[(i, f)];
                for j in i + 1..l {
                    t -= self.r[(i, j)] * symbols[(j, f)];
                }
                let v = t / self.r[(i, i)];
                let d = v / biases[i];
                biased[(i, f)] = v;
                unbiased[(i, f)] = d;
                symbols[(i, f)] = match decision {
                    Decision::Linear => v,
                    other => decide(d, variances[i], constellation, other),
                };
            }
        }
        Ok(DfeOutput { symbols, biased, unbiased, layer_variance: variances })
    }
}

/// Soft decisions from a previous pass, used to cancel layers that the
/// current pass has not decided yet.
#[derive(Clone, Copy, Debug)]
pub struct Priors<'a> {
    pub symbols: &'a CMatrix,
    /// Mean residual variance of each layer's prior (1 means uninformative).
    pub variance: &'a [f64],
}

/// MMSE DFE that also cancels the undecided layers with `priors`.
///
/// Layer `i` (last to first) sees already decided layers `j > i` removed,
/// layers `j < i` replaced by their priors, and uses the MMSE filter
/// `(σ² I + h_i h_iᴴ + Σ_{j<i} v_j h_j h_jᴴ)⁻¹ h_i`. With uninformative priors
/// (`v = 1`, zero symbols) this is the plain MMSE DFE; with exact priors it
/// becomes a matched filter on the fully cleaned observation.
pub fn detect_with_priors(
    h: &CMatrix,
    z: &CMatrix,
    noise: f64,
    priors: Priors<'_>,
    constellation: Constellation,
    decision: Decision,
) -> Result<DfeOutput> {
    let (m, l) = h.shape();
    if l == 0 || m < l {
        return Err(Error::dims("equalized channel", format!("tall matrix with {l} columns"), m));
    }
    if !(noise > 0.0 && noise.is_finite()) {
        return Err(Error::InvalidArgument(format!("prior-aided DFE needs positive noise, got {noise}")));
    }
    if z.nrows() != m {
        return Err(Error::dims("equalizer input rows", m, z.nrows()));
    }
    let frames = z.ncols();
    if priors.symbols.shape() != (l, frames) || priors.variance.len() != l {
        return Err(Error::dims("priors", format!("{l}x{frames}"), format!("{:?}", priors.symbols.shape())));
    }
    // Filters depend only on the per-layer variances, so build them once.
    let mut cov = CMatrix::identity(m, m) * Complex64::new(noise, 0.0);
    for j in 0..l {
        let hj = h.column(j);
        cov += hj * hj.adjoint() * Complex64::new(priors.variance[j].clamp(0.0, 1.0), 0.0);
    }
    let mut filters = Vec::with_capacity(l);
    let mut gains = vec![0.0; l];
    for i in (0..l).rev() {
        let hi = h.column(i);
        // Layer i itself is unknown (unit power); layers above are decided.
        let mut c = cov.clone();
        c += hi * hi.adjoint() * Complex64::new(1.0 - priors.variance[i].clamp(0.0, 1.0), 0.0);
        for j in i + 1..l {
            let hj = h.column(j);
            c -= hj * hj.adjoint() * Complex64::new(priors.variance[j].clamp(0.0, 1.0), 0.0);
        }
        let w = c
            .cholesky()
            .ok_or(Error::RankDeficient { what: "interference covariance" })?
            .solve(&hi.into_owned());
        gains[i] = hi.dotc(&w).re;
        filters.push((i, w));
    }
    let variances: Vec<f64> = gains.iter().map(|&g| ((1.0 - g) / g).max(0.0)).collect();
    let mut symbols = CMatrix::zeros(l, frames);
    let mut biased = CMatrix::zeros(l, frames);
    let mut unbiased = CMatrix::zeros(l, frames);
    for f in 0..frames {
        let mut r = z.column(f) - h * priors.symbols.column(f);
        for (i, w) in &filters {
            let i = *i;
            let hi = h.column(i);
            let t = &r + hi * priors.symbols[(i, f)];
            let v = w.dotc(&t);
            let d = v / gains[i];
            let x = match decision {
                Decision::Linear => v,
                other => decide(d, variances[i], constellation, other),
            };
            r = t - hi * x;
            biased[(i, f)] = v;
            unbiased[(i, f)] = d;
            symbols[(i, f)] = x;
        }
    }
    Ok(DfeOutput { symbols, biased, unbiased, layer_variance: variances })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::relative_difference;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    fn tall() -> CMatrix {
        CMatrix::from_fn(5, 3, |i, j| c(((i * 3 + j) as f64 * 0.7).sin() + if i == j { 2.0 } else { 0.0 }, (i as f64 - j as f64) * 0.1))
    }

    #[test]
    fn factorization_reproduces_input() {
        let h = tall();
        let f = DfeFactorization::new(&h, DfeMode::Zf, 0.1).unwrap();
        assert!(relative_difference(&(f.q1() * f.r()), &h) < 1e-12);
        for i in 0..3 {
            for j in 0..i {
                assert_eq!(f.r()[(i, j)], c(0.0, 0.0));
            }
        }
    }

    #[test]
    fn linear_modes_match_closed_forms() {
        let h = tall();
        let z = CMatrix::from_fn(5, 2, |i, j| c(i as f64 - 1.0, j as f64 + 0.5));
        let zf = DfeFactorization::new(&h, DfeMode::Zf, 0.3).unwrap();
        let out = zf.detect(&z, Constellation::Qpsk, Decision::Linear).unwrap();
        let ls = (h.adjoint() * &h).try_inverse().unwrap() * h.adjoint() * &z;
        assert!(relative_difference(&out.symbols, &ls) < 1e-12);

        let s2 = 0.3;
        let mmse = DfeFactorization::new(&h, DfeMode::Mmse, s2).unwrap();
        let out = mmse.detect(&z, Constellation::Qpsk, Decision::Linear).unwrap();
        let gram = h.adjoint() * &h + CMatrix::identity(3, 3) * c(s2, 0.0);
        let lmmse = gram.try_inverse().unwrap() * h.adjoint() * &z;
        assert!(relative_difference(&out.symbols, &lmmse) < 1e-12);
    }

    #[test]
    fn noiseless_hard_dfe_is_exact() {
        let h = tall();
        let q = Constellation::Qam16;
        let pts = q.points();
        let x = CMatrix::from_fn(3, 4, |i, j| pts[(i * 5 + j * 3) % pts.len()]);
        let z = &h * &x;
        for mode in [DfeMode::Zf, DfeMode::Mmse] {
            let f = DfeFactorization::new(&h, mode, 0.0).unwrap();
            assert_eq!(f.detect(&z, q, Decision::Hard).unwrap().symbols, x);
            assert!(relative_difference(&f.detect(&z, q, Decision::Soft).unwrap().symbols, &x) < 1e-12);
        }
    }

    #[test]
    fn uninformative_priors_reduce_to_mmse_dfe() {
        let h = tall();
        let q = Constellation::Qpsk;
        let z = CMatrix::from_fn(5, 3, |i, j| c((i as f64 * 0.3).cos() + j as f64 * 0.1, (i + j) as f64 * -0.2));
        let plain = DfeFactorization::new(&h, DfeMode::Mmse, 0.2).unwrap().detect(&z, q, Decision::Soft).unwrap();
        let zeros = CMatrix::zeros(3, 3);
        let priors = Priors { symbols: &zeros, variance: &[1.0; 3] };
        let aided = detect_with_priors(&h, &z, 0.2, priors, q, Decision::Soft).unwrap();
        assert!(relative_difference(&aided.symbols, &plain.symbols) < 1e-10);
        assert!(relative_difference(&aided.unbiased, &plain.unbiased) < 1e-10);
        for (a, b) in aided.layer_variance.iter().zip(&plain.layer_variance) {
            assert!((a - b).abs() < 1e-10 * b);
        }
    }

    #[test]
    fn exact_priors_give_matched_filter() {
        let h = tall();
        let x = CMatrix::from_fn(3, 1, |i, _| c(if i % 2 == 0 { 1.0 } else { -1.0 }, 0.0));
        let z = &h * &x;
        let priors = Priors { symbols: &x, variance: &[0.0; 3] };
        let out = detect_with_priors(&h, &z, 0.1, priors, Constellation::Bpsk, Decision::Soft).unwrap();
        for i in 0..3 {
            let energy: f64 = h.column(i).iter().map(|v| v.norm_sqr()).sum();
            assert!((out.layer_variance[i] - 0.1 / energy).abs() < 1e-12);
            assert!((out.unbiased[(i, 0)] - x[(i, 0)]).norm() < 1e-12);
        }
    }

    #[test]
    fn rejects_rank_deficiency() {
        let h = CMatrix::from_fn(3, 2, |i, _| c(i as f64, 0.0));
        assert!(matches!(DfeFactorization::new(&h, DfeMode::Zf, 0.1), Err(Error::RankDeficient { .. })));
        assert!(DfeFactorization::new(&CMatrix::zeros(1, 2), DfeMode::Zf, 0.1).is_err());
    }
}
