//! Block Jacobi splittings of the centralized least-squares problems.
//!
//! Both IC iterations solve a stacked system `A v = b` where every operator
//! owns one block-diagonal piece `D_k` of `D`. Writing `F = D − A`, one round
//! is the least-squares step `D v⁺ = F v + b`, with iteration matrix
//! `J = (DᴴD)⁻¹DᴴF`.
//!
//! * Estimation: `v = [vec(H_1); …; vec(H_K)]` with `H_k` the `KN × N` column
//!   group, `D = blockdiag(X̄_kᵀ ⊗ I_KN)`, `A = 1_K ⊗ [X̄_1ᵀ ⊗ I … X̄_Kᵀ ⊗ I]`,
//!   `b = 1_K ⊗ vec(Y)`. Here `J = C ⊗ I_KN` where the `KN × KN` matrix `C`
//!   has blocks `C_kl = −conj((X̄_k X̄_kᴴ)⁻¹ X̄_k X̄_lᴴ)` for `k ≠ l`.
//! * Detection: `v = x`, `D = blockdiag(H_1 … H_K)`, `A = 1_K ⊗ H`,
//!   `b = 1_K ⊗ y`, and `J_kl = −H_k⁺ H_l` for `k ≠ l`.
//!
//! The small factor (`C`, or `J` itself for detection) is always built. The
//! dense `D` and `F` are materialized on first use, and only within
//! [`SplitCaps`].

use std::sync::OnceLock;

use serde::{Deserialize, Serialize};

use crate::linalg::{self, check_triangular_rank};
use crate::model::MultiOperatorChannel;
use crate::training::TrainingSet;
use crate::{CMatrix, CVector, Error, Result};

/// Limits on dense materialization.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SplitCaps {
    /// Largest number of unknowns for which `D` and `F` are built.
    pub max_unknowns: usize,
    /// Largest number of entries of `D` (and of `F`).
    pub max_dense_entries: usize,
}

impl Default for SplitCaps {
    fn default() -> Self {
        Self { max_unknowns: 4096, max_dense_entries: 16 * 1024 * 1024 }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SplitKind {
    Estimation,
    Detection,
}

/// Dense `D`, `F` and the thin QR of `D` used for explicit steps.
#[derive(Clone, Debug)]
pub struct DenseSystem {
    pub d: CMatrix,
    pub f: CMatrix,
    q: CMatrix,
    r: CMatrix,
}

impl DenseSystem {
    fn new(d: CMatrix, f: CMatrix) -> Result<Self> {
        let qr = d.clone().qr();
        let r = qr.r();
        check_triangular_rank(&r, "block-diagonal part of the split")?;
        Ok(Self { q: qr.q(), r, d, f })
    }

    /// Stacked system matrix `A = D − F`.
    pub fn a(&self) -> CMatrix {
        &self.d - &self.f
    }

    fn solve(&self, rhs: &CMatrix) -> Result<CMatrix> {
        self.r
            .solve_upper_triangular(&(self.q.adjoint() * rhs))
            .ok_or(Error::RankDeficient { what: "block-diagonal part of the split" })
    }
}

/// What the dense parts are built from.
#[derive(Clone, Debug)]
enum Source {
    Training(Vec<CMatrix>),
    Channel { groups: Vec<CMatrix>, full: CMatrix },
}

#[derive(Clone, Debug)]
pub struct JacobiSplit {
    kind: SplitKind,
    operators: usize,
    lines: usize,
    core: CMatrix,
    lift: usize,
    source: Source,
    dense: OnceLock<DenseSystem>,
    unknowns: usize,
    caps: SplitCaps,
}

impl JacobiSplit {
    pub fn kind(&self) -> SplitKind {
        self.kind
    }

    pub fn operators(&self) -> usize {
        self.operators
    }

    pub fn lines(&self) -> usize {
        self.lines
    }

    /// Number of stacked unknowns (`K²N²` for estimation, `KN` for detection).
    pub fn unknowns(&self) -> usize {
        self.unknowns
    }

    /// Small factor `C` with `J = C ⊗ I_lift`.
    pub fn core(&self) -> &CMatrix {
        &self.core
    }

    pub fn lift(&self) -> usize {
        self.lift
    }

    /// Dense `D` and `F`, built on the first call. Fails with `SizeCap`
    /// past the caps.
    pub fn dense(&self) -> Result<&DenseSystem> {
        if let Some(d) = self.dense.get() {
            return Ok(d);
        }
        let (k, n) = (self.operators, self.lines);
        let built = match &self.source {
            Source::Training(blocks) => {
                let rows_per_op = k * n * blocks.first().map_or(0, CMatrix::ncols);
                self.check_caps(k * rows_per_op)?;
                dense_estimation(blocks, k, n, rows_per_op)?
            }
            Source::Channel { groups, full } => {
                self.check_caps(k * k * n)?;
                dense_detection(groups, full, k, n)?
            }
        };
        Ok(self.dense.get_or_init(|| built))
    }

    fn check_caps(&self, rows: usize) -> Result<()> {
        let caps = &self.caps;
        if self.unknowns <= caps.max_unknowns && rows.saturating_mul(self.unknowns) <= caps.max_dense_entries {
            Ok(())
        } else {
            Err(Error::SizeCap { unknowns: self.unknowns, cap: caps.max_unknowns })
        }
    }

    /// `J = (DᴴD)⁻¹DᴴF` computed from the dense parts.
    pub fn iteration_matrix(&self) -> Result<CMatrix> {
        let dense = self.dense()?;
        dense.solve(&dense.f)
    }

    /// One explicit least-squares step `D v⁺ = F v + b` (columns independent).
    pub fn step(&self, v: &CMatrix, b: &CMatrix) -> Result<CMatrix> {
        let dense = self.dense()?;
        if v.nrows() != self.unknowns || b.nrows() != dense.d.nrows() || v.ncols() != b.ncols() {
            return Err(Error::dims("jacobi step operands", self.unknowns, v.nrows()));
        }
        dense.solve(&(&dense.f * v + b))
    }

    /// `start` followed by `rounds` explicit steps.
    pub fn iterate(&self, start: &CMatrix, b: &CMatrix, rounds: usize) -> Result<Vec<CMatrix>> {
        let mut out = vec![start.clone()];
        for _ in 0..rounds {
            let next = self.step(out.last().expect("non-empty"), b)?;
            out.push(next);
        }
        Ok(out)
    }
}

pub fn build_split_estimation(training: &TrainingSet, caps: SplitCaps) -> Result<JacobiSplit> {
    let (k, n) = (training.operators(), training.lines());
    let blocks: Vec<CMatrix> = (0..k).map(|op| training.block(op)).collect();
    let mut core = CMatrix::zeros(k * n, k * n);
    for (op, xk) in blocks.iter().enumerate() {
        let gram = xk * xk.adjoint();
        let chol = gram.cholesky().ok_or(Error::RankDeficient { what: "operator training" })?;
        for (other, xl) in blocks.iter().enumerate().filter(|(l, _)| *l != op) {
            let c = chol.solve(&(xk * xl.adjoint()));
            core.view_mut((op * n, other * n), (n, n)).copy_from(&c.map(|z| -z.conj()));
        }
    }
    let unknowns = k * k * n * n;
    Ok(JacobiSplit {
        kind: SplitKind::Estimation,
        operators: k,
        lines: n,
        core,
        lift: k * n,
        source: Source::Training(blocks),
        dense: OnceLock::new(),
        unknowns,
        caps,
    })
}

fn dense_estimation(blocks: &[CMatrix], k: usize, n: usize, rows_per_op: usize) -> Result<DenseSystem> {
    let unknowns = k * k * n * n;
    let eye = CMatrix::identity(k * n, k * n);
    let lifted: Vec<CMatrix> = blocks.iter().map(|x| linalg::kron(&x.transpose(), &eye)).collect();
    let width = n * k * n;
    let mut d = CMatrix::zeros(k * rows_per_op, unknowns);
    let mut a = CMatrix::zeros(k * rows_per_op, unknowns);
    for row in 0..k {
        d.view_mut((row * rows_per_op, row * width), (rows_per_op, width)).copy_from(&lifted[row]);
        for (col, x) in lifted.iter().enumerate() {
            a.view_mut((row * rows_per_op, col * width), (rows_per_op, width)).copy_from(x);
        }
    }
    let f = &d - a;
    DenseSystem::new(d, f)
}

pub fn build_split_detection(channel: &MultiOperatorChannel, caps: SplitCaps) -> Result<JacobiSplit> {
    let (k, n) = (channel.operators(), channel.lines());
    let groups: Vec<CMatrix> = (0..k).map(|op| channel.column_group(op)).collect();
    let mut core = CMatrix::zeros(k * n, k * n);
    for (op, hk) in groups.iter().enumerate() {
        for (other, hl) in groups.iter().enumerate().filter(|(l, _)| *l != op) {
            let c = linalg::least_squares(hk, hl, "operator column group")?;
            core.view_mut((op * n, other * n), (n, n)).copy_from(&(-c));
        }
    }
    Ok(JacobiSplit {
        kind: SplitKind::Detection,
        operators: k,
        lines: n,
        core,
        lift: 1,
        source: Source::Channel { groups, full: channel.full().clone() },
        dense: OnceLock::new(),
        unknowns: k * n,
        caps,
    })
}

fn dense_detection(groups: &[CMatrix], full: &CMatrix, k: usize, n: usize) -> Result<DenseSystem> {
    let rows = k * k * n;
    let mut d = CMatrix::zeros(rows, k * n);
    let mut a = CMatrix::zeros(rows, k * n);
    for (op, hk) in groups.iter().enumerate() {
        d.view_mut((op * k * n, op * n), (k * n, n)).copy_from(hk);
        a.view_mut((op * k * n, 0), (k * n, k * n)).copy_from(full);
    }
    let f = &d - a;
    DenseSystem::new(d, f)
}

/// `ρ(J)`, equal to `ρ(C)` because `J = C ⊗ I`.
pub fn spectral_radius(split: &JacobiSplit) -> Result<f64> {
    linalg::spectral_radius(&split.core)
}

/// `‖Jⁱ‖₂` for `i = 0..=rounds`: the error after `i` rounds is at most this
/// factor times the initial error.
pub fn predicted_error_decay(split: &JacobiSplit, rounds: usize) -> Vec<f64> {
    let size = split.core.nrows();
    let mut power = CMatrix::identity(size, size);
    let mut out = Vec::with_capacity(rounds + 1);
    out.push(if size == 0 { 0.0 } else { 1.0 });
    for _ in 0..rounds {
        power = &split.core * power;
        out.push(linalg::spectral_norm(&power));
    }
    out
}

/// `[vec(H_1); …; vec(H_K)]` from the column groups of `channel`.
pub fn estimation_unknowns(channel: &MultiOperatorChannel) -> CMatrix {
    let parts: Vec<CVector> = (0..channel.operators()).map(|op| linalg::vec(&channel.column_group(op))).collect();
    let len = parts.iter().map(CVector::len).sum();
    CMatrix::from_iterator(len, 1, parts.iter().flat_map(|p| p.iter().copied()))
}

/// `1_K ⊗ vec(Y)`.
pub fn estimation_rhs(received: &CMatrix, operators: usize) -> CMatrix {
    let v = linalg::vec(received);
    CMatrix::from_iterator(v.len() * operators, 1, (0..operators).flat_map(|_| v.iter().copied()))
}

/// `1_K ⊗ y`, one column per symbol time.
pub fn detection_rhs(received: &CMatrix, operators: usize) -> CMatrix {
    let rows = received.nrows();
    let mut out = CMatrix::zeros(rows * operators, received.ncols());
    for op in 0..operators {
        out.rows_mut(op * rows, rows).copy_from(received);
    }
    out
}

/// Largest per-iteration relative deviation between two state sequences.
pub fn max_relative_deviation(a: &[CMatrix], b: &[CMatrix]) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::dims("iteration count", a.len(), b.len()));
    }
    let mut worst: f64 = 0.0;
    for (x, y) in a.iter().zip(b) {
        if x.shape() != y.shape() {
            return Err(Error::dims("iterate shape", format!("{:?}", x.shape()), format!("{:?}", y.shape())));
        }
        worst = worst.max(linalg::relative_difference(x, y));
    }
    Ok(worst)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::rng::{stream, Stream};
    use crate::model::{synth_channel, ScenarioConfig};
    use crate::training::{gen_training, orthogonalize};
    use crate::Complex64;

    fn training(k: usize, n: usize, t: usize, seed: u64) -> TrainingSet {
        let cfg = ScenarioConfig::new(k, n, t);
        gen_training(&cfg, &mut stream(seed, Stream::Training, 0)).unwrap()
    }

    #[test]
    fn orthogonal_training_has_zero_radius() {
        let t = orthogonalize(&training(2, 4, 32, 1)).unwrap();
        let split = build_split_estimation(&t, SplitCaps::default()).unwrap();
        assert!(split.core().iter().all(|z| z.norm() < 1e-12));
        assert!(spectral_radius(&split).unwrap() < 1e-12);
        let decay = predicted_error_decay(&split, 3);
        assert_eq!(decay[0], 1.0);
        assert!(decay[1..].iter().all(|&v| v < 1e-12));
    }

    #[test]
    fn single_operator_is_trivial() {
        let split = build_split_estimation(&training(1, 3, 16, 2), SplitCaps::default()).unwrap();
        assert_eq!(spectral_radius(&split).unwrap(), 0.0);
        let dense = split.dense().unwrap();
        assert!(dense.f.iter().all(|z| z.norm() == 0.0));
    }

    #[test]
    fn dense_estimation_split_matches_kronecker_form() {
        let t = training(2, 4, 32, 3);
        let split = build_split_estimation(&t, SplitCaps::default()).unwrap();
        let j = split.iteration_matrix().unwrap();
        let expected = linalg::kron(split.core(), &CMatrix::identity(8, 8));
        assert!(linalg::relative_difference(&j, &expected) < 1e-10);
        let rho = spectral_radius(&split).unwrap();
        let dense_rho = linalg::spectral_radius(&j).unwrap();
        assert!((rho - dense_rho).abs() < 1e-6);
        assert!(rho > 0.0 && rho < 1.0);
        let dense = split.dense().unwrap();
        assert!(linalg::relative_difference(&(&dense.d - &dense.f), &dense.a()) < 1e-15);
    }

    #[test]
    fn detection_split() {
        let cfg = ScenarioConfig::new(2, 3, 4).with_alpha(0.5);
        let h = synth_channel(&cfg, &mut stream(4, Stream::Channel, 0)).unwrap();
        let split = build_split_detection(&h, SplitCaps::default()).unwrap();
        let j = split.iteration_matrix().unwrap();
        assert!(linalg::relative_difference(&j, split.core()) < 1e-10);
        assert!(spectral_radius(&split).unwrap() < 1.0);

        let decoupled = build_split_detection(&MultiOperatorChannel::identity(2, 3), SplitCaps::default()).unwrap();
        assert!(spectral_radius(&decoupled).unwrap() < 1e-12);
    }

    #[test]
    fn caps_disable_dense_parts() {
        let caps = SplitCaps { max_unknowns: 10, ..SplitCaps::default() };
        let split = build_split_estimation(&training(2, 4, 32, 5), caps).unwrap();
        assert!(matches!(split.dense(), Err(Error::SizeCap { unknowns: 64, cap: 10 })));
        assert!(spectral_radius(&split).is_ok());
    }

    #[test]
    fn rhs_layout() {
        let y = CMatrix::from_fn(2, 2, |i, j| Complex64::new((i * 2 + j) as f64, 0.0));
        let b = estimation_rhs(&y, 2);
        assert_eq!(b.nrows(), 8);
        assert_eq!(b[(1, 0)], y[(1, 0)]);
        assert_eq!(b[(6, 0)], y[(0, 1)]);
        let bd = detection_rhs(&y, 3);
        assert_eq!(bd.shape(), (6, 2));
        assert_eq!(bd[(5, 1)], y[(1, 1)]);
    }
}
