//! Per-operator training frames.
//!
//! Entries are unit-power, so `X̄_k X̄_kᴴ ≈ T·I` for random sets and exactly
//! `T·I` after [`orthogonalize`]. Estimators use explicit pseudo-inverses and
//! are therefore independent of this normalization.
//!
//! Operator `k` only ever sees its own block through [`OperatorTraining`];
//! the stacked matrix is available for the data-cooperation and centralized
//! baselines, where sharing the training is part of the scheme.

use std::io::{Read, Write};

use num_complex::Complex64;
use rand::Rng;
use serde::Serialize;

use crate::linalg::RightPseudoInverse;
use crate::model::{Constellation, ScenarioConfig};
use crate::{CMatrix, Error, Result};

/// Stacked training `X̄ = [X̄_1; …; X̄_K]` (`KN × T`).
#[derive(Clone, Debug, PartialEq)]
pub struct TrainingSet {
    operators: usize,
    lines: usize,
    data: CMatrix,
}

/// Training block of a single operator, with its cached pseudo-inverse.
#[derive(Clone, Debug)]
pub struct OperatorTraining {
    operator: usize,
    block: CMatrix,
    pinv: RightPseudoInverse,
}

impl OperatorTraining {
    pub fn new(operator: usize, block: CMatrix) -> Result<Self> {
        let pinv = RightPseudoInverse::new(&block, "operator training")?;
        Ok(Self { operator, block, pinv })
    }

    pub fn operator(&self) -> usize {
        self.operator
    }

    /// `X̄_k` (`N × T`).
    pub fn block(&self) -> &CMatrix {
        &self.block
    }

    pub fn length(&self) -> usize {
        self.block.ncols()
    }

    /// Least-squares fit `Z X̄_kᴴ (X̄_k X̄_kᴴ)⁻¹`.
    pub fn fit(&self, z: &CMatrix) -> Result<CMatrix> {
        self.pinv.apply(z)
    }

    /// Re-encode a channel block with this training: `H X̄_k`.
    pub fn encode(&self, channel_block: &CMatrix) -> CMatrix {
        channel_block * &self.block
    }
}

impl TrainingSet {
    pub fn new(operators: usize, lines: usize, data: CMatrix) -> Result<Self> {
        if operators == 0 || lines == 0 {
            return Err(Error::InvalidArgument("training needs at least one line".into()));
        }
        if data.nrows() != operators * lines {
            return Err(Error::dims("training rows", operators * lines, data.nrows()));
        }
        if data.ncols() <= lines {
            return Err(Error::InvalidConfig(format!(
                "training length {} must exceed lines per operator {}",
                data.ncols(),
                lines
            )));
        }
        Ok(Self { operators, lines, data })
    }

    pub fn operators(&self) -> usize {
        self.operators
    }

    pub fn lines(&self) -> usize {
        self.lines
    }

    pub fn length(&self) -> usize {
        self.data.ncols()
    }

    /// Stacked training of all operators (DC / centralized only).
    pub fn full(&self) -> &CMatrix {
        &self.data
    }

    /// `X̄_k` as an owned copy.
    pub fn block(&self, k: usize) -> CMatrix {
        self.data.rows(k * self.lines, self.lines).into_owned()
    }

    /// Hand each operator its own block.
    pub fn split(&self) -> Result<Vec<OperatorTraining>> {
        (0..self.operators)
            .map(|k| OperatorTraining::new(k, self.block(k)))
            .collect()
    }

    /// Write as CSV: a header record `operators,lines,length`, then one record
    /// per training row with `re,im` pairs for each of the `T` samples.
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::WriterBuilder::new().flexible(true).from_writer(writer);
        w.write_record(["operators", "lines", "length"])?;
        w.write_record([
            self.operators.to_string(),
            self.lines.to_string(),
            self.length().to_string(),
        ])?;
        for row in self.data.row_iter() {
            let fields: Vec<String> = row
                .iter()
                .flat_map(|z| [format!("{:e}", z.re), format!("{:e}", z.im)])
                .collect();
            w.write_record(&fields)?;
        }
        w.flush()?;
        Ok(())
    }

    /// Parse the format written by [`TrainingSet::write_csv`].
    pub fn read_csv<R: Read>(reader: R) -> Result<Self> {
        // Guards against absurd headers in untrusted files.
        const MAX_ENTRIES: usize = 1 << 24;
        let mut r = csv::ReaderBuilder::new()
            .has_headers(true)
            .flexible(true)
            .from_reader(reader);
        let header = r.headers()?.clone();
        if header.iter().collect::<Vec<_>>() != ["operators", "lines", "length"] {
            return Err(Error::InvalidArgument("training CSV header must be operators,lines,length".into()));
        }
        let mut records = r.records();
        let dims = records
            .next()
            .ok_or_else(|| Error::InvalidArgument("training CSV is missing its dimension record".into()))??;
        let parse_dim = |i: usize| -> Result<usize> {
            dims.get(i)
                .and_then(|s| s.trim().parse::<usize>().ok())
                .ok_or_else(|| Error::InvalidArgument("malformed training CSV dimension record".into()))
        };
        if dims.len() != 3 {
            return Err(Error::InvalidArgument("dimension record must have 3 fields".into()));
        }
        let (k, n, t) = (parse_dim(0)?, parse_dim(1)?, parse_dim(2)?);
        let rows = k
            .checked_mul(n)
            .filter(|&rows| rows > 0 && rows.checked_mul(t).is_some_and(|e| e <= MAX_ENTRIES))
            .ok_or_else(|| Error::InvalidArgument("training CSV dimensions out of range".into()))?;
        // Grows with the records actually present, not the declared size.
        let mut samples: Vec<Complex64> = Vec::with_capacity((rows * t).min(1 << 12));
        for i in 0..rows {
            let rec = records
                .next()
                .ok_or_else(|| Error::InvalidArgument(format!("training CSV ends before row {i}")))??;
            if rec.len() != 2 * t {
                return Err(Error::dims("training CSV row fields", 2 * t, rec.len()));
            }
            for j in 0..t {
                let re = parse_f64(&rec[2 * j])?;
                let im = parse_f64(&rec[2 * j + 1])?;
                samples.push(Complex64::new(re, im));
            }
        }
        if records.next().is_some() {
            return Err(Error::InvalidArgument("trailing records in training CSV".into()));
        }
        TrainingSet::new(k, n, CMatrix::from_row_slice(rows, t, &samples))
    }
}

fn parse_f64(s: &str) -> Result<f64> {
    s.trim()
        .parse::<f64>()
        .ok()
        .filter(|v| v.is_finite())
        .ok_or_else(|| Error::InvalidArgument(format!("bad training sample `{s}`")))
}

/// Random QPSK training, independent per operator, drawn operator by
/// operator in row-major order.
pub fn gen_training<R: Rng + ?Sized>(config: &ScenarioConfig, rng: &mut R) -> Result<TrainingSet> {
    if config.training_length <= config.lines_per_operator {
        return Err(Error::InvalidConfig(format!(
            "training_length ({}) must exceed lines_per_operator ({})",
            config.training_length, config.lines_per_operator
        )));
    }
    let kn = config.total_lines();
    let t = config.training_length;
    let mut data = CMatrix::zeros(kn, t);
    for r in 0..kn {
        for c in 0..t {
            data[(r, c)] = Constellation::Qpsk.sample(rng);
        }
    }
    TrainingSet::new(config.num_operators, config.lines_per_operator, data)
}

/// Exactly orthogonal training spanning the same row space as `training`
/// whenever the rows are independent: `X̄ X̄ᴴ = T·I`.
///
/// Rows are Gram-Schmidt orthonormalized (QR of `X̄ᴴ`) and rescaled to
/// norm² `T`, so the per-row power is preserved.
pub fn orthogonalize(training: &TrainingSet) -> Result<TrainingSet> {
    let kn = training.full().nrows();
    let t = training.length();
    if t < kn {
        return Err(Error::InvalidConfig(format!(
            "orthogonal training needs length >= KN ({kn}), got {t}"
        )));
    }
    let qr = training.full().adjoint().qr();
    let r = qr.r();
    crate::linalg::check_triangular_rank(&r, "training")?;
    let mut q = qr.q();
    // Fix the phase of each column so R has a positive real diagonal; this
    // keeps each orthogonal row as close as possible to its source row.
    for i in 0..kn {
        let d = r[(i, i)];
        let phase = d / Complex64::from(d.norm());
        let mut col = q.column_mut(i);
        col *= phase;
    }
    let data = q.adjoint() * Complex64::from((t as f64).sqrt());
    TrainingSet::new(training.operators(), training.lines(), data)
}

/// Off-diagonal magnitudes of the normalized Gram matrix `X̄ X̄ᴴ / T`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct CrossCorrelation {
    pub max_offdiag: f64,
    pub mean_offdiag: f64,
    /// Largest off-diagonal between rows of different operators.
    pub max_cross_operator: f64,
}

pub fn crosscorr_report(training: &TrainingSet) -> CrossCorrelation {
    let x = training.full();
    let t = training.length() as f64;
    let gram = x * x.adjoint() / Complex64::from(t);
    let kn = gram.nrows();
    let n = training.lines();
    let mut max = 0.0f64;
    let mut sum = 0.0;
    let mut count = 0usize;
    let mut max_cross = 0.0f64;
    for r in 0..kn {
        for c in 0..kn {
            if r == c {
                continue;
            }
            let v = gram[(r, c)].norm();
            max = max.max(v);
            sum += v;
            count += 1;
            if r / n != c / n {
                max_cross = max_cross.max(v);
            }
        }
    }
    CrossCorrelation {
        max_offdiag: max,
        mean_offdiag: if count == 0 { 0.0 } else { sum / count as f64 },
        max_cross_operator: max_cross,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::relative_difference;
    use crate::model::rng::{stream, Stream};

    fn random(k: usize, n: usize, t: usize, seed: u64) -> TrainingSet {
        gen_training(&ScenarioConfig::new(k, n, t), &mut stream(seed, Stream::Training, 0)).unwrap()
    }

    #[test]
    fn qpsk_entries_have_unit_modulus() {
        let s = random(2, 3, 16, 1);
        assert!(s.full().iter().all(|z| (z.norm() - 1.0).abs() < 1e-15));
    }

    #[test]
    fn rejects_short_training() {
        let cfg = ScenarioConfig::new(2, 4, 4);
        assert!(gen_training(&cfg, &mut stream(0, Stream::Training, 0)).is_err());
        assert!(orthogonalize(&random(3, 4, 8, 0)).is_err());
    }

    #[test]
    fn orthogonalized_gram_is_scaled_identity() {
        let s = orthogonalize(&random(2, 4, 32, 3)).unwrap();
        let gram = s.full() * s.full().adjoint();
        let want = CMatrix::identity(8, 8) * Complex64::from(32.0);
        assert!(relative_difference(&gram, &want) < 1e-12);
        let rep = crosscorr_report(&s);
        assert!(rep.max_offdiag < 1e-12);
    }

    #[test]
    fn single_row_keeps_norm() {
        let s = orthogonalize(&random(1, 1, 4, 5)).unwrap();
        let norm2: f64 = s.full().iter().map(|z| z.norm_sqr()).sum();
        assert!((norm2 - 4.0).abs() < 1e-12);
    }

    #[test]
    fn orthogonalize_is_idempotent_on_row_space() {
        let once = orthogonalize(&random(2, 3, 20, 9)).unwrap();
        let twice = orthogonalize(&once).unwrap();
        // Same row space: projecting rows of `twice` onto rows of `once`
        // reproduces them.
        let a = once.full();
        let proj = twice.full() * a.adjoint() * a / Complex64::from(20.0);
        assert!(relative_difference(&proj, twice.full()) < 1e-12);
        assert!(relative_difference(twice.full(), once.full()) < 1e-12);
    }

    #[test]
    fn random_crosscorr_is_bounded() {
        let rep = crosscorr_report(&random(2, 4, 64, 11));
        assert!(rep.max_offdiag > 0.0 && rep.max_offdiag < 1.0);
        assert!(rep.mean_offdiag <= rep.max_offdiag);
    }

    #[test]
    fn csv_roundtrip() {
        let s = random(2, 2, 5, 4);
        let mut buf = Vec::new();
        s.write_csv(&mut buf).unwrap();
        let back = TrainingSet::read_csv(buf.as_slice()).unwrap();
        assert!(relative_difference(back.full(), s.full()) < 1e-15);
        assert!(TrainingSet::read_csv("operators,lines,length\n1,1,2\n1,0\n".as_bytes()).is_err());
        assert!(TrainingSet::read_csv("operators,lines,length\n99999,99999,99999\n".as_bytes()).is_err());
    }

    #[test]
    fn split_hands_out_own_blocks() {
        let s = random(3, 2, 8, 2);
        let parts = s.split().unwrap();
        for (k, p) in parts.iter().enumerate() {
            assert_eq!(p.operator(), k);
            assert_eq!(p.block(), &s.block(k));
        }
    }
}
