use std::f64::consts::TAU;

use num_complex::Complex64;
use rand::Rng;

use super::rng::complex_gaussian;
use super::ScenarioConfig;
use crate::{CMatrix, Error, Result};

/// The `KN × KN` channel of all operators, stored as one dense matrix.
///
/// Block `H_ij` (`N × N`) is the channel from the lines of operator `i` to
/// the receivers of operator `j`. It sits at block-row `j`, block-column `i`,
/// so that `y_j = Σ_i H_ij x_i + w_j`.
#[derive(Clone, Debug, PartialEq)]
pub struct MultiOperatorChannel {
    operators: usize,
    lines: usize,
    full: CMatrix,
}

impl MultiOperatorChannel {
    pub fn from_full(operators: usize, lines: usize, full: CMatrix) -> Result<Self> {
        let kn = operators * lines;
        if operators == 0 || lines == 0 {
            return Err(Error::InvalidArgument("channel needs at least one line".into()));
        }
        if full.shape() != (kn, kn) {
            return Err(Error::dims("channel matrix", format!("{kn}x{kn}"), format!("{:?}", full.shape())));
        }
        Ok(Self { operators, lines, full })
    }

    /// Assemble from a `K × K` grid indexed `grid[i][j] = H_ij` (`i → j`).
    pub fn from_blocks(grid: &[Vec<CMatrix>]) -> Result<Self> {
        let k = grid.len();
        if k == 0 || grid.iter().any(|row| row.len() != k) {
            return Err(Error::InvalidArgument("block grid must be K x K".into()));
        }
        let n = grid[0][0].nrows();
        let mut full = CMatrix::zeros(k * n, k * n);
        for (i, row) in grid.iter().enumerate() {
            for (j, block) in row.iter().enumerate() {
                if block.shape() != (n, n) {
                    return Err(Error::dims("channel block", format!("{n}x{n}"), format!("{:?}", block.shape())));
                }
                full.view_mut((j * n, i * n), (n, n)).copy_from(block);
            }
        }
        Self::from_full(k, n, full)
    }

    pub fn identity(operators: usize, lines: usize) -> Self {
        let kn = operators * lines;
        Self { operators, lines, full: CMatrix::identity(kn, kn) }
    }

    pub fn operators(&self) -> usize {
        self.operators
    }

    pub fn lines(&self) -> usize {
        self.lines
    }

    pub fn full(&self) -> &CMatrix {
        &self.full
    }

    /// `H_ij`: from operator `from` to operator `to`.
    pub fn block(&self, from: usize, to: usize) -> CMatrix {
        let n = self.lines;
        self.full.view((to * n, from * n), (n, n)).into_owned()
    }

    /// `H_k = [H_k1; H_k2; …; H_kK]` (`KN × N`): operator `k`'s lines towards
    /// every receiver. This is what operator `k` learns under IC.
    pub fn column_group(&self, k: usize) -> CMatrix {
        let n = self.lines;
        self.full.columns(k * n, n).into_owned()
    }

    /// `G_kᵀ = [H_1k, …, H_Kk]` (`N × KN`): every operator's lines towards
    /// receiver `k`. This is what operator `k` learns under DC.
    pub fn row_group(&self, k: usize) -> CMatrix {
        let n = self.lines;
        self.full.rows(k * n, n).into_owned()
    }

    /// Block-diagonal part (self-FEXT only).
    pub fn self_part(&self) -> CMatrix {
        let n = self.lines;
        let mut out = CMatrix::zeros(self.full.nrows(), self.full.ncols());
        for k in 0..self.operators {
            out.view_mut((k * n, k * n), (n, n)).copy_from(&self.block(k, k));
        }
        out
    }
}

/// Draw a channel per the statistical FEXT model.
///
/// Direct paths `H_ii[p,p] = e^{jθ}`, `θ ~ U[0, 2π)`; every other entry is
/// `CN(0, α²)`, for self- and alien-FEXT alike. Entries are drawn in
/// row-major order over the full matrix.
pub fn synth_channel<R: Rng + ?Sized>(config: &ScenarioConfig, rng: &mut R) -> Result<MultiOperatorChannel> {
    config.validate()?;
    let alpha = config.alpha()?;
    let kn = config.total_lines();
    let variance = alpha * alpha;
    let mut full = CMatrix::zeros(kn, kn);
    for r in 0..kn {
        for c in 0..kn {
            full[(r, c)] = if r == c {
                let theta: f64 = rng.random::<f64>() * TAU;
                Complex64::from_polar(1.0, theta)
            } else {
                complex_gaussian(rng, variance)
            };
        }
    }
    MultiOperatorChannel::from_full(config.num_operators, config.lines_per_operator, full)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::rng::{stream, Stream};

    fn cfg(alpha: f64) -> ScenarioConfig {
        ScenarioConfig::new(3, 4, 16).with_alpha(alpha)
    }

    #[test]
    fn direct_paths_have_unit_amplitude() {
        for seed in 0..5 {
            let h = synth_channel(&cfg(0.7), &mut stream(seed, Stream::Channel, 0)).unwrap();
            for p in 0..12 {
                assert!((h.full()[(p, p)].norm() - 1.0).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn zero_coupling_is_diagonal() {
        let h = synth_channel(&cfg(0.0), &mut stream(1, Stream::Channel, 0)).unwrap();
        for r in 0..12 {
            for c in 0..12 {
                if r != c {
                    assert_eq!(h.full()[(r, c)], Complex64::new(0.0, 0.0));
                }
            }
        }
    }

    #[test]
    fn views_reassemble_the_full_matrix() {
        let h = synth_channel(&cfg(0.4), &mut stream(2, Stream::Channel, 0)).unwrap();
        let cols: Vec<CMatrix> = (0..3).map(|k| h.column_group(k)).collect();
        let rows: Vec<CMatrix> = (0..3).map(|k| h.row_group(k)).collect();
        let mut by_cols = CMatrix::zeros(12, 12);
        let mut by_rows = CMatrix::zeros(12, 12);
        for k in 0..3 {
            by_cols.columns_mut(k * 4, 4).copy_from(&cols[k]);
            by_rows.rows_mut(k * 4, 4).copy_from(&rows[k]);
        }
        assert_eq!(&by_cols, h.full());
        assert_eq!(&by_rows, h.full());
        // H_k stacks [H_k1; …; H_kK].
        for k in 0..3 {
            for j in 0..3 {
                assert_eq!(cols[k].rows(j * 4, 4).into_owned(), h.block(k, j));
                assert_eq!(rows[k].columns(j * 4, 4).into_owned(), h.block(j, k));
            }
        }
        let grid: Vec<Vec<CMatrix>> = (0..3).map(|i| (0..3).map(|j| h.block(i, j)).collect()).collect();
        assert_eq!(MultiOperatorChannel::from_blocks(&grid).unwrap(), h);
    }
}
