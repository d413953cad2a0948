use rand::Rng;

use super::rng::complex_gaussian;
use super::{MultiOperatorChannel, ScenarioConfig};
use crate::{CMatrix, Error, Result};

/// Transmitted symbols of all operators: a `KN × L` matrix whose rows
/// `kN .. (k+1)N` belong to operator `k`.
#[derive(Clone, Debug, PartialEq)]
pub struct SymbolFrame {
    operators: usize,
    lines: usize,
    data: CMatrix,
}

impl SymbolFrame {
    pub fn new(operators: usize, lines: usize, data: CMatrix) -> Result<Self> {
        if data.nrows() != operators * lines {
            return Err(Error::dims("symbol frame rows", operators * lines, data.nrows()));
        }
        Ok(Self { operators, lines, data })
    }

    pub fn operators(&self) -> usize {
        self.operators
    }

    pub fn lines(&self) -> usize {
        self.lines
    }

    pub fn len(&self) -> usize {
        self.data.ncols()
    }

    pub fn is_empty(&self) -> bool {
        self.data.ncols() == 0
    }

    pub fn full(&self) -> &CMatrix {
        &self.data
    }

    /// `x_k` (`N × L`).
    pub fn operator(&self, k: usize) -> CMatrix {
        self.data.rows(k * self.lines, self.lines).into_owned()
    }
}

/// Received samples of all operators (`KN × L`); rows `kN .. (k+1)N` are
/// operator `k`'s receivers.
#[derive(Clone, Debug, PartialEq)]
pub struct ReceivedFrame {
    operators: usize,
    lines: usize,
    data: CMatrix,
}

impl ReceivedFrame {
    pub fn new(operators: usize, lines: usize, data: CMatrix) -> Result<Self> {
        if data.nrows() != operators * lines {
            return Err(Error::dims("received frame rows", operators * lines, data.nrows()));
        }
        Ok(Self { operators, lines, data })
    }

    pub fn operators(&self) -> usize {
        self.operators
    }

    pub fn lines(&self) -> usize {
        self.lines
    }

    pub fn full(&self) -> &CMatrix {
        &self.data
    }

    /// `y_k` (`N × L`).
    pub fn operator(&self, k: usize) -> CMatrix {
        self.data.rows(k * self.lines, self.lines).into_owned()
    }
}

/// `L` i.i.d. symbols per line, uniform over the configured alphabet.
/// Drawn column by column (one symbol time after the other).
pub fn draw_symbols<R: Rng + ?Sized>(config: &ScenarioConfig, len: usize, rng: &mut R) -> Result<SymbolFrame> {
    if len == 0 {
        return Err(Error::InvalidArgument("symbol frame length must be at least 1".into()));
    }
    let kn = config.total_lines();
    let c = config.constellation;
    let data = CMatrix::from_fn(kn, len, |_, _| c.sample(rng));
    SymbolFrame::new(config.num_operators, config.lines_per_operator, data)
}

/// `H s + w` for an arbitrary `KN × L` signal, `w ~ CN(0, σ²)` drawn in
/// column-major order. `σ² = 0` draws nothing.
pub fn apply_channel<R: Rng + ?Sized>(
    channel: &MultiOperatorChannel,
    signal: &CMatrix,
    sigma2: f64,
    rng: &mut R,
) -> Result<CMatrix> {
    let kn = channel.full().ncols();
    if signal.nrows() != kn {
        return Err(Error::dims("transmitted signal rows", kn, signal.nrows()));
    }
    if !(sigma2.is_finite() && sigma2 >= 0.0) {
        return Err(Error::InvalidArgument(format!("noise power must be >= 0, got {sigma2}")));
    }
    let mut y = channel.full() * signal;
    if sigma2 > 0.0 {
        for v in y.iter_mut() {
            *v += complex_gaussian(rng, sigma2);
        }
    }
    Ok(y)
}

/// `y = H x + w` with per-operator views.
pub fn transmit<R: Rng + ?Sized>(
    channel: &MultiOperatorChannel,
    symbols: &SymbolFrame,
    sigma2: f64,
    rng: &mut R,
) -> Result<ReceivedFrame> {
    if symbols.operators() != channel.operators() || symbols.lines() != channel.lines() {
        return Err(Error::dims(
            "symbol frame layout",
            format!("{}x{}", channel.operators(), channel.lines()),
            format!("{}x{}", symbols.operators(), symbols.lines()),
        ));
    }
    let y = apply_channel(channel, symbols.full(), sigma2, rng)?;
    ReceivedFrame::new(channel.operators(), channel.lines(), y)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::rng::{stream, Stream};
    use crate::model::{synth_channel, Constellation};
    use num_complex::Complex64;

    #[test]
    fn bpsk_and_qpsk_alphabets() {
        let cfg = ScenarioConfig::new(2, 3, 8).with_constellation(Constellation::Bpsk);
        let s = draw_symbols(&cfg, 4, &mut stream(0, Stream::Symbols, 0)).unwrap();
        assert!(s.full().iter().all(|z| z.im == 0.0 && z.re.abs() == 1.0));
        let cfg = cfg.with_constellation(Constellation::Qpsk);
        let s = draw_symbols(&cfg, 50, &mut stream(0, Stream::Symbols, 0)).unwrap();
        assert!(s.full().iter().all(|z| (z.norm() - 1.0).abs() < 1e-15));
    }

    #[test]
    fn noiseless_zero_input_gives_zero_output() {
        let cfg = ScenarioConfig::new(2, 2, 8).with_alpha(0.3);
        let h = synth_channel(&cfg, &mut stream(0, Stream::Channel, 0)).unwrap();
        let x = SymbolFrame::new(2, 2, CMatrix::zeros(4, 3)).unwrap();
        let y = transmit(&h, &x, 0.0, &mut stream(0, Stream::Noise, 0)).unwrap();
        assert!(y.full().iter().all(|z| *z == Complex64::new(0.0, 0.0)));
    }

    #[test]
    fn identity_channel_passes_symbols() {
        let cfg = ScenarioConfig::new(2, 2, 8);
        let h = MultiOperatorChannel::identity(2, 2);
        let x = draw_symbols(&cfg, 5, &mut stream(1, Stream::Symbols, 0)).unwrap();
        let y = transmit(&h, &x, 0.0, &mut stream(1, Stream::Noise, 0)).unwrap();
        assert_eq!(y.full(), x.full());
        assert_eq!(y.operator(1), x.operator(1));
    }

    #[test]
    fn rejects_mismatched_frames() {
        let h = MultiOperatorChannel::identity(2, 2);
        let x = SymbolFrame::new(1, 4, CMatrix::zeros(4, 1)).unwrap();
        assert!(transmit(&h, &x, 0.1, &mut stream(0, Stream::Noise, 0)).is_err());
        assert!(apply_channel(&h, &CMatrix::zeros(3, 1), 0.1, &mut stream(0, Stream::Noise, 0)).is_err());
        assert!(draw_symbols(&ScenarioConfig::new(1, 1, 2), 0, &mut stream(0, Stream::Symbols, 0)).is_err());
    }
}
