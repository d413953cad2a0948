//! One module per subcommand. Each `run` returns the tables it produced.

pub mod chanest;
pub mod convergence;
pub mod mud;
pub mod throughput;

use icvec_core::metrics::to_db;

/// Mean of linear values, in dB.
pub(crate) fn mean_db(values: &[f64]) -> f64 {
    if values.is_empty() {
        return f64::NAN;
    }
    to_db(values.iter().sum::<f64>() / values.len() as f64)
}

/// Median of a non-empty slice (mean of the middle pair for even lengths).
pub fn median(values: &[f64]) -> f64 {
    let mut v: Vec<f64> = values.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n == 0 {
        f64::NAN
    } else if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}
