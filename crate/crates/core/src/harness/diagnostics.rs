use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DiagnosticError {
    #[error("series of length {len} is shorter than the window {window}")]
    TooShort { len: usize, window: usize },
    #[error("window must be at least 1")]
    ZeroWindow,
}

/// Rolling mean of an update-norm series.
#[derive(Debug, Clone, PartialEq)]
pub struct DiagnosticSeries {
    /// Entry i is the mean of norms[i .. i + window]; length T − W + 1.
    pub rolling_mean: Vec<f64>,
    pub min_rolling: f64,
    /// `min_rolling < threshold`.
    pub converged: bool,
}

/// Sliding unweighted mean of `norms` over `window` consecutive entries.
/// The running sum is refreshed from scratch once per window so rounding
/// cannot accumulate across long series.
pub fn rolling_norm_diagnostic(
    norms: &[f64],
    window: usize,
    threshold: f64,
) -> Result<DiagnosticSeries, DiagnosticError> {
    if window == 0 {
        return Err(DiagnosticError::ZeroWindow);
    }
    if norms.len() < window {
        return Err(DiagnosticError::TooShort {
            len: norms.len(),
            window,
        });
    }
    let w = window as f64;
    let count = norms.len() - window + 1;
    let mut rolling_mean = Vec::with_capacity(count);
    let mut sum = 0.0;
    for i in 0..count {
        if i % window == 0 {
            sum = norms[i..i + window].iter().sum();
        } else {
            sum += norms[i + window - 1] - norms[i - 1];
        }
        rolling_mean.push(sum / w);
    }
    let min_rolling = rolling_mean.iter().copied().fold(f64::INFINITY, f64::min);
    Ok(DiagnosticSeries {
        converged: min_rolling < threshold,
        rolling_mean,
        min_rolling,
    })
}
