use super::{check_gamma, AlignmentError, Result};

/// Smooth minimum `-gamma * ln(sum_i exp(-v_i / gamma))`.
///
/// `+inf` entries carry no mass; if every entry is `+inf` the result is
/// `+inf`.
pub fn softmin(values: &[f64], gamma: f64) -> Result<f64> {
    if values.is_empty() {
        return Err(AlignmentError::EmptyInput);
    }
    check_gamma(gamma)?;
    Ok(softmin_unchecked(values, gamma))
}

/// Shifted by the minimum so the largest exponent is zero.
#[inline]
pub(crate) fn softmin_unchecked(values: &[f64], gamma: f64) -> f64 {
    let m = values.iter().copied().fold(f64::INFINITY, f64::min);
    if m == f64::INFINITY {
        return m;
    }
    let sum: f64 = values.iter().map(|&v| (-(v - m) / gamma).exp()).sum();
    m - gamma * sum.ln()
}
