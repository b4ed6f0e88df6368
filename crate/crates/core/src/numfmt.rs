//! Decimal formatting with round-half-away-from-zero.
//!
//! Every printed number in reports, CSV exports and the CLI goes through
//! these helpers so output is identical across platforms.

/// Round `value` to `decimals` places, halves away from zero.
///
/// The value is scaled first, so a binary value just below a decimal half
/// (0.8039215 is stored as 0.80392149999...) still rounds up when the scaled
/// product lands on the half.
pub fn round_half_away(value: f64, decimals: u32) -> f64 {
    let scale = 10f64.powi(decimals as i32);
    (value * scale).round() / scale
}

/// Fixed-point rendering with exactly `decimals` fractional digits.
pub fn fixed(value: f64, decimals: u32) -> String {
    let scale = 10f64.powi(decimals as i32);
    let scaled = (value * scale).round();
    let negative = scaled < 0.0;
    let digits = format!("{:.0}", scaled.abs());
    let digits = if decimals == 0 {
        digits
    } else {
        let width = decimals as usize + 1;
        let padded = format!("{digits:0>width$}");
        let split = padded.len() - decimals as usize;
        format!("{}.{}", &padded[..split], &padded[split..])
    };
    if negative && digits.chars().any(|c| c != '0' && c != '.') {
        format!("-{digits}")
    } else {
        digits
    }
}

/// `100 * numerator / denominator` to `decimals` places, computed exactly on
/// integers with halves rounded away from zero.
///
/// Returns `None` when the denominator is zero.
pub fn percent_exact(numerator: u64, denominator: u64, decimals: u32) -> Option<String> {
    if denominator == 0 {
        return None;
    }
    let scale = 10u128.pow(decimals);
    let scaled_num = numerator as u128 * 100 * scale;
    let den = denominator as u128;
    let quotient = scaled_num / den;
    let remainder = scaled_num % den;
    let rounded = if remainder * 2 >= den { quotient + 1 } else { quotient };
    let int_part = rounded / scale;
    let frac_part = rounded % scale;
    Some(if decimals == 0 {
        format!("{int_part}")
    } else {
        format!("{int_part}.{frac_part:0width$}", width = decimals as usize)
    })
}
