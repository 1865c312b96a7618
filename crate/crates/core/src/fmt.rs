//! Report number formatting: six significant digits, `.` as the decimal
//! separator regardless of locale.

pub const SIGNIFICANT_DIGITS: i32 = 6;

/// Formats `v` with six significant digits, dropping trailing zeros.
/// Very large or small magnitudes switch to scientific notation.
pub fn sig(v: f64) -> String {
    if !v.is_finite() {
        return v.to_string();
    }
    if v == 0.0 {
        return "0".into();
    }
    let exp = v.abs().log10().floor() as i32;
    if !(-5..15).contains(&exp) {
        return format!("{:.*e}", (SIGNIFICANT_DIGITS - 1) as usize, v);
    }
    let decimals = (SIGNIFICANT_DIGITS - 1 - exp).max(0) as usize;
    let s = format!("{v:.decimals$}");
    let s = if s.contains('.') {
        s.trim_end_matches('0').trim_end_matches('.').to_string()
    } else {
        s
    };
    if s == "-0" {
        "0".into()
    } else {
        s
    }
}
