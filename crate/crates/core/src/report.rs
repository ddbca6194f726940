//! Text/CSV export helpers. All numeric output goes through [`fmt_sig9`] so
//! golden files stay byte-stable across runs and platforms.

/// Fixed 9-significant-digit decimal formatting.
pub fn fmt_sig9(x: f64) -> String {
    if x == 0.0 {
        return "0".to_string();
    }
    if !x.is_finite() {
        return if x.is_nan() {
            "nan".to_string()
        } else if x > 0.0 {
            "inf".to_string()
        } else {
            "-inf".to_string()
        };
    }
    let exp = x.abs().log10().floor() as i32;
    // Plain decimal while readable, exponent notation outside.
    if (-4..9).contains(&exp) {
        let decimals = (8 - exp).max(0) as usize;
        let s = format!("{x:.decimals$}");
        trim_zeros(&s)
    } else {
        format!("{x:.8e}")
    }
}

fn trim_zeros(s: &str) -> String {
    if !s.contains('.') {
        return s.to_string();
    }
    let t = s.trim_end_matches('0');
    t.trim_end_matches('.').to_string()
}

#[cfg(test)]
mod tests {
    use super::fmt_sig9;

    #[test]
    fn formats_nine_significant_digits() {
        assert_eq!(fmt_sig9(0.0), "0");
        assert_eq!(fmt_sig9(1.0), "1");
        assert_eq!(fmt_sig9(0.5), "0.5");
        assert_eq!(fmt_sig9(std::f64::consts::PI), "3.14159265");
        assert_eq!(fmt_sig9(-123.456789123), "-123.456789");
        assert_eq!(fmt_sig9(100_000_000.0), "100000000");
        assert_eq!(fmt_sig9(1e8), "100000000");
        assert_eq!(fmt_sig9(1.23e12), "1.23000000e12");
        assert_eq!(fmt_sig9(7.5e-7), "7.50000000e-7");
    }
}
