//! Number formatting shared by every tabular output.

/// Formats `v` with `digits` significant digits, `%g` style: fixed notation
/// for decimal exponents in `[-5, digits)`, scientific otherwise, trailing
/// zeros trimmed.
pub fn sig(v: f64, digits: usize) -> String {
    let digits = digits.max(1);
    if v.is_nan() {
        return "nan".into();
    }
    if v.is_infinite() {
        return if v > 0.0 { "inf".into() } else { "-inf".into() };
    }
    if v == 0.0 {
        return "0".into();
    }
    let sci = format!("{:.*e}", digits - 1, v);
    let (mantissa, exp) = sci.split_once('e').expect("exponent");
    let exp: i32 = exp.parse().expect("exponent digits");
    if exp < -5 || exp >= digits as i32 {
        format!("{}e{}", trim_zeros(mantissa), exp)
    } else {
        let decimals = (digits as i32 - 1 - exp).max(0) as usize;
        trim_zeros(&format!("{:.*}", decimals, v)).to_string()
    }
}

fn trim_zeros(s: &str) -> &str {
    if s.contains('.') {
        s.trim_end_matches('0').trim_end_matches('.')
    } else {
        s
    }
}

#[cfg(test)]
mod tests {
    use super::sig;

    #[test]
    fn significant_digits() {
        assert_eq!(sig(1.708, 6), "1.708");
        assert_eq!(sig(0.000_104_999, 6), "0.000104999");
        assert_eq!(sig(123_456.7, 6), "123457");
        assert_eq!(sig(1_234_567.0, 6), "1.23457e6");
        assert_eq!(sig(1.5e-7, 6), "1.5e-7");
        assert_eq!(sig(-0.935, 3), "-0.935");
        assert_eq!(sig(0.0, 6), "0");
        assert_eq!(sig(f64::INFINITY, 6), "inf");
        assert_eq!(sig(20.723_265_8, 6), "20.7233");
        assert_eq!(sig(9.999_999_9, 6), "10");
    }
}
