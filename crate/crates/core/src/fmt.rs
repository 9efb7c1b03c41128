//! Float formatting for CSV and checkpoint files.

/// Shortest round-trip decimal representation, zero-padded to at least nine
/// significant digits. Parsing the result yields the identical `f64`.
pub fn real(x: f64) -> String {
    let s = format!("{x:?}");
    if !x.is_finite() {
        return s;
    }
    let (mantissa, exponent) = match s.find('e') {
        Some(i) => (&s[..i], &s[i..]),
        None => (s.as_str(), ""),
    };
    let digits: String = mantissa.chars().filter(|c| c.is_ascii_digit()).collect();
    let significant = digits.trim_start_matches('0').len().max(1);
    if significant >= 9 {
        return s;
    }
    let mut out = mantissa.to_string();
    if !out.contains('.') {
        out.push('.');
    }
    let pad = if digits.trim_start_matches('0').is_empty() {
        // zero: "0.00000000" has nine zero digits
        9 - digits.len()
    } else {
        9 - significant
    };
    out.extend(std::iter::repeat_n('0', pad));
    out.push_str(exponent);
    out
}
