//! Stable text formatting shared by the JSON and CSV writers.

/// Fixed 12-decimal rendering used for every CSV float.
pub fn fmt_fixed(x: f64) -> String {
    let s = format!("{x:.12}");
    // avoid "-0.000000000000"
    if s.starts_with('-') && s[1..].bytes().all(|b| b == b'0' || b == b'.') {
        s[1..].to_owned()
    } else {
        s
    }
}

/// JSON number rounded to 12 decimals; non-finite values become `null`.
pub fn fixed_json(x: f64) -> serde_json::Value {
    let r = (x * 1e12).round() / 1e12;
    let r = if r == 0.0 { 0.0 } else { r };
    serde_json::Number::from_f64(r)
        .map(serde_json::Value::Number)
        .unwrap_or(serde_json::Value::Null)
}
