//! Small helpers for the rational numbers that appear in instance files and
//! in exact printing of polished solutions.

/// Parses `"p/q"`, or a plain decimal, into an `f64`.
pub fn parse_fraction(text: &str) -> Option<f64> {
    let text = text.trim();
    match text.split_once('/') {
        Some((p, q)) => {
            let p: f64 = p.trim().parse().ok()?;
            let q: f64 = q.trim().parse().ok()?;
            if q == 0.0 {
                return None;
            }
            Some(p / q)
        }
        None => text.parse().ok(),
    }
}

/// Best continued-fraction approximation `p/q` of `value` with
/// `q <= max_den`, returned only if it lies within `tol` of `value`.
pub fn approximate(value: f64, tol: f64, max_den: i64) -> Option<(i64, i64)> {
    if !value.is_finite() {
        return None;
    }
    let negative = value < 0.0;
    let v = value.abs();
    let (mut h0, mut h1) = (0i64, 1i64);
    let (mut k0, mut k1) = (1i64, 0i64);
    let mut rest = v;
    for _ in 0..64 {
        let a = rest.floor();
        if a > i64::MAX as f64 / 2.0 {
            break;
        }
        let a = a as i64;
        let h2 = a.checked_mul(h1)?.checked_add(h0)?;
        let k2 = a.checked_mul(k1)?.checked_add(k0)?;
        if k2 > max_den {
            break;
        }
        (h0, h1, k0, k1) = (h1, h2, k1, k2);
        if ((h1 as f64 / k1 as f64) - v).abs() <= tol {
            let p = if negative { -h1 } else { h1 };
            return Some((p, k1));
        }
        let frac = rest - a as f64;
        if frac <= f64::EPSILON {
            break;
        }
        rest = 1.0 / frac;
    }
    None
}

/// Renders `value` as `p/q` when a small-denominator fraction matches it,
/// falling back to ten significant digits.
pub fn format_exact(value: f64) -> String {
    match approximate(value, 1e-9, 1_000_000) {
        Some((p, 1)) => p.to_string(),
        Some((p, q)) => format!("{p}/{q}"),
        None => format_sig(value, 10),
    }
}

/// Formats with `digits` significant digits, trailing zeros trimmed.
pub fn format_sig(value: f64, digits: usize) -> String {
    if value == 0.0 || !value.is_finite() {
        return if value == 0.0 { "0".into() } else { value.to_string() };
    }
    let magnitude = value.abs().log10().floor() as i64;
    let decimals = (digits as i64 - 1 - magnitude).max(0) as usize;
    if decimals > 17 {
        return format!("{:.*e}", digits - 1, value);
    }
    let s = format!("{value:.decimals$}");
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
