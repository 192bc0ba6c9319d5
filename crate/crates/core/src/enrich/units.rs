use std::sync::OnceLock;

use regex::Regex;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Unit {
    None,
    Usd,
    Eur,
    Gbp,
    Jpy,
    Percent,
}

impl Unit {
    fn from_symbol(s: &str) -> Option<Unit> {
        match s {
            "$" => Some(Unit::Usd),
            "€" => Some(Unit::Eur),
            "£" => Some(Unit::Gbp),
            "¥" => Some(Unit::Jpy),
            "%" => Some(Unit::Percent),
            _ => None,
        }
    }
}

/// A numeric cell with its unit; `magnitude` already includes `scale_applied`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct UnitValue {
    pub magnitude: f64,
    pub unit: Unit,
    pub scale_applied: f64,
}

fn pattern() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| {
        Regex::new(
            r"^(?P<s1>[-+])?(?P<pre>[$€£¥])?\s*(?P<s2>[-+])?(?P<num>\d{1,3}(?:,\d{3})+(?:\.\d+)?|\d+(?:\.\d*)?|\.\d+)(?P<exp>[eE][-+]?\d+)?\s*(?P<scale>[kKmMbB])?\s*(?P<post>[$€£¥%])?$",
        )
        .expect("valid unit regex")
    })
}

/// Rule-based numeric parser: optional currency symbol before or after the
/// number, optional `K`/`M`/`B` scale, optional `%`. Returns `None` for
/// anything else.
pub fn normalize_numeric(cell: &str) -> Option<UnitValue> {
    let caps = pattern().captures(cell.trim())?;
    if caps.name("s1").is_some() && caps.name("s2").is_some() {
        return None;
    }
    let pre = caps.name("pre").and_then(|m| Unit::from_symbol(m.as_str()));
    let post = caps
        .name("post")
        .and_then(|m| Unit::from_symbol(m.as_str()));
    let unit = match (pre, post) {
        (Some(a), Some(b)) if a != b => return None,
        (Some(a), _) | (None, Some(a)) => a,
        (None, None) => Unit::None,
    };
    let mut text = caps["num"].replace(',', "");
    if let Some(e) = caps.name("exp") {
        text.push_str(e.as_str());
    }
    let mut value: f64 = text.parse().ok()?;
    let negative = [caps.name("s1"), caps.name("s2")]
        .iter()
        .flatten()
        .any(|m| m.as_str() == "-");
    if negative {
        value = -value;
    }
    let scale = match caps.name("scale").map(|m| m.as_str()) {
        Some("k" | "K") => 1e3,
        Some("m" | "M") => 1e6,
        Some("b" | "B") => 1e9,
        _ => 1.0,
    };
    let magnitude = value * scale;
    magnitude.is_finite().then_some(UnitValue {
        magnitude,
        unit,
        scale_applied: scale,
    })
}

/// Shortest decimal string that round-trips to `v`.
pub fn format_number(v: f64) -> String {
    if v == 0.0 {
        return "0".into();
    }
    format!("{v}")
}

/// Merges conflicting cells of one row. Cells that all parse with the same
/// unit are averaged; anything else is de-duplicated and joined with spaces in
/// first-seen order.
pub fn resolve_conflicts<S: AsRef<str>>(cells: &[S]) -> String {
    let parsed: Option<Vec<UnitValue>> = cells
        .iter()
        .map(|c| normalize_numeric(c.as_ref()))
        .collect();
    if let Some(values) = parsed.filter(|v| !v.is_empty()) {
        if values.iter().all(|v| v.unit == values[0].unit) {
            let mean = values.iter().map(|v| v.magnitude).sum::<f64>() / values.len() as f64;
            return format_number(mean);
        }
    }
    let mut seen: Vec<&str> = Vec::new();
    for c in cells {
        let c = c.as_ref().trim();
        if !c.is_empty() && !seen.contains(&c) {
            seen.push(c);
        }
    }
    seen.join(" ")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn recognizes_currency_examples() {
        let v = normalize_numeric("65.4$").unwrap();
        assert_eq!((v.magnitude, v.unit), (65.4, Unit::Usd));
        let v = normalize_numeric("1K€").unwrap();
        assert_eq!(
            (v.magnitude, v.unit, v.scale_applied),
            (1000.0, Unit::Eur, 1e3)
        );
        assert_eq!(normalize_numeric("mario"), None);
    }

    #[test]
    fn other_forms() {
        assert_eq!(normalize_numeric("$1,234.5").unwrap().magnitude, 1234.5);
        assert_eq!(normalize_numeric("-3").unwrap().magnitude, -3.0);
        assert_eq!(normalize_numeric("-$3").unwrap().magnitude, -3.0);
        assert_eq!(normalize_numeric("2.5M").unwrap().magnitude, 2.5e6);
        assert_eq!(normalize_numeric("12%").unwrap().unit, Unit::Percent);
        assert_eq!(normalize_numeric("£7").unwrap().unit, Unit::Gbp);
        assert_eq!(normalize_numeric("¥ 300").unwrap().unit, Unit::Jpy);
        assert_eq!(normalize_numeric("1e3").unwrap().magnitude, 1000.0);
        assert_eq!(normalize_numeric("$5€"), None);
        assert_eq!(normalize_numeric("1,23"), None);
        assert_eq!(normalize_numeric(""), None);
        assert_eq!(normalize_numeric("1999-2001"), None);
    }

    #[test]
    fn conflict_resolution() {
        assert_eq!(resolve_conflicts(&["2.0", "4.0"]), "3");
        assert_eq!(resolve_conflicts(&["red", "blue", "red"]), "red blue");
        assert_eq!(resolve_conflicts(&["65.4$", "1K€"]), "65.4$ 1K€");
        assert_eq!(resolve_conflicts(&["$1", "1K$"]), "500.5");
        assert_eq!(resolve_conflicts(&["1", "two"]), "1 two");
        assert_eq!(resolve_conflicts(&["-1", "1"]), "0");
    }
}
