//! Audit results and flat text serializations shared by every checker.

use std::fmt;

/// Outcome of one audit: a bound checked at a number of points.
///
/// `worst_margin` is `bound - estimate` at the point closest to violation and
/// `ci_width` is the statistical allowance at that point.
/// `pass` holds exactly when `worst_margin >= -ci_width`.
#[derive(Debug, Clone, PartialEq)]
pub struct AuditReport {
    pub name: String,
    pub checked_points: usize,
    pub worst_margin: f64,
    pub ci_width: f64,
    pub pass: bool,
}

impl AuditReport {
    pub fn new(
        name: impl Into<String>,
        checked_points: usize,
        worst_margin: f64,
        ci_width: f64,
    ) -> Self {
        let pass = worst_margin >= -ci_width;
        Self {
            name: name.into(),
            checked_points,
            worst_margin,
            ci_width,
            pass,
        }
    }

    /// A report that fails regardless of margin (e.g. a deterministic side-condition broke).
    pub fn failed(mut self) -> Self {
        self.pass = false;
        self
    }

    pub const CSV_HEADER: &'static str = "name,checked_points,worst_margin,ci_width,pass";

    pub fn csv_row(&self) -> String {
        format!(
            "{},{},{:.10e},{:.10e},{}",
            csv_quote(&self.name),
            self.checked_points,
            self.worst_margin,
            self.ci_width,
            self.pass
        )
    }
}

/// Quotes a CSV field when it holds a comma or a quote.
pub fn csv_quote(field: &str) -> String {
    if field.contains([',', '"']) {
        format!("\"{}\"", field.replace('"', "\"\""))
    } else {
        field.to_string()
    }
}

impl fmt::Display for AuditReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "[{}] {} ({} points, worst margin {:.4e}, allowance {:.4e})",
            if self.pass { "PASS" } else { "FAIL" },
            self.name,
            self.checked_points,
            self.worst_margin,
            self.ci_width
        )
    }
}

/// Tracks the point closest to violating its bound.
#[derive(Debug, Clone, Copy)]
pub(crate) struct WorstPoint {
    margin: f64,
    ci: f64,
    seen: usize,
}

impl WorstPoint {
    pub fn new() -> Self {
        Self {
            margin: f64::INFINITY,
            ci: 0.0,
            seen: 0,
        }
    }

    pub fn observe(&mut self, margin: f64, ci: f64) {
        self.seen += 1;
        let slack = if margin.is_nan() {
            f64::NEG_INFINITY
        } else {
            margin + ci
        };
        if slack < self.margin + self.ci || self.seen == 1 {
            self.margin = if margin.is_nan() {
                f64::NEG_INFINITY
            } else {
                margin
            };
            self.ci = ci;
        }
    }

    pub fn report(&self, name: impl Into<String>) -> AuditReport {
        AuditReport::new(name, self.seen, self.margin, self.ci)
    }
}

/// Ordered `name = value` records, written one per line.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct KeyValues {
    entries: Vec<(String, String)>,
}

impl KeyValues {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn num(&mut self, key: &str, value: f64) -> &mut Self {
        self.entries
            .push((key.to_string(), format!("{value:.12e}")));
        self
    }

    pub fn int(&mut self, key: &str, value: u64) -> &mut Self {
        self.entries.push((key.to_string(), value.to_string()));
        self
    }

    pub fn text(&mut self, key: &str, value: impl fmt::Display) -> &mut Self {
        self.entries.push((key.to_string(), value.to_string()));
        self
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.entries
            .iter()
            .find(|(k, _)| k == key)
            .map(|(_, v)| v.as_str())
    }

    pub fn entries(&self) -> &[(String, String)] {
        &self.entries
    }

    pub fn extend(&mut self, other: &KeyValues) {
        self.entries.extend(other.entries.iter().cloned());
    }
}

impl fmt::Display for KeyValues {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (k, v) in &self.entries {
            writeln!(f, "{k} = {v}")?;
        }
        Ok(())
    }
}
