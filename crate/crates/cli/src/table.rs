//! Comma-separated tables with full-precision numbers.

use std::fmt::Write;

/// 17 significant digits, enough to round-trip any `f64`.
pub fn num(x: f64) -> String {
    if x.is_finite() {
        format!("{x:.16e}")
    } else {
        "NaN".to_string()
    }
}

pub struct Table {
    text: String,
}

impl Table {
    pub fn new(header: &[&str]) -> Self {
        Self {
            text: format!("{}\n", header.join(",")),
        }
    }

    pub fn row(&mut self, cells: &[String]) {
        let _ = writeln!(self.text, "{}", cells.join(","));
    }

    pub fn finish(self) -> String {
        self.text
    }
}
