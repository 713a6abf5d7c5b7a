//! Fixed-format CSV emission. Every float is written with 17 significant
//! digits so that parsing the text back yields the identical `f64`.

use std::fmt::Write;

pub fn num(v: f64) -> String {
    format!("{v:.16e}")
}

/// Accumulates rows under a fixed header.
#[derive(Debug, Clone)]
pub struct Table {
    text: String,
}

impl Table {
    pub fn new(header: &[&str]) -> Self {
        let mut text = header.join(",");
        text.push('\n');
        Self { text }
    }

    pub fn row(&mut self, fields: &[String]) {
        let _ = writeln!(self.text, "{}", fields.join(","));
    }

    pub fn finish(self) -> String {
        self.text
    }
}
