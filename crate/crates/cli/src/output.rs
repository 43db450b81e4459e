//! Table output. CSV carries a header row and 12-significant-digit floats;
//! JSON documents embed the fully resolved configuration for auditability.

use serde_json::json;
use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::PathBuf;

/// Format with 12 significant digits in plain positional notation.
pub fn g12(x: f64) -> String {
    if x == 0.0 || !x.is_finite() {
        return format!("{x}");
    }
    let magnitude = x.abs().log10().floor() as i32;
    let decimals = (11 - magnitude).max(0) as usize;
    format!("{x:.decimals$}")
}

pub enum Sink {
    Stdout,
    File(PathBuf),
}

impl Sink {
    fn writer(&self) -> io::Result<Box<dyn Write>> {
        Ok(match self {
            Sink::Stdout => Box::new(io::stdout().lock()),
            Sink::File(path) => Box::new(BufWriter::new(File::create(path)?)),
        })
    }
}

pub struct OutputDoc {
    pub op: &'static str,
    pub config: serde_json::Value,
    pub header: &'static [&'static str],
    pub rows: Vec<Vec<String>>,
    pub json_rows: Vec<serde_json::Value>,
}

impl OutputDoc {
    pub fn write_csv(&self, sink: Sink) -> io::Result<()> {
        let mut w = sink.writer()?;
        writeln!(w, "{}", self.header.join(","))?;
        for row in &self.rows {
            writeln!(w, "{}", row.join(","))?;
        }
        w.flush()
    }

    pub fn write_json(&self, sink: Sink) -> io::Result<()> {
        let doc = json!({
            "op": self.op,
            "config": self.config,
            "rows": self.json_rows,
        });
        let mut w = sink.writer()?;
        serde_json::to_writer_pretty(&mut w, &doc)?;
        writeln!(w)?;
        w.flush()
    }
}
