//! Plot-ready delimited tables.

use crate::cli::RunConfig;
use crate::error::{Error, Result};

/// Small in-memory table rendered with the csv writer.
#[derive(Debug, Clone, PartialEq)]
pub struct CsvTable {
    pub header: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

impl CsvTable {
    pub fn new(header: &[&str]) -> Self {
        Self { header: header.iter().map(|h| h.to_string()).collect(), rows: Vec::new() }
    }

    pub fn push(&mut self, row: Vec<String>) {
        debug_assert_eq!(row.len(), self.header.len());
        self.rows.push(row);
    }

    /// Renders the table after `#`-prefixed comment lines.
    pub fn render(&self, comments: &[String]) -> Result<String> {
        let mut out = String::new();
        for c in comments {
            out.push_str("# ");
            out.push_str(c);
            out.push('\n');
        }
        let mut writer = csv::Writer::from_writer(Vec::new());
        writer.write_record(&self.header).map_err(|e| Error::Io(e.to_string()))?;
        for row in &self.rows {
            writer.write_record(row).map_err(|e| Error::Io(e.to_string()))?;
        }
        let bytes = writer.into_inner().map_err(|e| Error::Io(e.to_string()))?;
        out.push_str(&String::from_utf8(bytes).expect("csv output is utf-8"));
        Ok(out)
    }
}

/// Comment lines naming the command and embedding the effective config.
pub fn config_header(command: &str, config: &RunConfig) -> Vec<String> {
    vec![
        format!("localrd {command}"),
        format!("seed: {}", config.seed),
        format!("config: {}", serde_json::to_string(config).expect("config serializes")),
    ]
}

/// Shortest round-trip representation.
pub fn num(v: f64) -> String {
    format!("{v}")
}

pub fn opt_num(v: Option<f64>) -> String {
    v.map(num).unwrap_or_default()
}
