//! Output formats and the serialized run record.

use serde::{Deserialize, Serialize};

/// Output format selector.
#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum Format {
    Text,
    Json,
    Csv,
}

/// Everything a run emits, serializable and replayable.
///
/// JSON output deliberately omits the wall time so that identical invocations
/// (including the seed) are byte-identical; the text renderer shows it.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct RunRecord {
    pub schema_version: u32,
    pub tool_version: String,
    pub command: String,
    pub request: serde_json::Value,
    pub result: serde_json::Value,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub seed: Option<u64>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub wall_time_ms: Option<f64>,
}

impl RunRecord {
    pub fn new(command: &str, request: serde_json::Value, result: serde_json::Value) -> RunRecord {
        RunRecord {
            schema_version: 1,
            tool_version: env!("CARGO_PKG_VERSION").to_string(),
            command: command.to_string(),
            request,
            result,
            seed: None,
            wall_time_ms: None,
        }
    }
}

/// A command's rendered output in every format.
pub struct CommandOutput {
    pub record: RunRecord,
    pub text: String,
    pub csv: String,
}

impl CommandOutput {
    pub fn render(mut self, format: Format, elapsed_ms: f64) -> String {
        match format {
            Format::Json => {
                self.record.wall_time_ms = None;
                serde_json::to_string_pretty(&self.record).expect("serializable record")
            }
            Format::Csv => self.csv,
            Format::Text => {
                format!("{}\n({} v{}, {:.1} ms)", self.text.trim_end(), self.record.command, self.record.tool_version, elapsed_ms)
            }
        }
    }
}

/// Left-aligned plain-text table.
pub fn table(header: &[&str], rows: &[Vec<String>]) -> String {
    let mut widths: Vec<usize> = header.iter().map(|h| h.len()).collect();
    for row in rows {
        for (i, cell) in row.iter().enumerate() {
            widths[i] = widths[i].max(cell.len());
        }
    }
    let mut out = String::new();
    let fmt_row = |cells: Vec<String>, widths: &[usize]| -> String {
        let mut line = String::new();
        for (i, cell) in cells.iter().enumerate() {
            if i > 0 {
                line.push_str("  ");
            }
            line.push_str(&format!("{:<width$}", cell, width = widths[i]));
        }
        line.trim_end().to_string()
    };
    out.push_str(&fmt_row(header.iter().map(|s| s.to_string()).collect(), &widths));
    out.push('\n');
    for row in rows {
        out.push_str(&fmt_row(row.clone(), &widths));
        out.push('\n');
    }
    out
}
