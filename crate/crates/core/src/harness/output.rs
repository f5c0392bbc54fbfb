use std::fs;
use std::io::Write;
use std::path::Path;

use serde::Serialize;

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, clap::ValueEnum)]
pub enum Format {
    #[default]
    Csv,
    Json,
}

impl Format {
    pub fn extension(self) -> &'static str {
        match self {
            Format::Csv => "csv",
            Format::Json => "json",
        }
    }
}

fn render<T: Serialize>(rows: &[T], format: Format) -> Result<Vec<u8>> {
    match format {
        Format::Csv => {
            let mut w = csv::Writer::from_writer(Vec::new());
            for row in rows {
                w.serialize(row).map_err(|e| Error::Config(e.to_string()))?;
            }
            w.into_inner().map_err(|e| Error::Config(e.to_string()))
        }
        Format::Json => {
            let mut text =
                serde_json::to_vec_pretty(rows).map_err(|e| Error::Config(e.to_string()))?;
            text.push(b'\n');
            Ok(text)
        }
    }
}

/// Writes flat rows as CSV (header from the field names) or as a JSON
/// array, to `path` or to stdout when `path` is `None`.
pub fn write_rows<T: Serialize>(rows: &[T], format: Format, path: Option<&Path>) -> Result<()> {
    let bytes = render(rows, format)?;
    match path {
        Some(p) => fs::write(p, bytes).map_err(|e| Error::io(p, e)),
        None => std::io::stdout()
            .write_all(&bytes)
            .map_err(|e| Error::io("<stdout>", e)),
    }
}
