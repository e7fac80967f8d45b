use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde::Serialize;
use serde_json::{Map, Value};

use crate::error::{write_error, CliError};

/// Version of the JSON documents written by every verb.
pub const REPORT_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum Format {
    Json,
    Csv,
}

/// Sibling of the primary output: `run.json` → `run.<suffix>`.
pub fn sibling(primary: &Path, suffix: &str) -> PathBuf {
    let stem = primary.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    primary.with_file_name(format!("{stem}.{suffix}"))
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), CliError> {
    let json = serde_json::to_string_pretty(value).map_err(|e| write_error(path, e))?;
    std::fs::write(path, json + "\n").map_err(|e| write_error(path, e))
}

pub fn read_json<T: DeserializeOwned>(path: &Path, what: &str) -> Result<T, CliError> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::Data(format!("{}: {e}", path.display())))?;
    serde_json::from_str(&text).map_err(|e| CliError::Data(format!("{} is not a valid {what}: {e}", path.display())))
}

/// Plot table with the columns `slot_or_phase,count,error`.
pub fn xy_table<I: IntoIterator<Item = (f64, f64, f64)>>(rows: I) -> String {
    let mut s = String::from("slot_or_phase,count,error\n");
    for (x, n, e) in rows {
        writeln!(s, "{x},{n},{e}").unwrap();
    }
    s
}

pub fn write_text(path: &Path, text: &str) -> Result<(), CliError> {
    std::fs::write(path, text).map_err(|e| write_error(path, e))
}

/// Flat key/value summary printed on stdout.
#[derive(Debug, Default)]
pub struct Summary(Map<String, Value>);

impl Summary {
    pub fn put(&mut self, key: &str, value: impl Into<Value>) -> &mut Self {
        self.0.insert(key.into(), value.into());
        self
    }

    pub fn render(&self, format: Format) -> String {
        match format {
            Format::Json => serde_json::to_string_pretty(&self.0).unwrap() + "\n",
            Format::Csv => {
                let mut s = String::from("key,value\n");
                for (k, v) in &self.0 {
                    let v = match v {
                        Value::String(t) => t.clone(),
                        other => other.to_string(),
                    };
                    writeln!(s, "{k},{v}").unwrap();
                }
                s
            }
        }
    }
}
