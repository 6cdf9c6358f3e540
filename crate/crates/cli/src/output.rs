//! Record serialization: JSON with floats fixed to 17 significant digits, CSV
//! with a header row and LF endings, and the output destination rules.

use std::collections::BTreeMap;
use std::io::{self, Write};
use std::path::{Path, PathBuf};

use serde::Serialize;
use serde_json::ser::{Formatter, PrettyFormatter};
use serde_json::{Map, Value};

use crate::config::Format;
use crate::error::CliResult;

/// Default output directory when no explicit path is given.
pub const OUTPUT_DIR_ENV: &str = "KOLMO_OUTPUT_DIR";

/// Fields every record carries; missing data is an explicit `null`.
#[derive(Debug, Clone, Serialize)]
pub struct Record {
    pub command: String,
    pub model: Value,
    pub payoff: Value,
    pub t: Option<f64>,
    #[serde(rename = "T")]
    pub maturity: Option<f64>,
    pub x: Option<Vec<f64>>,
    #[serde(rename = "N")]
    pub order: Option<usize>,
    pub values: Option<Vec<f64>>,
    pub greeks: Option<BTreeMap<String, f64>>,
    pub slopes: Option<Vec<Option<f64>>>,
    pub pass: Option<bool>,
    /// Command-specific fields, merged into the top level.
    #[serde(flatten)]
    pub extra: Map<String, Value>,
}

impl Record {
    pub fn new(command: &str) -> Self {
        Self {
            command: command.into(),
            model: Value::Null,
            payoff: Value::Null,
            t: None,
            maturity: None,
            x: None,
            order: None,
            values: None,
            greeks: None,
            slopes: None,
            pass: None,
            extra: Map::new(),
        }
    }

    pub fn with(mut self, key: &str, value: Value) -> Self {
        self.extra.insert(key.into(), value);
        self
    }
}

/// Pretty JSON whose floats are always written as `d.dddddddddddddddde±x`.
struct Fixed17<'a>(PrettyFormatter<'a>);

impl Formatter for Fixed17<'_> {
    fn write_f64<W: ?Sized + Write>(&mut self, w: &mut W, value: f64) -> io::Result<()> {
        w.write_all(format_f64(value).as_bytes())
    }
    fn write_f32<W: ?Sized + Write>(&mut self, w: &mut W, value: f32) -> io::Result<()> {
        self.write_f64(w, value as f64)
    }
    fn begin_array<W: ?Sized + Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.0.begin_array(w)
    }
    fn end_array<W: ?Sized + Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.0.end_array(w)
    }
    fn begin_array_value<W: ?Sized + Write>(&mut self, w: &mut W, first: bool) -> io::Result<()> {
        self.0.begin_array_value(w, first)
    }
    fn end_array_value<W: ?Sized + Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.0.end_array_value(w)
    }
    fn begin_object<W: ?Sized + Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.0.begin_object(w)
    }
    fn end_object<W: ?Sized + Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.0.end_object(w)
    }
    fn begin_object_key<W: ?Sized + Write>(&mut self, w: &mut W, first: bool) -> io::Result<()> {
        self.0.begin_object_key(w, first)
    }
    fn begin_object_value<W: ?Sized + Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.0.begin_object_value(w)
    }
    fn end_object_value<W: ?Sized + Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.0.end_object_value(w)
    }
}

/// 17 significant digits in scientific notation; non-finite values become
/// `NaN`, `inf` or `-inf` (JSON output turns them into `null` first).
pub fn format_f64(v: f64) -> String {
    if v.is_finite() {
        format!("{v:.16e}")
    } else {
        v.to_string()
    }
}

pub fn to_json<T: Serialize>(value: &T) -> String {
    let mut buf = Vec::new();
    let mut ser = serde_json::Serializer::with_formatter(&mut buf, Fixed17(PrettyFormatter::with_indent(b"  ")));
    value.serialize(&mut ser).expect("records serialize");
    let mut s = String::from_utf8(buf).expect("utf-8");
    s.push('\n');
    s
}

/// Comma-separated table with LF endings.
pub fn to_csv(header: &[&str], rows: &[Vec<String>]) -> CliResult<String> {
    let mut w = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(Vec::new());
    let io = |e: csv::Error| io::Error::other(e.to_string());
    w.write_record(header).map_err(io)?;
    for r in rows {
        w.write_record(r).map_err(io)?;
    }
    let bytes = w.into_inner().map_err(|e| io::Error::other(e.to_string()))?;
    Ok(String::from_utf8(bytes).expect("utf-8"))
}

/// Explicit path first (relative paths land in the output directory when the
/// variable is set), then `$KOLMO_OUTPUT_DIR/<command>.<ext>`, else stdout.
pub fn destination(explicit: Option<&Path>, env_dir: Option<&Path>, command: &str, format: Format) -> Option<PathBuf> {
    match (explicit, env_dir) {
        (Some(p), Some(dir)) if p.is_relative() => Some(dir.join(p)),
        (Some(p), _) => Some(p.to_path_buf()),
        (None, Some(dir)) => Some(dir.join(format!("{command}.{}", format.extension()))),
        (None, None) => None,
    }
}

pub fn env_output_dir() -> Option<PathBuf> {
    std::env::var_os(OUTPUT_DIR_ENV).filter(|v| !v.is_empty()).map(PathBuf::from)
}

pub fn emit(dest: Option<&Path>, content: &str) -> CliResult<()> {
    match dest {
        Some(p) => {
            if let Some(parent) = p.parent().filter(|d| !d.as_os_str().is_empty()) {
                std::fs::create_dir_all(parent)?;
            }
            std::fs::write(p, content)?;
        }
        None => {
            let mut out = io::stdout().lock();
            out.write_all(content.as_bytes())?;
            out.flush()?;
        }
    }
    Ok(())
}
