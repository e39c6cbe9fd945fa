//! Deterministic report rendering.
//!
//! Outputs must be byte-identical across runs with the same inputs, so this
//! module avoids every source of incidental nondeterminism: objects keep
//! their keys in insertion order (no hashing), floats print in a fixed
//! 17-significant-digit scientific form that round-trips `f64` exactly, and
//! collections are rendered in the order the caller built them. CSV tables
//! use a '.' decimal point, ',' separators, and a header row.

use crate::homogenize::Homogenization;
use crate::matrix::SymMat;

/// Version stamp embedded in every JSON document.
pub const SCHEMA_VERSION: u32 = 1;

/// A JSON value with deterministic rendering.
///
/// Objects are ordered key–value lists: insertion order is rendering order,
/// and duplicate keys are a caller bug (checked in debug builds).
#[derive(Debug, Clone, PartialEq)]
pub enum Json {
    Null,
    Bool(bool),
    Int(i64),
    Float(f64),
    Str(String),
    Array(Vec<Json>),
    Object(Vec<(String, Json)>),
}

impl Json {
    /// An empty object, to be filled with [`Json::push`].
    pub fn obj() -> Json {
        Json::Object(Vec::new())
    }

    /// Append a key–value pair to an object. Panics on non-objects.
    pub fn push(&mut self, key: &str, value: Json) -> &mut Json {
        match self {
            Json::Object(pairs) => {
                debug_assert!(
                    pairs.iter().all(|(k, _)| k != key),
                    "duplicate key {key:?} in report object"
                );
                pairs.push((key.to_string(), value));
            }
            _ => panic!("push requires an object"),
        }
        self
    }

    pub fn str(s: &str) -> Json {
        Json::Str(s.to_string())
    }

    /// Array of floats, in slice order.
    pub fn floats(values: &[f64]) -> Json {
        Json::Array(values.iter().map(|&v| Json::Float(v)).collect())
    }

    /// Render to a single line (no trailing newline).
    pub fn render(&self) -> String {
        let mut out = String::new();
        self.write(&mut out);
        out
    }

    fn write(&self, out: &mut String) {
        match self {
            Json::Null => out.push_str("null"),
            Json::Bool(b) => out.push_str(if *b { "true" } else { "false" }),
            Json::Int(i) => out.push_str(&i.to_string()),
            Json::Float(v) => out.push_str(&format_float(*v)),
            Json::Str(s) => {
                out.push('"');
                escape_into(s, out);
                out.push('"');
            }
            Json::Array(items) => {
                out.push('[');
                for (i, item) in items.iter().enumerate() {
                    if i > 0 {
                        out.push(',');
                    }
                    item.write(out);
                }
                out.push(']');
            }
            Json::Object(pairs) => {
                out.push('{');
                for (i, (k, v)) in pairs.iter().enumerate() {
                    if i > 0 {
                        out.push(',');
                    }
                    out.push('"');
                    escape_into(k, out);
                    out.push_str("\":");
                    v.write(out);
                }
                out.push('}');
            }
        }
    }
}

/// Fixed-width scientific form with 17 significant digits.
///
/// 17 digits are the round-trip guarantee for `f64`: parsing the string back
/// recovers the exact bit pattern. Non-finite values are a bug in the caller
/// — reports never contain them — and panic rather than emit invalid JSON.
pub fn format_float(v: f64) -> String {
    assert!(v.is_finite(), "reports never contain non-finite numbers, got {v}");
    format!("{v:.16e}")
}

fn escape_into(s: &str, out: &mut String) {
    for c in s.chars() {
        match c {
            '"' => out.push_str("\\\""),
            '\\' => out.push_str("\\\\"),
            '\n' => out.push_str("\\n"),
            '\r' => out.push_str("\\r"),
            '\t' => out.push_str("\\t"),
            c if (c as u32) < 0x20 => {
                out.push_str(&format!("\\u{:04x}", c as u32));
            }
            c => out.push(c),
        }
    }
}

/// A CSV table with a header row.
#[derive(Debug, Clone)]
pub struct Csv {
    columns: usize,
    lines: Vec<String>,
}

impl Csv {
    pub fn new(columns: &[&str]) -> Csv {
        assert!(!columns.is_empty(), "a table needs at least one column");
        let mut table = Csv { columns: columns.len(), lines: Vec::new() };
        table.lines.push(columns.iter().map(|c| quote_cell(c)).collect::<Vec<_>>().join(","));
        table
    }

    /// Append one row; the cell count must match the header.
    pub fn push_row(&mut self, cells: &[String]) {
        assert_eq!(cells.len(), self.columns, "row width must match the header");
        self.lines.push(cells.iter().map(|c| quote_cell(c)).collect::<Vec<_>>().join(","));
    }

    /// Render with '\n' line endings and a trailing newline.
    pub fn render(&self) -> String {
        let mut out = self.lines.join("\n");
        out.push('\n');
        out
    }
}

fn quote_cell(cell: &str) -> String {
    if cell.contains(',') || cell.contains('"') || cell.contains('\n') {
        format!("\"{}\"", cell.replace('"', "\"\""))
    } else {
        cell.to_string()
    }
}

/// A constant symmetric matrix as {dim, rows}, rows dense and row-major.
pub fn sym_mat_json(m: &SymMat) -> Json {
    let dim = m.dim();
    let rows: Vec<Json> = (0..dim)
        .map(|i| Json::Array((0..dim).map(|j| Json::Float(m.get(i, j))).collect()))
        .collect();
    let mut out = Json::obj();
    out.push("dim", Json::Int(dim as i64));
    out.push("rows", Json::Array(rows));
    out
}

/// The full pipeline output as one JSON object.
///
/// Obstruction entries carry 1-based axis labels (k, l, j), matching the
/// c^{kl}_j notation used in the documentation and on the command line.
pub fn homogenization_json(h: &Homogenization) -> Json {
    let mut measure = Json::obj();
    measure.push("residual", Json::Float(h.measure.residual));
    measure.push("iterations", Json::Int(h.measure.iterations as i64));
    measure.push("min", Json::Float(h.measure.r.min()));
    measure.push("max", Json::Float(h.measure.r.max()));

    let mut cells = Json::obj();
    cells.push("max_residual", Json::Float(h.cells.max_residual));
    cells.push("iterations", Json::Int(h.cells.iterations as i64));
    cells.push(
        "corrector_sup",
        Json::Array(h.cells.correctors().iter().map(|v| Json::Float(v.max_abs())).collect()),
    );

    let entries: Vec<Json> = h
        .obstruction
        .entries()
        .into_iter()
        .map(|(k, l, j, value)| {
            let mut e = Json::obj();
            e.push("k", Json::Int(k as i64 + 1));
            e.push("l", Json::Int(l as i64 + 1));
            e.push("j", Json::Int(j as i64 + 1));
            e.push("value", Json::Float(value));
            e
        })
        .collect();
    let mut obstruction = Json::obj();
    obstruction.push("entries", Json::Array(entries));
    obstruction.push("max_abs", Json::Float(h.obstruction.max_abs()));
    obstruction.push("dual_gap", Json::Float(h.obstruction.dual_gap));

    let mut verdict = Json::obj();
    verdict.push("classification", Json::str(h.verdict.classification.as_str()));
    verdict.push("max_abs_c", Json::Float(h.verdict.max_abs_c));
    verdict.push("threshold", Json::Float(h.verdict.threshold));

    let mut out = Json::obj();
    out.push("effective_matrix", sym_mat_json(h.cells.effective_matrix()));
    out.push("measure", measure);
    out.push("cells", cells);
    out.push("obstruction", obstruction);
    out.push("verdict", verdict);
    out
}
