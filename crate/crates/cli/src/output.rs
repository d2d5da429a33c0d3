use std::fmt::Write as _;

use serde_json::{Map, Value};

use crate::args::Format;

/// A command's result: header fields, one main table, and the JSON body.
pub struct Report {
    pub header: Vec<(&'static str, String)>,
    pub columns: Vec<&'static str>,
    pub rows: Vec<Vec<String>>,
    /// Lines printed under the table in `table` format.
    pub footer: Vec<String>,
    pub json: Value,
}

impl Report {
    pub fn new(command: &'static str, json: Value) -> Self {
        Self {
            header: vec![("command", command.to_string())],
            columns: Vec::new(),
            rows: Vec::new(),
            footer: Vec::new(),
            json,
        }
    }

    pub fn field(mut self, key: &'static str, value: impl ToString) -> Self {
        self.header.push((key, value.to_string()));
        self
    }

    pub fn render(&self, format: Format) -> Result<String, String> {
        match format {
            Format::Json => self.render_json(),
            Format::Csv => self.render_csv(),
            Format::Table => Ok(self.render_table()),
        }
    }

    fn render_json(&self) -> Result<String, String> {
        let mut obj = Map::new();
        obj.insert("command".into(), Value::String(self.header[0].1.clone()));
        match &self.json {
            Value::Object(body) => obj.extend(body.clone()),
            other => {
                obj.insert("result".into(), other.clone());
            }
        }
        let mut s = serde_json::to_string_pretty(&Value::Object(obj)).map_err(|e| e.to_string())?;
        s.push('\n');
        Ok(s)
    }

    fn render_csv(&self) -> Result<String, String> {
        let mut out = String::new();
        for (k, v) in &self.header {
            writeln!(out, "# {k}={v}").unwrap();
        }
        let mut w = csv::WriterBuilder::new()
            .terminator(csv::Terminator::Any(b'\n'))
            .from_writer(Vec::new());
        w.write_record(&self.columns).map_err(|e| e.to_string())?;
        for r in &self.rows {
            w.write_record(r).map_err(|e| e.to_string())?;
        }
        let bytes = w.into_inner().map_err(|e| e.to_string())?;
        out.push_str(&String::from_utf8(bytes).map_err(|e| e.to_string())?);
        Ok(out)
    }

    fn render_table(&self) -> String {
        let mut out = String::new();
        for (k, v) in &self.header {
            writeln!(out, "{k}: {v}").unwrap();
        }
        out.push('\n');
        let mut widths: Vec<usize> = self.columns.iter().map(|c| c.len()).collect();
        for r in &self.rows {
            for (w, cell) in widths.iter_mut().zip(r) {
                *w = (*w).max(cell.len());
            }
        }
        let line = |cells: &mut dyn Iterator<Item = &str>, out: &mut String| {
            let parts: Vec<String> = cells
                .zip(&widths)
                .map(|(c, &w)| format!("{c:>w$}"))
                .collect();
            writeln!(out, "{}", parts.join("  ").trim_end()).unwrap();
        };
        line(&mut self.columns.iter().copied(), &mut out);
        for r in &self.rows {
            line(&mut r.iter().map(String::as_str), &mut out);
        }
        if !self.footer.is_empty() {
            out.push('\n');
            for f in &self.footer {
                writeln!(out, "{f}").unwrap();
            }
        }
        out
    }
}

/// Shortest representation that reads back to the same `f64`.
pub fn num(x: f64) -> String {
    if x != 0.0 && (x.abs() < 1e-4 || x.abs() >= 1e15) {
        format!("{x:e}")
    } else {
        format!("{x}")
    }
}

pub fn opt<T: ToString>(x: Option<T>) -> String {
    x.map(|v| v.to_string()).unwrap_or_default()
}
