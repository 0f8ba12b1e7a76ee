//! Result tables, written as CSV or as aligned text.

use std::io::{self, Write};

#[derive(Clone, Debug, Default, PartialEq)]
pub struct Table {
    pub headers: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

impl Table {
    pub fn new<S: Into<String>>(headers: impl IntoIterator<Item = S>) -> Self {
        Table {
            headers: headers.into_iter().map(Into::into).collect(),
            rows: Vec::new(),
        }
    }

    pub fn push(&mut self, row: Vec<String>) {
        debug_assert_eq!(row.len(), self.headers.len());
        self.rows.push(row);
    }

    pub fn write_csv<W: Write>(&self, out: W) -> csv::Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(&self.headers)?;
        for r in &self.rows {
            w.write_record(r)?;
        }
        w.flush()?;
        Ok(())
    }

    /// Space-padded columns; numeric columns are right-aligned.
    pub fn write_text<W: Write>(&self, mut out: W) -> io::Result<()> {
        let n = self.headers.len();
        let widths: Vec<usize> = (0..n)
            .map(|c| {
                self.rows
                    .iter()
                    .map(|r| r[c].len())
                    .chain([self.headers[c].len()])
                    .max()
                    .unwrap_or(0)
            })
            .collect();
        let numeric: Vec<bool> = (0..n)
            .map(|c| !self.rows.is_empty() && self.rows.iter().all(|r| r[c].parse::<f64>().is_ok()))
            .collect();
        let line = |cells: &[String], out: &mut W| -> io::Result<()> {
            let mut s = String::new();
            for (c, cell) in cells.iter().enumerate() {
                if c > 0 {
                    s.push_str("  ");
                }
                if numeric[c] {
                    s.push_str(&format!("{cell:>w$}", w = widths[c]));
                } else {
                    s.push_str(&format!("{cell:<w$}", w = widths[c]));
                }
            }
            writeln!(out, "{}", s.trim_end())
        };
        line(&self.headers, &mut out)?;
        for r in &self.rows {
            line(r, &mut out)?;
        }
        Ok(())
    }

    /// Rows as JSON objects; cells that parse as numbers become numbers.
    pub fn to_json(&self) -> serde_json::Value {
        let rows = self
            .rows
            .iter()
            .map(|r| {
                let obj: serde_json::Map<String, serde_json::Value> = self
                    .headers
                    .iter()
                    .zip(r)
                    .map(|(h, v)| {
                        let value = serde_json::from_str::<serde_json::Number>(v)
                            .map(serde_json::Value::Number)
                            .unwrap_or_else(|_| serde_json::Value::String(v.clone()));
                        (h.clone(), value)
                    })
                    .collect();
                serde_json::Value::Object(obj)
            })
            .collect();
        serde_json::Value::Array(rows)
    }

    /// Writes CSV, or JSON when the path ends in `.json`.
    pub fn save(&self, path: &std::path::Path) -> anyhow::Result<()> {
        let file = std::fs::File::create(path)?;
        if path.extension().is_some_and(|e| e == "json") {
            let mut w = io::BufWriter::new(file);
            serde_json::to_writer_pretty(&mut w, &self.to_json())?;
            w.write_all(b"\n")?;
            w.flush()?;
        } else {
            self.write_csv(file)?;
        }
        Ok(())
    }
}
