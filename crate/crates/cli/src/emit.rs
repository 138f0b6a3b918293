//! Tables with a metadata block, written as JSON or CSV.

use std::io::Write;

use serde_json::{json, Map, Value};

use crate::args::Format;

pub struct Table {
    pub columns: Vec<String>,
    pub rows: Vec<Vec<Value>>,
}

impl Table {
    pub fn new(columns: &[&str]) -> Self {
        Table { columns: columns.iter().map(|c| c.to_string()).collect(), rows: Vec::new() }
    }

    pub fn push(&mut self, row: Vec<Value>) {
        debug_assert_eq!(row.len(), self.columns.len());
        self.rows.push(row);
    }
}

fn cell(v: &Value) -> String {
    match v {
        Value::Null => "NaN".into(),
        Value::String(s) => s.clone(),
        other => other.to_string(),
    }
}

/// `f64` cell; non-finite values become `null` in JSON and `NaN` in CSV.
pub fn num(x: f64) -> Value {
    serde_json::Number::from_f64(x).map(Value::Number).unwrap_or(Value::Null)
}

pub fn write(out: &mut dyn Write, format: Format, metadata: &Value, table: &Table) -> std::io::Result<()> {
    match format {
        Format::Json => {
            let rows: Vec<Value> = table
                .rows
                .iter()
                .map(|r| {
                    let mut m = Map::new();
                    for (c, v) in table.columns.iter().zip(r) {
                        m.insert(c.clone(), v.clone());
                    }
                    Value::Object(m)
                })
                .collect();
            serde_json::to_writer_pretty(&mut *out, &json!({ "metadata": metadata, "rows": rows }))?;
            writeln!(out)
        }
        Format::Csv => {
            writeln!(out, "# {}", serde_json::to_string(metadata)?)?;
            let mut w = csv::Writer::from_writer(out);
            w.write_record(&table.columns)?;
            for r in &table.rows {
                w.write_record(r.iter().map(cell))?;
            }
            w.flush()
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn csv_has_metadata_line_and_header() {
        let mut t = Table::new(&["a", "b"]);
        t.push(vec![num(1.5), num(f64::NAN)]);
        let mut buf = Vec::new();
        write(&mut buf, Format::Csv, &json!({"k": 1}), &t).unwrap();
        assert_eq!(String::from_utf8(buf).unwrap(), "# {\"k\":1}\na,b\n1.5,NaN\n");
    }

    #[test]
    fn json_rows_keep_column_order() {
        let mut t = Table::new(&["z", "a"]);
        t.push(vec![num(1.0), Value::from("x")]);
        let mut buf = Vec::new();
        write(&mut buf, Format::Json, &json!({}), &t).unwrap();
        let s = String::from_utf8(buf).unwrap();
        assert!(s.find("\"z\"").unwrap() < s.find("\"a\"").unwrap());
    }
}
