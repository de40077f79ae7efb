//! Result tables and their CSV / JSON encodings.

use std::io::Write;

use serde_json::{Map, Number, Value};

use crate::error::Result;

#[derive(Debug, Clone, PartialEq)]
pub enum Cell {
    Int(i64),
    Float(f64),
    Text(String),
    Bool(bool),
}

impl Cell {
    fn csv(&self) -> String {
        match self {
            Cell::Int(v) => v.to_string(),
            Cell::Float(v) => format!("{v:.16e}"),
            Cell::Text(s) => s.clone(),
            Cell::Bool(b) => b.to_string(),
        }
    }

    fn json(&self) -> Value {
        match self {
            Cell::Int(v) => Value::from(*v),
            Cell::Float(v) => Number::from_f64(*v).map_or(Value::Null, Value::Number),
            Cell::Text(s) => Value::from(s.as_str()),
            Cell::Bool(b) => Value::from(*b),
        }
    }

    pub fn as_f64(&self) -> Option<f64> {
        match self {
            Cell::Int(v) => Some(*v as f64),
            Cell::Float(v) => Some(*v),
            _ => None,
        }
    }
}

impl From<f64> for Cell {
    fn from(v: f64) -> Self {
        Cell::Float(v)
    }
}

impl From<usize> for Cell {
    fn from(v: usize) -> Self {
        Cell::Int(v as i64)
    }
}

impl From<u64> for Cell {
    fn from(v: u64) -> Self {
        Cell::Int(v as i64)
    }
}

impl From<bool> for Cell {
    fn from(v: bool) -> Self {
        Cell::Bool(v)
    }
}

impl From<&str> for Cell {
    fn from(v: &str) -> Self {
        Cell::Text(v.to_string())
    }
}

impl From<String> for Cell {
    fn from(v: String) -> Self {
        Cell::Text(v)
    }
}

/// Rows of one experiment. Every row starts with `experiment, n, seed, m`.
#[derive(Debug, Clone, PartialEq)]
pub struct Table {
    pub experiment: String,
    pub columns: Vec<String>,
    pub rows: Vec<Vec<Cell>>,
}

const PREFIX: [&str; 4] = ["experiment", "n", "seed", "m"];

impl Table {
    pub fn new(experiment: &str, columns: &[&str]) -> Self {
        Table {
            experiment: experiment.to_string(),
            columns: PREFIX.iter().chain(columns).map(|c| c.to_string()).collect(),
            rows: Vec::new(),
        }
    }

    pub fn push(&mut self, n: usize, seed: u64, m: usize, cells: Vec<Cell>) {
        assert_eq!(cells.len() + PREFIX.len(), self.columns.len(), "row width mismatch");
        let mut row = vec![Cell::from(self.experiment.as_str()), n.into(), Cell::Text(seed.to_string()), m.into()];
        row.extend(cells);
        self.rows.push(row);
    }

    pub fn column(&self, name: &str) -> Option<usize> {
        self.columns.iter().position(|c| c == name)
    }

    /// Numeric values of `name` in rows where `filter` holds.
    pub fn values_where<F: Fn(&[Cell]) -> bool>(&self, name: &str, filter: F) -> Vec<f64> {
        let j = self.column(name).expect("unknown column");
        self.rows.iter().filter(|r| filter(r)).filter_map(|r| r[j].as_f64()).collect()
    }

    pub fn text(&self, row: &[Cell], name: &str) -> String {
        match &row[self.column(name).expect("unknown column")] {
            Cell::Text(s) => s.clone(),
            other => other.csv(),
        }
    }

    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(&self.columns)?;
        for row in &self.rows {
            w.write_record(row.iter().map(Cell::csv))?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn json_records(&self) -> Vec<Value> {
        self.rows
            .iter()
            .map(|row| {
                let obj: Map<String, Value> = self
                    .columns
                    .iter()
                    .zip(row)
                    .map(|(c, v)| (c.clone(), v.json()))
                    .collect();
                Value::Object(obj)
            })
            .collect()
    }
}
