use std::io::Write;

use cvqkd_lab::numfmt::sig12;
use serde::Serialize;

use crate::config::Format;

/// Column-ordered numeric table, the output of every sweep scenario.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Table {
    pub scenario: String,
    pub columns: Vec<String>,
    /// Non-finite values serialize as `nan` in CSV and `null` in JSON.
    pub rows: Vec<Vec<f64>>,
}

impl Table {
    pub fn new(scenario: &str, columns: &[&str]) -> Self {
        Self {
            scenario: scenario.to_string(),
            columns: columns.iter().map(|c| c.to_string()).collect(),
            rows: Vec::new(),
        }
    }

    pub fn push(&mut self, row: Vec<f64>) {
        assert_eq!(row.len(), self.columns.len(), "row width");
        self.rows.push(row);
    }

    pub fn column(&self, name: &str) -> Option<Vec<f64>> {
        let i = self.columns.iter().position(|c| c == name)?;
        Some(self.rows.iter().map(|r| r[i]).collect())
    }

    pub fn write_csv<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        writeln!(out, "{}", self.columns.join(","))?;
        for row in &self.rows {
            let cells: Vec<String> = row.iter().map(|&x| sig12(x)).collect();
            writeln!(out, "{}", cells.join(","))?;
        }
        Ok(())
    }
}

/// Writes `fields` as a one-row CSV: header of names, then values.
pub fn write_record_csv<W: Write>(fields: &[(&str, f64)], mut out: W) -> std::io::Result<()> {
    let names: Vec<&str> = fields.iter().map(|(n, _)| *n).collect();
    let values: Vec<String> = fields.iter().map(|(_, v)| sig12(*v)).collect();
    writeln!(out, "{}", names.join(","))?;
    writeln!(out, "{}", values.join(","))
}

pub fn write_json<W: Write, T: Serialize>(value: &T, mut out: W) -> std::io::Result<()> {
    serde_json::to_writer_pretty(&mut out, value)?;
    writeln!(out)
}

/// Scenario output in either format.
#[derive(Debug, Clone, PartialEq)]
pub enum Output {
    Table(Table),
    Record(crate::scenarios::McSummary),
}

impl Output {
    pub fn write<W: Write>(&self, format: Format, out: W) -> std::io::Result<()> {
        match (self, format) {
            (Output::Table(t), Format::Csv) => t.write_csv(out),
            (Output::Table(t), Format::Json) => write_json(t, out),
            (Output::Record(r), Format::Csv) => write_record_csv(&r.fields(), out),
            (Output::Record(r), Format::Json) => write_json(r, out),
        }
    }

    pub fn to_bytes(&self, format: Format) -> Vec<u8> {
        let mut buf = Vec::new();
        self.write(format, &mut buf).expect("writing to memory");
        buf
    }
}
