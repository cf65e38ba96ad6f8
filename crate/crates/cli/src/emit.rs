//! CSV tables and the JSON output directory.

use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use mtlab_core::error::{io_err, Result};
use mtlab_core::report::{fmt17, to_json, Report};

#[derive(Debug, Clone, PartialEq)]
pub enum Cell {
    Int(i64),
    Float(f64),
    Text(String),
}

impl Cell {
    fn render(&self) -> String {
        match self {
            Cell::Int(i) => i.to_string(),
            Cell::Float(x) => fmt17(*x),
            Cell::Text(s) => s.clone(),
        }
    }
}

impl From<f64> for Cell {
    fn from(x: f64) -> Self {
        Cell::Float(x)
    }
}

impl From<usize> for Cell {
    fn from(x: usize) -> Self {
        Cell::Int(x as i64)
    }
}

impl From<&str> for Cell {
    fn from(s: &str) -> Self {
        Cell::Text(s.into())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Table {
    pub name: String,
    pub header: Vec<String>,
    pub rows: Vec<Vec<Cell>>,
}

impl Table {
    pub fn new(name: &str, header: &[&str]) -> Self {
        Self {
            name: name.into(),
            header: header.iter().map(|s| s.to_string()).collect(),
            rows: Vec::new(),
        }
    }

    pub fn push(&mut self, row: Vec<Cell>) {
        self.rows.push(row);
    }
}

/// RFC 4180 CSV with a header row, LF endings and 17 significant digits.
pub fn emit_csv(t: &Table, path: &Path) -> Result<()> {
    let file = std::fs::File::create(path).map_err(|e| io_err(path, e))?;
    let mut w = csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_writer(std::io::BufWriter::new(file));
    w.write_record(&t.header)?;
    for row in &t.rows {
        w.write_record(row.iter().map(Cell::render))?;
    }
    w.flush().map_err(|e| io_err(path, e))?;
    Ok(())
}

/// Writes reports.json, one CSV per table and manifest.json; returns the
/// files written.
pub fn write_outputs(
    dir: &Path,
    command: &str,
    config_text: &str,
    reports: &[Report],
    tables: &[Table],
) -> Result<Vec<PathBuf>> {
    std::fs::create_dir_all(dir).map_err(|e| io_err(dir, e))?;
    let mut files = Vec::new();
    let rp = dir.join("reports.json");
    std::fs::write(&rp, to_json(reports)).map_err(|e| io_err(&rp, e))?;
    files.push(rp);
    for t in tables {
        let p = dir.join(format!("{}.csv", t.name));
        emit_csv(t, &p)?;
        files.push(p);
    }
    let stamp = SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map(|d| d.as_secs())
        .unwrap_or(0);
    let names: Vec<String> = files
        .iter()
        .filter_map(|p| p.file_name().map(|n| n.to_string_lossy().into_owned()))
        .collect();
    let manifest = serde_json::json!({
        "tool": "mtlab",
        "version": env!("CARGO_PKG_VERSION"),
        "command": command,
        "config": config_text,
        "timestamp": stamp,
        "files": names,
        "counts": status_counts(reports),
    });
    let mp = dir.join("manifest.json");
    let mut s = serde_json::to_string_pretty(&manifest)?;
    s.push('\n');
    std::fs::write(&mp, s).map_err(|e| io_err(&mp, e))?;
    files.push(mp);
    Ok(files)
}

fn status_counts(reports: &[Report]) -> serde_json::Value {
    let mut m = serde_json::Map::new();
    for r in reports {
        let e = m
            .entry(r.status.as_str())
            .or_insert(serde_json::Value::from(0u64));
        *e = serde_json::Value::from(e.as_u64().unwrap_or(0) + 1);
    }
    serde_json::Value::Object(m)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_table_has_header_only() {
        let d = tempfile::tempdir().unwrap();
        let p = d.path().join("t.csv");
        emit_csv(&Table::new("t", &["N", "ratio1", "ratio2"]), &p).unwrap();
        assert_eq!(std::fs::read_to_string(&p).unwrap(), "N,ratio1,ratio2\n");
    }

    #[test]
    fn floats_round_trip_bit_exactly() {
        let d = tempfile::tempdir().unwrap();
        let p = d.path().join("t.csv");
        let mut t = Table::new("t", &["x", "label"]);
        let xs = [
            std::f64::consts::PI,
            1.0 / 3.0,
            6.02214076e23,
            -2.5e-300,
            0.1 + 0.2,
        ];
        for x in xs {
            t.push(vec![x.into(), "a,\"b\"".into()]);
        }
        emit_csv(&t, &p).unwrap();
        let mut r = csv::Reader::from_path(&p).unwrap();
        for (rec, x) in r.records().zip(xs) {
            let rec = rec.unwrap();
            assert_eq!(rec[0].parse::<f64>().unwrap().to_bits(), x.to_bits());
            assert_eq!(&rec[1], "a,\"b\"");
        }
    }
}
