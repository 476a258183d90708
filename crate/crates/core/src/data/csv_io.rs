use std::path::Path;

use serde::{Deserialize, Serialize};

use super::TimeSeries;
use crate::error::{Error, Result};

/// Names of the input and output columns in a dataset CSV.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CsvSchema {
    pub input: String,
    pub output: String,
}

impl Default for CsvSchema {
    fn default() -> Self {
        CsvSchema { input: "u".into(), output: "y".into() }
    }
}

/// Reads a headed CSV into a series. Row indices in errors are 1-based data rows.
pub fn load_csv(path: &Path, schema: &CsvSchema, sample_time: f64) -> Result<TimeSeries> {
    let csv_err = |row: usize, message: String| Error::Csv { path: path.to_path_buf(), row, message };
    if !path.exists() {
        return Err(Error::io(path, std::io::Error::new(std::io::ErrorKind::NotFound, "file not found")));
    }
    let mut reader = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| csv_err(0, e.to_string()))?;
    let headers = reader.headers().map_err(|e| csv_err(0, e.to_string()))?.clone();
    let col = |name: &str| {
        headers
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| csv_err(0, format!("missing column '{name}'")))
    };
    let ui = col(&schema.input)?;
    let yi = col(&schema.output)?;

    let mut u = Vec::new();
    let mut y = Vec::new();
    for (k, rec) in reader.records().enumerate() {
        let row = k + 1;
        let rec = rec.map_err(|e| csv_err(row, e.to_string()))?;
        let parse = |idx: usize, name: &str| -> Result<f64> {
            let cell = rec.get(idx).ok_or_else(|| csv_err(row, format!("missing cell for '{name}'")))?;
            let v: f64 = cell
                .parse()
                .map_err(|_| csv_err(row, format!("non-numeric value '{cell}' in column '{name}'")))?;
            if !v.is_finite() {
                return Err(csv_err(row, format!("non-finite value in column '{name}'")));
            }
            Ok(v)
        };
        u.push(parse(ui, &schema.input)?);
        y.push(parse(yi, &schema.output)?);
    }
    if u.is_empty() {
        return Err(Error::EmptySeries);
    }
    let name = path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    TimeSeries::new(name, u, y, sample_time)
}

/// Writes a series as a two-column CSV using the schema's column names.
pub fn write_csv(path: &Path, schema: &CsvSchema, ts: &TimeSeries) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| Error::Csv {
        path: path.to_path_buf(),
        row: 0,
        message: e.to_string(),
    })?;
    let wrap = |e: csv::Error| Error::Csv { path: path.to_path_buf(), row: 0, message: e.to_string() };
    w.write_record([&schema.input, &schema.output]).map_err(wrap)?;
    for (a, b) in ts.u.iter().zip(&ts.y) {
        w.write_record([a.to_string(), b.to_string()]).map_err(wrap)?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Write;

    fn write(dir: &Path, name: &str, body: &str) -> std::path::PathBuf {
        let p = dir.join(name);
        std::fs::File::create(&p).unwrap().write_all(body.as_bytes()).unwrap();
        p
    }

    #[test]
    fn three_rows() {
        let dir = tempfile::tempdir().unwrap();
        let p = write(dir.path(), "a.csv", "t,u,y\n0,1,0\n1,2,1\n2,3,0\n");
        let ts = load_csv(&p, &CsvSchema::default(), 0.01).unwrap();
        assert_eq!(ts.u, vec![1.0, 2.0, 3.0]);
        assert_eq!(ts.y, vec![0.0, 1.0, 0.0]);
        assert_eq!(ts.sample_time, 0.01);
    }

    #[test]
    fn header_only_is_empty() {
        let dir = tempfile::tempdir().unwrap();
        let p = write(dir.path(), "h.csv", "u,y\n");
        assert!(matches!(load_csv(&p, &CsvSchema::default(), 0.01), Err(Error::EmptySeries)));
    }

    #[test]
    fn reports_row_of_bad_cell() {
        let dir = tempfile::tempdir().unwrap();
        let p = write(dir.path(), "b.csv", "u,y\n1,2\n3,abc\n");
        match load_csv(&p, &CsvSchema::default(), 0.01) {
            Err(Error::Csv { row, message, .. }) => {
                assert_eq!(row, 2);
                assert!(message.contains("abc"));
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn missing_column_and_file() {
        let dir = tempfile::tempdir().unwrap();
        let p = write(dir.path(), "c.csv", "u,z\n1,2\n");
        assert!(matches!(load_csv(&p, &CsvSchema::default(), 0.01), Err(Error::Csv { .. })));
        assert!(matches!(
            load_csv(&dir.path().join("nope.csv"), &CsvSchema::default(), 0.01),
            Err(Error::Io { .. })
        ));
    }

    #[test]
    fn write_then_read() {
        let dir = tempfile::tempdir().unwrap();
        let ts = TimeSeries::new("w", vec![0.1, -2.5e-7, 3.0], vec![1.0 / 3.0, 2.0, -0.0], 0.5).unwrap();
        let p = dir.path().join("w.csv");
        write_csv(&p, &CsvSchema::default(), &ts).unwrap();
        let back = load_csv(&p, &CsvSchema::default(), 0.5).unwrap();
        assert_eq!(back.u, ts.u);
        assert_eq!(back.y, ts.y);
    }
}
