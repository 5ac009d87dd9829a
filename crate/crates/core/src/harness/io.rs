use std::fs::File;
use std::io::{Read, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::linalg::DenseMatrix;

use super::SimReport;

fn reader<R: Read>(r: R) -> csv::Reader<R> {
    csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(r)
}

fn csv_error(e: csv::Error) -> Error {
    let row = e.position().map(|p| p.line() as usize).unwrap_or(0);
    match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::Io(io),
        kind => Error::Parse {
            row,
            col: 0,
            reason: format!("{kind:?}"),
        },
    }
}

/// Reads a dense comma-separated matrix. A first row containing any
/// non-numeric cell is taken as a header and skipped. Row and column numbers
/// in errors are 1-based file positions.
pub fn load_matrix(path: impl AsRef<Path>) -> Result<DenseMatrix> {
    parse_matrix(File::open(path)?)
}

pub(crate) fn parse_matrix<R: Read>(input: R) -> Result<DenseMatrix> {
    let mut entries = Vec::new();
    let mut cols = None;
    let mut rows = 0;
    for (i, record) in reader(input).into_records().enumerate() {
        let record = record.map_err(csv_error)?;
        let line = i + 1;
        let parsed: Vec<std::result::Result<f64, _>> = record.iter().map(str::parse::<f64>).collect();
        if i == 0 && parsed.iter().any(|v| v.is_err()) {
            cols = Some(record.len());
            continue;
        }
        match cols {
            Some(c) if c != record.len() => {
                return Err(Error::Parse {
                    row: line,
                    col: record.len().min(c) + 1,
                    reason: format!("expected {c} fields, found {}", record.len()),
                })
            }
            _ => cols = Some(record.len()),
        }
        for (j, v) in parsed.into_iter().enumerate() {
            entries.push(v.map_err(|_| Error::Parse {
                row: line,
                col: j + 1,
                reason: format!("`{}` is not a number", &record[j]),
            })?);
        }
        rows += 1;
    }
    if rows == 0 {
        return Err(Error::Parse {
            row: 1,
            col: 1,
            reason: "no numeric rows".into(),
        });
    }
    DenseMatrix::from_row_major(rows, cols.unwrap_or(0), entries)
}

/// Writes a matrix as headerless CSV using shortest round-trip formatting.
pub fn save_matrix(m: &DenseMatrix, path: impl AsRef<Path>) -> Result<()> {
    let mut out = std::io::BufWriter::new(File::create(path)?);
    write_matrix(m, &mut out)?;
    out.flush()?;
    Ok(())
}

pub(crate) fn write_matrix<W: Write>(m: &DenseMatrix, out: &mut W) -> Result<()> {
    for i in 0..m.rows() {
        let line: Vec<String> = (0..m.cols()).map(|j| m.get(i, j).to_string()).collect();
        writeln!(out, "{}", line.join(","))?;
    }
    Ok(())
}

/// Reads one label per line (first column), skipping a `label`/`labels` header.
pub fn load_labels(path: impl AsRef<Path>) -> Result<Vec<String>> {
    let mut labels = Vec::new();
    for (i, record) in reader(File::open(path)?).into_records().enumerate() {
        let record = record.map_err(csv_error)?;
        let Some(first) = record.get(0) else { continue };
        if i == 0 && matches!(first.to_ascii_lowercase().as_str(), "label" | "labels") {
            continue;
        }
        if first.is_empty() {
            return Err(Error::Parse {
                row: i + 1,
                col: 1,
                reason: "empty label".into(),
            });
        }
        labels.push(first.to_string());
    }
    Ok(labels)
}

/// Report rows as CSV with columns `estimator,mean,std,trials,flagged`.
pub fn write_report<W: Write>(report: &SimReport, out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["estimator", "mean", "std", "trials", "flagged"])
        .map_err(csv_error)?;
    for row in &report.rows {
        w.write_record([
            row.estimator.as_str().to_string(),
            row.mean.to_string(),
            row.std.to_string(),
            row.trials.to_string(),
            row.flagged.to_string(),
        ])
        .map_err(csv_error)?;
    }
    w.flush()?;
    Ok(())
}

pub fn save_report(report: &SimReport, path: impl AsRef<Path>) -> Result<()> {
    write_report(report, File::create(path)?)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identity_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.csv");
        let m = DenseMatrix::identity(2);
        save_matrix(&m, &path).unwrap();
        assert_eq!(load_matrix(&path).unwrap(), m);
    }

    #[test]
    fn awkward_values_round_trip_bitwise() {
        let vals = vec![
            0.1,
            -1e-300,
            1.0 / 3.0,
            6.02214076e23,
            -0.0,
            f64::MIN_POSITIVE,
            2.5e-310,
            f64::MAX,
        ];
        let m = DenseMatrix::from_row_major(2, 4, vals).unwrap();
        let mut buf = Vec::new();
        write_matrix(&m, &mut buf).unwrap();
        let back = parse_matrix(buf.as_slice()).unwrap();
        let bits = |m: &DenseMatrix| m.to_row_major().iter().map(|v| v.to_bits()).collect::<Vec<_>>();
        assert_eq!(bits(&back), bits(&m));
    }

    #[test]
    fn ragged_rows_report_location() {
        let err = parse_matrix("1,2,3\n4,5\n".as_bytes()).unwrap_err();
        assert!(matches!(err, Error::Parse { row: 2, .. }), "{err:?}");
    }

    #[test]
    fn bad_cell_reports_column() {
        let err = parse_matrix("1,2\n3,x\n".as_bytes()).unwrap_err();
        assert!(matches!(err, Error::Parse { row: 2, col: 2, .. }), "{err:?}");
    }

    #[test]
    fn header_is_detected() {
        let m = parse_matrix("g1,g2,g3\n1,2,3\n4,5,6\n".as_bytes()).unwrap();
        assert_eq!((m.rows(), m.cols()), (2, 3));
        assert_eq!(m.get(1, 2), 6.0);
        assert!(parse_matrix("g1,g2\n".as_bytes()).is_err());
    }

    #[test]
    fn labels_skip_header() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("l.csv");
        std::fs::write(&path, "label\nT\nB\nT\n").unwrap();
        assert_eq!(load_labels(&path).unwrap(), vec!["T", "B", "T"]);
    }
}
