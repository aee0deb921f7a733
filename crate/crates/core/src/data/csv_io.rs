//! CSV contract: first column `timestamp`, one column per variable, empty
//! cell = missing. A sidecar mask file of the same shape holds 0/1 flags and
//! overrides emptiness.

use std::fs;
use std::path::Path;

use ndarray::Array2;

use super::corrupt::GroundTruthPair;
use crate::error::{Error, Result};
use crate::series::MultivariateSeries;

/// Raw table: timestamps, variable names and optional cells.
#[derive(Debug, Clone, PartialEq)]
pub struct Table {
    pub timestamps: Vec<f64>,
    pub names: Vec<String>,
    pub cells: Vec<Vec<Option<f64>>>,
}

impl Table {
    /// Cells as a matrix with `NaN` for empty entries.
    pub fn to_matrix(&self) -> Array2<f64> {
        Array2::from_shape_fn((self.timestamps.len(), self.names.len()), |(r, c)| {
            self.cells[r][c].unwrap_or(f64::NAN)
        })
    }
}

fn parse_err(path: &Path, line: u64, msg: impl Into<String>) -> Error {
    Error::Parse {
        path: path.to_owned(),
        line: line as usize,
        msg: msg.into(),
    }
}

/// Reads a table following the CSV contract.
pub fn read_table(path: impl AsRef<Path>) -> Result<Table> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut reader = csv::ReaderBuilder::new()
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(text.as_bytes());
    let headers = reader
        .headers()
        .map_err(|e| parse_err(path, 1, e.to_string()))?
        .clone();
    if headers.len() < 2 {
        return Err(parse_err(
            path,
            1,
            "need a timestamp column and at least one variable",
        ));
    }
    if !headers[0].eq_ignore_ascii_case("timestamp") {
        return Err(parse_err(path, 1, "first column must be `timestamp`"));
    }
    let names: Vec<String> = headers.iter().skip(1).map(str::to_owned).collect();
    let width = headers.len();

    let mut timestamps = Vec::new();
    let mut cells = Vec::new();
    for record in reader.records() {
        let record = record.map_err(|e| {
            let line = e.position().map_or(0, |p| p.line());
            parse_err(path, line, e.to_string())
        })?;
        let line = record.position().map_or(0, |p| p.line());
        if record.len() != width {
            return Err(parse_err(
                path,
                line,
                format!("expected {width} fields, found {}", record.len()),
            ));
        }
        let t: f64 = record[0]
            .parse()
            .map_err(|_| parse_err(path, line, format!("bad timestamp `{}`", &record[0])))?;
        let row = record
            .iter()
            .skip(1)
            .map(|field| {
                if field.is_empty() {
                    Ok(None)
                } else {
                    field
                        .parse::<f64>()
                        .map(Some)
                        .map_err(|_| parse_err(path, line, format!("bad number `{field}`")))
                }
            })
            .collect::<Result<Vec<_>>>()?;
        timestamps.push(t);
        cells.push(row);
    }
    if timestamps.is_empty() {
        return Err(parse_err(path, 2, "no data rows"));
    }
    for (i, w) in timestamps.windows(2).enumerate() {
        if w[1] <= w[0] {
            // header is line 1, first data row line 2
            return Err(parse_err(path, i as u64 + 3, "non-increasing timestamps"));
        }
    }
    Ok(Table {
        timestamps,
        names,
        cells,
    })
}

/// Loads a series; empty cells are missing.
pub fn load_csv(path: impl AsRef<Path>) -> Result<MultivariateSeries> {
    let table = read_table(path)?;
    let mask = Array2::from_shape_fn((table.timestamps.len(), table.names.len()), |(r, c)| {
        u8::from(table.cells[r][c].is_some())
    });
    let values = table.to_matrix();
    MultivariateSeries::new(table.timestamps, values, mask, table.names)
}

/// Loads a series whose mask comes from a sidecar file.
pub fn load_csv_with_mask(
    path: impl AsRef<Path>,
    mask_path: impl AsRef<Path>,
) -> Result<MultivariateSeries> {
    let path = path.as_ref();
    let mask_path = mask_path.as_ref();
    let table = read_table(path)?;
    let mask = read_mask(mask_path)?;
    if mask.dim() != (table.timestamps.len(), table.names.len()) {
        return Err(Error::DimensionMismatch(format!(
            "mask {} is {:?}, data {} is ({}, {})",
            mask_path.display(),
            mask.dim(),
            path.display(),
            table.timestamps.len(),
            table.names.len()
        )));
    }
    for ((r, c), &b) in mask.indexed_iter() {
        if b == 1 && table.cells[r][c].is_none() {
            return Err(parse_err(
                mask_path,
                r as u64 + 2,
                format!("cell ({r}, {c}) marked observed but empty in data"),
            ));
        }
    }
    let values = table.to_matrix();
    MultivariateSeries::new(table.timestamps, values, mask, table.names)
}

/// Reads a 0/1 matrix in table layout.
pub fn read_mask(path: impl AsRef<Path>) -> Result<Array2<u8>> {
    let path = path.as_ref();
    let table = read_table(path)?;
    let mut out = Array2::zeros((table.timestamps.len(), table.names.len()));
    for (r, row) in table.cells.iter().enumerate() {
        for (c, cell) in row.iter().enumerate() {
            out[[r, c]] = match cell {
                Some(v) if *v == 0.0 => 0,
                Some(v) if *v == 1.0 => 1,
                other => {
                    return Err(parse_err(
                        path,
                        r as u64 + 2,
                        format!("mask entry {other:?} is not 0 or 1"),
                    ))
                }
            };
        }
    }
    Ok(out)
}

/// Writes a matrix in table layout; non-finite cells become empty.
pub fn write_matrix(
    path: impl AsRef<Path>,
    timestamps: &[f64],
    names: &[String],
    values: &Array2<f64>,
) -> Result<()> {
    let path = path.as_ref();
    let mut w = csv::Writer::from_writer(Vec::new());
    let io = |e: csv::Error| Error::Malformed {
        path: path.to_owned(),
        msg: e.to_string(),
    };
    let mut header = vec!["timestamp".to_string()];
    header.extend(names.iter().cloned());
    w.write_record(&header).map_err(io)?;
    for (r, t) in timestamps.iter().enumerate() {
        let mut row = vec![t.to_string()];
        row.extend(values.row(r).iter().map(|v| {
            if v.is_finite() {
                v.to_string()
            } else {
                String::new()
            }
        }));
        w.write_record(&row).map_err(io)?;
    }
    let bytes = w.into_inner().map_err(|e| Error::Malformed {
        path: path.to_owned(),
        msg: e.to_string(),
    })?;
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

/// Writes a series; missing cells are empty.
pub fn write_csv(path: impl AsRef<Path>, series: &MultivariateSeries) -> Result<()> {
    write_matrix(
        path,
        series.timestamps(),
        series.variable_names(),
        series.values(),
    )
}

pub fn write_mask(
    path: impl AsRef<Path>,
    timestamps: &[f64],
    names: &[String],
    mask: &Array2<u8>,
) -> Result<()> {
    write_matrix(path, timestamps, names, &mask.mapv(f64::from))
}

pub const CORRUPTED_FILE: &str = "corrupted.csv";
pub const TRUTH_FILE: &str = "truth.csv";
pub const EVAL_MASK_FILE: &str = "eval_mask.csv";

/// Writes `corrupted.csv`, `truth.csv` and `eval_mask.csv` into `dir`,
/// creating it if needed.
pub fn save_pair(pair: &GroundTruthPair, dir: impl AsRef<Path>) -> Result<()> {
    let dir = dir.as_ref();
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let s = &pair.corrupted;
    write_csv(dir.join(CORRUPTED_FILE), s)?;
    write_matrix(
        dir.join(TRUTH_FILE),
        s.timestamps(),
        s.variable_names(),
        &pair.truth,
    )?;
    write_mask(
        dir.join(EVAL_MASK_FILE),
        s.timestamps(),
        s.variable_names(),
        &pair.eval_mask,
    )
}

pub fn load_pair(dir: impl AsRef<Path>) -> Result<GroundTruthPair> {
    let dir = dir.as_ref();
    let corrupted = load_csv(dir.join(CORRUPTED_FILE))?;
    let truth_path = dir.join(TRUTH_FILE);
    let truth = read_table(&truth_path)?;
    let eval_mask = read_mask(dir.join(EVAL_MASK_FILE))?;
    let dim = corrupted.values().dim();
    if truth.to_matrix().dim() != dim || eval_mask.dim() != dim {
        return Err(Error::DimensionMismatch(format!(
            "pair files in {} disagree in shape",
            dir.display()
        )));
    }
    if truth.timestamps != corrupted.timestamps() {
        return Err(Error::Malformed {
            path: truth_path,
            msg: "timestamps differ from corrupted.csv".into(),
        });
    }
    for ((r, c), &e) in eval_mask.indexed_iter() {
        if e == 1 && (corrupted.is_observed(r, c) || truth.cells[r][c].is_none()) {
            return Err(Error::InvalidArgument(format!(
                "eval cell ({r}, {c}) must be hidden in corrupted.csv and present in truth.csv"
            )));
        }
    }
    Ok(GroundTruthPair {
        corrupted,
        truth: truth.to_matrix(),
        eval_mask,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn write(dir: &tempfile::TempDir, name: &str, text: &str) -> std::path::PathBuf {
        let p = dir.path().join(name);
        fs::write(&p, text).unwrap();
        p
    }

    #[test]
    fn empty_cell_is_missing() {
        let dir = tempfile::tempdir().unwrap();
        let p = write(&dir, "a.csv", "timestamp,a,b\n0,1,2\n1,,4\n2,5,6\n");
        let s = load_csv(&p).unwrap();
        assert_eq!(s.values().dim(), (3, 2));
        assert_eq!(s.mask().iter().filter(|&&b| b == 0).count(), 1);
        assert!(!s.is_observed(1, 0));
        assert_eq!(s.variable_names(), &["a", "b"]);
    }

    #[test]
    fn sidecar_mask_overrides() {
        let dir = tempfile::tempdir().unwrap();
        let p = write(&dir, "a.csv", "timestamp,a\n0,1\n1,2\n");
        let m = write(&dir, "m.csv", "timestamp,a\n0,1\n1,0\n");
        let s = load_csv_with_mask(&p, &m).unwrap();
        assert!(s.is_observed(0, 0));
        assert!(!s.is_observed(1, 0));

        let bad = write(&dir, "bad.csv", "timestamp,a\n0,1\n1,2\n");
        let gap = write(&dir, "gap.csv", "timestamp,a\n0,\n1,2\n");
        assert!(load_csv_with_mask(&gap, &bad).is_err());
    }

    #[test]
    fn ragged_row_reports_line() {
        let dir = tempfile::tempdir().unwrap();
        let p = write(&dir, "a.csv", "timestamp,a,b\n0,1,2\n1,3\n");
        match load_csv(&p).unwrap_err() {
            Error::Parse { line, .. } => assert_eq!(line, 3),
            e => panic!("unexpected {e}"),
        }
    }

    #[test]
    fn bad_number_and_order() {
        let dir = tempfile::tempdir().unwrap();
        let p = write(&dir, "a.csv", "timestamp,a\n0,x\n");
        assert!(matches!(load_csv(&p), Err(Error::Parse { .. })));
        let p = write(&dir, "b.csv", "timestamp,a\n0,1\n0,2\n");
        assert!(load_csv(&p)
            .unwrap_err()
            .to_string()
            .contains("non-increasing"));
    }

    #[test]
    fn write_then_load() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("s.csv");
        let s = MultivariateSeries::new(
            vec![0.5, 1.25],
            ndarray::array![[0.1, 1.0 / 3.0], [-2.0, 5.0]],
            ndarray::array![[1u8, 0], [1, 1]],
            vec!["u".into(), "v".into()],
        )
        .unwrap();
        write_csv(&p, &s).unwrap();
        assert_eq!(load_csv(&p).unwrap(), s);
    }

    #[test]
    fn pair_round_trip() {
        let s = crate::data::lorenz96(&crate::data::Lorenz96Config {
            n: 30,
            ..Default::default()
        })
        .unwrap();
        let pair = crate::data::inject_random(&s, 0.3, 2).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let d = dir.path().join("pair");
        save_pair(&pair, &d).unwrap();
        let back = load_pair(&d).unwrap();
        assert_eq!(back.corrupted, pair.corrupted);
        assert_eq!(back.truth, pair.truth);
        assert_eq!(back.eval_mask, pair.eval_mask);
    }
}
