//! CSV datasets and seeded train/val/test splits.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::probdist::RngStream;
use crate::tensor::DenseTensor;

#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    pub rows: DenseTensor,
    /// File path or generator manifest id.
    pub source: String,
}

impl Dataset {
    pub fn new(rows: DenseTensor, source: impl Into<String>) -> Result<Self> {
        if rows.rank() != 2 {
            return Err(Error::Dataset(format!("expected a matrix, got shape {:?}", rows.shape())));
        }
        Ok(Self {
            rows,
            source: source.into(),
        })
    }

    pub fn len(&self) -> usize {
        self.rows.rows()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn dim(&self) -> usize {
        self.rows.cols()
    }

    pub fn subset(&self, ids: &[usize]) -> DenseTensor {
        self.rows.gather_rows(ids)
    }
}

/// Writes a header `x0,...,x{d-1}` and one row per datapoint. `f64`
/// `Display` is the shortest string that parses back to the same bits.
pub fn save_dataset(data: &Dataset, path: &Path) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record((0..data.dim()).map(|j| format!("x{j}")))?;
    for r in 0..data.len() {
        w.write_record(data.rows.row(r).iter().map(f64::to_string))?;
    }
    w.flush()?;
    Ok(())
}

pub fn load_dataset(path: &Path) -> Result<Dataset> {
    let mut reader = csv::ReaderBuilder::new().flexible(true).from_path(path)?;
    let header = reader.headers()?.clone();
    let d = header.len();
    for (j, name) in header.iter().enumerate() {
        if name.trim() != format!("x{j}") {
            return Err(Error::DatasetCell {
                row: 0,
                column: j,
                message: format!("header `{name}`, expected `x{j}`"),
            });
        }
    }
    let mut data = Vec::new();
    let mut n = 0usize;
    for (i, record) in reader.records().enumerate() {
        let record = record?;
        // Row numbers are 1-based data lines, after the header.
        let row = i + 1;
        if record.len() != d {
            return Err(Error::DatasetCell {
                row,
                column: record.len().min(d),
                message: format!("{} cells, expected {d}", record.len()),
            });
        }
        for (j, cell) in record.iter().enumerate() {
            let v: f64 = cell.trim().parse().map_err(|_| Error::DatasetCell {
                row,
                column: j,
                message: format!("non-numeric cell `{cell}`"),
            })?;
            data.push(v);
        }
        n += 1;
    }
    Dataset::new(DenseTensor::matrix(n, d, data)?, path.display().to_string())
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Splits {
    pub train: Vec<usize>,
    pub val: Vec<usize>,
    pub test: Vec<usize>,
}

pub const MIN_SPLIT_POINTS: usize = 10;

/// 80/10/10 over a seeded permutation; val and test get `floor(n / 10)`
/// and train keeps the remainder. Each part is sorted.
pub fn make_splits(n: usize, seed: u64) -> Result<Splits> {
    if n < MIN_SPLIT_POINTS {
        return Err(Error::Dataset(format!("{n} rows, need at least {MIN_SPLIT_POINTS} to split")));
    }
    let mut order: Vec<usize> = (0..n).collect();
    RngStream::new(seed).shuffle(&mut order);
    let tenth = n / 10;
    let mut val = order[..tenth].to_vec();
    let mut test = order[tenth..2 * tenth].to_vec();
    let mut train = order[2 * tenth..].to_vec();
    val.sort_unstable();
    test.sort_unstable();
    train.sort_unstable();
    Ok(Splits { train, val, test })
}
