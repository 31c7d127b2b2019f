//! Treatment-effect data files.
//!
//! One realization is the column block
//! `treatment,y_factual,y_cfactual,mu0,mu1,x1,…,x25`. A file holds one or
//! more blocks side by side, and a directory holds files that are read in
//! name order.

use std::fs::File;
use std::io::{Read, Write};
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};
use crate::numerics::Matrix;

use super::data::CateDataset;

/// Covariates per realization in the standard schema.
pub const CATE_FEATURES: usize = 25;
const LEADING: [&str; 5] = ["treatment", "y_factual", "y_cfactual", "mu0", "mu1"];

/// Header of one realization block with `features` covariates.
pub fn block_header(features: usize) -> Vec<String> {
    LEADING
        .iter()
        .map(|s| s.to_string())
        .chain((1..=features).map(|j| format!("x{j}")))
        .collect()
}

fn schema_text(features: usize) -> String {
    format!("{},…,x{features}", LEADING.join(","))
}

/// Load every realization from a file, or from each `.csv` file of a
/// directory in name order.
pub fn load_cate_csv(path: &Path) -> Result<Vec<CateDataset>> {
    load_cate_csv_with(path, CATE_FEATURES)
}

pub fn load_cate_csv_with(path: &Path, features: usize) -> Result<Vec<CateDataset>> {
    if path.is_dir() {
        let mut files: Vec<PathBuf> = std::fs::read_dir(path)?
            .map(|e| e.map(|e| e.path()))
            .collect::<std::io::Result<_>>()?;
        files.retain(|p| p.extension().is_some_and(|e| e == "csv"));
        files.sort();
        if files.is_empty() {
            return Err(Error::Schema(format!("no .csv files in {}", path.display())));
        }
        let mut out = Vec::new();
        for f in files {
            out.extend(read_cate_csv(File::open(&f)?, features).map_err(|e| locate(e, &f))?);
        }
        Ok(out)
    } else {
        read_cate_csv(File::open(path)?, features).map_err(|e| locate(e, path))
    }
}

fn locate(e: Error, path: &Path) -> Error {
    match e {
        Error::Schema(m) => Error::Schema(format!("{}: {m}", path.display())),
        Error::Parse { row, column, detail } => Error::Parse {
            row,
            column,
            detail: format!("{}: {detail}", path.display()),
        },
        e => e,
    }
}

/// Parse realizations from CSV text. Rows are numbered from 1 at the
/// header line, columns from 1.
pub fn read_cate_csv<R: Read>(reader: R, features: usize) -> Result<Vec<CateDataset>> {
    let width = LEADING.len() + features;
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).flexible(true).from_reader(reader);
    let header: Vec<String> = rdr.headers()?.iter().map(|h| h.trim().to_string()).collect();
    if header.is_empty() || header.len() % width != 0 {
        return Err(Error::Schema(format!(
            "{} columns; expected a multiple of {width} ({})",
            header.len(),
            schema_text(features)
        )));
    }
    let blocks = header.len() / width;
    let expected = block_header(features);
    for b in 0..blocks {
        for (j, name) in expected.iter().enumerate() {
            let got = &header[b * width + j];
            if got != name {
                return Err(Error::Schema(format!(
                    "column {} is `{got}`, expected `{name}` ({})",
                    b * width + j + 1,
                    schema_text(features)
                )));
            }
        }
    }

    let mut cols: Vec<Vec<f64>> = vec![Vec::new(); header.len()];
    for (r, record) in rdr.records().enumerate() {
        let row = r + 2;
        let record = record?;
        if record.len() != header.len() {
            return Err(Error::Parse {
                row,
                column: record.len().min(header.len()) + 1,
                detail: format!("{} fields, header has {}", record.len(), header.len()),
            });
        }
        for (j, cell) in record.iter().enumerate() {
            let v: f64 = cell.trim().parse().map_err(|_| Error::Parse {
                row,
                column: j + 1,
                detail: format!("`{cell}` in column `{}` is not a number", header[j]),
            })?;
            if !v.is_finite() {
                return Err(Error::Parse {
                    row,
                    column: j + 1,
                    detail: format!("non-finite value in column `{}`", header[j]),
                });
            }
            if j % width == 0 && v != 0.0 && v != 1.0 {
                return Err(Error::Schema(format!("row {row}, column {}: treatment {v} is not 0 or 1", j + 1)));
            }
            cols[j].push(v);
        }
    }
    let n = cols[0].len();
    if n == 0 {
        return Err(Error::Schema("no data rows".into()));
    }

    (0..blocks)
        .map(|b| {
            let c = |k: usize| cols[b * width + k].clone();
            let mut x = Vec::with_capacity(n * features);
            for i in 0..n {
                for k in 0..features {
                    x.push(cols[b * width + LEADING.len() + k][i]);
                }
            }
            let data = CateDataset {
                x: Matrix::new(n, features, x)?,
                t: c(0).into_iter().map(|v| v as usize).collect(),
                y_factual: c(1),
                y_cfactual: Some(c(2)),
                mu0: Some(c(3)),
                mu1: Some(c(4)),
            };
            data.validate()?;
            Ok(data)
        })
        .collect()
}

/// Write realizations side by side. All must share `n` and `d` and carry
/// counterfactual outcomes and both means.
pub fn write_cate_csv<W: Write>(writer: W, data: &[CateDataset]) -> Result<()> {
    let first = data.first().ok_or_else(|| Error::InvalidArgument("nothing to write".into()))?;
    let (n, d) = (first.len(), first.dim());
    for (k, ds) in data.iter().enumerate() {
        ds.validate()?;
        if ds.len() != n || ds.dim() != d {
            return Err(Error::InvalidArgument(format!("realization {k} is {}×{}, expected {n}×{d}", ds.len(), ds.dim())));
        }
        if ds.y_cfactual.is_none() || ds.mu0.is_none() {
            return Err(Error::InvalidArgument(format!("realization {k} lacks counterfactual outcomes or means")));
        }
    }
    let mut w = csv::Writer::from_writer(writer);
    let header: Vec<String> = data.iter().flat_map(|_| block_header(d)).collect();
    w.write_record(&header)?;
    let mut record = Vec::with_capacity(header.len());
    for i in 0..n {
        record.clear();
        for ds in data {
            record.push(ds.t[i].to_string());
            record.push(ds.y_factual[i].to_string());
            for col in [&ds.y_cfactual, &ds.mu0, &ds.mu1] {
                record.push(col.as_ref().expect("checked")[i].to_string());
            }
            record.extend(ds.x.row(i).iter().map(f64::to_string));
        }
        w.write_record(&record)?;
    }
    w.flush()?;
    Ok(())
}
