//! Row-major feature matrices, datasets and their CSV/JSON representations.

use std::fs::File;
use std::io::{Read, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Dense row-major `n × p` matrix of features.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMatrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl FeatureMatrix {
    pub fn new(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::Shape {
                what: "matrix buffer length",
                expected: rows * cols,
                got: data.len(),
            });
        }
        Ok(Self { rows, cols, data })
    }

    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let cols = rows.first().map_or(0, Vec::len);
        let mut data = Vec::with_capacity(rows.len() * cols);
        for r in rows {
            if r.len() != cols {
                return Err(Error::Shape {
                    what: "row length",
                    expected: cols,
                    got: r.len(),
                });
            }
            data.extend_from_slice(r);
        }
        Ok(Self {
            rows: rows.len(),
            cols,
            data,
        })
    }

    pub fn nrows(&self) -> usize {
        self.rows
    }

    pub fn ncols(&self) -> usize {
        self.cols
    }

    #[inline]
    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    #[inline]
    pub fn row_mut(&mut self, i: usize) -> &mut [f64] {
        &mut self.data[i * self.cols..(i + 1) * self.cols]
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.cols + j]
    }

    pub fn rows_iter(&self) -> impl Iterator<Item = &[f64]> {
        self.data.chunks_exact(self.cols.max(1)).take(self.rows)
    }

    pub fn column(&self, j: usize) -> Vec<f64> {
        (0..self.rows).map(|i| self.get(i, j)).collect()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    /// Copy with the given columns replaced by zero.
    pub fn with_zeroed_columns(&self, columns: &[usize]) -> Self {
        let mut out = self.clone();
        for i in 0..out.rows {
            let row = out.row_mut(i);
            for &j in columns {
                row[j] = 0.0;
            }
        }
        out
    }

    /// Copy with columns reordered so that output column `k` is input column `perm[k]`.
    pub fn permute_columns(&self, perm: &[usize]) -> Self {
        let mut out = Self::zeros(self.rows, self.cols);
        for i in 0..self.rows {
            let src = self.row(i);
            for (k, &j) in perm.iter().enumerate() {
                out.data[i * self.cols + k] = src[j];
            }
        }
        out
    }

    pub fn column_means(&self) -> Vec<f64> {
        let mut m = vec![0.0; self.cols];
        for row in self.rows_iter() {
            for (a, &v) in m.iter_mut().zip(row) {
                *a += v;
            }
        }
        m.iter_mut().for_each(|a| *a /= self.rows as f64);
        m
    }

    pub fn column_sds(&self) -> Vec<f64> {
        let means = self.column_means();
        let mut s = vec![0.0; self.cols];
        for row in self.rows_iter() {
            for ((a, &v), &m) in s.iter_mut().zip(row).zip(&means) {
                *a += (v - m) * (v - m);
            }
        }
        let denom = (self.rows.max(2) - 1) as f64;
        s.iter().map(|a| (a / denom).sqrt()).collect()
    }

    pub fn all_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }
}

/// Where a dataset came from. Serialized as the JSON sidecar next to a dataset CSV.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub model_id: Option<u8>,
    pub error_law: Option<String>,
    pub feature_seed: Option<u64>,
    pub error_seed: Option<u64>,
    pub rho: Option<f64>,
    pub n: usize,
    pub p: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub source: Option<String>,
}

/// Feature matrix, outcome vector and provenance record.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub x: FeatureMatrix,
    pub y: Vec<f64>,
    pub meta: Provenance,
}

impl Dataset {
    pub fn new(x: FeatureMatrix, y: Vec<f64>, meta: Provenance) -> Result<Self> {
        if x.nrows() != y.len() {
            return Err(Error::Shape {
                what: "outcome length",
                expected: x.nrows(),
                got: y.len(),
            });
        }
        if y.len() < 2 {
            return Err(Error::InvalidInput(format!(
                "dataset needs at least 2 rows, got {}",
                y.len()
            )));
        }
        if !x.all_finite() {
            return Err(Error::NonFinite("features"));
        }
        if !y.iter().all(|v| v.is_finite()) {
            return Err(Error::NonFinite("outcome"));
        }
        Ok(Self { x, y, meta })
    }

    pub fn n(&self) -> usize {
        self.y.len()
    }

    pub fn p(&self) -> usize {
        self.x.ncols()
    }

    /// Subtract column means from the features. Returns the means that were removed.
    pub fn center_features(&mut self) -> Vec<f64> {
        let means = self.x.column_means();
        for i in 0..self.x.nrows() {
            for (v, m) in self.x.row_mut(i).iter_mut().zip(&means) {
                *v -= m;
            }
        }
        means
    }

    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut wtr = csv::Writer::from_writer(w);
        let mut header = vec!["y".to_string()];
        header.extend((1..=self.p()).map(|j| format!("x{j}")));
        wtr.write_record(&header)?;
        let mut rec = Vec::with_capacity(self.p() + 1);
        for (i, y) in self.y.iter().enumerate() {
            rec.clear();
            rec.push(y.to_string());
            rec.extend(self.x.row(i).iter().map(f64::to_string));
            wtr.write_record(&rec)?;
        }
        wtr.flush().map_err(|e| Error::io("<csv writer>", e))?;
        Ok(())
    }

    pub fn read_csv<R: Read>(r: R) -> Result<Self> {
        let mut rdr = csv::Reader::from_reader(r);
        let header = rdr.headers()?.clone();
        if header.get(0) != Some("y") {
            return Err(Error::InvalidInput(
                "dataset CSV header must start with `y`".into(),
            ));
        }
        for (k, name) in header.iter().enumerate().skip(1) {
            if name != format!("x{k}") {
                return Err(Error::InvalidInput(format!(
                    "dataset CSV column {k} must be named x{k}, found `{name}`"
                )));
            }
        }
        let p = header.len() - 1;
        let mut y = Vec::new();
        let mut data = Vec::new();
        for rec in rdr.records() {
            let rec = rec?;
            if rec.len() != p + 1 {
                return Err(Error::Shape {
                    what: "dataset CSV record width",
                    expected: p + 1,
                    got: rec.len(),
                });
            }
            let mut vals = rec.iter().map(parse_f64);
            y.push(vals.next().unwrap()?);
            for v in vals {
                data.push(v?);
            }
        }
        let n = y.len();
        let x = FeatureMatrix::new(n, p, data)?;
        Dataset::new(
            x,
            y,
            Provenance {
                n,
                p,
                ..Default::default()
            },
        )
    }

    /// Write `path` plus the provenance sidecar returned by [`provenance_path`].
    pub fn save(&self, path: &Path) -> Result<()> {
        let f = File::create(path).map_err(|e| Error::io(path, e))?;
        self.write_csv(std::io::BufWriter::new(f))?;
        let side = provenance_path(path);
        let f = File::create(&side).map_err(|e| Error::io(&side, e))?;
        serde_json::to_writer_pretty(f, &self.meta)?;
        Ok(())
    }

    /// Read a dataset CSV, attaching the provenance sidecar when one exists.
    pub fn load(path: &Path) -> Result<Self> {
        let f = File::open(path).map_err(|e| Error::io(path, e))?;
        let mut ds = Self::read_csv(std::io::BufReader::new(f))?;
        let side = provenance_path(path);
        if side.exists() {
            let f = File::open(&side).map_err(|e| Error::io(&side, e))?;
            ds.meta = serde_json::from_reader(f)?;
        }
        Ok(ds)
    }
}

/// `data.csv` → `data.provenance.json`.
pub fn provenance_path(csv_path: &Path) -> PathBuf {
    let stem = csv_path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "data".into());
    csv_path.with_file_name(format!("{stem}.provenance.json"))
}

pub(crate) fn parse_f64(s: &str) -> Result<f64> {
    let v: f64 = s
        .trim()
        .parse()
        .map_err(|_| Error::InvalidInput(format!("cannot parse `{s}` as a number")))?;
    if v.is_finite() {
        Ok(v)
    } else {
        Err(Error::NonFinite("csv field"))
    }
}
