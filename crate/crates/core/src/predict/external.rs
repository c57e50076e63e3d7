use std::collections::HashMap;
use std::io::Read;
use std::path::Path;

use super::Predictor;
use crate::dataset::{parse_f64, Dataset, FeatureMatrix};
use crate::error::{Error, Result};

/// Predictions and input gradients produced outside this crate, row-aligned
/// with a [`Dataset`].
#[derive(Debug, Clone, PartialEq)]
pub struct ExternalPredictions {
    pub yhat: Vec<f64>,
    pub grad: FeatureMatrix,
    pub source: String,
}

impl ExternalPredictions {
    pub fn new(yhat: Vec<f64>, grad: FeatureMatrix, source: impl Into<String>) -> Result<Self> {
        if yhat.len() != grad.nrows() {
            return Err(Error::Shape {
                what: "external prediction rows",
                expected: yhat.len(),
                got: grad.nrows(),
            });
        }
        if yhat.iter().any(|v| !v.is_finite()) || !grad.all_finite() {
            return Err(Error::NonFinite("external predictions"));
        }
        Ok(Self {
            yhat,
            grad,
            source: source.into(),
        })
    }

    /// Reads CSV with header `yhat,g1,...,gp`.
    pub fn read_csv<R: Read>(r: R, source: impl Into<String>) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new().has_headers(true).from_reader(r);
        let header = rdr.headers()?.clone();
        let p = header.len().saturating_sub(1);
        let ok = header.get(0) == Some("yhat")
            && (1..=p).all(|j| header.get(j).map(str::trim) == Some(format!("g{j}").as_str()));
        if !ok || p == 0 {
            return Err(Error::InvalidInput(format!(
                "external predictions header must be yhat,g1,...,gp; got {:?}",
                header.iter().collect::<Vec<_>>()
            )));
        }
        let mut yhat = Vec::new();
        let mut data = Vec::new();
        for rec in rdr.records() {
            let rec = rec?;
            if rec.len() != p + 1 {
                return Err(Error::Shape {
                    what: "external prediction columns",
                    expected: p + 1,
                    got: rec.len(),
                });
            }
            yhat.push(parse_f64(&rec[0])?);
            for v in rec.iter().skip(1) {
                data.push(parse_f64(v)?);
            }
        }
        let grad = FeatureMatrix::new(yhat.len(), p, data)?;
        Self::new(yhat, grad, source)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let f = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
        Self::read_csv(f, path.display().to_string())
    }

    /// Echo a predictor's outputs on `data`, mainly for round-trip checks.
    pub fn from_predictor(data: &Dataset, pred: &dyn Predictor) -> Result<Self> {
        Self::new(
            pred.fitted_values(&data.x)?,
            pred.fitted_gradients(&data.x)?,
            pred.descriptor(),
        )
    }

    pub fn write_csv<W: std::io::Write>(&self, w: W) -> Result<()> {
        let mut wtr = csv::Writer::from_writer(w);
        let mut header = vec!["yhat".to_string()];
        header.extend((1..=self.grad.ncols()).map(|j| format!("g{j}")));
        wtr.write_record(&header)?;
        for (i, y) in self.yhat.iter().enumerate() {
            let mut rec = vec![y.to_string()];
            rec.extend(self.grad.row(i).iter().map(f64::to_string));
            wtr.write_record(&rec)?;
        }
        wtr.flush().map_err(|e| Error::io("<csv>", e))?;
        Ok(())
    }
}

/// Serves stored predictions for the exact training rows; any other row is refused.
#[derive(Debug, Clone)]
pub struct ExternalPredictor {
    lookup: HashMap<Vec<u64>, usize>,
    ext: ExternalPredictions,
}

fn row_key(row: &[f64]) -> Vec<u64> {
    // +0.0 and -0.0 must collide.
    row.iter().map(|v| (v + 0.0).to_bits()).collect()
}

impl ExternalPredictor {
    fn index(&self, row: &[f64]) -> Result<usize> {
        if row.len() != self.ext.grad.ncols() {
            return Err(Error::Shape {
                what: "row length",
                expected: self.ext.grad.ncols(),
                got: row.len(),
            });
        }
        self.lookup
            .get(&row_key(row))
            .copied()
            .ok_or(Error::CounterfactualUnsupported)
    }
}

impl Predictor for ExternalPredictor {
    fn n_features(&self) -> usize {
        self.ext.grad.ncols()
    }

    fn descriptor(&self) -> String {
        format!("external({})", self.ext.source)
    }

    fn predict(&self, row: &[f64]) -> Result<f64> {
        Ok(self.ext.yhat[self.index(row)?])
    }

    fn gradient(&self, row: &[f64]) -> Result<Vec<f64>> {
        Ok(self.ext.grad.row(self.index(row)?).to_vec())
    }

    // Row order is known, so skip the hash lookup for the training matrix.
    fn fitted_values(&self, x: &FeatureMatrix) -> Result<Vec<f64>> {
        self.check_width(x)?;
        x.rows_iter().map(|r| self.predict(r)).collect()
    }

    fn supports_counterfactuals(&self) -> bool {
        false
    }
}

pub fn wrap_external(data: &Dataset, ext: ExternalPredictions) -> Result<ExternalPredictor> {
    if ext.yhat.len() != data.n() {
        return Err(Error::Shape {
            what: "external prediction rows",
            expected: data.n(),
            got: ext.yhat.len(),
        });
    }
    if ext.grad.ncols() != data.p() {
        return Err(Error::Shape {
            what: "external gradient columns",
            expected: data.p(),
            got: ext.grad.ncols(),
        });
    }
    let mut lookup = HashMap::with_capacity(data.n());
    for (i, row) in data.x.rows_iter().enumerate() {
        if let Some(prev) = lookup.insert(row_key(row), i) {
            if ext.yhat[prev] != ext.yhat[i] || ext.grad.row(prev) != ext.grad.row(i) {
                return Err(Error::InvalidInput(format!(
                    "rows {prev} and {i} share features but carry different external predictions"
                )));
            }
        }
    }
    Ok(ExternalPredictor { lookup, ext })
}
