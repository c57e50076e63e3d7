use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};
use serde_json::json;

use super::{least_squares, Predictor};
use crate::dataset::Dataset;
use crate::error::{Error, Result};

/// `ĥ(x) = intercept + coefs·x`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinearPredictor {
    pub intercept: f64,
    pub coefs: Vec<f64>,
}

impl LinearPredictor {
    pub fn new(intercept: f64, coefs: Vec<f64>) -> Self {
        Self { intercept, coefs }
    }
}

impl Predictor for LinearPredictor {
    fn n_features(&self) -> usize {
        self.coefs.len()
    }

    fn descriptor(&self) -> String {
        format!("linear(p={})", self.coefs.len())
    }

    fn predict(&self, row: &[f64]) -> Result<f64> {
        if row.len() != self.coefs.len() {
            return Err(Error::Shape {
                what: "row length",
                expected: self.coefs.len(),
                got: row.len(),
            });
        }
        Ok(self.intercept + row.iter().zip(&self.coefs).map(|(x, b)| x * b).sum::<f64>())
    }

    fn gradient(&self, _row: &[f64]) -> Result<Vec<f64>> {
        Ok(self.coefs.clone())
    }

    fn coefficients_json(&self) -> Option<serde_json::Value> {
        Some(json!({ "kind": "ols", "intercept": self.intercept, "coefs": self.coefs }))
    }
}

/// `ĥ ≡ value`, zero gradient everywhere.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConstantPredictor {
    pub value: f64,
    pub p: usize,
}

impl Predictor for ConstantPredictor {
    fn n_features(&self) -> usize {
        self.p
    }

    fn descriptor(&self) -> String {
        format!("constant({})", self.value)
    }

    fn predict(&self, _row: &[f64]) -> Result<f64> {
        Ok(self.value)
    }

    fn gradient(&self, _row: &[f64]) -> Result<Vec<f64>> {
        Ok(vec![0.0; self.p])
    }

    fn coefficients_json(&self) -> Option<serde_json::Value> {
        Some(json!({ "kind": "constant", "value": self.value }))
    }
}

/// Ordinary least squares with an intercept.
pub fn fit_ols(data: &Dataset) -> Result<LinearPredictor> {
    let (n, p) = (data.n(), data.p());
    if n <= p + 1 {
        return Err(Error::InvalidInput(format!(
            "OLS needs n > p + 1 (n = {n}, p = {p})"
        )));
    }
    let design = DMatrix::from_fn(
        n,
        p + 1,
        |i, j| if j == 0 { 1.0 } else { data.x.get(i, j - 1) },
    );
    let sol = least_squares(design, &data.y, "drop collinear columns")?;
    Ok(LinearPredictor::new(sol[0], sol[1..].to_vec()))
}
