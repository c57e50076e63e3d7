//! The black-box predictor contract and the built-in fitters.
//!
//! Importance estimation needs two things from a model: point predictions and
//! input gradients. Pruning additionally needs predictions on counterfactual
//! rows (features replaced by zero), which externally supplied predictions
//! cannot provide.

mod additive;
mod external;
mod linear;
mod mcp;

pub use additive::{fit_additive_poly, AdditivePolyPredictor, BasisConfig, BasisExpansion};
pub use external::{wrap_external, ExternalPredictions, ExternalPredictor};
pub use linear::{fit_ols, ConstantPredictor, LinearPredictor};
pub use mcp::{fit_mcp_additive, mcp_threshold, LambdaSelection, McpConfig, McpFit};

use nalgebra::{DMatrix, DVector};

use crate::dataset::FeatureMatrix;
use crate::error::{Error, Result};

pub trait Predictor: Send + Sync {
    fn n_features(&self) -> usize;

    fn descriptor(&self) -> String;

    fn predict(&self, row: &[f64]) -> Result<f64>;

    fn gradient(&self, row: &[f64]) -> Result<Vec<f64>>;

    fn fitted_values(&self, x: &FeatureMatrix) -> Result<Vec<f64>> {
        self.check_width(x)?;
        x.rows_iter().map(|r| self.predict(r)).collect()
    }

    fn fitted_gradients(&self, x: &FeatureMatrix) -> Result<FeatureMatrix> {
        self.check_width(x)?;
        let mut data = Vec::with_capacity(x.nrows() * x.ncols());
        for r in x.rows_iter() {
            data.extend(self.gradient(r)?);
        }
        FeatureMatrix::new(x.nrows(), x.ncols(), data)
    }

    /// Whether `predict` works on rows that were not part of the training data.
    fn supports_counterfactuals(&self) -> bool {
        true
    }

    /// Coefficient dump for built-in models.
    fn coefficients_json(&self) -> Option<serde_json::Value> {
        None
    }

    fn check_width(&self, x: &FeatureMatrix) -> Result<()> {
        if x.ncols() != self.n_features() {
            return Err(Error::Shape {
                what: "feature count",
                expected: self.n_features(),
                got: x.ncols(),
            });
        }
        Ok(())
    }
}

/// Least-squares solve through the SVD, rejecting numerically rank-deficient designs.
pub(crate) fn least_squares(
    design: DMatrix<f64>,
    target: &[f64],
    hint: &'static str,
) -> Result<Vec<f64>> {
    let columns = design.ncols();
    if design.nrows() < columns {
        return Err(Error::RankDeficient {
            rank: design.nrows(),
            columns,
            hint,
        });
    }
    let svd = design.svd(true, true);
    let smax = svd.singular_values.max();
    let tol = smax * 1e-10;
    let rank = svd.rank(tol);
    if rank < columns || smax == 0.0 {
        return Err(Error::RankDeficient {
            rank,
            columns,
            hint,
        });
    }
    let b = DVector::from_column_slice(target);
    let sol = svd
        .solve(&b, tol)
        .map_err(|e| Error::InvalidInput(format!("least squares failed: {e}")))?;
    Ok(sol.iter().copied().collect())
}

#[cfg(test)]
pub(crate) mod testing {
    use super::Predictor;
    use crate::dataset::FeatureMatrix;

    /// Max relative deviation between the analytic gradient and central
    /// differences with step `1e-5·max(1,|x_j|)`.
    pub fn gradient_fd_error(pred: &dyn Predictor, x: &FeatureMatrix, rows: usize) -> f64 {
        let mut worst: f64 = 0.0;
        for i in 0..rows.min(x.nrows()) {
            let row = x.row(i).to_vec();
            let g = pred.gradient(&row).unwrap();
            for j in 0..row.len() {
                let h = 1e-5 * row[j].abs().max(1.0);
                let mut up = row.clone();
                up[j] += h;
                let mut dn = row.clone();
                dn[j] -= h;
                let fd = (pred.predict(&up).unwrap() - pred.predict(&dn).unwrap()) / (2.0 * h);
                let err = (fd - g[j]).abs() / g[j].abs().max(1.0);
                worst = worst.max(err);
            }
        }
        worst
    }
}
