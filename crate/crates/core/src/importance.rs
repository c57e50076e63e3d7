//! Feature-importance curves across unconditional quantiles.
//!
//! For each `τ` the plug-in estimate is
//!
//! ```text
//! β(τ) = (1/n) Σ_i f_R(q_τ − ĥ(x_i)) / f_Y(q_τ) · ∇ĥ(x_i)
//! ```
//!
//! with `q_τ` the empirical outcome quantile, `f_Y` a KDE of the outcome and
//! `f_R` the residual density with tail extrapolation. [`shift_oracle`] gives
//! an independent brute-force value of the same derivative.

use std::io::Write;
use std::sync::Arc;

use rand::seq::SliceRandom;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::datagen::stream_rng;
use crate::dataset::{Dataset, FeatureMatrix};
use crate::density::{
    empirical_quantile, out_of_range_fraction_fitted, quantile_sorted, Kde, KdeConfig,
    QuantileGrid, ResidualTailModel, TailConfig, TailDiagnostics,
};
use crate::error::{Error, Result};
use crate::predict::Predictor;

/// Outcome densities below this are treated as unusable.
pub const MIN_OUTCOME_DENSITY: f64 = 1e-12;

/// `(τ − 1[y ≤ q]) / f`.
pub fn influence_function(y: f64, q_tau: f64, tau: f64, f_y_at_q: f64) -> f64 {
    let ind = if y <= q_tau { 1.0 } else { 0.0 };
    (tau - ind) / f_y_at_q
}

/// Per-`τ` quantities shared by the estimator and the pruning tests.
#[derive(Debug, Clone)]
pub struct DensityContext {
    pub tau: f64,
    pub q_hat: f64,
    pub f_y: f64,
    pub n: usize,
    pub residuals: Arc<ResidualTailModel>,
}

impl DensityContext {
    pub fn c1(&self) -> f64 {
        1.0 / self.f_y
    }

    pub fn c2(&self) -> f64 {
        self.q_hat - self.c1() * (1.0 - self.tau)
    }

    /// `τ(1−τ) / (n·f_Y(q)²)`.
    pub fn variance(&self) -> f64 {
        self.tau * (1.0 - self.tau) / (self.n as f64 * self.f_y * self.f_y)
    }
}

/// Everything fitted once per (dataset, predictor): fitted values, gradients,
/// the residual density and one [`DensityContext`] per grid point.
#[derive(Debug, Clone)]
pub struct FittedContext {
    pub fitted: Vec<f64>,
    pub gradients: FeatureMatrix,
    pub residuals: Arc<ResidualTailModel>,
    pub per_tau: Vec<DensityContext>,
}

impl FittedContext {
    pub fn new(
        data: &Dataset,
        predictor: &dyn Predictor,
        grid: &QuantileGrid,
        kde: &KdeConfig,
        tail: &TailConfig,
    ) -> Result<Self> {
        if data.n() < 30 {
            return Err(Error::InvalidInput(format!(
                "importance estimation needs n >= 30, got {}",
                data.n()
            )));
        }
        let fitted = predictor.fitted_values(&data.x)?;
        let gradients = predictor.fitted_gradients(&data.x)?;
        if fitted.iter().any(|v| !v.is_finite()) || !gradients.all_finite() {
            return Err(Error::NonFinite("predictor output"));
        }
        let resid: Vec<f64> = data.y.iter().zip(&fitted).map(|(y, h)| y - h).collect();
        let residuals = Arc::new(ResidualTailModel::fit(&resid, kde, tail)?);
        let y_kde = Kde::fit(&data.y, kde)?;
        let per_tau = grid
            .taus()
            .iter()
            .map(|&tau| {
                let q_hat = quantile_sorted(y_kde.sorted_values(), tau);
                let f_y = y_kde.eval(q_hat);
                if !(f_y >= MIN_OUTCOME_DENSITY) {
                    return Err(Error::IllConditionedDensity { tau, value: f_y });
                }
                Ok(DensityContext {
                    tau,
                    q_hat,
                    f_y,
                    n: data.n(),
                    residuals: Arc::clone(&residuals),
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            fitted,
            gradients,
            residuals,
            per_tau,
        })
    }
}

/// Pairwise summation; the split points depend only on the length.
pub(crate) fn pairwise_sum(v: &[f64]) -> f64 {
    if v.len() <= 32 {
        return v.iter().sum();
    }
    let mid = v.len() / 2;
    pairwise_sum(&v[..mid]) + pairwise_sum(&v[mid..])
}

/// β(τ) for one grid point from precomputed fits.
fn beta_at(ctx: &DensityContext, fitted: &[f64], grads: &FeatureMatrix) -> Vec<f64> {
    let n = fitted.len();
    let weights: Vec<f64> = fitted
        .iter()
        .map(|&h| ctx.residuals.eval(ctx.q_hat - h))
        .collect();
    let mut col = vec![0.0; n];
    (0..grads.ncols())
        .map(|j| {
            for (i, c) in col.iter_mut().enumerate() {
                *c = weights[i] * grads.get(i, j);
            }
            pairwise_sum(&col) / (n as f64 * ctx.f_y)
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CurveDiagnostics {
    pub predictor: String,
    pub residual_tail: TailDiagnostics,
    /// Fraction of evaluation points outside the residual range, per grid point.
    pub out_of_range: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImportanceCurve {
    pub taus: QuantileGrid,
    /// `beta[k][j]` is the importance of feature `j` at `taus[k]`.
    pub beta: Vec<Vec<f64>>,
    pub f_y_at_q: Vec<f64>,
    pub q_hat: Vec<f64>,
    pub pruned: bool,
    /// Zero-based indices of retained features.
    pub kept: Vec<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub diagnostics: Option<CurveDiagnostics>,
}

impl ImportanceCurve {
    pub fn n_features(&self) -> usize {
        self.beta.first().map_or(0, Vec::len)
    }

    /// Importance of feature `j` across the grid.
    pub fn feature(&self, j: usize) -> Vec<f64> {
        self.beta.iter().map(|row| row[j]).collect()
    }

    /// Rows `tau,beta1,...,betap`.
    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut wtr = csv::Writer::from_writer(w);
        let mut header = vec!["tau".to_string()];
        header.extend((1..=self.n_features()).map(|j| format!("beta{j}")));
        wtr.write_record(&header)?;
        for (tau, row) in self.taus.taus().iter().zip(&self.beta) {
            let mut rec = vec![tau.to_string()];
            rec.extend(row.iter().map(f64::to_string));
            wtr.write_record(&rec)?;
        }
        wtr.flush().map_err(|e| Error::io("<csv>", e))?;
        Ok(())
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }
}

/// Plug-in importance curve over `grid`.
pub fn estimate_importance(
    data: &Dataset,
    predictor: &dyn Predictor,
    grid: &QuantileGrid,
    kde: &KdeConfig,
    tail: &TailConfig,
) -> Result<ImportanceCurve> {
    let ctx = FittedContext::new(data, predictor, grid, kde, tail)?;
    Ok(estimate_from_context(data, predictor, grid, &ctx))
}

/// Same as [`estimate_importance`], reusing an already fitted context.
pub fn estimate_from_context(
    data: &Dataset,
    predictor: &dyn Predictor,
    grid: &QuantileGrid,
    ctx: &FittedContext,
) -> ImportanceCurve {
    let beta: Vec<Vec<f64>> = ctx
        .per_tau
        .par_iter()
        .map(|c| beta_at(c, &ctx.fitted, &ctx.gradients))
        .collect();
    let out_of_range = grid
        .taus()
        .iter()
        .map(|&tau| out_of_range_fraction_fitted(&data.y, &ctx.fitted, tau).unwrap_or(f64::NAN))
        .collect();
    ImportanceCurve {
        taus: grid.clone(),
        beta,
        f_y_at_q: ctx.per_tau.iter().map(|c| c.f_y).collect(),
        q_hat: ctx.per_tau.iter().map(|c| c.q_hat).collect(),
        pruned: false,
        kept: (0..data.p()).collect(),
        diagnostics: Some(CurveDiagnostics {
            predictor: predictor.descriptor(),
            residual_tail: ctx.residuals.diagnostics(),
            out_of_range,
        }),
    }
}

/// Monte Carlo value of `dQ_τ/dt` for the shift `x_j → x_j + t`.
///
/// Counterfactual outcomes are `ĥ(x_i ± t·e_j) + R_σ(m)`, where row `i = m mod n`
/// and `σ` concatenates seeded permutations of the residual indices, so the
/// residual draw is independent of the row. Returns the central difference
/// `[Q(+t) − Q(−t)] / 2t`; both sides share the same residual draw.
pub fn shift_oracle(
    data: &Dataset,
    predictor: &dyn Predictor,
    tau: f64,
    j: usize,
    t: f64,
    mc: usize,
    seed: u64,
) -> Result<f64> {
    if !predictor.supports_counterfactuals() {
        return Err(Error::CounterfactualUnsupported);
    }
    let n = data.n();
    if j >= data.p() {
        return Err(Error::InvalidInput(format!(
            "feature index {j} out of range for p = {}",
            data.p()
        )));
    }
    if !(t != 0.0 && t.is_finite()) {
        return Err(Error::InvalidInput(
            "shift step must be finite and nonzero".into(),
        ));
    }
    if mc < n {
        return Err(Error::InvalidInput(format!("need mc >= n ({mc} < {n})")));
    }
    let fitted = predictor.fitted_values(&data.x)?;
    let resid: Vec<f64> = data.y.iter().zip(&fitted).map(|(y, h)| y - h).collect();
    let shifted = |delta: f64| -> Result<Vec<f64>> {
        let mut x = data.x.clone();
        for i in 0..n {
            x.row_mut(i)[j] += delta;
        }
        predictor.fitted_values(&x)
    };
    let (up, down) = (shifted(t)?, shifted(-t)?);

    let mut rng = stream_rng(seed, 3);
    let mut perm: Vec<usize> = (0..n).collect();
    let mut y_up = Vec::with_capacity(mc);
    let mut y_down = Vec::with_capacity(mc);
    for m in 0..mc {
        if m % n == 0 {
            perm.shuffle(&mut rng);
        }
        let (i, r) = (m % n, resid[perm[m % n]]);
        y_up.push(up[i] + r);
        y_down.push(down[i] + r);
    }
    Ok((empirical_quantile(&y_up, tau)? - empirical_quantile(&y_down, tau)?) / (2.0 * t))
}

/// Default oracle step `0.05·sd(X_j)`.
pub fn default_shift_step(data: &Dataset, j: usize) -> f64 {
    let sd = data.x.column_sds()[j];
    0.05 * if sd > 0.0 { sd } else { 1.0 }
}
