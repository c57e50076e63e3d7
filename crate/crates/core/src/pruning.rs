//! Goodness-of-fit gate and stepwise backward pruning.
//!
//! The marginal quantile is re-estimated through its recentered influence
//! function,
//!
//! ```text
//! q_full = c1 · (1/n²) Σ_i Σ_i' 1[R_i' > q_τ − ĥ(x_i)] + c2,
//! c1 = 1/f_Y(q_τ),  c2 = q_τ − c1·(1 − τ),
//! ```
//!
//! and compared with `q_τ` through `T = (q_full − q_τ)/√V`, `V = τ(1−τ)/(n·f_Y²)`.
//! Pruning evaluates the same estimator with candidate columns set to zero.

use std::collections::BTreeSet;
use std::io::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};

use crate::dataset::Dataset;
use crate::density::QuantileGrid;
use crate::error::{Error, Result};
use crate::importance::{DensityContext, FittedContext, ImportanceCurve};
use crate::predict::Predictor;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PruneConfig {
    pub alpha: f64,
    pub grid: QuantileGrid,
}

impl Default for PruneConfig {
    fn default() -> Self {
        Self {
            alpha: 0.05,
            grid: QuantileGrid::default(),
        }
    }
}

impl PruneConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return Err(Error::InvalidInput(format!(
                "alpha must lie in (0,1), got {}",
                self.alpha
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QuantileTest {
    pub statistic: f64,
    pub p_value: f64,
    /// Full or reduced re-estimate of the quantile.
    pub q_estimate: f64,
    pub q_hat: f64,
    pub variance: f64,
}

impl QuantileTest {
    pub fn new(q_estimate: f64, ctx: &DensityContext) -> Self {
        let variance = ctx.variance();
        let statistic = (q_estimate - ctx.q_hat) / variance.sqrt();
        Self {
            statistic,
            p_value: two_sided_p(statistic),
            q_estimate,
            q_hat: ctx.q_hat,
            variance,
        }
    }

    pub fn rejects(&self, alpha: f64) -> bool {
        !(self.p_value > alpha)
    }
}

/// `2·(1 − Φ(|t|))`.
pub fn two_sided_p(t: f64) -> f64 {
    let phi = Normal::standard();
    2.0 * (1.0 - phi.cdf(t.abs()))
}

/// `(1/n²) Σ_i #{i' : R_i' > q − ĥ_i}` with `sorted_r` ascending.
pub fn survival_double_sum(sorted_r: &[f64], q_hat: f64, predictions: &[f64]) -> f64 {
    let n_r = sorted_r.len();
    let count: usize = predictions
        .iter()
        .map(|&h| {
            let thr = q_hat - h;
            n_r - sorted_r.partition_point(|&r| r <= thr)
        })
        .sum();
    count as f64 / (n_r as f64 * predictions.len() as f64)
}

/// `c1·S + c2` for the predictions `ĥ(x_i)` of some (possibly reduced) row set.
pub fn marginal_quantile_from_predictions(predictions: &[f64], ctx: &DensityContext) -> f64 {
    let s = survival_double_sum(ctx.residuals.sorted_residuals(), ctx.q_hat, predictions);
    ctx.c1() * s + ctx.c2()
}

pub fn marginal_quantile_full(
    data: &Dataset,
    predictor: &dyn Predictor,
    ctx: &DensityContext,
) -> Result<f64> {
    Ok(marginal_quantile_from_predictions(
        &predictor.fitted_values(&data.x)?,
        ctx,
    ))
}

/// The estimator with the columns in `zeroed` set to 0 before prediction.
pub fn marginal_quantile_reduced(
    data: &Dataset,
    predictor: &dyn Predictor,
    zeroed: &[usize],
    ctx: &DensityContext,
) -> Result<f64> {
    if !predictor.supports_counterfactuals() {
        return Err(Error::CounterfactualUnsupported);
    }
    let x = data.x.with_zeroed_columns(zeroed);
    Ok(marginal_quantile_from_predictions(
        &predictor.fitted_values(&x)?,
        ctx,
    ))
}

pub fn gof_test(
    data: &Dataset,
    predictor: &dyn Predictor,
    ctx: &DensityContext,
) -> Result<QuantileTest> {
    Ok(QuantileTest::new(
        marginal_quantile_full(data, predictor, ctx)?,
        ctx,
    ))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EliminationStep {
    pub feature: usize,
    /// Every feature zeroed in this reduced estimate, including `feature`.
    pub zeroed: Vec<usize>,
    pub test: QuantileTest,
    pub removed: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TauPruning {
    pub tau: f64,
    pub gof: QuantileTest,
    pub gof_passed: bool,
    pub trace: Vec<EliminationStep>,
    pub kept: Vec<usize>,
    pub dropped: Vec<usize>,
}

/// Weakest-first backward elimination at one `τ`.
///
/// Features with `beta_init = 0` are never tested and always zeroed. Candidates
/// are visited by ascending `|beta_init|` (ties by index); each test zeroes every
/// feature removed so far plus the candidate. The first rejection ends the scan.
pub fn backward_elimination(
    data: &Dataset,
    predictor: &dyn Predictor,
    beta_init: &[f64],
    ctx: &DensityContext,
    alpha: f64,
) -> Result<(Vec<usize>, Vec<usize>, Vec<EliminationStep>)> {
    let p = beta_init.len();
    if p != data.p() {
        return Err(Error::Shape {
            what: "importance vector length",
            expected: data.p(),
            got: p,
        });
    }
    let mut dropped: BTreeSet<usize> = (0..p).filter(|&j| beta_init[j] == 0.0).collect();
    let mut candidates: Vec<usize> = (0..p).filter(|&j| beta_init[j] != 0.0).collect();
    if !candidates.is_empty() && !predictor.supports_counterfactuals() {
        return Err(Error::CounterfactualUnsupported);
    }
    candidates.sort_by(|&a, &b| {
        beta_init[a]
            .abs()
            .total_cmp(&beta_init[b].abs())
            .then(a.cmp(&b))
    });

    let mut trace = Vec::with_capacity(candidates.len());
    for &j in &candidates {
        let mut zeroed: Vec<usize> = dropped.iter().copied().collect();
        zeroed.push(j);
        zeroed.sort_unstable();
        let q = marginal_quantile_reduced(data, predictor, &zeroed, ctx)?;
        let test = QuantileTest::new(q, ctx);
        let removed = !test.rejects(alpha);
        trace.push(EliminationStep {
            feature: j,
            zeroed,
            test,
            removed,
        });
        if !removed {
            break;
        }
        dropped.insert(j);
    }
    let kept = (0..p).filter(|j| !dropped.contains(j)).collect();
    Ok((kept, dropped.into_iter().collect(), trace))
}

/// Goodness-of-fit gate followed by backward elimination when the gate passes.
pub fn prune_at_tau(
    data: &Dataset,
    predictor: &dyn Predictor,
    beta_init: &[f64],
    ctx: &DensityContext,
    alpha: f64,
) -> Result<TauPruning> {
    let gof = gof_test(data, predictor, ctx)?;
    let gof_passed = gof.p_value > alpha;
    let (kept, dropped, trace) = if gof_passed {
        backward_elimination(data, predictor, beta_init, ctx, alpha)?
    } else {
        ((0..data.p()).collect(), Vec::new(), Vec::new())
    };
    Ok(TauPruning {
        tau: ctx.tau,
        gof,
        gof_passed,
        trace,
        kept,
        dropped,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PruningReport {
    pub alpha: f64,
    pub per_tau: Vec<TauPruning>,
    pub kept: Vec<usize>,
    pub dropped: Vec<usize>,
}

impl PruningReport {
    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    /// Feature × τ matrix of `kept`/`dropped`, with a trailing `final` column.
    pub fn write_csv<W: Write>(&self, w: W, p: usize) -> Result<()> {
        let mut wtr = csv::Writer::from_writer(w);
        let mut header = vec!["feature".to_string()];
        header.extend(self.per_tau.iter().map(|t| format!("tau={}", t.tau)));
        header.push("final".into());
        wtr.write_record(&header)?;
        let label = |dropped: bool| if dropped { "dropped" } else { "kept" };
        for j in 0..p {
            let mut rec = vec![format!("x{}", j + 1)];
            rec.extend(
                self.per_tau
                    .iter()
                    .map(|t| label(t.dropped.contains(&j)).to_string()),
            );
            rec.push(label(self.dropped.contains(&j)).into());
            wtr.write_record(&rec)?;
        }
        wtr.flush().map_err(|e| Error::io("<csv>", e))?;
        Ok(())
    }
}

/// Prune at every grid point, then drop the features dropped at all of them.
pub fn prune_multi(
    data: &Dataset,
    predictor: &dyn Predictor,
    curve: &ImportanceCurve,
    ctx: &FittedContext,
    alpha: f64,
) -> Result<(PruningReport, ImportanceCurve)> {
    if curve.pruned {
        return Err(Error::InvalidInput(
            "importance curve is already pruned".into(),
        ));
    }
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(Error::InvalidInput(format!(
            "alpha must lie in (0,1), got {alpha}"
        )));
    }
    if ctx.per_tau.len() != curve.beta.len() {
        return Err(Error::Shape {
            what: "grid points in density context",
            expected: curve.beta.len(),
            got: ctx.per_tau.len(),
        });
    }
    let per_tau: Vec<TauPruning> = ctx
        .per_tau
        .par_iter()
        .zip(curve.beta.par_iter())
        .map(|(c, beta)| prune_at_tau(data, predictor, beta, c, alpha))
        .collect::<Result<_>>()?;
    let p = data.p();
    let mut dropped: BTreeSet<usize> = (0..p).collect();
    for t in &per_tau {
        let here: BTreeSet<usize> = t.dropped.iter().copied().collect();
        dropped = dropped.intersection(&here).copied().collect();
    }
    let mut out = curve.clone();
    for row in out.beta.iter_mut() {
        for &j in &dropped {
            row[j] = 0.0;
        }
    }
    out.pruned = true;
    out.kept = (0..p).filter(|j| !dropped.contains(j)).collect();
    Ok((
        PruningReport {
            alpha,
            per_tau,
            kept: out.kept.clone(),
            dropped: dropped.into_iter().collect(),
        },
        out,
    ))
}

/// Number of nonzero entries among features `j ≥ 3` (one-based).
pub fn nonzero_beyond_two(beta: &[f64]) -> usize {
    beta.iter().skip(2).filter(|&&b| b != 0.0).count()
}

/// `100 · Σ_r (init_r − final_r) / (R · (p − 2))`, counts over features `j ≥ 3`.
/// A negative value is returned as computed and logged.
pub fn prun_metric(
    init_nonzeros: &[usize],
    final_nonzeros: &[usize],
    p: usize,
    reps: usize,
) -> Result<f64> {
    if init_nonzeros.len() != final_nonzeros.len() {
        return Err(Error::Shape {
            what: "prun count vectors",
            expected: init_nonzeros.len(),
            got: final_nonzeros.len(),
        });
    }
    if p <= 2 || reps == 0 {
        return Err(Error::InvalidInput(
            "prun needs p > 2 and at least one replication".into(),
        ));
    }
    let diff: i64 = init_nonzeros
        .iter()
        .zip(final_nonzeros)
        .map(|(&a, &b)| a as i64 - b as i64)
        .sum();
    if diff < 0 {
        log::warn!("prun reduction is negative ({diff}); pruning added nonzeros");
    }
    Ok(100.0 * diff as f64 / (reps as f64 * (p - 2) as f64))
}
