//! Fit the additive cubic basis on Model 1 and prune with the multi-τ test.
//!
//! X₃ and X₄ do not enter the outcome, so they should be dropped and their
//! importance set to exactly zero.

use uqr_importance::datagen::{generate, ErrorLaw, FeatureSpec, ModelSpec};
use uqr_importance::density::{KdeConfig, QuantileGrid, TailConfig};
use uqr_importance::importance::{estimate_from_context, FittedContext};
use uqr_importance::predict::{fit_additive_poly, BasisConfig};
use uqr_importance::pruning::prune_multi;
use uqr_importance::Result;

fn main() -> Result<()> {
    let features = FeatureSpec::new(4, 0.5, 5)?;
    let mut data = generate(
        ModelSpec::Numbered(1),
        &features,
        ErrorLaw::StdNormal,
        1000,
        1,
    )?;
    data.center_features();
    let model = fit_additive_poly(&data, &BasisConfig::default())?;

    let grid = QuantileGrid::default();
    let ctx = FittedContext::new(
        &data,
        &model,
        &grid,
        &KdeConfig::default(),
        &TailConfig::default(),
    )?;
    let curve = estimate_from_context(&data, &model, &grid, &ctx);
    let (report, pruned) = prune_multi(&data, &model, &curve, &ctx, 0.05)?;

    for (k, t) in report.per_tau.iter().enumerate() {
        println!(
            "tau {:.1}  gof p={:.3}  steps={}  dropped {:?}  beta {:>7.3?}",
            t.tau,
            t.gof.p_value,
            t.trace.len(),
            t.dropped,
            pruned.beta[k]
        );
    }
    println!("dropped at every tau (zero-based): {:?}", report.dropped);
    for &j in &report.dropped {
        assert!(pruned.feature(j).iter().all(|b| b.to_bits() == 0));
    }
    Ok(())
}
