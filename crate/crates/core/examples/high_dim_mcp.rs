//! Sparse additive fit with the MCP penalty on Model 2 with 200 noise-heavy
//! features, followed by pruning.
//!
//! ```text
//! cargo run --release --example high_dim_mcp
//! ```

use uqr_importance::datagen::{generate, ErrorLaw, FeatureSpec, ModelSpec};
use uqr_importance::density::{KdeConfig, QuantileGrid, TailConfig};
use uqr_importance::importance::{estimate_from_context, FittedContext};
use uqr_importance::predict::{fit_mcp_additive, BasisConfig, McpConfig};
use uqr_importance::pruning::{nonzero_beyond_two, prune_multi};
use uqr_importance::Result;

fn main() -> Result<()> {
    let features = FeatureSpec::new(200, 0.5, 5)?;
    let mut data = generate(
        ModelSpec::Numbered(2),
        &features,
        ErrorLaw::StdNormal,
        1000,
        1,
    )?;
    data.center_features();
    let fit = fit_mcp_additive(&data, &BasisConfig::default(), &McpConfig::default())?;
    println!(
        "lambda {:.4} (index {} of {}), active features {:?}",
        fit.lambda,
        fit.lambda_index,
        fit.lambdas.len(),
        fit.predictor.active_features()
    );

    let grid = QuantileGrid::default();
    let ctx = FittedContext::new(
        &data,
        &fit.predictor,
        &grid,
        &KdeConfig::default(),
        &TailConfig::default(),
    )?;
    let curve = estimate_from_context(&data, &fit.predictor, &grid, &ctx);
    let (report, pruned) = prune_multi(&data, &fit.predictor, &curve, &ctx, 0.05)?;
    for (k, tau) in grid.taus().iter().enumerate() {
        println!(
            "tau {tau:.1}: beta1 {:>7.3} beta2 {:>7.3}  noise nonzeros {} -> {}",
            pruned.beta[k][0],
            pruned.beta[k][1],
            nonzero_beyond_two(&curve.beta[k]),
            nonzero_beyond_two(&pruned.beta[k])
        );
    }
    println!("kept {:?}", report.kept);
    Ok(())
}
