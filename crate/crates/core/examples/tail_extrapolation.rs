//! Residual density beyond the sample range.
//!
//! Inside `[min R, max R]` the model is a Gaussian KDE. Past the extremes it
//! follows `f(r) = (r/u)^(-1/γ̂) f(u)` with the Hill index `γ̂` fitted above
//! the `(1 − n^-0.4)` quantile `u`. Light tails give `γ̂` near zero and a
//! steep fall-off; heavy tails keep mass far out.

use uqr_importance::datagen::{sample_errors, ErrorLaw};
use uqr_importance::density::{KdeConfig, ResidualTailModel, TailConfig};
use uqr_importance::Result;

fn main() -> Result<()> {
    for law in [ErrorLaw::StdNormal, ErrorLaw::StudentT3, ErrorLaw::Cauchy01] {
        let r = sample_errors(law, 2000, 3)?;
        let m = ResidualTailModel::fit(&r, &KdeConfig::default(), &TailConfig::default())?;
        let up = m.upper();
        println!(
            "{law}: range [{:.2}, {:.2}], u = {:.2}, gamma = {:.3}, k = {}",
            m.min(),
            m.max(),
            up.threshold,
            up.gamma_hat,
            up.exceedances
        );
        for scale in [0.5, 1.0, 1.5, 3.0] {
            let at = scale * m.max();
            let side = if m.contains(at) { "kde" } else { "tail" };
            println!("  f({at:>8.2}) = {:.3e}  [{side}]", m.eval(at));
        }
    }
    Ok(())
}
