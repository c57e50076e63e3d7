//! How often the residual density has to be evaluated outside the observed
//! residual range, as a function of τ, for an OLS fit of the linear design.

use uqr_importance::cli::{cmd_figure_oor, figure_defaults, ExperimentConfig};
use uqr_importance::Result;

fn main() -> Result<()> {
    let cfg = ExperimentConfig {
        out: std::env::temp_dir().join("uqr-figure-oor"),
        ..figure_defaults()
    };
    let rows = cmd_figure_oor(&cfg, &mut std::io::stdout())?;
    for (tau, f) in rows.iter().step_by(7) {
        let bar = "#".repeat((f * 60.0).round() as usize);
        println!("{tau:>5.2} {f:>6.3} {bar}");
    }
    Ok(())
}
