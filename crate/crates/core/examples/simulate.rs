//! Draw one dataset from each outcome model and print a few summary numbers.
//!
//! ```text
//! cargo run --example simulate
//! ```

use uqr_importance::datagen::{generate, ErrorLaw, FeatureSpec, ModelSpec};
use uqr_importance::Result;

fn main() -> Result<()> {
    // Features are drawn once (seed 5) and shared by every model.
    let features = FeatureSpec::new(4, 0.5, 5)?;
    println!(
        "{:>7} {:>9} {:>9} {:>9}",
        "model", "mean(y)", "sd(y)", "corr12"
    );
    let models = (1..=9).map(ModelSpec::Numbered).chain([ModelSpec::Linear]);
    for model in models {
        let data = generate(model, &features, ErrorLaw::StdNormal, 2000, 1)?;
        let n = data.n() as f64;
        let mean = data.y.iter().sum::<f64>() / n;
        let sd = (data.y.iter().map(|y| (y - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt();
        let (x1, x2) = (data.x.column(0), data.x.column(1));
        let corr = x1.iter().zip(&x2).map(|(a, b)| a * b).sum::<f64>() / n;
        println!("{:>7} {mean:>9.3} {sd:>9.3} {corr:>9.3}", model.to_string());
    }

    let dir = std::env::temp_dir().join("uqr-simulate-example");
    std::fs::create_dir_all(&dir).expect("temp dir");
    let path = dir.join("model1.csv");
    generate(
        ModelSpec::Numbered(1),
        &features,
        ErrorLaw::StudentT3,
        500,
        7,
    )?
    .save(&path)?;
    println!("saved {} with a provenance sidecar", path.display());
    Ok(())
}
