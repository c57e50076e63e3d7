//! A predictor served from a file must give the same curve as the fitted
//! predictor it was exported from.

use uqr_importance::datagen::{generate, ErrorLaw, FeatureSpec, ModelSpec};
use uqr_importance::density::{KdeConfig, QuantileGrid, TailConfig};
use uqr_importance::importance::estimate_importance;
use uqr_importance::predict::{fit_ols, wrap_external, ExternalPredictions, Predictor};

#[test]
fn external_file_reproduces_ols_curve() {
    let features = FeatureSpec::new(4, 0.5, 5).unwrap();
    let mut data = generate(ModelSpec::Linear, &features, ErrorLaw::StudentT3, 800, 2).unwrap();
    data.center_features();
    let ols = fit_ols(&data).unwrap();

    let mut buf = Vec::new();
    ExternalPredictions::from_predictor(&data, &ols)
        .unwrap()
        .write_csv(&mut buf)
        .unwrap();
    let ext = wrap_external(
        &data,
        ExternalPredictions::read_csv(buf.as_slice(), "memory").unwrap(),
    )
    .unwrap();
    assert!(!ext.supports_counterfactuals());

    let grid = QuantileGrid::default();
    let (kde, tail) = (KdeConfig::default(), TailConfig::default());
    let a = estimate_importance(&data, &ols, &grid, &kde, &tail).unwrap();
    let b = estimate_importance(&data, &ext, &grid, &kde, &tail).unwrap();
    assert_eq!(a.beta, b.beta);
    assert_eq!(a.q_hat, b.q_hat);
    assert_eq!(a.f_y_at_q, b.f_y_at_q);
}

#[test]
fn external_rejects_unseen_rows() {
    let features = FeatureSpec::new(4, 0.5, 5).unwrap();
    let data = generate(ModelSpec::Linear, &features, ErrorLaw::StdNormal, 100, 2).unwrap();
    let ols = fit_ols(&data).unwrap();
    let ext = wrap_external(
        &data,
        ExternalPredictions::from_predictor(&data, &ols).unwrap(),
    )
    .unwrap();
    assert_eq!(
        ext.predict(data.x.row(3)).unwrap(),
        ols.predict(data.x.row(3)).unwrap()
    );
    let mut row = data.x.row(3).to_vec();
    row[0] = 0.0;
    assert!(ext.predict(&row).is_err());
}
