//! Synthetic benchmark data: AR(1)-correlated Gaussian features, the nine
//! outcome models (plus the linear illustration model) and four error laws.
//!
//! Every sampler is a pure function of its seed. Features and errors draw from
//! separate ChaCha streams so a replication can reuse one feature draw while
//! varying the error seed.

use std::fmt;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Cauchy, Distribution, Exp, StandardNormal, StudentT};
use serde::{Deserialize, Serialize};

use crate::dataset::{Dataset, FeatureMatrix, Provenance};
use crate::error::{Error, Result};

const FEATURE_STREAM: u64 = 0;
const ERROR_STREAM: u64 = 1;

/// Seeded generator for one logical stream.
pub fn stream_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FeatureSpec {
    pub p: usize,
    pub rho: f64,
    pub seed: u64,
}

impl FeatureSpec {
    pub fn new(p: usize, rho: f64, seed: u64) -> Result<Self> {
        if p < 1 {
            return Err(Error::InvalidInput("feature count p must be >= 1".into()));
        }
        if !(rho.abs() < 1.0) {
            return Err(Error::InvalidInput(format!(
                "AR correlation rho must satisfy |rho| < 1, got {rho}"
            )));
        }
        Ok(Self { p, rho, seed })
    }

    /// `Σ_{jk} = rho^{|j-k|}`.
    pub fn covariance(&self, j: usize, k: usize) -> f64 {
        self.rho.powi(j.abs_diff(k) as i32)
    }
}

/// Draw `n` rows of `N(0, Σ)` with `Σ_{jk} = rho^{|j-k|}`.
///
/// Uses the AR(1) recursion `x_1 = z_1`, `x_j = rho·x_{j-1} + sqrt(1-rho²)·z_j`,
/// which reproduces that covariance exactly without factorizing `Σ`.
pub fn sample_features(spec: &FeatureSpec, n: usize) -> Result<FeatureMatrix> {
    let spec = FeatureSpec::new(spec.p, spec.rho, spec.seed)?;
    if n < 1 {
        return Err(Error::InvalidInput("sample size n must be >= 1".into()));
    }
    let mut rng = stream_rng(spec.seed, FEATURE_STREAM);
    let innov = (1.0 - spec.rho * spec.rho).sqrt();
    let mut data = Vec::with_capacity(n * spec.p);
    for _ in 0..n {
        let mut prev: f64 = rng.sample(StandardNormal);
        data.push(prev);
        for _ in 1..spec.p {
            let z: f64 = rng.sample(StandardNormal);
            prev = spec.rho * prev + innov * z;
            data.push(prev);
        }
    }
    FeatureMatrix::new(n, spec.p, data)
}

/// Error distributions used by the benchmark.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ErrorLaw {
    StdNormal,
    StudentT3,
    /// Exponential with rate 2 (mean 0.5), uncentered.
    Exponential2,
    /// Exponential with mean 2, the alternative reading of "Exp(2)".
    Exponential2Mean,
    Cauchy01,
    /// Degenerate zero error. Only meaningful for checking outcome maps.
    Zero,
}

impl ErrorLaw {
    pub fn name(&self) -> &'static str {
        match self {
            ErrorLaw::StdNormal => "normal",
            ErrorLaw::StudentT3 => "t3",
            ErrorLaw::Exponential2 => "exp2",
            ErrorLaw::Exponential2Mean => "exp2-mean",
            ErrorLaw::Cauchy01 => "cauchy",
            ErrorLaw::Zero => "zero",
        }
    }
}

impl fmt::Display for ErrorLaw {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ErrorLaw {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Ok(match s {
            "normal" => ErrorLaw::StdNormal,
            "t3" => ErrorLaw::StudentT3,
            "exp2" => ErrorLaw::Exponential2,
            "exp2-mean" => ErrorLaw::Exponential2Mean,
            "cauchy" => ErrorLaw::Cauchy01,
            "zero" => ErrorLaw::Zero,
            other => {
                return Err(Error::InvalidInput(format!(
                    "unknown error law `{other}` (expected normal, t3, exp2, exp2-mean, cauchy)"
                )))
            }
        })
    }
}

pub fn sample_errors(law: ErrorLaw, n: usize, seed: u64) -> Result<Vec<f64>> {
    if n < 1 {
        return Err(Error::InvalidInput("sample size n must be >= 1".into()));
    }
    let mut rng = stream_rng(seed, ERROR_STREAM);
    let out = match law {
        ErrorLaw::StdNormal => (0..n).map(|_| rng.sample(StandardNormal)).collect(),
        ErrorLaw::StudentT3 => {
            let d = StudentT::new(3.0).expect("valid dof");
            d.sample_iter(&mut rng).take(n).collect()
        }
        ErrorLaw::Exponential2 => {
            let d = Exp::new(2.0).expect("valid rate");
            d.sample_iter(&mut rng).take(n).collect()
        }
        ErrorLaw::Exponential2Mean => {
            let d = Exp::new(0.5).expect("valid rate");
            d.sample_iter(&mut rng).take(n).collect()
        }
        ErrorLaw::Cauchy01 => {
            let d = Cauchy::new(0.0, 1.0).expect("valid scale");
            d.sample_iter(&mut rng).take(n).collect()
        }
        ErrorLaw::Zero => vec![0.0; n],
    };
    Ok(out)
}

/// Outcome model: one of the nine benchmark models, or the linear
/// `Y = 1 - 2X1 + 5X2 + e` model used to illustrate out-of-range evaluation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(into = "String", try_from = "String")]
pub enum ModelSpec {
    Numbered(u8),
    Linear,
}

impl ModelSpec {
    pub fn numbered(id: u8) -> Result<Self> {
        if (1..=9).contains(&id) {
            Ok(ModelSpec::Numbered(id))
        } else {
            Err(Error::InvalidInput(format!(
                "model id must be in 1..=9, got {id}"
            )))
        }
    }

    pub fn id(&self) -> Option<u8> {
        match self {
            ModelSpec::Numbered(id) => Some(*id),
            ModelSpec::Linear => None,
        }
    }

    pub fn heteroscedastic(&self) -> bool {
        matches!(self, ModelSpec::Numbered(7..=9))
    }

    /// Zero-based indices of the features the outcome depends on.
    pub fn relevant_features(&self) -> &'static [usize] {
        match self {
            ModelSpec::Numbered(1..=3) | ModelSpec::Numbered(9) | ModelSpec::Linear => &[0, 1],
            _ => &[0, 1, 2],
        }
    }

    /// Smallest feature count accepted by [`generate`].
    pub fn min_features(&self) -> usize {
        match self {
            ModelSpec::Linear => 2,
            ModelSpec::Numbered(_) => 4,
        }
    }

    /// Whether the model contains an X1–X3 interaction.
    pub fn has_interaction(&self) -> bool {
        matches!(self, ModelSpec::Numbered(4..=8))
    }

    /// Evaluate the outcome for one row and one error draw.
    pub fn outcome(&self, x: &[f64], eps: f64) -> f64 {
        let x1 = x[0];
        let x2 = x[1];
        let x3 = x.get(2).copied().unwrap_or(0.0);
        let ind = if x1.abs() <= 1.0 { 1.0 } else { 0.0 };
        match self {
            ModelSpec::Linear => 1.0 - 2.0 * x1 + 5.0 * x2 + eps,
            ModelSpec::Numbered(id) => match id {
                1 => (1.0 + 2.0 * x1).powi(2) - 5.0 * x2 + eps,
                2 => 1.0 + (2.0 * x1).exp() * ind - 5.0 * x2 + eps,
                3 => 1.0 + 2.0 * x1.cos() - 5.0 * x2 + eps,
                4 => (1.0 + 2.0 * x1 + x3).powi(2) - 5.0 * x2 + eps,
                5 => 1.0 + (2.0 * x1 + x3).exp() * ind - 5.0 * x2 + eps,
                6 => (1.0 + 2.0 * x1.cos() + x3).powi(2) - 5.0 * x2 + eps,
                7 => (1.0 + 2.0 * x1 + x3).powi(2) - 5.0 * x2 + x1.exp() * eps,
                8 => 1.0 + (2.0 * x1 + x3).exp() * ind - 5.0 * x2 + x1.exp() * eps,
                9 => 1.0 + 2.0 * x1.cos() - 5.0 * x2 + x1.exp() * eps,
                _ => unreachable!("model id validated on construction"),
            },
        }
    }
}

impl fmt::Display for ModelSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ModelSpec::Numbered(id) => write!(f, "{id}"),
            ModelSpec::Linear => f.write_str("linear"),
        }
    }
}

impl FromStr for ModelSpec {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        if s == "linear" {
            return Ok(ModelSpec::Linear);
        }
        let id: u8 = s
            .parse()
            .map_err(|_| Error::InvalidInput(format!("unknown model `{s}`")))?;
        ModelSpec::numbered(id)
    }
}

impl From<ModelSpec> for String {
    fn from(m: ModelSpec) -> String {
        m.to_string()
    }
}

impl TryFrom<String> for ModelSpec {
    type Error = Error;

    fn try_from(s: String) -> Result<Self> {
        s.parse()
    }
}

/// Generate a dataset; features use `features.seed`, errors use `error_seed`.
pub fn generate(
    model: ModelSpec,
    features: &FeatureSpec,
    law: ErrorLaw,
    n: usize,
    error_seed: u64,
) -> Result<Dataset> {
    if let ModelSpec::Numbered(id) = model {
        ModelSpec::numbered(id)?;
    }
    if features.p < model.min_features() {
        return Err(Error::InvalidInput(format!(
            "model {model} needs p >= {}, got p = {}",
            model.min_features(),
            features.p
        )));
    }
    let x = sample_features(features, n)?;
    let eps = sample_errors(law, n, error_seed)?;
    let y: Vec<f64> = x
        .rows_iter()
        .zip(&eps)
        .map(|(row, &e)| model.outcome(row, e))
        .collect();
    let meta = Provenance {
        model_id: model.id(),
        error_law: Some(law.to_string()),
        feature_seed: Some(features.seed),
        error_seed: Some(error_seed),
        rho: Some(features.rho),
        n,
        p: features.p,
        source: Some(format!("model {model}")),
    };
    Dataset::new(x, y, meta)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn mean(v: &[f64]) -> f64 {
        v.iter().sum::<f64>() / v.len() as f64
    }

    fn sd(v: &[f64]) -> f64 {
        let m = mean(v);
        (v.iter().map(|a| (a - m).powi(2)).sum::<f64>() / (v.len() - 1) as f64).sqrt()
    }

    fn corr(a: &[f64], b: &[f64]) -> f64 {
        let (ma, mb) = (mean(a), mean(b));
        let cov = a
            .iter()
            .zip(b)
            .map(|(x, y)| (x - ma) * (y - mb))
            .sum::<f64>()
            / (a.len() - 1) as f64;
        cov / (sd(a) * sd(b))
    }

    #[test]
    fn univariate_feature_variance() {
        let x = sample_features(&FeatureSpec::new(1, 0.5, 3).unwrap(), 100_000).unwrap();
        assert!((sd(&x.column(0)).powi(2) - 1.0).abs() < 0.05);
    }

    #[test]
    fn ar1_correlations_match_closed_form() {
        let spec = FeatureSpec::new(4, 0.5, 5).unwrap();
        let x = sample_features(&spec, 100_000).unwrap();
        let c: Vec<Vec<f64>> = (0..4).map(|j| x.column(j)).collect();
        assert!((corr(&c[0], &c[1]) - spec.covariance(0, 1)).abs() < 0.02);
        assert!((corr(&c[0], &c[2]) - spec.covariance(0, 2)).abs() < 0.02);
        assert!((spec.covariance(0, 2) - 0.25).abs() < 1e-15);
    }

    #[test]
    fn features_are_deterministic() {
        let spec = FeatureSpec::new(6, 0.5, 11).unwrap();
        assert_eq!(
            sample_features(&spec, 50).unwrap(),
            sample_features(&spec, 50).unwrap()
        );
    }

    #[test]
    fn feature_spec_validation() {
        assert!(FeatureSpec::new(0, 0.5, 1).is_err());
        assert!(FeatureSpec::new(3, 1.0, 1).is_err());
        assert!(FeatureSpec::new(3, -1.2, 1).is_err());
        assert!(FeatureSpec::new(3, f64::NAN, 1).is_err());
    }

    #[test]
    fn error_law_moments() {
        let e = sample_errors(ErrorLaw::StdNormal, 100_000, 1).unwrap();
        assert!(mean(&e).abs() < 0.02);
        assert!((sd(&e) - 1.0).abs() < 0.02);

        let e = sample_errors(ErrorLaw::Exponential2, 100_000, 1).unwrap();
        assert!((mean(&e) - 0.5).abs() < 0.02);

        let e = sample_errors(ErrorLaw::Exponential2Mean, 100_000, 1).unwrap();
        assert!((mean(&e) - 2.0).abs() < 0.05);

        let mut e = sample_errors(ErrorLaw::Cauchy01, 100_000, 1).unwrap();
        e.sort_by(f64::total_cmp);
        assert!(e[50_000].abs() < 0.05);

        // t3 has variance 3.
        let e = sample_errors(ErrorLaw::StudentT3, 200_000, 2).unwrap();
        assert!(mean(&e).abs() < 0.03);
        let mut a: Vec<f64> = e.iter().map(|v| v.abs()).collect();
        a.sort_by(f64::total_cmp);
        // median of |t3| is the 0.75 quantile of t3, 0.76489.
        assert!((a[100_000] - 0.76489).abs() < 0.02);
    }

    #[test]
    fn degenerate_outcome_values() {
        let zero = 0.0;
        let m = |id| ModelSpec::numbered(id).unwrap();
        assert_eq!(m(1).outcome(&[0.0, 0.0, 0.0, 0.0], zero), 1.0);
        assert_eq!(m(3).outcome(&[0.0, 1.0, 0.0, 0.0], zero), -2.0);
        assert_eq!(m(5).outcome(&[2.0, 0.0, 0.0, 0.0], zero), 1.0);
        assert!(ModelSpec::numbered(0).is_err());
        assert!(ModelSpec::numbered(10).is_err());
    }

    fn reference_outcome(id: u8, x: &[f64], e: f64) -> f64 {
        let (x1, x2, x3) = (x[0], x[1], x[2]);
        let ind = f64::from(u8::from(x1.abs() <= 1.0));
        match id {
            1 => (1. + 2. * x1) * (1. + 2. * x1) - 5. * x2 + e,
            2 => 1. + f64::exp(2. * x1) * ind - 5. * x2 + e,
            3 => 1. + 2. * f64::cos(x1) - 5. * x2 + e,
            4 => (1. + 2. * x1 + x3) * (1. + 2. * x1 + x3) - 5. * x2 + e,
            5 => 1. + f64::exp(2. * x1 + x3) * ind - 5. * x2 + e,
            6 => {
                let a = 1. + 2. * f64::cos(x1) + x3;
                a * a - 5. * x2 + e
            }
            7 => (1. + 2. * x1 + x3) * (1. + 2. * x1 + x3) - 5. * x2 + f64::exp(x1) * e,
            8 => 1. + f64::exp(2. * x1 + x3) * ind - 5. * x2 + f64::exp(x1) * e,
            9 => 1. + 2. * f64::cos(x1) - 5. * x2 + f64::exp(x1) * e,
            _ => unreachable!(),
        }
    }

    #[test]
    fn generate_matches_direct_formula_for_all_models() {
        let spec = FeatureSpec::new(6, 0.5, 5).unwrap();
        for id in 1..=9u8 {
            let ds = generate(
                ModelSpec::numbered(id).unwrap(),
                &spec,
                ErrorLaw::Zero,
                1000,
                1,
            )
            .unwrap();
            for (row, &y) in ds.x.rows_iter().zip(&ds.y) {
                let r = reference_outcome(id, row, 0.0);
                assert!((r - y).abs() <= 1e-12 * r.abs().max(1.0), "model {id}");
            }
        }
    }

    #[test]
    fn noise_column_permutation_leaves_outcome_unchanged() {
        let spec = FeatureSpec::new(7, 0.5, 5).unwrap();
        let ds = generate(
            ModelSpec::numbered(4).unwrap(),
            &spec,
            ErrorLaw::Zero,
            200,
            1,
        )
        .unwrap();
        let perm = [0, 1, 2, 3, 6, 4, 5];
        let px = ds.x.permute_columns(&perm);
        let m = ModelSpec::numbered(4).unwrap();
        for (row, &y) in px.rows_iter().zip(&ds.y) {
            assert_eq!(m.outcome(row, 0.0), y);
        }
    }

    #[test]
    fn generate_rejects_too_few_features() {
        let spec = FeatureSpec::new(3, 0.5, 5).unwrap();
        assert!(generate(
            ModelSpec::numbered(4).unwrap(),
            &spec,
            ErrorLaw::StdNormal,
            10,
            1
        )
        .is_err());
    }

    #[test]
    fn dataset_is_reproducible_across_threads() {
        let spec = FeatureSpec::new(4, 0.5, 5).unwrap();
        let a = generate(
            ModelSpec::numbered(2).unwrap(),
            &spec,
            ErrorLaw::StudentT3,
            500,
            9,
        )
        .unwrap();
        let b = std::thread::spawn(move || {
            generate(
                ModelSpec::numbered(2).unwrap(),
                &spec,
                ErrorLaw::StudentT3,
                500,
                9,
            )
            .unwrap()
        })
        .join()
        .unwrap();
        assert_eq!(a, b);
    }
}
