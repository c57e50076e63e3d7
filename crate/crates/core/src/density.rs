//! Marginal quantiles, kernel density estimates and the residual density with
//! heavy-tail extrapolation beyond the observed residual range.
//!
//! Inside `[min R, max R]` the residual density is a plain KDE. Above the
//! largest residual it is extrapolated from a high threshold `u = q_{R,1-τn}`
//! with the regular-variation ratio
//!
//! ```text
//! f(r) = (r / u)^(-1/γ) · f_KDE(u)
//! ```
//!
//! where `γ` is the Hill estimate over exceedances of `u`. The lower tail uses
//! the same construction on the negated residuals.

use serde::{Deserialize, Serialize};

use crate::dataset::Dataset;
use crate::error::{Error, Result};
use crate::predict::Predictor;

const INV_SQRT_2PI: f64 = 0.398_942_280_401_432_7;

/// Hill estimates are clamped to this range.
pub const GAMMA_MAX: f64 = 10.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuantileGrid {
    taus: Vec<f64>,
}

impl QuantileGrid {
    pub fn new(taus: Vec<f64>) -> Result<Self> {
        if taus.is_empty() {
            return Err(Error::InvalidInput("quantile grid is empty".into()));
        }
        if taus.iter().any(|&t| !(t > 0.0 && t < 1.0)) {
            return Err(Error::InvalidInput(
                "quantile levels must lie strictly inside (0, 1)".into(),
            ));
        }
        if taus.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::InvalidInput(
                "quantile levels must be strictly increasing".into(),
            ));
        }
        Ok(Self { taus })
    }

    /// Evenly spaced levels `step, 2·step, …` strictly below 1.
    pub fn uniform(count: usize) -> Result<Self> {
        let m = (count + 1) as f64;
        Self::new((1..=count).map(|k| k as f64 / m).collect())
    }

    pub fn taus(&self) -> &[f64] {
        &self.taus
    }

    pub fn len(&self) -> usize {
        self.taus.len()
    }

    pub fn is_empty(&self) -> bool {
        self.taus.is_empty()
    }
}

impl Default for QuantileGrid {
    fn default() -> Self {
        Self {
            taus: vec![0.1, 0.3, 0.5, 0.7, 0.9],
        }
    }
}

impl std::str::FromStr for QuantileGrid {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let taus = s
            .split(',')
            .map(|t| {
                t.trim()
                    .parse::<f64>()
                    .map_err(|_| Error::InvalidInput(format!("bad quantile level `{t}`")))
            })
            .collect::<Result<Vec<_>>>()?;
        Self::new(taus)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Kernel {
    #[default]
    Gaussian,
    Epanechnikov,
}

impl Kernel {
    #[inline]
    pub fn eval(&self, u: f64) -> f64 {
        match self {
            Kernel::Gaussian => INV_SQRT_2PI * (-0.5 * u * u).exp(),
            Kernel::Epanechnikov => {
                if u.abs() < 1.0 {
                    0.75 * (1.0 - u * u)
                } else {
                    0.0
                }
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BandwidthRule {
    #[default]
    Silverman,
    Manual(f64),
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct KdeConfig {
    pub kernel: Kernel,
    pub bandwidth: BandwidthRule,
}

/// Threshold rule `τn = n^(-exponent)`; the effective tail sample is `n^(1-exponent)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TailConfig {
    pub tau_n_exponent: f64,
    pub min_exceedances: usize,
}

impl Default for TailConfig {
    fn default() -> Self {
        Self {
            tau_n_exponent: 0.4,
            min_exceedances: 10,
        }
    }
}

impl TailConfig {
    pub fn tau_n(&self, n: usize) -> f64 {
        (n as f64).powf(-self.tau_n_exponent)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.tau_n_exponent > 0.0 && self.tau_n_exponent < 1.0) {
            return Err(Error::InvalidInput(format!(
                "tau_n exponent must lie in (0, 1) so that tau_n -> 0 and n*tau_n -> inf, got {}",
                self.tau_n_exponent
            )));
        }
        if self.min_exceedances < 10 {
            return Err(Error::InvalidInput(
                "min_exceedances must be at least 10".into(),
            ));
        }
        Ok(())
    }
}

fn check_finite(values: &[f64]) -> Result<()> {
    if values.is_empty() {
        return Err(Error::InvalidInput("empty sample".into()));
    }
    if values.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("sample"));
    }
    Ok(())
}

/// One-based order-statistic index `ceil(n·τ)`, guarded against `n·τ`
/// landing a rounding error above an integer.
fn order_index(n: usize, tau: f64) -> usize {
    let t = n as f64 * tau;
    let k = (t - t * 1e-12).ceil() as usize;
    k.clamp(1, n)
}

/// Lowest minimizer of the check loss on an already sorted sample.
pub fn quantile_sorted(sorted: &[f64], tau: f64) -> f64 {
    sorted[order_index(sorted.len(), tau) - 1]
}

/// Empirical `τ`-quantile, the order statistic of index `ceil(n·τ)`.
pub fn empirical_quantile(values: &[f64], tau: f64) -> Result<f64> {
    check_finite(values)?;
    if !(tau > 0.0 && tau < 1.0) {
        return Err(Error::InvalidInput(format!(
            "tau must lie in (0,1), got {tau}"
        )));
    }
    let mut s = values.to_vec();
    s.sort_by(f64::total_cmp);
    Ok(quantile_sorted(&s, tau))
}

fn sample_sd(values: &[f64]) -> f64 {
    let n = values.len() as f64;
    let m = values.iter().sum::<f64>() / n;
    (values.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / (n - 1.0).max(1.0)).sqrt()
}

/// Silverman's rule `0.9·min(sd, IQR/1.34)·n^(-1/5)` on a sorted sample.
/// Falls back to whichever spread is positive when the other vanishes.
pub fn silverman_bandwidth(sorted: &[f64]) -> Result<f64> {
    let n = sorted.len();
    let sd = sample_sd(sorted);
    let iqr = quantile_sorted(sorted, 0.75) - quantile_sorted(sorted, 0.25);
    let spread = match (sd > 0.0, iqr > 0.0) {
        (true, true) => sd.min(iqr / 1.34),
        (true, false) => sd,
        (false, true) => iqr / 1.34,
        (false, false) => return Err(Error::Bandwidth),
    };
    Ok(0.9 * spread * (n as f64).powf(-0.2))
}

/// A KDE with its bandwidth resolved. Values are kept sorted.
#[derive(Debug, Clone)]
pub struct Kde {
    sorted: Vec<f64>,
    kernel: Kernel,
    bandwidth: f64,
}

impl Kde {
    pub fn fit(values: &[f64], cfg: &KdeConfig) -> Result<Self> {
        check_finite(values)?;
        let mut sorted = values.to_vec();
        sorted.sort_by(f64::total_cmp);
        Self::from_sorted(sorted, cfg)
    }

    pub fn from_sorted(sorted: Vec<f64>, cfg: &KdeConfig) -> Result<Self> {
        let bandwidth = match cfg.bandwidth {
            BandwidthRule::Silverman => silverman_bandwidth(&sorted)?,
            BandwidthRule::Manual(b) if b > 0.0 && b.is_finite() => b,
            BandwidthRule::Manual(b) => {
                return Err(Error::InvalidInput(format!(
                    "manual bandwidth must be positive, got {b}"
                )))
            }
        };
        Ok(Self {
            sorted,
            kernel: cfg.kernel,
            bandwidth,
        })
    }

    pub fn bandwidth(&self) -> f64 {
        self.bandwidth
    }

    pub fn sorted_values(&self) -> &[f64] {
        &self.sorted
    }

    /// `(1/(n·b)) Σ K((v_i - x)/b)`
    pub fn eval(&self, x: f64) -> f64 {
        self.eval_with_bandwidth(x, self.bandwidth)
    }

    fn eval_with_bandwidth(&self, x: f64, b: f64) -> f64 {
        let s: f64 = self
            .sorted
            .iter()
            .map(|&v| self.kernel.eval((v - x) / b))
            .sum();
        s / (self.sorted.len() as f64 * b)
    }
}

/// Single-point KDE evaluation.
pub fn kde_at(values: &[f64], point: f64, cfg: &KdeConfig) -> Result<f64> {
    Ok(Kde::fit(values, cfg)?.eval(point))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HillEstimate {
    pub gamma_hat: f64,
    pub threshold: f64,
    /// Number of observations strictly above the threshold.
    pub k: usize,
}

/// Hill estimator over exceedances of the empirical `(1-τn)`-quantile:
/// `γ = (1/(n·τn)) Σ_{R_i > u} (log R_i − log u)`, clamped to `[0, GAMMA_MAX]`.
pub fn hill_estimator(values: &[f64], tau_n: f64, min_exceedances: usize) -> Result<HillEstimate> {
    check_finite(values)?;
    let mut s = values.to_vec();
    s.sort_by(f64::total_cmp);
    hill_sorted(&s, tau_n, min_exceedances, "upper")
}

fn hill_sorted(
    sorted: &[f64],
    tau_n: f64,
    min_exceedances: usize,
    side: &'static str,
) -> Result<HillEstimate> {
    let n = sorted.len();
    let threshold = quantile_sorted(sorted, 1.0 - tau_n);
    let start = sorted.partition_point(|&v| v <= threshold);
    let k = n - start;
    if k < min_exceedances {
        return Err(Error::TailFit {
            side,
            reason: "too few exceedances above the tail threshold",
            threshold,
            exceedances: k,
            n,
        });
    }
    if threshold <= 0.0 {
        return Err(Error::TailFit {
            side,
            reason: "tail threshold is not positive",
            threshold,
            exceedances: k,
            n,
        });
    }
    let log_u = threshold.ln();
    let sum: f64 = sorted[start..].iter().map(|v| v.ln() - log_u).sum();
    let gamma_hat = (sum / (n as f64 * tau_n)).clamp(0.0, GAMMA_MAX);
    Ok(HillEstimate {
        gamma_hat,
        threshold,
        k,
    })
}

/// One fitted tail: threshold and Hill estimate in shifted coordinates, plus
/// the KDE value anchoring the extrapolation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TailFit {
    /// Threshold `q_{R,1-τn}` in the original residual coordinates
    /// (negated residuals for the lower tail).
    pub threshold: f64,
    pub gamma_hat: f64,
    pub density_at_threshold: f64,
    /// Constant added before taking logs; zero unless the threshold was non-positive.
    pub shift: f64,
    pub exceedances: usize,
}

impl TailFit {
    fn fit(
        sorted: &[f64],
        tau_n: f64,
        min_exceedances: usize,
        side: &'static str,
        density_at: impl Fn(f64) -> f64,
    ) -> Result<Self> {
        let threshold = quantile_sorted(sorted, 1.0 - tau_n);
        // logs need a positive threshold; shift so the threshold sits at one sd.
        let shift = if threshold > 0.0 {
            0.0
        } else {
            let sd = sample_sd(sorted);
            if sd <= 0.0 {
                return Err(Error::TailFit {
                    side,
                    reason: "degenerate residuals",
                    threshold,
                    exceedances: 0,
                    n: sorted.len(),
                });
            }
            sd - threshold
        };
        let shifted: Vec<f64> = sorted.iter().map(|v| v + shift).collect();
        let hill = hill_sorted(&shifted, tau_n, min_exceedances, side)?;
        Ok(Self {
            threshold,
            gamma_hat: hill.gamma_hat,
            density_at_threshold: density_at(threshold),
            shift,
            exceedances: hill.k,
        })
    }

    /// `((r + shift)/(u + shift))^(-1/γ) · f(u)`; zero when `γ = 0`.
    pub fn extrapolate(&self, r: f64) -> f64 {
        if self.gamma_hat <= 0.0 {
            return 0.0;
        }
        let ratio = (r + self.shift) / (self.threshold + self.shift);
        if ratio <= 0.0 {
            return 0.0;
        }
        ratio.powf(-1.0 / self.gamma_hat) * self.density_at_threshold
    }
}

/// Residual density: KDE inside the residual range, Hill-tail extrapolation outside.
#[derive(Debug, Clone)]
pub struct ResidualTailModel {
    kde: Kde,
    anchor_bandwidth: f64,
    upper: TailFit,
    lower: TailFit,
    tau_n: f64,
}

impl ResidualTailModel {
    pub fn fit(residuals: &[f64], kde_cfg: &KdeConfig, tail: &TailConfig) -> Result<Self> {
        tail.validate()?;
        check_finite(residuals)?;
        let n = residuals.len();
        if n < 30 {
            return Err(Error::InvalidInput(format!(
                "residual density needs at least 30 residuals, got {n}"
            )));
        }
        let kde = Kde::fit(residuals, kde_cfg).map_err(|e| match e {
            Error::Bandwidth => Error::TailFit {
                side: "both",
                reason: "degenerate residuals",
                threshold: residuals[0],
                exceedances: 0,
                n,
            },
            other => other,
        })?;
        let sorted = kde.sorted_values();
        if sorted[0] == sorted[n - 1] {
            return Err(Error::TailFit {
                side: "both",
                reason: "degenerate residuals",
                threshold: sorted[0],
                exceedances: 0,
                n,
            });
        }
        // the anchor KDE uses its own Silverman bandwidth, which equals the
        // in-range one because both are resolved on the same residual sample.
        let anchor_bandwidth = kde.bandwidth();
        let tau_n = tail.tau_n(n);
        let upper = TailFit::fit(sorted, tau_n, tail.min_exceedances, "upper", |u| {
            kde.eval_with_bandwidth(u, anchor_bandwidth)
        })?;
        let negated: Vec<f64> = sorted.iter().rev().map(|v| -v).collect();
        let lower = TailFit::fit(&negated, tau_n, tail.min_exceedances, "lower", |u| {
            kde.eval_with_bandwidth(-u, anchor_bandwidth)
        })?;
        Ok(Self {
            kde,
            anchor_bandwidth,
            upper,
            lower,
            tau_n,
        })
    }

    pub fn min(&self) -> f64 {
        self.kde.sorted[0]
    }

    pub fn max(&self) -> f64 {
        *self.kde.sorted.last().unwrap()
    }

    pub fn sorted_residuals(&self) -> &[f64] {
        self.kde.sorted_values()
    }

    pub fn upper(&self) -> &TailFit {
        &self.upper
    }

    pub fn lower(&self) -> &TailFit {
        &self.lower
    }

    pub fn in_range_bandwidth(&self) -> f64 {
        self.kde.bandwidth()
    }

    pub fn tau_n(&self) -> f64 {
        self.tau_n
    }

    pub fn contains(&self, r: f64) -> bool {
        r >= self.min() && r <= self.max()
    }

    /// Plain KDE value, ignoring the range switch.
    pub fn kde(&self, r: f64) -> f64 {
        self.kde.eval(r)
    }

    pub fn eval(&self, r: f64) -> f64 {
        if r > self.max() {
            self.upper.extrapolate(r)
        } else if r < self.min() {
            self.lower.extrapolate(-r)
        } else {
            self.kde.eval(r)
        }
    }

    pub fn diagnostics(&self) -> TailDiagnostics {
        TailDiagnostics {
            n: self.kde.sorted.len(),
            tau_n: self.tau_n,
            in_range_bandwidth: self.kde.bandwidth(),
            anchor_bandwidth: self.anchor_bandwidth,
            min_residual: self.min(),
            max_residual: self.max(),
            upper: self.upper,
            lower: self.lower,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TailDiagnostics {
    pub n: usize,
    pub tau_n: f64,
    pub in_range_bandwidth: f64,
    pub anchor_bandwidth: f64,
    pub min_residual: f64,
    pub max_residual: f64,
    pub upper: TailFit,
    pub lower: TailFit,
}

/// Residual density fit from a plain residual vector.
pub fn fit_residual_density(
    residuals: &[f64],
    kde: &KdeConfig,
    tail: &TailConfig,
) -> Result<ResidualTailModel> {
    ResidualTailModel::fit(residuals, kde, tail)
}

/// Fraction of rows whose evaluation point `q_τ − ĥ(x_i)` falls outside the
/// observed residual range.
pub fn out_of_range_fraction(data: &Dataset, predictor: &dyn Predictor, tau: f64) -> Result<f64> {
    let fitted = predictor.fitted_values(&data.x)?;
    out_of_range_fraction_fitted(&data.y, &fitted, tau)
}

pub(crate) fn out_of_range_fraction_fitted(y: &[f64], fitted: &[f64], tau: f64) -> Result<f64> {
    let q = empirical_quantile(y, tau)?;
    let (lo, hi) = y
        .iter()
        .zip(fitted)
        .map(|(a, b)| a - b)
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), r| {
            (lo.min(r), hi.max(r))
        });
    let out = fitted
        .iter()
        .filter(|&&h| {
            let r = q - h;
            r < lo || r > hi
        })
        .count();
    Ok(out as f64 / fitted.len() as f64)
}
