use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use clap::Args;
use serde::{Deserialize, Serialize};

use crate::datagen::{generate, ErrorLaw, FeatureSpec, ModelSpec};
use crate::dataset::Dataset;
use crate::density::{BandwidthRule, KdeConfig, QuantileGrid, TailConfig};
use crate::error::{Error, Result};
use crate::predict::{
    fit_additive_poly, fit_mcp_additive, fit_ols, wrap_external, BasisConfig, ExternalPredictions,
    LambdaSelection, McpConfig, Predictor,
};

/// Flags shared by every subcommand. A JSON config file uses the same names.
#[derive(Debug, Clone, Default, Args, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", deny_unknown_fields, default)]
pub struct Flags {
    /// JSON file with any of these flags; command-line flags take precedence.
    #[arg(long)]
    #[serde(skip)]
    pub config: Option<PathBuf>,

    /// Dataset CSV (header y,x1,...,xp) instead of simulated data.
    #[arg(long)]
    pub data: Option<PathBuf>,

    /// Outcome model: 1..9 or `linear`.
    #[arg(long)]
    pub model: Option<String>,

    /// Error law: normal, t3, exp2, exp2-mean or cauchy.
    #[arg(long = "error")]
    pub error: Option<String>,

    #[arg(long)]
    pub n: Option<usize>,

    #[arg(long)]
    pub p: Option<usize>,

    #[arg(long)]
    pub reps: Option<usize>,

    /// Error seed; replication r uses seed + r.
    #[arg(long)]
    pub seed: Option<u64>,

    /// Seed of the feature draw, shared by all replications.
    #[arg(long)]
    pub feature_seed: Option<u64>,

    /// AR correlation base of the feature covariance.
    #[arg(long)]
    pub rho: Option<f64>,

    /// Comma-separated quantile levels.
    #[arg(long)]
    pub grid: Option<String>,

    /// ols, poly, mcp or external:PATH.
    #[arg(long)]
    pub fitter: Option<String>,

    #[arg(long)]
    pub alpha: Option<f64>,

    /// λ selection for the MCP fitter: `bic` or `cv:K` (K-fold cross-validation).
    #[arg(long)]
    pub mcp_selection: Option<String>,

    /// Exponent a in the tail fraction n^(-a).
    #[arg(long)]
    pub tau_n_rule: Option<f64>,

    /// `silverman` or a positive number.
    #[arg(long)]
    pub bandwidth: Option<String>,

    #[arg(long)]
    pub out: Option<PathBuf>,

    #[arg(long)]
    pub threads: Option<usize>,

    /// Use 500 replications.
    #[arg(long)]
    pub paper_scale: bool,

    /// Keep raw feature values instead of centering them.
    #[arg(long)]
    pub no_center: bool,
}

impl Flags {
    /// Fields set here win; unset fields fall back to `file`.
    pub fn over(self, file: Flags) -> Flags {
        Flags {
            config: self.config,
            data: self.data.or(file.data),
            model: self.model.or(file.model),
            error: self.error.or(file.error),
            n: self.n.or(file.n),
            p: self.p.or(file.p),
            reps: self.reps.or(file.reps),
            seed: self.seed.or(file.seed),
            feature_seed: self.feature_seed.or(file.feature_seed),
            rho: self.rho.or(file.rho),
            grid: self.grid.or(file.grid),
            fitter: self.fitter.or(file.fitter),
            alpha: self.alpha.or(file.alpha),
            mcp_selection: self.mcp_selection.or(file.mcp_selection),
            tau_n_rule: self.tau_n_rule.or(file.tau_n_rule),
            bandwidth: self.bandwidth.or(file.bandwidth),
            out: self.out.or(file.out),
            threads: self.threads.or(file.threads),
            paper_scale: self.paper_scale || file.paper_scale,
            no_center: self.no_center || file.no_center,
        }
    }

    pub fn with_config_file(self) -> Result<Flags> {
        match &self.config {
            None => Ok(self),
            Some(path) => {
                let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
                let file: Flags = serde_json::from_str(&text)?;
                Ok(self.over(file))
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(into = "String", try_from = "String")]
pub enum FitterSpec {
    Ols,
    AdditivePoly,
    McpAdditive,
    External(PathBuf),
}

impl fmt::Display for FitterSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            FitterSpec::Ols => f.write_str("ols"),
            FitterSpec::AdditivePoly => f.write_str("poly"),
            FitterSpec::McpAdditive => f.write_str("mcp"),
            FitterSpec::External(p) => write!(f, "external:{}", p.display()),
        }
    }
}

impl FromStr for FitterSpec {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Ok(match s {
            "ols" => FitterSpec::Ols,
            "poly" => FitterSpec::AdditivePoly,
            "mcp" => FitterSpec::McpAdditive,
            other => match other.strip_prefix("external:") {
                Some(path) if !path.is_empty() => FitterSpec::External(PathBuf::from(path)),
                _ => {
                    return Err(Error::InvalidInput(format!(
                        "unknown fitter `{other}` (expected ols, poly, mcp or external:PATH)"
                    )))
                }
            },
        })
    }
}

impl From<FitterSpec> for String {
    fn from(f: FitterSpec) -> String {
        f.to_string()
    }
}

impl TryFrom<String> for FitterSpec {
    type Error = Error;

    fn try_from(s: String) -> Result<Self> {
        s.parse()
    }
}

/// Fully resolved settings for one command.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub model: ModelSpec,
    pub error_law: ErrorLaw,
    pub n: usize,
    pub p: usize,
    pub reps: usize,
    pub seed_base: u64,
    pub feature_seed: u64,
    pub rho: f64,
    pub grid: QuantileGrid,
    pub fitter: FitterSpec,
    pub alpha: f64,
    pub kde: KdeConfig,
    pub tail: TailConfig,
    pub mcp: McpConfig,
    pub threads: Option<usize>,
    pub center: bool,
    pub data: Option<PathBuf>,
    pub out: PathBuf,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            model: ModelSpec::Numbered(1),
            error_law: ErrorLaw::StdNormal,
            n: 1000,
            p: 4,
            reps: 50,
            seed_base: 1,
            feature_seed: 5,
            rho: 0.5,
            grid: QuantileGrid::default(),
            fitter: FitterSpec::AdditivePoly,
            alpha: 0.05,
            kde: KdeConfig::default(),
            tail: TailConfig::default(),
            mcp: McpConfig::default(),
            threads: None,
            center: true,
            data: None,
            out: PathBuf::from("out"),
        }
    }
}

pub const FULL_SCALE_REPS: usize = 500;

impl ExperimentConfig {
    /// Apply `flags` on top of `base` and validate the result.
    pub fn resolve(flags: &Flags, base: ExperimentConfig) -> Result<Self> {
        let mut c = base;
        if let Some(m) = &flags.model {
            c.model = m.parse()?;
        }
        if let Some(e) = &flags.error {
            c.error_law = e.parse()?;
        }
        if let Some(n) = flags.n {
            c.n = n;
        }
        if let Some(p) = flags.p {
            c.p = p;
        }
        if flags.paper_scale {
            c.reps = FULL_SCALE_REPS;
        }
        if let Some(r) = flags.reps {
            c.reps = r;
        }
        if let Some(s) = flags.seed {
            c.seed_base = s;
        }
        if let Some(s) = flags.feature_seed {
            c.feature_seed = s;
        }
        if let Some(r) = flags.rho {
            c.rho = r;
        }
        if let Some(g) = &flags.grid {
            c.grid = g.parse()?;
        }
        if let Some(f) = &flags.fitter {
            c.fitter = f.parse()?;
        }
        if let Some(a) = flags.alpha {
            c.alpha = a;
        }
        if let Some(m) = &flags.mcp_selection {
            c.mcp.selection = parse_selection(m, c.seed_base)?;
        }
        if let Some(a) = flags.tau_n_rule {
            c.tail.tau_n_exponent = a;
        }
        if let Some(b) = &flags.bandwidth {
            c.kde.bandwidth = parse_bandwidth(b)?;
        }
        if let Some(t) = flags.threads {
            c.threads = Some(t);
        }
        if let Some(o) = &flags.out {
            c.out = o.clone();
        }
        if flags.data.is_some() {
            c.data = flags.data.clone();
        }
        c.center = !flags.no_center;
        c.validate()?;
        Ok(c)
    }

    pub fn validate(&self) -> Result<()> {
        if self.reps < 1 {
            return Err(Error::InvalidInput("reps must be >= 1".into()));
        }
        if self.data.is_none() {
            if self.n < 2 {
                return Err(Error::InvalidInput("n must be >= 2".into()));
            }
            if self.p < self.model.min_features() {
                return Err(Error::InvalidInput(format!(
                    "model {} needs p >= {} (relevant features plus noise columns), got p = {}",
                    self.model,
                    self.model.min_features(),
                    self.p
                )));
            }
            FeatureSpec::new(self.p, self.rho, self.feature_seed)?;
        }
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return Err(Error::InvalidInput(format!(
                "alpha must lie in (0,1), got {}",
                self.alpha
            )));
        }
        self.tail.validate()?;
        if self.threads == Some(0) {
            return Err(Error::InvalidInput("threads must be >= 1".into()));
        }
        Ok(())
    }

    pub fn feature_spec(&self) -> Result<FeatureSpec> {
        FeatureSpec::new(self.p, self.rho, self.feature_seed)
    }

    /// Simulated dataset for error seed `seed`.
    pub fn simulate(&self, seed: u64) -> Result<Dataset> {
        generate(
            self.model,
            &self.feature_spec()?,
            self.error_law,
            self.n,
            seed,
        )
    }

    /// The dataset named by `--data`, or a simulation at the base seed.
    pub fn load_or_simulate(&self) -> Result<Dataset> {
        match &self.data {
            Some(path) => Dataset::load(path),
            None => self.simulate(self.seed_base),
        }
    }
}

pub fn parse_bandwidth(s: &str) -> Result<BandwidthRule> {
    if s == "silverman" {
        return Ok(BandwidthRule::Silverman);
    }
    match s.parse::<f64>() {
        Ok(b) if b > 0.0 && b.is_finite() => Ok(BandwidthRule::Manual(b)),
        _ => Err(Error::InvalidInput(format!(
            "bandwidth must be `silverman` or a positive number, got `{s}`"
        ))),
    }
}

/// `bic` or `cv:K`; the fold assignment is seeded by `seed`.
pub fn parse_selection(s: &str, seed: u64) -> Result<LambdaSelection> {
    if s == "bic" {
        return Ok(LambdaSelection::Bic);
    }
    match s.strip_prefix("cv:").map(str::parse::<usize>) {
        Some(Ok(k)) if k >= 2 => Ok(LambdaSelection::KFold { k, seed }),
        _ => Err(Error::InvalidInput(format!(
            "mcp selection must be `bic` or `cv:K` with K >= 2, got `{s}`"
        ))),
    }
}

/// Tensor-product pairs for a model whose truth couples X1 and X3.
pub fn basis_for(model: Option<ModelSpec>, p: usize) -> BasisConfig {
    let pairs = match model {
        Some(m) if m.has_interaction() && p >= 3 => vec![(0, 2)],
        _ => Vec::new(),
    };
    BasisConfig::default().with_interactions(&pairs)
}

/// Fit (or load) the predictor named by `fitter`.
pub fn build_predictor(
    fitter: &FitterSpec,
    data: &Dataset,
    model: Option<ModelSpec>,
    mcp: &McpConfig,
) -> Result<Box<dyn Predictor>> {
    Ok(match fitter {
        FitterSpec::Ols => Box::new(fit_ols(data)?),
        FitterSpec::AdditivePoly => Box::new(fit_additive_poly(data, &basis_for(model, data.p()))?),
        FitterSpec::McpAdditive => {
            Box::new(fit_mcp_additive(data, &basis_for(model, data.p()), mcp)?.predictor)
        }
        FitterSpec::External(path) => {
            Box::new(wrap_external(data, ExternalPredictions::load(path)?)?)
        }
    })
}

/// Model recorded in a dataset's provenance, if any.
pub fn model_of(data: &Dataset) -> Option<ModelSpec> {
    data.meta
        .model_id
        .and_then(|id| ModelSpec::numbered(id).ok())
}

/// Center features in place; warns when the raw columns were far from centered.
pub fn center_with_warning(data: &mut Dataset, source: &Path) {
    let sds = data.x.column_sds();
    let means = data.center_features();
    let off: Vec<usize> = means
        .iter()
        .zip(&sds)
        .enumerate()
        .filter(|(_, (m, s))| m.abs() > 0.1 * s.max(f64::MIN_POSITIVE))
        .map(|(j, _)| j + 1)
        .collect();
    if !off.is_empty() {
        log::warn!(
            "{}: features {:?} were not centered; centering them so that zeroing a feature means mean imputation (use --no-center to keep raw values)",
            source.display(),
            off
        );
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn flags_override_file() {
        let file: Flags =
            serde_json::from_str(r#"{"n": 200, "model": "4", "grid": "0.5", "paper-scale": true}"#)
                .unwrap();
        let cli = Flags {
            n: Some(300),
            ..Default::default()
        };
        let merged = cli.over(file);
        assert_eq!(merged.n, Some(300));
        assert_eq!(merged.model.as_deref(), Some("4"));
        let cfg = ExperimentConfig::resolve(&merged, ExperimentConfig::default()).unwrap();
        assert_eq!(cfg.reps, FULL_SCALE_REPS);
        assert_eq!(cfg.grid.taus(), &[0.5]);
        assert_eq!(cfg.model, ModelSpec::Numbered(4));
    }

    #[test]
    fn unknown_config_keys_rejected() {
        assert!(serde_json::from_str::<Flags>(r#"{"samples": 10}"#).is_err());
    }

    #[test]
    fn fitter_strings() {
        for s in ["ols", "poly", "mcp", "external:/tmp/preds.csv"] {
            assert_eq!(s.parse::<FitterSpec>().unwrap().to_string(), s);
        }
        assert!("external:".parse::<FitterSpec>().is_err());
        assert!("gam".parse::<FitterSpec>().is_err());
    }

    #[test]
    fn validation() {
        let bad = Flags {
            model: Some("4".into()),
            p: Some(3),
            ..Default::default()
        };
        assert!(ExperimentConfig::resolve(&bad, ExperimentConfig::default()).is_err());
        let bad = Flags {
            bandwidth: Some("-1".into()),
            ..Default::default()
        };
        assert!(ExperimentConfig::resolve(&bad, ExperimentConfig::default()).is_err());
        let ok = Flags {
            bandwidth: Some("0.3".into()),
            tau_n_rule: Some(0.3),
            ..Default::default()
        };
        let cfg = ExperimentConfig::resolve(&ok, ExperimentConfig::default()).unwrap();
        assert_eq!(cfg.kde.bandwidth, BandwidthRule::Manual(0.3));
        assert_eq!(cfg.tail.tau_n_exponent, 0.3);

        let cv = Flags {
            mcp_selection: Some("cv:5".into()),
            seed: Some(9),
            ..Default::default()
        };
        let cfg = ExperimentConfig::resolve(&cv, ExperimentConfig::default()).unwrap();
        assert_eq!(cfg.mcp.selection, LambdaSelection::KFold { k: 5, seed: 9 });
        assert!(parse_selection("cv:1", 0).is_err());
        assert!(parse_selection("aic", 0).is_err());
    }

    #[test]
    fn interactions_follow_the_model() {
        assert_eq!(
            basis_for(Some(ModelSpec::Numbered(6)), 4).interactions,
            vec![(0, 2)]
        );
        assert!(basis_for(Some(ModelSpec::Numbered(1)), 4)
            .interactions
            .is_empty());
        assert!(basis_for(None, 4).interactions.is_empty());
    }
}
