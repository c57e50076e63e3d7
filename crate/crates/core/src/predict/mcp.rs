//! MCP-penalized least squares on the additive polynomial basis, solved by
//! coordinate descent along a decreasing λ path with warm starts.
//!
//! Basis columns are centered and scaled to unit mean square, so the
//! univariate update is the firm-threshold rule of [`mcp_threshold`].

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::additive::{AdditivePolyPredictor, BasisConfig, BasisExpansion};
use crate::datagen::stream_rng;
use crate::dataset::Dataset;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum LambdaSelection {
    Bic,
    KFold { k: usize, seed: u64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct McpConfig {
    pub gamma: f64,
    /// Explicit descending path; `None` means a log grid from λ_max down to
    /// `lambda_min_ratio·λ_max` with `n_lambda` points.
    pub lambda_path: Option<Vec<f64>>,
    pub n_lambda: usize,
    pub lambda_min_ratio: f64,
    pub selection: LambdaSelection,
    /// Coordinate sweeps allowed per λ.
    pub max_iter: usize,
    pub tol: f64,
    /// The path stops once more than this many coefficients are nonzero.
    /// `None` means `n / 2`.
    pub max_active: Option<usize>,
}

impl Default for McpConfig {
    fn default() -> Self {
        Self {
            gamma: 3.0,
            lambda_path: None,
            n_lambda: 100,
            lambda_min_ratio: 0.01,
            selection: LambdaSelection::Bic,
            max_iter: 10_000,
            tol: 1e-7,
            max_active: None,
        }
    }
}

impl McpConfig {
    fn validate(&self) -> Result<()> {
        if !(self.gamma > 1.0) {
            return Err(Error::InvalidInput(format!(
                "MCP gamma must exceed 1, got {}",
                self.gamma
            )));
        }
        if let Some(path) = &self.lambda_path {
            if path.is_empty()
                || path.iter().any(|l| !(l.is_finite() && *l > 0.0))
                || path.windows(2).any(|w| w[1] >= w[0])
            {
                return Err(Error::InvalidInput(
                    "lambda path must be strictly descending positive reals".into(),
                ));
            }
        } else if self.n_lambda < 1 || !(self.lambda_min_ratio > 0.0 && self.lambda_min_ratio < 1.0)
        {
            return Err(Error::InvalidInput(
                "invalid default lambda grid settings".into(),
            ));
        }
        if let LambdaSelection::KFold { k, .. } = self.selection {
            if k < 2 {
                return Err(Error::InvalidInput("k-fold selection needs k >= 2".into()));
            }
        }
        if self.max_iter == 0 || !(self.tol > 0.0) {
            return Err(Error::InvalidInput(
                "max_iter and tol must be positive".into(),
            ));
        }
        Ok(())
    }
}

/// Minimizer of `½(b − z)² + P_MCP(b; λ, γ)` for a unit-scale coordinate.
pub fn mcp_threshold(z: f64, lambda: f64, gamma: f64) -> f64 {
    if z.abs() > gamma * lambda {
        z
    } else {
        let soft = z.signum() * (z.abs() - lambda).max(0.0);
        soft / (1.0 - 1.0 / gamma)
    }
}

fn mcp_penalty(b: f64, lambda: f64, gamma: f64) -> f64 {
    let a = b.abs();
    if a <= gamma * lambda {
        lambda * a - a * a / (2.0 * gamma)
    } else {
        0.5 * gamma * lambda * lambda
    }
}

/// Fitted MCP model plus the path diagnostics used to select it.
#[derive(Debug, Clone)]
pub struct McpFit {
    pub predictor: AdditivePolyPredictor,
    pub lambda: f64,
    pub lambda_index: usize,
    pub lambdas: Vec<f64>,
    /// BIC or mean held-out squared error per visited λ.
    pub criterion: Vec<f64>,
    pub nonzero: Vec<usize>,
}

/// Centered, unit-mean-square columns in column-major layout.
struct StdDesign {
    n: usize,
    cols: Vec<f64>,
    mean: Vec<f64>,
    scale: Vec<f64>,
}

impl StdDesign {
    fn from_raw(raw: &[f64], n_all: usize, m: usize, rows: &[usize]) -> Self {
        let n = rows.len();
        let mut cols = vec![0.0; n * m];
        let mut mean = vec![0.0; m];
        let mut scale = vec![0.0; m];
        for k in 0..m {
            let src = &raw[k * n_all..(k + 1) * n_all];
            let dst = &mut cols[k * n..(k + 1) * n];
            for (d, &i) in dst.iter_mut().zip(rows) {
                *d = src[i];
            }
            let mu = dst.iter().sum::<f64>() / n as f64;
            for d in dst.iter_mut() {
                *d -= mu;
            }
            let ms = dst.iter().map(|v| v * v).sum::<f64>() / n as f64;
            let s = ms.sqrt();
            if s > 1e-12 * (1.0 + mu.abs()) {
                for d in dst.iter_mut() {
                    *d /= s;
                }
                scale[k] = s;
            } else {
                dst.iter_mut().for_each(|d| *d = 0.0);
            }
            mean[k] = mu;
        }
        Self {
            n,
            cols,
            mean,
            scale,
        }
    }

    fn m(&self) -> usize {
        self.mean.len()
    }

    fn col(&self, k: usize) -> &[f64] {
        &self.cols[k * self.n..(k + 1) * self.n]
    }
}

struct Solver<'a> {
    x: &'a StdDesign,
    gamma: f64,
    beta: Vec<f64>,
    resid: Vec<f64>,
}

impl<'a> Solver<'a> {
    fn new(x: &'a StdDesign, yc: Vec<f64>, gamma: f64) -> Self {
        Self {
            x,
            gamma,
            beta: vec![0.0; x.m()],
            resid: yc,
        }
    }

    fn n(&self) -> f64 {
        self.x.n as f64
    }

    fn grad(&self, k: usize) -> f64 {
        dot(self.x.col(k), &self.resid) / self.n()
    }

    fn rss(&self) -> f64 {
        self.resid.iter().map(|r| r * r).sum()
    }

    fn objective(&self, lambda: f64) -> f64 {
        self.rss() / (2.0 * self.n())
            + self
                .beta
                .iter()
                .map(|&b| mcp_penalty(b, lambda, self.gamma))
                .sum::<f64>()
    }

    fn nonzero(&self) -> usize {
        self.beta.iter().filter(|&&b| b != 0.0).count()
    }

    fn update(&mut self, k: usize, lambda: f64) -> f64 {
        if self.x.scale[k] == 0.0 {
            return 0.0;
        }
        let old = self.beta[k];
        let z = self.grad(k) + old;
        let new = mcp_threshold(z, lambda, self.gamma);
        let delta = new - old;
        if delta != 0.0 {
            for (r, &v) in self.resid.iter_mut().zip(self.x.col(k)) {
                *r -= delta * v;
            }
            self.beta[k] = new;
        }
        delta.abs()
    }

    fn sweep(&mut self, idx: &[usize], lambda: f64) -> f64 {
        let mut worst: f64 = 0.0;
        for &k in idx {
            worst = worst.max(self.update(k, lambda));
        }
        worst
    }

    /// Full sweeps alternate with sweeps restricted to the active set until a
    /// full sweep moves no coefficient by more than `tol`.
    fn solve(
        &mut self,
        lambda: f64,
        max_iter: usize,
        tol: f64,
        mut trace: Option<&mut Vec<f64>>,
    ) -> Result<usize> {
        let all: Vec<usize> = (0..self.x.m()).collect();
        let mut iters = 0;
        loop {
            let change = self.sweep(&all, lambda);
            iters += 1;
            if let Some(t) = trace.as_deref_mut() {
                t.push(self.objective(lambda));
            }
            if change < tol {
                return Ok(iters);
            }
            loop {
                if iters >= max_iter {
                    return Err(Error::NonConvergence {
                        iterations: iters,
                        objective: self.objective(lambda),
                    });
                }
                let active: Vec<usize> = all
                    .iter()
                    .copied()
                    .filter(|&k| self.beta[k] != 0.0)
                    .collect();
                let change = self.sweep(&active, lambda);
                iters += 1;
                if let Some(t) = trace.as_deref_mut() {
                    t.push(self.objective(lambda));
                }
                if change < tol {
                    break;
                }
            }
        }
    }

    /// Largest violation of the stationarity conditions at `lambda`.
    #[cfg(test)]
    fn kkt_residual(&self, lambda: f64) -> f64 {
        let mut worst: f64 = 0.0;
        for k in 0..self.x.m() {
            if self.x.scale[k] == 0.0 {
                continue;
            }
            let g = self.grad(k);
            let b = self.beta[k];
            let v = if b == 0.0 {
                (g.abs() - lambda).max(0.0)
            } else {
                let dp = b.signum() * (lambda - b.abs() / self.gamma).max(0.0);
                (g - dp).abs()
            };
            worst = worst.max(v);
        }
        worst
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn centered(y: &[f64], rows: &[usize]) -> (f64, Vec<f64>) {
    let mean = rows.iter().map(|&i| y[i]).sum::<f64>() / rows.len() as f64;
    (mean, rows.iter().map(|&i| y[i] - mean).collect())
}

fn lambda_grid(cfg: &McpConfig, x: &StdDesign, yc: &[f64]) -> Vec<f64> {
    if let Some(path) = &cfg.lambda_path {
        return path.clone();
    }
    let n = x.n as f64;
    let lmax = (0..x.m())
        .map(|k| dot(x.col(k), yc).abs() / n)
        .fold(0.0_f64, f64::max)
        .max(f64::MIN_POSITIVE);
    let count = cfg.n_lambda;
    if count == 1 {
        return vec![lmax];
    }
    let (hi, lo) = (lmax.ln(), (lmax * cfg.lambda_min_ratio).ln());
    (0..count)
        .map(|i| (hi + (lo - hi) * i as f64 / (count - 1) as f64).exp())
        .collect()
}

struct PathPoint {
    beta: Vec<(usize, f64)>,
    rss: f64,
}

/// Walk the path with warm starts; stops early once the active set exceeds `max_active`.
fn run_path(
    x: &StdDesign,
    yc: Vec<f64>,
    lambdas: &[f64],
    cfg: &McpConfig,
    max_active: usize,
) -> Result<Vec<PathPoint>> {
    let scale_y = (yc.iter().map(|v| v * v).sum::<f64>() / x.n as f64)
        .sqrt()
        .max(1e-300);
    let mut solver = Solver::new(x, yc, cfg.gamma);
    let mut out = Vec::with_capacity(lambdas.len());
    for &lambda in lambdas {
        solver.solve(lambda, cfg.max_iter, cfg.tol * scale_y, None)?;
        if solver.nonzero() > max_active && !out.is_empty() {
            break;
        }
        out.push(PathPoint {
            beta: solver
                .beta
                .iter()
                .enumerate()
                .filter(|(_, &b)| b != 0.0)
                .map(|(k, &b)| (k, b))
                .collect(),
            rss: solver.rss(),
        });
    }
    Ok(out)
}

/// MCP fit on the additive basis with λ chosen by BIC or k-fold CV.
pub fn fit_mcp_additive(
    data: &Dataset,
    basis_cfg: &BasisConfig,
    cfg: &McpConfig,
) -> Result<McpFit> {
    cfg.validate()?;
    let basis = BasisExpansion::fit(&data.x, basis_cfg)?;
    let n = data.n();
    let m = basis.n_terms();
    let mut raw = vec![0.0; n * m];
    let mut buf = vec![0.0; m];
    for i in 0..n {
        basis.expand_into(data.x.row(i), &mut buf);
        for (k, &v) in buf.iter().enumerate() {
            raw[k * n + i] = v;
        }
    }
    let all_rows: Vec<usize> = (0..n).collect();
    let design = StdDesign::from_raw(&raw, n, m, &all_rows);
    let (ybar, yc) = centered(&data.y, &all_rows);
    let lambdas = lambda_grid(cfg, &design, &yc);
    let max_active = cfg.max_active.unwrap_or(n / 2).max(1);
    let path = run_path(&design, yc, &lambdas, cfg, max_active)?;

    let nonzero: Vec<usize> = path.iter().map(|pt| pt.beta.len()).collect();
    let criterion: Vec<f64> = match cfg.selection {
        LambdaSelection::Bic => path
            .iter()
            .map(|pt| {
                let nf = n as f64;
                nf * (pt.rss / nf).max(f64::MIN_POSITIVE).ln() + pt.beta.len() as f64 * nf.ln()
            })
            .collect(),
        LambdaSelection::KFold { k, seed } => cv_errors(
            &raw,
            &data.y,
            n,
            m,
            &lambdas[..path.len()],
            cfg,
            k,
            seed,
            max_active,
        )?,
    };
    let best = criterion
        .iter()
        .enumerate()
        .fold(
            (0, f64::INFINITY),
            |acc, (i, &c)| if c < acc.1 { (i, c) } else { acc },
        )
        .0;

    let mut coefs = vec![0.0; m];
    for &(k, b) in &path[best].beta {
        coefs[k] = b / design.scale[k];
    }
    let intercept = ybar
        - coefs
            .iter()
            .zip(&design.mean)
            .map(|(c, mu)| c * mu)
            .sum::<f64>();
    Ok(McpFit {
        predictor: AdditivePolyPredictor {
            basis,
            intercept,
            coefs,
            label: "mcp-additive".into(),
        },
        lambda: lambdas[best],
        lambda_index: best,
        lambdas: lambdas[..path.len()].to_vec(),
        criterion,
        nonzero,
    })
}

#[allow(clippy::too_many_arguments)]
fn cv_errors(
    raw: &[f64],
    y: &[f64],
    n: usize,
    m: usize,
    lambdas: &[f64],
    cfg: &McpConfig,
    k: usize,
    seed: u64,
    max_active: usize,
) -> Result<Vec<f64>> {
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut stream_rng(seed, 7));
    let mut sse = vec![0.0; lambdas.len()];
    let mut seen = vec![0usize; lambdas.len()];
    for fold in 0..k {
        let held: Vec<usize> = order.iter().copied().skip(fold).step_by(k).collect();
        let mut is_held = vec![false; n];
        held.iter().for_each(|&i| is_held[i] = true);
        let train: Vec<usize> = (0..n).filter(|&i| !is_held[i]).collect();
        let design = StdDesign::from_raw(raw, n, m, &train);
        let (ybar, yc) = centered(y, &train);
        let path = run_path(&design, yc, lambdas, cfg, max_active)?;
        for (l, pt) in path.iter().enumerate() {
            for &i in &held {
                let mut pred = ybar;
                for &(c, b) in &pt.beta {
                    pred += b * (raw[c * n + i] - design.mean[c]) / design.scale[c];
                }
                sse[l] += (y[i] - pred).powi(2);
            }
            seen[l] += held.len();
        }
    }
    // λ values a fold never reached count as unusable.
    Ok(sse
        .iter()
        .zip(&seen)
        .map(|(&s, &c)| if c == n { s / n as f64 } else { f64::INFINITY })
        .collect())
}
