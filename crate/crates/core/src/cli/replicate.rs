//! Monte Carlo replication of the simulation benchmark.
//!
//! Replication `r` draws errors with seed `seed_base + r` on a feature matrix
//! fixed by `feature_seed`, fits the configured predictor, estimates the
//! importance curve and prunes it. Failed replications are recorded and
//! excluded from the aggregates.

use std::io::{Read, Write};
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::config::{build_predictor, ExperimentConfig, FitterSpec};
use crate::dataset::parse_f64;
use crate::error::{Error, Result};
use crate::importance::{estimate_from_context, FittedContext};
use crate::pruning::{nonzero_beyond_two, prun_metric, prune_multi};

/// Outcome of one successful replication.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RepOutcome {
    pub seed: u64,
    /// `initial[k][j]`: unpruned importance at grid point `k`.
    pub initial: Vec<Vec<f64>>,
    pub pruned: Vec<Vec<f64>>,
    pub gof_passed: Vec<bool>,
    pub dropped: Vec<usize>,
    pub seconds: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RepFailure {
    pub seed: u64,
    pub kind: String,
    pub message: String,
}

/// Run replication with error seed `seed`.
pub fn run_rep(cfg: &ExperimentConfig, seed: u64) -> Result<RepOutcome> {
    let start = Instant::now();
    let mut data = cfg.simulate(seed)?;
    if cfg.center {
        data.center_features();
    }
    let predictor = build_predictor(&cfg.fitter, &data, Some(cfg.model), &cfg.mcp)?;
    let ctx = FittedContext::new(&data, predictor.as_ref(), &cfg.grid, &cfg.kde, &cfg.tail)?;
    let curve = estimate_from_context(&data, predictor.as_ref(), &cfg.grid, &ctx);
    let (report, pruned) = prune_multi(&data, predictor.as_ref(), &curve, &ctx, cfg.alpha)?;
    Ok(RepOutcome {
        seed,
        initial: curve.beta,
        pruned: pruned.beta,
        gof_passed: report.per_tau.iter().map(|t| t.gof_passed).collect(),
        dropped: report.dropped,
        seconds: start.elapsed().as_secs_f64(),
    })
}

/// Run every replication on a pool of `cfg.threads` workers; results come back in seed order.
pub fn run_all(cfg: &ExperimentConfig) -> Result<Vec<(u64, Result<RepOutcome>)>> {
    if let FitterSpec::External(_) = cfg.fitter {
        return Err(Error::InvalidInput(
            "replication refits the model each time and cannot use an external predictor".into(),
        ));
    }
    cfg.validate()?;
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Some(t) = cfg.threads {
        builder = builder.num_threads(t);
    }
    let pool = builder
        .build()
        .map_err(|e| Error::InvalidInput(format!("cannot start worker pool: {e}")))?;
    let seeds: Vec<u64> = (0..cfg.reps as u64).map(|r| cfg.seed_base + r).collect();
    Ok(pool.install(|| seeds.par_iter().map(|&s| (s, run_rep(cfg, s))).collect()))
}

/// Mean, sd and exact-zero rate of the pruned importance per (τ, feature),
/// with columns ordered τ-major, then feature.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReplicationTable {
    pub taus: Vec<f64>,
    pub p: usize,
    pub mean: Vec<Vec<f64>>,
    pub sd: Vec<Vec<f64>>,
    pub exact_zero_rate: Vec<Vec<f64>>,
}

impl ReplicationTable {
    fn columns(&self) -> Vec<String> {
        self.taus
            .iter()
            .flat_map(|t| (1..=self.p).map(move |j| format!("b{j}@{t}")))
            .collect()
    }

    /// Header `stat,b1@τ1,...,bp@τ1,b1@τ2,...`; rows `mean`, `sd`, `exact_zero_rate`.
    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut wtr = csv::Writer::from_writer(w);
        let mut header = vec!["stat".to_string()];
        header.extend(self.columns());
        wtr.write_record(&header)?;
        for (name, m) in [
            ("mean", &self.mean),
            ("sd", &self.sd),
            ("exact_zero_rate", &self.exact_zero_rate),
        ] {
            let mut rec = vec![name.to_string()];
            rec.extend(m.iter().flatten().map(f64::to_string));
            wtr.write_record(&rec)?;
        }
        wtr.flush().map_err(|e| Error::io("<csv>", e))?;
        Ok(())
    }

    pub fn read_csv<R: Read>(r: R) -> Result<Self> {
        let mut rdr = csv::Reader::from_reader(r);
        let header = rdr.headers()?.clone();
        let mut taus: Vec<f64> = Vec::new();
        let mut p = 0;
        for col in header.iter().skip(1) {
            let (b, t) = col
                .split_once('@')
                .ok_or_else(|| Error::InvalidInput(format!("bad table column `{col}`")))?;
            let j: usize = b
                .strip_prefix('b')
                .and_then(|s| s.parse().ok())
                .ok_or_else(|| Error::InvalidInput(format!("bad table column `{col}`")))?;
            let tau = parse_f64(t)?;
            if taus.last() != Some(&tau) {
                taus.push(tau);
            }
            p = p.max(j);
        }
        if p == 0 || header.len() != 1 + taus.len() * p {
            return Err(Error::InvalidInput(
                "replication table header is malformed".into(),
            ));
        }
        let mut rows = std::collections::HashMap::new();
        for rec in rdr.records() {
            let rec = rec?;
            let vals = rec
                .iter()
                .skip(1)
                .map(parse_f64)
                .collect::<Result<Vec<_>>>()?;
            let grid: Vec<Vec<f64>> = vals.chunks(p).map(<[f64]>::to_vec).collect();
            rows.insert(rec[0].to_string(), grid);
        }
        let mut take = |name: &str| {
            rows.remove(name).ok_or_else(|| {
                Error::InvalidInput(format!("replication table lacks a `{name}` row"))
            })
        };
        Ok(Self {
            mean: take("mean")?,
            sd: take("sd")?,
            exact_zero_rate: take("exact_zero_rate")?,
            taus,
            p,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReplicationSummary {
    pub config: ExperimentConfig,
    pub reps_ok: usize,
    pub reps_failed: usize,
    pub failures: Vec<RepFailure>,
    pub table: ReplicationTable,
    /// Mean of the unpruned importance, same layout as `table.mean`.
    pub initial_mean: Vec<Vec<f64>>,
    /// prun(τ) per grid point; `None` when p ≤ 2.
    pub prun: Vec<Option<f64>>,
    pub gof_pass_rate: Vec<f64>,
    pub wall_seconds: f64,
    pub mean_rep_seconds: f64,
}

impl ReplicationSummary {
    /// Rows `tau,prun,gof_pass_rate`.
    pub fn write_prun_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut wtr = csv::Writer::from_writer(w);
        wtr.write_record(["tau", "prun", "gof_pass_rate"])?;
        for (k, tau) in self.table.taus.iter().enumerate() {
            let prun = self.prun[k].map(|v| v.to_string()).unwrap_or_default();
            wtr.write_record([tau.to_string(), prun, self.gof_pass_rate[k].to_string()])?;
        }
        wtr.flush().map_err(|e| Error::io("<csv>", e))?;
        Ok(())
    }
}

fn column_stats(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let sd = if values.len() > 1 {
        (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
    } else {
        0.0
    };
    (mean, sd)
}

/// Fold replication outcomes into a summary.
pub fn summarize(
    cfg: &ExperimentConfig,
    results: Vec<(u64, Result<RepOutcome>)>,
    wall_seconds: f64,
) -> Result<ReplicationSummary> {
    let mut ok = Vec::new();
    let mut failures = Vec::new();
    for (seed, r) in results {
        match r {
            Ok(o) => ok.push(o),
            Err(e) => failures.push(RepFailure {
                seed,
                kind: e.kind().into(),
                message: e.to_string(),
            }),
        }
    }
    if ok.is_empty() {
        return Err(Error::InvalidInput(format!(
            "all {} replications failed; first error: {}",
            failures.len(),
            failures.first().map_or("", |f| f.message.as_str())
        )));
    }
    if !failures.is_empty() {
        log::warn!(
            "{} of {} replications failed and were excluded",
            failures.len(),
            cfg.reps
        );
    }
    if ok.len() == 1 {
        log::warn!("only one successful replication; standard deviations are reported as 0");
    }
    let k_len = cfg.grid.len();
    let p = ok[0].pruned[0].len();
    let mut mean = vec![vec![0.0; p]; k_len];
    let mut sd = vec![vec![0.0; p]; k_len];
    let mut zero = vec![vec![0.0; p]; k_len];
    let mut initial_mean = vec![vec![0.0; p]; k_len];
    let reps = ok.len() as f64;
    let mut buf = Vec::with_capacity(ok.len());
    for k in 0..k_len {
        for j in 0..p {
            buf.clear();
            buf.extend(ok.iter().map(|o| o.pruned[k][j]));
            let (m, s) = column_stats(&buf);
            mean[k][j] = m;
            sd[k][j] = s;
            zero[k][j] = buf.iter().filter(|&&v| v == 0.0).count() as f64 / reps;
            initial_mean[k][j] = ok.iter().map(|o| o.initial[k][j]).sum::<f64>() / reps;
        }
    }
    let prun = (0..k_len)
        .map(|k| {
            if p <= 2 {
                return Ok(None);
            }
            let init: Vec<usize> = ok
                .iter()
                .map(|o| nonzero_beyond_two(&o.initial[k]))
                .collect();
            let fin: Vec<usize> = ok
                .iter()
                .map(|o| nonzero_beyond_two(&o.pruned[k]))
                .collect();
            prun_metric(&init, &fin, p, ok.len()).map(Some)
        })
        .collect::<Result<Vec<_>>>()?;
    let gof_pass_rate = (0..k_len)
        .map(|k| ok.iter().filter(|o| o.gof_passed[k]).count() as f64 / reps)
        .collect();
    Ok(ReplicationSummary {
        config: cfg.clone(),
        reps_ok: ok.len(),
        reps_failed: failures.len(),
        failures,
        table: ReplicationTable {
            taus: cfg.grid.taus().to_vec(),
            p,
            mean,
            sd,
            exact_zero_rate: zero,
        },
        initial_mean,
        prun,
        gof_pass_rate,
        wall_seconds,
        mean_rep_seconds: ok.iter().map(|o| o.seconds).sum::<f64>() / reps,
    })
}

pub fn run_replication(cfg: &ExperimentConfig) -> Result<ReplicationSummary> {
    let start = Instant::now();
    let results = run_all(cfg)?;
    summarize(cfg, results, start.elapsed().as_secs_f64())
}
