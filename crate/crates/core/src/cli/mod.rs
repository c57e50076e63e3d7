//! The `uqr` command-line harness.
//!
//! Every subcommand writes its artifacts under `--out` and prints a compact
//! table to stdout. Failures exit nonzero with a one-line JSON object on stderr.

mod config;
mod replicate;

use std::ffi::OsString;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand};
use serde::Serialize;

pub use config::{
    basis_for, build_predictor, center_with_warning, model_of, parse_bandwidth, parse_selection,
    ExperimentConfig, FitterSpec, Flags, FULL_SCALE_REPS,
};
pub use replicate::{
    run_all, run_rep, run_replication, summarize, RepFailure, RepOutcome, ReplicationSummary,
    ReplicationTable,
};

use crate::datagen::ModelSpec;
use crate::dataset::Dataset;
use crate::density::{out_of_range_fraction, QuantileGrid};
use crate::error::{Error, Result};
use crate::importance::{estimate_from_context, FittedContext, ImportanceCurve};
use crate::predict::{wrap_external, ExternalPredictions, Predictor};
use crate::pruning::{prune_multi, PruningReport};

#[derive(Debug, Parser)]
#[command(
    name = "uqr",
    version,
    about = "Quantile feature importance via unconditional quantile regression"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a dataset and write it with its provenance sidecar.
    Simulate(Flags),
    /// Fit a predictor and write the unpruned importance curve.
    Importance(Flags),
    /// Importance followed by multi-τ backward elimination.
    Prune(Flags),
    /// Monte Carlo replication with a table of means and sds.
    Replicate(Flags),
    /// Out-of-range fraction of residual evaluation points on a 99-point τ grid.
    FigureOor(Flags),
}

#[derive(Serialize)]
struct ErrorReport<'a> {
    error: &'a str,
    message: String,
}

/// Parse `args` (program name first), run the command and return the exit code.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            use clap::error::ErrorKind;
            if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) {
                let _ = e.print();
                return 0;
            }
            report_error("usage", e.to_string().trim_end().to_string());
            return 2;
        }
    };
    match run(cli.command) {
        Ok(()) => 0,
        Err(e) => {
            report_error(e.kind(), e.to_string());
            1
        }
    }
}

fn report_error(kind: &str, message: String) {
    let line = serde_json::to_string(&ErrorReport {
        error: kind,
        message,
    })
    .unwrap_or_else(|_| format!("{{\"error\":\"{kind}\"}}"));
    eprintln!("{line}");
}

pub fn run(command: Command) -> Result<()> {
    let stdout = std::io::stdout();
    let mut out = stdout.lock();
    match command {
        Command::Simulate(f) => {
            cmd_simulate(&resolve(f, ExperimentConfig::default())?, &mut out).map(|_| ())
        }
        Command::Importance(f) => {
            cmd_importance(&resolve(f, ExperimentConfig::default())?, &mut out).map(|_| ())
        }
        Command::Prune(f) => {
            cmd_prune(&resolve(f, ExperimentConfig::default())?, &mut out).map(|_| ())
        }
        Command::Replicate(f) => {
            cmd_replicate(&resolve(f, ExperimentConfig::default())?, &mut out).map(|_| ())
        }
        Command::FigureOor(f) => {
            cmd_figure_oor(&resolve(f, figure_defaults())?, &mut out).map(|_| ())
        }
    }
}

fn resolve(flags: Flags, base: ExperimentConfig) -> Result<ExperimentConfig> {
    ExperimentConfig::resolve(&flags.with_config_file()?, base)
}

/// Linear design with OLS, the setting of the out-of-range figure.
pub fn figure_defaults() -> ExperimentConfig {
    ExperimentConfig {
        model: ModelSpec::Linear,
        fitter: FitterSpec::Ols,
        ..Default::default()
    }
}

fn create(dir: &Path, name: &str) -> Result<BufWriter<File>> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let path = dir.join(name);
    Ok(BufWriter::new(
        File::create(&path).map_err(|e| Error::io(&path, e))?,
    ))
}

fn write_text(dir: &Path, name: &str, text: &str) -> Result<()> {
    let mut w = create(dir, name)?;
    let path = dir.join(name);
    w.write_all(text.as_bytes())
        .map_err(|e| Error::io(&path, e))?;
    w.flush().map_err(|e| Error::io(&path, e))
}

fn echo(out: &mut dyn Write, line: std::fmt::Arguments<'_>) -> Result<()> {
    out.write_fmt(line)
        .and_then(|_| out.write_all(b"\n"))
        .map_err(|e| Error::io("<stdout>", e))
}

/// Simulate with the base seed and save `data.csv` plus its sidecar.
pub fn cmd_simulate(cfg: &ExperimentConfig, out: &mut dyn Write) -> Result<PathBuf> {
    let data = cfg.simulate(cfg.seed_base)?;
    std::fs::create_dir_all(&cfg.out).map_err(|e| Error::io(&cfg.out, e))?;
    let path = cfg.out.join("data.csv");
    data.save(&path)?;
    echo(
        out,
        format_args!(
            "wrote {} (n = {}, p = {})",
            path.display(),
            data.n(),
            data.p()
        ),
    )?;
    Ok(path)
}

/// Dataset and fitted predictor for `importance` and `prune`.
pub fn prepare(cfg: &ExperimentConfig) -> Result<(Dataset, Box<dyn Predictor>)> {
    let mut data = cfg.load_or_simulate()?;
    let model = if cfg.data.is_some() {
        model_of(&data)
    } else {
        Some(cfg.model)
    };
    if cfg.center {
        let source = cfg
            .data
            .clone()
            .unwrap_or_else(|| PathBuf::from("<simulated>"));
        center_with_warning(&mut data, &source);
    }
    let predictor: Box<dyn Predictor> = match &cfg.fitter {
        // Rows are matched after centering, so lookups see the same values.
        FitterSpec::External(path) => {
            Box::new(wrap_external(&data, ExternalPredictions::load(path)?)?)
        }
        other => build_predictor(other, &data, model, &cfg.mcp)?,
    };
    Ok((data, predictor))
}

fn print_curve(out: &mut dyn Write, curve: &ImportanceCurve) -> Result<()> {
    let p = curve.n_features();
    let mut head = format!("{:>6}", "tau");
    for j in 1..=p.min(8) {
        head.push_str(&format!(" {:>9}", format!("beta{j}")));
    }
    if p > 8 {
        head.push_str(" ...");
    }
    echo(out, format_args!("{head}"))?;
    for (tau, row) in curve.taus.taus().iter().zip(&curve.beta) {
        let mut line = format!("{tau:>6}");
        for b in row.iter().take(8) {
            line.push_str(&format!(" {b:>9.4}"));
        }
        echo(out, format_args!("{line}"))?;
    }
    Ok(())
}

pub fn cmd_importance(cfg: &ExperimentConfig, out: &mut dyn Write) -> Result<ImportanceCurve> {
    let (data, predictor) = prepare(cfg)?;
    let ctx = FittedContext::new(&data, predictor.as_ref(), &cfg.grid, &cfg.kde, &cfg.tail)?;
    let curve = estimate_from_context(&data, predictor.as_ref(), &cfg.grid, &ctx);
    curve.write_csv(create(&cfg.out, "importance.csv")?)?;
    write_text(&cfg.out, "importance.json", &curve.to_json()?)?;
    print_curve(out, &curve)?;
    Ok(curve)
}

pub fn cmd_prune(
    cfg: &ExperimentConfig,
    out: &mut dyn Write,
) -> Result<(PruningReport, ImportanceCurve)> {
    let (data, predictor) = prepare(cfg)?;
    let ctx = FittedContext::new(&data, predictor.as_ref(), &cfg.grid, &cfg.kde, &cfg.tail)?;
    let curve = estimate_from_context(&data, predictor.as_ref(), &cfg.grid, &ctx);
    let (report, pruned) = prune_multi(&data, predictor.as_ref(), &curve, &ctx, cfg.alpha)?;
    curve.write_csv(create(&cfg.out, "importance.csv")?)?;
    pruned.write_csv(create(&cfg.out, "pruned_importance.csv")?)?;
    write_text(&cfg.out, "pruned_importance.json", &pruned.to_json()?)?;
    write_text(&cfg.out, "pruning_report.json", &report.to_json()?)?;
    report.write_csv(create(&cfg.out, "pruning_matrix.csv")?, data.p())?;
    print_curve(out, &pruned)?;
    for t in &report.per_tau {
        echo(
            out,
            format_args!(
                "tau {:<5} gof p = {:.3} ({}), dropped {:?}",
                t.tau,
                t.gof.p_value,
                if t.gof_passed {
                    "passed"
                } else {
                    "failed, nothing dropped"
                },
                t.dropped.iter().map(|j| j + 1).collect::<Vec<_>>()
            ),
        )?;
    }
    echo(
        out,
        format_args!(
            "dropped at every tau: {:?}",
            report.dropped.iter().map(|j| j + 1).collect::<Vec<_>>()
        ),
    )?;
    Ok((report, pruned))
}

pub fn cmd_replicate(cfg: &ExperimentConfig, out: &mut dyn Write) -> Result<ReplicationSummary> {
    let summary = run_replication(cfg)?;
    summary.table.write_csv(create(&cfg.out, "summary.csv")?)?;
    summary.write_prun_csv(create(&cfg.out, "prun.csv")?)?;
    write_text(
        &cfg.out,
        "replicate.json",
        &serde_json::to_string_pretty(&summary)?,
    )?;
    let t = &summary.table;
    echo(
        out,
        format_args!(
            "{} replications ok, {} failed, {:.1} s",
            summary.reps_ok, summary.reps_failed, summary.wall_seconds
        ),
    )?;
    for (k, tau) in t.taus.iter().enumerate() {
        let cells: Vec<String> = (0..t.p.min(6))
            .map(|j| format!("{:>7.2} ({:.2})", t.mean[k][j], t.sd[k][j]))
            .collect();
        let prun = summary.prun[k].map_or("-".to_string(), |v| format!("{v:.1}"));
        echo(
            out,
            format_args!("tau {tau:<5} {}  prun {prun}", cells.join(" ")),
        )?;
    }
    Ok(summary)
}

/// `(τ, fraction)` pairs on τ = 0.01, ..., 0.99.
pub fn cmd_figure_oor(cfg: &ExperimentConfig, out: &mut dyn Write) -> Result<Vec<(f64, f64)>> {
    let (data, predictor) = prepare(cfg)?;
    let grid = QuantileGrid::uniform(99)?;
    let rows = grid
        .taus()
        .iter()
        .map(|&tau| Ok((tau, out_of_range_fraction(&data, predictor.as_ref(), tau)?)))
        .collect::<Result<Vec<_>>>()?;
    let mut wtr = csv::Writer::from_writer(create(&cfg.out, "figure_oor.csv")?);
    wtr.write_record(["tau", "out_of_range"])?;
    for (tau, f) in &rows {
        wtr.write_record([tau.to_string(), f.to_string()])?;
    }
    wtr.flush()
        .map_err(|e| Error::io(cfg.out.join("figure_oor.csv"), e))?;
    if let Some((tau, f)) = rows.iter().min_by(|a, b| a.1.total_cmp(&b.1)) {
        echo(
            out,
            format_args!("minimum out-of-range fraction {f:.3} at tau = {tau}"),
        )?;
    }
    for (tau, f) in rows.iter().filter(|(t, _)| {
        [0.05, 0.25, 0.5, 0.75, 0.95]
            .iter()
            .any(|g| (g - t).abs() < 1e-9)
    }) {
        echo(out, format_args!("tau {tau:<5} {f:.3}"))?;
    }
    Ok(rows)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn help_exits_zero() {
        assert_eq!(main_with_args(["uqr", "--help"]), 0);
        assert_eq!(main_with_args(["uqr", "prune", "--help"]), 0);
    }

    #[test]
    fn usage_errors_exit_nonzero() {
        assert_ne!(main_with_args(["uqr", "importance", "--bogus"]), 0);
        assert_ne!(
            main_with_args(["uqr", "simulate", "--model", "4", "--p", "3"]),
            0
        );
    }

    #[test]
    fn figure_grid_has_99_points() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = ExperimentConfig {
            n: 500,
            out: dir.path().to_path_buf(),
            ..figure_defaults()
        };
        let rows = cmd_figure_oor(&cfg, &mut std::io::sink()).unwrap();
        assert_eq!(rows.len(), 99);
        assert!((rows[0].0 - 0.01).abs() < 1e-12 && (rows[98].0 - 0.99).abs() < 1e-12);
        assert!(rows.iter().all(|(_, f)| (0.0..=1.0).contains(f)));
    }
}
