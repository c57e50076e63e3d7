//! Acceptance criteria, one test per criterion.
//!
//! Every test prints a single `PASS`/`FAIL` line with the measured values
//! before asserting, so `cargo test --test acceptance -- --nocapture` gives a
//! full report even when a criterion is red. Tests take a shared lock so that
//! wall-clock limits are measured without competing workloads.

use std::sync::{Mutex, MutexGuard};
use std::time::{Duration, Instant};

use rand_distr::{Distribution, Exp1, Pareto};
use uqr_importance::cli::{
    cmd_figure_oor, figure_defaults, run_all, run_replication, summarize, ExperimentConfig,
    FitterSpec,
};
use uqr_importance::datagen::{
    generate, sample_errors, stream_rng, ErrorLaw, FeatureSpec, ModelSpec,
};
use uqr_importance::dataset::Dataset;
use uqr_importance::density::{
    empirical_quantile, hill_estimator, Kde, KdeConfig, QuantileGrid, ResidualTailModel, TailConfig,
};
use uqr_importance::importance::{
    default_shift_step, estimate_from_context, shift_oracle, FittedContext,
};
use uqr_importance::predict::{
    fit_additive_poly, fit_mcp_additive, fit_ols, BasisConfig, LambdaSelection, McpConfig,
    Predictor,
};
use uqr_importance::pruning::{gof_test, marginal_quantile_reduced, prune_multi, QuantileTest};

static SERIAL: Mutex<()> = Mutex::new(());

fn serial() -> MutexGuard<'static, ()> {
    SERIAL.lock().unwrap_or_else(|e| e.into_inner())
}

fn verdict(id: &str, ok: bool, detail: String) {
    println!(
        "[{}] criterion {id}: {detail}",
        if ok { "PASS" } else { "FAIL" }
    );
    assert!(ok, "criterion {id} failed: {detail}");
}

fn centered(model: ModelSpec, p: usize, n: usize, seed: u64) -> Dataset {
    let mut d = generate(
        model,
        &FeatureSpec::new(p, 0.5, 5).unwrap(),
        ErrorLaw::StdNormal,
        n,
        seed,
    )
    .unwrap();
    d.center_features();
    d
}

const TAUS: [f64; 5] = [0.1, 0.3, 0.5, 0.7, 0.9];

#[test]
fn c1_linear_recovery() {
    let _g = serial();
    let truth = [-2.0, 5.0, 0.0, 0.0];
    let start = Instant::now();
    let data = centered(ModelSpec::Linear, 4, 2000, 1);
    let ols = fit_ols(&data).unwrap();
    let grid = QuantileGrid::default();
    let ctx = FittedContext::new(
        &data,
        &ols,
        &grid,
        &KdeConfig::default(),
        &TailConfig::default(),
    )
    .unwrap();
    let curve = estimate_from_context(&data, &ols, &grid, &ctx);
    let (report, pruned) = prune_multi(&data, &ols, &curve, &ctx, 0.05).unwrap();
    let elapsed = start.elapsed();

    let worst = pruned
        .beta
        .iter()
        .flat_map(|row| row.iter().zip(&truth).map(|(b, t)| (b - t).abs()))
        .fold(0.0f64, f64::max);
    let zeros = pruned
        .beta
        .iter()
        .all(|row| row[2].to_bits() == 0 && row[3].to_bits() == 0);

    let mut oracle_worst = 0.0f64;
    for (k, &tau) in TAUS.iter().enumerate() {
        for j in 0..2 {
            let t = default_shift_step(&data, j);
            let o = shift_oracle(&data, &ols, tau, j, t, 200_000, 100 + k as u64).unwrap();
            oracle_worst = oracle_worst.max((curve.beta[k][j] - o).abs() / o.abs());
        }
    }
    let ok = worst <= 0.4
        && zeros
        && report.dropped == vec![2, 3]
        && elapsed < Duration::from_secs(5)
        && oracle_worst <= 0.15;
    verdict(
        "1",
        ok,
        format!(
            "max |beta - (-2,5,0,0)| = {worst:.3} (<= 0.4), x3/x4 exact zero = {zeros}, dropped {:?}, \
             oracle rel. diff {oracle_worst:.3} (<= 0.15), runtime {:.2}s (< 5s)",
            report.dropped,
            elapsed.as_secs_f64()
        ),
    );
}

fn desk(model: ModelSpec) -> ExperimentConfig {
    ExperimentConfig {
        model,
        error_law: ErrorLaw::StdNormal,
        n: 1000,
        reps: 50,
        fitter: FitterSpec::AdditivePoly,
        threads: Some(4),
        ..Default::default()
    }
}

#[test]
fn c2_table1_model1() {
    let _g = serial();
    let reference = [-5.02, -5.05, -5.07, -5.31, -4.83];
    let start = Instant::now();
    let s = run_replication(&desk(ModelSpec::Numbered(1))).unwrap();
    let elapsed = start.elapsed();
    let t = &s.table;
    let b2: Vec<f64> = (0..5).map(|k| t.mean[k][1]).collect();
    let worst = b2
        .iter()
        .zip(&reference)
        .map(|(a, b)| (a - b).abs())
        .fold(0.0f64, f64::max);
    let zero_rate = (0..5)
        .flat_map(|k| [t.exact_zero_rate[k][2], t.exact_zero_rate[k][3]])
        .fold(1.0f64, f64::min);
    let ok = worst <= 0.5
        && zero_rate >= 0.9
        && s.reps_failed == 0
        && elapsed < Duration::from_secs(600);
    verdict(
        "2",
        ok,
        format!(
            "mean beta2 {b2:.2?} vs {reference:?}, max diff {worst:.3} (<= 0.5); \
             min exact-zero rate of beta3/beta4 {zero_rate:.2} (>= 0.9); {} failed reps; runtime {:.1}s (< 600s)",
            s.reps_failed,
            elapsed.as_secs_f64()
        ),
    );
}

#[test]
fn c3_table2_model6() {
    let _g = serial();
    let s = run_replication(&desk(ModelSpec::Numbered(6))).unwrap();
    let t = &s.table;
    let b3 = t.mean[2][2];
    let sign = |v: f64| {
        if v.abs() < 0.005 {
            '0'
        } else if v > 0.0 {
            '+'
        } else {
            '-'
        }
    };
    let patterns: Vec<String> = (0..5)
        .map(|k| t.mean[k].iter().map(|&v| sign(v)).collect())
        .collect();
    let ok = (4.0..=5.0).contains(&b3) && patterns.iter().all(|p| p == "--+0");
    verdict(
        "3",
        ok,
        format!("mean beta3(0.5) = {b3:.3} in [4.0, 5.0]; sign patterns {patterns:?} (want --+0 at every tau)"),
    );
}

#[test]
fn c4_heteroscedastic_close_to_homoscedastic() {
    let _g = serial();
    let homo = run_replication(&desk(ModelSpec::Numbered(4))).unwrap();
    let hetero = run_replication(&desk(ModelSpec::Numbered(7))).unwrap();
    let mut worst = 0.0f64;
    for k in 0..5 {
        for j in 0..3 {
            worst = worst.max((homo.table.mean[k][j] - hetero.table.mean[k][j]).abs());
        }
    }
    verdict(
        "4",
        worst < 0.5,
        format!("max |mean beta_j(model 7) - mean beta_j(model 4)| over j in 1..3 and tau = {worst:.3} (< 0.5)"),
    );
}

#[test]
fn c5_out_of_range_figure() {
    let _g = serial();
    let dir = tempfile::tempdir().unwrap();
    let cfg = ExperimentConfig {
        out: dir.path().to_path_buf(),
        ..figure_defaults()
    };
    let rows = cmd_figure_oor(&cfg, &mut std::io::sink()).unwrap();
    let &(tau_min, f_min) = rows.iter().min_by(|a, b| a.1.total_cmp(&b.1)).unwrap();
    let at = |t: f64| rows.iter().find(|r| (r.0 - t).abs() < 1e-9).unwrap().1;
    let (lo, hi) = (at(0.05), at(0.95));
    let ok =
        (0.4..=0.6).contains(&tau_min) && (f_min - 0.45).abs() <= 0.08 && lo > f_min && hi > f_min;
    verdict(
        "5",
        ok,
        format!(
            "minimum {f_min:.3} at tau = {tau_min} (tau in [0.4, 0.6], value 0.45 +- 0.08); \
             f(0.05) = {lo:.3}, f(0.95) = {hi:.3} above the minimum"
        ),
    );
}

fn median(mut v: Vec<f64>) -> f64 {
    v.sort_by(f64::total_cmp);
    let m = v.len() / 2;
    if v.len().is_multiple_of(2) {
        0.5 * (v[m - 1] + v[m])
    } else {
        v[m]
    }
}

fn hill_median(draw: impl Fn(&mut rand_chacha::ChaCha8Rng) -> f64) -> f64 {
    let n = 5000;
    let tail = TailConfig::default();
    let estimates = (0..20)
        .map(|seed| {
            let mut rng = stream_rng(seed, 99);
            let v: Vec<f64> = (0..n).map(|_| draw(&mut rng)).collect();
            hill_estimator(&v, tail.tau_n(n), tail.min_exceedances)
                .unwrap()
                .gamma_hat
        })
        .collect();
    median(estimates)
}

#[test]
fn c6a_hill_pareto() {
    let _g = serial();
    let pareto = Pareto::new(1.0, 2.0).unwrap();
    let g = hill_median(|rng| pareto.sample(rng));
    verdict(
        "6a",
        (g - 0.5).abs() <= 0.1,
        format!("Pareto(gamma = 0.5): median gamma_hat = {g:.3} (0.5 +- 0.1)"),
    );
}

#[test]
fn c6b_hill_exponential() {
    let _g = serial();
    let g = hill_median(|rng| Exp1.sample(rng));
    verdict(
        "6b",
        g <= 0.15,
        format!("Exp(1): median gamma_hat = {g:.3} (<= 0.15)"),
    );
}

#[test]
fn c7_gof_size_and_power() {
    let _g = serial();
    let (alpha, tau, reps) = (0.05, 0.5, 200u64);
    let grid = QuantileGrid::new(vec![tau]).unwrap();
    let features = FeatureSpec::new(4, 0.5, 5).unwrap();
    let (mut size, mut power) = (0usize, 0usize);
    for r in 0..reps {
        let mut data = generate(
            ModelSpec::Numbered(1),
            &features,
            ErrorLaw::StdNormal,
            1000,
            1000 + r,
        )
        .unwrap();
        data.center_features();
        let poly = fit_additive_poly(&data, &BasisConfig::default()).unwrap();
        let ctx = FittedContext::new(
            &data,
            &poly,
            &grid,
            &KdeConfig::default(),
            &TailConfig::default(),
        )
        .unwrap();
        let c = &ctx.per_tau[0];
        if gof_test(&data, &poly, c).unwrap().rejects(alpha) {
            size += 1;
        }
        let reduced =
            QuantileTest::new(marginal_quantile_reduced(&data, &poly, &[1], c).unwrap(), c);
        if reduced.rejects(alpha) {
            power += 1;
        }
    }
    let (size, power) = (size as f64 / reps as f64, power as f64 / reps as f64);
    verdict(
        "7",
        size <= 0.10 && power >= 0.95,
        format!("tau = {tau}: gof rejection rate {size:.3} (<= 0.10), rejection rate with x2 zeroed {power:.3} (>= 0.95)"),
    );
}

#[test]
fn c8_high_dimensional_pruning() {
    let _g = serial();
    let base = ExperimentConfig {
        model: ModelSpec::Numbered(2),
        p: 500,
        n: 1000,
        reps: 20,
        fitter: FitterSpec::McpAdditive,
        threads: Some(4),
        ..Default::default()
    };

    // The default BIC choice usually recovers exactly {x1, x2}, leaving nothing to prune.
    let bic = run_replication(&base).unwrap();
    println!("[INFO] criterion 8 with BIC selection: prun {:?}", bic.prun);

    let mut cv = base.clone();
    cv.mcp.selection = LambdaSelection::KFold { k: 5, seed: 1 };
    let start = Instant::now();
    let results = run_all(&cv).unwrap();
    let elapsed = start.elapsed();
    let retained = results
        .iter()
        .filter(|(_, r)| {
            r.as_ref()
                .is_ok_and(|o| !o.dropped.contains(&0) && !o.dropped.contains(&1))
        })
        .count() as f64
        / cv.reps as f64;
    let s = summarize(&cv, results, elapsed.as_secs_f64()).unwrap();
    let prun: Vec<f64> = s.prun.iter().map(|p| p.unwrap()).collect();
    let ok =
        prun.iter().all(|&p| p > 0.0) && retained >= 0.9 && elapsed < Duration::from_secs(1800);
    verdict(
        "8",
        ok,
        format!(
            "5-fold CV selection: prun {prun:.3?} (> 0 at every tau); x1 and x2 both retained in {retained:.2} of reps (>= 0.9); \
             {} reps ok; runtime {:.0}s (< 1800s)",
            s.reps_ok,
            elapsed.as_secs_f64()
        ),
    );
}

fn fd_error(pred: &dyn Predictor, data: &Dataset) -> f64 {
    let mut worst = 0.0f64;
    for i in (0..data.n()).step_by(data.n() / 25) {
        let x = data.x.row(i).to_vec();
        let g = pred.gradient(&x).unwrap();
        for j in 0..x.len() {
            let h = 1e-5 * x[j].abs().max(1.0);
            let (mut up, mut dn) = (x.clone(), x.clone());
            up[j] += h;
            dn[j] -= h;
            let fd = (pred.predict(&up).unwrap() - pred.predict(&dn).unwrap()) / (2.0 * h);
            worst = worst.max((fd - g[j]).abs() / g[j].abs().max(1.0));
        }
    }
    worst
}

#[test]
fn c9_property_suites() {
    let _g = serial();
    let mut failures = Vec::new();

    let mut mass_range = (f64::INFINITY, f64::NEG_INFINITY);
    for (seed, law) in [
        (1, ErrorLaw::StdNormal),
        (2, ErrorLaw::StudentT3),
        (3, ErrorLaw::Exponential2),
    ] {
        let v = sample_errors(law, 500, seed).unwrap();
        let kde = Kde::fit(&v, &KdeConfig::default()).unwrap();
        let s = kde.sorted_values();
        let pad = 12.0 * kde.bandwidth();
        let (a, b) = (s[0] - pad, s[s.len() - 1] + pad);
        let steps = 40_000;
        let h = (b - a) / steps as f64;
        let mass = (0..=steps)
            .map(|i| if i == 0 || i == steps { 0.5 } else { 1.0 } * kde.eval(a + i as f64 * h))
            .sum::<f64>()
            * h;
        mass_range = (mass_range.0.min(mass), mass_range.1.max(mass));
    }
    if !(mass_range.0 >= 0.99 && mass_range.1 <= 1.01) {
        failures.push(format!("KDE mass {mass_range:?}"));
    }

    let v = sample_errors(ErrorLaw::Cauchy01, 999, 4).unwrap();
    let qs: Vec<f64> = (1..100)
        .map(|k| empirical_quantile(&v, k as f64 / 100.0).unwrap())
        .collect();
    if qs.windows(2).any(|w| w[0] > w[1]) {
        failures.push("quantiles not monotone".into());
    }
    let shifted: Vec<f64> = v.iter().map(|x| x + 17.25).collect();
    if (1..100).any(|k| {
        let t = k as f64 / 100.0;
        empirical_quantile(&shifted, t).unwrap() != empirical_quantile(&v, t).unwrap() + 17.25
    }) {
        failures.push("quantile location equivariance".into());
    }

    let d1 = centered(ModelSpec::Numbered(1), 4, 500, 2);
    let d6 = centered(ModelSpec::Numbered(6), 5, 500, 3);
    let d2 = centered(ModelSpec::Numbered(2), 40, 500, 4);
    let fd = [
        ("ols", fd_error(&fit_ols(&d1).unwrap(), &d1)),
        (
            "poly",
            fd_error(
                &fit_additive_poly(&d1, &BasisConfig::default()).unwrap(),
                &d1,
            ),
        ),
        (
            "poly+interaction",
            fd_error(
                &fit_additive_poly(&d6, &BasisConfig::default().with_interactions(&[(0, 2)]))
                    .unwrap(),
                &d6,
            ),
        ),
        (
            "mcp",
            fd_error(
                &fit_mcp_additive(&d2, &BasisConfig::default(), &McpConfig::default())
                    .unwrap()
                    .predictor,
                &d2,
            ),
        ),
    ];
    let fd_worst = fd.iter().map(|f| f.1).fold(0.0f64, f64::max);
    if fd_worst > 1e-4 {
        failures.push(format!("gradient vs finite differences {fd:?}"));
    }

    let poly = fit_additive_poly(&d1, &BasisConfig::default()).unwrap();
    let grid = QuantileGrid::default();
    let ctx = FittedContext::new(
        &d1,
        &poly,
        &grid,
        &KdeConfig::default(),
        &TailConfig::default(),
    )
    .unwrap();
    let curve = estimate_from_context(&d1, &poly, &grid, &ctx);
    let (report, pruned) = prune_multi(&d1, &poly, &curve, &ctx, 0.05).unwrap();
    if report.dropped.is_empty()
        || report
            .dropped
            .iter()
            .any(|&j| pruned.beta.iter().any(|r| r[j].to_bits() != 0))
    {
        failures.push(format!(
            "pruned zeros not bitwise exact (dropped {:?})",
            report.dropped
        ));
    }

    for law in [
        ErrorLaw::StdNormal,
        ErrorLaw::StudentT3,
        ErrorLaw::Exponential2,
    ] {
        let r = sample_errors(law, 1000, 5).unwrap();
        let m = ResidualTailModel::fit(&r, &KdeConfig::default(), &TailConfig::default()).unwrap();
        for fit in [m.upper(), m.lower()] {
            if fit.gamma_hat > 0.0 && fit.extrapolate(fit.threshold) != fit.density_at_threshold {
                failures.push(format!("tail anchor discontinuous for {law}"));
            }
        }
    }

    verdict(
        "9",
        failures.is_empty(),
        format!(
            "KDE mass in [{:.4}, {:.4}]; quantile monotonicity and location equivariance; \
             max gradient FD error {fd_worst:.1e} (<= 1e-4); bitwise pruned zeros; exact tail anchors; failures {failures:?}",
            mass_range.0, mass_range.1
        ),
    );
}
