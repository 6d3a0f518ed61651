use std::path::{Path, PathBuf};

use nalgebra::DMatrix;
use serde::Serialize;
use serde_json::json;
use sgd_clt::ensemble::{
    lp_bound_diagnostic, replica_sweep, run_ensemble, sampling_error_scaling, time_average_experiment,
    EnsembleConfig, EnsembleTrace, TimeAverageConfig, TimeAverageReport, LP_ORDERS,
};
use sgd_clt::io::serialize_matrix;
use sgd_clt::optimizers::{d0_admissible, limit_covariance, system_matrices};
use sgd_clt::schedules::{certify_schedule, check_vanishing_damping};
use sgd_clt::stats::{histogram_summary, whiten_and_test, NormalityReport, DEFAULT_SIGMA};
use sgd_clt::{Method, MethodSpec, Schedule};

use crate::config::ExperimentConfig;
use crate::error::CliError;
use crate::output::{num, OutputDir};

/// Certificate horizon: the run length, but never shorter than `10⁶` steps.
const CERT_HORIZON: u64 = 1_000_000;

pub fn certify(cfg: &ExperimentConfig, horizon: Option<u64>) -> Result<serde_json::Value, CliError> {
    let schedule = cfg.schedule()?;
    let horizon = horizon.unwrap_or(CERT_HORIZON.max(cfg.n_steps));
    let cert = certify_schedule(&schedule, horizon);
    let damping = match cfg.damping()? {
        Some(d) => Some(check_vanishing_damping(&schedule, &d, horizon)?),
        None => None,
    };
    Ok(json!({
        "schedule": schedule.label(),
        "horizon": horizon,
        "certificate": cert,
        "all_passed": cert.all_passed(),
        "damping_certificate": damping,
    }))
}

#[derive(Serialize)]
struct WStarReport {
    method: Method,
    #[serde(serialize_with = "serialize_matrix")]
    w_star: DMatrix<f64>,
    residual: f64,
    solver: sgd_clt::LyapunovMethod,
    #[serde(serialize_with = "serialize_matrix")]
    sigma: DMatrix<f64>,
    lambda_d: f64,
    h_d: Option<f64>,
    d0: f64,
    d0_admissible: bool,
    admissibility_rule: &'static str,
}

fn wstar_report(cfg: &ExperimentConfig) -> Result<(WStarReport, sgd_clt::Oracle, MethodSpec), CliError> {
    let oracle = cfg.oracle()?;
    let spec = cfg.method()?;
    let sigma = oracle.sigma_at_min()?;
    let sys = system_matrices(&oracle.problem, &spec)?;
    let d0 = cfg.d0();
    let admissible = d0_admissible(&sys, spec.method(), d0);
    let sol = limit_covariance(&oracle.problem, &sigma, &spec, d0)?;
    let rule = match spec.method() {
        Method::Vsgd => "d0 < 2 mu",
        Method::MsgdVanishing => "beta scaling, d0 not used",
        _ => "d0 < 2 lambda_D",
    };
    Ok((
        WStarReport {
            method: spec.method(),
            w_star: sol.w,
            residual: sol.residual,
            solver: sol.method,
            sigma,
            lambda_d: sys.lambda_d,
            h_d: sys.h_d,
            d0,
            d0_admissible: admissible,
            admissibility_rule: rule,
        },
        oracle,
        spec,
    ))
}

pub fn wstar(cfg: &ExperimentConfig) -> Result<serde_json::Value, CliError> {
    let (report, _, _) = wstar_report(cfg)?;
    if !report.d0_admissible {
        return Err(CliError::Numeric(format!("d0 = {} is not admissible ({})", report.d0, report.admissibility_rule)));
    }
    Ok(serde_json::to_value(report)?)
}

#[derive(Serialize)]
struct NormalityRow {
    k: u64,
    empirical: NormalityReport,
    scaled_w_star: NormalityReport,
}

pub struct RunOptions {
    pub check: bool,
    pub out: Option<PathBuf>,
}

pub fn run(config_path: &Path, opts: &RunOptions) -> Result<PathBuf, CliError> {
    let config_text = std::fs::read(config_path).map_err(|e| CliError::Config(format!("{}: {e}", config_path.display())))?;
    let cfg = ExperimentConfig::load(config_path)?;
    let schedule = cfg.schedule()?;
    let spec = cfg.method()?;

    // surface regime errors before any simulation
    if cfg.outputs.time_average.is_some() {
        if let Some(a) = schedule.exponent() {
            if a > 0.5 {
                return Err(sgd_clt::ensemble::EnsembleError::WrongRegime(a).into());
            }
        }
        if spec.method() != Method::Vsgd {
            return Err(CliError::Config("time_average is defined for vsgd only".into()));
        }
    }

    let out_root = opts
        .out
        .clone()
        .or_else(|| cfg.output_dir.clone())
        .unwrap_or_else(|| PathBuf::from("out").join(&cfg.name));
    let mut out = OutputDir::create(&out_root)?;

    let cert = certify(&cfg, None)?;
    out.write_json("certificate.json", &cert)?;

    let (report, oracle, spec) = wstar_report(&cfg)?;
    let w_star = report.w_star.clone();
    out.write_json("wstar.json", &report)?;
    if !report.d0_admissible {
        return Err(CliError::Numeric(format!("d0 = {} is not admissible ({})", report.d0, report.admissibility_rule)));
    }

    let mut ens = EnsembleConfig::new(oracle.clone(), schedule.clone(), spec);
    ens.init = cfg.init(oracle.dim())?;
    ens.replicas = cfg.replicas;
    ens.n_steps = cfg.n_steps;
    ens.checkpoint_every = cfg.checkpoint_every;
    ens.master_seed = cfg.master_seed;
    ens.estimator = cfg.estimator();
    ens.keep_snapshots = cfg.outputs.normality;
    let trace = run_ensemble(&ens, &w_star)?;
    write_trace(&mut out, &trace)?;

    let mut failures = Vec::new();
    let last = trace.final_checkpoint();
    if let Some(max) = cfg.check.max_final_rel_err {
        if !(last.rel_err <= max) {
            failures.push(format!("final rel_err {} > {max}", last.rel_err));
        }
    }

    if cfg.outputs.normality {
        let rows = normality(&trace)?;
        if cfg.check.normality_final && !rows.last().is_some_and(|r| r.empirical.passed) {
            failures.push("final snapshot fails the normality test".into());
        }
        out.write_json("normality.json", &rows)?;
        let snap = trace.snapshots.as_ref().and_then(|s| s.last()).expect("snapshots kept");
        let first: Vec<f64> = snap.iter().map(|z| z[0]).collect();
        let h = histogram_summary(&first, cfg.outputs.histogram_bins)?;
        let rows: Vec<Vec<String>> = (0..h.counts.len())
            .map(|i| vec![num(h.edges[i]), num(h.edges[i + 1]), h.counts[i].to_string(), num(h.normal_density(i))])
            .collect();
        out.write_csv("histogram.csv", &["bin_lo", "bin_hi", "count", "normal_density"], &rows)?;
    }

    if cfg.outputs.lp_diagnostic {
        let lp = LP_ORDERS.iter().map(|p| lp_bound_diagnostic(&trace, *p)).collect::<Result<Vec<_>, _>>()?;
        out.write_json("lp_bound.json", &lp)?;
    }

    if let Some(t1) = &cfg.outputs.table1 {
        let sweep = replica_sweep(&ens, &t1.replicas, &w_star)?;
        let rows: Vec<(usize, f64)> = sweep.iter().map(|(m, t)| (*m, t.final_rel_err())).collect();
        let table = sampling_error_scaling(&rows);
        let csv_rows: Vec<Vec<String>> = table
            .rows
            .iter()
            .enumerate()
            .map(|(i, r)| {
                let ratio = if i == 0 { String::new() } else { num(table.ratios[i - 1]) };
                vec![r.replicas.to_string(), num(r.rel_err), ratio]
            })
            .collect();
        out.write_csv("table1.csv", &["replicas", "rel_err", "ratio_to_previous"], &csv_rows)?;
        if let Some([lo, hi]) = cfg.check.sweep_ratio_band {
            if !(table.mean_ratio >= lo && table.mean_ratio <= hi) {
                failures.push(format!("mean sweep ratio {} outside [{lo}, {hi}]", table.mean_ratio));
            }
        }
    }

    if let Some(ta) = &cfg.outputs.time_average {
        let report = time_average(&cfg, &oracle, &schedule, ta)?;
        out.write_json("time_average.json", &report)?;
        let rows: Vec<Vec<String>> = report
            .growth
            .iter()
            .map(|g| vec![g.k.to_string(), num(g.t_k), num(g.s_k), num(g.drift_stat), num(g.rel_err)])
            .collect();
        out.write_csv("time_average.csv", &["k", "t_k", "s_k", "drift_stat", "rel_err"], &rows)?;
        let growth = report.drift_stat / report.growth[0].drift_stat;
        if let Some(max) = cfg.check.time_average_max_rel_err {
            if !(report.rel_err <= max) {
                failures.push(format!("time-average rel_err {} > {max}", report.rel_err));
            }
        }
        if let Some(min) = cfg.check.min_drift_growth {
            if !(growth >= min) {
                failures.push(format!("drift growth {growth} < {min}"));
            }
        }
        if let Some(max) = cfg.check.max_drift_growth {
            if !(growth <= max) {
                failures.push(format!("drift growth {growth} > {max}"));
            }
        }
        if let Some(max) = cfg.check.max_escaped_fraction {
            if !(report.escaped_fraction <= max) {
                failures.push(format!("escaped fraction {} > {max}", report.escaped_fraction));
            }
        }
    }

    let manifest = out.finish(&cfg.name, &config_text, cfg.master_seed)?;
    if opts.check && !failures.is_empty() {
        return Err(CliError::Check(failures));
    }
    Ok(manifest)
}

fn write_trace(out: &mut OutputDir, trace: &EnsembleTrace) -> Result<(), CliError> {
    let rows: Vec<Vec<String>> = trace
        .checkpoints
        .iter()
        .map(|c| vec![c.k.to_string(), num(c.scale), num(c.rel_err), num(sgd_clt::linalg::frob(&c.v)), num(c.mean.norm())])
        .collect();
    out.write_csv("trace.csv", &["k", "scale_k", "rel_err", "frob_Vk", "mean_norm"], &rows)?;
    let last = trace.final_checkpoint();
    out.write_json(
        "final.json",
        &json!({
            "checkpoint": last,
            "w_star": sgd_clt::io::matrix_rows(&trace.w_star),
            "scale_rule": trace.scale_rule,
            "estimator": trace.estimator,
            "replicas": trace.replicas,
            "failed_replicas": trace.failed_replicas,
            "degenerate": trace.degenerate,
        }),
    )
}

fn normality(trace: &EnsembleTrace) -> Result<Vec<NormalityRow>, CliError> {
    let snaps = trace.snapshots.as_ref().expect("snapshots kept");
    trace
        .checkpoints
        .iter()
        .zip(snaps)
        .map(|(c, snap)| {
            Ok(NormalityRow {
                k: c.k,
                empirical: whiten_and_test(snap, &c.v, DEFAULT_SIGMA)?,
                scaled_w_star: whiten_and_test(snap, &(&trace.w_star * c.scale), DEFAULT_SIGMA)?,
            })
        })
        .collect()
}

fn time_average(
    cfg: &ExperimentConfig,
    oracle: &sgd_clt::Oracle,
    schedule: &Schedule,
    ta: &crate::config::TimeAverageSpec,
) -> Result<TimeAverageReport, CliError> {
    let tcfg = TimeAverageConfig {
        oracle: oracle.clone(),
        schedule: schedule.clone(),
        init: cfg.init(oracle.dim())?,
        replicas: cfg.replicas,
        n_steps: cfg.n_steps,
        checkpoints: ta.checkpoints.clone(),
        master_seed: sgd_clt::ensemble::derive_seed(cfg.master_seed, 0x7A),
        escape_radius: ta.escape_radius,
    };
    Ok(time_average_experiment(&tcfg)?)
}
