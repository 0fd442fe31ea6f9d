//! Monte Carlo studies: prediction fit against truncation order, and
//! tracking fit against trajectory length.
//!
//! Run `r` draws everything from `split_seed(seed, r)`, and runs are
//! collected in index order, so results do not depend on the thread count.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use rayon::prelude::*;

use crate::config::{ExperimentConfig, SystemChoice};
use crate::control::{
    increments_to_input, perturb_with_snr, solve_control, ControlProblem, IncrementVector,
    SolveReport,
};
use crate::csvio::{self, Num};
use crate::error::{Error, Result};
use crate::features::{
    build_feature_matrix, fit_score, predict_from_features, ridge_fit, ridge_fit_features,
};
use crate::sim::{
    euler_simulate, generate_dataset, simulate_random_trajectory, split_seed, LangevinParams,
};

const STREAM_PARAMS: u64 = 0;
const STREAM_TRAIN: u64 = 1;
const STREAM_TEST: u64 = 2;
const STREAM_PERTURB: u64 = 3;

/// Rayon pool honouring `SIGFLOW_THREADS` (all cores when unset).
pub fn thread_pool() -> Result<rayon::ThreadPool> {
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Ok(v) = std::env::var("SIGFLOW_THREADS") {
        let n: usize = v
            .trim()
            .parse()
            .map_err(|_| Error::Config(format!("SIGFLOW_THREADS must be an integer, got {v:?}")))?;
        builder = builder.num_threads(n);
    }
    builder
        .build()
        .map_err(|e| Error::Config(format!("cannot start thread pool: {e}")))
}

fn run_system(cfg: &ExperimentConfig, run_seed: u64) -> Result<LangevinParams> {
    match cfg.system {
        SystemChoice::Fixed(p) => Ok(p),
        SystemChoice::Random { lo, hi } => {
            LangevinParams::sample(lo, hi, split_seed(run_seed, STREAM_PARAMS))
        }
    }
}

/// Linear-interpolation quantile of sorted data.
pub fn quantile(sorted: &[f64], q: f64) -> f64 {
    let pos = q * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    sorted[lo] + (sorted[hi] - sorted[lo]) * (pos - lo as f64)
}

/// Five-number summary of the successful values of one group.
#[derive(Debug, Clone, PartialEq)]
pub struct Summary {
    pub ok: usize,
    pub failed: usize,
    pub min: f64,
    pub q25: f64,
    pub median: f64,
    pub q75: f64,
    pub max: f64,
}

impl Summary {
    pub fn of(values: impl IntoIterator<Item = Option<f64>>) -> Summary {
        let mut ok = Vec::new();
        let mut failed = 0;
        for v in values {
            match v {
                Some(v) if v.is_finite() => ok.push(v),
                _ => failed += 1,
            }
        }
        ok.sort_by(|a, b| a.total_cmp(b));
        if ok.is_empty() {
            return Summary {
                ok: 0,
                failed,
                min: f64::NAN,
                q25: f64::NAN,
                median: f64::NAN,
                q75: f64::NAN,
                max: f64::NAN,
            };
        }
        Summary {
            ok: ok.len(),
            failed,
            min: ok[0],
            q25: quantile(&ok, 0.25),
            median: quantile(&ok, 0.5),
            q75: quantile(&ok, 0.75),
            max: ok[ok.len() - 1],
        }
    }

    fn csv_fields(&self) -> String {
        format!(
            "{},{},{},{},{},{},{}",
            self.ok,
            self.failed,
            Num(self.min),
            Num(self.q25),
            Num(self.median),
            Num(self.q75),
            Num(self.max)
        )
    }
}

const SUMMARY_HEADER: &str = "n_ok,n_failed,min,q25,median,q75,max";

fn fmt_opt(v: Option<f64>) -> String {
    v.map_or_else(|| "NaN".to_string(), |v| Num(v).to_string())
}

/// Fit scores of one prediction run, one per configured order.
#[derive(Debug, Clone, PartialEq)]
pub struct PredictionRun {
    pub run: usize,
    pub params: Option<LangevinParams>,
    /// `None` when the run or this order failed.
    pub fits: Vec<Option<f64>>,
    pub error: Option<String>,
}

#[derive(Debug, Clone)]
pub struct PredictionOutcome {
    pub orders: Vec<usize>,
    pub runs: Vec<PredictionRun>,
}

impl PredictionOutcome {
    pub fn summary(&self, order_index: usize) -> Summary {
        Summary::of(self.runs.iter().map(|r| r.fits[order_index]))
    }

    pub fn failed_runs(&self) -> usize {
        self.runs
            .iter()
            .filter(|r| r.error.is_some() || r.fits.iter().any(Option::is_none))
            .count()
    }

    /// `run,M,fit`, one row per run and order.
    pub fn fits_csv(&self) -> String {
        let mut out = String::from("run,M,fit\n");
        for r in &self.runs {
            for (m, fit) in self.orders.iter().zip(&r.fits) {
                let _ = writeln!(out, "{},{},{}", r.run, m, fmt_opt(*fit));
            }
        }
        out
    }

    pub fn summary_csv(&self) -> String {
        let mut out = format!("M,{SUMMARY_HEADER}\n");
        for (k, m) in self.orders.iter().enumerate() {
            let _ = writeln!(out, "{m},{}", self.summary(k).csv_fields());
        }
        out
    }

    pub fn runs_csv(&self) -> String {
        let mut out = String::from("run,mu,theta,sigma,status\n");
        for r in &self.runs {
            let (mu, theta, sigma) = r
                .params
                .map_or((f64::NAN, f64::NAN, f64::NAN), |p| (p.mu, p.theta, p.sigma));
            let status = r.error.as_deref().unwrap_or("ok").replace([',', '\n'], ";");
            let _ = writeln!(
                out,
                "{},{},{},{},{status}",
                r.run,
                Num(mu),
                Num(theta),
                Num(sigma)
            );
        }
        out
    }
}

/// One prediction run: fresh system, training set and test input; the ridge
/// model is refitted for every order and scored on the test input.
pub fn prediction_run(cfg: &ExperimentConfig, run: usize) -> PredictionRun {
    let run_seed = split_seed(cfg.seed, run as u64);
    let mut result = PredictionRun {
        run,
        params: None,
        fits: vec![None; cfg.orders.len()],
        error: None,
    };
    let outcome = (|| -> Result<()> {
        let sys = run_system(cfg, run_seed)?;
        result.params = Some(sys);
        let spec = cfg.dataset_spec()?;
        let data = generate_dataset(&sys, &spec, split_seed(run_seed, STREAM_TRAIN))?;
        let (test_u, test_z) =
            simulate_random_trajectory(&sys, &spec, split_seed(run_seed, STREAM_TEST))
                .map_err(|e| Error::InvalidArgument(format!("test trajectory: {e}")))?;
        let max_order = *cfg.orders.iter().max().expect("validated non-empty");
        let train_features: Vec<_> = data
            .inputs()
            .iter()
            .map(|u| build_feature_matrix(&u.augment_with_time(), max_order))
            .collect();
        let test_features = build_feature_matrix(&test_u.augment_with_time(), max_order);
        for (k, &order) in cfg.orders.iter().enumerate() {
            let truncated: Vec<_> = train_features.iter().map(|f| f.truncate(order)).collect();
            let fit = ridge_fit_features(&truncated, &data, cfg.gamma).and_then(|model| {
                let z_hat = predict_from_features(&model, &test_features.truncate(order));
                fit_score(&z_hat, &test_z)
            });
            match fit {
                Ok(f) => result.fits[k] = Some(f),
                Err(e) => {
                    result.error.get_or_insert_with(|| format!("M={order}: {e}"));
                }
            }
        }
        Ok(())
    })();
    if let Err(e) = outcome {
        result.error = Some(e.to_string());
    }
    result
}

pub fn run_prediction_experiment(cfg: &ExperimentConfig) -> PredictionOutcome {
    let runs = (0..cfg.n_mc)
        .into_par_iter()
        .map(|r| prediction_run(cfg, r))
        .collect();
    PredictionOutcome {
        orders: cfg.orders.clone(),
        runs,
    }
}

/// Tracking result on one trajectory prefix.
#[derive(Debug, Clone)]
pub struct PrefixResult {
    pub fraction: f64,
    pub segments: usize,
    /// Fit of the realized system output against the desired one.
    pub fit: Option<f64>,
    pub report: Option<SolveReport>,
    pub error: Option<String>,
}

impl PrefixResult {
    /// Counted in summaries only when the solver converged and the realized
    /// output could be simulated.
    pub fn usable(&self) -> Option<f64> {
        match (&self.report, self.fit) {
            (Some(r), Some(f)) if r.converged => Some(f),
            _ => None,
        }
    }
}

#[derive(Debug, Clone)]
pub struct ControlRun {
    pub run: usize,
    pub prefixes: Vec<PrefixResult>,
    /// Desired output on the full grid.
    pub desired: Vec<f64>,
    /// Input found for the longest prefix, when solved.
    pub solution: Option<crate::paths::SampledPath>,
    pub error: Option<String>,
    pub solve_seconds: f64,
}

/// One tracking run: train on fresh data, hide a random input, warm start
/// from a noisy copy of it and solve for every configured prefix.
pub fn control_run(cfg: &ExperimentConfig, run: usize) -> ControlRun {
    let run_seed = split_seed(cfg.seed, run as u64);
    let mut result = ControlRun {
        run,
        prefixes: Vec::new(),
        desired: Vec::new(),
        solution: None,
        error: None,
        solve_seconds: 0.0,
    };
    let outcome = (|| -> Result<()> {
        let sys = run_system(cfg, run_seed)?;
        let spec = cfg.dataset_spec()?;
        let grid = spec.grid.clone();
        let data = generate_dataset(&sys, &spec, split_seed(run_seed, STREAM_TRAIN))?;
        let model = ridge_fit(&data, cfg.order, cfg.gamma)?;
        let (true_u, desired) =
            simulate_random_trajectory(&sys, &spec, split_seed(run_seed, STREAM_TEST))
                .map_err(|e| Error::InvalidArgument(format!("target trajectory: {e}")))?;
        result.desired = desired.clone();
        let u0 = true_u.value(0).to_vec();
        let truth = IncrementVector::from_path(&true_u.augment_with_time());
        let init = perturb_with_snr(&truth, &u0, cfg.snr_db, split_seed(run_seed, STREAM_PERTURB))?;

        for &fraction in &cfg.prefixes {
            let segments = ((grid.segments() as f64 * fraction).round() as usize).max(1);
            let mut prefix = PrefixResult {
                fraction,
                segments,
                fit: None,
                report: None,
                error: None,
            };
            let solved = (|| -> Result<()> {
                let sub_grid = grid.prefix(segments)?;
                let problem = ControlProblem::from_trajectory(
                    model.clone(),
                    sub_grid.clone(),
                    &desired[..=segments],
                )?;
                let start = std::time::Instant::now();
                let report = solve_control(&problem, &init.prefix(segments)?, &cfg.solver)?;
                result.solve_seconds += start.elapsed().as_secs_f64();
                let input = increments_to_input(&report.solution, &sub_grid, &u0)?;
                prefix.report = Some(report);
                let realized =
                    euler_simulate(&sys, &input.augment_with_time(), spec.z0, spec.substeps)?;
                prefix.fit = Some(fit_score(&realized, &desired[..=segments])?);
                if segments == grid.segments() {
                    result.solution = Some(input);
                }
                Ok(())
            })();
            if let Err(e) = solved {
                prefix.error = Some(e.to_string());
            }
            result.prefixes.push(prefix);
        }
        Ok(())
    })();
    if let Err(e) = outcome {
        result.error = Some(e.to_string());
    }
    result
}

#[derive(Debug, Clone)]
pub struct ControlOutcome {
    pub prefixes: Vec<f64>,
    pub runs: Vec<ControlRun>,
}

impl ControlOutcome {
    pub fn summary(&self, prefix_index: usize) -> Summary {
        Summary::of(self.runs.iter().map(|r| {
            r.prefixes
                .get(prefix_index)
                .and_then(PrefixResult::usable)
        }))
    }

    pub fn failed_runs(&self) -> usize {
        self.runs
            .iter()
            .filter(|r| {
                r.error.is_some()
                    || r.prefixes.len() != self.prefixes.len()
                    || r.prefixes.iter().any(|p| p.usable().is_none())
            })
            .count()
    }

    /// `run,fraction,segments,fit,objective,iterations,converged,grad_norm`.
    pub fn fits_csv(&self) -> String {
        let mut out =
            String::from("run,fraction,segments,fit,objective,iterations,converged,grad_norm\n");
        for r in &self.runs {
            if r.prefixes.is_empty() {
                for f in &self.prefixes {
                    let _ = writeln!(out, "{},{f},0,NaN,NaN,0,false,NaN", r.run);
                }
                continue;
            }
            for p in &r.prefixes {
                let (obj, iters, conv, grad) = p.report.as_ref().map_or(
                    (f64::NAN, 0, false, f64::NAN),
                    |rep| (rep.objective, rep.iterations, rep.converged, rep.gradient_norm),
                );
                let _ = writeln!(
                    out,
                    "{},{},{},{},{},{iters},{conv},{}",
                    r.run,
                    Num(p.fraction),
                    p.segments,
                    fmt_opt(p.fit),
                    Num(obj),
                    Num(grad)
                );
            }
        }
        out
    }

    pub fn summary_csv(&self) -> String {
        let mut out = format!("fraction,{SUMMARY_HEADER}\n");
        for (k, f) in self.prefixes.iter().enumerate() {
            let _ = writeln!(out, "{f},{}", self.summary(k).csv_fields());
        }
        out
    }

    pub fn runs_csv(&self) -> String {
        let mut out = String::from("run,status\n");
        for r in &self.runs {
            let status = r
                .error
                .clone()
                .or_else(|| r.prefixes.iter().find_map(|p| p.error.clone()))
                .unwrap_or_else(|| "ok".into())
                .replace([',', '\n'], ";");
            let _ = writeln!(out, "{},{status}", r.run);
        }
        out
    }

    pub fn mean_solve_seconds(&self) -> f64 {
        let solves: usize = self.runs.iter().map(|r| r.prefixes.len()).sum();
        let total: f64 = self.runs.iter().map(|r| r.solve_seconds).sum();
        if solves == 0 {
            0.0
        } else {
            total / solves as f64
        }
    }
}

pub fn run_control_experiment(cfg: &ExperimentConfig) -> ControlOutcome {
    let runs = (0..cfg.n_mc)
        .into_par_iter()
        .map(|r| control_run(cfg, r))
        .collect();
    ControlOutcome {
        prefixes: cfg.prefixes.clone(),
        runs,
    }
}

fn ensure_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))
}

/// Writes `prediction_fits.csv`, `prediction_summary.csv` and
/// `prediction_runs.csv` into `dir`.
pub fn write_prediction_outputs(dir: &Path, outcome: &PredictionOutcome) -> Result<Vec<PathBuf>> {
    ensure_dir(dir)?;
    let files = [
        ("prediction_fits.csv", outcome.fits_csv()),
        ("prediction_summary.csv", outcome.summary_csv()),
        ("prediction_runs.csv", outcome.runs_csv()),
    ];
    let mut written = Vec::new();
    for (name, text) in files {
        let path = dir.join(name);
        csvio::write_text(&path, &text)?;
        written.push(path);
    }
    Ok(written)
}

/// Writes `control_fits.csv`, `control_summary.csv`, `control_runs.csv`,
/// one solver log per run and prefix under `reports/`, and the full-length
/// solution inputs under `solutions/`.
pub fn write_control_outputs(dir: &Path, outcome: &ControlOutcome) -> Result<Vec<PathBuf>> {
    ensure_dir(dir)?;
    let reports = dir.join("reports");
    let solutions = dir.join("solutions");
    ensure_dir(&reports)?;
    ensure_dir(&solutions)?;
    let mut written = Vec::new();
    for (name, text) in [
        ("control_fits.csv", outcome.fits_csv()),
        ("control_summary.csv", outcome.summary_csv()),
        ("control_runs.csv", outcome.runs_csv()),
    ] {
        let path = dir.join(name);
        csvio::write_text(&path, &text)?;
        written.push(path);
    }
    for r in &outcome.runs {
        for p in &r.prefixes {
            if let Some(report) = &p.report {
                let pct = (p.fraction * 100.0).round() as u32;
                let path = reports.join(format!("run_{:04}_p{pct:03}.csv", r.run));
                csvio::write_text(&path, &csvio::format_solver_log(report))?;
                written.push(path);
            }
        }
        if let Some(u) = &r.solution {
            let path = solutions.join(format!("run_{:04}.csv", r.run));
            csvio::write_path(&path, u)?;
            written.push(path);
        }
    }
    Ok(written)
}
