use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use sigflow::config::{ExperimentConfig, SystemChoice};
use sigflow::control::{
    increments_to_input, predicted_trajectory, solve_control, ControlProblem, IncrementVector,
};
use sigflow::csvio::{self, Num};
use sigflow::experiment::{self, thread_pool};
use sigflow::features::{fit_score, predict_outputs, ridge_fit};
use sigflow::signature::path_signature;
use sigflow::sim::{generate_dataset, split_seed, LangevinParams};
use sigflow::{Error, Result};

#[derive(Parser)]
#[command(name = "sigflow", version, about = "Signature-based prediction and tracking control")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// Experiment configuration (`key = value` lines).
    #[arg(long)]
    config: PathBuf,
    /// Overrides the `seed` key.
    #[arg(long)]
    seed: Option<u64>,
    /// Overrides the `out_dir` key.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Print the truncated signature of `path` at `order`.
    Sig(Common),
    /// Simulate a training dataset into `<out>/dataset`.
    Generate(Common),
    /// Fit a model on `dataset` and save it as `<out>/model.csv`.
    Train(Common),
    /// Apply `model` to `input`.
    Predict(Common),
    /// Solve one tracking problem for `target` with `model`.
    Control(Common),
    /// Prediction fit against truncation order over `n_mc` random systems.
    McPredict(Common),
    /// Tracking fit against trajectory length over `n_mc` runs.
    McControl(Common),
}

fn load(common: &Common) -> Result<(ExperimentConfig, PathBuf)> {
    let mut cfg = ExperimentConfig::from_file(&common.config)?;
    if let Some(seed) = common.seed {
        cfg.seed = seed;
    }
    if let Some(out) = &common.out {
        cfg.out_dir = out.clone();
    }
    let out = cfg.out_dir.clone();
    Ok((cfg, out))
}

fn ensure_dir(dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::Io {
        path: dir.to_path_buf(),
        source: e,
    })
}

fn cmd_sig(common: &Common) -> Result<bool> {
    let (cfg, out) = load(common)?;
    let path = csvio::read_path(cfg.require_file("path", &cfg.path)?)?;
    let sig = path_signature(&path.augment_with_time(), cfg.order);
    let text = csvio::format_signature(&sig);
    print!("{text}");
    if common.out.is_some() {
        ensure_dir(&out)?;
        csvio::write_text(&out.join("signature.csv"), &text)?;
    }
    Ok(true)
}

fn fixed_or_sampled(cfg: &ExperimentConfig) -> Result<LangevinParams> {
    match cfg.system {
        SystemChoice::Fixed(p) => Ok(p),
        SystemChoice::Random { lo, hi } => LangevinParams::sample(lo, hi, split_seed(cfg.seed, 0)),
    }
}

fn cmd_generate(common: &Common) -> Result<bool> {
    let (cfg, out) = load(common)?;
    let sys = fixed_or_sampled(&cfg)?;
    let data = generate_dataset(&sys, &cfg.dataset_spec()?, split_seed(cfg.seed, 1))?;
    let files = csvio::write_dataset(&out.join("dataset"), &data)?;
    eprintln!(
        "wrote {} trajectories (mu = {}, theta = {}, sigma = {})",
        files.len(),
        sys.mu,
        sys.theta,
        sys.sigma
    );
    Ok(true)
}

fn cmd_train(common: &Common) -> Result<bool> {
    let (cfg, out) = load(common)?;
    let data = csvio::read_dataset(cfg.require_file("dataset", &cfg.dataset)?)?;
    let model = ridge_fit(&data, cfg.order, cfg.gamma)?;
    ensure_dir(&out)?;
    csvio::write_model(&out.join("model.csv"), &model)?;
    let mut fits = String::from("trajectory,fit\n");
    for (m, (u, z)) in data.inputs().iter().zip(data.outputs()).enumerate() {
        let z_hat = predict_outputs(&model, &u.augment_with_time())?;
        let fit = fit_score(&z_hat, z).map_or(f64::NAN, |f| f);
        let _ = writeln!(fits, "{m},{}", Num(fit));
    }
    csvio::write_text(&out.join("train_fits.csv"), &fits)?;
    Ok(true)
}

fn cmd_predict(common: &Common) -> Result<bool> {
    let (cfg, out) = load(common)?;
    let model = csvio::read_model(cfg.require_file("model", &cfg.model)?)?;
    let input_file = cfg.require_file("input", &cfg.input)?;
    // Trajectory files (with a `z` column) also report the fit.
    let (u, reference) = match csvio::read_trajectory(input_file) {
        Ok((u, z)) => (u, Some(z)),
        Err(_) => (csvio::read_path(input_file)?, None),
    };
    let z_hat = predict_outputs(&model, &u.augment_with_time())?;
    let text = csvio::format_target(u.grid(), &z_hat);
    ensure_dir(&out)?;
    csvio::write_text(&out.join("prediction.csv"), &text)?;
    print!("{text}");
    if let Some(z) = reference {
        let fit = fit_score(&z_hat, &z)?;
        csvio::write_text(&out.join("prediction_fit.csv"), &format!("fit\n{}\n", Num(fit)))?;
        eprintln!("fit = {fit}");
    }
    Ok(true)
}

fn cmd_control(common: &Common) -> Result<bool> {
    let (cfg, out) = load(common)?;
    let model = csvio::read_model(cfg.require_file("model", &cfg.model)?)?;
    let (grid, desired) = csvio::read_target(cfg.require_file("target", &cfg.target)?)?;
    let u0 = cfg.u0.clone().unwrap_or_else(|| vec![0.0; model.channels]);
    let init = match &cfg.init {
        Some(_) => {
            let u = csvio::read_path(cfg.require_file("init", &cfg.init)?)?;
            IncrementVector::from_path(&u.augment_with_time())
        }
        None => IncrementVector::zeros(&grid, model.channels),
    };
    let problem = ControlProblem::from_trajectory(model.clone(), grid.clone(), &desired)?;
    let start = std::time::Instant::now();
    let report = solve_control(&problem, &init, &cfg.solver)?;
    let elapsed = start.elapsed();
    ensure_dir(&out)?;
    let input = increments_to_input(&report.solution, &grid, &u0)?;
    csvio::write_path(&out.join("control_input.csv"), &input)?;
    csvio::write_text(&out.join("control_report.csv"), &csvio::format_solver_log(&report))?;
    let predicted = predicted_trajectory(&model, &report.solution);
    csvio::write_text(
        &out.join("control_predicted.csv"),
        &csvio::format_target(&grid, &predicted),
    )?;
    eprintln!(
        "objective = {}, iterations = {}, converged = {}, solve time = {:.3} ms",
        report.objective,
        report.iterations,
        report.converged,
        elapsed.as_secs_f64() * 1e3
    );
    Ok(report.converged)
}

fn cmd_mc_predict(common: &Common) -> Result<bool> {
    let (cfg, out) = load(common)?;
    let outcome = thread_pool()?.install(|| experiment::run_prediction_experiment(&cfg));
    experiment::write_prediction_outputs(&out, &outcome)?;
    for (k, m) in outcome.orders.iter().enumerate() {
        let s = outcome.summary(k);
        eprintln!("M = {m}: median fit {:.2} ({} ok, {} failed)", s.median, s.ok, s.failed);
    }
    Ok(outcome.failed_runs() == 0)
}

fn cmd_mc_control(common: &Common) -> Result<bool> {
    let (cfg, out) = load(common)?;
    let outcome = thread_pool()?.install(|| experiment::run_control_experiment(&cfg));
    experiment::write_control_outputs(&out, &outcome)?;
    for (k, f) in outcome.prefixes.iter().enumerate() {
        let s = outcome.summary(k);
        eprintln!(
            "prefix {:.0}%: median fit {:.2} ({} ok, {} failed)",
            f * 100.0,
            s.median,
            s.ok,
            s.failed
        );
    }
    eprintln!(
        "mean solve time {:.3} ms",
        outcome.mean_solve_seconds() * 1e3
    );
    Ok(outcome.failed_runs() == 0)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Sig(c) => cmd_sig(c),
        Command::Generate(c) => cmd_generate(c),
        Command::Train(c) => cmd_train(c),
        Command::Predict(c) => cmd_predict(c),
        Command::Control(c) => cmd_control(c),
        Command::McPredict(c) => cmd_mc_predict(c),
        Command::McControl(c) => cmd_mc_control(c),
    };
    match result {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(2),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
