mod common;

use common::*;
use sigflow::control::{
    control_jacobian, control_residual, increments_to_input, modified_feature_matrix,
    perturb_with_snr, predicted_trajectory, solve_control, ControlProblem, IncrementVector,
    SolverOptions,
};
use sigflow::features::{build_feature_matrix, predict_outputs, ridge_fit, SigModel};
use sigflow::paths::TimeGrid;
use sigflow::sim::{
    euler_simulate, generate_dataset, random_piecewise_input, DatasetSpec, LangevinParams,
};

fn grid(segments: usize) -> TimeGrid {
    TimeGrid::uniform(segments as f64 * 0.05, 0.05).unwrap()
}

fn trained_model(segments: usize, order: usize, seed: u64) -> SigModel {
    let spec = DatasetSpec {
        grid: grid(segments),
        n_train: 40,
        input_lo: 0.0,
        input_hi: 3.0,
        z0: 0.0,
        substeps: 1,
    };
    let sys = LangevinParams::new(1.0, 1.0, 1.0).unwrap();
    let data = generate_dataset(&sys, &spec, seed).unwrap();
    ridge_fit(&data, order, 1e-8).unwrap()
}

fn random_increments(segments: usize, seed: u64) -> IncrementVector {
    let u = random_piecewise_input(&grid(segments), 1, 0.0, 3.0, seed).unwrap();
    IncrementVector::from_path(&u.augment_with_time())
}

fn with_inputs(delta: &IncrementVector, x: &[f64]) -> IncrementVector {
    IncrementVector::new(delta.time_deltas.clone(), x.to_vec()).unwrap()
}

#[test]
fn modified_rows_are_differences_of_feature_rows() {
    let delta = random_increments(12, 1);
    let u = increments_to_input(&delta, &grid(12), &[0.0]).unwrap();
    let plain = build_feature_matrix(&u.augment_with_time(), 3);
    let modified = modified_feature_matrix(&delta, 3);
    for j in 0..plain.rows() {
        let prev = if j == 0 { vec![0.0; plain.cols()] } else { plain.row(j - 1) };
        for (k, (a, b)) in modified.row(j).iter().zip(plain.row(j)).enumerate() {
            let diff = b - prev[k];
            assert!((a - diff).abs() <= 1e-12 * diff.abs().max(1.0), "row {j} col {k}");
        }
    }
}

#[test]
fn residual_at_true_input_is_the_one_step_prediction_error() {
    let model = trained_model(20, 4, 2);
    let sys = LangevinParams::new(1.0, 1.0, 1.0).unwrap();
    let u = random_piecewise_input(&grid(20), 1, 0.0, 3.0, 99).unwrap();
    let x = u.augment_with_time();
    let z = euler_simulate(&sys, &x, 0.0, 1).unwrap();
    let zhat = predict_outputs(&model, &x).unwrap();
    let p = ControlProblem::from_trajectory(model, grid(20), &z).unwrap();
    let r = control_residual(&p, &IncrementVector::from_path(&x)).unwrap();
    for j in 1..z.len() {
        let expect = (z[j] - z[j - 1]) - (zhat[j] - zhat[j - 1]);
        assert!((r[j - 1] - expect).abs() <= 1e-10, "step {j}");
    }
}

#[test]
fn model_generated_target_has_zero_residual() {
    let model = trained_model(10, 3, 3);
    let delta = random_increments(10, 4);
    let target = modified_feature_matrix(&delta, 3).apply(&model.beta);
    let p = ControlProblem::new(model, target, grid(10)).unwrap();
    assert!(max_abs(control_residual(&p, &delta).unwrap()) <= 1e-12);
}

#[test]
fn extended_precision_residual_agrees_with_the_library() {
    let n = 20;
    let model = trained_model(n, 4, 5);
    let p = ControlProblem::new(model, vec![0.01; n], grid(n)).unwrap();
    let delta = random_increments(n, 100);
    let inputs: Vec<Dd> = delta.input_deltas.iter().map(|&v| Dd::new(v)).collect();
    let oracle = dd_residual(&p.target, &p.model.beta, &delta.time_deltas, &inputs, 1, 4);
    let lib = control_residual(&p, &delta).unwrap();
    for (a, b) in lib.iter().zip(&oracle) {
        assert!((a - b.hi).abs() <= 1e-10 * b.hi.abs().max(1.0));
    }
}

// The differences are taken in double-double arithmetic so that rounding in
// the residual does not swamp small entries at this step size.
#[test]
fn jacobian_matches_central_differences() {
    let n = 20;
    let model = trained_model(n, 4, 5);
    let target = vec![0.01; n];
    let p = ControlProblem::new(model, target, grid(n)).unwrap();
    let mut worst: f64 = 0.0;
    for point in 0..10 {
        let delta = random_increments(n, 100 + point);
        let jac = control_jacobian(&p, &delta).unwrap();
        let fd = dd_jacobian(
            &p.target,
            &p.model.beta,
            &delta.time_deltas,
            &delta.input_deltas,
            1,
            4,
            1e-6,
        );
        for i in 0..n {
            for k in 0..n {
                let (a, b) = (jac[(i, k)], fd[(i, k)]);
                if b.abs() > 1e-8 {
                    worst = worst.max((a - b).abs() / b.abs());
                } else {
                    assert!((a - b).abs() <= 1e-10, "entry ({i}, {k}): {a} vs {b}");
                }
            }
        }
    }
    assert!(worst <= 1e-6, "worst relative error {worst}");
}

#[test]
fn residual_is_causal() {
    let n = 15;
    let model = trained_model(n, 4, 6);
    let p = ControlProblem::new(model, vec![0.0; n], grid(n)).unwrap();
    let delta = random_increments(n, 7);
    let base = control_residual(&p, &delta).unwrap();
    let jac = control_jacobian(&p, &delta).unwrap();
    for k in 0..n {
        let mut x = delta.input_deltas.clone();
        x[k] += 0.7;
        let moved = control_residual(&p, &with_inputs(&delta, &x)).unwrap();
        for j in 0..k {
            assert_eq!(moved[j], base[j], "row {j} moved by increment {k}");
            assert_eq!(jac[(j, k)], 0.0);
        }
    }
}

#[test]
fn solver_stays_at_a_model_consistent_point() {
    let model = trained_model(20, 4, 8);
    let delta = random_increments(20, 9);
    let target = modified_feature_matrix(&delta, 4).apply(&model.beta);
    let p = ControlProblem::new(model, target, grid(20)).unwrap();
    let report = solve_control(&p, &delta, &SolverOptions::default()).unwrap();
    assert!(report.iterations <= 1);
    assert!(report.objective <= 1e-16);
    assert!(report.converged);
    for (a, b) in report.solution.input_deltas.iter().zip(&delta.input_deltas) {
        assert!((a - b).abs() <= 1e-12);
    }
}

#[test]
fn accepted_steps_never_increase_the_objective() {
    let model = trained_model(20, 4, 10);
    let sys = LangevinParams::new(1.0, 1.0, 1.0).unwrap();
    let u = random_piecewise_input(&grid(20), 1, 0.0, 3.0, 11).unwrap();
    let z = euler_simulate(&sys, &u.augment_with_time(), 0.0, 1).unwrap();
    let p = ControlProblem::from_trajectory(model, grid(20), &z).unwrap();
    let init = IncrementVector::zeros(&grid(20), 1);
    let start = sq_norm(&control_residual(&p, &init).unwrap());
    let report = solve_control(&p, &init, &SolverOptions::default()).unwrap();
    assert!(report.objective <= start);
    for w in report.history.windows(2) {
        assert!(w[1].objective <= w[0].objective);
    }
    assert!(report.objective >= 0.0);
}

#[test]
fn predicted_trajectory_telescopes_to_predict_outputs() {
    let model = trained_model(20, 4, 12);
    let delta = random_increments(20, 13);
    let via_rows = predicted_trajectory(&model, &delta);
    let u = increments_to_input(&delta, &grid(20), &[1.3]).unwrap();
    let direct = predict_outputs(&model, &u.augment_with_time()).unwrap();
    for (a, b) in via_rows.iter().zip(&direct) {
        assert!((a - b).abs() <= 1e-10 * b.abs().max(1.0));
    }
}

#[test]
fn perturbation_realizes_the_requested_snr() {
    let delta = random_increments(20, 14);
    let u0 = [1.5];
    let clean = increments_to_input(&delta, &grid(20), &u0).unwrap();
    let clean: Vec<f64> = (0..clean.grid().len()).map(|j| clean.value(j)[0]).collect();
    let mut snr: Vec<f64> = (0..100)
        .map(|seed| {
            let noisy = perturb_with_snr(&delta, &u0, 3.5, seed).unwrap();
            let noisy = increments_to_input(&noisy, &grid(20), &u0).unwrap();
            let noise: f64 = (0..clean.len())
                .map(|j| (noisy.value(j)[0] - clean[j]).powi(2))
                .sum();
            let signal: f64 = clean.iter().map(|v| v * v).sum();
            10.0 * (signal / noise).log10()
        })
        .collect();
    snr.sort_by(f64::total_cmp);
    let median = 0.5 * (snr[49] + snr[50]);
    assert!((median - 3.5).abs() <= 0.5, "median SNR {median}");
    assert_eq!(
        perturb_with_snr(&delta, &u0, 3.5, 1).unwrap(),
        perturb_with_snr(&delta, &u0, 3.5, 1).unwrap()
    );
    assert_ne!(
        perturb_with_snr(&delta, &u0, 3.5, 1).unwrap(),
        perturb_with_snr(&delta, &u0, 3.5, 2).unwrap()
    );
}

#[test]
fn bounded_solve_stays_in_the_box() {
    let n = 10;
    let model = trained_model(n, 3, 15);
    let sys = LangevinParams::new(1.0, 1.0, 1.0).unwrap();
    let u = random_piecewise_input(&grid(n), 1, 0.0, 3.0, 16).unwrap();
    let z = euler_simulate(&sys, &u.augment_with_time(), 0.0, 1).unwrap();
    let p = ControlProblem::from_trajectory(model, grid(n), &z)
        .unwrap()
        .with_bounds(vec![(-0.5, 0.5); n])
        .unwrap();
    let report =
        solve_control(&p, &IncrementVector::zeros(&grid(n), 1), &SolverOptions::default()).unwrap();
    assert!(report.solution.input_deltas.iter().all(|v| (-0.5..=0.5).contains(v)));
}

fn sq_norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum()
}
