//! Open-loop tracking by inverting a trained signature model.
//!
//! Differencing consecutive rows of the feature matrix turns the readout into
//! a model of one-step output changes, `Z_{t_j} - Z_{t_{j-1}} ~ S~_j(Delta) beta`,
//! where row `j` of `S~` depends only on the increments of segments `1..=j`.
//! The free input increments are found by Levenberg-Marquardt on
//! `||Zbar - S~(Delta) beta||^2` with an exact Jacobian.

use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};
use crate::features::{feature_count, FeatureMatrix, SigModel};
use crate::linalg;
use crate::paths::{AugmentedPath, SampledPath, TimeGrid};
use crate::signature::{chen_product_into, segment_signature, TruncatedTensorSeries};

/// Segment increments of an augmented path, split into the fixed time steps
/// and the free input increments (segment major: `input_deltas[j * d + i]`).
#[derive(Debug, Clone, PartialEq)]
pub struct IncrementVector {
    pub time_deltas: Vec<f64>,
    pub input_deltas: Vec<f64>,
}

impl IncrementVector {
    pub fn new(time_deltas: Vec<f64>, input_deltas: Vec<f64>) -> Result<Self> {
        if time_deltas.is_empty() {
            return Err(Error::InvalidArgument("no segments".into()));
        }
        if time_deltas.iter().any(|h| !(*h > 0.0)) {
            return Err(Error::InvalidArgument(
                "time increments must be positive".into(),
            ));
        }
        if input_deltas.len() % time_deltas.len() != 0 || input_deltas.is_empty() {
            return Err(Error::DimensionMismatch(format!(
                "{} input increments for {} segments",
                input_deltas.len(),
                time_deltas.len()
            )));
        }
        Ok(Self {
            time_deltas,
            input_deltas,
        })
    }

    /// All input increments zero on the given grid.
    pub fn zeros(grid: &TimeGrid, channels: usize) -> Self {
        Self {
            time_deltas: grid.steps(),
            input_deltas: vec![0.0; grid.segments() * channels],
        }
    }

    pub fn from_path(x: &AugmentedPath) -> Self {
        let d = x.input_channels();
        let mut time_deltas = Vec::with_capacity(x.grid().segments());
        let mut input_deltas = Vec::with_capacity(x.grid().segments() * d);
        for inc in x.increments() {
            time_deltas.push(inc[0]);
            input_deltas.extend_from_slice(&inc[1..]);
        }
        Self {
            time_deltas,
            input_deltas,
        }
    }

    pub fn segments(&self) -> usize {
        self.time_deltas.len()
    }

    pub fn channels(&self) -> usize {
        self.input_deltas.len() / self.time_deltas.len()
    }

    /// Full increment `[h_j, Delta_j^1, .., Delta_j^d]` of segment `j`
    /// (0-based).
    pub fn segment(&self, j: usize) -> Vec<f64> {
        let d = self.channels();
        let mut v = Vec::with_capacity(d + 1);
        v.push(self.time_deltas[j]);
        v.extend_from_slice(&self.input_deltas[j * d..(j + 1) * d]);
        v
    }

    /// The first `segments` segments.
    pub fn prefix(&self, segments: usize) -> Result<Self> {
        if segments == 0 || segments > self.segments() {
            return Err(Error::InvalidArgument(format!(
                "prefix of {segments} segments from {}",
                self.segments()
            )));
        }
        let d = self.channels();
        Ok(Self {
            time_deltas: self.time_deltas[..segments].to_vec(),
            input_deltas: self.input_deltas[..segments * d].to_vec(),
        })
    }
}

/// Rebuilds input samples from increments by cumulative summation from `u0`.
pub fn increments_to_input(
    delta: &IncrementVector,
    grid: &TimeGrid,
    u0: &[f64],
) -> Result<SampledPath> {
    let d = delta.channels();
    if !steps_match(&grid.steps(), &delta.time_deltas) {
        return Err(Error::DimensionMismatch(
            "time increments do not match the grid".into(),
        ));
    }
    if u0.len() != d {
        return Err(Error::DimensionMismatch(format!(
            "initial input has {} channels, increments have {d}",
            u0.len()
        )));
    }
    let mut values = Vec::with_capacity(grid.len() * d);
    values.extend_from_slice(u0);
    for j in 0..delta.segments() {
        for i in 0..d {
            let prev = values[j * d + i];
            values.push(prev + delta.input_deltas[j * d + i]);
        }
    }
    SampledPath::from_flat(grid.clone(), d, values)
}

/// Time increments agree up to rounding of grid differences.
fn steps_match(a: &[f64], b: &[f64]) -> bool {
    a.len() == b.len()
        && a
            .iter()
            .zip(b)
            .all(|(x, y)| (x - y).abs() <= 1e-9 * x.abs().max(y.abs()))
}

/// Zeroes the level-0 coefficient.
fn strip_unit(mut s: TruncatedTensorSeries) -> TruncatedTensorSeries {
    s.coeffs_mut()[0] = 0.0;
    s
}

/// Row-differenced feature matrix: row `j` is the signature of segment `j`
/// plus the cross terms `sum_{uv = w} S_{0,t_{j-1}}[u] S_{t_{j-1},t_j}[v]` with
/// both `u` and `v` non-empty.
pub fn modified_feature_matrix(delta: &IncrementVector, order: usize) -> FeatureMatrix {
    let d = delta.channels();
    let alphabet = d + 1;
    let cols = feature_count(d, order);
    let n = delta.segments();
    let mut matrix = DMatrix::zeros(n, cols);
    let mut prefix = TruncatedTensorSeries::unit(alphabet, order);
    let mut scratch = vec![0.0; prefix.coeffs().len()];
    for j in 0..n {
        let seg = segment_signature(&delta.segment(j), order);
        let stripped_prefix = strip_unit(prefix.clone());
        let stripped_seg = strip_unit(seg.clone());
        scratch.iter_mut().for_each(|c| *c = 0.0);
        chen_product_into(&stripped_prefix, &stripped_seg, &mut scratch);
        for c in 0..cols {
            matrix[(j, c)] = seg.coeffs()[c + 1] + scratch[c + 1];
        }
        prefix = prefix.chen_product(&seg).expect("same shape");
    }
    FeatureMatrix::from_matrix(order, d, matrix)
}

/// A tracking problem: reach the output differences `target` with the
/// dynamics encoded by `model`.
#[derive(Debug, Clone)]
pub struct ControlProblem {
    pub model: SigModel,
    /// `[Zbar_{t_1} - z0, Zbar_{t_2} - Zbar_{t_1}, ..]`, one entry per segment.
    pub target: Vec<f64>,
    pub grid: TimeGrid,
    /// Optional `(lo, hi)` box per free increment.
    pub bounds: Option<Vec<(f64, f64)>>,
}

impl ControlProblem {
    pub fn new(model: SigModel, target: Vec<f64>, grid: TimeGrid) -> Result<Self> {
        if target.len() != grid.segments() {
            return Err(Error::DimensionMismatch(format!(
                "{} target differences for {} segments",
                target.len(),
                grid.segments()
            )));
        }
        Ok(Self {
            model,
            target,
            grid,
            bounds: None,
        })
    }

    /// Builds the target differences from a desired trajectory sampled on
    /// every point of `grid` (the first sample is ignored in favour of the
    /// model's `z0`).
    pub fn from_trajectory(model: SigModel, grid: TimeGrid, desired: &[f64]) -> Result<Self> {
        if desired.len() != grid.len() {
            return Err(Error::DimensionMismatch(format!(
                "{} desired outputs for {} grid points",
                desired.len(),
                grid.len()
            )));
        }
        let mut target = Vec::with_capacity(grid.segments());
        target.push(desired[1] - model.z0);
        target.extend(desired.windows(2).skip(1).map(|w| w[1] - w[0]));
        Self::new(model, target, grid)
    }

    pub fn with_bounds(mut self, bounds: Vec<(f64, f64)>) -> Result<Self> {
        if bounds.len() != self.grid.segments() * self.model.channels {
            return Err(Error::DimensionMismatch(format!(
                "{} bounds for {} free increments",
                bounds.len(),
                self.grid.segments() * self.model.channels
            )));
        }
        if bounds.iter().any(|(lo, hi)| !(lo <= hi)) {
            return Err(Error::InvalidArgument("bound with lo > hi".into()));
        }
        self.bounds = Some(bounds);
        Ok(self)
    }

    fn check(&self, delta: &IncrementVector) -> Result<()> {
        if delta.segments() != self.target.len() || delta.channels() != self.model.channels {
            return Err(Error::DimensionMismatch(format!(
                "increments with {} segments x {} channels for a problem with {} x {}",
                delta.segments(),
                delta.channels(),
                self.target.len(),
                self.model.channels
            )));
        }
        Ok(())
    }

    fn project(&self, x: &mut [f64]) {
        if let Some(bounds) = &self.bounds {
            for (v, (lo, hi)) in x.iter_mut().zip(bounds) {
                *v = v.clamp(*lo, *hi);
            }
        }
    }

    fn feasible(&self, x: &[f64]) -> bool {
        match &self.bounds {
            Some(bounds) => x
                .iter()
                .zip(bounds)
                .all(|(v, (lo, hi))| *lo <= *v && *v <= *hi),
            None => true,
        }
    }
}

/// `Zbar - S~(Delta) beta`.
pub fn control_residual(p: &ControlProblem, delta: &IncrementVector) -> Result<Vec<f64>> {
    p.check(delta)?;
    let predicted = modified_feature_matrix(delta, p.model.order).apply(&p.model.beta);
    Ok(p.target
        .iter()
        .zip(predicted)
        .map(|(z, s)| z - s)
        .collect())
}

/// Model output trajectory implied by the increments: `z0` followed by the
/// running sum of `S~ beta`.
pub fn predicted_trajectory(model: &SigModel, delta: &IncrementVector) -> Vec<f64> {
    let steps = modified_feature_matrix(delta, model.order).apply(&model.beta);
    let mut out = Vec::with_capacity(steps.len() + 1);
    let mut z = model.z0;
    out.push(z);
    for s in steps {
        z += s;
        out.push(z);
    }
    out
}

/// Derivative of a segment signature with respect to letter `letter` of its
/// increment.
fn segment_signature_derivative(
    delta: &[f64],
    letter: usize,
    order: usize,
) -> TruncatedTensorSeries {
    let alphabet = delta.len();
    let seg = segment_signature(delta, order);
    let mut out = TruncatedTensorSeries::zeros(alphabet, order);
    let coeffs = out.coeffs_mut();
    let mut prev_start = 0;
    let mut prev_len = 1;
    for k in 1..=order {
        let start = prev_start + prev_len;
        let inv_k = 1.0 / k as f64;
        for u in 0..prev_len {
            let du = coeffs[prev_start + u];
            let su = seg.coeffs()[prev_start + u];
            for (a, &da) in delta.iter().enumerate() {
                let mut v = du * da;
                if a == letter {
                    v += su;
                }
                coeffs[start + u * alphabet + a] = v * inv_k;
            }
        }
        prev_start = start;
        prev_len *= alphabet;
    }
    out
}

/// `sum_{|w| >= 1} beta_w (a * b)[w]`.
fn contract(beta: &[f64], a: &TruncatedTensorSeries, b: &TruncatedTensorSeries, scratch: &mut [f64]) -> f64 {
    scratch.iter_mut().for_each(|c| *c = 0.0);
    chen_product_into(a, b, scratch);
    linalg::dot(&scratch[1..], beta)
}

/// Exact Jacobian of [`control_residual`] with respect to the free input
/// increments, `N x (N d)`. Column `m * d + i` holds the derivative with
/// respect to `Delta_{m+1}^{i+1}`; entries with `m > j` are zero.
pub fn control_jacobian(p: &ControlProblem, delta: &IncrementVector) -> Result<DMatrix<f64>> {
    p.check(delta)?;
    let order = p.model.order;
    let beta = &p.model.beta;
    let n = delta.segments();
    let d = delta.channels();
    let alphabet = d + 1;
    let unit = TruncatedTensorSeries::unit(alphabet, order);
    let mut scratch = vec![0.0; unit.coeffs().len()];

    let segs: Vec<TruncatedTensorSeries> = (0..n)
        .map(|j| segment_signature(&delta.segment(j), order))
        .collect();
    // left[m][i] = S_{0,t_m} * dS_{m+1}/dDelta^{i+1}
    let mut left = Vec::with_capacity(n);
    let mut prefix = unit.clone();
    for (m, seg) in segs.iter().enumerate() {
        let inc = delta.segment(m);
        let per_channel: Vec<TruncatedTensorSeries> = (1..alphabet)
            .map(|letter| {
                let ds = segment_signature_derivative(&inc, letter, order);
                prefix.chen_product(&ds).expect("same shape")
            })
            .collect();
        left.push(per_channel);
        prefix = prefix.chen_product(seg).expect("same shape");
    }

    let mut jac = DMatrix::zeros(n, n * d);
    // suffix[m] = S_{t_{m+1}, t_j} for the current row j; prev for row j - 1.
    let mut prev_suffix: Vec<TruncatedTensorSeries> = Vec::new();
    for j in 0..n {
        let mut suffix = vec![unit.clone(); j + 1];
        for m in (0..j).rev() {
            suffix[m] = segs[m + 1].chen_product(&suffix[m + 1]).expect("same shape");
        }
        for m in 0..=j {
            let right = if m == j {
                unit.clone()
            } else {
                suffix[m].sub(&prev_suffix[m]).expect("same shape")
            };
            for i in 0..d {
                jac[(j, m * d + i)] = -contract(beta, &left[m][i], &right, &mut scratch);
            }
        }
        prev_suffix = suffix;
    }
    Ok(jac)
}

/// Stopping rules and damping schedule for [`solve_control`].
#[derive(Debug, Clone, PartialEq)]
pub struct SolverOptions {
    pub max_iterations: usize,
    /// Stop when the 2-norm of the objective gradient drops below this.
    pub gradient_tolerance: f64,
    /// Stop when an accepted step is shorter than this (relative to
    /// `1 + ||x||`).
    pub step_tolerance: f64,
    pub initial_damping: f64,
    pub damping_increase: f64,
    pub damping_decrease: f64,
}

impl Default for SolverOptions {
    fn default() -> Self {
        Self {
            max_iterations: 500,
            gradient_tolerance: 1e-8,
            step_tolerance: 1e-12,
            initial_damping: 1e-3,
            damping_increase: 10.0,
            damping_decrease: 0.3,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IterationRecord {
    pub iteration: usize,
    pub objective: f64,
    pub gradient_norm: f64,
    pub damping: f64,
}

#[derive(Debug, Clone)]
pub struct SolveReport {
    pub solution: IncrementVector,
    /// `||Zbar - S~(Delta) beta||^2` at the solution.
    pub objective: f64,
    /// Number of accepted steps.
    pub iterations: usize,
    pub converged: bool,
    pub gradient_norm: f64,
    pub history: Vec<IterationRecord>,
}

/// Levenberg-Marquardt on the tracking residual, starting from `init`.
/// Bounds, when present, are enforced by projecting each trial point.
pub fn solve_control(
    p: &ControlProblem,
    init: &IncrementVector,
    opts: &SolverOptions,
) -> Result<SolveReport> {
    p.check(init)?;
    if !steps_match(&init.time_deltas, &p.grid.steps()) {
        return Err(Error::DimensionMismatch(
            "initial time increments do not match the problem grid".into(),
        ));
    }
    if !p.feasible(&init.input_deltas) {
        return Err(Error::InvalidArgument(
            "initial point violates the bounds".into(),
        ));
    }
    let mut current = init.clone();
    let mut residual = control_residual(p, &current)?;
    let mut objective = sq_norm(&residual);
    if !objective.is_finite() {
        return Err(Error::NonFiniteInit);
    }

    let n_vars = current.input_deltas.len();
    let mut damping = opts.initial_damping;
    let mut history = Vec::new();
    let mut iterations = 0;
    let mut converged = false;
    let mut gradient_norm;

    loop {
        let jac = control_jacobian(p, &current)?;
        let r = DVector::from_column_slice(&residual);
        let jt_r = jac.tr_mul(&r);
        gradient_norm = 2.0 * jt_r.norm();
        history.push(IterationRecord {
            iteration: iterations,
            objective,
            gradient_norm,
            damping,
        });
        if gradient_norm <= opts.gradient_tolerance {
            converged = true;
            break;
        }
        if iterations >= opts.max_iterations {
            break;
        }

        let jt_j = jac.tr_mul(&jac);
        let max_diag = (0..n_vars).map(|k| jt_j[(k, k)]).fold(0.0, f64::max);
        let floor = max_diag * 1e-12;
        let mut accepted = None;
        while damping < 1e16 {
            let mut a = jt_j.clone();
            for k in 0..n_vars {
                a[(k, k)] += damping * jt_j[(k, k)].max(floor);
            }
            let Some(chol) = a.cholesky() else {
                damping *= opts.damping_increase;
                continue;
            };
            let step = chol.solve(&(-&jt_r));
            let mut trial = current.clone();
            for (x, s) in trial.input_deltas.iter_mut().zip(step.iter()) {
                *x += s;
            }
            p.project(&mut trial.input_deltas);
            let trial_residual = control_residual(p, &trial)?;
            let trial_objective = sq_norm(&trial_residual);
            if trial_objective.is_finite() && trial_objective < objective {
                let moved: f64 = trial
                    .input_deltas
                    .iter()
                    .zip(&current.input_deltas)
                    .map(|(a, b)| (a - b) * (a - b))
                    .sum::<f64>()
                    .sqrt();
                accepted = Some((trial, trial_residual, trial_objective, moved));
                damping = (damping * opts.damping_decrease).max(1e-15);
                break;
            }
            damping *= opts.damping_increase;
        }

        let Some((trial, trial_residual, trial_objective, moved)) = accepted else {
            // No descent direction at any damping: a stationary point up to
            // rounding.
            converged = gradient_norm <= opts.gradient_tolerance.sqrt();
            break;
        };
        let scale = 1.0 + linalg::norm(&current.input_deltas);
        current = trial;
        residual = trial_residual;
        objective = trial_objective;
        iterations += 1;
        if moved <= opts.step_tolerance * scale {
            converged = true;
            let jac = control_jacobian(p, &current)?;
            gradient_norm = 2.0 * jac.tr_mul(&DVector::from_column_slice(&residual)).norm();
            history.push(IterationRecord {
                iteration: iterations,
                objective,
                gradient_norm,
                damping,
            });
            break;
        }
    }

    Ok(SolveReport {
        solution: current,
        objective,
        iterations,
        converged,
        gradient_norm,
        history,
    })
}

fn sq_norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum()
}

/// Adds white Gaussian noise to the input samples rebuilt from `delta`
/// (starting at `u0`) and differences them again. The sample at `t_0` is left
/// alone since `u0` is fixed; noise there would only shift every later
/// sample. The noise is rescaled so the realized signal-to-noise ratio
/// `10 log10(||u||^2 / ||noise||^2)` equals `snr_db` exactly.
pub fn perturb_with_snr(
    delta: &IncrementVector,
    u0: &[f64],
    snr_db: f64,
    seed: u64,
) -> Result<IncrementVector> {
    if snr_db.is_nan() || snr_db == f64::NEG_INFINITY {
        return Err(Error::InvalidArgument(format!(
            "SNR must be a number below +inf dB or +inf, got {snr_db}"
        )));
    }
    let d = delta.channels();
    if u0.len() != d {
        return Err(Error::DimensionMismatch(format!(
            "initial input has {} channels, increments have {d}",
            u0.len()
        )));
    }
    if snr_db == f64::INFINITY {
        return Ok(delta.clone());
    }
    let n_points = delta.segments() + 1;
    let mut values = Vec::with_capacity(n_points * d);
    values.extend_from_slice(u0);
    for j in 0..delta.segments() {
        for i in 0..d {
            values.push(values[j * d + i] + delta.input_deltas[j * d + i]);
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut noise = vec![0.0; d];
    noise.extend((d..values.len()).map(|_| -> f64 { StandardNormal.sample(&mut rng) }));
    let signal_norm = linalg::norm(&values);
    let noise_norm = linalg::norm(&noise);
    let scale = if noise_norm == 0.0 {
        0.0
    } else {
        signal_norm / (noise_norm * 10f64.powf(snr_db / 20.0))
    };
    let noisy: Vec<f64> = values
        .iter()
        .zip(&noise)
        .map(|(v, e)| v + scale * e)
        .collect();
    let input_deltas = (0..delta.segments())
        .flat_map(|j| {
            let noisy = &noisy;
            (0..d).map(move |i| noisy[(j + 1) * d + i] - noisy[j * d + i])
        })
        .collect();
    Ok(IncrementVector {
        time_deltas: delta.time_deltas.clone(),
        input_deltas,
    })
}
