//! Reference computations shared by the integration tests. Each one is
//! written independently of the library's algorithms.
#![allow(dead_code)]

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use sigflow::paths::LinearPath;
use sigflow::signature::{TruncatedTensorSeries, Word};

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Random piecewise-linear path with `segments` segments whose first channel
/// is increasing, the others drawn from `[-1, 1]`.
pub fn random_path(rng: &mut ChaCha8Rng, channels: usize, segments: usize) -> LinearPath {
    let mut points = vec![vec![0.0; channels]];
    for _ in 0..segments {
        let last = points.last().unwrap().clone();
        let mut next = last.clone();
        next[0] += rng.random_range(0.05..0.5);
        for v in next.iter_mut().skip(1) {
            *v += rng.random_range(-1.0..1.0);
        }
        points.push(next);
    }
    LinearPath::from_points(&points).unwrap()
}

/// Series with every coefficient, the constant term included, uniform on
/// `[-1, 1]`.
pub fn random_series(rng: &mut ChaCha8Rng, alphabet: usize, order: usize) -> TruncatedTensorSeries {
    let n = sigflow::signature::series_len(alphabet, order);
    let coeffs = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
    TruncatedTensorSeries::from_coeffs(alphabet, order, coeffs).unwrap()
}

/// Every word of length `1..=order` over `alphabet` letters.
pub fn all_words(alphabet: usize, order: usize) -> Vec<Vec<usize>> {
    let mut out = Vec::new();
    let mut level: Vec<Vec<usize>> = vec![Vec::new()];
    for _ in 0..order {
        let mut next = Vec::new();
        for w in &level {
            for a in 0..alphabet {
                let mut v = w.clone();
                v.push(a);
                next.push(v);
            }
        }
        out.extend(next.iter().cloned());
        level = next;
    }
    out
}

/// Euler integration of `dS = S (x) dX` along the path, each segment taking
/// a unit share of a total parameter interval `[0, 1]`, with step `h`.
/// Returns the coefficient of every word up to `order`, keyed like
/// [`all_words`] with the empty word first.
pub struct OdeSignature {
    pub words: Vec<Vec<usize>>,
    pub values: Vec<f64>,
}

pub fn ode_signature(path: &LinearPath, order: usize, h: f64) -> OdeSignature {
    let d = path.channels();
    let mut words = vec![Vec::new()];
    words.extend(all_words(d, order));
    // parent[i] is the index of words[i] without its last letter.
    let parent: Vec<usize> = words
        .iter()
        .map(|w| {
            if w.is_empty() {
                0
            } else {
                words.iter().position(|p| p[..] == w[..w.len() - 1]).unwrap()
            }
        })
        .collect();
    let mut s = vec![0.0; words.len()];
    s[0] = 1.0;
    let segments = path.segments();
    let steps_per_segment = ((1.0 / segments as f64) / h).round() as usize;
    let frac = 1.0 / steps_per_segment as f64;
    let mut next = s.clone();
    for j in 0..segments {
        let inc = path.increment(j);
        let dx: Vec<f64> = inc.iter().map(|v| v * frac).collect();
        for _ in 0..steps_per_segment {
            // Explicit Euler: every coefficient uses the state at the start
            // of the step.
            for i in 1..words.len() {
                let last = *words[i].last().unwrap();
                next[i] = s[i] + s[parent[i]] * dx[last];
            }
            s[1..].copy_from_slice(&next[1..]);
        }
    }
    OdeSignature { words, values: s }
}

/// Iterated integral over the word `ij` by a midpoint Riemann sum with `n`
/// cells per segment.
pub fn riemann_level2(path: &LinearPath, i: usize, j: usize, n: usize) -> f64 {
    let mut acc_i = 0.0;
    let mut total = 0.0;
    for seg in 0..path.segments() {
        let inc = path.increment(seg);
        let di = inc[i] / n as f64;
        let dj = inc[j] / n as f64;
        for _ in 0..n {
            total += (acc_i + 0.5 * di) * dj;
            acc_i += di;
        }
    }
    total
}

/// All interleavings of `a` and `b` keeping each word's letter order, found
/// by filtering every permutation of the concatenated positions.
pub fn brute_force_shuffle(a: &[usize], b: &[usize]) -> Vec<Vec<usize>> {
    let n = a.len() + b.len();
    let letters: Vec<usize> = a.iter().chain(b).copied().collect();
    let mut out = Vec::new();
    let mut perm: Vec<usize> = (0..n).collect();
    permutations(&mut perm, 0, &mut |p| {
        let in_order = |lo: usize, hi: usize| {
            let pos: Vec<usize> = p.iter().copied().filter(|&k| k >= lo && k < hi).collect();
            pos.windows(2).all(|w| w[0] < w[1])
        };
        if in_order(0, a.len()) && in_order(a.len(), n) {
            out.push(p.iter().map(|&k| letters[k]).collect());
        }
    });
    out.sort();
    out
}

fn permutations(v: &mut Vec<usize>, k: usize, f: &mut impl FnMut(&[usize])) {
    if k == v.len() {
        f(v);
        return;
    }
    for i in k..v.len() {
        v.swap(k, i);
        permutations(v, k + 1, f);
        v.swap(k, i);
    }
}

pub fn coeff(s: &TruncatedTensorSeries, w: &[usize]) -> f64 {
    s.get(&Word(w.to_vec())).unwrap()
}

/// Ridge solution from the normal equations `(S^T S + g I) b = S^T z`.
pub fn ridge_normal_equations(s: &DMatrix<f64>, z: &[f64], gamma: f64) -> Vec<f64> {
    let n = s.ncols();
    let a = s.transpose() * s + DMatrix::<f64>::identity(n, n) * gamma;
    let rhs = s.transpose() * DVector::from_column_slice(z);
    a.lu().solve(&rhs).unwrap().iter().copied().collect()
}

/// Central finite differences of `f` at `x` with step `h`, as a
/// `outputs x inputs` matrix.
pub fn central_differences(
    f: impl Fn(&[f64]) -> Vec<f64>,
    x: &[f64],
    h: f64,
) -> DMatrix<f64> {
    let m = f(x).len();
    let mut jac = DMatrix::zeros(m, x.len());
    let mut xp = x.to_vec();
    for k in 0..x.len() {
        xp[k] = x[k] + h;
        let fp = f(&xp);
        xp[k] = x[k] - h;
        let fm = f(&xp);
        xp[k] = x[k];
        for i in 0..m {
            jac[(i, k)] = (fp[i] - fm[i]) / (2.0 * h);
        }
    }
    jac
}

pub fn max_abs(v: impl IntoIterator<Item = f64>) -> f64 {
    v.into_iter().fold(0.0, |m, x| m.max(x.abs()))
}

/// `max |a - b| / max |b|` over matching coefficients.
pub fn rel_err(a: &TruncatedTensorSeries, b: &TruncatedTensorSeries) -> f64 {
    let scale = max_abs(b.coeffs().iter().copied());
    a.max_abs_diff(b) / scale
}

/// Double-double number `hi + lo` with about 32 significant digits, built
/// from error-free sums and fused products.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Dd {
    pub hi: f64,
    pub lo: f64,
}

impl Dd {
    pub const ZERO: Dd = Dd { hi: 0.0, lo: 0.0 };

    pub fn new(v: f64) -> Dd {
        Dd { hi: v, lo: 0.0 }
    }

    fn renorm(s: f64, e: f64) -> Dd {
        let hi = s + e;
        Dd { hi, lo: e - (hi - s) }
    }
}

fn two_sum(a: f64, b: f64) -> (f64, f64) {
    let s = a + b;
    let bb = s - a;
    (s, (a - (s - bb)) + (b - bb))
}

impl std::ops::Add for Dd {
    type Output = Dd;
    fn add(self, o: Dd) -> Dd {
        let (s, e) = two_sum(self.hi, o.hi);
        let (t, f) = two_sum(self.lo, o.lo);
        let r = Dd::renorm(s, e + t);
        Dd::renorm(r.hi, r.lo + f)
    }
}

impl std::ops::Neg for Dd {
    type Output = Dd;
    fn neg(self) -> Dd {
        Dd { hi: -self.hi, lo: -self.lo }
    }
}

impl std::ops::Sub for Dd {
    type Output = Dd;
    fn sub(self, o: Dd) -> Dd {
        self + (-o)
    }
}

impl std::ops::Mul for Dd {
    type Output = Dd;
    fn mul(self, o: Dd) -> Dd {
        let p = self.hi * o.hi;
        let e = self.hi.mul_add(o.hi, -p) + (self.hi * o.lo + self.lo * o.hi);
        Dd::renorm(p, e)
    }
}

impl std::ops::Div<f64> for Dd {
    type Output = Dd;
    fn div(self, y: f64) -> Dd {
        let q1 = self.hi / y;
        let r = self - Dd::new(q1) * Dd::new(y);
        Dd::renorm(q1, r.hi / y)
    }
}

/// Tracking residual `target - Stilde beta` evaluated in double-double, with
/// the rows of `Stilde` taken as differences of consecutive prefix
/// signatures. `inputs` holds the free increments segment by segment.
pub fn dd_residual(
    target: &[f64],
    beta: &[f64],
    time_deltas: &[f64],
    inputs: &[Dd],
    channels: usize,
    order: usize,
) -> Vec<Dd> {
    let alphabet = channels + 1;
    let mut words = vec![Vec::new()];
    words.extend(all_words(alphabet, order));
    let index: std::collections::HashMap<Vec<usize>, usize> =
        words.iter().cloned().enumerate().map(|(i, w)| (w, i)).collect();
    let splits: Vec<Vec<(usize, usize)>> = words
        .iter()
        .map(|w| (0..=w.len()).map(|c| (index[&w[..c]], index[&w[c..]])).collect())
        .collect();
    let column = |w: &Vec<usize>| {
        sigflow::signature::word_index(&Word(w.clone()), alphabet).unwrap() - 1
    };
    let columns: Vec<usize> = words.iter().skip(1).map(column).collect();
    let mut factorial = vec![1.0; order + 1];
    for k in 1..=order {
        factorial[k] = factorial[k - 1] * k as f64;
    }

    let mut prefix = vec![Dd::ZERO; words.len()];
    prefix[0] = Dd::new(1.0);
    let mut out = Vec::with_capacity(time_deltas.len());
    for (j, h) in time_deltas.iter().enumerate() {
        let mut delta = vec![Dd::new(*h)];
        delta.extend_from_slice(&inputs[j * channels..(j + 1) * channels]);
        let seg: Vec<Dd> = words
            .iter()
            .map(|w| w.iter().fold(Dd::new(1.0), |acc, &l| acc * delta[l]) / factorial[w.len()])
            .collect();
        let next: Vec<Dd> = splits
            .iter()
            .map(|s| s.iter().fold(Dd::ZERO, |acc, &(a, b)| acc + prefix[a] * seg[b]))
            .collect();
        let mut r = Dd::new(target[j]);
        for (i, col) in columns.iter().enumerate() {
            r = r - (next[i + 1] - prefix[i + 1]) * Dd::new(beta[*col]);
        }
        out.push(r);
        prefix = next;
    }
    out
}

/// Central differences of [`dd_residual`] with respect to every free
/// increment, step `h`.
pub fn dd_jacobian(
    target: &[f64],
    beta: &[f64],
    time_deltas: &[f64],
    inputs: &[f64],
    channels: usize,
    order: usize,
    h: f64,
) -> DMatrix<f64> {
    let base: Vec<Dd> = inputs.iter().map(|&v| Dd::new(v)).collect();
    let mut jac = DMatrix::zeros(time_deltas.len(), inputs.len());
    for k in 0..inputs.len() {
        let mut plus = base.clone();
        plus[k] = plus[k] + Dd::new(h);
        let mut minus = base.clone();
        minus[k] = minus[k] - Dd::new(h);
        let rp = dd_residual(target, beta, time_deltas, &plus, channels, order);
        let rm = dd_residual(target, beta, time_deltas, &minus, channels, order);
        for i in 0..time_deltas.len() {
            jac[(i, k)] = ((rp[i] - rm[i]) / (2.0 * h)).hi;
        }
    }
    jac
}
