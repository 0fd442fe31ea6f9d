//! Ground-truth simulation of scalar input-affine systems
//! `dZ = f_0(Z) dt + sum_i f_i(Z) dU^i` and random training data.

use rand::distr::{Distribution, Uniform};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::features::Dataset;
use crate::paths::{AugmentedPath, SampledPath, TimeGrid};

/// Vector fields of a scalar-state input-affine system. Implementations are
/// expected to be Lipschitz on the range of states they are driven through.
pub trait InputAffineSystem: Sync {
    /// Number of input channels `d`.
    fn input_channels(&self) -> usize;

    /// Drift `f_0(z)`.
    fn drift(&self, z: f64) -> f64;

    /// Gain `f_i(z)` of input channel `i` (0-based over the inputs).
    fn gain(&self, channel: usize, z: f64) -> f64;
}

/// Langevin dynamics in a double-well potential:
/// `dZ = theta Z (mu - Z^2) dt + sigma dU`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LangevinParams {
    pub mu: f64,
    pub theta: f64,
    pub sigma: f64,
}

impl LangevinParams {
    pub fn new(mu: f64, theta: f64, sigma: f64) -> Result<Self> {
        if !mu.is_finite() || !(theta > 0.0 && theta.is_finite()) || !(sigma > 0.0 && sigma.is_finite())
        {
            return Err(Error::InvalidArgument(format!(
                "Langevin parameters need finite mu and positive theta, sigma \
                 (got mu = {mu}, theta = {theta}, sigma = {sigma})"
            )));
        }
        Ok(Self { mu, theta, sigma })
    }

    /// Each parameter drawn independently and uniformly from `[lo, hi]`.
    pub fn sample(lo: f64, hi: f64, seed: u64) -> Result<Self> {
        if !(lo > 0.0 && lo < hi) {
            return Err(Error::InvalidArgument(format!(
                "parameter range [{lo}, {hi}] must be positive and non-degenerate"
            )));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let dist = Uniform::new_inclusive(lo, hi).expect("checked range");
        let mu = dist.sample(&mut rng);
        let theta = dist.sample(&mut rng);
        let sigma = dist.sample(&mut rng);
        Self::new(mu, theta, sigma)
    }
}

impl InputAffineSystem for LangevinParams {
    fn input_channels(&self) -> usize {
        1
    }

    fn drift(&self, z: f64) -> f64 {
        self.theta * z * (self.mu - z * z)
    }

    fn gain(&self, _channel: usize, _z: f64) -> f64 {
        self.sigma
    }
}

/// Forward Euler along the piecewise-linear input, `substeps` uniform steps
/// per grid segment. Returns the state at every grid point.
pub fn euler_simulate(
    sys: &impl InputAffineSystem,
    x: &AugmentedPath,
    z0: f64,
    substeps: usize,
) -> Result<Vec<f64>> {
    if substeps == 0 {
        return Err(Error::InvalidArgument("substeps must be at least 1".into()));
    }
    let d = x.input_channels();
    if d != sys.input_channels() {
        return Err(Error::DimensionMismatch(format!(
            "path has {d} input channels, system expects {}",
            sys.input_channels()
        )));
    }
    let path = x.as_linear();
    let times = x.grid().points();
    let mut out = Vec::with_capacity(path.len());
    let mut z = z0;
    out.push(z);
    let frac = 1.0 / substeps as f64;
    for j in 0..path.segments() {
        let inc = path.increment(j);
        let h = inc[0] * frac;
        for s in 0..substeps {
            let mut dz = sys.drift(z) * h;
            for (i, di) in inc[1..].iter().enumerate() {
                dz += sys.gain(i, z) * di * frac;
            }
            z += dz;
            if !z.is_finite() {
                return Err(Error::Diverged {
                    time: times[j] + (s + 1) as f64 * h,
                });
            }
        }
        out.push(z);
    }
    Ok(out)
}

/// I.i.d. uniform samples on `[lo, hi]` for every grid point and channel.
pub fn random_piecewise_input(
    grid: &TimeGrid,
    channels: usize,
    lo: f64,
    hi: f64,
    seed: u64,
) -> Result<SampledPath> {
    if !(lo < hi) || !lo.is_finite() || !hi.is_finite() {
        return Err(Error::InvalidArgument(format!(
            "input range [{lo}, {hi}] must satisfy lo < hi"
        )));
    }
    if channels == 0 {
        return Err(Error::InvalidArgument("need at least one input channel".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let dist = Uniform::new_inclusive(lo, hi).expect("checked range");
    let values = (0..grid.len() * channels)
        .map(|_| dist.sample(&mut rng))
        .collect();
    SampledPath::from_flat(grid.clone(), channels, values)
}

/// Settings shared by every trajectory of a generated dataset.
#[derive(Debug, Clone, PartialEq)]
pub struct DatasetSpec {
    pub grid: TimeGrid,
    pub n_train: usize,
    pub input_lo: f64,
    pub input_hi: f64,
    pub z0: f64,
    pub substeps: usize,
}

/// `n_train` random inputs and their simulated outputs. Trajectory `m` uses
/// the seed `split_seed(seed, m)`, so trajectories are independent of each
/// other and of the thread schedule.
pub fn generate_dataset(
    sys: &impl InputAffineSystem,
    spec: &DatasetSpec,
    seed: u64,
) -> Result<Dataset> {
    if spec.n_train == 0 {
        return Err(Error::InvalidArgument("n_train must be at least 1".into()));
    }
    let pairs: Vec<(SampledPath, Vec<f64>)> = (0..spec.n_train)
        .into_par_iter()
        .map(|m| {
            simulate_random_trajectory(sys, spec, split_seed(seed, m as u64)).map_err(|e| {
                Error::Trajectory {
                    index: m,
                    source: Box::new(e),
                }
            })
        })
        .collect::<Result<_>>()?;
    let (inputs, outputs) = pairs.into_iter().unzip();
    Dataset::new(inputs, outputs, spec.z0)
}

/// One random input from `spec` and the system's response to it.
pub fn simulate_random_trajectory(
    sys: &impl InputAffineSystem,
    spec: &DatasetSpec,
    seed: u64,
) -> Result<(SampledPath, Vec<f64>)> {
    let u = random_piecewise_input(
        &spec.grid,
        sys.input_channels(),
        spec.input_lo,
        spec.input_hi,
        seed,
    )?;
    let z = euler_simulate(sys, &u.augment_with_time(), spec.z0, spec.substeps)?;
    Ok((u, z))
}

/// Derives the seed of sub-stream `index` from `master` (splitmix64
/// finaliser over a Weyl sequence).
pub fn split_seed(master: u64, index: u64) -> u64 {
    let mut z = master
        .wrapping_add(0x9E37_79B9_7F4A_7C15u64.wrapping_mul(index.wrapping_add(1)));
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}
