//! Time grids and piecewise-linear paths.
//!
//! A path is always the linear interpolation of its samples. [`LinearPath`] is
//! the relaxed form consumed by the signature algebra: any sequence of points
//! in a fixed number of channels. [`SampledPath`] ties the input channels to a
//! [`TimeGrid`], and [`AugmentedPath`] prepends time as channel 0, which is the
//! form used for prediction and control.

use crate::error::{Error, Result};

/// Strictly increasing sample times starting at zero.
#[derive(Debug, Clone, PartialEq)]
pub struct TimeGrid {
    points: Vec<f64>,
}

impl TimeGrid {
    pub fn new(points: Vec<f64>) -> Result<Self> {
        if points.len() < 2 {
            return Err(Error::InvalidGrid(format!(
                "need at least 2 points, got {}",
                points.len()
            )));
        }
        if points[0] != 0.0 {
            return Err(Error::InvalidGrid(format!(
                "first point must be 0, got {}",
                points[0]
            )));
        }
        for (j, w) in points.windows(2).enumerate() {
            if !w[1].is_finite() || w[1] <= w[0] {
                return Err(Error::InvalidGrid(format!(
                    "points must be finite and strictly increasing (t[{}] = {}, t[{}] = {})",
                    j,
                    w[0],
                    j + 1,
                    w[1]
                )));
            }
        }
        Ok(Self { points })
    }

    /// Uniform grid on `[0, horizon]` with spacing as close to `step` as an
    /// integer number of segments allows. The last point is exactly `horizon`.
    pub fn uniform(horizon: f64, step: f64) -> Result<Self> {
        if !(horizon > 0.0 && step > 0.0 && horizon.is_finite() && step.is_finite()) {
            return Err(Error::InvalidGrid(format!(
                "horizon ({horizon}) and step ({step}) must be positive and finite"
            )));
        }
        let segments = (horizon / step).round().max(1.0) as usize;
        let points = (0..=segments)
            .map(|i| i as f64 * horizon / segments as f64)
            .collect();
        Self::new(points)
    }

    pub fn points(&self) -> &[f64] {
        &self.points
    }

    /// Number of grid points, `N + 1`.
    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// Number of linear segments `N`.
    pub fn segments(&self) -> usize {
        self.points.len() - 1
    }

    pub fn horizon(&self) -> f64 {
        self.points[self.points.len() - 1]
    }

    /// Segment durations `t_j - t_{j-1}`.
    pub fn steps(&self) -> Vec<f64> {
        self.points.windows(2).map(|w| w[1] - w[0]).collect()
    }

    /// Affine rescaling onto `[0, 1]`.
    pub fn normalized(&self) -> TimeGrid {
        let horizon = self.horizon();
        let mut points: Vec<f64> = self.points.iter().map(|t| t / horizon).collect();
        let last = points.len() - 1;
        points[last] = 1.0;
        TimeGrid { points }
    }

    /// The grid restricted to its first `segments` segments.
    pub fn prefix(&self, segments: usize) -> Result<TimeGrid> {
        if segments == 0 || segments > self.segments() {
            return Err(Error::InvalidArgument(format!(
                "prefix of {segments} segments from a grid with {}",
                self.segments()
            )));
        }
        Ok(TimeGrid {
            points: self.points[..=segments].to_vec(),
        })
    }
}

/// A piecewise-linear path given by its breakpoints in `channels` dimensions.
///
/// No constraint ties any channel to time. Reversal and dilation live here
/// because they break the time-channel invariant of [`AugmentedPath`].
#[derive(Debug, Clone, PartialEq)]
pub struct LinearPath {
    channels: usize,
    values: Vec<f64>,
}

impl LinearPath {
    /// Builds a path from row-major samples: point `j` is
    /// `values[j * channels..(j + 1) * channels]`.
    pub fn from_flat(channels: usize, values: Vec<f64>) -> Result<Self> {
        if channels == 0 {
            return Err(Error::InvalidPath("path needs at least one channel".into()));
        }
        if values.is_empty() || values.len() % channels != 0 {
            return Err(Error::InvalidPath(format!(
                "{} values do not form whole points of {} channels",
                values.len(),
                channels
            )));
        }
        if let Some(v) = values.iter().find(|v| !v.is_finite()) {
            return Err(Error::InvalidPath(format!("non-finite sample {v}")));
        }
        Ok(Self { channels, values })
    }

    pub fn from_points<P: AsRef<[f64]>>(points: &[P]) -> Result<Self> {
        let channels = points.first().map(|p| p.as_ref().len()).unwrap_or(0);
        let mut values = Vec::with_capacity(points.len() * channels);
        for (j, p) in points.iter().enumerate() {
            let p = p.as_ref();
            if p.len() != channels {
                return Err(Error::InvalidPath(format!(
                    "point {j} has {} channels, expected {channels}",
                    p.len()
                )));
            }
            values.extend_from_slice(p);
        }
        Self::from_flat(channels, values)
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    /// Number of breakpoints.
    pub fn len(&self) -> usize {
        self.values.len() / self.channels
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn segments(&self) -> usize {
        self.len() - 1
    }

    pub fn point(&self, j: usize) -> &[f64] {
        &self.values[j * self.channels..(j + 1) * self.channels]
    }

    pub fn points(&self) -> impl Iterator<Item = &[f64]> {
        self.values.chunks_exact(self.channels)
    }

    pub fn as_flat(&self) -> &[f64] {
        &self.values
    }

    /// Increment of segment `j` (0-based): `x_{j+1} - x_j`.
    pub fn increment(&self, j: usize) -> Vec<f64> {
        self.point(j + 1)
            .iter()
            .zip(self.point(j))
            .map(|(b, a)| b - a)
            .collect()
    }

    pub fn increments(&self) -> Vec<Vec<f64>> {
        (0..self.segments()).map(|j| self.increment(j)).collect()
    }

    /// Breakpoints in reverse order: the same trace run backwards.
    pub fn reverse(&self) -> LinearPath {
        let values = self
            .values
            .chunks_exact(self.channels)
            .rev()
            .flatten()
            .copied()
            .collect();
        LinearPath {
            channels: self.channels,
            values,
        }
    }

    /// Every coordinate multiplied by `lambda`.
    pub fn dilate(&self, lambda: f64) -> LinearPath {
        LinearPath {
            channels: self.channels,
            values: self.values.iter().map(|v| v * lambda).collect(),
        }
    }

    /// `self` followed by `other`, translated so that it starts where `self`
    /// ends.
    pub fn concatenate(&self, other: &LinearPath) -> Result<LinearPath> {
        if self.channels != other.channels {
            return Err(Error::DimensionMismatch(format!(
                "cannot concatenate paths with {} and {} channels",
                self.channels, other.channels
            )));
        }
        let end = self.point(self.len() - 1);
        let start = other.point(0);
        let offset: Vec<f64> = end.iter().zip(start).map(|(e, s)| e - s).collect();
        let mut values = self.values.clone();
        for p in other.points().skip(1) {
            values.extend(p.iter().zip(&offset).map(|(v, o)| v + o));
        }
        Ok(LinearPath {
            channels: self.channels,
            values,
        })
    }

    /// Sum over segments of the l1 norm of each increment.
    pub fn total_variation(&self) -> f64 {
        (0..self.segments())
            .map(|j| self.increment(j).iter().map(|v| v.abs()).sum::<f64>())
            .sum()
    }

    /// Inserts the midpoint of segment `j` as an extra breakpoint.
    pub fn with_midpoint(&self, j: usize) -> LinearPath {
        let mid: Vec<f64> = self
            .point(j)
            .iter()
            .zip(self.point(j + 1))
            .map(|(a, b)| 0.5 * (a + b))
            .collect();
        let split = (j + 1) * self.channels;
        let mut values = Vec::with_capacity(self.values.len() + self.channels);
        values.extend_from_slice(&self.values[..split]);
        values.extend_from_slice(&mid);
        values.extend_from_slice(&self.values[split..]);
        LinearPath {
            channels: self.channels,
            values,
        }
    }
}

/// Input samples `U_{t_j}` on a time grid.
#[derive(Debug, Clone, PartialEq)]
pub struct SampledPath {
    grid: TimeGrid,
    path: LinearPath,
}

impl SampledPath {
    pub fn new(grid: TimeGrid, path: LinearPath) -> Result<Self> {
        if path.len() != grid.len() {
            return Err(Error::InvalidPath(format!(
                "{} samples for a grid of {} points",
                path.len(),
                grid.len()
            )));
        }
        Ok(Self { grid, path })
    }

    pub fn from_flat(grid: TimeGrid, channels: usize, values: Vec<f64>) -> Result<Self> {
        Self::new(grid, LinearPath::from_flat(channels, values)?)
    }

    pub fn grid(&self) -> &TimeGrid {
        &self.grid
    }

    pub fn channels(&self) -> usize {
        self.path.channels()
    }

    pub fn value(&self, j: usize) -> &[f64] {
        self.path.point(j)
    }

    pub fn path(&self) -> &LinearPath {
        &self.path
    }

    /// Prepends time as channel 0.
    pub fn augment_with_time(&self) -> AugmentedPath {
        let d = self.channels();
        let mut values = Vec::with_capacity(self.grid.len() * (d + 1));
        for (t, u) in self.grid.points().iter().zip(self.path.points()) {
            values.push(*t);
            values.extend_from_slice(u);
        }
        AugmentedPath {
            grid: self.grid.clone(),
            path: LinearPath {
                channels: d + 1,
                values,
            },
        }
    }

    /// The first `segments + 1` samples.
    pub fn prefix(&self, segments: usize) -> Result<SampledPath> {
        let grid = self.grid.prefix(segments)?;
        let d = self.channels();
        let values = self.path.as_flat()[..(segments + 1) * d].to_vec();
        SampledPath::from_flat(grid, d, values)
    }
}

/// The time-extended path `X_t = [t, U_t]`.
#[derive(Debug, Clone, PartialEq)]
pub struct AugmentedPath {
    grid: TimeGrid,
    path: LinearPath,
}

impl AugmentedPath {
    /// Validates that channel 0 is a legal time grid and adopts it.
    pub fn from_linear(path: LinearPath) -> Result<Self> {
        if path.channels() < 2 {
            return Err(Error::InvalidPath(
                "augmented path needs time plus at least one input channel".into(),
            ));
        }
        let times = path.points().map(|p| p[0]).collect();
        let grid = TimeGrid::new(times)?;
        Ok(Self { grid, path })
    }

    pub fn grid(&self) -> &TimeGrid {
        &self.grid
    }

    /// Number of input channels `d` (excluding time).
    pub fn input_channels(&self) -> usize {
        self.path.channels() - 1
    }

    pub fn as_linear(&self) -> &LinearPath {
        &self.path
    }

    pub fn increments(&self) -> Vec<Vec<f64>> {
        self.path.increments()
    }

    /// Drops the time channel.
    pub fn to_sampled(&self) -> SampledPath {
        let d = self.input_channels();
        let values = self
            .path
            .points()
            .flat_map(|p| p[1..].iter().copied())
            .collect();
        SampledPath {
            grid: self.grid.clone(),
            path: LinearPath {
                channels: d,
                values,
            },
        }
    }

    pub fn concatenate(&self, other: &AugmentedPath) -> Result<AugmentedPath> {
        AugmentedPath::from_linear(self.path.concatenate(&other.path)?)
    }

    pub fn reverse(&self) -> LinearPath {
        self.path.reverse()
    }

    pub fn dilate(&self, lambda: f64) -> LinearPath {
        self.path.dilate(lambda)
    }
}

impl AsRef<LinearPath> for LinearPath {
    fn as_ref(&self) -> &LinearPath {
        self
    }
}

impl AsRef<LinearPath> for AugmentedPath {
    fn as_ref(&self) -> &LinearPath {
        &self.path
    }
}
