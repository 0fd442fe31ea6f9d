//! Linear readout of running signatures: feature matrices, ridge fitting of
//! the readout weights, trajectory prediction and the fit score.

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::linalg::{self, ColMajor};
use crate::paths::{AugmentedPath, SampledPath, TimeGrid};
use crate::signature::prefix_signatures;

/// Ridge weight used when none is configured.
pub const DEFAULT_GAMMA: f64 = 1e-8;

/// Number of signature terms of levels `1..=order` for `channels` inputs plus
/// time: `sum_{k=1}^{M} (d + 1)^k`.
pub fn feature_count(channels: usize, order: usize) -> usize {
    (1..=order).map(|k| (channels + 1).pow(k as u32)).sum()
}

/// Running signatures without their constant level-0 entry. Row `j - 1`
/// holds the levels `1..=M` of the signature over `[0, t_j]`.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMatrix {
    order: usize,
    channels: usize,
    matrix: DMatrix<f64>,
}

impl FeatureMatrix {
    pub fn order(&self) -> usize {
        self.order
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn rows(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn cols(&self) -> usize {
        self.matrix.ncols()
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.matrix
    }

    pub fn row(&self, j: usize) -> Vec<f64> {
        self.matrix.row(j).iter().copied().collect()
    }

    pub(crate) fn from_matrix(order: usize, channels: usize, matrix: DMatrix<f64>) -> Self {
        debug_assert_eq!(matrix.ncols(), feature_count(channels, order));
        Self {
            order,
            channels,
            matrix,
        }
    }

    /// Features of a lower truncation order. Because the layout is level
    /// major, these are the leading columns.
    pub fn truncate(&self, order: usize) -> FeatureMatrix {
        let order = order.min(self.order);
        let cols = feature_count(self.channels, order);
        FeatureMatrix {
            order,
            channels: self.channels,
            matrix: self.matrix.columns(0, cols).into_owned(),
        }
    }

    /// `S beta`, one value per row.
    pub fn apply(&self, beta: &[f64]) -> Vec<f64> {
        (0..self.rows())
            .map(|j| self.matrix.row(j).iter().zip(beta).map(|(s, b)| s * b).sum())
            .collect()
    }
}

pub fn build_feature_matrix(x: &AugmentedPath, order: usize) -> FeatureMatrix {
    let channels = x.input_channels();
    let rows = prefix_signatures(x.as_linear(), order);
    let cols = feature_count(channels, order);
    let matrix = DMatrix::from_fn(rows.len(), cols, |j, c| rows[j].coeffs()[c + 1]);
    FeatureMatrix {
        order,
        channels,
        matrix,
    }
}

/// Input/output trajectories sharing a grid and an initial output.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    inputs: Vec<SampledPath>,
    outputs: Vec<Vec<f64>>,
    z0: f64,
}

impl Dataset {
    pub fn new(inputs: Vec<SampledPath>, outputs: Vec<Vec<f64>>, z0: f64) -> Result<Self> {
        if inputs.is_empty() {
            return Err(Error::InvalidArgument("dataset has no trajectories".into()));
        }
        if inputs.len() != outputs.len() {
            return Err(Error::DimensionMismatch(format!(
                "{} inputs but {} outputs",
                inputs.len(),
                outputs.len()
            )));
        }
        let grid = inputs[0].grid();
        let channels = inputs[0].channels();
        for (m, (u, z)) in inputs.iter().zip(&outputs).enumerate() {
            if u.grid() != grid {
                return Err(Error::InvalidArgument(format!(
                    "trajectory {m} is on a different grid"
                )));
            }
            if u.channels() != channels {
                return Err(Error::DimensionMismatch(format!(
                    "trajectory {m} has {} channels, expected {channels}",
                    u.channels()
                )));
            }
            if z.len() != grid.len() {
                return Err(Error::DimensionMismatch(format!(
                    "trajectory {m} has {} outputs for {} grid points",
                    z.len(),
                    grid.len()
                )));
            }
            if z[0] != z0 {
                return Err(Error::InvalidArgument(format!(
                    "trajectory {m} starts at {} instead of the common z0 = {z0}",
                    z[0]
                )));
            }
        }
        Ok(Self { inputs, outputs, z0 })
    }

    pub fn inputs(&self) -> &[SampledPath] {
        &self.inputs
    }

    pub fn outputs(&self) -> &[Vec<f64>] {
        &self.outputs
    }

    pub fn z0(&self) -> f64 {
        self.z0
    }

    pub fn grid(&self) -> &TimeGrid {
        self.inputs[0].grid()
    }

    pub fn channels(&self) -> usize {
        self.inputs[0].channels()
    }

    pub fn len(&self) -> usize {
        self.inputs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.inputs.is_empty()
    }
}

/// Trained readout weights plus everything needed to reuse them.
#[derive(Debug, Clone, PartialEq)]
pub struct SigModel {
    pub beta: Vec<f64>,
    pub order: usize,
    pub channels: usize,
    pub z0: f64,
    pub gamma: f64,
    /// Grid of the training data.
    pub grid: TimeGrid,
}

impl SigModel {
    pub fn new(
        beta: Vec<f64>,
        order: usize,
        channels: usize,
        z0: f64,
        gamma: f64,
        grid: TimeGrid,
    ) -> Result<Self> {
        let expected = feature_count(channels, order);
        if beta.len() != expected {
            return Err(Error::DimensionMismatch(format!(
                "beta has {} entries, order {order} with {channels} channels needs {expected}",
                beta.len()
            )));
        }
        Ok(Self {
            beta,
            order,
            channels,
            z0,
            gamma,
            grid,
        })
    }

    /// Model with all weights zero; predicts the constant `z0`.
    pub fn zero(order: usize, channels: usize, z0: f64, grid: TimeGrid) -> Self {
        Self {
            beta: vec![0.0; feature_count(channels, order)],
            order,
            channels,
            z0,
            gamma: 0.0,
            grid,
        }
    }
}

/// Ridge regression of `Z_{t_j} - z0` on the running signature features of
/// every training trajectory.
pub fn ridge_fit(data: &Dataset, order: usize, gamma: f64) -> Result<SigModel> {
    let features: Vec<FeatureMatrix> = data
        .inputs()
        .iter()
        .map(|u| build_feature_matrix(&u.augment_with_time(), order))
        .collect();
    ridge_fit_features(&features, data, gamma)
}

/// Same as [`ridge_fit`] with precomputed feature matrices, one per
/// trajectory of `data` and all of the same order.
pub fn ridge_fit_features(
    features: &[FeatureMatrix],
    data: &Dataset,
    gamma: f64,
) -> Result<SigModel> {
    if features.len() != data.len() {
        return Err(Error::DimensionMismatch(format!(
            "{} feature matrices for {} trajectories",
            features.len(),
            data.len()
        )));
    }
    let order = features[0].order();
    let channels = data.channels();
    let cols = feature_count(channels, order);
    let rows_per = data.grid().segments();
    if features
        .iter()
        .any(|f| f.order() != order || f.cols() != cols || f.rows() != rows_per)
    {
        return Err(Error::DimensionMismatch(
            "feature matrices disagree with the dataset shape".into(),
        ));
    }

    let stacked_rows = rows_per * features.len();
    let mut stacked = DMatrix::zeros(stacked_rows, cols);
    let mut targets = vec![0.0; stacked_rows];
    for (m, (f, z)) in features.iter().zip(data.outputs()).enumerate() {
        let base = m * rows_per;
        stacked.rows_mut(base, rows_per).copy_from(&f.matrix);
        for j in 0..rows_per {
            targets[base + j] = z[j + 1] - data.z0();
        }
    }

    let beta = ridge_solve(&stacked, &targets, gamma)?;
    SigModel::new(
        beta,
        order,
        channels,
        data.z0(),
        gamma,
        data.grid().clone(),
    )
}

/// Minimises `||s beta - targets||^2 + gamma ||beta||^2` by a pivoted QR
/// factorization of `s` stacked over `sqrt(gamma) I`.
pub fn ridge_solve(s: &DMatrix<f64>, targets: &[f64], gamma: f64) -> Result<Vec<f64>> {
    if !(gamma >= 0.0 && gamma.is_finite()) {
        return Err(Error::InvalidArgument(format!(
            "ridge weight must be finite and non-negative, got {gamma}"
        )));
    }
    if targets.len() != s.nrows() {
        return Err(Error::DimensionMismatch(format!(
            "{} targets for {} feature rows",
            targets.len(),
            s.nrows()
        )));
    }
    let (rows, cols) = s.shape();
    let extra = if gamma > 0.0 { cols } else { 0 };
    let total = rows + extra;
    let mut a = ColMajor::zeros(total, cols);
    for c in 0..cols {
        a.data[c * total..c * total + rows].copy_from_slice(s.column(c).as_slice());
        if extra > 0 {
            a.set(rows + c, c, gamma.sqrt());
        }
    }
    let mut b = targets.to_vec();
    b.resize(total, 0.0);
    linalg::least_squares(a, b)
}

/// `z0` followed by `z0 + S beta`, one value per grid point of `x`.
pub fn predict_outputs(model: &SigModel, x: &AugmentedPath) -> Result<Vec<f64>> {
    if x.input_channels() != model.channels {
        return Err(Error::DimensionMismatch(format!(
            "path has {} input channels, model expects {}",
            x.input_channels(),
            model.channels
        )));
    }
    let features = build_feature_matrix(x, model.order);
    Ok(predict_from_features(model, &features))
}

pub(crate) fn predict_from_features(model: &SigModel, features: &FeatureMatrix) -> Vec<f64> {
    let mut out = Vec::with_capacity(features.rows() + 1);
    out.push(model.z0);
    out.extend(features.apply(&model.beta).into_iter().map(|v| v + model.z0));
    out
}

/// `100 (1 - ||z_hat - z_true|| / ||z_true||)`.
pub fn fit_score(z_hat: &[f64], z_true: &[f64]) -> Result<f64> {
    if z_hat.len() != z_true.len() {
        return Err(Error::DimensionMismatch(format!(
            "{} predicted values vs {} reference values",
            z_hat.len(),
            z_true.len()
        )));
    }
    let reference = linalg::norm(z_true);
    if reference == 0.0 {
        return Err(Error::ZeroReference);
    }
    let diff: Vec<f64> = z_hat.iter().zip(z_true).map(|(a, b)| a - b).collect();
    Ok(100.0 * (1.0 - linalg::norm(&diff) / reference))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::paths::LinearPath;

    #[test]
    fn column_counts() {
        assert_eq!(feature_count(1, 4), 30);
        assert_eq!(feature_count(1, 5), 62);
        for d in 1..=3usize {
            for m in 1..=5u32 {
                let closed = ((d + 1).pow(m + 1) - 1) / d - 1;
                assert_eq!(feature_count(d, m as usize), closed);
            }
        }
    }

    #[test]
    fn first_order_features_are_increments() {
        let x = AugmentedPath::from_linear(
            LinearPath::from_points(&[[0.0, 1.0], [0.3, 1.7]]).unwrap(),
        )
        .unwrap();
        let f = build_feature_matrix(&x, 1);
        assert_eq!(f.rows(), 1);
        assert_eq!(f.cols(), 2);
        assert!((f.row(0)[0] - 0.3).abs() < 1e-15);
        assert!((f.row(0)[1] - 0.7).abs() < 1e-15);
    }

    #[test]
    fn fit_score_reference_values() {
        let z = [1.0, -2.0, 3.0];
        assert_eq!(fit_score(&z, &z).unwrap(), 100.0);
        assert_eq!(fit_score(&[0.0; 3], &z).unwrap(), 0.0);
        let doubled: Vec<f64> = z.iter().map(|v| 2.0 * v).collect();
        assert!(fit_score(&doubled, &z).unwrap().abs() < 1e-12);
        assert!(matches!(
            fit_score(&z, &[0.0; 3]),
            Err(Error::ZeroReference)
        ));
        assert!(fit_score(&z, &[1.0]).is_err());
    }

    #[test]
    fn zero_model_predicts_constant() {
        let grid = TimeGrid::uniform(1.0, 0.25).unwrap();
        let u = SampledPath::from_flat(grid.clone(), 1, vec![0.0, 1.0, -1.0, 2.0, 0.5]).unwrap();
        let model = SigModel::zero(3, 1, 0.7, grid);
        let z = predict_outputs(&model, &u.augment_with_time()).unwrap();
        assert_eq!(z, vec![0.7; 5]);
    }

    #[test]
    fn predict_rejects_channel_mismatch() {
        let grid = TimeGrid::uniform(1.0, 0.5).unwrap();
        let u = SampledPath::from_flat(grid.clone(), 2, vec![0.0; 6]).unwrap();
        let model = SigModel::zero(2, 1, 0.0, grid);
        assert!(predict_outputs(&model, &u.augment_with_time()).is_err());
    }

    #[test]
    fn dataset_requires_common_initial_value() {
        let grid = TimeGrid::uniform(1.0, 0.5).unwrap();
        let u = SampledPath::from_flat(grid, 1, vec![0.0; 3]).unwrap();
        assert!(Dataset::new(vec![u.clone()], vec![vec![0.1, 0.0, 0.0]], 0.0).is_err());
        assert!(Dataset::new(vec![u], vec![vec![0.0, 0.0]], 0.0).is_err());
    }

    #[test]
    fn negative_gamma_is_rejected() {
        let grid = TimeGrid::uniform(1.0, 0.5).unwrap();
        let u = SampledPath::from_flat(grid, 1, vec![0.0, 1.0, 3.0]).unwrap();
        let data = Dataset::new(vec![u], vec![vec![0.0, 1.0, 2.0]], 0.0).unwrap();
        assert!(ridge_fit(&data, 1, -1.0).is_err());
    }
}
