//! Bundles the three per-coordinate mixtures: transforms demonstrations,
//! fits all three models, and exposes per-horizon conditional profiles.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::diffops::{DiffOperator, OperatorKind};
use crate::error::{Error, Result};
use crate::gmm::{EmConfig, GaussianMixture, MixtureSchema};
use crate::trajectory::DemonstrationSet;

/// The three coordinate systems a demonstration is encoded in.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Coordinate {
    Cartesian,
    Tangent,
    Laplacian,
}

impl Coordinate {
    pub const ALL: [Coordinate; 3] = [Coordinate::Cartesian, Coordinate::Tangent, Coordinate::Laplacian];

    pub fn operator_kind(self) -> OperatorKind {
        match self {
            Coordinate::Cartesian => OperatorKind::Identity,
            Coordinate::Tangent => OperatorKind::Tangent,
            Coordinate::Laplacian => OperatorKind::Laplacian,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Coordinate::Cartesian => "cartesian",
            Coordinate::Tangent => "tangent",
            Coordinate::Laplacian => "laplacian",
        }
    }
}

/// Three independent mixtures fitted from the same aligned demonstration
/// set, one per coordinate system.
#[derive(Debug, Clone)]
pub struct MultiCoordModel {
    cartesian: GaussianMixture,
    tangent: GaussianMixture,
    laplacian: GaussianMixture,
    horizon: usize,
    dims: usize,
}

/// Conditional means and covariances over the training horizon for one
/// coordinate system.
#[derive(Debug, Clone)]
pub struct ConditionalProfile {
    pub coordinate: Coordinate,
    /// T x n stacked conditional means.
    pub means: DMatrix<f64>,
    /// Per-time n x n conditional covariances.
    pub block_cov: Vec<DMatrix<f64>>,
}

/// Demonstrations transformed into one coordinate system.
pub fn transform_demos(demos: &DemonstrationSet, coordinate: Coordinate) -> Result<Vec<DMatrix<f64>>> {
    let horizon = demos.require_aligned()?;
    let op = DiffOperator::build(coordinate.operator_kind(), horizon)?;
    demos
        .demos()
        .iter()
        .map(|d| op.apply_matrix(d.samples()))
        .collect()
}

/// Stacks transformed demonstrations into (t, value) training rows with
/// the time index normalized to [0, 1].
fn joint_data(transformed: &[DMatrix<f64>]) -> DMatrix<f64> {
    let horizon = transformed[0].nrows();
    let n = transformed[0].ncols();
    let rows = transformed.len() * horizon;
    let mut data = DMatrix::zeros(rows, 1 + n);
    let mut r = 0;
    for demo in transformed {
        for t in 0..horizon {
            data[(r, 0)] = normalized_time(t, horizon);
            for d in 0..n {
                data[(r, 1 + d)] = demo[(t, d)];
            }
            r += 1;
        }
    }
    data
}

pub fn normalized_time(t: usize, horizon: usize) -> f64 {
    t as f64 / (horizon - 1) as f64
}

impl MultiCoordModel {
    /// Fits the three coordinate mixtures from an aligned demonstration
    /// set. The fits are independent and run concurrently.
    pub fn train(demos: &DemonstrationSet, k: usize, seed: u64, config: &EmConfig) -> Result<Self> {
        let horizon = demos.require_aligned()?;
        let dims = demos.dims();
        let data_c = joint_data(&transform_demos(demos, Coordinate::Cartesian)?);
        let data_g = joint_data(&transform_demos(demos, Coordinate::Tangent)?);
        let data_l = joint_data(&transform_demos(demos, Coordinate::Laplacian)?);
        let ((cartesian, tangent), laplacian) = rayon::join(
            || {
                rayon::join(
                    || GaussianMixture::fit_em(&data_c, k, seed, config),
                    || GaussianMixture::fit_em(&data_g, k, seed, config),
                )
            },
            || GaussianMixture::fit_em(&data_l, k, seed, config),
        );
        Ok(Self {
            cartesian: cartesian?,
            tangent: tangent?,
            laplacian: laplacian?,
            horizon,
            dims,
        })
    }

    pub fn mixture(&self, coordinate: Coordinate) -> &GaussianMixture {
        match coordinate {
            Coordinate::Cartesian => &self.cartesian,
            Coordinate::Tangent => &self.tangent,
            Coordinate::Laplacian => &self.laplacian,
        }
    }

    pub fn horizon(&self) -> usize {
        self.horizon
    }

    pub fn dims(&self) -> usize {
        self.dims
    }

    pub fn operator(&self, coordinate: Coordinate) -> DiffOperator {
        DiffOperator::build(coordinate.operator_kind(), self.horizon)
            .expect("model horizon is validated at construction")
    }

    /// Conditional mean and covariance at each of the T normalized time
    /// indices of the training horizon.
    pub fn profile(&self, coordinate: Coordinate) -> Result<ConditionalProfile> {
        let mixture = self.mixture(coordinate);
        let mut means = DMatrix::zeros(self.horizon, self.dims);
        let mut block_cov = Vec::with_capacity(self.horizon);
        for t in 0..self.horizon {
            let c = mixture.condition(normalized_time(t, self.horizon))?;
            for d in 0..self.dims {
                means[(t, d)] = c.mean[d];
            }
            block_cov.push(c.covariance);
        }
        Ok(ConditionalProfile {
            coordinate,
            means,
            block_cov,
        })
    }

    pub fn to_schema(&self) -> ModelSchema {
        ModelSchema {
            horizon: self.horizon,
            dims: self.dims,
            k: self.cartesian.k(),
            seed: self.cartesian.seed(),
            mixtures: vec![
                self.cartesian.to_schema("cartesian"),
                self.tangent.to_schema("tangent"),
                self.laplacian.to_schema("laplacian"),
            ],
        }
    }

    pub fn from_schema(schema: &ModelSchema) -> Result<Self> {
        if schema.horizon < 3 {
            return Err(Error::Config("model horizon must be >= 3".into()));
        }
        let find = |tag: &str| -> Result<GaussianMixture> {
            let m = schema
                .mixtures
                .iter()
                .find(|m| m.coordinate == tag)
                .ok_or_else(|| Error::Config(format!("missing `{tag}` mixture in model schema")))?;
            GaussianMixture::from_schema(m)
        };
        let cartesian = find("cartesian")?;
        let tangent = find("tangent")?;
        let laplacian = find("laplacian")?;
        if cartesian.dims() != schema.dims || tangent.dims() != schema.dims || laplacian.dims() != schema.dims
        {
            return Err(Error::Config("mixture dimensions disagree with model dims".into()));
        }
        Ok(Self {
            cartesian,
            tangent,
            laplacian,
            horizon: schema.horizon,
            dims: schema.dims,
        })
    }
}

/// JSON persistence schema for the model bundle.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ModelSchema {
    pub horizon: usize,
    pub dims: usize,
    pub k: usize,
    pub seed: u64,
    pub mixtures: Vec<MixtureSchema>,
}
