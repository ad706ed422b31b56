//! kNN graph → fuzzy simplicial set → 2D UMAP layout.

mod curve;
mod format;
mod fuzzy;
mod init;
mod knn;
mod nndescent;
mod optimize;
mod trust;

use std::fmt;
use std::str::FromStr;

use serde::Serialize;

pub use curve::{curve_rmse, fit_curve_params, target_curve};
pub use format::{decode_layout, encode_layout, read_layout, write_layout};
pub use fuzzy::{fuzzy_simplicial_set, smooth_knn_dist, FuzzyGraph, SIGMA_ITERATIONS, SIGMA_TOLERANCE};
pub use init::{init_layout, spectral_embedding, INIT_EXTENT};
pub use knn::{build_knn, euclidean, exact_knn, knn_recall, KnnGraph};
pub use nndescent::{nn_descent, NnDescentParams};
pub use optimize::{
    attractive_gradient, attractive_log_likelihood, optimize_layout, repulsive_gradient,
    repulsive_log_likelihood, GRADIENT_CLIP,
};
pub use trust::compute_trustworthiness;

use crate::embed::EmbeddingMatrix;
use crate::error::{Error, Result};

/// Above this many points `knn_mode = auto` switches to NN-descent.
pub const EXACT_KNN_LIMIT: usize = 20_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum KnnMode {
    Exact,
    NnDescent,
}

impl FromStr for KnnMode {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "exact" => Ok(KnnMode::Exact),
            "nn-descent" | "nn_descent" | "nndescent" => Ok(KnnMode::NnDescent),
            other => Err(Error::invalid(format!("unknown knn mode {other:?}"))),
        }
    }
}

impl fmt::Display for KnnMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            KnnMode::Exact => "exact",
            KnnMode::NnDescent => "nn-descent",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum InitMode {
    Random,
    Spectral,
}

impl FromStr for InitMode {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "random" => Ok(InitMode::Random),
            "spectral" => Ok(InitMode::Spectral),
            other => Err(Error::invalid(format!("unknown init mode {other:?}"))),
        }
    }
}

impl fmt::Display for InitMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            InitMode::Random => "random",
            InitMode::Spectral => "spectral",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LayoutConfig {
    pub n_neighbors: usize,
    pub min_dist: f64,
    pub n_epochs: usize,
    pub learning_rate: f64,
    pub negative_samples: usize,
    pub seed: u64,
    pub init: InitMode,
    /// `None` picks exact up to [`EXACT_KNN_LIMIT`] points.
    pub knn_mode: Option<KnnMode>,
    /// Lock-free parallel SGD. Not bit-reproducible.
    pub parallel: bool,
}

impl Default for LayoutConfig {
    fn default() -> Self {
        LayoutConfig {
            n_neighbors: 15,
            min_dist: 0.1,
            n_epochs: 200,
            learning_rate: 1.0,
            negative_samples: 5,
            seed: 42,
            init: InitMode::Random,
            knn_mode: None,
            parallel: false,
        }
    }
}

impl LayoutConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_neighbors < 2 {
            return Err(Error::invalid("n_neighbors must be at least 2"));
        }
        if !(self.min_dist > 0.0 && self.min_dist.is_finite()) {
            return Err(Error::invalid("min_dist must be positive"));
        }
        if self.n_epochs < 1 {
            return Err(Error::invalid("n_epochs must be at least 1"));
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::invalid("learning_rate must be positive"));
        }
        Ok(())
    }

    pub fn knn_mode_for(&self, n: usize) -> KnnMode {
        self.knn_mode.unwrap_or(if n <= EXACT_KNN_LIMIT {
            KnnMode::Exact
        } else {
            KnnMode::NnDescent
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Bounds {
    pub min_x: f64,
    pub min_y: f64,
    pub max_x: f64,
    pub max_y: f64,
}

impl Bounds {
    pub fn of(coords: &[[f64; 2]]) -> Self {
        let mut b = Bounds {
            min_x: f64::INFINITY,
            min_y: f64::INFINITY,
            max_x: f64::NEG_INFINITY,
            max_y: f64::NEG_INFINITY,
        };
        for &[x, y] in coords {
            b.min_x = b.min_x.min(x);
            b.min_y = b.min_y.min(y);
            b.max_x = b.max_x.max(x);
            b.max_y = b.max_y.max(y);
        }
        b
    }

    pub fn width(&self) -> f64 {
        self.max_x - self.min_x
    }

    pub fn height(&self) -> f64 {
        self.max_y - self.min_y
    }

    pub fn contains(&self, [x, y]: [f64; 2]) -> bool {
        x >= self.min_x && x <= self.max_x && y >= self.min_y && y <= self.max_y
    }

    pub fn intersects(&self, other: &Bounds) -> bool {
        self.min_x <= other.max_x && other.min_x <= self.max_x && self.min_y <= other.max_y && other.min_y <= self.max_y
    }
}

/// 2D coordinates for each object id.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Layout2D {
    pub ids: Vec<String>,
    pub coords: Vec<[f64; 2]>,
    pub config: LayoutConfig,
    pub bounds: Bounds,
}

impl Layout2D {
    pub fn new(ids: Vec<String>, coords: Vec<[f64; 2]>, config: LayoutConfig) -> Result<Self> {
        if ids.len() != coords.len() {
            return Err(Error::invalid(format!("{} ids but {} coordinates", ids.len(), coords.len())));
        }
        if let Some(i) = coords.iter().position(|c| !c[0].is_finite() || !c[1].is_finite()) {
            return Err(Error::Numerical(format!("non-finite coordinate for point {i}")));
        }
        let bounds = Bounds::of(&coords);
        Ok(Layout2D {
            ids,
            coords,
            config,
            bounds,
        })
    }

    pub fn len(&self) -> usize {
        self.coords.len()
    }

    pub fn is_empty(&self) -> bool {
        self.coords.is_empty()
    }

    /// Bit patterns of every coordinate, for reproducibility checks.
    pub fn coord_bits(&self) -> Vec<[u64; 2]> {
        self.coords.iter().map(|c| [c[0].to_bits(), c[1].to_bits()]).collect()
    }
}

/// The full layout stage: kNN, fuzzy set, initialization and SGD.
pub fn run_layout(matrix: &EmbeddingMatrix, config: &LayoutConfig) -> Result<Layout2D> {
    config.validate()?;
    let n = matrix.len();
    if n < 3 {
        return Err(Error::invalid(format!("need at least 3 points to lay out, got {n}")));
    }
    let mut config = config.clone();
    if config.n_neighbors >= n {
        tracing::warn!(n_neighbors = config.n_neighbors, n, "n_neighbors clamped to n - 1");
        config.n_neighbors = n - 1;
    }
    let mode = config.knn_mode_for(n);
    let knn = build_knn(matrix, config.n_neighbors, mode, config.seed)?;
    let graph = fuzzy_simplicial_set(&knn);
    let init = init_layout(&graph, matrix.ids(), &config)?;
    optimize_layout(&graph, &init, &config)
}
