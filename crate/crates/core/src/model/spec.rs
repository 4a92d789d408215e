use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::{ModelError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ModelKind {
    EegNet,
    DeepConvNet,
    Min2Net,
}

impl ModelKind {
    pub const ALL: [ModelKind; 3] = [
        ModelKind::EegNet,
        ModelKind::DeepConvNet,
        ModelKind::Min2Net,
    ];

    pub fn name(self) -> &'static str {
        match self {
            ModelKind::EegNet => "eegnet",
            ModelKind::DeepConvNet => "deepconvnet",
            ModelKind::Min2Net => "min2net",
        }
    }

    /// Dropout rate from the hyperparameter table; MIN2Net has none.
    pub fn default_dropout(self) -> Option<f64> {
        match self {
            ModelKind::EegNet => Some(0.4),
            ModelKind::DeepConvNet => Some(0.5),
            ModelKind::Min2Net => None,
        }
    }
}

impl fmt::Display for ModelKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ModelKind {
    type Err = ModelError;

    fn from_str(s: &str) -> Result<Self> {
        ModelKind::ALL
            .into_iter()
            .find(|k| k.name().eq_ignore_ascii_case(s))
            .ok_or_else(|| {
                ModelError::Spec(format!(
                    "unknown model '{s}' (expected eegnet, deepconvnet or min2net)"
                ))
            })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EegNetKnobs {
    /// Temporal filters.
    pub f1: usize,
    /// Spatial filters per temporal filter.
    pub depth: usize,
    /// Pointwise filters of the separable block.
    pub f2: usize,
    pub temporal_kernel: usize,
    pub separable_kernel: usize,
    pub pool1: usize,
    pub pool2: usize,
    pub depthwise_max_norm: Option<f64>,
    pub dense_max_norm: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DeepConvNetKnobs {
    pub temporal_filters: usize,
    pub spatial_filters: usize,
    /// Filters of the three plain conv blocks after the first.
    pub block_filters: [usize; 3],
    pub kernel: usize,
    pub pool: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossWeights {
    pub ce: f64,
    pub mse: f64,
    pub triplet: f64,
}

impl LossWeights {
    pub fn new(ce: f64, mse: f64, triplet: f64) -> Result<Self> {
        let w = Self { ce, mse, triplet };
        w.validate()?;
        Ok(w)
    }

    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("ce", self.ce),
            ("mse", self.mse),
            ("triplet", self.triplet),
        ] {
            if !(v.is_finite() && v >= 0.0) {
                return Err(ModelError::Config(format!(
                    "loss weight {name} must be a finite value ≥ 0, got {v}"
                )));
            }
        }
        Ok(())
    }
}

impl Default for LossWeights {
    fn default() -> Self {
        Self {
            ce: 1.0,
            mse: 1.0,
            triplet: 1.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Min2NetKnobs {
    pub filters1: usize,
    pub filters2: usize,
    pub kernel1: usize,
    pub kernel2: usize,
    pub pool1: usize,
    pub pool2: usize,
    pub latent_dim: usize,
    pub margin: f64,
    pub weights: LossWeights,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum Architecture {
    EegNet(EegNetKnobs),
    DeepConvNet(DeepConvNetKnobs),
    Min2Net(Min2NetKnobs),
}

/// Geometry and hyperparameters sufficient to rebuild a model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelSpec {
    pub n_channels: usize,
    pub n_samples: usize,
    pub n_classes: usize,
    pub dropout_rate: Option<f64>,
    pub bn_momentum: f64,
    pub bn_eps: f64,
    pub arch: Architecture,
}

/// Largest `p ≤ 10` with `p²` dividing `n_samples`, so both pooling stages of
/// the autoencoder invert exactly.
fn min2net_pool(n_samples: usize) -> usize {
    (2..=10)
        .rev()
        .find(|p| n_samples.is_multiple_of(p * p))
        .unwrap_or(1)
}

impl ModelSpec {
    /// Default architecture for `kind` on the given recording geometry, with
    /// two classes and the table dropout rate.
    pub fn new(kind: ModelKind, n_channels: usize, n_samples: usize, sample_rate: f64) -> Self {
        let arch = match kind {
            ModelKind::EegNet => Architecture::EegNet(EegNetKnobs {
                f1: 8,
                depth: 2,
                f2: 16,
                temporal_kernel: ((sample_rate / 2.0).round() as usize).max(1),
                separable_kernel: 16,
                pool1: 4,
                pool2: 8,
                depthwise_max_norm: Some(1.0),
                dense_max_norm: Some(0.25),
            }),
            ModelKind::DeepConvNet => Architecture::DeepConvNet(DeepConvNetKnobs {
                temporal_filters: 25,
                spatial_filters: 25,
                block_filters: [50, 100, 200],
                kernel: 10,
                pool: 3,
            }),
            ModelKind::Min2Net => {
                let pool = min2net_pool(n_samples);
                Architecture::Min2Net(Min2NetKnobs {
                    filters1: n_channels,
                    filters2: n_channels,
                    kernel1: 64,
                    kernel2: 32,
                    pool1: pool,
                    pool2: pool,
                    latent_dim: 64,
                    margin: 1.0,
                    weights: LossWeights::default(),
                })
            }
        };
        Self {
            n_channels,
            n_samples,
            n_classes: 2,
            dropout_rate: kind.default_dropout(),
            bn_momentum: 0.99,
            bn_eps: 1e-5,
            arch,
        }
    }

    pub fn kind(&self) -> ModelKind {
        match self.arch {
            Architecture::EegNet(_) => ModelKind::EegNet,
            Architecture::DeepConvNet(_) => ModelKind::DeepConvNet,
            Architecture::Min2Net(_) => ModelKind::Min2Net,
        }
    }

    /// Checks the geometry-independent invariants. Extent exhaustion is
    /// detected while building.
    pub fn validate(&self) -> Result<()> {
        let err = |m: String| Err(ModelError::Spec(m));
        if self.n_channels == 0 {
            return err("n_channels must be at least 1".into());
        }
        if self.n_samples == 0 {
            return err("n_samples must be at least 1".into());
        }
        if self.n_classes < 2 {
            return err(format!(
                "n_classes must be at least 2, got {}",
                self.n_classes
            ));
        }
        match (self.kind(), self.dropout_rate) {
            (ModelKind::Min2Net, Some(_)) => return err("min2net has no dropout rate".into()),
            (ModelKind::Min2Net, None) => {}
            (kind, None) => return err(format!("{kind} needs a dropout rate")),
            (_, Some(r)) if !(0.0..1.0).contains(&r) => {
                return err(format!("dropout rate {r} outside [0, 1)"))
            }
            _ => {}
        }
        if !(0.0..=1.0).contains(&self.bn_momentum) || self.bn_eps.is_nan() || self.bn_eps <= 0.0 {
            return err("batch-norm momentum must lie in [0, 1] and epsilon be positive".into());
        }
        let positive = |name: &str, v: usize| {
            if v == 0 {
                err(format!("{name} must be positive"))
            } else {
                Ok(())
            }
        };
        match &self.arch {
            Architecture::EegNet(k) => {
                for (name, v) in [
                    ("f1", k.f1),
                    ("depth", k.depth),
                    ("f2", k.f2),
                    ("temporal_kernel", k.temporal_kernel),
                    ("separable_kernel", k.separable_kernel),
                    ("pool1", k.pool1),
                    ("pool2", k.pool2),
                ] {
                    positive(name, v)?;
                }
                if self.n_samples < k.temporal_kernel {
                    return err(format!(
                        "n_samples {} shorter than the temporal kernel {}",
                        self.n_samples, k.temporal_kernel
                    ));
                }
                for cap in [k.depthwise_max_norm, k.dense_max_norm]
                    .into_iter()
                    .flatten()
                {
                    if cap.is_nan() || cap <= 0.0 {
                        return err(format!("max-norm cap must be positive, got {cap}"));
                    }
                }
            }
            Architecture::DeepConvNet(k) => {
                for (name, v) in [
                    ("temporal_filters", k.temporal_filters),
                    ("spatial_filters", k.spatial_filters),
                    ("kernel", k.kernel),
                    ("pool", k.pool),
                ] {
                    positive(name, v)?;
                }
                for v in k.block_filters {
                    positive("block_filters", v)?;
                }
            }
            Architecture::Min2Net(k) => {
                for (name, v) in [
                    ("filters1", k.filters1),
                    ("filters2", k.filters2),
                    ("kernel1", k.kernel1),
                    ("kernel2", k.kernel2),
                    ("pool1", k.pool1),
                    ("pool2", k.pool2),
                    ("latent_dim", k.latent_dim),
                ] {
                    positive(name, v)?;
                }
                if !self.n_samples.is_multiple_of(k.pool1 * k.pool2) {
                    return err(format!(
                        "n_samples {} not divisible by pool1·pool2 = {}",
                        self.n_samples,
                        k.pool1 * k.pool2
                    ));
                }
                if !(k.margin.is_finite() && k.margin >= 0.0) {
                    return err(format!("triplet margin must be ≥ 0, got {}", k.margin));
                }
                k.weights.validate()?;
            }
        }
        Ok(())
    }
}
