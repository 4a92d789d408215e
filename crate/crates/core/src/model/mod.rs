//! The three classifier architectures and the objectives they train with.
//!
//! A [`Model`] owns its parameters and batch-norm buffers as plain tensors
//! and re-records itself onto a fresh [`Graph`] for every forward pass. Input
//! batches are `[N, n_channels, n_samples]`.

mod checkpoint;
mod spec;

use rand::distr::{Distribution, Uniform};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::tensor::ops::conv::output_extent;
use crate::tensor::{
    ActivationKind, BatchNormMode, Graph, Padding, PoolKind, Real, RunningStats, Tensor,
    TensorError, TripletInfo, Var,
};

pub use spec::{
    Architecture, DeepConvNetKnobs, EegNetKnobs, LossWeights, Min2NetKnobs, ModelKind, ModelSpec,
};

/// Probability floor inside the cross-entropy.
pub const PROB_FLOOR: f64 = 1e-12;

/// Rows per graph in inference passes.
const INFER_CHUNK: usize = 64;

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("invalid model spec: {0}")]
    Spec(String),
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error(transparent)]
    Tensor(#[from] TensorError),
    #[error("checkpoint: {0}")]
    Checkpoint(String),
    #[error("checkpoint I/O: {0}")]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, ModelError>;

/// A trainable tensor with its optional max-norm cap. The cap bounds the L2
/// norm of every slice along the leading axis (one output unit or filter).
#[derive(Debug, Clone)]
pub struct Param<T> {
    pub name: String,
    pub value: Tensor<T>,
    pub max_norm: Option<f64>,
}

impl<T: Real> Param<T> {
    /// Projects every leading-axis slice back inside the cap, if any.
    pub fn constrain(&mut self) {
        let Some(cap) = self.max_norm else { return };
        let cap = T::lit(cap);
        let width = self.value.numel() / self.value.shape()[0];
        for row in self.value.data_mut().chunks_mut(width) {
            let norm = row.iter().map(|&v| v * v).sum::<T>().sqrt();
            if norm > cap {
                let s = cap / norm;
                row.iter_mut().for_each(|v| *v *= s);
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
enum Layer {
    Conv {
        kernel: usize,
        bias: Option<usize>,
        padding: Padding,
        groups: usize,
    },
    BatchNorm {
        gamma: usize,
        beta: usize,
        stats: usize,
    },
    Act(ActivationKind),
    Pool(PoolKind, (usize, usize)),
    Dropout,
    Flatten,
    /// Per-sample target shape.
    Reshape(Vec<usize>),
    Dense {
        weight: usize,
        bias: Option<usize>,
    },
    Upsample((usize, usize)),
    Softmax,
}

#[derive(Debug, Clone, PartialEq)]
enum Body {
    Classifier(Vec<Layer>),
    AutoEncoder {
        encoder: Vec<Layer>,
        decoder: Vec<Layer>,
        head: Vec<Layer>,
    },
}

/// How a forward pass treats dropout and batch norm.
pub enum Mode<'r> {
    Train(&'r mut ChaCha8Rng),
    Infer,
}

impl Mode<'_> {
    fn is_train(&self) -> bool {
        matches!(self, Mode::Train(_))
    }
}

/// Nodes produced by one forward pass.
pub struct Forward<T> {
    /// `[N, n_classes]`.
    pub probs: Var,
    /// `[N, latent_dim]`, autoencoder only.
    pub latent: Option<Var>,
    /// Same shape as the input, autoencoder only.
    pub reconstruction: Option<Var>,
    /// One graph leaf per parameter, in [`Model::params`] order.
    pub params: Vec<Var>,
    /// Running statistics blended with this batch (train mode only), by
    /// buffer index.
    pub stat_updates: Vec<(usize, RunningStats<T>)>,
}

/// Objective components of one batch.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossBundle {
    pub classification: f64,
    pub reconstruction: Option<f64>,
    pub metric: Option<f64>,
    pub weights: LossWeights,
    /// The triplet term had no usable triplet in this batch.
    pub metric_degenerate: bool,
}

impl LossBundle {
    pub fn total(&self) -> f64 {
        self.weights.ce * self.classification
            + self.weights.mse * self.reconstruction.unwrap_or(0.0)
            + self.weights.triplet * self.metric.unwrap_or(0.0)
    }
}

/// `β_mse·MSE + β_triplet·triplet + β_ce·CE` for a bundle of component values.
pub fn multitask_loss(bundle: &LossBundle) -> Result<f64> {
    bundle.weights.validate()?;
    Ok(bundle.total())
}

#[derive(Debug, Clone)]
pub struct Model<T> {
    spec: ModelSpec,
    params: Vec<Param<T>>,
    stats: Vec<RunningStats<T>>,
    body: Body,
}

struct Builder<T> {
    rng: ChaCha8Rng,
    params: Vec<Param<T>>,
    stats: Vec<RunningStats<T>>,
    /// Per-sample shape flowing through the stack.
    shape: Vec<usize>,
}

impl<T: Real> Builder<T> {
    fn spec_err<V>(&self, what: &str) -> Result<V> {
        Err(ModelError::Spec(format!(
            "{what} does not fit the feature map {:?}",
            self.shape
        )))
    }

    fn glorot(
        &mut self,
        name: &str,
        shape: Vec<usize>,
        fan_in: usize,
        fan_out: usize,
        cap: Option<f64>,
    ) -> usize {
        let limit = (6.0 / (fan_in + fan_out) as f64).sqrt();
        let dist = Uniform::new_inclusive(-limit, limit).expect("finite limit");
        let n = shape.iter().product();
        let data = (0..n).map(|_| T::lit(dist.sample(&mut self.rng))).collect();
        self.push_param(
            name,
            Tensor::new(shape, data).expect("positive extents"),
            cap,
        )
    }

    fn push_param(&mut self, name: &str, value: Tensor<T>, cap: Option<f64>) -> usize {
        self.params.push(Param {
            name: name.to_string(),
            value,
            max_norm: cap,
        });
        self.params.len() - 1
    }

    fn chw(&self) -> [usize; 3] {
        match self.shape[..] {
            [c, h, w] => [c, h, w],
            _ => unreachable!("spatial layer after flatten"),
        }
    }

    #[allow(clippy::too_many_arguments)]
    fn conv(
        &mut self,
        name: &str,
        out: usize,
        (kh, kw): (usize, usize),
        padding: Padding,
        groups: usize,
        bias: bool,
        cap: Option<f64>,
    ) -> Result<Layer> {
        let [c, h, w] = self.chw();
        let oh = output_extent(h, padding.top + padding.bottom, kh, 1);
        let ow = output_extent(w, padding.left + padding.right, kw, 1);
        let (Some(oh), Some(ow)) = (oh, ow) else {
            return self.spec_err(&format!("{name} kernel {kh}×{kw}"));
        };
        let cpg = c / groups;
        let receptive = kh * kw;
        let kernel = self.glorot(
            &format!("{name}.kernel"),
            vec![out, cpg, kh, kw],
            cpg * receptive,
            out / groups * receptive,
            cap,
        );
        let bias =
            bias.then(|| self.push_param(&format!("{name}.bias"), Tensor::zeros([out]), None));
        self.shape = vec![out, oh, ow];
        Ok(Layer::Conv {
            kernel,
            bias,
            padding,
            groups,
        })
    }

    fn batch_norm(&mut self, name: &str) -> Layer {
        let c = self.shape[0];
        let gamma = self.push_param(&format!("{name}.gamma"), Tensor::ones([c]), None);
        let beta = self.push_param(&format!("{name}.beta"), Tensor::zeros([c]), None);
        self.stats.push(RunningStats::new(c));
        Layer::BatchNorm {
            gamma,
            beta,
            stats: self.stats.len() - 1,
        }
    }

    fn pool(&mut self, kind: PoolKind, window: (usize, usize)) -> Result<Layer> {
        let [c, h, w] = self.chw();
        match (
            output_extent(h, 0, window.0, window.0),
            output_extent(w, 0, window.1, window.1),
        ) {
            (Some(oh), Some(ow)) => {
                self.shape = vec![c, oh, ow];
                Ok(Layer::Pool(kind, window))
            }
            _ => self.spec_err(&format!("pool window {}×{}", window.0, window.1)),
        }
    }

    fn flatten(&mut self) -> Layer {
        self.shape = vec![self.shape.iter().product()];
        Layer::Flatten
    }

    fn dense(&mut self, name: &str, out: usize, cap: Option<f64>) -> Layer {
        let d_in = self.shape[0];
        let weight = self.glorot(&format!("{name}.weight"), vec![out, d_in], d_in, out, cap);
        let bias = Some(self.push_param(&format!("{name}.bias"), Tensor::zeros([out]), None));
        self.shape = vec![out];
        Layer::Dense { weight, bias }
    }

    fn reshape(&mut self, shape: Vec<usize>) -> Layer {
        debug_assert_eq!(
            shape.iter().product::<usize>(),
            self.shape.iter().product::<usize>()
        );
        self.shape = shape.clone();
        Layer::Reshape(shape)
    }

    fn upsample(&mut self, factor: (usize, usize)) -> Layer {
        let [c, h, w] = self.chw();
        self.shape = vec![c, h * factor.0, w * factor.1];
        Layer::Upsample(factor)
    }
}

impl<T: Real> Model<T> {
    /// Builds the architecture described by `spec` with seeded Glorot-uniform
    /// weights, zero biases and identity batch norm.
    pub fn build(spec: &ModelSpec, seed: u64) -> Result<Self> {
        spec.validate()?;
        let mut b = Builder {
            rng: ChaCha8Rng::seed_from_u64(seed),
            params: Vec::new(),
            stats: Vec::new(),
            shape: vec![1, spec.n_channels, spec.n_samples],
        };
        let body = match &spec.arch {
            Architecture::EegNet(k) => Body::Classifier(build_eegnet(&mut b, spec, k)?),
            Architecture::DeepConvNet(k) => Body::Classifier(build_deepconvnet(&mut b, spec, k)?),
            Architecture::Min2Net(k) => build_min2net(&mut b, spec, k)?,
        };
        Ok(Self {
            spec: spec.clone(),
            params: b.params,
            stats: b.stats,
            body,
        })
    }

    pub fn spec(&self) -> &ModelSpec {
        &self.spec
    }

    pub fn kind(&self) -> ModelKind {
        self.spec.kind()
    }

    pub fn params(&self) -> &[Param<T>] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [Param<T>] {
        &mut self.params
    }

    pub fn running_stats(&self) -> &[RunningStats<T>] {
        &self.stats
    }

    pub fn set_running_stats(&mut self, index: usize, stats: RunningStats<T>) {
        assert_eq!(
            stats.channels(),
            self.stats[index].channels(),
            "buffer width mismatch"
        );
        self.stats[index] = stats;
    }

    /// Trainable scalar count; running statistics are not counted.
    pub fn n_params(&self) -> usize {
        self.params.iter().map(|p| p.value.numel()).sum()
    }

    /// Rescales every capped parameter slice whose norm exceeds its cap.
    pub fn apply_constraints(&mut self) {
        self.params.iter_mut().for_each(Param::constrain);
    }

    fn check_input(&self, shape: &[usize]) -> Result<usize> {
        match shape {
            &[n, c, s] if c == self.spec.n_channels && s == self.spec.n_samples => Ok(n),
            _ => Err(TensorError::Dimension(format!(
                "model expects [N, {}, {}], got {shape:?}",
                self.spec.n_channels, self.spec.n_samples
            ))
            .into()),
        }
    }

    /// Records the network on `g`. Parameters become differentiable leaves in
    /// train mode and constants otherwise.
    pub fn forward(&self, g: &mut Graph<T>, x: Var, mut mode: Mode<'_>) -> Result<Forward<T>> {
        let n = self.check_input(g.value(x).shape())?;
        let train = mode.is_train();
        let params: Vec<Var> = self
            .params
            .iter()
            .map(|p| {
                if train {
                    g.param(p.value.clone())
                } else {
                    g.input(p.value.clone())
                }
            })
            .collect();
        let mut updates = Vec::new();
        let mut run =
            |g: &mut Graph<T>, layers: &[Layer], mut h: Var, mode: &mut Mode<'_>| -> Result<Var> {
                for layer in layers {
                    h = self.apply(g, layer, h, n, &params, mode, &mut updates)?;
                }
                Ok(h)
            };
        let out = match &self.body {
            Body::Classifier(layers) => {
                let input = g.reshape(x, &[n, 1, self.spec.n_channels, self.spec.n_samples])?;
                let probs = run(g, layers, input, &mut mode)?;
                (probs, None, None)
            }
            Body::AutoEncoder {
                encoder,
                decoder,
                head,
            } => {
                let input = g.reshape(x, &[n, self.spec.n_channels, 1, self.spec.n_samples])?;
                let z = run(g, encoder, input, &mut mode)?;
                let recon = run(g, decoder, z, &mut mode)?;
                let recon = g.reshape(recon, &[n, self.spec.n_channels, self.spec.n_samples])?;
                let probs = run(g, head, z, &mut mode)?;
                (probs, Some(z), Some(recon))
            }
        };
        Ok(Forward {
            probs: out.0,
            latent: out.1,
            reconstruction: out.2,
            params,
            stat_updates: updates,
        })
    }

    #[allow(clippy::too_many_arguments)]
    fn apply(
        &self,
        g: &mut Graph<T>,
        layer: &Layer,
        h: Var,
        n: usize,
        params: &[Var],
        mode: &mut Mode<'_>,
        updates: &mut Vec<(usize, RunningStats<T>)>,
    ) -> Result<Var> {
        let out = match layer {
            Layer::Conv {
                kernel,
                bias,
                padding,
                groups,
            } => {
                let y = g.conv2d(h, params[*kernel], (1, 1), *padding, *groups)?;
                match bias {
                    Some(b) => g.bias_add(y, params[*b])?,
                    None => y,
                }
            }
            Layer::BatchNorm { gamma, beta, stats } => {
                let bn_mode = match mode {
                    Mode::Train(_) => BatchNormMode::Train {
                        momentum: T::lit(self.spec.bn_momentum),
                    },
                    Mode::Infer => BatchNormMode::Infer,
                };
                let (y, updated) = g.batch_norm(
                    h,
                    params[*gamma],
                    params[*beta],
                    &self.stats[*stats],
                    bn_mode,
                    T::lit(self.spec.bn_eps),
                )?;
                updates.extend(updated.map(|s| (*stats, s)));
                y
            }
            Layer::Act(kind) => g.activation(h, *kind)?,
            Layer::Pool(kind, window) => g.pool2d(h, *kind, *window, *window)?,
            Layer::Dropout => match (mode, self.spec.dropout_rate) {
                (Mode::Train(rng), Some(rate)) if rate > 0.0 => g.dropout(h, rate, &mut **rng)?,
                _ => h,
            },
            Layer::Flatten => g.flatten(h)?,
            Layer::Reshape(shape) => {
                let mut full = vec![n];
                full.extend(shape);
                g.reshape(h, &full)?
            }
            Layer::Dense { weight, bias } => {
                g.linear(h, params[*weight], bias.map(|b| params[b]))?
            }
            Layer::Upsample(factor) => g.upsample(h, *factor)?,
            Layer::Softmax => g.softmax(h, 1)?,
        };
        Ok(out)
    }

    /// Training objective for a recorded forward pass on input `x`.
    pub fn loss(
        &self,
        g: &mut Graph<T>,
        fwd: &Forward<T>,
        x: Var,
        labels: &[usize],
    ) -> Result<(Var, LossBundle)> {
        let ce = g.cross_entropy(fwd.probs, labels, T::lit(PROB_FLOOR))?;
        let classification = g.value(ce).item().to_f64().unwrap_or(f64::NAN);
        let Architecture::Min2Net(k) = &self.spec.arch else {
            let bundle = LossBundle {
                classification,
                reconstruction: None,
                metric: None,
                weights: LossWeights::new(1.0, 0.0, 0.0)?,
                metric_degenerate: false,
            };
            return Ok((ce, bundle));
        };
        let (recon, z) = match (fwd.reconstruction, fwd.latent) {
            (Some(r), Some(z)) => (r, z),
            _ => unreachable!("autoencoder forward carries latent and reconstruction"),
        };
        let mse = g.mse(recon, x)?;
        let (triplet, TripletInfo { degenerate, .. }) =
            g.triplet_loss(z, labels, T::lit(k.margin))?;
        let w = k.weights;
        let total = g.weighted_sum(&[
            (mse, T::lit(w.mse)),
            (triplet, T::lit(w.triplet)),
            (ce, T::lit(w.ce)),
        ])?;
        let value = |v: Var| g.value(v).item().to_f64().unwrap_or(f64::NAN);
        let bundle = LossBundle {
            classification,
            reconstruction: Some(value(mse)),
            metric: Some(value(triplet)),
            weights: w,
            metric_degenerate: degenerate,
        };
        Ok((total, bundle))
    }

    /// Inference-mode class probabilities `[N, n_classes]`.
    pub fn predict_proba(&self, x: &Tensor<T>) -> Result<Tensor<T>> {
        let n = self.check_input(x.shape())?;
        let row = self.spec.n_channels * self.spec.n_samples;
        let mut probs = Vec::with_capacity(n * self.spec.n_classes);
        for chunk in x.data().chunks(INFER_CHUNK * row) {
            let batch = Tensor::new(
                [chunk.len() / row, self.spec.n_channels, self.spec.n_samples],
                chunk.to_vec(),
            )?;
            let mut g = Graph::new();
            let xv = g.input(batch);
            let fwd = self.forward(&mut g, xv, Mode::Infer)?;
            probs.extend_from_slice(g.value(fwd.probs).data());
        }
        Ok(Tensor::new([n, self.spec.n_classes], probs)?)
    }

    /// Arg-max class per trial; ties go to the lower class index.
    pub fn predict(&self, x: &Tensor<T>) -> Result<Vec<usize>> {
        let probs = self.predict_proba(x)?;
        Ok(argmax_rows(probs.data(), self.spec.n_classes))
    }
}

/// Index of the first maximum of every row.
pub fn argmax_rows<T: Real>(data: &[T], width: usize) -> Vec<usize> {
    data.chunks(width)
        .map(|row| {
            row.iter()
                .enumerate()
                .fold(
                    (0, row[0]),
                    |best, (i, &v)| if v > best.1 { (i, v) } else { best },
                )
                .0
        })
        .collect()
}

fn build_eegnet<T: Real>(
    b: &mut Builder<T>,
    spec: &ModelSpec,
    k: &EegNetKnobs,
) -> Result<Vec<Layer>> {
    let c = spec.n_channels;
    let f1d = k.f1 * k.depth;
    let mut layers = vec![
        b.conv(
            "temporal",
            k.f1,
            (1, k.temporal_kernel),
            Padding::same(1, k.temporal_kernel),
            1,
            false,
            None,
        )?,
        b.batch_norm("bn1"),
        b.conv(
            "spatial",
            f1d,
            (c, 1),
            Padding::default(),
            k.f1,
            false,
            k.depthwise_max_norm,
        )?,
        b.batch_norm("bn2"),
        Layer::Act(ActivationKind::Elu),
        b.pool(PoolKind::Average, (1, k.pool1))?,
        Layer::Dropout,
        b.conv(
            "separable.depthwise",
            f1d,
            (1, k.separable_kernel),
            Padding::same(1, k.separable_kernel),
            f1d,
            false,
            None,
        )?,
        b.conv(
            "separable.pointwise",
            k.f2,
            (1, 1),
            Padding::default(),
            1,
            false,
            None,
        )?,
        b.batch_norm("bn3"),
        Layer::Act(ActivationKind::Elu),
        b.pool(PoolKind::Average, (1, k.pool2))?,
        Layer::Dropout,
    ];
    layers.push(b.flatten());
    layers.push(b.dense("classifier", spec.n_classes, k.dense_max_norm));
    layers.push(Layer::Softmax);
    Ok(layers)
}

fn build_deepconvnet<T: Real>(
    b: &mut Builder<T>,
    spec: &ModelSpec,
    k: &DeepConvNetKnobs,
) -> Result<Vec<Layer>> {
    let valid = Padding::default();
    let mut layers = vec![
        b.conv(
            "temporal",
            k.temporal_filters,
            (1, k.kernel),
            valid,
            1,
            true,
            None,
        )?,
        b.conv(
            "spatial",
            k.spatial_filters,
            (spec.n_channels, 1),
            valid,
            1,
            false,
            None,
        )?,
        b.batch_norm("bn1"),
        Layer::Act(ActivationKind::Elu),
        b.pool(PoolKind::Max, (1, k.pool))?,
    ];
    for (i, &filters) in k.block_filters.iter().enumerate() {
        layers.push(Layer::Dropout);
        layers.push(b.conv(
            &format!("block{}", i + 2),
            filters,
            (1, k.kernel),
            valid,
            1,
            false,
            None,
        )?);
        layers.push(b.batch_norm(&format!("bn{}", i + 2)));
        layers.push(Layer::Act(ActivationKind::Elu));
        layers.push(b.pool(PoolKind::Max, (1, k.pool))?);
    }
    layers.push(Layer::Dropout);
    layers.push(b.flatten());
    layers.push(b.dense("classifier", spec.n_classes, None));
    layers.push(Layer::Softmax);
    Ok(layers)
}

fn build_min2net<T: Real>(b: &mut Builder<T>, spec: &ModelSpec, k: &Min2NetKnobs) -> Result<Body> {
    // channels become feature maps over a one-row time axis
    b.shape = vec![spec.n_channels, 1, spec.n_samples];
    let same = |kw: usize| Padding::same(1, kw);
    let mut encoder = vec![
        b.conv(
            "encoder.conv1",
            k.filters1,
            (1, k.kernel1),
            same(k.kernel1),
            1,
            true,
            None,
        )?,
        Layer::Act(ActivationKind::Elu),
        b.pool(PoolKind::Average, (1, k.pool1))?,
        b.conv(
            "encoder.conv2",
            k.filters2,
            (1, k.kernel2),
            same(k.kernel2),
            1,
            true,
            None,
        )?,
        Layer::Act(ActivationKind::Elu),
        b.pool(PoolKind::Average, (1, k.pool2))?,
    ];
    let bottleneck = b.shape.clone();
    encoder.push(b.flatten());
    encoder.push(b.dense("encoder.latent", k.latent_dim, None));

    let mut decoder = vec![b.dense("decoder.dense", bottleneck.iter().product(), None)];
    decoder.push(Layer::Act(ActivationKind::Elu));
    decoder.push(b.reshape(bottleneck));
    decoder.push(b.upsample((1, k.pool2)));
    decoder.push(b.conv(
        "decoder.conv1",
        k.filters1,
        (1, k.kernel2),
        same(k.kernel2),
        1,
        true,
        None,
    )?);
    decoder.push(Layer::Act(ActivationKind::Elu));
    decoder.push(b.upsample((1, k.pool1)));
    decoder.push(b.conv(
        "decoder.conv2",
        spec.n_channels,
        (1, k.kernel1),
        same(k.kernel1),
        1,
        true,
        None,
    )?);
    debug_assert_eq!(b.shape, [spec.n_channels, 1, spec.n_samples]);

    b.shape = vec![k.latent_dim];
    let head = vec![b.dense("classifier", spec.n_classes, None), Layer::Softmax];
    Ok(Body::AutoEncoder {
        encoder,
        decoder,
        head,
    })
}
