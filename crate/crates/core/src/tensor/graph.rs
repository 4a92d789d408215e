use log::warn;
use rand::Rng;

use super::ops::activation::{softmax_backward, softmax_forward, ActivationKind};
use super::ops::conv::{self, ConvGeometry, Padding};
use super::ops::loss::{self, TripletTerm};
use super::ops::norm::{self, NormLayout, RunningStats};
use super::ops::pool::{self, PoolGeometry, PoolKind};
use super::ops::{linear_backward, linear_forward, upsample_backward, upsample_forward};
use super::{Real, Result, Tensor, TensorError};

/// Handle to a node on a [`Graph`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

/// Statistics source for [`Graph::batch_norm`].
#[derive(Debug, Clone, Copy)]
pub enum BatchNormMode<T> {
    /// Normalize by batch statistics and blend them into the running
    /// statistics with `momentum`.
    Train {
        momentum: T,
    },
    Infer,
}

/// Bookkeeping returned alongside a triplet loss node.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TripletInfo {
    /// Anchor–positive pairs that contributed a term.
    pub pairs: usize,
    /// True when the batch held no usable triplet (for example a single
    /// class); the loss is then zero.
    pub degenerate: bool,
}

enum Op<T> {
    Leaf,
    Conv {
        input: Var,
        kernel: Var,
        geom: ConvGeometry,
    },
    BiasAdd {
        input: Var,
        bias: Var,
    },
    MaxPool {
        input: Var,
        argmax: Vec<usize>,
    },
    AvgPool {
        input: Var,
        geom: PoolGeometry,
    },
    BatchNorm {
        input: Var,
        gamma: Var,
        beta: Var,
        layout: NormLayout,
        xhat: Vec<T>,
        inv_std: Vec<T>,
        batch_stats: bool,
    },
    Activation {
        input: Var,
        kind: ActivationKind,
    },
    Softmax {
        input: Var,
        dims: (usize, usize, usize),
    },
    Dropout {
        input: Var,
        mask: Vec<T>,
    },
    Reshape {
        input: Var,
    },
    Linear {
        input: Var,
        weight: Var,
        bias: Option<Var>,
        dims: (usize, usize, usize),
    },
    Upsample {
        input: Var,
        dims: (usize, usize, usize),
        factor: (usize, usize),
    },
    Add {
        a: Var,
        b: Var,
    },
    Mul {
        a: Var,
        b: Var,
    },
    Scale {
        input: Var,
        factor: T,
    },
    Sum {
        input: Var,
    },
    Mean {
        input: Var,
    },
    WeightedSum {
        terms: Vec<(Var, T)>,
    },
    CrossEntropy {
        probs: Var,
        grad: Vec<T>,
    },
    Mse {
        pred: Var,
        target: Var,
    },
    Triplet {
        latent: Var,
        dim: usize,
        terms: Vec<TripletTerm<T>>,
    },
}

struct Node<T> {
    value: Tensor<T>,
    grad: Option<Tensor<T>>,
    requires_grad: bool,
    op: Op<T>,
}

/// Append-only tape of tensor operations.
///
/// Nodes are recorded in evaluation order, which is a topological order, so
/// [`backward`](Graph::backward) is a single reverse sweep. A graph can be
/// differentiated once; build a fresh graph for the next step.
pub struct Graph<T> {
    nodes: Vec<Node<T>>,
    differentiated: bool,
}

impl<T: Real> Default for Graph<T> {
    fn default() -> Self {
        Self::new()
    }
}

impl<T: Real> Graph<T> {
    pub fn new() -> Self {
        Self {
            nodes: Vec::new(),
            differentiated: false,
        }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Constant leaf; no gradient is tracked.
    pub fn input(&mut self, value: Tensor<T>) -> Var {
        self.push_leaf(value, false)
    }

    /// Differentiable leaf; holds a gradient after [`backward`](Self::backward).
    pub fn param(&mut self, value: Tensor<T>) -> Var {
        self.push_leaf(value, true)
    }

    fn push_leaf(&mut self, value: Tensor<T>, requires_grad: bool) -> Var {
        self.nodes.push(Node {
            value,
            grad: None,
            requires_grad,
            op: Op::Leaf,
        });
        Var(self.nodes.len() - 1)
    }

    pub fn value(&self, v: Var) -> &Tensor<T> {
        &self.nodes[v.0].value
    }

    pub fn requires_grad(&self, v: Var) -> bool {
        self.nodes[v.0].requires_grad
    }

    /// Gradient of the differentiated loss with respect to a leaf.
    pub fn grad(&self, v: Var) -> Option<&Tensor<T>> {
        self.nodes[v.0].grad.as_ref()
    }

    pub fn take_grad(&mut self, v: Var) -> Option<Tensor<T>> {
        self.nodes[v.0].grad.take()
    }

    fn push(
        &mut self,
        op: &'static str,
        value: Tensor<T>,
        inputs: &[Var],
        record: Op<T>,
    ) -> Result<Var> {
        if !value.is_finite() {
            return Err(TensorError::NonFinite(op));
        }
        let requires_grad = inputs.iter().any(|v| self.nodes[v.0].requires_grad);
        self.nodes.push(Node {
            value,
            grad: None,
            requires_grad,
            op: record,
        });
        Ok(Var(self.nodes.len() - 1))
    }

    fn dims4(&self, v: Var) -> Result<[usize; 4]> {
        self.value(v).dims4()
    }

    /// Grouped 2-d cross-correlation (no kernel flip).
    ///
    /// `input` is `[N, Cin, H, W]`, `kernel` is `[Cout, Cin/groups, kh, kw]`.
    pub fn conv2d(
        &mut self,
        input: Var,
        kernel: Var,
        stride: (usize, usize),
        padding: Padding,
        groups: usize,
    ) -> Result<Var> {
        let geom = ConvGeometry::resolve(
            self.dims4(input)?,
            self.dims4(kernel)?,
            stride,
            padding,
            groups,
        )?;
        let out = conv::forward(&geom, self.value(input).data(), self.value(kernel).data());
        let value = Tensor::new(geom.output_shape(), out)?;
        self.push(
            "conv2d",
            value,
            &[input, kernel],
            Op::Conv {
                input,
                kernel,
                geom,
            },
        )
    }

    /// Depthwise convolution: output channel `c·D + d` filters only input
    /// channel `c` with kernel slice `c·D + d` of a `[C·D, 1, kh, kw]` kernel.
    pub fn depthwise_conv2d(
        &mut self,
        input: Var,
        kernel: Var,
        depth_multiplier: usize,
        stride: (usize, usize),
        padding: Padding,
    ) -> Result<Var> {
        let [_, channels, _, _] = self.dims4(input)?;
        let [k_out, k_in, _, _] = self.dims4(kernel)?;
        if k_in != 1 || depth_multiplier == 0 || k_out != channels * depth_multiplier {
            return Err(TensorError::Dimension(format!(
                "depthwise kernel {:?} does not match {channels} channels with depth multiplier {depth_multiplier}",
                self.value(kernel).shape()
            )));
        }
        self.conv2d(input, kernel, stride, padding, channels)
    }

    /// Adds one bias per channel (axis 1).
    pub fn bias_add(&mut self, input: Var, bias: Var) -> Result<Var> {
        let shape = self.value(input).shape().to_vec();
        if shape.len() < 2 || self.value(bias).numel() != shape[1] {
            return Err(TensorError::Dimension(format!(
                "bias of {} values for input {shape:?}",
                self.value(bias).numel()
            )));
        }
        let inner: usize = shape[2..].iter().product();
        let b = self.value(bias).data();
        let mut out = self.value(input).data().to_vec();
        for (i, v) in out.iter_mut().enumerate() {
            *v += b[(i / inner) % shape[1]];
        }
        let value = Tensor::new(shape, out)?;
        self.push(
            "bias_add",
            value,
            &[input, bias],
            Op::BiasAdd { input, bias },
        )
    }

    pub fn pool2d(
        &mut self,
        input: Var,
        kind: PoolKind,
        window: (usize, usize),
        stride: (usize, usize),
    ) -> Result<Var> {
        let dims = self.dims4(input)?;
        let geom = PoolGeometry::resolve(dims, window, stride)?;
        let shape = [dims[0], dims[1], geom.out_h, geom.out_w];
        let x = self.value(input).data();
        match kind {
            PoolKind::Max => {
                let (out, argmax) = pool::max_forward(&geom, x);
                self.push(
                    "max_pool",
                    Tensor::new(shape, out)?,
                    &[input],
                    Op::MaxPool { input, argmax },
                )
            }
            PoolKind::Average => {
                let out = pool::avg_forward(&geom, x);
                self.push(
                    "avg_pool",
                    Tensor::new(shape, out)?,
                    &[input],
                    Op::AvgPool { input, geom },
                )
            }
        }
    }

    /// Batch normalization over axis 1. In train mode returns the running
    /// statistics blended with this batch's.
    pub fn batch_norm(
        &mut self,
        input: Var,
        gamma: Var,
        beta: Var,
        stats: &RunningStats<T>,
        mode: BatchNormMode<T>,
        eps: T,
    ) -> Result<(Var, Option<RunningStats<T>>)> {
        let shape = self.value(input).shape().to_vec();
        if shape.len() < 2 {
            return Err(TensorError::Dimension(format!(
                "batch norm needs a channel axis, got {shape:?}"
            )));
        }
        let layout = NormLayout {
            outer: shape[0],
            channels: shape[1],
            inner: shape[2..].iter().product(),
        };
        if layout.outer == 0 {
            return Err(TensorError::Dimension(
                "batch norm on an empty batch".into(),
            ));
        }
        if self.value(gamma).numel() != layout.channels
            || self.value(beta).numel() != layout.channels
            || stats.channels() != layout.channels
        {
            return Err(TensorError::Dimension(format!(
                "batch norm parameters do not cover {} channels",
                layout.channels
            )));
        }
        let (batch_stats, running) = match mode {
            BatchNormMode::Train { .. } => (true, None),
            BatchNormMode::Infer => (false, Some(stats)),
        };
        let fwd = norm::forward(
            layout,
            self.value(input).data(),
            self.value(gamma).data(),
            self.value(beta).data(),
            running,
            eps,
        );
        let updated = match mode {
            BatchNormMode::Train { momentum } => {
                Some(stats.updated(&fwd.batch_mean, &fwd.batch_var, momentum))
            }
            BatchNormMode::Infer => None,
        };
        let value = Tensor::new(shape, fwd.out)?;
        let var = self.push(
            "batch_norm",
            value,
            &[input, gamma, beta],
            Op::BatchNorm {
                input,
                gamma,
                beta,
                layout,
                xhat: fwd.xhat,
                inv_std: fwd.inv_std,
                batch_stats,
            },
        )?;
        Ok((var, updated))
    }

    pub fn activation(&mut self, input: Var, kind: ActivationKind) -> Result<Var> {
        let value = self.value(input).map(|v| kind.apply(v));
        self.push(
            "activation",
            value,
            &[input],
            Op::Activation { input, kind },
        )
    }

    pub fn softmax(&mut self, input: Var, axis: usize) -> Result<Var> {
        let shape = self.value(input).shape().to_vec();
        if axis >= shape.len() {
            return Err(TensorError::Dimension(format!(
                "softmax axis {axis} out of range for {shape:?}"
            )));
        }
        let dims = (
            shape[..axis].iter().product(),
            shape[axis],
            shape[axis + 1..].iter().product(),
        );
        let out = softmax_forward(self.value(input).data(), dims.0, dims.1, dims.2);
        self.push(
            "softmax",
            Tensor::new(shape, out)?,
            &[input],
            Op::Softmax { input, dims },
        )
    }

    /// Inverted dropout: zeroes each element with probability `rate` and
    /// scales survivors by `1 / (1 − rate)`.
    pub fn dropout(&mut self, input: Var, rate: f64, rng: &mut impl Rng) -> Result<Var> {
        if !(0.0..1.0).contains(&rate) {
            return Err(TensorError::Contract(format!(
                "dropout rate {rate} outside [0, 1)"
            )));
        }
        let keep = T::lit(1.0 / (1.0 - rate));
        let mask: Vec<T> = (0..self.value(input).numel())
            .map(|_| {
                if rng.random::<f64>() < rate {
                    T::zero()
                } else {
                    keep
                }
            })
            .collect();
        let x = self.value(input);
        let out: Vec<T> = x.data().iter().zip(&mask).map(|(&v, &m)| v * m).collect();
        let value = Tensor::new(x.shape().to_vec(), out)?;
        self.push("dropout", value, &[input], Op::Dropout { input, mask })
    }

    pub fn reshape(&mut self, input: Var, shape: &[usize]) -> Result<Var> {
        let value = self.value(input).clone().reshape(shape.to_vec())?;
        self.push("reshape", value, &[input], Op::Reshape { input })
    }

    /// Collapses every axis after the first.
    pub fn flatten(&mut self, input: Var) -> Result<Var> {
        let shape = self.value(input).shape();
        let n = shape[0];
        let rest = shape[1..].iter().product();
        self.reshape(input, &[n, rest])
    }

    /// Dense layer `x · wᵀ + b` with `x: [N, in]`, `w: [out, in]`, `b: [out]`.
    pub fn linear(&mut self, input: Var, weight: Var, bias: Option<Var>) -> Result<Var> {
        let [n, d_in] = self.value(input).dims2()?;
        let [d_out, w_in] = self.value(weight).dims2()?;
        if w_in != d_in || bias.is_some_and(|b| self.value(b).numel() != d_out) {
            return Err(TensorError::Dimension(format!(
                "linear layer {:?} cannot take input {:?}",
                self.value(weight).shape(),
                self.value(input).shape()
            )));
        }
        let out = linear_forward(
            self.value(input).data(),
            self.value(weight).data(),
            bias.map(|b| self.value(b).data()),
            n,
            d_in,
            d_out,
        );
        let mut inputs = vec![input, weight];
        inputs.extend(bias);
        let value = Tensor::new([n, d_out], out)?;
        self.push(
            "linear",
            value,
            &inputs,
            Op::Linear {
                input,
                weight,
                bias,
                dims: (n, d_in, d_out),
            },
        )
    }

    /// Nearest-neighbour upsampling of the two spatial axes.
    pub fn upsample(&mut self, input: Var, factor: (usize, usize)) -> Result<Var> {
        let [n, c, h, w] = self.dims4(input)?;
        if factor.0 == 0 || factor.1 == 0 {
            return Err(TensorError::Contract(
                "upsampling factor must be positive".into(),
            ));
        }
        let dims = (n * c, h, w);
        let out = upsample_forward(self.value(input).data(), dims.0, h, w, factor);
        let value = Tensor::new([n, c, h * factor.0, w * factor.1], out)?;
        self.push(
            "upsample",
            value,
            &[input],
            Op::Upsample {
                input,
                dims,
                factor,
            },
        )
    }

    fn same_shape(&self, a: Var, b: Var, op: &str) -> Result<()> {
        if self.value(a).shape() != self.value(b).shape() {
            return Err(TensorError::Dimension(format!(
                "{op}: shapes {:?} and {:?} differ",
                self.value(a).shape(),
                self.value(b).shape()
            )));
        }
        Ok(())
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        self.same_shape(a, b, "add")?;
        let out = self
            .value(a)
            .data()
            .iter()
            .zip(self.value(b).data())
            .map(|(&x, &y)| x + y)
            .collect();
        let value = Tensor::new(self.value(a).shape().to_vec(), out)?;
        self.push("add", value, &[a, b], Op::Add { a, b })
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.same_shape(a, b, "mul")?;
        let out = self
            .value(a)
            .data()
            .iter()
            .zip(self.value(b).data())
            .map(|(&x, &y)| x * y)
            .collect();
        let value = Tensor::new(self.value(a).shape().to_vec(), out)?;
        self.push("mul", value, &[a, b], Op::Mul { a, b })
    }

    pub fn scale(&mut self, input: Var, factor: T) -> Result<Var> {
        let value = self.value(input).map(|v| v * factor);
        self.push("scale", value, &[input], Op::Scale { input, factor })
    }

    pub fn sum(&mut self, input: Var) -> Result<Var> {
        let total = self.value(input).data().iter().copied().sum();
        self.push("sum", Tensor::scalar(total), &[input], Op::Sum { input })
    }

    pub fn mean(&mut self, input: Var) -> Result<Var> {
        let x = self.value(input);
        let total: T = x.data().iter().copied().sum();
        let value = Tensor::scalar(total / T::lit(x.numel() as f64));
        self.push("mean", value, &[input], Op::Mean { input })
    }

    /// `Σ wᵢ · sᵢ` over scalar nodes.
    pub fn weighted_sum(&mut self, terms: &[(Var, T)]) -> Result<Var> {
        let mut total = T::zero();
        for &(v, w) in terms {
            if !self.value(v).is_scalar() {
                return Err(TensorError::Contract(
                    "weighted_sum takes scalar terms".into(),
                ));
            }
            total += w * self.value(v).item();
        }
        let inputs: Vec<Var> = terms.iter().map(|t| t.0).collect();
        self.push(
            "weighted_sum",
            Tensor::scalar(total),
            &inputs,
            Op::WeightedSum {
                terms: terms.to_vec(),
            },
        )
    }

    /// Mean negative log-probability of the labelled class, with
    /// probabilities floored at `floor`.
    pub fn cross_entropy(&mut self, probs: Var, labels: &[usize], floor: T) -> Result<Var> {
        let [n, k] = self.value(probs).dims2()?;
        if labels.len() != n {
            return Err(TensorError::Contract(format!(
                "{} labels for {n} rows",
                labels.len()
            )));
        }
        if let Some(&bad) = labels.iter().find(|&&l| l >= k) {
            return Err(TensorError::Contract(format!(
                "label {bad} out of range for {k} classes"
            )));
        }
        let (value, grad) = loss::cross_entropy(self.value(probs).data(), k, labels, floor);
        self.push(
            "cross_entropy",
            Tensor::scalar(value),
            &[probs],
            Op::CrossEntropy { probs, grad },
        )
    }

    pub fn mse(&mut self, pred: Var, target: Var) -> Result<Var> {
        self.same_shape(pred, target, "mse")?;
        let p = self.value(pred).data();
        let t = self.value(target).data();
        let total: T = p.iter().zip(t).map(|(&a, &b)| (a - b) * (a - b)).sum();
        let value = Tensor::scalar(total / T::lit(p.len() as f64));
        self.push("mse", value, &[pred, target], Op::Mse { pred, target })
    }

    /// Semi-hard triplet loss on the rows of `latent: [N, dz]`; see
    /// [`loss::mine_triplets`] for the mining rule. A batch without any
    /// anchor–positive–negative combination yields zero and a warning.
    pub fn triplet_loss(
        &mut self,
        latent: Var,
        labels: &[usize],
        margin: T,
    ) -> Result<(Var, TripletInfo)> {
        let [n, dim] = self.value(latent).dims2()?;
        if labels.len() != n {
            return Err(TensorError::Contract(format!(
                "{} labels for {n} embeddings",
                labels.len()
            )));
        }
        let terms = loss::mine_triplets(self.value(latent).data(), dim, labels, margin);
        let info = TripletInfo {
            pairs: terms.len(),
            degenerate: terms.is_empty(),
        };
        if info.degenerate {
            warn!("triplet loss: batch of {n} has no anchor/positive/negative combination; contributing 0");
        }
        let value = Tensor::scalar(loss::triplet_loss_value(&terms));
        let var = self.push(
            "triplet_loss",
            value,
            &[latent],
            Op::Triplet { latent, dim, terms },
        )?;
        Ok((var, info))
    }

    /// Reverse sweep from a scalar node. Gradients land on every leaf created
    /// with [`param`](Self::param). A second call on the same graph is an
    /// error: gradients are never silently accumulated across passes.
    pub fn backward(&mut self, loss: Var) -> Result<()> {
        if self.differentiated {
            return Err(TensorError::Contract(
                "backward already ran on this graph".into(),
            ));
        }
        if !self.value(loss).is_scalar() {
            return Err(TensorError::Contract(format!(
                "backward needs a scalar loss, got shape {:?}",
                self.value(loss).shape()
            )));
        }
        self.differentiated = true;
        let seed = Tensor::ones(self.value(loss).shape().to_vec());
        self.nodes[loss.0].grad = Some(seed);
        for i in (0..=loss.0).rev() {
            if matches!(self.nodes[i].op, Op::Leaf) || !self.nodes[i].requires_grad {
                continue;
            }
            let Some(dy) = self.nodes[i].grad.take() else {
                continue;
            };
            for (target, g) in self.local_grads(i, &dy) {
                self.accumulate(target, g);
            }
        }
        Ok(())
    }

    fn accumulate(&mut self, target: Var, g: Tensor<T>) {
        let node = &mut self.nodes[target.0];
        match node.grad.as_mut() {
            Some(existing) => existing.add_assign(&g),
            None => node.grad = Some(g),
        }
    }

    fn wants(&self, v: Var) -> bool {
        self.nodes[v.0].requires_grad
    }

    fn shaped(&self, like: Var, data: Vec<T>) -> Tensor<T> {
        Tensor {
            shape: self.value(like).shape().to_vec(),
            data,
        }
    }

    /// Adjoint of node `i` given its output gradient.
    fn local_grads(&self, i: usize, dy: &Tensor<T>) -> Vec<(Var, Tensor<T>)> {
        let mut out = Vec::new();
        let d = dy.data();
        match &self.nodes[i].op {
            Op::Leaf => {}
            Op::Conv {
                input,
                kernel,
                geom,
            } => {
                let (dx, dk) = conv::backward(
                    geom,
                    self.value(*input).data(),
                    self.value(*kernel).data(),
                    d,
                    self.wants(*input),
                    self.wants(*kernel),
                );
                if let Some(dx) = dx {
                    out.push((*input, self.shaped(*input, dx)));
                }
                if let Some(dk) = dk {
                    out.push((*kernel, self.shaped(*kernel, dk)));
                }
            }
            Op::BiasAdd { input, bias } => {
                if self.wants(*input) {
                    out.push((*input, dy.clone()));
                }
                if self.wants(*bias) {
                    let shape = self.value(*input).shape();
                    let inner: usize = shape[2..].iter().product();
                    let mut db = vec![T::zero(); shape[1]];
                    for (k, &g) in d.iter().enumerate() {
                        db[(k / inner) % shape[1]] += g;
                    }
                    out.push((*bias, self.shaped(*bias, db)));
                }
            }
            Op::MaxPool { input, argmax } => {
                let dx = pool::max_backward(self.value(*input).numel(), argmax, d);
                out.push((*input, self.shaped(*input, dx)));
            }
            Op::AvgPool { input, geom } => {
                out.push((*input, self.shaped(*input, pool::avg_backward(geom, d))));
            }
            Op::BatchNorm {
                input,
                gamma,
                beta,
                layout,
                xhat,
                inv_std,
                batch_stats,
            } => {
                let g = norm::backward(
                    *layout,
                    d,
                    xhat,
                    inv_std,
                    self.value(*gamma).data(),
                    *batch_stats,
                );
                if self.wants(*input) {
                    out.push((*input, self.shaped(*input, g.dx)));
                }
                if self.wants(*gamma) {
                    out.push((*gamma, self.shaped(*gamma, g.dgamma)));
                }
                if self.wants(*beta) {
                    out.push((*beta, self.shaped(*beta, g.dbeta)));
                }
            }
            Op::Activation { input, kind } => {
                let x = self.value(*input).data();
                let dx = x
                    .iter()
                    .zip(d)
                    .map(|(&v, &g)| g * kind.derivative(v))
                    .collect();
                out.push((*input, self.shaped(*input, dx)));
            }
            Op::Softmax { input, dims } => {
                let y = self.nodes[i].value.data();
                let dx = softmax_backward(y, d, dims.0, dims.1, dims.2);
                out.push((*input, self.shaped(*input, dx)));
            }
            Op::Dropout { input, mask } => {
                let dx = d.iter().zip(mask).map(|(&g, &m)| g * m).collect();
                out.push((*input, self.shaped(*input, dx)));
            }
            Op::Reshape { input } => {
                out.push((*input, self.shaped(*input, d.to_vec())));
            }
            Op::Linear {
                input,
                weight,
                bias,
                dims,
            } => {
                let g = linear_backward(
                    self.value(*input).data(),
                    self.value(*weight).data(),
                    d,
                    *dims,
                    (
                        self.wants(*input),
                        self.wants(*weight),
                        bias.is_some_and(|b| self.wants(b)),
                    ),
                );
                if let Some(dx) = g.dx {
                    out.push((*input, self.shaped(*input, dx)));
                }
                if let Some(dw) = g.dw {
                    out.push((*weight, self.shaped(*weight, dw)));
                }
                if let (Some(b), Some(db)) = (bias, g.db) {
                    out.push((*b, self.shaped(*b, db)));
                }
            }
            Op::Upsample {
                input,
                dims,
                factor,
            } => {
                let dx = upsample_backward(d, dims.0, dims.1, dims.2, *factor);
                out.push((*input, self.shaped(*input, dx)));
            }
            Op::Add { a, b } => {
                for v in [*a, *b] {
                    if self.wants(v) {
                        out.push((v, dy.clone()));
                    }
                }
            }
            Op::Mul { a, b } => {
                let (va, vb) = (self.value(*a).data(), self.value(*b).data());
                if self.wants(*a) {
                    let da = d.iter().zip(vb).map(|(&g, &y)| g * y).collect();
                    out.push((*a, self.shaped(*a, da)));
                }
                if self.wants(*b) {
                    let db = d.iter().zip(va).map(|(&g, &x)| g * x).collect();
                    out.push((*b, self.shaped(*b, db)));
                }
            }
            Op::Scale { input, factor } => {
                out.push((
                    *input,
                    self.shaped(*input, d.iter().map(|&g| g * *factor).collect()),
                ));
            }
            Op::Sum { input } => {
                let n = self.value(*input).numel();
                out.push((*input, self.shaped(*input, vec![d[0]; n])));
            }
            Op::Mean { input } => {
                let n = self.value(*input).numel();
                let g = d[0] / T::lit(n as f64);
                out.push((*input, self.shaped(*input, vec![g; n])));
            }
            Op::WeightedSum { terms } => {
                for &(v, w) in terms {
                    if self.wants(v) {
                        out.push((v, Tensor::scalar(d[0] * w)));
                    }
                }
            }
            Op::CrossEntropy { probs, grad } => {
                let dp = grad.iter().map(|&g| g * d[0]).collect();
                out.push((*probs, self.shaped(*probs, dp)));
            }
            Op::Mse { pred, target } => {
                let (p, t) = (self.value(*pred).data(), self.value(*target).data());
                let scale = T::lit(2.0) * d[0] / T::lit(p.len() as f64);
                let dp: Vec<T> = p.iter().zip(t).map(|(&a, &b)| scale * (a - b)).collect();
                if self.wants(*target) {
                    out.push((
                        *target,
                        self.shaped(*target, dp.iter().map(|&g| -g).collect()),
                    ));
                }
                if self.wants(*pred) {
                    out.push((*pred, self.shaped(*pred, dp)));
                }
            }
            Op::Triplet { latent, dim, terms } => {
                let dz = loss::triplet_backward(self.value(*latent).data(), *dim, terms, d[0]);
                out.push((*latent, self.shaped(*latent, dz)));
            }
        }
        out.retain(|(v, _)| self.wants(*v));
        out
    }
}
