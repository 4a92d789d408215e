//! Independent oracles shared by the integration suites. Gradient oracles
//! only ever evaluate forward values.
#![allow(dead_code)]

use mitransfer::data::{standardize, synthesize_dataset, SubjectRecord, SynthConfig};
use mitransfer::model::{
    Architecture, DeepConvNetKnobs, EegNetKnobs, LossWeights, Min2NetKnobs, Mode, Model, ModelKind,
    ModelSpec,
};
use mitransfer::tensor::{
    ActivationKind, BatchNormMode, Graph, Padding, PoolKind, RunningStats, Tensor, Var,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn random_tensor(shape: &[usize], rng: &mut ChaCha8Rng) -> Tensor<f64> {
    let n = shape.iter().product();
    let data = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
    Tensor::new(shape.to_vec(), data).unwrap()
}

/// Direct nested-loop grouped cross-correlation with explicit symmetric or
/// asymmetric zero padding `(top, bottom, left, right)`.
#[allow(clippy::too_many_arguments)]
pub fn naive_conv(
    x: &[f64],
    [n, cin, h, w]: [usize; 4],
    k: &[f64],
    [cout, cpg, kh, kw]: [usize; 4],
    (sh, sw): (usize, usize),
    (top, bottom, left, right): (usize, usize, usize, usize),
    groups: usize,
) -> (Vec<f64>, [usize; 4]) {
    let oh = (h + top + bottom - kh) / sh + 1;
    let ow = (w + left + right - kw) / sw + 1;
    let opg = cout / groups;
    let mut out = vec![0.0; n * cout * oh * ow];
    for b in 0..n {
        for co in 0..cout {
            let g = co / opg;
            for oy in 0..oh {
                for ox in 0..ow {
                    let mut acc = 0.0;
                    for ci in 0..cpg {
                        let c = g * cpg + ci;
                        for i in 0..kh {
                            for j in 0..kw {
                                let iy = (oy * sh + i) as isize - top as isize;
                                let ix = (ox * sw + j) as isize - left as isize;
                                if iy < 0 || ix < 0 || iy as usize >= h || ix as usize >= w {
                                    continue;
                                }
                                acc += x[((b * cin + c) * h + iy as usize) * w + ix as usize]
                                    * k[((co * cpg + ci) * kh + i) * kw + j];
                            }
                        }
                    }
                    out[((b * cout + co) * oh + oy) * ow + ox] = acc;
                }
            }
        }
    }
    (out, [n, cout, oh, ow])
}

/// Compares reverse-mode gradients of `loss` against central differences.
///
/// `build` must construct the same scalar on a fresh graph from the leaves it
/// is handed (in `params` order). At most `coords` coordinates per tensor are
/// probed, spread evenly. Returns the largest
/// `|analytic − numeric| / max(1, |analytic|)`.
pub fn grad_check<F>(params: &[Tensor<f64>], build: F, coords: usize, h: f64) -> f64
where
    F: Fn(&mut Graph<f64>, &[Var]) -> Var,
{
    let eval = |values: &[Tensor<f64>]| -> f64 {
        let mut g = Graph::new();
        let vars: Vec<Var> = values.iter().map(|t| g.param(t.clone())).collect();
        let loss = build(&mut g, &vars);
        g.value(loss).item()
    };
    let mut g = Graph::new();
    let vars: Vec<Var> = params.iter().map(|t| g.param(t.clone())).collect();
    let loss = build(&mut g, &vars);
    g.backward(loss).unwrap();
    let analytic: Vec<Tensor<f64>> = vars
        .iter()
        .zip(params)
        .map(|(v, p)| {
            g.grad(*v)
                .cloned()
                .unwrap_or_else(|| Tensor::zeros(p.shape().to_vec()))
        })
        .collect();

    let mut worst: f64 = 0.0;
    let mut probe = params.to_vec();
    for (pi, p) in params.iter().enumerate() {
        let n = p.numel();
        let step = (n / coords.max(1)).max(1);
        for idx in (0..n).step_by(step).take(coords) {
            let orig = p.data()[idx];
            probe[pi].data_mut()[idx] = orig + h;
            let up = eval(&probe);
            probe[pi].data_mut()[idx] = orig - h;
            let down = eval(&probe);
            probe[pi].data_mut()[idx] = orig;
            let numeric = (up - down) / (2.0 * h);
            let a = analytic[pi].data()[idx];
            worst = worst.max((a - numeric).abs() / a.abs().max(1.0));
        }
    }
    worst
}

/// Train-mode loss of `model` on one batch with a fixed dropout stream.
pub fn model_loss(model: &Model<f64>, x: &Tensor<f64>, labels: &[usize], seed: u64) -> f64 {
    let mut g = Graph::new();
    let xv = g.input(x.clone());
    let mut r = rng(seed);
    let fwd = model.forward(&mut g, xv, Mode::Train(&mut r)).unwrap();
    let (loss, _) = model.loss(&mut g, &fwd, xv, labels).unwrap();
    g.value(loss).item()
}

/// Analytic gradients of the train-mode loss, one tensor per parameter.
pub fn model_grads(
    model: &Model<f64>,
    x: &Tensor<f64>,
    labels: &[usize],
    seed: u64,
) -> Vec<Tensor<f64>> {
    let mut g = Graph::new();
    let xv = g.input(x.clone());
    let mut r = rng(seed);
    let fwd = model.forward(&mut g, xv, Mode::Train(&mut r)).unwrap();
    let (loss, _) = model.loss(&mut g, &fwd, xv, labels).unwrap();
    g.backward(loss).unwrap();
    fwd.params
        .iter()
        .zip(model.params())
        .map(|(v, p)| {
            g.grad(*v)
                .cloned()
                .unwrap_or_else(|| Tensor::zeros(p.value.shape().to_vec()))
        })
        .collect()
}

/// Central-difference check of a whole model's loss over up to `coords`
/// entries of every parameter tensor.
pub fn model_grad_check(
    model: &Model<f64>,
    x: &Tensor<f64>,
    labels: &[usize],
    coords: usize,
    h: f64,
) -> f64 {
    let seed = 77;
    let analytic = model_grads(model, x, labels, seed);
    let mut probe = model.clone();
    let mut worst: f64 = 0.0;
    for (pi, grad) in analytic.iter().enumerate() {
        let n = grad.numel();
        let step = (n / coords.max(1)).max(1);
        for idx in (0..n).step_by(step).take(coords) {
            let orig = model.params()[pi].value.data()[idx];
            probe.params_mut()[pi].value.data_mut()[idx] = orig + h;
            let up = model_loss(&probe, x, labels, seed);
            probe.params_mut()[pi].value.data_mut()[idx] = orig - h;
            let down = model_loss(&probe, x, labels, seed);
            probe.params_mut()[pi].value.data_mut()[idx] = orig;
            let numeric = (up - down) / (2.0 * h);
            let a = grad.data()[idx];
            worst = worst.max((a - numeric).abs() / a.abs().max(1.0));
        }
    }
    worst
}

/// Runs the installed binary and returns its exit code.
pub fn cli(args: &[&str]) -> i32 {
    let out = std::process::Command::new(env!("CARGO_BIN_EXE_mitransfer"))
        .args(args)
        .env("RUST_LOG", "error")
        .output()
        .expect("binary runs");
    if !out.status.success() {
        eprintln!("{}", String::from_utf8_lossy(&out.stderr));
    }
    out.status.code().expect("exited normally")
}

/// Every file below `dir`, keyed by relative path.
pub fn snapshot(dir: &std::path::Path) -> std::collections::BTreeMap<String, Vec<u8>> {
    fn walk(
        root: &std::path::Path,
        dir: &std::path::Path,
        out: &mut std::collections::BTreeMap<String, Vec<u8>>,
    ) {
        for e in std::fs::read_dir(dir).unwrap() {
            let p = e.unwrap().path();
            if p.is_dir() {
                walk(root, &p, out);
            } else {
                out.insert(
                    p.strip_prefix(root).unwrap().display().to_string(),
                    std::fs::read(&p).unwrap(),
                );
            }
        }
    }
    let mut out = std::collections::BTreeMap::new();
    walk(dir, dir, &mut out);
    out
}

/// synth, loso for every model, stats and report, all under `root`.
/// Returns the exit codes in that order.
pub fn run_pipeline(root: &std::path::Path, seed: &str) -> Vec<i32> {
    let p = |s: &str| root.join(s).display().to_string();
    let (data, runs, report) = (p("data"), p("runs"), p("report"));
    let mut codes = vec![cli(&[
        "synth",
        "--out",
        &data,
        "--subjects",
        "3",
        "--trials",
        "16",
        "--samples",
        "500",
        "--sample-rate",
        "125",
        "--cue-onset",
        "1.0",
        "--erd-depth",
        "0.8",
        "--seed",
        seed,
    ])];
    for model in ["eegnet", "deepconvnet", "min2net"] {
        codes.push(cli(&[
            "loso", "--model", model, "--data", &data, "--out", &runs, "--epochs", "2", "--seed",
            seed,
        ]));
    }
    let folds: Vec<String> = ["eegnet", "deepconvnet", "min2net"]
        .iter()
        .map(|m| p(&format!("runs/{m}/folds.csv")))
        .collect();
    let stats_out = p("report/stats.json");
    codes.push(cli(&[
        "stats", &folds[0], &folds[1], &folds[2], "--out", &stats_out,
    ]));
    codes.push(cli(&["report", "--results", &runs, "--out", &report]));
    codes
}

/// Reduced-size specs for gradient checks.
pub fn small_spec(kind: ModelKind) -> ModelSpec {
    match kind {
        ModelKind::EegNet => ModelSpec::new(kind, 4, 64, 32.0),
        ModelKind::DeepConvNet => {
            let mut spec = ModelSpec::new(kind, 4, 64, 32.0);
            spec.arch = Architecture::DeepConvNet(DeepConvNetKnobs {
                temporal_filters: 4,
                spatial_filters: 4,
                block_filters: [4, 5, 6],
                kernel: 3,
                pool: 2,
            });
            spec
        }
        ModelKind::Min2Net => {
            let mut spec = ModelSpec::new(kind, 3, 40, 20.0);
            spec.arch = Architecture::Min2Net(Min2NetKnobs {
                filters1: 3,
                filters2: 3,
                kernel1: 8,
                kernel2: 4,
                pool1: 2,
                pool2: 2,
                latent_dim: 4,
                margin: 1.0,
                weights: LossWeights::default(),
            });
            spec
        }
    }
}

/// End-to-end gradient check of a freshly built reduced-size model.
pub fn model_gradient_error(kind: ModelKind) -> f64 {
    let spec = small_spec(kind);
    let model = Model::<f64>::build(&spec, 12).unwrap();
    let x = random_tensor(&[6, spec.n_channels, spec.n_samples], &mut rng(13));
    model_grad_check(&model, &x, &[0, 1, 1, 0, 1, 0], 6, 1e-5)
}

/// Layer-by-layer trainable parameter count of the EEGNet stack.
pub fn eegnet_count(c: usize, s: usize, classes: usize, k: &EegNetKnobs) -> usize {
    let f1d = k.f1 * k.depth;
    let temporal = k.f1 * k.temporal_kernel;
    let bn1 = 2 * k.f1;
    let spatial = f1d * c;
    let bn2 = 2 * f1d;
    let separable = f1d * k.separable_kernel + f1d * k.f2;
    let bn3 = 2 * k.f2;
    let flat = k.f2 * (s / k.pool1 / k.pool2);
    temporal + bn1 + spatial + bn2 + separable + bn3 + flat * classes + classes
}

pub fn deepconvnet_count(c: usize, s: usize, classes: usize, k: &DeepConvNetKnobs) -> usize {
    let mut total = k.temporal_filters * k.kernel + k.temporal_filters;
    total += k.spatial_filters * k.temporal_filters * c + 2 * k.spatial_filters;
    let mut t = (s - k.kernel + 1) / k.pool;
    let mut prev = k.spatial_filters;
    for f in k.block_filters {
        total += f * prev * k.kernel + 2 * f;
        t = (t - k.kernel + 1) / k.pool;
        prev = f;
    }
    total + prev * t * classes + classes
}

pub fn min2net_count(c: usize, s: usize, classes: usize, k: &Min2NetKnobs) -> usize {
    let flat = k.filters2 * s / (k.pool1 * k.pool2);
    let encoder = (k.filters1 * c * k.kernel1 + k.filters1)
        + (k.filters2 * k.filters1 * k.kernel2 + k.filters2);
    let latent = flat * k.latent_dim + k.latent_dim;
    let decoder = (k.latent_dim * flat + flat)
        + (k.filters1 * k.filters2 * k.kernel2 + k.filters1)
        + (c * k.filters1 * k.kernel1 + c);
    encoder + latent + decoder + k.latent_dim * classes + classes
}

pub fn hand_count(spec: &ModelSpec) -> usize {
    let (c, s, n) = (spec.n_channels, spec.n_samples, spec.n_classes);
    match &spec.arch {
        Architecture::EegNet(k) => eegnet_count(c, s, n, k),
        Architecture::DeepConvNet(k) => deepconvnet_count(c, s, n, k),
        Architecture::Min2Net(k) => min2net_count(c, s, n, k),
    }
}

/// Standardized single-subject set with a strong, low-noise ERD.
pub fn separable(n_trials: usize, seed: u64) -> SubjectRecord {
    let synth = SynthConfig {
        n_subjects: 1,
        trials_per_subject: n_trials,
        n_samples: 500,
        sample_rate: 125.0,
        cue_onset_s: 1.0,
        erd_depth: 0.9,
        noise_scale: 2.0,
        seed,
        ..SynthConfig::default()
    };
    let ds = synthesize_dataset(&synth).unwrap();
    let (mut z, _, _) = standardize(&[&ds.subjects()[0]], &[]);
    z.remove(0)
}

/// Share of `r`'s trials that `model` labels correctly.
pub fn train_accuracy(model: &Model<f32>, r: &SubjectRecord) -> f64 {
    let x = Tensor::new(
        [r.n_trials(), r.n_channels(), r.n_samples()],
        r.trials().to_vec(),
    )
    .unwrap();
    let pred = model.predict(&x).unwrap();
    pred.iter()
        .zip(r.labels())
        .filter(|(p, &l)| **p == l as usize)
        .count() as f64
        / pred.len() as f64
}

/// Scalar `Σ out ⊙ r` with a fixed random `r`, so every output element
/// carries a distinct weight into the loss.
pub fn project(g: &mut Graph<f64>, out: Var, seed: u64) -> Var {
    let shape = g.value(out).shape().to_vec();
    let r = g.input(random_tensor(&shape, &mut rng(seed)));
    let prod = g.mul(out, r).unwrap();
    g.sum(prod).unwrap()
}

const H: f64 = 1e-5;

/// Worst relative gradient error of every differentiable operation, labelled.
pub fn op_gradient_errors() -> Vec<(String, f64)> {
    let mut out = Vec::new();
    conv_family(&mut out);
    pooling_and_resampling(&mut out);
    batch_norm_both_modes(&mut out);
    elementwise(&mut out);
    dropout_with_fixed_mask(&mut out);
    linear_and_losses(&mut out);
    composed_graph(&mut out);
    out
}

fn conv_family(out: &mut Vec<(String, f64)>) {
    let mut r = rng(20);
    let x = random_tensor(&[2, 3, 5, 7], &mut r);
    let k = random_tensor(&[4, 3, 2, 3], &mut r);
    let pad = Padding {
        top: 1,
        bottom: 0,
        left: 2,
        right: 1,
    };
    let err = grad_check(
        &[x.clone(), k],
        |g, v| {
            let y = g.conv2d(v[0], v[1], (2, 1), pad, 1).unwrap();
            project(g, y, 1)
        },
        40,
        H,
    );
    out.push(("conv2d".into(), err));

    let k = random_tensor(&[6, 1, 3, 2], &mut r);
    let err = grad_check(
        &[x.clone(), k],
        |g, v| {
            let y = g
                .depthwise_conv2d(v[0], v[1], 2, (1, 1), Padding::same(3, 2))
                .unwrap();
            project(g, y, 2)
        },
        40,
        H,
    );
    out.push(("depthwise".into(), err));

    let b = random_tensor(&[3], &mut r);
    let err = grad_check(
        &[x, b],
        |g, v| {
            let y = g.bias_add(v[0], v[1]).unwrap();
            project(g, y, 3)
        },
        40,
        H,
    );
    out.push(("bias_add".into(), err));
}

fn pooling_and_resampling(out: &mut Vec<(String, f64)>) {
    let x = random_tensor(&[2, 2, 3, 12], &mut rng(21));
    for (kind, window, stride) in [
        (PoolKind::Max, (1, 3), (1, 3)),
        (PoolKind::Max, (2, 2), (1, 2)),
        (PoolKind::Average, (1, 4), (1, 4)),
        (PoolKind::Average, (3, 2), (1, 1)),
    ] {
        let err = grad_check(
            std::slice::from_ref(&x),
            |g, v| {
                let y = g.pool2d(v[0], kind, window, stride).unwrap();
                project(g, y, 4)
            },
            72,
            H,
        );
        out.push((format!("{kind:?} {window:?}"), err));
    }
    let err = grad_check(
        std::slice::from_ref(&x),
        |g, v| {
            let y = g.upsample(v[0], (2, 3)).unwrap();
            project(g, y, 5)
        },
        72,
        H,
    );
    out.push(("upsample".into(), err));
}

fn batch_norm_both_modes(out: &mut Vec<(String, f64)>) {
    let mut r = rng(22);
    let x = random_tensor(&[5, 3, 2, 4], &mut r);
    let gamma = random_tensor(&[3], &mut r);
    let beta = random_tensor(&[3], &mut r);
    let stats = RunningStats {
        mean: vec![0.1, -0.2, 0.3],
        var: vec![0.5, 1.5, 2.0],
    };
    for mode in [
        BatchNormMode::Train { momentum: 0.99 },
        BatchNormMode::Infer,
    ] {
        let err = grad_check(
            &[x.clone(), gamma.clone(), beta.clone()],
            |g, v| {
                let (y, _) = g.batch_norm(v[0], v[1], v[2], &stats, mode, 1e-5).unwrap();
                project(g, y, 6)
            },
            60,
            H,
        );
        out.push((format!("{mode:?}"), err));
    }
}

fn elementwise(out: &mut Vec<(String, f64)>) {
    let x = random_tensor(&[3, 7], &mut rng(23));
    for kind in [
        ActivationKind::Elu,
        ActivationKind::Relu,
        ActivationKind::Linear,
    ] {
        let err = grad_check(
            std::slice::from_ref(&x),
            |g, v| {
                let y = g.activation(v[0], kind).unwrap();
                project(g, y, 7)
            },
            21,
            H,
        );
        out.push((format!("{kind:?}"), err));
    }
    for axis in [0, 1] {
        let err = grad_check(
            std::slice::from_ref(&x),
            |g, v| {
                let y = g.softmax(v[0], axis).unwrap();
                project(g, y, 8)
            },
            21,
            H,
        );
        out.push((format!("softmax axis {axis}"), err));
    }
    let y = random_tensor(&[3, 7], &mut rng(24));
    let err = grad_check(
        &[x.clone(), y],
        |g, v| {
            let s = g.add(v[0], v[1]).unwrap();
            let m = g.mul(s, v[1]).unwrap();
            let c = g.scale(m, -1.7).unwrap();
            let r = g.reshape(c, &[7, 3]).unwrap();
            let a = g.mean(r).unwrap();
            let b = g.sum(v[0]).unwrap();
            g.weighted_sum(&[(a, 0.3), (b, 2.0)]).unwrap()
        },
        21,
        H,
    );
    out.push(("arithmetic".into(), err));
}

fn dropout_with_fixed_mask(out: &mut Vec<(String, f64)>) {
    let x = random_tensor(&[4, 10], &mut rng(25));
    let err = grad_check(
        std::slice::from_ref(&x),
        |g, v| {
            let mut mask_rng = ChaCha8Rng::seed_from_u64(99);
            let y = g.dropout(v[0], 0.4, &mut mask_rng).unwrap();
            project(g, y, 9)
        },
        40,
        H,
    );
    out.push(("dropout".into(), err));
}

fn linear_and_losses(out: &mut Vec<(String, f64)>) {
    let mut r = rng(26);
    let x = random_tensor(&[6, 5], &mut r);
    let w = random_tensor(&[4, 5], &mut r);
    let b = random_tensor(&[4], &mut r);
    let err = grad_check(
        &[x.clone(), w.clone(), b.clone()],
        |g, v| {
            let y = g.linear(v[0], v[1], Some(v[2])).unwrap();
            project(g, y, 10)
        },
        30,
        H,
    );
    out.push(("linear".into(), err));

    let labels = [0, 3, 1, 1, 2, 0];
    let err = grad_check(
        &[x.clone(), w.clone()],
        |g, v| {
            let y = g.linear(v[0], v[1], None).unwrap();
            let p = g.softmax(y, 1).unwrap();
            g.cross_entropy(p, &labels, 1e-12).unwrap()
        },
        30,
        H,
    );
    out.push(("cross entropy".into(), err));

    let target = random_tensor(&[6, 4], &mut r);
    let err = grad_check(
        &[x.clone(), w.clone(), target],
        |g, v| {
            let y = g.linear(v[0], v[1], None).unwrap();
            g.mse(y, v[2]).unwrap()
        },
        30,
        H,
    );
    out.push(("mse".into(), err));

    let labels = [0, 1, 0, 1, 1, 0];
    let err = grad_check(
        &[x, w],
        |g, v| {
            let z = g.linear(v[0], v[1], None).unwrap();
            g.triplet_loss(z, &labels, 1.0).unwrap().0
        },
        30,
        H,
    );
    out.push(("triplet".into(), err));
}

fn composed_graph(out: &mut Vec<(String, f64)>) {
    let mut r = rng(27);
    let x = random_tensor(&[3, 1, 4, 24], &mut r);
    let k1 = random_tensor(&[2, 1, 1, 5], &mut r);
    let k2 = random_tensor(&[4, 1, 4, 1], &mut r);
    let gamma = random_tensor(&[4], &mut r);
    let beta = random_tensor(&[4], &mut r);
    let w = random_tensor(&[2, 4 * 8], &mut r);
    let labels = [0, 1, 1];
    let stats = RunningStats::new(4);
    let err = grad_check(
        &[x, k1, k2, gamma, beta, w],
        |g, v| {
            let c = g
                .conv2d(v[0], v[1], (1, 1), Padding::same(1, 5), 1)
                .unwrap();
            let d = g
                .depthwise_conv2d(c, v[2], 2, (1, 1), Padding::default())
                .unwrap();
            let (n, _) = g
                .batch_norm(
                    d,
                    v[3],
                    v[4],
                    &stats,
                    BatchNormMode::Train { momentum: 0.99 },
                    1e-5,
                )
                .unwrap();
            let a = g.activation(n, ActivationKind::Elu).unwrap();
            let p = g.pool2d(a, PoolKind::Average, (1, 3), (1, 3)).unwrap();
            let f = g.flatten(p).unwrap();
            let z = g.linear(f, v[5], None).unwrap();
            let s = g.softmax(z, 1).unwrap();
            g.cross_entropy(s, &labels, 1e-12).unwrap()
        },
        25,
        H,
    );
    out.push(("composed graph".into(), err));
}

/// Ranks by pairwise comparison and sums squared deviations from the
/// expected rank sum.
pub fn friedman_oracle(m: &[Vec<f64>]) -> f64 {
    let n = m.len() as f64;
    let k = m[0].len();
    let kf = k as f64;
    let mut sums = vec![0.0; k];
    let mut ties = 0.0;
    for row in m {
        for (j, &v) in row.iter().enumerate() {
            let below = row.iter().filter(|&&u| u < v).count() as f64;
            let equal = row.iter().filter(|&&u| u == v).count() as f64;
            sums[j] += below + (equal + 1.0) / 2.0;
        }
        let mut seen: Vec<f64> = Vec::new();
        for &v in row {
            if !seen.contains(&v) {
                seen.push(v);
                let t = row.iter().filter(|&&u| u == v).count() as f64;
                ties += t * t * t - t;
            }
        }
    }
    let expected = n * (kf + 1.0) / 2.0;
    let dev: f64 = sums.iter().map(|r| (r - expected).powi(2)).sum();
    let c = 1.0 - ties / (n * kf * (kf * kf - 1.0));
    12.0 / (n * kf * (kf + 1.0)) * dev / c
}

/// Two-sided p by walking every sign assignment of the observed ranks.
pub fn wilcoxon_enumeration(d: &[f64]) -> f64 {
    let d: Vec<f64> = d.iter().copied().filter(|v| *v != 0.0).collect();
    let ranks: Vec<f64> = d
        .iter()
        .map(|v| {
            let below = d.iter().filter(|u| u.abs() < v.abs()).count() as f64;
            let equal = d.iter().filter(|u| u.abs() == v.abs()).count() as f64;
            below + (equal + 1.0) / 2.0
        })
        .collect();
    let total: f64 = ranks.iter().sum();
    let observed: f64 = ranks
        .iter()
        .zip(&d)
        .filter(|(_, v)| **v < 0.0)
        .map(|(r, _)| r)
        .sum();
    let n = d.len();
    let mut extreme = 0u64;
    for mask in 0u32..(1 << n) {
        let t: f64 = (0..n)
            .filter(|i| mask >> i & 1 == 1)
            .map(|i| ranks[i])
            .sum();
        if (2.0 * t - total).abs() >= (2.0 * observed - total).abs() - 1e-9 {
            extreme += 1;
        }
    }
    extreme as f64 / (1u64 << n) as f64
}

/// `(sample, W, p)` computed by the AS R94 routine as shipped in scipy.
#[allow(clippy::approx_constant)]
pub fn shapiro_reference_cases() -> [(&'static [f64], f64, f64); 5] {
    [
        (
            &[
                0.11, 7.87, 4.61, 10.14, 7.95, 3.14, 0.46, 4.43, 0.21, 4.75, 0.71, 1.52, 3.24,
                0.93, 0.42, 4.97, 9.53, 4.55, 0.47, 6.66,
            ],
            0.900_472_879,
            0.042_089_575,
        ),
        (
            &[
                1.36, 1.14, 2.92, 2.55, 1.46, 1.06, 5.27, -1.11, 3.48, 1.10, 0.88, -0.51, 1.46,
                0.52, 6.20, 1.69, 0.08, 3.67, 2.81, 3.49,
            ],
            0.959_026_946,
            0.524_597_929,
        ),
        (
            &[
                148.0, 154.0, 158.0, 160.0, 161.0, 162.0, 166.0, 170.0, 182.0, 195.0, 236.0,
            ],
            0.788_814_695,
            0.006_703_814,
        ),
        (&[1.0, 2.0, 4.0, 8.0, 16.0], 0.876_108_812, 0.292_048_447),
        (&[1.0, 2.0, 10.0], 0.832_191_781, 0.193_917_521),
    ]
}
