mod common;

use common::{separable, train_accuracy};
use mitransfer::data::SubjectRecord;
use mitransfer::model::{
    Architecture, DeepConvNetKnobs, LossWeights, Min2NetKnobs, Model, ModelKind, ModelSpec,
};
use mitransfer::tensor::Tensor;
use mitransfer::train::{
    early_stop_epoch, fit, lr_trajectory, mean_loss, Monitor, Plateau, TrainConfig, TrainError,
};
use proptest::prelude::*;

fn cfg(kind: ModelKind) -> TrainConfig {
    TrainConfig::for_model(kind)
}

#[test]
fn eegnet_plateau_cuts_by_a_quarter() {
    let c = cfg(ModelKind::EegNet);
    let lrs = lr_trajectory(&[1.0; 9], &c);
    assert_eq!(lrs[..8], [0.1; 8]);
    assert_eq!(lrs[8], 0.025);
}

#[test]
fn eegnet_schedule_walks_down_to_the_floor() {
    let c = cfg(ModelKind::EegNet);
    let lrs = lr_trajectory(&[1.0; 40], &c);
    let mut distinct = lrs.clone();
    distinct.dedup();
    assert_eq!(distinct, [0.1, 0.025, 0.00625, 0.0015625, 0.001]);
}

#[test]
fn min2net_schedule_walks_down_to_the_floor() {
    let c = cfg(ModelKind::Min2Net);
    let lrs = lr_trajectory(&[0.5; 200], &c);
    let mut distinct = lrs.clone();
    distinct.dedup();
    assert_eq!(distinct, [0.01, 0.005, 0.0025, 0.00125, 0.000625, 0.0006]);
    // cuts land after epochs 13, 25, 37, ...
    assert_eq!(lrs[12], 0.01);
    assert_eq!(lrs[13], 0.005);
    assert!(lrs.windows(2).all(|w| w[1] <= w[0]));
}

#[test]
fn constant_loss_stops_after_es_patience_plus_one() {
    for (kind, es) in [
        (ModelKind::EegNet, 18),
        (ModelKind::DeepConvNet, 30),
        (ModelKind::Min2Net, 32),
    ] {
        assert_eq!(early_stop_epoch(&[2.0; 300], &cfg(kind)), Some(es + 1));
    }
}

#[test]
fn late_improvement_is_never_reached() {
    let mut seq = vec![1.0; 30];
    seq[19] = 0.1;
    assert_eq!(early_stop_epoch(&seq, &cfg(ModelKind::EegNet)), Some(19));
}

#[test]
fn steady_improvement_runs_to_the_budget() {
    let seq: Vec<f64> = (0..100).map(|i| 1.0 / (i + 1) as f64).collect();
    assert_eq!(early_stop_epoch(&seq, &cfg(ModelKind::EegNet)), None);
}

proptest! {
    #[test]
    fn schedule_is_a_pure_monotone_function_of_the_monitor(
        seq in prop::collection::vec(0.0f64..2.0, 1..150), kind in 0usize..3,
    ) {
        let c = cfg(ModelKind::ALL[kind]);
        let a = lr_trajectory(&seq, &c);
        prop_assert_eq!(&a, &lr_trajectory(&seq, &c));
        prop_assert!(a.windows(2).all(|w| w[1] <= w[0]));
        prop_assert!(a.iter().all(|&lr| lr >= c.min_lr && lr <= c.learning_rate));
        // a stopped run has seen es_patience non-improving epochs in a row
        if let Some(stop) = early_stop_epoch(&seq, &c) {
            let mut p = Plateau::new(&c);
            let flags: Vec<bool> = seq[..stop].iter().map(|&v| p.observe(v).0).collect();
            prop_assert!(flags[stop - c.es_patience..].iter().all(|&f| !f));
        }
    }
}

fn overfit_cfg(kind: ModelKind) -> TrainConfig {
    TrainConfig {
        batch_size: 8,
        validation_fraction: 0.0,
        monitor: Monitor::TrainLoss,
        seed: 3,
        ..cfg(kind)
    }
}

#[test]
fn eegnet_overfits_a_separable_set() {
    let r = separable(32, 1);
    let spec = ModelSpec::new(ModelKind::EegNet, 16, 500, 125.0);
    let model = Model::<f32>::build(&spec, 5).unwrap();
    let out = fit(model, &[&r], &overfit_cfg(ModelKind::EegNet)).unwrap();
    let acc = train_accuracy(&out.model, &r);
    assert!(acc >= 0.95, "train accuracy {acc}");
    let losses: Vec<f64> = out
        .trace
        .records
        .iter()
        .take(5)
        .map(|e| e.train_loss)
        .collect();
    for w in losses.windows(2) {
        assert!(w[1] <= w[0] * 1.05, "{losses:?}");
    }
}

fn tiny_spec(kind: ModelKind) -> ModelSpec {
    match kind {
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
        ModelKind::EegNet => ModelSpec::new(kind, 4, 64, 32.0),
    }
}

fn noise_subject(id: &str, c: usize, s: usize, n: usize, seed: u64) -> SubjectRecord {
    use rand::{Rng, SeedableRng};
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    let data = (0..n * c * s)
        .map(|_| rng.random_range(-1.0f32..1.0))
        .collect();
    SubjectRecord::new(id, c, s, data, (0..n).map(|i| (i % 2) as u8).collect()).unwrap()
}

fn short(kind: ModelKind) -> TrainConfig {
    TrainConfig {
        epochs: 6,
        batch_size: 8,
        patience: 2,
        es_patience: 3,
        seed: 11,
        ..cfg(kind)
    }
}

#[test]
fn same_seed_gives_the_same_run() {
    let subjects = [
        noise_subject("A", 4, 64, 20, 1),
        noise_subject("B", 4, 64, 20, 2),
    ];
    let refs: Vec<&SubjectRecord> = subjects.iter().collect();
    let spec = tiny_spec(ModelKind::EegNet);
    let run = || {
        fit(
            Model::<f32>::build(&spec, 1).unwrap(),
            &refs,
            &short(ModelKind::EegNet),
        )
        .unwrap()
    };
    let (a, b) = (run(), run());
    assert_eq!(a.trace, b.trace);
    for (p, q) in a.model.params().iter().zip(b.model.params()) {
        assert_eq!(p.value, q.value);
    }
    assert_eq!(a.model.running_stats(), b.model.running_stats());
}

#[test]
fn returned_model_is_the_best_monitored_epoch() {
    for kind in ModelKind::ALL {
        let spec = tiny_spec(kind);
        let subjects = [
            noise_subject("A", spec.n_channels, spec.n_samples, 24, 3),
            noise_subject("B", spec.n_channels, spec.n_samples, 24, 4),
        ];
        let refs: Vec<&SubjectRecord> = subjects.iter().collect();
        let before: Vec<SubjectRecord> = subjects.to_vec();
        let c = TrainConfig {
            epochs: 8,
            ..short(kind)
        };
        let out = fit(Model::<f64>::build(&spec, 2).unwrap(), &refs, &c).unwrap();
        let t = &out.trace;
        let val = mean_loss(&out.model, &refs, &out.validation, c.batch_size).unwrap();
        let traced: Vec<f64> = t.records.iter().map(|r| r.val_loss.unwrap()).collect();
        assert!(
            traced.iter().all(|&v| val <= v + 1e-6),
            "{kind}: {val} vs {traced:?}"
        );
        assert!((val - traced[t.best_epoch - 1]).abs() < 1e-9);
        assert!(t.records.iter().all(|r| r.lr >= c.min_lr));
        assert!(!t.stopped_early || t.len() < c.epochs);
        assert_eq!(before, subjects);
    }
}

#[test]
fn min2net_learns_to_reconstruct_constant_trials() {
    let spec = tiny_spec(ModelKind::Min2Net);
    let (c, s) = (spec.n_channels, spec.n_samples);
    let levels = [-1.5f32, -1.0, -0.5, -0.25, 0.25, 0.5, 1.0, 1.5];
    let data = levels.iter().flat_map(|&v| vec![v; c * s]).collect();
    let r = SubjectRecord::new("K", c, s, data, vec![0, 0, 0, 0, 1, 1, 1, 1]).unwrap();
    let model = Model::<f32>::build(&spec, 3).unwrap();
    let x = Tensor::new([8, c, s], r.trials().to_vec()).unwrap();
    let mse = |m: &Model<f32>| {
        use mitransfer::model::Mode;
        use mitransfer::tensor::Graph;
        let mut g = Graph::new();
        let xv = g.input(x.clone());
        let fwd = m.forward(&mut g, xv, Mode::Infer).unwrap();
        let (_, bundle) = m.loss(&mut g, &fwd, xv, &[0, 0, 0, 0, 1, 1, 1, 1]).unwrap();
        bundle.reconstruction.unwrap()
    };
    assert!(mse(&model) > 0.0);
    let c = TrainConfig {
        epochs: 200,
        batch_size: 8,
        ..overfit_cfg(ModelKind::Min2Net)
    };
    let out = fit(model, &[&r], &c).unwrap();
    let after = mse(&out.model);
    assert!(after < 1e-2, "reconstruction mse {after}");
}

#[test]
fn degenerate_inputs_are_config_errors() {
    let spec = tiny_spec(ModelKind::EegNet);
    let one_class = SubjectRecord::new("A", 4, 64, vec![0.0; 10 * 4 * 64], vec![1; 10]).unwrap();
    let err = fit(
        Model::<f32>::build(&spec, 0).unwrap(),
        &[&one_class],
        &short(ModelKind::EegNet),
    );
    assert!(matches!(err, Err(TrainError::Config(_))));

    let ok = noise_subject("B", 4, 64, 20, 5);
    let zero = TrainConfig {
        epochs: 0,
        ..short(ModelKind::EegNet)
    };
    let err = fit(Model::<f32>::build(&spec, 0).unwrap(), &[&ok], &zero);
    assert!(matches!(err, Err(TrainError::Config(_))));

    let wrong = noise_subject("C", 5, 64, 20, 6);
    let err = fit(
        Model::<f32>::build(&spec, 0).unwrap(),
        &[&wrong],
        &short(ModelKind::EegNet),
    );
    assert!(matches!(err, Err(TrainError::Config(_))));
}

#[test]
fn trace_serializes_one_row_per_epoch() {
    let r = noise_subject("A", 4, 64, 20, 7);
    let out = fit(
        Model::<f32>::build(&tiny_spec(ModelKind::EegNet), 0).unwrap(),
        &[&r],
        &short(ModelKind::EegNet),
    )
    .unwrap();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("trace.csv");
    out.trace.save_csv(&path).unwrap();
    let mut reader = csv::Reader::from_path(&path).unwrap();
    assert_eq!(
        reader.headers().unwrap(),
        vec!["epoch", "train_loss", "val_loss", "lr", "improved"]
    );
    assert_eq!(reader.records().count(), out.trace.len());
}
