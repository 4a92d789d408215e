use std::ffi::{CStr, CString};
use std::ptr;

use mitransfer_ffi::*;

fn last_error() -> String {
    unsafe { CStr::from_ptr(mit_last_error()) }
        .to_string_lossy()
        .into_owned()
}

fn c_path(p: &std::path::Path) -> CString {
    CString::new(p.to_str().unwrap()).unwrap()
}

#[test]
fn errors_carry_a_code_and_a_message() {
    unsafe {
        let mut ds = ptr::null_mut();
        let missing = CString::new("/no/such/dir").unwrap();
        assert_ne!(mit_dataset_load(missing.as_ptr(), &mut ds), MitStatus::Ok);
        assert!(ds.is_null());
        assert!(!last_error().is_empty());

        assert_eq!(
            mit_dataset_load(ptr::null(), &mut ds),
            MitStatus::NullArgument
        );
        let mut p = mit_synth_defaults();
        p.erd_depth = 2.0;
        assert_eq!(
            mit_dataset_synthesize(&p, &mut ds),
            MitStatus::InvalidArgument
        );
        assert!(last_error().contains("erd"), "{}", last_error());

        let mut m = ptr::null_mut();
        assert_eq!(
            mit_model_new(MitModelKind::EegNet, 16, 4, 250.0, 0, &mut m),
            MitStatus::Model
        );
        assert_eq!(
            mit_holm([0.5].as_ptr(), 1, ptr::null_mut()),
            MitStatus::NullArgument
        );

        assert_eq!(
            mit_holm([0.01, 0.04, 0.03].as_ptr(), 3, [0.0; 3].as_mut_ptr()),
            MitStatus::Ok
        );
        assert!(last_error().is_empty());
        mit_dataset_free(ptr::null_mut());
        mit_model_free(ptr::null_mut());
        mit_loso_free(ptr::null_mut());
    }
}

#[test]
fn statistics_match_the_library() {
    let mut adjusted = [0.0; 3];
    unsafe {
        assert_eq!(
            mit_holm([0.01, 0.04, 0.03].as_ptr(), 3, adjusted.as_mut_ptr()),
            MitStatus::Ok
        );
    }
    assert!(adjusted
        .iter()
        .zip([0.03, 0.06, 0.06])
        .all(|(a, b)| (a - b).abs() < 1e-12));

    let x = [0.61, 0.72, 0.55, 0.80, 0.67, 0.58, 0.90, 0.49];
    let y = [0.52, 0.70, 0.50, 0.61, 0.66, 0.51, 0.75, 0.47];
    let (mut s, mut p) = (0.0, 0.0);
    unsafe {
        assert_eq!(
            mit_wilcoxon(x.as_ptr(), y.as_ptr(), 8, &mut s, &mut p),
            MitStatus::Ok
        )
    };
    let r = mitransfer::stats::wilcoxon_signed_rank(&x, &y).unwrap();
    assert_eq!((s, p), (r.statistic, r.p));

    let rows: Vec<f64> = x
        .iter()
        .zip(&y)
        .flat_map(|(a, b)| [*a, *b, a * b])
        .collect();
    let (mut chi2, mut fp) = (0.0, 0.0);
    unsafe {
        assert_eq!(
            mit_friedman(rows.as_ptr(), 8, 3, &mut chi2, &mut fp),
            MitStatus::Ok
        )
    };
    let blocks: Vec<Vec<f64>> = rows.chunks(3).map(<[f64]>::to_vec).collect();
    let r = mitransfer::stats::friedman(&blocks).unwrap();
    assert_eq!((chi2, fp), (r.chi2, r.p));
}

#[test]
fn models_survive_a_checkpoint_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let path = c_path(&dir.path().join("m.ckpt"));
    unsafe {
        let mut m = ptr::null_mut();
        assert_eq!(
            mit_model_new(MitModelKind::DeepConvNet, 16, 2000, 250.0, 3, &mut m),
            MitStatus::Ok
        );
        let mut n = 0;
        assert_eq!(mit_model_n_params(m, &mut n), MitStatus::Ok);
        assert_eq!(n, 281_527);
        assert_eq!(mit_model_save(m, path.as_ptr()), MitStatus::Ok);

        let mut back = ptr::null_mut();
        assert_eq!(mit_model_load(path.as_ptr(), &mut back), MitStatus::Ok);
        let x: Vec<f32> = (0..2 * 16 * 2000)
            .map(|i| ((i % 97) as f32 - 48.0) / 10.0)
            .collect();
        let (mut a, mut b) = ([0.0f32; 4], [0.0f32; 4]);
        assert_eq!(
            mit_model_predict_proba(m, x.as_ptr(), 2, a.as_mut_ptr(), 4),
            MitStatus::Ok
        );
        assert_eq!(
            mit_model_predict_proba(back, x.as_ptr(), 2, b.as_mut_ptr(), 4),
            MitStatus::Ok
        );
        assert_eq!(a, b);
        assert_eq!(
            mit_model_predict_proba(m, x.as_ptr(), 2, a.as_mut_ptr(), 3),
            MitStatus::InvalidArgument
        );
        mit_model_free(m);
        mit_model_free(back);
    }
}

#[test]
fn loso_runs_through_handles() {
    let dir = tempfile::tempdir().unwrap();
    let out = c_path(dir.path());
    unsafe {
        let mut p = mit_synth_defaults();
        p.n_subjects = 3;
        p.trials_per_subject = 20;
        p.n_samples = 250;
        p.sample_rate = 125.0;
        p.cue_onset_s = 1.0;
        let mut ds = ptr::null_mut();
        assert_eq!(mit_dataset_synthesize(&p, &mut ds), MitStatus::Ok);
        let mut run = ptr::null_mut();
        assert_eq!(
            mit_loso_run(ds, MitModelKind::EegNet, 2, 1, 1, out.as_ptr(), &mut run),
            MitStatus::Ok
        );
        let (mut done, mut failed) = (0, 0);
        assert_eq!(mit_loso_counts(run, &mut done, &mut failed), MitStatus::Ok);
        assert_eq!((done, failed), (3, 0));
        let mut acc = -1.0;
        assert_eq!(mit_loso_accuracy(run, 2, &mut acc), MitStatus::Ok);
        assert!((0.0..=1.0).contains(&acc) && (acc * 20.0).fract() == 0.0);
        assert_eq!(
            mit_loso_accuracy(run, 3, &mut acc),
            MitStatus::InvalidArgument
        );
        assert!(dir.path().join("eegnet/summary.json").exists());
        mit_loso_free(run);
        mit_dataset_free(ds);
    }
}
