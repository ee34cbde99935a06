use std::ffi::{CStr, CString};
use std::path::Path;
use std::process::Command;
use std::ptr;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use tensorreg_ffi::*;

const DIMS: [usize; 2] = [4, 4];

struct Sample {
    n: usize,
    x: Vec<f64>,
    y: Vec<f64>,
    z: Vec<f64>,
}

/// Normal responses from a rank-1 signal plus one covariate.
fn sample(n: usize, seed: u64) -> Sample {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let std = Normal::new(0.0, 1.0).unwrap();
    let u = [1.0, 0.5, -0.5, 0.8];
    let v = [1.0, -0.6, 0.4, 0.7];
    let mut x = Vec::with_capacity(n * 16);
    let mut y = Vec::with_capacity(n);
    let mut z = Vec::with_capacity(n);
    for _ in 0..n {
        let xi: Vec<f64> = (0..16).map(|_| std.sample(&mut rng)).collect();
        let zi = std.sample(&mut rng);
        let mut eta = 0.3 + 0.5 * zi;
        for j in 0..4 {
            for i in 0..4 {
                eta += u[i] * v[j] * xi[i + 4 * j];
            }
        }
        y.push(eta + 0.1 * std.sample(&mut rng));
        x.extend(xi);
        z.push(zi);
    }
    Sample { n, x, y, z }
}

fn dataset(s: &Sample) -> *mut TrDataset {
    let mut out = ptr::null_mut();
    let status = unsafe {
        tr_dataset_new(s.n, DIMS.as_ptr(), 2, s.x.as_ptr(), s.y.as_ptr(), 1, s.z.as_ptr(), &mut out)
    };
    assert_eq!(status, TrStatus::Ok);
    assert!(!out.is_null());
    out
}

fn last_error() -> String {
    let p = tr_last_error();
    assert!(!p.is_null());
    unsafe { CStr::from_ptr(p) }.to_string_lossy().into_owned()
}

fn fit_rank1(data: *const TrDataset) -> *mut TrModel {
    let mut opts = tr_fit_options_default();
    opts.rank = 1;
    opts.restarts = 2;
    opts.seed = 3;
    let mut model = ptr::null_mut();
    let status = unsafe { tr_fit(data, TrFamily::Normal, &opts, &mut model) };
    assert_eq!(status, TrStatus::Ok);
    model
}

#[test]
fn fit_recovers_signal_and_predicts() {
    let s = sample(300, 1);
    let data = dataset(&s);
    let model = fit_rank1(data);
    unsafe {
        assert_eq!(tr_model_rank(model), 1);
        assert_eq!(tr_model_order(model), 2);
        assert_eq!(tr_model_num_covariates(model), 1);
        assert!(tr_model_converged(model));
        assert!(tr_model_bic(model).is_finite());
        assert!(tr_model_loglik(model).is_finite());
        assert!((tr_model_alpha(model) - 0.3).abs() < 0.05);

        let mut dims = [0usize; 2];
        assert_eq!(tr_model_dims(model, dims.as_mut_ptr(), 2), TrStatus::Ok);
        assert_eq!(dims, DIMS);

        let mut gamma = [0.0];
        assert_eq!(tr_model_gamma(model, gamma.as_mut_ptr(), 1), TrStatus::Ok);
        assert!((gamma[0] - 0.5).abs() < 0.05, "gamma {}", gamma[0]);

        let mut b1 = [0.0; 4];
        let mut b2 = [0.0; 4];
        assert_eq!(tr_model_factor(model, 0, b1.as_mut_ptr(), 4), TrStatus::Ok);
        assert_eq!(tr_model_factor(model, 1, b2.as_mut_ptr(), 4), TrStatus::Ok);
        let truth = [1.0, 0.5, -0.5, 0.8];
        let truth2 = [1.0, -0.6, 0.4, 0.7];
        for i in 0..4 {
            for j in 0..4 {
                let err = b1[i] * b2[j] - truth[i] * truth2[j];
                assert!(err.abs() < 0.05, "entry ({i},{j}) off by {err}");
            }
        }

        let mut mean = vec![0.0; s.n];
        assert_eq!(tr_model_predict(model, data, mean.as_mut_ptr(), s.n), TrStatus::Ok);
        let rss: f64 = mean.iter().zip(&s.y).map(|(m, y)| (m - y).powi(2)).sum();
        assert!(rss / (s.n as f64) < 0.02, "mean squared residual {}", rss / s.n as f64);

        tr_model_free(model);
        tr_dataset_free(data);
    }
}

#[test]
fn select_rank_and_json_round_trip() {
    let s = sample(200, 2);
    let data = dataset(&s);
    let mut opts = tr_fit_options_default();
    opts.restarts = 1;
    let mut model = ptr::null_mut();
    unsafe {
        let status = tr_select_rank(data, TrFamily::Normal, 2, &opts, &mut model);
        assert_eq!(status, TrStatus::Ok);
        assert_eq!(tr_model_rank(model), 1);

        let mut json = ptr::null_mut();
        assert_eq!(tr_model_to_json(model, &mut json), TrStatus::Ok);
        let mut back = ptr::null_mut();
        assert_eq!(tr_model_from_json(json, &mut back), TrStatus::Ok);
        assert_eq!(tr_model_bic(back).to_bits(), tr_model_bic(model).to_bits());
        let mut a = [0.0; 4];
        let mut b = [0.0; 4];
        tr_model_factor(model, 1, a.as_mut_ptr(), 4);
        tr_model_factor(back, 1, b.as_mut_ptr(), 4);
        assert_eq!(a, b);

        tr_string_free(json);
        tr_model_free(back);
        tr_model_free(model);
        tr_dataset_free(data);
    }
}

#[test]
fn errors_are_reported_through_status_codes() {
    let s = sample(20, 3);
    unsafe {
        let mut out = ptr::null_mut();
        let status = tr_dataset_new(s.n, DIMS.as_ptr(), 2, ptr::null(), s.y.as_ptr(), 0, ptr::null(), &mut out);
        assert_eq!(status, TrStatus::NullPointer);
        assert!(out.is_null());

        let bad_dims = [0usize, 4];
        let status = tr_dataset_new(s.n, bad_dims.as_ptr(), 2, s.x.as_ptr(), s.y.as_ptr(), 0, ptr::null(), &mut out);
        assert_eq!(status, TrStatus::InvalidArgument, "{}", last_error());

        let data = dataset(&s);
        let mut opts = tr_fit_options_default();
        opts.rank = 0;
        let mut model = ptr::null_mut();
        assert_eq!(tr_fit(data, TrFamily::Normal, &opts, &mut model), TrStatus::InvalidArgument);
        assert!(last_error().contains("rank"));

        opts.rank = 1;
        opts.penalty = TrPenalty::Lasso;
        opts.rho = -1.0;
        assert_eq!(tr_fit(data, TrFamily::Normal, &opts, &mut model), TrStatus::InvalidArgument);
        assert!(model.is_null());

        assert_eq!(tr_fit(ptr::null(), TrFamily::Normal, &opts, &mut model), TrStatus::NullPointer);

        let text = CString::new("{ not json").unwrap();
        assert_eq!(tr_model_from_json(text.as_ptr(), &mut model), TrStatus::Parse);
        tr_dataset_free(data);
    }
}

#[test]
fn short_buffers_are_rejected() {
    let s = sample(200, 4);
    let data = dataset(&s);
    let model = fit_rank1(data);
    unsafe {
        let mut small = [0.0; 3];
        assert_eq!(tr_model_factor(model, 0, small.as_mut_ptr(), 3), TrStatus::BufferTooSmall);
        assert_eq!(tr_model_factor(model, 5, small.as_mut_ptr(), 3), TrStatus::InvalidArgument);
        assert_eq!(tr_model_predict(model, data, small.as_mut_ptr(), 3), TrStatus::BufferTooSmall);
        tr_model_free(model);
        tr_dataset_free(data);
    }
}

#[test]
fn null_handles_are_harmless() {
    unsafe {
        tr_model_free(ptr::null_mut());
        tr_dataset_free(ptr::null_mut());
        tr_string_free(ptr::null_mut());
        assert_eq!(tr_model_rank(ptr::null()), 0);
        assert!(tr_model_bic(ptr::null()).is_nan());
        assert!(!tr_model_converged(ptr::null()));
    }
}

#[test]
fn generated_header_compiles_as_c() {
    let header = Path::new(env!("CARGO_MANIFEST_DIR")).join("include/tensorreg.h");
    assert!(header.exists(), "header missing at {}", header.display());
    let Ok(status) = Command::new("cc")
        .args(["-std=c99", "-Wall", "-Werror", "-fsyntax-only", "-x", "c"])
        .arg(&header)
        .status()
    else {
        eprintln!("no C compiler on PATH; skipping header compile check");
        return;
    };
    assert!(status.success());
}
