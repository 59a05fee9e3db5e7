use std::time::Instant;

use sar_sizing::adc::{AdcConfig, AdcModel, DesignPoint};
use sar_sizing::harness::{
    equivalence_check, equivalence_check_keyed, plan_test, run_segments, spectrum_metrics, Capture, NoiseKeying,
    TestPlan,
};

fn noisy(n_bits: u32) -> AdcModel<f64> {
    let cfg = AdcConfig::new(n_bits, 10e6, 1.0);
    let design = DesignPoint {
        c_unit: 1e-15,
        r_sw: 50.0,
        t_sample: 0.3 * cfg.t_conv(),
        sigma_cmp: 300e-6,
        t_d0: 40e-12,
        tau_reg: 15e-12,
        r_drv_msb: 20.0,
        t_dff: 150e-12,
    };
    AdcModel::derive(design, cfg)
}

fn full_scale_plan(n_bits: u32, f_s: f64, k: usize) -> TestPlan<f64> {
    let mut p = plan_test(f_s, k, 1, f_s * 0.1).unwrap();
    p.amplitude = 1.0 - 0.5f64.powi(n_bits as i32);
    p
}

#[test]
fn ideal_quantizer_sndr() {
    for n in [4u32, 8, 12] {
        let m = AdcModel::ideal(n, 1.0, 1e6);
        let plan = full_scale_plan(n, 1e6, 4096);
        let cap = run_segments(&m, &plan).unwrap();
        let s = spectrum_metrics(&cap.codes, &plan, 1e-6).unwrap();
        let expect = 6.02 * n as f64 + 1.76;
        assert!((s.sndr - expect).abs() <= 0.3, "N={n}: {} vs {expect}", s.sndr);
        assert!(s.sfdr >= 0.0);
        assert!((s.enob - (s.sndr - 1.76) / 6.02).abs() < 1e-12);
    }
}

#[test]
fn noisy_segments_merge_bit_exactly() {
    let m = noisy(10);
    for segs in [1usize, 2, 4, 8, 16] {
        let mut plan = plan_test(10e6, 1024, segs, 1.3e6).unwrap();
        plan.seed = Some(99);
        assert!(equivalence_check(&m, &plan).unwrap(), "M={segs}");
    }
}

#[test]
fn segment_local_noise_keys_break_equivalence() {
    let m = noisy(10);
    let mut plan = plan_test(10e6, 1024, 4, 1.3e6).unwrap();
    plan.seed = Some(99);
    assert!(!equivalence_check_keyed(&m, &plan, NoiseKeying::SegmentLocal).unwrap());
    plan.seed = None;
    assert!(equivalence_check_keyed(&m, &plan, NoiseKeying::SegmentLocal).unwrap());
}

#[test]
fn sndr_invariant_under_code_sign_flip() {
    let m = noisy(10);
    let mut plan = plan_test(10e6, 2048, 4, 0.9e6).unwrap();
    plan.seed = Some(3);
    let cap = run_segments(&m, &plan).unwrap();
    let top = (1u32 << 10) - 1;
    let flipped: Vec<u32> = cap.codes.iter().map(|&c| top - c).collect();
    let a = spectrum_metrics(&cap.codes, &plan, 1e-4).unwrap();
    let b = spectrum_metrics(&flipped, &plan, 1e-4).unwrap();
    assert!((a.sndr - b.sndr).abs() < 1e-9);
}

#[test]
fn noise_lowers_sndr_and_seed_matters() {
    let m = noisy(10);
    let mut plan = plan_test(10e6, 1024, 4, 1.3e6).unwrap();
    let clean = run_segments(&m, &plan).unwrap();
    plan.seed = Some(1);
    let a = run_segments(&m, &plan).unwrap();
    plan.seed = Some(2);
    let b = run_segments(&m, &plan).unwrap();
    assert_ne!(a.codes, b.codes);
    let s_clean = spectrum_metrics(&clean.codes, &plan, 1e-4).unwrap().sndr;
    let s_noisy = spectrum_metrics(&a.codes, &plan, 1e-4).unwrap().sndr;
    assert!(s_noisy < s_clean, "{s_noisy} !< {s_clean}");
}

#[test]
fn capture_csv_round_trip() {
    let m = noisy(8);
    let mut plan = plan_test(10e6, 256, 4, 1.3e6).unwrap();
    plan.seed = Some(11);
    let cap = run_segments(&m, &plan).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("capture.csv");
    cap.save_csv(&path).unwrap();
    let back = Capture::<f64>::load_csv(&path).unwrap();
    assert_eq!(back.codes, cap.codes);
    assert_eq!(back.inputs, cap.inputs);
    let text = std::fs::read_to_string(&path).unwrap();
    assert!(text.starts_with("index,input,code\n"));
    assert!(!text.contains('\r'));
}

/// Loose speed-up check; only meaningful with at least M cores.
#[test]
fn segmented_runtime_scales_with_workers() {
    const M: usize = 4;
    let cores = std::thread::available_parallelism().map_or(1, |n| n.get());
    if cores < M {
        eprintln!("skipping runtime scaling check: {cores} core(s) available, need {M}");
        return;
    }
    let m = noisy(12);
    let mut plan = plan_test(10e6, 1 << 16, 1, 1.3e6).unwrap();
    plan.seed = Some(5);
    let seg_len_plan = TestPlan {
        k: plan.k / M,
        ..plan.clone()
    };
    let t = Instant::now();
    run_segments(&m, &seg_len_plan).unwrap();
    let single = t.elapsed().as_secs_f64();
    let pool = rayon::ThreadPoolBuilder::new().num_threads(M).build().unwrap();
    let split = plan.with_segments(M).unwrap();
    let t = Instant::now();
    pool.install(|| run_segments(&m, &split).unwrap());
    let parallel = t.elapsed().as_secs_f64();
    assert!(parallel <= single * 1.5, "{parallel} s vs single segment {single} s");
}

#[test]
fn single_precision_sine_test() {
    let m = AdcModel::<f32>::ideal(8, 1.0, 1e6);
    let mut plan = plan_test(1e6f32, 4096, 4, 1e5).unwrap();
    plan.amplitude = 1.0 - 0.5f32.powi(8);
    let cap = run_segments(&m, &plan).unwrap();
    let s = spectrum_metrics(&cap.codes, &plan, 1e-6f32).unwrap();
    assert!((s.sndr - 49.92).abs() <= 0.3, "{}", s.sndr);
}
