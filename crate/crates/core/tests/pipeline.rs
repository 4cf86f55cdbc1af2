//! End-to-end pipeline checks at small scale: synthetic case -> fit ->
//! evaluation, plus the divergence guard and report plumbing.

use vesselfit_core::fit::fit_vessel;
use vesselfit_core::synth::{generate, SynthConfig, VesselKind};
use vesselfit_core::{FitConfig, FitInputs};

fn quick_config() -> FitConfig {
    let mut cfg = FitConfig::default();
    cfg.s_loss = 64;
    cfg.s_mesh = 48;
    cfg.stage1.iterations = 120;
    cfg.stage2.iterations = 60;
    cfg.enable_stage3 = false;
    cfg.enable_stage4 = false;
    cfg
}

#[test]
fn straight_fit_recovers_the_tube() {
    let mut sc = SynthConfig::new(VesselKind::Straight, 11);
    sc.shape = [32, 32, 32];
    let case = generate(&sc).unwrap();
    let inputs = FitInputs {
        seg: case.seg,
        preliminary_centerline: case.preliminary_centerline,
        endpoints: None,
        slice_mask: None,
    };
    let (params, report) = fit_vessel(&inputs, &quick_config()).unwrap();
    params.validate().unwrap();
    assert!(report.dice > 0.8, "dice {}", report.dice);
    assert!(report.chamfer < 2.0, "chamfer {}", report.chamfer);
    assert_eq!(report.stages.len(), 2);
    // Initialization already least-squares-fits the preliminary centerline,
    // so stage 1 starts near its optimum and must stay there.
    let s1 = &report.stages[0];
    assert!(s1.final_loss <= s1.initial_loss + 0.5, "{s1:?}");
    assert!(report.wall_time_s > 0.0);
}

#[test]
fn all_four_stages_run_and_report() {
    let mut sc = SynthConfig::new(VesselKind::Arc, 3);
    sc.shape = [32, 32, 32];
    let case = generate(&sc).unwrap();
    let inputs = FitInputs {
        seg: case.seg,
        preliminary_centerline: case.preliminary_centerline,
        endpoints: Some(case.endpoints),
        slice_mask: None,
    };
    let mut cfg = quick_config();
    cfg.stage1.iterations = 60;
    cfg.stage2.iterations = 20;
    cfg.stage3.iterations = 10;
    cfg.stage4.iterations = 10;
    cfg.enable_stage3 = true;
    cfg.enable_stage4 = true;
    let (params, report) = fit_vessel(&inputs, &cfg).unwrap();
    assert_eq!(report.stages.len(), 4);
    for (i, s) in report.stages.iter().enumerate() {
        assert_eq!(s.stage, i + 1);
        assert!(s.iterations > 0);
        assert!(s.initial_loss.is_finite() && s.final_loss.is_finite());
    }
    // Stage 4 trains the adjustments, so at least one must move off zero.
    assert!(params
        .adjustment_cp
        .iter()
        .flatten()
        .any(|&a| a != 0.0));
}

#[test]
fn stage1_smoothed_loss_is_monotone() {
    use vesselfit_core::fit::{init_params, run_stage, OptState, LOSS_WINDOW};
    let mut sc = SynthConfig::new(VesselKind::Arc, 9);
    sc.shape = [32, 32, 32];
    let case = generate(&sc).unwrap();
    let inputs = FitInputs {
        seg: case.seg,
        preliminary_centerline: case.preliminary_centerline,
        endpoints: None,
        slice_mask: None,
    };
    let mut cfg = quick_config();
    cfg.stage1.iterations = 200;
    let params = init_params(&inputs, &cfg).unwrap();
    let mut state = OptState::default();
    let run = run_stage(&params, &inputs, &cfg, 1, &mut state).unwrap();
    let means: Vec<f64> = run
        .history
        .windows(LOSS_WINDOW)
        .skip(LOSS_WINDOW)
        .map(|w| w.iter().sum::<f64>() / LOSS_WINDOW as f64)
        .collect();
    // Non-increasing past the burn-in window, up to optimizer chatter near
    // the optimum.
    for pair in means.windows(2) {
        assert!(
            pair[1] <= pair[0] + 1e-3 + 0.01 * pair[0].abs(),
            "smoothed loss rose: {} -> {}",
            pair[0],
            pair[1]
        );
    }
}

#[test]
fn runaway_learning_rate_reports_divergence() {
    let mut sc = SynthConfig::new(VesselKind::Straight, 5);
    sc.shape = [32, 32, 32];
    let case = generate(&sc).unwrap();
    let inputs = FitInputs {
        seg: case.seg,
        preliminary_centerline: case.preliminary_centerline,
        endpoints: None,
        slice_mask: None,
    };
    let mut cfg = quick_config();
    cfg.stage1.lr = 1e6;
    cfg.stage1.iterations = 80;
    let err = fit_vessel(&inputs, &cfg).unwrap_err();
    assert!(err.is_numeric(), "unexpected error {err}");
}

#[test]
fn sparse_mask_fit_stays_close_to_full() {
    let mut sc = SynthConfig::new(VesselKind::Straight, 21);
    sc.shape = [32, 32, 32];
    let case = generate(&sc).unwrap();
    let mask =
        vesselfit_core::synth::sparsify_slices(&case.seg, vesselfit_core::voxelizer::Axis::Z, 0.2)
            .unwrap();
    let inputs = FitInputs {
        seg: case.seg,
        preliminary_centerline: case.preliminary_centerline,
        endpoints: Some(case.endpoints),
        slice_mask: Some(mask),
    };
    let (_, report) = fit_vessel(&inputs, &quick_config()).unwrap();
    assert!(report.dice > 0.75, "sparse dice {}", report.dice);
    let frac = report.sparse_fraction.expect("fraction recorded");
    assert!(frac > 0.0 && frac < 0.5, "fraction {frac}");
}
