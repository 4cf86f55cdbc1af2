//! Scratch calibration driver (not shipped).
use vesselfit_core::fit::fit_vessel;
use vesselfit_core::synth::{generate, sparsify_slices, SynthConfig, VesselKind};
use vesselfit_core::voxelizer::Axis;
use vesselfit_core::{FitConfig, FitInputs};

fn main() {
    let mode = std::env::args().nth(1).unwrap_or("full".into());
    let kind: VesselKind = std::env::args().nth(2).unwrap_or("helix".into()).parse().unwrap();
    let seed: u64 = std::env::args().nth(3).unwrap_or("4".into()).parse().unwrap();
    let case = generate(&SynthConfig::new(kind, seed)).unwrap();
    let ep = if std::env::var_os("TRUE_ENDPOINTS").is_some() {
        let cp = &case.truth.centerline_cp;
        Some((vesselfit_core::vec3::Vec3(cp[0]), vesselfit_core::vec3::Vec3(*cp.last().unwrap())))
    } else {
        None
    };
    let base_inputs = FitInputs {
        seg: case.seg.clone(),
        preliminary_centerline: case.preliminary_centerline.clone(),
        endpoints: ep,
        slice_mask: None,
    };
    let mut cfg = FitConfig::default();
    if let Some(v) = std::env::args().nth(4) { cfg.n_c = v.parse().unwrap(); }
    if let Some(v) = std::env::args().nth(5) { cfg.n_r = v.parse().unwrap(); cfg.n_a = cfg.n_r; }
    if let Ok(v) = std::env::var("NA") { cfg.n_a = v.parse().unwrap(); }
    if let Ok(v) = std::env::var("STAGE3_ITERS") { cfg.stage3.iterations = v.parse().unwrap(); }
    if let Ok(v) = std::env::var("STAGE2_ITERS") { cfg.stage2.iterations = v.parse().unwrap(); }
    match mode.as_str() {
        "full" => {
            let (_, r) = fit_vessel(&base_inputs, &cfg).unwrap();
            println!("{kind:?} full: dice {:.4} chamfer {:.3}", r.dice, r.chamfer);
        }
        "sparse" => {
            let (_, rf) = fit_vessel(&base_inputs, &cfg).unwrap();
            let mask = sparsify_slices(&case.seg, Axis::Z, 0.05).unwrap();
            let n = mask.n_labeled();
            let mut inputs = base_inputs;
            inputs.slice_mask = Some(mask);
            let (p, rs) = fit_vessel(&inputs, &cfg).unwrap();
            println!(
                "{kind:?} sparse({n} slices): full {:.4} sparse {:.4} gap {:.2} pts",
                rf.dice, rs.dice, (rf.dice - rs.dice) * 100.0
            );
            println!("labeled: {:?}", inputs.slice_mask.as_ref().unwrap().indices);
            for s in &rs.stages {
                println!("  stage {}: {:.4} -> {:.4}", s.stage, s.initial_loss, s.final_loss);
            }
            let fr = vesselfit_core::bspline::SplineCurve::from_scalars(&p.radius_cp).unwrap();
            let tr = vesselfit_core::bspline::SplineCurve::from_scalars(&case.truth.radius_cp).unwrap();
            print!("radius fit/truth: ");
            for i in 0..7 {
                let t = i as f64 / 6.0;
                print!("{:.2}/{:.2} ", fr.eval_scalar(t).unwrap(), tr.eval_scalar(t).unwrap());
            }
            println!();
        }
        "stages" => {
            let mask = sparsify_slices(&case.seg, Axis::Z, 0.05).unwrap();
            let mut inputs = base_inputs;
            inputs.slice_mask = Some(mask);
            let tr = vesselfit_core::bspline::SplineCurve::from_scalars(&case.truth.radius_cp).unwrap();
            print!("truth radius:   ");
            for i in 0..7 {
                print!("{:.2} ", tr.eval_scalar(i as f64 / 6.0).unwrap());
            }
            println!();
            for (label, s2, s3) in [("after stage 1", 0usize, false), ("after stage 2", usize::MAX, false), ("after stage 3", usize::MAX, true)] {
                let mut c = cfg.clone();
                if s2 == 0 {
                    c.stage2.iterations = 0;
                }
                c.enable_stage3 = s3;
                let (p, r) = fit_vessel(&inputs, &c).unwrap();
                let fr = vesselfit_core::bspline::SplineCurve::from_scalars(&p.radius_cp).unwrap();
                print!("{label}: dice {:.4}  radius ", r.dice);
                for i in 0..7 {
                    print!("{:.2} ", fr.eval_scalar(i as f64 / 6.0).unwrap());
                }
                println!("cps {:?}", p.radius_cp.iter().map(|v| (v * 100.0).round() / 100.0).collect::<Vec<_>>());
            }
        }
        "sweep" => {
            let mask = sparsify_slices(&case.seg, Axis::Z, 0.05).unwrap();
            let mut inputs = base_inputs;
            inputs.slice_mask = Some(mask);
            let mut c = cfg.clone();
            c.enable_stage3 = false;
            let (p, r) = fit_vessel(&inputs, &c).unwrap();
            println!("stage-2 end dice {:.4} rcp {:?}", r.dice, p.radius_cp);
            let target = vesselfit_core::fit::resample_arclength(&inputs.preliminary_centerline, c.s_loss).unwrap();
            let ep = inputs.endpoint_targets();
            for cp0 in [2.3, 2.6, 2.8, 3.0, 3.2, 3.5, 3.8, 4.2] {
                let mut q = p.clone();
                q.radius_cp[0] = cp0;
                print!("cp0 {cp0:.1}: ");
                for axis in [Axis::X, Axis::Y, Axis::Z] {
                    let lf = vesselfit_core::fit::FitLoss {
                        weights: c.stage2.weights,
                        centerline_target: &target,
                        endpoints: ep,
                        seg: &inputs.seg,
                        slice_mask: inputs.slice_mask.as_ref(),
                        axis,
                        s_loss: c.s_loss,
                        s_mesh: c.s_mesh,
                        tau: c.tau,
                        margin: c.effective_margin(),
                        centerline_tol: c.centerline_tol,
                    };
                    let (v, _) = vesselfit_core::autodiff::gradient(&q, &lf).unwrap();
                    print!("L{axis:?} {v:.4} ");
                }
                let mesh = q.as_generic().build_mesh(c.s_mesh).unwrap().to_values();
                let pred = vesselfit_core::sdf::rasterize_clamped(&mesh, case.seg.shape).unwrap();
                let d = vesselfit_core::metrics::dice_score(&pred, &case.seg).unwrap();
                println!("fulldice {d:.4}");
            }
        }
        "bias" => {
            let mask = sparsify_slices(&case.seg, Axis::Z, 0.05).unwrap();
            let labeled: Vec<f64> = mask.indices.iter().map(|&z| (z as f64 + 0.5 - 10.24) / 43.52).collect();
            let mut inputs = base_inputs;
            inputs.slice_mask = Some(mask);
            let target = vesselfit_core::fit::resample_arclength(&inputs.preliminary_centerline, cfg.s_loss).unwrap();
            let ep = inputs.endpoint_targets();
            for bump in [0.0, 0.15, 0.3, 0.45, -0.15] {
                let mut q = case.truth.clone();
                let nr = q.radius_cp.len();
                for (i, r) in q.radius_cp.iter_mut().enumerate() {
                    let tc = i as f64 / (nr - 1) as f64;
                    if labeled.iter().all(|&lt| (tc - lt).abs() > 0.08) {
                        *r += bump;
                    }
                }
                print!("bump {bump:+.2}: ");
                let mut masked_total = 0.0;
                for axis in [Axis::X, Axis::Y, Axis::Z] {
                    let lf = vesselfit_core::fit::FitLoss {
                        weights: cfg.stage2.weights,
                        centerline_target: &target,
                        endpoints: ep,
                        seg: &inputs.seg,
                        slice_mask: inputs.slice_mask.as_ref(),
                        axis,
                        s_loss: cfg.s_loss,
                        s_mesh: cfg.s_mesh,
                        tau: cfg.tau,
                        margin: cfg.effective_margin(),
                        centerline_tol: cfg.centerline_tol,
                    };
                    let (v, _) = vesselfit_core::autodiff::gradient(&q, &lf).unwrap();
                    masked_total += v;
                    print!("L{axis:?} {v:.5} ");
                }
                let mesh = q.as_generic().build_mesh(cfg.s_mesh).unwrap().to_values();
                let pred = vesselfit_core::sdf::rasterize_clamped(&mesh, case.seg.shape).unwrap();
                let d = vesselfit_core::metrics::dice_score(&pred, &case.seg).unwrap();
                println!("sum {masked_total:.5} fulldice {d:.4}");
            }
        }
        "stage4" => {
            let (_, r0) = fit_vessel(&base_inputs, &cfg).unwrap();
            let mut cfg4 = cfg.clone();
            cfg4.enable_stage4 = true;
            let (_, r4) = fit_vessel(&base_inputs, &cfg4).unwrap();
            println!(
                "{kind:?} stage4: off {:.4} on {:.4} gain {:.2} pts",
                r0.dice, r4.dice, (r4.dice - r0.dice) * 100.0
            );
        }
        "joint" => {
            // Staged reference.
            let (_, rs) = fit_vessel(&base_inputs, &cfg).unwrap();
            // Joint: centerline+radius together from the stage-2 start point.
            let mut cj = cfg.clone();
            cj.stage2.trainable.centerline = true;
            cj.stage2.trainable.radius = true;
            cj.stage2.iterations = cfg.stage2.iterations + cfg.stage3.iterations;
            cj.enable_stage3 = false;
            match fit_vessel(&base_inputs, &cj) {
                Ok((_, rj)) => println!(
                    "{kind:?} joint: staged {:.4} joint {:.4} gap {:.2} pts",
                    rs.dice, rj.dice, (rs.dice - rj.dice) * 100.0
                ),
                Err(e) => println!("{kind:?} joint: staged {:.4} joint DIVERGED ({e})", rs.dice),
            }
        }
        m => panic!("unknown mode {m}"),
    }
}
