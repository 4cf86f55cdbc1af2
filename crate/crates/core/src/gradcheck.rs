//! Finite-difference validation of the analytic gradients.
//!
//! The optimizer trusts the tape; this module earns that trust. It builds a
//! small synthetic fixture, assembles the stage losses whose gradients drive
//! the voxel-fitting stages, and compares every parameter coordinate's tape
//! gradient against a central finite difference of the same loss. Coordinates
//! that fail at the requested step are re-checked at a quarter step before
//! they count as mismatches: the soft rasterizer and the hinge losses pick
//! nearest elements, and a step that crosses such a switch compares the
//! analytic slope of one branch against a secant spanning two.

use serde::Serialize;

use crate::autodiff::{self, ParamLoss};
use crate::fit::{self, FitConfig, FitInputs, FitLoss};
use crate::synth::{self, SynthConfig, VesselKind};
use crate::voxelizer::Axis;
use crate::{Error, Result};

/// Relative agreement required between tape and finite difference.
pub const REL_TOL: f64 = 1e-2;
/// Absolute slack for coordinates whose gradient is essentially zero.
pub const ABS_TOL: f64 = 1e-4;
/// Fraction of coordinates that must agree for a check to pass.
pub const PASS_FRACTION: f64 = 0.99;

/// A coordinate whose finite difference still disagreed after the
/// quarter-step recheck.
#[derive(Debug, Clone, Serialize)]
pub struct CoordMismatch {
    pub stage: usize,
    pub axis: &'static str,
    pub coord: String,
    pub analytic: f64,
    pub fd: f64,
}

/// Outcome of checking every coordinate of the stage losses on one fixture.
#[derive(Debug, Clone, Serialize)]
pub struct GradCheckReport {
    pub fixture: String,
    pub h: f64,
    /// Coordinates checked: model DOF x two stages x three slicing axes.
    pub n_checked: usize,
    pub n_passed: usize,
    /// Suspected nearest-element switches: failed at `h`, retried at `h/4`.
    pub n_rechecked: usize,
    /// Rechecked coordinates that agreed at the smaller step.
    pub n_recovered: usize,
    pub pass_fraction: f64,
    /// Worst surviving disagreements, capped to keep reports readable.
    pub mismatches: Vec<CoordMismatch>,
}

impl GradCheckReport {
    pub fn passed(&self) -> bool {
        self.pass_fraction >= PASS_FRACTION
    }
}

/// The named check fixtures: a straight tube in a 24-voxel cube and an arc
/// in a 32-voxel cube, both with exact segmentations.
pub fn fixture(name: &str) -> Result<(FitInputs, FitConfig)> {
    let (kind, shape) = match name {
        "straight" => (VesselKind::Straight, [24, 24, 24]),
        "arc" => (VesselKind::Arc, [32, 32, 32]),
        other => {
            return Err(Error::InvalidArgument(format!(
                "unknown gradient-check fixture {other:?}; expected \"straight\" or \"arc\""
            )))
        }
    };
    let mut sc = SynthConfig::new(kind, 7);
    sc.shape = shape;
    let case = synth::generate(&sc)?;
    let inputs = FitInputs {
        seg: case.seg,
        preliminary_centerline: case.preliminary_centerline,
        endpoints: Some(case.endpoints),
        slice_mask: None,
    };
    Ok((inputs, FitConfig::default()))
}

fn agrees(fd: f64, analytic: f64) -> bool {
    (fd - analytic).abs() <= ABS_TOL.max(REL_TOL * fd.abs().max(analytic.abs()))
}

/// Check every parameter coordinate of the stage-2 and stage-3 losses at the
/// fit's initialization point, over all three slicing axes.
pub fn check(fixture_name: &str, h: f64) -> Result<GradCheckReport> {
    if !(h > 0.0) || !h.is_finite() {
        return Err(Error::InvalidArgument(format!(
            "finite-difference step must be positive and finite, got {h}"
        )));
    }
    let (inputs, cfg) = fixture(fixture_name)?;
    let params = fit::init_params(&inputs, &cfg)?;
    let target = fit::resample_arclength(&inputs.preliminary_centerline, cfg.s_loss)?;
    let base = params.flatten();

    let mut n_checked = 0usize;
    let mut n_passed = 0usize;
    let mut n_rechecked = 0usize;
    let mut n_recovered = 0usize;
    let mut mismatches = Vec::new();

    for stage in [2usize, 3] {
        for axis in [Axis::X, Axis::Y, Axis::Z] {
            let loss = FitLoss {
                weights: cfg.stage(stage).weights,
                centerline_target: &target,
                endpoints: inputs.endpoint_targets(),
                seg: &inputs.seg,
                slice_mask: None,
                axis,
                s_loss: cfg.s_loss,
                s_mesh: cfg.s_mesh,
                tau: cfg.tau,
                margin: cfg.effective_margin(),
                centerline_tol: cfg.centerline_tol,
            };
            let (_, grad) = autodiff::gradient(&params, &loss)?;
            let grad = grad.flat();
            let fd_at = |i: usize, step: f64| -> Result<f64> {
                let mut plus = base.clone();
                plus[i] += step;
                let mut minus = base.clone();
                minus[i] -= step;
                let lp = loss.eval(&params.with_flat(&plus).as_generic())?;
                let lm = loss.eval(&params.with_flat(&minus).as_generic())?;
                Ok((lp - lm) / (2.0 * step))
            };
            for i in 0..base.len() {
                n_checked += 1;
                let fd = fd_at(i, h)?;
                if agrees(fd, grad[i]) {
                    n_passed += 1;
                    continue;
                }
                n_rechecked += 1;
                let fd_small = fd_at(i, h / 4.0)?;
                if agrees(fd_small, grad[i]) {
                    n_passed += 1;
                    n_recovered += 1;
                    continue;
                }
                if mismatches.len() < 16 {
                    mismatches.push(CoordMismatch {
                        stage,
                        axis: match axis {
                            Axis::X => "x",
                            Axis::Y => "y",
                            Axis::Z => "z",
                        },
                        coord: params.coord_label(i),
                        analytic: grad[i],
                        fd: fd_small,
                    });
                }
            }
        }
    }

    Ok(GradCheckReport {
        fixture: fixture_name.to_string(),
        h,
        n_checked,
        n_passed,
        n_rechecked,
        n_recovered,
        pass_fraction: n_passed as f64 / n_checked as f64,
        mismatches,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn straight_fixture_gradients_match_finite_differences() {
        let report = check("straight", 1e-3).unwrap();
        assert!(
            report.passed(),
            "pass fraction {} below {PASS_FRACTION}: {:?}",
            report.pass_fraction,
            report.mismatches
        );
        assert_eq!(report.n_checked, 6 * 73); // dof = 3*6 + 5 + 5*10
    }

    #[test]
    fn unknown_fixture_and_bad_step_are_rejected() {
        assert!(fixture("spiral").is_err());
        assert!(check("straight", 0.0).is_err());
        assert!(check("straight", f64::NAN).is_err());
    }
}
