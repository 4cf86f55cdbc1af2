//! Training loss terms, generic over the scalar so the same code runs on
//! plain numbers and on the gradient tape.
//!
//! The staged fit combines four terms: a hinged centerline distance that lets
//! the spline drift a small tolerance for free, a quadratic endpoint anchor,
//! a squared-second-difference curvature regularizer, and a soft Dice loss
//! between the differentiable voxelization and the reference segmentation
//! (optionally restricted to labeled slices).

use crate::autodiff::Real;
use crate::bspline;
use crate::error::Error;
use crate::grid::{SliceMask, VoxelGrid};
use crate::vec3::Vec3;
use crate::voxelizer::SoftVoxelization;
use crate::Result;
use serde::Serialize;

/// Stabilizer for the soft Dice ratio.
const DICE_EPS: f64 = 1e-7;

/// Per-term weights of the total loss.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct LossWeights {
    pub centerline: f64,
    pub endpoint: f64,
    pub vox: f64,
    pub curvature: f64,
}

impl LossWeights {
    pub fn validate(&self) -> Result<()> {
        let all = [self.centerline, self.endpoint, self.vox, self.curvature];
        if all.iter().any(|w| !w.is_finite() || *w < 0.0) {
            return Err(Error::InvalidArgument(format!(
                "loss weights must be finite and non-negative, got {self:?}"
            )));
        }
        Ok(())
    }
}

/// Hinged squared distance between matched centerline samples: deviations
/// under `tol` voxels are free, beyond that they cost `(d - tol)^2`.
pub fn centerline_loss<T: Real>(
    samples: &[Vec3<T>],
    target: &[Vec3<f64>],
    tol: f64,
) -> Result<T> {
    if samples.len() != target.len() {
        return Err(Error::InvalidArgument(format!(
            "centerline loss needs matched samples, got {} vs {}",
            samples.len(),
            target.len()
        )));
    }
    let mut total = T::zero();
    for (s, t) in samples.iter().zip(target) {
        let dx = s.x() - t.x();
        let dy = s.y() - t.y();
        let dz = s.z() - t.z();
        let d = (dx * dx + dy * dy + dz * dz).sqrt();
        let excess = (d - tol).clamp_min(0.0);
        total = total + excess * excess;
    }
    Ok(total)
}

/// Squared distance of the first and last sample to their anchors.
pub fn endpoint_loss<T: Real>(samples: &[Vec3<T>], first: Vec3<f64>, last: Vec3<f64>) -> T {
    let sq = |s: &Vec3<T>, t: &Vec3<f64>| -> T {
        let dx = s.x() - t.x();
        let dy = s.y() - t.y();
        let dz = s.z() - t.z();
        dx * dx + dy * dy + dz * dz
    };
    sq(&samples[0], &first) + sq(samples.last().unwrap(), &last)
}

/// Sum of squared second differences of the samples; zero exactly when they
/// are collinear and equally spaced.
pub fn curvature_reg<T: Real>(samples: &[Vec3<T>]) -> Result<T> {
    let seconds = bspline::second_differences(samples)?;
    let mut total = T::zero();
    for s in seconds {
        total = total + s.norm_sq();
    }
    Ok(total)
}

/// Soft Dice loss `1 - (2 sum(soft * ref) + eps) / (sum(soft) + sum(ref) + eps)`
/// over the whole grid.
pub fn dice_loss<T: Real>(soft: &SoftVoxelization<T>, seg: &VoxelGrid) -> Result<T> {
    dice_loss_masked(soft, seg, None)
}

/// [`dice_loss`] with the sums restricted to labeled slices when a mask is
/// given. Unlabeled slices contribute nothing at all — they are unknown, not
/// background.
pub fn dice_loss_masked<T: Real>(
    soft: &SoftVoxelization<T>,
    seg: &VoxelGrid,
    mask: Option<&SliceMask>,
) -> Result<T> {
    if soft.shape != seg.shape {
        return Err(Error::ShapeMismatch {
            a: soft.shape,
            b: seg.shape,
        });
    }
    if let Some(m) = mask {
        if m.axis_len() != seg.shape[m.axis.index()] {
            return Err(Error::InvalidArgument(format!(
                "slice mask covers {} slices but the grid has {}",
                m.axis_len(),
                seg.shape[m.axis.index()]
            )));
        }
    }
    let mut inter = T::zero();
    let mut soft_sum = T::zero();
    let mut ref_sum = 0.0f64;
    let [nx, ny, nz] = seg.shape;
    for k in 0..nz {
        for j in 0..ny {
            for i in 0..nx {
                if let Some(m) = mask {
                    let idx = [i, j, k][m.axis.index()];
                    if !m.contains(idx) {
                        continue;
                    }
                }
                let s = soft.get(i, j, k);
                let r = seg.get(i, j, k);
                // Exact zeros are pruned constants; skipping them changes
                // nothing (value or gradient) and keeps the tape small.
                if s.value() != 0.0 {
                    soft_sum = soft_sum + s;
                    if r == 1 {
                        inter = inter + s;
                    }
                }
                ref_sum += r as f64;
            }
        }
    }
    let denom = soft_sum + ref_sum + DICE_EPS;
    let ratio = (inter * 2.0 + DICE_EPS) / denom;
    Ok((ratio - 1.0) * -1.0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::autodiff::Tape;
    use crate::voxelizer::Axis;

    fn soft_from(shape: [usize; 3], data: Vec<f64>) -> SoftVoxelization<f64> {
        assert_eq!(data.len(), shape[0] * shape[1] * shape[2]);
        SoftVoxelization {
            shape,
            grid: data,
            tau: 0.1,
            margin: 3,
            axis: Axis::Z,
        }
    }

    #[test]
    fn dice_is_zero_on_exact_match() {
        let seg = VoxelGrid::from_data([2, 2, 2], vec![1, 0, 0, 1, 0, 0, 1, 0]).unwrap();
        let soft = soft_from([2, 2, 2], seg.data.iter().map(|&v| v as f64).collect());
        let loss = dice_loss(&soft, &seg).unwrap();
        assert!(loss.abs() < 1e-8, "loss = {loss}");
    }

    #[test]
    fn dice_at_half_occupancy_matches_formula() {
        let seg = VoxelGrid::from_data([2, 2, 2], vec![1, 1, 1, 0, 0, 0, 0, 0]).unwrap();
        let soft = soft_from([2, 2, 2], vec![0.5; 8]);
        let loss = dice_loss(&soft, &seg).unwrap();
        let expected = 1.0 - (2.0 * 1.5 + 1e-7) / (4.0 + 3.0 + 1e-7);
        assert!((loss - expected).abs() < 1e-15);
    }

    #[test]
    fn dice_survives_empty_inputs() {
        let seg = VoxelGrid::zeros([2, 2, 2]);
        let soft = soft_from([2, 2, 2], vec![0.0; 8]);
        let loss = dice_loss(&soft, &seg).unwrap();
        assert!(loss.is_finite());
        assert!(loss.abs() < 1e-12);
    }

    #[test]
    fn dice_rejects_shape_mismatch() {
        let seg = VoxelGrid::zeros([2, 2, 2]);
        let soft = soft_from([2, 2, 1], vec![0.0; 4]);
        assert!(matches!(
            dice_loss(&soft, &seg),
            Err(Error::ShapeMismatch { .. })
        ));
    }

    #[test]
    fn masked_dice_ignores_unlabeled_slices() {
        // Foreground only in slice k = 0, soft mass only in slice k = 1.
        let seg = VoxelGrid::from_data([1, 1, 2], vec![1, 0]).unwrap();
        let soft = soft_from([1, 1, 2], vec![0.0, 0.9]);
        let only_k0 = SliceMask::new(Axis::Z, vec![0], 2).unwrap();
        let masked = dice_loss_masked(&soft, &seg, Some(&only_k0)).unwrap();
        // Within the mask: soft sum 0, ref sum 1, intersection 0.
        let expected = 1.0 - 1e-7 / (1.0 + 1e-7);
        assert!((masked - expected).abs() < 1e-15);
        // The unmasked loss does see the stray soft mass, which dilutes the
        // ratio further and makes the loss even worse.
        let full = dice_loss(&soft, &seg).unwrap();
        assert!(full > masked);
    }

    #[test]
    fn centerline_hinge_is_free_inside_tolerance() {
        let target = vec![Vec3([0.0, 0.0, 0.0]), Vec3([1.0, 0.0, 0.0])];
        let near = vec![Vec3([0.1, 0.0, 0.0]), Vec3([1.0, 0.1, 0.0])];
        let loss = centerline_loss(&near, &target, 0.2).unwrap();
        assert_eq!(loss, 0.0);
        let far = vec![Vec3([1.2, 0.0, 0.0]), Vec3([1.0, 0.0, 0.0])];
        let loss = centerline_loss(&far, &target, 0.2).unwrap();
        assert!((loss - 1.0) < 1e-12, "loss = {loss}");
        assert!(centerline_loss(&far, &target[..1].to_vec(), 0.2).is_err());
    }

    #[test]
    fn hinge_gradient_flows_only_when_active() {
        let tape = Tape::new();
        let x = tape.leaf(0.75);
        let samples = vec![Vec3([x, x * 0.0, x * 0.0])];
        let target = vec![Vec3([0.0, 0.0, 0.0])];
        let loss = centerline_loss(&samples, &target, 0.2).unwrap();
        let adj = tape.backward(loss);
        // d/dx (x - 0.2)^2 = 2 * 0.55
        assert!((adj.wrt(x) - 1.1).abs() < 1e-12);

        let tape2 = Tape::new();
        let y = tape2.leaf(0.1);
        let samples = vec![Vec3([y, y * 0.0, y * 0.0])];
        let loss = centerline_loss(&samples, &target, 0.2).unwrap();
        let adj = tape2.backward(loss);
        assert_eq!(adj.wrt(y), 0.0);
    }

    #[test]
    fn endpoint_loss_is_quadratic_in_both_ends() {
        let samples = vec![
            Vec3([1.0, 0.0, 0.0]),
            Vec3([5.0, 5.0, 5.0]),
            Vec3([9.0, 0.0, 1.0]),
        ];
        let loss = endpoint_loss(&samples, Vec3([0.0, 0.0, 0.0]), Vec3([9.0, 0.0, 0.0]));
        assert!((loss - 2.0).abs() < 1e-12);
    }

    #[test]
    fn curvature_vanishes_on_uniform_lines() {
        let line: Vec<Vec3<f64>> = (0..8).map(|i| Vec3([i as f64, 2.0, 3.0])).collect();
        assert_eq!(curvature_reg(&line).unwrap(), 0.0);
        let bent = vec![
            Vec3([0.0, 0.0, 0.0]),
            Vec3([1.0, 0.0, 0.0]),
            Vec3([2.0, 1.0, 0.0]),
        ];
        assert!((curvature_reg(&bent).unwrap() - 1.0).abs() < 1e-12);
    }
}
