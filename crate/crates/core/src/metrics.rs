//! Evaluation metrics for fitted vessels: overlap between binary grids and
//! distances between point sets. These are reporting tools, not losses — all
//! plain `f64`, no tape involved.

use serde::Serialize;

use crate::error::Error;
use crate::grid::{SliceMask, VoxelGrid};
use crate::mesh::MeshQuality;
use crate::vec3::Vec3;
use crate::Result;

/// Hard Dice overlap `2|A and B| / (|A| + |B|)`; two empty grids count as a
/// perfect match.
pub fn dice_score(a: &VoxelGrid, b: &VoxelGrid) -> Result<f64> {
    a.same_shape(b)?;
    let mut inter = 0usize;
    let mut total = 0usize;
    for (x, y) in a.data.iter().zip(&b.data) {
        inter += (*x == 1 && *y == 1) as usize;
        total += (*x == 1) as usize + (*y == 1) as usize;
    }
    if total == 0 {
        return Ok(1.0);
    }
    Ok(2.0 * inter as f64 / total as f64)
}

/// [`dice_score`] restricted to the labeled slices of `mask`.
pub fn dice_score_masked(a: &VoxelGrid, b: &VoxelGrid, mask: &SliceMask) -> Result<f64> {
    a.same_shape(b)?;
    if mask.axis_len() != a.shape[mask.axis.index()] {
        return Err(Error::InvalidArgument(format!(
            "slice mask covers {} slices but the grid has {}",
            mask.axis_len(),
            a.shape[mask.axis.index()]
        )));
    }
    let mut inter = 0usize;
    let mut total = 0usize;
    let [nx, ny, nz] = a.shape;
    for k in 0..nz {
        for j in 0..ny {
            for i in 0..nx {
                if !mask.contains([i, j, k][mask.axis.index()]) {
                    continue;
                }
                let x = a.get(i, j, k);
                let y = b.get(i, j, k);
                inter += (x == 1 && y == 1) as usize;
                total += (x == 1) as usize + (y == 1) as usize;
            }
        }
    }
    if total == 0 {
        return Ok(1.0);
    }
    Ok(2.0 * inter as f64 / total as f64)
}

fn nearest_distances(from: &[Vec3<f64>], to: &[Vec3<f64>]) -> Vec<f64> {
    from.iter()
        .map(|p| {
            to.iter()
                .map(|q| p.distance(*q))
                .fold(f64::INFINITY, f64::min)
        })
        .collect()
}

fn require_points(a: &[Vec3<f64>], b: &[Vec3<f64>]) -> Result<()> {
    if a.is_empty() || b.is_empty() {
        return Err(Error::InvalidArgument(
            "point-set metrics need non-empty sets".into(),
        ));
    }
    Ok(())
}

/// Symmetric chamfer distance: the mean nearest-neighbor distance in each
/// direction, averaged.
pub fn chamfer_distance(a: &[Vec3<f64>], b: &[Vec3<f64>]) -> Result<f64> {
    require_points(a, b)?;
    let ab = nearest_distances(a, b);
    let ba = nearest_distances(b, a);
    let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
    Ok((mean(&ab) + mean(&ba)) / 2.0)
}

/// 95th-percentile Hausdorff distance over the pooled nearest-neighbor
/// distances of both directions, with linear interpolation between ranks.
pub fn hd95(a: &[Vec3<f64>], b: &[Vec3<f64>]) -> Result<f64> {
    require_points(a, b)?;
    let mut pooled = nearest_distances(a, b);
    pooled.extend(nearest_distances(b, a));
    pooled.sort_by(|x, y| x.partial_cmp(y).expect("distances are never NaN"));
    let rank = 0.95 * (pooled.len() - 1) as f64;
    let lo = rank.floor() as usize;
    let frac = rank - lo as f64;
    if lo + 1 >= pooled.len() {
        return Ok(pooled[lo]);
    }
    Ok(pooled[lo] + frac * (pooled[lo + 1] - pooled[lo]))
}

/// Centers of foreground voxels with a background (or out-of-grid) 6-neighbor:
/// the discrete surface of a mask, the point cloud the surface-distance
/// metrics run on.
pub fn boundary_points(grid: &VoxelGrid) -> Vec<Vec3<f64>> {
    let [nx, ny, nz] = grid.shape;
    let mut out = Vec::new();
    for k in 0..nz {
        for j in 0..ny {
            for i in 0..nx {
                if grid.get(i, j, k) != 1 {
                    continue;
                }
                let exposed = (i == 0 || grid.get(i - 1, j, k) == 0)
                    || (i + 1 == nx || grid.get(i + 1, j, k) == 0)
                    || (j == 0 || grid.get(i, j - 1, k) == 0)
                    || (j + 1 == ny || grid.get(i, j + 1, k) == 0)
                    || (k == 0 || grid.get(i, j, k - 1) == 0)
                    || (k + 1 == nz || grid.get(i, j, k + 1) == 0);
                if exposed {
                    out.push(Vec3(VoxelGrid::center(i, j, k)));
                }
            }
        }
    }
    out
}

/// Everything an evaluation of one predicted mask against a reference
/// reports. Overlap always; surface distances from the masks' boundary
/// voxels; centerline distances only when both polylines are supplied.
#[derive(Debug, Clone, Serialize)]
pub struct EvalReport {
    pub dice: f64,
    /// Symmetric chamfer between the mask surfaces, voxels.
    pub chamfer: f64,
    /// 95th-percentile Hausdorff between the mask surfaces, voxels.
    pub hd95: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub centerline_chamfer: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub centerline_hd95: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub mesh_quality: Option<MeshQuality>,
}

/// Compare a predicted mask against a reference mask, optionally with the
/// corresponding centerline polylines. Either mask being empty is an error:
/// there is no surface to measure distances to.
pub fn evaluate(
    pred: &VoxelGrid,
    reference: &VoxelGrid,
    centerlines: Option<(&[Vec3<f64>], &[Vec3<f64>])>,
) -> Result<EvalReport> {
    let dice = dice_score(pred, reference)?;
    let pb = boundary_points(pred);
    let rb = boundary_points(reference);
    let report = EvalReport {
        dice,
        chamfer: chamfer_distance(&pb, &rb)?,
        hd95: hd95(&pb, &rb)?,
        centerline_chamfer: match centerlines {
            Some((p, r)) => Some(chamfer_distance(p, r)?),
            None => None,
        },
        centerline_hd95: match centerlines {
            Some((p, r)) => Some(hd95(p, r)?),
            None => None,
        },
        mesh_quality: None,
    };
    for (name, v) in [
        ("dice", report.dice),
        ("chamfer", report.chamfer),
        ("hd95", report.hd95),
    ] {
        if !v.is_finite() {
            return Err(Error::NumericFailure {
                stage: "evaluate",
                detail: format!("{name} is not finite: {v}"),
            });
        }
    }
    Ok(report)
}
