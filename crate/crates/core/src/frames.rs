//! Centerline tangents, propagated cross-section frames, and ring points.
//!
//! Tangents are forward differences of the sampled centerline with the last
//! one replicated. Each sample then gets an orthonormal pair `(v_i, v_j)`
//! spanning its cross-section plane: `v_i^n = normalize(v_j^{n-1} x t^n)`,
//! `v_j^n = normalize(t^n x v_i^n)`, seeded with `v_j^{-1} = (0, 0, 1)`
//! (or `(0, 1, 0)` for near-z tangents). Propagating through the previous
//! `v_j` keeps the frame fixed wherever the tangent does not turn and
//! rotates it minimally where it does — no flips for bends under 30 degrees
//! per step.
//!
//! Ring points place `P` directions at angles `2*pi*k/P` in the frame plane
//! with radius `r^n + a_k^n`, clamped from below so the surface cannot
//! invert through its own axis.

use crate::autodiff::Real;
use crate::error::Error;
use crate::vec3::Vec3;
use crate::Result;

/// Consecutive samples closer than this make the tangent undefined.
pub const MIN_SEGMENT_LENGTH: f64 = 1e-9;

/// Below this cross-product norm the frame recursion has collapsed.
pub const MIN_FRAME_CROSS: f64 = 1e-9;

/// Seed switches to `(0, 1, 0)` when the first tangent is this close to z.
pub const SEED_FALLBACK_CROSS: f64 = 1e-6;

/// Radii are clamped to at least this value (in voxels).
pub const MIN_RADIUS: f64 = 1e-3;

/// Centerline samples with their frames and per-direction radii.
#[derive(Debug, Clone)]
pub struct CrossSectionSet<T> {
    pub centers: Vec<Vec3<T>>,
    pub tangents: Vec<Vec3<T>>,
    pub v_i: Vec<Vec3<T>>,
    pub v_j: Vec<Vec3<T>>,
    /// One radius per sample.
    pub radii: Vec<T>,
    /// Per-direction radial offsets, `s * p` row-major; empty means all zero.
    pub adjustments: Vec<T>,
    pub p: usize,
}

/// Forward-difference tangents, last entry replicated.
pub fn compute_tangents<T: Real>(centers: &[Vec3<T>]) -> Result<Vec<Vec3<T>>> {
    if centers.len() < 2 {
        return Err(Error::InvalidArgument(format!(
            "need at least 2 centerline samples, got {}",
            centers.len()
        )));
    }
    let mut tangents = Vec::with_capacity(centers.len());
    for n in 0..centers.len() - 1 {
        let d = centers[n + 1] - centers[n];
        let len = d.norm();
        if len.value() <= MIN_SEGMENT_LENGTH {
            return Err(Error::DegenerateCenterline(format!(
                "samples {n} and {} coincide (distance {:.3e})",
                n + 1,
                len.value()
            )));
        }
        tangents.push(d.scale_t(T::constant(1.0) / len));
    }
    tangents.push(*tangents.last().unwrap());
    Ok(tangents)
}

/// Propagate `(v_i, v_j)` frames along the tangent sequence.
pub fn propagate_frames<T: Real>(
    tangents: &[Vec3<T>],
) -> Result<(Vec<Vec3<T>>, Vec<Vec3<T>>)> {
    if tangents.is_empty() {
        return Err(Error::InvalidArgument("no tangents to frame".into()));
    }
    let mut seed: Vec3<T> = Vec3::splat_f64([0.0, 0.0, 1.0]);
    if seed.cross(tangents[0]).norm().value() < SEED_FALLBACK_CROSS {
        seed = Vec3::splat_f64([0.0, 1.0, 0.0]);
    }
    let mut v_i = Vec::with_capacity(tangents.len());
    let mut v_j = Vec::with_capacity(tangents.len());
    let mut prev_j = seed;
    for (n, &t) in tangents.iter().enumerate() {
        let c = prev_j.cross(t);
        let norm = c.norm();
        if norm.value() < MIN_FRAME_CROSS {
            return Err(Error::FrameDegeneracy {
                index: n,
                norm: norm.value(),
            });
        }
        let vi = c.scale_t(T::constant(1.0) / norm);
        let vj = t.cross(vi).normalized();
        v_i.push(vi);
        v_j.push(vj);
        prev_j = vj;
    }
    Ok((v_i, v_j))
}

impl<T: Real> CrossSectionSet<T> {
    /// Assemble frames for sampled centers, radii and optional adjustments.
    ///
    /// `adjustments` must be empty (circular sections) or `centers.len() * p`
    /// values row-major.
    pub fn build(
        centers: Vec<Vec3<T>>,
        radii: Vec<T>,
        adjustments: Vec<T>,
        p: usize,
    ) -> Result<Self> {
        if p < 3 {
            return Err(Error::InvalidArgument(format!(
                "need at least 3 radial directions, got {p}"
            )));
        }
        if radii.len() != centers.len() {
            return Err(Error::InvalidArgument(format!(
                "{} radii for {} centers",
                radii.len(),
                centers.len()
            )));
        }
        if !adjustments.is_empty() && adjustments.len() != centers.len() * p {
            return Err(Error::InvalidArgument(format!(
                "{} adjustment values, expected {} * {p} or none",
                adjustments.len(),
                centers.len()
            )));
        }
        let tangents = compute_tangents(&centers)?;
        let (v_i, v_j) = propagate_frames(&tangents)?;
        Ok(CrossSectionSet {
            centers,
            tangents,
            v_i,
            v_j,
            radii,
            adjustments,
            p,
        })
    }

    pub fn n_sections(&self) -> usize {
        self.centers.len()
    }

    /// Radius of direction `k` at section `n`, clamped from below.
    pub fn direction_radius(&self, n: usize, k: usize) -> T {
        let r = self.radii[n];
        let total = if self.adjustments.is_empty() {
            r
        } else {
            r + self.adjustments[n * self.p + k]
        };
        total.clamp_min(MIN_RADIUS)
    }

    /// All ring points, `n_sections * p` row-major.
    pub fn ring_points(&self) -> Vec<Vec3<T>> {
        let mut points = Vec::with_capacity(self.n_sections() * self.p);
        for n in 0..self.n_sections() {
            for k in 0..self.p {
                let theta = 2.0 * std::f64::consts::PI * k as f64 / self.p as f64;
                let r = self.direction_radius(n, k);
                let offset =
                    self.v_i[n].scale(theta.cos()) + self.v_j[n].scale(theta.sin());
                points.push(self.centers[n] + offset.scale_t(r));
            }
        }
        points
    }
}
