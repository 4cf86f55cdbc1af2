//! Deterministic synthetic vessels with known ground truth.
//!
//! Each case starts from analytic geometry (line, arc, helix, tapered or
//! elliptic tube), freezes it into spline control points, builds the ground
//! truth mesh at high resolution, and rasterizes it exactly into a binary
//! segmentation. The preliminary centerline is then re-extracted from that
//! segmentation as per-slice centroids — the same imperfect input a real
//! pipeline would provide — with optional seeded noise on top.
//!
//! Everything is reproducible: the same config yields bitwise-identical
//! parameters, meshes, grids and polylines.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::Error;
use crate::fit::VesselParams;
use crate::grid::{SliceMask, VoxelGrid};
use crate::mesh::{validate_watertight, TriangleMesh};
use crate::sdf::{rasterize_exact, ExactSdf};
use crate::vec3::Vec3;
use crate::voxelizer::Axis;
use crate::Result;

/// Ground-truth vessel families.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum VesselKind {
    /// Straight constant-radius tube.
    Straight,
    /// Circular arc, gently bent, monotone along z.
    Arc,
    /// Helix with a varying radius profile.
    Helix,
    /// Straight tube tapering along its length.
    VaryingRadius,
    /// Straight tube with an elliptic (second-harmonic) cross-section.
    Elliptic,
}

impl VesselKind {
    pub fn name(self) -> &'static str {
        match self {
            VesselKind::Straight => "straight",
            VesselKind::Arc => "arc",
            VesselKind::Helix => "helix",
            VesselKind::VaryingRadius => "varying-radius",
            VesselKind::Elliptic => "elliptic",
        }
    }

    pub fn all() -> [VesselKind; 5] {
        [
            VesselKind::Straight,
            VesselKind::Arc,
            VesselKind::Helix,
            VesselKind::VaryingRadius,
            VesselKind::Elliptic,
        ]
    }
}

impl std::str::FromStr for VesselKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<VesselKind> {
        match s.to_ascii_lowercase().as_str() {
            "straight" => Ok(VesselKind::Straight),
            "arc" => Ok(VesselKind::Arc),
            "helix" => Ok(VesselKind::Helix),
            "varying-radius" | "varying_radius" => Ok(VesselKind::VaryingRadius),
            "elliptic" => Ok(VesselKind::Elliptic),
            other => Err(Error::InvalidArgument(format!(
                "unknown vessel kind {other:?}; expected one of straight, arc, helix, \
                 varying-radius, elliptic"
            ))),
        }
    }
}

/// Configuration of one synthetic case.
#[derive(Debug, Clone)]
pub struct SynthConfig {
    pub kind: VesselKind,
    pub shape: [usize; 3],
    pub seed: u64,
    /// Cross-sections of the ground-truth mesh.
    pub sections: usize,
    /// Radial directions of the ground truth. Kept high so the polygonal
    /// cross-section tracks the analytic one to a fraction of a percent.
    pub p: usize,
    pub n_c: usize,
    pub n_r: usize,
    pub n_a: usize,
    /// Uniform jitter (voxels) added to every preliminary centerline point.
    pub centerline_noise: f64,
    /// Probability of flipping voxels closer than half a voxel to the
    /// surface; models sloppy manual segmentation. Zero disables it.
    pub boundary_flip_prob: f64,
}

impl SynthConfig {
    pub fn new(kind: VesselKind, seed: u64) -> SynthConfig {
        SynthConfig {
            kind,
            shape: [64, 64, 64],
            seed,
            sections: 96,
            p: 32,
            n_c: 12,
            n_r: 8,
            n_a: 8,
            centerline_noise: 0.0,
            boundary_flip_prob: 0.0,
        }
    }
}

/// One generated case: the frozen ground truth and the derived fit inputs.
#[derive(Debug, Clone)]
pub struct SyntheticCase {
    pub truth: VesselParams,
    pub mesh: TriangleMesh<f64>,
    pub seg: VoxelGrid,
    pub preliminary_centerline: Vec<Vec3<f64>>,
    /// True vessel tips. The slice-centroid polyline ends at the centers of
    /// the terminal occupied slices, roughly half a voxel short of the real
    /// tips; annotation protocols record the tips themselves, so fits get
    /// them as explicit endpoint supervision.
    pub endpoints: (Vec3<f64>, Vec3<f64>),
}

/// Analytic centerline, radius profile and second-harmonic amplitude for one
/// kind, scaled to the grid. `t` runs 0..=1 tip to tip.
struct AnalyticVessel {
    center: Box<dyn Fn(f64) -> [f64; 3]>,
    radius: Box<dyn Fn(f64) -> f64>,
    /// Radial adjustment per direction angle, constant along the vessel.
    adjust: Box<dyn Fn(f64) -> f64>,
}

fn analytic(kind: VesselKind, shape: [usize; 3]) -> AnalyticVessel {
    let cx = shape[0] as f64 / 2.0;
    let cy = shape[1] as f64 / 2.0;
    let nz = shape[2] as f64;
    // Transverse feature scale relative to the 64-voxel reference design.
    let m = (shape[0].min(shape[1]).min(shape[2]) as f64) / 64.0;
    let z0 = 0.125 * nz;
    let z1 = 0.875 * nz;
    let flat = Box::new(|_t: f64| 0.0);
    match kind {
        VesselKind::Straight => AnalyticVessel {
            center: Box::new(move |t| [cx, cy, z0 + (z1 - z0) * t]),
            radius: Box::new(move |_| 5.0 * m),
            adjust: flat,
        },
        VesselKind::Arc => {
            let r_arc = 20.0 * m;
            let phi = 40.0f64.to_radians();
            let cz = nz / 2.0;
            AnalyticVessel {
                center: Box::new(move |t| {
                    let a = -phi + 2.0 * phi * t;
                    [cx - r_arc + r_arc * a.cos(), cy, cz + r_arc * a.sin()]
                }),
                radius: Box::new(move |_| 4.0 * m),
                adjust: flat,
            }
        }
        VesselKind::Helix => {
            // A gentle quarter-turn sweep with varying radius, the curvature
            // regime of arched vessels; tight multi-turn coils are outside
            // what slice-sparse supervision can pin down.
            let amp = 6.0 * m;
            let turns = 0.25;
            AnalyticVessel {
                center: Box::new(move |t| {
                    let a = std::f64::consts::TAU * turns * t;
                    [
                        cx + amp * a.cos() - amp / 2.0,
                        cy + amp * a.sin() - amp / 2.0,
                        0.16 * nz + 0.68 * nz * t,
                    ]
                }),
                // Mid-vessel widening of ~15%, the tapering range of arched
                // vessels.
                radius: Box::new(move |t| (3.8 + 0.6 * (std::f64::consts::PI * t).sin()) * m),
                adjust: flat,
            }
        }
        VesselKind::VaryingRadius => AnalyticVessel {
            center: Box::new(move |t| [cx, cy, z0 + (z1 - z0) * t]),
            radius: Box::new(move |t| (6.0 - 3.0 * t) * m),
            adjust: flat,
        },
        VesselKind::Elliptic => AnalyticVessel {
            center: Box::new(move |t| [cx, cy, 0.16 * nz + 0.68 * nz * t]),
            radius: Box::new(move |_| 5.0 * m),
            adjust: Box::new(move |theta| 1.8 * m * (2.0 * theta).cos()),
        },
    }
}

/// Build the frozen ground-truth parameters for a kind.
pub fn truth_params(cfg: &SynthConfig) -> VesselParams {
    let v = analytic(cfg.kind, cfg.shape);
    let centerline_cp: Vec<[f64; 3]> = (0..cfg.n_c)
        .map(|i| (v.center)(i as f64 / (cfg.n_c - 1) as f64))
        .collect();
    let radius_cp: Vec<f64> = (0..cfg.n_r)
        .map(|i| (v.radius)(i as f64 / (cfg.n_r - 1) as f64))
        .collect();
    let adjustment_cp: Vec<Vec<f64>> = (0..cfg.n_a)
        .map(|_| {
            (0..cfg.p)
                .map(|k| (v.adjust)(std::f64::consts::TAU * k as f64 / cfg.p as f64))
                .collect()
        })
        .collect();
    VesselParams {
        centerline_cp,
        radius_cp,
        adjustment_cp,
        p: cfg.p,
    }
}

/// Generate one synthetic case.
pub fn generate(cfg: &SynthConfig) -> Result<SyntheticCase> {
    if cfg.sections < 2 || cfg.p < 3 || cfg.n_c < 4 || cfg.n_r < 4 || cfg.n_a < 4 {
        return Err(Error::Generation(format!(
            "synthetic config too small: {cfg:?}"
        )));
    }
    let truth = truth_params(cfg);
    truth.validate()?;
    let mesh = truth.as_generic().build_mesh(cfg.sections)?.to_values();
    validate_watertight(&mesh)?;
    let mut seg = rasterize_exact(&mesh, cfg.shape)?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    if cfg.boundary_flip_prob > 0.0 {
        seg = jitter_boundary(&seg, &mesh, cfg.boundary_flip_prob, &mut rng)?;
    }
    let mut preliminary = extract_preliminary_centerline(&seg, Axis::Z)?;
    if cfg.centerline_noise > 0.0 {
        let s = cfg.centerline_noise;
        for p in &mut preliminary {
            for d in 0..3 {
                p.0[d] += rng.gen_range(-s..=s);
            }
        }
    }
    let endpoints = (
        Vec3(truth.centerline_cp[0]),
        Vec3(*truth.centerline_cp.last().unwrap()),
    );
    Ok(SyntheticCase {
        truth,
        mesh,
        seg,
        preliminary_centerline: preliminary,
        endpoints,
    })
}

/// Rough centerline estimate: the centroid of the foreground of every slice
/// along `axis`, ordered by slice. Slices without foreground are skipped.
pub fn extract_preliminary_centerline(seg: &VoxelGrid, axis: Axis) -> Result<Vec<Vec3<f64>>> {
    let a = axis.index();
    let n = seg.shape[a];
    let mut sums = vec![[0.0f64; 3]; n];
    let mut counts = vec![0usize; n];
    let [nx, ny, nz] = seg.shape;
    for k in 0..nz {
        for j in 0..ny {
            for i in 0..nx {
                if seg.get(i, j, k) == 1 {
                    let c = VoxelGrid::center(i, j, k);
                    let w = [i, j, k][a];
                    for d in 0..3 {
                        sums[w][d] += c[d];
                    }
                    counts[w] += 1;
                }
            }
        }
    }
    let points: Vec<Vec3<f64>> = (0..n)
        .filter(|&w| counts[w] > 0)
        .map(|w| {
            Vec3([
                sums[w][0] / counts[w] as f64,
                sums[w][1] / counts[w] as f64,
                sums[w][2] / counts[w] as f64,
            ])
        })
        .collect();
    if points.len() < 4 {
        return Err(Error::Generation(format!(
            "only {} occupied slices along {}; cannot form a centerline",
            points.len(),
            axis
        )));
    }
    Ok(points)
}

/// Keep `keep_fraction` of the occupied slices, placed equidistantly, plus the
/// first and last occupied slice — the sparse-annotation pattern of slice-wise
/// manual labeling, which always marks where the vessel starts and ends.
/// Equidistant placement minimizes the largest unlabeled run, which is what
/// bounds how far the fitted profile can stray between labels.
pub fn sparsify_slices(seg: &VoxelGrid, axis: Axis, keep_fraction: f64) -> Result<SliceMask> {
    if !(keep_fraction > 0.0 && keep_fraction <= 1.0) {
        return Err(Error::InvalidArgument(format!(
            "keep fraction must be in (0, 1], got {keep_fraction}"
        )));
    }
    let a = axis.index();
    let n = seg.shape[a];
    let mut occupied: Vec<usize> = Vec::new();
    let [nx, ny, nz] = seg.shape;
    for k in 0..nz {
        for j in 0..ny {
            for i in 0..nx {
                if seg.get(i, j, k) == 1 {
                    let w = [i, j, k][a];
                    if occupied.last() != Some(&w) {
                        occupied.push(w);
                    }
                }
            }
        }
    }
    occupied.sort_unstable();
    occupied.dedup();
    if occupied.is_empty() {
        return Err(Error::InvalidArgument(
            "cannot sparsify an empty segmentation".into(),
        ));
    }
    let interior = (occupied.len() as f64 * keep_fraction).ceil() as usize;
    let mut keep = vec![occupied[0], *occupied.last().unwrap()];
    for i in 1..=interior {
        let f = i as f64 / (interior + 1) as f64;
        keep.push(occupied[(f * (occupied.len() - 1) as f64).round() as usize]);
    }
    SliceMask::new(axis, keep, n)
}

/// Flip voxels within half a voxel of the surface with probability `prob`.
fn jitter_boundary(
    seg: &VoxelGrid,
    mesh: &TriangleMesh<f64>,
    prob: f64,
    rng: &mut ChaCha8Rng,
) -> Result<VoxelGrid> {
    let sdf = ExactSdf::new(mesh)?;
    let mut out = seg.clone();
    let [nx, ny, nz] = seg.shape;
    for k in 0..nz {
        for j in 0..ny {
            for i in 0..nx {
                // Only voxels with a differing 6-neighbor can be near the
                // surface; check those against the exact distance.
                let v = seg.get(i, j, k);
                let mut boundary = false;
                let coords = [i as isize, j as isize, k as isize];
                'n: for d in 0..3 {
                    for s in [-1isize, 1] {
                        let mut c = coords;
                        c[d] += s;
                        if c[d] < 0 || c[d] >= seg.shape[d] as isize {
                            continue;
                        }
                        if seg.get(c[0] as usize, c[1] as usize, c[2] as usize) != v {
                            boundary = true;
                            break 'n;
                        }
                    }
                }
                if !boundary {
                    continue;
                }
                let center = Vec3(VoxelGrid::center(i, j, k));
                if sdf.distance_unsigned(center) < 0.5 && rng.gen::<f64>() < prob {
                    out.set(i, j, k, 1 - v);
                }
            }
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn straight_cylinder_volume_matches_analytic() {
        let cfg = SynthConfig::new(VesselKind::Straight, 7);
        let case = generate(&cfg).unwrap();
        let r = 5.0;
        let length = 48.0;
        let analytic = std::f64::consts::PI * r * r * length;
        let count = case.seg.count_foreground() as f64;
        let rel = (count - analytic).abs() / analytic;
        assert!(rel < 0.03, "voxel count {count} vs {analytic} ({rel:.4})");
    }

    #[test]
    fn generation_is_bitwise_deterministic() {
        let mut cfg = SynthConfig::new(VesselKind::Helix, 99);
        cfg.boundary_flip_prob = 0.2;
        cfg.centerline_noise = 0.3;
        let a = generate(&cfg).unwrap();
        let b = generate(&cfg).unwrap();
        assert_eq!(a.seg.data, b.seg.data);
        assert_eq!(a.truth, b.truth);
        for (x, y) in a
            .preliminary_centerline
            .iter()
            .zip(&b.preliminary_centerline)
        {
            assert_eq!(x.0, y.0);
        }
        for (x, y) in a.mesh.vertices.iter().zip(&b.mesh.vertices) {
            assert_eq!(x.0, y.0);
        }
    }

    #[test]
    fn extracted_centerline_tracks_the_straight_axis() {
        let case = generate(&SynthConfig::new(VesselKind::Straight, 1)).unwrap();
        assert!(case.preliminary_centerline.len() > 40);
        for p in &case.preliminary_centerline {
            assert!((p.x() - 32.0).abs() < 0.2, "x = {}", p.x());
            assert!((p.y() - 32.0).abs() < 0.2, "y = {}", p.y());
        }
    }

    #[test]
    fn helix_case_is_clean_and_monotone() {
        let case = generate(&SynthConfig::new(VesselKind::Helix, 3)).unwrap();
        validate_watertight(&case.mesh).unwrap();
        let zs: Vec<f64> = case.preliminary_centerline.iter().map(|p| p.z()).collect();
        assert!(zs.windows(2).all(|w| w[1] > w[0]));
        assert!(case.seg.count_foreground() > 0);
    }

    #[test]
    fn elliptic_section_gains_the_expected_volume() {
        let ell = generate(&SynthConfig::new(VesselKind::Elliptic, 5)).unwrap();
        // Zeroing the adjustments of the same truth restores a circular tube.
        let mut round_truth = ell.truth.clone();
        for row in &mut round_truth.adjustment_cp {
            row.iter_mut().for_each(|v| *v = 0.0);
        }
        let round_mesh = round_truth.as_generic().build_mesh(96).unwrap().to_values();
        let round_seg = rasterize_exact(&round_mesh, [64, 64, 64]).unwrap();
        let v_e = ell.seg.count_foreground() as f64;
        let v_c = round_seg.count_foreground() as f64;
        // Sections are polygons with vertices at radius r + A*cos(2*theta_k),
        // so the area ratio over the circular tube is
        //   1 + (A/r)^2/2 * cos(4*pi/P)
        // (the cross terms in sum r_k r_{k+1} average to zero).
        let expected = 1.0 + 0.5 * (1.8f64 / 5.0).powi(2) * (4.0 * std::f64::consts::PI / 32.0).cos();
        let got = v_e / v_c;
        assert!((got - expected).abs() < 0.02, "ratio {got} vs {expected}");
    }

    #[test]
    fn sparsify_keeps_ends_and_fraction() {
        let case = generate(&SynthConfig::new(VesselKind::Straight, 2)).unwrap();
        let mask = sparsify_slices(&case.seg, Axis::Z, 0.25).unwrap();
        // Occupied z range of the straight tube: find it from the seg.
        let occupied: Vec<usize> = (0..64)
            .filter(|&k| (0..64).any(|j| (0..64).any(|i| case.seg.get(i, j, k) == 1)))
            .collect();
        assert_eq!(mask.indices.first(), occupied.first());
        assert_eq!(mask.indices.last(), occupied.last());
        let kept = mask.indices.len() as f64 / occupied.len() as f64;
        assert!(kept < 0.35, "kept fraction {kept}");
        assert!(sparsify_slices(&case.seg, Axis::Z, 0.0).is_err());
    }

    #[test]
    fn boundary_jitter_only_touches_the_surface_shell() {
        let mut cfg = SynthConfig::new(VesselKind::Straight, 11);
        cfg.boundary_flip_prob = 0.2;
        let noisy = generate(&cfg).unwrap();
        cfg.boundary_flip_prob = 0.0;
        let clean = generate(&cfg).unwrap();
        let sdf = ExactSdf::new(&clean.mesh).unwrap();
        let mut flipped = 0usize;
        for k in 0..64 {
            for j in 0..64 {
                for i in 0..64 {
                    if noisy.seg.get(i, j, k) != clean.seg.get(i, j, k) {
                        flipped += 1;
                        let d = sdf.distance_unsigned(Vec3(VoxelGrid::center(i, j, k)));
                        assert!(d < 0.5, "flip at distance {d}");
                    }
                }
            }
        }
        assert!(flipped > 0);
    }
}
