//! Vessel parameters and the staged fitting loop.
//!
//! [`VesselParams`] is the public, serializable parameter set: control points
//! for the centerline (3D), the radius profile (1D) and the per-direction
//! radial adjustments (`P`-D). [`GenericParams`] is the same thing over any
//! [`Real`] scalar so a single code path serves plain evaluation and the
//! gradient tape.
//!
//! Fitting runs up to four stages with fixed loss weights, each optimizing
//! one parameter group with Adam while the others stay frozen: (1) centerline
//! against the preliminary polyline, (2) radius against the segmentation,
//! (3) centerline refinement against the segmentation, (4) optional radial
//! adjustments for non-circular cross-sections. Optimizing everything at once
//! from the start diverges quickly — the voxel loss is meaningless until the
//! centerline is roughly right — which is the whole reason for the schedule.

use crate::autodiff::{self, ParamLoss, Real, Tape, Var};
use crate::bspline::{self, SplineCurve};
use crate::error::Error;
use crate::frames::CrossSectionSet;
use crate::grid::{SliceMask, VoxelGrid};
use crate::losses::{self, LossWeights};
use crate::mesh::{self, TriangleMesh};
use crate::metrics;
use crate::optim::Adam;
use crate::vec3::Vec3;
use crate::voxelizer::{self, Axis};
use crate::Result;
use serde::Serialize;

/// Control points of one vessel: centerline, radius profile, radial
/// adjustments. All grids and losses work in voxel units.
#[derive(Debug, Clone, PartialEq)]
pub struct VesselParams {
    pub centerline_cp: Vec<[f64; 3]>,
    pub radius_cp: Vec<f64>,
    /// One row per adjustment control point, each of length `p`.
    pub adjustment_cp: Vec<Vec<f64>>,
    /// Number of radial directions per cross-section.
    pub p: usize,
}

impl VesselParams {
    pub fn validate(&self) -> Result<()> {
        if self.centerline_cp.len() < 4 || self.radius_cp.len() < 4 || self.adjustment_cp.len() < 4
        {
            return Err(Error::InvalidArgument(format!(
                "every spline needs >= 4 control points (got {}, {}, {})",
                self.centerline_cp.len(),
                self.radius_cp.len(),
                self.adjustment_cp.len()
            )));
        }
        if self.p < 3 {
            return Err(Error::InvalidArgument(format!(
                "need at least 3 radial directions, got {}",
                self.p
            )));
        }
        for (i, row) in self.adjustment_cp.iter().enumerate() {
            if row.len() != self.p {
                return Err(Error::InvalidArgument(format!(
                    "adjustment row {i} has {} values, expected {}",
                    row.len(),
                    self.p
                )));
            }
        }
        let finite = self.flatten().iter().all(|v| v.is_finite());
        if !finite {
            return Err(Error::InvalidArgument(
                "parameters contain non-finite values".into(),
            ));
        }
        Ok(())
    }

    /// Non-fatal oddities worth surfacing to a user.
    pub fn consistency_warnings(&self) -> Vec<String> {
        let mut w = Vec::new();
        if self.adjustment_cp.len() != self.radius_cp.len() {
            w.push(format!(
                "adjustment control count {} differs from radius control count {}",
                self.adjustment_cp.len(),
                self.radius_cp.len()
            ));
        }
        if self.centerline_cp.len() <= self.radius_cp.len() {
            w.push(format!(
                "centerline has no more control points ({}) than the radius ({}); \
                 the radius profile may be under-resolved along the vessel",
                self.centerline_cp.len(),
                self.radius_cp.len()
            ));
        }
        w
    }

    pub fn dof(&self) -> usize {
        3 * self.centerline_cp.len() + self.radius_cp.len() + self.adjustment_cp.len() * self.p
    }

    /// Flat layout: centerline xyz per point, then radii, then adjustment rows.
    pub fn flatten(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.dof());
        for c in &self.centerline_cp {
            out.extend_from_slice(c);
        }
        out.extend_from_slice(&self.radius_cp);
        for row in &self.adjustment_cp {
            out.extend_from_slice(row);
        }
        out
    }

    /// Same shape as `self` with coordinates replaced from `flat`.
    pub fn with_flat(&self, flat: &[f64]) -> VesselParams {
        assert_eq!(flat.len(), self.dof(), "flat parameter length mismatch");
        let mut out = self.clone();
        let mut it = flat.iter().copied();
        for c in &mut out.centerline_cp {
            for v in c.iter_mut() {
                *v = it.next().unwrap();
            }
        }
        for r in &mut out.radius_cp {
            *r = it.next().unwrap();
        }
        for row in &mut out.adjustment_cp {
            for v in row.iter_mut() {
                *v = it.next().unwrap();
            }
        }
        out
    }

    /// Human-readable name of flat coordinate `i`, for diagnostics.
    pub fn coord_label(&self, i: usize) -> String {
        let nc3 = 3 * self.centerline_cp.len();
        if i < nc3 {
            return format!("centerline[{}].{}", i / 3, ["x", "y", "z"][i % 3]);
        }
        let i = i - nc3;
        if i < self.radius_cp.len() {
            return format!("radius[{i}]");
        }
        let i = i - self.radius_cp.len();
        format!("adjustment[{}][{}]", i / self.p, i % self.p)
    }

    /// View over plain numbers; identical math to the lifted version.
    pub fn as_generic(&self) -> GenericParams<f64> {
        GenericParams {
            centerline: SplineCurve::new(
                self.centerline_cp.iter().flatten().copied().collect(),
                3,
            )
            .expect("validated centerline"),
            radius: SplineCurve::new(self.radius_cp.clone(), 1).expect("validated radius"),
            adjustments: SplineCurve::new(
                self.adjustment_cp.iter().flatten().copied().collect(),
                self.p,
            )
            .expect("validated adjustments"),
            p: self.p,
        }
    }

    /// Register every coordinate as a tape leaf, in `flatten` order.
    pub fn lift<'t>(&self, tape: &'t Tape) -> GenericParams<Var<'t>> {
        let flat = self.flatten();
        let leaves: Vec<Var<'t>> = flat.iter().map(|&v| tape.leaf(v)).collect();
        let nc3 = 3 * self.centerline_cp.len();
        let nr = self.radius_cp.len();
        GenericParams {
            centerline: SplineCurve::new(leaves[..nc3].to_vec(), 3).expect("validated centerline"),
            radius: SplineCurve::new(leaves[nc3..nc3 + nr].to_vec(), 1)
                .expect("validated radius"),
            adjustments: SplineCurve::new(leaves[nc3 + nr..].to_vec(), self.p)
                .expect("validated adjustments"),
            p: self.p,
        }
    }
}

/// Parameter splines over any scalar; produced by [`VesselParams::as_generic`]
/// or [`VesselParams::lift`].
#[derive(Debug, Clone)]
pub struct GenericParams<T> {
    pub centerline: SplineCurve<T>,
    pub radius: SplineCurve<T>,
    pub adjustments: SplineCurve<T>,
    pub p: usize,
}

impl<T: Real> GenericParams<T> {
    /// Visit every parameter scalar in `flatten` order.
    pub fn for_each_leaf(&self, mut f: impl FnMut(T)) {
        for i in 0..self.centerline.m() {
            for &v in self.centerline.row(i) {
                f(v);
            }
        }
        for i in 0..self.radius.m() {
            f(self.radius.row(i)[0]);
        }
        for i in 0..self.adjustments.m() {
            for &v in self.adjustments.row(i) {
                f(v);
            }
        }
    }

    pub fn sample_centerline(&self, s: usize) -> Result<Vec<Vec3<T>>> {
        Ok(self.centerline.sample_uniform(s)?.points3())
    }

    /// Sample all three splines at `s` sections and assemble frames.
    pub fn cross_sections(&self, s: usize) -> Result<CrossSectionSet<T>> {
        let centers = self.sample_centerline(s)?;
        let radii_samples = self.radius.sample_uniform(s)?;
        let radii: Vec<T> = (0..s).map(|i| radii_samples.scalar(i)).collect();
        let adjustments = self.adjustments.sample_uniform(s)?.data;
        CrossSectionSet::build(centers, radii, adjustments, self.p)
    }

    pub fn build_mesh(&self, s: usize) -> Result<TriangleMesh<T>> {
        mesh::build_vessel_mesh(&self.cross_sections(s)?)
    }
}

/// Which parameter groups a stage may update.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct TrainableGroups {
    pub centerline: bool,
    pub radius: bool,
    pub adjustments: bool,
}

impl TrainableGroups {
    pub fn mask(&self, params: &VesselParams) -> Vec<bool> {
        let mut m = Vec::with_capacity(params.dof());
        m.extend(std::iter::repeat(self.centerline).take(3 * params.centerline_cp.len()));
        m.extend(std::iter::repeat(self.radius).take(params.radius_cp.len()));
        m.extend(
            std::iter::repeat(self.adjustments).take(params.adjustment_cp.len() * params.p),
        );
        m
    }
}

/// One optimization stage: loss weights, what moves, for how long.
#[derive(Debug, Clone, Serialize)]
pub struct StageConfig {
    pub weights: LossWeights,
    pub trainable: TrainableGroups,
    pub iterations: usize,
    pub lr: f64,
}

/// Full fitting configuration with the published defaults.
#[derive(Debug, Clone)]
pub struct FitConfig {
    /// Centerline / radius / adjustment control-point counts.
    pub n_c: usize,
    pub n_r: usize,
    pub n_a: usize,
    /// Radial directions per cross-section.
    pub p: usize,
    /// Samples for centerline losses.
    pub s_loss: usize,
    /// Cross-sections for the mesh fed to the voxelizer.
    pub s_mesh: usize,
    /// Soft voxelization temperature.
    pub tau: f64,
    /// Pruning margin in voxels; `None` derives it from `tau`.
    pub margin: Option<usize>,
    /// Hinge tolerance of the centerline loss, voxels.
    pub centerline_tol: f64,
    pub stage1: StageConfig,
    pub stage2: StageConfig,
    pub stage3: StageConfig,
    pub stage4: StageConfig,
    pub enable_stage3: bool,
    pub enable_stage4: bool,
    /// Loss exceeding `divergence_factor * initial` aborts the stage.
    pub divergence_factor: f64,
    /// OS threads for the final evaluation rasterization. The optimization
    /// loop itself is sequential, and the rasterization decides voxels
    /// independently, so every thread count produces identical results;
    /// 1 is the reference mode.
    pub threads: usize,
}

impl Default for FitConfig {
    fn default() -> Self {
        FitConfig {
            // Control-point counts sized so every control point's basis
            // support spans multiple annotated slices even under slice-sparse
            // supervision; under-determined control points otherwise wander
            // on the axis-alternation noise of the voxel loss.
            n_c: 6,
            n_r: 5,
            n_a: 5,
            p: 10,
            s_loss: 256,
            s_mesh: 64,
            tau: 0.1,
            margin: None,
            centerline_tol: 0.2,
            stage1: StageConfig {
                weights: LossWeights {
                    centerline: 1.0,
                    endpoint: 100.0,
                    vox: 0.0,
                    curvature: 10.0,
                },
                trainable: TrainableGroups {
                    centerline: true,
                    radius: false,
                    adjustments: false,
                },
                iterations: 500,
                lr: 0.5,
            },
            stage2: StageConfig {
                weights: LossWeights {
                    centerline: 0.0,
                    endpoint: 0.0,
                    vox: 1.0,
                    curvature: 0.0,
                },
                trainable: TrainableGroups {
                    centerline: false,
                    radius: true,
                    adjustments: false,
                },
                iterations: 300,
                lr: 0.1,
            },
            stage3: StageConfig {
                weights: LossWeights {
                    centerline: 0.0,
                    endpoint: 100.0,
                    vox: 1.0,
                    curvature: 5.0,
                },
                trainable: TrainableGroups {
                    centerline: true,
                    radius: false,
                    adjustments: false,
                },
                // The correction signal (endpoint residuals left by the
                // stage-1 equilibrium) converges within tens of iterations;
                // past that the curve only tracks per-axis noise downhill.
                iterations: 100,
                lr: 0.1,
            },
            stage4: StageConfig {
                weights: LossWeights {
                    centerline: 0.0,
                    endpoint: 0.0,
                    vox: 1.0,
                    curvature: 0.0,
                },
                trainable: TrainableGroups {
                    centerline: false,
                    radius: false,
                    adjustments: true,
                },
                iterations: 300,
                lr: 0.1,
            },
            enable_stage3: true,
            enable_stage4: false,
            divergence_factor: 10.0,
            threads: 1,
        }
    }
}

impl FitConfig {
    /// Effective pruning margin: explicit value or derived from `tau` so the
    /// sigmoid tail cut by pruning is below 1e-12.
    pub fn effective_margin(&self) -> usize {
        self.margin
            .unwrap_or_else(|| voxelizer::margin_for_tau(self.tau))
    }

    pub fn stage(&self, i: usize) -> &StageConfig {
        match i {
            1 => &self.stage1,
            2 => &self.stage2,
            3 => &self.stage3,
            4 => &self.stage4,
            _ => panic!("stage index {i} out of range"),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_c < 4 || self.n_r < 4 || self.n_a < 4 {
            return Err(Error::InvalidArgument(
                "control-point counts must be >= 4".into(),
            ));
        }
        if self.p < 3 {
            return Err(Error::InvalidArgument(
                "need at least 3 radial directions".into(),
            ));
        }
        if self.s_loss < 4 || self.s_mesh < 2 {
            return Err(Error::InvalidArgument("sampling counts too small".into()));
        }
        if self.tau <= 0.0 {
            return Err(Error::InvalidArgument(format!(
                "tau must be > 0, got {}",
                self.tau
            )));
        }
        if self.threads == 0 {
            return Err(Error::InvalidArgument("threads must be >= 1".into()));
        }
        for i in 1..=4 {
            self.stage(i).weights.validate()?;
        }
        Ok(())
    }
}

/// Everything a fit needs besides configuration.
#[derive(Debug, Clone)]
pub struct FitInputs {
    pub seg: VoxelGrid,
    /// Rough centerline estimate, ordered tip to tip, >= 4 points.
    pub preliminary_centerline: Vec<Vec3<f64>>,
    /// Endpoint targets; defaults to the polyline ends.
    pub endpoints: Option<(Vec3<f64>, Vec3<f64>)>,
    /// Restrict voxel-loss sums to labeled slices (sparse supervision).
    pub slice_mask: Option<SliceMask>,
}

impl FitInputs {
    pub fn validate(&self) -> Result<()> {
        if self.preliminary_centerline.len() < 4 {
            return Err(Error::InvalidInput(format!(
                "preliminary centerline needs >= 4 points, got {}",
                self.preliminary_centerline.len()
            )));
        }
        if self.preliminary_centerline.iter().any(|p| !p.is_finite()) {
            return Err(Error::InvalidInput(
                "preliminary centerline contains non-finite points".into(),
            ));
        }
        if self.seg.count_foreground() == 0 {
            return Err(Error::InvalidInput("segmentation is empty".into()));
        }
        if let Some(mask) = &self.slice_mask {
            let n = self.seg.shape[mask.axis.index()];
            if mask.axis_len() != n {
                return Err(Error::InvalidInput(format!(
                    "slice mask covers {} slices but the grid has {n}",
                    mask.axis_len()
                )));
            }
        }
        Ok(())
    }

    pub fn endpoint_targets(&self) -> (Vec3<f64>, Vec3<f64>) {
        self.endpoints.unwrap_or_else(|| {
            (
                *self.preliminary_centerline.first().unwrap(),
                *self.preliminary_centerline.last().unwrap(),
            )
        })
    }
}

/// Resample a polyline to `s` points equidistant in cumulative chord length.
/// The first and last points are preserved exactly.
pub fn resample_arclength(points: &[Vec3<f64>], s: usize) -> Result<Vec<Vec3<f64>>> {
    if points.len() < 2 {
        return Err(Error::InvalidArgument(format!(
            "cannot resample {} points",
            points.len()
        )));
    }
    if s < 2 {
        return Err(Error::InvalidArgument(format!(
            "need at least 2 output points, got {s}"
        )));
    }
    let mut cum = Vec::with_capacity(points.len());
    cum.push(0.0);
    for w in points.windows(2) {
        cum.push(cum.last().unwrap() + w[0].distance(w[1]));
    }
    let total = *cum.last().unwrap();
    if total <= 0.0 {
        return Err(Error::InvalidArgument(
            "polyline has zero total length".into(),
        ));
    }
    let mut out = Vec::with_capacity(s);
    out.push(points[0]);
    let mut seg = 0usize;
    for i in 1..s - 1 {
        let target = total * i as f64 / (s - 1) as f64;
        while seg + 1 < cum.len() - 1 && cum[seg + 1] < target {
            seg += 1;
        }
        let len = cum[seg + 1] - cum[seg];
        let alpha = if len > 0.0 { (target - cum[seg]) / len } else { 0.0 };
        out.push(points[seg] + (points[seg + 1] - points[seg]).scale(alpha));
    }
    out.push(*points.last().unwrap());
    Ok(out)
}

fn polyline_length(points: &[Vec3<f64>]) -> f64 {
    points.windows(2).map(|w| w[0].distance(w[1])).sum()
}

/// Solve the SPD system `a x = b` (n x n, row-major) by Cholesky; `None` when
/// the factorization meets a non-positive pivot (ill-conditioned fit).
fn cholesky_solve(a: &[f64], b: &[f64], n: usize) -> Option<Vec<f64>> {
    let mut l = vec![0.0f64; n * n];
    for i in 0..n {
        for j in 0..=i {
            let mut sum = a[i * n + j];
            for k in 0..j {
                sum -= l[i * n + k] * l[j * n + k];
            }
            if i == j {
                if sum <= 1e-12 {
                    return None;
                }
                l[i * n + i] = sum.sqrt();
            } else {
                l[i * n + j] = sum / l[j * n + j];
            }
        }
    }
    // Forward then backward substitution.
    let mut y = vec![0.0f64; n];
    for i in 0..n {
        let mut sum = b[i];
        for k in 0..i {
            sum -= l[i * n + k] * y[k];
        }
        y[i] = sum / l[i * n + i];
    }
    let mut x = vec![0.0f64; n];
    for i in (0..n).rev() {
        let mut sum = y[i];
        for k in i + 1..n {
            sum -= l[k * n + i] * x[k];
        }
        x[i] = sum / l[i * n + i];
    }
    Some(x)
}

/// Pick `n` points at uniform arc length as control points directly.
/// Fallback initialization when the least-squares fit is ill-conditioned.
pub(crate) fn subsample_controls(points: &[Vec3<f64>], n: usize) -> Result<Vec<Vec3<f64>>> {
    resample_arclength(points, n)
}

/// Initial parameters from the fit inputs.
///
/// Centerline: weighted least-squares fit of the clamped spline to the
/// arc-length-resampled polyline (heavy weights on the two endpoint rows);
/// falls back to plain subsampling if the normal equations are not positive
/// definite. Radius: constant cylinder estimate `sqrt(|V| / (pi * L))`.
/// Adjustments: zero.
pub fn init_params(inputs: &FitInputs, cfg: &FitConfig) -> Result<VesselParams> {
    inputs.validate()?;
    cfg.validate()?;
    let target = resample_arclength(&inputs.preliminary_centerline, cfg.s_loss.max(cfg.n_c * 4))?;
    let n = cfg.n_c;
    let s = target.len();
    const ENDPOINT_WEIGHT: f64 = 100.0;

    // Normal equations of the weighted least-squares basis fit, shared by
    // all three coordinates.
    let mut rows: Vec<Vec<(usize, f64)>> = Vec::with_capacity(s);
    for i in 0..s {
        let t = i as f64 / (s - 1) as f64;
        let (j, b) = bspline::segment_weights(n, t)?;
        let mut row: Vec<(usize, f64)> = Vec::with_capacity(4);
        for (k, &w) in b.iter().enumerate() {
            let idx = bspline::control_index(n, j, k);
            match row.iter_mut().find(|(i2, _)| *i2 == idx) {
                Some((_, acc)) => *acc += w,
                None => row.push((idx, w)),
            }
        }
        rows.push(row);
    }
    let mut ata = vec![0.0f64; n * n];
    let mut atb = vec![[0.0f64; 3]; n];
    for (i, row) in rows.iter().enumerate() {
        let w = if i == 0 || i == s - 1 { ENDPOINT_WEIGHT } else { 1.0 };
        for &(a, va) in row {
            for &(b, vb) in row {
                ata[a * n + b] += w * va * vb;
            }
            for d in 0..3 {
                atb[a][d] += w * va * target[i].0[d];
            }
        }
    }
    let centerline_cp: Vec<[f64; 3]> = 'ls: {
        let mut cols = Vec::with_capacity(3);
        for d in 0..3 {
            let b: Vec<f64> = atb.iter().map(|r| r[d]).collect();
            match cholesky_solve(&ata, &b, n) {
                Some(x) => cols.push(x),
                None => {
                    let sub = subsample_controls(&target, n)?;
                    break 'ls sub.iter().map(|p| p.0).collect();
                }
            }
        }
        (0..n).map(|i| [cols[0][i], cols[1][i], cols[2][i]]).collect()
    };

    let length = polyline_length(&target);
    let volume = inputs.seg.count_foreground() as f64;
    let r0 = (volume / (std::f64::consts::PI * length)).sqrt();
    Ok(VesselParams {
        centerline_cp,
        radius_cp: vec![r0; cfg.n_r],
        adjustment_cp: vec![vec![0.0; cfg.p]; cfg.n_a],
        p: cfg.p,
    })
}

/// The staged training loss: weighted centerline, endpoint, curvature and
/// soft-Dice terms, evaluated identically on `f64` and tape scalars.
pub struct FitLoss<'a> {
    pub weights: LossWeights,
    /// Arc-length-resampled preliminary centerline, one target per sample.
    pub centerline_target: &'a [Vec3<f64>],
    pub endpoints: (Vec3<f64>, Vec3<f64>),
    pub seg: &'a VoxelGrid,
    pub slice_mask: Option<&'a SliceMask>,
    pub axis: Axis,
    pub s_loss: usize,
    pub s_mesh: usize,
    pub tau: f64,
    pub margin: usize,
    pub centerline_tol: f64,
}

impl ParamLoss for FitLoss<'_> {
    fn eval<T: Real>(&self, params: &GenericParams<T>) -> Result<T> {
        let mut total = T::zero();
        if self.weights.centerline > 0.0
            || self.weights.endpoint > 0.0
            || self.weights.curvature > 0.0
        {
            let samples = params.sample_centerline(self.s_loss)?;
            check_finite(&samples, "centerline sampling")?;
            if self.weights.centerline > 0.0 {
                let l = losses::centerline_loss(&samples, self.centerline_target, self.centerline_tol)?;
                total = total + l * self.weights.centerline;
            }
            if self.weights.endpoint > 0.0 {
                let l = losses::endpoint_loss(&samples, self.endpoints.0, self.endpoints.1);
                total = total + l * self.weights.endpoint;
            }
            if self.weights.curvature > 0.0 {
                let l = losses::curvature_reg(&samples)?;
                total = total + l * self.weights.curvature;
            }
        }
        if self.weights.vox > 0.0 {
            let mesh = params.build_mesh(self.s_mesh)?;
            check_finite_mesh(&mesh)?;
            let soft = voxelizer::soft_voxelize(
                &mesh,
                self.seg.shape,
                self.tau,
                self.margin,
                self.axis,
            )?;
            let l = losses::dice_loss_masked(&soft, self.seg, self.slice_mask)?;
            total = total + l * self.weights.vox;
        }
        if !total.value().is_finite() {
            return Err(Error::NumericFailure {
                stage: "loss total",
                detail: format!("total loss is {}", total.value()),
            });
        }
        Ok(total)
    }
}

fn check_finite<T: Real>(points: &[Vec3<T>], stage: &'static str) -> Result<()> {
    for (i, p) in points.iter().enumerate() {
        if !p.values().iter().all(|v| v.is_finite()) {
            return Err(Error::NumericFailure {
                stage,
                detail: format!("sample {i} is {:?}", p.values()),
            });
        }
    }
    Ok(())
}

fn check_finite_mesh<T: Real>(mesh: &TriangleMesh<T>) -> Result<()> {
    for (i, v) in mesh.vertices.iter().enumerate() {
        if !v.values().iter().all(|c| c.is_finite()) {
            return Err(Error::NumericFailure {
                stage: "mesh construction",
                detail: format!("vertex {i} is {:?}", v.values()),
            });
        }
    }
    Ok(())
}

/// Mutable optimizer state threaded through the stages.
pub struct OptState {
    pub axis: Axis,
}

impl Default for OptState {
    fn default() -> Self {
        OptState { axis: Axis::X }
    }
}

/// Outcome of one stage.
pub struct StageRun {
    pub params: VesselParams,
    pub history: Vec<f64>,
}

/// Smoothing window for the divergence check (and the loss-curve
/// monotonicity it is judged against).
pub const LOSS_WINDOW: usize = 20;

/// Run one optimization stage.
///
/// The voxelization axis in `state` advances once per iteration so
/// consecutive passes slice along X, Y, Z in rotation. Aborts with a
/// divergence error when, past a burn-in of one window, the trailing
/// window-mean of the loss exceeds `divergence_factor` times the initial
/// loss; the burn-in absorbs the transient overshoot a momentum optimizer
/// produces in its first steps when a stage starts near its optimum.
/// Stages shorter than two windows are never aborted.
pub fn run_stage(
    params: &VesselParams,
    inputs: &FitInputs,
    cfg: &FitConfig,
    stage_index: usize,
    state: &mut OptState,
) -> Result<StageRun> {
    let stage = cfg.stage(stage_index);
    let centerline_target = resample_arclength(&inputs.preliminary_centerline, cfg.s_loss)?;
    let endpoints = inputs.endpoint_targets();
    let mut flat = params.flatten();
    let trainable = stage.trainable.mask(params);
    let mut adam = Adam::new(stage.lr, flat.len());
    let mut history = Vec::with_capacity(stage.iterations);
    let mut initial = f64::NAN;
    for iteration in 0..stage.iterations {
        let current = params.with_flat(&flat);
        let loss_fn = FitLoss {
            weights: stage.weights,
            centerline_target: &centerline_target,
            endpoints,
            seg: &inputs.seg,
            slice_mask: inputs.slice_mask.as_ref(),
            axis: state.axis,
            s_loss: cfg.s_loss,
            s_mesh: cfg.s_mesh,
            tau: cfg.tau,
            margin: cfg.effective_margin(),
            centerline_tol: cfg.centerline_tol,
        };
        state.axis = state.axis.next();
        let (loss, grad) = autodiff::gradient(&current, &loss_fn)?;
        if iteration == 0 {
            initial = loss;
        }
        history.push(loss);
        // Judge only windows clear of the first-window burn-in, where a
        // momentum optimizer started near an optimum legitimately rings.
        if history.len() >= 2 * LOSS_WINDOW {
            let tail = &history[history.len() - LOSS_WINDOW..];
            let mean = tail.iter().sum::<f64>() / LOSS_WINDOW as f64;
            if mean > cfg.divergence_factor * initial.max(1e-9) {
                return Err(Error::Divergence {
                    stage: stage_index,
                    iteration,
                    loss: mean,
                    initial,
                });
            }
        }
        adam.step(&mut flat, &grad.flat(), &trainable);
    }
    Ok(StageRun {
        params: params.with_flat(&flat),
        history,
    })
}

/// Summary of one executed stage.
#[derive(Debug, Clone, Serialize)]
pub struct StageReport {
    pub stage: usize,
    pub iterations: usize,
    pub initial_loss: f64,
    pub final_loss: f64,
}

/// Fit summary written alongside the parameters.
#[derive(Debug, Clone, Serialize)]
pub struct FitReport {
    pub stages: Vec<StageReport>,
    /// Dice between the hard rasterization of the fitted mesh and the full
    /// input segmentation; a slice mask restricts training, never scoring.
    pub dice: f64,
    /// Centerline agreement against the preliminary polyline, voxels.
    pub chamfer: f64,
    pub hd95: f64,
    pub mesh_quality: mesh::MeshQuality,
    pub wall_time_s: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub sparse_fraction: Option<f64>,
}

/// Full staged fit: initialization plus every enabled stage.
pub fn fit_vessel(inputs: &FitInputs, cfg: &FitConfig) -> Result<(VesselParams, FitReport)> {
    let start = std::time::Instant::now();
    let mut params = init_params(inputs, cfg)?;
    let mut state = OptState::default();
    let mut stages = Vec::new();
    let enabled = [true, true, cfg.enable_stage3, cfg.enable_stage4];
    for stage_index in 1..=4 {
        if !enabled[stage_index - 1] || cfg.stage(stage_index).iterations == 0 {
            continue;
        }
        let run = run_stage(&params, inputs, cfg, stage_index, &mut state)?;
        stages.push(StageReport {
            stage: stage_index,
            iterations: run.history.len(),
            initial_loss: *run.history.first().unwrap_or(&f64::NAN),
            final_loss: *run.history.last().unwrap_or(&f64::NAN),
        });
        params = run.params;
    }

    // Evaluation of the result: hard rasterization vs the input segmentation,
    // centerline metrics vs the preliminary polyline. The segmentation is
    // treated as a complete reference here even under sparse supervision —
    // the slice mask restricts training, not scoring; callers with truly
    // partial references should score the labeled slices via the masked
    // metric themselves.
    let final_mesh = params.as_generic().build_mesh(cfg.s_mesh)?.to_values();
    let pred = crate::sdf::rasterize_clamped_threads(&final_mesh, inputs.seg.shape, cfg.threads)?;
    let dice = metrics::dice_score(&pred, &inputs.seg)?;
    let fitted_centerline = params.as_generic().sample_centerline(cfg.s_loss)?;
    let chamfer = metrics::chamfer_distance(&fitted_centerline, &inputs.preliminary_centerline)?;
    let hd95 = metrics::hd95(&fitted_centerline, &inputs.preliminary_centerline)?;
    let quality = mesh::mesh_quality(&final_mesh)?;
    let sparse_fraction = inputs.slice_mask.as_ref().map(|m| {
        m.indices.len() as f64 / m.axis_len().max(1) as f64
    });
    let report = FitReport {
        stages,
        dice,
        chamfer,
        hd95,
        mesh_quality: quality,
        wall_time_s: start.elapsed().as_secs_f64(),
        sparse_fraction,
    };
    Ok((params, report))
}
