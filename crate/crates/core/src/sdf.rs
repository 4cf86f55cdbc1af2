//! Exact signed distance and exact rasterization of a watertight mesh.
//!
//! This is the reference geometry the differentiable voxelizer is checked
//! against: unsigned distance as the minimum over point-triangle distances,
//! sign by counting crossings of an axis-aligned ray (odd parity = inside,
//! negative distance). Ray hits that graze an edge, vertex or coplanar face
//! are ambiguous, so those queries retry with a deterministically perturbed
//! origin a bounded number of times before giving up.
//!
//! Queries run against a uniform (y, z) binning of the faces so full-grid
//! rasterization stays fast; `brute_force` disables the binning and must
//! produce identical results.

use crate::error::Error;
use crate::grid::VoxelGrid;
use crate::mesh::TriangleMesh;
use crate::vec3::Vec3;
use crate::Result;

/// Barycentric coordinates closer to an edge than this are treated as
/// ambiguous ray hits.
const BARY_EPS: f64 = 1e-9;
/// Ray-origin perturbation step for ambiguous hits.
const RETRY_SHIFT: f64 = 1e-7;
const MAX_RETRIES: usize = 8;

/// Exact signed-distance queries against one mesh.
pub struct ExactSdf<'m> {
    mesh: &'m TriangleMesh<f64>,
    bbox: ([f64; 3], [f64; 3]),
    bins: YzBins,
    /// Answer every query by scanning all faces; for verification only.
    pub brute_force: bool,
}

/// Uniform unit-cell binning of face bounding boxes in the (y, z) plane,
/// the two coordinates a +x ray cannot change.
struct YzBins {
    min: [f64; 2],
    dims: [usize; 2],
    cells: Vec<Vec<u32>>,
}

impl YzBins {
    fn build(mesh: &TriangleMesh<f64>, bbox: &([f64; 3], [f64; 3])) -> YzBins {
        let min = [bbox.0[1], bbox.0[2]];
        let dims = [
            ((bbox.1[1] - min[0]).ceil() as usize).max(1),
            ((bbox.1[2] - min[1]).ceil() as usize).max(1),
        ];
        let mut cells = vec![Vec::new(); dims[0] * dims[1]];
        for (f, face) in mesh.faces.iter().enumerate() {
            let mut lo = [f64::INFINITY; 2];
            let mut hi = [f64::NEG_INFINITY; 2];
            for &vi in face {
                let v = mesh.vertices[vi as usize];
                for (d, coord) in [v.y(), v.z()].into_iter().enumerate() {
                    lo[d] = lo[d].min(coord);
                    hi[d] = hi[d].max(coord);
                }
            }
            let c0 = [
                ((lo[0] - min[0]).floor().max(0.0) as usize).min(dims[0] - 1),
                ((lo[1] - min[1]).floor().max(0.0) as usize).min(dims[1] - 1),
            ];
            let c1 = [
                ((hi[0] - min[0]).floor().max(0.0) as usize).min(dims[0] - 1),
                ((hi[1] - min[1]).floor().max(0.0) as usize).min(dims[1] - 1),
            ];
            for cy in c0[0]..=c1[0] {
                for cz in c0[1]..=c1[1] {
                    cells[cy + dims[0] * cz].push(f as u32);
                }
            }
        }
        YzBins { min, dims, cells }
    }

    /// Faces whose (y, z) footprint can contain the query; `None` when the
    /// point is outside the binned area entirely.
    fn candidates(&self, y: f64, z: f64) -> Option<&[u32]> {
        let cy = (y - self.min[0]).floor();
        let cz = (z - self.min[1]).floor();
        if cy < 0.0 || cz < 0.0 {
            return None;
        }
        let (cy, cz) = (cy as usize, cz as usize);
        if cy >= self.dims[0] || cz >= self.dims[1] {
            return None;
        }
        Some(&self.cells[cy + self.dims[0] * cz])
    }
}

impl<'m> ExactSdf<'m> {
    pub fn new(mesh: &'m TriangleMesh<f64>) -> Result<ExactSdf<'m>> {
        if mesh.faces.is_empty() {
            return Err(Error::InvalidArgument("mesh has no faces".into()));
        }
        for (i, v) in mesh.vertices.iter().enumerate() {
            if !v.is_finite() {
                return Err(Error::InvalidArgument(format!(
                    "vertex {i} is not finite"
                )));
            }
        }
        let bbox = mesh.bbox();
        let bins = YzBins::build(mesh, &bbox);
        Ok(ExactSdf {
            mesh,
            bbox,
            bins,
            brute_force: false,
        })
    }

    fn triangle(&self, f: usize) -> [Vec3<f64>; 3] {
        let [a, b, c] = self.mesh.faces[f];
        [
            self.mesh.vertices[a as usize],
            self.mesh.vertices[b as usize],
            self.mesh.vertices[c as usize],
        ]
    }

    /// Unsigned distance to the surface.
    pub fn distance_unsigned(&self, p: Vec3<f64>) -> f64 {
        let mut best = f64::INFINITY;
        for f in 0..self.mesh.faces.len() {
            let [a, b, c] = self.triangle(f);
            // Cheap lower bound from the face bounding box.
            let mut lb = 0.0;
            for d in 0..3 {
                let lo = a.0[d].min(b.0[d]).min(c.0[d]);
                let hi = a.0[d].max(b.0[d]).max(c.0[d]);
                let e = (lo - p.0[d]).max(p.0[d] - hi).max(0.0);
                lb += e * e;
            }
            if lb >= best {
                continue;
            }
            best = best.min(point_triangle_dist2(p, a, b, c));
        }
        best.sqrt()
    }

    /// Count parity of +x ray crossings from `origin`; `None` when the ray
    /// grazes an edge, vertex or coplanar face and the answer is ambiguous.
    fn ray_parity(&self, origin: Vec3<f64>) -> Option<bool> {
        let all: Vec<u32>;
        let candidates: &[u32] = if self.brute_force {
            all = (0..self.mesh.faces.len() as u32).collect();
            &all
        } else {
            match self.bins.candidates(origin.y(), origin.z()) {
                Some(c) => c,
                None => return Some(false),
            }
        };
        let mut crossings = 0usize;
        for &f in candidates {
            let [a, b, c] = self.triangle(f as usize);
            // Barycentric coordinates of the (y, z) projection.
            let det = (b.y() - a.y()) * (c.z() - a.z()) - (c.y() - a.y()) * (b.z() - a.z());
            let spread = (b.y() - a.y())
                .abs()
                .max((c.y() - a.y()).abs())
                .max((b.z() - a.z()).abs())
                .max((c.z() - a.z()).abs());
            if det.abs() <= BARY_EPS * (1.0 + spread * spread) {
                // The face is edge-on to the ray: its projection is a
                // segment. Only a ray passing through that segment is
                // ambiguous; everything else misses the zero-thickness face.
                if projected_edges_near(&[a, b, c], origin.y(), origin.z(), BARY_EPS) {
                    return None;
                }
                continue;
            }
            let wb = ((origin.y() - a.y()) * (c.z() - a.z())
                - (c.y() - a.y()) * (origin.z() - a.z()))
                / det;
            let wc = ((b.y() - a.y()) * (origin.z() - a.z())
                - (origin.y() - a.y()) * (b.z() - a.z()))
                / det;
            let wa = 1.0 - wb - wc;
            let min_w = wa.min(wb).min(wc);
            if min_w < -BARY_EPS {
                continue; // clean miss
            }
            if min_w <= BARY_EPS {
                return None; // grazes an edge or vertex
            }
            let x_hit = wa * a.x() + wb * b.x() + wc * c.x();
            if (x_hit - origin.x()).abs() <= BARY_EPS {
                return None; // origin sits on the surface
            }
            if x_hit > origin.x() {
                crossings += 1;
            }
        }
        Some(crossings % 2 == 1)
    }

    /// Whether `p` is inside the solid, retrying ambiguous rays with
    /// deterministic origin shifts.
    pub fn is_inside(&self, p: Vec3<f64>) -> Result<bool> {
        if (0..3).any(|d| p.0[d] < self.bbox.0[d] || p.0[d] > self.bbox.1[d]) {
            return Ok(false);
        }
        for k in 0..MAX_RETRIES {
            let s = k as f64 * RETRY_SHIFT;
            let origin = p + Vec3([0.53 * s, s, 1.71 * s]);
            if let Some(inside) = self.ray_parity(origin) {
                return Ok(inside);
            }
        }
        Err(Error::NumericFailure {
            stage: "inside test",
            detail: format!("ray parity stayed ambiguous after {MAX_RETRIES} shifts at {:?}", p.0),
        })
    }

    /// Signed distance, positive inside (so a sigmoid of distance over
    /// temperature saturates to 1 in the interior).
    pub fn signed(&self, p: Vec3<f64>) -> Result<f64> {
        let d = self.distance_unsigned(p);
        Ok(if self.is_inside(p)? { d } else { -d })
    }
}

/// Whether `(y, z)` lies within `tol` of any projected triangle edge.
fn projected_edges_near(tri: &[Vec3<f64>; 3], y: f64, z: f64, tol: f64) -> bool {
    let pts = [
        [tri[0].y(), tri[0].z()],
        [tri[1].y(), tri[1].z()],
        [tri[2].y(), tri[2].z()],
    ];
    let tol2 = tol * tol;
    for e in 0..3 {
        let a = pts[e];
        let b = pts[(e + 1) % 3];
        let dx = b[0] - a[0];
        let dy = b[1] - a[1];
        let l2 = dx * dx + dy * dy;
        let t = if l2 > 0.0 {
            (((y - a[0]) * dx + (z - a[1]) * dy) / l2).clamp(0.0, 1.0)
        } else {
            0.0
        };
        let ex = a[0] + t * dx - y;
        let ey = a[1] + t * dy - z;
        if ex * ex + ey * ey <= tol2 {
            return true;
        }
    }
    false
}

/// Squared distance from `p` to triangle `abc` (closest-point region walk).
pub fn point_triangle_dist2(p: Vec3<f64>, a: Vec3<f64>, b: Vec3<f64>, c: Vec3<f64>) -> f64 {
    let ab = b - a;
    let ac = c - a;
    let ap = p - a;
    let d1 = ab.dot(ap);
    let d2 = ac.dot(ap);
    if d1 <= 0.0 && d2 <= 0.0 {
        return ap.norm_sq(); // vertex a
    }
    let bp = p - b;
    let d3 = ab.dot(bp);
    let d4 = ac.dot(bp);
    if d3 >= 0.0 && d4 <= d3 {
        return bp.norm_sq(); // vertex b
    }
    let vc = d1 * d4 - d3 * d2;
    if vc <= 0.0 && d1 >= 0.0 && d3 <= 0.0 {
        let denom = d1 - d3;
        if denom > 0.0 {
            let v = d1 / denom;
            return (ap - ab.scale(v)).norm_sq(); // edge ab
        }
    }
    let cp = p - c;
    let d5 = ab.dot(cp);
    let d6 = ac.dot(cp);
    if d6 >= 0.0 && d5 <= d6 {
        return cp.norm_sq(); // vertex c
    }
    let vb = d5 * d2 - d1 * d6;
    if vb <= 0.0 && d2 >= 0.0 && d6 <= 0.0 {
        let denom = d2 - d6;
        if denom > 0.0 {
            let w = d2 / denom;
            return (ap - ac.scale(w)).norm_sq(); // edge ac
        }
    }
    let va = d3 * d6 - d5 * d4;
    if va <= 0.0 && (d4 - d3) >= 0.0 && (d5 - d6) >= 0.0 {
        let denom = (d4 - d3) + (d5 - d6);
        if denom > 0.0 {
            let w = (d4 - d3) / denom;
            return (bp - (c - b).scale(w)).norm_sq(); // edge bc
        }
    }
    let denom = va + vb + vc;
    if denom > 0.0 {
        let inv = 1.0 / denom;
        let v = vb * inv;
        let w = vc * inv;
        let closest = a + ab.scale(v) + ac.scale(w);
        return (p - closest).norm_sq(); // interior
    }
    // Degenerate (collinear) triangle: fall back to the best edge.
    let e = |x: Vec3<f64>, y: Vec3<f64>| -> f64 {
        let d = y - x;
        let l2 = d.norm_sq();
        let t = if l2 > 0.0 {
            ((p - x).dot(d) / l2).clamp(0.0, 1.0)
        } else {
            0.0
        };
        (p - (x + d.scale(t))).norm_sq()
    };
    e(a, b).min(e(a, c)).min(e(b, c))
}

/// Exact occupancy: voxel centers strictly inside the mesh. Errors when the
/// mesh does not fit in the grid.
pub fn rasterize_exact(mesh: &TriangleMesh<f64>, shape: [usize; 3]) -> Result<VoxelGrid> {
    rasterize_exact_threads(mesh, shape, 1)
}

/// [`rasterize_exact`] with voxel rows split over `threads` OS threads.
/// Every voxel is still decided independently, so the output is identical
/// for any thread count.
pub fn rasterize_exact_threads(
    mesh: &TriangleMesh<f64>,
    shape: [usize; 3],
    threads: usize,
) -> Result<VoxelGrid> {
    let (lo, hi) = mesh.bbox();
    for d in 0..3 {
        if lo[d] < 0.0 || hi[d] > shape[d] as f64 {
            return Err(Error::OutOfBounds(format!(
                "mesh spans [{:?}, {:?}] which exceeds the grid {:?}",
                lo, hi, shape
            )));
        }
    }
    rasterize_region(mesh, shape, threads)
}

/// Exact occupancy of whatever part of the mesh overlaps the grid; geometry
/// outside is cut off instead of being an error.
pub fn rasterize_clamped(mesh: &TriangleMesh<f64>, shape: [usize; 3]) -> Result<VoxelGrid> {
    rasterize_region(mesh, shape, 1)
}

/// [`rasterize_clamped`] with voxel rows split over `threads` OS threads.
/// Voxels are decided independently, so the output is identical for any
/// thread count.
pub fn rasterize_clamped_threads(
    mesh: &TriangleMesh<f64>,
    shape: [usize; 3],
    threads: usize,
) -> Result<VoxelGrid> {
    rasterize_region(mesh, shape, threads)
}

fn rasterize_region(
    mesh: &TriangleMesh<f64>,
    shape: [usize; 3],
    threads: usize,
) -> Result<VoxelGrid> {
    let sdf = ExactSdf::new(mesh)?;
    let mut grid = VoxelGrid::zeros(shape);
    let nx = shape[0];
    let ny = shape[1];
    let fill_rows = |rows: &mut [u8], k_range: std::ops::Range<usize>| -> Result<()> {
        let mut it = rows.iter_mut();
        for k in k_range {
            for j in 0..ny {
                for i in 0..nx {
                    let c = VoxelGrid::center(i, j, k);
                    let inside = sdf.is_inside(Vec3(c))?;
                    *it.next().unwrap() = inside as u8;
                }
            }
        }
        Ok(())
    };
    let threads = threads.max(1).min(shape[2].max(1));
    if threads <= 1 {
        fill_rows(&mut grid.data, 0..shape[2])?;
        return Ok(grid);
    }
    let per = shape[2].div_ceil(threads);
    let chunks: Vec<&mut [u8]> = grid.data.chunks_mut(per * nx * ny).collect();
    let results: Vec<Result<()>> = std::thread::scope(|scope| {
        let mut handles = Vec::new();
        for (t, chunk) in chunks.into_iter().enumerate() {
            let k0 = t * per;
            let k1 = (k0 + per).min(shape[2]);
            let fill = &fill_rows;
            handles.push(scope.spawn(move || fill(chunk, k0..k1)));
        }
        handles.into_iter().map(|h| h.join().unwrap()).collect()
    });
    for r in results {
        r?;
    }
    Ok(grid)
}
