//! Differentiable conversion of a triangle mesh into a voxel grid.
//!
//! One plane per voxel slice cuts the mesh along the current axis. Cutting a
//! watertight mesh with a plane yields closed polygons: every mesh edge that
//! crosses the plane becomes a polygon vertex, every crossed face contributes
//! the segment between its two edge crossings, and because each edge is
//! shared by exactly two faces those segments chain into cycles. Each
//! in-plane voxel center then receives a signed distance to the polygons
//! (positive inside by even-odd parity) which a sigmoid of temperature `tau`
//! turns into a soft occupancy in (0, 1).
//!
//! Gradients: crossing membership, the nearest-segment choice, parity and
//! projection clamping are decided on plain values and held fixed; the
//! intersection points and the distance to the chosen segment are computed in
//! the generic scalar, so the soft grid stays differentiable in the mesh
//! vertices. Voxels farther than `margin` from a slice's polygons keep an
//! exact constant zero that never touches the tape, which bounds both memory
//! and the pruning error (sigmoid tail below 1e-12 for the derived margin).

use std::collections::HashMap;

use crate::autodiff::Real;
use crate::error::Error;
use crate::grid::SoftVolume;
use crate::mesh::TriangleMesh;
use crate::Result;

/// Slicing axis. Fitting rotates through all three, one per iteration, so no
/// single direction's discretization bias dominates.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Axis {
    X,
    Y,
    Z,
}

impl Axis {
    #[inline]
    pub fn index(self) -> usize {
        match self {
            Axis::X => 0,
            Axis::Y => 1,
            Axis::Z => 2,
        }
    }

    /// Rotation order X -> Y -> Z -> X.
    pub fn next(self) -> Axis {
        match self {
            Axis::X => Axis::Y,
            Axis::Y => Axis::Z,
            Axis::Z => Axis::X,
        }
    }

    /// The two in-plane coordinate indices, in cyclic order.
    #[inline]
    pub fn in_plane(self) -> [usize; 2] {
        match self {
            Axis::X => [1, 2],
            Axis::Y => [2, 0],
            Axis::Z => [0, 1],
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Axis::X => "x",
            Axis::Y => "y",
            Axis::Z => "z",
        }
    }
}

impl std::fmt::Display for Axis {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for Axis {
    type Err = Error;
    fn from_str(s: &str) -> Result<Axis> {
        match s.to_ascii_lowercase().as_str() {
            "x" => Ok(Axis::X),
            "y" => Ok(Axis::Y),
            "z" => Ok(Axis::Z),
            other => Err(Error::InvalidArgument(format!(
                "unknown axis {other:?}, expected x, y or z"
            ))),
        }
    }
}

/// Smallest pruning margin (in voxels) that keeps the discarded sigmoid tail
/// below 1e-12: `sigmoid(-margin / tau) < 1e-12`.
pub fn margin_for_tau(tau: f64) -> usize {
    (tau * 1e12f64.ln()).ceil() as usize
}

/// Vertices exactly on a slice plane are shifted by this amount along the
/// slicing axis for the crossing test only, so membership stays unambiguous.
const ON_PLANE_SHIFT: f64 = 1e-6;

/// Intersection of a mesh with one slice plane: polygon vertices (one per
/// crossed mesh edge), per-face segments, and the closed cycles they chain
/// into, oriented counter-clockwise in the in-plane coordinates.
#[derive(Debug, Clone)]
pub struct SlicePolygons<T> {
    /// In-plane coordinates of each crossing, generic scalar.
    pub points: Vec<[T; 2]>,
    /// The same coordinates as plain values, for selection logic.
    pub primal: Vec<[f64; 2]>,
    /// One segment of point indices per crossed face.
    pub segments: Vec<[u32; 2]>,
    /// Closed loops of point indices, counter-clockwise.
    pub cycles: Vec<Vec<u32>>,
}

impl<T: Real> SlicePolygons<T> {
    pub fn is_empty(&self) -> bool {
        self.segments.is_empty()
    }

    /// Sum of unsigned cycle areas (shoelace on plain values).
    pub fn area(&self) -> f64 {
        self.cycles
            .iter()
            .map(|c| shoelace(&self.primal, c).abs())
            .sum()
    }

    /// In-plane bounding box over all crossing points.
    pub fn bbox2(&self) -> Option<([f64; 2], [f64; 2])> {
        if self.primal.is_empty() {
            return None;
        }
        let mut lo = [f64::INFINITY; 2];
        let mut hi = [f64::NEG_INFINITY; 2];
        for p in &self.primal {
            for d in 0..2 {
                lo[d] = lo[d].min(p[d]);
                hi[d] = hi[d].max(p[d]);
            }
        }
        Some((lo, hi))
    }
}

fn shoelace(primal: &[[f64; 2]], cycle: &[u32]) -> f64 {
    let mut acc = 0.0;
    for i in 0..cycle.len() {
        let a = primal[cycle[i] as usize];
        let b = primal[cycle[(i + 1) % cycle.len()] as usize];
        acc += a[0] * b[1] - b[0] * a[1];
    }
    acc / 2.0
}

/// Cut `mesh` with the plane `axis = coord`.
///
/// Every returned cycle is closed because each mesh edge belongs to exactly
/// two faces; a crossing node of any other degree means the mesh is not a
/// closed manifold and is rejected.
pub fn slice_polygons<T: Real>(
    mesh: &TriangleMesh<T>,
    axis: Axis,
    coord: f64,
) -> Result<SlicePolygons<T>> {
    let a = axis.index();
    let [ui, vi] = axis.in_plane();
    let side = |idx: u32| -> f64 {
        let c = mesh.vertices[idx as usize].0[a].value();
        if c == coord {
            c + ON_PLANE_SHIFT
        } else {
            c
        }
    };

    let mut node_of: HashMap<(u32, u32), u32> = HashMap::new();
    let mut points: Vec<[T; 2]> = Vec::new();
    let mut primal: Vec<[f64; 2]> = Vec::new();
    let mut segments: Vec<[u32; 2]> = Vec::new();

    for (f, face) in mesh.faces.iter().enumerate() {
        let mut crossing: [u32; 2] = [u32::MAX; 2];
        let mut n_crossing = 0usize;
        for e in 0..3 {
            let i0 = face[e];
            let i1 = face[(e + 1) % 3];
            let c0 = side(i0);
            let c1 = side(i1);
            if !((c0 < coord && c1 > coord) || (c0 > coord && c1 < coord)) {
                continue;
            }
            let key = (i0.min(i1), i0.max(i1));
            let id = match node_of.get(&key) {
                Some(&id) => id,
                None => {
                    let v0 = &mesh.vertices[key.0 as usize];
                    let v1 = &mesh.vertices[key.1 as usize];
                    // Interpolation parameter along the edge; the endpoints
                    // straddle the plane strictly, so the division is safe.
                    let ca = v0.0[a];
                    let cb = v1.0[a];
                    let alpha = ((ca - coord) * -1.0) / (cb - ca);
                    let u = v0.0[ui] + (v1.0[ui] - v0.0[ui]) * alpha;
                    let v = v0.0[vi] + (v1.0[vi] - v0.0[vi]) * alpha;
                    let id = points.len() as u32;
                    points.push([u, v]);
                    primal.push([u.value(), v.value()]);
                    node_of.insert(key, id);
                    id
                }
            };
            if n_crossing < 2 {
                crossing[n_crossing] = id;
            }
            n_crossing += 1;
        }
        match n_crossing {
            0 => {}
            2 => segments.push(crossing),
            n => {
                return Err(Error::MalformedSlice {
                    axis: axis.name(),
                    coord,
                    detail: format!("face {f} crosses the plane {n} times"),
                })
            }
        }
    }

    // Chain per-face segments into cycles; each node must connect exactly
    // two segments.
    let n = points.len();
    let mut adj: Vec<[u32; 2]> = vec![[u32::MAX; 2]; n];
    let mut deg = vec![0u8; n];
    for &[s0, s1] in &segments {
        for (x, y) in [(s0, s1), (s1, s0)] {
            if deg[x as usize] >= 2 {
                return Err(Error::MalformedSlice {
                    axis: axis.name(),
                    coord,
                    detail: format!("crossing node {x} touches more than two faces"),
                });
            }
            adj[x as usize][deg[x as usize] as usize] = y;
            deg[x as usize] += 1;
        }
    }
    if let Some(i) = deg.iter().position(|&d| d != 2) {
        return Err(Error::MalformedSlice {
            axis: axis.name(),
            coord,
            detail: format!(
                "crossing node {i} has degree {}, the surface is not closed",
                deg[i]
            ),
        });
    }

    let mut visited = vec![false; n];
    let mut cycles = Vec::new();
    for start in 0..n as u32 {
        if visited[start as usize] {
            continue;
        }
        visited[start as usize] = true;
        let mut cycle = vec![start];
        let mut prev = start;
        let mut cur = adj[start as usize][0];
        while cur != start {
            if visited[cur as usize] {
                return Err(Error::MalformedSlice {
                    axis: axis.name(),
                    coord,
                    detail: format!("cycle walk revisited node {cur}"),
                });
            }
            visited[cur as usize] = true;
            cycle.push(cur);
            let [x, y] = adj[cur as usize];
            let next = if x == prev { y } else { x };
            prev = cur;
            cur = next;
        }
        if shoelace(&primal, &cycle) < 0.0 {
            cycle.reverse();
        }
        cycles.push(cycle);
    }

    Ok(SlicePolygons {
        points,
        primal,
        segments,
        cycles,
    })
}

/// Soft occupancy grid produced by [`soft_voxelize`]. Stored x-fastest like
/// [`crate::grid::VoxelGrid`].
#[derive(Debug, Clone)]
pub struct SoftVoxelization<T> {
    pub shape: [usize; 3],
    pub grid: Vec<T>,
    pub tau: f64,
    pub margin: usize,
    pub axis: Axis,
}

impl<T: Real> SoftVoxelization<T> {
    #[inline]
    pub fn get(&self, i: usize, j: usize, k: usize) -> T {
        self.grid[i + self.shape[0] * (j + self.shape[1] * k)]
    }

    /// Plain float volume of the current values.
    pub fn to_volume(&self) -> SoftVolume {
        SoftVolume {
            shape: self.shape,
            data: self.grid.iter().map(|t| t.value() as f32).collect(),
        }
    }
}

/// Soft-voxelize a watertight mesh onto a grid of `shape`, slicing along
/// `axis`. Voxel values are `sigmoid(d / tau)` with `d` the distance to the
/// slice polygons, positive inside; voxels farther than `margin` in-plane
/// voxels from a slice's polygons stay exactly zero.
pub fn soft_voxelize<T: Real>(
    mesh: &TriangleMesh<T>,
    shape: [usize; 3],
    tau: f64,
    margin: usize,
    axis: Axis,
) -> Result<SoftVoxelization<T>> {
    if tau <= 0.0 || !tau.is_finite() {
        return Err(Error::InvalidArgument(format!(
            "tau must be positive and finite, got {tau}"
        )));
    }
    if shape.iter().any(|&d| d == 0) {
        return Err(Error::InvalidArgument(format!(
            "grid shape {shape:?} has an empty dimension"
        )));
    }
    let mut grid = vec![T::constant(0.0); shape[0] * shape[1] * shape[2]];
    let a = axis.index();
    let (lo, hi) = mesh.bbox();
    for w in 0..shape[a] {
        let coord = w as f64 + 0.5;
        if coord < lo[a] || coord > hi[a] {
            continue;
        }
        let slice = slice_polygons(mesh, axis, coord)?;
        if slice.is_empty() {
            continue;
        }
        fill_slice(&mut grid, shape, axis, w, &slice, tau, margin);
    }
    Ok(SoftVoxelization {
        shape,
        grid,
        tau,
        margin,
        axis,
    })
}

/// Write soft values for one slice, restricted to the polygon bounding box
/// expanded by `margin`.
fn fill_slice<T: Real>(
    grid: &mut [T],
    shape: [usize; 3],
    axis: Axis,
    w: usize,
    slice: &SlicePolygons<T>,
    tau: f64,
    margin: usize,
) {
    let [ui, vi] = axis.in_plane();
    let (lo, hi) = match slice.bbox2() {
        Some(b) => b,
        None => return,
    };
    let m = margin as f64;
    let u0 = (lo[0] - m).floor().max(0.0) as usize;
    let v0 = (lo[1] - m).floor().max(0.0) as usize;
    let u1 = ((hi[0] + m).ceil() as isize).min(shape[ui] as isize - 1);
    let v1 = ((hi[1] + m).ceil() as isize).min(shape[vi] as isize - 1);
    if u1 < u0 as isize || v1 < v0 as isize {
        return;
    }
    let inv_tau = 1.0 / tau;
    for vv in v0..=v1 as usize {
        for uu in u0..=u1 as usize {
            let q = [uu as f64 + 0.5, vv as f64 + 0.5];
            let (_, best) = nearest_segment(slice, q);
            let d = segment_distance(slice, best, q);
            let signed = if point_in_polygons(slice, q) {
                d
            } else {
                d * -1.0
            };
            let val = (signed * inv_tau).sigmoid();
            let mut c = [0usize; 3];
            c[axis.index()] = w;
            c[ui] = uu;
            c[vi] = vv;
            grid[c[0] + shape[0] * (c[1] + shape[1] * c[2])] = val;
        }
    }
}

/// Index and distance of the segment nearest to `q`, on plain values. Ties
/// resolve to the lowest index so results are deterministic.
fn nearest_segment<T: Real>(slice: &SlicePolygons<T>, q: [f64; 2]) -> (f64, usize) {
    let mut best = (f64::INFINITY, 0usize);
    for (i, &[ia, ib]) in slice.segments.iter().enumerate() {
        let a = slice.primal[ia as usize];
        let b = slice.primal[ib as usize];
        let d2 = point_segment_dist2(a, b, q);
        if d2 < best.0 {
            best = (d2, i);
        }
    }
    (best.0.sqrt(), best.1)
}

fn point_segment_dist2(a: [f64; 2], b: [f64; 2], q: [f64; 2]) -> f64 {
    let dx = b[0] - a[0];
    let dy = b[1] - a[1];
    let len2 = dx * dx + dy * dy;
    let t = if len2 <= 0.0 {
        0.0
    } else {
        (((q[0] - a[0]) * dx + (q[1] - a[1]) * dy) / len2).clamp(0.0, 1.0)
    };
    let ex = a[0] + t * dx - q[0];
    let ey = a[1] + t * dy - q[1];
    ex * ex + ey * ey
}

/// Distance from `q` to segment `seg` in the generic scalar. The projection
/// clamp is decided on plain values; the interior projection itself runs in
/// `T` so the distance stays differentiable in both endpoints.
fn segment_distance<T: Real>(slice: &SlicePolygons<T>, seg: usize, q: [f64; 2]) -> T {
    let [ia, ib] = slice.segments[seg];
    let a = &slice.points[ia as usize];
    let b = &slice.points[ib as usize];
    let pa = slice.primal[ia as usize];
    let pb = slice.primal[ib as usize];
    let dx = pb[0] - pa[0];
    let dy = pb[1] - pa[1];
    let len2 = dx * dx + dy * dy;
    let point_dist = |p: &[T; 2]| -> T {
        let ex = p[0] - q[0];
        let ey = p[1] - q[1];
        (ex * ex + ey * ey).sqrt()
    };
    if len2 <= 1e-30 {
        return point_dist(a);
    }
    let t_raw = ((q[0] - pa[0]) * dx + (q[1] - pa[1]) * dy) / len2;
    if t_raw <= 0.0 {
        point_dist(a)
    } else if t_raw >= 1.0 {
        point_dist(b)
    } else {
        let dxt = b[0] - a[0];
        let dyt = b[1] - a[1];
        let qax = (a[0] - q[0]) * -1.0;
        let qay = (a[1] - q[1]) * -1.0;
        let t = (qax * dxt + qay * dyt) / (dxt * dxt + dyt * dyt);
        let ex = a[0] + dxt * t - q[0];
        let ey = a[1] + dyt * t - q[1];
        (ex * ex + ey * ey).sqrt()
    }
}

/// Even-odd parity of `q` against all cycles (crossing-number test).
fn point_in_polygons<T: Real>(slice: &SlicePolygons<T>, q: [f64; 2]) -> bool {
    let mut inside = false;
    for cycle in &slice.cycles {
        let n = cycle.len();
        for i in 0..n {
            let p0 = slice.primal[cycle[i] as usize];
            let p1 = slice.primal[cycle[(i + 1) % n] as usize];
            if (p0[1] > q[1]) != (p1[1] > q[1]) {
                let x_int = p0[0] + (q[1] - p0[1]) / (p1[1] - p0[1]) * (p1[0] - p0[0]);
                if q[0] < x_int {
                    inside = !inside;
                }
            }
        }
    }
    inside
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::autodiff::{sigmoid_f64, Tape, Var};
    use crate::vec3::Vec3;

    /// Axis-aligned box as twelve outward-oriented triangles.
    fn box_mesh(lo: [f64; 3], hi: [f64; 3]) -> TriangleMesh<f64> {
        let v = |mask: usize| {
            Vec3([
                if mask & 1 != 0 { hi[0] } else { lo[0] },
                if mask & 2 != 0 { hi[1] } else { lo[1] },
                if mask & 4 != 0 { hi[2] } else { lo[2] },
            ])
        };
        let vertices: Vec<Vec3<f64>> = (0..8).map(v).collect();
        let quads: [[u32; 4]; 6] = [
            [0, 2, 3, 1], // z = lo
            [4, 5, 7, 6], // z = hi
            [0, 1, 5, 4], // y = lo
            [2, 6, 7, 3], // y = hi
            [0, 4, 6, 2], // x = lo
            [1, 3, 7, 5], // x = hi
        ];
        let mut faces = Vec::new();
        for q in quads {
            faces.push([q[0], q[1], q[2]]);
            faces.push([q[0], q[2], q[3]]);
        }
        TriangleMesh { vertices, faces }
    }

    #[test]
    fn axis_rotation_and_parsing() {
        assert_eq!(Axis::X.next(), Axis::Y);
        assert_eq!(Axis::Y.next(), Axis::Z);
        assert_eq!(Axis::Z.next(), Axis::X);
        assert_eq!("Y".parse::<Axis>().unwrap(), Axis::Y);
        assert!("w".parse::<Axis>().is_err());
    }

    #[test]
    fn margin_keeps_pruned_tail_negligible() {
        assert_eq!(margin_for_tau(0.1), 3);
        assert_eq!(margin_for_tau(0.5), 14);
        for tau in [0.05, 0.1, 0.3, 0.5, 1.0] {
            let m = margin_for_tau(tau) as f64;
            assert!(sigmoid_f64(-m / tau) < 1e-12, "tau = {tau}");
        }
    }

    #[test]
    fn cube_slice_is_a_ccw_square() {
        let mesh = box_mesh([1.0, 1.0, 1.0], [3.0, 3.0, 3.0]);
        let slice = slice_polygons(&mesh, Axis::Z, 1.5).unwrap();
        assert_eq!(slice.cycles.len(), 1);
        assert!((slice.area() - 4.0).abs() < 1e-12);
        // CCW: positive shoelace after normalization.
        assert!(shoelace(&slice.primal, &slice.cycles[0]) > 0.0);
        // A plane outside the box yields nothing.
        let empty = slice_polygons(&mesh, Axis::Z, 7.5).unwrap();
        assert!(empty.is_empty());
    }

    #[test]
    fn cube_soft_grid_matches_interior_distances() {
        let mesh = box_mesh([1.0, 1.0, 1.0], [3.0, 3.0, 3.0]);
        let tau = 0.1;
        let soft = soft_voxelize(&mesh, [8, 8, 8], tau, 3, Axis::Z).unwrap();
        // Centers (1.5, 1.5, 1.5) .. (2.5, 2.5, 2.5) are 0.5 inside.
        for (i, j, k) in [(1, 1, 1), (2, 2, 2), (1, 2, 1), (2, 1, 2)] {
            let v = soft.get(i, j, k);
            assert!((v - sigmoid_f64(0.5 / tau)).abs() < 1e-12);
        }
        // One voxel outside the face: 0.5 outside.
        let out = soft.get(3, 1, 1);
        assert!((out - sigmoid_f64(-0.5 / tau)).abs() < 1e-12);
        // Inside the pruning box but far from the square: tiny, not zero.
        let fringe = soft.get(5, 5, 1);
        assert!(fringe > 0.0 && fringe < 1e-12);
        // Beyond bbox + margin in-plane, and in an uncut slice: exact zeros.
        assert_eq!(soft.get(7, 7, 1), 0.0);
        assert_eq!(soft.get(1, 1, 7), 0.0);
    }

    #[test]
    fn hard_threshold_counts_cube_volume() {
        let mesh = box_mesh([1.0, 1.0, 1.0], [3.0, 3.0, 3.0]);
        for axis in [Axis::X, Axis::Y, Axis::Z] {
            let soft = soft_voxelize(&mesh, [6, 6, 6], 0.1, 3, axis).unwrap();
            let hard = soft.to_volume().threshold(0.5);
            assert_eq!(hard.count_foreground(), 8, "axis {axis}");
        }
    }

    #[test]
    fn vertices_on_plane_are_shifted_consistently() {
        // Bottom face exactly on the z = 1.5 plane: shifted past it, so the
        // slice there is empty and the first occupied row starts above.
        let mesh = box_mesh([1.0, 1.0, 1.5], [3.0, 3.0, 3.5]);
        let on_plane = slice_polygons(&mesh, Axis::Z, 1.5).unwrap();
        assert!(on_plane.is_empty());
        let above = slice_polygons(&mesh, Axis::Z, 2.5).unwrap();
        assert_eq!(above.cycles.len(), 1);
        assert!((above.area() - 4.0).abs() < 1e-12);
    }

    #[test]
    fn open_mesh_is_rejected() {
        let mut mesh = box_mesh([1.0, 1.0, 1.0], [3.0, 3.0, 3.0]);
        mesh.faces.pop();
        let err = slice_polygons(&mesh, Axis::Z, 2.5);
        assert!(matches!(err, Err(Error::MalformedSlice { .. })));
    }

    #[test]
    fn disjoint_and_nested_cycles_obey_parity() {
        // Outer box with a smaller box inside: the slice has two nested
        // cycles, and even-odd parity makes the gap inside, the core outside.
        let mut mesh = box_mesh([1.0, 1.0, 1.0], [8.0, 8.0, 8.0]);
        let inner = box_mesh([3.0, 3.0, 3.0], [6.0, 6.0, 6.0]);
        let off = mesh.vertices.len() as u32;
        mesh.vertices.extend(inner.vertices);
        mesh.faces
            .extend(inner.faces.iter().map(|f| [f[0] + off, f[1] + off, f[2] + off]));
        let slice = slice_polygons(&mesh, Axis::Z, 4.5).unwrap();
        assert_eq!(slice.cycles.len(), 2);
        assert!(point_in_polygons(&slice, [2.0, 2.0])); // between the shells
        assert!(!point_in_polygons(&slice, [4.5, 4.5])); // inside both
        assert!(!point_in_polygons(&slice, [0.5, 0.5])); // outside both
    }

    #[test]
    fn tube_slice_area_approaches_circle() {
        use crate::frames::CrossSectionSet;
        use crate::mesh::build_vessel_mesh;
        let s = 16;
        let p = 32;
        let r = 5.0;
        let centers: Vec<Vec3<f64>> = (0..s)
            .map(|i| Vec3([16.0, 16.0, 4.0 + 24.0 * i as f64 / (s - 1) as f64]))
            .collect();
        let cs = CrossSectionSet::build(centers, vec![r; s], vec![], p).unwrap();
        let mesh = build_vessel_mesh(&cs).unwrap();
        let slice = slice_polygons(&mesh, Axis::Z, 16.5).unwrap();
        assert_eq!(slice.cycles.len(), 1);
        let circle = std::f64::consts::PI * r * r;
        let rel = (slice.area() - circle).abs() / circle;
        assert!(rel < 0.03, "polygon area off by {rel}");
    }

    #[test]
    fn soft_grid_is_deterministic() {
        let mesh = box_mesh([1.2, 1.7, 1.3], [4.8, 5.1, 4.6]);
        let a = soft_voxelize(&mesh, [7, 7, 7], 0.1, 3, Axis::Y).unwrap();
        let b = soft_voxelize(&mesh, [7, 7, 7], 0.1, 3, Axis::Y).unwrap();
        for (x, y) in a.grid.iter().zip(&b.grid) {
            assert_eq!(x.to_bits(), y.to_bits());
        }
    }

    #[test]
    fn gradient_matches_finite_differences_on_cube_sum() {
        // Sum of the soft grid as a function of the cube's upper z plane.
        let occupied = |z_hi: f64| -> f64 {
            let mesh = box_mesh([1.3, 1.3, 1.3], [4.6, 4.6, z_hi]);
            let soft = soft_voxelize(&mesh, [6, 6, 6], 0.1, 3, Axis::X).unwrap();
            soft.grid.iter().sum()
        };
        let z0 = 4.2;
        let tape = Tape::new();
        let z = tape.leaf(z0);
        let lo = [1.3, 1.3, 1.3];
        let vertices: Vec<Vec3<Var>> = (0..8)
            .map(|mask: usize| {
                Vec3([
                    Var::constant(if mask & 1 != 0 { 4.6 } else { lo[0] }),
                    Var::constant(if mask & 2 != 0 { 4.6 } else { lo[1] }),
                    if mask & 4 != 0 { z } else { Var::constant(lo[2]) },
                ])
            })
            .collect();
        let template = box_mesh([0.0; 3], [1.0; 3]);
        let mesh = TriangleMesh {
            vertices,
            faces: template.faces,
        };
        let soft = soft_voxelize(&mesh, [6, 6, 6], 0.1, 3, Axis::X).unwrap();
        let mut total = Var::constant(0.0);
        for &v in &soft.grid {
            total = total + v;
        }
        let adj = tape.backward(total);
        let analytic = adj.wrt(z);
        let h = 1e-5;
        let fd = (occupied(z0 + h) - occupied(z0 - h)) / (2.0 * h);
        assert!(
            (analytic - fd).abs() <= 1e-6 * fd.abs().max(1.0),
            "analytic {analytic} vs fd {fd}"
        );
    }
}
