//! Watertight triangle mesh built from cross-section rings.
//!
//! `S` rings of `P` points plus two cap-center vertices give `P*S + 2`
//! vertices and `2*P*S` faces: each side quad between consecutive rings is
//! split along the fixed diagonal `(n, k) -> (n+1, k+1)`, and each cap is a
//! fan around a vertex placed exactly at the first/last centerline sample.
//! All faces wind counter-clockwise seen from outside, so the signed volume
//! of a valid tube is positive.

use crate::autodiff::Real;
use crate::error::Error;
use crate::frames::CrossSectionSet;
use crate::vec3::Vec3;
use crate::Result;
use serde::Serialize;
use std::collections::HashMap;

#[derive(Debug, Clone)]
pub struct TriangleMesh<T> {
    pub vertices: Vec<Vec3<T>>,
    pub faces: Vec<[u32; 3]>,
}

impl<T: Real> TriangleMesh<T> {
    pub fn n_vertices(&self) -> usize {
        self.vertices.len()
    }

    pub fn n_faces(&self) -> usize {
        self.faces.len()
    }

    /// Axis-aligned bounding box of the primal vertex positions.
    pub fn bbox(&self) -> ([f64; 3], [f64; 3]) {
        let mut lo = [f64::INFINITY; 3];
        let mut hi = [f64::NEG_INFINITY; 3];
        for v in &self.vertices {
            let p = v.values();
            for d in 0..3 {
                lo[d] = lo[d].min(p[d]);
                hi[d] = hi[d].max(p[d]);
            }
        }
        (lo, hi)
    }

    /// Plain-`f64` copy of the vertex positions (faces shared).
    pub fn to_values(&self) -> TriangleMesh<f64> {
        TriangleMesh {
            vertices: self.vertices.iter().map(|v| Vec3(v.values())).collect(),
            faces: self.faces.clone(),
        }
    }
}

/// Build the closed tube mesh for a cross-section set.
pub fn build_vessel_mesh<T: Real>(cs: &CrossSectionSet<T>) -> Result<TriangleMesh<T>> {
    let s = cs.n_sections();
    let p = cs.p;
    if s < 2 {
        return Err(Error::InvalidArgument(format!(
            "need at least 2 sections to build a tube, got {s}"
        )));
    }
    let mut vertices = cs.ring_points();
    let first_cap = vertices.len() as u32;
    vertices.push(cs.centers[0]);
    let last_cap = vertices.len() as u32;
    vertices.push(cs.centers[s - 1]);

    let ring = |n: usize, k: usize| (n * p + (k % p)) as u32;
    let mut faces = Vec::with_capacity(2 * p * s);
    for n in 0..s - 1 {
        for k in 0..p {
            // Quad split along the (n, k) -> (n+1, k+1) diagonal.
            faces.push([ring(n, k), ring(n + 1, k + 1), ring(n + 1, k)]);
            faces.push([ring(n, k), ring(n, k + 1), ring(n + 1, k + 1)]);
        }
    }
    for k in 0..p {
        faces.push([first_cap, ring(0, k + 1), ring(0, k)]);
        faces.push([last_cap, ring(s - 1, k), ring(s - 1, k + 1)]);
    }
    debug_assert_eq!(vertices.len(), p * s + 2);
    debug_assert_eq!(faces.len(), 2 * p * s);
    Ok(TriangleMesh { vertices, faces })
}

/// Check that every undirected edge is shared by exactly two faces with
/// opposite directed orientation.
pub fn validate_watertight<T: Real>(mesh: &TriangleMesh<T>) -> Result<()> {
    // Count directed edges; a closed orientable surface uses each directed
    // edge exactly once and its reverse exactly once.
    let mut directed: HashMap<(u32, u32), u32> = HashMap::new();
    for (fi, f) in mesh.faces.iter().enumerate() {
        for e in 0..3 {
            let a = f[e];
            let b = f[(e + 1) % 3];
            if a == b {
                return Err(Error::Topology(format!(
                    "face {fi} repeats vertex {a}"
                )));
            }
            *directed.entry((a, b)).or_insert(0) += 1;
        }
    }
    let mut bad = Vec::new();
    for (&(a, b), &count) in directed.iter() {
        let reverse = directed.get(&(b, a)).copied().unwrap_or(0);
        if count != 1 || reverse != 1 {
            bad.push((a.min(b), a.max(b), count + reverse));
        }
    }
    if !bad.is_empty() {
        bad.sort_unstable();
        bad.dedup();
        let preview: Vec<String> = bad
            .iter()
            .take(8)
            .map(|(a, b, n)| format!("({a},{b})x{n}"))
            .collect();
        return Err(Error::Topology(format!(
            "{} edges violate the two-faces-opposite-orientation rule: {}",
            bad.len(),
            preview.join(" ")
        )));
    }
    Ok(())
}

/// `V - E + F`; 2 for anything sphere-like.
pub fn euler_characteristic<T: Real>(mesh: &TriangleMesh<T>) -> i64 {
    let mut edges: Vec<(u32, u32)> = Vec::with_capacity(mesh.faces.len() * 3);
    for f in &mesh.faces {
        for e in 0..3 {
            let a = f[e];
            let b = f[(e + 1) % 3];
            edges.push((a.min(b), a.max(b)));
        }
    }
    edges.sort_unstable();
    edges.dedup();
    mesh.vertices.len() as i64 - edges.len() as i64 + mesh.faces.len() as i64
}

/// Enclosed volume via the divergence theorem; positive for outward winding.
pub fn signed_volume(mesh: &TriangleMesh<f64>) -> f64 {
    let mut six_v = 0.0;
    for f in &mesh.faces {
        let a = mesh.vertices[f[0] as usize];
        let b = mesh.vertices[f[1] as usize];
        let c = mesh.vertices[f[2] as usize];
        six_v += a.dot(b.cross(c));
    }
    six_v / 6.0
}

/// Element-quality summary of a mesh.
#[derive(Debug, Clone, Serialize)]
pub struct MeshQuality {
    pub n_vertices: usize,
    pub n_faces: usize,
    /// Smallest interior angle over all faces, degrees.
    pub min_interior_angle_deg: f64,
    /// Worst `longest_edge * perimeter / (4*sqrt(3) * area)`; 1 when equilateral.
    pub max_aspect_ratio: f64,
}

/// Per-face angles and aspect ratios, reduced to the worst case.
pub fn mesh_quality(mesh: &TriangleMesh<f64>) -> Result<MeshQuality> {
    if mesh.faces.is_empty() {
        return Err(Error::InvalidArgument("mesh has no faces".into()));
    }
    let mut min_angle = f64::INFINITY;
    let mut max_aspect = 0.0f64;
    for (fi, f) in mesh.faces.iter().enumerate() {
        let v = [
            mesh.vertices[f[0] as usize],
            mesh.vertices[f[1] as usize],
            mesh.vertices[f[2] as usize],
        ];
        let e = [v[1] - v[0], v[2] - v[1], v[0] - v[2]];
        let lens = [e[0].norm(), e[1].norm(), e[2].norm()];
        let area = 0.5 * e[0].cross(-e[2]).norm();
        if area <= 0.0 || lens.iter().any(|&l| l <= 0.0) {
            return Err(Error::DegenerateFace(format!(
                "face {fi} has zero area or a zero-length edge"
            )));
        }
        let perimeter: f64 = lens.iter().sum();
        let longest = lens.iter().cloned().fold(0.0, f64::max);
        max_aspect = max_aspect.max(longest * perimeter / (4.0 * 3f64.sqrt() * area));
        for c in 0..3 {
            let u = v[(c + 1) % 3] - v[c];
            let w = v[(c + 2) % 3] - v[c];
            let cos = (u.dot(w) / (u.norm() * w.norm())).clamp(-1.0, 1.0);
            min_angle = min_angle.min(cos.acos());
        }
    }
    Ok(MeshQuality {
        n_vertices: mesh.vertices.len(),
        n_faces: mesh.faces.len(),
        min_interior_angle_deg: min_angle.to_degrees(),
        max_aspect_ratio: max_aspect,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn straight_tube(s: usize, p: usize, r: f64, length: f64) -> TriangleMesh<f64> {
        let centers: Vec<Vec3<f64>> = (0..s)
            .map(|i| Vec3([length * i as f64 / (s - 1) as f64, 0.0, 0.0]))
            .collect();
        let cs = CrossSectionSet::build(centers, vec![r; s], Vec::new(), p).unwrap();
        build_vessel_mesh(&cs).unwrap()
    }

    #[test]
    fn counts_match_the_closed_form() {
        let mesh = straight_tube(67, 10, 3.0, 50.0);
        assert_eq!(mesh.n_vertices(), 10 * 67 + 2);
        assert_eq!(mesh.n_vertices(), 672);
        assert_eq!(mesh.n_faces(), 2 * 10 * 67);
        assert_eq!(mesh.n_faces(), 1340);
    }

    #[test]
    fn tube_is_watertight_with_euler_characteristic_two() {
        let mesh = straight_tube(12, 7, 2.0, 20.0);
        validate_watertight(&mesh).unwrap();
        assert_eq!(euler_characteristic(&mesh), 2);
    }

    #[test]
    fn missing_face_is_reported() {
        let mut mesh = straight_tube(5, 5, 1.0, 8.0);
        mesh.faces.pop();
        let err = validate_watertight(&mesh).unwrap_err();
        assert!(matches!(err, Error::Topology(_)), "{err}");
    }

    #[test]
    fn volume_matches_cylinder() {
        // P = 32 keeps the inscribed-polygon area deficit (~0.6%) within the
        // 2% budget against the analytic cylinder volume.
        let (r, length) = (5.0, 40.0);
        let mesh = straight_tube(64, 32, r, length);
        let analytic = std::f64::consts::PI * r * r * length;
        let v = signed_volume(&mesh);
        assert!(v > 0.0);
        assert!(
            (v - analytic).abs() / analytic < 0.02,
            "volume {v} vs cylinder {analytic}"
        );
    }

    #[test]
    fn cap_vertices_sit_on_the_centerline_ends() {
        let mesh = straight_tube(9, 6, 2.0, 16.0);
        let first = mesh.vertices[9 * 6];
        let last = mesh.vertices[9 * 6 + 1];
        assert_eq!(first.0, [0.0, 0.0, 0.0]);
        assert_eq!(last.0, [16.0, 0.0, 0.0]);
    }

    #[test]
    fn quality_of_a_regular_tetrahedron_is_ideal() {
        let vertices = vec![
            Vec3([1.0, 1.0, 1.0]),
            Vec3([1.0, -1.0, -1.0]),
            Vec3([-1.0, 1.0, -1.0]),
            Vec3([-1.0, -1.0, 1.0]),
        ];
        let faces = vec![[0, 1, 2], [0, 3, 1], [0, 2, 3], [1, 3, 2]];
        let mesh = TriangleMesh { vertices, faces };
        validate_watertight(&mesh).unwrap();
        assert!(signed_volume(&mesh) > 0.0);
        let q = mesh_quality(&mesh).unwrap();
        assert!((q.min_interior_angle_deg - 60.0).abs() < 1e-9);
        assert!((q.max_aspect_ratio - 1.0).abs() < 1e-12);
    }

    #[test]
    fn degenerate_face_is_rejected_by_quality() {
        let vertices = vec![
            Vec3([0.0, 0.0, 0.0]),
            Vec3([1.0, 0.0, 0.0]),
            Vec3([2.0, 0.0, 0.0]),
        ];
        let mesh = TriangleMesh {
            vertices,
            faces: vec![[0, 1, 2]],
        };
        assert!(matches!(
            mesh_quality(&mesh),
            Err(Error::DegenerateFace(_))
        ));
    }

    #[test]
    fn tube_quality_is_sane() {
        let q = mesh_quality(&straight_tube(32, 10, 4.0, 40.0)).unwrap();
        assert!(q.min_interior_angle_deg > 15.0, "{q:?}");
        assert!(q.max_aspect_ratio < 4.0, "{q:?}");
    }
}
