//! On-disk formats: NRRD volumes, OBJ meshes, JSON parameter documents and
//! plain-text polylines.
//!
//! Everything round-trips losslessly (uint8 grids and float32 volumes
//! bitwise, mesh and parameter numbers to full precision), and readers
//! reject rather than coerce: unsupported NRRD fields, non-triangle OBJ
//! faces, unknown JSON keys and malformed polyline rows are all named
//! errors. NRRD payloads are raw little-endian, x-fastest, with unit
//! axis-aligned voxels implied.

use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::Error;
use crate::fit::VesselParams;
use crate::grid::{SoftVolume, VoxelGrid};
use crate::mesh::TriangleMesh;
use crate::vec3::Vec3;
use crate::Result;

const NRRD_MAGIC: &str = "NRRD0004";

/// Fields any of our NRRD headers may carry; anything else is rejected.
const NRRD_KNOWN_FIELDS: [&str; 5] = ["type", "dimension", "sizes", "encoding", "endian"];

struct NrrdHeader {
    sizes: [usize; 3],
}

fn write_nrrd(path: &Path, type_name: &str, sizes: [usize; 3], payload: &[u8]) -> Result<()> {
    let mut head = String::new();
    let _ = writeln!(head, "{NRRD_MAGIC}");
    let _ = writeln!(head, "type: {type_name}");
    let _ = writeln!(head, "dimension: 3");
    let _ = writeln!(head, "sizes: {} {} {}", sizes[0], sizes[1], sizes[2]);
    let _ = writeln!(head, "encoding: raw");
    let _ = writeln!(head, "endian: little");
    let _ = writeln!(head);
    let mut bytes = head.into_bytes();
    bytes.extend_from_slice(payload);
    std::fs::write(path, bytes)?;
    Ok(())
}

/// Parse and validate the header, returning it and the payload bytes.
fn read_nrrd(path: &Path, expect_type: &str, element_size: usize) -> Result<(NrrdHeader, Vec<u8>)> {
    let bytes = std::fs::read(path)?;
    let header_end = bytes
        .windows(2)
        .position(|w| w == b"\n\n")
        .map(|p| (p, 2))
        .or_else(|| bytes.windows(4).position(|w| w == b"\r\n\r\n").map(|p| (p, 4)))
        .ok_or_else(|| Error::Format("NRRD header has no terminating blank line".into()))?;
    let header = std::str::from_utf8(&bytes[..header_end.0])
        .map_err(|_| Error::Format("NRRD header is not valid UTF-8".into()))?;
    let payload = &bytes[header_end.0 + header_end.1..];

    let mut lines = header.lines().map(|l| l.trim_end_matches('\r'));
    let magic = lines.next().unwrap_or("");
    if magic != NRRD_MAGIC {
        return Err(Error::Format(format!(
            "bad NRRD magic {magic:?}, expected {NRRD_MAGIC:?}"
        )));
    }
    let mut type_name = None;
    let mut dimension = None;
    let mut sizes: Option<[usize; 3]> = None;
    let mut encoding = None;
    let mut endian = None;
    for line in lines {
        if line.starts_with('#') || line.is_empty() {
            continue;
        }
        let (field, value) = line
            .split_once(':')
            .ok_or_else(|| Error::Format(format!("malformed NRRD header line {line:?}")))?;
        let field = field.trim();
        let value = value.trim();
        if !NRRD_KNOWN_FIELDS.contains(&field) {
            return Err(Error::Format(format!("unsupported NRRD field {field:?}")));
        }
        match field {
            "type" => type_name = Some(value.to_string()),
            "dimension" => dimension = Some(value.to_string()),
            "sizes" => {
                let parsed: std::result::Result<Vec<usize>, _> =
                    value.split_whitespace().map(str::parse).collect();
                let v = parsed
                    .map_err(|_| Error::Format(format!("unparseable NRRD sizes {value:?}")))?;
                if v.len() != 3 || v.contains(&0) {
                    return Err(Error::Format(format!(
                        "NRRD sizes must be 3 positive integers, got {value:?}"
                    )));
                }
                sizes = Some([v[0], v[1], v[2]]);
            }
            "encoding" => encoding = Some(value.to_string()),
            "endian" => endian = Some(value.to_string()),
            _ => unreachable!(),
        }
    }
    let type_name = type_name.ok_or_else(|| Error::Format("NRRD header lacks type".into()))?;
    if type_name != expect_type {
        return Err(Error::Format(format!(
            "NRRD type {type_name:?}, expected {expect_type:?}"
        )));
    }
    match dimension.as_deref() {
        Some("3") => {}
        other => {
            return Err(Error::Format(format!(
                "NRRD dimension {other:?}, only 3 is supported"
            )))
        }
    }
    match encoding.as_deref() {
        Some("raw") => {}
        other => {
            return Err(Error::Format(format!(
                "NRRD encoding {other:?}, only raw is supported"
            )))
        }
    }
    if let Some(e) = endian.as_deref() {
        if e != "little" {
            return Err(Error::Format(format!(
                "NRRD endian {e:?}, only little is supported"
            )));
        }
    } else if element_size > 1 {
        return Err(Error::Format(
            "NRRD header lacks endian, required for multi-byte types".into(),
        ));
    }
    let sizes = sizes.ok_or_else(|| Error::Format("NRRD header lacks sizes".into()))?;
    let expected = sizes[0] * sizes[1] * sizes[2] * element_size;
    if payload.len() != expected {
        return Err(Error::Format(format!(
            "NRRD payload is {} bytes, sizes demand {expected}",
            payload.len()
        )));
    }
    Ok((NrrdHeader { sizes }, payload.to_vec()))
}

/// Write a binary grid as a uint8 NRRD.
pub fn write_nrrd_mask(path: impl AsRef<Path>, grid: &VoxelGrid) -> Result<()> {
    write_nrrd(path.as_ref(), "uint8", grid.shape, &grid.data)
}

/// Read a uint8 NRRD into a binary grid; values other than 0/1 are rejected.
pub fn read_nrrd_mask(path: impl AsRef<Path>) -> Result<VoxelGrid> {
    let (header, payload) = read_nrrd(path.as_ref(), "uint8", 1)?;
    VoxelGrid::from_data(header.sizes, payload)
}

/// Write a real-valued volume as a float32 NRRD.
pub fn write_nrrd_volume(path: impl AsRef<Path>, vol: &SoftVolume) -> Result<()> {
    let mut payload = Vec::with_capacity(vol.data.len() * 4);
    for v in &vol.data {
        payload.extend_from_slice(&v.to_le_bytes());
    }
    write_nrrd(path.as_ref(), "float", vol.shape, &payload)
}

/// Read a float32 NRRD volume.
pub fn read_nrrd_volume(path: impl AsRef<Path>) -> Result<SoftVolume> {
    let (header, payload) = read_nrrd(path.as_ref(), "float", 4)?;
    let data = payload
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
        .collect();
    SoftVolume::from_data(header.sizes, data)
}

/// Write a mesh as OBJ: one comment, vertices to 17 significant digits,
/// 1-based triangle faces.
pub fn write_mesh_obj(path: impl AsRef<Path>, mesh: &TriangleMesh<f64>) -> Result<()> {
    let mut out = String::new();
    let _ = writeln!(
        out,
        "# {} vertices, {} faces",
        mesh.n_vertices(),
        mesh.n_faces()
    );
    for v in &mesh.vertices {
        let _ = writeln!(out, "v {:.16e} {:.16e} {:.16e}", v.x(), v.y(), v.z());
    }
    for f in &mesh.faces {
        let _ = writeln!(out, "f {} {} {}", f[0] + 1, f[1] + 1, f[2] + 1);
    }
    std::fs::write(path, out)?;
    Ok(())
}

/// Read an OBJ mesh. Only `v`, `f` and comment lines are accepted, faces
/// must be plain 1-based triangles.
pub fn read_mesh_obj(path: impl AsRef<Path>) -> Result<TriangleMesh<f64>> {
    let text = std::fs::read_to_string(path)?;
    let mut vertices: Vec<Vec3<f64>> = Vec::new();
    let mut faces: Vec<[u32; 3]> = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.trim_end_matches('\r').trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let mut tokens = line.split_whitespace();
        let keyword = tokens.next().unwrap();
        let rest: Vec<&str> = tokens.collect();
        match keyword {
            "v" => {
                if rest.len() != 3 {
                    return Err(Error::Parse {
                        line: i + 1,
                        detail: format!("vertex line has {} coordinates, expected 3", rest.len()),
                    });
                }
                let mut c = [0.0f64; 3];
                for (d, t) in rest.iter().enumerate() {
                    c[d] = t.parse().map_err(|_| Error::Parse {
                        line: i + 1,
                        detail: format!("unparseable coordinate {t:?}"),
                    })?;
                }
                vertices.push(Vec3(c));
            }
            "f" => {
                if rest.len() != 3 {
                    return Err(Error::Format(format!(
                        "line {}: face with {} vertices, only triangles are supported",
                        i + 1,
                        rest.len()
                    )));
                }
                let mut idx = [0u32; 3];
                for (d, t) in rest.iter().enumerate() {
                    if t.contains('/') {
                        return Err(Error::Format(format!(
                            "line {}: face reference {t:?} with texture/normal parts is not supported",
                            i + 1
                        )));
                    }
                    let v: u64 = t.parse().map_err(|_| Error::Parse {
                        line: i + 1,
                        detail: format!("unparseable face index {t:?}"),
                    })?;
                    if v == 0 {
                        return Err(Error::Format(format!(
                            "line {}: face index 0 (OBJ indices are 1-based)",
                            i + 1
                        )));
                    }
                    idx[d] = (v - 1) as u32;
                }
                faces.push(idx);
            }
            other => {
                return Err(Error::Format(format!(
                    "line {}: unsupported OBJ keyword {other:?}, only v and f are accepted",
                    i + 1
                )));
            }
        }
    }
    for (n, f) in faces.iter().enumerate() {
        for &v in f {
            if v as usize >= vertices.len() {
                return Err(Error::Format(format!(
                    "face {n} references vertex {} but only {} exist",
                    v + 1,
                    vertices.len()
                )));
            }
        }
    }
    Ok(TriangleMesh { vertices, faces })
}

/// Version of the parameter document schema.
pub const PARAMS_VERSION: u32 = 1;

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ParamsFile {
    version: u32,
    #[serde(rename = "P")]
    p: usize,
    centerline_cp: Vec<[f64; 3]>,
    radius_cp: Vec<f64>,
    adjustment_cp: Vec<Vec<f64>>,
}

/// Write the parameter document (pretty JSON, full precision).
pub fn write_params_json(path: impl AsRef<Path>, params: &VesselParams) -> Result<()> {
    let doc = ParamsFile {
        version: PARAMS_VERSION,
        p: params.p,
        centerline_cp: params.centerline_cp.clone(),
        radius_cp: params.radius_cp.clone(),
        adjustment_cp: params.adjustment_cp.clone(),
    };
    let text = serde_json::to_string_pretty(&doc)
        .map_err(|e| Error::Format(format!("cannot serialize parameters: {e}")))?;
    std::fs::write(path, text + "\n")?;
    Ok(())
}

/// Read and validate a parameter document.
pub fn read_params_json(path: impl AsRef<Path>) -> Result<VesselParams> {
    let text = std::fs::read_to_string(path)?;
    let doc: ParamsFile =
        serde_json::from_str(&text).map_err(|e| Error::Format(format!("parameter JSON: {e}")))?;
    if doc.version != PARAMS_VERSION {
        return Err(Error::Format(format!(
            "parameter document version {} is not supported (expected {PARAMS_VERSION})",
            doc.version
        )));
    }
    let params = VesselParams {
        centerline_cp: doc.centerline_cp,
        radius_cp: doc.radius_cp,
        adjustment_cp: doc.adjustment_cp,
        p: doc.p,
    };
    params.validate()?;
    Ok(params)
}

/// Write a polyline as one `x y z` row per point.
pub fn write_polyline(path: impl AsRef<Path>, points: &[Vec3<f64>]) -> Result<()> {
    let mut out = String::new();
    for p in points {
        let _ = writeln!(out, "{:.16e} {:.16e} {:.16e}", p.x(), p.y(), p.z());
    }
    std::fs::write(path, out)?;
    Ok(())
}

/// Read a polyline; blank lines and `#` comments are skipped, anything else
/// must be exactly three numbers.
pub fn read_polyline(path: impl AsRef<Path>) -> Result<Vec<Vec3<f64>>> {
    let text = std::fs::read_to_string(path)?;
    let mut points = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.trim_end_matches('\r').trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let tokens: Vec<&str> = line.split_whitespace().collect();
        if tokens.len() != 3 {
            return Err(Error::Parse {
                line: i + 1,
                detail: format!("expected 3 numbers, found {}", tokens.len()),
            });
        }
        let mut c = [0.0f64; 3];
        for (d, t) in tokens.iter().enumerate() {
            c[d] = t.parse().map_err(|_| Error::Parse {
                line: i + 1,
                detail: format!("unparseable number {t:?}"),
            })?;
        }
        points.push(Vec3(c));
    }
    Ok(points)
}

/// Read slice indices for sparse supervision, one per line.
pub fn read_slice_indices(path: impl AsRef<Path>) -> Result<Vec<usize>> {
    let text = std::fs::read_to_string(path)?;
    let mut indices = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.trim_end_matches('\r').trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        indices.push(line.parse().map_err(|_| Error::Parse {
            line: i + 1,
            detail: format!("unparseable slice index {line:?}"),
        })?);
    }
    Ok(indices)
}

/// Write slice indices, one per line.
pub fn write_slice_indices(path: impl AsRef<Path>, indices: &[usize]) -> Result<()> {
    let mut out = String::new();
    for i in indices {
        let _ = writeln!(out, "{i}");
    }
    std::fs::write(path, out)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn tmp(name: &str) -> std::path::PathBuf {
        let dir = tempfile::tempdir().unwrap();
        // Leak the dir so the file lives for the duration of the test.
        let path = dir.path().join(name);
        std::mem::forget(dir);
        path
    }

    #[test]
    fn mask_roundtrip_is_bitwise() {
        let mut rng = ChaCha8Rng::seed_from_u64(42);
        let data: Vec<u8> = (0..16 * 16 * 16).map(|_| rng.gen_range(0..=1)).collect();
        let grid = VoxelGrid::from_data([16, 16, 16], data).unwrap();
        let path = tmp("g.nrrd");
        write_nrrd_mask(&path, &grid).unwrap();
        let back = read_nrrd_mask(&path).unwrap();
        assert_eq!(grid, back);
    }

    #[test]
    fn volume_roundtrip_preserves_bits() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let data: Vec<f32> = (0..4 * 3 * 2).map(|_| rng.gen::<f32>()).collect();
        let vol = SoftVolume::from_data([4, 3, 2], data).unwrap();
        let path = tmp("v.nrrd");
        write_nrrd_volume(&path, &vol).unwrap();
        let back = read_nrrd_volume(&path).unwrap();
        assert_eq!(vol.shape, back.shape);
        for (a, b) in vol.data.iter().zip(&back.data) {
            assert_eq!(a.to_bits(), b.to_bits());
        }
    }

    #[test]
    fn nrrd_rejects_unknown_fields_and_bad_payloads() {
        let path = tmp("bad.nrrd");
        std::fs::write(
            &path,
            b"NRRD0004\ntype: uint8\ndimension: 3\nsizes: 2 2 2\nencoding: raw\nspace origin: (0,0,0)\n\n12345678",
        )
        .unwrap();
        let err = read_nrrd_mask(&path).unwrap_err();
        assert!(err.to_string().contains("space origin"), "{err}");

        std::fs::write(
            &path,
            b"NRRD0004\ntype: uint8\ndimension: 3\nsizes: 8 8 8\nencoding: raw\n\n",
        )
        .unwrap();
        let body = vec![0u8; 511];
        let mut f = std::fs::OpenOptions::new().append(true).open(&path).unwrap();
        std::io::Write::write_all(&mut f, &body).unwrap();
        let err = read_nrrd_mask(&path).unwrap_err();
        assert!(err.to_string().contains("511"), "{err}");

        std::fs::write(&path, b"NRRD0001\n\n").unwrap();
        assert!(read_nrrd_mask(&path).is_err());
    }

    #[test]
    fn obj_roundtrip_and_line_count() {
        let vertices = vec![
            Vec3([0.1234567890123456, -7.0, 1e-17]),
            Vec3([1.0, 2.0, 3.0]),
            Vec3([4.0, 5.0, 6.0]),
        ];
        let faces = vec![[0u32, 1, 2]];
        let mesh = TriangleMesh { vertices, faces };
        let path = tmp("m.obj");
        write_mesh_obj(&path, &mesh).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        let comments = text.lines().filter(|l| l.starts_with('#')).count();
        assert_eq!(text.lines().count(), 3 + 1 + comments);
        let back = read_mesh_obj(&path).unwrap();
        assert_eq!(back.faces, mesh.faces);
        for (a, b) in mesh.vertices.iter().zip(&back.vertices) {
            for d in 0..3 {
                assert_eq!(a.0[d].to_bits(), b.0[d].to_bits(), "coordinate {d}");
            }
        }
    }

    #[test]
    fn obj_rejects_quads_and_foreign_keywords() {
        let path = tmp("bad.obj");
        std::fs::write(&path, "v 0 0 0\nv 1 0 0\nv 0 1 0\nv 1 1 0\nf 1 2 3 4\n").unwrap();
        let err = read_mesh_obj(&path).unwrap_err();
        assert!(matches!(err, Error::Format(_)), "{err}");

        std::fs::write(&path, "vn 0 0 1\n").unwrap();
        assert!(read_mesh_obj(&path).is_err());
        std::fs::write(&path, "v 0 0 0\nv 1 0 0\nv 0 1 0\nf 1/1 2/2 3/3\n").unwrap();
        assert!(read_mesh_obj(&path).is_err());
        std::fs::write(&path, "v 0 0 0\nf 0 1 2\n").unwrap();
        assert!(read_mesh_obj(&path).is_err());
        std::fs::write(&path, "v 0 0 0\nf 1 2 3\n").unwrap();
        assert!(read_mesh_obj(&path).is_err()); // out of range
    }

    #[test]
    fn params_roundtrip_and_schema_rejection() {
        let params = VesselParams {
            centerline_cp: (0..5).map(|i| [i as f64, 0.25 * i as f64, -1.5]).collect(),
            radius_cp: vec![2.0, 2.5, 3.0, 2.0],
            adjustment_cp: vec![vec![0.125, -0.25, 0.0625]; 4],
            p: 3,
        };
        let path = tmp("p.json");
        write_params_json(&path, &params).unwrap();
        let back = read_params_json(&path).unwrap();
        assert_eq!(params, back);

        let mut doc: serde_json::Value =
            serde_json::from_str(&std::fs::read_to_string(&path).unwrap()).unwrap();
        doc["extra_key"] = serde_json::json!(1);
        std::fs::write(&path, doc.to_string()).unwrap();
        let err = read_params_json(&path).unwrap_err();
        assert!(err.to_string().contains("extra_key"), "{err}");

        doc.as_object_mut().unwrap().remove("extra_key");
        doc["version"] = serde_json::json!(2);
        std::fs::write(&path, doc.to_string()).unwrap();
        let err = read_params_json(&path).unwrap_err();
        assert!(err.to_string().contains("version"), "{err}");
    }

    #[test]
    fn polyline_roundtrip_tolerates_crlf() {
        let points = vec![
            Vec3([0.0, 1.5, -2.25]),
            Vec3([3.0, 4.125, 5.0]),
            Vec3([0.1, 0.2, 0.3]),
        ];
        let path = tmp("line.txt");
        write_polyline(&path, &points).unwrap();
        let back = read_polyline(&path).unwrap();
        assert_eq!(points.len(), back.len());
        for (a, b) in points.iter().zip(&back) {
            assert_eq!(a.0, b.0);
        }

        std::fs::write(&path, "1 2 3\r\n4 5 6\r\n").unwrap();
        let back = read_polyline(&path).unwrap();
        assert_eq!(back.len(), 2);
        assert_eq!(back[1].0, [4.0, 5.0, 6.0]);

        std::fs::write(&path, "1 2\n").unwrap();
        let err = read_polyline(&path).unwrap_err();
        assert!(matches!(err, Error::Parse { line: 1, .. }), "{err}");
    }

    #[test]
    fn slice_indices_roundtrip() {
        let path = tmp("slices.txt");
        write_slice_indices(&path, &[3, 1, 8]).unwrap();
        assert_eq!(read_slice_indices(&path).unwrap(), vec![3, 1, 8]);
        std::fs::write(&path, "4\nseven\n").unwrap();
        let err = read_slice_indices(&path).unwrap_err();
        assert!(matches!(err, Error::Parse { line: 2, .. }), "{err}");
    }
}
