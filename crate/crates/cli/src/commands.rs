//! Implementations of the six subcommands. Each returns the process exit
//! code on its success path; hard failures bubble up as library errors and
//! are mapped to exit codes in `main`.

use std::path::Path;

use vesselfit_core::fit::{self, FitConfig, FitInputs};
use vesselfit_core::grid::SliceMask;
use vesselfit_core::voxelizer::{self, Axis};
use vesselfit_core::{gradcheck, io, metrics, synth, Error, Result, VesselParams};

use crate::config;
use crate::{EvalArgs, FitArgs, GradcheckArgs, MeshArgs, SynthArgs, VoxelizeArgs};

fn missing(flag: &str) -> Error {
    Error::InvalidInput(format!(
        "missing --{flag} (pass the flag or set {flag}= in the config file)"
    ))
}

/// Attach the offending path to a read failure so exit-1 diagnostics name
/// the file instead of just the failure kind.
fn read_ctx<T>(what: &str, path: &Path, r: Result<T>) -> Result<T> {
    r.map_err(|e| Error::InvalidInput(format!("cannot read {what} {}: {e}", path.display())))
}

pub fn run_fit(a: FitArgs) -> Result<i32> {
    let file = match &a.config {
        Some(p) => config::parse(p)?,
        None => config::FileConfig::default(),
    };
    let mut cfg = FitConfig::default();
    file.apply(&mut cfg);
    if a.stage4 || file.stage4 == Some(true) {
        cfg.enable_stage4 = true;
    }
    cfg.threads = a.threads.or(file.threads).unwrap_or(1);
    // Reserved for stochastic pipeline variants; the current fit is
    // deterministic, so the seed only has to be accepted consistently.
    let _seed = a.seed.or(file.seed).unwrap_or(0);

    let seg_path = a.seg.or(file.seg).ok_or_else(|| missing("seg"))?;
    let centerline_path = a
        .centerline
        .or(file.centerline)
        .ok_or_else(|| missing("centerline"))?;
    let out_params = a
        .out_params
        .or(file.out_params)
        .ok_or_else(|| missing("out-params"))?;
    let sparse_mask = a.sparse_mask.or(file.sparse_mask);
    let out_mesh = a.out_mesh.or(file.out_mesh);
    let out_vox = a.out_vox.or(file.out_vox);
    let report_path = a.report.or(file.report);

    let seg = read_ctx("segmentation", &seg_path, io::read_nrrd_mask(&seg_path))?;
    let preliminary_centerline = read_ctx(
        "centerline",
        &centerline_path,
        io::read_polyline(&centerline_path),
    )?;
    let slice_mask = match sparse_mask {
        Some(p) => Some(SliceMask::new(
            Axis::Z,
            read_ctx("slice mask", &p, io::read_slice_indices(&p))?,
            seg.shape[2],
        )?),
        None => None,
    };
    let inputs = FitInputs {
        seg,
        preliminary_centerline,
        endpoints: None,
        slice_mask,
    };

    let (params, report) = fit::fit_vessel(&inputs, &cfg)?;
    io::write_params_json(&out_params, &params)?;
    if let Some(p) = out_mesh {
        let mesh = params.as_generic().build_mesh(cfg.s_mesh)?.to_values();
        io::write_mesh_obj(&p, &mesh)?;
    }
    if let Some(p) = out_vox {
        let mesh = params.as_generic().build_mesh(cfg.s_mesh)?;
        let soft = voxelizer::soft_voxelize(
            &mesh,
            inputs.seg.shape,
            cfg.tau,
            cfg.effective_margin(),
            Axis::Z,
        )?;
        io::write_nrrd_volume(&p, &soft.to_volume())?;
    }
    if let Some(p) = report_path {
        write_json(&p, &report)?;
    }
    eprintln!(
        "fit: dice {:.4}, centerline chamfer {:.3}, {} stages, {:.1}s",
        report.dice,
        report.chamfer,
        report.stages.len(),
        report.wall_time_s
    );
    Ok(0)
}

pub fn run_mesh(a: MeshArgs) -> Result<i32> {
    let params = read_ctx("parameters", &a.params, io::read_params_json(&a.params))?;
    let params = reradialed(params, a.radial)?;
    let mesh = params.as_generic().build_mesh(a.sections)?.to_values();
    io::write_mesh_obj(&a.out, &mesh)?;
    eprintln!(
        "mesh: {} vertices, {} faces",
        mesh.vertices.len(),
        mesh.faces.len()
    );
    Ok(0)
}

/// Fitted radial adjustments are per-direction values; rebuilding the mesh
/// with a different direction count would silently drop them, so a mismatch
/// is only allowed when they are all zero.
fn reradialed(params: VesselParams, radial: usize) -> Result<VesselParams> {
    if radial == params.p {
        return Ok(params);
    }
    let all_zero = params
        .adjustment_cp
        .iter()
        .all(|row| row.iter().all(|v| *v == 0.0));
    if !all_zero {
        return Err(Error::InvalidInput(format!(
            "--radial {radial} disagrees with the fitted {} radial directions; \
             the parameters carry nonzero radial adjustments, which cannot be \
             resampled to a different direction count",
            params.p
        )));
    }
    let out = VesselParams {
        adjustment_cp: vec![vec![0.0; radial]; params.adjustment_cp.len()],
        p: radial,
        ..params
    };
    out.validate()?;
    Ok(out)
}

pub fn run_voxelize(a: VoxelizeArgs) -> Result<i32> {
    let mesh = match (&a.params, &a.mesh) {
        (Some(p), None) => {
            let params = read_ctx("parameters", p, io::read_params_json(p))?;
            params
                .as_generic()
                .build_mesh(crate::VOXELIZE_SECTIONS)?
                .to_values()
        }
        (None, Some(m)) => read_ctx("mesh", m, io::read_mesh_obj(m))?,
        _ => unreachable!("clap enforces exactly one source"),
    };
    let soft = voxelizer::soft_voxelize(&mesh, a.shape, a.tau, a.margin, a.axis)?;
    if a.hard {
        io::write_nrrd_mask(&a.out, &soft.to_volume().threshold(0.5))?;
    } else {
        io::write_nrrd_volume(&a.out, &soft.to_volume())?;
    }
    Ok(0)
}

pub fn run_eval(a: EvalArgs) -> Result<i32> {
    let pred = read_ctx("prediction", &a.pred, io::read_nrrd_mask(&a.pred))?;
    let reference = read_ctx("reference", &a.reference, io::read_nrrd_mask(&a.reference))?;
    let centerlines = match (&a.pred_centerline, &a.ref_centerline) {
        (Some(p), Some(r)) => Some((
            read_ctx("predicted centerline", p, io::read_polyline(p))?,
            read_ctx("reference centerline", r, io::read_polyline(r))?,
        )),
        _ => None,
    };
    let report = metrics::evaluate(
        &pred,
        &reference,
        centerlines.as_ref().map(|(p, r)| (&p[..], &r[..])),
    )?;
    write_json(&a.out, &report)?;
    eprintln!(
        "eval: dice {:.4}, chamfer {:.3}, hd95 {:.3}",
        report.dice, report.chamfer, report.hd95
    );
    Ok(0)
}

pub fn run_synth(a: SynthArgs) -> Result<i32> {
    let kind: synth::VesselKind = a.kind.parse()?;
    let mut sc = synth::SynthConfig::new(kind, a.seed);
    sc.shape = a.shape;
    let case = synth::generate(&sc)?;
    std::fs::create_dir_all(&a.out_dir)?;
    let file = |name: &str| a.out_dir.join(name);
    io::write_nrrd_mask(file("seg.nrrd"), &case.seg)?;
    io::write_polyline(file("centerline.txt"), &case.preliminary_centerline)?;
    io::write_params_json(file("params.json"), &case.truth)?;
    io::write_mesh_obj(file("mesh.obj"), &case.mesh)?;
    io::write_polyline(file("endpoints.txt"), &[case.endpoints.0, case.endpoints.1])?;
    let mask = synth::sparsify_slices(&case.seg, Axis::Z, 0.05)?;
    io::write_slice_indices(file("sparse_mask.txt"), &mask.indices)?;
    eprintln!(
        "synth: {} case in {:?}, {} foreground voxels, sparse mask keeps {} slices",
        a.kind,
        a.out_dir,
        case.seg.data.iter().filter(|v| **v == 1).count(),
        mask.indices.len()
    );
    Ok(0)
}

pub fn run_gradcheck(a: GradcheckArgs) -> Result<i32> {
    let report = gradcheck::check(&a.fixture, a.h)?;
    println!("{}", serde_json::to_string_pretty(&report).expect("report serializes"));
    if report.passed() {
        Ok(0)
    } else {
        eprintln!(
            "gradcheck: {:.2}% of coordinates agree, below the {:.0}% threshold",
            100.0 * report.pass_fraction,
            100.0 * gradcheck::PASS_FRACTION
        );
        Ok(2)
    }
}

fn write_json<T: serde::Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)
        .map_err(|e| Error::Format(format!("cannot serialize report: {e}")))?;
    text.push('\n');
    std::fs::write(path, text)?;
    Ok(())
}
