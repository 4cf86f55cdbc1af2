//! Command-line front end for the tube-fitting library.
//!
//! Subcommands: `fit` a model to a segmentation, `mesh` fitted parameters to
//! OBJ, `voxelize` parameters or a mesh to NRRD, `eval` a prediction against
//! a reference, `synth` a test case, `gradcheck` the analytic gradients.
//!
//! Exit codes: 0 success, 1 bad input or usage, 2 numeric failure (fit
//! divergence, failed gradient check). Diagnostics go to standard error.
//! With a fixed `--seed` and `--threads 1` every output file is
//! byte-for-byte reproducible.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::error::ErrorKind;
use clap::{ArgGroup, Args, Parser, Subcommand};

use vesselfit_core::voxelizer::Axis;

mod commands;
mod config;

/// Cross-section count used when a subcommand meshes parameters internally.
pub const VOXELIZE_SECTIONS: usize = 64;

#[derive(Parser)]
#[command(
    name = "vesselfit",
    version,
    about = "Fit parametric tube shapes to binary segmentations and work with the results"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    Fit(FitArgs),
    Mesh(MeshArgs),
    Voxelize(VoxelizeArgs),
    Eval(EvalArgs),
    Synth(SynthArgs),
    Gradcheck(GradcheckArgs),
}

/// Fit the tube model to a binary segmentation.
///
/// Writes fitted parameters as JSON; optionally the fitted surface mesh, its
/// soft voxelization, and a fit report. Optimization hyperparameters
/// (control-point counts, tau 0.1, margin 3, radial directions 10, per-stage
/// iterations and learning rates) are taken from --config; every flag below
/// also has a config mirror under the same name, with the flag winning.
#[derive(Args)]
struct FitArgs {
    /// Binary segmentation volume (NRRD, uint8)
    #[arg(long, value_name = "PATH")]
    seg: Option<PathBuf>,
    /// Preliminary centerline polyline (text, one "x y z" per line)
    #[arg(long, value_name = "PATH")]
    centerline: Option<PathBuf>,
    /// key=value configuration file
    #[arg(long, value_name = "PATH")]
    config: Option<PathBuf>,
    /// Labeled z-slice indices restricting the voxel loss (text, one index
    /// per line)
    #[arg(long, value_name = "PATH")]
    sparse_mask: Option<PathBuf>,
    /// Enable the radial-adjustment stage for non-circular cross-sections
    #[arg(long)]
    stage4: bool,
    /// Seed for stochastic components; the fit itself is deterministic
    /// [default: 0]
    #[arg(long, value_name = "N")]
    seed: Option<u64>,
    /// Output path for the fitted parameters (JSON)
    #[arg(long, value_name = "PATH")]
    out_params: Option<PathBuf>,
    /// Also write the fitted surface mesh (OBJ)
    #[arg(long, value_name = "PATH")]
    out_mesh: Option<PathBuf>,
    /// Also write the soft voxelization of the fit (NRRD, float32)
    #[arg(long, value_name = "PATH")]
    out_vox: Option<PathBuf>,
    /// Also write the fit report (JSON: per-stage losses, dice, distances)
    #[arg(long, value_name = "PATH")]
    report: Option<PathBuf>,
    /// Threads for the final rasterization; every value gives identical
    /// output, 1 is the reference mode [default: 1]
    #[arg(long, value_name = "N")]
    threads: Option<usize>,
}

/// Build an OBJ surface mesh from fitted parameters.
#[derive(Args)]
struct MeshArgs {
    /// Fitted parameters (JSON)
    #[arg(long, value_name = "PATH")]
    params: PathBuf,
    /// Cross-sections along the centerline
    #[arg(long, value_name = "S", default_value_t = 64)]
    sections: usize,
    /// Radial directions per cross-section; must match the parameters'
    /// count unless every radial adjustment is zero
    #[arg(long, value_name = "P", default_value_t = 10)]
    radial: usize,
    /// Output OBJ path
    #[arg(long, value_name = "PATH")]
    out: PathBuf,
}

/// Voxelize fitted parameters or a mesh into an NRRD volume.
///
/// Parameters are meshed at 64 cross-sections first. The default output is
/// the soft (float32) voxelization; --hard thresholds it at 0.5 into a
/// binary uint8 mask.
#[derive(Args)]
#[command(group = ArgGroup::new("source").required(true).args(["params", "mesh"]))]
struct VoxelizeArgs {
    /// Fitted parameters (JSON)
    #[arg(long, value_name = "PATH")]
    params: Option<PathBuf>,
    /// Surface mesh (OBJ)
    #[arg(long, value_name = "PATH")]
    mesh: Option<PathBuf>,
    /// Grid shape as X,Y,Z
    #[arg(long, value_name = "X,Y,Z", value_parser = parse_shape)]
    shape: ShapeArg,
    /// Soft-boundary temperature, voxels
    #[arg(long, value_name = "T", default_value_t = 0.1)]
    tau: f64,
    /// Pruning margin around each slice contour, voxels
    #[arg(long, value_name = "M", default_value_t = 3)]
    margin: usize,
    /// Slicing axis: x, y or z
    #[arg(long, value_name = "A", default_value = "z", value_parser = parse_axis)]
    axis: Axis,
    /// Threshold at 0.5 into a binary uint8 mask
    #[arg(long)]
    hard: bool,
    /// Output NRRD path
    #[arg(long, value_name = "PATH")]
    out: PathBuf,
}

/// Compare a predicted mask (and optionally centerline) against a reference.
///
/// Reports Dice overlap plus chamfer and 95th-percentile Hausdorff distances
/// between the mask surfaces; with both centerline flags, the same distances
/// between the polylines.
#[derive(Args)]
struct EvalArgs {
    /// Predicted binary mask (NRRD)
    #[arg(long, value_name = "PATH")]
    pred: PathBuf,
    /// Reference binary mask (NRRD)
    #[arg(long = "ref", value_name = "PATH")]
    reference: PathBuf,
    /// Predicted centerline polyline
    #[arg(long, value_name = "PATH", requires = "ref_centerline")]
    pred_centerline: Option<PathBuf>,
    /// Reference centerline polyline
    #[arg(long, value_name = "PATH", requires = "pred_centerline")]
    ref_centerline: Option<PathBuf>,
    /// Output report path (JSON)
    #[arg(long, value_name = "PATH")]
    out: PathBuf,
}

/// Generate a synthetic vessel case with known ground truth.
///
/// Writes seg.nrrd, centerline.txt, params.json, mesh.obj, endpoints.txt and
/// sparse_mask.txt (a 5% slice mask) into the output directory.
#[derive(Args)]
struct SynthArgs {
    /// Vessel kind: straight, arc, helix, varying-radius or elliptic
    #[arg(long, value_name = "K")]
    kind: String,
    /// Grid shape as X,Y,Z
    #[arg(long, value_name = "X,Y,Z", default_value = "64,64,64", value_parser = parse_shape)]
    shape: ShapeArg,
    /// Generator seed
    #[arg(long, value_name = "N", default_value_t = 0)]
    seed: u64,
    /// Output directory, created if missing
    #[arg(long, value_name = "DIR")]
    out_dir: PathBuf,
}

/// Check analytic gradients against central finite differences.
///
/// Runs the named fixture, prints the report as JSON, and exits 0 only when
/// at least 99% of the parameter coordinates agree within tolerance.
#[derive(Args)]
struct GradcheckArgs {
    /// Fixture: straight or arc
    #[arg(long, value_name = "K")]
    fixture: String,
    /// Central finite-difference step
    #[arg(long, value_name = "H", default_value_t = 1e-3)]
    h: f64,
}

/// Newtype so clap can carry a parsed grid shape.
type ShapeArg = [usize; 3];

fn parse_shape(s: &str) -> Result<ShapeArg, String> {
    let parts: Vec<&str> = s.split(',').collect();
    if parts.len() != 3 {
        return Err(format!("expected X,Y,Z, got {s:?}"));
    }
    let mut out = [0usize; 3];
    for (o, p) in out.iter_mut().zip(&parts) {
        *o = p
            .trim()
            .parse()
            .map_err(|_| format!("invalid dimension {p:?} in {s:?}"))?;
        if *o == 0 {
            return Err(format!("zero dimension in {s:?}"));
        }
    }
    Ok(out)
}

fn parse_axis(s: &str) -> Result<Axis, String> {
    match s.to_ascii_lowercase().as_str() {
        "x" => Ok(Axis::X),
        "y" => Ok(Axis::Y),
        "z" => Ok(Axis::Z),
        other => Err(format!("expected x, y or z, got {other:?}")),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            // Help and version requests are "errors" to clap but successes
            // to the shell; anything else is a usage problem, which the
            // exit-code contract files under bad input.
            if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) {
                print!("{e}");
                return ExitCode::SUCCESS;
            }
            eprint!("{e}");
            return ExitCode::from(1);
        }
    };
    let outcome = match cli.command {
        Command::Fit(a) => commands::run_fit(a),
        Command::Mesh(a) => commands::run_mesh(a),
        Command::Voxelize(a) => commands::run_voxelize(a),
        Command::Eval(a) => commands::run_eval(a),
        Command::Synth(a) => commands::run_synth(a),
        Command::Gradcheck(a) => commands::run_gradcheck(a),
    };
    match outcome {
        Ok(code) => ExitCode::from(code as u8),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(if e.is_numeric() { 2 } else { 1 })
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn shape_and_axis_parsers_accept_and_reject() {
        assert_eq!(parse_shape("64,64,64").unwrap(), [64, 64, 64]);
        assert_eq!(parse_shape(" 8 , 9 , 10 ").unwrap(), [8, 9, 10]);
        assert!(parse_shape("64,64").is_err());
        assert!(parse_shape("64,64,0").is_err());
        assert!(parse_shape("a,b,c").is_err());
        assert!(matches!(parse_axis("Z").unwrap(), Axis::Z));
        assert!(parse_axis("w").is_err());
    }

    #[test]
    fn cli_definition_is_consistent() {
        use clap::CommandFactory;
        Cli::command().debug_assert();
    }
}
