//! `key=value` configuration files for the fit subcommand.
//!
//! Every fit flag has a config mirror under the same name (`seg=`,
//! `sparse-mask=`, ...); command-line flags win on conflict. The optimization
//! hyperparameters have no flags and live only here, under their library
//! names (`n_c`, `tau`, `stage1_lr`, ...). Unknown keys are rejected by name
//! so a typo cannot silently fall back to a default.

use std::path::PathBuf;

use vesselfit_core::fit::FitConfig;
use vesselfit_core::{Error, Result};

/// Parsed file: flag mirrors kept separate from the hyperparameter edits,
/// which are applied directly onto a [`FitConfig`].
#[derive(Debug, Default)]
pub struct FileConfig {
    pub seg: Option<PathBuf>,
    pub centerline: Option<PathBuf>,
    pub sparse_mask: Option<PathBuf>,
    pub out_params: Option<PathBuf>,
    pub out_mesh: Option<PathBuf>,
    pub out_vox: Option<PathBuf>,
    pub report: Option<PathBuf>,
    pub stage4: Option<bool>,
    pub seed: Option<u64>,
    pub threads: Option<usize>,
    /// `(key, value)` hyperparameter lines in file order, validated but not
    /// yet applied.
    edits: Vec<(String, f64)>,
}

fn parse_num<T: std::str::FromStr>(line: usize, key: &str, v: &str) -> Result<T> {
    v.parse().map_err(|_| Error::Parse {
        line,
        detail: format!("invalid value {v:?} for {key}"),
    })
}

fn parse_bool(line: usize, key: &str, v: &str) -> Result<bool> {
    match v {
        "true" | "1" => Ok(true),
        "false" | "0" => Ok(false),
        _ => Err(Error::Parse {
            line,
            detail: format!("invalid value {v:?} for {key}; expected true or false"),
        }),
    }
}

const COUNT_KEYS: &[&str] = &[
    "n_c",
    "n_r",
    "n_a",
    "p",
    "s_loss",
    "s_mesh",
    "margin",
    "stage1_iterations",
    "stage2_iterations",
    "stage3_iterations",
    "stage4_iterations",
];

const FLOAT_KEYS: &[&str] = &[
    "tau",
    "centerline_tol",
    "divergence_factor",
    "stage1_lr",
    "stage2_lr",
    "stage3_lr",
    "stage4_lr",
];

/// Parse a config file. Blank lines and `#` comments are ignored.
pub fn parse(path: &std::path::Path) -> Result<FileConfig> {
    let text = std::fs::read_to_string(path)?;
    let mut out = FileConfig::default();
    for (i, raw) in text.lines().enumerate() {
        let line = i + 1;
        let t = raw.trim();
        if t.is_empty() || t.starts_with('#') {
            continue;
        }
        let (key, value) = t.split_once('=').ok_or_else(|| Error::Parse {
            line,
            detail: format!("expected key=value, got {t:?}"),
        })?;
        let (key, value) = (key.trim(), value.trim());
        match key {
            "seg" => out.seg = Some(PathBuf::from(value)),
            "centerline" => out.centerline = Some(PathBuf::from(value)),
            "sparse-mask" => out.sparse_mask = Some(PathBuf::from(value)),
            "out-params" => out.out_params = Some(PathBuf::from(value)),
            "out-mesh" => out.out_mesh = Some(PathBuf::from(value)),
            "out-vox" => out.out_vox = Some(PathBuf::from(value)),
            "report" => out.report = Some(PathBuf::from(value)),
            "stage4" => out.stage4 = Some(parse_bool(line, key, value)?),
            "seed" => out.seed = Some(parse_num(line, key, value)?),
            "threads" => out.threads = Some(parse_num(line, key, value)?),
            "enable_stage3" => {
                let v = parse_bool(line, key, value)?;
                out.edits.push((key.to_string(), v as u8 as f64));
            }
            k if COUNT_KEYS.contains(&k) => {
                let v: usize = parse_num(line, key, value)?;
                out.edits.push((k.to_string(), v as f64));
            }
            k if FLOAT_KEYS.contains(&k) => {
                let v: f64 = parse_num(line, key, value)?;
                out.edits.push((k.to_string(), v));
            }
            other => {
                return Err(Error::Parse {
                    line,
                    detail: format!("unknown configuration key {other:?}"),
                })
            }
        }
    }
    Ok(out)
}

impl FileConfig {
    /// Apply the hyperparameter lines onto `cfg`, in file order.
    pub fn apply(&self, cfg: &mut FitConfig) {
        for (key, v) in &self.edits {
            let v = *v;
            match key.as_str() {
                "n_c" => cfg.n_c = v as usize,
                "n_r" => cfg.n_r = v as usize,
                "n_a" => cfg.n_a = v as usize,
                "p" => cfg.p = v as usize,
                "s_loss" => cfg.s_loss = v as usize,
                "s_mesh" => cfg.s_mesh = v as usize,
                "tau" => cfg.tau = v,
                "margin" => cfg.margin = Some(v as usize),
                "centerline_tol" => cfg.centerline_tol = v,
                "divergence_factor" => cfg.divergence_factor = v,
                "enable_stage3" => cfg.enable_stage3 = v != 0.0,
                "stage1_iterations" => cfg.stage1.iterations = v as usize,
                "stage2_iterations" => cfg.stage2.iterations = v as usize,
                "stage3_iterations" => cfg.stage3.iterations = v as usize,
                "stage4_iterations" => cfg.stage4.iterations = v as usize,
                "stage1_lr" => cfg.stage1.lr = v,
                "stage2_lr" => cfg.stage2.lr = v,
                "stage3_lr" => cfg.stage3.lr = v,
                "stage4_lr" => cfg.stage4.lr = v,
                _ => unreachable!("key validated at parse time"),
            }
        }
    }
}
