use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};

use crate::bspline::FitConfig;
use crate::error::Location;
use crate::heightfield::{SignConfig, DEFAULT_DENSITY_K, DEFAULT_R_MAX};
use crate::inpaint2d::InpaintConfig;
use crate::pointcloud::CloudFormat;
use crate::reconstruct::DEFAULT_HALTON_SKIP;
use crate::{Error, Result};

/// What the height map is measured against.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LowFrequency {
    /// Fitted B-spline surface.
    BSpline,
    /// Flat plane through the footprint, the classic elevation-grid choice.
    Plane,
}

impl fmt::Display for LowFrequency {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            LowFrequency::BSpline => "bspline",
            LowFrequency::Plane => "plane",
        })
    }
}

pub(crate) fn format_name(f: CloudFormat) -> &'static str {
    match f {
        CloudFormat::Xyz => "xyz",
        CloudFormat::PlyAscii => "ply-ascii",
        CloudFormat::PlyBinary => "ply",
    }
}

pub(crate) fn format_extension(f: CloudFormat) -> &'static str {
    match f {
        CloudFormat::Xyz => "xyz",
        _ => "ply",
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PipelineConfig {
    pub input: PathBuf,
    pub output_dir: PathBuf,
    /// Voxel edge for the fitting sample, relative to the longest box axis.
    pub voxel_ratio: f64,
    pub fit: FitConfig,
    pub low_frequency: LowFrequency,
    pub sign: SignConfig,
    /// Neighbors used for the parameter-space density estimate.
    pub density_k: usize,
    pub r_max: usize,
    /// The seed lives here; `inpaint.seed` is overwritten from `seed`.
    pub inpaint: InpaintConfig,
    pub density_factor: f64,
    pub halton_skip: u64,
    pub seed: u64,
    pub output_format: CloudFormat,
    pub dump_intermediates: bool,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            input: PathBuf::new(),
            output_dir: PathBuf::from("out"),
            voxel_ratio: 0.05,
            fit: FitConfig::default(),
            low_frequency: LowFrequency::BSpline,
            sign: SignConfig::default(),
            density_k: DEFAULT_DENSITY_K,
            r_max: DEFAULT_R_MAX,
            inpaint: InpaintConfig::default(),
            density_factor: 1.0,
            halton_skip: DEFAULT_HALTON_SKIP,
            seed: 42,
            output_format: CloudFormat::PlyBinary,
            dump_intermediates: false,
        }
    }
}

/// Every settable key, in the order they are echoed.
pub const CONFIG_KEYS: &[&str] = &[
    "input",
    "output_dir",
    "voxel_ratio",
    "control_m",
    "control_n",
    "degree",
    "fit_iterations",
    "regularization",
    "projection_grid",
    "projection_max_iter",
    "projection_tol",
    "low_frequency",
    "normal_k",
    "epsilon",
    "density_k",
    "r_max",
    "patch_size",
    "patchmatch_iterations",
    "refresh_passes",
    "solver_tol",
    "solver_max_iter",
    "density_factor",
    "halton_skip",
    "seed",
    "output_format",
    "dump_intermediates",
];

fn parse_num<T: std::str::FromStr>(key: &str, value: &str) -> Result<T> {
    value
        .parse()
        .map_err(|_| Error::InvalidParameter(format!("bad value for {key}: {value:?}")))
}

fn parse_bool(key: &str, value: &str) -> Result<bool> {
    match value {
        "1" | "true" | "yes" | "on" => Ok(true),
        "0" | "false" | "no" | "off" => Ok(false),
        _ => Err(Error::InvalidParameter(format!("bad value for {key}: {value:?}"))),
    }
}

impl PipelineConfig {
    /// Sets one value by key; dashes in the key are accepted for underscores.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let key = key.replace('-', "_");
        let value = value.trim();
        match key.as_str() {
            "input" => self.input = PathBuf::from(value),
            "output_dir" => self.output_dir = PathBuf::from(value),
            "voxel_ratio" => self.voxel_ratio = parse_num(&key, value)?,
            "control_m" => self.fit.m = parse_num(&key, value)?,
            "control_n" => self.fit.n = parse_num(&key, value)?,
            "degree" => self.fit.degree = parse_num(&key, value)?,
            "fit_iterations" => self.fit.iterations = parse_num(&key, value)?,
            "regularization" => {
                self.fit.regularization = match value {
                    "auto" => None,
                    v => Some(parse_num(&key, v)?),
                }
            }
            "projection_grid" => {
                let g = parse_num(&key, value)?;
                self.fit.projection.grid = (g, g);
                self.sign.projection.grid = (g, g);
            }
            "projection_max_iter" => {
                self.fit.projection.max_iter = parse_num(&key, value)?;
                self.sign.projection.max_iter = self.fit.projection.max_iter;
            }
            "projection_tol" => {
                self.fit.projection.tol = parse_num(&key, value)?;
                self.sign.projection.tol = self.fit.projection.tol;
            }
            "low_frequency" => {
                self.low_frequency = match value {
                    "bspline" => LowFrequency::BSpline,
                    "plane" => LowFrequency::Plane,
                    _ => {
                        return Err(Error::InvalidParameter(format!(
                            "low_frequency must be bspline or plane, got {value:?}"
                        )))
                    }
                }
            }
            "normal_k" => self.sign.normal_k = parse_num(&key, value)?,
            "epsilon" => self.sign.epsilon = parse_num(&key, value)?,
            "density_k" => self.density_k = parse_num(&key, value)?,
            "r_max" => self.r_max = parse_num(&key, value)?,
            "patch_size" => self.inpaint.patch_size = parse_num(&key, value)?,
            "patchmatch_iterations" => self.inpaint.iterations = parse_num(&key, value)?,
            "refresh_passes" => self.inpaint.refresh_passes = parse_num(&key, value)?,
            "solver_tol" => self.inpaint.solver_tol = parse_num(&key, value)?,
            "solver_max_iter" => self.inpaint.solver_max_iter = parse_num(&key, value)?,
            "density_factor" => self.density_factor = parse_num(&key, value)?,
            "halton_skip" => self.halton_skip = parse_num(&key, value)?,
            "seed" => self.seed = parse_num(&key, value)?,
            "output_format" => {
                self.output_format = match value {
                    "ply" | "ply-binary" => CloudFormat::PlyBinary,
                    "ply-ascii" => CloudFormat::PlyAscii,
                    "xyz" => CloudFormat::Xyz,
                    _ => return Err(Error::InvalidParameter(format!("unknown output format {value:?}"))),
                }
            }
            "dump_intermediates" => self.dump_intermediates = parse_bool(&key, value)?,
            _ => return Err(Error::InvalidParameter(format!("unknown config key {key:?}"))),
        }
        Ok(())
    }

    /// Applies `key = value` lines. Blank lines and `#` comments are skipped.
    pub fn apply_text(&mut self, text: &str, path: &Path) -> Result<()> {
        for (n, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| Error::parse(path, Location::Line(n + 1), "expected key = value"))?;
            self.set(key.trim(), value)
                .map_err(|e| Error::parse(path, Location::Line(n + 1), e.to_string()))?;
        }
        Ok(())
    }

    pub fn apply_file(&mut self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        self.apply_text(&text, path)
    }

    /// The inpainting settings with the run seed applied.
    pub fn inpaint_config(&self) -> InpaintConfig {
        InpaintConfig {
            seed: self.seed,
            ..self.inpaint
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.voxel_ratio > 0.0 && self.voxel_ratio <= 1.0) {
            return Err(Error::InvalidParameter(format!(
                "voxel_ratio must be in (0, 1], got {}",
                self.voxel_ratio
            )));
        }
        self.fit.validate()?;
        self.sign.validate()?;
        if self.density_k == 0 {
            return Err(Error::InvalidParameter("density_k must be >= 1".into()));
        }
        if self.r_max < 2 {
            return Err(Error::InvalidParameter(format!(
                "r_max must be >= 2, got {}",
                self.r_max
            )));
        }
        self.inpaint_config().validate()?;
        if !(self.density_factor >= 0.0 && self.density_factor.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "density_factor must be >= 0, got {}",
                self.density_factor
            )));
        }
        Ok(())
    }

    /// `(key, value)` for every key in [`CONFIG_KEYS`].
    pub fn entries(&self) -> Vec<(&'static str, String)> {
        CONFIG_KEYS
            .iter()
            .map(|&k| {
                let v = match k {
                    "input" => self.input.display().to_string(),
                    "output_dir" => self.output_dir.display().to_string(),
                    "voxel_ratio" => self.voxel_ratio.to_string(),
                    "control_m" => self.fit.m.to_string(),
                    "control_n" => self.fit.n.to_string(),
                    "degree" => self.fit.degree.to_string(),
                    "fit_iterations" => self.fit.iterations.to_string(),
                    "regularization" => self.fit.regularization.map_or("auto".into(), |l| l.to_string()),
                    "projection_grid" => self.fit.projection.grid.0.to_string(),
                    "projection_max_iter" => self.fit.projection.max_iter.to_string(),
                    "projection_tol" => self.fit.projection.tol.to_string(),
                    "low_frequency" => self.low_frequency.to_string(),
                    "normal_k" => self.sign.normal_k.to_string(),
                    "epsilon" => self.sign.epsilon.to_string(),
                    "density_k" => self.density_k.to_string(),
                    "r_max" => self.r_max.to_string(),
                    "patch_size" => self.inpaint.patch_size.to_string(),
                    "patchmatch_iterations" => self.inpaint.iterations.to_string(),
                    "refresh_passes" => self.inpaint.refresh_passes.to_string(),
                    "solver_tol" => self.inpaint.solver_tol.to_string(),
                    "solver_max_iter" => self.inpaint.solver_max_iter.to_string(),
                    "density_factor" => self.density_factor.to_string(),
                    "halton_skip" => self.halton_skip.to_string(),
                    "seed" => self.seed.to_string(),
                    "output_format" => format_name(self.output_format).to_string(),
                    "dump_intermediates" => self.dump_intermediates.to_string(),
                    _ => unreachable!("every key is listed"),
                };
                (k, v)
            })
            .collect()
    }
}
