//! Objective quality measures between point clouds and of surface fits.
//!
//! The reference cloud comes first in every two-cloud measure: its bounding
//! box supplies the GPSNR peak and the NSHD normalizer.

use std::fmt;
use std::fs;
use std::io::{BufWriter, Write};
use std::path::Path;

use rayon::prelude::*;

use crate::bspline::{BSplineSurface, ProjectionConfig, Projector};
use crate::heightfield::HeightField;
use crate::pointcloud::io::format_sig9;
use crate::pointcloud::{compute_obb, estimate_normals, KdIndex, PointCloud, DEFAULT_NORMAL_K};
use crate::{Error, Result, Vec3};

/// OBB volumes below this are treated as flat.
pub const DEGENERATE_VOLUME: f64 = 1e-18;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Gpsnr {
    Db(f64),
    /// The error vanished relative to the peak.
    Saturated,
}

impl Gpsnr {
    pub fn db(self) -> Option<f64> {
        match self {
            Gpsnr::Db(v) => Some(v),
            Gpsnr::Saturated => None,
        }
    }

    /// Saturated maps to +inf, convenient for comparisons.
    pub fn as_f64(self) -> f64 {
        self.db().unwrap_or(f64::INFINITY)
    }
}

impl fmt::Display for Gpsnr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Gpsnr::Db(v) => write!(f, "{}", format_sig9(*v)),
            Gpsnr::Saturated => write!(f, "saturated"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GpsnrOptions {
    /// Average both directions; otherwise only reference-to-result errors
    /// measured against the result's planes.
    pub symmetric: bool,
    /// Take the peak from the box around both clouds. With both clouds
    /// carrying normals this makes the measure symmetric under swapping.
    pub union_obb: bool,
    /// Neighborhood size for clouds that arrive without normals.
    pub normal_k: usize,
}

impl Default for GpsnrOptions {
    fn default() -> Self {
        Self {
            symmetric: true,
            union_obb: false,
            normal_k: DEFAULT_NORMAL_K,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GpsnrDetail {
    pub value: Gpsnr,
    /// Mean squared point-to-plane error.
    pub error: f64,
    /// Box diagonal used as the peak.
    pub peak: f64,
}

fn require(cloud: &PointCloud) -> Result<()> {
    if cloud.is_empty() {
        Err(Error::EmptyCloud)
    } else {
        Ok(())
    }
}

fn normals_of(cloud: &PointCloud, k: usize) -> Result<Vec<Vec3>> {
    match &cloud.normals {
        Some(n) => Ok(n.clone()),
        // signs do not matter for squared plane distances
        None => Ok(estimate_normals(cloud, k.min(cloud.len().saturating_sub(1)).max(3))?
            .0
            .normals
            .expect("estimation attaches normals")),
    }
}

/// Mean of `((p - q) . n_q)^2` over `from`, with `q` the nearest point of `to`.
fn plane_error(from: &PointCloud, to: &PointCloud, to_normals: &[Vec3]) -> f64 {
    let index = KdIndex::build(&to.points);
    let sum: f64 = from
        .points
        .par_iter()
        .map(|p| {
            let nb = index.nearest(p).expect("target is nonempty");
            let d = (p - to.points[nb.index]).dot(&to_normals[nb.index]);
            d * d
        })
        .collect::<Vec<_>>()
        .iter()
        .sum();
    sum / from.len() as f64
}

pub fn gpsnr(reference: &PointCloud, result: &PointCloud) -> Result<Gpsnr> {
    Ok(gpsnr_with(reference, result, &GpsnrOptions::default())?.value)
}

pub fn gpsnr_with(reference: &PointCloud, result: &PointCloud, opts: &GpsnrOptions) -> Result<GpsnrDetail> {
    require(reference)?;
    require(result)?;
    let result_normals = normals_of(result, opts.normal_k)?;
    let forward = plane_error(reference, result, &result_normals);
    let error = if opts.symmetric {
        let reference_normals = normals_of(reference, opts.normal_k)?;
        0.5 * (forward + plane_error(result, reference, &reference_normals))
    } else {
        forward
    };
    let peak = if opts.union_obb {
        let mut both = PointCloud::new(reference.points.clone());
        both.points.extend_from_slice(&result.points);
        compute_obb(&both)?.diagonal()
    } else {
        compute_obb(reference)?.diagonal()
    };
    let value = if error < 1e-24 * peak * peak {
        Gpsnr::Saturated
    } else {
        Gpsnr::Db(10.0 * (peak * peak / error).log10())
    };
    Ok(GpsnrDetail { value, error, peak })
}

/// Largest nearest-neighbor distance from `from` into `to`.
pub fn one_sided_hausdorff(from: &PointCloud, to: &PointCloud) -> Result<f64> {
    require(from)?;
    require(to)?;
    Ok(error_map(from, to)?.into_iter().fold(0.0, f64::max))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NshdDetail {
    pub value: f64,
    pub forward: f64,
    pub backward: f64,
    pub normalizer: f64,
    /// The reference box was flat and its diagonal replaced the volume.
    pub volume_fallback: bool,
}

pub fn nshd(reference: &PointCloud, result: &PointCloud) -> Result<f64> {
    Ok(nshd_detail(reference, result)?.value)
}

/// Symmetric Hausdorff distance divided by the reference box volume.
pub fn nshd_detail(reference: &PointCloud, result: &PointCloud) -> Result<NshdDetail> {
    let forward = one_sided_hausdorff(reference, result)?;
    let backward = one_sided_hausdorff(result, reference)?;
    let obb = compute_obb(reference)?;
    let volume = obb.volume();
    let volume_fallback = volume < DEGENERATE_VOLUME;
    let normalizer = if volume_fallback { obb.diagonal() } else { volume };
    let h = forward.max(backward);
    let value = if h == 0.0 { 0.0 } else { h / normalizer };
    Ok(NshdDetail {
        value,
        forward,
        backward,
        normalizer,
        volume_fallback,
    })
}

/// Root mean squared point-to-surface distance over the cloud's box
/// diagonal, clamped to `[0, 1]`.
pub fn nrmse_fit(cloud: &PointCloud, s: &BSplineSurface) -> Result<f64> {
    require(cloud)?;
    let projector = Projector::new(s, ProjectionConfig::default())?;
    let sum: f64 = cloud
        .points
        .par_iter()
        .map(|p| projector.project(p).distance.powi(2))
        .collect::<Vec<_>>()
        .iter()
        .sum();
    let rms = (sum / cloud.len() as f64).sqrt();
    let diag = compute_obb(cloud)?.diagonal();
    if diag == 0.0 {
        return Ok(if rms == 0.0 { 0.0 } else { 1.0 });
    }
    Ok((rms / diag).clamp(0.0, 1.0))
}

/// RMSE over the cells known in both maps, optionally restricted by `mask`.
pub fn rmse_heightfields(a: &HeightField, b: &HeightField, mask: Option<&[bool]>) -> Result<f64> {
    if a.resolution() != b.resolution() {
        return Err(Error::InvalidParameter(format!(
            "height maps differ in resolution ({} vs {})",
            a.resolution(),
            b.resolution()
        )));
    }
    if let Some(m) = mask {
        if m.len() != a.cells().len() {
            return Err(Error::InvalidParameter(
                "mask size does not match the height maps".into(),
            ));
        }
    }
    let (mut sum, mut n) = (0.0, 0usize);
    for (k, (x, y)) in a.cells().iter().zip(b.cells()).enumerate() {
        if x.is_nan() || y.is_nan() || mask.is_some_and(|m| !m[k]) {
            continue;
        }
        sum += (x - y).powi(2);
        n += 1;
    }
    if n == 0 {
        return Err(Error::InvalidParameter("height maps share no known cells".into()));
    }
    Ok((sum / n as f64).sqrt())
}

/// Distance from every result point to its nearest truth point.
pub fn error_map(result: &PointCloud, truth: &PointCloud) -> Result<Vec<f64>> {
    require(result)?;
    require(truth)?;
    let index = KdIndex::build(&truth.points);
    Ok(result
        .points
        .par_iter()
        .map(|p| index.nearest(p).expect("truth is nonempty").distance())
        .collect())
}

pub fn write_error_map(path: impl AsRef<Path>, cloud: &PointCloud, distances: &[f64]) -> Result<()> {
    let path = path.as_ref();
    if distances.len() != cloud.len() {
        return Err(Error::InvalidParameter(format!(
            "{} distances for {} points",
            distances.len(),
            cloud.len()
        )));
    }
    let file = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    for (p, d) in cloud.points.iter().zip(distances) {
        writeln!(
            w,
            "{} {} {} {}",
            format_sig9(p.x),
            format_sig9(p.y),
            format_sig9(p.z),
            format_sig9(*d)
        )
        .map_err(|e| Error::io(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

#[derive(Debug, Clone, PartialEq)]
pub struct MetricReport {
    pub gpsnr: GpsnrDetail,
    pub nshd: NshdDetail,
    /// Fit quality of the surface against the reference, when a surface is given.
    pub nrmse: Option<f64>,
    /// Height-map difference, when two maps are given.
    pub rmse: Option<f64>,
    pub error_map: Vec<f64>,
}

impl MetricReport {
    pub fn compute(
        reference: &PointCloud,
        result: &PointCloud,
        surface: Option<&BSplineSurface>,
        heights: Option<(&HeightField, &HeightField)>,
        opts: &GpsnrOptions,
    ) -> Result<Self> {
        Ok(Self {
            gpsnr: gpsnr_with(reference, result, opts)?,
            nshd: nshd_detail(reference, result)?,
            nrmse: surface.map(|s| nrmse_fit(reference, s)).transpose()?,
            rmse: heights.map(|(a, b)| rmse_heightfields(a, b, None)).transpose()?,
            error_map: error_map(result, reference)?,
        })
    }

    pub fn max_error(&self) -> f64 {
        self.error_map.iter().copied().fold(0.0, f64::max)
    }

    pub fn mean_error(&self) -> f64 {
        if self.error_map.is_empty() {
            return 0.0;
        }
        self.error_map.iter().sum::<f64>() / self.error_map.len() as f64
    }

    pub fn to_key_value(&self) -> String {
        let opt = |v: Option<f64>| v.map_or("none".to_string(), format_sig9);
        let lines = [
            format!("gpsnr_db={}", self.gpsnr.value),
            format!("gpsnr_error={}", format_sig9(self.gpsnr.error)),
            format!("gpsnr_peak={}", format_sig9(self.gpsnr.peak)),
            format!("nshd={}", format_sig9(self.nshd.value)),
            format!("hausdorff_forward={}", format_sig9(self.nshd.forward)),
            format!("hausdorff_backward={}", format_sig9(self.nshd.backward)),
            format!("nshd_normalizer={}", format_sig9(self.nshd.normalizer)),
            format!("nshd_volume_fallback={}", self.nshd.volume_fallback),
            format!("nrmse={}", opt(self.nrmse)),
            format!("rmse={}", opt(self.rmse)),
            format!("error_mean={}", format_sig9(self.mean_error())),
            format!("error_max={}", format_sig9(self.max_error())),
            format!("points={}", self.error_map.len()),
        ];
        let mut out = lines.join("\n");
        out.push('\n');
        out
    }

    /// One header line and one data row; missing values are `nan`, a
    /// saturated GPSNR is `inf`.
    pub fn to_csv(&self) -> String {
        let num = |v: Option<f64>| v.map_or("nan".to_string(), format_sig9);
        let gpsnr = match self.gpsnr.value {
            Gpsnr::Db(v) => format_sig9(v),
            Gpsnr::Saturated => "inf".into(),
        };
        format!(
            "gpsnr_db,nshd,nrmse,rmse\n{gpsnr},{},{},{}\n",
            format_sig9(self.nshd.value),
            num(self.nrmse),
            num(self.rmse)
        )
    }
}
