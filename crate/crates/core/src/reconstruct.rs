//! Point synthesis inside former holes: Halton samples in parameter space are
//! lifted to `S(alpha) + I(alpha) * n(alpha)`.

use rayon::prelude::*;

use crate::bspline::{BSplineSurface, ParamPoint};
use crate::heightfield::HeightField;
use crate::pointcloud::PointCloud;
use crate::{Error, Point3, Result, Vec3};

/// Leading Halton indices skipped by default.
pub const DEFAULT_HALTON_SKIP: u64 = 20;

/// Radical inverse of `index` in `base`.
pub fn radical_inverse(mut index: u64, base: u64) -> f64 {
    let inv = 1.0 / base as f64;
    let mut f = inv;
    let mut out = 0.0;
    while index > 0 {
        out += (index % base) as f64 * f;
        index /= base;
        f *= inv;
    }
    out
}

/// Endless Halton stream in bases 2 and 3 starting at index `skip + 1`.
#[derive(Debug, Clone)]
pub struct HaltonStream {
    next: u64,
}

impl HaltonStream {
    pub fn new(skip: u64) -> Self {
        Self { next: skip + 1 }
    }
}

impl Iterator for HaltonStream {
    type Item = ParamPoint;

    fn next(&mut self) -> Option<ParamPoint> {
        let i = self.next;
        self.next += 1;
        Some(ParamPoint {
            u: radical_inverse(i, 2),
            v: radical_inverse(i, 3),
        })
    }
}

pub fn halton_sequence(count: usize, skip: u64) -> Vec<ParamPoint> {
    HaltonStream::new(skip).take(count).collect()
}

/// Unit normal `S_u x S_v / |S_u x S_v|`.
pub fn surface_normal(s: &BSplineSurface, p: ParamPoint) -> Result<Vec3> {
    let d = s.derivatives(p, 1)?;
    let n = d.su.cross(&d.sv);
    let len = n.norm();
    if !(len >= 1e-12) {
        return Err(Error::DegenerateTangent { u: p.u, v: p.v });
    }
    Ok(n / len)
}

/// Bilinear interpolation between cell centers, clamped at the border.
pub fn sample_intensity(h: &HeightField, p: ParamPoint) -> Result<f64> {
    let r = h.resolution();
    let lattice = |t: f64| {
        let f = (t * r as f64 - 0.5).clamp(0.0, (r - 1) as f64);
        let i = (f.floor() as usize).min(r - 2);
        (i, f - i as f64)
    };
    let (x0, tx) = lattice(p.u);
    let (y0, ty) = lattice(p.v);
    let at = |x: usize, y: usize| {
        h.get(x, y)
            .ok_or_else(|| Error::InvalidParameter(format!("cell ({x}, {y}) is a hole")))
    };
    let bottom = at(x0, y0)? * (1.0 - tx) + at(x0 + 1, y0)? * tx;
    let top = at(x0, y0 + 1)? * (1.0 - tx) + at(x0 + 1, y0 + 1)? * tx;
    Ok(bottom * (1.0 - ty) + top * ty)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ReconstructionSample {
    pub param: ParamPoint,
    pub surface_point: Point3,
    pub normal: Vec3,
    pub intensity: f64,
    pub output_point: Point3,
}

pub fn reconstruct_sample(s: &BSplineSurface, h: &HeightField, p: ParamPoint) -> Result<ReconstructionSample> {
    let surface_point = s.evaluate(p)?;
    let normal = surface_normal(s, p)?;
    let intensity = sample_intensity(h, p)?;
    Ok(ReconstructionSample {
        param: p,
        surface_point,
        normal,
        intensity,
        output_point: surface_point + normal * intensity,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct FillReport {
    pub hole_cells: usize,
    pub target: usize,
    pub kept: usize,
    pub draws: usize,
}

/// Synthesizes new points in the hole cells of `before` using the filled
/// field `after`. The number of points matches the mean projection count of
/// the known cells, scaled by `density_factor`.
pub fn fill_holes(
    s: &BSplineSurface,
    before: &HeightField,
    after: &HeightField,
    density_factor: f64,
) -> Result<(Vec<ReconstructionSample>, FillReport)> {
    fill_holes_with_skip(s, before, after, density_factor, DEFAULT_HALTON_SKIP)
}

pub fn fill_holes_with_skip(
    s: &BSplineSurface,
    before: &HeightField,
    after: &HeightField,
    density_factor: f64,
    skip: u64,
) -> Result<(Vec<ReconstructionSample>, FillReport)> {
    fill_holes_capped(s, before, after, density_factor, skip, None)
}

pub(crate) fn fill_holes_capped(
    s: &BSplineSurface,
    before: &HeightField,
    after: &HeightField,
    density_factor: f64,
    skip: u64,
    cap: Option<usize>,
) -> Result<(Vec<ReconstructionSample>, FillReport)> {
    if before.resolution() != after.resolution() {
        return Err(Error::InvalidParameter(format!(
            "height fields differ in resolution ({} vs {})",
            before.resolution(),
            after.resolution()
        )));
    }
    if after.hole_count() > 0 {
        return Err(Error::InvalidParameter("filled height field still has holes".into()));
    }
    if !(density_factor >= 0.0 && density_factor.is_finite()) {
        return Err(Error::InvalidParameter(format!(
            "density factor must be >= 0, got {density_factor}"
        )));
    }
    let r = before.resolution();
    let hole_cells = before.hole_count();
    let target = (hole_cells as f64 * before.mean_count_per_known() * density_factor).round() as usize;
    let mut report = FillReport {
        hole_cells,
        target,
        ..Default::default()
    };
    if target == 0 {
        return Ok((Vec::new(), report));
    }
    // a lone hole cell is hit once per r^2 draws on average
    let cap = cap.unwrap_or((1000 * target).max(16 * r * r));
    let mut kept = Vec::with_capacity(target);
    for p in HaltonStream::new(skip) {
        if kept.len() == target || report.draws == cap {
            break;
        }
        report.draws += 1;
        let (x, y) = before.cell_of(p);
        if before.is_hole(x, y) {
            kept.push(p);
        }
    }
    report.kept = kept.len();
    if kept.len() < target {
        return Err(Error::HoleCoverageFailure {
            kept: kept.len(),
            target,
            draws: report.draws,
        });
    }
    let samples = kept
        .par_iter()
        .map(|&p| reconstruct_sample(s, after, p))
        .collect::<Result<Vec<_>>>()?;
    Ok((samples, report))
}

pub fn samples_to_cloud(samples: &[ReconstructionSample]) -> PointCloud {
    PointCloud::new(samples.iter().map(|s| s.output_point).collect())
}

/// One point per known cell, synthesized at the cell center: the densest
/// faithful resampling of the decomposition.
pub fn resynthesize_cell_centers(s: &BSplineSurface, h: &HeightField) -> Result<PointCloud> {
    let r = h.resolution();
    let mut params = Vec::new();
    let mut values = Vec::new();
    for y in 0..r {
        for x in 0..r {
            if let Some(v) = h.get(x, y) {
                params.push(ParamPoint {
                    u: (x as f64 + 0.5) / r as f64,
                    v: (y as f64 + 0.5) / r as f64,
                });
                values.push(v);
            }
        }
    }
    let points = params
        .par_iter()
        .zip(values.par_iter())
        .map(|(&p, &v)| Ok(s.evaluate(p)? + surface_normal(s, p)? * v))
        .collect::<Result<Vec<_>>>()?;
    Ok(PointCloud::new(points))
}
