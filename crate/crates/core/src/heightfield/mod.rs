//! High-frequency component: signed projection distances onto the fitted
//! surface, adaptive raster resolution and rasterization into a height map.

pub mod io;

use rayon::prelude::*;

use crate::bspline::{BSplineSurface, ParamPoint, ProjectionConfig, Projector};
use crate::pointcloud::{estimate_normals, orient_normals, KdIndex, PointCloud, DEFAULT_NORMAL_K};
use crate::{Error, Point3, Result, Vec3};

pub const DEFAULT_EPSILON: f64 = 1e-3;
pub const DEFAULT_DENSITY_K: usize = 8;
pub const DEFAULT_R_MAX: usize = 4096;

/// One point's projection onto the surface with its signed offset.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SignedProjection {
    pub param: ParamPoint,
    pub foot: Point3,
    pub signed_distance: f64,
    pub source_index: usize,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SignConfig {
    pub projection: ProjectionConfig,
    /// Neighbourhood size for foot-point normals.
    pub normal_k: usize,
    /// A projection is rejected when `1 - |n . R| >= epsilon`.
    pub epsilon: f64,
}

impl Default for SignConfig {
    fn default() -> Self {
        Self {
            projection: ProjectionConfig::default(),
            normal_k: DEFAULT_NORMAL_K,
            epsilon: DEFAULT_EPSILON,
        }
    }
}

impl SignConfig {
    pub fn validate(&self) -> Result<()> {
        self.projection.validate()?;
        if self.normal_k < 3 {
            return Err(Error::InvalidParameter(format!(
                "normal k must be >= 3, got {}",
                self.normal_k
            )));
        }
        if !(self.epsilon > 0.0 && self.epsilon <= 1.0) {
            return Err(Error::InvalidParameter(format!(
                "epsilon must be in (0, 1], got {}",
                self.epsilon
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct ProjectionReport {
    /// Source indices rejected by the validity test.
    pub invalid: Vec<usize>,
    pub valid: usize,
    pub non_converged: usize,
    pub max_distance: f64,
    /// Foot points whose normal neighbourhood was collinear.
    pub degenerate_normals: usize,
}

/// Projects every point, signs the distances with consistently oriented
/// foot-point normals and drops projections failing the validity test.
///
/// Foot-point normals come from PCA over the foot-point set, propagated along
/// its neighbour graph and then flipped as a whole to agree with the
/// surface's `S_u x S_v` side, so that positive heights point the same way as
/// the normals used when synthesizing points.
pub fn project_cloud(
    cloud: &PointCloud,
    surface: &BSplineSurface,
    cfg: &SignConfig,
) -> Result<(Vec<SignedProjection>, ProjectionReport)> {
    cloud.require_nonempty()?;
    cfg.validate()?;
    let projector = Projector::new(surface, cfg.projection)?;
    let results: Vec<_> = cloud.points.par_iter().map(|p| projector.project(p)).collect();
    let feet = PointCloud::new(results.iter().map(|r| r.foot).collect());

    let mut report = ProjectionReport {
        non_converged: results.iter().filter(|r| !r.converged).count(),
        max_distance: results.iter().map(|r| r.distance).fold(0.0, f64::max),
        ..Default::default()
    };
    let normals = foot_normals(
        &feet,
        surface,
        &results.iter().map(|r| r.param).collect::<Vec<_>>(),
        cfg,
        &mut report,
    )?;

    let (lo, hi) = surface.control_bounds();
    let zero_tol = 1e-10 * (hi - lo).norm().max(1.0);
    let mut out = Vec::with_capacity(cloud.len());
    for (i, (r, n)) in results.iter().zip(&normals).enumerate() {
        let signed = if r.distance <= zero_tol {
            0.0
        } else {
            let dir = (cloud.points[i] - r.foot) / r.distance;
            let cos = n.dot(&dir);
            if 1.0 - cos.abs() >= cfg.epsilon {
                report.invalid.push(i);
                continue;
            }
            if cos >= 0.0 {
                r.distance
            } else {
                -r.distance
            }
        };
        out.push(SignedProjection {
            param: r.param,
            foot: r.foot,
            signed_distance: signed,
            source_index: i,
        });
    }
    report.valid = out.len();
    if out.is_empty() {
        return Err(Error::EmptyProjection {
            invalid: report.invalid.len(),
        });
    }
    if !report.invalid.is_empty() {
        log::info!(
            "{} of {} projections failed the validity test",
            report.invalid.len(),
            cloud.len()
        );
    }
    Ok((out, report))
}

fn foot_normals(
    feet: &PointCloud,
    surface: &BSplineSurface,
    params: &[ParamPoint],
    cfg: &SignConfig,
    report: &mut ProjectionReport,
) -> Result<Vec<Vec3>> {
    let surface_normal = |t: ParamPoint| {
        let d = surface.derivatives(t, 1).expect("params lie in the unit square");
        d.su.cross(&d.sv)
    };
    if feet.len() < 4 {
        // too few feet for a neighbourhood: fall back to the surface normal
        return Ok(params.iter().map(|&t| surface_normal(t).normalize()).collect());
    }
    let k = cfg.normal_k.min(feet.len() - 1);
    let (with_normals, nr) = estimate_normals(feet, k)?;
    report.degenerate_normals = nr.degenerate.len();
    let (oriented, _) = orient_normals(&with_normals, k)?;
    let mut normals = oriented.normals.expect("orient_normals keeps normals");
    let agreement: f64 = normals
        .par_iter()
        .zip(params.par_iter())
        .map(|(n, &t)| n.dot(&surface_normal(t)).signum())
        .collect::<Vec<_>>()
        .iter()
        .sum();
    if agreement < 0.0 {
        normals.iter_mut().for_each(|n| *n = -*n);
    }
    Ok(normals)
}

/// Mean over points of the median distance to their `k` nearest neighbours
/// in parameter space.
pub fn estimate_density(params: &[ParamPoint], k: usize) -> Result<f64> {
    if k == 0 {
        return Err(Error::InvalidParameter("density k must be >= 1".into()));
    }
    if params.len() < k + 1 {
        return Err(Error::InvalidParameter(format!(
            "density estimate needs at least {} points, got {}",
            k + 1,
            params.len()
        )));
    }
    let pts: Vec<Point3> = params.iter().map(|t| Point3::new(t.u, t.v, 0.0)).collect();
    let index = KdIndex::build(&pts);
    let medians: Vec<f64> = pts
        .par_iter()
        .enumerate()
        .map(|(i, p)| {
            let mut nb = index.knn(p, k + 1);
            match nb.iter().position(|n| n.index == i) {
                Some(pos) => {
                    nb.remove(pos);
                }
                None => {
                    nb.pop();
                }
            }
            let d: Vec<f64> = nb.iter().map(|n| n.distance()).collect();
            if k % 2 == 1 {
                d[k / 2]
            } else {
                0.5 * (d[k / 2 - 1] + d[k / 2])
            }
        })
        .collect();
    Ok(medians.iter().sum::<f64>() / medians.len() as f64)
}

/// `r = round(1 / rho)` clamped to `[2, r_max]`.
pub fn choose_resolution(rho: f64, r_max: usize) -> Result<usize> {
    if !(rho > 0.0 && rho.is_finite()) {
        return Err(Error::InvalidParameter(format!("density must be positive, got {rho}")));
    }
    if r_max < 2 {
        return Err(Error::InvalidParameter(format!("r_max must be >= 2, got {r_max}")));
    }
    let r = (1.0 / rho).round();
    Ok(if r >= r_max as f64 { r_max } else { (r as usize).max(2) })
}

/// Square raster over parameter space. Cell `(x, y)` covers
/// `u in [x/r, (x+1)/r)`, `v in [y/r, (y+1)/r)` and is stored at `y * r + x`.
/// Holes are NaN.
#[derive(Debug, Clone, PartialEq)]
pub struct HeightField {
    resolution: usize,
    density: f64,
    cells: Vec<f64>,
    counts: Vec<u32>,
}

impl HeightField {
    /// `counts` of valued cells may be zero only for cells that were filled
    /// after rasterization.
    pub fn new(resolution: usize, density: f64, cells: Vec<f64>, counts: Vec<u32>) -> Result<Self> {
        if resolution < 2 {
            return Err(Error::InvalidParameter(format!(
                "resolution must be >= 2, got {resolution}"
            )));
        }
        let n = resolution * resolution;
        if cells.len() != n || counts.len() != n {
            return Err(Error::InvalidParameter(format!(
                "{}x{} field needs {n} cells and counts, got {} and {}",
                resolution,
                resolution,
                cells.len(),
                counts.len()
            )));
        }
        if let Some(i) = cells.iter().zip(&counts).position(|(c, &k)| c.is_nan() && k != 0) {
            return Err(Error::InvalidParameter(format!("hole cell {i} has a nonzero count")));
        }
        if cells.iter().any(|c| c.is_infinite()) {
            return Err(Error::InvalidParameter("infinite cell value".into()));
        }
        Ok(Self {
            resolution,
            density,
            cells,
            counts,
        })
    }

    /// Field from optional values; known cells get a count of one.
    pub fn from_values(resolution: usize, density: f64, values: &[Option<f64>]) -> Result<Self> {
        let cells = values.iter().map(|v| v.unwrap_or(f64::NAN)).collect();
        let counts = values.iter().map(|v| v.is_some() as u32).collect();
        Self::new(resolution, density, cells, counts)
    }

    pub fn resolution(&self) -> usize {
        self.resolution
    }

    pub fn density(&self) -> f64 {
        self.density
    }

    pub fn index(&self, x: usize, y: usize) -> usize {
        y * self.resolution + x
    }

    pub fn get(&self, x: usize, y: usize) -> Option<f64> {
        let v = self.cells[self.index(x, y)];
        (!v.is_nan()).then_some(v)
    }

    pub fn is_hole(&self, x: usize, y: usize) -> bool {
        self.cells[self.index(x, y)].is_nan()
    }

    pub fn count(&self, x: usize, y: usize) -> u32 {
        self.counts[self.index(x, y)]
    }

    /// Raw row-major cells, NaN for holes.
    pub fn cells(&self) -> &[f64] {
        &self.cells
    }

    pub fn counts(&self) -> &[u32] {
        &self.counts
    }

    pub fn hole_mask(&self) -> Vec<bool> {
        self.cells.iter().map(|c| c.is_nan()).collect()
    }

    pub fn hole_count(&self) -> usize {
        self.cells.iter().filter(|c| c.is_nan()).count()
    }

    pub fn known_count(&self) -> usize {
        self.cells.len() - self.hole_count()
    }

    /// Mean projection count over cells holding projections.
    pub fn mean_count_per_known(&self) -> f64 {
        let (sum, n) = self
            .counts
            .iter()
            .filter(|&&c| c > 0)
            .fold((0u64, 0u64), |(s, n), &c| (s + c as u64, n + 1));
        if n == 0 {
            0.0
        } else {
            sum as f64 / n as f64
        }
    }

    /// Known values rounded to `f32`, the precision of the HF01 format.
    pub fn quantized(&self) -> Self {
        let mut out = self.clone();
        out.cells.iter_mut().for_each(|c| *c = *c as f32 as f64);
        out
    }

    /// Copy with hole cells set from `fill` (one value per cell, only hole
    /// entries are read). Counts are kept.
    pub(crate) fn with_holes_filled(&self, fill: &[f64]) -> Self {
        let mut out = self.clone();
        for (c, &f) in out.cells.iter_mut().zip(fill) {
            if c.is_nan() {
                *c = f;
            }
        }
        out
    }

    /// Cell containing a parameter; `u = 1` maps to the last column.
    pub fn cell_of(&self, p: ParamPoint) -> (usize, usize) {
        (cell_index(p.u, self.resolution), cell_index(p.v, self.resolution))
    }
}

pub(crate) fn cell_index(t: f64, r: usize) -> usize {
    ((t * r as f64).floor().max(0.0) as usize).min(r - 1)
}

/// Bins projections into an `r x r` raster. An empty cell is a hole; a cell
/// with at least as many positive as non-positive distances takes its maximum,
/// otherwise its minimum.
pub fn rasterize(projections: &[SignedProjection], r: usize, density: f64) -> Result<HeightField> {
    if r < 2 {
        return Err(Error::InvalidParameter(format!("resolution must be >= 2, got {r}")));
    }
    if projections.is_empty() {
        return Err(Error::InvalidParameter("no projections to rasterize".into()));
    }
    let n = r * r;
    let mut pos = vec![0u32; n];
    let mut nonpos = vec![0u32; n];
    let mut max = vec![f64::NEG_INFINITY; n];
    let mut min = vec![f64::INFINITY; n];
    for p in projections {
        let k = cell_index(p.param.v, r) * r + cell_index(p.param.u, r);
        let d = p.signed_distance;
        if d > 0.0 {
            pos[k] += 1;
        } else {
            nonpos[k] += 1;
        }
        max[k] = max[k].max(d);
        min[k] = min[k].min(d);
    }
    let mut cells = vec![f64::NAN; n];
    let mut counts = vec![0u32; n];
    for k in 0..n {
        counts[k] = pos[k] + nonpos[k];
        if counts[k] > 0 {
            cells[k] = if pos[k] >= nonpos[k] { max[k] } else { min[k] };
        }
    }
    HeightField::new(r, density, cells, counts)
}
