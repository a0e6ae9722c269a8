//! Least-squares surface fitting with alternating fit / correct rounds.
//!
//! The fit step solves for the control net given fixed point parameters,
//! minimizing
//!
//! ```text
//! sum_i |S(u_i, v_i) - p_i|^2 + lambda * sum |second differences of B|^2
//! ```
//!
//! where the second differences run along both grid directions. The correct
//! step re-projects every point onto the new surface and keeps whichever of
//! the old and new parameters is closer.

use nalgebra::DMatrix;
use rayon::prelude::*;

use super::project::newton;
use super::{BSplineSurface, Footprint, ParamPoint, ProjectionConfig, Projector};
use crate::pointcloud::PointCloud;
use crate::{Error, Point3, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct FitConfig {
    /// Control grid is `(m + 1) x (n + 1)`.
    pub m: usize,
    pub n: usize,
    pub degree: usize,
    pub iterations: usize,
    /// Second-difference penalty weight. `None` selects
    /// [`default_regularization`].
    pub regularization: Option<f64>,
    pub projection: ProjectionConfig,
}

impl Default for FitConfig {
    fn default() -> Self {
        Self {
            m: 19,
            n: 19,
            degree: 3,
            iterations: 10,
            regularization: None,
            projection: ProjectionConfig::default(),
        }
    }
}

impl FitConfig {
    pub fn validate(&self) -> Result<()> {
        if self.degree == 0 || self.degree > 7 {
            return Err(Error::InvalidParameter(format!(
                "degree must be in 1..=7, got {}",
                self.degree
            )));
        }
        if self.m < self.degree || self.n < self.degree {
            return Err(Error::InvalidParameter(format!(
                "m = {}, n = {} must be >= degree {}",
                self.m, self.n, self.degree
            )));
        }
        if self.iterations == 0 {
            return Err(Error::InvalidParameter("fit iterations must be >= 1".into()));
        }
        if let Some(l) = self.regularization {
            if !(l >= 0.0 && l.is_finite()) {
                return Err(Error::InvalidParameter(format!("regularization must be >= 0, got {l}")));
            }
        }
        self.projection.validate()
    }

    pub fn lambda_for(&self, points: usize) -> f64 {
        self.regularization.unwrap_or_else(|| default_regularization(points))
    }
}

/// `1e-4` per data point, which keeps the penalty's weight relative to the
/// data term independent of cloud size and world units.
pub fn default_regularization(points: usize) -> f64 {
    1e-4 * points as f64
}

/// Control net on a regular grid over the footprint, each control point
/// lifted to the mean height of the points whose footprint position falls in
/// its cell (global mean height for empty cells).
pub fn initialize_surface(cloud: &PointCloud, footprint: &Footprint, cfg: &FitConfig) -> Result<BSplineSurface> {
    cloud.require_nonempty()?;
    cfg.validate()?;
    let (rows, cols) = (cfg.m + 1, cfg.n + 1);
    let mut sums = vec![0.0; rows * cols];
    let mut counts = vec![0usize; rows * cols];
    let mut total = 0.0;
    for p in &cloud.points {
        let (s, t) = footprint.normalize(p);
        let i = ((s * rows as f64).floor().max(0.0) as usize).min(rows - 1);
        let j = ((t * cols as f64).floor().max(0.0) as usize).min(cols - 1);
        let h = footprint.local(p)[2];
        sums[i * cols + j] += h;
        counts[i * cols + j] += 1;
        total += h;
    }
    let mean = total / cloud.len() as f64;
    let mut control = Vec::with_capacity(rows * cols);
    for i in 0..rows {
        for j in 0..cols {
            let k = i * cols + j;
            let h = if counts[k] > 0 {
                sums[k] / counts[k] as f64
            } else {
                mean
            };
            control.push(footprint.world(i as f64 / cfg.m as f64, j as f64 / cfg.n as f64, h));
        }
    }
    BSplineSurface::with_uniform_knots(cfg.degree, rows, cols, control)
}

/// Normalized footprint coordinates of every point, clamped to `[0,1]^2`.
pub fn parameterize_uniform(cloud: &PointCloud, footprint: &Footprint) -> Result<Vec<ParamPoint>> {
    cloud.require_nonempty()?;
    Ok(cloud
        .points
        .iter()
        .map(|p| {
            let (s, t) = footprint.normalize(p);
            ParamPoint::clamped(s, t)
        })
        .collect())
}

/// Result of one least-squares solve.
#[derive(Debug, Clone)]
pub struct FitStep {
    pub surface: BSplineSurface,
    /// Data term plus weighted penalty.
    pub objective: f64,
    pub data_term: f64,
}

/// Squared second differences of the control net along both directions.
pub(crate) fn smoothness_penalty(s: &BSplineSurface) -> f64 {
    let (rows, cols) = (s.rows(), s.cols());
    let c = s.control();
    let mut total = 0.0;
    for i in 0..rows {
        for j in 0..cols {
            let b = c[i * cols + j].coords;
            if i > 0 && i + 1 < rows {
                total += (c[(i - 1) * cols + j].coords - 2.0 * b + c[(i + 1) * cols + j].coords).norm_squared();
            }
            if j > 0 && j + 1 < cols {
                total += (c[i * cols + j - 1].coords - 2.0 * b + c[i * cols + j + 1].coords).norm_squared();
            }
        }
    }
    total
}

pub(crate) fn data_term(s: &BSplineSurface, cloud: &PointCloud, params: &[ParamPoint]) -> f64 {
    cloud
        .points
        .par_iter()
        .zip(params.par_iter())
        .map(|(p, &t)| (s.eval_unchecked(t) - p).norm_squared())
        .collect::<Vec<_>>()
        .iter()
        .sum()
}

/// Objective of a surface at fixed parameters.
pub(crate) fn objective(s: &BSplineSurface, cloud: &PointCloud, params: &[ParamPoint], lambda: f64) -> (f64, f64) {
    let data = data_term(s, cloud, params);
    let pen = if lambda > 0.0 { smoothness_penalty(s) } else { 0.0 };
    (data + lambda * pen, data)
}

/// Solves the regularized least-squares problem for the control net via the
/// normal equations and a Cholesky factorization. Degree, knots and grid size
/// are taken from `surface`.
pub fn fit_step(cloud: &PointCloud, params: &[ParamPoint], lambda: f64, surface: &BSplineSurface) -> Result<FitStep> {
    if params.len() != cloud.len() {
        return Err(Error::InvalidParameter(format!(
            "{} params for {} points",
            params.len(),
            cloud.len()
        )));
    }
    cloud.require_nonempty()?;
    if !(lambda >= 0.0) {
        return Err(Error::InvalidParameter(format!("lambda must be >= 0, got {lambda}")));
    }
    let (rows, cols) = (surface.rows(), surface.cols());
    let (du, dv) = (surface.degree_u(), surface.degree_v());
    let unknowns = rows * cols;
    let mut normal = DMatrix::<f64>::zeros(unknowns, unknowns);
    let mut rhs = DMatrix::<f64>::zeros(unknowns, 3);
    let mut idx = Vec::with_capacity((du + 1) * (dv + 1));
    let mut w = Vec::with_capacity((du + 1) * (dv + 1));
    for (p, &t) in cloud.points.iter().zip(params) {
        let (i0, nu, j0, nv) = surface.basis_at(t, 0);
        idx.clear();
        w.clear();
        for a in 0..=du {
            for b in 0..=dv {
                idx.push((i0 + a) * cols + j0 + b);
                w.push(nu[0][a] * nv[0][b]);
            }
        }
        for (x, (&ra, &wa)) in idx.iter().zip(&w).enumerate() {
            for (&rb, &wb) in idx[x..].iter().zip(&w[x..]) {
                normal[(ra, rb)] += wa * wb;
            }
            for k in 0..3 {
                rhs[(ra, k)] += wa * p[k];
            }
        }
    }
    // mirror the upper triangle
    for a in 0..unknowns {
        for b in 0..a {
            normal[(a, b)] = normal[(b, a)];
        }
    }
    if lambda == 0.0 {
        if let Some(k) = (0..unknowns).find(|&k| normal[(k, k)] == 0.0) {
            return Err(Error::SingularSystem(format!(
                "control point ({}, {}) has no data support and lambda is 0",
                k / cols,
                k % cols
            )));
        }
    } else {
        add_penalty(&mut normal, rows, cols, lambda);
    }
    let chol = normal
        .cholesky()
        .ok_or_else(|| Error::SingularSystem("normal matrix is not positive definite".into()))?;
    let solution = chol.solve(&rhs);
    let control: Vec<Point3> = (0..unknowns)
        .map(|k| Point3::new(solution[(k, 0)], solution[(k, 1)], solution[(k, 2)]))
        .collect();
    if control.iter().any(|p| !p.coords.iter().all(|c| c.is_finite())) {
        return Err(Error::SingularSystem("solution is not finite".into()));
    }
    let mut fitted = surface.clone();
    fitted.set_control(control);
    let (objective, data_term) = objective(&fitted, cloud, params, lambda);
    Ok(FitStep {
        surface: fitted,
        objective,
        data_term,
    })
}

/// Adds `lambda * D^T D` for the second-difference operator `D`.
fn add_penalty(normal: &mut DMatrix<f64>, rows: usize, cols: usize, lambda: f64) {
    let mut stencil = |ids: [usize; 3]| {
        let coef = [1.0, -2.0, 1.0];
        for a in 0..3 {
            for b in 0..3 {
                normal[(ids[a], ids[b])] += lambda * coef[a] * coef[b];
            }
        }
    };
    for i in 0..rows {
        for j in 0..cols {
            let k = i * cols + j;
            if i > 0 && i + 1 < rows {
                stencil([k - cols, k, k + cols]);
            }
            if j > 0 && j + 1 < cols {
                stencil([k - 1, k, k + 1]);
            }
        }
    }
}

/// Outcome of [`fit_surface`].
#[derive(Debug, Clone)]
pub struct FitOutcome {
    pub surface: BSplineSurface,
    pub footprint: Footprint,
    /// Parameters of each point on the final surface.
    pub params: Vec<ParamPoint>,
    pub lambda: f64,
    /// Objective of the initial surface at the uniform parameters.
    pub initial_objective: f64,
    /// Objective after each fit step.
    pub objectives: Vec<f64>,
}

/// Fits a surface to `cloud` using its own footprint.
pub fn fit_surface(cloud: &PointCloud, cfg: &FitConfig) -> Result<FitOutcome> {
    cloud.require_nonempty()?;
    let footprint = Footprint::from_cloud(cloud)?;
    fit_surface_in(cloud, footprint, cfg)
}

/// Fits a surface spanning a given footprint, e.g. that of a denser cloud
/// from which `cloud` was downsampled.
pub fn fit_surface_in(cloud: &PointCloud, footprint: Footprint, cfg: &FitConfig) -> Result<FitOutcome> {
    cfg.validate()?;
    cloud.require_nonempty()?;
    let lambda = cfg.lambda_for(cloud.len());
    let mut surface = initialize_surface(cloud, &footprint, cfg)?;
    let mut params = parameterize_uniform(cloud, &footprint)?;
    let (initial_objective, _) = objective(&surface, cloud, &params, lambda);
    log::debug!("fit: lambda {lambda:e}, initial objective {initial_objective:e}");
    let mut objectives = Vec::with_capacity(cfg.iterations);
    for iteration in 0..cfg.iterations {
        let step = fit_step(cloud, &params, lambda, &surface)?;
        surface = step.surface;
        objectives.push(step.objective);
        log::info!(
            "fit iteration {}: objective {:.6e} (data {:.6e})",
            iteration + 1,
            step.objective,
            step.data_term
        );
        params = correct_params(&surface, cloud, &params, cfg.projection)?;
    }
    Ok(FitOutcome {
        surface,
        footprint,
        params,
        lambda,
        initial_objective,
        objectives,
    })
}

/// Restricts `s` to the parameter box spanned by the projections of `cloud`.
///
/// Parameter correction lets the fitted net slide past the data at the
/// border; trimming maps the cloud's outline back onto the edges of the
/// parameter square.
pub fn trim_to_cloud(s: &BSplineSurface, cloud: &PointCloud, cfg: ProjectionConfig) -> Result<BSplineSurface> {
    cloud.require_nonempty()?;
    let projector = Projector::new(s, cfg)?;
    let params: Vec<ParamPoint> = cloud.points.par_iter().map(|p| projector.project(p).param).collect();
    let (mut u, mut v) = ([1.0f64, 0.0f64], [1.0f64, 0.0f64]);
    for t in &params {
        u = [u[0].min(t.u), u[1].max(t.u)];
        v = [v[0].min(t.v), v[1].max(t.v)];
    }
    if !(u[0] < u[1]) {
        return Err(Error::DegenerateFootprint { axis: 'u' });
    }
    if !(v[0] < v[1]) {
        return Err(Error::DegenerateFootprint { axis: 'v' });
    }
    log::debug!("trimming surface to u [{}, {}], v [{}, {}]", u[0], u[1], v[0], v[1]);
    s.restrict(u, v)
}

/// Correcting step: project every point and keep the closer of the old and
/// projected parameters, so the data term never increases.
fn correct_params(
    surface: &BSplineSurface,
    cloud: &PointCloud,
    params: &[ParamPoint],
    cfg: ProjectionConfig,
) -> Result<Vec<ParamPoint>> {
    let projector = Projector::new(surface, cfg)?;
    Ok(cloud
        .points
        .par_iter()
        .zip(params.par_iter())
        .map(|(p, &old)| {
            let old_d = (surface.eval_unchecked(old) - p).norm_squared();
            let fresh = projector.project(p);
            // polishing the previous parameter as well keeps parameters that
            // already sit in the right basin
            let polished = newton(surface, p, old, cfg.max_iter, cfg.tol);
            let mut best = (old, old_d);
            for cand in [fresh, polished] {
                let d = cand.distance * cand.distance;
                if d < best.1 {
                    best = (cand.param, d);
                }
            }
            best.0
        })
        .collect())
}
