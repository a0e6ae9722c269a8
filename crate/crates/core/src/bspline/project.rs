//! Closest-point projection onto a surface: the nearest sample of a uniform
//! parameter grid seeds a damped two-variable Newton iteration on the squared
//! distance.

use super::{BSplineSurface, ParamPoint};
use crate::pointcloud::KdIndex;
use crate::{Error, Point3, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ProjectionConfig {
    /// Seed grid resolution `(zeta, eta)`: samples at `(k/zeta, l/eta)`.
    pub grid: (usize, usize),
    pub max_iter: usize,
    /// Stop once the accepted parameter step is shorter than this.
    pub tol: f64,
}

impl Default for ProjectionConfig {
    fn default() -> Self {
        Self {
            grid: (64, 64),
            max_iter: 30,
            tol: 1e-10,
        }
    }
}

impl ProjectionConfig {
    pub fn validate(&self) -> Result<()> {
        if self.grid.0 == 0 || self.grid.1 == 0 {
            return Err(Error::InvalidParameter("projection grid must be at least 1x1".into()));
        }
        if !(self.tol > 0.0) {
            return Err(Error::InvalidParameter(format!(
                "projection tol must be > 0, got {}",
                self.tol
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ProjectionResult {
    pub param: ParamPoint,
    pub foot: Point3,
    pub distance: f64,
    pub iterations_used: usize,
    pub converged: bool,
}

const MAX_HALVINGS: usize = 20;

/// Reusable projector: the seed grid is sampled once per surface.
pub struct Projector<'a> {
    surface: &'a BSplineSurface,
    config: ProjectionConfig,
    params: Vec<ParamPoint>,
    index: KdIndex,
}

impl<'a> Projector<'a> {
    pub fn new(surface: &'a BSplineSurface, config: ProjectionConfig) -> Result<Self> {
        config.validate()?;
        let (zeta, eta) = config.grid;
        let mut params = Vec::with_capacity((zeta + 1) * (eta + 1));
        for k in 0..=zeta {
            for l in 0..=eta {
                params.push(ParamPoint {
                    u: k as f64 / zeta as f64,
                    v: l as f64 / eta as f64,
                });
            }
        }
        let samples: Vec<Point3> = params.iter().map(|&p| surface.eval_unchecked(p)).collect();
        Ok(Self {
            surface,
            config,
            index: KdIndex::build(&samples),
            params,
        })
    }

    pub fn surface(&self) -> &BSplineSurface {
        self.surface
    }

    /// Best grid sample: parameter and distance.
    pub fn seed(&self, p: &Point3) -> (ParamPoint, f64) {
        let nb = self.index.nearest(p).expect("grid is never empty");
        (self.params[nb.index], nb.distance())
    }

    pub fn project(&self, p: &Point3) -> ProjectionResult {
        let (seed, _) = self.seed(p);
        newton(self.surface, p, seed, self.config.max_iter, self.config.tol)
    }
}

/// Projects a single point. Builds a fresh seed grid; use [`Projector`] for
/// many points.
pub fn project_point(surface: &BSplineSurface, p: &Point3, config: ProjectionConfig) -> Result<ProjectionResult> {
    Ok(Projector::new(surface, config)?.project(p))
}

/// Damped Newton on `f(u,v) = |S(u,v) - p|^2` with box constraints.
///
/// Coordinates pinned at a bound whose gradient points outward are held fixed
/// for the step. An indefinite Hessian falls back to its Gauss–Newton part.
/// A step is accepted only if it does not increase `f`.
pub(crate) fn newton(
    surface: &BSplineSurface,
    p: &Point3,
    seed: ParamPoint,
    max_iter: usize,
    tol: f64,
) -> ProjectionResult {
    let mut cur = seed;
    let mut d = surface.partials_unchecked(cur, 2);
    let mut f = (d.point - p).norm_squared();
    let mut converged = false;
    let mut iterations = 0;
    while iterations < max_iter {
        iterations += 1;
        let r = d.point - p;
        let g = [r.dot(&d.su), r.dot(&d.sv)];
        let jtj = [d.su.dot(&d.su), d.su.dot(&d.sv), d.sv.dot(&d.sv)];
        let full = [jtj[0] + r.dot(&d.suu), jtj[1] + r.dot(&d.suv), jtj[2] + r.dot(&d.svv)];

        let coord = [cur.u, cur.v];
        let free = [0, 1].map(|k| !((coord[k] <= 0.0 && g[k] > 0.0) || (coord[k] >= 1.0 && g[k] < 0.0)));
        let step = match solve_step(full, g, free).or_else(|| solve_step(jtj, g, free)) {
            Some(s) => s,
            None => {
                converged = g[0] == 0.0 && g[1] == 0.0;
                break;
            }
        };
        if step[0].hypot(step[1]) < tol {
            converged = true;
            break;
        }
        let mut t = 1.0;
        let mut accepted = None;
        for _ in 0..=MAX_HALVINGS {
            let cand = ParamPoint::clamped(cur.u + t * step[0], cur.v + t * step[1]);
            let dc = surface.partials_unchecked(cand, 2);
            let fc = (dc.point - p).norm_squared();
            if fc <= f {
                accepted = Some((cand, dc, fc));
                break;
            }
            t *= 0.5;
        }
        let Some((cand, dc, fc)) = accepted else {
            break;
        };
        let moved = (cand.u - cur.u).hypot(cand.v - cur.v);
        cur = cand;
        d = dc;
        f = fc;
        if moved < tol {
            converged = true;
            break;
        }
    }
    ProjectionResult {
        param: cur,
        foot: d.point,
        distance: f.sqrt(),
        iterations_used: iterations,
        converged,
    }
}

/// Newton step `-H^-1 g` restricted to the free coordinates; `None` if the
/// reduced Hessian is not positive definite.
fn solve_step(h: [f64; 3], g: [f64; 2], free: [bool; 2]) -> Option<[f64; 2]> {
    match free {
        [true, true] => {
            let det = h[0] * h[2] - h[1] * h[1];
            let scale = h[0].abs().max(h[2].abs());
            if h[0] <= 0.0 || det <= 1e-14 * scale * scale {
                return None;
            }
            Some([-(h[2] * g[0] - h[1] * g[1]) / det, -(h[0] * g[1] - h[1] * g[0]) / det])
        }
        [true, false] => (h[0] > 0.0).then(|| [-g[0] / h[0], 0.0]),
        [false, true] => (h[2] > 0.0).then(|| [0.0, -g[1] / h[2]]),
        [false, false] => Some([0.0, 0.0]),
    }
}
