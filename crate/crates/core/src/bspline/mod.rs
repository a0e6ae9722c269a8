//! Tensor-product B-spline surfaces over `[0,1]^2` with clamped knots.

mod fit;
mod footprint;
pub mod io;
mod project;

pub use fit::{
    default_regularization, fit_step, fit_surface, fit_surface_in, initialize_surface, parameterize_uniform,
    trim_to_cloud, FitConfig, FitOutcome, FitStep,
};
pub use footprint::Footprint;
pub use project::{project_point, ProjectionConfig, ProjectionResult, Projector};

use crate::{Error, Point3, Result, Vec3};

/// Parameter pair in the unit square.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ParamPoint {
    pub u: f64,
    pub v: f64,
}

impl ParamPoint {
    pub fn new(u: f64, v: f64) -> Result<Self> {
        let p = Self { u, v };
        p.check()?;
        Ok(p)
    }

    /// Clamps both coordinates into `[0,1]`; NaN maps to 0.
    pub fn clamped(u: f64, v: f64) -> Self {
        let c = |t: f64| if t.is_nan() { 0.0 } else { t.clamp(0.0, 1.0) };
        Self { u: c(u), v: c(v) }
    }

    fn check(&self) -> Result<()> {
        if (0.0..=1.0).contains(&self.u) && (0.0..=1.0).contains(&self.v) {
            Ok(())
        } else {
            Err(Error::InvalidParameter(format!(
                "parameter ({}, {}) outside [0,1]^2",
                self.u, self.v
            )))
        }
    }
}

/// Clamped knot vector with uniform interior knots for `count` control points.
pub fn clamped_uniform_knots(count: usize, degree: usize) -> Vec<f64> {
    assert!(count > degree, "need more control points than the degree");
    let spans = count - degree;
    let mut knots = vec![0.0; degree + 1];
    knots.extend((1..spans).map(|i| i as f64 / spans as f64));
    knots.extend(std::iter::repeat_n(1.0, degree + 1));
    knots
}

/// Cox–de Boor value of basis function `i` of `degree` at `t`.
///
/// Spans are half-open except at the final knot, where the last non-empty
/// span is closed so that the last basis function evaluates to 1.
pub fn basis(knots: &[f64], degree: usize, i: usize, t: f64) -> Result<f64> {
    let (first, last) = (knots[0], knots[knots.len() - 1]);
    if !(t >= first && t <= last) {
        return Err(Error::InvalidParameter(format!(
            "t = {t} outside knot range [{first}, {last}]"
        )));
    }
    if i + degree + 1 >= knots.len() {
        return Err(Error::InvalidParameter(format!("basis index {i} out of range")));
    }
    let last_span = (0..knots.len() - 1)
        .rev()
        .find(|&j| knots[j] < knots[j + 1])
        .unwrap_or(0);
    Ok(cox_de_boor(knots, degree, i, t, last_span))
}

fn cox_de_boor(knots: &[f64], degree: usize, i: usize, t: f64, last_span: usize) -> f64 {
    if degree == 0 {
        let inside = knots[i] <= t && t < knots[i + 1];
        let closed_end = i == last_span && t == knots[i + 1];
        return if inside || closed_end { 1.0 } else { 0.0 };
    }
    let mut value = 0.0;
    let left = knots[i + degree] - knots[i];
    if left > 0.0 {
        value += (t - knots[i]) / left * cox_de_boor(knots, degree - 1, i, t, last_span);
    }
    let right = knots[i + degree + 1] - knots[i + 1];
    if right > 0.0 {
        value += (knots[i + degree + 1] - t) / right * cox_de_boor(knots, degree - 1, i + 1, t, last_span);
    }
    value
}

/// Index of the knot span containing `t` (`knots[span] <= t < knots[span+1]`,
/// with the last span closed).
pub(crate) fn find_span(knots: &[f64], degree: usize, count: usize, t: f64) -> usize {
    if t >= knots[count] {
        return count - 1;
    }
    if t <= knots[degree] {
        return degree;
    }
    // largest span index with knots[span] <= t
    let upper = knots[degree..=count].partition_point(|&k| k <= t);
    degree + upper - 1
}

/// Nonzero basis values and derivatives up to `order` at `t`.
/// `out[k][a]` is the k-th derivative of basis `span - degree + a`.
pub(crate) fn basis_derivs(knots: &[f64], degree: usize, span: usize, t: f64, order: usize) -> [[f64; 8]; 3] {
    debug_assert!(degree < 8 && order <= 2);
    let p = degree;
    let mut ndu = [[0.0f64; 8]; 8];
    let mut left = [0.0f64; 8];
    let mut right = [0.0f64; 8];
    ndu[0][0] = 1.0;
    for j in 1..=p {
        left[j] = t - knots[span + 1 - j];
        right[j] = knots[span + j] - t;
        let mut saved = 0.0;
        for r in 0..j {
            ndu[j][r] = right[r + 1] + left[j - r];
            let tmp = ndu[r][j - 1] / ndu[j][r];
            ndu[r][j] = saved + right[r + 1] * tmp;
            saved = left[j - r] * tmp;
        }
        ndu[j][j] = saved;
    }
    let mut ders = [[0.0f64; 8]; 3];
    for j in 0..=p {
        ders[0][j] = ndu[j][p];
    }
    let order = order.min(p);
    let mut a = [[0.0f64; 8]; 2];
    for r in 0..=p {
        let (mut s1, mut s2) = (0usize, 1usize);
        a[0][0] = 1.0;
        for k in 1..=order {
            let mut d = 0.0;
            let rk = r as isize - k as isize;
            let pk = p - k;
            if r >= k {
                a[s2][0] = a[s1][0] / ndu[pk + 1][rk as usize];
                d = a[s2][0] * ndu[rk as usize][pk];
            }
            let j1 = if rk >= -1 { 1 } else { (-rk) as usize };
            let j2 = if (r as isize - 1) <= pk as isize { k - 1 } else { p - r };
            for j in j1..=j2 {
                let idx = (rk + j as isize) as usize;
                a[s2][j] = (a[s1][j] - a[s1][j - 1]) / ndu[pk + 1][idx];
                d += a[s2][j] * ndu[idx][pk];
            }
            if r <= pk {
                a[s2][k] = -a[s1][k - 1] / ndu[pk + 1][r];
                d += a[s2][k] * ndu[r][pk];
            }
            ders[k][r] = d;
            std::mem::swap(&mut s1, &mut s2);
        }
    }
    let mut factor = p as f64;
    for k in 1..=order {
        for j in 0..=p {
            ders[k][j] *= factor;
        }
        factor *= (p - k) as f64;
    }
    ders
}

/// Surface point and partial derivatives at a parameter.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Partials {
    pub point: Point3,
    pub su: Vec3,
    pub sv: Vec3,
    /// Second derivatives; zero when only first order was requested.
    pub suu: Vec3,
    pub suv: Vec3,
    pub svv: Vec3,
}

/// Clamped tensor-product B-spline surface.
///
/// `control` is row-major with `rows = m + 1` entries along `u` and
/// `cols = n + 1` along `v`: `B[i][j] = control[i * cols + j]`.
#[derive(Debug, Clone, PartialEq)]
pub struct BSplineSurface {
    degree_u: usize,
    degree_v: usize,
    knots_u: Vec<f64>,
    knots_v: Vec<f64>,
    rows: usize,
    cols: usize,
    control: Vec<Point3>,
}

impl BSplineSurface {
    pub fn new(
        degree_u: usize,
        degree_v: usize,
        knots_u: Vec<f64>,
        knots_v: Vec<f64>,
        rows: usize,
        cols: usize,
        control: Vec<Point3>,
    ) -> Result<Self> {
        let s = Self {
            degree_u,
            degree_v,
            knots_u,
            knots_v,
            rows,
            cols,
            control,
        };
        s.validate()?;
        Ok(s)
    }

    /// Clamped uniform knots in both directions.
    pub fn with_uniform_knots(degree: usize, rows: usize, cols: usize, control: Vec<Point3>) -> Result<Self> {
        if rows <= degree || cols <= degree {
            return Err(Error::InvalidParameter(format!(
                "control grid {rows}x{cols} too small for degree {degree}"
            )));
        }
        Self::new(
            degree,
            degree,
            clamped_uniform_knots(rows, degree),
            clamped_uniform_knots(cols, degree),
            rows,
            cols,
            control,
        )
    }

    fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidParameter(m));
        if self.degree_u == 0 || self.degree_v == 0 || self.degree_u > 7 || self.degree_v > 7 {
            return bad(format!(
                "degrees must be in 1..=7, got ({}, {})",
                self.degree_u, self.degree_v
            ));
        }
        if self.rows * self.cols != self.control.len() || self.rows == 0 {
            return bad(format!(
                "control grid {}x{} does not match {} points",
                self.rows,
                self.cols,
                self.control.len()
            ));
        }
        for (dir, knots, degree, count) in [
            ('u', &self.knots_u, self.degree_u, self.rows),
            ('v', &self.knots_v, self.degree_v, self.cols),
        ] {
            if count <= degree {
                return bad(format!("{count} control points along {dir} for degree {degree}"));
            }
            if knots.len() != count + degree + 1 {
                return bad(format!(
                    "{} knots along {dir}, expected {}",
                    knots.len(),
                    count + degree + 1
                ));
            }
            if knots.windows(2).any(|w| !(w[0] <= w[1])) {
                return bad(format!("knots along {dir} are not nondecreasing"));
            }
            let clamped = knots[..=degree].iter().all(|&k| k == 0.0)
                && knots[knots.len() - degree - 1..].iter().all(|&k| k == 1.0);
            if !clamped {
                return bad(format!("knots along {dir} are not clamped to [0,1]"));
            }
        }
        if self.control.iter().any(|p| !p.coords.iter().all(|c| c.is_finite())) {
            return bad("non-finite control point".into());
        }
        Ok(())
    }

    pub fn degree_u(&self) -> usize {
        self.degree_u
    }

    pub fn degree_v(&self) -> usize {
        self.degree_v
    }

    pub fn knots_u(&self) -> &[f64] {
        &self.knots_u
    }

    pub fn knots_v(&self) -> &[f64] {
        &self.knots_v
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn control(&self) -> &[Point3] {
        &self.control
    }

    pub fn control_point(&self, i: usize, j: usize) -> Point3 {
        self.control[i * self.cols + j]
    }

    pub(crate) fn set_control(&mut self, control: Vec<Point3>) {
        debug_assert_eq!(control.len(), self.control.len());
        self.control = control;
    }

    /// Nonzero basis values along u and v at `p`, with span start indices.
    pub(crate) fn basis_at(&self, p: ParamPoint, order: usize) -> (usize, [[f64; 8]; 3], usize, [[f64; 8]; 3]) {
        let su = find_span(&self.knots_u, self.degree_u, self.rows, p.u);
        let sv = find_span(&self.knots_v, self.degree_v, self.cols, p.v);
        let nu = basis_derivs(&self.knots_u, self.degree_u, su, p.u, order);
        let nv = basis_derivs(&self.knots_v, self.degree_v, sv, p.v, order);
        (su - self.degree_u, nu, sv - self.degree_v, nv)
    }

    pub fn evaluate(&self, p: ParamPoint) -> Result<Point3> {
        p.check()?;
        Ok(self.eval_unchecked(p))
    }

    pub(crate) fn eval_unchecked(&self, p: ParamPoint) -> Point3 {
        let (i0, nu, j0, nv) = self.basis_at(p, 0);
        let mut acc = Vec3::zeros();
        for a in 0..=self.degree_u {
            let row = (i0 + a) * self.cols + j0;
            let mut inner = Vec3::zeros();
            for b in 0..=self.degree_v {
                inner += self.control[row + b].coords * nv[0][b];
            }
            acc += inner * nu[0][a];
        }
        Point3::from(acc)
    }

    /// Partial derivatives of order 1 or 2.
    pub fn derivatives(&self, p: ParamPoint, order: usize) -> Result<Partials> {
        if !(1..=2).contains(&order) {
            return Err(Error::InvalidParameter(format!(
                "derivative order {order} not in {{1, 2}}"
            )));
        }
        p.check()?;
        Ok(self.partials_unchecked(p, order))
    }

    pub(crate) fn partials_unchecked(&self, p: ParamPoint, order: usize) -> Partials {
        let (i0, nu, j0, nv) = self.basis_at(p, order);
        let mut out = [[Vec3::zeros(); 3]; 3];
        for a in 0..=self.degree_u {
            let row = (i0 + a) * self.cols + j0;
            // derivatives along v for this row
            let mut rowd = [Vec3::zeros(); 3];
            for b in 0..=self.degree_v {
                let c = self.control[row + b].coords;
                for l in 0..=order {
                    rowd[l] += c * nv[l][b];
                }
            }
            for k in 0..=order {
                for l in 0..=(order - k) {
                    out[k][l] += rowd[l] * nu[k][a];
                }
            }
        }
        Partials {
            point: Point3::from(out[0][0]),
            su: out[1][0],
            sv: out[0][1],
            suu: if order >= 2 { out[2][0] } else { Vec3::zeros() },
            suv: if order >= 2 { out[1][1] } else { Vec3::zeros() },
            svv: if order >= 2 { out[0][2] } else { Vec3::zeros() },
        }
    }

    /// Axis-aligned bounds of the control net.
    pub fn control_bounds(&self) -> (Point3, Point3) {
        let mut lo = self.control[0];
        let mut hi = self.control[0];
        for p in &self.control {
            for k in 0..3 {
                lo[k] = lo[k].min(p[k]);
                hi[k] = hi[k].max(p[k]);
            }
        }
        (lo, hi)
    }

    /// The part of the surface over `[u0, u1] x [v0, v1]`, reparameterized to
    /// the unit square. Exact: built by knot insertion, not refitting.
    pub fn restrict(&self, u: [f64; 2], v: [f64; 2]) -> Result<Self> {
        for (dir, [a, b]) in [('u', u), ('v', v)] {
            if !(0.0 <= a && a < b && b <= 1.0) {
                return Err(Error::InvalidParameter(format!("bad {dir} range [{a}, {b}]")));
            }
        }
        let (rows, cols) = (self.rows, self.cols);
        // along u: one curve per column
        let mut knots_u = Vec::new();
        let mut columns = Vec::with_capacity(cols);
        for j in 0..cols {
            let curve: Vec<Point3> = (0..rows).map(|i| self.control[i * cols + j]).collect();
            let (k, c) = restrict_curve(&self.knots_u, self.degree_u, &curve, u[0], u[1]);
            knots_u = k;
            columns.push(c);
        }
        let rows = columns[0].len();
        // along v: one curve per new row
        let mut knots_v = Vec::new();
        let mut control = Vec::new();
        for i in 0..rows {
            let curve: Vec<Point3> = columns.iter().map(|c| c[i]).collect();
            let (k, c) = restrict_curve(&self.knots_v, self.degree_v, &curve, v[0], v[1]);
            knots_v = k;
            control.extend(c);
        }
        let cols = control.len() / rows;
        Self::new(self.degree_u, self.degree_v, knots_u, knots_v, rows, cols, control)
    }
}

/// Inserts `t` once into a clamped curve (Boehm's algorithm). The current
/// multiplicity of `t` must be below `degree`.
fn insert_knot(knots: &[f64], degree: usize, ctrl: &[Point3], t: f64) -> (Vec<f64>, Vec<Point3>) {
    let k = find_span(knots, degree, ctrl.len(), t);
    let mut out = Vec::with_capacity(ctrl.len() + 1);
    for i in 0..=ctrl.len() {
        let q = if i + degree <= k {
            ctrl[i]
        } else if i > k {
            ctrl[i - 1]
        } else {
            let a = (t - knots[i]) / (knots[i + degree] - knots[i]);
            Point3::from(ctrl[i].coords * a + ctrl[i - 1].coords * (1.0 - a))
        };
        out.push(q);
    }
    let mut new_knots = knots.to_vec();
    new_knots.insert(k + 1, t);
    (new_knots, out)
}

/// Sub-curve over `[a, b]` of a clamped curve, with knots rescaled to `[0, 1]`.
fn restrict_curve(knots: &[f64], degree: usize, ctrl: &[Point3], a: f64, b: f64) -> (Vec<f64>, Vec<Point3>) {
    let (mut k, mut c) = (knots.to_vec(), ctrl.to_vec());
    for t in [a, b] {
        if t > 0.0 && t < 1.0 {
            let mult = k.iter().filter(|&&x| x == t).count();
            for _ in mult..degree {
                (k, c) = insert_knot(&k, degree, &c, t);
            }
        }
    }
    // `a` and `b` now have multiplicity `degree` (or are the clamped ends)
    let last_a = k.iter().rposition(|&x| x <= a).expect("first knot is 0");
    let first_b = k.iter().position(|&x| x >= b).expect("last knot is 1");
    let scale = |x: f64| ((x - a) / (b - a)).clamp(0.0, 1.0);
    let mut knots = vec![0.0; degree + 1];
    knots.extend(k[last_a + 1..first_b].iter().map(|&x| scale(x)));
    knots.extend(std::iter::repeat_n(1.0, degree + 1));
    (knots, c[last_a - degree..first_b].to_vec())
}
