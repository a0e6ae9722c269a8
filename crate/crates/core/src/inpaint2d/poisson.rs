//! Discrete Poisson fill of hole cells with Dirichlet values from the known
//! ring and Neumann behaviour at the image border.
//!
//! For a hole cell `c` with in-image 4-neighbours `N(c)` the equation is
//!
//! ```text
//! sum_{n in N(c)} (I_c - I_n) = -sum_{n in N(c)} g(c -> n)
//! ```
//!
//! where `g(c -> n)` is the forward difference along the edge, i.e.
//! `gx(x,y)` to the right, `-gx(x-1,y)` to the left and likewise in `y`.
//! With all four neighbours inside this is the 5-point Laplacian equal to the
//! backward-difference divergence of the guidance field.

use rayon::prelude::*;

use super::gradient::GradientField;
use crate::heightfield::HeightField;
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct PoissonReport {
    pub unknowns: usize,
    pub iterations: usize,
    /// Final `|b - A x| / |b|` (0 for a zero right-hand side).
    pub relative_residual: f64,
}

/// The linear system over hole cells.
pub(crate) struct PoissonSystem {
    r: usize,
    /// Cell index of each unknown.
    cells: Vec<usize>,
    /// Unknown index of each cell, `usize::MAX` for known cells.
    unknown_of: Vec<usize>,
    diag: Vec<f64>,
    pub(crate) rhs: Vec<f64>,
}

impl PoissonSystem {
    pub(crate) fn assemble(h: &HeightField, g: &GradientField) -> Result<Self> {
        let r = h.resolution();
        let vals = h.cells();
        let cells: Vec<usize> = (0..r * r).filter(|&k| vals[k].is_nan()).collect();
        let mut unknown_of = vec![usize::MAX; r * r];
        for (i, &k) in cells.iter().enumerate() {
            unknown_of[k] = i;
        }
        let mut diag = vec![0.0; cells.len()];
        let mut rhs = vec![0.0; cells.len()];
        for (i, &k) in cells.iter().enumerate() {
            let (x, y) = (k % r, k / r);
            let mut deg = 0.0;
            let mut b = 0.0;
            for (n, guide) in neighbours(r, x, y, g) {
                if guide.is_nan() {
                    return Err(Error::InvalidParameter(format!(
                        "guidance gradient undefined next to hole cell ({x}, {y})"
                    )));
                }
                deg += 1.0;
                b -= guide;
                if !vals[n].is_nan() {
                    b += vals[n];
                }
            }
            diag[i] = deg;
            rhs[i] = b;
        }
        Ok(Self {
            r,
            cells,
            unknown_of,
            diag,
            rhs,
        })
    }

    pub(crate) fn len(&self) -> usize {
        self.cells.len()
    }

    /// `A x`: degree times the cell value minus hole neighbours.
    pub(crate) fn apply(&self, x: &[f64], out: &mut [f64]) {
        let r = self.r;
        out.par_iter_mut().enumerate().for_each(|(i, o)| {
            let k = self.cells[i];
            let (cx, cy) = (k % r, k / r);
            let mut acc = self.diag[i] * x[i];
            let mut sub = |n: usize| {
                let j = self.unknown_of[n];
                if j != usize::MAX {
                    acc -= x[j];
                }
            };
            if cx > 0 {
                sub(k - 1);
            }
            if cx + 1 < r {
                sub(k + 1);
            }
            if cy > 0 {
                sub(k - r);
            }
            if cy + 1 < r {
                sub(k + r);
            }
            *o = acc;
        });
    }
}

/// In-image neighbours of `(x, y)` with the guidance difference along the
/// edge towards each.
fn neighbours(r: usize, x: usize, y: usize, g: &GradientField) -> impl Iterator<Item = (usize, f64)> {
    let k = y * r + x;
    let mut out = [(usize::MAX, 0.0); 4];
    if x + 1 < r {
        out[0] = (k + 1, g.gx[k]);
    }
    if x > 0 {
        out[1] = (k - 1, -g.gx[k - 1]);
    }
    if y + 1 < r {
        out[2] = (k + r, g.gy[k]);
    }
    if y > 0 {
        out[3] = (k - r, -g.gy[k - r]);
    }
    out.into_iter().filter(|&(n, _)| n != usize::MAX)
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Fills the hole cells of `h` from the guidance `g`, whose hole-touching
/// entries must all be defined. Known cells are copied unchanged.
pub fn solve_poisson(
    h: &HeightField,
    g: &GradientField,
    tol: f64,
    max_iter: usize,
) -> Result<(HeightField, PoissonReport)> {
    if g.resolution() != h.resolution() {
        return Err(Error::InvalidParameter("gradient and height field sizes differ".into()));
    }
    if h.hole_count() == 0 {
        return Ok((h.clone(), PoissonReport::default()));
    }
    if h.known_count() == 0 {
        return Err(Error::NoKnownCells);
    }
    let sys = PoissonSystem::assemble(h, g)?;
    let (x, report) = conjugate_gradient(&sys, tol, max_iter)?;
    let mut fill = vec![0.0; h.cells().len()];
    for (i, &k) in sys.cells.iter().enumerate() {
        fill[k] = x[i];
    }
    Ok((h.with_holes_filled(&fill), report))
}

/// Jacobi-preconditioned conjugate gradients from a zero start.
fn conjugate_gradient(sys: &PoissonSystem, tol: f64, max_iter: usize) -> Result<(Vec<f64>, PoissonReport)> {
    let n = sys.len();
    let b_norm = dot(&sys.rhs, &sys.rhs).sqrt();
    let mut x = vec![0.0; n];
    let mut report = PoissonReport {
        unknowns: n,
        ..Default::default()
    };
    if b_norm == 0.0 {
        return Ok((x, report));
    }
    let mut r = sys.rhs.clone();
    let mut z: Vec<f64> = r.iter().zip(&sys.diag).map(|(ri, d)| ri / d).collect();
    let mut p = z.clone();
    let mut ap = vec![0.0; n];
    let mut rz = dot(&r, &z);
    let target = tol * b_norm;
    let mut res = b_norm;
    for it in 1..=max_iter {
        sys.apply(&p, &mut ap);
        let pap = dot(&p, &ap);
        if !(pap > 0.0) {
            break;
        }
        let alpha = rz / pap;
        for i in 0..n {
            x[i] += alpha * p[i];
            r[i] -= alpha * ap[i];
        }
        res = dot(&r, &r).sqrt();
        report.iterations = it;
        if res <= target {
            break;
        }
        for i in 0..n {
            z[i] = r[i] / sys.diag[i];
        }
        let rz_new = dot(&r, &z);
        let beta = rz_new / rz;
        rz = rz_new;
        for i in 0..n {
            p[i] = z[i] + beta * p[i];
        }
    }
    // confirm against the true residual rather than the recurrence
    sys.apply(&x, &mut ap);
    let true_res = sys
        .rhs
        .iter()
        .zip(&ap)
        .map(|(b, a)| (b - a) * (b - a))
        .sum::<f64>()
        .sqrt();
    report.relative_residual = true_res / b_norm;
    if !(res <= target) || !(true_res <= 10.0 * target) {
        return Err(Error::SolverDivergence {
            iterations: report.iterations,
            residual: report.relative_residual,
        });
    }
    Ok((x, report))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::inpaint2d::compute_gradients;
    use nalgebra::{DMatrix, DVector};

    fn field(r: usize, f: impl Fn(usize, usize) -> Option<f64>) -> HeightField {
        let vals: Vec<Option<f64>> = (0..r * r).map(|k| f(k % r, k / r)).collect();
        HeightField::from_values(r, 0.1, &vals).unwrap()
    }

    #[test]
    fn single_cell_harmonic() {
        let h = field(5, |x, y| (!(x == 2 && y == 2)).then_some(10.0));
        let (out, rep) = solve_poisson(&h, &GradientField::zero_guidance(&h), 1e-10, 100).unwrap();
        assert!((out.get(2, 2).unwrap() - 10.0).abs() <= 1e-8);
        assert_eq!(rep.unknowns, 1);
    }

    #[test]
    fn strip_between_boundaries_is_linear() {
        // row 1 of a 7x3 image: 0 at x = 0, 4 at x = 6, holes between;
        // rows 0 and 2 are holes too so the strip is one-dimensional
        let h = field(7, |x, y| match (x, y) {
            (0, _) => Some(0.0),
            (6, _) => Some(4.0),
            _ => None,
        });
        let (out, _) = solve_poisson(&h, &GradientField::zero_guidance(&h), 1e-12, 1000).unwrap();
        for y in 0..7 {
            for x in 0..7 {
                let want = 4.0 * x as f64 / 6.0;
                assert!((out.get(x, y).unwrap() - want).abs() <= 1e-8, "({x},{y})");
            }
        }
    }

    #[test]
    fn matches_dense_direct_solve() {
        let h = field(9, |x, y| {
            let hole = (2..7).contains(&x) && (3..6).contains(&y) || (x == 8 && y < 3);
            (!hole).then(|| (x * x) as f64 * 0.1 - y as f64)
        });
        let mut g = GradientField::zero_guidance(&h);
        for (k, v) in g.gx.iter_mut().enumerate() {
            if !v.is_nan() {
                *v += (k % 5) as f64 * 0.01;
            }
        }
        let (out, _) = solve_poisson(&h, &g, 1e-12, 1000).unwrap();
        let sys = PoissonSystem::assemble(&h, &g).unwrap();
        let n = sys.len();
        let mut a = DMatrix::zeros(n, n);
        let mut e = vec![0.0; n];
        let mut col = vec![0.0; n];
        for j in 0..n {
            e.iter_mut().for_each(|v| *v = 0.0);
            e[j] = 1.0;
            sys.apply(&e, &mut col);
            for i in 0..n {
                a[(i, j)] = col[i];
            }
        }
        let x = a.lu().solve(&DVector::from_vec(sys.rhs.clone())).unwrap();
        for (i, &k) in sys.cells.iter().enumerate() {
            assert!((out.cells()[k] - x[i]).abs() <= 1e-8);
        }
    }

    #[test]
    fn quadratic_carve_and_restore() {
        let q = |x: usize, y: usize| {
            let (x, y) = (x as f64, y as f64);
            0.01 * x * x - 0.02 * x * y + 0.005 * y * y + 0.3 * x
        };
        let full = field(32, |x, y| Some(q(x, y)));
        let truth = compute_gradients(&full);
        let carved = field(32, |x, y| {
            let blob = (x as f64 - 12.0).powi(2) / 40.0 + (y as f64 - 20.0).powi(2) / 20.0 < 1.0 || (x > 28 && y < 6);
            (!blob).then(|| q(x, y))
        });
        let (out, rep) = solve_poisson(&carved, &truth, 1e-12, 5000).unwrap();
        let max = (0..32 * 32)
            .map(|k| (out.cells()[k] - full.cells()[k]).abs())
            .fold(0.0, f64::max);
        assert!(max <= 1e-6, "max error {max}");
        // independent residual check of every equation
        let sys = PoissonSystem::assemble(&carved, &truth).unwrap();
        let x: Vec<f64> = sys.cells.iter().map(|&k| out.cells()[k]).collect();
        let mut ax = vec![0.0; x.len()];
        sys.apply(&x, &mut ax);
        for (i, b) in sys.rhs.iter().enumerate() {
            assert!((ax[i] - b).abs() <= 1e-8 * (1.0 + b.abs()));
        }
        assert!(rep.relative_residual <= 1e-11);
        // known cells are bit-identical
        for k in 0..32 * 32 {
            if !carved.cells()[k].is_nan() {
                assert_eq!(out.cells()[k].to_bits(), carved.cells()[k].to_bits());
            }
        }
    }

    #[test]
    fn maximum_principle_for_zero_guidance() {
        let h = field(20, |x, y| {
            let hole = (5..15).contains(&x) && (4..16).contains(&y);
            (!hole).then(|| ((x * 7 + y * 3) % 11) as f64)
        });
        let (out, _) = solve_poisson(&h, &GradientField::zero_guidance(&h), 1e-10, 1000).unwrap();
        // boundary ring values
        let mut lo = f64::INFINITY;
        let mut hi = f64::NEG_INFINITY;
        for y in 0..20 {
            for x in 0..20 {
                if h.is_hole(x, y) {
                    for (nx, ny) in [(x - 1, y), (x + 1, y), (x, y - 1), (x, y + 1)] {
                        if let Some(v) = h.get(nx, ny) {
                            lo = lo.min(v);
                            hi = hi.max(v);
                        }
                    }
                }
            }
        }
        for y in 0..20 {
            for x in 0..20 {
                if h.is_hole(x, y) {
                    let v = out.get(x, y).unwrap();
                    assert!(v >= lo - 1e-9 && v <= hi + 1e-9);
                }
            }
        }
    }

    #[test]
    fn failures() {
        let h = field(4, |_, _| None);
        assert!(matches!(
            solve_poisson(&h, &GradientField::zero_guidance(&h), 1e-10, 10),
            Err(Error::NoKnownCells)
        ));
        let h = field(30, |x, y| {
            (!(3..27).contains(&x) || !(3..27).contains(&y)).then(|| (x + y) as f64)
        });
        assert!(matches!(
            solve_poisson(&h, &GradientField::zero_guidance(&h), 1e-14, 2),
            Err(Error::SolverDivergence { .. })
        ));
        // raw gradients leave the hole edges undefined
        assert!(solve_poisson(&h, &compute_gradients(&h), 1e-10, 10).is_err());
    }
}
