//! Height-field hole filling in the gradient domain: patch-matched gradients
//! guide a Poisson solve whose boundary values come from the known cells.

mod gradient;
mod patchmatch;
mod poisson;

pub use gradient::{compute_gradients, GradientField, NeededEntries};
pub use patchmatch::{aggregate_gradients, patch_match, NearestNeighborField};
pub use poisson::{solve_poisson, PoissonReport};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::heightfield::HeightField;
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct InpaintConfig {
    /// Odd patch edge length.
    pub patch_size: usize,
    /// Patch-match rounds per pass.
    pub iterations: usize,
    pub seed: u64,
    /// Match/aggregate passes that refresh the hole gradients before the
    /// final pass.
    pub refresh_passes: usize,
    pub solver_tol: f64,
    pub solver_max_iter: usize,
}

impl Default for InpaintConfig {
    fn default() -> Self {
        Self {
            patch_size: 11,
            iterations: 10,
            seed: 42,
            refresh_passes: 2,
            solver_tol: 1e-10,
            solver_max_iter: 20_000,
        }
    }
}

impl InpaintConfig {
    pub fn validate(&self) -> Result<()> {
        if self.patch_size < 3 || self.patch_size.is_multiple_of(2) {
            return Err(Error::InvalidParameter(format!(
                "patch size must be odd and >= 3, got {}",
                self.patch_size
            )));
        }
        if !(self.solver_tol > 0.0) {
            return Err(Error::InvalidParameter(format!(
                "solver tol must be > 0, got {}",
                self.solver_tol
            )));
        }
        if self.solver_max_iter == 0 {
            return Err(Error::InvalidParameter("solver max iterations must be >= 1".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct InpaintReport {
    pub hole_cells: usize,
    pub targets: usize,
    /// Per pass, total NNF distance after initialization and every round.
    pub pass_totals: Vec<Vec<f64>>,
    pub solver: PoissonReport,
}

#[derive(Debug, Clone)]
pub struct InpaintOutcome {
    pub field: HeightField,
    /// Final correspondence field; `None` when there was nothing to fill.
    pub nnf: Option<NearestNeighborField>,
    /// Guidance used by the Poisson solve.
    pub guidance: Option<GradientField>,
    pub report: InpaintReport,
}

/// Fills every hole of `h`. Known cells come back bit-identical.
///
/// Hole gradients start at zero, then each pass matches patches against the
/// current estimates and replaces them by the mean of the matched votes; each
/// pass continues from the previous correspondence field.
pub fn inpaint(h: &HeightField, cfg: &InpaintConfig) -> Result<InpaintOutcome> {
    cfg.validate()?;
    let hole_cells = h.hole_count();
    if hole_cells == 0 {
        return Ok(InpaintOutcome {
            field: h.clone(),
            nnf: None,
            guidance: None,
            report: InpaintReport::default(),
        });
    }
    if h.known_count() == 0 {
        return Err(Error::NoKnownCells);
    }
    let raw = compute_gradients(h);
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut estimates: Option<GradientField> = None;
    let mut nnf: Option<NearestNeighborField> = None;
    let mut pass_totals = Vec::new();
    let mut targets = 0;
    for pass in 0..=cfg.refresh_passes {
        let matcher = patchmatch::Matcher::new(h, &raw, estimates.as_ref(), cfg.patch_size)?;
        targets = matcher.targets.len();
        let field = matcher.run(cfg.iterations, cfg.patch_size, nnf.as_ref(), &mut rng);
        log::debug!(
            "inpaint pass {}: total patch distance {:.6e} -> {:.6e}",
            pass + 1,
            field.iteration_totals[0],
            field.iteration_totals.last().copied().unwrap_or(0.0)
        );
        pass_totals.push(field.iteration_totals.clone());
        estimates = Some(aggregate_gradients(h, &field, &raw)?);
        nnf = Some(field);
    }
    let guidance = estimates.expect("at least one pass runs");
    let (field, solver) = solve_poisson(h, &guidance, cfg.solver_tol, cfg.solver_max_iter)?;
    log::info!(
        "inpainted {hole_cells} cells: {} solver iterations, relative residual {:.3e}",
        solver.iterations,
        solver.relative_residual
    );
    Ok(InpaintOutcome {
        field,
        nnf,
        guidance: Some(guidance),
        report: InpaintReport {
            hole_cells,
            targets,
            pass_totals,
            solver,
        },
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    fn field(r: usize, f: impl Fn(usize, usize) -> Option<f64>) -> HeightField {
        let vals: Vec<Option<f64>> = (0..r * r).map(|k| f(k % r, k / r)).collect();
        HeightField::from_values(r, 0.1, &vals).unwrap()
    }

    #[test]
    fn hole_free_is_a_no_op() {
        let h = field(8, |x, y| Some((x * y) as f64));
        let out = inpaint(&h, &InpaintConfig::default()).unwrap();
        assert_eq!(out.field, h);
        assert!(out.nnf.is_none());
    }

    #[test]
    fn constant_field_fills_with_constant() {
        let h = field(30, |x, y| {
            (!((10..17).contains(&x) && (8..14).contains(&y))).then_some(2.5)
        });
        let out = inpaint(
            &h,
            &InpaintConfig {
                patch_size: 5,
                ..Default::default()
            },
        )
        .unwrap();
        assert_eq!(out.field.hole_count(), 0);
        assert!(out.field.cells().iter().all(|v| (v - 2.5).abs() <= 1e-9));
    }

    #[test]
    fn repeated_texture_recovers_shifted_source() {
        let period = 16;
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let table: Vec<f64> = (0..period * 48).map(|_| rng.gen()).collect();
        let tex = |x: usize, y: usize| table[y * period + x % period];
        let h = field(48, |x, y| {
            (!((7..11).contains(&x) && (20..25).contains(&y))).then(|| tex(x, y))
        });
        let out = inpaint(
            &h,
            &InpaintConfig {
                patch_size: 5,
                ..Default::default()
            },
        )
        .unwrap();
        let nnf = out.nnf.unwrap();
        for i in 0..nnf.len() {
            let (dx, dy) = nnf.offset(i);
            assert!(
                nnf.distances[i] <= 1e-9,
                "target {:?} distance {}",
                nnf.targets[i],
                nnf.distances[i]
            );
            assert!(dx % period as i64 == 0 && dy == 0, "offset ({dx}, {dy})");
        }
        for y in 0..48 {
            for x in 0..48 {
                assert!((out.field.get(x, y).unwrap() - tex(x, y)).abs() < 1e-8);
            }
        }
    }

    #[test]
    fn periodic_texture_benchmark() {
        let f = |x: usize, y: usize| (x as f64 * 0.4).sin() * (y as f64 * 0.3).cos();
        let r = 64;
        let truth: Vec<f64> = (0..r * r).map(|k| f(k % r, k / r)).collect();
        let hole = |x: usize, y: usize| (x as f64 - 30.0).powi(2) + (y as f64 - 34.0).powi(2) < 64.0;
        let h = field(r, |x, y| (!hole(x, y)).then(|| f(x, y)));
        let out = inpaint(&h, &InpaintConfig::default()).unwrap();
        let mean = truth.iter().sum::<f64>() / truth.len() as f64;
        let sd = (truth.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / truth.len() as f64).sqrt();
        let holes: Vec<usize> = (0..r * r).filter(|&k| hole(k % r, k / r)).collect();
        let rmse = (holes
            .iter()
            .map(|&k| (out.field.cells()[k] - truth[k]).powi(2))
            .sum::<f64>()
            / holes.len() as f64)
            .sqrt();
        // reference run: rmse = 0.015 sd
        assert!(rmse <= 0.15 * sd, "rmse {rmse}, sd {sd}");
    }

    #[test]
    fn deterministic_and_known_cells_untouched() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let vals: Vec<Option<f64>> = (0..40 * 40)
            .map(|k| {
                let (x, y) = (k % 40, k / 40);
                let hole = (12..20).contains(&x) && (15..26).contains(&y);
                (!hole).then(|| rng.gen::<f64>() + 0.1 * x as f64)
            })
            .collect();
        let h = HeightField::from_values(40, 0.1, &vals).unwrap();
        let cfg = InpaintConfig {
            patch_size: 7,
            seed: 3,
            ..Default::default()
        };
        let a = inpaint(&h, &cfg).unwrap();
        let b = inpaint(&h, &cfg).unwrap();
        assert_eq!(a.nnf, b.nnf);
        assert!(a
            .field
            .cells()
            .iter()
            .zip(b.field.cells())
            .all(|(x, y)| x.to_bits() == y.to_bits()));
        for (k, v) in vals.iter().enumerate() {
            if let Some(v) = v {
                assert_eq!(a.field.cells()[k].to_bits(), v.to_bits());
            }
        }
        for totals in &a.report.pass_totals {
            assert!(totals.windows(2).all(|w| w[1] <= w[0]));
        }
    }

    #[test]
    fn config_validation() {
        assert!(InpaintConfig {
            patch_size: 4,
            ..Default::default()
        }
        .validate()
        .is_err());
        assert!(InpaintConfig {
            patch_size: 1,
            ..Default::default()
        }
        .validate()
        .is_err());
        assert!(InpaintConfig::default().validate().is_ok());
    }
}
