use crate::heightfield::HeightField;
use crate::{Error, Result};

/// Forward-difference gradients of a height field.
///
/// `gx[y*r + x] = I(x+1, y) - I(x, y)` and `gy[y*r + x] = I(x, y+1) - I(x, y)`;
/// entries whose operands include a hole or fall off the right/top border
/// are NaN (undefined).
#[derive(Debug, Clone, PartialEq)]
pub struct GradientField {
    resolution: usize,
    pub gx: Vec<f64>,
    pub gy: Vec<f64>,
}

impl GradientField {
    pub fn new(resolution: usize, gx: Vec<f64>, gy: Vec<f64>) -> Result<Self> {
        let n = resolution * resolution;
        if gx.len() != n || gy.len() != n {
            return Err(Error::InvalidParameter(format!(
                "gradient channels need {n} entries, got {} and {}",
                gx.len(),
                gy.len()
            )));
        }
        Ok(Self { resolution, gx, gy })
    }

    pub fn resolution(&self) -> usize {
        self.resolution
    }

    pub fn gx_at(&self, x: usize, y: usize) -> Option<f64> {
        let v = self.gx[y * self.resolution + x];
        (!v.is_nan()).then_some(v)
    }

    pub fn gy_at(&self, x: usize, y: usize) -> Option<f64> {
        let v = self.gy[y * self.resolution + x];
        (!v.is_nan()).then_some(v)
    }

    /// Gradients of `h` with every hole-touching entry set to zero, the
    /// guidance of a plain harmonic fill.
    pub fn zero_guidance(h: &HeightField) -> Self {
        let mut g = compute_gradients(h);
        let need = NeededEntries::of(h);
        for k in 0..g.gx.len() {
            if need.x[k] {
                g.gx[k] = 0.0;
            }
            if need.y[k] {
                g.gy[k] = 0.0;
            }
        }
        g
    }

    /// One channel as a height field (undefined entries become holes), for
    /// dumping in the HF01 format.
    pub fn channel(&self, y_channel: bool) -> HeightField {
        let values = if y_channel { &self.gy } else { &self.gx };
        let counts = values.iter().map(|v| (!v.is_nan()) as u32).collect();
        HeightField::new(self.resolution, 0.0, values.clone(), counts).expect("shape matches")
    }
}

pub fn compute_gradients(h: &HeightField) -> GradientField {
    let r = h.resolution();
    let c = h.cells();
    let mut gx = vec![f64::NAN; r * r];
    let mut gy = vec![f64::NAN; r * r];
    for y in 0..r {
        for x in 0..r {
            let k = y * r + x;
            if x + 1 < r {
                // NaN operands propagate to an undefined entry
                gx[k] = c[k + 1] - c[k];
            }
            if y + 1 < r {
                gy[k] = c[k + r] - c[k];
            }
        }
    }
    GradientField { resolution: r, gx, gy }
}

/// Gradient entries on edges that touch a hole: the unknowns of the
/// gradient-domain fill and the terms the Poisson solve reads.
#[derive(Debug, Clone, PartialEq)]
pub struct NeededEntries {
    pub x: Vec<bool>,
    pub y: Vec<bool>,
}

impl NeededEntries {
    pub fn of(h: &HeightField) -> Self {
        let r = h.resolution();
        let hole = h.hole_mask();
        let mut x = vec![false; r * r];
        let mut y = vec![false; r * r];
        for cy in 0..r {
            for cx in 0..r {
                let k = cy * r + cx;
                x[k] = cx + 1 < r && (hole[k] || hole[k + 1]);
                y[k] = cy + 1 < r && (hole[k] || hole[k + r]);
            }
        }
        Self { x, y }
    }

    pub fn any(&self) -> bool {
        self.x.iter().chain(&self.y).any(|&b| b)
    }

    pub fn at(&self, k: usize) -> bool {
        self.x[k] || self.y[k]
    }
}
