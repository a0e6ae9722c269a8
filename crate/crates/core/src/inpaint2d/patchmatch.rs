//! Randomized patch correspondence search over the two gradient channels.

use std::fmt::Write as _;
use std::path::Path;

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use super::gradient::{GradientField, NeededEntries};
use super::InpaintConfig;
use crate::heightfield::HeightField;
use crate::{Error, Result};

/// Best source patch found for every target patch.
///
/// Targets are the patch centers whose window (clipped at the image border)
/// contains a gradient entry touching a hole. Sources are centers of windows
/// lying fully inside the image with every gradient entry defined.
#[derive(Debug, Clone, PartialEq)]
pub struct NearestNeighborField {
    pub patch_size: usize,
    pub resolution: usize,
    pub targets: Vec<(usize, usize)>,
    pub sources: Vec<(usize, usize)>,
    pub distances: Vec<f64>,
    /// Total distance after initialization and after every iteration.
    pub iteration_totals: Vec<f64>,
}

impl NearestNeighborField {
    pub fn len(&self) -> usize {
        self.targets.len()
    }

    pub fn is_empty(&self) -> bool {
        self.targets.is_empty()
    }

    /// Source minus target center.
    pub fn offset(&self, i: usize) -> (i64, i64) {
        let (t, s) = (self.targets[i], self.sources[i]);
        (s.0 as i64 - t.0 as i64, s.1 as i64 - t.1 as i64)
    }

    pub fn total_distance(&self) -> f64 {
        self.distances.iter().sum()
    }

    /// Text table with one `cx cy dx dy dist` row per target.
    pub fn to_table(&self) -> String {
        let mut out = String::from("# cx cy dx dy dist\n");
        for i in 0..self.len() {
            let (dx, dy) = self.offset(i);
            let (cx, cy) = self.targets[i];
            let _ = writeln!(out, "{cx} {cy} {dx} {dy} {:e}", self.distances[i]);
        }
        out
    }

    pub fn write_table(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.to_table()).map_err(|e| Error::io(path, e))
    }
}

/// Shared state of one search: working target values, source values and the
/// target/source lookups.
pub(crate) struct Matcher {
    r: usize,
    half: usize,
    /// Target-side channels: defined entries, working estimates on needed
    /// entries, NaN where nothing is compared.
    work_x: Vec<f64>,
    work_y: Vec<f64>,
    /// Source-side channels, defined wherever a valid source reads.
    src_x: Vec<f64>,
    src_y: Vec<f64>,
    valid_source: Vec<bool>,
    source_list: Vec<usize>,
    pub(crate) targets: Vec<(usize, usize)>,
    target_at: Vec<usize>,
}

impl Matcher {
    /// `estimates` supplies the needed entries; `None` uses zeros.
    pub(crate) fn new(
        h: &HeightField,
        g: &GradientField,
        estimates: Option<&GradientField>,
        patch_size: usize,
    ) -> Result<Self> {
        let r = h.resolution();
        let half = patch_size / 2;
        let need = NeededEntries::of(h);
        let mut work_x = g.gx.clone();
        let mut work_y = g.gy.clone();
        for k in 0..r * r {
            if need.x[k] {
                work_x[k] = estimates.map_or(0.0, |e| e.gx[k]);
            }
            if need.y[k] {
                work_y[k] = estimates.map_or(0.0, |e| e.gy[k]);
            }
        }

        // a source window must avoid every undefined entry of the raw field
        let bad: Vec<u32> = (0..r * r)
            .map(|k| {
                let x_undef = need.x[k] || g.gx[k].is_nan();
                let y_undef = need.y[k] || g.gy[k].is_nan();
                (x_undef || y_undef) as u32
            })
            .collect();
        let bad_sum = prefix_sum(&bad, r);
        let mut valid_source = vec![false; r * r];
        let mut source_list = Vec::new();
        if patch_size <= r {
            for cy in half..r - half {
                for cx in half..r - half {
                    if window_sum(&bad_sum, r, cx - half, cy - half, cx + half, cy + half) == 0 {
                        valid_source[cy * r + cx] = true;
                        source_list.push(cy * r + cx);
                    }
                }
            }
        }

        let needed: Vec<u32> = (0..r * r).map(|k| need.at(k) as u32).collect();
        let need_sum = prefix_sum(&needed, r);
        let mut targets = Vec::new();
        let mut target_at = vec![usize::MAX; r * r];
        for cy in 0..r {
            for cx in 0..r {
                let (x0, y0) = (cx.saturating_sub(half), cy.saturating_sub(half));
                let (x1, y1) = ((cx + half).min(r - 1), (cy + half).min(r - 1));
                if window_sum(&need_sum, r, x0, y0, x1, y1) > 0 {
                    target_at[cy * r + cx] = targets.len();
                    targets.push((cx, cy));
                }
            }
        }
        if source_list.is_empty() && !targets.is_empty() {
            return Err(Error::NoValidSourcePatch { patch_size });
        }
        Ok(Self {
            r,
            half,
            work_x,
            work_y,
            src_x: g.gx.clone(),
            src_y: g.gy.clone(),
            valid_source,
            source_list,
            targets,
            target_at,
        })
    }

    /// SSD between the target window at `t` and the source window at `s`;
    /// stops early once a full row pushes the sum above `bound`.
    pub(crate) fn distance(&self, t: (usize, usize), s: (usize, usize), bound: f64) -> f64 {
        let (r, h) = (self.r as i64, self.half as i64);
        let mut acc = 0.0;
        for j in -h..=h {
            let ty = t.1 as i64 + j;
            if ty < 0 || ty >= r {
                continue;
            }
            let row_t = (ty * r) as usize;
            let row_s = ((s.1 as i64 + j) * r) as usize;
            for i in -h..=h {
                let tx = t.0 as i64 + i;
                if tx < 0 || tx >= r {
                    continue;
                }
                let kt = row_t + tx as usize;
                let ks = row_s + (s.0 as i64 + i) as usize;
                let wx = self.work_x[kt];
                if !wx.is_nan() {
                    let d = wx - self.src_x[ks];
                    acc += d * d;
                }
                let wy = self.work_y[kt];
                if !wy.is_nan() {
                    let d = wy - self.src_y[ks];
                    acc += d * d;
                }
            }
            if acc > bound {
                return acc;
            }
        }
        acc
    }

    fn is_source(&self, x: i64, y: i64) -> bool {
        x >= 0
            && y >= 0
            && (x as usize) < self.r
            && (y as usize) < self.r
            && self.valid_source[y as usize * self.r + x as usize]
    }

    /// Runs the search. `init` continues from a previous field over the same
    /// targets; otherwise sources are drawn at random.
    pub(crate) fn run(
        &self,
        iterations: usize,
        patch_size: usize,
        init: Option<&NearestNeighborField>,
        rng: &mut ChaCha8Rng,
    ) -> NearestNeighborField {
        let n = self.targets.len();
        let mut sources: Vec<(usize, usize)> = match init {
            Some(prev) => {
                debug_assert_eq!(prev.targets, self.targets);
                prev.sources.clone()
            }
            None => (0..n)
                .map(|_| {
                    let k = self.source_list[rng.gen_range(0..self.source_list.len())];
                    (k % self.r, k / self.r)
                })
                .collect(),
        };
        let mut dist: Vec<f64> = (0..n)
            .map(|i| self.distance(self.targets[i], sources[i], f64::INFINITY))
            .collect();
        let mut totals = vec![dist.iter().sum::<f64>()];

        for iter in 0..iterations {
            let forward = iter % 2 == 0;
            let step: i64 = if forward { 1 } else { -1 };
            for pos in 0..n {
                let i = if forward { pos } else { n - 1 - pos };
                let t = self.targets[i];
                // propagation from the already-visited neighbours
                for (nx, ny) in [(t.0 as i64 - step, t.1 as i64), (t.0 as i64, t.1 as i64 - step)] {
                    if nx < 0 || ny < 0 || nx as usize >= self.r || ny as usize >= self.r {
                        continue;
                    }
                    let j = self.target_at[ny as usize * self.r + nx as usize];
                    if j == usize::MAX {
                        continue;
                    }
                    let s = sources[j];
                    let cand = (s.0 as i64 + (t.0 as i64 - nx), s.1 as i64 + (t.1 as i64 - ny));
                    if self.is_source(cand.0, cand.1) {
                        let c = (cand.0 as usize, cand.1 as usize);
                        if c != sources[i] {
                            let d = self.distance(t, c, dist[i]);
                            if d < dist[i] {
                                dist[i] = d;
                                sources[i] = c;
                            }
                        }
                    }
                }
                // random search in a window halving from the full image
                let mut radius = self.r as f64;
                while radius >= 1.0 {
                    let rad = radius as i64;
                    let dx = rng.gen_range(-rad..=rad);
                    let dy = rng.gen_range(-rad..=rad);
                    let cx = (sources[i].0 as i64 + dx).clamp(0, self.r as i64 - 1);
                    let cy = (sources[i].1 as i64 + dy).clamp(0, self.r as i64 - 1);
                    if self.is_source(cx, cy) {
                        let c = (cx as usize, cy as usize);
                        if c != sources[i] {
                            let d = self.distance(t, c, dist[i]);
                            if d < dist[i] {
                                dist[i] = d;
                                sources[i] = c;
                            }
                        }
                    }
                    radius *= 0.5;
                }
            }
            totals.push(dist.iter().sum());
        }
        NearestNeighborField {
            patch_size,
            resolution: self.r,
            targets: self.targets.clone(),
            sources,
            distances: dist,
            iteration_totals: totals,
        }
    }
}

fn prefix_sum(v: &[u32], r: usize) -> Vec<u32> {
    let mut s = vec![0u32; (r + 1) * (r + 1)];
    for y in 0..r {
        for x in 0..r {
            s[(y + 1) * (r + 1) + x + 1] =
                v[y * r + x] + s[y * (r + 1) + x + 1] + s[(y + 1) * (r + 1) + x] - s[y * (r + 1) + x];
        }
    }
    s
}

/// Sum over the inclusive window `[x0, x1] x [y0, y1]`.
fn window_sum(s: &[u32], r: usize, x0: usize, y0: usize, x1: usize, y1: usize) -> u32 {
    let w = r + 1;
    s[(y1 + 1) * w + x1 + 1] + s[y0 * w + x0] - s[y0 * w + x1 + 1] - s[(y1 + 1) * w + x0]
}

/// One patch-match run from a random initialization, using the gradient
/// field's hole-touching entries as zero working estimates.
pub fn patch_match(h: &HeightField, g: &GradientField, cfg: &InpaintConfig) -> Result<NearestNeighborField> {
    use rand::SeedableRng;
    cfg.validate()?;
    let matcher = Matcher::new(h, g, None, cfg.patch_size)?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    Ok(matcher.run(cfg.iterations, cfg.patch_size, None, &mut rng))
}

/// Replaces every hole-touching gradient entry by the mean of the values the
/// matched source patches vote for it.
pub fn aggregate_gradients(h: &HeightField, nnf: &NearestNeighborField, g: &GradientField) -> Result<GradientField> {
    let r = h.resolution();
    let half = nnf.patch_size as i64 / 2;
    let need = NeededEntries::of(h);
    let mut sum_x = vec![0.0; r * r];
    let mut sum_y = vec![0.0; r * r];
    let mut cnt_x = vec![0u32; r * r];
    let mut cnt_y = vec![0u32; r * r];
    for (t, s) in nnf.targets.iter().zip(&nnf.sources) {
        for j in -half..=half {
            let ty = t.1 as i64 + j;
            if ty < 0 || ty >= r as i64 {
                continue;
            }
            for i in -half..=half {
                let tx = t.0 as i64 + i;
                if tx < 0 || tx >= r as i64 {
                    continue;
                }
                let kt = ty as usize * r + tx as usize;
                let ks = (s.1 as i64 + j) as usize * r + (s.0 as i64 + i) as usize;
                if need.x[kt] {
                    sum_x[kt] += g.gx[ks];
                    cnt_x[kt] += 1;
                }
                if need.y[kt] {
                    sum_y[kt] += g.gy[ks];
                    cnt_y[kt] += 1;
                }
            }
        }
    }
    let mut out = g.clone();
    for k in 0..r * r {
        for (needed, sum, cnt, dst) in [
            (need.x[k], sum_x[k], cnt_x[k], &mut out.gx),
            (need.y[k], sum_y[k], cnt_y[k], &mut out.gy),
        ] {
            if needed {
                if cnt == 0 {
                    return Err(Error::UncoveredHoleCell { x: k % r, y: k / r });
                }
                dst[k] = sum / cnt as f64;
            }
        }
    }
    Ok(out)
}
