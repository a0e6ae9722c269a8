use std::collections::BTreeMap;

use super::{compute_obb, PointCloud};
use crate::{Error, Point3, Result, Vec3};

/// Replaces the points of every occupied voxel with their centroid.
///
/// The voxel edge is `ratio` times the longest OBB axis length. Voxels form an
/// axis-aligned grid anchored at the cloud's minimum corner; points on the far
/// boundary fall into the last voxel. Output is ordered by voxel key.
pub fn voxel_downsample(cloud: &PointCloud, ratio: f64) -> Result<PointCloud> {
    if !(ratio > 0.0 && ratio <= 1.0) {
        return Err(Error::InvalidParameter(format!(
            "voxel ratio must be in (0, 1], got {ratio}"
        )));
    }
    cloud.require_nonempty()?;
    let edge = ratio * 2.0 * compute_obb(cloud)?.longest_half_extent();
    if edge <= 0.0 {
        // every point coincides
        return Ok(PointCloud::new(vec![cloud.centroid().unwrap_or_else(Point3::origin)]));
    }
    let grid = VoxelGrid::new(&cloud.points, edge);
    let mut cells: BTreeMap<[usize; 3], (Vec3, usize)> = BTreeMap::new();
    for p in &cloud.points {
        let entry = cells.entry(grid.key(p)).or_insert((Vec3::zeros(), 0));
        entry.0 += p.coords;
        entry.1 += 1;
    }
    let points = cells
        .into_values()
        .map(|(sum, count)| Point3::from(sum / count as f64))
        .collect();
    Ok(PointCloud::new(points))
}

pub(crate) struct VoxelGrid {
    origin: Point3,
    edge: f64,
    dims: [usize; 3],
}

impl VoxelGrid {
    pub(crate) fn new(points: &[Point3], edge: f64) -> Self {
        let mut lo = [f64::INFINITY; 3];
        let mut hi = [f64::NEG_INFINITY; 3];
        for p in points {
            for k in 0..3 {
                lo[k] = lo[k].min(p[k]);
                hi[k] = hi[k].max(p[k]);
            }
        }
        let dims = [0, 1, 2].map(|k| (((hi[k] - lo[k]) / edge).ceil() as usize).max(1));
        Self {
            origin: Point3::new(lo[0], lo[1], lo[2]),
            edge,
            dims,
        }
    }

    pub(crate) fn key(&self, p: &Point3) -> [usize; 3] {
        [0, 1, 2].map(|k| {
            let t = ((p[k] - self.origin[k]) / self.edge).floor();
            (t.max(0.0) as usize).min(self.dims[k] - 1)
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use std::collections::HashSet;

    /// Independent bucketing: integer keys computed straight from the
    /// definition, collected in a hash set.
    fn oracle_count(points: &[Point3], edge: f64) -> usize {
        let min = |k: usize| points.iter().map(|p| p[k]).fold(f64::INFINITY, f64::min);
        let max = |k: usize| points.iter().map(|p| p[k]).fold(f64::NEG_INFINITY, f64::max);
        let mut keys = HashSet::new();
        for p in points {
            let mut key = [0i64; 3];
            for k in 0..3 {
                let n = ((max(k) - min(k)) / edge).ceil().max(1.0) as i64;
                key[k] = (((p[k] - min(k)) / edge).floor() as i64).clamp(0, n - 1);
            }
            keys.insert(key);
        }
        keys.len()
    }

    #[test]
    fn two_points_in_one_voxel_average() {
        let cloud = PointCloud::new(vec![Point3::origin(), Point3::new(0.1, 0.0, 0.0)]);
        let out = voxel_downsample(&cloud, 1.0).unwrap();
        assert_eq!(out.len(), 1);
        assert_abs_diff_eq!(out.points[0], Point3::new(0.05, 0.0, 0.0), epsilon = 1e-15);
    }

    #[test]
    fn distinct_voxels_are_identity() {
        let pts: Vec<Point3> = (0..5).map(|i| Point3::new(i as f64, 0.0, 0.0)).collect();
        let mut out = voxel_downsample(&PointCloud::new(pts.clone()), 0.2).unwrap().points;
        out.sort_by(|a, b| a.x.total_cmp(&b.x));
        assert_eq!(out, pts);
    }

    #[test]
    fn unit_cube_count_matches_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(1000);
        let pts: Vec<Point3> = (0..1000)
            .map(|_| Point3::new(rng.gen(), rng.gen(), rng.gen()))
            .collect();
        let cloud = PointCloud::new(pts.clone());
        let edge = 0.05 * 2.0 * compute_obb(&cloud).unwrap().longest_half_extent();
        let out = voxel_downsample(&cloud, 0.05).unwrap();
        assert_eq!(out.len(), oracle_count(&pts, edge));
        assert!(out.len() <= 1000);
    }

    #[test]
    fn ratio_out_of_range() {
        let cloud = PointCloud::new(vec![Point3::origin()]);
        for r in [0.0, -0.1, 1.5, f64::NAN] {
            assert!(matches!(voxel_downsample(&cloud, r), Err(Error::InvalidParameter(_))));
        }
    }

    #[test]
    fn coincident_points_collapse() {
        let cloud = PointCloud::new(vec![Point3::new(1.0, 2.0, 3.0); 4]);
        let out = voxel_downsample(&cloud, 0.5).unwrap();
        assert_eq!(out.points, vec![Point3::new(1.0, 2.0, 3.0)]);
    }

    proptest! {
        #[test]
        fn count_equals_bucketing_oracle(
            coords in prop::collection::vec((0.0f64..10.0, 0.0f64..3.0, 0.0f64..1.0), 2..400),
            ratio in 0.02f64..0.5,
        ) {
            let pts: Vec<Point3> = coords.iter().map(|&(x, y, z)| Point3::new(x, y, z)).collect();
            let cloud = PointCloud::new(pts.clone());
            let edge = ratio * 2.0 * compute_obb(&cloud).unwrap().longest_half_extent();
            prop_assume!(edge > 0.0);
            let out = voxel_downsample(&cloud, ratio).unwrap();
            prop_assert_eq!(out.len(), oracle_count(&pts, edge));
        }
    }
}
