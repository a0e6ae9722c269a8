use crate::pointcloud::{compute_obb, PointCloud};
use crate::{Error, Point3, Result, Vec3};

/// Planar frame used for uniform parameterization.
///
/// `normal` is the cloud's shortest OBB axis. In the plane orthogonal to it,
/// `u_axis`/`v_axis` follow the edges of the minimum-area rectangle enclosing
/// the projected points; `u_axis` is the edge closest to the longest OBB axis
/// and `u_axis x v_axis = normal`.
#[derive(Debug, Clone, PartialEq)]
pub struct Footprint {
    pub origin: Point3,
    pub u_axis: Vec3,
    pub v_axis: Vec3,
    pub normal: Vec3,
    /// Planar coordinate ranges `[min, max]` along `u_axis` and `v_axis`.
    pub u_range: [f64; 2],
    pub v_range: [f64; 2],
}

impl Footprint {
    pub fn from_cloud(cloud: &PointCloud) -> Result<Self> {
        let obb = compute_obb(cloud)?;
        let normal = obb.shortest_axis();
        let e1 = obb.longest_axis();
        let e2 = normal.cross(&e1);
        let origin = obb.center;
        let planar: Vec<[f64; 2]> = cloud
            .points
            .iter()
            .map(|p| {
                let d = p - origin;
                [d.dot(&e1), d.dot(&e2)]
            })
            .collect();
        let dir = min_area_direction(&planar);
        // candidate in-plane axes: the rectangle edge and its perpendicular
        let cand = [e1 * dir[0] + e2 * dir[1], e1 * -dir[1] + e2 * dir[0]];
        let mut u_axis = if cand[0].dot(&e1).abs() >= cand[1].dot(&e1).abs() {
            cand[0]
        } else {
            cand[1]
        };
        if u_axis.dot(&e1) < 0.0 {
            u_axis = -u_axis;
        }
        let u_axis = u_axis.normalize();
        let v_axis = normal.cross(&u_axis).normalize();
        let mut fp = Footprint {
            origin,
            u_axis,
            v_axis,
            normal,
            u_range: [f64::INFINITY, f64::NEG_INFINITY],
            v_range: [f64::INFINITY, f64::NEG_INFINITY],
        };
        for p in &cloud.points {
            let [a, b, _] = fp.local(p);
            fp.u_range = [fp.u_range[0].min(a), fp.u_range[1].max(a)];
            fp.v_range = [fp.v_range[0].min(b), fp.v_range[1].max(b)];
        }
        let scale = (fp.u_range[1] - fp.u_range[0]).max(fp.v_range[1] - fp.v_range[0]);
        if !(fp.u_range[1] - fp.u_range[0] > 1e-12 * scale.max(1e-300)) {
            return Err(Error::DegenerateFootprint { axis: 'u' });
        }
        if !(fp.v_range[1] - fp.v_range[0] > 1e-12 * scale) {
            return Err(Error::DegenerateFootprint { axis: 'v' });
        }
        Ok(fp)
    }

    /// Coordinates `[along u, along v, height]` relative to `origin`.
    pub fn local(&self, p: &Point3) -> [f64; 3] {
        let d = p - self.origin;
        [d.dot(&self.u_axis), d.dot(&self.v_axis), d.dot(&self.normal)]
    }

    /// Affinely normalized planar coordinates (not clamped).
    pub fn normalize(&self, p: &Point3) -> (f64, f64) {
        let [a, b, _] = self.local(p);
        (
            (a - self.u_range[0]) / (self.u_range[1] - self.u_range[0]),
            (b - self.v_range[0]) / (self.v_range[1] - self.v_range[0]),
        )
    }

    /// World point at normalized planar coordinates and height.
    pub fn world(&self, s: f64, t: f64, height: f64) -> Point3 {
        let a = self.u_range[0] + s * (self.u_range[1] - self.u_range[0]);
        let b = self.v_range[0] + t * (self.v_range[1] - self.v_range[0]);
        self.origin + self.u_axis * a + self.v_axis * b + self.normal * height
    }

    pub fn extent_u(&self) -> f64 {
        self.u_range[1] - self.u_range[0]
    }

    pub fn extent_v(&self) -> f64 {
        self.v_range[1] - self.v_range[0]
    }

    /// Larger of the two planar extents.
    pub fn scale(&self) -> f64 {
        self.extent_u().max(self.extent_v())
    }
}

fn cross2(o: [f64; 2], a: [f64; 2], b: [f64; 2]) -> f64 {
    (a[0] - o[0]) * (b[1] - o[1]) - (a[1] - o[1]) * (b[0] - o[0])
}

/// Convex hull by monotone chain, counter-clockwise, collinear points dropped.
pub(crate) fn convex_hull(points: &[[f64; 2]]) -> Vec<[f64; 2]> {
    let mut pts = points.to_vec();
    pts.sort_by(|a, b| a[0].total_cmp(&b[0]).then(a[1].total_cmp(&b[1])));
    pts.dedup();
    if pts.len() < 3 {
        return pts;
    }
    let mut hull: Vec<[f64; 2]> = Vec::with_capacity(2 * pts.len());
    for pass in 0..2 {
        let start = hull.len();
        let iter: Box<dyn Iterator<Item = &[f64; 2]>> = if pass == 0 {
            Box::new(pts.iter())
        } else {
            Box::new(pts.iter().rev())
        };
        for &p in iter {
            while hull.len() >= start + 2 && cross2(hull[hull.len() - 2], hull[hull.len() - 1], p) <= 0.0 {
                hull.pop();
            }
            hull.push(p);
        }
        hull.pop();
    }
    hull
}

/// Unit direction of an edge of the minimum-area enclosing rectangle.
/// Falls back to the first coordinate axis for degenerate inputs.
fn min_area_direction(points: &[[f64; 2]]) -> [f64; 2] {
    let hull = convex_hull(points);
    if hull.len() < 3 {
        return [1.0, 0.0];
    }
    let mut best = ([1.0, 0.0], f64::INFINITY);
    for i in 0..hull.len() {
        let a = hull[i];
        let b = hull[(i + 1) % hull.len()];
        let (dx, dy) = (b[0] - a[0], b[1] - a[1]);
        let len = (dx * dx + dy * dy).sqrt();
        if len == 0.0 {
            continue;
        }
        let d = [dx / len, dy / len];
        let (mut lo_a, mut hi_a, mut lo_b, mut hi_b) =
            (f64::INFINITY, f64::NEG_INFINITY, f64::INFINITY, f64::NEG_INFINITY);
        for p in &hull {
            let s = p[0] * d[0] + p[1] * d[1];
            let t = -p[0] * d[1] + p[1] * d[0];
            lo_a = lo_a.min(s);
            hi_a = hi_a.max(s);
            lo_b = lo_b.min(t);
            hi_b = hi_b.max(t);
        }
        let area = (hi_a - lo_a) * (hi_b - lo_b);
        // relative slack keeps the choice stable among near-equal edges
        if area < best.1 * (1.0 - 1e-12) {
            best = (d, area);
        }
    }
    best.0
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use nalgebra::Rotation3;

    fn grid(nx: usize, ny: usize, sx: f64, sy: f64) -> Vec<Point3> {
        let mut pts = Vec::new();
        for j in 0..ny {
            for i in 0..nx {
                let x = sx * i as f64 / (nx - 1) as f64;
                let y = sy * j as f64 / (ny - 1) as f64;
                pts.push(Point3::new(x, y, 0.05 * (3.0 * x).sin() * (2.0 * y).cos()));
            }
        }
        pts
    }

    #[test]
    fn square_terrain_gets_axis_aligned_frame() {
        // equal x/y variance leaves the covariance axes arbitrary in-plane
        let fp = Footprint::from_cloud(&PointCloud::new(grid(40, 40, 1.0, 1.0))).unwrap();
        assert!(fp.normal.z > 0.99);
        let ux = fp.u_axis.x.abs().max(fp.u_axis.y.abs());
        assert_abs_diff_eq!(ux, 1.0, epsilon = 1e-3);
        assert_abs_diff_eq!(fp.u_axis.cross(&fp.v_axis), fp.normal, epsilon = 1e-12);
        assert_abs_diff_eq!(fp.extent_u(), 1.0, epsilon = 2e-3);
    }

    #[test]
    fn rotated_rectangle_recovered() {
        let rot = Rotation3::from_euler_angles(0.2, -0.1, 0.8);
        let pts: Vec<Point3> = grid(30, 15, 4.0, 2.0)
            .iter()
            .map(|p| Point3::from(rot * p.coords + Vec3::new(10.0, 20.0, 5.0)))
            .collect();
        let fp = Footprint::from_cloud(&PointCloud::new(pts)).unwrap();
        assert_abs_diff_eq!(fp.extent_u(), 4.0, epsilon = 1e-3);
        assert_abs_diff_eq!(fp.extent_v(), 2.0, epsilon = 1e-3);
    }

    #[test]
    fn collinear_cloud_is_degenerate() {
        let pts = (0..10).map(|i| Point3::new(i as f64, 2.0 * i as f64, 0.0)).collect();
        assert!(matches!(
            Footprint::from_cloud(&PointCloud::new(pts)),
            Err(Error::DegenerateFootprint { .. })
        ));
    }

    #[test]
    fn hull_of_square_with_interior_points() {
        let mut pts = vec![[0.0, 0.0], [1.0, 0.0], [1.0, 1.0], [0.0, 1.0], [0.5, 0.5], [0.5, 0.0]];
        pts.reverse();
        let hull = convex_hull(&pts);
        assert_eq!(hull.len(), 4);
    }
}
