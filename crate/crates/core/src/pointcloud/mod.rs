//! Point-cloud container, IO, spatial index, normals, bounding boxes and
//! voxel downsampling.

pub mod io;
mod kdtree;
mod normals;
mod voxel;

pub use io::{read_cloud, write_cloud, write_cloud_tagged, CloudFormat};
pub use kdtree::{KdIndex, Neighbor};
pub use normals::{estimate_normals, orient_normals, NormalReport, OrientReport, DEFAULT_NORMAL_K};
pub use voxel::voxel_downsample;

use nalgebra::{Matrix3, SymmetricEigen};

use crate::{Error, Point3, Result, Vec3};

/// Tolerance on the unit length of stored normals.
pub const NORMAL_UNIT_TOL: f64 = 1e-6;

/// An ordered set of points with optional per-point unit normals.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct PointCloud {
    pub points: Vec<Point3>,
    pub normals: Option<Vec<Vec3>>,
}

impl PointCloud {
    pub fn new(points: Vec<Point3>) -> Self {
        Self { points, normals: None }
    }

    pub fn with_normals(points: Vec<Point3>, normals: Vec<Vec3>) -> Result<Self> {
        let cloud = Self {
            points,
            normals: Some(normals),
        };
        cloud.validate()?;
        Ok(cloud)
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn has_normals(&self) -> bool {
        self.normals.is_some()
    }

    /// Checks coordinate finiteness and normal length/count.
    pub fn validate(&self) -> Result<()> {
        if let Some(i) = self
            .points
            .iter()
            .position(|p| !(p.x.is_finite() && p.y.is_finite() && p.z.is_finite()))
        {
            return Err(Error::InvalidParameter(format!(
                "point {i} has a non-finite coordinate"
            )));
        }
        if let Some(normals) = &self.normals {
            if normals.len() != self.points.len() {
                return Err(Error::InvalidParameter(format!(
                    "{} normals for {} points",
                    normals.len(),
                    self.points.len()
                )));
            }
            if let Some(i) = normals.iter().position(|n| (n.norm() - 1.0).abs() > NORMAL_UNIT_TOL) {
                return Err(Error::InvalidParameter(format!("normal {i} is not unit length")));
            }
        }
        Ok(())
    }

    pub(crate) fn require_nonempty(&self) -> Result<()> {
        if self.is_empty() {
            Err(Error::EmptyCloud)
        } else {
            Ok(())
        }
    }

    pub fn centroid(&self) -> Option<Point3> {
        if self.is_empty() {
            return None;
        }
        let sum = self.points.iter().fold(Vec3::zeros(), |acc, p| acc + p.coords);
        Some(Point3::from(sum / self.len() as f64))
    }

    /// Appends `other`; normals are kept only if both sides carry them.
    pub fn extend(&mut self, other: &PointCloud) {
        match (&mut self.normals, &other.normals) {
            (Some(a), Some(b)) => a.extend_from_slice(b),
            _ => self.normals = None,
        }
        self.points.extend_from_slice(&other.points);
    }
}

/// Box aligned with the principal axes of a point set.
#[derive(Debug, Clone, PartialEq)]
pub struct OrientedBoundingBox {
    pub center: Point3,
    /// Covariance eigenvectors in descending eigenvalue order. Each axis is
    /// signed so that its largest-magnitude component is positive.
    pub axes: [Vec3; 3],
    pub half_extents: [f64; 3],
    /// Indices into `axes` sorted by descending half extent.
    pub extent_order: [usize; 3],
}

impl OrientedBoundingBox {
    pub fn longest_half_extent(&self) -> f64 {
        self.half_extents[self.extent_order[0]]
    }

    pub fn longest_axis(&self) -> Vec3 {
        self.axes[self.extent_order[0]]
    }

    pub fn shortest_axis(&self) -> Vec3 {
        self.axes[self.extent_order[2]]
    }

    /// Full diagonal length.
    pub fn diagonal(&self) -> f64 {
        let [a, b, c] = self.half_extents;
        2.0 * (a * a + b * b + c * c).sqrt()
    }

    pub fn volume(&self) -> f64 {
        let [a, b, c] = self.half_extents;
        8.0 * a * b * c
    }
}

pub(crate) fn covariance(points: &[Point3]) -> (Point3, Matrix3<f64>) {
    let n = points.len() as f64;
    let mean = points.iter().fold(Vec3::zeros(), |acc, p| acc + p.coords) / n;
    let mut cov = Matrix3::zeros();
    for p in points {
        let d = p.coords - mean;
        cov += d * d.transpose();
    }
    (Point3::from(mean), cov / n)
}

/// Eigen-decomposition of a symmetric 3x3 matrix, eigenvalues descending,
/// eigenvectors sign-normalized.
pub(crate) fn sorted_eigen(m: Matrix3<f64>) -> ([f64; 3], [Vec3; 3]) {
    let eig = SymmetricEigen::new(m);
    let mut order = [0usize, 1, 2];
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
    let values = order.map(|i| eig.eigenvalues[i]);
    let vectors = order.map(|i| canonical_sign(eig.eigenvectors.column(i).into_owned().normalize()));
    (values, vectors)
}

/// Flips `v` so that its largest-magnitude component is positive.
pub(crate) fn canonical_sign(v: Vec3) -> Vec3 {
    let mut best = 0;
    for i in 1..3 {
        if v[i].abs() > v[best].abs() {
            best = i;
        }
    }
    if v[best] < 0.0 {
        -v
    } else {
        v
    }
}

/// OBB from the eigenvectors of the full-cloud covariance.
pub fn compute_obb(cloud: &PointCloud) -> Result<OrientedBoundingBox> {
    cloud.require_nonempty()?;
    let (mean, cov) = covariance(&cloud.points);
    let (_, mut axes) = sorted_eigen(cov);
    // Re-orthonormalize; SymmetricEigen is orthogonal to ~1e-15 already.
    axes[1] = (axes[1] - axes[0] * axes[0].dot(&axes[1])).normalize();
    let third = axes[0].cross(&axes[1]);
    axes[2] = if third.dot(&axes[2]) < 0.0 { -third } else { third };

    let mut lo = [f64::INFINITY; 3];
    let mut hi = [f64::NEG_INFINITY; 3];
    for p in &cloud.points {
        let d = p - mean;
        for k in 0..3 {
            let t = d.dot(&axes[k]);
            lo[k] = lo[k].min(t);
            hi[k] = hi[k].max(t);
        }
    }
    let mut center = mean;
    let mut half_extents = [0.0; 3];
    for k in 0..3 {
        center += axes[k] * (0.5 * (lo[k] + hi[k]));
        half_extents[k] = 0.5 * (hi[k] - lo[k]);
    }
    let mut extent_order = [0usize, 1, 2];
    extent_order.sort_by(|&a, &b| half_extents[b].total_cmp(&half_extents[a]).then(a.cmp(&b)));
    Ok(OrientedBoundingBox {
        center,
        axes,
        half_extents,
        extent_order,
    })
}
