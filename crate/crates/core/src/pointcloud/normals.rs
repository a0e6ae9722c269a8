use std::cmp::Reverse;
use std::collections::BinaryHeap;

use rayon::prelude::*;

use super::{compute_obb, covariance, sorted_eigen, KdIndex, PointCloud};
use crate::{Error, Result, Vec3};

/// Neighborhood size used for PCA normals and the orientation graph.
pub const DEFAULT_NORMAL_K: usize = 16;

/// Second covariance eigenvalue below this fraction of the first means the
/// neighborhood is (numerically) collinear.
const COLLINEAR_TOL: f64 = 1e-10;

#[derive(Debug, Clone, Default, PartialEq)]
pub struct NormalReport {
    /// Points whose neighborhood covariance was rank-deficient beyond a plane.
    pub degenerate: Vec<usize>,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct OrientReport {
    pub flipped: usize,
    pub components: usize,
}

/// PCA normals: the smallest-eigenvalue eigenvector of each point's
/// neighborhood covariance (the point and its `k` nearest neighbors).
///
/// Signs are arbitrary; run [`orient_normals`] afterwards.
pub fn estimate_normals(cloud: &PointCloud, k: usize) -> Result<(PointCloud, NormalReport)> {
    if k < 3 {
        return Err(Error::InvalidParameter(format!("normal k must be >= 3, got {k}")));
    }
    if cloud.len() < 3 {
        return Err(Error::InvalidParameter(format!(
            "normal estimation needs at least 3 points, got {}",
            cloud.len()
        )));
    }
    let index = KdIndex::build(&cloud.points);
    let results: Vec<(Vec3, bool)> = cloud
        .points
        .par_iter()
        .map(|p| {
            let hood: Vec<_> = index.knn(p, k + 1).iter().map(|n| cloud.points[n.index]).collect();
            let (_, cov) = covariance(&hood);
            let (values, vectors) = sorted_eigen(cov);
            let scale = values[0].max(f64::MIN_POSITIVE);
            if values[0] <= 0.0 || values[1] <= COLLINEAR_TOL * scale {
                (perpendicular(vectors[0]), true)
            } else {
                (vectors[2], false)
            }
        })
        .collect();

    let mut report = NormalReport::default();
    let mut normals = Vec::with_capacity(results.len());
    for (i, (n, degenerate)) in results.into_iter().enumerate() {
        if degenerate {
            report.degenerate.push(i);
        }
        normals.push(n);
    }
    if !report.degenerate.is_empty() {
        log::warn!(
            "{} of {} neighborhoods are collinear; their normals are arbitrary perpendiculars",
            report.degenerate.len(),
            cloud.len()
        );
    }
    Ok((
        PointCloud {
            points: cloud.points.clone(),
            normals: Some(normals),
        },
        report,
    ))
}

fn perpendicular(dir: Vec3) -> Vec3 {
    if dir.norm_squared() == 0.0 {
        return Vec3::z();
    }
    let least = (0..3)
        .min_by(|&a, &b| dir[a].abs().total_cmp(&dir[b].abs()))
        .unwrap_or(2);
    dir.cross(&Vec3::ith(least, 1.0)).normalize()
}

/// Makes normal signs consistent by propagating along a minimum spanning tree
/// of the k-NN graph with edge weight `1 - |n_a . n_b|`.
///
/// Each connected component is seeded at its point of maximal coordinate along
/// the cloud's shortest OBB axis, whose normal is forced to point along that
/// axis.
pub fn orient_normals(cloud: &PointCloud, k: usize) -> Result<(PointCloud, OrientReport)> {
    let Some(normals) = &cloud.normals else {
        return Err(Error::InvalidParameter("orient_normals requires normals".into()));
    };
    cloud.require_nonempty()?;
    let mut normals = normals.clone();
    let n = cloud.len();
    let index = KdIndex::build(&cloud.points);
    let adjacency = knn_graph(&index, &cloud.points, k);

    let axis = compute_obb(cloud)?.shortest_axis();
    let mut seeds: Vec<usize> = (0..n).collect();
    let height: Vec<f64> = cloud.points.iter().map(|p| p.coords.dot(&axis)).collect();
    seeds.sort_by(|&a, &b| height[b].total_cmp(&height[a]).then(a.cmp(&b)));

    let mut visited = vec![false; n];
    let mut report = OrientReport::default();
    let mut heap = BinaryHeap::new();
    for seed in seeds {
        if visited[seed] {
            continue;
        }
        report.components += 1;
        if normals[seed].dot(&axis) < 0.0 {
            normals[seed] = -normals[seed];
            report.flipped += 1;
        }
        visited[seed] = true;
        push_edges(&mut heap, &adjacency, &normals, &visited, seed);
        while let Some(Reverse((_, to, from))) = heap.pop() {
            if visited[to] {
                continue;
            }
            visited[to] = true;
            if normals[from].dot(&normals[to]) < 0.0 {
                normals[to] = -normals[to];
                report.flipped += 1;
            }
            push_edges(&mut heap, &adjacency, &normals, &visited, to);
        }
    }
    Ok((
        PointCloud {
            points: cloud.points.clone(),
            normals: Some(normals),
        },
        report,
    ))
}

/// Symmetric k-NN adjacency, each list sorted and deduplicated.
fn knn_graph(index: &KdIndex, points: &[crate::Point3], k: usize) -> Vec<Vec<usize>> {
    let n = points.len();
    let directed: Vec<Vec<usize>> = points
        .par_iter()
        .enumerate()
        .map(|(i, p)| {
            index
                .knn(p, k + 1)
                .into_iter()
                .map(|nb| nb.index)
                .filter(|&j| j != i)
                .collect()
        })
        .collect();
    let mut adjacency = directed.clone();
    for (i, list) in directed.iter().enumerate() {
        for &j in list {
            adjacency[j].push(i);
        }
    }
    for list in &mut adjacency {
        list.sort_unstable();
        list.dedup();
    }
    debug_assert_eq!(adjacency.len(), n);
    adjacency
}

fn push_edges(
    heap: &mut BinaryHeap<Reverse<(u64, usize, usize)>>,
    adjacency: &[Vec<usize>],
    normals: &[Vec3],
    visited: &[bool],
    from: usize,
) {
    for &to in &adjacency[from] {
        if !visited[to] {
            let w = (1.0 - normals[from].dot(&normals[to]).abs()).max(0.0);
            // nonnegative floats order like their bit patterns
            heap.push(Reverse((w.to_bits(), to, from)));
        }
    }
}
