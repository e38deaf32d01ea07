//! Reference point cloud: wall samples with inward normals, region labels and
//! k-nearest-neighbour lists.

use std::collections::HashMap;

use nalgebra::{Matrix2, SymmetricEigen, Vector2};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::pose::ObservedPoint;

const UNIT_TOL: f64 = 1e-9;

/// Uniform bucket grid over the cloud's bounding box.
#[derive(Debug, Clone)]
struct SpatialHash {
    cell: f64,
    origin: Vector2<f64>,
    cols: i64,
    rows: i64,
    buckets: HashMap<(i64, i64), Vec<usize>>,
}

impl SpatialHash {
    fn new(points: &[Vector2<f64>], cell: f64) -> Self {
        let mut lo = Vector2::repeat(f64::INFINITY);
        let mut hi = Vector2::repeat(f64::NEG_INFINITY);
        for p in points {
            lo = lo.inf(p);
            hi = hi.sup(p);
        }
        let cols = ((hi.x - lo.x) / cell).floor() as i64 + 1;
        let rows = ((hi.y - lo.y) / cell).floor() as i64 + 1;
        let mut hash = Self { cell, origin: lo, cols, rows, buckets: HashMap::new() };
        for (i, p) in points.iter().enumerate() {
            let key = hash.key(p);
            hash.buckets.entry(key).or_default().push(i);
        }
        hash
    }

    fn key(&self, p: &Vector2<f64>) -> (i64, i64) {
        (((p.x - self.origin.x) / self.cell).floor() as i64, ((p.y - self.origin.y) / self.cell).floor() as i64)
    }

    /// First and last ring (Chebyshev distance from `key`) that touch the bucket box.
    fn ring_span(&self, key: (i64, i64)) -> (i64, i64) {
        let gap = |k: i64, n: i64| {
            if k < 0 {
                -k
            } else if k >= n {
                k - n + 1
            } else {
                0
            }
        };
        let first = gap(key.0, self.cols).max(gap(key.1, self.rows));
        let far = |k: i64, n: i64| k.abs().max((n - 1 - k).abs());
        (first, far(key.0, self.cols).max(far(key.1, self.rows)))
    }

    /// Calls `f` on the members of every bucket at Chebyshev distance `r` from `key`.
    fn ring(&self, key: (i64, i64), r: i64, mut f: impl FnMut(usize)) {
        let mut visit = |cx: i64, cy: i64| {
            if let Some(b) = self.buckets.get(&(cx, cy)) {
                b.iter().for_each(|&i| f(i));
            }
        };
        if r == 0 {
            visit(key.0, key.1);
            return;
        }
        let (x0, x1) = ((key.0 - r).max(0), (key.0 + r).min(self.cols - 1));
        let (y0, y1) = ((key.1 - r + 1).max(0), (key.1 + r - 1).min(self.rows - 1));
        for y in [key.1 - r, key.1 + r] {
            if (0..self.rows).contains(&y) {
                (x0..=x1).for_each(|x| visit(x, y));
            }
        }
        for x in [key.0 - r, key.0 + r] {
            if (0..self.cols).contains(&x) {
                (y0..=y1).for_each(|y| visit(x, y));
            }
        }
    }
}

/// Wall samples used as the reference model for anomaly detection.
#[derive(Debug, Clone)]
pub struct ReferenceCloud {
    points: Vec<Vector2<f64>>,
    normals: Vec<Vector2<f64>>,
    regions: Vec<usize>,
    n_regions: usize,
    /// `knn[i]` lists the nearest reference points to `i`, itself first, by
    /// increasing distance with ties by index.
    knn: Vec<Vec<usize>>,
    hash: SpatialHash,
}

impl ReferenceCloud {
    pub fn new(
        points: Vec<Vector2<f64>>,
        normals: Vec<Vector2<f64>>,
        regions: Vec<usize>,
        n_regions: usize,
        k_nn: usize,
    ) -> Result<Self> {
        if points.is_empty() {
            return Err(Error::InvalidCloud("no points".into()));
        }
        if normals.len() != points.len() || regions.len() != points.len() {
            return Err(Error::InvalidCloud(format!(
                "{} points, {} normals, {} region labels",
                points.len(),
                normals.len(),
                regions.len()
            )));
        }
        if k_nn == 0 {
            return Err(Error::InvalidCloud("k_nn must be at least 1".into()));
        }
        if let Some(i) = normals.iter().position(|n| (n.norm() - 1.0).abs() > UNIT_TOL) {
            return Err(Error::InvalidCloud(format!("normal {i} is not unit length")));
        }
        if let Some(i) = regions.iter().position(|&r| r >= n_regions) {
            return Err(Error::InvalidCloud(format!("point {i} has region {} >= {n_regions}", regions[i])));
        }
        if points.iter().any(|p| !p.x.is_finite() || !p.y.is_finite()) {
            return Err(Error::InvalidCloud("non-finite coordinate".into()));
        }
        let hash = SpatialHash::new(&points, bucket_size(&points));
        let mut cloud = Self { points, normals, regions, n_regions, knn: Vec::new(), hash };
        cloud.knn = (0..cloud.len()).map(|i| cloud.k_nearest(&cloud.points[i], k_nn)).collect();
        Ok(cloud)
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn n_regions(&self) -> usize {
        self.n_regions
    }

    pub fn points(&self) -> &[Vector2<f64>] {
        &self.points
    }

    pub fn normals(&self) -> &[Vector2<f64>] {
        &self.normals
    }

    pub fn regions(&self) -> &[usize] {
        &self.regions
    }

    pub fn region_of(&self, i: usize) -> usize {
        self.regions[i]
    }

    /// Length of the stored neighbour lists.
    pub fn k_nn(&self) -> usize {
        self.knn[0].len()
    }

    /// The `k` nearest references of point `i` (itself included); `k` is capped by
    /// the stored list length.
    pub fn neighbors(&self, i: usize, k: usize) -> &[usize] {
        let list = &self.knn[i];
        &list[..k.min(list.len())]
    }

    /// Indices of the `k` points closest to `q` in Euclidean distance.
    pub fn k_nearest(&self, q: &Vector2<f64>, k: usize) -> Vec<usize> {
        let k = k.min(self.len());
        let key = self.hash.key(q);
        let (first, last) = self.hash.ring_span(key);
        let mut best: Vec<(f64, usize)> = Vec::with_capacity(k + 1);
        for r in first..=last {
            self.hash.ring(key, r, |i| {
                let d = (self.points[i] - q).norm_squared();
                let entry = (d, i);
                if best.len() < k || lex_less(entry, best[best.len() - 1]) {
                    let at = best.partition_point(|&e| lex_less(e, entry));
                    best.insert(at, entry);
                    best.truncate(k);
                }
            });
            // Everything in later rings is at least r·cell away.
            if best.len() == k {
                let reach = r as f64 * self.hash.cell;
                if reach * reach > best[k - 1].0 {
                    break;
                }
            }
        }
        best.into_iter().map(|(_, i)| i).collect()
    }

    /// Reference point minimising the Mahalanobis distance under the observation's
    /// covariance; ties go to the lowest index.
    pub fn nearest_reference(&self, obs: &ObservedPoint) -> usize {
        let info = obs.covariance.try_inverse().expect("observation covariance is positive definite");
        let lambda_max = SymmetricEigen::new(obs.covariance).eigenvalues.max();
        self.nearest_with(&obs.position, &info, lambda_max)
    }

    fn nearest_with(&self, q: &Vector2<f64>, info: &Matrix2<f64>, lambda_max: f64) -> usize {
        let key = self.hash.key(q);
        let (first, last) = self.hash.ring_span(key);
        let mut best = (f64::INFINITY, usize::MAX);
        for r in first..=last {
            self.hash.ring(key, r, |i| {
                let d = self.points[i] - q;
                let entry = (d.dot(&(info * d)), i);
                if lex_less(entry, best) {
                    best = entry;
                }
            });
            // dᵀΣ⁻¹d ≥ ‖d‖²/λ_max and later rings are at least r·cell away.
            let reach = r as f64 * self.hash.cell;
            if best.1 != usize::MAX && reach * reach / lambda_max > best.0 {
                break;
            }
        }
        best.1
    }
}

fn lex_less(a: (f64, usize), b: (f64, usize)) -> bool {
    a.0 < b.0 || (a.0 == b.0 && a.1 < b.1)
}

/// Bucket edge giving a handful of points per occupied bucket.
fn bucket_size(points: &[Vector2<f64>]) -> f64 {
    let mut lo = Vector2::repeat(f64::INFINITY);
    let mut hi = Vector2::repeat(f64::NEG_INFINITY);
    for p in points {
        lo = lo.inf(p);
        hi = hi.sup(p);
    }
    let extent = (hi - lo).max().max(1e-9);
    // Wall samples lie on curves, so the count per bucket scales with its edge.
    (extent * 8.0 / points.len() as f64).max(extent / 4096.0)
}

/// Text form of a reference cloud.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct CloudDocument {
    pub points: Vec<[f64; 2]>,
    pub normals: Vec<[f64; 2]>,
    pub regions: Vec<usize>,
}

impl CloudDocument {
    pub fn from_cloud(c: &ReferenceCloud) -> Self {
        Self {
            points: c.points.iter().map(|p| [p.x, p.y]).collect(),
            normals: c.normals.iter().map(|p| [p.x, p.y]).collect(),
            regions: c.regions.clone(),
        }
    }

    pub fn into_cloud(self, n_regions: usize, k_nn: usize) -> Result<ReferenceCloud> {
        ReferenceCloud::new(
            self.points.iter().map(|p| Vector2::new(p[0], p[1])).collect(),
            self.normals.iter().map(|p| Vector2::new(p[0], p[1])).collect(),
            self.regions,
            n_regions,
            k_nn,
        )
    }
}
