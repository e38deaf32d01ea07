//! Recursive Bayesian test of observed points against the reference cloud.
//!
//! Hypothesis H0: the surface near a reference point is unchanged (the point lies on
//! or behind the wall plane). H1: something sits beyond a buffer slab of thickness
//! `d_buffer` in front of the wall.

use nalgebra::Vector2;

use crate::cloud::ReferenceCloud;
use crate::error::{Error, Result};
use crate::normal::normal_cdf;
use crate::pose::ObservedPoint;

pub const DEFAULT_D_BUFFER: f64 = 0.035;
pub const DEFAULT_PRIOR_H0: f64 = 0.8;
pub const DEFAULT_K_NN: usize = 5;
pub const DEFAULT_THRESHOLD: f64 = 0.5;
pub const DEFAULT_LINK_DISTANCE: f64 = 0.5;

/// Signed scores and half-space masses of one observation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PointLikelihoods {
    /// Normal-direction offset from the wall plane in standard deviations; negative
    /// in front of the wall.
    pub c0: f64,
    /// Same offset measured from the buffer plane.
    pub c1: f64,
    /// Gaussian mass on or behind the wall plane.
    pub l0: f64,
    /// Gaussian mass beyond the buffer plane.
    pub l1: f64,
}

/// Scores of `obs` against the plane through `p_ref` with inward normal `normal`.
pub fn plane_likelihoods(
    p_ref: &Vector2<f64>,
    normal: &Vector2<f64>,
    obs: &ObservedPoint,
    d_buffer: f64,
) -> Result<PointLikelihoods> {
    let var = normal.dot(&(obs.covariance * normal));
    if var.is_nan() || var <= 0.0 {
        return Err(Error::DegenerateVariance(var));
    }
    let sd = var.sqrt();
    let c0 = normal.dot(&(p_ref - obs.position)) / sd;
    let c1 = c0 + d_buffer / sd;
    Ok(PointLikelihoods { c0, c1, l0: normal_cdf(c0), l1: normal_cdf(-c1) })
}

/// Scores of `obs` against its Mahalanobis-nearest reference point.
pub fn point_likelihoods(cloud: &ReferenceCloud, obs: &ObservedPoint, d_buffer: f64) -> Result<PointLikelihoods> {
    assert!(d_buffer >= 0.0, "buffer thickness must be non-negative");
    let i = cloud.nearest_reference(obs);
    plane_likelihoods(&cloud.points()[i], &cloud.normals()[i], obs, d_buffer)
}

/// `−p ln p − (1−p) ln(1−p)` with `0 ln 0 = 0`.
pub fn binary_entropy(p: f64) -> f64 {
    let term = |q: f64| if q <= 0.0 { 0.0 } else { -q * q.ln() };
    term(p) + term(1.0 - p)
}

/// Per-reference-point probability of H0.
#[derive(Debug, Clone, PartialEq)]
pub struct AnomalyBelief {
    p_h0: Vec<f64>,
}

impl AnomalyBelief {
    pub fn new(n: usize, prior_h0: f64) -> Self {
        assert!((0.0..=1.0).contains(&prior_h0), "prior must be a probability");
        Self { p_h0: vec![prior_h0; n] }
    }

    pub fn from_probabilities(p_h0: Vec<f64>) -> Self {
        assert!(p_h0.iter().all(|p| (0.0..=1.0).contains(p)), "beliefs must be probabilities");
        Self { p_h0 }
    }

    pub fn len(&self) -> usize {
        self.p_h0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.p_h0.is_empty()
    }

    pub fn p_h0(&self) -> &[f64] {
        &self.p_h0
    }

    pub fn p_h1(&self, i: usize) -> f64 {
        1.0 - self.p_h0[i]
    }

    pub fn entropies(&self) -> Vec<f64> {
        self.p_h0.iter().map(|&p| binary_entropy(p)).collect()
    }
}

/// Bayes update of a two-hypothesis belief; `None` when both likelihoods vanish.
pub fn posterior_h0(prior_h0: f64, l0: f64, l1: f64) -> Option<f64> {
    let a = l0 * prior_h0;
    let b = l1 * (1.0 - prior_h0);
    let z = a + b;
    if z > 0.0 && z.is_finite() {
        Some(a / z)
    } else {
        None
    }
}

/// Outcome counts of one batch update.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct BatchReport {
    pub observations: usize,
    /// Reference points whose belief changed.
    pub updated: usize,
    /// Reference points left unchanged because both likelihoods underflowed.
    pub undefined: Vec<usize>,
}

/// Folds a set of observations into the beliefs.
///
/// Each observation is scored against its nearest reference point. Reference point
/// `i` pools the scores of all observations whose nearest reference lies in its
/// `k_nn` neighbourhood, forms `z = Σc/√n` for both hypotheses and applies Bayes'
/// rule with `L0 = Φ(z0)`, `L1 = Φ(−z1)`.
pub fn batch_update(
    cloud: &ReferenceCloud,
    beliefs: &AnomalyBelief,
    observations: &[ObservedPoint],
    d_buffer: f64,
    k_nn: usize,
) -> Result<(AnomalyBelief, BatchReport)> {
    if k_nn == 0 {
        return Err(Error::InvalidConfig("k_nn must be at least 1".into()));
    }
    if beliefs.len() != cloud.len() {
        return Err(Error::InvalidCloud(format!("{} beliefs for {} reference points", beliefs.len(), cloud.len())));
    }
    // Score sums and counts per nearest reference point.
    let mut sum0 = vec![0.0; cloud.len()];
    let mut sum1 = vec![0.0; cloud.len()];
    let mut count = vec![0usize; cloud.len()];
    for obs in observations {
        let j = cloud.nearest_reference(obs);
        let s = plane_likelihoods(&cloud.points()[j], &cloud.normals()[j], obs, d_buffer)?;
        sum0[j] += s.c0;
        sum1[j] += s.c1;
        count[j] += 1;
    }
    let mut next = beliefs.clone();
    let mut report = BatchReport { observations: observations.len(), ..Default::default() };
    for i in 0..cloud.len() {
        let (mut s0, mut s1, mut n) = (0.0, 0.0, 0usize);
        for &j in cloud.neighbors(i, k_nn) {
            s0 += sum0[j];
            s1 += sum1[j];
            n += count[j];
        }
        if n == 0 {
            continue;
        }
        let root = (n as f64).sqrt();
        let l0 = normal_cdf(s0 / root);
        let l1 = normal_cdf(-s1 / root);
        match posterior_h0(beliefs.p_h0[i], l0, l1) {
            Some(p) => {
                next.p_h0[i] = p;
                report.updated += 1;
            }
            None => report.undefined.push(i),
        }
    }
    Ok((next, report))
}

/// Entropy per reference point and its sum per region.
pub fn information_measures(beliefs: &AnomalyBelief, cloud: &ReferenceCloud) -> (Vec<f64>, Vec<f64>) {
    let mu_p = beliefs.entropies();
    let mut mu_r = vec![0.0; cloud.n_regions()];
    for (i, h) in mu_p.iter().enumerate() {
        mu_r[cloud.region_of(i)] += h;
    }
    (mu_p, mu_r)
}

/// Single-linkage clusters of points with `P(H1) ≥ threshold`, cut at `link_distance`.
/// Returns one centroid per cluster, ordered by the lowest member index.
pub fn extract_candidates(
    beliefs: &AnomalyBelief,
    cloud: &ReferenceCloud,
    threshold: f64,
    link_distance: f64,
) -> Vec<Vector2<f64>> {
    assert!(threshold > 0.0 && threshold < 1.0, "threshold must lie in (0, 1)");
    let members: Vec<usize> = (0..cloud.len()).filter(|&i| beliefs.p_h1(i) >= threshold).collect();
    let points: Vec<Vector2<f64>> = members.iter().map(|&i| cloud.points()[i]).collect();
    single_linkage(&points, link_distance)
        .into_iter()
        .map(|group| group.iter().map(|&k| points[k]).sum::<Vector2<f64>>() / group.len() as f64)
        .collect()
}

/// Connected components of the "within `link` of each other" relation, each sorted,
/// ordered by their first member.
pub fn single_linkage(points: &[Vector2<f64>], link: f64) -> Vec<Vec<usize>> {
    let mut parent: Vec<usize> = (0..points.len()).collect();
    fn root(parent: &mut [usize], mut i: usize) -> usize {
        while parent[i] != i {
            parent[i] = parent[parent[i]];
            i = parent[i];
        }
        i
    }
    let link2 = link * link;
    for a in 0..points.len() {
        for b in (a + 1)..points.len() {
            if (points[a] - points[b]).norm_squared() <= link2 {
                let (ra, rb) = (root(&mut parent, a), root(&mut parent, b));
                if ra != rb {
                    parent[ra.max(rb)] = ra.min(rb);
                }
            }
        }
    }
    let mut groups: Vec<Vec<usize>> = Vec::new();
    let mut slot = vec![usize::MAX; points.len()];
    for i in 0..points.len() {
        let r = root(&mut parent, i);
        if slot[r] == usize::MAX {
            slot[r] = groups.len();
            groups.push(Vec::new());
        }
        groups[slot[r]].push(i);
    }
    groups
}
