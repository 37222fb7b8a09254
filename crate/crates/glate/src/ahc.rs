//! Ward-linkage agglomerative hierarchical clustering over scalar points.
//!
//! Cluster cardinality in the Ward weight counts member points, not their
//! case weights; `WeightedPoint::weight` is carried through to the partition
//! so downstream F tests can use case counts. The naive O(J^3) recompute
//! variant is used, which is ample for a few hundred points.

use std::collections::BTreeMap;

use crate::error::{Error, Result};

/// One scalar observation to cluster, tagged with its judge id and the number
/// of cases behind the estimate.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightedPoint {
    pub id: String,
    pub value: f64,
    pub weight: f64,
}

impl WeightedPoint {
    pub fn new(id: impl Into<String>, value: f64, weight: f64) -> Self {
        Self { id: id.into(), value, weight }
    }
}

/// One merge in the dendrogram; members are indices into `MergePath::points`.
#[derive(Debug, Clone)]
pub struct MergeStep {
    pub left: Vec<usize>,
    pub right: Vec<usize>,
    pub cost: f64,
}

/// The full dendrogram: J-1 merges over the input points.
///
/// Points are held in a canonical id-sorted order so the path is invariant to
/// the input ordering.
#[derive(Debug, Clone)]
pub struct MergePath {
    pub points: Vec<WeightedPoint>,
    pub steps: Vec<MergeStep>,
}

/// A cut of the dendrogram into `k` clusters.
#[derive(Debug, Clone)]
pub struct Partition {
    pub k: usize,
    /// id -> cluster index; clusters are ordered by their smallest member id.
    pub assignment: BTreeMap<String, usize>,
    /// Member ids per cluster.
    pub members: Vec<Vec<String>>,
    /// Case-weighted mean of member values per cluster.
    pub cluster_means: Vec<f64>,
    /// Member counts per cluster.
    pub cluster_sizes: Vec<usize>,
}

impl Partition {
    pub fn cluster_of(&self, id: &str) -> Option<usize> {
        self.assignment.get(id).copied()
    }
}

/// Ward merge cost between two clusters given (size, arithmetic mean) each.
fn ward_cost(n_a: f64, mean_a: f64, n_b: f64, mean_b: f64) -> f64 {
    let d = mean_a - mean_b;
    (n_a * n_b) / (n_a + n_b) * d * d
}

/// Build the full Ward merge path over the points.
pub fn build_merge_path(points: &[WeightedPoint]) -> Result<MergePath> {
    if points.len() < 2 {
        return Err(Error::TooFewPoints);
    }
    if points.iter().any(|p| !p.value.is_finite()) {
        return Err(Error::NonFinite("cluster point value".into()));
    }
    if points.iter().any(|p| p.weight < 1.0) {
        return Err(Error::Invalid("point weight below 1".into()));
    }
    let mut pts: Vec<WeightedPoint> = points.to_vec();
    pts.sort_by(|a, b| a.id.cmp(&b.id));
    let j = pts.len();

    // Active clusters as index sets; each keeps the arithmetic mean of member
    // values, which is what the Ward criterion compares.
    struct Cluster {
        members: Vec<usize>,
        mean: f64,
        min_id: usize, // index of lexicographically smallest member
    }
    let mut active: Vec<Cluster> = pts
        .iter()
        .enumerate()
        .map(|(i, p)| Cluster { members: vec![i], mean: p.value, min_id: i })
        .collect();
    let mut steps = Vec::with_capacity(j - 1);

    while active.len() > 1 {
        let mut best: Option<(usize, usize, f64, (usize, usize))> = None;
        for a in 0..active.len() {
            for b in (a + 1)..active.len() {
                let cost = ward_cost(
                    active[a].members.len() as f64,
                    active[a].mean,
                    active[b].members.len() as f64,
                    active[b].mean,
                );
                let lo = active[a].min_id.min(active[b].min_id);
                let hi = active[a].min_id.max(active[b].min_id);
                let better = match &best {
                    None => true,
                    Some((_, _, c, key)) => {
                        cost < *c || (cost == *c && (lo, hi) < *key)
                    }
                };
                if better {
                    best = Some((a, b, cost, (lo, hi)));
                }
            }
        }
        let (a, b, cost, _) = best.expect("at least one candidate pair");
        let right = active.swap_remove(b); // b > a, so a stays valid
        let left = std::mem::replace(
            &mut active[a],
            Cluster { members: vec![], mean: 0.0, min_id: 0 },
        );
        let n_merged = left.members.len() + right.members.len();
        let mean = (left.mean * left.members.len() as f64
            + right.mean * right.members.len() as f64)
            / n_merged as f64;
        let mut members = left.members.clone();
        members.extend(&right.members);
        steps.push(MergeStep { left: left.members, right: right.members, cost });
        active[a] = Cluster {
            min_id: *members.iter().min().unwrap(),
            members,
            mean,
        };
    }

    Ok(MergePath { points: pts, steps })
}

/// Cut the path at `k` clusters by replaying the first J-k merges.
pub fn cut(path: &MergePath, k: usize) -> Result<Partition> {
    let j = path.points.len();
    if k == 0 || k > j {
        return Err(Error::BadK { k, j });
    }
    // Union-find replay.
    let mut parent: Vec<usize> = (0..j).collect();
    fn find(parent: &mut Vec<usize>, i: usize) -> usize {
        let mut r = i;
        while parent[r] != r {
            r = parent[r];
        }
        let mut i = i;
        while parent[i] != r {
            let next = parent[i];
            parent[i] = r;
            i = next;
        }
        r
    }
    for step in path.steps.iter().take(j - k) {
        let ra = find(&mut parent, step.left[0]);
        let rb = find(&mut parent, step.right[0]);
        let keep = ra.min(rb);
        let drop = ra.max(rb);
        parent[drop] = keep;
    }
    // Group leaves by root; roots visited in leaf-index order give clusters
    // ordered by smallest member id (points are id-sorted).
    let mut root_to_cluster: BTreeMap<usize, usize> = BTreeMap::new();
    let mut members: Vec<Vec<String>> = Vec::new();
    let mut sums: Vec<(f64, f64)> = Vec::new(); // (weighted value sum, weight sum)
    let mut assignment = BTreeMap::new();
    for i in 0..j {
        let r = find(&mut parent, i);
        let c = *root_to_cluster.entry(r).or_insert_with(|| {
            members.push(Vec::new());
            sums.push((0.0, 0.0));
            members.len() - 1
        });
        let p = &path.points[i];
        members[c].push(p.id.clone());
        sums[c].0 += p.value * p.weight;
        sums[c].1 += p.weight;
        assignment.insert(p.id.clone(), c);
    }
    if members.len() != k {
        return Err(Error::Invalid(format!(
            "cut produced {} clusters, expected {k}",
            members.len()
        )));
    }
    let cluster_means = sums.iter().map(|(s, w)| s / w).collect();
    let cluster_sizes = members.iter().map(Vec::len).collect();
    Ok(Partition { k, assignment, members, cluster_means, cluster_sizes })
}
