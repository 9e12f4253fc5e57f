//! Data association: incremental descriptor-space matching for the coarse
//! stage, mutual-consistency subset selection, and pose-guided spatial
//! matching with per-feature descriptor gates for the fine stage.

use nalgebra::Point3;

use crate::feature_map::{FeatureMap, ObservationFrame};
use crate::geometry::{transform_point, Pose};
use crate::index::{DescriptorIndex, SpatialIndex};
use crate::{Error, Result};

/// Pairing of an observed feature with a map feature.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Correspondence {
    pub obs_index: usize,
    pub map_id: u64,
    pub desc_distance: f64,
}

/// Pairwise rigid-consistency structure over a set of matches: entry (i, j)
/// is true iff the camera-frame distance between observations i and j agrees
/// with the map-frame distance between their matched features within `eps`.
/// Rigid motion preserves distances, so correct matches form a clique.
pub struct ConsistencyGraph {
    pub matches: Vec<Correspondence>,
    adjacency: Vec<bool>,
    degree: Vec<u32>,
    n: usize,
}

impl ConsistencyGraph {
    pub fn build(
        matches: &[Correspondence],
        frame: &ObservationFrame,
        map: &FeatureMap,
        eps: f64,
    ) -> Self {
        let n = matches.len();
        let mut adjacency = vec![false; n * n];
        let mut degree = vec![0u32; n];
        let obs: Vec<Point3<f64>> = matches
            .iter()
            .map(|m| frame.features[m.obs_index].position)
            .collect();
        let mapped: Vec<Point3<f64>> = matches
            .iter()
            .map(|m| map.feature(m.map_id).position)
            .collect();
        for i in 0..n {
            adjacency[i * n + i] = true;
            for j in (i + 1)..n {
                let d_obs = (obs[i] - obs[j]).norm();
                let d_map = (mapped[i] - mapped[j]).norm();
                if (d_obs - d_map).abs() <= eps {
                    adjacency[i * n + j] = true;
                    adjacency[j * n + i] = true;
                    degree[i] += 1;
                    degree[j] += 1;
                }
            }
        }
        ConsistencyGraph {
            matches: matches.to_vec(),
            adjacency,
            degree,
            n,
        }
    }

    pub fn consistent(&self, i: usize, j: usize) -> bool {
        self.adjacency[i * self.n + j]
    }

    pub fn degree(&self, i: usize) -> u32 {
        self.degree[i]
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }
}

/// Matches frame features `[start, start+batch)` in descending detection
/// strength order against their descriptor-space nearest neighbor in the map.
///
/// Returns one correspondence per feature; fewer than `batch` when the frame
/// runs out. Every returned feature consumed one descriptor query, which is
/// what the cost model counts as `M`.
pub fn match_batch_descriptor(
    frame: &ObservationFrame,
    index: &DescriptorIndex,
    start: usize,
    batch: usize,
) -> Result<Vec<Correspondence>> {
    let order = strength_order(frame);
    match_batch_ordered(frame, index, &order, start, batch)
}

/// [`match_batch_descriptor`] with the strength order precomputed, so the
/// coarse loop sorts the frame once instead of once per batch.
pub fn match_batch_ordered(
    frame: &ObservationFrame,
    index: &DescriptorIndex,
    order: &[usize],
    start: usize,
    batch: usize,
) -> Result<Vec<Correspondence>> {
    let count = frame.features.len();
    if start >= count {
        return Err(Error::ExhaustedFeatures { start, count });
    }
    let end = (start + batch.max(1)).min(count);
    let mut out = Vec::with_capacity(end - start);
    for &obs_index in &order[start..end] {
        let hits = index.knn(&frame.features[obs_index].descriptor, 1)?;
        let (map_id, desc_distance) = hits[0];
        out.push(Correspondence {
            obs_index,
            map_id,
            desc_distance,
        });
    }
    Ok(out)
}

/// Frame feature indices sorted by descending detection strength; ties fall
/// back to the frame order so batching is deterministic.
pub fn strength_order(frame: &ObservationFrame) -> Vec<usize> {
    let mut order: Vec<usize> = (0..frame.features.len()).collect();
    order.sort_by(|&a, &b| {
        frame.features[b]
            .strength
            .partial_cmp(&frame.features[a].strength)
            .unwrap_or(std::cmp::Ordering::Equal)
            .then(a.cmp(&b))
    });
    order
}

/// Greedy largest clique on the consistency graph.
///
/// Seeds with the match of maximum degree, then repeatedly adds the match
/// consistent with all current members that has maximum degree. Ties break
/// toward smaller descriptor distance, then smaller observation index. The
/// O(n²) consistency-matrix construction dominates.
pub fn max_consistent_subset(
    matches: &[Correspondence],
    frame: &ObservationFrame,
    map: &FeatureMap,
    eps: f64,
) -> Vec<Correspondence> {
    if matches.is_empty() {
        return Vec::new();
    }
    let graph = ConsistencyGraph::build(matches, frame, map, eps);
    greedy_clique(&graph)
        .into_iter()
        .map(|i| matches[i])
        .collect()
}

/// Index-level greedy clique used by [`max_consistent_subset`]; exposed for
/// callers that keep the graph around.
pub fn greedy_clique(graph: &ConsistencyGraph) -> Vec<usize> {
    let n = graph.len();
    if n == 0 {
        return Vec::new();
    }
    // True when a beats b.
    let better = |a: usize, b: usize| -> bool {
        let da = graph.degree(a);
        let db = graph.degree(b);
        if da != db {
            return da > db;
        }
        let ma = &graph.matches[a];
        let mb = &graph.matches[b];
        if ma.desc_distance != mb.desc_distance {
            return ma.desc_distance < mb.desc_distance;
        }
        ma.obs_index < mb.obs_index
    };

    let mut seed = 0;
    for i in 1..n {
        if better(i, seed) {
            seed = i;
        }
    }

    let mut members = vec![seed];
    let mut candidate_ok: Vec<bool> = (0..n).map(|i| graph.consistent(seed, i)).collect();
    candidate_ok[seed] = false;
    loop {
        let mut best: Option<usize> = None;
        for i in 0..n {
            if candidate_ok[i] && best.map_or(true, |b| better(i, b)) {
                best = Some(i);
            }
        }
        let Some(next) = best else { break };
        members.push(next);
        candidate_ok[next] = false;
        for i in 0..n {
            if candidate_ok[i] && !graph.consistent(next, i) {
                candidate_ok[i] = false;
            }
        }
    }
    members
}

/// Parameters of the pose-guided spatial matcher.
#[derive(Clone, Copy, Debug)]
pub struct SpatialMatchParams {
    /// Neighborhood radius around the predicted map location, meters.
    pub radius: f64,
    /// Multiplier on the candidate's `match_std` descriptor gate.
    pub gate_scale: f64,
    /// Absolute floor of the gate; keeps zero-deviation features matchable.
    pub gate_floor: f64,
}

impl Default for SpatialMatchParams {
    fn default() -> Self {
        SpatialMatchParams {
            radius: 0.5,
            gate_scale: 2.0,
            gate_floor: 0.1,
        }
    }
}

/// Pose-guided spatial matching.
///
/// Each observed feature is projected into the map frame with the coarse
/// pose; map features within `radius` of the prediction are candidates. A
/// candidate is kept only if the descriptor distance is at most
/// `max(gate_scale · match_std, gate_floor)`; the surviving candidate with
/// the lowest descriptor distance wins. One spatial query is spent per
/// observed feature, which is what the cost model counts as `N`.
pub fn spatial_match(
    frame: &ObservationFrame,
    coarse: &Pose,
    spatial: &SpatialIndex,
    map: &FeatureMap,
    params: &SpatialMatchParams,
) -> Vec<Correspondence> {
    debug_assert_eq!(spatial.len(), map.len());
    let mut out = Vec::new();
    for (obs_index, obs) in frame.features.iter().enumerate() {
        let predicted = transform_point(coarse, &obs.position);
        let q = obs.descriptor.values();
        let q_prefix = &q[..crate::index::PREFIX_DIM.min(q.len())];
        let mut best: Option<(u64, f64)> = None;
        spatial.for_each_within(&predicted, params.radius, |map_id, _| {
            let gate = (params.gate_scale * spatial.match_std_of(map_id)).max(params.gate_floor);
            let gate_sq = gate * gate;
            // Cheap prefix probe first; the partial distance is a lower
            // bound, so rejection here is exact.
            let prefix = spatial.prefix_of(map_id);
            let partial: f64 = q_prefix
                .iter()
                .zip(prefix)
                .map(|(a, b)| (a - b) * (a - b))
                .sum();
            if partial > gate_sq {
                return;
            }
            let cand = spatial.descriptor_of(map_id);
            if let Some(d2) = dist_sq_within(q, cand, gate_sq) {
                let d = d2.sqrt();
                if best.map_or(true, |(bid, bd)| (d, map_id) < (bd, bid)) {
                    best = Some((map_id, d));
                }
            }
        });
        if let Some((map_id, desc_distance)) = best {
            out.push(Correspondence {
                obs_index,
                map_id,
                desc_distance,
            });
        }
    }
    out
}

/// Squared distance with a chunked early exit: non-matching candidates blow
/// past the gate within the first few components, so most of the vector is
/// never touched.
fn dist_sq_within(a: &[f64], b: &[f64], bound_sq: f64) -> Option<f64> {
    let mut acc = 0.0;
    let mut i = 0;
    let n = a.len().min(b.len());
    while i < n {
        let end = (i + 8).min(n);
        while i < end {
            let d = a[i] - b[i];
            acc += d * d;
            i += 1;
        }
        if acc > bound_sq {
            return None;
        }
    }
    Some(acc)
}
