//! The temporal web skeleton: contact probabilities plus the uniform draws
//! that every counterfactual run on a network shares.
//!
//! Draws are not stored. Each one is a pure function of
//! `(master_seed, stream, i, j, t)`:
//!
//! ```text
//! h = master_seed
//! for w in [stream, i, j, t]:
//!     h = mix64((h + GOLDEN_GAMMA) ^ w)        (wrapping add)
//! draw = (h >> 11) * 2^-53                      in [0, 1)
//! ```
//!
//! where `mix64` is the SplitMix64 finalizer, `stream` is one of
//! [`STREAM_ACTIVATION`], [`STREAM_TRANSMISSION`], [`STREAM_RECOVERY`], and
//! recovery keys use `j = NO_PEER`. Everything here is reproducible from the
//! network, the horizon and the master seed.

use std::collections::BTreeMap;
use std::sync::Arc;

use thiserror::Error;

use crate::graphgen::{BaseNetwork, Graph};

pub const GOLDEN_GAMMA: u64 = 0x9E37_79B9_7F4A_7C15;
pub const STREAM_ACTIVATION: u64 = 1;
pub const STREAM_TRANSMISSION: u64 = 2;
pub const STREAM_RECOVERY: u64 = 3;
pub const NO_PEER: u64 = u64::MAX;

#[derive(Debug, Error, PartialEq)]
pub enum SkeletonError {
    #[error("draw key out of range: i={i}, j={j:?}, t={t}")]
    KeyOutOfRange { i: usize, j: Option<usize>, t: usize },
    #[error("draw table has {got} entries, expected {expected}")]
    TableShape { expected: usize, got: usize },
}

/// SplitMix64 output finalizer.
#[inline]
pub fn mix64(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Folds a sequence of words into a 64-bit hash, starting from `seed`.
#[inline]
pub fn hash_words(seed: u64, words: &[u64]) -> u64 {
    words.iter().fold(seed, |h, &w| mix64(h.wrapping_add(GOLDEN_GAMMA) ^ w))
}

#[inline]
pub fn unit_from_bits(h: u64) -> f64 {
    (h >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
}

#[inline]
fn keyed_draw(seed: u64, stream: u64, i: u64, j: u64, t: u64) -> f64 {
    unit_from_bits(hash_words(seed, &[stream, i, j, t]))
}

/// Explicit draw tables for hand-traceable fixtures.
///
/// Arc tables are indexed `t * arc_count + arc` using the graph's arc
/// indices; the recovery table is indexed `t * n + i`. Values are used
/// verbatim, so fixtures may use `1.0` to force an event off.
#[derive(Debug, Clone, PartialEq)]
pub struct DrawTables {
    pub activation: Vec<f64>,
    pub transmission: Vec<f64>,
    pub recovery: Vec<f64>,
}

impl DrawTables {
    /// Tables filled with a single value per stream.
    pub fn constant(graph: &Graph, horizon: usize, activation: f64, transmission: f64, recovery: f64) -> Self {
        let arcs = graph.arc_count() * horizon;
        Self {
            activation: vec![activation; arcs],
            transmission: vec![transmission; arcs],
            recovery: vec![recovery; graph.node_count() * horizon],
        }
    }

    pub fn set_activation(&mut self, graph: &Graph, i: usize, j: usize, t: usize, value: f64) {
        let arc = graph.arc_index(i, j).expect("fixture arc must be an edge");
        self.activation[t * graph.arc_count() + arc] = value;
    }

    pub fn set_transmission(&mut self, graph: &Graph, i: usize, j: usize, t: usize, value: f64) {
        let arc = graph.arc_index(i, j).expect("fixture arc must be an edge");
        self.transmission[t * graph.arc_count() + arc] = value;
    }

    pub fn set_recovery(&mut self, graph: &Graph, i: usize, t: usize, value: f64) {
        self.recovery[t * graph.node_count() + i] = value;
    }
}

#[derive(Debug, Clone, PartialEq)]
enum DrawSource {
    Hashed,
    Explicit(DrawTables),
}

#[derive(Debug, Clone, PartialEq)]
pub struct Skeleton {
    network: Arc<BaseNetwork>,
    horizon: usize,
    master_seed: u64,
    /// Aligned with the graph's arc indices.
    contact_prob: Vec<f64>,
    draws: DrawSource,
}

fn contact_probabilities(g: &Graph) -> Vec<f64> {
    let mut probs = vec![0.0; g.arc_count()];
    for i in 0..g.node_count() {
        let range = g.arc_range(i);
        let denom: f64 = range.clone().map(|a| 1.0 / g.degree(g.arc_target(a)) as f64).sum();
        for a in range {
            probs[a] = (1.0 / g.degree(g.arc_target(a)) as f64) / denom;
        }
    }
    probs
}

/// Builds a skeleton whose draws come from the counter-based hash.
pub fn build_skeleton(network: impl Into<Arc<BaseNetwork>>, horizon: usize, master_seed: u64) -> Skeleton {
    let network = network.into();
    let contact_prob = contact_probabilities(&network.graph);
    Skeleton { network, horizon, master_seed, contact_prob, draws: DrawSource::Hashed }
}

/// Builds a skeleton whose draws are read from `tables`.
pub fn build_skeleton_from_draws(
    network: impl Into<Arc<BaseNetwork>>,
    horizon: usize,
    tables: DrawTables,
) -> Result<Skeleton, SkeletonError> {
    let network = network.into();
    let g = &network.graph;
    for (expected, got) in [
        (g.arc_count() * horizon, tables.activation.len()),
        (g.arc_count() * horizon, tables.transmission.len()),
        (g.node_count() * horizon, tables.recovery.len()),
    ] {
        if expected != got {
            return Err(SkeletonError::TableShape { expected, got });
        }
    }
    let contact_prob = contact_probabilities(g);
    Ok(Skeleton { network, horizon, master_seed: 0, contact_prob, draws: DrawSource::Explicit(tables) })
}

impl Skeleton {
    pub fn network(&self) -> &Arc<BaseNetwork> {
        &self.network
    }

    pub fn graph(&self) -> &Graph {
        &self.network.graph
    }

    pub fn node_count(&self) -> usize {
        self.network.graph.node_count()
    }

    pub fn horizon(&self) -> usize {
        self.horizon
    }

    pub fn master_seed(&self) -> u64 {
        self.master_seed
    }

    fn arc(&self, i: usize, j: usize, t: usize) -> Result<usize, SkeletonError> {
        if t >= self.horizon {
            return Err(SkeletonError::KeyOutOfRange { i, j: Some(j), t });
        }
        self.graph().arc_index(i, j).ok_or(SkeletonError::KeyOutOfRange { i, j: Some(j), t })
    }

    pub fn contact_prob(&self, i: usize, j: usize) -> Option<f64> {
        self.graph().arc_index(i, j).map(|a| self.contact_prob[a])
    }

    pub fn contact_prob_by_arc(&self, arc: usize) -> f64 {
        self.contact_prob[arc]
    }

    /// Activation draw addressed by arc index; `arc` and `t` must be valid.
    #[inline]
    pub fn activation_by_arc(&self, arc: usize, t: usize) -> f64 {
        match &self.draws {
            DrawSource::Hashed => {
                let g = self.graph();
                let j = g.arc_target(arc);
                let i = arc_source(g, arc);
                keyed_draw(self.master_seed, STREAM_ACTIVATION, i as u64, j as u64, t as u64)
            }
            DrawSource::Explicit(tab) => tab.activation[t * self.graph().arc_count() + arc],
        }
    }

    #[inline]
    pub fn transmission_by_arc(&self, arc: usize, t: usize) -> f64 {
        match &self.draws {
            DrawSource::Hashed => {
                let g = self.graph();
                let j = g.arc_target(arc);
                let i = arc_source(g, arc);
                keyed_draw(self.master_seed, STREAM_TRANSMISSION, i as u64, j as u64, t as u64)
            }
            DrawSource::Explicit(tab) => tab.transmission[t * self.graph().arc_count() + arc],
        }
    }

    #[inline]
    fn recovery_unchecked(&self, i: usize, t: usize) -> f64 {
        match &self.draws {
            DrawSource::Hashed => keyed_draw(self.master_seed, STREAM_RECOVERY, i as u64, NO_PEER, t as u64),
            DrawSource::Explicit(tab) => tab.recovery[t * self.node_count() + i],
        }
    }

    pub fn activation_draw(&self, i: usize, j: usize, t: usize) -> Result<f64, SkeletonError> {
        let arc = self.arc(i, j, t)?;
        Ok(self.activation_by_arc(arc, t))
    }

    pub fn transmission_draw(&self, i: usize, j: usize, t: usize) -> Result<f64, SkeletonError> {
        let arc = self.arc(i, j, t)?;
        Ok(self.transmission_by_arc(arc, t))
    }

    pub fn recovery_draw(&self, i: usize, t: usize) -> Result<f64, SkeletonError> {
        if i >= self.node_count() || t >= self.horizon {
            return Err(SkeletonError::KeyOutOfRange { i, j: None, t });
        }
        Ok(self.recovery_unchecked(i, t))
    }

    pub fn is_activated(&self, i: usize, j: usize, t: usize) -> Result<bool, SkeletonError> {
        let arc = self.arc(i, j, t)?;
        Ok(self.is_activated_by_arc(arc, t))
    }

    #[inline]
    pub fn is_activated_by_arc(&self, arc: usize, t: usize) -> bool {
        self.activation_by_arc(arc, t) < self.contact_prob[arc]
    }

    /// Persistable description sufficient to rebuild every draw.
    pub fn record(&self) -> SkeletonRecord {
        SkeletonRecord {
            horizon: self.horizon,
            master_seed: self.master_seed,
            golden_gamma: GOLDEN_GAMMA,
            stream_activation: STREAM_ACTIVATION,
            stream_transmission: STREAM_TRANSMISSION,
            stream_recovery: STREAM_RECOVERY,
            no_peer: NO_PEER,
        }
    }
}

/// Source node of an arc, by binary search over the CSR offsets.
#[inline]
fn arc_source(g: &Graph, arc: usize) -> usize {
    // partition_point over nodes: first node whose row ends after `arc`.
    let n = g.node_count();
    let (mut lo, mut hi) = (0usize, n);
    while lo < hi {
        let mid = (lo + hi) / 2;
        if g.arc_range(mid).end <= arc {
            lo = mid + 1;
        } else {
            hi = mid;
        }
    }
    lo
}

#[derive(Debug, Clone, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub struct SkeletonRecord {
    pub horizon: usize,
    pub master_seed: u64,
    pub golden_gamma: u64,
    pub stream_activation: u64,
    pub stream_transmission: u64,
    pub stream_recovery: u64,
    pub no_peer: u64,
}

/// The static graph induced by the skeleton's activations.
#[derive(Debug, Clone, PartialEq)]
pub struct FlatNetwork {
    pub n: usize,
    /// Unordered pair `(u, v)`, `u < v`, to activation count over both
    /// directions and all steps.
    pub weighted_edges: BTreeMap<(u32, u32), u64>,
}

impl FlatNetwork {
    pub fn unweighted_edges(&self) -> impl Iterator<Item = (u32, u32)> + '_ {
        self.weighted_edges.keys().copied()
    }

    pub fn to_graph(&self) -> Graph {
        Graph::from_edges(self.n, self.unweighted_edges().map(|(u, v)| (u as usize, v as usize)))
            .expect("flattened edges are a subset of a simple graph")
    }
}

pub fn flatten_skeleton(sk: &Skeleton) -> FlatNetwork {
    let g = sk.graph();
    let mut weighted_edges = BTreeMap::new();
    for i in 0..g.node_count() {
        for arc in g.arc_range(i) {
            let j = g.arc_target(arc);
            let count = (0..sk.horizon()).filter(|&t| sk.is_activated_by_arc(arc, t)).count() as u64;
            if count > 0 {
                let key = (i.min(j) as u32, i.max(j) as u32);
                *weighted_edges.entry(key).or_insert(0) += count;
            }
        }
    }
    FlatNetwork { n: g.node_count(), weighted_edges }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graphgen::{generate_scale_free, generate_small_world};

    fn explicit(n: usize, edges: &[(usize, usize)]) -> BaseNetwork {
        BaseNetwork::explicit(Graph::from_edges(n, edges.iter().copied()).unwrap())
    }

    #[test]
    fn path_contact_probabilities() {
        let sk = build_skeleton(explicit(3, &[(0, 1), (1, 2)]), 4, 1);
        assert_eq!(sk.contact_prob(0, 1), Some(1.0));
        assert_eq!(sk.contact_prob(1, 0), Some(0.5));
        assert_eq!(sk.contact_prob(1, 2), Some(0.5));
        assert_eq!(sk.contact_prob(2, 1), Some(1.0));
        assert_eq!(sk.contact_prob(0, 2), None);
    }

    #[test]
    fn star_contact_probabilities() {
        let sk = build_skeleton(explicit(4, &[(0, 1), (0, 2), (0, 3)]), 4, 1);
        for leaf in 1..4 {
            assert!((sk.contact_prob(0, leaf).unwrap() - 1.0 / 3.0).abs() < 1e-15);
            assert_eq!(sk.contact_prob(leaf, 0), Some(1.0));
        }
    }

    #[test]
    fn regular_graph_probabilities_are_uniform() {
        let net = generate_small_world(30, 6, 0.0, 2, 1).unwrap();
        let sk = build_skeleton(net, 5, 3);
        for arc in 0..sk.graph().arc_count() {
            assert!((sk.contact_prob_by_arc(arc) - 1.0 / 6.0).abs() < 1e-15);
        }
    }

    #[test]
    fn contact_rows_sum_to_one() {
        let net = generate_scale_free(200, 4, 8).unwrap();
        let sk = build_skeleton(net, 5, 3);
        let g = sk.graph();
        for i in 0..g.node_count() {
            let s: f64 = g.arc_range(i).map(|a| sk.contact_prob_by_arc(a)).sum();
            assert!((s - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn draws_are_pure_and_streams_differ() {
        let net = generate_scale_free(100, 3, 1).unwrap();
        let sk = build_skeleton(net, 50, 99);
        let g = sk.graph().clone();
        let mut differing = 0;
        let mut total = 0;
        for (u, v) in g.edges().iter().copied().take(200) {
            for t in 0..50 {
                let (u, v) = (u as usize, v as usize);
                let a = sk.activation_draw(u, v, t).unwrap();
                assert_eq!(a, sk.activation_draw(u, v, t).unwrap());
                let b = sk.transmission_draw(u, v, t).unwrap();
                total += 1;
                if a != b {
                    differing += 1;
                }
            }
        }
        assert!(total >= 10_000);
        assert!(differing as f64 >= 0.99 * total as f64);
    }

    #[test]
    fn draws_reject_invalid_keys() {
        let sk = build_skeleton(explicit(3, &[(0, 1), (1, 2)]), 4, 1);
        assert!(sk.activation_draw(0, 2, 0).is_err());
        assert!(sk.transmission_draw(0, 1, 4).is_err());
        assert!(sk.recovery_draw(3, 0).is_err());
        assert!(sk.is_activated(0, 9, 0).is_err());
    }

    #[test]
    fn hashed_draw_matches_documented_formula() {
        let sk = build_skeleton(explicit(3, &[(0, 1), (1, 2)]), 4, 1234);
        let manual = {
            let mut h = 1234u64;
            for w in [STREAM_ACTIVATION, 1, 2, 3] {
                h = mix64(h.wrapping_add(GOLDEN_GAMMA) ^ w);
            }
            (h >> 11) as f64 / (1u64 << 53) as f64
        };
        assert_eq!(sk.activation_draw(1, 2, 3).unwrap(), manual);
        let rec = unit_from_bits(hash_words(1234, &[STREAM_RECOVERY, 2, NO_PEER, 0]));
        assert_eq!(sk.recovery_draw(2, 0).unwrap(), rec);
    }

    #[test]
    fn leaf_activation_is_certain() {
        let sk = build_skeleton(explicit(3, &[(0, 1), (1, 2)]), 20, 5);
        for t in 0..20 {
            assert!(sk.is_activated(0, 1, t).unwrap());
        }
    }

    #[test]
    fn zero_threshold_never_activates() {
        // Activation draw 1.0 can never be below a probability <= 1.
        let net = explicit(3, &[(0, 1), (1, 2)]);
        let tabs = DrawTables::constant(&net.graph, 3, 1.0, 0.0, 1.0);
        let sk = build_skeleton_from_draws(net, 3, tabs).unwrap();
        for t in 0..3 {
            assert!(!sk.is_activated(0, 1, t).unwrap());
            assert!(!sk.is_activated(1, 2, t).unwrap());
        }
    }

    #[test]
    fn explicit_tables_are_shape_checked() {
        let net = explicit(3, &[(0, 1), (1, 2)]);
        let mut tabs = DrawTables::constant(&net.graph, 3, 0.5, 0.5, 0.5);
        tabs.recovery.pop();
        assert!(matches!(build_skeleton_from_draws(net, 3, tabs), Err(SkeletonError::TableShape { .. })));
    }

    #[test]
    fn arc_source_inverts_csr() {
        let net = generate_scale_free(60, 2, 4).unwrap();
        let g = &net.graph;
        for i in 0..g.node_count() {
            for arc in g.arc_range(i) {
                assert_eq!(arc_source(g, arc), i);
            }
        }
    }

    #[test]
    fn flatten_path_and_empty_horizon() {
        let sk = build_skeleton(explicit(3, &[(0, 1), (1, 2)]), 4, 17);
        let flat = flatten_skeleton(&sk);
        assert!(flat.weighted_edges[&(0, 1)] >= 4);
        assert!(flat.weighted_edges[&(1, 2)] >= 4);
        let empty = flatten_skeleton(&build_skeleton(explicit(3, &[(0, 1), (1, 2)]), 0, 17));
        assert!(empty.weighted_edges.is_empty());
    }
}
