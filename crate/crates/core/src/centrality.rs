//! Static centrality measures on unweighted, undirected graphs.
//!
//! Normalisation conventions:
//! - degree: `deg(i) / (n - 1)`
//! - closeness: `(n - 1) / sum_j d(i, j)`, connected graphs only
//! - betweenness: Brandes accumulation scaled by `2 / ((n - 1)(n - 2))`
//! - eigenvector and Katz: L2-normalised, non-negative
//! - k-core: integer core numbers by peeling

use std::collections::VecDeque;
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::graphgen::Graph;

pub const POWER_TOLERANCE: f64 = 1e-10;
pub const POWER_MAX_ITER: usize = 100_000;
pub const KATZ_ALPHA: f64 = 0.1;
pub const KATZ_BETA: f64 = 1.0;

#[derive(Debug, Error, PartialEq)]
pub enum CentralityError {
    #[error("invalid input: {0}")]
    InvalidParams(String),
    #[error("graph is disconnected; closeness undefined")]
    Disconnected,
    #[error("power iteration did not converge within {0} iterations")]
    NoConvergence(usize),
    #[error("katz alpha {alpha} too large (spectral radius estimate {lambda_max})")]
    AlphaTooLarge { alpha: f64, lambda_max: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Measure {
    Degree,
    Closeness,
    Betweenness,
    Eigenvector,
    Katz,
    Kcore,
}

impl Measure {
    pub const ALL: [Measure; 6] = [
        Measure::Degree,
        Measure::Closeness,
        Measure::Betweenness,
        Measure::Eigenvector,
        Measure::Katz,
        Measure::Kcore,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Measure::Degree => "degree",
            Measure::Closeness => "closeness",
            Measure::Betweenness => "betweenness",
            Measure::Eigenvector => "eigenvector",
            Measure::Katz => "katz",
            Measure::Kcore => "kcore",
        }
    }
}

impl fmt::Display for Measure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CentralityVector {
    pub measure: Measure,
    pub scores: Vec<f64>,
}

impl CentralityVector {
    fn new(measure: Measure, scores: Vec<f64>) -> Self {
        Self { measure, scores }
    }
}

pub fn degree_centrality(g: &Graph) -> Result<CentralityVector, CentralityError> {
    let n = g.node_count();
    if n < 2 {
        return Err(CentralityError::InvalidParams(format!("degree centrality needs n >= 2, got {n}")));
    }
    let scale = 1.0 / (n - 1) as f64;
    Ok(CentralityVector::new(Measure::Degree, (0..n).map(|i| g.degree(i) as f64 * scale).collect()))
}

fn bfs_distances(g: &Graph, source: usize, dist: &mut [usize], queue: &mut VecDeque<usize>) {
    dist.fill(usize::MAX);
    dist[source] = 0;
    queue.clear();
    queue.push_back(source);
    while let Some(v) = queue.pop_front() {
        for &w in g.neighbors(v) {
            let w = w as usize;
            if dist[w] == usize::MAX {
                dist[w] = dist[v] + 1;
                queue.push_back(w);
            }
        }
    }
}

pub fn closeness_centrality(g: &Graph) -> Result<CentralityVector, CentralityError> {
    let n = g.node_count();
    if n < 2 {
        return Err(CentralityError::InvalidParams(format!("closeness needs n >= 2, got {n}")));
    }
    let mut dist = vec![0usize; n];
    let mut queue = VecDeque::with_capacity(n);
    let mut scores = Vec::with_capacity(n);
    for s in 0..n {
        bfs_distances(g, s, &mut dist, &mut queue);
        let mut total = 0usize;
        for &d in &dist {
            if d == usize::MAX {
                return Err(CentralityError::Disconnected);
            }
            total += d;
        }
        scores.push((n - 1) as f64 / total as f64);
    }
    Ok(CentralityVector::new(Measure::Closeness, scores))
}

/// Brandes' algorithm, one BFS per source.
pub fn betweenness_centrality(g: &Graph) -> Result<CentralityVector, CentralityError> {
    let n = g.node_count();
    if n < 3 {
        return Err(CentralityError::InvalidParams(format!("betweenness needs n >= 3, got {n}")));
    }
    let mut bc = vec![0.0f64; n];
    let mut stack = Vec::with_capacity(n);
    let mut preds: Vec<Vec<usize>> = vec![Vec::new(); n];
    let mut sigma = vec![0.0f64; n];
    let mut dist = vec![-1i64; n];
    let mut delta = vec![0.0f64; n];
    let mut queue = VecDeque::with_capacity(n);

    for s in 0..n {
        stack.clear();
        for p in preds.iter_mut() {
            p.clear();
        }
        sigma.fill(0.0);
        dist.fill(-1);
        delta.fill(0.0);
        sigma[s] = 1.0;
        dist[s] = 0;
        queue.push_back(s);
        while let Some(v) = queue.pop_front() {
            stack.push(v);
            for &w in g.neighbors(v) {
                let w = w as usize;
                if dist[w] < 0 {
                    dist[w] = dist[v] + 1;
                    queue.push_back(w);
                }
                if dist[w] == dist[v] + 1 {
                    sigma[w] += sigma[v];
                    preds[w].push(v);
                }
            }
        }
        while let Some(w) = stack.pop() {
            for &v in &preds[w] {
                delta[v] += sigma[v] / sigma[w] * (1.0 + delta[w]);
            }
            if w != s {
                bc[w] += delta[w];
            }
        }
    }
    // Every unordered pair was counted from both endpoints.
    let scale = 1.0 / ((n - 1) * (n - 2)) as f64;
    for b in bc.iter_mut() {
        *b *= scale;
    }
    Ok(CentralityVector::new(Measure::Betweenness, bc))
}

fn l2_normalize(x: &mut [f64]) {
    let norm = x.iter().map(|v| v * v).sum::<f64>().sqrt();
    if norm > 0.0 {
        for v in x.iter_mut() {
            *v /= norm;
        }
    }
}

fn adjacency_apply(g: &Graph, x: &[f64], out: &mut [f64]) {
    for (i, o) in out.iter_mut().enumerate() {
        *o = g.neighbors(i).iter().map(|&j| x[j as usize]).sum();
    }
}

struct Dominant {
    vector: Vec<f64>,
    eigenvalue: f64,
    converged: bool,
}

/// Power iteration on `A + I`. The shift leaves eigenvectors unchanged and
/// makes the Perron root strictly dominant in modulus, so bipartite graphs
/// (paths, stars, even cycles) converge instead of oscillating.
fn dominant_eigenpair(g: &Graph) -> Dominant {
    let n = g.node_count();
    let mut x = vec![1.0f64; n];
    l2_normalize(&mut x);
    let mut next = vec![0.0f64; n];
    for _ in 0..POWER_MAX_ITER {
        adjacency_apply(g, &x, &mut next);
        for (nv, xv) in next.iter_mut().zip(&x) {
            *nv += xv;
        }
        l2_normalize(&mut next);
        let diff = next.iter().zip(&x).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        std::mem::swap(&mut x, &mut next);
        if diff < POWER_TOLERANCE {
            let eigenvalue = rayleigh(g, &x);
            return Dominant { vector: x, eigenvalue, converged: true };
        }
    }
    let eigenvalue = rayleigh(g, &x);
    Dominant { vector: x, eigenvalue, converged: false }
}

fn rayleigh(g: &Graph, x: &[f64]) -> f64 {
    let mut ax = vec![0.0; x.len()];
    adjacency_apply(g, x, &mut ax);
    let num: f64 = ax.iter().zip(x).map(|(a, b)| a * b).sum();
    let den: f64 = x.iter().map(|v| v * v).sum();
    if den > 0.0 {
        num / den
    } else {
        0.0
    }
}

/// Lower-bound estimate of the adjacency spectral radius (Rayleigh quotient
/// of the power-iteration vector, converged or not).
pub fn spectral_radius_estimate(g: &Graph) -> f64 {
    if g.node_count() == 0 {
        return 0.0;
    }
    dominant_eigenpair(g).eigenvalue
}

pub fn eigenvector_centrality(g: &Graph) -> Result<CentralityVector, CentralityError> {
    if g.node_count() == 0 {
        return Err(CentralityError::InvalidParams("empty graph".into()));
    }
    let dom = dominant_eigenpair(g);
    if !dom.converged {
        return Err(CentralityError::NoConvergence(POWER_MAX_ITER));
    }
    let scores = dom.vector.into_iter().map(|v| v.max(0.0)).collect();
    Ok(CentralityVector::new(Measure::Eigenvector, scores))
}

/// Fixed point of `x = alpha * A x + beta * 1`, then L2-normalised.
pub fn katz_centrality(g: &Graph, alpha: f64, beta: f64) -> Result<CentralityVector, CentralityError> {
    let n = g.node_count();
    if n == 0 {
        return Err(CentralityError::InvalidParams("empty graph".into()));
    }
    if !(alpha > 0.0) || !beta.is_finite() || beta <= 0.0 {
        return Err(CentralityError::InvalidParams(format!("alpha={alpha}, beta={beta}")));
    }
    let lambda_max = spectral_radius_estimate(g);
    if alpha * lambda_max >= 1.0 {
        return Err(CentralityError::AlphaTooLarge { alpha, lambda_max });
    }
    let mut x = katz_raw(g, alpha, beta).ok_or(CentralityError::AlphaTooLarge { alpha, lambda_max })?;
    l2_normalize(&mut x);
    Ok(CentralityVector::new(Measure::Katz, x))
}

/// Unnormalised Katz iteration; `None` when it diverges or stalls.
pub fn katz_raw(g: &Graph, alpha: f64, beta: f64) -> Option<Vec<f64>> {
    let n = g.node_count();
    let mut x = vec![0.0f64; n];
    let mut ax = vec![0.0f64; n];
    for _ in 0..POWER_MAX_ITER {
        adjacency_apply(g, &x, &mut ax);
        let mut diff = 0.0f64;
        for i in 0..n {
            let v = alpha * ax[i] + beta;
            diff = diff.max((v - x[i]).abs());
            x[i] = v;
        }
        if !diff.is_finite() || x.iter().any(|v| !v.is_finite()) {
            return None;
        }
        if diff < POWER_TOLERANCE {
            return Some(x);
        }
    }
    None
}

/// Core numbers by repeated removal of minimum-degree nodes.
pub fn k_core_numbers(g: &Graph) -> CentralityVector {
    let n = g.node_count();
    let mut degree: Vec<usize> = (0..n).map(|i| g.degree(i)).collect();
    let max_deg = degree.iter().copied().max().unwrap_or(0);
    // Bucket sort by degree (Batagelj-Zaversnik).
    let mut bins = vec![0usize; max_deg + 1];
    for &d in &degree {
        bins[d] += 1;
    }
    let mut start = 0;
    for b in bins.iter_mut() {
        let count = *b;
        *b = start;
        start += count;
    }
    let mut pos = vec![0usize; n];
    let mut order = vec![0usize; n];
    for v in 0..n {
        pos[v] = bins[degree[v]];
        order[pos[v]] = v;
        bins[degree[v]] += 1;
    }
    for d in (1..=max_deg).rev() {
        bins[d] = bins[d - 1];
    }
    bins[0] = 0;
    for i in 0..n {
        let v = order[i];
        for &u in g.neighbors(v) {
            let u = u as usize;
            if degree[u] > degree[v] {
                let du = degree[u];
                let pu = pos[u];
                let pw = bins[du];
                let w = order[pw];
                if u != w {
                    pos[u] = pw;
                    order[pu] = w;
                    pos[w] = pu;
                    order[pw] = u;
                }
                bins[du] += 1;
                degree[u] -= 1;
            }
        }
    }
    CentralityVector::new(Measure::Kcore, degree.into_iter().map(|d| d as f64).collect())
}

/// All six measures for one graph. Closeness is `None` on disconnected
/// graphs, which can happen for sparse flattened networks.
#[derive(Debug, Clone, PartialEq)]
pub struct CentralitySet {
    pub degree: CentralityVector,
    pub closeness: Option<CentralityVector>,
    pub betweenness: CentralityVector,
    pub eigenvector: CentralityVector,
    pub katz: CentralityVector,
    pub kcore: CentralityVector,
    /// Katz attenuation actually used.
    pub katz_alpha: f64,
}

impl CentralitySet {
    pub fn scores(&self, measure: Measure) -> Option<&[f64]> {
        match measure {
            Measure::Degree => Some(&self.degree.scores),
            Measure::Closeness => self.closeness.as_ref().map(|c| c.scores.as_slice()),
            Measure::Betweenness => Some(&self.betweenness.scores),
            Measure::Eigenvector => Some(&self.eigenvector.scores),
            Measure::Katz => Some(&self.katz.scores),
            Measure::Kcore => Some(&self.kcore.scores),
        }
    }
}

/// Computes every measure. When `katz_alpha` is at or above the reciprocal
/// spectral radius it is reduced to `0.9 / lambda_max` so the series
/// converges; the value used is recorded in the result.
pub fn compute_all(g: &Graph, katz_alpha: f64, katz_beta: f64) -> Result<CentralitySet, CentralityError> {
    let closeness = match closeness_centrality(g) {
        Ok(c) => Some(c),
        Err(CentralityError::Disconnected) => None,
        Err(e) => return Err(e),
    };
    let lambda_max = spectral_radius_estimate(g);
    let alpha = if katz_alpha * lambda_max >= 1.0 { 0.9 / lambda_max } else { katz_alpha };
    Ok(CentralitySet {
        degree: degree_centrality(g)?,
        closeness,
        betweenness: betweenness_centrality(g)?,
        eigenvector: eigenvector_centrality(g)?,
        katz: katz_centrality(g, alpha, katz_beta)?,
        kcore: k_core_numbers(g),
        katz_alpha: alpha,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn path(n: usize) -> Graph {
        Graph::from_edges(n, (0..n - 1).map(|i| (i, i + 1))).unwrap()
    }
    fn cycle(n: usize) -> Graph {
        Graph::from_edges(n, (0..n).map(|i| (i, (i + 1) % n))).unwrap()
    }
    fn complete(n: usize) -> Graph {
        Graph::from_edges(n, (0..n).flat_map(|i| (i + 1..n).map(move |j| (i, j)))).unwrap()
    }
    fn star(n: usize) -> Graph {
        Graph::from_edges(n, (1..n).map(|i| (0, i))).unwrap()
    }
    fn close(a: &[f64], b: &[f64]) {
        assert_eq!(a.len(), b.len());
        for (x, y) in a.iter().zip(b) {
            assert!((x - y).abs() < 1e-9, "{a:?} vs {b:?}");
        }
    }

    #[test]
    fn degree_closed_forms() {
        close(&degree_centrality(&star(4)).unwrap().scores, &[1.0, 1.0 / 3.0, 1.0 / 3.0, 1.0 / 3.0]);
        close(&degree_centrality(&complete(5)).unwrap().scores, &[1.0; 5]);
        close(&degree_centrality(&path(3)).unwrap().scores, &[0.5, 1.0, 0.5]);
        assert!(degree_centrality(&Graph::from_edges(1, []).unwrap()).is_err());
    }

    #[test]
    fn closeness_closed_forms() {
        close(&closeness_centrality(&path(3)).unwrap().scores, &[2.0 / 3.0, 1.0, 2.0 / 3.0]);
        close(&closeness_centrality(&complete(5)).unwrap().scores, &[1.0; 5]);
        close(&closeness_centrality(&cycle(5)).unwrap().scores, &[4.0 / 6.0; 5]);
        let split = Graph::from_edges(4, [(0, 1), (2, 3)]).unwrap();
        assert_eq!(closeness_centrality(&split), Err(CentralityError::Disconnected));
    }

    #[test]
    fn betweenness_closed_forms() {
        close(&betweenness_centrality(&path(3)).unwrap().scores, &[0.0, 1.0, 0.0]);
        close(&betweenness_centrality(&complete(4)).unwrap().scores, &[0.0; 4]);
        close(&betweenness_centrality(&star(5)).unwrap().scores, &[1.0, 0.0, 0.0, 0.0, 0.0]);
        assert!(betweenness_centrality(&path(2)).is_err());
    }

    #[test]
    fn eigenvector_closed_forms() {
        close(&eigenvector_centrality(&cycle(4)).unwrap().scores, &[0.5; 4]);
        close(&eigenvector_centrality(&complete(3)).unwrap().scores, &[1.0 / 3f64.sqrt(); 3]);
        let s = 1.0 / 6f64.sqrt();
        close(&eigenvector_centrality(&star(4)).unwrap().scores, &[1.0 / 2f64.sqrt(), s, s, s]);
    }

    #[test]
    fn katz_closed_forms() {
        let edgeless = Graph::from_edges(4, []).unwrap();
        close(&katz_centrality(&edgeless, 0.1, 1.0).unwrap().scores, &[0.5; 4]);
        close(&katz_centrality(&complete(3), 0.1, 1.0).unwrap().scores, &[1.0 / 3f64.sqrt(); 3]);
        // Exact solution of (I - 0.1 A) x = 1 on P3: x0 = 1.1/0.98, x1 = 1.2/0.98.
        let raw = katz_raw(&path(3), 0.1, 1.0).unwrap();
        close(&raw, &[1.1 / 0.98, 1.2 / 0.98, 1.1 / 0.98]);
        assert!(raw[1] > raw[0]);
    }

    #[test]
    fn katz_rejects_large_alpha() {
        // lambda_max(K5) = 4
        let err = katz_centrality(&complete(5), 0.3, 1.0).unwrap_err();
        assert!(matches!(err, CentralityError::AlphaTooLarge { .. }));
    }

    #[test]
    fn kcore_closed_forms() {
        let tri_pendant = Graph::from_edges(4, [(0, 1), (1, 2), (0, 2), (2, 3)]).unwrap();
        assert_eq!(k_core_numbers(&tri_pendant).scores, vec![2.0, 2.0, 2.0, 1.0]);
        assert_eq!(k_core_numbers(&star(6)).scores, vec![1.0; 6]);
        assert_eq!(k_core_numbers(&complete(5)).scores, vec![4.0; 5]);
        let with_isolated = Graph::from_edges(3, [(0, 1)]).unwrap();
        assert_eq!(k_core_numbers(&with_isolated).scores, vec![1.0, 1.0, 0.0]);
    }

    #[test]
    fn compute_all_reduces_katz_alpha_when_needed() {
        let set = compute_all(&complete(20), KATZ_ALPHA, KATZ_BETA).unwrap();
        assert!(set.katz_alpha < 1.0 / 19.0);
        close(&set.katz.scores, &[1.0 / 20f64.sqrt(); 20]);
    }
}
