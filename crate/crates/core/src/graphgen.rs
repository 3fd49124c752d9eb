//! Base network generators and the plain-text edge-list format.
//!
//! Two families are supported: connected Watts-Strogatz small worlds and
//! Barabasi-Albert preferential attachment networks. Both are driven by a
//! `ChaCha8Rng` seeded from a single `u64`, so a `(n, params, seed)` triple
//! always reproduces the same edge set.

use std::collections::{BTreeSet, HashSet, VecDeque};
use std::fmt;
use std::io::{self, BufRead, Write};
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum GraphError {
    #[error("invalid generator parameters: {0}")]
    InvalidParams(String),
    #[error("no connected small world after {retries} attempts")]
    ConnectivityExhausted { retries: usize },
    #[error("malformed edge list at line {line}: {reason}")]
    Parse { line: usize, reason: String },
    #[error(transparent)]
    Io(#[from] io::Error),
}

/// Undirected simple graph on nodes `0..n` with sorted adjacency rows.
///
/// Edges are stored once as `(u, v)` with `u < v`, in ascending order.
/// The adjacency is a CSR layout; each directed arc `i -> j` has a stable
/// index into `targets`, which the skeleton uses to address per-arc data.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Graph {
    n: usize,
    edges: Vec<(u32, u32)>,
    offsets: Vec<usize>,
    targets: Vec<u32>,
}

impl Graph {
    /// Builds a graph from an edge iterator. Self-loops and duplicate pairs
    /// (in either orientation) are rejected.
    pub fn from_edges<I>(n: usize, edges: I) -> Result<Self, GraphError>
    where
        I: IntoIterator<Item = (usize, usize)>,
    {
        let mut set = BTreeSet::new();
        for (u, v) in edges {
            if u >= n || v >= n {
                return Err(GraphError::InvalidParams(format!(
                    "edge ({u}, {v}) out of range for n={n}"
                )));
            }
            if u == v {
                return Err(GraphError::InvalidParams(format!("self-loop at {u}")));
            }
            let key = (u.min(v) as u32, u.max(v) as u32);
            if !set.insert(key) {
                return Err(GraphError::InvalidParams(format!("duplicate edge ({u}, {v})")));
            }
        }
        Ok(Self::from_sorted_set(n, set))
    }

    fn from_sorted_set(n: usize, set: BTreeSet<(u32, u32)>) -> Self {
        let edges: Vec<(u32, u32)> = set.into_iter().collect();
        let mut degree = vec![0usize; n];
        for &(u, v) in &edges {
            degree[u as usize] += 1;
            degree[v as usize] += 1;
        }
        let mut offsets = Vec::with_capacity(n + 1);
        offsets.push(0);
        for d in &degree {
            offsets.push(offsets.last().unwrap() + d);
        }
        let mut fill = offsets[..n].to_vec();
        let mut targets = vec![0u32; edges.len() * 2];
        for &(u, v) in &edges {
            targets[fill[u as usize]] = v;
            fill[u as usize] += 1;
            targets[fill[v as usize]] = u;
            fill[v as usize] += 1;
        }
        for i in 0..n {
            targets[offsets[i]..offsets[i + 1]].sort_unstable();
        }
        Self { n, edges, offsets, targets }
    }

    pub fn node_count(&self) -> usize {
        self.n
    }

    pub fn edge_count(&self) -> usize {
        self.edges.len()
    }

    pub fn edges(&self) -> &[(u32, u32)] {
        &self.edges
    }

    /// Number of directed arcs (twice the edge count).
    pub fn arc_count(&self) -> usize {
        self.targets.len()
    }

    pub fn degree(&self, i: usize) -> usize {
        self.offsets[i + 1] - self.offsets[i]
    }

    pub fn neighbors(&self, i: usize) -> &[u32] {
        &self.targets[self.offsets[i]..self.offsets[i + 1]]
    }

    /// Arc index range for the out-arcs of `i`.
    pub fn arc_range(&self, i: usize) -> std::ops::Range<usize> {
        self.offsets[i]..self.offsets[i + 1]
    }

    pub fn arc_target(&self, arc: usize) -> usize {
        self.targets[arc] as usize
    }

    /// Index of the directed arc `i -> j`, if `{i, j}` is an edge.
    pub fn arc_index(&self, i: usize, j: usize) -> Option<usize> {
        if i >= self.n || j >= self.n {
            return None;
        }
        let row = self.neighbors(i);
        row.binary_search(&(j as u32)).ok().map(|k| self.offsets[i] + k)
    }

    pub fn has_edge(&self, i: usize, j: usize) -> bool {
        self.arc_index(i, j).is_some()
    }

    pub fn is_connected(&self) -> bool {
        if self.n == 0 {
            return true;
        }
        let mut seen = vec![false; self.n];
        let mut queue = VecDeque::from([0usize]);
        seen[0] = true;
        let mut count = 1;
        while let Some(v) = queue.pop_front() {
            for &w in self.neighbors(v) {
                let w = w as usize;
                if !seen[w] {
                    seen[w] = true;
                    count += 1;
                    queue.push_back(w);
                }
            }
        }
        count == self.n
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum NetworkKind {
    #[serde(rename = "smallworld")]
    SmallWorld,
    #[serde(rename = "scalefree")]
    ScaleFree,
    /// Hand-built or derived graphs (test fixtures, flattened networks).
    Explicit,
}

impl NetworkKind {
    pub fn as_str(self) -> &'static str {
        match self {
            NetworkKind::SmallWorld => "smallworld",
            NetworkKind::ScaleFree => "scalefree",
            NetworkKind::Explicit => "explicit",
        }
    }
}

impl fmt::Display for NetworkKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for NetworkKind {
    type Err = GraphError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "smallworld" => Ok(NetworkKind::SmallWorld),
            "scalefree" => Ok(NetworkKind::ScaleFree),
            "explicit" => Ok(NetworkKind::Explicit),
            other => Err(GraphError::InvalidParams(format!("unknown network kind {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum GeneratorParams {
    SmallWorld { k: usize, p_rewire: f64 },
    ScaleFree { m: usize },
    Explicit,
}

impl GeneratorParams {
    pub fn kind(&self) -> NetworkKind {
        match self {
            GeneratorParams::SmallWorld { .. } => NetworkKind::SmallWorld,
            GeneratorParams::ScaleFree { .. } => NetworkKind::ScaleFree,
            GeneratorParams::Explicit => NetworkKind::Explicit,
        }
    }
}

impl fmt::Display for GeneratorParams {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            GeneratorParams::SmallWorld { k, p_rewire } => write!(f, "k={k},p_rewire={p_rewire}"),
            GeneratorParams::ScaleFree { m } => write!(f, "m={m}"),
            GeneratorParams::Explicit => f.write_str("none"),
        }
    }
}

/// A generated network together with the provenance needed to regenerate it.
#[derive(Debug, Clone, PartialEq)]
pub struct BaseNetwork {
    pub graph: Graph,
    pub params: GeneratorParams,
    pub seed: u64,
}

impl BaseNetwork {
    /// Wraps a hand-built graph (fixtures, flattened graphs).
    pub fn explicit(graph: Graph) -> Self {
        Self { graph, params: GeneratorParams::Explicit, seed: 0 }
    }

    pub fn kind(&self) -> NetworkKind {
        self.params.kind()
    }

    pub fn node_count(&self) -> usize {
        self.graph.node_count()
    }

    /// Writes the edge list: a `#` header line, then one `u v` pair per line.
    pub fn write_edge_list<W: Write>(&self, mut out: W) -> io::Result<()> {
        writeln!(
            out,
            "# kind={} n={} seed={} params={}",
            self.kind(),
            self.graph.node_count(),
            self.seed,
            self.params
        )?;
        for &(u, v) in self.graph.edges() {
            writeln!(out, "{u} {v}")?;
        }
        Ok(())
    }

    pub fn read_edge_list<R: BufRead>(input: R) -> Result<Self, GraphError> {
        let mut lines = input.lines();
        let header = lines
            .next()
            .ok_or_else(|| GraphError::Parse { line: 1, reason: "empty file".into() })??;
        let (kind, n, seed, params) = parse_header(&header)?;
        let mut edges = Vec::new();
        for (idx, line) in lines.enumerate() {
            let line = line?;
            let line = line.trim();
            if line.is_empty() {
                continue;
            }
            let lineno = idx + 2;
            let mut parts = line.split_whitespace();
            let mut next = || -> Result<usize, GraphError> {
                parts
                    .next()
                    .ok_or_else(|| GraphError::Parse { line: lineno, reason: "expected two ids".into() })?
                    .parse()
                    .map_err(|e| GraphError::Parse { line: lineno, reason: format!("{e}") })
            };
            let u = next()?;
            let v = next()?;
            edges.push((u, v));
        }
        let graph = Graph::from_edges(n, edges)?;
        let params = match kind {
            NetworkKind::SmallWorld => GeneratorParams::SmallWorld {
                k: param_value(&params, "k")?,
                p_rewire: param_value(&params, "p_rewire")?,
            },
            NetworkKind::ScaleFree => GeneratorParams::ScaleFree { m: param_value(&params, "m")? },
            NetworkKind::Explicit => GeneratorParams::Explicit,
        };
        Ok(Self { graph, params, seed })
    }
}

fn parse_header(header: &str) -> Result<(NetworkKind, usize, u64, String), GraphError> {
    let bad = |reason: &str| GraphError::Parse { line: 1, reason: reason.to_string() };
    let body = header.strip_prefix('#').ok_or_else(|| bad("missing '#' header"))?;
    let (mut kind, mut n, mut seed, mut params) = (None, None, None, None);
    for field in body.split_whitespace() {
        let (key, value) = field.split_once('=').ok_or_else(|| bad("header field without '='"))?;
        match key {
            "kind" => kind = Some(value.parse::<NetworkKind>()?),
            "n" => n = Some(value.parse().map_err(|_| bad("bad n"))?),
            "seed" => seed = Some(value.parse().map_err(|_| bad("bad seed"))?),
            "params" => params = Some(value.to_string()),
            _ => {}
        }
    }
    Ok((
        kind.ok_or_else(|| bad("missing kind"))?,
        n.ok_or_else(|| bad("missing n"))?,
        seed.ok_or_else(|| bad("missing seed"))?,
        params.unwrap_or_default(),
    ))
}

fn param_value<T: FromStr>(params: &str, key: &str) -> Result<T, GraphError> {
    params
        .split(',')
        .filter_map(|kv| kv.split_once('='))
        .find(|(k, _)| *k == key)
        .and_then(|(_, v)| v.parse().ok())
        .ok_or_else(|| GraphError::Parse { line: 1, reason: format!("missing or invalid param {key}") })
}

/// Connected Watts-Strogatz network.
///
/// Starts from a ring lattice where each node links to `k/2` neighbours on
/// each side. Lattice offsets are visited in ascending order and, within an
/// offset, nodes in ascending order; each rightward edge `(u, u+j)` is
/// rewired with probability `p_rewire` to `(u, w)` with `w` uniform among
/// nodes that are neither `u` nor already adjacent to `u`. Generation is
/// repeated with fresh draws from the same stream until the graph is
/// connected, at most `max_retries` times.
pub fn generate_small_world(
    n: usize,
    k: usize,
    p_rewire: f64,
    seed: u64,
    max_retries: usize,
) -> Result<BaseNetwork, GraphError> {
    if k < 2 || !k.is_multiple_of(2) || n <= k {
        return Err(GraphError::InvalidParams(format!(
            "small world requires even k >= 2 and n > k (n={n}, k={k})"
        )));
    }
    if !(0.0..=1.0).contains(&p_rewire) {
        return Err(GraphError::InvalidParams(format!("p_rewire={p_rewire} outside [0, 1]")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for _ in 0..max_retries {
        let graph = watts_strogatz_once(n, k, p_rewire, &mut rng);
        if graph.is_connected() {
            return Ok(BaseNetwork { graph, params: GeneratorParams::SmallWorld { k, p_rewire }, seed });
        }
    }
    Err(GraphError::ConnectivityExhausted { retries: max_retries })
}

fn watts_strogatz_once(n: usize, k: usize, p_rewire: f64, rng: &mut ChaCha8Rng) -> Graph {
    let mut adj: Vec<HashSet<usize>> = vec![HashSet::new(); n];
    for u in 0..n {
        for j in 1..=k / 2 {
            let v = (u + j) % n;
            adj[u].insert(v);
            adj[v].insert(u);
        }
    }
    for j in 1..=k / 2 {
        for u in 0..n {
            if rng.gen::<f64>() >= p_rewire {
                continue;
            }
            let v = (u + j) % n;
            // The edge may already have been rewired away from u's side.
            if !adj[u].contains(&v) || adj[u].len() >= n - 1 {
                continue;
            }
            let w = loop {
                let w = rng.gen_range(0..n);
                if w != u && !adj[u].contains(&w) {
                    break w;
                }
            };
            adj[u].remove(&v);
            adj[v].remove(&u);
            adj[u].insert(w);
            adj[w].insert(u);
        }
    }
    let set = adj
        .iter()
        .enumerate()
        .flat_map(|(u, row)| row.iter().filter(move |&&v| u < v).map(move |&v| (u as u32, v as u32)))
        .collect();
    Graph::from_sorted_set(n, set)
}

/// Barabasi-Albert network with `(n - m) * m` edges.
///
/// Starts from `m` isolated nodes. The first arriving node attaches to all
/// of them; every later arrival attaches to `m` distinct nodes drawn from a
/// list in which each node appears once per unit of degree.
pub fn generate_scale_free(n: usize, m: usize, seed: u64) -> Result<BaseNetwork, GraphError> {
    if m < 1 || m >= n {
        return Err(GraphError::InvalidParams(format!("scale free requires 1 <= m < n (n={n}, m={m})")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut set = BTreeSet::new();
    let mut repeated: Vec<usize> = Vec::with_capacity(2 * n * m);
    let mut targets: Vec<usize> = (0..m).collect();
    for source in m..n {
        for &t in &targets {
            set.insert((t as u32, source as u32));
        }
        repeated.extend_from_slice(&targets);
        repeated.extend(std::iter::repeat_n(source, m));
        targets = sample_distinct(&repeated, m, &mut rng);
    }
    let graph = Graph::from_sorted_set(n, set);
    Ok(BaseNetwork { graph, params: GeneratorParams::ScaleFree { m }, seed })
}

/// Draws `m` distinct values from `pool` by rejection; returns them sorted
/// so edge insertion order does not depend on hash iteration.
fn sample_distinct(pool: &[usize], m: usize, rng: &mut ChaCha8Rng) -> Vec<usize> {
    let mut picked = BTreeSet::new();
    while picked.len() < m {
        picked.insert(*pool.choose(rng).expect("non-empty pool"));
    }
    picked.into_iter().collect()
}
