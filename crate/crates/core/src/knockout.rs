//! Temporal knockout scoring.
//!
//! For every initial agent the baseline epidemic is run once. Each
//! infectious node `(a, tau)` of that baseline is then knocked out (agent
//! `a` removed from `tau` onward) and the epidemic is resimulated from
//! `tau` on top of the unchanged baseline prefix. Non-infectious nodes take
//! the result of the agent's next infectious node, because a susceptible or
//! recovered agent cannot change anyone else's state; nodes with no later
//! infectious node score zero. Per-run grids are averaged over all initial
//! agents in ascending order, so the result does not depend on how the runs
//! are scheduled.
//!
//! Resimulation stops early once the knockout run has rejoined the
//! baseline: when every other agent is in its baseline state and `a` is
//! never infectious again in the baseline, the rest of the baseline count
//! applies unchanged.

use std::io::{self, Read, Write};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::epidemic::{popcount, simulate, DiseaseSpec, Dynamics, KnockoutSpec, SimError, TemporalWeb, Trajectory};
use crate::skeleton::Skeleton;

pub const TKO_MAGIC: [u8; 4] = *b"TKOF";
pub const TKO_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize)]
pub struct NodeMarginal {
    pub proportional: f64,
    pub delta_fraction: f64,
}

impl NodeMarginal {
    /// Marginal of removing `(a, tau)` given baseline magnitude `base` and
    /// knockout magnitude `knocked` on an `n x horizon` web.
    pub fn from_magnitudes(base: u64, knocked: u64, n: usize, horizon: usize, tau: usize) -> Self {
        let cells = (n * horizon) as f64;
        let reduced = cells - (horizon - tau) as f64;
        let knocked_fraction = if reduced > 0.0 { knocked as f64 / reduced } else { 0.0 };
        Self {
            proportional: 1.0 - knocked as f64 / base as f64,
            delta_fraction: base as f64 / cells - knocked_fraction,
        }
    }
}

/// Marginal effect of one node, computed by full resimulation.
pub fn node_marginal(
    sk: &Skeleton,
    disease: DiseaseSpec,
    initial_agent: usize,
    node: (usize, usize),
    baseline: &TemporalWeb,
) -> Result<NodeMarginal, SimError> {
    let (n, horizon) = (sk.node_count(), sk.horizon());
    let (agent, time) = node;
    if agent >= n || time >= horizon {
        return Err(SimError::InvalidNode { agent, time, n, horizon });
    }
    let base = baseline.magnitude();
    if base == 0 {
        return Err(SimError::EmptyBaseline);
    }
    let knocked = simulate(sk, disease, initial_agent, Some(KnockoutSpec { agent, time }))?.magnitude();
    Ok(NodeMarginal::from_magnitudes(base, knocked, n, horizon, time))
}

/// Where a per-run node value came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NodeSource {
    /// Infectious in the baseline; resimulated.
    Resimulated,
    /// Copied from the agent's next infectious node.
    Backfilled { from: usize },
    /// No infectious node at or after this time; scored zero.
    Zero,
}

/// Knockout results for a single initial agent.
#[derive(Debug, Clone)]
pub struct RunKnockouts {
    pub initial: usize,
    pub n: usize,
    pub horizon: usize,
    pub baseline_magnitude: u64,
    pub cumulative_cases: u64,
    /// Agent-major knockout magnitude for every node.
    pub knockout_magnitude: Vec<u64>,
    pub marginals: Vec<NodeMarginal>,
    pub sources: Vec<NodeSource>,
    /// Number of resimulations performed.
    pub resimulations: u64,
}

struct Baseline {
    traj: Trajectory,
    /// `prefix[t]`: infectious count over steps `< t`.
    prefix: Vec<u64>,
    /// `suffix[t]`: infectious count over steps `>= t`.
    suffix: Vec<u64>,
    last_infectious: Vec<Option<usize>>,
}

impl Baseline {
    fn new(traj: Trajectory, n: usize, horizon: usize) -> Self {
        let counts: Vec<u64> = (0..horizon).map(|t| traj.infectious_count(t)).collect();
        let mut prefix = vec![0u64; horizon + 1];
        for t in 0..horizon {
            prefix[t + 1] = prefix[t] + counts[t];
        }
        let mut suffix = vec![0u64; horizon + 1];
        for t in (0..horizon).rev() {
            suffix[t] = suffix[t + 1] + counts[t];
        }
        let last_infectious = (0..n).map(|a| (0..horizon).rev().find(|&t| traj.is_infectious(a, t))).collect();
        Self { traj, prefix, suffix, last_infectious }
    }
}

struct Scratch {
    inf: Vec<u64>,
    rec: Vec<u64>,
    next_inf: Vec<u64>,
    next_rec: Vec<u64>,
    others: Vec<u64>,
}

impl Scratch {
    fn new(words: usize) -> Self {
        Self {
            inf: vec![0; words],
            rec: vec![0; words],
            next_inf: vec![0; words],
            next_rec: vec![0; words],
            others: vec![0; words],
        }
    }
}

/// Magnitude of the run with `agent` removed from `tau` onward, resimulated
/// from the baseline state at `tau - 1`.
fn knockout_magnitude(dynamics: &Dynamics, base: &Baseline, agent: usize, tau: usize, s: &mut Scratch) -> u64 {
    let horizon = dynamics.horizon();
    let ko = KnockoutSpec { agent, time: tau };
    if tau == 0 {
        dynamics.initial(base.traj.initial(), Some(ko), &mut s.inf, &mut s.rec);
    } else {
        dynamics.step(
            tau - 1,
            base.traj.infectious_at(tau - 1),
            base.traj.recovered_at(tau - 1),
            Some(agent),
            &mut s.inf,
            &mut s.rec,
        );
    }
    s.others.iter_mut().for_each(|w| *w = !0);
    s.others[agent / 64] &= !(1u64 << (agent % 64));

    let passive_after = base.last_infectious[agent].map_or(0, |last| last + 1);
    let mut total = base.prefix[tau];
    let mut t = tau;
    loop {
        if t >= passive_after && rejoined(&s.inf, &s.rec, &base.traj, t, &s.others) {
            return total + base.suffix[t];
        }
        let count = popcount(&s.inf);
        if count == 0 {
            return total;
        }
        total += count;
        if t + 1 == horizon {
            return total;
        }
        dynamics.step(t, &s.inf, &s.rec, Some(agent), &mut s.next_inf, &mut s.next_rec);
        std::mem::swap(&mut s.inf, &mut s.next_inf);
        std::mem::swap(&mut s.rec, &mut s.next_rec);
        t += 1;
    }
}

#[inline]
fn rejoined(inf: &[u64], rec: &[u64], traj: &Trajectory, t: usize, mask: &[u64]) -> bool {
    let (bi, br) = (traj.infectious_at(t), traj.recovered_at(t));
    inf.iter()
        .zip(bi)
        .zip(rec.iter().zip(br))
        .zip(mask)
        .all(|(((a, b), (c, d)), m)| ((a ^ b) | (c ^ d)) & m == 0)
}

/// Knockout magnitudes and marginals for every node of one initial agent's
/// web, using resimulation at infectious nodes plus backfill.
pub fn run_knockouts(dynamics: &Dynamics, initial: usize) -> Result<RunKnockouts, SimError> {
    let (n, horizon) = (dynamics.node_count(), dynamics.horizon());
    let traj = dynamics.run(initial, None)?;
    let baseline_magnitude = traj.magnitude();
    let cumulative_cases = traj.cumulative_cases();
    let base = Baseline::new(traj, n, horizon);
    let mut scratch = Scratch::new(dynamics.words());

    let mut knockout_magnitude_grid = vec![baseline_magnitude; n * horizon];
    let mut marginals = vec![NodeMarginal::default(); n * horizon];
    let mut sources = vec![NodeSource::Zero; n * horizon];
    let mut resimulations = 0;
    for a in 0..n {
        let mut next: Option<usize> = None;
        for t in (0..horizon).rev() {
            let idx = a * horizon + t;
            if base.traj.is_infectious(a, t) {
                let knocked = knockout_magnitude(dynamics, &base, a, t, &mut scratch);
                resimulations += 1;
                knockout_magnitude_grid[idx] = knocked;
                marginals[idx] = NodeMarginal::from_magnitudes(baseline_magnitude, knocked, n, horizon, t);
                sources[idx] = NodeSource::Resimulated;
                next = Some(t);
            } else if let Some(from) = next {
                let src = a * horizon + from;
                knockout_magnitude_grid[idx] = knockout_magnitude_grid[src];
                marginals[idx] = marginals[src];
                sources[idx] = NodeSource::Backfilled { from };
            }
        }
    }
    Ok(RunKnockouts {
        initial,
        n,
        horizon,
        baseline_magnitude,
        cumulative_cases,
        knockout_magnitude: knockout_magnitude_grid,
        marginals,
        sources,
        resimulations,
    })
}

/// Mean node marginals over all single-agent initial conditions.
#[derive(Debug, Clone, PartialEq)]
pub struct TkoField {
    pub n: usize,
    pub horizon: usize,
    pub disease: DiseaseSpec,
    pub skeleton_seed: u64,
    /// Agent-major `n x horizon` grid.
    pub scores: Vec<NodeMarginal>,
    /// Baseline magnitude for each initial agent.
    pub initial_magnitudes: Vec<u64>,
    pub initial_cases: Vec<u64>,
    pub resimulations: u64,
}

impl TkoField {
    pub fn get(&self, agent: usize, time: usize) -> NodeMarginal {
        self.scores[agent * self.horizon + time]
    }

    pub fn row(&self, agent: usize) -> &[NodeMarginal] {
        &self.scores[agent * self.horizon..(agent + 1) * self.horizon]
    }

    /// Binary layout, little-endian: magic `TKOF`, `u32` version, `u32` n,
    /// `u32` horizon, then `n * horizon` pairs of `f64` (proportional,
    /// delta fraction) in agent-major order.
    pub fn write_binary<W: Write>(&self, mut out: W) -> io::Result<()> {
        out.write_all(&TKO_MAGIC)?;
        out.write_all(&TKO_VERSION.to_le_bytes())?;
        out.write_all(&(self.n as u32).to_le_bytes())?;
        out.write_all(&(self.horizon as u32).to_le_bytes())?;
        for m in &self.scores {
            out.write_all(&m.proportional.to_le_bytes())?;
            out.write_all(&m.delta_fraction.to_le_bytes())?;
        }
        Ok(())
    }

    /// Reads the grid written by [`TkoField::write_binary`].
    pub fn read_binary<R: Read>(mut input: R) -> io::Result<(usize, usize, Vec<NodeMarginal>)> {
        let invalid = |msg: &str| io::Error::new(io::ErrorKind::InvalidData, msg.to_string());
        let mut header = [0u8; 16];
        input.read_exact(&mut header)?;
        if header[..4] != TKO_MAGIC {
            return Err(invalid("bad magic"));
        }
        let word = |k: usize| u32::from_le_bytes(header[k..k + 4].try_into().unwrap());
        if word(4) != TKO_VERSION {
            return Err(invalid("unsupported version"));
        }
        let (n, horizon) = (word(8) as usize, word(12) as usize);
        let mut body = Vec::new();
        input.read_to_end(&mut body)?;
        if body.len() != n * horizon * 16 {
            return Err(invalid("truncated grid"));
        }
        let scores = body
            .chunks_exact(16)
            .map(|c| NodeMarginal {
                proportional: f64::from_le_bytes(c[..8].try_into().unwrap()),
                delta_fraction: f64::from_le_bytes(c[8..].try_into().unwrap()),
            })
            .collect();
        Ok((n, horizon, scores))
    }

    pub fn write_csv<W: Write>(&self, mut out: W) -> io::Result<()> {
        writeln!(out, "agent,time,mean_proportional,mean_delta_fraction")?;
        for a in 0..self.n {
            for (t, m) in self.row(a).iter().enumerate() {
                writeln!(out, "{a},{t},{},{}", m.proportional, m.delta_fraction)?;
            }
        }
        Ok(())
    }
}

/// Runs every initial agent and averages the per-run grids.
///
/// Runs execute on the current rayon pool; accumulation happens in
/// ascending initial-agent order regardless of pool size.
pub fn tko_field(sk: &Skeleton, disease: DiseaseSpec) -> Result<TkoField, SimError> {
    let dynamics = Dynamics::new(sk, disease)?;
    let (n, horizon) = (sk.node_count(), sk.horizon());
    let mut sums = vec![(0.0f64, 0.0f64); n * horizon];
    let mut initial_magnitudes = Vec::with_capacity(n);
    let mut initial_cases = Vec::with_capacity(n);
    let mut resimulations = 0;
    let chunk = (rayon::current_num_threads() * 2).max(1);
    let agents: Vec<usize> = (0..n).collect();
    for block in agents.chunks(chunk) {
        let runs: Vec<RunKnockouts> =
            block.par_iter().map(|&a| run_knockouts(&dynamics, a)).collect::<Result<_, _>>()?;
        for run in runs {
            for (acc, m) in sums.iter_mut().zip(&run.marginals) {
                acc.0 += m.proportional;
                acc.1 += m.delta_fraction;
            }
            initial_magnitudes.push(run.baseline_magnitude);
            initial_cases.push(run.cumulative_cases);
            resimulations += run.resimulations;
        }
    }
    let scale = n as f64;
    let scores = sums
        .into_iter()
        .map(|(p, d)| NodeMarginal { proportional: p / scale, delta_fraction: d / scale })
        .collect();
    Ok(TkoField {
        n,
        horizon,
        disease,
        skeleton_seed: sk.master_seed(),
        scores,
        initial_magnitudes,
        initial_cases,
        resimulations,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct AgentTko {
    pub agent: usize,
    #[serde(rename = "max_prop")]
    pub max_proportional: f64,
    #[serde(rename = "max_delta")]
    pub max_delta_fraction: f64,
    #[serde(rename = "mean_prop")]
    pub mean_proportional: f64,
    #[serde(rename = "mean_delta")]
    pub mean_delta_fraction: f64,
}

/// Per-agent maximum and mean over all time steps (zeros included).
pub fn aggregate_agents(field: &TkoField) -> Vec<AgentTko> {
    let horizon = field.horizon as f64;
    (0..field.n)
        .map(|agent| {
            let row = field.row(agent);
            let max_p = row.iter().map(|m| m.proportional).fold(f64::NEG_INFINITY, f64::max);
            let max_d = row.iter().map(|m| m.delta_fraction).fold(f64::NEG_INFINITY, f64::max);
            let sum_p: f64 = row.iter().map(|m| m.proportional).sum();
            let sum_d: f64 = row.iter().map(|m| m.delta_fraction).sum();
            AgentTko {
                agent,
                max_proportional: max_p,
                max_delta_fraction: max_d,
                mean_proportional: sum_p / horizon,
                mean_delta_fraction: sum_d / horizon,
            }
        })
        .collect()
}

pub fn write_agent_csv<W: Write>(agents: &[AgentTko], mut out: W) -> io::Result<()> {
    writeln!(out, "agent,max_prop,max_delta,mean_prop,mean_delta")?;
    for a in agents {
        writeln!(
            out,
            "{},{},{},{},{}",
            a.agent, a.max_proportional, a.max_delta_fraction, a.mean_proportional, a.mean_delta_fraction
        )?;
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TimeSeriesPoint {
    pub agent: usize,
    pub time: usize,
    pub mean_proportional: f64,
    pub mean_delta_fraction: f64,
}

/// Plot-ready `(agent, time, mean marginal)` rows for the chosen agents.
pub fn tko_time_series(field: &TkoField, agents: &[usize]) -> Vec<TimeSeriesPoint> {
    agents
        .iter()
        .filter(|&&a| a < field.n)
        .flat_map(|&agent| {
            field.row(agent).iter().enumerate().map(move |(time, m)| TimeSeriesPoint {
                agent,
                time,
                mean_proportional: m.proportional,
                mean_delta_fraction: m.delta_fraction,
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::epidemic::Model;
    use crate::graphgen::{BaseNetwork, Graph};
    use crate::skeleton::{build_skeleton_from_draws, DrawTables};

    fn path_fixture(horizon: usize) -> Skeleton {
        let net = BaseNetwork::explicit(Graph::from_edges(3, [(0, 1), (1, 2)]).unwrap());
        let tabs = DrawTables::constant(&net.graph, horizon, 0.0, 0.0, 1.0);
        build_skeleton_from_draws(net, horizon, tabs).unwrap()
    }

    fn sir1() -> DiseaseSpec {
        DiseaseSpec::new(Model::SIR, 1.0)
    }

    #[test]
    fn path_node_marginal() {
        let sk = path_fixture(4);
        let base = simulate(&sk, sir1(), 0, None).unwrap();
        let m = node_marginal(&sk, sir1(), 0, (1, 1), &base).unwrap();
        assert!((m.proportional - 5.0 / 9.0).abs() < 1e-12);
        assert!((m.delta_fraction - (9.0 / 12.0 - 4.0 / 9.0)).abs() < 1e-12);
        assert!((m.delta_fraction - 0.3056).abs() < 1e-4);
    }

    #[test]
    fn seed_node_marginal_is_one() {
        let sk = path_fixture(4);
        let base = simulate(&sk, sir1(), 0, None).unwrap();
        assert_eq!(node_marginal(&sk, sir1(), 0, (0, 0), &base).unwrap().proportional, 1.0);
        assert!(matches!(node_marginal(&sk, sir1(), 0, (5, 0), &base), Err(SimError::InvalidNode { .. })));
    }

    #[test]
    fn run_knockouts_backfills_path() {
        let sk = path_fixture(4);
        let dynamics = Dynamics::new(&sk, sir1()).unwrap();
        let run = run_knockouts(&dynamics, 0).unwrap();
        assert_eq!(run.baseline_magnitude, 9);
        assert_eq!(run.knockout_magnitude[4 + 1], 4);
        assert_eq!(run.sources[4], NodeSource::Backfilled { from: 1 });
        assert_eq!(run.marginals[4], run.marginals[5]);
        assert_eq!(run.knockout_magnitude[0], 0);
        assert_eq!(run.marginals[0].proportional, 1.0);
    }

    #[test]
    fn beta_zero_field_is_seed_only() {
        let net = BaseNetwork::explicit(Graph::from_edges(4, [(0, 1), (1, 2), (2, 3)]).unwrap());
        let mut tabs = DrawTables::constant(&net.graph, 6, 0.0, 0.5, 1.0);
        // agent 2 recovers into t=3 when seeded
        tabs.set_recovery(&net.graph, 2, 2, 0.0);
        let sk = build_skeleton_from_draws(net, 6, tabs).unwrap();
        let field = tko_field(&sk, DiseaseSpec::new(Model::SIR, 0.0)).unwrap();
        // Only an agent's own run contributes. Removing (a, t) there keeps the
        // t infectious steps before it, so the run's marginal is 1 - t/L.
        for a in 0..4 {
            let len = if a == 2 { 3 } else { 6 };
            for t in 0..6 {
                let expected = if t < len { (1.0 - t as f64 / len as f64) / 4.0 } else { 0.0 };
                assert_eq!(field.get(a, t).proportional, expected, "agent {a} t {t}");
            }
        }
    }

    #[test]
    fn aggregate_row_arithmetic() {
        let field = TkoField {
            n: 2,
            horizon: 4,
            disease: sir1(),
            skeleton_seed: 0,
            scores: [0.5, 0.25, 0.0, 0.0, 0.1, -0.6, 0.0, 0.0]
                .iter()
                .map(|&p| NodeMarginal { proportional: p, delta_fraction: p })
                .collect(),
            initial_magnitudes: vec![1, 1],
            initial_cases: vec![1, 1],
            resimulations: 0,
        };
        let agg = aggregate_agents(&field);
        assert_eq!(agg[0].max_proportional, 0.5);
        assert_eq!(agg[0].mean_proportional, 0.1875);
        assert!(agg[1].mean_proportional < 0.0);
        assert!(agg[1].max_proportional > 0.0);
        let zero = TkoField { scores: vec![NodeMarginal::default(); 8], ..field.clone() };
        assert!(aggregate_agents(&zero).iter().all(|a| a.max_proportional == 0.0 && a.mean_delta_fraction == 0.0));
    }

    #[test]
    fn binary_layout_round_trip() {
        let sk = path_fixture(4);
        let field = tko_field(&sk, sir1()).unwrap();
        let mut buf = Vec::new();
        field.write_binary(&mut buf).unwrap();
        assert_eq!(&buf[..4], b"TKOF");
        assert_eq!(buf.len(), 16 + 3 * 4 * 16);
        let (n, horizon, scores) = TkoField::read_binary(&buf[..]).unwrap();
        assert_eq!((n, horizon), (3, 4));
        assert_eq!(scores, field.scores);
        assert!(TkoField::read_binary(&buf[..20]).is_err());
    }

    #[test]
    fn time_series_rows() {
        let sk = path_fixture(4);
        let field = tko_field(&sk, sir1()).unwrap();
        let rows = tko_time_series(&field, &[2, 7]);
        assert_eq!(rows.len(), 4);
        assert!(rows.iter().all(|r| r.agent == 2));
        assert_eq!(rows[3].mean_proportional, field.get(2, 3).proportional);
    }
}
