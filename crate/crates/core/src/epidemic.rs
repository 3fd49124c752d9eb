//! SIR/SIS dynamics on a skeleton with simultaneous updating.
//!
//! One step maps the states at `t` to the states at `t + 1`:
//!
//! - a susceptible `j` becomes infectious iff some infectious neighbour `i`
//!   activated the arc `i -> j` at `t` and the transmission draw for that
//!   arc and step is below `beta`;
//! - an infectious agent leaves `I` iff its recovery draw at `t` is below
//!   `recovery_prob` (into `R` for SIR, `S` for SIS);
//! - a knocked-out agent is `Removed` from its knockout step onward and
//!   neither transmits nor receives from then on.
//!
//! [`Dynamics`] pre-thresholds every draw for one `(skeleton, disease)` pair
//! into per-step bit masks, so a run is a sequence of word-wide set
//! operations. All runs on the same skeleton see identical events.

use std::fmt;
use std::io::{self, Write};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::skeleton::Skeleton;

pub const DEFAULT_RECOVERY_PROB: f64 = 1.0 / 15.0;

#[derive(Debug, Error, PartialEq)]
pub enum SimError {
    #[error("agent {agent} out of range (n={n})")]
    InvalidAgent { agent: usize, n: usize },
    #[error("knockout ({agent}, {time}) invalid for n={n}, horizon={horizon}")]
    InvalidKnockout { agent: usize, time: usize, n: usize, horizon: usize },
    #[error("node ({agent}, {time}) invalid for n={n}, horizon={horizon}")]
    InvalidNode { agent: usize, time: usize, n: usize, horizon: usize },
    #[error("invalid disease parameters: {0}")]
    InvalidDisease(String),
    #[error("skeleton horizon is zero")]
    EmptyHorizon,
    #[error("baseline run has zero magnitude")]
    EmptyBaseline,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Model {
    SIR,
    SIS,
}

impl Model {
    pub fn as_str(self) -> &'static str {
        match self {
            Model::SIR => "SIR",
            Model::SIS => "SIS",
        }
    }
}

impl fmt::Display for Model {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DiseaseSpec {
    pub model: Model,
    pub beta: f64,
    pub recovery_prob: f64,
}

impl DiseaseSpec {
    pub fn new(model: Model, beta: f64) -> Self {
        Self { model, beta, recovery_prob: DEFAULT_RECOVERY_PROB }
    }

    pub fn validate(&self) -> Result<(), SimError> {
        if !(0.0..=1.0).contains(&self.beta) {
            return Err(SimError::InvalidDisease(format!("beta={} outside [0, 1]", self.beta)));
        }
        if !(self.recovery_prob > 0.0 && self.recovery_prob <= 1.0) {
            return Err(SimError::InvalidDisease(format!("recovery_prob={} outside (0, 1]", self.recovery_prob)));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct KnockoutSpec {
    pub agent: usize,
    pub time: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[repr(u8)]
pub enum State {
    S,
    I,
    R,
    Removed,
}

impl State {
    pub fn as_char(self) -> char {
        match self {
            State::S => 'S',
            State::I => 'I',
            State::R => 'R',
            State::Removed => 'X',
        }
    }
}

#[inline]
pub(crate) fn words_for(n: usize) -> usize {
    n.div_ceil(64)
}

#[inline]
fn bit(words: &[u64], i: usize) -> bool {
    words[i / 64] >> (i % 64) & 1 == 1
}

#[inline]
fn set_bit(words: &mut [u64], i: usize) {
    words[i / 64] |= 1 << (i % 64);
}

#[inline]
fn clear_bit(words: &mut [u64], i: usize) {
    words[i / 64] &= !(1 << (i % 64));
}

#[inline]
pub(crate) fn popcount(words: &[u64]) -> u64 {
    words.iter().map(|w| w.count_ones() as u64).sum()
}

/// Per-step event masks for one skeleton and disease.
pub struct Dynamics<'a> {
    sk: &'a Skeleton,
    disease: DiseaseSpec,
    n: usize,
    horizon: usize,
    words: usize,
    /// Row `(t * n + i)`: agents that `i` infects at `t` if they are susceptible.
    transmit: Vec<u64>,
    /// Row `t`: agents whose recovery draw at `t` succeeds.
    recover: Vec<u64>,
    /// Mask of valid agent bits.
    all: Vec<u64>,
}

impl<'a> Dynamics<'a> {
    pub fn new(sk: &'a Skeleton, disease: DiseaseSpec) -> Result<Self, SimError> {
        disease.validate()?;
        if sk.horizon() == 0 {
            return Err(SimError::EmptyHorizon);
        }
        let g = sk.graph();
        let n = g.node_count();
        let horizon = sk.horizon();
        let words = words_for(n);
        let mut transmit = vec![0u64; horizon * n * words];
        let mut recover = vec![0u64; horizon * words];
        for t in 0..horizon {
            for i in 0..n {
                let row = &mut transmit[(t * n + i) * words..(t * n + i + 1) * words];
                for arc in g.arc_range(i) {
                    if sk.is_activated_by_arc(arc, t) && sk.transmission_by_arc(arc, t) < disease.beta {
                        set_bit(row, g.arc_target(arc));
                    }
                }
                if sk.recovery_draw(i, t).expect("in range") < disease.recovery_prob {
                    set_bit(&mut recover[t * words..(t + 1) * words], i);
                }
            }
        }
        let mut all = vec![0u64; words];
        for i in 0..n {
            set_bit(&mut all, i);
        }
        Ok(Self { sk, disease, n, horizon, words, transmit, recover, all })
    }

    pub fn skeleton(&self) -> &Skeleton {
        self.sk
    }

    pub fn disease(&self) -> DiseaseSpec {
        self.disease
    }

    pub fn node_count(&self) -> usize {
        self.n
    }

    pub fn horizon(&self) -> usize {
        self.horizon
    }

    pub(crate) fn words(&self) -> usize {
        self.words
    }

    pub(crate) fn check_knockout(&self, ko: &KnockoutSpec) -> Result<(), SimError> {
        if ko.agent >= self.n || ko.time >= self.horizon {
            return Err(SimError::InvalidKnockout {
                agent: ko.agent,
                time: ko.time,
                n: self.n,
                horizon: self.horizon,
            });
        }
        Ok(())
    }

    /// Writes the `t = 0` states.
    pub(crate) fn initial(&self, initial: usize, knockout: Option<KnockoutSpec>, inf: &mut [u64], rec: &mut [u64]) {
        inf.fill(0);
        rec.fill(0);
        set_bit(inf, initial);
        if let Some(ko) = knockout {
            if ko.time == 0 {
                clear_bit(inf, ko.agent);
            }
        }
    }

    /// Advances `t -> t + 1`. `removed` is an agent that is removed at
    /// `t + 1` (its knockout step is at most `t + 1`).
    #[inline]
    pub(crate) fn step(
        &self,
        t: usize,
        inf: &[u64],
        rec: &[u64],
        removed: Option<usize>,
        next_inf: &mut [u64],
        next_rec: &mut [u64],
    ) {
        let words = self.words;
        next_inf.fill(0);
        let base = t * self.n;
        for (w, &word) in inf.iter().enumerate() {
            let mut bits = word;
            while bits != 0 {
                let i = w * 64 + bits.trailing_zeros() as usize;
                let row = &self.transmit[(base + i) * words..(base + i + 1) * words];
                for (o, r) in next_inf.iter_mut().zip(row) {
                    *o |= r;
                }
                bits &= bits - 1;
            }
        }
        let recover = &self.recover[t * words..(t + 1) * words];
        for w in 0..words {
            let susceptible = self.all[w] & !inf[w] & !rec[w];
            let fresh = next_inf[w] & susceptible;
            let stay = inf[w] & !recover[w];
            next_inf[w] = stay | fresh;
            next_rec[w] = match self.disease.model {
                Model::SIR => rec[w] | (inf[w] & recover[w]),
                Model::SIS => 0,
            };
        }
        if let Some(a) = removed {
            clear_bit(next_inf, a);
            clear_bit(next_rec, a);
        }
    }

    /// Runs the full horizon and keeps every step's state.
    pub fn run(&self, initial: usize, knockout: Option<KnockoutSpec>) -> Result<Trajectory, SimError> {
        if initial >= self.n {
            return Err(SimError::InvalidAgent { agent: initial, n: self.n });
        }
        if let Some(ko) = &knockout {
            self.check_knockout(ko)?;
        }
        let words = self.words;
        let mut infectious = vec![0u64; self.horizon * words];
        let mut recovered = vec![0u64; self.horizon * words];
        self.initial(initial, knockout, &mut infectious[..words], &mut recovered[..words]);
        for t in 0..self.horizon - 1 {
            let removed = knockout.filter(|ko| ko.time <= t + 1).map(|ko| ko.agent);
            let (cur_inf, next_inf) = infectious.split_at_mut((t + 1) * words);
            let (cur_rec, next_rec) = recovered.split_at_mut((t + 1) * words);
            self.step(
                t,
                &cur_inf[t * words..],
                &cur_rec[t * words..],
                removed,
                &mut next_inf[..words],
                &mut next_rec[..words],
            );
        }
        Ok(Trajectory { n: self.n, horizon: self.horizon, words, initial, knockout, infectious, recovered })
    }
}

/// Bit-packed run result.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    n: usize,
    horizon: usize,
    words: usize,
    initial: usize,
    knockout: Option<KnockoutSpec>,
    infectious: Vec<u64>,
    recovered: Vec<u64>,
}

impl Trajectory {
    pub fn initial(&self) -> usize {
        self.initial
    }

    pub fn infectious_at(&self, t: usize) -> &[u64] {
        &self.infectious[t * self.words..(t + 1) * self.words]
    }

    pub fn recovered_at(&self, t: usize) -> &[u64] {
        &self.recovered[t * self.words..(t + 1) * self.words]
    }

    pub fn is_infectious(&self, i: usize, t: usize) -> bool {
        bit(self.infectious_at(t), i)
    }

    pub fn infectious_count(&self, t: usize) -> u64 {
        popcount(self.infectious_at(t))
    }

    pub fn magnitude(&self) -> u64 {
        popcount(&self.infectious)
    }

    pub fn cumulative_cases(&self) -> u64 {
        let mut ever = vec![0u64; self.words];
        for t in 0..self.horizon {
            for (e, w) in ever.iter_mut().zip(self.infectious_at(t)) {
                *e |= w;
            }
        }
        popcount(&ever)
    }

    pub fn state(&self, i: usize, t: usize) -> State {
        if let Some(ko) = self.knockout {
            if i == ko.agent && t >= ko.time {
                return State::Removed;
            }
        }
        if bit(self.infectious_at(t), i) {
            State::I
        } else if bit(self.recovered_at(t), i) {
            State::R
        } else {
            State::S
        }
    }

    pub fn to_web(&self, sk: &Skeleton) -> TemporalWeb {
        let mut states = Vec::with_capacity(self.n * self.horizon);
        for i in 0..self.n {
            for t in 0..self.horizon {
                states.push(self.state(i, t));
            }
        }
        let removed = |i: usize, t: usize| self.knockout.is_some_and(|ko| ko.agent == i && t >= ko.time);
        let g = sk.graph();
        let mut contacts = Vec::new();
        for t in 0..self.horizon.saturating_sub(1) {
            for i in 0..self.n {
                if removed(i, t) {
                    continue;
                }
                for arc in g.arc_range(i) {
                    let j = g.arc_target(arc);
                    if !removed(j, t + 1) && sk.is_activated_by_arc(arc, t) {
                        contacts.push(Contact { src: i as u32, dst: j as u32, time: t as u32 });
                    }
                }
            }
        }
        TemporalWeb {
            n: self.n,
            horizon: self.horizon,
            initial_agent: self.initial,
            knockout: self.knockout,
            states,
            contacts,
        }
    }
}

/// Activated interaction `(src, time) -> (dst, time + 1)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Contact {
    pub src: u32,
    pub dst: u32,
    pub time: u32,
}

/// Agent-by-time state grid plus the activated interaction edges.
#[derive(Debug, Clone, PartialEq)]
pub struct TemporalWeb {
    pub n: usize,
    pub horizon: usize,
    pub initial_agent: usize,
    pub knockout: Option<KnockoutSpec>,
    /// Agent-major: `states[i * horizon + t]`.
    states: Vec<State>,
    pub contacts: Vec<Contact>,
}

impl TemporalWeb {
    pub fn state(&self, i: usize, t: usize) -> State {
        self.states[i * self.horizon + t]
    }

    pub fn row(&self, i: usize) -> &[State] {
        &self.states[i * self.horizon..(i + 1) * self.horizon]
    }

    pub fn row_string(&self, i: usize) -> String {
        self.row(i).iter().map(|s| s.as_char()).collect()
    }

    /// Number of infectious agent-times.
    pub fn magnitude(&self) -> u64 {
        self.states.iter().filter(|&&s| s == State::I).count() as u64
    }

    /// Number of distinct agents that are ever infectious.
    pub fn cumulative_cases(&self) -> u64 {
        (0..self.n).filter(|&i| self.row(i).contains(&State::I)).count() as u64
    }

    /// Infectious `(agent, time)` nodes, sorted by agent then time.
    pub fn infectious_nodes(&self) -> Vec<(usize, usize)> {
        (0..self.n)
            .flat_map(|i| {
                self.row(i).iter().enumerate().filter(|(_, &s)| s == State::I).map(move |(t, _)| (i, t))
            })
            .collect()
    }

    pub fn write_states_csv<W: Write>(&self, mut out: W) -> io::Result<()> {
        writeln!(out, "agent,time,state")?;
        for i in 0..self.n {
            for (t, s) in self.row(i).iter().enumerate() {
                writeln!(out, "{i},{t},{}", s.as_char())?;
            }
        }
        Ok(())
    }

    pub fn write_contacts_csv<W: Write>(&self, mut out: W) -> io::Result<()> {
        writeln!(out, "src,dst,time")?;
        for c in &self.contacts {
            writeln!(out, "{},{},{}", c.src, c.dst, c.time)?;
        }
        Ok(())
    }
}

/// Runs one epidemic and materialises its temporal web.
pub fn simulate(
    sk: &Skeleton,
    disease: DiseaseSpec,
    initial_agent: usize,
    knockout: Option<KnockoutSpec>,
) -> Result<TemporalWeb, SimError> {
    let dynamics = Dynamics::new(sk, disease)?;
    Ok(dynamics.run(initial_agent, knockout)?.to_web(sk))
}

/// Free-function forms of the web queries.
pub fn magnitude(web: &TemporalWeb) -> u64 {
    web.magnitude()
}

pub fn cumulative_cases(web: &TemporalWeb) -> u64 {
    web.cumulative_cases()
}

pub fn infectious_nodes(web: &TemporalWeb) -> Vec<(usize, usize)> {
    web.infectious_nodes()
}
