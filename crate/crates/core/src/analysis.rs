//! Correlation, overlap and magnitude statistics, and the report tables
//! built from per-scenario results.

use std::collections::BTreeMap;
use std::fmt;
use std::io::{self, Write};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::centrality::Measure;
use crate::epidemic::Model;
use crate::graphgen::NetworkKind;
use crate::knockout::AgentTko;

pub const TOP_K: usize = 10;
pub const DEFAULT_DUD_THRESHOLD: u64 = 50;
pub const DEFAULT_BIN_WIDTH: u64 = 50;

#[derive(Debug, Error, PartialEq)]
pub enum AnalysisError {
    #[error("length mismatch: {0} vs {1}")]
    LengthMismatch(usize, usize),
    #[error("need at least {needed} observations, got {got}")]
    TooShort { needed: usize, got: usize },
    #[error("degenerate input: {0}")]
    DegenerateInput(&'static str),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum StatKind {
    Pearson,
    Spearman,
    Top10,
}

impl StatKind {
    pub fn as_str(self) -> &'static str {
        match self {
            StatKind::Pearson => "pearson",
            StatKind::Spearman => "spearman",
            StatKind::Top10 => "top10",
        }
    }
}

impl fmt::Display for StatKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

fn check_pair(xs: &[f64], ys: &[f64]) -> Result<(), AnalysisError> {
    if xs.len() != ys.len() {
        return Err(AnalysisError::LengthMismatch(xs.len(), ys.len()));
    }
    if xs.len() < 2 {
        return Err(AnalysisError::TooShort { needed: 2, got: xs.len() });
    }
    if xs.iter().chain(ys).any(|v| !v.is_finite()) {
        return Err(AnalysisError::DegenerateInput("non-finite value"));
    }
    Ok(())
}

/// Product-moment correlation, clamped to `[-1, 1]`.
pub fn pearson(xs: &[f64], ys: &[f64]) -> Result<f64, AnalysisError> {
    check_pair(xs, ys)?;
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (x, y) in xs.iter().zip(ys) {
        let (dx, dy) = (x - mx, y - my);
        sxy += dx * dy;
        sxx += dx * dx;
        syy += dy * dy;
    }
    if sxx == 0.0 || syy == 0.0 {
        return Err(AnalysisError::DegenerateInput("zero variance"));
    }
    Ok((sxy / (sxx.sqrt() * syy.sqrt())).clamp(-1.0, 1.0))
}

/// 1-based ranks with ties given the mean of the ranks they span.
pub fn average_ranks(xs: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..xs.len()).collect();
    order.sort_by(|&a, &b| xs[a].total_cmp(&xs[b]));
    let mut ranks = vec![0.0; xs.len()];
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && xs[order[j + 1]] == xs[order[i]] {
            j += 1;
        }
        let rank = (i + j) as f64 / 2.0 + 1.0;
        for &k in &order[i..=j] {
            ranks[k] = rank;
        }
        i = j + 1;
    }
    ranks
}

/// Pearson correlation of average-tie ranks.
pub fn spearman(xs: &[f64], ys: &[f64]) -> Result<f64, AnalysisError> {
    check_pair(xs, ys)?;
    pearson(&average_ranks(xs), &average_ranks(ys))
}

/// Indices of the `k` largest scores; ties go to the lower index.
pub fn top_k(xs: &[f64], k: usize) -> Vec<usize> {
    let mut order: Vec<usize> = (0..xs.len()).collect();
    order.sort_by(|&a, &b| xs[b].total_cmp(&xs[a]).then(a.cmp(&b)));
    order.truncate(k);
    order
}

/// `|topk(xs) ∩ topk(ys)| / k`.
pub fn top_k_overlap(xs: &[f64], ys: &[f64], k: usize) -> Result<f64, AnalysisError> {
    if xs.len() != ys.len() {
        return Err(AnalysisError::LengthMismatch(xs.len(), ys.len()));
    }
    if k == 0 || k > xs.len() {
        return Err(AnalysisError::TooShort { needed: k.max(1), got: xs.len() });
    }
    if xs.iter().chain(ys).any(|v| !v.is_finite()) {
        return Err(AnalysisError::DegenerateInput("non-finite value"));
    }
    let a = top_k(xs, k);
    let b = top_k(ys, k);
    let shared = a.iter().filter(|i| b.contains(i)).count();
    Ok(shared as f64 / k as f64)
}

pub fn statistic(kind: StatKind, xs: &[f64], ys: &[f64]) -> Result<f64, AnalysisError> {
    match kind {
        StatKind::Pearson => pearson(xs, ys),
        StatKind::Spearman => spearman(xs, ys),
        StatKind::Top10 => top_k_overlap(xs, ys, TOP_K),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct MagnitudeSummary {
    pub runs: usize,
    pub mean: f64,
    pub stdev: f64,
    pub dud_fraction: f64,
}

/// Sample mean, sample standard deviation (divisor `N - 1`) and the
/// fraction of runs strictly below `dud_threshold`.
pub fn magnitude_summary(magnitudes: &[u64], dud_threshold: u64) -> MagnitudeSummary {
    let runs = magnitudes.len();
    if runs == 0 {
        return MagnitudeSummary { runs, mean: f64::NAN, stdev: f64::NAN, dud_fraction: f64::NAN };
    }
    let n = runs as f64;
    let mean = magnitudes.iter().map(|&m| m as f64).sum::<f64>() / n;
    let stdev = if runs > 1 {
        (magnitudes.iter().map(|&m| (m as f64 - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
    } else {
        0.0
    };
    let duds = magnitudes.iter().filter(|&&m| m < dud_threshold).count();
    MagnitudeSummary { runs, mean, stdev, dud_fraction: duds as f64 / n }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct HistogramBin {
    pub lo: u64,
    pub hi: u64,
    pub count: u64,
}

/// Fixed-width bins `[lo, hi)` from zero through the largest magnitude.
pub fn histogram(magnitudes: &[u64], bin_width: u64) -> Vec<HistogramBin> {
    let width = bin_width.max(1);
    let Some(&max) = magnitudes.iter().max() else {
        return Vec::new();
    };
    let bins = (max / width + 1) as usize;
    let mut counts = vec![0u64; bins];
    for &m in magnitudes {
        counts[(m / width) as usize] += 1;
    }
    counts
        .into_iter()
        .enumerate()
        .map(|(b, count)| HistogramBin { lo: b as u64 * width, hi: (b as u64 + 1) * width, count })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CorrelationMode {
    /// Statistic within each instantiation, then averaged.
    #[default]
    PerInstantiation,
    /// All instantiations concatenated first.
    Pooled,
}

/// A table cell: the mean statistic over the instantiations where it was
/// defined, with the number left out.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CellStat {
    pub value: Option<f64>,
    pub used: usize,
    pub excluded: usize,
}

pub fn correlate_per_instantiation(pairs: &[(Vec<f64>, Vec<f64>)], kind: StatKind, mode: CorrelationMode) -> CellStat {
    match mode {
        CorrelationMode::PerInstantiation => {
            let mut sum = 0.0;
            let mut used = 0;
            for (xs, ys) in pairs {
                if let Ok(v) = statistic(kind, xs, ys) {
                    sum += v;
                    used += 1;
                }
            }
            let value = (used > 0).then(|| sum / used as f64);
            CellStat { value, used, excluded: pairs.len() - used }
        }
        CorrelationMode::Pooled => {
            let xs: Vec<f64> = pairs.iter().flat_map(|(x, _)| x.iter().copied()).collect();
            let ys: Vec<f64> = pairs.iter().flat_map(|(_, y)| y.iter().copied()).collect();
            match statistic(kind, &xs, &ys) {
                Ok(v) => CellStat { value: Some(v), used: 1, excluded: 0 },
                Err(_) => CellStat { value: None, used: 0, excluded: 1 },
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum TkoVariant {
    MaxProportional,
    MaxDeltaFraction,
    MeanProportional,
    MeanDeltaFraction,
}

impl TkoVariant {
    pub const ALL: [TkoVariant; 4] = [
        TkoVariant::MaxProportional,
        TkoVariant::MaxDeltaFraction,
        TkoVariant::MeanProportional,
        TkoVariant::MeanDeltaFraction,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            TkoVariant::MaxProportional => "max_prop",
            TkoVariant::MaxDeltaFraction => "max_delta",
            TkoVariant::MeanProportional => "mean_prop",
            TkoVariant::MeanDeltaFraction => "mean_delta",
        }
    }

    pub fn extract(self, agents: &[AgentTko]) -> Vec<f64> {
        agents
            .iter()
            .map(|a| match self {
                TkoVariant::MaxProportional => a.max_proportional,
                TkoVariant::MaxDeltaFraction => a.max_delta_fraction,
                TkoVariant::MeanProportional => a.mean_proportional,
                TkoVariant::MeanDeltaFraction => a.mean_delta_fraction,
            })
            .collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum GraphVariant {
    Base,
    Flattened,
}

impl GraphVariant {
    pub fn as_str(self) -> &'static str {
        match self {
            GraphVariant::Base => "base",
            GraphVariant::Flattened => "flat",
        }
    }
}

/// Formats an infection probability as a key: two decimals when exact.
pub fn format_beta(beta: f64) -> String {
    let short = format!("{beta:.2}");
    if short.parse::<f64>().ok() == Some(beta) {
        short
    } else {
        beta.to_string()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, PartialOrd, Serialize, Deserialize)]
pub struct ScenarioKey {
    pub model: Model,
    pub kind: NetworkKind,
    pub beta: f64,
}

impl ScenarioKey {
    pub fn key_fields(&self) -> Vec<String> {
        vec![self.model.to_string(), self.kind.to_string(), format_beta(self.beta)]
    }
}

/// Per-measure score vectors; a missing measure (closeness on a
/// disconnected graph) is absent from the map.
pub type CentralityScores = BTreeMap<Measure, Vec<f64>>;

#[derive(Debug, Clone, PartialEq, Default)]
pub struct InstantiationResult {
    /// Baseline magnitude per initial agent.
    pub magnitudes: Vec<u64>,
    pub cumulative_cases: Vec<u64>,
    pub agents: Option<Vec<AgentTko>>,
    pub base_centrality: Option<CentralityScores>,
    pub flat_centrality: Option<CentralityScores>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioResult {
    pub key: ScenarioKey,
    pub instantiations: Vec<InstantiationResult>,
}

impl ScenarioResult {
    pub fn all_magnitudes(&self) -> Vec<u64> {
        self.instantiations.iter().flat_map(|i| i.magnitudes.iter().copied()).collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReportRow {
    pub keys: Vec<String>,
    pub cells: Vec<CellStat>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReportTable {
    pub name: String,
    pub key_columns: Vec<String>,
    pub value_columns: Vec<String>,
    pub rows: Vec<ReportRow>,
}

impl ReportTable {
    fn new(name: &str, key_columns: &[&str], value_columns: Vec<String>) -> Self {
        Self {
            name: name.to_string(),
            key_columns: key_columns.iter().map(|s| s.to_string()).collect(),
            value_columns,
            rows: Vec::new(),
        }
    }

    /// Looks up a cell by its key fields and column name.
    pub fn cell(&self, keys: &[&str], column: &str) -> Option<CellStat> {
        let col = self.value_columns.iter().position(|c| c == column)?;
        self.rows.iter().find(|r| r.keys.iter().map(String::as_str).eq(keys.iter().copied())).map(|r| r.cells[col])
    }

    /// CSV with undefined cells written as `NA`.
    pub fn write_csv<W: Write>(&self, mut out: W) -> io::Result<()> {
        let header: Vec<&str> =
            self.key_columns.iter().chain(&self.value_columns).map(String::as_str).collect();
        writeln!(out, "{}", header.join(","))?;
        for row in &self.rows {
            let mut fields = row.keys.clone();
            fields.extend(row.cells.iter().map(|c| c.value.map_or_else(|| "NA".to_string(), |v| v.to_string())));
            writeln!(out, "{}", fields.join(","))?;
        }
        Ok(())
    }

    /// One line per cell that dropped instantiations.
    pub fn exclusions(&self) -> Vec<(Vec<String>, String, usize)> {
        let mut out = Vec::new();
        for row in &self.rows {
            for (col, cell) in self.value_columns.iter().zip(&row.cells) {
                if cell.excluded > 0 {
                    out.push((row.keys.clone(), col.clone(), cell.excluded));
                }
            }
        }
        out
    }
}

fn as_f64(values: &[u64]) -> Vec<f64> {
    values.iter().map(|&v| v as f64).collect()
}

/// Correlation of initial-agent magnitude with each aggregated TKO variant.
pub fn tko_vs_magnitude_table(results: &[ScenarioResult], mode: CorrelationMode) -> ReportTable {
    let columns = TkoVariant::ALL.iter().map(|v| v.as_str().to_string()).collect();
    let mut table = ReportTable::new("tko_vs_magnitude", &["disease", "network", "beta", "stat"], columns);
    for stat in [StatKind::Pearson, StatKind::Spearman] {
        for scenario in results {
            let insts: Vec<&InstantiationResult> =
                scenario.instantiations.iter().filter(|i| i.agents.is_some() && !i.magnitudes.is_empty()).collect();
            if insts.is_empty() {
                continue;
            }
            let cells = TkoVariant::ALL
                .iter()
                .map(|&variant| {
                    let pairs: Vec<(Vec<f64>, Vec<f64>)> = insts
                        .iter()
                        .map(|i| (as_f64(&i.magnitudes), variant.extract(i.agents.as_ref().unwrap())))
                        .collect();
                    correlate_per_instantiation(&pairs, stat, mode)
                })
                .collect();
            let mut keys = scenario.key.key_fields();
            keys.push(stat.to_string());
            table.rows.push(ReportRow { keys, cells });
        }
    }
    table
}

pub const REPORT_MEASURES: [Measure; 5] =
    [Measure::Degree, Measure::Closeness, Measure::Betweenness, Measure::Eigenvector, Measure::Katz];

/// Centrality-versus-TKO comparisons for every TKO variant, graph and
/// statistic. Columns are the five reported measures, plus k-core when
/// requested.
pub fn centrality_vs_tko_tables(
    results: &[ScenarioResult],
    mode: CorrelationMode,
    include_kcore: bool,
    include_flattened: bool,
) -> ReportTable {
    let mut measures = REPORT_MEASURES.to_vec();
    if include_kcore {
        measures.push(Measure::Kcore);
    }
    let columns = measures.iter().map(|m| m.as_str().to_string()).collect();
    let mut table = ReportTable::new(
        "centrality_vs_tko",
        &["disease", "network", "beta", "tko_variant", "graph", "stat"],
        columns,
    );
    let graphs: &[GraphVariant] =
        if include_flattened { &[GraphVariant::Base, GraphVariant::Flattened] } else { &[GraphVariant::Base] };
    for scenario in results {
        for variant in TkoVariant::ALL {
            for &graph in graphs {
                for stat in [StatKind::Pearson, StatKind::Spearman, StatKind::Top10] {
                    let insts: Vec<(&Vec<AgentTko>, &CentralityScores)> = scenario
                        .instantiations
                        .iter()
                        .filter_map(|i| {
                            let scores = match graph {
                                GraphVariant::Base => i.base_centrality.as_ref(),
                                GraphVariant::Flattened => i.flat_centrality.as_ref(),
                            };
                            Some((i.agents.as_ref()?, scores?))
                        })
                        .collect();
                    if insts.is_empty() {
                        continue;
                    }
                    let cells = measures
                        .iter()
                        .map(|m| {
                            let mut missing = 0;
                            let pairs: Vec<(Vec<f64>, Vec<f64>)> = insts
                                .iter()
                                .filter_map(|(agents, scores)| match scores.get(m) {
                                    Some(s) => Some((s.clone(), variant.extract(agents))),
                                    None => {
                                        missing += 1;
                                        None
                                    }
                                })
                                .collect();
                            let mut cell = correlate_per_instantiation(&pairs, stat, mode);
                            cell.excluded += missing;
                            cell
                        })
                        .collect();
                    let mut keys = scenario.key.key_fields();
                    keys.extend([variant.as_str().to_string(), graph.as_str().to_string(), stat.to_string()]);
                    table.rows.push(ReportRow { keys, cells });
                }
            }
        }
    }
    table
}

/// Pooled Pearson correlation of magnitude and cumulative cases across
/// every run of every scenario with the given model.
pub fn magnitude_cases_correlation(results: &[ScenarioResult], model: Model) -> Option<(f64, usize)> {
    let (mut mags, mut cases) = (Vec::new(), Vec::new());
    for scenario in results.iter().filter(|s| s.key.model == model) {
        for inst in &scenario.instantiations {
            mags.extend(inst.magnitudes.iter().map(|&m| m as f64));
            cases.extend(inst.cumulative_cases.iter().map(|&c| c as f64));
        }
    }
    pearson(&mags, &cases).ok().map(|r| (r, mags.len()))
}
