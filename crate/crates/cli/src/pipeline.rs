//! Stage orchestration: generation, baselines, knockout fields,
//! centrality and reports, with resume through the manifest.

use std::collections::HashSet;
use std::fmt;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicU64, AtomicUsize, Ordering};
use std::sync::Mutex;

use log::{debug, info};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use tkobench_core::analysis::{
    centrality_vs_tko_tables, format_beta, histogram, magnitude_cases_correlation, magnitude_summary,
    tko_vs_magnitude_table, CentralityScores, InstantiationResult, ReportTable, ScenarioKey, ScenarioResult,
};
use tkobench_core::centrality::{compute_all, CentralitySet, Measure};
use tkobench_core::epidemic::{DiseaseSpec, Dynamics, Model};
use tkobench_core::graphgen::{generate_scale_free, generate_small_world, BaseNetwork, NetworkKind};
use tkobench_core::knockout::{aggregate_agents, tko_field, write_agent_csv, AgentTko, TkoField};
use tkobench_core::skeleton::{build_skeleton, flatten_skeleton, hash_words, Skeleton, SkeletonRecord};

use crate::config::Config;
use crate::manifest::{sha256_hex, write_artifact, Manifest};
use crate::CliError;

const SEED_NET: u64 = 0x006e_6574_776f_726b;
const SEED_SKEL: u64 = 0x736b_656c_6574_6f6e;

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum Stage {
    Gen,
    Simulate,
    Tko,
    Centrality,
    Analyze,
    All,
}

/// One base network and its skeleton, shared by every disease model.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Cell {
    pub kind: NetworkKind,
    pub beta: f64,
    pub instantiation: usize,
}

impl fmt::Display for Cell {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}-b{}-i{:03}", self.kind, format_beta(self.beta), self.instantiation)
    }
}

fn kind_code(kind: NetworkKind) -> u64 {
    match kind {
        NetworkKind::SmallWorld => 1,
        NetworkKind::ScaleFree => 2,
        NetworkKind::Explicit => 3,
    }
}

pub fn network_seed(master: u64, cell: &Cell) -> u64 {
    hash_words(master, &[SEED_NET, kind_code(cell.kind), cell.beta.to_bits(), cell.instantiation as u64])
}

pub fn skeleton_seed(master: u64, cell: &Cell) -> u64 {
    hash_words(master, &[SEED_SKEL, kind_code(cell.kind), cell.beta.to_bits(), cell.instantiation as u64])
}

pub fn cells(config: &Config) -> Vec<Cell> {
    let mut out = Vec::new();
    for &kind in &config.kinds {
        for &beta in &config.betas {
            for instantiation in 0..config.instantiations {
                out.push(Cell { kind, beta, instantiation });
            }
        }
    }
    out
}

/// Every `(cell, network seed, skeleton seed)`; fails if any seed repeats.
pub fn seed_grid(config: &Config) -> Result<Vec<(Cell, u64, u64)>, CliError> {
    let mut seen = HashSet::new();
    let mut grid = Vec::new();
    for cell in cells(config) {
        let (net, skel) = (network_seed(config.master_seed, &cell), skeleton_seed(config.master_seed, &cell));
        if !seen.insert(net) || !seen.insert(skel) {
            return Err(CliError::Other(format!("seed collision at {cell}")));
        }
        grid.push((cell, net, skel));
    }
    Ok(grid)
}

pub fn scenarios(config: &Config) -> Vec<ScenarioKey> {
    let mut out = Vec::new();
    for &model in &config.models {
        for &kind in &config.kinds {
            for &beta in &config.betas {
                out.push(ScenarioKey { model, kind, beta });
            }
        }
    }
    out
}

fn network_path(cell: &Cell) -> String {
    format!("networks/{cell}.edges")
}
fn skeleton_path(cell: &Cell) -> String {
    format!("skeletons/{cell}.json")
}
fn baseline_path(model: Model, cell: &Cell) -> String {
    format!("baselines/{model}-{cell}.csv")
}
fn tko_path(model: Model, cell: &Cell) -> String {
    format!("tko/{model}-{cell}.tko")
}
fn agents_path(model: Model, cell: &Cell) -> String {
    format!("tko/{model}-{cell}.agents.csv")
}
fn centrality_path(cell: &Cell, graph: &str) -> String {
    format!("centrality/{cell}-{graph}.csv")
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct RunStats {
    pub units_executed: usize,
    pub units_skipped: usize,
    /// Epidemic runs performed, baselines and knockouts alike.
    pub simulations: u64,
}

#[derive(Debug, Serialize, Deserialize)]
struct BaselineRow {
    agent: usize,
    magnitude: u64,
    cumulative_cases: u64,
}

#[derive(Debug, Serialize, Deserialize)]
struct CentralityRow {
    agent: usize,
    degree: f64,
    closeness: Option<f64>,
    betweenness: f64,
    eigenvector: f64,
    katz: f64,
    kcore: f64,
}

type Artifacts = Vec<(String, String)>;

struct Runner<'a> {
    config: &'a Config,
    root: &'a Path,
    manifest: Mutex<Manifest>,
    executed: AtomicUsize,
    skipped: AtomicUsize,
    simulations: AtomicU64,
}

impl<'a> Runner<'a> {
    /// Runs `work` unless `unit` is already complete, in which case its
    /// artifacts are re-verified instead.
    fn execute(&self, unit: &str, work: impl FnOnce() -> Result<(Artifacts, u64), CliError>) -> Result<(), CliError> {
        if self.manifest.lock().unwrap().is_complete(unit) {
            self.manifest.lock().unwrap().verify_unit(self.root, unit)?;
            self.skipped.fetch_add(1, Ordering::Relaxed);
            debug!("skip {unit}");
            return Ok(());
        }
        let (artifacts, sims) = work()?;
        let mut manifest = self.manifest.lock().unwrap();
        manifest.complete(unit, artifacts, None);
        manifest.save(self.root)?;
        self.executed.fetch_add(1, Ordering::Relaxed);
        self.simulations.fetch_add(sims, Ordering::Relaxed);
        debug!("done {unit}");
        Ok(())
    }

    fn load(&self, rel: &str) -> Result<Vec<u8>, CliError> {
        let expected = self.manifest.lock().unwrap().artifacts.get(rel).cloned();
        let expected =
            expected.ok_or_else(|| CliError::ArtifactCorrupt(format!("{rel} is not recorded in the manifest")))?;
        let bytes =
            std::fs::read(self.root.join(rel)).map_err(|e| CliError::ArtifactCorrupt(format!("{rel}: {e}")))?;
        if sha256_hex(&bytes) != expected {
            return Err(CliError::ArtifactCorrupt(format!("{rel}: digest mismatch")));
        }
        Ok(bytes)
    }

    fn has(&self, unit: &str) -> bool {
        self.manifest.lock().unwrap().is_complete(unit)
    }

    fn disease(&self, model: Model, beta: f64) -> DiseaseSpec {
        DiseaseSpec { model, beta, recovery_prob: self.config.recovery_prob }
    }

    fn load_network(&self, cell: &Cell) -> Result<BaseNetwork, CliError> {
        let bytes = self.load(&network_path(cell))?;
        BaseNetwork::read_edge_list(&bytes[..])
            .map_err(|e| CliError::ArtifactCorrupt(format!("{}: {e}", network_path(cell))))
    }

    fn load_skeleton(&self, cell: &Cell) -> Result<Skeleton, CliError> {
        let net = self.load_network(cell)?;
        let bytes = self.load(&skeleton_path(cell))?;
        let record: SkeletonRecord = serde_json::from_slice(&bytes)
            .map_err(|e| CliError::ArtifactCorrupt(format!("{}: {e}", skeleton_path(cell))))?;
        let sk = build_skeleton(net, record.horizon, record.master_seed);
        if sk.record() != record {
            return Err(CliError::ArtifactCorrupt(format!("{}: unsupported draw scheme", skeleton_path(cell))));
        }
        Ok(sk)
    }

    fn gen(&self) -> Result<(), CliError> {
        let grid = seed_grid(self.config)?;
        info!("gen: {} networks", grid.len());
        grid.par_iter().try_for_each(|(cell, net_seed, skel_seed)| {
            self.execute(&format!("gen/{cell}"), || {
                let c = self.config;
                let net = match cell.kind {
                    NetworkKind::SmallWorld => generate_small_world(
                        c.n,
                        c.small_world.k,
                        c.small_world.p_rewire,
                        *net_seed,
                        c.small_world.max_retries,
                    )?,
                    NetworkKind::ScaleFree => generate_scale_free(c.n, c.scale_free.m, *net_seed)?,
                    NetworkKind::Explicit => unreachable!("rejected by config validation"),
                };
                let mut edges = Vec::new();
                net.write_edge_list(&mut edges)?;
                let record = build_skeleton(net, c.horizon, *skel_seed).record();
                let json = serde_json::to_vec_pretty(&record).expect("serializable");
                Ok((
                    vec![
                        write_artifact(self.root, &network_path(cell), &edges)?,
                        write_artifact(self.root, &skeleton_path(cell), &json)?,
                    ],
                    0,
                ))
            })
        })
    }

    fn model_cells(&self) -> Vec<(Model, Cell)> {
        let cells = cells(self.config);
        self.config.models.iter().flat_map(|&m| cells.iter().map(move |&c| (m, c))).collect()
    }

    fn simulate(&self) -> Result<(), CliError> {
        let units = self.model_cells();
        info!("simulate: {} baseline sets", units.len());
        units.par_iter().try_for_each(|&(model, cell)| {
            self.execute(&format!("simulate/{model}/{cell}"), || {
                let sk = self.load_skeleton(&cell)?;
                let dynamics = Dynamics::new(&sk, self.disease(model, cell.beta))?;
                let rows = (0..sk.node_count())
                    .into_par_iter()
                    .map(|agent| {
                        let traj = dynamics.run(agent, None)?;
                        Ok(BaselineRow { agent, magnitude: traj.magnitude(), cumulative_cases: traj.cumulative_cases() })
                    })
                    .collect::<Result<Vec<_>, CliError>>()?;
                let mut w = csv::Writer::from_writer(Vec::new());
                for row in &rows {
                    w.serialize(row)?;
                }
                let bytes = w.into_inner().map_err(|e| CliError::Other(e.to_string()))?;
                Ok((vec![write_artifact(self.root, &baseline_path(model, &cell), &bytes)?], rows.len() as u64))
            })
        })
    }

    fn tko(&self) -> Result<(), CliError> {
        let units = self.model_cells();
        info!("tko: {} fields", units.len());
        units.par_iter().try_for_each(|&(model, cell)| {
            self.execute(&format!("tko/{model}/{cell}"), || {
                let sk = self.load_skeleton(&cell)?;
                let field = tko_field(&sk, self.disease(model, cell.beta))?;
                let mut grid = Vec::new();
                field.write_binary(&mut grid)?;
                let mut agents = Vec::new();
                write_agent_csv(&aggregate_agents(&field), &mut agents)?;
                let sims = field.n as u64 + field.resimulations;
                Ok((
                    vec![
                        write_artifact(self.root, &tko_path(model, &cell), &grid)?,
                        write_artifact(self.root, &agents_path(model, &cell), &agents)?,
                    ],
                    sims,
                ))
            })
        })
    }

    fn centrality(&self) -> Result<(), CliError> {
        let cells = cells(self.config);
        info!("centrality: {} networks", cells.len());
        cells.par_iter().try_for_each(|cell| {
            self.execute(&format!("centrality/{cell}"), || {
                let sk = self.load_skeleton(cell)?;
                let (alpha, beta) = (self.config.katz_alpha, self.config.katz_beta);
                let base = compute_all(sk.graph(), alpha, beta)?;
                let flat = compute_all(&flatten_skeleton(&sk).to_graph(), alpha, beta)?;
                Ok((
                    vec![
                        write_artifact(self.root, &centrality_path(cell, "base"), &centrality_csv(&base)?)?,
                        write_artifact(self.root, &centrality_path(cell, "flat"), &centrality_csv(&flat)?)?,
                    ],
                    0,
                ))
            })
        })
    }

    fn read_csv<T: for<'de> Deserialize<'de>>(&self, rel: &str) -> Result<Vec<T>, CliError> {
        let bytes = self.load(rel)?;
        csv::Reader::from_reader(&bytes[..])
            .deserialize()
            .collect::<Result<Vec<T>, _>>()
            .map_err(|e| CliError::ArtifactCorrupt(format!("{rel}: {e}")))
    }

    fn read_centrality(&self, rel: &str) -> Result<CentralityScores, CliError> {
        let rows: Vec<CentralityRow> = self.read_csv(rel)?;
        let mut scores = CentralityScores::new();
        let column = |f: &dyn Fn(&CentralityRow) -> f64| rows.iter().map(f).collect::<Vec<f64>>();
        scores.insert(Measure::Degree, column(&|r| r.degree));
        if rows.iter().all(|r| r.closeness.is_some()) {
            scores.insert(Measure::Closeness, column(&|r| r.closeness.unwrap()));
        }
        scores.insert(Measure::Betweenness, column(&|r| r.betweenness));
        scores.insert(Measure::Eigenvector, column(&|r| r.eigenvector));
        scores.insert(Measure::Katz, column(&|r| r.katz));
        scores.insert(Measure::Kcore, column(&|r| r.kcore));
        Ok(scores)
    }

    /// Gathers every completed artifact into per-scenario results, with
    /// the list of inputs used.
    fn collect_results(&self) -> Result<(Vec<ScenarioResult>, Vec<String>), CliError> {
        let mut used = Vec::new();
        let mut results = Vec::new();
        for key in scenarios(self.config) {
            let mut instantiations = Vec::new();
            for instantiation in 0..self.config.instantiations {
                let cell = Cell { kind: key.kind, beta: key.beta, instantiation };
                let mut inst = InstantiationResult::default();
                if self.has(&format!("simulate/{}/{cell}", key.model)) {
                    let rel = baseline_path(key.model, &cell);
                    let rows: Vec<BaselineRow> = self.read_csv(&rel)?;
                    inst.magnitudes = rows.iter().map(|r| r.magnitude).collect();
                    inst.cumulative_cases = rows.iter().map(|r| r.cumulative_cases).collect();
                    used.push(rel);
                }
                if self.has(&format!("tko/{}/{cell}", key.model)) {
                    let rel = agents_path(key.model, &cell);
                    let agents: Vec<AgentTko> = self.read_csv(&rel)?;
                    inst.agents = Some(agents);
                    used.push(rel);
                }
                if self.has(&format!("centrality/{cell}")) {
                    let (base, flat) = (centrality_path(&cell, "base"), centrality_path(&cell, "flat"));
                    inst.base_centrality = Some(self.read_centrality(&base)?);
                    inst.flat_centrality = Some(self.read_centrality(&flat)?);
                    used.extend([base, flat]);
                }
                instantiations.push(inst);
            }
            results.push(ScenarioResult { key, instantiations });
        }
        Ok((results, used))
    }

    fn analyze(&self) -> Result<(), CliError> {
        let (results, used) = self.collect_results()?;
        let mut fingerprint = serde_json::to_string(&(
            self.config.correlation_mode,
            self.config.include_kcore,
            self.config.include_flattened,
        ))
        .expect("serializable");
        let mut time_series_inputs = Vec::new();
        for key in scenarios(self.config) {
            let cell = Cell { kind: key.kind, beta: key.beta, instantiation: 0 };
            if self.has(&format!("tko/{}/{cell}", key.model)) {
                time_series_inputs.push((key, tko_path(key.model, &cell)));
            }
        }
        {
            let manifest = self.manifest.lock().unwrap();
            for rel in used.iter().chain(time_series_inputs.iter().map(|(_, r)| r)) {
                fingerprint.push_str(rel);
                fingerprint.push_str(&manifest.artifacts[rel]);
            }
        }
        let fingerprint = sha256_hex(fingerprint.as_bytes());
        let previous = self.manifest.lock().unwrap().units.get("analyze").cloned();
        if let Some(record) = previous {
            if record.inputs.as_deref() == Some(fingerprint.as_str()) {
                self.manifest.lock().unwrap().verify_unit(self.root, "analyze")?;
                self.skipped.fetch_add(1, Ordering::Relaxed);
                return Ok(());
            }
        }
        if used.is_empty() {
            return Err(CliError::Other("nothing to analyze: run the simulate or tko stage first".into()));
        }
        info!("analyze: {} inputs", used.len());
        let mut artifacts = Vec::new();
        let mut report = |name: &str, bytes: Vec<u8>| -> Result<(), CliError> {
            artifacts.push(write_artifact(self.root, &format!("reports/{name}"), &bytes)?);
            Ok(())
        };
        report("scenario_summary.csv", self.scenario_summary(&results)?)?;
        report("magnitude_histogram.csv", self.histograms(&results)?)?;
        report("magnitude_vs_cases.csv", self.magnitude_vs_cases(&results)?)?;
        let mut exclusions = Vec::new();
        let have_tko = results.iter().any(|s| s.instantiations.iter().any(|i| i.agents.is_some()));
        if have_tko {
            let mode = self.config.correlation_mode;
            let t2 = tko_vs_magnitude_table(&results, mode);
            let t3 = centrality_vs_tko_tables(&results, mode, self.config.include_kcore, self.config.include_flattened);
            for table in [t2, t3] {
                let mut bytes = Vec::new();
                table.write_csv(&mut bytes)?;
                report(&format!("{}.csv", table.name), bytes)?;
                exclusions.push(table);
            }
            let mut series = Vec::new();
            writeln!(series, "disease,network,beta,instantiation,agent,time,mean_proportional,mean_delta_fraction")?;
            for (key, rel) in &time_series_inputs {
                let (n, horizon, scores) = TkoField::read_binary(&self.load(rel)?[..])
                    .map_err(|e| CliError::ArtifactCorrupt(format!("{rel}: {e}")))?;
                let k = key.key_fields().join(",");
                for agent in 0..n {
                    for time in 0..horizon {
                        let m = scores[agent * horizon + time];
                        writeln!(series, "{k},0,{agent},{time},{},{}", m.proportional, m.delta_fraction)?;
                    }
                }
            }
            report("tko_time_series.csv", series)?;
        }
        report("exclusions.csv", exclusions_csv(&exclusions)?)?;
        let mut manifest = self.manifest.lock().unwrap();
        manifest.complete("analyze", artifacts, Some(fingerprint));
        manifest.save(self.root)?;
        self.executed.fetch_add(1, Ordering::Relaxed);
        Ok(())
    }

    fn scenario_summary(&self, results: &[ScenarioResult]) -> Result<Vec<u8>, CliError> {
        let mut out = Vec::new();
        writeln!(out, "disease,network,beta,mean_magnitude,stdev_magnitude,dud_fraction")?;
        for s in results {
            let mags = s.all_magnitudes();
            if mags.is_empty() {
                continue;
            }
            let m = magnitude_summary(&mags, self.config.dud_threshold);
            writeln!(out, "{},{},{},{}", s.key.key_fields().join(","), m.mean, m.stdev, m.dud_fraction)?;
        }
        Ok(out)
    }

    fn histograms(&self, results: &[ScenarioResult]) -> Result<Vec<u8>, CliError> {
        let mut out = Vec::new();
        writeln!(out, "disease,network,beta,bin_lo,bin_hi,count")?;
        for s in results {
            for bin in histogram(&s.all_magnitudes(), self.config.histogram_bin_width) {
                writeln!(out, "{},{},{},{}", s.key.key_fields().join(","), bin.lo, bin.hi, bin.count)?;
            }
        }
        Ok(out)
    }

    fn magnitude_vs_cases(&self, results: &[ScenarioResult]) -> Result<Vec<u8>, CliError> {
        let mut out = Vec::new();
        writeln!(out, "disease,pearson,runs")?;
        for &model in &self.config.models {
            if let Some((r, runs)) = magnitude_cases_correlation(results, model) {
                writeln!(out, "{model},{r},{runs}")?;
            }
        }
        Ok(out)
    }
}

fn centrality_csv(set: &CentralitySet) -> Result<Vec<u8>, CliError> {
    let mut w = csv::Writer::from_writer(Vec::new());
    for agent in 0..set.degree.scores.len() {
        w.serialize(CentralityRow {
            agent,
            degree: set.degree.scores[agent],
            closeness: set.closeness.as_ref().map(|c| c.scores[agent]),
            betweenness: set.betweenness.scores[agent],
            eigenvector: set.eigenvector.scores[agent],
            katz: set.katz.scores[agent],
            kcore: set.kcore.scores[agent],
        })?;
    }
    w.into_inner().map_err(|e| CliError::Other(e.to_string()))
}

fn exclusions_csv(tables: &[ReportTable]) -> Result<Vec<u8>, CliError> {
    let mut out = Vec::new();
    writeln!(out, "table,row,column,excluded")?;
    for table in tables {
        for (keys, column, excluded) in table.exclusions() {
            writeln!(out, "{},{},{column},{excluded}", table.name, keys.join("/"))?;
        }
    }
    Ok(out)
}

/// Resolves the output directory from the explicit argument or config.
pub fn output_root(config: &Config, out: Option<PathBuf>) -> Result<PathBuf, CliError> {
    out.or_else(|| config.output_dir.clone())
        .ok_or_else(|| CliError::Config("no output directory: pass --out or set output_dir".into()))
}

/// Runs `stage` (and the generation it depends on) into `root`.
pub fn run(config: &Config, root: &Path, stage: Stage) -> Result<RunStats, CliError> {
    config.validate()?;
    std::fs::create_dir_all(root)?;
    let manifest = Manifest::open(root, config.experiment_identity())?;
    let runner = Runner {
        config,
        root,
        manifest: Mutex::new(manifest),
        executed: AtomicUsize::new(0),
        skipped: AtomicUsize::new(0),
        simulations: AtomicU64::new(0),
    };
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Some(w) = config.workers {
        builder = builder.num_threads(w);
    }
    let pool = builder.build().map_err(|e| CliError::Other(e.to_string()))?;
    pool.install(|| -> Result<(), CliError> {
        match stage {
            Stage::Gen => runner.gen(),
            Stage::Simulate => {
                runner.gen()?;
                runner.simulate()
            }
            Stage::Tko => {
                runner.gen()?;
                runner.tko()
            }
            Stage::Centrality => {
                runner.gen()?;
                runner.centrality()
            }
            Stage::Analyze => runner.analyze(),
            Stage::All => {
                runner.gen()?;
                runner.simulate()?;
                runner.tko()?;
                runner.centrality()?;
                runner.analyze()
            }
        }
    })?;
    let manifest = runner.manifest.into_inner().unwrap();
    manifest.save(root)?;
    Ok(RunStats {
        units_executed: runner.executed.into_inner(),
        units_skipped: runner.skipped.into_inner(),
        simulations: runner.simulations.into_inner(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn full_grid_has_unique_seeds() {
        let grid = seed_grid(&Config::default()).unwrap();
        assert_eq!(grid.len(), 150);
        assert_eq!(scenarios(&Config::default()).len(), 12);
    }

    #[test]
    fn cell_names_are_stable() {
        let cell = Cell { kind: NetworkKind::ScaleFree, beta: 0.1, instantiation: 7 };
        assert_eq!(cell.to_string(), "scalefree-b0.10-i007");
        assert_eq!(baseline_path(Model::SIS, &cell), "baselines/SIS-scalefree-b0.10-i007.csv");
    }

    #[test]
    fn seeds_depend_on_every_coordinate() {
        let a = Cell { kind: NetworkKind::ScaleFree, beta: 0.1, instantiation: 0 };
        let b = Cell { instantiation: 1, ..a };
        let c = Cell { beta: 0.15, ..a };
        let d = Cell { kind: NetworkKind::SmallWorld, ..a };
        let seeds: HashSet<u64> = [a, b, c, d].iter().map(|x| network_seed(1, x)).collect();
        assert_eq!(seeds.len(), 4);
        assert_ne!(network_seed(1, &a), network_seed(2, &a));
        assert_ne!(network_seed(1, &a), skeleton_seed(1, &a));
    }
}
