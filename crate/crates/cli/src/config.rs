//! Experiment configuration, presets and layering.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};
use tkobench_core::analysis::{CorrelationMode, DEFAULT_BIN_WIDTH, DEFAULT_DUD_THRESHOLD};
use tkobench_core::centrality::{KATZ_ALPHA, KATZ_BETA};
use tkobench_core::epidemic::{Model, DEFAULT_RECOVERY_PROB};
use tkobench_core::graphgen::NetworkKind;

use crate::CliError;

const PAPER_PRESET: &str = include_str!("../presets/paper.json");
const DESK_PRESET: &str = include_str!("../presets/desk.json");

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum Preset {
    Paper,
    Desk,
}

impl Preset {
    fn source(self) -> &'static str {
        match self {
            Preset::Paper => PAPER_PRESET,
            Preset::Desk => DESK_PRESET,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SmallWorldConfig {
    pub k: usize,
    pub p_rewire: f64,
    pub max_retries: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScaleFreeConfig {
    pub m: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Config {
    pub models: Vec<Model>,
    pub kinds: Vec<NetworkKind>,
    pub betas: Vec<f64>,
    pub n: usize,
    pub horizon: usize,
    pub instantiations: usize,
    pub recovery_prob: f64,
    pub dud_threshold: u64,
    pub histogram_bin_width: u64,
    pub master_seed: u64,
    pub small_world: SmallWorldConfig,
    pub scale_free: ScaleFreeConfig,
    pub katz_alpha: f64,
    pub katz_beta: f64,
    pub workers: Option<usize>,
    pub output_dir: Option<PathBuf>,
    pub correlation_mode: CorrelationMode,
    pub include_kcore: bool,
    pub include_flattened: bool,
}

impl Default for Config {
    fn default() -> Self {
        Self {
            models: vec![Model::SIR, Model::SIS],
            kinds: vec![NetworkKind::ScaleFree, NetworkKind::SmallWorld],
            betas: vec![0.10, 0.15, 0.20],
            n: 200,
            horizon: 200,
            instantiations: 25,
            recovery_prob: DEFAULT_RECOVERY_PROB,
            dud_threshold: DEFAULT_DUD_THRESHOLD,
            histogram_bin_width: DEFAULT_BIN_WIDTH,
            master_seed: 20_240_601,
            small_world: SmallWorldConfig { k: 8, p_rewire: 0.025, max_retries: 1000 },
            scale_free: ScaleFreeConfig { m: 4 },
            katz_alpha: KATZ_ALPHA,
            katz_beta: KATZ_BETA,
            workers: None,
            output_dir: None,
            correlation_mode: CorrelationMode::PerInstantiation,
            include_kcore: false,
            include_flattened: true,
        }
    }
}

/// Fields that only affect scheduling or reporting; they may change
/// between runs on the same output directory.
const RUNTIME_FIELDS: [&str; 5] = ["workers", "output_dir", "correlation_mode", "include_kcore", "include_flattened"];

fn merge(base: &mut Map<String, Value>, overlay: Map<String, Value>) {
    for (key, value) in overlay {
        match (base.get_mut(&key), value) {
            (Some(Value::Object(b)), Value::Object(o)) => merge(b, o),
            (_, v) => {
                base.insert(key, v);
            }
        }
    }
}

fn as_object(source: &str, what: &str) -> Result<Map<String, Value>, CliError> {
    match serde_json::from_str::<Value>(source) {
        Ok(Value::Object(map)) => Ok(map),
        Ok(_) => Err(CliError::Config(format!("{what}: expected a JSON object"))),
        Err(e) => Err(CliError::Config(format!("{what}: {e}"))),
    }
}

impl Config {
    pub fn preset(preset: Preset) -> Self {
        Self::layered(Some(preset), None).expect("shipped presets are valid")
    }

    /// Defaults, then the preset, then the JSON document, each overriding
    /// the fields it names.
    pub fn layered(preset: Option<Preset>, document: Option<&str>) -> Result<Self, CliError> {
        let Value::Object(mut map) = serde_json::to_value(Config::default()).expect("serializable") else {
            unreachable!()
        };
        if let Some(p) = preset {
            merge(&mut map, as_object(p.source(), "preset")?);
        }
        if let Some(doc) = document {
            merge(&mut map, as_object(doc, "config")?);
        }
        let config: Config =
            serde_json::from_value(Value::Object(map)).map_err(|e| CliError::Config(e.to_string()))?;
        config.validate()?;
        Ok(config)
    }

    pub fn from_file(preset: Option<Preset>, path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
        Self::layered(preset, Some(&text))
    }

    pub fn validate(&self) -> Result<(), CliError> {
        let fail = |msg: String| Err(CliError::Config(msg));
        if self.models.is_empty() {
            return fail("models must be nonempty".into());
        }
        if self.kinds.is_empty() || self.kinds.contains(&NetworkKind::Explicit) {
            return fail("kinds must be a nonempty subset of {smallworld, scalefree}".into());
        }
        if self.betas.is_empty() {
            return fail("betas must be nonempty".into());
        }
        if let Some(b) = self.betas.iter().find(|b| !(**b > 0.0 && **b <= 1.0)) {
            return fail(format!("beta {b} outside (0, 1]"));
        }
        for (i, b) in self.betas.iter().enumerate() {
            if self.betas[..i].contains(b) {
                return fail(format!("duplicate beta {b}"));
            }
        }
        for (i, m) in self.models.iter().enumerate() {
            if self.models[..i].contains(m) {
                return fail(format!("duplicate model {m}"));
            }
        }
        for (i, k) in self.kinds.iter().enumerate() {
            if self.kinds[..i].contains(k) {
                return fail(format!("duplicate network kind {k}"));
            }
        }
        if self.instantiations < 1 {
            return fail("instantiations must be at least 1".into());
        }
        if self.n < 2 {
            return fail("n must be at least 2".into());
        }
        if self.horizon < 1 {
            return fail("horizon must be at least 1".into());
        }
        if !(self.recovery_prob > 0.0 && self.recovery_prob <= 1.0) {
            return fail(format!("recovery_prob {} outside (0, 1]", self.recovery_prob));
        }
        if self.workers == Some(0) {
            return fail("workers must be at least 1".into());
        }
        if self.histogram_bin_width == 0 {
            return fail("histogram_bin_width must be positive".into());
        }
        if !(self.katz_alpha > 0.0) || !(self.katz_beta > 0.0) {
            return fail("katz_alpha and katz_beta must be positive".into());
        }
        let sw = self.small_world;
        if self.kinds.contains(&NetworkKind::SmallWorld)
            && (sw.k < 2 || !sw.k.is_multiple_of(2) || sw.k >= self.n || !(0.0..=1.0).contains(&sw.p_rewire) || sw.max_retries == 0)
        {
            return fail(format!("invalid small_world parameters {sw:?} for n={}", self.n));
        }
        if self.kinds.contains(&NetworkKind::ScaleFree) && (self.scale_free.m < 1 || self.scale_free.m >= self.n) {
            return fail(format!("invalid scale_free.m {} for n={}", self.scale_free.m, self.n));
        }
        Ok(())
    }

    /// The configuration with runtime-only fields removed; two runs may
    /// share an output directory only if these agree.
    pub fn experiment_identity(&self) -> Value {
        let mut v = serde_json::to_value(self).expect("serializable");
        if let Value::Object(map) = &mut v {
            for f in RUNTIME_FIELDS {
                map.remove(f);
            }
        }
        v
    }
}
