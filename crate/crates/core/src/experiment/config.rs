//! Experiment configuration: JSON files, named presets and validation.
//!
//! A config file is a JSON object. Every field is optional; an empty object
//! is a one-intersection smoke run. A top-level `"preset"` key names a
//! bundled preset that the rest of the file is deep-merged onto.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::ddpg::LearnerConfig;
use crate::error::{Error, Result};
use crate::experiment::baseline::BaselinePolicy;
use crate::influence::{InfluenceGraph, InfluenceMode};
use crate::reward::SocialWeights;
use crate::traffic::{ArrivalModel, GridTopology, RoadClass, RoadKind};

/// Environment variable that replaces `output_dir` for every run.
pub const OUTPUT_ROOT_ENV: &str = "TRAFFICLAB_OUTPUT_ROOT";

const PRESETS: &[(&str, &str)] = &[
    ("smoke", include_str!("../../presets/smoke.json")),
    ("single-desk", include_str!("../../presets/single-desk.json")),
    ("grid3x3-desk", include_str!("../../presets/grid3x3-desk.json")),
    ("grid3x3-large", include_str!("../../presets/grid3x3-large.json")),
];

pub fn preset_names() -> impl Iterator<Item = &'static str> {
    PRESETS.iter().map(|(n, _)| *n)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RoadParams {
    pub passing_rate: u32,
    pub arrival_bound: u32,
}

impl RoadParams {
    fn class(self, kind: RoadKind) -> RoadClass {
        RoadClass {
            kind,
            passing_rate: self.passing_rate,
            arrival_bound: self.arrival_bound,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TopologyConfig {
    pub rows: usize,
    pub cols: usize,
    pub main: RoadParams,
    pub branch: RoadParams,
    /// Class of each east–west road; empty means all main.
    pub row_kinds: Vec<RoadKind>,
    /// Class of each north–south road; empty means all branch.
    pub col_kinds: Vec<RoadKind>,
    pub arrivals: ArrivalModel,
    pub travel_delay: bool,
}

impl Default for TopologyConfig {
    fn default() -> Self {
        let (m, b) = (RoadClass::main(), RoadClass::branch());
        TopologyConfig {
            rows: 1,
            cols: 1,
            main: RoadParams {
                passing_rate: m.passing_rate,
                arrival_bound: m.arrival_bound,
            },
            branch: RoadParams {
                passing_rate: b.passing_rate,
                arrival_bound: b.arrival_bound,
            },
            row_kinds: Vec::new(),
            col_kinds: Vec::new(),
            arrivals: ArrivalModel::default(),
            travel_delay: false,
        }
    }
}

impl TopologyConfig {
    pub fn build(&self) -> Result<GridTopology> {
        let class = |k: RoadKind| match k {
            RoadKind::Main => self.main.class(k),
            RoadKind::Branch => self.branch.class(k),
        };
        let kinds = |given: &[RoadKind], n: usize, fallback: RoadKind| -> Vec<RoadClass> {
            if given.is_empty() {
                vec![class(fallback); n]
            } else {
                given.iter().map(|&k| class(k)).collect()
            }
        };
        let topo = GridTopology::with_classes(
            kinds(&self.row_kinds, self.rows, RoadKind::Main),
            kinds(&self.col_kinds, self.cols, RoadKind::Branch),
            self.arrivals,
        )?;
        Ok(topo.with_travel_delay(self.travel_delay))
    }
}

/// Explicit weight `w` that `agent` puts on `neighbor`'s congestion.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EdgeWeight {
    pub agent: usize,
    pub neighbor: usize,
    pub weight: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    /// Run directory name under the output root.
    pub name: String,
    pub topology: TopologyConfig,
    pub influence_mode: InfluenceMode,
    /// `[row, col]` focus for inward/outward graphs; required on even grids.
    pub influence_center: Option<[usize; 2]>,
    /// Total social weight an agent spreads uniformly over its neighbours.
    pub selfish_index: f64,
    /// Per-edge overrides applied after the uniform weights.
    pub edge_weights: Vec<EdgeWeight>,
    /// Queue lengths are divided by this in observations.
    pub queue_normalizer: f64,
    pub learner: LearnerConfig,
    pub episodes: usize,
    pub steps: usize,
    pub seed: u64,
    /// Greedy evaluation episodes after training, on a separate arrival stream.
    pub eval_episodes: usize,
    /// Save networks every this many episodes; 0 keeps only the final ones.
    pub checkpoint_every: usize,
    /// Hand-coded policies run alongside for comparison.
    pub baselines: Vec<BaselinePolicy>,
    pub output_dir: PathBuf,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            name: "run".into(),
            topology: TopologyConfig::default(),
            influence_mode: InfluenceMode::None,
            influence_center: None,
            selfish_index: 0.0,
            edge_weights: Vec::new(),
            queue_normalizer: 50.0,
            learner: LearnerConfig {
                hidden_layers: vec![16, 16],
                ..LearnerConfig::default()
            },
            episodes: 3,
            steps: 50,
            seed: 0,
            eval_episodes: 1,
            checkpoint_every: 0,
            baselines: Vec::new(),
            output_dir: PathBuf::from("runs"),
        }
    }
}

impl ExperimentConfig {
    pub fn preset(name: &str) -> Result<Self> {
        Self::from_value(preset_value(name)?)
    }

    pub fn from_json_str(text: &str) -> Result<Self> {
        let value: Value = serde_json::from_str(text).map_err(|e| Error::ConfigParse {
            line: e.line(),
            column: e.column(),
            message: e.to_string(),
        })?;
        Self::from_value(value)
    }

    /// Resolve a `"preset"` key, deserialize and validate.
    pub fn from_value(mut value: Value) -> Result<Self> {
        let Value::Object(map) = &mut value else {
            return Err(Error::InvalidConfig {
                key: "<root>".into(),
                reason: "config must be a JSON object".into(),
            });
        };
        if let Some(p) = map.remove("preset") {
            let Value::String(name) = p else {
                return Err(Error::InvalidConfig {
                    key: "preset".into(),
                    reason: "must be a string".into(),
                });
            };
            let mut base = preset_value(&name)?;
            merge(&mut base, value);
            value = base;
        }
        let cfg: ExperimentConfig = serde_json::from_value(value).map_err(|e| Error::ConfigParse {
            line: 0,
            column: 0,
            message: e.to_string(),
        })?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_value(&self) -> Value {
        serde_json::to_value(self).expect("config serializes")
    }

    /// Every key the loader accepts, after defaults and presets, with the
    /// road kinds spelled out.
    pub fn resolved(&self) -> Self {
        let mut out = self.clone();
        let t = &mut out.topology;
        if t.row_kinds.is_empty() {
            t.row_kinds = vec![RoadKind::Main; t.rows];
        }
        if t.col_kinds.is_empty() {
            t.col_kinds = vec![RoadKind::Branch; t.cols];
        }
        out
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |key: &str, reason: String| {
            Err(Error::InvalidConfig {
                key: key.into(),
                reason,
            })
        };
        if !(self.selfish_index >= 0.0 && self.selfish_index.is_finite()) {
            return bad("selfish_index", format!("must be a finite value >= 0, got {}", self.selfish_index));
        }
        if !(self.queue_normalizer > 0.0 && self.queue_normalizer.is_finite()) {
            return bad("queue_normalizer", format!("must be positive, got {}", self.queue_normalizer));
        }
        if self.episodes == 0 {
            return bad("episodes", "must be at least 1".into());
        }
        if self.steps == 0 {
            return bad("steps", "must be at least 1".into());
        }
        if self.name.is_empty() || self.name.contains(['/', '\\']) || self.name == "." || self.name == ".." {
            return bad("name", format!("must be a plain directory name, got {:?}", self.name));
        }
        let t = &self.topology;
        if t.rows == 0 || t.cols == 0 {
            return bad("topology", format!("grid must be at least 1x1, got {}x{}", t.rows, t.cols));
        }
        if !t.row_kinds.is_empty() && t.row_kinds.len() != t.rows {
            return bad("topology.row_kinds", format!("expected {} entries, got {}", t.rows, t.row_kinds.len()));
        }
        if !t.col_kinds.is_empty() && t.col_kinds.len() != t.cols {
            return bad("topology.col_kinds", format!("expected {} entries, got {}", t.cols, t.col_kinds.len()));
        }
        for (key, road) in [("topology.main", t.main), ("topology.branch", t.branch)] {
            if road.passing_rate == 0 {
                return bad(&format!("{key}.passing_rate"), "must be positive".into());
            }
        }
        if let ArrivalModel::Bernoulli { p1, p2 } = t.arrivals {
            for (key, p) in [("p1", p1), ("p2", p2)] {
                if !(0.0..=1.0).contains(&p) {
                    return bad(&format!("topology.arrivals.{key}"), format!("must lie in [0, 1], got {p}"));
                }
            }
        }
        if let Some([r, c]) = self.influence_center {
            if r >= t.rows || c >= t.cols {
                return bad("influence_center", format!("[{r}, {c}] is outside the {}x{} grid", t.rows, t.cols));
            }
        }
        for (i, e) in self.edge_weights.iter().enumerate() {
            if !(e.weight >= 0.0 && e.weight.is_finite()) {
                return bad(&format!("edge_weights[{i}].weight"), format!("must be >= 0, got {}", e.weight));
            }
        }
        for (i, b) in self.baselines.iter().enumerate() {
            if let Err(reason) = b.check() {
                return bad(&format!("baselines[{i}]"), reason);
            }
        }
        self.learner.validate()
    }

    pub fn topology(&self) -> Result<GridTopology> {
        self.topology.build()
    }

    pub fn influence_graph(&self, topology: &GridTopology) -> Result<InfluenceGraph> {
        InfluenceGraph::build(topology, self.influence_mode, self.influence_center.map(|[r, c]| (r, c)))
    }

    pub fn social_weights(&self, topology: &GridTopology) -> Result<SocialWeights> {
        let mut w = SocialWeights::uniform(topology, self.selfish_index)?;
        for e in &self.edge_weights {
            w.set(e.agent, e.neighbor, e.weight)?;
        }
        Ok(w)
    }

    /// `output_dir`, unless the output-root environment variable is set.
    pub fn output_root(&self) -> PathBuf {
        match std::env::var_os(OUTPUT_ROOT_ENV) {
            Some(root) if !root.is_empty() => PathBuf::from(root),
            _ => self.output_dir.clone(),
        }
    }

    pub fn run_dir(&self) -> PathBuf {
        self.output_root().join(&self.name)
    }

    pub fn write_resolved(&self, dir: &Path) -> Result<PathBuf> {
        let path = dir.join("config.resolved.json");
        let text = serde_json::to_string_pretty(&self.resolved())?;
        std::fs::write(&path, text + "\n").map_err(|e| Error::io(&path, e))?;
        Ok(path)
    }

    /// Copy with one dotted key (`learner.gamma`, `selfish_index`, ...)
    /// replaced by `raw`, parsed as JSON when possible and as a string
    /// otherwise.
    pub fn with_override(&self, key: &str, raw: &str) -> Result<Self> {
        let mut value = self.to_value();
        let mut slot = &mut value;
        for part in key.split('.') {
            slot = match slot {
                Value::Object(map) if map.contains_key(part) => map.get_mut(part).unwrap(),
                _ => {
                    return Err(Error::InvalidConfig {
                        key: key.into(),
                        reason: "no such config key".into(),
                    })
                }
            };
        }
        *slot = serde_json::from_str(raw).unwrap_or_else(|_| Value::String(raw.to_string()));
        let cfg: ExperimentConfig = serde_json::from_value(value).map_err(|e| Error::InvalidConfig {
            key: key.into(),
            reason: e.to_string(),
        })?;
        cfg.validate()?;
        Ok(cfg)
    }
}

pub fn load_config(path: &Path) -> Result<ExperimentConfig> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    ExperimentConfig::from_json_str(&text)
}

fn preset_value(name: &str) -> Result<Value> {
    let text = PRESETS
        .iter()
        .find(|(n, _)| *n == name)
        .map(|(_, t)| *t)
        .ok_or_else(|| Error::UnknownPreset(name.to_string()))?;
    Ok(serde_json::from_str(text).expect("bundled presets are valid JSON"))
}

/// Objects merge key by key; anything else in `over` replaces `base`.
fn merge(base: &mut Value, over: Value) {
    match (base, over) {
        (Value::Object(b), Value::Object(o)) => {
            for (k, v) in o {
                match b.get_mut(&k) {
                    Some(slot) => merge(slot, v),
                    None => {
                        b.insert(k, v);
                    }
                }
            }
        }
        (slot, v) => *slot = v,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_object_is_smoke_config() {
        let cfg = ExperimentConfig::from_json_str("{}").unwrap();
        assert_eq!(cfg, ExperimentConfig::default());
        assert_eq!(cfg.topology().unwrap().len(), 1);
    }

    #[test]
    fn presets_load_and_validate() {
        for name in preset_names() {
            ExperimentConfig::preset(name).unwrap();
        }
        let large = ExperimentConfig::preset("grid3x3-large").unwrap();
        assert_eq!(large.learner.hidden_layers, vec![400, 400, 600, 200]);
        assert_eq!(large.topology().unwrap().len(), 9);
    }

    #[test]
    fn preset_overrides_merge_deeply() {
        let cfg = ExperimentConfig::from_json_str(
            r#"{"preset": "grid3x3-desk", "learner": {"gamma": 0.5}, "topology": {"rows": 2}}"#,
        )
        .unwrap();
        assert_eq!(cfg.learner.gamma, 0.5);
        assert_eq!(cfg.learner.hidden_layers, vec![64, 64, 32]);
        assert_eq!((cfg.topology.rows, cfg.topology.cols), (2, 3));
        assert!(matches!(
            ExperimentConfig::from_json_str(r#"{"preset": "nope"}"#),
            Err(Error::UnknownPreset(_))
        ));
    }

    #[test]
    fn negative_selfish_index_names_key() {
        let err = ExperimentConfig::from_json_str(r#"{"selfish_index": -1}"#).unwrap_err();
        match err {
            Error::InvalidConfig { key, .. } => assert_eq!(key, "selfish_index"),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn syntax_error_has_position() {
        let err = ExperimentConfig::from_json_str("{\n  \"seed\": ,\n}").unwrap_err();
        match err {
            Error::ConfigParse { line, column, .. } => assert_eq!((line, column), (2, 11)),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn unknown_keys_rejected() {
        assert!(ExperimentConfig::from_json_str(r#"{"sefish_index": 1}"#).is_err());
        assert!(ExperimentConfig::from_json_str(r#"{"learner": {"gama": 1}}"#).is_err());
    }

    #[test]
    fn dotted_override() {
        let cfg = ExperimentConfig::default();
        let c = cfg.with_override("selfish_index", "0.5").unwrap();
        assert_eq!(c.selfish_index, 0.5);
        let c = cfg.with_override("learner.gamma", "0.9").unwrap();
        assert_eq!(c.learner.gamma, 0.9);
        let c = cfg.with_override("influence_mode", "outward").unwrap();
        assert_eq!(c.influence_mode, InfluenceMode::Outward);
        assert!(cfg.with_override("learner.nope", "1").is_err());
        assert!(cfg.with_override("selfish_index", "-2").is_err());
    }
}
