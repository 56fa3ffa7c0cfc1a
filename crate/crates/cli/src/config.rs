//! Flat `section.key = value` configuration.
//!
//! Values are JSON literals; bare words are read as strings, so
//! `train.optimizer = Adam` and `reconstruct.target = {"Node": 4}` both work.
//! Lines starting with `#` are comments.

use std::collections::BTreeMap;
use std::path::Path;

use anyhow::{anyhow, bail, Context, Result};
use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};

use segmotif::graph::GraphView;
use segmotif::model::TrainConfig;
use segmotif::motif::SignificanceConfig;
use segmotif::reconstruct::ReconstructConfig;
use segmotif::synth::SynthConfig;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PipelineSection {
    /// View rewired by `reconstruct`.
    pub view: GraphView,
    pub betas: Vec<f64>,
    /// Quantile of segregation scores below which a node is labelled low.
    pub quantile_split: f64,
}

impl Default for PipelineSection {
    fn default() -> Self {
        Self {
            view: GraphView::Spatial,
            betas: vec![0.3, 0.2, 0.1],
            quantile_split: 0.5,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub synth: SynthConfig,
    pub train: TrainConfig,
    pub reconstruct: ReconstructConfig,
    pub pipeline: PipelineSection,
    pub significance: SignificanceConfig,
}

impl RunConfig {
    /// Defaults overridden by `file` and then by `sets`, in that order.
    pub fn load(file: Option<&Path>, sets: &[String]) -> Result<Self> {
        let mut pairs = Vec::new();
        if let Some(path) = file {
            let text = std::fs::read_to_string(path)
                .with_context(|| format!("reading {}", path.display()))?;
            pairs.extend(parse_lines(&text).with_context(|| format!("in {}", path.display()))?);
        }
        for s in sets {
            pairs.push(parse_pair(s).with_context(|| format!("--set {s}"))?);
        }
        let cfg = Self::default().with_overrides(&pairs)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn with_overrides(&self, pairs: &[(String, String)]) -> Result<Self> {
        let mut root = serde_json::to_value(self)?;
        for (key, raw) in pairs {
            let (section, field) = key
                .split_once('.')
                .ok_or_else(|| anyhow!("key {key:?} needs a section prefix"))?;
            let slot = root
                .get_mut(section)
                .and_then(Value::as_object_mut)
                .ok_or_else(|| anyhow!("unknown section {section:?}"))?
                .get_mut(field)
                .ok_or_else(|| anyhow!("unknown key {key:?}"))?;
            *slot = parse_value(raw);
        }
        serde_json::from_value(root).map_err(|e| anyhow!("invalid configuration: {e}"))
    }

    pub fn validate(&self) -> Result<()> {
        self.synth.validate()?;
        self.train.validate()?;
        self.reconstruct.validate()?;
        let q = self.pipeline.quantile_split;
        if !(q > 0.0 && q < 1.0) {
            bail!("pipeline.quantile_split must lie in (0, 1), got {q}");
        }
        if self.pipeline.betas.iter().any(|&b| !(b > 0.0 && b < 1.0)) {
            bail!("pipeline.betas must lie in (0, 1)");
        }
        if self.significance.n_null == 0
            || !(self.significance.p_m > 0.0 && self.significance.p_m < 1.0)
        {
            bail!("significance.n_null must be positive and significance.p_m in (0, 1)");
        }
        Ok(())
    }

    /// Every key with its value, one `key = value` line each, sorted.
    pub fn render(&self) -> Result<String> {
        let root = serde_json::to_value(self)?;
        let mut flat = BTreeMap::new();
        for (section, body) in root.as_object().expect("struct") {
            for (field, v) in body.as_object().expect("struct") {
                flat.insert(format!("{section}.{field}"), render_value(v));
            }
        }
        Ok(flat
            .into_iter()
            .map(|(k, v)| format!("{k} = {v}\n"))
            .collect())
    }

    /// Sets both seeds.
    pub fn set_seed(&mut self, seed: u64) {
        self.synth.seed = seed;
        self.train.seed = seed;
    }
}

fn render_value(v: &Value) -> String {
    match v {
        Value::String(s) => s.clone(),
        other => other.to_string(),
    }
}

fn parse_value(raw: &str) -> Value {
    serde_json::from_str(raw).unwrap_or_else(|_| Value::String(raw.to_string()))
}

fn parse_pair(line: &str) -> Result<(String, String)> {
    let (k, v) = line
        .split_once('=')
        .ok_or_else(|| anyhow!("expected key = value"))?;
    let (k, v) = (k.trim(), v.trim());
    if k.is_empty() {
        bail!("empty key");
    }
    Ok((k.to_string(), v.to_string()))
}

fn parse_lines(text: &str) -> Result<Vec<(String, String)>> {
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        out.push(parse_pair(line).with_context(|| format!("line {}", i + 1))?);
    }
    Ok(out)
}

/// Config as a JSON object, for manifests.
pub fn snapshot(cfg: &RunConfig) -> Value {
    serde_json::to_value(cfg).unwrap_or(Value::Object(Map::new()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use segmotif::reconstruct::TargetPolicy;

    #[test]
    fn rendered_defaults_parse_back() {
        let cfg = RunConfig::default();
        let pairs = parse_lines(&cfg.render().unwrap()).unwrap();
        assert_eq!(cfg.with_overrides(&pairs).unwrap(), cfg);
    }

    #[test]
    fn overrides_are_typed() {
        let base = RunConfig::default();
        let pairs = [
            ("train.lr".to_string(), "0.01".to_string()),
            ("reconstruct.target".into(), r#"{"Node": 4}"#.into()),
        ];
        let cfg = base.with_overrides(&pairs).unwrap();
        assert_eq!(cfg.train.lr, 0.01);
        assert_eq!(cfg.reconstruct.target, TargetPolicy::Node(4));
        assert!(base
            .with_overrides(&[("train.lr".into(), "fast".into())])
            .is_err());
        assert!(base
            .with_overrides(&[("train.nope".into(), "1".into())])
            .is_err());
        assert!(base.with_overrides(&[("lr".into(), "1".into())]).is_err());
    }

    #[test]
    fn comments_and_blank_lines_are_skipped() {
        let pairs = parse_lines("# c\n\n train.max_epochs = 5 \n").unwrap();
        assert_eq!(
            pairs,
            vec![("train.max_epochs".to_string(), "5".to_string())]
        );
        assert!(parse_lines("nonsense").is_err());
    }
}
