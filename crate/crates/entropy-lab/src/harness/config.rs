//! Flat `[section]` / `key = value` run configuration.
//!
//! Unknown sections or keys are rejected so typos fail loudly. Every value
//! is a plain string until a typed getter parses it; getters fall back to
//! the built-in default when the key is absent.

use std::collections::BTreeMap;
use std::path::Path;

use crate::datagen::{CorruptionKind, SplitSizes, SynthSpec};
use crate::error::{Error, Result};
use crate::estimators::Method;
use crate::nnet::PretrainCfg;
use crate::rng::Seed;
use crate::tta::{TtaConfig, TtaMethod, DEFAULT_E0};

/// Known keys per section.
const SCHEMA: &[(&str, &[&str])] = &[
    ("run", &["out", "seed"]),
    (
        "data",
        &[
            "classes",
            "dim",
            "mean_scale",
            "std",
            "train_per_class",
            "val_per_class",
            "holdout_per_class",
            "test_per_class",
            "suite_kinds",
            "suite_severities",
        ],
    ),
    ("pretrain", &["epochs", "lr", "batch", "accuracy_floor", "bn_momentum", "label_smoothing"]),
    (
        "tta",
        &[
            "method",
            "lr",
            "batch",
            "reset_period",
            "e0",
            "alpha",
            "eps_div",
            "stop_iter",
            "eval_interval",
            "track_n",
            "clear_ema_on_reset",
            "eval_batch",
        ],
    ),
    (
        "adapt",
        &["dataset", "diagnostics", "diag_subset", "project_2d", "topk_exclusion", "entropy_exclusion"],
    ),
    ("fit", &["degree", "weighted"]),
    ("estimate", &["methods", "ingest_logits"]),
    (
        "ablate",
        &["stop_iters", "track_sizes", "subset_sizes", "subset_resamples"],
    ),
    (
        "emgmm",
        &["clusters", "per_cluster", "radius", "std", "eta", "iterations", "offset_scale", "seeds"],
    ),
];

/// Parsed configuration document.
#[derive(Debug, Clone, Default)]
pub struct RunConfig {
    entries: BTreeMap<(String, String), String>,
}

impl RunConfig {
    /// Parse a config document, rejecting unknown sections and keys.
    pub fn parse(text: &str, origin: &str) -> Result<RunConfig> {
        let mut entries = BTreeMap::new();
        let mut section = String::new();
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            if let Some(name) = line.strip_prefix('[').and_then(|s| s.strip_suffix(']')) {
                let name = name.trim();
                if !SCHEMA.iter().any(|(s, _)| *s == name) {
                    return Err(Error::Config(format!(
                        "{origin}:{}: unknown section [{name}]",
                        lineno + 1
                    )));
                }
                section = name.to_string();
                continue;
            }
            let Some((key, value)) = line.split_once('=') else {
                return Err(Error::Config(format!(
                    "{origin}:{}: expected `key = value`, got `{line}`",
                    lineno + 1
                )));
            };
            let key = key.trim();
            let value = value.trim();
            if section.is_empty() {
                return Err(Error::Config(format!(
                    "{origin}:{}: key `{key}` appears before any [section]",
                    lineno + 1
                )));
            }
            let known = SCHEMA
                .iter()
                .find(|(s, _)| *s == section)
                .map(|(_, keys)| keys.contains(&key))
                .unwrap_or(false);
            if !known {
                return Err(Error::Config(format!(
                    "{origin}:{}: unknown key `{key}` in section [{section}]",
                    lineno + 1
                )));
            }
            entries.insert((section.clone(), key.to_string()), value.to_string());
        }
        Ok(RunConfig { entries })
    }

    pub fn load(path: &Path) -> Result<RunConfig> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read config {}: {e}", path.display())))?;
        RunConfig::parse(&text, &path.display().to_string())
    }

    /// Override a value (CLI flags).
    pub fn set(&mut self, section: &str, key: &str, value: impl Into<String>) {
        self.entries.insert((section.to_string(), key.to_string()), value.into());
    }

    pub fn get(&self, section: &str, key: &str) -> Option<&str> {
        self.entries.get(&(section.to_string(), key.to_string())).map(String::as_str)
    }

    fn parsed<T: std::str::FromStr>(&self, section: &str, key: &str, default: T) -> Result<T> {
        match self.get(section, key) {
            None => Ok(default),
            Some(raw) => raw.parse().map_err(|_| {
                Error::Config(format!("[{section}] {key}: cannot parse `{raw}`"))
            }),
        }
    }

    fn parsed_bool(&self, section: &str, key: &str, default: bool) -> Result<bool> {
        match self.get(section, key) {
            None => Ok(default),
            Some("true") => Ok(true),
            Some("false") => Ok(false),
            Some(raw) => {
                Err(Error::Config(format!("[{section}] {key}: expected true/false, got `{raw}`")))
            }
        }
    }

    fn parsed_list<T: std::str::FromStr>(
        &self,
        section: &str,
        key: &str,
        default: &[T],
    ) -> Result<Vec<T>>
    where
        T: Clone,
    {
        match self.get(section, key) {
            None => Ok(default.to_vec()),
            Some(raw) => raw
                .split(',')
                .map(str::trim)
                .filter(|s| !s.is_empty())
                .map(|s| {
                    s.parse()
                        .map_err(|_| Error::Config(format!("[{section}] {key}: bad entry `{s}`")))
                })
                .collect(),
        }
    }

    // ── typed views ────────────────────────────────────────────────

    pub fn seed(&self) -> Result<Seed> {
        Ok(Seed(self.parsed("run", "seed", 0u64)?))
    }

    pub fn out_dir(&self) -> String {
        self.get("run", "out").unwrap_or("runs/default").to_string()
    }

    pub fn synth_spec(&self, seed: Seed) -> Result<SynthSpec> {
        Ok(SynthSpec {
            classes: self.parsed("data", "classes", 16usize)?,
            dim: self.parsed("data", "dim", 32usize)?,
            mean_scale: self.parsed("data", "mean_scale", 6.0f64)?,
            std: self.parsed("data", "std", 1.0f64)?,
            per_class: SplitSizes {
                train: self.parsed("data", "train_per_class", 40usize)?,
                val: self.parsed("data", "val_per_class", 16usize)?,
                holdout_fit: self.parsed("data", "holdout_per_class", 64usize)?,
                test: self.parsed("data", "test_per_class", 64usize)?,
            },
            seed: seed.substream("datagen"),
        })
    }

    pub fn suite_kinds(&self) -> Result<Vec<CorruptionKind>> {
        match self.get("data", "suite_kinds") {
            None => Ok(crate::datagen::DEFAULT_SUITE_KINDS.to_vec()),
            Some(raw) => raw
                .split(',')
                .map(str::trim)
                .filter(|s| !s.is_empty())
                .map(|s| {
                    CorruptionKind::parse(s)
                        .map_err(|_| Error::Config(format!("[data] suite_kinds: bad kind `{s}`")))
                })
                .collect(),
        }
    }

    pub fn suite_severities(&self) -> Result<Vec<u8>> {
        let sevs = self.parsed_list("data", "suite_severities", &[1u8, 2, 3, 4, 5])?;
        if sevs.iter().any(|s| !(1..=5).contains(s)) {
            return Err(Error::Config("[data] suite_severities: severities must be 1..=5".into()));
        }
        Ok(sevs)
    }

    pub fn pretrain_cfg(&self) -> Result<PretrainCfg> {
        let d = PretrainCfg::default();
        Ok(PretrainCfg {
            epochs: self.parsed("pretrain", "epochs", d.epochs)?,
            lr: self.parsed("pretrain", "lr", d.lr)?,
            batch: self.parsed("pretrain", "batch", d.batch)?,
            accuracy_floor: self.parsed("pretrain", "accuracy_floor", d.accuracy_floor)?,
            bn_momentum: self.parsed("pretrain", "bn_momentum", d.bn_momentum)?,
            label_smoothing: self.parsed("pretrain", "label_smoothing", d.label_smoothing)?,
        })
    }

    pub fn tta_cfg(&self) -> Result<TtaConfig> {
        let method = match self.get("tta", "method") {
            None => TtaMethod::Rdumb,
            Some(raw) => TtaMethod::parse(raw)
                .map_err(|_| Error::Config(format!("[tta] method: unknown `{raw}`")))?,
        };
        let cfg = TtaConfig {
            method,
            lr: self.parsed("tta", "lr", 2.5e-4)?,
            batch: self.parsed("tta", "batch", 64usize)?,
            reset_period: self.parsed("tta", "reset_period", 1000u64)?,
            e0: self.parsed("tta", "e0", DEFAULT_E0)?,
            alpha: self.parsed("tta", "alpha", 0.9f64)?,
            eps_div: self.parsed("tta", "eps_div", 0.05f64)?,
            stop_iter: self.parsed("tta", "stop_iter", 1000u64)?,
            eval_interval: self.parsed("tta", "eval_interval", 10u64)?,
            track_n: self.parsed("tta", "track_n", 1000usize)?,
            clear_ema_on_reset: self.parsed_bool("tta", "clear_ema_on_reset", true)?,
            eval_batch: self.parsed("tta", "eval_batch", 0usize)?,
        };
        cfg.validate().map_err(|e| Error::Config(format!("[tta]: {e}")))?;
        Ok(cfg)
    }

    pub fn estimate_methods(&self) -> Result<Vec<Method>> {
        match self.get("estimate", "methods") {
            None => Ok(crate::estimators::ALL_METHODS.to_vec()),
            Some(raw) => raw
                .split(',')
                .map(str::trim)
                .filter(|s| !s.is_empty())
                .map(|s| {
                    Method::parse(s)
                        .map_err(|_| Error::Config(format!("[estimate] methods: bad entry `{s}`")))
                })
                .collect(),
        }
    }

    pub fn fit_degree(&self) -> Result<usize> {
        let degree = self.parsed("fit", "degree", 2usize)?;
        if !(1..=3).contains(&degree) {
            return Err(Error::Config(format!("[fit] degree: {degree} outside 1..=3")));
        }
        Ok(degree)
    }

    pub fn fit_weighted(&self) -> Result<bool> {
        self.parsed_bool("fit", "weighted", true)
    }

    pub fn u64_of(&self, section: &str, key: &str, default: u64) -> Result<u64> {
        self.parsed(section, key, default)
    }

    pub fn usize_of(&self, section: &str, key: &str, default: usize) -> Result<usize> {
        self.parsed(section, key, default)
    }

    pub fn f64_of(&self, section: &str, key: &str, default: f64) -> Result<f64> {
        self.parsed(section, key, default)
    }

    pub fn bool_of(&self, section: &str, key: &str, default: bool) -> Result<bool> {
        self.parsed_bool(section, key, default)
    }

    pub fn str_of(&self, section: &str, key: &str, default: &str) -> String {
        self.get(section, key).unwrap_or(default).to_string()
    }

    pub fn list_of<T: std::str::FromStr + Clone>(
        &self,
        section: &str,
        key: &str,
        default: &[T],
    ) -> Result<Vec<T>> {
        self.parsed_list(section, key, default)
    }

    /// Render the resolved document: every schema key with its effective
    /// value, so a run's inputs are fully recorded next to its outputs.
    pub fn render_resolved(&self) -> String {
        let mut out = String::new();
        for (section, keys) in SCHEMA {
            out.push_str(&format!("[{section}]\n"));
            for key in *keys {
                if let Some(v) = self.get(section, key) {
                    out.push_str(&format!("{key} = {v}\n"));
                }
            }
            out.push('\n');
        }
        out
    }

    pub fn write_resolved(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.render_resolved())
            .map_err(|e| Error::io(path.display().to_string(), e))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_sections_and_values() {
        let cfg = RunConfig::parse(
            "# comment\n[run]\nseed = 7\nout = somewhere\n\n[tta]\nmethod = tent\nlr = 0.01\n",
            "test",
        )
        .unwrap();
        assert_eq!(cfg.seed().unwrap(), Seed(7));
        assert_eq!(cfg.out_dir(), "somewhere");
        let tta = cfg.tta_cfg().unwrap();
        assert_eq!(tta.method, TtaMethod::Tent);
        assert!((tta.lr - 0.01).abs() < 1e-15);
        assert_eq!(tta.batch, 64); // default
    }

    #[test]
    fn rejects_unknown_keys_naming_them() {
        let err = RunConfig::parse("[run]\nseeed = 7\n", "test").unwrap_err();
        let msg = format!("{err}");
        assert!(msg.contains("seeed"), "{msg}");
        assert!(msg.contains("[run]"), "{msg}");

        let err = RunConfig::parse("[nope]\n", "test").unwrap_err();
        assert!(format!("{err}").contains("nope"));

        let err = RunConfig::parse("stray = 1\n", "test").unwrap_err();
        assert!(format!("{err}").contains("stray"));
    }

    #[test]
    fn rejects_bad_values() {
        let cfg = RunConfig::parse("[run]\nseed = banana\n", "test").unwrap();
        assert!(cfg.seed().is_err());
        let cfg = RunConfig::parse("[tta]\nlr = -1\n", "test").unwrap();
        assert!(cfg.tta_cfg().is_err());
    }

    #[test]
    fn resolved_render_round_trips() {
        let cfg = RunConfig::parse("[run]\nseed = 9\n[data]\nclasses = 8\n", "test").unwrap();
        let rendered = cfg.render_resolved();
        let back = RunConfig::parse(&rendered, "resolved").unwrap();
        assert_eq!(back.seed().unwrap(), Seed(9));
        assert_eq!(back.synth_spec(Seed(0)).unwrap().classes, 8);
        assert_eq!(rendered, back.render_resolved());
    }

    #[test]
    fn defaults_flow_through() {
        let cfg = RunConfig::parse("", "test").unwrap();
        let spec = cfg.synth_spec(Seed(0)).unwrap();
        assert_eq!(spec.classes, 16);
        assert_eq!(spec.dim, 32);
        assert_eq!(cfg.suite_kinds().unwrap().len(), 4);
        assert_eq!(cfg.suite_severities().unwrap(), vec![1, 2, 3, 4, 5]);
        assert_eq!(cfg.estimate_methods().unwrap().len(), 5);
    }
}
