//! Pipeline configuration: `[section]` headers with `key = value` lines,
//! overridden by `HALLUBENCH_<SECTION>_<KEY>` environment variables.

use std::collections::{BTreeMap, BTreeSet};
use std::path::{Path, PathBuf};
use std::str::FromStr;

use ini::Ini;
use serde::Serialize;

use crate::detector::JudgeMode;
use crate::error::{Error, Result};
use crate::review::DEFAULT_QUORUM;
use crate::sampler::SamplerConfig;
use crate::screening::DEFAULT_THRESHOLD;
use crate::synthesis::SynthesisConfig;

pub const ENV_PREFIX: &str = "HALLUBENCH_";

/// Raw string settings keyed by section then key, both lower-case.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Settings {
    sections: BTreeMap<String, BTreeMap<String, String>>,
}

impl Settings {
    pub fn parse(text: &str) -> Result<Self> {
        let ini = Ini::load_from_str(text).map_err(|e| Error::contract(format!("config: {e}")))?;
        let mut out = Settings::default();
        for (section, props) in ini.iter() {
            for (k, v) in props.iter() {
                let Some(section) = section else {
                    return Err(Error::contract(format!("config key {k:?} outside a section")));
                };
                out.set(section, k, v);
            }
        }
        Ok(out)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::parse(&crate::dataset::read_text(path)?)
    }

    pub fn set(&mut self, section: &str, key: &str, value: &str) {
        self.sections
            .entry(section.trim().to_lowercase())
            .or_default()
            .insert(key.trim().to_lowercase(), value.trim().to_string());
    }

    pub fn get(&self, section: &str, key: &str) -> Option<&str> {
        self.sections.get(section)?.get(key).map(String::as_str)
    }

    /// Applies `HALLUBENCH_SECTION_KEY=value` pairs; the section name ends at
    /// the first underscore after the prefix.
    pub fn apply_env(&mut self, vars: impl IntoIterator<Item = (String, String)>) {
        for (name, value) in vars {
            let Some(rest) = name.strip_prefix(ENV_PREFIX) else {
                continue;
            };
            if let Some((section, key)) = rest.split_once('_') {
                if !section.is_empty() && !key.is_empty() {
                    self.set(section, key, &value);
                }
            }
        }
    }

    fn typed<T: FromStr>(&self, section: &str, key: &str) -> Result<Option<T>>
    where
        T::Err: std::fmt::Display,
    {
        self.get(section, key)
            .map(|v| {
                v.parse::<T>()
                    .map_err(|e| Error::contract(format!("bad value for {section}.{key}: {v:?} ({e})")))
            })
            .transpose()
    }

    fn list(&self, section: &str, key: &str) -> Option<Vec<String>> {
        self.get(section, key).map(|v| {
            v.split(',')
                .map(str::trim)
                .filter(|s| !s.is_empty())
                .map(str::to_string)
                .collect()
        })
    }
}

pub const STAGES: [&str; 5] = ["sample", "synthesize", "screen", "review", "evaluate"];

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ReviewSettings {
    pub roster: Vec<String>,
    pub groups: usize,
    pub quorum: usize,
    /// Cast verdicts from a rule-based panel instead of waiting for annotators.
    pub simulate: bool,
}

impl Default for ReviewSettings {
    fn default() -> Self {
        Self {
            roster: ["a1", "a2", "a3"].map(String::from).to_vec(),
            groups: 1,
            quorum: DEFAULT_QUORUM,
            simulate: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EvaluateSettings {
    pub mode: JudgeMode,
    pub inject_facts: bool,
    pub omit_query: bool,
    pub alpha: f64,
    pub max_in_flight: usize,
}

impl Default for EvaluateSettings {
    fn default() -> Self {
        Self {
            mode: JudgeMode::ZeroShot,
            inject_facts: false,
            omit_query: false,
            alpha: 0.7,
            max_in_flight: 4,
        }
    }
}

/// Provider specs, resolved by the caller: `mock`, `http`, `replay:<path>`, `record:<path>`, `record-mock:<path>`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct ProviderSettings {
    pub generator: String,
    pub judge: String,
    pub guardian: String,
    pub manager: String,
    /// `lexical`, `http`, or `replay:<path>`.
    pub embedder: String,
}

impl Default for ProviderSettings {
    fn default() -> Self {
        Self {
            generator: "mock".into(),
            judge: "mock".into(),
            guardian: "mock".into(),
            manager: "mock".into(),
            embedder: "lexical".into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PipelineConfig {
    pub stages: BTreeSet<String>,
    pub seed: u64,
    pub triples: PathBuf,
    pub claims: Option<PathBuf>,
    pub corpus: Option<PathBuf>,
    pub out_dir: PathBuf,
    pub sampler: SamplerConfig,
    pub synthesis: SynthesisConfig,
    pub screen_threshold: f64,
    pub review: ReviewSettings,
    pub evaluate: EvaluateSettings,
    pub providers: ProviderSettings,
}

impl PipelineConfig {
    /// Defaults for everything but the triple path and output directory.
    pub fn new(triples: impl Into<PathBuf>, out_dir: impl Into<PathBuf>) -> Self {
        Self {
            stages: STAGES.iter().map(|s| s.to_string()).collect(),
            seed: 0,
            triples: triples.into(),
            claims: None,
            corpus: None,
            out_dir: out_dir.into(),
            sampler: SamplerConfig::default(),
            synthesis: SynthesisConfig::default(),
            screen_threshold: DEFAULT_THRESHOLD,
            review: ReviewSettings::default(),
            evaluate: EvaluateSettings::default(),
            providers: ProviderSettings::default(),
        }
    }

    pub fn enabled(&self, stage: &str) -> bool {
        self.stages.contains(stage)
    }

    /// Builds a config from settings; relative paths resolve against `base`.
    pub fn from_settings(s: &Settings, base: &Path) -> Result<Self> {
        let path = |section: &str, key: &str| s.get(section, key).map(|p| base.join(p));
        let triples = path("paths", "triples").ok_or_else(|| Error::contract("paths.triples is required"))?;
        let out_dir = path("paths", "out").unwrap_or_else(|| base.join("out"));
        let mut cfg = Self::new(triples, out_dir);
        cfg.claims = path("paths", "claims");
        cfg.corpus = path("paths", "corpus");

        if let Some(stages) = s.list("pipeline", "stages") {
            for st in &stages {
                if !STAGES.contains(&st.as_str()) {
                    return Err(Error::contract(format!("unknown stage {st:?}")));
                }
            }
            cfg.stages = stages.into_iter().collect();
        }
        if let Some(seed) = s.typed("pipeline", "seed")? {
            cfg.seed = seed;
        }

        let sc = &mut cfg.sampler;
        macro_rules! take {
            ($target:expr, $section:literal, $key:literal) => {
                if let Some(v) = s.typed($section, $key)? {
                    $target = v;
                }
            };
        }
        take!(sc.k, "sampler", "k");
        take!(sc.n, "sampler", "n");
        take!(sc.max_overlap, "sampler", "max_overlap");
        take!(sc.comparison_size, "sampler", "comparison_size");
        take!(sc.setop_constraints, "sampler", "setop_constraints");
        take!(sc.setop_min_members, "sampler", "setop_min_members");
        take!(sc.setop_max_members, "sampler", "setop_max_members");
        for (key, target) in [
            ("relation_allowlist", &mut sc.relation_allowlist),
            ("numeric_relations", &mut sc.numeric_relations),
            ("type_relations", &mut sc.type_relations),
        ] {
            if let Some(v) = s.list("sampler", key) {
                *target = v.into_iter().collect();
            }
        }
        sc.seed = cfg.seed;

        let sy = &mut cfg.synthesis;
        take!(sy.params.temperature, "synthesis", "temperature");
        take!(sy.params.top_p, "synthesis", "top_p");
        take!(sy.params.max_tokens, "synthesis", "max_tokens");
        take!(sy.params.frequency_penalty, "synthesis", "frequency_penalty");
        take!(sy.prescreen, "synthesis", "prescreen");
        take!(sy.max_in_flight, "synthesis", "max_in_flight");
        if let Some(v) = s.get("synthesis", "kg_domain") {
            sy.kg_domain = v.to_string();
        }
        if let Some(v) = s.get("synthesis", "claim_domain") {
            sy.claim_domain = v.to_string();
        }

        take!(cfg.screen_threshold, "screen", "threshold");

        if let Some(r) = s.list("review", "roster") {
            cfg.review.roster = r;
        }
        take!(cfg.review.groups, "review", "groups");
        take!(cfg.review.quorum, "review", "quorum");
        take!(cfg.review.simulate, "review", "simulate");

        take!(cfg.evaluate.mode, "evaluate", "mode");
        take!(cfg.evaluate.inject_facts, "evaluate", "inject_facts");
        take!(cfg.evaluate.omit_query, "evaluate", "omit_query");
        take!(cfg.evaluate.alpha, "evaluate", "alpha");
        take!(cfg.evaluate.max_in_flight, "evaluate", "max_in_flight");

        let p = &mut cfg.providers;
        for (key, target) in [
            ("generator", &mut p.generator),
            ("judge", &mut p.judge),
            ("guardian", &mut p.guardian),
            ("manager", &mut p.manager),
            ("embedder", &mut p.embedder),
        ] {
            if let Some(v) = s.get("providers", key) {
                *target = v.to_string();
            }
        }

        cfg.validate()?;
        Ok(cfg)
    }

    /// Reads `path`, applies process environment overrides, and resolves paths
    /// against the file's directory.
    pub fn load(path: &Path) -> Result<Self> {
        let mut s = Settings::load(path)?;
        s.apply_env(std::env::vars());
        let base = path.parent().unwrap_or(Path::new("."));
        Self::from_settings(&s, base)
    }

    pub fn validate(&self) -> Result<()> {
        self.sampler.validate()?;
        self.synthesis.params.validate()?;
        if !(self.screen_threshold > 0.0 && self.screen_threshold <= 1.0) {
            return Err(Error::contract("screen.threshold must be in (0,1]"));
        }
        if !(1..=3).contains(&self.review.quorum) {
            return Err(Error::contract("review.quorum must be 1, 2 or 3"));
        }
        if !(0.0..=1.0).contains(&self.evaluate.alpha) {
            return Err(Error::contract("evaluate.alpha must be in [0,1]"));
        }
        Ok(())
    }
}
