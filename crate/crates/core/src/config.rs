//! Experiment configuration files.
//!
//! ```text
//! # comment
//! [section]
//! key = value   # trailing comment
//! ```
//!
//! Section headers match `^\[\w+\]$` and entries `^\s*\w+\s*=\s*[^#]*`.
//! Every key must be known for its section; unknown sections, unknown keys
//! and repeated keys are errors.

use std::collections::BTreeMap;
use std::fmt::Write;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use crate::data::DatasetKind;
use crate::error::{Error, Result};
use crate::guidance::{Guidance, GuidanceConfig, RepGConfig, Selection, DEFAULT_K};
use crate::nets::{EncoderConfig, ModelConfig, ProjectorConfig, ProjectorInput};
use crate::probe::ProbeConfig;
use crate::sampling::{SamplerConfig, SamplerKind};
use crate::training::TrainConfig;

#[derive(Clone, Debug, PartialEq)]
pub struct DatasetSection {
    pub kind: DatasetKind,
    pub num_classes: usize,
    pub size: usize,
    pub seed: u64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrainingSection {
    pub flow: TrainConfig,
    pub encoder: TrainConfig,
    pub holdout: usize,
    pub min_encoder_accuracy: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum GuidanceKind {
    None,
    RPred,
    RepG,
}

#[derive(Clone, Debug, PartialEq)]
pub struct GuidanceSection {
    pub method: GuidanceKind,
    pub config: GuidanceConfig,
    pub repg_k: usize,
    pub repg_selection: Selection,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SamplerSection {
    pub config: SamplerConfig,
    pub samples_per_class: usize,
    /// Chains per parallel batch.
    pub chunk: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub struct EvalSection {
    pub reference_size: usize,
    pub reference_seed: u64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ExperimentConfig {
    pub seed: u64,
    /// Load this bundle instead of training one.
    pub checkpoint: Option<PathBuf>,
    pub dataset: DatasetSection,
    pub model: ModelConfig,
    pub encoder: EncoderConfig,
    pub training: TrainingSection,
    pub sampler: SamplerSection,
    pub guidance: GuidanceSection,
    pub eval: EvalSection,
    pub ablation: Vec<(f64, f64)>,
    pub probe: ProbeConfig,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            seed: 0,
            checkpoint: None,
            dataset: DatasetSection {
                kind: DatasetKind::EightGaussians,
                num_classes: 8,
                size: 20_000,
                seed: 0,
            },
            model: ModelConfig::default(),
            encoder: EncoderConfig::default(),
            training: TrainingSection {
                flow: TrainConfig::default(),
                encoder: TrainConfig {
                    steps: 1000,
                    lr: 1e-2,
                    ..TrainConfig::default()
                },
                holdout: 2000,
                min_encoder_accuracy: crate::training::MIN_ENCODER_ACCURACY,
            },
            sampler: SamplerSection {
                config: SamplerConfig::default(),
                samples_per_class: 625,
                chunk: 256,
            },
            guidance: GuidanceSection {
                method: GuidanceKind::None,
                config: GuidanceConfig::default(),
                repg_k: DEFAULT_K,
                repg_selection: Selection::RandomPerStep,
            },
            eval: EvalSection {
                reference_size: 5000,
                reference_seed: 1,
            },
            ablation: vec![(0.8, 0.9), (0.6, 0.9), (0.6, 0.8), (0.2, 0.6)],
            probe: ProbeConfig::default(),
        }
    }
}

/// Every accepted `(section, key)` pair.
pub const KEYS: &[(&str, &[&str])] = &[
    ("experiment", &["seed", "checkpoint"]),
    ("dataset", &["name", "num_classes", "size", "seed"]),
    (
        "model",
        &[
            "width",
            "depth",
            "time_freqs",
            "class_dim",
            "cfg_enabled",
            "projector_input",
            "projector_width",
            "projector_depth",
        ],
    ),
    ("encoder", &["hidden", "rep_dim"]),
    (
        "training",
        &[
            "steps",
            "batch_size",
            "lr",
            "weight_decay",
            "lambda_align",
            "cfg_dropout",
            "encoder_steps",
            "encoder_lr",
            "encoder_batch_size",
            "holdout",
            "min_encoder_accuracy",
        ],
    ),
    (
        "sampler",
        &["kind", "nfe", "cfg_scale", "final_sde_step", "samples_per_class", "chunk"],
    ),
    (
        "guidance",
        &[
            "method",
            "alpha",
            "t_low",
            "t_high",
            "updates_per_step",
            "loss_mode",
            "update_rule",
            "adamw_lr",
            "backprop_through_velocity",
            "repg_k",
            "repg_selection",
        ],
    ),
    ("eval", &["reference_size", "reference_seed"]),
    ("ablation", &["intervals"]),
    ("probe", &["t_grid", "seeds", "references", "nfe", "include_noisy_latent"]),
];

fn is_word(s: &str) -> bool {
    !s.is_empty() && s.chars().all(|c| c.is_alphanumeric() || c == '_')
}

/// Parsed `section -> key -> (value, line)` table, before interpretation.
pub fn parse_ini(text: &str) -> Result<BTreeMap<String, BTreeMap<String, (String, usize)>>> {
    let mut out: BTreeMap<String, BTreeMap<String, (String, usize)>> = BTreeMap::new();
    let mut section: Option<String> = None;
    for (i, raw) in text.lines().enumerate() {
        let line = i + 1;
        let err = |message: String| Error::ConfigSyntax { line, message };
        let trimmed = raw.trim();
        if trimmed.is_empty() || trimmed.starts_with('#') {
            continue;
        }
        if raw.starts_with('[') {
            let name = raw
                .strip_prefix('[')
                .and_then(|r| r.strip_suffix(']'))
                .filter(|n| is_word(n))
                .ok_or_else(|| err(format!("malformed section header `{raw}`")))?;
            if !KEYS.iter().any(|(s, _)| *s == name) {
                return Err(err(format!("unknown section [{name}]")));
            }
            if out.contains_key(name) {
                return Err(err(format!("section [{name}] appears twice")));
            }
            out.insert(name.to_string(), BTreeMap::new());
            section = Some(name.to_string());
            continue;
        }
        let (key, value) = raw.split_once('=').ok_or_else(|| err(format!("expected `key = value`, got `{raw}`")))?;
        let key = key.trim();
        if !is_word(key) {
            return Err(err(format!("malformed key `{key}`")));
        }
        let value = value.split('#').next().unwrap().trim();
        let sec = section.as_ref().ok_or_else(|| err(format!("key `{key}` outside any section")))?;
        let known = KEYS.iter().find(|(s, _)| s == sec).unwrap().1;
        if !known.contains(&key) {
            return Err(err(format!("unknown key `{key}` in [{sec}]")));
        }
        let entries = out.get_mut(sec).unwrap();
        if entries.insert(key.to_string(), (value.to_string(), line)).is_some() {
            return Err(err(format!("key `{key}` repeated in [{sec}]")));
        }
    }
    Ok(out)
}

struct Table(BTreeMap<String, BTreeMap<String, (String, usize)>>);

impl Table {
    fn get<T: FromStr>(&self, section: &str, key: &str, into: &mut T) -> Result<()>
    where
        T::Err: std::fmt::Display,
    {
        if let Some((v, line)) = self.0.get(section).and_then(|s| s.get(key)) {
            *into = v.parse().map_err(|e| Error::ConfigSyntax {
                line: *line,
                message: format!("bad value `{v}` for [{section}] {key}: {e}"),
            })?;
        }
        Ok(())
    }

    fn raw(&self, section: &str, key: &str) -> Option<&(String, usize)> {
        self.0.get(section).and_then(|s| s.get(key))
    }

    fn list<T: FromStr>(&self, section: &str, key: &str, into: &mut Vec<T>) -> Result<()>
    where
        T::Err: std::fmt::Display,
    {
        if let Some((v, line)) = self.raw(section, key) {
            *into = v
                .split(',')
                .map(|s| s.trim())
                .filter(|s| !s.is_empty())
                .map(|s| {
                    s.parse().map_err(|e| Error::ConfigSyntax {
                        line: *line,
                        message: format!("bad list item `{s}` for [{section}] {key}: {e}"),
                    })
                })
                .collect::<Result<_>>()?;
        }
        Ok(())
    }
}

fn parse_projector_input(s: &str) -> Result<ProjectorInput> {
    match s {
        "hidden" => Ok(ProjectorInput::Hidden),
        "raw" => Ok(ProjectorInput::Raw),
        _ => Err(Error::Config(format!("unknown projector_input `{s}`"))),
    }
}

fn projector_input_name(p: ProjectorInput) -> &'static str {
    match p {
        ProjectorInput::Hidden => "hidden",
        ProjectorInput::Raw => "raw",
    }
}

impl FromStr for SamplerKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "ode" => Ok(SamplerKind::Ode),
            "sde" => Ok(SamplerKind::Sde),
            _ => Err(Error::Config(format!("unknown sampler kind `{s}`"))),
        }
    }
}

impl std::fmt::Display for SamplerKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            SamplerKind::Ode => "ode",
            SamplerKind::Sde => "sde",
        })
    }
}

impl FromStr for GuidanceKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "none" => Ok(GuidanceKind::None),
            "rpred" => Ok(GuidanceKind::RPred),
            "repg" => Ok(GuidanceKind::RepG),
            _ => Err(Error::Config(format!("unknown guidance method `{s}`"))),
        }
    }
}

impl std::fmt::Display for GuidanceKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            GuidanceKind::None => "none",
            GuidanceKind::RPred => "rpred",
            GuidanceKind::RepG => "repg",
        })
    }
}

fn parse_interval(s: &str) -> Result<(f64, f64)> {
    let (lo, hi) = s
        .split_once(':')
        .ok_or_else(|| Error::Config(format!("interval `{s}` must be written low:high")))?;
    let p = |v: &str| v.trim().parse::<f64>().map_err(|e| Error::Config(format!("interval `{s}`: {e}")));
    Ok((p(lo)?, p(hi)?))
}

impl ExperimentConfig {
    pub fn parse(text: &str) -> Result<Self> {
        let t = Table(parse_ini(text)?);
        let mut c = ExperimentConfig::default();
        t.get("experiment", "seed", &mut c.seed)?;
        if let Some((v, _)) = t.raw("experiment", "checkpoint") {
            c.checkpoint = (!v.is_empty()).then(|| PathBuf::from(v));
        }

        let d = &mut c.dataset;
        t.get("dataset", "name", &mut d.kind)?;
        t.get("dataset", "num_classes", &mut d.num_classes)?;
        t.get("dataset", "size", &mut d.size)?;
        t.get("dataset", "seed", &mut d.seed)?;

        let v = &mut c.model.velocity;
        t.get("model", "width", &mut v.width)?;
        t.get("model", "depth", &mut v.depth)?;
        t.get("model", "time_freqs", &mut v.time_freqs)?;
        t.get("model", "class_dim", &mut v.class_dim)?;
        t.get("model", "cfg_enabled", &mut v.cfg_enabled)?;
        let p = &mut c.model.projector;
        if let Some((s, line)) = t.raw("model", "projector_input") {
            p.input = parse_projector_input(s).map_err(|e| Error::ConfigSyntax {
                line: *line,
                message: e.to_string(),
            })?;
        }
        t.get("model", "projector_width", &mut p.width)?;
        t.get("model", "projector_depth", &mut p.depth)?;

        t.get("encoder", "hidden", &mut c.encoder.hidden)?;
        t.get("encoder", "rep_dim", &mut c.encoder.rep_dim)?;

        let tr = &mut c.training;
        t.get("training", "steps", &mut tr.flow.steps)?;
        t.get("training", "batch_size", &mut tr.flow.batch_size)?;
        t.get("training", "lr", &mut tr.flow.lr)?;
        t.get("training", "weight_decay", &mut tr.flow.weight_decay)?;
        t.get("training", "lambda_align", &mut tr.flow.lambda_align)?;
        t.get("training", "cfg_dropout", &mut tr.flow.cfg_dropout)?;
        t.get("training", "encoder_steps", &mut tr.encoder.steps)?;
        t.get("training", "encoder_lr", &mut tr.encoder.lr)?;
        t.get("training", "encoder_batch_size", &mut tr.encoder.batch_size)?;
        t.get("training", "holdout", &mut tr.holdout)?;
        t.get("training", "min_encoder_accuracy", &mut tr.min_encoder_accuracy)?;

        let s = &mut c.sampler;
        t.get("sampler", "kind", &mut s.config.kind)?;
        t.get("sampler", "nfe", &mut s.config.nfe)?;
        t.get("sampler", "cfg_scale", &mut s.config.cfg_scale)?;
        t.get("sampler", "final_sde_step", &mut s.config.final_sde_step)?;
        t.get("sampler", "samples_per_class", &mut s.samples_per_class)?;
        t.get("sampler", "chunk", &mut s.chunk)?;

        let g = &mut c.guidance;
        // A [guidance] section without an explicit method means R-pred.
        if t.0.contains_key("guidance") {
            g.method = GuidanceKind::RPred;
        }
        t.get("guidance", "method", &mut g.method)?;
        t.get("guidance", "alpha", &mut g.config.alpha)?;
        t.get("guidance", "t_low", &mut g.config.t_low)?;
        t.get("guidance", "t_high", &mut g.config.t_high)?;
        t.get("guidance", "updates_per_step", &mut g.config.updates_per_step)?;
        t.get("guidance", "loss_mode", &mut g.config.loss_mode)?;
        t.get("guidance", "update_rule", &mut g.config.update_rule)?;
        t.get("guidance", "adamw_lr", &mut g.config.adamw_lr)?;
        t.get("guidance", "backprop_through_velocity", &mut g.config.backprop_through_velocity)?;
        t.get("guidance", "repg_k", &mut g.repg_k)?;
        t.get("guidance", "repg_selection", &mut g.repg_selection)?;

        t.get("eval", "reference_size", &mut c.eval.reference_size)?;
        t.get("eval", "reference_seed", &mut c.eval.reference_seed)?;

        if let Some((v, line)) = t.raw("ablation", "intervals") {
            c.ablation = v
                .split(',')
                .map(str::trim)
                .filter(|s| !s.is_empty())
                .map(parse_interval)
                .collect::<Result<_>>()
                .map_err(|e| Error::ConfigSyntax {
                    line: *line,
                    message: e.to_string(),
                })?;
        }

        t.list("probe", "t_grid", &mut c.probe.t_grid)?;
        t.list("probe", "seeds", &mut c.probe.seeds)?;
        t.get("probe", "references", &mut c.probe.references)?;
        t.get("probe", "nfe", &mut c.probe.nfe)?;
        t.get("probe", "include_noisy_latent", &mut c.probe.include_noisy_latent)?;

        c.sync();
        c.validate()?;
        Ok(c)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        ExperimentConfig::parse(&text)
    }

    /// Propagates shared values (data dimension, class count, seeds) into
    /// the per-module configs.
    pub fn sync(&mut self) {
        let dim = self.dataset.kind.data_dim();
        let k = self.dataset.num_classes;
        self.model.velocity.data_dim = dim;
        self.model.velocity.num_classes = k;
        self.encoder.data_dim = dim;
        self.encoder.num_classes = k;
        self.model.projector.rep_dim = self.encoder.rep_dim;
        self.training.flow.seed = self.seed;
        self.training.encoder.seed = self.seed;
        self.sampler.config.seed = self.seed;
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self.sync();
        self
    }

    pub fn validate(&self) -> Result<()> {
        let d = &self.dataset;
        if d.num_classes == 0 || d.num_classes > d.kind.max_classes() {
            return Err(Error::Config(format!("{} supports at most {} classes", d.kind, d.kind.max_classes())));
        }
        if d.size == 0 {
            return Err(Error::Config("dataset size must be positive".into()));
        }
        self.training.flow.validate()?;
        self.training.encoder.validate()?;
        self.sampler.config.validate()?;
        self.guidance.config.validate()?;
        if self.sampler.samples_per_class == 0 || self.sampler.chunk == 0 {
            return Err(Error::Config("samples_per_class and chunk must be positive".into()));
        }
        if self.eval.reference_size < 2 {
            return Err(Error::Config("reference_size must be at least 2".into()));
        }
        for &(lo, hi) in &self.ablation {
            GuidanceConfig {
                t_low: lo,
                t_high: hi,
                ..self.guidance.config
            }
            .validate()?;
        }
        if self.guidance.method == GuidanceKind::RepG && self.guidance.repg_k == 0 {
            return Err(Error::Config("repg_k must be positive".into()));
        }
        Ok(())
    }

    /// Guidance for sampling; RepG needs its representatives supplied.
    pub fn guidance(&self, repg: Option<RepGConfig>) -> Result<Option<Guidance>> {
        Ok(match self.guidance.method {
            GuidanceKind::None => None,
            GuidanceKind::RPred => Some(Guidance::rpred(self.guidance.config)),
            GuidanceKind::RepG => {
                let r = repg.ok_or(Error::Config("RepG guidance needs representatives".into()))?;
                Some(Guidance::repg(self.guidance.config, r))
            }
        })
    }

    /// The fully resolved configuration in the file format.
    pub fn to_ini(&self) -> String {
        let mut s = String::new();
        let g = &self.guidance.config;
        let v = &self.model.velocity;
        let p: &ProjectorConfig = &self.model.projector;
        let tr = &self.training;
        let sc = &self.sampler.config;
        let _ = write!(
            s,
            "[experiment]\nseed = {}\n{}\n\
             [dataset]\nname = {}\nnum_classes = {}\nsize = {}\nseed = {}\n\n\
             [model]\nwidth = {}\ndepth = {}\ntime_freqs = {}\nclass_dim = {}\ncfg_enabled = {}\n\
             projector_input = {}\nprojector_width = {}\nprojector_depth = {}\n\n\
             [encoder]\nhidden = {}\nrep_dim = {}\n\n\
             [training]\nsteps = {}\nbatch_size = {}\nlr = {:?}\nweight_decay = {:?}\nlambda_align = {:?}\n\
             cfg_dropout = {:?}\nencoder_steps = {}\nencoder_lr = {:?}\nencoder_batch_size = {}\nholdout = {}\n\
             min_encoder_accuracy = {:?}\n\n\
             [sampler]\nkind = {}\nnfe = {}\ncfg_scale = {:?}\nfinal_sde_step = {:?}\nsamples_per_class = {}\nchunk = {}\n\n\
             [guidance]\nmethod = {}\nalpha = {:?}\nt_low = {:?}\nt_high = {:?}\nupdates_per_step = {}\n\
             loss_mode = {}\nupdate_rule = {}\nadamw_lr = {:?}\nbackprop_through_velocity = {}\nrepg_k = {}\n\
             repg_selection = {}\n\n\
             [eval]\nreference_size = {}\nreference_seed = {}\n\n\
             [ablation]\nintervals = {}\n\n\
             [probe]\nt_grid = {}\nseeds = {}\nreferences = {}\nnfe = {}\ninclude_noisy_latent = {}\n",
            self.seed,
            self.checkpoint
                .as_ref()
                .map_or(String::new(), |p| format!("checkpoint = {}\n", p.display())),
            self.dataset.kind,
            self.dataset.num_classes,
            self.dataset.size,
            self.dataset.seed,
            v.width,
            v.depth,
            v.time_freqs,
            v.class_dim,
            v.cfg_enabled,
            projector_input_name(p.input),
            p.width,
            p.depth,
            self.encoder.hidden,
            self.encoder.rep_dim,
            tr.flow.steps,
            tr.flow.batch_size,
            tr.flow.lr,
            tr.flow.weight_decay,
            tr.flow.lambda_align,
            tr.flow.cfg_dropout,
            tr.encoder.steps,
            tr.encoder.lr,
            tr.encoder.batch_size,
            tr.holdout,
            tr.min_encoder_accuracy,
            sc.kind,
            sc.nfe,
            sc.cfg_scale,
            sc.final_sde_step,
            self.sampler.samples_per_class,
            self.sampler.chunk,
            self.guidance.method,
            g.alpha,
            g.t_low,
            g.t_high,
            g.updates_per_step,
            g.loss_mode,
            g.update_rule,
            g.adamw_lr,
            g.backprop_through_velocity,
            self.guidance.repg_k,
            self.guidance.repg_selection,
            self.eval.reference_size,
            self.eval.reference_seed,
            self.ablation
                .iter()
                .map(|(a, b)| format!("{a:?}:{b:?}"))
                .collect::<Vec<_>>()
                .join(", "),
            self.probe
                .t_grid
                .iter()
                .map(|t| format!("{t:?}"))
                .collect::<Vec<_>>()
                .join(", "),
            self.probe
                .seeds
                .iter()
                .map(|t| t.to_string())
                .collect::<Vec<_>>()
                .join(", "),
            self.probe.references,
            self.probe.nfe,
            self.probe.include_noisy_latent,
        );
        s
    }
}
