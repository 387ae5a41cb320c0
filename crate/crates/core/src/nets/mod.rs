//! The velocity field, the frozen representation encoder, the alignment
//! projector, and their checkpoint format.

pub mod checkpoint;
mod encoder;
mod mlp;
mod projector;
mod velocity;

use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub use checkpoint::Checkpoint;
pub use encoder::{Encoder, EncoderConfig, EncoderVars};
pub use mlp::{Activation, Linear, Mlp, MlpOutput};
pub use projector::{Projector, ProjectorConfig, ProjectorInput};
pub use velocity::{time_embedding, VelocityConfig, VelocityNet, VelocityOutput, VelocityVars};

use crate::autodiff::{Tape, Var};
use crate::error::{Error, Result};
use crate::interpolant::Schedule;
use crate::rng::{stream, Domain};
use crate::tensor::Tensor;

/// Architecture of the trainable part of a bundle.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ModelConfig {
    pub velocity: VelocityConfig,
    pub projector: ProjectorConfig,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            velocity: VelocityConfig::default(),
            projector: ProjectorConfig::default(),
        }
    }
}

/// Velocity field, frozen encoder and projector under one interpolation schedule.
#[derive(Clone, Debug, PartialEq)]
pub struct ModelBundle {
    pub velocity: VelocityNet,
    pub encoder: Encoder,
    pub projector: Projector,
    pub schedule: Schedule,
}

/// Tape handles for every network of a bundle.
#[derive(Clone, Debug)]
pub struct BundleVars {
    pub velocity: VelocityVars,
    pub encoder: EncoderVars,
    pub projector: Vec<Var>,
}

impl ModelBundle {
    /// Checks that the three networks agree on data and representation dimensions.
    pub fn new(velocity: VelocityNet, encoder: Encoder, projector: Projector, schedule: Schedule) -> Result<Self> {
        let vc = velocity.config;
        if encoder.config.data_dim != vc.data_dim {
            return Err(Error::Config(format!(
                "encoder data dim {} != velocity data dim {}",
                encoder.config.data_dim, vc.data_dim
            )));
        }
        if projector.rep_dim() != encoder.rep_dim() {
            return Err(Error::Config(format!(
                "projector output {} != encoder rep_dim {}",
                projector.rep_dim(),
                encoder.rep_dim()
            )));
        }
        let want_in = match projector.input {
            ProjectorInput::Hidden => velocity.hidden_dim(),
            ProjectorInput::Raw => vc.input_dim(),
        };
        if projector.in_dim() != want_in {
            return Err(Error::Config(format!(
                "projector input {} != {want_in} features",
                projector.in_dim()
            )));
        }
        Ok(ModelBundle {
            velocity,
            encoder,
            projector,
            schedule,
        })
    }

    /// Fresh velocity net and projector around an existing encoder.
    pub fn init(config: ModelConfig, encoder: Encoder, seed: u64) -> Result<Self> {
        let mut rng = stream(seed, Domain::Init, 1, 0);
        let velocity = VelocityNet::new(config.velocity, &mut rng);
        let in_dim = match config.projector.input {
            ProjectorInput::Hidden => velocity.hidden_dim(),
            ProjectorInput::Raw => config.velocity.input_dim(),
        };
        let projector = Projector::new(config.projector, in_dim, &mut rng);
        ModelBundle::new(velocity, encoder, projector, Schedule::linear())
    }

    pub fn config(&self) -> ModelConfig {
        let mlp = &self.projector.mlp;
        ModelConfig {
            velocity: self.velocity.config,
            projector: ProjectorConfig {
                input: self.projector.input,
                width: if mlp.depth() > 1 { mlp.layers[0].fan_out() } else { 0 },
                depth: mlp.depth(),
                rep_dim: self.projector.rep_dim(),
            },
        }
    }

    pub fn data_dim(&self) -> usize {
        self.velocity.config.data_dim
    }

    pub fn num_classes(&self) -> usize {
        self.velocity.config.num_classes
    }

    pub fn rep_dim(&self) -> usize {
        self.encoder.rep_dim()
    }

    pub fn bind(&self, tape: &mut Tape) -> BundleVars {
        BundleVars {
            velocity: self.velocity.bind(tape, false),
            encoder: self.encoder.bind(tape, false),
            projector: self.projector.bind(tape, false),
        }
    }

    /// Projector features for a completed velocity forward pass.
    pub fn projector_features(&self, out: &VelocityOutput) -> Var {
        match self.projector.input {
            ProjectorInput::Hidden => out.hidden,
            ProjectorInput::Raw => out.input,
        }
    }

    /// Predicted clean representation for each row of `xt`, off-tape and
    /// scaled to unit norm like the encoder's output.
    pub fn predicted_target(&self, xt: &Tensor, t: f64, classes: &[Option<usize>]) -> Result<Tensor> {
        let mut tape = Tape::no_grad();
        let vars = self.bind(&mut tape);
        let x = tape.constant(xt.clone());
        let out = self.velocity.forward_on(&mut tape, &vars.velocity, x, &[t], classes)?;
        let features = self.projector_features(&out);
        let p = self.projector.project_on(&mut tape, &vars.projector, features)?;
        let p = tape.normalize_rows(p)?;
        Ok(tape.value(p).clone())
    }

    pub fn to_checkpoint(&self) -> Checkpoint {
        let mut c = Checkpoint::default();
        push_encoder_meta(&mut c, &self.encoder);
        let vc = self.velocity.config;
        let schedule = match self.schedule.name() {
            "linear" => 0.0,
            _ => 1.0,
        };
        c.push(
            "meta.velocity",
            &[8],
            &[
                vc.data_dim as f64,
                vc.num_classes as f64,
                f64::from(u8::from(vc.cfg_enabled)),
                vc.width as f64,
                vc.depth as f64,
                vc.time_freqs as f64,
                vc.class_dim as f64,
                schedule,
            ],
        );
        let pc = self.config().projector;
        let input = match pc.input {
            ProjectorInput::Hidden => 0.0,
            ProjectorInput::Raw => 1.0,
        };
        c.push(
            "meta.projector",
            &[4],
            &[input, pc.width as f64, pc.depth as f64, pc.rep_dim as f64],
        );
        push_params(&mut c, self.encoder.named_params());
        push_params(&mut c, self.velocity.named_params());
        push_params(&mut c, self.projector.named_params());
        c
    }

    pub fn from_checkpoint(c: &Checkpoint) -> Result<Self> {
        let encoder = encoder_from_checkpoint(c)?;
        let v = meta(c, "meta.velocity", 8)?;
        let velocity_cfg = VelocityConfig {
            data_dim: v[0],
            num_classes: v[1],
            cfg_enabled: v[2] != 0,
            width: v[3],
            depth: v[4],
            time_freqs: v[5],
            class_dim: v[6],
        };
        let schedule = if v[7] == 0 { Schedule::linear() } else { Schedule::cosine() };
        let p = meta(c, "meta.projector", 4)?;
        let projector_cfg = ProjectorConfig {
            input: if p[0] == 0 { ProjectorInput::Hidden } else { ProjectorInput::Raw },
            width: p[1],
            depth: p[2],
            rep_dim: p[3],
        };
        if velocity_cfg.depth < 2
            || projector_cfg.depth < 1
            || [v[0], v[1], v[3], v[6], p[3]].contains(&0)
        {
            return Err(Error::Checkpoint("invalid network depth".into()));
        }
        let mut bundle = ModelBundle::init(
            ModelConfig {
                velocity: velocity_cfg,
                projector: projector_cfg,
            },
            encoder,
            0,
        )?;
        bundle.schedule = schedule;
        fill(c, &mut bundle.velocity.named_params_mut())?;
        fill(c, &mut bundle.projector.named_params_mut())?;
        let expected = 3 + bundle.encoder.named_params().len()
            + bundle.velocity.named_params().len()
            + bundle.projector.named_params().len();
        if c.entries.len() != expected {
            return Err(Error::Checkpoint(format!(
                "expected {expected} entries, found {}",
                c.entries.len()
            )));
        }
        Ok(bundle)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        write_bytes(path, &self.to_checkpoint().to_bytes()?)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        ModelBundle::from_checkpoint(&Checkpoint::from_bytes(&bytes)?)
    }
}

impl Encoder {
    pub fn to_checkpoint(&self) -> Checkpoint {
        let mut c = Checkpoint::default();
        push_encoder_meta(&mut c, self);
        push_params(&mut c, self.named_params());
        c
    }

    pub fn from_checkpoint(c: &Checkpoint) -> Result<Self> {
        let enc = encoder_from_checkpoint(c)?;
        let expected = 1 + enc.named_params().len();
        if c.entries.len() != expected {
            return Err(Error::Checkpoint(format!(
                "expected {expected} encoder entries, found {}",
                c.entries.len()
            )));
        }
        Ok(enc)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        write_bytes(path, &self.to_checkpoint().to_bytes()?)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        Encoder::from_checkpoint(&Checkpoint::from_bytes(&bytes)?)
    }
}

fn write_bytes(path: &Path, bytes: &[u8]) -> Result<()> {
    std::fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

fn push_encoder_meta(c: &mut Checkpoint, e: &Encoder) {
    let ec = e.config;
    c.push(
        "meta.encoder",
        &[5],
        &[
            ec.data_dim as f64,
            ec.hidden as f64,
            ec.rep_dim as f64,
            ec.num_classes as f64,
            f64::from(u8::from(e.is_frozen())),
        ],
    );
}

fn push_params(c: &mut Checkpoint, params: Vec<(String, &Tensor)>) {
    for (name, t) in params {
        c.push(name, t.shape(), t.data());
    }
}

fn meta(c: &Checkpoint, name: &str, len: usize) -> Result<Vec<usize>> {
    let e = c
        .get(name)
        .ok_or_else(|| Error::Checkpoint(format!("missing `{name}`")))?;
    if e.data.len() != len {
        return Err(Error::Checkpoint(format!("`{name}` must hold {len} values")));
    }
    Ok(e.data.iter().map(|&v| v as usize).collect())
}

fn encoder_from_checkpoint(c: &Checkpoint) -> Result<Encoder> {
    let m = meta(c, "meta.encoder", 5)?;
    let config = EncoderConfig {
        data_dim: m[0],
        hidden: m[1],
        rep_dim: m[2],
        num_classes: m[3],
    };
    if m[..4].contains(&0) {
        return Err(Error::Checkpoint("zero encoder dimension".into()));
    }
    let mut enc = Encoder::new(config, &mut ChaCha8Rng::seed_from_u64(0));
    fill(c, &mut enc.params_mut_named())?;
    if m[4] != 0 {
        enc.freeze();
    }
    Ok(enc)
}

fn fill(c: &Checkpoint, params: &mut [(String, &mut Tensor)]) -> Result<()> {
    for (name, t) in params.iter_mut() {
        let e = c
            .get(name)
            .ok_or_else(|| Error::Checkpoint(format!("missing `{name}`")))?;
        if e.shape != t.shape() {
            return Err(Error::Checkpoint(format!(
                "`{name}` has shape {:?}, expected {:?}",
                e.shape,
                t.shape()
            )));
        }
        t.data_mut()
            .iter_mut()
            .zip(&e.data)
            .for_each(|(d, &s)| *d = f64::from(s));
    }
    Ok(())
}

impl VelocityNet {
    fn named_params_mut(&mut self) -> Vec<(String, &mut Tensor)> {
        let names: Vec<String> = self.named_params().into_iter().map(|(n, _)| n).collect();
        names.into_iter().zip(self.params_mut()).collect()
    }
}

impl Projector {
    fn named_params_mut(&mut self) -> Vec<(String, &mut Tensor)> {
        let names: Vec<String> = self.named_params().into_iter().map(|(n, _)| n).collect();
        names.into_iter().zip(self.params_mut()).collect()
    }
}

impl Encoder {
    fn params_mut_named(&mut self) -> Vec<(String, &mut Tensor)> {
        let names: Vec<String> = self.named_params().into_iter().map(|(n, _)| n).collect();
        names
            .into_iter()
            .zip(self.params_mut().expect("fresh encoder is not frozen"))
            .collect()
    }
}
