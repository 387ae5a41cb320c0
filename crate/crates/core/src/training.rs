//! Encoder pretraining and joint velocity + projector training.

use std::fmt::Write as _;

use rand::Rng;

use crate::autodiff::Tape;
use crate::data::{generate_range, ToyDataset};
use crate::error::{Error, Result};
use crate::nets::{Encoder, EncoderConfig, ModelBundle};
use crate::optim::{adamw_update, AdamWConfig, AdamWState};
use crate::rng::{gaussian, stream, Domain};
use crate::tensor::Tensor;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TrainConfig {
    pub batch_size: usize,
    pub steps: usize,
    pub lr: f64,
    pub weight_decay: f64,
    /// Weight of the projector alignment term.
    pub lambda_align: f64,
    /// Probability of replacing the class label with the null class.
    pub cfg_dropout: f64,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            batch_size: 256,
            steps: 5000,
            lr: 2e-3,
            weight_decay: 0.0,
            lambda_align: 0.5,
            cfg_dropout: 0.1,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.cfg_dropout) {
            return Err(Error::Config(format!("cfg_dropout {} not in [0, 1]", self.cfg_dropout)));
        }
        if !(self.lambda_align >= 0.0) {
            return Err(Error::Config(format!("lambda_align {} must be >= 0", self.lambda_align)));
        }
        if self.batch_size == 0 {
            return Err(Error::Config("batch_size must be positive".into()));
        }
        if !(self.lr >= 0.0) || !(self.weight_decay >= 0.0) {
            return Err(Error::Config("lr and weight_decay must be >= 0".into()));
        }
        Ok(())
    }

    fn adamw(&self) -> AdamWConfig {
        AdamWConfig {
            lr: self.lr,
            weight_decay: self.weight_decay,
            ..AdamWConfig::default()
        }
    }
}

/// Replaces `class` with the null class with probability `p`.
pub fn drop_class(rng: &mut impl Rng, class: usize, p: f64) -> Option<usize> {
    if p > 0.0 && rng.random::<f64>() < p {
        None
    } else {
        Some(class)
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LossRecord {
    pub step: usize,
    pub cfm_loss: f64,
    /// Mean negative cosine between projector output and encoder target.
    pub align_loss: f64,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct LossLog {
    pub records: Vec<LossRecord>,
}

impl LossLog {
    fn window(&self) -> usize {
        (self.records.len() / 10).clamp(1, 100)
    }

    /// CFM loss of the untrained model (first step).
    pub fn initial_cfm(&self) -> f64 {
        self.records[0].cfm_loss
    }

    /// Mean CFM loss over the last steps.
    pub fn final_cfm(&self) -> f64 {
        let w = self.window();
        let n = self.records.len();
        self.records[n - w..].iter().map(|r| r.cfm_loss).sum::<f64>() / w as f64
    }

    /// `step,cfm_loss,align_loss` CSV.
    pub fn to_csv(&self) -> String {
        let mut s = String::from("step,cfm_loss,align_loss\n");
        for r in &self.records {
            writeln!(s, "{},{},{}", r.step, r.cfm_loss, r.align_loss).unwrap();
        }
        s
    }

    pub fn from_csv(text: &str) -> Result<Self> {
        let mut lines = text.lines();
        if lines.next() != Some("step,cfm_loss,align_loss") {
            return Err(Error::Parse("loss log header".into()));
        }
        let records = lines
            .filter(|l| !l.is_empty())
            .map(|line| {
                let bad = || Error::Parse(format!("loss log row `{line}`"));
                let f: Vec<&str> = line.split(',').collect();
                if f.len() != 3 {
                    return Err(bad());
                }
                Ok(LossRecord {
                    step: f[0].parse().map_err(|_| bad())?,
                    cfm_loss: f[1].parse().map_err(|_| bad())?,
                    align_loss: f[2].parse().map_err(|_| bad())?,
                })
            })
            .collect::<Result<_>>()?;
        Ok(LossLog { records })
    }
}

fn check_finite(value: f64, step: usize) -> Result<f64> {
    if value.is_finite() {
        Ok(value)
    } else {
        Err(Error::NonFiniteLoss { step })
    }
}

/// Trains the velocity field and projector of `bundle` on `dataset`.
///
/// Minimizes `|v(x_t, t, c) - v_target|^2 - lambda_align * cos(F(h_t), phi(x0))`
/// with `phi` the frozen encoder and `t ~ U[0, 1]`.
pub fn train_flow(mut bundle: ModelBundle, dataset: &ToyDataset, cfg: &TrainConfig) -> Result<(ModelBundle, LossLog)> {
    cfg.validate()?;
    if !bundle.encoder.is_frozen() {
        return Err(Error::Config("the encoder must be frozen before flow training".into()));
    }
    if dataset.data_dim() != bundle.data_dim() {
        return Err(Error::shape("train_flow", &[dataset.data_dim()], &[bundle.data_dim()]));
    }
    if cfg.cfg_dropout > 0.0 && !bundle.velocity.config.cfg_enabled {
        return Err(Error::MissingNullClass);
    }
    let d = bundle.data_dim();
    let b = cfg.batch_size;
    let s = bundle.schedule;
    let mut velocity_states: Vec<AdamWState> = bundle
        .velocity
        .params()
        .iter()
        .map(|p| AdamWState::new(p.len(), cfg.adamw()))
        .collect();
    let mut projector_states: Vec<AdamWState> = bundle
        .projector
        .params()
        .iter()
        .map(|p| AdamWState::new(p.len(), cfg.adamw()))
        .collect();
    let mut log = LossLog::default();

    for step in 0..cfg.steps {
        let mut rng = stream(cfg.seed, Domain::TrainBatch, step as u64, 0);
        let idx: Vec<usize> = (0..b).map(|_| rng.random_range(0..dataset.len())).collect();
        let classes: Vec<Option<usize>> = idx
            .iter()
            .map(|&i| drop_class(&mut rng, dataset.labels[i], cfg.cfg_dropout))
            .collect();
        let times: Vec<f64> = (0..b).map(|_| rng.random::<f64>()).collect();
        let x0 = dataset.gather(&idx);
        let mut xt = Vec::with_capacity(b * d);
        let mut vt = Vec::with_capacity(b * d);
        for (row, &t) in x0.rows().zip(&times) {
            let (a, bt, ad, bd) = (s.a(t), s.b(t), s.a_dot(t), s.b_dot(t));
            for &x in row {
                let noise = gaussian(&mut rng);
                xt.push(a * x + bt * noise);
                vt.push(ad * x + bd * noise);
            }
        }
        let target_rep = bundle.encoder.encode(&x0)?;

        let mut tape = Tape::new();
        let vvars = bundle.velocity.bind(&mut tape, true);
        let pvars = bundle.projector.bind(&mut tape, true);
        let xt = tape.constant(Tensor::matrix(b, d, xt)?);
        let vt = tape.constant(Tensor::matrix(b, d, vt)?);
        let out = bundle.velocity.forward_on(&mut tape, &vvars, xt, &times, &classes)?;
        let diff = tape.sub(out.velocity, vt)?;
        let sq = tape.sq_norm(diff);
        let cfm = tape.scale(sq, 1.0 / b as f64);
        let features = bundle.projector_features(&out);
        let pred = bundle.projector.project_on(&mut tape, &pvars, features)?;
        let target = tape.constant(target_rep);
        let cos = tape.cosine_similarity(pred, target)?;
        let mean_cos = tape.mean(cos);
        let align = tape.scale(mean_cos, -cfg.lambda_align);
        let loss = tape.add(cfm, align)?;

        let cfm_value = check_finite(tape.value(cfm).item().unwrap(), step)?;
        let align_value = -tape.value(mean_cos).item().unwrap();
        check_finite(tape.value(loss).item().unwrap(), step)?;
        tape.backward(loss)?;

        let vgrad_vars = std::iter::once(vvars.class_embed).chain(vvars.mlp.iter().copied());
        for ((p, var), st) in bundle
            .velocity
            .params_mut()
            .into_iter()
            .zip(vgrad_vars)
            .zip(&mut velocity_states)
        {
            adamw_update(p, tape.grad(var).unwrap(), st)?;
        }
        for ((p, &var), st) in bundle
            .projector
            .params_mut()
            .into_iter()
            .zip(&pvars)
            .zip(&mut projector_states)
        {
            adamw_update(p, tape.grad(var).unwrap(), st)?;
        }
        log.records.push(LossRecord {
            step,
            cfm_loss: cfm_value,
            align_loss: align_value,
        });
    }
    Ok((bundle, log))
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EncoderReport {
    pub holdout_accuracy: f64,
    pub final_loss: f64,
}

/// Minimum held-out accuracy for an encoder to be accepted.
pub const MIN_ENCODER_ACCURACY: f64 = 0.95;

/// Held-out accuracy of the encoder's classification head.
pub fn accuracy(encoder: &Encoder, data: &ToyDataset) -> Result<f64> {
    let pred = encoder.classify(&data.points)?;
    let hits = pred.iter().zip(&data.labels).filter(|(p, l)| p == l).count();
    Ok(hits as f64 / data.len() as f64)
}

/// Pretrains a classifier on `dataset` and returns its frozen trunk as the
/// representation encoder.
///
/// The held-out split continues the dataset's index sequence. Fails when
/// held-out accuracy is below `min_accuracy`.
pub fn train_encoder(
    dataset: &ToyDataset,
    config: EncoderConfig,
    cfg: &TrainConfig,
    holdout: usize,
    min_accuracy: f64,
) -> Result<(Encoder, EncoderReport)> {
    cfg.validate()?;
    if config.num_classes != dataset.num_classes || config.data_dim != dataset.data_dim() {
        return Err(Error::Config("encoder config does not match the dataset".into()));
    }
    let mut encoder = Encoder::new(config, &mut stream(cfg.seed, Domain::Init, 0, 0));
    let mut states: Vec<AdamWState> = encoder
        .params()
        .iter()
        .map(|p| AdamWState::new(p.len(), cfg.adamw()))
        .collect();
    let b = cfg.batch_size;
    let k = config.num_classes;
    let mut final_loss = f64::NAN;
    for step in 0..cfg.steps {
        let mut rng = stream(cfg.seed, Domain::TrainBatch, step as u64, 1);
        let idx: Vec<usize> = (0..b).map(|_| rng.random_range(0..dataset.len())).collect();
        let mut onehot = vec![0.0; b * k];
        for (r, &i) in idx.iter().enumerate() {
            onehot[r * k + dataset.labels[i]] = 1.0;
        }
        let mut tape = Tape::new();
        let vars = encoder.bind(&mut tape, true);
        let x = tape.constant(dataset.gather(&idx));
        let logits = encoder.logits_on(&mut tape, &vars, x)?;
        let logp = tape.log_softmax(logits)?;
        let y = tape.constant(Tensor::matrix(b, k, onehot)?);
        let picked = tape.mul(logp, y)?;
        let total = tape.sum(picked);
        let loss = tape.scale(total, -1.0 / b as f64);
        final_loss = check_finite(tape.value(loss).item().unwrap(), step)?;
        tape.backward(loss)?;
        let vars_in_order: Vec<_> = vars.trunk.iter().copied().chain(vars.head).collect();
        for ((p, var), st) in encoder.params_mut()?.into_iter().zip(vars_in_order).zip(&mut states) {
            adamw_update(p, tape.grad(var).unwrap(), st)?;
        }
    }
    let held = generate_range(dataset.kind, dataset.num_classes, dataset.len() as u64, holdout.max(1), dataset.seed)?;
    let holdout_accuracy = accuracy(&encoder, &held)?;
    encoder.freeze();
    if holdout_accuracy < min_accuracy {
        return Err(Error::EncoderAccuracy {
            accuracy: holdout_accuracy,
            required: min_accuracy,
        });
    }
    Ok((
        encoder,
        EncoderReport {
            holdout_accuracy,
            final_loss,
        },
    ))
}
