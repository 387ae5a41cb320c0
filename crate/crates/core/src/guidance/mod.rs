//! Representation guidance: gradient updates on the latent that pull the
//! encoder features of the one-step clean estimate toward a target.
//!
//! R-pred takes the target from the projector head of the velocity network,
//! recomputed from the current latent on every update. RepG takes it from a
//! fixed set of class-representative vectors.

mod repg;

use std::fmt;
use std::str::FromStr;

pub use repg::{build_representatives, nearest_to_mean, representatives_from_features, RepGConfig, Selection, DEFAULT_K};

use crate::autodiff::{Tape, Var};
use crate::error::{Error, Result};
use crate::interpolant::x0_estimate_on;
use crate::nets::{BundleVars, ModelBundle};
use crate::optim::{adamw_update_slice, AdamWConfig, AdamWState};
use crate::sampling::{cfg_velocity, Chain, SamplerConfig};
use crate::tensor::{self, Tensor};

/// Slack applied to both interval ends so grid points computed in floating
/// point land on the side they were meant to.
pub const INTERVAL_TOLERANCE: f64 = 1e-9;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum LossMode {
    /// `||phi(x0_hat) - target||^2`
    SquaredL2,
    /// `1 - cos(phi(x0_hat), target)`
    NegativeCosine,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum UpdateRule {
    PlainGd,
    AdamW,
}

impl FromStr for LossMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "squared_l2" => Ok(LossMode::SquaredL2),
            "negative_cosine" => Ok(LossMode::NegativeCosine),
            _ => Err(Error::Config(format!("unknown loss_mode `{s}`"))),
        }
    }
}

impl fmt::Display for LossMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            LossMode::SquaredL2 => "squared_l2",
            LossMode::NegativeCosine => "negative_cosine",
        })
    }
}

impl FromStr for UpdateRule {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "plain_gd" => Ok(UpdateRule::PlainGd),
            "adamw" => Ok(UpdateRule::AdamW),
            _ => Err(Error::Config(format!("unknown update_rule `{s}`"))),
        }
    }
}

impl fmt::Display for UpdateRule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            UpdateRule::PlainGd => "plain_gd",
            UpdateRule::AdamW => "adamw",
        })
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GuidanceConfig {
    /// Guidance strength. Zero disables guidance.
    pub alpha: f64,
    pub t_low: f64,
    pub t_high: f64,
    /// Zero disables guidance.
    pub updates_per_step: usize,
    pub loss_mode: LossMode,
    pub update_rule: UpdateRule,
    pub adamw_lr: f64,
    /// Differentiate through the velocity network when forming `x0_hat`.
    pub backprop_through_velocity: bool,
}

impl Default for GuidanceConfig {
    fn default() -> Self {
        GuidanceConfig {
            alpha: 1.0,
            t_low: 0.8,
            t_high: 0.9,
            updates_per_step: 1,
            loss_mode: LossMode::SquaredL2,
            update_rule: UpdateRule::AdamW,
            adamw_lr: 2e-4,
            backprop_through_velocity: true,
        }
    }
}

impl GuidanceConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.alpha.is_finite() && self.alpha >= 0.0) {
            return Err(Error::Config(format!("alpha must be finite and >= 0, got {}", self.alpha)));
        }
        if !(0.0 <= self.t_low && self.t_low <= self.t_high && self.t_high <= 1.0) {
            return Err(Error::Config(format!(
                "guidance interval must satisfy 0 <= t_low <= t_high <= 1, got [{}, {}]",
                self.t_low, self.t_high
            )));
        }
        if !(self.adamw_lr.is_finite() && self.adamw_lr >= 0.0) {
            return Err(Error::Config(format!("adamw_lr must be finite and >= 0, got {}", self.adamw_lr)));
        }
        Ok(())
    }

    /// Whether guidance can change anything at all.
    pub fn is_active(&self) -> bool {
        self.alpha != 0.0 && self.updates_per_step > 0
    }

    /// Inclusive interval test.
    pub fn contains(&self, t: f64) -> bool {
        t >= self.t_low - INTERVAL_TOLERANCE && t <= self.t_high + INTERVAL_TOLERANCE
    }

    /// Indices `k < nfe` of the sampler grid whose time lies in the interval.
    pub fn guided_steps(&self, sampler: &SamplerConfig) -> Vec<usize> {
        let grid = sampler.time_grid();
        (0..sampler.nfe).filter(|&k| self.contains(grid[k])).collect()
    }

    /// Single-step interval `[t - 1/nfe, t]`.
    pub fn single_step(self, t: f64, nfe: usize) -> Self {
        GuidanceConfig {
            t_low: t - 1.0 / nfe as f64,
            t_high: t,
            ..self
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum GuidanceMethod {
    RPred,
    RepG(RepGConfig),
}

#[derive(Clone, Debug, PartialEq)]
pub struct Guidance {
    pub config: GuidanceConfig,
    pub method: GuidanceMethod,
}

impl Guidance {
    pub fn rpred(config: GuidanceConfig) -> Self {
        Guidance {
            config,
            method: GuidanceMethod::RPred,
        }
    }

    /// RepG always scores with the cosine loss.
    pub fn repg(config: GuidanceConfig, repg: RepGConfig) -> Self {
        Guidance {
            config: GuidanceConfig {
                loss_mode: LossMode::NegativeCosine,
                ..config
            },
            method: GuidanceMethod::RepG(repg),
        }
    }

    pub fn is_active(&self) -> bool {
        self.config.is_active()
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GuidanceRecord {
    pub step: usize,
    pub t: f64,
    pub loss: f64,
    pub grad_norm: f64,
    pub cosine_to_target: f64,
}

/// Per-chain log with one record per latent update.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct GuidanceReport {
    pub records: Vec<GuidanceRecord>,
    /// Updates skipped because the gradient was not finite.
    pub skipped: usize,
}

impl GuidanceReport {
    pub fn to_csv(&self) -> String {
        let mut s = String::from("step,t,loss,grad_norm,cosine_to_target\n");
        for r in &self.records {
            s.push_str(&format!("{},{:e},{:e},{:e},{:e}\n", r.step, r.t, r.loss, r.grad_norm, r.cosine_to_target));
        }
        s
    }

    pub fn from_csv(text: &str) -> Result<Self> {
        let mut lines = text.lines();
        if lines.next() != Some("step,t,loss,grad_norm,cosine_to_target") {
            return Err(Error::Parse("guidance report header".into()));
        }
        let mut records = Vec::new();
        for line in lines.filter(|l| !l.is_empty()) {
            let f: Vec<&str> = line.split(',').collect();
            if f.len() != 5 {
                return Err(Error::Parse(format!("guidance report row `{line}`")));
            }
            let num = |s: &str| s.parse::<f64>().map_err(|e| Error::Parse(format!("`{s}`: {e}")));
            records.push(GuidanceRecord {
                step: f[0].parse().map_err(|e| Error::Parse(format!("`{}`: {e}", f[0])))?,
                t: num(f[1])?,
                loss: num(f[2])?,
                grad_norm: num(f[3])?,
                cosine_to_target: num(f[4])?,
            });
        }
        Ok(GuidanceReport { records, skipped: 0 })
    }

    /// Sum of the guidance loss over all updates of the run.
    pub fn trajectory_objective(&self) -> f64 {
        self.records.iter().map(|r| r.loss).sum()
    }
}

pub fn trajectory_objective(report: &GuidanceReport) -> f64 {
    report.trajectory_objective()
}

/// Detached target `F(h(x_t))` for each row.
pub fn predicted_target(bundle: &ModelBundle, xt: &Tensor, t: f64, classes: &[Option<usize>]) -> Result<Tensor> {
    bundle.predicted_target(xt, t, classes)
}

#[derive(Clone, Copy, Debug)]
pub struct RepLossVars {
    /// Sum of the per-row losses.
    pub total: Var,
    pub per_row: Var,
    /// `phi(x0_hat)`.
    pub rep: Var,
}

/// Velocity used for `x0_hat`, recorded on `tape` so it depends on `xt`.
fn velocity_on(
    tape: &mut Tape,
    bundle: &ModelBundle,
    vars: &BundleVars,
    xt: Var,
    t: f64,
    classes: &[Option<usize>],
    cfg_scale: f64,
) -> Result<Var> {
    let nulls = vec![None; classes.len()];
    let forward = |tape: &mut Tape, c: &[Option<usize>]| {
        bundle
            .velocity
            .forward_on(tape, &vars.velocity, xt, &[t], c)
            .map(|o| o.velocity)
    };
    if cfg_scale == 1.0 {
        return forward(tape, classes);
    }
    let v_u = forward(tape, &nulls)?;
    if cfg_scale == 0.0 {
        return Ok(v_u);
    }
    let v_c = forward(tape, classes)?;
    let diff = tape.sub(v_c, v_u)?;
    let scaled = tape.scale(diff, cfg_scale);
    tape.add(v_u, scaled)
}

/// Records the guidance loss of every row of `xt` against `target` on `tape`.
#[allow(clippy::too_many_arguments)]
pub fn rep_loss_on(
    tape: &mut Tape,
    bundle: &ModelBundle,
    vars: &BundleVars,
    xt: Var,
    t: f64,
    classes: &[Option<usize>],
    target: &Tensor,
    cfg: &GuidanceConfig,
    cfg_scale: f64,
) -> Result<RepLossVars> {
    let v = if cfg.backprop_through_velocity {
        velocity_on(tape, bundle, vars, xt, t, classes, cfg_scale)?
    } else {
        let (v, _) = cfg_velocity(bundle, tape.value(xt), t, classes, cfg_scale)?;
        tape.constant(v)
    };
    let x0 = x0_estimate_on(tape, xt, v, t, &bundle.schedule)?;
    let rep = bundle.encoder.encode_on(tape, &vars.encoder, x0)?;
    let target = tape.constant(target.clone());
    let per_row = match cfg.loss_mode {
        LossMode::SquaredL2 => {
            let d = tape.sub(rep, target)?;
            tape.row_sq_norm(d)?
        }
        LossMode::NegativeCosine => {
            let c = tape.cosine_similarity(rep, target)?;
            let neg = tape.scale(c, -1.0);
            tape.add_scalar(neg, 1.0)
        }
    };
    let total = tape.sum(per_row);
    Ok(RepLossVars { total, per_row, rep })
}

/// Scalar guidance loss summed over the rows of `xt`, off-tape.
pub fn rep_loss(
    bundle: &ModelBundle,
    xt: &Tensor,
    t: f64,
    classes: &[Option<usize>],
    target: &Tensor,
    cfg: &GuidanceConfig,
    cfg_scale: f64,
) -> Result<Tensor> {
    let mut tape = Tape::no_grad();
    let vars = bundle.bind(&mut tape);
    let x = tape.constant(xt.clone());
    let out = rep_loss_on(&mut tape, bundle, &vars, x, t, classes, target, cfg, cfg_scale)?;
    Ok(tape.value(out.total).clone())
}

/// Loss, gradient and diagnostics for a batch of latents.
#[derive(Clone, Debug, PartialEq)]
pub struct RepLossGrad {
    pub per_row: Vec<f64>,
    /// Row `i` of the `[n, d]` gradient is `d loss_i / d xt_i`.
    pub grad: Tensor,
    pub cosine: Vec<f64>,
}

pub fn rep_loss_grad(
    bundle: &ModelBundle,
    xt: &Tensor,
    t: f64,
    classes: &[Option<usize>],
    target: &Tensor,
    cfg: &GuidanceConfig,
    cfg_scale: f64,
) -> Result<RepLossGrad> {
    let mut tape = Tape::new();
    let vars = bundle.bind(&mut tape);
    let x = tape.variable(xt.clone());
    let out = rep_loss_on(&mut tape, bundle, &vars, x, t, classes, target, cfg, cfg_scale)?;
    tape.backward(out.total)?;
    let grad = Tensor::new(xt.shape().to_vec(), tape.grad(x).unwrap().to_vec())?;
    let cosine = tape
        .value(out.rep)
        .rows()
        .zip(target.rows())
        .map(|(a, b)| tensor::cosine(a, b))
        .collect();
    Ok(RepLossGrad {
        per_row: tape.value(out.per_row).data().to_vec(),
        grad,
        cosine,
    })
}

/// Moves one latent row against its gradient. `state` is used, and created
/// on first use, only under the AdamW rule, which receives `alpha * grad`.
/// A non-finite gradient leaves the latent untouched and is reported as an error.
pub fn guidance_update(xt: &mut [f64], grad: &[f64], cfg: &GuidanceConfig, state: &mut Option<AdamWState>) -> Result<()> {
    if xt.len() != grad.len() {
        return Err(Error::shape("guidance_update", &[xt.len()], &[grad.len()]));
    }
    if let Some(index) = grad.iter().position(|g| !g.is_finite()) {
        return Err(Error::NonFiniteGradient { index });
    }
    if cfg.alpha == 0.0 {
        return Ok(());
    }
    match cfg.update_rule {
        UpdateRule::PlainGd => {
            for (x, g) in xt.iter_mut().zip(grad) {
                *x -= cfg.alpha * g;
            }
            Ok(())
        }
        UpdateRule::AdamW => {
            let st = state.get_or_insert_with(|| {
                AdamWState::new(xt.len(), AdamWConfig::default().with_lr(cfg.adamw_lr))
            });
            let scaled: Vec<f64> = grad.iter().map(|g| cfg.alpha * g).collect();
            adamw_update_slice(xt, &scaled, st)
        }
    }
}

/// Per-run guidance state shared by all chains of one sampler batch:
/// optimizer moments and reports are kept per chain.
pub struct GuidanceSession<'a> {
    bundle: &'a ModelBundle,
    guidance: &'a Guidance,
    chains: Vec<Chain>,
    classes: Vec<Option<usize>>,
    seed: u64,
    cfg_scale: f64,
    optimizers: Vec<Option<AdamWState>>,
    reports: Vec<GuidanceReport>,
    guided_steps: Vec<usize>,
}

impl<'a> GuidanceSession<'a> {
    pub fn new(bundle: &'a ModelBundle, guidance: &'a Guidance, chains: &[Chain], sampler: &SamplerConfig) -> Self {
        let n = chains.len();
        GuidanceSession {
            bundle,
            guidance,
            chains: chains.to_vec(),
            classes: chains.iter().map(|c| c.class).collect(),
            seed: sampler.seed,
            cfg_scale: sampler.cfg_scale,
            optimizers: vec![None; n],
            reports: vec![GuidanceReport::default(); n],
            guided_steps: Vec::new(),
        }
    }

    /// Guides `x` in place if `t` lies in the interval.
    pub fn apply(&mut self, step: usize, t: f64, x: &mut Tensor) -> Result<()> {
        if !self.guidance.is_active() || !self.guidance.config.contains(t) {
            return Ok(());
        }
        self.guided_steps.push(step);
        match &self.guidance.method {
            GuidanceMethod::RPred => self.rpred_hook(step, t, x),
            GuidanceMethod::RepG(r) => self.repg_hook(step, t, x, r),
        }
    }

    /// `updates_per_step` rounds of: projector target, loss, latent update.
    pub fn rpred_hook(&mut self, step: usize, t: f64, x: &mut Tensor) -> Result<()> {
        for _ in 0..self.guidance.config.updates_per_step {
            let target = self.bundle.predicted_target(x, t, &self.classes)?;
            self.update(step, t, x, &target)?;
        }
        Ok(())
    }

    /// Like [`Self::rpred_hook`] with a class-representative target.
    pub fn repg_hook(&mut self, step: usize, t: f64, x: &mut Tensor, repg: &RepGConfig) -> Result<()> {
        let rows = self
            .chains
            .iter()
            .map(|c| repg.select(c.class, self.seed, c.id, step as u64))
            .collect::<Result<Vec<_>>>()?;
        let target = Tensor::from_rows(&rows)?;
        for _ in 0..self.guidance.config.updates_per_step {
            self.update(step, t, x, &target)?;
        }
        Ok(())
    }

    fn update(&mut self, step: usize, t: f64, x: &mut Tensor, target: &Tensor) -> Result<()> {
        let cfg = &self.guidance.config;
        let lg = rep_loss_grad(self.bundle, x, t, &self.classes, target, cfg, self.cfg_scale)?;
        let d = self.bundle.data_dim();
        for i in 0..self.chains.len() {
            let g = lg.grad.row(i);
            let row = &mut x.data_mut()[i * d..(i + 1) * d];
            match guidance_update(row, g, cfg, &mut self.optimizers[i]) {
                Ok(()) => {}
                Err(Error::NonFiniteGradient { .. }) => {
                    self.reports[i].skipped += 1;
                    continue;
                }
                Err(e) => return Err(e),
            }
            self.reports[i].records.push(GuidanceRecord {
                step,
                t,
                loss: lg.per_row[i],
                grad_norm: tensor::norm(g),
                cosine_to_target: lg.cosine[i],
            });
        }
        Ok(())
    }

    /// Per-chain reports and the guided step indices.
    pub fn finish(self) -> (Vec<GuidanceReport>, Vec<usize>) {
        (self.reports, self.guided_steps)
    }
}
