//! Reverse-time integration from noise (`t = 1`) to data (`t = 0`).

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::guidance::{Guidance, GuidanceReport, GuidanceSession};
use crate::interpolant::Schedule;
use crate::nets::ModelBundle;
use crate::rng::{gaussian_vec, stream, Domain};
use crate::tensor::Tensor;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SamplerKind {
    Ode,
    Sde,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SamplerConfig {
    pub kind: SamplerKind,
    /// Number of solver steps.
    pub nfe: usize,
    /// Classifier-free guidance scale; 1 disables the unconditional branch.
    pub cfg_scale: f64,
    /// Length of the last SDE interval, which ends exactly at `t = 0`.
    pub final_sde_step: f64,
    pub seed: u64,
    pub record_trajectory: bool,
}

impl Default for SamplerConfig {
    fn default() -> Self {
        SamplerConfig {
            kind: SamplerKind::Ode,
            nfe: 250,
            cfg_scale: 1.0,
            final_sde_step: 0.04,
            seed: 0,
            record_trajectory: false,
        }
    }
}

impl SamplerConfig {
    pub fn validate(&self) -> Result<()> {
        if self.nfe < 2 {
            return Err(Error::Config(format!("nfe must be >= 2, got {}", self.nfe)));
        }
        if !(self.final_sde_step > 0.0 && self.final_sde_step < 1.0) {
            return Err(Error::Config(format!(
                "final_sde_step must lie in (0, 1), got {}",
                self.final_sde_step
            )));
        }
        if !(self.cfg_scale >= 0.0 && self.cfg_scale.is_finite()) {
            return Err(Error::Config(format!("cfg_scale must be >= 0, got {}", self.cfg_scale)));
        }
        Ok(())
    }

    /// The `nfe + 1` integration times, strictly decreasing from 1 to 0.
    ///
    /// ODE: `t_k = 1 - k / nfe`. SDE: uniform from 1 down to
    /// `final_sde_step` over `nfe - 1` steps, then one last step to 0.
    pub fn time_grid(&self) -> Vec<f64> {
        let n = self.nfe;
        match self.kind {
            SamplerKind::Ode => (0..=n).map(|k| 1.0 - k as f64 / n as f64).collect(),
            SamplerKind::Sde => {
                let last = self.final_sde_step;
                let h = (1.0 - last) / (n - 1) as f64;
                let mut grid: Vec<f64> = (0..n - 1).map(|k| 1.0 - k as f64 * h).collect();
                grid.push(last);
                grid.push(0.0);
                grid
            }
        }
    }

    /// `t_k - t_{k+1}` for every step.
    pub fn step_sizes(&self) -> Vec<f64> {
        self.time_grid().windows(2).map(|w| w[0] - w[1]).collect()
    }
}

/// One sampling chain: its RNG key and class (`None` = unconditional).
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Chain {
    pub id: u64,
    pub class: Option<usize>,
}

impl Chain {
    pub fn new(id: u64, class: Option<usize>) -> Self {
        Chain { id, class }
    }
}

/// Recorded `(t, x_t)` states of one chain.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Trajectory {
    pub states: Vec<(f64, Vec<f64>)>,
    /// Number of standard normal draws consumed.
    pub rng_cursor: u64,
}

#[derive(Clone, Debug)]
pub struct SampleOutput {
    /// `[chains, data_dim]`.
    pub finals: Tensor,
    pub trajectories: Vec<Trajectory>,
    pub reports: Vec<GuidanceReport>,
    /// Solver evaluations of the velocity network along one chain (guidance excluded).
    pub velocity_evals: usize,
    /// Step indices on which guidance ran.
    pub guided_steps: Vec<usize>,
}

/// `v_u + w (v_c - v_u)`; `w = 1` returns `v_c` and `w = 0` returns `v_u` exactly.
pub fn combine_cfg(v_cond: &Tensor, v_uncond: &Tensor, w: f64) -> Tensor {
    if w == 1.0 {
        return v_cond.clone();
    }
    if w == 0.0 {
        return v_uncond.clone();
    }
    let data = v_cond
        .data()
        .iter()
        .zip(v_uncond.data())
        .map(|(c, u)| u + w * (c - u))
        .collect();
    Tensor::new(v_cond.shape().to_vec(), data).unwrap()
}

/// Classifier-free guided velocity. Returns the velocity and the number of
/// network evaluations it took.
pub fn cfg_velocity(bundle: &ModelBundle, xt: &Tensor, t: f64, classes: &[Option<usize>], w: f64) -> Result<(Tensor, usize)> {
    if w == 1.0 {
        return Ok((bundle.velocity.velocity(xt, t, classes)?, 1));
    }
    if !bundle.velocity.config.cfg_enabled {
        return Err(Error::MissingNullClass);
    }
    let nulls = vec![None; classes.len()];
    let v_u = bundle.velocity.velocity(xt, t, &nulls)?;
    if w == 0.0 {
        return Ok((v_u, 1));
    }
    let v_c = bundle.velocity.velocity(xt, t, classes)?;
    Ok((combine_cfg(&v_c, &v_u, w), 2))
}

/// Explicit Euler step from `t` to `t - dt`: `x - dt v`.
pub fn ode_step(xt: &Tensor, dt: f64, v: &Tensor) -> Tensor {
    let data = xt.data().iter().zip(v.data()).map(|(x, v)| x - dt * v).collect();
    Tensor::new(xt.shape().to_vec(), data).unwrap()
}

/// Diffusion coefficient `w_t = sigma_t`, the noise coefficient `b(t)` of the schedule.
pub fn diffusion_coefficient(t: f64, schedule: &Schedule) -> f64 {
    schedule.b(t)
}

/// Euler–Maruyama step of the reverse SDE from `t` to `t - dt`.
///
/// With `x_t = a x0 + b eps` the noise estimate is
/// `eps_hat = (a v - a' x) / D` and the score is `s = -eps_hat / b`. The
/// SDE `dx = [v + w s] dt + sqrt(2 w) dW` shares the marginals of the
/// probability-flow ODE `dx = v dt`; its reverse step is
///
/// ```text
/// x <- x - dt (v - w s) + sqrt(2 w dt) z = x - dt (v + (w / b) eps_hat) + sqrt(2 w dt) z
/// ```
///
/// For the linear schedule with `w = b = t` the drift is `(2 - t) v + x`.
/// `noise = None` omits the stochastic term; `diffusion = 0` reduces to [`ode_step`].
pub fn sde_step(
    xt: &Tensor,
    t: f64,
    dt: f64,
    v: &Tensor,
    schedule: &Schedule,
    diffusion: f64,
    noise: Option<&[f64]>,
) -> Result<Tensor> {
    if !(t > 0.0 && t <= 1.0) {
        return Err(Error::TimeOutOfRange(t));
    }
    if let Some(z) = noise {
        if z.len() != xt.len() {
            return Err(Error::shape("sde_step", xt.shape(), &[z.len()]));
        }
    }
    let (cx, cv) = schedule.noise_coefficients(t)?;
    let ratio = diffusion / schedule.b(t);
    let amp = (2.0 * diffusion * dt).sqrt();
    let data = xt
        .data()
        .iter()
        .zip(v.data())
        .enumerate()
        .map(|(i, (&x, &v))| {
            let eps_hat = cx * x + cv * v;
            let drift = v + ratio * eps_hat;
            let stoch = noise.map_or(0.0, |z| amp * z[i]);
            x - dt * drift + stoch
        })
        .collect();
    Tensor::new(xt.shape().to_vec(), data)
}

/// Runs every chain as one batch. Chains are independent; per-chain RNG
/// keys make each chain's draws independent of the batch it is in.
pub fn sample_chains(
    bundle: &ModelBundle,
    chains: &[Chain],
    config: &SamplerConfig,
    guidance: Option<&Guidance>,
) -> Result<SampleOutput> {
    config.validate()?;
    if let Some(g) = guidance {
        g.config.validate()?;
    }
    let n = chains.len();
    let d = bundle.data_dim();
    let classes: Vec<Option<usize>> = chains.iter().map(|c| c.class).collect();
    for &c in &classes {
        bundle.velocity.embedding_row(c)?;
    }
    let grid = config.time_grid();
    let schedule = bundle.schedule;

    let mut x0 = Vec::with_capacity(n * d);
    for c in chains {
        x0.extend(gaussian_vec(&mut stream(config.seed, Domain::InitialNoise, c.id, 0), d));
    }
    let mut x = Tensor::matrix(n, d, x0)?;
    let mut cursor = d as u64;
    let mut trajectories = vec![Trajectory::default(); n];
    let record = |x: &Tensor, t: f64, trajectories: &mut Vec<Trajectory>| {
        for (traj, row) in trajectories.iter_mut().zip(x.rows()) {
            traj.states.push((t, row.to_vec()));
        }
    };
    if config.record_trajectory {
        record(&x, grid[0], &mut trajectories);
    }

    let mut session = guidance
        .filter(|g| g.is_active())
        .map(|g| GuidanceSession::new(bundle, g, chains, config));
    let mut evals = 0;
    for k in 0..config.nfe {
        let (t, t_next) = (grid[k], grid[k + 1]);
        let dt = t - t_next;
        if let Some(s) = session.as_mut() {
            s.apply(k, t, &mut x)?;
        }
        let (v, e) = cfg_velocity(bundle, &x, t, &classes, config.cfg_scale)?;
        evals += e;
        x = match config.kind {
            SamplerKind::Ode => ode_step(&x, dt, &v),
            SamplerKind::Sde => {
                let w = diffusion_coefficient(t, &schedule);
                if k + 1 == config.nfe {
                    sde_step(&x, t, dt, &v, &schedule, w, None)?
                } else {
                    let mut z = Vec::with_capacity(n * d);
                    for c in chains {
                        let mut rng = stream(config.seed, Domain::SdeNoise, c.id, k as u64);
                        z.extend(gaussian_vec(&mut rng, d));
                    }
                    cursor += d as u64;
                    sde_step(&x, t, dt, &v, &schedule, w, Some(&z))?
                }
            }
        };
        if config.record_trajectory {
            record(&x, t_next, &mut trajectories);
        }
    }
    for traj in &mut trajectories {
        traj.rng_cursor = cursor;
    }
    let (reports, guided_steps) = match session {
        Some(s) => s.finish(),
        None => (vec![GuidanceReport::default(); n], Vec::new()),
    };
    Ok(SampleOutput {
        finals: x,
        trajectories,
        reports,
        velocity_evals: evals,
        guided_steps,
    })
}

/// Samples a single chain (id 0).
pub fn sample(
    bundle: &ModelBundle,
    class_id: Option<usize>,
    config: &SamplerConfig,
    guidance: Option<&Guidance>,
) -> Result<(Tensor, Trajectory)> {
    let out = sample_chains(bundle, &[Chain::new(0, class_id)], config, guidance)?;
    let d = bundle.data_dim();
    let x = Tensor::new(vec![d], out.finals.into_data())?;
    Ok((x, out.trajectories.into_iter().next().unwrap()))
}

/// Deterministic Euler integration of `x` (rows at time `t`) down to 0 in
/// `ceil(nfe * t)` uniform steps.
pub fn integrate_from(bundle: &ModelBundle, x: &Tensor, t: f64, classes: &[Option<usize>], nfe: usize, cfg_scale: f64) -> Result<Tensor> {
    if !(0.0..=1.0).contains(&t) {
        return Err(Error::TimeOutOfRange(t));
    }
    let steps = (nfe as f64 * t).ceil() as usize;
    let mut x = x.clone();
    for k in 0..steps {
        let tk = t * (1.0 - k as f64 / steps as f64);
        let dt = t / steps as f64;
        let (v, _) = cfg_velocity(bundle, &x, tk, classes, cfg_scale)?;
        x = ode_step(&x, dt, &v);
    }
    Ok(x)
}

/// Splits `chains` into fixed-size batches sampled in parallel; the result
/// depends only on `chunk`, never on thread scheduling.
pub fn sample_parallel(
    bundle: &ModelBundle,
    chains: &[Chain],
    config: &SamplerConfig,
    guidance: Option<&Guidance>,
    chunk: usize,
) -> Result<SampleOutput> {
    let parts = chains
        .par_chunks(chunk.max(1))
        .map(|c| sample_chains(bundle, c, config, guidance))
        .collect::<Result<Vec<_>>>()?;
    let d = bundle.data_dim();
    let mut finals = Vec::with_capacity(chains.len() * d);
    let mut out = SampleOutput {
        finals: Tensor::zeros(vec![1, d]),
        trajectories: Vec::new(),
        reports: Vec::new(),
        velocity_evals: 0,
        guided_steps: Vec::new(),
    };
    for p in parts {
        finals.extend_from_slice(p.finals.data());
        out.trajectories.extend(p.trajectories);
        out.reports.extend(p.reports);
        // Every batch runs the same grid.
        out.velocity_evals = out.velocity_evals.max(p.velocity_evals);
        if out.guided_steps.is_empty() {
            out.guided_steps = p.guided_steps;
        }
    }
    out.finals = Tensor::matrix(chains.len(), d, finals)?;
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn cfg_combination() {
        let (c, u) = (Tensor::vector(vec![2.0]), Tensor::vector(vec![1.0]));
        assert_eq!(combine_cfg(&c, &u, 1.5).data(), &[2.5]);
        assert_eq!(combine_cfg(&c, &u, 1.0), c);
        assert_eq!(combine_cfg(&c, &u, 0.0), u);
    }

    #[test]
    fn euler_step_arithmetic() {
        let x = Tensor::vector(vec![1.0]);
        assert_eq!(ode_step(&x, 0.5, &Tensor::vector(vec![2.0])).data(), &[0.0]);
        assert_eq!(ode_step(&x, 0.5, &Tensor::vector(vec![0.0])), x);
    }

    #[test]
    fn constant_field_integrates_exactly() {
        let v = Tensor::vector(vec![0.5, -1.25]);
        for nfe in [2, 4, 8, 16, 250] {
            let cfg = SamplerConfig { nfe, ..SamplerConfig::default() };
            let mut x = Tensor::vector(vec![3.0, 1.0]);
            for dt in cfg.step_sizes() {
                x = ode_step(&x, dt, &v);
            }
            assert!((x.data()[0] - 2.5).abs() < 1e-12 && (x.data()[1] - 2.25).abs() < 1e-12);
        }
    }

    #[test]
    fn diffusion_equals_sigma() {
        assert_eq!(diffusion_coefficient(0.5, &Schedule::linear()), 0.5);
    }

    #[test]
    fn sde_without_diffusion_is_euler() {
        let x = Tensor::vector(vec![0.3, -1.0]);
        let v = Tensor::vector(vec![1.5, 2.0]);
        for s in Schedule::registered() {
            let out = sde_step(&x, 0.6, 0.01, &v, &s, 0.0, None).unwrap();
            assert_eq!(out, ode_step(&x, 0.01, &v));
        }
    }

    #[test]
    fn noise_free_linear_drift_reduces_by_hand() {
        // w = b = t: x - dt((2 - t) v + x).
        let (t, dt) = (0.6, 0.01);
        let x = Tensor::vector(vec![0.3, -1.0]);
        let v = Tensor::vector(vec![1.5, 2.0]);
        let out = sde_step(&x, t, dt, &v, &Schedule::linear(), t, None).unwrap();
        for i in 0..2 {
            let want = x.data()[i] - dt * ((2.0 - t) * v.data()[i] + x.data()[i]);
            assert!((out.data()[i] - want).abs() < 1e-15);
        }
    }

    #[test]
    fn sde_rejects_t_zero() {
        let x = Tensor::vector(vec![0.0]);
        assert!(sde_step(&x, 0.0, 0.1, &x, &Schedule::linear(), 0.0, None).is_err());
    }

    #[test]
    fn grids() {
        let ode = SamplerConfig::default();
        let g = ode.time_grid();
        assert_eq!(g.len(), 251);
        assert_eq!((g[0], g[250]), (1.0, 0.0));
        assert!(g.windows(2).all(|w| w[0] > w[1]));

        let sde = SamplerConfig {
            kind: SamplerKind::Sde,
            ..SamplerConfig::default()
        };
        let g = sde.time_grid();
        assert_eq!(g.len(), 251);
        assert!(g.windows(2).all(|w| w[0] > w[1]));
        assert_eq!(*sde.step_sizes().last().unwrap(), 0.04);
    }

    #[test]
    fn config_validation() {
        let bad = SamplerConfig { nfe: 1, ..SamplerConfig::default() };
        assert!(bad.validate().is_err());
        let bad = SamplerConfig {
            final_sde_step: 1.0,
            ..SamplerConfig::default()
        };
        assert!(bad.validate().is_err());
    }
}
