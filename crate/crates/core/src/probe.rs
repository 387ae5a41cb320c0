//! How well does the clean representation survive noising?
//!
//! For reference points `x0`, noised to `x_t = a(t) x0 + b(t) z`, the probe
//! scores candidate reconstructions of `phi(x0)` by cosine similarity:
//!
//! * `one_step`: `phi(x0_hat(x_t))` from a single velocity evaluation,
//! * `projector`: the projector's prediction from the velocity net's hidden state,
//! * `full_denoise`: `phi` of the sample reached by integrating from `x_t` to 0,
//! * `noisy_latent` (optional): `phi(x_t)` itself.

use std::fmt;

use crate::data::ToyDataset;
use crate::error::{Error, Result};
use crate::interpolant::{interpolate, x0_estimate};
use crate::nets::ModelBundle;
use crate::rng::{gaussian_vec, stream, Domain};
use crate::sampling::integrate_from;
use crate::svg;
use crate::tensor::{cosine, Tensor};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Candidate {
    OneStep,
    Projector,
    FullDenoise,
    NoisyLatent,
}

impl fmt::Display for Candidate {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Candidate::OneStep => "one_step",
            Candidate::Projector => "projector",
            Candidate::FullDenoise => "full_denoise",
            Candidate::NoisyLatent => "noisy_latent",
        })
    }
}

impl std::str::FromStr for Candidate {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "one_step" => Ok(Candidate::OneStep),
            "projector" => Ok(Candidate::Projector),
            "full_denoise" => Ok(Candidate::FullDenoise),
            "noisy_latent" => Ok(Candidate::NoisyLatent),
            _ => Err(Error::Parse(format!("unknown probe candidate `{s}`"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ProbeConfig {
    pub t_grid: Vec<f64>,
    pub seeds: Vec<u64>,
    /// Reference points taken from the front of the dataset.
    pub references: usize,
    /// Step budget of a full `1 -> 0` integration for `full_denoise`.
    pub nfe: usize,
    pub include_noisy_latent: bool,
}

impl Default for ProbeConfig {
    fn default() -> Self {
        ProbeConfig {
            t_grid: (0..=10).map(|i| i as f64 / 10.0).collect(),
            seeds: vec![0, 1, 2],
            references: 128,
            nfe: 50,
            include_noisy_latent: false,
        }
    }
}

impl ProbeConfig {
    pub fn candidates(&self) -> Vec<Candidate> {
        let mut c = vec![Candidate::OneStep, Candidate::Projector, Candidate::FullDenoise];
        if self.include_noisy_latent {
            c.push(Candidate::NoisyLatent);
        }
        c
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ProbePoint {
    pub t: f64,
    pub seed: u64,
    pub candidate: Candidate,
    /// Mean cosine similarity to `phi(x0)` over the references.
    pub similarity: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ProbeCurves {
    pub points: Vec<ProbePoint>,
}

/// Lowest time from which the projector is expected to beat full denoising.
pub const DIRECTIONAL_T: f64 = 0.6;

impl ProbeCurves {
    /// Mean over seeds of `candidate` at each grid time.
    pub fn curve(&self, candidate: Candidate) -> Vec<(f64, f64)> {
        let mut out: Vec<(f64, f64, usize)> = Vec::new();
        for p in self.points.iter().filter(|p| p.candidate == candidate) {
            match out.iter_mut().find(|e| e.0 == p.t) {
                Some(e) => {
                    e.1 += p.similarity;
                    e.2 += 1;
                }
                None => out.push((p.t, p.similarity, 1)),
            }
        }
        out.into_iter().map(|(t, s, n)| (t, s / n as f64)).collect()
    }

    /// Whether the projector curve is at least the full-denoise curve at
    /// every grid time `t >= 0.6`.
    pub fn projector_beats_denoise(&self) -> bool {
        let full = self.curve(Candidate::FullDenoise);
        self.curve(Candidate::Projector)
            .iter()
            .zip(&full)
            .filter(|(p, _)| p.0 >= DIRECTIONAL_T - 1e-12)
            .all(|(p, f)| p.1 >= f.1)
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::from("t,seed,candidate,similarity\n");
        for p in &self.points {
            s.push_str(&format!("{:e},{},{},{:e}\n", p.t, p.seed, p.candidate, p.similarity));
        }
        s
    }

    pub fn from_csv(text: &str) -> Result<Self> {
        let mut lines = text.lines();
        if lines.next() != Some("t,seed,candidate,similarity") {
            return Err(Error::Parse("similarity probe header".into()));
        }
        let mut points = Vec::new();
        for line in lines.filter(|l| !l.is_empty()) {
            let f: Vec<&str> = line.split(',').collect();
            if f.len() != 4 {
                return Err(Error::Parse(format!("similarity probe row `{line}`")));
            }
            let bad = |e: &dyn fmt::Display| Error::Parse(format!("`{line}`: {e}"));
            points.push(ProbePoint {
                t: f[0].parse().map_err(|e| bad(&e))?,
                seed: f[1].parse().map_err(|e| bad(&e))?,
                candidate: f[2].parse()?,
                similarity: f[3].parse().map_err(|e| bad(&e))?,
            });
        }
        Ok(ProbeCurves { points })
    }

    pub fn to_svg(&self, candidates: &[Candidate]) -> String {
        let series: Vec<(String, Vec<(f64, f64)>)> = candidates.iter().map(|&c| (c.to_string(), self.curve(c))).collect();
        svg::lines("cosine similarity to phi(x0) vs t", &series)
    }
}

fn mean_cosine(a: &Tensor, b: &Tensor) -> f64 {
    let n = a.rows_cols().map_or(1, |(n, _)| n);
    a.rows().zip(b.rows()).map(|(x, y)| cosine(x, y)).sum::<f64>() / n as f64
}

pub fn similarity_probe(bundle: &ModelBundle, dataset: &ToyDataset, cfg: &ProbeConfig) -> Result<ProbeCurves> {
    let n = cfg.references.min(dataset.len());
    if n == 0 {
        return Err(Error::Config("similarity probe needs at least one reference".into()));
    }
    let idx: Vec<usize> = (0..n).collect();
    let x0 = dataset.gather(&idx);
    let classes: Vec<Option<usize>> = dataset.labels[..n].iter().map(|&c| Some(c)).collect();
    let reference = bundle.encoder.encode(&x0)?;
    let d = dataset.data_dim();
    let s = bundle.schedule;
    let mut points = Vec::new();
    for &t in &cfg.t_grid {
        for &seed in &cfg.seeds {
            let mut z = Vec::with_capacity(n * d);
            for i in 0..n as u64 {
                z.extend(gaussian_vec(&mut stream(seed, Domain::Probe, i, 0), d));
            }
            let z = Tensor::matrix(n, d, z)?;
            let xt = interpolate(&x0, &z, t, &s)?;
            for c in cfg.candidates() {
                let rep = match c {
                    Candidate::OneStep => {
                        let v = bundle.velocity.velocity(&xt, t, &classes)?;
                        bundle.encoder.encode(&x0_estimate(&xt, &v, t, &s)?)?
                    }
                    Candidate::Projector => bundle.predicted_target(&xt, t, &classes)?,
                    Candidate::FullDenoise => bundle.encoder.encode(&integrate_from(bundle, &xt, t, &classes, cfg.nfe, 1.0)?)?,
                    Candidate::NoisyLatent => bundle.encoder.encode(&xt)?,
                };
                points.push(ProbePoint {
                    t,
                    seed,
                    candidate: c,
                    similarity: mean_cosine(&rep, &reference),
                });
            }
        }
    }
    Ok(ProbeCurves { points })
}
