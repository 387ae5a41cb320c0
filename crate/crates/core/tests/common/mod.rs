#![allow(dead_code)]

use rand::Rng;
use repguide::nets::{
    Encoder, EncoderConfig, ModelBundle, Projector, ProjectorConfig, ProjectorInput, VelocityConfig, VelocityNet,
};
use repguide::rng::{gaussian, stream, Domain};
use repguide::Tensor;
use repguide::interpolant::Schedule;

/// Small bundle with every parameter drawn at random, including layers that
/// normally start at zero.
pub fn tiny_bundle(seed: u64) -> ModelBundle {
    let mut rng = stream(seed, Domain::Synthetic, 99, 0);
    let encoder_cfg = EncoderConfig {
        data_dim: 2,
        hidden: 12,
        rep_dim: 6,
        num_classes: 3,
    };
    let mut encoder = Encoder::new(encoder_cfg, &mut rng);
    for p in encoder.params_mut().unwrap() {
        randomize(p, 0.8, &mut rng);
    }
    encoder.freeze();
    let vcfg = VelocityConfig {
        data_dim: 2,
        num_classes: 3,
        cfg_enabled: true,
        width: 10,
        depth: 3,
        time_freqs: 2,
        class_dim: 3,
    };
    let mut velocity = VelocityNet::new(vcfg, &mut rng);
    for p in velocity.params_mut() {
        randomize(p, 0.6, &mut rng);
    }
    let pcfg = ProjectorConfig {
        input: ProjectorInput::Hidden,
        width: 8,
        depth: 2,
        rep_dim: 6,
    };
    let projector = Projector::new(pcfg, velocity.hidden_dim(), &mut rng);
    ModelBundle::new(velocity, encoder, projector, Schedule::linear()).unwrap()
}

pub fn randomize(t: &mut Tensor, scale: f64, rng: &mut impl Rng) {
    for v in t.data_mut() {
        *v = scale * gaussian(rng);
    }
}

pub fn random_matrix(rows: usize, cols: usize, scale: f64, rng: &mut impl Rng) -> Tensor {
    Tensor::matrix(rows, cols, (0..rows * cols).map(|_| scale * gaussian(rng)).collect()).unwrap()
}

pub const FD_STEP: f64 = 1e-5;

/// Central finite differences of `f` at `x`.
pub fn finite_difference(x: &[f64], mut f: impl FnMut(&[f64]) -> f64) -> Vec<f64> {
    let mut probe = x.to_vec();
    (0..x.len())
        .map(|i| {
            let orig = probe[i];
            probe[i] = orig + FD_STEP;
            let up = f(&probe);
            probe[i] = orig - FD_STEP;
            let down = f(&probe);
            probe[i] = orig;
            (up - down) / (2.0 * FD_STEP)
        })
        .collect()
}

/// `|a - b| / max(|a|, |b|)` in the Euclidean norm; zero when both vanish.
pub fn relative_error(a: &[f64], b: &[f64]) -> f64 {
    assert_eq!(a.len(), b.len());
    let norm = |v: &[f64]| v.iter().map(|x| x * x).sum::<f64>().sqrt();
    let diff: Vec<f64> = a.iter().zip(b).map(|(x, y)| x - y).collect();
    let scale = norm(a).max(norm(b));
    if scale == 0.0 {
        0.0
    } else {
        norm(&diff) / scale
    }
}

pub fn bits(t: &Tensor) -> Vec<u64> {
    t.data().iter().map(|v| v.to_bits()).collect()
}
