use rand::Rng;

use crate::autodiff::{Tape, Var};
use crate::error::Result;
use crate::rng::gaussian;
use crate::tensor::Tensor;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Activation {
    Silu,
    Tanh,
}

impl Activation {
    pub(crate) fn apply(self, tape: &mut Tape, x: Var) -> Var {
        match self {
            Activation::Silu => tape.silu(x),
            Activation::Tanh => tape.tanh(x),
        }
    }
}

/// Dense layer `y = x W + b` with `W` stored as `[in, out]`.
#[derive(Clone, Debug, PartialEq)]
pub struct Linear {
    pub weight: Tensor,
    pub bias: Tensor,
}

impl Linear {
    pub fn new(fan_in: usize, fan_out: usize, rng: &mut impl Rng) -> Self {
        let std = (1.0 / fan_in as f64).sqrt();
        let w = (0..fan_in * fan_out).map(|_| std * gaussian(rng)).collect();
        Linear {
            weight: Tensor::matrix(fan_in, fan_out, w).unwrap(),
            bias: Tensor::zeros(vec![fan_out]),
        }
    }

    pub fn zeros(fan_in: usize, fan_out: usize) -> Self {
        Linear {
            weight: Tensor::zeros(vec![fan_in, fan_out]),
            bias: Tensor::zeros(vec![fan_out]),
        }
    }

    pub fn fan_in(&self) -> usize {
        self.weight.shape()[0]
    }

    pub fn fan_out(&self) -> usize {
        self.weight.shape()[1]
    }
}

/// Layer-by-layer output of an [`Mlp`] forward pass.
#[derive(Clone, Debug)]
pub struct MlpOutput {
    pub output: Var,
    /// Activation feeding the last layer (the input itself for a single layer).
    pub penultimate: Var,
}

/// Stack of dense layers with one activation between them.
#[derive(Clone, Debug, PartialEq)]
pub struct Mlp {
    pub layers: Vec<Linear>,
    pub activation: Activation,
    /// Whether the activation is also applied after the last layer.
    pub activate_output: bool,
}

impl Mlp {
    /// `sizes = [in, h1, ..., out]`. With `zero_last`, the final layer starts at zero.
    pub fn new(sizes: &[usize], activation: Activation, activate_output: bool, zero_last: bool, rng: &mut impl Rng) -> Self {
        assert!(sizes.len() >= 2, "an MLP needs at least one layer");
        let n = sizes.len() - 1;
        let layers = (0..n)
            .map(|i| {
                if zero_last && i == n - 1 {
                    Linear::zeros(sizes[i], sizes[i + 1])
                } else {
                    Linear::new(sizes[i], sizes[i + 1], rng)
                }
            })
            .collect();
        Mlp {
            layers,
            activation,
            activate_output,
        }
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].fan_in()
    }

    pub fn output_dim(&self) -> usize {
        self.layers.last().unwrap().fan_out()
    }

    pub fn depth(&self) -> usize {
        self.layers.len()
    }

    pub fn params(&self) -> impl Iterator<Item = &Tensor> {
        self.layers.iter().flat_map(|l| [&l.weight, &l.bias])
    }

    pub fn params_mut(&mut self) -> impl Iterator<Item = &mut Tensor> {
        self.layers.iter_mut().flat_map(|l| [&mut l.weight, &mut l.bias])
    }

    pub fn named_params(&self, prefix: &str) -> Vec<(String, &Tensor)> {
        self.layers
            .iter()
            .enumerate()
            .flat_map(|(i, l)| {
                [
                    (format!("{prefix}.layer{i}.weight"), &l.weight),
                    (format!("{prefix}.layer{i}.bias"), &l.bias),
                ]
            })
            .collect()
    }

    /// Records the parameters on `tape`, as gradient leaves when `trainable`.
    pub fn bind(&self, tape: &mut Tape, trainable: bool) -> Vec<Var> {
        self.params()
            .map(|p| {
                if trainable {
                    tape.variable(p.clone())
                } else {
                    tape.constant(p.clone())
                }
            })
            .collect()
    }

    pub fn forward(&self, tape: &mut Tape, params: &[Var], x: Var) -> Result<MlpOutput> {
        let mut h = x;
        let mut penultimate = x;
        let n = self.layers.len();
        for i in 0..n {
            if i == n - 1 {
                penultimate = h;
            }
            let z = tape.matmul(h, params[2 * i])?;
            h = tape.bias_add(z, params[2 * i + 1])?;
            if i < n - 1 || self.activate_output {
                h = self.activation.apply(tape, h);
            }
        }
        Ok(MlpOutput { output: h, penultimate })
    }
}
