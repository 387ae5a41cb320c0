use rand::Rng;

use super::mlp::{Activation, Mlp};
use crate::autodiff::{Tape, Var};
use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// What the projector reads from the generation state.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ProjectorInput {
    /// Last hidden activation of the velocity network.
    Hidden,
    /// The raw `[x_t, time embedding, class embedding]` network input.
    Raw,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ProjectorConfig {
    pub input: ProjectorInput,
    pub width: usize,
    pub depth: usize,
    pub rep_dim: usize,
}

impl Default for ProjectorConfig {
    fn default() -> Self {
        ProjectorConfig {
            input: ProjectorInput::Hidden,
            width: 64,
            depth: 3,
            rep_dim: 16,
        }
    }
}

/// Maps intermediate generation features to a predicted clean representation.
#[derive(Clone, Debug, PartialEq)]
pub struct Projector {
    pub input: ProjectorInput,
    pub mlp: Mlp,
}

impl Projector {
    pub fn new(config: ProjectorConfig, in_dim: usize, rng: &mut impl Rng) -> Self {
        assert!(config.depth >= 1);
        let mut sizes = vec![in_dim];
        sizes.extend(std::iter::repeat(config.width).take(config.depth - 1));
        sizes.push(config.rep_dim);
        Projector {
            input: config.input,
            mlp: Mlp::new(&sizes, Activation::Silu, false, false, rng),
        }
    }

    pub fn rep_dim(&self) -> usize {
        self.mlp.output_dim()
    }

    pub fn in_dim(&self) -> usize {
        self.mlp.input_dim()
    }

    pub fn params(&self) -> Vec<&Tensor> {
        self.mlp.params().collect()
    }

    pub fn params_mut(&mut self) -> Vec<&mut Tensor> {
        self.mlp.params_mut().collect()
    }

    pub fn named_params(&self) -> Vec<(String, &Tensor)> {
        self.mlp.named_params("projector.mlp")
    }

    pub fn bind(&self, tape: &mut Tape, trainable: bool) -> Vec<Var> {
        self.mlp.bind(tape, trainable)
    }

    /// Predicted representation for each row of `features`.
    pub fn project_on(&self, tape: &mut Tape, vars: &[Var], features: Var) -> Result<Var> {
        let cols = tape.value(features).rows_cols().map(|(_, c)| c);
        if cols != Some(self.in_dim()) {
            return Err(Error::shape("project", tape.value(features).shape(), &[self.in_dim()]));
        }
        Ok(self.mlp.forward(tape, vars, features)?.output)
    }
}
