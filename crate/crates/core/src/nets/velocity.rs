use rand::Rng;

use super::mlp::{Activation, Mlp};
use crate::autodiff::{Tape, Var};
use crate::error::{Error, Result};
use crate::rng::gaussian;
use crate::tensor::Tensor;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct VelocityConfig {
    pub data_dim: usize,
    pub num_classes: usize,
    /// Adds a trailing null-class embedding row for classifier-free guidance.
    pub cfg_enabled: bool,
    pub width: usize,
    /// Number of dense layers.
    pub depth: usize,
    /// Sinusoid frequency pairs in the time embedding.
    pub time_freqs: usize,
    pub class_dim: usize,
}

impl Default for VelocityConfig {
    fn default() -> Self {
        VelocityConfig {
            data_dim: 2,
            num_classes: 8,
            cfg_enabled: true,
            width: 128,
            depth: 5,
            time_freqs: 8,
            class_dim: 16,
        }
    }
}

impl VelocityConfig {
    pub fn input_dim(&self) -> usize {
        self.data_dim + 2 * self.time_freqs + self.class_dim
    }

    pub fn embedding_rows(&self) -> usize {
        self.num_classes + usize::from(self.cfg_enabled)
    }
}

/// `[sin(w_i t)..., cos(w_i t)...]` with geometric frequencies `w_i = 2^i`.
pub fn time_embedding(t: f64, freqs: usize) -> Vec<f64> {
    let ws = (0..freqs).map(|i| (1u64 << i) as f64 * t);
    ws.clone().map(f64::sin).chain(ws.map(f64::cos)).collect()
}

/// Class-conditional velocity field `v(x_t, t, c)`.
#[derive(Clone, Debug, PartialEq)]
pub struct VelocityNet {
    pub config: VelocityConfig,
    /// `[num_classes (+1 null), class_dim]`.
    pub class_embed: Tensor,
    pub mlp: Mlp,
}

/// Tape handles for a bound [`VelocityNet`].
#[derive(Clone, Debug)]
pub struct VelocityVars {
    pub class_embed: Var,
    pub mlp: Vec<Var>,
}

#[derive(Clone, Copy, Debug)]
pub struct VelocityOutput {
    pub velocity: Var,
    /// Last hidden activation, the projector's default input.
    pub hidden: Var,
    /// Concatenated `[x_t, time embedding, class embedding]` network input.
    pub input: Var,
}

impl VelocityNet {
    pub fn new(config: VelocityConfig, rng: &mut impl Rng) -> Self {
        assert!(config.depth >= 2, "velocity net needs a hidden layer");
        let mut sizes = vec![config.input_dim()];
        sizes.extend(std::iter::repeat(config.width).take(config.depth - 1));
        sizes.push(config.data_dim);
        let mlp = Mlp::new(&sizes, Activation::Silu, false, true, rng);
        let rows = config.embedding_rows();
        let emb = (0..rows * config.class_dim).map(|_| gaussian(rng)).collect();
        VelocityNet {
            config,
            class_embed: Tensor::matrix(rows, config.class_dim, emb).unwrap(),
            mlp,
        }
    }

    pub fn hidden_dim(&self) -> usize {
        self.config.width
    }

    /// Row of the class-embedding table for `class` (`None` = null class).
    pub fn embedding_row(&self, class: Option<usize>) -> Result<usize> {
        match class {
            Some(c) if c < self.config.num_classes => Ok(c),
            Some(c) => Err(Error::UnknownClass {
                class: c,
                num_classes: self.config.num_classes,
            }),
            None if self.config.cfg_enabled => Ok(self.config.num_classes),
            None => Err(Error::MissingNullClass),
        }
    }

    pub fn params(&self) -> Vec<&Tensor> {
        std::iter::once(&self.class_embed).chain(self.mlp.params()).collect()
    }

    pub fn params_mut(&mut self) -> Vec<&mut Tensor> {
        std::iter::once(&mut self.class_embed)
            .chain(self.mlp.params_mut())
            .collect()
    }

    pub fn named_params(&self) -> Vec<(String, &Tensor)> {
        let mut out = vec![("velocity.class_embed".to_string(), &self.class_embed)];
        out.extend(self.mlp.named_params("velocity.mlp"));
        out
    }

    pub fn bind(&self, tape: &mut Tape, trainable: bool) -> VelocityVars {
        let class_embed = if trainable {
            tape.variable(self.class_embed.clone())
        } else {
            tape.constant(self.class_embed.clone())
        };
        VelocityVars {
            class_embed,
            mlp: self.mlp.bind(tape, trainable),
        }
    }

    /// Builds the network input `[x_t, emb(t), emb(c)]` for each row of `xt`.
    pub fn input_on(
        &self,
        tape: &mut Tape,
        vars: &VelocityVars,
        xt: Var,
        times: &[f64],
        classes: &[Option<usize>],
    ) -> Result<Var> {
        let (rows, cols) = tape
            .value(xt)
            .rows_cols()
            .ok_or_else(|| Error::shape("velocity", tape.value(xt).shape(), &[]))?;
        if cols != self.config.data_dim || tape.value(xt).shape().len() != 2 {
            return Err(Error::shape("velocity", tape.value(xt).shape(), &[rows, self.config.data_dim]));
        }
        if classes.len() != rows || (times.len() != rows && times.len() != 1) {
            return Err(Error::shape("velocity", &[rows], &[times.len(), classes.len()]));
        }
        let freqs = self.config.time_freqs;
        let temb: Vec<f64> = if times.len() == 1 {
            let e = time_embedding(times[0], freqs);
            (0..rows).flat_map(|_| e.iter().copied()).collect()
        } else {
            times.iter().flat_map(|&t| time_embedding(t, freqs)).collect()
        };
        let temb = tape.constant(Tensor::matrix(rows, 2 * freqs, temb)?);
        let ids = classes
            .iter()
            .map(|&c| self.embedding_row(c))
            .collect::<Result<Vec<_>>>()?;
        let cemb = tape.gather_rows(vars.class_embed, &ids)?;
        tape.concat(&[xt, temb, cemb])
    }

    /// `xt` is `[rows, data_dim]`; `times` has one entry per row or a single shared entry.
    pub fn forward_on(
        &self,
        tape: &mut Tape,
        vars: &VelocityVars,
        xt: Var,
        times: &[f64],
        classes: &[Option<usize>],
    ) -> Result<VelocityOutput> {
        let input = self.input_on(tape, vars, xt, times, classes)?;
        let out = self.mlp.forward(tape, &vars.mlp, input)?;
        Ok(VelocityOutput {
            velocity: out.output,
            hidden: out.penultimate,
            input,
        })
    }

    /// Evaluates `v(x_t, t, c)` without recording gradients.
    pub fn velocity(&self, xt: &Tensor, t: f64, classes: &[Option<usize>]) -> Result<Tensor> {
        let mut tape = Tape::no_grad();
        let vars = self.bind(&mut tape, false);
        let x = tape.constant(xt.clone());
        let out = self.forward_on(&mut tape, &vars, x, &[t], classes)?;
        Ok(tape.value(out.velocity).clone())
    }
}
