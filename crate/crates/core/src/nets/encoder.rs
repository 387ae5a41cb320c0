use rand::Rng;

use super::mlp::{Activation, Linear, Mlp};
use crate::autodiff::{Tape, Var};
use crate::error::{Error, Result};
use crate::tensor::Tensor;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct EncoderConfig {
    pub data_dim: usize,
    pub hidden: usize,
    pub rep_dim: usize,
    pub num_classes: usize,
}

impl Default for EncoderConfig {
    fn default() -> Self {
        EncoderConfig {
            data_dim: 2,
            hidden: 64,
            rep_dim: 16,
            num_classes: 8,
        }
    }
}

/// Representation encoder: a tanh trunk whose L2-normalized output is the
/// representation, followed by a linear classification head used only
/// during pretraining.
#[derive(Clone, Debug, PartialEq)]
pub struct Encoder {
    pub config: EncoderConfig,
    pub trunk: Mlp,
    pub head: Linear,
    frozen: bool,
}

#[derive(Clone, Debug)]
pub struct EncoderVars {
    pub trunk: Vec<Var>,
    pub head: [Var; 2],
}

impl Encoder {
    pub fn new(config: EncoderConfig, rng: &mut impl Rng) -> Self {
        let sizes = [config.data_dim, config.hidden, config.hidden, config.rep_dim];
        Encoder {
            config,
            trunk: Mlp::new(&sizes, Activation::Tanh, true, false, rng),
            head: Linear::new(config.rep_dim, config.num_classes, rng),
            frozen: false,
        }
    }

    pub fn rep_dim(&self) -> usize {
        self.config.rep_dim
    }

    pub fn is_frozen(&self) -> bool {
        self.frozen
    }

    pub fn freeze(&mut self) {
        self.frozen = true;
    }

    pub fn params(&self) -> Vec<&Tensor> {
        self.trunk
            .params()
            .chain([&self.head.weight, &self.head.bias])
            .collect()
    }

    /// Mutable parameter access; refused once the encoder is frozen.
    pub fn params_mut(&mut self) -> Result<Vec<&mut Tensor>> {
        if self.frozen {
            return Err(Error::Frozen);
        }
        Ok(self
            .trunk
            .params_mut()
            .chain([&mut self.head.weight, &mut self.head.bias])
            .collect())
    }

    pub fn named_params(&self) -> Vec<(String, &Tensor)> {
        let mut out = self.trunk.named_params("encoder.trunk");
        out.push(("encoder.head.weight".into(), &self.head.weight));
        out.push(("encoder.head.bias".into(), &self.head.bias));
        out
    }

    pub fn bind(&self, tape: &mut Tape, trainable: bool) -> EncoderVars {
        let trainable = trainable && !self.frozen;
        let mut bind = |t: &Tensor| {
            if trainable {
                tape.variable(t.clone())
            } else {
                tape.constant(t.clone())
            }
        };
        let head = [bind(&self.head.weight), bind(&self.head.bias)];
        EncoderVars {
            trunk: self.trunk.bind(tape, trainable),
            head,
        }
    }

    /// Unit-norm representation of each row of `x`.
    pub fn encode_on(&self, tape: &mut Tape, vars: &EncoderVars, x: Var) -> Result<Var> {
        let cols = tape.value(x).rows_cols().map(|(_, c)| c);
        if cols != Some(self.config.data_dim) {
            return Err(Error::shape("encode", tape.value(x).shape(), &[self.config.data_dim]));
        }
        let h = self.trunk.forward(tape, &vars.trunk, x)?.output;
        tape.normalize_rows(h)
    }

    pub fn logits_on(&self, tape: &mut Tape, vars: &EncoderVars, x: Var) -> Result<Var> {
        let rep = self.encode_on(tape, vars, x)?;
        let z = tape.matmul(rep, vars.head[0])?;
        tape.bias_add(z, vars.head[1])
    }

    /// Representations of `x` (`[rows, data_dim]` or a single `[data_dim]` row),
    /// computed off-tape.
    pub fn encode(&self, x: &Tensor) -> Result<Tensor> {
        let mut tape = Tape::no_grad();
        let vars = self.bind(&mut tape, false);
        let x2 = match x.shape() {
            [n] => Tensor::matrix(1, *n, x.data().to_vec())?,
            _ => x.clone(),
        };
        let xv = tape.constant(x2);
        let rep = self.encode_on(&mut tape, &vars, xv)?;
        let out = tape.value(rep).clone();
        if x.shape().len() == 1 {
            return Tensor::new(vec![self.config.rep_dim], out.into_data());
        }
        Ok(out)
    }

    /// Predicted class for each row of `x`.
    pub fn classify(&self, x: &Tensor) -> Result<Vec<usize>> {
        let mut tape = Tape::no_grad();
        let vars = self.bind(&mut tape, false);
        let xv = tape.constant(x.clone());
        let logits = self.logits_on(&mut tape, &vars, xv)?;
        Ok(tape
            .value(logits)
            .rows()
            .map(|r| {
                r.iter()
                    .enumerate()
                    .fold((0, f64::NEG_INFINITY), |best, (i, &v)| if v > best.1 { (i, v) } else { best })
                    .0
            })
            .collect())
    }
}
