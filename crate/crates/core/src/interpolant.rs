//! Affine conditional flows `x_t = a(t) x0 + b(t) x1`.
//!
//! Time runs from clean data at `t = 0` to Gaussian noise at `t = 1`.

use crate::autodiff::{Tape, Var};
use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// Determinants smaller than this make the clean-sample inversion ill-posed.
pub const MIN_DETERMINANT: f64 = 1e-9;

/// Interpolation coefficients with analytic time derivatives.
#[derive(Clone, Copy)]
pub struct Schedule {
    name: &'static str,
    a: fn(f64) -> f64,
    b: fn(f64) -> f64,
    a_dot: fn(f64) -> f64,
    b_dot: fn(f64) -> f64,
}

impl std::fmt::Debug for Schedule {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Schedule").field("name", &self.name).finish()
    }
}

impl PartialEq for Schedule {
    fn eq(&self, other: &Self) -> bool {
        self.name == other.name
    }
}

impl Schedule {
    /// `a = 1 - t`, `b = t`: rectified flow.
    pub fn linear() -> Self {
        Schedule {
            name: "linear",
            a: |t| 1.0 - t,
            b: |t| t,
            a_dot: |_| -1.0,
            b_dot: |_| 1.0,
        }
    }

    /// `a = cos(pi t / 2)`, `b = sin(pi t / 2)`.
    pub fn cosine() -> Self {
        use std::f64::consts::FRAC_PI_2;
        Schedule {
            name: "cosine",
            a: |t| (FRAC_PI_2 * t).cos(),
            b: |t| (FRAC_PI_2 * t).sin(),
            a_dot: |t| -FRAC_PI_2 * (FRAC_PI_2 * t).sin(),
            b_dot: |t| FRAC_PI_2 * (FRAC_PI_2 * t).cos(),
        }
    }

    pub fn custom(
        name: &'static str,
        a: fn(f64) -> f64,
        b: fn(f64) -> f64,
        a_dot: fn(f64) -> f64,
        b_dot: fn(f64) -> f64,
    ) -> Self {
        Schedule {
            name,
            a,
            b,
            a_dot,
            b_dot,
        }
    }

    /// Every built-in schedule.
    pub fn registered() -> [Schedule; 2] {
        [Schedule::linear(), Schedule::cosine()]
    }

    pub fn by_name(name: &str) -> Option<Schedule> {
        Schedule::registered().into_iter().find(|s| s.name == name)
    }

    pub fn name(&self) -> &'static str {
        self.name
    }

    pub fn a(&self, t: f64) -> f64 {
        (self.a)(t)
    }

    pub fn b(&self, t: f64) -> f64 {
        (self.b)(t)
    }

    pub fn a_dot(&self, t: f64) -> f64 {
        (self.a_dot)(t)
    }

    pub fn b_dot(&self, t: f64) -> f64 {
        (self.b_dot)(t)
    }

    /// `a(t) b'(t) - a'(t) b(t)`.
    pub fn determinant(&self, t: f64) -> f64 {
        self.a(t) * self.b_dot(t) - self.a_dot(t) * self.b(t)
    }

    /// Coefficients `(cx, cv)` with `x0_hat = cx * x_t + cv * v`.
    pub fn inversion_coefficients(&self, t: f64) -> Result<(f64, f64)> {
        let det = self.determinant(t);
        if det.abs() < MIN_DETERMINANT {
            return Err(Error::DegenerateSchedule { t, det });
        }
        Ok((self.b_dot(t) / det, -self.b(t) / det))
    }

    /// Coefficients `(cx, cv)` with `x1_hat = cx * x_t + cv * v`.
    pub fn noise_coefficients(&self, t: f64) -> Result<(f64, f64)> {
        let det = self.determinant(t);
        if det.abs() < MIN_DETERMINANT {
            return Err(Error::DegenerateSchedule { t, det });
        }
        Ok((-self.a_dot(t) / det, self.a(t) / det))
    }
}

fn check(x0: &Tensor, x1: &Tensor, t: f64, op: &'static str) -> Result<()> {
    if x0.shape() != x1.shape() {
        return Err(Error::shape(op, x0.shape(), x1.shape()));
    }
    if !(0.0..=1.0).contains(&t) {
        return Err(Error::TimeOutOfRange(t));
    }
    Ok(())
}

fn combine(ca: f64, a: &Tensor, cb: f64, b: &Tensor) -> Tensor {
    let data = a.data().iter().zip(b.data()).map(|(x, y)| ca * x + cb * y).collect();
    Tensor::new(a.shape().to_vec(), data).unwrap()
}

/// `a(t) x0 + b(t) x1`.
pub fn interpolate(x0: &Tensor, x1: &Tensor, t: f64, s: &Schedule) -> Result<Tensor> {
    check(x0, x1, t, "interpolate")?;
    Ok(combine(s.a(t), x0, s.b(t), x1))
}

/// `a'(t) x0 + b'(t) x1`, the velocity of the conditional path.
pub fn conditional_velocity(x0: &Tensor, x1: &Tensor, t: f64, s: &Schedule) -> Result<Tensor> {
    check(x0, x1, t, "conditional_velocity")?;
    Ok(combine(s.a_dot(t), x0, s.b_dot(t), x1))
}

/// One-step clean estimate `(b'(t) x_t - b(t) v) / D(t)`.
pub fn x0_estimate(xt: &Tensor, v: &Tensor, t: f64, s: &Schedule) -> Result<Tensor> {
    check(xt, v, t, "x0_estimate")?;
    let (cx, cv) = s.inversion_coefficients(t)?;
    Ok(combine(cx, xt, cv, v))
}

/// [`x0_estimate`] recorded on a tape, differentiable in both `xt` and `v`.
pub fn x0_estimate_on(tape: &mut Tape, xt: Var, v: Var, t: f64, s: &Schedule) -> Result<Var> {
    if !(0.0..=1.0).contains(&t) {
        return Err(Error::TimeOutOfRange(t));
    }
    let (cx, cv) = s.inversion_coefficients(t)?;
    let sx = tape.scale(xt, cx);
    let sv = tape.scale(v, cv);
    tape.add(sx, sv)
}

/// Regression pair for conditional flow matching: the network input `x_t`
/// and its velocity target.
pub fn cfm_target(x0: &Tensor, x1: &Tensor, t: f64, s: &Schedule) -> Result<(Tensor, Tensor)> {
    Ok((interpolate(x0, x1, t, s)?, conditional_velocity(x0, x1, t, s)?))
}

/// Squared-error flow matching loss of a prediction against its target.
pub fn cfm_loss(prediction: &Tensor, target: &Tensor) -> Result<f64> {
    if prediction.shape() != target.shape() {
        return Err(Error::shape("cfm_loss", prediction.shape(), target.shape()));
    }
    Ok(prediction
        .data()
        .iter()
        .zip(target.data())
        .map(|(p, q)| (p - q) * (p - q))
        .sum())
}
