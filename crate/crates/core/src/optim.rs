//! Trainable parameters and the AdamW update.

use alloc::format;
use alloc::string::String;

use crate::error::{Error, Result};
use crate::math;
use crate::matrix::Matrix;
use crate::rng::RngStream;

/// One learnable weight matrix together with its gradient and the two AdamW
/// moment estimates. All four matrices always share one shape.
#[derive(Debug, Clone, PartialEq)]
pub struct Parameter {
    pub value: Matrix,
    pub grad: Matrix,
    pub m1: Matrix,
    pub m2: Matrix,
    pub step_count: u64,
}

impl Parameter {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Parameter::from_matrix(Matrix::zeros(rows, cols))
    }

    pub fn from_matrix(value: Matrix) -> Self {
        let grad = Matrix::zeros(value.rows(), value.cols());
        Parameter {
            m1: grad.clone(),
            m2: grad.clone(),
            grad,
            value,
            step_count: 0,
        }
    }

    /// Glorot-uniform init: U(-a, a) with `a = sqrt(6 / (fan_in + fan_out))`.
    pub fn glorot(rows: usize, cols: usize, rng: &mut RngStream) -> Self {
        let a = math::sqrt(6.0 / (rows + cols) as f64);
        let value = Matrix::from_fn(rows, cols, |_, _| (rng.uniform_f64() * 2.0 - 1.0) * a);
        Parameter::from_matrix(value)
    }

    pub fn rows(&self) -> usize {
        self.value.rows()
    }

    pub fn cols(&self) -> usize {
        self.value.cols()
    }

    pub fn zero_grad(&mut self) {
        for g in self.grad.data_mut() {
            *g = 0.0;
        }
    }

    /// Accumulates `delta` into the gradient.
    pub fn add_grad(&mut self, delta: &Matrix) -> Result<()> {
        self.grad.add_assign(delta)
    }
}

/// AdamW hyperparameters. The defaults are learning rate 0.001 and weight
/// decay 0.05, with the customary beta1=0.9, beta2=0.999, eps=1e-8.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdamwConfig {
    pub lr: f64,
    pub weight_decay: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamwConfig {
    fn default() -> Self {
        AdamwConfig {
            lr: 0.001,
            weight_decay: 0.05,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

impl AdamwConfig {
    fn validate(&self) -> Result<()> {
        if self.lr <= 0.0 || self.eps <= 0.0 {
            return Err(Error::parameter("learning rate and eps must be positive"));
        }
        if self.weight_decay < 0.0 {
            return Err(Error::parameter("weight decay must be nonnegative"));
        }
        if !(0.0..1.0).contains(&self.beta1) || !(0.0..1.0).contains(&self.beta2) {
            return Err(Error::parameter("betas must lie in [0, 1)"));
        }
        Ok(())
    }
}

/// One AdamW step with decoupled weight decay:
///
/// ```text
/// m  <- b1 m + (1-b1) g          v <- b2 v + (1-b2) g^2
/// value <- value - lr * m_hat / (sqrt(v_hat) + eps) - lr * wd * value
/// ```
///
/// where the hats are the usual bias-corrected moments and the decay term
/// uses the pre-update value.
pub fn adamw_step(name: &str, param: &mut Parameter, cfg: &AdamwConfig) -> Result<()> {
    cfg.validate()?;
    if !param.grad.is_finite() {
        return Err(Error::numeric(format!(
            "non-finite gradient in parameter `{name}`"
        )));
    }
    param.step_count += 1;
    let t = param.step_count as i32;
    let bc1 = 1.0 - math::powi(cfg.beta1, t);
    let bc2 = 1.0 - math::powi(cfg.beta2, t);
    let value = param.value.data_mut();
    let grad = param.grad.data();
    let m1 = param.m1.data_mut();
    let m2 = param.m2.data_mut();
    for i in 0..value.len() {
        let g = grad[i];
        m1[i] = cfg.beta1 * m1[i] + (1.0 - cfg.beta1) * g;
        m2[i] = cfg.beta2 * m2[i] + (1.0 - cfg.beta2) * g * g;
        let m_hat = m1[i] / bc1;
        let v_hat = m2[i] / bc2;
        let old = value[i];
        value[i] = old - cfg.lr * (m_hat / (math::sqrt(v_hat) + cfg.eps)) - cfg.lr * cfg.weight_decay * old;
    }
    Ok(())
}

/// Uniform access to a model's parameters in a fixed canonical order. The
/// order defines the checkpoint layout and the optimizer update sequence.
pub trait VisitParams {
    fn visit(&self, f: &mut dyn FnMut(&str, &Parameter));
    fn visit_mut(&mut self, f: &mut dyn FnMut(&str, &mut Parameter));

    fn zero_grads(&mut self) {
        self.visit_mut(&mut |_, p| p.zero_grad());
    }

    fn param_count(&self) -> usize {
        let mut n = 0;
        self.visit(&mut |_, _| n += 1);
        n
    }

    fn scalar_count(&self) -> usize {
        let mut n = 0;
        self.visit(&mut |_, p| n += p.value.len());
        n
    }

    /// Sum of all step counters; used to detect stale forward traces.
    fn step_stamp(&self) -> u64 {
        let mut stamp = 0u64;
        self.visit(&mut |_, p| stamp = stamp.wrapping_add(p.step_count));
        stamp
    }

    fn adamw_step_all(&mut self, cfg: &AdamwConfig) -> Result<()> {
        let mut result = Ok(());
        self.visit_mut(&mut |name, p| {
            if result.is_ok() {
                result = adamw_step(name, p, cfg);
            }
        });
        result
    }

    /// Collects `(name, value)` pairs in canonical order.
    fn named_values(&self) -> alloc::vec::Vec<(String, Matrix)> {
        let mut out = alloc::vec::Vec::new();
        self.visit(&mut |name, p| out.push((String::from(name), p.value.clone())));
        out
    }

    /// Writes values back in canonical order; shapes must match.
    fn load_values(&mut self, values: &[(String, Matrix)]) -> Result<()> {
        let mut i = 0;
        let mut result = Ok(());
        self.visit_mut(&mut |name, p| {
            if result.is_err() {
                return;
            }
            match values.get(i) {
                Some((n, v)) if n == name && v.same_shape(&p.value) => {
                    p.value = v.clone();
                }
                Some((n, v)) => {
                    result = Err(Error::config(format!(
                        "checkpoint entry {i}: expected `{name}` {}, found `{n}` {}",
                        p.value.shape(),
                        v.shape()
                    )));
                }
                None => {
                    result = Err(Error::config(format!(
                        "checkpoint ends early: missing parameter `{name}`"
                    )));
                }
            }
            i += 1;
        });
        result?;
        if i != values.len() {
            return Err(Error::config(format!(
                "checkpoint has {} extra parameter(s)",
                values.len() - i
            )));
        }
        Ok(())
    }
}
