//! SGD with momentum, Adam, and the step-decay learning-rate schedule.

use thiserror::Error;

use crate::autodiff::Tensor;
use crate::scalar::Scalar;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum OptimError {
    #[error("parameter {index}: shape {param:?} but gradient {grad:?}")]
    Shape {
        index: usize,
        param: Vec<usize>,
        grad: Vec<usize>,
    },
    #[error("expected {expected} parameter tensors, got {got}")]
    Count { expected: usize, got: usize },
    #[error("update produced a non-finite parameter (tensor {0})")]
    NonFinite(usize),
}

fn check_shapes<T: Scalar>(
    buffers: &[Vec<T>],
    params: &[&mut Tensor<T>],
    grads: &[Tensor<T>],
) -> Result<(), OptimError> {
    if params.len() != buffers.len() || grads.len() != buffers.len() {
        return Err(OptimError::Count {
            expected: buffers.len(),
            got: params.len().min(grads.len()),
        });
    }
    for (index, ((p, g), b)) in params.iter().zip(grads).zip(buffers).enumerate() {
        if p.shape() != g.shape() || p.len() != b.len() {
            return Err(OptimError::Shape {
                index,
                param: p.shape().to_vec(),
                grad: g.shape().to_vec(),
            });
        }
    }
    Ok(())
}

fn ensure_finite<T: Scalar>(params: &[&mut Tensor<T>]) -> Result<(), OptimError> {
    match params.iter().position(|p| p.data().iter().any(|v| !v.is_finite())) {
        Some(i) => Err(OptimError::NonFinite(i)),
        None => Ok(()),
    }
}

/// Heavy-ball momentum: `v ← μ·v + g`, `θ ← θ − lr·v`.
#[derive(Clone, Debug, PartialEq)]
pub struct SgdState<T> {
    pub lr: T,
    pub momentum: T,
    velocity: Vec<Vec<T>>,
}

impl<T: Scalar> SgdState<T> {
    pub fn new(params: &[&Tensor<T>], lr: T, momentum: T) -> Self {
        Self {
            lr,
            momentum,
            velocity: params.iter().map(|p| vec![T::zero(); p.len()]).collect(),
        }
    }

    pub fn velocity(&self) -> &[Vec<T>] {
        &self.velocity
    }

    pub fn step(&mut self, params: &mut [&mut Tensor<T>], grads: &[Tensor<T>]) -> Result<(), OptimError> {
        check_shapes(&self.velocity, params, grads)?;
        for ((p, g), v) in params.iter_mut().zip(grads).zip(&mut self.velocity) {
            for ((theta, &gi), vi) in p.data_mut().iter_mut().zip(g.data()).zip(v.iter_mut()) {
                *vi = self.momentum * *vi + gi;
                *theta = *theta - self.lr * *vi;
            }
        }
        ensure_finite(params)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Direction {
    Descent,
    Ascent,
}

/// Adam with bias correction.
#[derive(Clone, Debug, PartialEq)]
pub struct AdamState<T> {
    pub lr: T,
    pub beta1: T,
    pub beta2: T,
    pub eps: T,
    t: u64,
    m: Vec<Vec<T>>,
    v: Vec<Vec<T>>,
}

impl<T: Scalar> AdamState<T> {
    pub fn new(params: &[&Tensor<T>], lr: T) -> Self {
        Self::with_betas(params, lr, T::lit(0.9), T::lit(0.999), T::lit(1e-8))
    }

    pub fn with_betas(params: &[&Tensor<T>], lr: T, beta1: T, beta2: T, eps: T) -> Self {
        let zeros = || params.iter().map(|p| vec![T::zero(); p.len()]).collect();
        Self {
            lr,
            beta1,
            beta2,
            eps,
            t: 0,
            m: zeros(),
            v: zeros(),
        }
    }

    pub fn steps(&self) -> u64 {
        self.t
    }

    pub fn step(
        &mut self,
        params: &mut [&mut Tensor<T>],
        grads: &[Tensor<T>],
        direction: Direction,
    ) -> Result<(), OptimError> {
        check_shapes(&self.m, params, grads)?;
        self.t += 1;
        let t = i32::try_from(self.t).unwrap_or(i32::MAX);
        let one = T::one();
        let c1 = one - self.beta1.powi(t);
        let c2 = one - self.beta2.powi(t);
        for (((p, g), m), v) in params.iter_mut().zip(grads).zip(&mut self.m).zip(&mut self.v) {
            for (((theta, &gi), mi), vi) in p
                .data_mut()
                .iter_mut()
                .zip(g.data())
                .zip(m.iter_mut())
                .zip(v.iter_mut())
            {
                *mi = self.beta1 * *mi + (one - self.beta1) * gi;
                *vi = self.beta2 * *vi + (one - self.beta2) * gi * gi;
                let update = self.lr * (*mi / c1) / ((*vi / c2).sqrt() + self.eps);
                *theta = match direction {
                    Direction::Descent => *theta - update,
                    Direction::Ascent => *theta + update,
                };
            }
        }
        ensure_finite(params)
    }
}

/// `lr(e) = lr₀ · γ^⌊e / step⌋`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct StepLrSchedule<T> {
    pub initial: T,
    pub step_size: usize,
    pub gamma: T,
}

impl<T: Scalar> StepLrSchedule<T> {
    pub fn new(initial: T, step_size: usize, gamma: T) -> Self {
        assert!(step_size > 0, "StepLR step size must be positive");
        Self {
            initial,
            step_size,
            gamma,
        }
    }

    pub fn lr(&self, epoch: usize) -> T {
        let k = i32::try_from(epoch / self.step_size).unwrap_or(i32::MAX);
        self.initial * self.gamma.powi(k)
    }
}
