use alloc::vec;
use alloc::vec::Vec;

use super::{Scalar, Tensor};
use crate::error::{Error, Result};

/// RMSProp: `s = decay s + (1 - decay) g^2`, `p -= lr g / (sqrt(s) + eps)`.
#[derive(Debug, Clone, PartialEq)]
pub struct RmsProp<T> {
    pub lr: f64,
    pub decay: f64,
    pub eps: f64,
    sq: Vec<Vec<T>>,
}

impl<T: Scalar> RmsProp<T> {
    pub const DEFAULT_LR: f64 = 1e-3;

    pub fn new(lr: f64) -> Self {
        Self {
            lr,
            decay: 0.99,
            eps: 1e-8,
            sq: Vec::new(),
        }
    }

    /// Squared-gradient accumulators, one per parameter tensor.
    pub fn accumulators(&self) -> &[Vec<T>] {
        &self.sq
    }

    /// One step over the parameters, always given in the same order.
    pub fn step(&mut self, params: &mut [&mut Tensor<T>]) -> Result<()> {
        if self.sq.is_empty() {
            self.sq = params.iter().map(|p| vec![T::zero(); p.numel()]).collect();
        }
        if self.sq.len() != params.len() {
            return Err(Error::DimensionMismatch {
                expected: self.sq.len(),
                found: params.len(),
            });
        }
        let (lr, decay, eps) = (T::of(self.lr), T::of(self.decay), T::of(self.eps));
        for (p, s) in params.iter_mut().zip(&mut self.sq) {
            if p.numel() != s.len() {
                return Err(Error::DimensionMismatch {
                    expected: s.len(),
                    found: p.numel(),
                });
            }
            for ((w, &g), acc) in p.data.iter_mut().zip(&p.grad).zip(s.iter_mut()) {
                *acc = decay * *acc + (T::one() - decay) * g * g;
                *w = *w - lr * g / (acc.sqrt() + eps);
            }
        }
        Ok(())
    }
}
