//! Small reverse-mode network stack for the grid-game policies: 3x3
//! convolutions, batch normalization, ReLU, a linear head, softmax, RMSProp
//! and batched episodic Reinforce.
//!
//! Activations inside the network are laid out channel-major over the batch,
//! `[C, N, H, W]`, so convolutions become one GEMM per layer and batch-norm
//! statistics are contiguous per channel. Network inputs and outputs use the
//! usual `[N, C, H, W]` and `[N, actions]` layouts.

pub mod layers;
mod net;
mod optim;
mod reinforce;

use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;
use core::fmt::Debug;

use num_traits::Float;

use crate::error::{Error, Result};

pub use layers::{Act, BatchNorm2d, Conv2d, Linear, Relu};
pub use net::{ConvPolicyNet, Mode, NetConfig};
pub use optim::RmsProp;
pub use reinforce::{reinforce_batch_update, reinforce_loss, EpisodeRecord, LossTerms, TrainSpec, UpdateStats};

/// Floating-point element type of a network.
pub trait Scalar: Float + Debug + Default + Send + Sync + 'static {
    fn of(x: f64) -> Self;

    fn as_f64(self) -> f64;

    /// `C = alpha * A B + beta * C` with explicit row/column strides, where
    /// `A` is `m x k` and `B` is `k x n`.
    #[allow(clippy::too_many_arguments)]
    fn gemm(m: usize, k: usize, n: usize, alpha: Self, a: Strided<'_, Self>, b: Strided<'_, Self>, beta: Self, c: StridedMut<'_, Self>);
}

/// Read-only matrix view.
#[derive(Clone, Copy)]
pub struct Strided<'a, T> {
    pub data: &'a [T],
    pub rs: usize,
    pub cs: usize,
}

pub struct StridedMut<'a, T> {
    pub data: &'a mut [T],
    pub rs: usize,
    pub cs: usize,
}

/// Row-major view of `data`.
pub fn rows<T>(data: &[T], row_len: usize) -> Strided<'_, T> {
    Strided { data, rs: row_len, cs: 1 }
}

/// Transposed view of a row-major `data` with rows of `row_len`.
pub fn transposed<T>(data: &[T], row_len: usize) -> Strided<'_, T> {
    Strided { data, rs: 1, cs: row_len }
}

pub fn rows_mut<T>(data: &mut [T], row_len: usize) -> StridedMut<'_, T> {
    StridedMut { data, rs: row_len, cs: 1 }
}

fn extent(r: usize, c: usize, rs: usize, cs: usize) -> usize {
    if r == 0 || c == 0 {
        0
    } else {
        (r - 1) * rs + (c - 1) * cs + 1
    }
}

macro_rules! impl_scalar {
    ($t:ty, $gemm:ident) => {
        impl Scalar for $t {
            fn of(x: f64) -> Self {
                x as $t
            }

            fn as_f64(self) -> f64 {
                self as f64
            }

            fn gemm(m: usize, k: usize, n: usize, alpha: Self, a: Strided<'_, Self>, b: Strided<'_, Self>, beta: Self, c: StridedMut<'_, Self>) {
                assert!(extent(m, k, a.rs, a.cs) <= a.data.len(), "gemm: A out of bounds");
                assert!(extent(k, n, b.rs, b.cs) <= b.data.len(), "gemm: B out of bounds");
                assert!(extent(m, n, c.rs, c.cs) <= c.data.len(), "gemm: C out of bounds");
                if m == 0 || n == 0 {
                    return;
                }
                // SAFETY: every index touched lies within the extents checked above.
                unsafe {
                    matrixmultiply::$gemm(
                        m,
                        k,
                        n,
                        alpha,
                        a.data.as_ptr(),
                        a.rs as isize,
                        a.cs as isize,
                        b.data.as_ptr(),
                        b.rs as isize,
                        b.cs as isize,
                        beta,
                        c.data.as_mut_ptr(),
                        c.rs as isize,
                        c.cs as isize,
                    );
                }
            }
        }
    };
}

impl_scalar!(f64, dgemm);
impl_scalar!(f32, sgemm);

/// A parameter: values plus the gradient accumulated by backward passes.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor<T> {
    shape: Vec<usize>,
    pub data: Vec<T>,
    pub grad: Vec<T>,
}

impl<T: Scalar> Tensor<T> {
    pub fn zeros(shape: &[usize]) -> Self {
        let n = shape.iter().product();
        Self {
            shape: shape.to_vec(),
            data: vec![T::zero(); n],
            grad: vec![T::zero(); n],
        }
    }

    pub fn from_vec(shape: &[usize], data: Vec<T>) -> Result<Self> {
        let n: usize = shape.iter().product();
        if data.len() != n {
            return Err(Error::DimensionMismatch {
                expected: n,
                found: data.len(),
            });
        }
        Ok(Self {
            shape: shape.to_vec(),
            grad: vec![T::zero(); n],
            data,
        })
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn numel(&self) -> usize {
        self.data.len()
    }

    pub fn zero_grad(&mut self) {
        self.grad.fill(T::zero());
    }
}

/// A named array as stored in checkpoints.
#[derive(Debug, Clone, PartialEq)]
pub struct NamedArray {
    pub name: String,
    pub shape: Vec<usize>,
    pub values: Vec<f64>,
}

/// Numerically stable softmax of one row of logits.
pub fn softmax<T: Scalar>(logits: &[T]) -> Vec<T> {
    let max = logits.iter().copied().fold(T::neg_infinity(), T::max);
    let mut out: Vec<T> = logits.iter().map(|&z| (z - max).exp()).collect();
    let sum = out.iter().fold(T::zero(), |a, &b| a + b);
    for p in &mut out {
        *p = *p / sum;
    }
    out
}

/// Log-softmax of one row of logits.
pub fn log_softmax<T: Scalar>(logits: &[T]) -> Vec<T> {
    let max = logits.iter().copied().fold(T::neg_infinity(), T::max);
    let lse = logits.iter().fold(T::zero(), |a, &z| a + (z - max).exp()).ln() + max;
    logits.iter().map(|&z| z - lse).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn softmax_sums_to_one() {
        use rand::{Rng, SeedableRng};
        let mut rng = crate::Rng::seed_from_u64(0);
        for _ in 0..10_000 {
            let z: Vec<f64> = (0..4).map(|_| rng.random_range(-50.0..=50.0)).collect();
            let p = softmax(&z);
            assert!((p.iter().sum::<f64>() - 1.0).abs() <= 1e-9);
            let lp = log_softmax(&z);
            for (a, b) in p.iter().zip(&lp) {
                assert!((a.ln() - b).abs() < 1e-9 || *a < 1e-300);
            }
        }
        assert_eq!(softmax(&[0.0f64; 4]), vec![0.25; 4]);
    }

    #[test]
    fn gemm_matches_naive() {
        let a = [1.0, 2.0, 3.0, 4.0, 5.0, 6.0]; // 2x3
        let b = [1.0, 0.0, 2.0, 1.0, 0.0, 3.0]; // 3x2
        let mut c = [0.0; 4];
        f64::gemm(2, 3, 2, 1.0, rows(&a, 3), rows(&b, 2), 0.0, rows_mut(&mut c, 2));
        assert_eq!(c, [5.0, 11.0, 14.0, 23.0]);
        // A^T B with A stored as 3x2.
        let mut c = [0.0; 4];
        f64::gemm(2, 3, 2, 1.0, transposed(&b, 2), rows(&b, 2), 0.0, rows_mut(&mut c, 2));
        assert_eq!(c, [5.0, 2.0, 2.0, 10.0]);
    }

    #[test]
    fn tensor_shape_is_checked() {
        assert!(Tensor::<f64>::from_vec(&[2, 2], vec![0.0; 3]).is_err());
        assert_eq!(Tensor::<f32>::zeros(&[2, 3]).numel(), 6);
    }
}
