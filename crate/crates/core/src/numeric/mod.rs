//! Dense numeric kernel: row-major matrices, layer primitives with exact
//! gradients, Adam, and a central-difference gradient checker.
//!
//! Everything is generic over [`Real`] so correctness tests can run in
//! 64-bit while training runs in 32-bit.

mod adam;
mod gradcheck;
mod layers;
mod tensor;

pub use adam::{adam_step, AdamConfig, AdamState};
pub use gradcheck::{grad_check, BlockCheck, GradCheckReport, FD_STEP, REL_ERROR_FLOOR};
pub use layers::{
    affine_backward, affine_backward_into, affine_forward, clamp_probability,
    embedding_backward, embedding_backward_into, embedding_lookup, embedding_lookup_into,
    relu_backward, relu_forward, sigmoid, sigmoid_backward, sigmoid_forward, AffineGrads,
    PROB_EPS,
};
pub use tensor::Tensor2;

use std::fmt::{Debug, Display};
use std::iter::Sum;

use num_traits::Float;

/// Floating point element type of the kernel.
pub trait Real:
    Float + Default + Debug + Display + Sum + Send + Sync + 'static
{
    /// `"f32"` or `"f64"`, recorded in checkpoints.
    const NAME: &'static str;

    fn from_f64(x: f64) -> Self;
    fn as_f64(self) -> f64;

    /// `c = alpha * a * b + beta * c` on strided row/column storage.
    ///
    /// Callers must guarantee that every index reachable through the given
    /// dimensions and strides lies inside the respective slice.
    #[allow(clippy::too_many_arguments)]
    fn gemm(
        m: usize,
        k: usize,
        n: usize,
        alpha: Self,
        a: &[Self],
        rsa: isize,
        csa: isize,
        b: &[Self],
        rsb: isize,
        csb: isize,
        beta: Self,
        c: &mut [Self],
        rsc: isize,
        csc: isize,
    );
}

macro_rules! impl_real {
    ($t:ty, $name:literal, $gemm:path) => {
        impl Real for $t {
            const NAME: &'static str = $name;

            #[inline]
            fn from_f64(x: f64) -> Self {
                x as $t
            }

            #[inline]
            fn as_f64(self) -> f64 {
                self as f64
            }

            fn gemm(
                m: usize,
                k: usize,
                n: usize,
                alpha: Self,
                a: &[Self],
                rsa: isize,
                csa: isize,
                b: &[Self],
                rsb: isize,
                csb: isize,
                beta: Self,
                c: &mut [Self],
                rsc: isize,
                csc: isize,
            ) {
                debug_assert!(extent(m, k, rsa, csa) <= a.len());
                debug_assert!(extent(k, n, rsb, csb) <= b.len());
                debug_assert!(extent(m, n, rsc, csc) <= c.len());
                if m == 0 || n == 0 {
                    return;
                }
                // SAFETY: the kernel only touches indices within the
                // (m, k), (k, n), (m, n) strided extents checked by callers.
                unsafe {
                    $gemm(
                        m,
                        k,
                        n,
                        alpha,
                        a.as_ptr(),
                        rsa,
                        csa,
                        b.as_ptr(),
                        rsb,
                        csb,
                        beta,
                        c.as_mut_ptr(),
                        rsc,
                        csc,
                    );
                }
            }
        }
    };
}

impl_real!(f32, "f32", matrixmultiply::sgemm);
impl_real!(f64, "f64", matrixmultiply::dgemm);

#[allow(dead_code)]
fn extent(rows: usize, cols: usize, rs: isize, cs: isize) -> usize {
    if rows == 0 || cols == 0 {
        return 0;
    }
    ((rows - 1) as isize * rs + (cols - 1) as isize * cs) as usize + 1
}

/// A collection of named parameter blocks with a fixed order.
///
/// Used for optimizer updates, gradient checking and serialization. The
/// gradient of a parameter set has the same type and block layout.
pub trait ParamSet<T> {
    fn block_count(&self) -> usize;
    fn block_name(&self, index: usize) -> String;
    fn block(&self, index: usize) -> &[T];
    fn block_mut(&mut self, index: usize) -> &mut [T];
}

/// Precision selector for training runs.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum Precision {
    #[default]
    F32,
    F64,
}

impl Precision {
    pub fn name(self) -> &'static str {
        match self {
            Precision::F32 => f32::NAME,
            Precision::F64 => f64::NAME,
        }
    }
}
