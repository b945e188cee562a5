//! Layer primitives and their exact local gradients.
//!
//! Weights are stored `d_in x d_out` so a batch `[B x d_in]` maps to
//! `[B x d_out]` with a single row-major product.

use super::tensor::{gemm_nn, gemm_nt, gemm_tn};
use super::{Real, Tensor2};
use crate::error::{Error, Result};

/// Probabilities are clamped to `[PROB_EPS, 1 - PROB_EPS]` before any log.
pub const PROB_EPS: f64 = 1e-7;

pub fn affine_forward<T: Real>(
    input: &Tensor2<T>,
    weight: &Tensor2<T>,
    bias: &[T],
) -> Result<Tensor2<T>> {
    if input.cols() != weight.rows() || bias.len() != weight.cols() {
        return Err(Error::shape(
            "affine_forward",
            format!(
                "input {:?}, weight {:?}, bias {}",
                input.shape(),
                weight.shape(),
                bias.len()
            ),
        ));
    }
    let mut out = Tensor2::zeros(input.rows(), weight.cols());
    for r in 0..out.rows() {
        out.row_mut(r).copy_from_slice(bias);
    }
    gemm_nn(input, weight, &mut out, T::one(), T::one())?;
    Ok(out)
}

#[derive(Debug, Clone, PartialEq)]
pub struct AffineGrads<T> {
    pub input: Tensor2<T>,
    pub weight: Tensor2<T>,
    pub bias: Vec<T>,
}

pub fn affine_backward<T: Real>(
    upstream: &Tensor2<T>,
    cached_input: &Tensor2<T>,
    weight: &Tensor2<T>,
) -> Result<AffineGrads<T>> {
    let mut grad_weight = Tensor2::zeros(weight.rows(), weight.cols());
    let mut grad_bias = vec![T::zero(); weight.cols()];
    let input = affine_backward_into(
        upstream,
        cached_input,
        weight,
        &mut grad_weight,
        &mut grad_bias,
        true,
    )?
    .expect("input gradient requested");
    Ok(AffineGrads {
        input,
        weight: grad_weight,
        bias: grad_bias,
    })
}

/// Accumulates weight and bias gradients into the given buffers and returns
/// the input gradient when `want_input` is set.
pub fn affine_backward_into<T: Real>(
    upstream: &Tensor2<T>,
    cached_input: &Tensor2<T>,
    weight: &Tensor2<T>,
    grad_weight: &mut Tensor2<T>,
    grad_bias: &mut [T],
    want_input: bool,
) -> Result<Option<Tensor2<T>>> {
    if upstream.rows() != cached_input.rows()
        || cached_input.cols() != weight.rows()
        || upstream.cols() != weight.cols()
        || grad_weight.shape() != weight.shape()
        || grad_bias.len() != weight.cols()
    {
        return Err(Error::shape(
            "affine_backward",
            format!(
                "upstream {:?}, input {:?}, weight {:?}",
                upstream.shape(),
                cached_input.shape(),
                weight.shape()
            ),
        ));
    }
    gemm_tn(cached_input, upstream, grad_weight, T::one(), T::one())?;
    for r in 0..upstream.rows() {
        for (gb, &u) in grad_bias.iter_mut().zip(upstream.row(r)) {
            *gb = *gb + u;
        }
    }
    if !want_input {
        return Ok(None);
    }
    let mut grad_input = Tensor2::zeros(cached_input.rows(), cached_input.cols());
    gemm_nt(upstream, weight, &mut grad_input, T::one(), T::zero())?;
    Ok(Some(grad_input))
}

pub fn relu_forward<T: Real>(input: &Tensor2<T>) -> Tensor2<T> {
    input.map(|x| if x > T::zero() { x } else { T::zero() })
}

/// Gradient of ReLU given the forward *input* (or output; the sign test is
/// the same).
pub fn relu_backward<T: Real>(upstream: &Tensor2<T>, cached: &Tensor2<T>) -> Result<Tensor2<T>> {
    if upstream.shape() != cached.shape() {
        return Err(Error::shape(
            "relu_backward",
            format!("{:?} vs {:?}", upstream.shape(), cached.shape()),
        ));
    }
    let data = upstream
        .data()
        .iter()
        .zip(cached.data())
        .map(|(&u, &x)| if x > T::zero() { u } else { T::zero() })
        .collect();
    Tensor2::new(upstream.rows(), upstream.cols(), data)
}

#[inline]
pub fn sigmoid<T: Real>(x: T) -> T {
    if x >= T::zero() {
        T::one() / (T::one() + (-x).exp())
    } else {
        let e = x.exp();
        e / (T::one() + e)
    }
}

#[inline]
pub fn clamp_probability<T: Real>(p: T) -> T {
    let eps = T::from_f64(PROB_EPS);
    p.max(eps).min(T::one() - eps)
}

pub fn sigmoid_forward<T: Real>(input: &Tensor2<T>) -> Tensor2<T> {
    input.map(sigmoid)
}

/// `upstream * σ(x)(1 - σ(x))`, taking the forward output σ(x).
pub fn sigmoid_backward<T: Real>(upstream: &Tensor2<T>, output: &Tensor2<T>) -> Result<Tensor2<T>> {
    if upstream.shape() != output.shape() {
        return Err(Error::shape(
            "sigmoid_backward",
            format!("{:?} vs {:?}", upstream.shape(), output.shape()),
        ));
    }
    let data = upstream
        .data()
        .iter()
        .zip(output.data())
        .map(|(&u, &s)| u * s * (T::one() - s))
        .collect();
    Tensor2::new(upstream.rows(), upstream.cols(), data)
}

pub fn embedding_lookup<T: Real>(
    table: &Tensor2<T>,
    ids: &[u32],
    feature: &str,
) -> Result<Tensor2<T>> {
    let mut out = Tensor2::zeros(ids.len(), table.cols());
    embedding_lookup_into(table, ids, feature, &mut out, 0)?;
    Ok(out)
}

/// Writes row `ids[b]` of `table` into columns
/// `[col_offset, col_offset + d_e)` of row `b` of `out`.
pub fn embedding_lookup_into<T: Real>(
    table: &Tensor2<T>,
    ids: &[u32],
    feature: &str,
    out: &mut Tensor2<T>,
    col_offset: usize,
) -> Result<()> {
    let width = table.cols();
    if out.rows() != ids.len() || col_offset + width > out.cols() {
        return Err(Error::shape(
            "embedding_lookup",
            format!(
                "{} ids into {:?} at column {col_offset}",
                ids.len(),
                out.shape()
            ),
        ));
    }
    for (b, &id) in ids.iter().enumerate() {
        check_id(table, id, feature)?;
        out.row_mut(b)[col_offset..col_offset + width].copy_from_slice(table.row(id as usize));
    }
    Ok(())
}

pub fn embedding_backward<T: Real>(
    grad_table: &mut Tensor2<T>,
    ids: &[u32],
    upstream: &Tensor2<T>,
) -> Result<()> {
    embedding_backward_into(grad_table, ids, upstream, 0)
}

/// Adds row `b` of the upstream column block into `grad_table[ids[b]]`.
/// Duplicate ids accumulate in batch order.
pub fn embedding_backward_into<T: Real>(
    grad_table: &mut Tensor2<T>,
    ids: &[u32],
    upstream: &Tensor2<T>,
    col_offset: usize,
) -> Result<()> {
    let width = grad_table.cols();
    if upstream.rows() != ids.len() || col_offset + width > upstream.cols() {
        return Err(Error::shape(
            "embedding_backward",
            format!(
                "{} ids from {:?} at column {col_offset}",
                ids.len(),
                upstream.shape()
            ),
        ));
    }
    for (b, &id) in ids.iter().enumerate() {
        check_id(grad_table, id, "gradient")?;
        let src = &upstream.row(b)[col_offset..col_offset + width];
        for (g, &u) in grad_table.row_mut(id as usize).iter_mut().zip(src) {
            *g = *g + u;
        }
    }
    Ok(())
}

fn check_id<T: Real>(table: &Tensor2<T>, id: u32, feature: &str) -> Result<()> {
    if id as usize >= table.rows() {
        return Err(Error::TokenOutOfRange {
            feature: feature.to_string(),
            token: id,
            vocab_size: table.rows(),
        });
    }
    Ok(())
}
