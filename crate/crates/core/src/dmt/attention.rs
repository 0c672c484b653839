use super::params::DmtLayerParams;
use crate::error::{Error, Result};
use crate::masking::TokenBatch;
use crate::numerics::Tensor;

/// Multiply-accumulates of attention over `n_tokens` tokens of width `d`:
/// four `d×d` projections plus the score and value products,
/// `4·N′·d² + 2·N′²·d`.
pub fn attention_macs(n_tokens: usize, d: usize) -> u64 {
    let (n, d) = (n_tokens as u64, d as u64);
    4 * n * d * d + 2 * n * n * d
}

/// Pre-norm multi-head self-attention over the valid tokens of all frames
/// jointly, with residual: `Z′ = MSA(LN₁(Z)) + Z`.
pub fn msa_valid(
    batch: &TokenBatch,
    params: &DmtLayerParams,
    heads: usize,
    eps: f64,
) -> Result<TokenBatch> {
    if batch.is_empty() {
        return Ok(batch.clone());
    }
    let z = batch.tokens();
    let d = batch.dim();
    if heads == 0 || d % heads != 0 {
        return Err(Error::shape(
            "msa_valid",
            format!("width {d} for {heads} heads"),
        ));
    }
    let dh = d / heads;
    let x = z.layer_norm(&params.ln1_gamma, &params.ln1_beta, eps)?;
    let q = x.matmul(&params.w_q)?;
    let k = x.matmul(&params.w_k)?;
    let v = x.matmul(&params.w_v)?;
    let scale = 1.0 / (dh as f64).sqrt();
    let mut outs = Vec::with_capacity(heads);
    for h in 0..heads {
        let qh = q.narrow(1, h * dh, dh)?;
        let kh = k.narrow(1, h * dh, dh)?;
        let vh = v.narrow(1, h * dh, dh)?;
        let attn = qh.matmul(&kh.t()?)?.scale(scale)?.softmax(1)?;
        outs.push(attn.matmul(&vh)?);
    }
    let merged = if heads == 1 {
        outs.pop().expect("one head")
    } else {
        Tensor::concat(&outs, 1)?
    };
    let out = merged.matmul(&params.w_o)?.add(z)?;
    batch.with_tokens(out)
}
