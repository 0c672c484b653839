//! Feed-forward block with soft split and soft composition.
//!
//! Normalized tokens are put back on the grid, cut into overlapping
//! windows, passed through a two-layer GELU MLP per window and overlap-added
//! back, dividing each cell by the number of windows covering it.

use super::params::DmtLayerParams;
use crate::error::Result;
use crate::masking::{grid_to_tokens, token_scatter, TokenBatch};
use crate::numerics::{overlap_counts, unfold_raw, SlidingWindowSpec, Tensor};

/// Per-cell `1 / overlap count`, broadcast to `[T × d × H × W]`. Cells no
/// window reaches get 0.
fn inverse_counts(
    frames: usize,
    d: usize,
    h: usize,
    w: usize,
    spec: SlidingWindowSpec,
) -> Result<Tensor> {
    let counts = overlap_counts(h, w, spec)?;
    let plane: Vec<f64> = counts
        .iter()
        .map(|&c| if c > 0.0 { 1.0 / c } else { 0.0 })
        .collect();
    let mut data = Vec::with_capacity(frames * d * h * w);
    for _ in 0..frames * d {
        data.extend_from_slice(&plane);
    }
    Tensor::new(&[frames, d, h, w], data)
}

/// Soft split of a `[T × d × H × W]` grid: `[T·N_w × d·k²]`, one row per
/// window.
pub fn soft_split(grid: &Tensor, spec: SlidingWindowSpec) -> Result<Tensor> {
    let cols = grid.unfold(spec)?;
    let (t, width, n) = (cols.shape()[0], cols.shape()[1], cols.shape()[2]);
    cols.permute(&[0, 2, 1])?.reshape(&[t * n, width])
}

/// Soft composition: inverse layout of [`soft_split`], overlap-add and
/// per-cell count normalization.
pub fn soft_compose(
    rows: &Tensor,
    spec: SlidingWindowSpec,
    frames: usize,
    h: usize,
    w: usize,
) -> Result<Tensor> {
    let (oh, ow) = spec.output_dims(h, w)?;
    let n = oh * ow;
    let width = rows.shape()[1];
    let d = width / (spec.kernel * spec.kernel);
    let cols = rows.reshape(&[frames, n, width])?.permute(&[0, 2, 1])?;
    let summed = cols.fold(spec, h, w)?;
    summed.mul(&inverse_counts(frames, d, h, w, spec)?)
}

/// Windows (flat `t·N_w + n`) that overlap at least one token of `batch`.
fn active_windows(batch: &TokenBatch, spec: SlidingWindowSpec) -> Result<Vec<usize>> {
    let g = batch.grid();
    let (oh, ow) = spec.output_dims(g.height, g.width)?;
    let n = oh * ow;
    let k2 = spec.kernel * spec.kernel;
    let mut planes = vec![vec![0.0; g.height * g.width]; g.frames];
    for idx in batch.index_map() {
        planes[idx.t][idx.y * g.width + idx.x] = 1.0;
    }
    let mut active = Vec::new();
    for (t, plane) in planes.iter().enumerate() {
        let cols = unfold_raw(plane, 1, g.height, g.width, spec)?;
        active.extend(
            (0..n)
                .filter(|&c| (0..k2).any(|r| cols[r * n + c] > 0.0))
                .map(|c| t * n + c),
        );
    }
    Ok(active)
}

/// `Z̄ = FFN(LN₂(Z′)) + Z′` with token-feature warping over `spec` windows.
///
/// Only windows overlapping a valid token are evaluated; the others can
/// only write to cells that are dropped when tokens are re-selected.
pub fn ffn_tokenwarp(
    batch: &TokenBatch,
    params: &DmtLayerParams,
    spec: SlidingWindowSpec,
    eps: f64,
) -> Result<TokenBatch> {
    if batch.is_empty() {
        return Ok(batch.clone());
    }
    let g = batch.grid();
    let (oh, ow) = spec.output_dims(g.height, g.width)?;
    let n_windows = g.frames * oh * ow;

    let z = batch.tokens();
    let normed = batch.with_tokens(z.layer_norm(&params.ln2_gamma, &params.ln2_beta, eps)?)?;
    let grid = token_scatter(&normed)?;
    let rows = soft_split(&grid, spec)?;

    let active = active_windows(batch, spec)?;
    let hidden = rows
        .index_select(&active)?
        .matmul(&params.ffn_w1)?
        .add_bias(&params.ffn_b1)?
        .gelu()?;
    let mixed = hidden.matmul(&params.ffn_w2)?.add_bias(&params.ffn_b2)?;
    let all_rows = if active.len() == n_windows {
        mixed
    } else {
        mixed.scatter_rows(&active, n_windows)?
    };
    let composed = soft_compose(&all_rows, spec, g.frames, g.height, g.width)?;
    let out = grid_to_tokens(&composed)?
        .index_select(&batch.rows())?
        .add(z)?;
    batch.with_tokens(out)
}
