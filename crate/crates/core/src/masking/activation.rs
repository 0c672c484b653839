//! Mask activation: the validity a sliding-window operator would produce.
//!
//! The mask is unfolded with the operator's window; every window that sees
//! at least one valid pixel becomes entirely valid; the windows are folded
//! back with overlap-add, clamped to `[0, 1]` and un-padded.

use super::mask::{MaskMap, MaskSequence};
use crate::error::Result;
use crate::numerics::{fold_raw, unfold_raw, SlidingWindowSpec};

pub fn mask_update(mask: &MaskMap, spec: SlidingWindowSpec) -> Result<MaskMap> {
    let (h, w) = mask.dims();
    let (oh, ow) = spec.output_dims(h, w)?;
    let n = oh * ow;
    let k2 = spec.kernel * spec.kernel;

    let mut cols = unfold_raw(&mask.to_f64(), 1, h, w, spec)?;
    for col in 0..n {
        let any = (0..k2).any(|r| cols[r * n + col] > 0.0);
        let v = if any { 1.0 } else { 0.0 };
        (0..k2).for_each(|r| cols[r * n + col] = v);
    }
    let folded = fold_raw(&cols, 1, h, w, spec)?;
    let cells = folded.iter().map(|&v| v.clamp(0.0, 1.0) > 0.0).collect();
    MaskMap::from_cells(h, w, cells)
}

/// [`mask_update`] on every frame.
pub fn mask_update_seq(masks: &MaskSequence, spec: SlidingWindowSpec) -> Result<MaskSequence> {
    masks.map(|m| mask_update(m, spec))
}
