//! Validity bookkeeping: binary masks, valid-token selection, mask
//! activation and mask generators.
//!
//! Internally `true`/1 marks a valid (unmasked) cell.

mod activation;
mod generate;
mod mask;
mod select;

pub use activation::{mask_update, mask_update_seq};
pub use generate::{
    gen_freeform_mask, gen_random_cells_mask, gen_stationary_mask, FREEFORM_TOLERANCE,
    MAX_FREEFORM_RATIO,
};
pub use mask::{downscale_mask, validity_fraction, MaskMap, MaskSequence};
pub use select::{
    grid_to_tokens, token_scatter, token_select, tokens_to_grid, GridDims, GridIndex, TokenBatch,
};
