//! The masked transformer layer and stack.
//!
//! A layer attends over valid tokens only, mixes them through a soft-split
//! feed-forward block, grows the mask with the attention updater, restores
//! spatial structure with the contextualizer and grows the mask again with
//! the convolution updater.

mod attention;
mod config;
mod ffn;
mod layer;
mod params;
mod rfc;

pub use attention::{attention_macs, msa_valid};
pub use config::DmtConfig;
pub use ffn::{ffn_tokenwarp, soft_compose, soft_split};
pub use layer::{
    dmt_layer, dmt_stack, LayerState, LayerStats, LayerTrace, StackOutput, TraceEntry,
};
pub use params::DmtLayerParams;
pub use rfc::rfc_forward;
