//! Encoder, tokenizer boundary, masked stack, decoder and checkpoints.

mod checkpoint;
mod model;

pub use checkpoint::{
    checkpoint_bytes, load_checkpoint, parse_checkpoint, save_checkpoint, FORMAT_VERSION, MAGIC,
};
pub use model::{
    compose_output, decode, encode, forward, inverse_tokenize, tokenize, ForwardResult,
    FrameSequence, ModelConfig, ModelParams, DOWNSCALE,
};
