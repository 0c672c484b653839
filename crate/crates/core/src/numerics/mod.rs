//! Dense `f64` tensor engine: forward operators, reverse-mode gradients and
//! a finite-difference checker.

mod conv;
mod gradcheck;
mod linalg;
mod ops;
mod params;
mod tensor;
mod window;

pub use conv::{fold_raw, overlap_counts, unfold_raw};
pub use gradcheck::{finite_diff_check, GradCheckOptions, GradCheckReport};
pub use linalg::{count_macs, mac_count, reset_mac_count};
pub use ops::{gelu_scalar, normal_cdf};
pub use params::ParamSet;
pub use tensor::Tensor;
pub use window::SlidingWindowSpec;
