use super::params::DmtLayerParams;
use crate::error::{Error, Result};
use crate::numerics::{SlidingWindowSpec, Tensor};

/// Receptive field contextualizer with its skip: `RFC(x) + x`.
///
/// Applied per frame on `[T × d × H × W]`. Branch A is a 1×1 convolution
/// with GELU; branch B is a 1×1 convolution, a depthwise `K×K` convolution
/// (stride 1, same padding) and a pointwise 1×1. The branches are summed.
pub fn rfc_forward(grid: &Tensor, params: &DmtLayerParams, kernel: usize) -> Result<Tensor> {
    if kernel % 2 == 0 {
        return Err(Error::Window(format!("RFC kernel {kernel} must be odd")));
    }
    let point = SlidingWindowSpec::new(1, 1, 0)?;
    let branch_a = grid
        .conv2d(&params.rfc_a_w, Some(&params.rfc_a_b), point)?
        .gelu()?;
    let branch_b = grid
        .conv2d(&params.rfc_b_w, Some(&params.rfc_b_b), point)?
        .depthwise_conv2d(
            &params.rfc_dw_w,
            Some(&params.rfc_dw_b),
            SlidingWindowSpec::same(kernel)?,
        )?
        .conv2d(&params.rfc_pw_w, Some(&params.rfc_pw_b), point)?;
    branch_a.add(&branch_b)?.add(grid)
}
