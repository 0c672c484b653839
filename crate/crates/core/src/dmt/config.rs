use crate::error::{Error, Result};
use crate::numerics::SlidingWindowSpec;

/// Shape and switches of a masked transformer stack.
///
/// The three boolean switches exist for ablations; all are on in the full
/// model.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DmtConfig {
    /// Number of stacked layers `L`.
    pub layers: usize,
    /// Token width `d`.
    pub dim: usize,
    pub heads: usize,
    pub ffn_hidden: usize,
    /// Depthwise kernel `K` of the contextualizer (odd).
    pub rfc_kernel: usize,
    /// Soft-split window of the feed-forward block; also the attention mask
    /// updater's window.
    pub warp: SlidingWindowSpec,
    /// Attend over valid tokens only. When off, every cell is treated as
    /// valid throughout the stack.
    pub token_selection: bool,
    /// Grow masks after attention and convolution. When off, masks stay as
    /// given.
    pub mask_activation: bool,
    /// Run the receptive field contextualizer (and its mask updater).
    pub use_rfc: bool,
    pub ln_eps: f64,
}

impl Default for DmtConfig {
    fn default() -> Self {
        Self {
            layers: 4,
            dim: 64,
            heads: 4,
            ffn_hidden: 256,
            rfc_kernel: 13,
            warp: SlidingWindowSpec {
                kernel: 3,
                stride: 1,
                padding: 1,
            },
            token_selection: true,
            mask_activation: true,
            use_rfc: true,
            ln_eps: 1e-5,
        }
    }
}

impl DmtConfig {
    pub fn validate(&self) -> Result<()> {
        if self.layers == 0 {
            return Err(Error::InvalidArgument(
                "a stack needs at least one layer".into(),
            ));
        }
        if self.dim == 0 || self.heads == 0 || self.dim % self.heads != 0 {
            return Err(Error::InvalidArgument(format!(
                "width {} is not divisible by {} heads",
                self.dim, self.heads
            )));
        }
        if self.ffn_hidden == 0 {
            return Err(Error::InvalidArgument("ffn_hidden must be positive".into()));
        }
        if self.rfc_kernel % 2 == 0 {
            return Err(Error::Window(format!(
                "RFC kernel {} must be odd",
                self.rfc_kernel
            )));
        }
        SlidingWindowSpec::new(self.warp.kernel, self.warp.stride, self.warp.padding)?;
        if !(self.ln_eps > 0.0) {
            return Err(Error::InvalidArgument("ln_eps must be positive".into()));
        }
        Ok(())
    }

    /// Checks that the soft-split window fits a `height × width` grid.
    pub fn validate_grid(&self, height: usize, width: usize) -> Result<()> {
        self.warp.output_dims(height, width).map(|_| ())
    }

    /// Window of the convolution mask updater: `K`, stride 1, same padding.
    pub fn rfc_spec(&self) -> SlidingWindowSpec {
        SlidingWindowSpec {
            kernel: self.rfc_kernel,
            stride: 1,
            padding: (self.rfc_kernel - 1) / 2,
        }
    }

    pub fn head_dim(&self) -> usize {
        self.dim / self.heads
    }

    /// Width of one soft-split column, `d·k²`.
    pub fn window_width(&self) -> usize {
        self.dim * self.warp.kernel * self.warp.kernel
    }

    /// Chebyshev radius by which one layer grows a mask with stride-1
    /// windows: `(k_warp − 1) + (K − 1)`, counting only enabled updaters.
    pub fn dilation_radius_per_layer(&self) -> usize {
        if !self.mask_activation || !self.token_selection {
            return 0;
        }
        let au = self.warp.kernel - 1;
        let cu = if self.use_rfc { self.rfc_kernel - 1 } else { 0 };
        au + cu
    }
}
