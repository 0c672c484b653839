use crate::error::{Error, Result};

/// Kernel, stride and padding of a square sliding window.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct SlidingWindowSpec {
    pub kernel: usize,
    pub stride: usize,
    pub padding: usize,
}

impl SlidingWindowSpec {
    pub fn new(kernel: usize, stride: usize, padding: usize) -> Result<Self> {
        if kernel == 0 || stride == 0 {
            return Err(Error::Window(format!(
                "kernel {kernel} and stride {stride} must be positive"
            )));
        }
        Ok(Self {
            kernel,
            stride,
            padding,
        })
    }

    /// Stride 1 with "same" padding for an odd kernel.
    pub fn same(kernel: usize) -> Result<Self> {
        if kernel % 2 == 0 {
            return Err(Error::Window(format!("kernel {kernel} must be odd")));
        }
        Self::new(kernel, 1, (kernel - 1) / 2)
    }

    /// Number of window positions along an axis of length `extent`:
    /// `⌊(E + 2p − k)/s⌋ + 1`.
    pub fn output_len(&self, extent: usize) -> Result<usize> {
        let padded = extent + 2 * self.padding;
        if self.kernel == 0 || self.stride == 0 || padded < self.kernel {
            return Err(Error::Window(format!(
                "window {}x{} (stride {}, padding {}) does not fit extent {}",
                self.kernel, self.kernel, self.stride, self.padding, extent
            )));
        }
        Ok((padded - self.kernel) / self.stride + 1)
    }

    /// Window grid `(rows, cols)` for an `h × w` input.
    pub fn output_dims(&self, h: usize, w: usize) -> Result<(usize, usize)> {
        Ok((self.output_len(h)?, self.output_len(w)?))
    }
}

impl std::fmt::Display for SlidingWindowSpec {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "k={} s={} p={}", self.kernel, self.stride, self.padding)
    }
}
