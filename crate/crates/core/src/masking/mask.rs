use crate::error::{Error, Result};
use crate::numerics::Tensor;

/// Binary validity grid of one frame; `true` marks a valid (unmasked) cell.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct MaskMap {
    height: usize,
    width: usize,
    cells: Vec<bool>,
}

impl MaskMap {
    pub fn filled(height: usize, width: usize, valid: bool) -> Self {
        Self {
            height,
            width,
            cells: vec![valid; height * width],
        }
    }

    pub fn all_valid(height: usize, width: usize) -> Self {
        Self::filled(height, width, true)
    }

    pub fn all_invalid(height: usize, width: usize) -> Self {
        Self::filled(height, width, false)
    }

    pub fn from_fn(height: usize, width: usize, mut f: impl FnMut(usize, usize) -> bool) -> Self {
        let mut cells = Vec::with_capacity(height * width);
        for y in 0..height {
            for x in 0..width {
                cells.push(f(y, x));
            }
        }
        Self {
            height,
            width,
            cells,
        }
    }

    /// Row-major cells, `true` = valid.
    pub fn from_cells(height: usize, width: usize, cells: Vec<bool>) -> Result<Self> {
        if cells.len() != height * width {
            return Err(Error::shape(
                "MaskMap::from_cells",
                format!("{} cells for {}x{}", cells.len(), height, width),
            ));
        }
        Ok(Self {
            height,
            width,
            cells,
        })
    }

    /// Parses 0/1 values; anything else is rejected.
    pub fn from_binary(height: usize, width: usize, values: &[f64]) -> Result<Self> {
        let cells = values
            .iter()
            .map(|&v| match v {
                v if v == 1.0 => Ok(true),
                v if v == 0.0 => Ok(false),
                v => Err(Error::InvalidArgument(format!(
                    "mask value {v} is not binary"
                ))),
            })
            .collect::<Result<Vec<_>>>()?;
        Self::from_cells(height, width, cells)
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.height, self.width)
    }

    pub fn len(&self) -> usize {
        self.cells.len()
    }

    pub fn is_empty(&self) -> bool {
        self.cells.is_empty()
    }

    pub fn get(&self, y: usize, x: usize) -> bool {
        self.cells[y * self.width + x]
    }

    pub fn set(&mut self, y: usize, x: usize, valid: bool) {
        self.cells[y * self.width + x] = valid;
    }

    pub fn cells(&self) -> &[bool] {
        &self.cells
    }

    pub fn count_valid(&self) -> usize {
        self.cells.iter().filter(|&&v| v).count()
    }

    pub fn count_invalid(&self) -> usize {
        self.len() - self.count_valid()
    }

    /// Ones over total cells.
    pub fn validity_fraction(&self) -> f64 {
        if self.cells.is_empty() {
            return 0.0;
        }
        self.count_valid() as f64 / self.len() as f64
    }

    pub fn is_all_valid(&self) -> bool {
        self.cells.iter().all(|&v| v)
    }

    /// `self ≤ other` pointwise.
    pub fn is_subset_of(&self, other: &MaskMap) -> bool {
        self.dims() == other.dims() && self.cells.iter().zip(&other.cells).all(|(&a, &b)| !a || b)
    }

    /// Cells as 0.0 / 1.0.
    pub fn to_f64(&self) -> Vec<f64> {
        self.cells
            .iter()
            .map(|&v| if v { 1.0 } else { 0.0 })
            .collect()
    }

    pub fn to_tensor(&self) -> Tensor {
        Tensor::new(&[1, self.height, self.width], self.to_f64()).expect("binary values are finite")
    }

    /// Pooled to a coarser grid: a cell is valid when any pixel of its
    /// `factor × factor` source block is valid.
    pub fn downscale(&self, factor: usize) -> Result<MaskMap> {
        if factor == 0 || self.height % factor != 0 || self.width % factor != 0 {
            return Err(Error::shape(
                "downscale_mask",
                format!(
                    "{}x{} is not divisible by {}",
                    self.height, self.width, factor
                ),
            ));
        }
        let (h, w) = (self.height / factor, self.width / factor);
        let mut out = MaskMap::all_invalid(h, w);
        for y in 0..self.height {
            for x in 0..self.width {
                if self.get(y, x) {
                    out.set(y / factor, x / factor, true);
                }
            }
        }
        Ok(out)
    }
}

/// Per-frame masks sharing one shape.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MaskSequence {
    frames: Vec<MaskMap>,
}

impl MaskSequence {
    pub fn new(frames: Vec<MaskMap>) -> Result<Self> {
        let first = frames.first().ok_or_else(|| {
            Error::InvalidArgument("mask sequence needs at least one frame".into())
        })?;
        if frames.iter().any(|m| m.dims() != first.dims()) {
            return Err(Error::shape("MaskSequence::new", "frames differ in shape"));
        }
        Ok(Self { frames })
    }

    pub fn uniform(mask: MaskMap, frames: usize) -> Result<Self> {
        Self::new(vec![mask; frames])
    }

    pub fn frames(&self) -> &[MaskMap] {
        &self.frames
    }

    pub fn into_frames(self) -> Vec<MaskMap> {
        self.frames
    }

    pub fn len(&self) -> usize {
        self.frames.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frames.is_empty()
    }

    pub fn dims(&self) -> (usize, usize) {
        self.frames[0].dims()
    }

    pub fn count_valid(&self) -> usize {
        self.frames.iter().map(MaskMap::count_valid).sum()
    }

    pub fn total_cells(&self) -> usize {
        self.frames.iter().map(MaskMap::len).sum()
    }

    pub fn validity_fraction(&self) -> f64 {
        self.count_valid() as f64 / self.total_cells() as f64
    }

    pub fn is_all_valid(&self) -> bool {
        self.frames.iter().all(MaskMap::is_all_valid)
    }

    pub fn is_subset_of(&self, other: &MaskSequence) -> bool {
        self.len() == other.len()
            && self
                .frames
                .iter()
                .zip(&other.frames)
                .all(|(a, b)| a.is_subset_of(b))
    }

    pub fn downscale(&self, factor: usize) -> Result<MaskSequence> {
        Ok(Self {
            frames: self
                .frames
                .iter()
                .map(|m| m.downscale(factor))
                .collect::<Result<_>>()?,
        })
    }

    pub fn map(&self, f: impl Fn(&MaskMap) -> Result<MaskMap>) -> Result<MaskSequence> {
        MaskSequence::new(self.frames.iter().map(f).collect::<Result<_>>()?)
    }

    /// Validity broadcast to `[T × channels × H × W]`.
    pub fn broadcast(&self, channels: usize) -> Tensor {
        let (h, w) = self.dims();
        let mut data = Vec::with_capacity(self.len() * channels * h * w);
        for m in &self.frames {
            let plane = m.to_f64();
            for _ in 0..channels {
                data.extend_from_slice(&plane);
            }
        }
        Tensor::new(&[self.len(), channels, h, w], data).expect("binary values are finite")
    }
}

/// `downscale_mask` for a single map.
pub fn downscale_mask(mask: &MaskMap, factor: usize) -> Result<MaskMap> {
    mask.downscale(factor)
}

pub fn validity_fraction(mask: &MaskMap) -> f64 {
    mask.validity_fraction()
}
