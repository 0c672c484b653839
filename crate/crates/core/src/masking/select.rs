//! Gathering valid tokens out of the spatiotemporal grid and back.

use super::mask::MaskSequence;
use crate::error::{Error, Result};
use crate::numerics::Tensor;

/// `(T, H_g, W_g)` of the token grid.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct GridDims {
    pub frames: usize,
    pub height: usize,
    pub width: usize,
}

impl GridDims {
    pub fn new(frames: usize, height: usize, width: usize) -> Self {
        Self {
            frames,
            height,
            width,
        }
    }

    /// `N = T·H_g·W_g`.
    pub fn cells(&self) -> usize {
        self.frames * self.height * self.width
    }

    /// Flat token index, raster order within a frame, frames outermost.
    pub fn flat(&self, idx: GridIndex) -> usize {
        (idx.t * self.height + idx.y) * self.width + idx.x
    }

    pub fn unflat(&self, n: usize) -> GridIndex {
        let plane = self.height * self.width;
        GridIndex {
            t: n / plane,
            y: (n % plane) / self.width,
            x: n % self.width,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct GridIndex {
    pub t: usize,
    pub y: usize,
    pub x: usize,
}

/// The `N′ × d` valid-only token matrix and where each row lives.
#[derive(Debug, Clone)]
pub struct TokenBatch {
    tokens: Tensor,
    index_map: Vec<GridIndex>,
    grid: GridDims,
}

impl TokenBatch {
    pub fn new(tokens: Tensor, index_map: Vec<GridIndex>, grid: GridDims) -> Result<Self> {
        match tokens.shape() {
            [n, _] if *n == index_map.len() => {}
            s => {
                return Err(Error::shape(
                    "TokenBatch::new",
                    format!("tokens {:?} for {} indices", s, index_map.len()),
                ))
            }
        }
        let mut seen = vec![false; grid.cells()];
        for idx in &index_map {
            if idx.t >= grid.frames || idx.y >= grid.height || idx.x >= grid.width {
                return Err(Error::shape(
                    "TokenBatch::new",
                    format!("{:?} outside {:?}", idx, grid),
                ));
            }
            if std::mem::replace(&mut seen[grid.flat(*idx)], true) {
                return Err(Error::InvalidArgument(format!(
                    "duplicate grid index {idx:?}"
                )));
            }
        }
        Ok(Self {
            tokens,
            index_map,
            grid,
        })
    }

    pub fn tokens(&self) -> &Tensor {
        &self.tokens
    }

    pub fn index_map(&self) -> &[GridIndex] {
        &self.index_map
    }

    pub fn grid(&self) -> GridDims {
        self.grid
    }

    /// `N′`.
    pub fn len(&self) -> usize {
        self.index_map.len()
    }

    pub fn is_empty(&self) -> bool {
        self.index_map.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.tokens.shape()[1]
    }

    /// Flat grid positions of the rows.
    pub fn rows(&self) -> Vec<usize> {
        self.index_map.iter().map(|&i| self.grid.flat(i)).collect()
    }

    /// Same index map, new `N′ × d'` token matrix.
    pub fn with_tokens(&self, tokens: Tensor) -> Result<Self> {
        if tokens.rank() != 2 || tokens.shape()[0] != self.len() {
            return Err(Error::shape(
                "TokenBatch::with_tokens",
                format!("{:?} for {} tokens", tokens.shape(), self.len()),
            ));
        }
        Ok(Self {
            tokens,
            index_map: self.index_map.clone(),
            grid: self.grid,
        })
    }
}

fn grid_dims_of(op: &'static str, grid: &Tensor) -> Result<(GridDims, usize)> {
    match *grid.shape() {
        [t, d, h, w] => Ok((GridDims::new(t, h, w), d)),
        ref s => Err(Error::shape(op, format!("expected [T,d,H,W], got {:?}", s))),
    }
}

/// `[T×d×H×W] → [N×d]`, token `n = (t·H + y)·W + x`.
pub fn grid_to_tokens(grid: &Tensor) -> Result<Tensor> {
    let (dims, d) = grid_dims_of("grid_to_tokens", grid)?;
    grid.permute(&[0, 2, 3, 1])?.reshape(&[dims.cells(), d])
}

/// Inverse of [`grid_to_tokens`].
pub fn tokens_to_grid(tokens: &Tensor, dims: GridDims) -> Result<Tensor> {
    let d = match *tokens.shape() {
        [n, d] if n == dims.cells() => d,
        ref s => {
            return Err(Error::shape(
                "tokens_to_grid",
                format!("{:?} for grid {:?}", s, dims),
            ))
        }
    };
    tokens
        .reshape(&[dims.frames, dims.height, dims.width, d])?
        .permute(&[0, 3, 1, 2])
}

/// Gathers the rows of `features` (`N × d`) whose grid cell is valid.
pub fn token_select(features: &Tensor, masks: &MaskSequence) -> Result<TokenBatch> {
    let (h, w) = masks.dims();
    let grid = GridDims::new(masks.len(), h, w);
    match *features.shape() {
        [n, _] if n == grid.cells() => {}
        ref s => {
            return Err(Error::shape(
                "token_select",
                format!("features {:?} for a grid of {} cells", s, grid.cells()),
            ))
        }
    }
    let mut index_map = Vec::with_capacity(masks.count_valid());
    for (t, m) in masks.frames().iter().enumerate() {
        for y in 0..h {
            for x in 0..w {
                if m.get(y, x) {
                    index_map.push(GridIndex { t, y, x });
                }
            }
        }
    }
    let rows: Vec<usize> = index_map.iter().map(|&i| grid.flat(i)).collect();
    let tokens = features.index_select(&rows)?;
    TokenBatch::new(tokens, index_map, grid)
}

/// Places tokens back on the `[T×d×H×W]` grid; unlisted cells are zero.
pub fn token_scatter(batch: &TokenBatch) -> Result<Tensor> {
    let full = batch
        .tokens()
        .scatter_rows(&batch.rows(), batch.grid().cells())?;
    tokens_to_grid(&full, batch.grid())
}
