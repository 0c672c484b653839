use super::attention::{attention_macs, msa_valid};
use super::config::DmtConfig;
use super::ffn::ffn_tokenwarp;
use super::params::DmtLayerParams;
use super::rfc::rfc_forward;
use crate::error::{Error, Result};
use crate::masking::{
    grid_to_tokens, mask_update_seq, token_scatter, token_select, GridDims, MaskMap, MaskSequence,
};
use crate::numerics::{count_macs, Tensor};

/// Feature grid and per-frame masks entering a layer.
///
/// Invalid cells of `grid` are exactly zero.
#[derive(Debug, Clone)]
pub struct LayerState {
    /// `[T × d × H_g × W_g]`.
    pub grid: Tensor,
    pub masks: MaskSequence,
    /// Number of layers applied so far.
    pub index: usize,
}

impl LayerState {
    /// Zeroes `grid` at invalid cells and checks shapes.
    pub fn new(grid: Tensor, masks: MaskSequence) -> Result<Self> {
        let dims = grid_dims(&grid)?;
        if (dims.frames, dims.height, dims.width) != (masks.len(), masks.dims().0, masks.dims().1) {
            return Err(Error::shape(
                "LayerState::new",
                format!(
                    "grid {:?} vs {} masks of {:?}",
                    grid.shape(),
                    masks.len(),
                    masks.dims()
                ),
            ));
        }
        let d = grid.shape()[1];
        let grid = if masks.is_all_valid() {
            grid
        } else {
            grid.mul(&masks.broadcast(d))?
        };
        Ok(Self {
            grid,
            masks,
            index: 0,
        })
    }

    pub fn dims(&self) -> GridDims {
        grid_dims(&self.grid).expect("checked at construction")
    }
}

fn grid_dims(grid: &Tensor) -> Result<GridDims> {
    match *grid.shape() {
        [t, _, h, w] => Ok(GridDims::new(t, h, w)),
        ref s => Err(Error::shape(
            "LayerState",
            format!("grid must be [T,d,H,W], got {:?}", s),
        )),
    }
}

/// Per-layer instrumentation.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct LayerStats {
    /// Valid tokens entering attention, `N′`.
    pub tokens: usize,
    /// Multiply-accumulates counted inside attention.
    pub attention_macs: u64,
}

/// One masked transformer layer:
///
/// 1. select valid tokens; 2. attention; 3. soft-split FFN;
/// 4. attention mask update with the soft-split window;
/// 5. scatter tokens to the grid; 6. contextualizer with skip;
/// 7. convolution mask update with the `K×K` window;
/// 8. zero cells that are still invalid.
pub fn dmt_layer(
    state: &LayerState,
    params: &DmtLayerParams,
    config: &DmtConfig,
) -> Result<(LayerState, LayerStats)> {
    let dims = state.dims();
    config.validate_grid(dims.height, dims.width)?;
    let d = state.grid.shape()[1];
    if d != config.dim {
        return Err(Error::shape(
            "dmt_layer",
            format!("grid width {} vs config {}", d, config.dim),
        ));
    }

    let batch = token_select(&grid_to_tokens(&state.grid)?, &state.masks)?;
    let tokens = batch.len();
    let (attended, macs) = count_macs(|| msa_valid(&batch, params, config.heads, config.ln_eps));
    let attended = attended?;
    let mixed = ffn_tokenwarp(&attended, params, config.warp, config.ln_eps)?;

    let activate = config.mask_activation && config.token_selection;
    let mut masks = if activate {
        mask_update_seq(&state.masks, config.warp)?
    } else {
        state.masks.clone()
    };

    let mut grid = token_scatter(&mixed)?;
    if config.use_rfc {
        grid = rfc_forward(&grid, params, config.rfc_kernel)?;
        if activate {
            masks = mask_update_seq(&masks, config.rfc_spec())?;
        }
    }
    if !masks.is_all_valid() {
        grid = grid.mul(&masks.broadcast(d))?;
    }

    let stats = LayerStats {
        tokens,
        attention_macs: macs,
    };
    debug_assert_eq!(macs, attention_macs(tokens, d));
    Ok((
        LayerState {
            grid,
            masks,
            index: state.index + 1,
        },
        stats,
    ))
}

/// Per-layer output features `h^(l)` and activated masks `m^(l)`.
#[derive(Debug, Clone, Default)]
pub struct LayerTrace {
    pub entries: Vec<TraceEntry>,
}

#[derive(Debug, Clone)]
pub struct TraceEntry {
    pub grid: Tensor,
    pub masks: MaskSequence,
}

impl LayerTrace {
    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Joins single-frame traces of the same depth along the frame axis.
    pub fn concat_frames(traces: &[LayerTrace]) -> Result<LayerTrace> {
        let first = traces
            .first()
            .ok_or_else(|| Error::shape("LayerTrace::concat_frames", "no traces"))?;
        if traces.iter().any(|t| t.len() != first.len()) {
            return Err(Error::shape(
                "LayerTrace::concat_frames",
                "traces differ in depth",
            ));
        }
        let mut entries = Vec::with_capacity(first.len());
        for l in 0..first.len() {
            let grids: Vec<Tensor> = traces.iter().map(|t| t.entries[l].grid.clone()).collect();
            let masks: Vec<MaskMap> = traces
                .iter()
                .flat_map(|t| t.entries[l].masks.frames().iter().cloned())
                .collect();
            entries.push(TraceEntry {
                grid: Tensor::concat(&grids, 0)?,
                masks: MaskSequence::new(masks)?,
            });
        }
        Ok(LayerTrace { entries })
    }
}

#[derive(Debug, Clone)]
pub struct StackOutput {
    pub state: LayerState,
    pub trace: Option<LayerTrace>,
    pub stats: Vec<LayerStats>,
}

/// Applies `layers.len()` layers in order. With token selection disabled
/// every cell is treated as valid throughout.
pub fn dmt_stack(
    state: &LayerState,
    layers: &[DmtLayerParams],
    config: &DmtConfig,
    record_trace: bool,
) -> Result<StackOutput> {
    if layers.is_empty() {
        return Err(Error::InvalidArgument(
            "a stack needs at least one layer".into(),
        ));
    }
    let mut current = if config.token_selection {
        state.clone()
    } else {
        let (h, w) = state.masks.dims();
        LayerState {
            grid: state.grid.clone(),
            masks: MaskSequence::uniform(MaskMap::all_valid(h, w), state.masks.len())?,
            index: state.index,
        }
    };
    let mut trace = record_trace.then(LayerTrace::default);
    let mut stats = Vec::with_capacity(layers.len());
    for params in layers {
        let (next, s) = dmt_layer(&current, params, config)?;
        if let Some(t) = trace.as_mut() {
            t.entries.push(TraceEntry {
                grid: next.grid.clone(),
                masks: next.masks.clone(),
            });
        }
        stats.push(s);
        current = next;
    }
    Ok(StackOutput {
        state: current,
        trace,
        stats,
    })
}
