use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::dmt::{dmt_stack, DmtConfig, DmtLayerParams, LayerState, LayerStats, LayerTrace};
use crate::error::{Error, Result};
use crate::init::kaiming;
use crate::masking::{grid_to_tokens, tokens_to_grid, GridDims, MaskSequence};
use crate::numerics::{ParamSet, SlidingWindowSpec, Tensor};

/// Spatial reduction of the encoder.
pub const DOWNSCALE: usize = 4;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ModelConfig {
    pub dmt: DmtConfig,
    /// Encoder/decoder feature channels `C`.
    pub channels: usize,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            dmt: DmtConfig::default(),
            channels: 32,
        }
    }
}

impl ModelConfig {
    pub fn validate(&self) -> Result<()> {
        self.dmt.validate()?;
        if self.channels == 0 {
            return Err(Error::InvalidArgument("channels must be positive".into()));
        }
        Ok(())
    }

    /// `(name, shape)` of every model tensor.
    pub fn param_shapes(&self) -> Vec<(String, Vec<usize>)> {
        let c = self.channels;
        let d = self.dmt.dim;
        let mut shapes = vec![
            ("enc.conv1.weight".to_string(), vec![c, 4, 3, 3]),
            ("enc.conv1.bias".to_string(), vec![c]),
            ("enc.conv2.weight".to_string(), vec![c, c, 3, 3]),
            ("enc.conv2.bias".to_string(), vec![c]),
            ("tok.weight".to_string(), vec![c, d]),
            ("tok.bias".to_string(), vec![d]),
        ];
        for l in 0..self.dmt.layers {
            for (name, shape) in DmtLayerParams::shapes(&self.dmt) {
                shapes.push((format!("{}{}", layer_prefix(l), name), shape));
            }
        }
        shapes.extend([
            ("detok.weight".to_string(), vec![d, c]),
            ("detok.bias".to_string(), vec![c]),
            ("dec.conv1.weight".to_string(), vec![c, c, 3, 3]),
            ("dec.conv1.bias".to_string(), vec![c]),
            ("dec.conv2.weight".to_string(), vec![3, c, 3, 3]),
            ("dec.conv2.bias".to_string(), vec![3]),
        ]);
        shapes
    }
}

pub(crate) fn layer_prefix(l: usize) -> String {
    format!("layers.{l}.")
}

/// All trainable tensors of one model plus the config they were built for.
#[derive(Debug, Clone)]
pub struct ModelParams {
    pub config: ModelConfig,
    pub params: ParamSet,
}

impl ModelParams {
    /// Fan-in scaled weights, zero biases, unit/zero norm affines.
    pub fn init(config: ModelConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let c = config.channels;
        let d = config.dmt.dim;
        let mut p = ParamSet::new();
        p.insert("enc.conv1.weight", kaiming(&[c, 4, 3, 3], 4 * 9, &mut rng))?;
        p.insert("enc.conv1.bias", Tensor::zeros(&[c]))?;
        p.insert("enc.conv2.weight", kaiming(&[c, c, 3, 3], c * 9, &mut rng))?;
        p.insert("enc.conv2.bias", Tensor::zeros(&[c]))?;
        p.insert("tok.weight", crate::init::lecun(&[c, d], c, &mut rng))?;
        p.insert("tok.bias", Tensor::zeros(&[d]))?;
        for l in 0..config.dmt.layers {
            DmtLayerParams::init(&config.dmt, &mut rng).insert_into(&mut p, &layer_prefix(l))?;
        }
        p.insert("detok.weight", crate::init::lecun(&[d, c], d, &mut rng))?;
        p.insert("detok.bias", Tensor::zeros(&[c]))?;
        p.insert("dec.conv1.weight", kaiming(&[c, c, 3, 3], c * 9, &mut rng))?;
        p.insert("dec.conv1.bias", Tensor::zeros(&[c]))?;
        p.insert(
            "dec.conv2.weight",
            crate::init::lecun(&[3, c, 3, 3], c * 9, &mut rng),
        )?;
        p.insert("dec.conv2.bias", Tensor::zeros(&[3]))?;
        Ok(Self { config, params: p })
    }

    pub fn layer(&self, l: usize) -> Result<DmtLayerParams> {
        DmtLayerParams::from_set(&self.params, &layer_prefix(l))
    }

    pub fn layers(&self) -> Result<Vec<DmtLayerParams>> {
        (0..self.config.dmt.layers).map(|l| self.layer(l)).collect()
    }

    /// Untracked copy for inference or as a frozen prior.
    pub fn frozen(&self) -> Self {
        Self {
            config: self.config,
            params: self.params.frozen(),
        }
    }

    fn get(&self, name: &str) -> Result<&Tensor> {
        self.params.get(name)
    }
}

/// Frames `[T × 3 × H × W]` with values in `[0, 1]`.
#[derive(Debug, Clone)]
pub struct FrameSequence {
    tensor: Tensor,
}

impl FrameSequence {
    /// Clamps values to `[0, 1]`.
    pub fn new(frames: usize, height: usize, width: usize, data: Vec<f64>) -> Result<Self> {
        if frames == 0 {
            return Err(Error::InvalidArgument(
                "a frame sequence needs at least one frame".into(),
            ));
        }
        let data = data.into_iter().map(|v| v.clamp(0.0, 1.0)).collect();
        Ok(Self {
            tensor: Tensor::new(&[frames, 3, height, width], data)?,
        })
    }

    /// Wraps a `[T × 3 × H × W]` tensor as is (no clamping; keeps the graph).
    pub fn from_tensor(tensor: Tensor) -> Result<Self> {
        match *tensor.shape() {
            [t, 3, _, _] if t > 0 => Ok(Self { tensor }),
            ref s => Err(Error::shape(
                "FrameSequence",
                format!("expected [T,3,H,W], got {:?}", s),
            )),
        }
    }

    pub fn tensor(&self) -> &Tensor {
        &self.tensor
    }

    pub fn frames(&self) -> usize {
        self.tensor.shape()[0]
    }

    pub fn height(&self) -> usize {
        self.tensor.shape()[2]
    }

    pub fn width(&self) -> usize {
        self.tensor.shape()[3]
    }

    /// Frame `t` as a one-frame sequence.
    pub fn frame(&self, t: usize) -> Result<FrameSequence> {
        Ok(Self {
            tensor: self.tensor.narrow(0, t, 1)?,
        })
    }

    /// Frame `t` as `3·H·W` values.
    pub fn frame_data(&self, t: usize) -> &[f64] {
        let plane = 3 * self.height() * self.width();
        &self.tensor.data()[t * plane..(t + 1) * plane]
    }
}

fn check_inputs(frames: &FrameSequence, masks: &MaskSequence) -> Result<()> {
    if masks.len() != frames.frames() || masks.dims() != (frames.height(), frames.width()) {
        return Err(Error::shape(
            "forward",
            format!(
                "{} masks of {:?} for {} frames of {}x{}",
                masks.len(),
                masks.dims(),
                frames.frames(),
                frames.height(),
                frames.width()
            ),
        ));
    }
    if frames.height() % DOWNSCALE != 0 || frames.width() % DOWNSCALE != 0 {
        return Err(Error::shape(
            "forward",
            format!(
                "{}x{} is not divisible by {}",
                frames.height(),
                frames.width(),
                DOWNSCALE
            ),
        ));
    }
    Ok(())
}

/// Convolutional encoder: hole pixels zeroed, validity appended as a fourth
/// channel, two stride-2 3×3 stages with GELU. Output `[T × C × H/4 × W/4]`.
pub fn encode(
    frames: &FrameSequence,
    masks: &MaskSequence,
    params: &ModelParams,
) -> Result<Tensor> {
    check_inputs(frames, masks)?;
    let validity = masks.broadcast(1);
    let holes_zeroed = frames.tensor().mul(&masks.broadcast(3))?;
    let input = Tensor::concat(&[holes_zeroed, validity], 1)?;
    let down = SlidingWindowSpec::new(3, 2, 1)?;
    input
        .conv2d(
            params.get("enc.conv1.weight")?,
            Some(params.get("enc.conv1.bias")?),
            down,
        )?
        .gelu()?
        .conv2d(
            params.get("enc.conv2.weight")?,
            Some(params.get("enc.conv2.bias")?),
            down,
        )?
        .gelu()
}

/// Per-cell linear map of a `[T × C × H_g × W_g]` map to `[N × d]` tokens.
pub fn tokenize(features: &Tensor, weight: &Tensor, bias: &Tensor) -> Result<Tensor> {
    grid_to_tokens(features)?.matmul(weight)?.add_bias(bias)
}

/// Tokens `[N × d]` back to a `[T × C × H_g × W_g]` map through `d→C`.
pub fn inverse_tokenize(
    tokens: &Tensor,
    weight: &Tensor,
    bias: &Tensor,
    dims: GridDims,
) -> Result<Tensor> {
    tokens_to_grid(&tokens.matmul(weight)?.add_bias(bias)?, dims)
}

/// Decoder: two nearest ×2 upsample + 3×3 convolution stages, sigmoid
/// output.
pub fn decode(grid: &Tensor, params: &ModelParams) -> Result<FrameSequence> {
    let same = SlidingWindowSpec::new(3, 1, 1)?;
    let out = grid
        .upsample_nearest2x()?
        .conv2d(
            params.get("dec.conv1.weight")?,
            Some(params.get("dec.conv1.bias")?),
            same,
        )?
        .gelu()?
        .upsample_nearest2x()?
        .conv2d(
            params.get("dec.conv2.weight")?,
            Some(params.get("dec.conv2.bias")?),
            same,
        )?
        .sigmoid()?;
    FrameSequence::from_tensor(out)
}

/// Valid pixels from `input`, hole pixels from `raw`.
pub fn compose_output(
    raw: &FrameSequence,
    input: &FrameSequence,
    masks: &MaskSequence,
) -> Result<FrameSequence> {
    if raw.tensor().shape() != input.tensor().shape() {
        return Err(Error::shape(
            "compose_output",
            format!("{:?} vs {:?}", raw.tensor().shape(), input.tensor().shape()),
        ));
    }
    if masks.len() != input.frames() || masks.dims() != (input.height(), input.width()) {
        return Err(Error::shape(
            "compose_output",
            format!(
                "{} masks of {:?} for {:?}",
                masks.len(),
                masks.dims(),
                input.tensor().shape()
            ),
        ));
    }
    let keep = masks.broadcast(3);
    let fill = Tensor::new(keep.shape(), keep.data().iter().map(|v| 1.0 - v).collect())?;
    FrameSequence::from_tensor(input.tensor().mul(&keep)?.add(&raw.tensor().mul(&fill)?)?)
}

#[derive(Debug, Clone)]
pub struct ForwardResult {
    pub raw: FrameSequence,
    pub composed: FrameSequence,
    pub trace: Option<LayerTrace>,
    /// Grid masks before the first layer, then after each layer.
    pub masks: Vec<MaskSequence>,
    pub stats: Vec<LayerStats>,
}

/// encode → downscale masks → tokenize → masked stack → inverse tokenize →
/// decode → compose. A single frame is image mode; the code path is the
/// same.
pub fn forward(
    frames: &FrameSequence,
    masks: &MaskSequence,
    params: &ModelParams,
    record_trace: bool,
) -> Result<ForwardResult> {
    let cfg = &params.config;
    let features = encode(frames, masks, params)?;
    let grid_masks = masks.downscale(DOWNSCALE)?;
    let (gh, gw) = grid_masks.dims();
    let dims = GridDims::new(frames.frames(), gh, gw);
    let tokens = tokenize(
        &features,
        params.get("tok.weight")?,
        params.get("tok.bias")?,
    )?;
    let state = LayerState::new(tokens_to_grid(&tokens, dims)?, grid_masks.clone())?;
    let layers = params.layers()?;
    // Collect masks through the trace even when the caller does not want
    // the features.
    let out = dmt_stack(&state, &layers, &cfg.dmt, true)?;
    let trace = out.trace.expect("trace requested");
    let mut mask_steps = vec![grid_masks];
    mask_steps.extend(trace.entries.iter().map(|e| e.masks.clone()));

    let back = inverse_tokenize(
        &grid_to_tokens(&out.state.grid)?,
        params.get("detok.weight")?,
        params.get("detok.bias")?,
        dims,
    )?;
    let raw = decode(&back, params)?;
    let composed = compose_output(&raw, frames, masks)?;
    Ok(ForwardResult {
        raw,
        composed,
        trace: record_trace.then_some(trace),
        masks: mask_steps,
        stats: out.stats,
    })
}
