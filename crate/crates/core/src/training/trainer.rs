use std::io::Write;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::adam::{adam_step, collect_grads, AdamConfig, OptimizerState};
use super::data::{Clip, SyntheticDatasetSpec};
use super::losses::{l1_loss, migration_loss};
use crate::dmt::LayerTrace;
use crate::error::{Error, Result};
use crate::pipeline::{forward, ModelConfig, ModelParams};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossWeights {
    pub rec: f64,
    pub mig: f64,
}

impl Default for LossWeights {
    fn default() -> Self {
        Self { rec: 1.0, mig: 0.1 }
    }
}

impl LossWeights {
    pub fn validate(&self) -> Result<()> {
        if self.rec.is_finite() && self.mig.is_finite() && self.rec >= 0.0 && self.mig >= 0.0 {
            Ok(())
        } else {
            Err(Error::InvalidArgument(format!(
                "loss weights must be finite and non-negative, got {self:?}"
            )))
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrainConfig {
    pub model: ModelConfig,
    pub adam: AdamConfig,
    pub weights: LossWeights,
    /// Clips per optimizer step.
    pub batch: usize,
    /// Seeds initialization and clip sampling.
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            model: ModelConfig::default(),
            adam: AdamConfig {
                lr: 3e-4,
                ..AdamConfig::default()
            },
            weights: LossWeights::default(),
            batch: 2,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        self.model.validate()?;
        self.adam.validate()?;
        self.weights.validate()?;
        if self.batch == 0 {
            return Err(Error::InvalidArgument("batch must be positive".into()));
        }
        Ok(())
    }
}

/// One line of the training log.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LogRow {
    pub step: usize,
    pub loss_total: f64,
    pub loss_rec: f64,
    pub loss_mig: f64,
}

impl LogRow {
    pub const CSV_HEADER: &'static str = "step,loss_total,loss_rec,loss_mig";

    pub fn csv_line(&self) -> String {
        format!(
            "{},{},{},{}",
            self.step, self.loss_total, self.loss_rec, self.loss_mig
        )
    }
}

pub fn write_log_csv(rows: &[LogRow], mut out: impl Write) -> std::io::Result<()> {
    writeln!(out, "{}", LogRow::CSV_HEADER)?;
    for r in rows {
        writeln!(out, "{}", r.csv_line())?;
    }
    Ok(())
}

/// Trailing mean over the last `window` values at every position.
pub fn running_mean(values: &[f64], window: usize) -> Vec<f64> {
    let window = window.max(1);
    let mut out = Vec::with_capacity(values.len());
    let mut sum = 0.0;
    for (i, &v) in values.iter().enumerate() {
        sum += v;
        if i >= window {
            sum -= values[i - window];
        }
        out.push(sum / (i + 1).min(window) as f64);
    }
    out
}

#[derive(Debug, Clone)]
pub struct TrainOutput {
    pub params: ModelParams,
    pub log: Vec<LogRow>,
}

fn diverged(step: usize, e: Error) -> Error {
    match e {
        Error::NonFinite(_) => Error::Divergence {
            step,
            loss: f64::NAN,
        },
        e => e,
    }
}

struct Trainer {
    params: ModelParams,
    state: OptimizerState,
    rng: ChaCha8Rng,
    clips: Vec<Clip>,
    batch: usize,
}

impl Trainer {
    fn new(config: &TrainConfig, clips: Vec<Clip>) -> Result<Self> {
        config.validate()?;
        Ok(Self {
            params: ModelParams::init(config.model, config.seed)?,
            state: OptimizerState::new(config.adam),
            rng: ChaCha8Rng::seed_from_u64(config.seed ^ 0x5DEE_CE66_D1CE_5EED),
            clips,
            batch: config.batch,
        })
    }

    fn sample(&mut self) -> Vec<usize> {
        (0..self.batch)
            .map(|_| self.rng.random_range(0..self.clips.len()))
            .collect()
    }

    /// Runs `steps` updates. `loss_of` returns `(total, rec, mig)` for one
    /// clip; the batch loss is their mean.
    fn run(
        mut self,
        steps: usize,
        mut loss_of: impl FnMut(&ModelParams, &Clip) -> Result<(crate::numerics::Tensor, f64, f64)>,
    ) -> Result<TrainOutput> {
        let mut log = Vec::with_capacity(steps);
        for step in 0..steps {
            let picks = self.sample();
            let scale = 1.0 / picks.len() as f64;
            let (mut total, mut rec, mut mig) = (0.0, 0.0, 0.0);
            for &i in &picks {
                let (loss, r, m) =
                    loss_of(&self.params, &self.clips[i]).map_err(|e| diverged(step, e))?;
                let value = loss.item()?;
                if !value.is_finite() {
                    return Err(Error::Divergence { step, loss: value });
                }
                loss.scale(scale)
                    .and_then(|l| l.backward())
                    .map_err(|e| diverged(step, e))?;
                total += value * scale;
                rec += r * scale;
                mig += m * scale;
            }
            let grads = collect_grads(&self.params.params);
            if grads.values().flatten().any(|g| !g.is_finite()) {
                return Err(Error::Divergence { step, loss: total });
            }
            adam_step(&mut self.params.params, &grads, &mut self.state)
                .map_err(|e| diverged(step, e))?;
            log.push(LogRow {
                step,
                loss_total: total,
                loss_rec: rec,
                loss_mig: mig,
            });
        }
        Ok(TrainOutput {
            params: self.params,
            log,
        })
    }
}

/// Pretrains the image model on single frames with the L1 loss. The
/// dataset's frame count is forced to 1.
pub fn pretrain_image(
    config: &TrainConfig,
    dataset: &SyntheticDatasetSpec,
    steps: usize,
) -> Result<TrainOutput> {
    let dataset = SyntheticDatasetSpec {
        frames: 1,
        ..*dataset
    };
    let weights = config.weights;
    let trainer = Trainer::new(config, dataset.generate()?)?;
    trainer.run(steps, |params, clip| {
        let out = forward(&clip.frames, &clip.masks, params, false)?;
        let rec = l1_loss(out.raw.tensor(), clip.frames.tensor())?;
        let r = rec.item()?;
        Ok((rec.scale(weights.rec)?, r, 0.0))
    })
}

/// Prior features for a clip: the frozen image model run on each masked
/// frame separately, traces joined along the frame axis.
pub fn prior_trace(prior: &ModelParams, clip: &Clip) -> Result<LayerTrace> {
    let mut traces = Vec::with_capacity(clip.frames.frames());
    for t in 0..clip.frames.frames() {
        let frame = clip.frames.frame(t)?;
        let masks = crate::masking::MaskSequence::new(vec![clip.masks.frames()[t].clone()])?;
        let out = forward(&frame, &masks, prior, true)?;
        traces.push(out.trace.expect("trace requested"));
    }
    LayerTrace::concat_frames(&traces)
}

pub fn check_prior(config: &ModelConfig, prior: &ModelParams) -> Result<()> {
    let (a, b) = (&config.dmt, &prior.config.dmt);
    if a.layers != b.layers || a.dim != b.dim {
        return Err(Error::InvalidArgument(format!(
            "prior has L={}, d={}; video model needs L={}, d={}",
            b.layers, b.dim, a.layers, a.dim
        )));
    }
    Ok(())
}

/// Trains a freshly initialized video model with
/// `λ_rec·L1 + λ_mig·L_mig` against a frozen image prior.
pub fn train_video(
    config: &TrainConfig,
    dataset: &SyntheticDatasetSpec,
    prior: &ModelParams,
    steps: usize,
) -> Result<TrainOutput> {
    check_prior(&config.model, prior)?;
    let frozen = prior.frozen();
    let weights = config.weights;
    let trainer = Trainer::new(config, dataset.generate()?)?;
    trainer.run(steps, |params, clip| {
        let out = forward(&clip.frames, &clip.masks, params, weights.mig > 0.0)?;
        let rec = l1_loss(out.raw.tensor(), clip.frames.tensor())?;
        let r = rec.item()?;
        let mut total = rec.scale(weights.rec)?;
        let mut m = 0.0;
        if weights.mig > 0.0 {
            let prior_features = prior_trace(&frozen, clip)?;
            let mig = migration_loss(
                out.trace.as_ref().expect("trace requested"),
                &prior_features,
            )?;
            m = mig.item()?;
            total = total.add(&mig.scale(weights.mig)?)?;
        }
        Ok((total, r, m))
    })
}
