//! Component ablation at toy scale.
//!
//! One image prior is pretrained with the full configuration and shared by
//! every variant; each variant then trains its own video model and is
//! scored on held-out synthetic clips.

use dmt::pipeline::{forward, ModelParams};
use dmt::training::{pretrain_image, train_video, Clip, SyntheticDatasetSpec, TrainConfig};
use serde::Serialize;

use crate::error::CliError;
use crate::metrics::{psnr, ssim, SsimParams};
use crate::settings::Settings;

pub const VARIANTS: [&str; 5] = [
    "full",
    "no_token_selection",
    "no_mask_activation",
    "no_rfc",
    "no_mig",
];

/// Training configuration of a named variant.
pub fn variant_config(base: &TrainConfig, variant: &str) -> Result<TrainConfig, CliError> {
    let mut c = *base;
    match variant {
        "full" => {}
        "no_token_selection" => c.model.dmt.token_selection = false,
        "no_mask_activation" => c.model.dmt.mask_activation = false,
        "no_rfc" => c.model.dmt.use_rfc = false,
        "no_mig" => c.weights.mig = 0.0,
        other => {
            return Err(CliError::Usage(format!(
                "unknown ablation variant `{other}`"
            )))
        }
    }
    Ok(c)
}

#[derive(Debug, Clone, Serialize, PartialEq)]
pub struct AblationRow {
    pub variant: String,
    /// Mean per-frame PSNR of composed outputs, dB.
    pub psnr: Option<f64>,
    pub ssim: f64,
    /// Reconstruction loss of the last training step.
    pub final_loss_rec: Option<f64>,
}

#[derive(Debug, Clone, Serialize, PartialEq)]
pub struct AblationReport {
    pub steps: usize,
    pub eval_clips: usize,
    pub rows: Vec<AblationRow>,
}

impl AblationReport {
    pub const CSV_HEADER: &'static str = "variant,psnr_db,ssim,final_loss_rec";

    pub fn to_csv(&self) -> String {
        let mut out = format!("{}\n", Self::CSV_HEADER);
        for r in &self.rows {
            let p = r.psnr.map_or("inf".to_string(), |v| v.to_string());
            let l = r.final_loss_rec.map_or(String::new(), |v| v.to_string());
            out.push_str(&format!("{},{},{},{}\n", r.variant, p, r.ssim, l));
        }
        out
    }
}

/// Mean PSNR (finite frames only; `None` if every frame is exact) and mean
/// SSIM of composed outputs over `clips`.
pub fn evaluate(params: &ModelParams, clips: &[Clip]) -> Result<(Option<f64>, f64), CliError> {
    let (mut psnrs, mut ssims) = (Vec::new(), Vec::new());
    for clip in clips {
        let out = forward(&clip.frames, &clip.masks, params, false)?;
        psnrs.extend(
            psnr(&out.composed, &clip.frames, 1.0)?
                .into_iter()
                .flatten(),
        );
        ssims.extend(ssim(&out.composed, &clip.frames, SsimParams::default())?);
    }
    let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
    Ok(((!psnrs.is_empty()).then(|| mean(&psnrs)), mean(&ssims)))
}

pub fn run_ablation(
    settings: &Settings,
    steps: usize,
    eval_clips: usize,
    seed: u64,
) -> Result<AblationReport, CliError> {
    let base = TrainConfig {
        seed,
        ..settings.train
    };
    let train_set = SyntheticDatasetSpec {
        seed,
        ..settings.dataset
    };
    let held_out = SyntheticDatasetSpec {
        clips: eval_clips,
        seed: seed.wrapping_add(0x00C0_FFEE),
        ..settings.dataset
    }
    .generate()?;
    let prior = pretrain_image(&base, &train_set, steps)?.params;
    let mut rows = Vec::with_capacity(VARIANTS.len());
    for variant in VARIANTS {
        let cfg = variant_config(&base, variant)?;
        let trained = train_video(&cfg, &train_set, &prior, steps)?;
        let (p, s) = evaluate(&trained.params, &held_out)?;
        rows.push(AblationRow {
            variant: variant.to_string(),
            psnr: p,
            ssim: s,
            final_loss_rec: trained.log.last().map(|r| r.loss_rec),
        });
    }
    Ok(AblationReport {
        steps,
        eval_clips,
        rows,
    })
}
