//! Flat `key = value` run configuration.
//!
//! Blank lines and lines starting with `#` are ignored. Unknown keys and
//! repeated keys are errors. Keys:
//!
//! | key | meaning | default |
//! |-----|---------|---------|
//! | `L` | layers | 4 |
//! | `d` | token width | 64 |
//! | `heads` | attention heads | 4 |
//! | `ffn_hidden` | FFN hidden width | 256 |
//! | `K` | RFC depthwise kernel (odd) | 13 |
//! | `warp_k`, `warp_s`, `warp_p` | soft-split window | 3, 1, 1 |
//! | `C` | encoder/decoder channels | 32 |
//! | `token_selection`, `mask_activation`, `use_rfc` | switches | true |
//! | `lr` | Adam learning rate | 3e-4 |
//! | `lambda_rec`, `lambda_mig` | loss weights | 1.0, 0.1 |
//! | `batch` | clips per step | 2 |
//! | `H`, `W` | frame size | 16, 16 |
//! | `T` | frames per clip (video) | 4 |
//! | `clips` | synthetic clips | 64 |
//! | `mask` | `freeform` or `stationary` | freeform |
//! | `mask_ratio` | hole ratio (freeform) or area (stationary) | 0.3 |

use std::path::Path;
use std::str::FromStr;

use dmt::numerics::SlidingWindowSpec;
use dmt::training::{MaskKind, SyntheticDatasetSpec, TrainConfig};

use crate::error::CliError;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Settings {
    pub train: TrainConfig,
    pub dataset: SyntheticDatasetSpec,
}

impl Default for Settings {
    fn default() -> Self {
        Self {
            train: TrainConfig::default(),
            dataset: SyntheticDatasetSpec::default(),
        }
    }
}

fn value<T: FromStr>(key: &str, raw: &str) -> Result<T, CliError> {
    raw.parse()
        .map_err(|_| CliError::Usage(format!("config key `{key}`: cannot parse `{raw}`")))
}

impl Settings {
    pub fn parse(text: &str) -> Result<Self, CliError> {
        let mut s = Settings::default();
        let mut seen = std::collections::HashSet::new();
        let mut mask_name = "freeform".to_string();
        let mut ratio = 0.3;
        let (mut wk, mut ws, mut wp) = (3, 1, 1);
        for (n, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (key, raw) = line.split_once('=').ok_or_else(|| {
                CliError::Usage(format!("config line {}: expected key = value", n + 1))
            })?;
            let (key, raw) = (key.trim(), raw.trim());
            if !seen.insert(key.to_string()) {
                return Err(CliError::Usage(format!("config key `{key}` given twice")));
            }
            let m = &mut s.train.model;
            match key {
                "L" => m.dmt.layers = value(key, raw)?,
                "d" => m.dmt.dim = value(key, raw)?,
                "heads" => m.dmt.heads = value(key, raw)?,
                "ffn_hidden" => m.dmt.ffn_hidden = value(key, raw)?,
                "K" => m.dmt.rfc_kernel = value(key, raw)?,
                "warp_k" => wk = value(key, raw)?,
                "warp_s" => ws = value(key, raw)?,
                "warp_p" => wp = value(key, raw)?,
                "C" => m.channels = value(key, raw)?,
                "token_selection" => m.dmt.token_selection = value(key, raw)?,
                "mask_activation" => m.dmt.mask_activation = value(key, raw)?,
                "use_rfc" => m.dmt.use_rfc = value(key, raw)?,
                "lr" => s.train.adam.lr = value(key, raw)?,
                "lambda_rec" => s.train.weights.rec = value(key, raw)?,
                "lambda_mig" => s.train.weights.mig = value(key, raw)?,
                "batch" => s.train.batch = value(key, raw)?,
                "H" => s.dataset.height = value(key, raw)?,
                "W" => s.dataset.width = value(key, raw)?,
                "T" => s.dataset.frames = value(key, raw)?,
                "clips" => s.dataset.clips = value(key, raw)?,
                "mask" => mask_name = raw.to_string(),
                "mask_ratio" => ratio = value(key, raw)?,
                _ => return Err(CliError::Usage(format!("unknown config key `{key}`"))),
            }
        }
        s.train.model.dmt.warp = SlidingWindowSpec::new(wk, ws, wp)
            .map_err(|e| CliError::Usage(format!("config: {e}")))?;
        s.dataset.mask = match mask_name.as_str() {
            "freeform" => MaskKind::FreeForm { ratio },
            "stationary" => MaskKind::Stationary { fraction: ratio },
            other => {
                return Err(CliError::Usage(format!(
                    "config key `mask`: unknown generator `{other}`"
                )))
            }
        };
        s.validate()?;
        Ok(s)
    }

    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path).map_err(|e| {
            CliError::Usage(format!("cannot read config {}: {}", path.display(), e))
        })?;
        Self::parse(&text)
    }

    pub fn validate(&self) -> Result<(), CliError> {
        self.train
            .validate()
            .map_err(|e| CliError::Usage(format!("config: {e}")))?;
        self.dataset
            .validate()
            .map_err(|e| CliError::Usage(format!("config: {e}")))?;
        if self.dataset.height % 4 != 0 || self.dataset.width % 4 != 0 {
            return Err(CliError::Usage(format!(
                "config: frame size {}x{} is not divisible by 4",
                self.dataset.height, self.dataset.width
            )));
        }
        Ok(())
    }
}
