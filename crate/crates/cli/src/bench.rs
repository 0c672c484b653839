//! Attention cost and latency versus hole ratio.

use std::time::Instant;

use dmt::dmt::{attention_macs, dmt_stack, DmtConfig, DmtLayerParams, LayerState};
use dmt::masking::{gen_freeform_mask, MaskMap, MaskSequence, MAX_FREEFORM_RATIO};
use dmt::numerics::Tensor;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::Serialize;

use crate::error::CliError;

pub const WARMUP_RUNS: usize = 3;

#[derive(Debug, Clone, PartialEq)]
pub struct BenchSettings {
    pub dmt: DmtConfig,
    pub frames: usize,
    /// Token grid size (frame size / 4).
    pub grid_height: usize,
    pub grid_width: usize,
    pub ratios: Vec<f64>,
    pub repetitions: usize,
    pub seed: u64,
}

impl Default for BenchSettings {
    fn default() -> Self {
        Self {
            dmt: DmtConfig {
                layers: 1,
                ..DmtConfig::default()
            },
            frames: 8,
            grid_height: 16,
            grid_width: 16,
            ratios: vec![0.0, 0.1, 0.3, 0.6, 0.9],
            repetitions: 20,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, Serialize, PartialEq)]
pub struct BenchRow {
    /// Requested hole ratio.
    pub mask_ratio: f64,
    /// Measured hole ratio of the generated grid masks.
    pub measured_ratio: f64,
    /// All tokens, `N = T·H_g·W_g`.
    pub n_tokens: usize,
    /// Valid tokens entering the first layer, `N′`.
    pub valid_tokens: usize,
    /// `Σ_l 4·N′_l·d² + 2·N′_l²·d` over the stack.
    pub formula_macs: u64,
    /// Multiply-accumulates counted inside attention.
    pub counted_macs: u64,
    pub mean_ms: f64,
    pub std_ms: f64,
}

#[derive(Debug, Clone, Serialize, PartialEq)]
pub struct BenchConfigEcho {
    pub layers: usize,
    pub dim: usize,
    pub heads: usize,
    pub frames: usize,
    pub grid_height: usize,
    pub grid_width: usize,
    pub seed: u64,
}

#[derive(Debug, Clone, Serialize, PartialEq)]
pub struct BenchReport {
    pub config: BenchConfigEcho,
    pub warmup_runs: usize,
    pub repetitions: usize,
    pub rows: Vec<BenchRow>,
}

impl BenchReport {
    pub const CSV_HEADER: &'static str =
        "mask_ratio,measured_ratio,n_tokens,valid_tokens,formula_macs,counted_macs,mean_ms,std_ms";

    pub fn to_csv(&self) -> String {
        let mut out = format!("{}\n", Self::CSV_HEADER);
        for r in &self.rows {
            out.push_str(&format!(
                "{},{},{},{},{},{},{},{}\n",
                r.mask_ratio,
                r.measured_ratio,
                r.n_tokens,
                r.valid_tokens,
                r.formula_macs,
                r.counted_macs,
                r.mean_ms,
                r.std_ms
            ));
        }
        out
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }
}

/// Per-frame free-form grid masks at `ratio`; ratio 0 is hole-free.
pub fn bench_masks(
    frames: usize,
    h: usize,
    w: usize,
    ratio: f64,
    seed: u64,
) -> Result<MaskSequence, CliError> {
    let maps = (0..frames)
        .map(|t| {
            if ratio == 0.0 {
                Ok(MaskMap::all_valid(h, w))
            } else {
                gen_freeform_mask(h, w, ratio, seed.wrapping_add(t as u64))
            }
        })
        .collect::<Result<Vec<_>, _>>()?;
    Ok(MaskSequence::new(maps)?)
}

fn mean_std(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    if xs.len() < 2 {
        return (mean, 0.0);
    }
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

/// Runs the masked stack forward at every ratio: [`WARMUP_RUNS`] untimed
/// runs, then `repetitions` timed runs on a monotonic clock.
pub fn run_bench(s: &BenchSettings) -> Result<BenchReport, CliError> {
    s.dmt
        .validate()
        .map_err(|e| CliError::Usage(e.to_string()))?;
    if s.repetitions == 0 || s.frames == 0 {
        return Err(CliError::Usage(
            "repetitions and frames must be positive".into(),
        ));
    }
    if let Some(r) = s
        .ratios
        .iter()
        .find(|r| !(0.0..=MAX_FREEFORM_RATIO).contains(*r))
    {
        return Err(CliError::Usage(format!(
            "mask ratio {r} outside [0, {MAX_FREEFORM_RATIO}]"
        )));
    }
    let mut ratios = s.ratios.clone();
    ratios.sort_by(f64::total_cmp);

    let mut rng = ChaCha8Rng::seed_from_u64(s.seed);
    let layers: Vec<DmtLayerParams> = (0..s.dmt.layers)
        .map(|_| DmtLayerParams::init(&s.dmt, &mut rng))
        .collect();
    let (t, h, w, d) = (s.frames, s.grid_height, s.grid_width, s.dmt.dim);
    let features: Vec<f64> = (0..t * d * h * w)
        .map(|_| StandardNormal.sample(&mut rng))
        .collect();
    let grid = Tensor::new(&[t, d, h, w], features)?;

    let mut rows = Vec::with_capacity(ratios.len());
    for (i, &ratio) in ratios.iter().enumerate() {
        let masks = bench_masks(t, h, w, ratio, s.seed.wrapping_add(1000 * i as u64))?;
        let state = LayerState::new(grid.clone(), masks.clone())?;
        for _ in 0..WARMUP_RUNS {
            dmt_stack(&state, &layers, &s.dmt, false)?;
        }
        let mut times = Vec::with_capacity(s.repetitions);
        let mut stats = Vec::new();
        for _ in 0..s.repetitions {
            let start = Instant::now();
            let out = dmt_stack(&state, &layers, &s.dmt, false)?;
            times.push(start.elapsed().as_secs_f64() * 1e3);
            stats = out.stats;
        }
        let (mean_ms, std_ms) = mean_std(&times);
        let n = t * h * w;
        rows.push(BenchRow {
            mask_ratio: ratio,
            measured_ratio: 1.0 - masks.validity_fraction(),
            n_tokens: n,
            valid_tokens: stats[0].tokens,
            formula_macs: stats.iter().map(|st| attention_macs(st.tokens, d)).sum(),
            counted_macs: stats.iter().map(|st| st.attention_macs).sum(),
            mean_ms,
            std_ms,
        });
    }
    Ok(BenchReport {
        config: BenchConfigEcho {
            layers: s.dmt.layers,
            dim: d,
            heads: s.dmt.heads,
            frames: t,
            grid_height: h,
            grid_width: w,
            seed: s.seed,
        },
        warmup_runs: WARMUP_RUNS,
        repetitions: s.repetitions,
        rows,
    })
}
