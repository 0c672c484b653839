//! Seeded synthetic clips: a colour gradient background with translating
//! rectangles, plus per-frame hole masks.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::masking::{gen_freeform_mask, gen_stationary_mask, MaskSequence};
use crate::pipeline::FrameSequence;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum MaskKind {
    /// Random brush strokes covering `ratio` of each frame, a new mask per
    /// frame.
    FreeForm { ratio: f64 },
    /// One centred rectangle covering `fraction` of the frame, the same in
    /// every frame.
    Stationary { fraction: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SyntheticDatasetSpec {
    pub clips: usize,
    pub frames: usize,
    pub height: usize,
    pub width: usize,
    /// Number of moving rectangles per clip.
    pub rectangles: usize,
    /// Largest per-frame displacement in pixels along each axis.
    pub max_speed: usize,
    pub mask: MaskKind,
    pub seed: u64,
}

impl Default for SyntheticDatasetSpec {
    fn default() -> Self {
        Self {
            clips: 64,
            frames: 4,
            height: 16,
            width: 16,
            rectangles: 2,
            max_speed: 2,
            mask: MaskKind::FreeForm { ratio: 0.3 },
            seed: 0,
        }
    }
}

/// Ground-truth frames and their hole masks (`true` = valid).
#[derive(Debug, Clone)]
pub struct Clip {
    pub frames: FrameSequence,
    pub masks: MaskSequence,
}

fn clip_seed(seed: u64, index: usize) -> u64 {
    seed.wrapping_mul(0x9E37_79B9_7F4A_7C15)
        ^ (index as u64)
            .wrapping_add(1)
            .wrapping_mul(0xBF58_476D_1CE4_E5B9)
}

impl SyntheticDatasetSpec {
    pub fn validate(&self) -> Result<()> {
        if self.clips == 0 || self.frames == 0 || self.height < 4 || self.width < 4 {
            return Err(Error::InvalidArgument(format!(
                "degenerate dataset {self:?}"
            )));
        }
        match self.mask {
            MaskKind::FreeForm { ratio } if !(0.0..=0.95).contains(&ratio) => Err(
                Error::InvalidArgument(format!("free-form ratio {ratio} outside [0, 0.95]")),
            ),
            MaskKind::Stationary { fraction } if !(fraction > 0.0 && fraction <= 1.0) => Err(
                Error::InvalidArgument(format!("stationary fraction {fraction} outside (0, 1]")),
            ),
            _ => Ok(()),
        }
    }

    /// Clip `index`, independent of every other clip.
    pub fn clip(&self, index: usize) -> Result<Clip> {
        self.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(clip_seed(self.seed, index));
        let (h, w, t) = (self.height, self.width, self.frames);

        let c0: [f64; 3] = std::array::from_fn(|_| rng.random_range(0.0..1.0));
        let c1: [f64; 3] = std::array::from_fn(|_| rng.random_range(0.0..1.0));
        let angle: f64 = rng.random_range(0.0..std::f64::consts::TAU);
        let (ca, sa) = (angle.cos(), angle.sin());
        let span = ca.abs() * (w - 1) as f64 + sa.abs() * (h - 1) as f64;
        let offset = ca.min(0.0) * (w - 1) as f64 + sa.min(0.0) * (h - 1) as f64;

        struct Rect {
            y: i64,
            x: i64,
            h: usize,
            w: usize,
            vy: i64,
            vx: i64,
            color: [f64; 3],
        }
        let speed = self.max_speed as i64;
        let rects: Vec<Rect> = (0..self.rectangles)
            .map(|_| Rect {
                y: rng.random_range(0..h as i64),
                x: rng.random_range(0..w as i64),
                h: rng.random_range((h / 4).max(1)..=(h / 2).max(1)),
                w: rng.random_range((w / 4).max(1)..=(w / 2).max(1)),
                vy: rng.random_range(-speed..=speed),
                vx: rng.random_range(-speed..=speed),
                color: std::array::from_fn(|_| rng.random_range(0.0..1.0)),
            })
            .collect();

        let plane = h * w;
        let mut data = vec![0.0; t * 3 * plane];
        for f in 0..t {
            let frame = &mut data[f * 3 * plane..(f + 1) * 3 * plane];
            for y in 0..h {
                for x in 0..w {
                    let s = if span > 0.0 {
                        (ca * x as f64 + sa * y as f64 - offset) / span
                    } else {
                        0.0
                    };
                    for c in 0..3 {
                        frame[c * plane + y * w + x] = c0[c] + (c1[c] - c0[c]) * s;
                    }
                }
            }
            for r in &rects {
                let top = (r.y + r.vy * f as i64).rem_euclid(h as i64) as usize;
                let left = (r.x + r.vx * f as i64).rem_euclid(w as i64) as usize;
                for dy in 0..r.h {
                    for dx in 0..r.w {
                        let (y, x) = ((top + dy) % h, (left + dx) % w);
                        for c in 0..3 {
                            frame[c * plane + y * w + x] = r.color[c];
                        }
                    }
                }
            }
        }

        let masks = match self.mask {
            MaskKind::FreeForm { ratio } => {
                let mut maps = Vec::with_capacity(t);
                for _ in 0..t {
                    let seed: u64 = rng.random();
                    maps.push(gen_freeform_mask(h, w, ratio, seed)?);
                }
                MaskSequence::new(maps)?
            }
            MaskKind::Stationary { fraction } => {
                MaskSequence::uniform(gen_stationary_mask(h, w, fraction, 0)?, t)?
            }
        };
        Ok(Clip {
            frames: FrameSequence::new(t, h, w, data)?,
            masks,
        })
    }

    pub fn generate(&self) -> Result<Vec<Clip>> {
        (0..self.clips).map(|i| self.clip(i)).collect()
    }
}
