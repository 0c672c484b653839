//! Seeded mask generators for training data and benchmarks.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::mask::MaskMap;
use crate::error::{Error, Result};

/// Allowed deviation of the free-form invalid fraction from its target.
pub const FREEFORM_TOLERANCE: f64 = 0.03;
const FREEFORM_ATTEMPTS: usize = 64;
pub const MAX_FREEFORM_RATIO: f64 = 0.95;

/// Random-walk brush strokes painted as holes until the invalid fraction
/// lands within [`FREEFORM_TOLERANCE`] of `target_invalid_ratio`.
///
/// Strokes come in rounds of 1 to 6. Brush thickness is drawn from
/// `2..=h/8` (1 is allowed on grids smaller than 16), segment lengths are
/// multiples of `h/16`. An attempt that overshoots is discarded and a new
/// one drawn from the same generator stream.
pub fn gen_freeform_mask(
    height: usize,
    width: usize,
    target_invalid_ratio: f64,
    seed: u64,
) -> Result<MaskMap> {
    if !(0.0..=MAX_FREEFORM_RATIO).contains(&target_invalid_ratio) {
        return Err(Error::InvalidArgument(format!(
            "free-form invalid ratio {target_invalid_ratio} outside [0, {MAX_FREEFORM_RATIO}]"
        )));
    }
    if height == 0 || width == 0 {
        return Err(Error::InvalidArgument(
            "mask must have at least one cell".into(),
        ));
    }
    if target_invalid_ratio == 0.0 {
        return Ok(MaskMap::all_valid(height, width));
    }
    let total = (height * width) as f64;
    let lo = (((target_invalid_ratio - FREEFORM_TOLERANCE) * total)
        .ceil()
        .max(1.0)) as usize;
    let hi = ((target_invalid_ratio + FREEFORM_TOLERANCE) * total).floor() as usize;

    let side = height.min(width);
    let t_min = if side >= 16 { 2 } else { 1 };
    let t_max = (side / 8).max(t_min);
    let step = (height / 16).max(1) as f64;
    let max_stamps = 64 * height * width;

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for _ in 0..FREEFORM_ATTEMPTS {
        let mut mask = MaskMap::all_valid(height, width);
        let mut invalid = 0usize;
        let mut stamps = 0usize;
        'draw: while stamps < max_stamps {
            let strokes = rng.random_range(1..=6);
            for _ in 0..strokes {
                let thickness = rng.random_range(t_min..=t_max);
                let mut y = rng.random_range(0.0..height as f64);
                let mut x = rng.random_range(0.0..width as f64);
                let mut angle = rng.random_range(0.0..std::f64::consts::TAU);
                let vertices = rng.random_range(4..=16);
                for _ in 0..vertices {
                    angle += rng.random_range(-1.0..1.0);
                    let length = step * rng.random_range(1..=4) as f64;
                    let mut walked = 0.0;
                    while walked < length {
                        invalid += stamp(&mut mask, y, x, thickness);
                        stamps += 1;
                        if invalid >= lo {
                            break 'draw;
                        }
                        y += angle.sin();
                        x += angle.cos();
                        if y < 0.0 || y >= height as f64 {
                            angle = -angle;
                            y = y.clamp(0.0, height as f64 - 1e-9);
                        }
                        if x < 0.0 || x >= width as f64 {
                            angle = std::f64::consts::PI - angle;
                            x = x.clamp(0.0, width as f64 - 1e-9);
                        }
                        walked += 1.0;
                    }
                }
            }
        }
        if (lo..=hi).contains(&invalid) {
            return Ok(mask);
        }
    }
    Err(Error::UnreachableRatio {
        target: target_invalid_ratio,
        tolerance: FREEFORM_TOLERANCE,
        attempts: FREEFORM_ATTEMPTS,
    })
}

/// Paints a `thickness × thickness` hole centered near `(y, x)`; returns
/// the number of newly invalidated cells.
fn stamp(mask: &mut MaskMap, y: f64, x: f64, thickness: usize) -> usize {
    let (h, w) = mask.dims();
    let half = (thickness as isize - 1) / 2;
    let (cy, cx) = (y as isize, x as isize);
    let mut added = 0;
    for yy in cy - half..cy - half + thickness as isize {
        for xx in cx - half..cx - half + thickness as isize {
            if yy >= 0
                && xx >= 0
                && (yy as usize) < h
                && (xx as usize) < w
                && mask.get(yy as usize, xx as usize)
            {
                mask.set(yy as usize, xx as usize, false);
                added += 1;
            }
        }
    }
    added
}

/// Centered rectangular hole covering `rect_fraction` of the frame.
///
/// Side lengths are `round(H·√f)` and `round(W·√f)` (half away from zero),
/// offset by `⌊(H − h)/2⌋`, `⌊(W − w)/2⌋`. The seed is accepted for
/// interface symmetry with the other generators and does not influence the
/// result.
pub fn gen_stationary_mask(
    height: usize,
    width: usize,
    rect_fraction: f64,
    _seed: u64,
) -> Result<MaskMap> {
    if !(rect_fraction > 0.0 && rect_fraction <= 1.0) {
        return Err(Error::InvalidArgument(format!(
            "stationary fraction {rect_fraction} outside (0, 1]"
        )));
    }
    let scale = rect_fraction.sqrt();
    let rh = ((height as f64 * scale).round() as usize).min(height);
    let rw = ((width as f64 * scale).round() as usize).min(width);
    let (top, left) = ((height - rh) / 2, (width - rw) / 2);
    Ok(MaskMap::from_fn(height, width, |y, x| {
        !(y >= top && y < top + rh && x >= left && x < left + rw)
    }))
}

/// Exactly `invalid_count` invalid cells at uniformly random positions.
pub fn gen_random_cells_mask(
    height: usize,
    width: usize,
    invalid_count: usize,
    seed: u64,
) -> Result<MaskMap> {
    let total = height * width;
    if invalid_count > total {
        return Err(Error::InvalidArgument(format!(
            "{invalid_count} invalid cells of {total}"
        )));
    }
    let mut order: Vec<usize> = (0..total).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let mut cells = vec![true; total];
    order[..invalid_count]
        .iter()
        .for_each(|&i| cells[i] = false);
    MaskMap::from_cells(height, width, cells)
}
