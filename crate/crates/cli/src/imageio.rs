//! Frame and mask files: binary PPM (P6) and PGM (P5) natively, PNG with
//! the `png` feature.
//!
//! Mask files are grayscale; a pixel value of 128 or more marks a hole.

use std::fs;
use std::path::{Path, PathBuf};

use dmt::masking::MaskMap;

use crate::error::CliError;

/// Mask pixels at or above this value are holes.
pub const HOLE_THRESHOLD: u8 = 128;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ImageFormat {
    Ppm,
    Pgm,
    Png,
}

impl ImageFormat {
    pub fn from_path(path: &Path) -> Option<Self> {
        match path.extension()?.to_str()?.to_ascii_lowercase().as_str() {
            "ppm" => Some(Self::Ppm),
            "pgm" => Some(Self::Pgm),
            "png" => Some(Self::Png),
            _ => None,
        }
    }
}

/// 8-bit image with 1 (gray) or 3 (RGB) interleaved channels.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Image {
    pub width: usize,
    pub height: usize,
    pub channels: usize,
    pub data: Vec<u8>,
}

impl Image {
    /// Planar `[3 × H × W]` values in `[0, 1]`. Gray images are replicated.
    pub fn to_planar_rgb(&self) -> Vec<f64> {
        let plane = self.width * self.height;
        let mut out = vec![0.0; 3 * plane];
        for i in 0..plane {
            for c in 0..3 {
                let v = self.data[i * self.channels + c.min(self.channels - 1)];
                out[c * plane + i] = v as f64 / 255.0;
            }
        }
        out
    }

    pub fn from_planar_rgb(width: usize, height: usize, planar: &[f64]) -> Self {
        let plane = width * height;
        let mut data = vec![0u8; 3 * plane];
        for i in 0..plane {
            for c in 0..3 {
                data[i * 3 + c] = quantize(planar[c * plane + i]);
            }
        }
        Self {
            width,
            height,
            channels: 3,
            data,
        }
    }

    /// Valid where the gray value is below [`HOLE_THRESHOLD`]. RGB masks use
    /// their first channel.
    pub fn to_mask(&self) -> MaskMap {
        MaskMap::from_fn(self.height, self.width, |y, x| {
            self.data[(y * self.width + x) * self.channels] < HOLE_THRESHOLD
        })
    }

    /// Holes as 255, valid cells as 0.
    pub fn from_mask(mask: &MaskMap) -> Self {
        let (h, w) = mask.dims();
        Self {
            width: w,
            height: h,
            channels: 1,
            data: mask
                .cells()
                .iter()
                .map(|&valid| if valid { 0 } else { 255 })
                .collect(),
        }
    }
}

pub fn quantize(v: f64) -> u8 {
    (v.clamp(0.0, 1.0) * 255.0).round() as u8
}

fn unreadable(path: &Path, reason: impl std::fmt::Display) -> CliError {
    CliError::Data(format!("unreadable image {}: {}", path.display(), reason))
}

/// Splits a Netpbm header into its four tokens and returns the payload
/// offset. `#` comments run to the end of the line.
fn netpbm_header(bytes: &[u8]) -> Option<([String; 4], usize)> {
    let mut tokens = Vec::with_capacity(4);
    let mut i = 0;
    while tokens.len() < 4 {
        while i < bytes.len() && (bytes[i].is_ascii_whitespace() || bytes[i] == b'#') {
            if bytes[i] == b'#' {
                while i < bytes.len() && bytes[i] != b'\n' {
                    i += 1;
                }
            } else {
                i += 1;
            }
        }
        let start = i;
        while i < bytes.len() && !bytes[i].is_ascii_whitespace() && bytes[i] != b'#' {
            i += 1;
        }
        if start == i {
            return None;
        }
        tokens.push(String::from_utf8_lossy(&bytes[start..i]).into_owned());
    }
    // exactly one whitespace byte separates the header from the raster
    if i >= bytes.len() || !bytes[i].is_ascii_whitespace() {
        return None;
    }
    Some((tokens.try_into().ok()?, i + 1))
}

pub fn decode_netpbm(bytes: &[u8]) -> Result<Image, String> {
    let ([magic, w, h, max], offset) = netpbm_header(bytes).ok_or("malformed header")?;
    let channels = match magic.as_str() {
        "P6" => 3,
        "P5" => 1,
        m => return Err(format!("unsupported netpbm type {m}, expected P5 or P6")),
    };
    let parse = |s: &str| {
        s.parse::<usize>()
            .map_err(|_| format!("bad header field `{s}`"))
    };
    let (width, height, maxval) = (parse(&w)?, parse(&h)?, parse(&max)?);
    if maxval != 255 {
        return Err(format!(
            "only 8-bit files are supported, maxval is {maxval}"
        ));
    }
    let len = width * height * channels;
    let data = bytes
        .get(offset..offset + len)
        .ok_or("raster is truncated")?
        .to_vec();
    Ok(Image {
        width,
        height,
        channels,
        data,
    })
}

pub fn encode_netpbm(img: &Image) -> Vec<u8> {
    let magic = if img.channels == 1 { "P5" } else { "P6" };
    let mut out = format!("{}\n{} {}\n255\n", magic, img.width, img.height).into_bytes();
    out.extend_from_slice(&img.data);
    out
}

#[cfg(feature = "png")]
fn read_png(path: &Path) -> Result<Image, String> {
    let img = image::open(path).map_err(|e| e.to_string())?;
    let (channels, data, w, h) = if img.color().has_color() {
        let rgb = img.to_rgb8();
        (3, rgb.as_raw().clone(), rgb.width(), rgb.height())
    } else {
        let gray = img.to_luma8();
        (1, gray.as_raw().clone(), gray.width(), gray.height())
    };
    Ok(Image {
        width: w as usize,
        height: h as usize,
        channels,
        data,
    })
}

#[cfg(not(feature = "png"))]
fn read_png(_: &Path) -> Result<Image, String> {
    Err("PNG support is not compiled in (build with --features png)".into())
}

#[cfg(feature = "png")]
fn write_png(path: &Path, img: &Image) -> Result<(), String> {
    let color = if img.channels == 1 {
        image::ExtendedColorType::L8
    } else {
        image::ExtendedColorType::Rgb8
    };
    image::save_buffer(path, &img.data, img.width as u32, img.height as u32, color)
        .map_err(|e| e.to_string())
}

#[cfg(not(feature = "png"))]
fn write_png(_: &Path, _: &Image) -> Result<(), String> {
    Err("PNG support is not compiled in (build with --features png)".into())
}

pub fn read_image(path: &Path) -> Result<Image, CliError> {
    match ImageFormat::from_path(path) {
        Some(ImageFormat::Png) => read_png(path).map_err(|e| unreadable(path, e)),
        Some(_) => {
            let bytes = fs::read(path).map_err(|e| unreadable(path, e))?;
            decode_netpbm(&bytes).map_err(|e| unreadable(path, e))
        }
        None => Err(unreadable(path, "unknown extension")),
    }
}

pub fn write_image(path: &Path, img: &Image) -> Result<(), CliError> {
    let fail = |e: String| CliError::Data(format!("cannot write {}: {}", path.display(), e));
    match ImageFormat::from_path(path) {
        Some(ImageFormat::Png) => write_png(path, img).map_err(fail),
        Some(_) => fs::write(path, encode_netpbm(img)).map_err(|e| fail(e.to_string())),
        None => Err(fail("unknown extension".into())),
    }
}

/// Image files in `dir` with a recognised extension, sorted by file name.
pub fn list_images(dir: &Path) -> Result<Vec<PathBuf>, CliError> {
    let entries = fs::read_dir(dir)
        .map_err(|e| CliError::Data(format!("cannot read directory {}: {}", dir.display(), e)))?;
    let mut paths = Vec::new();
    for entry in entries {
        let path = entry?.path();
        if path.is_file() && ImageFormat::from_path(&path).is_some() {
            paths.push(path);
        }
    }
    paths.sort();
    Ok(paths)
}
