//! Images, bilinear sampling, inverse warping, checkerboard overlays and PNG I/O.

use std::path::Path;

use image::{DynamicImage, ImageBuffer, Luma, Rgb};

use crate::error::{Error, Result};
use crate::geometry::{invert_homography, HomographyParams, Point};

/// Sampling positions this close to a pixel center (in pixels) snap to it, so
/// identity and integer-shift warps reproduce pixel values exactly.
const SNAP_EPS: f64 = 1e-9;

/// `h x w x d` intensities in `[0, 1]`, row-major with interleaved channels.
#[derive(Debug, Clone, PartialEq)]
pub struct Image {
    h: usize,
    w: usize,
    d: usize,
    data: Vec<f64>,
}

impl Image {
    pub fn new(h: usize, w: usize, d: usize, data: Vec<f64>) -> Result<Self> {
        if h < 2 || w < 2 {
            return Err(Error::InvalidImage(format!("image must be at least 2x2, got {h}x{w}")));
        }
        if d != 1 && d != 3 {
            return Err(Error::InvalidImage(format!("channel count must be 1 or 3, got {d}")));
        }
        if data.len() != h * w * d {
            return Err(Error::InvalidImage(format!("expected {} values, got {}", h * w * d, data.len())));
        }
        if let Some(v) = data.iter().find(|v| !(v.is_finite() && (0.0..=1.0).contains(*v))) {
            return Err(Error::InvalidImage(format!("intensity {v} outside [0, 1]")));
        }
        Ok(Self { h, w, d, data })
    }

    pub fn zeros(h: usize, w: usize, d: usize) -> Result<Self> {
        Self::new(h, w, d, vec![0.0; h * w * d])
    }

    /// Builds an image from `f(row, col, channel)`, clamping into `[0, 1]`.
    pub fn from_fn(h: usize, w: usize, d: usize, mut f: impl FnMut(usize, usize, usize) -> f64) -> Result<Self> {
        let mut data = Vec::with_capacity(h * w * d);
        for r in 0..h {
            for c in 0..w {
                for k in 0..d {
                    data.push(f(r, c, k).clamp(0.0, 1.0));
                }
            }
        }
        Self::new(h, w, d, data)
    }

    pub fn height(&self) -> usize {
        self.h
    }

    pub fn width(&self) -> usize {
        self.w
    }

    pub fn channels(&self) -> usize {
        self.d
    }

    pub fn dims(&self) -> (usize, usize, usize) {
        (self.h, self.w, self.d)
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn get(&self, r: usize, c: usize, k: usize) -> f64 {
        self.data[(r * self.w + c) * self.d + k]
    }

    /// Single-channel copy of channel `k`.
    pub fn channel(&self, k: usize) -> Image {
        let data = self.data.iter().skip(k).step_by(self.d).copied().collect();
        Image { h: self.h, w: self.w, d: 1, data }
    }

    /// Mean over channels.
    pub fn to_gray(&self) -> Image {
        if self.d == 1 {
            return self.clone();
        }
        let data = self.data.chunks_exact(self.d).map(|px| px.iter().sum::<f64>() / self.d as f64).collect();
        Image { h: self.h, w: self.w, d: 1, data }
    }

    pub fn max_abs_diff(&self, other: &Image) -> f64 {
        self.data.iter().zip(&other.data).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max)
    }

    /// Normalized coordinates of pixel `(row, col)`.
    pub fn pixel_to_normalized(&self, r: usize, c: usize) -> Point {
        pixel_to_normalized(r as f64, c as f64, self.h, self.w)
    }
}

pub fn pixel_to_normalized(r: f64, c: f64, h: usize, w: usize) -> Point {
    Point::new(2.0 * c / (w - 1) as f64 - 1.0, 2.0 * r / (h - 1) as f64 - 1.0)
}

/// Returns `(row, col)` in pixel units.
pub fn normalized_to_pixel(pt: Point, h: usize, w: usize) -> (f64, f64) {
    ((pt.y + 1.0) * (h - 1) as f64 / 2.0, (pt.x + 1.0) * (w - 1) as f64 / 2.0)
}

fn split_coord(v: f64, len: usize) -> Option<(usize, usize, f64)> {
    let max = (len - 1) as f64;
    if !(v >= -SNAP_EPS && v <= max + SNAP_EPS) {
        return None;
    }
    let v = v.clamp(0.0, max);
    let mut i0 = v.floor();
    let mut t = v - i0;
    if t < SNAP_EPS {
        t = 0.0;
    } else if t > 1.0 - SNAP_EPS {
        i0 += 1.0;
        t = 0.0;
    }
    let i0 = i0 as usize;
    Some((i0, (i0 + 1).min(len - 1), t))
}

/// Bilinear interpolation at a normalized point; 0 outside the image.
pub fn bilinear_sample(img: &Image, pt: Point) -> Vec<f64> {
    let mut out = vec![0.0; img.d];
    bilinear_sample_into(img, pt, &mut out);
    out
}

fn bilinear_sample_into(img: &Image, pt: Point, out: &mut [f64]) {
    let (r, c) = normalized_to_pixel(pt, img.h, img.w);
    let (Some((r0, r1, tr)), Some((c0, c1, tc))) = (split_coord(r, img.h), split_coord(c, img.w)) else {
        out.iter_mut().for_each(|v| *v = 0.0);
        return;
    };
    for (k, o) in out.iter_mut().enumerate() {
        let v = if tr == 0.0 && tc == 0.0 {
            img.get(r0, c0, k)
        } else {
            let top = img.get(r0, c0, k) * (1.0 - tc) + img.get(r0, c1, k) * tc;
            let bottom = img.get(r1, c0, k) * (1.0 - tc) + img.get(r1, c1, k) * tc;
            top * (1.0 - tr) + bottom * tr
        };
        *o = v.clamp(0.0, 1.0);
    }
}

/// Inverse warp: output pixel `q` takes the source value at `p⁻¹(q)`, so
/// content moves by `p`. Exposed borders are filled with 0.
pub fn warp_image(img: &Image, p: &HomographyParams) -> Result<Image> {
    if *p == HomographyParams::IDENTITY {
        return Ok(img.clone());
    }
    let inv = invert_homography(p)?;
    let mut data = vec![0.0; img.data.len()];
    for r in 0..img.h {
        for c in 0..img.w {
            let q = img.pixel_to_normalized(r, c);
            let base = (r * img.w + c) * img.d;
            // a point mapped through the line at infinity has no source
            if let Ok(src) = inv.apply(q) {
                bilinear_sample_into(img, src, &mut data[base..base + img.d]);
            }
        }
    }
    Ok(Image { h: img.h, w: img.w, d: img.d, data })
}

/// Alternating `tiles x tiles` blocks, the top-left one taken from `a`.
/// Block sizes use ceiling division so non-square images are covered.
pub fn checkerboard_overlay(a: &Image, b: &Image, tiles: usize) -> Result<Image> {
    if a.dims() != b.dims() {
        return Err(Error::DimensionMismatch(format!("{:?} vs {:?}", a.dims(), b.dims())));
    }
    if tiles == 0 {
        return Err(Error::InvalidConfig("tiles must be >= 1".into()));
    }
    let th = a.h.div_ceil(tiles);
    let tw = a.w.div_ceil(tiles);
    let mut data = Vec::with_capacity(a.data.len());
    for r in 0..a.h {
        for c in 0..a.w {
            let src = if (r / th + c / tw) % 2 == 0 { a } else { b };
            let base = (r * a.w + c) * a.d;
            data.extend_from_slice(&src.data[base..base + a.d]);
        }
    }
    Ok(Image { h: a.h, w: a.w, d: a.d, data })
}

pub fn load_png(path: impl AsRef<Path>) -> Result<Image> {
    let path = path.as_ref();
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    let decoded = image::load_from_memory_with_format(&bytes, image::ImageFormat::Png).map_err(|e| {
        Error::UnsupportedFormat { path: path.to_path_buf(), reason: e.to_string() }
    })?;
    let (w, h) = (decoded.width() as usize, decoded.height() as usize);
    let unsupported = |reason: &str| Error::UnsupportedFormat { path: path.to_path_buf(), reason: reason.into() };
    let (d, data): (usize, Vec<f64>) = match decoded {
        DynamicImage::ImageLuma8(buf) => (1, buf.into_raw().into_iter().map(|v| v as f64 / 255.0).collect()),
        DynamicImage::ImageLuma16(buf) => (1, buf.into_raw().into_iter().map(|v| v as f64 / 65535.0).collect()),
        DynamicImage::ImageLumaA8(_) => (1, decoded.to_luma8().into_raw().into_iter().map(|v| v as f64 / 255.0).collect()),
        DynamicImage::ImageLumaA16(_) => {
            (1, decoded.to_luma16().into_raw().into_iter().map(|v| v as f64 / 65535.0).collect())
        }
        DynamicImage::ImageRgb8(buf) => (3, buf.into_raw().into_iter().map(|v| v as f64 / 255.0).collect()),
        DynamicImage::ImageRgb16(buf) => (3, buf.into_raw().into_iter().map(|v| v as f64 / 65535.0).collect()),
        DynamicImage::ImageRgba8(_) => (3, decoded.to_rgb8().into_raw().into_iter().map(|v| v as f64 / 255.0).collect()),
        DynamicImage::ImageRgba16(_) => {
            (3, decoded.to_rgb16().into_raw().into_iter().map(|v| v as f64 / 65535.0).collect())
        }
        _ => return Err(unsupported("only 8/16-bit grayscale or RGB PNG is supported")),
    };
    Image::new(h, w, d, data).map_err(|e| unsupported(&e.to_string()))
}

/// Writes an 8-bit PNG (grayscale for `d = 1`, RGB for `d = 3`).
pub fn save_png(img: &Image, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let quantized: Vec<u8> = img.data.iter().map(|v| (v * 255.0).round().clamp(0.0, 255.0) as u8).collect();
    let (w, h) = (img.w as u32, img.h as u32);
    let result = if img.d == 1 {
        ImageBuffer::<Luma<u8>, _>::from_raw(w, h, quantized).map(|b| b.save_with_format(path, image::ImageFormat::Png))
    } else {
        ImageBuffer::<Rgb<u8>, _>::from_raw(w, h, quantized).map(|b| b.save_with_format(path, image::ImageFormat::Png))
    };
    match result {
        Some(Ok(())) => Ok(()),
        Some(Err(image::ImageError::IoError(e))) => Err(Error::io(path, e)),
        Some(Err(e)) => Err(Error::io(path, std::io::Error::other(e.to_string()))),
        None => Err(Error::InvalidImage("buffer size does not match dimensions".into())),
    }
}
