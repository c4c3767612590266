//! Floating-point RGB images and file I/O (PNG, PGM/PPM, 16-bit depth PNG, PFM).

use std::io::{self, Write};
use std::path::Path;

use image::{ImageBuffer, ImageFormat, Luma, Rgb};
use thiserror::Error;

use crate::camera::DepthMap;
use crate::raster::RenderedFrame;

#[derive(Debug, Error)]
pub enum ImageError {
    #[error("image is empty")]
    Empty,
    #[error("image has {got} pixels, expected {expected}")]
    Size { got: usize, expected: usize },
    #[error("pixel {index} has a value outside [0, 1]")]
    OutOfRange { index: usize },
    #[error("{path}: {source}")]
    Codec { path: String, source: image::ImageError },
    #[error(transparent)]
    Io(#[from] io::Error),
}

/// Row-major RGB image with channels in `[0, 1]`.
#[derive(Clone, Debug, PartialEq)]
pub struct RgbImage {
    width: u32,
    height: u32,
    data: Vec<[f64; 3]>,
}

impl RgbImage {
    pub fn new(width: u32, height: u32, data: Vec<[f64; 3]>) -> Result<Self, ImageError> {
        if width == 0 || height == 0 {
            return Err(ImageError::Empty);
        }
        let expected = width as usize * height as usize;
        if data.len() != expected {
            return Err(ImageError::Size { got: data.len(), expected });
        }
        if let Some(index) = data.iter().position(|px| px.iter().any(|c| !(0.0..=1.0).contains(c))) {
            return Err(ImageError::OutOfRange { index });
        }
        Ok(Self { width, height, data })
    }

    /// Grayscale image from row-major intensities.
    pub fn from_gray(width: u32, height: u32, gray: &[f64]) -> Result<Self, ImageError> {
        Self::new(width, height, gray.iter().map(|&g| [g; 3]).collect())
    }

    pub fn filled(width: u32, height: u32, color: [f64; 3]) -> Result<Self, ImageError> {
        Self::new(width, height, vec![color; width as usize * height as usize])
    }

    /// Rendered color clamped to `[0, 1]`.
    pub fn from_frame(frame: &RenderedFrame) -> Self {
        let data = frame.rgb().iter().map(|px| px.map(|c| c.clamp(0.0, 1.0))).collect();
        Self { width: frame.width(), height: frame.height(), data }
    }

    pub fn width(&self) -> u32 {
        self.width
    }

    pub fn height(&self) -> u32 {
        self.height
    }

    pub fn pixels(&self) -> &[[f64; 3]] {
        &self.data
    }

    pub fn get(&self, u: u32, v: u32) -> [f64; 3] {
        self.data[v as usize * self.width as usize + u as usize]
    }

    pub fn to_rgb8(&self) -> Vec<u8> {
        self.data.iter().flat_map(|px| px.map(|c| (c * 255.0).round() as u8)).collect()
    }
}

fn codec_error(path: &Path, source: image::ImageError) -> ImageError {
    ImageError::Codec { path: path.display().to_string(), source }
}

/// Loads any PNG or PNM image, converting to RGB in `[0, 1]`.
pub fn read_image(path: &Path) -> Result<RgbImage, ImageError> {
    let img = image::open(path).map_err(|e| codec_error(path, e))?;
    let (w, h) = (img.width(), img.height());
    // integer samples are divided in f64 so 8-bit values map exactly to v/255
    let data = match img.color().bytes_per_pixel() / img.color().channel_count() {
        1 => img.into_rgb8().pixels().map(|p| p.0.map(|c| c as f64 / 255.0)).collect(),
        2 => img.into_rgb16().pixels().map(|p| p.0.map(|c| c as f64 / 65535.0)).collect(),
        _ => img.into_rgb32f().pixels().map(|p| p.0.map(|c| (c as f64).clamp(0.0, 1.0))).collect(),
    };
    RgbImage::new(w, h, data)
}

/// Writes an 8-bit RGB PNG.
pub fn write_png(image: &RgbImage, path: &Path) -> Result<(), ImageError> {
    let buf: ImageBuffer<Rgb<u8>, _> = ImageBuffer::from_raw(image.width, image.height, image.to_rgb8())
        .expect("buffer matches dimensions");
    buf.save_with_format(path, ImageFormat::Png).map_err(|e| codec_error(path, e))
}

/// Writes depth as a 16-bit grayscale PNG in millimeters (0 = invalid).
pub fn write_depth_png(frame: &RenderedFrame, path: &Path) -> Result<(), ImageError> {
    let buf: ImageBuffer<Luma<u16>, _> = ImageBuffer::from_raw(frame.width(), frame.height(), frame.depth_mm_u16())
        .expect("buffer matches dimensions");
    buf.save_with_format(path, ImageFormat::Png).map_err(|e| codec_error(path, e))
}

/// Reads a 16-bit millimeter depth PNG back into meters.
pub fn read_depth_png(path: &Path) -> Result<DepthMap, ImageError> {
    let img = image::open(path).map_err(|e| codec_error(path, e))?.into_luma16();
    let (w, h) = img.dimensions();
    let data = img.pixels().map(|p| p.0[0] as f64 / 1000.0).collect();
    Ok(DepthMap::new(w, h, data).expect("u16 depths are valid"))
}

/// Writes depth in meters as a grayscale little-endian PFM (rows bottom to top).
pub fn write_pfm<W: Write>(depth: &DepthMap, mut out: W) -> io::Result<()> {
    let (w, h) = (depth.width(), depth.height());
    write!(out, "Pf\n{w} {h}\n-1.0\n")?;
    let mut buf = Vec::with_capacity(w as usize * h as usize * 4);
    for v in (0..h).rev() {
        for u in 0..w {
            buf.extend_from_slice(&(depth.get(u, v) as f32).to_le_bytes());
        }
    }
    out.write_all(&buf)?;
    out.flush()
}

/// Parses a grayscale PFM produced by [`write_pfm`] (either endianness).
pub fn read_pfm(bytes: &[u8]) -> io::Result<DepthMap> {
    let invalid = |m: &str| io::Error::new(io::ErrorKind::InvalidData, m.to_string());
    let mut fields = Vec::new();
    let mut pos = 0;
    while fields.len() < 4 {
        while pos < bytes.len() && bytes[pos].is_ascii_whitespace() {
            pos += 1;
        }
        let start = pos;
        while pos < bytes.len() && !bytes[pos].is_ascii_whitespace() {
            pos += 1;
        }
        if start == pos {
            return Err(invalid("truncated PFM header"));
        }
        fields.push(std::str::from_utf8(&bytes[start..pos]).map_err(|_| invalid("non-ASCII PFM header"))?);
    }
    pos += 1; // single whitespace byte before the raster
    if fields[0] != "Pf" {
        return Err(invalid("only grayscale PFM is supported"));
    }
    let w: u32 = fields[1].parse().map_err(|_| invalid("bad PFM width"))?;
    let h: u32 = fields[2].parse().map_err(|_| invalid("bad PFM height"))?;
    let scale: f64 = fields[3].parse().map_err(|_| invalid("bad PFM scale"))?;
    let n = w as usize * h as usize;
    let body = bytes.get(pos..pos + n * 4).ok_or_else(|| invalid("truncated PFM raster"))?;
    let value = |i: usize| {
        let b: [u8; 4] = body[i * 4..i * 4 + 4].try_into().unwrap();
        if scale < 0.0 { f32::from_le_bytes(b) } else { f32::from_be_bytes(b) }
    };
    let mut data = vec![0.0; n];
    for v in 0..h as usize {
        for u in 0..w as usize {
            data[v * w as usize + u] = value((h as usize - 1 - v) * w as usize + u) as f64;
        }
    }
    DepthMap::new(w, h, data).map_err(|e| invalid(&e.to_string()))
}
