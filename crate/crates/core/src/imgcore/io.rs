//! Raster file I/O.
//!
//! Binary PGM (P5) and PPM (P6) with maxval 255 are the native formats and are written
//! bit-exactly as `P5|P6 <w> <h> 255\n` followed by raw bytes. PNG is read and written
//! through the `image` crate. Masks are stored as single-channel rasters with values {0, 255}.

use std::fs;
use std::path::Path;

use super::image::RgbImage;
use super::mask::BinaryMask;
use crate::error::{Error, Result};

enum Raster {
    Gray { width: usize, height: usize, data: Vec<u8> },
    Rgb(RgbImage),
}

fn extension(path: &Path) -> String {
    path.extension()
        .and_then(|e| e.to_str())
        .map(|e| e.to_ascii_lowercase())
        .unwrap_or_default()
}

fn malformed(path: &Path, reason: impl Into<String>) -> Error {
    Error::MalformedHeader {
        path: path.to_path_buf(),
        reason: reason.into(),
    }
}

/// Parses a binary PNM buffer; whitespace and `#` comments are tolerated in the header.
fn parse_pnm(bytes: &[u8], path: &Path) -> Result<Raster> {
    if bytes.len() < 2 || bytes[0] != b'P' {
        return Err(malformed(path, "missing P5/P6 magic"));
    }
    let magic = bytes[1];
    if magic != b'5' && magic != b'6' {
        return Err(Error::UnsupportedFormat {
            path: path.to_path_buf(),
            reason: format!("PNM variant P{} (only binary P5/P6 supported)", magic as char),
        });
    }
    let mut pos = 2;
    let mut fields = [0usize; 3];
    for field in fields.iter_mut() {
        loop {
            match bytes.get(pos) {
                Some(b) if b.is_ascii_whitespace() => pos += 1,
                Some(b'#') => {
                    while pos < bytes.len() && bytes[pos] != b'\n' {
                        pos += 1;
                    }
                }
                Some(_) => break,
                None => return Err(malformed(path, "truncated header")),
            }
        }
        let start = pos;
        while pos < bytes.len() && bytes[pos].is_ascii_digit() {
            pos += 1;
        }
        if start == pos {
            return Err(malformed(path, "expected a decimal header field"));
        }
        let text = std::str::from_utf8(&bytes[start..pos]).expect("ascii digits");
        *field = text
            .parse()
            .map_err(|_| malformed(path, format!("header field {text:?} out of range")))?;
    }
    match bytes.get(pos) {
        Some(b) if b.is_ascii_whitespace() => pos += 1,
        _ => return Err(malformed(path, "header not terminated by whitespace")),
    }
    let [width, height, maxval] = fields;
    if width == 0 || height == 0 {
        return Err(malformed(path, "zero image dimension"));
    }
    if maxval != 255 {
        return Err(Error::UnsupportedFormat {
            path: path.to_path_buf(),
            reason: format!("maxval {maxval} (only 255 supported)"),
        });
    }
    let channels = if magic == b'6' { 3 } else { 1 };
    let need = width
        .checked_mul(height)
        .and_then(|n| n.checked_mul(channels))
        .ok_or_else(|| malformed(path, "dimensions overflow"))?;
    let payload = &bytes[pos..];
    if payload.len() < need {
        return Err(malformed(
            path,
            format!("truncated pixel data: expected {need} bytes, found {}", payload.len()),
        ));
    }
    let data = payload[..need].to_vec();
    Ok(if channels == 3 {
        Raster::Rgb(RgbImage::new(width, height, data)?)
    } else {
        Raster::Gray {
            width,
            height,
            data,
        }
    })
}

fn read_raster(path: &Path) -> Result<Raster> {
    let ext = extension(path);
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    match ext.as_str() {
        "png" => {
            let decoded = image::load_from_memory_with_format(&bytes, image::ImageFormat::Png)
                .map_err(|e| malformed(path, e.to_string()))?;
            match decoded {
                image::DynamicImage::ImageLuma8(g) => Ok(Raster::Gray {
                    width: g.width() as usize,
                    height: g.height() as usize,
                    data: g.into_raw(),
                }),
                other => {
                    let rgb = other.to_rgb8();
                    let (w, h) = (rgb.width() as usize, rgb.height() as usize);
                    Ok(Raster::Rgb(RgbImage::new(w, h, rgb.into_raw())?))
                }
            }
        }
        "ppm" | "pgm" | "pnm" => parse_pnm(&bytes, path),
        _ => Err(Error::UnsupportedFormat {
            path: path.to_path_buf(),
            reason: format!("extension {ext:?}"),
        }),
    }
}

fn write_bytes(path: &Path, bytes: &[u8]) -> Result<()> {
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

fn encode_pnm(magic: &str, width: usize, height: usize, data: &[u8]) -> Vec<u8> {
    let mut out = format!("{magic} {width} {height} 255\n").into_bytes();
    out.extend_from_slice(data);
    out
}

fn write_png(path: &Path, width: usize, height: usize, data: &[u8], color: image::ColorType) -> Result<()> {
    image::save_buffer_with_format(path, data, width as u32, height as u32, color, image::ImageFormat::Png)
        .map_err(|e| match e {
            image::ImageError::IoError(io) => Error::io(path, io),
            other => Error::UnsupportedFormat {
                path: path.to_path_buf(),
                reason: other.to_string(),
            },
        })
}

/// Loads an RGB image; gray rasters are replicated into three channels.
pub fn load_image(path: impl AsRef<Path>) -> Result<RgbImage> {
    match read_raster(path.as_ref())? {
        Raster::Rgb(img) => Ok(img),
        Raster::Gray {
            width,
            height,
            data,
        } => RgbImage::new(width, height, data.iter().flat_map(|&v| [v, v, v]).collect()),
    }
}

pub fn save_image(img: &RgbImage, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    match extension(path).as_str() {
        "ppm" | "pnm" => write_bytes(path, &encode_pnm("P6", img.width(), img.height(), img.data())),
        "pgm" => {
            let gray = super::filter::rgb_to_gray(img);
            let bytes: Vec<u8> = gray.data().iter().map(|v| v.round().clamp(0.0, 255.0) as u8).collect();
            write_bytes(path, &encode_pnm("P5", img.width(), img.height(), &bytes))
        }
        "png" => write_png(path, img.width(), img.height(), img.data(), image::ColorType::Rgb8),
        ext => Err(Error::UnsupportedFormat {
            path: path.to_path_buf(),
            reason: format!("extension {ext:?}"),
        }),
    }
}

pub fn save_mask(mask: &BinaryMask, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let bytes: Vec<u8> = mask.data().iter().map(|&v| if v != 0 { 255 } else { 0 }).collect();
    match extension(path).as_str() {
        "pgm" | "pnm" => write_bytes(path, &encode_pnm("P5", mask.width(), mask.height(), &bytes)),
        "png" => write_png(path, mask.width(), mask.height(), &bytes, image::ColorType::L8),
        ext => Err(Error::UnsupportedFormat {
            path: path.to_path_buf(),
            reason: format!("mask extension {ext:?} (pgm or png expected)"),
        }),
    }
}

/// Loads a single-channel mask; pixels >= 128 are foreground.
pub fn load_mask(path: impl AsRef<Path>) -> Result<BinaryMask> {
    let path = path.as_ref();
    match read_raster(path)? {
        Raster::Gray {
            width,
            height,
            data,
        } => BinaryMask::new(width, height, data.iter().map(|&v| (v >= 128) as u8).collect()),
        Raster::Rgb(_) => Err(Error::UnsupportedFormat {
            path: path.to_path_buf(),
            reason: "mask must be single-channel".into(),
        }),
    }
}
