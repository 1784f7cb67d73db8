//! Portable float map (PFM) reading and writing.
//!
//! Header: `Pf` (one channel) or `PF` (three channels), then `W H`, then a
//! scale whose sign gives the byte order (negative = little-endian). Rows
//! are stored bottom to top. We always write little-endian with scale -1.0.

use std::path::Path;

use super::grid::{DepthMap, Grid, IntensityImage, Mask, NormalMap};
use crate::error::{Error, Result};
use crate::geometry::Vec3;

/// Raw decoded PFM: `data` is row-major with row 0 at the top, channels
/// interleaved.
#[derive(Clone, Debug, PartialEq)]
pub struct PfmImage {
    pub width: usize,
    pub height: usize,
    pub channels: usize,
    pub data: Vec<f32>,
}

impl PfmImage {
    pub fn scalar(grid: &Grid<f64>) -> Self {
        PfmImage {
            width: grid.width(),
            height: grid.height(),
            channels: 1,
            data: grid.data().iter().map(|&v| v as f32).collect(),
        }
    }

    pub fn vector(grid: &Grid<Vec3>) -> Self {
        let mut data = Vec::with_capacity(grid.data().len() * 3);
        for v in grid.data() {
            data.extend_from_slice(&[v.x as f32, v.y as f32, v.z as f32]);
        }
        PfmImage {
            width: grid.width(),
            height: grid.height(),
            channels: 3,
            data,
        }
    }
}

fn format_err(name: &str, offset: usize, message: impl Into<String>) -> Error {
    Error::Format {
        path: name.to_string(),
        offset: Some(offset as u64),
        message: message.into(),
    }
}

/// Reads one whitespace-delimited header token starting at `*pos`.
fn token<'a>(bytes: &'a [u8], pos: &mut usize, name: &str) -> Result<(&'a str, usize)> {
    while *pos < bytes.len() && bytes[*pos].is_ascii_whitespace() {
        *pos += 1;
    }
    let start = *pos;
    while *pos < bytes.len() && !bytes[*pos].is_ascii_whitespace() {
        *pos += 1;
    }
    if start == *pos {
        return Err(format_err(name, start, "unexpected end of header"));
    }
    let s = std::str::from_utf8(&bytes[start..*pos])
        .map_err(|_| format_err(name, start, "header is not ASCII"))?;
    Ok((s, start))
}

pub fn decode_pfm(bytes: &[u8], name: &str) -> Result<PfmImage> {
    let mut pos = 0;
    let (magic, at) = token(bytes, &mut pos, name)?;
    let channels = match magic {
        "Pf" => 1,
        "PF" => 3,
        other => return Err(format_err(name, at, format!("bad magic {other:?}"))),
    };
    let dim = |what: &str, pos: &mut usize| -> Result<usize> {
        let (t, at) = token(bytes, pos, name)?;
        match t.parse::<usize>() {
            Ok(v) if v > 0 && v < (1 << 20) => Ok(v),
            _ => Err(format_err(name, at, format!("bad {what} {t:?}"))),
        }
    };
    let width = dim("width", &mut pos)?;
    let height = dim("height", &mut pos)?;
    let (scale_tok, at) = token(bytes, &mut pos, name)?;
    let scale: f64 = scale_tok
        .parse()
        .ok()
        .filter(|s: &f64| s.is_finite() && *s != 0.0)
        .ok_or_else(|| format_err(name, at, format!("bad scale {scale_tok:?}")))?;
    // exactly one whitespace byte separates the header from the payload
    if pos >= bytes.len() || !bytes[pos].is_ascii_whitespace() {
        return Err(format_err(name, pos, "missing newline after scale"));
    }
    pos += 1;
    let little = scale < 0.0;
    let count = width * height * channels;
    let payload = &bytes[pos..];
    if payload.len() != count * 4 {
        return Err(format_err(
            name,
            pos + payload.len().min(count * 4),
            format!(
                "payload has {} bytes, header declares {}x{}x{} floats ({} bytes)",
                payload.len(),
                width,
                height,
                channels,
                count * 4
            ),
        ));
    }
    let mut data = vec![0f32; count];
    let row_len = width * channels;
    for (file_row, chunk) in payload.chunks_exact(row_len * 4).enumerate() {
        let row = height - 1 - file_row;
        for (i, b) in chunk.chunks_exact(4).enumerate() {
            let raw = [b[0], b[1], b[2], b[3]];
            data[row * row_len + i] = if little {
                f32::from_le_bytes(raw)
            } else {
                f32::from_be_bytes(raw)
            };
        }
    }
    Ok(PfmImage {
        width,
        height,
        channels,
        data,
    })
}

pub fn encode_pfm(img: &PfmImage) -> Vec<u8> {
    let magic = if img.channels == 3 { "PF" } else { "Pf" };
    let header = format!("{magic}\n{} {}\n-1.0\n", img.width, img.height);
    let mut out = Vec::with_capacity(header.len() + img.data.len() * 4);
    out.extend_from_slice(header.as_bytes());
    let row_len = img.width * img.channels;
    for row in (0..img.height).rev() {
        for v in &img.data[row * row_len..(row + 1) * row_len] {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    out
}

/// Byte offset of value `(col, row, channel)` inside an encoded file.
pub fn payload_offset(img: &PfmImage, col: usize, row: usize, channel: usize) -> usize {
    let header = format!(
        "{}\n{} {}\n-1.0\n",
        if img.channels == 3 { "PF" } else { "Pf" },
        img.width,
        img.height
    );
    let file_row = img.height - 1 - row;
    header.len() + ((file_row * img.width + col) * img.channels + channel) * 4
}

pub fn read_pfm(path: impl AsRef<Path>) -> Result<PfmImage> {
    let path = path.as_ref();
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_pfm(&bytes, &path.display().to_string())
}

pub fn write_pfm(path: impl AsRef<Path>, img: &PfmImage) -> Result<()> {
    let path = path.as_ref();
    std::fs::write(path, encode_pfm(img)).map_err(|e| Error::io(path, e))
}

fn expect_channels(img: &PfmImage, channels: usize, name: &str) -> Result<()> {
    if img.channels != channels {
        return Err(Error::Format {
            path: name.to_string(),
            offset: Some(0),
            message: format!("expected {channels}-channel PFM, found {}", img.channels),
        });
    }
    Ok(())
}

fn scalar_grid(img: &PfmImage) -> Grid<f64> {
    Grid::from_vec(
        img.width,
        img.height,
        img.data.iter().map(|&v| v as f64).collect(),
    )
    .expect("decoded size matches header")
}

/// Reads a depth map. With a mask, every masked value must be finite and
/// positive; unmasked values are forced to the `0.0` sentinel.
pub fn read_depth(path: impl AsRef<Path>, mask: Option<&Mask>) -> Result<DepthMap> {
    let path = path.as_ref();
    let name = path.display().to_string();
    let img = read_pfm(path)?;
    expect_channels(&img, 1, &name)?;
    let mut grid = scalar_grid(&img);
    if let Some(mask) = mask {
        if !grid.same_size(mask) {
            return Err(Error::Format {
                path: name,
                offset: None,
                message: format!(
                    "depth is {}x{} but mask is {}x{}",
                    grid.width(),
                    grid.height(),
                    mask.width(),
                    mask.height()
                ),
            });
        }
        for row in 0..grid.height() {
            for col in 0..grid.width() {
                let v = *grid.get(col, row);
                if *mask.get(col, row) {
                    if !(v.is_finite() && v > 0.0) {
                        return Err(format_err(
                            &name,
                            payload_offset(&img, col, row, 0),
                            format!("invalid depth {v} at masked pixel ({col}, {row})"),
                        ));
                    }
                } else {
                    grid.set(col, row, 0.0);
                }
            }
        }
    }
    Ok(grid)
}

pub fn write_depth(path: impl AsRef<Path>, depth: &DepthMap, mask: Option<&Mask>) -> Result<()> {
    let grid = match mask {
        Some(m) => Grid::from_fn(depth.width(), depth.height(), |c, r| {
            if *m.get(c, r) {
                *depth.get(c, r)
            } else {
                0.0
            }
        }),
        None => depth.clone(),
    };
    write_pfm(path, &PfmImage::scalar(&grid))
}

pub fn read_scalar(path: impl AsRef<Path>) -> Result<Grid<f64>> {
    let path = path.as_ref();
    let img = read_pfm(path)?;
    expect_channels(&img, 1, &path.display().to_string())?;
    Ok(scalar_grid(&img))
}

pub fn write_scalar(path: impl AsRef<Path>, grid: &Grid<f64>) -> Result<()> {
    write_pfm(path, &PfmImage::scalar(grid))
}

/// Reads an intensity image, clamping values into `[0, 1]`.
pub fn read_intensity(path: impl AsRef<Path>) -> Result<IntensityImage> {
    Ok(read_scalar(path)?.map(|v| v.clamp(0.0, 1.0)))
}

pub fn write_intensity(path: impl AsRef<Path>, img: &IntensityImage) -> Result<()> {
    write_scalar(path, img)
}

pub fn read_normals(path: impl AsRef<Path>) -> Result<NormalMap> {
    let path = path.as_ref();
    let img = read_pfm(path)?;
    expect_channels(&img, 3, &path.display().to_string())?;
    let data = img
        .data
        .chunks_exact(3)
        .map(|c| Vec3::new(c[0] as f64, c[1] as f64, c[2] as f64))
        .collect();
    Grid::from_vec(img.width, img.height, data)
}

pub fn write_normals(path: impl AsRef<Path>, normals: &NormalMap) -> Result<()> {
    write_pfm(path, &PfmImage::vector(normals))
}
