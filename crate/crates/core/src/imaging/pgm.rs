//! Binary PGM (P5) masks: 0 = background, 255 = object.

use std::path::Path;

use super::grid::{Grid, Mask};
use crate::error::{Error, Result};

fn format_err(name: &str, offset: usize, message: impl Into<String>) -> Error {
    Error::Format {
        path: name.to_string(),
        offset: Some(offset as u64),
        message: message.into(),
    }
}

fn skip_space_and_comments(bytes: &[u8], pos: &mut usize) {
    loop {
        while *pos < bytes.len() && bytes[*pos].is_ascii_whitespace() {
            *pos += 1;
        }
        if *pos < bytes.len() && bytes[*pos] == b'#' {
            while *pos < bytes.len() && bytes[*pos] != b'\n' {
                *pos += 1;
            }
        } else {
            return;
        }
    }
}

fn number(bytes: &[u8], pos: &mut usize, what: &str, name: &str) -> Result<usize> {
    skip_space_and_comments(bytes, pos);
    let start = *pos;
    while *pos < bytes.len() && bytes[*pos].is_ascii_digit() {
        *pos += 1;
    }
    std::str::from_utf8(&bytes[start..*pos])
        .ok()
        .and_then(|s| s.parse().ok())
        .ok_or_else(|| format_err(name, start, format!("bad {what}")))
}

pub fn decode_mask(bytes: &[u8], name: &str) -> Result<Mask> {
    if bytes.len() < 2 || &bytes[..2] != b"P5" {
        return Err(format_err(name, 0, "expected binary PGM magic P5"));
    }
    let mut pos = 2;
    let width = number(bytes, &mut pos, "width", name)?;
    let height = number(bytes, &mut pos, "height", name)?;
    let maxval = number(bytes, &mut pos, "maxval", name)?;
    if width == 0 || height == 0 {
        return Err(format_err(name, 2, "zero dimension"));
    }
    if maxval == 0 || maxval > 255 {
        return Err(format_err(name, pos, format!("unsupported maxval {maxval}")));
    }
    if pos >= bytes.len() || !bytes[pos].is_ascii_whitespace() {
        return Err(format_err(name, pos, "missing whitespace after maxval"));
    }
    pos += 1;
    let payload = &bytes[pos..];
    if payload.len() != width * height {
        return Err(format_err(
            name,
            pos + payload.len().min(width * height),
            format!(
                "payload has {} bytes, header declares {}x{}",
                payload.len(),
                width,
                height
            ),
        ));
    }
    let half = (maxval as u16 + 1) / 2;
    Grid::from_vec(
        width,
        height,
        payload.iter().map(|&b| b as u16 >= half).collect(),
    )
}

pub fn encode_mask(mask: &Mask) -> Vec<u8> {
    let mut out = format!("P5\n{} {}\n255\n", mask.width(), mask.height()).into_bytes();
    out.extend(mask.data().iter().map(|&b| if b { 255u8 } else { 0u8 }));
    out
}

pub fn read_mask(path: impl AsRef<Path>) -> Result<Mask> {
    let path = path.as_ref();
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_mask(&bytes, &path.display().to_string())
}

pub fn write_mask(path: impl AsRef<Path>, mask: &Mask) -> Result<()> {
    let path = path.as_ref();
    std::fs::write(path, encode_mask(mask)).map_err(|e| Error::io(path, e))
}
