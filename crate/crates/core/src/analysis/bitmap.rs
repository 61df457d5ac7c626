//! Portable bitmap (PBM) rendering of a bitstream.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::bitgen::BitStream;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PbmFormat {
    /// ASCII `P1`.
    Plain,
    /// Binary `P4`.
    #[default]
    Raw,
}

/// Writes the first `width * height` bits row-major; 1 is black.
pub fn bitmap_write<W: Write>(
    bits: &BitStream,
    width: usize,
    height: usize,
    format: PbmFormat,
    mut w: W,
) -> Result<()> {
    if width == 0 || height == 0 {
        return Err(Error::config("bitmap dimensions must be positive"));
    }
    let need = width
        .checked_mul(height)
        .ok_or_else(|| Error::config("bitmap dimensions overflow"))?;
    if bits.len() < need {
        return Err(Error::data(format!(
            "{width}x{height} bitmap needs {need} bits, stream has {}",
            bits.len()
        )));
    }
    let px = &bits.as_slice()[..need];
    match format {
        PbmFormat::Plain => {
            write!(w, "P1\n{width} {height}\n")?;
            for row in px.chunks(width) {
                let line: Vec<&str> = row.iter().map(|&b| if b == 1 { "1" } else { "0" }).collect();
                writeln!(w, "{}", line.join(" "))?;
            }
        }
        PbmFormat::Raw => {
            write!(w, "P4\n{width} {height}\n")?;
            let mut packed = vec![0u8; width.div_ceil(8)];
            for row in px.chunks(width) {
                packed.fill(0);
                for (i, &b) in row.iter().enumerate() {
                    packed[i / 8] |= b << (7 - i % 8);
                }
                w.write_all(&packed)?;
            }
        }
    }
    Ok(())
}

pub fn bitmap_emit(
    bits: &BitStream,
    width: usize,
    height: usize,
    format: PbmFormat,
    path: impl AsRef<Path>,
) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    bitmap_write(bits, width, height, format, &mut w)?;
    w.flush()?;
    Ok(())
}

/// Decodes a P1 or P4 image into `(width, height, pixels)`.
pub fn parse_pbm(bytes: &[u8]) -> Result<(usize, usize, Vec<u8>)> {
    let mut pos = 0;
    let mut token = |bytes: &[u8]| -> Result<String> {
        loop {
            while pos < bytes.len() && bytes[pos].is_ascii_whitespace() {
                pos += 1;
            }
            if pos < bytes.len() && bytes[pos] == b'#' {
                while pos < bytes.len() && bytes[pos] != b'\n' {
                    pos += 1;
                }
                continue;
            }
            break;
        }
        let start = pos;
        while pos < bytes.len() && !bytes[pos].is_ascii_whitespace() {
            pos += 1;
        }
        if start == pos {
            return Err(Error::format(start as u64, "unexpected end of header"));
        }
        Ok(String::from_utf8_lossy(&bytes[start..pos]).into_owned())
    };
    let magic = token(bytes)?;
    let dim = |s: String, at: usize| {
        s.parse::<usize>()
            .map_err(|_| Error::format(at as u64, format!("bad dimension {s:?}")))
    };
    let width = dim(token(bytes)?, 0)?;
    let height = dim(token(bytes)?, 0)?;
    let header_end = pos;
    match magic.as_str() {
        "P1" => {
            let mut px = Vec::with_capacity(width * height);
            for (i, &c) in bytes[header_end..].iter().enumerate() {
                match c {
                    b'0' | b'1' => px.push(c - b'0'),
                    c if c.is_ascii_whitespace() => {}
                    _ => return Err(Error::format((header_end + i) as u64, "invalid P1 pixel")),
                }
            }
            if px.len() != width * height {
                return Err(Error::format(bytes.len() as u64, "pixel count mismatch"));
            }
            Ok((width, height, px))
        }
        "P4" => {
            let body = &bytes[header_end + 1..];
            let stride = width.div_ceil(8);
            if body.len() != stride * height {
                return Err(Error::format(bytes.len() as u64, "raster size mismatch"));
            }
            let mut px = Vec::with_capacity(width * height);
            for row in body.chunks(stride) {
                for i in 0..width {
                    px.push((row[i / 8] >> (7 - i % 8)) & 1);
                }
            }
            Ok((width, height, px))
        }
        _ => Err(Error::format(0, format!("unsupported magic {magic:?}"))),
    }
}
