use std::path::Path;

use crate::error::{Error, Result};
use crate::synthetic::Image;

pub const PGM_MAXVAL: u16 = 65535;

/// Binary 16-bit greyscale (`P5`, maxval 65535, big-endian samples).
pub fn encode_pgm(image: &Image) -> Vec<u8> {
    let header = format!("P5\n{} {}\n{}\n", image.width, image.height, PGM_MAXVAL);
    let mut out = Vec::with_capacity(header.len() + 2 * image.data.len());
    out.extend_from_slice(header.as_bytes());
    for &v in &image.data {
        let q = (v.clamp(0.0, 1.0) * f64::from(PGM_MAXVAL)).round() as u16;
        out.extend_from_slice(&q.to_be_bytes());
    }
    out
}

fn header_token<'a>(bytes: &'a [u8], pos: &mut usize) -> Result<&'a str> {
    loop {
        while *pos < bytes.len() && bytes[*pos].is_ascii_whitespace() {
            *pos += 1;
        }
        if *pos < bytes.len() && bytes[*pos] == b'#' {
            while *pos < bytes.len() && bytes[*pos] != b'\n' {
                *pos += 1;
            }
            continue;
        }
        break;
    }
    let start = *pos;
    while *pos < bytes.len() && !bytes[*pos].is_ascii_whitespace() {
        *pos += 1;
    }
    if start == *pos {
        return Err(Error::Integrity("truncated PGM header".into()));
    }
    std::str::from_utf8(&bytes[start..*pos]).map_err(|_| Error::Integrity("non-ASCII PGM header".into()))
}

pub fn decode_pgm(bytes: &[u8]) -> Result<Image> {
    let mut pos = 0;
    if header_token(bytes, &mut pos)? != "P5" {
        return Err(Error::Integrity("not a binary PGM (P5)".into()));
    }
    let mut num = |what: &str| -> Result<usize> {
        header_token(bytes, &mut pos)?
            .parse()
            .map_err(|_| Error::Integrity(format!("bad PGM {what}")))
    };
    let width = num("width")?;
    let height = num("height")?;
    let maxval = num("maxval")?;
    if maxval == 0 || maxval > usize::from(PGM_MAXVAL) {
        return Err(Error::Integrity(format!("PGM maxval {maxval} out of range")));
    }
    // Exactly one whitespace byte separates the header from the raster.
    pos += 1;
    let wide = maxval > 255;
    let per = if wide { 2 } else { 1 };
    let raster = bytes.get(pos..).unwrap_or_default();
    if raster.len() != width * height * per {
        return Err(Error::Integrity(format!(
            "PGM raster has {} bytes, expected {}",
            raster.len(),
            width * height * per
        )));
    }
    let scale = maxval as f64;
    let data = if wide {
        raster
            .chunks_exact(2)
            .map(|c| f64::from(u16::from_be_bytes([c[0], c[1]])) / scale)
            .collect()
    } else {
        raster.iter().map(|&b| f64::from(b) / scale).collect()
    };
    Image::new(width, height, data)
}

pub fn write_pgm(path: &Path, image: &Image) -> Result<()> {
    std::fs::write(path, encode_pgm(image)).map_err(|e| Error::io(path, e))
}

pub fn read_pgm(path: &Path) -> Result<Image> {
    decode_pgm(&std::fs::read(path).map_err(|e| Error::io(path, e))?)
}
