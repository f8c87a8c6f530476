//! Binary graymap (P5) encoding of density images.
//!
//! Solid is black: a pixel of density `ρ` is stored as `round(255 (1 − ρ))`.

use super::Image;
use crate::error::{Error, Result};

const MAXVAL: u16 = 255;

pub fn write_pgm(img: &Image) -> Result<Vec<u8>> {
    let header = format!("P5\n{} {}\n{}\n", img.width(), img.height(), MAXVAL);
    let mut out = Vec::with_capacity(header.len() + img.pixels().len());
    out.extend_from_slice(header.as_bytes());
    for (i, &v) in img.pixels().iter().enumerate() {
        if !(0.0..=1.0).contains(&v) {
            return Err(Error::InvalidInput(format!("pixel {i} value {v} outside [0, 1]")));
        }
        out.push((255.0 * (1.0 - v)).round() as u8);
    }
    Ok(out)
}

pub fn read_pgm(bytes: &[u8]) -> Result<Image> {
    let mut cur = Cursor { bytes, pos: 0 };
    if bytes.get(..2) != Some(b"P5".as_slice()) {
        return Err(Error::Format("not a binary PGM (missing P5 magic)".into()));
    }
    cur.pos = 2;
    let width = cur.number("width")?;
    let height = cur.number("height")?;
    let maxval = cur.number("maxval")?;
    if width == 0 || height == 0 {
        return Err(Error::Format(format!("empty PGM {width}x{height}")));
    }
    if maxval == 0 || maxval > 255 {
        return Err(Error::Format(format!("unsupported maxval {maxval}")));
    }
    // exactly one whitespace byte separates the header from the raster
    match bytes.get(cur.pos) {
        Some(b) if b.is_ascii_whitespace() => cur.pos += 1,
        _ => return Err(Error::Format("missing whitespace after maxval".into())),
    }
    let n = width
        .checked_mul(height)
        .ok_or_else(|| Error::Format("PGM dimensions overflow".into()))?;
    let raster = &bytes[cur.pos..];
    if raster.len() < n {
        return Err(Error::Format(format!(
            "truncated PGM raster: {} of {n} bytes",
            raster.len()
        )));
    }
    let scale = maxval as f64;
    let pixels = raster[..n].iter().map(|&b| 1.0 - (b as f64 / scale).min(1.0)).collect();
    Image::new(width, height, pixels)
}

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl Cursor<'_> {
    fn skip_space(&mut self) {
        while let Some(&b) = self.bytes.get(self.pos) {
            if b == b'#' {
                while let Some(&c) = self.bytes.get(self.pos) {
                    self.pos += 1;
                    if c == b'\n' || c == b'\r' {
                        break;
                    }
                }
            } else if b.is_ascii_whitespace() {
                self.pos += 1;
            } else {
                break;
            }
        }
    }

    fn number(&mut self, what: &str) -> Result<usize> {
        let start = self.pos;
        self.skip_space();
        if self.pos == start {
            return Err(Error::Format(format!("expected whitespace before {what}")));
        }
        let digits = self.bytes[self.pos..].iter().take_while(|b| b.is_ascii_digit()).count();
        if digits == 0 {
            return Err(Error::Format(format!("malformed PGM header: missing {what}")));
        }
        let text = std::str::from_utf8(&self.bytes[self.pos..self.pos + digits]).expect("ascii digits");
        self.pos += digits;
        text.parse()
            .map_err(|_| Error::Format(format!("PGM {what} out of range: {text}")))
    }
}
