//! Binary netpbm: P5 (grayscale) and P6 (RGB), 8- or 16-bit samples.

use std::fs;
use std::path::Path;

use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Pnm {
    pub width: usize,
    pub height: usize,
    /// 1 for P5, 3 for P6.
    pub channels: usize,
    pub maxval: u16,
    /// Interleaved samples, row-major.
    pub data: Vec<u16>,
}

impl Pnm {
    /// Sample `(y, x, c)` scaled to [0, 1].
    pub fn unit(&self, y: usize, x: usize, c: usize) -> f32 {
        self.data[(y * self.width + x) * self.channels + c] as f32 / self.maxval as f32
    }
}

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
    path: &'a str,
}

impl Cursor<'_> {
    fn err(&self, msg: impl Into<String>) -> Error {
        Error::Netpbm {
            path: self.path.into(),
            offset: self.pos,
            msg: msg.into(),
        }
    }

    /// Skips whitespace and `#` comments.
    fn skip_space(&mut self) {
        while let Some(&b) = self.bytes.get(self.pos) {
            if b == b'#' {
                while self.bytes.get(self.pos).is_some_and(|&b| b != b'\n' && b != b'\r') {
                    self.pos += 1;
                }
            } else if b.is_ascii_whitespace() {
                self.pos += 1;
            } else {
                break;
            }
        }
    }

    fn number(&mut self, what: &str) -> Result<usize> {
        self.skip_space();
        let start = self.pos;
        while self.bytes.get(self.pos).is_some_and(u8::is_ascii_digit) {
            self.pos += 1;
        }
        if start == self.pos {
            return Err(self.err(format!("expected {what}")));
        }
        std::str::from_utf8(&self.bytes[start..self.pos])
            .ok()
            .and_then(|s| s.parse().ok())
            .ok_or_else(|| Error::Netpbm {
                path: self.path.into(),
                offset: start,
                msg: format!("{what} out of range"),
            })
    }
}

pub fn parse(bytes: &[u8], path: &str) -> Result<Pnm> {
    let mut c = Cursor { bytes, pos: 0, path };
    let channels = match bytes.get(..2) {
        Some(b"P5") => 1,
        Some(b"P6") => 3,
        _ => return Err(c.err("expected magic P5 or P6")),
    };
    c.pos = 2;
    let width = c.number("width")?;
    let height = c.number("height")?;
    c.skip_space();
    let maxval_at = c.pos;
    let maxval = c.number("maxval")?;
    if width == 0 || height == 0 {
        return Err(c.err("zero image dimension"));
    }
    if maxval == 0 || maxval > 65535 {
        return Err(Error::Netpbm {
            path: path.into(),
            offset: maxval_at,
            msg: format!("maxval {maxval} outside 1..=65535"),
        });
    }
    if !c.bytes.get(c.pos).is_some_and(u8::is_ascii_whitespace) {
        return Err(c.err("expected a single whitespace byte before the raster"));
    }
    c.pos += 1;
    let wide = maxval > 255;
    let count = width * height * channels;
    let need = count * if wide { 2 } else { 1 };
    let raster = &bytes[c.pos..];
    if raster.len() < need {
        return Err(Error::Netpbm {
            path: path.into(),
            offset: bytes.len(),
            msg: format!("raster truncated: {} of {need} bytes", raster.len()),
        });
    }
    let data: Vec<u16> = if wide {
        raster[..need]
            .chunks_exact(2)
            .map(|b| u16::from_be_bytes([b[0], b[1]]))
            .collect()
    } else {
        raster[..need].iter().map(|&b| b as u16).collect()
    };
    if let Some(k) = data.iter().position(|&v| v as usize > maxval) {
        return Err(Error::Netpbm {
            path: path.into(),
            offset: c.pos + k * if wide { 2 } else { 1 },
            msg: format!("sample {} exceeds maxval {maxval}", data[k]),
        });
    }
    Ok(Pnm {
        width,
        height,
        channels,
        maxval: maxval as u16,
        data,
    })
}

pub fn read(path: &Path) -> Result<Pnm> {
    let bytes = fs::read(path)?;
    parse(&bytes, &path.display().to_string())
}

/// 8-bit encoding of interleaved samples (`channels` 1 -> P5, 3 -> P6).
pub fn encode(width: usize, height: usize, channels: usize, data: &[u8]) -> Result<Vec<u8>> {
    let magic = match channels {
        1 => "P5",
        3 => "P6",
        _ => return Err(Error::invalid("netpbm", format!("{channels} channels"))),
    };
    if data.len() != width * height * channels {
        return Err(Error::DimMismatch {
            op: "netpbm",
            dim: "sample count",
            expected: width * height * channels,
            actual: data.len(),
        });
    }
    let mut out = format!("{magic}\n{width} {height}\n255\n").into_bytes();
    out.extend_from_slice(data);
    Ok(out)
}

pub fn write(path: &Path, width: usize, height: usize, channels: usize, data: &[u8]) -> Result<()> {
    fs::write(path, encode(width, height, channels, data)?)?;
    Ok(())
}
