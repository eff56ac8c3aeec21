//! Netpbm greyscale images, ASCII (`P2`) and binary (`P5`).

use std::path::Path;

use crate::material::VoxelGrid;
use crate::{Error, Result};

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn err(&self, message: impl Into<String>) -> Error {
        Error::Pgm {
            offset: self.pos,
            message: message.into(),
        }
    }

    /// Skips whitespace and `#` comments.
    fn skip_blank(&mut self) {
        while self.pos < self.bytes.len() {
            let c = self.bytes[self.pos];
            if c == b'#' {
                while self.pos < self.bytes.len() && self.bytes[self.pos] != b'\n' {
                    self.pos += 1;
                }
            } else if c.is_ascii_whitespace() {
                self.pos += 1;
            } else {
                break;
            }
        }
    }

    fn number(&mut self, what: &str) -> Result<u32> {
        self.skip_blank();
        let start = self.pos;
        while self.pos < self.bytes.len() && self.bytes[self.pos].is_ascii_digit() {
            self.pos += 1;
        }
        if start == self.pos {
            return Err(if self.pos >= self.bytes.len() {
                self.err(format!("unexpected end of data reading {what}"))
            } else {
                self.err(format!("expected {what}, found byte 0x{:02x}", self.bytes[self.pos]))
            });
        }
        std::str::from_utf8(&self.bytes[start..self.pos])
            .ok()
            .and_then(|s| s.parse().ok())
            .ok_or_else(|| Error::Pgm {
                offset: start,
                message: format!("{what} out of range"),
            })
    }
}

/// Decodes a PGM image into values in `[0, 1]`, top row first, with unit
/// pixel size.
pub fn parse_pgm(bytes: &[u8]) -> Result<VoxelGrid> {
    let mut c = Cursor { bytes, pos: 0 };
    if bytes.len() < 2 || bytes[0] != b'P' || !(bytes[1] == b'2' || bytes[1] == b'5') {
        return Err(c.err("missing P2/P5 magic number"));
    }
    let binary = bytes[1] == b'5';
    c.pos = 2;
    let width = c.number("width")? as usize;
    let height = c.number("height")? as usize;
    let maxval = c.number("maxval")?;
    if width == 0 || height == 0 {
        return Err(c.err("image has zero size"));
    }
    if maxval == 0 || maxval > 65535 {
        return Err(c.err(format!("maxval {maxval} outside 1..=65535")));
    }
    let n = width * height;
    let scale = 1.0 / maxval as f64;
    let mut values = Vec::with_capacity(n);
    if binary {
        if c.pos >= bytes.len() || !bytes[c.pos].is_ascii_whitespace() {
            return Err(c.err("expected a single whitespace byte after maxval"));
        }
        c.pos += 1;
        let wide = maxval > 255;
        let need = n * if wide { 2 } else { 1 };
        if bytes.len() - c.pos < need {
            c.pos = bytes.len();
            return Err(c.err(format!("truncated raster: {need} bytes expected")));
        }
        for k in 0..n {
            let off = c.pos;
            let v = if wide {
                u16::from_be_bytes([bytes[c.pos], bytes[c.pos + 1]]) as u32
            } else {
                bytes[c.pos] as u32
            };
            c.pos += if wide { 2 } else { 1 };
            if v > maxval {
                return Err(Error::Pgm {
                    offset: off,
                    message: format!("sample {k} = {v} exceeds maxval {maxval}"),
                });
            }
            values.push(v as f64 * scale);
        }
    } else {
        for k in 0..n {
            let v = c.number(&format!("sample {k}"))?;
            if v > maxval {
                return Err(c.err(format!("sample {k} = {v} exceeds maxval {maxval}")));
            }
            values.push(v as f64 * scale);
        }
    }
    VoxelGrid::new(width, height, values, 1.0)
}

pub fn load_pgm(path: &Path) -> Result<VoxelGrid> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    parse_pgm(&bytes)
}

/// Encodes values in `[0, 1]` with `maxval = 255` (binary or ASCII).
pub fn encode_pgm(grid: &VoxelGrid, binary: bool) -> Vec<u8> {
    let q = |v: f64| (v.clamp(0.0, 1.0) * 255.0).round() as u8;
    let mut out = format!(
        "{}\n{} {}\n255\n",
        if binary { "P5" } else { "P2" },
        grid.width,
        grid.height
    )
    .into_bytes();
    if binary {
        out.extend(grid.values.iter().map(|&v| q(v)));
    } else {
        for row in grid.values.chunks(grid.width) {
            let line: Vec<String> = row.iter().map(|&v| q(v).to_string()).collect();
            out.extend_from_slice(line.join(" ").as_bytes());
            out.push(b'\n');
        }
    }
    out
}

pub fn save_pgm(path: &Path, grid: &VoxelGrid) -> Result<()> {
    std::fs::write(path, encode_pgm(grid, true)).map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ascii_and_binary_agree() {
        let a = parse_pgm(b"P2\n# comment\n2 2\n255\n0 255\n255 0\n").unwrap();
        assert_eq!(a.values, vec![0.0, 1.0, 1.0, 0.0]);
        let b = parse_pgm(b"P5 2 2 255\n\x00\xff\xff\x00").unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn sixteen_bit_big_endian() {
        // 0x0100 = 256, 0xffff = 65535
        let g = parse_pgm(b"P5\n2 1\n65535\n\x01\x00\xff\xff").unwrap();
        assert_eq!(g.values, vec![256.0 / 65535.0, 1.0]);
    }

    #[test]
    fn errors_carry_offsets() {
        match parse_pgm(b"P5\n2 2\n255\n\x00\x01") {
            Err(Error::Pgm { offset, .. }) => assert_eq!(offset, 13),
            other => panic!("{other:?}"),
        }
        match parse_pgm(b"P2\n2 x\n") {
            Err(Error::Pgm { offset, .. }) => assert_eq!(offset, 5),
            other => panic!("{other:?}"),
        }
        assert!(parse_pgm(b"P3\n1 1\n255\n0").is_err());
        assert!(parse_pgm(b"P2\n1 1\n10\n11").is_err());
    }

    #[test]
    fn encode_round_trip() {
        let g = VoxelGrid::new(3, 2, vec![0.0, 1.0, 0.2, 0.4, 0.6, 0.8], 1.0).unwrap();
        for binary in [false, true] {
            let back = parse_pgm(&encode_pgm(&g, binary)).unwrap();
            for (a, b) in back.values.iter().zip(&g.values) {
                assert!((a - b).abs() <= 0.5 / 255.0 + 1e-12);
            }
        }
    }
}
