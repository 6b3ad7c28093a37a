//! Periodic binary pixel grids.

use crate::error::{Error, Result};
use std::io::{BufRead, BufReader, Read, Write};
use std::path::Path;

/// A periodic two-phase image: 0 is the matrix phase `a`, 1 the inclusion
/// phase `b`. Pixels are stored row-major; every geometric query wraps.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MicrostructureImage {
    resolution: usize,
    pixels: Vec<u8>,
}

impl MicrostructureImage {
    /// Builds an image from a per-pixel predicate; `f(row, col)` marks
    /// inclusion pixels.
    pub fn from_fn(resolution: usize, mut f: impl FnMut(usize, usize) -> bool) -> Self {
        let mut pixels = vec![0u8; resolution * resolution];
        for i in 0..resolution {
            for j in 0..resolution {
                if f(i, j) {
                    pixels[i * resolution + j] = 1;
                }
            }
        }
        Self { resolution, pixels }
    }

    pub fn from_pixels(resolution: usize, pixels: Vec<u8>) -> Result<Self> {
        if pixels.len() != resolution * resolution {
            return Err(Error::InvalidSpec(format!(
                "pixel buffer has {} entries, expected {}",
                pixels.len(),
                resolution * resolution
            )));
        }
        if pixels.iter().any(|&p| p > 1) {
            return Err(Error::InvalidSpec("pixels must be 0 or 1".into()));
        }
        Ok(Self { resolution, pixels })
    }

    pub fn resolution(&self) -> usize {
        self.resolution
    }

    pub fn pixels(&self) -> &[u8] {
        &self.pixels
    }

    pub fn len(&self) -> usize {
        self.pixels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pixels.is_empty()
    }

    #[inline]
    pub fn get(&self, row: usize, col: usize) -> u8 {
        self.pixels[row * self.resolution + col]
    }

    /// Pixel with periodic wrap of (possibly negative) indices.
    #[inline]
    pub fn get_wrapped(&self, row: isize, col: isize) -> u8 {
        let n = self.resolution as isize;
        let r = row.rem_euclid(n) as usize;
        let c = col.rem_euclid(n) as usize;
        self.get(r, c)
    }

    /// Number of inclusion pixels.
    pub fn inclusion_count(&self) -> usize {
        self.pixels.iter().filter(|&&p| p == 1).count()
    }

    /// Inclusion volume fraction `f_b`.
    pub fn volume_fraction(&self) -> f64 {
        self.inclusion_count() as f64 / self.len() as f64
    }

    /// Periodic translation by whole pixels.
    pub fn translated(&self, dr: isize, dc: isize) -> Self {
        let n = self.resolution;
        Self::from_fn(n, |i, j| {
            self.get_wrapped(i as isize - dr, j as isize - dc) == 1
        })
    }

    /// Counter-clockwise rotation by 90 degrees.
    pub fn rotated90(&self) -> Self {
        let n = self.resolution;
        Self::from_fn(n, |i, j| self.get(j, n - 1 - i) == 1)
    }

    /// Swaps the two phases.
    pub fn phase_swapped(&self) -> Self {
        let pixels = self.pixels.iter().map(|&p| 1 - p).collect();
        Self {
            resolution: self.resolution,
            pixels,
        }
    }

    /// Writes the plain-text matrix format: one row per line, `0`/`1`
    /// entries separated by single spaces.
    pub fn write_text<W: Write>(&self, mut w: W) -> Result<()> {
        let n = self.resolution;
        let mut line = String::with_capacity(2 * n);
        for row in self.pixels.chunks_exact(n) {
            line.clear();
            for (j, &p) in row.iter().enumerate() {
                if j > 0 {
                    line.push(' ');
                }
                line.push(if p == 1 { '1' } else { '0' });
            }
            line.push('\n');
            w.write_all(line.as_bytes())?;
        }
        Ok(())
    }

    pub fn read_text<R: Read>(r: R) -> Result<Self> {
        let reader = BufReader::new(r);
        let mut pixels = Vec::new();
        let mut width = None;
        for line in reader.lines() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let row: Vec<u8> = line
                .split_whitespace()
                .map(|tok| match tok {
                    "0" => Ok(0u8),
                    "1" => Ok(1u8),
                    other => Err(Error::InvalidFormat(format!(
                        "unexpected token {other:?} in image text"
                    ))),
                })
                .collect::<Result<_>>()?;
            match width {
                None => width = Some(row.len()),
                Some(w) if w != row.len() => {
                    return Err(Error::InvalidFormat("ragged rows in image text".into()))
                }
                _ => {}
            }
            pixels.extend_from_slice(&row);
        }
        let width = width.ok_or_else(|| Error::InvalidFormat("empty image text".into()))?;
        if pixels.len() != width * width {
            return Err(Error::InvalidFormat(format!(
                "image text is {}x{}, expected a square grid",
                pixels.len() / width,
                width
            )));
        }
        Self::from_pixels(width, pixels)
    }

    /// Writes binary PGM (P5), 0 for phase `a` and 255 for phase `b`.
    pub fn write_pgm<W: Write>(&self, mut w: W) -> Result<()> {
        let n = self.resolution;
        write!(w, "P5\n{n} {n}\n255\n")?;
        let bytes: Vec<u8> = self.pixels.iter().map(|&p| p * 255).collect();
        w.write_all(&bytes)?;
        Ok(())
    }

    pub fn read_pgm<R: Read>(mut r: R) -> Result<Self> {
        let mut buf = Vec::new();
        r.read_to_end(&mut buf)?;
        let header_err = || Error::InvalidFormat("malformed PGM header".into());
        // Three whitespace-delimited header fields after the magic, then one
        // whitespace byte, then raw data.
        if !buf.starts_with(b"P5") {
            return Err(Error::InvalidFormat("not a binary PGM (P5) file".into()));
        }
        let mut pos = 2;
        let mut fields = Vec::with_capacity(3);
        while fields.len() < 3 {
            while pos < buf.len() && buf[pos].is_ascii_whitespace() {
                pos += 1;
            }
            if pos < buf.len() && buf[pos] == b'#' {
                while pos < buf.len() && buf[pos] != b'\n' {
                    pos += 1;
                }
                continue;
            }
            let start = pos;
            while pos < buf.len() && !buf[pos].is_ascii_whitespace() {
                pos += 1;
            }
            if start == pos {
                return Err(header_err());
            }
            let text = std::str::from_utf8(&buf[start..pos]).map_err(|_| header_err())?;
            fields.push(text.parse::<usize>().map_err(|_| header_err())?);
        }
        pos += 1; // single whitespace separating header and data
        let (w, h, maxval) = (fields[0], fields[1], fields[2]);
        if w != h {
            return Err(Error::InvalidFormat("PGM image is not square".into()));
        }
        if maxval == 0 || maxval > 255 {
            return Err(Error::InvalidFormat("unsupported PGM maxval".into()));
        }
        let data = buf
            .get(pos..pos + w * h)
            .ok_or_else(|| Error::InvalidFormat("truncated PGM data".into()))?;
        let threshold = (maxval / 2) as u8;
        let pixels = data.iter().map(|&v| u8::from(v > threshold)).collect();
        Self::from_pixels(w, pixels)
    }

    /// Reads `.txt` matrix or `.pgm` files, picked by extension.
    pub fn read_path(path: &Path) -> Result<Self> {
        let file = std::fs::File::open(path)
            .map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
        match path.extension().and_then(|e| e.to_str()) {
            Some("pgm") => Self::read_pgm(file),
            _ => Self::read_text(file),
        }
    }
}
