//! Grayscale images, binary PGM (P5) I/O, and bilinear resampling.

use std::io::{BufWriter, Read, Write};
use std::path::Path;

use crate::error::{Error, Result};

/// Single-channel image, row-major, values in `[0, 255]`.
#[derive(Debug, Clone, PartialEq)]
pub struct GrayImage {
    width: usize,
    height: usize,
    data: Vec<f32>,
}

impl GrayImage {
    pub fn new(width: usize, height: usize, data: Vec<f32>) -> Result<Self> {
        if data.len() != width * height {
            return Err(Error::DimensionMismatch {
                expected: width * height,
                got: data.len(),
            });
        }
        Ok(Self {
            width,
            height,
            data,
        })
    }

    pub fn zeros(width: usize, height: usize) -> Self {
        Self {
            width,
            height,
            data: vec![0.0; width * height],
        }
    }

    pub fn from_fn(width: usize, height: usize, f: impl Fn(usize, usize) -> f32) -> Self {
        let mut data = Vec::with_capacity(width * height);
        for r in 0..height {
            for c in 0..width {
                data.push(f(r, c));
            }
        }
        Self {
            width,
            height,
            data,
        }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    pub fn get(&self, row: usize, col: usize) -> f32 {
        self.data[row * self.width + col]
    }

    pub fn set(&mut self, row: usize, col: usize, v: f32) {
        self.data[row * self.width + col] = v;
    }

    /// Bilinear sample at a continuous point, pixel centers at
    /// `(col + 0.5, row + 0.5)`. Coordinates are clamped to the image.
    pub fn sample_bilinear(&self, u: f32, v: f32) -> f32 {
        let x = u - 0.5;
        let y = v - 0.5;
        let j0 = x.floor();
        let i0 = y.floor();
        let fx = x - j0;
        let fy = y - i0;
        let clamp_col = |j: f32| (j.max(0.0) as usize).min(self.width - 1);
        let clamp_row = |i: f32| (i.max(0.0) as usize).min(self.height - 1);
        let j0c = clamp_col(j0);
        let j1c = clamp_col(j0 + 1.0);
        let i0c = clamp_row(i0);
        let i1c = clamp_row(i0 + 1.0);
        let top = (1.0 - fx) * self.get(i0c, j0c) + fx * self.get(i0c, j1c);
        let bot = (1.0 - fx) * self.get(i1c, j0c) + fx * self.get(i1c, j1c);
        (1.0 - fy) * top + fy * bot
    }

    /// Resamples the axis-aligned region `[x1, x2) x [y1, y2)` onto an
    /// `out_w x out_h` grid; output pixel (r, c) samples the source at the
    /// center of its cell.
    pub fn crop_resize(&self, x1: f32, y1: f32, x2: f32, y2: f32, out_w: usize, out_h: usize) -> GrayImage {
        let sx = (x2 - x1) / out_w as f32;
        let sy = (y2 - y1) / out_h as f32;
        GrayImage::from_fn(out_w, out_h, |r, c| {
            let u = x1 + (c as f32 + 0.5) * sx;
            let v = y1 + (r as f32 + 0.5) * sy;
            self.sample_bilinear(u, v)
        })
    }
}

fn read_pgm_token(bytes: &[u8], pos: &mut usize, path: &Path) -> Result<String> {
    // Skips whitespace and `#` comments between header tokens.
    loop {
        while *pos < bytes.len() && bytes[*pos].is_ascii_whitespace() {
            *pos += 1;
        }
        if *pos < bytes.len() && bytes[*pos] == b'#' {
            while *pos < bytes.len() && bytes[*pos] != b'\n' {
                *pos += 1;
            }
        } else {
            break;
        }
    }
    let start = *pos;
    while *pos < bytes.len() && !bytes[*pos].is_ascii_whitespace() {
        *pos += 1;
    }
    if start == *pos {
        return Err(Error::parse(path, 1, "truncated PGM header"));
    }
    Ok(String::from_utf8_lossy(&bytes[start..*pos]).into_owned())
}

/// Reads an 8-bit binary PGM (P5) file.
pub fn read_pgm(path: &Path) -> Result<GrayImage> {
    let mut bytes = Vec::new();
    std::fs::File::open(path)?.read_to_end(&mut bytes)?;
    let mut pos = 0usize;
    let magic = read_pgm_token(&bytes, &mut pos, path)?;
    if magic != "P5" {
        return Err(Error::parse(path, 1, format!("expected P5, got `{magic}`")));
    }
    let width: usize = read_pgm_token(&bytes, &mut pos, path)?
        .parse()
        .map_err(|_| Error::parse(path, 1, "bad width"))?;
    let height: usize = read_pgm_token(&bytes, &mut pos, path)?
        .parse()
        .map_err(|_| Error::parse(path, 1, "bad height"))?;
    let maxval: usize = read_pgm_token(&bytes, &mut pos, path)?
        .parse()
        .map_err(|_| Error::parse(path, 1, "bad maxval"))?;
    if maxval == 0 || maxval > 255 {
        return Err(Error::parse(path, 1, format!("unsupported maxval {maxval}")));
    }
    pos += 1; // single whitespace byte after maxval
    let need = width * height;
    if bytes.len() < pos + need {
        return Err(Error::parse(path, 1, "truncated PGM pixel data"));
    }
    let data = bytes[pos..pos + need].iter().map(|&b| b as f32).collect();
    GrayImage::new(width, height, data)
}

/// Writes an 8-bit binary PGM (P5) file; values are rounded and clamped.
pub fn write_pgm(img: &GrayImage, path: &Path) -> Result<()> {
    let mut out = BufWriter::new(std::fs::File::create(path)?);
    write!(out, "P5\n{} {}\n255\n", img.width(), img.height())?;
    let bytes: Vec<u8> = img
        .data()
        .iter()
        .map(|&v| v.round().clamp(0.0, 255.0) as u8)
        .collect();
    out.write_all(&bytes)?;
    out.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn pgm_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("img.pgm");
        let img = GrayImage::from_fn(5, 3, |r, c| (r * 40 + c * 7) as f32);
        write_pgm(&img, &path).unwrap();
        let back = read_pgm(&path).unwrap();
        assert_eq!(img, back);
    }

    #[test]
    fn pgm_header_comments_are_skipped() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("c.pgm");
        let mut bytes = b"P5\n# comment line\n2 2\n255\n".to_vec();
        bytes.extend_from_slice(&[0, 64, 128, 255]);
        std::fs::write(&path, bytes).unwrap();
        let img = read_pgm(&path).unwrap();
        assert_eq!(img.get(1, 1), 255.0);
    }

    #[test]
    fn identity_crop_resize_reproduces_pixels() {
        let img = GrayImage::from_fn(48, 48, |r, c| ((r * 48 + c) % 256) as f32);
        let out = img.crop_resize(0.0, 0.0, 48.0, 48.0, 48, 48);
        assert_eq!(img, out);
    }

    #[test]
    fn downscale_of_constant_is_constant() {
        let img = GrayImage::from_fn(16, 16, |_, _| 77.0);
        let out = img.crop_resize(0.0, 0.0, 16.0, 16.0, 8, 8);
        assert!(out.data().iter().all(|&v| (v - 77.0).abs() < 1e-5));
    }

    /// Independent bilinear evaluation used as an oracle: weights computed
    /// from first principles at a given continuous point.
    fn bilinear_oracle(img: &GrayImage, u: f32, v: f32) -> f32 {
        let (w, h) = (img.width() as i64, img.height() as i64);
        let x = (u - 0.5) as f64;
        let y = (v - 0.5) as f64;
        let j0 = x.floor() as i64;
        let i0 = y.floor() as i64;
        let fx = x - j0 as f64;
        let fy = y - i0 as f64;
        let px = |i: i64, j: i64| -> f64 {
            let i = i.clamp(0, h - 1) as usize;
            let j = j.clamp(0, w - 1) as usize;
            img.get(i, j) as f64
        };
        ((1.0 - fy) * ((1.0 - fx) * px(i0, j0) + fx * px(i0, j0 + 1))
            + fy * ((1.0 - fx) * px(i0 + 1, j0) + fx * px(i0 + 1, j0 + 1))) as f32
    }

    #[test]
    fn checkerboard_downscale_is_mid_gray() {
        // Checkerboard whose repeating block is 2x2 pixels.
        let img = GrayImage::from_fn(16, 16, |r, c| (((r + c) % 2) * 255) as f32);
        let out = img.crop_resize(0.0, 0.0, 16.0, 16.0, 8, 8);
        for r in 0..8 {
            for c in 0..8 {
                let u = (c as f32 + 0.5) * 2.0;
                let v = (r as f32 + 0.5) * 2.0;
                let expect = bilinear_oracle(&img, u, v);
                assert_eq!(out.get(r, c), expect);
                assert!((out.get(r, c) - 127.5).abs() < 1e-4);
            }
        }
    }
}
