//! Face-track geometry: smoothing, squaring, side-length stabilization, and
//! cropping of per-frame bounding boxes.

use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::image::GrayImage;
use crate::math::{linear_fit, mean, moving_average};
use crate::Scalar;

/// Axis-aligned box in pixel coordinates, top-left `(x1, y1)`, bottom-right
/// `(x2, y2)`, with `x2 > x1` and `y2 > y1`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BoundingBox {
    pub x1: Scalar,
    pub y1: Scalar,
    pub x2: Scalar,
    pub y2: Scalar,
}

impl BoundingBox {
    pub fn new(x1: Scalar, y1: Scalar, x2: Scalar, y2: Scalar) -> Result<Self> {
        if !(x2 > x1 && y2 > y1) || ![x1, y1, x2, y2].iter().all(|v| v.is_finite()) {
            return Err(Error::Domain(format!(
                "degenerate bounding box ({x1}, {y1}, {x2}, {y2})"
            )));
        }
        Ok(Self { x1, y1, x2, y2 })
    }

    pub fn width(&self) -> Scalar {
        self.x2 - self.x1
    }

    pub fn height(&self) -> Scalar {
        self.y2 - self.y1
    }

    pub fn area(&self) -> Scalar {
        self.width() * self.height()
    }

    pub fn center(&self) -> (Scalar, Scalar) {
        ((self.x1 + self.x2) / 2.0, (self.y1 + self.y2) / 2.0)
    }

    fn from_center(cx: Scalar, cy: Scalar, w: Scalar, h: Scalar) -> Result<Self> {
        Self::new(cx - w / 2.0, cy - h / 2.0, cx + w / 2.0, cy + h / 2.0)
    }
}

/// Ordered per-frame boxes for one tracked subject.
#[derive(Debug, Clone, PartialEq)]
pub struct FaceTube {
    frames: Vec<(u32, BoundingBox)>,
}

impl FaceTube {
    pub fn new(frames: Vec<(u32, BoundingBox)>) -> Result<Self> {
        if frames.is_empty() {
            return Err(Error::EmptyInput("facetube with no frames".into()));
        }
        for pair in frames.windows(2) {
            if pair[1].0 <= pair[0].0 {
                return Err(Error::Domain(format!(
                    "frame indices must be strictly increasing ({} then {})",
                    pair[0].0, pair[1].0
                )));
            }
        }
        Ok(Self { frames })
    }

    pub fn frames(&self) -> &[(u32, BoundingBox)] {
        &self.frames
    }

    pub fn len(&self) -> usize {
        self.frames.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frames.is_empty()
    }

    pub fn mean_area(&self) -> Scalar {
        mean(&self.frames.iter().map(|(_, b)| b.area()).collect::<Vec<_>>())
    }
}

#[derive(Debug, Clone)]
pub struct SmoothingConfig {
    /// Moving-average window in frames; odd.
    pub window: usize,
    /// Threshold on |slope| * facetube length deciding linear vs constant
    /// side lengths.
    pub slope_threshold: Scalar,
    /// Side of the square crops emitted by [`crop_facetube`].
    pub output_size: usize,
}

impl Default for SmoothingConfig {
    fn default() -> Self {
        Self {
            window: 11,
            slope_threshold: 1.5,
            output_size: 48,
        }
    }
}

impl SmoothingConfig {
    pub fn validate(&self) -> Result<()> {
        if self.window % 2 == 0 || self.window == 0 {
            return Err(Error::Config(format!(
                "smoothing window must be odd and >= 1, got {}",
                self.window
            )));
        }
        if !(self.slope_threshold > 0.0) {
            return Err(Error::Config("slope threshold must be positive".into()));
        }
        if self.output_size == 0 {
            return Err(Error::Config("output size must be positive".into()));
        }
        Ok(())
    }
}

/// Smooths box corners and centers with a two-sided moving average and
/// rebuilds each box from its smoothed center and smoothed extents.
pub fn smooth_corners_and_centers(tube: &FaceTube, cfg: &SmoothingConfig) -> Result<FaceTube> {
    cfg.validate()?;
    let boxes: Vec<&BoundingBox> = tube.frames().iter().map(|(_, b)| b).collect();
    let series = |f: &dyn Fn(&BoundingBox) -> Scalar| -> Vec<Scalar> {
        boxes.iter().map(|b| f(b)).collect()
    };
    let x1 = moving_average(&series(&|b| b.x1), cfg.window);
    let y1 = moving_average(&series(&|b| b.y1), cfg.window);
    let x2 = moving_average(&series(&|b| b.x2), cfg.window);
    let y2 = moving_average(&series(&|b| b.y2), cfg.window);
    let cx = moving_average(&series(&|b| b.center().0), cfg.window);
    let cy = moving_average(&series(&|b| b.center().1), cfg.window);

    let mut frames = Vec::with_capacity(tube.len());
    for (i, &(idx, _)) in tube.frames().iter().enumerate() {
        let w = x2[i] - x1[i];
        let h = y2[i] - y1[i];
        frames.push((idx, BoundingBox::from_center(cx[i], cy[i], w, h)?));
    }
    FaceTube::new(frames)
}

/// Largest square with the same center that fits inside `bbox`.
pub fn largest_centered_square(bbox: &BoundingBox) -> BoundingBox {
    let side = bbox.width().min(bbox.height());
    let (cx, cy) = bbox.center();
    BoundingBox::from_center(cx, cy, side, side).expect("side > 0 by box invariant")
}

/// Replaces side lengths by a degree-0 or degree-1 least-squares fit.
///
/// The linear fit is used when `|slope| * len > slope_threshold`, otherwise
/// every side becomes the mean. Centers are unchanged. Call after
/// [`largest_centered_square`]; width and height are stabilized jointly via
/// the side length `min(width, height)`.
pub fn stabilize_side_lengths(tube: &FaceTube, cfg: &SmoothingConfig) -> Result<FaceTube> {
    cfg.validate()?;
    let sides: Vec<Scalar> = tube
        .frames()
        .iter()
        .map(|(_, b)| b.width().min(b.height()))
        .collect();
    let n = sides.len();
    let fit = linear_fit(&sides);
    let use_linear = n >= 2 && fit.slope.abs() * n as Scalar > cfg.slope_threshold;
    let side_at = |i: usize| -> Scalar {
        if use_linear {
            fit.eval(i as Scalar)
        } else {
            mean(&sides)
        }
    };
    let mut frames = Vec::with_capacity(n);
    for (i, &(idx, b)) in tube.frames().iter().enumerate() {
        let (cx, cy) = b.center();
        let side = side_at(i);
        if !(side > 0.0) {
            return Err(Error::Domain(format!(
                "stabilized side length {side} at frame {idx} is not positive"
            )));
        }
        frames.push((idx, BoundingBox::from_center(cx, cy, side, side)?));
    }
    FaceTube::new(frames)
}

/// Full smoothing chain: moving-average smoothing, centered squares, then
/// side-length stabilization.
pub fn smooth_facetube(tube: &FaceTube, cfg: &SmoothingConfig) -> Result<FaceTube> {
    let smoothed = smooth_corners_and_centers(tube, cfg)?;
    let squared = FaceTube::new(
        smoothed
            .frames()
            .iter()
            .map(|&(idx, b)| (idx, largest_centered_square(&b)))
            .collect(),
    )?;
    stabilize_side_lengths(&squared, cfg)
}

/// Among several tubes of one clip, picks the one with the largest mean box
/// area (proxy for the primary subject).
pub fn select_primary_tube<'a>(tubes: &'a [FaceTube]) -> Option<&'a FaceTube> {
    tubes.iter().max_by(|a, b| {
        a.mean_area()
            .partial_cmp(&b.mean_area())
            .unwrap_or(std::cmp::Ordering::Equal)
    })
}

/// Crops each tube box out of its frame and resamples it to a square of
/// `cfg.output_size` pixels. Boxes are clamped to the frame first; a box
/// entirely outside the frame is an error naming the frame index.
pub fn crop_facetube(
    frames: &[(u32, GrayImage)],
    tube: &FaceTube,
    cfg: &SmoothingConfig,
) -> Result<Vec<(u32, GrayImage)>> {
    cfg.validate()?;
    let mut out = Vec::with_capacity(tube.len());
    for &(idx, b) in tube.frames() {
        let img = frames
            .iter()
            .find(|(fi, _)| *fi == idx)
            .map(|(_, img)| img)
            .ok_or_else(|| Error::Domain(format!("no image for frame {idx}")))?;
        let (w, h) = (img.width() as Scalar, img.height() as Scalar);
        let x1 = b.x1.max(0.0);
        let y1 = b.y1.max(0.0);
        let x2 = b.x2.min(w);
        let y2 = b.y2.min(h);
        if !(x2 > x1 && y2 > y1) {
            return Err(Error::Domain(format!(
                "box entirely outside frame {idx}"
            )));
        }
        let crop = img.crop_resize(
            x1 as f32,
            y1 as f32,
            x2 as f32,
            y2 as f32,
            cfg.output_size,
            cfg.output_size,
        );
        out.push((idx, crop));
    }
    Ok(out)
}

pub const FACETUBE_HEADER: &str = "frame_idx,x1,y1,x2,y2";

/// Writes a facetube CSV (`frame_idx,x1,y1,x2,y2`).
pub fn write_facetube(tube: &FaceTube, path: &Path) -> Result<()> {
    let mut out = std::io::BufWriter::new(std::fs::File::create(path)?);
    writeln!(out, "{FACETUBE_HEADER}")?;
    for &(idx, b) in tube.frames() {
        writeln!(
            out,
            "{idx},{:.8e},{:.8e},{:.8e},{:.8e}",
            b.x1, b.y1, b.x2, b.y2
        )?;
    }
    out.flush()?;
    Ok(())
}

/// Reads a facetube CSV.
pub fn read_facetube(path: &Path) -> Result<FaceTube> {
    let reader = BufReader::new(std::fs::File::open(path)?);
    let mut lines = reader.lines().enumerate();
    let header = match lines.next() {
        Some((_, line)) => line?,
        None => return Err(Error::parse(path, 1, "missing header")),
    };
    if header.trim_end() != FACETUBE_HEADER {
        return Err(Error::parse(path, 1, "unexpected header"));
    }
    let mut frames = Vec::new();
    for (idx, line) in lines {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let line_no = idx + 1;
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != 5 {
            return Err(Error::parse(
                path,
                line_no,
                format!("expected 5 columns, got {}", fields.len()),
            ));
        }
        let frame_idx: u32 = fields[0]
            .trim()
            .parse()
            .map_err(|_| Error::parse(path, line_no, "bad frame index"))?;
        let mut coords = [0.0; 4];
        for (i, f) in fields[1..].iter().enumerate() {
            coords[i] = f
                .trim()
                .parse::<Scalar>()
                .map_err(|_| Error::parse(path, line_no, format!("bad coordinate `{f}`")))?;
        }
        let bbox = BoundingBox::new(coords[0], coords[1], coords[2], coords[3])
            .map_err(|e| Error::parse(path, line_no, e.to_string()))?;
        frames.push((frame_idx, bbox));
    }
    FaceTube::new(frames).map_err(|e| Error::parse(path, 0, e.to_string()))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn constant_tube(n: usize, b: BoundingBox) -> FaceTube {
        FaceTube::new((0..n as u32).map(|i| (i, b)).collect()).unwrap()
    }

    #[test]
    fn constant_tube_is_fixed_point_of_smoothing() {
        let b = BoundingBox::new(10.0, 20.0, 50.0, 70.0).unwrap();
        let tube = constant_tube(15, b);
        let cfg = SmoothingConfig::default();
        let out = smooth_corners_and_centers(&tube, &cfg).unwrap();
        for (&(_, a), &(_, s)) in tube.frames().iter().zip(out.frames()) {
            assert!((a.x1 - s.x1).abs() < 1e-12);
            assert!((a.y1 - s.y1).abs() < 1e-12);
            assert!((a.x2 - s.x2).abs() < 1e-12);
            assert!((a.y2 - s.y2).abs() < 1e-12);
        }
    }

    #[test]
    fn single_frame_tube_unchanged() {
        let b = BoundingBox::new(0.0, 0.0, 5.0, 8.0).unwrap();
        let tube = constant_tube(1, b);
        let out = smooth_corners_and_centers(&tube, &SmoothingConfig::default()).unwrap();
        assert_eq!(out.frames()[0].1, b);
    }

    #[test]
    fn linear_ramp_interior_unchanged_by_smoothing() {
        // x1 follows an exact linear ramp; with window 11 all frames at
        // least 5 from each end keep their value.
        let frames: Vec<(u32, BoundingBox)> = (0..30)
            .map(|i| {
                let off = i as Scalar * 2.0;
                (
                    i,
                    BoundingBox::new(off, 0.0, off + 10.0, 10.0).unwrap(),
                )
            })
            .collect();
        let tube = FaceTube::new(frames).unwrap();
        let out = smooth_corners_and_centers(&tube, &SmoothingConfig::default()).unwrap();
        for i in 5..25 {
            assert!(
                (out.frames()[i].1.x1 - tube.frames()[i].1.x1).abs() < 1e-9,
                "frame {i}"
            );
        }
    }

    #[test]
    fn centered_square_cases() {
        let square = BoundingBox::new(0.0, 0.0, 4.0, 4.0).unwrap();
        assert_eq!(largest_centered_square(&square), square);

        let wide = BoundingBox::new(-2.0, -1.0, 2.0, 1.0).unwrap();
        let sq = largest_centered_square(&wide);
        assert_eq!(sq, BoundingBox::new(-1.0, -1.0, 1.0, 1.0).unwrap());

        // Output always inside input.
        let b = BoundingBox::new(3.0, 7.0, 21.5, 11.25).unwrap();
        let s = largest_centered_square(&b);
        assert!(s.x1 >= b.x1 && s.y1 >= b.y1 && s.x2 <= b.x2 && s.y2 <= b.y2);
    }

    #[test]
    fn stabilize_keeps_constant_sides() {
        let b = BoundingBox::new(0.0, 0.0, 12.0, 12.0).unwrap();
        let tube = constant_tube(9, b);
        let out = stabilize_side_lengths(&tube, &SmoothingConfig::default()).unwrap();
        for &(_, s) in out.frames() {
            assert!((s.width() - 12.0).abs() < 1e-12);
        }
    }

    #[test]
    fn stabilize_uses_linear_fit_above_threshold() {
        // Sides 10..=30 over 21 frames: slope 1, 1 * 21 > 1.5.
        let frames: Vec<(u32, BoundingBox)> = (0..21)
            .map(|i| {
                let side = 10.0 + i as Scalar;
                (i, BoundingBox::new(0.0, 0.0, side, side).unwrap())
            })
            .collect();
        let tube = FaceTube::new(frames).unwrap();
        let out = stabilize_side_lengths(&tube, &SmoothingConfig::default()).unwrap();
        for (i, &(_, s)) in out.frames().iter().enumerate() {
            assert!(
                (s.width() - (10.0 + i as Scalar)).abs() < 1e-9,
                "frame {i}: {}",
                s.width()
            );
        }
    }

    #[test]
    fn stabilize_collapses_small_slopes_to_mean() {
        // Slope 0.01 over 10 frames: 0.1 < 1.5, so every side becomes the
        // mean. Slope verified against an independent regression oracle.
        let sides: Vec<Scalar> = (0..10).map(|i| 20.0 + 0.01 * i as Scalar).collect();
        let oracle_slope = {
            let n = sides.len() as Scalar;
            let mx = (n - 1.0) / 2.0;
            let my: Scalar = sides.iter().sum::<Scalar>() / n;
            let mut num = 0.0;
            let mut den = 0.0;
            for (i, &y) in sides.iter().enumerate() {
                num += (i as Scalar - mx) * (y - my);
                den += (i as Scalar - mx) * (i as Scalar - mx);
            }
            num / den
        };
        assert!((oracle_slope - 0.01).abs() < 1e-12);
        assert!(oracle_slope.abs() * 10.0 < 1.5);

        let frames: Vec<(u32, BoundingBox)> = sides
            .iter()
            .enumerate()
            .map(|(i, &s)| (i as u32, BoundingBox::new(0.0, 0.0, s, s).unwrap()))
            .collect();
        let tube = FaceTube::new(frames).unwrap();
        let out = stabilize_side_lengths(&tube, &SmoothingConfig::default()).unwrap();
        let mean_side: Scalar = sides.iter().sum::<Scalar>() / 10.0;
        for &(_, s) in out.frames() {
            assert!((s.width() - mean_side).abs() < 1e-12);
        }
    }

    #[test]
    fn stabilize_single_frame_uses_constant_fit() {
        let tube = constant_tube(1, BoundingBox::new(0.0, 0.0, 7.0, 7.0).unwrap());
        let out = stabilize_side_lengths(&tube, &SmoothingConfig::default()).unwrap();
        assert!((out.frames()[0].1.width() - 7.0).abs() < 1e-12);
    }

    #[test]
    fn crop_identity_and_errors() {
        let img = GrayImage::from_fn(48, 48, |r, c| ((r + c) % 251) as f32);
        let frames = vec![(0u32, img.clone())];
        let tube = constant_tube(1, BoundingBox::new(0.0, 0.0, 48.0, 48.0).unwrap());
        let cfg = SmoothingConfig::default();
        let crops = crop_facetube(&frames, &tube, &cfg).unwrap();
        assert_eq!(crops[0].1, img);

        let outside = constant_tube(1, BoundingBox::new(100.0, 100.0, 120.0, 120.0).unwrap());
        match crop_facetube(&frames, &outside, &cfg) {
            Err(Error::Domain(msg)) => assert!(msg.contains("frame 0")),
            other => panic!("expected domain error, got {other:?}"),
        }
    }

    #[test]
    fn facetube_csv_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("tube.csv");
        let tube = FaceTube::new(vec![
            (0, BoundingBox::new(1.25, 2.5, 11.75, 12.5).unwrap()),
            (3, BoundingBox::new(2.0, 3.0, 12.0, 13.0).unwrap()),
        ])
        .unwrap();
        write_facetube(&tube, &path).unwrap();
        let back = read_facetube(&path).unwrap();
        assert_eq!(tube, back);
    }

    #[test]
    fn non_increasing_frame_indices_rejected() {
        let b = BoundingBox::new(0.0, 0.0, 1.0, 1.0).unwrap();
        assert!(FaceTube::new(vec![(2, b), (2, b)]).is_err());
        assert!(FaceTube::new(vec![(2, b), (1, b)]).is_err());
    }

    #[test]
    fn primary_tube_is_largest_mean_area() {
        let small = constant_tube(3, BoundingBox::new(0.0, 0.0, 2.0, 2.0).unwrap());
        let big = constant_tube(2, BoundingBox::new(0.0, 0.0, 9.0, 9.0).unwrap());
        let tubes = vec![small, big.clone()];
        assert_eq!(select_primary_tube(&tubes).unwrap(), &big);
    }
}
