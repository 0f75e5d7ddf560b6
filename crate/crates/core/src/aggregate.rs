//! Aggregation of variable-length per-frame probability sequences into
//! fixed 70-dimensional video descriptors (ten 7-blocks along time).

use std::collections::BTreeMap;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use crate::emotions::ClassDistribution;
use crate::error::{Error, Result};
use crate::{Scalar, NUM_CLASSES};

/// Number of temporal blocks in a descriptor.
pub const NUM_BLOCKS: usize = 10;
/// Descriptor length.
pub const DESCRIPTOR_LEN: usize = NUM_BLOCKS * NUM_CLASSES;

/// Ordered per-frame class distributions for one clip.
#[derive(Debug, Clone)]
pub struct FrameProbabilitySequence {
    pub clip_id: String,
    pub rows: Vec<ClassDistribution>,
}

impl FrameProbabilitySequence {
    pub fn new(clip_id: impl Into<String>, rows: Vec<ClassDistribution>) -> Result<Self> {
        let clip_id = clip_id.into();
        for (i, r) in rows.iter().enumerate() {
            if !r.is_normalized() {
                return Err(Error::InvalidDistribution(format!(
                    "row {i} of clip `{clip_id}` is not normalized"
                )));
            }
        }
        Ok(Self { clip_id, rows })
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }
}

/// Ten concatenated 7-blocks; each block is a convex combination of input
/// rows, so it is non-negative and sums to 1.
#[derive(Debug, Clone, PartialEq)]
pub struct VideoDescriptor {
    v: [Scalar; DESCRIPTOR_LEN],
}

impl VideoDescriptor {
    pub fn new(v: [Scalar; DESCRIPTOR_LEN]) -> Result<Self> {
        for g in 0..NUM_BLOCKS {
            let block = &v[g * NUM_CLASSES..(g + 1) * NUM_CLASSES];
            let sum: Scalar = block.iter().sum();
            if block.iter().any(|&x| x < 0.0 || !x.is_finite()) {
                return Err(Error::InvalidDistribution(format!(
                    "descriptor block {g} has invalid entries"
                )));
            }
            if (sum - 1.0).abs() > 1e-6 {
                return Err(Error::InvalidDistribution(format!(
                    "descriptor block {g} sums to {sum}"
                )));
            }
        }
        Ok(Self { v })
    }

    pub fn values(&self) -> &[Scalar; DESCRIPTOR_LEN] {
        &self.v
    }

    pub fn block(&self, g: usize) -> &[Scalar] {
        &self.v[g * NUM_CLASSES..(g + 1) * NUM_CLASSES]
    }
}

/// Contraction for `T >= 10`: block `g` is the mean of the rows in
/// `[floor(g*T/10), floor((g+1)*T/10))`.
pub fn contract(seq: &FrameProbabilitySequence) -> Result<VideoDescriptor> {
    let t = seq.len();
    if t < NUM_BLOCKS {
        return Err(Error::Domain(format!(
            "contract requires at least {NUM_BLOCKS} frames, clip `{}` has {t}; use expand",
            seq.clip_id
        )));
    }
    let mut v = [0.0; DESCRIPTOR_LEN];
    for g in 0..NUM_BLOCKS {
        let lo = g * t / NUM_BLOCKS;
        let hi = (g + 1) * t / NUM_BLOCKS;
        let size = (hi - lo) as Scalar;
        for row in &seq.rows[lo..hi] {
            for (c, &p) in row.scores().iter().enumerate() {
                v[g * NUM_CLASSES + c] += p;
            }
        }
        for x in &mut v[g * NUM_CLASSES..(g + 1) * NUM_CLASSES] {
            *x /= size;
        }
    }
    VideoDescriptor::new(v)
}

/// Expansion for `1 <= T < 10`: slot `s` copies row `floor(s*T/10)`.
pub fn expand(seq: &FrameProbabilitySequence) -> Result<VideoDescriptor> {
    let t = seq.len();
    if t == 0 {
        return Err(Error::EmptyInput(format!(
            "clip `{}` has no frames",
            seq.clip_id
        )));
    }
    if t >= NUM_BLOCKS {
        return Err(Error::Domain(format!(
            "expand requires fewer than {NUM_BLOCKS} frames, clip `{}` has {t}; use contract",
            seq.clip_id
        )));
    }
    let mut v = [0.0; DESCRIPTOR_LEN];
    for s in 0..NUM_BLOCKS {
        let src = s * t / NUM_BLOCKS;
        for (c, &p) in seq.rows[src].scores().iter().enumerate() {
            v[s * NUM_CLASSES + c] = p;
        }
    }
    VideoDescriptor::new(v)
}

/// Dispatches to [`contract`] (`T >= 10`) or [`expand`] (`T < 10`).
pub fn build_descriptor(seq: &FrameProbabilitySequence) -> Result<VideoDescriptor> {
    if seq.is_empty() {
        return Err(Error::EmptyInput(format!(
            "clip `{}` has no frames",
            seq.clip_id
        )));
    }
    if seq.len() >= NUM_BLOCKS {
        contract(seq)
    } else {
        expand(seq)
    }
}

pub const FRAME_PROB_HEADER: &str =
    "clip_id,frame_idx,p_angry,p_disgust,p_fear,p_happy,p_neutral,p_sad,p_surprise";

/// Reads per-frame probabilities grouped by clip; rows within each clip are
/// ordered by ascending frame index.
pub fn read_frame_probabilities(path: &Path) -> Result<Vec<FrameProbabilitySequence>> {
    let reader = BufReader::new(std::fs::File::open(path)?);
    let mut lines = reader.lines().enumerate();
    let header = match lines.next() {
        Some((_, line)) => line?,
        None => return Err(Error::parse(path, 1, "missing header")),
    };
    if header.trim_end() != FRAME_PROB_HEADER {
        return Err(Error::parse(path, 1, "unexpected header"));
    }
    let mut clips: BTreeMap<String, Vec<(u32, ClassDistribution)>> = BTreeMap::new();
    let mut order: Vec<String> = Vec::new();
    for (idx, line) in lines {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let line_no = idx + 1;
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != 2 + NUM_CLASSES {
            return Err(Error::parse(
                path,
                line_no,
                format!("expected {} columns, got {}", 2 + NUM_CLASSES, fields.len()),
            ));
        }
        let clip_id = fields[0].trim().to_string();
        if clip_id.is_empty() {
            return Err(Error::parse(path, line_no, "empty clip_id"));
        }
        let frame_idx: u32 = fields[1]
            .trim()
            .parse()
            .map_err(|_| Error::parse(path, line_no, "bad frame index"))?;
        let mut scores = [0.0; NUM_CLASSES];
        for (i, f) in fields[2..].iter().enumerate() {
            scores[i] = f
                .trim()
                .parse::<Scalar>()
                .map_err(|_| Error::parse(path, line_no, format!("bad probability `{f}`")))?;
        }
        let dist = ClassDistribution::from_file_scores(scores)
            .map_err(|e| Error::parse(path, line_no, e.to_string()))?;
        if !clips.contains_key(&clip_id) {
            order.push(clip_id.clone());
        }
        clips.entry(clip_id).or_default().push((frame_idx, dist));
    }
    let mut out = Vec::with_capacity(order.len());
    for clip_id in order {
        let mut rows = clips.remove(&clip_id).expect("inserted above");
        rows.sort_by_key(|(idx, _)| *idx);
        out.push(FrameProbabilitySequence::new(
            clip_id,
            rows.into_iter().map(|(_, d)| d).collect(),
        )?);
    }
    Ok(out)
}

fn descriptor_header() -> String {
    let mut h = String::from("clip_id");
    for i in 0..DESCRIPTOR_LEN {
        h.push_str(&format!(",v{i}"));
    }
    h
}

/// Writes descriptors as `clip_id,v0,...,v69`.
pub fn write_descriptors(rows: &[(String, VideoDescriptor)], path: &Path) -> Result<()> {
    let mut out = std::io::BufWriter::new(std::fs::File::create(path)?);
    writeln!(out, "{}", descriptor_header())?;
    for (clip_id, d) in rows {
        write!(out, "{clip_id}")?;
        for &x in d.values() {
            write!(out, ",{x:.8e}")?;
        }
        writeln!(out)?;
    }
    out.flush()?;
    Ok(())
}

/// Reads a descriptor CSV written by [`write_descriptors`].
pub fn read_descriptors(path: &Path) -> Result<Vec<(String, VideoDescriptor)>> {
    let reader = BufReader::new(std::fs::File::open(path)?);
    let mut lines = reader.lines().enumerate();
    let header = match lines.next() {
        Some((_, line)) => line?,
        None => return Err(Error::parse(path, 1, "missing header")),
    };
    if header.trim_end() != descriptor_header() {
        return Err(Error::parse(path, 1, "unexpected header"));
    }
    let mut out = Vec::new();
    for (idx, line) in lines {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let line_no = idx + 1;
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != 1 + DESCRIPTOR_LEN {
            return Err(Error::parse(
                path,
                line_no,
                format!(
                    "expected {} columns, got {}",
                    1 + DESCRIPTOR_LEN,
                    fields.len()
                ),
            ));
        }
        let mut v = [0.0; DESCRIPTOR_LEN];
        for (i, f) in fields[1..].iter().enumerate() {
            v[i] = f
                .trim()
                .parse::<Scalar>()
                .map_err(|_| Error::parse(path, line_no, format!("bad value `{f}`")))?;
        }
        let d = VideoDescriptor::new(v).map_err(|e| Error::parse(path, line_no, e.to_string()))?;
        out.push((fields[0].trim().to_string(), d));
    }
    Ok(out)
}
