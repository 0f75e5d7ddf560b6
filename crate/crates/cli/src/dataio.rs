//! CLI-side dataset inputs: the labels CSV and directories of PGM frames.

use std::collections::BTreeMap;
use std::io::BufRead;
use std::path::Path;

use emofuse::emotions::{EmotionLabel, Split};
use emofuse::error::{Error, Result};
use emofuse::image::{read_pgm, GrayImage};

pub const LABELS_HEADER: &str = "clip_id,split,gold";

/// Reads `clip_id,split,gold` rows.
pub fn read_labels(path: &Path) -> Result<BTreeMap<String, (Split, EmotionLabel)>> {
    let file = std::fs::File::open(path)?;
    let mut lines = std::io::BufReader::new(file).lines().enumerate();
    let header = match lines.next() {
        Some((_, line)) => line?,
        None => return Err(Error::parse_public(path, 1, "missing header")),
    };
    if header.trim_end() != LABELS_HEADER {
        return Err(Error::parse_public(path, 1, "unexpected header"));
    }
    let mut out = BTreeMap::new();
    for (idx, line) in lines {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let line_no = idx + 1;
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != 3 {
            return Err(Error::parse_public(path, line_no, "expected 3 columns"));
        }
        let clip = fields[0].trim().to_string();
        let split = Split::parse(fields[1].trim())
            .map_err(|e| Error::parse_public(path, line_no, &e.to_string()))?;
        let gold = EmotionLabel::parse(fields[2].trim())
            .map_err(|e| Error::parse_public(path, line_no, &e.to_string()))?;
        if out.insert(clip.clone(), (split, gold)).is_some() {
            return Err(Error::DuplicateClip(clip));
        }
    }
    if out.is_empty() {
        return Err(Error::parse_public(path, 1, "no label rows"));
    }
    Ok(out)
}

pub fn write_labels(
    labels: &[(String, Split, EmotionLabel)],
    path: &Path,
) -> Result<()> {
    let mut text = String::from(LABELS_HEADER);
    text.push('\n');
    for (clip, split, gold) in labels {
        text.push_str(&format!("{clip},{split},{gold}\n"));
    }
    crate::report::write_atomic(path, text.as_bytes())?;
    Ok(())
}

/// Loads every `<clip>_<frame>.pgm` in a directory, grouped by clip and
/// ordered by frame index. The frame index is the digits after the last
/// underscore.
pub fn read_frame_dir(dir: &Path) -> Result<BTreeMap<String, Vec<(u32, GrayImage)>>> {
    let mut out: BTreeMap<String, Vec<(u32, GrayImage)>> = BTreeMap::new();
    let mut paths: Vec<_> = std::fs::read_dir(dir)?
        .filter_map(|e| e.ok())
        .map(|e| e.path())
        .filter(|p| p.extension().map_or(false, |e| e == "pgm"))
        .collect();
    paths.sort();
    for path in paths {
        let stem = path
            .file_stem()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_default();
        let (clip, frame) = stem.rsplit_once('_').ok_or_else(|| {
            Error::parse_public(&path, 0, "frame files must be named <clip>_<frame>.pgm")
        })?;
        let frame: u32 = frame
            .parse()
            .map_err(|_| Error::parse_public(&path, 0, "bad frame index in file name"))?;
        out.entry(clip.to_string())
            .or_default()
            .push((frame, read_pgm(&path)?));
    }
    if out.is_empty() {
        return Err(Error::EmptyInput(format!(
            "no PGM frames in {}",
            dir.display()
        )));
    }
    for frames in out.values_mut() {
        frames.sort_by_key(|(i, _)| *i);
    }
    Ok(out)
}

/// Extension trait hook: `Error::parse` is crate-private in the library,
/// so the CLI builds the same shape here.
trait ParsePublic {
    fn parse_public(path: &Path, line: usize, msg: &str) -> Error;
}

impl ParsePublic for Error {
    fn parse_public(path: &Path, line: usize, msg: &str) -> Error {
        Error::Parse {
            path: path.display().to_string(),
            line,
            msg: msg.to_string(),
        }
    }
}
