//! Prediction CSV format.
//!
//! UTF-8, header required, fixed column order:
//! `clip_id,split,gold,p_angry,p_disgust,p_fear,p_happy,p_neutral,p_sad,p_surprise`
//!
//! `gold` is a label name or empty. Probabilities are serialized with 9
//! significant digits so that write -> read round-trips are lossless at that
//! precision.

use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use crate::emotions::{
    ClassDistribution, EmotionLabel, PredictionEntry, PredictionSet, Split,
};
use crate::error::{Error, Result};
use crate::{Scalar, NUM_CLASSES};

pub const PREDICTION_HEADER: &str =
    "clip_id,split,gold,p_angry,p_disgust,p_fear,p_happy,p_neutral,p_sad,p_surprise";

/// Formats one probability with 9 significant digits.
pub(crate) fn fmt_prob(v: Scalar) -> String {
    format!("{v:.8e}")
}

fn write_rows<W: Write>(out: &mut W, set: &PredictionSet) -> Result<()> {
    for e in set.entries() {
        let gold = e.gold.map(|g| g.name()).unwrap_or("");
        write!(out, "{},{},{}", e.clip_id, set.split(), gold)?;
        for &p in e.dist.scores() {
            write!(out, ",{}", fmt_prob(p))?;
        }
        writeln!(out)?;
    }
    Ok(())
}

/// Writes one prediction set to `path`.
pub fn write_predictions(set: &PredictionSet, path: &Path) -> Result<()> {
    write_prediction_sets(std::slice::from_ref(set), path)
}

/// Writes several sets (e.g. train/valid/test of one expert) to one file.
pub fn write_prediction_sets(sets: &[PredictionSet], path: &Path) -> Result<()> {
    let mut out = std::io::BufWriter::new(std::fs::File::create(path)?);
    writeln!(out, "{PREDICTION_HEADER}")?;
    for set in sets {
        write_rows(&mut out, set)?;
    }
    out.flush()?;
    Ok(())
}

fn parse_row(path: &Path, line_no: usize, line: &str) -> Result<(Split, PredictionEntry)> {
    let fields: Vec<&str> = line.split(',').collect();
    if fields.len() != 3 + NUM_CLASSES {
        return Err(Error::parse(
            path,
            line_no,
            format!("expected {} columns, got {}", 3 + NUM_CLASSES, fields.len()),
        ));
    }
    let clip_id = fields[0].trim();
    if clip_id.is_empty() {
        return Err(Error::parse(path, line_no, "empty clip_id"));
    }
    let split = Split::parse(fields[1].trim())
        .map_err(|e| Error::parse(path, line_no, e.to_string()))?;
    let gold_field = fields[2].trim();
    let gold = if gold_field.is_empty() {
        None
    } else {
        Some(
            EmotionLabel::parse(gold_field)
                .map_err(|e| Error::parse(path, line_no, e.to_string()))?,
        )
    };
    let mut scores = [0.0; NUM_CLASSES];
    for (i, f) in fields[3..].iter().enumerate() {
        scores[i] = f.trim().parse::<Scalar>().map_err(|_| {
            Error::parse(path, line_no, format!("bad probability `{}`", f.trim()))
        })?;
    }
    let dist = ClassDistribution::from_file_scores(scores)
        .map_err(|e| Error::parse(path, line_no, e.to_string()))?;
    Ok((
        split,
        PredictionEntry {
            clip_id: clip_id.to_string(),
            dist,
            gold,
        },
    ))
}

fn read_grouped(path: &Path) -> Result<Vec<(Split, Vec<PredictionEntry>)>> {
    let reader = BufReader::new(std::fs::File::open(path)?);
    let mut lines = reader.lines().enumerate();
    let header = match lines.next() {
        Some((_, line)) => line?,
        None => return Err(Error::parse(path, 1, "missing header")),
    };
    if header.trim_end() != PREDICTION_HEADER {
        return Err(Error::parse(path, 1, "unexpected header"));
    }
    let mut groups: Vec<(Split, Vec<PredictionEntry>)> = Split::ALL
        .iter()
        .map(|&s| (s, Vec::new()))
        .collect();
    for (idx, line) in lines {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let (split, entry) = parse_row(path, idx + 1, &line)?;
        groups
            .iter_mut()
            .find(|(s, _)| *s == split)
            .expect("all splits present")
            .1
            .push(entry);
    }
    groups.retain(|(_, v)| !v.is_empty());
    Ok(groups)
}

/// Reads a file containing exactly one split.
pub fn read_predictions(path: &Path) -> Result<PredictionSet> {
    let groups = read_grouped(path)?;
    match groups.len() {
        0 => Err(Error::parse(path, 1, "no prediction rows")),
        1 => {
            let (split, entries) = groups.into_iter().next().expect("len checked");
            PredictionSet::new(split, entries)
                .map_err(|e| Error::parse(path, 0, e.to_string()))
        }
        n => Err(Error::parse(
            path,
            0,
            format!("expected a single split, file contains {n}"),
        )),
    }
}

/// Reads a file that may contain several splits; returns one set per split
/// present, in canonical split order.
pub fn read_prediction_sets(path: &Path) -> Result<Vec<PredictionSet>> {
    let groups = read_grouped(path)?;
    if groups.is_empty() {
        return Err(Error::parse(path, 1, "no prediction rows"));
    }
    groups
        .into_iter()
        .map(|(split, entries)| {
            PredictionSet::new(split, entries).map_err(|e| Error::parse(path, 0, e.to_string()))
        })
        .collect()
}
