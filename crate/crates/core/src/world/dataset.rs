//! Line-delimited dataset files: one JSON object per sample.
//!
//! Floats round-trip exactly (shortest-round-trip decimal encoding), field
//! order is fixed by the struct, and generation is seeded, so a given
//! `(config, seed)` always produces a byte-identical file.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use super::{Sample, WorldError};

pub const SCHEMA_VERSION: u32 = 1;

pub fn write_dataset(samples: &[Sample], path: &Path) -> Result<(), WorldError> {
    let file = File::create(path)
        .map_err(|e| WorldError::Io(format!("create {}: {e}", path.display())))?;
    let mut w = BufWriter::new(file);
    w.write_all(write_dataset_string(samples).as_bytes())
        .map_err(|e| WorldError::Io(format!("write: {e}")))?;
    w.flush().map_err(|e| WorldError::Io(format!("flush: {e}")))
}

/// Serialized form of [`write_dataset`]; used by byte-identity checks.
pub fn write_dataset_string(samples: &[Sample]) -> String {
    let mut out = String::new();
    for s in samples {
        out.push_str(&serde_json::to_string(s).expect("sample serializes"));
        out.push('\n');
    }
    out
}

pub fn read_dataset(path: &Path) -> Result<Vec<Sample>, WorldError> {
    let file =
        File::open(path).map_err(|e| WorldError::Io(format!("open {}: {e}", path.display())))?;
    let reader = BufReader::new(file);
    let mut samples = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line.map_err(|e| WorldError::Io(format!("read: {e}")))?;
        samples.push(parse_line(&line, i + 1)?);
    }
    Ok(samples)
}

/// Parse dataset content from a string (line numbers are 1-based).
pub fn read_dataset_str(content: &str) -> Result<Vec<Sample>, WorldError> {
    content
        .lines()
        .enumerate()
        .map(|(i, line)| parse_line(line, i + 1))
        .collect()
}

fn parse_line(line: &str, lineno: usize) -> Result<Sample, WorldError> {
    let sample: Sample = serde_json::from_str(line).map_err(|e| WorldError::Parse {
        line: lineno,
        detail: e.to_string(),
    })?;
    if sample.schema_version != SCHEMA_VERSION {
        return Err(WorldError::Version {
            line: lineno,
            found: sample.schema_version,
            expected: SCHEMA_VERSION,
        });
    }
    if sample.candidates.len() != sample.n_candidates
        || sample.cr.len() != sample.n_candidates
        || sample.gt_index >= sample.n_candidates
    {
        return Err(WorldError::Parse {
            line: lineno,
            detail: format!(
                "inconsistent sample: {} candidates, {} cr values, gt {}",
                sample.candidates.len(),
                sample.cr.len(),
                sample.gt_index
            ),
        });
    }
    Ok(sample)
}
