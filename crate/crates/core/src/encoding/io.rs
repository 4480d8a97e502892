//! Columnar text storage for season frames:
//! `season_id,week_index,location_code,value[,source_tag,provenance,season_start]`.

use std::collections::{BTreeSet, HashMap};
use std::io::{Read, Write};
use std::path::Path;

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use super::frame::{SeasonFrame, SourceTag, SEASON_WEEKS};
use crate::error::{Error, Result};

#[derive(Debug, Serialize, Deserialize)]
struct FrameRow {
    season_id: String,
    week_index: usize,
    location_code: String,
    value: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    source_tag: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    provenance: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    season_start: Option<String>,
}

struct Pending {
    cells: HashMap<(usize, String), f64>,
    source: Option<String>,
    provenance: Option<String>,
    season_start: Option<String>,
}

/// Read frames, validating that every week × location cell appears exactly
/// once. Frames come back in first-appearance order with alphabetically
/// sorted locations; seasons longer than 52 weeks are truncated.
pub fn read_frames<R: Read>(reader: R, default_source: SourceTag) -> Result<Vec<SeasonFrame>> {
    let mut rdr = csv::Reader::from_reader(reader);
    let mut order: Vec<String> = Vec::new();
    let mut pending: HashMap<String, Pending> = HashMap::new();
    for (line, row) in rdr.deserialize::<FrameRow>().enumerate() {
        let row = row?;
        if row.week_index == 0 {
            return Err(Error::data(format!("row {}: week_index is 1-based", line + 2)));
        }
        let entry = pending.entry(row.season_id.clone()).or_insert_with(|| {
            order.push(row.season_id.clone());
            Pending {
                cells: HashMap::new(),
                source: None,
                provenance: None,
                season_start: None,
            }
        });
        if entry
            .cells
            .insert((row.week_index, row.location_code.clone()), row.value)
            .is_some()
        {
            return Err(Error::data(format!(
                "season '{}': week {} location '{}' appears twice",
                row.season_id, row.week_index, row.location_code
            )));
        }
        if entry.source.is_none() {
            entry.source = row.source_tag;
        }
        if entry.provenance.is_none() {
            entry.provenance = row.provenance;
        }
        if entry.season_start.is_none() {
            entry.season_start = row.season_start;
        }
    }
    order
        .into_iter()
        .map(|id| {
            let p = pending.remove(&id).expect("season recorded");
            let source = match &p.source {
                Some(s) => s.parse()?,
                None => default_source,
            };
            let frame = assemble(&id, &p.cells, source)?
                .with_provenance(p.provenance.unwrap_or_default())
                .with_season_start(p.season_start.unwrap_or_default());
            Ok(frame.truncate_weeks(SEASON_WEEKS))
        })
        .collect()
}

/// Build a complete frame from sparse `(week, location) -> value` cells.
pub(crate) fn assemble(
    id: &str,
    cells: &HashMap<(usize, String), f64>,
    source: SourceTag,
) -> Result<SeasonFrame> {
    let locations: Vec<String> = cells
        .keys()
        .map(|(_, l)| l.clone())
        .collect::<BTreeSet<_>>()
        .into_iter()
        .collect();
    let weeks = cells.keys().map(|(w, _)| *w).max().unwrap_or(0);
    if cells.len() != weeks * locations.len() {
        let missing = (1..=weeks)
            .flat_map(|w| locations.iter().map(move |l| (w, l.clone())))
            .find(|k| !cells.contains_key(k));
        return Err(Error::data(format!(
            "season '{id}' is incomplete: {} of {} cells present (first missing: {:?})",
            cells.len(),
            weeks * locations.len(),
            missing
        )));
    }
    let values = Array2::from_shape_fn((weeks, locations.len()), |(w, l)| {
        cells[&(w + 1, locations[l].clone())]
    });
    SeasonFrame::new(id, values, locations, source)
}

pub fn write_frames<W: Write>(writer: W, frames: &[SeasonFrame], with_metadata: bool) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(writer);
    for f in frames {
        for w in 0..f.weeks() {
            for (l, code) in f.locations().iter().enumerate() {
                wtr.serialize(FrameRow {
                    season_id: f.id().to_string(),
                    week_index: w + 1,
                    location_code: code.clone(),
                    value: f.values()[[w, l]],
                    source_tag: with_metadata.then(|| f.source().to_string()),
                    provenance: with_metadata.then(|| f.provenance().to_string()),
                    season_start: with_metadata.then(|| f.season_start().to_string()),
                })?;
            }
        }
    }
    wtr.flush()?;
    Ok(())
}

pub fn load_frames(path: &Path, default_source: SourceTag) -> Result<Vec<SeasonFrame>> {
    let file = std::fs::File::open(path)
        .map_err(|e| Error::data(format!("cannot open {}: {e}", path.display())))?;
    read_frames(std::io::BufReader::new(file), default_source)
}

pub fn save_frames(path: &Path, frames: &[SeasonFrame], with_metadata: bool) -> Result<()> {
    let file = std::fs::File::create(path)?;
    write_frames(std::io::BufWriter::new(file), frames, with_metadata)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn reads_and_sorts_locations() {
        let text = "season_id,week_index,location_code,value\n\
                    s1,1,NY,1\ns1,1,CA,2\ns1,2,NY,3\ns1,2,CA,4\n";
        let frames = read_frames(text.as_bytes(), SourceTag::Surveillance).unwrap();
        assert_eq!(frames.len(), 1);
        assert_eq!(frames[0].locations(), ["CA", "NY"]);
        assert_eq!(frames[0].values()[[1, 0]], 4.0);
        assert_eq!(frames[0].source(), SourceTag::Surveillance);
    }

    #[test]
    fn incomplete_or_duplicate_rejected() {
        let missing = "season_id,week_index,location_code,value\ns1,1,NY,1\ns1,1,CA,2\ns1,2,NY,3\n";
        assert!(read_frames(missing.as_bytes(), SourceTag::Modeled).is_err());
        let dup = "season_id,week_index,location_code,value\ns1,1,NY,1\ns1,1,NY,2\n";
        assert!(read_frames(dup.as_bytes(), SourceTag::Modeled).is_err());
    }

    #[test]
    fn metadata_roundtrip() {
        let f = SeasonFrame::new(
            "x",
            Array2::from_shape_fn((3, 2), |(w, l)| (w * 2 + l) as f64 + 0.125),
            vec!["A".into(), "B".into()],
            SourceTag::Modeled,
        )
        .unwrap()
        .with_provenance("m1/s2/t7");
        let mut buf = Vec::new();
        write_frames(&mut buf, &[f.clone()], true).unwrap();
        let back = read_frames(buf.as_slice(), SourceTag::Surveillance).unwrap();
        assert_eq!(back, vec![f]);
    }
}
