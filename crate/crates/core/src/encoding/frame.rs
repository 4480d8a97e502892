use std::collections::HashSet;
use std::fmt;
use std::str::FromStr;

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Weeks per season frame. Longer seasons are truncated to this width.
pub const SEASON_WEEKS: usize = 52;

/// The 50 states plus DC, in the fixed alphabetical order used on the
/// location axis.
pub const US_LOCATIONS: [&str; 51] = [
    "AK", "AL", "AR", "AZ", "CA", "CO", "CT", "DC", "DE", "FL", "GA", "HI", "IA", "ID", "IL", "IN",
    "KS", "KY", "LA", "MA", "MD", "ME", "MI", "MN", "MO", "MS", "MT", "NC", "ND", "NE", "NH", "NJ",
    "NM", "NV", "NY", "OH", "OK", "OR", "PA", "RI", "SC", "SD", "TN", "TX", "UT", "VA", "VT", "WA",
    "WI", "WV", "WY",
];

pub fn us_locations() -> Vec<String> {
    US_LOCATIONS.iter().map(|s| s.to_string()).collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SourceTag {
    Surveillance,
    Modeled,
}

impl fmt::Display for SourceTag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            SourceTag::Surveillance => f.write_str("surveillance"),
            SourceTag::Modeled => f.write_str("modeled"),
        }
    }
}

impl FromStr for SourceTag {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "surveillance" => Ok(SourceTag::Surveillance),
            "modeled" | "modelled" => Ok(SourceTag::Modeled),
            other => Err(Error::data(format!("unknown source tag '{other}'"))),
        }
    }
}

/// One epidemic season as a weeks × locations grid of nonnegative incidence.
///
/// Row `i` is week `i + 1` of the season, column `j` is `locations[j]`.
#[derive(Debug, Clone, PartialEq)]
pub struct SeasonFrame {
    id: String,
    season_start: String,
    locations: Vec<String>,
    values: Array2<f64>,
    source: SourceTag,
    provenance: String,
}

impl SeasonFrame {
    pub fn new(
        id: impl Into<String>,
        values: Array2<f64>,
        locations: Vec<String>,
        source: SourceTag,
    ) -> Result<Self> {
        let id = id.into();
        if values.ncols() != locations.len() {
            return Err(Error::data(format!(
                "frame '{id}': {} value columns but {} location codes",
                values.ncols(),
                locations.len()
            )));
        }
        if values.nrows() == 0 || values.ncols() == 0 {
            return Err(Error::data(format!("frame '{id}' is empty")));
        }
        let mut seen = HashSet::with_capacity(locations.len());
        for code in &locations {
            if !seen.insert(code.as_str()) {
                return Err(Error::data(format!("frame '{id}': duplicate location '{code}'")));
            }
        }
        if let Some(bad) = values.iter().find(|v| !v.is_finite() || **v < 0.0) {
            return Err(Error::data(format!(
                "frame '{id}': value {bad} is negative or non-finite"
            )));
        }
        Ok(Self {
            id,
            season_start: String::new(),
            locations,
            values,
            source,
            provenance: String::new(),
        })
    }

    pub fn with_season_start(mut self, start: impl Into<String>) -> Self {
        self.season_start = start.into();
        self
    }

    pub fn with_provenance(mut self, provenance: impl Into<String>) -> Self {
        self.provenance = provenance.into();
        self
    }

    pub fn id(&self) -> &str {
        &self.id
    }

    pub fn season_start(&self) -> &str {
        &self.season_start
    }

    pub fn locations(&self) -> &[String] {
        &self.locations
    }

    pub fn values(&self) -> &Array2<f64> {
        &self.values
    }

    pub fn source(&self) -> SourceTag {
        self.source
    }

    pub fn provenance(&self) -> &str {
        &self.provenance
    }

    pub fn weeks(&self) -> usize {
        self.values.nrows()
    }

    pub fn n_locations(&self) -> usize {
        self.values.ncols()
    }

    pub fn location_index(&self, code: &str) -> Option<usize> {
        self.locations.iter().position(|c| c == code)
    }

    pub fn max_value(&self) -> f64 {
        self.values.iter().copied().fold(0.0, f64::max)
    }

    /// Replace the grid, keeping metadata. The new grid must satisfy the
    /// same invariants as in [`SeasonFrame::new`].
    pub fn with_values(&self, values: Array2<f64>) -> Result<Self> {
        let frame = SeasonFrame::new(self.id.clone(), values, self.locations.clone(), self.source)?;
        Ok(frame
            .with_season_start(self.season_start.clone())
            .with_provenance(self.provenance.clone()))
    }

    pub fn with_id(mut self, id: impl Into<String>) -> Self {
        self.id = id.into();
        self
    }

    /// Keep only the first `weeks` rows (53-week seasons become 52-week frames).
    pub fn truncate_weeks(self, weeks: usize) -> Self {
        if self.values.nrows() <= weeks {
            return self;
        }
        let values = self.values.slice(ndarray::s![..weeks, ..]).to_owned();
        Self { values, ..self }
    }

    /// Reorder columns so location codes are sorted alphabetically.
    pub fn sorted_locations(self) -> Self {
        let mut order: Vec<usize> = (0..self.locations.len()).collect();
        order.sort_by(|&a, &b| self.locations[a].cmp(&self.locations[b]));
        if order.iter().enumerate().all(|(i, &j)| i == j) {
            return self;
        }
        let locations = order.iter().map(|&j| self.locations[j].clone()).collect();
        let values = Array2::from_shape_fn(self.values.dim(), |(w, l)| self.values[[w, order[l]]]);
        Self {
            locations,
            values,
            ..self
        }
    }
}

/// Check that every frame shares the same shape and location axis.
pub fn check_consistent(frames: &[SeasonFrame]) -> Result<()> {
    let Some(first) = frames.first() else {
        return Ok(());
    };
    for f in &frames[1..] {
        if f.values.dim() != first.values.dim() || f.locations != first.locations {
            return Err(Error::data(format!(
                "frame '{}' has shape {:?} / locations differing from frame '{}' {:?}",
                f.id,
                f.values.dim(),
                first.id,
                first.values.dim()
            )));
        }
    }
    Ok(())
}
