use std::str::FromStr;

use ndarray::{s, Array2};
use serde::{Deserialize, Serialize};

use super::transform::PadSpec;
use crate::error::{Error, Result};

/// Which cells of a `weeks × locations` grid are observed (`true`) and must
/// be honored during conditional generation.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ObservationMask {
    observed: Array2<bool>,
}

/// Mask families. Week indices are 1-based.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum MaskSpec {
    /// Weeks before `reference_week` observed everywhere; the rest hidden.
    PastOnly { reference_week: usize },
    /// The listed locations are hidden for the whole season.
    HalfMap { hidden: Vec<String> },
    /// One location hidden for the whole season.
    LeaveOneOut { location: String },
    /// Weeks `week_a..week_b` (inclusive start, exclusive end) hidden everywhere.
    MidseasonGap { week_a: usize, week_b: usize },
    /// Alternating `block_weeks × block_locations` tiles, top-left tile observed.
    Checkerboard {
        block_weeks: usize,
        block_locations: usize,
    },
    #[serde(skip)]
    Custom(Array2<bool>),
}

impl ObservationMask {
    pub fn from_grid(observed: Array2<bool>) -> Self {
        Self { observed }
    }

    pub fn all(weeks: usize, locations: usize, value: bool) -> Self {
        Self {
            observed: Array2::from_elem((weeks, locations), value),
        }
    }

    pub fn observed(&self) -> &Array2<bool> {
        &self.observed
    }

    pub fn hidden(&self) -> Array2<bool> {
        self.observed.mapv(|b| !b)
    }

    pub fn shape(&self) -> (usize, usize) {
        self.observed.dim()
    }

    pub fn is_observed(&self, week: usize, location: usize) -> bool {
        self.observed[[week, location]]
    }

    pub fn n_observed(&self) -> usize {
        self.observed.iter().filter(|&&b| b).count()
    }

    pub fn n_hidden(&self) -> usize {
        self.observed.len() - self.n_observed()
    }

    pub fn fraction_observed(&self) -> f64 {
        self.n_observed() as f64 / self.observed.len() as f64
    }

    /// Expand to the padded model grid as a 0/1 weight. Padding cells count as
    /// observed (their value is always the encoded zero).
    pub fn to_model(&self, pad: &PadSpec) -> Result<Array2<f64>> {
        if self.shape() != pad.data_shape() {
            return Err(Error::invalid(format!(
                "mask shape {:?} does not match grid {:?}",
                self.shape(),
                pad.data_shape()
            )));
        }
        let mut out = Array2::ones(pad.model_shape());
        out.slice_mut(s![..pad.weeks, ..pad.locations])
            .assign(&self.observed.mapv(|b| if b { 1.0 } else { 0.0 }));
        Ok(out)
    }

    /// If the mask is "all weeks before some week observed, everything else
    /// hidden", return that (1-based) reference week.
    pub fn past_only_reference(&self) -> Option<usize> {
        let (weeks, _) = self.shape();
        let mut reference = None;
        for w in 0..weeks {
            let row = self.observed.row(w);
            let all = row.iter().all(|&b| b);
            let none = row.iter().all(|&b| !b);
            match (reference, all, none) {
                (None, true, _) => {}
                (None, false, true) => reference = Some(w + 1),
                (Some(_), _, true) => {}
                _ => return None,
            }
        }
        // A fully observed grid has no boundary.
        reference
    }
}

pub fn make_mask(spec: &MaskSpec, weeks: usize, locations: &[String]) -> Result<ObservationMask> {
    let n_loc = locations.len();
    let loc_index = |code: &str| {
        locations
            .iter()
            .position(|c| c == code)
            .ok_or_else(|| Error::invalid(format!("unknown location '{code}'")))
    };
    let observed = match spec {
        MaskSpec::PastOnly { reference_week } => {
            if *reference_week < 1 || *reference_week > weeks {
                return Err(Error::invalid(format!(
                    "reference week {reference_week} outside [1, {weeks}]"
                )));
            }
            Array2::from_shape_fn((weeks, n_loc), |(w, _)| w + 1 < *reference_week)
        }
        MaskSpec::HalfMap { hidden } => {
            let idx = hidden
                .iter()
                .map(|c| loc_index(c))
                .collect::<Result<Vec<_>>>()?;
            Array2::from_shape_fn((weeks, n_loc), |(_, l)| !idx.contains(&l))
        }
        MaskSpec::LeaveOneOut { location } => {
            let li = loc_index(location)?;
            Array2::from_shape_fn((weeks, n_loc), |(_, l)| l != li)
        }
        MaskSpec::MidseasonGap { week_a, week_b } => {
            if week_a >= week_b {
                return Err(Error::invalid(format!(
                    "gap start {week_a} must precede gap end {week_b}"
                )));
            }
            if *week_a < 1 || *week_b > weeks + 1 {
                return Err(Error::invalid(format!(
                    "gap {week_a}..{week_b} outside the season"
                )));
            }
            Array2::from_shape_fn((weeks, n_loc), |(w, _)| w + 1 < *week_a || w + 1 >= *week_b)
        }
        MaskSpec::Checkerboard {
            block_weeks,
            block_locations,
        } => {
            if *block_weeks == 0 || *block_locations == 0 {
                return Err(Error::invalid("checkerboard block sizes must be positive"));
            }
            Array2::from_shape_fn((weeks, n_loc), |(w, l)| {
                (w / block_weeks + l / block_locations) % 2 == 0
            })
        }
        MaskSpec::Custom(grid) => {
            if grid.dim() != (weeks, n_loc) {
                return Err(Error::invalid(format!(
                    "custom mask shape {:?} does not match {:?}",
                    grid.dim(),
                    (weeks, n_loc)
                )));
            }
            grid.clone()
        }
    };
    Ok(ObservationMask { observed })
}

/// Hide every other location (odd positions), the default half-map split.
pub fn alternate_locations(locations: &[String]) -> Vec<String> {
    locations.iter().skip(1).step_by(2).cloned().collect()
}

impl FromStr for MaskSpec {
    type Err = Error;

    /// Parse `past-only:30`, `half-map:CA,FL`, `leave-one-out:NC`,
    /// `gap:20:30` or `checkerboard:4:4`.
    fn from_str(s: &str) -> Result<Self> {
        let parts: Vec<&str> = s.split(':').collect();
        let num = |p: &str| {
            p.trim()
                .parse::<usize>()
                .map_err(|_| Error::invalid(format!("bad number '{p}' in mask '{s}'")))
        };
        match parts.as_slice() {
            ["past-only", w] => Ok(MaskSpec::PastOnly {
                reference_week: num(w)?,
            }),
            ["half-map", locs] => Ok(MaskSpec::HalfMap {
                hidden: locs.split(',').map(|c| c.trim().to_string()).collect(),
            }),
            ["leave-one-out", loc] => Ok(MaskSpec::LeaveOneOut {
                location: loc.trim().to_string(),
            }),
            ["gap", a, b] => Ok(MaskSpec::MidseasonGap {
                week_a: num(a)?,
                week_b: num(b)?,
            }),
            ["checkerboard", bw, bl] => Ok(MaskSpec::Checkerboard {
                block_weeks: num(bw)?,
                block_locations: num(bl)?,
            }),
            _ => Err(Error::invalid(format!("unrecognized mask spec '{s}'"))),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::encoding::frame::us_locations;

    #[test]
    fn past_only_at_week_one_is_empty() {
        let m = make_mask(&MaskSpec::PastOnly { reference_week: 1 }, 52, &us_locations()).unwrap();
        assert_eq!(m.n_observed(), 0);
        assert!(make_mask(&MaskSpec::PastOnly { reference_week: 0 }, 52, &us_locations()).is_err());
        assert!(make_mask(&MaskSpec::PastOnly { reference_week: 53 }, 52, &us_locations()).is_err());
    }

    #[test]
    fn past_only_marks_earlier_weeks() {
        let m = make_mask(&MaskSpec::PastOnly { reference_week: 10 }, 52, &us_locations()).unwrap();
        assert!(m.is_observed(8, 3));
        assert!(!m.is_observed(9, 3));
        assert_eq!(m.n_observed(), 9 * 51);
        assert_eq!(m.past_only_reference(), Some(10));
    }

    #[test]
    fn leave_one_out_hides_one_column() {
        let locs = us_locations();
        let m = make_mask(&MaskSpec::LeaveOneOut { location: "NC".into() }, 52, &locs).unwrap();
        let nc = locs.iter().position(|c| c == "NC").unwrap();
        for w in 0..52 {
            for l in 0..51 {
                assert_eq!(m.is_observed(w, l), l != nc);
            }
        }
        assert!(make_mask(&MaskSpec::LeaveOneOut { location: "ZZ".into() }, 52, &locs).is_err());
        assert_eq!(m.past_only_reference(), None);
    }

    #[test]
    fn checkerboard_fraction_by_enumeration() {
        let m = make_mask(
            &MaskSpec::Checkerboard {
                block_weeks: 4,
                block_locations: 4,
            },
            52,
            &us_locations(),
        )
        .unwrap();
        let mut count = 0usize;
        for w in 0..52 {
            for l in 0..51 {
                if m.is_observed(w, l) {
                    count += 1;
                }
            }
        }
        let frac = count as f64 / (52.0 * 51.0);
        assert!((0.45..=0.55).contains(&frac), "fraction {frac}");
        assert!(m.is_observed(0, 0) && !m.is_observed(0, 4) && !m.is_observed(4, 0));
    }

    #[test]
    fn gap_and_block_errors() {
        let locs = us_locations();
        assert!(make_mask(&MaskSpec::MidseasonGap { week_a: 20, week_b: 20 }, 52, &locs).is_err());
        assert!(make_mask(&MaskSpec::Checkerboard { block_weeks: 0, block_locations: 4 }, 52, &locs).is_err());
        let m = make_mask(&MaskSpec::MidseasonGap { week_a: 20, week_b: 30 }, 52, &locs).unwrap();
        assert_eq!(m.n_hidden(), 10 * 51);
    }

    #[test]
    fn masks_partition_grid() {
        let locs = us_locations();
        let specs = vec![
            MaskSpec::PastOnly { reference_week: 20 },
            MaskSpec::HalfMap { hidden: alternate_locations(&locs) },
            MaskSpec::LeaveOneOut { location: "IL".into() },
            MaskSpec::MidseasonGap { week_a: 5, week_b: 9 },
            MaskSpec::Checkerboard { block_weeks: 4, block_locations: 4 },
        ];
        for spec in specs {
            let m = make_mask(&spec, 52, &locs).unwrap();
            let hidden = m.hidden();
            for (o, h) in m.observed().iter().zip(hidden.iter()) {
                assert!(*o ^ *h);
            }
            assert_eq!(m.n_observed() + m.n_hidden(), 52 * 51);
        }
    }

    #[test]
    fn parse_specs() {
        assert_eq!(
            "past-only:12".parse::<MaskSpec>().unwrap(),
            MaskSpec::PastOnly { reference_week: 12 }
        );
        assert_eq!(
            "checkerboard:4:2".parse::<MaskSpec>().unwrap(),
            MaskSpec::Checkerboard { block_weeks: 4, block_locations: 2 }
        );
        assert!("diagonal".parse::<MaskSpec>().is_err());
    }

    #[test]
    fn model_mask_pads_as_observed() {
        let pad = PadSpec::for_shape(6, 3, 4).unwrap();
        let m = ObservationMask::all(6, 3, false);
        let w = m.to_model(&pad).unwrap();
        assert_eq!(w.dim(), (8, 4));
        assert_eq!(w.sum(), (8.0 * 4.0) - 18.0);
    }
}
