use ndarray::{s, Array2};
use serde::{Deserialize, Serialize};

use super::frame::{SeasonFrame, SourceTag};
use crate::error::{Error, Result};

/// Grid sides are padded up to a multiple of this (five-scale networks halve
/// resolution four times).
pub const DEFAULT_PAD_MULTIPLE: usize = 16;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TransformKind {
    Linear,
    Sqrt,
}

impl std::str::FromStr for TransformKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "linear" | "lins" => Ok(TransformKind::Linear),
            "sqrt" => Ok(TransformKind::Sqrt),
            other => Err(Error::invalid(format!("unknown transform '{other}'"))),
        }
    }
}

/// Incidence ↔ model-space map: optional square root, then an affine
/// rescaling of `[0, data_max]` onto `[scale_lo, scale_hi]`.
///
/// `data_max` is measured after the square root for [`TransformKind::Sqrt`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IntensityTransform {
    pub kind: TransformKind,
    pub scale_lo: f64,
    pub scale_hi: f64,
    pub data_max: f64,
    pub fitted: bool,
}

impl IntensityTransform {
    pub fn unfitted(kind: TransformKind) -> Self {
        Self {
            kind,
            scale_lo: 0.0,
            scale_hi: 2.0,
            data_max: 1.0,
            fitted: false,
        }
    }

    /// Fit a single global `data_max` across the whole library.
    pub fn fit(frames: &[SeasonFrame], kind: TransformKind) -> Result<Self> {
        if frames.is_empty() {
            return Err(Error::invalid("cannot fit a transform on an empty frame list"));
        }
        let mut max = 0.0f64;
        for f in frames {
            for &v in f.values() {
                if !v.is_finite() || v < 0.0 {
                    return Err(Error::data(format!(
                        "frame '{}' contains invalid value {v}",
                        f.id()
                    )));
                }
                max = max.max(v);
            }
        }
        Self::with_data_max(kind, max)
    }

    /// Build a fitted transform for a known raw-incidence maximum.
    pub fn with_data_max(kind: TransformKind, raw_max: f64) -> Result<Self> {
        if !(raw_max.is_finite() && raw_max > 0.0) {
            return Err(Error::data(format!(
                "transform needs a positive finite maximum, got {raw_max}"
            )));
        }
        let data_max = match kind {
            TransformKind::Linear => raw_max,
            TransformKind::Sqrt => raw_max.sqrt(),
        };
        Ok(Self {
            kind,
            scale_lo: 0.0,
            scale_hi: 2.0,
            data_max,
            fitted: true,
        })
    }

    fn require_fitted(&self) -> Result<()> {
        if self.fitted {
            Ok(())
        } else {
            Err(Error::invalid("intensity transform has not been fitted"))
        }
    }

    #[inline]
    pub fn encode_value(&self, x: f64) -> f64 {
        let g = match self.kind {
            TransformKind::Linear => x,
            TransformKind::Sqrt => x.max(0.0).sqrt(),
        };
        self.scale_lo + (self.scale_hi - self.scale_lo) * g / self.data_max
    }

    /// Inverse of [`encode_value`](Self::encode_value); values below
    /// `scale_lo` decode to zero incidence.
    #[inline]
    pub fn decode_value(&self, y: f64) -> f64 {
        let g = ((y - self.scale_lo) * self.data_max / (self.scale_hi - self.scale_lo)).max(0.0);
        match self.kind {
            TransformKind::Linear => g,
            TransformKind::Sqrt => g * g,
        }
    }
}

/// Records how a `weeks × locations` grid sits inside the padded model grid.
/// Padding is appended on the high-index side of both axes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct PadSpec {
    pub weeks: usize,
    pub locations: usize,
    pub padded_weeks: usize,
    pub padded_locations: usize,
}

impl PadSpec {
    pub fn for_shape(weeks: usize, locations: usize, multiple: usize) -> Result<Self> {
        if multiple == 0 {
            return Err(Error::invalid("pad multiple must be positive"));
        }
        let up = |n: usize| n.div_ceil(multiple) * multiple;
        Ok(Self {
            weeks,
            locations,
            padded_weeks: up(weeks),
            padded_locations: up(locations),
        })
    }

    pub fn model_shape(&self) -> (usize, usize) {
        (self.padded_weeks, self.padded_locations)
    }

    pub fn data_shape(&self) -> (usize, usize) {
        (self.weeks, self.locations)
    }

    pub fn pad(&self, data: &Array2<f64>) -> Result<Array2<f64>> {
        if data.dim() != self.data_shape() {
            return Err(Error::invalid(format!(
                "grid shape {:?} does not match pad spec {:?}",
                data.dim(),
                self.data_shape()
            )));
        }
        let mut out = Array2::zeros(self.model_shape());
        out.slice_mut(s![..self.weeks, ..self.locations]).assign(data);
        Ok(out)
    }

    pub fn strip(&self, padded: &Array2<f64>) -> Result<Array2<f64>> {
        if padded.dim() != self.model_shape() {
            return Err(Error::invalid(format!(
                "model grid shape {:?} does not match pad spec {:?}",
                padded.dim(),
                self.model_shape()
            )));
        }
        Ok(padded.slice(s![..self.weeks, ..self.locations]).to_owned())
    }
}

/// A grid in model space, padded per its [`PadSpec`].
#[derive(Debug, Clone, PartialEq)]
pub struct ModelGrid {
    pub values: Array2<f64>,
    pub pad: PadSpec,
}

impl ModelGrid {
    pub fn new(values: Array2<f64>, pad: PadSpec) -> Result<Self> {
        if values.dim() != pad.model_shape() {
            return Err(Error::invalid(format!(
                "model grid shape {:?} does not match pad spec {:?}",
                values.dim(),
                pad.model_shape()
            )));
        }
        Ok(Self { values, pad })
    }

    pub fn zeros(pad: PadSpec) -> Self {
        Self {
            values: Array2::zeros(pad.model_shape()),
            pad,
        }
    }

    pub fn shape(&self) -> (usize, usize) {
        self.values.dim()
    }

    /// Data region only.
    pub fn data(&self) -> Array2<f64> {
        self.values
            .slice(s![..self.pad.weeks, ..self.pad.locations])
            .to_owned()
    }
}

pub fn encode_frame(frame: &SeasonFrame, t: &IntensityTransform, pad: &PadSpec) -> Result<ModelGrid> {
    t.require_fitted()?;
    let encoded = frame.values().mapv(|x| t.encode_value(x));
    Ok(ModelGrid {
        values: pad.pad(&encoded)?,
        pad: *pad,
    })
}

/// Decode a model grid back into an incidence frame. `template` supplies the
/// location axis and metadata.
pub fn decode_grid(
    grid: &ModelGrid,
    t: &IntensityTransform,
    id: impl Into<String>,
    locations: &[String],
    source: SourceTag,
) -> Result<SeasonFrame> {
    t.require_fitted()?;
    let data = grid.pad.strip(&grid.values)?;
    if let Some(bad) = data.iter().find(|v| !v.is_finite()) {
        return Err(Error::numeric(format!("cannot decode non-finite model value {bad}")));
    }
    SeasonFrame::new(id, data.mapv(|y| t.decode_value(y)), locations.to_vec(), source)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn frame_with(values: Array2<f64>) -> SeasonFrame {
        let locs = (0..values.ncols()).map(|i| format!("L{i:02}")).collect();
        SeasonFrame::new("f", values, locs, SourceTag::Modeled).unwrap()
    }

    #[test]
    fn linear_endpoints() {
        let f = frame_with(Array2::from_elem((4, 3), 100.0));
        let t = IntensityTransform::fit(&[f], TransformKind::Linear).unwrap();
        assert_eq!(t.encode_value(100.0), 2.0);
        assert_eq!(t.encode_value(0.0), 0.0);
    }

    #[test]
    fn sqrt_matches_scalar_evaluation() {
        let mut v = Array2::zeros((4, 3));
        v[[2, 1]] = 100.0;
        let t = IntensityTransform::fit(&[frame_with(v)], TransformKind::Sqrt).unwrap();
        let brute = 2.0 * 25f64.sqrt() / 100f64.sqrt();
        assert!((t.encode_value(25.0) - brute).abs() < 1e-15);
        assert!((t.encode_value(25.0) - 1.0).abs() < 1e-15);
    }

    #[test]
    fn fit_errors() {
        assert!(IntensityTransform::fit(&[], TransformKind::Linear).is_err());
        let zeros = frame_with(Array2::zeros((2, 2)));
        assert!(IntensityTransform::fit(&[zeros], TransformKind::Linear).is_err());
    }

    #[test]
    fn unfitted_transform_rejected() {
        let f = frame_with(Array2::ones((4, 3)));
        let pad = PadSpec::for_shape(4, 3, 4).unwrap();
        let t = IntensityTransform::unfitted(TransformKind::Sqrt);
        assert!(encode_frame(&f, &t, &pad).is_err());
        assert!(decode_grid(&ModelGrid::zeros(pad), &t, "x", f.locations(), SourceTag::Modeled).is_err());
    }

    #[test]
    fn zero_frame_and_max_frame() {
        let pad = PadSpec::for_shape(52, 51, DEFAULT_PAD_MULTIPLE).unwrap();
        assert_eq!(pad.model_shape(), (64, 64));
        let zero = frame_with(Array2::zeros((52, 51)));
        let full = frame_with(Array2::from_elem((52, 51), 300.0));
        for kind in [TransformKind::Linear, TransformKind::Sqrt] {
            let t = IntensityTransform::fit(&[zero.clone(), full.clone()], kind).unwrap();
            let g = encode_frame(&zero, &t, &pad).unwrap();
            assert!(g.values.iter().all(|&v| v == 0.0));
            let g = encode_frame(&full, &t, &pad).unwrap();
            assert!(g.data().iter().all(|&v| (v - 2.0).abs() < 1e-15));
            assert!(g.values.slice(s![52.., ..]).iter().all(|&v| v == 0.0));
            assert!(g.values.slice(s![.., 51..]).iter().all(|&v| v == 0.0));
        }
    }

    #[test]
    fn values_above_fit_are_not_clipped() {
        let t = IntensityTransform::with_data_max(TransformKind::Linear, 10.0).unwrap();
        assert_eq!(t.encode_value(20.0), 4.0);
    }

    #[test]
    fn negative_model_values_decode_to_zero() {
        let pad = PadSpec::for_shape(4, 3, 4).unwrap();
        let t = IntensityTransform::with_data_max(TransformKind::Sqrt, 50.0).unwrap();
        let mut g = ModelGrid::zeros(pad);
        g.values[[1, 1]] = -0.05;
        let locs: Vec<String> = vec!["A".into(), "B".into(), "C".into()];
        let f = decode_grid(&g, &t, "x", &locs, SourceTag::Modeled).unwrap();
        assert!(f.values().iter().all(|&v| v == 0.0));
    }

    proptest! {
        #[test]
        fn roundtrip_incidence(x in 0.0f64..1.0, max in 1.0f64..1e5, sqrt in any::<bool>()) {
            let kind = if sqrt { TransformKind::Sqrt } else { TransformKind::Linear };
            let t = IntensityTransform::with_data_max(kind, max).unwrap();
            let v = x * max;
            let back = t.decode_value(t.encode_value(v));
            prop_assert!((back - v).abs() / v.max(1.0) < 1e-9);
        }

        #[test]
        fn roundtrip_model_space(y in 0.0f64..2.0, max in 1.0f64..1e5, sqrt in any::<bool>()) {
            let kind = if sqrt { TransformKind::Sqrt } else { TransformKind::Linear };
            let t = IntensityTransform::with_data_max(kind, max).unwrap();
            prop_assert!((t.encode_value(t.decode_value(y)) - y).abs() < 1e-9);
        }

        #[test]
        fn encode_strictly_increasing(a in 0.0f64..1.0, b in 0.0f64..1.0, sqrt in any::<bool>()) {
            prop_assume!(a != b);
            let kind = if sqrt { TransformKind::Sqrt } else { TransformKind::Linear };
            let t = IntensityTransform::with_data_max(kind, 1000.0).unwrap();
            let (lo, hi) = if a < b { (a, b) } else { (b, a) };
            prop_assert!(t.encode_value(lo * 1000.0) < t.encode_value(hi * 1000.0));
        }

        #[test]
        fn pad_strip_identity(w in 1usize..40, l in 1usize..40, m in 1usize..17, seed in any::<u64>()) {
            let pad = PadSpec::for_shape(w, l, m).unwrap();
            prop_assert_eq!(pad.padded_weeks % m, 0);
            let grid = Array2::from_shape_fn((w, l), |(i, j)| ((i * 31 + j * 7) as u64 ^ seed) as f64);
            prop_assert_eq!(pad.strip(&pad.pad(&grid).unwrap()).unwrap(), grid);
        }
    }
}
