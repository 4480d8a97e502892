//! Seasons as fixed-shape grids: frames, intensity transforms, padding and
//! observation masks.

mod frame;
pub mod io;
mod mask;
mod transform;

pub use frame::{check_consistent, us_locations, SeasonFrame, SourceTag, SEASON_WEEKS, US_LOCATIONS};
pub use mask::{alternate_locations, make_mask, MaskSpec, ObservationMask};
pub use transform::{
    decode_grid, encode_frame, IntensityTransform, ModelGrid, PadSpec, TransformKind,
    DEFAULT_PAD_MULTIPLE,
};
