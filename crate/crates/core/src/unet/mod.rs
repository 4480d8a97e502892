//! Noise-prediction U-Net: multi-scale encoder/decoder with residual or
//! ConvNeXt blocks, group normalisation, self-attention and sinusoidal
//! timestep embeddings.

mod config;
mod embed;
mod im2col;
mod layers;
mod model;
mod params;

pub use config::{BlockKind, UNetConfig, VARIANTS};
pub use embed::sinusoidal_embed;
pub use model::UNet;
pub use params::ParamStore;
