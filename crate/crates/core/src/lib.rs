pub mod cli;
pub mod dataset;
pub mod diffusion;
pub mod encoding;
pub mod error;
pub mod evaluation;
pub mod forecast;
pub mod inpaint;
pub mod plot;
pub mod stats;
pub mod toy;
pub mod unet;

pub use error::{Error, Result};
