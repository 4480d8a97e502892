//! From a partly observed season to hub-format quantile forecasts.

pub mod hub;
mod job;
mod quantiles;

pub use hub::{export_hub_csv, read_hub_csv, target_end_date, HubForecast, DEFAULT_TARGET};
pub use job::{run_forecast, ForecastEnsemble, ForecastJob};
pub use quantiles::{
    ensemble_to_quantiles, sample_quantiles, QuantileCell, QuantileForecast, MEDIAN_INDEX,
    QUANTILE_LEVELS,
};
