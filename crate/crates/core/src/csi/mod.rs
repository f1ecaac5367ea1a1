//! Channel realizations, angle-delay preprocessing, and the NMSE metric.

mod dataset;
mod generator;
mod metrics;
mod transform;

pub use dataset::{
    dataset_load, dataset_save, decode_dataset, encode_dataset, generate_dataset, magnitude_reciprocity, CsiDataset,
    ReciprocitySummary,
};
pub use generator::{generate_channel_pair, pearson, ChannelModelConfig, CsiSamplePair};
pub(crate) use metrics::ratio_to_db;
pub use metrics::{nmse_db, nmse_db_with_floor, DEFAULT_NMSE_FLOOR_DB};
pub use transform::{from_angle_delay, to_angle_delay, AngleDelayCsi, SpatialFrequencyCsi};
