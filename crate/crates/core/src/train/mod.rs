pub mod adam;
pub mod checkpoint;
pub mod dataset;
pub mod metrics;
pub mod trainer;

pub use adam::{adam_step, AdamState};
pub use checkpoint::{from_bytes, load_checkpoint, save_checkpoint, to_bytes, CheckpointHeader};
pub use dataset::{decode_ppm, encode_ppm, load_dataset, synthetic_dataset, Dataset, RgbImage, Split};
pub use metrics::{mse_loss, pixel_mse, psnr, psnr_from_mse, psnr_per_item, PSNR_CAP_DB};
pub use trainer::{
    evaluate_sweep, smoothed_endpoints, sweep_to_csv, train, StepRecord, SweepRow, TrainConfig, TrainReport,
    SWEEP_CSV_HEADER,
};
