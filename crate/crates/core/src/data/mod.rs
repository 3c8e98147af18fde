//! Recording ingestion, alignment, windowing, augmentation and splitting.

pub mod augment;
pub mod can;
pub mod frames;
pub mod manifest;
pub mod pipeline;
pub mod split;
pub mod stats;
pub mod store;
pub mod synth;

pub use augment::{augment_flip, filter_low_speed, flip_sample};
pub use can::{interpolate_at, parse_can_log, resample_can};
pub use manifest::{discover_manifests, RecordingManifest};
pub use pipeline::{build_samples, BuildDiagnostics, PipelineConfig};
pub use split::{split_dataset, split_indices, SplitPolicy};
pub use stats::{dataset_stats, Histogram, HistogramReport};
pub use store::SampleStore;
pub use synth::{generate_synthetic_recording, sample_imbalanced_steering, Scenario};
