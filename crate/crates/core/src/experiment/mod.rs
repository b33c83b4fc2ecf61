//! Experiment manifests, the result store and the pipeline driver.

mod manifest;
mod pipeline;
mod store;

pub use manifest::{ClipSource, CodecEntry, JndSpec, LadderSpec, Manifest, SyntheticSource, DIRECT, WORKERS_ENV};
pub use pipeline::{
    build_store_curves, embed_clip_markers, report_store, run_experiment, AlignmentEntry, ChannelReport, CurveEntry,
    QualityEntry, ReportOptions, RunMode, RunSummary, TupleFailure,
};
pub use store::{RecordKind, Store, StoreRecord};
