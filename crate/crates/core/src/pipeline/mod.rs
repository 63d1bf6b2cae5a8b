//! Configuration and resumable stages of the end-to-end run.

pub mod config;
pub mod stages;

pub use config::{
    validate_config, IngestParams, Paths, PipelineConfig, ReplayParams, SimilarityParams,
    SynthParams, TrainParams, CONFIG_VERSION,
};
pub use stages::{
    effective_threads, exit_code, fit_cutoff, load_event_set, load_stream, models_present,
    run_cluster, run_detect, run_pipeline, run_replay, run_report, run_stage, run_synth, run_train,
    thread_pool, DetectSummary, DetectorScalar, EventSet, Layout, LoadedStream, PipelineRun,
    ReplayEntry, Stage, SynthSummary, TrainSummary, EXIT_CONFIG,
};
