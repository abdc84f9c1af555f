pub mod analyzers;
pub mod backend;
pub mod cli;
pub mod config;
pub mod datasets;
pub mod extraction;
pub mod metrics;
pub mod orchestrator;
pub mod prompts;
pub mod report;
pub mod sandbox;
pub mod templating;
