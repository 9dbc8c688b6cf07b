//! Augmentation policy optimization driven by language-model feedback.
//!
//! The crate is organized around the data flow of a run:
//!
//! * [`policy`] defines the closed operation catalog, the policy type and its
//!   canonical JSON form, and parses policies emitted by a model.
//! * [`transforms`] holds the pixel kernels and the per-sample random streams.
//! * [`baselines`] implements TrivialAugment, RandAugment and AugMix over the
//!   same catalog.
//! * [`gateway`] builds prompts, talks to a provider and repairs bad replies.
//! * [`trainer`] defines the trainer contract and a small reference trainer.
//! * [`bridge`] speaks the line-delimited JSON protocol to external trainers.
//! * [`orchestrator`] runs the retrain-per-iteration and in-training loops,
//!   writes the run ledger and replays it.
//! * [`config`] and [`report`] back the command line front end.

pub mod baselines;
pub mod bridge;
pub mod config;
pub mod gateway;
pub mod orchestrator;
pub mod policy;
pub mod report;
pub mod trainer;
pub mod transforms;

/// Version of this library, stamped into every ledger header.
pub const ARTIFACT_VERSION: &str = env!("CARGO_PKG_VERSION");
