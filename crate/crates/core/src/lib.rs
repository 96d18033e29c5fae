//! Multimodal misinformation detection pipeline.
//!
//! A post (claim text plus images) flows through evidence retrieval
//! ([`retrieval`]), evidence cleaning ([`postprocess`]) and LLM reasoning
//! ([`reasoning`]) to a [`domain::Verdict`]. [`evaluation`] runs that over a
//! labelled dataset and computes accuracy metrics; [`curation`] holds the
//! dataset-construction algorithms (topic quotas, optimal-transport
//! selection, flag-based type annotation).
//!
//! External services sit behind [`backends`], which can record responses
//! and replay them offline.

pub mod backends;
pub mod curation;
pub mod domain;
pub mod evaluation;
pub mod pipeline;
pub mod postprocess;
pub mod reasoning;
pub mod retrieval;

#[cfg(feature = "testkit")]
pub mod testkit;
