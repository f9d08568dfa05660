//! Dialogue-based information extraction for insurance assessment.
//!
//! The pipeline runs on replayed transcripts: every assessor utterance is
//! routed to a report topic, keywords are tagged and linked to a knowledge
//! base, and a small dialogue state tracker holds keywords mentioned in
//! questions until the claimant confirms or negates them. Confirmed keywords
//! feed a keyword display and top-5 report-filling suggestions.

pub mod bundle;
pub mod config;
pub mod corpus;
pub mod error;
pub mod evalkit;
pub mod extraction;
pub mod filtering;
pub mod linking;
pub mod neural;
pub mod recommend;
pub mod segmentation;
pub mod selfcheck;
pub mod service;
pub mod tracker;

pub use error::{Error, Result};

/// Header line carried by every versioned data file.
pub const FORMAT_HEADER: &str = "#claimlens-v1";
