//! Synthesis of long-term, image-sharing dialogue episodes.
//!
//! An episode is built in stages: demographics and a face, persona
//! attributes, a narrative, phone images, a temporal event graph, one
//! dialogue session per event, and finally image alignment and filtering.
//! Every stage talks to models through [`gateway::Gateway`], which can be
//! backed by a live endpoint or by the offline [`gateway::MockChatBackend`].

pub mod aligner;
pub mod artifacts;
pub mod config;
pub mod device;
pub mod dialogue;
pub mod event_graph;
pub mod extract;
pub mod filter;
pub mod gateway;
pub mod lexicon;
pub mod metrics;
pub mod pipeline;
pub mod profile;
pub mod prompts;
pub mod retrieval;
pub mod seed;
pub mod stats;
pub mod store;
pub mod sync;

pub use event_graph::{EventGraph, GraphRules};
pub use gateway::{Gateway, MockChatBackend, StepId};

