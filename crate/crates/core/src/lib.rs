//! Source localization for susceptible-infected spreading on multiplex
//! networks.
//!
//! The pipeline is: generate a [`graph::MultiplexGraph`], run
//! [`spread::simulate`] from a source replica, read the observers' reports
//! into an [`observation::DelayVector`], and score every replica with
//! [`locator::rank_sources`]. [`metrics`] turns rankings into average
//! precision and credible set sizes, and [`harness`] runs whole parameter
//! sweeps reproducibly.

pub mod cli;
pub mod error;
pub mod graph;
pub mod harness;
pub mod locator;
pub mod metrics;
pub mod observation;
pub mod spread;

pub use error::{Error, Result};
pub use graph::{
    couple_multiplex, generate_ba_layer, generate_er_layer, EdgeClass, GraphGenSpec, GraphModel,
    LayerGraph, MultiplexGraph, ReplicaId,
};
pub use locator::{rank_sources, CandidateScore, SourceRanking};
pub use metrics::{css, precision_single, source_rank, summarize, MetricsSummary, TestOutcome};
pub use observation::{build_delay_vector, place_observers, DelayVector, ObserverSet};
pub use spread::{delay_moments, simulate, DelayMoments, InfectionRecord, SpreadParams};
