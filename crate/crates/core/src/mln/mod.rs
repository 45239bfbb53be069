//! Homogeneous multilayer-network analysis over counties.
//!
//! A layer links counties whose percentage change of a feature between two
//! periods falls in the same severity [`Band`]; Louvain then recovers the
//! groups of similarly affected counties, which are labelled by band and
//! enriched with census data.

mod allocation;
mod analysis;
mod band;
mod layer;
mod louvain;

use std::path::PathBuf;

use thiserror::Error;

pub use allocation::{categorize, make_allocation, AllocationRow, CommunityAllocation, ALLOCATION_HEADER};
pub use analysis::{
    county_changes, run_analysis, run_analysis_files, AnalysisConfig, AnalysisInputs,
    AnalysisOutput, Expression, COMMUNITIES_EXPRESSION, SUPPORTED_FEATURES,
};
pub use band::{assign_band, percent_change, Band};
pub use layer::{build_layer, InterlayerLinks, Mln, MlnLayer};
pub use louvain::{louvain, louvain_with_observer, modularity, LevelStats, Partition, EPSILON};

#[derive(Debug, Error)]
pub enum MlnError {
    #[error("percentage change {0} is outside [-100, +inf]")]
    PercentOutOfRange(f64),
    #[error("unknown band {0:?}")]
    UnknownBand(String),
    #[error(transparent)]
    Period(#[from] crate::period::PeriodError),
    #[error("layer has no nodes")]
    EmptyLayer,
    #[error("modularity is undefined for a layer without edges")]
    NoEdges,
    #[error("partition covers {got} nodes, layer has {expected}")]
    PartitionSize { expected: usize, got: usize },
    #[error("unknown node {0}")]
    UnknownNode(String),
    #[error("self-loop on {0}")]
    SelfLoop(String),
    #[error("parallel edge {0}-{1}")]
    ParallelEdge(String, String),
    #[error("node {0} is not a county FIPS code")]
    NotACounty(String),
    #[error("interlayer links refer to missing layer {0}")]
    UnknownLayer(usize),
    #[error("no census record for {0}")]
    MissingCensus(String),
    #[error("unsupported analysis expression {0:?}")]
    Expression(String),
    #[error("unsupported feature {0:?}")]
    UnknownFeature(String),
    #[error(transparent)]
    Ingest(#[from] crate::ingestion::IngestError),
    #[error("{0}: {1}")]
    Format(PathBuf, String),
    #[error("{0}: {1}")]
    Io(PathBuf, std::io::Error),
}

pub type Result<T, E = MlnError> = std::result::Result<T, E>;
