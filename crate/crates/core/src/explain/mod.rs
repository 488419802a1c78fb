//! Shapley attribution of forecasts.
//!
//! Cluster-level games explain a cluster's predicted inflow by its
//! neighboring clusters; cell-level games explain a cell's prediction by the
//! individual trajectories that shaped its input window.

mod games;
mod masker;
mod shapley;
mod summary;

pub use games::{
    cluster_game, grid_game, ClusterGame, ExplainContext, FlowKind, GridCandidate, GridGame,
    DEFAULT_CANDIDATE_CAP,
};
pub use masker::{HistoricalMeanMasker, Masker, ZeroMasker};
pub use shapley::{
    mask_of, shapley_auto, shapley_exact, shapley_mc, Attribution, CoalitionGame, CountingGame,
    Method, TableGame, EXACT_MAX_PLAYERS,
};
pub use summary::{
    glyph_summaries, sector_of, sector_summary, time_channel_report, trajectory_attributions,
    GlyphSummary, SectorMagnitude, TimeChannel, TimeChannelReport, TrajectoryAttribution,
    DEFAULT_HIGHLIGHTED_HORIZON, GLYPH_POINTS, SECTOR_NAMES, TIME_CHANNELS, TOP_TRAJECTORIES,
};

/// Player counts up to this are attributed exactly; larger games are sampled.
pub const EXACT_PLAYER_LIMIT: usize = 12;

/// Default permutation count for sampled attributions.
pub const DEFAULT_MC_PERMUTATIONS: usize = 200;
