//! Closed-loop episodes and the learning campaign: configuration, the RL1
//! loop against the true plant, and the files a run leaves behind.

mod campaign;
mod closed_loop;
mod config;
mod output;

pub use campaign::{BoundRow, Campaign, CampaignOutcome, CampaignReport, EpisodeOutcome, EpisodeSummary, OptimalityReport, RunOptions};
pub use closed_loop::{ClosedLoop, LogRow, SimLog};
pub use config::{CampaignConfig, EpisodeSpec, GpConfig, L1Config, PlannerConfig, SimConfig, TrajoptConfig};
pub use output::{emit_outputs, tube_polylines, write_bounds_table, write_tubes_table};
