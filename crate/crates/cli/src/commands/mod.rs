pub mod annotate;
pub mod features;
pub mod models;
pub mod pipeline;
pub mod stats;

use crate::config::Settings;

/// What every subcommand receives.
pub struct Ctx {
    pub settings: Settings,
    /// Root seed; stages derive their own with `stage_seed`.
    pub seed: u64,
    pub pool: rayon::ThreadPool,
}
