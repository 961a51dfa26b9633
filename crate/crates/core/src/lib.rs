//! Downlink rate distributions for a single cell and for the central cell
//! of a hexagonal layout with one tier of interferers.

pub mod channel;
pub mod cli;
pub mod montecarlo;
pub mod multicell;
pub mod numerics;
pub mod scheduler;
pub mod singlecell;

pub use channel::{
    CellScenario, FadingModel, NakagamiPowerFading, PathlossParams, RayleighPowerFading,
    SharedFading, UserLocation,
};
pub use scheduler::SchedulerSpec;
pub use singlecell::SingleCellAnalysis;
