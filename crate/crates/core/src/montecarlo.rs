//! Monte-Carlo drops of the single-cell and multi-cell systems.
//!
//! Drop `i` draws from `numerics::substream(seed, i)`, so results depend on
//! the seed only, not on the thread count.

use rand::Rng;
use rayon::prelude::*;
use thiserror::Error;

use crate::channel::{CellScenario, ChannelError, SharedFading, UserLocation};
use crate::multicell::SchedulerDensity;
use crate::numerics;
use crate::scheduler::SchedulerSpec;

#[derive(Debug, Error)]
pub enum SimError {
    #[error(transparent)]
    Channel(#[from] ChannelError),
    #[error("invalid simulation setup: {0}")]
    InvalidConfig(String),
}

pub type Result<T> = std::result::Result<T, SimError>;

/// How the single-cell user population is drawn.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Placement {
    /// `N` users iid area-uniform over the disk.
    Iid,
    /// The disk split into rings log-spaced in area fraction, each holding
    /// its expected (real-valued) share of the `N` users. The best gain in a
    /// ring is drawn from `F_A^w` and placed area-uniformly in the ring.
    /// Greedy only.
    RingPopulation { rings: usize },
}

impl Placement {
    pub const DEFAULT_RINGS: usize = 400;
    /// Inner area fraction of the first log-spaced ring.
    pub const INNER_FRACTION: f64 = 1e-9;

    pub fn ring_population() -> Self {
        Self::RingPopulation {
            rings: Self::DEFAULT_RINGS,
        }
    }
}

#[derive(Debug, Clone)]
pub struct SimConfig {
    pub seed: u64,
    pub num_drops: usize,
    pub scenario: CellScenario,
    pub fading: SharedFading,
    pub scheduler: SchedulerSpec,
    pub placement: Placement,
}

/// Rate (nats) and distance of the served user in each drop.
#[derive(Debug, Clone, PartialEq)]
pub struct SingleCellSamples {
    pub rates: Vec<f64>,
    pub distances: Vec<f64>,
}

fn ring_edges(rings: usize) -> Vec<f64> {
    let mut edges = vec![0.0];
    edges.extend(numerics::logspace(Placement::INNER_FRACTION, 1.0, rings));
    edges
}

/// Simulates an isolated cell: per drop, `N` users, one scheduled.
pub fn simulate_single_cell(cfg: &SimConfig) -> Result<SingleCellSamples> {
    let scenario = &cfg.scenario;
    if scenario.noise_power() <= 0.0 {
        return Err(SimError::InvalidConfig(
            "single-cell simulation needs positive noise".into(),
        ));
    }
    let rings = match (cfg.placement, cfg.scheduler) {
        (Placement::Iid, SchedulerSpec::TruncatedGaussian { .. }) => {
            return Err(SimError::InvalidConfig(
                "truncated-Gaussian selection is simulated with simulate_multi_cell".into(),
            ))
        }
        (Placement::Iid, _) => None,
        (Placement::RingPopulation { rings }, SchedulerSpec::Greedy) if rings >= 1 => {
            Some(ring_edges(rings))
        }
        (Placement::RingPopulation { .. }, _) => {
            return Err(SimError::InvalidConfig(
                "ring-population placement needs greedy selection and at least one ring".into(),
            ))
        }
    };
    let radius = scenario.radius();
    let users = scenario.num_users();
    let serving = scenario.serving();
    let noise = scenario.noise_power();
    let fading = cfg.fading.as_ref();
    let fading_mean = fading.mean();
    let snr = |d: f64, a: f64| serving.gain_at(d) * a / noise;

    let drops: Vec<(f64, f64)> = (0..cfg.num_drops as u64)
        .into_par_iter()
        .map(|i| {
            let mut rng = numerics::substream(cfg.seed, i);
            let (d, s) = match (&rings, cfg.scheduler) {
                (Some(edges), _) => {
                    let mut best = (0.0, f64::NEG_INFINITY);
                    for w in edges.windows(2) {
                        let count = users as f64 * (w[1] - w[0]);
                        let a = fading.sample_max(count, rng.random::<f64>());
                        let x = w[0] + (1.0 - rng.random::<f64>()) * (w[1] - w[0]);
                        let d = radius * x.sqrt();
                        let s = snr(d, a);
                        if s > best.1 {
                            best = (d, s);
                        }
                    }
                    best
                }
                (None, SchedulerSpec::RoundRobin) => {
                    // Every user is equally likely; draw only the chosen one.
                    let _chosen = rng.random_range(0..users);
                    let d = radius * (1.0 - rng.random::<f64>()).sqrt();
                    (d, snr(d, fading.sample(&mut rng)))
                }
                (None, SchedulerSpec::Greedy) => {
                    let mut best = (0.0, f64::NEG_INFINITY);
                    for _ in 0..users {
                        let d = radius * (1.0 - rng.random::<f64>()).sqrt();
                        let s = snr(d, fading.sample(&mut rng));
                        if s > best.1 {
                            best = (d, s);
                        }
                    }
                    best
                }
                (None, _) => {
                    // Proportional fair: largest fading gain relative to its mean.
                    let mut best = (0.0, f64::NEG_INFINITY, 0.0);
                    for _ in 0..users {
                        let d = radius * (1.0 - rng.random::<f64>()).sqrt();
                        let a = fading.sample(&mut rng);
                        if a / fading_mean > best.1 {
                            best = (d, a / fading_mean, a);
                        }
                    }
                    (best.0, snr(best.0, best.2))
                }
            };
            (d, s.ln_1p())
        })
        .collect();
    let (distances, rates) = drops.into_iter().unzip();
    Ok(SingleCellSamples { rates, distances })
}

/// Where the scheduled user sits in a multi-cell drop.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum LocationMode {
    Fixed(UserLocation),
    /// Distance from the radial selection density, angle uniform.
    Density(SchedulerDensity),
}

#[derive(Debug, Clone)]
pub struct MultiCellConfig {
    pub seed: u64,
    pub num_drops: usize,
    pub scenario: CellScenario,
    pub fading: SharedFading,
    pub location: LocationMode,
    /// Receiver noise power; zero for the interference-limited case.
    pub noise_power: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MultiCellSamples {
    pub sinr: Vec<f64>,
    /// Total received interference power in W.
    pub interference: Vec<f64>,
    /// `ln(1 + SINR)` in nats.
    pub rates: Vec<f64>,
    pub distances: Vec<f64>,
}

/// Simulates the central cell with six fading interferers.
pub fn simulate_multi_cell(cfg: &MultiCellConfig) -> Result<MultiCellSamples> {
    let scenario = &cfg.scenario;
    if !(cfg.noise_power >= 0.0 && cfg.noise_power.is_finite()) {
        return Err(SimError::InvalidConfig(
            "noise power must be nonnegative".into(),
        ));
    }
    if let LocationMode::Fixed(loc) = cfg.location {
        scenario.check_location(&loc)?;
    }
    let fading = cfg.fading.as_ref();
    let drops: Vec<[f64; 4]> = (0..cfg.num_drops as u64)
        .into_par_iter()
        .map(|i| {
            let mut rng = numerics::substream(cfg.seed, i);
            let loc = match cfg.location {
                LocationMode::Fixed(loc) => loc,
                LocationMode::Density(d) => {
                    let delta = d.quantile(rng.random::<f64>());
                    let theta = std::f64::consts::TAU * rng.random::<f64>();
                    UserLocation::polar(delta, theta)
                }
            };
            let signal = scenario.serving().gain_at(loc.distance()) * fading.sample(&mut rng);
            let interference: f64 = scenario
                .interferers()
                .iter()
                .map(|itf| itf.params.gain_at(itf.distance_to(&loc)) * fading.sample(&mut rng))
                .sum();
            let sinr = signal / (cfg.noise_power + interference);
            [sinr, interference, sinr.ln_1p(), loc.distance()]
        })
        .collect();
    let column = |k: usize| drops.iter().map(|d| d[k]).collect::<Vec<_>>();
    Ok(MultiCellSamples {
        sinr: column(0),
        interference: column(1),
        rates: column(2),
        distances: column(3),
    })
}
