use std::fmt;

/// User-selection policy of the serving base station.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum SchedulerSpec {
    RoundRobin,
    Greedy,
    ProportionalFair,
    /// Parametric radial selection density with spread `sigma` in meters.
    TruncatedGaussian {
        sigma: f64,
    },
}

impl SchedulerSpec {
    /// Short lowercase label used in CSV headers.
    pub fn label(&self) -> String {
        match self {
            Self::RoundRobin => "rr".into(),
            Self::Greedy => "greedy".into(),
            Self::ProportionalFair => "pf".into(),
            Self::TruncatedGaussian { sigma } => format!("tg{sigma}"),
        }
    }
}

impl fmt::Display for SchedulerSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::RoundRobin => write!(f, "round-robin"),
            Self::Greedy => write!(f, "greedy"),
            Self::ProportionalFair => write!(f, "proportional-fair"),
            Self::TruncatedGaussian { sigma } => write!(f, "truncated-gaussian(sigma={sigma})"),
        }
    }
}
