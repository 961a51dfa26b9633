//! Intercell interference and per-location SINR/rate distributions for a
//! user in the central cell, plus cell-wide averages under a parametric
//! radial scheduler density.
//!
//! With exponential power fading the total interference from the six
//! first-tier base stations is hypoexponential:
//! `f_I(η) = Σⱼ (Cⱼ/Īⱼ) e^{−η/Īⱼ}` with `Cⱼ = Π_{l≠j} Īⱼ/(Īⱼ − Ī_l)`.
//! Other fading models go through a numerically convolved interference
//! density.

use std::f64::consts::PI;

use rayon::prelude::*;
use thiserror::Error;

use crate::channel::{
    CellScenario, ChannelError, FadingModel, SharedFading, UserLocation, NUM_INTERFERERS,
};
use crate::numerics::{self, NumericsError, QuadSpec, TabulatedPdf};
use crate::scheduler::SchedulerSpec;
use crate::singlecell::{SingleCellAnalysis, SingleCellError};

/// Relative separation below which two interference means are treated as
/// coincident.
pub const DEGENERACY_TOL: f64 = 1e-9;

/// Relative location perturbation applied when means coincide.
pub const LOCATION_PERTURBATION: f64 = 1e-6;

#[derive(Debug, Error)]
pub enum MultiCellError {
    #[error(transparent)]
    Numerics(#[from] NumericsError),
    #[error(transparent)]
    Channel(#[from] ChannelError),
    #[error(transparent)]
    SingleCell(#[from] SingleCellError),
    #[error("interference means {i} and {j} coincide within {DEGENERACY_TOL:e}")]
    NearDegenerateMeans { i: usize, j: usize },
    #[error("MGF argument {s:e} is at or beyond the pole at {limit:e}")]
    PoleCrossing { s: f64, limit: f64 },
    #[error("this operation needs exponential (Rayleigh) power fading")]
    UnsupportedFading,
    #[error("scheduler {0} is not supported here")]
    UnsupportedScheduler(SchedulerSpec),
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("cell average did not converge: {coarse} vs {fine} on the doubled grid")]
    AverageNotConverged { coarse: f64, fine: f64 },
}

pub type Result<T> = std::result::Result<T, MultiCellError>;

/// Partial-fraction coefficients of a hypoexponential density with the given
/// distinct means, by the residue product formula.
pub fn hypoexp_coefficients(means: &[f64]) -> Result<Vec<f64>> {
    check_distinct(means)?;
    Ok((0..means.len())
        .map(|j| {
            means
                .iter()
                .enumerate()
                .filter(|&(l, _)| l != j)
                .map(|(_, &m)| means[j] / (means[j] - m))
                .product()
        })
        .collect())
}

/// The same coefficients from the nested recursion
/// `C_{j,M} = Π_{l=j+1}^{M} V_{j,l} · Σ_{k=1}^{j−1} V_{j,k} C_{k,j−1}`,
/// `V_{j,l} = Īⱼ/(Īⱼ − Ī_l)`, with empty sums and products equal to 1.
/// Kept as an independent cross-check of [`hypoexp_coefficients`].
pub fn hypoexp_coefficients_recursive(means: &[f64]) -> Result<Vec<f64>> {
    check_distinct(means)?;
    let v = |j: usize, l: usize| means[j] / (means[j] - means[l]);
    // table[m][j] = C_{j+1, m+1} for j <= m (0-based).
    let n = means.len();
    let mut table: Vec<Vec<f64>> = Vec::with_capacity(n);
    for m in 0..n {
        let mut row = Vec::with_capacity(m + 1);
        for j in 0..=m {
            let prod: f64 = if j < m {
                (j + 1..=m).map(|l| v(j, l)).product()
            } else {
                1.0
            };
            let sum: f64 = if j > 0 {
                (0..j).map(|k| v(j, k) * table[j - 1][k]).sum()
            } else {
                1.0
            };
            row.push(prod * sum);
        }
        table.push(row);
    }
    Ok(table.pop().unwrap_or_default())
}

fn check_distinct(means: &[f64]) -> Result<()> {
    if means.is_empty() || means.iter().any(|m| !(*m > 0.0 && m.is_finite())) {
        return Err(MultiCellError::InvalidArgument(
            "interference means must be positive and finite".into(),
        ));
    }
    for i in 0..means.len() {
        for j in i + 1..means.len() {
            let sep = (means[i] - means[j]).abs() / means[i].max(means[j]);
            if sep <= DEGENERACY_TOL {
                return Err(MultiCellError::NearDegenerateMeans { i: i + 1, j: j + 1 });
            }
        }
    }
    Ok(())
}

/// Sum of independent exponentials with distinct means.
#[derive(Debug, Clone, PartialEq)]
pub struct HypoexponentialDensity {
    means: Vec<f64>,
    coefficients: Vec<f64>,
}

impl HypoexponentialDensity {
    pub fn new(means: &[f64]) -> Result<Self> {
        Ok(Self {
            coefficients: hypoexp_coefficients(means)?,
            means: means.to_vec(),
        })
    }

    pub fn means(&self) -> &[f64] {
        &self.means
    }

    pub fn coefficients(&self) -> &[f64] {
        &self.coefficients
    }

    pub fn pdf(&self, eta: f64) -> f64 {
        if eta < 0.0 {
            return 0.0;
        }
        self.means
            .iter()
            .zip(&self.coefficients)
            .map(|(m, c)| c / m * (-eta / m).exp())
            .sum()
    }

    pub fn cdf(&self, eta: f64) -> f64 {
        if eta <= 0.0 {
            return 0.0;
        }
        1.0 - self
            .means
            .iter()
            .zip(&self.coefficients)
            .map(|(m, c)| c * (-eta / m).exp())
            .sum::<f64>()
    }

    pub fn mean(&self) -> f64 {
        self.means.iter().sum()
    }
}

/// Mean received powers at one user location.
#[derive(Debug, Clone, PartialEq)]
pub struct InterferenceProfile {
    location: UserLocation,
    signal_scale: f64,
    signal_mean: f64,
    interferer_scales: [f64; NUM_INTERFERERS],
    mean_interference: [f64; NUM_INTERFERERS],
}

impl InterferenceProfile {
    /// Profile at `loc`; fails if `loc` is outside the cell.
    pub fn new(scenario: &CellScenario, fading_mean: f64, loc: UserLocation) -> Result<Self> {
        scenario.check_location(&loc)?;
        Ok(Self::unchecked(scenario, fading_mean, loc))
    }

    fn unchecked(scenario: &CellScenario, fading_mean: f64, loc: UserLocation) -> Self {
        let signal_scale = scenario.serving().gain_at(loc.distance());
        let interferer_scales = std::array::from_fn(|j| {
            let itf = &scenario.interferers()[j];
            itf.params.gain_at(itf.distance_to(&loc))
        });
        let mean_interference = interferer_scales.map(|s| s * fading_mean);
        Self {
            location: loc,
            signal_scale,
            signal_mean: signal_scale * fading_mean,
            interferer_scales,
            mean_interference,
        }
    }

    /// Profile at `loc`, rotated about the BS by [`LOCATION_PERTURBATION`]
    /// radians when two interference means coincide (symmetry axes of the
    /// hexagonal ring).
    pub fn at(scenario: &CellScenario, fading_mean: f64, loc: UserLocation) -> Result<Self> {
        let profile = Self::new(scenario, fading_mean, loc)?;
        if check_distinct(&profile.mean_interference).is_ok() {
            return Ok(profile);
        }
        let moved = UserLocation::polar(loc.distance(), loc.angle() + LOCATION_PERTURBATION);
        let profile = Self::new(scenario, fading_mean, moved)?;
        check_distinct(&profile.mean_interference)?;
        Ok(profile)
    }

    pub fn location(&self) -> UserLocation {
        self.location
    }

    /// `ξ·δ^{−α}` of the serving link (no fading).
    pub fn signal_scale(&self) -> f64 {
        self.signal_scale
    }

    /// Mean received signal power `Ī`.
    pub fn signal_mean(&self) -> f64 {
        self.signal_mean
    }

    /// `ξⱼ·δⱼ^{−αⱼ}` of each interfering link (no fading).
    pub fn interferer_scales(&self) -> &[f64; NUM_INTERFERERS] {
        &self.interferer_scales
    }

    /// Mean interference powers `Ī₁..Ī₆`.
    pub fn mean_interference(&self) -> &[f64; NUM_INTERFERERS] {
        &self.mean_interference
    }

    pub fn total_mean_interference(&self) -> f64 {
        self.mean_interference.iter().sum()
    }

    pub fn coefficients(&self) -> Result<Vec<f64>> {
        hypoexp_coefficients(&self.mean_interference)
    }

    pub fn hypoexponential(&self) -> Result<HypoexponentialDensity> {
        HypoexponentialDensity::new(&self.mean_interference)
    }
}

/// MGF of the total interference, `Πⱼ E[e^{s Iⱼ}]`.
pub fn interference_mgf(
    profile: &InterferenceProfile,
    fading: &dyn FadingModel,
    s: f64,
) -> Result<f64> {
    let max_mean = profile
        .mean_interference
        .iter()
        .copied()
        .fold(0.0, f64::max);
    let limit = 1.0 / max_mean;
    if fading.is_exponential() {
        if s >= limit {
            return Err(MultiCellError::PoleCrossing { s, limit });
        }
        return Ok(profile
            .mean_interference
            .iter()
            .map(|m| 1.0 / (1.0 - s * m))
            .product());
    }
    profile
        .interferer_scales
        .iter()
        .map(|scale| {
            fading
                .mgf(s * scale)
                .ok_or(MultiCellError::PoleCrossing { s, limit })
        })
        .product()
}

/// Density of the total interference at a location.
#[derive(Debug, Clone)]
pub enum InterferenceDensity {
    /// No interferers (isolated cell).
    Absent,
    Hypoexponential(HypoexponentialDensity),
    /// Numerical convolution on a uniform grid (any fading model).
    Tabulated(TabulatedPdf),
}

impl InterferenceDensity {
    /// Hypoexponential for exponential fading, grid convolution otherwise.
    pub fn for_profile(profile: &InterferenceProfile, fading: &dyn FadingModel) -> Result<Self> {
        if fading.is_exponential() {
            Ok(Self::Hypoexponential(profile.hypoexponential()?))
        } else {
            Ok(Self::Tabulated(convolved_interference_pdf(
                profile.interferer_scales(),
                fading,
                4001,
            )?))
        }
    }

    pub fn pdf(&self, eta: f64) -> f64 {
        match self {
            Self::Absent => 0.0,
            Self::Hypoexponential(h) => h.pdf(eta),
            Self::Tabulated(t) => t.density_at(eta),
        }
    }
}

/// Density of `Σⱼ scaleⱼ·Aⱼ` on a uniform grid of `points` nodes.
///
/// Each term is lumped into cell masses around the nodes (from its CDF) and
/// the lattice masses are convolved exactly, so total mass is kept up to the
/// truncation at `25·mean`.
pub fn convolved_interference_pdf(
    scales: &[f64],
    fading: &dyn FadingModel,
    points: usize,
) -> Result<TabulatedPdf> {
    if scales.is_empty() || points < 3 {
        return Err(MultiCellError::InvalidArgument(
            "need at least one interferer and three grid points".into(),
        ));
    }
    let total_mean: f64 = scales.iter().sum::<f64>() * fading.mean();
    let upper = 25.0 * total_mean;
    let grid = numerics::linspace(0.0, upper, points);
    let step = grid[1] - grid[0];
    let last = points - 1;
    let masses = |scale: f64| -> Vec<f64> {
        let edge = |k: usize| fading.cdf((k as f64 + 0.5) * step / scale);
        let mut m: Vec<f64> = (0..points)
            .map(|k| {
                if k == 0 {
                    edge(0)
                } else {
                    edge(k) - edge(k - 1)
                }
            })
            .collect();
        m[last] = 1.0 - edge(last - 1);
        m
    };

    let mut acc = masses(scales[0]);
    for &scale in &scales[1..] {
        let f = masses(scale);
        acc = (0..points)
            .into_par_iter()
            .map(|k| (0..=k).map(|i| acc[i] * f[k - i]).sum::<f64>().max(0.0))
            .collect();
    }
    let values: Vec<f64> = acc
        .iter()
        .enumerate()
        .map(|(k, m)| {
            if k == 0 || k == last {
                2.0 * m / step
            } else {
                m / step
            }
        })
        .collect();
    Ok(TabulatedPdf::new(grid, values)?)
}

fn sinr_density_with(
    profile: &InterferenceProfile,
    fading: &dyn FadingModel,
    noise: f64,
    interference: &InterferenceDensity,
    gamma: f64,
    quad: &QuadSpec,
) -> Result<f64> {
    let s = profile.signal_scale;
    let kernel = |eta: f64| {
        let total = noise + eta;
        total / s * fading.pdf(total * gamma / s)
    };
    match interference {
        InterferenceDensity::Absent => {
            if noise <= 0.0 {
                return Err(MultiCellError::InvalidArgument(
                    "isolated SINR needs positive noise".into(),
                ));
            }
            Ok(kernel(0.0))
        }
        InterferenceDensity::Hypoexponential(h) => {
            let unit = h.mean();
            // Near-degenerate means make the pdf noisy at about eps·Σ|Cⱼ|/mⱼ;
            // tolerances are floored at that noise integrated against the kernel.
            let spread: f64 = h.coefficients().iter().map(|c| c.abs()).sum();
            let m_max = h.means().iter().copied().fold(0.0, f64::max);
            let m_min = h.means().iter().copied().fold(f64::INFINITY, f64::min);
            let envelope = numerics::integrate_semiinfinite(
                |x| {
                    let eta = x * m_max;
                    kernel(eta) * (-x).exp()
                },
                0.0,
                &QuadSpec::relative(1e-3),
            )?;
            let floor = 1e3 * f64::EPSILON * spread;
            let spec = QuadSpec {
                abs_tol: quad.abs_tol.max(floor * envelope * m_max / m_min),
                rel_tol: quad.rel_tol.max(floor),
                ..*quad
            };
            let v = numerics::integrate_semiinfinite(
                |x| {
                    let eta = x * unit;
                    kernel(eta) * h.pdf(eta) * unit
                },
                0.0,
                &spec,
            )?;
            Ok(v)
        }
        InterferenceDensity::Tabulated(t) => {
            let g = t.grid();
            let vals: Vec<f64> = g
                .iter()
                .zip(t.values())
                .map(|(&eta, &p)| kernel(eta) * p)
                .collect();
            let step = g[1] - g[0];
            let inner: f64 = vals[1..vals.len() - 1].iter().sum();
            Ok(step * (inner + 0.5 * (vals[0] + vals[vals.len() - 1])))
        }
    }
}

/// SINR density at one location on `gamma_grid`:
/// `f_Γ(γ) = ∫₀^∞ ((I_n+η)/(ξδ^{−α})) f_A((I_n+η)γ/(ξδ^{−α})) f_I(η) dη`.
pub fn sinr_pdf_at(
    profile: &InterferenceProfile,
    fading: &dyn FadingModel,
    noise: f64,
    interference: &InterferenceDensity,
    gamma_grid: &[f64],
) -> Result<TabulatedPdf> {
    let quad = QuadSpec::new(f64::MIN_POSITIVE, 1e-9, 4000)?;
    let values = gamma_grid
        .par_iter()
        .map(|&g| sinr_density_with(profile, fading, noise, interference, g, &quad))
        .collect::<Result<Vec<_>>>()?;
    Ok(TabulatedPdf::new(gamma_grid.to_vec(), values)?)
}

/// Rate density at one location, `f_R(r) = e^r f_Γ(e^r − 1)`, through the
/// SINR integral (any fading model).
pub fn rate_pdf_at(
    profile: &InterferenceProfile,
    fading: &dyn FadingModel,
    noise: f64,
    interference: &InterferenceDensity,
    rate_grid: &[f64],
) -> Result<TabulatedPdf> {
    let quad = QuadSpec::new(f64::MIN_POSITIVE, 1e-9, 4000)?;
    let values = rate_grid
        .par_iter()
        .map(|&r| {
            sinr_density_with(profile, fading, noise, interference, r.exp_m1(), &quad)
                .map(|f| r.exp() * f)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(TabulatedPdf::new(rate_grid.to_vec(), values)?)
}

/// Closed-form rate density at one location for exponential fading:
/// `e^r e^{−γ I_n/Ī} Σⱼ Cⱼ (cⱼ + dⱼ)`, `γ = e^r − 1`,
/// `cⱼ = I_n/(γĪⱼ + Ī)`, `dⱼ = Ī Īⱼ/(γĪⱼ + Ī)²`.
pub fn rate_density_rayleigh(
    profile: &InterferenceProfile,
    coefficients: &[f64],
    noise: f64,
    r: f64,
) -> f64 {
    let gamma = r.exp_m1();
    let sig = profile.signal_mean;
    let sum: f64 = profile
        .mean_interference
        .iter()
        .zip(coefficients)
        .map(|(&m, &c)| {
            let denom = gamma * m + sig;
            c * (noise / denom + sig * m / (denom * denom))
        })
        .sum();
    // The alternating sum loses absolute precision deep in the tail.
    (r.exp() * (-gamma * noise / sig).exp() * sum).max(0.0)
}

pub fn rate_pdf_at_rayleigh(
    profile: &InterferenceProfile,
    noise: f64,
    rate_grid: &[f64],
) -> Result<TabulatedPdf> {
    let coefficients = profile.coefficients()?;
    Ok(TabulatedPdf::from_fn(rate_grid.to_vec(), |r| {
        rate_density_rayleigh(profile, &coefficients, noise, r)
    })?)
}

/// First moment `∫ r f_R(r) dr` of [`rate_density_rayleigh`], by adaptive
/// quadrature with breakpoints around the SINR knee.
pub fn rate_pdf_mean_rayleigh(profile: &InterferenceProfile, noise: f64) -> Result<f64> {
    let c = profile.coefficients()?;
    let integrand = |r: f64| r * rate_density_rayleigh(profile, &c, noise, r);
    let floor = profile.total_mean_interference() + noise;
    let knee = (profile.signal_mean / floor).ln_1p();
    let upper = knee + 40.0;
    let breaks: Vec<f64> = [knee - 2.0, knee, knee + 2.0]
        .into_iter()
        .filter(|b| *b > 0.0)
        .collect();
    let quad = QuadSpec::new(1e-14, 1e-11, 4000)?;
    let body = numerics::integrate_with_breaks(integrand, 0.0, upper, &breaks, &quad)?;
    let tail = numerics::integrate_semiinfinite(integrand, upper, &quad)?;
    Ok(body + tail)
}

/// Interference-limited mean rate at one location for exponential fading:
/// `Σⱼ Cⱼ (Ī/(Ī − Īⱼ)) ln(Ī/Īⱼ)`.
pub fn avg_rate_interference_limited(profile: &InterferenceProfile) -> Result<f64> {
    let coefficients = profile.coefficients()?;
    let sig = profile.signal_mean;
    Ok(profile
        .mean_interference
        .iter()
        .zip(&coefficients)
        .map(|(&m, &c)| {
            // (Ī/(Ī−Īⱼ))·ln(1+x) = (Ī/Īⱼ)·ln(1+x)/x with x = (Ī−Īⱼ)/Īⱼ
            let x = (sig - m) / m;
            let ratio = if x.abs() < 1e-8 {
                1.0 - x / 2.0 + x * x / 3.0
            } else {
                x.ln_1p() / x
            };
            c * (sig / m) * ratio
        })
        .sum())
}

/// Mean rate at one location for exponential fading,
/// `∫₀^∞ P(R > y) dy` with
/// `P(R > y) = e^{−γ I_n/Ī} Πⱼ (1 + γĪⱼ/Ī)^{−1}`, `γ = e^y − 1`.
///
/// Equal to the first moment of [`rate_density_rayleigh`] but free of the
/// partial-fraction coefficients, so it stays accurate where interference
/// means nearly coincide. `interferer_means` may be empty.
pub fn location_average_rate_rayleigh(
    signal_mean: f64,
    interferer_means: &[f64],
    noise: f64,
) -> Result<f64> {
    let total: f64 = interferer_means.iter().sum();
    let floor = total + noise;
    if !(floor > 0.0) {
        return Err(MultiCellError::InvalidArgument(
            "need positive noise or interference".into(),
        ));
    }
    let ccdf = |y: f64| {
        let g = y.exp_m1();
        let prod: f64 = interferer_means
            .iter()
            .map(|m| 1.0 / (1.0 + g * m / signal_mean))
            .product();
        (-g * noise / signal_mean).exp() * prod
    };
    let knee = (signal_mean / floor).ln_1p();
    let upper = knee + 40.0;
    let breaks: Vec<f64> = [knee - 3.0, knee - 1.0, knee, knee + 1.0, knee + 3.0]
        .into_iter()
        .filter(|b| *b > 0.0)
        .collect();
    let quad = QuadSpec::new(1e-13, 1e-10, 2000)?;
    let body = numerics::integrate_with_breaks(ccdf, 0.0, upper, &breaks, &quad)?;
    let tail = numerics::integrate_semiinfinite(ccdf, upper, &quad)?;
    Ok(body + tail)
}

/// Mean rate `E[ln(1 + s·A)]` of an isolated link with mean-SNR scale `s`
/// (`Γ = s·A`), for any fading model.
pub fn isolated_link_rate(fading: &dyn FadingModel, snr_scale: f64) -> Result<f64> {
    let ccdf = |y: f64| 1.0 - fading.cdf(y.exp_m1() / snr_scale);
    let knee = (snr_scale * fading.mean()).ln_1p();
    let upper = knee + 60.0;
    let breaks: Vec<f64> = [knee - 3.0, knee - 1.0, knee, knee + 1.0, knee + 3.0]
        .into_iter()
        .filter(|b| *b > 0.0)
        .collect();
    let quad = QuadSpec::new(1e-13, 1e-10, 2000)?;
    let body = numerics::integrate_with_breaks(ccdf, 0.0, upper, &breaks, &quad)?;
    let tail = numerics::integrate_semiinfinite(ccdf, upper, &quad)?;
    Ok(body + tail)
}

/// Truncated-Gaussian radial selection density on `[d₀, ρ]`:
/// `(1/β)(δ/σ²) e^{−δ²/(2σ²)}`, `β = e^{−d₀²/(2σ²)} − e^{−ρ²/(2σ²)}`.
/// `σ = ∞` gives the area-uniform (round-robin) density.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SchedulerDensity {
    sigma: f64,
    radius: f64,
    min_distance: f64,
}

impl SchedulerDensity {
    pub fn new(sigma: f64, radius: f64, min_distance: f64) -> Result<Self> {
        if !(sigma > 0.0) || sigma.is_nan() {
            return Err(MultiCellError::InvalidArgument(
                "sigma must be positive".into(),
            ));
        }
        if !(min_distance >= 0.0 && radius > min_distance && radius.is_finite()) {
            return Err(MultiCellError::InvalidArgument(
                "need 0 <= min_distance < radius".into(),
            ));
        }
        Ok(Self {
            sigma,
            radius,
            min_distance,
        })
    }

    pub fn round_robin(radius: f64, min_distance: f64) -> Result<Self> {
        Self::new(f64::INFINITY, radius, min_distance)
    }

    pub fn for_scenario(sigma: f64, scenario: &CellScenario) -> Result<Self> {
        Self::new(sigma, scenario.radius(), scenario.user_min_distance())
    }

    pub fn sigma(&self) -> f64 {
        self.sigma
    }

    pub fn radius(&self) -> f64 {
        self.radius
    }

    pub fn min_distance(&self) -> f64 {
        self.min_distance
    }

    fn two_sigma2(&self) -> f64 {
        2.0 * self.sigma * self.sigma
    }

    /// `e^{−d₀²/(2σ²)} − e^{−ρ²/(2σ²)}`.
    pub fn beta(&self) -> f64 {
        if self.sigma.is_infinite() {
            return 0.0;
        }
        let d02 = self.min_distance * self.min_distance;
        let span = self.radius * self.radius - d02;
        (-d02 / self.two_sigma2()).exp() * -(-span / self.two_sigma2()).exp_m1()
    }

    fn span(&self) -> f64 {
        self.radius * self.radius - self.min_distance * self.min_distance
    }

    /// Normalizer with the `e^{−d₀²/(2σ²)}` factor removed.
    fn shifted_norm(&self) -> f64 {
        -(-self.span() / self.two_sigma2()).exp_m1()
    }

    pub fn pdf(&self, delta: f64) -> f64 {
        if delta < self.min_distance || delta > self.radius {
            return 0.0;
        }
        if self.sigma.is_infinite() {
            return 2.0 * delta / self.span();
        }
        let d02 = self.min_distance * self.min_distance;
        let shifted = (-(delta * delta - d02) / self.two_sigma2()).exp();
        2.0 * delta / self.two_sigma2() * shifted / self.shifted_norm()
    }

    pub fn cdf(&self, delta: f64) -> f64 {
        if delta <= self.min_distance {
            return 0.0;
        }
        if delta >= self.radius {
            return 1.0;
        }
        let d02 = self.min_distance * self.min_distance;
        let x = delta * delta - d02;
        if self.sigma.is_infinite() {
            return x / self.span();
        }
        -(-x / self.two_sigma2()).exp_m1() / self.shifted_norm()
    }

    pub fn quantile(&self, p: f64) -> f64 {
        let p = p.clamp(0.0, 1.0);
        let d02 = self.min_distance * self.min_distance;
        let x = if self.sigma.is_infinite() {
            p * self.span()
        } else {
            -self.two_sigma2() * (-p * self.shifted_norm()).ln_1p()
        };
        (d02 + x).sqrt().clamp(self.min_distance, self.radius)
    }

    /// `∫ f_D(δ) g(δ) dδ` by adaptive quadrature in probability space.
    pub fn expectation<G: Fn(f64) -> f64>(&self, g: G, quad: &QuadSpec) -> Result<f64> {
        Ok(numerics::integrate(
            |p| g(self.quantile(p)),
            0.0,
            1.0,
            quad,
        )?)
    }
}

/// Node counts of the fixed (δ, θ) product rule behind cell averages.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AverageGrid {
    /// Gauss-Legendre nodes in the scheduler's probability coordinate.
    pub radial: usize,
    /// Equispaced angles (periodic trapezoid rule).
    pub angular: usize,
    /// Relative agreement required between this grid and the doubled one.
    pub tolerance: f64,
}

impl Default for AverageGrid {
    fn default() -> Self {
        Self {
            radial: 64,
            angular: 32,
            tolerance: 1e-3,
        }
    }
}

fn average_on_grid(
    scenario: &CellScenario,
    fading_mean: f64,
    sched: &SchedulerDensity,
    noise: f64,
    radial: usize,
    angular: usize,
) -> Result<f64> {
    let (nodes, weights) = numerics::gauss_legendre(radial);
    let points: Vec<(f64, f64, f64)> = nodes
        .iter()
        .zip(&weights)
        .flat_map(|(&x, &w)| {
            let delta = sched.quantile(0.5 * (x + 1.0));
            (0..angular).map(move |k| {
                let theta = 2.0 * PI * (k as f64 + 0.5) / angular as f64;
                (delta, theta, 0.5 * w / angular as f64)
            })
        })
        .collect();
    let terms = points
        .par_iter()
        .map(|&(delta, theta, w)| {
            let p = InterferenceProfile::unchecked(
                scenario,
                fading_mean,
                UserLocation::polar(delta, theta),
            );
            location_average_rate_rayleigh(p.signal_mean, &p.mean_interference, noise)
                .map(|v| w * v)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(terms.iter().sum())
}

/// Cell-average rate with interference: the per-location mean rate averaged
/// over `δ ~ sched` and uniform angle. Requires exponential fading.
///
/// Evaluated on `grid` and on the doubled grid; the finer value is returned
/// when the two agree within `grid.tolerance`.
pub fn cell_average_rate(
    scenario: &CellScenario,
    fading: &dyn FadingModel,
    sched: &SchedulerDensity,
    noise: f64,
    grid: &AverageGrid,
) -> Result<f64> {
    if !fading.is_exponential() {
        return Err(MultiCellError::UnsupportedFading);
    }
    let m = fading.mean();
    let coarse = average_on_grid(scenario, m, sched, noise, grid.radial, grid.angular)?;
    let fine = average_on_grid(scenario, m, sched, noise, 2 * grid.radial, 2 * grid.angular)?;
    if (coarse - fine).abs() > grid.tolerance * fine.abs() {
        return Err(MultiCellError::AverageNotConverged { coarse, fine });
    }
    Ok(fine)
}

/// Cell-average rate with the interference removed (noise only), any fading.
pub fn isolated_cell_average_rate(
    scenario: &CellScenario,
    fading: &dyn FadingModel,
    sched: &SchedulerDensity,
    noise: f64,
) -> Result<f64> {
    if !(noise > 0.0) {
        return Err(MultiCellError::InvalidArgument(
            "isolated cell average needs positive noise".into(),
        ));
    }
    let quad = QuadSpec::new(1e-12, 1e-9, 2000)?;
    let serving = scenario.serving();
    let value = sched.expectation(
        |delta| isolated_link_rate(fading, serving.gain_at(delta) / noise).unwrap_or(f64::NAN),
        &quad,
    );
    match value {
        Err(MultiCellError::Numerics(NumericsError::NonFinite { x })) => {
            let delta = sched.quantile(x);
            isolated_link_rate(fading, serving.gain_at(delta) / noise)?;
            Err(NumericsError::NonFinite { x }.into())
        }
        other => other,
    }
}

/// Outcome of matching the scheduler density to a single-cell average rate.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Calibration {
    /// Calibrated spread in meters; `∞` when the target is at or below the
    /// round-robin average.
    pub sigma: f64,
    pub target_rate: f64,
    pub achieved_rate: f64,
    pub coverage_radius: f64,
    pub target_coverage: f64,
    /// Fraction of selections within `coverage_radius` at the calibrated σ.
    pub achieved_coverage: f64,
}

/// Smallest σ tried by [`calibrate_sigma`], in meters.
pub const SIGMA_FLOOR: f64 = 1.0;

/// Finds σ such that the noise-only cell average under the truncated
/// Gaussian density equals `target_rate`. The coverage target cannot be met
/// independently with one parameter; the achieved coverage is reported.
pub fn calibrate_sigma(
    target_rate: f64,
    target_coverage: (f64, f64),
    scenario: &CellScenario,
    fading: &dyn FadingModel,
) -> Result<Calibration> {
    let noise = scenario.noise_power();
    let average = |sigma: f64| -> Result<f64> {
        let d = SchedulerDensity::for_scenario(sigma, scenario)?;
        isolated_cell_average_rate(scenario, fading, &d, noise)
    };
    let finish = |sigma: f64, achieved: f64| -> Result<Calibration> {
        let d = SchedulerDensity::for_scenario(sigma, scenario)?;
        Ok(Calibration {
            sigma,
            target_rate,
            achieved_rate: achieved,
            coverage_radius: target_coverage.0,
            target_coverage: target_coverage.1,
            achieved_coverage: d.cdf(target_coverage.0),
        })
    };

    let upper = 10.0 * scenario.radius();
    let at_upper = average(upper)?;
    let at_infinity = average(f64::INFINITY)?;
    if target_rate <= at_infinity * (1.0 + 1e-9) {
        return finish(f64::INFINITY, at_infinity);
    }
    if target_rate <= at_upper {
        // Between 10ρ and ∞ the density is indistinguishable from uniform.
        return finish(upper, at_upper);
    }

    // Root-find in ln σ; record the first evaluation error, if any.
    let failure = std::cell::RefCell::new(None);
    let residual = |log_sigma: f64| match average(log_sigma.exp()) {
        Ok(v) => v - target_rate,
        Err(e) => {
            failure.borrow_mut().get_or_insert(e);
            f64::NAN
        }
    };
    let root = numerics::find_root(&residual, SIGMA_FLOOR.ln(), upper.ln(), 1e-10);
    if let Some(e) = failure.into_inner() {
        return Err(e);
    }
    let sigma = root?.exp();
    finish(sigma, average(sigma)?)
}

/// Base-station power as a function of the cell radius.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum PowerMode {
    Fixed,
    /// `P(ρ) = P_ref·(ρ/ρ_ref)^α`: constant pathloss at the cell edge.
    EdgeScaled,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PowerPolicy {
    pub mode: PowerMode,
    pub reference_power: f64,
    pub reference_radius: f64,
}

impl PowerPolicy {
    pub fn power_at(&self, radius: f64, exponent: f64) -> f64 {
        match self.mode {
            PowerMode::Fixed => self.reference_power,
            PowerMode::EdgeScaled => {
                self.reference_power * (radius / self.reference_radius).powf(exponent)
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SweepOptions {
    /// Drop the noise from the multi-cell averages.
    pub interference_limited: bool,
    pub grid: AverageGrid,
}

impl Default for SweepOptions {
    fn default() -> Self {
        Self {
            interference_limited: false,
            grid: AverageGrid::default(),
        }
    }
}

/// One (radius, scheduler) cell of a capacity-coverage sweep.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TradeoffRow {
    pub radius: f64,
    pub scheduler: SchedulerSpec,
    pub num_users: usize,
    pub tx_power: f64,
    /// Scheduler-density spread used for the multi-cell average.
    pub sigma: f64,
    pub multi_cell_rate: f64,
    pub single_cell_rate: f64,
}

impl TradeoffRow {
    pub fn ici_gap(&self) -> f64 {
        self.single_cell_rate - self.multi_cell_rate
    }
}

/// Scenario at `radius` with the template's user density and the policy's
/// power.
pub fn scaled_scenario(
    template: &CellScenario,
    radius: f64,
    policy: &PowerPolicy,
) -> Result<CellScenario> {
    let ratio = radius / template.radius();
    let users = ((template.num_users() as f64) * ratio * ratio)
        .round()
        .max(1.0) as usize;
    let power = policy.power_at(radius, template.serving().exponent());
    Ok(template
        .with_radius(radius)?
        .with_num_users(users)?
        .with_tx_power(power)?)
}

/// Multi-cell and single-cell average rates over radii and schedulers.
///
/// Greedy and proportional-fair enter the multi-cell average through the
/// truncated-Gaussian density, with σ re-calibrated at every radius to that
/// radius's single-cell average rate.
pub fn tradeoff_sweep(
    radii: &[f64],
    schedulers: &[SchedulerSpec],
    policy: &PowerPolicy,
    template: &CellScenario,
    fading: &SharedFading,
    options: &SweepOptions,
) -> Result<Vec<TradeoffRow>> {
    if radii.is_empty() || radii.windows(2).any(|w| !(w[0] < w[1])) || radii[0] <= 0.0 {
        return Err(MultiCellError::InvalidArgument(
            "radii must be positive and increasing".into(),
        ));
    }
    let cells: Vec<(f64, SchedulerSpec)> = radii
        .iter()
        .flat_map(|&r| schedulers.iter().map(move |&s| (r, s)))
        .collect();
    cells
        .par_iter()
        .map(|&(radius, scheduler)| {
            sweep_cell(radius, scheduler, policy, template, fading, options)
        })
        .collect()
}

fn sweep_cell(
    radius: f64,
    scheduler: SchedulerSpec,
    policy: &PowerPolicy,
    template: &CellScenario,
    fading: &SharedFading,
    options: &SweepOptions,
) -> Result<TradeoffRow> {
    let scenario = scaled_scenario(template, radius, policy)?;
    let noise = scenario.noise_power();
    let (sigma, single) = match scheduler {
        SchedulerSpec::RoundRobin => {
            let d = SchedulerDensity::for_scenario(f64::INFINITY, &scenario)?;
            (
                f64::INFINITY,
                isolated_cell_average_rate(&scenario, fading.as_ref(), &d, noise)?,
            )
        }
        SchedulerSpec::TruncatedGaussian { sigma } => {
            let d = SchedulerDensity::for_scenario(sigma, &scenario)?;
            (
                sigma,
                isolated_cell_average_rate(&scenario, fading.as_ref(), &d, noise)?,
            )
        }
        SchedulerSpec::Greedy | SchedulerSpec::ProportionalFair => {
            let analysis = SingleCellAnalysis::new(
                scenario.clone(),
                fading.clone(),
                crate::singlecell::default_rate_grid(),
            )?;
            let target = analysis.average_rate(scheduler)?;
            let cal = calibrate_sigma(target, (radius, 1.0), &scenario, fading.as_ref())?;
            (cal.sigma, target)
        }
    };
    let density = SchedulerDensity::for_scenario(sigma, &scenario)?;
    let multi_noise = if options.interference_limited {
        0.0
    } else {
        noise
    };
    let multi = cell_average_rate(
        &scenario,
        fading.as_ref(),
        &density,
        multi_noise,
        &options.grid,
    )?;
    Ok(TradeoffRow {
        radius,
        scheduler,
        num_users: scenario.num_users(),
        tx_power: scenario.serving().tx_power(),
        sigma,
        multi_cell_rate: multi,
        single_cell_rate: single,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::channel::{PathlossParams, RayleighPowerFading};
    use approx::assert_relative_eq;

    fn scenario() -> CellScenario {
        let p = PathlossParams::new(2.0, -80.0, 1.0, 1.0).unwrap();
        CellScenario::symmetric(1000.0, 100, p, 1e-14).unwrap()
    }

    #[test]
    fn two_term_partial_fractions() {
        let c = hypoexp_coefficients(&[2.0, 1.0]).unwrap();
        assert_relative_eq!(c[0], 2.0, max_relative = 1e-15);
        assert_relative_eq!(c[1], -1.0, max_relative = 1e-15);
        let r = hypoexp_coefficients_recursive(&[2.0, 1.0]).unwrap();
        assert_eq!(c, r);
    }

    #[test]
    fn coincident_means_rejected() {
        let e = hypoexp_coefficients(&[1.0, 2.0, 1.0 + 1e-12]).unwrap_err();
        assert!(matches!(
            e,
            MultiCellError::NearDegenerateMeans { i: 1, j: 3 }
        ));
    }

    #[test]
    fn on_axis_location_is_perturbed() {
        let s = scenario();
        let loc = UserLocation::new(500.0, 0.0);
        assert!(InterferenceProfile::new(&s, 1.0, loc)
            .unwrap()
            .coefficients()
            .is_err());
        let p = InterferenceProfile::at(&s, 1.0, loc).unwrap();
        let c = p.coefficients().unwrap();
        assert_relative_eq!(c.iter().sum::<f64>(), 1.0, epsilon = 1e-8);
        assert!((p.location().distance() - 500.0).abs() < 1e-9);
    }

    #[test]
    fn mgf_at_zero_and_pole() {
        let s = scenario();
        let p = InterferenceProfile::at(&s, 1.0, UserLocation::polar(400.0, 0.2)).unwrap();
        let f = RayleighPowerFading::default();
        assert_eq!(interference_mgf(&p, &f, 0.0).unwrap(), 1.0);
        let max = p.mean_interference().iter().copied().fold(0.0, f64::max);
        assert!(matches!(
            interference_mgf(&p, &f, 1.0 / max),
            Err(MultiCellError::PoleCrossing { .. })
        ));
        let d = numerics::differentiate(|s| interference_mgf(&p, &f, s).unwrap(), 0.0, 0.01 / max)
            .unwrap();
        assert_relative_eq!(d, p.total_mean_interference(), max_relative = 1e-8);
    }

    #[test]
    fn scheduler_density_limits() {
        let d0 = 1.0;
        let rho = 1000.0;
        let rr = SchedulerDensity::round_robin(rho, d0).unwrap();
        let wide = SchedulerDensity::new(1e7, rho, d0).unwrap();
        for &x in &[1.5, 100.0, 700.0, 999.0] {
            assert_relative_eq!(wide.pdf(x), rr.pdf(x), max_relative = 1e-7);
            assert_relative_eq!(wide.cdf(x), rr.cdf(x), max_relative = 1e-7);
        }
        let narrow = SchedulerDensity::new(50.0, rho, d0).unwrap();
        for &p in &[0.01, 0.5, 0.99] {
            assert_relative_eq!(narrow.cdf(narrow.quantile(p)), p, max_relative = 1e-10);
        }
        assert!(SchedulerDensity::new(0.0, rho, d0).is_err());
        assert!(SchedulerDensity::new(10.0, 1.0, 1.0).is_err());
    }

    #[test]
    fn beta_matches_definition() {
        let d = SchedulerDensity::new(300.0, 1000.0, 1.0).unwrap();
        let two_s2 = 2.0 * 300.0f64 * 300.0;
        let direct = (-1.0 / two_s2).exp() - (-1e6 / two_s2).exp();
        assert_relative_eq!(d.beta(), direct, max_relative = 1e-13);
    }

    #[test]
    fn interference_limited_rate_near_equal_signal() {
        // Ī equal to one interferer mean exercises the removable singularity.
        let s = scenario();
        let p = InterferenceProfile::at(&s, 1.0, UserLocation::polar(999.0, 0.0)).unwrap();
        let v = avg_rate_interference_limited(&p).unwrap();
        let reference =
            location_average_rate_rayleigh(p.signal_mean(), p.mean_interference(), 0.0).unwrap();
        assert_relative_eq!(v, reference, max_relative = 1e-6);
    }

    #[test]
    fn isolated_rayleigh_rate_is_exponential_integral() {
        // E[ln(1 + sA)] = e^{1/s} E₁(1/s); at s = 1: 0.596347362323194...
        let f = RayleighPowerFading::default();
        let v = isolated_link_rate(&f, 1.0).unwrap();
        assert_relative_eq!(v, 0.596_347_362_323_194_1, max_relative = 1e-10);
        let w = location_average_rate_rayleigh(1.0, &[], 1.0).unwrap();
        assert_relative_eq!(v, w, max_relative = 1e-10);
    }

    #[test]
    fn power_policy() {
        let p = PowerPolicy {
            mode: PowerMode::EdgeScaled,
            reference_power: 1.0,
            reference_radius: 4000.0,
        };
        assert_relative_eq!(p.power_at(2000.0, 2.0), 0.25);
        let f = PowerPolicy {
            mode: PowerMode::Fixed,
            ..p
        };
        assert_eq!(f.power_at(2000.0, 2.0), 1.0);
    }

    #[test]
    fn scaled_scenario_keeps_user_density() {
        let policy = PowerPolicy {
            mode: PowerMode::Fixed,
            reference_power: 1.0,
            reference_radius: 1000.0,
        };
        let s = scaled_scenario(&scenario(), 2000.0, &policy).unwrap();
        assert_eq!(s.num_users(), 400);
        let s = scaled_scenario(&scenario(), 50.0, &policy).unwrap();
        assert_eq!(s.num_users(), 1);
    }
}
