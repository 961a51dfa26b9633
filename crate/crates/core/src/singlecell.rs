//! Downlink rate distributions of an isolated cell (no intercell
//! interference) under round-robin, greedy and proportional-fair scheduling.
//!
//! Rates are in nats/s/Hz throughout: `R = ln(1 + Γ)`, with single-cell SNR
//! `Γ = ξ′·δ^{−α}·A` and `ξ′ = ξ / I_n`. Users are area-uniform on the disk
//! of radius `ρ`.

use rayon::prelude::*;
use thiserror::Error;

use crate::channel::{CellScenario, ChannelError, SharedFading};
use crate::montecarlo::{self, Placement, SimConfig};
use crate::numerics::{self, NumericsError, QuadSpec, TabulatedPdf};
use crate::scheduler::SchedulerSpec;

#[derive(Debug, Error)]
pub enum SingleCellError {
    #[error(transparent)]
    Numerics(#[from] NumericsError),
    #[error(transparent)]
    Channel(#[from] ChannelError),
    #[error("rate grid must be strictly increasing and nonnegative")]
    InvalidRateGrid,
    #[error("scheduler {0} is not supported here")]
    UnsupportedScheduler(SchedulerSpec),
    #[error("the round-robin closed form assumes a pathloss exponent of 2 and exponential fading")]
    ClosedFormUnavailable,
    #[error("noise power must be positive for single-cell analysis")]
    ZeroNoise,
    #[error(transparent)]
    Simulation(#[from] montecarlo::SimError),
}

pub type Result<T> = std::result::Result<T, SingleCellError>;

/// Default rate grid: 0 to 30 nats in steps of 0.01.
pub fn default_rate_grid() -> Vec<f64> {
    numerics::linspace(0.0, 30.0, 3001)
}

#[derive(Debug, Clone)]
pub struct SingleCellAnalysis {
    scenario: CellScenario,
    fading: SharedFading,
    rate_grid: Vec<f64>,
    quad: QuadSpec,
}

impl SingleCellAnalysis {
    pub fn new(scenario: CellScenario, fading: SharedFading, rate_grid: Vec<f64>) -> Result<Self> {
        if rate_grid.len() < 3 || rate_grid[0] < 0.0 || rate_grid.windows(2).any(|w| !(w[0] < w[1]))
        {
            return Err(SingleCellError::InvalidRateGrid);
        }
        if !(scenario.noise_power() > 0.0) {
            return Err(SingleCellError::ZeroNoise);
        }
        Ok(Self {
            scenario,
            fading,
            rate_grid,
            quad: QuadSpec::relative(1e-10),
        })
    }

    pub fn with_quad(mut self, quad: QuadSpec) -> Self {
        self.quad = quad;
        self
    }

    pub fn scenario(&self) -> &CellScenario {
        &self.scenario
    }

    pub fn fading(&self) -> &SharedFading {
        &self.fading
    }

    pub fn rate_grid(&self) -> &[f64] {
        &self.rate_grid
    }

    pub fn snr_composite(&self) -> f64 {
        self.scenario.snr_composite()
    }

    fn radius(&self) -> f64 {
        self.scenario.radius()
    }

    fn exponent(&self) -> f64 {
        self.scenario.serving().exponent()
    }

    fn users(&self) -> f64 {
        self.scenario.num_users() as f64
    }

    /// Fading argument `δ^α γ / ξ′` at distance `δ`.
    fn fading_arg(&self, delta: f64, gamma: f64) -> f64 {
        delta.powf(self.exponent()) * gamma / self.snr_composite()
    }

    /// Breakpoints around the distance where the fading argument is O(1);
    /// integrands in δ are concentrated there at large SNR thresholds.
    fn breaks(&self, gamma: f64) -> Vec<f64> {
        if gamma <= 0.0 {
            return vec![];
        }
        let scale = self.fading.mean() * self.snr_composite() / gamma;
        let star = scale.powf(1.0 / self.exponent());
        [1e-3, 1e-2, 0.1, 0.3, 1.0, 3.0, 10.0]
            .iter()
            .map(|k| k * star)
            .filter(|&d| d < self.radius())
            .collect()
    }

    fn integrate_radial<F: Fn(f64) -> f64>(&self, gamma: f64, f: F) -> Result<f64> {
        let breaks = self.breaks(gamma);
        Ok(numerics::integrate_with_breaks(
            f,
            0.0,
            self.radius(),
            &breaks,
            &self.quad,
        )?)
    }

    /// Round-robin rate density at `r` by quadrature over the user radius.
    pub fn rr_rate_density(&self, r: f64) -> Result<f64> {
        let gamma = r.exp_m1();
        let rho2 = self.radius() * self.radius();
        let alpha = self.exponent();
        let xi = self.snr_composite();
        let er = r.exp();
        self.integrate_radial(gamma, |d| {
            let u = self.fading_arg(d, gamma);
            (2.0 * d / rho2) * (d.powf(alpha) / xi) * er * self.fading.pdf(u)
        })
    }

    pub fn rr_rate_pdf(&self) -> Result<TabulatedPdf> {
        self.tabulate(|r| self.rr_rate_density(r))
    }

    /// `N ∫₀^ρ (2δ/ρ²) ln F_A(δ^α γ/ξ′) dδ`, the log-CDF of the maximum SNR
    /// in the continuum-ring limit.
    pub fn greedy_max_snr_logcdf(&self, gamma: f64) -> Result<f64> {
        if gamma <= 0.0 {
            return Ok(f64::NEG_INFINITY);
        }
        let rho2 = self.radius() * self.radius();
        let integral = self.integrate_radial(gamma, |d| {
            let u = self.fading_arg(d, gamma);
            (2.0 * d / rho2) * self.fading.log_cdf(u)
        })?;
        Ok(self.users() * integral)
    }

    /// Derivative of [`Self::greedy_max_snr_logcdf`] in `γ`, taken under the
    /// integral sign.
    pub fn greedy_logcdf_derivative(&self, gamma: f64) -> Result<f64> {
        if gamma <= 0.0 {
            return Ok(f64::INFINITY);
        }
        let rho2 = self.radius() * self.radius();
        let alpha = self.exponent();
        let xi = self.snr_composite();
        let integral = self.integrate_radial(gamma, |d| {
            let u = self.fading_arg(d, gamma);
            let hazard = (self.fading.ln_pdf(u) - self.fading.log_cdf(u)).exp();
            (2.0 * d / rho2) * (d.powf(alpha) / xi) * hazard
        })?;
        Ok(self.users() * integral)
    }

    /// Equal-width ring discretization of the maximum-SNR log-CDF with
    /// real-valued expected ring populations.
    pub fn greedy_ring_logcdf(&self, gamma: f64, rings: usize) -> f64 {
        let rho = self.radius();
        let width = rho / rings as f64;
        (0..rings)
            .map(|i| {
                let centre = (i as f64 + 0.5) * width;
                let expected = self.users() * 2.0 * centre * width / (rho * rho);
                expected * self.fading.log_cdf(self.fading_arg(centre, gamma))
            })
            .sum()
    }

    /// `ln f_R(r)` under greedy scheduling. Finite even where `f_R`
    /// underflows.
    pub fn greedy_rate_log_density(&self, r: f64) -> Result<f64> {
        let gamma = r.exp_m1();
        if gamma <= 0.0 {
            if self.scenario.num_users() == 1 {
                return Ok(self.rr_rate_density(r)?.ln());
            }
            return Ok(f64::NEG_INFINITY);
        }
        let log_cdf = self.greedy_max_snr_logcdf(gamma)?;
        let slope = self.greedy_logcdf_derivative(gamma)?;
        Ok(r + log_cdf + slope.ln())
    }

    pub fn greedy_rate_density(&self, r: f64) -> Result<f64> {
        Ok(self.greedy_rate_log_density(r)?.exp())
    }

    pub fn greedy_rate_pdf(&self) -> Result<TabulatedPdf> {
        self.tabulate(|r| self.greedy_rate_density(r))
    }

    /// Selected fading density `N f_A F_A^{N−1}` (max over the cell's users).
    fn selected_fading_pdf(&self, a: f64) -> f64 {
        let n = self.scenario.num_users();
        if n == 1 {
            return self.fading.pdf(a);
        }
        let ln =
            (n as f64).ln() + self.fading.ln_pdf(a) + (n as f64 - 1.0) * self.fading.log_cdf(a);
        ln.exp()
    }

    pub fn pf_rate_density(&self, r: f64) -> Result<f64> {
        let gamma = r.exp_m1();
        let rho2 = self.radius() * self.radius();
        let alpha = self.exponent();
        let xi = self.snr_composite();
        let prefactor = 2.0 * r.exp() / (xi * rho2);
        let integral = self.integrate_radial(gamma, |d| {
            d.powf(alpha + 1.0) * self.selected_fading_pdf(self.fading_arg(d, gamma))
        })?;
        Ok(prefactor * integral)
    }

    pub fn pf_rate_pdf(&self) -> Result<TabulatedPdf> {
        self.tabulate(|r| self.pf_rate_density(r))
    }

    pub fn rate_pdf(&self, scheduler: SchedulerSpec) -> Result<TabulatedPdf> {
        match scheduler {
            SchedulerSpec::RoundRobin => self.rr_rate_pdf(),
            SchedulerSpec::Greedy => self.greedy_rate_pdf(),
            SchedulerSpec::ProportionalFair => self.pf_rate_pdf(),
            other => Err(SingleCellError::UnsupportedScheduler(other)),
        }
    }

    /// `P(R > r)` for the given scheduler.
    pub fn rate_ccdf(&self, scheduler: SchedulerSpec, r: f64) -> Result<f64> {
        let gamma = r.exp_m1();
        if gamma <= 0.0 {
            return Ok(1.0);
        }
        let rho2 = self.radius() * self.radius();
        match scheduler {
            SchedulerSpec::RoundRobin => self.integrate_radial(gamma, |d| {
                let u = self.fading_arg(d, gamma);
                (2.0 * d / rho2) * (1.0 - self.fading.cdf(u))
            }),
            SchedulerSpec::ProportionalFair => {
                let n = self.users();
                self.integrate_radial(gamma, |d| {
                    let u = self.fading_arg(d, gamma);
                    (2.0 * d / rho2) * -(n * self.fading.log_cdf(u)).exp_m1()
                })
            }
            SchedulerSpec::Greedy => Ok(-self.greedy_max_snr_logcdf(gamma)?.exp_m1()),
            other => Err(SingleCellError::UnsupportedScheduler(other)),
        }
    }

    /// Mean rate `∫₀^∞ P(R > r) dr` in nats/s/Hz.
    pub fn average_rate(&self, scheduler: SchedulerSpec) -> Result<f64> {
        if let SchedulerSpec::TruncatedGaussian { .. } = scheduler {
            return Err(SingleCellError::UnsupportedScheduler(scheduler));
        }
        // Errors inside the integrand surface as NaN and are reported below.
        let value = numerics::integrate_semiinfinite(
            |r| self.rate_ccdf(scheduler, r).unwrap_or(f64::NAN),
            0.0,
            &QuadSpec::new(1e-12, 1e-9, 2000)?,
        );
        match value {
            Ok(v) => Ok(v),
            Err(NumericsError::NonFinite { x }) => {
                // Re-run the failing point to recover its error.
                self.rate_ccdf(scheduler, x)?;
                Err(NumericsError::NonFinite { x }.into())
            }
            Err(e) => Err(e.into()),
        }
    }

    /// Fraction of served users within each radius.
    ///
    /// Round-robin and proportional-fair select uniformly over the area, so
    /// the fraction is `(r*/ρ)²`. Greedy selection is simulated with the
    /// ring-population placement that the greedy log-CDF describes.
    pub fn effective_coverage_cdf(
        &self,
        scheduler: SchedulerSpec,
        radius_grid: &[f64],
        mc: &CoverageSimulation,
    ) -> Result<Vec<f64>> {
        match scheduler {
            SchedulerSpec::RoundRobin | SchedulerSpec::ProportionalFair => Ok(radius_grid
                .iter()
                .map(|&r| area_fraction(r, self.radius()))
                .collect()),
            SchedulerSpec::Greedy => {
                let cfg = SimConfig {
                    seed: mc.seed,
                    num_drops: mc.drops,
                    scenario: self.scenario.clone(),
                    fading: self.fading.clone(),
                    scheduler,
                    placement: mc.placement,
                };
                let samples = montecarlo::simulate_single_cell(&cfg)?;
                let distances = numerics::sorted(samples.distances);
                let n = distances.len() as f64;
                Ok(radius_grid
                    .iter()
                    .map(|&r| distances.partition_point(|&d| d <= r) as f64 / n)
                    .collect())
            }
            other => Err(SingleCellError::UnsupportedScheduler(other)),
        }
    }

    fn tabulate<F>(&self, density: F) -> Result<TabulatedPdf>
    where
        F: Fn(f64) -> Result<f64> + Sync,
    {
        let values = self
            .rate_grid
            .par_iter()
            .map(|&r| density(r))
            .collect::<Result<Vec<_>>>()?;
        Ok(TabulatedPdf::new(self.rate_grid.clone(), values)?)
    }
}

/// Simulation settings for greedy effective coverage.
#[derive(Debug, Clone, Copy)]
pub struct CoverageSimulation {
    pub seed: u64,
    pub drops: usize,
    pub placement: Placement,
}

impl Default for CoverageSimulation {
    fn default() -> Self {
        Self {
            seed: 1,
            drops: 200_000,
            placement: Placement::ring_population(),
        }
    }
}

/// Fraction of the disk of radius `radius` inside radius `r`.
pub fn area_fraction(r: f64, radius: f64) -> f64 {
    (r / radius).powi(2).clamp(0.0, 1.0)
}

/// Round-robin rate density for exponential power fading and pathloss
/// exponent 2, in closed form. `snr_composite` is `ξ′·E[A]`.
pub fn rr_rate_pdf_rayleigh(r: f64, radius: f64, snr_composite: f64) -> f64 {
    let g = r.exp_m1();
    let scale = radius * radius / snr_composite;
    let k = scale * g;
    // f = e^r · (ρ²/ξ′) · h(k), h(k) = [(1 − e^{−k})/k − e^{−k}] / k
    let h = if k < 1e-2 {
        // h(k) = Σ_{n≥1} (−1)^{n+1} n k^{n−1} / (n+1)!
        let mut sum = 0.0;
        let mut term_pow = 1.0;
        let mut fact = 1.0;
        for n in 1..=10 {
            fact *= (n + 1) as f64;
            let sign = if n % 2 == 1 { 1.0 } else { -1.0 };
            sum += sign * n as f64 * term_pow / fact;
            term_pow *= k;
        }
        sum
    } else {
        (-(-k).exp_m1() / k - (-k).exp()) / k
    };
    r.exp() * scale * h
}

impl SingleCellAnalysis {
    /// Closed-form round-robin density; requires `α = 2` and exponential fading.
    pub fn rr_rate_density_closed_form(&self, r: f64) -> Result<f64> {
        if self.exponent() != 2.0 || !self.fading.is_exponential() {
            return Err(SingleCellError::ClosedFormUnavailable);
        }
        Ok(rr_rate_pdf_rayleigh(
            r,
            self.radius(),
            self.snr_composite() * self.fading.mean(),
        ))
    }

    pub fn rr_rate_pdf_closed_form(&self) -> Result<TabulatedPdf> {
        self.tabulate(|r| self.rr_rate_density_closed_form(r))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::channel::{PathlossParams, RayleighPowerFading};
    use approx::assert_relative_eq;
    use std::sync::Arc;

    fn analysis(n: usize) -> SingleCellAnalysis {
        let p = PathlossParams::new(2.0, -80.0, 1.0, 1.0).unwrap();
        let s = CellScenario::symmetric(1000.0, n, p, 1e-14).unwrap();
        SingleCellAnalysis::new(
            s,
            Arc::new(RayleighPowerFading::default()),
            default_rate_grid(),
        )
        .unwrap()
    }

    #[test]
    fn closed_form_limit_at_zero_rate() {
        // f_R(0) = ρ²/(2ξ′) = 0.5
        assert_relative_eq!(
            rr_rate_pdf_rayleigh(0.0, 1000.0, 1e6),
            0.5,
            max_relative = 1e-14
        );
        let a = rr_rate_pdf_rayleigh(1e-9, 1000.0, 1e6);
        assert!((a - 0.5).abs() < 1e-8);
        // Series and direct branches agree across the switch point.
        let k_switch = 1e-2f64;
        let r = (k_switch).ln_1p();
        let below = rr_rate_pdf_rayleigh(r * (1.0 - 1e-9), 1000.0, 1e6);
        let above = rr_rate_pdf_rayleigh(r * (1.0 + 1e-9), 1000.0, 1e6);
        assert_relative_eq!(below, above, max_relative = 1e-8);
    }

    #[test]
    fn generic_rr_matches_closed_form_spot() {
        let a = analysis(100);
        for &r in &[0.0, 0.01, 0.5, 2.0, 6.0, 15.0, 25.0] {
            let g = a.rr_rate_density(r).unwrap();
            let c = a.rr_rate_density_closed_form(r).unwrap();
            assert_relative_eq!(g, c, max_relative = 1e-8);
        }
    }

    #[test]
    fn pf_with_one_user_is_round_robin() {
        let a = analysis(1);
        for &r in &[0.0, 0.3, 1.0, 4.0, 12.0] {
            assert_relative_eq!(
                a.pf_rate_density(r).unwrap(),
                a.rr_rate_density(r).unwrap(),
                max_relative = 1e-9
            );
        }
    }

    #[test]
    fn greedy_log_cdf_saturates() {
        let a = analysis(100);
        let mut last = f64::NEG_INFINITY;
        for &g in &[1e-4, 1e-2, 1.0, 1e2, 1e4, 1e6, 1e10] {
            let v = a.greedy_max_snr_logcdf(g).unwrap();
            assert!(v >= last);
            last = v;
        }
        assert!(last > -1e-6 && last <= 0.0);
    }

    #[test]
    fn zero_noise_rejected() {
        let p = PathlossParams::new(2.0, -80.0, 1.0, 1.0).unwrap();
        let s = CellScenario::symmetric(1000.0, 5, p, 0.0).unwrap();
        let r = SingleCellAnalysis::new(
            s,
            Arc::new(RayleighPowerFading::default()),
            default_rate_grid(),
        );
        assert!(matches!(r, Err(SingleCellError::ZeroNoise)));
    }

    #[test]
    fn bad_grid_rejected() {
        let p = PathlossParams::new(2.0, -80.0, 1.0, 1.0).unwrap();
        let s = CellScenario::symmetric(1000.0, 5, p, 1e-14).unwrap();
        let r = SingleCellAnalysis::new(
            s,
            Arc::new(RayleighPowerFading::default()),
            vec![0.0, 2.0, 1.0],
        );
        assert!(matches!(r, Err(SingleCellError::InvalidRateGrid)));
    }

    #[test]
    fn area_fraction_values() {
        assert_relative_eq!(area_fraction(300.0, 1000.0), 0.09, max_relative = 1e-15);
        assert_eq!(area_fraction(1000.0, 1000.0), 1.0);
        assert_eq!(area_fraction(2000.0, 1000.0), 1.0);
    }
}
