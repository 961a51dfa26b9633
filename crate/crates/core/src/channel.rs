//! Physical-layer model: power fading, pathloss, the circular cell with its
//! six first-tier interferers, and user placement.

use std::f64::consts::PI;
use std::fmt::Debug;
use std::sync::Arc;

use rand::{Rng, RngCore};
use rand_distr::{Distribution, Exp1, Gamma};
use statrs::function::gamma::{gamma_lr, ln_gamma};
use thiserror::Error;

use crate::numerics::{self, QuadSpec};

/// Number of first-tier interfering base stations.
pub const NUM_INTERFERERS: usize = 6;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ChannelError {
    #[error("{0}")]
    InvalidParameter(String),
    #[error("distance {distance} m is below the reference distance {reference} m")]
    BelowReferenceDistance { distance: f64, reference: f64 },
    #[error("user location ({u}, {v}) is outside the cell annulus [{min}, {max}] m")]
    LocationOutsideCell { u: f64, v: f64, min: f64, max: f64 },
}

pub type Result<T> = std::result::Result<T, ChannelError>;

fn invalid<T>(msg: impl Into<String>) -> Result<T> {
    Err(ChannelError::InvalidParameter(msg.into()))
}

/// Nonnegative power-gain distribution of a fading channel.
pub trait FadingModel: Debug + Send + Sync {
    fn pdf(&self, a: f64) -> f64;

    fn cdf(&self, a: f64) -> f64;

    /// `ln F_A(a)`, accurate when `F_A(a)` underflows or is close to 1.
    fn log_cdf(&self, a: f64) -> f64;

    fn ln_pdf(&self, a: f64) -> f64 {
        self.pdf(a).ln()
    }

    fn mean(&self) -> f64;

    fn sample(&self, rng: &mut dyn RngCore) -> f64;

    /// Inverse CDF.
    fn quantile(&self, p: f64) -> f64;

    /// Draws the maximum of `count` iid gains from one uniform variate by
    /// inverting `F_A^count`. `count` may be fractional.
    fn sample_max(&self, count: f64, u: f64) -> f64 {
        self.quantile(u.powf(1.0 / count))
    }

    /// `E[e^{sA}]` for `s < ` the abscissa of convergence. The default
    /// integrates the density numerically.
    fn mgf(&self, s: f64) -> Option<f64> {
        let spec = QuadSpec::relative(1e-10);
        let integrand = |a: f64| {
            let log = s * a + self.ln_pdf(a);
            if log == f64::NEG_INFINITY {
                0.0
            } else {
                log.exp()
            }
        };
        numerics::integrate_semiinfinite(integrand, 0.0, &spec)
            .ok()
            .filter(|v| v.is_finite())
    }

    /// True when the gain is exponentially distributed, which unlocks the
    /// hypoexponential closed forms.
    fn is_exponential(&self) -> bool {
        false
    }
}

/// Rayleigh amplitude fading, i.e. an exponentially distributed power gain.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RayleighPowerFading {
    mean_power: f64,
}

impl Default for RayleighPowerFading {
    fn default() -> Self {
        Self { mean_power: 1.0 }
    }
}

impl RayleighPowerFading {
    pub fn new(mean_power: f64) -> Result<Self> {
        if !(mean_power > 0.0 && mean_power.is_finite()) {
            return invalid("fading mean power must be positive");
        }
        Ok(Self { mean_power })
    }

    pub fn mean_power(&self) -> f64 {
        self.mean_power
    }
}

impl FadingModel for RayleighPowerFading {
    fn pdf(&self, a: f64) -> f64 {
        if a < 0.0 {
            0.0
        } else {
            (-a / self.mean_power).exp() / self.mean_power
        }
    }

    fn ln_pdf(&self, a: f64) -> f64 {
        if a < 0.0 {
            f64::NEG_INFINITY
        } else {
            -a / self.mean_power - self.mean_power.ln()
        }
    }

    fn cdf(&self, a: f64) -> f64 {
        if a <= 0.0 {
            0.0
        } else {
            -(-a / self.mean_power).exp_m1()
        }
    }

    fn log_cdf(&self, a: f64) -> f64 {
        if a <= 0.0 {
            return f64::NEG_INFINITY;
        }
        let x = a / self.mean_power;
        if x < std::f64::consts::LN_2 {
            (-(-x).exp_m1()).ln()
        } else {
            (-(-x).exp()).ln_1p()
        }
    }

    fn mean(&self) -> f64 {
        self.mean_power
    }

    fn sample(&self, rng: &mut dyn RngCore) -> f64 {
        let e: f64 = Exp1.sample(rng);
        e * self.mean_power
    }

    fn quantile(&self, p: f64) -> f64 {
        -self.mean_power * (-p).ln_1p()
    }

    fn sample_max(&self, count: f64, u: f64) -> f64 {
        // 1 − u^{1/count} computed without cancellation.
        let tail = -(u.ln() / count).exp_m1();
        -self.mean_power * tail.ln()
    }

    fn mgf(&self, s: f64) -> Option<f64> {
        let d = 1.0 - s * self.mean_power;
        (d > 0.0).then(|| 1.0 / d)
    }

    fn is_exponential(&self) -> bool {
        true
    }
}

/// Nakagami-m amplitude fading: the power gain is Gamma(m, mean/m).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NakagamiPowerFading {
    m: f64,
    mean_power: f64,
}

impl NakagamiPowerFading {
    pub fn new(m: f64, mean_power: f64) -> Result<Self> {
        if !(m >= 0.5 && m.is_finite()) {
            return invalid("Nakagami shape m must be at least 0.5");
        }
        if !(mean_power > 0.0 && mean_power.is_finite()) {
            return invalid("fading mean power must be positive");
        }
        Ok(Self { m, mean_power })
    }

    fn rate(&self) -> f64 {
        self.m / self.mean_power
    }
}

impl FadingModel for NakagamiPowerFading {
    fn pdf(&self, a: f64) -> f64 {
        if a <= 0.0 {
            return if a == 0.0 && self.m == 1.0 {
                self.rate()
            } else {
                0.0
            };
        }
        self.ln_pdf(a).exp()
    }

    fn ln_pdf(&self, a: f64) -> f64 {
        if a <= 0.0 {
            return self.pdf(a).ln();
        }
        let b = self.rate();
        self.m * b.ln() + (self.m - 1.0) * a.ln() - b * a - ln_gamma(self.m)
    }

    fn cdf(&self, a: f64) -> f64 {
        if a <= 0.0 {
            0.0
        } else {
            gamma_lr(self.m, self.rate() * a)
        }
    }

    fn log_cdf(&self, a: f64) -> f64 {
        if a <= 0.0 {
            return f64::NEG_INFINITY;
        }
        let x = self.rate() * a;
        let p = gamma_lr(self.m, x);
        if p > 1e-200 {
            return p.ln();
        }
        // Leading series term of the regularized lower incomplete gamma.
        self.m * x.ln() - x - ln_gamma(self.m + 1.0)
    }

    fn mean(&self) -> f64 {
        self.mean_power
    }

    fn sample(&self, rng: &mut dyn RngCore) -> f64 {
        let g = Gamma::new(self.m, self.mean_power / self.m).expect("validated parameters");
        g.sample(rng)
    }

    fn quantile(&self, p: f64) -> f64 {
        if p <= 0.0 {
            return 0.0;
        }
        if p >= 1.0 {
            return f64::INFINITY;
        }
        let mut hi = self.mean_power;
        while self.cdf(hi) < p {
            hi *= 2.0;
        }
        // Solve ln F(e^t) = ln p, which keeps relative accuracy in both tails.
        let target = p.ln();
        let t_hi = hi.ln();
        numerics::find_root(
            |t| self.log_cdf(t.exp()) - target,
            t_hi - 690.0,
            t_hi,
            1e-13,
        )
        .map(f64::exp)
        .unwrap_or(hi)
    }
}

/// Distance-based pathloss `ξ·δ^{−α}` with `ξ = 10^{K/10}·P·d₀^α`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PathlossParams {
    exponent: f64,
    constant_db: f64,
    reference_distance: f64,
    tx_power: f64,
}

impl PathlossParams {
    pub fn new(
        exponent: f64,
        constant_db: f64,
        reference_distance: f64,
        tx_power: f64,
    ) -> Result<Self> {
        if !(exponent > 0.0 && exponent.is_finite()) {
            return invalid("exponent must be positive");
        }
        if !constant_db.is_finite() {
            return invalid("pathloss constant must be finite");
        }
        if !(reference_distance > 0.0 && reference_distance.is_finite()) {
            return invalid("reference distance must be positive");
        }
        if !(tx_power > 0.0 && tx_power.is_finite()) {
            return invalid("transmit power must be positive");
        }
        Ok(Self {
            exponent,
            constant_db,
            reference_distance,
            tx_power,
        })
    }

    pub fn exponent(&self) -> f64 {
        self.exponent
    }

    pub fn constant_db(&self) -> f64 {
        self.constant_db
    }

    pub fn reference_distance(&self) -> f64 {
        self.reference_distance
    }

    pub fn tx_power(&self) -> f64 {
        self.tx_power
    }

    /// Composite `ξ` in W·m^α.
    pub fn xi(&self) -> f64 {
        10f64.powf(self.constant_db / 10.0)
            * self.tx_power
            * self.reference_distance.powf(self.exponent)
    }

    pub fn with_tx_power(&self, tx_power: f64) -> Result<Self> {
        Self::new(
            self.exponent,
            self.constant_db,
            self.reference_distance,
            tx_power,
        )
    }

    /// `ξ·δ^{−α}` without the reference-distance check. The single-cell
    /// formulas integrate down to the BS.
    pub fn gain_at(&self, distance: f64) -> f64 {
        self.xi() * distance.powf(-self.exponent)
    }
}

/// Mean received power `ξ·δ^{−α}·E[A]` at distance `δ ≥ d₀`.
pub fn mean_rx_power(params: &PathlossParams, distance: f64, fading_mean: f64) -> Result<f64> {
    if distance < params.reference_distance {
        return Err(ChannelError::BelowReferenceDistance {
            distance,
            reference: params.reference_distance,
        });
    }
    Ok(params.gain_at(distance) * fading_mean)
}

/// Area-uniform radial density `2δ/ρ²` on `[0, ρ]`.
pub fn uniform_area_density(distance: f64, radius: f64) -> f64 {
    if (0.0..=radius).contains(&distance) {
        2.0 * distance / (radius * radius)
    } else {
        0.0
    }
}

/// A point in the central cell, serving BS at the origin.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct UserLocation {
    pub u: f64,
    pub v: f64,
}

impl UserLocation {
    pub fn new(u: f64, v: f64) -> Self {
        Self { u, v }
    }

    pub fn polar(distance: f64, angle: f64) -> Self {
        Self {
            u: distance * angle.cos(),
            v: distance * angle.sin(),
        }
    }

    pub fn distance(&self) -> f64 {
        self.u.hypot(self.v)
    }

    pub fn angle(&self) -> f64 {
        self.v.atan2(self.u)
    }
}

/// Position of interferer `j` (1-based) on the ring of radius `2ρ`.
pub fn interferer_position(j: usize, radius: f64) -> (f64, f64) {
    let angle = (j as f64 - 1.0) * PI / 3.0;
    (2.0 * radius * angle.cos(), 2.0 * radius * angle.sin())
}

/// Distance from `loc` to interferer `j` (1-based).
pub fn interferer_distance(loc: &UserLocation, j: usize, radius: f64) -> f64 {
    let (x, y) = interferer_position(j, radius);
    (loc.u - x).hypot(loc.v - y)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Interferer {
    pub params: PathlossParams,
    pub position: (f64, f64),
}

impl Interferer {
    pub fn distance_to(&self, loc: &UserLocation) -> f64 {
        (loc.u - self.position.0).hypot(loc.v - self.position.1)
    }
}

/// Full physical configuration of the central cell and its first tier.
#[derive(Debug, Clone, PartialEq)]
pub struct CellScenario {
    radius: f64,
    num_users: usize,
    serving: PathlossParams,
    interferers: [Interferer; NUM_INTERFERERS],
    noise_power: f64,
    user_min_distance: f64,
}

impl CellScenario {
    /// Symmetric first tier: every interferer copies the serving pathloss
    /// parameters. The minimum user distance defaults to `d₀`.
    pub fn symmetric(
        radius: f64,
        num_users: usize,
        serving: PathlossParams,
        noise_power: f64,
    ) -> Result<Self> {
        let overrides = [None; NUM_INTERFERERS];
        Self::new(
            radius,
            num_users,
            serving,
            &overrides,
            noise_power,
            serving.reference_distance(),
        )
    }

    /// `overrides[j]` replaces interferer `j + 1`'s pathloss parameters.
    pub fn new(
        radius: f64,
        num_users: usize,
        serving: PathlossParams,
        overrides: &[Option<PathlossParams>],
        noise_power: f64,
        user_min_distance: f64,
    ) -> Result<Self> {
        if overrides.len() != NUM_INTERFERERS {
            return invalid(format!(
                "exactly {NUM_INTERFERERS} interferers are required, got {}",
                overrides.len()
            ));
        }
        if num_users == 0 {
            return invalid("number of users must be at least 1");
        }
        if !(user_min_distance > 0.0 && user_min_distance.is_finite()) {
            return invalid("minimum user distance must be positive");
        }
        if !(radius > user_min_distance && radius.is_finite()) {
            return invalid("cell radius must exceed the minimum user distance");
        }
        if !(noise_power >= 0.0 && noise_power.is_finite()) {
            return invalid("noise power must be nonnegative");
        }
        let interferers = std::array::from_fn(|j| Interferer {
            params: overrides[j].unwrap_or(serving),
            position: interferer_position(j + 1, radius),
        });
        Ok(Self {
            radius,
            num_users,
            serving,
            interferers,
            noise_power,
            user_min_distance,
        })
    }

    pub fn radius(&self) -> f64 {
        self.radius
    }

    pub fn num_users(&self) -> usize {
        self.num_users
    }

    pub fn serving(&self) -> &PathlossParams {
        &self.serving
    }

    pub fn interferers(&self) -> &[Interferer; NUM_INTERFERERS] {
        &self.interferers
    }

    pub fn noise_power(&self) -> f64 {
        self.noise_power
    }

    pub fn user_min_distance(&self) -> f64 {
        self.user_min_distance
    }

    /// `ξ / I_n`, the single-cell SNR composite.
    pub fn snr_composite(&self) -> f64 {
        self.serving.xi() / self.noise_power
    }

    pub fn with_noise_power(&self, noise_power: f64) -> Result<Self> {
        let mut s = self.clone();
        if !(noise_power >= 0.0 && noise_power.is_finite()) {
            return invalid("noise power must be nonnegative");
        }
        s.noise_power = noise_power;
        Ok(s)
    }

    pub fn with_num_users(&self, num_users: usize) -> Result<Self> {
        if num_users == 0 {
            return invalid("number of users must be at least 1");
        }
        let mut s = self.clone();
        s.num_users = num_users;
        Ok(s)
    }

    /// Same scenario at another radius; interferers move to `2ρ`.
    pub fn with_radius(&self, radius: f64) -> Result<Self> {
        if !(radius > self.user_min_distance && radius.is_finite()) {
            return invalid("cell radius must exceed the minimum user distance");
        }
        let mut s = self.clone();
        s.radius = radius;
        for (j, itf) in s.interferers.iter_mut().enumerate() {
            itf.position = interferer_position(j + 1, radius);
        }
        Ok(s)
    }

    /// Scales the serving and every interferer transmit power to `power`.
    pub fn with_tx_power(&self, power: f64) -> Result<Self> {
        let mut s = self.clone();
        s.serving = self.serving.with_tx_power(power)?;
        for itf in s.interferers.iter_mut() {
            itf.params = itf.params.with_tx_power(power)?;
        }
        Ok(s)
    }

    /// Rotates the interferer ring by `k·π/3` (cyclic relabelling).
    pub fn rotate_interferers(&self, k: usize) -> Self {
        let mut s = self.clone();
        for j in 0..NUM_INTERFERERS {
            s.interferers[j].params = self.interferers[(j + k) % NUM_INTERFERERS].params;
        }
        s
    }

    /// Validates that `loc` lies in `[user_min_distance, ρ]`.
    pub fn check_location(&self, loc: &UserLocation) -> Result<()> {
        let d = loc.distance();
        if d < self.user_min_distance || d > self.radius {
            return Err(ChannelError::LocationOutsideCell {
                u: loc.u,
                v: loc.v,
                min: self.user_min_distance,
                max: self.radius,
            });
        }
        Ok(())
    }

    /// Draws a distance from the area-uniform density on `[0, ρ]`.
    pub fn sample_user_distance<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        self.radius * rng.random::<f64>().sqrt()
    }
}

/// Shared handle to a fading model.
pub type SharedFading = Arc<dyn FadingModel>;
