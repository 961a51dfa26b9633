//! Cheap consistency checks on a scenario.

use std::fmt;
use std::path::Path;

use super::scenario;
use super::CliError;
use crate::channel::UserLocation;
use crate::multicell::{self, InterferenceProfile, SchedulerDensity};
use crate::numerics::{self, QuadSpec};
use crate::scheduler::SchedulerSpec;
use crate::singlecell::SingleCellAnalysis;

/// Emitted densities must integrate to one within this tolerance.
pub const PDF_MASS_TOL: f64 = 1e-3;

#[derive(Debug, Clone, PartialEq)]
pub struct Check {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

impl fmt::Display for Check {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let status = if self.passed { "PASS" } else { "FAIL" };
        write!(f, "{status} {}: {}", self.name, self.detail)
    }
}

fn check(name: impl Into<String>, passed: bool, detail: String) -> Check {
    Check {
        name: name.into(),
        passed,
        detail,
    }
}

fn relative(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs().max(f64::MIN_POSITIVE)
}

fn probe_locations(radius: f64, min_distance: f64) -> Vec<UserLocation> {
    (0..8)
        .map(|k| {
            let frac = 0.1 + 0.11 * k as f64;
            let delta = (frac * radius).max(2.0 * min_distance);
            UserLocation::polar(delta, 0.3 + 0.7 * k as f64)
        })
        .collect()
}

pub fn cmd_validate(scenario_path: &Path) -> Result<Vec<Check>, CliError> {
    let s = scenario::load(scenario_path)?;
    let cell = &s.cell;
    let fading = s.fading.as_ref();
    let mut out = Vec::new();

    let analysis = SingleCellAnalysis::new(cell.clone(), s.fading.clone(), s.rate_grid.clone())?;
    for sched in [
        SchedulerSpec::RoundRobin,
        SchedulerSpec::Greedy,
        SchedulerSpec::ProportionalFair,
    ] {
        let mass = analysis.rate_pdf(sched)?.total_mass();
        out.push(check(
            format!("{} rate pdf mass", sched.label()),
            (mass - 1.0).abs() <= PDF_MASS_TOL,
            format!("{mass:.9}"),
        ));
    }

    if fading.is_exponential() && cell.serving().exponent() == 2.0 {
        let worst = [0.0, 0.5, 2.0, 5.0, 10.0]
            .iter()
            .map(|&r| {
                Ok(relative(
                    analysis.rr_rate_density(r)?,
                    analysis.rr_rate_density_closed_form(r)?,
                ))
            })
            .collect::<Result<Vec<f64>, CliError>>()?
            .into_iter()
            .fold(0.0, f64::max);
        out.push(check(
            "rr closed form vs quadrature",
            worst <= 1e-6,
            format!("max relative difference {worst:.2e}"),
        ));
    }

    let radius = cell.radius();
    let d0 = cell.user_min_distance();
    let quad = QuadSpec::new(1e-13, 1e-11, 2000)?;
    for sigma in [50.0, 500.0, f64::INFINITY] {
        let d = SchedulerDensity::new(sigma, radius, d0)?;
        let mass = numerics::integrate(|x| d.pdf(x), d0, radius, &quad)?;
        out.push(check(
            format!("scheduler density mass (sigma={sigma})"),
            (mass - 1.0).abs() <= 1e-9,
            format!("{mass:.12}"),
        ));
    }

    if fading.is_exponential() {
        let rate_grid = numerics::linspace(0.0, 40.0, 4001);
        let mut worst_sum: f64 = 0.0;
        let mut worst_mass: f64 = 0.0;
        let mut worst_moment: f64 = 0.0;
        for loc in probe_locations(radius, d0) {
            let p = InterferenceProfile::at(cell, fading.mean(), loc)?;
            let sum: f64 = p.coefficients()?.iter().sum();
            worst_sum = worst_sum.max((sum - 1.0).abs());
            let pdf = multicell::rate_pdf_at_rayleigh(&p, cell.noise_power(), &rate_grid)?;
            worst_mass = worst_mass.max((pdf.total_mass() - 1.0).abs());
            let closed = multicell::avg_rate_interference_limited(&p)?;
            let direct = multicell::location_average_rate_rayleigh(
                p.signal_mean(),
                p.mean_interference(),
                0.0,
            )?;
            worst_moment = worst_moment.max(relative(closed, direct));
        }
        out.push(check(
            "hypoexponential coefficient sums",
            worst_sum <= 1e-9,
            format!("max |sum - 1| {worst_sum:.2e}"),
        ));
        out.push(check(
            "location rate pdf mass",
            worst_mass <= PDF_MASS_TOL,
            format!("max |mass - 1| {worst_mass:.2e}"),
        ));
        out.push(check(
            "interference-limited mean vs direct integral",
            worst_moment <= 1e-6,
            format!("max relative difference {worst_moment:.2e}"),
        ));
    }
    Ok(out)
}
