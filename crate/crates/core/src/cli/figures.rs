//! CSV tables behind the figures.

use std::path::{Path, PathBuf};

use super::scenario::{self, Scenario};
use super::{CliError, PlacementArg, PolicyArg, SchedulerArg, Sweep, BITS_PER_NAT};
use crate::channel::UserLocation;
use crate::montecarlo::{self, LocationMode, MultiCellConfig, Placement, SimConfig};
use crate::multicell::{self, AverageGrid, PowerMode, PowerPolicy, SchedulerDensity, SweepOptions};
use crate::numerics::{self, TabulatedPdf};
use crate::scheduler::SchedulerSpec;
use crate::singlecell::{CoverageSimulation, SingleCellAnalysis};

/// Radius used for the effective-coverage figure of merit.
pub const COVERAGE_RADIUS_M: f64 = 300.0;

#[derive(Debug, Clone)]
pub struct FigOptions {
    pub seed: Option<u64>,
    pub drops: Option<usize>,
    pub interference_limited: bool,
    pub sigma_sweep: Sweep,
    pub radii: Sweep,
    pub policy: Option<PolicyArg>,
    pub ref_power: Option<f64>,
    pub ref_radius: f64,
}

impl Default for FigOptions {
    fn default() -> Self {
        Self {
            seed: None,
            drops: None,
            interference_limited: false,
            sigma_sweep: Sweep {
                lo: 20.0,
                hi: 1000.0,
                n: 40,
            },
            radii: Sweep {
                lo: 250.0,
                hi: 4000.0,
                n: 16,
            },
            policy: None,
            ref_power: None,
            ref_radius: 4000.0,
        }
    }
}

fn fmt(v: f64) -> String {
    format!("{v}")
}

fn write_table(path: &Path, header: &[String], rows: &[Vec<String>]) -> Result<(), CliError> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(header)?;
    for row in rows {
        w.write_record(row)?;
    }
    w.flush()?;
    Ok(())
}

/// Empirical density on `grid`: counts in cells bounded by grid midpoints
/// (half cells at both ends), divided by sample count and cell width.
pub fn histogram_density(grid: &[f64], samples: &[f64]) -> Vec<f64> {
    let n = grid.len();
    let edges: Vec<f64> = std::iter::once(grid[0])
        .chain(grid.windows(2).map(|w| 0.5 * (w[0] + w[1])))
        .chain(std::iter::once(grid[n - 1]))
        .collect();
    let sorted = numerics::sorted(samples.to_vec());
    let total = sorted.len() as f64;
    (0..n)
        .map(|i| {
            let (lo, hi) = (edges[i], edges[i + 1]);
            let a = sorted.partition_point(|&x| x < lo);
            let b = if i + 1 == n {
                sorted.partition_point(|&x| x <= hi)
            } else {
                sorted.partition_point(|&x| x < hi)
            };
            (b - a) as f64 / (total * (hi - lo))
        })
        .collect()
}

fn simulate(
    s: &Scenario,
    scheduler: SchedulerSpec,
    placement: Placement,
    seed: u64,
    drops: usize,
) -> Result<montecarlo::SingleCellSamples, CliError> {
    Ok(montecarlo::simulate_single_cell(&SimConfig {
        seed,
        num_drops: drops,
        scenario: s.cell.clone(),
        fading: s.fading.clone(),
        scheduler,
        placement,
    })?)
}

fn rate_table(pdf: &TabulatedPdf, empirical: &[Vec<f64>]) -> Vec<Vec<String>> {
    pdf.grid()
        .iter()
        .zip(pdf.values())
        .enumerate()
        .map(|(i, (&r, &f))| {
            let mut row = vec![fmt(r), fmt(r * BITS_PER_NAT), fmt(f)];
            row.extend(empirical.iter().map(|e| fmt(e[i])));
            row
        })
        .collect()
}

fn header(cols: &[&str]) -> Vec<String> {
    cols.iter().map(|c| c.to_string()).collect()
}

/// Writes the CSV file(s) for figure `id` into `out` and returns their paths.
pub fn cmd_fig(
    id: u8,
    scenario_path: &Path,
    out: &Path,
    opts: &FigOptions,
) -> Result<Vec<PathBuf>, CliError> {
    let s = scenario::load(scenario_path)?;
    let seed = opts.seed.unwrap_or(s.seed);
    let drops = opts.drops.unwrap_or(s.drops);
    if drops == 0 {
        return Err(CliError::Input("--drops must be at least 1".into()));
    }
    std::fs::create_dir_all(out)?;
    let analysis = SingleCellAnalysis::new(s.cell.clone(), s.fading.clone(), s.rate_grid.clone())?;
    let mut written = Vec::new();

    match id {
        1 => {
            let pdf = analysis.rate_pdf(SchedulerSpec::RoundRobin)?;
            let mc = simulate(&s, SchedulerSpec::RoundRobin, Placement::Iid, seed, drops)?;
            let path = out.join("fig1.csv");
            write_table(
                &path,
                &header(&["rate_nats", "rate_bits", "pdf_analytic", "pdf_empirical"]),
                &rate_table(&pdf, &[histogram_density(pdf.grid(), &mc.rates)]),
            )?;
            written.push(path);
        }
        2 => {
            let pdf = analysis.rate_pdf(SchedulerSpec::Greedy)?;
            let rings = simulate(
                &s,
                SchedulerSpec::Greedy,
                Placement::ring_population(),
                seed,
                drops,
            )?;
            let iid = simulate(&s, SchedulerSpec::Greedy, Placement::Iid, seed, drops)?;
            let path = out.join("fig2.csv");
            write_table(
                &path,
                &header(&[
                    "rate_nats",
                    "rate_bits",
                    "pdf_analytic",
                    "pdf_empirical",
                    "pdf_empirical_iid",
                ]),
                &rate_table(
                    &pdf,
                    &[
                        histogram_density(pdf.grid(), &rings.rates),
                        histogram_density(pdf.grid(), &iid.rates),
                    ],
                ),
            )?;
            written.push(path);

            let pdf = analysis.rate_pdf(SchedulerSpec::ProportionalFair)?;
            let mc = simulate(
                &s,
                SchedulerSpec::ProportionalFair,
                Placement::Iid,
                seed,
                drops,
            )?;
            let path = out.join("fig2_pf.csv");
            write_table(
                &path,
                &header(&["rate_nats", "rate_bits", "pdf_analytic", "pdf_empirical"]),
                &rate_table(&pdf, &[histogram_density(pdf.grid(), &mc.rates)]),
            )?;
            written.push(path);
        }
        3 => {
            let radius = s.cell.radius();
            let grid = numerics::linspace(0.0, radius, 101);
            let mc = CoverageSimulation {
                seed,
                drops,
                placement: Placement::ring_population(),
            };
            let rr = analysis.effective_coverage_cdf(SchedulerSpec::RoundRobin, &grid, &mc)?;
            let pf =
                analysis.effective_coverage_cdf(SchedulerSpec::ProportionalFair, &grid, &mc)?;
            let greedy = analysis.effective_coverage_cdf(SchedulerSpec::Greedy, &grid, &mc)?;
            let rows: Vec<Vec<String>> = (0..grid.len())
                .map(|i| vec![fmt(grid[i]), fmt(rr[i]), fmt(pf[i]), fmt(greedy[i])])
                .collect();
            let path = out.join("fig3.csv");
            write_table(
                &path,
                &header(&["radius_m", "coverage_rr", "coverage_pf", "coverage_greedy"]),
                &rows,
            )?;
            written.push(path);
        }
        4 => {
            let noise = if opts.interference_limited {
                0.0
            } else {
                s.cell.noise_power()
            };
            let grid = AverageGrid::default();
            let sigmas = opts.sigma_sweep.points();
            let mut rows = Vec::with_capacity(sigmas.len());
            for &sigma in &sigmas {
                let d = SchedulerDensity::for_scenario(sigma, &s.cell)?;
                let v = multicell::cell_average_rate(&s.cell, s.fading.as_ref(), &d, noise, &grid)?;
                rows.push(vec![fmt(sigma), fmt(v), fmt(v * BITS_PER_NAT)]);
            }
            let path = out.join("fig4.csv");
            write_table(
                &path,
                &header(&["sigma_m", "avg_rate", "avg_rate_bits"]),
                &rows,
            )?;
            written.push(path);

            let coverage_radius = COVERAGE_RADIUS_M.min(s.cell.radius());
            let mc = CoverageSimulation {
                seed,
                drops,
                placement: Placement::ring_population(),
            };
            let mut rows = Vec::new();
            for sched in [
                SchedulerSpec::RoundRobin,
                SchedulerSpec::ProportionalFair,
                SchedulerSpec::Greedy,
            ] {
                let target = analysis.average_rate(sched)?;
                let coverage = analysis.effective_coverage_cdf(sched, &[coverage_radius], &mc)?[0];
                let cal = multicell::calibrate_sigma(
                    target,
                    (coverage_radius, coverage),
                    &s.cell,
                    s.fading.as_ref(),
                )?;
                let d = SchedulerDensity::for_scenario(cal.sigma, &s.cell)?;
                let multi =
                    multicell::cell_average_rate(&s.cell, s.fading.as_ref(), &d, noise, &grid)?;
                rows.push(vec![
                    sched.label(),
                    fmt(cal.target_rate),
                    fmt(cal.sigma),
                    fmt(cal.achieved_rate),
                    fmt(cal.coverage_radius),
                    fmt(cal.target_coverage),
                    fmt(cal.achieved_coverage),
                    fmt(multi),
                ]);
            }
            let path = out.join("fig4_calibration.csv");
            write_table(
                &path,
                &header(&[
                    "scheduler",
                    "single_cell_rate_nats",
                    "sigma_m",
                    "calibrated_rate_nats",
                    "coverage_radius_m",
                    "single_cell_coverage",
                    "calibrated_coverage",
                    "multi_cell_rate_nats",
                ]),
                &rows,
            )?;
            written.push(path);
        }
        5 | 6 => {
            let mode = match opts.policy.unwrap_or(if id == 5 {
                PolicyArg::Fixed
            } else {
                PolicyArg::EdgeScaled
            }) {
                PolicyArg::Fixed => PowerMode::Fixed,
                PolicyArg::EdgeScaled => PowerMode::EdgeScaled,
            };
            let reference_power = opts.ref_power.unwrap_or(s.cell.serving().tx_power());
            if !(reference_power > 0.0 && opts.ref_radius > 0.0) {
                return Err(CliError::Input(
                    "--ref-power and --ref-radius must be positive".into(),
                ));
            }
            let policy = PowerPolicy {
                mode,
                reference_power,
                reference_radius: opts.ref_radius,
            };
            let schedulers = [
                SchedulerSpec::RoundRobin,
                SchedulerSpec::ProportionalFair,
                SchedulerSpec::Greedy,
            ];
            let radii = opts.radii.points();
            let options = SweepOptions {
                interference_limited: opts.interference_limited,
                grid: AverageGrid::default(),
            };
            let table = multicell::tradeoff_sweep(
                &radii,
                &schedulers,
                &policy,
                &s.cell,
                &s.fading,
                &options,
            )?;
            let mut cols = vec![
                "radius_m".to_string(),
                "num_users".into(),
                "tx_power_w".into(),
            ];
            for sched in &schedulers {
                let l = sched.label();
                cols.extend([
                    format!("{l}_avg_rate"),
                    format!("{l}_single_avg_rate"),
                    format!("{l}_avg_rate_bits"),
                    format!("{l}_single_avg_rate_bits"),
                    format!("{l}_sigma_m"),
                ]);
            }
            let rows: Vec<Vec<String>> = table
                .chunks(schedulers.len())
                .map(|cells| {
                    let mut row = vec![
                        fmt(cells[0].radius),
                        cells[0].num_users.to_string(),
                        fmt(cells[0].tx_power),
                    ];
                    for c in cells {
                        row.extend([
                            fmt(c.multi_cell_rate),
                            fmt(c.single_cell_rate),
                            fmt(c.multi_cell_rate * BITS_PER_NAT),
                            fmt(c.single_cell_rate * BITS_PER_NAT),
                            fmt(c.sigma),
                        ]);
                    }
                    row
                })
                .collect();
            let path = out.join(format!("fig{id}.csv"));
            write_table(&path, &cols, &rows)?;
            written.push(path);
        }
        other => {
            return Err(CliError::Input(format!(
                "unknown figure {other}; expected 1-6"
            )))
        }
    }
    Ok(written)
}

#[derive(Debug, Clone, Copy)]
pub struct SimulateOptions {
    pub scheduler: SchedulerArg,
    pub placement: PlacementArg,
    pub location: Option<(f64, f64)>,
    pub interference_limited: bool,
    pub seed: Option<u64>,
    pub drops: Option<usize>,
}

pub fn cmd_simulate(
    scenario_path: &Path,
    opts: SimulateOptions,
    out: Option<&Path>,
) -> Result<(), CliError> {
    let s = scenario::load(scenario_path)?;
    let seed = opts.seed.unwrap_or(s.seed);
    let drops = opts.drops.unwrap_or(s.drops);
    if drops == 0 {
        return Err(CliError::Input("--drops must be at least 1".into()));
    }
    let sink: Box<dyn std::io::Write> = match out {
        Some(p) => Box::new(std::fs::File::create(p)?),
        None => Box::new(std::io::stdout().lock()),
    };
    let mut w = csv::Writer::from_writer(sink);

    if let Some((u, v)) = opts.location {
        let noise = if opts.interference_limited {
            0.0
        } else {
            s.cell.noise_power()
        };
        let samples = montecarlo::simulate_multi_cell(&MultiCellConfig {
            seed,
            num_drops: drops,
            scenario: s.cell.clone(),
            fading: s.fading.clone(),
            location: LocationMode::Fixed(UserLocation::new(u, v)),
            noise_power: noise,
        })?;
        w.write_record(["sinr", "interference_w", "rate_nats", "distance_m"])?;
        for i in 0..drops {
            w.write_record([
                fmt(samples.sinr[i]),
                fmt(samples.interference[i]),
                fmt(samples.rates[i]),
                fmt(samples.distances[i]),
            ])?;
        }
    } else {
        let scheduler = match opts.scheduler {
            SchedulerArg::Rr => SchedulerSpec::RoundRobin,
            SchedulerArg::Greedy => SchedulerSpec::Greedy,
            SchedulerArg::Pf => SchedulerSpec::ProportionalFair,
        };
        let placement = match opts.placement {
            PlacementArg::Iid => Placement::Iid,
            PlacementArg::Rings => Placement::ring_population(),
        };
        let samples = simulate(&s, scheduler, placement, seed, drops)?;
        w.write_record(["rate_nats", "distance_m"])?;
        for (r, d) in samples.rates.iter().zip(&samples.distances) {
            w.write_record([fmt(*r), fmt(*d)])?;
        }
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn histogram_integrates_to_covered_fraction() {
        let grid = numerics::linspace(0.0, 1.0, 11);
        let samples: Vec<f64> = (0..1000).map(|i| (i as f64 + 0.5) / 1000.0).collect();
        let h = histogram_density(&grid, &samples);
        let step = 0.1;
        let mass: f64 = step * (h[1..10].iter().sum::<f64>() + 0.5 * (h[0] + h[10]));
        assert!((mass - 1.0).abs() < 1e-12, "{mass}");
        assert!(h.iter().all(|&v| (v - 1.0).abs() < 1e-9));
    }
}
