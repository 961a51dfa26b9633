//! Acceptance checks at the reference parameters. Prints one PASS/FAIL line
//! per criterion and exits nonzero if any fails.

use std::path::Path;
use std::process::{Command, ExitCode};
use std::sync::Arc;
use std::time::Instant;

use rand::Rng;

use cellrate::channel::{
    CellScenario, PathlossParams, RayleighPowerFading, SharedFading, UserLocation,
};
use cellrate::montecarlo::{self, LocationMode, MultiCellConfig, Placement, SimConfig};
use cellrate::multicell::{
    self, AverageGrid, HypoexponentialDensity, InterferenceProfile, PowerMode, PowerPolicy,
    SchedulerDensity, SweepOptions,
};
use cellrate::numerics;
use cellrate::scheduler::SchedulerSpec;
use cellrate::singlecell::{self, SingleCellAnalysis};

const RADIUS: f64 = 1000.0;
const USERS: usize = 100;
const NOISE: f64 = 1e-14;
const SEED: u64 = 20_240_601;

// Criterion tolerances.
const C1_REL_TOL: f64 = 1e-6;
const C1_POINTS: usize = 200;
const C1_MAX_SECS: f64 = 5.0;
const C2_DROPS: usize = 1_000_000;
const C2_KS_MAX: f64 = 0.005;
const C2_MAX_SECS: f64 = 60.0;
const C3_SLOPE_REL_TOL: f64 = 0.02;
const C3_TAIL_REL_TOL: f64 = 0.02;
const C4_REL_TOL: f64 = 0.05;
const C5_COVERAGE_RADIUS: f64 = 300.0;
const C5_TARGET: f64 = 0.994;
const C5_TOL: f64 = 0.005;
const C5_AREA: f64 = 0.09;
const C6_INSTANCES: usize = 1000;
const C6_SUM_TOL: f64 = 1e-9;
const C6_GRID: usize = 1000;
const C6_ORACLE_REL_TOL: f64 = 1e-6;
const C7_LOCATIONS: usize = 20;
const C7_REL_TOL: f64 = 1e-6;
const C7_MC_DRAWS: usize = 1_000_000;
const C7_MC_REL_TOL: f64 = 0.005;
const C8_GREEDY_SIGMA: (f64, f64) = (52.9, 64.7);
const C8_PF_SIGMA: (f64, f64) = (340.8, 416.5);
const C8_SWEEP: usize = 20;
const C9_RADII: [f64; 4] = [500.0, 1000.0, 2000.0, 4000.0];
const C9_MAX_SECS: f64 = 600.0;
const C10_DROPS: &str = "20000";

struct Outcome {
    passed: bool,
    detail: String,
}

fn outcome(passed: bool, detail: String) -> Outcome {
    Outcome { passed, detail }
}

fn scenario() -> CellScenario {
    let p = PathlossParams::new(2.0, -80.0, 1.0, 1.0).unwrap();
    CellScenario::symmetric(RADIUS, USERS, p, NOISE).unwrap()
}

fn fading() -> SharedFading {
    Arc::new(RayleighPowerFading::default())
}

fn analysis(grid: Vec<f64>) -> SingleCellAnalysis {
    SingleCellAnalysis::new(scenario(), fading(), grid).unwrap()
}

fn rel(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs()
}

fn criterion_1() -> Outcome {
    let start = Instant::now();
    let grid = numerics::linspace(0.0, 30.0, C1_POINTS);
    let a = analysis(grid);
    let generic = a.rr_rate_pdf().unwrap();
    let closed = a.rr_rate_pdf_closed_form().unwrap();
    let worst = generic
        .values()
        .iter()
        .zip(closed.values())
        .map(|(g, c)| rel(*g, *c))
        .fold(0.0, f64::max);
    let secs = start.elapsed().as_secs_f64();
    outcome(
        worst <= C1_REL_TOL && secs < C1_MAX_SECS,
        format!("max relative difference {worst:.2e} over {C1_POINTS} rates, {secs:.2}s"),
    )
}

fn simulate(scheduler: SchedulerSpec, placement: Placement) -> montecarlo::SingleCellSamples {
    montecarlo::simulate_single_cell(&SimConfig {
        seed: SEED,
        num_drops: C2_DROPS,
        scenario: scenario(),
        fading: fading(),
        scheduler,
        placement,
    })
    .unwrap()
}

/// Returns the outcome and the greedy served distances for criterion 5.
fn criterion_2() -> (Outcome, Vec<f64>) {
    let a = analysis(singlecell::default_rate_grid());
    let mut passed = true;
    let mut parts = Vec::new();
    let mut greedy_distances = Vec::new();
    for (sched, placement) in [
        (SchedulerSpec::RoundRobin, Placement::Iid),
        (SchedulerSpec::Greedy, Placement::ring_population()),
        (SchedulerSpec::ProportionalFair, Placement::Iid),
    ] {
        let start = Instant::now();
        let pdf = a.rate_pdf(sched).unwrap();
        let samples = simulate(sched, placement);
        let ks = numerics::ks_distance(&pdf, &numerics::sorted(samples.rates));
        let secs = start.elapsed().as_secs_f64();
        passed &= ks < C2_KS_MAX && secs < C2_MAX_SECS;
        parts.push(format!("{} KS {ks:.5} ({secs:.1}s)", sched.label()));
        if sched == SchedulerSpec::Greedy {
            greedy_distances = samples.distances;
        }
    }
    // Diagnostic only: literal iid placement against the same pdf.
    let pdf = a.greedy_rate_pdf().unwrap();
    let iid = simulate(SchedulerSpec::Greedy, Placement::Iid);
    let ks_iid = numerics::ks_distance(&pdf, &numerics::sorted(iid.rates));
    parts.push(format!("[greedy iid-placement KS {ks_iid:.4}, not scored]"));
    (outcome(passed, parts.join(", ")), greedy_distances)
}

fn least_squares_slope(x: &[f64], y: &[f64]) -> f64 {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = x.iter().map(|a| (a - mx) * (a - mx)).sum();
    sxy / sxx
}

fn criterion_3() -> Outcome {
    let grid = singlecell::default_rate_grid();
    let a = analysis(grid.clone());
    // Smallest decade of the grid: [step, 10·step].
    let step = grid[1] - grid[0];
    let rates = numerics::logspace(step, 10.0 * step, 41);
    let log_r: Vec<f64> = rates.iter().map(|r| r.ln()).collect();
    let log_f: Vec<f64> = rates
        .iter()
        .map(|&r| a.greedy_rate_log_density(r).unwrap())
        .collect();
    let slope = least_squares_slope(&log_r, &log_f);
    let expected_slope = USERS as f64 - 1.0;
    let slope_ok = rel(slope, expected_slope) <= C3_SLOPE_REL_TOL;

    let r_max = *grid.last().unwrap();
    let xi_prime = scenario().snr_composite();
    let expected_tail = USERS as f64 * xi_prime / (RADIUS * RADIUS);
    let tail = (a.greedy_rate_log_density(r_max).unwrap() + r_max).exp();
    let tail_ok = rel(tail, expected_tail) <= C3_TAIL_REL_TOL;
    outcome(
        slope_ok && tail_ok,
        format!(
            "slope {slope:.3} (target {expected_slope}), f(r)e^r at r={r_max} is {tail:.3} (target {expected_tail})"
        ),
    )
}

fn criterion_4() -> Outcome {
    let grid = singlecell::default_rate_grid();
    let a = analysis(grid.clone());
    let mut ratios = Vec::new();
    for &r in &[20.0, 25.0, 30.0] {
        let g = a.greedy_rate_log_density(r).unwrap();
        let rr = a.rr_rate_density_closed_form(r).unwrap().ln();
        ratios.push((g - rr).exp());
    }
    let last = *ratios.last().unwrap();
    outcome(
        rel(last, USERS as f64) <= C4_REL_TOL,
        format!(
            "greedy/rr pdf ratio at r = 20, 25, 30: {:.2}, {:.2}, {:.2} (target {USERS})",
            ratios[0], ratios[1], ratios[2]
        ),
    )
}

fn criterion_5(greedy_distances: &[f64]) -> Outcome {
    let within = greedy_distances
        .iter()
        .filter(|&&d| d <= C5_COVERAGE_RADIUS)
        .count();
    let fraction = within as f64 / greedy_distances.len() as f64;
    let area = singlecell::area_fraction(C5_COVERAGE_RADIUS, RADIUS);
    outcome(
        (fraction - C5_TARGET).abs() <= C5_TOL && (area - C5_AREA).abs() <= f64::EPSILON * C5_AREA,
        format!("greedy served fraction within {C5_COVERAGE_RADIUS} m {fraction:.4}, area fraction {area}"),
    )
}

/// Six means log-uniform in [1e-3, 1] with pairwise relative separation of
/// at least 1%.
fn random_means(rng: &mut impl Rng) -> Vec<f64> {
    loop {
        let means: Vec<f64> = (0..6)
            .map(|_| 10f64.powf(-3.0 * rng.random::<f64>()))
            .collect();
        let separated = (0..6).all(|i| {
            (i + 1..6).all(|j| (means[i] - means[j]).abs() / means[i].max(means[j]) >= 0.01)
        });
        if separated {
            return means;
        }
    }
}

/// Density of the sum of exponentials by integrating the convolution chain
/// `f_k' = (f_{k−1} − f_k)/m_k`, `f_1 = e^{−x/m_1}/m_1`, with classical RK4.
fn convolution_chain_pdf(means: &[f64], x_max: f64, steps: usize) -> Vec<(f64, f64)> {
    let h = x_max / steps as f64;
    let n = means.len();
    let first = |x: f64| (-x / means[0]).exp() / means[0];
    let deriv = |x: f64, f: &[f64]| -> Vec<f64> {
        (1..n)
            .map(|k| {
                let prev = if k == 1 { first(x) } else { f[k - 2] };
                (prev - f[k - 1]) / means[k]
            })
            .collect()
    };
    let mut f = vec![0.0; n - 1];
    let mut out = Vec::with_capacity(steps + 1);
    out.push((0.0, f[n - 2]));
    for i in 0..steps {
        let x = i as f64 * h;
        let k1 = deriv(x, &f);
        let y2: Vec<f64> = f.iter().zip(&k1).map(|(a, k)| a + 0.5 * h * k).collect();
        let k2 = deriv(x + 0.5 * h, &y2);
        let y3: Vec<f64> = f.iter().zip(&k2).map(|(a, k)| a + 0.5 * h * k).collect();
        let k3 = deriv(x + 0.5 * h, &y3);
        let y4: Vec<f64> = f.iter().zip(&k3).map(|(a, k)| a + h * k).collect();
        let k4 = deriv(x + h, &y4);
        for j in 0..n - 1 {
            f[j] += h / 6.0 * (k1[j] + 2.0 * k2[j] + 2.0 * k3[j] + k4[j]);
        }
        out.push((x + h, f[n - 2]));
    }
    out
}

fn criterion_6() -> Outcome {
    let mut rng = numerics::substream(SEED, 6);
    let mut worst_sum: f64 = 0.0;
    let mut negatives = 0usize;
    let mut min_scaled = f64::INFINITY;
    for _ in 0..C6_INSTANCES {
        let means = random_means(&mut rng);
        let h = HypoexponentialDensity::new(&means).unwrap();
        let sum: f64 = h.coefficients().iter().sum();
        worst_sum = worst_sum.max((sum - 1.0).abs());
        let upper = 20.0 * h.mean();
        for &eta in numerics::linspace(0.0, upper, C6_GRID).iter() {
            let v = h.pdf(eta);
            // Roundoff bound of the partial-fraction sum at this point.
            let bound: f64 = 8.0
                * f64::EPSILON
                * h.coefficients()
                    .iter()
                    .zip(h.means())
                    .map(|(c, m)| (c / m).abs() * (-eta / m).exp())
                    .sum::<f64>();
            if v < -bound {
                negatives += 1;
            }
            if v < 0.0 {
                min_scaled = min_scaled.min(v / bound);
            }
        }
    }

    // Convolution oracle at interference means of an actual location.
    let profile =
        InterferenceProfile::at(&scenario(), 1.0, UserLocation::polar(400.0, 0.2)).unwrap();
    let means = profile.mean_interference().to_vec();
    let h = profile.hypoexponential().unwrap();
    let x_max = 6.0 * h.mean();
    let chain = convolution_chain_pdf(&means, x_max, 200_000);
    let mut worst_oracle: f64 = 0.0;
    for k in 1..=10 {
        let (x, oracle) = chain[k * 20_000 - 10_000];
        worst_oracle = worst_oracle.max(rel(h.pdf(x), oracle));
    }
    let negative_note = if min_scaled.is_finite() {
        format!(", most negative value {min_scaled:.2} x roundoff bound")
    } else {
        String::new()
    };
    outcome(
        worst_sum <= C6_SUM_TOL && negatives == 0 && worst_oracle <= C6_ORACLE_REL_TOL,
        format!(
            "max |sum C - 1| {worst_sum:.2e}, {negatives} values below roundoff{negative_note}, convolution oracle max rel {worst_oracle:.2e}"
        ),
    )
}

fn criterion_7() -> Outcome {
    let s = scenario();
    let mut rng = numerics::substream(SEED, 7);
    let mut worst: f64 = 0.0;
    for _ in 0..C7_LOCATIONS {
        let loc = loop {
            let delta = RADIUS * rng.random::<f64>().sqrt();
            if delta >= s.user_min_distance() {
                break UserLocation::polar(delta, std::f64::consts::TAU * rng.random::<f64>());
            }
        };
        let p = InterferenceProfile::at(&s, 1.0, loc).unwrap();
        let closed = multicell::avg_rate_interference_limited(&p).unwrap();
        let moment = multicell::rate_pdf_mean_rayleigh(&p, 0.0).unwrap();
        worst = worst.max(rel(closed, moment));
    }

    let loc = UserLocation::polar(500.0, 0.4);
    let p = InterferenceProfile::at(&s, 1.0, loc).unwrap();
    let closed = multicell::avg_rate_interference_limited(&p).unwrap();
    let samples = montecarlo::simulate_multi_cell(&MultiCellConfig {
        seed: SEED,
        num_drops: C7_MC_DRAWS,
        scenario: s,
        fading: fading(),
        location: LocationMode::Fixed(p.location()),
        noise_power: 0.0,
    })
    .unwrap();
    let mc = samples.rates.iter().sum::<f64>() / samples.rates.len() as f64;
    let mc_rel = rel(mc, closed);
    outcome(
        worst <= C7_REL_TOL && mc_rel <= C7_MC_REL_TOL,
        format!(
            "closed form vs pdf moment max rel {worst:.2e} over {C7_LOCATIONS} locations; MC mean {mc:.5} vs {closed:.5} (rel {mc_rel:.2e})"
        ),
    )
}

fn criterion_8() -> Outcome {
    let s = scenario();
    let f = fading();
    let a = analysis(singlecell::default_rate_grid());
    let greedy_target = a.average_rate(SchedulerSpec::Greedy).unwrap();
    let pf_target = a.average_rate(SchedulerSpec::ProportionalFair).unwrap();
    let greedy = multicell::calibrate_sigma(greedy_target, (300.0, 0.994), &s, f.as_ref()).unwrap();
    let pf = multicell::calibrate_sigma(pf_target, (300.0, 0.09), &s, f.as_ref()).unwrap();
    let in_band = |v: f64, (lo, hi): (f64, f64)| v >= lo && v <= hi;

    let sigmas = numerics::linspace(20.0, 1000.0, C8_SWEEP);
    let grid = AverageGrid::default();
    let rates: Vec<f64> = sigmas
        .iter()
        .map(|&sigma| {
            let d = SchedulerDensity::for_scenario(sigma, &s).unwrap();
            multicell::cell_average_rate(&s, f.as_ref(), &d, NOISE, &grid).unwrap()
        })
        .collect();
    let monotone = rates.windows(2).all(|w| w[1] <= w[0]);
    outcome(
        in_band(greedy.sigma, C8_GREEDY_SIGMA) && in_band(pf.sigma, C8_PF_SIGMA) && monotone,
        format!(
            "greedy sigma {:.2} m (band {:?}, single-cell rate {greedy_target:.4}), pf sigma {:.2} m (band {:?}, rate {pf_target:.4}), sweep nonincreasing: {monotone} ({:.4} .. {:.4})",
            greedy.sigma,
            C8_GREEDY_SIGMA,
            pf.sigma,
            C8_PF_SIGMA,
            rates[0],
            rates[rates.len() - 1]
        ),
    )
}

fn criterion_9() -> Outcome {
    let start = Instant::now();
    let template = scenario();
    let f = fading();
    let schedulers = [
        SchedulerSpec::RoundRobin,
        SchedulerSpec::ProportionalFair,
        SchedulerSpec::Greedy,
    ];
    let options = SweepOptions::default();
    let fixed = PowerPolicy {
        mode: PowerMode::Fixed,
        reference_power: 1.0,
        reference_radius: RADIUS,
    };
    let rows =
        multicell::tradeoff_sweep(&C9_RADII, &schedulers, &fixed, &template, &f, &options).unwrap();
    let bounded = rows.iter().all(|r| r.multi_cell_rate <= r.single_cell_rate);
    let rr_gaps: Vec<f64> = rows
        .iter()
        .filter(|r| r.scheduler == SchedulerSpec::RoundRobin)
        .map(|r| r.ici_gap())
        .collect();
    let gap_growing = rr_gaps.windows(2).all(|w| w[1] > w[0]);

    let scaled = PowerPolicy {
        mode: PowerMode::EdgeScaled,
        reference_power: 1.0,
        reference_radius: 4000.0,
    };
    let radii = numerics::linspace(250.0, 4000.0, 16);
    let rows = multicell::tradeoff_sweep(
        &radii,
        &[SchedulerSpec::Greedy],
        &scaled,
        &template,
        &f,
        &options,
    )
    .unwrap();
    let greedy: Vec<f64> = rows.iter().map(|r| r.multi_cell_rate).collect();
    let greedy_up = greedy.windows(2).all(|w| w[1] >= w[0]);
    let secs = start.elapsed().as_secs_f64();
    outcome(
        bounded && gap_growing && greedy_up && secs < C9_MAX_SECS,
        format!(
            "fixed: multi <= single everywhere: {bounded}; rr gap at {:?} m: {:.4?} (increasing: {gap_growing}); edge-scaled greedy nondecreasing: {greedy_up} ({:.3} .. {:.3}); {secs:.1}s",
            C9_RADII,
            rr_gaps,
            greedy[0],
            greedy[greedy.len() - 1]
        ),
    )
}

fn run_fig(args: &[&str], out: &Path) -> Vec<(String, Vec<u8>)> {
    let scenario = concat!(env!("CARGO_MANIFEST_DIR"), "/scenarios/paper.scenario");
    let status = Command::new(env!("CARGO_BIN_EXE_cellrate"))
        .arg("fig")
        .args(&args[..1])
        .arg(scenario)
        .args(&args[1..])
        .arg("--out")
        .arg(out)
        .args(["--drops", C10_DROPS, "--seed", "11"])
        .output()
        .expect("run cellrate");
    assert!(
        status.status.success(),
        "{}",
        String::from_utf8_lossy(&status.stderr)
    );
    let mut files: Vec<(String, Vec<u8>)> = std::fs::read_dir(out)
        .unwrap()
        .map(|e| {
            let e = e.unwrap();
            (
                e.file_name().to_string_lossy().into_owned(),
                std::fs::read(e.path()).unwrap(),
            )
        })
        .collect();
    files.sort();
    files
}

fn criterion_10() -> Outcome {
    let commands: [&[&str]; 6] = [
        &["1"],
        &["2"],
        &["3"],
        &["4", "--sigma-sweep", "20:1000:5"],
        &["5", "--radii", "500:2000:4"],
        &[
            "6",
            "--radii",
            "250:4000:4",
            "--policy",
            "edge-scaled",
            "--ref-power",
            "1",
            "--ref-radius",
            "4000",
        ],
    ];
    let mut identical = 0;
    for args in commands {
        let a = tempfile::tempdir().unwrap();
        let b = tempfile::tempdir().unwrap();
        let first = run_fig(args, a.path());
        let second = run_fig(args, b.path());
        if !first.is_empty() && first == second {
            identical += 1;
        }
    }
    outcome(
        identical == commands.len(),
        format!(
            "{identical}/{} fig commands byte-identical across two runs",
            commands.len()
        ),
    )
}

fn main() -> ExitCode {
    let mut results: Vec<(usize, Outcome)> = Vec::new();
    let mut report = |n: usize, o: Outcome| {
        let status = if o.passed { "PASS" } else { "FAIL" };
        println!("criterion {n:>2}: {status}  {}", o.detail);
        results.push((n, o));
    };
    report(1, criterion_1());
    let (c2, greedy_distances) = criterion_2();
    report(2, c2);
    report(3, criterion_3());
    report(4, criterion_4());
    report(5, criterion_5(&greedy_distances));
    report(6, criterion_6());
    report(7, criterion_7());
    report(8, criterion_8());
    report(9, criterion_9());
    report(10, criterion_10());

    let failed: Vec<usize> = results
        .iter()
        .filter(|(_, o)| !o.passed)
        .map(|(n, _)| *n)
        .collect();
    println!(
        "acceptance: {} passed, {} failed{}",
        results.len() - failed.len(),
        failed.len(),
        if failed.is_empty() {
            String::new()
        } else {
            format!(" ({failed:?})")
        }
    );
    if failed.is_empty() {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
