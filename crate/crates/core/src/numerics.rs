//! Numerical building blocks shared by the analytic and simulation paths.
//!
//! Adaptive Gauss-Kronrod quadrature (21-point Kronrod extension of the
//! 10-point Gauss rule), Richardson-extrapolated central differences, Brent
//! root finding, tabulated densities with cumulative integration, and the
//! Kolmogorov-Smirnov distance used to compare simulated samples against
//! analytic densities.

use std::cmp::Ordering;
use std::collections::BinaryHeap;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

/// Default acceptable deviation of a normalized density's mass from 1.
pub const MASS_TOL: f64 = 1e-6;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum NumericsError {
    #[error("quadrature did not converge: estimate {estimate:e}, error {error:e} after {subdivisions} subdivisions")]
    NonConvergence {
        estimate: f64,
        error: f64,
        subdivisions: usize,
    },
    #[error("integrand is not finite at x = {x}")]
    NonFinite { x: f64 },
    #[error("invalid interval [{lo}, {hi}]")]
    InvalidInterval { lo: f64, hi: f64 },
    #[error("no sign change on [{lo}, {hi}]: g(lo) = {g_lo:e}, g(hi) = {g_hi:e}")]
    NoSignChange {
        lo: f64,
        hi: f64,
        g_lo: f64,
        g_hi: f64,
    },
    #[error("difference step at x = {x} with h = {h} leaves the domain (lower bound {lower})")]
    DegenerateStep { x: f64, h: f64, lower: f64 },
    #[error("invalid tabulated density: {0}")]
    InvalidGrid(String),
    #[error("invalid quadrature specification: {0}")]
    InvalidSpec(String),
}

pub type Result<T> = std::result::Result<T, NumericsError>;

/// Tolerances and subdivision budget for adaptive quadrature.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QuadSpec {
    pub abs_tol: f64,
    pub rel_tol: f64,
    pub max_subdivisions: usize,
}

impl Default for QuadSpec {
    fn default() -> Self {
        Self {
            abs_tol: 1e-10,
            rel_tol: 1e-8,
            max_subdivisions: 2000,
        }
    }
}

impl QuadSpec {
    pub fn new(abs_tol: f64, rel_tol: f64, max_subdivisions: usize) -> Result<Self> {
        let spec = Self {
            abs_tol,
            rel_tol,
            max_subdivisions,
        };
        spec.validate()?;
        Ok(spec)
    }

    /// A spec driven by the relative tolerance alone, for integrals whose
    /// magnitude spans many decades (tails of rate densities).
    pub fn relative(rel_tol: f64) -> Self {
        Self {
            abs_tol: f64::MIN_POSITIVE,
            rel_tol,
            max_subdivisions: 2000,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.abs_tol > 0.0 && self.rel_tol > 0.0) {
            return Err(NumericsError::InvalidSpec(format!(
                "tolerances must be positive (abs {}, rel {})",
                self.abs_tol, self.rel_tol
            )));
        }
        if self.max_subdivisions == 0 {
            return Err(NumericsError::InvalidSpec(
                "max_subdivisions must be at least 1".into(),
            ));
        }
        Ok(())
    }

    fn target(&self, result: f64) -> f64 {
        self.abs_tol.max(self.rel_tol * result.abs())
    }
}

// Kronrod abscissae on [0, 1); odd indices are the Gauss-10 nodes.
const XGK: [f64; 11] = [
    0.995_657_163_025_808_080_735_527_280_689_003,
    0.973_906_528_517_171_720_077_964_012_084_452,
    0.930_157_491_355_708_226_001_207_180_059_508,
    0.865_063_366_688_984_510_732_096_688_423_493,
    0.780_817_726_586_416_897_063_717_578_345_042,
    0.679_409_568_299_024_406_234_327_365_114_874,
    0.562_757_134_668_604_683_339_000_099_272_694,
    0.433_395_394_129_247_190_799_265_943_165_784,
    0.294_392_862_701_460_198_131_126_603_103_866,
    0.148_874_338_981_631_210_884_826_001_129_720,
    0.0,
];

const WGK: [f64; 11] = [
    0.011_694_638_867_371_874_278_064_396_062_192,
    0.032_558_162_307_964_727_478_818_972_459_390,
    0.054_755_896_574_351_996_031_381_300_244_580,
    0.075_039_674_810_919_952_767_043_140_916_190,
    0.093_125_454_583_697_605_535_065_465_083_366,
    0.109_387_158_802_297_641_899_210_590_325_805,
    0.123_491_976_262_065_851_077_600_252_633_547,
    0.134_709_217_311_473_325_928_054_001_771_707,
    0.142_775_938_577_060_080_797_094_273_138_717,
    0.147_739_104_901_338_491_374_841_515_972_068,
    0.149_445_554_002_916_905_664_936_468_389_821,
];

const WG: [f64; 5] = [
    0.066_671_344_308_688_137_593_568_809_893_332,
    0.149_451_349_150_580_593_145_776_339_657_697,
    0.219_086_362_515_982_043_995_534_934_228_163,
    0.269_266_719_309_996_355_091_226_921_569_469,
    0.295_524_224_714_752_870_173_892_994_651_338,
];

#[derive(Debug, Clone, Copy)]
struct Segment {
    lo: f64,
    hi: f64,
    value: f64,
    error: f64,
}

impl PartialEq for Segment {
    fn eq(&self, other: &Self) -> bool {
        self.error.total_cmp(&other.error) == Ordering::Equal
    }
}

impl Eq for Segment {}

impl PartialOrd for Segment {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Segment {
    fn cmp(&self, other: &Self) -> Ordering {
        self.error
            .total_cmp(&other.error)
            .then_with(|| other.lo.total_cmp(&self.lo))
    }
}

fn gauss_kronrod_21<F: Fn(f64) -> f64>(f: &F, lo: f64, hi: f64) -> Result<Segment> {
    let center = 0.5 * (lo + hi);
    let half = 0.5 * (hi - lo);
    let eval = |x: f64| -> Result<f64> {
        let y = f(x);
        if y.is_finite() {
            Ok(y)
        } else {
            Err(NumericsError::NonFinite { x })
        }
    };

    let f_center = eval(center)?;
    let mut res_kronrod = f_center * WGK[10];
    let mut res_gauss = 0.0;
    let mut res_abs = (f_center * WGK[10]).abs();
    let mut fv1 = [0.0; 10];
    let mut fv2 = [0.0; 10];

    for k in 0..10 {
        let dx = half * XGK[k];
        let f1 = eval(center - dx)?;
        let f2 = eval(center + dx)?;
        fv1[k] = f1;
        fv2[k] = f2;
        res_kronrod += WGK[k] * (f1 + f2);
        res_abs += WGK[k] * (f1.abs() + f2.abs());
        if k % 2 == 1 {
            res_gauss += WG[k / 2] * (f1 + f2);
        }
    }

    let mean = 0.5 * res_kronrod;
    let mut res_asc = WGK[10] * (f_center - mean).abs();
    for k in 0..10 {
        res_asc += WGK[k] * ((fv1[k] - mean).abs() + (fv2[k] - mean).abs());
    }

    let value = res_kronrod * half;
    let res_abs = res_abs * half.abs();
    let res_asc = res_asc * half.abs();
    let mut error = ((res_kronrod - res_gauss) * half).abs();
    if res_asc != 0.0 && error != 0.0 {
        error = res_asc * (200.0 * error / res_asc).powf(1.5).min(1.0);
    }
    if res_abs > f64::MIN_POSITIVE / (50.0 * f64::EPSILON) {
        error = error.max(50.0 * f64::EPSILON * res_abs);
    }

    Ok(Segment {
        lo,
        hi,
        value,
        error,
    })
}

/// Adaptive quadrature of `f` over `[lo, hi]`.
///
/// The rule never evaluates the endpoints, so integrable endpoint
/// singularities are tolerated.
pub fn integrate<F: Fn(f64) -> f64>(f: F, lo: f64, hi: f64, spec: &QuadSpec) -> Result<f64> {
    integrate_with_breaks(f, lo, hi, &[], spec)
}

/// Like [`integrate`], but seeds the subdivision with the given interior
/// breakpoints. Use this when the integrand's mass sits in a region that is
/// narrow compared with `[lo, hi]` and whose location is known.
pub fn integrate_with_breaks<F: Fn(f64) -> f64>(
    f: F,
    lo: f64,
    hi: f64,
    breaks: &[f64],
    spec: &QuadSpec,
) -> Result<f64> {
    spec.validate()?;
    if !(lo.is_finite() && hi.is_finite() && lo < hi) {
        return Err(NumericsError::InvalidInterval { lo, hi });
    }

    let mut points: Vec<f64> = breaks
        .iter()
        .copied()
        .filter(|b| b.is_finite() && *b > lo && *b < hi)
        .collect();
    points.sort_by(f64::total_cmp);
    points.dedup();

    let mut heap = BinaryHeap::new();
    let mut left = lo;
    for p in points.into_iter().chain(std::iter::once(hi)) {
        if p > left {
            heap.push(gauss_kronrod_21(&f, left, p)?);
            left = p;
        }
    }

    let mut subdivisions = heap.len();
    loop {
        let (value, error) = heap
            .iter()
            .fold((0.0, 0.0), |(v, e), s| (v + s.value, e + s.error));
        if error <= spec.target(value) {
            return Ok(sum_segments(&heap));
        }
        if subdivisions >= spec.max_subdivisions {
            return Err(NumericsError::NonConvergence {
                estimate: value,
                error,
                subdivisions,
            });
        }
        let worst = heap.pop().expect("heap is never empty");
        let mid = 0.5 * (worst.lo + worst.hi);
        if mid <= worst.lo || mid >= worst.hi {
            // Interval can no longer be split in floating point.
            return Err(NumericsError::NonConvergence {
                estimate: value,
                error,
                subdivisions,
            });
        }
        heap.push(gauss_kronrod_21(&f, worst.lo, mid)?);
        heap.push(gauss_kronrod_21(&f, mid, worst.hi)?);
        subdivisions += 1;
    }
}

fn sum_segments(heap: &BinaryHeap<Segment>) -> f64 {
    // Sum in order of position so the result does not depend on heap layout.
    let mut segs: Vec<&Segment> = heap.iter().collect();
    segs.sort_by(|a, b| a.lo.total_cmp(&b.lo));
    segs.iter().map(|s| s.value).sum()
}

/// Integral of `f` over `[lo, inf)`.
///
/// Uses the substitution `x = lo + t / (1 - t)`, `dx = dt / (1 - t)^2`,
/// mapping the half line onto `[0, 1)`.
pub fn integrate_semiinfinite<F: Fn(f64) -> f64>(f: F, lo: f64, spec: &QuadSpec) -> Result<f64> {
    if !lo.is_finite() {
        return Err(NumericsError::InvalidInterval {
            lo,
            hi: f64::INFINITY,
        });
    }
    let mapped = |t: f64| {
        let s = 1.0 - t;
        let x = lo + t / s;
        if x.is_infinite() {
            return 0.0;
        }
        let y = f(x);
        if y == 0.0 {
            0.0
        } else {
            y / (s * s)
        }
    };
    integrate(mapped, 0.0, 1.0, spec)
}

/// Derivative of `f` at `x` by central differences with Richardson
/// extrapolation (Ridders' tableau). `scale` is the initial step.
pub fn differentiate<F: Fn(f64) -> f64>(f: F, x: f64, scale: f64) -> Result<f64> {
    differentiate_above(f, x, scale, f64::NEG_INFINITY)
}

/// [`differentiate`] for a function defined only above `lower`.
pub fn differentiate_above<F: Fn(f64) -> f64>(f: F, x: f64, scale: f64, lower: f64) -> Result<f64> {
    const CON: f64 = 1.4;
    const CON2: f64 = CON * CON;
    const NTAB: usize = 10;
    const SAFE: f64 = 2.0;

    if !(scale > 0.0) {
        return Err(NumericsError::DegenerateStep { x, h: scale, lower });
    }
    let mut h = scale;
    if x - h <= lower {
        return Err(NumericsError::DegenerateStep { x, h, lower });
    }

    let mut a = [[0.0f64; NTAB]; NTAB];
    a[0][0] = (f(x + h) - f(x - h)) / (2.0 * h);
    let mut best = a[0][0];
    let mut err = f64::INFINITY;
    for i in 1..NTAB {
        h /= CON;
        a[0][i] = (f(x + h) - f(x - h)) / (2.0 * h);
        let mut fac = CON2;
        for j in 1..=i {
            a[j][i] = (a[j - 1][i] * fac - a[j - 1][i - 1]) / (fac - 1.0);
            fac *= CON2;
            let errt = (a[j][i] - a[j - 1][i])
                .abs()
                .max((a[j][i] - a[j - 1][i - 1]).abs());
            if errt <= err {
                err = errt;
                best = a[j][i];
            }
        }
        if (a[i][i] - a[i - 1][i - 1]).abs() >= SAFE * err {
            break;
        }
    }
    if best.is_finite() {
        Ok(best)
    } else {
        Err(NumericsError::NonFinite { x })
    }
}

/// Brent's method on a sign-changing bracket.
///
/// Stops when `|g(x)| <= tol` or the bracket is narrower than `tol`.
pub fn find_root<G: Fn(f64) -> f64>(g: G, lo: f64, hi: f64, tol: f64) -> Result<f64> {
    let (mut a, mut b) = (lo, hi);
    let (mut fa, mut fb) = (g(a), g(b));
    if fa == 0.0 {
        return Ok(a);
    }
    if fb == 0.0 {
        return Ok(b);
    }
    if !(fa * fb < 0.0) {
        return Err(NumericsError::NoSignChange {
            lo,
            hi,
            g_lo: fa,
            g_hi: fb,
        });
    }

    let mut c = a;
    let mut fc = fa;
    let mut d = b - a;
    let mut e = d;
    for _ in 0..200 {
        if fb * fc > 0.0 {
            c = a;
            fc = fa;
            d = b - a;
            e = d;
        }
        if fc.abs() < fb.abs() {
            a = b;
            b = c;
            c = a;
            fa = fb;
            fb = fc;
            fc = fa;
        }
        let tol1 = 2.0 * f64::EPSILON * b.abs() + 0.5 * tol;
        let xm = 0.5 * (c - b);
        if xm.abs() <= tol1 || fb.abs() <= tol {
            return Ok(b);
        }
        if e.abs() >= tol1 && fa.abs() > fb.abs() {
            let s = fb / fa;
            let (mut p, mut q);
            if a == c {
                p = 2.0 * xm * s;
                q = 1.0 - s;
            } else {
                let qq = fa / fc;
                let r = fb / fc;
                p = s * (2.0 * xm * qq * (qq - r) - (b - a) * (r - 1.0));
                q = (qq - 1.0) * (r - 1.0) * (s - 1.0);
            }
            if p > 0.0 {
                q = -q;
            }
            p = p.abs();
            let min1 = 3.0 * xm * q - (tol1 * q).abs();
            let min2 = (e * q).abs();
            if 2.0 * p < min1.min(min2) {
                e = d;
                d = p / q;
            } else {
                d = xm;
                e = d;
            }
        } else {
            d = xm;
            e = d;
        }
        a = b;
        fa = fb;
        b += if d.abs() > tol1 { d } else { tol1.copysign(xm) };
        fb = g(b);
    }
    Ok(b)
}

/// Gauss-Legendre nodes and weights on `[-1, 1]`.
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    let mut nodes = vec![0.0; n];
    let mut weights = vec![0.0; n];
    let m = n.div_ceil(2);
    for i in 0..m {
        let mut z = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let mut p1 = 1.0;
            let mut p2 = 0.0;
            for j in 0..n {
                let p3 = p2;
                p2 = p1;
                p1 = ((2 * j + 1) as f64 * z * p2 - j as f64 * p3) / (j + 1) as f64;
            }
            dp = n as f64 * (z * p1 - p2) / (z * z - 1.0);
            let z1 = z;
            z = z1 - p1 / dp;
            if (z - z1).abs() < 1e-15 {
                break;
            }
        }
        nodes[i] = -z;
        nodes[n - 1 - i] = z;
        let w = 2.0 / ((1.0 - z * z) * dp * dp);
        weights[i] = w;
        weights[n - 1 - i] = w;
    }
    (nodes, weights)
}

/// A density evaluated on an increasing grid.
///
/// Cumulative integration uses, on each interval, the quadratic through that
/// interval and its neighbour (a cumulative Simpson rule valid for
/// non-uniform grids).
#[derive(Debug, Clone, PartialEq)]
pub struct TabulatedPdf {
    grid: Vec<f64>,
    values: Vec<f64>,
    cumulative: Vec<f64>,
    total_mass: f64,
}

impl TabulatedPdf {
    pub fn new(grid: Vec<f64>, values: Vec<f64>) -> Result<Self> {
        if grid.len() < 3 {
            return Err(NumericsError::InvalidGrid(
                "need at least three grid points".into(),
            ));
        }
        if grid.len() != values.len() {
            return Err(NumericsError::InvalidGrid(format!(
                "grid has {} points but {} values",
                grid.len(),
                values.len()
            )));
        }
        if grid.windows(2).any(|w| !(w[0] < w[1])) || grid.iter().any(|x| !x.is_finite()) {
            return Err(NumericsError::InvalidGrid(
                "grid must be finite and strictly increasing".into(),
            ));
        }
        if let Some(bad) = values.iter().find(|v| !(v.is_finite() && **v >= 0.0)) {
            return Err(NumericsError::InvalidGrid(format!(
                "density values must be finite and nonnegative (found {bad})"
            )));
        }

        let mut cumulative = Vec::with_capacity(grid.len());
        cumulative.push(0.0);
        let mut acc = 0.0;
        for i in 0..grid.len() - 1 {
            acc += interval_integral(&grid, &values, i, grid[i + 1]);
            cumulative.push(acc);
        }
        Ok(Self {
            grid,
            values,
            cumulative,
            total_mass: acc,
        })
    }

    /// Tabulates `density` on `grid`.
    pub fn from_fn<F>(grid: Vec<f64>, density: F) -> Result<Self>
    where
        F: Fn(f64) -> f64,
    {
        let values = grid.iter().map(|&x| density(x)).collect();
        Self::new(grid, values)
    }

    /// Fallible variant of [`TabulatedPdf::from_fn`].
    pub fn try_from_fn<F, E>(grid: Vec<f64>, density: F) -> std::result::Result<Self, E>
    where
        F: Fn(f64) -> std::result::Result<f64, E>,
        E: From<NumericsError>,
    {
        let values = grid
            .iter()
            .map(|&x| density(x))
            .collect::<std::result::Result<Vec<_>, E>>()?;
        Ok(Self::new(grid, values)?)
    }

    pub fn grid(&self) -> &[f64] {
        &self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn total_mass(&self) -> f64 {
        self.total_mass
    }

    pub fn is_normalized(&self, mass_tol: f64) -> bool {
        (self.total_mass - 1.0).abs() <= mass_tol
    }

    /// Cumulative integral from the first grid point to `x` (unnormalized).
    pub fn cumulative_at(&self, x: f64) -> f64 {
        if x <= self.grid[0] {
            return 0.0;
        }
        let last = self.grid.len() - 1;
        if x >= self.grid[last] {
            return self.total_mass;
        }
        let i = match self.grid.binary_search_by(|g| g.total_cmp(&x)) {
            Ok(i) => return self.cumulative[i],
            Err(i) => i - 1,
        };
        self.cumulative[i] + interval_integral(&self.grid, &self.values, i, x)
    }

    /// CDF at `x`, normalized by the tabulated mass.
    pub fn cdf(&self, x: f64) -> f64 {
        (self.cumulative_at(x) / self.total_mass).clamp(0.0, 1.0)
    }

    /// Cumulative integrals at every grid point.
    pub fn cumulative(&self) -> &[f64] {
        &self.cumulative
    }

    /// Linear interpolation of the density.
    pub fn density_at(&self, x: f64) -> f64 {
        let last = self.grid.len() - 1;
        if x < self.grid[0] || x > self.grid[last] {
            return 0.0;
        }
        match self.grid.binary_search_by(|g| g.total_cmp(&x)) {
            Ok(i) => self.values[i],
            Err(i) => {
                let (x0, x1) = (self.grid[i - 1], self.grid[i]);
                let t = (x - x0) / (x1 - x0);
                self.values[i - 1] * (1.0 - t) + self.values[i] * t
            }
        }
    }

    /// First moment `∫ x f(x) dx` over the grid (unnormalized).
    pub fn first_moment(&self) -> f64 {
        let weighted: Vec<f64> = self
            .grid
            .iter()
            .zip(&self.values)
            .map(|(x, v)| x * v)
            .collect();
        (0..self.grid.len() - 1)
            .map(|i| interval_integral(&self.grid, &weighted, i, self.grid[i + 1]))
            .sum()
    }
}

/// Integral from `grid[i]` to `x <= grid[i + 1]` of the quadratic through
/// three consecutive nodes containing interval `i`.
fn interval_integral(grid: &[f64], values: &[f64], i: usize, x: f64) -> f64 {
    let n = grid.len();
    let j = if i + 2 < n { i } else { i - 1 };
    let (x0, x1, x2) = (grid[j], grid[j + 1], grid[j + 2]);
    let (y0, y1, y2) = (values[j], values[j + 1], values[j + 2]);
    // Newton form: p(t) = y0 + d1 (t - x0) + d2 (t - x0)(t - x1)
    let d1 = (y1 - y0) / (x1 - x0);
    let d2 = ((y2 - y1) / (x2 - x1) - d1) / (x2 - x0);
    let antiderivative = |t: f64| {
        let u = t - x0;
        // ∫ (t-x0)(t-x1) dt = u^3/3 - (x1-x0) u^2/2
        y0 * u + d1 * u * u / 2.0 + d2 * (u * u * u / 3.0 - (x1 - x0) * u * u / 2.0)
    };
    antiderivative(x) - antiderivative(grid[i])
}

/// Kolmogorov-Smirnov distance between the empirical CDF of `samples`
/// (sorted ascending) and the CDF of `analytic`.
///
/// Samples outside the tabulated grid see the CDF clamped to 0 or 1.
pub fn ks_distance(analytic: &TabulatedPdf, samples: &[f64]) -> f64 {
    let n = samples.len() as f64;
    samples.iter().enumerate().fold(0.0f64, |acc, (i, &x)| {
        let f = analytic.cdf(x);
        let above = (i as f64 + 1.0) / n - f;
        let below = f - i as f64 / n;
        acc.max(above).max(below)
    })
}

/// Sorts a sample vector in place (NaNs last) and returns it.
pub fn sorted(mut samples: Vec<f64>) -> Vec<f64> {
    samples.sort_by(f64::total_cmp);
    samples
}

/// Independent random stream for one unit of work (a Monte-Carlo drop),
/// keyed by `(seed, index)`. Streams do not depend on execution order or
/// thread count.
pub fn substream(seed: u64, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index);
    rng
}

/// `n` points evenly spaced on `[lo, hi]`, endpoints included.
pub fn linspace(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    match n {
        0 => vec![],
        1 => vec![lo],
        _ => (0..n)
            .map(|i| lo + (hi - lo) * i as f64 / (n - 1) as f64)
            .collect(),
    }
}

/// `n` points evenly spaced in log on `[lo, hi]`, `lo > 0`.
pub fn logspace(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    linspace(lo.ln(), hi.ln(), n)
        .into_iter()
        .map(f64::exp)
        .collect()
}
