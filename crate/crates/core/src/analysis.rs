//! Convergence factors of single-step and two-step parareal iterations.
//!
//! For a two-step coarse propagator `(R1, R2)` the characteristic roots
//! `rho1, rho2` solve `z^2 - R2(s) z - R1(s) = 0`. The bounds
//!
//! ```text
//! gamma_c = |r(2s/J)^J - R2 r(2s/J)^(J/2) - R1| / ((1 - |rho1|)(1 - |rho2|))
//! kappa_c = |r(2s/J)^J - R2 r(2s/J)^(J/2) - R1| / |rho1 - rho2|
//!           * sum_{m=1}^{2 N_c + 1} |rho2^m - rho1^m|
//! ```
//!
//! and their exact-fine-propagator limits `gamma_e`, `kappa_e` (powers of `r`
//! replaced by `e^{-2s}`, `e^{-s}`) are evaluated pointwise and maximized
//! over a [`SpectralGrid`].

use std::f64::consts::PI;
use std::io::Write;

use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::propagators::TwoStepScheme;
use crate::rational::{quadratic_roots, RationalFunction};

/// Root moduli at or above `1 - STABILITY_MARGIN` are treated as unstable.
pub const STABILITY_MARGIN: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Spacing {
    Uniform,
    Log,
    Composite,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridDescription {
    pub s_min: f64,
    pub s_max: f64,
    pub count: usize,
    pub spacing: Spacing,
}

/// Strictly increasing set of positive sample points.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpectralGrid {
    samples: Vec<f64>,
    description: GridDescription,
}

impl SpectralGrid {
    fn from_samples(samples: Vec<f64>, spacing: Spacing) -> Result<Self> {
        if samples.is_empty() {
            return Err(Error::InvalidArgument("grid must not be empty".into()));
        }
        if samples[0] <= 0.0 || samples.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::InvalidArgument(
                "grid samples must be positive and strictly increasing".into(),
            ));
        }
        let description = GridDescription {
            s_min: samples[0],
            s_max: *samples.last().unwrap(),
            count: samples.len(),
            spacing,
        };
        Ok(Self {
            samples,
            description,
        })
    }

    /// `count` equispaced points from `s_min` to `s_max` inclusive.
    pub fn uniform(s_min: f64, s_max: f64, count: usize) -> Result<Self> {
        let samples = match count {
            0 => Vec::new(),
            1 => vec![s_min],
            _ => {
                let h = (s_max - s_min) / (count - 1) as f64;
                (0..count).map(|k| s_min + h * k as f64).collect()
            }
        };
        Self::from_samples(samples, Spacing::Uniform)
    }

    /// `count` log-spaced points from `s_min` to `s_max` inclusive.
    pub fn log(s_min: f64, s_max: f64, count: usize) -> Result<Self> {
        if s_min <= 0.0 {
            return Err(Error::InvalidArgument("log grid needs s_min > 0".into()));
        }
        let (a, b) = (s_min.ln(), s_max.ln());
        let samples = match count {
            0 => Vec::new(),
            1 => vec![s_min],
            _ => (0..count)
                .map(|k| (a + (b - a) * k as f64 / (count - 1) as f64).exp())
                .collect(),
        };
        Self::from_samples(samples, Spacing::Log)
    }

    /// Union of several grids; points closer than `1e-12` relative collapse.
    pub fn composite(parts: &[SpectralGrid]) -> Result<Self> {
        let mut all: Vec<f64> = parts.iter().flat_map(|g| g.samples.iter().copied()).collect();
        all.sort_by(f64::total_cmp);
        all.dedup_by(|b, a| (*b - *a).abs() <= 1e-12 * a.abs());
        Self::from_samples(all, Spacing::Composite)
    }

    /// 2000 uniform points on `[0.01, 20]` followed by 200 log-spaced
    /// points on `(20, 1e4]`.
    pub fn default_grid() -> Self {
        let uniform = Self::uniform(0.01, 20.0, 2000).expect("valid grid");
        let tail = Self::log(20.0, 1e4, 201).expect("valid grid");
        let tail = Self::from_samples(tail.samples[1..].to_vec(), Spacing::Log).expect("valid grid");
        Self::composite(&[uniform, tail]).expect("valid grid")
    }

    pub fn samples(&self) -> &[f64] {
        &self.samples
    }

    pub fn description(&self) -> &GridDescription {
        &self.description
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }
}

impl Default for SpectralGrid {
    fn default() -> Self {
        Self::default_grid()
    }
}

/// Serializable recipe for a [`SpectralGrid`].
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum GridSpec {
    #[default]
    Default,
    Uniform {
        s_min: f64,
        s_max: f64,
        count: usize,
    },
    Log {
        s_min: f64,
        s_max: f64,
        count: usize,
    },
}

impl GridSpec {
    pub fn build(&self) -> Result<SpectralGrid> {
        match *self {
            GridSpec::Default => Ok(SpectralGrid::default_grid()),
            GridSpec::Uniform {
                s_min,
                s_max,
                count,
            } => SpectralGrid::uniform(s_min, s_max, count),
            GridSpec::Log {
                s_min,
                s_max,
                count,
            } => SpectralGrid::log(s_min, s_max, count),
        }
    }
}

/// Factor values sampled on a grid together with their maximum.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FactorCurve {
    pub grid: SpectralGrid,
    /// `NaN` where evaluation hit a pole.
    pub values: Vec<f64>,
    pub sup: f64,
    pub argmax: f64,
    /// Sample points skipped because of a pole.
    pub failures: Vec<f64>,
}

impl FactorCurve {
    /// True if the maximum sits on the last grid sample.
    pub fn argmax_at_boundary(&self) -> bool {
        self.argmax == self.grid.description.s_max
    }

    /// Writes `s,value` rows with a header.
    pub fn write_csv(&self, mut w: impl Write) -> std::io::Result<()> {
        writeln!(w, "s,value")?;
        for (s, v) in self.grid.samples.iter().zip(&self.values) {
            writeln!(w, "{s},{v}")?;
        }
        Ok(())
    }
}

/// Evaluates `f` on every grid sample (in parallel) and takes the maximum.
///
/// Poles are skipped and recorded; any other error aborts the sweep.
pub fn sup_over_grid<F>(f: F, grid: &SpectralGrid) -> Result<FactorCurve>
where
    F: Fn(f64) -> Result<f64> + Sync,
{
    let evaluated: Vec<Result<f64>> = grid.samples.par_iter().map(|&s| f(s)).collect();
    let mut values = Vec::with_capacity(grid.len());
    let mut failures = Vec::new();
    let mut best: Option<(f64, f64)> = None;
    for (&s, r) in grid.samples.iter().zip(evaluated) {
        match r {
            Ok(v) => {
                if best.is_none_or(|(b, _)| v > b) {
                    best = Some((v, s));
                }
                values.push(v);
            }
            Err(Error::Pole { .. }) => {
                failures.push(s);
                values.push(f64::NAN);
            }
            Err(e) => return Err(e),
        }
    }
    let (sup, argmax) = best.ok_or(Error::AllPointsFailed {
        failures: failures.len(),
    })?;
    let curve = FactorCurve {
        grid: grid.clone(),
        values,
        sup,
        argmax,
        failures,
    };
    if curve.argmax_at_boundary() {
        log::warn!("supremum attained at the last grid sample s = {argmax}");
    }
    Ok(curve)
}

/// Characteristic roots of the coarse error recursion at `s`.
pub fn rho_pair(ts: &TwoStepScheme, s: f64) -> Result<(Complex64, Complex64)> {
    rho_pair_complex(ts, Complex64::new(s, 0.0))
}

pub fn rho_pair_complex(ts: &TwoStepScheme, z: Complex64) -> Result<(Complex64, Complex64)> {
    let r1 = ts.r1.eval_complex(z)?;
    let r2 = ts.r2.eval_complex(z)?;
    Ok(quadratic_roots(r2, r1))
}

/// What the coarse propagator is compared against: the exact flow or `J`
/// steps of a fine propagator with stability function `r`.
#[derive(Debug, Clone, Copy)]
enum Reference<'a> {
    Exact,
    Fine { r: &'a RationalFunction, j: u32 },
}

struct Defect {
    value: Complex64,
    rho1: Complex64,
    rho2: Complex64,
}

fn defect(ts: &TwoStepScheme, reference: Reference, z: Complex64) -> Result<Defect> {
    let r1 = ts.r1.eval_complex(z)?;
    let r2 = ts.r2.eval_complex(z)?;
    let (full, half) = match reference {
        Reference::Exact => ((-2.0 * z).exp(), (-z).exp()),
        Reference::Fine { r, j } => {
            let x = r.eval_complex(z * (2.0 / j as f64))?;
            let half = x.powu(j / 2);
            (half * half, half)
        }
    };
    let (rho1, rho2) = quadratic_roots(r2, r1);
    Ok(Defect {
        value: full - r2 * half - r1,
        rho1,
        rho2,
    })
}

fn check_stable(s: f64, rho1: Complex64, rho2: Complex64) -> Result<()> {
    let m = rho1.norm().max(rho2.norm());
    if m >= 1.0 - STABILITY_MARGIN {
        return Err(Error::UnstableScheme { s, modulus: m });
    }
    Ok(())
}

fn check_even(j: u32) -> Result<()> {
    if j == 0 || !j.is_multiple_of(2) {
        return Err(Error::InvalidArgument(format!(
            "coarsening factor must be a positive even integer, got {j}"
        )));
    }
    Ok(())
}

fn gamma_from(d: &Defect, s: f64) -> Result<f64> {
    check_stable(s, d.rho1, d.rho2)?;
    Ok(d.value.norm() / ((1.0 - d.rho1.norm()) * (1.0 - d.rho2.norm())))
}

/// `sum_{m=1}^{2 nc + 1} |(rho2^m - rho1^m) / (rho2 - rho1)|`.
///
/// The quotient `h_m` is generated by `h_1 = 1`, `h_{m+1} = rho2^m + rho1 h_m`,
/// which needs no division and reduces to `m rho^(m-1)` for a double root.
pub fn root_power_sum(rho1: Complex64, rho2: Complex64, nc: u32) -> f64 {
    let mut h = Complex64::new(1.0, 0.0);
    let mut p2 = Complex64::new(1.0, 0.0);
    let mut total = 0.0;
    for _ in 0..=(2 * nc) {
        total += h.norm();
        p2 *= rho2;
        h = p2 + rho1 * h;
    }
    total
}

fn kappa_from(d: &Defect, s: f64, nc: u32) -> Result<f64> {
    if nc == 0 {
        return Err(Error::InvalidArgument("N_c must be at least 1".into()));
    }
    check_stable(s, d.rho1, d.rho2)?;
    Ok(d.value.norm() * root_power_sum(d.rho1, d.rho2, nc))
}

pub fn gamma_c(r: &RationalFunction, ts: &TwoStepScheme, j: u32, s: f64) -> Result<f64> {
    check_even(j)?;
    let d = defect(ts, Reference::Fine { r, j }, Complex64::new(s, 0.0))?;
    gamma_from(&d, s)
}

pub fn gamma_e(ts: &TwoStepScheme, s: f64) -> Result<f64> {
    let d = defect(ts, Reference::Exact, Complex64::new(s, 0.0))?;
    gamma_from(&d, s)
}

pub fn kappa_c(r: &RationalFunction, ts: &TwoStepScheme, j: u32, s: f64, nc: u32) -> Result<f64> {
    check_even(j)?;
    let d = defect(ts, Reference::Fine { r, j }, Complex64::new(s, 0.0))?;
    kappa_from(&d, s, nc)
}

pub fn kappa_e(ts: &TwoStepScheme, s: f64, nc: u32) -> Result<f64> {
    let d = defect(ts, Reference::Exact, Complex64::new(s, 0.0))?;
    kappa_from(&d, s, nc)
}

/// `gamma_e` at complex `s`.
pub fn gamma_e_complex(ts: &TwoStepScheme, z: Complex64) -> Result<f64> {
    let d = defect(ts, Reference::Exact, z)?;
    gamma_from(&d, z.re)
}

/// `kappa_e` at complex `s`.
pub fn kappa_e_complex(ts: &TwoStepScheme, z: Complex64, nc: u32) -> Result<f64> {
    let d = defect(ts, Reference::Exact, z)?;
    kappa_from(&d, z.re, nc)
}

/// Classical parareal factor `|e^{-s} - R(s)| / (1 - |R(s)|)` of a
/// single-step coarse propagator against the exact flow.
pub fn single_step_gamma(r: &RationalFunction, s: f64) -> Result<f64> {
    let v = r.eval_real(s)?;
    if v.abs() >= 1.0 - STABILITY_MARGIN {
        return Err(Error::UnstableScheme {
            s,
            modulus: v.abs(),
        });
    }
    Ok(((-s).exp() - v).abs() / (1.0 - v.abs()))
}

/// Least-squares slope of `y` against `x`.
pub fn fit_slope(points: &[(f64, f64)]) -> f64 {
    let n = points.len() as f64;
    let mx = points.iter().map(|p| p.0).sum::<f64>() / n;
    let my = points.iter().map(|p| p.1).sum::<f64>() / n;
    let sxy: f64 = points.iter().map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = points.iter().map(|(x, _)| (x - mx) * (x - mx)).sum();
    sxy / sxx
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JOrderRow {
    pub j: u32,
    /// Grid supremum of `gamma_c`.
    pub gamma_star: f64,
    /// `|gamma* - gamma_e*|`.
    pub star_gap: f64,
    /// `max_s |gamma_c(s) - gamma_e(s)|`, which bounds `star_gap`.
    pub gap: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JOrderStudy {
    pub gamma_e_star: f64,
    pub rows: Vec<JOrderRow>,
    /// Fitted slope of `log gap` against `log J`.
    pub slope: f64,
}

/// How fast `gamma_c` approaches `gamma_e` as the coarsening factor grows.
pub fn j_order_study(
    r: &RationalFunction,
    ts: &TwoStepScheme,
    j_list: &[u32],
    grid: &SpectralGrid,
) -> Result<JOrderStudy> {
    if j_list.len() < 3 {
        return Err(Error::InvalidArgument(
            "J-order study needs at least three coarsening factors".into(),
        ));
    }
    let exact = sup_over_grid(|s| gamma_e(ts, s), grid)?;
    let mut rows = Vec::with_capacity(j_list.len());
    for &j in j_list {
        let curve = sup_over_grid(|s| gamma_c(r, ts, j, s), grid)?;
        let gap = curve
            .values
            .iter()
            .zip(&exact.values)
            .filter(|(a, b)| a.is_finite() && b.is_finite())
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        rows.push(JOrderRow {
            j,
            gamma_star: curve.sup,
            star_gap: (curve.sup - exact.sup).abs(),
            gap,
        });
    }
    let pts: Vec<(f64, f64)> = rows
        .iter()
        .map(|row| ((row.j as f64).ln(), row.gap.ln()))
        .collect();
    Ok(JOrderStudy {
        gamma_e_star: exact.sup,
        slope: fit_slope(&pts),
        rows,
    })
}

/// `rho(zeta) = -zeta^2 - alpha1 zeta - alpha0` and
/// `sigma(zeta) = beta2 zeta^2 + beta1 zeta + beta0` at `zeta = e^{i theta}`.
fn locus_polys(ts: &TwoStepScheme, theta: f64) -> (Complex64, Complex64) {
    let z = Complex64::from_polar(1.0, theta);
    let [a0, a1, a2] = ts.alpha;
    let [b0, b1, b2] = ts.beta;
    let rho = -(z * z * a2) - z * a1 - a0;
    let sigma = z * z * b2 + z * b1 + b0;
    (rho, sigma)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LocusPoint {
    pub theta: f64,
    /// `None` where `sigma(e^{i theta})` vanishes.
    pub mu: Option<Complex64>,
}

/// Boundary locus `mu(theta) = rho(e^{i theta}) / sigma(e^{i theta})` on
/// `theta_count` uniform samples of `[0, 2 pi)`.
pub fn boundary_locus(ts: &TwoStepScheme, theta_count: usize) -> Result<Vec<LocusPoint>> {
    if theta_count < 8 {
        return Err(Error::InvalidArgument("boundary locus needs at least 8 samples".into()));
    }
    Ok((0..theta_count)
        .map(|k| {
            let theta = 2.0 * PI * k as f64 / theta_count as f64;
            let (rho, sigma) = locus_polys(ts, theta);
            let mu = (sigma.norm() > 1e-14).then(|| rho / sigma);
            LocusPoint { theta, mu }
        })
        .collect())
}

/// `f(theta) = Re(rho) Re(sigma) + Im(rho) Im(sigma)`, the sign of `Re mu(theta)`.
pub fn locus_sign_function(ts: &TwoStepScheme, theta: f64) -> f64 {
    let (rho, sigma) = locus_polys(ts, theta);
    rho.re * sigma.re + rho.im * sigma.im
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AStabilityReport {
    pub a_stable: bool,
    /// Whether `f(theta) <= 1e-10` on every sample.
    pub locus_in_left_half_plane: bool,
    /// Whether both roots stay inside the unit disk along the positive real axis.
    pub positive_axis_stable: bool,
    pub worst_f: f64,
    pub worst_theta: f64,
}

/// Checks that the boundary locus stays in the closed left half plane and
/// that the positive real axis lies in the stability region.
///
/// The locus condition alone cannot tell the stability region from its
/// complement; the positive-axis sweep settles which side is stable.
pub fn a_stability_check(ts: &TwoStepScheme, theta_count: usize) -> Result<AStabilityReport> {
    if theta_count < 64 {
        return Err(Error::InvalidArgument("A-stability check needs at least 64 samples".into()));
    }
    let (mut worst_f, mut worst_theta) = (f64::NEG_INFINITY, 0.0);
    for k in 1..=theta_count {
        let theta = 2.0 * PI * k as f64 / (theta_count + 1) as f64;
        let f = locus_sign_function(ts, theta);
        if f > worst_f {
            worst_f = f;
            worst_theta = theta;
        }
    }
    let locus_in_left_half_plane = worst_f <= 1e-10;
    let positive_axis_stable = (0..=900).all(|k| {
        let s = 10f64.powf(-3.0 + 9.0 * k as f64 / 900.0);
        match rho_pair(ts, s) {
            Ok((r1, r2)) => r1.norm().max(r2.norm()) < 1.0,
            Err(_) => false,
        }
    });
    Ok(AStabilityReport {
        a_stable: locus_in_left_half_plane && positive_axis_stable,
        locus_in_left_half_plane,
        positive_axis_stable,
        worst_f,
        worst_theta,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ContourKind {
    GammaE,
    KappaE { nc: u32 },
}

/// Factor values on a rectangular grid of complex `s`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ContourGrid {
    pub re: Vec<f64>,
    pub im: Vec<f64>,
    /// Row-major by imaginary part: `values[iy * re.len() + ix]`.
    /// `+inf` marks poles and points where a root leaves the unit disk.
    pub values: Vec<f64>,
}

impl ContourGrid {
    pub fn at(&self, ix: usize, iy: usize) -> f64 {
        self.values[iy * self.re.len() + ix]
    }

    pub fn write_csv(&self, mut w: impl Write) -> std::io::Result<()> {
        writeln!(w, "re,im,value")?;
        for (iy, y) in self.im.iter().enumerate() {
            for (ix, x) in self.re.iter().enumerate() {
                writeln!(w, "{x},{y},{}", self.at(ix, iy))?;
            }
        }
        Ok(())
    }
}

fn linspace(range: (f64, f64), n: usize) -> Vec<f64> {
    (0..n)
        .map(|k| range.0 + (range.1 - range.0) * k as f64 / (n - 1) as f64)
        .collect()
}

pub fn contour_map(
    kind: ContourKind,
    ts: &TwoStepScheme,
    re_range: (f64, f64),
    im_range: (f64, f64),
    resolution: (usize, usize),
) -> Result<ContourGrid> {
    if resolution.0 < 2 || resolution.1 < 2 {
        return Err(Error::InvalidArgument("contour resolution must be at least 2".into()));
    }
    let re = linspace(re_range, resolution.0);
    let im = linspace(im_range, resolution.1);
    let points: Vec<Complex64> = im
        .iter()
        .flat_map(|&y| re.iter().map(move |&x| Complex64::new(x, y)))
        .collect();
    let values = points
        .par_iter()
        .map(|&z| {
            let v = match kind {
                ContourKind::GammaE => gamma_e_complex(ts, z),
                ContourKind::KappaE { nc } => kappa_e_complex(ts, z, nc),
            };
            v.unwrap_or(f64::INFINITY)
        })
        .collect();
    Ok(ContourGrid { re, im, values })
}
