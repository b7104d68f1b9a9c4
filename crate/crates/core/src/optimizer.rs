//! Barrier-method search for two-step coarse propagators.
//!
//! Minimizes `L_mu(theta) = L_s(theta) - mu L_b(theta)` over the parameters of
//! the consistent two-step family, where `L_s` is the sampled supremum of
//! `gamma_e` and `L_b` is the mean of `log(1 - |rho_1|^2) + log(1 - |rho_2|^2)`.
//! The barrier weight shrinks geometrically between outer iterations.

use std::io::Write;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::analysis::{GridSpec, SpectralGrid, STABILITY_MARGIN};
use crate::error::{Error, Result};
use crate::propagators::ThetaParams;

/// Maximum number of random draws when looking for a feasible start.
pub const MAX_INIT_DRAWS: usize = 100;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InitSpec {
    Theta(ThetaParams),
    Random,
}

/// Step length `eta_k = initial / sqrt(k)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StepSchedule {
    pub initial: f64,
    /// Move along `g / |g|` instead of `g`.
    pub normalized: bool,
    /// Count `k` across outer iterations instead of restarting it.
    pub global_counter: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct OptimizerConfig {
    pub grid: GridSpec,
    pub mu0: f64,
    pub sigma: f64,
    pub outer_iters: usize,
    pub inner_iters: usize,
    pub step: StepSchedule,
    pub grad_tolerance: f64,
    pub seed: u64,
    pub init: InitSpec,
}

impl Default for OptimizerConfig {
    fn default() -> Self {
        Self {
            grid: GridSpec::Default,
            mu0: 1e-2,
            sigma: 0.5,
            outer_iters: 10,
            inner_iters: 2000,
            step: StepSchedule {
                initial: 0.1,
                normalized: true,
                global_counter: true,
            },
            grad_tolerance: 1e-6,
            seed: 0,
            init: InitSpec::Theta(ThetaParams::default()),
        }
    }
}

impl OptimizerConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.mu0 > 0.0) {
            return Err(Error::InvalidArgument(format!("mu0 must be positive, got {}", self.mu0)));
        }
        if !(self.sigma > 0.0 && self.sigma < 1.0) {
            return Err(Error::InvalidArgument(format!("sigma must lie in (0, 1), got {}", self.sigma)));
        }
        if !(self.step.initial > 0.0) {
            return Err(Error::InvalidArgument("initial step must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TraceEntry {
    pub outer: usize,
    pub inner: usize,
    pub mu: f64,
    pub theta: ThetaParams,
    pub loss_s: f64,
    pub loss_b: f64,
    pub loss_mu: f64,
    pub feasible: bool,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct OptimizerTrace {
    pub init: Option<ThetaParams>,
    pub entries: Vec<TraceEntry>,
    /// Set when the gradient norm fell below the tolerance.
    pub converged: bool,
}

impl OptimizerTrace {
    pub fn write_csv(&self, mut w: impl Write) -> std::io::Result<()> {
        writeln!(w, "outer,inner,mu,a1,a2,b1,c2,loss_s,loss_b,loss_mu,feasible")?;
        for e in &self.entries {
            let t = e.theta;
            writeln!(
                w,
                "{},{},{},{},{},{},{},{},{},{},{}",
                e.outer, e.inner, e.mu, t.a1, t.a2, t.b1, t.c2, e.loss_s, e.loss_b, e.loss_mu, e.feasible
            )?;
        }
        Ok(())
    }
}

/// Moduli of the roots of `z^2 - b z - c` for real `b`, `c`.
fn root_moduli(b: f64, c: f64) -> (f64, f64) {
    let disc = b * b + 4.0 * c;
    if disc < 0.0 {
        let m = (-c).sqrt();
        return (m, m);
    }
    let big = 0.5 * (b + disc.sqrt().copysign(b));
    if big == 0.0 {
        return (0.0, 0.0);
    }
    (big.abs(), (c / big).abs())
}

/// Grid with the exact propagation factors cached.
pub struct LossEvaluator {
    grid: SpectralGrid,
    exp1: Vec<f64>,
    exp2: Vec<f64>,
}

/// `(L_s, L_b)` at one parameter point.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Losses {
    pub loss_s: f64,
    pub loss_b: f64,
}

impl Losses {
    pub fn total(&self, mu: f64) -> f64 {
        self.loss_s - mu * self.loss_b
    }
}

struct SampleTerms {
    gamma: f64,
    barrier: f64,
}

impl LossEvaluator {
    pub fn new(grid: SpectralGrid) -> Self {
        let exp1 = grid.samples().iter().map(|s| (-s).exp()).collect();
        let exp2 = grid.samples().iter().map(|s| (-2.0 * s).exp()).collect();
        Self { grid, exp1, exp2 }
    }

    pub fn grid(&self) -> &SpectralGrid {
        &self.grid
    }

    fn sample(&self, theta: &ThetaParams, eb1: f64, k: usize) -> Result<SampleTerms> {
        let s = self.grid.samples()[k];
        let d = 1.0 + eb1 * s;
        let r1 = (theta.a1 + theta.a2 * s) / d;
        let r2 = ((1.0 - theta.a1) + theta.c2 * s) / d;
        let (m1, m2) = root_moduli(r2, r1);
        if m1.max(m2) >= 1.0 - STABILITY_MARGIN {
            return Err(Error::Infeasible {
                s,
                modulus: m1.max(m2),
            });
        }
        let num = (self.exp2[k] - r2 * self.exp1[k] - r1).abs();
        Ok(SampleTerms {
            gamma: num / ((1.0 - m1) * (1.0 - m2)),
            barrier: (1.0 - m1 * m1).ln() + (1.0 - m2 * m2).ln(),
        })
    }

    /// Both losses in one sweep. The sum for `L_b` is accumulated in grid
    /// order so the result does not depend on the thread count.
    pub fn losses(&self, theta: &ThetaParams) -> Result<Losses> {
        let eb1 = theta.b1.exp();
        let terms: Vec<Result<SampleTerms>> = (0..self.grid.len())
            .into_par_iter()
            .with_min_len(256)
            .map(|k| self.sample(theta, eb1, k))
            .collect();
        let mut loss_s = 0.0f64;
        let mut sum_b = 0.0;
        for t in terms {
            let t = t?;
            loss_s = loss_s.max(t.gamma);
            sum_b += t.barrier;
        }
        Ok(Losses {
            loss_s,
            loss_b: sum_b / self.grid.len() as f64,
        })
    }

    pub fn is_feasible(&self, theta: &ThetaParams) -> bool {
        let eb1 = theta.b1.exp();
        (0..self.grid.len()).all(|k| self.sample(theta, eb1, k).is_ok())
    }

    /// Central differences of `L_mu` with per-coordinate step
    /// `1e-6 (1 + |theta_i|)`, shrunk up to three times when a probe is
    /// infeasible.
    pub fn subgradient(&self, theta: &ThetaParams, mu: f64) -> Result<[f64; 4]> {
        let x = theta.to_array();
        let mut g = [0.0; 4];
        for i in 0..4 {
            let mut h = 1e-6 * (1.0 + x[i].abs());
            let mut attempt = 0;
            g[i] = loop {
                let probe = |sign: f64| {
                    let mut y = x;
                    y[i] += sign * h;
                    self.losses(&ThetaParams::from_array(y)).map(|l| l.total(mu))
                };
                match (probe(1.0), probe(-1.0)) {
                    (Ok(p), Ok(m)) => break (p - m) / (2.0 * h),
                    (Err(e), _) | (_, Err(e)) => {
                        if attempt == 3 {
                            return Err(e);
                        }
                        attempt += 1;
                        h /= 10.0;
                    }
                }
            };
        }
        Ok(g)
    }
}

pub fn loss_s(theta: &ThetaParams, grid: &SpectralGrid) -> Result<f64> {
    Ok(LossEvaluator::new(grid.clone()).losses(theta)?.loss_s)
}

pub fn loss_b(theta: &ThetaParams, grid: &SpectralGrid) -> Result<f64> {
    Ok(LossEvaluator::new(grid.clone()).losses(theta)?.loss_b)
}

pub fn total_loss(theta: &ThetaParams, grid: &SpectralGrid, mu: f64) -> Result<f64> {
    Ok(LossEvaluator::new(grid.clone()).losses(theta)?.total(mu))
}

pub fn subgradient(theta: &ThetaParams, grid: &SpectralGrid, mu: f64) -> Result<[f64; 4]> {
    LossEvaluator::new(grid.clone()).subgradient(theta, mu)
}

/// Draws `a1 ~ U(0, 0.5)`, `a2 ~ U(-0.1, 0.1)`, `b1 ~ U(-1, 0)`,
/// `c2 ~ U(-1, 0)` until a feasible point appears.
pub fn random_feasible_init(eval: &LossEvaluator, seed: u64) -> Result<ThetaParams> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for _ in 0..MAX_INIT_DRAWS {
        let theta = ThetaParams {
            a1: rng.gen_range(0.0..0.5),
            a2: rng.gen_range(-0.1..0.1),
            b1: rng.gen_range(-1.0..0.0),
            c2: rng.gen_range(-1.0..0.0),
        };
        if eval.is_feasible(&theta) {
            return Ok(theta);
        }
    }
    Err(Error::NoFeasibleInit {
        attempts: MAX_INIT_DRAWS,
    })
}

/// Subgradient descent on `L_mu` for a decreasing sequence of `mu`.
///
/// Steps that leave the feasible set are halved until they land inside.
/// Returns the visited point with the smallest `L_s`, which is never worse
/// than the start.
pub fn optimize(config: &OptimizerConfig) -> Result<(ThetaParams, OptimizerTrace)> {
    config.validate()?;
    let eval = LossEvaluator::new(config.grid.build()?);
    let mut theta = match config.init {
        InitSpec::Theta(t) => t,
        InitSpec::Random => random_feasible_init(&eval, config.seed)?,
    };
    let start = eval.losses(&theta)?;
    let mut best = (start.loss_s, theta);
    let mut trace = OptimizerTrace {
        init: Some(theta),
        ..Default::default()
    };
    let mut mu = config.mu0;
    let mut k_global = 0usize;
    'outer: for outer in 0..config.outer_iters {
        for inner in 0..config.inner_iters {
            k_global += 1;
            let g = eval.subgradient(&theta, mu)?;
            let norm = g.iter().map(|v| v * v).sum::<f64>().sqrt();
            if norm < config.grad_tolerance {
                trace.converged = true;
                break 'outer;
            }
            let k = if config.step.global_counter { k_global } else { inner + 1 };
            let mut eta = config.step.initial / (k as f64).sqrt();
            if config.step.normalized {
                eta /= norm;
            }
            let x = theta.to_array();
            let mut accepted = None;
            for _ in 0..60 {
                let candidate =
                    ThetaParams::from_array(std::array::from_fn(|i| x[i] - eta * g[i]));
                if let Ok(l) = eval.losses(&candidate) {
                    accepted = Some((candidate, l));
                    break;
                }
                eta /= 2.0;
            }
            let Some((next, l)) = accepted else {
                log::warn!("no feasible step from {theta:?}; stopping");
                break 'outer;
            };
            theta = next;
            if l.loss_s < best.0 {
                best = (l.loss_s, theta);
            }
            trace.entries.push(TraceEntry {
                outer,
                inner,
                mu,
                theta,
                loss_s: l.loss_s,
                loss_b: l.loss_b,
                loss_mu: l.total(mu),
                feasible: true,
            });
        }
        log::info!("outer {outer}: mu = {mu:.3e}, best L_s = {:.6}", best.0);
        mu *= config.sigma;
    }
    Ok((best.1, trace))
}
