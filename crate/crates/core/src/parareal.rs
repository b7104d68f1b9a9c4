//! Single-step and two-step parareal drivers.
//!
//! Both drivers keep the iterate on the half-index lattice `T_{m/2}`,
//! `m = 0..2 N_c`; the single-step algorithm only uses the even slots.
//! Fine sweeps over the coarse intervals run on the rayon pool and are
//! collected in interval order, so results do not depend on the thread count.

use std::io::Write;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fem::{
    irk_step, l2_distance, o2cp_extrapolated_step, single_step_apply, two_step_apply, Problem,
};
use crate::propagators::{
    catalog, ButcherTableau, Scheme, SchemeDefinition, SingleStepScheme, TwoStepScheme,
};

/// States at the half-index times `T_{m/2}`.
pub type Lattice = Vec<Vec<f64>>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InitMode {
    CoarseSweep,
    #[default]
    Random,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PararealConfig {
    pub t_final: f64,
    /// Fine steps per coarse interval; must be even.
    pub j: usize,
    pub dt: f64,
    pub k_max: usize,
    pub tol: f64,
    pub seed: u64,
    pub init: InitMode,
}

impl Default for PararealConfig {
    fn default() -> Self {
        Self {
            t_final: 10.0,
            j: 50,
            dt: 0.01,
            k_max: 50,
            tol: 1e-9,
            seed: 0,
            init: InitMode::Random,
        }
    }
}

impl PararealConfig {
    /// Number of coarse intervals `T / (J dt)`.
    pub fn n_coarse(&self) -> Result<usize> {
        if self.j == 0 || !self.j.is_multiple_of(2) {
            return Err(Error::InvalidArgument(format!(
                "coarsening factor must be a positive even integer, got {}",
                self.j
            )));
        }
        if !(self.dt > 0.0 && self.t_final > 0.0) {
            return Err(Error::InvalidArgument("dt and T must be positive".into()));
        }
        let nc = self.t_final / (self.j as f64 * self.dt);
        let rounded = nc.round();
        if rounded < 1.0 || (nc - rounded).abs() > 1e-9 * nc.max(1.0) {
            return Err(Error::InvalidArgument(format!(
                "T / (J dt) = {nc} is not a positive integer"
            )));
        }
        Ok(rounded as usize)
    }

    pub fn coarse_step(&self) -> f64 {
        self.j as f64 * self.dt
    }
}

/// Coarse propagator choice.
#[derive(Debug, Clone, PartialEq)]
pub enum Coarse {
    Single(SingleStepScheme),
    TwoStep(TwoStepScheme),
    /// Two-step scheme with the implicit source extrapolated from the history.
    TwoStepExtrapolated(TwoStepScheme),
}

impl Coarse {
    /// Catalog name, optionally suffixed with `-e` for the semi-explicit
    /// variant. For single-step schemes without a tableau the reaction
    /// term is always frozen, so `ocp-e` and `ocp` coincide.
    pub fn from_name(name: &str) -> Result<Self> {
        let (base, explicit) = match name.strip_suffix("-e") {
            Some(b) => (b, true),
            None => (name, false),
        };
        Ok(match (catalog(base)?, explicit) {
            (Scheme::Single(s), false) => Coarse::Single(s),
            (Scheme::Single(s), true) if s.tableau.is_none() => {
                Coarse::Single(SingleStepScheme { name: name.to_string(), ..s })
            }
            (Scheme::Single(_), true) => {
                return Err(Error::UnknownScheme(name.to_string()));
            }
            (Scheme::TwoStep(t), false) => Coarse::TwoStep(t),
            (Scheme::TwoStep(t), true) => {
                Coarse::TwoStepExtrapolated(TwoStepScheme { name: name.to_string(), ..t })
            }
        })
    }

    pub fn from_definition(def: &SchemeDefinition) -> Result<Self> {
        Ok(match def.build()? {
            Scheme::Single(s) => Coarse::Single(s),
            Scheme::TwoStep(t) => Coarse::TwoStep(t),
        })
    }

    pub fn name(&self) -> &str {
        match self {
            Coarse::Single(s) => &s.name,
            Coarse::TwoStep(t) | Coarse::TwoStepExtrapolated(t) => &t.name,
        }
    }

    pub fn is_two_step(&self) -> bool {
        !matches!(self, Coarse::Single(_))
    }
}

/// `steps` fine steps from `u` at `t0`; returns the state after `mid`
/// steps and the final state.
fn fine_sweep(
    tab: &ButcherTableau,
    prob: &Problem,
    dt: f64,
    t0: f64,
    u: &[f64],
    steps: usize,
    mid: usize,
) -> Result<(Vec<f64>, Vec<f64>)> {
    let mut v = u.to_vec();
    let mut at_mid = if mid == 0 { v.clone() } else { Vec::new() };
    for s in 0..steps {
        v = irk_step(tab, dt, t0 + s as f64 * dt, &v, prob)?;
        if s + 1 == mid {
            at_mid = v.clone();
        }
    }
    Ok((at_mid, v))
}

/// Sequential fine solution at every half-index time, plus its wall time.
pub fn fine_reference(
    config: &PararealConfig,
    fp: &ButcherTableau,
    prob: &Problem,
) -> Result<(Lattice, f64)> {
    let nc = config.n_coarse()?;
    let half = config.j / 2;
    let start = Instant::now();
    let mut lattice = Vec::with_capacity(2 * nc + 1);
    lattice.push(prob.u0.clone());
    for m in 0..2 * nc {
        let t0 = m as f64 * half as f64 * config.dt;
        let (_, next) = fine_sweep(fp, prob, config.dt, t0, &lattice[m], half, 0)?;
        lattice.push(next);
    }
    Ok((lattice, start.elapsed().as_secs_f64()))
}

/// Seeded uniform `[0, 1)` values in every slot but the first, which holds `u0`.
pub fn random_init(seed: u64, slots: usize, u0: &[f64]) -> Lattice {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut lattice = vec![u0.to_vec()];
    for _ in 1..slots {
        lattice.push((0..u0.len()).map(|_| rng.gen::<f64>()).collect());
    }
    lattice
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct IterationTrace {
    pub cp: String,
    pub n_coarse: usize,
    /// `e_k = max_{1 <= n <= N_c} |U_n^k - U_n|_{L2}`, starting at `k = 0`.
    pub errors: Vec<f64>,
    /// Largest L2 gap to the fine reference over the slots that must
    /// already be exact at iteration `k` (`m <= 2k` on the half lattice,
    /// `n <= k` for single-step).
    pub finite_gaps: Vec<f64>,
    /// Largest L2 change of any slot from iteration `k` to `k + 1`.
    pub updates: Vec<f64>,
    /// Wall time of the sequential correction sweep per iteration.
    pub cp_costs: Vec<f64>,
    /// Longest fine subinterval per iteration.
    pub fp_costs: Vec<f64>,
    /// Mean fine subinterval time per iteration.
    pub fp_mean_costs: Vec<f64>,
    /// First `k` with `e_k < tol`.
    pub iterations: Option<usize>,
    pub tol: f64,
}

/// Deterministic part of a run: the iterates themselves.
#[derive(Debug, Clone, PartialEq)]
pub struct PararealRun {
    pub trace: IterationTrace,
    pub lattice: Lattice,
}

impl IterationTrace {
    /// Mean CP sweep time.
    pub fn cost_cp(&self) -> f64 {
        mean(&self.cp_costs)
    }

    /// Mean per-interval fine time.
    pub fn cost_fp(&self) -> f64 {
        mean(&self.fp_mean_costs)
    }

    pub fn write_csv(&self, mut w: impl Write) -> std::io::Result<()> {
        writeln!(w, "k,error,finite_gap,cp_cost,fp_cost")?;
        for (k, e) in self.errors.iter().enumerate() {
            let cp = if k == 0 { 0.0 } else { self.cp_costs[k - 1] };
            let fp = if k == 0 { 0.0 } else { self.fp_costs[k - 1] };
            writeln!(w, "{k},{e},{},{cp},{fp}", self.finite_gaps[k])?;
        }
        Ok(())
    }
}

fn mean(v: &[f64]) -> f64 {
    if v.is_empty() {
        0.0
    } else {
        v.iter().sum::<f64>() / v.len() as f64
    }
}

/// Geometric mean of `e_{k+1} / e_k` from `k = 1` up to the first `k` with
/// `e_k < 100 * floor`. The floor is the last error when the tolerance was
/// reached and `1e-11` otherwise.
pub fn empirical_factor(trace: &IterationTrace) -> Result<f64> {
    let e = &trace.errors;
    let floor = match trace.iterations {
        Some(_) => *e.last().ok_or(Error::InsufficientTrace(0))?,
        None => 1e-11,
    };
    let mut end = 1;
    while end < e.len() && e[end] >= 100.0 * floor {
        end += 1;
    }
    let end = end.min(e.len() - 1);
    if end < 2 {
        return Err(Error::InsufficientTrace(e.len()));
    }
    let logs: Vec<f64> = (1..end).map(|k| (e[k + 1] / e[k]).ln()).collect();
    Ok((logs.iter().sum::<f64>() / logs.len() as f64).exp())
}

/// `cost_seq / (iter (cost_cp + cost_fp))`.
pub fn speedup(cost_seq: f64, iterations: usize, cost_cp: f64, cost_fp: f64) -> f64 {
    cost_seq / (iterations as f64 * (cost_cp + cost_fp))
}

fn max_gap(a: &[Vec<f64>], b: &[Vec<f64>], slots: impl Iterator<Item = usize>, prob: &Problem) -> Result<f64> {
    let mut g = 0.0f64;
    for m in slots {
        g = g.max(l2_distance(&a[m], &b[m], &prob.sys)?);
    }
    Ok(g)
}

fn coarse_single(sc: &SingleStepScheme, dt: f64, t: f64, u: &[f64], prob: &Problem) -> Result<Vec<f64>> {
    single_step_apply(sc, dt, t, u, prob)
}

/// Two-step CP from `v1` at `t - tau`, `v2` at `t`.
fn coarse_two(cp: &Coarse, tau: f64, t: f64, v1: &[f64], v2: &[f64], prob: &Problem) -> Result<Vec<f64>> {
    match cp {
        Coarse::TwoStep(ts) => two_step_apply(ts, tau, t, v1, v2, prob),
        Coarse::TwoStepExtrapolated(ts) => o2cp_extrapolated_step(ts, tau, t, v1, v2, prob),
        Coarse::Single(_) => unreachable!("single-step CP in two-step driver"),
    }
}

struct FineResult {
    mid: Vec<f64>,
    end: Vec<f64>,
    seconds: f64,
}

fn parallel_fine(
    starts: &[(usize, f64, &Vec<f64>)],
    fp: &ButcherTableau,
    prob: &Problem,
    config: &PararealConfig,
) -> Result<Vec<FineResult>> {
    starts
        .par_iter()
        .map(|&(_, t0, u)| {
            let clock = Instant::now();
            let (mid, end) = fine_sweep(fp, prob, config.dt, t0, u, config.j, config.j / 2)?;
            Ok(FineResult {
                mid,
                end,
                seconds: clock.elapsed().as_secs_f64(),
            })
        })
        .collect()
}

/// Initial iterate for the chosen mode. Coarse sweeps start the two-step
/// recursion with a backward Euler half-step.
pub fn initial_lattice(
    config: &PararealConfig,
    cp: &Coarse,
    prob: &Problem,
) -> Result<Lattice> {
    let nc = config.n_coarse()?;
    let big = config.coarse_step();
    match config.init {
        InitMode::Random => Ok(random_init(config.seed, 2 * nc + 1, &prob.u0)),
        InitMode::CoarseSweep => {
            let mut l = vec![prob.u0.clone(); 2 * nc + 1];
            match cp {
                Coarse::Single(sc) => {
                    for n in 0..nc {
                        l[2 * n + 2] = coarse_single(sc, big, n as f64 * big, &l[2 * n], prob)?;
                        l[2 * n + 1] = l[2 * n].clone();
                    }
                }
                _ => {
                    let be = crate::propagators::catalog_single("backward_euler")?;
                    l[1] = coarse_single(&be, big / 2.0, 0.0, &prob.u0, prob)?;
                    for m in 0..2 * nc - 1 {
                        let t = (m + 1) as f64 * big / 2.0;
                        l[m + 2] = coarse_two(cp, big / 2.0, t, &l[m], &l[m + 1], prob)?;
                    }
                }
            }
            Ok(l)
        }
    }
}

/// Runs the driver matching the CP kind from the configured initial iterate.
pub fn run(
    config: &PararealConfig,
    cp: &Coarse,
    fp: &ButcherTableau,
    prob: &Problem,
    reference: &Lattice,
) -> Result<PararealRun> {
    let init = initial_lattice(config, cp, prob)?;
    run_from(config, cp, fp, prob, reference, init)
}

pub fn run_from(
    config: &PararealConfig,
    cp: &Coarse,
    fp: &ButcherTableau,
    prob: &Problem,
    reference: &Lattice,
    init: Lattice,
) -> Result<PararealRun> {
    let nc = config.n_coarse()?;
    if reference.len() != 2 * nc + 1 || init.len() != 2 * nc + 1 {
        return Err(Error::DimensionMismatch {
            expected: 2 * nc + 1,
            got: reference.len().min(init.len()),
        });
    }
    match cp {
        Coarse::Single(sc) => run_single_step(config, sc, fp, prob, reference, init),
        _ => run_two_step(config, cp, fp, prob, reference, init),
    }
}

fn integer_error(l: &Lattice, reference: &Lattice, nc: usize, prob: &Problem) -> Result<f64> {
    max_gap(l, reference, (1..=nc).map(|n| 2 * n), prob)
}

/// Classical parareal on the integer slots.
pub fn run_single_step(
    config: &PararealConfig,
    sc: &SingleStepScheme,
    fp: &ButcherTableau,
    prob: &Problem,
    reference: &Lattice,
    mut u: Lattice,
) -> Result<PararealRun> {
    let nc = config.n_coarse()?;
    let big = config.coarse_step();
    let mut trace = IterationTrace {
        cp: sc.name.clone(),
        n_coarse: nc,
        tol: config.tol,
        ..Default::default()
    };
    trace.errors.push(integer_error(&u, reference, nc, prob)?);
    trace.finite_gaps.push(0.0);
    if trace.errors[0] < config.tol {
        trace.iterations = Some(0);
    }
    let mut k = 0;
    while trace.iterations.is_none() && k < config.k_max {
        let starts: Vec<(usize, f64, &Vec<f64>)> =
            (0..nc).map(|n| (n, n as f64 * big, &u[2 * n])).collect();
        let fine = parallel_fine(&starts, fp, prob, config)?;
        let old: Vec<Vec<f64>> = (0..nc)
            .into_par_iter()
            .map(|n| coarse_single(sc, big, n as f64 * big, &u[2 * n], prob))
            .collect::<Result<_>>()?;

        let clock = Instant::now();
        let mut next = u.clone();
        for n in 0..nc {
            let g = coarse_single(sc, big, n as f64 * big, &next[2 * n], prob)?;
            next[2 * n + 2] = g
                .iter()
                .zip(&fine[n].end)
                .zip(&old[n])
                .map(|((a, b), c)| a + b - c)
                .collect();
            next[2 * n + 1] = fine[n].mid.clone();
        }
        trace.cp_costs.push(clock.elapsed().as_secs_f64());
        record_fine_costs(&mut trace, &fine);
        trace.updates.push(max_gap(&next, &u, (0..=nc).map(|n| 2 * n), prob)?);
        u = next;
        k += 1;
        trace.errors.push(integer_error(&u, reference, nc, prob)?);
        trace
            .finite_gaps
            .push(max_gap(&u, reference, (0..=k.min(nc)).map(|n| 2 * n), prob)?);
        if trace.errors[k] < config.tol {
            trace.iterations = Some(k);
        }
    }
    Ok(PararealRun { trace, lattice: u })
}

fn record_fine_costs(trace: &mut IterationTrace, fine: &[FineResult]) {
    let secs: Vec<f64> = fine.iter().map(|f| f.seconds).collect();
    trace.fp_costs.push(secs.iter().cloned().fold(0.0, f64::max));
    trace.fp_mean_costs.push(mean(&secs));
}

/// Two-step parareal on the half-index lattice.
pub fn run_two_step(
    config: &PararealConfig,
    cp: &Coarse,
    fp: &ButcherTableau,
    prob: &Problem,
    reference: &Lattice,
    mut u: Lattice,
) -> Result<PararealRun> {
    let nc = config.n_coarse()?;
    let tau = config.coarse_step() / 2.0;
    let slots = 2 * nc + 1;
    let mut trace = IterationTrace {
        cp: cp.name().to_string(),
        n_coarse: nc,
        tol: config.tol,
        ..Default::default()
    };
    trace.errors.push(integer_error(&u, reference, nc, prob)?);
    trace.finite_gaps.push(0.0);
    if trace.errors[0] < config.tol {
        trace.iterations = Some(0);
    }
    let mut k = 0;
    while trace.iterations.is_none() && k < config.k_max {
        // fine solves on [T_{m/2}, T_{m/2 + 1}] for m = 0..2N_c - 2
        let starts: Vec<(usize, f64, &Vec<f64>)> =
            (0..slots - 2).map(|m| (m, m as f64 * tau, &u[m])).collect();
        let fine = parallel_fine(&starts, fp, prob, config)?;
        let mut prev = u.clone();
        if k == 0 {
            prev[1] = fine[0].mid.clone();
            prev[2] = fine[0].end.clone();
        }
        let old: Vec<Vec<f64>> = (0..slots - 2)
            .into_par_iter()
            .map(|m| coarse_two(cp, tau, (m + 1) as f64 * tau, &prev[m], &fine[m].mid, prob))
            .collect::<Result<_>>()?;

        let clock = Instant::now();
        let mut next = prev.clone();
        for m in 0..slots - 2 {
            let g = coarse_two(cp, tau, (m + 1) as f64 * tau, &next[m], &next[m + 1], prob)?;
            next[m + 2] = g
                .iter()
                .zip(&fine[m].end)
                .zip(&old[m])
                .map(|((a, b), c)| a + b - c)
                .collect();
        }
        trace.cp_costs.push(clock.elapsed().as_secs_f64());
        record_fine_costs(&mut trace, &fine);
        trace.updates.push(max_gap(&next, &u, 0..slots, prob)?);
        u = next;
        k += 1;
        trace.errors.push(integer_error(&u, reference, nc, prob)?);
        trace
            .finite_gaps
            .push(max_gap(&u, reference, 0..=(2 * k).min(slots - 1), prob)?);
        if trace.errors[k] < config.tol {
            trace.iterations = Some(k);
        }
    }
    Ok(PararealRun { trace, lattice: u })
}
