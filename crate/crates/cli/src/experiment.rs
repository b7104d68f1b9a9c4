//! `linear` and `nonlinear`: parareal runs against a fine reference.

use std::io::Write;

use anyhow::{bail, Context, Result};
use parareal_core::analysis::{
    gamma_e, kappa_e, single_step_gamma, sup_over_grid, SpectralGrid,
};
use parareal_core::fem::{LinearCase, Problem, SourceForm};
use parareal_core::parareal::{
    empirical_factor, fine_reference, run, speedup, Coarse, InitMode, IterationTrace,
    PararealConfig,
};
use parareal_core::propagators::{catalog_single, ButcherTableau};
use serde::{Deserialize, Serialize};

use crate::config::{ExperimentConfig, Profile};
use crate::output::{num_label, slug, OutDir};

pub const LINEAR_CPS: [&str; 4] = ["sdirk2", "bdf2", "ocp", "o2cp"];
pub const NONLINEAR_CPS: [&str; 5] = ["sdirk2", "bdf2", "ocp-e", "o2cp", "o2cp-e"];

/// Largest gap to the fine reference still counted as exact.
pub const EXACTNESS_TOL: f64 = 1e-11;

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct Costs {
    /// Median wall time of one sequential correction sweep.
    pub cp: f64,
    /// Median wall time of one fine subinterval solve.
    pub fp: f64,
    /// Median wall time of the sequential fine solve over `[0, T]`.
    pub seq: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TableRow {
    pub cp: String,
    pub j: usize,
    pub n_coarse: usize,
    pub c_l: Option<f64>,
    pub dt: f64,
    pub t_final: f64,
    pub gamma_e_star: Option<f64>,
    pub kappa_e_star: Option<f64>,
    pub gamma_hat: Option<f64>,
    pub iterations: Option<usize>,
    pub final_error: f64,
    pub finite_convergence: bool,
    pub cost: Option<Costs>,
    pub speedup: Option<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Table {
    pub kind: String,
    pub case: Option<LinearCase>,
    pub source: Option<SourceForm>,
    pub n_cells: usize,
    pub fp: String,
    pub tol: f64,
    pub k_max: usize,
    pub seed: u64,
    pub init: InitMode,
    pub kappa_nc: Option<u32>,
    pub rows: Vec<TableRow>,
}

fn median(mut v: Vec<f64>) -> f64 {
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

fn fine_tableau(name: &str) -> Result<ButcherTableau> {
    let sc = catalog_single(name).with_context(|| format!("fine propagator `{name}`"))?;
    match sc.tableau {
        Some(t) => Ok(t),
        None => bail!("fine propagator `{name}` has no Butcher tableau"),
    }
}

/// `(gamma_e*, kappa_e*)` of the linear coarse scheme behind `cp`.
fn analytic_factors(cp: &Coarse, grid: &SpectralGrid, nc: u32) -> Result<(f64, Option<f64>)> {
    Ok(match cp {
        Coarse::Single(sc) => (sup_over_grid(|s| single_step_gamma(&sc.stability, s), grid)?.sup, None),
        Coarse::TwoStep(ts) | Coarse::TwoStepExtrapolated(ts) => (
            sup_over_grid(|s| gamma_e(ts, s), grid)?.sup,
            Some(sup_over_grid(|s| kappa_e(ts, s, nc), grid)?.sup),
        ),
    })
}

fn write_trace(out: &OutDir, name: &str, trace: &IterationTrace, with_costs: bool) -> Result<()> {
    out.write_with(name, |w| {
        writeln!(w, "k,error,finite_gap,cp_cost,fp_cost")?;
        for (k, e) in trace.errors.iter().enumerate() {
            write!(w, "{k},{e},{}", trace.finite_gaps[k])?;
            if with_costs && k > 0 {
                writeln!(w, ",{},{}", trace.cp_costs[k - 1], trace.fp_costs[k - 1])?;
            } else {
                writeln!(w, ",,")?;
            }
        }
        Ok(())
    })
}

struct Setting<'a> {
    label: String,
    prob: &'a Problem,
    config: PararealConfig,
    c_l: Option<f64>,
}

fn run_setting(
    setting: &Setting,
    cps: &[String],
    fp: &ButcherTableau,
    reps: usize,
    measure: bool,
    analytic: Option<(&SpectralGrid, u32)>,
    out: &OutDir,
) -> Result<Vec<TableRow>> {
    let config = &setting.config;
    let nc = config.n_coarse()?;
    let (reference, first_seq) = fine_reference(config, fp, setting.prob)?;
    let mut seq_times = vec![first_seq];
    if measure {
        for _ in 1..reps {
            seq_times.push(fine_reference(config, fp, setting.prob)?.1);
        }
    }
    let mut rows = Vec::new();
    for name in cps {
        let cp = Coarse::from_name(name)?;
        log::info!("{} J={} cp={}", setting.label, config.j, name);
        let result = run(config, &cp, fp, setting.prob, &reference)?;
        let mut cp_times = vec![result.trace.cost_cp()];
        let mut fp_times = vec![result.trace.cost_fp()];
        if measure {
            for _ in 1..reps {
                let again = run(config, &cp, fp, setting.prob, &reference)?;
                debug_assert_eq!(again.trace.errors, result.trace.errors);
                cp_times.push(again.trace.cost_cp());
                fp_times.push(again.trace.cost_fp());
            }
        }
        let trace = &result.trace;
        write_trace(
            out,
            &format!("trace_{}_J{}_{}.csv", setting.label, config.j, slug(name)),
            trace,
            measure,
        )?;
        let cost = measure.then(|| Costs {
            cp: median(cp_times),
            fp: median(fp_times),
            seq: median(seq_times.clone()),
        });
        let (gamma_e_star, kappa_e_star) = match analytic {
            Some((grid, knc)) => {
                let (g, k) = analytic_factors(&cp, grid, knc)?;
                (Some(g), k)
            }
            None => (None, None),
        };
        rows.push(TableRow {
            cp: name.clone(),
            j: config.j,
            n_coarse: nc,
            c_l: setting.c_l,
            dt: config.dt,
            t_final: config.t_final,
            gamma_e_star,
            kappa_e_star,
            gamma_hat: empirical_factor(trace).ok(),
            iterations: trace.iterations,
            final_error: *trace.errors.last().unwrap_or(&f64::NAN),
            finite_convergence: trace.finite_gaps.iter().all(|g| *g <= EXACTNESS_TOL),
            speedup: match (cost, trace.iterations) {
                (Some(c), Some(it)) if it > 0 => Some(speedup(c.seq, it, c.cp, c.fp)),
                _ => None,
            },
            cost,
        });
    }
    Ok(rows)
}

fn base_config(cfg: &ExperimentConfig, t_final: f64, j: usize, dt: f64) -> PararealConfig {
    PararealConfig {
        t_final,
        j,
        dt,
        k_max: cfg.k_max,
        tol: cfg.tol,
        seed: cfg.seed,
        init: cfg.init,
    }
}

pub fn linear(cfg: &ExperimentConfig, profile: Profile, out: &OutDir) -> Result<Table> {
    let n_cells = cfg.n_cells(profile);
    let prob = Problem::linear(cfg.case, cfg.source, n_cells)?;
    let prob = match cfg.t_final {
        Some(t) => prob.with_t_final(t),
        None => prob,
    };
    let fp = fine_tableau(&cfg.fp)?;
    let cps = cfg.cps_or(&LINEAR_CPS);
    let grid = cfg.grid.build()?;
    let reps = cfg.repetitions(profile);
    let case = serde_json::to_value(cfg.case)?.as_str().unwrap_or("x").to_string();
    let mut rows = Vec::new();
    for &j in &cfg.j {
        let setting = Setting {
            label: format!("linear_{case}"),
            prob: &prob,
            config: base_config(cfg, prob.t_final, j, cfg.dt.unwrap_or(0.01)),
            c_l: None,
        };
        rows.extend(run_setting(&setting, &cps, &fp, reps, cfg.measure_costs, Some((&grid, cfg.nc)), out)?);
    }
    let table = Table {
        kind: "linear".into(),
        case: Some(cfg.case),
        source: Some(cfg.source),
        n_cells,
        fp: cfg.fp.clone(),
        tol: cfg.tol,
        k_max: cfg.k_max,
        seed: cfg.seed,
        init: cfg.init,
        kappa_nc: Some(cfg.nc),
        rows,
    };
    out.write_json(&format!("table_linear_{case}.json"), &table)?;
    Ok(table)
}

pub fn nonlinear(cfg: &ExperimentConfig, profile: Profile, out: &OutDir) -> Result<Table> {
    let n_cells = cfg.n_cells(profile);
    let fp = fine_tableau(&cfg.fp)?;
    let cps = cfg.cps_or(&NONLINEAR_CPS);
    let reps = cfg.repetitions(profile);
    let mut rows = Vec::new();
    let mut problems = Vec::new();
    for &c in &cfg.c_l {
        if !(c > 0.0) {
            bail!("c_L must be positive, got {c}");
        }
        let prob = Problem::semilinear(c, n_cells)?;
        problems.push(match cfg.t_final {
            Some(t) => prob.with_t_final(t),
            None => prob,
        });
    }
    for (&c, prob) in cfg.c_l.iter().zip(&problems) {
        for &j in &cfg.j {
            let setting = Setting {
                label: format!("nonlinear_cL{}", num_label(c)),
                prob,
                config: base_config(cfg, prob.t_final, j, cfg.dt.unwrap_or(0.01 / c)),
                c_l: Some(c),
            };
            rows.extend(run_setting(&setting, &cps, &fp, reps, cfg.measure_costs, None, out)?);
        }
    }
    let table = Table {
        kind: "nonlinear".into(),
        case: None,
        source: None,
        n_cells,
        fp: cfg.fp.clone(),
        tol: cfg.tol,
        k_max: cfg.k_max,
        seed: cfg.seed,
        init: cfg.init,
        kappa_nc: None,
        rows,
    };
    out.write_json("table_nonlinear.json", &table)?;
    Ok(table)
}
