//! `optimize`: subgradient search over the two-step family.

use anyhow::Result;
use parareal_core::analysis::{gamma_e, sup_over_grid};
use parareal_core::optimizer::{optimize, LossEvaluator, OptimizerConfig};
use parareal_core::propagators::{two_step_from_theta_named, SchemeDefinition, ThetaParams};
use serde::Serialize;

use crate::output::OutDir;

pub const SCHEME_FILE: &str = "optimized_scheme.json";

#[derive(Debug, Serialize)]
pub struct OptimizeSummary {
    pub theta: ThetaParams,
    pub init: Option<ThetaParams>,
    pub loss_s: f64,
    pub loss_b: f64,
    pub feasible: bool,
    /// `sup gamma_e` of the resulting scheme on the optimizer's grid.
    pub gamma_e_star: f64,
    pub converged: bool,
    pub iterations: usize,
    pub scheme_file: String,
    pub config: OptimizerConfig,
}

pub fn run(config: &OptimizerConfig, out: &OutDir) -> Result<OptimizeSummary> {
    let (theta, trace) = optimize(config)?;
    let grid = config.grid.build()?;
    let eval = LossEvaluator::new(grid.clone());
    let losses = eval.losses(&theta)?;
    let ts = two_step_from_theta_named("optimized", &theta);
    let ge = sup_over_grid(|s| gamma_e(&ts, s), &grid)?;

    out.write_with("optimizer_trace.csv", |w| trace.write_csv(w))?;
    out.write_json(
        SCHEME_FILE,
        &SchemeDefinition::Theta {
            name: "optimized".into(),
            theta,
        },
    )?;
    let summary = OptimizeSummary {
        theta,
        init: trace.init,
        loss_s: losses.loss_s,
        loss_b: losses.loss_b,
        feasible: eval.is_feasible(&theta),
        gamma_e_star: ge.sup,
        converged: trace.converged,
        iterations: trace.entries.len(),
        scheme_file: SCHEME_FILE.into(),
        config: config.clone(),
    };
    log::info!("optimized loss_s = {:.6}", summary.loss_s);
    out.write_json("optimize.json", &summary)?;
    Ok(summary)
}
