//! `analyze`: convergence factors of coarse propagators on the spectral grid.

use std::io::Write;
use std::path::Path;

use anyhow::{Context, Result};
use parareal_core::analysis::{
    gamma_c, gamma_e, kappa_c, kappa_e, rho_pair, single_step_gamma, sup_over_grid, FactorCurve,
    GridDescription, SpectralGrid,
};
use parareal_core::propagators::{catalog_single, Scheme, SingleStepScheme, TwoStepScheme};
use parareal_core::rational::RationalFunction;
use serde::Serialize;

use crate::config::ExperimentConfig;
use crate::output::{slug, OutDir};

pub const DEFAULT_SCHEMES: [&str; 4] = ["sdirk2", "bdf2", "ocp", "o2cp"];

#[derive(Debug, Serialize)]
pub struct JValue {
    pub j: u32,
    pub value: f64,
}

#[derive(Debug, Serialize)]
pub struct SchemeFactors {
    pub name: String,
    pub kind: &'static str,
    pub gamma_e_star: f64,
    pub gamma_e_argmax: f64,
    pub kappa_e_star: Option<f64>,
    pub gamma_c_star: Vec<JValue>,
    pub kappa_c_star: Vec<JValue>,
}

#[derive(Debug, Serialize)]
pub struct AnalysisSummary {
    pub grid: GridDescription,
    pub nc: u32,
    pub fp: String,
    pub schemes: Vec<SchemeFactors>,
}

fn write_curve(out: &OutDir, name: &str, curve: &FactorCurve) -> Result<()> {
    out.write_with(name, |w| curve.write_csv(w))
}

fn write_rho(out: &OutDir, name: &str, ts: &TwoStepScheme, grid: &SpectralGrid) -> Result<()> {
    out.write_with(name, |w| {
        writeln!(w, "s,rho1_re,rho1_im,rho2_re,rho2_im,rho1_abs,rho2_abs")?;
        for &s in grid.samples() {
            match rho_pair(ts, s) {
                Ok((a, b)) => writeln!(
                    w,
                    "{s},{},{},{},{},{},{}",
                    a.re,
                    a.im,
                    b.re,
                    b.im,
                    a.norm(),
                    b.norm()
                )?,
                Err(_) => writeln!(w, "{s},NaN,NaN,NaN,NaN,NaN,NaN")?,
            }
        }
        Ok(())
    })
}

fn two_step(
    out: &OutDir,
    ts: &TwoStepScheme,
    fine: &RationalFunction,
    cfg: &ExperimentConfig,
    grid: &SpectralGrid,
) -> Result<SchemeFactors> {
    let tag = slug(&ts.name);
    write_rho(out, &format!("{tag}_rho.csv"), ts, grid)?;
    let ge = sup_over_grid(|s| gamma_e(ts, s), grid)?;
    write_curve(out, &format!("{tag}_gamma_e.csv"), &ge)?;
    let ke = sup_over_grid(|s| kappa_e(ts, s, cfg.nc), grid)?;
    write_curve(out, &format!("{tag}_kappa_e.csv"), &ke)?;
    let mut gamma_c_star = Vec::new();
    let mut kappa_c_star = Vec::new();
    for &j in &cfg.j_values {
        let gc = sup_over_grid(|s| gamma_c(fine, ts, j, s), grid)?;
        write_curve(out, &format!("{tag}_gamma_c_J{j}.csv"), &gc)?;
        gamma_c_star.push(JValue { j, value: gc.sup });
        let kc = sup_over_grid(|s| kappa_c(fine, ts, j, s, cfg.nc), grid)?;
        write_curve(out, &format!("{tag}_kappa_c_J{j}.csv"), &kc)?;
        kappa_c_star.push(JValue { j, value: kc.sup });
    }
    Ok(SchemeFactors {
        name: ts.name.clone(),
        kind: "two_step",
        gamma_e_star: ge.sup,
        gamma_e_argmax: ge.argmax,
        kappa_e_star: Some(ke.sup),
        gamma_c_star,
        kappa_c_star,
    })
}

fn single_step(out: &OutDir, sc: &SingleStepScheme, grid: &SpectralGrid) -> Result<SchemeFactors> {
    let ge = sup_over_grid(|s| single_step_gamma(&sc.stability, s), grid)?;
    write_curve(out, &format!("{}_gamma_e.csv", slug(&sc.name)), &ge)?;
    Ok(SchemeFactors {
        name: sc.name.clone(),
        kind: "single_step",
        gamma_e_star: ge.sup,
        gamma_e_argmax: ge.argmax,
        kappa_e_star: None,
        gamma_c_star: Vec::new(),
        kappa_c_star: Vec::new(),
    })
}

pub fn run(cfg: &ExperimentConfig, base: &Path, out: &OutDir) -> Result<AnalysisSummary> {
    let grid = cfg.grid.build()?;
    let fine = catalog_single(&cfg.fp)
        .with_context(|| format!("fine propagator `{}`", cfg.fp))?
        .stability;
    let mut schemes = Vec::new();
    for r in cfg.schemes_or(&DEFAULT_SCHEMES) {
        let scheme = r.resolve(base)?;
        log::info!("analyzing {}", scheme.name());
        schemes.push(match scheme {
            Scheme::TwoStep(ts) => two_step(out, &ts, &fine, cfg, &grid)?,
            Scheme::Single(sc) => single_step(out, &sc, &grid)?,
        });
    }
    let summary = AnalysisSummary {
        grid: grid.description().clone(),
        nc: cfg.nc,
        fp: cfg.fp.clone(),
        schemes,
    };
    out.write_json("analysis.json", &summary)?;
    Ok(summary)
}
