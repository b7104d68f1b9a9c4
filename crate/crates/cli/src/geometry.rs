//! `stability`, `contour` and `jorder`.

use std::io::Write;
use std::path::Path;

use anyhow::{bail, Context, Result};
use parareal_core::analysis::{
    a_stability_check, boundary_locus, contour_map, j_order_study, AStabilityReport, ContourKind,
    JOrderStudy,
};
use parareal_core::propagators::{catalog_single, catalog_two_step, Scheme, TwoStepScheme};
use serde::Serialize;

use crate::config::ExperimentConfig;
use crate::output::{slug, OutDir};

fn two_step_schemes(cfg: &ExperimentConfig, base: &Path) -> Result<Vec<TwoStepScheme>> {
    cfg.schemes_or(&["bdf2", "o2cp"])
        .iter()
        .map(|r| match r.resolve(base)? {
            Scheme::TwoStep(ts) => Ok(ts),
            Scheme::Single(sc) => bail!("`{}` is not a two-step scheme", sc.name),
        })
        .collect()
}

#[derive(Debug, Serialize)]
pub struct StabilityEntry {
    pub name: String,
    #[serde(flatten)]
    pub report: AStabilityReport,
}

pub fn stability(cfg: &ExperimentConfig, base: &Path, out: &OutDir) -> Result<Vec<StabilityEntry>> {
    let mut entries = Vec::new();
    for ts in two_step_schemes(cfg, base)? {
        let locus = boundary_locus(&ts, cfg.locus_samples)?;
        out.write_with(&format!("{}_locus.csv", slug(&ts.name)), |w| {
            writeln!(w, "theta,mu_re,mu_im")?;
            for p in &locus {
                match p.mu {
                    Some(mu) => writeln!(w, "{},{},{}", p.theta, mu.re, mu.im)?,
                    None => writeln!(w, "{},NaN,NaN", p.theta)?,
                }
            }
            Ok(())
        })?;
        let report = a_stability_check(&ts, cfg.theta_samples)?;
        log::info!("{}: A-stable = {}", ts.name, report.a_stable);
        entries.push(StabilityEntry { name: ts.name.clone(), report });
    }
    out.write_json("stability.json", &entries)?;
    Ok(entries)
}

#[derive(Debug, Serialize)]
pub struct ContourSummary {
    pub name: String,
    pub kind: ContourKind,
    pub re_range: [f64; 2],
    pub im_range: [f64; 2],
    pub resolution: [usize; 2],
    /// Grid points carrying the `+inf` sentinel.
    pub sentinel_count: usize,
    /// Sentinel points with zero real part.
    pub sentinel_on_imaginary_axis: usize,
    /// Largest finite value.
    pub max_finite: Option<f64>,
}

pub fn contour(cfg: &ExperimentConfig, base: &Path, out: &OutDir) -> Result<Vec<ContourSummary>> {
    let label = match cfg.contour {
        ContourKind::GammaE => "gamma_e".to_string(),
        ContourKind::KappaE { nc } => format!("kappa_e_nc{nc}"),
    };
    let mut summaries = Vec::new();
    for ts in two_step_schemes(cfg, base)? {
        let map = contour_map(
            cfg.contour,
            &ts,
            (cfg.re_range[0], cfg.re_range[1]),
            (cfg.im_range[0], cfg.im_range[1]),
            (cfg.resolution[0], cfg.resolution[1]),
        )?;
        out.write_with(&format!("{}_contour_{label}.csv", slug(&ts.name)), |w| map.write_csv(w))?;
        let mut sentinel_count = 0;
        let mut on_axis = 0;
        let mut max_finite: Option<f64> = None;
        for (iy, _) in map.im.iter().enumerate() {
            for (ix, x) in map.re.iter().enumerate() {
                let v = map.at(ix, iy);
                if v.is_infinite() {
                    sentinel_count += 1;
                    if x.abs() < 1e-12 {
                        on_axis += 1;
                    }
                } else if v.is_finite() {
                    max_finite = Some(max_finite.map_or(v, |m| m.max(v)));
                }
            }
        }
        summaries.push(ContourSummary {
            name: ts.name.clone(),
            kind: cfg.contour,
            re_range: cfg.re_range,
            im_range: cfg.im_range,
            resolution: cfg.resolution,
            sentinel_count,
            sentinel_on_imaginary_axis: on_axis,
            max_finite,
        });
    }
    out.write_json("contour.json", &summaries)?;
    Ok(summaries)
}

#[derive(Debug, Serialize)]
pub struct JOrderEntry {
    pub fp: String,
    pub order: u32,
    #[serde(flatten)]
    pub study: JOrderStudy,
}

#[derive(Debug, Serialize)]
pub struct JOrderSummary {
    pub cp: String,
    pub j_values: Vec<u32>,
    pub studies: Vec<JOrderEntry>,
}

pub fn jorder(cfg: &ExperimentConfig, out: &OutDir) -> Result<JOrderSummary> {
    let grid = cfg.grid.build()?;
    let ts = catalog_two_step(&cfg.cp).with_context(|| format!("coarse propagator `{}`", cfg.cp))?;
    let mut studies = Vec::new();
    for fp in &cfg.fps {
        let fine = catalog_single(fp).with_context(|| format!("fine propagator `{fp}`"))?;
        let study = j_order_study(&fine.stability, &ts, &cfg.j_values, &grid)?;
        out.write_with(&format!("jorder_{}.csv", slug(fp)), |w| {
            writeln!(w, "j,gamma_star,star_gap,gap")?;
            for r in &study.rows {
                writeln!(w, "{},{},{},{}", r.j, r.gamma_star, r.star_gap, r.gap)?;
            }
            Ok(())
        })?;
        log::info!("{fp}: slope {:.3}", study.slope);
        studies.push(JOrderEntry {
            fp: fp.clone(),
            order: fine.order().unwrap_or(0),
            study,
        });
    }
    let summary = JOrderSummary {
        cp: cfg.cp.clone(),
        j_values: cfg.j_values.clone(),
        studies,
    };
    out.write_json("jorder.json", &summary)?;
    Ok(summary)
}
