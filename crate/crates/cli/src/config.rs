//! Declarative experiment configuration read from `--config`.

use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::ValueEnum;
use parareal_core::analysis::{ContourKind, GridSpec};
use parareal_core::fem::{LinearCase, SourceForm};
use parareal_core::optimizer::OptimizerConfig;
use parareal_core::parareal::InitMode;
use parareal_core::propagators::{catalog, Scheme, SchemeDefinition};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Profile {
    /// Mesh with 1000 cells and three timing repetitions.
    Paper,
    /// Mesh with 200 cells and a single repetition.
    Test,
}

/// A scheme given by catalog name, by definition, or by a file holding a
/// definition (as written by `optimize`).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum SchemeRef {
    Name(String),
    File { file: PathBuf },
    Definition(SchemeDefinition),
}

impl SchemeRef {
    pub fn resolve(&self, base: &Path) -> Result<Scheme> {
        Ok(match self {
            SchemeRef::Name(name) => catalog(name)?,
            SchemeRef::Definition(def) => def.build()?,
            SchemeRef::File { file } => {
                let path = if file.is_absolute() { file.clone() } else { base.join(file) };
                let text = std::fs::read_to_string(&path)
                    .with_context(|| format!("reading scheme file {}", path.display()))?;
                let def: SchemeDefinition = serde_json::from_str(&text)
                    .with_context(|| format!("parsing scheme file {}", path.display()))?;
                def.build()?
            }
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    /// Optional guard: must match the subcommand when present.
    pub kind: Option<String>,

    // analysis, stability, contour
    pub schemes: Option<Vec<SchemeRef>>,
    pub grid: GridSpec,
    /// Coarsening factors for `gamma_c`/`kappa_c` and the J-order study.
    pub j_values: Vec<u32>,
    /// Number of coarse intervals used for `kappa`.
    pub nc: u32,
    pub theta_samples: usize,
    pub locus_samples: usize,
    pub contour: ContourKind,
    pub re_range: [f64; 2],
    pub im_range: [f64; 2],
    pub resolution: [usize; 2],

    // J-order study
    pub fps: Vec<String>,
    pub cp: String,

    // parareal experiments
    pub case: LinearCase,
    pub source: SourceForm,
    pub c_l: Vec<f64>,
    pub j: Vec<usize>,
    /// Fine step; defaults to 0.01 (linear) or 0.01 / c_L (nonlinear).
    pub dt: Option<f64>,
    pub t_final: Option<f64>,
    pub n_cells: Option<usize>,
    pub cps: Option<Vec<String>>,
    pub fp: String,
    pub k_max: usize,
    pub tol: f64,
    pub init: InitMode,
    pub seed: u64,
    pub repetitions: Option<usize>,
    /// Record wall-clock costs. Without them every artifact is a pure
    /// function of the configuration.
    pub measure_costs: bool,

    pub optimizer: OptimizerConfig,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            kind: None,
            schemes: None,
            grid: GridSpec::Default,
            j_values: vec![10, 20, 40, 80],
            nc: 1000,
            theta_samples: 10_000,
            locus_samples: 2000,
            contour: ContourKind::GammaE,
            re_range: [-1.0, 4.0],
            im_range: [-4.0, 4.0],
            resolution: [101, 161],
            fps: vec!["radau_iia_2".into(), "lobatto_iiic_3".into(), "radau_iia_3".into()],
            cp: "o2cp".into(),
            case: LinearCase::I,
            source: SourceForm::Printed,
            c_l: vec![1.0, 5.0, 10.0],
            j: vec![20, 50],
            dt: None,
            t_final: None,
            n_cells: None,
            cps: None,
            fp: "radau_iia_3".into(),
            k_max: 50,
            tol: 1e-9,
            init: InitMode::Random,
            seed: 0,
            repetitions: None,
            measure_costs: true,
            optimizer: OptimizerConfig::default(),
        }
    }
}

impl ExperimentConfig {
    pub fn load(path: Option<&Path>) -> Result<(Self, PathBuf)> {
        match path {
            None => Ok((Self::default(), PathBuf::from("."))),
            Some(p) => {
                let text = std::fs::read_to_string(p)
                    .with_context(|| format!("reading config {}", p.display()))?;
                let cfg: Self = serde_json::from_str(&text)
                    .with_context(|| format!("parsing config {}", p.display()))?;
                let base = p.parent().map(Path::to_path_buf).unwrap_or_else(|| PathBuf::from("."));
                Ok((cfg, base))
            }
        }
    }

    pub fn check_kind(&self, command: &str) -> Result<()> {
        match &self.kind {
            Some(k) if k != command => bail!("config is for `{k}`, not `{command}`"),
            _ => Ok(()),
        }
    }

    pub fn n_cells(&self, profile: Profile) -> usize {
        self.n_cells.unwrap_or(match profile {
            Profile::Paper => 1000,
            Profile::Test => 200,
        })
    }

    pub fn repetitions(&self, profile: Profile) -> usize {
        self.repetitions
            .unwrap_or(match profile {
                Profile::Paper => 3,
                Profile::Test => 1,
            })
            .max(1)
    }

    pub fn schemes_or(&self, default: &[&str]) -> Vec<SchemeRef> {
        self.schemes
            .clone()
            .unwrap_or_else(|| default.iter().map(|s| SchemeRef::Name(s.to_string())).collect())
    }

    pub fn cps_or(&self, default: &[&str]) -> Vec<String> {
        self.cps
            .clone()
            .unwrap_or_else(|| default.iter().map(|s| s.to_string()).collect())
    }
}
