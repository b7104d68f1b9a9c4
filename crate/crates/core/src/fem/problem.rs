//! Problem data: `M u' + K u = G(t) + M f(u)` on the unit interval.

use std::f64::consts::PI;
use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use super::{assemble, FemSystem, Mesh1D};
use crate::error::{Error, Result};

type TimeFn = Arc<dyn Fn(f64) -> f64 + Send + Sync>;
type ExactFn = Arc<dyn Fn(f64, f64) -> f64 + Send + Sync>;

/// Separable load `vector * time(t)`.
#[derive(Clone)]
pub struct LoadTerm {
    pub vector: Vec<f64>,
    pub time: TimeFn,
}

/// Cubic reaction `c u (1 - u^2)`, applied nodewise and then mapped
/// through the mass matrix.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Reaction {
    pub c: f64,
}

impl Reaction {
    pub fn value(&self, u: f64) -> f64 {
        self.c * u * (1.0 - u * u)
    }

    pub fn derivative(&self, u: f64) -> f64 {
        self.c * (1.0 - 3.0 * u * u)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LinearCase {
    /// `T = 10`, `u0` the indicator of `(0, 1/2)`.
    I,
    /// `T = 10`, `u0 = sin(pi x)`.
    Ii,
    /// `T = 1`, `u0 = sin(pi x)`.
    Iii,
}

impl LinearCase {
    pub fn t_final(self) -> f64 {
        match self {
            LinearCase::I | LinearCase::Ii => 10.0,
            LinearCase::Iii => 1.0,
        }
    }
}

/// Which source drives the linear heat equation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SourceForm {
    /// `sin(pi x) (-pi sin(pi t) + pi^2 sin(pi x) cos(pi t))`.
    #[default]
    Printed,
    /// `sin(pi x) (-pi sin(pi t) + pi^2 cos(pi t))`, whose solution with
    /// `u0 = sin(pi x)` is `sin(pi x) cos(pi t)`.
    Manufactured,
}

#[derive(Clone)]
pub struct Problem {
    pub name: String,
    pub sys: FemSystem,
    pub u0: Vec<f64>,
    pub t_final: f64,
    pub loads: Vec<LoadTerm>,
    pub reaction: Option<Reaction>,
    exact: Option<ExactFn>,
}

impl fmt::Debug for Problem {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Problem")
            .field("name", &self.name)
            .field("n_cells", &self.sys.mesh.n_cells())
            .field("t_final", &self.t_final)
            .field("loads", &self.loads.len())
            .field("reaction", &self.reaction)
            .finish()
    }
}

fn sin_px(x: f64) -> f64 {
    (PI * x).sin()
}

fn manufactured_solution(x: f64, t: f64) -> f64 {
    (PI * x).sin() * (PI * t).cos()
}

impl Problem {
    /// Source-free problem with the given initial state.
    pub fn homogeneous(sys: FemSystem, u0: Vec<f64>, t_final: f64) -> Result<Self> {
        if u0.len() != sys.dim() {
            return Err(Error::DimensionMismatch {
                expected: sys.dim(),
                got: u0.len(),
            });
        }
        Ok(Self {
            name: "homogeneous".into(),
            sys,
            u0,
            t_final,
            loads: Vec::new(),
            reaction: None,
            exact: None,
        })
    }

    /// Heat equation `u_t - u_xx = f` for one of the three data sets.
    pub fn linear(case: LinearCase, form: SourceForm, n_cells: usize) -> Result<Self> {
        let sys = assemble(Mesh1D::new(n_cells)?);
        let u0 = match case {
            LinearCase::I => sys.interpolate(|x| if x > 0.0 && x < 0.5 { 1.0 } else { 0.0 }),
            LinearCase::Ii | LinearCase::Iii => sys.interpolate(sin_px),
        };
        let first = LoadTerm {
            vector: sys.load_vector(sin_px),
            time: Arc::new(|t: f64| -PI * (PI * t).sin()),
        };
        let second = match form {
            SourceForm::Printed => LoadTerm {
                vector: sys.load_vector(|x| sin_px(x) * sin_px(x)),
                time: Arc::new(|t: f64| PI * PI * (PI * t).cos()),
            },
            SourceForm::Manufactured => LoadTerm {
                vector: sys.load_vector(sin_px),
                time: Arc::new(|t: f64| PI * PI * (PI * t).cos()),
            },
        };
        let exact: Option<ExactFn> = match (case, form) {
            (LinearCase::Ii | LinearCase::Iii, SourceForm::Manufactured) => {
                Some(Arc::new(manufactured_solution))
            }
            _ => None,
        };
        Ok(Self {
            name: format!("linear-{}", serde_json::to_string(&case).unwrap().trim_matches('"')),
            sys,
            u0,
            t_final: case.t_final(),
            loads: vec![first, second],
            reaction: None,
            exact,
        })
    }

    /// `u_t = u_xx + c u (1 - u^2) + g` with `g` chosen so that
    /// `u = sin(pi x) cos(pi t)`; `T = 10`.
    pub fn semilinear(c: f64, n_cells: usize) -> Result<Self> {
        let sys = assemble(Mesh1D::new(n_cells)?);
        let u0 = sys.interpolate(sin_px);
        // g = sin(pi x)(-pi sin + pi^2 cos - c cos) + c sin^3(pi x) cos^3
        let loads = vec![
            LoadTerm {
                vector: sys.load_vector(sin_px),
                time: Arc::new(move |t: f64| {
                    let (s, co) = (PI * t).sin_cos();
                    -PI * s + PI * PI * co - c * co
                }),
            },
            LoadTerm {
                vector: sys.load_vector(|x| sin_px(x).powi(3)),
                time: Arc::new(move |t: f64| c * (PI * t).cos().powi(3)),
            },
        ];
        Ok(Self {
            name: format!("semilinear-c{c}"),
            sys,
            u0,
            t_final: 10.0,
            loads,
            reaction: Some(Reaction { c }),
            exact: Some(Arc::new(manufactured_solution)),
        })
    }

    pub fn with_t_final(mut self, t_final: f64) -> Self {
        self.t_final = t_final;
        self
    }

    pub fn dim(&self) -> usize {
        self.sys.dim()
    }

    pub fn is_linear(&self) -> bool {
        self.reaction.is_none()
    }

    /// Load vector `G(t)`.
    pub fn load(&self, t: f64) -> Vec<f64> {
        let mut g = vec![0.0; self.dim()];
        for term in &self.loads {
            let w = (term.time)(t);
            for (gi, vi) in g.iter_mut().zip(&term.vector) {
                *gi += w * vi;
            }
        }
        g
    }

    /// `M f(u)` for the reaction term, zero if absent.
    pub fn reaction_load(&self, u: &[f64]) -> Vec<f64> {
        match self.reaction {
            None => vec![0.0; self.dim()],
            Some(r) => {
                let fu: Vec<f64> = u.iter().map(|&x| r.value(x)).collect();
                self.sys.mass(&fu)
            }
        }
    }

    /// Full right-hand side `G(t) + M f(u)`.
    pub fn forcing(&self, u: &[f64], t: f64) -> Vec<f64> {
        let mut g = self.load(t);
        if self.reaction.is_some() {
            for (gi, ri) in g.iter_mut().zip(self.reaction_load(u)) {
                *gi += ri;
            }
        }
        g
    }

    /// Interpolant of the exact solution at time `t`, when known.
    pub fn exact(&self, t: f64) -> Option<Vec<f64>> {
        self.exact
            .as_ref()
            .map(|e| self.sys.interpolate(|x| e(x, t)))
    }
}
