//! Linear finite elements on `(0, 1)` with homogeneous Dirichlet conditions.
//!
//! Only interior nodes are unknowns. Operators act through the mass and
//! stiffness pair `(M, K)`; `A = M^{-1} K` is never formed.

pub mod banded;
pub mod problem;
pub mod stepping;

use std::io::Write;

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::quadrature::GAUSS3;

pub use banded::{BlockTridiag, Scalar, Tridiag};
pub use problem::{LinearCase, LoadTerm, Problem, Reaction, SourceForm};
pub use stepping::{
    irk_step, o2cp_extrapolated_step, single_step_apply, two_step_apply, NewtonOptions,
};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Mesh1D {
    n_cells: usize,
}

impl Mesh1D {
    pub fn new(n_cells: usize) -> Result<Self> {
        if n_cells < 2 {
            return Err(Error::InvalidArgument(format!(
                "mesh needs at least 2 cells, got {n_cells}"
            )));
        }
        Ok(Self { n_cells })
    }

    pub fn n_cells(&self) -> usize {
        self.n_cells
    }

    pub fn h(&self) -> f64 {
        1.0 / self.n_cells as f64
    }

    /// Number of unknowns.
    pub fn interior(&self) -> usize {
        self.n_cells - 1
    }

    pub fn nodes(&self) -> Vec<f64> {
        (1..self.n_cells).map(|p| p as f64 * self.h()).collect()
    }
}

/// Mass and stiffness matrices of a mesh.
#[derive(Debug, Clone, PartialEq)]
pub struct FemSystem {
    pub mesh: Mesh1D,
    pub m: Tridiag,
    pub k: Tridiag,
}

pub fn assemble(mesh: Mesh1D) -> FemSystem {
    let n = mesh.interior();
    let h = mesh.h();
    let band = |off: f64, mid: f64| {
        Tridiag::new(vec![off; n - 1], vec![mid; n], vec![off; n - 1]).expect("consistent sizes")
    };
    FemSystem {
        mesh,
        m: band(h / 6.0, 4.0 * h / 6.0),
        k: band(-1.0 / h, 2.0 / h),
    }
}

impl FemSystem {
    pub fn dim(&self) -> usize {
        self.mesh.interior()
    }

    fn check(&self, v: &[impl Copy]) -> Result<()> {
        if v.len() != self.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.dim(),
                got: v.len(),
            });
        }
        Ok(())
    }

    pub fn mass(&self, v: &[f64]) -> Vec<f64> {
        self.m.matvec(v)
    }

    pub fn stiffness(&self, v: &[f64]) -> Vec<f64> {
        self.k.matvec(v)
    }

    /// `(a M + b K) v`.
    pub fn apply_shifted(&self, a: f64, b: f64, v: &[f64]) -> Vec<f64> {
        self.m.combine(a, &self.k, b).matvec(v)
    }

    /// Nodal interpolant of `g`.
    pub fn interpolate(&self, g: impl Fn(f64) -> f64) -> Vec<f64> {
        self.mesh.nodes().into_iter().map(g).collect()
    }

    /// `int g phi_p dx` for every interior hat function, 3-point Gauss per cell.
    pub fn load_vector(&self, g: impl Fn(f64) -> f64) -> Vec<f64> {
        let h = self.mesh.h();
        let n = self.dim();
        let mut out = vec![0.0; n];
        for cell in 0..self.mesh.n_cells() {
            let x0 = cell as f64 * h;
            let (mut left, mut right) = (0.0, 0.0);
            for (xi, w) in GAUSS3 {
                let t = 0.5 * (xi + 1.0);
                let gx = g(x0 + t * h) * w * 0.5 * h;
                left += gx * (1.0 - t);
                right += gx * t;
            }
            // cell [x_cell, x_cell+1] touches nodes cell and cell + 1
            if cell >= 1 {
                out[cell - 1] += left;
            }
            if cell < n {
                out[cell] += right;
            }
        }
        out
    }

    /// Solves `(a M + b K) x = rhs`.
    pub fn solve_shifted(&self, a: f64, b: f64, rhs: &[f64]) -> Result<Vec<f64>> {
        self.check(rhs)?;
        self.m.combine(a, &self.k, b).solve(rhs)
    }

    /// Complex variant of [`FemSystem::solve_shifted`].
    pub fn solve_shifted_complex(
        &self,
        a: Complex64,
        b: Complex64,
        rhs: &[Complex64],
    ) -> Result<Vec<Complex64>> {
        self.check(rhs)?;
        self.m.combine(a, &self.k, b).solve(rhs)
    }

    /// Discrete eigenpair `K v = lambda M v` with mode number `j >= 1`.
    pub fn eigenpair(&self, j: usize) -> (f64, Vec<f64>) {
        let h = self.mesh.h();
        let c = (j as f64 * std::f64::consts::PI * h).cos();
        let lambda = 6.0 / (h * h) * (1.0 - c) / (2.0 + c);
        let v = self.interpolate(|x| (j as f64 * std::f64::consts::PI * x).sin());
        (lambda, v)
    }
}

/// `sqrt(v^T M v)`.
pub fn l2_norm(v: &[f64], sys: &FemSystem) -> Result<f64> {
    sys.check(v)?;
    let mv = sys.mass(v);
    Ok(v.iter().zip(&mv).map(|(a, b)| a * b).sum::<f64>().max(0.0).sqrt())
}

/// L2 distance between two states.
pub fn l2_distance(a: &[f64], b: &[f64], sys: &FemSystem) -> Result<f64> {
    sys.check(a)?;
    let d: Vec<f64> = a.iter().zip(b).map(|(x, y)| x - y).collect();
    l2_norm(&d, sys)
}

/// Writes `node,x,value` rows.
pub fn write_state_csv(v: &[f64], sys: &FemSystem, mut w: impl Write) -> std::io::Result<()> {
    writeln!(w, "node,x,value")?;
    for (p, (x, val)) in sys.mesh.nodes().iter().zip(v).enumerate() {
        writeln!(w, "{},{x},{val}", p + 1)?;
    }
    Ok(())
}
