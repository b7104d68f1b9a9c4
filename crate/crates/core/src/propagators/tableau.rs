use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rational::{Polynomial, RationalFunction};

/// Implicit Runge-Kutta method `(A, b, c)` of classical order `order`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ButcherTableau {
    /// Row-major `stages x stages` coefficient matrix.
    a: Vec<f64>,
    b: Vec<f64>,
    c: Vec<f64>,
    order: u32,
}

impl ButcherTableau {
    pub fn new(a: Vec<Vec<f64>>, b: Vec<f64>, c: Vec<f64>, order: u32) -> Result<Self> {
        let s = b.len();
        if s == 0 || c.len() != s || a.len() != s || a.iter().any(|row| row.len() != s) {
            return Err(Error::InvalidArgument(format!(
                "tableau shape mismatch: {} rows, |b| = {s}, |c| = {}",
                a.len(),
                c.len()
            )));
        }
        let sum: f64 = b.iter().sum();
        if (sum - 1.0).abs() > 1e-12 {
            return Err(Error::InvalidArgument(format!(
                "tableau weights sum to {sum}, expected 1"
            )));
        }
        Ok(Self {
            a: a.into_iter().flatten().collect(),
            b,
            c,
            order,
        })
    }

    pub fn stages(&self) -> usize {
        self.b.len()
    }

    pub fn a(&self, i: usize, j: usize) -> f64 {
        self.a[i * self.stages() + j]
    }

    pub fn b(&self) -> &[f64] {
        &self.b
    }

    pub fn c(&self) -> &[f64] {
        &self.c
    }

    pub fn order(&self) -> u32 {
        self.order
    }

    /// True when the last row of `A` equals `b`.
    pub fn is_stiffly_accurate(&self) -> bool {
        let s = self.stages();
        (0..s).all(|j| (self.a(s - 1, j) - self.b[j]).abs() < 1e-15)
    }

    /// `b^T A^{-1}`, used to recover the step update from the stage values
    /// without a mass-matrix solve: `u_new = u + sum_i w_i (Y_i - u)`.
    pub fn update_weights(&self) -> Result<Vec<f64>> {
        let s = self.stages();
        // solve A^T w = b by Gaussian elimination with partial pivoting
        let mut m: Vec<Vec<f64>> = (0..s)
            .map(|i| {
                let mut row: Vec<f64> = (0..s).map(|j| self.a(j, i)).collect();
                row.push(self.b[i]);
                row
            })
            .collect();
        for col in 0..s {
            let piv = (col..s)
                .max_by(|&x, &y| m[x][col].abs().total_cmp(&m[y][col].abs()))
                .unwrap_or(col);
            if m[piv][col].abs() < 1e-14 {
                return Err(Error::SingularSystem {
                    row: col,
                    pivot: m[piv][col],
                });
            }
            m.swap(col, piv);
            for r in 0..s {
                if r != col {
                    let f = m[r][col] / m[col][col];
                    for k in col..=s {
                        m[r][k] -= f * m[col][k];
                    }
                }
            }
        }
        Ok((0..s).map(|i| m[i][s] / m[i][i]).collect())
    }

    pub fn backward_euler() -> Self {
        Self::new(vec![vec![1.0]], vec![1.0], vec![1.0], 1).expect("valid tableau")
    }

    /// Two-stage L-stable SDIRK with `gamma = (2 - sqrt 2)/2`.
    pub fn sdirk2() -> Self {
        let g = (2.0 - std::f64::consts::SQRT_2) / 2.0;
        Self::new(
            vec![vec![g, 0.0], vec![1.0 - g, g]],
            vec![1.0 - g, g],
            vec![g, 1.0],
            2,
        )
        .expect("valid tableau")
    }

    pub fn radau_iia_2() -> Self {
        Self::new(
            vec![vec![5.0 / 12.0, -1.0 / 12.0], vec![3.0 / 4.0, 1.0 / 4.0]],
            vec![3.0 / 4.0, 1.0 / 4.0],
            vec![1.0 / 3.0, 1.0],
            3,
        )
        .expect("valid tableau")
    }

    pub fn radau_iia_3() -> Self {
        let r6 = 6.0f64.sqrt();
        let a = vec![
            vec![
                (88.0 - 7.0 * r6) / 360.0,
                (296.0 - 169.0 * r6) / 1800.0,
                (-2.0 + 3.0 * r6) / 225.0,
            ],
            vec![
                (296.0 + 169.0 * r6) / 1800.0,
                (88.0 + 7.0 * r6) / 360.0,
                (-2.0 - 3.0 * r6) / 225.0,
            ],
            vec![(16.0 - r6) / 36.0, (16.0 + r6) / 36.0, 1.0 / 9.0],
        ];
        let b = a[2].clone();
        Self::new(a, b, vec![(4.0 - r6) / 10.0, (4.0 + r6) / 10.0, 1.0], 5)
            .expect("valid tableau")
    }

    pub fn lobatto_iiic_3() -> Self {
        Self::new(
            vec![
                vec![1.0 / 6.0, -1.0 / 3.0, 1.0 / 6.0],
                vec![1.0 / 6.0, 5.0 / 12.0, -1.0 / 12.0],
                vec![1.0 / 6.0, 2.0 / 3.0, 1.0 / 6.0],
            ],
            vec![1.0 / 6.0, 2.0 / 3.0, 1.0 / 6.0],
            vec![0.0, 0.5, 1.0],
            4,
        )
        .expect("valid tableau")
    }
}

/// Stability function `det(I + sA - s 1 b^T) / det(I + sA)` of a tableau,
/// for the decay problem `u' = -lambda u` with `s = lambda dt`.
pub fn stability_from_tableau(t: &ButcherTableau) -> RationalFunction {
    let s = t.stages();
    let entry = |i: usize, j: usize, with_b: bool| {
        let delta = if i == j { 1.0 } else { 0.0 };
        let slope = t.a(i, j) - if with_b { t.b()[j] } else { 0.0 };
        Polynomial::new(vec![delta, slope])
    };
    let num_m: Vec<Vec<Polynomial>> = (0..s)
        .map(|i| (0..s).map(|j| entry(i, j, true)).collect())
        .collect();
    let den_m: Vec<Vec<Polynomial>> = (0..s)
        .map(|i| (0..s).map(|j| entry(i, j, false)).collect())
        .collect();
    RationalFunction::new(poly_det(&num_m), poly_det(&den_m))
        .expect("det(I + sA) is 1 at s = 0")
}

/// Cofactor expansion along the first row.
fn poly_det(m: &[Vec<Polynomial>]) -> Polynomial {
    match m.len() {
        0 => Polynomial::constant(1.0),
        1 => m[0][0].clone(),
        n => {
            let mut acc = Polynomial::zero();
            for j in 0..n {
                if m[0][j].is_zero() {
                    continue;
                }
                let minor: Vec<Vec<Polynomial>> = m[1..]
                    .iter()
                    .map(|row| {
                        row.iter()
                            .enumerate()
                            .filter(|(k, _)| *k != j)
                            .map(|(_, p)| p.clone())
                            .collect()
                    })
                    .collect();
                let term = &m[0][j] * &poly_det(&minor);
                acc = if j % 2 == 0 { &acc + &term } else { &acc - &term };
            }
            acc
        }
    }
}
