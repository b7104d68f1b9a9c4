//! Tridiagonal and block-tridiagonal direct solvers.

use std::ops::{Add, Div, Mul, Neg, Sub};

use num_complex::Complex64;
use num_traits::{One, Zero};

use crate::error::{Error, Result};

/// Field elements the solvers work over.
pub trait Scalar:
    Copy
    + Zero
    + One
    + Add<Output = Self>
    + Sub<Output = Self>
    + Mul<Output = Self>
    + Div<Output = Self>
    + Neg<Output = Self>
    + Mul<f64, Output = Self>
    + Send
    + Sync
{
    fn modulus(self) -> f64;
    fn from_real(x: f64) -> Self;
}

impl Scalar for f64 {
    fn modulus(self) -> f64 {
        self.abs()
    }
    fn from_real(x: f64) -> Self {
        x
    }
}

impl Scalar for Complex64 {
    fn modulus(self) -> f64 {
        self.norm()
    }
    fn from_real(x: f64) -> Self {
        Complex64::new(x, 0.0)
    }
}

/// Tridiagonal matrix stored by its three diagonals.
#[derive(Debug, Clone, PartialEq)]
pub struct Tridiag<T = f64> {
    /// `sub[i]` is entry `(i + 1, i)`.
    pub sub: Vec<T>,
    pub diag: Vec<T>,
    /// `sup[i]` is entry `(i, i + 1)`.
    pub sup: Vec<T>,
}

impl<T: Scalar> Tridiag<T> {
    pub fn new(sub: Vec<T>, diag: Vec<T>, sup: Vec<T>) -> Result<Self> {
        let n = diag.len();
        if n == 0 || sub.len() + 1 != n || sup.len() + 1 != n {
            return Err(Error::DimensionMismatch {
                expected: n.saturating_sub(1),
                got: sub.len().max(sup.len()),
            });
        }
        Ok(Self { sub, diag, sup })
    }

    pub fn dim(&self) -> usize {
        self.diag.len()
    }

    pub fn matvec(&self, x: &[T]) -> Vec<T> {
        let n = self.dim();
        (0..n)
            .map(|i| {
                let mut acc = self.diag[i] * x[i];
                if i > 0 {
                    acc = acc + self.sub[i - 1] * x[i - 1];
                }
                if i + 1 < n {
                    acc = acc + self.sup[i] * x[i + 1];
                }
                acc
            })
            .collect()
    }

    /// Thomas algorithm without pivoting. Meant for matrices whose
    /// Hermitian part is definite, such as `a M + b K` with `Re a > 0`.
    pub fn solve(&self, rhs: &[T]) -> Result<Vec<T>> {
        let n = self.dim();
        if rhs.len() != n {
            return Err(Error::DimensionMismatch {
                expected: n,
                got: rhs.len(),
            });
        }
        let scale = self
            .diag
            .iter()
            .map(|d| d.modulus())
            .fold(0.0, f64::max)
            .max(f64::MIN_POSITIVE);
        let mut c = vec![T::zero(); n];
        let mut d = vec![T::zero(); n];
        let mut piv = self.diag[0];
        for i in 0..n {
            if i > 0 {
                piv = self.diag[i] - self.sub[i - 1] * c[i - 1];
            }
            if piv.modulus() <= 1e-14 * scale {
                return Err(Error::SingularSystem {
                    row: i,
                    pivot: piv.modulus(),
                });
            }
            if i + 1 < n {
                c[i] = self.sup[i] / piv;
            }
            d[i] = if i == 0 {
                rhs[0] / piv
            } else {
                (rhs[i] - self.sub[i - 1] * d[i - 1]) / piv
            };
        }
        for i in (0..n.saturating_sub(1)).rev() {
            d[i] = d[i] - c[i] * d[i + 1];
        }
        Ok(d)
    }
}

impl Tridiag<f64> {
    /// `a self + b other` over any scalar field.
    pub fn combine<T: Scalar>(&self, a: T, other: &Tridiag<f64>, b: T) -> Tridiag<T> {
        let lin = |x: &[f64], y: &[f64]| -> Vec<T> {
            x.iter().zip(y).map(|(&p, &q)| a * p + b * q).collect()
        };
        Tridiag {
            sub: lin(&self.sub, &other.sub),
            diag: lin(&self.diag, &other.diag),
            sup: lin(&self.sup, &other.sup),
        }
    }

    /// True if the LDL^T factorization has only positive pivots.
    pub fn is_positive_definite(&self) -> bool {
        let mut piv = self.diag[0];
        if piv <= 0.0 {
            return false;
        }
        for i in 1..self.dim() {
            piv = self.diag[i] - self.sub[i - 1] * self.sup[i - 1] / piv;
            if piv <= 0.0 {
                return false;
            }
        }
        true
    }
}

/// Dense `s x s` solve with partial pivoting, in place on `b` (`s x k`,
/// row-major). `a` is destroyed.
fn dense_solve(a: &mut [f64], b: &mut [f64], s: usize, k: usize) -> Result<()> {
    for col in 0..s {
        let mut piv = col;
        for r in col + 1..s {
            if a[r * s + col].abs() > a[piv * s + col].abs() {
                piv = r;
            }
        }
        let p = a[piv * s + col];
        if p.abs() < 1e-300 {
            return Err(Error::SingularSystem {
                row: col,
                pivot: p.abs(),
            });
        }
        if piv != col {
            for j in 0..s {
                a.swap(piv * s + j, col * s + j);
            }
            for j in 0..k {
                b.swap(piv * k + j, col * k + j);
            }
        }
        for r in col + 1..s {
            let f = a[r * s + col] / a[col * s + col];
            if f == 0.0 {
                continue;
            }
            for j in col..s {
                a[r * s + j] -= f * a[col * s + j];
            }
            for j in 0..k {
                b[r * k + j] -= f * b[col * k + j];
            }
        }
    }
    for col in (0..s).rev() {
        for j in 0..k {
            let mut v = b[col * k + j];
            for m in col + 1..s {
                v -= a[col * s + m] * b[m * k + j];
            }
            b[col * k + j] = v / a[col * s + col];
        }
    }
    Ok(())
}

fn block_mul(a: &[f64], b: &[f64], s: usize, k: usize) -> Vec<f64> {
    let mut out = vec![0.0; s * k];
    for i in 0..s {
        for m in 0..s {
            let aim = a[i * s + m];
            if aim == 0.0 {
                continue;
            }
            for j in 0..k {
                out[i * k + j] += aim * b[m * k + j];
            }
        }
    }
    out
}

/// Block-tridiagonal matrix with dense `s x s` blocks (row-major).
#[derive(Debug, Clone, PartialEq)]
pub struct BlockTridiag {
    pub block: usize,
    /// `sub[p]` couples row `p + 1` to column `p`.
    pub sub: Vec<Vec<f64>>,
    pub diag: Vec<Vec<f64>>,
    pub sup: Vec<Vec<f64>>,
}

impl BlockTridiag {
    pub fn nodes(&self) -> usize {
        self.diag.len()
    }

    pub fn matvec(&self, x: &[f64]) -> Vec<f64> {
        let (s, n) = (self.block, self.nodes());
        let mut y = vec![0.0; s * n];
        let mut add = |p: usize, blk: &[f64], q: usize| {
            let r = block_mul(blk, &x[q * s..(q + 1) * s], s, 1);
            for i in 0..s {
                y[p * s + i] += r[i];
            }
        };
        for p in 0..n {
            add(p, &self.diag[p], p);
            if p > 0 {
                add(p, &self.sub[p - 1], p - 1);
            }
            if p + 1 < n {
                add(p, &self.sup[p], p + 1);
            }
        }
        y
    }

    /// Block Thomas elimination; `rhs` is node-major.
    pub fn solve(&self, rhs: &[f64]) -> Result<Vec<f64>> {
        let (s, n) = (self.block, self.nodes());
        if rhs.len() != s * n {
            return Err(Error::DimensionMismatch {
                expected: s * n,
                got: rhs.len(),
            });
        }
        match s {
            1 => return self.solve_fixed::<1>(rhs),
            2 => return self.solve_fixed::<2>(rhs),
            3 => return self.solve_fixed::<3>(rhs),
            _ => {}
        }
        let w = s + 1;
        // row i of node p holds [C'_p row i | d'_p[i]]
        let mut cd = vec![0.0; n * s * w];
        let mut den = vec![0.0; s * s];
        for p in 0..n {
            den.copy_from_slice(&self.diag[p]);
            let (done, rest) = cd.split_at_mut(p * s * w);
            let cur = &mut rest[..s * w];
            for i in 0..s {
                if p + 1 < n {
                    cur[i * w..i * w + s].copy_from_slice(&self.sup[p][i * s..(i + 1) * s]);
                }
                cur[i * w + s] = rhs[p * s + i];
            }
            if p > 0 {
                let l = &self.sub[p - 1];
                let prev = &done[(p - 1) * s * w..];
                for i in 0..s {
                    for m in 0..s {
                        let lim = l[i * s + m];
                        if lim == 0.0 {
                            continue;
                        }
                        for j in 0..s {
                            den[i * s + j] -= lim * prev[m * w + j];
                        }
                        cur[i * w + s] -= lim * prev[m * w + s];
                    }
                }
            }
            dense_solve(&mut den, cur, s, w).map_err(|e| match e {
                Error::SingularSystem { pivot, .. } => Error::SingularSystem { row: p * s, pivot },
                e => e,
            })?;
        }
        let mut x = vec![0.0; s * n];
        for p in (0..n).rev() {
            let blk = &cd[p * s * w..(p + 1) * s * w];
            for i in 0..s {
                let mut v = blk[i * w + s];
                if p + 1 < n {
                    for m in 0..s {
                        v -= blk[i * w + m] * x[(p + 1) * s + m];
                    }
                }
                x[p * s + i] = v;
            }
        }
        Ok(x)
    }

    /// Block Thomas with compile-time block size.
    fn solve_fixed<const S: usize>(&self, rhs: &[f64]) -> Result<Vec<f64>> {
        let n = self.nodes();
        let load = |v: &[f64]| -> [[f64; S]; S] {
            let mut m = [[0.0; S]; S];
            for i in 0..S {
                m[i].copy_from_slice(&v[i * S..(i + 1) * S]);
            }
            m
        };
        let mut c = vec![[[0.0; S]; S]; n];
        let mut d = vec![[0.0; S]; n];
        for p in 0..n {
            let mut den = load(&self.diag[p]);
            let mut cp = if p + 1 < n { load(&self.sup[p]) } else { [[0.0; S]; S] };
            let mut dp = [0.0; S];
            dp.copy_from_slice(&rhs[p * S..(p + 1) * S]);
            if p > 0 {
                let l = load(&self.sub[p - 1]);
                for i in 0..S {
                    for m in 0..S {
                        let lim = l[i][m];
                        for j in 0..S {
                            den[i][j] -= lim * c[p - 1][m][j];
                        }
                        dp[i] -= lim * d[p - 1][m];
                    }
                }
            }
            // Gaussian elimination with partial pivoting on [den | cp | dp]
            for col in 0..S {
                let mut piv = col;
                for r in col + 1..S {
                    if den[r][col].abs() > den[piv][col].abs() {
                        piv = r;
                    }
                }
                if den[piv][col].abs() < 1e-300 {
                    return Err(Error::SingularSystem {
                        row: p * S + col,
                        pivot: den[piv][col].abs(),
                    });
                }
                den.swap(piv, col);
                cp.swap(piv, col);
                dp.swap(piv, col);
                for r in col + 1..S {
                    let f = den[r][col] / den[col][col];
                    for j in col..S {
                        den[r][j] -= f * den[col][j];
                    }
                    for j in 0..S {
                        cp[r][j] -= f * cp[col][j];
                    }
                    dp[r] -= f * dp[col];
                }
            }
            for col in (0..S).rev() {
                for m in col + 1..S {
                    let a = den[col][m];
                    for j in 0..S {
                        cp[col][j] -= a * cp[m][j];
                    }
                    dp[col] -= a * dp[m];
                }
                let inv = 1.0 / den[col][col];
                for j in 0..S {
                    cp[col][j] *= inv;
                }
                dp[col] *= inv;
            }
            c[p] = cp;
            d[p] = dp;
        }
        let mut x = vec![0.0; S * n];
        for p in (0..n).rev() {
            for i in 0..S {
                let mut v = d[p][i];
                if p + 1 < n {
                    for m in 0..S {
                        v -= c[p][i][m] * x[(p + 1) * S + m];
                    }
                }
                x[p * S + i] = v;
            }
        }
        Ok(x)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn residual<T: Scalar>(m: &Tridiag<T>, x: &[T], b: &[T]) -> f64 {
        m.matvec(x)
            .iter()
            .zip(b)
            .map(|(p, q)| (*p - *q).modulus())
            .fold(0.0, f64::max)
    }

    #[test]
    fn real_solve_residual() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let n = 50;
        let m = Tridiag::new(
            (0..n - 1).map(|_| rng.gen_range(-1.0..1.0)).collect(),
            (0..n).map(|_| rng.gen_range(3.0..4.0)).collect(),
            (0..n - 1).map(|_| rng.gen_range(-1.0..1.0)).collect(),
        )
        .unwrap();
        let b: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let x = m.solve(&b).unwrap();
        assert!(residual(&m, &x, &b) < 1e-13);
    }

    #[test]
    fn complex_solve_residual() {
        let n = 40;
        let k = Tridiag::new(vec![-1.0; n - 1], vec![2.0; n], vec![-1.0; n - 1]).unwrap();
        let id = Tridiag::new(vec![0.0; n - 1], vec![1.0; n], vec![0.0; n - 1]).unwrap();
        let z = Complex64::new(-0.7, 1.3);
        let a = k.combine(Complex64::new(1.0, 0.0), &id, -z);
        let b: Vec<Complex64> = (0..n).map(|i| Complex64::new(i as f64, 1.0)).collect();
        let x = a.solve(&b).unwrap();
        assert!(residual(&a, &x, &b) < 1e-12);
    }

    #[test]
    fn singular_is_reported() {
        let m = Tridiag::new(vec![1.0], vec![1.0, 1.0], vec![1.0]).unwrap();
        assert!(matches!(m.solve(&[1.0, 1.0]), Err(Error::SingularSystem { row: 1, .. })));
        assert!(Tridiag::new(vec![1.0, 2.0], vec![1.0, 1.0], vec![1.0]).is_err());
    }

    #[test]
    fn block_solve_residual() {
        for s in 2..=4 {
            block_residual_for(s);
        }
    }

    fn block_residual_for(s: usize) {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let n = 30;
        let mut blk = |dominant: bool| -> Vec<f64> {
            (0..s * s)
                .map(|i| {
                    let v = rng.gen_range(-0.5..0.5);
                    if dominant && i % (s + 1) == 0 { v + 4.0 } else { v }
                })
                .collect()
        };
        let m = BlockTridiag {
            block: s,
            sub: (0..n - 1).map(|_| blk(false)).collect(),
            diag: (0..n).map(|_| blk(true)).collect(),
            sup: (0..n - 1).map(|_| blk(false)).collect(),
        };
        let b: Vec<f64> = (0..s * n).map(|i| (i as f64).sin()).collect();
        let x = m.solve(&b).unwrap();
        let r = m.matvec(&x);
        let err = r.iter().zip(&b).map(|(p, q)| (p - q).abs()).fold(0.0, f64::max);
        assert!(err < 1e-13, "s = {s}: {err}");
    }

    #[test]
    fn block_size_one_matches_scalar() {
        let t = Tridiag::new(vec![-1.0; 4], vec![3.0; 5], vec![-0.5; 4]).unwrap();
        let bt = BlockTridiag {
            block: 1,
            sub: t.sub.iter().map(|v| vec![*v]).collect(),
            diag: t.diag.iter().map(|v| vec![*v]).collect(),
            sup: t.sup.iter().map(|v| vec![*v]).collect(),
        };
        let b = [1.0, 2.0, 3.0, 4.0, 5.0];
        let x1 = t.solve(&b).unwrap();
        let x2 = bt.solve(&b).unwrap();
        for (p, q) in x1.iter().zip(&x2) {
            assert!((p - q).abs() < 1e-14);
        }
    }

    proptest! {
        #[test]
        fn shifted_spd_solves(a in 0.01f64..10.0, b in 0.0f64..10.0, n in 2usize..60, seed in 0u64..1000) {
            let h = 1.0 / n as f64;
            let m = Tridiag::new(vec![h / 6.0; n - 1], vec![4.0 * h / 6.0; n], vec![h / 6.0; n - 1]).unwrap();
            let k = Tridiag::new(vec![-1.0 / h; n - 1], vec![2.0 / h; n], vec![-1.0 / h; n - 1]).unwrap();
            let op = m.combine(a, &k, b);
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let rhs: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let x = op.solve(&rhs).unwrap();
            let norm = rhs.iter().map(|v| v * v).sum::<f64>().sqrt();
            let r = op.matvec(&x).iter().zip(&rhs).map(|(p, q)| (p - q).powi(2)).sum::<f64>().sqrt();
            prop_assert!(r <= 1e-12 * norm.max(1e-300) * (1.0 + b / (a * h * h)));
        }
    }
}
