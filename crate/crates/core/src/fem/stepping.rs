//! One-step and two-step time integrators on the FEM pair `(M, K)`.
//!
//! Every scheme integrates `M u' + K u = G(t) + M f(u)`.

use num_complex::Complex64;

use super::problem::Problem;
use super::{l2_norm, BlockTridiag, FemSystem, Tridiag};
use crate::error::{Error, Result};
use crate::propagators::{ButcherTableau, SingleStepScheme, SourceRule, TwoStepScheme};
use crate::rational::Polynomial;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NewtonOptions {
    /// Stop once the update is below `tol * max(1, |u|)` in the M-norm.
    pub tol: f64,
    pub max_iter: usize,
}

impl Default for NewtonOptions {
    fn default() -> Self {
        Self {
            tol: 1e-12,
            max_iter: 50,
        }
    }
}

/// Euclidean residual norms, one per Newton iteration.
pub type ResidualHistory = Vec<f64>;

fn check_step(dt: f64) -> Result<()> {
    if !(dt > 0.0) || !dt.is_finite() {
        return Err(Error::InvalidArgument(format!("step size must be positive, got {dt}")));
    }
    Ok(())
}

fn norm2(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

/// One implicit Runge-Kutta step.
pub fn irk_step(tab: &ButcherTableau, dt: f64, t: f64, u: &[f64], prob: &Problem) -> Result<Vec<f64>> {
    irk_step_detailed(tab, dt, t, u, prob, NewtonOptions::default()).map(|(v, _)| v)
}

/// [`irk_step`] returning the Newton residual history as well. Linear
/// problems take a single exact solve.
pub fn irk_step_detailed(
    tab: &ButcherTableau,
    dt: f64,
    t: f64,
    u: &[f64],
    prob: &Problem,
    opts: NewtonOptions,
) -> Result<(Vec<f64>, ResidualHistory)> {
    check_step(dt)?;
    let sys = &prob.sys;
    let n = sys.dim();
    if u.len() != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            got: u.len(),
        });
    }
    let s = tab.stages();
    let loads: Vec<Vec<f64>> = tab.c().iter().map(|c| prob.load(t + c * dt)).collect();
    let mu = sys.mass(u);
    let mut y: Vec<Vec<f64>> = vec![u.to_vec(); s];
    let mut history = Vec::new();
    let dta: Vec<f64> = (0..s * s).map(|ij| dt * tab.a(ij / s, ij % s)).collect();

    for iter in 0..opts.max_iter {
        // stage forcing terms K Y_j - G_j - M f(Y_j)
        let terms: Vec<Vec<f64>> = (0..s)
            .map(|j| {
                let ky = sys.stiffness(&y[j]);
                let mf = prob.reaction_load(&y[j]);
                (0..n).map(|p| ky[p] - loads[j][p] - mf[p]).collect()
            })
            .collect();
        let mut residual = vec![0.0; s * n];
        for i in 0..s {
            let my = sys.mass(&y[i]);
            for p in 0..n {
                let mut r = my[p] - mu[p];
                for j in 0..s {
                    r += dt * tab.a(i, j) * terms[j][p];
                }
                residual[p * s + i] = -r;
            }
        }
        history.push(norm2(&residual));

        let slope: Vec<Vec<f64>> = (0..s)
            .map(|j| match prob.reaction {
                Some(r) => y[j].iter().map(|&v| r.derivative(v)).collect(),
                None => vec![0.0; n],
            })
            .collect();
        // block (p, q) = m_pq I + dt A (k_pq - m_pq diag(f'(Y_q)))
        let block = |m: f64, k: f64, q: usize| -> Vec<f64> {
            let mut b = vec![0.0; s * s];
            for j in 0..s {
                let col = k - m * slope[j][q];
                for i in 0..s {
                    b[i * s + j] = dta[i * s + j] * col;
                }
            }
            for i in 0..s {
                b[i * s + i] += m;
            }
            b
        };
        let jac = BlockTridiag {
            block: s,
            sub: (0..n - 1).map(|q| block(sys.m.sub[q], sys.k.sub[q], q)).collect(),
            diag: (0..n).map(|p| block(sys.m.diag[p], sys.k.diag[p], p)).collect(),
            sup: (0..n - 1).map(|p| block(sys.m.sup[p], sys.k.sup[p], p + 1)).collect(),
        };
        let delta = jac.solve(&residual)?;
        let mut upd = 0.0f64;
        let mut size = 0.0f64;
        for i in 0..s {
            let di: Vec<f64> = (0..n).map(|p| delta[p * s + i]).collect();
            for p in 0..n {
                y[i][p] += di[p];
            }
            upd = upd.max(l2_norm(&di, sys)?);
            size = size.max(l2_norm(&y[i], sys)?);
        }
        if prob.is_linear() || upd <= opts.tol * size.max(1.0) {
            break;
        }
        if iter + 1 == opts.max_iter || !upd.is_finite() {
            return Err(Error::NewtonDivergence {
                iterations: iter + 1,
                residuals: history,
            });
        }
    }

    let w = tab.update_weights()?;
    let mut out = u.to_vec();
    for (i, wi) in w.iter().enumerate() {
        if *wi == 0.0 {
            continue;
        }
        for p in 0..n {
            out[p] += wi * (y[i][p] - u[p]);
        }
    }
    Ok((out, history))
}

/// One step of a single-step scheme.
///
/// Tableau schemes take a Runge-Kutta step. Schemes given only by a
/// stability function use `u+ = R(dt A) u + dt P(dt A) M^{-1} F` with
/// `P = (1 - R)/s`, evaluated by partial fractions over the poles of `R`;
/// the reaction term is frozen at `u`.
pub fn single_step_apply(
    scheme: &SingleStepScheme,
    dt: f64,
    t: f64,
    u: &[f64],
    prob: &Problem,
) -> Result<Vec<f64>> {
    check_step(dt)?;
    match (scheme.source_rule, &scheme.tableau) {
        (SourceRule::Tableau, Some(tab)) => irk_step(tab, dt, t, u, prob),
        _ => {
            let mut f = prob.load(t + dt);
            if prob.reaction.is_some() {
                for (fi, ri) in f.iter_mut().zip(prob.reaction_load(u)) {
                    *fi += ri;
                }
            }
            rational_step(scheme, dt, u, &f, &prob.sys)
        }
    }
}

fn derivative(p: &Polynomial) -> Polynomial {
    Polynomial::new(
        p.coeffs()
            .iter()
            .enumerate()
            .skip(1)
            .map(|(k, c)| k as f64 * c)
            .collect(),
    )
}

/// `R(dt A) u + dt P(dt A) M^{-1} f`.
fn rational_step(
    scheme: &SingleStepScheme,
    dt: f64,
    u: &[f64],
    f: &[f64],
    sys: &FemSystem,
) -> Result<Vec<f64>> {
    let r = &scheme.stability;
    let (num, den) = (r.num(), r.den());
    let d = den.degree().unwrap_or(0);
    if num.degree().unwrap_or(0) > d {
        return Err(Error::InvalidArgument(format!(
            "`{}` has an improper stability function",
            scheme.name
        )));
    }
    let c_inf = if num.degree() == Some(d) && d > 0 {
        num.coeff(d) / den.coeff(d)
    } else if d == 0 {
        num.coeff(0) / den.coeff(0)
    } else {
        0.0
    };
    let p = scheme.source_weight();
    let dden = derivative(den);
    let mu: Vec<Complex64> = sys.mass(u).iter().map(|&v| Complex64::new(v, 0.0)).collect();
    let fc: Vec<Complex64> = f.iter().map(|&v| Complex64::new(v, 0.0)).collect();
    let mut out: Vec<f64> = u.iter().map(|v| c_inf * v).collect();
    if d == 0 {
        return Ok(out);
    }
    let roots = den.roots()?;
    for z in &roots {
        let conj_pair = z.im.abs() > 1e-14 * z.norm().max(1.0);
        if conj_pair && z.im < 0.0 {
            continue;
        }
        let dz = dden.eval_complex(*z);
        if dz.norm() < 1e-14 {
            return Err(Error::InvalidArgument(format!(
                "`{}` has a repeated pole",
                scheme.name
            )));
        }
        let res_r = num.eval_complex(*z) / dz;
        let res_p = p.num().eval_complex(*z) / dz;
        let rhs: Vec<Complex64> = mu
            .iter()
            .zip(&fc)
            .map(|(m, g)| res_r * m + res_p * dt * g)
            .collect();
        // (dt K - z M) x = rhs
        let x = sys.solve_shifted_complex(-*z, Complex64::new(dt, 0.0), &rhs)?;
        let weight = if conj_pair { 2.0 } else { 1.0 };
        for (o, xi) in out.iter_mut().zip(&x) {
            *o += weight * xi.re;
        }
    }
    Ok(out)
}

/// Right-hand side of the two-step scheme without the implicit source.
fn two_step_history(
    ts: &TwoStepScheme,
    tau: f64,
    v1: &[f64],
    v2: &[f64],
    sys: &FemSystem,
) -> Vec<f64> {
    let [a0, a1, _] = ts.alpha;
    let [b0, b1, _] = ts.beta;
    let p1 = sys.apply_shifted(a0, b0 * tau, v1);
    let p2 = sys.apply_shifted(a1, b1 * tau, v2);
    p1.iter().zip(&p2).map(|(x, y)| -x - y).collect()
}

fn check_pair(v1: &[f64], v2: &[f64], n: usize) -> Result<()> {
    for v in [v1, v2] {
        if v.len() != n {
            return Err(Error::DimensionMismatch {
                expected: n,
                got: v.len(),
            });
        }
    }
    Ok(())
}

/// Two-step coarse step from `v1` at `t - tau` and `v2` at `t` to `t + tau`.
///
/// Solves
/// `(a2 M + b2 tau K) v3 = -(a0 M + b0 tau K) v1 - (a1 M + b1 tau K) v2 + tau sum_i b_i F(v_{i+1}, t + (i - 1) tau)`,
/// by Newton when the reaction term makes the last source implicit.
pub fn two_step_apply(
    ts: &TwoStepScheme,
    tau: f64,
    t: f64,
    v1: &[f64],
    v2: &[f64],
    prob: &Problem,
) -> Result<Vec<f64>> {
    two_step_apply_detailed(ts, tau, t, v1, v2, prob, NewtonOptions::default()).map(|(v, _)| v)
}

pub fn two_step_apply_detailed(
    ts: &TwoStepScheme,
    tau: f64,
    t: f64,
    v1: &[f64],
    v2: &[f64],
    prob: &Problem,
    opts: NewtonOptions,
) -> Result<(Vec<f64>, ResidualHistory)> {
    check_step(tau)?;
    let sys = &prob.sys;
    let n = sys.dim();
    check_pair(v1, v2, n)?;
    let [b0, b1, b2] = ts.beta;
    let a2 = ts.alpha[2];
    let mut rhs = two_step_history(ts, tau, v1, v2, sys);
    let f1 = prob.forcing(v1, t - tau);
    let f2 = prob.forcing(v2, t);
    let g3 = prob.load(t + tau);
    for p in 0..n {
        rhs[p] += tau * (b0 * f1[p] + b1 * f2[p] + b2 * g3[p]);
    }
    let lhs = sys.m.combine(a2, &sys.k, b2 * tau);
    let reaction = match prob.reaction {
        Some(r) if b2 != 0.0 => r,
        _ => return Ok((lhs.solve(&rhs)?, Vec::new())),
    };

    let mut v = v2.to_vec();
    let mut history = Vec::new();
    for iter in 0..opts.max_iter {
        let lv = lhs.matvec(&v);
        let mf = prob.reaction_load(&v);
        let residual: Vec<f64> = (0..n).map(|p| rhs[p] - lv[p] + tau * b2 * mf[p]).collect();
        history.push(norm2(&residual));
        let slope: Vec<f64> = v.iter().map(|&x| reaction.derivative(x)).collect();
        let c = tau * b2;
        let jac = Tridiag {
            sub: (0..n - 1).map(|q| lhs.sub[q] - c * sys.m.sub[q] * slope[q]).collect(),
            diag: (0..n).map(|p| lhs.diag[p] - c * sys.m.diag[p] * slope[p]).collect(),
            sup: (0..n - 1).map(|p| lhs.sup[p] - c * sys.m.sup[p] * slope[p + 1]).collect(),
        };
        let delta = jac.solve(&residual)?;
        for (x, d) in v.iter_mut().zip(&delta) {
            *x += d;
        }
        let upd = l2_norm(&delta, sys)?;
        if upd <= opts.tol * l2_norm(&v, sys)?.max(1.0) {
            return Ok((v, history));
        }
        if !upd.is_finite() {
            break;
        }
        let _ = iter;
    }
    Err(Error::NewtonDivergence {
        iterations: opts.max_iter,
        residuals: history,
    })
}

/// Two-step step with `F(v3, t + tau)` replaced by the extrapolation
/// `2 F(v2, t) - F(v1, t - tau)`; one linear solve.
pub fn o2cp_extrapolated_step(
    ts: &TwoStepScheme,
    tau: f64,
    t: f64,
    v1: &[f64],
    v2: &[f64],
    prob: &Problem,
) -> Result<Vec<f64>> {
    check_step(tau)?;
    let sys = &prob.sys;
    let n = sys.dim();
    check_pair(v1, v2, n)?;
    let [b0, b1, b2] = ts.beta;
    let mut rhs = two_step_history(ts, tau, v1, v2, sys);
    let f1 = prob.forcing(v1, t - tau);
    let f2 = prob.forcing(v2, t);
    for p in 0..n {
        rhs[p] += tau * ((b1 + 2.0 * b2) * f2[p] + (b0 - b2) * f1[p]);
    }
    sys.solve_shifted(ts.alpha[2], ts.beta[2] * tau, &rhs)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::analysis::fit_slope;
    use crate::fem::{assemble, l2_distance, LinearCase, Mesh1D, SourceForm};
    use crate::propagators::{catalog, catalog_single, catalog_two_step, Scheme, SCHEME_NAMES};
    use approx::assert_relative_eq;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn homogeneous(n: usize) -> Problem {
        let sys = assemble(Mesh1D::new(n).unwrap());
        let u0 = vec![0.0; sys.dim()];
        Problem::homogeneous(sys, u0, 1.0).unwrap()
    }

    fn max_rel(a: &[f64], b: &[f64]) -> f64 {
        let scale = b.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max) / scale
    }

    #[test]
    fn spectral_fidelity_of_every_scheme() {
        let prob = homogeneous(64);
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for name in SCHEME_NAMES {
            for _ in 0..20 {
                let j = rng.gen_range(1..64);
                let dt = rng.gen_range(0.001..0.5);
                let (lambda, v) = prob.sys.eigenpair(j);
                match catalog(name).unwrap() {
                    Scheme::Single(sc) => {
                        let out = single_step_apply(&sc, dt, 0.0, &v, &prob).unwrap();
                        let r = sc.stability.eval_real(dt * lambda).unwrap();
                        let expected: Vec<f64> = v.iter().map(|x| r * x).collect();
                        let err = out.iter().zip(&expected).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
                        assert!(err < 1e-9 * r.abs().max(1e-3), "{name}: {err}");
                    }
                    Scheme::TwoStep(ts) => {
                        let out = two_step_apply(&ts, dt, 0.0, &v, &v, &prob).unwrap();
                        let r = ts.r1.eval_real(dt * lambda).unwrap() + ts.r2.eval_real(dt * lambda).unwrap();
                        let expected: Vec<f64> = v.iter().map(|x| r * x).collect();
                        let err = out.iter().zip(&expected).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
                        assert!(err < 1e-9 * r.abs().max(1e-3), "{name}: {err}");
                    }
                }
            }
        }
    }

    #[test]
    fn backward_euler_eigenmode() {
        let prob = homogeneous(32);
        let (lambda, v) = prob.sys.eigenpair(3);
        let be = catalog_single("backward_euler").unwrap();
        let out = single_step_apply(&be, 0.1, 0.0, &v, &prob).unwrap();
        for (o, x) in out.iter().zip(&v) {
            assert_relative_eq!(*o, x / (1.0 + 0.1 * lambda), epsilon = 1e-13);
        }
    }

    #[test]
    fn stiff_consistent_rule_preserves_steady_state() {
        // F = lambda M v with K v = lambda M v has fixed point v
        let prob0 = homogeneous(40);
        let (lambda, v) = prob0.sys.eigenpair(2);
        let mut prob = prob0.clone();
        prob.loads.push(crate::fem::LoadTerm {
            vector: prob.sys.mass(&v).iter().map(|x| lambda * x).collect(),
            time: std::sync::Arc::new(|_| 1.0),
        });
        let ocp = catalog_single("ocp").unwrap();
        for dt in [0.01, 0.3, 5.0] {
            let out = single_step_apply(&ocp, dt, 0.0, &v, &prob).unwrap();
            assert!(max_rel(&out, &v) < 1e-10);
        }
    }

    #[test]
    fn rejects_zero_step() {
        let prob = homogeneous(8);
        let tab = ButcherTableau::radau_iia_3();
        assert!(irk_step(&tab, 0.0, 0.0, &prob.u0, &prob).is_err());
        let ts = catalog_two_step("bdf2").unwrap();
        assert!(two_step_apply(&ts, 0.0, 0.0, &prob.u0, &prob.u0, &prob).is_err());
    }

    #[test]
    fn zero_history_stays_zero() {
        let prob = homogeneous(16);
        let ts = catalog_two_step("o2cp").unwrap();
        let z = vec![0.0; 15];
        assert!(two_step_apply(&ts, 0.1, 0.0, &z, &z, &prob).unwrap().iter().all(|x| *x == 0.0));
    }

    #[test]
    fn radau_step_tracks_manufactured_solution() {
        let prob = Problem::linear(LinearCase::Ii, SourceForm::Manufactured, 200).unwrap();
        let tab = ButcherTableau::radau_iia_3();
        let t = 0.4;
        let u = prob.exact(t).unwrap();
        let out = irk_step(&tab, 0.01, t, &u, &prob).unwrap();
        let exact = prob.exact(t + 0.01).unwrap();
        // spatial error floor over one step is O(dt h^2)
        let err = l2_distance(&out, &exact, &prob.sys).unwrap();
        assert!(err < 1e-6, "{err}");
        // temporal part: compare against a fine-stepped reference
        let mut fine = u.clone();
        for k in 0..10 {
            fine = irk_step(&tab, 0.001, t + k as f64 * 0.001, &fine, &prob).unwrap();
        }
        assert!(l2_distance(&out, &fine, &prob.sys).unwrap() < 1e-9);
    }

    #[test]
    fn bdf2_local_error_order() {
        // exact decaying mode: v1 = e^{lambda tau} v, v2 = v, exact v3 = e^{-lambda tau} v
        let prob = homogeneous(64);
        let (lambda, v) = prob.sys.eigenpair(1);
        let ts = catalog_two_step("bdf2").unwrap();
        // tau lambda = O(1) at tau = 0.1 is still pre-asymptotic, so go finer
        let pts: Vec<(f64, f64)> = [0.02, 0.01, 0.005]
            .iter()
            .map(|&tau| {
                let v1: Vec<f64> = v.iter().map(|x| x * (lambda * tau).exp()).collect();
                let out = two_step_apply(&ts, tau, 0.0, &v1, &v, &prob).unwrap();
                let exact: Vec<f64> = v.iter().map(|x| x * (-lambda * tau).exp()).collect();
                (tau.ln(), l2_distance(&out, &exact, &prob.sys).unwrap().ln())
            })
            .collect();
        let slope = fit_slope(&pts);
        assert!((slope - 3.0).abs() < 0.3, "{slope}");
    }

    #[test]
    fn extrapolation_is_exact_for_affine_sources() {
        let mut prob = homogeneous(20);
        let shape = prob.sys.load_vector(|x| x * (1.0 - x));
        prob.loads.push(crate::fem::LoadTerm {
            vector: shape,
            time: std::sync::Arc::new(|t| 2.0 + 3.0 * t),
        });
        let ts = catalog_two_step("o2cp").unwrap();
        let v1 = prob.sys.interpolate(|x| x.sin());
        let v2 = prob.sys.interpolate(|x| x.cos() - 1.0 + x);
        let a = two_step_apply(&ts, 0.2, 1.0, &v1, &v2, &prob).unwrap();
        let b = o2cp_extrapolated_step(&ts, 0.2, 1.0, &v1, &v2, &prob).unwrap();
        assert!(max_rel(&a, &b) < 1e-13);
        // and with no source at all
        let prob = homogeneous(20);
        let a = two_step_apply(&ts, 0.2, 1.0, &v1, &v2, &prob).unwrap();
        let b = o2cp_extrapolated_step(&ts, 0.2, 1.0, &v1, &v2, &prob).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn extrapolation_error_is_second_order() {
        let prob = Problem::semilinear(1.0, 100).unwrap();
        let ts = catalog_two_step("o2cp").unwrap();
        let t = 0.3;
        let pts: Vec<(f64, f64)> = [0.02, 0.01, 0.005]
            .iter()
            .map(|&tau| {
                let v1 = prob.exact(t - tau).unwrap();
                let v2 = prob.exact(t).unwrap();
                let a = two_step_apply(&ts, tau, t, &v1, &v2, &prob).unwrap();
                let b = o2cp_extrapolated_step(&ts, tau, t, &v1, &v2, &prob).unwrap();
                (tau.ln(), l2_distance(&a, &b, &prob.sys).unwrap().ln())
            })
            .collect();
        // tau * (f(v3) - 2 f(v2) + f(v1)) = O(tau^3)
        let slope = fit_slope(&pts);
        assert!(slope >= 2.0 - 0.2, "{slope}");
    }

    #[test]
    fn newton_converges_quadratically() {
        let prob = Problem::semilinear(10.0, 100).unwrap();
        let ts = catalog_two_step("bdf2").unwrap();
        let v1 = prob.sys.interpolate(|x| 1.5 * (std::f64::consts::PI * x).sin());
        let (_, hist) =
            two_step_apply_detailed(&ts, 0.05, 0.0, &v1, &v1, &prob, NewtonOptions::default()).unwrap();
        assert!(hist.len() >= 3, "{hist:?}");
        for w in hist.windows(2) {
            if w[0] < 1e-3 && w[1] > 1e-13 {
                assert!(w[1] / (w[0] * w[0]) < 1e3, "{hist:?}");
            }
        }
        let tab = ButcherTableau::radau_iia_3();
        let (_, hist) = irk_step_detailed(&tab, 0.01, 0.0, &v1, &prob, NewtonOptions::default()).unwrap();
        for w in hist.windows(2) {
            if w[0] < 1e-3 && w[1] > 1e-13 {
                assert!(w[1] / (w[0] * w[0]) < 1e3, "{hist:?}");
            }
        }
    }

    #[test]
    fn energy_decays_for_a_stable_schemes() {
        let prob = homogeneous(50);
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..100 {
            let u: Vec<f64> = (0..49).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let dt = 10f64.powf(rng.gen_range(-3.0..1.0));
            let e0 = l2_norm(&u, &prob.sys).unwrap();
            for name in ["backward_euler", "sdirk2"] {
                let sc = catalog_single(name).unwrap();
                let out = single_step_apply(&sc, dt, 0.0, &u, &prob).unwrap();
                assert!(l2_norm(&out, &prob.sys).unwrap() <= e0 * (1.0 + 1e-12), "{name}");
            }
            for name in ["bdf2", "o2cp"] {
                let ts = catalog_two_step(name).unwrap();
                let out = two_step_apply(&ts, dt, 0.0, &u, &u, &prob).unwrap();
                assert!(l2_norm(&out, &prob.sys).unwrap() <= e0 * (1.0 + 1e-12), "{name}");
            }
        }
    }
}
