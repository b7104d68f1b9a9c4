//! Catalog of single-step and two-step time integrators.
//!
//! Stability functions follow the decay convention: a scheme applied to
//! `u' = -lambda u` with step `dt` multiplies the solution by `R(lambda dt)`.

mod tableau;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::quadrature;
use crate::rational::{Polynomial, RationalFunction};

pub use tableau::{stability_from_tableau, ButcherTableau};

/// Every identifier accepted by [`catalog`].
pub const SCHEME_NAMES: [&str; 8] = [
    "backward_euler",
    "sdirk2",
    "ocp",
    "radau_iia_2",
    "radau_iia_3",
    "lobatto_iiic_3",
    "bdf2",
    "o2cp",
];

/// How a single-step scheme treats the source term.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SourceRule {
    /// Stage-wise evaluation through the Runge-Kutta tableau.
    Tableau,
    /// `u_new = R(dt A) u + dt P(dt A) f(t + dt)` with `P(s) = (1 - R(s))/s`.
    StiffConsistent,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SingleStepScheme {
    pub name: String,
    pub stability: RationalFunction,
    pub tableau: Option<ButcherTableau>,
    pub source_rule: SourceRule,
}

impl SingleStepScheme {
    pub fn from_tableau(name: &str, tableau: ButcherTableau) -> Self {
        Self {
            name: name.to_string(),
            stability: stability_from_tableau(&tableau),
            tableau: Some(tableau),
            source_rule: SourceRule::Tableau,
        }
    }

    /// Scheme given only by its stability function; sources use the
    /// stiff-consistent rule.
    pub fn from_stability(name: &str, stability: RationalFunction) -> Result<Self> {
        let r0 = stability.eval_real(0.0)?;
        if (r0 - 1.0).abs() > 1e-12 {
            return Err(Error::InvalidArgument(format!(
                "stability function of `{name}` is not consistent: R(0) = {r0}"
            )));
        }
        Ok(Self {
            name: name.to_string(),
            stability,
            tableau: None,
            source_rule: SourceRule::StiffConsistent,
        })
    }

    /// `P(s) = (1 - R(s))/s` with the removable singularity divided out.
    pub fn source_weight(&self) -> RationalFunction {
        let diff = self.stability.den() - self.stability.num();
        RationalFunction::new(diff.shift_down(), self.stability.den().clone())
            .expect("den(0) = 1")
    }

    pub fn order(&self) -> Option<u32> {
        self.tableau.as_ref().map(ButcherTableau::order)
    }
}

/// Linear two-step scheme
/// `(a2 + b2 s) U_{n+2} + (a1 + b1 s) U_{n+1} + (a0 + b0 s) U_n = ...`
/// stored with `a2 = 1`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TwoStepScheme {
    pub name: String,
    pub alpha: [f64; 3],
    pub beta: [f64; 3],
    pub r1: RationalFunction,
    pub r2: RationalFunction,
}

impl TwoStepScheme {
    /// Builds the scheme and normalizes the coefficients so that `alpha[2] = 1`.
    pub fn new(name: &str, alpha: [f64; 3], beta: [f64; 3]) -> Result<Self> {
        let a2 = alpha[2];
        if a2 == 0.0 || !a2.is_finite() {
            return Err(Error::InvalidArgument(format!(
                "leading coefficient alpha_2 must be nonzero (got {a2})"
            )));
        }
        let alpha = alpha.map(|a| a / a2);
        let beta = beta.map(|b| b / a2);
        let den = Polynomial::new(vec![alpha[2], beta[2]]);
        let r1 = RationalFunction::new(Polynomial::new(vec![-alpha[0], -beta[0]]), den.clone())?;
        let r2 = RationalFunction::new(Polynomial::new(vec![-alpha[1], -beta[1]]), den)?;
        Ok(Self {
            name: name.to_string(),
            alpha,
            beta,
            r1,
            r2,
        })
    }

    pub fn alpha_sum(&self) -> f64 {
        self.alpha.iter().sum()
    }

    pub fn is_consistent(&self) -> bool {
        self.alpha_sum().abs() <= 1e-10
    }

    /// Reads the parametrization back; `None` if `beta[2] <= 0`.
    pub fn theta(&self) -> Option<ThetaParams> {
        (self.beta[2] > 0.0).then(|| ThetaParams {
            a1: -self.alpha[0],
            a2: -self.beta[0],
            b1: self.beta[2].ln(),
            c2: -self.beta[1],
        })
    }
}

/// Parameters `(a1, a2, b1, c2)` of the consistent two-step family
/// `R1 = (a1 + a2 s)/(1 + e^{b1} s)`, `R2 = ((1 - a1) + c2 s)/(1 + e^{b1} s)`.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct ThetaParams {
    pub a1: f64,
    pub a2: f64,
    pub b1: f64,
    pub c2: f64,
}

impl ThetaParams {
    /// Coefficients of the optimized two-step coarse propagator.
    pub fn published_o2cp() -> Self {
        Self {
            a1: 0.02178,
            a2: -0.00047,
            b1: 0.56380f64.ln(),
            c2: -0.46300,
        }
    }

    pub fn to_array(self) -> [f64; 4] {
        [self.a1, self.a2, self.b1, self.c2]
    }

    pub fn from_array(v: [f64; 4]) -> Self {
        Self {
            a1: v[0],
            a2: v[1],
            b1: v[2],
            c2: v[3],
        }
    }
}

pub fn two_step_from_theta(theta: &ThetaParams) -> TwoStepScheme {
    two_step_from_theta_named("theta", theta)
}

pub fn two_step_from_theta_named(name: &str, theta: &ThetaParams) -> TwoStepScheme {
    TwoStepScheme::new(
        name,
        [-theta.a1, theta.a1 - 1.0, 1.0],
        [-theta.a2, -theta.c2, theta.b1.exp()],
    )
    .expect("alpha_2 = 1")
}

#[derive(Debug, Clone, PartialEq)]
pub enum Scheme {
    Single(SingleStepScheme),
    TwoStep(TwoStepScheme),
}

impl Scheme {
    pub fn name(&self) -> &str {
        match self {
            Scheme::Single(s) => &s.name,
            Scheme::TwoStep(s) => &s.name,
        }
    }

    pub fn into_single(self) -> Result<SingleStepScheme> {
        match self {
            Scheme::Single(s) => Ok(s),
            Scheme::TwoStep(s) => Err(Error::InvalidArgument(format!(
                "`{}` is a two-step scheme",
                s.name
            ))),
        }
    }

    pub fn into_two_step(self) -> Result<TwoStepScheme> {
        match self {
            Scheme::TwoStep(s) => Ok(s),
            Scheme::Single(s) => Err(Error::InvalidArgument(format!(
                "`{}` is a single-step scheme",
                s.name
            ))),
        }
    }
}

/// Looks up a scheme by its stable identifier.
pub fn catalog(name: &str) -> Result<Scheme> {
    let scheme = match name {
        "backward_euler" => {
            Scheme::Single(SingleStepScheme::from_tableau(name, ButcherTableau::backward_euler()))
        }
        "sdirk2" => Scheme::Single(SingleStepScheme::from_tableau(name, ButcherTableau::sdirk2())),
        "radau_iia_2" => {
            Scheme::Single(SingleStepScheme::from_tableau(name, ButcherTableau::radau_iia_2()))
        }
        "radau_iia_3" => {
            Scheme::Single(SingleStepScheme::from_tableau(name, ButcherTableau::radau_iia_3()))
        }
        "lobatto_iiic_3" => {
            Scheme::Single(SingleStepScheme::from_tableau(name, ButcherTableau::lobatto_iiic_3()))
        }
        "ocp" => Scheme::Single(SingleStepScheme::from_stability(
            name,
            RationalFunction::from_coeffs(&[1.0, -0.21014, 0.00486], &[1.0, 0.78986, 0.38283])?,
        )?),
        "bdf2" => Scheme::TwoStep(TwoStepScheme::new(
            name,
            [0.5, -2.0, 1.5],
            [0.0, 0.0, 1.0],
        )?),
        "o2cp" => Scheme::TwoStep(two_step_from_theta_named(
            name,
            &ThetaParams::published_o2cp(),
        )),
        other => return Err(Error::UnknownScheme(other.to_string())),
    };
    Ok(scheme)
}

pub fn catalog_single(name: &str) -> Result<SingleStepScheme> {
    catalog(name)?.into_single()
}

pub fn catalog_two_step(name: &str) -> Result<TwoStepScheme> {
    catalog(name)?.into_two_step()
}

/// Largest `q <= p_max` such that the two-step order conditions
/// `sum alpha_i i^p = p sum beta_i i^(p-1)` hold for `p = 1..=q`.
pub fn consistency_order(scheme: &TwoStepScheme, p_max: u32) -> Result<u32> {
    if p_max == 0 {
        return Err(Error::InvalidArgument("p_max must be at least 1".into()));
    }
    let sum = scheme.alpha_sum();
    if sum.abs() > 1e-10 {
        return Err(Error::NotConsistent { sum });
    }
    let mut q = 0;
    for p in 1..=p_max {
        let lhs: f64 = (0..3)
            .map(|i| scheme.alpha[i] * (i as f64).powi(p as i32))
            .sum();
        let rhs: f64 = (0..3)
            .map(|i| scheme.beta[i] * (i as f64).powi(p as i32 - 1))
            .sum::<f64>()
            * p as f64;
        if (lhs - rhs).abs() > 1e-8 {
            break;
        }
        q = p;
    }
    Ok(q)
}

/// Exact propagator of one eigenmode of `u' + lambda u = f(t)` over `[0, tau]`.
pub fn exact_phi(lambda: f64, tau: f64, v: f64, f: impl Fn(f64) -> f64) -> Result<f64> {
    if lambda < 0.0 || tau <= 0.0 {
        return Err(Error::InvalidArgument(format!(
            "exact_phi needs lambda >= 0 and tau > 0 (got {lambda}, {tau})"
        )));
    }
    let forced = quadrature::integrate(|s| (-lambda * (tau - s)).exp() * f(s), 0.0, tau, 1e-12);
    Ok((-lambda * tau).exp() * v + forced)
}

/// Serializable scheme definition read by the CLI.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum SchemeDefinition {
    Catalog { name: String },
    TwoStep { name: String, alpha: [f64; 3], beta: [f64; 3] },
    Theta { name: String, theta: ThetaParams },
}

impl SchemeDefinition {
    pub fn build(&self) -> Result<Scheme> {
        match self {
            SchemeDefinition::Catalog { name } => catalog(name),
            SchemeDefinition::TwoStep { name, alpha, beta } => {
                Ok(Scheme::TwoStep(TwoStepScheme::new(name, *alpha, *beta)?))
            }
            SchemeDefinition::Theta { name, theta } => {
                Ok(Scheme::TwoStep(two_step_from_theta_named(name, theta)))
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    #[test]
    fn bdf2_is_normalized() {
        let s = catalog_two_step("bdf2").unwrap();
        let expect_a = [1.0 / 3.0, -4.0 / 3.0, 1.0];
        let expect_b = [0.0, 0.0, 2.0 / 3.0];
        for i in 0..3 {
            assert_relative_eq!(s.alpha[i], expect_a[i], epsilon = 1e-15);
            assert_relative_eq!(s.beta[i], expect_b[i], epsilon = 1e-15);
        }
        assert_relative_eq!(s.r2.eval_real(0.0).unwrap(), 4.0 / 3.0, epsilon = 1e-15);
        assert_relative_eq!(s.r1.eval_real(0.0).unwrap(), -1.0 / 3.0, epsilon = 1e-15);
    }

    #[test]
    fn o2cp_coefficients() {
        let s = catalog_two_step("o2cp").unwrap();
        let sum = s.r1.eval_real(0.0).unwrap() + s.r2.eval_real(0.0).unwrap();
        assert_relative_eq!(sum, 1.0, epsilon = 1e-15);
        let r1 = RationalFunction::from_coeffs(&[0.02178, -0.00047], &[1.0, 0.56380]).unwrap();
        let r2 = RationalFunction::from_coeffs(&[0.97822, -0.46300], &[1.0, 0.56380]).unwrap();
        assert!(s.r1.coeff_distance(&r1) < 1e-14);
        assert!(s.r2.coeff_distance(&r2) < 1e-14);
    }

    #[test]
    fn single_step_catalog_is_consistent() {
        for name in ["backward_euler", "sdirk2", "ocp", "radau_iia_2", "radau_iia_3", "lobatto_iiic_3"] {
            let s = catalog_single(name).unwrap();
            assert_relative_eq!(s.stability.eval_real(0.0).unwrap(), 1.0, epsilon = 1e-12);
            if let Some(t) = &s.tableau {
                assert!(stability_from_tableau(t).coeff_distance(&s.stability) < 1e-10);
            }
        }
        assert!(matches!(catalog("rk4"), Err(Error::UnknownScheme(_))));
        assert!(catalog_single("bdf2").is_err());
    }

    #[test]
    fn fine_propagators_are_l_stable() {
        for name in ["radau_iia_2", "radau_iia_3", "lobatto_iiic_3"] {
            let r = catalog_single(name).unwrap().stability;
            assert!(r.num().degree() < r.den().degree(), "{name}");
            for k in 0..=900 {
                let s = 10f64.powf(-3.0 + 9.0 * k as f64 / 900.0);
                assert!(r.eval_real(s).unwrap().abs() < 1.0, "{name} at {s}");
            }
        }
    }

    #[test]
    fn stability_error_order() {
        // slope of log|r(s) - e^{-s}| against log s on (0, 1]
        for (name, q) in [
            ("backward_euler", 1),
            ("sdirk2", 2),
            ("radau_iia_2", 3),
            ("lobatto_iiic_3", 4),
            ("radau_iia_3", 5),
        ] {
            let r = catalog_single(name).unwrap().stability;
            let pts: Vec<(f64, f64)> = (0..10)
                .map(|k| {
                    let s = 0.02 * 1.3f64.powi(k);
                    (s.ln(), (r.eval_real(s).unwrap() - (-s).exp()).abs().ln())
                })
                .collect();
            let slope = crate::analysis::fit_slope(&pts);
            assert!(slope >= q as f64 + 1.0 - 0.25, "{name}: slope {slope}");
        }
    }

    #[test]
    fn ocp_source_weight() {
        let s = catalog_single("ocp").unwrap();
        let p = s.source_weight();
        for x in [0.1, 1.0, 7.5] {
            let r = s.stability.eval_real(x).unwrap();
            assert_relative_eq!(p.eval_real(x).unwrap(), (1.0 - r) / x, max_relative = 1e-13);
        }
        // P(0) = -R'(0) = 1 for a first-order consistent R
        assert_relative_eq!(p.eval_real(0.0).unwrap(), 1.0, epsilon = 1e-12);
    }

    #[test]
    fn theta_round_trip_to_o2cp() {
        let s = two_step_from_theta(&ThetaParams::published_o2cp());
        let o = catalog_two_step("o2cp").unwrap();
        assert_eq!(s.alpha, o.alpha);
        assert_eq!(s.beta, o.beta);
    }

    #[test]
    fn zero_theta_is_backward_euler_like() {
        let s = two_step_from_theta(&ThetaParams::default());
        assert!(s.r1.num().is_zero());
        let be = catalog_single("backward_euler").unwrap().stability;
        assert!(s.r2.coeff_distance(&be) < 1e-15);
    }

    #[test]
    fn consistency_orders() {
        assert_eq!(consistency_order(&catalog_two_step("bdf2").unwrap(), 3).unwrap(), 2);
        assert_eq!(consistency_order(&catalog_two_step("o2cp").unwrap(), 2).unwrap(), 0);
        let t = ThetaParams { a1: 0.5, a2: 0.0, b1: 0.0, c2: -0.5 };
        assert_eq!(consistency_order(&two_step_from_theta(&t), 1).unwrap(), 1);
        assert_eq!(consistency_order(&two_step_from_theta(&t), 3).unwrap(), 1);
        let bad = TwoStepScheme::new("bad", [0.0, 0.5, 1.0], [0.0, 0.0, 1.0]).unwrap();
        assert!(matches!(consistency_order(&bad, 2), Err(Error::NotConsistent { .. })));
    }

    #[test]
    fn exact_phi_examples() {
        assert_eq!(exact_phi(0.0, 1.0, 3.0, |_| 0.0).unwrap(), 3.0);
        assert_relative_eq!(exact_phi(1.0, 1.0, 1.0, |_| 0.0).unwrap(), (-1.0f64).exp());
        assert_relative_eq!(
            exact_phi(1.0, 1.0, 0.0, |_| 1.0).unwrap(),
            1.0 - (-1.0f64).exp(),
            max_relative = 1e-13
        );
        // f(t) = cos t: int_0^1 e^{-(1-s)} cos s ds = (cos 1 + sin 1 - e^{-1}) / 2
        let v = exact_phi(1.0, 1.0, 0.0, f64::cos).unwrap();
        let exact = (1f64.cos() + 1f64.sin() - (-1f64).exp()) / 2.0;
        assert_relative_eq!(v, exact, max_relative = 1e-12);
        assert!(exact_phi(1.0, 0.0, 1.0, |_| 0.0).is_err());
    }

    #[test]
    fn scheme_definition_round_trip() {
        let d = SchemeDefinition::Theta {
            name: "opt".into(),
            theta: ThetaParams::published_o2cp(),
        };
        let json = serde_json::to_string(&d).unwrap();
        let back: SchemeDefinition = serde_json::from_str(&json).unwrap();
        assert_eq!(back, d);
        let s = back.build().unwrap().into_two_step().unwrap();
        assert_eq!(s.alpha, catalog_two_step("o2cp").unwrap().alpha);
        let c: SchemeDefinition = serde_json::from_str(r#"{"kind":"catalog","name":"bdf2"}"#).unwrap();
        assert_eq!(c.build().unwrap().name(), "bdf2");
    }

    proptest! {
        #[test]
        fn theta_read_back_is_identity(a1 in -1.0f64..1.0, a2 in -1.0f64..1.0, b1 in -3.0f64..3.0, c2 in -1.0f64..1.0) {
            let t = ThetaParams { a1, a2, b1, c2 };
            let s = two_step_from_theta(&t);
            let back = s.theta().unwrap();
            for (x, y) in t.to_array().iter().zip(back.to_array()) {
                prop_assert!((x - y).abs() <= 1e-14 * (1.0 + x.abs()));
            }
            prop_assert!(s.is_consistent());
            let sum = s.r1.eval_real(0.0).unwrap() + s.r2.eval_real(0.0).unwrap();
            prop_assert!((sum - 1.0).abs() < 1e-14);
        }
    }
}
