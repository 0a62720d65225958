//! Declarative spin fields `psi(x)` and extraction of the Killing bivectors
//! `K_a = (d_a psi) reverse(psi)`.
//!
//! Every built-in family is differentiated exactly: coefficient expressions are
//! evaluated as [`Dual4`]/[`Jet2`] and products use the Leibniz rule. Central
//! differences are available as a cross-check.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::clifford::{sandwich, BladeMask, CliffordError, Multivector, Signature, Term};
use crate::expr::{Dual4, EvalError, Expr, Jet2, Scalar, NVARS};

/// Dimension of the submanifold (number of coordinates and tangent frame indices).
pub const TANGENT_DIM: usize = 4;
/// Dimension of the ambient space R^{1,9}.
pub const AMBIENT_DIM: usize = 10;

/// Maximum `|reverse(psi) psi - 1|` tolerated before extraction refuses a field.
pub const NORMALIZATION_TOL: f64 = 1e-8;

pub type Point = [f64; NVARS];

#[derive(Debug, Error)]
pub enum SpinFieldError {
    #[error("invalid field: {0}")]
    InvalidSpec(String),
    #[error(transparent)]
    Eval(#[from] EvalError),
    #[error(transparent)]
    Clifford(#[from] CliffordError),
    #[error("field is not normalized at {point:?}: |reverse(psi) psi - 1| = {residual:e}")]
    NotNormalized { point: Point, residual: f64 },
}

/// A spin field family with expression coefficients.
///
/// JSON form: `{"family": "typeA", "normal_index": 5, "f": "...", "fA": [...]}` etc.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", deny_unknown_fields)]
pub enum SpinFieldSpec {
    /// `exp((angle/2) e_I e_J)` for `plane = [I, J]`, `I < J`.
    #[serde(rename = "rotation")]
    Rotation { plane: [usize; 2], angle: Expr },
    /// `f + sum_mu fA[mu] e_mu e_n` for a normal index `n`.
    #[serde(rename = "typeA")]
    TypeA {
        normal_index: usize,
        f: Expr,
        #[serde(rename = "fA")]
        fa: [Expr; 4],
    },
    /// `f + sum_k fB[k-4] e_t e_k` over normal indices `k` for a tangent index `t`.
    #[serde(rename = "typeB")]
    TypeB {
        tangent_index: usize,
        f: Expr,
        #[serde(rename = "fB")]
        fb: [Expr; 6],
    },
    /// Ordered geometric product of the factors.
    #[serde(rename = "product")]
    Product { factors: Vec<SpinFieldSpec> },
    /// `R x S^3(1/2)` in stereographic coordinates: the type-A field
    /// `(1 - sum_k x_k e_k e_5) / sqrt(1 + r^2)`.
    #[serde(rename = "sphere")]
    Sphere,
    /// A fixed even multivector, independent of `x`. Mostly useful for probing
    /// the spin-field conditions.
    #[serde(rename = "constant")]
    Constant { terms: Vec<Term> },
}

impl SpinFieldSpec {
    pub fn rotation(i: usize, j: usize, angle: &str) -> Result<Self, SpinFieldError> {
        let spec = SpinFieldSpec::Rotation {
            plane: [i, j],
            angle: parse(angle)?,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn type_a(normal_index: usize, f: &str, fa: [&str; 4]) -> Result<Self, SpinFieldError> {
        let spec = SpinFieldSpec::TypeA {
            normal_index,
            f: parse(f)?,
            fa: parse_array(fa)?,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn type_b(tangent_index: usize, f: &str, fb: [&str; 6]) -> Result<Self, SpinFieldError> {
        let spec = SpinFieldSpec::TypeB {
            tangent_index,
            f: parse(f)?,
            fb: parse_array(fb)?,
        };
        spec.validate()?;
        Ok(spec)
    }

    /// The type-A expansion of [`SpinFieldSpec::Sphere`].
    pub fn sphere_as_type_a() -> Self {
        let n = "sqrt(1+x1^2+x2^2+x3^2)";
        SpinFieldSpec::type_a(
            5,
            &format!("1/{n}"),
            ["0", &format!("-x1/{n}"), &format!("-x2/{n}"), &format!("-x3/{n}")],
        )
        .expect("built-in field is valid")
    }

    pub fn validate(&self) -> Result<(), SpinFieldError> {
        let invalid = |msg: String| Err(SpinFieldError::InvalidSpec(msg));
        match self {
            SpinFieldSpec::Rotation { plane: [i, j], .. } => {
                if !(i < j && *j < AMBIENT_DIM) {
                    return invalid(format!(
                        "rotation plane [{i}, {j}] must satisfy I < J < {AMBIENT_DIM}"
                    ));
                }
            }
            SpinFieldSpec::TypeA { normal_index, .. } => {
                if !(TANGENT_DIM..AMBIENT_DIM).contains(normal_index) {
                    return invalid(format!("normal_index {normal_index} must be in 4..=9"));
                }
            }
            SpinFieldSpec::TypeB { tangent_index, .. } => {
                if *tangent_index >= TANGENT_DIM {
                    return invalid(format!("tangent_index {tangent_index} must be in 0..=3"));
                }
            }
            SpinFieldSpec::Product { factors } => {
                if factors.is_empty() {
                    return invalid("product needs at least one factor".into());
                }
                for factor in factors {
                    factor.validate()?;
                }
            }
            SpinFieldSpec::Sphere => {}
            SpinFieldSpec::Constant { terms } => {
                let mv = Multivector::from_term_list(Signature::spacetime(), terms)?;
                if !mv.is_even() {
                    return invalid("constant field must be even-grade".into());
                }
            }
        }
        Ok(())
    }

    /// Coefficients of a non-product family as `(blade, coefficient)` pairs.
    fn coefficients<S: Scalar>(&self, x: Point) -> Result<Vec<(BladeMask, S)>, SpinFieldError> {
        let sig = Signature::spacetime();
        Ok(match self {
            SpinFieldSpec::Rotation { plane: [i, j], angle } => {
                let half = angle.eval_in::<S>(x)?.scale(0.5);
                let mask = (1 << i) | (1 << j);
                // (e_i e_j)^2 = -eta_i eta_j decides between the circular and hyperbolic branch.
                if sig.metric(*i) * sig.metric(*j) > 0.0 {
                    vec![(0, half.cos()), (mask, half.sin())]
                } else {
                    vec![(0, half.cosh()), (mask, half.sinh())]
                }
            }
            SpinFieldSpec::TypeA {
                normal_index, f, fa, ..
            } => {
                let mut out = vec![(0, f.eval_in::<S>(x)?)];
                for (mu, c) in fa.iter().enumerate() {
                    out.push(((1 << mu) | (1 << normal_index), c.eval_in::<S>(x)?));
                }
                out
            }
            SpinFieldSpec::TypeB {
                tangent_index, f, fb, ..
            } => {
                let mut out = vec![(0, f.eval_in::<S>(x)?)];
                for (n, c) in fb.iter().enumerate() {
                    let k = TANGENT_DIM + n;
                    out.push(((1 << tangent_index) | (1 << k), c.eval_in::<S>(x)?));
                }
                out
            }
            SpinFieldSpec::Sphere => return SpinFieldSpec::sphere_as_type_a().coefficients(x),
            SpinFieldSpec::Constant { terms } => {
                Multivector::from_term_list(sig, terms)?
                    .terms()
                    .map(|(m, c)| (m, S::constant(c)))
                    .collect()
            }
            SpinFieldSpec::Product { .. } => unreachable!("products are expanded by the caller"),
        })
    }

    /// `psi(x)`.
    pub fn evaluate(&self, x: Point) -> Result<Multivector, SpinFieldError> {
        if let SpinFieldSpec::Product { factors } = self {
            let mut acc = Multivector::scalar(Signature::spacetime(), 1.0);
            for factor in factors {
                acc = &acc * &factor.evaluate(x)?;
            }
            return Ok(acc);
        }
        let sig = Signature::spacetime();
        Ok(Multivector::from_terms(sig, self.coefficients::<f64>(x)?)?)
    }

    /// `psi` and its first derivatives, exactly.
    pub fn jet1(&self, x: Point) -> Result<FieldJet, SpinFieldError> {
        self.jet(x, false)
    }

    /// `psi` with first and second derivatives, exactly.
    pub fn jet2(&self, x: Point) -> Result<FieldJet, SpinFieldError> {
        self.jet(x, true)
    }

    fn jet(&self, x: Point, second: bool) -> Result<FieldJet, SpinFieldError> {
        if let SpinFieldSpec::Product { factors } = self {
            let mut acc = FieldJet::one(second);
            for factor in factors {
                acc = acc.product(&factor.jet(x, second)?);
            }
            return Ok(acc);
        }
        if second {
            Ok(FieldJet::from_jet2(&self.coefficients::<Jet2>(x)?))
        } else {
            Ok(FieldJet::from_dual(&self.coefficients::<Dual4>(x)?))
        }
    }

    /// `d_alpha psi`, exactly or by central differences.
    pub fn partial(
        &self,
        x: Point,
        alpha: usize,
        diff: Differentiation,
    ) -> Result<Multivector, SpinFieldError> {
        match diff {
            Differentiation::Automatic => {
                let FieldJet { mut grad, .. } = self.jet1(x)?;
                Ok(std::mem::replace(&mut grad[alpha], zero()))
            }
            Differentiation::Central(fd) => {
                let (plus, minus) = shifted(x, alpha, fd.step);
                let diff = &self.evaluate(plus)? - &self.evaluate(minus)?;
                Ok(diff.scale(0.5 / fd.step))
            }
        }
    }
}

fn parse(src: &str) -> Result<Expr, SpinFieldError> {
    Expr::parse(src).map_err(|err| SpinFieldError::InvalidSpec(format!("`{src}`: {err}")))
}

fn parse_array<const N: usize>(srcs: [&str; N]) -> Result<[Expr; N], SpinFieldError> {
    let parsed: Vec<Expr> = srcs.iter().map(|s| parse(s)).collect::<Result<_, _>>()?;
    Ok(parsed.try_into().expect("length preserved"))
}

fn zero() -> Multivector {
    Multivector::zero(Signature::spacetime())
}

pub(crate) fn shifted(x: Point, alpha: usize, h: f64) -> (Point, Point) {
    let mut plus = x;
    let mut minus = x;
    plus[alpha] += h;
    minus[alpha] -= h;
    (plus, minus)
}

/// Central-difference settings.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FdConfig {
    pub step: f64,
}

impl FdConfig {
    pub fn new(step: f64) -> Result<Self, SpinFieldError> {
        if !(step > 0.0 && step.is_finite()) {
            return Err(SpinFieldError::InvalidSpec(format!(
                "finite-difference step must be positive, got {step}"
            )));
        }
        Ok(FdConfig { step })
    }
}

impl Default for FdConfig {
    fn default() -> Self {
        FdConfig { step: 1e-5 }
    }
}

/// How `d_alpha psi` is obtained.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Differentiation {
    Automatic,
    Central(FdConfig),
}

/// A multivector-valued function with its derivatives at one point.
///
/// `hess[a][b]` is `d_a d_b psi`, present only for second-order jets.
#[derive(Debug, Clone)]
pub struct FieldJet {
    pub value: Multivector,
    pub grad: [Multivector; NVARS],
    pub hess: Option<[[Multivector; NVARS]; NVARS]>,
}

impl FieldJet {
    fn one(second: bool) -> Self {
        FieldJet {
            value: Multivector::scalar(Signature::spacetime(), 1.0),
            grad: std::array::from_fn(|_| zero()),
            hess: second.then(|| std::array::from_fn(|_| std::array::from_fn(|_| zero()))),
        }
    }

    fn from_dual(coeffs: &[(BladeMask, Dual4)]) -> Self {
        let sig = Signature::spacetime();
        let build = |pick: &dyn Fn(&Dual4) -> f64| {
            Multivector::from_terms(sig, coeffs.iter().map(|(m, c)| (*m, pick(c))))
                .expect("masks come from a validated spec")
        };
        FieldJet {
            value: build(&|c| c.value),
            grad: std::array::from_fn(|a| build(&|c| c.grad[a])),
            hess: None,
        }
    }

    fn from_jet2(coeffs: &[(BladeMask, Jet2)]) -> Self {
        let sig = Signature::spacetime();
        let build = |pick: &dyn Fn(&Jet2) -> f64| {
            Multivector::from_terms(sig, coeffs.iter().map(|(m, c)| (*m, pick(c))))
                .expect("masks come from a validated spec")
        };
        FieldJet {
            value: build(&|c| c.value),
            grad: std::array::from_fn(|a| build(&|c| c.grad[a])),
            hess: Some(std::array::from_fn(|a| {
                std::array::from_fn(|b| build(&|c| c.hess[a][b]))
            })),
        }
    }

    /// Leibniz rule for the geometric product `self * other`.
    fn product(&self, other: &FieldJet) -> FieldJet {
        let (a, b) = (self, other);
        let grad = std::array::from_fn(|i| &(&a.grad[i] * &b.value) + &(&a.value * &b.grad[i]));
        let hess = match (&a.hess, &b.hess) {
            (Some(ah), Some(bh)) => Some(std::array::from_fn(|i| {
                std::array::from_fn(|j| {
                    let mut h = &ah[i][j] * &b.value;
                    h = &h + &(&a.grad[i] * &b.grad[j]);
                    h = &h + &(&a.grad[j] * &b.grad[i]);
                    &h + &(&a.value * &bh[i][j])
                })
            })),
            _ => None,
        };
        FieldJet {
            value: &a.value * &b.value,
            grad,
            hess,
        }
    }
}

/// Pointwise check of the spin-field conditions.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SpinCheck {
    /// `|reverse(psi) psi - 1|_inf`.
    pub normalization_residual: f64,
    /// `|psi reverse(psi) - 1|_inf`.
    pub right_normalization_residual: f64,
    /// Largest non-grade-1 coefficient of `reverse(psi) e_I psi`, per `I`.
    pub grade1_residual: [f64; AMBIENT_DIM],
    pub sandwich_grade_ok: [bool; AMBIENT_DIM],
    pub normalization_ok: bool,
}

impl SpinCheck {
    pub fn passed(&self) -> bool {
        self.normalization_ok && self.sandwich_grade_ok.iter().all(|&ok| ok)
    }

    /// Frame indices whose sandwich is not a vector.
    pub fn failing_indices(&self) -> Vec<usize> {
        (0..AMBIENT_DIM)
            .filter(|&i| !self.sandwich_grade_ok[i])
            .collect()
    }
}

pub fn check_psi(psi: &Multivector, tol: f64) -> SpinCheck {
    let sig = psi.signature();
    let one = Multivector::scalar(sig, 1.0);
    let normalization_residual = (&(&psi.reverse() * psi) - &one).max_abs();
    let right_normalization_residual = (&(psi * &psi.reverse()) - &one).max_abs();
    let grade1_residual: [f64; AMBIENT_DIM] = std::array::from_fn(|i| {
        sandwich(psi, &Multivector::basis_vector(sig, i)).off_grade_norm(1)
    });
    SpinCheck {
        normalization_residual,
        right_normalization_residual,
        sandwich_grade_ok: grade1_residual.map(|r| r < tol),
        grade1_residual,
        normalization_ok: normalization_residual.max(right_normalization_residual) < tol,
    }
}

pub fn check_spin(spec: &SpinFieldSpec, x: Point, tol: f64) -> Result<SpinCheck, SpinFieldError> {
    Ok(check_psi(&spec.evaluate(x)?, tol))
}

/// Killing bivectors `K_a` at one point, with purity diagnostics.
#[derive(Debug, Clone)]
pub struct KillingData {
    pub point: Point,
    pub k: [Multivector; NVARS],
    /// `|K_a - grade2(K_a)|_inf`.
    pub grade2_residual: [f64; NVARS],
    /// `|d_a psi - K_a psi|_inf`.
    pub reconstruction_residual: [f64; NVARS],
    /// `|reverse(psi) psi - 1|_inf`.
    pub normalization_residual: f64,
    /// `|psi reverse(psi) - 1|_inf`.
    pub right_normalization_residual: f64,
}

impl KillingData {
    pub fn max_grade2_residual(&self) -> f64 {
        self.grade2_residual.iter().fold(0.0, |m, &r| m.max(r))
    }

    pub fn max_reconstruction_residual(&self) -> f64 {
        self.reconstruction_residual.iter().fold(0.0, |m, &r| m.max(r))
    }
}

/// Errors out if `psi` fails [`NORMALIZATION_TOL`] on either side.
fn normalization(psi: &Multivector, x: Point) -> Result<(f64, f64), SpinFieldError> {
    let one = Multivector::scalar(psi.signature(), 1.0);
    let left = (&(&psi.reverse() * psi) - &one).max_abs();
    let right = (&(psi * &psi.reverse()) - &one).max_abs();
    if left.max(right) > NORMALIZATION_TOL {
        return Err(SpinFieldError::NotNormalized {
            point: x,
            residual: left.max(right),
        });
    }
    Ok((left, right))
}

/// `K_a = (d_a psi) reverse(psi)`. The result is not grade-projected.
pub fn killing_extract(
    spec: &SpinFieldSpec,
    x: Point,
    diff: Differentiation,
) -> Result<KillingData, SpinFieldError> {
    let (psi, grad) = match diff {
        Differentiation::Automatic => {
            let jet = spec.jet1(x)?;
            (jet.value, jet.grad)
        }
        Differentiation::Central(_) => {
            let psi = spec.evaluate(x)?;
            let mut grad: [Multivector; NVARS] = std::array::from_fn(|_| zero());
            for (alpha, slot) in grad.iter_mut().enumerate() {
                *slot = spec.partial(x, alpha, diff)?;
            }
            (psi, grad)
        }
    };
    let (normalization_residual, right_normalization_residual) = normalization(&psi, x)?;
    let rev = psi.reverse();
    let k: [Multivector; NVARS] = std::array::from_fn(|a| &grad[a] * &rev);
    Ok(KillingData {
        point: x,
        grade2_residual: std::array::from_fn(|a| k[a].off_grade_norm(2)),
        reconstruction_residual: std::array::from_fn(|a| (&grad[a] - &(&k[a] * &psi)).max_abs()),
        normalization_residual,
        right_normalization_residual,
        k,
    })
}

/// `K_a` together with `dk[b][a] = d_b K_a`, from the exact second-order jet of `psi`.
#[derive(Debug, Clone)]
pub struct KillingJet {
    pub k: [Multivector; NVARS],
    pub dk: [[Multivector; NVARS]; NVARS],
}

pub fn killing_jet(spec: &SpinFieldSpec, x: Point) -> Result<KillingJet, SpinFieldError> {
    let jet = spec.jet2(x)?;
    normalization(&jet.value, x)?;
    let hess = jet.hess.expect("second-order jet requested");
    let rev = jet.value.reverse();
    let rev_grad: [Multivector; NVARS] = std::array::from_fn(|b| jet.grad[b].reverse());
    Ok(KillingJet {
        k: std::array::from_fn(|a| &jet.grad[a] * &rev),
        dk: std::array::from_fn(|b| {
            std::array::from_fn(|a| &(&hess[b][a] * &rev) + &(&jet.grad[a] * &rev_grad[b]))
        }),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::FRAC_1_SQRT_2;

    fn st() -> Signature {
        Signature::spacetime()
    }

    fn e(indices: &[usize]) -> Multivector {
        Multivector::blade(st(), indices)
    }

    fn one() -> Multivector {
        Multivector::scalar(st(), 1.0)
    }

    fn mixed_grade_t() -> SpinFieldSpec {
        SpinFieldSpec::Constant {
            terms: vec![
                Term {
                    blade: vec![1, 2],
                    coeff: FRAC_1_SQRT_2,
                },
                Term {
                    blade: vec![3, 4, 5, 6],
                    coeff: FRAC_1_SQRT_2,
                },
            ],
        }
    }

    #[test]
    fn sphere_values() {
        let psi = SpinFieldSpec::Sphere.evaluate([7.0, 0.0, 0.0, 0.0]).unwrap();
        assert!(psi.distance(&one()) < 1e-15);
        let psi = SpinFieldSpec::Sphere.evaluate([0.0, 1.0, 0.0, 0.0]).unwrap();
        let expected = (&one() - &e(&[1, 5])).scale(FRAC_1_SQRT_2);
        assert!(psi.distance(&expected) < 1e-15);
    }

    #[test]
    fn trivial_rotation_is_one() {
        let spec = SpinFieldSpec::rotation(4, 5, "0").unwrap();
        assert_eq!(spec.evaluate([0.3, 1.0, 2.0, 3.0]).unwrap(), one());
        assert!(spec
            .partial([0.0; 4], 2, Differentiation::Automatic)
            .unwrap()
            .is_empty());
    }

    #[test]
    fn sphere_partial_at_origin() {
        let x = [0.4, 0.0, 0.0, 0.0];
        let ad = SpinFieldSpec::Sphere
            .partial(x, 1, Differentiation::Automatic)
            .unwrap();
        assert!(ad.distance(&-&e(&[1, 5])) < 1e-15);
        let fd = SpinFieldSpec::Sphere
            .partial(x, 1, Differentiation::Central(FdConfig::new(1e-6).unwrap()))
            .unwrap();
        assert!(fd.distance(&ad) < 1e-6);
    }

    #[test]
    fn spin_check_examples() {
        let check = check_spin(&SpinFieldSpec::Sphere, [0.1, -0.4, 0.9, 1.3], 1e-10).unwrap();
        assert!(check.passed());
        assert!(check.normalization_residual < 1e-12);

        let check = check_spin(&mixed_grade_t(), [0.0; 4], 1e-10).unwrap();
        assert!(check.normalization_ok);
        assert!(!check.sandwich_grade_ok[1]);
        assert_eq!(check.failing_indices()[0], 1);

        let identity = SpinFieldSpec::Constant {
            terms: vec![Term {
                blade: vec![],
                coeff: 1.0,
            }],
        };
        let check = check_spin(&identity, [0.0; 4], 1e-10).unwrap();
        assert!(check.passed());
        assert_eq!(check.normalization_residual, 0.0);
    }

    #[test]
    fn extraction_of_identity_is_zero() {
        let identity = SpinFieldSpec::rotation(1, 2, "0").unwrap();
        let data = killing_extract(&identity, [0.5; 4], Differentiation::Automatic).unwrap();
        assert!(data.k.iter().all(|k| k.is_empty()));
        assert_eq!(data.max_grade2_residual(), 0.0);
        assert_eq!(data.max_reconstruction_residual(), 0.0);
    }

    #[test]
    fn extraction_of_rotation() {
        let spec = SpinFieldSpec::rotation(4, 5, "x0").unwrap();
        let data = killing_extract(&spec, [0.7, 0.1, 0.2, 0.3], Differentiation::Automatic).unwrap();
        assert!(data.k[0].distance(&e(&[4, 5]).scale(0.5)) < 1e-14);
        for k in &data.k[1..] {
            assert!(k.max_abs() < 1e-14);
        }
        assert!(data.max_reconstruction_residual() < 1e-14);
    }

    #[test]
    fn extraction_of_sphere_at_origin() {
        let data = killing_extract(&SpinFieldSpec::Sphere, [0.0; 4], Differentiation::Automatic)
            .unwrap();
        assert!(data.k[0].is_empty());
        for mu in 1..4 {
            assert!(data.k[mu].distance(&-&e(&[mu, 5])) < 1e-15);
        }
    }

    #[test]
    fn boost_rotation_uses_hyperbolic_branch() {
        let spec = SpinFieldSpec::rotation(0, 7, "2*x3").unwrap();
        let x = [0.0, 0.0, 0.0, 0.6];
        let psi = spec.evaluate(x).unwrap();
        let expected = &one().scale(0.6f64.cosh()) + &e(&[0, 7]).scale(0.6f64.sinh());
        assert!(psi.distance(&expected) < 1e-14);
        let data = killing_extract(&spec, x, Differentiation::Automatic).unwrap();
        assert!(data.k[3].distance(&e(&[0, 7])) < 1e-14);
    }

    #[test]
    fn unnormalized_fields_are_refused() {
        let spec = SpinFieldSpec::type_a(5, "1", ["0", "x1", "0", "0"]).unwrap();
        assert!(matches!(
            killing_extract(&spec, [0.0, 0.5, 0.0, 0.0], Differentiation::Automatic),
            Err(SpinFieldError::NotNormalized { .. })
        ));
    }

    #[test]
    fn product_jet_matches_finite_differences() {
        let spec = SpinFieldSpec::Product {
            factors: vec![
                SpinFieldSpec::Sphere,
                SpinFieldSpec::rotation(2, 6, "x1*x2 + sin(x3)").unwrap(),
            ],
        };
        let x = [0.2, 0.3, -0.5, 0.8];
        let jet = spec.jet2(x).unwrap();
        let hess = jet.hess.unwrap();
        let h = 1e-4;
        for a in 0..4 {
            let (p, m) = shifted(x, a, h);
            let fd = (&spec.jet1(p).unwrap().grad[1] - &spec.jet1(m).unwrap().grad[1])
                .scale(0.5 / h);
            assert!(fd.distance(&hess[a][1]) < 1e-7, "a = {a}");
        }
    }

    #[test]
    fn validation() {
        assert!(SpinFieldSpec::rotation(5, 4, "x0").is_err());
        assert!(SpinFieldSpec::type_a(3, "1", ["0"; 4]).is_err());
        assert!(SpinFieldSpec::type_b(4, "1", ["0"; 6]).is_err());
        assert!(SpinFieldSpec::Product { factors: vec![] }.validate().is_err());
        let odd = SpinFieldSpec::Constant {
            terms: vec![Term {
                blade: vec![1],
                coeff: 1.0,
            }],
        };
        assert!(odd.validate().is_err());
        assert!(FdConfig::new(-1e-5).is_err());
    }

    #[test]
    fn json_form() {
        let spec: SpinFieldSpec = serde_json::from_str(
            r#"{"family": "typeB", "tangent_index": 1, "f": "1",
                "fB": ["0", "0", "0", "0", "0", "0"]}"#,
        )
        .unwrap();
        assert!(matches!(spec, SpinFieldSpec::TypeB { tangent_index: 1, .. }));
        let spec: SpinFieldSpec = serde_json::from_str(r#"{"family": "sphere"}"#).unwrap();
        assert_eq!(spec, SpinFieldSpec::Sphere);
        assert!(serde_json::from_str::<SpinFieldSpec>(r#"{"family": "typeC"}"#).is_err());
        assert!(serde_json::from_str::<SpinFieldSpec>(
            r#"{"family": "rotation", "plane": [1, 2], "angle": "x0", "extra": 1}"#
        )
        .is_err());
    }
}
