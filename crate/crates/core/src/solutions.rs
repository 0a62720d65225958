//! Closed-form connections of the type-A and type-B spin field families, and
//! the connection of a product `psi1 psi2` with `psi1` of either type.
//!
//! Type A is `psi = f + sum_mu c_mu e_mu e_n` for one normal index `n`, with
//! `f^2 + sum_mu eta_mu c_mu^2 = 1`. Its only nonzero blocks are
//!
//! ```text
//! H_a^{mu n}  = 2 (f d_a c_mu - c_mu d_a f)
//! omega_a^{mu nu} = (H_a^{mu n} c_nu - H_a^{nu n} c_mu) / f
//! ```
//!
//! Type B is `psi = f + sum_k c_k e_t e_k` for one tangent index `t`, with
//! `f^2 + eta_t sum_k c_k^2 = 1`. Its tangent connection vanishes and
//!
//! ```text
//! H_a^{t k} = 2 (f d_a c_k - c_k d_a f)
//! A_a^{ij}  = eta_t (H_a^{t i} c_j - H_a^{t j} c_i) / f
//! ```
//!
//! For a product, `K' = K1 + psi1 K2 rev(psi1)`. The conjugated part is written
//! out block by block in [`compose_connection_a`] and [`compose_connection_b`] as
//! quadratic forms in `(f, c)`, and checked against direct conjugation by
//! [`compose_by_conjugation`]. The [`printed`] module holds an alternative
//! expansion with restricted index sums that does *not* agree with
//! conjugation; it is kept so the disagreement can be measured.

use serde::Serialize;
use thiserror::Error;

use crate::clifford::{CliffordError, Multivector, Signature};
use crate::expr::{Dual4, EvalError, Jet2, Scalar, NVARS};
use crate::geometry::{eta, split_connection, ConnectionAtPoint, ConnectionJet};
use crate::spin_field::{Point, SpinFieldSpec, AMBIENT_DIM, TANGENT_DIM};

/// `|f|` below which the `1/f` closed forms are refused.
pub const SINGULAR_F: f64 = 1e-10;
/// Normalization tolerance for closed-form parameters.
pub const PARAM_NORMALIZATION_TOL: f64 = 1e-8;
/// Agreement required between formula and conjugation before the formula is trusted.
pub const ORACLE_TOL: f64 = 1e-10;

const NORMAL_DIM: usize = AMBIENT_DIM - TANGENT_DIM;

#[derive(Debug, Error)]
pub enum SolutionError {
    #[error("f = {f:e} is too close to zero for the closed-form connection")]
    SingularGauge { f: f64 },
    #[error("parameters are not normalized (residual {residual:e})")]
    NotNormalized { residual: f64 },
    #[error("{0} has no closed-form connection")]
    NoClosedForm(&'static str),
    #[error("invalid parameters: {0}")]
    InvalidParams(String),
    #[error("conjugation left grade-2: {0}")]
    NotBivectorPreserving(String),
    #[error(transparent)]
    Eval(#[from] EvalError),
    #[error(transparent)]
    Clifford(#[from] CliffordError),
}

/// Type-A data at one point: `psi = f + sum_mu c[mu] e_mu e_n`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TypeAPointData {
    pub normal_index: usize,
    pub f: f64,
    pub c: [f64; TANGENT_DIM],
    pub grad_f: [f64; NVARS],
    /// `grad_c[mu][alpha] = d_alpha c_mu`.
    pub grad_c: [[f64; NVARS]; TANGENT_DIM],
}

/// Type-B data at one point: `psi = f + sum_k c[k-4] e_t e_k`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TypeBPointData {
    pub tangent_index: usize,
    pub f: f64,
    pub c: [f64; NORMAL_DIM],
    pub grad_f: [f64; NVARS],
    /// `grad_c[k-4][alpha] = d_alpha c_k`.
    pub grad_c: [[f64; NVARS]; NORMAL_DIM],
}

impl TypeAPointData {
    pub fn from_spec(spec: &SpinFieldSpec, x: Point) -> Result<Self, SolutionError> {
        match spec {
            SpinFieldSpec::TypeA {
                normal_index, f, fa, ..
            } => {
                let f = f.eval_dual(x)?;
                let c: Vec<Dual4> = fa.iter().map(|e| e.eval_dual(x)).collect::<Result<_, _>>()?;
                Ok(TypeAPointData {
                    normal_index: *normal_index,
                    f: f.value,
                    c: std::array::from_fn(|m| c[m].value),
                    grad_f: f.grad,
                    grad_c: std::array::from_fn(|m| c[m].grad),
                })
            }
            SpinFieldSpec::Sphere => Self::from_spec(&SpinFieldSpec::sphere_as_type_a(), x),
            _ => Err(SolutionError::InvalidParams("expected a type-A field".into())),
        }
    }

    pub fn psi(&self) -> Multivector {
        let sig = Signature::spacetime();
        let mut terms = vec![(0, self.f)];
        for (mu, &c) in self.c.iter().enumerate() {
            terms.push(((1 << mu) | (1 << self.normal_index), c));
        }
        Multivector::from_terms(sig, terms).expect("masks are in range")
    }

    fn validate(&self) -> Result<(), SolutionError> {
        if !(TANGENT_DIM..AMBIENT_DIM).contains(&self.normal_index) {
            return Err(SolutionError::InvalidParams(format!(
                "normal index {} must be in 4..=9",
                self.normal_index
            )));
        }
        Ok(())
    }
}

impl TypeBPointData {
    pub fn from_spec(spec: &SpinFieldSpec, x: Point) -> Result<Self, SolutionError> {
        match spec {
            SpinFieldSpec::TypeB {
                tangent_index, f, fb, ..
            } => {
                let f = f.eval_dual(x)?;
                let c: Vec<Dual4> = fb.iter().map(|e| e.eval_dual(x)).collect::<Result<_, _>>()?;
                Ok(TypeBPointData {
                    tangent_index: *tangent_index,
                    f: f.value,
                    c: std::array::from_fn(|k| c[k].value),
                    grad_f: f.grad,
                    grad_c: std::array::from_fn(|k| c[k].grad),
                })
            }
            _ => Err(SolutionError::InvalidParams("expected a type-B field".into())),
        }
    }

    pub fn psi(&self) -> Multivector {
        let sig = Signature::spacetime();
        let mut terms = vec![(0, self.f)];
        for (n, &c) in self.c.iter().enumerate() {
            terms.push(((1 << self.tangent_index) | (1 << (TANGENT_DIM + n)), c));
        }
        Multivector::from_terms(sig, terms).expect("masks are in range")
    }

    fn validate(&self) -> Result<(), SolutionError> {
        if self.tangent_index >= TANGENT_DIM {
            return Err(SolutionError::InvalidParams(format!(
                "tangent index {} must be in 0..=3",
                self.tangent_index
            )));
        }
        Ok(())
    }
}

/// Nonzero upper-triangular connection entries `(alpha, I, J, W_alpha^{IJ})`.
type Entries<S> = Vec<(usize, usize, usize, S)>;

fn check_f_and_norm(f: f64, norm: f64) -> Result<(), SolutionError> {
    if f.abs() < SINGULAR_F {
        return Err(SolutionError::SingularGauge { f });
    }
    let residual = (norm - 1.0).abs();
    if residual > PARAM_NORMALIZATION_TOL {
        return Err(SolutionError::NotNormalized { residual });
    }
    Ok(())
}

/// Type-A closed form over any scalar; `dc[mu][alpha] = d_alpha c_mu`.
fn type_a_entries<S: Scalar>(
    n: usize,
    f: S,
    df: [S; NVARS],
    c: [S; TANGENT_DIM],
    dc: [[S; NVARS]; TANGENT_DIM],
) -> Result<Entries<S>, SolutionError> {
    let norm = f.value() * f.value()
        + (0..TANGENT_DIM)
            .map(|m| eta(m) * c[m].value() * c[m].value())
            .sum::<f64>();
    check_f_and_norm(f.value(), norm)?;
    let mut out = Vec::new();
    for alpha in 0..NVARS {
        let h: [S; TANGENT_DIM] =
            std::array::from_fn(|mu| (f * dc[mu][alpha] - c[mu] * df[alpha]).scale(2.0));
        for mu in 0..TANGENT_DIM {
            out.push((alpha, mu, n, h[mu]));
            for nu in mu + 1..TANGENT_DIM {
                out.push((alpha, mu, nu, (h[mu] * c[nu] - h[nu] * c[mu]) / f));
            }
        }
    }
    Ok(out)
}

/// Type-B closed form over any scalar; `dc[k-4][alpha] = d_alpha c_k`.
fn type_b_entries<S: Scalar>(
    t: usize,
    f: S,
    df: [S; NVARS],
    c: [S; NORMAL_DIM],
    dc: [[S; NVARS]; NORMAL_DIM],
) -> Result<Entries<S>, SolutionError> {
    let et = eta(t);
    let norm = f.value() * f.value() + et * c.iter().map(|c| c.value() * c.value()).sum::<f64>();
    check_f_and_norm(f.value(), norm)?;
    let mut out = Vec::new();
    for alpha in 0..NVARS {
        let h: [S; NORMAL_DIM] =
            std::array::from_fn(|k| (f * dc[k][alpha] - c[k] * df[alpha]).scale(2.0));
        for i in 0..NORMAL_DIM {
            out.push((alpha, t, TANGENT_DIM + i, h[i]));
            for j in i + 1..NORMAL_DIM {
                let a = (h[i] * c[j] - h[j] * c[i]).scale(et) / f;
                out.push((alpha, TANGENT_DIM + i, TANGENT_DIM + j, a));
            }
        }
    }
    Ok(out)
}

fn to_connection(entries: &Entries<f64>) -> ConnectionAtPoint {
    let mut conn = ConnectionAtPoint::zero();
    for &(a, i, j, v) in entries {
        conn.set(a, i, j, v);
    }
    conn
}

fn to_jet(entries: &Entries<Dual4>) -> ConnectionJet {
    let mut jet = ConnectionJet {
        value: ConnectionAtPoint::zero(),
        d: [ConnectionAtPoint::zero(); NVARS],
    };
    for &(a, i, j, v) in entries {
        jet.value.set(a, i, j, v.value);
        for (beta, d) in jet.d.iter_mut().enumerate() {
            d.set(a, i, j, v.grad[beta]);
        }
    }
    jet
}

pub fn type_a_closed_connection(p: &TypeAPointData) -> Result<ConnectionAtPoint, SolutionError> {
    p.validate()?;
    Ok(to_connection(&type_a_entries(
        p.normal_index,
        p.f,
        p.grad_f,
        p.c,
        p.grad_c,
    )?))
}

pub fn type_b_closed_connection(p: &TypeBPointData) -> Result<ConnectionAtPoint, SolutionError> {
    p.validate()?;
    Ok(to_connection(&type_b_entries(
        p.tangent_index,
        p.f,
        p.grad_f,
        p.c,
        p.grad_c,
    )?))
}

/// Closed-form connection of a field at `x`. Rotations are included
/// (`W^{IJ} = d angle` in the rotation plane); products are not.
pub fn closed_connection(
    spec: &SpinFieldSpec,
    x: Point,
) -> Result<ConnectionAtPoint, SolutionError> {
    Ok(closed_connection_jet(spec, x)?.value)
}

/// Closed-form connection with exact first derivatives: coefficients are
/// evaluated as second-order jets and the formulas run on their gradients.
pub fn closed_connection_jet(
    spec: &SpinFieldSpec,
    x: Point,
) -> Result<ConnectionJet, SolutionError> {
    let entries: Entries<Dual4> = match spec {
        SpinFieldSpec::TypeA {
            normal_index, f, fa, ..
        } => {
            let f = f.eval_jet(x)?;
            let c: Vec<Jet2> = fa.iter().map(|e| e.eval_jet(x)).collect::<Result<_, _>>()?;
            type_a_entries(
                *normal_index,
                f.dual(),
                std::array::from_fn(|a| f.partial(a)),
                std::array::from_fn(|m| c[m].dual()),
                std::array::from_fn(|m| std::array::from_fn(|a| c[m].partial(a))),
            )?
        }
        SpinFieldSpec::TypeB {
            tangent_index, f, fb, ..
        } => {
            let f = f.eval_jet(x)?;
            let c: Vec<Jet2> = fb.iter().map(|e| e.eval_jet(x)).collect::<Result<_, _>>()?;
            type_b_entries(
                *tangent_index,
                f.dual(),
                std::array::from_fn(|a| f.partial(a)),
                std::array::from_fn(|k| c[k].dual()),
                std::array::from_fn(|k| std::array::from_fn(|a| c[k].partial(a))),
            )?
        }
        SpinFieldSpec::Sphere => {
            return closed_connection_jet(&SpinFieldSpec::sphere_as_type_a(), x)
        }
        SpinFieldSpec::Rotation { plane: [i, j], angle } => {
            let theta = angle.eval_jet(x)?;
            (0..NVARS).map(|a| (a, *i, *j, theta.partial(a))).collect()
        }
        SpinFieldSpec::Product { .. } => return Err(SolutionError::NoClosedForm("a product")),
        SpinFieldSpec::Constant { .. } => {
            return Ok(ConnectionJet {
                value: ConnectionAtPoint::zero(),
                d: [ConnectionAtPoint::zero(); NVARS],
            })
        }
    };
    Ok(to_jet(&entries))
}

/// `psi K rev(psi)`, refusing `psi` outside grades {0, 2} and results that are
/// not bivectors to within `1e-12` (relative to the input size).
pub fn conjugate_bivector(psi: &Multivector, k: &Multivector) -> Result<Multivector, SolutionError> {
    if psi.grades().iter().any(|&g| g != 0 && g != 2) {
        return Err(SolutionError::NotBivectorPreserving(format!(
            "psi has grades {:?}; only 0 and 2 are allowed",
            psi.grades()
        )));
    }
    if k.off_grade_norm(2) > 0.0 {
        return Err(SolutionError::NotBivectorPreserving(
            "K is not a bivector".into(),
        ));
    }
    let out = &(psi * k) * &psi.reverse();
    let scale = 1.0 + k.max_abs() * (1.0 + psi.max_abs()).powi(2);
    let residual = out.off_grade_norm(2);
    if residual > 1e-12 * scale {
        return Err(SolutionError::NotBivectorPreserving(format!(
            "result has a non-bivector part of size {residual:e}"
        )));
    }
    Ok(out.grade_project(2))
}

/// Reference composition: `split(K1 + psi1 K2 rev(psi1))` by direct Clifford products.
pub fn compose_by_conjugation(
    psi1: &Multivector,
    conn1: &ConnectionAtPoint,
    conn2: &ConnectionAtPoint,
) -> Result<ConnectionAtPoint, SolutionError> {
    let k1 = conn1.killing_bivectors();
    let k2 = conn2.killing_bivectors();
    let mut k = Vec::with_capacity(NVARS);
    for a in 0..NVARS {
        k.push(&k1[a] + &conjugate_bivector(psi1, &k2[a])?);
    }
    Ok(split_connection(&k.try_into().expect("four directions")))
}

/// Connection of `psi1 psi2` together with its inputs.
#[derive(Debug, Clone, Serialize)]
pub struct ComposedConnection<P> {
    #[serde(rename = "connection")]
    pub conn: ConnectionAtPoint,
    pub inputs: ComposedInputs<P>,
}

#[derive(Debug, Clone, Serialize)]
pub struct ComposedInputs<P> {
    pub psi1: P,
    pub conn1: ConnectionAtPoint,
    pub conn2: ConnectionAtPoint,
}

/// Conjugated part for type-A `psi1`, block by block. `W` holds `conn2`.
fn conjugate_type_a(n: usize, f: f64, c: &[f64; TANGENT_DIM], w: &ConnectionAtPoint) -> ConnectionAtPoint {
    let s: f64 = (0..TANGENT_DIM).map(|g| eta(g) * c[g] * c[g]).sum();
    let norm = f * f + s;
    let mut out = ConnectionAtPoint::zero();
    for a in 0..NVARS {
        // sum_g eta_g c_g W^{g I} for every I.
        let cw: [f64; AMBIENT_DIM] =
            std::array::from_fn(|i| (0..TANGENT_DIM).map(|g| eta(g) * c[g] * w.get(a, g, i)).sum());
        for mu in 0..TANGENT_DIM {
            for nu in mu + 1..TANGENT_DIM {
                let v = norm * w.omega(a, mu, nu) - 2.0 * c[mu] * cw[nu] + 2.0 * c[nu] * cw[mu]
                    + 2.0 * f * (w.h(a, mu, n) * c[nu] - w.h(a, nu, n) * c[mu]);
                out.set(a, mu, nu, v);
            }
            // sum_g omega^{mu g} eta_g c_g = -cw[mu].
            let v = (f * f - s) * w.h(a, mu, n) + 2.0 * c[mu] * cw[n] + 2.0 * f * cw[mu];
            out.set(a, mu, n, v);
            for i in (TANGENT_DIM..AMBIENT_DIM).filter(|&i| i != n) {
                let v = norm * w.h(a, mu, i) - 2.0 * c[mu] * cw[i] + 2.0 * f * c[mu] * w.a(a, n, i);
                out.set(a, mu, i, v);
            }
        }
        for i in (TANGENT_DIM..AMBIENT_DIM).filter(|&i| i != n) {
            out.set(a, n, i, (f * f - s) * w.a(a, n, i) - 2.0 * f * cw[i]);
            for j in (i + 1..AMBIENT_DIM).filter(|&j| j != n) {
                out.set(a, i, j, norm * w.a(a, i, j));
            }
        }
    }
    out
}

/// Conjugated part for type-B `psi1`, block by block. `W` holds `conn2`.
fn conjugate_type_b(t: usize, f: f64, c: &[f64; NORMAL_DIM], w: &ConnectionAtPoint) -> ConnectionAtPoint {
    let et = eta(t);
    let cn = |k: usize| c[k - TANGENT_DIM];
    let normals = TANGENT_DIM..AMBIENT_DIM;
    let s: f64 = c.iter().map(|v| v * v).sum();
    let norm = f * f + et * s;
    let mut out = ConnectionAtPoint::zero();
    for a in 0..NVARS {
        // sum_k W^{I k} c_k for every I.
        let wc: [f64; AMBIENT_DIM] =
            std::array::from_fn(|i| normals.clone().map(|k| w.get(a, i, k) * cn(k)).sum());
        for mu in (0..TANGENT_DIM).filter(|&mu| mu != t) {
            out.set(a, t, mu, (f * f - et * s) * w.omega(a, t, mu) - 2.0 * f * wc[mu]);
            for nu in (mu + 1..TANGENT_DIM).filter(|&nu| nu != t) {
                out.set(a, mu, nu, norm * w.omega(a, mu, nu));
            }
        }
        for i in normals.clone() {
            let v = (f * f - et * s) * w.h(a, t, i) + 2.0 * et * cn(i) * wc[t] - 2.0 * f * wc[i];
            out.set(a, t, i, v);
            for mu in (0..TANGENT_DIM).filter(|&mu| mu != t) {
                let v = norm * w.h(a, mu, i)
                    - 2.0 * et * cn(i) * wc[mu]
                    - 2.0 * f * et * cn(i) * w.omega(a, mu, t);
                out.set(a, mu, i, v);
            }
            for j in i + 1..AMBIENT_DIM {
                let v = norm * w.a(a, i, j) - 2.0 * et * cn(j) * wc[i] + 2.0 * et * cn(i) * wc[j]
                    - 2.0 * f * et * (cn(i) * w.h(a, t, j) - cn(j) * w.h(a, t, i));
                out.set(a, i, j, v);
            }
        }
    }
    out
}

/// `conn1 + conjugated(conn2)` for a type-A first factor, from the block formulas.
pub fn compose_connection_a(
    psi1: &TypeAPointData,
    conn2: &ConnectionAtPoint,
) -> Result<ComposedConnection<TypeAPointData>, SolutionError> {
    let conn1 = type_a_closed_connection(psi1)?;
    let conj = conjugate_type_a(psi1.normal_index, psi1.f, &psi1.c, conn2);
    Ok(ComposedConnection {
        conn: conn1.zip(&conj, |x, y| x + y),
        inputs: ComposedInputs {
            psi1: *psi1,
            conn1,
            conn2: *conn2,
        },
    })
}

/// `conn1 + conjugated(conn2)` for a type-B first factor, from the block formulas.
pub fn compose_connection_b(
    psi1: &TypeBPointData,
    conn2: &ConnectionAtPoint,
) -> Result<ComposedConnection<TypeBPointData>, SolutionError> {
    let conn1 = type_b_closed_connection(psi1)?;
    let conj = conjugate_type_b(psi1.tangent_index, psi1.f, &psi1.c, conn2);
    Ok(ComposedConnection {
        conn: conn1.zip(&conj, |x, y| x + y),
        inputs: ComposedInputs {
            psi1: *psi1,
            conn1,
            conn2: *conn2,
        },
    })
}

/// Block-formula result cross-checked against direct conjugation. On
/// disagreement beyond [`ORACLE_TOL`] the conjugation result is returned and a
/// warning is logged.
#[derive(Debug, Clone, Serialize)]
pub struct CheckedComposition<P> {
    #[serde(flatten)]
    pub composed: ComposedConnection<P>,
    pub oracle_discrepancy: f64,
    pub used_oracle: bool,
}

fn checked<P>(
    mut composed: ComposedConnection<P>,
    psi1: &Multivector,
) -> Result<CheckedComposition<P>, SolutionError> {
    let oracle = compose_by_conjugation(psi1, &composed.inputs.conn1, &composed.inputs.conn2)?;
    let oracle_discrepancy = composed.conn.distance(&oracle);
    let used_oracle = oracle_discrepancy > ORACLE_TOL;
    if used_oracle {
        log::warn!(
            "composition formula differs from conjugation by {oracle_discrepancy:e}; using conjugation"
        );
        composed.conn = oracle;
    }
    Ok(CheckedComposition {
        composed,
        oracle_discrepancy,
        used_oracle,
    })
}

pub fn compose_a_checked(
    psi1: &TypeAPointData,
    conn2: &ConnectionAtPoint,
) -> Result<CheckedComposition<TypeAPointData>, SolutionError> {
    checked(compose_connection_a(psi1, conn2)?, &psi1.psi())
}

pub fn compose_b_checked(
    psi1: &TypeBPointData,
    conn2: &ConnectionAtPoint,
) -> Result<CheckedComposition<TypeBPointData>, SolutionError> {
    checked(compose_connection_b(psi1, conn2)?, &psi1.psi())
}

/// A literal rendering of an alternative expansion of the composed connection
/// that restricts several index sums (`sum_{g != mu, nu}`, `sum_{k != i}`) and
/// doubles some cross terms. It disagrees with direct conjugation as soon as
/// two or more coefficients of `psi1` are nonzero; it exists only so that the
/// disagreement can be quantified by [`audit`](printed::audit_a).
pub mod printed {
    use super::*;

    /// Largest disagreement with conjugation, per block.
    #[derive(Debug, Clone, Copy, Default, PartialEq, Serialize)]
    pub struct BlockDiscrepancy {
        pub omega: f64,
        pub h: f64,
        pub a: f64,
    }

    impl BlockDiscrepancy {
        pub fn max(&self) -> f64 {
            self.omega.max(self.h).max(self.a)
        }

        pub fn merge(&self, other: &Self) -> Self {
            BlockDiscrepancy {
                omega: self.omega.max(other.omega),
                h: self.h.max(other.h),
                a: self.a.max(other.a),
            }
        }
    }

    fn discrepancy(x: &ConnectionAtPoint, y: &ConnectionAtPoint) -> BlockDiscrepancy {
        use crate::geometry::Block;
        let d = x.zip(y, |p, q| p - q);
        BlockDiscrepancy {
            omega: d.max_abs_block(Block::Omega),
            h: d.max_abs_block(Block::H),
            a: d.max_abs_block(Block::A),
        }
    }

    pub fn compose_a(
        n: usize,
        f: f64,
        c: &[f64; TANGENT_DIM],
        conn1: &ConnectionAtPoint,
        w: &ConnectionAtPoint,
    ) -> ConnectionAtPoint {
        let tangent = 0..TANGENT_DIM;
        let lowered = |g: usize| eta(g) * c[g] * c[g];
        let mut out = ConnectionAtPoint::zero();
        for a in 0..NVARS {
            for mu in tangent.clone() {
                for nu in mu + 1..TANGENT_DIM {
                    let restricted: f64 = tangent
                        .clone()
                        .filter(|&g| g != mu && g != nu)
                        .map(lowered)
                        .sum();
                    let mut v = conn1.omega(a, mu, nu) + w.omega(a, mu, nu) * (f * f + restricted);
                    for g in tangent.clone() {
                        v += 2.0 * w.get(a, nu, g) * eta(g) * c[mu] * c[g];
                        v -= 2.0 * w.get(a, mu, g) * eta(g) * c[nu] * c[g];
                    }
                    v += 2.0 * w.h(a, mu, n) * f * c[nu] - 2.0 * w.h(a, nu, n) * f * c[mu];
                    out.set(a, mu, nu, v);
                }
                let restricted: f64 = tangent.clone().filter(|&g| g != mu).map(lowered).sum();
                let mut v = w.h(a, mu, n) * (f * f - 2.0 * restricted);
                for g in tangent.clone() {
                    v -= 2.0 * w.get(a, mu, g) * eta(g) * f * c[g];
                    v += 4.0 * eta(g) * w.h(a, g, n) * c[g] * c[mu];
                }
                out.set(a, mu, n, v);
                for i in (TANGENT_DIM..AMBIENT_DIM).filter(|&i| i != n) {
                    let mut v = w.h(a, mu, i) * (f * f + restricted) + 2.0 * w.a(a, n, i) * f * c[mu];
                    for g in tangent.clone() {
                        v += 2.0 * eta(g) * w.h(a, g, i) * c[g] * c[mu];
                    }
                    out.set(a, mu, i, v);
                }
            }
            let full: f64 = tangent.clone().map(lowered).sum();
            for i in (TANGENT_DIM..AMBIENT_DIM).filter(|&i| i != n) {
                let mut v = w.a(a, n, i) * (f * f - 2.0 * full);
                for g in tangent.clone() {
                    v -= 2.0 * eta(g) * w.h(a, g, i) * f * c[g];
                }
                out.set(a, n, i, v);
                for j in (i + 1..AMBIENT_DIM).filter(|&j| j != n) {
                    out.set(a, i, j, w.a(a, i, j));
                }
            }
        }
        out
    }

    pub fn compose_b(
        t: usize,
        f: f64,
        c: &[f64; NORMAL_DIM],
        conn1: &ConnectionAtPoint,
        w: &ConnectionAtPoint,
    ) -> ConnectionAtPoint {
        let et = eta(t);
        let normals = TANGENT_DIM..AMBIENT_DIM;
        let cn = |k: usize| c[k - TANGENT_DIM];
        let full: f64 = c.iter().map(|v| v * v).sum();
        let mut out = ConnectionAtPoint::zero();
        for a in 0..NVARS {
            for mu in (0..TANGENT_DIM).filter(|&mu| mu != t) {
                let mut v = w.omega(a, t, mu) * f * f - 2.0 * et * w.omega(a, t, mu) * full;
                for k in normals.clone() {
                    v -= 2.0 * w.h(a, mu, k) * f * cn(k);
                }
                out.set(a, t, mu, v);
                for nu in (mu + 1..TANGENT_DIM).filter(|&nu| nu != t) {
                    out.set(a, mu, nu, w.omega(a, mu, nu));
                }
            }
            for i in normals.clone() {
                let restricted: f64 = normals.clone().filter(|&k| k != i).map(|k| et * cn(k) * cn(k)).sum();
                let mut v = conn1.h(a, t, i) + w.h(a, t, i) * (f * f - 2.0 * restricted);
                for k in normals.clone() {
                    v -= 2.0 * w.get(a, i, k) * f * cn(k);
                    v += 4.0 * et * w.h(a, t, k) * cn(k) * cn(i);
                }
                out.set(a, t, i, v);
                for mu in (0..TANGENT_DIM).filter(|&mu| mu != t) {
                    let mut v = w.h(a, mu, i) * (f * f + restricted)
                        - 2.0 * w.omega(a, mu, t) * et * f * cn(i);
                    for k in normals.clone() {
                        v -= 2.0 * w.h(a, mu, k) * et * cn(i) * cn(k);
                    }
                    out.set(a, mu, i, v);
                }
                for j in i + 1..AMBIENT_DIM {
                    let restricted: f64 = normals
                        .clone()
                        .filter(|&k| k != i && k != j)
                        .map(|k| et * cn(k) * cn(k))
                        .sum();
                    let mut v = conn1.a(a, i, j) + w.a(a, i, j) * (f * f + restricted);
                    for m in normals.clone() {
                        v += 2.0 * w.get(a, j, m) * et * cn(i) * cn(m);
                        v -= 2.0 * w.get(a, i, m) * et * cn(j) * cn(m);
                    }
                    v += 2.0 * et * w.h(a, t, i) * f * cn(j) - 2.0 * et * w.h(a, t, j) * f * cn(i);
                    out.set(a, i, j, v);
                }
            }
        }
        out
    }

    /// Per-block disagreement of the alternative type-A expansion with conjugation.
    pub fn audit_a(
        psi1: &TypeAPointData,
        conn2: &ConnectionAtPoint,
    ) -> Result<BlockDiscrepancy, SolutionError> {
        let conn1 = type_a_closed_connection(psi1)?;
        let oracle = compose_by_conjugation(&psi1.psi(), &conn1, conn2)?;
        let literal = compose_a(psi1.normal_index, psi1.f, &psi1.c, &conn1, conn2);
        Ok(discrepancy(&literal, &oracle))
    }

    /// Per-block disagreement of the alternative type-B expansion with conjugation.
    pub fn audit_b(
        psi1: &TypeBPointData,
        conn2: &ConnectionAtPoint,
    ) -> Result<BlockDiscrepancy, SolutionError> {
        let conn1 = type_b_closed_connection(psi1)?;
        let oracle = compose_by_conjugation(&psi1.psi(), &conn1, conn2)?;
        let literal = compose_b(psi1.tangent_index, psi1.f, &psi1.c, &conn1, conn2);
        Ok(discrepancy(&literal, &oracle))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{connection_field, Block};
    use crate::spin_field::Differentiation;

    fn st() -> Signature {
        Signature::spacetime()
    }

    fn e(indices: &[usize]) -> Multivector {
        Multivector::blade(st(), indices)
    }

    fn sample_conn(seed: u64) -> ConnectionAtPoint {
        // Small deterministic pseudo-random antisymmetric data.
        let mut state = seed.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
        let mut next = || {
            state = state.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            ((state >> 11) as f64 / (1u64 << 53) as f64) * 2.0 - 1.0
        };
        let mut conn = ConnectionAtPoint::zero();
        for a in 0..NVARS {
            for i in 0..AMBIENT_DIM {
                for j in i + 1..AMBIENT_DIM {
                    conn.set(a, i, j, next());
                }
            }
        }
        conn
    }

    fn type_a_point() -> TypeAPointData {
        // f^2 - c0^2 + c1^2 + c2^2 + c3^2 = 0.64 - 0.09 + 0.25 + 0.04 + 0.16 = 1.
        TypeAPointData {
            normal_index: 6,
            f: 0.8,
            c: [0.3, 0.5, -0.2, 0.4],
            grad_f: [0.1, -0.2, 0.3, 0.05],
            grad_c: [
                [0.2, 0.1, 0.0, -0.3],
                [0.0, 0.4, -0.1, 0.2],
                [0.3, -0.2, 0.1, 0.0],
                [-0.1, 0.0, 0.2, 0.1],
            ],
        }
    }

    fn type_b_point(t: usize) -> TypeBPointData {
        let c = [0.3, -0.1, 0.2, 0.0, 0.25, -0.15];
        let s: f64 = c.iter().map(|v| v * v).sum();
        TypeBPointData {
            tangent_index: t,
            f: (1.0 - eta(t) * s).sqrt(),
            c,
            grad_f: [0.1, 0.2, -0.1, 0.3],
            grad_c: std::array::from_fn(|k| std::array::from_fn(|a| 0.1 * (k as f64) - 0.05 * a as f64)),
        }
    }

    #[test]
    fn sphere_closed_form_at_origin() {
        let p = TypeAPointData::from_spec(&SpinFieldSpec::Sphere, [0.0; 4]).unwrap();
        let conn = type_a_closed_connection(&p).unwrap();
        for mu in 1..4 {
            assert!((conn.h(mu, mu, 5) + 2.0).abs() < 1e-15);
        }
        assert_eq!(conn.max_abs_block(Block::Omega), 0.0);
        let p = TypeAPointData::from_spec(&SpinFieldSpec::Sphere, [0.0, 1.0, 0.0, 0.0]).unwrap();
        let conn = type_a_closed_connection(&p).unwrap();
        assert!(conn.omega(1, 1, 3).abs() < 1e-15);
        assert!((conn.omega(2, 1, 2) + 1.0).abs() < 1e-15);
    }

    #[test]
    fn single_coefficient_type_a_has_no_tangent_connection() {
        let spec = SpinFieldSpec::type_a(5, "cos(x1)", ["0", "sin(x1)", "0", "0"]).unwrap();
        let conn = closed_connection(&spec, [0.0, 0.4, 0.0, 0.0]).unwrap();
        assert_eq!(conn.max_abs_block(Block::Omega), 0.0);
        assert!((conn.h(1, 1, 5) - 2.0).abs() < 1e-15);
    }

    #[test]
    fn type_b_closed_form_example() {
        let spec = SpinFieldSpec::type_b(
            1,
            "1/sqrt(1+x1^2)",
            ["x1/sqrt(1+x1^2)", "0", "0", "0", "0", "0"],
        )
        .unwrap();
        for u in [-1.3, 0.0, 0.4, 2.0] {
            let x = [0.0, u, 0.0, 0.0];
            let conn = closed_connection(&spec, x).unwrap();
            assert!((conn.h(1, 1, 4) - 2.0 / (1.0 + u * u)).abs() < 1e-14);
            assert_eq!(conn.max_abs_block(Block::Omega), 0.0);
            assert_eq!(conn.max_abs_block(Block::A), 0.0);
            let extracted = connection_field(&spec, x, Differentiation::Automatic).unwrap();
            assert!(extracted.distance(&conn) < 1e-14);
        }
    }

    #[test]
    fn singular_and_unnormalized_parameters_are_refused() {
        let mut p = type_a_point();
        p.f = 0.0;
        assert!(matches!(
            type_a_closed_connection(&p),
            Err(SolutionError::SingularGauge { .. })
        ));
        let mut p = type_a_point();
        p.c[1] = 0.9;
        assert!(matches!(
            type_a_closed_connection(&p),
            Err(SolutionError::NotNormalized { .. })
        ));
        assert!(closed_connection(&SpinFieldSpec::Product { factors: vec![] }, [0.0; 4]).is_err());
    }

    #[test]
    fn conjugation_examples() {
        let k = e(&[1, 5]);
        let one = Multivector::scalar(st(), 1.0);
        assert_eq!(conjugate_bivector(&one, &k).unwrap(), k);

        let theta: f64 = 0.3;
        let psi = &one.scale((theta / 2.0).cos()) + &e(&[1, 2]).scale((theta / 2.0).sin());
        let rotated = conjugate_bivector(&psi, &k).unwrap();
        let expected = &e(&[1, 5]).scale(theta.cos()) - &e(&[2, 5]).scale(theta.sin());
        assert!(rotated.distance(&expected) < 1e-15);

        let bad = &psi + &e(&[3, 4, 6, 7]).scale(0.1);
        assert!(matches!(
            conjugate_bivector(&bad, &k),
            Err(SolutionError::NotBivectorPreserving(_))
        ));
    }

    #[test]
    fn composition_identities() {
        let p = type_a_point();
        let conn1 = type_a_closed_connection(&p).unwrap();
        let composed = compose_connection_a(&p, &ConnectionAtPoint::zero()).unwrap();
        assert_eq!(composed.conn, conn1);

        let identity = TypeAPointData {
            normal_index: 5,
            f: 1.0,
            c: [0.0; 4],
            grad_f: [0.0; 4],
            grad_c: [[0.0; 4]; 4],
        };
        let conn2 = sample_conn(3);
        assert!(compose_connection_a(&identity, &conn2).unwrap().conn.distance(&conn2) < 1e-15);

        let identity_b = TypeBPointData {
            tangent_index: 1,
            f: 1.0,
            c: [0.0; 6],
            grad_f: [0.0; 4],
            grad_c: [[0.0; 4]; 6],
        };
        assert!(compose_connection_b(&identity_b, &conn2).unwrap().conn.distance(&conn2) < 1e-15);
        let p = type_b_point(2);
        let composed = compose_connection_b(&p, &ConnectionAtPoint::zero()).unwrap();
        assert_eq!(composed.conn.max_abs_block(Block::Omega), 0.0);
        assert_eq!(composed.conn, type_b_closed_connection(&p).unwrap());
    }

    #[test]
    fn block_formulas_match_conjugation() {
        let p = type_a_point();
        for seed in 0..5 {
            let conn2 = sample_conn(seed);
            let checked = compose_a_checked(&p, &conn2).unwrap();
            assert!(checked.oracle_discrepancy < 1e-13, "{}", checked.oracle_discrepancy);
            assert!(!checked.used_oracle);
        }
        for t in 0..4 {
            let p = type_b_point(t);
            let checked = compose_b_checked(&p, &sample_conn(10 + t as u64)).unwrap();
            assert!(checked.oracle_discrepancy < 1e-13, "t = {t}: {}", checked.oracle_discrepancy);
        }
    }

    #[test]
    fn alternative_expansion_is_measurably_off() {
        // One coefficient pair and a single tangent connection entry already disagree.
        let p = TypeAPointData {
            normal_index: 5,
            f: 0.8,
            c: [0.0, 0.6, 0.0, 0.0],
            grad_f: [0.0; 4],
            grad_c: [[0.0; 4]; 4],
        };
        let mut conn2 = ConnectionAtPoint::zero();
        conn2.set(0, 1, 2, 1.0);
        let audit = printed::audit_a(&p, &conn2).unwrap();
        assert!(audit.omega > 0.3, "{audit:?}");
        // With psi1 = 1 the two agree.
        let identity = TypeAPointData { f: 1.0, c: [0.0; 4], ..p };
        assert!(printed::audit_a(&identity, &sample_conn(1)).unwrap().max() < 1e-15);
    }

    #[test]
    fn omega_prime_is_affine_in_conn2() {
        let p = type_a_point();
        let (ca, cb) = (sample_conn(21), sample_conn(22));
        let w = |c: &ConnectionAtPoint| compose_connection_a(&p, c).unwrap().conn.only_block(Block::Omega);
        let sum = ca.zip(&cb, |x, y| x + y);
        let zero = ConnectionAtPoint::zero();
        let defect = w(&sum)
            .zip(&w(&ca), |x, y| x - y)
            .zip(&w(&cb), |x, y| x - y)
            .zip(&w(&zero), |x, y| x + y);
        assert!(defect.max_abs() < 1e-12);
    }

    #[test]
    fn composed_connection_serializes_inputs() {
        let composed = compose_connection_a(&type_a_point(), &sample_conn(4)).unwrap();
        let v = serde_json::to_value(&composed).unwrap();
        assert!(v["connection"]["omega"].is_array());
        assert_eq!(v["inputs"]["psi1"]["normal_index"], 6);
        assert!(v["inputs"]["conn2"]["A"].is_array());
    }
}
