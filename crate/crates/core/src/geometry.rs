//! Connection data, moving frames, curvature 2-forms and the Gauss, Codazzi
//! and Ricci residuals.
//!
//! The full ambient connection is kept as one antisymmetric 10x10 matrix of
//! upper-index coefficients `W_a^{IJ}` per coordinate direction. Its blocks are
//! the tangent connection `omega^{mu nu}` (both indices < 4), the extrinsic
//! curvature `H^{mu i}` (mixed) and the normal connection `A^{ij}` (both >= 4).
//! With this convention `d e_I = eta_I W^{IJ} e_J dx`.
//!
//! Curvature components use `(dW)_{ab} = d_a W_b - d_b W_a` and
//! `(W ^ W)_{ab} = W_a W_b - W_b W_a` with the contracted index lowered by
//! `eta`:
//!
//! ```text
//! Omega_{ab}^{IK} = d_a W_b^{IK} - d_b W_a^{IK}
//!                 - sum_J eta_J (W_a^{IJ} W_b^{JK} - W_b^{IJ} W_a^{JK})
//! ```
//!
//! The Gauss, Codazzi and Ricci residuals are the tangent, mixed and normal
//! blocks of `Omega`. Written out, the Ricci block is
//! `F^{ij} + sum_mu eta_mu (H_a^{mu i} H_b^{mu j} - H_b^{mu i} H_a^{mu j})`, so the
//! timelike tangent direction enters with a minus sign.

use serde::ser::{SerializeStruct, Serializer};
use serde::Serialize;
use thiserror::Error;

use crate::clifford::{sandwich, Multivector, Signature};
use crate::expr::NVARS;
use crate::solutions::{self, SolutionError};
use crate::spin_field::{
    killing_extract, killing_jet, shifted, Differentiation, FdConfig, KillingData, Point,
    SpinFieldError, SpinFieldSpec, AMBIENT_DIM, TANGENT_DIM,
};

/// Largest non-vector part tolerated in a frame vector.
pub const FRAME_TOL: f64 = 1e-10;

const NORMAL_DIM: usize = AMBIENT_DIM - TANGENT_DIM;

#[derive(Debug, Error)]
pub enum GeometryError {
    #[error(transparent)]
    SpinField(#[from] SpinFieldError),
    #[error(transparent)]
    Solution(#[from] SolutionError),
    #[error("frame vector e{index} is not a vector (non-grade-1 part {residual:e})")]
    FrameNotVector { index: usize, residual: f64 },
}

/// `eta_II` of the ambient space.
pub fn eta(i: usize) -> f64 {
    Signature::spacetime().metric(i)
}

/// Which block of the connection an upper index pair belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
pub enum Block {
    Omega,
    H,
    A,
}

pub fn block_of(i: usize, j: usize) -> Block {
    match (i < TANGENT_DIM, j < TANGENT_DIM) {
        (true, true) => Block::Omega,
        (false, false) => Block::A,
        _ => Block::H,
    }
}

/// Connection coefficients `W_a^{IJ}` at one point.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ConnectionAtPoint {
    w: [[[f64; AMBIENT_DIM]; AMBIENT_DIM]; NVARS],
}

impl Default for ConnectionAtPoint {
    fn default() -> Self {
        Self::zero()
    }
}

impl ConnectionAtPoint {
    pub fn zero() -> Self {
        ConnectionAtPoint {
            w: [[[0.0; AMBIENT_DIM]; AMBIENT_DIM]; NVARS],
        }
    }

    /// `W_alpha^{IJ}`; antisymmetric in `(I, J)`.
    pub fn get(&self, alpha: usize, i: usize, j: usize) -> f64 {
        self.w[alpha][i][j]
    }

    /// Sets `W_alpha^{IJ} = value` and `W_alpha^{JI} = -value`.
    pub fn set(&mut self, alpha: usize, i: usize, j: usize, value: f64) {
        assert!(i != j, "diagonal connection entries are zero");
        self.w[alpha][i][j] = value;
        self.w[alpha][j][i] = -value;
    }

    pub fn matrix(&self, alpha: usize) -> &[[f64; AMBIENT_DIM]; AMBIENT_DIM] {
        &self.w[alpha]
    }

    /// `omega_alpha^{mu nu}` for tangent `mu, nu`.
    pub fn omega(&self, alpha: usize, mu: usize, nu: usize) -> f64 {
        debug_assert!(mu < TANGENT_DIM && nu < TANGENT_DIM);
        self.w[alpha][mu][nu]
    }

    /// `H_alpha^{mu i}` for tangent `mu` and normal `i` (4..=9).
    pub fn h(&self, alpha: usize, mu: usize, i: usize) -> f64 {
        debug_assert!(mu < TANGENT_DIM && i >= TANGENT_DIM);
        self.w[alpha][mu][i]
    }

    /// `A_alpha^{ij}` for normal `i, j` (4..=9).
    pub fn a(&self, alpha: usize, i: usize, j: usize) -> f64 {
        debug_assert!(i >= TANGENT_DIM && j >= TANGENT_DIM);
        self.w[alpha][i][j]
    }

    pub fn map(&self, mut f: impl FnMut(usize, usize, usize, f64) -> f64) -> Self {
        let mut out = *self;
        for a in 0..NVARS {
            for i in 0..AMBIENT_DIM {
                for j in 0..AMBIENT_DIM {
                    out.w[a][i][j] = f(a, i, j, self.w[a][i][j]);
                }
            }
        }
        out
    }

    pub fn zip(&self, other: &Self, f: impl Fn(f64, f64) -> f64) -> Self {
        self.map(|a, i, j, v| f(v, other.w[a][i][j]))
    }

    pub fn scale(&self, k: f64) -> Self {
        self.map(|_, _, _, v| k * v)
    }

    /// Multiplies one block by `k`, leaving the others alone.
    pub fn scale_block(&self, block: Block, k: f64) -> Self {
        self.map(|_, i, j, v| if block_of(i, j) == block { k * v } else { v })
    }

    /// Copy with every block except `block` zeroed.
    pub fn only_block(&self, block: Block) -> Self {
        self.map(|_, i, j, v| if block_of(i, j) == block { v } else { 0.0 })
    }

    pub fn max_abs(&self) -> f64 {
        self.w.iter().flatten().flatten().fold(0.0, |m, v| m.max(v.abs()))
    }

    pub fn max_abs_block(&self, block: Block) -> f64 {
        self.only_block(block).max_abs()
    }

    /// Infinity-norm distance.
    pub fn distance(&self, other: &Self) -> f64 {
        self.zip(other, |a, b| a - b).max_abs()
    }

    /// Largest `|W^{IJ} + W^{JI}|`; zero for anything built through [`set`](Self::set).
    pub fn antisymmetry_defect(&self) -> f64 {
        let mut worst: f64 = 0.0;
        for a in 0..NVARS {
            for i in 0..AMBIENT_DIM {
                for j in 0..AMBIENT_DIM {
                    worst = worst.max((self.w[a][i][j] + self.w[a][j][i]).abs());
                }
            }
        }
        worst
    }

    /// The Killing bivectors `K_a = sum_{I<J} (W_a^{IJ} / 2) e_I e_J`.
    pub fn killing_bivectors(&self) -> [Multivector; NVARS] {
        let sig = Signature::spacetime();
        std::array::from_fn(|a| {
            let mut terms = Vec::new();
            for i in 0..AMBIENT_DIM {
                for j in i + 1..AMBIENT_DIM {
                    terms.push(((1u32 << i) | (1 << j), 0.5 * self.w[a][i][j]));
                }
            }
            Multivector::from_terms(sig, terms).expect("masks are in range")
        })
    }

    /// The full `d e_I = omega_I^J e_J` matrix in direction `alpha`,
    /// `m[I][J] = eta_I W_alpha^{IJ}`.
    pub fn frame_generator(&self, alpha: usize) -> [[f64; AMBIENT_DIM]; AMBIENT_DIM] {
        std::array::from_fn(|i| std::array::from_fn(|j| eta(i) * self.w[alpha][i][j]))
    }
}

impl Serialize for ConnectionAtPoint {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        let mut omega = Vec::new();
        let mut h = Vec::new();
        let mut a = Vec::new();
        for alpha in 0..NVARS {
            for i in 0..AMBIENT_DIM {
                for j in i + 1..AMBIENT_DIM {
                    let entry = (alpha, i, j, self.w[alpha][i][j]);
                    match block_of(i, j) {
                        Block::Omega => omega.push(entry),
                        Block::H => h.push(entry),
                        Block::A => a.push(entry),
                    }
                }
            }
        }
        let mut s = serializer.serialize_struct("ConnectionAtPoint", 3)?;
        s.serialize_field("omega", &omega)?;
        s.serialize_field("H", &h)?;
        s.serialize_field("A", &a)?;
        s.end()
    }
}

/// Reads `W_a^{IJ} = 2 * coeff(e_I e_J)` off the Killing bivectors. Non-bivector
/// parts are ignored.
pub fn split_connection(k: &[Multivector; NVARS]) -> ConnectionAtPoint {
    let mut conn = ConnectionAtPoint::zero();
    for (alpha, ka) in k.iter().enumerate() {
        for (mask, coeff) in ka.terms() {
            if mask.count_ones() != 2 {
                continue;
            }
            let i = mask.trailing_zeros() as usize;
            let j = (31 - mask.leading_zeros()) as usize;
            conn.set(alpha, i, j, 2.0 * coeff);
        }
    }
    conn
}

/// The moving frame `e_I = reverse(psi) e_I psi`, as components in the fixed basis.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct FrameAtPoint {
    /// `e[I][J]` is the `e_J` component of frame vector `I`.
    pub e: [[f64; AMBIENT_DIM]; AMBIENT_DIM],
}

impl FrameAtPoint {
    pub fn identity() -> Self {
        FrameAtPoint {
            e: std::array::from_fn(|i| std::array::from_fn(|j| if i == j { 1.0 } else { 0.0 })),
        }
    }

    pub fn vector(&self, i: usize) -> Multivector {
        Multivector::vector(Signature::spacetime(), &self.e[i])
    }

    /// `max_{I,J} |e_I . e_J - eta_IJ|`.
    pub fn orthonormality_residual(&self) -> f64 {
        orthonormality_residual(&self.e)
    }
}

pub fn dot(a: &[f64; AMBIENT_DIM], b: &[f64; AMBIENT_DIM]) -> f64 {
    (0..AMBIENT_DIM).map(|k| eta(k) * a[k] * b[k]).sum()
}

pub fn orthonormality_residual(e: &[[f64; AMBIENT_DIM]; AMBIENT_DIM]) -> f64 {
    let mut worst: f64 = 0.0;
    for i in 0..AMBIENT_DIM {
        for j in 0..AMBIENT_DIM {
            let target = if i == j { eta(i) } else { 0.0 };
            worst = worst.max((dot(&e[i], &e[j]) - target).abs());
        }
    }
    worst
}

pub fn frame_of(psi: &Multivector) -> Result<FrameAtPoint, GeometryError> {
    let sig = psi.signature();
    let mut e = [[0.0; AMBIENT_DIM]; AMBIENT_DIM];
    for (index, row) in e.iter_mut().enumerate() {
        let v = sandwich(psi, &Multivector::basis_vector(sig, index));
        let residual = v.off_grade_norm(1);
        if residual > FRAME_TOL {
            return Err(GeometryError::FrameNotVector { index, residual });
        }
        for (j, slot) in row.iter_mut().enumerate() {
            *slot = v.coefficient(1 << j);
        }
    }
    Ok(FrameAtPoint { e })
}

pub fn frame(spec: &SpinFieldSpec, x: Point) -> Result<FrameAtPoint, GeometryError> {
    frame_of(&spec.evaluate(x)?)
}

/// Connection of a field at `x`, by Killing extraction.
pub fn connection_field(
    spec: &SpinFieldSpec,
    x: Point,
    diff: Differentiation,
) -> Result<ConnectionAtPoint, GeometryError> {
    Ok(split_connection(&killing_extract(spec, x, diff)?.k))
}

/// Connection with its Killing extraction diagnostics.
pub fn connection_with_diagnostics(
    spec: &SpinFieldSpec,
    x: Point,
    diff: Differentiation,
) -> Result<(ConnectionAtPoint, KillingData), GeometryError> {
    let data = killing_extract(spec, x, diff)?;
    Ok((split_connection(&data.k), data))
}

/// A connection and its first derivatives at one point; `d[b]` is `d_b W`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ConnectionJet {
    pub value: ConnectionAtPoint,
    pub d: [ConnectionAtPoint; NVARS],
}

impl ConnectionJet {
    pub fn map_blocks(&self, f: impl Fn(&ConnectionAtPoint) -> ConnectionAtPoint) -> Self {
        ConnectionJet {
            value: f(&self.value),
            d: self.d.map(|d| f(&d)),
        }
    }
}

/// How connection derivatives are obtained for curvature.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub enum CurvatureMethod {
    /// Central differences of the exactly extracted connection.
    FiniteDifference(FdConfig),
    /// Exact second-order jet of `psi`: `d_b K_a = (d_b d_a psi) rev(psi) + d_a psi d_b rev(psi)`.
    #[default]
    Exact,
    /// Closed-form type-A/type-B connections differentiated exactly.
    ClosedForm,
}

pub fn connection_jet(
    spec: &SpinFieldSpec,
    x: Point,
    method: CurvatureMethod,
) -> Result<ConnectionJet, GeometryError> {
    match method {
        CurvatureMethod::FiniteDifference(fd) => {
            let value = connection_field(spec, x, Differentiation::Automatic)?;
            let mut d = [ConnectionAtPoint::zero(); NVARS];
            for (beta, slot) in d.iter_mut().enumerate() {
                let (plus, minus) = shifted(x, beta, fd.step);
                let cp = connection_field(spec, plus, Differentiation::Automatic)?;
                let cm = connection_field(spec, minus, Differentiation::Automatic)?;
                *slot = cp.zip(&cm, |p, m| (p - m) / (2.0 * fd.step));
            }
            Ok(ConnectionJet { value, d })
        }
        CurvatureMethod::Exact => {
            let jet = killing_jet(spec, x)?;
            Ok(ConnectionJet {
                value: split_connection(&jet.k),
                d: std::array::from_fn(|b| split_connection(&jet.dk[b])),
            })
        }
        CurvatureMethod::ClosedForm => Ok(solutions::closed_connection_jet(spec, x)?),
    }
}

/// Curvature 2-forms and integrability residuals at one point.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CurvatureAtPoint {
    /// `r[a][b][mu][nu] = R_{ab}^{mu nu}`.
    pub r: [[[[f64; TANGENT_DIM]; TANGENT_DIM]; NVARS]; NVARS],
    /// `f[a][b][i-4][j-4] = F_{ab}^{ij}`.
    pub f: [[[[f64; NORMAL_DIM]; NORMAL_DIM]; NVARS]; NVARS],
    pub gauss_residual: f64,
    pub codazzi_residual: f64,
    pub ricci_residual: f64,
    /// Infinity norm of the whole ambient curvature `Omega`.
    pub ambient_residual: f64,
}

impl CurvatureAtPoint {
    /// `R_{ab}^{mu nu}`.
    pub fn r(&self, a: usize, b: usize, mu: usize, nu: usize) -> f64 {
        self.r[a][b][mu][nu]
    }

    /// `F_{ab}^{ij}` for normal `i, j` in 4..=9.
    pub fn f(&self, a: usize, b: usize, i: usize, j: usize) -> f64 {
        self.f[a][b][i - TANGENT_DIM][j - TANGENT_DIM]
    }

    pub fn gcr(&self) -> GcrResiduals {
        GcrResiduals {
            gauss: self.gauss_residual,
            codazzi: self.codazzi_residual,
            ricci: self.ricci_residual,
        }
    }

    /// `(alpha, beta, upper1, upper2, value)` rows for the independent
    /// components (`alpha < beta`, `upper1 < upper2`) of `R` and `F`.
    pub fn rows(&self) -> Vec<(&'static str, [usize; 4], f64)> {
        let mut rows = Vec::new();
        for a in 0..NVARS {
            for b in a + 1..NVARS {
                for mu in 0..TANGENT_DIM {
                    for nu in mu + 1..TANGENT_DIM {
                        rows.push(("R", [a, b, mu, nu], self.r[a][b][mu][nu]));
                    }
                }
            }
        }
        for a in 0..NVARS {
            for b in a + 1..NVARS {
                for i in 0..NORMAL_DIM {
                    for j in i + 1..NORMAL_DIM {
                        rows.push((
                            "F",
                            [a, b, i + TANGENT_DIM, j + TANGENT_DIM],
                            self.f[a][b][i][j],
                        ));
                    }
                }
            }
        }
        rows
    }
}

impl Serialize for CurvatureAtPoint {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        let rows = self.rows();
        let pick = |name: &str| -> Vec<(usize, usize, usize, usize, f64)> {
            rows.iter()
                .filter(|(n, _, _)| *n == name)
                .map(|(_, [a, b, i, j], v)| (*a, *b, *i, *j, *v))
                .collect()
        };
        let mut s = serializer.serialize_struct("CurvatureAtPoint", 6)?;
        s.serialize_field("R", &pick("R"))?;
        s.serialize_field("F", &pick("F"))?;
        s.serialize_field("gauss_residual", &self.gauss_residual)?;
        s.serialize_field("codazzi_residual", &self.codazzi_residual)?;
        s.serialize_field("ricci_residual", &self.ricci_residual)?;
        s.serialize_field("ambient_residual", &self.ambient_residual)?;
        s.end()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct GcrResiduals {
    pub gauss: f64,
    pub codazzi: f64,
    pub ricci: f64,
}

impl GcrResiduals {
    pub fn max(&self) -> f64 {
        self.gauss.max(self.codazzi).max(self.ricci)
    }
}

/// `d_a W_b^{IK} - d_b W_a^{IK}`.
fn exterior(jet: &ConnectionJet, a: usize, b: usize, i: usize, k: usize) -> f64 {
    jet.d[a].get(b, i, k) - jet.d[b].get(a, i, k)
}

/// `sum_{J in range} eta_J (W_a^{IJ} W_b^{JK} - W_b^{IJ} W_a^{JK})`.
fn wedge(
    w: &ConnectionAtPoint,
    a: usize,
    b: usize,
    i: usize,
    k: usize,
    range: std::ops::Range<usize>,
) -> f64 {
    range
        .map(|j| eta(j) * (w.get(a, i, j) * w.get(b, j, k) - w.get(b, i, j) * w.get(a, j, k)))
        .sum()
}

/// The full ambient curvature `Omega_{ab}^{IK}`.
pub fn ambient_curvature(jet: &ConnectionJet, a: usize, b: usize, i: usize, k: usize) -> f64 {
    exterior(jet, a, b, i, k) - wedge(&jet.value, a, b, i, k, 0..AMBIENT_DIM)
}

pub fn curvature_from_jet(jet: &ConnectionJet) -> CurvatureAtPoint {
    let w = &jet.value;
    let tangent = 0..TANGENT_DIM;
    let normal = TANGENT_DIM..AMBIENT_DIM;
    let mut out = CurvatureAtPoint {
        r: [[[[0.0; TANGENT_DIM]; TANGENT_DIM]; NVARS]; NVARS],
        f: [[[[0.0; NORMAL_DIM]; NORMAL_DIM]; NVARS]; NVARS],
        gauss_residual: 0.0,
        codazzi_residual: 0.0,
        ricci_residual: 0.0,
        ambient_residual: 0.0,
    };
    for a in 0..NVARS {
        for b in 0..NVARS {
            for mu in tangent.clone() {
                for nu in tangent.clone() {
                    let r = exterior(jet, a, b, mu, nu) - wedge(w, a, b, mu, nu, tangent.clone());
                    out.r[a][b][mu][nu] = r;
                    // R - H ^ H, with H^{nu i} lowered through W^{i nu} = -H^{nu i}.
                    let hh: f64 = normal
                        .clone()
                        .map(|i| w.h(a, mu, i) * w.h(b, nu, i) - w.h(b, mu, i) * w.h(a, nu, i))
                        .sum();
                    out.gauss_residual = out.gauss_residual.max((r + hh).abs());
                }
                for i in normal.clone() {
                    let mut c = exterior(jet, a, b, mu, i);
                    for s in tangent.clone() {
                        c -= eta(s) * (w.omega(a, mu, s) * w.h(b, s, i) - w.omega(b, mu, s) * w.h(a, s, i));
                    }
                    for k in normal.clone() {
                        c -= w.h(a, mu, k) * w.a(b, k, i) - w.h(b, mu, k) * w.a(a, k, i);
                    }
                    out.codazzi_residual = out.codazzi_residual.max(c.abs());
                }
            }
            for i in normal.clone() {
                for j in normal.clone() {
                    let f = exterior(jet, a, b, i, j) - wedge(w, a, b, i, j, normal.clone());
                    out.f[a][b][i - TANGENT_DIM][j - TANGENT_DIM] = f;
                    let hh: f64 = tangent
                        .clone()
                        .map(|mu| eta(mu) * (w.h(a, mu, i) * w.h(b, mu, j) - w.h(b, mu, i) * w.h(a, mu, j)))
                        .sum();
                    out.ricci_residual = out.ricci_residual.max((f + hh).abs());
                }
            }
            for i in 0..AMBIENT_DIM {
                for k in 0..AMBIENT_DIM {
                    out.ambient_residual = out
                        .ambient_residual
                        .max(ambient_curvature(jet, a, b, i, k).abs());
                }
            }
        }
    }
    out
}

pub fn curvature(
    spec: &SpinFieldSpec,
    x: Point,
    method: CurvatureMethod,
) -> Result<CurvatureAtPoint, GeometryError> {
    Ok(curvature_from_jet(&connection_jet(spec, x, method)?))
}

pub fn gcr_residuals(
    spec: &SpinFieldSpec,
    x: Point,
    method: CurvatureMethod,
) -> Result<GcrResiduals, GeometryError> {
    Ok(curvature(spec, x, method)?.gcr())
}
