//! Real Clifford algebras `Cl(p,q)` of dimension up to 16 over a bitmask blade basis.
//!
//! Generator `i` corresponds to bit `i` of a [`BladeMask`]; a blade is stored in
//! canonical (ascending) order, so `0b101` is `e0 e2` and `0` is the scalar.
//! Arithmetic is exact in the sense that nothing is pruned except coefficients
//! that are exactly zero; use [`Multivector::cleaned`] for display.

use std::collections::BTreeMap;
use std::fmt;
use std::ops::{Add, Mul, Neg, Sub};

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub type BladeMask = u32;

pub const MAX_DIM: usize = 16;

/// Maximum number of series terms [`exp_even`] will sum.
pub const MAX_EXP_TERMS: usize = 200;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum CliffordError {
    #[error("signature must have between 1 and {MAX_DIM} generators, got {0}")]
    BadDimension(usize),
    #[error("metric entry {index} is {value}; only +1 and -1 are allowed")]
    BadMetricEntry { index: usize, value: i8 },
    #[error("multivectors belong to different algebras ({left} vs {right})")]
    SignatureMismatch { left: Signature, right: Signature },
    #[error("blade mask {mask:#b} is out of range for a {dim}-dimensional algebra")]
    MaskOutOfRange { mask: BladeMask, dim: usize },
    #[error("blade index list {0:?} is not strictly ascending")]
    UnorderedBlade(Vec<usize>),
    #[error("expected an even-grade multivector")]
    NotEven,
    #[error("exponential series did not converge in {terms} terms (last term norm {last_term_norm:e})")]
    ExpDidNotConverge { terms: usize, last_term_norm: f64 },
}

/// Diagonal metric of the generating vector space.
///
/// Stored as a dimension plus a bitmask of the generators that square to -1,
/// which keeps the type `Copy` and makes the metric sign of a blade product a
/// single popcount.
#[derive(Clone, Copy, PartialEq, Eq, Hash)]
pub struct Signature {
    dim: u8,
    negative: u32,
}

impl Signature {
    pub fn new(metric_diag: &[i8]) -> Result<Self, CliffordError> {
        let dim = metric_diag.len();
        if dim == 0 || dim > MAX_DIM {
            return Err(CliffordError::BadDimension(dim));
        }
        let mut negative = 0u32;
        for (index, &value) in metric_diag.iter().enumerate() {
            match value {
                1 => {}
                -1 => negative |= 1 << index,
                _ => return Err(CliffordError::BadMetricEntry { index, value }),
            }
        }
        Ok(Signature {
            dim: dim as u8,
            negative,
        })
    }

    /// `dim` generators all squaring to +1.
    pub fn euclidean(dim: usize) -> Result<Self, CliffordError> {
        Self::new(&vec![1; dim])
    }

    /// One timelike generator at index 0 followed by `dim - 1` spacelike ones.
    pub fn lorentzian(dim: usize) -> Result<Self, CliffordError> {
        let mut diag = vec![1; dim];
        if let Some(first) = diag.first_mut() {
            *first = -1;
        }
        Self::new(&diag)
    }

    /// The ambient space R^{1,9}: generator 0 squares to -1, generators 1..=9 to +1.
    pub const fn spacetime() -> Self {
        Signature {
            dim: 10,
            negative: 1,
        }
    }

    pub fn dim(&self) -> usize {
        self.dim as usize
    }

    /// Number of basis blades, `2^dim`.
    pub fn blade_count(&self) -> usize {
        1usize << self.dim
    }

    /// `eta_ii` as a float.
    pub fn metric(&self, i: usize) -> f64 {
        if self.negative & (1 << i) != 0 {
            -1.0
        } else {
            1.0
        }
    }

    pub fn metric_diag(&self) -> Vec<i8> {
        (0..self.dim())
            .map(|i| if self.negative & (1 << i) != 0 { -1 } else { 1 })
            .collect()
    }

    fn check_mask(&self, mask: BladeMask) -> Result<(), CliffordError> {
        if (mask as u64) >> self.dim != 0 {
            return Err(CliffordError::MaskOutOfRange {
                mask,
                dim: self.dim(),
            });
        }
        Ok(())
    }
}

impl fmt::Debug for Signature {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Signature({self})")
    }
}

impl fmt::Display for Signature {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let neg = self.negative.count_ones() as usize;
        write!(f, "Cl({},{})", self.dim() - neg, neg)
    }
}

/// Product of two basis blades: `e_a e_b = sign * e_{a xor b}`.
///
/// The sign collects one factor of -1 per transposition needed to bring the
/// concatenated generator list into ascending order, and one metric factor per
/// generator shared by both blades.
pub fn blade_product(a: BladeMask, b: BladeMask, sig: Signature) -> (f64, BladeMask) {
    let mut swaps = 0u32;
    let mut t = a >> 1;
    while t != 0 {
        swaps += (t & b).count_ones();
        t >>= 1;
    }
    let metric_flips = (a & b & sig.negative).count_ones();
    let sign = if (swaps + metric_flips).is_multiple_of(2) {
        1.0
    } else {
        -1.0
    };
    (sign, a ^ b)
}

pub fn grade_of(mask: BladeMask) -> usize {
    mask.count_ones() as usize
}

/// Sign picked up by a grade-`k` blade under reversion, `(-1)^{k(k-1)/2}`.
pub fn reverse_sign(grade: usize) -> f64 {
    if (grade * grade.saturating_sub(1) / 2).is_multiple_of(2) {
        1.0
    } else {
        -1.0
    }
}

/// One term of the text/JSON form of a multivector.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Term {
    pub blade: Vec<usize>,
    pub coeff: f64,
}

/// Sparse element of a real Clifford algebra.
#[derive(Clone, PartialEq)]
pub struct Multivector {
    sig: Signature,
    terms: BTreeMap<BladeMask, f64>,
}

impl Multivector {
    pub fn zero(sig: Signature) -> Self {
        Multivector {
            sig,
            terms: BTreeMap::new(),
        }
    }

    pub fn scalar(sig: Signature, value: f64) -> Self {
        Self::zero(sig).with_term(0, value)
    }

    /// The generator `e_i`.
    pub fn basis_vector(sig: Signature, i: usize) -> Self {
        assert!(i < sig.dim(), "generator {i} out of range for {sig}");
        Self::zero(sig).with_term(1 << i, 1.0)
    }

    /// Product `e_{i0} e_{i1} ...` of generators in the given order.
    pub fn blade(sig: Signature, indices: &[usize]) -> Self {
        indices.iter().fold(Self::scalar(sig, 1.0), |acc, &i| {
            &acc * &Self::basis_vector(sig, i)
        })
    }

    /// Grade-1 element with the given components.
    pub fn vector(sig: Signature, components: &[f64]) -> Self {
        assert!(components.len() <= sig.dim());
        let mut mv = Self::zero(sig);
        for (i, &c) in components.iter().enumerate() {
            mv.add_term(1 << i, c);
        }
        mv
    }

    pub fn from_terms<I>(sig: Signature, terms: I) -> Result<Self, CliffordError>
    where
        I: IntoIterator<Item = (BladeMask, f64)>,
    {
        let mut mv = Self::zero(sig);
        for (mask, coeff) in terms {
            sig.check_mask(mask)?;
            mv.add_term(mask, coeff);
        }
        Ok(mv)
    }

    /// Builds a multivector from its text form. Index lists must be strictly ascending.
    pub fn from_term_list(sig: Signature, terms: &[Term]) -> Result<Self, CliffordError> {
        let mut mv = Self::zero(sig);
        for term in terms {
            if term.blade.windows(2).any(|w| w[0] >= w[1]) {
                return Err(CliffordError::UnorderedBlade(term.blade.clone()));
            }
            let mut mask: BladeMask = 0;
            for &i in &term.blade {
                if i >= sig.dim() {
                    return Err(CliffordError::MaskOutOfRange {
                        mask: 1u32.checked_shl(i as u32).unwrap_or(u32::MAX),
                        dim: sig.dim(),
                    });
                }
                mask |= 1 << i;
            }
            mv.add_term(mask, term.coeff);
        }
        Ok(mv)
    }

    pub fn to_term_list(&self) -> Vec<Term> {
        self.terms
            .iter()
            .map(|(&mask, &coeff)| Term {
                blade: (0..self.sig.dim()).filter(|i| mask & (1 << i) != 0).collect(),
                coeff,
            })
            .collect()
    }

    fn with_term(mut self, mask: BladeMask, coeff: f64) -> Self {
        self.add_term(mask, coeff);
        self
    }

    /// Accumulates `coeff` onto blade `mask`, dropping the entry if it becomes exactly zero.
    pub fn add_term(&mut self, mask: BladeMask, coeff: f64) {
        debug_assert!((mask as u64) >> self.sig.dim == 0);
        if coeff == 0.0 {
            return;
        }
        let entry = self.terms.entry(mask).or_insert(0.0);
        *entry += coeff;
        if *entry == 0.0 {
            self.terms.remove(&mask);
        }
    }

    pub fn signature(&self) -> Signature {
        self.sig
    }

    pub fn terms(&self) -> impl Iterator<Item = (BladeMask, f64)> + '_ {
        self.terms.iter().map(|(&m, &c)| (m, c))
    }

    pub fn len(&self) -> usize {
        self.terms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn coefficient(&self, mask: BladeMask) -> f64 {
        self.terms.get(&mask).copied().unwrap_or(0.0)
    }

    pub fn scalar_part(&self) -> f64 {
        self.coefficient(0)
    }

    /// Largest absolute coefficient (0 for the zero multivector).
    pub fn max_abs(&self) -> f64 {
        self.terms.values().fold(0.0, |m, c| m.max(c.abs()))
    }

    /// Infinity-norm distance between two multivectors of the same algebra.
    pub fn distance(&self, other: &Multivector) -> f64 {
        (self - other).max_abs()
    }

    pub fn grade_project(&self, k: usize) -> Multivector {
        Multivector {
            sig: self.sig,
            terms: self
                .terms
                .iter()
                .filter(|(&m, _)| grade_of(m) == k)
                .map(|(&m, &c)| (m, c))
                .collect(),
        }
    }

    /// Sorted list of grades with at least one stored term.
    pub fn grades(&self) -> Vec<usize> {
        let mut grades: Vec<usize> = self.terms.keys().map(|&m| grade_of(m)).collect();
        grades.sort_unstable();
        grades.dedup();
        grades
    }

    pub fn is_even(&self) -> bool {
        self.terms.keys().all(|&m| grade_of(m).is_multiple_of(2))
    }

    pub fn reverse(&self) -> Multivector {
        Multivector {
            sig: self.sig,
            terms: self
                .terms
                .iter()
                .map(|(&m, &c)| (m, c * reverse_sign(grade_of(m))))
                .collect(),
        }
    }

    pub fn scale(&self, factor: f64) -> Multivector {
        let mut out = Multivector::zero(self.sig);
        for (&m, &c) in &self.terms {
            out.add_term(m, c * factor);
        }
        out
    }

    pub fn geometric_product(&self, other: &Multivector) -> Result<Multivector, CliffordError> {
        if self.sig != other.sig {
            return Err(CliffordError::SignatureMismatch {
                left: self.sig,
                right: other.sig,
            });
        }
        let mut acc: BTreeMap<BladeMask, f64> = BTreeMap::new();
        for (&a, &x) in &self.terms {
            for (&b, &y) in &other.terms {
                let (sign, mask) = blade_product(a, b, self.sig);
                *acc.entry(mask).or_insert(0.0) += sign * x * y;
            }
        }
        acc.retain(|_, c| *c != 0.0);
        Ok(Multivector {
            sig: self.sig,
            terms: acc,
        })
    }

    /// Copy with every coefficient below `eps` in magnitude removed. Display only.
    pub fn cleaned(&self, eps: f64) -> Multivector {
        Multivector {
            sig: self.sig,
            terms: self
                .terms
                .iter()
                .filter(|(_, c)| c.abs() >= eps)
                .map(|(&m, &c)| (m, c))
                .collect(),
        }
    }

    /// Largest coefficient outside grade `k`.
    pub fn off_grade_norm(&self, k: usize) -> f64 {
        self.terms
            .iter()
            .filter(|(&m, _)| grade_of(m) != k)
            .fold(0.0, |acc, (_, c)| acc.max(c.abs()))
    }

    /// Components of the grade-1 part, indexed by generator.
    pub fn vector_components(&self) -> Vec<f64> {
        (0..self.sig.dim())
            .map(|i| self.coefficient(1 << i))
            .collect()
    }

    fn assert_same_algebra(&self, other: &Multivector) {
        assert!(
            self.sig == other.sig,
            "multivectors belong to different algebras ({} vs {})",
            self.sig,
            other.sig
        );
    }
}

/// `exp(B)` for an even-grade `B` by power series.
///
/// Terms are summed until the next term's largest coefficient drops below
/// `1e-16 * (1 + max|sum|)`.
pub fn exp_even(b: &Multivector) -> Result<Multivector, CliffordError> {
    if !b.is_even() {
        return Err(CliffordError::NotEven);
    }
    let sig = b.signature();
    let mut sum = Multivector::scalar(sig, 1.0);
    let mut term = Multivector::scalar(sig, 1.0);
    let mut last_term_norm = 1.0;
    for n in 1..=MAX_EXP_TERMS {
        term = (&term * b).scale(1.0 / n as f64);
        last_term_norm = term.max_abs();
        sum = &sum + &term;
        if last_term_norm < 1e-16 * (1.0 + sum.max_abs()) {
            return Ok(sum);
        }
    }
    Err(CliffordError::ExpDidNotConverge {
        terms: MAX_EXP_TERMS,
        last_term_norm,
    })
}

/// `reverse(psi) * v * psi`.
pub fn sandwich(psi: &Multivector, v: &Multivector) -> Multivector {
    &(&psi.reverse() * v) * psi
}

impl<'a> Mul<&'a Multivector> for &'a Multivector {
    type Output = Multivector;

    /// Panics if the operands live in different algebras; use
    /// [`Multivector::geometric_product`] for the checked form.
    fn mul(self, rhs: &'a Multivector) -> Multivector {
        match self.geometric_product(rhs) {
            Ok(product) => product,
            Err(err) => panic!("{err}"),
        }
    }
}

impl Mul<f64> for &Multivector {
    type Output = Multivector;

    fn mul(self, rhs: f64) -> Multivector {
        self.scale(rhs)
    }
}

impl<'a> Add<&'a Multivector> for &'a Multivector {
    type Output = Multivector;

    fn add(self, rhs: &'a Multivector) -> Multivector {
        self.assert_same_algebra(rhs);
        let mut out = self.clone();
        for (&m, &c) in &rhs.terms {
            out.add_term(m, c);
        }
        out
    }
}

impl<'a> Sub<&'a Multivector> for &'a Multivector {
    type Output = Multivector;

    fn sub(self, rhs: &'a Multivector) -> Multivector {
        self.assert_same_algebra(rhs);
        let mut out = self.clone();
        for (&m, &c) in &rhs.terms {
            out.add_term(m, -c);
        }
        out
    }
}

impl Neg for &Multivector {
    type Output = Multivector;

    fn neg(self) -> Multivector {
        self.scale(-1.0)
    }
}

impl fmt::Debug for Multivector {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Multivector[{}]({})", self.sig, self)
    }
}

impl fmt::Display for Multivector {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.terms.is_empty() {
            return write!(f, "0");
        }
        for (n, (&mask, &coeff)) in self.terms.iter().enumerate() {
            let (sign, magnitude) = if coeff < 0.0 { ("-", -coeff) } else { ("+", coeff) };
            match (n, sign) {
                (0, "-") => write!(f, "-")?,
                (0, _) => {}
                _ => write!(f, " {sign} ")?,
            }
            write!(f, "{magnitude}")?;
            for i in 0..self.sig.dim() {
                if mask & (1 << i) != 0 {
                    write!(f, " e{i}")?;
                }
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::{FRAC_1_SQRT_2, FRAC_PI_2};

    fn st() -> Signature {
        Signature::spacetime()
    }

    fn e(indices: &[usize]) -> Multivector {
        Multivector::blade(st(), indices)
    }

    fn mask(indices: &[usize]) -> BladeMask {
        indices.iter().fold(0, |m, &i| m | (1 << i))
    }

    #[test]
    fn signature_validation() {
        assert!(Signature::new(&[]).is_err());
        assert!(Signature::new(&[1; 17]).is_err());
        assert_eq!(
            Signature::new(&[1, 0]),
            Err(CliffordError::BadMetricEntry { index: 1, value: 0 })
        );
        let sig = Signature::spacetime();
        assert_eq!(sig.dim(), 10);
        assert_eq!(sig.metric_diag(), [-1, 1, 1, 1, 1, 1, 1, 1, 1, 1]);
        assert_eq!(Signature::lorentzian(10).unwrap(), sig);
        assert_eq!(sig.to_string(), "Cl(9,1)");
    }

    #[test]
    fn blade_product_examples() {
        assert_eq!(blade_product(mask(&[0]), mask(&[0]), st()), (-1.0, 0));
        let any = Signature::euclidean(4).unwrap();
        assert_eq!(blade_product(mask(&[1]), mask(&[2]), any), (1.0, mask(&[1, 2])));
        assert_eq!(blade_product(mask(&[1, 2]), mask(&[1]), st()), (-1.0, mask(&[2])));
    }

    #[test]
    fn geometric_product_examples() {
        let x = &e(&[1, 3]) + &e(&[0, 2, 7]).scale(2.5);
        assert_eq!(&Multivector::scalar(st(), 1.0) * &x, x);
        assert_eq!(&x * &Multivector::scalar(st(), 1.0), x);
        assert_eq!(&e(&[1, 2]) * &e(&[1, 2]), Multivector::scalar(st(), -1.0));
        assert_eq!(&e(&[0, 1]) * &e(&[0, 1]), Multivector::scalar(st(), 1.0));
    }

    #[test]
    fn mismatched_algebras_are_rejected() {
        let a = Multivector::scalar(st(), 1.0);
        let b = Multivector::scalar(Signature::euclidean(3).unwrap(), 1.0);
        assert!(matches!(
            a.geometric_product(&b),
            Err(CliffordError::SignatureMismatch { .. })
        ));
    }

    #[test]
    fn reverse_examples() {
        assert_eq!(e(&[1, 2]).reverse(), -&e(&[1, 2]));
        assert_eq!(e(&[2, 1]), e(&[1, 2]).reverse());
        let five = Multivector::scalar(st(), 5.0);
        assert_eq!(five.reverse(), five);
        assert_eq!(e(&[1, 2, 3, 4]).reverse(), e(&[1, 2, 3, 4]));
    }

    #[test]
    fn grade_projection() {
        let a = &Multivector::scalar(st(), 3.0) + &e(&[1, 2]);
        assert_eq!(a.grade_project(2), e(&[1, 2]));
        assert_eq!(a.grade_project(0), Multivector::scalar(st(), 3.0));
        assert!(e(&[1, 2, 3]).grade_project(2).is_empty());
        assert_eq!(a.grades(), [0, 2]);
    }

    #[test]
    fn exact_zero_pruning() {
        let a = &e(&[1]) - &e(&[1]);
        assert!(a.is_empty());
        let tiny = e(&[1]).scale(1e-300);
        assert_eq!(tiny.len(), 1);
        assert!(tiny.cleaned(1e-12).is_empty());
    }

    #[test]
    fn exp_of_zero_is_one() {
        let one = exp_even(&Multivector::zero(st())).unwrap();
        assert_eq!(one, Multivector::scalar(st(), 1.0));
    }

    #[test]
    fn exp_of_quarter_turn_bivector() {
        let r = exp_even(&e(&[1, 2]).scale(FRAC_PI_2)).unwrap();
        assert!(r.distance(&e(&[1, 2])) < 1e-12);
    }

    #[test]
    fn exp_hyperbolic_branch() {
        let theta: f64 = 1.3;
        let r = exp_even(&e(&[0, 1]).scale(theta / 2.0)).unwrap();
        let expected = &Multivector::scalar(st(), (theta / 2.0).cosh())
            + &e(&[0, 1]).scale((theta / 2.0).sinh());
        assert!(r.distance(&expected) < 1e-12);
    }

    #[test]
    fn exp_rejects_odd_input() {
        assert_eq!(exp_even(&e(&[3])), Err(CliffordError::NotEven));
    }

    #[test]
    fn exp_reports_non_convergence() {
        let huge = e(&[1, 2]).scale(400.0);
        assert!(matches!(
            exp_even(&huge),
            Err(CliffordError::ExpDidNotConverge { terms: MAX_EXP_TERMS, .. })
        ));
    }

    #[test]
    fn sandwich_examples() {
        let one = Multivector::scalar(st(), 1.0);
        assert_eq!(sandwich(&one, &e(&[3])), e(&[3]));

        let theta: f64 = 0.7;
        let psi = exp_even(&e(&[1, 2]).scale(theta / 2.0)).unwrap();
        let rotated = sandwich(&psi, &e(&[1]));
        let expected = &e(&[1]).scale(theta.cos()) + &e(&[2]).scale(theta.sin());
        assert!(rotated.distance(&expected) < 1e-12);

        let t = (&e(&[1, 2]) + &e(&[3, 4, 5, 6])).scale(FRAC_1_SQRT_2);
        let out = sandwich(&t, &e(&[1])).cleaned(1e-15);
        assert_eq!(out.grades(), [5]);
        assert!(out.distance(&e(&[2, 3, 4, 5, 6])) < 1e-15);
    }

    #[test]
    fn term_list_round_trip() {
        let a = &e(&[0, 5]).scale(-0.1) + &Multivector::scalar(st(), 1.0 / 3.0);
        let json = serde_json::to_string(&a.to_term_list()).unwrap();
        assert_eq!(
            json,
            r#"[{"blade":[],"coeff":0.3333333333333333},{"blade":[0,5],"coeff":-0.1}]"#
        );
        let terms: Vec<Term> = serde_json::from_str(&json).unwrap();
        assert_eq!(Multivector::from_term_list(st(), &terms).unwrap(), a);
    }

    #[test]
    fn term_list_rejects_bad_blades() {
        let bad = [Term {
            blade: vec![2, 1],
            coeff: 1.0,
        }];
        assert!(matches!(
            Multivector::from_term_list(st(), &bad),
            Err(CliffordError::UnorderedBlade(_))
        ));
        let out_of_range = [Term {
            blade: vec![10],
            coeff: 1.0,
        }];
        assert!(Multivector::from_term_list(st(), &out_of_range).is_err());
        assert!(Multivector::from_terms(st(), [(1 << 10, 1.0)]).is_err());
    }

    #[test]
    fn display_is_readable() {
        let a = &Multivector::scalar(st(), 2.0) - &e(&[1, 5]).scale(0.5);
        assert_eq!(a.to_string(), "2 - 0.5 e1 e5");
        assert_eq!(Multivector::zero(st()).to_string(), "0");
    }
}
