//! Scheme sets: masks, subdivision operators and their validation.

use std::collections::BTreeMap;
use std::fmt;

use rustc_hash::FxHashMap;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::lattice::{self, IntMatrix, LatticeSet, Point};
use crate::scalar::Scalar;
use crate::Rational;

/// Finitely supported mask `a: Z^s -> T`. Only nonzero coefficients are
/// stored, so the key set is the support.
#[derive(Clone, PartialEq)]
pub struct Mask<T> {
    dim: usize,
    coeffs: BTreeMap<Point, T>,
}

impl<T: Scalar> Mask<T> {
    /// Repeated points are summed; zero coefficients are dropped.
    pub fn new(dim: usize, entries: impl IntoIterator<Item = (Point, T)>) -> Result<Self> {
        let mut coeffs: BTreeMap<Point, T> = BTreeMap::new();
        for (p, v) in entries {
            if p.dim() != dim {
                return Err(Error::DimensionMismatch {
                    expected: dim,
                    found: p.dim(),
                });
            }
            let slot = coeffs.entry(p).or_insert_with(T::zero);
            *slot = slot.clone() + v;
        }
        coeffs.retain(|_, v| !v.is_zero());
        Ok(Mask { dim, coeffs })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn get(&self, p: &Point) -> Option<&T> {
        self.coeffs.get(p)
    }

    pub fn value(&self, p: &Point) -> T {
        self.coeffs.get(p).cloned().unwrap_or_else(T::zero)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&Point, &T)> {
        self.coeffs.iter()
    }

    pub fn len(&self) -> usize {
        self.coeffs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.coeffs.is_empty()
    }

    pub fn support(&self) -> LatticeSet {
        LatticeSet::new(self.dim, self.coeffs.keys().cloned()).expect("uniform dimension")
    }

    pub fn contains_origin(&self) -> bool {
        self.coeffs.contains_key(&Point::zero(self.dim))
    }

    pub fn is_nonnegative(&self) -> bool {
        self.coeffs.values().all(|v| !v.is_negative())
    }

    /// `b(x) = a(x + t)`.
    pub fn shifted(&self, t: &Point) -> Self {
        Mask {
            dim: self.dim,
            coeffs: self.coeffs.iter().map(|(p, v)| (p - t, v.clone())).collect(),
        }
    }

    pub fn map<U: Scalar>(&self, f: impl Fn(&T) -> U) -> Mask<U> {
        Mask::new(self.dim, self.coeffs.iter().map(|(p, v)| (p.clone(), f(v)))).expect("same dimension")
    }
}

impl<T: fmt::Display> fmt::Debug for Mask<T> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_map()
            .entries(self.coeffs.iter().map(|(p, v)| (p, v.to_string())))
            .finish()
    }
}

/// One subdivision operator `S_j = (a_j, M_j)` with its digit set.
#[derive(Clone, PartialEq)]
pub struct SubdivisionOp<T> {
    pub label: String,
    pub mask: Mask<T>,
    pub dilation: IntMatrix,
    pub digits: LatticeSet,
}

impl<T: Scalar> SubdivisionOp<T> {
    /// Uses the standard digit set `Z^s ∩ M[0,1)^s` when `digits` is `None`.
    pub fn new(
        label: impl Into<String>,
        mask: Mask<T>,
        dilation: IntMatrix,
        digits: Option<LatticeSet>,
    ) -> Result<Self> {
        let label = label.into();
        let s = dilation.dim();
        if mask.dim() != s {
            return Err(Error::DimensionMismatch {
                expected: s,
                found: mask.dim(),
            });
        }
        if dilation.det().abs() < 2 {
            return Err(Error::NotExpanding { det: dilation.det() });
        }
        let digits = match digits {
            Some(d) => {
                if d.dim() != s {
                    return Err(Error::DimensionMismatch {
                        expected: s,
                        found: d.dim(),
                    });
                }
                if !lattice::verify_digit_set(&dilation, &d) {
                    return Err(Error::InvalidDigitSet { label });
                }
                d
            }
            None => lattice::digit_set(&dilation)?,
        };
        Ok(SubdivisionOp {
            label,
            mask,
            dilation,
            digits,
        })
    }

    pub fn dim(&self) -> usize {
        self.dilation.dim()
    }

    /// The same operator with its mask translated so that the lexicographically
    /// smallest support point sits at the origin. Returns the shift `t` with
    /// `new_mask(x) = mask(x + t)`.
    pub fn shifted_to_origin(&self) -> (Self, Point) {
        if self.mask.contains_origin() || self.mask.is_empty() {
            return (self.clone(), Point::zero(self.dim()));
        }
        let t = self.mask.coeffs.keys().next().cloned().expect("non-empty");
        let op = SubdivisionOp {
            mask: self.mask.shifted(&t),
            ..self.clone()
        };
        (op, t)
    }

    pub fn map_scalar<U: Scalar>(&self, f: impl Fn(&T) -> U) -> SubdivisionOp<U> {
        SubdivisionOp {
            label: self.label.clone(),
            mask: self.mask.map(f),
            dilation: self.dilation.clone(),
            digits: self.digits.clone(),
        }
    }
}

impl<T: fmt::Display> fmt::Debug for SubdivisionOp<T> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("SubdivisionOp")
            .field("label", &self.label)
            .field("mask", &self.mask)
            .field("dilation", &self.dilation)
            .field("digits", &self.digits)
            .finish()
    }
}

/// The finite set of operators a multiple scheme draws from at each level.
#[derive(Clone, PartialEq)]
pub struct SchemeSet<T> {
    dim: usize,
    ops: Vec<SubdivisionOp<T>>,
}

impl<T: Scalar> SchemeSet<T> {
    pub fn new(ops: Vec<SubdivisionOp<T>>) -> Result<Self> {
        let first = ops.first().ok_or(Error::EmptyScheme)?;
        let dim = first.dim();
        if let Some(bad) = ops.iter().find(|op| op.dim() != dim) {
            return Err(Error::DimensionMismatch {
                expected: dim,
                found: bad.dim(),
            });
        }
        Ok(SchemeSet { dim, ops })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn ops(&self) -> &[SubdivisionOp<T>] {
        &self.ops
    }

    pub fn len(&self) -> usize {
        self.ops.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ops.is_empty()
    }

    pub fn op(&self, j: usize) -> &SubdivisionOp<T> {
        &self.ops[j]
    }

    /// Non-fatal observations about the input, e.g. masks whose support
    /// misses the origin.
    pub fn warnings(&self) -> Vec<String> {
        self.ops
            .iter()
            .filter(|op| !op.mask.contains_origin())
            .map(|op| {
                format!(
                    "mask of operator {} does not contain the origin in its support",
                    op.label
                )
            })
            .collect()
    }

    /// Every mask shifted so that its support contains the origin, with the
    /// applied shift per operator.
    pub fn shifted_to_origin(&self) -> (Self, Vec<Point>) {
        let (ops, shifts) = self.ops.iter().map(SubdivisionOp::shifted_to_origin).unzip();
        (SchemeSet { dim: self.dim, ops }, shifts)
    }

    pub fn map_scalar<U: Scalar>(&self, f: impl Fn(&T) -> U) -> SchemeSet<U> {
        SchemeSet {
            dim: self.dim,
            ops: self.ops.iter().map(|op| op.map_scalar(&f)).collect(),
        }
    }

    pub fn validate(&self, expansion_depth: usize) -> Validation<T> {
        Validation {
            sum_rules: self.ops.iter().map(check_sum_rules).collect(),
            digits: self
                .ops
                .iter()
                .map(|op| lattice::verify_digit_set(&op.dilation, &op.digits))
                .collect(),
            joint_expansion: check_jointly_expanding(self, expansion_depth),
            assumption_n: check_assumption_n(self),
        }
    }
}

impl<T: fmt::Display> fmt::Debug for SchemeSet<T> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("SchemeSet")
            .field("dim", &self.dim)
            .field("ops", &self.ops)
            .finish()
    }
}

impl SchemeSet<Rational> {
    pub fn to_scalar<U: Scalar>(&self) -> SchemeSet<U> {
        self.map_scalar(U::from_rational)
    }
}

/// Results of all input checks on a scheme set.
#[derive(Clone, Debug, Serialize)]
#[serde(bound = "")]
pub struct Validation<T: Scalar> {
    pub sum_rules: Vec<SumRuleReport<T>>,
    pub digits: Vec<bool>,
    pub joint_expansion: ExpansionReport,
    pub assumption_n: Vec<NormCheck>,
}

impl<T: Scalar> Validation<T> {
    pub fn sum_rules_hold(&self) -> bool {
        self.sum_rules.iter().all(|r| r.satisfied)
    }

    pub fn passed(&self) -> bool {
        self.sum_rules_hold()
            && self.digits.iter().all(|&d| d)
            && self.joint_expansion.verdict == ExpansionVerdict::CertifiedYes
    }
}

#[derive(Clone, Debug, Serialize)]
#[serde(bound = "")]
pub struct SumRuleReport<T: Scalar> {
    pub op_label: String,
    pub satisfied: bool,
    /// `(digit, coset sum - 1)` for every digit.
    #[serde(serialize_with = "ser_residuals")]
    pub residuals: Vec<(Point, T)>,
}

fn ser_residuals<T: Scalar, S: serde::Serializer>(r: &[(Point, T)], s: S) -> std::result::Result<S::Ok, S::Error> {
    use serde::ser::SerializeSeq;
    let mut seq = s.serialize_seq(Some(r.len()))?;
    for (p, v) in r {
        seq.serialize_element(&serde_json::json!({
            "digit": p,
            "residual": v.to_string(),
        }))?;
    }
    seq.end()
}

fn coset_digit<'a>(m: &IntMatrix, digits: &'a LatticeSet, p: &Point) -> Option<&'a Point> {
    digits.iter().find(|d| m.solve_integral(&(p - d)).is_some())
}

/// Coset sums `sum_beta a(M beta + d)` for every digit `d`, reported as
/// residuals against 1.
pub fn check_sum_rules<T: Scalar>(op: &SubdivisionOp<T>) -> SumRuleReport<T> {
    let mut sums: BTreeMap<Point, T> = op.digits.iter().map(|d| (d.clone(), T::zero())).collect();
    for (p, v) in op.mask.iter() {
        let d = coset_digit(&op.dilation, &op.digits, p).expect("digits cover every coset");
        let slot = sums.get_mut(d).expect("digit present");
        *slot = slot.clone() + v.clone();
    }
    let residuals: Vec<(Point, T)> = sums.into_iter().map(|(d, s)| (d, s - T::one())).collect();
    SumRuleReport {
        op_label: op.label.clone(),
        satisfied: residuals.iter().all(|(_, r)| r.is_negligible()),
        residuals,
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum ExpansionVerdict {
    CertifiedYes,
    CertifiedNo,
    Inconclusive,
}

#[derive(Clone, Debug, Serialize)]
pub struct ExpansionReport {
    pub verdict: ExpansionVerdict,
    /// Product length at which the verdict was reached.
    pub depth: Option<usize>,
    /// Operator indices of a product with spectral radius of its inverse at
    /// least one (only for `CertifiedNo`).
    pub witness: Option<Vec<usize>>,
}

const EXPANSION_PRODUCT_CAP: usize = 1 << 14;

/// Words over `0..J` of length `k` in lexicographic order.
pub(crate) fn words(j: usize, k: usize) -> impl Iterator<Item = Vec<usize>> {
    let total = j.checked_pow(k as u32).unwrap_or(usize::MAX);
    (0..total).map(move |mut idx| {
        let mut w = vec![0; k];
        for slot in w.iter_mut().rev() {
            *slot = idx % j;
            idx /= j;
        }
        w
    })
}

/// `M_{w_k} ... M_{w_1}`.
pub(crate) fn dilation_product<T: Scalar>(s: &SchemeSet<T>, word: &[usize]) -> Result<IntMatrix> {
    let mut q = s.ops[word[0]].dilation.clone();
    for &j in &word[1..] {
        q = s.ops[j].dilation.mul(&q)?;
    }
    Ok(q)
}

/// Decides whether `{M_j^-1}` has joint spectral radius below one by testing
/// `||P^-1||_2 < 1` exactly on all products of a common length `k <= depth`.
pub fn check_jointly_expanding<T: Scalar>(s: &SchemeSet<T>, depth: usize) -> ExpansionReport {
    let j = s.len();
    for k in 1..=depth.max(1) {
        if j.checked_pow(k as u32).is_none_or(|n| n > EXPANSION_PRODUCT_CAP) {
            break;
        }
        let mut all_contractive = true;
        for w in words(j, k) {
            let Ok(q) = dilation_product(s, &w) else {
                all_contractive = false;
                continue;
            };
            if has_small_eigenvalue(&q) {
                return ExpansionReport {
                    verdict: ExpansionVerdict::CertifiedNo,
                    depth: Some(k),
                    witness: Some(w),
                };
            }
            all_contractive &= q.inverse_is_contractive();
        }
        if all_contractive {
            return ExpansionReport {
                verdict: ExpansionVerdict::CertifiedYes,
                depth: Some(k),
                witness: None,
            };
        }
    }
    ExpansionReport {
        verdict: ExpansionVerdict::Inconclusive,
        depth: None,
        witness: None,
    }
}

/// `true` when `Q` certainly has an eigenvalue of modulus at most one.
fn has_small_eigenvalue(q: &IntMatrix) -> bool {
    let n = q.dim();
    let rows = q.rows();
    let m = nalgebra::DMatrix::from_fn(n, n, |i, j| rows[i][j] as f64);
    let min_mod = m
        .complex_eigenvalues()
        .iter()
        .map(|z| z.norm())
        .fold(f64::INFINITY, f64::min);
    if min_mod < 1.0 - 1e-9 {
        return true;
    }
    if min_mod > 1.0 + 1e-9 {
        return false;
    }
    // modulus numerically one: look for an exact root of unity
    let mut power = rows.clone();
    for _ in 1..=12 {
        let shifted: Vec<Vec<i64>> = power
            .iter()
            .enumerate()
            .map(|(i, r)| r.iter().enumerate().map(|(j, &x)| x - (i == j) as i64).collect())
            .collect();
        if matches!(lattice::int_determinant(&shifted), Ok(0)) {
            return true;
        }
        match lattice::int_matmul(&power, &rows) {
            Some(p) => power = p,
            None => break,
        }
    }
    false
}

#[derive(Clone, Debug, Serialize)]
pub struct NormCheck {
    pub op_label: String,
    /// Exact verdict of `||M^-1||_2 < 1`.
    pub passes: bool,
    pub inverse_norm: f64,
}

pub fn check_assumption_n<T: Scalar>(s: &SchemeSet<T>) -> Vec<NormCheck> {
    s.ops
        .iter()
        .map(|op| NormCheck {
            op_label: op.label.clone(),
            passes: op.dilation.inverse_is_contractive(),
            inverse_norm: op.dilation.inverse_norm2(),
        })
        .collect()
}

/// Smallest `n <= max_n` such that every product of `n` dilations has an
/// inverse of spectral norm below one.
pub fn assumption_n_power<T: Scalar>(s: &SchemeSet<T>, max_n: usize, cap: usize) -> Option<usize> {
    (1..=max_n)
        .take_while(|&n| s.len().checked_pow(n as u32).is_some_and(|c| c <= cap))
        .find(|&n| words(s.len(), n).all(|w| dilation_product(s, &w).is_ok_and(|q| q.inverse_is_contractive())))
}

/// A sequence that equals `background` outside a finite set.
#[derive(Clone, PartialEq)]
pub struct BoundedSequence<T> {
    dim: usize,
    background: T,
    deviations: BTreeMap<Point, T>,
}

impl<T: Scalar> BoundedSequence<T> {
    pub fn zero(dim: usize) -> Self {
        Self::constant(dim, T::zero())
    }

    pub fn constant(dim: usize, c: T) -> Self {
        BoundedSequence {
            dim,
            background: c,
            deviations: BTreeMap::new(),
        }
    }

    pub fn delta(dim: usize) -> Self {
        Self::finite(dim, [(Point::zero(dim), T::one())]).expect("same dimension")
    }

    pub fn finite(dim: usize, values: impl IntoIterator<Item = (Point, T)>) -> Result<Self> {
        Self::with_background(dim, T::zero(), values)
    }

    /// `values` are absolute values, not deviations.
    pub fn with_background(dim: usize, background: T, values: impl IntoIterator<Item = (Point, T)>) -> Result<Self> {
        let mut deviations = BTreeMap::new();
        for (p, v) in values {
            if p.dim() != dim {
                return Err(Error::DimensionMismatch {
                    expected: dim,
                    found: p.dim(),
                });
            }
            let d = v - background.clone();
            if d.is_zero() {
                deviations.remove(&p);
            } else {
                deviations.insert(p, d);
            }
        }
        Ok(BoundedSequence {
            dim,
            background,
            deviations,
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn background(&self) -> &T {
        &self.background
    }

    pub fn get(&self, p: &Point) -> T {
        match self.deviations.get(p) {
            Some(d) => self.background.clone() + d.clone(),
            None => self.background.clone(),
        }
    }

    pub fn deviations(&self) -> impl Iterator<Item = (&Point, &T)> {
        self.deviations.iter()
    }

    /// Points where the sequence differs from its background.
    pub fn support(&self) -> LatticeSet {
        LatticeSet::new(self.dim, self.deviations.keys().cloned()).expect("uniform dimension")
    }

    pub fn map<U: Scalar>(&self, f: impl Fn(&T) -> U) -> BoundedSequence<U> {
        BoundedSequence {
            dim: self.dim,
            background: f(&self.background),
            deviations: self
                .deviations
                .iter()
                .map(|(p, v)| (p.clone(), f(v)))
                .filter(|(_, v)| !v.is_zero())
                .collect(),
        }
    }
}

impl<T: fmt::Display> fmt::Debug for BoundedSequence<T> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("BoundedSequence")
            .field("background", &self.background.to_string())
            .field(
                "deviations",
                &self
                    .deviations
                    .iter()
                    .map(|(p, v)| (p, v.to_string()))
                    .collect::<Vec<_>>(),
            )
            .finish()
    }
}

/// `(S c)(alpha) = sum_beta a(alpha - M beta) c(beta)`.
///
/// A nonzero background is carried through unchanged, which requires the
/// sum rules.
pub fn apply_subdivision<T: Scalar>(op: &SubdivisionOp<T>, c: &BoundedSequence<T>) -> Result<BoundedSequence<T>> {
    if c.dim != op.dim() {
        return Err(Error::DimensionMismatch {
            expected: op.dim(),
            found: c.dim,
        });
    }
    if !c.background.is_zero() && !check_sum_rules(op).satisfied {
        return Err(Error::Background);
    }
    let mut acc: FxHashMap<Point, T> = FxHashMap::default();
    for (beta, cv) in &c.deviations {
        let base = op.dilation.apply(beta);
        for (p, av) in op.mask.iter() {
            let slot = acc.entry(&base + p).or_insert_with(T::zero);
            *slot = slot.clone() + av.clone() * cv.clone();
        }
    }
    Ok(BoundedSequence {
        dim: c.dim,
        background: c.background.clone(),
        deviations: acc.into_iter().filter(|(_, v)| !v.is_zero()).collect(),
    })
}

/// The operator equal to `outer` applied after `inner`.
pub fn compose<T: Scalar>(outer: &SubdivisionOp<T>, inner: &SubdivisionOp<T>) -> Result<SubdivisionOp<T>> {
    if outer.dim() != inner.dim() {
        return Err(Error::DimensionMismatch {
            expected: outer.dim(),
            found: inner.dim(),
        });
    }
    let dilation = outer.dilation.mul(&inner.dilation)?;
    let mut coeffs = Vec::with_capacity(outer.mask.len() * inner.mask.len());
    for (g, ai) in inner.mask.iter() {
        let shift = outer.dilation.apply(g);
        for (p, ao) in outer.mask.iter() {
            coeffs.push((p + &shift, ao.clone() * ai.clone()));
        }
    }
    let mask = Mask::new(outer.dim(), coeffs)?;
    SubdivisionOp::new(format!("{}*{}", outer.label, inner.label), mask, dilation, None)
}

pub const DEFAULT_POWER_CAP: usize = 64;

/// All `J^n` words `(j_1, ..., j_n)`, each turned into the operator
/// `S_{j_n} ... S_{j_1}`; words are listed lexicographically.
pub fn power_scheme_set<T: Scalar>(s: &SchemeSet<T>, n: usize, cap: usize) -> Result<SchemeSet<T>> {
    if n == 0 {
        return Err(Error::Word("power must be at least 1".into()));
    }
    let count = s.len().checked_pow(n as u32).unwrap_or(usize::MAX);
    if count > cap {
        return Err(Error::BlowUp { count, cap });
    }
    if n == 1 {
        return Ok(s.clone());
    }
    let ops = words(s.len(), n)
        .map(|w| {
            let mut op = s.ops[w[0]].clone();
            for &j in &w[1..] {
                op = compose(&s.ops[j], &op)?;
            }
            Ok(op)
        })
        .collect::<Result<Vec<_>>>()?;
    SchemeSet::new(ops)
}
