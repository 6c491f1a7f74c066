//! Exact integer-lattice geometry: point sets, Minkowski sums, images and
//! preimages under integer matrices, and digit sets.
//!
//! Every coset and membership decision is made in integer arithmetic. The
//! inverse of a dilation is represented by its adjugate and determinant, so
//! `M^-1 x` is integral iff every entry of `adj(M) x` is divisible by
//! `det M`.

use std::fmt;
use std::ops::{Add, Index, Neg, Sub};

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{Signed, Zero};
use rustc_hash::FxHashSet;
use serde::{Deserialize, Serialize};
use smallvec::SmallVec;

use crate::error::{Error, Result};

/// A point of `Z^s`.
#[derive(Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Point(SmallVec<[i64; 4]>);

impl Point {
    pub fn new(coords: impl IntoIterator<Item = i64>) -> Self {
        Point(coords.into_iter().collect())
    }

    pub fn zero(dim: usize) -> Self {
        Point(SmallVec::from_elem(0, dim))
    }

    pub fn unit(dim: usize, axis: usize) -> Self {
        let mut p = Self::zero(dim);
        p.0[axis] = 1;
        p
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn coords(&self) -> &[i64] {
        &self.0
    }

    pub fn is_zero(&self) -> bool {
        self.0.iter().all(|&c| c == 0)
    }

    pub fn l1_norm(&self) -> i64 {
        self.0.iter().map(|c| c.abs()).sum()
    }

    pub fn norm2(&self) -> f64 {
        (self.0.iter().map(|&c| (c as f64) * (c as f64)).sum::<f64>()).sqrt()
    }

    pub fn norm2_squared(&self) -> i128 {
        self.0.iter().map(|&c| (c as i128) * (c as i128)).sum()
    }
}

impl Index<usize> for Point {
    type Output = i64;
    fn index(&self, i: usize) -> &i64 {
        &self.0[i]
    }
}

impl Add for &Point {
    type Output = Point;
    fn add(self, rhs: &Point) -> Point {
        debug_assert_eq!(self.dim(), rhs.dim());
        Point(self.0.iter().zip(&rhs.0).map(|(a, b)| a + b).collect())
    }
}

impl Sub for &Point {
    type Output = Point;
    fn sub(self, rhs: &Point) -> Point {
        debug_assert_eq!(self.dim(), rhs.dim());
        Point(self.0.iter().zip(&rhs.0).map(|(a, b)| a - b).collect())
    }
}

impl Neg for &Point {
    type Output = Point;
    fn neg(self) -> Point {
        Point(self.0.iter().map(|a| -a).collect())
    }
}

impl fmt::Debug for Point {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Display::fmt(self, f)
    }
}

impl fmt::Display for Point {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "(")?;
        for (i, c) in self.0.iter().enumerate() {
            if i > 0 {
                write!(f, ",")?;
            }
            write!(f, "{c}")?;
        }
        write!(f, ")")
    }
}

impl From<Vec<i64>> for Point {
    fn from(v: Vec<i64>) -> Self {
        Point(v.into())
    }
}

impl<const N: usize> From<[i64; N]> for Point {
    fn from(v: [i64; N]) -> Self {
        Point(v.iter().copied().collect())
    }
}

/// A finite set of lattice points of one dimension, kept sorted
/// lexicographically and free of duplicates. Matrices indexed by a
/// `LatticeSet` use this order.
#[derive(Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct LatticeSet {
    dim: usize,
    points: Vec<Point>,
}

impl LatticeSet {
    pub fn empty(dim: usize) -> Self {
        LatticeSet {
            dim,
            points: Vec::new(),
        }
    }

    pub fn new(dim: usize, points: impl IntoIterator<Item = Point>) -> Result<Self> {
        let mut points: Vec<Point> = points.into_iter().collect();
        if let Some(p) = points.iter().find(|p| p.dim() != dim) {
            return Err(Error::DimensionMismatch {
                expected: dim,
                found: p.dim(),
            });
        }
        points.sort_unstable();
        points.dedup();
        Ok(LatticeSet { dim, points })
    }

    /// Builds a set from points whose dimension is taken from the first one.
    /// Panics on an empty iterator or mixed dimensions; meant for literals.
    pub fn from_points<P: Into<Point>>(points: impl IntoIterator<Item = P>) -> Self {
        let points: Vec<Point> = points.into_iter().map(Into::into).collect();
        let dim = points.first().map(Point::dim).expect("at least one point");
        Self::new(dim, points).expect("uniform dimension")
    }

    pub fn singleton(p: Point) -> Self {
        LatticeSet {
            dim: p.dim(),
            points: vec![p],
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn points(&self) -> &[Point] {
        &self.points
    }

    pub fn iter(&self) -> std::slice::Iter<'_, Point> {
        self.points.iter()
    }

    pub fn contains(&self, p: &Point) -> bool {
        self.points.binary_search(p).is_ok()
    }

    pub fn index_of(&self, p: &Point) -> Option<usize> {
        self.points.binary_search(p).ok()
    }

    pub fn union(&self, other: &LatticeSet) -> Result<LatticeSet> {
        check_dims(self.dim, other.dim)?;
        Self::new(self.dim, self.points.iter().chain(&other.points).cloned())
    }

    pub fn is_subset(&self, other: &LatticeSet) -> bool {
        self.dim == other.dim && self.points.iter().all(|p| other.contains(p))
    }

    pub fn negated(&self) -> LatticeSet {
        LatticeSet::new(self.dim, self.points.iter().map(|p| -p)).expect("same dimension")
    }

    pub fn translated(&self, t: &Point) -> Result<LatticeSet> {
        check_dims(self.dim, t.dim())?;
        Self::new(self.dim, self.points.iter().map(|p| p + t))
    }

    pub fn max_norm2(&self) -> f64 {
        self.points.iter().map(Point::norm2).fold(0.0, f64::max)
    }

    /// One point per line, coordinates separated by commas.
    pub fn to_csv(&self) -> String {
        let mut out = String::new();
        for p in &self.points {
            let row: Vec<String> = p.coords().iter().map(i64::to_string).collect();
            out.push_str(&row.join(","));
            out.push('\n');
        }
        out
    }
}

impl fmt::Debug for LatticeSet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_set().entries(&self.points).finish()
    }
}

impl<'a> IntoIterator for &'a LatticeSet {
    type Item = &'a Point;
    type IntoIter = std::slice::Iter<'a, Point>;
    fn into_iter(self) -> Self::IntoIter {
        self.points.iter()
    }
}

fn check_dims(expected: usize, found: usize) -> Result<()> {
    if expected == found {
        Ok(())
    } else {
        Err(Error::DimensionMismatch { expected, found })
    }
}

/// `{a + b : a in A, b in B}`.
pub fn minkowski_sum(a: &LatticeSet, b: &LatticeSet) -> Result<LatticeSet> {
    check_dims(a.dim, b.dim)?;
    let mut acc = FxHashSet::default();
    for p in a {
        for q in b {
            acc.insert(p + q);
        }
    }
    LatticeSet::new(a.dim, acc)
}

/// Square integer matrix with its determinant and adjugate cached, so that
/// `M^-1 = adj(M) / det(M)` is available exactly.
#[derive(Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "Vec<Vec<i64>>", into = "Vec<Vec<i64>>")]
pub struct IntMatrix {
    dim: usize,
    entries: Vec<i64>,
    det: i64,
    adj: Vec<i64>,
}

impl IntMatrix {
    pub fn new(rows: Vec<Vec<i64>>) -> Result<Self> {
        let dim = rows.len();
        if dim == 0 {
            return Err(Error::NotSquare { rows: 0, cols: 0 });
        }
        if let Some(r) = rows.iter().find(|r| r.len() != dim) {
            return Err(Error::NotSquare {
                rows: dim,
                cols: r.len(),
            });
        }
        let entries: Vec<i64> = rows.into_iter().flatten().collect();
        Self::from_entries(dim, entries)
    }

    pub fn scalar(dim: usize, value: i64) -> Result<Self> {
        let mut entries = vec![0; dim * dim];
        for i in 0..dim {
            entries[i * dim + i] = value;
        }
        Self::from_entries(dim, entries)
    }

    fn from_entries(dim: usize, entries: Vec<i64>) -> Result<Self> {
        let wide: Vec<i128> = entries.iter().map(|&x| x as i128).collect();
        let det = bareiss_det(dim, &wide)?;
        if det == 0 {
            return Err(Error::Singular);
        }
        let det = i64::try_from(det).map_err(|_| Error::Overflow)?;
        let mut adj = vec![0i64; dim * dim];
        if dim == 1 {
            adj[0] = 1;
        } else {
            let mut minor = Vec::with_capacity((dim - 1) * (dim - 1));
            for i in 0..dim {
                for j in 0..dim {
                    minor.clear();
                    for r in (0..dim).filter(|&r| r != i) {
                        for c in (0..dim).filter(|&c| c != j) {
                            minor.push(wide[r * dim + c]);
                        }
                    }
                    let cof = bareiss_det(dim - 1, &minor)?;
                    let cof = if (i + j) % 2 == 0 { cof } else { -cof };
                    // adjugate is the transposed cofactor matrix
                    adj[j * dim + i] = i64::try_from(cof).map_err(|_| Error::Overflow)?;
                }
            }
        }
        Ok(IntMatrix { dim, entries, det, adj })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn det(&self) -> i64 {
        self.det
    }

    pub fn entry(&self, i: usize, j: usize) -> i64 {
        self.entries[i * self.dim + j]
    }

    pub fn rows(&self) -> Vec<Vec<i64>> {
        self.entries.chunks(self.dim).map(<[i64]>::to_vec).collect()
    }

    pub fn apply(&self, p: &Point) -> Point {
        debug_assert_eq!(p.dim(), self.dim);
        Point::new((0..self.dim).map(|i| (0..self.dim).map(|j| self.entries[i * self.dim + j] * p[j]).sum()))
    }

    /// `adj(M) p`, i.e. `det(M) * M^-1 p`.
    pub fn adjugate_apply(&self, p: &Point) -> Vec<i128> {
        (0..self.dim)
            .map(|i| {
                (0..self.dim)
                    .map(|j| self.adj[i * self.dim + j] as i128 * p[j] as i128)
                    .sum()
            })
            .collect()
    }

    /// `M^-1 p` when it is integral.
    pub fn solve_integral(&self, p: &Point) -> Option<Point> {
        let det = self.det as i128;
        let y = self.adjugate_apply(p);
        if y.iter().all(|v| v % det == 0) {
            Some(Point::new(y.iter().map(|v| (v / det) as i64)))
        } else {
            None
        }
    }

    /// Exact `M^-1 p`.
    pub fn solve_rational(&self, p: &Point) -> Vec<BigRational> {
        let det = BigInt::from(self.det);
        self.adjugate_apply(p)
            .into_iter()
            .map(|v| BigRational::new(BigInt::from(v), det.clone()))
            .collect()
    }

    /// `M^-1 p` rounded to `f64`; each coordinate is a single correctly
    /// rounded division when the integers fit in 53 bits.
    pub fn solve_f64(&self, p: &Point) -> Vec<f64> {
        let det = self.det as f64;
        self.adjugate_apply(p).into_iter().map(|v| v as f64 / det).collect()
    }

    /// `true` iff `M^-1 p` lies in the half-open unit cube `[0,1)^s`.
    pub fn inverse_in_unit_cube(&self, p: &Point) -> bool {
        let det = self.det as i128;
        self.adjugate_apply(p)
            .into_iter()
            .all(|v| if det > 0 { 0 <= v && v < det } else { det < v && v <= 0 })
    }

    pub fn mul(&self, rhs: &IntMatrix) -> Result<IntMatrix> {
        check_dims(self.dim, rhs.dim)?;
        let n = self.dim;
        let mut entries = vec![0i64; n * n];
        for i in 0..n {
            for j in 0..n {
                let mut acc: i64 = 0;
                for k in 0..n {
                    let t = self.entries[i * n + k]
                        .checked_mul(rhs.entries[k * n + j])
                        .ok_or(Error::Overflow)?;
                    acc = acc.checked_add(t).ok_or(Error::Overflow)?;
                }
                entries[i * n + j] = acc;
            }
        }
        Self::from_entries(n, entries)
    }

    /// Inverse as an `f64` matrix (row-major).
    pub fn inverse_f64(&self) -> Vec<f64> {
        let det = self.det as f64;
        self.adj.iter().map(|&a| a as f64 / det).collect()
    }

    /// `||M^-1||_2`, computed numerically.
    pub fn inverse_norm2(&self) -> f64 {
        let n = self.dim;
        let inv = nalgebra::DMatrix::from_row_slice(n, n, &self.inverse_f64());
        inv.singular_values().max()
    }

    /// Exact test of `||M^-1||_2 < 1`, equivalent to `M^T M - I` being
    /// positive definite (all leading principal minors positive).
    pub fn inverse_is_contractive(&self) -> bool {
        let n = self.dim;
        let mut g = vec![BigInt::zero(); n * n];
        for i in 0..n {
            for j in 0..n {
                let mut acc = BigInt::zero();
                for k in 0..n {
                    acc += BigInt::from(self.entries[k * n + i]) * BigInt::from(self.entries[k * n + j]);
                }
                if i == j {
                    acc -= 1;
                }
                g[i * n + j] = acc;
            }
        }
        (1..=n).all(|k| {
            let minor: Vec<BigInt> = (0..k).flat_map(|i| g[i * n..i * n + k].iter().cloned()).collect();
            bareiss_det_big(k, minor).is_positive()
        })
    }
}

impl TryFrom<Vec<Vec<i64>>> for IntMatrix {
    type Error = Error;
    fn try_from(rows: Vec<Vec<i64>>) -> Result<Self> {
        IntMatrix::new(rows)
    }
}

impl From<IntMatrix> for Vec<Vec<i64>> {
    fn from(m: IntMatrix) -> Self {
        m.rows()
    }
}

impl fmt::Debug for IntMatrix {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:?}", self.rows())
    }
}

/// Exact determinant of a square integer matrix.
pub fn int_determinant(rows: &[Vec<i64>]) -> Result<i128> {
    let n = rows.len();
    if let Some(r) = rows.iter().find(|r| r.len() != n) {
        return Err(Error::NotSquare { rows: n, cols: r.len() });
    }
    let wide: Vec<i128> = rows.iter().flatten().map(|&x| x as i128).collect();
    bareiss_det(n, &wide)
}

/// Checked product of square integer matrices; `None` on overflow.
pub fn int_matmul(a: &[Vec<i64>], b: &[Vec<i64>]) -> Option<Vec<Vec<i64>>> {
    let n = a.len();
    let mut out = vec![vec![0i64; n]; n];
    for i in 0..n {
        for j in 0..n {
            let mut acc: i64 = 0;
            for k in 0..n {
                acc = acc.checked_add(a[i][k].checked_mul(b[k][j])?)?;
            }
            out[i][j] = acc;
        }
    }
    Some(out)
}

fn bareiss_det(n: usize, a: &[i128]) -> Result<i128> {
    if n == 0 {
        return Ok(1);
    }
    let mut m = a.to_vec();
    let mut sign = 1i128;
    let mut prev = 1i128;
    for k in 0..n - 1 {
        if m[k * n + k] == 0 {
            match (k + 1..n).find(|&r| m[r * n + k] != 0) {
                Some(r) => {
                    for c in 0..n {
                        m.swap(k * n + c, r * n + c);
                    }
                    sign = -sign;
                }
                None => return Ok(0),
            }
        }
        for i in k + 1..n {
            for j in k + 1..n {
                let v = m[i * n + j]
                    .checked_mul(m[k * n + k])
                    .and_then(|x| x.checked_sub(m[i * n + k].checked_mul(m[k * n + j])?))
                    .ok_or(Error::Overflow)?;
                m[i * n + j] = v / prev;
            }
        }
        prev = m[k * n + k];
    }
    Ok(sign * m[n * n - 1])
}

fn bareiss_det_big(n: usize, mut m: Vec<BigInt>) -> BigInt {
    if n == 0 {
        return BigInt::from(1);
    }
    let mut negate = false;
    let mut prev = BigInt::from(1);
    for k in 0..n - 1 {
        if m[k * n + k].is_zero() {
            match (k + 1..n).find(|&r| !m[r * n + k].is_zero()) {
                Some(r) => {
                    for c in 0..n {
                        m.swap(k * n + c, r * n + c);
                    }
                    negate = !negate;
                }
                None => return BigInt::zero(),
            }
        }
        for i in k + 1..n {
            for j in k + 1..n {
                let v = &m[i * n + j] * &m[k * n + k] - &m[i * n + k] * &m[k * n + j];
                m[i * n + j] = v / &prev;
            }
        }
        prev = m[k * n + k].clone();
    }
    let d = m[n * n - 1].clone();
    if negate {
        -d
    } else {
        d
    }
}

/// `M X = {M x : x in X}`.
pub fn image_lattice(m: &IntMatrix, x: &LatticeSet) -> Result<LatticeSet> {
    check_dims(m.dim(), x.dim())?;
    LatticeSet::new(x.dim(), x.iter().map(|p| m.apply(p)))
}

/// `{a in Z^s : M a in X}`, decided exactly.
pub fn preimage_lattice(m: &IntMatrix, x: &LatticeSet) -> Result<LatticeSet> {
    check_dims(m.dim(), x.dim())?;
    LatticeSet::new(x.dim(), x.iter().filter_map(|p| m.solve_integral(p)))
}

/// The standard digit set `Z^s ∩ M [0,1)^s`.
pub fn digit_set(m: &IntMatrix) -> Result<LatticeSet> {
    let det = m.det().abs();
    if det < 2 {
        return Err(Error::NotExpanding { det: m.det() });
    }
    let s = m.dim();
    let mut lo = vec![0i64; s];
    let mut hi = vec![0i64; s];
    for mask in 0u32..(1 << s) {
        let v = Point::new((0..s).map(|i| ((mask >> i) & 1) as i64));
        let w = m.apply(&v);
        for i in 0..s {
            lo[i] = lo[i].min(w[i]);
            hi[i] = hi[i].max(w[i]);
        }
    }
    let mut digits = Vec::with_capacity(det as usize);
    let mut cur = lo.clone();
    'outer: loop {
        let p = Point::new(cur.iter().copied());
        if m.inverse_in_unit_cube(&p) {
            digits.push(p);
        }
        for i in (0..s).rev() {
            if cur[i] < hi[i] {
                cur[i] += 1;
                continue 'outer;
            }
            cur[i] = lo[i];
        }
        break;
    }
    let set = LatticeSet::new(s, digits)?;
    debug_assert_eq!(set.len() as i64, det);
    Ok(set)
}

/// `true` iff `D` is a complete set of representatives of `Z^s / M Z^s`.
pub fn verify_digit_set(m: &IntMatrix, d: &LatticeSet) -> bool {
    if m.dim() != d.dim() || d.len() as i64 != m.det().abs() {
        return false;
    }
    let pts = d.points();
    for i in 0..pts.len() {
        for j in i + 1..pts.len() {
            if m.solve_integral(&(&pts[i] - &pts[j])).is_some() {
                return false;
            }
        }
    }
    true
}
