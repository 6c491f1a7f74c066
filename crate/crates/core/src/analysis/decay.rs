use std::fmt;
use std::str::FromStr;

use rustc_hash::FxHashMap;
use serde::Serialize;
use smallvec::SmallVec;

use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::scheme::SchemeSet;

/// Operator indices (0-based) as a finite prefix followed by a period
/// repeated forever.
#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct OpSequence {
    pub prefix: Vec<usize>,
    pub period: Vec<usize>,
}

impl OpSequence {
    pub fn new(prefix: Vec<usize>, period: Vec<usize>) -> Result<Self> {
        if period.is_empty() {
            return Err(Error::Word("the periodic part must not be empty".into()));
        }
        Ok(OpSequence { prefix, period })
    }

    pub fn cyclic(period: Vec<usize>) -> Result<Self> {
        Self::new(Vec::new(), period)
    }

    /// Index used at step `n` (0-based).
    pub fn at(&self, n: usize) -> usize {
        match self.prefix.get(n) {
            Some(&j) => j,
            None => self.period[(n - self.prefix.len()) % self.period.len()],
        }
    }

    /// `len` letters starting at step `start`.
    pub fn take(&self, start: usize, len: usize) -> Vec<usize> {
        (start..start + len).map(|n| self.at(n)).collect()
    }

    /// Fails if some index is not below `ops`.
    pub fn check(&self, ops: usize) -> Result<()> {
        match self.prefix.iter().chain(&self.period).find(|&&j| j >= ops) {
            Some(j) => Err(Error::Word(format!("operator index {} out of range 1..={ops}", j + 1))),
            None => Ok(()),
        }
    }
}

fn parse_indices(text: &str) -> Result<Vec<usize>> {
    text.split(|c: char| c == ',' || c.is_whitespace())
        .filter(|t| !t.is_empty())
        .map(|t| match t.parse::<usize>() {
            Ok(j) if j >= 1 => Ok(j - 1),
            _ => Err(Error::Word(format!("{t:?} is not an operator index (1-based)"))),
        })
        .collect()
}

/// `"1,2,2"` repeats `1,2,2`; `"1 2 2 1|2"` is the prefix `1,2,2,1`
/// followed by `2` forever. Indices are 1-based.
impl FromStr for OpSequence {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim().trim_start_matches('[').trim_end_matches(']');
        match s.split_once('|') {
            Some((pre, per)) => Self::new(parse_indices(pre)?, parse_indices(per)?),
            None => Self::cyclic(parse_indices(s)?),
        }
    }
}

impl fmt::Display for OpSequence {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let join = |v: &[usize]| v.iter().map(|j| (j + 1).to_string()).collect::<Vec<_>>().join(",");
        if self.prefix.is_empty() {
            write!(f, "{}", join(&self.period))
        } else {
            write!(f, "{}|{}", join(&self.prefix), join(&self.period))
        }
    }
}

/// One operator in floating point, ready for iteration.
#[derive(Clone, Debug)]
pub(crate) struct FloatOp {
    pub dilation: Vec<Vec<i64>>,
    pub mask: Vec<(Vec<i64>, f64)>,
}

impl FloatOp {
    pub fn all<T: Scalar>(s: &SchemeSet<T>) -> Vec<FloatOp> {
        s.ops()
            .iter()
            .map(|op| FloatOp {
                dilation: op.dilation.rows(),
                mask: op
                    .mask
                    .iter()
                    .map(|(p, v)| (p.coords().to_vec(), v.to_f64_lossy()))
                    .collect(),
            })
            .collect()
    }
}

pub(crate) const DEFAULT_POINT_CAP: usize = 20_000_000;

type Key = SmallVec<[i64; 4]>;

/// Finitely supported sequence on `Z^s` in floating point.
#[derive(Clone, Debug)]
pub(crate) struct Grid {
    dim: usize,
    data: FxHashMap<Key, f64>,
}

impl Grid {
    pub fn delta(dim: usize) -> Self {
        let mut data = FxHashMap::default();
        data.insert(Key::from_elem(0, dim), 1.0);
        Grid { dim, data }
    }

    /// `S c` for one operator.
    pub fn step(&self, op: &FloatOp, point_cap: usize) -> Result<Grid> {
        let mut data: FxHashMap<Key, f64> =
            FxHashMap::with_capacity_and_hasher(self.data.len() * 2, Default::default());
        for (beta, &v) in &self.data {
            let mb: Key = op
                .dilation
                .iter()
                .map(|row| row.iter().zip(beta).map(|(m, b)| m * b).sum())
                .collect();
            for (p, a) in &op.mask {
                let alpha: Key = mb.iter().zip(p).map(|(x, y)| x + y).collect();
                *data.entry(alpha).or_insert(0.0) += a * v;
            }
            if data.len() > point_cap {
                return Err(Error::Budget(format!("sequence support exceeds {point_cap} points")));
            }
        }
        data.retain(|_, v| *v != 0.0);
        Ok(Grid { dim: self.dim, data })
    }

    /// `max_l sup_alpha |c(alpha) - c(alpha - e_l)|`.
    pub fn max_difference(&self) -> f64 {
        let mut m = 0.0f64;
        let mut q = Key::from_elem(0, self.dim);
        for (alpha, &v) in &self.data {
            for l in 0..self.dim {
                q.copy_from_slice(alpha);
                q[l] -= 1;
                let prev = self.data.get(&q).copied().unwrap_or(0.0);
                m = m.max((v - prev).abs());
                q[l] += 2;
                if !self.data.contains_key(&q) {
                    m = m.max(v.abs());
                }
            }
        }
        m
    }

    /// Points with a value above `tol * max |c|`, sorted, with their values.
    pub fn support(&self, tol: f64) -> Vec<(Vec<i64>, f64)> {
        let top = self.data.values().fold(0.0f64, |a, v| a.max(v.abs()));
        let mut out: Vec<(Vec<i64>, f64)> = self
            .data
            .iter()
            .filter(|(_, v)| v.abs() > tol * top)
            .map(|(p, &v)| (p.to_vec(), v))
            .collect();
        out.sort_unstable_by(|a, b| a.0.cmp(&b.0));
        out
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct DecayRow {
    pub n: usize,
    /// `max_l ||nabla_l S_{j_n} ... S_{j_1} delta||_inf`.
    pub m_n: f64,
    /// `m_n^(1/n)`, absent for `n = 0`.
    pub root: Option<f64>,
}

/// Decay of the backward differences of `S_{j_n} ... S_{j_1} delta` for
/// `n = 0..=n_max`, computed in floating point.
pub fn difference_decay<T: Scalar>(s: &SchemeSet<T>, seq: &OpSequence, n_max: usize) -> Result<Vec<DecayRow>> {
    seq.check(s.len())?;
    let ops = FloatOp::all(s);
    let mut grid = Grid::delta(s.dim());
    let mut rows = Vec::with_capacity(n_max + 1);
    for n in 0..=n_max {
        if n > 0 {
            grid = grid.step(&ops[seq.at(n - 1)], DEFAULT_POINT_CAP)?;
        }
        let m_n = grid.max_difference();
        rows.push(DecayRow {
            n,
            m_n,
            root: (n > 0).then(|| m_n.powf(1.0 / n as f64)),
        });
    }
    Ok(rows)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lattice::{IntMatrix, Point};
    use crate::scheme::{apply_subdivision, BoundedSequence, Mask, SubdivisionOp};
    use crate::Rational;

    fn haar() -> SchemeSet<Rational> {
        let mask = Mask::new(
            1,
            [
                (Point::from([0]), Rational::from_ratio(1, 1)),
                (Point::from([1]), Rational::from_ratio(1, 1)),
            ],
        )
        .unwrap();
        SchemeSet::new(vec![SubdivisionOp::new(
            "1",
            mask,
            IntMatrix::scalar(1, 2).unwrap(),
            None,
        )
        .unwrap()])
        .unwrap()
    }

    #[test]
    fn parse_sequences() {
        let s: OpSequence = "1,2,2".parse().unwrap();
        assert_eq!(s.take(0, 7), vec![0, 1, 1, 0, 1, 1, 0]);
        let t: OpSequence = "[1 2 2 1|2]".parse().unwrap();
        assert_eq!(t.take(0, 7), vec![0, 1, 1, 0, 1, 1, 1]);
        assert_eq!(t.to_string(), "1,2,2,1|2");
        assert!("0,1".parse::<OpSequence>().is_err());
        assert!("1|".parse::<OpSequence>().is_err());
        assert!(t.check(1).is_err() && t.check(2).is_ok());
    }

    #[test]
    fn haar_differences_stay_one() {
        let rows = difference_decay(&haar(), &OpSequence::cyclic(vec![0]).unwrap(), 6).unwrap();
        assert_eq!(rows[0].m_n, 1.0);
        assert!(rows.iter().all(|r| r.m_n == 1.0));
    }

    #[test]
    fn grid_matches_exact_subdivision() {
        let s = haar();
        let mut exact = BoundedSequence::delta(1);
        let mut grid = Grid::delta(1);
        let ops = FloatOp::all(&s);
        for _ in 0..3 {
            exact = apply_subdivision(s.op(0), &exact).unwrap();
            grid = grid.step(&ops[0], 1000).unwrap();
        }
        let sup: Vec<i64> = grid.support(0.0).into_iter().map(|(p, _)| p[0]).collect();
        assert_eq!(sup, (0..8).collect::<Vec<_>>());
        assert!(sup
            .iter()
            .all(|&x| exact.get(&Point::from([x])) == Rational::from_ratio(1, 1)));
    }
}
