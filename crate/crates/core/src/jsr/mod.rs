//! Joint spectral radius bounds for finite matrix families.
//!
//! Lower bounds come from spectral radii of products over Lyndon words,
//! upper bounds from a Gripenberg-style branch-and-bound on operator norms,
//! and a simplified invariant-polytope iteration can close the bracket.

mod lower;
mod polytope;
mod upper;

pub use lower::{jsr_lower_bound, lyndon_count, spectral_radius, LowerBound};
pub use polytope::{jsr_polytope, PolytopeOutcome};
pub use upper::{ellipsoidal_transform, jsr_upper_bound, NormChoice, UpperBound, UpperOptions};

use std::fmt;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lattice::Point;
use crate::scalar::JsrFloat;

/// Identifies a family member, e.g. the transition matrix of one operator
/// and digit.
#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Label {
    pub op_label: String,
    pub digit: Option<Point>,
}

impl fmt::Display for Label {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match &self.digit {
            Some(d) => write!(f, "T[{},{}]", d, self.op_label),
            None => write!(f, "{}", self.op_label),
        }
    }
}

#[derive(Clone, Debug)]
pub struct MatrixFamily<F: JsrFloat> {
    dim: usize,
    matrices: Vec<DMatrix<F>>,
    labels: Vec<Label>,
}

impl<F: JsrFloat> MatrixFamily<F> {
    pub fn new(matrices: Vec<DMatrix<F>>) -> Result<Self> {
        let labels = (0..matrices.len())
            .map(|i| Label {
                op_label: format!("A{}", i + 1),
                digit: None,
            })
            .collect();
        Self::with_labels(matrices, labels)
    }

    pub fn with_labels(matrices: Vec<DMatrix<F>>, labels: Vec<Label>) -> Result<Self> {
        let first = matrices.first().ok_or(Error::EmptyFamily)?;
        let dim = first.nrows();
        for m in &matrices {
            if !m.is_square() {
                return Err(Error::NotSquare {
                    rows: m.nrows(),
                    cols: m.ncols(),
                });
            }
            if m.nrows() != dim {
                return Err(Error::DimensionMismatch {
                    expected: dim,
                    found: m.nrows(),
                });
            }
        }
        if labels.len() != matrices.len() {
            return Err(Error::DimensionMismatch {
                expected: matrices.len(),
                found: labels.len(),
            });
        }
        Ok(MatrixFamily { dim, matrices, labels })
    }

    pub fn from_rows(rows: &[Vec<Vec<f64>>]) -> Result<Self> {
        let ms = rows
            .iter()
            .map(|m| {
                let n = m.len();
                if m.iter().any(|r| r.len() != n) {
                    return Err(Error::NotSquare {
                        rows: n,
                        cols: m.first().map_or(0, Vec::len),
                    });
                }
                Ok(DMatrix::from_fn(n, n, |i, j| F::lit(m[i][j])))
            })
            .collect::<Result<Vec<_>>>()?;
        Self::new(ms)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.matrices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.matrices.is_empty()
    }

    pub fn matrices(&self) -> &[DMatrix<F>] {
        &self.matrices
    }

    pub fn labels(&self) -> &[Label] {
        &self.labels
    }

    pub fn scaled(&self, c: F) -> Self {
        MatrixFamily {
            dim: self.dim,
            matrices: self.matrices.iter().map(|m| m * c).collect(),
            labels: self.labels.clone(),
        }
    }

    /// `A_{w_1} A_{w_2} ... A_{w_k}`, multiplied left to right.
    pub fn product(&self, word: &[usize]) -> Result<DMatrix<F>> {
        let (&first, rest) = word.split_first().ok_or_else(|| Error::Word("empty word".into()))?;
        let get = |i: usize| {
            self.matrices
                .get(i)
                .ok_or_else(|| Error::Word(format!("letter {i} out of range")))
        };
        let mut p = get(first)?.clone();
        for &i in rest {
            p = &p * get(i)?;
        }
        Ok(p)
    }

    /// `rho(product(word))^(1/|word|)`.
    pub fn word_value(&self, word: &[usize]) -> Result<F> {
        let p = self.product(word)?;
        Ok(normalised_radius(spectral_radius(&p), word.len()))
    }

    /// `true` when every member equals the first up to sign.
    pub fn is_trivial(&self) -> bool {
        let a = &self.matrices[0];
        self.matrices.iter().all(|m| m == a || *m == -a.clone())
    }
}

pub(crate) fn normalised_radius<F: JsrFloat>(r: F, k: usize) -> F {
    if k == 1 {
        r
    } else {
        r.powf(F::lit(1.0 / k as f64))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum JsrStatus {
    /// Bounds agree by construction (trivial family or zero dimension).
    Exact,
    /// An invariant polytope certified `upper = lower`.
    ExactPolytope,
    Bracket,
    Inconclusive,
}

#[derive(Clone, Debug, Serialize)]
pub struct JsrEstimate {
    pub lower: f64,
    pub upper: f64,
    pub status: JsrStatus,
    /// Indices of the word attaining `lower`.
    pub word: Vec<usize>,
    pub word_labels: Vec<Label>,
    /// Search depth of the norm bound, when that bound gave `upper`.
    pub depth: Option<usize>,
    pub norm: Option<NormChoice>,
    /// Polytope vertices when the polytope closed.
    pub vertices: Option<Vec<Vec<f64>>>,
    /// Set when `lower` was certified in exact arithmetic.
    pub lower_exact: bool,
}

impl JsrEstimate {
    pub fn is_exact(&self) -> bool {
        matches!(self.status, JsrStatus::Exact | JsrStatus::ExactPolytope)
    }

    /// Certificate in the published JSON shape.
    pub fn certificate(&self) -> serde_json::Value {
        let word: Vec<serde_json::Value> = self
            .word_labels
            .iter()
            .map(|l| {
                serde_json::json!({
                    "digit": l.digit.as_ref().map(|d| d.coords().to_vec()),
                    "op_label": l.op_label,
                })
            })
            .collect();
        let mut v = serde_json::json!({
            "lower": self.lower,
            "upper": self.upper,
            "status": self.status,
            "word": word,
            "depth": self.depth,
        });
        if let Some(vs) = &self.vertices {
            v["vertices"] = serde_json::json!(vs);
        }
        v
    }
}

#[derive(Clone, Debug)]
pub struct JsrBudget {
    /// Longest word tried by the lower bound search.
    pub max_len: usize,
    /// Cap on spectral radius evaluations in the lower bound search.
    pub max_products: usize,
    /// Deepest level of the norm branch-and-bound.
    pub max_depth: usize,
    /// Cap on nodes of the norm branch-and-bound.
    pub max_nodes: usize,
    /// Polytope vertex cap; zero skips the polytope stage.
    pub max_vertices: usize,
    pub norm: NormChoice,
    /// Relative pruning margin of the branch-and-bound.
    pub delta: f64,
}

impl Default for JsrBudget {
    fn default() -> Self {
        JsrBudget {
            max_len: 8,
            max_products: 20_000,
            max_depth: 10,
            max_nodes: 20_000,
            max_vertices: 200,
            norm: NormChoice::Ellipsoidal,
            delta: 1e-3,
        }
    }
}

/// Lower bound search, polytope on the best word, then the norm bound.
/// Always returns `lower <= upper`.
pub fn jsr_estimate<F: JsrFloat>(fam: &MatrixFamily<F>, budget: &JsrBudget) -> JsrEstimate {
    if fam.dim() == 0 {
        return JsrEstimate {
            lower: 0.0,
            upper: 0.0,
            status: JsrStatus::Exact,
            word: Vec::new(),
            word_labels: Vec::new(),
            depth: None,
            norm: None,
            vertices: None,
            lower_exact: true,
        };
    }
    let lb = jsr_lower_bound(fam, budget.max_len, budget.max_products);
    let lower = lb.value.as_f64();
    let word_labels: Vec<Label> = lb.word.iter().map(|&i| fam.labels()[i].clone()).collect();
    let mut est = JsrEstimate {
        lower,
        upper: f64::INFINITY,
        status: JsrStatus::Bracket,
        word: lb.word.clone(),
        word_labels,
        depth: None,
        norm: None,
        vertices: None,
        lower_exact: false,
    };
    if fam.is_trivial() {
        est.upper = lower;
        est.status = JsrStatus::Exact;
        est.depth = Some(1);
        return est;
    }
    if budget.max_vertices > 0 && lower > 0.0 {
        match jsr_polytope(fam, &lb.word, lower, budget.max_vertices) {
            PolytopeOutcome::Closed { vertices } => {
                est.upper = lower;
                est.status = JsrStatus::ExactPolytope;
                est.vertices = Some(vertices);
                return est;
            }
            PolytopeOutcome::Open { upper: Some(u), .. } => est.upper = u.max(lower),
            PolytopeOutcome::Open { upper: None, .. } | PolytopeOutcome::Unsuitable(_) => {}
        }
    }
    let ub = jsr_upper_bound(
        fam,
        &UpperOptions {
            max_depth: budget.max_depth,
            norm: budget.norm,
            max_nodes: budget.max_nodes,
            delta: budget.delta,
            lower_hint: Some(lower),
        },
    );
    let u = ub.value.as_f64();
    if u < est.upper {
        est.upper = u.max(lower);
        est.depth = Some(ub.depth);
        est.norm = Some(budget.norm);
    }
    if !est.upper.is_finite() {
        est.status = JsrStatus::Inconclusive;
    }
    est
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn fam(ms: &[Vec<Vec<f64>>]) -> MatrixFamily<f64> {
        MatrixFamily::from_rows(ms).unwrap()
    }

    fn quick() -> JsrBudget {
        JsrBudget {
            max_len: 6,
            max_products: 2_000,
            max_depth: 8,
            max_nodes: 2_000,
            max_vertices: 40,
            ..JsrBudget::default()
        }
    }

    #[test]
    fn singleton_half() {
        let f = fam(&[vec![vec![0.5]]]);
        let e = jsr_estimate(&f, &JsrBudget::default());
        assert_eq!((e.lower, e.upper, e.status), (0.5, 0.5, JsrStatus::Exact));
        assert_eq!(e.word, vec![0]);
        let (l, w) = {
            let lb = jsr_lower_bound(&f, 3, 100);
            (lb.value, lb.word)
        };
        assert_eq!((l, w.len()), (0.5, 1));
        let ub = jsr_upper_bound(
            &f,
            &UpperOptions {
                max_depth: 1,
                norm: NormChoice::Inf,
                ..UpperOptions::default()
            },
        );
        assert_eq!((ub.value, ub.depth), (0.5, 1));
    }

    #[test]
    fn sign_pairs_match_singleton() {
        let a = vec![vec![0.3, 0.7], vec![-0.2, 0.5]];
        let neg: Vec<Vec<f64>> = a.iter().map(|r| r.iter().map(|x| -x).collect()).collect();
        let one = jsr_estimate(&fam(std::slice::from_ref(&a)), &quick());
        let two = jsr_estimate(&fam(&[a, neg]), &quick());
        assert!((one.lower - two.lower).abs() < 1e-12);
        assert!((one.upper - two.upper).abs() < 1e-12);
    }

    #[test]
    fn zero_dimension_is_exact_zero() {
        let f = MatrixFamily::<f64>::new(vec![DMatrix::zeros(0, 0), DMatrix::zeros(0, 0)]).unwrap();
        let e = jsr_estimate(&f, &quick());
        assert_eq!((e.lower, e.upper, e.status), (0.0, 0.0, JsrStatus::Exact));
    }

    #[test]
    fn scaled_rotations() {
        let r = vec![vec![0.0, -0.5], vec![0.5, 0.0]];
        let f = fam(&[
            r.clone(),
            vec![vec![0.0, 0.5], vec![-0.5, 0.0]],
            vec![vec![0.5, 0.0], vec![0.0, 0.5]],
        ]);
        let e = jsr_estimate(&f, &quick());
        assert!((e.lower - 0.5).abs() < 1e-12);
        assert!((e.upper - 0.5).abs() < 1e-9, "{e:?}");
        // brute force: every product of length <= 8 has norm 2^-k
        for k in 1..=8usize {
            for idx in 0..3usize.pow(k as u32) {
                let w: Vec<usize> = (0..k).map(|i| idx / 3usize.pow(i as u32) % 3).collect();
                let n = f.product(&w).unwrap().norm();
                assert!((n - 2f64.sqrt() * 0.5f64.powi(k as i32)).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn diagonal_polytope_closes() {
        let f = fam(&[
            vec![vec![0.5, 0.0], vec![0.0, 0.25]],
            vec![vec![0.25, 0.0], vec![0.0, 0.5]],
        ]);
        let e = jsr_estimate(&f, &quick());
        assert_eq!(e.status, JsrStatus::ExactPolytope);
        assert!((e.lower - 0.5).abs() < 1e-12 && e.upper == e.lower);
    }

    #[test]
    fn certificate_shape() {
        let f = fam(&[vec![vec![0.5]]]);
        let c = jsr_estimate(&f, &quick()).certificate();
        for key in ["lower", "upper", "status", "word", "depth"] {
            assert!(c.get(key).is_some(), "{key}");
        }
        assert_eq!(c["status"], "exact");
        assert_eq!(c["word"][0]["op_label"], "A1");
    }

    fn random_family() -> impl Strategy<Value = Vec<Vec<Vec<f64>>>> {
        (2usize..=3, 1usize..=3).prop_flat_map(|(n, m)| {
            prop::collection::vec(prop::collection::vec(prop::collection::vec(-1.0f64..1.0, n), n), m)
        })
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(100))]

        #[test]
        fn scaling(ms in random_family(), c in prop::sample::select(vec![0.25, 0.5, 2.0, 3.0, -1.5])) {
            let f = fam(&ms);
            let b = quick();
            let e = jsr_estimate(&f, &b);
            let s = jsr_estimate(&f.scaled(c), &b);
            let tol = 1e-9 * e.lower.abs().max(1e-300) * c.abs();
            prop_assert!((s.lower - c.abs() * e.lower).abs() <= tol.max(1e-15));
            prop_assert!(e.lower <= e.upper + 1e-12);
            prop_assert!(s.lower <= s.upper + 1e-12);
        }

        #[test]
        fn singleton_collapses(m in prop::collection::vec(prop::collection::vec(-1.0f64..1.0, 3), 3)) {
            let f = fam(&[m]);
            let e = jsr_estimate(&f, &quick());
            let rho = spectral_radius(&f.matrices()[0]);
            prop_assert!((e.lower - rho).abs() <= 1e-9 * rho.max(1e-12));
            prop_assert!((e.upper - rho).abs() <= 1e-9 * rho.max(1e-12));
        }

        #[test]
        fn monotone_budget(ms in random_family()) {
            let f = fam(&ms);
            let mut last_lower = 0.0;
            let mut last_upper = f64::INFINITY;
            for k in 1..=5 {
                let lb = jsr_lower_bound(&f, k, 10_000);
                prop_assert!(lb.value >= last_lower);
                last_lower = lb.value;
                let ub = jsr_upper_bound(&f, &UpperOptions { max_depth: k, norm: NormChoice::Inf, max_nodes: 100_000, ..UpperOptions::default() });
                prop_assert!(ub.value <= last_upper + 1e-15);
                prop_assert!(ub.value >= lb.value - 1e-12);
                last_upper = ub.value;
            }
        }

        #[test]
        fn similarity_keeps_lower(ms in random_family(), t in prop::collection::vec(-0.3f64..0.3, 4)) {
            let f = fam(&ms);
            let n = f.dim();
            let mut s = DMatrix::<f64>::identity(n, n);
            s[(0, 1)] += t[0];
            s[(1, 0)] += t[1];
            s[(0, 0)] += t[2];
            s[(1, 1)] += t[3];
            let si = s.clone().try_inverse().unwrap();
            let g = MatrixFamily::new(f.matrices().iter().map(|a| &si * a * &s).collect()).unwrap();
            let a = jsr_lower_bound(&f, 4, 10_000).value;
            let b = jsr_lower_bound(&g, 4, 10_000).value;
            prop_assert!((a - b).abs() <= 1e-8 * a.max(1.0));
            let eb = jsr_estimate(&g, &quick());
            prop_assert!(eb.lower <= eb.upper + 1e-9);
            prop_assert!(eb.upper >= a - 1e-8 * a.max(1.0));
        }

        #[test]
        fn word_replay(ms in random_family()) {
            let f = fam(&ms);
            let lb = jsr_lower_bound(&f, 4, 10_000);
            prop_assert_eq!(f.word_value(&lb.word).unwrap(), lb.value);
        }
    }
}
