//! Transition matrices `T_{d,j,Omega}` and their restriction to the
//! zero-sum subspace `V_Omega`.

use std::sync::Arc;

use serde_json::{json, Value};

use crate::error::{Error, Result};
use crate::jsr::{Label, MatrixFamily};
use crate::lattice::{LatticeSet, Point};
use crate::matrix::Matrix;
use crate::omega::{verify_invariance, DifferenceSpaceReport};
use crate::scalar::{JsrFloat, Scalar};
use crate::scheme::SchemeSet;

#[derive(Clone, Debug, PartialEq)]
pub struct TransitionMatrix<T: Scalar> {
    /// `entries[alpha, beta] = a_j(M_j alpha - beta + d)`, rows and columns in
    /// the order of `omega`.
    pub entries: Matrix<T>,
    pub digit: Point,
    pub op_label: String,
    pub op_index: usize,
    pub omega: Arc<LatticeSet>,
}

impl<T: Scalar> TransitionMatrix<T> {
    pub fn label(&self) -> Label {
        Label {
            op_label: self.op_label.clone(),
            digit: Some(self.digit.clone()),
        }
    }

    /// All column sums equal one (up to the scalar's tolerance).
    pub fn columns_sum_to_one(&self) -> bool {
        self.entries
            .column_sums()
            .into_iter()
            .all(|c| (c - T::one()).is_negligible())
    }
}

/// One matrix per operator and digit, operators in order and digits
/// lexicographically. Refuses sets that are not invariant.
pub fn build_transition_matrices<T: Scalar>(s: &SchemeSet<T>, omega: &LatticeSet) -> Result<Vec<TransitionMatrix<T>>> {
    let check = verify_invariance(s, omega);
    if !check.invariant {
        return Err(Error::NotInvariant {
            count: check.violations,
        });
    }
    Ok(build_unchecked(s, omega))
}

/// Same as [`build_transition_matrices`] without the invariance check; the
/// matrices are then compressions of the transition operators.
pub fn build_unchecked<T: Scalar>(s: &SchemeSet<T>, omega: &LatticeSet) -> Vec<TransitionMatrix<T>> {
    let shared = Arc::new(omega.clone());
    let n = omega.len();
    let mut out = Vec::new();
    for (j, op) in s.ops().iter().enumerate() {
        for d in &op.digits {
            let mut entries = Matrix::zeros(n, n);
            for (col, beta) in omega.iter().enumerate() {
                for (p, v) in op.mask.iter() {
                    // M alpha = p + beta - d
                    if let Some(alpha) = op.dilation.solve_integral(&(&(p + beta) - d)) {
                        if let Some(row) = omega.index_of(&alpha) {
                            entries.set(row, col, v.clone());
                        }
                    }
                }
            }
            out.push(TransitionMatrix {
                entries,
                digit: d.clone(),
                op_label: op.label.clone(),
                op_index: j,
                omega: Arc::clone(&shared),
            });
        }
    }
    out
}

/// Restricted matrices `R` with `T B = B R`, where the columns of `B` are a
/// basis of `V_Omega`.
#[derive(Clone, Debug, PartialEq)]
pub struct RestrictedFamily<T: Scalar> {
    pub omega: Arc<LatticeSet>,
    /// Basis vectors as columns, `|Omega| x dim`.
    pub basis: Matrix<T>,
    pub matrices: Vec<Matrix<T>>,
    pub labels: Vec<Label>,
}

impl<T: Scalar> RestrictedFamily<T> {
    pub fn dim(&self) -> usize {
        self.basis.ncols()
    }

    pub fn len(&self) -> usize {
        self.matrices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.matrices.is_empty()
    }

    pub fn position(&self, op_label: &str, digit: &Point) -> Option<usize> {
        self.labels
            .iter()
            .position(|l| l.op_label == op_label && l.digit.as_ref() == Some(digit))
    }

    /// Checks `T B - B R = 0` for every matrix.
    pub fn verify(&self, ts: &[TransitionMatrix<T>]) -> bool {
        ts.len() == self.matrices.len()
            && ts.iter().zip(&self.matrices).all(|(t, r)| {
                let lhs = &t.entries * &self.basis;
                let rhs = &self.basis * r;
                lhs.sub(&rhs).is_ok_and(|d| d.is_negligible())
            })
            && self.basis.column_sums().into_iter().all(|c| c.is_negligible())
    }

    pub fn to_family<F: JsrFloat>(&self) -> Result<MatrixFamily<F>> {
        MatrixFamily::with_labels(
            self.matrices.iter().map(Matrix::to_dmatrix).collect(),
            self.labels.clone(),
        )
    }
}

/// Spanning-tree basis `delta_parent - delta_child`, one vector per tree edge.
pub fn tree_basis<T: Scalar>(omega: &LatticeSet, report: &DifferenceSpaceReport) -> Matrix<T> {
    let mut b = Matrix::zeros(omega.len(), report.spanning_edges.len());
    for (e, (parent, child)) in report.spanning_edges.iter().enumerate() {
        b.set(omega.index_of(parent).expect("edge in omega"), e, T::one());
        b.set(omega.index_of(child).expect("edge in omega"), e, -T::one());
    }
    b
}

/// Star basis `e_i - e_0`, `i = 1..|Omega|`.
pub fn star_basis<T: Scalar>(n: usize) -> Matrix<T> {
    let mut b = Matrix::zeros(n, n.saturating_sub(1));
    for i in 1..n {
        b.set(0, i - 1, -T::one());
        b.set(i, i - 1, T::one());
    }
    b
}

/// Restriction in the spanning-tree basis. Requires a connected lattice
/// graph, i.e. `V_Omega` equal to its difference subspace.
pub fn restrict_to_difference_space<T: Scalar>(
    ts: &[TransitionMatrix<T>],
    report: &DifferenceSpaceReport,
) -> Result<RestrictedFamily<T>> {
    if !report.is_connected() {
        return Err(Error::Disconnected {
            components: report.components,
        });
    }
    let first = ts.first().ok_or(Error::EmptyFamily)?;
    let omega = Arc::clone(&first.omega);
    let n = omega.len();
    let edges = &report.spanning_edges;
    let idx = |p: &Point| omega.index_of(p).expect("edge in omega");
    let edge_nodes: Vec<(usize, usize)> = edges.iter().map(|(p, c)| (idx(p), idx(c))).collect();
    let mut matrices = Vec::with_capacity(ts.len());
    for t in ts {
        let mut r = Matrix::zeros(edges.len(), edges.len());
        for (col, &(p, c)) in edge_nodes.iter().enumerate() {
            // u = T (delta_p - delta_c); coordinates are minus subtree sums
            let mut acc: Vec<T> = (0..n)
                .map(|i| t.entries.get(i, p).clone() - t.entries.get(i, c).clone())
                .collect();
            for (e, &(pp, cc)) in edge_nodes.iter().enumerate().rev() {
                let sub = acc[cc].clone();
                r.set(e, col, -sub.clone());
                acc[pp] = acc[pp].clone() + sub;
            }
            let root_total = acc[edge_nodes.first().map_or(0, |&(p, _)| p)].clone();
            if !root_total.is_negligible() {
                return Err(Error::NotInSubspace {
                    label: t.op_label.clone(),
                });
            }
        }
        matrices.push(r);
    }
    Ok(RestrictedFamily {
        basis: tree_basis(&omega, report),
        omega,
        matrices,
        labels: ts.iter().map(TransitionMatrix::label).collect(),
    })
}

/// Restriction with an arbitrary full-rank basis (columns).
pub fn restrict_with_basis<T: Scalar>(ts: &[TransitionMatrix<T>], basis: Matrix<T>) -> Result<RestrictedFamily<T>> {
    let first = ts.first().ok_or(Error::EmptyFamily)?;
    let omega = Arc::clone(&first.omega);
    if basis.nrows() != omega.len() {
        return Err(Error::DimensionMismatch {
            expected: omega.len(),
            found: basis.nrows(),
        });
    }
    let matrices = ts
        .iter()
        .map(|t| {
            if basis.ncols() == 0 {
                return Ok(Matrix::zeros(0, 0));
            }
            basis
                .solve_columns(&(&t.entries * &basis))
                .ok_or_else(|| Error::NotInSubspace {
                    label: t.op_label.clone(),
                })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(RestrictedFamily {
        omega,
        basis,
        matrices,
        labels: ts.iter().map(TransitionMatrix::label).collect(),
    })
}

/// Restriction to the full zero-sum space in the star basis; works for
/// disconnected sets too.
pub fn restrict_to_zero_sum<T: Scalar>(ts: &[TransitionMatrix<T>]) -> Result<RestrictedFamily<T>> {
    let n = ts.first().ok_or(Error::EmptyFamily)?.omega.len();
    restrict_with_basis(ts, star_basis(n))
}

fn matrix_rows_json<T: Scalar>(m: &Matrix<T>) -> Value {
    Value::Array(
        (0..m.nrows())
            .map(|i| Value::Array(m.row(i).iter().map(|x| Value::String(x.to_string())).collect()))
            .collect(),
    )
}

fn omega_json(omega: &LatticeSet) -> Value {
    Value::Array(omega.iter().map(|p| json!(p.coords())).collect())
}

/// Matrix dump: `omega` ordering plus one entry per matrix with digit,
/// operator label and row-major entries as strings.
pub fn transition_dump<T: Scalar>(ts: &[TransitionMatrix<T>]) -> Value {
    let omega = ts.first().map(|t| omega_json(&t.omega)).unwrap_or(json!([]));
    json!({
        "omega": omega,
        "matrices": ts.iter().map(|t| json!({
            "op_label": t.op_label,
            "digit": t.digit.coords(),
            "rows": matrix_rows_json(&t.entries),
        })).collect::<Vec<_>>(),
    })
}

pub fn restricted_dump<T: Scalar>(r: &RestrictedFamily<T>) -> Value {
    json!({
        "omega": omega_json(&r.omega),
        "dimension": r.dim(),
        "basis": matrix_rows_json(&r.basis.transpose()),
        "matrices": r.labels.iter().zip(&r.matrices).map(|(l, m)| json!({
            "op_label": l.op_label,
            "digit": l.digit.as_ref().map(|d| d.coords().to_vec()),
            "rows": matrix_rows_json(m),
        })).collect::<Vec<_>>(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lattice::IntMatrix;
    use crate::omega::{construct_omega_c, difference_space_report, select_omega, SelectPolicy};
    use crate::scheme::{Mask, SubdivisionOp};
    use crate::Rational;
    use proptest::prelude::*;

    fn q(n: i64, d: i64) -> Rational {
        Rational::from_ratio(n, d)
    }

    fn mult1() -> SchemeSet<Rational> {
        let mask = Mask::new(
            1,
            [
                (Point::from([0]), q(1, 2)),
                (Point::from([3]), q(1, 1)),
                (Point::from([6]), q(1, 2)),
            ],
        )
        .unwrap();
        let digits = LatticeSet::from_points([[0], [3]]);
        let op = SubdivisionOp::new("1", mask, IntMatrix::scalar(1, 2).unwrap(), Some(digits)).unwrap();
        SchemeSet::new(vec![op]).unwrap()
    }

    fn rows(v: &[&[Rational]]) -> Matrix<Rational> {
        Matrix::from_rows(v.iter().map(|r| r.to_vec()).collect()).unwrap()
    }

    #[test]
    fn mult1_over_omega_c() {
        let s = mult1();
        let omega = construct_omega_c(&s, &LatticeSet::from_points([[0]])).unwrap().points;
        let ts = build_transition_matrices(&s, &omega).unwrap();
        assert_eq!(ts.len(), 2);
        assert_eq!(ts[0].entries, rows(&[&[q(1, 2), q(0, 1)], &[q(1, 2), q(1, 1)]]));
        assert_eq!(ts[1].entries, rows(&[&[q(1, 1), q(1, 2)], &[q(0, 1), q(1, 2)]]));
        assert!(ts.iter().all(TransitionMatrix::columns_sum_to_one));

        let forced = rows(&[&[q(1, 1)], &[q(-1, 1)]]);
        let r = restrict_with_basis(&ts, forced).unwrap();
        assert_eq!(r.matrices, vec![rows(&[&[q(1, 2)]]), rows(&[&[q(1, 2)]])]);
        assert!(r.verify(&ts));

        let report = difference_space_report(&omega);
        assert!(matches!(
            restrict_to_difference_space(&ts, &report),
            Err(Error::Disconnected { components: 2 })
        ));
    }

    #[test]
    fn refuses_non_invariant_sets() {
        let s = mult1();
        assert!(matches!(
            build_transition_matrices(&s, &LatticeSet::from_points([[0]])),
            Err(Error::NotInvariant { .. })
        ));
    }

    #[test]
    fn enlarged_set_block_structure() {
        let s = mult1();
        let omega = select_omega(&s, &SelectPolicy::default()).unwrap().points;
        let ts = build_transition_matrices(&s, &omega).unwrap();
        let sub = LatticeSet::from_points([[-2], [-1], [1], [2], [4], [5]]);
        let core = LatticeSet::from_points([[0], [3]]);
        for t in &ts {
            assert!(t.columns_sum_to_one());
            // no coupling from the complement of {0,3} into {0,3} and back
            for a in core.iter() {
                for b in sub.iter() {
                    let (i, k) = (omega.index_of(a).unwrap(), omega.index_of(b).unwrap());
                    assert_eq!(t.entries.get(i, k), &q(0, 1));
                    assert_eq!(t.entries.get(k, i), &q(0, 1));
                }
            }
        }
        let r = restrict_to_difference_space(&ts, &difference_space_report(&omega)).unwrap();
        assert_eq!(r.dim(), 7);
        assert!(r.verify(&ts));
    }

    #[test]
    fn singleton_omega_gives_empty_restriction() {
        let mask = Mask::new(1, [(Point::from([0]), q(1, 1)), (Point::from([1]), q(1, 1))]).unwrap();
        let op = SubdivisionOp::new("h", mask, IntMatrix::scalar(1, 2).unwrap(), None).unwrap();
        let s = SchemeSet::new(vec![op]).unwrap();
        let omega = construct_omega_c(&s, &LatticeSet::from_points([[0]])).unwrap().points;
        assert_eq!(omega.len(), 1);
        let ts = build_transition_matrices(&s, &omega).unwrap();
        let r = restrict_to_difference_space(&ts, &difference_space_report(&omega)).unwrap();
        assert_eq!(r.dim(), 0);
        assert_eq!(r.len(), 2);
    }

    #[test]
    fn dump_uses_rational_strings() {
        let s = mult1();
        let omega = LatticeSet::from_points([[0], [3]]);
        let v = transition_dump(&build_transition_matrices(&s, &omega).unwrap());
        assert_eq!(v["omega"], json!([[0], [3]]));
        assert_eq!(v["matrices"][0]["rows"], json!([["1/2", "0"], ["1/2", "1"]]));
        assert_eq!(v["matrices"][1]["digit"], json!([3]));
    }

    fn random_nonneg_scheme() -> impl Strategy<Value = SchemeSet<Rational>> {
        (
            prop::collection::vec((-3i64..=3, -3i64..=3, 1i64..=4), 1..7),
            prop::sample::select(vec![
                vec![vec![2, 0], vec![0, 2]],
                vec![vec![1, 1], vec![1, -2]],
                vec![vec![1, -1], vec![1, 1]],
            ]),
        )
            .prop_map(|(mask, m)| {
                let mask = Mask::new(
                    2,
                    mask.into_iter()
                        .map(|(x, y, v)| (Point::from([x, y]), q(v, 3)))
                        .chain([(Point::zero(2), q(1, 1))]),
                )
                .unwrap();
                let op = SubdivisionOp::new("r", mask, IntMatrix::new(m).unwrap(), None).unwrap();
                SchemeSet::new(vec![normalise(op)]).unwrap()
            })
    }

    /// Rescales each coset so the sum rules hold.
    fn normalise(op: SubdivisionOp<Rational>) -> SubdivisionOp<Rational> {
        let report = crate::scheme::check_sum_rules(&op);
        let sums: Vec<(Point, Rational)> = report.residuals.iter().map(|(d, r)| (d.clone(), r + q(1, 1))).collect();
        let entries: Vec<(Point, Rational)> = op
            .mask
            .iter()
            .map(|(p, v)| {
                let (_, s) = sums
                    .iter()
                    .find(|(d, _)| op.dilation.solve_integral(&(p - d)).is_some())
                    .unwrap();
                (p.clone(), v / s)
            })
            .collect();
        let mut entries = entries;
        for (d, s) in &sums {
            if s == &q(0, 1) {
                entries.push((d.clone(), q(1, 1)));
            }
        }
        let mask = Mask::new(2, entries).unwrap();
        SubdivisionOp::new(op.label, mask, op.dilation, None).unwrap()
    }

    fn random_subset() -> impl Strategy<Value = LatticeSet> {
        prop::collection::vec((-3i64..=3, -3i64..=3), 1..10)
            .prop_map(|v| LatticeSet::from_points(v.into_iter().map(|(x, y)| [x, y])))
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(48))]

        #[test]
        fn column_sums_iff_invariant(s in random_nonneg_scheme(), extra in random_subset()) {
            prop_assert!(crate::scheme::check_sum_rules(&s.ops()[0]).satisfied);
            let omega_c = construct_omega_c(&s, &LatticeSet::from_points([[0, 0]])).unwrap().points;
            for omega in [omega_c.clone(), extra.clone(), omega_c.union(&extra).unwrap()] {
                let invariant = verify_invariance(&s, &omega).invariant;
                let ts = build_unchecked(&s, &omega);
                let sums = ts.iter().all(TransitionMatrix::columns_sum_to_one);
                prop_assert_eq!(invariant, sums);
            }
        }

        #[test]
        fn restriction_is_exact(s in random_nonneg_scheme()) {
            let omega = select_omega(&s, &SelectPolicy { allow_ball: false, ..SelectPolicy::default() }).unwrap().points;
            let ts = build_transition_matrices(&s, &omega).unwrap();
            let r = restrict_to_difference_space(&ts, &difference_space_report(&omega)).unwrap();
            prop_assert!(r.verify(&ts));
            let star = restrict_to_zero_sum(&ts).unwrap();
            prop_assert!(star.verify(&ts));
            // the two bases give similar matrices: equal traces and determinants
            for (a, b) in r.matrices.iter().zip(&star.matrices) {
                let tr = |m: &Matrix<Rational>| (0..m.nrows()).fold(q(0, 1), |acc, i| acc + m.get(i, i).clone());
                prop_assert_eq!(tr(a), tr(b));
                prop_assert_eq!(a.determinant().unwrap(), b.determinant().unwrap());
            }
        }

        #[test]
        fn permutation_equivariance(s in random_nonneg_scheme(), seed in any::<u64>()) {
            let omega = construct_omega_c(&s, &LatticeSet::from_points([[0, 0]])).unwrap().points;
            let ts = build_transition_matrices(&s, &omega).unwrap();
            let n = omega.len();
            let mut perm: Vec<usize> = (0..n).collect();
            let mut state = seed;
            for i in (1..n).rev() {
                state = state.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
                perm.swap(i, (state >> 33) as usize % (i + 1));
            }
            // rebuild with the permuted order directly from the mask
            for t in &ts {
                let op = &s.ops()[t.op_index];
                let permuted = Matrix::from_fn(n, n, |i, k| {
                    let alpha = &omega.points()[perm[i]];
                    let beta = &omega.points()[perm[k]];
                    op.mask.value(&(&(&op.dilation.apply(alpha) - beta) + &t.digit))
                });
                let conj = Matrix::from_fn(n, n, |i, k| t.entries.get(perm[i], perm[k]).clone());
                prop_assert_eq!(&permuted, &conj);
            }
        }
    }
}
