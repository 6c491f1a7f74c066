use minilp::{ComparisonOp, OptimizationDirection, Problem};
use nalgebra::{DMatrix, DVector, Schur};

use super::MatrixFamily;
use crate::scalar::JsrFloat;

const TOL: f64 = 1e-9;
const FILL: f64 = 1e-2;

#[derive(Clone, Debug, PartialEq)]
pub enum PolytopeOutcome {
    /// Every image of a vertex lies in the symmetric hull: the joint
    /// spectral radius equals `lower`.
    Closed {
        vertices: Vec<Vec<f64>>,
    },
    /// Vertex cap reached. `upper` is the polytope norm bound when the
    /// vertices span the space.
    Open {
        upper: Option<f64>,
        vertices: Vec<Vec<f64>>,
    },
    Unsuitable(String),
}

/// Gauge of `y` for the symmetric convex hull of `vs`, `INFINITY` when `y`
/// is outside their span.
fn hull_norm(vs: &[DVector<f64>], y: &DVector<f64>) -> f64 {
    if y.iter().all(|v| v.abs() <= 1e-300) {
        return 0.0;
    }
    let mut lp = Problem::new(OptimizationDirection::Minimize);
    let vars: Vec<_> = vs
        .iter()
        .map(|_| {
            (
                lp.add_var(1.0, (0.0, f64::INFINITY)),
                lp.add_var(1.0, (0.0, f64::INFINITY)),
            )
        })
        .collect();
    for r in 0..y.len() {
        let mut expr = Vec::with_capacity(2 * vs.len());
        for (v, &(p, m)) in vs.iter().zip(&vars) {
            if v[r] != 0.0 {
                expr.push((p, v[r]));
                expr.push((m, -v[r]));
            }
        }
        if expr.is_empty() {
            if y[r].abs() > TOL {
                return f64::INFINITY;
            }
            continue;
        }
        lp.add_constraint(expr.as_slice(), ComparisonOp::Eq, y[r]);
    }
    match lp.solve() {
        Ok(sol) => sol.objective(),
        Err(_) => f64::INFINITY,
    }
}

fn rank(vs: &[DVector<f64>], n: usize) -> (usize, Vec<DVector<f64>>) {
    if vs.is_empty() {
        return (
            0,
            (0..n).map(|i| DVector::from_fn(n, |j, _| f64::from(i == j))).collect(),
        );
    }
    let m = DMatrix::from_columns(vs);
    // null eigenvectors of V V^T span the complement
    let gram = &m * m.transpose();
    let eig = gram.symmetric_eigen();
    let top = eig.eigenvalues.iter().fold(0.0f64, |a, &b| a.max(b));
    let mut r = 0;
    let mut missing = Vec::new();
    for (k, &lam) in eig.eigenvalues.iter().enumerate() {
        if lam > 1e-18 * top.max(1e-300) && lam > 1e-24 {
            r += 1;
        } else {
            missing.push(eig.eigenvectors.column(k).into_owned());
        }
    }
    (r, missing)
}

fn leading_eigenvector(p: &DMatrix<f64>) -> Result<DVector<f64>, String> {
    let n = p.nrows();
    let schur = Schur::try_new(p.clone(), f64::EPSILON, 10_000).ok_or("no Schur form")?;
    let eigs = schur.complex_eigenvalues();
    let lead = eigs
        .iter()
        .copied()
        .max_by(|a, b| a.norm().total_cmp(&b.norm()))
        .ok_or("empty matrix")?;
    if lead.im.abs() > TOL * lead.norm() {
        return Err("leading eigenvalue is not real".into());
    }
    let shifted = p - DMatrix::identity(n, n) * lead.re;
    let svd = shifted.try_svd(false, true, f64::EPSILON, 10_000).ok_or("no SVD")?;
    let v_t = svd.v_t.ok_or("no right singular vectors")?;
    let (k, _) = svd
        .singular_values
        .iter()
        .enumerate()
        .min_by(|a, b| a.1.total_cmp(b.1))
        .ok_or("empty matrix")?;
    let mut x = v_t.row(k).transpose();
    let len = x.norm();
    let (imax, _) = x.iamax_full();
    if x[imax] < 0.0 {
        x = -x;
    }
    Ok(x / len)
}

/// Builds the symmetric hull of the leading eigenvector of the product
/// over `word` and its images under the family scaled by `1 / lower`.
pub fn jsr_polytope<F: JsrFloat>(
    fam: &MatrixFamily<F>,
    word: &[usize],
    lower: f64,
    max_vertices: usize,
) -> PolytopeOutcome {
    if !(lower > 0.0 && lower.is_finite()) {
        return PolytopeOutcome::Unsuitable("lower bound is not positive".into());
    }
    let n = fam.dim();
    let ms: Vec<DMatrix<f64>> = fam.matrices().iter().map(|a| a.map(|x| x.as_f64() / lower)).collect();
    let p = match fam.product(word) {
        Ok(p) => p.map(|x| x.as_f64()),
        Err(e) => return PolytopeOutcome::Unsuitable(e.to_string()),
    };
    let x = match leading_eigenvector(&p) {
        Ok(x) => x,
        Err(e) => return PolytopeOutcome::Unsuitable(e),
    };
    let mut vertices = vec![x.clone()];
    let mut queue = std::collections::VecDeque::from([x]);
    let as_rows = |vs: &[DVector<f64>]| vs.iter().map(|v| v.iter().copied().collect()).collect();
    loop {
        while let Some(v) = queue.pop_front() {
            for a in &ms {
                let y = a * &v;
                if hull_norm(&vertices, &y) > 1.0 + TOL {
                    if vertices.len() >= max_vertices {
                        queue.push_front(v);
                        return open(&ms, &vertices, &queue, n, as_rows(&vertices));
                    }
                    vertices.push(y.clone());
                    queue.push_back(y);
                }
            }
        }
        let (r, missing) = rank(&vertices, n);
        if r == n {
            return PolytopeOutcome::Closed {
                vertices: as_rows(&vertices),
            };
        }
        let scale = vertices.iter().map(|v| v.norm()).fold(f64::INFINITY, f64::min) * FILL;
        for m in missing.into_iter().take(n - r) {
            let v = m * scale;
            vertices.push(v.clone());
            queue.push_back(v);
        }
    }
}

fn open(
    ms: &[DMatrix<f64>],
    vertices: &[DVector<f64>],
    queue: &std::collections::VecDeque<DVector<f64>>,
    n: usize,
    rows: Vec<Vec<f64>>,
) -> PolytopeOutcome {
    if rank(vertices, n).0 < n {
        return PolytopeOutcome::Open {
            upper: None,
            vertices: rows,
        };
    }
    let mut mu = 1.0 + TOL;
    for v in queue {
        for a in ms {
            mu = f64::max(mu, hull_norm(vertices, &(a * v)));
        }
    }
    PolytopeOutcome::Open {
        upper: mu.is_finite().then_some(mu),
        vertices: rows,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn gauge_of_cross_polytope() {
        let vs = vec![DVector::from_vec(vec![1.0, 0.0]), DVector::from_vec(vec![0.0, 1.0])];
        let y = DVector::from_vec(vec![0.25, -0.5]);
        assert!((hull_norm(&vs, &y) - 0.75).abs() < 1e-12);
        let flat = vec![DVector::from_vec(vec![1.0, 0.0])];
        assert_eq!(hull_norm(&flat, &y), f64::INFINITY);
    }

    #[test]
    fn complex_leading_eigenvalue_is_unsuitable() {
        let fam = MatrixFamily::<f64>::from_rows(&[vec![vec![0.0, -1.0], vec![1.0, 0.0]]]).unwrap();
        assert!(matches!(
            jsr_polytope(&fam, &[0], 1.0, 10),
            PolytopeOutcome::Unsuitable(_)
        ));
    }

    #[test]
    fn cap_gives_norm_bound() {
        let fam = MatrixFamily::<f64>::from_rows(&[
            vec![vec![1.0, 1.0], vec![0.0, 1.0]],
            vec![vec![1.0, 0.0], vec![1.0, 1.0]],
        ])
        .unwrap();
        // the true value is the golden ratio
        let g = (1.0 + 5f64.sqrt()) / 2.0;
        match jsr_polytope(&fam, &[0, 1], g, 30) {
            PolytopeOutcome::Closed { .. } => {}
            PolytopeOutcome::Open { upper, .. } => assert!(upper.is_none_or(|u| u >= 1.0)),
            PolytopeOutcome::Unsuitable(e) => panic!("{e}"),
        }
    }
}
