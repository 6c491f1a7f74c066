use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{lower::spectral_radius, normalised_radius, MatrixFamily};
use crate::scalar::JsrFloat;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum NormChoice {
    Inf,
    One,
    Two,
    /// Spectral norm after a change of basis from a regularised
    /// Lyapunov-type fixed point `X = I + gamma^-2 sum A_i^T X A_i`.
    Ellipsoidal,
}

impl std::str::FromStr for NormChoice {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "inf" => Ok(NormChoice::Inf),
            "one" | "1" => Ok(NormChoice::One),
            "two" | "2" => Ok(NormChoice::Two),
            "ellipsoidal" | "lyapunov" => Ok(NormChoice::Ellipsoidal),
            other => Err(format!("unknown norm {other:?}")),
        }
    }
}

#[derive(Clone, Debug)]
pub struct UpperOptions {
    pub max_depth: usize,
    pub norm: NormChoice,
    pub max_nodes: usize,
    /// Nodes whose bound is within `lower * (1 + delta)` are pruned.
    pub delta: f64,
    pub lower_hint: Option<f64>,
}

impl Default for UpperOptions {
    fn default() -> Self {
        UpperOptions {
            max_depth: 10,
            norm: NormChoice::Inf,
            max_nodes: 20_000,
            delta: 1e-3,
            lower_hint: None,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct UpperBound<F> {
    pub value: F,
    /// Depth at which `value` was reached.
    pub depth: usize,
    pub nodes: usize,
    /// All branches were pruned before the depth or node limit.
    pub complete: bool,
}

fn operator_norm<F: JsrFloat>(m: &DMatrix<F>, norm: NormChoice) -> F {
    let n = m.nrows();
    match norm {
        NormChoice::Inf => (0..n)
            .map(|i| m.row(i).iter().fold(F::zero(), |a, x| a + x.abs()))
            .fold(F::zero(), |a, b| a.max(b)),
        NormChoice::One => (0..n)
            .map(|j| m.column(j).iter().fold(F::zero(), |a, x| a + x.abs()))
            .fold(F::zero(), |a, b| a.max(b)),
        NormChoice::Two | NormChoice::Ellipsoidal => {
            match m.clone().try_svd(false, false, F::default_epsilon(), 10_000) {
                Some(svd) => svd.singular_values.iter().fold(F::zero(), |a, &b| a.max(b)),
                // Frobenius norm is a valid fallback
                None => m.norm(),
            }
        }
    }
}

fn apply_phi<F: JsrFloat>(fam: &MatrixFamily<F>, x: &DMatrix<F>) -> DMatrix<F> {
    let n = fam.dim();
    let mut out = DMatrix::zeros(n, n);
    for a in fam.matrices() {
        out += a.transpose() * x * a;
    }
    out
}

/// The family conjugated into the basis where the ellipsoidal norm becomes
/// the spectral norm: `B_i = L^T A_i L^-T` with `X = L L^T`.
pub fn ellipsoidal_transform<F: JsrFloat>(fam: &MatrixFamily<F>) -> MatrixFamily<F> {
    let n = fam.dim();
    let ident = DMatrix::<F>::identity(n, n);
    // dominant eigenvalue of X -> sum A^T X A on the PSD cone
    let mut x = ident.clone();
    let mut sigma = F::zero();
    for _ in 0..200 {
        let y = apply_phi(fam, &x);
        let ny = y.norm();
        if ny == F::zero() {
            sigma = F::zero();
            break;
        }
        sigma = ny / x.norm();
        x = y / ny;
    }
    if sigma <= F::lit(1e-300) {
        return fam.clone();
    }
    let inv_gamma2 = F::one() / (F::lit(1.01) * sigma);
    let mut x = ident.clone();
    for _ in 0..1000 {
        let next = &ident + apply_phi(fam, &x) * inv_gamma2;
        let change = (&next - &x).norm();
        let scale = next.norm();
        if !scale.is_finite() || scale > F::lit(1e12) {
            break;
        }
        x = next;
        if change <= F::lit(1e-12) * scale {
            break;
        }
    }
    x = (&x + x.transpose()) * F::lit(0.5);
    let Some(chol) = x.cholesky() else {
        return fam.clone();
    };
    let l = chol.l();
    let lt = l.transpose();
    let Some(lt_inv) = lt.clone().try_inverse() else {
        return fam.clone();
    };
    let ms = fam.matrices().iter().map(|a| &lt * a * &lt_inv).collect();
    MatrixFamily::with_labels(ms, fam.labels().to_vec()).expect("same shape")
}

struct Node<F: JsrFloat> {
    product: DMatrix<F>,
    bound: F,
}

/// Branch-and-bound on `min_{i <= k} ||prefix_i||^(1/i)` over words of
/// length `k`. Every word either has a pruned prefix or is live, so the
/// largest bound among pruned and live nodes bounds the joint spectral
/// radius at each depth. Returns the best such bound over the explored depths.
pub fn jsr_upper_bound<F: JsrFloat>(fam: &MatrixFamily<F>, opts: &UpperOptions) -> UpperBound<F> {
    if fam.dim() == 0 {
        return UpperBound {
            value: F::zero(),
            depth: 0,
            nodes: 0,
            complete: true,
        };
    }
    let transformed;
    let fam = if opts.norm == NormChoice::Ellipsoidal {
        transformed = ellipsoidal_transform(fam);
        &transformed
    } else {
        fam
    };
    let letters_max = fam
        .matrices()
        .iter()
        .map(spectral_radius)
        .fold(F::zero(), |a, b| a.max(b));
    let lower = opts.lower_hint.map_or(letters_max, |h| letters_max.max(F::lit(h)));
    let threshold = lower * F::lit(1.0 + opts.delta);
    let mut level: Vec<Node<F>> = fam
        .matrices()
        .iter()
        .map(|a| Node {
            product: a.clone(),
            bound: operator_norm(a, opts.norm),
        })
        .collect();
    let mut nodes = level.len();
    let mut best = F::lit(f64::INFINITY);
    let mut best_depth = 1;
    let mut complete = false;
    let mut pruned_max = F::zero();
    for depth in 1..=opts.max_depth.max(1) {
        level.retain(|n| {
            if n.bound > threshold {
                true
            } else {
                pruned_max = pruned_max.max(n.bound);
                false
            }
        });
        let live_max = level.iter().fold(F::zero(), |a, n| a.max(n.bound));
        let current = pruned_max.max(live_max);
        if current < best {
            best = current;
            best_depth = depth;
        }
        if level.is_empty() {
            complete = true;
            break;
        }
        if depth == opts.max_depth || nodes + level.len() * fam.len() > opts.max_nodes {
            break;
        }
        let k = depth + 1;
        level = level
            .par_iter()
            .flat_map_iter(|node| {
                fam.matrices().iter().map(move |a| {
                    let product = &node.product * a;
                    let own = normalised_radius(operator_norm(&product, opts.norm), k);
                    Node {
                        bound: node.bound.min(own),
                        product,
                    }
                })
            })
            .collect();
        nodes += level.len();
    }
    UpperBound {
        value: best,
        depth: best_depth,
        nodes,
        complete,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ellipsoidal_norm_bounds_each_member() {
        let fam = MatrixFamily::<f64>::from_rows(&[
            vec![vec![0.9, 1.0], vec![0.0, 0.3]],
            vec![vec![0.3, 0.0], vec![-1.0, 0.8]],
        ])
        .unwrap();
        let t = ellipsoidal_transform(&fam);
        // conjugation keeps spectra
        for (a, b) in fam.matrices().iter().zip(t.matrices()) {
            assert!((spectral_radius(a) - spectral_radius(b)).abs() < 1e-9);
            assert!((a.trace() - b.trace()).abs() < 1e-9);
        }
        let e = jsr_upper_bound(
            &fam,
            &UpperOptions {
                norm: NormChoice::Ellipsoidal,
                max_depth: 1,
                ..UpperOptions::default()
            },
        );
        let i = jsr_upper_bound(
            &fam,
            &UpperOptions {
                norm: NormChoice::Inf,
                max_depth: 1,
                ..UpperOptions::default()
            },
        );
        assert!(e.value < i.value);
    }

    #[test]
    fn pruned_search_completes() {
        let fam = MatrixFamily::<f64>::from_rows(&[vec![vec![0.5, 0.0], vec![0.0, 0.25]]]).unwrap();
        let ub = jsr_upper_bound(&fam, &UpperOptions::default());
        assert!(ub.complete);
        assert_eq!(ub.value, 0.5);
    }

    #[test]
    fn parse_norm_names() {
        assert_eq!("inf".parse::<NormChoice>().unwrap(), NormChoice::Inf);
        assert_eq!("lyapunov".parse::<NormChoice>().unwrap(), NormChoice::Ellipsoidal);
        assert!("max".parse::<NormChoice>().is_err());
    }
}
