use nalgebra::{ComplexField, DMatrix, Schur};
use rayon::prelude::*;

use super::{normalised_radius, MatrixFamily};
use crate::scalar::JsrFloat;

/// Best `rho(P(w))^(1/|w|)` found and the word attaining it.
#[derive(Clone, Debug, PartialEq)]
pub struct LowerBound<F> {
    pub value: F,
    pub word: Vec<usize>,
}

/// Diagonal similarity (powers of two) that evens out row and column norms.
fn balance<F: JsrFloat>(m: &mut DMatrix<F>) {
    let n = m.nrows();
    let two = F::lit(2.0);
    let four = F::lit(4.0);
    for _ in 0..100 {
        let mut done = true;
        for i in 0..n {
            let mut c = F::zero();
            let mut r = F::zero();
            for j in 0..n {
                if j != i {
                    c += m[(j, i)].abs();
                    r += m[(i, j)].abs();
                }
            }
            if c == F::zero() || r == F::zero() {
                continue;
            }
            let s = c + r;
            let mut f = F::one();
            let mut g = r / two;
            while c < g {
                f *= two;
                c *= four;
            }
            g = r * two;
            while c > g {
                f /= two;
                c /= four;
            }
            if (c + r) / f < F::lit(0.95) * s {
                done = false;
                for j in 0..n {
                    m[(i, j)] /= f;
                    m[(j, i)] *= f;
                }
            }
        }
        if done {
            break;
        }
    }
}

/// Largest eigenvalue modulus, from a real Schur form of the balanced
/// matrix. Returns zero if the QR iteration fails to converge.
pub fn spectral_radius<F: JsrFloat>(m: &DMatrix<F>) -> F {
    match m.nrows() {
        0 => return F::zero(),
        1 => return m[(0, 0)].abs(),
        _ => {}
    }
    let mut b = m.clone();
    balance(&mut b);
    match Schur::try_new(b, F::default_epsilon(), 10_000) {
        Some(s) => s
            .complex_eigenvalues()
            .iter()
            .map(|z| z.modulus())
            .fold(F::zero(), |a, b| a.max(b)),
        None => F::zero(),
    }
}

/// Number of Lyndon words of length `k` over `m` letters.
pub fn lyndon_count(m: usize, k: usize) -> u128 {
    fn mobius(mut n: usize) -> i128 {
        let mut res = 1;
        let mut p = 2;
        while p * p <= n {
            if n.is_multiple_of(p) {
                n /= p;
                if n.is_multiple_of(p) {
                    return 0;
                }
                res = -res;
            }
            p += 1;
        }
        if n > 1 {
            res = -res;
        }
        res
    }
    let mut total: i128 = 0;
    for d in 1..=k {
        if k.is_multiple_of(d) {
            let p = (m as i128).checked_pow((k / d) as u32).unwrap_or(i128::MAX / 4);
            total += mobius(d) * p;
        }
    }
    (total / k as i128).max(0) as u128
}

fn effective_length(m: usize, max_len: usize, max_products: usize) -> usize {
    let mut used: u128 = 0;
    let mut len = 0;
    for k in 1..=max_len.max(1) {
        used = used.saturating_add(lyndon_count(m, k));
        if k > 1 && used > max_products as u128 {
            break;
        }
        len = k;
    }
    len
}

struct Best<F> {
    value: F,
    word: Vec<usize>,
}

impl<F: JsrFloat> Best<F> {
    fn offer(&mut self, value: F, word: &[usize]) {
        let tol = F::lit(1e-12) * self.value.abs();
        let better = value > self.value + tol
            || ((value - self.value).abs() <= tol && (word.len(), word) < (self.word.len(), self.word.as_slice()));
        if better || self.word.is_empty() {
            self.value = value;
            self.word = word.to_vec();
        }
    }
}

fn visit<F: JsrFloat>(
    fam: &MatrixFamily<F>,
    max_len: usize,
    word: &mut Vec<usize>,
    p: usize,
    product: &DMatrix<F>,
    best: &mut Best<F>,
) {
    let t = word.len();
    if p == t {
        let v = normalised_radius(spectral_radius(product), t);
        best.offer(v, word);
    }
    if t == max_len {
        return;
    }
    let base = word[t - p];
    for letter in base..fam.len() {
        let next_p = if letter == base { p } else { t + 1 };
        let next = product * &fam.matrices()[letter];
        word.push(letter);
        visit(fam, max_len, word, next_p, &next, best);
        word.pop();
    }
}

/// Maximises `rho(P(w))^(1/|w|)` over Lyndon words `w` (one representative
/// per cyclic class). The length is reduced below `max_len` when the number
/// of words would exceed `max_products`. Ties within a relative `1e-12`
/// go to the shorter, then lexicographically smaller word.
pub fn jsr_lower_bound<F: JsrFloat>(fam: &MatrixFamily<F>, max_len: usize, max_products: usize) -> LowerBound<F> {
    let len = effective_length(fam.len(), max_len, max_products);
    let per_letter: Vec<Best<F>> = (0..fam.len())
        .into_par_iter()
        .map(|a| {
            let mut best = Best {
                value: F::zero(),
                word: Vec::new(),
            };
            let mut word = vec![a];
            visit(fam, len, &mut word, 1, &fam.matrices()[a], &mut best);
            best
        })
        .collect();
    let mut best = Best {
        value: F::zero(),
        word: Vec::new(),
    };
    for b in per_letter {
        best.offer(b.value, &b.word);
    }
    LowerBound {
        value: best.value,
        word: best.word,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn lyndon_counts() {
        assert_eq!(
            (1..=6).map(|k| lyndon_count(2, k)).collect::<Vec<_>>(),
            vec![2, 1, 2, 3, 6, 9]
        );
        assert_eq!(lyndon_count(6, 2), 15);
    }

    #[test]
    fn visits_each_lyndon_word_once() {
        let fam = MatrixFamily::<f64>::new(vec![DMatrix::identity(1, 1); 3]).unwrap();
        struct Count(usize);
        fn walk(fam: &MatrixFamily<f64>, max: usize, word: &mut Vec<usize>, p: usize, c: &mut Count) {
            if p == word.len() {
                c.0 += 1;
            }
            if word.len() == max {
                return;
            }
            let base = word[word.len() - p];
            for l in base..fam.len() {
                let np = if l == base { p } else { word.len() + 1 };
                word.push(l);
                walk(fam, max, word, np, c);
                word.pop();
            }
        }
        let mut c = Count(0);
        for a in 0..3 {
            walk(&fam, 5, &mut vec![a], 1, &mut c);
        }
        assert_eq!(c.0 as u128, (1..=5).map(|k| lyndon_count(3, k)).sum::<u128>());
    }

    #[test]
    fn balanced_radius_of_badly_scaled_matrix() {
        let m = DMatrix::from_row_slice(2, 2, &[1.0, 1e8, 1e-8, 1.0]);
        assert!((spectral_radius(&m) - 2.0).abs() < 1e-12);
        let rot = DMatrix::from_row_slice(2, 2, &[0.0, -1.0, 1.0, 0.0]);
        assert!((spectral_radius(&rot) - 1.0).abs() < 1e-14);
    }

    #[test]
    fn finds_product_that_beats_letters() {
        // each letter is nilpotent, the product AB is not
        let a = DMatrix::from_row_slice(2, 2, &[0.0, 1.0, 0.0, 0.0]);
        let b = DMatrix::from_row_slice(2, 2, &[0.0, 0.0, 1.0, 0.0]);
        let fam = MatrixFamily::new(vec![a, b]).unwrap();
        let lb = jsr_lower_bound(&fam, 4, 1000);
        assert_eq!(lb.word, vec![0, 1]);
        assert!((lb.value - 1.0).abs() < 1e-14);
    }
}
