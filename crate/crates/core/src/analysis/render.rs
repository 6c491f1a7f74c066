use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use super::decay::{FloatOp, Grid, OpSequence, DEFAULT_POINT_CAP};
use crate::error::{Error, Result};
use crate::lattice::{LatticeSet, Point};
use crate::scalar::Scalar;
use crate::scheme::dilation_product;
use crate::scheme::SchemeSet;

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct PointCloud {
    pub dim: usize,
    pub points: Vec<Vec<f64>>,
    /// Optional value per point.
    pub values: Option<Vec<f64>>,
    pub depth: usize,
    /// Operator indices (0-based) used, first applied first.
    pub sequence: Vec<usize>,
    /// Points were drawn at random because the full cloud exceeded the budget.
    pub subsampled: bool,
}

fn round12(x: f64) -> f64 {
    let r = (x * 1e12).round() / 1e12;
    if r == 0.0 {
        0.0
    } else {
        r
    }
}

impl PointCloud {
    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// Coordinates rounded to 1e-12 and points sorted, duplicates removed.
    pub fn canonical(&self) -> PointCloud {
        let mut rows: Vec<(Vec<f64>, Option<f64>)> = self
            .points
            .iter()
            .enumerate()
            .map(|(i, p)| {
                (
                    p.iter().map(|&x| round12(x)).collect(),
                    self.values.as_ref().map(|v| v[i]),
                )
            })
            .collect();
        rows.sort_by(|a, b| {
            a.0.iter()
                .zip(&b.0)
                .map(|(x, y)| x.total_cmp(y))
                .find(|o| o.is_ne())
                .unwrap_or(std::cmp::Ordering::Equal)
        });
        rows.dedup_by(|a, b| a.0 == b.0);
        PointCloud {
            dim: self.dim,
            values: self
                .values
                .as_ref()
                .map(|_| rows.iter().map(|r| r.1.unwrap_or(0.0)).collect()),
            points: rows.into_iter().map(|r| r.0).collect(),
            depth: self.depth,
            sequence: self.sequence.clone(),
            subsampled: self.subsampled,
        }
    }

    /// `x_1,...,x_s[,value]` per line, canonical order, 12 decimals.
    pub fn to_csv(&self) -> String {
        let c = self.canonical();
        let mut out = String::new();
        for (i, p) in c.points.iter().enumerate() {
            let mut fields: Vec<String> = p.iter().map(|x| format!("{x:.12}")).collect();
            if let Some(v) = &c.values {
                fields.push(format!("{:.12e}", v[i]));
            }
            out.push_str(&fields.join(","));
            out.push('\n');
        }
        out
    }

    /// Coordinates only, as hashed by the golden tests.
    pub fn canonical_text(&self) -> String {
        PointCloud {
            values: None,
            ..self.clone()
        }
        .to_csv()
    }

    /// 8-bit raster, white background with black points. `bbox` is
    /// `[xmin, xmax, ymin, ymax]`; one-dimensional clouds use the middle row.
    pub fn raster(&self, width: usize, height: usize, bbox: [f64; 4]) -> Result<Vec<u8>> {
        if self.dim > 2 || width == 0 || height == 0 {
            return Err(Error::DimensionMismatch {
                expected: 2,
                found: self.dim,
            });
        }
        let [x0, x1, y0, y1] = bbox;
        let mut img = vec![255u8; width * height];
        for p in &self.points {
            let fx = (p[0] - x0) / (x1 - x0);
            let fy = if self.dim == 2 { (p[1] - y0) / (y1 - y0) } else { 0.5 };
            if !(0.0..=1.0).contains(&fx) || !(0.0..=1.0).contains(&fy) {
                continue;
            }
            let col = ((fx * width as f64) as usize).min(width - 1);
            let row = (((1.0 - fy) * height as f64) as usize).min(height - 1);
            img[row * width + col] = 0;
        }
        Ok(img)
    }

    pub fn to_pgm(&self, width: usize, height: usize, bbox: [f64; 4]) -> Result<Vec<u8>> {
        let mut out = format!("P5\n{width} {height}\n255\n").into_bytes();
        out.extend(self.raster(width, height, bbox)?);
        Ok(out)
    }

    /// Smallest box containing every point.
    pub fn bbox(&self) -> Option<[f64; 4]> {
        let first = self.points.first()?;
        let mut b = [first[0], first[0], 0.0, 0.0];
        if self.dim > 1 {
            b[2] = first[1];
            b[3] = first[1];
        }
        for p in &self.points {
            b[0] = b[0].min(p[0]);
            b[1] = b[1].max(p[0]);
            if self.dim > 1 {
                b[2] = b[2].min(p[1]);
                b[3] = b[3].max(p[1]);
            }
        }
        Some(b)
    }
}

fn horner(s: &SchemeSet<impl Scalar>, word: &[usize], digits: &[&Point]) -> Result<Point> {
    let mut z = Point::zero(s.dim());
    for (&j, d) in word.iter().zip(digits) {
        let m = &s.op(j).dilation;
        let mut next = Vec::with_capacity(s.dim());
        for i in 0..s.dim() {
            let mut acc = d[i] as i128;
            for k in 0..s.dim() {
                acc += m.entry(i, k) as i128 * z[k] as i128;
            }
            next.push(i64::try_from(acc).map_err(|_| Error::Overflow)?);
        }
        z = Point::new(next);
    }
    Ok(z)
}

/// Truncated attractor `sum_{r<=n} (M_{j_1}^-1 ... M_{j_r}^-1) d_r` over all
/// digit choices, or `budget` random choices when there are more.
pub fn attractor_points<T: Scalar>(
    s: &SchemeSet<T>,
    seq: &OpSequence,
    n: usize,
    budget: usize,
    seed: u64,
) -> Result<PointCloud> {
    if n == 0 {
        return Err(Error::Word("depth must be at least 1".into()));
    }
    seq.check(s.len())?;
    let word = seq.take(0, n);
    let q = dilation_product(s, &word)?;
    let digit_sets: Vec<Vec<&Point>> = word.iter().map(|&j| s.op(j).digits.iter().collect()).collect();
    let total = digit_sets.iter().try_fold(1usize, |a, d| a.checked_mul(d.len()));
    let subsampled = total.is_none_or(|t| t > budget);
    let choose = |mut k: usize| -> Vec<&Point> {
        digit_sets
            .iter()
            .map(|ds| {
                let d = ds[k % ds.len()];
                k /= ds.len();
                d
            })
            .collect()
    };
    let points: Vec<Vec<f64>> = if subsampled {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let picks: Vec<Vec<&Point>> = (0..budget)
            .map(|_| digit_sets.iter().map(|ds| ds[rng.gen_range(0..ds.len())]).collect())
            .collect();
        picks
            .par_iter()
            .map(|ds| horner(s, &word, ds).map(|z| q.solve_f64(&z)))
            .collect::<Result<_>>()?
    } else {
        (0..total.unwrap_or(0))
            .into_par_iter()
            .map(|k| horner(s, &word, &choose(k)).map(|z| q.solve_f64(&z)))
            .collect::<Result<_>>()?
    };
    Ok(PointCloud {
        dim: s.dim(),
        points,
        values: None,
        depth: n,
        sequence: word,
        subsampled,
    }
    .canonical())
}

/// Integer set `Z_n` with `Z_0 = {0}` and `Z_k = M_{w_k} Z_{k-1} + supp a_{w_k}`.
/// The truncated `K_A` set along `word` is `(M_{w_n} ... M_{w_1})^-1 Z_n`.
pub fn ka_lattice<T: Scalar>(s: &SchemeSet<T>, word: &[usize], max_points: usize) -> Result<LatticeSet> {
    let mut z = LatticeSet::singleton(Point::zero(s.dim()));
    for &j in word {
        let op = s.op(j);
        let image = crate::lattice::image_lattice(&op.dilation, &z)?;
        z = crate::lattice::minkowski_sum(&image, &op.mask.support())?;
        if z.len() > max_points {
            return Err(Error::Budget(format!("K_A lattice exceeds {max_points} points")));
        }
    }
    Ok(z)
}

pub type Support = Vec<(Point, f64)>;

/// Support of `S_{j_{r+n-1}} ... S_{j_r} delta` as lattice points with
/// values, plus the word used.
pub fn blf_lattice<T: Scalar>(s: &SchemeSet<T>, seq: &OpSequence, n: usize, r: usize) -> Result<(Vec<usize>, Support)> {
    if n == 0 || r == 0 {
        return Err(Error::Word("iterations and shift must be at least 1".into()));
    }
    seq.check(s.len())?;
    let word = seq.take(r - 1, n);
    let ops = FloatOp::all(s);
    let mut grid = Grid::delta(s.dim());
    for &j in &word {
        grid = grid.step(&ops[j], DEFAULT_POINT_CAP)?;
    }
    let signed = s.ops().iter().any(|op| !op.mask.is_nonnegative());
    let tol = if signed { 1e-13 } else { 0.0 };
    let support = grid.support(tol).into_iter().map(|(p, v)| (Point::new(p), v)).collect();
    Ok((word, support))
}

/// Support of the basic limit function along the sequence shifted by
/// `r - 1`, after `n` refinements, in its natural parameter
/// `M_{j_r}^-1 ... M_{j_{r+n-1}}^-1 alpha`.
pub fn blf_support<T: Scalar>(s: &SchemeSet<T>, seq: &OpSequence, n: usize, r: usize) -> Result<PointCloud> {
    let (word, support) = blf_lattice(s, seq, n, r)?;
    let q = dilation_product(s, &word)?;
    let (points, values): (Vec<_>, Vec<_>) = support.iter().map(|(p, v)| (q.solve_f64(p), *v)).unzip();
    Ok(PointCloud {
        dim: s.dim(),
        points,
        values: Some(values),
        depth: n,
        sequence: word,
        subsampled: false,
    }
    .canonical())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lattice::IntMatrix;
    use crate::scheme::{Mask, SubdivisionOp};
    use crate::Rational;

    fn binary(mask: &[(i64, i64, i64)]) -> SchemeSet<Rational> {
        let mask = Mask::new(
            1,
            mask.iter()
                .map(|&(p, n, d)| (Point::from([p]), Rational::from_ratio(n, d))),
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
    fn binary_expansions() {
        let s = binary(&[(0, 1, 1), (1, 1, 1)]);
        let c = attractor_points(&s, &OpSequence::cyclic(vec![0]).unwrap(), 10, 1 << 20, 0).unwrap();
        assert_eq!(c.len(), 1024);
        for (k, p) in c.points.iter().enumerate() {
            assert_eq!(p[0], k as f64 / 1024.0);
        }
        assert!(!c.subsampled);
        let sub = attractor_points(&s, &OpSequence::cyclic(vec![0]).unwrap(), 10, 100, 7).unwrap();
        assert!(sub.subsampled && sub.len() <= 100);
        assert_eq!(
            sub,
            attractor_points(&s, &OpSequence::cyclic(vec![0]).unwrap(), 10, 100, 7).unwrap()
        );
    }

    #[test]
    fn one_step_blf_is_scaled_mask() {
        let s = binary(&[(0, 1, 2), (1, 1, 1), (2, 1, 2)]);
        let c = blf_support(&s, &OpSequence::cyclic(vec![0]).unwrap(), 1, 1).unwrap();
        assert_eq!(c.points, vec![vec![0.0], vec![0.5], vec![1.0]]);
        assert_eq!(c.values, Some(vec![0.5, 1.0, 0.5]));
    }

    #[test]
    fn support_inside_truncated_ka() {
        let s = binary(&[(0, 1, 2), (1, 1, 1), (2, 1, 2)]);
        let seq = OpSequence::cyclic(vec![0]).unwrap();
        let (word, sup) = blf_lattice(&s, &seq, 6, 1).unwrap();
        let ka = ka_lattice(&s, &word, 1 << 20).unwrap();
        assert!(sup.iter().all(|(p, _)| ka.contains(p)));
        // positive mask: equality
        assert_eq!(sup.len(), ka.len());
    }

    #[test]
    fn pgm_header_and_pixels() {
        let c = PointCloud {
            dim: 2,
            points: vec![vec![0.0, 0.0], vec![1.0, 1.0]],
            values: None,
            depth: 1,
            sequence: vec![0],
            subsampled: false,
        };
        let pgm = c.to_pgm(4, 2, [0.0, 1.0, 0.0, 1.0]).unwrap();
        assert!(pgm.starts_with(b"P5\n4 2\n255\n"));
        let px = &pgm[11..];
        assert_eq!(px, &[255, 255, 255, 0, 0, 255, 255, 255]);
    }

    #[test]
    fn canonical_text_is_order_free() {
        let a = PointCloud {
            dim: 1,
            points: vec![vec![0.5], vec![-0.0], vec![0.25 + 1e-15]],
            values: None,
            depth: 1,
            sequence: vec![0],
            subsampled: false,
        };
        assert_eq!(a.canonical_text(), "0.000000000000\n0.250000000000\n0.500000000000\n");
    }
}
