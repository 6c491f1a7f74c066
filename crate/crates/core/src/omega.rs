//! Finite index sets `Omega` whose sequence space is invariant under every
//! transition operator, and the zero-sum subspace over them.

use std::collections::VecDeque;

use rustc_hash::FxHashSet;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::lattice::{LatticeSet, Point};
use crate::scalar::Scalar;
use crate::scheme::{check_assumption_n, check_sum_rules, SchemeSet};

pub const DEFAULT_ROUND_CAP: usize = 10_000;

#[derive(Clone, Debug, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum Provenance {
    /// Fixed point of the preimage iteration started at the seed.
    Algorithmic,
    /// Fixed point re-seeded with lattice paths joining the components of
    /// an earlier fixed point.
    Enlarged {
        joins: usize,
    },
    /// Integer points of the closed 2-norm ball of the given radius.
    Ball {
        radius: f64,
    },
    User,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct OmegaSet {
    pub points: LatticeSet,
    pub provenance: Provenance,
    pub seeded_from: LatticeSet,
}

impl OmegaSet {
    pub fn user(points: LatticeSet) -> Self {
        OmegaSet {
            seeded_from: points.clone(),
            points,
            provenance: Provenance::User,
        }
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }
}

/// Offsets `supp a_j - D_j` per operator.
fn stencil_offsets<T: Scalar>(s: &SchemeSet<T>) -> Vec<Vec<Point>> {
    s.ops()
        .iter()
        .map(|op| {
            let mut v: Vec<Point> = op
                .mask
                .iter()
                .flat_map(|(p, _)| op.digits.iter().map(move |d| p - d))
                .collect();
            v.sort_unstable();
            v.dedup();
            v
        })
        .collect()
}

/// Smallest superset of `seed` closed under
/// `Omega -> Omega ∪ ⋃_j (M_j^-1 (supp a_j + Omega - D_j)) ∩ Z^s`.
pub fn construct_omega_c<T: Scalar>(s: &SchemeSet<T>, seed: &LatticeSet) -> Result<OmegaSet> {
    construct_omega_c_capped(s, seed, DEFAULT_ROUND_CAP)
}

pub fn construct_omega_c_capped<T: Scalar>(s: &SchemeSet<T>, seed: &LatticeSet, round_cap: usize) -> Result<OmegaSet> {
    if seed.dim() != s.dim() {
        return Err(Error::DimensionMismatch {
            expected: s.dim(),
            found: seed.dim(),
        });
    }
    let offsets = stencil_offsets(s);
    let mut seen: FxHashSet<Point> = seed.iter().cloned().collect();
    let mut frontier: Vec<Point> = seed.points().to_vec();
    let mut rounds = 0;
    while !frontier.is_empty() {
        if rounds == round_cap {
            return Err(Error::IterationCap { rounds });
        }
        rounds += 1;
        let mut next = Vec::new();
        for w in &frontier {
            for (op, offs) in s.ops().iter().zip(&offsets) {
                for o in offs {
                    if let Some(alpha) = op.dilation.solve_integral(&(o + w)) {
                        if seen.insert(alpha.clone()) {
                            next.push(alpha);
                        }
                    }
                }
            }
        }
        frontier = next;
    }
    Ok(OmegaSet {
        points: LatticeSet::new(s.dim(), seen)?,
        provenance: Provenance::Algorithmic,
        seeded_from: seed.clone(),
    })
}

/// One application of the set map used by [`construct_omega_c`].
pub fn omega_step<T: Scalar>(s: &SchemeSet<T>, omega: &LatticeSet) -> Result<LatticeSet> {
    let offsets = stencil_offsets(s);
    let mut out: Vec<Point> = omega.points().to_vec();
    for w in omega {
        for (op, offs) in s.ops().iter().zip(&offsets) {
            out.extend(offs.iter().filter_map(|o| op.dilation.solve_integral(&(o + w))));
        }
    }
    LatticeSet::new(omega.dim(), out)
}

/// Radius `(C_a + C_D) / (1 - C_M)` of the invariant ball.
pub fn omega_v_radius<T: Scalar>(s: &SchemeSet<T>) -> Result<f64> {
    let checks = check_assumption_n(s);
    let failing: Vec<String> = checks
        .iter()
        .filter(|c| !c.passes)
        .map(|c| c.op_label.clone())
        .collect();
    if !failing.is_empty() {
        return Err(Error::AssumptionN { labels: failing });
    }
    let c_m = checks.iter().map(|c| c.inverse_norm).fold(0.0, f64::max);
    let c_a = s
        .ops()
        .iter()
        .map(|op| op.mask.support().max_norm2())
        .fold(0.0, f64::max);
    let c_d = s.ops().iter().map(|op| op.digits.max_norm2()).fold(0.0, f64::max);
    Ok((c_a + c_d) / (1.0 - c_m))
}

/// Integer points of the invariant 2-norm ball.
pub fn construct_omega_v<T: Scalar>(s: &SchemeSet<T>) -> Result<OmegaSet> {
    let radius = omega_v_radius(s)?;
    let dim = s.dim();
    let r = radius.floor() as i64;
    let r2 = radius * radius * (1.0 + 1e-12);
    let mut points = Vec::new();
    let mut cur = vec![-r; dim];
    'outer: loop {
        let p = Point::new(cur.iter().copied());
        if (p.norm2_squared() as f64) <= r2 {
            points.push(p);
        }
        for i in (0..dim).rev() {
            if cur[i] < r {
                cur[i] += 1;
                continue 'outer;
            }
            cur[i] = -r;
        }
        break;
    }
    let points = LatticeSet::new(dim, points)?;
    Ok(OmegaSet {
        seeded_from: points.clone(),
        points,
        provenance: Provenance::Ball { radius },
    })
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct InvarianceWitness {
    pub op_label: String,
    pub digit: Point,
    /// Row index outside `Omega`.
    pub alpha: Point,
    /// Column index inside `Omega`.
    pub beta: Point,
}

#[derive(Clone, Debug, Serialize)]
pub struct InvarianceCheck {
    pub invariant: bool,
    pub violations: usize,
    /// At most [`WITNESS_LIMIT`] violations.
    pub witnesses: Vec<InvarianceWitness>,
    /// Outcome of the column-sum criterion, available when every mask is
    /// nonnegative and satisfies the sum rules.
    pub column_sums_one: Option<bool>,
}

pub const WITNESS_LIMIT: usize = 64;

/// Checks `a_j(M_j alpha - beta + d) = 0` for every `beta` in `Omega` and
/// every `alpha` outside it.
pub fn verify_invariance<T: Scalar>(s: &SchemeSet<T>, omega: &LatticeSet) -> InvarianceCheck {
    let mut violations = 0;
    let mut witnesses = Vec::new();
    for op in s.ops() {
        for d in &op.digits {
            for beta in omega {
                for (p, _) in op.mask.iter() {
                    let Some(alpha) = op.dilation.solve_integral(&(&(p + beta) - d)) else {
                        continue;
                    };
                    if !omega.contains(&alpha) {
                        violations += 1;
                        if witnesses.len() < WITNESS_LIMIT {
                            witnesses.push(InvarianceWitness {
                                op_label: op.label.clone(),
                                digit: d.clone(),
                                alpha,
                                beta: beta.clone(),
                            });
                        }
                    }
                }
            }
        }
    }
    let eligible = s
        .ops()
        .iter()
        .all(|op| op.mask.is_nonnegative() && check_sum_rules(op).satisfied);
    InvarianceCheck {
        invariant: violations == 0,
        violations,
        witnesses,
        column_sums_one: eligible.then(|| column_sums_are_one(s, omega)),
    }
}

/// `true` iff every column of every `T_{d,j,Omega}` sums to one.
pub fn column_sums_are_one<T: Scalar>(s: &SchemeSet<T>, omega: &LatticeSet) -> bool {
    s.ops().iter().all(|op| {
        op.digits.iter().all(|d| {
            omega.iter().all(|beta| {
                let sum = op.mask.iter().fold(T::zero(), |acc, (p, v)| {
                    match op.dilation.solve_integral(&(&(p + beta) - d)) {
                        Some(alpha) if omega.contains(&alpha) => acc + v.clone(),
                        _ => acc,
                    }
                });
                (sum - T::one()).is_negligible()
            })
        })
    })
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct DifferenceSpaceReport {
    /// `|Omega| - 1`.
    pub dim_v: usize,
    /// `|Omega| - components`.
    pub dim_v_tilde: usize,
    pub components: usize,
    /// Spanning forest as `(parent, child)` pairs in breadth-first order.
    pub spanning_edges: Vec<(Point, Point)>,
    /// Component number of each point, in the order of `Omega`.
    pub component_of: Vec<usize>,
}

impl DifferenceSpaceReport {
    pub fn is_connected(&self) -> bool {
        self.components <= 1
    }

    pub fn component_members(&self, omega: &LatticeSet, k: usize) -> Vec<Point> {
        omega
            .iter()
            .zip(&self.component_of)
            .filter(|(_, &c)| c == k)
            .map(|(p, _)| p.clone())
            .collect()
    }
}

fn neighbours(p: &Point) -> impl Iterator<Item = Point> + '_ {
    (0..p.dim()).flat_map(move |axis| {
        [-1i64, 1].into_iter().map(move |step| {
            Point::new(
                p.coords()
                    .iter()
                    .enumerate()
                    .map(|(i, &c)| if i == axis { c + step } else { c }),
            )
        })
    })
}

/// Components of the graph on `Omega` with edges between points at
/// l1-distance one, and a breadth-first spanning forest rooted at the
/// lexicographically smallest point of each component.
pub fn difference_space_report(omega: &LatticeSet) -> DifferenceSpaceReport {
    let n = omega.len();
    let mut component_of = vec![usize::MAX; n];
    let mut spanning_edges = Vec::with_capacity(n.saturating_sub(1));
    let mut components = 0;
    for start in 0..n {
        if component_of[start] != usize::MAX {
            continue;
        }
        component_of[start] = components;
        let mut queue = VecDeque::from([start]);
        while let Some(i) = queue.pop_front() {
            let p = &omega.points()[i];
            for q in neighbours(p) {
                if let Some(k) = omega.index_of(&q) {
                    if component_of[k] == usize::MAX {
                        component_of[k] = components;
                        spanning_edges.push((p.clone(), q));
                        queue.push_back(k);
                    }
                }
            }
        }
        components += 1;
    }
    DifferenceSpaceReport {
        dim_v: n.saturating_sub(1),
        dim_v_tilde: n - components,
        components,
        spanning_edges,
        component_of,
    }
}

#[derive(Clone, Debug)]
pub struct SelectPolicy {
    pub seed: Option<LatticeSet>,
    pub max_joins: usize,
    pub allow_ball: bool,
    pub round_cap: usize,
}

impl Default for SelectPolicy {
    fn default() -> Self {
        SelectPolicy {
            seed: None,
            max_joins: 64,
            allow_ball: true,
            round_cap: DEFAULT_ROUND_CAP,
        }
    }
}

/// Axis-monotone l1 path from `p` to `q`, moving along axis 0 first.
pub fn staircase(p: &Point, q: &Point) -> Vec<Point> {
    let mut cur: Vec<i64> = p.coords().to_vec();
    let mut path = vec![p.clone()];
    for axis in 0..p.dim() {
        while cur[axis] != q[axis] {
            cur[axis] += (q[axis] - cur[axis]).signum();
            path.push(Point::new(cur.iter().copied()));
        }
    }
    path
}

/// Closest pair of points from different components, by l1 distance and
/// then lexicographically.
fn closest_pair(omega: &LatticeSet, report: &DifferenceSpaceReport) -> Option<(Point, Point)> {
    let pts = omega.points();
    let mut best: Option<(i64, usize, usize)> = None;
    for i in 0..pts.len() {
        for j in i + 1..pts.len() {
            if report.component_of[i] == report.component_of[j] {
                continue;
            }
            let d = (&pts[i] - &pts[j]).l1_norm();
            if best.is_none_or(|(bd, _, _)| d < bd) {
                best = Some((d, i, j));
            }
        }
    }
    best.map(|(_, i, j)| (pts[i].clone(), pts[j].clone()))
}

/// An invariant set whose lattice graph is connected: the plain fixed point
/// if that already works, otherwise fixed points re-seeded with joining
/// staircases, and finally the invariant ball.
pub fn select_omega<T: Scalar>(s: &SchemeSet<T>, policy: &SelectPolicy) -> Result<OmegaSet> {
    let seed = policy
        .seed
        .clone()
        .unwrap_or_else(|| LatticeSet::singleton(Point::zero(s.dim())));
    let mut omega = construct_omega_c_capped(s, &seed, policy.round_cap)?;
    for joins in 0..=policy.max_joins {
        let report = difference_space_report(&omega.points);
        if report.is_connected() {
            if joins > 0 {
                omega.provenance = Provenance::Enlarged { joins };
                omega.seeded_from = seed;
            }
            return Ok(omega);
        }
        if joins == policy.max_joins {
            break;
        }
        let (p, q) = closest_pair(&omega.points, &report).expect("at least two components");
        let path = LatticeSet::new(s.dim(), staircase(&p, &q))?;
        let reseed = omega.points.union(&path)?;
        omega = construct_omega_c_capped(s, &reseed, policy.round_cap)?;
    }
    if policy.allow_ball {
        construct_omega_v(s)
    } else {
        Err(Error::Disconnected {
            components: difference_space_report(&omega.points).components,
        })
    }
}
