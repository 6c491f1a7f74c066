//! End-to-end convergence analysis plus the numeric experiments built on
//! the same data: difference decay, attractor and limit-function supports.

mod decay;
mod render;

pub use decay::{difference_decay, DecayRow, OpSequence};
pub use render::{attractor_points, blf_lattice, blf_support, ka_lattice, PointCloud};

use serde::Serialize;

use crate::error::{Error, Result};
use crate::jsr::{jsr_estimate, JsrBudget, JsrEstimate};
use crate::matrix::Matrix;
use crate::omega::{difference_space_report, select_omega, DifferenceSpaceReport, OmegaSet, SelectPolicy};
use crate::scalar::Scalar;
use crate::scheme::{
    assumption_n_power, check_assumption_n, check_jointly_expanding, check_sum_rules, power_scheme_set,
    ExpansionReport, ExpansionVerdict, NormCheck, SchemeSet, DEFAULT_POWER_CAP,
};
use crate::transition::{build_transition_matrices, restrict_to_difference_space, RestrictedFamily, TransitionMatrix};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Verdict {
    Convergent,
    NotConvergent,
    Inconclusive,
}

#[derive(Clone, Debug)]
pub struct Budget {
    pub jsr: JsrBudget,
    /// Product length for the joint expansion test.
    pub expansion_depth: usize,
    /// Largest power tried when Assumption N fails.
    pub max_power: usize,
    pub power_cap: usize,
    pub omega: SelectPolicy,
    /// Roots of unity of order up to this are tested exactly when the
    /// lower bound is numerically one.
    pub unit_check_power: usize,
}

impl Default for Budget {
    fn default() -> Self {
        Budget {
            jsr: JsrBudget::default(),
            expansion_depth: 4,
            max_power: 4,
            power_cap: DEFAULT_POWER_CAP,
            omega: SelectPolicy::default(),
            unit_check_power: 6,
        }
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct TrailEntry {
    pub stage: &'static str,
    pub passed: bool,
    pub detail: String,
}

#[derive(Clone, Debug, Serialize)]
pub struct Assumptions {
    pub sum_rules: bool,
    pub joint_expansion: ExpansionReport,
    pub assumption_n: Vec<NormCheck>,
    /// Power of the scheme set analysed instead, when Assumption N forced it.
    pub power_fallback: Option<usize>,
}

#[derive(Clone, Debug, Serialize)]
pub struct ConvergenceReport {
    pub verdict: Verdict,
    pub analysed_power: usize,
    pub omega_used: Option<OmegaSet>,
    pub difference_space: Option<DifferenceSpaceReport>,
    pub restricted_dimension: Option<usize>,
    pub family_size: usize,
    pub jsr: Option<JsrEstimate>,
    pub assumptions: Assumptions,
    pub trail: Vec<TrailEntry>,
    pub warnings: Vec<String>,
}

impl ConvergenceReport {
    fn push(&mut self, stage: &'static str, passed: bool, detail: impl Into<String>) {
        self.trail.push(TrailEntry {
            stage,
            passed,
            detail: detail.into(),
        });
    }
}

/// Everything the pipeline builds before the spectral stage.
pub struct Pipeline<T: Scalar> {
    pub scheme: SchemeSet<T>,
    pub power: usize,
    pub omega: OmegaSet,
    pub difference_space: DifferenceSpaceReport,
    pub transitions: Vec<TransitionMatrix<T>>,
    pub restricted: RestrictedFamily<T>,
}

/// Invariant set, transition matrices and their restriction, falling back
/// to a power of the set when the invariant ball would need Assumption N.
pub fn build_pipeline<T: Scalar>(s: &SchemeSet<T>, budget: &Budget) -> Result<Pipeline<T>> {
    let (scheme, power, omega) = match select_omega(s, &budget.omega) {
        Ok(o) => (s.clone(), 1, o),
        Err(Error::AssumptionN { labels }) => {
            let n = assumption_n_power(s, budget.max_power, budget.power_cap)
                .ok_or(Error::AssumptionN { labels })
                .map_err(|e| e.at("omega"))?;
            let p = power_scheme_set(s, n, budget.power_cap).map_err(|e| e.at("power"))?;
            let o = select_omega(&p, &budget.omega).map_err(|e| e.at("omega"))?;
            (p, n, o)
        }
        Err(e) => return Err(e.at("omega")),
    };
    let transitions = build_transition_matrices(&scheme, &omega.points).map_err(|e| e.at("transition"))?;
    let difference_space = difference_space_report(&omega.points);
    let restricted = restrict_to_difference_space(&transitions, &difference_space).map_err(|e| e.at("restriction"))?;
    Ok(Pipeline {
        scheme,
        power,
        omega,
        difference_space,
        transitions,
        restricted,
    })
}

/// Exact test for an eigenvalue on the unit circle of order `<= max_k` in
/// the product over `word`.
fn has_root_of_unity<T: Scalar>(r: &RestrictedFamily<T>, word: &[usize], max_k: usize) -> Result<Option<usize>> {
    let mut p = Matrix::identity(r.dim());
    for &i in word {
        p = p.matmul(&r.matrices[i])?;
    }
    let id = Matrix::identity(r.dim());
    let mut pk = p.clone();
    for k in 1..=max_k {
        if pk.sub(&id)?.determinant()?.is_zero() {
            return Ok(Some(k));
        }
        pk = pk.matmul(&p)?;
    }
    Ok(None)
}

/// Full convergence test. Fails only on malformed input or when the
/// dilations are certified not to be jointly expanding.
pub fn analyze_convergence<T: Scalar>(s: &SchemeSet<T>, budget: &Budget) -> Result<ConvergenceReport> {
    let sum_reports: Vec<_> = s.ops().iter().map(check_sum_rules).collect();
    let sum_rules = sum_reports.iter().all(|r| r.satisfied);
    let expansion = check_jointly_expanding(s, budget.expansion_depth);
    let mut report = ConvergenceReport {
        verdict: Verdict::Inconclusive,
        analysed_power: 1,
        omega_used: None,
        difference_space: None,
        restricted_dimension: None,
        family_size: 0,
        jsr: None,
        assumptions: Assumptions {
            sum_rules,
            joint_expansion: expansion.clone(),
            assumption_n: check_assumption_n(s),
            power_fallback: None,
        },
        trail: Vec::new(),
        warnings: s.warnings(),
    };
    let failed: Vec<&str> = sum_reports
        .iter()
        .filter(|r| !r.satisfied)
        .map(|r| r.op_label.as_str())
        .collect();
    report.push(
        "sum-rules",
        sum_rules,
        if sum_rules {
            "every operator reproduces constants".to_string()
        } else {
            format!("violated by {}", failed.join(", "))
        },
    );
    if !sum_rules {
        report.verdict = Verdict::NotConvergent;
        return Ok(report);
    }
    match expansion.verdict {
        ExpansionVerdict::CertifiedYes => report.push(
            "joint-expansion",
            true,
            format!("certified at product length {}", expansion.depth.unwrap_or(0)),
        ),
        ExpansionVerdict::CertifiedNo => {
            let witness = expansion.witness.clone().unwrap_or_default();
            return Err(Error::NotJointlyExpanding { witness }.at("joint-expansion"));
        }
        ExpansionVerdict::Inconclusive => {
            report.push("joint-expansion", false, "not decided within the product budget");
            report.warnings.push("joint expansion could not be certified".into());
        }
    }
    let pipe = build_pipeline(s, budget)?;
    if pipe.power > 1 {
        report.assumptions.power_fallback = Some(pipe.power);
        report.warnings.push(format!(
            "Assumption N fails; analysing the set of {}-fold products",
            pipe.power
        ));
    }
    report.analysed_power = pipe.power;
    report.push(
        "omega",
        true,
        format!("{} points, {:?}", pipe.omega.len(), pipe.omega.provenance),
    );
    report.push(
        "transition",
        true,
        format!(
            "{} matrices of size {}, column sums one: {}",
            pipe.transitions.len(),
            pipe.omega.len(),
            pipe.transitions.iter().all(TransitionMatrix::columns_sum_to_one)
        ),
    );
    let verified = pipe.restricted.verify(&pipe.transitions);
    report.push(
        "restriction",
        verified,
        format!("difference space of dimension {}", pipe.restricted.dim()),
    );
    report.restricted_dimension = Some(pipe.restricted.dim());
    report.family_size = pipe.restricted.len();
    if pipe.restricted.dim() == 0 {
        report
            .warnings
            .push("difference space is trivial; the limit need not be continuous".into());
    }
    let fam = pipe.restricted.to_family::<f64>().map_err(|e| e.at("jsr"))?;
    let mut est = jsr_estimate(&fam, &budget.jsr);
    if T::EXACT && pipe.restricted.dim() > 0 && est.lower > 1.0 - 1e-6 && est.lower <= 1.0 + 1e-6 {
        if let Some(k) = has_root_of_unity(&pipe.restricted, &est.word, budget.unit_check_power)? {
            est.lower = est.lower.max(1.0);
            est.upper = est.upper.max(est.lower);
            est.lower_exact = true;
            report.push(
                "unit-eigenvalue",
                true,
                format!("P^{k} - I is singular in exact arithmetic"),
            );
        }
    }
    report.verdict = if est.upper < 1.0 {
        Verdict::Convergent
    } else if est.lower >= 1.0 {
        Verdict::NotConvergent
    } else {
        Verdict::Inconclusive
    };
    report.push(
        "jsr",
        report.verdict == Verdict::Convergent,
        format!("{:.12} <= rho <= {:.12} ({:?})", est.lower, est.upper, est.status),
    );
    report.difference_space = Some(pipe.difference_space);
    report.omega_used = Some(pipe.omega);
    report.jsr = Some(est);
    Ok(report)
}
