//! Analysis of observed SMART data: inverse-probability weights, weighted AI
//! means, plug-in design estimates, and the non-inferiority and TOST
//! equivalence z-tests.

use serde::{Deserialize, Deserializer, Serialize, Serializer};
use std::fmt;

use crate::design::{AiPair, Cell, CellMeans, EmbeddedAi, RandomizationProbs, SmartDesign, Stage1, Stage2, Tactic};
use crate::error::{check_finite, check_open_unit, Error, Result};
use crate::normal::{cdf, upper_critical, Probability};

/// Below this many participants some cells tend to be nearly empty.
pub const SMALL_SAMPLE_WARNING: usize = 80;

/// One participant's observed trajectory `(T1, R, T2, Y)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialRecord {
    pub id: String,
    pub stage1: Stage1,
    #[serde(serialize_with = "ser_flag", deserialize_with = "de_flag")]
    pub response: bool,
    pub stage2: Stage2,
    pub outcome: f64,
}

fn ser_flag<S: Serializer>(v: &bool, s: S) -> std::result::Result<S::Ok, S::Error> {
    s.serialize_u8(u8::from(*v))
}

fn de_flag<'de, D: Deserializer<'de>>(d: D) -> std::result::Result<bool, D::Error> {
    #[derive(Deserialize)]
    #[serde(untagged)]
    enum Flag {
        Int(u64),
        Bool(bool),
    }
    match Flag::deserialize(d)? {
        Flag::Int(0) | Flag::Bool(false) => Ok(false),
        Flag::Int(1) | Flag::Bool(true) => Ok(true),
        Flag::Int(n) => Err(serde::de::Error::custom(format!("response must be 0 or 1, got {n}"))),
    }
}

impl TrialRecord {
    /// Checks the structural invariants, returning a short reason on failure.
    pub fn check(&self) -> std::result::Result<Cell, &'static str> {
        if !self.outcome.is_finite() {
            return Err("outcome must be finite");
        }
        if self.response {
            if self.stage2 != Stage2::from(self.stage1) {
                return Err("responder stage2 must equal stage1");
            }
        } else if self.stage2.tactic().is_none() {
            return Err("non-responder stage2 must be m or v");
        }
        Ok(Cell::from_stages(self.stage1, self.stage2).expect("checked above"))
    }

    pub fn validate(&self) -> Result<Cell> {
        self.check().map_err(|reason| Error::InvalidRecord {
            id: self.id.clone(),
            reason: reason.to_string(),
        })
    }
}

/// `1 / (π_{T1} · π_{T1,T2}^{1−R})`.
pub fn ipw_weight(record: &TrialRecord, probs: &RandomizationProbs) -> Result<f64> {
    let cell = record.validate()?;
    Ok(cell_weight(cell, probs))
}

pub(crate) fn cell_weight(cell: Cell, probs: &RandomizationProbs) -> f64 {
    let p1 = probs.stage1(cell.stage1());
    match cell.stage2().tactic() {
        None => 1.0 / p1,
        Some(t) => 1.0 / (p1 * probs.tactic(cell.stage1(), t)),
    }
}

/// Per-cell counts, means and centered sums of squares: everything the
/// estimators need from a data set. Built either from records or directly
/// from simulated draws.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct CellSummary {
    n: [u64; 6],
    mean: [f64; 6],
    m2: [f64; 6],
}

impl CellSummary {
    pub fn new() -> Self {
        Self::default()
    }

    /// Adds one outcome (Welford update).
    pub fn push(&mut self, cell: Cell, y: f64) {
        let k = cell.index();
        self.n[k] += 1;
        let d = y - self.mean[k];
        self.mean[k] += d / self.n[k] as f64;
        self.m2[k] += d * (y - self.mean[k]);
    }

    pub fn from_records(records: &[TrialRecord]) -> Result<Self> {
        let mut s = Self::new();
        for r in records {
            s.push(r.validate()?, r.outcome);
        }
        Ok(s)
    }

    pub fn count(&self, cell: Cell) -> u64 {
        self.n[cell.index()]
    }

    pub fn total(&self) -> u64 {
        self.n.iter().sum()
    }

    pub fn mean(&self, cell: Cell) -> Option<f64> {
        (self.count(cell) > 0).then(|| self.mean[cell.index()])
    }

    /// `(Σ W Y, Σ W)` over participants consistent with `ai`.
    fn weighted(&self, ai: EmbeddedAi, probs: &RandomizationProbs) -> Result<(f64, f64)> {
        let cells = [ai.responder_cell(), ai.nonresponder_cell()];
        if cells.iter().all(|&c| self.count(c) == 0) {
            return Err(Error::Positivity(cells[0]));
        }
        Ok(cells.iter().fold((0.0, 0.0), |(wy, w), &c| {
            let wn = cell_weight(c, probs) * self.count(c) as f64;
            (wy + wn * self.mean[c.index()], w + wn)
        }))
    }

    /// Weighted mean `Σ W Y / Σ W` of an embedded AI.
    pub fn ai_mean(&self, ai: EmbeddedAi, probs: &RandomizationProbs) -> Result<f64> {
        let (wy, w) = self.weighted(ai, probs)?;
        Ok(wy / w)
    }

    /// Horvitz-Thompson form `(1/N) Σ W Y`.
    pub fn ai_mean_ht(&self, ai: EmbeddedAi, probs: &RandomizationProbs) -> Result<f64> {
        let (wy, _) = self.weighted(ai, probs)?;
        Ok(wy / self.total() as f64)
    }

    /// Observed randomization fractions.
    pub fn empirical_probs(&self) -> Result<RandomizationProbs> {
        let c = |cell| self.count(cell) as f64;
        let n_a = c(Cell::AA) + c(Cell::AM) + c(Cell::AV);
        let n_ac = c(Cell::AcAc) + c(Cell::AcM) + c(Cell::AcV);
        let frac = |num: f64, den: f64, name| {
            if den == 0.0 {
                Err(Error::InsufficientData(format!("cannot estimate {name} from zero participants")))
            } else {
                check_open_unit(name, num / den)
            }
        };
        RandomizationProbs::new(
            frac(n_a, n_a + n_ac, "pi_a")?,
            frac(c(Cell::AV), c(Cell::AM) + c(Cell::AV), "pi_a_v")?,
            frac(c(Cell::AcV), c(Cell::AcM) + c(Cell::AcV), "pi_ac_v")?,
        )
    }

    /// Plug-in design: responder proportions, cell means, and the pooled
    /// within-cell variance weighted by degrees of freedom.
    pub fn design(&self, probs: &RandomizationProbs) -> Result<SmartDesign> {
        if let Some(&cell) = Cell::ALL.iter().find(|&&c| self.count(c) == 0) {
            return Err(Error::Positivity(cell));
        }
        let df = self.total() - 6;
        if df == 0 {
            return Err(Error::InsufficientData(
                "pooled variance needs at least one cell with two participants".into(),
            ));
        }
        let sigma2 = self.m2.iter().sum::<f64>() / df as f64;
        if !(sigma2 > 0.0) {
            return Err(Error::InsufficientData("pooled within-cell variance is zero".into()));
        }
        let gamma = |s: Stage1| {
            let r = self.count(Cell::responder(s)) as f64;
            let nr: u64 = Tactic::ALL.iter().map(|&t| self.count(Cell::nonresponder(s, t))).sum();
            r / (r + nr as f64)
        };
        SmartDesign::new(
            CellMeans::from_fn(|c| self.mean[c.index()]),
            sigma2.sqrt(),
            gamma(Stage1::A),
            gamma(Stage1::Ac),
            *probs,
        )
    }

    fn estimates(&self, pair: AiPair, probs: &RandomizationProbs) -> Result<Estimates> {
        let design = self.design(probs)?;
        let n = self.total() as usize;
        let mut warnings = design.warnings();
        if n < SMALL_SAMPLE_WARNING {
            warnings.push(format!(
                "only {n} participants; normal approximation is unreliable below {SMALL_SAMPLE_WARNING}"
            ));
        }
        Ok(Estimates {
            n,
            mean_first: self.ai_mean(pair.control(), probs)?,
            mean_second: self.ai_mean(pair.candidate(), probs)?,
            variance: design.diff_variance(pair, n as u64)?,
            warnings,
        })
    }

    /// Non-inferiority of the new AI: `H0: μ_control − μ_new ≥ θ`. A margin
    /// of zero gives the one-sided superiority test.
    pub fn ni_test(&self, pair: AiPair, theta: f64, alpha: Probability, probs: &RandomizationProbs) -> Result<TestReport> {
        check_finite("theta", theta)?;
        if theta < 0.0 {
            return Err(Error::OutOfRange {
                name: "theta",
                value: theta,
                range: "[0, inf)",
            });
        }
        let a = check_alpha(alpha)?;
        let e = self.estimates(pair, probs)?;
        let out = tost(e.mean_first - e.mean_second, e.variance, theta, a);
        Ok(TestReport {
            kind: TestKind::NonInferiority,
            pair,
            n: e.n,
            mean_first: e.mean_first,
            mean_second: e.mean_second,
            theta,
            alpha,
            variance: e.variance,
            z_ni: out.z_ni,
            p_ni: Probability::new(out.p_ni)?,
            z_ns: None,
            p_ns: None,
            bf_bound_ni: bf_value(out.p_ni),
            bf_bound_ns: None,
            decision: if out.reject_ni {
                Decision::RejectNull
            } else {
                Decision::FailToReject
            },
            warnings: e.warnings,
        })
    }

    /// TOST equivalence within `(−θ, θ)`: both one-sided tests at level α.
    pub fn equivalence_test(
        &self,
        pair: AiPair,
        theta: f64,
        alpha: Probability,
        probs: &RandomizationProbs,
    ) -> Result<TestReport> {
        check_finite("theta", theta)?;
        if !(theta > 0.0) {
            return Err(Error::OutOfRange {
                name: "theta",
                value: theta,
                range: "(0, inf)",
            });
        }
        let a = check_alpha(alpha)?;
        let e = self.estimates(pair, probs)?;
        let out = tost(e.mean_first - e.mean_second, e.variance, theta, a);
        Ok(TestReport {
            kind: TestKind::Equivalence,
            pair,
            n: e.n,
            mean_first: e.mean_first,
            mean_second: e.mean_second,
            theta,
            alpha,
            variance: e.variance,
            z_ni: out.z_ni,
            p_ni: Probability::new(out.p_ni)?,
            z_ns: Some(out.z_ns),
            p_ns: Some(Probability::new(out.p_ns)?),
            bf_bound_ni: bf_value(out.p_ni),
            bf_bound_ns: bf_value(out.p_ns),
            decision: if out.equivalent() {
                Decision::RejectNull
            } else {
                Decision::FailToReject
            },
            warnings: e.warnings,
        })
    }
}

/// Weighted mean outcome of an embedded AI: `Σ W Y / Σ W` over the records
/// consistent with it.
pub fn estimate_ai_mean(records: &[TrialRecord], ai: EmbeddedAi, probs: &RandomizationProbs) -> Result<f64> {
    CellSummary::from_records(records)?.ai_mean(ai, probs)
}

/// Horvitz-Thompson form `(1/N) Σ W Y`, whose sampling variance under
/// per-participant randomization is exactly `σ_d² / N`.
pub fn estimate_ai_mean_ht(records: &[TrialRecord], ai: EmbeddedAi, probs: &RandomizationProbs) -> Result<f64> {
    CellSummary::from_records(records)?.ai_mean_ht(ai, probs)
}

impl RandomizationProbs {
    /// Observed randomization fractions.
    pub fn empirical(records: &[TrialRecord]) -> Result<Self> {
        CellSummary::from_records(records)?.empirical_probs()
    }
}

/// Plug-in design estimated from records.
pub fn estimate_design(records: &[TrialRecord], probs: &RandomizationProbs) -> Result<SmartDesign> {
    CellSummary::from_records(records)?.design(probs)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TestKind {
    NonInferiority,
    Equivalence,
}

impl fmt::Display for TestKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            TestKind::NonInferiority => "non-inferiority",
            TestKind::Equivalence => "equivalence",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Decision {
    RejectNull,
    FailToReject,
}

impl fmt::Display for Decision {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Decision::RejectNull => "reject null",
            Decision::FailToReject => "fail to reject",
        })
    }
}

/// Outcome of a non-inferiority or equivalence test. `mean_first` belongs
/// to the control AI and `mean_second` to the new AI.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TestReport {
    pub kind: TestKind,
    pub pair: AiPair,
    pub n: usize,
    pub mean_first: f64,
    pub mean_second: f64,
    pub theta: f64,
    pub alpha: Probability,
    /// Plug-in variance of `mean_first − mean_second`.
    pub variance: f64,
    pub z_ni: f64,
    pub p_ni: Probability,
    pub z_ns: Option<f64>,
    pub p_ns: Option<Probability>,
    pub bf_bound_ni: Option<f64>,
    pub bf_bound_ns: Option<f64>,
    pub decision: Decision,
    #[serde(default)]
    pub warnings: Vec<String>,
}

/// Upper bound on the Bayes factor implied by a p-value.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BayesFactorBound {
    pub value: f64,
    /// False when `p > 1/e`, where the bound degenerates to 1.
    pub informative: bool,
}

/// `1 / (−e · p · ln p)` for `p ≤ 1/e`, otherwise 1.
pub fn bf_upper_bound(p: Probability) -> Result<BayesFactorBound> {
    let p = check_open_unit("p", p.value())?;
    if p <= (-1.0f64).exp() {
        Ok(BayesFactorBound {
            value: 1.0 / (-std::f64::consts::E * p * p.ln()),
            informative: true,
        })
    } else {
        Ok(BayesFactorBound {
            value: 1.0,
            informative: false,
        })
    }
}

fn bf_value(p: f64) -> Option<f64> {
    Probability::new(p)
        .ok()
        .and_then(|p| bf_upper_bound(p).ok())
        .map(|b| b.value)
}

/// `(z, p)` of the lower one-sided test of `diff − shift < 0`.
fn lower_tail(diff: f64, shift: f64, variance: f64) -> (f64, f64) {
    let z = standardize(diff - shift, variance);
    (z, cdf(z))
}

fn standardize(num: f64, variance: f64) -> f64 {
    if variance > 0.0 {
        num / variance.sqrt()
    } else if num > 0.0 {
        f64::INFINITY
    } else if num < 0.0 {
        f64::NEG_INFINITY
    } else {
        0.0
    }
}

/// Test statistics for a known difference and variance.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TostOutcome {
    pub z_ni: f64,
    pub p_ni: f64,
    pub z_ns: f64,
    pub p_ns: f64,
    pub reject_ni: bool,
    pub reject_ns: bool,
}

impl TostOutcome {
    pub fn equivalent(&self) -> bool {
        self.reject_ni && self.reject_ns
    }
}

/// Both one-sided tests on `diff = control − new` against margin `θ`.
pub fn tost(diff: f64, variance: f64, theta: f64, alpha: f64) -> TostOutcome {
    let za = upper_critical(alpha);
    let (z_ni, p_ni) = lower_tail(diff, theta, variance);
    let z_ns = standardize(diff + theta, variance);
    TostOutcome {
        z_ni,
        p_ni,
        z_ns,
        p_ns: cdf(-z_ns),
        reject_ni: z_ni < -za,
        reject_ns: z_ns > za,
    }
}

struct Estimates {
    n: usize,
    mean_first: f64,
    mean_second: f64,
    variance: f64,
    warnings: Vec<String>,
}

fn check_alpha(alpha: Probability) -> Result<f64> {
    check_open_unit("alpha", alpha.value())
}

/// Non-inferiority test on records; see [`CellSummary::ni_test`].
pub fn ni_test(
    records: &[TrialRecord],
    pair: AiPair,
    theta: f64,
    alpha: Probability,
    probs: &RandomizationProbs,
) -> Result<TestReport> {
    CellSummary::from_records(records)?.ni_test(pair, theta, alpha, probs)
}

/// Equivalence test on records; see [`CellSummary::equivalence_test`].
pub fn equivalence_test(
    records: &[TrialRecord],
    pair: AiPair,
    theta: f64,
    alpha: Probability,
    probs: &RandomizationProbs,
) -> Result<TestReport> {
    CellSummary::from_records(records)?.equivalence_test(pair, theta, alpha, probs)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn rec(id: &str, s1: Stage1, resp: bool, s2: Stage2, y: f64) -> TrialRecord {
        TrialRecord {
            id: id.into(),
            stage1: s1,
            response: resp,
            stage2: s2,
            outcome: y,
        }
    }

    fn cell_rec(id: usize, cell: Cell, y: f64) -> TrialRecord {
        rec(&format!("p{id}"), cell.stage1(), cell.is_responder(), cell.stage2(), y)
    }

    /// Two participants per cell with outcomes `base ± 1`.
    fn full_data(bases: [f64; 6]) -> Vec<TrialRecord> {
        let mut out = Vec::new();
        for (k, cell) in Cell::ALL.iter().enumerate() {
            out.push(cell_rec(2 * k, *cell, bases[k] - 1.0));
            out.push(cell_rec(2 * k + 1, *cell, bases[k] + 1.0));
        }
        out
    }

    #[test]
    fn weights() {
        let half = RandomizationProbs::default();
        let r = rec("x", Stage1::A, true, Stage2::A, 1.0);
        assert_eq!(ipw_weight(&r, &half).unwrap(), 2.0);
        let nr = rec("y", Stage1::A, false, Stage2::V, 1.0);
        assert_eq!(ipw_weight(&nr, &half).unwrap(), 4.0);
        let p = RandomizationProbs::new(0.25, 0.5, 0.5).unwrap();
        assert_eq!(ipw_weight(&nr, &p).unwrap(), 8.0);
        let bad = rec("z", Stage1::A, true, Stage2::V, 1.0);
        assert!(matches!(ipw_weight(&bad, &half), Err(Error::InvalidRecord { .. })));
    }

    #[test]
    fn record_invariants() {
        assert_eq!(
            rec("a", Stage1::Ac, true, Stage2::A, 0.0).check(),
            Err("responder stage2 must equal stage1")
        );
        assert_eq!(
            rec("b", Stage1::Ac, false, Stage2::Ac, 0.0).check(),
            Err("non-responder stage2 must be m or v")
        );
        assert_eq!(
            rec("c", Stage1::A, false, Stage2::M, f64::INFINITY).check(),
            Err("outcome must be finite")
        );
        assert_eq!(rec("d", Stage1::Ac, false, Stage2::M, 0.0).check(), Ok(Cell::AcM));
    }

    #[test]
    fn record_json_uses_numeric_flag() {
        let r = rec("p1", Stage1::Ac, false, Stage2::V, 2.5);
        let s = serde_json::to_string(&r).unwrap();
        assert_eq!(s, r#"{"id":"p1","stage1":"ac","response":0,"stage2":"v","outcome":2.5}"#);
        assert_eq!(serde_json::from_str::<TrialRecord>(&s).unwrap(), r);
        assert!(serde_json::from_str::<TrialRecord>(&s.replace(":0,", ":2,")).is_err());
    }

    #[test]
    fn ai_mean_examples() {
        let half = RandomizationProbs::default();
        let one = vec![rec("1", Stage1::A, true, Stage2::A, 10.0)];
        assert_eq!(estimate_ai_mean(&one, EmbeddedAi::D1, &half).unwrap(), 10.0);
        let two = vec![
            rec("1", Stage1::A, true, Stage2::A, 10.0),
            rec("2", Stage1::A, false, Stage2::V, 6.0),
            rec("3", Stage1::A, false, Stage2::M, 100.0),
        ];
        let m = estimate_ai_mean(&two, EmbeddedAi::D1, &half).unwrap();
        assert!((m - 44.0 / 6.0).abs() < 1e-12);
        assert_eq!(
            estimate_ai_mean(&two, EmbeddedAi::D3, &half),
            Err(Error::Positivity(Cell::AcAc))
        );
    }

    #[test]
    fn ht_mean_divides_by_everyone() {
        let half = RandomizationProbs::default();
        let two = vec![
            rec("1", Stage1::A, true, Stage2::A, 10.0),
            rec("2", Stage1::A, false, Stage2::V, 6.0),
            rec("3", Stage1::Ac, false, Stage2::M, 100.0),
        ];
        let m = estimate_ai_mean_ht(&two, EmbeddedAi::D1, &half).unwrap();
        assert!((m - 44.0 / 3.0).abs() < 1e-12);
    }

    #[test]
    fn design_estimates() {
        let mut data = full_data([1.0, 2.0, 3.0, 4.0, 5.0, 6.0]);
        // Arm a: 3 responders of 10.
        data.push(cell_rec(100, Cell::AA, 1.0));
        data.push(cell_rec(101, Cell::AM, 2.0));
        data.push(cell_rec(102, Cell::AM, 2.0));
        data.push(cell_rec(103, Cell::AV, 3.0));
        let d = estimate_design(&data, &RandomizationProbs::default()).unwrap();
        assert!((d.gamma_a() - 0.3).abs() < 1e-15);
        assert!((d.gamma_ac() - 1.0 / 3.0).abs() < 1e-15);
        assert_eq!(d.cell_means().ac_v, 6.0);
        // Squared deviations: 2 per cell, 16 records, 6 cells.
        assert!((d.sigma().powi(2) - 12.0 / 10.0).abs() < 1e-12);
    }

    #[test]
    fn pooled_variance_of_equal_cells() {
        let d = estimate_design(&full_data([0.0; 6]), &RandomizationProbs::default()).unwrap();
        // Each cell has sample variance 2 (values ±1, n − 1 = 1).
        assert!((d.sigma() * d.sigma() - 2.0).abs() < 1e-12);
    }

    #[test]
    fn empty_cell_is_positivity_error() {
        let data: Vec<_> = full_data([0.0; 6]).into_iter().filter(|r| {
            !(r.stage1 == Stage1::Ac && r.stage2 == Stage2::M)
        }).collect();
        let err = estimate_design(&data, &RandomizationProbs::default()).unwrap_err();
        assert_eq!(err, Error::Positivity(Cell::AcM));
        assert_eq!(err.to_string(), "positivity violation: no participants observed in cell (ac,m)");
    }

    #[test]
    fn empirical_probs() {
        let mut data = full_data([0.0; 6]);
        data.push(cell_rec(99, Cell::AcV, 0.0));
        let p = RandomizationProbs::empirical(&data).unwrap();
        assert!((p.pi_a() - 6.0 / 13.0).abs() < 1e-15);
        assert_eq!(p.pi_a_v(), 0.5);
        assert!((p.tactic(Stage1::Ac, Tactic::V) - 3.0 / 5.0).abs() < 1e-15);
    }

    #[test]
    fn bayes_factor_examples() {
        let bf = |p: f64| bf_upper_bound(Probability::new(p).unwrap()).unwrap();
        assert!((bf(0.0103).value - 7.81).abs() < 0.01);
        assert!((bf(0.00243).value - 25.15).abs() < 0.01);
        let e = bf((-1.0f64).exp());
        assert!((e.value - 1.0).abs() < 1e-12 && e.informative);
        let flat = bf(0.5);
        assert_eq!(flat.value, 1.0);
        assert!(!flat.informative);
        assert!(bf_upper_bound(Probability::new(0.0).unwrap()).is_err());
        assert!(bf_upper_bound(Probability::new(1.0).unwrap()).is_err());
    }

    #[test]
    fn tost_boundaries() {
        let t = tost(1.5, 0.04, 1.5, 0.05);
        assert_eq!(t.z_ni, 0.0);
        assert_eq!(t.p_ni, 0.5);
        assert!(!t.reject_ni && !t.equivalent());
        let t = tost(0.0, 0.0, 2.0, 0.05);
        assert!(t.reject_ni && t.reject_ns && t.equivalent());
    }

    #[test]
    fn ni_test_superiority_and_margin_checks() {
        let data = full_data([1.0, 2.0, 3.0, 4.0, 5.0, 6.0]);
        let half = RandomizationProbs::default();
        let pair = AiPair::new(EmbeddedAi::D3, EmbeddedAi::D1).unwrap();
        let alpha = Probability::new(0.05).unwrap();
        assert!(ni_test(&data, pair, -0.1, alpha, &half).is_err());
        assert!(equivalence_test(&data, pair, 0.0, alpha, &half).is_err());
        let r = ni_test(&data, pair, 0.0, alpha, &half).unwrap();
        // Textbook one-sided z-test on the same variance.
        let z = (r.mean_first - r.mean_second) / r.variance.sqrt();
        assert!((r.z_ni - z).abs() < 1e-12);
        assert!((r.p_ni.value() - cdf(z)).abs() < 1e-15);
        assert_eq!(r.decision == Decision::RejectNull, z < -1.644_853_626_951_472);
        assert!(r.warnings.iter().any(|w| w.contains("only 12 participants")));
        assert!(r.z_ns.is_none() && r.bf_bound_ns.is_none());
    }

    #[test]
    fn equivalence_report_matches_interval_rule() {
        let half = RandomizationProbs::default();
        let pair = AiPair::new(EmbeddedAi::D3, EmbeddedAi::D4).unwrap();
        let alpha = Probability::new(0.05).unwrap();
        for theta in [0.5, 2.0, 5.0, 20.0] {
            let data = full_data([1.0, 2.0, 3.0, 4.0, 5.0, 5.5]);
            let r = equivalence_test(&data, pair, theta, alpha, &half).unwrap();
            let diff = r.mean_first - r.mean_second;
            let half_width = 1.644_853_626_951_472 * r.variance.sqrt();
            let inside = diff - half_width > -theta && diff + half_width < theta;
            assert_eq!(r.decision == Decision::RejectNull, inside, "theta = {theta}");
            assert!(r.p_ns.is_some() && r.bf_bound_ni.is_some());
        }
    }

    proptest! {
        #[test]
        fn summary_matches_record_level_sums(
            ys in prop::collection::vec((0usize..6, -10.0..10.0f64), 1..60),
            pa in 0.1..0.9f64, pv in 0.1..0.9f64,
        ) {
            let probs = RandomizationProbs::new(pa, pv, 1.0 - pv).unwrap();
            let data: Vec<_> = ys.iter().enumerate().map(|(i, &(k, y))| cell_rec(i, Cell::ALL[k], y)).collect();
            for ai in EmbeddedAi::ALL {
                let (mut wy, mut w) = (0.0, 0.0);
                for r in &data {
                    if ai.contains(r.check().unwrap()) {
                        let wi = ipw_weight(r, &probs).unwrap();
                        wy += wi * r.outcome;
                        w += wi;
                    }
                }
                match estimate_ai_mean(&data, ai, &probs) {
                    Ok(m) => prop_assert!((m - wy / w).abs() < 1e-9),
                    Err(e) => prop_assert!(w == 0.0 && matches!(e, Error::Positivity(_))),
                }
            }
        }

        #[test]
        fn bf_strictly_decreasing(a in 1e-9..0.36f64, b in 1e-9..0.36f64) {
            prop_assume!(a < b);
            let fa = bf_upper_bound(Probability::new(a).unwrap()).unwrap().value;
            let fb = bf_upper_bound(Probability::new(b).unwrap()).unwrap().value;
            prop_assert!(fa > fb);
            prop_assert!(fb >= 1.0);
        }

        #[test]
        fn mean_shifts_with_outcomes(bases in prop::array::uniform6(-5.0..5.0f64), c in -10.0..10.0f64) {
            let half = RandomizationProbs::default();
            let data = full_data(bases);
            let shifted: Vec<_> = data.iter().cloned().map(|mut r| { r.outcome += c; r }).collect();
            for ai in EmbeddedAi::ALL {
                let a = estimate_ai_mean(&data, ai, &half).unwrap();
                let b = estimate_ai_mean(&shifted, ai, &half).unwrap();
                prop_assert!((b - a - c).abs() < 1e-9);
            }
        }

        #[test]
        fn weight_sum_equals_n_at_exact_fractions(k in 1usize..20, g in 0usize..4) {
            // Per arm: 4k participants, g·k responders, the rest split evenly.
            let mut data = Vec::new();
            let mut id = 0;
            for s1 in Stage1::ALL {
                for _ in 0..(2 * g * k) {
                    data.push(cell_rec(id, Cell::responder(s1), 0.0)); id += 1;
                }
                for t in Tactic::ALL {
                    for _ in 0..((4 - g) * k) {
                        data.push(cell_rec(id, Cell::nonresponder(s1, t), 0.0)); id += 1;
                    }
                }
            }
            let half = RandomizationProbs::default();
            for ai in EmbeddedAi::ALL {
                let w: f64 = data.iter().filter(|r| ai.contains(r.check().unwrap()))
                    .map(|r| ipw_weight(r, &half).unwrap()).sum();
                prop_assert!((w - data.len() as f64).abs() < 1e-9);
            }
        }
    }
}
