//! The prototypical two-stage SMART and its population-level estimands.
//!
//! Everyone is randomized between `a` and `ac` at stage one. Responders keep
//! their initial option; non-responders are re-randomized between a modest
//! (`m`) and a vigorous (`v`) augmentation. That yields six cells and four
//! embedded adaptive interventions.
//!
//! Variance quantities are kept as N-free coefficients (`N * Var`), so the
//! planning formulas never carry a factor of `N` twice.

use serde::{Deserialize, Serialize};
use std::fmt;
use std::str::FromStr;

use crate::error::{check_closed_unit, check_finite, check_open_unit, check_positive, Error, Result};

/// First-stage intervention option.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Stage1 {
    A,
    Ac,
}

/// Second-stage augmentation offered to non-responders.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Tactic {
    M,
    V,
}

/// Observed second-stage label: a continued first-stage option or a tactic.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Stage2 {
    A,
    Ac,
    M,
    V,
}

impl Stage1 {
    pub const ALL: [Stage1; 2] = [Stage1::A, Stage1::Ac];

    pub fn label(self) -> &'static str {
        match self {
            Stage1::A => "a",
            Stage1::Ac => "ac",
        }
    }
}

impl Tactic {
    pub const ALL: [Tactic; 2] = [Tactic::M, Tactic::V];

    pub fn label(self) -> &'static str {
        match self {
            Tactic::M => "m",
            Tactic::V => "v",
        }
    }
}

impl Stage2 {
    pub fn label(self) -> &'static str {
        match self {
            Stage2::A => "a",
            Stage2::Ac => "ac",
            Stage2::M => "m",
            Stage2::V => "v",
        }
    }

    pub fn tactic(self) -> Option<Tactic> {
        match self {
            Stage2::M => Some(Tactic::M),
            Stage2::V => Some(Tactic::V),
            _ => None,
        }
    }
}

impl From<Stage1> for Stage2 {
    fn from(s: Stage1) -> Self {
        match s {
            Stage1::A => Stage2::A,
            Stage1::Ac => Stage2::Ac,
        }
    }
}

impl From<Tactic> for Stage2 {
    fn from(t: Tactic) -> Self {
        match t {
            Tactic::M => Stage2::M,
            Tactic::V => Stage2::V,
        }
    }
}

macro_rules! label_impls {
    ($ty:ty, $what:literal, [$($s:literal => $v:expr),+]) => {
        impl fmt::Display for $ty {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.write_str(self.label())
            }
        }

        impl FromStr for $ty {
            type Err = Error;

            fn from_str(s: &str) -> Result<Self> {
                match s.trim() {
                    $($s => Ok($v),)+
                    other => Err(Error::Parse(format!(concat!("unknown ", $what, " {:?}"), other))),
                }
            }
        }
    };
}

label_impls!(Stage1, "stage-1 option", ["a" => Stage1::A, "ac" => Stage1::Ac]);
label_impls!(Tactic, "tactic", ["m" => Tactic::M, "v" => Tactic::V]);
label_impls!(Stage2, "stage-2 option", ["a" => Stage2::A, "ac" => Stage2::Ac, "m" => Stage2::M, "v" => Stage2::V]);

/// One of the six treatment sequences `(T1, T2)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Cell {
    AA,
    AM,
    AV,
    AcAc,
    AcM,
    AcV,
}

impl Cell {
    pub const ALL: [Cell; 6] = [Cell::AA, Cell::AM, Cell::AV, Cell::AcAc, Cell::AcM, Cell::AcV];

    pub fn responder(stage1: Stage1) -> Cell {
        match stage1 {
            Stage1::A => Cell::AA,
            Stage1::Ac => Cell::AcAc,
        }
    }

    pub fn nonresponder(stage1: Stage1, tactic: Tactic) -> Cell {
        match (stage1, tactic) {
            (Stage1::A, Tactic::M) => Cell::AM,
            (Stage1::A, Tactic::V) => Cell::AV,
            (Stage1::Ac, Tactic::M) => Cell::AcM,
            (Stage1::Ac, Tactic::V) => Cell::AcV,
        }
    }

    /// The cell for an observed `(T1, T2)`; `None` for impossible sequences like `(a, ac)`.
    pub fn from_stages(stage1: Stage1, stage2: Stage2) -> Option<Cell> {
        match stage2.tactic() {
            Some(t) => Some(Cell::nonresponder(stage1, t)),
            None if Stage2::from(stage1) == stage2 => Some(Cell::responder(stage1)),
            None => None,
        }
    }

    pub fn stage1(self) -> Stage1 {
        match self {
            Cell::AA | Cell::AM | Cell::AV => Stage1::A,
            Cell::AcAc | Cell::AcM | Cell::AcV => Stage1::Ac,
        }
    }

    pub fn stage2(self) -> Stage2 {
        match self {
            Cell::AA => Stage2::A,
            Cell::AcAc => Stage2::Ac,
            Cell::AM | Cell::AcM => Stage2::M,
            Cell::AV | Cell::AcV => Stage2::V,
        }
    }

    /// Position in [`Cell::ALL`].
    pub fn index(self) -> usize {
        self as usize
    }

    pub fn is_responder(self) -> bool {
        matches!(self, Cell::AA | Cell::AcAc)
    }
}

impl fmt::Display for Cell {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({},{})", self.stage1(), self.stage2())
    }
}

/// Mean outcome `μ_{T1,T2}` of each cell.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CellMeans {
    pub a_a: f64,
    pub a_m: f64,
    pub a_v: f64,
    pub ac_ac: f64,
    pub ac_m: f64,
    pub ac_v: f64,
}

impl CellMeans {
    pub fn get(&self, cell: Cell) -> f64 {
        match cell {
            Cell::AA => self.a_a,
            Cell::AM => self.a_m,
            Cell::AV => self.a_v,
            Cell::AcAc => self.ac_ac,
            Cell::AcM => self.ac_m,
            Cell::AcV => self.ac_v,
        }
    }

    pub fn from_fn(mut f: impl FnMut(Cell) -> f64) -> Self {
        CellMeans {
            a_a: f(Cell::AA),
            a_m: f(Cell::AM),
            a_v: f(Cell::AV),
            ac_ac: f(Cell::AcAc),
            ac_m: f(Cell::AcM),
            ac_v: f(Cell::AcV),
        }
    }
}

/// Randomization probabilities; complements (`π_ac = 1 − π_a` etc.) are implied.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawProbs")]
pub struct RandomizationProbs {
    pi_a: f64,
    pi_a_v: f64,
    pi_ac_v: f64,
}

#[derive(Deserialize)]
struct RawProbs {
    #[serde(default = "half")]
    pi_a: f64,
    #[serde(default = "half")]
    pi_a_v: f64,
    #[serde(default = "half")]
    pi_ac_v: f64,
}

fn half() -> f64 {
    0.5
}

impl TryFrom<RawProbs> for RandomizationProbs {
    type Error = Error;

    fn try_from(r: RawProbs) -> Result<Self> {
        RandomizationProbs::new(r.pi_a, r.pi_a_v, r.pi_ac_v)
    }
}

impl Default for RandomizationProbs {
    fn default() -> Self {
        RandomizationProbs {
            pi_a: 0.5,
            pi_a_v: 0.5,
            pi_ac_v: 0.5,
        }
    }
}

impl RandomizationProbs {
    pub fn new(pi_a: f64, pi_a_v: f64, pi_ac_v: f64) -> Result<Self> {
        Ok(RandomizationProbs {
            pi_a: check_open_unit("pi_a", pi_a)?,
            pi_a_v: check_open_unit("pi_a_v", pi_a_v)?,
            pi_ac_v: check_open_unit("pi_ac_v", pi_ac_v)?,
        })
    }

    pub fn pi_a(&self) -> f64 {
        self.pi_a
    }

    pub fn pi_a_v(&self) -> f64 {
        self.pi_a_v
    }

    pub fn pi_ac_v(&self) -> f64 {
        self.pi_ac_v
    }

    /// `π_{T1}`.
    pub fn stage1(&self, s: Stage1) -> f64 {
        match s {
            Stage1::A => self.pi_a,
            Stage1::Ac => 1.0 - self.pi_a,
        }
    }

    /// `π_{T1,T2}` for a non-responder tactic.
    pub fn tactic(&self, s: Stage1, t: Tactic) -> f64 {
        let v = match s {
            Stage1::A => self.pi_a_v,
            Stage1::Ac => self.pi_ac_v,
        };
        match t {
            Tactic::V => v,
            Tactic::M => 1.0 - v,
        }
    }
}

/// A two-stage SMART described by its six cell means, common outcome SD,
/// response rates and randomization probabilities.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawDesign")]
pub struct SmartDesign {
    cell_means: CellMeans,
    sigma: f64,
    gamma_a: f64,
    gamma_ac: f64,
    #[serde(flatten)]
    probs: RandomizationProbs,
}

#[derive(Deserialize)]
struct RawDesign {
    cell_means: CellMeans,
    sigma: f64,
    gamma_a: f64,
    gamma_ac: f64,
    #[serde(flatten)]
    probs: RandomizationProbs,
}

impl TryFrom<RawDesign> for SmartDesign {
    type Error = Error;

    fn try_from(r: RawDesign) -> Result<Self> {
        SmartDesign::new(r.cell_means, r.sigma, r.gamma_a, r.gamma_ac, r.probs)
    }
}

impl SmartDesign {
    pub fn new(
        cell_means: CellMeans,
        sigma: f64,
        gamma_a: f64,
        gamma_ac: f64,
        probs: RandomizationProbs,
    ) -> Result<Self> {
        for cell in Cell::ALL {
            check_finite("cell mean", cell_means.get(cell))?;
        }
        Ok(SmartDesign {
            cell_means,
            sigma: check_positive("sigma", sigma)?,
            gamma_a: check_closed_unit("gamma_a", gamma_a)?,
            gamma_ac: check_closed_unit("gamma_ac", gamma_ac)?,
            probs,
        })
    }

    pub fn cell_means(&self) -> &CellMeans {
        &self.cell_means
    }

    pub fn sigma(&self) -> f64 {
        self.sigma
    }

    pub fn gamma_a(&self) -> f64 {
        self.gamma_a
    }

    pub fn gamma_ac(&self) -> f64 {
        self.gamma_ac
    }

    pub fn probs(&self) -> &RandomizationProbs {
        &self.probs
    }

    pub fn gamma(&self, s: Stage1) -> f64 {
        match s {
            Stage1::A => self.gamma_a,
            Stage1::Ac => self.gamma_ac,
        }
    }

    /// Degeneracy notes: a response rate of exactly 0 or 1 leaves one
    /// stratum empty, which a real SMART would never re-randomize.
    pub fn warnings(&self) -> Vec<String> {
        Stage1::ALL
            .iter()
            .filter(|&&s| self.gamma(s) == 0.0 || self.gamma(s) == 1.0)
            .map(|&s| format!("degenerate design: gamma_{s} = {}", self.gamma(s)))
            .collect()
    }

    /// `μ_d = γ μ_{T1,T1} + (1 − γ) μ_{T1,T2}`.
    pub fn ai_mean(&self, ai: EmbeddedAi) -> f64 {
        let g = self.gamma(ai.stage1());
        g * self.cell_means.get(ai.responder_cell())
            + (1.0 - g) * self.cell_means.get(ai.nonresponder_cell())
    }

    /// `σ_d² = N · Var(μ̂_d)` for general randomization probabilities.
    pub fn ai_variance_coeff(&self, ai: EmbeddedAi) -> f64 {
        let g = self.gamma(ai.stage1());
        let p1 = self.probs.stage1(ai.stage1());
        let p2 = self.probs.tactic(ai.stage1(), ai.tactic());
        let m11 = self.cell_means.get(ai.responder_cell());
        let m12 = self.cell_means.get(ai.nonresponder_cell());
        let s2 = self.sigma * self.sigma;
        (1.0 - g + g * p2) / (p1 * p2) * s2 + g * (1.0 - g * p1) / p1 * m11 * m11
            + (1.0 - g) * (1.0 - (1.0 - g) * p1 * p2) / (p1 * p2) * m12 * m12
            - 2.0 * g * (1.0 - g) * m11 * m12
    }

    /// `σ²_{di×dj} = N · Cov(μ̂_di, μ̂_dj)` for a shared-path pair. Only the
    /// common responders contribute to the cross moment.
    pub fn shared_cov_coeff(&self, pair: AiPair) -> Result<f64> {
        if pair.path() != Path::Shared {
            return Err(Error::NotSharedPath);
        }
        let s1 = pair.control.stage1();
        let g = self.gamma(s1);
        let m11 = self.cell_means.get(Cell::responder(s1));
        Ok(g / self.probs.stage1(s1) * (self.sigma * self.sigma + m11 * m11)
            - self.ai_mean(pair.control) * self.ai_mean(pair.candidate))
    }

    /// `N · Var(μ̂_control − μ̂_candidate)`, clamped at zero against rounding.
    pub fn diff_variance_coeff(&self, pair: AiPair) -> f64 {
        let sum = self.ai_variance_coeff(pair.control) + self.ai_variance_coeff(pair.candidate);
        let v = match pair.path() {
            Path::Distinct => sum,
            Path::Shared => {
                sum - 2.0 * self.shared_cov_coeff(pair).expect("pair is shared-path")
            }
        };
        v.max(0.0)
    }

    /// Variance of the estimated mean difference at sample size `n`.
    pub fn diff_variance(&self, pair: AiPair, n: u64) -> Result<f64> {
        if n == 0 {
            return Err(Error::SampleSizeTooSmall { min: 1, got: 0 });
        }
        Ok(self.diff_variance_coeff(pair) / n as f64)
    }

    /// True difference `δ = μ_control − μ_candidate`.
    pub fn true_difference(&self, pair: AiPair) -> f64 {
        self.ai_mean(pair.control) - self.ai_mean(pair.candidate)
    }

    /// Standardizes `θ` and `δ` by `sqrt(N · Var(diff) / 2)`.
    pub fn standardized_quantities(&self, pair: AiPair, theta: f64, delta: f64) -> Result<Standardized> {
        check_finite("theta", theta)?;
        check_finite("delta", delta)?;
        let half = self.diff_variance_coeff(pair) / 2.0;
        if !(half > 0.0) {
            return Err(Error::NonPositiveScale(half));
        }
        let scale = half.sqrt();
        let eta_theta = theta / scale;
        let eta_delta = delta / scale;
        Ok(Standardized {
            eta_theta,
            eta_delta,
            eta: eta_theta - eta_delta,
            scale,
        })
    }
}

/// Standardized margin and true difference for one comparison.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Standardized {
    pub eta_theta: f64,
    pub eta_delta: f64,
    /// `eta_theta − eta_delta`.
    pub eta: f64,
    /// The standard-deviation scale both were divided by.
    pub scale: f64,
}

/// The four adaptive interventions embedded in the SMART.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EmbeddedAi {
    /// Start with `a`; non-responders get `v`.
    D1,
    /// Start with `a`; non-responders get `m`.
    D2,
    /// Start with `ac`; non-responders get `v`.
    D3,
    /// Start with `ac`; non-responders get `m`.
    D4,
}

impl EmbeddedAi {
    pub const ALL: [EmbeddedAi; 4] = [EmbeddedAi::D1, EmbeddedAi::D2, EmbeddedAi::D3, EmbeddedAi::D4];

    pub fn stage1(self) -> Stage1 {
        match self {
            EmbeddedAi::D1 | EmbeddedAi::D2 => Stage1::A,
            EmbeddedAi::D3 | EmbeddedAi::D4 => Stage1::Ac,
        }
    }

    pub fn tactic(self) -> Tactic {
        match self {
            EmbeddedAi::D1 | EmbeddedAi::D3 => Tactic::V,
            EmbeddedAi::D2 | EmbeddedAi::D4 => Tactic::M,
        }
    }

    pub fn responder_cell(self) -> Cell {
        Cell::responder(self.stage1())
    }

    pub fn nonresponder_cell(self) -> Cell {
        Cell::nonresponder(self.stage1(), self.tactic())
    }

    /// Whether a participant in `cell` is consistent with this AI.
    pub fn contains(self, cell: Cell) -> bool {
        cell == self.responder_cell() || cell == self.nonresponder_cell()
    }

    pub fn label(self) -> &'static str {
        match self {
            EmbeddedAi::D1 => "d1",
            EmbeddedAi::D2 => "d2",
            EmbeddedAi::D3 => "d3",
            EmbeddedAi::D4 => "d4",
        }
    }
}

label_impls!(EmbeddedAi, "adaptive intervention", ["d1" => EmbeddedAi::D1, "d2" => EmbeddedAi::D2, "d3" => EmbeddedAi::D3, "d4" => EmbeddedAi::D4]);

/// Whether two AIs begin with different or the same first-stage option.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Path {
    Distinct,
    Shared,
}

impl fmt::Display for Path {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Path::Distinct => "distinct",
            Path::Shared => "shared",
        })
    }
}

impl FromStr for Path {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "distinct" | "dp" => Ok(Path::Distinct),
            "shared" | "sp" => Ok(Path::Shared),
            other => Err(Error::Parse(format!("unknown path {other:?}"))),
        }
    }
}

/// An ordered comparison: `control` is the active-control AI whose advantage
/// over `candidate` is bounded by the margin. The path is always derived.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "RawPair", into = "RawPair")]
pub struct AiPair {
    control: EmbeddedAi,
    candidate: EmbeddedAi,
}

#[derive(Serialize, Deserialize)]
struct RawPair {
    control: EmbeddedAi,
    #[serde(rename = "new")]
    candidate: EmbeddedAi,
    #[serde(default, skip_deserializing)]
    path: Option<Path>,
}

impl TryFrom<RawPair> for AiPair {
    type Error = Error;

    fn try_from(r: RawPair) -> Result<Self> {
        AiPair::new(r.control, r.candidate)
    }
}

impl From<AiPair> for RawPair {
    fn from(p: AiPair) -> Self {
        RawPair {
            control: p.control,
            candidate: p.candidate,
            path: Some(p.path()),
        }
    }
}

impl AiPair {
    pub fn new(control: EmbeddedAi, candidate: EmbeddedAi) -> Result<Self> {
        if control == candidate {
            return Err(Error::DegeneratePair(format!("{control} vs {candidate}")));
        }
        Ok(AiPair { control, candidate })
    }

    pub fn control(&self) -> EmbeddedAi {
        self.control
    }

    pub fn candidate(&self) -> EmbeddedAi {
        self.candidate
    }

    pub fn path(&self) -> Path {
        if self.control.stage1() == self.candidate.stage1() {
            Path::Shared
        } else {
            Path::Distinct
        }
    }
}

impl fmt::Display for AiPair {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} (control) vs {} (new), {} path", self.control, self.candidate, self.path())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn design(means: [f64; 6], sigma: f64, ga: f64, gac: f64) -> SmartDesign {
        let m = CellMeans {
            a_a: means[0],
            a_m: means[1],
            a_v: means[2],
            ac_ac: means[3],
            ac_m: means[4],
            ac_v: means[5],
        };
        SmartDesign::new(m, sigma, ga, gac, RandomizationProbs::default()).unwrap()
    }

    /// Variance coefficient at π = 1/2 written out directly.
    fn half_pi_coeff(g: f64, s2: f64, m11: f64, m12: f64) -> f64 {
        2.0 * (2.0 - g) * s2 + g * (2.0 - g) * m11 * m11 + (3.0 - 2.0 * g - g * g) * m12 * m12
            - 2.0 * g * (1.0 - g) * m11 * m12
    }

    #[test]
    fn ai_table_mapping() {
        use EmbeddedAi::*;
        assert_eq!((D1.stage1(), D1.tactic()), (Stage1::A, Tactic::V));
        assert_eq!((D2.stage1(), D2.tactic()), (Stage1::A, Tactic::M));
        assert_eq!((D3.stage1(), D3.tactic()), (Stage1::Ac, Tactic::V));
        assert_eq!((D4.stage1(), D4.tactic()), (Stage1::Ac, Tactic::M));
    }

    #[test]
    fn pair_path_is_derived() {
        use EmbeddedAi::*;
        assert_eq!(AiPair::new(D3, D1).unwrap().path(), Path::Distinct);
        assert_eq!(AiPair::new(D2, D3).unwrap().path(), Path::Distinct);
        assert_eq!(AiPair::new(D3, D4).unwrap().path(), Path::Shared);
        assert_eq!(AiPair::new(D1, D2).unwrap().path(), Path::Shared);
        assert!(matches!(AiPair::new(D1, D1), Err(Error::DegeneratePair(_))));
    }

    #[test]
    fn pair_serde_uses_control_and_new() {
        let p = AiPair::new(EmbeddedAi::D3, EmbeddedAi::D4).unwrap();
        let s = serde_json::to_string(&p).unwrap();
        assert_eq!(s, r#"{"control":"d3","new":"d4","path":"shared"}"#);
        let back: AiPair = serde_json::from_str(r#"{"control":"d3","new":"d4"}"#).unwrap();
        assert_eq!(back, p);
        assert!(serde_json::from_str::<AiPair>(r#"{"control":"d2","new":"d2"}"#).is_err());
    }

    #[test]
    fn cell_labels_and_lookup() {
        assert_eq!(Cell::AcM.to_string(), "(ac,m)");
        assert_eq!(Cell::from_stages(Stage1::A, Stage2::A), Some(Cell::AA));
        assert_eq!(Cell::from_stages(Stage1::A, Stage2::Ac), None);
        assert_eq!(Cell::from_stages(Stage1::Ac, Stage2::V), Some(Cell::AcV));
        for c in Cell::ALL {
            assert_eq!(Cell::from_stages(c.stage1(), c.stage2()), Some(c));
        }
    }

    #[test]
    fn ai_mean_examples() {
        let d = design([5.0, 9.0, 7.0, 0.0, 0.0, 0.0], 1.0, 1.0, 0.5);
        assert_eq!(d.ai_mean(EmbeddedAi::D1), 5.0);
        let d = design([2.0, 0.0, 4.0, 0.0, 0.0, 0.0], 1.0, 0.5, 0.5);
        assert_eq!(d.ai_mean(EmbeddedAi::D1), 3.0);
    }

    #[test]
    fn variance_coeff_trivial_strata() {
        // All responders: W = 2, so E[W²Y²] − E[WY]² = 2(σ² + μ²) − μ².
        let d = design([1.0, 0.0, 0.0, 0.0, 0.0, 0.0], 1.0, 1.0, 0.5);
        assert!((d.ai_variance_coeff(EmbeddedAi::D1) - 3.0).abs() < 1e-15);
        // All non-responders: W = 4, so 4(σ² + μ²) − μ².
        let d = design([0.0, 0.0, 1.0, 0.0, 0.0, 0.0], 1.0, 0.0, 0.5);
        assert!((d.ai_variance_coeff(EmbeddedAi::D1) - 7.0).abs() < 1e-15);
        assert_eq!(d.warnings().len(), 1);
    }

    #[test]
    fn shared_cov_degenerate_cases() {
        let d = design([0.3, 0.1, 0.2, 1.7, -0.4, 2.2], 1.5, 0.4, 1.0);
        let p = AiPair::new(EmbeddedAi::D3, EmbeddedAi::D4).unwrap();
        let cov = d.shared_cov_coeff(p).unwrap();
        assert!((cov - d.ai_variance_coeff(EmbeddedAi::D3)).abs() < 1e-12);
        assert!((cov - (2.0 * 1.5 * 1.5 + 1.7 * 1.7)).abs() < 1e-12);
        assert_eq!(d.diff_variance(p, 10).unwrap(), 0.0);

        let d = design([0.3, 0.1, 0.2, 1.7, -0.4, 2.2], 1.5, 0.4, 0.0);
        let cov = d.shared_cov_coeff(p).unwrap();
        assert!((cov - 0.4 * 2.2).abs() < 1e-12);

        let dp = AiPair::new(EmbeddedAi::D3, EmbeddedAi::D1).unwrap();
        assert_eq!(d.shared_cov_coeff(dp), Err(Error::NotSharedPath));
    }

    #[test]
    fn diff_variance_distinct_is_sum_over_n() {
        let d = design([0.3, 0.1, 0.2, 1.7, -0.4, 2.2], 1.5, 0.4, 0.6);
        let p = AiPair::new(EmbeddedAi::D3, EmbeddedAi::D1).unwrap();
        let expect = (d.ai_variance_coeff(EmbeddedAi::D3) + d.ai_variance_coeff(EmbeddedAi::D1)) / 40.0;
        assert_eq!(d.diff_variance(p, 40).unwrap(), expect);
        assert!(d.diff_variance(p, 0).is_err());
    }

    #[test]
    fn eta_zero_at_null_boundary() {
        let d = design([0.3, 0.1, 0.2, 1.7, -0.4, 2.2], 1.5, 0.4, 0.6);
        let p = AiPair::new(EmbeddedAi::D3, EmbeddedAi::D1).unwrap();
        let s = d.standardized_quantities(p, 1.25, 1.25).unwrap();
        assert_eq!(s.eta, 0.0);
    }

    #[test]
    fn zero_scale_rejected() {
        let d = design([0.3, 0.1, 0.2, 1.7, -0.4, 2.2], 1.5, 0.4, 1.0);
        let p = AiPair::new(EmbeddedAi::D3, EmbeddedAi::D4).unwrap();
        assert!(matches!(
            d.standardized_quantities(p, 1.0, 0.0),
            Err(Error::NonPositiveScale(_))
        ));
    }

    #[test]
    fn design_validation() {
        let m = CellMeans::from_fn(|_| 0.0);
        let p = RandomizationProbs::default();
        assert!(SmartDesign::new(m, 0.0, 0.5, 0.5, p).is_err());
        assert!(SmartDesign::new(m, 1.0, 1.2, 0.5, p).is_err());
        assert!(SmartDesign::new(CellMeans { a_a: f64::NAN, ..m }, 1.0, 0.5, 0.5, p).is_err());
        assert!(RandomizationProbs::new(1.0, 0.5, 0.5).is_err());
        assert!(RandomizationProbs::new(0.5, 0.0, 0.5).is_err());
    }

    #[test]
    fn design_serde_round_trip_and_validation() {
        let d = design([0.3, 0.1, 0.2, 1.7, -0.4, 2.2], 1.5, 0.4, 0.6);
        let json = serde_json::to_string(&d).unwrap();
        let back: SmartDesign = serde_json::from_str(&json).unwrap();
        assert_eq!(back, d);
        let bad = json.replace("\"sigma\":1.5", "\"sigma\":-1.0");
        assert!(serde_json::from_str::<SmartDesign>(&bad).is_err());
    }

    fn arb_design() -> impl Strategy<Value = SmartDesign> {
        (
            prop::array::uniform6(-5.0..5.0f64),
            0.1..5.0f64,
            0.0..=1.0f64,
            0.0..=1.0f64,
        )
            .prop_map(|(m, s, ga, gac)| design(m, s, ga, gac))
    }

    proptest! {
        #[test]
        fn general_formula_matches_half_pi_form(d in arb_design()) {
            let s2 = d.sigma() * d.sigma();
            for ai in EmbeddedAi::ALL {
                let g = d.gamma(ai.stage1());
                let m11 = d.cell_means().get(ai.responder_cell());
                let m12 = d.cell_means().get(ai.nonresponder_cell());
                let lhs = d.ai_variance_coeff(ai);
                let rhs = half_pi_coeff(g, s2, m11, m12);
                prop_assert!((lhs - rhs).abs() <= 1e-12 * rhs.abs().max(1.0));
            }
        }

        #[test]
        fn ai_mean_is_convex_mixture(d in arb_design()) {
            for ai in EmbeddedAi::ALL {
                let a = d.cell_means().get(ai.responder_cell());
                let b = d.cell_means().get(ai.nonresponder_cell());
                let m = d.ai_mean(ai);
                prop_assert!(m >= a.min(b) - 1e-12 && m <= a.max(b) + 1e-12);
            }
        }

        #[test]
        fn variance_coeff_nonnegative(
            d in arb_design(),
            pa in 0.05..0.95f64, pav in 0.05..0.95f64, pacv in 0.05..0.95f64,
        ) {
            let d = SmartDesign::new(*d.cell_means(), d.sigma(), d.gamma_a(), d.gamma_ac(),
                RandomizationProbs::new(pa, pav, pacv).unwrap()).unwrap();
            for ai in EmbeddedAi::ALL {
                prop_assert!(d.ai_variance_coeff(ai) >= 0.0);
            }
            let sp = AiPair::new(EmbeddedAi::D3, EmbeddedAi::D4).unwrap();
            prop_assert!(d.diff_variance(sp, 1).unwrap() >= 0.0);
        }

        #[test]
        fn scale_equivariance(d in arb_design(), c in 0.1..10.0f64, theta in 0.1..3.0f64) {
            let scaled = SmartDesign::new(
                CellMeans::from_fn(|cell| c * d.cell_means().get(cell)),
                c * d.sigma(), d.gamma_a(), d.gamma_ac(), *d.probs()).unwrap();
            for ai in EmbeddedAi::ALL {
                prop_assert!((scaled.ai_mean(ai) - c * d.ai_mean(ai)).abs() <= 1e-9 * (1.0 + c * d.ai_mean(ai).abs()));
                let v = d.ai_variance_coeff(ai);
                prop_assert!((scaled.ai_variance_coeff(ai) - c * c * v).abs() <= 1e-9 * c * c * v.max(1.0));
            }
            let pair = AiPair::new(EmbeddedAi::D3, EmbeddedAi::D1).unwrap();
            let delta = d.true_difference(pair);
            let a = d.standardized_quantities(pair, theta, delta).unwrap();
            let b = scaled.standardized_quantities(pair, c * theta, c * delta).unwrap();
            prop_assert!((a.eta - b.eta).abs() <= 1e-9 * (1.0 + a.eta.abs()));
            prop_assert!((a.eta_theta - b.eta_theta).abs() <= 1e-9 * (1.0 + a.eta_theta.abs()));
        }

        #[test]
        fn shared_diff_variance_shrinks_with_response(d in arb_design(), g in 0.0..1.0f64) {
            let pair = AiPair::new(EmbeddedAi::D3, EmbeddedAi::D4).unwrap();
            let at = |g: f64| SmartDesign::new(*d.cell_means(), d.sigma(), d.gamma_a(), g, *d.probs())
                .unwrap().diff_variance_coeff(pair);
            let scale = d.sigma().powi(2) + d.cell_means().ac_ac.powi(2);
            prop_assert!(at(1.0) <= 1e-12 * scale);
            prop_assert!(at(g) >= 0.0);
        }
    }
}
