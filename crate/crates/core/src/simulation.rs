//! SMART data generator and Monte Carlo estimators of power and Type-I error.
//!
//! Scenarios start from a latent progress variable `L ~ N(μ_L, σ_L²)` per
//! first-stage arm. A cut-off on `L` fixes the response rate of arm `a`; the
//! `ac` latent mean is then placed so the same cut-off yields `γ_ac`. Cell
//! means are linear in the latent means, with non-responder cells using the
//! mean of `L` truncated below the cut-off.
//!
//! Every replication draws from its own ChaCha stream selected by
//! `(master_seed, index)`, so estimates do not depend on thread count or
//! scheduling.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Normal, StandardNormal, Uniform};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::design::{AiPair, Cell, CellMeans, EmbeddedAi, Path, RandomizationProbs, SmartDesign, Stage1, Standardized, Tactic};
use crate::error::{check_finite, check_open_unit, check_positive, Error, Result};
use crate::inference::{CellSummary, Decision, TrialRecord};
use crate::normal::{cdf, pdf, quantile, Probability};
use crate::planning::{power_curve, CurveGrid, CurveRow, TestMode};

/// Inputs of the latent-variable scenario generator.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScenarioParams {
    pub sigma: f64,
    pub gamma_a: f64,
    pub gamma_ac: f64,
    pub mu_la: f64,
    pub sigma_l: f64,
    pub zeta0: f64,
    pub zeta1a: f64,
    pub zeta1ac: f64,
    pub xi0: f64,
    pub xi1a: f64,
    pub xi1ac: f64,
    pub xi2_a_m: f64,
    pub xi2_a_v: f64,
    pub xi2_ac_m: f64,
    pub xi2_ac_v: f64,
    pub alpha: Probability,
    pub beta: Probability,
    pub theta: f64,
}

impl ScenarioParams {
    pub fn validate(&self) -> Result<()> {
        check_positive("sigma", self.sigma)?;
        check_positive("sigma_l", self.sigma_l)?;
        check_positive("theta", self.theta)?;
        for (name, g) in [("gamma_a", self.gamma_a), ("gamma_ac", self.gamma_ac)] {
            check_open_unit(name, g).map_err(|_| {
                Error::InvalidDesign(format!(
                    "{name} = {g}: the non-responder truncated mean needs a response rate strictly inside (0, 1)"
                ))
            })?;
        }
        for (name, x) in [
            ("mu_la", self.mu_la),
            ("zeta0", self.zeta0),
            ("zeta1a", self.zeta1a),
            ("zeta1ac", self.zeta1ac),
            ("xi0", self.xi0),
            ("xi1a", self.xi1a),
            ("xi1ac", self.xi1ac),
            ("xi2_a_m", self.xi2_a_m),
            ("xi2_a_v", self.xi2_a_v),
            ("xi2_ac_m", self.xi2_ac_m),
            ("xi2_ac_v", self.xi2_ac_v),
        ] {
            check_finite(name, x)?;
        }
        check_open_unit("alpha", self.alpha.value())?;
        check_open_unit("beta", self.beta.value())?;
        Ok(())
    }
}

/// Means of the four embedded AIs.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AiMeans {
    pub d1: f64,
    pub d2: f64,
    pub d3: f64,
    pub d4: f64,
}

/// A fully derived scenario.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SimScenario {
    pub params: ScenarioParams,
    pub latent_cutoff: f64,
    pub mu_lac: f64,
    pub mu_la_nr: f64,
    pub mu_lac_nr: f64,
    pub design: SmartDesign,
    pub ai_means: AiMeans,
    /// `μ_d3 − μ_d1`.
    pub delta_dp: f64,
    /// `μ_d3 − μ_d4`.
    pub delta_sp: f64,
    pub eta_dp: Standardized,
    pub eta_sp: Standardized,
}

/// The distinct-path comparison: `d3` as control, `d1` as new.
pub fn dp_pair() -> AiPair {
    AiPair::new(EmbeddedAi::D3, EmbeddedAi::D1).expect("distinct AIs")
}

/// The shared-path comparison: `d3` as control, `d4` as new.
pub fn sp_pair() -> AiPair {
    AiPair::new(EmbeddedAi::D3, EmbeddedAi::D4).expect("distinct AIs")
}

pub fn pair_for(path: Path) -> AiPair {
    match path {
        Path::Distinct => dp_pair(),
        Path::Shared => sp_pair(),
    }
}

/// Mean of `N(mu, sd²)` truncated to values below `cutoff`.
fn truncated_below_mean(mu: f64, sd: f64, cutoff: f64) -> f64 {
    let u = (cutoff - mu) / sd;
    mu - sd * pdf(u) / cdf(u)
}

/// Derives the latent cut-off, truncated means, cell means, AI means and
/// standardized effects from generator parameters.
pub fn build_scenario(params: &ScenarioParams) -> Result<SimScenario> {
    params.validate()?;
    let p = params;
    let cutoff = p.mu_la + p.sigma_l * quantile(1.0 - p.gamma_a);
    let mu_lac = cutoff - p.sigma_l * quantile(1.0 - p.gamma_ac);
    let mu_la_nr = truncated_below_mean(p.mu_la, p.sigma_l, cutoff);
    let mu_lac_nr = truncated_below_mean(mu_lac, p.sigma_l, cutoff);
    let means = CellMeans {
        a_a: p.zeta0 + p.zeta1a * p.mu_la,
        a_m: p.xi0 + p.xi1a * p.mu_la + p.xi2_a_m * mu_la_nr,
        a_v: p.xi0 + p.xi1a * p.mu_la + p.xi2_a_v * mu_la_nr,
        ac_ac: p.zeta0 + p.zeta1ac * mu_lac,
        ac_m: p.xi0 + p.xi1ac * mu_lac + p.xi2_ac_m * mu_lac_nr,
        ac_v: p.xi0 + p.xi1ac * mu_lac + p.xi2_ac_v * mu_lac_nr,
    };
    let design = SmartDesign::new(means, p.sigma, p.gamma_a, p.gamma_ac, RandomizationProbs::default())?;
    let ai_means = AiMeans {
        d1: design.ai_mean(EmbeddedAi::D1),
        d2: design.ai_mean(EmbeddedAi::D2),
        d3: design.ai_mean(EmbeddedAi::D3),
        d4: design.ai_mean(EmbeddedAi::D4),
    };
    let delta_dp = design.true_difference(dp_pair());
    let delta_sp = design.true_difference(sp_pair());
    Ok(SimScenario {
        params: *params,
        latent_cutoff: cutoff,
        mu_lac,
        mu_la_nr,
        mu_lac_nr,
        design,
        ai_means,
        delta_dp,
        delta_sp,
        eta_dp: design.standardized_quantities(dp_pair(), p.theta, delta_dp)?,
        eta_sp: design.standardized_quantities(sp_pair(), p.theta, delta_sp)?,
    })
}

impl SimScenario {
    pub fn delta(&self, path: Path) -> f64 {
        match path {
            Path::Distinct => self.delta_dp,
            Path::Shared => self.delta_sp,
        }
    }

    pub fn eta(&self, path: Path) -> Standardized {
        match path {
            Path::Distinct => self.eta_dp,
            Path::Shared => self.eta_sp,
        }
    }

    /// Latent mean of a first-stage arm.
    pub fn latent_mean(&self, stage1: Stage1) -> f64 {
        match stage1 {
            Stage1::A => self.params.mu_la,
            Stage1::Ac => self.mu_lac,
        }
    }
}

/// Draws `n` latent progress values for one arm. Outcomes are generated
/// from the cell normals directly; these draws exist to check that the
/// cut-off reproduces the response rate.
pub fn draw_latent(scenario: &SimScenario, stage1: Stage1, n: usize, seed: SeedSpec) -> Vec<f64> {
    let dist = Normal::new(scenario.latent_mean(stage1), scenario.params.sigma_l).expect("sigma_l > 0");
    let mut rng = seed.rng();
    (0..n).map(|_| rng.sample(dist)).collect()
}

/// Selects the random stream of one replication.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SeedSpec {
    pub master_seed: u64,
    pub index: u64,
}

impl SeedSpec {
    pub fn new(master_seed: u64, index: u64) -> Self {
        SeedSpec { master_seed, index }
    }

    pub fn rng(&self) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::seed_from_u64(self.master_seed);
        rng.set_stream(self.index);
        rng
    }
}

/// Mixes extra coordinates into a master seed (SplitMix64 finalizer).
pub fn derive_seed(master: u64, parts: &[u64]) -> u64 {
    parts.iter().fold(master, |acc, &p| {
        let mut z = acc ^ p.wrapping_add(0x9e37_79b9_7f4a_7c15);
        z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
        z ^ (z >> 31)
    })
}

/// Participants per cell, in [`Cell::ALL`] order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct CellCounts(pub [u64; 6]);

impl CellCounts {
    pub fn get(&self, cell: Cell) -> u64 {
        self.0[cell.index()]
    }

    pub fn total(&self) -> u64 {
        self.0.iter().sum()
    }
}

/// `ceil` that ignores representation noise such as `0.3 · 50 = 15.000000000000002`.
fn ceil_count(x: f64) -> u64 {
    (x - 1e-9).ceil().max(0.0) as u64
}

/// Half the participants (rounded up) start on `a`; each arm splits into
/// `ceil(N_arm · γ)` responders and `ceil(N_arm · (1 − γ) / 2)` per
/// tactic. The rounding can push the realized total above `n`.
pub fn cell_counts(n: u64, gamma_a: f64, gamma_ac: f64) -> Result<CellCounts> {
    if n < 4 {
        return Err(Error::SampleSizeTooSmall { min: 4, got: n });
    }
    let n_a = n.div_ceil(2);
    let n_ac = n - n_a;
    let mut c = [0u64; 6];
    for (stage1, arm_n, g) in [(Stage1::A, n_a, gamma_a), (Stage1::Ac, n_ac, gamma_ac)] {
        c[Cell::responder(stage1).index()] = ceil_count(arm_n as f64 * g);
        for t in Tactic::ALL {
            c[Cell::nonresponder(stage1, t).index()] = ceil_count(arm_n as f64 * (1.0 - g) / 2.0);
        }
    }
    Ok(CellCounts(c))
}

/// How participants are assigned to cells.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Allocation {
    /// Deterministic per-cell counts from [`cell_counts`].
    #[default]
    Fixed,
    /// Each participant independently randomized and classified as a
    /// responder with the arm's response rate.
    Iid,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct GenOptions {
    pub allocation: Allocation,
    /// Draw one SD per cell from `Uniform(max(0.5, σ − 1), σ + 1)`.
    pub robust: bool,
}

/// Feeds `(cell, outcome)` pairs of one simulated trial into `sink`.
/// Returns the realized sample size.
fn draw_trial(
    scenario: &SimScenario,
    n: u64,
    rng: &mut ChaCha8Rng,
    opts: GenOptions,
    mut sink: impl FnMut(Cell, f64),
) -> Result<u64> {
    let d = &scenario.design;
    let sigma = d.sigma();
    let mut sd = [sigma; 6];
    if opts.robust {
        let u = Uniform::new((sigma - 1.0).max(0.5), sigma + 1.0)
            .map_err(|e| Error::InvalidDesign(format!("robust SD range: {e}")))?;
        for s in sd.iter_mut() {
            *s = rng.sample(u);
        }
    }
    let mut emit = |rng: &mut ChaCha8Rng, cell: Cell| {
        let z: f64 = rng.sample(StandardNormal);
        sink(cell, d.cell_means().get(cell) + sd[cell.index()] * z);
    };
    match opts.allocation {
        Allocation::Fixed => {
            let counts = cell_counts(n, d.gamma_a(), d.gamma_ac())?;
            for cell in Cell::ALL {
                for _ in 0..counts.get(cell) {
                    emit(rng, cell);
                }
            }
            Ok(counts.total())
        }
        Allocation::Iid => {
            if n < 4 {
                return Err(Error::SampleSizeTooSmall { min: 4, got: n });
            }
            let probs = d.probs();
            for _ in 0..n {
                let s1 = if rng.random_bool(probs.pi_a()) { Stage1::A } else { Stage1::Ac };
                let cell = if rng.random_bool(d.gamma(s1)) {
                    Cell::responder(s1)
                } else if rng.random_bool(probs.tactic(s1, Tactic::V)) {
                    Cell::nonresponder(s1, Tactic::V)
                } else {
                    Cell::nonresponder(s1, Tactic::M)
                };
                emit(rng, cell);
            }
            Ok(n)
        }
    }
}

/// One simulated trial with fixed cell counts and a common SD.
pub fn generate_trial(scenario: &SimScenario, n: u64, seed: SeedSpec) -> Result<Vec<TrialRecord>> {
    generate_trial_with(scenario, n, seed, GenOptions::default())
}

pub fn generate_trial_with(scenario: &SimScenario, n: u64, seed: SeedSpec, opts: GenOptions) -> Result<Vec<TrialRecord>> {
    let mut rng = seed.rng();
    let mut out = Vec::with_capacity(n as usize + 4);
    draw_trial(scenario, n, &mut rng, opts, |cell, y| {
        out.push(TrialRecord {
            id: format!("p{}", out.len() + 1),
            stage1: cell.stage1(),
            response: cell.is_responder(),
            stage2: cell.stage2(),
            outcome: y,
        });
    })?;
    Ok(out)
}

/// Per-cell summary of one simulated trial; same draws as [`generate_trial_with`].
pub fn simulate_summary(scenario: &SimScenario, n: u64, seed: SeedSpec, opts: GenOptions) -> Result<CellSummary> {
    let mut rng = seed.rng();
    let mut s = CellSummary::new();
    draw_trial(scenario, n, &mut rng, opts, |cell, y| s.push(cell, y))?;
    Ok(s)
}

/// Which test each replication runs.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TestSpec {
    pub mode: TestMode,
    pub pair: AiPair,
    pub theta: f64,
    pub alpha: Probability,
}

impl TestSpec {
    /// The scenario's margin and level on the standard comparison for `path`.
    pub fn for_scenario(scenario: &SimScenario, mode: TestMode, path: Path) -> Self {
        TestSpec {
            mode,
            pair: pair_for(path),
            theta: scenario.params.theta,
            alpha: scenario.params.alpha,
        }
    }

    fn rejects(&self, summary: &CellSummary, probs: &RandomizationProbs) -> Result<bool> {
        let report = match self.mode {
            TestMode::Ni => summary.ni_test(self.pair, self.theta, self.alpha, probs)?,
            TestMode::Eq => summary.equivalence_test(self.pair, self.theta, self.alpha, probs)?,
        };
        Ok(report.decision == Decision::RejectNull)
    }
}

/// A Monte Carlo rejection rate.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct McEstimate {
    pub estimate: f64,
    /// Binomial standard error `sqrt(p̂ (1 − p̂) / reps)`.
    pub se: f64,
    pub reps: u64,
    pub seed: u64,
    /// Requested sample size.
    pub n: u64,
    /// Participants actually generated per trial.
    pub n_realized: u64,
    pub rejections: u64,
}

fn run_mc(scenario: &SimScenario, spec: &TestSpec, n: u64, reps: u64, seed: u64, opts: GenOptions) -> Result<McEstimate> {
    if reps == 0 {
        return Err(Error::OutOfRange {
            name: "reps",
            value: 0.0,
            range: "[1, inf)",
        });
    }
    let probs = *scenario.design.probs();
    let n_realized = match opts.allocation {
        Allocation::Fixed => cell_counts(n, scenario.design.gamma_a(), scenario.design.gamma_ac())?.total(),
        Allocation::Iid => n,
    };
    let rejections = (0..reps)
        .into_par_iter()
        .map(|r| {
            let s = simulate_summary(scenario, n, SeedSpec::new(seed, r), opts)?;
            spec.rejects(&s, &probs).map(u64::from)
        })
        .try_reduce(|| 0, |a, b| Ok(a + b))?;
    let p = rejections as f64 / reps as f64;
    Ok(McEstimate {
        estimate: p,
        se: (p * (1.0 - p) / reps as f64).sqrt(),
        reps,
        seed,
        n,
        n_realized,
        rejections,
    })
}

/// Fraction of simulated trials of size `n` whose test rejects.
pub fn mc_power(scenario: &SimScenario, spec: &TestSpec, n: u64, reps: u64, seed: u64) -> Result<McEstimate> {
    run_mc(scenario, spec, n, reps, seed, GenOptions::default())
}

/// As [`mc_power`] but with unequal per-cell SDs drawn afresh for every
/// replication, violating the equal-variance working model.
pub fn mc_power_robust(scenario: &SimScenario, spec: &TestSpec, n: u64, reps: u64, seed: u64) -> Result<McEstimate> {
    run_mc(
        scenario,
        spec,
        n,
        reps,
        seed,
        GenOptions {
            robust: true,
            ..GenOptions::default()
        },
    )
}

/// Equivalence rejection rate when the true difference sits at the margin.
pub fn type1_rate(scenario: &SimScenario, spec: &TestSpec, n: u64, reps: u64, seed: u64) -> Result<McEstimate> {
    if spec.mode != TestMode::Eq {
        return Err(Error::InvalidDesign("Type-I rate is defined for the equivalence test".into()));
    }
    let delta = scenario.design.true_difference(spec.pair);
    if (delta.abs() - spec.theta).abs() > 0.05 * spec.theta {
        return Err(Error::InvalidDesign(format!(
            "true difference {delta:.4} is not at the margin {}",
            spec.theta
        )));
    }
    mc_power(scenario, spec, n, reps, seed)
}

/// Published reference values attached to a preset row.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Reference {
    pub eta: Option<f64>,
    pub n: Option<u64>,
    pub power: Option<f64>,
    pub power_robust: Option<f64>,
    pub type1_rate: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PresetRow {
    pub params: ScenarioParams,
    pub reference: Reference,
}

/// A named family of scenarios.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Preset {
    pub name: String,
    pub description: String,
    pub mode: TestMode,
    pub path: Path,
    /// Rows whose rejection rate is a Type-I error rate rather than power.
    pub type1: bool,
    pub rows: Vec<PresetRow>,
}

impl Preset {
    /// 1-based row lookup.
    pub fn row(&self, row: usize) -> Result<&PresetRow> {
        row.checked_sub(1)
            .and_then(|i| self.rows.get(i))
            .ok_or_else(|| Error::UnknownPresetRow {
                name: self.name.clone(),
                row,
                rows: self.rows.len(),
            })
    }
}

pub const PRESET_NAMES: [&str; 7] = [
    "power_curve",
    "ni_distinct",
    "ni_shared",
    "eq_distinct",
    "eq_shared",
    "type1_distinct",
    "type1_shared",
];

/// Power-curve sweep of the `(ac, v)` slope.
pub const POWER_CURVE_XI2_AC_V: [f64; 25] = [
    3.4, 3.2, 3.0, 2.8, 2.6, 2.4, 2.2, 2.0, 1.8, 1.5, 1.3, 1.0, 0.8, 0.6, 0.4, 0.2, 0.0, -0.2, -0.4, -0.6, -0.8,
    -2.0, -2.2, -2.4, -2.6,
];

const GAMMAS: [f64; 5] = [0.50, 0.45, 0.40, 0.35, 0.30];

fn prob(x: f64) -> Probability {
    Probability::new(x).expect("preset probability")
}

fn base(sigma: f64, theta: f64) -> ScenarioParams {
    ScenarioParams {
        sigma,
        gamma_a: 0.3,
        gamma_ac: 0.4,
        mu_la: 2.0,
        sigma_l: 0.2,
        zeta0: 0.02,
        zeta1a: 0.5,
        zeta1ac: 0.5,
        xi0: 0.03,
        xi1a: 0.25,
        xi1ac: 0.25,
        xi2_a_m: 1.0,
        xi2_a_v: 1.0,
        xi2_ac_m: 1.0,
        xi2_ac_v: 1.0,
        alpha: prob(0.05),
        beta: prob(0.20),
        theta,
    }
}

fn ni_base(theta: f64) -> ScenarioParams {
    ScenarioParams {
        gamma_a: 0.30,
        zeta1a: 0.8,
        zeta1ac: 0.7,
        xi1a: 0.5,
        xi1ac: 0.4,
        xi2_a_m: 1.3,
        xi2_ac_m: 0.8,
        xi2_ac_v: 0.8,
        ..base(3.0, theta)
    }
}

fn reference(eta: f64, n: u64, power: f64, power_robust: Option<f64>) -> Reference {
    Reference {
        eta: Some(eta),
        n: Some(n),
        power: Some(power),
        power_robust,
        type1_rate: None,
    }
}

fn power_curve_preset() -> Preset {
    let p = ScenarioParams {
        gamma_a: 0.3,
        gamma_ac: 0.4,
        zeta1ac: 0.8,
        xi1ac: 0.5,
        xi2_a_m: 1.3,
        xi2_a_v: 1.3,
        xi2_ac_m: 0.8,
        ..base(2.0, 2.0)
    };
    Preset {
        name: "power_curve".into(),
        description: "Power-curve sweep over the (ac,v) non-responder slope, theta = 2".into(),
        mode: TestMode::Ni,
        path: Path::Distinct,
        type1: false,
        rows: POWER_CURVE_XI2_AC_V
            .iter()
            .map(|&x| PresetRow {
                params: ScenarioParams { xi2_ac_v: x, ..p },
                reference: Reference::default(),
            })
            .collect(),
    }
}

fn ni_distinct_preset() -> Preset {
    let published = [
        (3.0, 0.379, 87, 0.82, 0.81),
        (3.0, 0.371, 90, 0.80, 0.80),
        (3.0, 0.362, 95, 0.82, 0.82),
        (3.0, 0.354, 99, 0.82, 0.81),
        (3.0, 0.347, 103, 0.79, 0.81),
        (2.5, 0.251, 197, 0.80, 0.79),
        (2.5, 0.243, 210, 0.81, 0.81),
        (2.5, 0.236, 223, 0.80, 0.80),
        (2.5, 0.230, 234, 0.79, 0.81),
        (2.5, 0.223, 249, 0.84, 0.82),
    ];
    let rows = published
        .iter()
        .zip(GAMMAS.iter().cycle())
        .map(|(&(theta, eta, n, pw, pr), &g)| PresetRow {
            params: ScenarioParams {
                gamma_ac: g,
                xi2_a_v: if theta == 3.0 { 0.01 } else { -0.20 },
                ..ni_base(theta)
            },
            reference: reference(eta, n, pw, Some(pr)),
        })
        .collect();
    Preset {
        name: "ni_distinct".into(),
        description: "Non-inferiority, distinct path (d3 control vs d1), theta in {3.0, 2.5}".into(),
        mode: TestMode::Ni,
        path: Path::Distinct,
        type1: false,
        rows,
    }
}

fn ni_shared_preset() -> Preset {
    let published = [
        (3.0, 0.384, 84, 0.79, 0.78),
        (3.0, 0.345, 104, 0.78, 0.78),
        (3.0, 0.312, 128, 0.81, 0.79),
        (3.0, 0.281, 157, 0.84, 0.84),
        (3.0, 0.254, 192, 0.80, 0.79),
        (2.5, 0.252, 195, 0.77, 0.76),
        (2.5, 0.215, 268, 0.79, 0.79),
        (2.5, 0.184, 366, 0.79, 0.79),
        (2.5, 0.157, 502, 0.83, 0.81),
        (2.5, 0.130, 732, 0.82, 0.82),
    ];
    let rows = published
        .iter()
        .zip(GAMMAS.iter().cycle())
        .map(|(&(theta, eta, n, pw, pr), &g)| PresetRow {
            params: ScenarioParams {
                gamma_ac: g,
                xi2_a_v: 0.3,
                xi2_ac_m: if theta == 3.0 { -0.38 } else { -0.53 },
                ..ni_base(theta)
            },
            reference: reference(eta, n, pw, Some(pr)),
        })
        .collect();
    Preset {
        name: "ni_shared".into(),
        description: "Non-inferiority, shared path (d3 control vs d4), theta in {3.0, 2.5}".into(),
        mode: TestMode::Ni,
        path: Path::Shared,
        type1: false,
        rows,
    }
}

fn eq_preset(name: &str, path: Path, xi2_ac_m: f64, published: [(f64, u64, f64); 5]) -> Preset {
    let rows = published
        .iter()
        .zip(GAMMAS)
        .map(|(&(eta, n, pw), g)| PresetRow {
            params: ScenarioParams {
                gamma_a: g,
                gamma_ac: g,
                xi2_ac_m,
                xi2_ac_v: 0.95,
                ..base(4.0, 2.0)
            },
            reference: reference(eta, n, pw, None),
        })
        .collect();
    Preset {
        name: name.into(),
        description: format!("Equivalence, {path} path, theta = 2, true difference near zero"),
        mode: TestMode::Eq,
        path,
        type1: false,
        rows,
    }
}

fn type1_preset(name: &str, path: Path, eta: f64, published: [(u64, f64); 5]) -> Preset {
    let p = ScenarioParams {
        gamma_a: 0.45,
        gamma_ac: 0.45,
        xi2_a_m: -1.01,
        xi2_a_v: 1.0,
        xi2_ac_m: 0.95,
        xi2_ac_v: -1.0,
        ..base(4.0, 2.0)
    };
    Preset {
        name: name.into(),
        description: format!("Equivalence with the true difference at the margin, {path} path, theta = 2"),
        mode: TestMode::Eq,
        path,
        type1: true,
        rows: published
            .iter()
            .map(|&(n, rate)| PresetRow {
                params: p,
                reference: Reference {
                    eta: Some(eta),
                    n: Some(n),
                    type1_rate: Some(rate),
                    ..Reference::default()
                },
            })
            .collect(),
    }
}

/// All named scenario families.
pub fn presets() -> Vec<Preset> {
    vec![
        power_curve_preset(),
        ni_distinct_preset(),
        ni_shared_preset(),
        eq_preset(
            "eq_distinct",
            Path::Distinct,
            1.0,
            [(0.265, 244, 0.83), (0.259, 256, 0.83), (0.254, 266, 0.82), (0.249, 277, 0.82), (0.244, 288, 0.84)],
        ),
        eq_preset(
            "eq_shared",
            Path::Shared,
            0.94,
            [(0.307, 182, 0.83), (0.293, 200, 0.85), (0.280, 219, 0.86), (0.269, 237, 0.86), (0.258, 258, 0.85)],
        ),
        type1_preset(
            "type1_distinct",
            Path::Distinct,
            0.265,
            [(244, 0.038), (500, 0.037), (1000, 0.033), (2000, 0.043), (5000, 0.043)],
        ),
        type1_preset(
            "type1_shared",
            Path::Shared,
            0.313,
            [(175, 0.066), (500, 0.039), (1000, 0.041), (2000, 0.055), (5000, 0.051)],
        ),
    ]
}

pub fn preset(name: &str) -> Result<Preset> {
    presets()
        .into_iter()
        .find(|p| p.name == name)
        .ok_or_else(|| Error::UnknownPreset(name.to_string()))
}

/// A Monte Carlo run of one preset row.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PresetRun {
    pub row: usize,
    /// Defaults to the row's published sample size.
    pub n: Option<u64>,
    pub reps: u64,
    pub seed: u64,
    #[serde(default)]
    pub robust: bool,
}

/// Runs the preset's test on one row: power for planning presets, the
/// Type-I rate for the Type-I presets.
pub fn run_preset(preset: &Preset, run: &PresetRun) -> Result<McEstimate> {
    let row = preset.row(run.row)?;
    let n = run.n.or(row.reference.n).ok_or_else(|| {
        Error::InvalidDesign(format!("preset {} has no reference sample size; pass n", preset.name))
    })?;
    let scenario = build_scenario(&row.params)?;
    let spec = TestSpec::for_scenario(&scenario, preset.mode, preset.path);
    match (preset.type1, run.robust) {
        (true, false) => type1_rate(&scenario, &spec, n, run.reps, run.seed),
        (true, true) => Err(Error::InvalidDesign("robust variance draws apply to power presets only".into())),
        (false, false) => mc_power(&scenario, &spec, n, run.reps, run.seed),
        (false, true) => mc_power_robust(&scenario, &spec, n, run.reps, run.seed),
    }
}

/// Power curve over a list of scenarios: one grid point per scenario, the
/// standardized effect taken from `path`. Equivalence grids keep only the
/// scenarios whose true difference lies inside the margin.
pub fn scenario_power_curve(
    params: &[ScenarioParams],
    mode: TestMode,
    path: Path,
    n_list: &[u64],
    alpha: Probability,
    mc: Option<(u64, u64)>,
) -> Result<Vec<CurveRow>> {
    let mut scenarios = Vec::new();
    for p in params {
        let s = build_scenario(p)?;
        let e = s.eta(path);
        if mode == TestMode::Ni || e.eta_delta.abs() < e.eta_theta {
            scenarios.push(s);
        }
    }
    let grid = match mode {
        TestMode::Ni => CurveGrid::Ni(scenarios.iter().map(|s| s.eta(path).eta).collect()),
        TestMode::Eq => CurveGrid::Eq(
            scenarios
                .iter()
                .map(|s| (s.eta(path).eta_theta, s.eta(path).eta_delta))
                .collect(),
        ),
    };
    match mc {
        None => power_curve(n_list, &grid, alpha, None),
        Some((reps, seed)) => {
            let hook = |n: u64, i: usize| {
                let s = &scenarios[i];
                let spec = TestSpec {
                    alpha,
                    ..TestSpec::for_scenario(s, mode, path)
                };
                let est = mc_power(s, &spec, n, reps, derive_seed(seed, &[n, i as u64]))?;
                Ok((est.estimate, est.se))
            };
            power_curve(n_list, &grid, alpha, Some(&hook))
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ni_row1() -> SimScenario {
        build_scenario(&preset("ni_distinct").unwrap().rows[0].params).unwrap()
    }

    #[test]
    fn cutoff_examples() {
        let p = ScenarioParams {
            gamma_a: 0.5,
            ..ni_base(3.0)
        };
        let s = build_scenario(&p).unwrap();
        assert!((s.latent_cutoff - 2.0).abs() < 1e-15);
        let s = ni_row1();
        // 2 + 0.2 · Φ⁻¹(0.7) and 2 − 0.2 · φ(u)/Φ(u) at u = Φ⁻¹(0.7).
        assert!((s.latent_cutoff - 2.1049).abs() < 1e-4);
        assert!((s.mu_la_nr - 1.9007).abs() < 1e-4);
        assert!(s.mu_la_nr < s.latent_cutoff.min(s.params.mu_la));
        assert!(s.mu_lac_nr < s.latent_cutoff.min(s.mu_lac));
    }

    #[test]
    fn degenerate_response_rate_rejected() {
        let p = ScenarioParams {
            gamma_ac: 1.0,
            ..ni_base(3.0)
        };
        assert!(matches!(build_scenario(&p), Err(Error::InvalidDesign(_))));
        let p = ScenarioParams { theta: 0.0, ..ni_base(3.0) };
        assert!(build_scenario(&p).is_err());
    }

    #[test]
    fn counts_example() {
        let c = cell_counts(100, 0.3, 0.5).unwrap();
        assert_eq!(c.get(Cell::AA), 15);
        assert_eq!(c.get(Cell::AV), 18);
        assert_eq!(c.get(Cell::AM), 18);
        assert_eq!(c.get(Cell::AcAc), 25);
        assert_eq!(c.get(Cell::AcV), 13);
        assert_eq!(c.total(), 101 + 1);
        assert!(cell_counts(3, 0.3, 0.5).is_err());
        assert!(Cell::ALL.iter().all(|&cell| cell_counts(4, 0.3, 0.5).unwrap().get(cell) >= 1));
    }

    #[test]
    fn generation_is_deterministic_and_valid() {
        let s = ni_row1();
        let a = generate_trial(&s, 87, SeedSpec::new(42, 3)).unwrap();
        let b = generate_trial(&s, 87, SeedSpec::new(42, 3)).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, generate_trial(&s, 87, SeedSpec::new(42, 4)).unwrap());
        assert_eq!(a.len() as u64, cell_counts(87, 0.3, 0.5).unwrap().total());
        assert!(a.iter().all(|r| r.check().is_ok()));
        let summary = simulate_summary(&s, 87, SeedSpec::new(42, 3), GenOptions::default()).unwrap();
        assert_eq!(summary, CellSummary::from_records(&a).unwrap());
    }

    #[test]
    fn robust_draws_stay_in_range() {
        let s = ni_row1();
        let recs = generate_trial_with(
            &s,
            2000,
            SeedSpec::new(1, 0),
            GenOptions {
                robust: true,
                ..GenOptions::default()
            },
        )
        .unwrap();
        let summary = CellSummary::from_records(&recs).unwrap();
        for cell in Cell::ALL {
            let (n, _) = (summary.count(cell), summary.mean(cell));
            assert!(n > 100);
        }
        // σ = 3 gives per-cell SDs in (2, 4); the pooled SD must land there too.
        let sd = summary.design(&RandomizationProbs::default()).unwrap().sigma();
        assert!(sd > 2.0 && sd < 4.0, "{sd}");
    }

    #[test]
    fn iid_allocation_respects_probabilities() {
        let s = ni_row1();
        let recs = generate_trial_with(
            &s,
            40_000,
            SeedSpec::new(9, 0),
            GenOptions {
                allocation: Allocation::Iid,
                robust: false,
            },
        )
        .unwrap();
        let n_a = recs.iter().filter(|r| r.stage1 == Stage1::A).count() as f64;
        let resp_a = recs.iter().filter(|r| r.stage1 == Stage1::A && r.response).count() as f64;
        assert!((n_a / 40_000.0 - 0.5).abs() < 4.0 * (0.25f64 / 40_000.0).sqrt());
        assert!((resp_a / n_a - 0.3).abs() < 4.0 * (0.21 / n_a).sqrt());
    }

    #[test]
    fn latent_cutoff_reproduces_response_rate() {
        let s = ni_row1();
        for (stage1, g) in [(Stage1::A, 0.3), (Stage1::Ac, 0.5)] {
            let draws = draw_latent(&s, stage1, 200_000, SeedSpec::new(5, stage1 as u64));
            let frac = draws.iter().filter(|&&l| l > s.latent_cutoff).count() as f64 / draws.len() as f64;
            assert!((frac - g).abs() < 4.0 * (g * (1.0 - g) / 200_000.0).sqrt(), "{stage1}: {frac}");
            let below: Vec<f64> = draws.into_iter().filter(|&l| l <= s.latent_cutoff).collect();
            let m = below.iter().sum::<f64>() / below.len() as f64;
            let nr = match stage1 {
                Stage1::A => s.mu_la_nr,
                Stage1::Ac => s.mu_lac_nr,
            };
            assert!((m - nr).abs() < 2e-3, "{m} vs {nr}");
        }
    }

    #[test]
    fn mc_is_order_independent_and_reproducible() {
        let s = ni_row1();
        let spec = TestSpec::for_scenario(&s, TestMode::Ni, Path::Distinct);
        let a = mc_power(&s, &spec, 87, 200, 42).unwrap();
        let b = mc_power(&s, &spec, 87, 200, 42).unwrap();
        assert_eq!(a, b);
        let serial: u64 = (0..200)
            .map(|r| {
                let sum = simulate_summary(&s, 87, SeedSpec::new(42, r), GenOptions::default()).unwrap();
                u64::from(spec.rejects(&sum, &RandomizationProbs::default()).unwrap())
            })
            .sum();
        assert_eq!(a.rejections, serial);
        assert!(mc_power(&s, &spec, 87, 0, 42).is_err());
    }

    #[test]
    fn huge_effect_always_rejects() {
        let s = ni_row1();
        let spec = TestSpec {
            theta: 50.0,
            ..TestSpec::for_scenario(&s, TestMode::Ni, Path::Distinct)
        };
        let e = mc_power(&s, &spec, 200, 100, 1).unwrap();
        assert_eq!(e.estimate, 1.0);
        assert_eq!(e.se, 0.0);
    }

    #[test]
    fn type1_requires_boundary_scenario() {
        let s = ni_row1();
        let spec = TestSpec::for_scenario(&s, TestMode::Eq, Path::Distinct);
        assert!(type1_rate(&s, &spec, 100, 10, 1).is_err());
        let t = build_scenario(&preset("type1_distinct").unwrap().rows[0].params).unwrap();
        let spec = TestSpec::for_scenario(&t, TestMode::Eq, Path::Distinct);
        assert!(type1_rate(&t, &spec, 244, 10, 1).is_ok());
        let ni = TestSpec { mode: TestMode::Ni, ..spec };
        assert!(type1_rate(&t, &ni, 244, 10, 1).is_err());
    }

    #[test]
    fn preset_catalogue() {
        let all = presets();
        let names: Vec<&str> = all.iter().map(|p| p.name.as_str()).collect();
        assert_eq!(names, PRESET_NAMES);
        let ni = preset("ni_distinct").unwrap();
        let p = ni.rows[0].params;
        assert_eq!((p.sigma, p.gamma_a, p.mu_la, p.sigma_l), (3.0, 0.30, 2.0, 0.2));
        assert_eq!(ni.rows.len(), 10);
        let pc = preset("power_curve").unwrap();
        let sweep: Vec<f64> = pc.rows.iter().map(|r| r.params.xi2_ac_v).collect();
        assert_eq!(sweep, POWER_CURVE_XI2_AC_V);
        let eq = preset("eq_distinct").unwrap();
        assert_eq!((eq.rows[0].params.theta, eq.rows[0].params.sigma), (2.0, 4.0));
        assert!(matches!(preset("nope"), Err(Error::UnknownPreset(_))));
        assert!(matches!(ni.row(11), Err(Error::UnknownPresetRow { .. })));
        assert!(ni.row(0).is_err());
        assert_eq!(ni.row(10).unwrap().reference.n, Some(249));
    }

    #[test]
    fn preset_runs_dispatch() {
        let t1 = preset("type1_shared").unwrap();
        let run = PresetRun {
            row: 1,
            n: None,
            reps: 20,
            seed: 3,
            robust: false,
        };
        let e = run_preset(&t1, &run).unwrap();
        assert_eq!((e.n, e.reps), (175, 20));
        assert!(run_preset(&t1, &PresetRun { robust: true, ..run }).is_err());
        let pc = preset("power_curve").unwrap();
        assert!(run_preset(&pc, &run).is_err());
        assert!(run_preset(&pc, &PresetRun { n: Some(100), ..run }).is_ok());
    }

    #[test]
    fn seeds_mix() {
        assert_ne!(derive_seed(1, &[100, 0]), derive_seed(1, &[100, 1]));
        assert_ne!(derive_seed(1, &[100, 0]), derive_seed(2, &[100, 0]));
        assert_eq!(derive_seed(7, &[3]), derive_seed(7, &[3]));
    }
}
