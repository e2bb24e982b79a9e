//! Request/response documents and the pure functions behind each route.

use serde::{Deserialize, Serialize};
use smartnie_core::inference::{equivalence_test, ni_test, TestReport, TrialRecord};
use smartnie_core::planning::{
    attrition_inflate, power as plan_power, power_curve, sample_size, CurveGrid, CurveRow, PlanInput, TestMode,
};
use smartnie_core::simulation::{
    build_scenario, mc_power, mc_power_robust, preset as find_preset, presets as all_presets, run_preset, scenario_power_curve,
    McEstimate, PresetRun, Reference, ScenarioParams, TestSpec,
};
use smartnie_core::trial_file::read_trial_csv;
use smartnie_core::{AiPair, EmbeddedAi, Error, Path, Probability, RandomizationProbs, SmartDesign};

use crate::{ApiError, VERSION};

fn default_alpha() -> Probability {
    Probability::new(0.05).expect("valid")
}

fn default_beta() -> Probability {
    Probability::new(0.20).expect("valid")
}

fn default_row() -> usize {
    1
}

fn pair(control: Option<EmbeddedAi>, new: Option<EmbeddedAi>) -> Result<AiPair, ApiError> {
    match (control, new) {
        (Some(c), Some(n)) => Ok(AiPair::new(c, n)?),
        _ => Err(ApiError::bad_request("missing_field", "both control and new AIs are required")),
    }
}

fn missing(field: &str) -> ApiError {
    ApiError::bad_request("missing_field", format!("missing field `{field}`"))
}

/// Planning inputs: either standardized effect sizes or a design with a
/// comparison, margin and optional true difference.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlanRequest {
    pub mode: TestMode,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub path: Option<Path>,
    /// Overall `η = η_θ − η_δ`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub eta: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub eta_theta: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub eta_delta: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub design: Option<SmartDesign>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub control: Option<EmbeddedAi>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub new: Option<EmbeddedAi>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub theta: Option<f64>,
    /// True difference `μ_control − μ_new`. Without a design only zero is
    /// meaningful (it fixes `η_δ = 0`).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub delta: Option<f64>,
    #[serde(default = "default_alpha")]
    pub alpha: Probability,
    #[serde(default = "default_beta")]
    pub beta: Probability,
    /// Expected fraction lost to follow-up; inflates the reported N.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dropout: Option<f64>,
}

impl PlanRequest {
    pub fn new(mode: TestMode) -> Self {
        PlanRequest {
            mode,
            path: None,
            eta: None,
            eta_theta: None,
            eta_delta: None,
            design: None,
            control: None,
            new: None,
            theta: None,
            delta: None,
            alpha: default_alpha(),
            beta: default_beta(),
            dropout: None,
        }
    }

    /// Turns the request into standardized planning inputs.
    pub fn resolve(&self) -> Result<PlanInput, ApiError> {
        if let Some(design) = &self.design {
            if self.eta.is_some() || self.eta_theta.is_some() || self.eta_delta.is_some() {
                return Err(ApiError::bad_request(
                    "conflicting_inputs",
                    "give either a design or standardized effect sizes, not both",
                ));
            }
            let pair = pair(self.control, self.new)?;
            if let Some(p) = self.path {
                if p != pair.path() {
                    return Err(ApiError::bad_request(
                        "conflicting_inputs",
                        format!(
                            "{} vs {} is a {} path comparison, not {p}",
                            pair.control().label(),
                            pair.candidate().label(),
                            pair.path()
                        ),
                    ));
                }
            }
            let theta = self.theta.ok_or_else(|| missing("theta"))?;
            return Ok(PlanInput::from_design(
                self.mode, design, pair, theta, self.delta, self.alpha, self.beta,
            )?);
        }
        let (eta_theta, eta_delta) = match (self.eta, self.eta_theta) {
            (Some(_), Some(_)) => {
                return Err(ApiError::bad_request("conflicting_inputs", "give eta or eta_theta, not both"))
            }
            (Some(eta), None) => {
                if self.eta_delta.is_some() {
                    return Err(ApiError::bad_request("conflicting_inputs", "eta already includes eta_delta"));
                }
                (eta, 0.0)
            }
            (None, Some(et)) => {
                let ed = match (self.eta_delta, self.delta) {
                    (Some(ed), _) => ed,
                    (None, None) => 0.0,
                    (None, Some(d)) if d == 0.0 => 0.0,
                    (None, Some(_)) => {
                        return Err(ApiError::bad_request(
                            "missing_field",
                            "a nonzero delta needs a design to standardize it; pass eta_delta instead",
                        ))
                    }
                };
                (et, ed)
            }
            (None, None) => return Err(missing("eta")),
        };
        let input = PlanInput {
            mode: self.mode,
            path: self.path.unwrap_or(Path::Distinct),
            eta_theta,
            eta_delta,
            alpha: self.alpha,
            beta: self.beta,
        };
        input.validate()?;
        Ok(input)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlanResponse {
    pub n: u64,
    pub achieved_power: f64,
    pub mode: TestMode,
    pub path: Path,
    pub eta: f64,
    pub eta_theta: f64,
    pub eta_delta: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dropout: Option<f64>,
    /// `n` inflated for dropout, present when `dropout` was given.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub n_inflated: Option<u64>,
    pub inputs: PlanRequest,
    pub version: String,
}

/// `POST /api/plan`.
pub fn plan(req: &PlanRequest) -> Result<PlanResponse, ApiError> {
    let input = req.resolve()?;
    let result = sample_size(&input)?;
    let n_inflated = req.dropout.map(|d| attrition_inflate(result.n, d)).transpose()?;
    Ok(PlanResponse {
        n: result.n,
        achieved_power: result.achieved_power.value(),
        mode: input.mode,
        path: input.path,
        eta: input.eta(),
        eta_theta: input.eta_theta,
        eta_delta: input.eta_delta,
        dropout: req.dropout,
        n_inflated,
        inputs: req.clone(),
        version: VERSION.into(),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PowerRequest {
    #[serde(flatten)]
    pub plan: PlanRequest,
    pub n: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PowerResponse {
    pub n: u64,
    pub power: f64,
    pub mode: TestMode,
    pub path: Path,
    pub eta: f64,
    pub eta_theta: f64,
    pub eta_delta: f64,
    pub inputs: PowerRequest,
    pub version: String,
}

/// `POST /api/power`: power at a fixed sample size.
pub fn power(req: &PowerRequest) -> Result<PowerResponse, ApiError> {
    let input = req.plan.resolve()?;
    let p = plan_power(&input, req.n)?;
    Ok(PowerResponse {
        n: req.n,
        power: p.value(),
        mode: input.mode,
        path: input.path,
        eta: input.eta(),
        eta_theta: input.eta_theta,
        eta_delta: input.eta_delta,
        inputs: req.clone(),
        version: VERSION.into(),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnalyzeRequest {
    /// Inline records; alternatively `csv` holds a trial file's text.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub records: Option<Vec<TrialRecord>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub csv: Option<String>,
    pub mode: TestMode,
    pub control: EmbeddedAi,
    pub new: EmbeddedAi,
    pub theta: f64,
    #[serde(default = "default_alpha")]
    pub alpha: Probability,
    #[serde(default)]
    pub probs: RandomizationProbs,
}

/// Echo of an analysis request without the data itself.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnalyzeInputs {
    pub mode: TestMode,
    pub control: EmbeddedAi,
    pub new: EmbeddedAi,
    pub theta: f64,
    pub alpha: Probability,
    pub probs: RandomizationProbs,
    pub n_records: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnalyzeResponse {
    pub report: TestReport,
    pub inputs: AnalyzeInputs,
    pub version: String,
}

/// Runs the requested test on already-parsed records.
pub fn run_analysis(
    records: &[TrialRecord],
    mode: TestMode,
    pair: AiPair,
    theta: f64,
    alpha: Probability,
    probs: &RandomizationProbs,
) -> Result<TestReport, Error> {
    match mode {
        TestMode::Ni => ni_test(records, pair, theta, alpha, probs),
        TestMode::Eq => equivalence_test(records, pair, theta, alpha, probs),
    }
}

/// `POST /api/analyze`.
pub fn analyze(req: &AnalyzeRequest) -> Result<AnalyzeResponse, ApiError> {
    let parsed;
    let records: &[TrialRecord] = match (&req.records, &req.csv) {
        (Some(r), None) => r,
        (None, Some(text)) => {
            parsed = read_trial_csv(text.as_bytes())?;
            &parsed
        }
        _ => {
            return Err(ApiError::bad_request(
                "conflicting_inputs",
                "give exactly one of `records` or `csv`",
            ))
        }
    };
    let pair = AiPair::new(req.control, req.new)?;
    let report = run_analysis(records, req.mode, pair, req.theta, req.alpha, &req.probs)?;
    Ok(AnalyzeResponse {
        report,
        inputs: AnalyzeInputs {
            mode: req.mode,
            control: req.control,
            new: req.new,
            theta: req.theta,
            alpha: req.alpha,
            probs: req.probs,
            n_records: records.len(),
        },
        version: VERSION.into(),
    })
}

/// A simulation of either a preset row or an explicit scenario.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimulateRequest {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub preset: Option<String>,
    #[serde(default = "default_row")]
    pub row: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub scenario: Option<ScenarioParams>,
    /// Test and comparison for an explicit scenario.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mode: Option<TestMode>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub path: Option<Path>,
    /// Defaults to the preset row's reference sample size.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub n: Option<u64>,
    pub reps: u64,
    pub seed: u64,
    #[serde(default)]
    pub robust: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimulateResponse {
    pub estimate: f64,
    pub se: f64,
    pub reps: u64,
    pub seed: u64,
    pub n: u64,
    pub n_realized: u64,
    pub rejections: u64,
    /// `power` or `type1_rate`.
    pub metric: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reference: Option<Reference>,
    pub inputs: SimulateRequest,
    pub version: String,
}

fn check_reps(reps: u64, cap: u64) -> Result<(), ApiError> {
    if reps == 0 || reps > cap {
        Err(ApiError::bad_request(
            "reps_out_of_range",
            format!("reps must be between 1 and {cap}, got {reps}"),
        ))
    } else {
        Ok(())
    }
}

/// `POST /api/simulate`.
pub fn simulate(req: &SimulateRequest, reps_cap: u64) -> Result<SimulateResponse, ApiError> {
    check_reps(req.reps, reps_cap)?;
    let (est, metric, reference): (McEstimate, &str, Option<Reference>) = match (&req.preset, &req.scenario) {
        (Some(name), None) => {
            let preset = find_preset(name)?;
            let reference = preset.row(req.row)?.reference;
            let run = PresetRun {
                row: req.row,
                n: req.n,
                reps: req.reps,
                seed: req.seed,
                robust: req.robust,
            };
            let metric = if preset.type1 { "type1_rate" } else { "power" };
            (run_preset(&preset, &run)?, metric, Some(reference))
        }
        (None, Some(params)) => {
            let scenario = build_scenario(params)?;
            let mode = req.mode.ok_or_else(|| missing("mode"))?;
            let path = req.path.ok_or_else(|| missing("path"))?;
            let n = req.n.ok_or_else(|| missing("n"))?;
            let spec = TestSpec::for_scenario(&scenario, mode, path);
            let est = if req.robust {
                mc_power_robust(&scenario, &spec, n, req.reps, req.seed)?
            } else {
                mc_power(&scenario, &spec, n, req.reps, req.seed)?
            };
            (est, "power", None)
        }
        _ => {
            return Err(ApiError::bad_request(
                "conflicting_inputs",
                "give exactly one of `preset` or `scenario`",
            ))
        }
    };
    Ok(SimulateResponse {
        estimate: est.estimate,
        se: est.se,
        reps: est.reps,
        seed: est.seed,
        n: est.n,
        n_realized: est.n_realized,
        rejections: est.rejections,
        metric: metric.into(),
        reference,
        inputs: req.clone(),
        version: VERSION.into(),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct McSpec {
    pub reps: u64,
    pub seed: u64,
}

/// A power curve over explicit standardized effects or a preset's scenarios.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CurveRequest {
    pub mode: TestMode,
    #[serde(default = "default_path")]
    pub path: Path,
    pub n_list: Vec<u64>,
    /// Non-inferiority grid of overall `η`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub eta: Option<Vec<f64>>,
    /// Equivalence grid of `(η_θ, η_δ)` pairs.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub points: Option<Vec<(f64, f64)>>,
    /// Preset whose rows supply the grid; required for Monte Carlo columns.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub preset: Option<String>,
    #[serde(default = "default_alpha")]
    pub alpha: Probability,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mc: Option<McSpec>,
}

fn default_path() -> Path {
    Path::Distinct
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CurveResponse {
    pub rows: Vec<CurveRow>,
    pub inputs: CurveRequest,
    pub version: String,
}

/// `POST /api/curve`.
pub fn curve(req: &CurveRequest, reps_cap: u64) -> Result<CurveResponse, ApiError> {
    if let Some(mc) = req.mc {
        check_reps(mc.reps, reps_cap)?;
    }
    let rows = match (&req.preset, &req.eta, &req.points) {
        (Some(name), None, None) => {
            let params: Vec<ScenarioParams> = find_preset(name)?.rows.iter().map(|r| r.params).collect();
            scenario_power_curve(
                &params,
                req.mode,
                req.path,
                &req.n_list,
                req.alpha,
                req.mc.map(|m| (m.reps, m.seed)),
            )?
        }
        (None, eta, points) if req.mc.is_none() => {
            let grid = match (req.mode, eta, points) {
                (TestMode::Ni, Some(e), None) => CurveGrid::Ni(e.clone()),
                (TestMode::Eq, None, Some(p)) => CurveGrid::Eq(p.clone()),
                (TestMode::Ni, _, _) => return Err(missing("eta")),
                (TestMode::Eq, _, _) => return Err(missing("points")),
            };
            power_curve(&req.n_list, &grid, req.alpha, None)?
        }
        (None, _, _) => {
            return Err(ApiError::bad_request(
                "conflicting_inputs",
                "Monte Carlo columns need a preset to generate data from",
            ))
        }
        _ => {
            return Err(ApiError::bad_request(
                "conflicting_inputs",
                "give either a preset or an explicit grid, not both",
            ))
        }
    };
    Ok(CurveResponse {
        rows,
        inputs: req.clone(),
        version: VERSION.into(),
    })
}

/// A preset row with its derived effect sizes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PresetRowInfo {
    pub row: usize,
    pub params: ScenarioParams,
    pub reference: Reference,
    /// True difference on the preset's comparison.
    pub delta: f64,
    pub eta: f64,
    pub eta_theta: f64,
    pub eta_delta: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PresetInfo {
    pub name: String,
    pub description: String,
    pub mode: TestMode,
    pub path: Path,
    pub type1: bool,
    pub rows: Vec<PresetRowInfo>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PresetsResponse {
    pub presets: Vec<PresetInfo>,
    pub inputs: serde_json::Value,
    pub version: String,
}

/// `GET /api/presets`.
pub fn presets() -> Result<PresetsResponse, ApiError> {
    let mut out = Vec::new();
    for p in all_presets() {
        let mut rows = Vec::with_capacity(p.rows.len());
        for (i, r) in p.rows.iter().enumerate() {
            let s = build_scenario(&r.params)?;
            let eta = s.eta(p.path);
            rows.push(PresetRowInfo {
                row: i + 1,
                params: r.params,
                reference: r.reference,
                delta: s.delta(p.path),
                eta: eta.eta,
                eta_theta: eta.eta_theta,
                eta_delta: eta.eta_delta,
            });
        }
        out.push(PresetInfo {
            name: p.name,
            description: p.description,
            mode: p.mode,
            path: p.path,
            type1: p.type1,
            rows,
        });
    }
    Ok(PresetsResponse {
        presets: out,
        inputs: serde_json::json!({}),
        version: VERSION.into(),
    })
}
