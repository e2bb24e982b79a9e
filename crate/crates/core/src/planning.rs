//! Sample size and power for non-inferiority and equivalence comparisons.
//!
//! Everything is expressed through standardized effect sizes, so one formula
//! serves both distinct- and shared-path comparisons: the path only changes
//! the variance used to standardize.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::fmt;
use std::str::FromStr;

use crate::design::{AiPair, Path, SmartDesign};
use crate::error::{check_finite, check_open_unit, Error, Result};
use crate::normal::{cdf, upper_critical, Probability};

/// Upper end of the sample-size search.
pub const SEARCH_LIMIT: u64 = 10_000_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TestMode {
    Ni,
    Eq,
}

impl fmt::Display for TestMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            TestMode::Ni => "ni",
            TestMode::Eq => "eq",
        })
    }
}

impl FromStr for TestMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "ni" => Ok(TestMode::Ni),
            "eq" => Ok(TestMode::Eq),
            other => Err(Error::Parse(format!("unknown mode {other:?} (expected ni or eq)"))),
        }
    }
}

/// Standardized planning inputs. For non-inferiority only
/// `eta_theta − eta_delta` matters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PlanInput {
    pub mode: TestMode,
    pub path: Path,
    pub eta_theta: f64,
    pub eta_delta: f64,
    pub alpha: Probability,
    pub beta: Probability,
}

impl PlanInput {
    /// Derives the standardized quantities from a design. `delta` defaults
    /// to the design's true difference `μ_control − μ_new`.
    pub fn from_design(
        mode: TestMode,
        design: &SmartDesign,
        pair: AiPair,
        theta: f64,
        delta: Option<f64>,
        alpha: Probability,
        beta: Probability,
    ) -> Result<Self> {
        let delta = delta.unwrap_or_else(|| design.true_difference(pair));
        let s = design.standardized_quantities(pair, theta, delta)?;
        Ok(PlanInput {
            mode,
            path: pair.path(),
            eta_theta: s.eta_theta,
            eta_delta: s.eta_delta,
            alpha,
            beta,
        })
    }

    pub fn eta(&self) -> f64 {
        self.eta_theta - self.eta_delta
    }

    pub fn validate(&self) -> Result<()> {
        check_finite("eta_theta", self.eta_theta)?;
        check_finite("eta_delta", self.eta_delta)?;
        check_open_unit("alpha", self.alpha.value())?;
        check_open_unit("beta", self.beta.value())?;
        let gap = match self.mode {
            TestMode::Ni => self.eta(),
            TestMode::Eq => self.eta_theta - self.eta_delta.abs(),
        };
        if gap > 0.0 {
            Ok(())
        } else {
            Err(Error::EtaNonPositive(gap))
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PlanResult {
    pub n: u64,
    pub achieved_power: Probability,
    pub input: PlanInput,
}

fn probability(p: f64) -> Probability {
    Probability::new(p.clamp(0.0, 1.0)).expect("clamped into [0, 1]")
}

fn ceil_count(x: f64, beta: Probability) -> Result<u64> {
    if x.is_finite() && x < SEARCH_LIMIT as f64 {
        Ok(x.ceil().max(1.0) as u64)
    } else {
        Err(Error::PowerUnreachable {
            target: 1.0 - beta.value(),
            limit: SEARCH_LIMIT,
        })
    }
}

/// `N = ceil(2 (z_α + z_β)² / η²)`.
pub fn ni_sample_size(input: &PlanInput) -> Result<PlanResult> {
    if input.mode != TestMode::Ni {
        return Err(Error::Parse("ni_sample_size needs mode ni".into()));
    }
    input.validate()?;
    let eta = input.eta();
    let (a, b) = (input.alpha.value(), input.beta.value());
    let z = upper_critical(a) + upper_critical(b);
    let n = ceil_count(2.0 * z * z / (eta * eta), input.beta)?;
    Ok(PlanResult {
        n,
        achieved_power: ni_power(n, eta, input.alpha)?,
        input: *input,
    })
}

/// Closed form for equivalence when the true difference is zero:
/// `N = ceil(2 (z_α + z_{β/2})² / η(θ)²)`.
pub fn eq_sample_size_delta0(eta_theta: f64, alpha: Probability, beta: Probability) -> Result<PlanResult> {
    let input = PlanInput {
        mode: TestMode::Eq,
        path: Path::Distinct,
        eta_theta,
        eta_delta: 0.0,
        alpha,
        beta,
    };
    input.validate()?;
    let z = upper_critical(alpha.value()) + upper_critical(beta.value() / 2.0);
    let n = ceil_count(2.0 * z * z / (eta_theta * eta_theta), beta)?;
    Ok(PlanResult {
        n,
        achieved_power: eq_power(n, eta_theta, 0.0, alpha)?,
        input,
    })
}

fn check_n(n: u64) -> Result<()> {
    if n == 0 {
        Err(Error::SampleSizeTooSmall { min: 1, got: 0 })
    } else {
        Ok(())
    }
}

/// `Φ(−z_α + η √(N/2))`.
pub fn ni_power(n: u64, eta: f64, alpha: Probability) -> Result<Probability> {
    check_n(n)?;
    check_finite("eta", eta)?;
    let za = upper_critical(check_open_unit("alpha", alpha.value())?);
    Ok(probability(cdf(-za + eta * (n as f64 / 2.0).sqrt())))
}

/// TOST power `Φ(−z_α + (η_θ − η_δ)√(N/2)) − Φ(z_α − (η_θ + η_δ)√(N/2))`,
/// reported as 0 where the expression dips negative for tiny `N`.
pub fn eq_power(n: u64, eta_theta: f64, eta_delta: f64, alpha: Probability) -> Result<Probability> {
    check_n(n)?;
    check_finite("eta_theta", eta_theta)?;
    check_finite("eta_delta", eta_delta)?;
    let gap = eta_theta - eta_delta.abs();
    if !(gap > 0.0) {
        return Err(Error::EtaNonPositive(gap));
    }
    let za = upper_critical(check_open_unit("alpha", alpha.value())?);
    Ok(probability(eq_power_raw(n as f64, eta_theta, eta_delta, za)))
}

fn eq_power_raw(n: f64, eta_theta: f64, eta_delta: f64, za: f64) -> f64 {
    let r = (n / 2.0).sqrt();
    cdf(-za + (eta_theta - eta_delta) * r) - cdf(za - (eta_theta + eta_delta) * r)
}

/// Smallest `N` in `[2, SEARCH_LIMIT]` reaching power `1 − β`, by bisection.
pub fn eq_sample_size_search(
    eta_theta: f64,
    eta_delta: f64,
    alpha: Probability,
    beta: Probability,
) -> Result<PlanResult> {
    let input = PlanInput {
        mode: TestMode::Eq,
        path: Path::Distinct,
        eta_theta,
        eta_delta,
        alpha,
        beta,
    };
    input.validate()?;
    let za = upper_critical(alpha.value());
    let target = 1.0 - beta.value();
    let ok = |n: u64| eq_power_raw(n as f64, eta_theta, eta_delta, za) >= target;
    let n = if ok(2) {
        2
    } else if !ok(SEARCH_LIMIT) {
        return Err(Error::PowerUnreachable {
            target,
            limit: SEARCH_LIMIT,
        });
    } else {
        let (mut lo, mut hi) = (2u64, SEARCH_LIMIT);
        while hi - lo > 1 {
            let mid = lo + (hi - lo) / 2;
            if ok(mid) {
                hi = mid;
            } else {
                lo = mid;
            }
        }
        hi
    };
    Ok(PlanResult {
        n,
        achieved_power: eq_power(n, eta_theta, eta_delta, alpha)?,
        input,
    })
}

/// Dispatches on mode: the non-inferiority formula, the equivalence closed
/// form when `eta_delta` is zero, otherwise the equivalence search.
pub fn sample_size(input: &PlanInput) -> Result<PlanResult> {
    input.validate()?;
    let mut out = match input.mode {
        TestMode::Ni => return ni_sample_size(input),
        TestMode::Eq if input.eta_delta == 0.0 => {
            eq_sample_size_delta0(input.eta_theta, input.alpha, input.beta)?
        }
        TestMode::Eq => eq_sample_size_search(input.eta_theta, input.eta_delta, input.alpha, input.beta)?,
    };
    out.input = *input;
    Ok(out)
}

/// Power at a given `N` for either mode.
pub fn power(input: &PlanInput, n: u64) -> Result<Probability> {
    input.validate()?;
    match input.mode {
        TestMode::Ni => ni_power(n, input.eta(), input.alpha),
        TestMode::Eq => eq_power(n, input.eta_theta, input.eta_delta, input.alpha),
    }
}

/// Enrollment needed so that `n` remain after a dropout fraction.
pub fn attrition_inflate(n: u64, dropout: f64) -> Result<u64> {
    check_finite("dropout", dropout)?;
    if !(0.0..1.0).contains(&dropout) {
        return Err(Error::OutOfRange {
            name: "dropout",
            value: dropout,
            range: "[0, 1)",
        });
    }
    let raw = n as f64 / (1.0 - dropout);
    // Products like 244 / 0.8 land a hair above the integer.
    let near = raw.round();
    if (raw - near).abs() <= 1e-9 * raw.max(1.0) {
        Ok(near as u64)
    } else {
        Ok(raw.ceil() as u64)
    }
}

/// Grid of standardized effects for a power curve.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase", tag = "mode", content = "points")]
pub enum CurveGrid {
    /// Overall `η = η_θ − η_δ` values.
    Ni(Vec<f64>),
    /// `(η_θ, η_δ)` pairs.
    Eq(Vec<(f64, f64)>),
}

impl CurveGrid {
    pub fn len(&self) -> usize {
        match self {
            CurveGrid::Ni(v) => v.len(),
            CurveGrid::Eq(v) => v.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn mode(&self) -> TestMode {
        match self {
            CurveGrid::Ni(_) => TestMode::Ni,
            CurveGrid::Eq(_) => TestMode::Eq,
        }
    }
}

/// One row of a tabulated power curve.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CurveRow {
    pub n: u64,
    /// `η_θ − η_δ`.
    pub eta: f64,
    pub eta_theta: f64,
    pub eta_delta: f64,
    pub analytic_power: f64,
    pub mc_power: Option<f64>,
    pub se: Option<f64>,
}

/// Simulation hook: `(n, grid index) → (estimate, se)`.
pub type McHook<'a> = dyn Fn(u64, usize) -> Result<(f64, f64)> + Sync + 'a;

/// One row per `(n, grid point)`, `n` outermost. Rows are computed in
/// parallel but returned in grid order.
pub fn power_curve(n_list: &[u64], grid: &CurveGrid, alpha: Probability, mc: Option<&McHook<'_>>) -> Result<Vec<CurveRow>> {
    if n_list.is_empty() {
        return Err(Error::EmptyGrid("sample sizes"));
    }
    if grid.is_empty() {
        return Err(Error::EmptyGrid("effect sizes"));
    }
    let points: Vec<(f64, f64)> = match grid {
        CurveGrid::Ni(v) => v.iter().map(|&e| (e, 0.0)).collect(),
        CurveGrid::Eq(v) => v.clone(),
    };
    let cells: Vec<(u64, usize)> = n_list
        .iter()
        .flat_map(|&n| (0..points.len()).map(move |i| (n, i)))
        .collect();
    cells
        .into_par_iter()
        .map(|(n, i)| {
            let (et, ed) = points[i];
            let analytic = match grid.mode() {
                TestMode::Ni => ni_power(n, et - ed, alpha)?,
                TestMode::Eq => eq_power(n, et, ed, alpha)?,
            };
            let (mc_power, se) = match mc {
                Some(hook) => {
                    let (p, se) = hook(n, i)?;
                    (Some(p), Some(se))
                }
                None => (None, None),
            };
            Ok(CurveRow {
                n,
                eta: et - ed,
                eta_theta: et,
                eta_delta: ed,
                analytic_power: analytic.value(),
                mc_power,
                se,
            })
        })
        .collect()
}
