//! Text and JSON renderings of reports, plus the power-curve CSV.

use std::fmt::Write as _;

use smartnie_core::inference::{TestKind, TestReport};
use smartnie_core::planning::CurveRow;

use crate::Format;

pub const CURVE_HEADER: &str = "n,eta,analytic_power,mc_power,se";

fn bf(v: Option<f64>) -> String {
    v.map_or_else(|| "n/a".to_string(), |b| format!("{b:.2}"))
}

/// Renders a test report. Text mode is for people; JSON mode keeps full
/// precision and parses back with [`parse_report`].
pub fn render_report(report: &TestReport, format: Format) -> String {
    match format {
        Format::Json => {
            let mut s = serde_json::to_string_pretty(report).expect("report serializes");
            s.push('\n');
            s
        }
        Format::Text => render_text(report),
    }
}

pub fn parse_report(text: &str) -> serde_json::Result<TestReport> {
    serde_json::from_str(text)
}

fn render_text(r: &TestReport) -> String {
    let c = r.pair.control();
    let d = r.pair.candidate();
    let title = match r.kind {
        TestKind::NonInferiority if r.theta == 0.0 => "Superiority test (zero margin)",
        TestKind::NonInferiority => "Non-inferiority test",
        TestKind::Equivalence => "Equivalence test (TOST)",
    };
    let mut s = String::new();
    let _ = writeln!(s, "{title}: control {c} vs new {d} ({} path)", r.pair.path());
    let _ = writeln!(s, "participants: {}", r.n);
    let _ = writeln!(s, "mean (control {c}): {:.4}", r.mean_first);
    let _ = writeln!(s, "mean (new {d}): {:.4}", r.mean_second);
    let _ = writeln!(s, "difference (control - new): {:.4}", r.mean_first - r.mean_second);
    let _ = writeln!(s, "margin (theta): {:.4}", r.theta);
    let _ = writeln!(s, "variance of difference: {:.6}", r.variance);
    let _ = writeln!(s, "alpha: {}", r.alpha.value());
    let _ = writeln!(s, "Z (non-inferiority): {:.4}", r.z_ni);
    let _ = writeln!(s, "p-value (non-inferiority): {:.4}", r.p_ni.value());
    let _ = writeln!(s, "BF bound (non-inferiority): {}", bf(r.bf_bound_ni));
    if r.kind == TestKind::Equivalence {
        if let Some(z) = r.z_ns {
            let _ = writeln!(s, "Z (non-superiority): {z:.4}");
        }
        if let Some(p) = r.p_ns {
            let _ = writeln!(s, "p-value (non-superiority): {:.4}", p.value());
        }
        let _ = writeln!(s, "BF bound (non-superiority): {}", bf(r.bf_bound_ns));
    }
    let _ = writeln!(s, "decision: {}", r.decision);
    for w in &r.warnings {
        let _ = writeln!(s, "warning: {w}");
    }
    s
}

fn opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

/// CSV with a `.` decimal separator and LF endings; Monte Carlo columns are
/// empty when no simulation was run.
pub fn curve_csv(rows: &[CurveRow]) -> String {
    let mut s = String::from(CURVE_HEADER);
    s.push('\n');
    for r in rows {
        let _ = writeln!(s, "{},{},{},{},{}", r.n, r.eta, r.analytic_power, opt(r.mc_power), opt(r.se));
    }
    s
}

#[cfg(test)]
mod tests {
    use super::*;
    use smartnie_core::inference::Decision;
    use smartnie_core::{AiPair, EmbeddedAi, Probability};

    fn report(kind: TestKind) -> TestReport {
        let eq = kind == TestKind::Equivalence;
        TestReport {
            kind,
            pair: AiPair::new(EmbeddedAi::D3, EmbeddedAi::D4).unwrap(),
            n: 200,
            mean_first: 1.25,
            mean_second: 1.0,
            theta: 2.0,
            alpha: Probability::new(0.05).unwrap(),
            variance: 0.123456789,
            z_ni: -2.315,
            p_ni: Probability::new(0.0103).unwrap(),
            z_ns: eq.then_some(3.2),
            p_ns: eq.then(|| Probability::new(0.000687).unwrap()),
            bf_bound_ni: Some(7.81234),
            bf_bound_ns: eq.then_some(72.5),
            decision: Decision::RejectNull,
            warnings: vec!["small sample".into()],
        }
    }

    #[test]
    fn ni_text() {
        let t = render_report(&report(TestKind::NonInferiority), Format::Text);
        assert!(t.contains("p-value (non-inferiority): 0.0103\n"));
        assert!(t.contains("BF bound (non-inferiority): 7.81\n"));
        assert!(t.contains("decision: reject null\n"));
        assert!(!t.contains("non-superiority"));
    }

    #[test]
    fn eq_text_has_both_sides() {
        let t = render_report(&report(TestKind::Equivalence), Format::Text);
        assert_eq!(t.matches("p-value (").count(), 2);
        assert_eq!(t.matches("BF bound (").count(), 2);
        assert!(t.contains("p-value (non-superiority): 0.0007\n"));
    }

    #[test]
    fn json_round_trips() {
        for kind in [TestKind::NonInferiority, TestKind::Equivalence] {
            let r = report(kind);
            assert_eq!(parse_report(&render_report(&r, Format::Json)).unwrap(), r);
        }
    }

    #[test]
    fn csv_layout() {
        let rows = [CurveRow {
            n: 100,
            eta: 0.3,
            eta_theta: 0.3,
            eta_delta: 0.0,
            analytic_power: 0.5,
            mc_power: None,
            se: None,
        }];
        assert_eq!(curve_csv(&rows), "n,eta,analytic_power,mc_power,se\n100,0.3,0.5,,\n");
    }
}
