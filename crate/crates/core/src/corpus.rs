//! Ground-truth instances with known verdicts, and the gate that runs them.

use serde::Serialize;
use serde_json::{json, Value};

use crate::certify::{verdict, CertifyError, Overall, VerificationReport, VerifyConfig};
use crate::expr::{BoxRegion, FunctionDef};
use crate::oracle::{grid_pareto_oracle, GridOutcome, OracleError, Truth};
use crate::problem::{ProblemFile, ProblemInstance};

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Refutation {
    pub d: Vec<f64>,
    pub margin: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CorpusEntry {
    pub name: &'static str,
    /// Problem JSON, in the format read by the CLI.
    pub source: Value,
    pub problem: ProblemInstance,
    pub point: Vec<f64>,
    pub truth: Truth,
    pub expected_overall: Overall,
    pub expected_refutation: Option<Refutation>,
    pub grid: BoxRegion,
    pub grid_resolution: usize,
    pub notes: &'static str,
}

impl CorpusEntry {
    pub fn user_directions(&self) -> Vec<Vec<f64>> {
        ProblemFile::from_value(&self.source)
            .expect("corpus sources are valid")
            .directions
    }
}

struct Spec {
    name: &'static str,
    source: Value,
    truth: Truth,
    overall: Overall,
    refutation: Option<Refutation>,
    half_width: f64,
    resolution: usize,
    notes: &'static str,
}

fn build(s: Spec) -> CorpusEntry {
    let file = ProblemFile::from_value(&s.source).expect("corpus sources are valid");
    let point = file.point.clone().expect("corpus sources carry a point");
    CorpusEntry {
        name: s.name,
        grid: BoxRegion::cube(file.problem.n, s.half_width),
        problem: file.problem,
        point,
        source: s.source,
        truth: s.truth,
        expected_overall: s.overall,
        expected_refutation: s.refutation,
        grid_resolution: s.resolution,
        notes: s.notes,
    }
}

pub fn corpus() -> Vec<CorpusEntry> {
    use Overall::*;
    use Truth::*;
    let entries = vec![
        Spec {
            name: "P1",
            source: json!({
                "n": 2,
                "objectives": ["(+ (* 0.5 (* v0 (abs v0))) (pow v1 2))"],
                "point": [0.0, 0.0],
                "c11_declared": true
            }),
            truth: NotWeakPareto,
            overall: Consistent,
            refutation: None,
            half_width: 1.0,
            resolution: 201,
            notes: "signed-square example; every critical direction admits a certificate although x = (-t, 0) descends, so the necessary conditions cannot reject it",
        },
        Spec {
            name: "P2",
            source: json!({
                "n": 1,
                "objectives": ["(neg (pow v0 2))", "v0"],
                "point": [0.0],
                "directions": [[1.0]]
            }),
            truth: NotWeakPareto,
            overall: Rejected,
            refutation: Some(Refutation { d: vec![-1.0], margin: -2.0 }),
            half_width: 1.0,
            resolution: 100_001,
            notes: "x = -1 dominates; d = +1 is not critical",
        },
        Spec {
            name: "P3",
            source: json!({
                "n": 2,
                "objectives": ["(+ (pow v0 2) (pow v1 2))", "(+ (pow (- v0 1) 2) (pow v1 2))"],
                "point": [0.5, 0.0]
            }),
            truth: WeakPareto,
            overall: Consistent,
            refutation: None,
            half_width: 2.0,
            resolution: 201,
            notes: "bi-quadratic on the efficient segment",
        },
        Spec {
            name: "P3b",
            source: json!({
                "n": 2,
                "objectives": ["(+ (pow v0 2) (pow v1 2))", "(+ (pow (- v0 1) 2) (pow v1 2))"],
                "point": [0.5, 0.3]
            }),
            truth: NotWeakPareto,
            overall: Rejected,
            refutation: None,
            half_width: 2.0,
            resolution: 201,
            notes: "off the efficient segment; no first-order multiplier",
        },
        Spec {
            name: "P4",
            source: json!({
                "n": 2,
                "objectives": ["(+ (* v0 (abs v0)) (pow v1 2))"],
                "qmap": ["(neg v0)"],
                "qset": {"orthant": 1},
                "point": [0.0, 0.0],
                "c11_declared": true
            }),
            truth: WeakPareto,
            overall: Consistent,
            refutation: None,
            half_width: 1.0,
            resolution: 201,
            notes: "constrained minimizer on x0 >= 0",
        },
        Spec {
            name: "P5",
            source: json!({
                "n": 2,
                "objectives": ["v1"],
                "equalities": ["(- v1 (* v0 (abs v0)))"],
                "point": [0.0, 0.0],
                "c11_declared": true
            }),
            truth: NotWeakPareto,
            overall: Rejected,
            refutation: Some(Refutation { d: vec![-1.0, 0.0], margin: -1.0 }),
            half_width: 1.0,
            resolution: 201,
            notes: "x = (-t, -t^2) is feasible and better",
        },
        Spec {
            name: "P6",
            source: json!({
                "n": 1,
                "objectives": ["v0"],
                "equalities": ["(pow v0 2)"],
                "point": [0.0]
            }),
            truth: WeakPareto,
            overall: Degenerate,
            refutation: None,
            half_width: 1.0,
            resolution: 1001,
            notes: "the equality Jacobian vanishes; the only feasible point is 0",
        },
        Spec {
            name: "P7",
            source: json!({
                "n": 2,
                "objectives": ["v0", "v1"],
                "qmap": ["v0", "v1"],
                "qset": {"A": [[-1.0, -1.0]], "b": [-1.0]},
                "point": [0.5, 0.5]
            }),
            truth: WeakPareto,
            overall: Consistent,
            refutation: None,
            half_width: 2.0,
            resolution: 201,
            notes: "half-space Q, efficient front x0 + x1 = 1",
        },
        Spec {
            name: "P7b",
            source: json!({
                "n": 2,
                "objectives": ["v0", "v1"],
                "qmap": ["v0", "v1"],
                "qset": {"A": [[-1.0, -1.0]], "b": [-1.0]},
                "point": [1.0, 0.0]
            }),
            truth: WeakPareto,
            overall: Consistent,
            refutation: None,
            half_width: 2.0,
            resolution: 201,
            notes: "another point of the same front",
        },
        Spec {
            name: "P8",
            source: json!({
                "n": 2,
                "objectives": ["v1"],
                "qmap": ["(- (* v0 (abs v0)) v1)"],
                "qset": {"orthant": 1},
                "point": [0.0, 0.0],
                "c11_declared": true
            }),
            truth: NotWeakPareto,
            overall: Rejected,
            refutation: Some(Refutation { d: vec![-1.0, 0.0], margin: -1.0 }),
            half_width: 1.0,
            resolution: 201,
            notes: "inequality version of P5, refuted through the constraint curvature",
        },
    ];
    entries.into_iter().map(build).collect()
}

pub fn entry(name: &str) -> Option<CorpusEntry> {
    corpus().into_iter().find(|e| e.name == name)
}

/// Every distinct scalar function appearing in the corpus.
pub fn corpus_functions() -> Vec<FunctionDef> {
    let mut out: Vec<FunctionDef> = Vec::new();
    for e in corpus() {
        for f in e.problem.all_functions() {
            if !out.iter().any(|g| g.arity == f.arity && g.expr == f.expr) {
                let mut f = f.clone();
                f.name = format!("{}:{}", e.name, f.name);
                out.push(f);
            }
        }
    }
    out
}

#[derive(Debug, thiserror::Error)]
pub enum GateError {
    #[error(transparent)]
    Certify(#[from] CertifyError),
    #[error(transparent)]
    Oracle(#[from] OracleError),
}

#[derive(Debug, Clone, Serialize)]
pub struct EntryResult {
    pub name: &'static str,
    pub overall: Overall,
    pub expected_overall: Overall,
    pub truth: Truth,
    pub oracle: GridOutcome,
    pub failures: Vec<String>,
    #[serde(skip)]
    pub report: VerificationReport,
}

impl EntryResult {
    pub fn pass(&self) -> bool {
        self.failures.is_empty()
    }
}

pub fn default_config(entry: &CorpusEntry) -> VerifyConfig {
    let mut cfg = VerifyConfig::default();
    cfg.directions.rays = true;
    cfg.directions.user = entry.user_directions();
    cfg
}

/// Runs the verifier and the grid oracle on one entry and checks both
/// against the recorded expectations.
pub fn run_entry(entry: &CorpusEntry, cfg: &VerifyConfig) -> Result<EntryResult, GateError> {
    let report = verdict(&entry.problem, &entry.point, cfg)?;
    let oracle = grid_pareto_oracle(&entry.problem, &entry.point, &entry.grid, entry.grid_resolution)?;
    let mut failures = Vec::new();
    if report.overall != entry.expected_overall {
        failures.push(format!("overall {:?}, expected {:?}", report.overall, entry.expected_overall));
    }
    if oracle.truth != entry.truth {
        failures.push(format!("grid oracle says {:?}, recorded {:?}", oracle.truth, entry.truth));
    }
    if report.overall == Overall::Rejected && oracle.truth != Truth::NotWeakPareto {
        failures.push("rejected a grid-verified weak Pareto point".into());
    }
    if let Some(want) = &entry.expected_refutation {
        let hit = report.refuting_directions().find(|v| {
            v.d.len() == want.d.len() && v.d.iter().zip(&want.d).all(|(a, b)| (a - b).abs() < 1e-9)
        });
        match hit.and_then(|v| v.margin) {
            Some(m) if (m - want.margin).abs() <= 1e-6 => {}
            Some(m) => failures.push(format!("margin {m} at {:?}, expected {}", want.d, want.margin)),
            None => failures.push(format!("direction {:?} not refuted", want.d)),
        }
    }
    Ok(EntryResult {
        name: entry.name,
        overall: report.overall,
        expected_overall: entry.expected_overall,
        truth: entry.truth,
        oracle,
        failures,
        report,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sources_parse_and_names_are_unique() {
        let c = corpus();
        assert!(c.len() >= 6);
        let mut names: Vec<_> = c.iter().map(|e| e.name).collect();
        names.sort();
        names.dedup();
        assert_eq!(names.len(), c.len());
        assert!(corpus_functions().len() >= 10);
    }

    #[test]
    fn semantics_of_recorded_truths() {
        for e in corpus() {
            if e.expected_overall == Overall::Rejected {
                assert_eq!(e.truth, Truth::NotWeakPareto, "{}", e.name);
            }
        }
    }
}
