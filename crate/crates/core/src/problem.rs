//! Problem instances: objectives, equality map, constraint map and the
//! polyhedral target set, plus the JSON file format.

use serde_json::{json, Map, Value};
use thiserror::Error;

use crate::expr::{ExprError, FunctionDef};
use crate::linalg::norm;
use crate::lp::{self, LinearProgram, LpOutcome};
use crate::sexpr;

/// Absolute feasibility slack, scaled by `1 + |rhs|` per row.
pub const TAU_FEAS: f64 = 1e-6;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ProblemError {
    #[error("{path}: {msg}")]
    Schema { path: String, msg: String },
    #[error("polyhedron has empty interior")]
    EmptyInterior,
    #[error(transparent)]
    Expr(#[from] ExprError),
    #[error(transparent)]
    Lp(#[from] lp::LpError),
}

fn schema(path: impl Into<String>, msg: impl Into<String>) -> ProblemError {
    ProblemError::Schema {
        path: path.into(),
        msg: msg.into(),
    }
}

/// Polyhedral set `Q ⊂ ℝᵏ`.
#[derive(Debug, Clone, PartialEq)]
pub enum PolyhedronSpec {
    /// The nonpositive orthant `{z : z ≤ 0}`.
    Orthant { dim: usize },
    /// `{z : A z ≤ b}`.
    Halfspaces { a: Vec<Vec<f64>>, b: Vec<f64> },
}

impl PolyhedronSpec {
    pub fn dim(&self) -> usize {
        match self {
            PolyhedronSpec::Orthant { dim } => *dim,
            PolyhedronSpec::Halfspaces { a, .. } => a.first().map_or(0, |r| r.len()),
        }
    }

    pub fn is_orthant(&self) -> bool {
        matches!(self, PolyhedronSpec::Orthant { .. })
    }

    /// Half-space rows `(A, b)`; the orthant becomes `I z ≤ 0`.
    pub fn rows(&self) -> (Vec<Vec<f64>>, Vec<f64>) {
        match self {
            PolyhedronSpec::Orthant { dim } => {
                let a = (0..*dim)
                    .map(|i| {
                        let mut r = vec![0.0; *dim];
                        r[i] = 1.0;
                        r
                    })
                    .collect();
                (a, vec![0.0; *dim])
            }
            PolyhedronSpec::Halfspaces { a, b } => (a.clone(), b.clone()),
        }
    }

    pub fn num_rows(&self) -> usize {
        match self {
            PolyhedronSpec::Orthant { dim } => *dim,
            PolyhedronSpec::Halfspaces { b, .. } => b.len(),
        }
    }

    /// Row slacks `A z − b` (nonpositive inside).
    pub fn row_values(&self, z: &[f64]) -> Vec<f64> {
        let (a, b) = self.rows();
        a.iter()
            .zip(&b)
            .map(|(r, bi)| r.iter().zip(z).map(|(p, q)| p * q).sum::<f64>() - bi)
            .collect()
    }

    pub fn contains(&self, z: &[f64], tol: f64) -> bool {
        let (_, b) = self.rows();
        self.row_values(z)
            .iter()
            .zip(&b)
            .all(|(v, bi)| *v <= tol * (1.0 + bi.abs()))
    }

    /// Checks that some `z` has `A z < b` componentwise.
    pub fn check_interior(&self) -> Result<(), ProblemError> {
        let (a, b) = self.rows();
        let k = self.dim();
        if a.is_empty() {
            return Ok(());
        }
        // maximize s  s.t.  A z + s·1 ≤ b,  s ≤ 1,  z free
        let mut lp = LinearProgram::new(k + 1);
        lp.bounds = vec![(f64::NEG_INFINITY, f64::INFINITY); k];
        lp.bounds.push((f64::NEG_INFINITY, 1.0));
        for (row, bi) in a.iter().zip(&b) {
            let mut coeffs = row.clone();
            coeffs.push(1.0);
            lp.add_le(coeffs, *bi);
        }
        let mut obj = vec![0.0; k];
        obj.push(-1.0);
        lp.minimize(obj);
        match lp::solve(&lp)? {
            LpOutcome::Optimal { x, .. } if x[k] > 1e-9 => Ok(()),
            _ => Err(ProblemError::EmptyInterior),
        }
    }
}

/// Constrained multiobjective program over ℝⁿ:
/// minimize `F = (f_1..f_m)` subject to `H(x) = 0`, `G(x) ∈ Q`.
#[derive(Debug, Clone, PartialEq)]
pub struct ProblemInstance {
    pub n: usize,
    pub objectives: Vec<FunctionDef>,
    pub equalities: Vec<FunctionDef>,
    pub qmap: Vec<FunctionDef>,
    pub qset: PolyhedronSpec,
}

#[derive(Debug, Clone, PartialEq, serde::Serialize)]
pub struct FeasibilityReport {
    pub feasible: bool,
    pub equality_residual: f64,
    pub q_violation: f64,
}

pub fn values(fs: &[FunctionDef], x: &[f64]) -> Result<Vec<f64>, ExprError> {
    fs.iter().map(|f| f.evaluate(x)).collect()
}

/// Row-major Jacobian built from tie-selected gradients.
pub fn jacobian(fs: &[FunctionDef], x: &[f64]) -> Result<Vec<Vec<f64>>, ExprError> {
    fs.iter().map(|f| f.gradient(x)).collect()
}

impl ProblemInstance {
    pub fn unconstrained(n: usize, objectives: Vec<FunctionDef>) -> Self {
        ProblemInstance {
            n,
            objectives,
            equalities: Vec::new(),
            qmap: Vec::new(),
            qset: PolyhedronSpec::Orthant { dim: 0 },
        }
    }

    pub fn validate(&self) -> Result<(), ProblemError> {
        if self.objectives.is_empty() {
            return Err(schema("/objectives", "at least one objective is required"));
        }
        for (list, key) in [
            (&self.objectives, "objectives"),
            (&self.equalities, "equalities"),
            (&self.qmap, "qmap"),
        ] {
            for (i, f) in list.iter().enumerate() {
                if f.arity != self.n {
                    return Err(schema(
                        format!("/{key}/{i}"),
                        format!("arity {} differs from n = {}", f.arity, self.n),
                    ));
                }
            }
        }
        if let PolyhedronSpec::Halfspaces { a, b } = &self.qset {
            if a.len() != b.len() {
                return Err(schema("/qset/b", "length differs from number of rows of A"));
            }
            for (i, r) in a.iter().enumerate() {
                if r.len() != self.qmap.len() {
                    return Err(schema(
                        format!("/qset/A/{i}"),
                        format!("row length {} differs from qmap length {}", r.len(), self.qmap.len()),
                    ));
                }
            }
        } else if self.qset.dim() != self.qmap.len() {
            return Err(schema("/qset/orthant", "dimension differs from qmap length"));
        }
        self.qset.check_interior()
    }

    pub fn all_functions(&self) -> impl Iterator<Item = &FunctionDef> {
        self.objectives
            .iter()
            .chain(&self.equalities)
            .chain(&self.qmap)
    }

    pub fn feasibility(&self, x: &[f64], tol: f64) -> Result<FeasibilityReport, ExprError> {
        let h = values(&self.equalities, x)?;
        let equality_residual = h.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        let g = values(&self.qmap, x)?;
        let (_, b) = self.qset.rows();
        let q_violation = self
            .qset
            .row_values(&g)
            .iter()
            .zip(&b)
            .fold(0.0f64, |m, (v, bi)| m.max(v / (1.0 + bi.abs())));
        Ok(FeasibilityReport {
            feasible: equality_residual <= tol && q_violation <= tol,
            equality_residual,
            q_violation,
        })
    }

    /// Frobenius norm of the objective Jacobian at `x`.
    pub fn objective_jacobian_norm(&self, x: &[f64]) -> Result<f64, ExprError> {
        let j = jacobian(&self.objectives, x)?;
        Ok(j.iter().map(|r| norm(r).powi(2)).sum::<f64>().sqrt())
    }

    /// Copy with every objective multiplied by the matching positive factor.
    pub fn with_scaled_objectives(&self, factors: &[f64]) -> Self {
        let mut out = self.clone();
        for (f, c) in out.objectives.iter_mut().zip(factors) {
            f.expr = crate::expr::Expr::Constant(*c) * f.expr.clone();
        }
        out
    }
}

/// A problem file: the instance plus an optional point and directions.
#[derive(Debug, Clone, PartialEq)]
pub struct ProblemFile {
    pub problem: ProblemInstance,
    pub point: Option<Vec<f64>>,
    pub directions: Vec<Vec<f64>>,
    pub c11_declared: bool,
}

fn get_usize(v: &Value, path: &str) -> Result<usize, ProblemError> {
    v.as_u64()
        .map(|u| u as usize)
        .ok_or_else(|| schema(path, "expected a nonnegative integer"))
}

fn get_vec(v: &Value, path: &str) -> Result<Vec<f64>, ProblemError> {
    let arr = v.as_array().ok_or_else(|| schema(path, "expected an array of numbers"))?;
    arr.iter()
        .enumerate()
        .map(|(i, x)| {
            x.as_f64()
                .filter(|f| f.is_finite())
                .ok_or_else(|| schema(format!("{path}/{i}"), "expected a finite number"))
        })
        .collect()
}

fn get_functions(
    obj: &Map<String, Value>,
    key: &str,
    prefix: &str,
    n: usize,
    c11: bool,
) -> Result<Vec<FunctionDef>, ProblemError> {
    let Some(v) = obj.get(key) else {
        return Ok(Vec::new());
    };
    let arr = v
        .as_array()
        .ok_or_else(|| schema(format!("/{key}"), "expected an array of s-expressions"))?;
    arr.iter()
        .enumerate()
        .map(|(i, s)| {
            let path = format!("/{key}/{i}");
            let text = s.as_str().ok_or_else(|| schema(&path, "expected a string"))?;
            let expr = sexpr::parse(text).map_err(|e| schema(&path, e.to_string()))?;
            let mut f = FunctionDef::new(format!("{prefix}{i}"), n, expr)
                .map_err(|e| schema(&path, e.to_string()))?;
            f.declared_c11 = c11;
            Ok(f)
        })
        .collect()
}

impl ProblemFile {
    pub fn from_json_str(text: &str) -> Result<Self, ProblemError> {
        let v: Value = serde_json::from_str(text).map_err(|e| schema("", e.to_string()))?;
        Self::from_value(&v)
    }

    pub fn from_value(v: &Value) -> Result<Self, ProblemError> {
        let obj = v.as_object().ok_or_else(|| schema("", "expected a JSON object"))?;
        for key in obj.keys() {
            if !matches!(
                key.as_str(),
                "n" | "objectives"
                    | "equalities"
                    | "qmap"
                    | "qset"
                    | "point"
                    | "directions"
                    | "c11_declared"
                    | "name"
                    | "notes"
            ) {
                return Err(schema(format!("/{key}"), "unknown field"));
            }
        }
        let n = get_usize(obj.get("n").ok_or_else(|| schema("/n", "missing"))?, "/n")?;
        let c11 = match obj.get("c11_declared") {
            None => true,
            Some(b) => b
                .as_bool()
                .ok_or_else(|| schema("/c11_declared", "expected a boolean"))?,
        };
        if !obj.contains_key("objectives") {
            return Err(schema("/objectives", "missing"));
        }
        let objectives = get_functions(obj, "objectives", "f", n, c11)?;
        let equalities = get_functions(obj, "equalities", "h", n, c11)?;
        let qmap = get_functions(obj, "qmap", "g", n, c11)?;
        let qset = match obj.get("qset") {
            None => PolyhedronSpec::Orthant { dim: qmap.len() },
            Some(q) => parse_qset(q)?,
        };
        let point = match obj.get("point") {
            None | Some(Value::Null) => None,
            Some(p) => {
                let p = get_vec(p, "/point")?;
                if p.len() != n {
                    return Err(schema("/point", format!("expected {n} coordinates")));
                }
                Some(p)
            }
        };
        let directions = match obj.get("directions") {
            None => Vec::new(),
            Some(ds) => {
                let arr = ds
                    .as_array()
                    .ok_or_else(|| schema("/directions", "expected an array of vectors"))?;
                arr.iter()
                    .enumerate()
                    .map(|(i, d)| {
                        let path = format!("/directions/{i}");
                        let d = get_vec(d, &path)?;
                        if d.len() != n {
                            return Err(schema(path, format!("expected {n} coordinates")));
                        }
                        Ok(d)
                    })
                    .collect::<Result<_, _>>()?
            }
        };
        let problem = ProblemInstance {
            n,
            objectives,
            equalities,
            qmap,
            qset,
        };
        problem.validate()?;
        Ok(ProblemFile {
            problem,
            point,
            directions,
            c11_declared: c11,
        })
    }

    pub fn to_value(&self) -> Value {
        let p = &self.problem;
        let exprs = |fs: &[FunctionDef]| -> Vec<String> { fs.iter().map(|f| f.expr.to_string()).collect() };
        let qset = match &p.qset {
            PolyhedronSpec::Orthant { dim } => json!({ "orthant": dim }),
            PolyhedronSpec::Halfspaces { a, b } => json!({ "A": a, "b": b }),
        };
        let mut out = json!({
            "n": p.n,
            "objectives": exprs(&p.objectives),
            "equalities": exprs(&p.equalities),
            "qmap": exprs(&p.qmap),
            "qset": qset,
            "directions": self.directions,
            "c11_declared": self.c11_declared,
        });
        if let Some(pt) = &self.point {
            out["point"] = json!(pt);
        }
        out
    }

    pub fn to_json_string(&self) -> String {
        serde_json::to_string_pretty(&self.to_value()).expect("problem serializes")
    }
}

fn parse_qset(q: &Value) -> Result<PolyhedronSpec, ProblemError> {
    let obj = q
        .as_object()
        .ok_or_else(|| schema("/qset", "expected {\"orthant\": k} or {\"A\": .., \"b\": ..}"))?;
    if let Some(k) = obj.get("orthant") {
        if obj.len() != 1 {
            return Err(schema("/qset", "orthant form takes no other fields"));
        }
        return Ok(PolyhedronSpec::Orthant {
            dim: get_usize(k, "/qset/orthant")?,
        });
    }
    let a = obj.get("A").ok_or_else(|| schema("/qset/A", "missing"))?;
    let b = obj.get("b").ok_or_else(|| schema("/qset/b", "missing"))?;
    let rows = a
        .as_array()
        .ok_or_else(|| schema("/qset/A", "expected an array of rows"))?
        .iter()
        .enumerate()
        .map(|(i, r)| get_vec(r, &format!("/qset/A/{i}")))
        .collect::<Result<Vec<_>, _>>()?;
    let b = get_vec(b, "/qset/b")?;
    Ok(PolyhedronSpec::Halfspaces { a: rows, b })
}

#[cfg(test)]
mod tests {
    use super::*;

    const P5: &str = r#"{
        "n": 2,
        "objectives": ["v1"],
        "equalities": ["(- v1 (* v0 (abs v0)))"],
        "point": [0, 0],
        "directions": [[-1, 0]]
    }"#;

    #[test]
    fn parses_problem_file() {
        let pf = ProblemFile::from_json_str(P5).unwrap();
        assert_eq!(pf.problem.n, 2);
        assert_eq!(pf.problem.equalities.len(), 1);
        assert_eq!(pf.point, Some(vec![0.0, 0.0]));
        assert_eq!(pf.problem.qset, PolyhedronSpec::Orthant { dim: 0 });
    }

    #[test]
    fn round_trip_is_structural_identity() {
        let pf = ProblemFile::from_json_str(P5).unwrap();
        let again = ProblemFile::from_json_str(&pf.to_json_string()).unwrap();
        assert_eq!(pf, again);
    }

    #[test]
    fn schema_errors_carry_pointer_paths() {
        let cases = [
            (r#"{"n": 2, "objectives": ["(+ v0 v7)"]}"#, "/objectives/0"),
            (r#"{"n": 2, "objectives": [3]}"#, "/objectives/0"),
            (r#"{"objectives": ["v0"]}"#, "/n"),
            (r#"{"n": 1, "objectives": ["v0"], "qmap": ["v0"], "qset": {"A": [[1, 2]], "b": [0]}}"#, "/qset/A/0"),
            (r#"{"n": 1, "objectives": ["v0"], "point": [0, 1]}"#, "/point"),
            (r#"{"n": 1, "objectives": ["v0"], "directions": [[0, "x"]]}"#, "/directions/0/1"),
            (r#"{"n": 1, "objectives": ["v0"], "bogus": 1}"#, "/bogus"),
        ];
        for (text, path) in cases {
            match ProblemFile::from_json_str(text) {
                Err(ProblemError::Schema { path: p, .. }) => assert_eq!(p, path, "{text}"),
                other => panic!("{text}: {other:?}"),
            }
        }
    }

    #[test]
    fn interior_check() {
        let q = PolyhedronSpec::Halfspaces {
            a: vec![vec![1.0, 1.0]],
            b: vec![0.0],
        };
        assert!(q.check_interior().is_ok());
        let flat = PolyhedronSpec::Halfspaces {
            a: vec![vec![1.0, 0.0], vec![-1.0, 0.0]],
            b: vec![0.0, 0.0],
        };
        assert_eq!(flat.check_interior(), Err(ProblemError::EmptyInterior));
        assert!(PolyhedronSpec::Orthant { dim: 3 }.check_interior().is_ok());
    }

    #[test]
    fn feasibility_report() {
        let pf = ProblemFile::from_json_str(P5).unwrap();
        assert!(pf.problem.feasibility(&[0.0, 0.0], TAU_FEAS).unwrap().feasible);
        assert!(!pf.problem.feasibility(&[0.0, 1.0], TAU_FEAS).unwrap().feasible);
    }
}
