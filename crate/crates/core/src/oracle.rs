//! Brute-force weak Pareto test on a grid.

use serde::Serialize;
use thiserror::Error;

use crate::expr::{BoxRegion, ExprError};
use crate::problem::{values, ProblemInstance, TAU_FEAS};

/// Largest dimension scanned exhaustively.
pub const MAX_GRID_DIM: usize = 3;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum Truth {
    WeakPareto,
    NotWeakPareto,
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum OracleError {
    #[error("grid oracle supports n ≤ {MAX_GRID_DIM}, got {0}")]
    TooManyDimensions(usize),
    #[error("grid resolution must be at least 2")]
    Resolution,
    #[error("box has dimension {got}, problem has {expected}")]
    Dimension { expected: usize, got: usize },
    #[error(transparent)]
    Expr(#[from] ExprError),
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GridOutcome {
    pub truth: Truth,
    /// A feasible grid point strictly better in every objective.
    pub witness: Option<Vec<f64>>,
    pub scanned: usize,
}

/// Scans `resolution` points per axis of `region` for a feasible point that
/// strictly improves every objective at `x̂`.
pub fn grid_pareto_oracle(
    problem: &ProblemInstance,
    x: &[f64],
    region: &BoxRegion,
    resolution: usize,
) -> Result<GridOutcome, OracleError> {
    let n = problem.n;
    if n > MAX_GRID_DIM {
        return Err(OracleError::TooManyDimensions(n));
    }
    if resolution < 2 {
        return Err(OracleError::Resolution);
    }
    if region.dim() != n {
        return Err(OracleError::Dimension {
            expected: n,
            got: region.dim(),
        });
    }
    let f0 = values(&problem.objectives, x)?;
    let bars: Vec<f64> = f0.iter().map(|v| v - 1e-9 * (1.0 + v.abs())).collect();
    let axis = |i: usize, k: usize| region.lo[i] + (region.hi[i] - region.lo[i]) * k as f64 / (resolution - 1) as f64;
    let total = resolution.pow(n as u32);
    let mut y = vec![0.0; n];
    for idx in 0..total {
        let mut rest = idx;
        for (i, yi) in y.iter_mut().enumerate() {
            *yi = axis(i, rest % resolution);
            rest /= resolution;
        }
        let fy = values(&problem.objectives, &y)?;
        if !fy.iter().zip(&bars).all(|(a, b)| a < b) {
            continue;
        }
        if problem.feasibility(&y, TAU_FEAS)?.feasible {
            return Ok(GridOutcome {
                truth: Truth::NotWeakPareto,
                witness: Some(y),
                scanned: idx + 1,
            });
        }
    }
    Ok(GridOutcome {
        truth: Truth::WeakPareto,
        witness: None,
        scanned: total,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::expr::FunctionDef;
    use crate::sexpr::parse;

    fn fdef(src: &str, n: usize) -> FunctionDef {
        FunctionDef::new("f", n, parse(src).unwrap()).unwrap()
    }

    #[test]
    fn examples() {
        let p2 = ProblemInstance::unconstrained(1, vec![fdef("(neg (pow v0 2))", 1), fdef("v0", 1)]);
        let out = grid_pareto_oracle(&p2, &[0.0], &BoxRegion::cube(1, 1.0), 100_001).unwrap();
        assert_eq!(out.truth, Truth::NotWeakPareto);
        let w = out.witness.unwrap();
        assert!(w[0] < 0.0);

        let p3 = ProblemInstance::unconstrained(
            2,
            vec![fdef("(+ (pow v0 2) (pow v1 2))", 2), fdef("(+ (pow (- v0 1) 2) (pow v1 2))", 2)],
        );
        let out = grid_pareto_oracle(&p3, &[0.5, 0.0], &BoxRegion::cube(2, 2.0), 201).unwrap();
        assert_eq!(out.truth, Truth::WeakPareto);

        let sq = ProblemInstance::unconstrained(1, vec![fdef("(pow v0 2)", 1)]);
        let out = grid_pareto_oracle(&sq, &[0.0], &BoxRegion::cube(1, 1.0), 1001).unwrap();
        assert_eq!(out.truth, Truth::WeakPareto);
    }

    #[test]
    fn rejects_large_dimensions() {
        let p = ProblemInstance::unconstrained(4, vec![fdef("v0", 4)]);
        assert!(matches!(
            grid_pareto_oracle(&p, &[0.0; 4], &BoxRegion::cube(4, 1.0), 3),
            Err(OracleError::TooManyDimensions(4))
        ));
    }
}
