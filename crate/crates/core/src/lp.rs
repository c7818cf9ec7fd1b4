//! Dense two-phase simplex with Bland's anti-cycling rule.
//!
//! Sized for certificate searches with at most a few hundred variables.
//! Problems are given in the natural form
//!
//! ```text
//! minimize   cᵀx
//! subject to a_iᵀx  = r_i     (equalities)
//!            a_kᵀx <= r_k     (inequalities)
//!            lo_j <= x_j <= hi_j   (bounds, possibly infinite)
//! ```
//!
//! and converted internally to `A y = b, y >= 0`. When phase one ends with a
//! positive residual, the phase-one duals give a Farkas vector `y` over the
//! standard-form rows with `Aᵀy <= 0` and `bᵀy > 0`.

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum LpError {
    #[error("simplex exceeded the pivot cap ({0} pivots)")]
    NumericalFailure(usize),
    #[error("malformed linear program: {0}")]
    BadInput(String),
}

/// One linear constraint row `coeffs · x (= or <=) rhs`.
#[derive(Debug, Clone, PartialEq)]
pub struct Row {
    pub coeffs: Vec<f64>,
    pub rhs: f64,
}

impl Row {
    pub fn new(coeffs: Vec<f64>, rhs: f64) -> Self {
        Row { coeffs, rhs }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LinearProgram {
    pub num_vars: usize,
    /// Minimized. Empty means a pure feasibility problem.
    pub objective: Vec<f64>,
    pub equalities: Vec<Row>,
    pub inequalities: Vec<Row>,
    pub bounds: Vec<(f64, f64)>,
}

#[derive(Debug, Clone, PartialEq)]
pub enum LpOutcome {
    Optimal { x: Vec<f64>, value: f64 },
    /// Farkas vector over standard-form rows: equalities, then
    /// inequalities, then finite upper-bound rows.
    Infeasible { farkas: Vec<f64>, residual: f64 },
    Unbounded,
}

impl LinearProgram {
    /// Nonnegative variables, no constraints yet.
    pub fn new(num_vars: usize) -> Self {
        LinearProgram {
            num_vars,
            objective: Vec::new(),
            equalities: Vec::new(),
            inequalities: Vec::new(),
            bounds: vec![(0.0, f64::INFINITY); num_vars],
        }
    }

    pub fn add_eq(&mut self, coeffs: Vec<f64>, rhs: f64) -> &mut Self {
        self.equalities.push(Row::new(coeffs, rhs));
        self
    }

    pub fn add_le(&mut self, coeffs: Vec<f64>, rhs: f64) -> &mut Self {
        self.inequalities.push(Row::new(coeffs, rhs));
        self
    }

    pub fn add_ge(&mut self, coeffs: Vec<f64>, rhs: f64) -> &mut Self {
        self.add_le(coeffs.into_iter().map(|c| -c).collect(), -rhs)
    }

    pub fn minimize(&mut self, objective: Vec<f64>) -> &mut Self {
        self.objective = objective;
        self
    }

    fn validate(&self) -> Result<(), LpError> {
        let n = self.num_vars;
        if self.bounds.len() != n {
            return Err(LpError::BadInput("bounds length".into()));
        }
        if !self.objective.is_empty() && self.objective.len() != n {
            return Err(LpError::BadInput("objective length".into()));
        }
        for row in self.equalities.iter().chain(&self.inequalities) {
            if row.coeffs.len() != n {
                return Err(LpError::BadInput("row length".into()));
            }
            if !row.rhs.is_finite() || row.coeffs.iter().any(|c| !c.is_finite()) {
                return Err(LpError::BadInput("non-finite row data".into()));
            }
        }
        for (lo, hi) in &self.bounds {
            if lo > hi || lo.is_nan() || hi.is_nan() || *lo == f64::INFINITY || *hi == f64::NEG_INFINITY
            {
                return Err(LpError::BadInput("inconsistent bounds".into()));
            }
        }
        Ok(())
    }
}

/// How an original variable is recovered from standard-form columns.
#[derive(Debug, Clone)]
struct VarMap {
    offset: f64,
    terms: Vec<(usize, f64)>,
}

const PIVOT_TOL: f64 = 1e-11;
const COST_TOL: f64 = 1e-10;

struct Tableau {
    /// `rows × (cols + 1)`; last column is the right-hand side.
    t: Vec<Vec<f64>>,
    basis: Vec<usize>,
    cols: usize,
    pivots: usize,
    pivot_cap: usize,
}

impl Tableau {
    fn rhs(&self, i: usize) -> f64 {
        self.t[i][self.cols]
    }

    fn pivot(&mut self, r: usize, c: usize) -> Result<(), LpError> {
        self.pivots += 1;
        if self.pivots > self.pivot_cap {
            return Err(LpError::NumericalFailure(self.pivots));
        }
        let p = self.t[r][c];
        for v in self.t[r].iter_mut() {
            *v /= p;
        }
        let prow = self.t[r].clone();
        for (i, row) in self.t.iter_mut().enumerate() {
            if i == r {
                continue;
            }
            let f = row[c];
            if f != 0.0 {
                for (v, pv) in row.iter_mut().zip(&prow) {
                    *v -= f * pv;
                }
                row[c] = 0.0;
            }
        }
        self.basis[r] = c;
        Ok(())
    }

    fn reduced_costs(&self, cost: &[f64]) -> Vec<f64> {
        let mut r = cost.to_vec();
        for (i, &b) in self.basis.iter().enumerate() {
            let cb = cost[b];
            if cb != 0.0 {
                for (j, rj) in r.iter_mut().enumerate() {
                    *rj -= cb * self.t[i][j];
                }
            }
        }
        r
    }

    /// Primal simplex with Bland's rule over columns `allowed`.
    /// Returns false if unbounded.
    fn optimize(&mut self, cost: &[f64], allowed: &[bool]) -> Result<bool, LpError> {
        loop {
            let r = self.reduced_costs(cost);
            let entering = (0..self.cols).find(|&j| allowed[j] && r[j] < -COST_TOL);
            let Some(c) = entering else {
                return Ok(true);
            };
            let mut best: Option<(f64, usize, usize)> = None;
            for i in 0..self.t.len() {
                let a = self.t[i][c];
                if a > PIVOT_TOL {
                    let ratio = self.rhs(i) / a;
                    let better = match best {
                        None => true,
                        Some((br, _, bb)) => {
                            ratio < br - 1e-12 || (ratio <= br + 1e-12 && self.basis[i] < bb)
                        }
                    };
                    if better {
                        best = Some((ratio, i, self.basis[i]));
                    }
                }
            }
            match best {
                None => return Ok(false),
                Some((_, r_idx, _)) => self.pivot(r_idx, c)?,
            }
        }
    }
}

pub fn solve(lp: &LinearProgram) -> Result<LpOutcome, LpError> {
    lp.validate()?;
    let n = lp.num_vars;

    // Variable substitution into nonnegative standard columns.
    let mut maps = Vec::with_capacity(n);
    let mut ncols = 0usize;
    let mut upper_rows: Vec<(usize, f64)> = Vec::new();
    for &(lo, hi) in &lp.bounds {
        if lo.is_finite() {
            maps.push(VarMap {
                offset: lo,
                terms: vec![(ncols, 1.0)],
            });
            if hi.is_finite() {
                upper_rows.push((ncols, hi - lo));
            }
            ncols += 1;
        } else if hi.is_finite() {
            maps.push(VarMap {
                offset: hi,
                terms: vec![(ncols, -1.0)],
            });
            ncols += 1;
        } else {
            maps.push(VarMap {
                offset: 0.0,
                terms: vec![(ncols, 1.0), (ncols + 1, -1.0)],
            });
            ncols += 2;
        }
    }
    let n_ineq = lp.inequalities.len();
    let n_slack = n_ineq + upper_rows.len();
    let n_struct = ncols + n_slack;

    let mut rows: Vec<Vec<f64>> = Vec::new();
    let mut rhs: Vec<f64> = Vec::new();
    let mut push_row = |coeffs: &[f64], r: f64, slack: Option<usize>| {
        let mut row = vec![0.0; n_struct];
        let mut b = r;
        for (j, &a) in coeffs.iter().enumerate() {
            if a == 0.0 {
                continue;
            }
            b -= a * maps[j].offset;
            for &(col, coef) in &maps[j].terms {
                row[col] += a * coef;
            }
        }
        if let Some(s) = slack {
            row[ncols + s] = 1.0;
        }
        rows.push(row);
        rhs.push(b);
    };
    for row in &lp.equalities {
        push_row(&row.coeffs, row.rhs, None);
    }
    for (k, row) in lp.inequalities.iter().enumerate() {
        push_row(&row.coeffs, row.rhs, Some(k));
    }
    let m_user = rows.len();
    for (k, &(col, ub)) in upper_rows.iter().enumerate() {
        let mut row = vec![0.0; n_struct];
        row[col] = 1.0;
        row[ncols + n_ineq + k] = 1.0;
        rows.push(row);
        rhs.push(ub);
    }
    debug_assert_eq!(rows.len(), m_user + upper_rows.len());
    let m = rows.len();

    let signs: Vec<f64> = rhs.iter().map(|b| if *b < 0.0 { -1.0 } else { 1.0 }).collect();
    let cols = n_struct + m;
    let mut t = Vec::with_capacity(m);
    for i in 0..m {
        let mut row = vec![0.0; cols + 1];
        for j in 0..n_struct {
            row[j] = signs[i] * rows[i][j];
        }
        row[n_struct + i] = 1.0;
        row[cols] = signs[i] * rhs[i];
        t.push(row);
    }
    let mut tab = Tableau {
        t,
        basis: (n_struct..cols).collect(),
        cols,
        pivots: 0,
        pivot_cap: 50 * (m + cols) + 1000,
    };

    // Phase one.
    let mut cost1 = vec![0.0; cols];
    cost1[n_struct..].iter_mut().for_each(|c| *c = 1.0);
    let all = vec![true; cols];
    tab.optimize(&cost1, &all)?;
    let residual: f64 = (0..m)
        .filter(|&i| tab.basis[i] >= n_struct)
        .map(|i| tab.rhs(i))
        .sum();
    let scale = 1.0 + rhs.iter().fold(0.0f64, |a, b| a.max(b.abs()));
    if residual > 1e-9 * scale {
        let r = tab.reduced_costs(&cost1);
        let farkas = (0..m).map(|i| signs[i] * (1.0 - r[n_struct + i])).collect();
        return Ok(LpOutcome::Infeasible { farkas, residual });
    }

    // Drive zero-level artificials out of the basis; drop redundant rows.
    let mut i = 0;
    while i < tab.t.len() {
        if tab.basis[i] >= n_struct {
            let col = (0..n_struct).find(|&j| tab.t[i][j].abs() > 1e-9);
            match col {
                Some(j) => tab.pivot(i, j)?,
                None => {
                    tab.t.remove(i);
                    tab.basis.remove(i);
                    continue;
                }
            }
        }
        i += 1;
    }

    // Phase two.
    let mut cost2 = vec![0.0; cols];
    if !lp.objective.is_empty() {
        for (j, c) in lp.objective.iter().enumerate() {
            for &(col, coef) in &maps[j].terms {
                cost2[col] += c * coef;
            }
        }
    }
    let mut allowed = vec![true; cols];
    allowed[n_struct..].iter_mut().for_each(|a| *a = false);
    if !tab.optimize(&cost2, &allowed)? {
        return Ok(LpOutcome::Unbounded);
    }

    let mut y = vec![0.0; n_struct];
    for (i, &b) in tab.basis.iter().enumerate() {
        if b < n_struct {
            y[b] = tab.rhs(i);
        }
    }
    let x: Vec<f64> = maps
        .iter()
        .map(|m| m.offset + m.terms.iter().map(|&(c, coef)| coef * y[c]).sum::<f64>())
        .collect();
    let value = if lp.objective.is_empty() {
        0.0
    } else {
        lp.objective.iter().zip(&x).map(|(c, v)| c * v).sum()
    };
    Ok(LpOutcome::Optimal { x, value })
}

/// Result of a pure feasibility query.
#[derive(Debug, Clone, PartialEq)]
pub enum Feasibility {
    Feasible(Vec<f64>),
    Infeasible { farkas: Vec<f64> },
}

impl Feasibility {
    pub fn point(&self) -> Option<&[f64]> {
        match self {
            Feasibility::Feasible(x) => Some(x),
            Feasibility::Infeasible { .. } => None,
        }
    }
}

/// Finds some point satisfying the equalities, inequalities and bounds.
pub fn lp_feasible(
    equalities: &[Row],
    inequalities: &[Row],
    bounds: &[(f64, f64)],
) -> Result<Feasibility, LpError> {
    let lp = LinearProgram {
        num_vars: bounds.len(),
        objective: Vec::new(),
        equalities: equalities.to_vec(),
        inequalities: inequalities.to_vec(),
        bounds: bounds.to_vec(),
    };
    match solve(&lp)? {
        LpOutcome::Optimal { x, .. } => Ok(Feasibility::Feasible(x)),
        LpOutcome::Infeasible { farkas, .. } => Ok(Feasibility::Infeasible { farkas }),
        LpOutcome::Unbounded => unreachable!("feasibility problems have a zero objective"),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    const NONNEG: (f64, f64) = (0.0, f64::INFINITY);

    #[test]
    fn simplex_point_feasible() {
        let eq = [Row::new(vec![1.0, 1.0], 1.0)];
        let f = lp_feasible(&eq, &[], &[NONNEG, NONNEG]).unwrap();
        let x = f.point().unwrap();
        assert!((x[0] + x[1] - 1.0).abs() < 1e-12);
        assert!(x.iter().all(|v| *v >= 0.0));
    }

    #[test]
    fn inconsistent_equalities_give_farkas() {
        let eq = [
            Row::new(vec![1.0, 1.0], 1.0),
            Row::new(vec![1.0, 1.0], 2.0),
        ];
        let Feasibility::Infeasible { farkas } = lp_feasible(&eq, &[], &[NONNEG, NONNEG]).unwrap()
        else {
            panic!("expected infeasible");
        };
        // Aᵀy <= 0 and bᵀy > 0
        for j in 0..2 {
            let col: f64 = eq.iter().zip(&farkas).map(|(r, y)| r.coeffs[j] * y).sum();
            assert!(col <= 1e-9);
        }
        let by: f64 = eq.iter().zip(&farkas).map(|(r, y)| r.rhs * y).sum();
        assert!(by > 1e-9);
    }

    #[test]
    fn optimizes_with_free_and_boxed_variables() {
        // min -x0 - x1  s.t. x0 + 2x1 <= 4, x0 in [-1, 3], x1 free, x1 >= -x0 (as -x0 - x1 <= 0)
        let mut lp = LinearProgram::new(2);
        lp.bounds = vec![(-1.0, 3.0), (f64::NEG_INFINITY, f64::INFINITY)];
        lp.add_le(vec![1.0, 2.0], 4.0).add_le(vec![-1.0, -1.0], 0.0);
        lp.minimize(vec![-1.0, -1.0]);
        let LpOutcome::Optimal { x, value } = solve(&lp).unwrap() else {
            panic!()
        };
        assert!((x[0] - 3.0).abs() < 1e-9 && (x[1] - 0.5).abs() < 1e-9, "{x:?}");
        assert!((value + 3.5).abs() < 1e-9);
    }

    #[test]
    fn detects_unbounded() {
        let mut lp = LinearProgram::new(1);
        lp.minimize(vec![-1.0]);
        assert_eq!(solve(&lp).unwrap(), LpOutcome::Unbounded);
    }

    #[test]
    fn redundant_rows_are_dropped() {
        let mut lp = LinearProgram::new(3);
        lp.add_eq(vec![1.0, 1.0, 1.0], 1.0)
            .add_eq(vec![2.0, 2.0, 2.0], 2.0)
            .minimize(vec![1.0, 2.0, 3.0]);
        let LpOutcome::Optimal { x, value } = solve(&lp).unwrap() else {
            panic!()
        };
        assert!((value - 1.0).abs() < 1e-12 && (x[0] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn degenerate_cycling_example_terminates() {
        // Beale's classic cycling example; Bland's rule must terminate.
        let mut lp = LinearProgram::new(4);
        lp.add_le(vec![0.25, -60.0, -0.04, 9.0], 0.0)
            .add_le(vec![0.5, -90.0, -0.02, 3.0], 0.0)
            .add_le(vec![0.0, 0.0, 1.0, 0.0], 1.0)
            .minimize(vec![-0.75, 150.0, -0.02, 6.0]);
        let LpOutcome::Optimal { value, .. } = solve(&lp).unwrap() else {
            panic!()
        };
        assert!((value + 0.05).abs() < 1e-9);
    }

    proptest! {
        #[test]
        fn feasible_points_satisfy_constraints(
            a in prop::collection::vec(-3.0f64..3.0, 6),
            x0 in prop::collection::vec(0.0f64..2.0, 3),
        ) {
            // Build rows consistent with a known point x0 so the system is feasible.
            let r0: f64 = a[..3].iter().zip(&x0).map(|(p, q)| p * q).sum();
            let r1: f64 = a[3..].iter().zip(&x0).map(|(p, q)| p * q).sum();
            let eq = [Row::new(a[..3].to_vec(), r0)];
            let le = [Row::new(a[3..].to_vec(), r1 + 0.1)];
            let f = lp_feasible(&eq, &le, &[NONNEG; 3]).unwrap();
            let x = f.point().expect("system is feasible by construction");
            let e0: f64 = a[..3].iter().zip(x).map(|(p, q)| p * q).sum();
            let e1: f64 = a[3..].iter().zip(x).map(|(p, q)| p * q).sum();
            prop_assert!((e0 - r0).abs() < 1e-7);
            prop_assert!(e1 <= r1 + 0.1 + 1e-7);
            prop_assert!(x.iter().all(|v| *v >= -1e-9));
        }
    }
}
