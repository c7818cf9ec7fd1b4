//! Multiplier certificates for the first- and second-order conditions and
//! the per-direction verdicts built on them.
//!
//! The equality multiplier `β` is sign-free and enters the normalization
//! through `‖β‖₁`. Each LP fixes a sign pattern `σ` and writes `β = σ ∘ b`
//! with `b ≥ 0`; all `2ᵖ` patterns are tried.

use serde::Serialize;
use thiserror::Error;

use crate::cones::{critical_at, enumerate_at, ConeError, CriticalDirection, DirectionConfig, PointContext};
use crate::expr::{ExprError, FunctionDef};
use crate::linalg::{dot, mat_t_vec, mat_vec, norm, null_space};
use crate::lp::{self, LinearProgram, LpError, LpOutcome};
use crate::problem::{FeasibilityReport, ProblemInstance};
use crate::raycalc::{weak_dir2, ClusterSet, RayError};
use crate::subdiff::{estimate_subdiff2, Interval, SamplerConfig, SeparableOracle, SubdiffError};

/// Slack for second-order rows when every interval is exact.
pub const ETA_EXACT: f64 = 1e-9;
/// Slack for second-order rows when some interval was sampled.
pub const ETA_SAMPLED: f64 = 1e-6;
/// Largest number of equality components for the sign enumeration.
pub const MAX_SIGN_BITS: usize = 12;
const CHECK_TOL: f64 = 1e-8;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum CertifyError {
    #[error(transparent)]
    Cone(#[from] ConeError),
    #[error(transparent)]
    Subdiff(#[from] SubdiffError),
    #[error(transparent)]
    Ray(#[from] RayError),
    #[error(transparent)]
    Lp(#[from] LpError),
    #[error(transparent)]
    Expr(#[from] ExprError),
    #[error("{0} equality components exceed the sign-enumeration limit")]
    TooManyEqualities(usize),
    #[error("precondition failed: {0}")]
    PreconditionFailed(String),
    #[error("certificate failed re-verification: {0}")]
    CheckFailed(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    /// Rows for every pair of cluster points of `H″` and `G″`.
    Theorem,
    /// One row using interval endpoints of `∂²h_l` and `∂²g_i` along `d`.
    Corollary,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum OracleChoice {
    /// Exact oracle for separable functions, sampling otherwise.
    Auto,
    Separable,
    Sampling,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum Overall {
    Consistent,
    Rejected,
    Degenerate,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MultiplierCertificate {
    pub mu: Vec<f64>,
    /// One entry per row of `Q`; zero off the admitted rows.
    pub lambda: Vec<f64>,
    pub beta: Vec<f64>,
    /// `Σμ + Σλ + ‖β‖₁`.
    pub normalization: f64,
    pub stationarity_residual: f64,
    pub second_order_margin: Option<f64>,
}

impl MultiplierCertificate {
    /// `z* = Σ λᵢ·rowᵢ`.
    pub fn z_star(&self, q_rows: &[Vec<f64>], k: usize) -> Vec<f64> {
        mat_t_vec(q_rows, &self.lambda, k)
    }
}

/// One linear second-order row `Σμ_j a_j + Σλ_i c_i + Σ_l b_l·(σ_l = + ? p_l : n_l)`.
#[derive(Debug, Clone, PartialEq)]
struct SecondRow {
    mu: Vec<f64>,
    lambda: Vec<f64>,
    beta_pos: Vec<f64>,
    beta_neg: Vec<f64>,
}

impl SecondRow {
    fn value(&self, mu: &[f64], lambda: &[f64], beta: &[f64]) -> f64 {
        let b: f64 = beta
            .iter()
            .enumerate()
            .map(|(l, v)| if *v >= 0.0 { v * self.beta_pos[l] } else { -v * self.beta_neg[l] })
            .sum();
        dot(&self.mu, mu) + dot(&self.lambda, lambda) + b
    }
}

/// Stationarity data with `λ` restricted to `allowed` rows of `Q`.
struct System<'a> {
    ctx: &'a PointContext,
    allowed: Vec<usize>,
    rows: Vec<SecondRow>,
}

impl System<'_> {
    fn lambda_columns(&self) -> Vec<Vec<f64>> {
        let composed = self.ctx.active_rows_in_x();
        self.allowed
            .iter()
            .map(|i| {
                let pos = self.ctx.active.iter().position(|a| a == i).expect("allowed rows are active");
                composed[pos].clone()
            })
            .collect()
    }

    /// Best margin over sign patterns, or the first feasible pattern when
    /// there are no second-order rows.
    fn solve(&self) -> Result<Option<MultiplierCertificate>, CertifyError> {
        let ctx = self.ctx;
        let (n, m, p, a) = (ctx.n(), ctx.grad_f.len(), ctx.jac_h.len(), self.allowed.len());
        if p > MAX_SIGN_BITS {
            return Err(CertifyError::TooManyEqualities(p));
        }
        let lam_cols = self.lambda_columns();
        let with_t = !self.rows.is_empty();
        let nv = m + a + p + usize::from(with_t);
        let mut best: Option<(f64, Vec<f64>, u32)> = None;
        for mask in 0u32..(1u32 << p) {
            let sign = |l: usize| if mask & (1 << l) != 0 { 1.0 } else { -1.0 };
            let mut prog = LinearProgram::new(nv);
            for c in 0..n {
                let mut coeffs = vec![0.0; nv];
                for j in 0..m {
                    coeffs[j] = ctx.grad_f[j][c];
                }
                for (i, col) in lam_cols.iter().enumerate() {
                    coeffs[m + i] = col[c];
                }
                for l in 0..p {
                    coeffs[m + a + l] = sign(l) * ctx.jac_h[l][c];
                }
                prog.add_eq(coeffs, 0.0);
            }
            let mut norm_row = vec![1.0; m + a + p];
            if with_t {
                norm_row.push(0.0);
            }
            prog.add_eq(norm_row, 1.0);
            if with_t {
                prog.bounds[nv - 1] = (f64::NEG_INFINITY, f64::INFINITY);
                for r in &self.rows {
                    // t − row ≤ 0
                    let mut coeffs = vec![0.0; nv];
                    for j in 0..m {
                        coeffs[j] = -r.mu[j];
                    }
                    for i in 0..a {
                        coeffs[m + i] = -r.lambda[i];
                    }
                    for l in 0..p {
                        coeffs[m + a + l] = -if sign(l) > 0.0 { r.beta_pos[l] } else { r.beta_neg[l] };
                    }
                    coeffs[nv - 1] = 1.0;
                    prog.add_le(coeffs, 0.0);
                }
                let mut obj = vec![0.0; nv];
                obj[nv - 1] = -1.0;
                prog.minimize(obj);
            }
            match lp::solve(&prog)? {
                LpOutcome::Optimal { x, .. } => {
                    let t = if with_t { x[nv - 1] } else { 0.0 };
                    if best.as_ref().is_none_or(|(bt, _, _)| t > *bt + 1e-12) {
                        best = Some((t, x, mask));
                    }
                    if !with_t {
                        break;
                    }
                }
                LpOutcome::Infeasible { .. } => {}
                LpOutcome::Unbounded => {
                    return Err(CertifyError::PreconditionFailed("multiplier LP unbounded".into()))
                }
            }
        }
        let Some((t, x, mask)) = best else {
            return Ok(None);
        };
        let mu: Vec<f64> = x[..m].iter().map(|v| v.max(0.0)).collect();
        let mut lambda = vec![0.0; ctx.q_rows.len()];
        for (i, row) in self.allowed.iter().enumerate() {
            lambda[*row] = x[m + i].max(0.0);
        }
        let beta: Vec<f64> = (0..p)
            .map(|l| x[m + a + l].max(0.0) * if mask & (1 << l) != 0 { 1.0 } else { -1.0 })
            .collect();
        let mut cert = MultiplierCertificate {
            normalization: mu.iter().sum::<f64>() + lambda.iter().sum::<f64>() + beta.iter().map(|b| b.abs()).sum::<f64>(),
            stationarity_residual: 0.0,
            mu,
            lambda,
            beta,
            second_order_margin: with_t.then_some(t),
        };
        cert.stationarity_residual = stationarity_residual(ctx, &cert);
        Ok(Some(cert))
    }

    fn margin_of(&self, cert: &MultiplierCertificate) -> Option<f64> {
        let lam: Vec<f64> = self.allowed.iter().map(|i| cert.lambda[*i]).collect();
        self.rows
            .iter()
            .map(|r| r.value(&cert.mu, &lam, &cert.beta))
            .reduce(f64::min)
    }
}

fn stationarity_residual(ctx: &PointContext, cert: &MultiplierCertificate) -> f64 {
    let n = ctx.n();
    let mut v = mat_t_vec(&ctx.grad_f, &cert.mu, n);
    let hv = mat_t_vec(&ctx.jac_h, &cert.beta, n);
    let z = mat_t_vec(&ctx.q_rows, &cert.lambda, ctx.g_value.len());
    let gv = mat_t_vec(&ctx.jac_g, &z, n);
    for c in 0..n {
        v[c] += hv[c] + gv[c];
    }
    norm(&v)
}

/// Re-checks complementarity, stationarity, normalization and the recorded
/// margin by direct arithmetic.
fn recheck(sys: &System, cert: &MultiplierCertificate) -> Result<(), CertifyError> {
    let ctx = sys.ctx;
    for (i, l) in cert.lambda.iter().enumerate() {
        if *l < 0.0 || (*l != 0.0 && !sys.allowed.contains(&i)) {
            return Err(CertifyError::CheckFailed(format!("λ[{i}] = {l} off the admitted rows")));
        }
    }
    if cert.mu.iter().any(|m| *m < 0.0) {
        return Err(CertifyError::CheckFailed("negative μ".into()));
    }
    if (cert.normalization - 1.0).abs() > CHECK_TOL {
        return Err(CertifyError::CheckFailed(format!("normalization {}", cert.normalization)));
    }
    let scale = 1.0 + ctx.grad_f.iter().chain(&ctx.jac_h).chain(&ctx.jac_g).map(|r| norm(r)).fold(0.0, f64::max);
    let res = stationarity_residual(ctx, cert);
    if res > CHECK_TOL * scale {
        return Err(CertifyError::CheckFailed(format!("stationarity residual {res:.3e}")));
    }
    if let (Some(recorded), Some(actual)) = (cert.second_order_margin, sys.margin_of(cert)) {
        if actual < recorded - CHECK_TOL * (1.0 + recorded.abs()) {
            return Err(CertifyError::CheckFailed(format!(
                "second-order rows give {actual}, recorded {recorded}"
            )));
        }
    }
    Ok(())
}

/// Multipliers for the first-order condition at `x̂` (the case `d = 0`).
pub fn first_order_certificate(problem: &ProblemInstance, x: &[f64]) -> Result<Option<MultiplierCertificate>, CertifyError> {
    first_order_at(&PointContext::new(problem, x)?)
}

pub fn first_order_at(ctx: &PointContext) -> Result<Option<MultiplierCertificate>, CertifyError> {
    let sys = System {
        ctx,
        allowed: ctx.active.clone(),
        rows: Vec::new(),
    };
    let cert = sys.solve()?;
    if let Some(c) = &cert {
        recheck(&sys, c)?;
    }
    Ok(cert)
}

/// Support interval of `∂²f(x̂)(d)` along `d`, and whether it is exact.
pub fn support_along(
    f: &FunctionDef,
    x: &[f64],
    d: &[f64],
    oracle: OracleChoice,
    sampler: &SamplerConfig,
) -> Result<(Interval, bool), CertifyError> {
    if oracle != OracleChoice::Sampling {
        match SeparableOracle::from_function(f) {
            Ok(o) => return Ok((o.support_interval(x, d, d)?, true)),
            Err(e) if oracle == OracleChoice::Separable => return Err(e.into()),
            Err(_) => {}
        }
    }
    let est = estimate_subdiff2(f, x, d, sampler)?;
    Ok((est.support_interval(d)?, est.smooth_base))
}

/// Second-order inputs along one direction.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SecondOrderData {
    /// `S_j` for each objective.
    pub s: Vec<Interval>,
    /// Cluster values of `H″(x̂; d)`.
    pub k: ClusterSet,
    /// Cluster values of `G″(x̂; d)`.
    pub m: ClusterSet,
    /// Support intervals of `∂²h_l(x̂)(d)` along `d`.
    pub h_intervals: Vec<Interval>,
    /// Support intervals of `∂²g_i(x̂)(d)` along `d`.
    pub g_intervals: Vec<Interval>,
    /// Every interval came from an exact source.
    pub exact: bool,
}

pub fn second_order_data(
    problem: &ProblemInstance,
    ctx: &PointContext,
    d: &[f64],
    mode: Mode,
    oracle: OracleChoice,
    sampler: &SamplerConfig,
) -> Result<SecondOrderData, CertifyError> {
    let mut exact = true;
    let mut intervals = |fs: &[FunctionDef]| -> Result<Vec<Interval>, CertifyError> {
        fs.iter()
            .map(|f| {
                let (s, ex) = support_along(f, &ctx.x, d, oracle, sampler)?;
                exact &= ex;
                Ok(s)
            })
            .collect()
    };
    let s = intervals(&problem.objectives)?;
    let (h_intervals, g_intervals) = if mode == Mode::Corollary {
        (intervals(&problem.equalities)?, intervals(&problem.qmap)?)
    } else {
        (Vec::new(), Vec::new())
    };
    Ok(SecondOrderData {
        s,
        k: weak_dir2(&problem.equalities, &ctx.x, d, &ctx.eps_seq)?,
        m: weak_dir2(&problem.qmap, &ctx.x, d, &ctx.eps_seq)?,
        h_intervals,
        g_intervals,
        exact,
    })
}

/// Result of the second-order search along one critical direction.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SecondOrderOutcome {
    pub certificate: Option<MultiplierCertificate>,
    /// Largest achievable minimum over the second-order rows; `None` for a
    /// vacuous (nonregular) direction or when no first-order multiplier exists.
    pub margin: Option<f64>,
    pub refuted: bool,
}

/// Searches for multipliers satisfying the second-order condition along `dir`.
pub fn second_order_certificate(
    ctx: &PointContext,
    dir: &CriticalDirection,
    data: &SecondOrderData,
    mode: Mode,
    eta: f64,
) -> Result<SecondOrderOutcome, CertifyError> {
    if data.s.len() != ctx.grad_f.len() {
        return Err(CertifyError::PreconditionFailed(format!(
            "{} objective intervals for {} objectives",
            data.s.len(),
            ctx.grad_f.len()
        )));
    }
    if !dir.regular {
        return Ok(SecondOrderOutcome {
            certificate: None,
            margin: None,
            refuted: false,
        });
    }
    let d = &dir.d;
    let jgd = mat_vec(&ctx.jac_g, d);
    // λ lives on rows active at G(x̂) and tight along G′(x̂)d.
    let allowed: Vec<usize> = ctx
        .active
        .iter()
        .copied()
        .filter(|&i| dot(&ctx.q_rows[i], &jgd).abs() <= ctx.tau_crit)
        .collect();
    let s_hi: Vec<f64> = data.s.iter().map(|s| s.hi).collect();
    let p = ctx.jac_h.len();
    let rows = match mode {
        Mode::Theorem => {
            let mut rows = Vec::new();
            for q in &data.k.points {
                for r in &data.m.points {
                    rows.push(SecondRow {
                        mu: s_hi.clone(),
                        lambda: allowed.iter().map(|i| dot(&ctx.q_rows[*i], r)).collect(),
                        beta_pos: q.clone(),
                        beta_neg: q.iter().map(|v| -v).collect(),
                    });
                }
            }
            rows
        }
        Mode::Corollary => {
            if data.h_intervals.len() != p || data.g_intervals.len() != ctx.g_value.len() {
                return Err(CertifyError::PreconditionFailed(
                    "corollary mode needs intervals for every equality and constraint component".into(),
                ));
            }
            // Upper end of Σ_c A_ic·[e_c^lo, e_c^hi] for each admitted row.
            let lambda = allowed
                .iter()
                .map(|i| {
                    ctx.q_rows[*i]
                        .iter()
                        .zip(&data.g_intervals)
                        .map(|(a, e)| if *a >= 0.0 { a * e.hi } else { a * e.lo })
                        .sum()
                })
                .collect();
            vec![SecondRow {
                mu: s_hi.clone(),
                lambda,
                beta_pos: data.h_intervals.iter().map(|t| t.hi).collect(),
                beta_neg: data.h_intervals.iter().map(|t| -t.lo).collect(),
            }]
        }
    };
    if rows.is_empty() {
        // Empty cluster sets make the direction nonregular; handled above.
        return Ok(SecondOrderOutcome {
            certificate: None,
            margin: None,
            refuted: false,
        });
    }
    let sys = System { ctx, allowed, rows };
    let mut cert = sys.solve()?;

    // A stationary objective with nonnegative curvature certifies on its own.
    let stationary = ctx.grad_f.iter().zip(&s_hi).position(|(g, s)| norm(g) <= ctx.tau_crit && *s >= 0.0);
    if let Some(j) = stationary {
        let mut mu = vec![0.0; ctx.grad_f.len()];
        mu[j] = 1.0;
        let mut direct = MultiplierCertificate {
            mu,
            lambda: vec![0.0; ctx.q_rows.len()],
            beta: vec![0.0; p],
            normalization: 1.0,
            stationarity_residual: 0.0,
            second_order_margin: None,
        };
        direct.stationarity_residual = stationarity_residual(ctx, &direct);
        direct.second_order_margin = sys.margin_of(&direct);
        let better = match &cert {
            None => true,
            Some(c) => direct.second_order_margin > c.second_order_margin,
        };
        if better {
            cert = Some(direct);
        }
    }

    let Some(c) = cert else {
        return Ok(SecondOrderOutcome {
            certificate: None,
            margin: None,
            refuted: true,
        });
    };
    recheck(&sys, &c)?;
    let margin = c.second_order_margin.expect("second-order rows present");
    let ok = margin >= -eta;
    Ok(SecondOrderOutcome {
        margin: Some(margin),
        refuted: !ok,
        certificate: ok.then_some(c),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct VerifyConfig {
    pub mode: Mode,
    pub oracle: OracleChoice,
    pub sampler: SamplerConfig,
    /// Overrides the automatic choice between [`ETA_EXACT`] and [`ETA_SAMPLED`].
    pub eta: Option<f64>,
    /// Multiplies whichever slack is in force.
    pub eta_scale: f64,
    pub directions: DirectionConfig,
}

impl Default for VerifyConfig {
    fn default() -> Self {
        VerifyConfig {
            mode: Mode::Theorem,
            oracle: OracleChoice::Auto,
            sampler: SamplerConfig::default(),
            eta: None,
            eta_scale: 1.0,
            directions: DirectionConfig::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DirectionVerdict {
    pub d: Vec<f64>,
    pub critical: bool,
    pub regular: bool,
    pub mode: Mode,
    pub certificate: Option<MultiplierCertificate>,
    pub margin: Option<f64>,
    pub refuted: bool,
    pub eta: Option<f64>,
    pub objective_intervals: Vec<Interval>,
    pub k_points: Vec<Vec<f64>>,
    pub m_points: Vec<Vec<f64>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub diagnostics: Option<CriticalDirection>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct VerificationReport {
    pub point: Vec<f64>,
    pub feasible: bool,
    pub feasibility: FeasibilityReport,
    #[serde(rename = "rank_H")]
    pub rank_h: usize,
    pub first_order: Option<MultiplierCertificate>,
    pub directions: Vec<DirectionVerdict>,
    pub overall: Overall,
    pub notes: Vec<String>,
}

impl VerificationReport {
    pub fn refuting_directions(&self) -> impl Iterator<Item = &DirectionVerdict> {
        self.directions.iter().filter(|v| v.refuted)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }
}

fn verdict_for(
    problem: &ProblemInstance,
    ctx: &PointContext,
    dir: CriticalDirection,
    cfg: &VerifyConfig,
) -> Result<DirectionVerdict, CertifyError> {
    let data = second_order_data(problem, ctx, &dir.d, cfg.mode, cfg.oracle, &cfg.sampler)?;
    let base = cfg.eta.unwrap_or(if data.exact { ETA_EXACT } else { ETA_SAMPLED });
    let eta = base * cfg.eta_scale;
    let out = second_order_certificate(ctx, &dir, &data, cfg.mode, eta)?;
    Ok(DirectionVerdict {
        d: dir.d.clone(),
        critical: true,
        regular: dir.regular,
        mode: cfg.mode,
        certificate: out.certificate,
        margin: out.margin,
        refuted: out.refuted,
        eta: Some(eta),
        objective_intervals: data.s,
        k_points: data.k.points,
        m_points: data.m.points,
        diagnostics: Some(dir),
    })
}

/// Full check at `x̂`: feasibility, rank of `J_H`, first-order multipliers
/// and the second-order search along every enumerated critical direction.
pub fn verdict(problem: &ProblemInstance, x: &[f64], cfg: &VerifyConfig) -> Result<VerificationReport, CertifyError> {
    let ctx = PointContext::new(problem, x)?;
    let p = problem.equalities.len();
    let rank_h = ctx.rank_h();
    let mut notes = Vec::new();

    if rank_h < p {
        let left_null = null_space(&transpose(&ctx.jac_h, ctx.n()), p, 1e-10);
        let v = &left_null[0];
        let l1: f64 = v.iter().map(|c| c.abs()).sum();
        let beta: Vec<f64> = v.iter().map(|c| c / l1).collect();
        let mut cert = MultiplierCertificate {
            mu: vec![0.0; problem.objectives.len()],
            lambda: vec![0.0; ctx.q_rows.len()],
            beta,
            normalization: 1.0,
            stationarity_residual: 0.0,
            second_order_margin: None,
        };
        cert.stationarity_residual = stationarity_residual(&ctx, &cert);
        notes.push(format!(
            "J_H has rank {rank_h} < {p}: multipliers supported on its left null space satisfy the conditions vacuously"
        ));
        return Ok(VerificationReport {
            point: x.to_vec(),
            feasible: true,
            feasibility: ctx.feasibility.clone(),
            rank_h,
            first_order: Some(cert),
            directions: Vec::new(),
            overall: Overall::Degenerate,
            notes,
        });
    }

    let first_order = first_order_at(&ctx)?;
    if first_order.is_none() {
        notes.push("no first-order multiplier exists".into());
    }
    let mut directions = Vec::new();
    for dir in enumerate_at(problem, &ctx, &cfg.directions)? {
        directions.push(verdict_for(problem, &ctx, dir, cfg)?);
    }
    for u in &cfg.directions.user {
        let nu = norm(u);
        if nu == 0.0 {
            continue;
        }
        let d: Vec<f64> = u.iter().map(|c| c / nu).collect();
        if critical_at(problem, &ctx, &d)?.is_none() {
            directions.push(DirectionVerdict {
                d,
                critical: false,
                regular: false,
                mode: cfg.mode,
                certificate: None,
                margin: None,
                refuted: false,
                eta: None,
                objective_intervals: Vec::new(),
                k_points: Vec::new(),
                m_points: Vec::new(),
                diagnostics: None,
            });
        }
    }
    let refuted = first_order.is_none() || directions.iter().any(|v| v.refuted);
    Ok(VerificationReport {
        point: x.to_vec(),
        feasible: true,
        feasibility: ctx.feasibility.clone(),
        rank_h,
        first_order,
        directions,
        overall: if refuted { Overall::Rejected } else { Overall::Consistent },
        notes,
    })
}

fn transpose(rows: &[Vec<f64>], n: usize) -> Vec<Vec<f64>> {
    (0..n).map(|c| rows.iter().map(|r| r[c]).collect()).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cones::is_critical;
    use crate::problem::PolyhedronSpec;
    use crate::sexpr::parse;

    fn fdef(name: &str, src: &str, n: usize) -> FunctionDef {
        FunctionDef::new(name, n, parse(src).unwrap()).unwrap()
    }

    fn p5() -> ProblemInstance {
        let mut p = ProblemInstance::unconstrained(2, vec![fdef("f0", "v1", 2)]);
        p.equalities = vec![fdef("h0", "(- v1 (* v0 (abs v0)))", 2)];
        p
    }

    #[test]
    fn first_order_examples() {
        let sq = ProblemInstance::unconstrained(1, vec![fdef("f0", "(pow v0 2)", 1)]);
        let c = first_order_certificate(&sq, &[0.0]).unwrap().unwrap();
        assert_eq!(c.mu, vec![1.0]);

        let lin = ProblemInstance::unconstrained(1, vec![fdef("f0", "v0", 1)]);
        assert!(first_order_certificate(&lin, &[0.0]).unwrap().is_none());

        let c = first_order_certificate(&p5(), &[0.0, 0.0]).unwrap().unwrap();
        assert!((c.mu[0] - 0.5).abs() < 1e-12 && (c.beta[0] + 0.5).abs() < 1e-12);
    }

    #[test]
    fn split_beta_cannot_fake_a_certificate() {
        // ∇f = 1 and J_H = 1: μ + β = 0 with μ ≥ 0 forces β = −μ.
        let mut p = ProblemInstance::unconstrained(1, vec![fdef("f0", "v0", 1)]);
        p.equalities = vec![fdef("h0", "v0", 1)];
        let c = first_order_certificate(&p, &[0.0]).unwrap().unwrap();
        assert!(c.mu[0] > 0.4 && c.beta[0] < -0.4);
    }

    fn second(p: &ProblemInstance, x: &[f64], d: &[f64], mode: Mode) -> SecondOrderOutcome {
        let ctx = PointContext::new(p, x).unwrap();
        let dir = is_critical(p, x, d).unwrap().unwrap();
        let data = second_order_data(p, &ctx, d, mode, OracleChoice::Auto, &SamplerConfig::default()).unwrap();
        assert!(data.exact);
        second_order_certificate(&ctx, &dir, &data, mode, ETA_EXACT).unwrap()
    }

    #[test]
    fn second_order_examples() {
        let neg = ProblemInstance::unconstrained(1, vec![fdef("f0", "(neg (pow v0 2))", 1)]);
        let out = second(&neg, &[0.0], &[1.0], Mode::Theorem);
        assert!(out.refuted && out.certificate.is_none());
        assert!((out.margin.unwrap() + 2.0).abs() < 1e-12);

        let out = second(&p5(), &[0.0, 0.0], &[-1.0, 0.0], Mode::Theorem);
        assert!(out.refuted);
        assert!((out.margin.unwrap() + 1.0).abs() < 1e-9, "{out:?}");
        // ∂²h(0)(d)(d) = [−2, 2] lets the endpoint rows pick −2 for β = −½.
        let out = second(&p5(), &[0.0, 0.0], &[-1.0, 0.0], Mode::Corollary);
        assert!(!out.refuted);
        assert!((out.margin.unwrap() - 1.0).abs() < 1e-9, "{out:?}");

        let mut p4 = ProblemInstance::unconstrained(2, vec![fdef("f0", "(+ (* v0 (abs v0)) (pow v1 2))", 2)]);
        p4.qmap = vec![fdef("g0", "(neg v0)", 2)];
        p4.qset = PolyhedronSpec::Orthant { dim: 1 };
        let out = second(&p4, &[0.0, 0.0], &[1.0, 0.0], Mode::Theorem);
        let c = out.certificate.unwrap();
        assert_eq!(c.mu, vec![1.0]);
        assert_eq!(c.lambda, vec![0.0]);
        assert!((out.margin.unwrap() - 2.0).abs() < 1e-12);
    }

    #[test]
    fn missing_intervals_fail_precondition() {
        let p = p5();
        let ctx = PointContext::new(&p, &[0.0, 0.0]).unwrap();
        let dir = is_critical(&p, &[0.0, 0.0], &[1.0, 0.0]).unwrap().unwrap();
        let mut data = second_order_data(&p, &ctx, &dir.d, Mode::Theorem, OracleChoice::Auto, &SamplerConfig::default()).unwrap();
        data.s.clear();
        assert!(matches!(
            second_order_certificate(&ctx, &dir, &data, Mode::Theorem, ETA_EXACT),
            Err(CertifyError::PreconditionFailed(_))
        ));
    }

    #[test]
    fn verdict_examples() {
        let p3 = ProblemInstance::unconstrained(
            2,
            vec![
                fdef("f0", "(+ (pow v0 2) (pow v1 2))", 2),
                fdef("f1", "(+ (pow (- v0 1) 2) (pow v1 2))", 2),
            ],
        );
        let r = verdict(&p3, &[0.5, 0.0], &VerifyConfig::default()).unwrap();
        assert_eq!(r.overall, Overall::Consistent);
        let mu = &r.first_order.as_ref().unwrap().mu;
        assert!((mu[0] - 0.5).abs() < 1e-12 && (mu[1] - 0.5).abs() < 1e-12);

        let p2 = ProblemInstance::unconstrained(1, vec![fdef("f0", "(neg (pow v0 2))", 1), fdef("f1", "v0", 1)]);
        let mut cfg = VerifyConfig::default();
        cfg.directions.user = vec![vec![1.0]];
        let r = verdict(&p2, &[0.0], &cfg).unwrap();
        assert_eq!(r.overall, Overall::Rejected);
        let bad: Vec<_> = r.refuting_directions().collect();
        assert_eq!(bad.len(), 1);
        assert_eq!(bad[0].d, vec![-1.0]);
        assert!(r.directions.iter().any(|v| v.d == vec![1.0] && !v.critical));

        let mut p6 = ProblemInstance::unconstrained(1, vec![fdef("f0", "v0", 1)]);
        p6.equalities = vec![fdef("h0", "(pow v0 2)", 1)];
        let r = verdict(&p6, &[0.0], &VerifyConfig::default()).unwrap();
        assert_eq!(r.overall, Overall::Degenerate);
        assert_eq!(r.rank_h, 0);
    }
}
