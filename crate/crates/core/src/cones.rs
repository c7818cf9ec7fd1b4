//! Polyhedral cones at a candidate point: active rows, normal and feasible
//! cones, critical and regular directions, and the support function of the
//! second-order variation set of `Q`.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use thiserror::Error;

use crate::expr::{random_unit, ExprError};
use crate::linalg::{dot, mat_vec, norm, null_space, rank};
use crate::lp::{self, lp_feasible, Feasibility, LinearProgram, LpError, LpOutcome, Row};
use crate::problem::{jacobian, values, FeasibilityReport, PolyhedronSpec, ProblemInstance, TAU_FEAS};
use crate::raycalc::{default_eps_sequence, weak_dir2, RayError};

/// Largest dimension for which extreme rays of the critical cone are enumerated.
pub const MAX_RAY_DIM: usize = 6;
const NULL_TOL: f64 = 1e-10;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ConeError {
    #[error("point is not in Q (largest row violation {violation:.3e})")]
    NotInQ { violation: f64 },
    #[error("candidate point is infeasible (equality residual {equality_residual:.3e}, Q violation {q_violation:.3e})")]
    InfeasiblePoint {
        equality_residual: f64,
        q_violation: f64,
    },
    #[error("precondition failed: {0}")]
    PreconditionFailed(String),
    #[error("dimension mismatch: expected {expected}, got {got}")]
    Dimension { expected: usize, got: usize },
    #[error(transparent)]
    Expr(#[from] ExprError),
    #[error(transparent)]
    Lp(#[from] LpError),
    #[error(transparent)]
    Ray(#[from] RayError),
}

fn row_tol(bi: f64) -> f64 {
    TAU_FEAS * (1.0 + bi.abs())
}

/// Indices of rows of `Q` tight at `z`.
pub fn active_rows(q: &PolyhedronSpec, z: &[f64]) -> Result<Vec<usize>, ConeError> {
    if z.len() != q.dim() {
        return Err(ConeError::Dimension {
            expected: q.dim(),
            got: z.len(),
        });
    }
    let (_, b) = q.rows();
    let slack = q.row_values(z);
    let violation = slack
        .iter()
        .zip(&b)
        .map(|(s, bi)| s - row_tol(*bi))
        .fold(f64::NEG_INFINITY, f64::max);
    if violation > 0.0 {
        return Err(ConeError::NotInQ {
            violation: violation + TAU_FEAS,
        });
    }
    Ok(slack
        .iter()
        .zip(&b)
        .enumerate()
        .filter(|(_, (s, bi))| s.abs() <= row_tol(**bi))
        .map(|(i, _)| i)
        .collect())
}

/// Generators of `N(Q; z)`: the active rows.
pub fn normal_cone_rep(q: &PolyhedronSpec, z: &[f64]) -> Result<Vec<Vec<f64>>, ConeError> {
    let (a, _) = q.rows();
    Ok(active_rows(q, z)?.into_iter().map(|i| a[i].clone()).collect())
}

/// `v ∈ cone(Q − z)`: every active row has `Aᵢv ≤ tol`.
pub fn feasible_cone_membership(q: &PolyhedronSpec, z: &[f64], v: &[f64], tol: f64) -> Result<bool, ConeError> {
    Ok(normal_cone_rep(q, z)?.iter().all(|r| dot(r, v) <= tol))
}

/// Value of a support function that is either `0` or `+∞`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum ConeSupport {
    Zero,
    Infinite,
}

impl ConeSupport {
    pub fn value(self) -> f64 {
        match self {
            ConeSupport::Zero => 0.0,
            ConeSupport::Infinite => f64::INFINITY,
        }
    }
}

/// Support function of `Q°(ẑ, dz)` at `z*` for polyhedral `Q`.
///
/// With `dz` in the feasible cone the set is `cone(T − dz)`, `T` the
/// tangent cone at `ẑ`. Its support is `+∞` as soon as some `v ∈ T` has
/// `⟨z*, v − dz⟩ > 0`. Since `T` is a cone this happens iff `⟨z*, dz⟩ < 0`
/// or `⟨z*, ·⟩` is positive somewhere on `T ∩ [−1, 1]ᵏ`, which one LP decides.
pub fn qcirc_support(q: &PolyhedronSpec, z_hat: &[f64], dz: &[f64], z_star: &[f64]) -> Result<ConeSupport, ConeError> {
    let k = q.dim();
    if dz.len() != k || z_star.len() != k {
        return Err(ConeError::Dimension {
            expected: k,
            got: dz.len().min(z_star.len()),
        });
    }
    let gens = normal_cone_rep(q, z_hat)?;
    let scale = 1.0 + norm(dz);
    if gens.iter().any(|r| dot(r, dz) > 1e-9 * scale * (1.0 + norm(r))) {
        return Err(ConeError::PreconditionFailed(
            "direction image is outside the feasible cone of Q".into(),
        ));
    }
    let tol = 1e-9 * (1.0 + norm(z_star)) * scale;
    if dot(z_star, dz) < -tol {
        return Ok(ConeSupport::Infinite);
    }
    // maximize ⟨z*, v⟩ over A_act v ≤ 0, ‖v‖∞ ≤ 1
    let mut lp = LinearProgram::new(k);
    lp.bounds = vec![(-1.0, 1.0); k];
    for r in &gens {
        lp.add_le(r.clone(), 0.0);
    }
    lp.minimize(z_star.iter().map(|c| -c).collect());
    let best = match lp::solve(&lp)? {
        LpOutcome::Optimal { value, .. } => -value,
        other => {
            return Err(ConeError::PreconditionFailed(format!(
                "tangent-cone LP returned {other:?}"
            )))
        }
    };
    if best > tol {
        Ok(ConeSupport::Infinite)
    } else {
        Ok(ConeSupport::Zero)
    }
}

/// Dual form of [`qcirc_support`]: zero iff `z* ∈ N(Q; ẑ)` and `⟨z*, dz⟩ = 0`.
pub fn qcirc_support_dual(q: &PolyhedronSpec, z_hat: &[f64], dz: &[f64], z_star: &[f64]) -> Result<ConeSupport, ConeError> {
    let gens = normal_cone_rep(q, z_hat)?;
    let k = q.dim();
    let tol = 1e-9 * (1.0 + norm(z_star)) * (1.0 + norm(dz));
    if dot(z_star, dz).abs() > tol {
        return Ok(ConeSupport::Infinite);
    }
    if norm(z_star) <= tol {
        return Ok(ConeSupport::Zero);
    }
    // z* = Σ λᵢ rowᵢ, λ ≥ 0, solved with a slack box on the residual
    let eqs: Vec<Row> = (0..k)
        .map(|c| Row::new(gens.iter().map(|r| r[c]).collect(), z_star[c]))
        .collect();
    let bounds = vec![(0.0, f64::INFINITY); gens.len()];
    if gens.is_empty() {
        return Ok(ConeSupport::Infinite);
    }
    Ok(match lp_feasible(&eqs, &[], &bounds)? {
        Feasibility::Feasible(_) => ConeSupport::Zero,
        Feasibility::Infeasible { .. } => ConeSupport::Infinite,
    })
}

/// First-order data of a problem at a feasible point.
#[derive(Debug, Clone, PartialEq)]
pub struct PointContext {
    pub x: Vec<f64>,
    pub feasibility: FeasibilityReport,
    pub grad_f: Vec<Vec<f64>>,
    pub jac_h: Vec<Vec<f64>>,
    pub jac_g: Vec<Vec<f64>>,
    pub g_value: Vec<f64>,
    /// Half-space rows of `Q`.
    pub q_rows: Vec<Vec<f64>>,
    pub active: Vec<usize>,
    pub tau_crit: f64,
    pub eps_seq: Vec<f64>,
}

impl PointContext {
    pub fn new(problem: &ProblemInstance, x: &[f64]) -> Result<Self, ConeError> {
        if x.len() != problem.n {
            return Err(ConeError::Dimension {
                expected: problem.n,
                got: x.len(),
            });
        }
        let feasibility = problem.feasibility(x, TAU_FEAS)?;
        if !feasibility.feasible {
            return Err(ConeError::InfeasiblePoint {
                equality_residual: feasibility.equality_residual,
                q_violation: feasibility.q_violation,
            });
        }
        let grad_f = jacobian(&problem.objectives, x)?;
        let g_value = values(&problem.qmap, x)?;
        let active = if problem.qmap.is_empty() {
            Vec::new()
        } else {
            active_rows(&problem.qset, &g_value)?
        };
        let fro = grad_f.iter().map(|g| dot(g, g)).sum::<f64>().sqrt();
        Ok(PointContext {
            x: x.to_vec(),
            feasibility,
            jac_h: jacobian(&problem.equalities, x)?,
            jac_g: jacobian(&problem.qmap, x)?,
            q_rows: problem.qset.rows().0,
            grad_f,
            g_value,
            active,
            tau_crit: 1e-7 * (1.0 + fro),
            eps_seq: default_eps_sequence(),
        })
    }

    pub fn n(&self) -> usize {
        self.x.len()
    }

    /// Active rows composed with `J_G`: `Aᵢ J_G(x̂)` for active `i`.
    pub fn active_rows_in_x(&self) -> Vec<Vec<f64>> {
        let n = self.n();
        self.active
            .iter()
            .map(|&i| {
                (0..n)
                    .map(|c| self.jac_g.iter().zip(&self.q_rows[i]).map(|(g, a)| a * g[c]).sum())
                    .collect()
            })
            .collect()
    }

    pub fn rank_h(&self) -> usize {
        rank(&self.jac_h, self.n(), NULL_TOL)
    }
}

/// A direction passing the critical-direction tests, with diagnostics.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CriticalDirection {
    pub d: Vec<f64>,
    /// `⟨∇f_j(x̂), d⟩`.
    pub objective_slacks: Vec<f64>,
    /// `‖J_H(x̂)d‖`.
    pub equality_residual: f64,
    /// Rows of `Q` active at `G(x̂)`.
    pub active_rows: Vec<usize>,
    pub regular: bool,
}

/// Evaluates the critical-direction conditions at a prepared point.
pub fn critical_at(problem: &ProblemInstance, ctx: &PointContext, d: &[f64]) -> Result<Option<CriticalDirection>, ConeError> {
    if d.len() != ctx.n() {
        return Err(ConeError::Dimension {
            expected: ctx.n(),
            got: d.len(),
        });
    }
    let tau = ctx.tau_crit;
    let slacks = mat_vec(&ctx.grad_f, d);
    let eq_res = norm(&mat_vec(&ctx.jac_h, d));
    let cone_ok = ctx.active_rows_in_x().iter().all(|r| dot(r, d) <= tau);
    if slacks.iter().any(|s| *s > tau) || eq_res > tau || !cone_ok {
        return Ok(None);
    }
    Ok(Some(CriticalDirection {
        d: d.to_vec(),
        objective_slacks: slacks,
        equality_residual: eq_res,
        active_rows: ctx.active.clone(),
        regular: regular_at(problem, ctx, d)?,
    }))
}

/// Nonempty cluster sets for `H` and `G` along `d`, and `G′(x̂)d` in the
/// feasible cone of `Q`.
pub fn regular_at(problem: &ProblemInstance, ctx: &PointContext, d: &[f64]) -> Result<bool, ConeError> {
    let kh = weak_dir2(&problem.equalities, &ctx.x, d, &ctx.eps_seq)?;
    let kg = weak_dir2(&problem.qmap, &ctx.x, d, &ctx.eps_seq)?;
    let cone_ok = ctx
        .active_rows_in_x()
        .iter()
        .all(|r| dot(r, d) <= ctx.tau_crit);
    Ok(!kh.noise_dominated() && !kg.noise_dominated() && cone_ok)
}

pub fn is_critical(problem: &ProblemInstance, x: &[f64], d: &[f64]) -> Result<Option<CriticalDirection>, ConeError> {
    critical_at(problem, &PointContext::new(problem, x)?, d)
}

pub fn is_regular(problem: &ProblemInstance, x: &[f64], d: &[f64]) -> Result<bool, ConeError> {
    regular_at(problem, &PointContext::new(problem, x)?, d)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DirectionConfig {
    pub user: Vec<Vec<f64>>,
    pub random: usize,
    pub rays: bool,
    pub seed: u64,
}

impl Default for DirectionConfig {
    fn default() -> Self {
        DirectionConfig {
            user: Vec::new(),
            random: 0,
            rays: true,
            seed: 11,
        }
    }
}

fn unit(v: &[f64]) -> Option<Vec<f64>> {
    let nv = norm(v);
    (nv > 1e-12 && nv.is_finite()).then(|| v.iter().map(|c| c / nv).collect())
}

fn push_unique(out: &mut Vec<Vec<f64>>, v: Vec<f64>) {
    let dup = out
        .iter()
        .any(|u| u.iter().zip(&v).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max) < 1e-8);
    if !dup {
        out.push(v);
    }
}

/// Extreme rays of `{d : E d = 0, I d ≤ 0}` (both signs of each lineality
/// basis vector count as rays).
pub fn critical_cone_rays(eqs: &[Vec<f64>], ineqs: &[Vec<f64>], n: usize, tol: f64) -> Vec<Vec<f64>> {
    let mut out = Vec::new();
    let all: Vec<Vec<f64>> = eqs.iter().chain(ineqs).cloned().collect();
    let lineality = null_space(&all, n, NULL_TOL);
    for v in &lineality {
        push_unique(&mut out, v.clone());
        push_unique(&mut out, v.iter().map(|c| -c).collect());
    }
    let mut base: Vec<Vec<f64>> = eqs.to_vec();
    base.extend(lineality.iter().cloned());
    let m = ineqs.len();
    if m >= 31 {
        return out;
    }
    for mask in 0u32..(1u32 << m) {
        let mut rows = base.clone();
        rows.extend((0..m).filter(|i| mask & (1 << i) != 0).map(|i| ineqs[i].clone()));
        let ns = null_space(&rows, n, NULL_TOL);
        if ns.len() != 1 {
            continue;
        }
        for s in [1.0, -1.0] {
            let u: Vec<f64> = ns[0].iter().map(|c| s * c).collect();
            if ineqs.iter().all(|r| dot(r, &u) <= tol) {
                push_unique(&mut out, u);
            }
        }
    }
    out
}

/// Candidate critical directions: `d = 0`, the user list, random unit
/// vectors and (for small `n`) the extreme rays of the linearized critical
/// cone, all normalized and filtered through the critical-direction test.
pub fn enumerate_directions(
    problem: &ProblemInstance,
    x: &[f64],
    cfg: &DirectionConfig,
) -> Result<Vec<CriticalDirection>, ConeError> {
    let ctx = PointContext::new(problem, x)?;
    enumerate_at(problem, &ctx, cfg)
}

pub fn enumerate_at(
    problem: &ProblemInstance,
    ctx: &PointContext,
    cfg: &DirectionConfig,
) -> Result<Vec<CriticalDirection>, ConeError> {
    let n = ctx.n();
    let mut cands = vec![vec![0.0; n]];
    for u in &cfg.user {
        if u.len() != n {
            return Err(ConeError::Dimension {
                expected: n,
                got: u.len(),
            });
        }
        if let Some(v) = unit(u) {
            push_unique(&mut cands, v);
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    for _ in 0..cfg.random {
        push_unique(&mut cands, random_unit(n, &mut rng));
    }
    if cfg.rays && n <= MAX_RAY_DIM {
        let mut ineqs = ctx.grad_f.clone();
        ineqs.extend(ctx.active_rows_in_x());
        for r in critical_cone_rays(&ctx.jac_h, &ineqs, n, ctx.tau_crit) {
            push_unique(&mut cands, r);
        }
    }
    let mut out = Vec::new();
    for d in cands {
        if let Some(c) = critical_at(problem, ctx, &d)? {
            out.push(c);
        }
    }
    Ok(out)
}
