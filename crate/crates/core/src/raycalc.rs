//! Second-order weak directional derivatives along rays, the mean value
//! check, and probes for the descent and tangent variation sets.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use thiserror::Error;

use crate::expr::{random_unit, ExprError, FunctionDef};
use crate::linalg::{dot, min_norm_solve, norm, norm_inf, rank};
use crate::problem::{jacobian, values};
use crate::subdiff::{estimate_subdiff2, Interval, SamplerConfig, SubdiffError};

/// Smallest step admitted into an ε sequence.
pub const EPS_MIN: f64 = 1e-5;
pub const TAU_CLUSTER_ABS: f64 = 1e-3;
pub const TAU_CLUSTER_REL: f64 = 1e-3;
pub const MEAN_VALUE_TOL: f64 = 1e-3;
pub const TANGENT_TOL: f64 = 1e-4;
pub const TANGENT_PROBE_TOL: f64 = 1e-3;
const RANK_TOL: f64 = 1e-10;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum RayError {
    #[error("bad step sequence: {0}")]
    BadSequence(String),
    #[error("Jacobian of the equality map has rank {rank} < {rows}")]
    RankDeficient { rank: usize, rows: usize },
    #[error("segment endpoints coincide")]
    DegenerateSegment,
    #[error(transparent)]
    Expr(#[from] ExprError),
    #[error(transparent)]
    Subdiff(#[from] SubdiffError),
}

/// Geometric sequence `10⁻¹ … 10⁻⁴`, four steps per decade.
pub fn default_eps_sequence() -> Vec<f64> {
    (0..=12).map(|k| 10f64.powf(-1.0 - k as f64 / 4.0)).collect()
}

/// Cluster values of the second-order difference quotients of a map.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ClusterSet {
    pub map_dim: usize,
    /// Detected cluster values. Empty when the quotients do not settle.
    pub points: Vec<Vec<f64>>,
    /// Steps actually used, after the noise floor.
    pub eps_sequence: Vec<f64>,
    pub quotients: Vec<Vec<f64>>,
    pub converged: bool,
}

impl ClusterSet {
    /// The zero map has the single cluster value `0 ∈ ℝ⁰`.
    pub fn empty_map() -> Self {
        ClusterSet {
            map_dim: 0,
            points: vec![Vec::new()],
            eps_sequence: Vec::new(),
            quotients: Vec::new(),
            converged: true,
        }
    }

    pub fn noise_dominated(&self) -> bool {
        self.points.is_empty()
    }
}

fn close(a: &[f64], b: &[f64]) -> bool {
    a.iter()
        .zip(b)
        .all(|(x, y)| (x - y).abs() <= TAU_CLUSTER_ABS + TAU_CLUSTER_REL * x.abs().max(y.abs()))
}

fn check_sequence(eps: &[f64]) -> Result<(), RayError> {
    if eps.is_empty() {
        return Err(RayError::BadSequence("empty".into()));
    }
    if let Some(e) = eps.iter().find(|e| !(**e >= EPS_MIN) || !e.is_finite()) {
        return Err(RayError::BadSequence(format!("step {e} below {EPS_MIN}")));
    }
    if eps.windows(2).any(|w| w[1] >= w[0]) {
        return Err(RayError::BadSequence("steps must strictly decrease".into()));
    }
    Ok(())
}

/// First-order Richardson extrapolation of consecutive pairs, removing the
/// `O(ε)` term of a quotient sequence.
fn richardson(eps: &[f64], qs: &[Vec<f64>]) -> Vec<Vec<f64>> {
    (0..qs.len().saturating_sub(1))
        .map(|k| {
            let (e0, e1) = (eps[k], eps[k + 1]);
            qs[k]
                .iter()
                .zip(&qs[k + 1])
                .map(|(a, b)| (e0 * b - e1 * a) / (e0 - e1))
                .collect()
        })
        .collect()
}

/// Groups the tail of `seq` into clusters; `None` when the tail does not
/// settle into at most two clusters of repeated values.
fn tail_clusters(seq: &[Vec<f64>]) -> Option<Vec<Vec<f64>>> {
    let take = (seq.len() / 2).max(3).min(seq.len());
    let tail = &seq[seq.len() - take..];
    let mut clusters: Vec<(Vec<f64>, usize)> = Vec::new();
    for v in tail {
        match clusters.iter_mut().find(|(rep, _)| close(rep, v)) {
            // Keep the most refined member as representative.
            Some(c) => *c = (v.clone(), c.1 + 1),
            None => clusters.push((v.clone(), 1)),
        }
    }
    let settled = clusters.len() == 1 || (clusters.len() == 2 && clusters.iter().all(|c| c.1 >= 2));
    settled.then(|| clusters.into_iter().map(|c| c.0).collect())
}

/// `H″(x̂; d)`: cluster values of `2[H(x̂+εd) − H(x̂) − εJd]/ε²`.
pub fn weak_dir2(
    comps: &[FunctionDef],
    base: &[f64],
    d: &[f64],
    eps_seq: &[f64],
) -> Result<ClusterSet, RayError> {
    check_sequence(eps_seq)?;
    if comps.is_empty() {
        return Ok(ClusterSet::empty_map());
    }
    let h0 = values(comps, base)?;
    let jd: Vec<f64> = jacobian(comps, base)?.iter().map(|g| dot(g, d)).collect();
    let floor = 1e-8 * (1.0 + norm_inf(&h0));
    let mut used = Vec::new();
    let mut quotients = Vec::new();
    for &e in eps_seq {
        if e * e < floor {
            break;
        }
        let x: Vec<f64> = base.iter().zip(d).map(|(b, di)| b + e * di).collect();
        let h = values(comps, &x)?;
        let q = h
            .iter()
            .zip(&h0)
            .zip(&jd)
            .map(|((hv, h0v), jv)| 2.0 * (hv - h0v - e * jv) / (e * e))
            .collect();
        used.push(e);
        quotients.push(q);
    }
    if used.len() < 3 {
        return Err(RayError::BadSequence(format!(
            "only {} steps above the noise floor",
            used.len()
        )));
    }
    let extrapolated = richardson(&used, &quotients);
    let clusters = tail_clusters(&extrapolated);
    Ok(ClusterSet {
        map_dim: comps.len(),
        converged: clusters.as_ref().is_some_and(|c| c.len() == 1),
        points: clusters.unwrap_or_default(),
        eps_sequence: used,
        quotients,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MeanValueReport {
    pub residual: f64,
    pub bracket: Interval,
    pub pass: bool,
    /// Segment points where the estimator was evaluated.
    pub points_used: usize,
}

/// Parameters `t` on `(0, 1)` where some switching value of `f` changes sign
/// along the segment, located by bisection.
fn segment_crossings(f: &FunctionDef, a: &[f64], b: &[f64], scan: usize) -> Vec<f64> {
    let at = |t: f64| -> Vec<f64> { a.iter().zip(b).map(|(p, q)| p + t * (q - p)).collect() };
    let sv = |t: f64| f.expr.switching_values(&at(t));
    let mut out = Vec::new();
    let mut prev_t = 0.0;
    let mut prev = sv(0.0);
    for j in 1..=scan {
        let t = j as f64 / scan as f64;
        let cur = sv(t);
        for (k, (p, c)) in prev.iter().zip(&cur).enumerate() {
            if p.signum() * c.signum() < 0.0 {
                let (mut lo, mut hi) = (prev_t, t);
                for _ in 0..60 {
                    let mid = 0.5 * (lo + hi);
                    if sv(mid)[k].signum() == p.signum() {
                        lo = mid;
                    } else {
                        hi = mid;
                    }
                }
                out.push(0.5 * (lo + hi));
            }
        }
        prev_t = t;
        prev = cur;
    }
    out
}

/// Compares `f(b) − f(a) − ⟨∇f(a), b − a⟩` with the envelope
/// `½·[min, max]` of `⟨L, b − a⟩` over `L ∈ ∂²f(ξ)(b − a)`, `ξ ∈ (a, b)`.
pub fn mean_value_check(
    f: &FunctionDef,
    a: &[f64],
    b: &[f64],
    segment_samples: usize,
    cfg: &SamplerConfig,
) -> Result<MeanValueReport, RayError> {
    let v: Vec<f64> = b.iter().zip(a).map(|(p, q)| p - q).collect();
    if norm(&v) == 0.0 {
        return Err(RayError::DegenerateSegment);
    }
    let residual = f.evaluate(b)? - f.evaluate(a)? - dot(&f.gradient(a)?, &v);

    let samples = segment_samples.max(1);
    let mut ts: Vec<f64> = (0..samples).map(|i| (i as f64 + 0.5) / samples as f64).collect();
    ts.extend([1e-9, 1e-6, 1.0 - 1e-6, 1.0 - 1e-9]);
    for c in segment_crossings(f, a, b, 4 * samples) {
        for off in [-1e-7, 0.0, 1e-7] {
            let t = c + off;
            if t > 0.0 && t < 1.0 {
                ts.push(t);
            }
        }
    }

    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    let mut used = 0;
    for t in ts {
        let xi: Vec<f64> = a.iter().zip(&v).map(|(p, q)| p + t * q).collect();
        let est = match estimate_subdiff2(f, &xi, &v, cfg) {
            Ok(e) => e,
            Err(SubdiffError::AllSamplesDiscarded) => continue,
            Err(e) => return Err(e.into()),
        };
        let s = est.support_interval(&v)?;
        lo = lo.min(0.5 * s.lo);
        hi = hi.max(0.5 * s.hi);
        used += 1;
    }
    if used == 0 {
        return Err(SubdiffError::AllSamplesDiscarded.into());
    }
    let bracket = Interval::new(lo, hi);
    Ok(MeanValueReport {
        residual,
        bracket,
        pass: bracket.contains(residual, MEAN_VALUE_TOL),
        points_used: used,
    })
}

/// Sampling grid for [`descent_variation_probe`].
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DescentGrid {
    pub eps_bars: Vec<f64>,
    /// Step sizes tried per `ε̄`, geometric from `ε̄` down by `eps_span`.
    pub eps_per_bar: usize,
    pub eps_span: f64,
    /// Random perturbations `w` with `‖w‖ < ε̄`, besides `w = 0`.
    pub perturbations: usize,
    pub seed: u64,
}

impl Default for DescentGrid {
    fn default() -> Self {
        DescentGrid {
            eps_bars: vec![1e-1, 3e-2, 1e-2, 3e-3, 1e-3, 1e-4],
            eps_per_bar: 12,
            eps_span: 1e-2,
            perturbations: 16,
            seed: 7,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DescentProbe {
    /// Some `ε̄` passed every probed `(ε, w)`. A `false` is inconclusive.
    pub holds: bool,
    pub eps_bar: Option<f64>,
    pub evaluations: usize,
}

/// Sampled test of `w̄ ∈ W²_δ(f; x̂, d)`: looks for `ε̄` with
/// `f(x̂ + εd + ε²(w̄ + w)) < f(x̂)` at every probed `ε < ε̄`, `‖w‖ < ε̄`.
pub fn descent_variation_probe(
    f: &FunctionDef,
    base: &[f64],
    d: &[f64],
    w_bar: &[f64],
    grid: &DescentGrid,
) -> Result<DescentProbe, RayError> {
    let f0 = f.evaluate(base)?;
    let n = base.len();
    let mut rng = ChaCha8Rng::seed_from_u64(grid.seed);
    let dirs: Vec<Vec<f64>> = (0..grid.perturbations)
        .map(|_| random_unit(n, &mut rng))
        .collect();
    let mut evaluations = 0;
    let steps = grid.eps_per_bar.max(1);
    for &bar in &grid.eps_bars {
        let mut ok = true;
        'eps: for k in 0..steps {
            let frac = grid.eps_span.powf((k as f64 + 0.5) / steps as f64);
            let e = bar * frac;
            let ws = std::iter::once(vec![0.0; n]).chain(dirs.iter().enumerate().map(|(j, u)| {
                // Radii spread over (0, ε̄).
                let r = bar * (j as f64 + 1.0) / (dirs.len() as f64 + 1.0);
                u.iter().map(|c| r * c).collect()
            }));
            for w in ws {
                let x: Vec<f64> = (0..n)
                    .map(|i| base[i] + e * d[i] + e * e * (w_bar[i] + w[i]))
                    .collect();
                evaluations += 1;
                if f.evaluate(&x)? >= f0 {
                    ok = false;
                    break 'eps;
                }
            }
        }
        if ok {
            return Ok(DescentProbe {
                holds: true,
                eps_bar: Some(bar),
                evaluations,
            });
        }
    }
    Ok(DescentProbe {
        holds: false,
        eps_bar: None,
        evaluations,
    })
}

/// `⟨∇f(x̂), w⟩ + ½·s_hi < 0`, with `s_hi` the upper end of the support
/// interval of `∂²f(x̂)(d)` along `d`.
pub fn wf_membership(f: &FunctionDef, base: &[f64], w: &[f64], s_hi: f64) -> Result<bool, ExprError> {
    Ok(dot(&f.gradient(base)?, w) + 0.5 * s_hi < 0.0)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TangentCheck {
    pub lemma_verdict: bool,
    pub probe_verdict: bool,
    /// `‖J_H(x̂)d‖`.
    pub jd_norm: f64,
    /// `min_q ‖J_H(x̂)w̄ + ½q‖` over the cluster values, `None` if there are none.
    pub lemma_residual: Option<f64>,
    /// Extrapolated limit of `dist(x̂ + εd + ε²w̄, {H = 0})/ε²`.
    pub probe_quotient: f64,
}

/// Damped Gauss–Newton projection of `y` onto `{H = 0}`; returns the
/// distance moved.
fn project_distance(comps: &[FunctionDef], y: &[f64]) -> Result<f64, ExprError> {
    let n = y.len();
    let mut z = y.to_vec();
    let mut hz = values(comps, &z)?;
    for _ in 0..30 {
        let r = norm(&hz);
        if r <= 1e-15 {
            break;
        }
        let j = jacobian(comps, &z)?;
        let Some(step) = min_norm_solve(&j, n, &hz) else {
            break;
        };
        let mut t = 1.0;
        let mut improved = false;
        for _ in 0..30 {
            let cand: Vec<f64> = z.iter().zip(&step).map(|(a, s)| a - t * s).collect();
            let hc = values(comps, &cand)?;
            if norm(&hc) < r {
                z = cand;
                hz = hc;
                improved = true;
                break;
            }
            t *= 0.5;
        }
        if !improved {
            break;
        }
    }
    Ok(y.iter().zip(&z).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt())
}

/// Lemma-based and distance-based tests of `w̄ ∈ W²_τ({H = 0}; x̂, d)`.
pub fn tangent_variation_check(
    comps: &[FunctionDef],
    base: &[f64],
    d: &[f64],
    w_bar: &[f64],
    eps_seq: &[f64],
) -> Result<TangentCheck, RayError> {
    let n = base.len();
    let j = jacobian(comps, base)?;
    let r = rank(&j, n, RANK_TOL);
    if r < comps.len() {
        return Err(RayError::RankDeficient {
            rank: r,
            rows: comps.len(),
        });
    }
    let jd: Vec<f64> = j.iter().map(|g| dot(g, d)).collect();
    let jw: Vec<f64> = j.iter().map(|g| dot(g, w_bar)).collect();
    let clusters = weak_dir2(comps, base, d, eps_seq)?;
    let lemma_residual = clusters
        .points
        .iter()
        .map(|q| {
            let v: Vec<f64> = jw.iter().zip(q).map(|(a, b)| a + 0.5 * b).collect();
            norm(&v)
        })
        .reduce(f64::min);
    let jd_norm = norm(&jd);
    let lemma_verdict = jd_norm <= TANGENT_TOL && lemma_residual.is_some_and(|r| r <= TANGENT_TOL);

    let mut used = Vec::new();
    let mut qs = Vec::new();
    for &e in eps_seq {
        let y: Vec<f64> = (0..n).map(|i| base[i] + e * d[i] + e * e * w_bar[i]).collect();
        used.push(e);
        qs.push(vec![project_distance(comps, &y)? / (e * e)]);
    }
    let ext = richardson(&used, &qs);
    let tail = &ext[ext.len().saturating_sub(3)..];
    let probe_quotient = tail
        .iter()
        .map(|v| v[0].max(0.0))
        .fold(f64::INFINITY, f64::min)
        .min(qs.last().map_or(f64::INFINITY, |q| q[0]));
    Ok(TangentCheck {
        lemma_verdict,
        probe_verdict: probe_quotient <= TANGENT_PROBE_TOL,
        jd_norm,
        lemma_residual,
        probe_quotient,
    })
}
