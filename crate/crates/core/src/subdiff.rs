//! Second-order subdifferential `∂²f(x̂)(d) = ∂⟨f′(·), d⟩(x̂)`.
//!
//! In finite dimensions the Clarke subdifferential of `x ↦ ⟨∇f(x), d⟩` is the
//! convex hull of limits of its gradients `∇²f(x)d` taken at
//! differentiability points `x → x̂`. [`estimate_subdiff2`] realizes that as a
//! point cloud of Hessian-vector products sampled in shrinking balls; the
//! cloud is read as its convex hull, an inner approximation of the true set.
//! All queries are support-function queries ([`SubdiffEstimate::support_interval`]).
//!
//! [`SeparableOracle`] gives the exact set for functions `Σᵢ φᵢ(xᵢ)` whose
//! coordinate pieces are smooth or `c·t·|t|`.

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use thiserror::Error;

use crate::expr::{random_unit, Expr, ExprError, FunctionDef, DEFAULT_THETA_KINK};
use crate::linalg::{dot, norm};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SubdiffError {
    #[error("every sample near the base point lay on a kink; perturb the point or use an oracle")]
    AllSamplesDiscarded,
    #[error("support query on an empty estimate")]
    EmptyEstimate,
    #[error("function is not separable into supported coordinate pieces: {0}")]
    NotSeparable(String),
    #[error("sampler needs at least one sample and one radius")]
    BadConfig,
    #[error(transparent)]
    Expr(#[from] ExprError),
}

/// Closed interval `[lo, hi]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Interval {
    pub lo: f64,
    pub hi: f64,
}

impl Interval {
    pub fn new(lo: f64, hi: f64) -> Self {
        debug_assert!(lo <= hi, "interval [{lo}, {hi}]");
        Interval { lo, hi }
    }

    pub fn point(v: f64) -> Self {
        Interval { lo: v, hi: v }
    }

    pub fn width(&self) -> f64 {
        self.hi - self.lo
    }

    pub fn contains(&self, v: f64, tol: f64) -> bool {
        v >= self.lo - tol && v <= self.hi + tol
    }

    /// `self ⊂ other` up to `tol`.
    pub fn within(&self, other: &Interval, tol: f64) -> bool {
        self.lo >= other.lo - tol && self.hi <= other.hi + tol
    }

    pub fn minkowski(&self, other: &Interval) -> Interval {
        Interval::new(self.lo + other.lo, self.hi + other.hi)
    }

    /// `{s·v : v ∈ self}`.
    pub fn scale(&self, s: f64) -> Interval {
        let (a, b) = (s * self.lo, s * self.hi);
        Interval::new(a.min(b), a.max(b))
    }

    pub fn hausdorff(&self, other: &Interval) -> f64 {
        (self.lo - other.lo).abs().max((self.hi - other.hi).abs())
    }

    pub fn inflate(&self, delta: f64) -> Interval {
        Interval::new(self.lo - delta, self.hi + delta)
    }
}

/// Sampler settings for [`estimate_subdiff2`].
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SamplerConfig {
    /// Samples per radius.
    pub samples: usize,
    /// Strictly decreasing ball radii.
    pub radii: Vec<f64>,
    pub seed: u64,
    pub theta_kink: f64,
}

impl Default for SamplerConfig {
    fn default() -> Self {
        SamplerConfig {
            samples: 200,
            radii: vec![1e-2, 1e-3, 1e-4],
            seed: 0x5eed,
            theta_kink: DEFAULT_THETA_KINK,
        }
    }
}

/// Inner approximation of `∂²f(x̂)(d)` as a finite point cloud.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SubdiffEstimate {
    pub base: Vec<f64>,
    pub direction: Vec<f64>,
    /// Riesz vectors of the sampled elements `L`.
    pub points: Vec<Vec<f64>>,
    pub radius_schedule: Vec<f64>,
    /// Samples dropped for lying within the kink tolerance.
    pub discarded: usize,
    /// `l·‖d‖`, with `l` the largest Hessian operator norm seen.
    pub lip_bound: f64,
    /// The base point sits on a smooth piece, so the set is the exact
    /// singleton `{∇²f(x̂)d}` and no sampling was needed.
    pub smooth_base: bool,
}

fn hessian_norm(f: &FunctionDef, x: &[f64]) -> Result<f64, ExprError> {
    let n = f.arity;
    let mut cols = Vec::with_capacity(n);
    for i in 0..n {
        let mut e = vec![0.0; n];
        e[i] = 1.0;
        // Evaluated only at points already known to be off-kink.
        cols.push(f.hessian_vec_with(x, &e, 0.0)?);
    }
    let m = DMatrix::from_fn(n, n, |i, j| cols[j][i]);
    Ok(m.singular_values().iter().cloned().fold(0.0, f64::max))
}

/// Uniform point in the ball `B(center, r)`.
fn ball_point<R: Rng>(center: &[f64], r: f64, rng: &mut R) -> Vec<f64> {
    let n = center.len();
    let dir = random_unit(n, rng);
    let rho = r * rng.random::<f64>().powf(1.0 / n as f64);
    center.iter().zip(&dir).map(|(c, u)| c + rho * u).collect()
}

pub fn estimate_subdiff2(
    f: &FunctionDef,
    base: &[f64],
    d: &[f64],
    cfg: &SamplerConfig,
) -> Result<SubdiffEstimate, SubdiffError> {
    if cfg.samples == 0 || cfg.radii.is_empty() {
        return Err(SubdiffError::BadConfig);
    }
    f.evaluate(base)?;
    if d.len() != f.arity || d.iter().any(|v| !v.is_finite()) {
        return Err(ExprError::ArityMismatch {
            name: f.name.clone(),
            expected: f.arity,
            got: d.len(),
        }
        .into());
    }
    let dnorm = norm(d);

    if f.kink_distance(base) >= cfg.theta_kink {
        let v = f.hessian_vec_with(base, d, cfg.theta_kink)?;
        let lip = hessian_norm(f, base)?;
        return Ok(SubdiffEstimate {
            base: base.to_vec(),
            direction: d.to_vec(),
            points: vec![v],
            radius_schedule: Vec::new(),
            discarded: 0,
            lip_bound: lip * dnorm,
            smooth_base: true,
        });
    }

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut points = Vec::with_capacity(cfg.samples * cfg.radii.len());
    let mut discarded = 0usize;
    let mut lip = 0.0f64;
    for &r in &cfg.radii {
        for _ in 0..cfg.samples {
            let x = ball_point(base, r, &mut rng);
            if f.kink_distance(&x) < cfg.theta_kink {
                discarded += 1;
                continue;
            }
            points.push(f.hessian_vec_with(&x, d, cfg.theta_kink)?);
            lip = lip.max(hessian_norm(f, &x)?);
        }
    }
    if points.is_empty() {
        return Err(SubdiffError::AllSamplesDiscarded);
    }
    Ok(SubdiffEstimate {
        base: base.to_vec(),
        direction: d.to_vec(),
        points,
        radius_schedule: cfg.radii.clone(),
        discarded,
        lip_bound: lip * dnorm,
        smooth_base: false,
    })
}

impl SubdiffEstimate {
    /// `[min, max]` of `⟨v, h⟩` over the stored points.
    pub fn support_interval(&self, h: &[f64]) -> Result<Interval, SubdiffError> {
        if self.points.is_empty() {
            return Err(SubdiffError::EmptyEstimate);
        }
        let (lo, hi) = self
            .points
            .iter()
            .map(|v| dot(v, h))
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), s| {
                (lo.min(s), hi.max(s))
            });
        Ok(Interval::new(lo, hi))
    }

    /// Largest pairwise distance between stored points.
    pub fn diameter(&self) -> f64 {
        let mut best = 0.0f64;
        for (i, a) in self.points.iter().enumerate() {
            for b in &self.points[i + 1..] {
                let d: Vec<f64> = a.iter().zip(b).map(|(p, q)| p - q).collect();
                best = best.max(norm(&d));
            }
        }
        best
    }
}

/// Coordinate piece `φᵢ(t) = c·t·|t| + smooth(t)`.
#[derive(Debug, Clone, PartialEq)]
pub struct CoordinatePiece {
    /// Coefficient `c` of `t·|t|`.
    pub signed_square: f64,
    /// Kink-free remainder, written over the full variable vector but
    /// depending on this coordinate only.
    pub smooth: Option<FunctionDef>,
}

/// Exact `∂²f(x̂)(d)` for separable functions.
#[derive(Debug, Clone, PartialEq)]
pub struct SeparableOracle {
    pub arity: usize,
    pub pieces: Vec<CoordinatePiece>,
}

fn flatten_terms(e: &Expr, scale: f64, out: &mut Vec<(f64, Expr)>) {
    match e {
        Expr::Sum(children) => children.iter().for_each(|c| flatten_terms(c, scale, out)),
        Expr::Negate(c) => flatten_terms(c, -scale, out),
        Expr::Product(a, b) => match (a.as_ref(), b.as_ref()) {
            (Expr::Constant(c), inner) | (inner, Expr::Constant(c)) => {
                flatten_terms(inner, scale * c, out)
            }
            _ => out.push((scale, e.clone())),
        },
        _ => out.push((scale, e.clone())),
    }
}

/// Factors a product of `Constant`, `v_i`, `v_i^k`, `|v_i|` and negations
/// into `(coefficient, power of t, count of |t|)`.
fn monomial(e: &Expr, var: usize) -> Option<(f64, u32, u32)> {
    match e {
        Expr::Constant(c) => Some((*c, 0, 0)),
        Expr::Variable(i) if *i == var => Some((1.0, 1, 0)),
        Expr::IntPower(b, k) if matches!(b.as_ref(), Expr::Variable(i) if *i == var) => {
            Some((1.0, *k, 0))
        }
        Expr::Abs(b) if matches!(b.as_ref(), Expr::Variable(i) if *i == var) => Some((1.0, 0, 1)),
        Expr::Negate(c) => monomial(c, var).map(|(c, p, a)| (-c, p, a)),
        Expr::Product(a, b) => {
            let (ca, pa, aa) = monomial(a, var)?;
            let (cb, pb, ab) = monomial(b, var)?;
            Some((ca * cb, pa + pb, aa + ab))
        }
        _ => None,
    }
}

impl SeparableOracle {
    pub fn new(arity: usize, pieces: Vec<CoordinatePiece>) -> Result<Self, SubdiffError> {
        if pieces.len() != arity {
            return Err(SubdiffError::NotSeparable(format!(
                "{} pieces for arity {arity}",
                pieces.len()
            )));
        }
        Ok(SeparableOracle { arity, pieces })
    }

    /// Recognizes `f = Σᵢ (cᵢ·xᵢ|xᵢ| + smoothᵢ(xᵢ)) + const`.
    pub fn from_function(f: &FunctionDef) -> Result<Self, SubdiffError> {
        let n = f.arity;
        let mut terms = Vec::new();
        flatten_terms(&f.expr, 1.0, &mut terms);
        let mut signed = vec![0.0; n];
        let mut smooth: Vec<Vec<Expr>> = vec![Vec::new(); n];
        for (scale, term) in terms {
            let vars = term.variables();
            match vars.len() {
                0 => continue,
                1 => {}
                _ => {
                    return Err(SubdiffError::NotSeparable(format!(
                        "term `{term}` couples variables {vars:?}"
                    )))
                }
            }
            let i = vars[0];
            if !term.has_kinks() {
                smooth[i].push(Expr::Constant(scale) * term);
                continue;
            }
            match monomial(&term, i) {
                Some((c, 1, 1)) => signed[i] += scale * c,
                _ => {
                    return Err(SubdiffError::NotSeparable(format!(
                        "unsupported nonsmooth term `{term}`"
                    )))
                }
            }
        }
        let pieces = signed
            .into_iter()
            .zip(smooth)
            .enumerate()
            .map(|(i, (c, s))| {
                let smooth = if s.is_empty() {
                    None
                } else {
                    Some(FunctionDef::new(format!("{}_smooth{i}", f.name), n, Expr::Sum(s))?)
                };
                Ok(CoordinatePiece {
                    signed_square: c,
                    smooth,
                })
            })
            .collect::<Result<Vec<_>, ExprError>>()?;
        Ok(SeparableOracle { arity: n, pieces })
    }

    /// Exact intervals `[aᵢ, bᵢ]` with `∂²f(x̂)(d) = {(c₁d₁, …, cₙdₙ) : cᵢ ∈ [aᵢ, bᵢ]}`.
    pub fn coefficient_intervals(&self, base: &[f64]) -> Result<Vec<Interval>, SubdiffError> {
        if base.len() != self.arity {
            return Err(ExprError::ArityMismatch {
                name: "oracle".into(),
                expected: self.arity,
                got: base.len(),
            }
            .into());
        }
        self.pieces
            .iter()
            .enumerate()
            .map(|(i, piece)| {
                let smooth2 = match &piece.smooth {
                    None => 0.0,
                    Some(s) => {
                        let mut e = vec![0.0; self.arity];
                        e[i] = 1.0;
                        s.hessian_vec(base, &e)?[i]
                    }
                };
                let c2 = 2.0 * piece.signed_square;
                let t = base[i];
                let kink = if t > 0.0 {
                    Interval::point(c2)
                } else if t < 0.0 {
                    Interval::point(-c2)
                } else {
                    Interval::new(-c2.abs(), c2.abs())
                };
                Ok(Interval::new(kink.lo + smooth2, kink.hi + smooth2))
            })
            .collect()
    }

    /// Exact support interval of `∂²f(x̂)(d)` along `h`.
    pub fn support_interval(&self, base: &[f64], d: &[f64], h: &[f64]) -> Result<Interval, SubdiffError> {
        let cs = self.coefficient_intervals(base)?;
        Ok(cs
            .iter()
            .zip(d.iter().zip(h))
            .fold(Interval::point(0.0), |acc, (c, (di, hi))| {
                acc.minkowski(&c.scale(di * hi))
            }))
    }
}
