//! Expression trees for piecewise-C² functions on ℝⁿ.
//!
//! Every node carries enough information to propagate a second-order
//! forward jet: value, gradient, directional derivative along a fixed
//! direction `d`, and the Hessian-vector product `∇²f·d`. Nonsmooth nodes
//! (`Abs`, `Max`, `Min`) select a branch by the sign of their switching
//! value; exact ties use the selections `Abs'(0) = 0` and the average of
//! the two branches for `Max`/`Min`.

use std::fmt;
use std::ops::{Add, Mul, Neg, Sub};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::Serialize;
use thiserror::Error;

use crate::linalg::{axpy, dot, norm};

/// Relative tie tolerance used when filtering kink points.
pub const DEFAULT_THETA_KINK: f64 = 1e-8;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ExprError {
    #[error("function `{name}` expects {expected} arguments, got {got}")]
    ArityMismatch {
        name: String,
        expected: usize,
        got: usize,
    },
    #[error("variable v{index} out of range for arity {arity}")]
    VariableOutOfRange { index: usize, arity: usize },
    #[error("integer power exponent must be >= 1")]
    ZeroExponent,
    #[error("point lies on a kink of `{name}` (kink distance {distance:e} < {theta:e})")]
    OnKink {
        name: String,
        distance: f64,
        theta: f64,
    },
    #[error("non-finite input")]
    NonFinite,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum SmoothKind {
    Exp,
    Sin,
    Cos,
}

impl SmoothKind {
    /// Value, first and second derivative at `u`.
    fn eval3(self, u: f64) -> (f64, f64, f64) {
        match self {
            SmoothKind::Exp => {
                let e = u.exp();
                (e, e, e)
            }
            SmoothKind::Sin => (u.sin(), u.cos(), -u.sin()),
            SmoothKind::Cos => (u.cos(), -u.sin(), -u.cos()),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            SmoothKind::Exp => "exp",
            SmoothKind::Sin => "sin",
            SmoothKind::Cos => "cos",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Expr {
    Constant(f64),
    Variable(usize),
    Sum(Vec<Expr>),
    Product(Box<Expr>, Box<Expr>),
    Negate(Box<Expr>),
    IntPower(Box<Expr>, u32),
    Abs(Box<Expr>),
    Max(Box<Expr>, Box<Expr>),
    Min(Box<Expr>, Box<Expr>),
    Smooth(SmoothKind, Box<Expr>),
}

/// Second-order forward jet of a node at `x` along `d`.
#[derive(Debug, Clone)]
struct Jet {
    value: f64,
    grad: Vec<f64>,
    /// `⟨grad, d⟩`
    slope: f64,
    /// `∇²(node)·d`
    hess_d: Vec<f64>,
}

impl Jet {
    fn constant(c: f64, n: usize) -> Self {
        Jet {
            value: c,
            grad: vec![0.0; n],
            slope: 0.0,
            hess_d: vec![0.0; n],
        }
    }

    /// Chain rule through a scalar map φ with φ(u), φ'(u), φ''(u).
    fn compose(self, phi: f64, dphi: f64, ddphi: f64) -> Self {
        let Jet {
            grad,
            slope,
            hess_d,
            ..
        } = self;
        let mut new_h: Vec<f64> = hess_d.iter().map(|h| dphi * h).collect();
        axpy(ddphi * slope, &grad, &mut new_h);
        Jet {
            value: phi,
            grad: grad.iter().map(|g| dphi * g).collect(),
            slope: dphi * slope,
            hess_d: new_h,
        }
    }

    fn scale(mut self, s: f64) -> Self {
        self.value *= s;
        self.slope *= s;
        self.grad.iter_mut().for_each(|g| *g *= s);
        self.hess_d.iter_mut().for_each(|h| *h *= s);
        self
    }

    fn average(a: Jet, b: Jet) -> Jet {
        let mid = |u: &[f64], v: &[f64]| -> Vec<f64> {
            u.iter().zip(v).map(|(p, q)| 0.5 * (p + q)).collect()
        };
        Jet {
            value: 0.5 * (a.value + b.value),
            grad: mid(&a.grad, &b.grad),
            slope: 0.5 * (a.slope + b.slope),
            hess_d: mid(&a.hess_d, &b.hess_d),
        }
    }
}

impl Expr {
    pub fn var(i: usize) -> Expr {
        Expr::Variable(i)
    }

    pub fn constant(c: f64) -> Expr {
        Expr::Constant(c)
    }

    pub fn abs(self) -> Expr {
        Expr::Abs(Box::new(self))
    }

    pub fn max(self, other: Expr) -> Expr {
        Expr::Max(Box::new(self), Box::new(other))
    }

    pub fn min(self, other: Expr) -> Expr {
        Expr::Min(Box::new(self), Box::new(other))
    }

    pub fn powi(self, k: u32) -> Expr {
        Expr::IntPower(Box::new(self), k)
    }

    pub fn exp(self) -> Expr {
        Expr::Smooth(SmoothKind::Exp, Box::new(self))
    }

    pub fn sin(self) -> Expr {
        Expr::Smooth(SmoothKind::Sin, Box::new(self))
    }

    pub fn cos(self) -> Expr {
        Expr::Smooth(SmoothKind::Cos, Box::new(self))
    }

    /// Largest variable index referenced, if any.
    pub fn max_variable(&self) -> Option<usize> {
        let mut best = None;
        self.visit(&mut |e| {
            if let Expr::Variable(i) = e {
                best = Some(best.map_or(*i, |b: usize| b.max(*i)));
            }
        });
        best
    }

    /// Sorted, deduplicated variable indices referenced by the tree.
    pub fn variables(&self) -> Vec<usize> {
        let mut vars = Vec::new();
        self.visit(&mut |e| {
            if let Expr::Variable(i) = e {
                vars.push(*i);
            }
        });
        vars.sort_unstable();
        vars.dedup();
        vars
    }

    /// True if the tree contains an `Abs`, `Max` or `Min` node.
    pub fn has_kinks(&self) -> bool {
        let mut found = false;
        self.visit(&mut |e| {
            if matches!(e, Expr::Abs(_) | Expr::Max(..) | Expr::Min(..)) {
                found = true;
            }
        });
        found
    }

    /// Pre-order traversal.
    pub fn visit<F: FnMut(&Expr)>(&self, f: &mut F) {
        f(self);
        match self {
            Expr::Constant(_) | Expr::Variable(_) => {}
            Expr::Sum(children) => children.iter().for_each(|c| c.visit(f)),
            Expr::Product(a, b) | Expr::Max(a, b) | Expr::Min(a, b) => {
                a.visit(f);
                b.visit(f);
            }
            Expr::Negate(c) | Expr::IntPower(c, _) | Expr::Abs(c) | Expr::Smooth(_, c) => {
                c.visit(f)
            }
        }
    }

    fn check(&self, arity: usize) -> Result<(), ExprError> {
        let mut err = None;
        self.visit(&mut |e| match e {
            Expr::Variable(i) if *i >= arity && err.is_none() => {
                err = Some(ExprError::VariableOutOfRange { index: *i, arity })
            }
            Expr::IntPower(_, 0) if err.is_none() => err = Some(ExprError::ZeroExponent),
            _ => {}
        });
        err.map_or(Ok(()), Err)
    }

    pub fn eval(&self, x: &[f64]) -> f64 {
        match self {
            Expr::Constant(c) => *c,
            Expr::Variable(i) => x[*i],
            Expr::Sum(children) => children.iter().map(|c| c.eval(x)).sum(),
            Expr::Product(a, b) => a.eval(x) * b.eval(x),
            Expr::Negate(c) => -c.eval(x),
            Expr::IntPower(c, k) => c.eval(x).powi(*k as i32),
            Expr::Abs(c) => c.eval(x).abs(),
            Expr::Max(a, b) => a.eval(x).max(b.eval(x)),
            Expr::Min(a, b) => a.eval(x).min(b.eval(x)),
            Expr::Smooth(kind, c) => kind.eval3(c.eval(x)).0,
        }
    }

    fn jet(&self, x: &[f64], d: &[f64]) -> Jet {
        let n = x.len();
        match self {
            Expr::Constant(c) => Jet::constant(*c, n),
            Expr::Variable(i) => {
                let mut j = Jet::constant(x[*i], n);
                j.grad[*i] = 1.0;
                j.slope = d[*i];
                j
            }
            Expr::Sum(children) => {
                let mut acc = Jet::constant(0.0, n);
                for c in children {
                    let j = c.jet(x, d);
                    acc.value += j.value;
                    acc.slope += j.slope;
                    axpy(1.0, &j.grad, &mut acc.grad);
                    axpy(1.0, &j.hess_d, &mut acc.hess_d);
                }
                acc
            }
            Expr::Product(a, b) => {
                let ja = a.jet(x, d);
                let jb = b.jet(x, d);
                let mut grad = vec![0.0; n];
                axpy(ja.value, &jb.grad, &mut grad);
                axpy(jb.value, &ja.grad, &mut grad);
                let mut hess_d = vec![0.0; n];
                axpy(ja.value, &jb.hess_d, &mut hess_d);
                axpy(jb.value, &ja.hess_d, &mut hess_d);
                axpy(jb.slope, &ja.grad, &mut hess_d);
                axpy(ja.slope, &jb.grad, &mut hess_d);
                Jet {
                    value: ja.value * jb.value,
                    grad,
                    slope: ja.value * jb.slope + jb.value * ja.slope,
                    hess_d,
                }
            }
            Expr::Negate(c) => c.jet(x, d).scale(-1.0),
            Expr::IntPower(c, k) => {
                let j = c.jet(x, d);
                let u = j.value;
                let k = *k as i32;
                let kf = k as f64;
                let phi = u.powi(k);
                let dphi = if k >= 1 { kf * u.powi(k - 1) } else { 0.0 };
                let ddphi = if k >= 2 {
                    kf * (kf - 1.0) * u.powi(k - 2)
                } else {
                    0.0
                };
                j.compose(phi, dphi, ddphi)
            }
            Expr::Abs(c) => {
                let j = c.jet(x, d);
                let s = if j.value > 0.0 {
                    1.0
                } else if j.value < 0.0 {
                    -1.0
                } else {
                    0.0
                };
                let v = j.value.abs();
                j.compose(v, s, 0.0)
            }
            Expr::Max(a, b) | Expr::Min(a, b) => {
                let ja = a.jet(x, d);
                let jb = b.jet(x, d);
                let want_max = matches!(self, Expr::Max(..));
                if ja.value == jb.value {
                    Jet::average(ja, jb)
                } else if (ja.value > jb.value) == want_max {
                    ja
                } else {
                    jb
                }
            }
            Expr::Smooth(kind, c) => {
                let j = c.jet(x, d);
                let (phi, dphi, ddphi) = kind.eval3(j.value);
                j.compose(phi, dphi, ddphi)
            }
        }
    }

    /// Signed switching values of every nonsmooth node, in pre-order:
    /// `u` for `Abs(u)` and `left − right` for `Max`/`Min`.
    pub fn switching_values(&self, x: &[f64]) -> Vec<f64> {
        let mut out = Vec::new();
        self.collect_switching(x, &mut out);
        out
    }

    fn collect_switching(&self, x: &[f64], out: &mut Vec<f64>) {
        match self {
            Expr::Constant(_) | Expr::Variable(_) => {}
            Expr::Sum(children) => children.iter().for_each(|c| c.collect_switching(x, out)),
            Expr::Product(a, b) => {
                a.collect_switching(x, out);
                b.collect_switching(x, out);
            }
            Expr::Max(a, b) | Expr::Min(a, b) => {
                out.push(a.eval(x) - b.eval(x));
                a.collect_switching(x, out);
                b.collect_switching(x, out);
            }
            Expr::Abs(c) => {
                out.push(c.eval(x));
                c.collect_switching(x, out);
            }
            Expr::Negate(c) | Expr::IntPower(c, _) | Expr::Smooth(_, c) => {
                c.collect_switching(x, out)
            }
        }
    }
}

impl Add for Expr {
    type Output = Expr;
    fn add(self, rhs: Expr) -> Expr {
        match self {
            Expr::Sum(mut children) => {
                children.push(rhs);
                Expr::Sum(children)
            }
            other => Expr::Sum(vec![other, rhs]),
        }
    }
}

impl Sub for Expr {
    type Output = Expr;
    fn sub(self, rhs: Expr) -> Expr {
        self + (-rhs)
    }
}

impl Mul for Expr {
    type Output = Expr;
    fn mul(self, rhs: Expr) -> Expr {
        Expr::Product(Box::new(self), Box::new(rhs))
    }
}

impl Mul<Expr> for f64 {
    type Output = Expr;
    fn mul(self, rhs: Expr) -> Expr {
        Expr::Constant(self) * rhs
    }
}

impl Neg for Expr {
    type Output = Expr;
    fn neg(self) -> Expr {
        Expr::Negate(Box::new(self))
    }
}

impl fmt::Display for Expr {
    /// Prefix s-expression form, accepted back by [`crate::sexpr::parse`].
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Expr::Constant(c) => write!(f, "{c:?}"),
            Expr::Variable(i) => write!(f, "v{i}"),
            Expr::Sum(children) => {
                write!(f, "(+")?;
                for c in children {
                    write!(f, " {c}")?;
                }
                write!(f, ")")
            }
            Expr::Product(a, b) => write!(f, "(* {a} {b})"),
            Expr::Negate(c) => write!(f, "(neg {c})"),
            Expr::IntPower(c, k) => write!(f, "(pow {c} {k})"),
            Expr::Abs(c) => write!(f, "(abs {c})"),
            Expr::Max(a, b) => write!(f, "(max {a} {b})"),
            Expr::Min(a, b) => write!(f, "(min {a} {b})"),
            Expr::Smooth(kind, c) => write!(f, "({} {c})", kind.name()),
        }
    }
}

/// A named function ℝⁿ → ℝ given by an expression tree.
#[derive(Debug, Clone, PartialEq)]
pub struct FunctionDef {
    pub name: String,
    pub arity: usize,
    pub expr: Expr,
    /// User assertion that the gradient is locally Lipschitz. Not proven;
    /// see [`gradient_continuity_probe`].
    pub declared_c11: bool,
}

impl FunctionDef {
    pub fn new(name: impl Into<String>, arity: usize, expr: Expr) -> Result<Self, ExprError> {
        expr.check(arity)?;
        Ok(FunctionDef {
            name: name.into(),
            arity,
            expr,
            declared_c11: true,
        })
    }

    fn check_point(&self, x: &[f64]) -> Result<(), ExprError> {
        if x.len() != self.arity {
            return Err(ExprError::ArityMismatch {
                name: self.name.clone(),
                expected: self.arity,
                got: x.len(),
            });
        }
        if x.iter().any(|v| !v.is_finite()) {
            return Err(ExprError::NonFinite);
        }
        Ok(())
    }

    pub fn evaluate(&self, x: &[f64]) -> Result<f64, ExprError> {
        self.check_point(x)?;
        Ok(self.expr.eval(x))
    }

    /// Chain-rule gradient with the tie selections described at module level.
    pub fn gradient(&self, x: &[f64]) -> Result<Vec<f64>, ExprError> {
        self.check_point(x)?;
        let zero = vec![0.0; self.arity];
        Ok(self.expr.jet(x, &zero).grad)
    }

    /// `∇²f(x)·d` of the active smooth branch, with the default kink tolerance.
    pub fn hessian_vec(&self, x: &[f64], d: &[f64]) -> Result<Vec<f64>, ExprError> {
        self.hessian_vec_with(x, d, DEFAULT_THETA_KINK)
    }

    pub fn hessian_vec_with(&self, x: &[f64], d: &[f64], theta: f64) -> Result<Vec<f64>, ExprError> {
        self.check_point(x)?;
        self.check_point(d)?;
        let distance = self.kink_distance(x);
        if distance < theta {
            return Err(ExprError::OnKink {
                name: self.name.clone(),
                distance,
                theta,
            });
        }
        Ok(self.expr.jet(x, d).hess_d)
    }

    /// Smallest |switching value| over all nonsmooth nodes, divided by
    /// `1 + ‖x‖`. `+∞` when the tree has no nonsmooth nodes.
    pub fn kink_distance(&self, x: &[f64]) -> f64 {
        let scale = 1.0 + norm(x);
        self.expr
            .switching_values(x)
            .into_iter()
            .map(|s| s.abs() / scale)
            .fold(f64::INFINITY, f64::min)
    }
}

/// Axis-aligned box `[lo, hi]`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BoxRegion {
    pub lo: Vec<f64>,
    pub hi: Vec<f64>,
}

impl BoxRegion {
    pub fn new(lo: Vec<f64>, hi: Vec<f64>) -> Self {
        assert_eq!(lo.len(), hi.len(), "box bounds must have equal length");
        BoxRegion { lo, hi }
    }

    pub fn cube(n: usize, half_width: f64) -> Self {
        BoxRegion::new(vec![-half_width; n], vec![half_width; n])
    }

    pub fn around(center: &[f64], half_width: f64) -> Self {
        BoxRegion::new(
            center.iter().map(|c| c - half_width).collect(),
            center.iter().map(|c| c + half_width).collect(),
        )
    }

    pub fn dim(&self) -> usize {
        self.lo.len()
    }

    pub fn sample<R: Rng>(&self, rng: &mut R) -> Vec<f64> {
        self.lo
            .iter()
            .zip(&self.hi)
            .map(|(l, h)| l + (h - l) * rng.random::<f64>())
            .collect()
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct ScaleRatio {
    pub step: f64,
    pub max_ratio: f64,
}

/// Result of [`gradient_continuity_probe`].
#[derive(Debug, Clone, Serialize)]
pub struct ContinuityReport {
    /// Largest observed `‖∇f(u) − ∇f(v)‖ / ‖u − v‖`.
    pub lipschitz_estimate: f64,
    /// Per pair-separation maxima, coarsest first.
    pub ratios: Vec<ScaleRatio>,
    pub c11_consistent: bool,
    pub pairs: usize,
    pub kink_crossings: usize,
}

const PROBE_SCALES: usize = 3;
const PROBE_GROWTH_LIMIT: f64 = 4.0;
const PROBE_LINE_POINTS: usize = 16;

/// Empirical falsification of the C^{1,1} hypothesis on a box.
///
/// Gradient difference quotients are taken over symmetric pairs at
/// separations `step`, `step/10`, `step/100`, both around uniformly drawn
/// centers and around points where some switching value changes sign.
/// Ratios that keep growing as the separation shrinks mean the gradient is
/// not Lipschitz.
pub fn gradient_continuity_probe(
    f: &FunctionDef,
    region: &BoxRegion,
    samples: usize,
    step: f64,
    seed: u64,
) -> Result<ContinuityReport, ExprError> {
    let n = f.arity;
    if region.dim() != n {
        return Err(ExprError::ArityMismatch {
            name: f.name.clone(),
            expected: n,
            got: region.dim(),
        });
    }
    let samples = samples.max(1);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let steps: Vec<f64> = (0..PROBE_SCALES).map(|k| step / 10f64.powi(k as i32)).collect();
    let mut max_ratio = vec![0.0f64; PROBE_SCALES];
    let mut pairs = 0usize;
    let mut crossings = 0usize;

    let pair_ratio = |center: &[f64], e: &[f64], maxes: &mut [f64], pairs: &mut usize| {
        for (k, h) in steps.iter().enumerate() {
            let mut u = center.to_vec();
            let mut v = center.to_vec();
            axpy(-h, e, &mut u);
            axpy(*h, e, &mut v);
            let gu = f.expr.jet(&u, &vec![0.0; n]).grad;
            let gv = f.expr.jet(&v, &vec![0.0; n]).grad;
            let diff: Vec<f64> = gu.iter().zip(&gv).map(|(a, b)| a - b).collect();
            let ratio = norm(&diff) / (2.0 * h);
            maxes[k] = maxes[k].max(ratio);
            *pairs += 1;
        }
    };

    for _ in 0..samples {
        let center = region.sample(&mut rng);
        let mut dirs: Vec<Vec<f64>> = (0..n)
            .map(|i| {
                let mut e = vec![0.0; n];
                e[i] = 1.0;
                e
            })
            .collect();
        dirs.push(random_unit(n, &mut rng));
        for e in &dirs {
            pair_ratio(&center, e, &mut max_ratio, &mut pairs);
        }

        // Locate switching-surface crossings along a random chord.
        let other = region.sample(&mut rng);
        let chord: Vec<f64> = other.iter().zip(&center).map(|(a, b)| a - b).collect();
        let chord_len = norm(&chord);
        if chord_len == 0.0 {
            continue;
        }
        let at = |t: f64| -> Vec<f64> {
            center
                .iter()
                .zip(&chord)
                .map(|(c, v)| c + t * v)
                .collect()
        };
        let mut prev_t = 0.0;
        let mut prev_s = f.expr.switching_values(&center);
        for step_idx in 1..=PROBE_LINE_POINTS {
            let t = step_idx as f64 / PROBE_LINE_POINTS as f64;
            let s = f.expr.switching_values(&at(t));
            for (idx, (a, b)) in prev_s.iter().zip(&s).enumerate() {
                if a * b < 0.0 {
                    let (mut lo, mut hi) = (prev_t, t);
                    for _ in 0..60 {
                        let mid = 0.5 * (lo + hi);
                        let sm = f.expr.switching_values(&at(mid))[idx];
                        if sm * a > 0.0 {
                            lo = mid;
                        } else {
                            hi = mid;
                        }
                    }
                    let crossing = at(0.5 * (lo + hi));
                    crossings += 1;
                    let along: Vec<f64> = chord.iter().map(|c| c / chord_len).collect();
                    pair_ratio(&crossing, &along, &mut max_ratio, &mut pairs);
                    let e = random_unit(n, &mut rng);
                    pair_ratio(&crossing, &e, &mut max_ratio, &mut pairs);
                }
            }
            prev_t = t;
            prev_s = s;
        }
    }

    let lipschitz_estimate = max_ratio.iter().cloned().fold(0.0, f64::max);
    let coarse = max_ratio[0];
    let fine = max_ratio[PROBE_SCALES - 1];
    let c11_consistent = fine <= PROBE_GROWTH_LIMIT * coarse + 1e-6;
    Ok(ContinuityReport {
        lipschitz_estimate,
        ratios: steps
            .iter()
            .zip(&max_ratio)
            .map(|(s, r)| ScaleRatio {
                step: *s,
                max_ratio: *r,
            })
            .collect(),
        c11_consistent,
        pairs,
        kink_crossings: crossings,
    })
}

/// Uniform random unit vector in ℝⁿ.
pub fn random_unit<R: Rng>(n: usize, rng: &mut R) -> Vec<f64> {
    loop {
        let v: Vec<f64> = (0..n).map(|_| rng.sample(StandardNormal)).collect();
        let len = norm(&v);
        if len > 1e-12 {
            return v.into_iter().map(|c| c / len).collect();
        }
    }
}

/// `⟨∇f(x), d⟩` using the tie-selected gradient.
pub fn directional_slope(f: &FunctionDef, x: &[f64], d: &[f64]) -> Result<f64, ExprError> {
    Ok(dot(&f.gradient(x)?, d))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn signed_half_square_plus_y2() -> FunctionDef {
        // x·|x|/2 + y²
        let e = 0.5 * (Expr::var(0) * Expr::var(0).abs()) + Expr::var(1).powi(2);
        FunctionDef::new("f", 2, e).unwrap()
    }

    #[test]
    fn evaluates_example_function() {
        let f = signed_half_square_plus_y2();
        assert_eq!(f.evaluate(&[0.0, 0.0]).unwrap(), 0.0);
        assert_eq!(f.evaluate(&[2.0, 1.0]).unwrap(), 3.0);
        let g = FunctionDef::new("g", 1, Expr::var(0).max(-Expr::var(0))).unwrap();
        assert_eq!(g.evaluate(&[-3.0]).unwrap(), 3.0);
    }

    #[test]
    fn arity_errors() {
        let f = signed_half_square_plus_y2();
        assert!(matches!(
            f.evaluate(&[1.0]),
            Err(ExprError::ArityMismatch { expected: 2, got: 1, .. })
        ));
        assert!(matches!(
            FunctionDef::new("bad", 1, Expr::var(1)),
            Err(ExprError::VariableOutOfRange { index: 1, arity: 1 })
        ));
        assert_eq!(
            FunctionDef::new("bad", 1, Expr::var(0).powi(0)),
            Err(ExprError::ZeroExponent)
        );
    }

    #[test]
    fn gradient_matches_closed_form() {
        let f = signed_half_square_plus_y2();
        assert_eq!(f.gradient(&[0.0, 0.0]).unwrap(), vec![0.0, 0.0]);
        assert_eq!(f.gradient(&[2.0, 1.0]).unwrap(), vec![2.0, 2.0]);
        let abs = FunctionDef::new("abs", 1, Expr::var(0).abs()).unwrap();
        assert_eq!(abs.gradient(&[0.0]).unwrap(), vec![0.0]);
    }

    #[test]
    fn max_tie_averages_branches() {
        let f = FunctionDef::new("m", 1, Expr::var(0).max(-Expr::var(0))).unwrap();
        assert_eq!(f.gradient(&[0.0]).unwrap(), vec![0.0]);
        let g = FunctionDef::new("m", 1, Expr::var(0).max(3.0 * Expr::var(0))).unwrap();
        assert_eq!(g.gradient(&[0.0]).unwrap(), vec![2.0]);
    }

    #[test]
    fn hessian_vec_examples() {
        let q = FunctionDef::new(
            "q",
            2,
            0.5 * (Expr::var(0).powi(2) + 2.0 * Expr::var(1).powi(2)),
        )
        .unwrap();
        assert_eq!(q.hessian_vec(&[0.3, -4.0], &[1.0, 0.0]).unwrap(), vec![1.0, 0.0]);
        let f = signed_half_square_plus_y2();
        assert_eq!(f.hessian_vec(&[0.5, 0.0], &[1.0, 0.0]).unwrap(), vec![1.0, 0.0]);
        assert_eq!(f.hessian_vec(&[-0.5, 0.0], &[1.0, 0.0]).unwrap(), vec![-1.0, 0.0]);
        assert!(matches!(
            f.hessian_vec(&[0.0, 0.0], &[1.0, 0.0]),
            Err(ExprError::OnKink { .. })
        ));
    }

    #[test]
    fn kink_distance_examples() {
        let abs = FunctionDef::new("abs", 1, Expr::var(0).abs()).unwrap();
        assert_eq!(abs.kink_distance(&[0.0]), 0.0);
        assert!((abs.kink_distance(&[0.3]) - 0.3 / 1.3).abs() < 1e-15);
        let sq = FunctionDef::new("sq", 1, Expr::var(0).powi(2)).unwrap();
        assert_eq!(sq.kink_distance(&[1.7]), f64::INFINITY);
    }

    #[test]
    fn kink_distance_vanishes_on_tie_grid() {
        let f = FunctionDef::new("m", 2, Expr::var(0).max(Expr::var(1))).unwrap();
        for i in -10..=10 {
            for j in -10..=10 {
                let x = [i as f64 * 0.1, j as f64 * 0.1];
                let kd = f.kink_distance(&x);
                assert_eq!(kd == 0.0, i == j, "at {x:?}");
            }
        }
        // Continuity along a line crossing the tie set.
        let mut prev = f.kink_distance(&[-1.0, 0.0]);
        for k in 1..=2000 {
            let t = -1.0 + k as f64 * 1e-3;
            let cur = f.kink_distance(&[t, 0.0]);
            assert!((cur - prev).abs() <= 2e-3);
            prev = cur;
        }
    }

    #[test]
    fn probe_recognises_c11_and_jumps() {
        let region = BoxRegion::cube(1, 1.0);
        let half = FunctionDef::new("h", 1, 0.5 * (Expr::var(0) * Expr::var(0).abs())).unwrap();
        let r = gradient_continuity_probe(&half, &region, 200, 1e-2, 7).unwrap();
        assert!(r.c11_consistent);
        assert!((r.lipschitz_estimate - 1.0).abs() < 1e-6, "{r:?}");

        let abs = FunctionDef::new("abs", 1, Expr::var(0).abs()).unwrap();
        let r = gradient_continuity_probe(&abs, &region, 200, 1e-2, 7).unwrap();
        assert!(!r.c11_consistent, "{r:?}");
        assert!(r.kink_crossings > 0);

        let sq = FunctionDef::new("sq", 1, Expr::var(0).powi(2)).unwrap();
        let r = gradient_continuity_probe(&sq, &region, 50, 1e-2, 7).unwrap();
        assert!(r.c11_consistent);
        assert!((r.lipschitz_estimate - 2.0).abs() < 1e-6);
    }

    #[test]
    fn display_is_prefix_form() {
        let f = signed_half_square_plus_y2();
        assert_eq!(
            f.expr.to_string(),
            "(+ (* 0.5 (* v0 (abs v0))) (pow v1 2))"
        );
    }
}
