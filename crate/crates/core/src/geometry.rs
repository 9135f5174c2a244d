//! Bregman geometries, decision sets, and the proximal mirror step
//!
//! `mirror_step` solves `min_{μ ∈ set} ⟨p, μ⟩ + α·D(μ, y)`. Two pairings have closed
//! forms (negative entropy on the simplex, Euclidean on a box); every other pairing
//! goes through [`numeric_prox_step`], which only needs the derivative of the
//! distance-generating function.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{check_dim, check_finite, Error, Result};
use crate::linalg::{dot, norm1, norm2, norm_inf};

/// Tolerance on `Σμ = 1` for simplex membership.
pub const SIMPLEX_TOL: f64 = 1e-12;
/// Residual tolerance used by [`pushback_check`].
pub const PUSHBACK_TOL: f64 = 1e-9;
/// Relative optimality-gap target of the numeric prox fallback.
pub const FALLBACK_GAP_TOL: f64 = 1e-10;
/// Outer iteration cap of the numeric prox fallback.
pub const FALLBACK_MAX_ITER: usize = 100_000;

/// Distance-generating function together with its norm pair.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Geometry {
    /// `ω(x) = ½‖x‖₂²`, `D(x, y) = ½‖x − y‖₂²`, ℓ2 / ℓ2.
    Euclidean,
    /// `ω(x) = Σ xᵢ ln xᵢ`, `D(x, y) = Σ xᵢ ln(xᵢ/yᵢ) − xᵢ + yᵢ` (the KL divergence on
    /// the simplex), ℓ1 / ℓ∞.
    NegativeEntropy,
}

impl Geometry {
    /// Strong-convexity modulus β of ω with respect to the primal norm.
    pub fn modulus(self) -> f64 {
        1.0
    }

    pub fn primal_norm(self, v: &[f64]) -> f64 {
        match self {
            Geometry::Euclidean => norm2(v),
            Geometry::NegativeEntropy => norm1(v),
        }
    }

    pub fn dual_norm(self, v: &[f64]) -> f64 {
        match self {
            Geometry::Euclidean => norm2(v),
            Geometry::NegativeEntropy => norm_inf(v),
        }
    }

    /// Derivative of the (separable) distance-generating function, up to an additive
    /// constant. Returns `-inf` at the entropy barrier.
    pub fn mirror_derivative(self, x: f64) -> f64 {
        match self {
            Geometry::Euclidean => x,
            Geometry::NegativeEntropy => x.ln(),
        }
    }

    /// Bregman divergence `D(x, y)`.
    pub fn divergence(self, x: &[f64], y: &[f64]) -> Result<f64> {
        check_dim(x.len(), y.len())?;
        match self {
            Geometry::Euclidean => {
                Ok(0.5 * x.iter().zip(y).map(|(a, b)| (a - b) * (a - b)).sum::<f64>())
            }
            Geometry::NegativeEntropy => {
                let mut total = 0.0;
                for (index, (&xi, &yi)) in x.iter().zip(y).enumerate() {
                    if !(yi > 0.0) {
                        return Err(Error::NonPositive { index, value: yi });
                    }
                    if xi < 0.0 {
                        return Err(Error::InvalidParameter(format!(
                            "negative first argument {xi} at component {index}"
                        )));
                    }
                    // 0·ln(0/q) = 0
                    if xi > 0.0 {
                        total += xi * (xi / yi).ln();
                    }
                    total += yi - xi;
                }
                Ok(total.max(0.0))
            }
        }
    }
}

/// Bregman divergence of `geom` between `x` and `y`.
pub fn bregman_divergence(geom: Geometry, x: &[f64], y: &[f64]) -> Result<f64> {
    geom.divergence(x, y)
}

/// Compact convex decision set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DecisionSet {
    Box { lower: Vec<f64>, upper: Vec<f64> },
    Simplex { dim: usize },
}

impl DecisionSet {
    pub fn new_box(lower: Vec<f64>, upper: Vec<f64>) -> Result<Self> {
        check_dim(lower.len(), upper.len())?;
        if lower.is_empty() {
            return Err(Error::InvalidParameter("box dimension must be positive".into()));
        }
        check_finite(&lower)?;
        check_finite(&upper)?;
        if let Some(i) = lower.iter().zip(&upper).position(|(l, u)| l > u) {
            return Err(Error::InvalidParameter(format!(
                "box lower bound exceeds upper bound at component {i}"
            )));
        }
        Ok(DecisionSet::Box { lower, upper })
    }

    /// `[lower, upper]^dim`.
    pub fn uniform_box(dim: usize, lower: f64, upper: f64) -> Result<Self> {
        Self::new_box(vec![lower; dim], vec![upper; dim])
    }

    pub fn simplex(dim: usize) -> Result<Self> {
        if dim == 0 {
            return Err(Error::InvalidParameter("simplex dimension must be positive".into()));
        }
        Ok(DecisionSet::Simplex { dim })
    }

    pub fn dim(&self) -> usize {
        match self {
            DecisionSet::Box { lower, .. } => lower.len(),
            DecisionSet::Simplex { dim } => *dim,
        }
    }

    pub fn is_simplex(&self) -> bool {
        matches!(self, DecisionSet::Simplex { .. })
    }

    /// Coordinate bounds of the set.
    pub fn bounds(&self, i: usize) -> (f64, f64) {
        match self {
            DecisionSet::Box { lower, upper } => (lower[i], upper[i]),
            DecisionSet::Simplex { .. } => (0.0, 1.0),
        }
    }

    pub fn contains(&self, mu: &[f64]) -> bool {
        if mu.len() != self.dim() || mu.iter().any(|x| !x.is_finite()) {
            return false;
        }
        match self {
            DecisionSet::Box { lower, upper } => mu
                .iter()
                .zip(lower.iter().zip(upper))
                .all(|(&x, (&l, &u))| x >= l - SIMPLEX_TOL && x <= u + SIMPLEX_TOL),
            DecisionSet::Simplex { .. } => {
                mu.iter().all(|&x| x >= 0.0) && (mu.iter().sum::<f64>() - 1.0).abs() <= SIMPLEX_TOL
            }
        }
    }

    /// Box midpoint, or the uniform distribution on the simplex.
    pub fn initial_point(&self) -> Vec<f64> {
        match self {
            DecisionSet::Box { lower, upper } => {
                lower.iter().zip(upper).map(|(l, u)| 0.5 * (l + u)).collect()
            }
            DecisionSet::Simplex { dim } => vec![1.0 / *dim as f64; *dim],
        }
    }

    /// Euclidean projection onto the set.
    pub fn project(&self, y: &[f64]) -> Vec<f64> {
        match self {
            DecisionSet::Box { lower, upper } => y
                .iter()
                .zip(lower.iter().zip(upper))
                .map(|(&v, (&l, &u))| v.clamp(l, u))
                .collect(),
            DecisionSet::Simplex { .. } => project_simplex(y),
        }
    }

    /// `min_{s ∈ set} ⟨c, s⟩`.
    pub fn linear_minimum(&self, c: &[f64]) -> f64 {
        match self {
            DecisionSet::Box { lower, upper } => c
                .iter()
                .zip(lower.iter().zip(upper))
                .map(|(&ci, (&l, &u))| (ci * l).min(ci * u))
                .sum(),
            DecisionSet::Simplex { .. } => c.iter().copied().fold(f64::INFINITY, f64::min),
        }
    }

    /// `max_{μ ∈ set} |μᵢ|` per coordinate.
    pub fn coordinate_magnitude(&self, i: usize) -> f64 {
        let (l, u) = self.bounds(i);
        l.abs().max(u.abs())
    }

    /// Squared Euclidean diameter `sup ‖x − y‖₂²`.
    pub fn diameter_sq(&self) -> f64 {
        match self {
            DecisionSet::Box { lower, upper } => {
                lower.iter().zip(upper).map(|(l, u)| (u - l) * (u - l)).sum()
            }
            DecisionSet::Simplex { dim } => {
                if *dim > 1 {
                    2.0
                } else {
                    0.0
                }
            }
        }
    }

    /// Uniform draw from the set (flat Dirichlet on the simplex).
    pub fn sample_uniform<R: Rng + ?Sized>(&self, rng: &mut R) -> Vec<f64> {
        match self {
            DecisionSet::Box { lower, upper } => lower
                .iter()
                .zip(upper)
                .map(|(&l, &u)| if u > l { rng.random_range(l..=u) } else { l })
                .collect(),
            DecisionSet::Simplex { dim } => {
                let e: Vec<f64> =
                    (0..*dim).map(|_| -(1.0 - rng.random::<f64>()).ln()).collect();
                let s: f64 = e.iter().sum();
                e.into_iter().map(|x| x / s).collect()
            }
        }
    }
}

/// Euclidean projection onto the probability simplex (sort-and-threshold).
pub fn project_simplex(y: &[f64]) -> Vec<f64> {
    let mut sorted = y.to_vec();
    sorted.sort_by(|a, b| b.partial_cmp(a).unwrap_or(std::cmp::Ordering::Equal));
    let mut cumsum = 0.0;
    let mut tau = 0.0;
    for (k, &v) in sorted.iter().enumerate() {
        cumsum += v;
        let candidate = (cumsum - 1.0) / (k + 1) as f64;
        if v - candidate > 0.0 {
            tau = candidate;
        }
    }
    y.iter().map(|&v| (v - tau).max(0.0)).collect()
}

/// Solves `min_{μ ∈ set} ⟨p, μ⟩ + α·D(μ, y)`.
///
/// Dispatches to [`exponentiated_gradient_step`] for negative entropy on the simplex,
/// to [`euclidean_box_step`] for the Euclidean geometry on a box, and to
/// [`numeric_prox_step`] otherwise.
pub fn mirror_step(
    geom: Geometry,
    set: &DecisionSet,
    y: &[f64],
    p: &[f64],
    alpha: f64,
) -> Result<Vec<f64>> {
    check_dim(set.dim(), y.len())?;
    check_dim(set.dim(), p.len())?;
    check_finite(p)?;
    if !(alpha > 0.0 && alpha.is_finite()) {
        return Err(Error::InvalidParameter(format!("alpha must be positive, got {alpha}")));
    }
    match (geom, set) {
        (Geometry::NegativeEntropy, DecisionSet::Simplex { .. }) => {
            let scaled: Vec<f64> = p.iter().map(|v| v / alpha).collect();
            exponentiated_gradient_step(y, &scaled)
        }
        (Geometry::Euclidean, DecisionSet::Box { .. }) => euclidean_box_step(y, p, alpha, set),
        _ => numeric_prox_step(geom, set, y, p, alpha),
    }
}

/// Closed-form entropic step on the simplex: `μᵢ ∝ m̃ᵢ·exp(−pᵢ)`.
///
/// `p` already carries the `1/α` factor. The exponent is shifted by its maximum so the
/// largest weight is `m̃ᵢ·1`.
pub fn exponentiated_gradient_step(mixed: &[f64], p: &[f64]) -> Result<Vec<f64>> {
    check_dim(mixed.len(), p.len())?;
    check_finite(p)?;
    if let Some(index) = mixed.iter().position(|&m| !(m > 0.0)) {
        return Err(Error::NonPositive { index, value: mixed[index] });
    }
    let top = p.iter().map(|v| -v).fold(f64::NEG_INFINITY, f64::max);
    let weights: Vec<f64> = mixed.iter().zip(p).map(|(m, v)| m * (-v - top).exp()).collect();
    let total: f64 = weights.iter().sum();
    Ok(weights.into_iter().map(|w| w / total).collect())
}

/// Closed-form Euclidean step on a box: `clip(y − p/α, lower, upper)`.
pub fn euclidean_box_step(y: &[f64], p: &[f64], alpha: f64, set: &DecisionSet) -> Result<Vec<f64>> {
    let DecisionSet::Box { lower, upper } = set else {
        return Err(Error::Unsupported("euclidean_box_step requires a box set".into()));
    };
    check_dim(lower.len(), y.len())?;
    check_dim(lower.len(), p.len())?;
    Ok(y.iter()
        .zip(p)
        .zip(lower.iter().zip(upper))
        .map(|((&yi, &pi), (&l, &u))| (yi - pi / alpha).clamp(l, u))
        .collect())
}

/// Generic numeric prox solve for separable geometries.
///
/// Each coordinate minimizer of `(pᵢ + ν)·x + α·Dᵢ(x, yᵢ)` over the coordinate bounds is
/// located by bisection on the monotone derivative `pᵢ + ν + α(ω'(x) − ω'(yᵢ))`. On the
/// simplex the coupling multiplier ν is itself found by bisection on `Σμᵢ(ν) = 1`.
/// Converged when the Frank-Wolfe gap is at most `FALLBACK_GAP_TOL · max(1, ‖∇φ‖∞)`.
pub fn numeric_prox_step(
    geom: Geometry,
    set: &DecisionSet,
    y: &[f64],
    p: &[f64],
    alpha: f64,
) -> Result<Vec<f64>> {
    check_dim(set.dim(), y.len())?;
    check_dim(set.dim(), p.len())?;
    check_finite(p)?;
    if geom == Geometry::NegativeEntropy {
        if let Some(index) = y.iter().position(|&v| !(v > 0.0)) {
            return Err(Error::NonPositive { index, value: y[index] });
        }
    }
    let anchors: Vec<f64> = y.iter().map(|&v| geom.mirror_derivative(v)).collect();
    let solve_all = |nu: f64| -> Vec<f64> {
        (0..y.len())
            .map(|i| {
                let (lo, hi) = set.bounds(i);
                coordinate_root(|x| p[i] + nu + alpha * (geom.mirror_derivative(x) - anchors[i]), lo, hi)
            })
            .collect()
    };

    let mut mu = match set {
        DecisionSet::Box { .. } => solve_all(0.0),
        DecisionSet::Simplex { .. } => {
            let excess = |nu: f64| solve_all(nu).iter().sum::<f64>() - 1.0;
            let (mut lo, mut hi) = (-1.0, 1.0);
            let mut iterations = 0;
            while excess(lo) < 0.0 {
                lo *= 2.0;
                iterations += 1;
                if iterations > FALLBACK_MAX_ITER || !lo.is_finite() {
                    return Err(Error::FallbackDidNotConverge { gap: f64::INFINITY });
                }
            }
            while excess(hi) > 0.0 {
                hi *= 2.0;
                iterations += 1;
                if iterations > FALLBACK_MAX_ITER || !hi.is_finite() {
                    return Err(Error::FallbackDidNotConverge { gap: f64::INFINITY });
                }
            }
            while iterations < FALLBACK_MAX_ITER {
                let mid = 0.5 * (lo + hi);
                if mid <= lo || mid >= hi {
                    break;
                }
                if excess(mid) > 0.0 {
                    lo = mid;
                } else {
                    hi = mid;
                }
                iterations += 1;
            }
            let mut mu = solve_all(hi);
            let total: f64 = mu.iter().sum();
            if total > 0.0 {
                mu.iter_mut().for_each(|v| *v /= total);
            }
            mu
        }
    };
    for (i, v) in mu.iter_mut().enumerate() {
        let (lo, hi) = set.bounds(i);
        *v = v.clamp(lo, hi);
    }

    let grad: Vec<f64> = mu
        .iter()
        .zip(p)
        .zip(&anchors)
        .map(|((&x, &pi), &a)| pi + alpha * (geom.mirror_derivative(x) - a))
        .collect();
    let gap = if grad.iter().all(|g| g.is_finite()) {
        dot(&grad, &mu) - set.linear_minimum(&grad)
    } else {
        f64::INFINITY
    };
    let scale = norm_inf(&grad).max(1.0);
    if gap.is_finite() && gap <= FALLBACK_GAP_TOL * scale {
        Ok(mu)
    } else {
        Err(Error::FallbackDidNotConverge { gap })
    }
}

/// Root of an increasing function on `[lo, hi]`, clamped to the interval. Bisects to
/// floating-point resolution.
fn coordinate_root<F: Fn(f64) -> f64>(deriv: F, lo: f64, hi: f64) -> f64 {
    if deriv(hi) <= 0.0 {
        return hi;
    }
    if deriv(lo) >= 0.0 {
        return lo;
    }
    let (mut a, mut b) = (lo, hi);
    loop {
        let mid = 0.5 * (a + b);
        if mid <= a || mid >= b {
            return mid;
        }
        if deriv(mid) > 0.0 {
            b = mid;
        } else {
            a = mid;
        }
    }
}

/// `μ̃ = (1 − θ)μ + (θ/d)·1`.
pub fn mix_toward_uniform(mu: &[f64], theta: f64) -> Result<Vec<f64>> {
    if !(0.0..1.0).contains(&theta) {
        return Err(Error::InvalidParameter(format!("theta must lie in [0, 1), got {theta}")));
    }
    let d = mu.len() as f64;
    Ok(mu.iter().map(|&m| (1.0 - theta) * m + theta / d).collect())
}

/// A convex function with a subgradient oracle.
pub trait ConvexFunction {
    fn value(&self, x: &[f64]) -> f64;
    fn subgradient(&self, x: &[f64]) -> Vec<f64>;
}

/// `x ↦ ⟨coeffs, x⟩ + offset`.
#[derive(Debug, Clone, PartialEq)]
pub struct Affine {
    pub coeffs: Vec<f64>,
    pub offset: f64,
}

impl ConvexFunction for Affine {
    fn value(&self, x: &[f64]) -> f64 {
        dot(&self.coeffs, x) + self.offset
    }

    fn subgradient(&self, _x: &[f64]) -> Vec<f64> {
        self.coeffs.clone()
    }
}

/// Outcome of a pushback-inequality evaluation.
#[derive(Debug, Clone, PartialEq)]
pub struct PushbackReport {
    pub holds: bool,
    /// `rhs − lhs`; negative means the inequality is violated.
    pub residual: f64,
    pub minimizer: Vec<f64>,
}

/// Evaluates `ℓ(x*) + αD(x*, y) ≤ ℓ(z) + αD(z, y) − αD(z, x*)`.
///
/// `ℓ` is the linearization of `f` at `y` and `x*` the mirror step that minimizes
/// `ℓ + αD(·, y)`. For affine `f`, `ℓ = f`.
pub fn pushback_check(
    geom: Geometry,
    set: &DecisionSet,
    f: &dyn ConvexFunction,
    y: &[f64],
    alpha: f64,
    z: &[f64],
) -> Result<PushbackReport> {
    check_dim(set.dim(), z.len())?;
    let grad = f.subgradient(y);
    let base = f.value(y);
    let lin = |x: &[f64]| base + dot(&grad, x) - dot(&grad, y);
    let x_star = mirror_step(geom, set, y, &grad, alpha)?;
    let lhs = lin(&x_star) + alpha * geom.divergence(&x_star, y)?;
    let rhs = lin(z) + alpha * geom.divergence(z, y)? - alpha * geom.divergence(z, &x_star)?;
    let residual = rhs - lhs;
    Ok(PushbackReport { holds: residual >= -PUSHBACK_TOL, residual, minimizer: x_star })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn close(a: &[f64], b: &[f64], tol: f64) -> bool {
        a.len() == b.len() && a.iter().zip(b).all(|(x, y)| (x - y).abs() <= tol)
    }

    #[test]
    fn divergence_examples() {
        let e = Geometry::Euclidean;
        let n = Geometry::NegativeEntropy;
        assert_eq!(e.divergence(&[1.0, 2.0], &[1.0, 2.0]).unwrap(), 0.0);
        assert_eq!(n.divergence(&[0.5, 0.5], &[0.5, 0.5]).unwrap(), 0.0);
        // 0.5 ln 2 + 0.5 ln(2/3)
        let kl = n.divergence(&[0.5, 0.5], &[0.25, 0.75]).unwrap();
        assert!((kl - 0.143_841_036_225_890_46).abs() < 1e-12, "{kl}");
        let kl = n.divergence(&[1.0, 0.0], &[0.5, 0.5]).unwrap();
        assert!((kl - std::f64::consts::LN_2).abs() < 1e-15);
    }

    #[test]
    fn divergence_errors() {
        let n = Geometry::NegativeEntropy;
        assert!(matches!(
            n.divergence(&[0.5, 0.5], &[1.0, 0.0]),
            Err(Error::NonPositive { index: 1, .. })
        ));
        assert!(matches!(
            Geometry::Euclidean.divergence(&[1.0], &[1.0, 2.0]),
            Err(Error::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn mirror_step_examples() {
        let simplex = DecisionSet::simplex(2).unwrap();
        let out = mirror_step(
            Geometry::NegativeEntropy,
            &simplex,
            &[0.5, 0.5],
            &[std::f64::consts::LN_2, 0.0],
            1.0,
        )
        .unwrap();
        assert!(close(&out, &[1.0 / 3.0, 2.0 / 3.0], 1e-15));

        let bx = DecisionSet::uniform_box(2, 0.0, 30.0).unwrap();
        let out = mirror_step(Geometry::Euclidean, &bx, &[5.0, 5.0], &[2.0, -2.0], 1.0).unwrap();
        assert_eq!(out, vec![3.0, 7.0]);
        let fallback =
            numeric_prox_step(Geometry::Euclidean, &bx, &[5.0, 5.0], &[2.0, -2.0], 1.0).unwrap();
        assert!(close(&fallback, &[3.0, 7.0], 1e-12));

        let y = [0.2, 0.3, 0.5];
        let out = mirror_step(Geometry::NegativeEntropy, &DecisionSet::simplex(3).unwrap(), &y, &[0.0; 3], 2.0)
            .unwrap();
        assert!(close(&out, &y, 1e-15));
    }

    #[test]
    fn simplex_step_matches_grid_search() {
        // Grid over (x, 1 − x) at resolution 1e-4 for ⟨(ln 2, 0), μ⟩ + KL(μ‖(½, ½)).
        let obj = |x: f64| {
            let mu = [x, 1.0 - x];
            std::f64::consts::LN_2 * x
                + Geometry::NegativeEntropy.divergence(&mu, &[0.5, 0.5]).unwrap()
        };
        let best = (0..=10_000)
            .map(|k| k as f64 * 1e-4)
            .min_by(|a, b| obj(*a).partial_cmp(&obj(*b)).unwrap())
            .unwrap();
        assert!((best - 1.0 / 3.0).abs() <= 1e-4);
    }

    #[test]
    fn exponentiated_gradient_examples() {
        let m = [0.2, 0.3, 0.5];
        assert!(close(&exponentiated_gradient_step(&m, &[0.0; 3]).unwrap(), &m, 1e-15));
        assert!(close(&exponentiated_gradient_step(&m, &[4.0; 3]).unwrap(), &m, 1e-15));
        let out = exponentiated_gradient_step(&[0.5, 0.5], &[std::f64::consts::LN_2, 0.0]).unwrap();
        assert!(close(&out, &[1.0 / 3.0, 2.0 / 3.0], 1e-15));
        assert!(matches!(
            exponentiated_gradient_step(&m, &[0.0, f64::NAN, 0.0]),
            Err(Error::NonFinite { index: 1 })
        ));
        // Large exponents stay finite.
        let out = exponentiated_gradient_step(&[0.5, 0.5], &[-1e4, -1e4 + 1.0]).unwrap();
        assert!(out.iter().all(|v| v.is_finite() && *v > 0.0));
    }

    #[test]
    fn shift_invariance_is_exact_for_representable_shifts() {
        let m = [0.25, 0.25, 0.5];
        let p = [0.5, 1.25, -2.0];
        let shifted: Vec<f64> = p.iter().map(|v| v + 8.0).collect();
        assert_eq!(
            exponentiated_gradient_step(&m, &p).unwrap(),
            exponentiated_gradient_step(&m, &shifted).unwrap()
        );
    }

    #[test]
    fn box_step_examples() {
        let bx = DecisionSet::uniform_box(1, 0.0, 30.0).unwrap();
        assert_eq!(euclidean_box_step(&[4.0], &[0.0], 3.0, &bx).unwrap(), vec![4.0]);
        assert_eq!(euclidean_box_step(&[0.0], &[1.0], 0.5, &bx).unwrap(), vec![0.0]);
        assert_eq!(euclidean_box_step(&[5.0], &[2.0], 1.0, &bx).unwrap(), vec![3.0]);
        let fb = numeric_prox_step(Geometry::Euclidean, &bx, &[5.0], &[2.0], 1.0).unwrap();
        assert!((fb[0] - 3.0).abs() < 1e-12);
        assert!(euclidean_box_step(&[5.0], &[2.0], 1.0, &DecisionSet::simplex(1).unwrap()).is_err());
    }

    #[test]
    fn mixing_examples() {
        let mu = [0.1, 0.6, 0.3];
        assert_eq!(mix_toward_uniform(&mu, 0.0).unwrap(), mu.to_vec());
        let u = [0.25; 4];
        assert!(close(&mix_toward_uniform(&u, 0.7).unwrap(), &u, 1e-16));
        assert_eq!(mix_toward_uniform(&[1.0, 0.0], 0.5).unwrap(), vec![0.75, 0.25]);
        assert!(mix_toward_uniform(&mu, 1.0).is_err());
        assert!(mix_toward_uniform(&mu, -0.1).is_err());
    }

    #[test]
    fn pushback_at_minimizer_is_tight() {
        let set = DecisionSet::simplex(3).unwrap();
        let f = Affine { coeffs: vec![0.3, -0.2, 1.0], offset: 0.5 };
        let y = [0.2, 0.5, 0.3];
        let x_star = mirror_step(Geometry::NegativeEntropy, &set, &y, &f.coeffs, 2.0).unwrap();
        let rep = pushback_check(Geometry::NegativeEntropy, &set, &f, &y, 2.0, &x_star).unwrap();
        assert!(rep.holds);
        assert!(rep.residual.abs() < 1e-12, "{}", rep.residual);
    }

    #[test]
    fn fallback_handles_euclidean_simplex() {
        let set = DecisionSet::simplex(4).unwrap();
        let y = [0.1, 0.2, 0.3, 0.4];
        let p = [0.5, -0.1, 0.2, 0.0];
        let out = mirror_step(Geometry::Euclidean, &set, &y, &p, 1.0).unwrap();
        let expect = project_simplex(&[-0.4, 0.3, 0.1, 0.4]);
        assert!(close(&out, &expect, 1e-12), "{out:?} vs {expect:?}");
    }

    #[test]
    fn set_membership() {
        let s = DecisionSet::simplex(2).unwrap();
        assert!(s.contains(&[0.5, 0.5]));
        assert!(!s.contains(&[0.5, 0.6]));
        assert!(!s.contains(&[-0.1, 1.1]));
        assert!(!s.contains(&[1.0]));
        let b = DecisionSet::uniform_box(2, 0.0, 1.0).unwrap();
        assert!(b.contains(&[0.0, 1.0]));
        assert!(!b.contains(&[0.0, 1.1]));
        assert!(DecisionSet::new_box(vec![1.0], vec![0.0]).is_err());
        assert!(DecisionSet::new_box(vec![f64::NEG_INFINITY], vec![0.0]).is_err());
    }

    fn simplex_point(raw: Vec<f64>) -> Vec<f64> {
        let s: f64 = raw.iter().sum();
        raw.into_iter().map(|v| v / s).collect()
    }

    proptest! {
        #[test]
        fn divergence_is_nonnegative_and_zero_on_diagonal(
            raw_x in prop::collection::vec(0.01f64..1.0, 5),
            raw_y in prop::collection::vec(0.01f64..1.0, 5),
        ) {
            let x = simplex_point(raw_x);
            let y = simplex_point(raw_y);
            for g in [Geometry::Euclidean, Geometry::NegativeEntropy] {
                prop_assert!(g.divergence(&x, &y).unwrap() >= 0.0);
                prop_assert!(g.divergence(&x, &x).unwrap().abs() < 1e-15);
            }
        }

        #[test]
        fn shift_invariance(
            raw in prop::collection::vec(0.05f64..1.0, 6),
            p in prop::collection::vec(-5.0f64..5.0, 6),
            c in -50.0f64..50.0,
        ) {
            let m = simplex_point(raw);
            let a = exponentiated_gradient_step(&m, &p).unwrap();
            let shifted: Vec<f64> = p.iter().map(|v| v + c).collect();
            let b = exponentiated_gradient_step(&m, &shifted).unwrap();
            prop_assert!(close(&a, &b, 1e-12));
        }

        #[test]
        fn projection_lands_on_simplex(y in prop::collection::vec(-3.0f64..3.0, 1..8)) {
            let p = project_simplex(&y);
            prop_assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-12);
            prop_assert!(p.iter().all(|v| *v >= 0.0));
        }
    }
}
