//! Problem model and built-in scenarios.
//!
//! Every slot function is a [`SeparableFn`]: an affine part plus optional concave
//! logarithmic terms entering with a minus sign, so the function stays convex for
//! nonnegative log weights. Both built-in scenarios fit this family, and so do the
//! Lagrangian combinations the oracle builds from them.

mod datacenter;
mod synthetic;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Pareto, Poisson};
use serde::{Deserialize, Serialize};

use crate::engine::ObservationBatch;
use crate::error::{check_dim, Error, Result};
use crate::geometry::{ConvexFunction, DecisionSet, Geometry};
use crate::linalg::dot;

pub use datacenter::{
    build_datacenter_problem, reac_policy_step, run_reac, service_curve, service_curve_inverse,
    DatacenterConfig, DatacenterProblem,
};
pub use synthetic::{build_synthetic_problem, SetKind, SyntheticConfig, SyntheticProblem};

/// RNG used for all slot sampling.
pub type SlotRng = ChaCha8Rng;

/// `f(μ) = offset + ⟨linear, μ⟩ − Σₖ log_weights[k]·ln(1 + log_rate·μₖ)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeparableFn {
    pub offset: f64,
    pub linear: Vec<f64>,
    /// Empty when the function is affine.
    pub log_weights: Vec<f64>,
    pub log_rate: f64,
}

impl SeparableFn {
    pub fn affine(linear: Vec<f64>, offset: f64) -> Self {
        Self { offset, linear, log_weights: Vec::new(), log_rate: 0.0 }
    }

    pub fn zero(dim: usize) -> Self {
        Self::affine(vec![0.0; dim], 0.0)
    }

    pub fn dim(&self) -> usize {
        self.linear.len()
    }

    pub fn has_log_terms(&self) -> bool {
        !self.log_weights.is_empty()
    }

    /// Log weight of coordinate `k` (zero when affine).
    pub fn log_weight(&self, k: usize) -> f64 {
        self.log_weights.get(k).copied().unwrap_or(0.0)
    }

    pub fn value(&self, mu: &[f64]) -> f64 {
        let mut v = self.offset + dot(&self.linear, mu);
        for (w, &x) in self.log_weights.iter().zip(mu) {
            v -= w * (self.log_rate * x).ln_1p();
        }
        v
    }

    /// Derivative along coordinate `k` at `x`.
    pub fn partial(&self, k: usize, x: f64) -> f64 {
        let w = self.log_weight(k);
        if w == 0.0 {
            self.linear[k]
        } else {
            self.linear[k] - w * self.log_rate / (1.0 + self.log_rate * x)
        }
    }

    pub fn gradient(&self, mu: &[f64]) -> Vec<f64> {
        (0..self.dim()).map(|k| self.partial(k, mu[k])).collect()
    }

    /// Coordinate-`k` contribution excluding the offset.
    pub fn coordinate_value(&self, k: usize, x: f64) -> f64 {
        self.linear[k] * x - self.log_weight(k) * (self.log_rate * x).ln_1p()
    }

    /// `self += s·other`.
    pub fn add_scaled(&mut self, other: &SeparableFn, s: f64) -> Result<()> {
        check_dim(self.dim(), other.dim())?;
        self.offset += s * other.offset;
        crate::linalg::axpy(s, &other.linear, &mut self.linear);
        if other.has_log_terms() {
            if !self.has_log_terms() {
                self.log_weights = vec![0.0; self.dim()];
                self.log_rate = other.log_rate;
            } else if self.log_rate != other.log_rate {
                return Err(Error::Unsupported(format!(
                    "cannot combine log terms with rates {} and {}",
                    self.log_rate, other.log_rate
                )));
            }
            crate::linalg::axpy(s, &other.log_weights, &mut self.log_weights);
        }
        Ok(())
    }
}

impl ConvexFunction for SeparableFn {
    fn value(&self, x: &[f64]) -> f64 {
        SeparableFn::value(self, x)
    }

    fn subgradient(&self, x: &[f64]) -> Vec<f64> {
        self.gradient(x)
    }
}

/// Realized (or expected) functions of one slot.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SlotDraw {
    pub slot: usize,
    pub objective: SeparableFn,
    pub inequalities: Vec<SeparableFn>,
    pub equalities: Vec<Vec<f64>>,
    /// Job arrivals of the slot, for scenarios that have them.
    pub arrivals: Option<f64>,
}

impl SlotDraw {
    pub fn inequality_values(&self, mu: &[f64]) -> Vec<f64> {
        self.inequalities.iter().map(|g| g.value(mu)).collect()
    }

    /// `⟨hⱼ, μ⟩` for every equality vector.
    pub fn equality_values(&self, mu: &[f64]) -> Vec<f64> {
        self.equalities.iter().map(|h| dot(h, mu)).collect()
    }

    /// Values and subgradients at `mu`.
    pub fn observe(&self, mu: &[f64]) -> ObservationBatch {
        ObservationBatch {
            slot: self.slot,
            objective_value: self.objective.value(mu),
            objective_grad: self.objective.gradient(mu),
            ineq_values: self.inequality_values(mu),
            ineq_grads: self.inequalities.iter().map(|g| g.gradient(mu)).collect(),
            eq_vectors: self.equalities.clone(),
        }
    }
}

/// Bounds on subgradients, values and divergence used by the diagnostic inequalities.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ProblemConstants {
    /// `sup ‖∇fᵗ‖_*`.
    pub d1: f64,
    /// `sup (Σᵢ ‖∇gᵢᵗ‖_*²)^{1/2}`.
    pub d2: f64,
    /// `sup (Σᵢ |gᵢᵗ|²)^{1/2}`.
    pub g: f64,
    /// `sup (Σⱼ ‖hⱼᵗ‖_*²)^{1/2}`.
    pub h: f64,
    /// `sup |fᵗ|`.
    pub f: f64,
    /// `sup D(x, y)` over the set, when finite.
    pub r: Option<f64>,
    pub beta: f64,
}

impl ProblemConstants {
    /// `4RH²/β + G² + 2RD₂²/β`, the additive constant of the drift-plus-penalty bound.
    pub fn dpp_constant(&self) -> Option<f64> {
        self.r.map(|r| {
            4.0 * r * self.h * self.h / self.beta + self.g * self.g + 2.0 * r * self.d2 * self.d2 / self.beta
        })
    }
}

/// A stochastic constrained online problem.
///
/// Implementations are immutable after construction; sampling draws only from the
/// caller's RNG.
pub trait Problem: Send + Sync {
    fn id(&self) -> String;
    fn decision_set(&self) -> &DecisionSet;
    fn dim(&self) -> usize {
        self.decision_set().dim()
    }
    fn num_inequalities(&self) -> usize;
    fn num_equalities(&self) -> usize;
    /// Equality targets `b`.
    fn targets(&self) -> &[f64];
    /// Realized functions of slot `slot`.
    fn sample(&self, slot: usize, rng: &mut SlotRng) -> SlotDraw;
    /// Conditional means `f̄ᵗ, ḡ, h̄` of slot `slot`, when known exactly.
    fn mean(&self, slot: usize) -> Option<SlotDraw>;
    fn constants(&self, geometry: Geometry) -> ProblemConstants;
    /// Number of slots the problem can produce, if bounded (e.g. by a price trace).
    fn horizon_limit(&self) -> Option<usize> {
        None
    }
}

/// Slot `slot` of the sample path identified by `seed`.
///
/// Every slot reads from its own ChaCha stream, so any slot can be replayed without
/// regenerating the ones before it.
pub fn draw_slot(problem: &dyn Problem, seed: u64, slot: usize) -> SlotDraw {
    let mut rng = SlotRng::seed_from_u64(seed);
    rng.set_stream(slot as u64);
    problem.sample(slot, &mut rng)
}

/// Pareto draw with the given mean; scale `mean·(shape − 1)/shape`.
pub fn pareto_sample<R: rand::Rng + ?Sized>(mean: f64, shape: f64, rng: &mut R) -> Result<f64> {
    if !(shape > 1.0) {
        return Err(Error::InvalidParameter(format!(
            "Pareto shape must exceed 1 for a finite mean, got {shape}"
        )));
    }
    if !(mean > 0.0 && mean.is_finite()) {
        return Err(Error::InvalidParameter(format!("Pareto mean must be positive, got {mean}")));
    }
    let scale = mean * (shape - 1.0) / shape;
    let dist = Pareto::new(scale, shape).map_err(|e| Error::InvalidParameter(e.to_string()))?;
    Ok(dist.sample(rng))
}

/// Poisson draw. A nonpositive mean is the degenerate distribution at zero.
pub fn poisson_sample<R: rand::Rng + ?Sized>(mean: f64, rng: &mut R) -> u64 {
    match Poisson::new(mean) {
        Ok(dist) => dist.sample(rng) as u64,
        Err(_) => 0,
    }
}
