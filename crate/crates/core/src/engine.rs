//! Primal-dual online mirror descent.
//!
//! Per slot `t` the solver
//! 1. (simplex variant) mixes the previous decision toward uniform,
//! 2. takes a mirror step on `V∇f^{t−1} + Σ Qᵢ∇gᵢ^{t−1} + Σ Hⱼhⱼ^{t−1}`,
//! 3. updates the multipliers with the slot-(t−1) observations and the new decision,
//! 4. observes slot `t` at the new decision.
//!
//! Slot 0 has no previous observation; the decision is the initial point and the
//! multipliers stay at zero.

use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::error::{check_dim, check_finite, Error, Result};
use crate::geometry::{mirror_step, mix_toward_uniform, DecisionSet, Geometry};
use crate::linalg::{dot, norm2, norm2_sq, sub};
use crate::problems::{draw_slot, Problem, SlotDraw};
use crate::telemetry::{RunHeader, RunRecord, SlotRecord};

/// Which algorithm to run.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Variant {
    /// Mirror step anchored at the previous decision, any geometry.
    General,
    /// Negative entropy on the simplex with probability mixing.
    Simplex,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AlgorithmParams {
    /// Objective weight V.
    pub v: f64,
    /// Proximal weight α.
    pub alpha: f64,
    /// Mixing weight θ (simplex variant only).
    pub theta: f64,
    /// Horizon T the schedule was derived for.
    pub horizon: usize,
    /// Drift window t0 (diagnostics only).
    pub drift_window: usize,
}

impl AlgorithmParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.v > 0.0 && self.v.is_finite()) {
            return Err(Error::InvalidParameter(format!("V must be positive, got {}", self.v)));
        }
        if !(self.alpha > 0.0 && self.alpha.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "alpha must be positive, got {}",
                self.alpha
            )));
        }
        if !(0.0..1.0).contains(&self.theta) {
            return Err(Error::InvalidParameter(format!(
                "theta must lie in [0, 1), got {}",
                self.theta
            )));
        }
        if self.horizon == 0 || self.drift_window == 0 || self.drift_window > self.horizon {
            return Err(Error::InvalidParameter(format!(
                "need 1 <= t0 <= T, got t0 = {}, T = {}",
                self.drift_window, self.horizon
            )));
        }
        Ok(())
    }
}

/// `V = √T`, `α = T`, `t0 = round(√T)`, and `θ = 1/T` for the simplex variant.
pub fn parameter_schedule(horizon: usize, variant: Variant) -> Result<AlgorithmParams> {
    if horizon < 2 {
        return Err(Error::InvalidParameter(format!("horizon must be at least 2, got {horizon}")));
    }
    let t = horizon as f64;
    Ok(AlgorithmParams {
        v: t.sqrt(),
        alpha: t,
        theta: match variant {
            Variant::General => 0.0,
            Variant::Simplex => 1.0 / t,
        },
        horizon,
        drift_window: (t.sqrt().round() as usize).clamp(1, horizon),
    })
}

/// Inequality multipliers `Q ≥ 0` and equality multipliers `H`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DualState {
    pub q: Vec<f64>,
    pub h: Vec<f64>,
}

impl DualState {
    pub fn zeros(num_ineq: usize, num_eq: usize) -> Self {
        Self { q: vec![0.0; num_ineq], h: vec![0.0; num_eq] }
    }

    pub fn q_norm(&self) -> f64 {
        norm2(&self.q)
    }

    pub fn h_norm(&self) -> f64 {
        norm2(&self.h)
    }

    /// `‖(Q, H)‖₂`.
    pub fn norm(&self) -> f64 {
        (norm2_sq(&self.q) + norm2_sq(&self.h)).sqrt()
    }

    /// `(‖Q‖₂² + ‖H‖₂²)/2`.
    pub fn lyapunov(&self) -> f64 {
        0.5 * (norm2_sq(&self.q) + norm2_sq(&self.h))
    }
}

/// Values and subgradients of one slot's functions at the decision played in that slot.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ObservationBatch {
    pub slot: usize,
    pub objective_value: f64,
    pub objective_grad: Vec<f64>,
    pub ineq_values: Vec<f64>,
    pub ineq_grads: Vec<Vec<f64>>,
    pub eq_vectors: Vec<Vec<f64>>,
}

impl ObservationBatch {
    fn validate(&self, dim: usize, num_ineq: usize, num_eq: usize) -> Result<()> {
        check_dim(dim, self.objective_grad.len())?;
        check_dim(num_ineq, self.ineq_values.len())?;
        check_dim(num_ineq, self.ineq_grads.len())?;
        check_dim(num_eq, self.eq_vectors.len())?;
        for g in self.ineq_grads.iter().chain(&self.eq_vectors) {
            check_dim(dim, g.len())?;
            check_finite(g)?;
        }
        check_finite(&self.objective_grad)?;
        check_finite(&self.ineq_values)?;
        Ok(())
    }
}

/// `V∇f + Σᵢ Qᵢ∇gᵢ + Σⱼ Hⱼhⱼ`.
pub fn assemble_dual_weighted_gradient(v: f64, duals: &DualState, obs: &ObservationBatch) -> Vec<f64> {
    let mut p: Vec<f64> = obs.objective_grad.iter().map(|g| v * g).collect();
    for (q, grad) in duals.q.iter().zip(&obs.ineq_grads) {
        crate::linalg::axpy(*q, grad, &mut p);
    }
    for (h, vec) in duals.h.iter().zip(&obs.eq_vectors) {
        crate::linalg::axpy(*h, vec, &mut p);
    }
    p
}

/// `max{Qᵢ + gᵢ(μ_prev) + ⟨∇gᵢ(μ_prev), μ_new − μ_prev⟩, 0}`.
pub fn update_inequality_multiplier(
    q: f64,
    g_val: f64,
    grad_g: &[f64],
    mu_new: &[f64],
    mu_prev: &[f64],
) -> f64 {
    let step: f64 = grad_g.iter().zip(mu_new.iter().zip(mu_prev)).map(|(g, (a, b))| g * (a - b)).sum();
    (q + g_val + step).max(0.0)
}

/// `Hⱼ + ⟨hⱼ, μ_new⟩ − bⱼ`.
pub fn update_equality_multiplier(h: f64, h_vec: &[f64], mu_new: &[f64], b: f64) -> f64 {
    h + dot(h_vec, mu_new) - b
}

/// Result of one decision.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepOutcome {
    pub slot: usize,
    /// μᵗ.
    pub decision: Vec<f64>,
    /// Point the Bregman term is anchored at (μ^{t−1}, or its mixture).
    pub anchor: Vec<f64>,
    /// `Δ(t) = (‖Q(t+1)‖² − ‖Q(t)‖²)/2 + (‖H(t+1)‖² − ‖H(t)‖²)/2`.
    pub drift: f64,
    /// ‖Q(t+1)‖₂.
    pub q_norm: f64,
    /// ‖H(t+1)‖₂.
    pub h_norm: f64,
    /// `V⟨∇f^{t−1}(μ^{t−1}), μᵗ − μ^{t−1}⟩ + αD(μᵗ, anchor)`; `None` in slot 0.
    pub prox_penalty: Option<f64>,
}

/// Online solver state.
#[derive(Debug, Clone)]
pub struct Solver {
    geometry: Geometry,
    set: DecisionSet,
    targets: Vec<f64>,
    params: AlgorithmParams,
    variant: Variant,
    slot: usize,
    mu_prev: Vec<f64>,
    duals: DualState,
    cache: Option<ObservationBatch>,
    pending: Option<Vec<f64>>,
}

impl Solver {
    pub fn new(
        geometry: Geometry,
        set: DecisionSet,
        num_ineq: usize,
        targets: Vec<f64>,
        params: AlgorithmParams,
        variant: Variant,
    ) -> Result<Self> {
        params.validate()?;
        if variant == Variant::Simplex
            && !(set.is_simplex() && geometry == Geometry::NegativeEntropy)
        {
            return Err(Error::Unsupported(
                "the simplex variant needs the negative-entropy geometry on a simplex".into(),
            ));
        }
        if geometry == Geometry::NegativeEntropy && !set.is_simplex() {
            if let DecisionSet::Box { lower, .. } = &set {
                if lower.iter().any(|l| *l <= 0.0) {
                    return Err(Error::Unsupported(
                        "negative entropy on a box needs strictly positive lower bounds".into(),
                    ));
                }
            }
        }
        let num_eq = targets.len();
        check_finite(&targets)?;
        Ok(Self {
            mu_prev: set.initial_point(),
            geometry,
            set,
            targets,
            params,
            variant,
            slot: 0,
            duals: DualState::zeros(num_ineq, num_eq),
            cache: None,
            pending: None,
        })
    }

    pub fn slot(&self) -> usize {
        self.slot
    }

    pub fn duals(&self) -> &DualState {
        &self.duals
    }

    pub fn params(&self) -> &AlgorithmParams {
        &self.params
    }

    pub fn geometry(&self) -> Geometry {
        self.geometry
    }

    pub fn decision_set(&self) -> &DecisionSet {
        &self.set
    }

    /// μ^{t−1}: the most recent observed decision (initial point before slot 0).
    pub fn previous_decision(&self) -> &[f64] {
        &self.mu_prev
    }

    /// The linear coefficient of the current proximal subproblem.
    pub fn dual_weighted_gradient(&self) -> Result<Vec<f64>> {
        let obs = self.cache.as_ref().ok_or_else(|| {
            Error::Protocol("no previous observation (slot 0 uses the initial point)".into())
        })?;
        Ok(assemble_dual_weighted_gradient(self.params.v, &self.duals, obs))
    }

    /// Chooses μᵗ and updates the multipliers. Must be followed by [`Solver::observe`].
    pub fn decide(&mut self) -> Result<StepOutcome> {
        if self.pending.is_some() {
            return Err(Error::Protocol(format!("slot {} already decided", self.slot)));
        }
        let before = self.duals.lyapunov();
        let outcome = match &self.cache {
            None => StepOutcome {
                slot: self.slot,
                decision: self.mu_prev.clone(),
                anchor: self.mu_prev.clone(),
                drift: 0.0,
                q_norm: self.duals.q_norm(),
                h_norm: self.duals.h_norm(),
                prox_penalty: None,
            },
            Some(obs) => {
                let anchor = match self.variant {
                    Variant::General => self.mu_prev.clone(),
                    Variant::Simplex => mix_toward_uniform(&self.mu_prev, self.params.theta)?,
                };
                let p = assemble_dual_weighted_gradient(self.params.v, &self.duals, obs);
                let mu = mirror_step(self.geometry, &self.set, &anchor, &p, self.params.alpha)?;

                let prox_penalty = self.params.v * dot(&obs.objective_grad, &sub(&mu, &self.mu_prev))
                    + self.params.alpha * self.geometry.divergence(&mu, &anchor)?;

                for (i, q) in self.duals.q.iter_mut().enumerate() {
                    *q = update_inequality_multiplier(
                        *q,
                        obs.ineq_values[i],
                        &obs.ineq_grads[i],
                        &mu,
                        &self.mu_prev,
                    );
                }
                for (j, h) in self.duals.h.iter_mut().enumerate() {
                    *h = update_equality_multiplier(*h, &obs.eq_vectors[j], &mu, self.targets[j]);
                }
                StepOutcome {
                    slot: self.slot,
                    decision: mu,
                    anchor,
                    drift: self.duals.lyapunov() - before,
                    q_norm: self.duals.q_norm(),
                    h_norm: self.duals.h_norm(),
                    prox_penalty: Some(prox_penalty),
                }
            }
        };
        self.pending = Some(outcome.decision.clone());
        Ok(outcome)
    }

    /// Records the slot-t observation taken at the decision returned by `decide`.
    pub fn observe(&mut self, obs: ObservationBatch) -> Result<()> {
        let Some(mu) = self.pending.take() else {
            return Err(Error::Protocol(format!("slot {} has not been decided", self.slot)));
        };
        if let Err(e) = obs.validate(self.set.dim(), self.duals.q.len(), self.duals.h.len()) {
            self.pending = Some(mu);
            return Err(e);
        }
        self.mu_prev = mu;
        self.cache = Some(obs);
        self.slot += 1;
        Ok(())
    }

    /// `decide` followed by `observe` on the slot's realized functions.
    pub fn step(&mut self, draw: &SlotDraw) -> Result<StepOutcome> {
        let outcome = self.decide()?;
        self.observe(draw.observe(&outcome.decision))?;
        Ok(outcome)
    }
}

/// Runs the solver for `horizon` slots on `problem`, drawing slot functions from `seed`.
pub fn run(
    problem: &dyn Problem,
    horizon: usize,
    params: &AlgorithmParams,
    variant: Variant,
    geometry: Geometry,
    seed: u64,
) -> Result<RunRecord> {
    run_observed(problem, horizon, params, variant, geometry, seed, |_, _| {})
}

/// [`run`] with a callback receiving every slot's draw and outcome.
pub fn run_observed<F>(
    problem: &dyn Problem,
    horizon: usize,
    params: &AlgorithmParams,
    variant: Variant,
    geometry: Geometry,
    seed: u64,
    mut observer: F,
) -> Result<RunRecord>
where
    F: FnMut(&SlotDraw, &StepOutcome),
{
    let started = Instant::now();
    let geometry = match variant {
        Variant::Simplex => Geometry::NegativeEntropy,
        Variant::General => geometry,
    };
    if let Some(limit) = problem.horizon_limit() {
        if horizon > limit {
            return Err(Error::InvalidParameter(format!(
                "horizon {horizon} exceeds the problem's {limit} available slots"
            )));
        }
    }
    let mut solver = Solver::new(
        geometry,
        problem.decision_set().clone(),
        problem.num_inequalities(),
        problem.targets().to_vec(),
        params.clone(),
        variant,
    )?;
    let mut slots = Vec::with_capacity(horizon);
    for t in 0..horizon {
        let draw = draw_slot(problem, seed, t);
        let outcome = solver.step(&draw)?;
        observer(&draw, &outcome);
        slots.push(SlotRecord {
            t,
            mu: outcome.decision.clone(),
            f_realized: draw.objective.value(&outcome.decision),
            g_realized: draw.inequality_values(&outcome.decision),
            h_realized: draw.equality_values(&outcome.decision),
            q_norm: outcome.q_norm,
            h_norm: outcome.h_norm,
            drift: outcome.drift,
        });
    }
    Ok(RunRecord {
        header: RunHeader {
            problem_id: problem.id(),
            method: "pdomd".into(),
            variant: Some(variant),
            geometry: Some(geometry),
            params: Some(params.clone()),
            seed,
            config_hash: None,
            wall_time_secs: started.elapsed().as_secs_f64(),
            dim: problem.dim(),
            num_ineq: problem.num_inequalities(),
            num_eq: problem.num_equalities(),
        },
        slots,
    })
}

/// Plays a fixed policy over the sample path of `seed` and records it like a solver run.
///
/// `policy(t, previous)` receives the slot index and the previous slot's realized
/// functions (`None` in slot 0) and returns the decision for slot `t`. Dual norms and
/// drift are recorded as zero.
pub fn run_policy<F>(
    problem: &dyn Problem,
    horizon: usize,
    seed: u64,
    method: &str,
    mut policy: F,
) -> Result<RunRecord>
where
    F: FnMut(usize, Option<&SlotDraw>) -> Result<Vec<f64>>,
{
    let started = Instant::now();
    if let Some(limit) = problem.horizon_limit() {
        if horizon > limit {
            return Err(Error::InvalidParameter(format!(
                "horizon {horizon} exceeds the problem's {limit} available slots"
            )));
        }
    }
    let set = problem.decision_set();
    let mut slots = Vec::with_capacity(horizon);
    let mut previous: Option<SlotDraw> = None;
    for t in 0..horizon {
        let mu = policy(t, previous.as_ref())?;
        check_dim(set.dim(), mu.len())?;
        check_finite(&mu)?;
        if !set.contains(&mu) {
            return Err(Error::InvalidParameter(format!("{method} left the decision set at slot {t}")));
        }
        let draw = draw_slot(problem, seed, t);
        slots.push(SlotRecord {
            t,
            f_realized: draw.objective.value(&mu),
            g_realized: draw.inequality_values(&mu),
            h_realized: draw.equality_values(&mu),
            mu,
            q_norm: 0.0,
            h_norm: 0.0,
            drift: 0.0,
        });
        previous = Some(draw);
    }
    Ok(RunRecord {
        header: RunHeader {
            problem_id: problem.id(),
            method: method.into(),
            variant: None,
            geometry: None,
            params: None,
            seed,
            config_hash: None,
            wall_time_secs: started.elapsed().as_secs_f64(),
            dim: problem.dim(),
            num_ineq: problem.num_inequalities(),
            num_eq: problem.num_equalities(),
        },
        slots,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn obs(slot: usize, grad: Vec<f64>, g: Vec<(f64, Vec<f64>)>, h: Vec<Vec<f64>>) -> ObservationBatch {
        ObservationBatch {
            slot,
            objective_value: 0.0,
            objective_grad: grad,
            ineq_values: g.iter().map(|x| x.0).collect(),
            ineq_grads: g.into_iter().map(|x| x.1).collect(),
            eq_vectors: h,
        }
    }

    #[test]
    fn schedule_examples() {
        let p = parameter_schedule(10_000, Variant::Simplex).unwrap();
        assert_eq!((p.v, p.alpha, p.theta, p.drift_window), (100.0, 10_000.0, 1e-4, 100));
        let p = parameter_schedule(4, Variant::Simplex).unwrap();
        assert_eq!((p.v, p.alpha, p.theta, p.drift_window), (2.0, 4.0, 0.25, 2));
        assert_eq!(parameter_schedule(4, Variant::General).unwrap().theta, 0.0);
        assert!(parameter_schedule(1, Variant::General).is_err());
        assert!(parameter_schedule(0, Variant::Simplex).is_err());
    }

    #[test]
    fn dual_weighted_gradient_examples() {
        let o = obs(0, vec![1.0, 0.0], vec![(0.0, vec![0.0, 1.0])], vec![]);
        let duals = DualState { q: vec![2.0], h: vec![] };
        assert_eq!(assemble_dual_weighted_gradient(1.0, &duals, &o), vec![1.0, 2.0]);
        let zero = DualState::zeros(1, 0);
        assert_eq!(assemble_dual_weighted_gradient(3.0, &zero, &o), vec![3.0, 0.0]);
        let plain = obs(0, vec![0.5, -1.0], vec![], vec![]);
        assert_eq!(assemble_dual_weighted_gradient(2.0, &DualState::zeros(0, 0), &plain), vec![1.0, -2.0]);
    }

    #[test]
    fn multiplier_updates() {
        assert_eq!(update_inequality_multiplier(0.0, -1.0, &[1.0], &[0.5], &[0.5]), 0.0);
        // ⟨∇g, μ_new − μ_prev⟩ = −0.5
        assert_eq!(update_inequality_multiplier(2.0, 1.0, &[1.0], &[0.5], &[1.0]), 2.5);
        assert_eq!(update_inequality_multiplier(1.0, -3.0, &[1.0], &[1.0], &[0.5]), 0.0);

        assert_eq!(update_equality_multiplier(0.0, &[1.0, 1.0], &[0.25, 0.25], 0.5), 0.0);
        assert_eq!(update_equality_multiplier(1.0, &[2.0, 0.0], &[1.0, 0.0], 0.5), 2.5);
        assert_eq!(update_equality_multiplier(-1.0, &[0.0], &[1.0], 1.0), -2.0);
    }

    #[test]
    fn first_slot_keeps_initial_point() {
        let set = DecisionSet::uniform_box(2, 0.0, 2.0).unwrap();
        let params = parameter_schedule(16, Variant::General).unwrap();
        let mut s = Solver::new(Geometry::Euclidean, set, 1, vec![0.7], params, Variant::General).unwrap();
        assert!(s.dual_weighted_gradient().is_err());
        let out = s.decide().unwrap();
        assert_eq!(out.decision, vec![1.0, 1.0]);
        assert_eq!(out.drift, 0.0);
        assert_eq!(s.duals(), &DualState::zeros(1, 1));
        assert!(s.decide().is_err());
        s.observe(obs(0, vec![1.0, 1.0], vec![(1.0, vec![1.0, 0.0])], vec![vec![1.0, 1.0]]))
            .unwrap();
        let out = s.decide().unwrap();
        // p = 4·(1,1) with Q = H = 0, α = 16
        assert_eq!(out.decision, vec![0.75, 0.75]);
        assert_eq!(s.duals().q, vec![(1.0f64 - 0.25).max(0.0)]);
        assert!((s.duals().h[0] - (1.5 - 0.7)).abs() < 1e-15);
    }

    #[test]
    fn observe_requires_decision_and_valid_dims() {
        let set = DecisionSet::simplex(3).unwrap();
        let params = parameter_schedule(9, Variant::Simplex).unwrap();
        let mut s =
            Solver::new(Geometry::NegativeEntropy, set, 0, vec![], params, Variant::Simplex).unwrap();
        assert!(s.observe(obs(0, vec![0.0; 3], vec![], vec![])).is_err());
        s.decide().unwrap();
        assert!(s.observe(obs(0, vec![0.0; 2], vec![], vec![])).is_err());
        s.observe(obs(0, vec![0.0; 3], vec![], vec![])).unwrap();
        assert_eq!(s.slot(), 1);
    }

    #[test]
    fn simplex_variant_rejects_other_geometries() {
        let params = parameter_schedule(9, Variant::Simplex).unwrap();
        let bx = DecisionSet::uniform_box(2, 0.0, 1.0).unwrap();
        assert!(Solver::new(Geometry::Euclidean, bx, 0, vec![], params.clone(), Variant::Simplex).is_err());
        let s = DecisionSet::simplex(2).unwrap();
        assert!(Solver::new(Geometry::Euclidean, s, 0, vec![], params, Variant::Simplex).is_err());
    }

    #[test]
    fn unconstrained_box_run_moves_to_cheapest_vertex() {
        let set = DecisionSet::uniform_box(2, 0.0, 1.0).unwrap();
        let params = parameter_schedule(400, Variant::General).unwrap();
        let mut s = Solver::new(Geometry::Euclidean, set, 0, vec![], params, Variant::General).unwrap();
        let c = vec![1.0, -1.0];
        let mut last = vec![];
        for t in 0..400 {
            let out = s.decide().unwrap();
            s.observe(obs(t, c.clone(), vec![], vec![])).unwrap();
            last = out.decision;
        }
        assert_eq!(last, vec![0.0, 1.0]);
    }

    #[test]
    fn invalid_params_rejected() {
        let mut p = parameter_schedule(10, Variant::General).unwrap();
        p.drift_window = 11;
        assert!(p.validate().is_err());
        p.drift_window = 3;
        p.alpha = 0.0;
        assert!(p.validate().is_err());
    }
}
