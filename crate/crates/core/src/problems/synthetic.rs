use rand::{Rng, SeedableRng};
use serde::{Deserialize, Serialize};

use super::{Problem, ProblemConstants, SeparableFn, SlotDraw, SlotRng};
use crate::error::{check_dim, check_finite, Error, Result};
use crate::geometry::{DecisionSet, Geometry};
use crate::linalg::dot;

/// Shape of the decision set of a generated instance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SetKind {
    Simplex,
    Box { lower: f64, upper: f64 },
}

/// Parameters of a random linear instance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SyntheticConfig {
    pub dim: usize,
    pub num_ineq: usize,
    pub num_eq: usize,
    pub set: SetKind,
    /// Half-width of the uniform noise added to every coefficient each slot.
    pub noise: f64,
    /// Margin by which the reference point satisfies each inequality.
    pub slack: f64,
    /// Seed of the instance (not of the sample path).
    pub seed: u64,
}

impl Default for SyntheticConfig {
    fn default() -> Self {
        Self { dim: 10, num_ineq: 2, num_eq: 2, set: SetKind::Simplex, noise: 0.1, slack: 0.1, seed: 0 }
    }
}

/// Linear objective, linear inequality and equality constraints, each coefficient
/// perturbed by i.i.d. uniform noise around a fixed mean.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticProblem {
    id: String,
    set: DecisionSet,
    cost: Vec<f64>,
    ineq_coeffs: Vec<Vec<f64>>,
    ineq_offsets: Vec<f64>,
    eq_vectors: Vec<Vec<f64>>,
    targets: Vec<f64>,
    noise: f64,
}

impl SyntheticProblem {
    /// Instance with the given mean coefficients. Inequality `i` reads
    /// `⟨ineq[i].0, μ⟩ + ineq[i].1 ≤ 0`.
    pub fn from_means(
        set: DecisionSet,
        cost: Vec<f64>,
        ineq: Vec<(Vec<f64>, f64)>,
        eq: Vec<Vec<f64>>,
        targets: Vec<f64>,
        noise: f64,
    ) -> Result<Self> {
        let d = set.dim();
        check_dim(d, cost.len())?;
        check_finite(&cost)?;
        check_dim(eq.len(), targets.len())?;
        check_finite(&targets)?;
        for (a, e) in &ineq {
            check_dim(d, a.len())?;
            check_finite(a)?;
            check_finite(&[*e])?;
        }
        for h in &eq {
            check_dim(d, h.len())?;
            check_finite(h)?;
        }
        if !(noise >= 0.0 && noise.is_finite()) {
            return Err(Error::InvalidParameter(format!("noise must be nonnegative, got {noise}")));
        }
        let (ineq_coeffs, ineq_offsets) = ineq.into_iter().unzip();
        Ok(Self {
            id: String::new(),
            set,
            cost,
            ineq_coeffs,
            ineq_offsets,
            eq_vectors: eq,
            targets,
            noise,
        }
        .with_id())
    }

    fn with_id(mut self) -> Self {
        self.id = format!(
            "synthetic-{}-d{}-l{}-m{}",
            if self.set.is_simplex() { "simplex" } else { "box" },
            self.set.dim(),
            self.ineq_coeffs.len(),
            self.eq_vectors.len()
        );
        self
    }

    /// Random instance satisfying the constraints strictly at an interior reference
    /// point, with linearly independent equality vectors.
    pub fn generate(config: &SyntheticConfig) -> Result<Self> {
        let d = config.dim;
        let (l, m) = (config.num_ineq, config.num_eq);
        if d == 0 {
            return Err(Error::InvalidParameter("dimension must be positive".into()));
        }
        if m >= d {
            return Err(Error::InvalidParameter(format!(
                "need fewer equality constraints than dimensions, got M = {m}, d = {d}"
            )));
        }
        let set = match config.set {
            SetKind::Simplex => DecisionSet::simplex(d)?,
            SetKind::Box { lower, upper } => DecisionSet::uniform_box(d, lower, upper)?,
        };
        let mut rng = SlotRng::seed_from_u64(config.seed);

        let reference: Vec<f64> = match &set {
            DecisionSet::Simplex { .. } => {
                let w: Vec<f64> = (0..d).map(|_| rng.random_range(0.5..1.5)).collect();
                let s: f64 = w.iter().sum();
                w.into_iter().map(|x| x / s).collect()
            }
            DecisionSet::Box { lower, upper } => lower
                .iter()
                .zip(upper)
                .map(|(lo, hi)| lo + (hi - lo) * rng.random_range(0.3..0.7))
                .collect(),
        };
        let cost: Vec<f64> = (0..d).map(|_| rng.random_range(0.0..1.0)).collect();

        let mut eq = Vec::new();
        for attempt in 0.. {
            if attempt == 100 {
                return Err(Error::InvalidParameter(
                    "could not draw linearly independent equality vectors".into(),
                ));
            }
            eq = (0..m).map(|_| (0..d).map(|_| rng.random_range(0.0..1.0)).collect()).collect();
            let mut basis: Vec<Vec<f64>> = Vec::new();
            if set.is_simplex() {
                basis.push(vec![1.0; d]);
            }
            basis.extend(eq.iter().cloned());
            if linearly_independent(&basis) {
                break;
            }
        }
        let targets = eq.iter().map(|h| dot(h, &reference)).collect();
        let ineq = (0..l)
            .map(|_| {
                let a: Vec<f64> = (0..d).map(|_| rng.random_range(-1.0..1.0)).collect();
                let e = -dot(&a, &reference) - config.slack;
                (a, e)
            })
            .collect();
        Self::from_means(set, cost, ineq, eq, targets, config.noise)
    }

    pub fn cost(&self) -> &[f64] {
        &self.cost
    }

    pub fn noise(&self) -> f64 {
        self.noise
    }

    fn perturbed(&self, mean: &[f64], rng: &mut SlotRng) -> Vec<f64> {
        mean.iter().map(|x| x + self.noise * rng.random_range(-1.0..1.0)).collect()
    }

    /// `sup_{μ∈Δ} |⟨a, μ⟩|` for coefficients bounded by `bound` in magnitude.
    fn linear_sup(&self, bound: &[f64]) -> f64 {
        match &self.set {
            DecisionSet::Simplex { .. } => bound.iter().cloned().fold(0.0, f64::max),
            DecisionSet::Box { .. } => {
                (0..bound.len()).map(|k| bound[k] * self.set.coordinate_magnitude(k)).sum()
            }
        }
    }

    fn widened(&self, v: &[f64]) -> Vec<f64> {
        v.iter().map(|x| x.abs() + self.noise).collect()
    }
}

/// Gram-Schmidt with a relative pivot threshold.
fn linearly_independent(vectors: &[Vec<f64>]) -> bool {
    let mut ortho: Vec<Vec<f64>> = Vec::new();
    for v in vectors {
        let scale = dot(v, v).sqrt();
        let mut w = v.clone();
        for u in &ortho {
            let c = dot(&w, u);
            crate::linalg::axpy(-c, u, &mut w);
        }
        let n = dot(&w, &w).sqrt();
        if !(n > 1e-8 * scale.max(1e-300)) {
            return false;
        }
        ortho.push(w.into_iter().map(|x| x / n).collect());
    }
    true
}

/// `SyntheticConfig` defaults (simplex) with the given sizes and seed.
pub fn build_synthetic_problem(d: usize, l: usize, m: usize, seed: u64) -> Result<SyntheticProblem> {
    SyntheticProblem::generate(&SyntheticConfig { dim: d, num_ineq: l, num_eq: m, seed, ..Default::default() })
}

impl Problem for SyntheticProblem {
    fn id(&self) -> String {
        self.id.clone()
    }

    fn decision_set(&self) -> &DecisionSet {
        &self.set
    }

    fn num_inequalities(&self) -> usize {
        self.ineq_coeffs.len()
    }

    fn num_equalities(&self) -> usize {
        self.eq_vectors.len()
    }

    fn targets(&self) -> &[f64] {
        &self.targets
    }

    fn sample(&self, slot: usize, rng: &mut SlotRng) -> SlotDraw {
        let objective = SeparableFn::affine(self.perturbed(&self.cost, rng), 0.0);
        let inequalities = self
            .ineq_coeffs
            .iter()
            .zip(&self.ineq_offsets)
            .map(|(a, e)| {
                let coeffs = self.perturbed(a, rng);
                let offset = e + self.noise * rng.random_range(-1.0..1.0);
                SeparableFn::affine(coeffs, offset)
            })
            .collect();
        let equalities = self.eq_vectors.iter().map(|h| self.perturbed(h, rng)).collect();
        SlotDraw { slot, objective, inequalities, equalities, arrivals: None }
    }

    fn mean(&self, slot: usize) -> Option<SlotDraw> {
        Some(SlotDraw {
            slot,
            objective: SeparableFn::affine(self.cost.clone(), 0.0),
            inequalities: self
                .ineq_coeffs
                .iter()
                .zip(&self.ineq_offsets)
                .map(|(a, e)| SeparableFn::affine(a.clone(), *e))
                .collect(),
            equalities: self.eq_vectors.clone(),
            arrivals: None,
        })
    }

    fn constants(&self, geometry: Geometry) -> ProblemConstants {
        let d1 = geometry.dual_norm(&self.widened(&self.cost));
        let d2 = self
            .ineq_coeffs
            .iter()
            .map(|a| geometry.dual_norm(&self.widened(a)).powi(2))
            .sum::<f64>()
            .sqrt();
        let g = self
            .ineq_coeffs
            .iter()
            .zip(&self.ineq_offsets)
            .map(|(a, e)| (self.linear_sup(&self.widened(a)) + e.abs() + self.noise).powi(2))
            .sum::<f64>()
            .sqrt();
        let h = self
            .eq_vectors
            .iter()
            .map(|v| geometry.dual_norm(&self.widened(v)).powi(2))
            .sum::<f64>()
            .sqrt();
        let f = self.linear_sup(&self.widened(&self.cost));
        let r = match geometry {
            Geometry::Euclidean => Some(0.5 * self.set.diameter_sq()),
            Geometry::NegativeEntropy => None,
        };
        ProblemConstants { d1, d2, g, h, f, r, beta: geometry.modulus() }
    }
}
