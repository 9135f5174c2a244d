//! Power allocation across geo-distributed server clusters under budget pacing.
//!
//! Server `k` runs at power `μₖ ∈ [0, 30]` and pays the price of its cluster's zone.
//! Jobs arrive as a Poisson stream; a server at power `μₖ` serves `ξₖ·8 ln(1 + 4μₖ)`
//! jobs with Pareto noise `ξₖ` of mean one. Each pacing group of clusters must spend
//! a fixed share of the budget-weighted power.

use rand::SeedableRng;
use serde::{Deserialize, Serialize};

use super::{
    pareto_sample, poisson_sample, Problem, ProblemConstants, SeparableFn, SlotDraw, SlotRng,
};
use crate::cli::trace::PriceTrace;
use crate::engine::run_policy;
use crate::error::{Error, Result};
use crate::geometry::{DecisionSet, Geometry};
use crate::telemetry::RunRecord;

/// Jobs served per slot at power `mu` with the default curve: `8 ln(1 + 4μ)`.
pub fn service_curve(mu: f64) -> f64 {
    DatacenterConfig::default().served(mu)
}

/// Power needed to serve `target` jobs per slot with the default curve, clipped to `[0, 30]`.
pub fn service_curve_inverse(target: f64) -> f64 {
    DatacenterConfig::default().power_for(target)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DatacenterConfig {
    pub num_clusters: usize,
    pub servers_per_cluster: usize,
    pub power_max: f64,
    pub arrival_mean: f64,
    pub service_scale: f64,
    pub service_rate: f64,
    pub budget_mean: f64,
    /// Spend share of every pacing group; sums to one.
    pub pacing_ratios: Vec<f64>,
    /// Clusters (0-based) of every pacing group; partitions the clusters.
    pub pacing_groups: Vec<Vec<usize>>,
    pub pareto_shape: f64,
    /// Number of past slots the reactive baseline averages.
    pub reac_window: usize,
}

impl Default for DatacenterConfig {
    fn default() -> Self {
        Self {
            num_clusters: 5,
            servers_per_cluster: 10,
            power_max: 30.0,
            arrival_mean: 1000.0,
            service_scale: 8.0,
            service_rate: 4.0,
            budget_mean: 5.0,
            pacing_ratios: vec![0.05, 0.10, 0.25, 0.60],
            pacing_groups: vec![vec![0], vec![1], vec![2], vec![3, 4]],
            pareto_shape: 2.5,
            reac_window: 10,
        }
    }
}

impl DatacenterConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidParameter(msg));
        if self.num_clusters == 0 || self.servers_per_cluster == 0 {
            return bad("need at least one cluster and one server per cluster".into());
        }
        for (name, v) in [
            ("power_max", self.power_max),
            ("arrival_mean", self.arrival_mean),
            ("service_scale", self.service_scale),
            ("service_rate", self.service_rate),
            ("budget_mean", self.budget_mean),
        ] {
            if !(v > 0.0 && v.is_finite()) {
                return bad(format!("{name} must be positive, got {v}"));
            }
        }
        if !(self.pareto_shape > 1.0) {
            return bad(format!("pareto_shape must exceed 1, got {}", self.pareto_shape));
        }
        if self.reac_window == 0 {
            return bad("reac_window must be positive".into());
        }
        if self.pacing_ratios.len() != self.pacing_groups.len() {
            return bad(format!(
                "{} pacing ratios for {} pacing groups",
                self.pacing_ratios.len(),
                self.pacing_groups.len()
            ));
        }
        if self.pacing_ratios.iter().any(|b| !(*b >= 0.0)) {
            return bad("pacing ratios must be nonnegative".into());
        }
        let total: f64 = self.pacing_ratios.iter().sum();
        if (total - 1.0).abs() > 1e-9 {
            return bad(format!("pacing ratios sum to {total}, not 1"));
        }
        let mut seen = vec![false; self.num_clusters];
        for c in self.pacing_groups.iter().flatten() {
            if *c >= self.num_clusters || seen[*c] {
                return bad(format!("pacing groups do not partition the {} clusters", self.num_clusters));
            }
            seen[*c] = true;
        }
        if seen.iter().any(|s| !s) || self.pacing_groups.iter().any(Vec::is_empty) {
            return bad(format!("pacing groups do not partition the {} clusters", self.num_clusters));
        }
        Ok(())
    }

    pub fn dim(&self) -> usize {
        self.num_clusters * self.servers_per_cluster
    }

    pub fn cluster_of(&self, server: usize) -> usize {
        server / self.servers_per_cluster
    }

    /// Mean jobs served at power `mu`.
    pub fn served(&self, mu: f64) -> f64 {
        self.service_scale * (self.service_rate * mu).ln_1p()
    }

    /// Power that serves `target` jobs on average, clipped to `[0, power_max]`.
    pub fn power_for(&self, target: f64) -> f64 {
        ((target / self.service_scale).exp_m1() / self.service_rate).clamp(0.0, self.power_max)
    }

    /// Pacing group of every server's cluster.
    fn group_of_cluster(&self) -> Vec<usize> {
        let mut g = vec![0; self.num_clusters];
        for (j, group) in self.pacing_groups.iter().enumerate() {
            for &c in group {
                g[c] = j;
            }
        }
        g
    }
}

/// The data-center scenario over a price trace. Cluster `c` pays zone `c`'s price.
#[derive(Debug, Clone)]
pub struct DatacenterProblem {
    config: DatacenterConfig,
    prices: PriceTrace,
    set: DecisionSet,
    targets: Vec<f64>,
    /// `membership[j][k]`: 1 if server `k` belongs to pacing group `j`.
    membership: Vec<Vec<f64>>,
}

pub fn build_datacenter_problem(config: DatacenterConfig, prices: PriceTrace) -> Result<DatacenterProblem> {
    DatacenterProblem::new(config, prices)
}

impl DatacenterProblem {
    pub fn new(config: DatacenterConfig, prices: PriceTrace) -> Result<Self> {
        config.validate()?;
        if prices.num_zones() != config.num_clusters {
            return Err(Error::Trace(format!(
                "price trace has {} zones, the data center has {} clusters",
                prices.num_zones(),
                config.num_clusters
            )));
        }
        if prices.is_empty() {
            return Err(Error::Trace("price trace is empty".into()));
        }
        let d = config.dim();
        let groups = config.group_of_cluster();
        let membership = (0..config.pacing_groups.len())
            .map(|j| (0..d).map(|k| f64::from(u8::from(groups[config.cluster_of(k)] == j))).collect())
            .collect();
        Ok(Self {
            set: DecisionSet::uniform_box(d, 0.0, config.power_max)?,
            targets: vec![0.0; config.pacing_groups.len()],
            config,
            prices,
            membership,
        })
    }

    pub fn config(&self) -> &DatacenterConfig {
        &self.config
    }

    pub fn prices(&self) -> &PriceTrace {
        &self.prices
    }

    fn price_vector(&self, slot: usize) -> Vec<f64> {
        let t = slot.min(self.prices.len() - 1);
        (0..self.config.dim()).map(|k| self.prices.price(self.config.cluster_of(k), t)).collect()
    }

    fn pacing_rows(&self, budgets: &[f64]) -> Vec<Vec<f64>> {
        self.membership
            .iter()
            .zip(&self.config.pacing_ratios)
            .map(|(m, beta)| m.iter().zip(budgets).map(|(i, h)| (i - beta) * h).collect())
            .collect()
    }

    fn service_fn(&self, arrivals: f64, noise: &[f64]) -> SeparableFn {
        SeparableFn {
            offset: arrivals,
            linear: vec![0.0; self.config.dim()],
            log_weights: noise.iter().map(|x| self.config.service_scale * x).collect(),
            log_rate: self.config.service_rate,
        }
    }

    /// Jobs left unserved in the slot at decision `mu`.
    pub fn unserved(draw: &SlotDraw, mu: &[f64]) -> f64 {
        draw.inequality_values(mu).first().copied().unwrap_or(0.0).max(0.0)
    }

    /// Norm of the expected pacing residuals at `mu`.
    pub fn expected_pacing_violation(&self, mu: &[f64]) -> f64 {
        let rows = self.pacing_rows(&vec![self.config.budget_mean; self.config.dim()]);
        rows.iter().map(|r| crate::linalg::dot(r, mu).powi(2)).sum::<f64>().sqrt()
    }

    /// Upper quantile ×1.5 of `stat` over seeded draws.
    fn monte_carlo_bound(&self, stat: impl Fn(&SlotDraw) -> f64) -> f64 {
        const DRAWS: usize = 20_000;
        let mut rng = SlotRng::seed_from_u64(0x5eed_c0de);
        let mut values: Vec<f64> = (0..DRAWS).map(|_| stat(&self.sample(0, &mut rng))).collect();
        values.sort_by(f64::total_cmp);
        let idx = ((DRAWS as f64) * 0.9999).ceil() as usize - 1;
        1.5 * values[idx.min(DRAWS - 1)]
    }
}

impl Problem for DatacenterProblem {
    fn id(&self) -> String {
        format!(
            "datacenter-{}x{}",
            self.config.num_clusters, self.config.servers_per_cluster
        )
    }

    fn decision_set(&self) -> &DecisionSet {
        &self.set
    }

    fn num_inequalities(&self) -> usize {
        1
    }

    fn num_equalities(&self) -> usize {
        self.config.pacing_groups.len()
    }

    fn targets(&self) -> &[f64] {
        &self.targets
    }

    fn sample(&self, slot: usize, rng: &mut SlotRng) -> SlotDraw {
        let d = self.config.dim();
        let shape = self.config.pareto_shape;
        let arrivals = poisson_sample(self.config.arrival_mean, rng) as f64;
        let noise: Vec<f64> =
            (0..d).map(|_| pareto_sample(1.0, shape, rng).expect("validated shape")).collect();
        let budgets: Vec<f64> = (0..d)
            .map(|_| pareto_sample(self.config.budget_mean, shape, rng).expect("validated shape"))
            .collect();
        SlotDraw {
            slot,
            objective: SeparableFn::affine(self.price_vector(slot), 0.0),
            inequalities: vec![self.service_fn(arrivals, &noise)],
            equalities: self.pacing_rows(&budgets),
            arrivals: Some(arrivals),
        }
    }

    fn mean(&self, slot: usize) -> Option<SlotDraw> {
        let d = self.config.dim();
        Some(SlotDraw {
            slot,
            objective: SeparableFn::affine(self.price_vector(slot), 0.0),
            inequalities: vec![self.service_fn(self.config.arrival_mean, &vec![1.0; d])],
            equalities: self.pacing_rows(&vec![self.config.budget_mean; d]),
            arrivals: Some(self.config.arrival_mean),
        })
    }

    fn constants(&self, geometry: Geometry) -> ProblemConstants {
        let d = self.config.dim();
        let (mut d1, mut f) = (0.0f64, 0.0f64);
        for t in 0..self.prices.len() {
            let c = self.price_vector(t);
            d1 = d1.max(geometry.dual_norm(&c));
            f = f.max(c.iter().map(|x| x.abs() * self.config.power_max).sum());
        }
        let full = self.config.served(self.config.power_max) / self.config.service_scale;
        let g = self.monte_carlo_bound(|draw| {
            let s = &draw.inequalities[0];
            let served_max: f64 = s.log_weights.iter().sum::<f64>() * full;
            s.offset.abs().max((s.offset - served_max).abs())
        });
        let d2 = self.monte_carlo_bound(|draw| {
            let s = &draw.inequalities[0];
            let grad0: Vec<f64> = s.log_weights.iter().map(|w| w * s.log_rate).collect();
            geometry.dual_norm(&grad0)
        });
        let h = self.monte_carlo_bound(|draw| {
            draw.equalities.iter().map(|e| geometry.dual_norm(e).powi(2)).sum::<f64>().sqrt()
        });
        let r = match geometry {
            Geometry::Euclidean => Some(0.5 * self.set.diameter_sq()),
            Geometry::NegativeEntropy => None,
        };
        debug_assert_eq!(d, self.set.dim());
        ProblemConstants { d1, d2, g, h, f, r, beta: geometry.modulus() }
    }

    fn horizon_limit(&self) -> Option<usize> {
        Some(self.prices.len())
    }
}

/// Reactive allocation: forecast arrivals by the mean of the last `reac_window`
/// observations, split the load by pacing ratio (evenly inside a group), and invert
/// the service curve per server. An empty history forecasts the arrival mean.
pub fn reac_policy_step(history: &[f64], config: &DatacenterConfig) -> Vec<f64> {
    let window = &history[history.len().saturating_sub(config.reac_window)..];
    let forecast = if window.is_empty() {
        config.arrival_mean
    } else {
        window.iter().sum::<f64>() / window.len() as f64
    };
    let mut per_server = vec![0.0; config.num_clusters];
    for (group, beta) in config.pacing_groups.iter().zip(&config.pacing_ratios) {
        for &c in group {
            per_server[c] = beta * forecast / group.len() as f64 / config.servers_per_cluster as f64;
        }
    }
    (0..config.dim()).map(|k| config.power_for(per_server[config.cluster_of(k)])).collect()
}

/// Runs the reactive baseline over the sample path of `seed`.
pub fn run_reac(problem: &DatacenterProblem, horizon: usize, seed: u64) -> Result<RunRecord> {
    let mut arrivals: Vec<f64> = Vec::with_capacity(horizon);
    run_policy(problem, horizon, seed, "reac", |_, previous| {
        if let Some(draw) = previous {
            arrivals.push(draw.arrivals.unwrap_or(0.0));
        }
        Ok(reac_policy_step(&arrivals, problem.config()))
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cli::trace::generate_price_trace;
    use crate::problems::draw_slot;

    fn problem() -> DatacenterProblem {
        build_datacenter_problem(DatacenterConfig::default(), generate_price_trace(20, 5, 1)).unwrap()
    }

    #[test]
    fn service_curve_examples() {
        assert_eq!(service_curve(0.0), 0.0);
        assert!((service_curve_inverse(5.0) - 0.217_061_489_358_055_6).abs() < 1e-15);
        assert!((service_curve(service_curve_inverse(5.0)) - 5.0).abs() < 1e-12);
        assert_eq!(service_curve_inverse(1000.0), 30.0);
        assert!((service_curve(30.0) - 38.366_324_364_773_9).abs() < 1e-12);
    }

    #[test]
    fn service_round_trip_on_range() {
        for i in 0..=3000 {
            let mu = i as f64 * 0.01;
            assert!((service_curve_inverse(service_curve(mu)) - mu).abs() <= 1e-10, "{mu}");
        }
    }

    #[test]
    fn reac_examples() {
        let config = DatacenterConfig::default();
        let mu = reac_policy_step(&[1000.0], &config);
        for m in &mu[..10] {
            assert!((m - 0.217_061_489_358_055_6).abs() < 1e-15);
        }
        assert!(reac_policy_step(&[0.0; 10], &config).iter().all(|&x| x == 0.0));
        assert_eq!(reac_policy_step(&[7.0; 30], &config), reac_policy_step(&[7.0; 3], &config));
        assert_eq!(reac_policy_step(&[], &config), reac_policy_step(&[1000.0], &config));
        // Clusters 4 and 5 split β₄ = 0.6 evenly: 30 per server at λ̂ = 1000.
        assert_eq!(mu[35], mu[45]);
        assert!((mu[35] - service_curve_inverse(30.0)).abs() < 1e-15);
    }

    #[test]
    fn zero_power_is_infeasible_and_balanced() {
        let p = problem();
        let draw = draw_slot(&p, 3, 0);
        let zero = vec![0.0; 50];
        assert_eq!(draw.inequality_values(&zero), vec![draw.arrivals.unwrap()]);
        assert!(draw.arrivals.unwrap() > 0.0);
        assert!(draw.equality_values(&zero).iter().all(|&v| v == 0.0));
    }

    #[test]
    fn mean_service_at_uniform_power() {
        let p = problem();
        let mean = p.mean(0).unwrap();
        let c = 1.5;
        let mu = vec![c; 50];
        let expected = 1000.0 - 400.0 * (1.0f64 + 4.0 * c).ln();
        assert!((mean.inequality_values(&mu)[0] - expected).abs() < 1e-9);
        // Uniform power gives cluster shares 0.2 each, so every group is off its ratio.
        let shares = [0.2, 0.2, 0.2, 0.4];
        for (j, v) in mean.equality_values(&mu).iter().enumerate() {
            let beta = p.config().pacing_ratios[j];
            assert!((v - (shares[j] - beta) * 5.0 * 50.0 * c).abs() < 1e-9);
        }
    }

    #[test]
    fn paced_allocation_has_zero_expected_residual() {
        let p = problem();
        let config = p.config();
        let mu = reac_policy_step(&[1000.0], config);
        let spend: Vec<f64> = (0..5).map(|c| mu[c * 10..(c + 1) * 10].iter().sum()).collect();
        let total: f64 = spend.iter().sum();
        // Rescale each cluster so spend shares match the pacing ratios exactly.
        let target = [0.05, 0.10, 0.25, 0.30, 0.30];
        let paced: Vec<f64> =
            (0..50).map(|k| mu[k] * target[k / 10] * total / spend[k / 10]).collect();
        assert!(p.expected_pacing_violation(&paced) < 1e-12);
    }

    #[test]
    fn builds_are_reproducible_and_validated() {
        let a = problem();
        let b = problem();
        assert_eq!(draw_slot(&a, 9, 4), draw_slot(&b, 9, 4));
        assert!(build_datacenter_problem(DatacenterConfig::default(), generate_price_trace(5, 4, 1)).is_err());
        let mut bad = DatacenterConfig::default();
        bad.pacing_ratios[0] = 0.2;
        assert!(bad.validate().is_err());
        let bad = DatacenterConfig {
            pacing_groups: vec![vec![0], vec![1], vec![2], vec![3, 3]],
            ..DatacenterConfig::default()
        };
        assert!(bad.validate().is_err());
        assert_eq!(a.horizon_limit(), Some(20));
    }
}
