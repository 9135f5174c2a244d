//! Offline references for regret measurement and diagnostics.
//!
//! All computations run on a [`StaticProgram`]: the time-averaged mean functions of a
//! window of slots,
//!
//! ```text
//! min f̄(μ)  s.t.  ḡᵢ(μ) ≤ 0,  ⟨h̄ⱼ, μ⟩ = bⱼ,  μ ∈ Δ.
//! ```
//!
//! The primal solver is an augmented Lagrangian method whose subproblems are solved
//! by accelerated projected gradient. The Lagrangian of a separable program is
//! itself separable, so the dual function is evaluated exactly, coordinate by
//! coordinate.

use rand::SeedableRng;
use serde::{Deserialize, Serialize};

use crate::error::{check_dim, check_finite, Error, Result};
use crate::geometry::DecisionSet;
use crate::linalg::{dot, norm2, norm2_sq, norm_inf};
use crate::problems::{draw_slot, Problem, SeparableFn, SlotDraw, SlotRng};

/// Windowed static convex program.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StaticProgram {
    pub set: DecisionSet,
    pub objective: SeparableFn,
    pub inequalities: Vec<SeparableFn>,
    pub equalities: Vec<Vec<f64>>,
    pub targets: Vec<f64>,
    /// True when built from sampled realizations instead of exact means.
    pub estimated: bool,
}

impl StaticProgram {
    /// Average of `draws` (all of the same shape).
    pub fn from_draws(set: DecisionSet, draws: &[SlotDraw], targets: Vec<f64>, estimated: bool) -> Result<Self> {
        let first = draws
            .first()
            .ok_or_else(|| Error::InvalidParameter("a static program needs at least one slot".into()))?;
        let d = set.dim();
        let s = 1.0 / draws.len() as f64;
        let mut objective = SeparableFn::zero(d);
        let mut inequalities = vec![SeparableFn::zero(d); first.inequalities.len()];
        let mut equalities = vec![vec![0.0; d]; first.equalities.len()];
        for draw in draws {
            check_dim(inequalities.len(), draw.inequalities.len())?;
            check_dim(equalities.len(), draw.equalities.len())?;
            objective.add_scaled(&draw.objective, s)?;
            for (acc, g) in inequalities.iter_mut().zip(&draw.inequalities) {
                acc.add_scaled(g, s)?;
            }
            for (acc, h) in equalities.iter_mut().zip(&draw.equalities) {
                check_dim(d, h.len())?;
                crate::linalg::axpy(s, h, acc);
            }
        }
        check_dim(equalities.len(), targets.len())?;
        Ok(Self { set, objective, inequalities, equalities, targets, estimated })
    }

    /// Mean functions averaged over slots `t..t+k`.
    pub fn window(problem: &dyn Problem, t: usize, k: usize) -> Result<Self> {
        let draws = (t..t + k)
            .map(|s| {
                problem.mean(s).ok_or_else(|| {
                    Error::MissingMeans(format!("{} has no exact means at slot {s}", problem.id()))
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Self::from_draws(problem.decision_set().clone(), &draws, problem.targets().to_vec(), false)
    }

    /// Realized functions of slots `t..t+k` on the sample path `seed`, averaged.
    /// The result is an estimate of the windowed program.
    pub fn sample_average(problem: &dyn Problem, seed: u64, t: usize, k: usize) -> Result<Self> {
        let draws: Vec<SlotDraw> = (t..t + k).map(|s| draw_slot(problem, seed, s)).collect();
        Self::from_draws(problem.decision_set().clone(), &draws, problem.targets().to_vec(), true)
    }

    pub fn dim(&self) -> usize {
        self.set.dim()
    }

    pub fn num_duals(&self) -> usize {
        self.inequalities.len() + self.equalities.len()
    }

    pub fn inequality_values(&self, mu: &[f64]) -> Vec<f64> {
        self.inequalities.iter().map(|g| g.value(mu)).collect()
    }

    /// `⟨h̄ⱼ, μ⟩ − bⱼ`.
    pub fn equality_residuals(&self, mu: &[f64]) -> Vec<f64> {
        self.equalities.iter().zip(&self.targets).map(|(h, b)| dot(h, mu) - b).collect()
    }

    /// `‖([ḡ(μ)]₊, h̄(μ) − b)‖₂`.
    pub fn infeasibility(&self, mu: &[f64]) -> f64 {
        let g: f64 = self.inequality_values(mu).iter().map(|v| v.max(0.0).powi(2)).sum();
        (g + norm2_sq(&self.equality_residuals(mu))).sqrt()
    }

    /// `f̄ + Σλᵢḡᵢ + Σηⱼ(⟨h̄ⱼ, ·⟩ − bⱼ)` as a separable function.
    pub fn lagrangian(&self, lambda: &[f64], eta: &[f64]) -> Result<SeparableFn> {
        check_dim(self.inequalities.len(), lambda.len())?;
        check_dim(self.equalities.len(), eta.len())?;
        check_finite(lambda)?;
        check_finite(eta)?;
        if let Some(i) = lambda.iter().position(|l| *l < 0.0) {
            return Err(Error::InvalidParameter(format!(
                "inequality multiplier {i} is negative ({})",
                lambda[i]
            )));
        }
        let mut l = self.objective.clone();
        for (g, w) in self.inequalities.iter().zip(lambda) {
            l.add_scaled(g, *w)?;
        }
        for ((h, b), w) in self.equalities.iter().zip(&self.targets).zip(eta) {
            crate::linalg::axpy(*w, h, &mut l.linear);
            l.offset -= w * b;
        }
        Ok(l)
    }
}

/// Minimizer of `φₖ(x) + νx` over `[lo, hi]` for one coordinate of a convex separable
/// function (nonnegative log weights). Ties of an affine coordinate resolve to `lo`.
fn coordinate_argmin(phi: &SeparableFn, k: usize, nu: f64, lo: f64, hi: f64) -> f64 {
    let c = phi.linear[k] + nu;
    let w = phi.log_weight(k);
    if w == 0.0 {
        return if c < 0.0 { hi } else { lo };
    }
    if c <= 0.0 {
        return hi;
    }
    (w / c - 1.0 / phi.log_rate).clamp(lo, hi)
}

/// Exact minimizer and minimum of a convex separable function over the set.
pub fn minimize_separable(set: &DecisionSet, phi: &SeparableFn) -> Result<(Vec<f64>, f64)> {
    check_dim(set.dim(), phi.dim())?;
    if phi.log_weights.iter().any(|w| *w < 0.0) {
        return Err(Error::Unsupported("separable minimization needs nonnegative log weights".into()));
    }
    let d = set.dim();
    let x = match set {
        DecisionSet::Box { lower, upper } => {
            (0..d).map(|k| coordinate_argmin(phi, k, 0.0, lower[k], upper[k])).collect()
        }
        DecisionSet::Simplex { .. } => minimize_on_simplex(phi),
    };
    let value = phi.value(&x);
    Ok((x, value))
}

/// Solves `min Σφₖ(xₖ)` on the simplex through the scalar dual in the multiplier `ν`
/// of `Σx = 1`: curved coordinates follow `xₖ(ν)` continuously, affine coordinates
/// only take mass at `ν = −min cₖ`.
fn minimize_on_simplex(phi: &SeparableFn) -> Vec<f64> {
    let d = phi.dim();
    let curved: Vec<usize> = (0..d).filter(|&k| phi.log_weight(k) > 0.0).collect();
    let flat: Vec<usize> = (0..d).filter(|&k| phi.log_weight(k) == 0.0).collect();
    let mass = |nu: f64| -> f64 { curved.iter().map(|&k| coordinate_argmin(phi, k, nu, 0.0, 1.0)).sum() };

    let mut x = vec![0.0; d];
    let argmin_flat = flat.iter().copied().min_by(|&a, &b| phi.linear[a].total_cmp(&phi.linear[b]));
    if let Some(j) = argmin_flat {
        let nu = -phi.linear[j];
        let m = mass(nu);
        if m <= 1.0 {
            for &k in &curved {
                x[k] = coordinate_argmin(phi, k, nu, 0.0, 1.0);
            }
            x[j] = 1.0 - m;
            return x;
        }
    }
    // The curved coordinates absorb all mass; bisect on ν (mass is nonincreasing).
    let rate = phi.log_rate;
    let mut hi = curved.iter().map(|&k| phi.log_weight(k) * rate - phi.linear[k]).fold(f64::NEG_INFINITY, f64::max);
    let mut lo = curved
        .iter()
        .map(|&k| phi.log_weight(k) * rate / (1.0 + rate) - phi.linear[k])
        .fold(f64::INFINITY, f64::min)
        - 1.0;
    if let Some(j) = argmin_flat {
        lo = lo.max(-phi.linear[j]);
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if mass(mid) > 1.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    for &k in &curved {
        x[k] = coordinate_argmin(phi, k, hi, 0.0, 1.0);
    }
    let s: f64 = x.iter().sum();
    if s > 0.0 {
        x.iter_mut().for_each(|v| *v /= s);
    }
    x
}

/// `q(λ, η) = min_{μ∈Δ} f̄(μ) + Σλᵢḡᵢ(μ) + Σηⱼ(⟨h̄ⱼ, μ⟩ − bⱼ)`.
pub fn dual_function(program: &StaticProgram, lambda: &[f64], eta: &[f64]) -> Result<f64> {
    Ok(dual_function_with_argmin(program, lambda, eta)?.1)
}

/// Dual value together with the inner minimizer.
pub fn dual_function_with_argmin(program: &StaticProgram, lambda: &[f64], eta: &[f64]) -> Result<(Vec<f64>, f64)> {
    let l = program.lagrangian(lambda, eta)?;
    minimize_separable(&program.set, &l)
}

/// Settings of the interior-point solve behind [`solve_static`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolverOptions {
    /// Gap and feasibility tolerance handed to the interior-point method.
    pub tolerance: f64,
    /// Largest KKT residual accepted on return.
    pub accept_tol: f64,
    pub max_iter: u32,
}

impl Default for SolverOptions {
    fn default() -> Self {
        Self { tolerance: 1e-10, accept_tol: 1e-6, max_iter: 200 }
    }
}

/// Primal solution of a static program with its multipliers.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HindsightSolution {
    pub mu: Vec<f64>,
    pub value: f64,
    pub lambda: Vec<f64>,
    pub eta: Vec<f64>,
    /// Largest of infeasibility, relative projected stationarity and relative
    /// complementarity.
    pub kkt_residual: f64,
    pub estimated: bool,
}

/// `‖μ − P(μ − ∇L(μ))‖_∞` for the Lagrangian at the given multipliers.
fn stationarity(program: &StaticProgram, mu: &[f64], lambda: &[f64], eta: &[f64]) -> f64 {
    let mut grad = program.objective.gradient(mu);
    for (g, l) in program.inequalities.iter().zip(lambda) {
        crate::linalg::axpy(*l, &g.gradient(mu), &mut grad);
    }
    for (h, e) in program.equalities.iter().zip(eta) {
        crate::linalg::axpy(*e, h, &mut grad);
    }
    let stepped: Vec<f64> = mu.iter().zip(&grad).map(|(a, g)| a - g).collect();
    let proj = program.set.project(&stepped);
    norm_inf(&mu.iter().zip(&proj).map(|(a, b)| a - b).collect::<Vec<_>>())
}

/// Solves the static program and certifies the answer by its KKT residual.
///
/// Each log term `−w ln(1 + rμₖ)` becomes `−w·s` under the exponential-cone
/// constraint `(s, 1, 1 + rμₖ) ∈ K_exp`, so the whole program is a single conic
/// problem whose cone duals are the multipliers.
///
/// Returns [`Error::Infeasible`] when no feasible point exists.
pub fn solve_static(program: &StaticProgram, options: &SolverOptions) -> Result<HindsightSolution> {
    let (mu, lambda, eta) = solve_conic(program, options)?;

    // Stationarity and complementarity are relative to the size of the Lagrangian's
    // gradient terms; feasibility stays absolute.
    let scale = 1.0
        + norm_inf(&program.objective.gradient(&mu))
        + program.inequalities.iter().zip(&lambda).map(|(g, l)| l * norm_inf(&g.gradient(&mu))).sum::<f64>()
        + program.equalities.iter().zip(&eta).map(|(h, e)| e.abs() * norm_inf(h)).sum::<f64>();
    let feas = program.infeasibility(&mu);
    let stat = stationarity(program, &mu, &lambda, &eta) / scale;
    let compl = program
        .inequality_values(&mu)
        .iter()
        .zip(&lambda)
        .map(|(g, l)| (g * l).abs())
        .fold(0.0, f64::max);
    let kkt = feas.max(stat).max(compl / scale);
    if feas > options.accept_tol {
        return Err(Error::Infeasible { residual: feas });
    }
    if kkt > options.accept_tol {
        return Err(Error::NotConverged { residual: kkt });
    }
    Ok(HindsightSolution {
        value: program.objective.value(&mu),
        mu,
        lambda,
        eta,
        kkt_residual: kkt,
        estimated: program.estimated,
    })
}

/// Epigraph variable `s ≤ ln(1 + rate·μ_coord)` standing in for one log term.
struct LogTerm {
    /// 0 for the objective, `i + 1` for inequality `i`.
    function: usize,
    coord: usize,
    rate: f64,
}

#[allow(non_snake_case)]
fn solve_conic(program: &StaticProgram, options: &SolverOptions) -> Result<(Vec<f64>, Vec<f64>, Vec<f64>)> {
    use clarabel::algebra::CscMatrix;
    use clarabel::solver::{DefaultSettings, DefaultSolver, IPSolver, SolverStatus, SupportedConeT};

    let d = program.set.dim();
    let functions: Vec<&SeparableFn> = std::iter::once(&program.objective).chain(&program.inequalities).collect();
    let mut terms = Vec::new();
    for (function, f) in functions.iter().enumerate() {
        for coord in 0..d {
            if f.log_weight(coord) > 0.0 {
                terms.push(LogTerm { function, coord, rate: f.log_rate });
            }
        }
    }
    let n = d + terms.len();
    // Variables are μ followed by one epigraph variable per term.
    let expand = |function: usize| {
        let f = functions[function];
        let mut row = f.linear.clone();
        row.resize(n, 0.0);
        for (j, term) in terms.iter().enumerate() {
            if term.function == function {
                row[d + j] = -f.log_weight(term.coord);
            }
        }
        row
    };
    let q = expand(0);

    let mut rows: Vec<Vec<f64>> = Vec::new();
    let mut b = Vec::new();
    for (h, &target) in program.equalities.iter().zip(&program.targets) {
        let mut row = h.clone();
        row.resize(n, 0.0);
        rows.push(row);
        b.push(target);
    }
    if program.set.is_simplex() {
        let mut row = vec![0.0; n];
        row[..d].fill(1.0);
        rows.push(row);
        b.push(1.0);
    }
    let zero_rows = rows.len();

    for (i, g) in program.inequalities.iter().enumerate() {
        rows.push(expand(i + 1));
        b.push(-g.offset);
    }
    for k in 0..d {
        let (lo, hi) = program.set.bounds(k);
        let mut row = vec![0.0; n];
        row[k] = -1.0;
        rows.push(row);
        b.push(-lo);
        if !program.set.is_simplex() {
            let mut row = vec![0.0; n];
            row[k] = 1.0;
            rows.push(row);
            b.push(hi);
        }
    }
    let nonneg_rows = rows.len() - zero_rows;

    for (j, term) in terms.iter().enumerate() {
        let mut row = vec![0.0; n];
        row[d + j] = -1.0;
        rows.push(row);
        b.push(0.0);
        rows.push(vec![0.0; n]);
        b.push(1.0);
        let mut row = vec![0.0; n];
        row[term.coord] = -term.rate;
        rows.push(row);
        b.push(1.0);
    }

    let mut cones = Vec::new();
    if zero_rows > 0 {
        cones.push(SupportedConeT::ZeroConeT(zero_rows));
    }
    cones.push(SupportedConeT::NonnegativeConeT(nonneg_rows));
    cones.extend(terms.iter().map(|_| SupportedConeT::ExponentialConeT()));

    let P = CscMatrix::zeros((n, n));
    let A = CscMatrix::from(&rows);
    let settings = DefaultSettings {
        verbose: false,
        max_iter: options.max_iter,
        tol_gap_abs: options.tolerance,
        tol_gap_rel: options.tolerance,
        tol_feas: options.tolerance,
        ..DefaultSettings::default()
    };
    let mut solver =
        DefaultSolver::new(&P, &q, &A, &b, &cones, settings).map_err(|e| Error::ConicSolver(e.to_string()))?;
    solver.solve();
    let sol = &solver.solution;
    match sol.status {
        SolverStatus::Solved | SolverStatus::AlmostSolved => {}
        SolverStatus::PrimalInfeasible | SolverStatus::AlmostPrimalInfeasible => {
            return Err(Error::Infeasible { residual: f64::INFINITY })
        }
        other => return Err(Error::ConicSolver(format!("{other:?}"))),
    }
    let mu = program.set.project(&sol.x[..d]);
    let m = program.equalities.len();
    let l = program.inequalities.len();
    let eta = sol.z[..m].to_vec();
    let lambda = sol.z[zero_rows..zero_rows + l].iter().map(|v| v.max(0.0)).collect();
    Ok((mu, lambda, eta))
}

/// Best fixed decision for the mean functions of slots `t..t+k` (`t = 0, k = T` is the
/// hindsight benchmark of a horizon-`T` run).
pub fn hindsight_optimum(problem: &dyn Problem, t: usize, k: usize) -> Result<HindsightSolution> {
    solve_static(&StaticProgram::window(problem, t, k)?, &SolverOptions::default())
}

/// Dual optimum estimate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MultiplierEstimate {
    pub lambda: Vec<f64>,
    pub eta: Vec<f64>,
    /// `‖(λ*, η*)‖₂`.
    pub bound: f64,
    pub dual_value: f64,
    pub primal_value: f64,
    /// `primal_value − dual_value` (nonnegative up to round-off).
    pub gap: f64,
}

/// Largest multiplier norm treated as finite.
pub const DIVERGENCE_NORM: f64 = 1e6;

/// Multipliers of the static program, certified by the exact dual value.
///
/// An infeasible program, or one whose multipliers exceed [`DIVERGENCE_NORM`], is a
/// [`Error::Divergence`]: no bounded multiplier exists.
pub fn estimate_multipliers_for(program: &StaticProgram) -> Result<MultiplierEstimate> {
    let sol = match solve_static(program, &SolverOptions::default()) {
        Ok(sol) => sol,
        Err(Error::Infeasible { .. }) | Err(Error::Divergence { .. }) => {
            return Err(Error::Divergence { norm: f64::INFINITY })
        }
        Err(e) => return Err(e),
    };
    let bound = (norm2_sq(&sol.lambda) + norm2_sq(&sol.eta)).sqrt();
    if bound > DIVERGENCE_NORM {
        return Err(Error::Divergence { norm: bound });
    }
    let dual_value = dual_function(program, &sol.lambda, &sol.eta)?;
    Ok(MultiplierEstimate {
        bound,
        gap: sol.value - dual_value,
        dual_value,
        primal_value: sol.value,
        lambda: sol.lambda,
        eta: sol.eta,
    })
}

pub fn estimate_multipliers(problem: &dyn Problem, t: usize, k: usize) -> Result<MultiplierEstimate> {
    estimate_multipliers_for(&StaticProgram::window(problem, t, k)?)
}

/// Minimum observed decrease rate at one radius.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RadiusProfile {
    pub radius: f64,
    /// `min (q* − q(x)) / ‖x − x*‖` over the samples at this radius.
    pub min_rate: f64,
    pub samples: usize,
}

/// Empirical weak error-bound constants.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EbcEstimate {
    /// Largest `c₀` with `q* − q(x) ≥ c₀·dist` on every sample beyond `ℓ₀`.
    pub c0: f64,
    /// Smallest grid radius beyond which the sampled rate stays positive; `None` if none.
    pub l0: Option<f64>,
    pub profile: Vec<RadiusProfile>,
}

/// Probes a concave function `q` around its maximizer `center`.
///
/// Points are `center + r·u` for uniform unit directions `u`, with the first
/// `nonneg` coordinates projected to `≥ 0`; distances are measured to `center` after
/// projection (the optimal set is treated as the single point `center`). Samples
/// closer than `1e-12` are discarded.
pub fn weak_ebc_profile<F>(q: F, center: &[f64], nonneg: usize, n_samples: usize, radii: &[f64], seed: u64) -> Result<EbcEstimate>
where
    F: Fn(&[f64]) -> Result<f64>,
{
    let q_star = q(center)?;
    let n = center.len();
    let mut rng = SlotRng::seed_from_u64(seed);
    let mut profile = Vec::with_capacity(radii.len());
    for &r in radii {
        let mut min_rate = f64::INFINITY;
        let mut count = 0;
        for _ in 0..n_samples {
            if n == 0 {
                break;
            }
            let u: Vec<f64> = (0..n).map(|_| standard_normal(&mut rng)).collect();
            let un = norm2(&u);
            if un == 0.0 {
                continue;
            }
            let mut x: Vec<f64> = center.iter().zip(&u).map(|(c, v)| c + r * v / un).collect();
            x.iter_mut().take(nonneg).for_each(|v| *v = v.max(0.0));
            let dist = norm2(&x.iter().zip(center).map(|(a, b)| a - b).collect::<Vec<_>>());
            if dist < 1e-12 {
                continue;
            }
            min_rate = min_rate.min((q_star - q(&x)?) / dist);
            count += 1;
        }
        profile.push(RadiusProfile { radius: r, min_rate, samples: count });
    }
    let mut order: Vec<usize> = (0..profile.len()).collect();
    order.sort_by(|&a, &b| profile[a].radius.total_cmp(&profile[b].radius));
    let mut l0 = None;
    let mut c0 = 0.0;
    let mut running = f64::INFINITY;
    for &i in order.iter().rev() {
        let p = profile[i];
        if p.samples == 0 {
            continue;
        }
        let next = running.min(p.min_rate);
        if next <= 0.0 {
            break;
        }
        running = next;
        l0 = Some(p.radius);
        c0 = running;
    }
    Ok(EbcEstimate { c0, l0, profile })
}

fn standard_normal(rng: &mut SlotRng) -> f64 {
    use rand_distr::{Distribution, StandardNormal};
    StandardNormal.sample(rng)
}

/// Weak error-bound probe of the dual function of a window program.
pub fn weak_ebc_probe(
    problem: &dyn Problem,
    t: usize,
    k: usize,
    n_samples: usize,
    radii: &[f64],
    seed: u64,
) -> Result<EbcEstimate> {
    let program = StaticProgram::window(problem, t, k)?;
    let est = estimate_multipliers_for(&program)?;
    let l = est.lambda.len();
    let mut center = est.lambda.clone();
    center.extend_from_slice(&est.eta);
    weak_ebc_profile(|x| dual_function(&program, &x[..l], &x[l..]), &center, l, n_samples, radii, seed)
}
