//! Experiment configuration and drivers behind the `pdomd` binary.

pub mod trace;

use std::fmt::Write as _;
use std::io::Write as _;
use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::engine::{parameter_schedule, run, run_policy, AlgorithmParams, Variant};
use crate::error::{Error, Result};
use crate::geometry::Geometry;
use crate::oracle::{hindsight_optimum, HindsightSolution};
use crate::problems::{
    build_datacenter_problem, run_reac, DatacenterConfig, DatacenterProblem, Problem, SyntheticConfig,
    SyntheticProblem,
};
use crate::telemetry::{compute_metrics, export_record, export_summaries, mean_and_stderr, ExportFormat, MetricsSummary, RunRecord};
use trace::{generate_price_trace, ingest_price_trace, PriceTrace};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scenario {
    Synthetic,
    Datacenter,
}

fn default_seeds() -> Vec<u64> {
    (0..20).collect()
}

/// JSON experiment configuration. Unknown keys are rejected.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub scenario: Scenario,
    #[serde(rename = "T")]
    pub horizon: usize,
    #[serde(default = "default_seeds")]
    pub seeds: Vec<u64>,
    #[serde(default = "default_variant")]
    pub variant: Variant,
    /// Defaults to Euclidean for the general variant; the simplex variant always uses
    /// negative entropy.
    #[serde(default)]
    pub geometry: Option<Geometry>,
    #[serde(rename = "V", default)]
    pub v: Option<f64>,
    #[serde(default)]
    pub alpha: Option<f64>,
    #[serde(default)]
    pub theta: Option<f64>,
    /// Horizons of a rate sweep.
    #[serde(rename = "sweep_T", default)]
    pub sweep_horizons: Option<Vec<usize>>,
    #[serde(default)]
    pub synthetic: SyntheticConfig,
    #[serde(default)]
    pub datacenter: DatacenterConfig,
    /// Price trace CSV; a synthetic trace is generated when absent.
    #[serde(default)]
    pub price_trace: Option<PathBuf>,
    #[serde(default)]
    pub price_seed: u64,
    #[serde(default)]
    pub output_dir: Option<PathBuf>,
}

fn default_variant() -> Variant {
    Variant::General
}

impl ExperimentConfig {
    /// Config with defaults for everything but the scenario and horizon.
    pub fn new(scenario: Scenario, horizon: usize) -> Self {
        Self {
            scenario,
            horizon,
            seeds: default_seeds(),
            variant: Variant::General,
            geometry: None,
            v: None,
            alpha: None,
            theta: None,
            sweep_horizons: None,
            synthetic: SyntheticConfig::default(),
            datacenter: DatacenterConfig::default(),
            price_trace: None,
            price_seed: 0,
            output_dir: None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |message: String| Err(Error::Config { path: String::new(), message });
        if self.horizon < 2 {
            return bad(format!("T must be at least 2, got {}", self.horizon));
        }
        if self.seeds.is_empty() {
            return bad("seeds must not be empty".into());
        }
        if let Some(ts) = &self.sweep_horizons {
            if let Some(t) = ts.iter().find(|t| **t < 2) {
                return bad(format!("sweep_T entries must be at least 2, got {t}"));
            }
        }
        if let Err(e) = self.params_for(self.horizon) {
            return bad(e.to_string());
        }
        match self.scenario {
            Scenario::Datacenter => self.datacenter.validate().or_else(|e| bad(e.to_string())),
            Scenario::Synthetic => Ok(()),
        }
    }

    pub fn geometry(&self) -> Geometry {
        match (self.variant, self.geometry) {
            (Variant::Simplex, _) => Geometry::NegativeEntropy,
            (Variant::General, Some(g)) => g,
            (Variant::General, None) => Geometry::Euclidean,
        }
    }

    /// Schedule for horizon `t` with the configured overrides applied.
    pub fn params_for(&self, t: usize) -> Result<AlgorithmParams> {
        let mut p = parameter_schedule(t, self.variant)?;
        if let Some(v) = self.v {
            p.v = v;
        }
        if let Some(a) = self.alpha {
            p.alpha = a;
        }
        if let Some(th) = self.theta {
            p.theta = th;
        }
        p.validate()?;
        Ok(p)
    }

    /// SHA-256 of the canonical JSON form of the config.
    ///
    /// The seed list and output directory are left out: neither changes what a single
    /// seeded run produces, and both can be overridden on the command line.
    pub fn hash(&self) -> String {
        let canonical = Self { seeds: Vec::new(), output_dir: None, ..self.clone() };
        let json = serde_json::to_string(&canonical).expect("config serializes");
        let digest = Sha256::digest(json.as_bytes());
        digest.iter().fold(String::with_capacity(64), |mut s, b| {
            let _ = write!(s, "{b:02x}");
            s
        })
    }
}

/// Parses a JSON config, reporting schema violations with their field path.
pub fn parse_config_str(text: &str) -> Result<ExperimentConfig> {
    let de = &mut serde_json::Deserializer::from_str(text);
    let config: ExperimentConfig = serde_path_to_error::deserialize(de).map_err(|e| Error::Config {
        path: e.path().to_string(),
        message: e.inner().to_string(),
    })?;
    config.validate()?;
    Ok(config)
}

pub fn parse_config(path: impl AsRef<Path>) -> Result<ExperimentConfig> {
    let text = std::fs::read_to_string(path.as_ref()).map_err(|e| Error::Config {
        path: path.as_ref().display().to_string(),
        message: e.to_string(),
    })?;
    parse_config_str(&text)
}

/// Parses `a..b` (inclusive) or a single seed.
pub fn parse_seed_range(text: &str) -> Result<Vec<u64>> {
    let bad = || Error::Config { path: "--seeds".into(), message: format!("expected a..b or a seed, got \"{text}\"") };
    match text.split_once("..") {
        Some((a, b)) => {
            let a: u64 = a.trim().parse().map_err(|_| bad())?;
            let b: u64 = b.trim().parse().map_err(|_| bad())?;
            if a > b {
                return Err(bad());
            }
            Ok((a..=b).collect())
        }
        None => Ok(vec![text.trim().parse().map_err(|_| bad())?]),
    }
}

/// A problem built from a config.
pub enum BuiltProblem {
    Synthetic(SyntheticProblem),
    Datacenter(DatacenterProblem),
}

impl BuiltProblem {
    pub fn as_dyn(&self) -> &dyn Problem {
        match self {
            BuiltProblem::Synthetic(p) => p,
            BuiltProblem::Datacenter(p) => p,
        }
    }
}

/// Builds the configured problem with enough slots for horizon `horizon`.
pub fn build_problem(config: &ExperimentConfig, horizon: usize) -> Result<BuiltProblem> {
    match config.scenario {
        Scenario::Synthetic => Ok(BuiltProblem::Synthetic(SyntheticProblem::generate(&config.synthetic)?)),
        Scenario::Datacenter => {
            let prices = load_prices(config, horizon)?;
            Ok(BuiltProblem::Datacenter(build_datacenter_problem(config.datacenter.clone(), prices)?))
        }
    }
}

fn load_prices(config: &ExperimentConfig, horizon: usize) -> Result<PriceTrace> {
    let trace = match &config.price_trace {
        Some(path) => ingest_price_trace(path)?,
        None => generate_price_trace(horizon, config.datacenter.num_clusters, config.price_seed),
    };
    if trace.len() < horizon {
        return Err(Error::Trace(format!("price trace has {} slots, T = {horizon}", trace.len())));
    }
    Ok(trace)
}

/// Per-slot comparison series, averaged over seeds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FigureSeries {
    /// Series names, e.g. `algorithm`, `hindsight`, `reac`.
    pub methods: Vec<String>,
    /// `values[t][m]`.
    pub values: Vec<Vec<f64>>,
}

impl FigureSeries {
    pub fn column(&self, method: &str) -> Option<Vec<f64>> {
        let m = self.methods.iter().position(|x| x == method)?;
        Some(self.values.iter().map(|row| row[m]).collect())
    }
}

/// Everything an experiment produced.
#[derive(Debug, Clone)]
pub struct ExperimentReport {
    pub config_hash: String,
    pub hindsight: HindsightSolution,
    /// `(method, seed, record)`.
    pub records: Vec<(String, u64, RunRecord)>,
    /// `(label, summary)` with labels `method/seed=k`.
    pub summaries: Vec<(String, MetricsSummary)>,
    /// Cumulative cost, running-average unserved jobs and pacing violation
    /// (data-center scenario only).
    pub cost: Option<FigureSeries>,
    pub unserved: Option<FigureSeries>,
    pub pacing: Option<FigureSeries>,
}

/// Runs the algorithm (and, for the data center, the reactive baseline and the
/// hindsight fixed decision) for every seed, and writes the outputs when the config
/// names an output directory.
pub fn run_experiment(config: &ExperimentConfig) -> Result<ExperimentReport> {
    config.validate()?;
    let hash = config.hash();
    let t = config.horizon;
    let built = build_problem(config, t)?;
    let problem = built.as_dyn();
    let params = config.params_for(t)?;
    let geometry = config.geometry();
    let hindsight = hindsight_optimum(problem, 0, t)?;

    let per_seed: Vec<Vec<(String, u64, RunRecord)>> = config
        .seeds
        .par_iter()
        .map(|&seed| -> Result<Vec<(String, u64, RunRecord)>> {
            let mut out = Vec::new();
            let mut rec = run(problem, t, &params, config.variant, geometry, seed)?;
            rec.header.config_hash = Some(hash.clone());
            out.push(("pdomd".to_string(), seed, rec));
            if let BuiltProblem::Datacenter(dc) = &built {
                let mut reac = run_reac(dc, t, seed)?;
                reac.header.config_hash = Some(hash.clone());
                out.push(("reac".to_string(), seed, reac));
                let mu = hindsight.mu.clone();
                let mut fixed = run_policy(problem, t, seed, "hindsight", |_, _| Ok(mu.clone()))?;
                fixed.header.config_hash = Some(hash.clone());
                out.push(("hindsight".to_string(), seed, fixed));
            }
            Ok(out)
        })
        .collect::<Result<_>>()?;
    let records: Vec<(String, u64, RunRecord)> = per_seed.into_iter().flatten().collect();

    let summaries = records
        .par_iter()
        .map(|(method, seed, rec)| Ok((format!("{method}/seed={seed}"), compute_metrics(rec, &hindsight.mu, problem)?)))
        .collect::<Result<Vec<_>>>()?;

    let (cost, unserved, pacing) = match &built {
        BuiltProblem::Datacenter(dc) => {
            let (c, u, p) = datacenter_figures(dc, &records);
            (Some(c), Some(u), Some(p))
        }
        BuiltProblem::Synthetic(_) => (None, None, None),
    };
    let report = ExperimentReport { config_hash: hash, hindsight, records, summaries, cost, unserved, pacing };
    if let Some(dir) = &config.output_dir {
        write_experiment(config, &report, dir)?;
    }
    Ok(report)
}

const FIGURE_METHODS: [(&str, &str); 3] = [("algorithm", "pdomd"), ("hindsight", "hindsight"), ("reac", "reac")];

fn datacenter_figures(
    problem: &DatacenterProblem,
    records: &[(String, u64, RunRecord)],
) -> (FigureSeries, FigureSeries, FigureSeries) {
    let horizon = records.first().map_or(0, |r| r.2.len());
    let mut cost = vec![vec![0.0; 3]; horizon];
    let mut unserved = vec![vec![0.0; 3]; horizon];
    let mut pacing = vec![vec![0.0; 3]; horizon];
    let d = problem.config().dim();
    for (m, (_, method)) in FIGURE_METHODS.iter().enumerate() {
        let runs: Vec<&RunRecord> = records.iter().filter(|r| r.0 == *method).map(|r| &r.2).collect();
        let n = runs.len().max(1) as f64;
        for rec in runs {
            let (mut c, mut u) = (0.0, 0.0);
            let mut mu_sum = vec![0.0; d];
            for (t, s) in rec.slots.iter().enumerate() {
                c += s.f_realized;
                u += s.g_realized.first().copied().unwrap_or(0.0).max(0.0);
                crate::linalg::axpy(1.0, &s.mu, &mut mu_sum);
                let k = (t + 1) as f64;
                cost[t][m] += c / n;
                unserved[t][m] += u / k / n;
                let avg: Vec<f64> = mu_sum.iter().map(|x| x / k).collect();
                pacing[t][m] += problem.expected_pacing_violation(&avg) / n;
            }
        }
    }
    let methods: Vec<String> = FIGURE_METHODS.iter().map(|m| m.0.to_string()).collect();
    let series = |values| FigureSeries { methods: methods.clone(), values };
    (series(cost), series(unserved), series(pacing))
}

fn write_figure(path: &Path, hash: &str, series: &FigureSeries) -> Result<()> {
    let mut file = std::io::BufWriter::new(std::fs::File::create(path)?);
    writeln!(file, "# config_hash={hash}")?;
    let mut csv = csv::Writer::from_writer(file);
    let mut header = vec!["t".to_string()];
    header.extend(series.methods.iter().cloned());
    csv.write_record(&header)?;
    for (t, row) in series.values.iter().enumerate() {
        let mut rec = vec![t.to_string()];
        rec.extend(row.iter().map(f64::to_string));
        csv.write_record(&rec)?;
    }
    csv.flush()?;
    Ok(())
}

/// Writes `config.json`, per-run record CSVs, `summary.csv` / `summary.json` and the
/// figure CSVs under `dir`.
pub fn write_experiment(config: &ExperimentConfig, report: &ExperimentReport, dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir.join("records"))?;
    let manifest = serde_json::json!({ "config_hash": report.config_hash, "config": config });
    std::fs::write(dir.join("config.json"), serde_json::to_string_pretty(&manifest)? + "\n")?;
    for (method, seed, rec) in &report.records {
        export_record(rec, ExportFormat::Csv, dir.join("records").join(format!("{method}_seed{seed}.csv")))?;
    }
    export_summaries(&report.summaries, ExportFormat::Csv, dir.join("summary.csv"))?;
    export_summaries(&report.summaries, ExportFormat::Json, dir.join("summary.json"))?;
    write_hindsight(dir, &report.config_hash, &report.hindsight)?;
    for (name, series) in [("fig_cost.csv", &report.cost), ("fig_unserved.csv", &report.unserved), ("fig_pacing.csv", &report.pacing)] {
        if let Some(series) = series {
            write_figure(&dir.join(name), &report.config_hash, series)?;
        }
    }
    Ok(())
}

fn write_hindsight(dir: &Path, hash: &str, sol: &HindsightSolution) -> Result<()> {
    let json = serde_json::json!({ "config_hash": hash, "hindsight": sol });
    std::fs::write(dir.join("hindsight.json"), serde_json::to_string_pretty(&json)? + "\n")?;
    Ok(())
}

/// Seed-averaged metrics at one horizon of a sweep.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RatePoint {
    #[serde(rename = "T")]
    pub horizon: usize,
    pub regret_mean: f64,
    pub regret_stderr: f64,
    pub ineq_violation_mean: f64,
    pub eq_violation_mean: f64,
    pub dual_ratio_mean: f64,
    pub dual_ratio_max: f64,
    /// Per-seed cumulative regret, inequality and equality violation.
    #[serde(skip)]
    pub per_seed: Vec<[f64; 3]>,
}

/// Log-log least-squares slope with a seed-bootstrap interval.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SlopeFit {
    /// `None` when some mean is not positive, so the log-log fit is undefined.
    pub slope: Option<f64>,
    pub ci_low: Option<f64>,
    pub ci_high: Option<f64>,
    pub degenerate: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RateReport {
    pub config_hash: String,
    pub points: Vec<RatePoint>,
    /// Slope of mean cumulative regret against T.
    pub regret: SlopeFit,
    /// Slope of `T·‖[(1/T)Σḡ]₊‖` against T.
    pub ineq_violation: SlopeFit,
    /// Slope of `T·‖(1/T)Σh̄ − b‖` against T.
    pub eq_violation: SlopeFit,
}

/// Ordinary least-squares slope of `y` on `x`.
pub fn ols_slope(x: &[f64], y: &[f64]) -> f64 {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = x.iter().map(|a| (a - mx) * (a - mx)).sum();
    sxy / sxx
}

const BOOTSTRAP_RESAMPLES: usize = 1000;

fn log_log_fit(horizons: &[usize], samples: &[Vec<f64>], scale_by_t: bool) -> SlopeFit {
    let x: Vec<f64> = horizons.iter().map(|t| (*t as f64).ln()).collect();
    let fit = |means: &[f64]| -> Option<f64> {
        if means.iter().any(|m| !(*m > 1e-12)) {
            return None;
        }
        let y: Vec<f64> = means
            .iter()
            .zip(horizons)
            .map(|(m, t)| if scale_by_t { (m * *t as f64).ln() } else { m.ln() })
            .collect();
        Some(ols_slope(&x, &y))
    };
    let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
    let slope = fit(&samples.iter().map(|s| mean(s)).collect::<Vec<_>>());
    let mut rng = crate::problems::SlotRng::seed_from_u64(0);
    let mut boot = Vec::with_capacity(BOOTSTRAP_RESAMPLES);
    for _ in 0..BOOTSTRAP_RESAMPLES {
        let means: Vec<f64> = samples
            .iter()
            .map(|s| (0..s.len()).map(|_| s[rng.random_range(0..s.len())]).sum::<f64>() / s.len() as f64)
            .collect();
        if let Some(b) = fit(&means) {
            boot.push(b);
        }
    }
    boot.sort_by(f64::total_cmp);
    let pct = |q: f64| boot.get(((boot.len() as f64 - 1.0) * q).round() as usize).copied();
    let ci = if slope.is_some() && !boot.is_empty() { (pct(0.025), pct(0.975)) } else { (None, None) };
    SlopeFit { degenerate: slope.is_none(), slope, ci_low: ci.0, ci_high: ci.1 }
}

/// Runs every seed at every horizon of `sweep_T` and fits log-log rates.
pub fn sweep_rates(config: &ExperimentConfig) -> Result<RateReport> {
    config.validate()?;
    let horizons = config.sweep_horizons.clone().unwrap_or_default();
    if horizons.len() < 2 {
        return Err(Error::Config {
            path: "sweep_T".into(),
            message: "a rate fit needs at least two horizons".into(),
        });
    }
    let max_t = *horizons.iter().max().expect("nonempty");
    let built = build_problem(config, max_t)?;
    let problem = built.as_dyn();
    let geometry = config.geometry();

    let mut points = Vec::with_capacity(horizons.len());
    for &t in &horizons {
        let params = config.params_for(t)?;
        let hindsight = hindsight_optimum(problem, 0, t)?;
        let rows = config
            .seeds
            .par_iter()
            .map(|&seed| {
                let rec = run(problem, t, &params, config.variant, geometry, seed)?;
                let m = compute_metrics(&rec, &hindsight.mu, problem)?;
                Ok([
                    m.expected_regret.unwrap_or(m.realized_regret),
                    m.ineq_violation.unwrap_or(m.realized_ineq_violation),
                    m.eq_violation.unwrap_or(m.realized_eq_violation),
                    m.dual_norm_ratio,
                ])
            })
            .collect::<Result<Vec<[f64; 4]>>>()?;
        let col = |i: usize| rows.iter().map(|r| r[i]).collect::<Vec<f64>>();
        let (regret_mean, regret_stderr) = mean_and_stderr(&col(0));
        points.push(RatePoint {
            horizon: t,
            regret_mean,
            regret_stderr,
            ineq_violation_mean: mean_and_stderr(&col(1)).0,
            eq_violation_mean: mean_and_stderr(&col(2)).0,
            dual_ratio_mean: mean_and_stderr(&col(3)).0,
            dual_ratio_max: col(3).into_iter().fold(0.0, f64::max),
            per_seed: rows.iter().map(|r| [r[0], r[1], r[2]]).collect(),
        });
    }
    let samples = |i: usize| points.iter().map(|p| p.per_seed.iter().map(|r| r[i]).collect()).collect::<Vec<Vec<f64>>>();
    let report = RateReport {
        config_hash: config.hash(),
        regret: log_log_fit(&horizons, &samples(0), false),
        ineq_violation: log_log_fit(&horizons, &samples(1), true),
        eq_violation: log_log_fit(&horizons, &samples(2), true),
        points,
    };
    if let Some(dir) = &config.output_dir {
        write_rate_report(&report, dir)?;
    }
    Ok(report)
}

/// Writes `rates.csv` (one row per horizon) and `rate_fit.json`.
pub fn write_rate_report(report: &RateReport, dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    let mut file = std::io::BufWriter::new(std::fs::File::create(dir.join("rates.csv"))?);
    writeln!(file, "# config_hash={}", report.config_hash)?;
    let mut csv = csv::Writer::from_writer(file);
    csv.write_record(["T", "regret_mean", "regret_stderr", "ineq_violation_mean", "eq_violation_mean", "dual_ratio_mean", "dual_ratio_max"])?;
    for p in &report.points {
        csv.write_record([
            p.horizon.to_string(),
            p.regret_mean.to_string(),
            p.regret_stderr.to_string(),
            p.ineq_violation_mean.to_string(),
            p.eq_violation_mean.to_string(),
            p.dual_ratio_mean.to_string(),
            p.dual_ratio_max.to_string(),
        ])?;
    }
    csv.flush()?;
    std::fs::write(dir.join("rate_fit.json"), serde_json::to_string_pretty(report)? + "\n")?;
    Ok(())
}
