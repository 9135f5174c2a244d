//! Run records, regret and violation metrics, drift-plus-penalty audits, and
//! CSV/JSON export.

use std::io::{BufRead, BufReader, Read, Write};
use std::path::Path;

use rand::SeedableRng;
use serde::{Deserialize, Serialize};

use crate::engine::{
    update_equality_multiplier, update_inequality_multiplier, AlgorithmParams, DualState, Variant,
};
use crate::error::{check_dim, Error, Result};
use crate::geometry::Geometry;
use crate::linalg::{dot, norm2, sub};
use crate::problems::{draw_slot, Problem, SlotDraw, SlotRng};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunHeader {
    pub problem_id: String,
    /// `pdomd`, or the name of a baseline / fixed policy.
    pub method: String,
    pub variant: Option<Variant>,
    pub geometry: Option<Geometry>,
    pub params: Option<AlgorithmParams>,
    pub seed: u64,
    pub config_hash: Option<String>,
    pub wall_time_secs: f64,
    pub dim: usize,
    pub num_ineq: usize,
    pub num_eq: usize,
}

/// One slot of a trajectory. Dual norms are those after the slot's update, i.e.
/// `‖Q(t+1)‖₂` and `‖H(t+1)‖₂`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SlotRecord {
    pub t: usize,
    pub mu: Vec<f64>,
    pub f_realized: f64,
    pub g_realized: Vec<f64>,
    /// `⟨hⱼᵗ, μᵗ⟩` (not yet shifted by the target).
    pub h_realized: Vec<f64>,
    pub q_norm: f64,
    pub h_norm: f64,
    pub drift: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub header: RunHeader,
    pub slots: Vec<SlotRecord>,
}

impl RunRecord {
    pub fn len(&self) -> usize {
        self.slots.len()
    }

    pub fn is_empty(&self) -> bool {
        self.slots.is_empty()
    }

    /// `maxₜ ‖(Q(t), H(t))‖₂`.
    pub fn max_dual_norm(&self) -> f64 {
        self.slots.iter().map(|s| s.q_norm.hypot(s.h_norm)).fold(0.0, f64::max)
    }

    pub fn cumulative_drift(&self) -> f64 {
        self.slots.iter().map(|s| s.drift).sum()
    }

    /// `(1/T)Σ μᵗ`.
    pub fn average_decision(&self) -> Vec<f64> {
        let mut avg = vec![0.0; self.header.dim];
        for s in &self.slots {
            crate::linalg::axpy(1.0, &s.mu, &mut avg);
        }
        let n = self.slots.len().max(1) as f64;
        avg.iter_mut().for_each(|x| *x /= n);
        avg
    }
}

/// Regret and violation metrics of one run against a fixed comparator.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsSummary {
    pub horizon: usize,
    /// `Σₜ fᵗ(μᵗ) − fᵗ(μ*)`.
    pub realized_regret: f64,
    /// `Σₜ f̄ᵗ(μᵗ) − f̄ᵗ(μ*)`.
    pub expected_regret: Option<f64>,
    /// `‖[(1/T)Σ ḡ(μᵗ)]₊‖₂`.
    pub ineq_violation: Option<f64>,
    /// `‖(1/T)Σ [ḡ(μᵗ)]₊‖₂`.
    pub ineq_violation_clip_each: Option<f64>,
    /// `‖(1/T)Σ h̄(μᵗ) − b‖₂`.
    pub eq_violation: Option<f64>,
    pub realized_ineq_violation: f64,
    pub realized_ineq_violation_clip_each: f64,
    pub realized_eq_violation: f64,
    pub max_dual_norm: f64,
    /// `max_dual_norm / √T`.
    pub dual_norm_ratio: f64,
}

/// Accumulates regret and violation slot by slot, alongside a run.
#[derive(Debug, Clone)]
pub struct MetricsAccumulator {
    comparator: Vec<f64>,
    targets: Vec<f64>,
    slots: usize,
    realized_regret: f64,
    expected_regret: Option<f64>,
    ineq_sum: Option<Vec<f64>>,
    ineq_clipped_sum: Option<Vec<f64>>,
    eq_sum: Option<Vec<f64>>,
    realized_ineq_sum: Vec<f64>,
    realized_ineq_clipped_sum: Vec<f64>,
    realized_eq_sum: Vec<f64>,
    max_dual_norm: f64,
}

impl MetricsAccumulator {
    pub fn new(comparator: Vec<f64>, num_ineq: usize, targets: Vec<f64>) -> Self {
        let m = targets.len();
        Self {
            comparator,
            targets,
            slots: 0,
            realized_regret: 0.0,
            expected_regret: Some(0.0),
            ineq_sum: Some(vec![0.0; num_ineq]),
            ineq_clipped_sum: Some(vec![0.0; num_ineq]),
            eq_sum: Some(vec![0.0; m]),
            realized_ineq_sum: vec![0.0; num_ineq],
            realized_ineq_clipped_sum: vec![0.0; num_ineq],
            realized_eq_sum: vec![0.0; m],
            max_dual_norm: 0.0,
        }
    }

    /// Adds slot `t` played at `mu`, with realized functions `draw` and, when known,
    /// the slot's means.
    pub fn push(&mut self, draw: &SlotDraw, mean: Option<&SlotDraw>, mu: &[f64], dual_norm: f64) {
        self.slots += 1;
        self.realized_regret += draw.objective.value(mu) - draw.objective.value(&self.comparator);
        accumulate(&mut self.realized_ineq_sum, &mut self.realized_ineq_clipped_sum, &draw.inequality_values(mu));
        crate::linalg::axpy(1.0, &draw.equality_values(mu), &mut self.realized_eq_sum);
        self.max_dual_norm = self.max_dual_norm.max(dual_norm);
        match mean {
            Some(mean) => {
                if let Some(r) = self.expected_regret.as_mut() {
                    *r += mean.objective.value(mu) - mean.objective.value(&self.comparator);
                }
                if let (Some(s), Some(c)) = (self.ineq_sum.as_mut(), self.ineq_clipped_sum.as_mut()) {
                    accumulate(s, c, &mean.inequality_values(mu));
                }
                if let Some(e) = self.eq_sum.as_mut() {
                    crate::linalg::axpy(1.0, &mean.equality_values(mu), e);
                }
            }
            None => {
                self.expected_regret = None;
                self.ineq_sum = None;
                self.ineq_clipped_sum = None;
                self.eq_sum = None;
            }
        }
    }

    pub fn finish(&self) -> MetricsSummary {
        let n = self.slots.max(1) as f64;
        let clip_avg = |s: &[f64]| s.iter().map(|x| (x / n).max(0.0).powi(2)).sum::<f64>().sqrt();
        let avg_norm = |s: &[f64]| s.iter().map(|x| (x / n).powi(2)).sum::<f64>().sqrt();
        let eq_norm = |s: &[f64]| {
            if self.slots == 0 {
                return 0.0;
            }
            s.iter().zip(&self.targets).map(|(x, b)| (x / n - b).powi(2)).sum::<f64>().sqrt()
        };
        MetricsSummary {
            horizon: self.slots,
            realized_regret: self.realized_regret,
            expected_regret: self.expected_regret,
            ineq_violation: self.ineq_sum.as_deref().map(clip_avg),
            ineq_violation_clip_each: self.ineq_clipped_sum.as_deref().map(avg_norm),
            eq_violation: self.eq_sum.as_deref().map(eq_norm),
            realized_ineq_violation: clip_avg(&self.realized_ineq_sum),
            realized_ineq_violation_clip_each: avg_norm(&self.realized_ineq_clipped_sum),
            realized_eq_violation: eq_norm(&self.realized_eq_sum),
            max_dual_norm: self.max_dual_norm,
            dual_norm_ratio: if self.slots == 0 { 0.0 } else { self.max_dual_norm / n.sqrt() },
        }
    }
}

fn accumulate(sum: &mut [f64], clipped: &mut [f64], values: &[f64]) {
    for ((s, c), v) in sum.iter_mut().zip(clipped.iter_mut()).zip(values) {
        *s += v;
        *c += v.max(0.0);
    }
}

/// Metrics of `record` against the fixed comparator `comparator`.
///
/// Realized quantities at the played decisions come from the record; the comparator's
/// realized values are replayed from the record's seed. Expected quantities are
/// `None` when the problem has no exact means.
pub fn compute_metrics(record: &RunRecord, comparator: &[f64], problem: &dyn Problem) -> Result<MetricsSummary> {
    check_dim(problem.dim(), comparator.len())?;
    check_dim(problem.dim(), record.header.dim)?;
    let n = record.len().max(1) as f64;
    let l = problem.num_inequalities();
    let b = problem.targets();
    let mut acc = MetricsAccumulator::new(comparator.to_vec(), l, b.to_vec());
    let mut realized_regret = 0.0;
    let mut realized_ineq = vec![0.0; l];
    let mut realized_ineq_clipped = vec![0.0; l];
    let mut realized_eq = vec![0.0; b.len()];
    for s in &record.slots {
        let draw = draw_slot(problem, record.header.seed, s.t);
        realized_regret += s.f_realized - draw.objective.value(comparator);
        accumulate(&mut realized_ineq, &mut realized_ineq_clipped, &s.g_realized);
        crate::linalg::axpy(1.0, &s.h_realized, &mut realized_eq);
        acc.push(&draw, problem.mean(s.t).as_ref(), &s.mu, s.q_norm.hypot(s.h_norm));
    }
    let mut summary = acc.finish();
    summary.realized_regret = realized_regret;
    summary.realized_ineq_violation =
        realized_ineq.iter().map(|x| (x / n).max(0.0).powi(2)).sum::<f64>().sqrt();
    summary.realized_ineq_violation_clip_each =
        realized_ineq_clipped.iter().map(|x| (x / n).powi(2)).sum::<f64>().sqrt();
    summary.realized_eq_violation = if record.is_empty() {
        0.0
    } else {
        realized_eq.iter().zip(b).map(|(x, b)| (x / n - b).powi(2)).sum::<f64>().sqrt()
    };
    Ok(summary)
}

/// Mean and standard error of the mean.
pub fn mean_and_stderr(values: &[f64]) -> (f64, f64) {
    let n = values.len();
    if n == 0 {
        return (f64::NAN, f64::NAN);
    }
    let mean = values.iter().sum::<f64>() / n as f64;
    if n == 1 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
    (mean, (var / n as f64).sqrt())
}

/// Result of replaying a run against the drift-plus-penalty inequality.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DppAudit {
    /// Largest `lhs − rhs` over the sampled (slot, comparator) pairs; `≤ 0` when the
    /// inequality holds.
    pub worst_residual: f64,
    pub worst_slot: Option<usize>,
    pub checks: usize,
    /// Smallest slack of `V⟨∇f, μᵗ − μ^{t−1}⟩ + αD(μᵗ, μ^{t−1}) ≥ −V²D₁²/(2αβ)` over all slots.
    pub lower_bound_slack: f64,
    /// `|Σₜ Δ(t) − (‖Q(T)‖² + ‖H(T)‖²)/2|` relative to `max(1, ‖(Q(T), H(T))‖²/2)`.
    pub telescoping_error: f64,
    /// The additive constant used on the right-hand side.
    pub constant: f64,
}

/// Inputs of one drift-plus-penalty check at slot `t ≥ 1`.
pub struct DppTerms<'a> {
    pub params: &'a AlgorithmParams,
    pub geometry: Geometry,
    /// Realized functions of slot `t − 1`.
    pub previous: &'a SlotDraw,
    pub mu_prev: &'a [f64],
    pub mu: &'a [f64],
    /// Multipliers `Q(t), H(t)` before the slot's update.
    pub duals: &'a DualState,
    pub targets: &'a [f64],
    pub drift: f64,
    pub constant: f64,
}

/// `lhs − rhs` of the drift-plus-penalty inequality at comparator `z`.
pub fn dpp_residual(terms: &DppTerms<'_>, z: &[f64]) -> Result<f64> {
    let p = terms.params;
    let prev = terms.previous;
    let grad = prev.objective.gradient(terms.mu_prev);
    let geom = terms.geometry;
    let lhs = p.v * dot(&grad, &sub(terms.mu, terms.mu_prev))
        + terms.drift
        + p.alpha * geom.divergence(terms.mu, terms.mu_prev)?;
    let mut rhs = p.v * (prev.objective.value(z) - prev.objective.value(terms.mu_prev));
    rhs += dot(&terms.duals.q, &prev.inequality_values(z));
    for ((h, row), b) in terms.duals.h.iter().zip(&prev.equalities).zip(terms.targets) {
        rhs += h * (dot(row, z) - b);
    }
    rhs += p.alpha * (geom.divergence(z, terms.mu_prev)? - geom.divergence(z, terms.mu)?);
    rhs += terms.constant;
    Ok(lhs - rhs)
}

/// Replays `record` on `problem` and checks the drift-plus-penalty inequality on
/// `n_samples` random (slot, comparator) pairs, plus the per-slot lower bound and the
/// telescoping identity.
///
/// The multipliers are rebuilt from the recorded decisions and replayed draws; a
/// disagreement with the recorded dual norms is a [`Error::ReplayMismatch`].
pub fn dpp_audit(record: &RunRecord, problem: &dyn Problem, n_samples: usize, audit_seed: u64) -> Result<DppAudit> {
    let header = &record.header;
    let (Some(params), Some(geometry)) = (header.params.as_ref(), header.geometry) else {
        return Err(Error::Unsupported(format!("record of {} has no solver parameters", header.method)));
    };
    if header.variant != Some(Variant::General) {
        return Err(Error::Unsupported("the audit covers the general variant only".into()));
    }
    let consts = problem.constants(geometry);
    let constant = consts.dpp_constant().ok_or_else(|| {
        Error::Unsupported("the divergence is unbounded on this set, so the audit has no constant".into())
    })?;
    let lower = -params.v * params.v * consts.d1 * consts.d1 / (2.0 * params.alpha * consts.beta);
    let targets = problem.targets();
    let set = problem.decision_set();

    let mut rng = SlotRng::seed_from_u64(audit_seed);
    let mut samples: Vec<(usize, Vec<f64>)> = if record.len() > 1 {
        (0..n_samples)
            .map(|_| {
                let t = rand::Rng::random_range(&mut rng, 1..record.len());
                (t, set.sample_uniform(&mut rng))
            })
            .collect()
    } else {
        Vec::new()
    };
    samples.sort_by_key(|s| s.0);

    let mut duals = DualState::zeros(problem.num_inequalities(), problem.num_equalities());
    let mut audit = DppAudit {
        worst_residual: f64::NEG_INFINITY,
        worst_slot: None,
        checks: 0,
        lower_bound_slack: f64::INFINITY,
        telescoping_error: 0.0,
        constant,
    };
    let mut next = 0;
    let mut previous: Option<SlotDraw> = None;
    for (t, slot) in record.slots.iter().enumerate() {
        if slot.t != t {
            return Err(Error::ReplayMismatch { slot: t, detail: format!("record has slot index {}", slot.t) });
        }
        let draw = draw_slot(problem, header.seed, t);
        if let Some(prev) = previous.as_ref() {
            let mu_prev = &record.slots[t - 1].mu;
            let grad = prev.objective.gradient(mu_prev);
            let penalty = params.v * dot(&grad, &sub(&slot.mu, mu_prev))
                + params.alpha * geometry.divergence(&slot.mu, mu_prev)?;
            audit.lower_bound_slack = audit.lower_bound_slack.min(penalty - lower);

            let terms = DppTerms {
                params,
                geometry,
                previous: prev,
                mu_prev,
                mu: &slot.mu,
                duals: &duals,
                targets,
                drift: slot.drift,
                constant,
            };
            while next < samples.len() && samples[next].0 == t {
                let r = dpp_residual(&terms, &samples[next].1)?;
                audit.checks += 1;
                if r > audit.worst_residual {
                    audit.worst_residual = r;
                    audit.worst_slot = Some(t);
                }
                next += 1;
            }

            let g = prev.inequality_values(mu_prev);
            for (i, q) in duals.q.iter_mut().enumerate() {
                *q = update_inequality_multiplier(*q, g[i], &prev.inequalities[i].gradient(mu_prev), &slot.mu, mu_prev);
            }
            for (j, h) in duals.h.iter_mut().enumerate() {
                *h = update_equality_multiplier(*h, &prev.equalities[j], &slot.mu, targets[j]);
            }
        }
        for (name, recorded, replayed) in [("Q", slot.q_norm, duals.q_norm()), ("H", slot.h_norm, duals.h_norm())] {
            if (recorded - replayed).abs() > 1e-9 * replayed.abs().max(1.0) {
                return Err(Error::ReplayMismatch {
                    slot: t,
                    detail: format!("‖{name}‖ recorded {recorded}, replayed {replayed}"),
                });
            }
        }
        previous = Some(draw);
    }
    let final_lyapunov = duals.lyapunov();
    audit.telescoping_error = (record.cumulative_drift() - final_lyapunov).abs() / final_lyapunov.max(1.0);
    if audit.checks == 0 {
        audit.worst_residual = 0.0;
    }
    if record.len() < 2 {
        audit.lower_bound_slack = 0.0;
    }
    Ok(audit)
}

/// File format of exported records and summaries.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExportFormat {
    Csv,
    Json,
}

impl ExportFormat {
    pub fn from_path(path: &Path) -> Option<Self> {
        match path.extension()?.to_str()? {
            "csv" => Some(Self::Csv),
            "json" => Some(Self::Json),
            _ => None,
        }
    }
}

const HEADER_PREFIX: &str = "# run ";

/// Column names of the record CSV.
pub fn record_columns(dim: usize, num_ineq: usize, num_eq: usize) -> Vec<String> {
    let mut cols = vec!["t".to_string()];
    cols.extend((0..dim).map(|i| format!("mu_{i}")));
    cols.push("f_realized".into());
    cols.extend((0..num_ineq).map(|i| format!("g_{i}")));
    cols.extend((0..num_eq).map(|j| format!("h_{j}")));
    cols.extend(["q_norm", "h_norm", "drift"].map(String::from));
    cols
}

/// Writes the record as CSV: a `# run {json header}` comment line, the column header,
/// then one row per slot. Floats use the shortest representation that round-trips.
pub fn write_record_csv<W: Write>(record: &RunRecord, mut writer: W) -> Result<()> {
    let h = &record.header;
    writeln!(writer, "{HEADER_PREFIX}{}", serde_json::to_string(h)?)?;
    let mut csv = csv::Writer::from_writer(writer);
    csv.write_record(record_columns(h.dim, h.num_ineq, h.num_eq))?;
    for s in &record.slots {
        let mut row = Vec::with_capacity(h.dim + h.num_ineq + h.num_eq + 5);
        row.push(s.t.to_string());
        row.extend(s.mu.iter().map(f64::to_string));
        row.push(s.f_realized.to_string());
        row.extend(s.g_realized.iter().map(f64::to_string));
        row.extend(s.h_realized.iter().map(f64::to_string));
        row.extend([s.q_norm, s.h_norm, s.drift].iter().map(f64::to_string));
        csv.write_record(&row)?;
    }
    csv.flush()?;
    Ok(())
}

pub fn read_record_csv<R: Read>(reader: R) -> Result<RunRecord> {
    let mut reader = BufReader::new(reader);
    let mut first = String::new();
    reader.read_line(&mut first)?;
    let header: RunHeader = serde_json::from_str(
        first
            .trim_end()
            .strip_prefix(HEADER_PREFIX)
            .ok_or_else(|| Error::Trace("record CSV lacks its \"# run\" header line".into()))?,
    )?;
    let mut csv = csv::Reader::from_reader(reader);
    let expected = record_columns(header.dim, header.num_ineq, header.num_eq);
    if csv.headers()?.iter().ne(expected.iter().map(String::as_str)) {
        return Err(Error::Trace("record CSV columns do not match its header".into()));
    }
    let (d, l, m) = (header.dim, header.num_ineq, header.num_eq);
    let mut slots = Vec::new();
    for row in csv.records() {
        let row = row?;
        let num = |i: usize| -> Result<f64> {
            row[i].parse().map_err(|_| Error::Trace(format!("bad number \"{}\"", &row[i])))
        };
        let t: usize = row[0].parse().map_err(|_| Error::Trace(format!("bad slot \"{}\"", &row[0])))?;
        let range = |a: usize, n: usize| (a..a + n).map(num).collect::<Result<Vec<f64>>>();
        slots.push(SlotRecord {
            t,
            mu: range(1, d)?,
            f_realized: num(1 + d)?,
            g_realized: range(2 + d, l)?,
            h_realized: range(2 + d + l, m)?,
            q_norm: num(2 + d + l + m)?,
            h_norm: num(3 + d + l + m)?,
            drift: num(4 + d + l + m)?,
        });
    }
    Ok(RunRecord { header, slots })
}

pub fn export_record(record: &RunRecord, format: ExportFormat, path: impl AsRef<Path>) -> Result<()> {
    let file = std::io::BufWriter::new(std::fs::File::create(path.as_ref())?);
    match format {
        ExportFormat::Csv => write_record_csv(record, file),
        ExportFormat::Json => Ok(serde_json::to_writer(file, record)?),
    }
}

pub fn import_record(path: impl AsRef<Path>, format: ExportFormat) -> Result<RunRecord> {
    let file = BufReader::new(std::fs::File::open(path.as_ref())?);
    match format {
        ExportFormat::Csv => read_record_csv(file),
        ExportFormat::Json => Ok(serde_json::from_reader(file)?),
    }
}

/// Writes labelled summaries, one per row (CSV) or as a JSON array.
pub fn export_summaries(rows: &[(String, MetricsSummary)], format: ExportFormat, path: impl AsRef<Path>) -> Result<()> {
    let mut file = std::io::BufWriter::new(std::fs::File::create(path.as_ref())?);
    match format {
        ExportFormat::Json => {
            #[derive(Serialize)]
            struct Row<'a> {
                label: &'a str,
                #[serde(flatten)]
                summary: &'a MetricsSummary,
            }
            let rows: Vec<Row<'_>> = rows.iter().map(|(label, summary)| Row { label, summary }).collect();
            serde_json::to_writer_pretty(&mut file, &rows)?;
            writeln!(file)?;
        }
        ExportFormat::Csv => {
            let mut csv = csv::Writer::from_writer(file);
            csv.write_record([
                "label",
                "horizon",
                "realized_regret",
                "expected_regret",
                "ineq_violation",
                "ineq_violation_clip_each",
                "eq_violation",
                "realized_ineq_violation",
                "realized_ineq_violation_clip_each",
                "realized_eq_violation",
                "max_dual_norm",
                "dual_norm_ratio",
            ])?;
            let opt = |x: Option<f64>| x.map_or_else(String::new, |v| v.to_string());
            for (label, s) in rows {
                csv.write_record([
                    label.clone(),
                    s.horizon.to_string(),
                    s.realized_regret.to_string(),
                    opt(s.expected_regret),
                    opt(s.ineq_violation),
                    opt(s.ineq_violation_clip_each),
                    opt(s.eq_violation),
                    s.realized_ineq_violation.to_string(),
                    s.realized_ineq_violation_clip_each.to_string(),
                    s.realized_eq_violation.to_string(),
                    s.max_dual_norm.to_string(),
                    s.dual_norm_ratio.to_string(),
                ])?;
            }
            csv.flush()?;
        }
    }
    Ok(())
}

/// `‖v‖₂` of the positive part; shorthand used by reports.
pub fn clipped_norm(v: &[f64]) -> f64 {
    norm2(&v.iter().map(|x| x.max(0.0)).collect::<Vec<_>>())
}
