//! The five experiments. Each returns an in-memory report; `write` turns it
//! into CSV (and optionally SVG) files in a directory.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use rayon::prelude::*;

use super::fit::{fit_decay, median, spearman, DecayFit, DEFAULT_FAILURE_THRESHOLD};
use super::io::{fmt_f64, fmt_opt, Table};
use super::plot::{Plot, Style};
use super::{Experiment, ExperimentSpec};
use crate::adapt::{adapt_run, vqe_run, AdaptConfig, AdaptTermination, AdaptTrace};
use crate::ansatz::Ansatz;
use crate::error::{Error, Result};
use crate::losses::{grad_infinity_norm, pool_gradients, LossContext, LossKind};
use crate::model::ProblemInstance;
use crate::pauli::{pool_klocal, OperatorPool};
use crate::states::fidelity;

#[derive(Debug, Clone, PartialEq)]
pub struct TrialFailure {
    pub loss: Option<LossKind>,
    pub n: usize,
    pub trial: Option<u64>,
    pub error: String,
    pub exit_code: i32,
}

impl TrialFailure {
    fn new(loss: Option<LossKind>, n: usize, trial: Option<u64>, err: &Error) -> Self {
        let f = Self {
            loss,
            n,
            trial,
            error: err.to_string(),
            exit_code: err.exit_code(),
        };
        log::error!("{}", f.describe());
        f
    }

    pub fn describe(&self) -> String {
        let loss = self.loss.map(|l| l.name()).unwrap_or("-");
        let trial = self.trial.map(|t| t.to_string()).unwrap_or_else(|| "-".into());
        format!("loss={loss} n={} trial={trial}: {}", self.n, self.error)
    }
}

/// Files written and per-trial errors of one experiment.
#[derive(Debug, Clone, Default)]
pub struct RunOutcome {
    pub files: Vec<PathBuf>,
    pub failures: Vec<TrialFailure>,
}

fn pool_for(n: usize) -> Result<OperatorPool> {
    pool_klocal(2 * n, 2)
}

fn adapt_config(spec: &ExperimentSpec, pool: OperatorPool, kind: LossKind) -> AdaptConfig {
    let mut cfg = AdaptConfig::new(pool, kind).with_epsilon(spec.epsilon);
    if let Some(m) = spec.max_params {
        cfg.max_params = m;
    }
    cfg
}

fn write_table(dir: &Path, name: &str, table: &Table, files: &mut Vec<PathBuf>) -> Result<()> {
    let path = dir.join(name);
    table.write(&path)?;
    files.push(path);
    Ok(())
}

fn write_plot(dir: &Path, name: &str, plot: &Plot, files: &mut Vec<PathBuf>) -> Result<()> {
    let path = dir.join(name);
    fs::write(&path, plot.render())?;
    files.push(path);
    Ok(())
}

// ---------------------------------------------------------------- loss curves

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Method {
    Adapt,
    Vqe,
}

impl Method {
    pub fn name(self) -> &'static str {
        match self {
            Method::Adapt => "adapt",
            Method::Vqe => "vqe",
        }
    }
}

#[derive(Debug, Clone)]
pub struct CurveRun {
    pub loss: LossKind,
    pub method: Method,
    pub trace: AdaptTrace,
    /// Subtracted from reported losses: the loss at the target for Gibbs, zero otherwise.
    pub shift: f64,
}

impl CurveRun {
    pub fn params(&self) -> usize {
        self.trace.n_params()
    }

    pub fn final_loss(&self) -> f64 {
        self.trace.final_record().loss - self.shift
    }

    pub fn final_infidelity(&self) -> f64 {
        self.trace.final_record().infidelity
    }
}

#[derive(Debug, Clone)]
pub struct LossCurvesReport {
    pub n: usize,
    pub runs: Vec<CurveRun>,
    pub failures: Vec<TrialFailure>,
}

pub fn run_loss_curves(spec: &ExperimentSpec) -> Result<LossCurvesReport> {
    spec.validate()?;
    let n = spec.n_range[0];
    let inst = ProblemInstance::generate(n, spec.beta, spec.base_seed, 0)?;
    let pool = pool_for(n)?;
    let jobs: Vec<(LossKind, Method)> = spec
        .losses
        .iter()
        .flat_map(|&l| [(l, Method::Adapt), (l, Method::Vqe)])
        .collect();
    let results = spec.install(|| {
        jobs.par_iter()
            .map(|&(loss, method)| -> Result<CurveRun> {
                let shift = LossContext::from_instance(loss, &inst)?.minimum_value();
                let trace = match method {
                    Method::Adapt => adapt_run(&inst, &adapt_config(spec, pool.clone(), loss))?,
                    Method::Vqe => vqe_run(&inst, loss, &pool)?,
                };
                Ok(CurveRun {
                    loss,
                    method,
                    trace,
                    shift,
                })
            })
            .collect::<Vec<_>>()
    })?;
    let mut runs = Vec::new();
    let mut failures = Vec::new();
    for ((loss, _), r) in jobs.iter().zip(results) {
        match r {
            Ok(run) => runs.push(run),
            Err(e) => failures.push(TrialFailure::new(Some(*loss), n, Some(0), &e)),
        }
    }
    Ok(LossCurvesReport { n, runs, failures })
}

impl LossCurvesReport {
    pub fn summary_table(&self) -> Table {
        let mut t = Table::new(&[
            "loss",
            "method",
            "params",
            "final_loss",
            "final_infidelity",
            "termination",
            "fevals",
        ]);
        for r in &self.runs {
            t.push(vec![
                r.loss.name().into(),
                r.method.name().into(),
                r.params().to_string(),
                fmt_f64(r.final_loss()),
                fmt_f64(r.final_infidelity()),
                r.trace.termination.name().into(),
                r.trace.final_record().cumulative_fevals.to_string(),
            ]);
        }
        t
    }

    pub fn curves_table(&self) -> Table {
        let mut t = Table::new(&["loss", "method", "fevals", "params", "loss_value"]);
        for r in &self.runs {
            for c in &r.trace.curve {
                t.push(vec![
                    r.loss.name().into(),
                    r.method.name().into(),
                    c.fevals.to_string(),
                    c.params.to_string(),
                    fmt_f64(c.loss - r.shift),
                ]);
            }
        }
        t
    }

    pub fn write(&self, dir: &Path, plot: bool) -> Result<Vec<PathBuf>> {
        let mut files = Vec::new();
        for r in &self.runs {
            let stem = format!("trace_{}_{}", r.loss.name(), r.method.name());
            let csv = dir.join(format!("{stem}.csv"));
            let side = dir.join(format!("{stem}.ansatz"));
            r.trace.save(&csv, &side)?;
            files.push(csv);
            files.push(side);
        }
        write_table(dir, "summary.csv", &self.summary_table(), &mut files)?;
        write_table(dir, "curves.csv", &self.curves_table(), &mut files)?;
        if plot {
            let mut p = Plot::new(
                &format!("loss curves, n = {}", self.n),
                "function evaluations",
                "loss - loss at target",
                true,
            );
            for r in &self.runs {
                let pts = r.trace.curve.iter().map(|c| (c.fevals as f64, c.loss - r.shift)).collect();
                p.add(format!("{} {}", r.loss, r.method.name()), pts, Style::Line);
            }
            write_plot(dir, "loss_curves.svg", &p, &mut files)?;
        }
        Ok(files)
    }
}

// ------------------------------------------------------------------ size scan

#[derive(Debug, Clone, PartialEq)]
pub struct SizeRow {
    pub loss: LossKind,
    pub n: usize,
    pub params: usize,
    pub worst_infidelity: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CellCount {
    pub loss: LossKind,
    pub n: usize,
    pub trials: usize,
    pub failed: usize,
    pub converged: usize,
}

#[derive(Debug, Clone)]
pub struct SizeScanReport {
    pub rows: Vec<SizeRow>,
    pub cells: Vec<CellCount>,
    pub failures: Vec<TrialFailure>,
}

/// Longest-running trial sets the parameter range; shorter trials hold
/// their final infidelity.
pub fn worst_case_curve(traces: &[&AdaptTrace]) -> Vec<f64> {
    let len = traces.iter().map(|t| t.records.len()).max().unwrap_or(0);
    (0..len)
        .map(|p| {
            traces
                .iter()
                .map(|t| t.records[p.min(t.records.len() - 1)].infidelity)
                .fold(f64::NEG_INFINITY, f64::max)
        })
        .collect()
}

type TrialJob = (LossKind, usize, u64);

fn trial_jobs(spec: &ExperimentSpec) -> Vec<TrialJob> {
    let mut jobs = Vec::new();
    for &loss in &spec.losses {
        for &n in &spec.n_range {
            for t in 0..spec.trials as u64 {
                jobs.push((loss, n, t));
            }
        }
    }
    jobs
}

fn run_adapt_trials(spec: &ExperimentSpec, jobs: &[TrialJob]) -> Result<Vec<Result<AdaptTrace>>> {
    let mut pools = BTreeMap::new();
    for &n in &spec.n_range {
        pools.insert(n, pool_for(n)?);
    }
    spec.install(|| {
        jobs.par_iter()
            .map(|&(loss, n, t)| {
                let inst = ProblemInstance::generate(n, spec.beta, spec.base_seed, t)?;
                adapt_run(&inst, &adapt_config(spec, pools[&n].clone(), loss))
            })
            .collect()
    })
}

pub fn run_size_scan(spec: &ExperimentSpec) -> Result<SizeScanReport> {
    spec.validate()?;
    let jobs = trial_jobs(spec);
    let results = run_adapt_trials(spec, &jobs)?;
    let mut cells: BTreeMap<(usize, usize), (Vec<AdaptTrace>, usize)> = BTreeMap::new();
    let mut failures = Vec::new();
    for (&(loss, n, t), r) in jobs.iter().zip(results) {
        let li = spec.losses.iter().position(|&l| l == loss).unwrap();
        let cell = cells.entry((li, n)).or_default();
        match r {
            Ok(trace) => cell.0.push(trace),
            Err(e) => {
                cell.1 += 1;
                failures.push(TrialFailure::new(Some(loss), n, Some(t), &e));
            }
        }
    }
    let mut rows = Vec::new();
    let mut counts = Vec::new();
    for ((li, n), (traces, failed)) in &cells {
        let loss = spec.losses[*li];
        let refs: Vec<&AdaptTrace> = traces.iter().collect();
        for (params, worst) in worst_case_curve(&refs).into_iter().enumerate() {
            rows.push(SizeRow {
                loss,
                n: *n,
                params,
                worst_infidelity: worst,
            });
        }
        counts.push(CellCount {
            loss,
            n: *n,
            trials: traces.len(),
            failed: *failed,
            converged: traces.iter().filter(|t| t.termination == AdaptTermination::Converged).count(),
        });
    }
    Ok(SizeScanReport {
        rows,
        cells: counts,
        failures,
    })
}

impl SizeScanReport {
    pub fn table(&self) -> Table {
        let mut t = Table::new(&["loss", "n", "params", "worst_infidelity"]);
        for r in &self.rows {
            t.push(vec![
                r.loss.name().into(),
                r.n.to_string(),
                r.params.to_string(),
                fmt_f64(r.worst_infidelity),
            ]);
        }
        t
    }

    pub fn cells_table(&self) -> Table {
        let mut t = Table::new(&["loss", "n", "trials", "failed", "converged"]);
        for c in &self.cells {
            t.push(vec![
                c.loss.name().into(),
                c.n.to_string(),
                c.trials.to_string(),
                c.failed.to_string(),
                c.converged.to_string(),
            ]);
        }
        t
    }

    /// Fewest parameters at which the worst infidelity drops below `level`.
    pub fn params_to_reach(&self, loss: LossKind, n: usize, level: f64) -> Option<usize> {
        self.rows
            .iter()
            .filter(|r| r.loss == loss && r.n == n && r.worst_infidelity < level)
            .map(|r| r.params)
            .min()
    }

    pub fn write(&self, dir: &Path, plot: bool) -> Result<Vec<PathBuf>> {
        let mut files = Vec::new();
        write_table(dir, "size_scan.csv", &self.table(), &mut files)?;
        write_table(dir, "size_scan_cells.csv", &self.cells_table(), &mut files)?;
        if plot {
            let mut p = Plot::new("worst-case infidelity", "parameters", "worst infidelity", true);
            for c in &self.cells {
                let pts = self
                    .rows
                    .iter()
                    .filter(|r| r.loss == c.loss && r.n == c.n)
                    .map(|r| (r.params as f64, r.worst_infidelity))
                    .collect();
                p.add(format!("{} n={}", c.loss, c.n), pts, Style::Line);
            }
            write_plot(dir, "size_scan.svg", &p, &mut files)?;
        }
        Ok(files)
    }
}

// --------------------------------------------------- gradient / fidelity scans

#[derive(Debug, Clone, PartialEq)]
pub struct ScanRow {
    pub loss: LossKind,
    pub n: usize,
    pub trial: u64,
    /// Fidelity between the reduced reference and the exact target.
    pub fidelity: f64,
    pub g_inf: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MedianRow {
    pub loss: LossKind,
    pub n: usize,
    pub median_g_inf: f64,
    pub trials: usize,
}

#[derive(Debug, Clone)]
pub struct GradScanReport {
    pub rows: Vec<ScanRow>,
    pub medians: Vec<MedianRow>,
    pub fits: Vec<DecayFit>,
    pub failures: Vec<TrialFailure>,
}

fn initial_scan(spec: &ExperimentSpec) -> Result<(Vec<ScanRow>, Vec<TrialFailure>)> {
    let mut pools = BTreeMap::new();
    for &n in &spec.n_range {
        pools.insert(n, pool_for(n)?);
    }
    let jobs: Vec<(usize, u64)> = spec
        .n_range
        .iter()
        .flat_map(|&n| (0..spec.trials as u64).map(move |t| (n, t)))
        .collect();
    // one instance per (n, trial), shared by all losses
    let per_job = spec.install(|| {
        jobs.par_iter()
            .map(|&(n, t)| -> Result<Vec<Result<ScanRow>>> {
                let inst = ProblemInstance::generate(n, spec.beta, spec.base_seed, t)?;
                let sigma0 = inst.reference_density()?;
                let f = fidelity(&inst.target_exact, &sigma0)?;
                let a = Ansatz::new(inst.reference.clone(), n, n)?;
                Ok(spec
                    .losses
                    .iter()
                    .map(|&loss| {
                        let ctx = LossContext::from_instance(loss, &inst)?;
                        let g = pool_gradients(&ctx, &a, &pools[&n])?;
                        Ok(ScanRow {
                            loss,
                            n,
                            trial: t,
                            fidelity: f,
                            g_inf: grad_infinity_norm(&g.values),
                        })
                    })
                    .collect())
            })
            .collect::<Vec<_>>()
    })?;
    let mut by_loss: Vec<Vec<ScanRow>> = vec![Vec::new(); spec.losses.len()];
    let mut failures = Vec::new();
    for (&(n, t), r) in jobs.iter().zip(per_job) {
        match r {
            Ok(rows) => {
                for (li, row) in rows.into_iter().enumerate() {
                    match row {
                        Ok(row) => by_loss[li].push(row),
                        Err(e) => failures.push(TrialFailure::new(Some(spec.losses[li]), n, Some(t), &e)),
                    }
                }
            }
            Err(e) => failures.push(TrialFailure::new(None, n, Some(t), &e)),
        }
    }
    Ok((by_loss.into_iter().flatten().collect(), failures))
}

/// Per-(loss, n) medians in first-appearance order of losses, ascending n.
pub fn medians_of(rows: &[ScanRow]) -> Vec<MedianRow> {
    let mut order: Vec<LossKind> = Vec::new();
    let mut groups: BTreeMap<(usize, usize), Vec<f64>> = BTreeMap::new();
    for r in rows {
        let li = match order.iter().position(|&l| l == r.loss) {
            Some(i) => i,
            None => {
                order.push(r.loss);
                order.len() - 1
            }
        };
        groups.entry((li, r.n)).or_default().push(r.g_inf);
    }
    groups
        .into_iter()
        .map(|((li, n), v)| MedianRow {
            loss: order[li],
            n,
            median_g_inf: median(&v).expect("group is non-empty"),
            trials: v.len(),
        })
        .collect()
}

/// One decay fit per loss with at least three sizes.
pub fn fits_of(medians: &[MedianRow], threshold: f64) -> Vec<DecayFit> {
    let mut order: Vec<LossKind> = Vec::new();
    for m in medians {
        if !order.contains(&m.loss) {
            order.push(m.loss);
        }
    }
    order
        .into_iter()
        .filter_map(|loss| {
            let pts: Vec<(f64, f64)> = medians
                .iter()
                .filter(|m| m.loss == loss)
                .map(|m| (m.n as f64, m.median_g_inf))
                .collect();
            match fit_decay(&pts, threshold) {
                Ok(f) => Some(f.with_loss(loss)),
                Err(e) => {
                    log::info!("no decay fit for {loss}: {e}");
                    None
                }
            }
        })
        .collect()
}

pub fn run_grad_scan(spec: &ExperimentSpec) -> Result<GradScanReport> {
    spec.validate()?;
    let (rows, failures) = initial_scan(spec)?;
    let medians = medians_of(&rows);
    let fits = fits_of(&medians, DEFAULT_FAILURE_THRESHOLD);
    Ok(GradScanReport {
        rows,
        medians,
        fits,
        failures,
    })
}

pub fn grad_table(rows: &[ScanRow]) -> Table {
    let mut t = Table::new(&["loss", "n", "trial", "g_inf"]);
    for r in rows {
        t.push(vec![r.loss.name().into(), r.n.to_string(), r.trial.to_string(), fmt_f64(r.g_inf)]);
    }
    t
}

pub fn medians_table(medians: &[MedianRow]) -> Table {
    let mut t = Table::new(&["loss", "n", "median_g_inf", "trials"]);
    for m in medians {
        t.push(vec![
            m.loss.name().into(),
            m.n.to_string(),
            fmt_f64(m.median_g_inf),
            m.trials.to_string(),
        ]);
    }
    t
}

pub fn fits_table(fits: &[DecayFit]) -> Table {
    let mut t = Table::new(&["loss", "a", "b", "residual", "predicted_failure_n", "threshold", "points"]);
    for f in fits {
        t.push(vec![
            f.loss_kind.map(|l| l.name()).unwrap_or("").into(),
            fmt_f64(f.a),
            fmt_f64(f.b),
            fmt_f64(f.residual),
            f.predicted_failure_n.map(|n| n.to_string()).unwrap_or_default(),
            fmt_f64(f.threshold),
            f.points.to_string(),
        ]);
    }
    t
}

/// Rows from a CSV carrying `loss`, `n` and `g_inf` columns (plus
/// `trial` and `fidelity` when present).
pub fn scan_rows_from_table(t: &Table) -> Result<Vec<ScanRow>> {
    let (cl, cn, cg) = (t.column("loss")?, t.column("n")?, t.column("g_inf")?);
    let ct = t.column("trial").ok();
    let cf = t.column("fidelity").ok();
    (0..t.len())
        .map(|i| {
            Ok(ScanRow {
                loss: t.get(i, cl)?,
                n: t.get(i, cn)?,
                trial: ct.map(|c| t.get(i, c)).transpose()?.unwrap_or(0),
                fidelity: cf.map(|c| t.get(i, c)).transpose()?.unwrap_or(f64::NAN),
                g_inf: t.get(i, cg)?,
            })
        })
        .collect()
}

/// Medians from either raw scan rows or an already-reduced medians CSV.
pub fn medians_from_table(t: &Table) -> Result<Vec<MedianRow>> {
    if let Ok(cm) = t.column("median_g_inf") {
        let (cl, cn) = (t.column("loss")?, t.column("n")?);
        let ct = t.column("trials").ok();
        return (0..t.len())
            .map(|i| {
                Ok(MedianRow {
                    loss: t.get(i, cl)?,
                    n: t.get(i, cn)?,
                    median_g_inf: t.get(i, cm)?,
                    trials: ct.map(|c| t.get(i, c)).transpose()?.unwrap_or(1),
                })
            })
            .collect();
    }
    Ok(medians_of(&scan_rows_from_table(t)?))
}

fn decay_plot(medians: &[MedianRow], fits: &[DecayFit], rows: &[ScanRow]) -> Plot {
    let mut p = Plot::new("largest initial pool gradient", "n", "max |g|", true);
    for f in fits {
        let Some(loss) = f.loss_kind else { continue };
        let ms: Vec<(f64, f64)> = medians
            .iter()
            .filter(|m| m.loss == loss)
            .map(|m| (m.n as f64, m.median_g_inf))
            .collect();
        let raw = rows.iter().filter(|r| r.loss == loss).map(|r| (r.n as f64, r.g_inf)).collect();
        p.add(format!("{loss} trials"), raw, Style::Scatter);
        let fit_pts = ms.iter().map(|&(n, _)| (n, f.model(n))).collect();
        p.add(format!("{loss} fit b={:.3}", f.b), fit_pts, Style::Line);
    }
    p
}

impl GradScanReport {
    pub fn fit_for(&self, loss: LossKind) -> Option<&DecayFit> {
        self.fits.iter().find(|f| f.loss_kind == Some(loss))
    }

    pub fn median_for(&self, loss: LossKind, n: usize) -> Option<f64> {
        self.medians
            .iter()
            .find(|m| m.loss == loss && m.n == n)
            .map(|m| m.median_g_inf)
    }

    pub fn table(&self) -> Table {
        grad_table(&self.rows)
    }

    pub fn write(&self, dir: &Path, plot: bool) -> Result<Vec<PathBuf>> {
        let mut files = Vec::new();
        write_table(dir, "grad_scan.csv", &self.table(), &mut files)?;
        write_table(dir, "grad_scan_medians.csv", &medians_table(&self.medians), &mut files)?;
        write_table(dir, "grad_scan_fits.csv", &fits_table(&self.fits), &mut files)?;
        if plot {
            write_plot(dir, "grad_scan.svg", &decay_plot(&self.medians, &self.fits, &self.rows), &mut files)?;
        }
        Ok(files)
    }
}

#[derive(Debug, Clone)]
pub struct FidelityScanReport {
    pub rows: Vec<ScanRow>,
    pub failures: Vec<TrialFailure>,
}

pub fn run_fidelity_scan(spec: &ExperimentSpec) -> Result<FidelityScanReport> {
    spec.validate()?;
    let (rows, failures) = initial_scan(spec)?;
    Ok(FidelityScanReport { rows, failures })
}

impl FidelityScanReport {
    pub fn from_rows(rows: Vec<ScanRow>) -> Self {
        Self {
            rows,
            failures: Vec::new(),
        }
    }

    /// Rank correlation between fidelity and `‖g‖_∞`, pooled over n.
    pub fn spearman(&self, loss: LossKind) -> Option<f64> {
        let (f, g): (Vec<f64>, Vec<f64>) = self
            .rows
            .iter()
            .filter(|r| r.loss == loss)
            .map(|r| (r.fidelity, r.g_inf))
            .unzip();
        spearman(&f, &g)
    }

    /// `max ‖g‖_∞ / min ‖g‖_∞` across trials at one size.
    pub fn spread(&self, loss: LossKind, n: usize) -> Option<f64> {
        let g: Vec<f64> = self
            .rows
            .iter()
            .filter(|r| r.loss == loss && r.n == n)
            .map(|r| r.g_inf)
            .collect();
        if g.is_empty() {
            return None;
        }
        let max = g.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let min = g.iter().cloned().fold(f64::INFINITY, f64::min);
        Some(max / min)
    }

    fn losses(&self) -> Vec<LossKind> {
        let mut v: Vec<LossKind> = Vec::new();
        for r in &self.rows {
            if !v.contains(&r.loss) {
                v.push(r.loss);
            }
        }
        v
    }

    pub fn table(&self) -> Table {
        let mut t = Table::new(&["loss", "n", "trial", "fidelity", "g_inf"]);
        for r in &self.rows {
            t.push(vec![
                r.loss.name().into(),
                r.n.to_string(),
                r.trial.to_string(),
                fmt_f64(r.fidelity),
                fmt_f64(r.g_inf),
            ]);
        }
        t
    }

    pub fn summary_table(&self) -> Table {
        let mut t = Table::new(&["loss", "n", "spearman", "max_over_min_g_inf"]);
        for loss in self.losses() {
            let mut ns: Vec<usize> = self.rows.iter().filter(|r| r.loss == loss).map(|r| r.n).collect();
            ns.dedup();
            for n in ns {
                t.push(vec![loss.name().into(), n.to_string(), String::new(), fmt_opt(self.spread(loss, n))]);
            }
            t.push(vec![loss.name().into(), "all".into(), fmt_opt(self.spearman(loss)), String::new()]);
        }
        t
    }

    pub fn write(&self, dir: &Path, plot: bool) -> Result<Vec<PathBuf>> {
        let mut files = Vec::new();
        write_table(dir, "fidelity_scan.csv", &self.table(), &mut files)?;
        write_table(dir, "fidelity_scan_summary.csv", &self.summary_table(), &mut files)?;
        if plot {
            let mut p = Plot::new("initial gradient vs reference fidelity", "F(target, reference)", "max |g|", true);
            for loss in self.losses() {
                let pts = self
                    .rows
                    .iter()
                    .filter(|r| r.loss == loss)
                    .map(|r| (r.fidelity, r.g_inf))
                    .collect();
                p.add(loss.name(), pts, Style::Scatter);
            }
            write_plot(dir, "fidelity_scan.svg", &p, &mut files)?;
        }
        Ok(files)
    }
}

// ----------------------------------------------------------------- completion

#[derive(Debug, Clone, PartialEq)]
pub struct CompletionRow {
    pub loss: LossKind,
    pub trial: u64,
    pub termination: AdaptTermination,
    pub params: usize,
    /// `params / final_params`; only defined for converged runs.
    pub completion_fraction: Option<f64>,
    pub g_inf: f64,
}

#[derive(Debug, Clone)]
pub struct CompletionReport {
    pub n: usize,
    pub rows: Vec<CompletionRow>,
    pub failures: Vec<TrialFailure>,
}

pub fn completion_rows(loss: LossKind, trial: u64, trace: &AdaptTrace) -> Vec<CompletionRow> {
    let total = trace.n_params();
    let converged = trace.termination == AdaptTermination::Converged;
    trace
        .records
        .iter()
        .filter(|r| r.iteration >= 1)
        .map(|r| CompletionRow {
            loss,
            trial,
            termination: trace.termination,
            params: r.iteration,
            completion_fraction: converged.then(|| r.iteration as f64 / total as f64),
            g_inf: r.pool_grad_inf_norm,
        })
        .collect()
}

pub fn run_completion(spec: &ExperimentSpec) -> Result<CompletionReport> {
    spec.validate()?;
    let n = spec.n_range[0];
    let jobs = trial_jobs(spec);
    let results = run_adapt_trials(spec, &jobs)?;
    let mut rows = Vec::new();
    let mut failures = Vec::new();
    for (&(loss, n, t), r) in jobs.iter().zip(results) {
        match r {
            Ok(trace) => rows.extend(completion_rows(loss, t, &trace)),
            Err(e) => failures.push(TrialFailure::new(Some(loss), n, Some(t), &e)),
        }
    }
    Ok(CompletionReport { n, rows, failures })
}

impl CompletionReport {
    /// Runs whose last step cut `‖g‖_∞` by at least `factor`, and the number
    /// of converged runs considered.
    pub fn final_drops(&self, loss: LossKind, factor: f64) -> (usize, usize) {
        let mut by_trial: BTreeMap<u64, Vec<&CompletionRow>> = BTreeMap::new();
        for r in self.rows.iter().filter(|r| r.loss == loss && r.completion_fraction.is_some()) {
            by_trial.entry(r.trial).or_default().push(r);
        }
        let mut drops = 0;
        let mut total = 0;
        for rs in by_trial.values() {
            if rs.len() < 2 {
                continue;
            }
            total += 1;
            let last = rs[rs.len() - 1].g_inf;
            let prev = rs[rs.len() - 2].g_inf;
            if last * factor <= prev {
                drops += 1;
            }
        }
        (drops, total)
    }

    pub fn table(&self) -> Table {
        let mut t = Table::new(&["loss", "trial", "termination", "params", "completion_fraction", "g_inf"]);
        for r in &self.rows {
            t.push(vec![
                r.loss.name().into(),
                r.trial.to_string(),
                r.termination.name().into(),
                r.params.to_string(),
                fmt_opt(r.completion_fraction),
                fmt_f64(r.g_inf),
            ]);
        }
        t
    }

    pub fn write(&self, dir: &Path, plot: bool) -> Result<Vec<PathBuf>> {
        let mut files = Vec::new();
        write_table(dir, "completion.csv", &self.table(), &mut files)?;
        if plot {
            let mut p = Plot::new(&format!("pool gradient vs completion, n = {}", self.n), "completion", "max |g|", true);
            let mut losses: Vec<LossKind> = Vec::new();
            for r in &self.rows {
                if !losses.contains(&r.loss) {
                    losses.push(r.loss);
                }
            }
            for loss in losses {
                let pts = self
                    .rows
                    .iter()
                    .filter(|r| r.loss == loss)
                    .filter_map(|r| Some((r.completion_fraction?, r.g_inf)))
                    .collect();
                p.add(loss.name(), pts, Style::Scatter);
            }
            write_plot(dir, "completion.svg", &p, &mut files)?;
        }
        Ok(files)
    }
}

/// Runs `spec.experiment` and writes its files to `spec.output_dir`.
pub fn run_experiment(spec: &ExperimentSpec) -> Result<RunOutcome> {
    let dir = spec
        .output_dir
        .clone()
        .ok_or_else(|| Error::Parameter("an output directory is required".into()))?;
    spec.validate()?;
    fs::create_dir_all(&dir)?;
    let (files, failures) = match spec.experiment {
        Experiment::LossCurves => {
            let r = run_loss_curves(spec)?;
            (r.write(&dir, spec.plot)?, r.failures)
        }
        Experiment::SizeScan => {
            let r = run_size_scan(spec)?;
            (r.write(&dir, spec.plot)?, r.failures)
        }
        Experiment::GradScan => {
            let r = run_grad_scan(spec)?;
            (r.write(&dir, spec.plot)?, r.failures)
        }
        Experiment::FidelityScan => {
            let r = run_fidelity_scan(spec)?;
            (r.write(&dir, spec.plot)?, r.failures)
        }
        Experiment::Completion => {
            let r = run_completion(spec)?;
            (r.write(&dir, spec.plot)?, r.failures)
        }
    };
    Ok(RunOutcome { files, failures })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn spec(e: Experiment, n: Vec<usize>, trials: usize) -> ExperimentSpec {
        ExperimentSpec {
            n_range: n,
            trials,
            ..ExperimentSpec::new(e)
        }
    }

    #[test]
    fn loss_curves_single_qubit_smoke() {
        let start = std::time::Instant::now();
        let r = run_loss_curves(&spec(Experiment::LossCurves, vec![1], 1)).unwrap();
        assert!(r.failures.is_empty());
        assert_eq!(r.runs.len(), 6);
        for run in &r.runs {
            match run.method {
                Method::Adapt => assert_eq!(run.trace.termination, AdaptTermination::Converged, "{}", run.loss),
                Method::Vqe => assert_eq!(run.params(), 15),
            }
            if run.loss == LossKind::Gibbs {
                assert!(run.final_loss() >= -1e-9);
            }
        }
        assert!(start.elapsed().as_secs() < 10);
        let t = r.summary_table();
        assert_eq!(t.len(), 6);
    }

    #[test]
    fn size_scan_single_qubit() {
        let r = run_size_scan(&spec(Experiment::SizeScan, vec![1], 20)).unwrap();
        assert!(r.failures.is_empty());
        for loss in LossKind::ALL {
            let p = r.params_to_reach(loss, 1, 1e-4).expect("reaches 1e-4");
            assert!(p <= 15, "{loss}: {p}");
        }
        assert_eq!(r.cells.len(), 3);
        assert!(r.cells.iter().all(|c| c.trials == 20 && c.failed == 0));
    }

    #[test]
    fn worst_case_holds_final_values() {
        use crate::adapt::AdaptRecord;
        let mk = |inf: &[f64]| AdaptTrace {
            loss_kind: LossKind::Gibbs,
            records: inf
                .iter()
                .enumerate()
                .map(|(i, &x)| AdaptRecord {
                    iteration: i,
                    operator: None,
                    pool_grad_inf_norm: 0.0,
                    loss: 0.0,
                    infidelity: x,
                    cumulative_fevals: 0,
                    optimizer: None,
                })
                .collect(),
            ansatz: Ansatz::new(crate::states::Statevector::basis(2, 0).unwrap(), 1, 1).unwrap(),
            curve: vec![],
            termination: AdaptTermination::Converged,
        };
        let a = mk(&[0.5, 0.1, 0.01]);
        let b = mk(&[0.4, 0.2]);
        assert_eq!(worst_case_curve(&[&a, &b]), vec![0.5, 0.2, 0.2]);
    }

    #[test]
    fn grad_scan_rows_medians_and_fits() {
        let r = run_grad_scan(&spec(Experiment::GradScan, vec![1, 2, 3], 4)).unwrap();
        assert_eq!(r.rows.len(), 3 * 3 * 4);
        assert_eq!(r.medians.len(), 9);
        assert_eq!(r.fits.len(), 3);
        assert!(r.rows.iter().all(|x| x.g_inf > 0.0 && (0.0..=1.0).contains(&x.fidelity)));
        // rows ordered by (loss, n, trial)
        let keys: Vec<(usize, usize, u64)> = r
            .rows
            .iter()
            .map(|x| (LossKind::ALL.iter().position(|&l| l == x.loss).unwrap(), x.n, x.trial))
            .collect();
        let mut sorted = keys.clone();
        sorted.sort();
        assert_eq!(keys, sorted);
        let back = medians_from_table(&Table::parse(&r.table().body().unwrap()).unwrap()).unwrap();
        assert_eq!(back, r.medians);
        let back2 = medians_from_table(&Table::parse(&medians_table(&r.medians).body().unwrap()).unwrap()).unwrap();
        assert_eq!(back2, r.medians);
    }

    #[test]
    fn fidelity_and_grad_scans_agree() {
        let s = spec(Experiment::FidelityScan, vec![2], 3);
        let f = run_fidelity_scan(&s).unwrap();
        let g = run_grad_scan(&ExperimentSpec {
            experiment: Experiment::GradScan,
            ..s
        })
        .unwrap();
        assert_eq!(f.rows, g.rows);
        let t = f.summary_table();
        assert_eq!(t.len(), 6);
        let back = scan_rows_from_table(&Table::parse(&f.table().body().unwrap()).unwrap()).unwrap();
        assert_eq!(back, f.rows);
    }

    #[test]
    fn completion_rows_are_well_formed() {
        let r = run_completion(&spec(Experiment::Completion, vec![1], 3)).unwrap();
        assert!(r.failures.is_empty());
        let mut last: Option<(LossKind, u64, f64)> = None;
        for row in &r.rows {
            let c = row.completion_fraction.expect("n = 1 runs converge");
            assert!(c > 0.0 && c <= 1.0);
            if let Some((l, t, prev)) = last {
                if l == row.loss && t == row.trial {
                    assert!(c > prev);
                }
            }
            last = Some((row.loss, row.trial, c));
            if c == 1.0 {
                assert!(row.g_inf < 1e-3);
            }
        }
    }

    #[test]
    fn experiment_writes_files() {
        let dir = tempfile::tempdir().unwrap();
        let mut s = spec(Experiment::GradScan, vec![1, 2, 3], 2);
        s.output_dir = Some(dir.path().to_path_buf());
        s.plot = true;
        let out = run_experiment(&s).unwrap();
        assert!(out.failures.is_empty());
        assert_eq!(out.files.len(), 4);
        for f in &out.files {
            assert!(f.exists());
        }
        let mut no_dir = s.clone();
        no_dir.output_dir = None;
        assert!(run_experiment(&no_dir).is_err());
    }
}
