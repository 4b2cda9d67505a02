//! The ADAPT grow-measure-optimize loop and the fixed-structure baseline.

use std::fmt::Write as _;
use std::fs;
use std::io::Write;
use std::path::Path;

use crate::ansatz::Ansatz;
use crate::error::{Error, Result};
use crate::harness::io::{comment_line, fmt_f64};
use crate::losses::{argmax_abs, grad_infinity_norm, loss_and_gradient_at, pool_gradients, LossContext, LossKind};
use crate::model::ProblemInstance;
use crate::optim::{self, Objective, OptimOptions, Termination};
use crate::pauli::{OperatorPool, PauliString};
use crate::states::infidelity;

pub const DEFAULT_EPSILON: f64 = 1e-3;
/// Consecutive identical selections without progress before giving up.
pub const STALL_REPEATS: usize = 5;
pub const STALL_IMPROVEMENT: f64 = 1e-12;

pub const TRACE_HEADER: [&str; 6] = [
    "iteration",
    "operator",
    "pool_grad_inf_norm",
    "loss",
    "infidelity",
    "cumulative_fevals",
];

#[derive(Debug, Clone)]
pub struct AdaptConfig {
    pub epsilon: f64,
    pub max_params: usize,
    pub pool: OperatorPool,
    pub loss_kind: LossKind,
    pub optim: OptimOptions,
}

impl AdaptConfig {
    /// Defaults: `epsilon = 1e-3`, `max_params = 2 * |pool|`.
    pub fn new(pool: OperatorPool, loss_kind: LossKind) -> Self {
        Self {
            epsilon: DEFAULT_EPSILON,
            max_params: 2 * pool.len(),
            pool,
            loss_kind,
            optim: OptimOptions::default(),
        }
    }

    pub fn with_epsilon(mut self, epsilon: f64) -> Self {
        self.epsilon = epsilon;
        self
    }

    pub fn with_max_params(mut self, max_params: usize) -> Self {
        self.max_params = max_params;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.epsilon > 0.0 && self.epsilon.is_finite()) {
            return Err(Error::Parameter(format!("epsilon must be positive, got {}", self.epsilon)));
        }
        if self.optim.g_tol <= 0.0 || self.optim.max_iter == 0 {
            return Err(Error::Parameter("optimizer needs g_tol > 0 and max_iter >= 1".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AdaptTermination {
    Converged,
    MaxParams,
    Stalled,
}

impl AdaptTermination {
    pub fn name(self) -> &'static str {
        match self {
            Self::Converged => "converged",
            Self::MaxParams => "max_params",
            Self::Stalled => "stalled",
        }
    }
}

/// State of the run after `iteration` parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct AdaptRecord {
    pub iteration: usize,
    /// Generator appended to reach this state; `None` for the reference.
    pub operator: Option<PauliString>,
    /// Pool gradient measured at this state.
    pub pool_grad_inf_norm: f64,
    pub loss: f64,
    pub infidelity: f64,
    pub cumulative_fevals: usize,
    /// Inner optimizer outcome for this iteration.
    pub optimizer: Option<Termination>,
}

/// One loss evaluation during training.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CurvePoint {
    pub fevals: usize,
    pub params: usize,
    pub loss: f64,
}

#[derive(Debug, Clone)]
pub struct AdaptTrace {
    pub loss_kind: LossKind,
    pub records: Vec<AdaptRecord>,
    pub ansatz: Ansatz,
    pub curve: Vec<CurvePoint>,
    pub termination: AdaptTermination,
}

impl AdaptTrace {
    pub fn final_record(&self) -> &AdaptRecord {
        self.records.last().expect("trace has at least one record")
    }

    pub fn n_params(&self) -> usize {
        self.ansatz.len()
    }

    pub fn selected_operators(&self) -> Vec<&PauliString> {
        self.records.iter().filter_map(|r| r.operator.as_ref()).collect()
    }

    /// Trace CSV body (header plus rows, no comment line).
    pub fn csv_body(&self) -> String {
        let mut out = TRACE_HEADER.join(",");
        out.push('\n');
        for r in &self.records {
            let op = r.operator.as_ref().map(|p| p.to_string()).unwrap_or_default();
            let _ = writeln!(
                out,
                "{},{},{},{},{},{}",
                r.iteration,
                op,
                fmt_f64(r.pool_grad_inf_norm),
                fmt_f64(r.loss),
                fmt_f64(r.infidelity),
                r.cumulative_fevals
            );
        }
        out
    }

    /// Writes the trace CSV and, next to it, the ansatz sidecar.
    pub fn save(&self, csv_path: &Path, ansatz_path: &Path) -> Result<()> {
        let mut f = fs::File::create(csv_path)?;
        f.write_all(comment_line().as_bytes())?;
        f.write_all(self.csv_body().as_bytes())?;
        fs::write(ansatz_path, self.ansatz.to_lines())?;
        Ok(())
    }
}

struct Training<'a> {
    ctx: &'a LossContext,
    ansatz: &'a Ansatz,
    fevals: &'a mut usize,
    curve: &'a mut Vec<CurvePoint>,
}

impl Objective for Training<'_> {
    fn value_and_gradient(&mut self, x: &[f64]) -> Result<(f64, Vec<f64>)> {
        let (value, grad) = loss_and_gradient_at(self.ctx, self.ansatz, x)?;
        *self.fevals += 1;
        self.curve.push(CurvePoint {
            fevals: *self.fevals,
            params: x.len(),
            loss: value,
        });
        Ok((value, grad.values))
    }
}

fn optimize(
    ctx: &LossContext,
    ansatz: &mut Ansatz,
    opts: &OptimOptions,
    fevals: &mut usize,
    curve: &mut Vec<CurvePoint>,
) -> Result<(f64, Termination)> {
    let x0 = ansatz.params().to_vec();
    let mut obj = Training {
        ctx,
        ansatz,
        fevals,
        curve,
    };
    let res = optim::minimize(&mut obj, &x0, opts)?;
    if res.termination == Termination::LineSearchFail {
        log::warn!(
            "line search failed with {} parameters; continuing from best point (|g| = {:e})",
            x0.len(),
            res.grad_final_norm
        );
    }
    ansatz.set_params(&res.x_final)?;
    Ok((res.f_final, res.termination))
}

fn check_pool(ctx: &LossContext, initial: &Ansatz, pool: &OperatorPool) -> Result<()> {
    if initial.n_v() != ctx.n_v() {
        return Err(Error::DimensionMismatch {
            expected: ctx.n_v(),
            got: initial.n_v(),
        });
    }
    let n_total = initial.n_v() + initial.n_h();
    if pool.n_qubits() != n_total {
        return Err(Error::DimensionMismatch {
            expected: n_total,
            got: pool.n_qubits(),
        });
    }
    Ok(())
}

/// ADAPT on a generated instance, starting from its reference state.
pub fn adapt_run(instance: &ProblemInstance, cfg: &AdaptConfig) -> Result<AdaptTrace> {
    let ctx = LossContext::from_instance(cfg.loss_kind, instance)?;
    let initial = Ansatz::new(instance.reference.clone(), instance.n_v, instance.n_h)?;
    adapt_run_with(&ctx, initial, cfg)
}

/// ADAPT against an arbitrary loss context from an arbitrary starting circuit.
pub fn adapt_run_with(ctx: &LossContext, initial: Ansatz, cfg: &AdaptConfig) -> Result<AdaptTrace> {
    cfg.validate()?;
    check_pool(ctx, &initial, &cfg.pool)?;
    let mut ansatz = initial;
    let mut fevals = 0usize;
    let mut curve = Vec::new();
    let mut records = Vec::new();
    let mut history: Vec<(usize, f64)> = Vec::new();

    let mut loss = ctx.value(&ansatz.trial_density())?;
    let mut operator = None;
    let mut optimizer = None;
    let termination = loop {
        let sigma = ansatz.trial_density();
        let grads = pool_gradients(ctx, &ansatz, &cfg.pool)?;
        let norm = grad_infinity_norm(&grads.values);
        records.push(AdaptRecord {
            iteration: ansatz.len(),
            operator: operator.take(),
            pool_grad_inf_norm: norm,
            loss,
            infidelity: infidelity(ctx.target_exact(), &sigma)?,
            cumulative_fevals: fevals,
            optimizer: optimizer.take(),
        });
        log::debug!(
            "{} params={} loss={:.6e} pool|g|={:.3e}",
            ctx.kind(),
            ansatz.len(),
            loss,
            norm
        );
        if norm < cfg.epsilon {
            break AdaptTermination::Converged;
        }
        if ansatz.len() >= cfg.max_params {
            break AdaptTermination::MaxParams;
        }
        if stalled(&history) {
            break AdaptTermination::Stalled;
        }
        let idx = argmax_abs(&grads.values).expect("pool is non-empty");
        let generator = cfg.pool.elements()[idx].clone();
        ansatz = ansatz.append(generator.clone(), 0.0)?;
        let (new_loss, term) = optimize(ctx, &mut ansatz, &cfg.optim, &mut fevals, &mut curve)?;
        history.push((idx, loss - new_loss));
        loss = new_loss;
        operator = Some(generator);
        optimizer = Some(term);
    };
    Ok(AdaptTrace {
        loss_kind: ctx.kind(),
        records,
        ansatz,
        curve,
        termination,
    })
}

fn stalled(history: &[(usize, f64)]) -> bool {
    if history.len() < STALL_REPEATS {
        return false;
    }
    let tail = &history[history.len() - STALL_REPEATS..];
    tail.iter().all(|&(idx, imp)| idx == tail[0].0 && imp < STALL_IMPROVEMENT)
}

/// Fixed-structure baseline: every pool element once, in pool order, from zero.
pub fn vqe_run(instance: &ProblemInstance, loss_kind: LossKind, pool: &OperatorPool) -> Result<AdaptTrace> {
    let ctx = LossContext::from_instance(loss_kind, instance)?;
    let initial = Ansatz::new(instance.reference.clone(), instance.n_v, instance.n_h)?;
    vqe_run_with(&ctx, initial, pool, &OptimOptions::default(), DEFAULT_EPSILON)
}

pub fn vqe_run_with(
    ctx: &LossContext,
    initial: Ansatz,
    pool: &OperatorPool,
    opts: &OptimOptions,
    epsilon: f64,
) -> Result<AdaptTrace> {
    check_pool(ctx, &initial, pool)?;
    let zeros = vec![0.0; pool.len()];
    let mut ansatz = initial.with_generators(pool.elements().to_vec(), zeros)?;
    let mut fevals = 0usize;
    let mut curve = Vec::new();
    let (loss, term) = optimize(ctx, &mut ansatz, opts, &mut fevals, &mut curve)?;
    let sigma = ansatz.trial_density();
    let norm = grad_infinity_norm(&pool_gradients(ctx, &ansatz, pool)?.values);
    let record = AdaptRecord {
        iteration: ansatz.len(),
        operator: None,
        pool_grad_inf_norm: norm,
        loss,
        infidelity: infidelity(ctx.target_exact(), &sigma)?,
        cumulative_fevals: fevals,
        optimizer: Some(term),
    };
    Ok(AdaptTrace {
        loss_kind: ctx.kind(),
        records: vec![record],
        ansatz,
        curve,
        termination: if norm < epsilon {
            AdaptTermination::Converged
        } else {
            AdaptTermination::MaxParams
        },
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::pauli::pool_klocal;

    fn small_cfg(kind: LossKind, n: usize) -> AdaptConfig {
        AdaptConfig::new(pool_klocal(2 * n, 2).unwrap(), kind)
    }

    #[test]
    fn reference_as_target_converges_immediately() {
        let inst = ProblemInstance::generate(1, 1.0, 11, 0).unwrap();
        let sigma0 = inst.reference_density().unwrap();
        let initial = Ansatz::new(inst.reference.clone(), 1, 1).unwrap();
        for kind in LossKind::ALL {
            let ctx = LossContext::new(kind, sigma0.clone(), sigma0.clone()).unwrap();
            let trace = adapt_run_with(&ctx, initial.clone(), &small_cfg(kind, 1)).unwrap();
            assert_eq!(trace.termination, AdaptTermination::Converged, "{kind}");
            assert_eq!(trace.records.len(), 1);
            assert!(trace.ansatz.is_empty());
            assert!(trace.final_record().pool_grad_inf_norm < 1e-3);
        }
    }

    #[test]
    fn renyi_single_qubit_converges() {
        for trial in 0..3 {
            let inst = ProblemInstance::generate(1, 1.0, 7, trial).unwrap();
            let trace = adapt_run(&inst, &small_cfg(LossKind::Renyi, 1)).unwrap();
            assert_eq!(trace.termination, AdaptTermination::Converged);
            assert!(trace.n_params() <= 15, "{}", trace.n_params());
            assert!(trace.final_record().infidelity < 1e-6, "{}", trace.final_record().infidelity);
        }
    }

    #[test]
    fn renyi_inner_optimization_smoke() {
        // a 4-parameter circuit on one visible and one hidden qubit
        let inst = ProblemInstance::generate(1, 1.0, 3, 0).unwrap();
        let ctx = LossContext::from_instance(LossKind::Renyi, &inst).unwrap();
        let gens = ["Y0", "X0 Y1", "Z0 Y1", "Y1"]
            .iter()
            .map(|t| PauliString::parse(t, 2).unwrap())
            .collect();
        let mut a = Ansatz::new(inst.reference.clone(), 1, 1)
            .unwrap()
            .with_generators(gens, vec![0.0; 4])
            .unwrap();
        let mut fevals = 0;
        let mut curve = Vec::new();
        let x0 = a.params().to_vec();
        let mut obj = Training {
            ctx: &ctx,
            ansatz: &a,
            fevals: &mut fevals,
            curve: &mut curve,
        };
        let res = optim::minimize(&mut obj, &x0, &OptimOptions::default()).unwrap();
        assert!(res.converged);
        assert!(res.grad_final_norm < 1e-8);
        assert_eq!(res.f_evals, fevals);
        a.set_params(&res.x_final).unwrap();
    }

    #[test]
    fn loss_is_monotone_and_invariant_holds() {
        for kind in LossKind::ALL {
            let inst = ProblemInstance::generate(1, 1.0, 21, 1).unwrap();
            let trace = adapt_run(&inst, &small_cfg(kind, 1)).unwrap();
            for w in trace.records.windows(2) {
                assert!(w[1].loss <= w[0].loss + 1e-10, "{kind}: {} -> {}", w[0].loss, w[1].loss);
                assert!(w[1].cumulative_fevals >= w[0].cumulative_fevals);
                assert_eq!(w[1].iteration, w[0].iteration + 1);
            }
            let last = trace.final_record();
            assert_eq!(last.pool_grad_inf_norm < 1e-3, trace.termination == AdaptTermination::Converged);
            assert_eq!(trace.records[0].operator, None);
            assert_eq!(trace.selected_operators().len(), trace.n_params());
        }
    }

    #[test]
    fn selection_invariant_under_loss_scaling() {
        let inst = ProblemInstance::generate(1, 1.0, 5, 2).unwrap();
        for kind in LossKind::ALL {
            let base = LossContext::from_instance(kind, &inst).unwrap();
            let initial = Ansatz::new(inst.reference.clone(), 1, 1).unwrap();
            let cfg = small_cfg(kind, 1).with_max_params(3).with_epsilon(1e-12);
            let a = adapt_run_with(&base, initial.clone(), &cfg).unwrap();
            let scaled = base.clone().with_scale(7.5).unwrap();
            let mut cfg7 = cfg.clone();
            cfg7.epsilon *= 7.5;
            cfg7.optim.g_tol *= 7.5;
            let b = adapt_run_with(&scaled, initial, &cfg7).unwrap();
            assert_eq!(a.selected_operators(), b.selected_operators(), "{kind}");
        }
    }

    #[test]
    fn deterministic_across_thread_pools() {
        let inst = ProblemInstance::generate(2, 1.0, 9, 0).unwrap();
        let cfg = small_cfg(LossKind::Gibbs, 2).with_max_params(6);
        let run = |threads| {
            rayon::ThreadPoolBuilder::new()
                .num_threads(threads)
                .build()
                .unwrap()
                .install(|| adapt_run(&inst, &cfg).unwrap())
        };
        let a = run(1);
        let b = run(4);
        assert_eq!(a.csv_body(), b.csv_body());
        assert_eq!(a.ansatz.to_lines(), b.ansatz.to_lines());
        assert_eq!(a.curve, b.curve);
    }

    #[test]
    fn max_params_cap() {
        let inst = ProblemInstance::generate(2, 1.0, 4, 0).unwrap();
        let cfg = small_cfg(LossKind::Overlap, 2).with_max_params(2).with_epsilon(1e-14);
        let trace = adapt_run(&inst, &cfg).unwrap();
        assert_eq!(trace.termination, AdaptTermination::MaxParams);
        assert_eq!(trace.n_params(), 2);
        assert_eq!(trace.records.len(), 3);
    }

    #[test]
    fn stall_detection() {
        assert!(!stalled(&[(3, 0.0); 4]));
        assert!(stalled(&[(3, 0.0); 5]));
        assert!(!stalled(&[(3, 0.0), (3, 0.0), (4, 0.0), (3, 0.0), (3, 0.0)]));
        assert!(!stalled(&[(3, 0.0), (3, 0.0), (3, 1e-6), (3, 0.0), (3, 0.0)]));
        assert!(stalled(&[(1, 0.5), (3, 0.0), (3, 0.0), (3, 0.0), (3, 0.0), (3, 0.0)]));
    }

    #[test]
    fn vqe_parameter_counts() {
        let pool1 = pool_klocal(2, 2).unwrap();
        let inst1 = ProblemInstance::generate(1, 1.0, 1, 0).unwrap();
        let t = vqe_run(&inst1, LossKind::Gibbs, &pool1).unwrap();
        assert_eq!(t.n_params(), 15);
        assert_eq!(t.records.len(), 1);
        assert!(!t.curve.is_empty());
        assert_eq!(t.curve[0].loss, inst_loss_at_reference(&inst1, LossKind::Gibbs));
        // the 6-qubit pool builds a 153-gate circuit
        let inst3 = ProblemInstance::generate(3, 1.0, 1, 0).unwrap();
        let ctx = LossContext::from_instance(LossKind::Gibbs, &inst3).unwrap();
        let pool3 = pool_klocal(6, 2).unwrap();
        let opts = OptimOptions {
            max_iter: 1,
            ..OptimOptions::default()
        };
        let initial = Ansatz::new(inst3.reference.clone(), 3, 3).unwrap();
        let t3 = vqe_run_with(&ctx, initial, &pool3, &opts, DEFAULT_EPSILON).unwrap();
        assert_eq!(t3.n_params(), 153);
    }

    fn inst_loss_at_reference(inst: &ProblemInstance, kind: LossKind) -> f64 {
        let ctx = LossContext::from_instance(kind, inst).unwrap();
        ctx.value(&inst.reference_density().unwrap()).unwrap()
    }

    #[test]
    fn vqe_agrees_with_adapt_at_two_qubits() {
        let inst = ProblemInstance::generate(2, 1.0, 13, 0).unwrap();
        let pool = pool_klocal(4, 2).unwrap();
        for kind in LossKind::ALL {
            let v = vqe_run(&inst, kind, &pool).unwrap();
            let a = adapt_run(&inst, &AdaptConfig::new(pool.clone(), kind)).unwrap();
            let diff = (v.final_record().loss - a.final_record().loss).abs();
            assert!(diff < 1e-3, "{kind}: vqe {} adapt {}", v.final_record().loss, a.final_record().loss);
        }
    }

    #[test]
    fn csv_body_layout() {
        let inst = ProblemInstance::generate(1, 1.0, 2, 0).unwrap();
        let trace = adapt_run(&inst, &small_cfg(LossKind::Renyi, 1).with_max_params(2)).unwrap();
        let body = trace.csv_body();
        let mut lines = body.lines();
        assert_eq!(lines.next().unwrap(), TRACE_HEADER.join(","));
        let first: Vec<&str> = lines.next().unwrap().split(',').collect();
        assert_eq!(first[0], "0");
        assert_eq!(first[1], "");
        assert_eq!(first[5], "0");
        let dir = tempfile::tempdir().unwrap();
        let csv = dir.path().join("t.csv");
        let side = dir.path().join("t.ansatz");
        trace.save(&csv, &side).unwrap();
        let text = fs::read_to_string(&csv).unwrap();
        assert!(text.starts_with('#'));
        assert!(text.ends_with(&body));
        let back = trace.ansatz.parse_lines(&fs::read_to_string(&side).unwrap()).unwrap();
        assert_eq!(back.params(), trace.ansatz.params());
    }

    #[test]
    fn invalid_config_rejected() {
        let inst = ProblemInstance::generate(1, 1.0, 2, 0).unwrap();
        let cfg = small_cfg(LossKind::Gibbs, 1).with_epsilon(0.0);
        assert!(matches!(adapt_run(&inst, &cfg), Err(Error::Parameter(_))));
        let wrong_pool = AdaptConfig::new(pool_klocal(4, 2).unwrap(), LossKind::Gibbs);
        assert!(matches!(adapt_run(&inst, &wrong_pool), Err(Error::DimensionMismatch { .. })));
    }
}
