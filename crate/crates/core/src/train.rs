//! Full-batch Adam training on a fixed collocation sample.

use std::io::{self, Write};
use std::time::Instant;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::arch::{init_network, ArchError, NetworkConfig, NetworkParams};
use crate::eval::{evaluate_model, EvalError, Evaluation};
use crate::hessian::{lambda_max, FlatParams, HessianError, PinnObjective, PowerIteration};
use crate::problems::{LossValues, PreparedLoss, ProblemError, ProblemSpec};
use crate::reference::{GridResolution, ReferenceGrid};
use crate::sampling::sample;
use crate::Compact;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum TrainError {
    #[error("non-finite gradient at iteration {iteration}")]
    Divergence { iteration: usize },
    #[error("gradient has {got} entries, parameters have {expected}")]
    Length { expected: usize, got: usize },
    #[error("invalid run config: {field}: {reason}")]
    Config { field: &'static str, reason: String },
    #[error(transparent)]
    Arch(#[from] ArchError),
    #[error(transparent)]
    Problem(#[from] ProblemError),
    #[error(transparent)]
    Eval(#[from] EvalError),
    #[error(transparent)]
    Hessian(#[from] HessianError),
}

pub type Result<T> = std::result::Result<T, TrainError>;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AdamState {
    pub m: Vec<f64>,
    pub v: Vec<f64>,
    pub step: u64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl AdamState {
    pub fn new(n: usize) -> Self {
        Self {
            m: vec![0.0; n],
            v: vec![0.0; n],
            step: 0,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

/// One bias-corrected Adam update in place. `iteration` only labels a
/// divergence error; a non-finite gradient leaves params and state untouched.
pub fn adam_step(
    params: &mut [f64],
    grads: &[f64],
    state: &mut AdamState,
    lr: f64,
    iteration: usize,
) -> Result<()> {
    for len in [grads.len(), state.m.len(), state.v.len()] {
        if len != params.len() {
            return Err(TrainError::Length {
                expected: params.len(),
                got: len,
            });
        }
    }
    if grads.iter().any(|g| !g.is_finite()) {
        return Err(TrainError::Divergence { iteration });
    }
    state.step += 1;
    let t = state.step as i32;
    let bc1 = 1.0 - state.beta1.powi(t);
    let bc2 = 1.0 - state.beta2.powi(t);
    for i in 0..params.len() {
        let g = grads[i];
        state.m[i] = state.beta1 * state.m[i] + (1.0 - state.beta1) * g;
        state.v[i] = state.beta2 * state.v[i] + (1.0 - state.beta2) * g * g;
        let m_hat = state.m[i] / bc1;
        let v_hat = state.v[i] / bc2;
        params[i] -= lr * m_hat / (v_hat.sqrt() + state.eps);
    }
    Ok(())
}

/// When a run ends.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StopRule {
    Iterations(usize),
    /// Wall-clock budget in seconds. The iteration count is then machine
    /// dependent, so only the rule itself is deterministic.
    TimeBudget(f64),
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LambdaTracking {
    /// Checkpoint every `stride` iterations, starting at 0.
    pub stride: usize,
    pub power: PowerIteration,
}

impl LambdaTracking {
    pub const DEFAULT_STRIDE: usize = 500;

    pub fn every(stride: usize) -> Self {
        Self {
            stride,
            power: PowerIteration::default(),
        }
    }
}

/// A single training run, fully resolved.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub problem: ProblemSpec,
    pub network: NetworkConfig,
    pub seed: u64,
    pub learning_rate: f64,
    pub stop: StopRule,
    pub log_every: usize,
    pub normalize: bool,
    pub eval_grid: GridResolution,
    pub lambda: Option<LambdaTracking>,
    /// Write wall-clock milliseconds into the history. Off by default so that
    /// histories are reproducible byte for byte.
    pub record_timing: bool,
}

impl RunConfig {
    pub const DEFAULT_LOG_EVERY: usize = 100;

    /// The problem's published settings with its default architecture.
    pub fn preset(problem: ProblemSpec, seed: u64) -> Self {
        let d = problem.defaults;
        let network = NetworkConfig::new(
            d.architecture,
            problem.input_dim(),
            d.hidden_layers,
            d.width,
            1,
        );
        Self {
            network,
            seed,
            learning_rate: d.learning_rate,
            stop: StopRule::Iterations(d.iterations),
            log_every: Self::DEFAULT_LOG_EVERY,
            normalize: true,
            eval_grid: GridResolution::default(),
            lambda: None,
            record_timing: false,
            problem,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |field: &'static str, reason: &str| {
            Err(TrainError::Config {
                field,
                reason: reason.to_string(),
            })
        };
        self.network
            .validate()
            .map_err(|e| TrainError::Config {
                field: "network",
                reason: e.to_string(),
            })?;
        if self.network.input_dim != self.problem.input_dim() {
            return bad("network.input_dim", "must match the problem's input dimension");
        }
        if self.network.output_dim != 1 {
            return bad("network.output_dim", "must be 1 for a scalar PDE");
        }
        let c = self.problem.counts;
        if c.interior == 0 {
            return bad("samples.interior", "must be positive");
        }
        if c.boundary < 2 {
            return bad("samples.boundary", "must be at least 2");
        }
        if self.problem.kind.is_time_dependent() && c.initial == 0 {
            return bad("samples.initial", "must be positive for a time-dependent problem");
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return bad("learning_rate", "must be positive and finite");
        }
        if self.log_every == 0 {
            return bad("log_every", "must be positive");
        }
        if let StopRule::TimeBudget(s) = self.stop {
            if !(s > 0.0 && s.is_finite()) {
                return bad("time_budget_secs", "must be positive and finite");
            }
        }
        if let Some(l) = self.lambda {
            if l.stride == 0 {
                return bad("lambda_stride", "must be positive when tracking is on");
            }
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HistoryRow {
    pub iter: usize,
    pub loss_total: f64,
    pub loss_r: f64,
    pub loss_ic: f64,
    pub loss_bc: f64,
    pub rel_l2: Option<f64>,
    pub lambda_max: Option<f64>,
    pub elapsed_ms: Option<f64>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct RunHistory {
    pub rows: Vec<HistoryRow>,
}

pub const HISTORY_HEADER: &str =
    "iter,loss_total,loss_r,loss_ic,loss_bc,rel_l2,lambda_max,elapsed_ms";

fn opt(v: Option<f64>) -> String {
    v.map(|v| Compact(v).to_string()).unwrap_or_default()
}

impl RunHistory {
    /// Appends a row; iteration indices must increase strictly.
    pub fn push(&mut self, row: HistoryRow) {
        if let Some(last) = self.rows.last() {
            assert!(row.iter > last.iter, "history iterations must increase");
        }
        self.rows.push(row);
    }

    pub fn last(&self) -> Option<&HistoryRow> {
        self.rows.last()
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    /// `(iteration, λ_max)` for every checkpoint row.
    pub fn lambda_series(&self) -> Vec<(usize, f64)> {
        self.rows
            .iter()
            .filter_map(|r| r.lambda_max.map(|l| (r.iter, l)))
            .collect()
    }

    pub fn write_csv(&self, mut out: impl Write) -> io::Result<()> {
        writeln!(out, "{HISTORY_HEADER}")?;
        for r in &self.rows {
            writeln!(
                out,
                "{},{},{},{},{},{},{},{}",
                r.iter,
                Compact(r.loss_total),
                Compact(r.loss_r),
                Compact(r.loss_ic),
                Compact(r.loss_bc),
                opt(r.rel_l2),
                opt(r.lambda_max),
                opt(r.elapsed_ms)
            )?;
        }
        Ok(())
    }
}

#[derive(Clone, Debug)]
pub struct RunOutcome {
    pub history: RunHistory,
    pub params: NetworkParams,
    /// Adam steps taken.
    pub iterations: usize,
    /// Iteration at which a non-finite loss or gradient stopped the run.
    pub diverged: Option<usize>,
    /// Error of the final parameters, when a reference was supplied.
    pub final_eval: Option<Evaluation>,
    pub wall_ms: f64,
}

impl RunOutcome {
    pub fn ms_per_iter(&self) -> f64 {
        self.wall_ms / self.iterations.max(1) as f64
    }
}

/// Trains one network. With a reference grid every logged row carries the
/// relative L2 error of the parameters at that iteration.
pub fn train(cfg: &RunConfig, reference: Option<&ReferenceGrid>) -> Result<RunOutcome> {
    cfg.validate()?;
    let start = Instant::now();
    let samples = sample(&cfg.problem.sample_plan(), cfg.seed);
    let loss = PreparedLoss::new(&cfg.problem, &samples, cfg.normalize)?;
    let mut params = init_network(&cfg.network, cfg.seed)?;
    let mut flat = FlatParams::from_params(&params).values;
    let mut adam = AdamState::new(flat.len());
    let mut history = RunHistory::default();

    let lambda_due = |i: usize| cfg.lambda.filter(|l| i % l.stride == 0);
    let record = |i: usize,
                  params: &NetworkParams,
                  values: LossValues,
                  history: &mut RunHistory|
     -> Result<()> {
        let rel_l2 = match reference {
            Some(grid) => Some(evaluate_model(params, &cfg.problem, cfg.normalize, grid)?.rel_l2),
            None => None,
        };
        let lambda = match lambda_due(i) {
            Some(l) => {
                let objective = PinnObjective::new(&loss, params.clone());
                let theta = FlatParams::from_params(params).values;
                Some(lambda_max(&objective, &theta, l.power)?.value)
            }
            None => None,
        };
        history.push(HistoryRow {
            iter: i,
            loss_total: values.total,
            loss_r: values.residual,
            loss_ic: values.initial,
            loss_bc: values.boundary,
            rel_l2,
            lambda_max: lambda,
            elapsed_ms: cfg
                .record_timing
                .then(|| start.elapsed().as_secs_f64() * 1e3),
        });
        Ok(())
    };

    let finished = |i: usize| match cfg.stop {
        StopRule::Iterations(n) => i >= n,
        StopRule::TimeBudget(s) => start.elapsed().as_secs_f64() >= s,
    };

    let mut i = 0;
    let mut diverged = None;
    loop {
        if finished(i) {
            let values = loss.values(&params)?;
            if !values.total.is_finite() {
                diverged = Some(i);
            }
            record(i, &params, values, &mut history)?;
            break;
        }
        let (values, grad) = loss.value_and_grad(&params)?;
        let logged = i % cfg.log_every == 0 || lambda_due(i).is_some();
        if !values.total.is_finite() {
            diverged = Some(i);
            record(i, &params, values, &mut history)?;
            break;
        }
        if logged {
            record(i, &params, values, &mut history)?;
        }
        match adam_step(&mut flat, &grad, &mut adam, cfg.learning_rate, i) {
            Ok(()) => {}
            Err(TrainError::Divergence { iteration }) => {
                diverged = Some(iteration);
                if !logged {
                    record(i, &params, values, &mut history)?;
                }
                break;
            }
            Err(e) => return Err(e),
        }
        FlatParams::unflatten_into(&flat, &mut params)?;
        i += 1;
    }

    let final_eval = match (reference, diverged) {
        (Some(grid), None) => Some(evaluate_model(&params, &cfg.problem, cfg.normalize, grid)?),
        _ => None,
    };
    Ok(RunOutcome {
        history,
        params,
        iterations: adam.step as usize,
        diverged,
        final_eval,
        wall_ms: start.elapsed().as_secs_f64() * 1e3,
    })
}

/// Trains with λ_max checkpoints every `stride` iterations and returns the
/// `(iteration, λ_max)` series.
pub fn track_lambda_max(
    cfg: &RunConfig,
    stride: usize,
    reference: Option<&ReferenceGrid>,
) -> Result<(Vec<(usize, f64)>, RunOutcome)> {
    let mut cfg = cfg.clone();
    cfg.lambda = Some(LambdaTracking {
        stride,
        power: cfg.lambda.map_or_else(PowerIteration::default, |l| l.power),
    });
    let outcome = train(&cfg, reference)?;
    Ok((outcome.history.lambda_series(), outcome))
}

/// Arithmetic mean, left to right.
pub fn mean(values: &[f64]) -> f64 {
    let mut acc = 0.0;
    for v in values {
        acc += v;
    }
    acc / values.len() as f64
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::problems::{ProblemKind, SampleCounts};

    fn tiny(kind: ProblemKind) -> RunConfig {
        let mut problem = kind.preset();
        problem.counts = SampleCounts::new(64, 16, 16);
        let mut cfg = RunConfig::preset(problem, 3);
        cfg.network.hidden_layers = 2;
        cfg.network.width = 8;
        cfg.stop = StopRule::Iterations(25);
        cfg.log_every = 10;
        cfg
    }

    #[test]
    fn logs_every_stride_and_the_final_iteration() {
        let out = train(&tiny(ProblemKind::Burgers), None).unwrap();
        let iters: Vec<usize> = out.history.rows.iter().map(|r| r.iter).collect();
        assert_eq!(iters, [0, 10, 20, 25]);
        assert_eq!(out.iterations, 25);
        assert!(out.diverged.is_none());
        assert!(out.history.rows.iter().all(|r| r.elapsed_ms.is_none()));
    }

    #[test]
    fn zero_iterations_returns_initial_params() {
        let mut cfg = tiny(ProblemKind::Helmholtz);
        cfg.stop = StopRule::Iterations(0);
        let out = train(&cfg, None).unwrap();
        assert_eq!(out.history.len(), 1);
        assert_eq!(out.params, init_network(&cfg.network, cfg.seed).unwrap());
    }

    #[test]
    fn csv_leaves_untracked_columns_empty() {
        let mut h = RunHistory::default();
        h.push(HistoryRow {
            iter: 0,
            loss_total: 1.5,
            loss_r: 1.0,
            loss_ic: 0.25,
            loss_bc: 0.25,
            rel_l2: Some(0.5),
            lambda_max: None,
            elapsed_ms: None,
        });
        let mut buf = Vec::new();
        h.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(text, format!("{HISTORY_HEADER}\n0,1.5,1,0.25,0.25,0.5,,\n"));
    }

    #[test]
    fn divergence_keeps_partial_history() {
        let mut cfg = tiny(ProblemKind::Convection);
        cfg.learning_rate = 1e300;
        let out = train(&cfg, None).unwrap();
        let at = out.diverged.expect("huge steps overflow");
        assert_eq!(out.history.last().unwrap().iter, at);
    }

    #[test]
    fn rejects_bad_fields() {
        let mut cfg = tiny(ProblemKind::Burgers);
        cfg.learning_rate = 0.0;
        let err = train(&cfg, None).unwrap_err();
        assert!(err.to_string().contains("learning_rate"), "{err}");
    }
}
