//! Curvature of the training loss: Hessian-vector products by central
//! differences of the gradient, and the dominant Hessian eigenvalue by power
//! iteration.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::arch::{NetworkConfig, NetworkParams};
use crate::problems::{PreparedLoss, ProblemError};
use crate::tape::Tensor;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum HessianError {
    #[error("direction vector has zero norm")]
    ZeroDirection,
    #[error("step size must be positive, got {0}")]
    Step(f64),
    #[error("vector has {got} entries, parameters have {expected}")]
    Length { expected: usize, got: usize },
    #[error("non-finite gradient while forming a Hessian-vector product")]
    NonFinite,
    #[error("parameter manifest mismatch: expected {expected}, found {found}")]
    Manifest { expected: String, found: String },
    #[error(transparent)]
    Loss(#[from] ProblemError),
}

pub type Result<T> = std::result::Result<T, HessianError>;

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub name: String,
    pub shape: Vec<usize>,
    pub offset: usize,
}

/// All parameters in one vector, with the offsets of each tensor.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FlatParams {
    pub config: NetworkConfig,
    pub manifest: Vec<ManifestEntry>,
    pub values: Vec<f64>,
}

impl FlatParams {
    pub fn from_params(params: &NetworkParams) -> Self {
        let mut manifest = Vec::new();
        let mut values = Vec::with_capacity(params.count());
        for (name, t) in params.tensor_names().into_iter().zip(params.tensors()) {
            manifest.push(ManifestEntry {
                name,
                shape: t.shape().to_vec(),
                offset: values.len(),
            });
            values.extend_from_slice(t.data());
        }
        Self {
            config: params.config.clone(),
            manifest,
            values,
        }
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// Writes `values` back into a parameter set shaped like `template`.
    pub fn unflatten_into(values: &[f64], template: &mut NetworkParams) -> Result<()> {
        let expected = template.count();
        if values.len() != expected {
            return Err(HessianError::Length {
                expected,
                got: values.len(),
            });
        }
        let mut offset = 0;
        for t in template.tensors_mut() {
            let n = t.len();
            *t = Tensor::new(t.shape().to_vec(), values[offset..offset + n].to_vec())
                .expect("shape unchanged");
            offset += n;
        }
        Ok(())
    }

    /// Rebuilds network parameters, checking the manifest against the shapes
    /// the stored config implies.
    pub fn to_params(&self) -> Result<NetworkParams> {
        let mut params = crate::arch::init_network(&self.config, 0).map_err(|e| {
            HessianError::Manifest {
                expected: "a valid network config".into(),
                found: e.to_string(),
            }
        })?;
        let expected = FlatParams::from_params(&params).manifest;
        if expected != self.manifest {
            return Err(HessianError::Manifest {
                expected: describe(&expected),
                found: describe(&self.manifest),
            });
        }
        Self::unflatten_into(&self.values, &mut params)?;
        Ok(params)
    }
}

/// `name[shape]` list used in manifest mismatch messages.
pub fn describe(manifest: &[ManifestEntry]) -> String {
    let parts: Vec<String> = manifest
        .iter()
        .map(|e| format!("{}{:?}", e.name, e.shape))
        .collect();
    parts.join(", ")
}

/// Anything with a gradient in a flat parameter vector.
pub trait LossEvaluator {
    fn dim(&self) -> usize;
    fn gradient(&self, theta: &[f64]) -> Result<Vec<f64>>;
}

/// A PINN loss seen as a function of the flat parameter vector.
pub struct PinnObjective<'a> {
    loss: &'a PreparedLoss,
    template: NetworkParams,
}

impl<'a> PinnObjective<'a> {
    pub fn new(loss: &'a PreparedLoss, template: NetworkParams) -> Self {
        Self { loss, template }
    }
}

impl LossEvaluator for PinnObjective<'_> {
    fn dim(&self) -> usize {
        self.template.count()
    }

    fn gradient(&self, theta: &[f64]) -> Result<Vec<f64>> {
        let mut params = self.template.clone();
        FlatParams::unflatten_into(theta, &mut params)?;
        Ok(self.loss.value_and_grad(&params)?.1)
    }
}

fn norm(v: &[f64]) -> f64 {
    let mut acc = 0.0;
    for x in v {
        acc += x * x;
    }
    acc.sqrt()
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    let mut acc = 0.0;
    for (x, y) in a.iter().zip(b) {
        acc += x * y;
    }
    acc
}

/// Default finite-difference step `1e-4 (1 + ‖θ‖) / ‖v‖`.
pub fn default_step(theta: &[f64], v: &[f64]) -> f64 {
    1e-4 * (1.0 + norm(theta)) / norm(v)
}

/// `Hv ≈ (∇L(θ + εv) − ∇L(θ − εv)) / 2ε`.
pub fn hvp<E: LossEvaluator + ?Sized>(
    eval: &E,
    theta: &[f64],
    v: &[f64],
    eps: Option<f64>,
) -> Result<Vec<f64>> {
    for len in [theta.len(), v.len()] {
        if len != eval.dim() {
            return Err(HessianError::Length {
                expected: eval.dim(),
                got: len,
            });
        }
    }
    if norm(v) == 0.0 {
        return Err(HessianError::ZeroDirection);
    }
    let eps = eps.unwrap_or_else(|| default_step(theta, v));
    if !(eps > 0.0) {
        return Err(HessianError::Step(eps));
    }
    let shifted = |sign: f64| -> Vec<f64> {
        theta.iter().zip(v).map(|(t, d)| t + sign * eps * d).collect()
    };
    let plus = eval.gradient(&shifted(1.0))?;
    let minus = eval.gradient(&shifted(-1.0))?;
    let out: Vec<f64> = plus
        .iter()
        .zip(&minus)
        .map(|(p, m)| (p - m) / (2.0 * eps))
        .collect();
    if out.iter().all(|x| x.is_finite()) {
        Ok(out)
    } else {
        Err(HessianError::NonFinite)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PowerIteration {
    pub max_iters: usize,
    /// Relative change of the Rayleigh quotient that counts as converged.
    pub tol: f64,
    /// Seed of the random start vector.
    pub seed: u64,
}

impl Default for PowerIteration {
    fn default() -> Self {
        Self {
            max_iters: 100,
            tol: 1e-3,
            seed: 0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LambdaMax {
    /// Magnitude of the dominant eigenvalue.
    pub value: f64,
    pub iterations: usize,
    pub converged: bool,
    /// `Hv` vanished, so the estimate is reported as 0.
    pub degenerate: bool,
    /// Rayleigh quotient after each iteration.
    pub trace: Vec<f64>,
}

/// Dominant Hessian eigenvalue magnitude by power iteration.
pub fn lambda_max<E: LossEvaluator + ?Sized>(
    eval: &E,
    theta: &[f64],
    opts: PowerIteration,
) -> Result<LambdaMax> {
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let mut v: Vec<f64> = (0..eval.dim())
        .map(|_| StandardNormal.sample(&mut rng))
        .collect();
    let n0 = norm(&v);
    v.iter_mut().for_each(|x| *x /= n0);
    let mut trace = Vec::new();
    let mut prev: Option<f64> = None;
    for it in 1..=opts.max_iters {
        let w = hvp(eval, theta, &v, None)?;
        let rq = dot(&v, &w);
        let wn = norm(&w);
        trace.push(rq);
        if wn == 0.0 {
            return Ok(LambdaMax {
                value: 0.0,
                iterations: it,
                converged: false,
                degenerate: true,
                trace,
            });
        }
        if let Some(p) = prev {
            if (rq - p).abs() <= opts.tol * rq.abs() {
                return Ok(LambdaMax {
                    value: rq.abs(),
                    iterations: it,
                    converged: true,
                    degenerate: false,
                    trace,
                });
            }
        }
        prev = Some(rq);
        v = w.iter().map(|x| x / wn).collect();
    }
    Ok(LambdaMax {
        value: prev.map_or(0.0, f64::abs),
        iterations: opts.max_iters,
        converged: false,
        degenerate: false,
        trace,
    })
}
