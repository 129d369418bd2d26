//! Benchmark PDEs: residual operators, initial/boundary losses, loss weights
//! and the preset experiment settings.
//!
//! Inputs are ordered `(t, x)` for the time-dependent problems and `(x, y)`
//! for Helmholtz.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::arch::{
    forward_with_derivatives, prepare_inputs, ArchError, ArchitectureKind, DerivativeBundle,
    Direction, NetVars, NetworkParams,
};
use crate::sampling::{BoundaryLayout, BoundarySet, DomainBounds, SamplePlan, SampleSet};
use crate::tape::{Tape, TapeError, Tensor, Var};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ProblemError {
    #[error(transparent)]
    Arch(#[from] ArchError),
    #[error(transparent)]
    Tape(#[from] TapeError),
    #[error("{problem} residual needs the {channel} channel")]
    MissingChannel {
        problem: ProblemKind,
        channel: &'static str,
    },
    #[error("samples do not fit {problem}: {reason}")]
    Samples {
        problem: ProblemKind,
        reason: String,
    },
}

pub type Result<T> = std::result::Result<T, ProblemError>;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ProblemKind {
    #[serde(alias = "allan_cahn")]
    AllenCahn,
    Helmholtz,
    Burgers,
    Convection,
}

impl ProblemKind {
    pub const ALL: [ProblemKind; 4] = [
        ProblemKind::AllenCahn,
        ProblemKind::Helmholtz,
        ProblemKind::Burgers,
        ProblemKind::Convection,
    ];

    pub fn label(self) -> &'static str {
        match self {
            ProblemKind::AllenCahn => "allen_cahn",
            ProblemKind::Helmholtz => "helmholtz",
            ProblemKind::Burgers => "burgers",
            ProblemKind::Convection => "convection",
        }
    }

    pub fn is_time_dependent(self) -> bool {
        self != ProblemKind::Helmholtz
    }

    /// Input derivatives the residual consumes.
    pub fn directions(self) -> Vec<Direction> {
        match self {
            ProblemKind::AllenCahn | ProblemKind::Burgers => {
                vec![Direction::first(0), Direction::second(1)]
            }
            ProblemKind::Helmholtz => vec![Direction::second(0), Direction::second(1)],
            ProblemKind::Convection => vec![Direction::first(0), Direction::first(1)],
        }
    }

    pub fn preset(self) -> ProblemSpec {
        match self {
            ProblemKind::AllenCahn => ProblemSpec {
                kind: self,
                bounds: DomainBounds::new(vec![("t", 0.0, 1.0), ("x", -1.0, 1.0)]).unwrap(),
                counts: SampleCounts::new(20000, 100, 200),
                weights: LossWeights::new(1.0, 100.0, 1.0),
                constants: PdeConstants {
                    diffusion: 1e-4,
                    ..PdeConstants::default()
                },
                defaults: TrainingDefaults {
                    architecture: ArchitectureKind::Dm,
                    hidden_layers: 4,
                    width: 128,
                    learning_rate: 1e-3,
                    iterations: 15000,
                },
            },
            ProblemKind::Helmholtz => ProblemSpec {
                kind: self,
                bounds: DomainBounds::new(vec![("x", -1.0, 1.0), ("y", -1.0, 1.0)]).unwrap(),
                counts: SampleCounts::new(20000, 0, 200),
                weights: LossWeights::new(1.0, 1.0, 1.0),
                constants: PdeConstants::default(),
                defaults: TrainingDefaults {
                    architecture: ArchitectureKind::Dm,
                    hidden_layers: 4,
                    width: 50,
                    learning_rate: 2e-3,
                    iterations: 15000,
                },
            },
            ProblemKind::Burgers => ProblemSpec {
                kind: self,
                bounds: DomainBounds::new(vec![("t", 0.0, 1.0), ("x", -1.0, 1.0)]).unwrap(),
                counts: SampleCounts::new(10000, 100, 200),
                weights: LossWeights::new(1.0, 1.0, 1.0),
                constants: PdeConstants {
                    diffusion: 0.01 / PI,
                    ..PdeConstants::default()
                },
                defaults: TrainingDefaults {
                    architecture: ArchitectureKind::Sdm,
                    hidden_layers: 6,
                    width: 80,
                    learning_rate: 1e-3,
                    iterations: 15000,
                },
            },
            ProblemKind::Convection => ProblemSpec {
                kind: self,
                bounds: DomainBounds::new(vec![("t", 0.0, 1.0), ("x", 0.0, 2.0 * PI)]).unwrap(),
                counts: SampleCounts::new(20000, 200, 400),
                weights: LossWeights::new(1.0, 1.0, 1.0),
                constants: PdeConstants::default(),
                defaults: TrainingDefaults {
                    architecture: ArchitectureKind::Sdm,
                    hidden_layers: 8,
                    width: 60,
                    learning_rate: 1e-3,
                    iterations: 10000,
                },
            },
        }
    }
}

impl std::fmt::Display for ProblemKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.label())
    }
}

impl std::str::FromStr for ProblemKind {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        serde_json::from_value(serde_json::Value::String(s.to_string()))
            .map_err(|_| format!("unknown problem `{s}`"))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SampleCounts {
    pub interior: usize,
    pub initial: usize,
    pub boundary: usize,
}

impl SampleCounts {
    pub const fn new(interior: usize, initial: usize, boundary: usize) -> Self {
        Self {
            interior,
            initial,
            boundary,
        }
    }
}

/// `λ_r`, `λ_ic`, `λ_bc`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LossWeights {
    pub residual: f64,
    pub initial: f64,
    pub boundary: f64,
}

impl LossWeights {
    pub const fn new(residual: f64, initial: f64, boundary: f64) -> Self {
        Self {
            residual,
            initial,
            boundary,
        }
    }
}

/// Coefficients of the four governing equations. Each problem reads only its
/// own entries.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PdeConstants {
    /// `u_xx` coefficient (Allen–Cahn 1e-4, Burgers 0.01/π).
    pub diffusion: f64,
    /// Allen–Cahn reaction strength in `r u³ − r u`.
    pub reaction: f64,
    /// Helmholtz wavenumber `k`.
    pub wavenumber: f64,
    /// Helmholtz source frequencies.
    pub a1: f64,
    pub a2: f64,
    /// Convection speed.
    pub beta: f64,
}

impl Default for PdeConstants {
    fn default() -> Self {
        Self {
            diffusion: 0.0,
            reaction: 5.0,
            wavenumber: 1.0,
            a1: 1.0,
            a2: 4.0,
            beta: 30.0,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainingDefaults {
    pub architecture: ArchitectureKind,
    pub hidden_layers: usize,
    pub width: usize,
    pub learning_rate: f64,
    pub iterations: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProblemSpec {
    pub kind: ProblemKind,
    pub bounds: DomainBounds,
    pub counts: SampleCounts,
    pub weights: LossWeights,
    pub constants: PdeConstants,
    pub defaults: TrainingDefaults,
}

/// The four benchmark settings.
pub fn problem_presets() -> Vec<ProblemSpec> {
    ProblemKind::ALL.iter().map(|k| k.preset()).collect()
}

impl ProblemSpec {
    pub fn input_dim(&self) -> usize {
        self.bounds.len()
    }

    pub fn sample_plan(&self) -> SamplePlan {
        let layout = match self.kind {
            ProblemKind::AllenCahn | ProblemKind::Convection => BoundaryLayout::Periodic { dim: 1 },
            ProblemKind::Helmholtz => BoundaryLayout::Dirichlet { dims: vec![0, 1] },
            ProblemKind::Burgers => BoundaryLayout::Dirichlet { dims: vec![1] },
        };
        SamplePlan {
            bounds: self.bounds.clone(),
            interior: self.counts.interior,
            initial: self
                .kind
                .is_time_dependent()
                .then_some((0, self.counts.initial)),
            boundary: self.counts.boundary,
            layout,
        }
    }

    /// Initial condition `h(x)` for the time-dependent problems.
    pub fn initial_condition(&self, x: f64) -> f64 {
        match self.kind {
            ProblemKind::AllenCahn => x * x * (PI * x).cos(),
            ProblemKind::Burgers => -(PI * x).sin(),
            ProblemKind::Convection => x.sin(),
            ProblemKind::Helmholtz => 0.0,
        }
    }

    /// Helmholtz source term.
    pub fn source(&self, x: f64, y: f64) -> f64 {
        let c = &self.constants;
        source_q(x, y, c.a1, c.a2, c.wavenumber)
    }
}

/// `q(x, y) = (k² − (a₁π)² − (a₂π)²) sin(a₁πx) sin(a₂πy)`, the source that
/// makes `sin(a₁πx) sin(a₂πy)` solve the Helmholtz problem.
pub fn source_q(x: f64, y: f64, a1: f64, a2: f64, k: f64) -> f64 {
    let s = (a1 * PI * x).sin() * (a2 * PI * y).sin();
    -(a1 * PI).powi(2) * s - (a2 * PI).powi(2) * s + k * k * s
}

/// Taped loss terms.
#[derive(Clone, Copy, Debug)]
pub struct LossBreakdown {
    pub residual: Var,
    pub initial: Var,
    pub boundary: Var,
    pub total: Var,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LossValues {
    pub total: f64,
    pub residual: f64,
    pub initial: f64,
    pub boundary: f64,
}

impl LossBreakdown {
    pub fn values(&self, tape: &Tape) -> LossValues {
        let get = |v: Var| tape.value(v).item().expect("scalar loss");
        LossValues {
            total: get(self.total),
            residual: get(self.residual),
            initial: get(self.initial),
            boundary: get(self.boundary),
        }
    }
}

fn channel(problem: ProblemKind, v: Option<Var>, name: &'static str) -> Result<Var> {
    v.ok_or(ProblemError::MissingChannel {
        problem,
        channel: name,
    })
}

/// Pointwise PDE residual at the rows of `bundle`.
///
/// `source` must hold `q` at the same points for Helmholtz and is ignored
/// otherwise.
pub fn pde_residual(
    problem: &ProblemSpec,
    tape: &mut Tape,
    bundle: &DerivativeBundle,
    source: Option<Var>,
) -> Result<Var> {
    let kind = problem.kind;
    let c = &problem.constants;
    let u = bundle.u;
    match kind {
        ProblemKind::AllenCahn => {
            // u_t − ε u_xx + r u³ − r u
            let ut = channel(kind, bundle.first(0), "u_t")?;
            let uxx = channel(kind, bundle.second(1), "u_xx")?;
            let diff = tape.scale(uxx, c.diffusion)?;
            let lhs = tape.sub(ut, diff)?;
            let u2 = tape.square(u)?;
            let u3 = tape.mul(u2, u)?;
            let cubic = tape.sub(u3, u)?;
            let reaction = tape.scale(cubic, c.reaction)?;
            Ok(tape.add(lhs, reaction)?)
        }
        ProblemKind::Helmholtz => {
            // u_xx + u_yy + k² u − q
            let uxx = channel(kind, bundle.second(0), "u_xx")?;
            let uyy = channel(kind, bundle.second(1), "u_yy")?;
            let q = channel(kind, source, "source q")?;
            let lap = tape.add(uxx, uyy)?;
            let ku = tape.scale(u, c.wavenumber * c.wavenumber)?;
            let s = tape.add(lap, ku)?;
            Ok(tape.sub(s, q)?)
        }
        ProblemKind::Burgers => {
            // u_t + u u_x − ν u_xx
            let ut = channel(kind, bundle.first(0), "u_t")?;
            let ux = channel(kind, bundle.first(1), "u_x")?;
            let uxx = channel(kind, bundle.second(1), "u_xx")?;
            let adv = tape.mul(u, ux)?;
            let s = tape.add(ut, adv)?;
            let diff = tape.scale(uxx, c.diffusion)?;
            Ok(tape.sub(s, diff)?)
        }
        ProblemKind::Convection => {
            // u_t + β u_x
            let ut = channel(kind, bundle.first(0), "u_t")?;
            let ux = channel(kind, bundle.first(1), "u_x")?;
            let adv = tape.scale(ux, c.beta)?;
            Ok(tape.add(ut, adv)?)
        }
    }
}

fn column_tensor(values: Vec<f64>) -> Tensor {
    let n = values.len();
    Tensor::matrix(n, 1, values).expect("sized buffer")
}

/// Rows per chunk when accumulating the loss. Small enough that one chunk's
/// tape stays cache resident, which matters far more than call overhead.
pub const DEFAULT_CHUNK_ROWS: usize = 128;

/// Everything about a loss that stays fixed across training iterations:
/// network inputs (normalized when requested), derivative seed factors,
/// source values and initial-condition targets.
#[derive(Clone, Debug)]
pub struct PreparedLoss {
    pub problem: ProblemSpec,
    pub normalize: bool,
    chain: Vec<f64>,
    interior: Tensor,
    source: Option<Tensor>,
    initial: Option<(Tensor, Tensor)>,
    boundary: PreparedBoundary,
    chunk_rows: usize,
}

#[derive(Clone, Debug)]
enum PreparedBoundary {
    Periodic { lower: Tensor, upper: Tensor },
    Dirichlet { points: Tensor },
}

impl PreparedLoss {
    pub fn new(problem: &ProblemSpec, samples: &SampleSet, normalize: bool) -> Result<Self> {
        let kind = problem.kind;
        let norm = normalize.then_some(&problem.bounds);
        let mismatch = |reason: &str| ProblemError::Samples {
            problem: kind,
            reason: reason.to_string(),
        };
        let (interior, chain) = prepare_inputs(&samples.interior, norm)?;
        let source = (kind == ProblemKind::Helmholtz).then(|| {
            let raw = samples.interior.data();
            column_tensor(
                raw.chunks_exact(2)
                    .map(|p| problem.source(p[0], p[1]))
                    .collect(),
            )
        });
        let initial = match (&samples.initial, kind.is_time_dependent()) {
            (Some(pts), true) => {
                let x = pts.column(1)?;
                let target = column_tensor(x.iter().map(|x| problem.initial_condition(*x)).collect());
                Some((prepare_inputs(pts, norm)?.0, target))
            }
            (None, false) => None,
            (None, true) => return Err(mismatch("missing initial-condition points")),
            (Some(_), false) => return Err(mismatch("steady problem given initial points")),
        };
        let boundary = match (&samples.boundary, kind) {
            (
                BoundarySet::Periodic { lower, upper },
                ProblemKind::AllenCahn | ProblemKind::Convection,
            ) => PreparedBoundary::Periodic {
                lower: prepare_inputs(lower, norm)?.0,
                upper: prepare_inputs(upper, norm)?.0,
            },
            (b @ BoundarySet::Dirichlet { .. }, ProblemKind::Helmholtz | ProblemKind::Burgers) => {
                PreparedBoundary::Dirichlet {
                    points: prepare_inputs(&b.stacked(), norm)?.0,
                }
            }
            _ => return Err(mismatch("boundary layout does not match the problem")),
        };
        Ok(Self {
            problem: problem.clone(),
            normalize,
            chain,
            interior,
            source,
            initial,
            boundary,
            chunk_rows: DEFAULT_CHUNK_ROWS,
        })
    }

    /// Rows per chunk in [`Self::value_and_grad`] and [`Self::values`].
    pub fn with_chunk_rows(mut self, rows: usize) -> Self {
        self.chunk_rows = rows.max(1);
        self
    }

    pub fn chunk_rows(&self) -> usize {
        self.chunk_rows
    }

    fn bundle(
        &self,
        tape: &mut Tape,
        net: &NetVars,
        x: &Tensor,
        dirs: &[Direction],
    ) -> Result<DerivativeBundle> {
        Ok(forward_with_derivatives(tape, net, x, dirs, Some(&self.chain))?)
    }

    /// Number of points averaged in `term`; zero for an absent term.
    fn term_rows(&self, term: Term) -> usize {
        let rows = |t: &Tensor| t.shape()[0];
        match term {
            Term::Residual => rows(&self.interior),
            Term::Initial => self.initial.as_ref().map_or(0, |(x, _)| rows(x)),
            Term::Boundary => match &self.boundary {
                PreparedBoundary::Periodic { lower, .. } => rows(lower),
                PreparedBoundary::Dirichlet { points } => rows(points),
            },
        }
    }

    /// Per-point squared errors `[len × 1]` of `term` on rows `start..start + len`.
    fn squares(
        &self,
        tape: &mut Tape,
        net: &NetVars,
        term: Term,
        start: usize,
        len: usize,
    ) -> Result<Var> {
        let p = &self.problem;
        let cut = |t: &Tensor| slice_rows(t, start, len);
        match term {
            Term::Residual => {
                let bundle = self.bundle(tape, net, &cut(&self.interior), &p.kind.directions())?;
                let q = self.source.as_ref().map(|q| tape.input(cut(q)));
                let r = pde_residual(p, tape, &bundle, q)?;
                Ok(tape.square(r)?)
            }
            Term::Initial => {
                let (pts, target) = self.initial.as_ref().expect("initial term has rows");
                let b = self.bundle(tape, net, &cut(pts), &[])?;
                let h = tape.input(cut(target));
                let e = tape.sub(b.u, h)?;
                Ok(tape.square(e)?)
            }
            Term::Boundary => match &self.boundary {
                PreparedBoundary::Periodic { lower, upper } => {
                    let with_slope = p.kind == ProblemKind::AllenCahn;
                    let dirs: &[Direction] = if with_slope { &[Direction::first(1)] } else { &[] };
                    let lo = self.bundle(tape, net, &cut(lower), dirs)?;
                    let hi = self.bundle(tape, net, &cut(upper), dirs)?;
                    let d = tape.sub(hi.u, lo.u)?;
                    let mut sq = tape.square(d)?;
                    if with_slope {
                        let hx = channel(p.kind, hi.first(1), "u_x")?;
                        let lx = channel(p.kind, lo.first(1), "u_x")?;
                        let dx = tape.sub(hx, lx)?;
                        let dx2 = tape.square(dx)?;
                        sq = tape.add(sq, dx2)?;
                    }
                    Ok(sq)
                }
                PreparedBoundary::Dirichlet { points } => {
                    let b = self.bundle(tape, net, &cut(points), &[])?;
                    Ok(tape.square(b.u)?)
                }
            },
        }
    }

    /// Records `L_r`, `L_ic`, `L_bc` and `L_total = λ_r L_r + λ_ic L_ic + λ_bc L_bc`
    /// over all points on one tape.
    pub fn components(&self, tape: &mut Tape, net: &NetVars) -> Result<LossBreakdown> {
        let mut terms = [None; 3];
        for (slot, term) in terms.iter_mut().zip(Term::ALL) {
            let n = self.term_rows(term);
            *slot = Some(if n == 0 {
                tape.input(Tensor::scalar(0.0))
            } else {
                let sq = self.squares(tape, net, term, 0, n)?;
                tape.mean(sq)?
            });
        }
        let [residual, initial, boundary] = terms.map(|t| t.expect("filled above"));
        let w = &self.problem.weights;
        let tr = tape.scale(residual, w.residual)?;
        let ti = tape.scale(initial, w.initial)?;
        let tb = tape.scale(boundary, w.boundary)?;
        let partial = tape.add(tr, ti)?;
        let total = tape.add(partial, tb)?;
        Ok(LossBreakdown {
            residual,
            initial,
            boundary,
            total,
        })
    }

    /// Walks every term in row chunks. Each chunk gets its own tape, so the
    /// working set stays small; `grad`, when given, accumulates the chunk
    /// gradients of `λ · Σ e² / N` in canonical parameter order.
    fn accumulate(&self, params: &NetworkParams, mut grad: Option<&mut [f64]>) -> Result<LossValues> {
        let w = &self.problem.weights;
        let mut means = [0.0; 3];
        for (mean, term) in means.iter_mut().zip(Term::ALL) {
            let n = self.term_rows(term);
            let weight = match term {
                Term::Residual => w.residual,
                Term::Initial => w.initial,
                Term::Boundary => w.boundary,
            };
            let mut sum = 0.0;
            for start in (0..n).step_by(self.chunk_rows) {
                let len = self.chunk_rows.min(n - start);
                let mut tape = Tape::new();
                let net = params.register(&mut tape);
                let sq = self.squares(&mut tape, &net, term, start, len)?;
                let s = tape.sum(sq)?;
                sum += tape.value(s).item().expect("scalar sum");
                if let Some(g) = grad.as_deref_mut() {
                    if weight != 0.0 {
                        let scaled = tape.scale(s, weight / n as f64)?;
                        let vars = net.vars();
                        let grads = tape.backward(scaled, &vars)?;
                        let mut offset = 0;
                        for v in vars {
                            for (acc, d) in g[offset..].iter_mut().zip(grads[v].data()) {
                                *acc += d;
                            }
                            offset += grads[v].len();
                        }
                    }
                }
            }
            if n > 0 {
                *mean = sum / n as f64;
            }
        }
        let [residual, initial, boundary] = means;
        Ok(LossValues {
            total: (w.residual * residual + w.initial * initial) + w.boundary * boundary,
            residual,
            initial,
            boundary,
        })
    }

    /// Loss values and the flattened gradient of `L_total` in canonical
    /// parameter order.
    pub fn value_and_grad(&self, params: &NetworkParams) -> Result<(LossValues, Vec<f64>)> {
        let mut grad = vec![0.0; params.count()];
        let values = self.accumulate(params, Some(&mut grad))?;
        Ok((values, grad))
    }

    pub fn values(&self, params: &NetworkParams) -> Result<LossValues> {
        self.accumulate(params, None)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum Term {
    Residual,
    Initial,
    Boundary,
}

impl Term {
    const ALL: [Term; 3] = [Term::Residual, Term::Initial, Term::Boundary];
}

fn slice_rows(t: &Tensor, start: usize, len: usize) -> Tensor {
    let cols = t.shape()[1];
    Tensor::matrix(len, cols, t.data()[start * cols..(start + len) * cols].to_vec())
        .expect("row range inside tensor")
}

/// Samples `problem` and evaluates its loss terms for `params`.
pub fn loss_components(
    problem: &ProblemSpec,
    params: &NetworkParams,
    samples: &SampleSet,
    normalize: bool,
) -> Result<LossValues> {
    PreparedLoss::new(problem, samples, normalize)?.values(params)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn presets_match_published_settings() {
        let ac = ProblemKind::AllenCahn.preset();
        assert_eq!(ac.weights.initial, 100.0);
        assert_eq!(ac.counts, SampleCounts::new(20000, 100, 200));
        let b = ProblemKind::Burgers.preset();
        assert_eq!((b.defaults.hidden_layers, b.defaults.width), (6, 80));
        assert_eq!(b.defaults.architecture, ArchitectureKind::Sdm);
        let c = ProblemKind::Convection.preset();
        assert_eq!(c.defaults.iterations, 10000);
        assert_eq!(c.constants.beta, 30.0);
        assert_eq!(c.counts, SampleCounts::new(20000, 200, 400));
        let h = ProblemKind::Helmholtz.preset();
        assert_eq!(h.defaults.learning_rate, 2e-3);
        assert_eq!((h.defaults.hidden_layers, h.defaults.width), (4, 50));
        assert_eq!(problem_presets().len(), 4);
    }

    #[test]
    fn source_closed_forms() {
        for y in [-1.0, -0.3, 0.0, 0.7] {
            assert_eq!(source_q(0.0, y, 1.0, 4.0, 1.0), 0.0);
        }
        let v = source_q(0.5, 0.125, 1.0, 4.0, 1.0);
        let expect = 1.0 - 17.0 * PI * PI;
        assert!((v - expect).abs() < 1e-12 * expect.abs());
    }

    #[test]
    fn problem_names_parse() {
        assert_eq!("allan_cahn".parse::<ProblemKind>().unwrap(), ProblemKind::AllenCahn);
        assert_eq!("burgers".parse::<ProblemKind>().unwrap(), ProblemKind::Burgers);
        assert!("heat".parse::<ProblemKind>().is_err());
    }

    #[test]
    fn problem_settings_round_trip_through_json() {
        for p in problem_presets() {
            let s = serde_json::to_string(&p).unwrap();
            assert_eq!(serde_json::from_str::<ProblemSpec>(&s).unwrap(), p);
        }
    }

    #[test]
    fn chunked_accumulation_matches_single_tape() {
        use crate::arch::{init_network, NetworkConfig};
        use crate::sampling::sample;
        for kind in ProblemKind::ALL {
            let mut spec = kind.preset();
            spec.counts = SampleCounts::new(37, if kind.is_time_dependent() { 11 } else { 0 }, 12);
            let samples = sample(&spec.sample_plan(), 3);
            let cfg = NetworkConfig::new(spec.defaults.architecture, 2, 3, 6, 1);
            let params = init_network(&cfg, 5).unwrap();
            let loss = PreparedLoss::new(&spec, &samples, true).unwrap().with_chunk_rows(8);
            let (values, grad) = loss.value_and_grad(&params).unwrap();

            let mut tape = Tape::new();
            let net = params.register(&mut tape);
            let full = loss.components(&mut tape, &net).unwrap();
            let expect = full.values(&tape);
            let g = tape.backward(full.total, &net.vars()).unwrap();
            let flat: Vec<f64> = net.vars().iter().flat_map(|v| g[*v].data().to_vec()).collect();

            let close = |a: f64, b: f64| (a - b).abs() <= 1e-12 * (1.0 + b.abs());
            assert!(close(values.total, expect.total), "{kind}");
            assert!(close(values.residual, expect.residual), "{kind}");
            assert!(close(values.initial, expect.initial), "{kind}");
            assert!(close(values.boundary, expect.boundary), "{kind}");
            assert_eq!(grad.len(), flat.len());
            for (a, b) in grad.iter().zip(&flat) {
                assert!(close(*a, *b), "{kind}: {a} vs {b}");
            }
            assert_eq!(loss.values(&params).unwrap(), values);
        }
    }
}
