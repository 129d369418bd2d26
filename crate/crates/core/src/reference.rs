//! Reference solutions on uniform evaluation grids.
//!
//! Convection and Helmholtz have closed forms. Burgers uses the Cole–Hopf
//! integral, evaluated by composite Gauss–Legendre quadrature with a
//! refinement check per cell. Allen–Cahn is integrated with an exponential
//! time-differencing Runge–Kutta scheme in Fourier space and accepted only if
//! a run at half the resolution agrees.

use std::f64::consts::PI;
use std::io::Write;
use std::ops::{Add, Mul, Sub};

use rustfft::num_complex::Complex64;
use rustfft::{Fft, FftPlanner};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::problems::{ProblemKind, ProblemSpec};
use crate::tape::Tensor;
use crate::Compact;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ReferenceError {
    #[error("grid needs at least 2 points per axis, got {space}x{time}")]
    Resolution { space: usize, time: usize },
    #[error(
        "Cole-Hopf quadrature did not converge at t={t}, x={x}: refinement changed the value by {change:e}"
    )]
    Quadrature { t: f64, x: f64, change: f64 },
    #[error("spectral solution changed by {change:e} under refinement (tolerance {tol:e})")]
    NotConverged { change: f64, tol: f64 },
    #[error("prediction has {got} values, grid has {expected}")]
    Length { expected: usize, got: usize },
    #[error("io: {0}")]
    Io(String),
}

pub type Result<T> = std::result::Result<T, ReferenceError>;

/// How the reference values were obtained.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Provenance {
    Analytic,
    ColeHopf,
    Spectral,
}

/// Points per axis of an evaluation grid. Time-dependent problems use
/// `time × space`; Helmholtz uses `space × space` and ignores `time`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct GridResolution {
    pub space: usize,
    pub time: usize,
}

impl Default for GridResolution {
    fn default() -> Self {
        Self {
            space: 256,
            time: 101,
        }
    }
}

impl GridResolution {
    pub fn new(space: usize, time: usize) -> Self {
        Self { space, time }
    }

    /// Both axes doubled in spacing density (`n → 2n − 1`, nesting the grid).
    pub fn refined(self) -> Self {
        Self {
            space: 2 * self.space - 1,
            time: 2 * self.time - 1,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Axis {
    pub label: String,
    pub values: Vec<f64>,
}

/// Reference values on the tensor grid `axes[0] × axes[1]`, stored with the
/// first axis outermost. Axes follow the network input order.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReferenceGrid {
    pub problem: ProblemKind,
    pub axes: [Axis; 2],
    pub values: Vec<f64>,
    pub provenance: Provenance,
}

impl ReferenceGrid {
    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn shape(&self) -> [usize; 2] {
        [self.axes[0].values.len(), self.axes[1].values.len()]
    }

    /// Grid points as an `[n × 2]` network input, in storage order.
    pub fn points(&self) -> Tensor {
        let [a, b] = &self.axes;
        let mut data = Vec::with_capacity(2 * self.len());
        for &p in &a.values {
            for &q in &b.values {
                data.push(p);
                data.push(q);
            }
        }
        Tensor::matrix(self.len(), 2, data).expect("sized buffer")
    }

    pub fn values_tensor(&self) -> Tensor {
        Tensor::matrix(self.len(), 1, self.values.clone()).expect("sized buffer")
    }

    /// Writes `x,(t|y),u_ref` and, with a prediction, `u_pred,abs_err`.
    /// The spatial `x` column always comes first.
    pub fn write_csv<W: Write>(&self, mut out: W, prediction: Option<&[f64]>) -> Result<()> {
        if let Some(p) = prediction {
            if p.len() != self.len() {
                return Err(ReferenceError::Length {
                    expected: self.len(),
                    got: p.len(),
                });
            }
        }
        let swap = self.axes[0].label != "x";
        let (first, second) = if swap { (1, 0) } else { (0, 1) };
        let io = |e: std::io::Error| ReferenceError::Io(e.to_string());
        let mut header = format!("{},{},u_ref", self.axes[first].label, self.axes[second].label);
        if prediction.is_some() {
            header.push_str(",u_pred,abs_err");
        }
        writeln!(out, "{header}").map_err(io)?;
        let n1 = self.axes[1].values.len();
        for (idx, u) in self.values.iter().enumerate() {
            let coords = [self.axes[0].values[idx / n1], self.axes[1].values[idx % n1]];
            write!(
                out,
                "{},{},{}",
                Compact(coords[first]),
                Compact(coords[second]),
                Compact(*u)
            ).map_err(io)?;
            if let Some(p) = prediction {
                write!(out, ",{},{}", Compact(p[idx]), Compact((p[idx] - u).abs())).map_err(io)?;
            }
            writeln!(out).map_err(io)?;
        }
        Ok(())
    }
}

/// `n` uniformly spaced values from `lo` to `hi` with exact endpoints.
pub fn linspace(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    match n {
        0 => Vec::new(),
        1 => vec![lo],
        _ => {
            let step = (hi - lo) / (n - 1) as f64;
            let mut v: Vec<f64> = (0..n).map(|i| lo + step * i as f64).collect();
            v[n - 1] = hi;
            v
        }
    }
}

/// Minimal arithmetic the closed-form solutions need, so they can also be
/// evaluated on number types that carry derivatives.
pub trait Scalar:
    Copy + Add<Output = Self> + Sub<Output = Self> + Mul<Output = Self> + Mul<f64, Output = Self>
{
    fn sin(self) -> Self;
}

impl Scalar for f64 {
    fn sin(self) -> Self {
        f64::sin(self)
    }
}

/// `u(t, x) = sin(x − βt)`.
pub fn convection_exact<T: Scalar>(t: T, x: T, beta: f64) -> T {
    (x - t * beta).sin()
}

/// `u(x, y) = sin(a₁πx) sin(a₂πy)`.
pub fn helmholtz_exact<T: Scalar>(x: T, y: T, a1: f64, a2: f64) -> T {
    (x * (a1 * PI)).sin() * (y * (a2 * PI)).sin()
}

/// Reference grid for `problem` at the given resolution.
pub fn reference(problem: &ProblemSpec, res: GridResolution) -> Result<ReferenceGrid> {
    match problem.kind {
        ProblemKind::Convection => reference_convection(problem, res),
        ProblemKind::Helmholtz => reference_helmholtz(problem, res),
        ProblemKind::Burgers => reference_burgers(problem, res),
        ProblemKind::AllenCahn => reference_allen_cahn(problem, res),
    }
}

fn axes(problem: &ProblemSpec, res: GridResolution) -> Result<[Axis; 2]> {
    let second = if problem.kind.is_time_dependent() {
        res.time
    } else {
        res.space
    };
    if res.space < 2 || second < 2 {
        return Err(ReferenceError::Resolution {
            space: res.space,
            time: second,
        });
    }
    let b = &problem.bounds;
    let counts = if problem.kind.is_time_dependent() {
        [res.time, res.space]
    } else {
        [res.space, res.space]
    };
    Ok([0, 1].map(|d| {
        let iv = b.interval(d);
        Axis {
            label: iv.label.clone(),
            values: linspace(iv.lo, iv.hi, counts[d]),
        }
    }))
}

fn tabulate(
    problem: &ProblemSpec,
    axes: [Axis; 2],
    provenance: Provenance,
    mut f: impl FnMut(f64, f64) -> Result<f64>,
) -> Result<ReferenceGrid> {
    let mut values = Vec::with_capacity(axes[0].values.len() * axes[1].values.len());
    for &p in &axes[0].values {
        for &q in &axes[1].values {
            values.push(f(p, q)?);
        }
    }
    Ok(ReferenceGrid {
        problem: problem.kind,
        axes,
        values,
        provenance,
    })
}

/// Travelling wave `sin(x − βt)`. The right edge `x = 2π` is evaluated as
/// `x = 0`, so the periodic boundary holds exactly on the grid.
pub fn reference_convection(problem: &ProblemSpec, res: GridResolution) -> Result<ReferenceGrid> {
    let beta = problem.constants.beta;
    let iv = problem.bounds.interval(1).clone();
    let axes = axes(problem, res)?;
    tabulate(problem, axes, Provenance::Analytic, |t, x| {
        let x = if x >= iv.hi { x - iv.width() } else { x };
        Ok(convection_exact(t, x, beta))
    })
}

pub fn reference_helmholtz(problem: &ProblemSpec, res: GridResolution) -> Result<ReferenceGrid> {
    let c = &problem.constants;
    let axes = axes(problem, res)?;
    tabulate(problem, axes, Provenance::Analytic, |x, y| {
        Ok(helmholtz_exact(x, y, c.a1, c.a2))
    })
}

pub fn reference_burgers(problem: &ProblemSpec, res: GridResolution) -> Result<ReferenceGrid> {
    let nu = problem.constants.diffusion;
    let quad = ColeHopf::new(nu);
    let axes = axes(problem, res)?;
    tabulate(problem, axes, Provenance::ColeHopf, |t, x| quad.eval(t, x))
}

/// Gauss–Legendre nodes and weights on `[−1, 1]` by Newton iteration on `P_n`.
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    let mut nodes = vec![0.0; n];
    let mut weights = vec![0.0; n];
    for i in 0..n.div_ceil(2) {
        let mut x = (PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (mut p0, mut p1) = (1.0, x);
            for k in 2..=n {
                let p2 = ((2 * k - 1) as f64 * x * p1 - (k - 1) as f64 * p0) / k as f64;
                p0 = p1;
                p1 = p2;
            }
            dp = n as f64 * (x * p1 - p0) / (x * x - 1.0);
            let dx = p1 / dp;
            x -= dx;
            if dx.abs() < 1e-16 {
                break;
            }
        }
        nodes[i] = x;
        nodes[n - 1 - i] = -x;
        let w = 2.0 / ((1.0 - x * x) * dp * dp);
        weights[i] = w;
        weights[n - 1 - i] = w;
    }
    (nodes, weights)
}

/// Cole–Hopf solution of `u_t + u u_x = ν u_xx` with `u(0, x) = −sin(πx)`:
///
/// `u(t, x) = −∫ sin(π(x−η)) F(η) dη / ∫ F(η) dη`,
/// `F(η) = exp(−cos(π(x−η)) / (2πν) − η² / (4νt))`.
///
/// The Gaussian factor confines the integrand to `|η| ≤ R` with
/// `R² = 1000νt` (`e^{−250}` beyond); panels are no wider than half the
/// Gaussian width or 0.0225, whichever is smaller. Exponents are shifted by
/// their maximum before exponentiation.
#[derive(Clone, Debug)]
pub struct ColeHopf {
    nu: f64,
    nodes: Vec<f64>,
    weights: Vec<f64>,
    /// Accepted change between `p` and `2p` panels.
    pub tol: f64,
}

impl ColeHopf {
    pub fn new(nu: f64) -> Self {
        let (nodes, weights) = gauss_legendre(16);
        Self {
            nu,
            nodes,
            weights,
            tol: 1e-9,
        }
    }

    pub fn eval(&self, t: f64, x: f64) -> Result<f64> {
        if t == 0.0 {
            return Ok(-(PI * x).sin());
        }
        let s = (2.0 * self.nu * t).sqrt();
        let radius = (1000.0 * self.nu * t).sqrt();
        let h = s.min(0.045) / 2.0;
        let panels = ((2.0 * radius / h).ceil() as usize).max(8);
        let coarse = self.integrate(t, x, radius, panels);
        let fine = self.integrate(t, x, radius, 2 * panels);
        let change = (coarse - fine).abs();
        if !(change <= self.tol) || !fine.is_finite() {
            return Err(ReferenceError::Quadrature { t, x, change });
        }
        Ok(fine)
    }

    fn integrate(&self, t: f64, x: f64, radius: f64, panels: usize) -> f64 {
        let width = 2.0 * radius / panels as f64;
        let s2 = 4.0 * self.nu * t;
        let k = 1.0 / (2.0 * PI * self.nu);
        let n = panels * self.nodes.len();
        let mut log_f = Vec::with_capacity(n);
        let mut sines = Vec::with_capacity(n);
        let mut w = Vec::with_capacity(n);
        for p in 0..panels {
            let mid = -radius + (p as f64 + 0.5) * width;
            for (node, weight) in self.nodes.iter().zip(&self.weights) {
                let eta = mid + 0.5 * width * node;
                let y = PI * (x - eta);
                log_f.push(-y.cos() * k - eta * eta / s2);
                sines.push(y.sin());
                w.push(0.5 * width * weight);
            }
        }
        let peak = log_f.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let (mut num, mut den) = (0.0, 0.0);
        for i in 0..n {
            let f = (log_f[i] - peak).exp() * w[i];
            num += sines[i] * f;
            den += f;
        }
        -num / den
    }
}

/// ETDRK4 integrator for `u_t = ε u_xx + r u − r u³` on the periodic
/// interval `[−1, 1)` with `u(0, x) = x² cos(πx)`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AllenCahnSolver {
    pub modes: usize,
    /// Largest allowed step; the actual step divides each output interval.
    pub max_dt: f64,
    pub diffusion: f64,
    pub reaction: f64,
}

/// Fourier coefficients of the solution at each requested time.
#[derive(Clone, Debug)]
pub struct SpectralField {
    pub times: Vec<f64>,
    modes: usize,
    spectra: Vec<Vec<Complex64>>,
}

impl AllenCahnSolver {
    pub fn new(modes: usize, max_dt: f64, diffusion: f64, reaction: f64) -> Self {
        Self {
            modes,
            max_dt,
            diffusion,
            reaction,
        }
    }

    /// Node coordinates `x_j = −1 + 2j/N`.
    pub fn nodes(&self) -> Vec<f64> {
        (0..self.modes)
            .map(|j| -1.0 + 2.0 * j as f64 / self.modes as f64)
            .collect()
    }

    /// Solves up to `times` (uniformly spaced, starting at 0).
    pub fn solve(&self, times: &[f64]) -> SpectralField {
        let n = self.modes;
        let mut planner = FftPlanner::new();
        let fwd = planner.plan_fft_forward(n);
        let inv = planner.plan_fft_inverse(n);
        let mut v: Vec<Complex64> = self
            .nodes()
            .iter()
            .map(|x| Complex64::new(x * x * (PI * x).cos(), 0.0))
            .collect();
        fwd.process(&mut v);
        let mut spectra = vec![v.clone()];
        if times.len() < 2 {
            return SpectralField {
                times: times.to_vec(),
                modes: n,
                spectra,
            };
        }
        let interval = times[1] - times[0];
        let substeps = (interval / self.max_dt - 1e-9).ceil().max(1.0) as usize;
        let dt = interval / substeps as f64;
        let coef = EtdCoefficients::new(self, dt);
        let mut work = Workspace::new(n);
        for _ in 1..times.len() {
            for _ in 0..substeps {
                self.step(&coef, &mut v, &mut work, fwd.as_ref(), inv.as_ref());
            }
            spectra.push(v.clone());
        }
        SpectralField {
            times: times.to_vec(),
            modes: n,
            spectra,
        }
    }

    /// `N(v) = −r · F[(F⁻¹ v)³]`; the `+r u` part lives in the linear operator.
    fn nonlinear(
        &self,
        v: &[Complex64],
        out: &mut [Complex64],
        fwd: &dyn Fft<f64>,
        inv: &dyn Fft<f64>,
    ) {
        out.copy_from_slice(v);
        inv.process(out);
        let scale = 1.0 / self.modes as f64;
        for z in out.iter_mut() {
            let u = z.re * scale;
            *z = Complex64::new(-self.reaction * u * u * u, 0.0);
        }
        fwd.process(out);
    }

    fn step(
        &self,
        c: &EtdCoefficients,
        v: &mut [Complex64],
        w: &mut Workspace,
        fwd: &dyn Fft<f64>,
        inv: &dyn Fft<f64>,
    ) {
        self.nonlinear(v, &mut w.nv, fwd, inv);
        for k in 0..v.len() {
            w.a[k] = v[k] * c.e2[k] + w.nv[k] * c.q[k];
        }
        self.nonlinear(&w.a, &mut w.na, fwd, inv);
        for k in 0..v.len() {
            w.b[k] = v[k] * c.e2[k] + w.na[k] * c.q[k];
        }
        self.nonlinear(&w.b, &mut w.nb, fwd, inv);
        for k in 0..v.len() {
            w.c[k] = w.a[k] * c.e2[k] + (w.nb[k] * 2.0 - w.nv[k]) * c.q[k];
        }
        self.nonlinear(&w.c, &mut w.nc, fwd, inv);
        for k in 0..v.len() {
            v[k] = v[k] * c.e[k]
                + w.nv[k] * c.f1[k]
                + (w.na[k] + w.nb[k]) * (2.0 * c.f2[k])
                + w.nc[k] * c.f3[k];
        }
    }
}

struct Workspace {
    nv: Vec<Complex64>,
    na: Vec<Complex64>,
    nb: Vec<Complex64>,
    nc: Vec<Complex64>,
    a: Vec<Complex64>,
    b: Vec<Complex64>,
    c: Vec<Complex64>,
}

impl Workspace {
    fn new(n: usize) -> Self {
        let z = vec![Complex64::new(0.0, 0.0); n];
        Self {
            nv: z.clone(),
            na: z.clone(),
            nb: z.clone(),
            nc: z.clone(),
            a: z.clone(),
            b: z.clone(),
            c: z,
        }
    }
}

/// Per-mode ETDRK4 coefficients, with the φ-functions evaluated by a contour
/// mean over 32 points on a unit circle around `hL` to avoid cancellation.
struct EtdCoefficients {
    e: Vec<f64>,
    e2: Vec<f64>,
    q: Vec<f64>,
    f1: Vec<f64>,
    f2: Vec<f64>,
    f3: Vec<f64>,
}

impl EtdCoefficients {
    fn new(s: &AllenCahnSolver, dt: f64) -> Self {
        const CONTOUR: usize = 32;
        let n = s.modes;
        let roots: Vec<Complex64> = (1..=CONTOUR)
            .map(|j| Complex64::from_polar(1.0, PI * (j as f64 - 0.5) / CONTOUR as f64))
            .collect();
        let mut c = Self {
            e: Vec::with_capacity(n),
            e2: Vec::with_capacity(n),
            q: Vec::with_capacity(n),
            f1: Vec::with_capacity(n),
            f2: Vec::with_capacity(n),
            f3: Vec::with_capacity(n),
        };
        for j in 0..n {
            let k = PI * wavenumber(j, n) as f64;
            let l = -s.diffusion * k * k + s.reaction;
            c.e.push((dt * l).exp());
            c.e2.push((dt * l / 2.0).exp());
            let (mut q, mut f1, mut f2, mut f3) = (0.0, 0.0, 0.0, 0.0);
            for r in &roots {
                let z = r + dt * l;
                let ez = z.exp();
                let z3 = z * z * z;
                q += (((z / 2.0).exp() - 1.0) / z).re;
                f1 += ((-4.0 - z + ez * (4.0 - 3.0 * z + z * z)) / z3).re;
                f2 += ((2.0 + z + ez * (z - 2.0)) / z3).re;
                f3 += ((-4.0 - 3.0 * z - z * z + ez * (4.0 - z)) / z3).re;
            }
            let m = CONTOUR as f64;
            c.q.push(dt * q / m);
            c.f1.push(dt * f1 / m);
            c.f2.push(dt * f2 / m);
            c.f3.push(dt * f3 / m);
        }
        c
    }
}

/// Signed wavenumber of FFT bin `j` for length `n`.
fn wavenumber(j: usize, n: usize) -> i64 {
    if j < n.div_ceil(2) {
        j as i64
    } else {
        j as i64 - n as i64
    }
}

impl SpectralField {
    pub fn modes(&self) -> usize {
        self.modes
    }

    /// Trigonometric interpolant at `xs` for every stored time, time-major.
    pub fn sample(&self, xs: &[f64]) -> Vec<f64> {
        let n = self.modes;
        let half = n / 2;
        let inv_n = 1.0 / n as f64;
        // cos/sin of πk(x+1) for k = 0..=N/2, one row per x.
        let width = half + 1;
        let mut cos = vec![0.0; xs.len() * width];
        let mut sin = vec![0.0; xs.len() * width];
        for (i, x) in xs.iter().enumerate() {
            // Reduce the phase argument mod 2 to keep it exact for large k.
            let s = x + 1.0;
            for k in 0..width {
                let arg = ((k as f64) * s).rem_euclid(2.0);
                let (sn, cs) = (PI * arg).sin_cos();
                cos[i * width + k] = cs;
                sin[i * width + k] = sn;
            }
        }
        let mut out = Vec::with_capacity(self.times.len() * xs.len());
        for v in &self.spectra {
            for i in 0..xs.len() {
                let row = i * width;
                let mut acc = v[0].re;
                for k in 1..half {
                    acc += 2.0 * (v[k].re * cos[row + k] - v[k].im * sin[row + k]);
                }
                if n % 2 == 0 {
                    acc += v[half].re * cos[row + half];
                } else {
                    let k = half;
                    acc += 2.0 * (v[k].re * cos[row + k] - v[k].im * sin[row + k]);
                }
                out.push(acc * inv_n);
            }
        }
        out
    }
}

/// Default Allen–Cahn discretization: 16384 modes, steps of at most 1e-4.
///
/// The initial condition is only continuous across the periodic seam (its
/// slope jumps at x = ±1), so Fourier coefficients decay slowly until
/// diffusion smooths the corner. The mode count is sized for that seam.
pub const ALLEN_CAHN_MODES: usize = 16384;
pub const ALLEN_CAHN_DT: f64 = 1e-4;
/// Maximum change tolerated when halving modes and doubling the step.
pub const ALLEN_CAHN_TOL: f64 = 1e-5;

/// Converged spectral reference. Runs the solver at the default resolution
/// and at half of it, and fails if the two disagree by more than
/// [`ALLEN_CAHN_TOL`] anywhere on the grid.
pub fn reference_allen_cahn(problem: &ProblemSpec, res: GridResolution) -> Result<ReferenceGrid> {
    let fine = AllenCahnSolver::new(
        ALLEN_CAHN_MODES,
        ALLEN_CAHN_DT,
        problem.constants.diffusion,
        problem.constants.reaction,
    );
    let coarse = AllenCahnSolver {
        modes: fine.modes / 2,
        max_dt: 2.0 * fine.max_dt,
        ..fine
    };
    reference_allen_cahn_with(problem, res, &fine, &coarse, ALLEN_CAHN_TOL)
}

/// [`reference_allen_cahn`] with explicit solver settings.
pub fn reference_allen_cahn_with(
    problem: &ProblemSpec,
    res: GridResolution,
    fine: &AllenCahnSolver,
    coarse: &AllenCahnSolver,
    tol: f64,
) -> Result<ReferenceGrid> {
    let axes = axes(problem, res)?;
    let [times, xs] = [&axes[0].values, &axes[1].values];
    let mut u_fine = fine.solve(times).sample(xs);
    let mut u_coarse = coarse.solve(times).sample(xs);
    // Between nodes the trigonometric interpolant of the kinked initial
    // condition rings; the t = 0 row is the initial condition itself.
    if times.first() == Some(&0.0) {
        for (j, x) in xs.iter().enumerate() {
            let u0 = x * x * (PI * x).cos();
            u_fine[j] = u0;
            u_coarse[j] = u0;
        }
    }
    let change = u_fine
        .iter()
        .zip(&u_coarse)
        .map(|(a, b)| (a - b).abs())
        .fold(0.0, f64::max);
    if !(change <= tol) {
        return Err(ReferenceError::NotConverged { change, tol });
    }
    Ok(ReferenceGrid {
        problem: problem.kind,
        axes,
        values: u_fine,
        provenance: Provenance::Spectral,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn linspace_hits_endpoints() {
        let v = linspace(0.0, 2.0 * PI, 256);
        assert_eq!(v[0], 0.0);
        assert_eq!(v[255], 2.0 * PI);
        assert_eq!(linspace(1.0, 2.0, 1), vec![1.0]);
    }

    #[test]
    fn gauss_legendre_integrates_polynomials_exactly() {
        let (x, w) = gauss_legendre(16);
        assert!((w.iter().sum::<f64>() - 2.0).abs() < 1e-14);
        // Degree 30 is within the 2n − 1 = 31 exactness range.
        let integral: f64 = x.iter().zip(&w).map(|(x, w)| w * x.powi(30)).sum();
        assert!((integral - 2.0 / 31.0).abs() < 1e-14);
        let (x5, _) = gauss_legendre(5);
        assert!(x5[2].abs() < 1e-15);
    }

    #[test]
    fn wavenumbers_follow_fft_order() {
        let ks: Vec<i64> = (0..6).map(|j| wavenumber(j, 6)).collect();
        assert_eq!(ks, vec![0, 1, 2, -3, -2, -1]);
    }

    #[test]
    fn spectral_sample_reproduces_nodes() {
        let s = AllenCahnSolver::new(64, 1e-3, 1e-4, 5.0);
        let field = s.solve(&[0.0]);
        let nodes = s.nodes();
        let u = field.sample(&nodes);
        for (x, u) in nodes.iter().zip(&u) {
            assert!((u - x * x * (PI * x).cos()).abs() < 1e-12);
        }
    }

    #[test]
    fn csv_puts_space_first() {
        let spec = ProblemKind::Convection.preset();
        let g = reference_convection(&spec, GridResolution::new(3, 2)).unwrap();
        let mut buf = Vec::new();
        g.write_csv(&mut buf, Some(&vec![0.0; 6])).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let mut lines = text.lines();
        assert_eq!(lines.next(), Some("x,t,u_ref,u_pred,abs_err"));
        assert_eq!(text.lines().count(), 7);
        assert!(g.write_csv(Vec::new(), Some(&[1.0])).is_err());
    }
}
