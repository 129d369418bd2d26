//! Independent oracles shared by the integration tests. Nothing here touches
//! the tape: networks are evaluated point by point in straight-line code and
//! derivatives come from hyper-dual numbers.

#![allow(dead_code)]

use std::f64::consts::PI;
use std::ops::{Add, Mul, Sub};

use dmpinn::arch::{ArchitectureKind, NetworkParams, ProductTerms};
use dmpinn::reference::Scalar;

/// `a + b ε₁ + c ε₂ + d ε₁ε₂` with `ε₁² = ε₂² = 0`. Seeding `b = c = 1`
/// along one input gives the first derivative in `b` and the second in `d`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct HyperDual {
    pub a: f64,
    pub b: f64,
    pub c: f64,
    pub d: f64,
}

impl HyperDual {
    pub fn constant(a: f64) -> Self {
        Self { a, b: 0.0, c: 0.0, d: 0.0 }
    }

    pub fn seeded(a: f64, slope: f64) -> Self {
        Self { a, b: slope, c: slope, d: 0.0 }
    }

    fn chain(self, f: f64, f1: f64, f2: f64) -> Self {
        Self {
            a: f,
            b: f1 * self.b,
            c: f1 * self.c,
            d: f1 * self.d + f2 * self.b * self.c,
        }
    }
}

impl Add for HyperDual {
    type Output = Self;
    fn add(self, o: Self) -> Self {
        Self { a: self.a + o.a, b: self.b + o.b, c: self.c + o.c, d: self.d + o.d }
    }
}

impl Sub for HyperDual {
    type Output = Self;
    fn sub(self, o: Self) -> Self {
        Self { a: self.a - o.a, b: self.b - o.b, c: self.c - o.c, d: self.d - o.d }
    }
}

impl Mul for HyperDual {
    type Output = Self;
    fn mul(self, o: Self) -> Self {
        Self {
            a: self.a * o.a,
            b: self.a * o.b + self.b * o.a,
            c: self.a * o.c + self.c * o.a,
            d: self.a * o.d + self.b * o.c + self.c * o.b + self.d * o.a,
        }
    }
}

impl Mul<f64> for HyperDual {
    type Output = Self;
    fn mul(self, k: f64) -> Self {
        Self { a: self.a * k, b: self.b * k, c: self.c * k, d: self.d * k }
    }
}

impl Scalar for HyperDual {
    fn sin(self) -> Self {
        let (s, c) = self.a.sin_cos();
        self.chain(s, c, -s)
    }
}

/// Arithmetic for the straight-line network.
pub trait Num: Scalar {
    fn lift(v: f64) -> Self;
    fn tanh(self) -> Self;
}

impl Num for f64 {
    fn lift(v: f64) -> Self {
        v
    }
    fn tanh(self) -> Self {
        f64::tanh(self)
    }
}

impl Num for HyperDual {
    fn lift(v: f64) -> Self {
        Self::constant(v)
    }
    fn tanh(self) -> Self {
        let t = self.a.tanh();
        let s = 1.0 - t * t;
        self.chain(t, s, -2.0 * t * s)
    }
}

fn dense<T: Num>(w: &[f64], b: &[f64], h: &[T], act: bool) -> Vec<T> {
    let inp = h.len();
    b.iter()
        .enumerate()
        .map(|(o, bias)| {
            let mut z = T::lift(*bias);
            for i in 0..inp {
                z = z + h[i] * w[o * inp + i];
            }
            if act {
                z.tanh()
            } else {
                z
            }
        })
        .collect()
}

fn times<T: Num>(a: &[T], b: &[T]) -> Vec<T> {
    a.iter().zip(b).map(|(x, y)| *x * *y).collect()
}

fn plus<T: Num>(a: &[T], b: &[T]) -> Vec<T> {
    a.iter().zip(b).map(|(x, y)| *x + *y).collect()
}

/// One network evaluation at a single point, written out directly from the
/// layer recurrences.
pub fn naive_forward<T: Num>(p: &NetworkParams, x: &[T]) -> T {
    let cfg = &p.config;
    let layer = |k: usize, h: &[T], act: bool| {
        dense(p.layers[k].weight.data(), p.layers[k].bias.data(), h, act)
    };
    let l = cfg.hidden_layers;
    let last = match cfg.kind {
        ArchitectureKind::Vanilla => {
            let mut h = x.to_vec();
            for k in 0..l {
                h = layer(k, &h, true);
            }
            h
        }
        ArchitectureKind::Resnet => {
            let mut h = layer(0, x, true);
            for k in 1..l {
                h = plus(&h, &layer(k, &h, true));
            }
            h
        }
        ArchitectureKind::ModifiedMlp => {
            let [eu, ev] = p.encoders.as_ref().unwrap();
            let u = dense(eu.weight.data(), eu.bias.data(), x, true);
            let v = dense(ev.weight.data(), ev.bias.data(), x, true);
            let mut h = x.to_vec();
            for k in 0..l {
                let z = layer(k, &h, true);
                h = (0..z.len())
                    .map(|i| (T::lift(1.0) - z[i]) * u[i] + z[i] * v[i])
                    .collect();
            }
            h
        }
        ArchitectureKind::Dm => {
            // Keep every H⁽ⁱ⁾ and every activation, then form the product afresh.
            let mut hs = vec![layer(0, x, true)];
            let mut acts = hs.clone();
            for k in 1..l {
                let a = layer(k, &hs[k - 1], true);
                let pool = match cfg.product_terms {
                    ProductTerms::HiddenOutputs => &hs,
                    ProductTerms::Activations => &acts,
                };
                let mut h = a.clone();
                for term in pool.iter() {
                    h = times(&h, term);
                }
                hs.push(h);
                acts.push(a);
            }
            hs.pop().unwrap()
        }
        ArchitectureKind::Sdm => {
            let mut hs = vec![layer(0, x, true)];
            let mut acts = hs.clone();
            for k in 1..l {
                let a = layer(k, &hs[k - 1], true);
                let pool = match cfg.product_terms {
                    ProductTerms::HiddenOutputs => &hs,
                    ProductTerms::Activations => &acts,
                };
                // S(k) = {k, k − s, k − 2s, …} in 1-based layer numbering.
                let mut m = a.clone();
                let mut i = k as isize - 1;
                while i >= 0 {
                    m = times(&m, &pool[i as usize]);
                    i -= cfg.skip_stride as isize;
                }
                hs.push(plus(&hs[k - 1], &m));
                acts.push(a);
            }
            hs.pop().unwrap()
        }
    };
    layer(l, &last, false)[0]
}

/// `(u, ∂u/∂x_dim, ∂²u/∂x_dim²)` at a raw point, through the affine map onto
/// `[−1, 1]` given by `bounds` (or none).
pub fn naive_jet(
    p: &NetworkParams,
    raw: &[f64],
    bounds: Option<&[(f64, f64)]>,
    dim: usize,
) -> (f64, f64, f64) {
    let x: Vec<HyperDual> = raw
        .iter()
        .enumerate()
        .map(|(d, v)| {
            let (xv, slope) = match bounds {
                Some(b) => {
                    let (lo, hi) = b[d];
                    (2.0 * (v - lo) / (hi - lo) - 1.0, 2.0 / (hi - lo))
                }
                None => (*v, 1.0),
            };
            if d == dim {
                HyperDual::seeded(xv, slope)
            } else {
                HyperDual::constant(xv)
            }
        })
        .collect();
    let u = naive_forward(p, &x);
    (u.a, u.b, u.d)
}

/// Periodic viscous Burgers on `[−1, 1)` with `u(0, x) = −sin(πx)`:
/// sixth-order central differences in space, classical RK4 in time, and the
/// skew-symmetric split `(u u_x + (u²)_x) / 3` of the advection term.
/// Returns the node coordinates and snapshots every `save_every` time units.
pub fn burgers_fd(nu: f64, n: usize, dt: f64, t_end: f64, save_every: f64) -> (Vec<f64>, Vec<Vec<f64>>) {
    let h = 2.0 / n as f64;
    let x: Vec<f64> = (0..n).map(|j| -1.0 + h * j as f64).collect();
    let mut u: Vec<f64> = x.iter().map(|x| -(PI * x).sin()).collect();
    let d1 = [-1.0 / 60.0, 3.0 / 20.0, -3.0 / 4.0, 0.0, 3.0 / 4.0, -3.0 / 20.0, 1.0 / 60.0];
    let d2 = [1.0 / 90.0, -3.0 / 20.0, 3.0 / 2.0, -49.0 / 18.0, 3.0 / 2.0, -3.0 / 20.0, 1.0 / 90.0];
    let rhs = |u: &[f64], out: &mut [f64]| {
        let sq: Vec<f64> = u.iter().map(|v| v * v).collect();
        for j in 0..n {
            let (mut ux, mut fx, mut uxx) = (0.0, 0.0, 0.0);
            for (s, (c1, c2)) in d1.iter().zip(&d2).enumerate() {
                let idx = (j + n + s - 3) % n;
                ux += c1 * u[idx];
                fx += c1 * sq[idx];
                uxx += c2 * u[idx];
            }
            out[j] = -(u[j] * ux + fx) / (3.0 * h) + nu * uxx / (h * h);
        }
    };
    let steps = (t_end / dt).round() as usize;
    let stride = (save_every / dt).round() as usize;
    let mut snaps = vec![u.clone()];
    let (mut k1, mut k2, mut k3, mut k4) = (vec![0.0; n], vec![0.0; n], vec![0.0; n], vec![0.0; n]);
    let mut tmp = vec![0.0; n];
    for step in 1..=steps {
        rhs(&u, &mut k1);
        for j in 0..n {
            tmp[j] = u[j] + 0.5 * dt * k1[j];
        }
        rhs(&tmp, &mut k2);
        for j in 0..n {
            tmp[j] = u[j] + 0.5 * dt * k2[j];
        }
        rhs(&tmp, &mut k3);
        for j in 0..n {
            tmp[j] = u[j] + dt * k3[j];
        }
        rhs(&tmp, &mut k4);
        for j in 0..n {
            u[j] += dt / 6.0 * (k1[j] + 2.0 * k2[j] + 2.0 * k3[j] + k4[j]);
        }
        if step % stride == 0 {
            snaps.push(u.clone());
        }
    }
    (x, snaps)
}

/// Central difference `(f(θ+ε) − f(θ−ε)) / 2ε` of a scalar function.
pub fn central(f: impl Fn(f64) -> f64, at: f64, eps: f64) -> f64 {
    (f(at + eps) - f(at - eps)) / (2.0 * eps)
}

pub fn rel_err(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs().max(1e-12)
}
