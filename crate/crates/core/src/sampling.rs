//! Deterministic training points: Latin hypercube collocation in the
//! space-time domain plus initial-slice and boundary samples.

use std::io::Write;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::tape::Tensor;
use crate::Compact;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum BoundsError {
    #[error("dimension `{label}` has lo = {lo} not below hi = {hi}")]
    Empty { label: String, lo: f64, hi: f64 },
    #[error("dimension `{label}` has a non-finite bound")]
    NonFinite { label: String },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Interval {
    pub label: String,
    pub lo: f64,
    pub hi: f64,
}

impl Interval {
    pub fn width(&self) -> f64 {
        self.hi - self.lo
    }

    /// Affine map `[lo, hi] → [−1, 1]`; the endpoints map exactly.
    pub fn normalize(&self, v: f64) -> f64 {
        if v == self.lo {
            -1.0
        } else if v == self.hi {
            1.0
        } else {
            2.0 * (v - self.lo) / self.width() - 1.0
        }
    }
}

/// Axis-aligned box, one labelled interval per input column.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<Interval>", into = "Vec<Interval>")]
pub struct DomainBounds {
    dims: Vec<Interval>,
}

impl TryFrom<Vec<Interval>> for DomainBounds {
    type Error = BoundsError;

    fn try_from(dims: Vec<Interval>) -> Result<Self, BoundsError> {
        for iv in &dims {
            if !iv.lo.is_finite() || !iv.hi.is_finite() {
                return Err(BoundsError::NonFinite {
                    label: iv.label.clone(),
                });
            }
            if !(iv.lo < iv.hi) {
                return Err(BoundsError::Empty {
                    label: iv.label.clone(),
                    lo: iv.lo,
                    hi: iv.hi,
                });
            }
        }
        Ok(Self { dims })
    }
}

impl From<DomainBounds> for Vec<Interval> {
    fn from(b: DomainBounds) -> Self {
        b.dims
    }
}

impl DomainBounds {
    pub fn new(dims: Vec<(&str, f64, f64)>) -> Result<Self, BoundsError> {
        dims.into_iter()
            .map(|(label, lo, hi)| Interval {
                label: label.to_string(),
                lo,
                hi,
            })
            .collect::<Vec<_>>()
            .try_into()
    }

    pub fn len(&self) -> usize {
        self.dims.len()
    }

    pub fn is_empty(&self) -> bool {
        self.dims.is_empty()
    }

    pub fn interval(&self, dim: usize) -> &Interval {
        &self.dims[dim]
    }

    pub fn intervals(&self) -> &[Interval] {
        &self.dims
    }

    pub fn labels(&self) -> Vec<&str> {
        self.dims.iter().map(|d| d.label.as_str()).collect()
    }

    /// `dx̂/dx = 2 / (hi − lo)` per dimension.
    pub fn chain_factors(&self) -> Vec<f64> {
        self.dims.iter().map(|d| 2.0 / d.width()).collect()
    }

    pub fn contains(&self, point: &[f64]) -> bool {
        point.len() == self.dims.len()
            && point
                .iter()
                .zip(&self.dims)
                .all(|(v, d)| *v >= d.lo && *v <= d.hi)
    }
}

fn stream_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Latin hypercube sample of `n` points in `bounds`.
///
/// Every dimension is cut into `n` equal strata; each stratum receives exactly
/// one point, placed uniformly inside it, and a seeded permutation decides
/// which point lands in which stratum.
pub fn latin_hypercube(n: usize, bounds: &DomainBounds, seed: u64) -> Tensor {
    lhs_with(n, bounds, &mut stream_rng(seed, 0))
}

fn lhs_with(n: usize, bounds: &DomainBounds, rng: &mut ChaCha8Rng) -> Tensor {
    let d = bounds.len();
    let mut data = vec![0.0; n * d];
    let mut perm: Vec<usize> = (0..n).collect();
    for (dim, iv) in bounds.intervals().iter().enumerate() {
        perm.shuffle(rng);
        let step = iv.width() / n as f64;
        for (row, stratum) in perm.iter().enumerate() {
            let u: f64 = rng.random();
            let v = iv.lo + (*stratum as f64 + u) * step;
            data[row * d + dim] = v.clamp(iv.lo, iv.hi);
        }
    }
    Tensor::matrix(n, d, data).expect("sized buffer")
}

/// Boundary samples, either matched across a periodic pair of faces or
/// independent per Dirichlet face.
#[derive(Clone, Debug, PartialEq)]
pub enum BoundarySet {
    /// Row `i` of `lower` and `upper` differ only in the periodic coordinate.
    Periodic { lower: Tensor, upper: Tensor },
    Dirichlet { faces: Vec<Tensor> },
}

impl BoundarySet {
    /// All boundary points stacked in face order.
    pub fn stacked(&self) -> Tensor {
        match self {
            BoundarySet::Periodic { lower, upper } => Tensor::vstack(&[lower, upper]),
            BoundarySet::Dirichlet { faces } => {
                Tensor::vstack(&faces.iter().collect::<Vec<_>>())
            }
        }
        .expect("faces share the input dimension")
    }

    pub fn point_count(&self) -> usize {
        match self {
            BoundarySet::Periodic { lower, upper } => lower.shape()[0] + upper.shape()[0],
            BoundarySet::Dirichlet { faces } => faces.iter().map(|f| f.shape()[0]).sum(),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SampleSet {
    pub interior: Tensor,
    /// Points on the `t = 0` slice; absent for steady problems.
    pub initial: Option<Tensor>,
    pub boundary: BoundarySet,
}

/// How boundary points are laid out for a problem.
#[derive(Clone, Debug, PartialEq)]
pub enum BoundaryLayout {
    /// Pairs on the two faces of dimension `dim`, sharing all other coordinates.
    Periodic { dim: usize },
    /// Both faces of each listed dimension, points split evenly over faces.
    Dirichlet { dims: Vec<usize> },
}

/// Sampling recipe: domain, counts and boundary layout.
#[derive(Clone, Debug, PartialEq)]
pub struct SamplePlan {
    pub bounds: DomainBounds,
    pub interior: usize,
    /// `Some((time_dim, count))` for problems with an initial condition.
    pub initial: Option<(usize, usize)>,
    pub boundary: usize,
    pub layout: BoundaryLayout,
}

const INTERIOR_STREAM: u64 = 0;
const INITIAL_STREAM: u64 = 1;
const BOUNDARY_STREAM: u64 = 2;

/// Draws the fixed training sample for `plan`.
pub fn sample(plan: &SamplePlan, seed: u64) -> SampleSet {
    let bounds = &plan.bounds;
    let interior = lhs_with(plan.interior, bounds, &mut stream_rng(seed, INTERIOR_STREAM));
    let initial = plan.initial.map(|(time_dim, count)| {
        let mut rng = stream_rng(seed, INITIAL_STREAM);
        slice_sample(bounds, time_dim, bounds.interval(time_dim).lo, count, &mut rng)
    });
    let mut rng = stream_rng(seed, BOUNDARY_STREAM);
    let boundary = match &plan.layout {
        BoundaryLayout::Periodic { dim } => {
            let pairs = plan.boundary / 2;
            let iv = bounds.interval(*dim);
            let lower = slice_sample(bounds, *dim, iv.lo, pairs, &mut rng);
            let mut upper = lower.clone().into_data();
            let d = bounds.len();
            for row in upper.chunks_exact_mut(d) {
                row[*dim] = iv.hi;
            }
            let upper = Tensor::matrix(pairs, d, upper).expect("sized buffer");
            BoundarySet::Periodic { lower, upper }
        }
        BoundaryLayout::Dirichlet { dims } => {
            let n_faces = 2 * dims.len();
            let mut faces = Vec::with_capacity(n_faces);
            for (i, dim) in dims.iter().enumerate() {
                let iv = bounds.interval(*dim);
                for (j, at) in [iv.lo, iv.hi].into_iter().enumerate() {
                    let face = 2 * i + j;
                    let count = plan.boundary / n_faces + usize::from(face < plan.boundary % n_faces);
                    faces.push(slice_sample(bounds, *dim, at, count, &mut rng));
                }
            }
            BoundarySet::Dirichlet { faces }
        }
    };
    SampleSet {
        interior,
        initial,
        boundary,
    }
}

/// LHS over the remaining dimensions with `fixed_dim` pinned to `at`.
fn slice_sample(
    bounds: &DomainBounds,
    fixed_dim: usize,
    at: f64,
    n: usize,
    rng: &mut ChaCha8Rng,
) -> Tensor {
    let free: Vec<Interval> = bounds
        .intervals()
        .iter()
        .enumerate()
        .filter(|(i, _)| *i != fixed_dim)
        .map(|(_, iv)| iv.clone())
        .collect();
    let free = DomainBounds { dims: free };
    let sub = lhs_with(n, &free, rng);
    let d = bounds.len();
    let mut data = Vec::with_capacity(n * d);
    for row in sub.data().chunks_exact(free.len().max(1)).take(n) {
        let mut it = row.iter();
        for dim in 0..d {
            data.push(if dim == fixed_dim { at } else { *it.next().unwrap() });
        }
    }
    if free.is_empty() {
        data = vec![at; n];
    }
    Tensor::matrix(n, d, data).expect("sized buffer")
}

/// Writes points as CSV with the coordinate labels as header.
pub fn write_points_csv(
    points: &Tensor,
    labels: &[&str],
    mut out: impl Write,
) -> std::io::Result<()> {
    writeln!(out, "{}", labels.join(","))?;
    let cols = labels.len();
    for row in points.data().chunks_exact(cols) {
        let line: Vec<String> = row.iter().map(|v| Compact(*v).to_string()).collect();
        writeln!(out, "{}", line.join(","))?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn unit(d: usize) -> DomainBounds {
        let labels = ["t", "x", "y"];
        DomainBounds::new((0..d).map(|i| (labels[i], 0.0, 1.0)).collect()).unwrap()
    }

    #[test]
    fn single_point_lies_inside() {
        let s = latin_hypercube(1, &unit(1), 3);
        let v = s.data()[0];
        assert!(v > 0.0 && v < 1.0);
    }

    #[test]
    fn four_points_one_per_quarter() {
        let s = latin_hypercube(4, &unit(2), 11);
        for dim in 0..2 {
            let mut bins: Vec<usize> = s
                .column(dim)
                .unwrap()
                .iter()
                .map(|v| (v * 4.0).floor() as usize)
                .collect();
            bins.sort_unstable();
            assert_eq!(bins, vec![0, 1, 2, 3]);
        }
    }

    #[test]
    fn seeding_contract() {
        let b = unit(2);
        assert_eq!(latin_hypercube(50, &b, 5), latin_hypercube(50, &b, 5));
        assert_ne!(latin_hypercube(50, &b, 5), latin_hypercube(50, &b, 6));
    }

    #[test]
    fn bounds_validation() {
        assert!(DomainBounds::new(vec![("x", 1.0, 1.0)]).is_err());
        assert!(DomainBounds::new(vec![("x", 0.0, f64::INFINITY)]).is_err());
        let json = r#"[{"label":"x","lo":2.0,"hi":-1.0}]"#;
        assert!(serde_json::from_str::<DomainBounds>(json).is_err());
    }

    #[test]
    fn periodic_pairs_share_time() {
        let plan = SamplePlan {
            bounds: DomainBounds::new(vec![("t", 0.0, 1.0), ("x", -1.0, 1.0)]).unwrap(),
            interior: 100,
            initial: Some((0, 10)),
            boundary: 20,
            layout: BoundaryLayout::Periodic { dim: 1 },
        };
        let s = sample(&plan, 4);
        let BoundarySet::Periodic { lower, upper } = &s.boundary else {
            panic!("expected periodic pairs");
        };
        assert_eq!(lower.shape(), &[10, 2]);
        assert_eq!(lower.column(0).unwrap(), upper.column(0).unwrap());
        assert!(lower.column(1).unwrap().iter().all(|v| *v == -1.0));
        assert!(upper.column(1).unwrap().iter().all(|v| *v == 1.0));
        let init = s.initial.unwrap();
        assert!(init.column(0).unwrap().iter().all(|v| *v == 0.0));
    }

    #[test]
    fn csv_export_has_labels() {
        let pts = Tensor::matrix(2, 2, vec![0.0, 0.5, 1.0, -0.5]).unwrap();
        let mut buf = Vec::new();
        write_points_csv(&pts, &["t", "x"], &mut buf).unwrap();
        assert_eq!(String::from_utf8(buf).unwrap(), "t,x\n0,0.5\n1,-0.5\n");
    }
}
