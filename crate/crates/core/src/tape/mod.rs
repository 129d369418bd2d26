//! Reverse-mode automatic differentiation over dense `f64` tensors.
//!
//! Every operation is appended to a [`Tape`] together with its primal value.
//! [`Tape::backward`] walks the tape in reverse and accumulates adjoints for the
//! requested nodes. The tape only knows first-order rules. Input derivatives
//! are carried forward either as compositions of primitives or through the
//! fused jet kernels in [`fused`], and their parameter gradients fall out of
//! the same sweep.

mod fused;
mod tensor;

use std::collections::BTreeMap;

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum TapeError {
    #[error("tensor data has {len} values but shape {shape:?} holds {expected}")]
    DataLength {
        shape: Vec<usize>,
        len: usize,
        expected: usize,
    },
    #[error("{op}: incompatible shapes {lhs:?} and {rhs:?}")]
    ShapeMismatch {
        op: &'static str,
        lhs: Vec<usize>,
        rhs: Vec<usize>,
    },
    #[error("{op}: expected a rank-{rank} tensor, got shape {shape:?}")]
    Rank {
        op: &'static str,
        rank: usize,
        shape: Vec<usize>,
    },
    #[error("{op}: expected {expected} input(s), got {got}")]
    Arity {
        op: &'static str,
        expected: usize,
        got: usize,
    },
    #[error("backward needs a single-element output, got shape {0:?}")]
    NotScalar(Vec<usize>),
    #[error("node {0} is not on this tape")]
    UnknownNode(usize),
}

pub type Result<T> = std::result::Result<T, TapeError>;

pub use fused::JetLayout;
pub use tensor::Tensor;

/// Handle to a node on a [`Tape`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

/// Operation kinds the tape can record, with their static attributes.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Op {
    /// `A · B`, or `A · Bᵀ` when `transpose_rhs` is set.
    MatMul { transpose_rhs: bool },
    Add,
    Sub,
    /// Element-wise product.
    Mul,
    Scale(f64),
    Tanh,
    Square,
    Negate,
    /// `[N×m] + [m]`, the bias broadcast over rows.
    AddBias,
    Sum,
    Mean,
    /// `H · Wᵀ + b` on a stacked jet tensor `[blocks·rows × in]`; the bias
    /// only enters the first `value_rows` rows.
    Affine { value_rows: usize },
    /// `tanh` with first and second derivative channels.
    TanhJet(JetLayout),
    /// Element-wise product with the Leibniz rule on every channel.
    MulJet(JetLayout),
    /// Contiguous row range `[start, start + len)` of a matrix.
    Rows { start: usize, len: usize },
}

impl Op {
    fn name(self) -> &'static str {
        match self {
            Op::MatMul { .. } => "matmul",
            Op::Add => "add",
            Op::Sub => "sub",
            Op::Mul => "mul",
            Op::Scale(_) => "scale",
            Op::Tanh => "tanh",
            Op::Square => "square",
            Op::Negate => "negate",
            Op::AddBias => "add_bias",
            Op::Sum => "sum",
            Op::Mean => "mean",
            Op::Affine { .. } => "affine",
            Op::TanhJet(_) => "tanh_jet",
            Op::MulJet(_) => "mul_jet",
            Op::Rows { .. } => "rows",
        }
    }

    fn arity(self) -> usize {
        match self {
            Op::Affine { .. } => 3,
            Op::MatMul { .. } | Op::Add | Op::Sub | Op::Mul | Op::AddBias | Op::MulJet(_) => 2,
            _ => 1,
        }
    }
}

#[derive(Clone, Copy, Debug)]
enum NodeKind {
    Input,
    Op(Op),
}

#[derive(Debug)]
struct Node {
    kind: NodeKind,
    inputs: [usize; 3],
    value: Tensor,
}

/// Append-only record of a computation.
#[derive(Debug, Default)]
pub struct Tape {
    nodes: Vec<Node>,
}

/// Gradients keyed by the requested nodes.
#[derive(Debug, Clone, Default)]
pub struct GradMap {
    grads: BTreeMap<Var, Tensor>,
}

impl GradMap {
    pub fn get(&self, var: Var) -> Option<&Tensor> {
        self.grads.get(&var)
    }

    pub fn len(&self) -> usize {
        self.grads.len()
    }

    pub fn is_empty(&self) -> bool {
        self.grads.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (Var, &Tensor)> {
        self.grads.iter().map(|(v, t)| (*v, t))
    }
}

impl std::ops::Index<Var> for GradMap {
    type Output = Tensor;

    fn index(&self, var: Var) -> &Tensor {
        &self.grads[&var]
    }
}

impl Tape {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Places a tensor on the tape as an input node.
    pub fn input(&mut self, value: Tensor) -> Var {
        self.nodes.push(Node {
            kind: NodeKind::Input,
            inputs: [0; 3],
            value,
        });
        Var(self.nodes.len() - 1)
    }

    pub fn value(&self, var: Var) -> &Tensor {
        &self.nodes[var.0].value
    }

    pub fn contains(&self, var: Var) -> bool {
        var.0 < self.nodes.len()
    }

    /// Records `op` applied to `inputs` and returns the new node.
    pub fn record(&mut self, op: Op, inputs: &[Var]) -> Result<Var> {
        if inputs.len() != op.arity() {
            return Err(TapeError::Arity {
                op: op.name(),
                expected: op.arity(),
                got: inputs.len(),
            });
        }
        for v in inputs {
            if !self.contains(*v) {
                return Err(TapeError::UnknownNode(v.0));
            }
        }
        let a = &self.nodes[inputs[0].0].value;
        let value = match inputs {
            [_] => unary_forward(op, a)?,
            [_, b] => binary_forward(op, a, &self.nodes[b.0].value)?,
            [_, w, b] => affine_forward(op, a, &self.nodes[w.0].value, &self.nodes[b.0].value)?,
            _ => unreachable!("arity is at most three"),
        };
        let mut ids = [0; 3];
        for (slot, v) in ids.iter_mut().zip(inputs) {
            *slot = v.0;
        }
        self.nodes.push(Node {
            kind: NodeKind::Op(op),
            inputs: ids,
            value,
        });
        Ok(Var(self.nodes.len() - 1))
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.record(
            Op::MatMul {
                transpose_rhs: false,
            },
            &[a, b],
        )
    }

    /// `a · bᵀ`; used for `H · Wᵀ` with weights stored `out × in`.
    pub fn matmul_nt(&mut self, a: Var, b: Var) -> Result<Var> {
        self.record(Op::MatMul { transpose_rhs: true }, &[a, b])
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        self.record(Op::Add, &[a, b])
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        self.record(Op::Sub, &[a, b])
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.record(Op::Mul, &[a, b])
    }

    pub fn scale(&mut self, a: Var, c: f64) -> Result<Var> {
        self.record(Op::Scale(c), &[a])
    }

    pub fn tanh(&mut self, a: Var) -> Result<Var> {
        self.record(Op::Tanh, &[a])
    }

    pub fn square(&mut self, a: Var) -> Result<Var> {
        self.record(Op::Square, &[a])
    }

    pub fn negate(&mut self, a: Var) -> Result<Var> {
        self.record(Op::Negate, &[a])
    }

    pub fn add_bias(&mut self, a: Var, bias: Var) -> Result<Var> {
        self.record(Op::AddBias, &[a, bias])
    }

    pub fn sum(&mut self, a: Var) -> Result<Var> {
        self.record(Op::Sum, &[a])
    }

    pub fn mean(&mut self, a: Var) -> Result<Var> {
        self.record(Op::Mean, &[a])
    }

    /// Dense layer on a stacked jet tensor; see [`Op::Affine`].
    pub fn affine(&mut self, h: Var, weight: Var, bias: Var, value_rows: usize) -> Result<Var> {
        self.record(Op::Affine { value_rows }, &[h, weight, bias])
    }

    pub fn tanh_jet(&mut self, z: Var, layout: JetLayout) -> Result<Var> {
        self.record(Op::TanhJet(layout), &[z])
    }

    pub fn mul_jet(&mut self, x: Var, y: Var, layout: JetLayout) -> Result<Var> {
        self.record(Op::MulJet(layout), &[x, y])
    }

    pub fn rows(&mut self, a: Var, start: usize, len: usize) -> Result<Var> {
        self.record(Op::Rows { start, len }, &[a])
    }

    /// Reverse sweep from the single-element node `output`.
    ///
    /// Returns d(output)/d(w) for every `w` in `wanted`. Nodes that `output`
    /// does not depend on get a zero gradient. The tape is not modified.
    pub fn backward(&self, output: Var, wanted: &[Var]) -> Result<GradMap> {
        if !self.contains(output) {
            return Err(TapeError::UnknownNode(output.0));
        }
        for w in wanted {
            if !self.contains(*w) {
                return Err(TapeError::UnknownNode(w.0));
            }
        }
        let out_value = &self.nodes[output.0].value;
        if out_value.len() != 1 {
            return Err(TapeError::NotScalar(out_value.shape.clone()));
        }

        // Only nodes on a path from a wanted node to `output` carry adjoints.
        let end = output.0 + 1;
        let mut needed = vec![false; end];
        for w in wanted {
            if w.0 < end {
                needed[w.0] = true;
            }
        }
        for i in 0..end {
            if let NodeKind::Op(op) = self.nodes[i].kind {
                let ins = &self.nodes[i].inputs[..op.arity()];
                if ins.iter().any(|&j| needed[j]) {
                    needed[i] = true;
                }
            }
        }
        let mut is_wanted = vec![false; end];
        for w in wanted {
            if w.0 < end {
                is_wanted[w.0] = true;
            }
        }

        let mut adjoints: Vec<Option<Vec<f64>>> = vec![None; end];
        let mut grads = BTreeMap::new();
        if needed[output.0] {
            adjoints[output.0] = Some(vec![1.0]);
        }
        for i in (0..end).rev() {
            let Some(adj) = adjoints[i].take() else {
                continue;
            };
            if is_wanted[i] {
                let node = &self.nodes[i];
                grads.insert(
                    Var(i),
                    Tensor {
                        shape: node.value.shape.clone(),
                        data: adj.clone(),
                    },
                );
            }
            if let NodeKind::Op(op) = self.nodes[i].kind {
                self.propagate(i, op, &adj, &needed, &mut adjoints);
            }
        }
        for w in wanted {
            grads
                .entry(*w)
                .or_insert_with(|| Tensor::zeros(self.nodes[w.0].value.shape.clone()));
        }
        Ok(GradMap { grads })
    }

    fn propagate(
        &self,
        i: usize,
        op: Op,
        adj: &[f64],
        needed: &[bool],
        adjoints: &mut [Option<Vec<f64>>],
    ) {
        let node = &self.nodes[i];
        let [ia, ib, ic] = node.inputs;
        let a = &self.nodes[ia].value;
        match op {
            Op::MatMul { transpose_rhs } => {
                let b = &self.nodes[ib].value;
                let (m, k) = (a.shape[0], a.shape[1]);
                let n = node.value.shape[1];
                if needed[ia] {
                    // dA = dC · op(B)ᵀ
                    let buf = slot(adjoints, ia, a.len());
                    let (rs, cs) = if transpose_rhs { (k, 1) } else { (1, n) };
                    gemm(
                        m,
                        n,
                        k,
                        adj,
                        (n, 1),
                        &b.data,
                        (rs, cs),
                        buf,
                    );
                }
                if needed[ib] {
                    let buf = slot(adjoints, ib, b.len());
                    if transpose_rhs {
                        // dB [n×k] = dCᵀ · A
                        gemm(n, m, k, adj, (1, n), &a.data, (k, 1), buf);
                    } else {
                        // dB [k×n] = Aᵀ · dC
                        gemm(k, m, n, &a.data, (1, k), adj, (n, 1), buf);
                    }
                }
            }
            Op::Add => {
                accumulate(adjoints, needed, ia, adj, |g| g);
                accumulate(adjoints, needed, ib, adj, |g| g);
            }
            Op::Sub => {
                accumulate(adjoints, needed, ia, adj, |g| g);
                accumulate(adjoints, needed, ib, adj, |g| -g);
            }
            Op::Mul => {
                let b = &self.nodes[ib].value;
                if needed[ia] {
                    let buf = slot(adjoints, ia, a.len());
                    for ((s, g), y) in buf.iter_mut().zip(adj).zip(&b.data) {
                        *s += g * y;
                    }
                }
                if needed[ib] {
                    let buf = slot(adjoints, ib, b.len());
                    for ((s, g), x) in buf.iter_mut().zip(adj).zip(&a.data) {
                        *s += g * x;
                    }
                }
            }
            Op::Scale(c) => accumulate(adjoints, needed, ia, adj, |g| c * g),
            Op::Negate => accumulate(adjoints, needed, ia, adj, |g| -g),
            Op::Tanh => {
                if needed[ia] {
                    let y = &node.value.data;
                    let buf = slot(adjoints, ia, a.len());
                    for ((s, g), y) in buf.iter_mut().zip(adj).zip(y) {
                        *s += g * (1.0 - y * y);
                    }
                }
            }
            Op::Square => {
                if needed[ia] {
                    let buf = slot(adjoints, ia, a.len());
                    for ((s, g), x) in buf.iter_mut().zip(adj).zip(&a.data) {
                        *s += 2.0 * x * g;
                    }
                }
            }
            Op::AddBias => {
                accumulate(adjoints, needed, ia, adj, |g| g);
                if needed[ib] {
                    let cols = a.shape[1];
                    let buf = slot(adjoints, ib, cols);
                    for row in adj.chunks_exact(cols) {
                        for (s, g) in buf.iter_mut().zip(row) {
                            *s += g;
                        }
                    }
                }
            }
            Op::Sum => {
                if needed[ia] {
                    let g = adj[0];
                    let buf = slot(adjoints, ia, a.len());
                    buf.iter_mut().for_each(|s| *s += g);
                }
            }
            Op::Mean => {
                if needed[ia] {
                    let g = adj[0] / a.len() as f64;
                    let buf = slot(adjoints, ia, a.len());
                    buf.iter_mut().for_each(|s| *s += g);
                }
            }
            Op::Affine { value_rows } => {
                let w = &self.nodes[ib].value;
                let (m, k) = (a.shape[0], a.shape[1]);
                let n = w.shape[0];
                if needed[ia] {
                    // dH [m×k] = dC · W
                    let buf = slot(adjoints, ia, a.len());
                    gemm(m, n, k, adj, (n, 1), &w.data, (k, 1), buf);
                }
                if needed[ib] {
                    // dW [n×k] = dCᵀ · H
                    let buf = slot(adjoints, ib, w.len());
                    gemm(n, m, k, adj, (1, n), &a.data, (k, 1), buf);
                }
                if needed[ic] {
                    let buf = slot(adjoints, ic, n);
                    for row in adj[..value_rows * n].chunks_exact(n) {
                        for (s, g) in buf.iter_mut().zip(row) {
                            *s += g;
                        }
                    }
                }
            }
            Op::TanhJet(layout) => {
                if needed[ia] {
                    let cols = a.shape[1];
                    let buf = slot(adjoints, ia, a.len());
                    fused::tanh_jet_backward(layout, &a.data, &node.value.data, adj, cols, buf);
                }
            }
            Op::MulJet(layout) => {
                let b = &self.nodes[ib].value;
                let cols = a.shape[1];
                if needed[ia] {
                    let buf = slot(adjoints, ia, a.len());
                    fused::mul_jet_backward(layout, &b.data, adj, cols, buf);
                }
                if needed[ib] {
                    let buf = slot(adjoints, ib, b.len());
                    fused::mul_jet_backward(layout, &a.data, adj, cols, buf);
                }
            }
            Op::Rows { start, .. } => {
                if needed[ia] {
                    let cols = a.shape[1];
                    let buf = slot(adjoints, ia, a.len());
                    for (s, g) in buf[start * cols..].iter_mut().zip(adj) {
                        *s += g;
                    }
                }
            }
        }
    }
}

fn slot(adjoints: &mut [Option<Vec<f64>>], idx: usize, len: usize) -> &mut Vec<f64> {
    adjoints[idx].get_or_insert_with(|| vec![0.0; len])
}

fn accumulate(
    adjoints: &mut [Option<Vec<f64>>],
    needed: &[bool],
    idx: usize,
    adj: &[f64],
    f: impl Fn(f64) -> f64,
) {
    if !needed[idx] {
        return;
    }
    match &mut adjoints[idx] {
        Some(buf) => {
            for (s, g) in buf.iter_mut().zip(adj) {
                *s += f(*g);
            }
        }
        slot @ None => *slot = Some(adj.iter().map(|g| f(*g)).collect()),
    }
}

/// `C[m×n] += A[m×k] · B[k×n]` with arbitrary (row, column) strides on A and B.
#[allow(clippy::too_many_arguments)]
fn gemm(
    m: usize,
    k: usize,
    n: usize,
    a: &[f64],
    (rsa, csa): (usize, usize),
    b: &[f64],
    (rsb, csb): (usize, usize),
    c: &mut [f64],
) {
    assert!(c.len() >= m * n);
    if m == 0 || n == 0 {
        return;
    }
    if k > 0 {
        assert!(a.len() > (m - 1) * rsa + (k - 1) * csa);
        assert!(b.len() > (k - 1) * rsb + (n - 1) * csb);
    }
    // SAFETY: the asserts above keep every strided access inside the slices.
    unsafe {
        matrixmultiply::dgemm(
            m,
            k,
            n,
            1.0,
            a.as_ptr(),
            rsa as isize,
            csa as isize,
            b.as_ptr(),
            rsb as isize,
            csb as isize,
            1.0,
            c.as_mut_ptr(),
            n as isize,
            1,
        );
    }
}

fn check_same(op: Op, a: &Tensor, b: &Tensor) -> Result<()> {
    if a.shape != b.shape {
        return Err(TapeError::ShapeMismatch {
            op: op.name(),
            lhs: a.shape.clone(),
            rhs: b.shape.clone(),
        });
    }
    Ok(())
}

fn zip_map(a: &Tensor, b: &Tensor, f: impl Fn(f64, f64) -> f64) -> Tensor {
    Tensor {
        shape: a.shape.clone(),
        data: a.data.iter().zip(&b.data).map(|(x, y)| f(*x, *y)).collect(),
    }
}

fn map(a: &Tensor, f: impl Fn(f64) -> f64) -> Tensor {
    Tensor {
        shape: a.shape.clone(),
        data: a.data.iter().map(|x| f(*x)).collect(),
    }
}

fn binary_forward(op: Op, a: &Tensor, b: &Tensor) -> Result<Tensor> {
    match op {
        Op::MatMul { transpose_rhs } => {
            let mismatch = || TapeError::ShapeMismatch {
                op: op.name(),
                lhs: a.shape.clone(),
                rhs: b.shape.clone(),
            };
            let (m, k) = a.matrix_dims("matmul")?;
            let (br, bc) = b.matrix_dims("matmul")?;
            let (n, strides) = if transpose_rhs {
                if bc != k {
                    return Err(mismatch());
                }
                (br, (1, k))
            } else {
                if br != k {
                    return Err(mismatch());
                }
                (bc, (bc, 1))
            };
            let mut out = vec![0.0; m * n];
            gemm(m, k, n, &a.data, (k, 1), &b.data, strides, &mut out);
            Ok(Tensor {
                shape: vec![m, n],
                data: out,
            })
        }
        Op::Add => {
            check_same(op, a, b)?;
            Ok(zip_map(a, b, |x, y| x + y))
        }
        Op::Sub => {
            check_same(op, a, b)?;
            Ok(zip_map(a, b, |x, y| x - y))
        }
        Op::Mul => {
            check_same(op, a, b)?;
            Ok(zip_map(a, b, |x, y| x * y))
        }
        Op::AddBias => {
            let (_, cols) = a.matrix_dims("add_bias")?;
            if b.shape != [cols] {
                return Err(TapeError::ShapeMismatch {
                    op: op.name(),
                    lhs: a.shape.clone(),
                    rhs: b.shape.clone(),
                });
            }
            let mut data = a.data.clone();
            for row in data.chunks_exact_mut(cols) {
                for (x, bias) in row.iter_mut().zip(&b.data) {
                    *x += bias;
                }
            }
            Ok(Tensor {
                shape: a.shape.clone(),
                data,
            })
        }
        Op::MulJet(layout) => {
            check_same(op, a, b)?;
            let cols = layout.check(op.name(), a)?;
            Ok(Tensor {
                shape: a.shape.clone(),
                data: fused::mul_jet_forward(layout, &a.data, &b.data, cols),
            })
        }
        _ => unreachable!("{op:?} dispatched as binary"),
    }
}

fn unary_forward(op: Op, a: &Tensor) -> Result<Tensor> {
    Ok(match op {
        Op::Scale(c) => map(a, |x| c * x),
        Op::Tanh => map(a, f64::tanh),
        Op::Square => map(a, |x| x * x),
        Op::Negate => map(a, |x| -x),
        Op::Sum => Tensor::scalar(ordered_sum(&a.data)),
        Op::Mean => Tensor::scalar(ordered_sum(&a.data) / a.len() as f64),
        Op::TanhJet(layout) => {
            let cols = layout.check(op.name(), a)?;
            Tensor {
                shape: a.shape.clone(),
                data: fused::tanh_jet_forward(layout, &a.data, cols),
            }
        }
        Op::Rows { start, len } => {
            let (rows, cols) = a.matrix_dims(op.name())?;
            if start + len > rows {
                return Err(TapeError::ShapeMismatch {
                    op: op.name(),
                    lhs: a.shape.clone(),
                    rhs: vec![start, len],
                });
            }
            Tensor {
                shape: vec![len, cols],
                data: a.data[start * cols..(start + len) * cols].to_vec(),
            }
        }
        _ => unreachable!("{op:?} dispatched as unary"),
    })
}

fn affine_forward(op: Op, h: &Tensor, w: &Tensor, b: &Tensor) -> Result<Tensor> {
    let Op::Affine { value_rows } = op else {
        unreachable!("{op:?} dispatched as ternary")
    };
    let (m, k) = h.matrix_dims(op.name())?;
    let (n, wk) = w.matrix_dims(op.name())?;
    if wk != k {
        return Err(TapeError::ShapeMismatch {
            op: op.name(),
            lhs: h.shape.clone(),
            rhs: w.shape.clone(),
        });
    }
    if b.shape != [n] || value_rows > m {
        return Err(TapeError::ShapeMismatch {
            op: op.name(),
            lhs: vec![value_rows, n],
            rhs: b.shape.clone(),
        });
    }
    let mut out = vec![0.0; m * n];
    for row in out[..value_rows * n].chunks_exact_mut(n) {
        row.copy_from_slice(&b.data);
    }
    gemm(m, k, n, &h.data, (k, 1), &w.data, (1, k), &mut out);
    Ok(Tensor {
        shape: vec![m, n],
        data: out,
    })
}

/// Left-to-right summation; the order is part of the reproducibility contract.
fn ordered_sum(values: &[f64]) -> f64 {
    let mut acc = 0.0;
    for v in values {
        acc += v;
    }
    acc
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identity_matmul() {
        let mut tape = Tape::new();
        let eye = tape.input(Tensor::matrix(2, 2, vec![1.0, 0.0, 0.0, 1.0]).unwrap());
        let v = tape.input(Tensor::matrix(2, 1, vec![3.0, 4.0]).unwrap());
        let out = tape.matmul(eye, v).unwrap();
        assert_eq!(tape.value(out).data(), &[3.0, 4.0]);
        assert_eq!(tape.value(out).shape(), &[2, 1]);
    }

    #[test]
    fn tanh_is_odd_at_origin() {
        let mut tape = Tape::new();
        let x = tape.input(Tensor::vector(vec![0.0]));
        let y = tape.tanh(x).unwrap();
        assert_eq!(tape.value(y).data(), &[0.0]);
    }

    #[test]
    fn power_rule() {
        let mut tape = Tape::new();
        let x = tape.input(Tensor::scalar(3.0));
        let y = tape.square(x).unwrap();
        let g = tape.backward(y, &[x]).unwrap();
        assert_eq!(g[x].data(), &[6.0]);
    }

    #[test]
    fn product_rule_through_sum() {
        let mut tape = Tape::new();
        let x = tape.input(Tensor::vector(vec![1.0, 2.0]));
        let y = tape.input(Tensor::vector(vec![5.0, 7.0]));
        let p = tape.mul(x, y).unwrap();
        let s = tape.sum(p).unwrap();
        let g = tape.backward(s, &[x]).unwrap();
        assert_eq!(g[x].data(), &[5.0, 7.0]);
    }

    #[test]
    fn shape_mismatch_names_the_op() {
        let mut tape = Tape::new();
        let a = tape.input(Tensor::zeros(vec![2, 3]));
        let b = tape.input(Tensor::zeros(vec![2, 3]));
        let err = tape.matmul(a, b).unwrap_err();
        assert_eq!(
            err,
            TapeError::ShapeMismatch {
                op: "matmul",
                lhs: vec![2, 3],
                rhs: vec![2, 3],
            }
        );
        assert!(err.to_string().contains("matmul"));
        let c = tape.input(Tensor::zeros(vec![3]));
        assert!(matches!(
            tape.add(a, c),
            Err(TapeError::ShapeMismatch { op: "add", .. })
        ));
        let bias = tape.input(Tensor::zeros(vec![2]));
        assert!(tape.add_bias(a, bias).is_err());
    }

    #[test]
    fn backward_rejects_non_scalar_and_foreign_nodes() {
        let mut tape = Tape::new();
        let x = tape.input(Tensor::vector(vec![1.0, 2.0]));
        let y = tape.square(x).unwrap();
        assert_eq!(
            tape.backward(y, &[x]).unwrap_err(),
            TapeError::NotScalar(vec![2])
        );
        let s = tape.sum(y).unwrap();
        assert_eq!(
            tape.backward(s, &[Var(99)]).unwrap_err(),
            TapeError::UnknownNode(99)
        );
    }

    #[test]
    fn unrelated_input_gets_zero_gradient() {
        let mut tape = Tape::new();
        let x = tape.input(Tensor::vector(vec![1.0, 2.0]));
        let z = tape.input(Tensor::zeros(vec![3, 1]));
        let s = tape.sum(x).unwrap();
        let g = tape.backward(s, &[x, z]).unwrap();
        assert_eq!(g[z], Tensor::zeros(vec![3, 1]));
        assert_eq!(g[x].data(), &[1.0, 1.0]);
    }

    #[test]
    fn repeated_backward_is_identical() {
        let mut tape = Tape::new();
        let w = tape.input(Tensor::matrix(2, 2, vec![0.3, -0.1, 0.7, 0.2]).unwrap());
        let x = tape.input(Tensor::matrix(3, 2, vec![1.0, 2.0, -1.0, 0.5, 0.0, 3.0]).unwrap());
        let z = tape.matmul_nt(x, w).unwrap();
        let a = tape.tanh(z).unwrap();
        let q = tape.square(a).unwrap();
        let l = tape.mean(q).unwrap();
        let g1 = tape.backward(l, &[w, x]).unwrap();
        let g2 = tape.backward(l, &[w, x]).unwrap();
        assert_eq!(g1[w], g2[w]);
        assert_eq!(g1[x], g2[x]);
    }

    #[test]
    fn tensor_constructors_validate_length() {
        assert!(Tensor::new(vec![2, 2], vec![1.0; 3]).is_err());
        assert_eq!(Tensor::scalar(2.0).item(), Some(2.0));
        let m = Tensor::from_rows(&[vec![1.0, 2.0], vec![3.0, 4.0]]).unwrap();
        assert_eq!(m.column(1).unwrap(), vec![2.0, 4.0]);
        let s = Tensor::vstack(&[&m, &m]).unwrap();
        assert_eq!(s.shape(), &[4, 2]);
    }
}
