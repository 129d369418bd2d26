//! Network architectures: vanilla MLP, ResNet, modified MLP, densely
//! multiplied (DM) and skip densely multiplied (SDM).
//!
//! All kinds share the same dense layer stack (`input → width`, `L − 1` times
//! `width → width`, `width → output`), so DM and SDM carry exactly the
//! parameters of their vanilla and ResNet counterparts. The modified MLP adds
//! two input encoders. The output layer is always affine.

mod jet;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::sampling::DomainBounds;
use crate::tape::{JetLayout, Tape, TapeError, Tensor, Var};
use jet::{Channel, Jet, Propagate, Stacked};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ArchError {
    #[error(transparent)]
    Tape(#[from] TapeError),
    #[error("invalid network config: {0}")]
    InvalidConfig(String),
    #[error("non-finite activations in layer {layer}")]
    Divergence { layer: usize },
    #[error("expected inputs with {expected} columns, got shape {shape:?}")]
    InputDim { expected: usize, shape: Vec<usize> },
    #[error("unsupported derivative request {0:?}: orders are 1 or 2 on a valid input dimension")]
    Direction(Direction),
    #[error("point {row} has coordinate {value} outside [{lo}, {hi}] in dimension {dim}")]
    OutOfBounds {
        row: usize,
        dim: usize,
        value: f64,
        lo: f64,
        hi: f64,
    },
}

pub type Result<T> = std::result::Result<T, ArchError>;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ArchitectureKind {
    Vanilla,
    #[serde(alias = "res_net")]
    Resnet,
    ModifiedMlp,
    Dm,
    Sdm,
}

impl ArchitectureKind {
    pub const ALL: [ArchitectureKind; 5] = [
        ArchitectureKind::Vanilla,
        ArchitectureKind::Resnet,
        ArchitectureKind::ModifiedMlp,
        ArchitectureKind::Dm,
        ArchitectureKind::Sdm,
    ];

    pub fn label(self) -> &'static str {
        match self {
            ArchitectureKind::Vanilla => "vanilla",
            ArchitectureKind::Resnet => "resnet",
            ArchitectureKind::ModifiedMlp => "modified_mlp",
            ArchitectureKind::Dm => "dm",
            ArchitectureKind::Sdm => "sdm",
        }
    }
}

impl std::fmt::Display for ArchitectureKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.label())
    }
}

/// Which hidden quantities enter the multiplicative products of DM and SDM.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ProductTerms {
    /// Post-multiplication hidden outputs `H⁽ⁱ⁾`, so later products nest the
    /// earlier ones.
    #[default]
    HiddenOutputs,
    /// Raw activations `φ(Wⁱ H⁽ⁱ⁻¹⁾ + bⁱ)`.
    Activations,
}

fn default_skip_stride() -> usize {
    2
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NetworkConfig {
    pub kind: ArchitectureKind,
    pub input_dim: usize,
    pub hidden_layers: usize,
    pub width: usize,
    pub output_dim: usize,
    #[serde(default)]
    pub product_terms: ProductTerms,
    /// SDM multiplies by `H⁽ᵏ⁾, H⁽ᵏ⁻ˢ⁾, H⁽ᵏ⁻²ˢ⁾, …` for stride `s`.
    #[serde(default = "default_skip_stride")]
    pub skip_stride: usize,
}

impl NetworkConfig {
    pub fn new(
        kind: ArchitectureKind,
        input_dim: usize,
        hidden_layers: usize,
        width: usize,
        output_dim: usize,
    ) -> Self {
        Self {
            kind,
            input_dim,
            hidden_layers,
            width,
            output_dim,
            product_terms: ProductTerms::default(),
            skip_stride: default_skip_stride(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: &str| Err(ArchError::InvalidConfig(msg.to_string()));
        if self.input_dim == 0 {
            return bad("input_dim must be at least 1");
        }
        if self.output_dim == 0 {
            return bad("output_dim must be at least 1");
        }
        if self.hidden_layers == 0 {
            return bad("hidden_layers must be at least 1");
        }
        if self.width == 0 {
            return bad("width must be at least 1");
        }
        if self.skip_stride == 0 {
            return bad("skip_stride must be at least 1");
        }
        Ok(())
    }

    /// `(out, in)` shapes of the dense stack, output layer last.
    pub fn layer_shapes(&self) -> Vec<(usize, usize)> {
        let mut shapes = vec![(self.width, self.input_dim)];
        shapes.extend(std::iter::repeat_n(
            (self.width, self.width),
            self.hidden_layers - 1,
        ));
        shapes.push((self.output_dim, self.width));
        shapes
    }

    pub fn encoder_shapes(&self) -> Option<[(usize, usize); 2]> {
        (self.kind == ArchitectureKind::ModifiedMlp)
            .then_some([(self.width, self.input_dim); 2])
    }
}

/// Number of trainable scalars for `config`.
pub fn param_count(config: &NetworkConfig) -> usize {
    let dense: usize = config
        .layer_shapes()
        .iter()
        .map(|(out, inp)| (inp + 1) * out)
        .sum();
    let encoders: usize = config
        .encoder_shapes()
        .map_or(0, |s| s.iter().map(|(out, inp)| (inp + 1) * out).sum());
    dense + encoders
}

#[derive(Clone, Debug, PartialEq)]
pub struct Layer {
    /// `out × in`.
    pub weight: Tensor,
    pub bias: Tensor,
}

#[derive(Clone, Debug, PartialEq)]
pub struct NetworkParams {
    pub config: NetworkConfig,
    /// Dense stack; the last entry is the output layer.
    pub layers: Vec<Layer>,
    /// `U` and `V` encoders of the modified MLP.
    pub encoders: Option<[Layer; 2]>,
}

const ENCODER_STREAM: u64 = 1 << 20;

fn xavier_layer(out: usize, inp: usize, seed: u64, stream: u64) -> Layer {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    let std = (2.0 / (inp + out) as f64).sqrt();
    let normal = Normal::new(0.0, std).expect("positive standard deviation");
    let data = (0..out * inp).map(|_| normal.sample(&mut rng)).collect();
    Layer {
        weight: Tensor::matrix(out, inp, data).expect("sized buffer"),
        bias: Tensor::zeros(vec![out]),
    }
}

/// Xavier-normal weights and zero biases. Each layer draws from its own
/// stream of the seeded generator, so equal-shaped layers of different
/// architectures start from the same values.
pub fn init_network(config: &NetworkConfig, seed: u64) -> Result<NetworkParams> {
    config.validate()?;
    let layers = config
        .layer_shapes()
        .into_iter()
        .enumerate()
        .map(|(i, (out, inp))| xavier_layer(out, inp, seed, i as u64))
        .collect();
    let encoders = config.encoder_shapes().map(|[(o0, i0), (o1, i1)]| {
        [
            xavier_layer(o0, i0, seed, ENCODER_STREAM),
            xavier_layer(o1, i1, seed, ENCODER_STREAM + 1),
        ]
    });
    Ok(NetworkParams {
        config: config.clone(),
        layers,
        encoders,
    })
}

impl NetworkParams {
    /// Parameter tensors in canonical order: dense layers `(W, b)` from input
    /// to output, then the `U` and `V` encoders.
    pub fn tensors(&self) -> Vec<&Tensor> {
        let mut out = Vec::new();
        for l in self.layers.iter().chain(self.encoders.iter().flatten()) {
            out.push(&l.weight);
            out.push(&l.bias);
        }
        out
    }

    pub fn tensors_mut(&mut self) -> Vec<&mut Tensor> {
        let mut out = Vec::new();
        for l in self.layers.iter_mut().chain(self.encoders.iter_mut().flatten()) {
            out.push(&mut l.weight);
            out.push(&mut l.bias);
        }
        out
    }

    /// Names matching [`NetworkParams::tensors`].
    pub fn tensor_names(&self) -> Vec<String> {
        let mut names = Vec::new();
        for i in 0..self.layers.len() {
            names.push(format!("layer{i}.weight"));
            names.push(format!("layer{i}.bias"));
        }
        if self.encoders.is_some() {
            for e in ["encoder_u", "encoder_v"] {
                names.push(format!("{e}.weight"));
                names.push(format!("{e}.bias"));
            }
        }
        names
    }

    pub fn count(&self) -> usize {
        self.tensors().iter().map(|t| t.len()).sum()
    }

    /// Places every parameter on `tape` as an input node.
    pub fn register(&self, tape: &mut Tape) -> NetVars {
        let mut reg = |l: &Layer| LayerVars {
            weight: tape.input(l.weight.clone()),
            bias: tape.input(l.bias.clone()),
        };
        let layers = self.layers.iter().map(&mut reg).collect();
        let encoders = self.encoders.as_ref().map(|[u, v]| [reg(u), reg(v)]);
        NetVars {
            config: self.config.clone(),
            layers,
            encoders,
        }
    }
}

#[derive(Clone, Copy, Debug)]
pub struct LayerVars {
    pub weight: Var,
    pub bias: Var,
}

/// Parameters registered on a tape.
#[derive(Clone, Debug)]
pub struct NetVars {
    pub config: NetworkConfig,
    pub layers: Vec<LayerVars>,
    pub encoders: Option<[LayerVars; 2]>,
}

impl NetVars {
    /// Tape handles in the canonical parameter order.
    pub fn vars(&self) -> Vec<Var> {
        let mut out = Vec::new();
        for l in self.layers.iter().chain(self.encoders.iter().flatten()) {
            out.push(l.weight);
            out.push(l.bias);
        }
        out
    }
}

/// A requested input derivative `∂ᵒʳᵈᵉʳ u / ∂x_dim^order`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Direction {
    pub dim: usize,
    pub order: u8,
}

impl Direction {
    pub const fn first(dim: usize) -> Self {
        Self { dim, order: 1 }
    }

    pub const fn second(dim: usize) -> Self {
        Self { dim, order: 2 }
    }
}

/// Network output and requested input derivatives, all as tape nodes.
#[derive(Clone, Debug)]
pub struct DerivativeBundle {
    pub u: Var,
    pub rows: usize,
    derivatives: Vec<(usize, Var, Option<Var>)>,
}

impl DerivativeBundle {
    pub fn first(&self, dim: usize) -> Option<Var> {
        self.derivatives
            .iter()
            .find(|(d, _, _)| *d == dim)
            .map(|(_, f, _)| *f)
    }

    pub fn second(&self, dim: usize) -> Option<Var> {
        self.derivatives
            .iter()
            .find(|(d, _, _)| *d == dim)
            .and_then(|(_, _, s)| *s)
    }
}

/// Affine map of each column from `[lo, hi]` to `[−1, 1]`.
pub fn normalize_inputs(raw: &Tensor, bounds: &DomainBounds) -> Result<Tensor> {
    let cols = raw.cols()?;
    if cols != bounds.len() {
        return Err(ArchError::InputDim {
            expected: bounds.len(),
            shape: raw.shape().to_vec(),
        });
    }
    let mut data = raw.data().to_vec();
    for (row, chunk) in data.chunks_exact_mut(cols).enumerate() {
        for (dim, v) in chunk.iter_mut().enumerate() {
            let iv = bounds.interval(dim);
            if !(*v >= iv.lo && *v <= iv.hi) {
                return Err(ArchError::OutOfBounds {
                    row,
                    dim,
                    value: *v,
                    lo: iv.lo,
                    hi: iv.hi,
                });
            }
            *v = iv.normalize(*v);
        }
    }
    Ok(Tensor::matrix(raw.rows()?, cols, data)?)
}

/// Inputs as fed to the network plus the per-dimension factor `dx̂/dx`
/// that derivative seeds carry.
pub fn prepare_inputs(
    raw: &Tensor,
    normalization: Option<&DomainBounds>,
) -> Result<(Tensor, Vec<f64>)> {
    match normalization {
        Some(b) => Ok((normalize_inputs(raw, b)?, b.chain_factors())),
        None => Ok((raw.clone(), vec![1.0; raw.cols()?])),
    }
}

/// Plain forward evaluation `u(x)` for `x: [N × input_dim]`.
pub fn forward(params: &NetworkParams, x: &Tensor) -> Result<Tensor> {
    let mut tape = Tape::new();
    let vars = params.register(&mut tape);
    let bundle = forward_with_derivatives(&mut tape, &vars, x, &[], None)?;
    Ok(tape.value(bundle.u).clone())
}

/// Forward pass that also propagates the requested input derivatives.
///
/// `chain` scales each input dimension's derivative seed (`dx̂/dx` when `x`
/// was normalized); `None` means unit factors. Requesting order 2 in a
/// dimension also yields its first derivative.
pub fn forward_with_derivatives(
    tape: &mut Tape,
    net: &NetVars,
    x: &Tensor,
    directions: &[Direction],
    chain: Option<&[f64]>,
) -> Result<DerivativeBundle> {
    let dims = resolve_directions(net, x, directions)?;
    let (rows, cols) = (x.rows()?, x.cols()?);
    let mask = dims
        .iter()
        .enumerate()
        .filter(|(_, (_, second))| *second)
        .fold(0u8, |m, (c, _)| m | 1 << c);
    let layout = JetLayout::new(rows, dims.len(), mask).ok_or_else(|| {
        ArchError::InvalidConfig(format!(
            "at most {} derivative dimensions are supported",
            JetLayout::MAX_CHANNELS
        ))
    })?;

    let block = rows * cols;
    let mut data = vec![0.0; layout.total_rows() * cols];
    data[..block].copy_from_slice(x.data());
    for (c, &(dim, _)) in dims.iter().enumerate() {
        let factor = chain.map_or(1.0, |f| f[dim]);
        let b = layout.first_block(c);
        for row in data[b * block..(b + 1) * block].chunks_exact_mut(cols) {
            row[dim] = factor;
        }
    }
    let stacked = Stacked {
        var: tape.input(Tensor::matrix(layout.total_rows(), cols, data)?),
        layout,
    };

    let out = output_layer(tape, net, &stacked)?;
    let u = tape.rows(out.var, 0, rows)?;
    let mut derivatives = Vec::with_capacity(dims.len());
    for (c, &(dim, _)) in dims.iter().enumerate() {
        let first = tape.rows(out.var, layout.first_block(c) * rows, rows)?;
        let second = layout
            .second_block(c)
            .map(|b| tape.rows(out.var, b * rows, rows))
            .transpose()?;
        derivatives.push((dim, first, second));
    }
    Ok(DerivativeBundle {
        u,
        rows,
        derivatives,
    })
}

/// Same contract as [`forward_with_derivatives`], built only from elementary
/// tape primitives with one node per channel. Slower; kept as a reference
/// route for checking the fused kernels.
pub fn forward_with_derivatives_composed(
    tape: &mut Tape,
    net: &NetVars,
    x: &Tensor,
    directions: &[Direction],
    chain: Option<&[f64]>,
) -> Result<DerivativeBundle> {
    let dims = resolve_directions(net, x, directions)?;
    let (rows, cols) = (x.rows()?, x.cols()?);
    let input = tape.input(x.clone());
    let mut channels = Vec::with_capacity(dims.len());
    for &(dim, second_wanted) in &dims {
        let factor = chain.map_or(1.0, |c| c[dim]);
        let mut seed = vec![0.0; rows * cols];
        for row in seed.chunks_exact_mut(cols) {
            row[dim] = factor;
        }
        let seed = tape.input(Tensor::matrix(rows, cols, seed)?);
        channels.push(Channel {
            dim,
            second_wanted,
            first: Some(seed),
            second: None,
        });
    }
    let x_jet = Jet {
        value: input,
        channels,
    };

    let out = output_layer(tape, net, &x_jet)?;
    let mut derivatives = Vec::with_capacity(out.channels.len());
    for ch in &out.channels {
        let zero = |tape: &mut Tape| tape.input(Tensor::zeros(vec![rows, net.config.output_dim]));
        let first = match ch.first {
            Some(v) => v,
            None => zero(tape),
        };
        let second = if ch.second_wanted {
            Some(match ch.second {
                Some(v) => v,
                None => zero(tape),
            })
        } else {
            None
        };
        derivatives.push((ch.dim, first, second));
    }
    Ok(DerivativeBundle {
        u: out.value,
        rows,
        derivatives,
    })
}

/// Validates `directions` and merges them into sorted `(dim, wants_second)`.
fn resolve_directions(
    net: &NetVars,
    x: &Tensor,
    directions: &[Direction],
) -> Result<Vec<(usize, bool)>> {
    let cols = x.cols()?;
    if cols != net.config.input_dim {
        return Err(ArchError::InputDim {
            expected: net.config.input_dim,
            shape: x.shape().to_vec(),
        });
    }
    let mut dims: Vec<(usize, bool)> = Vec::new();
    for d in directions {
        if d.dim >= cols || !(1..=2).contains(&d.order) {
            return Err(ArchError::Direction(*d));
        }
        match dims.iter_mut().find(|(dim, _)| *dim == d.dim) {
            Some(entry) => entry.1 |= d.order == 2,
            None => dims.push((d.dim, d.order == 2)),
        }
    }
    dims.sort_unstable();
    Ok(dims)
}

fn output_layer<P: Propagate>(tape: &mut Tape, net: &NetVars, x: &P) -> Result<P> {
    let hidden = hidden_stack(tape, net, x)?;
    let l = net.layers.last().expect("output layer");
    let out = hidden.linear(tape, l.weight, l.bias)?;
    check_finite(tape, out.node(), net.config.hidden_layers + 1)?;
    Ok(out)
}

fn check_finite(tape: &Tape, v: Var, layer: usize) -> Result<()> {
    if tape.value(v).all_finite() {
        Ok(())
    } else {
        Err(ArchError::Divergence { layer })
    }
}

fn dense_tanh<P: Propagate>(tape: &mut Tape, h: &P, l: LayerVars) -> Result<P> {
    Ok(h.linear(tape, l.weight, l.bias)?.tanh(tape)?)
}

/// Hidden layers `H⁽¹⁾ … H⁽ᴸ⁾` for the configured architecture.
fn hidden_stack<P: Propagate>(tape: &mut Tape, net: &NetVars, x: &P) -> Result<P> {
    let cfg = &net.config;
    let hidden = &net.layers[..cfg.hidden_layers];
    let nested = cfg.product_terms == ProductTerms::HiddenOutputs;
    match cfg.kind {
        ArchitectureKind::Vanilla => {
            let mut h = x.clone();
            for (k, l) in hidden.iter().enumerate() {
                h = dense_tanh(tape, &h, *l)?;
                check_finite(tape, h.node(), k + 1)?;
            }
            Ok(h)
        }
        ArchitectureKind::Resnet => {
            let mut h = dense_tanh(tape, x, hidden[0])?;
            check_finite(tape, h.node(), 1)?;
            for (k, l) in hidden.iter().enumerate().skip(1) {
                let a = dense_tanh(tape, &h, *l)?;
                h = h.add(tape, &a)?;
                check_finite(tape, h.node(), k + 1)?;
            }
            Ok(h)
        }
        ArchitectureKind::ModifiedMlp => {
            let [eu, ev] = net.encoders.expect("modified MLP registers encoders");
            let u = dense_tanh(tape, x, eu)?;
            let v = dense_tanh(tape, x, ev)?;
            let gap = v.sub(tape, &u)?;
            let mut h = x.clone();
            // H = (1 − Z) ⊙ U + Z ⊙ V, written as U + Z ⊙ (V − U).
            for (k, l) in hidden.iter().enumerate() {
                let z = dense_tanh(tape, &h, *l)?;
                let gated = z.mul(tape, &gap)?;
                h = u.add(tape, &gated)?;
                check_finite(tape, h.node(), k + 1)?;
            }
            Ok(h)
        }
        ArchitectureKind::Dm => {
            let mut h = dense_tanh(tape, x, hidden[0])?;
            check_finite(tape, h.node(), 1)?;
            let mut product = h.clone();
            let last = hidden.len() - 1;
            for (k, l) in hidden.iter().enumerate().skip(1) {
                let a = dense_tanh(tape, &h, *l)?;
                let next = a.mul(tape, &product)?;
                check_finite(tape, next.node(), k + 1)?;
                if k < last {
                    let term = if nested { &next } else { &a };
                    product = product.mul(tape, term)?;
                }
                h = next;
            }
            Ok(h)
        }
        ArchitectureKind::Sdm => {
            let first = dense_tanh(tape, x, hidden[0])?;
            check_finite(tape, first.node(), 1)?;
            let mut outputs = vec![first.clone()];
            let mut activations = vec![first];
            for (k, l) in hidden.iter().enumerate().skip(1) {
                // Building H⁽ᵏ⁺¹⁾ from H⁽ᵏ⁾; `outputs[k - 1]` is H⁽ᵏ⁾.
                let h = outputs[k - 1].clone();
                let a = dense_tanh(tape, &h, *l)?;
                let pool = if nested { &outputs } else { &activations };
                let mut idx = (0..k).rev().step_by(cfg.skip_stride);
                let mut product = pool[idx.next().expect("k >= 1")].clone();
                for i in idx {
                    product = product.mul(tape, &pool[i])?;
                }
                let update = a.mul(tape, &product)?;
                let next = h.add(tape, &update)?;
                check_finite(tape, next.node(), k + 1)?;
                outputs.push(next);
                activations.push(a);
            }
            Ok(outputs.pop().expect("at least one hidden layer"))
        }
    }
}
