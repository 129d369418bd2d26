//! Forward propagation of input derivatives.
//!
//! Two carriers implement [`Propagate`]. [`Stacked`] is the fast route used in
//! training. A [`Jet`] composes the same rules from plain tape primitives and
//! serves as an independent cross-check.
//!
//! A [`Jet`] carries a hidden state together with, per input dimension, its
//! first and (optionally) second derivative. Every channel is a tape node, so
//! a loss built from derivative channels differentiates in the parameters
//! through the ordinary reverse sweep. `None` marks a channel that is
//! identically zero, which lets the input layer skip work.

use crate::tape::{JetLayout, Result, Tape, Var};

#[derive(Clone, Copy, Debug)]
pub(crate) struct Channel {
    pub dim: usize,
    pub second_wanted: bool,
    pub first: Option<Var>,
    pub second: Option<Var>,
}

#[derive(Clone, Debug)]
pub(crate) struct Jet {
    pub value: Var,
    pub channels: Vec<Channel>,
}

fn opt_add(tape: &mut Tape, a: Option<Var>, b: Option<Var>) -> Result<Option<Var>> {
    Ok(match (a, b) {
        (Some(a), Some(b)) => Some(tape.add(a, b)?),
        (a, None) => a,
        (None, b) => b,
    })
}

fn opt_sub(tape: &mut Tape, a: Option<Var>, b: Option<Var>) -> Result<Option<Var>> {
    Ok(match (a, b) {
        (Some(a), Some(b)) => Some(tape.sub(a, b)?),
        (a, None) => a,
        (None, Some(b)) => Some(tape.negate(b)?),
    })
}

fn opt_mul(tape: &mut Tape, a: Option<Var>, b: Var) -> Result<Option<Var>> {
    a.map(|a| tape.mul(a, b)).transpose()
}

impl Jet {
    fn map_channels(
        &self,
        tape: &mut Tape,
        value: Var,
        mut f: impl FnMut(&mut Tape, &Channel) -> Result<(Option<Var>, Option<Var>)>,
    ) -> Result<Jet> {
        let mut channels = Vec::with_capacity(self.channels.len());
        for ch in &self.channels {
            let (first, second) = f(tape, ch)?;
            channels.push(Channel {
                first,
                second: if ch.second_wanted { second } else { None },
                ..*ch
            });
        }
        Ok(Jet { value, channels })
    }

    /// `h · Wᵀ + b`; derivative channels only see the linear part.
    pub fn linear(&self, tape: &mut Tape, weight: Var, bias: Var) -> Result<Jet> {
        let z = tape.matmul_nt(self.value, weight)?;
        let value = tape.add_bias(z, bias)?;
        self.map_channels(tape, value, |tape, ch| {
            let first = ch.first.map(|d| tape.matmul_nt(d, weight)).transpose()?;
            let second = if ch.second_wanted {
                ch.second.map(|d| tape.matmul_nt(d, weight)).transpose()?
            } else {
                None
            };
            Ok((first, second))
        })
    }

    /// Element-wise `tanh` with `φ' = 1 − φ²` and `φ'' = −2φφ'`:
    /// `a_d = (1 − a²) z_d`, `a_dd = (1 − a²) z_dd − 2 a a_d z_d`.
    pub fn tanh(&self, tape: &mut Tape) -> Result<Jet> {
        let a = tape.tanh(self.value)?;
        let sq = tape.square(a)?;
        self.map_channels(tape, a, |tape, ch| {
            let first = match ch.first {
                Some(zd) => {
                    let t = tape.mul(sq, zd)?;
                    Some(tape.sub(zd, t)?)
                }
                None => None,
            };
            if !ch.second_wanted {
                return Ok((first, None));
            }
            let damped = match ch.second {
                Some(zdd) => {
                    let t = tape.mul(sq, zdd)?;
                    Some(tape.sub(zdd, t)?)
                }
                None => None,
            };
            let curvature = match (ch.first, first) {
                (Some(zd), Some(ad)) => {
                    let aad = tape.mul(a, ad)?;
                    Some(tape.mul(aad, zd)?)
                }
                _ => None,
            };
            let second = match (damped, curvature) {
                (Some(d), Some(c)) => {
                    let c2 = tape.scale(c, 2.0)?;
                    Some(tape.sub(d, c2)?)
                }
                (None, Some(c)) => Some(tape.scale(c, -2.0)?),
                (d, None) => d,
            };
            Ok((first, second))
        })
    }

    /// Element-wise product with the Leibniz rule up to second order.
    pub fn mul(&self, tape: &mut Tape, other: &Jet) -> Result<Jet> {
        let value = tape.mul(self.value, other.value)?;
        let mut channels = Vec::with_capacity(self.channels.len());
        for (x, y) in self.channels.iter().zip(&other.channels) {
            debug_assert_eq!(x.dim, y.dim);
            let xd_y = opt_mul(tape, x.first, other.value)?;
            let x_yd = opt_mul(tape, y.first, self.value)?;
            let first = opt_add(tape, xd_y, x_yd)?;
            let second = if x.second_wanted {
                let xdd_y = opt_mul(tape, x.second, other.value)?;
                let x_ydd = opt_mul(tape, y.second, self.value)?;
                let cross = match (x.first, y.first) {
                    (Some(a), Some(b)) => {
                        let p = tape.mul(a, b)?;
                        Some(tape.scale(p, 2.0)?)
                    }
                    _ => None,
                };
                let s = opt_add(tape, xdd_y, cross)?;
                opt_add(tape, s, x_ydd)?
            } else {
                None
            };
            channels.push(Channel {
                first,
                second,
                ..*x
            });
        }
        Ok(Jet { value, channels })
    }

    pub fn add(&self, tape: &mut Tape, other: &Jet) -> Result<Jet> {
        let value = tape.add(self.value, other.value)?;
        let mut channels = Vec::with_capacity(self.channels.len());
        for (x, y) in self.channels.iter().zip(&other.channels) {
            channels.push(Channel {
                first: opt_add(tape, x.first, y.first)?,
                second: opt_add(tape, x.second, y.second)?,
                ..*x
            });
        }
        Ok(Jet { value, channels })
    }

    pub fn sub(&self, tape: &mut Tape, other: &Jet) -> Result<Jet> {
        let value = tape.sub(self.value, other.value)?;
        let mut channels = Vec::with_capacity(self.channels.len());
        for (x, y) in self.channels.iter().zip(&other.channels) {
            channels.push(Channel {
                first: opt_sub(tape, x.first, y.first)?,
                second: opt_sub(tape, x.second, y.second)?,
                ..*x
            });
        }
        Ok(Jet { value, channels })
    }
}

/// Stacked counterpart of [`Jet`]: all channels live in one tensor laid out
/// by a [`JetLayout`] and every step is a single fused tape node.
#[derive(Clone, Copy, Debug)]
pub(crate) struct Stacked {
    pub var: Var,
    pub layout: JetLayout,
}

/// Operations the architecture recurrences need from a derivative carrier.
pub(crate) trait Propagate: Clone {
    /// Node whose finiteness certifies the layer.
    fn node(&self) -> Var;
    fn linear(&self, tape: &mut Tape, weight: Var, bias: Var) -> Result<Self>;
    fn tanh(&self, tape: &mut Tape) -> Result<Self>;
    fn mul(&self, tape: &mut Tape, other: &Self) -> Result<Self>;
    fn add(&self, tape: &mut Tape, other: &Self) -> Result<Self>;
    fn sub(&self, tape: &mut Tape, other: &Self) -> Result<Self>;
}

impl Propagate for Jet {
    fn node(&self) -> Var {
        self.value
    }

    fn linear(&self, tape: &mut Tape, weight: Var, bias: Var) -> Result<Self> {
        Jet::linear(self, tape, weight, bias)
    }

    fn tanh(&self, tape: &mut Tape) -> Result<Self> {
        Jet::tanh(self, tape)
    }

    fn mul(&self, tape: &mut Tape, other: &Self) -> Result<Self> {
        Jet::mul(self, tape, other)
    }

    fn add(&self, tape: &mut Tape, other: &Self) -> Result<Self> {
        Jet::add(self, tape, other)
    }

    fn sub(&self, tape: &mut Tape, other: &Self) -> Result<Self> {
        Jet::sub(self, tape, other)
    }
}

impl Stacked {
    fn with(&self, var: Var) -> Self {
        Self { var, ..*self }
    }
}

impl Propagate for Stacked {
    fn node(&self) -> Var {
        self.var
    }

    fn linear(&self, tape: &mut Tape, weight: Var, bias: Var) -> Result<Self> {
        Ok(self.with(tape.affine(self.var, weight, bias, self.layout.rows())?))
    }

    fn tanh(&self, tape: &mut Tape) -> Result<Self> {
        Ok(self.with(tape.tanh_jet(self.var, self.layout)?))
    }

    fn mul(&self, tape: &mut Tape, other: &Self) -> Result<Self> {
        Ok(self.with(tape.mul_jet(self.var, other.var, self.layout)?))
    }

    fn add(&self, tape: &mut Tape, other: &Self) -> Result<Self> {
        Ok(self.with(tape.add(self.var, other.var)?))
    }

    fn sub(&self, tape: &mut Tape, other: &Self) -> Result<Self> {
        Ok(self.with(tape.sub(self.var, other.var)?))
    }
}
