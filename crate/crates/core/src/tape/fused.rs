//! Fused kernels for stacked derivative channels.
//!
//! A stacked tensor holds `blocks` row blocks of equal height: the value block
//! first, then for each input direction its first derivative and, when
//! requested, its second derivative. One matrix product then serves every
//! channel of a layer, and the element-wise rules below run in a single pass
//! instead of a dozen primitive nodes.

use super::{Result, TapeError, Tensor};

/// Row-block layout of a stacked jet tensor.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct JetLayout {
    rows: usize,
    channels: u8,
    second: u8,
}

impl JetLayout {
    pub const MAX_CHANNELS: usize = 8;

    /// `rows` points, `channels` first-derivative blocks, and a second block
    /// for every channel whose bit is set in `second_mask`.
    pub fn new(rows: usize, channels: usize, second_mask: u8) -> Option<Self> {
        if channels > Self::MAX_CHANNELS {
            return None;
        }
        let valid = if channels == 8 {
            u8::MAX
        } else {
            (1u8 << channels) - 1
        };
        (second_mask & !valid == 0).then_some(Self {
            rows,
            channels: channels as u8,
            second: second_mask,
        })
    }

    pub fn value_only(rows: usize) -> Self {
        Self {
            rows,
            channels: 0,
            second: 0,
        }
    }

    pub fn rows(self) -> usize {
        self.rows
    }

    pub fn channels(self) -> usize {
        self.channels as usize
    }

    pub fn has_second(self, channel: usize) -> bool {
        self.second >> channel & 1 == 1
    }

    pub fn blocks(self) -> usize {
        1 + self.channels as usize + self.second.count_ones() as usize
    }

    pub fn total_rows(self) -> usize {
        self.blocks() * self.rows
    }

    /// Block index of the first derivative along `channel`.
    pub fn first_block(self, channel: usize) -> usize {
        let earlier = (self.second & ((1u16 << channel) - 1) as u8).count_ones() as usize;
        1 + channel + earlier
    }

    pub fn second_block(self, channel: usize) -> Option<usize> {
        self.has_second(channel)
            .then(|| self.first_block(channel) + 1)
    }

    pub(super) fn check(self, op: &'static str, t: &Tensor) -> Result<usize> {
        let (r, c) = t.matrix_dims(op)?;
        if r != self.total_rows() {
            return Err(TapeError::ShapeMismatch {
                op,
                lhs: t.shape.clone(),
                rhs: vec![self.total_rows(), c],
            });
        }
        Ok(c)
    }
}

fn block(data: &[f64], b: usize, len: usize) -> &[f64] {
    &data[b * len..(b + 1) * len]
}

/// `a = tanh z` with `a_d = s z_d`, `a_dd = s z_dd − 2 a a_d z_d`, `s = 1 − a²`.
pub(super) fn tanh_jet_forward(layout: JetLayout, z: &[f64], cols: usize) -> Vec<f64> {
    let bl = layout.rows * cols;
    let mut out = vec![0.0; z.len()];
    let (a, rest) = out.split_at_mut(bl);
    for (a, z) in a.iter_mut().zip(&z[..bl]) {
        *a = z.tanh();
    }
    for c in 0..layout.channels() {
        let fb = layout.first_block(c);
        let zd = block(z, fb, bl);
        let off = (fb - 1) * bl;
        if layout.has_second(c) {
            let zdd = block(z, fb + 1, bl);
            let (ad, add) = rest[off..off + 2 * bl].split_at_mut(bl);
            for i in 0..bl {
                let s = 1.0 - a[i] * a[i];
                let d = s * zd[i];
                ad[i] = d;
                add[i] = s * zdd[i] - 2.0 * a[i] * d * zd[i];
            }
        } else {
            let ad = &mut rest[off..off + bl];
            for i in 0..bl {
                ad[i] = (1.0 - a[i] * a[i]) * zd[i];
            }
        }
    }
    out
}

/// Adjoint of [`tanh_jet_forward`], accumulated into `gz`.
pub(super) fn tanh_jet_backward(
    layout: JetLayout,
    z: &[f64],
    out: &[f64],
    g: &[f64],
    cols: usize,
    gz: &mut [f64],
) {
    let bl = layout.rows * cols;
    let a = &out[..bl];
    // Total adjoint of `a` before the final `s` factor.
    let mut ga = g[..bl].to_vec();
    for c in 0..layout.channels() {
        let fb = layout.first_block(c);
        let zd = block(z, fb, bl);
        let gd = block(g, fb, bl);
        if layout.has_second(c) {
            let zdd = block(z, fb + 1, bl);
            let gdd = block(g, fb + 1, bl);
            let (gzd, gzdd) = gz[fb * bl..(fb + 2) * bl].split_at_mut(bl);
            for i in 0..bl {
                let (ai, di) = (a[i], zd[i]);
                let s = 1.0 - ai * ai;
                ga[i] += -2.0 * ai * (gd[i] * di + gdd[i] * zdd[i])
                    - 2.0 * gdd[i] * di * di * (s - 2.0 * ai * ai);
                gzd[i] += s * (gd[i] - 4.0 * gdd[i] * ai * di);
                gzdd[i] += s * gdd[i];
            }
        } else {
            let gzd = &mut gz[fb * bl..(fb + 1) * bl];
            for i in 0..bl {
                let s = 1.0 - a[i] * a[i];
                ga[i] -= 2.0 * a[i] * gd[i] * zd[i];
                gzd[i] += s * gd[i];
            }
        }
    }
    for ((gz, ga), a) in gz[..bl].iter_mut().zip(&ga).zip(a) {
        *gz += ga * (1.0 - a * a);
    }
}

/// Leibniz rule: `v = xy`, `v_d = x_d y + x y_d`, `v_dd = x_dd y + 2 x_d y_d + x y_dd`.
pub(super) fn mul_jet_forward(layout: JetLayout, x: &[f64], y: &[f64], cols: usize) -> Vec<f64> {
    let bl = layout.rows * cols;
    let mut out = vec![0.0; x.len()];
    let (x0, y0) = (&x[..bl], &y[..bl]);
    for i in 0..bl {
        out[i] = x0[i] * y0[i];
    }
    for c in 0..layout.channels() {
        let fb = layout.first_block(c);
        let (xd, yd) = (block(x, fb, bl), block(y, fb, bl));
        if layout.has_second(c) {
            let (xdd, ydd) = (block(x, fb + 1, bl), block(y, fb + 1, bl));
            let (vd, vdd) = out[fb * bl..(fb + 2) * bl].split_at_mut(bl);
            for i in 0..bl {
                vd[i] = xd[i] * y0[i] + x0[i] * yd[i];
                vdd[i] = xdd[i] * y0[i] + 2.0 * xd[i] * yd[i] + x0[i] * ydd[i];
            }
        } else {
            let vd = &mut out[fb * bl..(fb + 1) * bl];
            for i in 0..bl {
                vd[i] = xd[i] * y0[i] + x0[i] * yd[i];
            }
        }
    }
    out
}

/// Adjoint of [`mul_jet_forward`] with respect to `x`; call with the operands
/// swapped for `y`.
pub(super) fn mul_jet_backward(
    layout: JetLayout,
    y: &[f64],
    g: &[f64],
    cols: usize,
    gx: &mut [f64],
) {
    let bl = layout.rows * cols;
    let y0 = &y[..bl];
    let (gx0, grest) = gx.split_at_mut(bl);
    for i in 0..bl {
        gx0[i] += g[i] * y0[i];
    }
    for c in 0..layout.channels() {
        let fb = layout.first_block(c);
        let yd = block(y, fb, bl);
        let gd = block(g, fb, bl);
        let off = (fb - 1) * bl;
        if layout.has_second(c) {
            let ydd = block(y, fb + 1, bl);
            let gdd = block(g, fb + 1, bl);
            let (gxd, gxdd) = grest[off..off + 2 * bl].split_at_mut(bl);
            for i in 0..bl {
                gx0[i] += gd[i] * yd[i] + gdd[i] * ydd[i];
                gxd[i] += gd[i] * y0[i] + 2.0 * gdd[i] * yd[i];
                gxdd[i] += gdd[i] * y0[i];
            }
        } else {
            let gxd = &mut grest[off..off + bl];
            for i in 0..bl {
                gx0[i] += gd[i] * yd[i];
                gxd[i] += gd[i] * y0[i];
            }
        }
    }
}
