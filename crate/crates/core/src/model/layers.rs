//! Feature-map primitives with hand-written backward passes.

use alloc::vec;
use alloc::vec::Vec;

use super::arch::LayerSpec;

/// Channel-major feature map: `data[(c * h + y) * w + x]`.
#[derive(Clone, Debug, PartialEq)]
pub(crate) struct Fmap {
    pub c: usize,
    pub h: usize,
    pub w: usize,
    pub data: Vec<f64>,
}

impl Fmap {
    pub fn zeros(c: usize, h: usize, w: usize) -> Self {
        Self {
            c,
            h,
            w,
            data: vec![0.0; c * h * w],
        }
    }

    pub fn plane(&self) -> usize {
        self.h * self.w
    }

    pub fn channel(&self, c: usize) -> &[f64] {
        let n = self.plane();
        &self.data[c * n..(c + 1) * n]
    }

    pub fn channel_mut(&mut self, c: usize) -> &mut [f64] {
        let n = self.plane();
        &mut self.data[c * n..(c + 1) * n]
    }

    /// Stacks maps of equal spatial size along the channel axis.
    pub fn concat(parts: &[&Fmap]) -> Self {
        let (h, w) = (parts[0].h, parts[0].w);
        let c = parts.iter().map(|p| p.c).sum();
        let mut data = Vec::with_capacity(c * h * w);
        for p in parts {
            debug_assert_eq!((p.h, p.w), (h, w));
            data.extend_from_slice(&p.data);
        }
        Self { c, h, w, data }
    }

    /// Inverse of [`Fmap::concat`] for gradients.
    pub fn split(&self, channels: &[usize]) -> Vec<Fmap> {
        let n = self.plane();
        let mut start = 0;
        channels
            .iter()
            .map(|&c| {
                let part = Fmap {
                    c,
                    h: self.h,
                    w: self.w,
                    data: self.data[start * n..(start + c) * n].to_vec(),
                };
                start += c;
                part
            })
            .collect()
    }

    pub fn add_assign(&mut self, other: &Fmap) {
        for (a, b) in self.data.iter_mut().zip(&other.data) {
            *a += b;
        }
    }
}

pub(crate) fn tanh_inplace(m: &mut Fmap) {
    m.data.iter_mut().for_each(|v| *v = libm::tanh(*v));
}

/// Given the tanh outputs, turns `grad` (w.r.t. outputs) into the gradient
/// w.r.t. the pre-activations.
pub(crate) fn tanh_backward(activated: &Fmap, grad: &mut Fmap) {
    for (g, &y) in grad.data.iter_mut().zip(&activated.data) {
        *g *= 1.0 - y * y;
    }
}

#[inline]
fn span(offset: isize, len: usize) -> (usize, usize) {
    let lo = if offset < 0 { (-offset) as usize } else { 0 };
    let hi = if offset > 0 {
        len.saturating_sub(offset as usize)
    } else {
        len
    };
    (lo, hi.max(lo))
}

/// Same-padding (zeros) convolution with an odd square kernel.
pub(crate) fn conv_forward(spec: &LayerSpec, params: &[f64], input: &Fmap) -> Fmap {
    debug_assert_eq!(input.c, spec.inputs);
    let (h, w) = (input.h, input.w);
    let k = spec.kernel;
    let pad = (k / 2) as isize;
    let (weights, bias) = params.split_at(spec.weight_count());
    let mut out = Fmap::zeros(spec.outputs, h, w);
    for o in 0..spec.outputs {
        let dst = out.channel_mut(o);
        dst.fill(bias[o]);
        for i in 0..spec.inputs {
            let src = input.channel(i);
            for ky in 0..k {
                let dy = ky as isize - pad;
                let (y0, y1) = span(dy, h);
                for kx in 0..k {
                    let dx = kx as isize - pad;
                    let (x0, x1) = span(dx, w);
                    let wv = weights[((o * spec.inputs + i) * k + ky) * k + kx];
                    for y in y0..y1 {
                        let sy = (y as isize + dy) as usize;
                        let sx0 = (x0 as isize + dx) as usize;
                        let drow = &mut dst[y * w + x0..y * w + x1];
                        let srow = &src[sy * w + sx0..sy * w + sx0 + (x1 - x0)];
                        for (d, s) in drow.iter_mut().zip(srow) {
                            *d += wv * s;
                        }
                    }
                }
            }
        }
    }
    out
}

/// Accumulates parameter gradients into `grad_params` and returns the input
/// gradient when requested.
pub(crate) fn conv_backward(
    spec: &LayerSpec,
    params: &[f64],
    input: &Fmap,
    grad_out: &Fmap,
    grad_params: &mut [f64],
    want_input: bool,
) -> Option<Fmap> {
    let (h, w) = (input.h, input.w);
    let k = spec.kernel;
    let pad = (k / 2) as isize;
    let wc = spec.weight_count();
    let weights = &params[..wc];
    let (gw, gb) = grad_params.split_at_mut(wc);
    let mut grad_in = want_input.then(|| Fmap::zeros(spec.inputs, h, w));
    for o in 0..spec.outputs {
        let go = grad_out.channel(o);
        gb[o] += go.iter().sum::<f64>();
        for i in 0..spec.inputs {
            let src = input.channel(i);
            for ky in 0..k {
                let dy = ky as isize - pad;
                let (y0, y1) = span(dy, h);
                for kx in 0..k {
                    let dx = kx as isize - pad;
                    let (x0, x1) = span(dx, w);
                    let widx = ((o * spec.inputs + i) * k + ky) * k + kx;
                    let wv = weights[widx];
                    let mut acc = 0.0;
                    for y in y0..y1 {
                        let sy = (y as isize + dy) as usize;
                        let sx0 = (x0 as isize + dx) as usize;
                        let grow = &go[y * w + x0..y * w + x1];
                        let srow = &src[sy * w + sx0..sy * w + sx0 + (x1 - x0)];
                        acc += grow.iter().zip(srow).map(|(g, s)| g * s).sum::<f64>();
                        if let Some(gi) = grad_in.as_mut() {
                            let girow =
                                &mut gi.channel_mut(i)[sy * w + sx0..sy * w + sx0 + (x1 - x0)];
                            for (d, g) in girow.iter_mut().zip(grow) {
                                *d += wv * g;
                            }
                        }
                    }
                    gw[widx] += acc;
                }
            }
        }
    }
    grad_in
}

/// Average pooling over `stride x stride` blocks; edge blocks average only
/// the pixels they cover.
pub(crate) fn avg_pool(input: &Fmap, stride: usize) -> Fmap {
    if stride == 1 {
        return input.clone();
    }
    let oh = input.h.div_ceil(stride);
    let ow = input.w.div_ceil(stride);
    let mut out = Fmap::zeros(input.c, oh, ow);
    for c in 0..input.c {
        let src = input.channel(c);
        let dst = out.channel_mut(c);
        for y in 0..input.h {
            for x in 0..input.w {
                dst[(y / stride) * ow + x / stride] += src[y * input.w + x];
            }
        }
        for by in 0..oh {
            for bx in 0..ow {
                let ny = stride.min(input.h - by * stride);
                let nx = stride.min(input.w - bx * stride);
                dst[by * ow + bx] /= (ny * nx) as f64;
            }
        }
    }
    out
}

pub(crate) fn avg_pool_backward(grad_out: &Fmap, stride: usize, h: usize, w: usize) -> Fmap {
    if stride == 1 {
        return grad_out.clone();
    }
    let ow = grad_out.w;
    let mut grad = Fmap::zeros(grad_out.c, h, w);
    for c in 0..grad_out.c {
        let go = grad_out.channel(c);
        let dst = grad.channel_mut(c);
        for y in 0..h {
            for x in 0..w {
                let (by, bx) = (y / stride, x / stride);
                let ny = stride.min(h - by * stride);
                let nx = stride.min(w - bx * stride);
                dst[y * w + x] = go[by * ow + bx] / (ny * nx) as f64;
            }
        }
    }
    grad
}

/// Keys and values of the reference, one row per reference position.
pub(crate) struct Memory {
    pub keys: Vec<f64>,
    pub values: Vec<f64>,
    pub slots: usize,
    pub key_dim: usize,
    pub value_dim: usize,
}

impl Memory {
    /// Transposes channel-major key/value maps into row-major tables.
    pub fn from_maps(keys: &Fmap, values: &Fmap) -> Self {
        let slots = keys.plane();
        Self {
            keys: transpose(keys),
            values: transpose(values),
            slots,
            key_dim: keys.c,
            value_dim: values.c,
        }
    }

    fn attention_row(&self, query: &[f64], scale: f64, weights: &mut [f64]) {
        let mut max = f64::NEG_INFINITY;
        for (s, wv) in weights.iter_mut().enumerate() {
            let key = &self.keys[s * self.key_dim..(s + 1) * self.key_dim];
            let logit = scale * query.iter().zip(key).map(|(a, b)| a * b).sum::<f64>();
            *wv = logit;
            max = max.max(logit);
        }
        let mut total = 0.0;
        for wv in weights.iter_mut() {
            *wv = libm::exp(*wv - max);
            total += *wv;
        }
        weights.iter_mut().for_each(|wv| *wv /= total);
    }
}

/// Row-major `(plane, c)` copy of a channel-major map.
pub(crate) fn transpose(m: &Fmap) -> Vec<f64> {
    let n = m.plane();
    let mut out = vec![0.0; n * m.c];
    for c in 0..m.c {
        for (p, &v) in m.channel(c).iter().enumerate() {
            out[p * m.c + c] = v;
        }
    }
    out
}

pub(crate) fn untranspose(rows: &[f64], c: usize, h: usize, w: usize) -> Fmap {
    let n = h * w;
    let mut m = Fmap::zeros(c, h, w);
    for p in 0..n {
        for ch in 0..c {
            m.data[ch * n + p] = rows[p * c + ch];
        }
    }
    m
}

/// Softmax attention of every target position over all reference slots.
/// Returns the transported values as a channel-major map.
pub(crate) fn attend(queries: &Fmap, memory: &Memory) -> Fmap {
    let scale = 1.0 / libm::sqrt(memory.key_dim as f64);
    let q = transpose(queries);
    let n = queries.plane();
    let dv = memory.value_dim;
    let mut out_rows = vec![0.0; n * dv];
    let mut weights = vec![0.0; memory.slots];
    for p in 0..n {
        let query = &q[p * memory.key_dim..(p + 1) * memory.key_dim];
        memory.attention_row(query, scale, &mut weights);
        let out = &mut out_rows[p * dv..(p + 1) * dv];
        for (s, &a) in weights.iter().enumerate() {
            let v = &memory.values[s * dv..(s + 1) * dv];
            for (o, vv) in out.iter_mut().zip(v) {
                *o += a * vv;
            }
        }
    }
    untranspose(&out_rows, dv, queries.h, queries.w)
}

/// Backward pass of [`attend`]; attention weights are recomputed row by row.
/// Returns the query gradient and accumulates key / value gradients
/// (row-major, same layout as `memory`).
pub(crate) fn attend_backward(
    queries: &Fmap,
    memory: &Memory,
    grad_out: &Fmap,
    grad_keys: &mut [f64],
    grad_values: &mut [f64],
) -> Fmap {
    let scale = 1.0 / libm::sqrt(memory.key_dim as f64);
    let q = transpose(queries);
    let go = transpose(grad_out);
    let n = queries.plane();
    let (dk, dv) = (memory.key_dim, memory.value_dim);
    let mut grad_q = vec![0.0; n * dk];
    let mut weights = vec![0.0; memory.slots];
    let mut grad_logits = vec![0.0; memory.slots];
    for p in 0..n {
        let query = &q[p * dk..(p + 1) * dk];
        let g = &go[p * dv..(p + 1) * dv];
        memory.attention_row(query, scale, &mut weights);
        let mut weighted = 0.0;
        for (s, gl) in grad_logits.iter_mut().enumerate() {
            let v = &memory.values[s * dv..(s + 1) * dv];
            *gl = g.iter().zip(v).map(|(a, b)| a * b).sum::<f64>();
            weighted += weights[s] * *gl;
        }
        let gq = &mut grad_q[p * dk..(p + 1) * dk];
        for s in 0..memory.slots {
            let a = weights[s];
            let dlogit = a * (grad_logits[s] - weighted) * scale;
            let key = &memory.keys[s * dk..(s + 1) * dk];
            let gkey = &mut grad_keys[s * dk..(s + 1) * dk];
            for d in 0..dk {
                gq[d] += dlogit * key[d];
                gkey[d] += dlogit * query[d];
            }
            let gval = &mut grad_values[s * dv..(s + 1) * dv];
            for (gv, gg) in gval.iter_mut().zip(g) {
                *gv += a * gg;
            }
        }
    }
    untranspose(&grad_q, dk, queries.h, queries.w)
}
