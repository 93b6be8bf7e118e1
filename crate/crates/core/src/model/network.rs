use alloc::format;
use alloc::string::ToString;
use alloc::vec;
use alloc::vec::Vec;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::arch::{self, Arch, LayerSpec, CHROMA};
use super::layers::{
    attend, attend_backward, avg_pool, avg_pool_backward, conv_backward, conv_forward,
    tanh_backward, tanh_inplace, untranspose, Fmap, Memory,
};
use super::{
    check_inputs, ColorSequence, Colorizer, GradientEval, LayerInfo, MonoSequence, Objective,
    Reference,
};
use crate::colorspace::{lab_to_rgb_vjp, lab_to_srgb, rgb_to_gray, srgb_to_lab};
use crate::image::RgbImage;
use crate::{Error, Result};

const L_RANGE: f64 = 100.0;
const AB_RANGE: f64 = 127.0;
const AB_INPUT_SCALE: f64 = 128.0;
const ATTENTION_INIT_GAIN: f64 = 4.0;

/// Parameters of the stand-in network plus its architecture.
#[derive(Clone, Debug, PartialEq)]
pub struct ModelState {
    arch: Arch,
    theta: Vec<f64>,
    init_seed: u64,
    specs: Vec<LayerSpec>,
    offsets: Vec<usize>,
}

struct RefBranch {
    gray: Fmap,
    r1: Fmap,
    r2: Fmap,
    pooled: Fmap,
    memory: Memory,
}

struct FrameTrace {
    window: Fmap,
    e1: Fmap,
    e2: Fmap,
    queries: Fmap,
    dec_in: Fmap,
    d1: Fmap,
    d2: Fmap,
    lab: Vec<[f64; 3]>,
}

impl ModelState {
    /// Fresh parameters: weights uniform in `+-1/sqrt(fan_in)`, zero biases.
    pub fn init(arch: Arch, seed: u64) -> Result<Self> {
        arch.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut theta = Vec::with_capacity(arch.param_count());
        for (i, layer) in arch.layers().iter().enumerate() {
            let gain = if i == arch::QUERY || i == arch::KEY {
                ATTENTION_INIT_GAIN
            } else {
                1.0
            };
            let bound = gain / libm::sqrt(layer.fan_in() as f64);
            theta.extend((0..layer.weight_count()).map(|_| rng.gen_range(-bound..bound)));
            theta.extend(core::iter::repeat_n(0.0, layer.outputs));
        }
        Self::from_parts(arch, theta, seed)
    }

    pub fn from_parts(arch: Arch, theta: Vec<f64>, init_seed: u64) -> Result<Self> {
        arch.validate()?;
        let (offsets, total) = arch.offsets();
        if theta.len() != total {
            return Err(Error::InvalidState(format!(
                "architecture needs {total} parameters, got {}",
                theta.len()
            )));
        }
        Ok(Self {
            arch,
            theta,
            init_seed,
            specs: arch.layers(),
            offsets,
        })
    }

    pub fn arch(&self) -> &Arch {
        &self.arch
    }

    pub fn theta(&self) -> &[f64] {
        &self.theta
    }

    pub fn init_seed(&self) -> u64 {
        self.init_seed
    }

    pub fn param_count(&self) -> usize {
        self.theta.len()
    }

    fn layer(&self, idx: usize) -> (&LayerSpec, &[f64]) {
        let spec = &self.specs[idx];
        let start = self.offsets[idx];
        (spec, &self.theta[start..start + spec.param_count()])
    }

    fn validate(&self, x: &MonoSequence, z: &Reference) -> Result<()> {
        check_inputs(x, z)?;
        if let Some(i) = self.theta.iter().position(|v| !v.is_finite()) {
            return Err(Error::InvalidState(format!("parameter {i} is not finite")));
        }
        Ok(())
    }

    fn conv(&self, idx: usize, input: &Fmap) -> Fmap {
        let (spec, params) = self.layer(idx);
        conv_forward(spec, params, input)
    }

    fn conv_tanh(&self, idx: usize, input: &Fmap) -> Fmap {
        let mut out = self.conv(idx, input);
        tanh_inplace(&mut out);
        out
    }

    fn conv_back(
        &self,
        idx: usize,
        input: &Fmap,
        grad_out: &Fmap,
        grads: &mut [f64],
        want_input: bool,
    ) -> Option<Fmap> {
        let (spec, params) = self.layer(idx);
        let start = self.offsets[idx];
        let g = &mut grads[start..start + spec.param_count()];
        conv_backward(spec, params, input, grad_out, g, want_input)
    }

    fn reference_branch(&self, z: &Reference) -> RefBranch {
        let img = z.image();
        let (h, w) = img.dims();
        let gray = Fmap {
            c: 1,
            h,
            w,
            data: rgb_to_gray(img).values().to_vec(),
        };
        let r1 = self.conv_tanh(arch::REF1, &gray);
        let r2 = self.conv_tanh(arch::REF2, &r1);
        let stride = self.arch.ref_stride;
        let pooled = avg_pool(&r2, stride);

        let mut chroma = Fmap::zeros(CHROMA, h, w);
        for (p, &px) in img.pixels().iter().enumerate() {
            let lab = srgb_to_lab(px);
            chroma.data[p] = lab[1] / AB_INPUT_SCALE;
            chroma.data[h * w + p] = lab[2] / AB_INPUT_SCALE;
        }
        let chroma = avg_pool(&chroma, stride);

        let keys = self.conv(arch::KEY, &pooled);
        let values = self.conv(arch::VALUE, &pooled);
        let memory = Memory::from_maps(&keys, &Fmap::concat(&[&chroma, &values]));
        RefBranch {
            gray,
            r1,
            r2,
            pooled,
            memory,
        }
    }

    fn window(&self, x: &MonoSequence, t: usize) -> Fmap {
        let (h, w) = x.dims();
        let n = self.arch.window;
        let mut m = Fmap::zeros(n, h, w);
        for j in 0..n {
            let idx = (t + j).checked_sub(n / 2);
            if let Some(frame) = idx.and_then(|i| x.frames().get(i)) {
                m.channel_mut(j).copy_from_slice(frame.values());
            }
        }
        m
    }

    fn frame(&self, x: &MonoSequence, t: usize, rb: &RefBranch) -> (RgbImage, FrameTrace) {
        let (h, w) = x.dims();
        let window = self.window(x, t);
        let e1 = self.conv_tanh(arch::ENC1, &window);
        let e2 = self.conv_tanh(arch::ENC2, &e1);
        let queries = self.conv(arch::QUERY, &e2);
        let transported = attend(&queries, &rb.memory);
        let center = Fmap {
            c: 1,
            h,
            w,
            data: x.frames()[t].values().to_vec(),
        };
        let dec_in = Fmap::concat(&[&e2, &center, &transported]);
        let d1 = self.conv_tanh(arch::DEC1, &dec_in);
        let d2 = self.conv_tanh(arch::DEC2, &d1);
        let head = self.conv(arch::HEAD, &d2);

        // Residual head: luminance starts from the gray input, chrominance
        // from the chroma transported out of the reference.
        let n = h * w;
        let gray = x.frames()[t].values();
        let lab: Vec<[f64; 3]> = (0..n)
            .map(|p| {
                [
                    L_RANGE * sigmoid(head.data[p] + logit(gray[p])),
                    AB_RANGE * libm::tanh(head.data[n + p] + transported.data[p]),
                    AB_RANGE * libm::tanh(head.data[2 * n + p] + transported.data[n + p]),
                ]
            })
            .collect();
        let rgb = RgbImage::new(w, h, lab.iter().map(|&p| lab_to_srgb(p)).collect())
            .expect("dimensions come from the input sequence");
        let trace = FrameTrace {
            window,
            e1,
            e2,
            queries,
            dec_in,
            d1,
            d2,
            lab,
        };
        (rgb, trace)
    }

    fn frame_backward(
        &self,
        trace: &FrameTrace,
        rb: &RefBranch,
        grad_rgb: &[[f64; 3]],
        grads: &mut [f64],
        grad_keys: &mut [f64],
        grad_values: &mut [f64],
    ) {
        let (h, w) = (trace.window.h, trace.window.w);
        let n = h * w;
        let grad_lab = lab_to_rgb_vjp(&trace.lab, grad_rgb);
        let mut grad_head = Fmap::zeros(3, h, w);
        for (p, (g, lab)) in grad_lab.iter().zip(&trace.lab).enumerate() {
            let s = lab[0] / L_RANGE;
            grad_head.data[p] = g[0] * L_RANGE * s * (1.0 - s);
            let ta = lab[1] / AB_RANGE;
            grad_head.data[n + p] = g[1] * AB_RANGE * (1.0 - ta * ta);
            let tb = lab[2] / AB_RANGE;
            grad_head.data[2 * n + p] = g[2] * AB_RANGE * (1.0 - tb * tb);
        }

        let mut g_d2 = self
            .conv_back(arch::HEAD, &trace.d2, &grad_head, grads, true)
            .expect("input gradient requested");
        tanh_backward(&trace.d2, &mut g_d2);
        let mut g_d1 = self
            .conv_back(arch::DEC2, &trace.d1, &g_d2, grads, true)
            .expect("input gradient requested");
        tanh_backward(&trace.d1, &mut g_d1);
        let g_in = self
            .conv_back(arch::DEC1, &trace.dec_in, &g_d1, grads, true)
            .expect("input gradient requested");
        let c = self.arch.enc_channels;
        let parts = g_in.split(&[c, 1, CHROMA + self.arch.value_dim]);
        let mut g_e2 = parts[0].clone();
        let mut g_transported = parts[2].clone();
        for p in 0..n {
            g_transported.data[p] += grad_head.data[n + p];
            g_transported.data[n + p] += grad_head.data[2 * n + p];
        }

        let g_q = attend_backward(&trace.queries, &rb.memory, &g_transported, grad_keys, grad_values);
        let g_e2_q = self
            .conv_back(arch::QUERY, &trace.e2, &g_q, grads, true)
            .expect("input gradient requested");
        g_e2.add_assign(&g_e2_q);
        tanh_backward(&trace.e2, &mut g_e2);
        let mut g_e1 = self
            .conv_back(arch::ENC2, &trace.e1, &g_e2, grads, true)
            .expect("input gradient requested");
        tanh_backward(&trace.e1, &mut g_e1);
        self.conv_back(arch::ENC1, &trace.window, &g_e1, grads, false);
    }

    fn reference_backward(
        &self,
        rb: &RefBranch,
        grad_keys: &[f64],
        grad_values: &[f64],
        grads: &mut [f64],
    ) {
        let (ph, pw) = (rb.pooled.h, rb.pooled.w);
        let slots = rb.memory.slots;
        let dv_total = rb.memory.value_dim;
        let dv = self.arch.value_dim;
        let mut learned = vec![0.0; slots * dv];
        for s in 0..slots {
            learned[s * dv..(s + 1) * dv]
                .copy_from_slice(&grad_values[s * dv_total + CHROMA..(s + 1) * dv_total]);
        }
        let g_values = untranspose(&learned, dv, ph, pw);
        let g_keys = untranspose(grad_keys, rb.memory.key_dim, ph, pw);
        let mut g_pooled = self
            .conv_back(arch::VALUE, &rb.pooled, &g_values, grads, true)
            .expect("input gradient requested");
        let g_pooled_k = self
            .conv_back(arch::KEY, &rb.pooled, &g_keys, grads, true)
            .expect("input gradient requested");
        g_pooled.add_assign(&g_pooled_k);
        let mut g_r2 = avg_pool_backward(&g_pooled, self.arch.ref_stride, rb.r2.h, rb.r2.w);
        tanh_backward(&rb.r2, &mut g_r2);
        let mut g_r1 = self
            .conv_back(arch::REF2, &rb.r1, &g_r2, grads, true)
            .expect("input gradient requested");
        tanh_backward(&rb.r1, &mut g_r1);
        self.conv_back(arch::REF1, &rb.gray, &g_r1, grads, false);
    }
}

#[inline]
fn logit(v: f64) -> f64 {
    let v = v.clamp(1e-3, 1.0 - 1e-3);
    libm::log(v / (1.0 - v))
}

#[inline]
fn sigmoid(v: f64) -> f64 {
    1.0 / (1.0 + libm::exp(-v))
}

impl Colorizer for ModelState {
    fn parameters(&self) -> &[f64] {
        &self.theta
    }

    fn parameters_mut(&mut self) -> &mut [f64] {
        &mut self.theta
    }

    fn layers(&self) -> Vec<LayerInfo> {
        self.specs
            .iter()
            .zip(&self.offsets)
            .map(|(s, &o)| LayerInfo {
                name: s.name.to_string(),
                range: o..o + s.param_count(),
            })
            .collect()
    }

    fn forward(&self, x: &MonoSequence, z: &Reference) -> Result<ColorSequence> {
        self.validate(x, z)?;
        let rb = self.reference_branch(z);
        let frames = (0..x.len()).map(|t| self.frame(x, t, &rb).0).collect();
        ColorSequence::new(frames)
    }

    fn forward_first(&self, x: &MonoSequence, z: &Reference) -> Result<RgbImage> {
        self.validate(x, z)?;
        let rb = self.reference_branch(z);
        Ok(self.frame(x, 0, &rb).0)
    }

    fn gradient(
        &self,
        x: &MonoSequence,
        z: &Reference,
        frames: &[usize],
        objective: &mut Objective<'_>,
    ) -> Result<GradientEval> {
        self.validate(x, z)?;
        if let Some(&bad) = frames.iter().find(|&&t| t >= x.len()) {
            return Err(Error::InvalidInput(format!(
                "frame {bad} out of range for a {}-frame sequence",
                x.len()
            )));
        }
        let rb = self.reference_branch(z);
        let mut grads = vec![0.0; self.theta.len()];
        let mut grad_keys = vec![0.0; rb.memory.keys.len()];
        let mut grad_values = vec![0.0; rb.memory.values.len()];
        let mut loss = 0.0;
        let mut outputs = Vec::with_capacity(frames.len());
        for &t in frames {
            let (rgb, trace) = self.frame(x, t, &rb);
            let (l, grad_rgb) = objective(t, &rgb)?;
            if grad_rgb.len() != rgb.len() {
                return Err(Error::InvalidInput(format!(
                    "objective returned {} gradients for {} pixels",
                    grad_rgb.len(),
                    rgb.len()
                )));
            }
            loss += l;
            self.frame_backward(&trace, &rb, &grad_rgb, &mut grads, &mut grad_keys, &mut grad_values);
            outputs.push(rgb);
        }
        self.reference_backward(&rb, &grad_keys, &grad_values, &mut grads);
        Ok(GradientEval {
            loss,
            gradient: grads,
            outputs,
        })
    }
}
