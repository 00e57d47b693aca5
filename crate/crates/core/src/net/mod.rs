//! A minimal convolutional classifier with tapped layers.
//!
//! Each stage is `conv k×k (zero padding, stride 1) → ReLU → maxpool 2×2`.
//! The head flattens the last pooled map (row, col, channel order) and applies
//! one dense layer producing class logits. The post-pool activation of every
//! stage can be exposed as a tap, together with the gradient of a chosen
//! class logit with respect to it.
//!
//! Parameter layouts:
//! - stage kernel: `[ky][kx][c_in][c_out]`, flat
//! - head weight: `[class][input]`, flat

mod checkpoint;
mod train;

pub use checkpoint::{load_checkpoint, save_checkpoint, CHECKPOINT_JSON, CHECKPOINT_TENSORS};
pub use train::{accuracy, evaluate, train, EpochMetrics, Hyper, TrainOutcome};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensor::Tensor3;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct StageSpec {
    pub kernel: usize,
    pub out_channels: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Architecture {
    pub input_size: usize,
    pub in_channels: usize,
    pub stages: Vec<StageSpec>,
    /// Names of tapped stages (`stage1` … `stageN`), in network order.
    pub taps: Vec<String>,
    pub n_classes: usize,
}

pub fn tap_name(stage: usize) -> String {
    format!("stage{}", stage + 1)
}

impl Architecture {
    /// 64×64 RGB input, four 3×3 stages with 16/32/64/64 channels, every stage tapped.
    pub fn default_for(n_classes: usize) -> Self {
        Self::with_channels(64, &[16, 32, 64, 64], n_classes)
    }

    pub fn with_channels(input_size: usize, channels: &[usize], n_classes: usize) -> Self {
        Self {
            input_size,
            in_channels: 3,
            stages: channels
                .iter()
                .map(|&c| StageSpec {
                    kernel: 3,
                    out_channels: c,
                })
                .collect(),
            taps: (0..channels.len()).map(tap_name).collect(),
            n_classes,
        }
    }

    /// Spatial size after stage `i` (post-pool).
    pub fn stage_size(&self, i: usize) -> usize {
        self.input_size >> (i + 1)
    }

    pub fn stage_in_channels(&self, i: usize) -> usize {
        if i == 0 {
            self.in_channels
        } else {
            self.stages[i - 1].out_channels
        }
    }

    pub fn head_inputs(&self) -> usize {
        let last = self.stages.len() - 1;
        let s = self.stage_size(last);
        s * s * self.stages[last].out_channels
    }

    /// Stage indices of the taps, in network order.
    pub fn tap_stages(&self) -> Result<Vec<usize>> {
        self.taps
            .iter()
            .map(|name| {
                (0..self.stages.len())
                    .find(|&i| tap_name(i) == *name)
                    .ok_or_else(|| Error::invalid(format!("unknown tap '{name}'")))
            })
            .collect()
    }

    /// `(name, h, w, c)` for every tap.
    pub fn tap_shapes(&self) -> Result<Vec<(String, usize, usize, usize)>> {
        Ok(self
            .tap_stages()?
            .into_iter()
            .map(|i| {
                let s = self.stage_size(i);
                (tap_name(i), s, s, self.stages[i].out_channels)
            })
            .collect())
    }

    pub fn validate(&self) -> Result<()> {
        if self.stages.is_empty() || self.n_classes < 2 || self.in_channels == 0 {
            return Err(Error::invalid(
                "architecture needs stages, ≥2 classes and input channels",
            ));
        }
        if self
            .stages
            .iter()
            .any(|s| s.kernel % 2 == 0 || s.out_channels == 0)
        {
            return Err(Error::invalid(
                "kernels must be odd and channel counts positive",
            ));
        }
        let n = self.stages.len();
        if self.input_size == 0 || !self.input_size.is_multiple_of(1 << n) {
            return Err(Error::invalid(format!(
                "input size {} must be divisible by 2^{n}",
                self.input_size
            )));
        }
        let stages = self.tap_stages()?;
        if stages.len() < 2 {
            return Err(Error::invalid("at least two tap points are required"));
        }
        if stages.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::invalid("taps must be distinct and in network order"));
        }
        if let Some(&i) = stages.iter().find(|&&i| self.stage_size(i) < 2) {
            return Err(Error::invalid(format!(
                "tap {} would be smaller than 2x2",
                tap_name(i)
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConvParams {
    pub kernel: Vec<f32>,
    pub bias: Vec<f32>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NetworkParams {
    pub arch: Architecture,
    pub stages: Vec<ConvParams>,
    pub head_weight: Vec<f32>,
    pub head_bias: Vec<f32>,
}

/// He-uniform weights, zero biases.
pub fn init(arch: &Architecture, seed: u64) -> Result<NetworkParams> {
    arch.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut he = |n: usize, fan_in: usize| -> Vec<f32> {
        let limit = (6.0 / fan_in as f64).sqrt();
        (0..n)
            .map(|_| rng.random_range(-limit..limit) as f32)
            .collect()
    };
    let stages = arch
        .stages
        .iter()
        .enumerate()
        .map(|(i, s)| {
            let cin = arch.stage_in_channels(i);
            let fan_in = s.kernel * s.kernel * cin;
            ConvParams {
                kernel: he(fan_in * s.out_channels, fan_in),
                bias: vec![0.0; s.out_channels],
            }
        })
        .collect();
    let nin = arch.head_inputs();
    Ok(NetworkParams {
        arch: arch.clone(),
        stages,
        head_weight: he(nin * arch.n_classes, nin),
        head_bias: vec![0.0; arch.n_classes],
    })
}

impl NetworkParams {
    pub fn n_classes(&self) -> usize {
        self.arch.n_classes
    }

    pub fn is_finite(&self) -> bool {
        self.stages
            .iter()
            .flat_map(|s| s.kernel.iter().chain(&s.bias))
            .chain(&self.head_weight)
            .chain(&self.head_bias)
            .all(|v| v.is_finite())
    }

    pub(crate) fn zeros_like(&self) -> Self {
        Self {
            arch: self.arch.clone(),
            stages: self
                .stages
                .iter()
                .map(|s| ConvParams {
                    kernel: vec![0.0; s.kernel.len()],
                    bias: vec![0.0; s.bias.len()],
                })
                .collect(),
            head_weight: vec![0.0; self.head_weight.len()],
            head_bias: vec![0.0; self.head_bias.len()],
        }
    }

    pub(crate) fn slices_mut(&mut self) -> Vec<&mut [f32]> {
        let mut out: Vec<&mut [f32]> = Vec::new();
        for s in &mut self.stages {
            out.push(&mut s.kernel);
            out.push(&mut s.bias);
        }
        out.push(&mut self.head_weight);
        out.push(&mut self.head_bias);
        out
    }

    pub(crate) fn slices(&self) -> Vec<&[f32]> {
        let mut out: Vec<&[f32]> = Vec::new();
        for s in &self.stages {
            out.push(&s.kernel);
            out.push(&s.bias);
        }
        out.push(&self.head_weight);
        out.push(&self.head_bias);
        out
    }

    fn check_input(&self, image: &Tensor3) -> Result<()> {
        let a = &self.arch;
        if image.shape() != (a.input_size, a.input_size, a.in_channels) {
            return Err(Error::shape(format!(
                "image {:?} does not match network input {}x{}x{}",
                image.shape(),
                a.input_size,
                a.input_size,
                a.in_channels
            )));
        }
        Ok(())
    }

    fn check_class(&self, class_k: usize) -> Result<()> {
        if class_k >= self.arch.n_classes {
            return Err(Error::OutOfRange {
                index: class_k,
                len: self.arch.n_classes,
            });
        }
        Ok(())
    }
}

/// Named activation maps.
pub type TapSet = Vec<(String, Tensor3)>;

/// Gradients of one class logit with respect to each tap.
#[derive(Debug, Clone, PartialEq)]
pub struct GradTapSet {
    pub class_k: usize,
    pub grads: Vec<(String, Tensor3)>,
}

/// Intermediate values of one forward pass.
pub(crate) struct Trace {
    /// Input to each stage (the image, then each pooled map).
    inputs: Vec<Vec<f32>>,
    /// Pre-activation of each stage.
    pre: Vec<Vec<f32>>,
    /// For each pooled element, the flat index in the ReLU output it came from.
    argmax: Vec<Vec<u32>>,
    /// Output of the last pool (head input).
    pooled_last: Vec<f32>,
    pub logits: Vec<f32>,
}

fn conv_forward(
    x: &[f32],
    size: usize,
    cin: usize,
    k: usize,
    cout: usize,
    p: &ConvParams,
) -> Vec<f32> {
    let pad = (k / 2) as isize;
    let mut out = vec![0.0f32; size * size * cout];
    for oy in 0..size {
        for ox in 0..size {
            let o = &mut out[(oy * size + ox) * cout..(oy * size + ox + 1) * cout];
            o.copy_from_slice(&p.bias);
            for ky in 0..k {
                let iy = oy as isize + ky as isize - pad;
                if iy < 0 || iy >= size as isize {
                    continue;
                }
                for kx in 0..k {
                    let ix = ox as isize + kx as isize - pad;
                    if ix < 0 || ix >= size as isize {
                        continue;
                    }
                    let xin = &x[(iy as usize * size + ix as usize) * cin..][..cin];
                    let wbase = (ky * k + kx) * cin * cout;
                    for (ci, &a) in xin.iter().enumerate() {
                        if a == 0.0 {
                            continue;
                        }
                        let w = &p.kernel[wbase + ci * cout..wbase + (ci + 1) * cout];
                        for (ov, wv) in o.iter_mut().zip(w) {
                            *ov += a * wv;
                        }
                    }
                }
            }
        }
    }
    out
}

/// Accumulates kernel/bias gradients and (optionally) the input gradient of one conv.
#[allow(clippy::too_many_arguments)]
fn conv_backward(
    x: &[f32],
    dz: &[f32],
    size: usize,
    cin: usize,
    k: usize,
    cout: usize,
    p: &ConvParams,
    grads: Option<&mut ConvParams>,
    mut dx: Option<&mut [f32]>,
) {
    let pad = (k / 2) as isize;
    let mut grads = grads;
    for oy in 0..size {
        for ox in 0..size {
            let g = &dz[(oy * size + ox) * cout..(oy * size + ox + 1) * cout];
            if g.iter().all(|v| *v == 0.0) {
                continue;
            }
            if let Some(gp) = grads.as_deref_mut() {
                for (b, gv) in gp.bias.iter_mut().zip(g) {
                    *b += gv;
                }
            }
            for ky in 0..k {
                let iy = oy as isize + ky as isize - pad;
                if iy < 0 || iy >= size as isize {
                    continue;
                }
                for kx in 0..k {
                    let ix = ox as isize + kx as isize - pad;
                    if ix < 0 || ix >= size as isize {
                        continue;
                    }
                    let xoff = (iy as usize * size + ix as usize) * cin;
                    let wbase = (ky * k + kx) * cin * cout;
                    for ci in 0..cin {
                        let wr = wbase + ci * cout..wbase + (ci + 1) * cout;
                        if let Some(gp) = grads.as_deref_mut() {
                            let a = x[xoff + ci];
                            if a != 0.0 {
                                for (wg, gv) in gp.kernel[wr.clone()].iter_mut().zip(g) {
                                    *wg += a * gv;
                                }
                            }
                        }
                        if let Some(d) = dx.as_deref_mut() {
                            let s: f32 = p.kernel[wr].iter().zip(g).map(|(w, gv)| w * gv).sum();
                            d[xoff + ci] += s;
                        }
                    }
                }
            }
        }
    }
}

/// ReLU followed by 2×2 max pooling. Ties go to the first element in row-major order.
fn relu_pool(z: &[f32], size: usize, c: usize) -> (Vec<f32>, Vec<u32>) {
    let half = size / 2;
    let mut out = vec![0.0f32; half * half * c];
    let mut arg = vec![0u32; half * half * c];
    for py in 0..half {
        for px in 0..half {
            for ch in 0..c {
                let mut best = f32::NEG_INFINITY;
                let mut best_i = 0usize;
                for dy in 0..2 {
                    for dx in 0..2 {
                        let i = ((2 * py + dy) * size + 2 * px + dx) * c + ch;
                        let v = z[i].max(0.0);
                        if v > best {
                            best = v;
                            best_i = i;
                        }
                    }
                }
                let o = (py * half + px) * c + ch;
                out[o] = best;
                arg[o] = best_i as u32;
            }
        }
    }
    (out, arg)
}

impl NetworkParams {
    pub(crate) fn trace(&self, image: &Tensor3) -> Result<Trace> {
        self.check_input(image)?;
        let a = &self.arch;
        let mut x = image.data().to_vec();
        let mut inputs = Vec::with_capacity(a.stages.len());
        let mut pre = Vec::with_capacity(a.stages.len());
        let mut argmax = Vec::with_capacity(a.stages.len());
        let mut size = a.input_size;
        for (i, st) in a.stages.iter().enumerate() {
            let cin = a.stage_in_channels(i);
            let z = conv_forward(&x, size, cin, st.kernel, st.out_channels, &self.stages[i]);
            let (pooled, arg) = relu_pool(&z, size, st.out_channels);
            inputs.push(std::mem::replace(&mut x, pooled));
            pre.push(z);
            argmax.push(arg);
            size /= 2;
        }
        let logits = self.head(&x);
        Ok(Trace {
            inputs,
            pre,
            argmax,
            pooled_last: x,
            logits,
        })
    }

    fn head(&self, flat: &[f32]) -> Vec<f32> {
        let nin = flat.len();
        (0..self.arch.n_classes)
            .map(|k| {
                let w = &self.head_weight[k * nin..(k + 1) * nin];
                self.head_bias[k] + w.iter().zip(flat).map(|(a, b)| a * b).sum::<f32>()
            })
            .collect()
    }

    /// Runs the network, returning class logits and every tap.
    pub fn forward(&self, image: &Tensor3) -> Result<(Vec<f32>, TapSet)> {
        let trace = self.trace(image)?;
        let taps = self.taps_from(&trace)?;
        Ok((trace.logits, taps))
    }

    pub fn logits(&self, image: &Tensor3) -> Result<Vec<f32>> {
        Ok(self.trace(image)?.logits)
    }

    fn pooled(&self, trace: &Trace, stage: usize) -> Vec<f32> {
        if stage + 1 < self.arch.stages.len() {
            trace.inputs[stage + 1].clone()
        } else {
            trace.pooled_last.clone()
        }
    }

    fn taps_from(&self, trace: &Trace) -> Result<TapSet> {
        self.arch
            .tap_stages()?
            .into_iter()
            .map(|i| {
                let s = self.arch.stage_size(i);
                let c = self.arch.stages[i].out_channels;
                Ok((tap_name(i), Tensor3::new(s, s, c, self.pooled(trace, i))?))
            })
            .collect()
    }

    /// Gradient of the class-`class_k` logit with respect to every tap.
    pub fn backward_to_taps(&self, image: &Tensor3, class_k: usize) -> Result<GradTapSet> {
        self.check_class(class_k)?;
        let trace = self.trace(image)?;
        let nin = self.arch.head_inputs();
        let dflat = self.head_weight[class_k * nin..(class_k + 1) * nin].to_vec();
        let per_stage = self.backprop(&trace, dflat, None);
        let grads = self
            .arch
            .tap_stages()?
            .into_iter()
            .map(|i| {
                let s = self.arch.stage_size(i);
                let c = self.arch.stages[i].out_channels;
                Ok((tap_name(i), Tensor3::new(s, s, c, per_stage[i].clone())?))
            })
            .collect::<Result<_>>()?;
        Ok(GradTapSet { class_k, grads })
    }

    /// Reverse pass from the gradient of the last pooled map.
    ///
    /// Returns the gradient with respect to every stage's pooled output and,
    /// when `param_grads` is given, accumulates parameter gradients into it.
    fn backprop(
        &self,
        trace: &Trace,
        dlast: Vec<f32>,
        mut param_grads: Option<&mut NetworkParams>,
    ) -> Vec<Vec<f32>> {
        let a = &self.arch;
        let n = a.stages.len();
        let mut dpooled = vec![Vec::new(); n];
        let mut d = dlast;
        for i in (0..n).rev() {
            let size = a.input_size >> i;
            let cout = a.stages[i].out_channels;
            let cin = a.stage_in_channels(i);
            // Through max pool and ReLU.
            let mut dz = vec![0.0f32; size * size * cout];
            for (o, &src) in trace.argmax[i].iter().enumerate() {
                if trace.pre[i][src as usize] > 0.0 {
                    dz[src as usize] += d[o];
                }
            }
            let need_dx = i > 0;
            let mut dx = if need_dx {
                vec![0.0f32; size * size * cin]
            } else {
                Vec::new()
            };
            conv_backward(
                &trace.inputs[i],
                &dz,
                size,
                cin,
                a.stages[i].kernel,
                cout,
                &self.stages[i],
                param_grads.as_deref_mut().map(|g| &mut g.stages[i]),
                need_dx.then_some(dx.as_mut_slice()),
            );
            dpooled[i] = std::mem::replace(&mut d, dx);
        }
        dpooled
    }

    /// Softmax cross-entropy loss of one sample and its parameter gradient (added to `grads`).
    pub(crate) fn loss_and_grad(
        &self,
        image: &Tensor3,
        label: usize,
        grads: &mut NetworkParams,
    ) -> Result<(f32, Vec<f32>)> {
        let trace = self.trace(image)?;
        let probs = softmax(&trace.logits);
        let p = probs[label];
        let loss = if p.is_nan() {
            f32::NAN
        } else {
            -p.max(1e-30).ln()
        };
        let nin = self.arch.head_inputs();
        let mut dflat = vec![0.0f32; nin];
        for (k, p) in probs.iter().enumerate() {
            let dl = p - if k == label { 1.0 } else { 0.0 };
            grads.head_bias[k] += dl;
            let w = &self.head_weight[k * nin..(k + 1) * nin];
            let gw = &mut grads.head_weight[k * nin..(k + 1) * nin];
            for ((g, x), (df, wv)) in gw
                .iter_mut()
                .zip(&trace.pooled_last)
                .zip(dflat.iter_mut().zip(w))
            {
                *g += dl * x;
                *df += dl * wv;
            }
        }
        self.backprop(&trace, dflat, Some(grads));
        Ok((loss, trace.logits))
    }
}

pub fn softmax(logits: &[f32]) -> Vec<f32> {
    let m = logits.iter().copied().fold(f32::NEG_INFINITY, f32::max);
    let e: Vec<f64> = logits.iter().map(|v| f64::from(v - m).exp()).collect();
    let s: f64 = e.iter().sum();
    e.iter().map(|v| (v / s) as f32).collect()
}
