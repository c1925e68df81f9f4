//! The fixed mini encoder-decoder.
//!
//! ```text
//! input 3 x H x W
//! stem     3x3/2 conv 3->16, norm, relu                     H/2
//! enc1     ESP 16                                           H/2  (skip s2)
//! down1    ESP 16->32, strided reduce                       H/4
//! enc2a/b  ESP 32                                           H/4  (skip s4)
//! down2    ESP 32->64, strided reduce                       H/8
//! enc3a/b  ESP 64                                           H/8
//! dec3     up x2, concat s4, 1x1 96->32, norm, relu         H/4
//! dec2     up x2, concat s2, 1x1 48->16, norm, relu         H/2
//! dec1     up x2, concat input, 1x1 19->16, norm, relu      H
//! head     1x1 16->1                                        logits
//! ```

use indexmap::IndexMap;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use super::ops::{
    concat_channels, conv2d_backward, conv2d_forward, norm_backward, norm_forward, relu, relu_backward,
    split_channels, upsample2x, upsample2x_backward, ConvGeometry, NormCache, NORM_MOMENTUM,
};
use super::tensor::{debug_check_finite, Scalar, Tensor};
use super::weights::ModelWeights;
use crate::error::{invalid, Result};
use crate::imgcore::RgbImage;

/// Parallel dilated branches per ESP block.
pub const BRANCHES: usize = 4;
pub const DILATIONS: [usize; BRANCHES] = [1, 2, 4, 8];
/// Total down-sampling factor of the encoder; inputs must be multiples of it.
pub const STRIDE: usize = 8;
pub const STEM_CHANNELS: usize = 16;
pub const INPUT_CHANNELS: usize = 3;

/// Parameter gradients keyed like [`ModelWeights`].
pub type ParamGrads<T> = IndexMap<String, Tensor<T>>;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct EspSpec {
    pub name: &'static str,
    pub in_channels: usize,
    pub out_channels: usize,
    /// 1 keeps resolution and adds the residual; 2 halves it through a 3x3 strided reduce.
    pub stride: usize,
}

impl EspSpec {
    pub const fn new(name: &'static str, in_channels: usize, out_channels: usize, stride: usize) -> Self {
        Self {
            name,
            in_channels,
            out_channels,
            stride,
        }
    }

    pub fn residual(&self) -> bool {
        self.stride == 1 && self.in_channels == self.out_channels
    }

    fn reduce_kernel(&self) -> usize {
        if self.stride == 1 {
            1
        } else {
            3
        }
    }

    fn reduce_geometry(&self) -> ConvGeometry {
        if self.stride == 1 {
            ConvGeometry::new(1, 1, 0)
        } else {
            ConvGeometry::new(self.stride, 1, 1)
        }
    }

    fn branch_channels(&self) -> usize {
        self.out_channels / BRANCHES
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct DecoderSpec {
    pub name: &'static str,
    pub up_channels: usize,
    pub skip_channels: usize,
    pub out_channels: usize,
}

pub const ENCODER: [EspSpec; 7] = [
    EspSpec::new("enc1", 16, 16, 1),
    EspSpec::new("down1", 16, 32, 2),
    EspSpec::new("enc2a", 32, 32, 1),
    EspSpec::new("enc2b", 32, 32, 1),
    EspSpec::new("down2", 32, 64, 2),
    EspSpec::new("enc3a", 64, 64, 1),
    EspSpec::new("enc3b", 64, 64, 1),
];

pub const DECODER: [DecoderSpec; 3] = [
    DecoderSpec {
        name: "dec3",
        up_channels: 64,
        skip_channels: 32,
        out_channels: 32,
    },
    DecoderSpec {
        name: "dec2",
        up_channels: 32,
        skip_channels: 16,
        out_channels: 16,
    },
    DecoderSpec {
        name: "dec1",
        up_channels: 16,
        skip_channels: INPUT_CHANNELS,
        out_channels: 16,
    },
];

/// Index of the last block at /2 and /4 in [`ENCODER`]; their outputs feed the decoder.
const SKIP_S2: usize = 0;
const SKIP_S4: usize = 3;

/// Whether normalization uses batch statistics (training) or the stored running ones.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    Train,
    Eval,
}

impl Mode {
    fn training(self) -> bool {
        self == Mode::Train
    }
}

/// ReLU on/off pattern of every activation layer of one forward pass, in evaluation order.
///
/// Replaying a recorded pattern evaluates the piecewise-linear branch the original input lies
/// on, which is smooth around that input; finite-difference checks use it to step across
/// activation kinks.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct ReluGates(pub Vec<Vec<bool>>);

struct GateSource<'a> {
    frozen: Option<&'a ReluGates>,
    next: usize,
}

impl<'a> GateSource<'a> {
    fn natural() -> Self {
        Self { frozen: None, next: 0 }
    }

    fn frozen(g: &'a ReluGates) -> Self {
        Self {
            frozen: Some(g),
            next: 0,
        }
    }

    fn activate<T: Scalar>(&mut self, x: &Tensor<T>) -> Result<Tensor<T>> {
        let Some(gates) = self.frozen else {
            return Ok(relu(x));
        };
        let gate = gates
            .0
            .get(self.next)
            .filter(|g| g.len() == x.len())
            .ok_or_else(|| invalid!("recorded gates do not match activation layer {}", self.next))?;
        self.next += 1;
        let data = x
            .data()
            .iter()
            .zip(gate)
            .map(|(&v, &on)| if on { v } else { T::zero() })
            .collect();
        Tensor::from_vec(x.shape(), data)
    }
}

fn gate_of<T: Scalar>(y: &Tensor<T>) -> Vec<bool> {
    y.data().iter().map(|&v| v > T::zero()).collect()
}

/// Every tensor the architecture expects, in canonical order, with its shape.
pub fn architecture() -> Vec<(String, Vec<usize>)> {
    let mut out = Vec::new();
    let conv = |out: &mut Vec<(String, Vec<usize>)>, name: String, cout: usize, cin: usize, k: usize| {
        out.push((format!("{name}.weight"), vec![cout, cin, k, k]));
        out.push((format!("{name}.bias"), vec![cout]));
    };
    let norm = |out: &mut Vec<(String, Vec<usize>)>, name: String, c: usize| {
        for suffix in ["gamma", "beta", "running_mean", "running_var"] {
            out.push((format!("{name}.{suffix}"), vec![c]));
        }
    };
    conv(&mut out, "stem.conv".into(), STEM_CHANNELS, INPUT_CHANNELS, 3);
    norm(&mut out, "stem.norm".into(), STEM_CHANNELS);
    for s in ENCODER {
        let c = s.branch_channels();
        conv(&mut out, format!("{}.reduce", s.name), c, s.in_channels, s.reduce_kernel());
        for i in 0..BRANCHES {
            conv(&mut out, format!("{}.branch{i}", s.name), c, c, 3);
        }
        norm(&mut out, format!("{}.norm", s.name), s.out_channels);
    }
    for d in DECODER {
        conv(&mut out, format!("{}.conv", d.name), d.out_channels, d.up_channels + d.skip_channels, 1);
        norm(&mut out, format!("{}.norm", d.name), d.out_channels);
    }
    conv(&mut out, "head".into(), 1, DECODER[2].out_channels, 1);
    out
}

/// He-normal kernels, zero biases, unit scale, zero shift, unit running variance.
pub fn init_weights(seed: u64) -> ModelWeights {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut w = ModelWeights::default();
    for (name, shape) in architecture() {
        let t = if name.ends_with(".weight") {
            let fan_in: usize = shape[1..].iter().product();
            let normal = Normal::new(0.0, (2.0 / fan_in as f64).sqrt()).expect("positive std");
            let data = (0..shape.iter().product::<usize>())
                .map(|_| normal.sample(&mut rng) as f32)
                .collect();
            Tensor::from_vec(&shape, data).expect("shape from architecture")
        } else if name.ends_with(".gamma") || name.ends_with(".running_var") {
            Tensor::filled(&shape, 1.0)
        } else {
            Tensor::zeros(&shape)
        };
        w.insert(name, t);
    }
    w
}

/// Checks that `w` holds exactly the architecture's tensors with the right shapes.
pub fn validate_weights<T: Scalar>(w: &ModelWeights<T>) -> Result<()> {
    let arch = architecture();
    for (name, shape) in &arch {
        let t = w.require(name)?;
        if t.shape() != shape.as_slice() {
            return Err(invalid!("tensor {name:?} has shape {:?}, architecture needs {shape:?}", t.shape()));
        }
    }
    if w.len() != arch.len() {
        let extra: Vec<&str> = w.names().filter(|n| !arch.iter().any(|(a, _)| a == n)).collect();
        return Err(invalid!("weights contain tensors unknown to the architecture: {extra:?}"));
    }
    Ok(())
}

/// Stacks images into a `[n, 3, h, w]` tensor scaled to `[0, 1]`.
pub fn images_to_tensor<T: Scalar>(imgs: &[&RgbImage]) -> Result<Tensor<T>> {
    let first = imgs.first().ok_or_else(|| invalid!("no images to stack"))?;
    let (w, h) = (first.width(), first.height());
    let mut data = Vec::with_capacity(imgs.len() * 3 * w * h);
    let scale = T::lit(1.0 / 255.0);
    for img in imgs {
        if (img.width(), img.height()) != (w, h) {
            return Err(invalid!(
                "cannot stack {}x{} with {w}x{h}",
                img.width(),
                img.height()
            ));
        }
        for c in 0..3 {
            data.extend(img.data().chunks_exact(3).map(|p| T::lit(f64::from(p[c])) * scale));
        }
    }
    Tensor::from_vec(&[imgs.len(), 3, h, w], data)
}

fn conv_fwd<T: Scalar>(w: &ModelWeights<T>, name: &str, x: &Tensor<T>, g: ConvGeometry) -> Result<Tensor<T>> {
    conv2d_forward(x, w.require(&format!("{name}.weight"))?, w.require(&format!("{name}.bias"))?, g)
}

fn accumulate<T: Scalar>(grads: &mut ParamGrads<T>, name: String, g: Tensor<T>) {
    match grads.get_mut(&name) {
        Some(acc) => acc.add_assign(&g),
        None => {
            grads.insert(name, g);
        }
    }
}

fn conv_bwd<T: Scalar>(
    w: &ModelWeights<T>,
    name: &str,
    x: &Tensor<T>,
    grad_out: &Tensor<T>,
    g: ConvGeometry,
    grads: &mut ParamGrads<T>,
) -> Result<Tensor<T>> {
    let (gx, gw, gb) = conv2d_backward(x, w.require(&format!("{name}.weight"))?, grad_out, g)?;
    accumulate(grads, format!("{name}.weight"), gw);
    accumulate(grads, format!("{name}.bias"), gb);
    Ok(gx)
}

fn norm_fwd<T: Scalar>(w: &ModelWeights<T>, name: &str, x: &Tensor<T>, mode: Mode) -> Result<(Tensor<T>, NormCache<T>)> {
    norm_forward(
        x,
        w.require(&format!("{name}.gamma"))?,
        w.require(&format!("{name}.beta"))?,
        w.require(&format!("{name}.running_mean"))?,
        w.require(&format!("{name}.running_var"))?,
        mode.training(),
    )
}

fn norm_bwd<T: Scalar>(
    w: &ModelWeights<T>,
    name: &str,
    cache: &NormCache<T>,
    grad_out: &Tensor<T>,
    grads: &mut ParamGrads<T>,
) -> Result<Tensor<T>> {
    let (gx, gg, gb) = norm_backward(cache, w.require(&format!("{name}.gamma"))?, grad_out)?;
    accumulate(grads, format!("{name}.gamma"), gg);
    accumulate(grads, format!("{name}.beta"), gb);
    Ok(gx)
}

/// Saved activations of one ESP block.
#[derive(Debug, Clone)]
pub struct EspCache<T> {
    spec: EspSpec,
    x: Tensor<T>,
    reduced: Tensor<T>,
    norm: NormCache<T>,
    y: Tensor<T>,
}

/// Reduce, dilated pyramid, hierarchical fusion, concat, norm, optional residual, ReLU.
pub fn esp_module_forward<T: Scalar>(
    x: &Tensor<T>,
    w: &ModelWeights<T>,
    spec: EspSpec,
    mode: Mode,
) -> Result<(Tensor<T>, EspCache<T>)> {
    esp_forward_impl(x, w, spec, mode, &mut GateSource::natural())
}

/// [`esp_module_forward`] with the activation pattern fixed to `gates`.
pub fn esp_module_forward_gated<T: Scalar>(
    x: &Tensor<T>,
    w: &ModelWeights<T>,
    spec: EspSpec,
    mode: Mode,
    gates: &ReluGates,
) -> Result<Tensor<T>> {
    Ok(esp_forward_impl(x, w, spec, mode, &mut GateSource::frozen(gates))?.0)
}

fn esp_forward_impl<T: Scalar>(
    x: &Tensor<T>,
    w: &ModelWeights<T>,
    spec: EspSpec,
    mode: Mode,
    gates: &mut GateSource<'_>,
) -> Result<(Tensor<T>, EspCache<T>)> {
    if spec.out_channels % BRANCHES != 0 || spec.out_channels == 0 {
        return Err(invalid!(
            "block {} has {} output channels, not divisible by {BRANCHES} branches",
            spec.name,
            spec.out_channels
        ));
    }
    let (_, c, _, _) = x.dims4()?;
    if c != spec.in_channels {
        return Err(invalid!("block {} expects {} channels, got {:?}", spec.name, spec.in_channels, x.shape()));
    }
    let p = spec.name;
    let reduced = conv_fwd(w, &format!("{p}.reduce"), x, spec.reduce_geometry())?;
    let mut fused: Vec<Tensor<T>> = Vec::with_capacity(BRANCHES);
    for (i, &d) in DILATIONS.iter().enumerate() {
        let mut b = conv_fwd(w, &format!("{p}.branch{i}"), &reduced, ConvGeometry::same(3, d))?;
        if let Some(prev) = fused.last() {
            b.add_assign(prev);
        }
        fused.push(b);
    }
    let cat = concat_channels(&fused.iter().collect::<Vec<_>>())?;
    let (mut z, norm) = norm_fwd(w, &format!("{p}.norm"), &cat, mode)?;
    if spec.residual() {
        z.add_assign(x);
    }
    let y = gates.activate(&z)?;
    debug_check_finite(&y, p);
    let cache = EspCache {
        spec,
        x: x.clone(),
        reduced,
        norm,
        y: y.clone(),
    };
    Ok((y, cache))
}

/// Returns the gradient with respect to the block input.
pub fn esp_module_backward<T: Scalar>(
    cache: &EspCache<T>,
    w: &ModelWeights<T>,
    grad_out: &Tensor<T>,
    grads: &mut ParamGrads<T>,
) -> Result<Tensor<T>> {
    let spec = cache.spec;
    let p = spec.name;
    let gz = relu_backward(&cache.y, grad_out);
    let gcat = norm_bwd(w, &format!("{p}.norm"), &cache.norm, &gz, grads)?;
    let gfused = split_channels(&gcat, &[spec.branch_channels(); BRANCHES])?;
    let mut greduced = Tensor::zeros(cache.reduced.shape());
    let mut gbranch: Option<Tensor<T>> = None;
    for i in (0..BRANCHES).rev() {
        // Branch i feeds every fused output j >= i.
        let g = match gbranch.take() {
            Some(mut acc) => {
                acc.add_assign(&gfused[i]);
                acc
            }
            None => gfused[i].clone(),
        };
        let gr = conv_bwd(
            w,
            &format!("{p}.branch{i}"),
            &cache.reduced,
            &g,
            ConvGeometry::same(3, DILATIONS[i]),
            grads,
        )?;
        greduced.add_assign(&gr);
        gbranch = Some(g);
    }
    let mut gx = conv_bwd(w, &format!("{p}.reduce"), &cache.x, &greduced, spec.reduce_geometry(), grads)?;
    if spec.residual() {
        gx.add_assign(&gz);
    }
    Ok(gx)
}

#[derive(Debug, Clone)]
struct DecoderCache<T> {
    spec: DecoderSpec,
    cat: Tensor<T>,
    norm: NormCache<T>,
    y: Tensor<T>,
}

fn decoder_forward<T: Scalar>(
    prev: &Tensor<T>,
    skip: &Tensor<T>,
    w: &ModelWeights<T>,
    spec: DecoderSpec,
    mode: Mode,
    gates: &mut GateSource<'_>,
) -> Result<(Tensor<T>, DecoderCache<T>)> {
    let up = upsample2x(prev)?;
    let cat = concat_channels(&[&up, skip])?;
    let z = conv_fwd(w, &format!("{}.conv", spec.name), &cat, ConvGeometry::new(1, 1, 0))?;
    let (n, norm) = norm_fwd(w, &format!("{}.norm", spec.name), &z, mode)?;
    let y = gates.activate(&n)?;
    debug_check_finite(&y, spec.name);
    Ok((y.clone(), DecoderCache { spec, cat, norm, y }))
}

/// Returns `(grad_prev, grad_skip)`.
fn decoder_backward<T: Scalar>(
    cache: &DecoderCache<T>,
    w: &ModelWeights<T>,
    grad_out: &Tensor<T>,
    grads: &mut ParamGrads<T>,
) -> Result<(Tensor<T>, Tensor<T>)> {
    let s = cache.spec;
    let gn = relu_backward(&cache.y, grad_out);
    let gz = norm_bwd(w, &format!("{}.norm", s.name), &cache.norm, &gn, grads)?;
    let gcat = conv_bwd(w, &format!("{}.conv", s.name), &cache.cat, &gz, ConvGeometry::new(1, 1, 0), grads)?;
    let mut parts = split_channels(&gcat, &[s.up_channels, s.skip_channels])?.into_iter();
    let gup = parts.next().expect("two parts");
    let gskip = parts.next().expect("two parts");
    Ok((upsample2x_backward(&gup)?, gskip))
}

/// Everything the backward pass needs, plus the batch statistics of every norm layer.
#[derive(Debug, Clone)]
pub struct ForwardCache<T> {
    mode: Mode,
    input: Tensor<T>,
    stem_norm: NormCache<T>,
    stem_y: Tensor<T>,
    encoder: Vec<EspCache<T>>,
    decoder: Vec<DecoderCache<T>>,
}

impl<T: Scalar> EspCache<T> {
    pub fn relu_gates(&self) -> ReluGates {
        ReluGates(vec![gate_of(&self.y)])
    }
}

impl<T: Scalar> ForwardCache<T> {
    pub fn relu_gates(&self) -> ReluGates {
        let layers = std::iter::once(&self.stem_y)
            .chain(self.encoder.iter().map(|e| &e.y))
            .chain(self.decoder.iter().map(|d| &d.y));
        ReluGates(layers.map(gate_of).collect())
    }

    /// `(norm layer name, batch mean, unbiased batch variance)` for every norm layer.
    pub fn norm_statistics(&self) -> Vec<(String, &[T], &[T])> {
        let mut out = vec![("stem.norm".to_string(), &self.stem_norm.batch_mean[..], &self.stem_norm.batch_var[..])];
        for e in &self.encoder {
            out.push((format!("{}.norm", e.spec.name), &e.norm.batch_mean, &e.norm.batch_var));
        }
        for d in &self.decoder {
            out.push((format!("{}.norm", d.spec.name), &d.norm.batch_mean, &d.norm.batch_var));
        }
        out
    }
}

/// Raw logits `[n, 1, h, w]` for a `[n, 3, h, w]` input with `h` and `w` multiples of 8.
pub fn espnet_forward<T: Scalar>(x: &Tensor<T>, w: &ModelWeights<T>, mode: Mode) -> Result<(Tensor<T>, ForwardCache<T>)> {
    forward_impl(x, w, mode, &mut GateSource::natural())
}

/// [`espnet_forward`] with the activation pattern fixed to `gates`; returns logits only.
pub fn espnet_forward_gated<T: Scalar>(x: &Tensor<T>, w: &ModelWeights<T>, mode: Mode, gates: &ReluGates) -> Result<Tensor<T>> {
    Ok(forward_impl(x, w, mode, &mut GateSource::frozen(gates))?.0)
}

fn forward_impl<T: Scalar>(
    x: &Tensor<T>,
    w: &ModelWeights<T>,
    mode: Mode,
    gates: &mut GateSource<'_>,
) -> Result<(Tensor<T>, ForwardCache<T>)> {
    let (n, c, h, wd) = x.dims4()?;
    if c != INPUT_CHANNELS || n == 0 {
        return Err(invalid!("network input must be [n>0, 3, h, w], got {:?}", x.shape()));
    }
    if h == 0 || wd == 0 || h % STRIDE != 0 || wd % STRIDE != 0 {
        return Err(invalid!("input extents {wd}x{h} must be positive multiples of {STRIDE}"));
    }
    let stem_z = conv_fwd(w, "stem.conv", x, ConvGeometry::new(2, 1, 1))?;
    let (stem_n, stem_norm) = norm_fwd(w, "stem.norm", &stem_z, mode)?;
    let stem_y = gates.activate(&stem_n)?;

    let mut encoder = Vec::with_capacity(ENCODER.len());
    let mut cur = stem_y.clone();
    for spec in ENCODER {
        let (y, cache) = esp_forward_impl(&cur, w, spec, mode, gates)?;
        encoder.push(cache);
        cur = y;
    }

    let skips = [&encoder[SKIP_S4].y, &encoder[SKIP_S2].y, x];
    let mut decoder = Vec::with_capacity(DECODER.len());
    for (spec, skip) in DECODER.into_iter().zip(skips) {
        let (y, cache) = decoder_forward(&cur, skip, w, spec, mode, gates)?;
        decoder.push(cache);
        cur = y;
    }
    let logits = conv_fwd(w, "head", &cur, ConvGeometry::new(1, 1, 0))?;
    debug_check_finite(&logits, "head");
    Ok((
        logits,
        ForwardCache {
            mode,
            input: x.clone(),
            stem_norm,
            stem_y,
            encoder,
            decoder,
        },
    ))
}

/// Parameter gradients and the input gradient given `d loss / d logits`.
pub fn espnet_backward<T: Scalar>(
    cache: &ForwardCache<T>,
    w: &ModelWeights<T>,
    grad_logits: &Tensor<T>,
) -> Result<(ParamGrads<T>, Tensor<T>)> {
    let mut grads = ParamGrads::new();
    let head_in = &cache.decoder.last().expect("three decoder stages").y;
    let mut g = conv_bwd(w, "head", head_in, grad_logits, ConvGeometry::new(1, 1, 0), &mut grads)?;

    let mut skip_grads: Vec<Tensor<T>> = Vec::with_capacity(DECODER.len());
    for dc in cache.decoder.iter().rev() {
        let (gprev, gskip) = decoder_backward(dc, w, &g, &mut grads)?;
        skip_grads.push(gskip);
        g = gprev;
    }
    // skip_grads is now [input, s2, s4].
    let [mut g_input, g_s2, g_s4]: [Tensor<T>; 3] = skip_grads.try_into().expect("three decoder stages");

    for (i, ec) in cache.encoder.iter().enumerate().rev() {
        if i == SKIP_S4 {
            g.add_assign(&g_s4);
        }
        if i == SKIP_S2 {
            g.add_assign(&g_s2);
        }
        g = esp_module_backward(ec, w, &g, &mut grads)?;
    }

    let gn = relu_backward(&cache.stem_y, &g);
    let gz = norm_bwd(w, "stem.norm", &cache.stem_norm, &gn, &mut grads)?;
    let gx = conv_bwd(w, "stem.conv", &cache.input, &gz, ConvGeometry::new(2, 1, 1), &mut grads)?;
    g_input.add_assign(&gx);
    Ok((grads, g_input))
}

/// Folds the batch statistics of a training forward pass into the running statistics.
pub fn update_running_stats(w: &mut ModelWeights, cache: &ForwardCache<f32>) -> Result<()> {
    if cache.mode != Mode::Train {
        return Ok(());
    }
    let m = NORM_MOMENTUM as f32;
    for (name, mean, var) in cache.norm_statistics() {
        for (suffix, batch) in [("running_mean", mean), ("running_var", var)] {
            let key = format!("{name}.{suffix}");
            let run = w.get_mut(&key).ok_or_else(|| invalid!("weights are missing tensor {key:?}"))?;
            for (r, &b) in run.data_mut().iter_mut().zip(batch) {
                *r = (1.0 - m) * *r + m * b;
            }
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::espnet::weights::is_buffer;

    #[test]
    fn init_matches_architecture() {
        let w = init_weights(1);
        validate_weights(&w).unwrap();
        assert_eq!(init_weights(1), w);
        assert_ne!(init_weights(2), w);
    }

    #[test]
    fn output_shape() {
        let w = init_weights(0);
        let x = Tensor::<f32>::filled(&[2, 3, 64, 48], 0.5);
        let (y, _) = espnet_forward(&x, &w, Mode::Eval).unwrap();
        assert_eq!(y.shape(), &[2, 1, 64, 48]);
        let bad = Tensor::<f32>::zeros(&[1, 3, 60, 64]);
        assert!(espnet_forward(&bad, &w, Mode::Eval).is_err());
    }

    #[test]
    fn zero_weights_give_bias_map() {
        let mut w = init_weights(0);
        for (name, t) in w.iter_mut() {
            if !is_buffer(name) {
                t.data_mut().fill(0.0);
            }
        }
        w.get_mut("head.bias").unwrap().data_mut()[0] = 0.3;
        let x = Tensor::<f32>::filled(&[1, 3, 16, 16], 0.8);
        for mode in [Mode::Eval, Mode::Train] {
            let (y, _) = espnet_forward(&x, &w, mode).unwrap();
            assert!(y.data().iter().all(|&v| v == 0.3));
        }
    }

    #[test]
    fn esp_zero_branches_pass_positive_input() {
        let mut w = init_weights(0);
        for (name, t) in w.iter_mut() {
            if name.starts_with("enc1.") && !is_buffer(name) && !name.ends_with(".gamma") {
                t.data_mut().fill(0.0);
            }
        }
        let x = Tensor::<f32>::from_vec(&[1, 16, 5, 7], (0..560).map(|i| 0.1 + i as f32 * 0.01).collect()).unwrap();
        let (y, _) = esp_module_forward(&x, &w, ENCODER[0], Mode::Eval).unwrap();
        assert_eq!(y, x);
    }

    #[test]
    fn indivisible_block() {
        let w = init_weights(0);
        let spec = EspSpec::new("enc1", 16, 18, 1);
        let x = Tensor::<f32>::zeros(&[1, 16, 4, 4]);
        assert!(esp_module_forward(&x, &w, spec, Mode::Eval).is_err());
    }

    #[test]
    fn backward_covers_all_trainables() {
        let w = init_weights(3);
        let x = Tensor::<f32>::filled(&[2, 3, 16, 16], 0.25);
        let (y, cache) = espnet_forward(&x, &w, Mode::Train).unwrap();
        let (grads, gx) = espnet_backward(&cache, &w, &Tensor::filled(y.shape(), 1e-3)).unwrap();
        assert_eq!(gx.shape(), x.shape());
        let trainable: Vec<&str> = w.names().filter(|n| !is_buffer(n)).collect();
        assert_eq!(grads.len(), trainable.len());
        for n in trainable {
            assert_eq!(grads[n].shape(), w.get(n).unwrap().shape(), "{n}");
        }
    }
}
