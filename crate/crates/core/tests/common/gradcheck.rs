//! Central finite-difference checks of every differentiable layer, in f64.
//!
//! Each family returns the worst norm-wise relative error it saw for one seed.

use densekp::espnet::{
    bce_grad, bce_loss, concat_channels, conv2d_backward, conv2d_forward, esp_module_backward, esp_module_forward,
    esp_module_forward_gated, espnet_backward, espnet_forward, espnet_forward_gated, init_weights, is_buffer,
    norm_backward, norm_forward, relu, relu_backward, split_channels, upsample2x, upsample2x_backward, ConvGeometry,
    EspSpec, Mode, ModelWeights, ParamGrads, Tensor,
};
use densekp::imgcore::BinaryMask;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub const EPS: f64 = 1e-3;
pub const TOL: f64 = 1e-3;
/// Gradient norms below this are treated as zero (parameters the loss is invariant to).
const FLOOR: f64 = 1e-8;
pub const SEEDS: [u64; 5] = [1, 2, 3, 4, 5];

/// Largest error seen so far and where it came from.
#[derive(Debug, Clone, Default)]
pub struct Worst {
    pub err: f64,
    pub at: String,
}

impl Worst {
    fn record(&mut self, at: &str, err: f64) {
        if err >= self.err || err.is_nan() {
            self.err = err;
            self.at = at.to_string();
        }
    }

    pub fn ok(&self) -> bool {
        self.err < TOL
    }
}

impl std::fmt::Display for Worst {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}: relative error {:.3e}", self.at, self.err)
    }
}

pub fn random(shape: &[usize], rng: &mut ChaCha8Rng, scale: f64) -> Tensor<f64> {
    let n = shape.iter().product();
    Tensor::from_vec(shape, (0..n).map(|_| rng.gen_range(-scale..scale)).collect()).unwrap()
}

fn dot(a: &Tensor<f64>, b: &Tensor<f64>) -> f64 {
    a.data().iter().zip(b.data()).map(|(x, y)| x * y).sum()
}

/// Norm-wise relative error between analytic and numeric gradients over the probed entries.
fn rel_err(analytic: &[f64], numeric: &[f64]) -> f64 {
    let diff: f64 = analytic.iter().zip(numeric).map(|(a, n)| (a - n).powi(2)).sum::<f64>().sqrt();
    let na: f64 = analytic.iter().map(|a| a * a).sum::<f64>().sqrt();
    let nn: f64 = numeric.iter().map(|a| a * a).sum::<f64>().sqrt();
    diff / na.max(nn).max(FLOOR)
}

fn central(f: &dyn Fn(f64) -> f64) -> f64 {
    (f(EPS) - f(-EPS)) / (2.0 * EPS)
}

fn probe(n: usize, k: usize, rng: &mut ChaCha8Rng) -> Vec<usize> {
    if n <= k {
        (0..n).collect()
    } else {
        (0..k).map(|_| rng.gen_range(0..n)).collect()
    }
}

/// Analytic and numeric values at the probed entries of `x`.
pub fn numeric(x: &Tensor<f64>, analytic: &Tensor<f64>, idx: &[usize], f: &dyn Fn(&Tensor<f64>) -> f64) -> (Vec<f64>, Vec<f64>) {
    idx.iter()
        .map(|&i| {
            let shifted = |d: f64| {
                let mut p = x.clone();
                p.data_mut()[i] += d;
                f(&p)
            };
            (analytic.data()[i], central(&shifted))
        })
        .unzip()
}

fn check(
    worst: &mut Worst,
    name: &str,
    x: &Tensor<f64>,
    analytic: &Tensor<f64>,
    f: &dyn Fn(&Tensor<f64>) -> f64,
    rng: &mut ChaCha8Rng,
) {
    let idx = probe(x.len(), 60, rng);
    let (a, n) = numeric(x, analytic, &idx, f);
    worst.record(name, rel_err(&a, &n));
}

pub fn conv2d(seed: u64) -> Worst {
    let geoms = [
        (1, ConvGeometry::new(1, 1, 0)),
        (3, ConvGeometry::same(3, 1)),
        (3, ConvGeometry::same(3, 2)),
        (3, ConvGeometry::new(2, 1, 1)),
        (3, ConvGeometry::same(3, 4)),
    ];
    let mut worst = Worst::default();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for (k, g) in geoms {
        let x = random(&[2, 3, 7, 6], &mut rng, 1.0);
        let w = random(&[4, 3, k, k], &mut rng, 0.5);
        let b = random(&[4], &mut rng, 0.5);
        let y0 = conv2d_forward(&x, &w, &b, g).unwrap();
        let r = random(y0.shape(), &mut rng, 1.0);
        let (gx, gw, gb) = conv2d_backward(&x, &w, &r, g).unwrap();
        check(&mut worst, "conv x", &x, &gx, &|p| dot(&conv2d_forward(p, &w, &b, g).unwrap(), &r), &mut rng);
        check(&mut worst, "conv w", &w, &gw, &|p| dot(&conv2d_forward(&x, p, &b, g).unwrap(), &r), &mut rng);
        check(&mut worst, "conv b", &b, &gb, &|p| dot(&conv2d_forward(&x, &w, p, g).unwrap(), &r), &mut rng);
    }
    worst
}

pub fn norm(seed: u64) -> Worst {
    let mut worst = Worst::default();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let x = random(&[3, 4, 3, 5], &mut rng, 2.0);
    let gamma = random(&[4], &mut rng, 1.5);
    let beta = random(&[4], &mut rng, 1.0);
    let rm = random(&[4], &mut rng, 0.5);
    let rv = Tensor::from_vec(&[4], vec![0.5, 1.0, 2.0, 0.8]).unwrap();
    for training in [true, false] {
        let f = |x: &Tensor<f64>, g: &Tensor<f64>, b: &Tensor<f64>| norm_forward(x, g, b, &rm, &rv, training).unwrap().0;
        let y0 = f(&x, &gamma, &beta);
        let r = random(y0.shape(), &mut rng, 1.0);
        let (_, cache) = norm_forward(&x, &gamma, &beta, &rm, &rv, training).unwrap();
        let (gx, gg, gb) = norm_backward(&cache, &gamma, &r).unwrap();
        check(&mut worst, "norm x", &x, &gx, &|p| dot(&f(p, &gamma, &beta), &r), &mut rng);
        check(&mut worst, "norm gamma", &gamma, &gg, &|p| dot(&f(&x, p, &beta), &r), &mut rng);
        check(&mut worst, "norm beta", &beta, &gb, &|p| dot(&f(&x, &gamma, p), &r), &mut rng);
    }
    worst
}

/// ReLU, nearest upsampling and channel concatenation.
pub fn elementwise(seed: u64) -> Worst {
    let mut worst = Worst::default();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    // Keep inputs away from the ReLU kink so the central difference is exact.
    let x = random(&[2, 2, 4, 3], &mut rng, 1.0).map(|v| if v.abs() < 0.05 { v + 0.1 } else { v });
    let r = random(x.shape(), &mut rng, 1.0);
    let gx = relu_backward(&relu(&x), &r);
    check(&mut worst, "relu", &x, &gx, &|p| dot(&relu(p), &r), &mut rng);

    let r = random(&[2, 2, 8, 6], &mut rng, 1.0);
    let gx = upsample2x_backward(&r).unwrap();
    check(&mut worst, "upsample", &x, &gx, &|p| dot(&upsample2x(p).unwrap(), &r), &mut rng);

    let a = random(&[2, 1, 4, 3], &mut rng, 1.0);
    let r = random(&[2, 3, 4, 3], &mut rng, 1.0);
    let parts = split_channels(&r, &[2, 1]).unwrap();
    check(&mut worst, "concat", &x, &parts[0], &|p| dot(&concat_channels(&[p, &a]).unwrap(), &r), &mut rng);
    worst
}

fn block_weights(spec: EspSpec, rng: &mut ChaCha8Rng) -> ModelWeights<f64> {
    let c = spec.out_channels / 4;
    let k = if spec.stride == 1 { 1 } else { 3 };
    let mut w = ModelWeights::default();
    w.insert(format!("{}.reduce.weight", spec.name), random(&[c, spec.in_channels, k, k], rng, 0.6));
    w.insert(format!("{}.reduce.bias", spec.name), random(&[c], rng, 0.2));
    for i in 0..4 {
        w.insert(format!("{}.branch{i}.weight", spec.name), random(&[c, c, 3, 3], rng, 0.5));
        w.insert(format!("{}.branch{i}.bias", spec.name), random(&[c], rng, 0.2));
    }
    let n = spec.out_channels;
    w.insert(format!("{}.norm.gamma", spec.name), random(&[n], rng, 1.0).map(|v| v + 1.5));
    w.insert(format!("{}.norm.beta", spec.name), random(&[n], rng, 0.5));
    w.insert(format!("{}.norm.running_mean", spec.name), random(&[n], rng, 0.1));
    w.insert(format!("{}.norm.running_var", spec.name), Tensor::filled(&[n], 1.3));
    w
}

fn check_params(
    worst: &mut Worst,
    w: &ModelWeights<f64>,
    grads: &ParamGrads<f64>,
    loss: &dyn Fn(&ModelWeights<f64>) -> f64,
    rng: &mut ChaCha8Rng,
    per_tensor: usize,
) {
    let (mut all_a, mut all_n) = (Vec::new(), Vec::new());
    for (name, t) in w.iter() {
        if is_buffer(name) {
            continue;
        }
        let g = &grads[name.as_str()];
        let (a, n): (Vec<f64>, Vec<f64>) = probe(t.len(), per_tensor, rng)
            .into_iter()
            .map(|i| {
                let shifted = |d: f64| {
                    let mut p = w.clone();
                    p.get_mut(name).unwrap().data_mut()[i] += d;
                    loss(&p)
                };
                (g.data()[i], central(&shifted))
            })
            .unzip();
        worst.record(name, rel_err(&a, &n));
        all_a.extend(a);
        all_n.extend(n);
    }
    worst.record("all parameters", rel_err(&all_a, &all_n));
}

/// One ESP block, strided and not, in both modes; evaluated on the activation branch of the base point.
pub fn esp_module(seed: u64) -> Worst {
    let mut worst = Worst::default();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for spec in [EspSpec::new("blk", 8, 8, 1), EspSpec::new("blk", 8, 16, 2)] {
        for mode in [Mode::Train, Mode::Eval] {
            let w = block_weights(spec, &mut rng);
            let x = random(&[2, 8, 6, 6], &mut rng, 1.0);
            let (y, cache) = esp_module_forward(&x, &w, spec, mode).unwrap();
            let r = random(y.shape(), &mut rng, 1.0);
            let mut grads = ParamGrads::new();
            let gx = esp_module_backward(&cache, &w, &r, &mut grads).unwrap();
            let gates = cache.relu_gates();
            let fx = |p: &Tensor<f64>| dot(&esp_module_forward_gated(p, &w, spec, mode, &gates).unwrap(), &r);
            check(&mut worst, "esp input", &x, &gx, &fx, &mut rng);
            let fw = |p: &ModelWeights<f64>| dot(&esp_module_forward_gated(&x, p, spec, mode, &gates).unwrap(), &r);
            check_params(&mut worst, &w, &grads, &fw, &mut rng, 8);
        }
    }
    worst
}

/// Whole network under the BCE loss.
pub fn network(seed: u64) -> Worst {
    let mut worst = Worst::default();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut w: ModelWeights<f64> = init_weights(seed).cast();
    // Non-trivial affine parameters so every path carries signal.
    for (name, t) in w.iter_mut() {
        if name.ends_with(".beta") || name.ends_with(".bias") {
            for v in t.data_mut() {
                *v = rng.gen_range(-0.2..0.2);
            }
        }
    }
    let x = random(&[2, 3, 16, 16], &mut rng, 1.0).map(|v| 0.5 + 0.5 * v);
    let label = BinaryMask::from_fn(16, 32, |x, y| (x + y) % 3 == 0);
    let (z, cache) = espnet_forward(&x, &w, Mode::Train).unwrap();
    let gates = cache.relu_gates();
    let loss = |w: &ModelWeights<f64>, x: &Tensor<f64>| -> f64 {
        let z = espnet_forward_gated(x, w, Mode::Train, &gates).unwrap();
        bce_loss(&label, &z.reshape(&[32, 16]).unwrap()).unwrap()
    };
    let gz = bce_grad(&label, &z.clone().reshape(&[32, 16]).unwrap()).unwrap();
    let (grads, gx) = espnet_backward(&cache, &w, &gz.reshape(z.shape()).unwrap()).unwrap();
    check(&mut worst, "network input", &x, &gx, &|p| loss(&w, p), &mut rng);
    check_params(&mut worst, &w, &grads, &|p| loss(p, &x), &mut rng, 4);
    worst
}

/// Largest absolute gap between the BCE gradient and its central difference on a 4x4 map.
pub fn bce_grad_abs(seed: u64) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let y = BinaryMask::from_fn(4, 4, |_, _| rng.gen_bool(0.5));
    let z = random(&[4, 4], &mut rng, 4.0);
    let g = bce_grad(&y, &z).unwrap();
    let idx: Vec<usize> = (0..16).collect();
    let (a, n) = numeric(&z, &g, &idx, &|p| bce_loss(&y, p).unwrap());
    a.iter().zip(n).map(|(a, n)| (a - n).abs()).fold(0.0, f64::max)
}
