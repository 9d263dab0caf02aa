//! Test oracles shared by the integration tests and the acceptance suite.
//!
//! Nothing here calls the library's forward or backward code: the naive
//! forward pass is written per element from the raw weight arrays, and the
//! finite-difference checker builds on it.

#![allow(dead_code)]

use aentd3::nn::{Activation, LayerSpec, MlpNetwork};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Per-layer pre-activations and post-activations of one input.
#[derive(Debug, Clone)]
pub struct Trace {
    /// `pre[k]` is layer `k`'s pre-activation vector.
    pub pre: Vec<Vec<f64>>,
    /// `post[0]` is the input; `post[k + 1]` is layer `k`'s output (before
    /// any head scaling).
    pub post: Vec<Vec<f64>>,
    pub output: Vec<f64>,
}

fn act(a: Activation, z: f64) -> f64 {
    match a {
        Activation::Relu => {
            if z > 0.0 {
                z
            } else {
                0.0
            }
        }
        Activation::Tanh => z.tanh(),
        Activation::Identity => z,
    }
}

fn head_scale(net: &MlpNetwork) -> f64 {
    match net.layers().last().map(|l| l.activation) {
        Some(Activation::Tanh) => net.output_scale(),
        _ => 1.0,
    }
}

/// Plain nested-loop forward pass.
pub fn naive_forward(net: &MlpNetwork, input: &[f64]) -> Trace {
    let mut pre = Vec::new();
    let mut post = vec![input.to_vec()];
    for (k, layer) in net.layers().iter().enumerate() {
        let w = net.weights(k);
        let b = net.biases(k);
        let x = &post[k];
        let mut z = vec![0.0; layer.output_dim];
        let mut y = vec![0.0; layer.output_dim];
        for j in 0..layer.output_dim {
            let mut s = b[j];
            for i in 0..layer.input_dim {
                s += w[j * layer.input_dim + i] * x[i];
            }
            z[j] = s;
            y[j] = act(layer.activation, s);
        }
        pre.push(z);
        post.push(y);
    }
    let scale = head_scale(net);
    let output = post.last().unwrap().iter().map(|v| v * scale).collect();
    Trace { pre, post, output }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Sign pattern of every ReLU pre-activation.
fn relu_pattern(net: &MlpNetwork, trace: &Trace) -> Vec<bool> {
    net.layers()
        .iter()
        .zip(&trace.pre)
        .filter(|(l, _)| l.activation == Activation::Relu)
        .flat_map(|(_, z)| z.iter().map(|&v| v > 0.0))
        .collect()
}

/// Objective value and ReLU pattern after replacing unit `j` of layer `k`
/// with pre-activation `z_new`. Layer `k + 1` is updated incrementally from
/// the cached trace; later layers are recomputed in full.
fn eval_unit_change(
    net: &MlpNetwork,
    base: &Trace,
    k: usize,
    j: usize,
    z_new: f64,
    upstream: &[f64],
) -> (f64, Vec<bool>) {
    let layers = net.layers();
    let mut pre = base.pre.clone();
    let mut post = base.post.clone();
    pre[k][j] = z_new;
    post[k + 1][j] = act(layers[k].activation, z_new);
    let delta = post[k + 1][j] - base.post[k + 1][j];
    if k + 1 < layers.len() {
        let l = layers[k + 1];
        let w = net.weights(k + 1);
        for u in 0..l.output_dim {
            let z = base.pre[k + 1][u] + w[u * l.input_dim + j] * delta;
            pre[k + 1][u] = z;
            post[k + 2][u] = act(l.activation, z);
        }
        for m in (k + 2)..layers.len() {
            let l = layers[m];
            let w = net.weights(m);
            let b = net.biases(m);
            for u in 0..l.output_dim {
                let z = b[u] + dot(&w[u * l.input_dim..(u + 1) * l.input_dim], &post[m]);
                pre[m][u] = z;
                post[m + 1][u] = act(l.activation, z);
            }
        }
    }
    let scale = head_scale(net);
    let value = post.last().unwrap().iter().zip(upstream).map(|(y, g)| y * scale * g).sum();
    let trace = Trace {
        pre,
        post,
        output: Vec::new(),
    };
    (value, relu_pattern(net, &trace))
}

/// Result of comparing analytic gradients with finite differences.
#[derive(Debug, Clone, Default)]
pub struct FdReport {
    pub checked: usize,
    /// Coordinates whose `±h` perturbations both crossed a ReLU kink.
    pub skipped: usize,
    pub max_rel_err: f64,
    pub worst: String,
}

impl FdReport {
    fn record(&mut self, label: impl FnOnce() -> String, analytic: f64, numeric: f64, floor: f64) {
        self.checked += 1;
        let rel = (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(floor);
        if rel > self.max_rel_err {
            self.max_rel_err = rel;
            self.worst = format!("{} analytic {analytic:e} numeric {numeric:e}", label());
        }
    }

    pub fn merge(&mut self, other: &FdReport) {
        self.checked += other.checked;
        self.skipped += other.skipped;
        if other.max_rel_err > self.max_rel_err {
            self.max_rel_err = other.max_rel_err;
            self.worst = other.worst.clone();
        }
    }
}

/// Central difference, or a one-sided difference on whichever side keeps the
/// base ReLU pattern. `None` when both sides cross a kink.
fn difference(
    f0: f64,
    plus: (f64, Vec<bool>),
    minus: (f64, Vec<bool>),
    base: &[bool],
    h: f64,
) -> Option<f64> {
    match (plus.1 == base, minus.1 == base) {
        (true, true) => Some((plus.0 - minus.0) / (2.0 * h)),
        (true, false) => Some((plus.0 - f0) / h),
        (false, true) => Some((f0 - minus.0) / h),
        (false, false) => None,
    }
}

/// Checks every parameter gradient and input gradient of the objective
/// `upstream . forward(input)` against finite differences with step `h`.
/// Relative error uses `max(|analytic|, |numeric|, floor)` as denominator.
pub fn check_gradients(
    net: &MlpNetwork,
    input: &[f64],
    upstream: &[f64],
    analytic_params: &[f64],
    analytic_input: &[f64],
    h: f64,
    floor: f64,
) -> FdReport {
    let base = naive_forward(net, input);
    let base_pattern = relu_pattern(net, &base);
    let f0 = dot(&base.output, upstream);
    let mut report = FdReport::default();

    for (k, layer) in net.layers().iter().enumerate() {
        let w_range = net.layer_weight_range(k);
        let b_range = net.layer_bias_range(k);
        let w = net.weights(k);
        let x = &base.post[k];
        for j in 0..layer.output_dim {
            for i in 0..=layer.input_dim {
                // i == input_dim stands for the bias of unit j.
                let (coef, param, idx) = if i < layer.input_dim {
                    (x[i], w[j * layer.input_dim + i], w_range.start + j * layer.input_dim + i)
                } else {
                    (1.0, net.biases(k)[j], b_range.start + j)
                };
                // The perturbed parameter changes only unit j's pre-activation:
                // z_j(p) = z_j - coef * param + coef * p.
                let z_at = |p: f64| base.pre[k][j] + coef * (p - param);
                let plus = eval_unit_change(net, &base, k, j, z_at(param + h), upstream);
                let minus = eval_unit_change(net, &base, k, j, z_at(param - h), upstream);
                match difference(f0, plus, minus, &base_pattern, h) {
                    Some(num) => report.record(
                        || format!("layer {k} unit {j} param {i}"),
                        analytic_params[idx],
                        num,
                        floor,
                    ),
                    None => report.skipped += 1,
                }
            }
        }
    }

    for i in 0..input.len() {
        let side = |s: f64| {
            let mut x = input.to_vec();
            x[i] += s * h;
            let t = naive_forward(net, &x);
            (dot(&t.output, upstream), relu_pattern(net, &t))
        };
        let plus = side(1.0);
        let minus = side(-1.0);
        match difference(f0, plus, minus, &base_pattern, h) {
            Some(num) => report.record(|| format!("input {i}"), analytic_input[i], num, floor),
            None => report.skipped += 1,
        }
    }
    report
}

/// Central finite-difference gradient of an arbitrary scalar function of a
/// parameter vector (no kink handling; use on smooth objectives or accept
/// rare one-off discrepancies).
pub fn numeric_gradient(params: &[f64], h: f64, mut f: impl FnMut(&[f64]) -> f64) -> Vec<f64> {
    let mut p = params.to_vec();
    (0..p.len())
        .map(|i| {
            let orig = p[i];
            p[i] = orig + h;
            let fp = f(&p);
            p[i] = orig - h;
            let fm = f(&p);
            p[i] = orig;
            (fp - fm) / (2.0 * h)
        })
        .collect()
}

/// `max |a - b| / max(|a|, |b|, floor)` over paired entries.
pub fn max_rel_err(a: &[f64], b: &[f64], floor: f64) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y).abs() / x.abs().max(y.abs()).max(floor))
        .fold(0.0, f64::max)
}

/// Policy actions for the deploy checks: a bounded random walk over
/// `segments` segments in `dim` dimensions, with a spike of `spike` on
/// coordinate 0 every `period` segments that returns exactly on the next
/// segment. Returns the actions and the `(segment, substep)` pairs (both
/// 0-based, five substeps per segment) that a held-baseline filter with a
/// 0.01 threshold must reject.
pub fn spiked_action_vector(
    segments: usize,
    dim: usize,
    period: usize,
    spike: f64,
    seed: u64,
) -> (Vec<Vec<f64>>, Vec<(usize, usize)>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut actions = vec![vec![0.0; dim]];
    let mut rejected = Vec::new();
    let mut seg = 0;
    while seg < segments {
        let prev = actions.last().unwrap().clone();
        if seg % period == period - 1 && seg + 1 < segments {
            let mut up = prev.clone();
            up[0] += spike;
            actions.push(up);
            actions.push(prev);
            rejected.extend((0..5).map(|j| (seg, j)));
            rejected.extend((0..4).map(|j| (seg + 1, j)));
            seg += 2;
        } else {
            // Substeps of at most 0.04 / 5 stay below the threshold.
            let next = prev
                .iter()
                .map(|v| (v + rng.random_range(-0.04..0.04)).clamp(-0.5, 0.5))
                .collect();
            actions.push(next);
            seg += 1;
        }
    }
    (actions, rejected)
}

/// Independent held-baseline filter: a command passes when its max-norm
/// distance to the last passed command (initially the first action) is at
/// most `threshold`.
pub fn reference_filter(commands: &[Vec<f64>], first: &[f64], threshold: f64) -> Vec<bool> {
    let mut held = first.to_vec();
    commands
        .iter()
        .map(|c| {
            let d = c.iter().zip(&held).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
            let ok = d <= threshold;
            if ok {
                held = c.clone();
            }
            ok
        })
        .collect()
}

/// Independent recomputation of the safety rule for one step.
pub fn separation_violated(positions: [[f64; 2]; 2], initial_separation: f64, delta: f64) -> bool {
    ((positions[1][0] - positions[0][0]) - initial_separation).abs() > delta
}

pub fn random_vec(rng: &mut ChaCha8Rng, n: usize, scale: f64) -> Vec<f64> {
    (0..n).map(|_| rng.random_range(-scale..scale)).collect()
}

/// Finite-difference report for a freshly seeded network of shape `spec`,
/// a random input in `[-1, 1)` and a random upstream gradient.
pub fn gradient_case(spec: &[LayerSpec], scale: f64, seed: u64) -> FdReport {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let net = MlpNetwork::new(spec, scale, &mut rng).unwrap();
    let x = random_vec(&mut rng, net.input_dim(), 1.0);
    let g = random_vec(&mut rng, net.output_dim(), 1.0);
    let (grads, gx) = net.backward(&x, &g).unwrap();
    check_gradients(&net, &x, &g, grads.as_slice(), &gx, 1e-5, 1e-7)
}
