//! Minimal dense-network engine: MLPs with tanh hidden layers, reverse-mode
//! gradients for parameters and inputs, and Adam.
//!
//! Everything is f64 and batch-first (`batch x features`); matrix products go
//! through `ndarray`'s BLAS-free gemm, which is what keeps training usable.

use ndarray::{Array1, Array2, Axis};
use rand::Rng;
use serde::{Deserialize, Serialize};

/// Output nonlinearity of a network.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum OutputActivation {
    /// Bounded outputs in (-1, 1); used by actors.
    Tanh,
    /// Unbounded outputs; used by critics.
    Linear,
}

/// Fully connected network with tanh hidden activations.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Mlp {
    /// `weights[l]` has shape (out_l, in_l).
    pub weights: Vec<Array2<f64>>,
    pub biases: Vec<Array1<f64>>,
    pub output: OutputActivation,
}

/// Per-layer activation record of one forward pass.
pub struct ForwardCache {
    /// Input and every post-activation layer output, length = layers + 1.
    activations: Vec<Array2<f64>>,
}

/// Parameter gradients matching an [`Mlp`]'s shapes.
#[derive(Debug, Clone)]
pub struct Gradients {
    pub weights: Vec<Array2<f64>>,
    pub biases: Vec<Array1<f64>>,
}

impl Gradients {
    pub fn max_abs(&self) -> f64 {
        let w = self
            .weights
            .iter()
            .flat_map(|g| g.iter())
            .fold(0.0f64, |m, &v| m.max(v.abs()));
        self.biases
            .iter()
            .flat_map(|g| g.iter())
            .fold(w, |m, &v| m.max(v.abs()))
    }
}

impl Mlp {
    /// New network with uniform init on (-1/sqrt(fan_in), 1/sqrt(fan_in)).
    pub fn new<R: Rng>(sizes: &[usize], output: OutputActivation, rng: &mut R) -> Self {
        assert!(sizes.len() >= 2, "need at least input and output sizes");
        let mut weights = Vec::with_capacity(sizes.len() - 1);
        let mut biases = Vec::with_capacity(sizes.len() - 1);
        for l in 0..sizes.len() - 1 {
            let (fan_in, fan_out) = (sizes[l], sizes[l + 1]);
            let bound = 1.0 / (fan_in as f64).sqrt();
            weights.push(Array2::from_shape_fn((fan_out, fan_in), |_| {
                rng.gen_range(-bound..bound)
            }));
            biases.push(Array1::from_shape_fn(fan_out, |_| rng.gen_range(-bound..bound)));
        }
        Mlp {
            weights,
            biases,
            output,
        }
    }

    pub fn layer_count(&self) -> usize {
        self.weights.len()
    }

    pub fn input_dim(&self) -> usize {
        self.weights[0].ncols()
    }

    pub fn output_dim(&self) -> usize {
        self.weights.last().unwrap().nrows()
    }

    /// Forward pass keeping the activation record for [`Mlp::backward`].
    pub fn forward_cached(&self, x: &Array2<f64>) -> (Array2<f64>, ForwardCache) {
        let layers = self.layer_count();
        let mut activations = Vec::with_capacity(layers + 1);
        activations.push(x.clone());
        let mut a = x.clone();
        for l in 0..layers {
            let mut z = a.dot(&self.weights[l].t());
            z += &self.biases[l];
            a = if l + 1 < layers || self.output == OutputActivation::Tanh {
                z.mapv(f64::tanh)
            } else {
                z
            };
            activations.push(a.clone());
        }
        (a, ForwardCache { activations })
    }

    /// Forward pass without bookkeeping.
    pub fn forward(&self, x: &Array2<f64>) -> Array2<f64> {
        let layers = self.layer_count();
        let mut a = x.clone();
        for l in 0..layers {
            let mut z = a.dot(&self.weights[l].t());
            z += &self.biases[l];
            a = if l + 1 < layers || self.output == OutputActivation::Tanh {
                z.mapv(f64::tanh)
            } else {
                z
            };
        }
        a
    }

    /// Reverse-mode pass: given dL/d(output), return parameter gradients and
    /// dL/d(input).
    pub fn backward(
        &self,
        cache: &ForwardCache,
        grad_out: &Array2<f64>,
    ) -> (Gradients, Array2<f64>) {
        let layers = self.layer_count();
        let mut dw = vec![Array2::zeros((0, 0)); layers];
        let mut db = vec![Array1::zeros(0); layers];
        let mut delta = grad_out.clone();
        for l in (0..layers).rev() {
            // Through tanh where applied (hidden layers always, output layer
            // only for Tanh networks).
            if l + 1 < layers || self.output == OutputActivation::Tanh {
                let post = &cache.activations[l + 1];
                delta = &delta * &post.mapv(|a| 1.0 - a * a);
            }
            dw[l] = delta.t().dot(&cache.activations[l]);
            db[l] = delta.sum_axis(Axis(0));
            delta = delta.dot(&self.weights[l]);
        }
        (
            Gradients {
                weights: dw,
                biases: db,
            },
            delta,
        )
    }

    /// `self = eps * source + (1 - eps) * self` over all parameters.
    pub fn blend_from(&mut self, source: &Mlp, eps: f64) {
        for (t, s) in self.weights.iter_mut().zip(&source.weights) {
            t.zip_mut_with(s, |a, &b| *a = eps * b + (1.0 - eps) * *a);
        }
        for (t, s) in self.biases.iter_mut().zip(&source.biases) {
            t.zip_mut_with(s, |a, &b| *a = eps * b + (1.0 - eps) * *a);
        }
    }

    /// Max absolute difference against another network of equal shape.
    pub fn max_param_distance(&self, other: &Mlp) -> f64 {
        let mut m = 0.0f64;
        for (a, b) in self.weights.iter().zip(&other.weights) {
            for (x, y) in a.iter().zip(b.iter()) {
                m = m.max((x - y).abs());
            }
        }
        for (a, b) in self.biases.iter().zip(&other.biases) {
            for (x, y) in a.iter().zip(b.iter()) {
                m = m.max((x - y).abs());
            }
        }
        m
    }
}

/// Adam state for one [`Mlp`], using the standard (0.9, 0.999, 1e-8)
/// moment constants.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AdamState {
    m_w: Vec<Array2<f64>>,
    v_w: Vec<Array2<f64>>,
    m_b: Vec<Array1<f64>>,
    v_b: Vec<Array1<f64>>,
    step: u64,
}

pub const ADAM_BETA1: f64 = 0.9;
pub const ADAM_BETA2: f64 = 0.999;
pub const ADAM_EPS: f64 = 1e-8;

impl AdamState {
    /// Number of optimisation steps taken so far.
    pub fn steps(&self) -> u64 {
        self.step
    }

    pub fn for_network(net: &Mlp) -> Self {
        AdamState {
            m_w: net.weights.iter().map(|w| Array2::zeros(w.dim())).collect(),
            v_w: net.weights.iter().map(|w| Array2::zeros(w.dim())).collect(),
            m_b: net.biases.iter().map(|b| Array1::zeros(b.len())).collect(),
            v_b: net.biases.iter().map(|b| Array1::zeros(b.len())).collect(),
            step: 0,
        }
    }

    /// One Adam descent step on `net` along `grads`.
    pub fn apply(&mut self, net: &mut Mlp, grads: &Gradients, lr: f64) {
        self.step += 1;
        let t = self.step as i32;
        let bc1 = 1.0 - ADAM_BETA1.powi(t);
        let bc2 = 1.0 - ADAM_BETA2.powi(t);
        for l in 0..net.weights.len() {
            let g = &grads.weights[l];
            self.m_w[l].zip_mut_with(g, |m, &gv| *m = ADAM_BETA1 * *m + (1.0 - ADAM_BETA1) * gv);
            self.v_w[l]
                .zip_mut_with(g, |v, &gv| *v = ADAM_BETA2 * *v + (1.0 - ADAM_BETA2) * gv * gv);
            let (m, v) = (&self.m_w[l], &self.v_w[l]);
            ndarray::Zip::from(&mut net.weights[l])
                .and(m)
                .and(v)
                .for_each(|p, &m, &v| {
                    *p -= lr * (m / bc1) / ((v / bc2).sqrt() + ADAM_EPS);
                });
            let gb = &grads.biases[l];
            self.m_b[l].zip_mut_with(gb, |m, &gv| *m = ADAM_BETA1 * *m + (1.0 - ADAM_BETA1) * gv);
            self.v_b[l]
                .zip_mut_with(gb, |v, &gv| *v = ADAM_BETA2 * *v + (1.0 - ADAM_BETA2) * gv * gv);
            let (m, v) = (&self.m_b[l], &self.v_b[l]);
            ndarray::Zip::from(&mut net.biases[l])
                .and(m)
                .and(v)
                .for_each(|p, &m, &v| {
                    *p -= lr * (m / bc1) / ((v / bc2).sqrt() + ADAM_EPS);
                });
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::rng_for;

    fn mean_squared(net: &Mlp, x: &Array2<f64>, target: &Array2<f64>) -> f64 {
        let y = net.forward(x);
        (&y - target).mapv(|d| d * d).mean().unwrap()
    }

    #[test]
    fn actor_outputs_bounded() {
        let mut rng = rng_for(90, 0);
        let net = Mlp::new(&[7, 64, 64, 2], OutputActivation::Tanh, &mut rng);
        let x = Array2::from_shape_fn((16, 7), |_| rng.gen_range(-10.0..10.0));
        let y = net.forward(&x);
        assert!(y.iter().all(|&v| v > -1.0 && v < 1.0));
    }

    #[test]
    fn linear_output_of_zero_weights_is_zero() {
        let mut rng = rng_for(91, 0);
        let mut net = Mlp::new(&[3, 8, 1], OutputActivation::Linear, &mut rng);
        for w in net.weights.iter_mut() {
            w.fill(0.0);
        }
        for b in net.biases.iter_mut() {
            b.fill(0.0);
        }
        let x = Array2::from_shape_fn((4, 3), |_| rng.gen_range(-2.0..2.0));
        assert!(net.forward(&x).iter().all(|&v| v == 0.0));
    }

    /// Central finite differences over every parameter of both network kinds.
    #[test]
    fn parameter_gradients_match_finite_differences() {
        let mut rng = rng_for(92, 0);
        for trial in 0..4 {
            let output = if trial % 2 == 0 {
                OutputActivation::Linear
            } else {
                OutputActivation::Tanh
            };
            let mut net = Mlp::new(&[5, 16, 16, 2], output, &mut rng);
            let x = Array2::from_shape_fn((6, 5), |_| rng.gen_range(-1.0..1.0));
            let target = Array2::from_shape_fn((6, 2), |_| rng.gen_range(-0.9..0.9));

            let (y, cache) = net.forward_cached(&x);
            let n = (y.len()) as f64;
            let grad_out = (&y - &target) * (2.0 / n);
            let (grads, _) = net.backward(&cache, &grad_out);

            let h = 1e-6;
            let mut checked = 0usize;
            for l in 0..net.layer_count() {
                for idx in 0..net.weights[l].len() {
                    let orig = net.weights[l].as_slice().unwrap()[idx];
                    net.weights[l].as_slice_mut().unwrap()[idx] = orig + h;
                    let up = mean_squared(&net, &x, &target);
                    net.weights[l].as_slice_mut().unwrap()[idx] = orig - h;
                    let down = mean_squared(&net, &x, &target);
                    net.weights[l].as_slice_mut().unwrap()[idx] = orig;
                    let fd = (up - down) / (2.0 * h);
                    let an = grads.weights[l].as_slice().unwrap()[idx];
                    let denom = an.abs().max(fd.abs()).max(1e-8);
                    assert!(
                        (an - fd).abs() / denom < 1e-4,
                        "weight grad mismatch at layer {l} idx {idx}: {an} vs {fd}"
                    );
                    checked += 1;
                }
                for idx in 0..net.biases[l].len() {
                    let orig = net.biases[l][idx];
                    net.biases[l][idx] = orig + h;
                    let up = mean_squared(&net, &x, &target);
                    net.biases[l][idx] = orig - h;
                    let down = mean_squared(&net, &x, &target);
                    net.biases[l][idx] = orig;
                    let fd = (up - down) / (2.0 * h);
                    let an = grads.biases[l][idx];
                    let denom = an.abs().max(fd.abs()).max(1e-8);
                    assert!((an - fd).abs() / denom < 1e-4, "bias grad mismatch");
                    checked += 1;
                }
            }
            assert!(checked > 300, "should have checked every parameter");
        }
    }

    /// Input gradients drive the policy-gradient chain rule; verify them too.
    #[test]
    fn input_gradients_match_finite_differences() {
        let mut rng = rng_for(93, 0);
        let net = Mlp::new(&[4, 12, 1], OutputActivation::Linear, &mut rng);
        let x = Array2::from_shape_fn((3, 4), |_| rng.gen_range(-1.0..1.0));
        let (y, cache) = net.forward_cached(&x);
        let grad_out = Array2::from_elem(y.dim(), 1.0 / y.len() as f64);
        let (_, dx) = net.backward(&cache, &grad_out);
        let h = 1e-6;
        for r in 0..3 {
            for c in 0..4 {
                let mut xp = x.clone();
                xp[(r, c)] += h;
                let up = net.forward(&xp).mean().unwrap();
                xp[(r, c)] -= 2.0 * h;
                let down = net.forward(&xp).mean().unwrap();
                let fd = (up - down) / (2.0 * h);
                let an = dx[(r, c)];
                let denom = an.abs().max(fd.abs()).max(1e-8);
                assert!((an - fd).abs() / denom < 1e-4);
            }
        }
    }

    #[test]
    fn adam_descends_quadratic_loss() {
        let mut rng = rng_for(94, 0);
        let mut net = Mlp::new(&[3, 16, 1], OutputActivation::Linear, &mut rng);
        let mut adam = AdamState::for_network(&net);
        let x = Array2::from_shape_fn((32, 3), |_| rng.gen_range(-1.0..1.0));
        let target = x.map_axis(Axis(1), |row| row.sum()).insert_axis(Axis(1));
        let initial = mean_squared(&net, &x, &target);
        let mut last = initial;
        for _ in 0..50 {
            let (y, cache) = net.forward_cached(&x);
            let grad_out = (&y - &target) * (2.0 / y.len() as f64);
            let (grads, _) = net.backward(&cache, &grad_out);
            adam.apply(&mut net, &grads, 0.01);
            last = mean_squared(&net, &x, &target);
        }
        assert!(last < initial * 0.5, "loss {initial} -> {last}");
    }

    #[test]
    fn blend_is_exact_affine_recursion() {
        let mut rng = rng_for(95, 0);
        let source = Mlp::new(&[3, 8, 1], OutputActivation::Linear, &mut rng);
        let mut target = Mlp::new(&[3, 8, 1], OutputActivation::Linear, &mut rng);
        // eps = 1 copies, eps = 0 freezes.
        let mut t1 = target.clone();
        t1.blend_from(&source, 1.0);
        assert_eq!(t1.max_param_distance(&source), 0.0);
        let mut t0 = target.clone();
        t0.blend_from(&source, 0.0);
        assert_eq!(t0.max_param_distance(&target), 0.0);
        // Distance contracts by exactly (1 - eps) per call.
        let eps = 0.25;
        let d0 = target.max_param_distance(&source);
        target.blend_from(&source, eps);
        let d1 = target.max_param_distance(&source);
        assert!((d1 - (1.0 - eps) * d0).abs() < 1e-12 * d0);
    }
}
