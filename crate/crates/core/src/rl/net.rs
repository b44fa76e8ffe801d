//! Small fully-connected dueling Q-network with hand-written forward and
//! backward passes, plus Adam and plain-momentum optimizers.
//!
//! Architecture: `input -> 64 -> 64` rectified trunk, then a scalar value
//! head and a per-action advantage head combined as
//! `Q(s,a) = V(s) + A(s,a) - mean_a' A(s,a')`.

use super::RlError;
use rand::Rng;
use rand_chacha::ChaCha8Rng;

/// Dense layer, row-major weights (`rows` outputs x `cols` inputs).
#[derive(Debug, Clone, PartialEq)]
pub struct Layer {
    pub rows: usize,
    pub cols: usize,
    pub w: Vec<f64>,
    pub b: Vec<f64>,
}

impl Layer {
    fn init(rows: usize, cols: usize, rng: &mut ChaCha8Rng) -> Self {
        // Uniform +-1/sqrt(fan_in).
        let bound = 1.0 / (cols as f64).sqrt();
        let w = (0..rows * cols).map(|_| rng.gen_range(-bound..bound)).collect();
        let b = vec![0.0; rows];
        Layer { rows, cols, w, b }
    }

    fn zeros_like(&self) -> Layer {
        Layer { rows: self.rows, cols: self.cols, w: vec![0.0; self.w.len()], b: vec![0.0; self.b.len()] }
    }

    fn forward(&self, x: &[f64], out: &mut Vec<f64>) {
        debug_assert_eq!(x.len(), self.cols);
        out.clear();
        for r in 0..self.rows {
            let row = &self.w[r * self.cols..(r + 1) * self.cols];
            let mut acc = self.b[r];
            for (wi, xi) in row.iter().zip(x) {
                acc += wi * xi;
            }
            out.push(acc);
        }
    }

    /// Accumulate dW += g * x^T, db += g, and return dx = W^T * g.
    fn backward(&self, x: &[f64], g: &[f64], grad: &mut Layer, dx: &mut [f64]) {
        for v in dx.iter_mut() {
            *v = 0.0;
        }
        for r in 0..self.rows {
            let gr = g[r];
            grad.b[r] += gr;
            let row = &self.w[r * self.cols..(r + 1) * self.cols];
            let grow = &mut grad.w[r * self.cols..(r + 1) * self.cols];
            for c in 0..self.cols {
                grow[c] += gr * x[c];
                dx[c] += row[c] * gr;
            }
        }
    }
}

/// Per-layer gradients in network order: trunk1, trunk2, value, advantage.
pub type Gradients = [Layer; 4];

#[derive(Debug, Clone, PartialEq)]
pub struct QNetwork {
    pub input_dim: usize,
    pub hidden: usize,
    pub actions: usize,
    pub trunk1: Layer,
    pub trunk2: Layer,
    pub value: Layer,
    pub advantage: Layer,
}

impl QNetwork {
    pub fn new(input_dim: usize, hidden: usize, actions: usize, seed: u64) -> Self {
        use rand_chacha::rand_core::SeedableRng;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        QNetwork {
            input_dim,
            hidden,
            actions,
            trunk1: Layer::init(hidden, input_dim, &mut rng),
            trunk2: Layer::init(hidden, hidden, &mut rng),
            value: Layer::init(1, hidden, &mut rng),
            advantage: Layer::init(actions, hidden, &mut rng),
        }
    }

    pub fn layers(&self) -> [&Layer; 4] {
        [&self.trunk1, &self.trunk2, &self.value, &self.advantage]
    }

    pub fn zero_all(&mut self) {
        for l in [&mut self.trunk1, &mut self.trunk2, &mut self.value, &mut self.advantage] {
            l.w.iter_mut().for_each(|v| *v = 0.0);
            l.b.iter_mut().for_each(|v| *v = 0.0);
        }
    }

    pub fn zero_gradients(&self) -> Gradients {
        [
            self.trunk1.zeros_like(),
            self.trunk2.zeros_like(),
            self.value.zeros_like(),
            self.advantage.zeros_like(),
        ]
    }

    /// Q-values for one state.
    pub fn forward(&self, x: &[f64]) -> Vec<f64> {
        assert_eq!(x.len(), self.input_dim, "state dimension mismatch");
        let mut z1 = Vec::new();
        self.trunk1.forward(x, &mut z1);
        let a1: Vec<f64> = z1.iter().map(|v| v.max(0.0)).collect();
        let mut z2 = Vec::new();
        self.trunk2.forward(&a1, &mut z2);
        let a2: Vec<f64> = z2.iter().map(|v| v.max(0.0)).collect();
        let mut v = Vec::new();
        self.value.forward(&a2, &mut v);
        let mut adv = Vec::new();
        self.advantage.forward(&a2, &mut adv);
        combine_dueling(v[0], &adv)
    }

    /// Checked variant returning [`RlError::DimensionMismatch`].
    pub fn q_forward(&self, x: &[f64]) -> Result<Vec<f64>, RlError> {
        if x.len() != self.input_dim {
            return Err(RlError::DimensionMismatch { got: x.len(), want: self.input_dim });
        }
        Ok(self.forward(x))
    }

    /// Mean-squared error on the taken actions and its gradients.
    pub fn loss_and_gradients(
        &self,
        states: &[&[f64]],
        actions: &[usize],
        targets: &[f64],
    ) -> Result<(f64, Gradients), RlError> {
        assert!(!states.is_empty());
        let mut grads = self.zero_gradients();
        let batch = states.len() as f64;
        let mut loss = 0.0;

        let mut z1 = Vec::new();
        let mut z2 = Vec::new();
        let mut v_out = Vec::new();
        let mut adv = Vec::new();

        for ((x, &a), &y) in states.iter().zip(actions).zip(targets) {
            if x.len() != self.input_dim {
                return Err(RlError::DimensionMismatch { got: x.len(), want: self.input_dim });
            }
            self.trunk1.forward(x, &mut z1);
            let a1: Vec<f64> = z1.iter().map(|v| v.max(0.0)).collect();
            self.trunk2.forward(&a1, &mut z2);
            let a2: Vec<f64> = z2.iter().map(|v| v.max(0.0)).collect();
            self.value.forward(&a2, &mut v_out);
            self.advantage.forward(&a2, &mut adv);
            let q = combine_dueling(v_out[0], &adv);

            let err = q[a] - y;
            loss += err * err / batch;

            // dL/dQ_k: nonzero only for the taken action.
            let mut gq = vec![0.0; self.actions];
            gq[a] = 2.0 * err / batch;

            // Dueling combination: dV = sum_k gQ_k; dA_j = gQ_j - mean(gQ).
            let gsum: f64 = gq.iter().sum();
            let gv = [gsum];
            let ga: Vec<f64> = gq.iter().map(|g| g - gsum / self.actions as f64).collect();

            let mut da2 = vec![0.0; self.hidden];
            let mut tmp = vec![0.0; self.hidden];
            self.value.backward(&a2, &gv, &mut grads[2], &mut da2);
            self.advantage.backward(&a2, &ga, &mut grads[3], &mut tmp);
            for (d, t) in da2.iter_mut().zip(&tmp) {
                *d += t;
            }

            let dz2: Vec<f64> =
                da2.iter().zip(&z2).map(|(d, z)| if *z > 0.0 { *d } else { 0.0 }).collect();
            let mut da1 = vec![0.0; self.hidden];
            self.trunk2.backward(&a1, &dz2, &mut grads[1], &mut da1);

            let dz1: Vec<f64> =
                da1.iter().zip(&z1).map(|(d, z)| if *z > 0.0 { *d } else { 0.0 }).collect();
            let mut dx = vec![0.0; self.input_dim];
            self.trunk1.backward(x, &dz1, &mut grads[0], &mut dx);
        }
        Ok((loss, grads))
    }

    fn params_mut(&mut self) -> [&mut Layer; 4] {
        [&mut self.trunk1, &mut self.trunk2, &mut self.value, &mut self.advantage]
    }
}

/// `Q = V + A - mean(A)`.
pub fn combine_dueling(v: f64, adv: &[f64]) -> Vec<f64> {
    let mean = adv.iter().sum::<f64>() / adv.len() as f64;
    adv.iter().map(|a| v + a - mean).collect()
}

/// Scale all gradients so their global L2 norm is at most `max_norm`.
pub fn clip_global_norm(grads: &mut Gradients, max_norm: f64) {
    let mut sq = 0.0;
    for g in grads.iter() {
        sq += g.w.iter().map(|v| v * v).sum::<f64>();
        sq += g.b.iter().map(|v| v * v).sum::<f64>();
    }
    let norm = sq.sqrt();
    if norm > max_norm && norm > 0.0 {
        let scale = max_norm / norm;
        for g in grads.iter_mut() {
            g.w.iter_mut().for_each(|v| *v *= scale);
            g.b.iter_mut().for_each(|v| *v *= scale);
        }
    }
}

/// Adaptive-moment estimation with standard defaults.
#[derive(Debug, Clone)]
pub struct Adam {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    step: u64,
    m: Vec<Vec<f64>>,
    v: Vec<Vec<f64>>,
}

/// Plain momentum, kept as an ablation of the default optimizer.
#[derive(Debug, Clone)]
pub struct Momentum {
    pub lr: f64,
    pub beta: f64,
    v: Vec<Vec<f64>>,
}

#[derive(Debug, Clone)]
pub enum Optimizer {
    Adam(Adam),
    Momentum(Momentum),
}

fn param_shapes(net: &QNetwork) -> Vec<usize> {
    net.layers().iter().flat_map(|l| [l.w.len(), l.b.len()]).collect()
}

impl Optimizer {
    pub fn adam(net: &QNetwork, lr: f64) -> Self {
        let shapes = param_shapes(net);
        Optimizer::Adam(Adam {
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            step: 0,
            m: shapes.iter().map(|&n| vec![0.0; n]).collect(),
            v: shapes.iter().map(|&n| vec![0.0; n]).collect(),
        })
    }

    pub fn momentum(net: &QNetwork, lr: f64, beta: f64) -> Self {
        let shapes = param_shapes(net);
        Optimizer::Momentum(Momentum {
            lr,
            beta,
            v: shapes.iter().map(|&n| vec![0.0; n]).collect(),
        })
    }

    pub fn apply(&mut self, net: &mut QNetwork, grads: &Gradients) {
        // Parameter tensors in fixed order: (w, b) per layer.
        let flat_grads: Vec<&[f64]> =
            grads.iter().flat_map(|g| [g.w.as_slice(), g.b.as_slice()]).collect();
        match self {
            Optimizer::Adam(a) => {
                a.step += 1;
                let bc1 = 1.0 - a.beta1.powi(a.step as i32);
                let bc2 = 1.0 - a.beta2.powi(a.step as i32);
                let mut idx = 0;
                for layer in net.params_mut() {
                    for params in [&mut layer.w, &mut layer.b] {
                        let g = flat_grads[idx];
                        let m = &mut a.m[idx];
                        let v = &mut a.v[idx];
                        for i in 0..params.len() {
                            m[i] = a.beta1 * m[i] + (1.0 - a.beta1) * g[i];
                            v[i] = a.beta2 * v[i] + (1.0 - a.beta2) * g[i] * g[i];
                            let mhat = m[i] / bc1;
                            let vhat = v[i] / bc2;
                            params[i] -= a.lr * mhat / (vhat.sqrt() + a.eps);
                        }
                        idx += 1;
                    }
                }
            }
            Optimizer::Momentum(mo) => {
                let mut idx = 0;
                for layer in net.params_mut() {
                    for params in [&mut layer.w, &mut layer.b] {
                        let g = flat_grads[idx];
                        let v = &mut mo.v[idx];
                        for i in 0..params.len() {
                            v[i] = mo.beta * v[i] + g[i];
                            params[i] -= mo.lr * v[i];
                        }
                        idx += 1;
                    }
                }
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn dueling_combination_hand_values() {
        assert_eq!(combine_dueling(1.0, &[1.0, 2.0, 3.0]), vec![0.0, 1.0, 2.0]);
        // Equal advantages collapse to V.
        assert_eq!(combine_dueling(0.7, &[0.3, 0.3]), vec![0.7, 0.7]);
    }

    #[test]
    fn zero_network_outputs_zero() {
        let mut net = QNetwork::new(6, 8, 3, 0);
        net.zero_all();
        let q = net.forward(&[0.1, 0.2, 0.3, 0.4, 0.5, 0.6]);
        assert_eq!(q, vec![0.0, 0.0, 0.0]);
    }

    #[test]
    fn dueling_argmax_invariance() {
        // Adding a constant to every advantage output leaves Q unchanged;
        // adding it to V shifts all Q equally. Both keep the argmax.
        let net = QNetwork::new(4, 8, 3, 3);
        let x = [0.2, 0.4, 0.6, 0.8];
        let base = net.forward(&x);

        let mut shifted_adv = net.clone();
        for b in shifted_adv.advantage.b.iter_mut() {
            *b += 5.0;
        }
        let q_adv = shifted_adv.forward(&x);
        for (a, b) in base.iter().zip(&q_adv) {
            assert!((a - b).abs() < 1e-12, "advantage shift must cancel");
        }

        let mut shifted_v = net.clone();
        shifted_v.value.b[0] += 5.0;
        let q_v = shifted_v.forward(&x);
        for (a, b) in base.iter().zip(&q_v) {
            assert!((b - a - 5.0).abs() < 1e-12, "value shift moves all Q");
        }
    }

    #[test]
    fn dimension_mismatch_detected() {
        let net = QNetwork::new(4, 8, 2, 0);
        assert!(matches!(
            net.q_forward(&[1.0, 2.0]),
            Err(RlError::DimensionMismatch { got: 2, want: 4 })
        ));
    }

    #[test]
    fn gradients_match_central_finite_differences() {
        // 4-2-2 network, eps = 1e-5, max relative error < 1e-4.
        let mut net = QNetwork::new(4, 2, 2, 11);
        let states: Vec<Vec<f64>> =
            vec![vec![0.1, -0.2, 0.3, 0.9], vec![0.5, 0.4, -0.6, 0.2], vec![0.9, 0.1, 0.2, -0.3]];
        let refs: Vec<&[f64]> = states.iter().map(|s| s.as_slice()).collect();
        let actions = vec![0, 1, 0];
        let targets = vec![0.7, -0.3, 0.1];
        let (_, grads) = net.loss_and_gradients(&refs, &actions, &targets).unwrap();

        let eps = 1e-5;
        let mut max_rel = 0.0f64;
        for li in 0..4 {
            let n_w = net.layers()[li].w.len();
            for i in 0..(n_w + net.layers()[li].b.len()) {
                let read = |net: &mut QNetwork, delta: f64| {
                    {
                        let l = net.params_mut()[li];
                        if i < n_w {
                            l.w[i] += delta;
                        } else {
                            l.b[i - n_w] += delta;
                        }
                    }
                    let (loss, _) = net.loss_and_gradients(&refs, &actions, &targets).unwrap();
                    {
                        let l = net.params_mut()[li];
                        if i < n_w {
                            l.w[i] -= delta;
                        } else {
                            l.b[i - n_w] -= delta;
                        }
                    }
                    loss
                };
                let plus = read(&mut net, eps);
                let minus = read(&mut net, -eps);
                let numeric = (plus - minus) / (2.0 * eps);
                let analytic =
                    if i < n_w { grads[li].w[i] } else { grads[li].b[i - n_w] };
                let denom = numeric.abs().max(analytic.abs()).max(1e-8);
                max_rel = max_rel.max((numeric - analytic).abs() / denom);
            }
        }
        assert!(max_rel < 1e-4, "max relative error {max_rel}");
    }

    #[test]
    fn perfect_predictions_leave_weights_unchanged() {
        let mut net = QNetwork::new(3, 4, 2, 5);
        let state = vec![0.3, 0.6, 0.9];
        let q = net.forward(&state);
        let tr = super::super::Transition {
            state: super::super::AgentState(state.clone()),
            action: 1,
            n_step_return: q[1],
            state_after_n: super::super::AgentState(state.clone()),
            done: true,
            n_actual: 1,
        };
        let before = net.clone();
        let mut opt = Optimizer::adam(&net, 1e-3);
        let loss = super::super::train_step(&mut net, &mut opt, &[tr], &[q[1]]).unwrap();
        assert_eq!(loss, 0.0);
        assert_eq!(net, before);
    }

    #[test]
    fn repeated_steps_on_one_sample_reduce_loss() {
        let mut net = QNetwork::new(4, 8, 2, 9);
        let mut opt = Optimizer::adam(&net, 1e-3);
        let tr = super::super::Transition {
            state: super::super::AgentState(vec![0.2, 0.4, 0.6, 0.8]),
            action: 0,
            n_step_return: 1.5,
            state_after_n: super::super::AgentState(vec![0.0; 4]),
            done: true,
            n_actual: 1,
        };
        let mut losses = Vec::new();
        for _ in 0..300 {
            losses.push(super::super::train_step(&mut net, &mut opt, &[tr.clone()], &[1.5]).unwrap());
        }
        // Monotone non-increasing after warmup.
        let warm = 20;
        for w in losses[warm..].windows(2) {
            assert!(w[1] <= w[0] + 1e-9, "loss rose: {} -> {}", w[0], w[1]);
        }
        assert!(losses.last().unwrap() < &1e-4);
    }

    #[test]
    fn momentum_optimizer_also_learns() {
        let mut net = QNetwork::new(4, 8, 2, 13);
        let mut opt = Optimizer::momentum(&net, 1e-3, 0.9);
        let tr = super::super::Transition {
            state: super::super::AgentState(vec![0.2, 0.4, 0.6, 0.8]),
            action: 0,
            n_step_return: 1.0,
            state_after_n: super::super::AgentState(vec![0.0; 4]),
            done: true,
            n_actual: 1,
        };
        let first = super::super::train_step(&mut net, &mut opt, &[tr.clone()], &[1.0]).unwrap();
        for _ in 0..500 {
            super::super::train_step(&mut net, &mut opt, &[tr.clone()], &[1.0]).unwrap();
        }
        let last = super::super::train_step(&mut net, &mut opt, &[tr], &[1.0]).unwrap();
        assert!(last < first);
    }

    #[test]
    fn clip_caps_global_norm() {
        let net = QNetwork::new(2, 2, 2, 1);
        let mut grads = net.zero_gradients();
        grads[0].w.iter_mut().for_each(|v| *v = 100.0);
        clip_global_norm(&mut grads, 10.0);
        let mut sq = 0.0;
        for g in grads.iter() {
            sq += g.w.iter().map(|v| v * v).sum::<f64>();
            sq += g.b.iter().map(|v| v * v).sum::<f64>();
        }
        assert!((sq.sqrt() - 10.0).abs() < 1e-9);
    }
}
