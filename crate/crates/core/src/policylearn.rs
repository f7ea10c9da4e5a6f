//! Learned navigation policy: sector-clearance features, a small tanh MLP
//! with bounded output heads, behaviour cloning of the rule policy, and a
//! finite-difference gradient check.

use std::f64::consts::PI;
use std::fmt::Write as _;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::geometry::{RobotParams, Twist};
use crate::groundseg::TravCell;
use crate::localplanner::{DWParams, Policy, PolicyError, PolicyInput, PolicyOutput};
use crate::runtime::{run_navigation_observed, PipelineConfig, RuntimeError};
use crate::simenv::Scenario;

pub const N_SECTORS: usize = 16;
pub const FEATURE_DIM: usize = N_SECTORS + 5;
pub const GOAL_CLIP: f64 = 3.0;
pub const LAYER_SIZES: [usize; 4] = [FEATURE_DIM, 32, 32, 2];

pub type FeatureVector = [f64; FEATURE_DIM];

#[derive(Debug, Error, Clone, PartialEq)]
pub enum LearnError {
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("training loss became non-finite at epoch {epoch}, batch {batch}")]
    NonFiniteLoss { epoch: usize, batch: usize },
    #[error("empty dataset")]
    EmptyDataset,
    #[error("weight file line {line}: {msg}")]
    WeightFormat { line: usize, msg: String },
}

/// 16 forward sector clearances, goal distance, target bearing (sin, cos)
/// and the current twist, all in [-1, 1].
pub fn extract_features(input: &PolicyInput, robot: &RobotParams) -> FeatureVector {
    let tmap = input.tmap;
    let range = tmap.range();
    let width = PI / N_SECTORS as f64;
    let mut nearest = [f64::INFINITY; N_SECTORS];
    for (i, &c) in tmap.cells.iter().enumerate() {
        if c == TravCell::Traversable {
            continue;
        }
        let (x, y) = tmap.center(tmap.geometry.cell_of(i));
        let r = x.hypot(y);
        if r == 0.0 {
            continue;
        }
        let b = y.atan2(x);
        if !(-PI / 2.0..PI / 2.0).contains(&b) {
            continue;
        }
        let k = (((b + PI / 2.0) / width).floor() as usize).min(N_SECTORS - 1);
        nearest[k] = nearest[k].min(r);
    }
    let mut f = [0.0; FEATURE_DIM];
    for k in 0..N_SECTORS {
        f[k] = (nearest[k] / range).min(1.0);
    }
    f[N_SECTORS] = input.goal_distance.min(GOAL_CLIP) / GOAL_CLIP;
    f[N_SECTORS + 1] = input.target_bearing.sin();
    f[N_SECTORS + 2] = input.target_bearing.cos();
    f[N_SECTORS + 3] = (input.twist.v / robot.v_max).clamp(-1.0, 1.0);
    f[N_SECTORS + 4] = (input.twist.omega / robot.omega_max).clamp(-1.0, 1.0);
    f
}

#[derive(Debug, Clone, PartialEq)]
pub struct Layer {
    pub n_in: usize,
    pub n_out: usize,
    /// Row-major `n_out x n_in`.
    pub w: Vec<f64>,
    pub b: Vec<f64>,
}

impl Layer {
    fn zeros(n_in: usize, n_out: usize) -> Self {
        Self {
            n_in,
            n_out,
            w: vec![0.0; n_in * n_out],
            b: vec![0.0; n_out],
        }
    }

    fn affine(&self, x: &[f64], out: &mut Vec<f64>) {
        out.clear();
        for o in 0..self.n_out {
            let row = &self.w[o * self.n_in..(o + 1) * self.n_in];
            out.push(self.b[o] + row.iter().zip(x).map(|(w, x)| w * x).sum::<f64>());
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Mlp {
    pub layers: Vec<Layer>,
}

pub fn logistic(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

/// Activations of one forward pass; `acts[0]` is the input.
struct Trace {
    acts: Vec<Vec<f64>>,
    out: [f64; 2],
}

impl Mlp {
    pub fn zeros(sizes: &[usize]) -> Self {
        assert!(sizes.len() >= 2 && *sizes.last().unwrap() == 2);
        Self {
            layers: sizes.windows(2).map(|w| Layer::zeros(w[0], w[1])).collect(),
        }
    }

    /// Glorot-uniform weights, zero biases.
    pub fn init(sizes: &[usize], seed: u64) -> Self {
        let mut net = Self::zeros(sizes);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for l in &mut net.layers {
            let a = (6.0 / (l.n_in + l.n_out) as f64).sqrt();
            for w in &mut l.w {
                *w = rng.gen_range(-a..a);
            }
        }
        net
    }

    pub fn sizes(&self) -> Vec<usize> {
        let mut s = vec![self.layers[0].n_in];
        s.extend(self.layers.iter().map(|l| l.n_out));
        s
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].n_in
    }

    pub fn n_params(&self) -> usize {
        self.layers.iter().map(|l| l.w.len() + l.b.len()).sum()
    }

    /// Parameters in file order: per layer, weights then biases.
    pub fn params(&self) -> Vec<f64> {
        let mut p = Vec::with_capacity(self.n_params());
        for l in &self.layers {
            p.extend_from_slice(&l.w);
            p.extend_from_slice(&l.b);
        }
        p
    }

    pub fn set_params(&mut self, p: &[f64]) {
        assert_eq!(p.len(), self.n_params());
        let mut k = 0;
        for l in &mut self.layers {
            let (nw, nb) = (l.w.len(), l.b.len());
            l.w.copy_from_slice(&p[k..k + nw]);
            l.b.copy_from_slice(&p[k + nw..k + nw + nb]);
            k += nw + nb;
        }
    }

    pub fn is_finite(&self) -> bool {
        self.layers.iter().all(|l| l.w.iter().chain(&l.b).all(|v| v.is_finite()))
    }

    fn trace(&self, x: &[f64]) -> Trace {
        let mut acts = vec![x.to_vec()];
        let last = self.layers.len() - 1;
        let mut z = Vec::new();
        for (i, l) in self.layers.iter().enumerate() {
            l.affine(acts.last().unwrap(), &mut z);
            if i < last {
                acts.push(z.iter().map(|v| v.tanh()).collect());
            } else {
                acts.push(z.clone());
            }
        }
        let o = acts.last().unwrap();
        let out = [logistic(o[0]), o[1].tanh()];
        Trace { acts, out }
    }

    /// Normalised outputs: `(v / v_max, omega / omega_max)`.
    pub fn forward_normalized(&self, x: &[f64]) -> Result<[f64; 2], LearnError> {
        if x.len() != self.input_dim() {
            return Err(LearnError::DimensionMismatch {
                expected: self.input_dim(),
                got: x.len(),
            });
        }
        Ok(self.trace(x).out)
    }

    pub fn forward(&self, x: &[f64], robot: &RobotParams) -> Result<Twist, LearnError> {
        let [v, w] = self.forward_normalized(x)?;
        Ok(Twist::new(v * robot.v_max, w * robot.omega_max))
    }

    /// Add the gradient of `scale * 0.5 * sum_k (y_k - t_k)^2` to `grad`
    /// (laid out like `params`) and return the unscaled sample loss.
    fn backward(&self, x: &[f64], target: &[f64; 2], scale: f64, grad: &mut [f64]) -> f64 {
        let tr = self.trace(x);
        let (y, t) = (tr.out, target);
        let loss = 0.5 * ((y[0] - t[0]).powi(2) + (y[1] - t[1]).powi(2));
        let mut delta = vec![
            scale * (y[0] - t[0]) * y[0] * (1.0 - y[0]),
            scale * (y[1] - t[1]) * (1.0 - y[1] * y[1]),
        ];
        let mut offsets = Vec::with_capacity(self.layers.len());
        let mut k = 0;
        for l in &self.layers {
            offsets.push(k);
            k += l.w.len() + l.b.len();
        }
        for li in (0..self.layers.len()).rev() {
            let l = &self.layers[li];
            let input = &tr.acts[li];
            let off = offsets[li];
            for o in 0..l.n_out {
                let d = delta[o];
                let row = &mut grad[off + o * l.n_in..off + (o + 1) * l.n_in];
                for (g, xi) in row.iter_mut().zip(input) {
                    *g += d * xi;
                }
                grad[off + l.w.len() + o] += d;
            }
            if li > 0 {
                let mut prev = vec![0.0; l.n_in];
                for o in 0..l.n_out {
                    let row = &l.w[o * l.n_in..(o + 1) * l.n_in];
                    for (p, w) in prev.iter_mut().zip(row) {
                        *p += w * delta[o];
                    }
                }
                for (p, h) in prev.iter_mut().zip(input) {
                    *p *= 1.0 - h * h;
                }
                delta = prev;
            }
        }
        loss
    }

    /// Single-sample loss: mean squared error over the two normalised outputs.
    pub fn loss(&self, x: &[f64], target: &[f64; 2]) -> f64 {
        let y = self.trace(x).out;
        0.5 * ((y[0] - target[0]).powi(2) + (y[1] - target[1]).powi(2))
    }

    /// `loss` after adding `step` to parameter `index`, minus `loss` before.
    /// Only differences are propagated, so the result keeps full relative
    /// precision however small it is.
    pub fn loss_shift(&self, x: &[f64], target: &[f64; 2], index: usize, step: f64) -> f64 {
        let tr = self.trace(x);
        let mut li = 0;
        let mut k = index;
        while k >= self.layers[li].w.len() + self.layers[li].b.len() {
            k -= self.layers[li].w.len() + self.layers[li].b.len();
            li += 1;
        }
        let l = &self.layers[li];
        let mut dz = vec![0.0; l.n_out];
        if k < l.w.len() {
            dz[k / l.n_in] = step * tr.acts[li][k % l.n_in];
        } else {
            dz[k - l.w.len()] = step;
        }
        let last = self.layers.len() - 1;
        for j in li..last {
            let dh: Vec<f64> = dz.iter().zip(&tr.acts[j + 1]).map(|(&d, &h)| tanh_shift(h, d)).collect();
            let next = &self.layers[j + 1];
            dz = (0..next.n_out)
                .map(|o| next.w[o * next.n_in..(o + 1) * next.n_in].iter().zip(&dh).map(|(w, d)| w * d).sum())
                .collect();
        }
        let o = &tr.acts[last + 1];
        // logistic(a) = (1 + tanh(a / 2)) / 2
        let dy = [0.5 * tanh_shift((0.5 * o[0]).tanh(), 0.5 * dz[0]), tanh_shift(tr.out[1], dz[1])];
        (0..2).map(|i| dy[i] * (tr.out[i] - target[i] + 0.5 * dy[i])).sum()
    }

    /// Analytic gradient of `loss` in parameter order.
    pub fn gradient(&self, x: &[f64], target: &[f64; 2]) -> Vec<f64> {
        let mut g = vec![0.0; self.n_params()];
        self.backward(x, target, 1.0, &mut g);
        g
    }

    /// `MLPW 1 <n_layers> <sizes...>` then one parameter per line.
    pub fn to_weight_file(&self) -> String {
        let sizes = self.sizes();
        let mut s = format!("MLPW 1 {}", self.layers.len());
        for n in &sizes {
            let _ = write!(s, " {n}");
        }
        s.push('\n');
        for p in self.params() {
            let _ = writeln!(s, "{p:.8e}");
        }
        s
    }

    pub fn from_weight_file(text: &str) -> Result<Self, LearnError> {
        let err = |line: usize, msg: String| LearnError::WeightFormat { line, msg };
        let mut lines = text.split('\n');
        let header = lines.next().unwrap_or("");
        let toks: Vec<&str> = header.split_whitespace().collect();
        if toks.len() < 3 || toks[0] != "MLPW" {
            return Err(err(1, "expected header `MLPW 1 <n_layers> <sizes...>`".into()));
        }
        if toks[1] != "1" {
            return Err(err(1, format!("unsupported version {}", toks[1])));
        }
        let n_layers: usize = toks[2].parse().map_err(|_| err(1, format!("bad layer count {:?}", toks[2])))?;
        if n_layers == 0 || toks.len() != 3 + n_layers + 1 {
            return Err(err(1, format!("expected {} layer sizes", n_layers + 1)));
        }
        let sizes = toks[3..]
            .iter()
            .map(|t| t.parse::<usize>().ok().filter(|&n| n > 0))
            .collect::<Option<Vec<usize>>>()
            .ok_or_else(|| err(1, "layer sizes must be positive integers".into()))?;
        if sizes[0] != FEATURE_DIM || *sizes.last().unwrap() != 2 {
            return Err(err(1, format!("network must map {FEATURE_DIM} inputs to 2 outputs")));
        }
        let mut net = Self::zeros(&sizes);
        let n = net.n_params();
        let mut params = Vec::with_capacity(n);
        for (i, raw) in lines.enumerate() {
            let line_no = i + 2;
            let t = raw.trim();
            if t.is_empty() {
                continue;
            }
            if params.len() == n {
                return Err(err(line_no, format!("more than {n} parameters")));
            }
            let v: f64 = t.parse().map_err(|_| err(line_no, format!("not a number: {t:?}")))?;
            if !v.is_finite() {
                return Err(err(line_no, "non-finite parameter".into()));
            }
            params.push(v);
        }
        if params.len() != n {
            return Err(err(params.len() + 2, format!("expected {n} parameters, found {}", params.len())));
        }
        net.set_params(&params);
        Ok(net)
    }
}

/// Normalised regression target for a twist.
pub fn normalize_twist(t: &Twist, robot: &RobotParams) -> [f64; 2] {
    [t.v / robot.v_max, t.omega / robot.omega_max]
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub features: Vec<FeatureVector>,
    pub targets: Vec<Twist>,
    pub seed: u64,
}

impl Dataset {
    pub fn new(seed: u64) -> Self {
        Self {
            features: Vec::new(),
            targets: Vec::new(),
            seed,
        }
    }

    pub fn push(&mut self, x: FeatureVector, cmd: Twist) {
        self.features.push(x);
        self.targets.push(cmd);
    }

    pub fn len(&self) -> usize {
        self.features.len()
    }

    pub fn is_empty(&self) -> bool {
        self.features.is_empty()
    }

    pub fn extend(&mut self, other: Dataset) {
        self.features.extend(other.features);
        self.targets.extend(other.targets);
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrainParams {
    pub lr: f64,
    pub batch: usize,
    pub epochs: usize,
    pub momentum: f64,
    pub seed: u64,
}

impl Default for TrainParams {
    fn default() -> Self {
        Self {
            lr: 1e-3,
            batch: 64,
            epochs: 100,
            momentum: 0.9,
            seed: 0,
        }
    }
}

/// Mini-batch SGD with momentum from a seeded initialisation. Returns the
/// network and the per-epoch mean training loss.
pub fn train(data: &Dataset, robot: &RobotParams, hp: &TrainParams) -> Result<(Mlp, Vec<f64>), LearnError> {
    if data.is_empty() {
        return Err(LearnError::EmptyDataset);
    }
    let mut net = Mlp::init(&LAYER_SIZES, hp.seed);
    let mut rng = ChaCha8Rng::seed_from_u64(hp.seed ^ 0x5eed_5eed);
    let targets: Vec<[f64; 2]> = data.targets.iter().map(|t| normalize_twist(t, robot)).collect();
    let n_params = net.n_params();
    let mut params = net.params();
    let mut velocity = vec![0.0; n_params];
    let mut grad = vec![0.0; n_params];
    let mut order: Vec<usize> = (0..data.len()).collect();
    let batch = hp.batch.max(1);
    let mut curve = Vec::with_capacity(hp.epochs);
    for epoch in 0..hp.epochs {
        order.shuffle(&mut rng);
        let mut total = 0.0;
        for (bi, chunk) in order.chunks(batch).enumerate() {
            grad.iter_mut().for_each(|g| *g = 0.0);
            let scale = 1.0 / chunk.len() as f64;
            let mut loss = 0.0;
            for &i in chunk {
                loss += net.backward(&data.features[i], &targets[i], scale, &mut grad);
            }
            if !loss.is_finite() {
                return Err(LearnError::NonFiniteLoss { epoch, batch: bi });
            }
            total += loss;
            for ((p, v), g) in params.iter_mut().zip(velocity.iter_mut()).zip(&grad) {
                *v = hp.momentum * *v - hp.lr * g;
                *p += *v;
            }
            net.set_params(&params);
        }
        let mean = total / data.len() as f64;
        log::debug!("epoch {epoch}: loss {mean:.6}");
        curve.push(mean);
    }
    Ok((net, curve))
}

/// Mean loss over a dataset.
pub fn dataset_loss(net: &Mlp, data: &Dataset, robot: &RobotParams) -> f64 {
    let sum: f64 = data
        .features
        .iter()
        .zip(&data.targets)
        .map(|(x, t)| net.loss(x, &normalize_twist(t, robot)))
        .sum();
    sum / data.len().max(1) as f64
}

pub const GRAD_CHECK_STEP: f64 = 1e-5;
pub const GRAD_CHECK_FLOOR: f64 = 1e-8;

/// Largest relative difference between the analytic gradient and central
/// differences over every parameter.
///
/// `L(p + h) - L(p - h)` is formed from the two exact loss shifts (see
/// [`Mlp::loss_shift`]) instead of subtracting two full loss values, which
/// would lose everything below ~1e-16 of the loss to cancellation.
pub fn grad_check(net: &Mlp, x: &[f64], target: &[f64; 2]) -> f64 {
    let analytic = net.gradient(x, target);
    let mut worst: f64 = 0.0;
    for (i, &a) in analytic.iter().enumerate() {
        let up = net.loss_shift(x, target, i, GRAD_CHECK_STEP);
        let down = net.loss_shift(x, target, i, -GRAD_CHECK_STEP);
        let numeric = (up - down) / (2.0 * GRAD_CHECK_STEP);
        let denom = a.abs().max(numeric.abs()).max(GRAD_CHECK_FLOOR);
        worst = worst.max((a - numeric).abs() / denom);
    }
    worst
}

/// `tanh(a + b) - tanh(a)` given `ta = tanh(a)`, without cancellation.
fn tanh_shift(ta: f64, b: f64) -> f64 {
    let tb = b.tanh();
    tb * (1.0 - ta) * (1.0 + ta) / (1.0 + ta * tb)
}

/// Random network, input and target for gradient checking.
pub fn random_triple(seed: u64) -> (Mlp, FeatureVector, [f64; 2]) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let net = Mlp::init(&LAYER_SIZES, rng.gen());
    let mut x = [0.0; FEATURE_DIM];
    for v in &mut x {
        *v = rng.gen_range(-1.0..1.0);
    }
    let t = [rng.gen_range(0.0..1.0), rng.gen_range(-1.0..1.0)];
    (net, x, t)
}

/// Run the expert through every scenario and record (features, command)
/// for each tick it drives. Blocked and goal-reached ticks are skipped.
/// Scenario `i` is simulated with noise seed `seed + i`, so the result
/// depends only on the scenarios and `seed`.
pub fn collect_dataset(
    scenarios: &[Scenario],
    expert: &dyn Policy,
    cfg: &PipelineConfig,
    seed: u64,
) -> Result<Dataset, RuntimeError> {
    let mut data = Dataset::new(seed);
    for (i, sc) in scenarios.iter().enumerate() {
        let mut sc = sc.clone();
        sc.seed = seed.wrapping_add(i as u64);
        let robot = sc.robot;
        let report = run_navigation_observed(&sc, cfg, expert, &mut |input, decision| {
            if let Ok(d) = decision {
                if !d.output.done {
                    data.push(extract_features(input, &robot), d.output.cmd);
                }
            }
        })?;
        log::debug!("scenario {i}: {} ({} samples so far)", report.outcome, data.len());
    }
    Ok(data)
}

/// Network wrapped as a navigation policy.
#[derive(Debug, Clone)]
pub struct MlpPolicy {
    pub net: Mlp,
    pub goal_tolerance: f64,
}

impl MlpPolicy {
    pub fn new(net: Mlp) -> Self {
        Self {
            net,
            goal_tolerance: DWParams::default().goal_tolerance,
        }
    }
}

impl Policy for MlpPolicy {
    fn name(&self) -> &str {
        "learned"
    }

    fn decide(&self, input: &PolicyInput, robot: &RobotParams) -> Result<PolicyOutput, PolicyError> {
        if input.goal_distance < self.goal_tolerance {
            return Ok(PolicyOutput::DONE);
        }
        let x = extract_features(input, robot);
        let cmd = self.net.forward(&x, robot).map_err(|e| match e {
            LearnError::DimensionMismatch { expected, got } => PolicyError::DimensionMismatch { expected, got },
            _ => unreachable!("forward only fails on dimensions"),
        })?;
        Ok(PolicyOutput::drive(cmd))
    }
}
