//! The fusion head: a 2-layer MLP with ReLU hidden units and a sigmoid
//! output that maps the feature vector (entropy reduction, and optionally
//! global consistency) to a confidence in (0, 1).
//!
//! Training minimizes binary cross-entropy with mini-batch Adam updates and
//! is bitwise deterministic given a seed. Features are z-scored by a
//! normalizer fit on the training set and stored with the weights.

use std::path::Path;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use serde::{Deserialize, Serialize};

use crate::error::{CruxError, Result};

const PARAMS_VERSION: u32 = 1;

/// Per-feature z-score normalizer.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureNormalizer {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

impl FeatureNormalizer {
    /// Identity normalizer (mean 0, std 1) for `features` dimensions.
    pub fn identity(features: usize) -> Self {
        Self {
            mean: vec![0.0; features],
            std: vec![1.0; features],
        }
    }

    /// Fits population mean/std per feature. Constant features get std 1 so
    /// they normalize to zero instead of dividing by zero.
    pub fn fit(rows: &[Vec<f64>]) -> Result<Self> {
        let f = rows
            .first()
            .ok_or_else(|| CruxError::EmptyData("no feature rows to normalize".into()))?
            .len();
        let n = rows.len() as f64;
        let mut mean = vec![0.0; f];
        for row in rows {
            for (m, &x) in mean.iter_mut().zip(row) {
                *m += x;
            }
        }
        for m in &mut mean {
            *m /= n;
        }
        let mut var = vec![0.0; f];
        for row in rows {
            for (k, &x) in row.iter().enumerate() {
                let d = x - mean[k];
                var[k] += d * d;
            }
        }
        let std = var
            .into_iter()
            .map(|v| {
                let s = (v / n).sqrt();
                if s > 1e-12 {
                    s
                } else {
                    1.0
                }
            })
            .collect();
        Ok(Self { mean, std })
    }

    pub fn apply(&self, features: &[f64]) -> Vec<f64> {
        features
            .iter()
            .zip(self.mean.iter().zip(&self.std))
            .map(|(&x, (&m, &s))| (x - m) / s)
            .collect()
    }
}

/// Trained fusion parameters. `w1` is hidden x features row-major; `w2` is
/// the single output row.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FusionParams {
    pub version: u32,
    pub features: usize,
    pub hidden: usize,
    pub w1: Vec<f64>,
    pub b1: Vec<f64>,
    pub w2: Vec<f64>,
    pub b2: f64,
    pub normalizer: FeatureNormalizer,
    pub seed: u64,
    pub final_loss: f64,
}

impl FusionParams {
    pub fn validate(&self) -> Result<()> {
        if self.hidden == 0 {
            return Err(CruxError::ConfigInvalid("hidden width must be >= 1".into()));
        }
        if self.features == 0 || self.features > 2 {
            return Err(CruxError::ConfigInvalid(format!(
                "feature count must be 1 or 2, got {}",
                self.features
            )));
        }
        if self.w1.len() != self.hidden * self.features
            || self.b1.len() != self.hidden
            || self.w2.len() != self.hidden
            || self.normalizer.mean.len() != self.features
            || self.normalizer.std.len() != self.features
        {
            return Err(CruxError::DimensionMismatch {
                expected: self.hidden * self.features,
                got: self.w1.len(),
            });
        }
        if self.normalizer.std.iter().any(|&s| !s.is_finite() || s <= 0.0) {
            return Err(CruxError::ConfigInvalid("normalizer stddevs must be > 0".into()));
        }
        Ok(())
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let json = serde_json::to_string_pretty(self)
            .map_err(|e| CruxError::ConfigInvalid(format!("serialize fusion params: {e}")))?;
        std::fs::write(path, json)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|_| CruxError::MissingFusionParams(path.display().to_string()))?;
        params_from_json(&text)
            .map_err(|e| CruxError::ConfigInvalid(format!("{}: {e}", path.display())))
    }
}

/// Parses and validates fusion parameters from their JSON form.
pub fn params_from_json(json: &str) -> Result<FusionParams> {
    let params: FusionParams = serde_json::from_str(json)
        .map_err(|e| CruxError::ConfigInvalid(format!("fusion params: {e}")))?;
    params.validate()?;
    Ok(params)
}

/// One training example: features plus a binary correctness label.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainExample {
    pub features: Vec<f64>,
    pub label: bool,
}

/// Training hyperparameters.
#[derive(Debug, Clone)]
pub struct TrainConfig {
    pub hidden: usize,
    pub learning_rate: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            hidden: 16,
            learning_rate: 1e-3,
            epochs: 200,
            batch_size: 32,
            seed: 42,
        }
    }
}

fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Clamps a probability into the open interval (0, 1) so logs stay finite
/// and the output contract holds even at sigmoid saturation.
fn clamp_prob(p: f64) -> f64 {
    p.clamp(f64::MIN_POSITIVE, 1.0 - f64::EPSILON)
}

fn forward_parts(params: &FusionParams, features: &[f64]) -> (Vec<f64>, Vec<f64>, f64) {
    let x = params.normalizer.apply(features);
    let h = params.hidden;
    let f = params.features;
    let mut pre = vec![0.0; h];
    let mut act = vec![0.0; h];
    for i in 0..h {
        let mut z = params.b1[i];
        for (j, &xj) in x.iter().enumerate() {
            z += params.w1[i * f + j] * xj;
        }
        pre[i] = z;
        act[i] = z.max(0.0);
    }
    let logit = params.b2
        + params
            .w2
            .iter()
            .zip(&act)
            .map(|(w, a)| w * a)
            .sum::<f64>();
    (pre, act, logit)
}

/// Forward pass: sigmoid(W2 relu(W1 x + b1) + b2) on normalized features.
/// Output lies strictly in (0, 1).
pub fn mlp_forward(features: &[f64], params: &FusionParams) -> Result<f64> {
    params.validate()?;
    if features.len() != params.features {
        return Err(CruxError::DimensionMismatch {
            expected: params.features,
            got: features.len(),
        });
    }
    if features.iter().any(|x| !x.is_finite()) {
        return Err(CruxError::OutOfRange("features must be finite".into()));
    }
    let (_, _, logit) = forward_parts(params, features);
    Ok(clamp_prob(sigmoid(logit)))
}

/// Parameter gradients with the same layout as [`FusionParams`].
#[derive(Debug, Clone)]
pub struct Gradients {
    pub w1: Vec<f64>,
    pub b1: Vec<f64>,
    pub w2: Vec<f64>,
    pub b2: f64,
}

impl Gradients {
    fn zeros(params: &FusionParams) -> Self {
        Self {
            w1: vec![0.0; params.w1.len()],
            b1: vec![0.0; params.b1.len()],
            w2: vec![0.0; params.w2.len()],
            b2: 0.0,
        }
    }
}

fn example_loss(logit: f64, label: bool) -> f64 {
    // Numerically stable BCE from the logit:
    // max(o, 0) - o*y + ln(1 + exp(-|o|)).
    let y = if label { 1.0 } else { 0.0 };
    logit.max(0.0) - logit * y + (-logit.abs()).exp().ln_1p()
}

/// Mean binary cross-entropy of `params` on `data`. This is the quantity the
/// finite-difference gradient oracle perturbs.
pub fn bce_loss(params: &FusionParams, data: &[TrainExample]) -> Result<f64> {
    params.validate()?;
    if data.is_empty() {
        return Err(CruxError::EmptyData("no examples".into()));
    }
    let mut total = 0.0;
    for ex in data {
        if ex.features.len() != params.features {
            return Err(CruxError::DimensionMismatch {
                expected: params.features,
                got: ex.features.len(),
            });
        }
        let (_, _, logit) = forward_parts(params, &ex.features);
        total += example_loss(logit, ex.label);
    }
    Ok(total / data.len() as f64)
}

/// Mean loss and analytic gradients over `batch` (backpropagation).
pub fn loss_and_gradients(
    params: &FusionParams,
    batch: &[TrainExample],
) -> Result<(f64, Gradients)> {
    if batch.is_empty() {
        return Err(CruxError::EmptyData("empty batch".into()));
    }
    let mut grads = Gradients::zeros(params);
    let mut total_loss = 0.0;
    let scale = 1.0 / batch.len() as f64;
    let f = params.features;

    for ex in batch {
        if ex.features.len() != f {
            return Err(CruxError::DimensionMismatch {
                expected: f,
                got: ex.features.len(),
            });
        }
        let x = params.normalizer.apply(&ex.features);
        let (pre, act, logit) = forward_parts(params, &ex.features);
        total_loss += example_loss(logit, ex.label);

        let y = if ex.label { 1.0 } else { 0.0 };
        let dlogit = sigmoid(logit) - y;

        grads.b2 += scale * dlogit;
        for i in 0..params.hidden {
            grads.w2[i] += scale * dlogit * act[i];
            if pre[i] > 0.0 {
                let dz = dlogit * params.w2[i];
                grads.b1[i] += scale * dz;
                for (j, &xj) in x.iter().enumerate() {
                    grads.w1[i * f + j] += scale * dz * xj;
                }
            }
        }
    }
    Ok((total_loss * scale, grads))
}

struct AdamState {
    m: Vec<f64>,
    v: Vec<f64>,
    t: u64,
}

impl AdamState {
    fn new(len: usize) -> Self {
        Self {
            m: vec![0.0; len],
            v: vec![0.0; len],
            t: 0,
        }
    }

    fn step(&mut self, params: &mut [f64], grads: &[f64], lr: f64) {
        const BETA1: f64 = 0.9;
        const BETA2: f64 = 0.999;
        const EPS: f64 = 1e-8;
        self.t += 1;
        let t = self.t as f64;
        let correction1 = 1.0 - BETA1.powf(t);
        let correction2 = 1.0 - BETA2.powf(t);
        for ((p, &g), (m, v)) in params
            .iter_mut()
            .zip(grads)
            .zip(self.m.iter_mut().zip(&mut self.v))
        {
            *m = BETA1 * *m + (1.0 - BETA1) * g;
            *v = BETA2 * *v + (1.0 - BETA2) * g * g;
            let m_hat = *m / correction1;
            let v_hat = *v / correction2;
            *p -= lr * m_hat / (v_hat.sqrt() + EPS);
        }
    }
}

/// Trains the fusion head. Deterministic given the seed: weight init and
/// batch shuffling both draw from one seeded ChaCha20 stream.
pub fn mlp_train(data: &[TrainExample], cfg: &TrainConfig) -> Result<FusionParams> {
    if data.len() < 10 {
        return Err(CruxError::EmptyData(format!(
            "need at least 10 examples, got {}",
            data.len()
        )));
    }
    let positives = data.iter().filter(|e| e.label).count();
    if positives == 0 || positives == data.len() {
        return Err(CruxError::DegenerateLabels);
    }
    let f = data[0].features.len();
    if f == 0 || f > 2 {
        return Err(CruxError::ConfigInvalid(format!(
            "feature count must be 1 or 2, got {f}"
        )));
    }
    for ex in data {
        if ex.features.len() != f {
            return Err(CruxError::DimensionMismatch {
                expected: f,
                got: ex.features.len(),
            });
        }
        if ex.features.iter().any(|x| !x.is_finite()) {
            return Err(CruxError::OutOfRange("features must be finite".into()));
        }
    }
    if cfg.hidden == 0 || cfg.batch_size == 0 || cfg.epochs == 0 {
        return Err(CruxError::ConfigInvalid(
            "hidden, batch_size and epochs must be >= 1".into(),
        ));
    }

    let rows: Vec<Vec<f64>> = data.iter().map(|e| e.features.clone()).collect();
    let normalizer = FeatureNormalizer::fit(&rows)?;
    let normalized: Vec<TrainExample> = data
        .iter()
        .map(|e| TrainExample {
            features: normalizer.apply(&e.features),
            label: e.label,
        })
        .collect();

    let mut rng = ChaCha20Rng::seed_from_u64(cfg.seed);
    let h = cfg.hidden;
    let limit1 = (6.0 / (f + h) as f64).sqrt();
    let limit2 = (6.0 / (h + 1) as f64).sqrt();
    // The normalizer inside training params is the identity because the
    // examples above are already normalized; the fitted normalizer is
    // installed on the returned params.
    let mut params = FusionParams {
        version: PARAMS_VERSION,
        features: f,
        hidden: h,
        w1: (0..h * f).map(|_| rng.random_range(-limit1..limit1)).collect(),
        b1: vec![0.0; h],
        w2: (0..h).map(|_| rng.random_range(-limit2..limit2)).collect(),
        b2: 0.0,
        normalizer: FeatureNormalizer::identity(f),
        seed: cfg.seed,
        final_loss: 0.0,
    };

    let mut adam_w1 = AdamState::new(params.w1.len());
    let mut adam_b1 = AdamState::new(params.b1.len());
    let mut adam_w2 = AdamState::new(params.w2.len());
    let mut adam_b2 = AdamState::new(1);

    let mut order: Vec<usize> = (0..normalized.len()).collect();
    for _epoch in 0..cfg.epochs {
        order.shuffle(&mut rng);
        for chunk in order.chunks(cfg.batch_size) {
            let batch: Vec<TrainExample> =
                chunk.iter().map(|&i| normalized[i].clone()).collect();
            let (_, grads) = loss_and_gradients(&params, &batch)?;
            adam_w1.step(&mut params.w1, &grads.w1, cfg.learning_rate);
            adam_b1.step(&mut params.b1, &grads.b1, cfg.learning_rate);
            adam_w2.step(&mut params.w2, &grads.w2, cfg.learning_rate);
            let mut b2 = [params.b2];
            adam_b2.step(&mut b2, &[grads.b2], cfg.learning_rate);
            params.b2 = b2[0];
        }
    }

    params.final_loss = bce_loss(&params, &normalized)?;
    params.normalizer = normalizer;
    Ok(params)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::eval::auroc;

    fn zero_params(features: usize, hidden: usize) -> FusionParams {
        FusionParams {
            version: PARAMS_VERSION,
            features,
            hidden,
            w1: vec![0.0; hidden * features],
            b1: vec![0.0; hidden],
            w2: vec![0.0; hidden],
            b2: 0.0,
            normalizer: FeatureNormalizer::identity(features),
            seed: 0,
            final_loss: 0.0,
        }
    }

    /// Separable synthetic set: positives near (delta_h ~ 2, gc ~ 0),
    /// negatives near (delta_h ~ 0, gc ~ -0.8), with a deterministic jitter.
    fn separable_data(n_per_class: usize) -> Vec<TrainExample> {
        let mut data = Vec::new();
        for i in 0..n_per_class {
            let jitter = (i as f64 % 7.0) * 0.01;
            data.push(TrainExample {
                features: vec![2.0 + jitter, -0.05 - jitter],
                label: true,
            });
            data.push(TrainExample {
                features: vec![0.0 + jitter, -0.8 + jitter],
                label: false,
            });
        }
        data
    }

    #[test]
    fn zero_weights_give_half() {
        let p = zero_params(2, 4);
        assert_eq!(mlp_forward(&[3.0, -1.0], &p).unwrap(), 0.5);
    }

    #[test]
    fn zero_preactivation_gives_half() {
        let mut p = zero_params(2, 1);
        p.w1 = vec![1.0, 0.0];
        p.w2 = vec![1.0];
        assert_eq!(mlp_forward(&[0.0, 123.0], &p).unwrap(), 0.5);
    }

    #[test]
    fn frozen_sigmoid_example() {
        let mut p = zero_params(2, 1);
        p.w1 = vec![2.0, 0.0];
        p.w2 = vec![1.0];
        let out = mlp_forward(&[1.0, 0.0], &p).unwrap();
        assert!((out - 0.8807970779778823).abs() < 1e-12);
    }

    #[test]
    fn output_is_bounded_for_extreme_inputs() {
        let mut p = zero_params(1, 1);
        p.w1 = vec![1.0];
        p.w2 = vec![1e6];
        for x in [-1e9, -1.0, 0.0, 1.0, 1e9] {
            let out = mlp_forward(&[x], &p).unwrap();
            assert!(out > 0.0 && out < 1.0, "out = {out} for x = {x}");
        }
    }

    #[test]
    fn dimension_mismatch_is_rejected() {
        let p = zero_params(2, 4);
        match mlp_forward(&[1.0], &p) {
            Err(CruxError::DimensionMismatch { expected: 2, got: 1 }) => {}
            other => panic!("expected DimensionMismatch, got {other:?}"),
        }
    }

    #[test]
    fn training_rejects_degenerate_inputs() {
        let all_pos: Vec<TrainExample> = (0..12)
            .map(|i| TrainExample {
                features: vec![i as f64, 0.0],
                label: true,
            })
            .collect();
        match mlp_train(&all_pos, &TrainConfig::default()) {
            Err(CruxError::DegenerateLabels) => {}
            other => panic!("expected DegenerateLabels, got {other:?}"),
        }

        match mlp_train(&separable_data(2)[..4], &TrainConfig::default()) {
            Err(CruxError::EmptyData(_)) => {}
            other => panic!("expected EmptyData, got {other:?}"),
        }
    }

    #[test]
    fn training_separates_separable_data() {
        let data = separable_data(20);
        let params = mlp_train(&data, &TrainConfig::default()).unwrap();
        let scores: Vec<f64> = data
            .iter()
            .map(|e| mlp_forward(&e.features, &params).unwrap())
            .collect();
        let labels: Vec<bool> = data.iter().map(|e| e.label).collect();
        assert_eq!(auroc(&scores, &labels).unwrap(), 1.0);
    }

    #[test]
    fn training_is_bitwise_deterministic() {
        let data = separable_data(10);
        let cfg = TrainConfig::default();
        let a = mlp_train(&data, &cfg).unwrap();
        let b = mlp_train(&data, &cfg).unwrap();
        assert_eq!(a, b);
        assert_eq!(
            serde_json::to_string(&a).unwrap(),
            serde_json::to_string(&b).unwrap()
        );
    }

    #[test]
    fn normalizer_centers_training_features() {
        let data = separable_data(15);
        let params = mlp_train(&data, &TrainConfig::default()).unwrap();
        let f = params.features;
        let normalized: Vec<Vec<f64>> = data
            .iter()
            .map(|e| params.normalizer.apply(&e.features))
            .collect();
        for k in 0..f {
            let n = normalized.len() as f64;
            let mean: f64 = normalized.iter().map(|r| r[k]).sum::<f64>() / n;
            let var: f64 = normalized.iter().map(|r| (r[k] - mean).powi(2)).sum::<f64>() / n;
            assert!(mean.abs() < 1e-6, "mean[{k}] = {mean}");
            assert!((var.sqrt() - 1.0).abs() < 1e-6, "std[{k}] = {}", var.sqrt());
        }
    }

    #[test]
    fn one_feature_model_ranks_monotonically() {
        let data: Vec<TrainExample> = (0..30)
            .map(|i| TrainExample {
                features: vec![if i % 2 == 0 { 1.5 + (i as f64) * 0.01 } else { -1.5 - (i as f64) * 0.01 }],
                label: i % 2 == 0,
            })
            .collect();
        let params = mlp_train(&data, &TrainConfig::default()).unwrap();

        let grid: Vec<f64> = (-20..=20).map(|i| i as f64 * 0.2).collect();
        let outs: Vec<f64> = grid
            .iter()
            .map(|&x| mlp_forward(&[x], &params).unwrap())
            .collect();
        for w in outs.windows(2) {
            assert!(w[1] >= w[0] - 1e-12, "non-monotone: {outs:?}");
        }
    }

    #[test]
    fn params_round_trip_through_json() {
        let data = separable_data(10);
        let params = mlp_train(&data, &TrainConfig::default()).unwrap();
        let dir = std::env::temp_dir().join("crux-fusion-test");
        std::fs::create_dir_all(&dir).unwrap();
        let path = dir.join("fusion.json");
        params.save(&path).unwrap();
        let loaded = FusionParams::load(&path).unwrap();
        assert_eq!(params, loaded);
    }

    #[test]
    fn missing_params_file_reports_missing() {
        match FusionParams::load(Path::new("/nonexistent/fusion.json")) {
            Err(CruxError::MissingFusionParams(_)) => {}
            other => panic!("expected MissingFusionParams, got {other:?}"),
        }
    }

    #[test]
    fn analytic_gradients_match_finite_differences() {
        // Random-ish parameter points driven by a seeded generator; central
        // finite differences of bce_loss are the oracle.
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha20Rng::seed_from_u64(7);

        for _trial in 0..10 {
            let f = if rng.random_bool(0.5) { 1 } else { 2 };
            let h = rng.random_range(1..5);
            let mut params = zero_params(f, h);
            for w in params.w1.iter_mut().chain(params.w2.iter_mut()) {
                *w = rng.random_range(-1.0..1.0);
            }
            for b in params.b1.iter_mut() {
                *b = rng.random_range(-0.5..0.5);
            }
            params.b2 = rng.random_range(-0.5..0.5);

            let batch: Vec<TrainExample> = (0..6)
                .map(|_| TrainExample {
                    features: (0..f).map(|_| rng.random_range(-2.0..2.0)).collect(),
                    label: rng.random_bool(0.5),
                })
                .collect();

            let (_, grads) = loss_and_gradients(&params, &batch).unwrap();
            let eps = 1e-6;
            let check = |set: &dyn Fn(&mut FusionParams, f64), analytic: f64| {
                let mut plus = params.clone();
                set(&mut plus, eps);
                let mut minus = params.clone();
                set(&mut minus, -eps);
                let numeric = (bce_loss(&plus, &batch).unwrap()
                    - bce_loss(&minus, &batch).unwrap())
                    / (2.0 * eps);
                let denom = numeric.abs().max(analytic.abs()).max(1e-8);
                assert!(
                    (numeric - analytic).abs() / denom < 1e-4,
                    "gradient mismatch: numeric={numeric}, analytic={analytic}"
                );
            };

            for idx in 0..params.w1.len() {
                check(&move |p: &mut FusionParams, d: f64| p.w1[idx] += d, grads.w1[idx]);
            }
            for idx in 0..params.b1.len() {
                check(&move |p: &mut FusionParams, d: f64| p.b1[idx] += d, grads.b1[idx]);
            }
            for idx in 0..params.w2.len() {
                check(&move |p: &mut FusionParams, d: f64| p.w2[idx] += d, grads.w2[idx]);
            }
            check(&|p: &mut FusionParams, d: f64| p.b2 += d, grads.b2);
        }
    }
}
