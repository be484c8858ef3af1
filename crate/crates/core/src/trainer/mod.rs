//! Toy-scale training of a cosine-head MLP under the margin losses.
//!
//! The network maps flattened images to a low-dimensional feature, L2
//! normalizes it and scores classes by cosine against unit-norm class
//! weights. Training is plain mini-batch SGD with momentum, step learning
//! rate decay and renormalization of the class weights after every step.
//! Everything runs on one thread in a fixed order, so a seed fully
//! determines the result.

mod dataset;
mod network;

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

pub use dataset::{
    dataset_from_templates, encode_idx_images, encode_idx_labels, load_idx_dataset, parse_idx_images, parse_idx_labels,
    read_idx_images, read_idx_labels, synth_digits, write_idx_images, write_idx_labels, Dataset, IdxImages,
    MIN_DIGIT_SIDE,
};
pub use network::{DenseLayer, ForwardPass, Gradients, InputNorm, ToyNetwork, LEAKY_SLOPE, NORM_EPS};

use crate::affinity::PriorMarginTable;
use crate::error::{Error, Result};
use crate::export::format_f64;
use crate::loss::{alpha_schedule, CosineBatch, LossConfig, LossContext, LossKind, LossRegistry};
use crate::numeric::{angle_between, Matrix, Prng};

/// Rows per forward pass during evaluation.
const EVAL_CHUNK: usize = 512;

/// Training samples used to center the initial biases.
const INIT_PROBE: usize = 1024;

/// Initialization scheme, recorded in every report.
pub const INIT_SCHEME: &str =
    "inputs standardized by training mean/std; dense uniform(+-sqrt(6/fan_in)); biases centre pre-activations on the first 1024 training samples; class rows normalized gaussian";

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AlphaMode {
    /// Sigmoid ramp towards `alpha_max`.
    #[default]
    Schedule,
    /// `alpha_max` from the first iteration.
    Constant,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub loss: LossKind,
    pub loss_config: LossConfig,
    pub alpha_mode: AlphaMode,
    pub hidden: Vec<usize>,
    pub feature_dim: usize,
    pub batch_size: usize,
    pub momentum: f64,
    pub learning_rate: f64,
    /// Global L2 norm the loss gradient is clipped to; 0 disables clipping.
    pub grad_clip: f64,
    /// L2 penalty on dense-layer weights (not biases or class weights).
    pub weight_decay: f64,
    /// Fractions of `max_iter` after which the learning rate is multiplied
    /// by `lr_decay`.
    pub lr_milestones: Vec<f64>,
    pub lr_decay: f64,
    pub max_iter: usize,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            loss: LossKind::TemplateInstance,
            loss_config: LossConfig::default(),
            alpha_mode: AlphaMode::Schedule,
            hidden: vec![256, 64],
            feature_dim: 2,
            batch_size: 128,
            momentum: 0.9,
            learning_rate: 0.1,
            grad_clip: 1.0,
            weight_decay: 5e-4,
            // Decay every 70k of 360k iterations, scaled to max_iter.
            lr_milestones: (1..=5).map(|k| k as f64 * 70.0 / 360.0).collect(),
            lr_decay: 0.1,
            max_iter: 3000,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        self.loss_config.validate()?;
        let bad = |m: &str| Err(Error::InvalidParameter(m.into()));
        if self.batch_size == 0 {
            return bad("batch_size must be positive");
        }
        if !(self.learning_rate.is_finite() && self.learning_rate > 0.0) {
            return bad("learning_rate must be positive");
        }
        if !(self.grad_clip.is_finite() && self.grad_clip >= 0.0) {
            return bad("grad_clip must be nonnegative");
        }
        if !(self.weight_decay.is_finite() && self.weight_decay >= 0.0) {
            return bad("weight_decay must be nonnegative");
        }
        if !(0.0..1.0).contains(&self.momentum) {
            return bad("momentum must be in [0, 1)");
        }
        if !(self.lr_decay.is_finite() && self.lr_decay > 0.0) {
            return bad("lr_decay must be positive");
        }
        if self
            .lr_milestones
            .iter()
            .any(|m| !(m.is_finite() && *m > 0.0 && *m <= 1.0))
        {
            return bad("lr_milestones must be fractions in (0, 1]");
        }
        if self.max_iter == 0 {
            return bad("max_iter must be positive");
        }
        if self.feature_dim == 0 || self.hidden.contains(&0) {
            return bad("layer sizes must be positive");
        }
        Ok(())
    }

    /// Step-decayed learning rate at 1-based iteration `iter`.
    pub fn learning_rate_at(&self, iter: usize) -> f64 {
        let passed = self
            .lr_milestones
            .iter()
            .filter(|&&m| iter > (m * self.max_iter as f64).round() as usize)
            .count();
        self.learning_rate * self.lr_decay.powi(passed as i32)
    }

    /// Instance margin bound at 1-based iteration `iter`.
    pub fn alpha_at(&self, iter: usize) -> Result<f64> {
        match self.alpha_mode {
            AlphaMode::Schedule => alpha_schedule(iter, self.max_iter, &self.loss_config),
            AlphaMode::Constant => Ok(self.loss_config.alpha_max),
        }
    }
}

/// Accuracy and angle statistics of a network on a dataset.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Evaluation {
    pub samples: usize,
    pub accuracy: f64,
    /// Root-mean-square angle between each unit feature and its class mean
    /// direction; zero for classes without samples.
    pub intra_class_angular_std: Vec<f64>,
    /// Mean of the above over classes that have samples.
    pub mean_intra_class_angular_std: f64,
    /// Pairwise angles between class weight rows.
    pub weight_angles: Vec<Vec<f64>>,
    pub min_inter_class_angle: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EpochRecord {
    pub epoch: usize,
    /// Last iteration of the epoch.
    pub iteration: usize,
    /// Running accuracy over the epoch's mini-batches.
    pub train_accuracy: f64,
    pub test_accuracy: Option<f64>,
    pub mean_loss: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TrainReport {
    pub config: TrainConfig,
    pub init: String,
    pub train_samples: usize,
    pub test_samples: Option<usize>,
    pub epochs: Vec<EpochRecord>,
    /// Mean mini-batch loss at every iteration.
    pub iteration_loss: Vec<f64>,
    pub final_alpha: f64,
    pub train: Evaluation,
    pub test: Option<Evaluation>,
    /// Where the embeddings were written, if they were.
    pub embeddings: Option<String>,
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub network: ToyNetwork,
    pub report: TrainReport,
}

fn argmax(row: &[f64]) -> usize {
    row.iter()
        .enumerate()
        .fold(
            (0, f64::NEG_INFINITY),
            |best, (j, &v)| if v > best.1 { (j, v) } else { best },
        )
        .0
}

fn batch_matrix(data: &Dataset, indices: &[usize]) -> Matrix {
    let dim = data.dim();
    let mut m = Matrix::zeros(indices.len(), dim);
    for (r, &i) in indices.iter().enumerate() {
        m.row_mut(r).copy_from_slice(data.image(i));
    }
    m
}

/// Pairwise angles between class weight rows and their minimum off the
/// diagonal.
pub fn weight_angle_stats(weights: &Matrix) -> (Vec<Vec<f64>>, f64) {
    let n = weights.rows();
    let mut angles = vec![vec![0.0; n]; n];
    let mut min = f64::INFINITY;
    for i in 0..n {
        for j in i + 1..n {
            let a = angle_between(weights.row(i), weights.row(j));
            angles[i][j] = a;
            angles[j][i] = a;
            min = min.min(a);
        }
    }
    (angles, min)
}

/// Per-class RMS angle of unit features to the class mean direction.
pub fn intra_class_angular_std(unit: &Matrix, labels: &[usize], classes: usize) -> Vec<f64> {
    let d = unit.cols();
    let mut mean = vec![vec![0.0; d]; classes];
    let mut count = vec![0usize; classes];
    for (i, &y) in labels.iter().enumerate() {
        count[y] += 1;
        for (m, v) in mean[y].iter_mut().zip(unit.row(i)) {
            *m += v;
        }
    }
    let mut sq = vec![0.0; classes];
    for (i, &y) in labels.iter().enumerate() {
        sq[y] += angle_between(unit.row(i), &mean[y]).powi(2);
    }
    (0..classes)
        .map(|c| {
            if count[c] == 0 {
                0.0
            } else {
                (sq[c] / count[c] as f64).sqrt()
            }
        })
        .collect()
}

pub fn evaluate(net: &ToyNetwork, data: &Dataset) -> Result<Evaluation> {
    if data.is_empty() {
        return Err(Error::EmptyDataset);
    }
    if data.dim() != net.input_dim() || data.classes() != net.classes() {
        return Err(Error::DimensionMismatch(format!(
            "dataset is {}-dim with {} classes, network expects {} and {}",
            data.dim(),
            data.classes(),
            net.input_dim(),
            net.classes()
        )));
    }
    let mut unit = Matrix::zeros(data.len(), net.feature_dim());
    let mut correct = 0usize;
    let all: Vec<usize> = (0..data.len()).collect();
    for chunk in all.chunks(EVAL_CHUNK) {
        let pass = net.forward(&batch_matrix(data, chunk))?;
        for (r, &i) in chunk.iter().enumerate() {
            if argmax(pass.cosines.row(r)) == data.label(i) {
                correct += 1;
            }
            unit.row_mut(i).copy_from_slice(pass.unit.row(r));
        }
    }
    let intra = intra_class_angular_std(&unit, data.labels(), data.classes());
    let present: Vec<f64> = (0..data.classes())
        .filter(|&c| data.labels().contains(&c))
        .map(|c| intra[c])
        .collect();
    let (weight_angles, min_inter_class_angle) = weight_angle_stats(net.class_weights());
    Ok(Evaluation {
        samples: data.len(),
        accuracy: correct as f64 / data.len() as f64,
        mean_intra_class_angular_std: present.iter().sum::<f64>() / present.len() as f64,
        intra_class_angular_std: intra,
        weight_angles,
        min_inter_class_angle,
    })
}

/// Per-pixel training mean and one global inverse standard deviation.
pub fn input_norm(data: &Dataset) -> InputNorm {
    let (n, d) = (data.len() as f64, data.dim());
    let mut mean = vec![0.0; d];
    for i in 0..data.len() {
        for (m, v) in mean.iter_mut().zip(data.image(i)) {
            *m += v;
        }
    }
    mean.iter_mut().for_each(|m| *m /= n);
    let mut var = 0.0;
    for i in 0..data.len() {
        var += data
            .image(i)
            .iter()
            .zip(&mean)
            .map(|(v, m)| (v - m).powi(2))
            .sum::<f64>();
    }
    let std = (var / (n * d as f64)).sqrt();
    InputNorm {
        mean,
        scale: if std > 0.0 { 1.0 / std } else { 1.0 },
    }
}

/// Trains a fresh network. Inputs are standardized with the training set's
/// statistics. `margins`, when given, must match the class count.
pub fn train(
    train_set: &Dataset,
    test_set: Option<&Dataset>,
    cfg: &TrainConfig,
    margins: Option<&PriorMarginTable>,
) -> Result<TrainOutcome> {
    cfg.validate()?;
    if train_set.is_empty() {
        return Err(Error::EmptyDataset);
    }
    if let Some(m) = margins {
        if m.n() != train_set.classes() {
            return Err(Error::DimensionMismatch(format!(
                "margin table is {0}x{0} but the dataset has {1} classes",
                m.n(),
                train_set.classes()
            )));
        }
    }
    if let Some(t) = test_set {
        if t.dim() != train_set.dim() || t.classes() != train_set.classes() {
            return Err(Error::DimensionMismatch(
                "test set does not match the training set".into(),
            ));
        }
    }
    let mut init_rng = Prng::derived(cfg.seed, 0);
    let mut order_rng = Prng::derived(cfg.seed, 1);
    let mut net = ToyNetwork::new(
        train_set.dim(),
        &cfg.hidden,
        cfg.feature_dim,
        train_set.classes(),
        &mut init_rng,
    )?;
    net.set_input_norm(input_norm(train_set))?;
    let probe: Vec<usize> = (0..train_set.len().min(INIT_PROBE)).collect();
    net.center_biases(&batch_matrix(train_set, &probe))?;
    let registry = LossRegistry::standard();
    let loss = registry.get(cfg.loss).expect("standard registry has every kind");
    let batch_size = cfg.batch_size.min(train_set.len());
    let per_epoch = train_set.len() / batch_size;

    let mut order: Vec<usize> = (0..train_set.len()).collect();
    let mut velocity = vec![0.0; net.parameter_count()];
    let decay: Vec<f64> = net.decay_mask().iter().map(|m| m * cfg.weight_decay).collect();
    let mut iteration_loss = Vec::with_capacity(cfg.max_iter);
    let mut epochs = Vec::new();
    let (mut seen, mut correct, mut loss_sum, mut steps) = (0usize, 0usize, 0.0, 0usize);
    let mut alpha = 0.0;

    for iter in 1..=cfg.max_iter {
        let slot = (iter - 1) % per_epoch;
        if slot == 0 {
            order_rng.shuffle(&mut order);
        }
        let indices = &order[slot * batch_size..(slot + 1) * batch_size];
        let pass = net.forward(&batch_matrix(train_set, indices))?;
        alpha = cfg.alpha_at(iter)?;
        let labels: Vec<usize> = indices.iter().map(|&i| train_set.label(i)).collect();
        let non_finite = |cos: &Matrix| Error::NonFiniteLoss {
            iteration: iter,
            alpha,
            max_abs_cosine: cos.max_abs(),
        };
        let batch = CosineBatch::new(pass.cosines.clone(), labels.clone()).map_err(|_| non_finite(&pass.cosines))?;
        let ctx = LossContext {
            config: &cfg.loss_config,
            margins,
            alpha,
        };
        let eval = loss.evaluate(&batch, &ctx).map_err(|e| match e {
            Error::NonFinite(_) => non_finite(&pass.cosines),
            other => other,
        })?;
        let mut grads = net.backward(&pass, &eval.grad)?.flatten();
        if grads.iter().any(|g| !g.is_finite()) {
            return Err(non_finite(&pass.cosines));
        }
        if cfg.grad_clip > 0.0 {
            let norm = grads.iter().map(|g| g * g).sum::<f64>().sqrt();
            if norm > cfg.grad_clip {
                let k = cfg.grad_clip / norm;
                grads.iter_mut().for_each(|g| *g *= k);
            }
        }

        let lr = cfg.learning_rate_at(iter);
        let mut params = net.parameters();
        for (((p, v), g), wd) in params.iter_mut().zip(&mut velocity).zip(&grads).zip(&decay) {
            *v = cfg.momentum * *v + g + wd * *p;
            *p -= lr * *v;
        }
        net.set_parameters(&params)?;
        net.renormalize_class_weights();

        iteration_loss.push(eval.mean);
        loss_sum += eval.mean;
        steps += 1;
        seen += labels.len();
        correct += labels
            .iter()
            .enumerate()
            .filter(|&(r, &y)| argmax(pass.cosines.row(r)) == y)
            .count();
        if slot + 1 == per_epoch || iter == cfg.max_iter {
            epochs.push(EpochRecord {
                epoch: epochs.len() + 1,
                iteration: iter,
                train_accuracy: correct as f64 / seen as f64,
                test_accuracy: match test_set {
                    Some(t) => Some(evaluate(&net, t)?.accuracy),
                    None => None,
                },
                mean_loss: loss_sum / steps as f64,
            });
            (seen, correct, loss_sum, steps) = (0, 0, 0.0, 0);
        }
    }

    let report = TrainReport {
        config: cfg.clone(),
        init: INIT_SCHEME.to_string(),
        train_samples: train_set.len(),
        test_samples: test_set.map(Dataset::len),
        epochs,
        iteration_loss,
        final_alpha: alpha,
        train: evaluate(&net, train_set)?,
        test: test_set.map(|t| evaluate(&net, t)).transpose()?,
        embeddings: None,
    };
    Ok(TrainOutcome { network: net, report })
}

/// CSV of raw 2-D features (`label,f1,f2`) followed by the class weights
/// with label `-1`.
pub fn embeddings_csv(net: &ToyNetwork, data: &Dataset) -> Result<String> {
    if net.feature_dim() != 2 {
        return Err(Error::InvalidParameter(format!(
            "embedding export needs 2-D features, network has {}",
            net.feature_dim()
        )));
    }
    if data.dim() != net.input_dim() {
        return Err(Error::DimensionMismatch(
            "dataset does not match the network input".into(),
        ));
    }
    let mut out = String::from("label,f1,f2\n");
    let all: Vec<usize> = (0..data.len()).collect();
    for chunk in all.chunks(EVAL_CHUNK) {
        let pass = net.forward(&batch_matrix(data, chunk))?;
        for (r, &i) in chunk.iter().enumerate() {
            let f = pass.features.row(r);
            let _ = writeln!(out, "{},{},{}", data.label(i), format_f64(f[0]), format_f64(f[1]));
        }
    }
    for j in 0..net.classes() {
        let w = net.class_weights().row(j);
        let _ = writeln!(out, "-1,{},{}", format_f64(w[0]), format_f64(w[1]));
    }
    Ok(out)
}

pub fn export_embeddings(net: &ToyNetwork, data: &Dataset, path: &Path) -> Result<()> {
    let text = embeddings_csv(net, data)?;
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

/// Parses [`embeddings_csv`] output into `(label, f1, f2)` rows.
pub fn parse_embeddings(text: &str) -> Result<Vec<(i64, f64, f64)>> {
    let bad = |line: usize, message: String| Error::Format {
        path: "embeddings".into(),
        message: format!("line {line}: {message}"),
    };
    text.lines()
        .enumerate()
        .skip(1)
        .map(|(k, line)| {
            let fields: Vec<&str> = line.split(',').collect();
            if fields.len() != 3 {
                return Err(bad(k + 1, format!("expected 3 fields, found {}", fields.len())));
            }
            let label = fields[0].parse().map_err(|e| bad(k + 1, format!("{e}")))?;
            let f1 = fields[1].parse().map_err(|e| bad(k + 1, format!("{e}")))?;
            let f2 = fields[2].parse().map_err(|e| bad(k + 1, format!("{e}")))?;
            Ok((label, f1, f2))
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn learning_rate_steps() {
        let cfg = TrainConfig {
            max_iter: 360,
            ..TrainConfig::default()
        };
        assert_eq!(cfg.learning_rate_at(1), 0.1);
        assert_eq!(cfg.learning_rate_at(70), 0.1);
        assert!((cfg.learning_rate_at(71) - 0.01).abs() < 1e-15);
        assert!((cfg.learning_rate_at(141) - 0.001).abs() < 1e-15);
    }

    #[test]
    fn identity_network_evaluates_perfectly() {
        let layer = DenseLayer {
            weights: Matrix::identity(3),
            bias: vec![0.0; 3],
        };
        let net = ToyNetwork::from_parts(vec![layer], Matrix::identity(3)).unwrap();
        let data = Dataset::new(
            3,
            3,
            vec![1.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 1.0, 0.0, 2.0, 0.0],
            vec![0, 1, 2, 1],
        )
        .unwrap();
        let e = evaluate(&net, &data).unwrap();
        assert_eq!(e.accuracy, 1.0);
        assert!(e.intra_class_angular_std.iter().all(|&s| s == 0.0));
        let right = std::f64::consts::FRAC_PI_2;
        assert!((e.min_inter_class_angle - right).abs() < 1e-15);
    }

    #[test]
    fn empty_and_mismatched_inputs() {
        let mut rng = Prng::new(0);
        let net = ToyNetwork::new(4, &[3], 2, 2, &mut rng).unwrap();
        let empty = Dataset::new(4, 2, vec![], vec![]).unwrap();
        assert!(matches!(evaluate(&net, &empty), Err(Error::EmptyDataset)));
        let wide = Dataset::new(5, 2, vec![0.0; 5], vec![0]).unwrap();
        assert!(evaluate(&net, &wide).is_err());
        let three_d = ToyNetwork::new(4, &[3], 3, 2, &mut rng).unwrap();
        let one = Dataset::new(4, 2, vec![0.0; 4], vec![1]).unwrap();
        assert!(embeddings_csv(&three_d, &one).is_err());
    }

    #[test]
    fn config_validation() {
        let ok = TrainConfig::default();
        assert!(ok.validate().is_ok());
        assert!(TrainConfig {
            batch_size: 0,
            ..ok.clone()
        }
        .validate()
        .is_err());
        assert!(TrainConfig {
            learning_rate: 0.0,
            ..ok.clone()
        }
        .validate()
        .is_err());
        assert!(TrainConfig {
            lr_milestones: vec![1.5],
            ..ok
        }
        .validate()
        .is_err());
    }
}
