//! Margin losses over cosine logits and their exact gradients.
//!
//! All four losses share one shape: build a logit vector `l` from the
//! sample's cosines, then `L = logsumexp(l) - l_y` and `∂L/∂l = softmax(l) - e_y`.
//!
//! | loss                | target logit        | other logits               |
//! |---------------------|---------------------|----------------------------|
//! | softmax             | `s·cos_y`           | `s·cos_j`                  |
//! | additive margin     | `s·(cos_y - m)`     | `s·cos_j`                  |
//! | template            | `s·cos_y`           | `s·cos_j + β·mP(y, j)`     |
//! | template + instance | `s·(cos_y - mA)`    | `s·cos_j + β·mP(y, j)`     |
//!
//! The instance margin `mA = α(1 - p)^γ` depends on the prior-margin
//! probability `p` of the target. By default it is held constant when
//! differentiating ([`MarginBackprop::Detached`]); the differentiated mode
//! adds the chain-rule term through `p`.

mod gradcheck;
mod registry;

use serde::{Deserialize, Serialize};

pub use gradcheck::{gradient_check, max_relative_error, GradCheckOp, GradCheckReport, GRADCHECK_THRESHOLD};
pub use registry::{CosineLoss, LossContext, LossKind, LossRegistry};

use crate::affinity::PriorMarginTable;
use crate::error::{Error, Result};
use crate::numeric::{lse, Matrix};

/// Cosines may overshoot ±1 by this much from rounding.
pub const COSINE_SLACK: f64 = 1e-9;

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MarginBackprop {
    #[default]
    Detached,
    Differentiated,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LossConfig {
    /// Logit scale.
    pub s: f64,
    /// Upper bound of the instance margin at the end of the schedule.
    pub alpha_max: f64,
    /// Focusing exponent of the instance margin.
    pub gamma: f64,
    /// Weight of the prior margins.
    pub beta: f64,
    /// Steepness of the sigmoid margin schedule.
    pub rho: f64,
    /// Margin of the plain additive-margin loss.
    pub fixed_m: f64,
    pub margin_backprop: MarginBackprop,
}

impl Default for LossConfig {
    fn default() -> Self {
        LossConfig {
            s: 30.0,
            alpha_max: 0.1,
            gamma: 2.0,
            beta: 1.0,
            rho: 10.0,
            fixed_m: 0.35,
            margin_backprop: MarginBackprop::Detached,
        }
    }
}

impl LossConfig {
    pub fn validate(&self) -> Result<()> {
        let fields = [
            ("s", self.s),
            ("alpha_max", self.alpha_max),
            ("gamma", self.gamma),
            ("beta", self.beta),
            ("rho", self.rho),
            ("fixed_m", self.fixed_m),
        ];
        if let Some((name, _)) = fields.iter().find(|(_, v)| !v.is_finite()) {
            return Err(Error::InvalidParameter(format!("{name} must be finite")));
        }
        if self.s <= 0.0 {
            return Err(Error::InvalidParameter("s must be positive".into()));
        }
        if self.gamma < 0.0 || self.beta < 0.0 {
            return Err(Error::InvalidParameter("gamma and beta must be nonnegative".into()));
        }
        Ok(())
    }
}

/// Cosine logits of a mini-batch with their ground-truth classes.
#[derive(Debug, Clone, PartialEq)]
pub struct CosineBatch {
    cosines: Matrix,
    labels: Vec<usize>,
}

impl CosineBatch {
    pub fn new(cosines: Matrix, labels: Vec<usize>) -> Result<Self> {
        let (b, n) = cosines.shape();
        if b == 0 {
            return Err(Error::EmptyDataset);
        }
        if n < 2 {
            return Err(Error::InvalidParameter("need at least two classes".into()));
        }
        if labels.len() != b {
            return Err(Error::DimensionMismatch(format!(
                "{b} cosine rows but {} labels",
                labels.len()
            )));
        }
        if let Some(&label) = labels.iter().find(|&&l| l >= n) {
            return Err(Error::InvalidLabel { label, classes: n });
        }
        if !cosines.is_finite() {
            return Err(Error::NonFinite("cosines"));
        }
        if cosines.max_abs() > 1.0 + COSINE_SLACK {
            return Err(Error::InvalidParameter(format!(
                "cosine {} outside [-1, 1]",
                cosines.max_abs()
            )));
        }
        Ok(CosineBatch { cosines, labels })
    }

    pub fn cosines(&self) -> &Matrix {
        &self.cosines
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn batch_size(&self) -> usize {
        self.labels.len()
    }

    pub fn classes(&self) -> usize {
        self.cosines.cols()
    }

    /// Same labels, different cosines (used by finite differences).
    pub fn with_cosines(&self, cosines: Matrix) -> Result<Self> {
        CosineBatch::new(cosines, self.labels.clone())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LossEvaluation {
    pub per_sample: Vec<f64>,
    pub mean: f64,
    /// Target probability: the prior-margin `p` for the template losses,
    /// `exp(-L)` for the others.
    pub p: Vec<f64>,
    /// Margin applied to the target logit of each sample.
    pub margin: Vec<f64>,
    /// `∂ mean / ∂ cosines`, `B × n`.
    pub grad: Matrix,
}

/// Per-sample result of the shared logit kernel.
struct SampleTerms {
    loss: f64,
    /// `∂L/∂cos`, not yet divided by the batch size.
    grad: Vec<f64>,
    p: f64,
    margin: f64,
}

fn check_margins(batch: &CosineBatch, margins: Option<&PriorMarginTable>) -> Result<()> {
    match margins {
        Some(m) if m.n() != batch.classes() => Err(Error::DimensionMismatch(format!(
            "margin table is {0}x{0} but the batch has {1} classes",
            m.n(),
            batch.classes()
        ))),
        _ => Ok(()),
    }
}

fn assemble(batch: &CosineBatch, terms: Vec<SampleTerms>) -> Result<LossEvaluation> {
    let (b, n) = batch.cosines.shape();
    let inv = 1.0 / b as f64;
    let mut grad = Matrix::zeros(b, n);
    let (mut per_sample, mut p, mut margin) = (Vec::with_capacity(b), Vec::with_capacity(b), Vec::with_capacity(b));
    let mut total = 0.0;
    for (i, t) in terms.into_iter().enumerate() {
        if !t.loss.is_finite() || t.grad.iter().any(|g| !g.is_finite()) {
            return Err(Error::NonFinite("loss evaluation"));
        }
        total += t.loss;
        for (g, v) in grad.row_mut(i).iter_mut().zip(&t.grad) {
            *g = v * inv;
        }
        per_sample.push(t.loss);
        p.push(t.p);
        margin.push(t.margin);
    }
    Ok(LossEvaluation {
        per_sample,
        mean: total * inv,
        p,
        margin,
        grad,
    })
}

/// `L = lse(l) - l_y` and `∂L/∂cos = s·(softmax(l) - e_y)`.
fn softmax_terms(logits: &[f64], y: usize, s: f64) -> (f64, Vec<f64>) {
    let z = lse(logits.iter().copied());
    let grad = logits
        .iter()
        .enumerate()
        .map(|(j, &l)| s * ((l - z).exp() - if j == y { 1.0 } else { 0.0 }))
        .collect();
    (z - logits[y], grad)
}

/// Prior-margin logits `s·cos_j + β·mP(y, j)` of one sample.
fn prior_logits(row: &[f64], y: usize, cfg: &LossConfig, margins: Option<&PriorMarginTable>) -> Vec<f64> {
    row.iter()
        .enumerate()
        .map(|(j, &c)| {
            let prior = margins.map_or(0.0, |m| m.get(y, j));
            cfg.s * c + cfg.beta * prior
        })
        .collect()
}

/// `(log p, log(1 - p), softmax of the prior logits)`.
fn log_probabilities(logits: &[f64], y: usize) -> (f64, f64, Vec<f64>) {
    let z = lse(logits.iter().copied());
    let rest = lse(logits.iter().enumerate().filter(|&(j, _)| j != y).map(|(_, &v)| v));
    let probs = logits.iter().map(|&l| (l - z).exp()).collect();
    (logits[y] - z, rest - z, probs)
}

/// Additive-margin softmax with margin `cfg.fixed_m`.
pub fn am_softmax_loss(batch: &CosineBatch, cfg: &LossConfig) -> Result<LossEvaluation> {
    cfg.validate()?;
    let terms = (0..batch.batch_size())
        .map(|i| {
            let y = batch.labels[i];
            let mut logits: Vec<f64> = batch.cosines.row(i).iter().map(|c| cfg.s * c).collect();
            logits[y] -= cfg.s * cfg.fixed_m;
            let (loss, grad) = softmax_terms(&logits, y, cfg.s);
            SampleTerms {
                loss,
                grad,
                p: (-loss).exp(),
                margin: cfg.fixed_m,
            }
        })
        .collect();
    assemble(batch, terms)
}

/// Cross-entropy over `s·cos` (additive margin with `m = 0`).
pub fn softmax_loss(batch: &CosineBatch, cfg: &LossConfig) -> Result<LossEvaluation> {
    am_softmax_loss(
        batch,
        &LossConfig {
            fixed_m: 0.0,
            ..cfg.clone()
        },
    )
}

/// `p_i = exp(s·cos_y) / Σ_j exp(s·cos_j + β·mP(y, j))`.
pub fn estimated_probability(batch: &CosineBatch, cfg: &LossConfig, margins: &PriorMarginTable) -> Result<Vec<f64>> {
    cfg.validate()?;
    check_margins(batch, Some(margins))?;
    Ok((0..batch.batch_size())
        .map(|i| {
            let y = batch.labels[i];
            let logits = prior_logits(batch.cosines.row(i), y, cfg, Some(margins));
            log_probabilities(&logits, y).0.exp()
        })
        .collect())
}

/// `α(1 - p)^γ`, with `0^0 = 1`.
pub fn adaptive_margin(p: f64, alpha: f64, gamma: f64) -> f64 {
    let q = (1.0 - p).clamp(0.0, 1.0);
    alpha * q.powf(gamma)
}

/// Template loss: `-log p_i` with the prior-margin probability.
pub fn template_loss_only(
    batch: &CosineBatch,
    cfg: &LossConfig,
    margins: Option<&PriorMarginTable>,
) -> Result<LossEvaluation> {
    cfg.validate()?;
    check_margins(batch, margins)?;
    let terms = (0..batch.batch_size())
        .map(|i| {
            let y = batch.labels[i];
            let logits = prior_logits(batch.cosines.row(i), y, cfg, margins);
            let (loss, grad) = softmax_terms(&logits, y, cfg.s);
            SampleTerms {
                loss,
                grad,
                p: (-loss).exp(),
                margin: 0.0,
            }
        })
        .collect();
    assemble(batch, terms)
}

/// Combined template-instance loss with instance margin bound `alpha`.
///
/// The value uses the closed form `log(1 + (1/p - 1)·exp(s·mA))`, evaluated
/// as `logsumexp(log(1-p) - log p + s·mA, 0)`; the gradient comes from the
/// equivalent explicit softmax.
pub fn template_instance_loss(
    batch: &CosineBatch,
    cfg: &LossConfig,
    margins: Option<&PriorMarginTable>,
    alpha: f64,
) -> Result<LossEvaluation> {
    instance_loss(
        batch,
        cfg,
        margins,
        |_, p| adaptive_margin(p, alpha, cfg.gamma),
        Some(alpha),
    )
}

/// The explicit template-instance softmax with instance margins supplied by the caller
/// and treated as constants.
pub fn frozen_margin_loss(
    batch: &CosineBatch,
    cfg: &LossConfig,
    margins: Option<&PriorMarginTable>,
    instance_margins: &[f64],
) -> Result<LossEvaluation> {
    if instance_margins.len() != batch.batch_size() {
        return Err(Error::DimensionMismatch(format!(
            "{} instance margins for a batch of {}",
            instance_margins.len(),
            batch.batch_size()
        )));
    }
    instance_loss(batch, cfg, margins, |i, _| instance_margins[i], None)
}

fn instance_loss(
    batch: &CosineBatch,
    cfg: &LossConfig,
    margins: Option<&PriorMarginTable>,
    margin_of: impl Fn(usize, f64) -> f64,
    // `Some(alpha)` when the margin is α(1-p)^γ and may be differentiated.
    alpha: Option<f64>,
) -> Result<LossEvaluation> {
    cfg.validate()?;
    check_margins(batch, margins)?;
    let s = cfg.s;
    let terms = (0..batch.batch_size())
        .map(|i| {
            let y = batch.labels[i];
            let prior = prior_logits(batch.cosines.row(i), y, cfg, margins);
            let (log_p, log_q, prior_probs) = log_probabilities(&prior, y);
            let p = log_p.exp();
            let m_a = margin_of(i, p);

            let loss = lse([log_q - log_p + s * m_a, 0.0].into_iter());

            let mut logits = prior;
            logits[y] = s * batch.cosines[(i, y)] - s * m_a;
            let z = lse(logits.iter().copied());
            let pi_y = (logits[y] - z).exp();
            let mut grad: Vec<f64> = logits
                .iter()
                .enumerate()
                .map(|(j, &l)| s * ((l - z).exp() - if j == y { 1.0 } else { 0.0 }))
                .collect();

            if let (Some(alpha), MarginBackprop::Differentiated) = (alpha, cfg.margin_backprop) {
                // ∂L/∂mA · ∂mA/∂p · ∂p/∂cos_j. The product vanishes as p → 1
                // for every γ > 0, so p == 1 contributes nothing.
                if cfg.gamma != 0.0 && log_q.is_finite() {
                    let dl_dm = s * (1.0 - pi_y);
                    let dm_dp = -alpha * cfg.gamma * ((cfg.gamma - 1.0) * log_q).exp();
                    for (j, g) in grad.iter_mut().enumerate() {
                        let dp = s * p * (if j == y { 1.0 } else { 0.0 } - prior_probs[j]);
                        *g += dl_dm * dm_dp * dp;
                    }
                }
            }
            SampleTerms {
                loss,
                grad,
                p,
                margin: m_a,
            }
        })
        .collect();
    assemble(batch, terms)
}

/// Sigmoid ramp `α_max / (1 + exp(-ρ(iter/max_iter - 1/2)))`.
pub fn alpha_schedule(iter: usize, max_iter: usize, cfg: &LossConfig) -> Result<f64> {
    if max_iter == 0 {
        return Err(Error::InvalidParameter("max_iter must be positive".into()));
    }
    if iter == 0 || iter > max_iter {
        return Err(Error::InvalidParameter(format!(
            "iteration {iter} outside 1..={max_iter}"
        )));
    }
    let progress = iter as f64 / max_iter as f64;
    Ok(cfg.alpha_max / (1.0 + (-cfg.rho * (progress - 0.5)).exp()))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn batch(rows: &[Vec<f64>], labels: &[usize]) -> CosineBatch {
        CosineBatch::new(Matrix::from_rows(rows).unwrap(), labels.to_vec()).unwrap()
    }

    fn cfg(s: f64) -> LossConfig {
        LossConfig {
            s,
            ..LossConfig::default()
        }
    }

    #[test]
    fn am_softmax_hand_value() {
        let b = batch(&[vec![1.0, 0.0]], &[0]);
        let c = LossConfig {
            fixed_m: 0.0,
            ..cfg(1.0)
        };
        let e = am_softmax_loss(&b, &c).unwrap();
        let expected = -(1.0f64.exp() / (1.0f64.exp() + 1.0)).ln();
        assert!((e.mean - expected).abs() < 1e-15);
        assert!((e.mean - 0.31326).abs() < 1e-5);
    }

    #[test]
    fn estimated_probability_hand_value() {
        let b = batch(&[vec![1.0, 0.0]], &[0]);
        let m = PriorMarginTable::new(Matrix::from_rows(&[vec![0.0, 0.5], vec![0.5, 0.0]]).unwrap()).unwrap();
        let p = estimated_probability(&b, &cfg(1.0), &m).unwrap()[0];
        let expected = 1.0f64.exp() / (1.0f64.exp() + 0.5f64.exp());
        assert!((p - expected).abs() < 1e-15);
        assert!((p - 0.62246).abs() < 1e-5);
    }

    #[test]
    fn adaptive_margin_limits() {
        assert_eq!(adaptive_margin(1.0, 0.3, 2.0), 0.0);
        assert_eq!(adaptive_margin(0.0, 0.3, 2.0), 0.3);
        for p in [0.0, 0.2, 0.9, 1.0] {
            assert_eq!(adaptive_margin(p, 0.3, 0.0), 0.3);
        }
    }

    #[test]
    fn schedule_values() {
        let c = LossConfig {
            alpha_max: 0.4,
            ..LossConfig::default()
        };
        assert_eq!(alpha_schedule(500, 1000, &c).unwrap(), 0.2);
        let start = alpha_schedule(1, 1_000_000, &c).unwrap();
        assert!((start / 0.4 - 1.0 / (1.0 + 5f64.exp())).abs() < 1e-6);
        assert!((start / 0.4 - 0.00669).abs() < 1e-5);
        let end = alpha_schedule(1000, 1000, &c).unwrap();
        assert!((end / 0.4 - 0.99331).abs() < 1e-5);
        assert!(alpha_schedule(1, 0, &c).is_err());
        assert!(alpha_schedule(0, 10, &c).is_err());
        assert!(alpha_schedule(11, 10, &c).is_err());
    }

    #[test]
    fn batch_validation() {
        let m = Matrix::from_rows(&[vec![0.1, 0.2]]).unwrap();
        assert!(matches!(
            CosineBatch::new(m.clone(), vec![2]),
            Err(Error::InvalidLabel { label: 2, classes: 2 })
        ));
        assert!(CosineBatch::new(m, vec![0, 1]).is_err());
        let out = Matrix::from_rows(&[vec![1.5, 0.0]]).unwrap();
        assert!(CosineBatch::new(out, vec![0]).is_err());
    }

    #[test]
    fn margin_dimension_mismatch() {
        let b = batch(&[vec![0.1, 0.2, 0.3]], &[0]);
        let m = PriorMarginTable::zeros(2);
        assert!(matches!(
            template_loss_only(&b, &cfg(1.0), Some(&m)),
            Err(Error::DimensionMismatch(_))
        ));
        assert!(estimated_probability(&b, &cfg(1.0), &m).is_err());
    }

    #[test]
    fn boundary_cosines_stay_finite() {
        let b = batch(&[vec![1.0, -1.0, -1.0], vec![-1.0, 1.0, 1.0]], &[0, 0]);
        let m = PriorMarginTable::new(Matrix::from_fn(3, 3, |i, j| if i == j { 0.0 } else { 0.4 })).unwrap();
        for mode in [MarginBackprop::Detached, MarginBackprop::Differentiated] {
            let c = LossConfig {
                s: 64.0,
                margin_backprop: mode,
                ..LossConfig::default()
            };
            for e in [
                am_softmax_loss(&b, &c).unwrap(),
                template_loss_only(&b, &c, Some(&m)).unwrap(),
                template_instance_loss(&b, &c, Some(&m), 0.4).unwrap(),
            ] {
                assert!(e.mean.is_finite());
                assert!(e.grad.is_finite());
            }
        }
    }
}
