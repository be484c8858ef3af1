//! Finite-difference verification of the analytic loss gradients.

use serde::Serialize;

use super::{
    frozen_margin_loss, CosineBatch, LossConfig, LossContext, LossEvaluation, LossKind, LossRegistry, MarginBackprop,
};
use crate::affinity::PriorMarginTable;
use crate::error::{Error, Result};
use crate::numeric::{Matrix, Prng};

/// Largest acceptable relative error.
pub const GRADCHECK_THRESHOLD: f64 = 1e-5;

/// Central-difference step.
const STEP: f64 = 1e-5;

/// Random cosines stay this far inside `[-1, 1]` so both probes are valid.
const COSINE_BOUND: f64 = 0.99;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GradCheckReport {
    pub op: LossKind,
    pub mode: MarginBackprop,
    pub batch_size: usize,
    pub n: usize,
    pub max_rel_error: f64,
    pub seed: u64,
}

impl GradCheckReport {
    pub fn passed(&self) -> bool {
        self.max_rel_error < GRADCHECK_THRESHOLD
    }
}

/// Largest `|a - b| / max(|a|, |b|, 1)` over paired entries.
pub fn max_relative_error(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y).abs() / x.abs().max(y.abs()).max(1.0))
        .fold(0.0, f64::max)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GradCheckOp {
    pub kind: LossKind,
    pub mode: MarginBackprop,
    pub batch_size: usize,
    pub n: usize,
    pub batches: usize,
    /// Added to one analytic gradient entry to prove the harness can fail.
    pub corrupt: Option<f64>,
}

fn random_margins(rng: &mut Prng, n: usize) -> Result<PriorMarginTable> {
    PriorMarginTable::new(Matrix::from_fn(
        n,
        n,
        |i, j| {
            if i == j {
                0.0
            } else {
                rng.range(0.0, 0.5)
            }
        },
    ))
}

fn random_batch(rng: &mut Prng, b: usize, n: usize) -> Result<CosineBatch> {
    let cosines = Matrix::from_fn(b, n, |_, _| rng.range(-COSINE_BOUND, COSINE_BOUND));
    let labels = (0..b).map(|_| rng.below(n)).collect();
    CosineBatch::new(cosines, labels)
}

/// Compares analytic gradients with central differences on random batches.
///
/// In detached mode the reference is the loss with every instance margin
/// frozen at its unperturbed value; in differentiated mode it is the full
/// loss with margins recomputed at each probe.
pub fn gradient_check(op: &GradCheckOp, cfg: &LossConfig, seed: u64) -> Result<GradCheckReport> {
    if op.batch_size == 0 || op.batches == 0 {
        return Err(Error::InvalidParameter("gradient check needs a nonempty batch".into()));
    }
    let cfg = LossConfig {
        margin_backprop: op.mode,
        ..cfg.clone()
    };
    let registry = LossRegistry::standard();
    let loss = registry.get(op.kind).expect("standard registry has every kind");
    let mut rng = Prng::new(seed);
    let mut worst = 0.0f64;
    for _ in 0..op.batches {
        let margins = random_margins(&mut rng, op.n)?;
        let batch = random_batch(&mut rng, op.batch_size, op.n)?;
        let alpha = rng.range(0.0, 0.5);
        let ctx = LossContext {
            config: &cfg,
            margins: Some(&margins),
            alpha,
        };
        let base = loss.evaluate(&batch, &ctx)?;
        let frozen = op.kind == LossKind::TemplateInstance && op.mode == MarginBackprop::Detached;
        let probe = |cos: Matrix| -> Result<f64> {
            let b = batch.with_cosines(cos)?;
            let e: LossEvaluation = if frozen {
                frozen_margin_loss(&b, &cfg, Some(&margins), &base.margin)?
            } else {
                loss.evaluate(&b, &ctx)?
            };
            Ok(e.mean)
        };
        let mut numeric = Vec::with_capacity(op.batch_size * op.n);
        for k in 0..op.batch_size * op.n {
            let mut plus = batch.cosines().clone();
            plus.as_mut_slice()[k] += STEP;
            let mut minus = batch.cosines().clone();
            minus.as_mut_slice()[k] -= STEP;
            numeric.push((probe(plus)? - probe(minus)?) / (2.0 * STEP));
        }
        let mut analytic = base.grad.into_vec();
        if let Some(delta) = op.corrupt {
            analytic[0] += delta;
        }
        worst = worst.max(max_relative_error(&analytic, &numeric));
    }
    Ok(GradCheckReport {
        op: op.kind,
        mode: op.mode,
        batch_size: op.batch_size,
        n: op.n,
        max_rel_error: worst,
        seed,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn op(kind: LossKind, mode: MarginBackprop, corrupt: Option<f64>) -> GradCheckOp {
        GradCheckOp {
            kind,
            mode,
            batch_size: 4,
            n: 5,
            batches: 3,
            corrupt,
        }
    }

    #[test]
    fn every_op_passes_in_both_modes() {
        for kind in LossKind::ALL {
            for mode in [MarginBackprop::Detached, MarginBackprop::Differentiated] {
                let r = gradient_check(&op(kind, mode, None), &LossConfig::default(), 11).unwrap();
                assert!(r.passed(), "{kind} {mode:?}: {}", r.max_rel_error);
            }
        }
    }

    #[test]
    fn corruption_is_detected() {
        let r = gradient_check(
            &op(LossKind::Am, MarginBackprop::Detached, Some(1e-3)),
            &LossConfig::default(),
            11,
        )
        .unwrap();
        assert!(!r.passed());
    }

    #[test]
    fn modes_disagree_on_the_other_reference() {
        // The detached gradient is not the gradient of the full expression.
        let cfg = LossConfig {
            s: 2.0,
            margin_backprop: MarginBackprop::Detached,
            ..LossConfig::default()
        };
        let mut rng = Prng::new(5);
        let margins = random_margins(&mut rng, 4).unwrap();
        let batch = random_batch(&mut rng, 3, 4).unwrap();
        let detached = crate::loss::template_instance_loss(&batch, &cfg, Some(&margins), 0.4).unwrap();
        let diff_cfg = LossConfig {
            margin_backprop: MarginBackprop::Differentiated,
            ..cfg
        };
        let full = crate::loss::template_instance_loss(&batch, &diff_cfg, Some(&margins), 0.4).unwrap();
        assert_eq!(detached.mean, full.mean);
        assert!(detached.grad.max_abs_diff(&full.grad) > 1e-6);
    }

    #[test]
    fn relative_error_has_unit_floor() {
        assert_eq!(max_relative_error(&[1e-9], &[2e-9]), 1e-9);
        assert_eq!(max_relative_error(&[4.0], &[2.0]), 0.5);
    }
}
