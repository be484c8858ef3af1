//! Full-network backpropagation against central finite differences.

use tiloss::affinity::PriorMarginTable;
use tiloss::loss::{frozen_margin_loss, CosineBatch, LossConfig, LossContext, LossKind, LossRegistry, MarginBackprop};
use tiloss::numeric::{Matrix, Prng};
use tiloss::trainer::ToyNetwork;

const STEP: f64 = 1e-5;

fn rel(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(1.0)
}

/// Network and batch with every cosine safely inside (-1, 1), so probes of
/// the unnormalized class weights stay valid.
fn setup(seed: u64, classes: usize) -> (ToyNetwork, Matrix, Vec<usize>, PriorMarginTable) {
    let mut rng = Prng::new(seed);
    let (net, x) = loop {
        let net = ToyNetwork::new(12, &[9, 7], 2, classes, &mut rng).unwrap();
        let x = Matrix::from_fn(16, 12, |_, _| rng.uniform());
        if net.forward(&x).unwrap().cosines.max_abs() < 0.999 {
            break (net, x);
        }
    };
    let labels = (0..16).map(|_| rng.below(classes)).collect();
    let margins = PriorMarginTable::new(Matrix::from_fn(classes, classes, |i, j| {
        if i == j {
            0.0
        } else {
            rng.range(0.0, 0.4)
        }
    }))
    .unwrap();
    (net, x, labels, margins)
}

fn check(kind: LossKind, mode: MarginBackprop, seed: u64) -> f64 {
    let (net, x, labels, margins) = setup(seed, 4);
    let cfg = LossConfig {
        s: 8.0,
        margin_backprop: mode,
        ..LossConfig::default()
    };
    let registry = LossRegistry::standard();
    let loss = registry.get(kind).unwrap();
    let ctx = LossContext {
        config: &cfg,
        margins: Some(&margins),
        alpha: 0.3,
    };
    let pass = net.forward(&x).unwrap();
    let batch = CosineBatch::new(pass.cosines.clone(), labels.clone()).unwrap();
    let base = loss.evaluate(&batch, &ctx).unwrap();
    let analytic = net.backward(&pass, &base.grad).unwrap().flatten();

    let frozen = kind == LossKind::TemplateInstance && mode == MarginBackprop::Detached;
    let value = |p: &[f64]| {
        let mut probe = net.clone();
        probe.set_parameters(p).unwrap();
        let cos = probe.forward(&x).unwrap().cosines;
        let b = CosineBatch::new(cos, labels.clone()).unwrap();
        if frozen {
            frozen_margin_loss(&b, &cfg, Some(&margins), &base.margin).unwrap().mean
        } else {
            loss.evaluate(&b, &ctx).unwrap().mean
        }
    };
    let params = net.parameters();
    let mut worst = 0.0f64;
    for k in 0..params.len() {
        let mut plus = params.clone();
        plus[k] += STEP;
        let mut minus = params.clone();
        minus[k] -= STEP;
        let numeric = (value(&plus) - value(&minus)) / (2.0 * STEP);
        worst = worst.max(rel(analytic[k], numeric));
    }
    worst
}

#[test]
fn every_parameter_gradient_matches_finite_differences() {
    for kind in LossKind::ALL {
        for mode in [MarginBackprop::Detached, MarginBackprop::Differentiated] {
            for seed in 0..2 {
                let err = check(kind, mode, seed);
                assert!(err < 1e-4, "{kind} {mode:?} seed {seed}: {err}");
            }
        }
    }
}
