//! MLP with an L2-normalized feature layer and a cosine classification head.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::numeric::{Matrix, Prng};

pub const LEAKY_SLOPE: f64 = 0.01;

/// Guard for normalizing near-zero vectors.
pub const NORM_EPS: f64 = 1e-12;

/// Dense layer `z = W x + b`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DenseLayer {
    /// `out × in`.
    pub weights: Matrix,
    pub bias: Vec<f64>,
}

impl DenseLayer {
    pub fn inputs(&self) -> usize {
        self.weights.cols()
    }

    pub fn outputs(&self) -> usize {
        self.weights.rows()
    }
}

/// Fixed input standardization `(x - mean) · scale`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct InputNorm {
    pub mean: Vec<f64>,
    pub scale: f64,
}

/// Inputs are standardized first; hidden layers use leaky ReLU; the last
/// layer is linear and produces the raw feature vector.
#[derive(Debug, Clone, PartialEq)]
pub struct ToyNetwork {
    input_norm: Option<InputNorm>,
    layers: Vec<DenseLayer>,
    /// `n × d`, unit-norm rows.
    class_weights: Matrix,
}

/// Intermediate values kept for the backward pass.
#[derive(Debug, Clone)]
pub struct ForwardPass {
    /// Input to each layer, `B × in`.
    inputs: Vec<Matrix>,
    /// Pre-activation of each layer, `B × out`.
    pre: Vec<Matrix>,
    /// Raw features (last layer output), `B × d`.
    pub features: Matrix,
    norms: Vec<f64>,
    /// Normalized features, `B × d`.
    pub unit: Matrix,
    /// `B × n`.
    pub cosines: Matrix,
}

/// Parameter gradients, shaped like the network.
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    pub layers: Vec<DenseLayer>,
    pub class_weights: Matrix,
}

impl Gradients {
    /// Flattened in [`ToyNetwork::parameters`] order.
    pub fn flatten(&self) -> Vec<f64> {
        let mut out = Vec::new();
        for l in &self.layers {
            out.extend_from_slice(l.weights.as_slice());
            out.extend_from_slice(&l.bias);
        }
        out.extend_from_slice(self.class_weights.as_slice());
        out
    }
}

fn leaky(z: f64) -> f64 {
    if z > 0.0 {
        z
    } else {
        LEAKY_SLOPE * z
    }
}

fn leaky_grad(z: f64) -> f64 {
    if z > 0.0 {
        1.0
    } else {
        LEAKY_SLOPE
    }
}

/// `x · Wᵀ + b` for a batch `x` (`B × in`).
fn affine(x: &Matrix, layer: &DenseLayer) -> Matrix {
    let (b, out) = (x.rows(), layer.outputs());
    let mut z = Matrix::zeros(b, out);
    for i in 0..b {
        let xi = x.row(i);
        let zi = z.row_mut(i);
        for (o, zo) in zi.iter_mut().enumerate() {
            let w = layer.weights.row(o);
            *zo = layer.bias[o] + w.iter().zip(xi).map(|(a, c)| a * c).sum::<f64>();
        }
    }
    z
}

fn normalize_rows(m: &mut Matrix) {
    for i in 0..m.rows() {
        let row = m.row_mut(i);
        let norm = row.iter().map(|v| v * v).sum::<f64>().sqrt().max(NORM_EPS);
        row.iter_mut().for_each(|v| *v /= norm);
    }
}

impl ToyNetwork {
    /// `input → hidden… → feature_dim`, then `classes` cosine outputs.
    ///
    /// Dense weights are uniform in `±sqrt(6 / fan_in)`, biases zero; class
    /// weights are normalized Gaussian rows.
    pub fn new(input_dim: usize, hidden: &[usize], feature_dim: usize, classes: usize, rng: &mut Prng) -> Result<Self> {
        let mut sizes = vec![input_dim];
        sizes.extend_from_slice(hidden);
        sizes.push(feature_dim);
        if sizes.contains(&0) || classes < 2 {
            return Err(Error::InvalidParameter(format!(
                "invalid network shape {sizes:?} with {classes} classes"
            )));
        }
        let layers = sizes
            .windows(2)
            .map(|w| {
                let bound = (6.0 / w[0] as f64).sqrt();
                DenseLayer {
                    weights: Matrix::from_fn(w[1], w[0], |_, _| rng.range(-bound, bound)),
                    bias: vec![0.0; w[1]],
                }
            })
            .collect();
        let mut class_weights = Matrix::from_fn(classes, feature_dim, |_, _| rng.normal());
        normalize_rows(&mut class_weights);
        Ok(ToyNetwork {
            input_norm: None,
            layers,
            class_weights,
        })
    }

    /// Builds a network from explicit parameters; class weight rows are
    /// normalized.
    pub fn from_parts(layers: Vec<DenseLayer>, mut class_weights: Matrix) -> Result<Self> {
        if layers.is_empty() {
            return Err(Error::InvalidParameter("network needs at least one layer".into()));
        }
        for (k, l) in layers.iter().enumerate() {
            if l.bias.len() != l.outputs() {
                return Err(Error::DimensionMismatch(format!("layer {k} bias length")));
            }
            if k > 0 && layers[k - 1].outputs() != l.inputs() {
                return Err(Error::DimensionMismatch(format!("layer {k} input size")));
            }
        }
        if class_weights.cols() != layers[layers.len() - 1].outputs() || class_weights.rows() < 2 {
            return Err(Error::DimensionMismatch("class weights do not match features".into()));
        }
        normalize_rows(&mut class_weights);
        Ok(ToyNetwork {
            input_norm: None,
            layers,
            class_weights,
        })
    }

    /// Standardize inputs before the first layer. Not a trainable parameter.
    pub fn set_input_norm(&mut self, norm: InputNorm) -> Result<()> {
        if norm.mean.len() != self.input_dim() || !norm.scale.is_finite() || norm.scale <= 0.0 {
            return Err(Error::InvalidParameter(
                "input normalization does not fit the network".into(),
            ));
        }
        self.input_norm = Some(norm);
        Ok(())
    }

    /// Sets every bias so that the layer's pre-activations have zero mean
    /// over `x`, layer by layer. Keeps the initial features spread around
    /// the origin instead of sharing one dominant direction.
    pub fn center_biases(&mut self, x: &Matrix) -> Result<()> {
        if x.rows() == 0 {
            return Err(Error::EmptyDataset);
        }
        for k in 0..self.layers.len() {
            let pass = self.forward(x)?;
            let z = &pass.pre[k];
            for o in 0..z.cols() {
                let mean = (0..z.rows()).map(|i| z[(i, o)]).sum::<f64>() / z.rows() as f64;
                self.layers[k].bias[o] -= mean;
            }
        }
        Ok(())
    }

    pub fn input_norm(&self) -> Option<&InputNorm> {
        self.input_norm.as_ref()
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].inputs()
    }

    pub fn feature_dim(&self) -> usize {
        self.class_weights.cols()
    }

    pub fn classes(&self) -> usize {
        self.class_weights.rows()
    }

    pub fn layers(&self) -> &[DenseLayer] {
        &self.layers
    }

    pub fn class_weights(&self) -> &Matrix {
        &self.class_weights
    }

    pub fn forward(&self, x: &Matrix) -> Result<ForwardPass> {
        if x.cols() != self.input_dim() {
            return Err(Error::DimensionMismatch(format!(
                "input has {} columns, network expects {}",
                x.cols(),
                self.input_dim()
            )));
        }
        let last = self.layers.len() - 1;
        let mut inputs = Vec::with_capacity(self.layers.len());
        let mut pre = Vec::with_capacity(self.layers.len());
        let mut act = x.clone();
        if let Some(norm) = &self.input_norm {
            for i in 0..act.rows() {
                for (v, m) in act.row_mut(i).iter_mut().zip(&norm.mean) {
                    *v = (*v - m) * norm.scale;
                }
            }
        }
        for (k, layer) in self.layers.iter().enumerate() {
            let z = affine(&act, layer);
            let next = if k == last {
                z.clone()
            } else {
                let mut a = z.clone();
                a.as_mut_slice().iter_mut().for_each(|v| *v = leaky(*v));
                a
            };
            inputs.push(act);
            pre.push(z);
            act = next;
        }
        let features = act;
        let norms: Vec<f64> = (0..features.rows())
            .map(|i| features.row(i).iter().map(|v| v * v).sum::<f64>().sqrt())
            .collect();
        let mut unit = features.clone();
        for (i, &n) in norms.iter().enumerate() {
            let n = n.max(NORM_EPS);
            unit.row_mut(i).iter_mut().for_each(|v| *v /= n);
        }
        let cosines = unit.matmul(&self.class_weights.transpose())?;
        Ok(ForwardPass {
            inputs,
            pre,
            features,
            norms,
            unit,
            cosines,
        })
    }

    /// Gradients of a scalar loss given `∂loss/∂cosines`.
    pub fn backward(&self, pass: &ForwardPass, dcos: &Matrix) -> Result<Gradients> {
        let (b, n) = pass.cosines.shape();
        if dcos.shape() != (b, n) {
            return Err(Error::DimensionMismatch("cosine gradient shape".into()));
        }
        let d = self.feature_dim();
        // cos = unit · Wᵀ.
        let dw = dcos.transpose().matmul(&pass.unit)?;
        let dunit = dcos.matmul(&self.class_weights)?;
        // unit = f / |f|: ∂/∂f = (I - u uᵀ) / |f|.
        let mut delta = Matrix::zeros(b, d);
        for i in 0..b {
            let u = pass.unit.row(i);
            let g = dunit.row(i);
            let norm = pass.norms[i];
            let row = delta.row_mut(i);
            if norm > NORM_EPS {
                let proj: f64 = u.iter().zip(g).map(|(a, c)| a * c).sum();
                for k in 0..d {
                    row[k] = (g[k] - proj * u[k]) / norm;
                }
            } else {
                for k in 0..d {
                    row[k] = g[k] / NORM_EPS;
                }
            }
        }
        let last = self.layers.len() - 1;
        let mut grads = vec![
            DenseLayer {
                weights: Matrix::zeros(0, 0),
                bias: Vec::new(),
            };
            self.layers.len()
        ];
        for k in (0..=last).rev() {
            let layer = &self.layers[k];
            if k != last {
                for (v, z) in delta.as_mut_slice().iter_mut().zip(pass.pre[k].as_slice()) {
                    *v *= leaky_grad(*z);
                }
            }
            let input = &pass.inputs[k];
            let (outs, ins) = (layer.outputs(), layer.inputs());
            let mut gw = Matrix::zeros(outs, ins);
            let mut gb = vec![0.0; outs];
            for i in 0..b {
                let x = input.row(i);
                for (o, &dz) in delta.row(i).iter().enumerate() {
                    if dz == 0.0 {
                        continue;
                    }
                    gb[o] += dz;
                    for (w, &xv) in gw.row_mut(o).iter_mut().zip(x) {
                        *w += dz * xv;
                    }
                }
            }
            if k > 0 {
                let mut prev = Matrix::zeros(b, ins);
                for i in 0..b {
                    let out = prev.row_mut(i);
                    for (o, &dz) in delta.row(i).iter().enumerate() {
                        if dz == 0.0 {
                            continue;
                        }
                        for (p, &w) in out.iter_mut().zip(layer.weights.row(o)) {
                            *p += dz * w;
                        }
                    }
                }
                delta = prev;
            }
            grads[k] = DenseLayer { weights: gw, bias: gb };
        }
        Ok(Gradients {
            layers: grads,
            class_weights: dw,
        })
    }

    pub fn parameter_count(&self) -> usize {
        self.layers
            .iter()
            .map(|l| l.weights.as_slice().len() + l.bias.len())
            .sum::<usize>()
            + self.class_weights.as_slice().len()
    }

    /// Layer weights and biases in order, then the class weights.
    pub fn parameters(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.parameter_count());
        for l in &self.layers {
            out.extend_from_slice(l.weights.as_slice());
            out.extend_from_slice(&l.bias);
        }
        out.extend_from_slice(self.class_weights.as_slice());
        out
    }

    /// 1 for dense weights, 0 for biases and class weights, in
    /// [`ToyNetwork::parameters`] order.
    pub fn decay_mask(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.parameter_count());
        for l in &self.layers {
            out.extend(std::iter::repeat_n(1.0, l.weights.as_slice().len()));
            out.extend(std::iter::repeat_n(0.0, l.bias.len()));
        }
        out.extend(std::iter::repeat_n(0.0, self.class_weights.as_slice().len()));
        out
    }

    /// Inverse of [`ToyNetwork::parameters`]. Class weights are taken as
    /// given, without renormalization.
    pub fn set_parameters(&mut self, values: &[f64]) -> Result<()> {
        if values.len() != self.parameter_count() {
            return Err(Error::DimensionMismatch(format!(
                "{} parameters supplied, network has {}",
                values.len(),
                self.parameter_count()
            )));
        }
        let mut rest = values;
        for l in &mut self.layers {
            let (w, tail) = rest.split_at(l.weights.as_slice().len());
            l.weights.as_mut_slice().copy_from_slice(w);
            let (bias, tail) = tail.split_at(l.bias.len());
            l.bias.copy_from_slice(bias);
            rest = tail;
        }
        self.class_weights.as_mut_slice().copy_from_slice(rest);
        Ok(())
    }

    /// Projects every class weight row back onto the unit sphere.
    pub fn renormalize_class_weights(&mut self) {
        normalize_rows(&mut self.class_weights);
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn shapes_and_unit_outputs() {
        let mut rng = Prng::new(1);
        let net = ToyNetwork::new(6, &[5, 4], 2, 3, &mut rng).unwrap();
        assert_eq!(net.parameter_count(), 6 * 5 + 5 + 5 * 4 + 4 + 4 * 2 + 2 + 3 * 2);
        let x = Matrix::from_fn(7, 6, |i, j| ((i * 6 + j) as f64).sin());
        let pass = net.forward(&x).unwrap();
        assert_eq!(pass.cosines.shape(), (7, 3));
        for i in 0..7 {
            let n: f64 = pass.unit.row(i).iter().map(|v| v * v).sum();
            assert!((n - 1.0).abs() < 1e-12);
        }
        assert!(pass.cosines.max_abs() <= 1.0 + 1e-9);
        for j in 0..3 {
            let n: f64 = net.class_weights().row(j).iter().map(|v| v * v).sum();
            assert!((n - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn parameters_round_trip() {
        let mut rng = Prng::new(2);
        let mut net = ToyNetwork::new(3, &[4], 2, 2, &mut rng).unwrap();
        let p = net.parameters();
        let mut q = p.clone();
        q[0] += 1.0;
        net.set_parameters(&q).unwrap();
        assert_eq!(net.parameters(), q);
        assert!(net.set_parameters(&p[1..]).is_err());
    }

    #[test]
    fn zero_feature_is_guarded() {
        let layer = DenseLayer {
            weights: Matrix::zeros(2, 2),
            bias: vec![0.0; 2],
        };
        let net = ToyNetwork::from_parts(vec![layer], Matrix::identity(2)).unwrap();
        let pass = net.forward(&Matrix::zeros(1, 2)).unwrap();
        assert_eq!(pass.cosines.as_slice(), &[0.0, 0.0]);
        let g = net
            .backward(&pass, &Matrix::from_rows(&[vec![1.0, -1.0]]).unwrap())
            .unwrap();
        assert!(g.flatten().iter().all(|v| v.is_finite()));
    }
}
