use std::fmt;

use ndarray::{Array1, Array2, ArrayView2, Axis};
use rand::distributions::{Distribution, Uniform};
use rand::Rng;

use super::{Matrix, Vector};
use crate::{Result, ScrError};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Activation {
    Relu,
    Identity,
}

impl Activation {
    pub fn tag(self) -> &'static str {
        match self {
            Activation::Relu => "relu",
            Activation::Identity => "identity",
        }
    }

    pub fn from_tag(tag: &str) -> Option<Self> {
        match tag {
            "relu" => Some(Activation::Relu),
            "identity" => Some(Activation::Identity),
            _ => None,
        }
    }
}

impl fmt::Display for Activation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.tag())
    }
}

/// `y = activation(x Wᵀ + b)` applied row-wise to a batch.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseLayer {
    weights: Matrix,
    bias: Vector,
    activation: Activation,
}

impl DenseLayer {
    pub fn new(weights: Matrix, bias: Vector, activation: Activation) -> Result<Self> {
        if weights.nrows() == 0 || weights.ncols() == 0 {
            return Err(ScrError::contract("layer dims must be > 0"));
        }
        if bias.len() != weights.nrows() {
            return Err(ScrError::contract(format!(
                "bias length {} does not match out_dim {}",
                bias.len(),
                weights.nrows()
            )));
        }
        // Contiguous standard layout is relied upon by flat parameter views.
        let weights = if weights.is_standard_layout() {
            weights
        } else {
            weights.as_standard_layout().to_owned()
        };
        Ok(Self {
            weights,
            bias,
            activation,
        })
    }

    /// Glorot-uniform weights, zero bias.
    pub fn glorot<R: Rng + ?Sized>(
        in_dim: usize,
        out_dim: usize,
        activation: Activation,
        rng: &mut R,
    ) -> Self {
        let limit = (6.0 / (in_dim + out_dim) as f64).sqrt();
        let dist = Uniform::new_inclusive(-limit, limit);
        let weights = Array2::from_shape_fn((out_dim, in_dim), |_| dist.sample(rng));
        Self {
            weights,
            bias: Array1::zeros(out_dim),
            activation,
        }
    }

    pub fn in_dim(&self) -> usize {
        self.weights.ncols()
    }

    pub fn out_dim(&self) -> usize {
        self.weights.nrows()
    }

    pub fn weights(&self) -> &Matrix {
        &self.weights
    }

    pub fn bias(&self) -> &Vector {
        &self.bias
    }

    pub fn activation(&self) -> Activation {
        self.activation
    }

    pub fn param_count(&self) -> usize {
        self.weights.len() + self.bias.len()
    }

    pub(crate) fn weights_slice_mut(&mut self) -> &mut [f64] {
        self.weights
            .as_slice_mut()
            .expect("layer weights are kept in standard layout")
    }

    pub(crate) fn bias_slice_mut(&mut self) -> &mut [f64] {
        self.bias.as_slice_mut().expect("bias is contiguous")
    }
}

/// Per-layer activations of one forward pass, consumed by [`Mlp::backward`].
#[derive(Debug, Clone)]
pub struct ForwardCache {
    input: Matrix,
    pre: Vec<Matrix>,
    post: Vec<Matrix>,
    version: u64,
}

impl ForwardCache {
    pub fn depth(&self) -> usize {
        self.pre.len()
    }

    pub fn batch_size(&self) -> usize {
        self.input.nrows()
    }

    pub fn pre_activations(&self) -> &[Matrix] {
        &self.pre
    }

    pub fn post_activations(&self) -> &[Matrix] {
        &self.post
    }

    pub fn output(&self) -> &Matrix {
        self.post.last().expect("cache depth >= 1")
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LayerGrad {
    pub weights: Matrix,
    pub bias: Vector,
}

/// Parameter gradients of an [`Mlp`], layer by layer.
#[derive(Debug, Clone, PartialEq)]
pub struct MlpGrads {
    pub layers: Vec<LayerGrad>,
}

impl MlpGrads {
    pub fn zeros_like(net: &Mlp) -> Self {
        Self {
            layers: net
                .layers
                .iter()
                .map(|l| LayerGrad {
                    weights: Array2::zeros(l.weights.raw_dim()),
                    bias: Array1::zeros(l.bias.len()),
                })
                .collect(),
        }
    }

    /// Flattened in the same order as [`Mlp::flat_params`].
    pub fn flatten(&self) -> Vec<f64> {
        let mut out = Vec::new();
        for l in &self.layers {
            out.extend(l.weights.iter().copied());
            out.extend(l.bias.iter().copied());
        }
        out
    }

    pub fn all_finite(&self) -> bool {
        self.layers
            .iter()
            .all(|l| l.weights.iter().all(|v| v.is_finite()) && l.bias.iter().all(|v| v.is_finite()))
    }

    /// Adds `other` into `self` elementwise.
    pub fn accumulate(&mut self, other: &MlpGrads) -> Result<()> {
        if self.layers.len() != other.layers.len() {
            return Err(ScrError::contract("gradient layer counts differ"));
        }
        for (a, b) in self.layers.iter_mut().zip(&other.layers) {
            if a.weights.raw_dim() != b.weights.raw_dim() || a.bias.len() != b.bias.len() {
                return Err(ScrError::contract("gradient shapes differ"));
            }
            a.weights += &b.weights;
            a.bias += &b.bias;
        }
        Ok(())
    }
}

/// A feed-forward stack of [`DenseLayer`]s.
#[derive(Debug, Clone)]
pub struct Mlp {
    layers: Vec<DenseLayer>,
    // Bumped on every parameter mutation so stale caches are detectable.
    version: u64,
}

impl PartialEq for Mlp {
    fn eq(&self, other: &Self) -> bool {
        self.layers == other.layers
    }
}

impl Mlp {
    pub fn new(layers: Vec<DenseLayer>) -> Result<Self> {
        if layers.is_empty() {
            return Err(ScrError::contract("an Mlp needs at least one layer"));
        }
        for (k, pair) in layers.windows(2).enumerate() {
            if pair[0].out_dim() != pair[1].in_dim() {
                return Err(ScrError::contract(format!(
                    "layer {k} out_dim {} does not chain into layer {} in_dim {}",
                    pair[0].out_dim(),
                    k + 1,
                    pair[1].in_dim()
                )));
            }
            if pair[0].activation == Activation::Identity {
                return Err(ScrError::contract(format!(
                    "identity activation is only allowed on the final layer (found on layer {k})"
                )));
            }
        }
        Ok(Self { layers, version: 0 })
    }

    /// Glorot-initialised network through `dims` (`dims.len() - 1` layers). Hidden
    /// layers use ReLU; the last layer uses `final_activation`.
    pub fn glorot<R: Rng + ?Sized>(
        dims: &[usize],
        final_activation: Activation,
        rng: &mut R,
    ) -> Result<Self> {
        if dims.len() < 2 || dims.contains(&0) {
            return Err(ScrError::contract(format!("invalid layer dims {dims:?}")));
        }
        let n = dims.len() - 1;
        let layers = (0..n)
            .map(|k| {
                let act = if k + 1 == n {
                    final_activation
                } else {
                    Activation::Relu
                };
                DenseLayer::glorot(dims[k], dims[k + 1], act, rng)
            })
            .collect();
        Self::new(layers)
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].in_dim()
    }

    pub fn output_dim(&self) -> usize {
        self.layers[self.layers.len() - 1].out_dim()
    }

    pub fn layers(&self) -> &[DenseLayer] {
        &self.layers
    }

    pub fn depth(&self) -> usize {
        self.layers.len()
    }

    pub fn param_count(&self) -> usize {
        self.layers.iter().map(DenseLayer::param_count).sum()
    }

    pub(crate) fn layers_mut(&mut self) -> &mut [DenseLayer] {
        self.version = self.version.wrapping_add(1);
        &mut self.layers
    }

    /// Stacks `self` then `next` into one network.
    pub fn concat(&self, next: &Mlp) -> Result<Mlp> {
        let mut layers = self.layers.clone();
        layers.extend(next.layers.iter().cloned());
        Mlp::new(layers)
    }

    /// Parameters flattened layer by layer: weights row-major, then bias.
    pub fn flat_params(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.param_count());
        for l in &self.layers {
            out.extend(l.weights.iter().copied());
            out.extend(l.bias.iter().copied());
        }
        out
    }

    pub fn set_flat_params(&mut self, params: &[f64]) -> Result<()> {
        if params.len() != self.param_count() {
            return Err(ScrError::contract(format!(
                "expected {} parameters, got {}",
                self.param_count(),
                params.len()
            )));
        }
        let mut offset = 0;
        for l in self.layers_mut() {
            let nw = l.weights.len();
            l.weights_slice_mut()
                .copy_from_slice(&params[offset..offset + nw]);
            offset += nw;
            let nb = l.bias.len();
            l.bias_slice_mut()
                .copy_from_slice(&params[offset..offset + nb]);
            offset += nb;
        }
        Ok(())
    }

    /// Runs the batch through every layer, keeping what backward needs.
    pub fn forward(&self, batch: ArrayView2<f64>) -> Result<(Matrix, ForwardCache)> {
        if batch.ncols() != self.input_dim() {
            return Err(ScrError::contract(format!(
                "batch has {} columns, network expects {}",
                batch.ncols(),
                self.input_dim()
            )));
        }
        if let Some(pos) = batch.iter().position(|v| !v.is_finite()) {
            return Err(ScrError::numeric(
                "input",
                format!(
                    "non-finite entry at row {}, column {}",
                    pos / batch.ncols(),
                    pos % batch.ncols()
                ),
            ));
        }
        let input = batch.to_owned();
        let mut pre = Vec::with_capacity(self.layers.len());
        let mut post: Vec<Matrix> = Vec::with_capacity(self.layers.len());
        for (k, layer) in self.layers.iter().enumerate() {
            let x = if k == 0 { &input } else { &post[k - 1] };
            let mut z = x.dot(&layer.weights.t());
            z += &layer.bias;
            if z.iter().any(|v| !v.is_finite()) {
                return Err(ScrError::numeric(
                    format!("layer {k}"),
                    "non-finite pre-activation",
                ));
            }
            let a = match layer.activation {
                Activation::Relu => z.mapv(|v| if v > 0.0 { v } else { 0.0 }),
                Activation::Identity => z.clone(),
            };
            pre.push(z);
            post.push(a);
        }
        let output = post.last().expect("at least one layer").clone();
        Ok((
            output,
            ForwardCache {
                input,
                pre,
                post,
                version: self.version,
            },
        ))
    }

    /// Forward pass without keeping the cache.
    pub fn predict(&self, batch: ArrayView2<f64>) -> Result<Matrix> {
        self.forward(batch).map(|(out, _)| out)
    }

    /// Chain rule through the cached pass. ReLU's derivative at exactly 0 is 0.
    pub fn backward(
        &self,
        cache: &ForwardCache,
        upstream: ArrayView2<f64>,
    ) -> Result<(MlpGrads, Matrix)> {
        self.check_cache(cache)?;
        let out = cache.output();
        if upstream.raw_dim() != out.raw_dim() {
            return Err(ScrError::contract(format!(
                "upstream gradient shape {:?} does not match output shape {:?}",
                upstream.shape(),
                out.shape()
            )));
        }
        let mut delta = upstream.to_owned();
        let mut grads = Vec::with_capacity(self.layers.len());
        for k in (0..self.layers.len()).rev() {
            let layer = &self.layers[k];
            if layer.activation == Activation::Relu {
                delta.zip_mut_with(&cache.pre[k], |d, &z| {
                    if z <= 0.0 {
                        *d = 0.0;
                    }
                });
            }
            let x = if k == 0 { &cache.input } else { &cache.post[k - 1] };
            let weights = delta.t().dot(x);
            let bias = delta.sum_axis(Axis(0));
            grads.push(LayerGrad { weights, bias });
            delta = delta.dot(&layer.weights);
        }
        grads.reverse();
        Ok((MlpGrads { layers: grads }, delta))
    }

    fn check_cache(&self, cache: &ForwardCache) -> Result<()> {
        if cache.version != self.version {
            return Err(ScrError::contract(
                "forward cache is stale: parameters changed since it was produced",
            ));
        }
        if cache.pre.len() != self.layers.len() || cache.post.len() != self.layers.len() {
            return Err(ScrError::contract(format!(
                "cache depth {} does not match layer count {}",
                cache.pre.len(),
                self.layers.len()
            )));
        }
        if cache.input.ncols() != self.input_dim() {
            return Err(ScrError::contract("cache input width does not match network"));
        }
        let b = cache.input.nrows();
        for (k, (layer, z)) in self.layers.iter().zip(&cache.pre).enumerate() {
            if z.nrows() != b || z.ncols() != layer.out_dim() {
                return Err(ScrError::contract(format!(
                    "cache entry for layer {k} has shape {:?}",
                    z.shape()
                )));
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nncore::grad_check;
    use ndarray::array;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn random_batch(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> Matrix {
        let d = Uniform::new(-1.0, 1.0);
        Array2::from_shape_fn((rows, cols), |_| d.sample(rng))
    }

    #[test]
    fn identity_layer_passes_input_through() {
        let layer = DenseLayer::new(Array2::eye(2), Array1::zeros(2), Activation::Identity).unwrap();
        let net = Mlp::new(vec![layer]).unwrap();
        let out = net.predict(array![[1.0, 2.0]].view()).unwrap();
        assert_eq!(out, array![[1.0, 2.0]]);
    }

    #[test]
    fn relu_clamps_negatives() {
        let layer = DenseLayer::new(Array2::eye(2), Array1::zeros(2), Activation::Relu).unwrap();
        let net = Mlp::new(vec![layer]).unwrap();
        let out = net.predict(array![[-3.0, 5.0]].view()).unwrap();
        assert_eq!(out, array![[0.0, 5.0]]);
    }

    #[test]
    fn zero_weights_give_bias_chain() {
        let l1 = DenseLayer::new(Array2::zeros((3, 2)), array![1.0, -2.0, 0.5], Activation::Relu).unwrap();
        let l2 = DenseLayer::new(Array2::zeros((1, 3)), array![0.25], Activation::Identity).unwrap();
        let net = Mlp::new(vec![l1, l2]).unwrap();
        let out = net.predict(array![[9.0, -4.0], [0.0, 1.0]].view()).unwrap();
        assert_eq!(out, array![[0.25], [0.25]]);
    }

    #[test]
    fn rejects_bad_shapes_and_non_finite_input() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let net = Mlp::glorot(&[3, 4, 1], Activation::Identity, &mut rng).unwrap();
        assert!(matches!(
            net.forward(Array2::zeros((2, 2)).view()),
            Err(ScrError::Contract(_))
        ));
        let mut x = Array2::zeros((2, 3));
        x[[1, 2]] = f64::NAN;
        assert!(matches!(net.forward(x.view()), Err(ScrError::Numeric { .. })));
        // Dims that do not chain.
        let a = DenseLayer::glorot(3, 4, Activation::Relu, &mut rng);
        let b = DenseLayer::glorot(5, 1, Activation::Identity, &mut rng);
        assert!(Mlp::new(vec![a, b]).is_err());
        // Identity before the final layer.
        let a = DenseLayer::glorot(3, 4, Activation::Identity, &mut rng);
        let b = DenseLayer::glorot(4, 1, Activation::Identity, &mut rng);
        assert!(Mlp::new(vec![a, b]).is_err());
    }

    #[test]
    fn non_finite_weights_name_the_layer() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let mut net = Mlp::glorot(&[2, 3, 1], Activation::Identity, &mut rng).unwrap();
        let mut p = net.flat_params();
        let idx = net.layers()[0].param_count();
        p[idx] = f64::INFINITY;
        net.set_flat_params(&p).unwrap();
        match net.forward(array![[1.0, 1.0]].view()) {
            Err(ScrError::Numeric { location, .. }) => assert_eq!(location, "layer 1"),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn linear_layer_weight_gradient_is_g_transpose_x() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let net = Mlp::glorot(&[4, 3], Activation::Identity, &mut rng).unwrap();
        let x = random_batch(&mut rng, 5, 4);
        let g = random_batch(&mut rng, 5, 3);
        let (_, cache) = net.forward(x.view()).unwrap();
        let (grads, dx) = net.backward(&cache, g.view()).unwrap();
        assert_eq!(grads.layers[0].weights, g.t().dot(&x));
        assert_eq!(dx, g.dot(net.layers()[0].weights()));

        // Loss <G, Wx + b> has gradient G^T x; compare with finite differences.
        let point = net.flat_params();
        let err = grad_check(
            |p: &[f64]| {
                let mut n = net.clone();
                n.set_flat_params(p)?;
                let (y, cache) = n.forward(x.view())?;
                let (gr, _) = n.backward(&cache, g.view())?;
                Ok(((&y * &g).sum(), gr.flatten()))
            },
            &point,
            1e-5,
        )
        .unwrap();
        assert!(err < 1e-6, "relative error {err}");
    }

    #[test]
    fn zero_upstream_gives_zero_gradients() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let net = Mlp::glorot(&[5, 6, 6, 2], Activation::Identity, &mut rng).unwrap();
        let x = random_batch(&mut rng, 3, 5);
        let (_, cache) = net.forward(x.view()).unwrap();
        let (grads, dx) = net.backward(&cache, Array2::zeros((3, 2)).view()).unwrap();
        assert!(grads.flatten().iter().all(|&v| v == 0.0));
        assert!(dx.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn dead_relu_unit_gets_no_weight_gradient() {
        // Unit 0 has pre-activation -1 for every input in the batch.
        let w = array![[0.0, 0.0], [1.0, 1.0]];
        let l1 = DenseLayer::new(w, array![-1.0, 0.0], Activation::Relu).unwrap();
        let l2 = DenseLayer::new(array![[1.0, 1.0]], array![0.0], Activation::Identity).unwrap();
        let net = Mlp::new(vec![l1, l2]).unwrap();
        let x = array![[0.3, 0.7], [2.0, -0.5]];
        let (_, cache) = net.forward(x.view()).unwrap();
        let (grads, _) = net.backward(&cache, Array2::ones((2, 1)).view()).unwrap();
        assert_eq!(grads.layers[0].weights.row(0).to_vec(), vec![0.0, 0.0]);
        assert_eq!(grads.layers[0].bias[0], 0.0);
        assert!(grads.layers[0].weights.row(1).iter().any(|&v| v != 0.0));
    }

    #[test]
    fn stale_or_mismatched_cache_is_rejected() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let mut net = Mlp::glorot(&[3, 4, 1], Activation::Identity, &mut rng).unwrap();
        let other = Mlp::glorot(&[3, 5, 5, 1], Activation::Identity, &mut rng).unwrap();
        let x = random_batch(&mut rng, 2, 3);
        let (_, cache) = net.forward(x.view()).unwrap();
        assert!(matches!(
            other.backward(&cache, Array2::zeros((2, 1)).view()),
            Err(ScrError::Contract(_))
        ));
        assert!(matches!(
            net.backward(&cache, Array2::zeros((3, 1)).view()),
            Err(ScrError::Contract(_))
        ));
        let p = net.flat_params();
        net.set_flat_params(&p).unwrap();
        assert!(matches!(
            net.backward(&cache, Array2::zeros((2, 1)).view()),
            Err(ScrError::Contract(_))
        ));
    }

    #[test]
    fn forward_is_bit_reproducible() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let net = Mlp::glorot(&[7, 16, 16, 3], Activation::Identity, &mut rng).unwrap();
        let x = random_batch(&mut rng, 9, 7);
        let a = net.predict(x.view()).unwrap();
        let b = net.predict(x.view()).unwrap();
        assert!(a.iter().zip(b.iter()).all(|(p, q)| p.to_bits() == q.to_bits()));
    }

    #[test]
    fn glorot_respects_bounds() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let layer = DenseLayer::glorot(10, 20, Activation::Relu, &mut rng);
        let limit = (6.0f64 / 30.0).sqrt();
        assert!(layer.weights().iter().all(|w| w.abs() <= limit));
        assert!(layer.bias().iter().all(|&b| b == 0.0));
    }

    #[test]
    fn stacked_gradient_matches_concatenated_network() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let enc = Mlp::glorot(&[6, 8, 8, 8, 8], Activation::Relu, &mut rng).unwrap();
        let proj = Mlp::glorot(&[8, 8, 4], Activation::Identity, &mut rng).unwrap();
        let joined = enc.concat(&proj).unwrap();
        let x = random_batch(&mut rng, 5, 6);
        let g = random_batch(&mut rng, 5, 4);

        let (h, c_enc) = enc.forward(x.view()).unwrap();
        let (y1, c_proj) = proj.forward(h.view()).unwrap();
        let (g_proj, dh) = proj.backward(&c_proj, g.view()).unwrap();
        let (g_enc, dx1) = enc.backward(&c_enc, dh.view()).unwrap();

        let (y2, c_join) = joined.forward(x.view()).unwrap();
        let (g_join, dx2) = joined.backward(&c_join, g.view()).unwrap();

        assert_eq!(y1, y2);
        assert_eq!(dx1, dx2);
        let mut stacked = g_enc.flatten();
        stacked.extend(g_proj.flatten());
        assert_eq!(stacked, g_join.flatten());
    }
}
