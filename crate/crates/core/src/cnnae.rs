//! Graph autoencoder over a precomputed MRI feature vector.
//!
//! The vector is spread uniformly over the ROIs and diffused along the
//! structural graph, encoded by a two-layer GCN, and decoded node by node
//! before mean pooling back to a single vector.

use rand::Rng;

use crate::error::{Error, Result};
use crate::graphgan::mean_pool_backward;
use crate::impl_param_set;
use crate::linalg::{row_mean, Mat};
use crate::nn::{bce_loss, cross_entropy, Activation, Classifier, GcnStack, ParamSet};

#[derive(Clone, Debug, PartialEq)]
pub struct CnnAe {
    /// `S`: c -> hidden (tanh) -> q (linear), graph convolutions.
    pub encoder: GcnStack,
    /// `S'`: q -> hidden (tanh) -> c (sigmoid), applied per node.
    pub decoder: GcnStack,
}

impl_param_set!(CnnAe { encoder, decoder });

/// `Â^steps · (1_N vᵀ / N)`.
pub fn distribute_features(v: &[f64], a_hat: &Mat, steps: usize) -> Result<Mat> {
    let n = a_hat.nrows();
    if a_hat.ncols() != n {
        return Err(Error::Shape {
            field: "normalized adjacency".into(),
            expected: format!("{n}x{n}"),
            found: format!("{}x{}", a_hat.nrows(), a_hat.ncols()),
        });
    }
    if let Some(j) = v.iter().position(|x| !x.is_finite()) {
        return Err(Error::NonFinite {
            field: "feature_vector".into(),
            row: 0,
            col: j,
        });
    }
    let mut x = Mat::from_fn(n, v.len(), |_, j| v[j] / n as f64);
    for _ in 0..steps {
        x = a_hat * x;
    }
    Ok(x)
}

#[derive(Clone, Copy, Debug)]
pub struct CnnInput<'a> {
    pub a_hat: &'a Mat,
    /// Distributed feature matrix `N x c`.
    pub features: &'a Mat,
    /// Feature vector rescaled into [0, 1], `1 x c`.
    pub target: &'a Mat,
    pub y: [f64; 2],
}

#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct CnnWeights {
    pub rec2: f64,
    pub cls2: f64,
}

#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct CnnLosses {
    pub rec2: f64,
    pub cls2: f64,
}

impl CnnLosses {
    pub fn weighted(&self, w: &CnnWeights) -> f64 {
        w.rec2 * self.rec2 + w.cls2 * self.cls2
    }
}

impl CnnAe {
    pub fn new<R: Rng>(c: usize, q: usize, encoder_hidden: usize, decoder_hidden: usize, rng: &mut R) -> Self {
        Self {
            encoder: GcnStack::new(c, encoder_hidden, q, rng),
            decoder: GcnStack::new(q, decoder_hidden, c, rng),
        }
    }

    pub fn encode_v(&self, a_hat: &Mat, x_v: &Mat) -> Mat {
        self.encoder
            .forward(Some(a_hat), x_v, Activation::Tanh, Activation::Identity)
            .output()
            .clone()
    }

    /// Per-node decoding followed by mean pooling; returns `1 x c`.
    pub fn decode_v(&self, r: &Mat) -> Mat {
        row_mean(
            self.decoder
                .forward(None, r, Activation::Tanh, Activation::Sigmoid)
                .output(),
        )
    }

    pub fn losses(&self, classifier: &Classifier, input: &CnnInput<'_>) -> CnnLosses {
        let r = self.encode_v(input.a_hat, input.features);
        CnnLosses {
            rec2: bce_loss(input.target, &self.decode_v(&r)).0,
            cls2: cross_entropy(&input.y, &crate::graphgan::classify(classifier, &r)).0,
        }
    }

    /// Gradients of `weights · losses` for the autoencoder and the shared classifier.
    pub fn loss_grads(
        &self,
        classifier: &Classifier,
        input: &CnnInput<'_>,
        w: &CnnWeights,
    ) -> (CnnLosses, CnnAe, Classifier) {
        let mut grad = self.zeros_like();
        let mut grad_cls = classifier.zeros_like();
        let mut losses = CnnLosses::default();
        let enc = self
            .encoder
            .forward(Some(input.a_hat), input.features, Activation::Tanh, Activation::Identity);
        let r = enc.output();
        let n = r.nrows();
        let mut d_r = Mat::zeros(n, r.ncols());

        if w.rec2 != 0.0 {
            let dec = self.decoder.forward(None, r, Activation::Tanh, Activation::Sigmoid);
            let v_rec = row_mean(dec.output());
            let (l, d_v) = bce_loss(input.target, &v_rec);
            losses.rec2 = l;
            let d_nodes = mean_pool_backward(&(d_v * w.rec2), n);
            d_r += self.decoder.backward(
                None,
                Activation::Tanh,
                Activation::Sigmoid,
                &dec,
                &d_nodes,
                &mut grad.decoder,
            );
        }

        if w.cls2 != 0.0 {
            let trace = classifier.forward(&row_mean(r));
            let (l, d_p) = cross_entropy(&input.y, &trace.probs);
            losses.cls2 = l;
            let d_p: Vec<f64> = d_p.iter().map(|g| g * w.cls2).collect();
            let d_pooled = classifier.backward(&trace, &d_p, &mut grad_cls);
            d_r += mean_pool_backward(&d_pooled, n);
        }

        self.encoder.backward(
            Some(input.a_hat),
            Activation::Tanh,
            Activation::Identity,
            &enc,
            &d_r,
            &mut grad.encoder,
        );
        (losses, grad, grad_cls)
    }
}

/// Negated mean BCE between the rescaled feature vector and its reconstruction.
pub fn loss_rec2(v: &Mat, v_rec: &Mat) -> Result<f64> {
    if v.iter().any(|x| !(0.0..=1.0).contains(x)) {
        return Err(Error::InvalidArgument(
            "feature vector target must be rescaled into [0, 1]".into(),
        ));
    }
    Ok(bce_loss(v, v_rec).0)
}

pub fn loss_cls2(y: &[f64; 2], probs: &[f64]) -> f64 {
    cross_entropy(y, probs).0
}
