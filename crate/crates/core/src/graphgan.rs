//! Distribution-guided graph GAN: GCN encoder/decoder, inner-product
//! adjacency decoder, latent critic and the shared graph classifier.
//!
//! Loss conventions: the critic minimizes `-E[D(fake)] + E[D(real)]` and the
//! encoder minimizes `E[D(fake)]`. Reconstruction and classification terms are
//! negated cross-entropies, so every trained objective is minimized.

use rand::Rng;

use crate::error::{Error, Result};
use crate::impl_param_set;
use crate::linalg::{leaky_relu, leaky_relu_grad, row_mean, sigmoid_gram, sigmoid_gram_backward, t_mul, Mat};
use crate::nn::{bce_loss, cross_entropy, xavier_uniform, Activation, Classifier, GcnStack, ParamSet};

/// Two-stage critic over an `N x q` latent: a shared `q x 1` filter scores
/// each node (leaky ReLU), then an `N x 1` filter collapses the nodes.
#[derive(Clone, Debug, PartialEq)]
pub struct LatentCritic {
    pub node_filter: Mat,
    pub node_bias: Mat,
    pub readout: Mat,
    pub readout_bias: Mat,
}

impl_param_set!(LatentCritic { node_filter, node_bias, readout, readout_bias });

#[derive(Clone, Debug)]
pub struct CriticTrace {
    input: Mat,
    pre: Mat,
    hidden: Mat,
    pub score: f64,
}

impl LatentCritic {
    pub fn new<R: Rng>(q: usize, n: usize, rng: &mut R) -> Self {
        Self {
            node_filter: xavier_uniform(q, 1, rng),
            node_bias: Mat::zeros(1, 1),
            readout: xavier_uniform(n, 1, rng),
            readout_bias: Mat::zeros(1, 1),
        }
    }

    pub fn zeros(q: usize, n: usize) -> Self {
        Self {
            node_filter: Mat::zeros(q, 1),
            node_bias: Mat::zeros(1, 1),
            readout: Mat::zeros(n, 1),
            readout_bias: Mat::zeros(1, 1),
        }
    }

    pub fn forward(&self, z: &Mat) -> CriticTrace {
        let pre = (z * &self.node_filter).add_scalar(self.node_bias[(0, 0)]);
        let hidden = pre.map(leaky_relu);
        let score = hidden.dot(&self.readout) + self.readout_bias[(0, 0)];
        CriticTrace {
            input: z.clone(),
            pre,
            hidden,
            score,
        }
    }

    pub fn backward(&self, trace: &CriticTrace, d_score: f64, grad: &mut LatentCritic) -> Mat {
        grad.readout += &trace.hidden * d_score;
        grad.readout_bias[(0, 0)] += d_score;
        let d_pre = trace
            .pre
            .zip_map(&self.readout, |p, w| leaky_relu_grad(p) * w * d_score);
        grad.node_filter += t_mul(&trace.input, &d_pre);
        grad.node_bias[(0, 0)] += d_pre.sum();
        &d_pre * self.node_filter.transpose()
    }

    pub fn score(&self, z: &Mat) -> f64 {
        self.forward(z).score
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct GraphGan {
    /// `G`: d -> hidden (tanh) -> q (linear)
    pub encoder: GcnStack,
    /// `G'`: q -> hidden (tanh) -> d (sigmoid)
    pub decoder: GcnStack,
    pub critic: LatentCritic,
    /// `C1`, shared with the CNN autoencoder branch.
    pub classifier: Classifier,
}

impl_param_set!(GraphGan { encoder, decoder, critic, classifier });

/// One subject's inputs to the graph GAN.
#[derive(Clone, Copy, Debug)]
pub struct GraphInput<'a> {
    pub adjacency: &'a Mat,
    pub a_hat: &'a Mat,
    pub features: &'a Mat,
    /// Node features rescaled into [0, 1], the reconstruction target.
    pub target: &'a Mat,
    pub y: [f64; 2],
}

#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct GanWeights {
    pub rec1: f64,
    pub adv_g: f64,
    pub dz: f64,
    pub cls1: f64,
}

#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct GanLosses {
    pub rec1: f64,
    pub g: f64,
    pub dz: f64,
    pub cls1: f64,
}

impl GanLosses {
    pub fn weighted(&self, w: &GanWeights) -> f64 {
        w.rec1 * self.rec1 + w.adv_g * self.g + w.dz * self.dz + w.cls1 * self.cls1
    }
}

impl GraphGan {
    pub fn new<R: Rng>(
        n: usize,
        d: usize,
        q: usize,
        encoder_hidden: usize,
        decoder_hidden: usize,
        c1_hidden: usize,
        rng: &mut R,
    ) -> Self {
        Self {
            encoder: GcnStack::new(d, encoder_hidden, q, rng),
            decoder: GcnStack::new(q, decoder_hidden, d, rng),
            critic: LatentCritic::new(q, n, rng),
            classifier: Classifier::new(q, c1_hidden, rng),
        }
    }

    pub fn encode(&self, a_hat: &Mat, x: &Mat) -> Mat {
        self.encoder
            .forward(Some(a_hat), x, Activation::Tanh, Activation::Identity)
            .output()
            .clone()
    }

    pub fn decode_features(&self, a_hat: &Mat, z: &Mat) -> Mat {
        self.decoder
            .forward(Some(a_hat), z, Activation::Tanh, Activation::Sigmoid)
            .output()
            .clone()
    }

    /// Forward pass of every loss on one subject; `real` is an `N x q` prior draw.
    pub fn losses(&self, input: &GraphInput<'_>, real: &Mat) -> GanLosses {
        let z = self.encode(input.a_hat, input.features);
        let x_rec = self.decode_features(input.a_hat, &z);
        let a_rec = decode_adjacency(&z);
        let fake = self.critic.score(&z);
        GanLosses {
            rec1: bce_loss(input.target, &x_rec).0 + bce_loss(input.adjacency, &a_rec).0,
            g: fake,
            dz: -fake + self.critic.score(real),
            cls1: cross_entropy(&input.y, &classify(&self.classifier, &z)).0,
        }
    }

    /// Gradient of `weights · losses` w.r.t. every parameter. Terms with zero
    /// weight are skipped and reported as 0.
    pub fn loss_grads(
        &self,
        input: &GraphInput<'_>,
        real: &Mat,
        w: &GanWeights,
    ) -> (GanLosses, GraphGan) {
        let mut grad = self.zeros_like();
        let mut losses = GanLosses::default();
        let enc = self.encoder.forward(
            Some(input.a_hat),
            input.features,
            Activation::Tanh,
            Activation::Identity,
        );
        let z = enc.output();
        let mut d_z = Mat::zeros(z.nrows(), z.ncols());

        if w.rec1 != 0.0 {
            let dec = self
                .decoder
                .forward(Some(input.a_hat), z, Activation::Tanh, Activation::Sigmoid);
            let (lx, d_xrec) = bce_loss(input.target, dec.output());
            let a_rec = decode_adjacency(z);
            let (la, d_arec) = bce_loss(input.adjacency, &a_rec);
            losses.rec1 = lx + la;
            d_z += self.decoder.backward(
                Some(input.a_hat),
                Activation::Tanh,
                Activation::Sigmoid,
                &dec,
                &(d_xrec * w.rec1),
                &mut grad.decoder,
            );
            d_z += sigmoid_gram_backward(z, &a_rec, &(d_arec * w.rec1));
        }

        if w.adv_g != 0.0 || w.dz != 0.0 {
            let fake = self.critic.forward(z);
            losses.g = fake.score;
            let d_fake = w.adv_g - w.dz;
            if d_fake != 0.0 {
                d_z += self.critic.backward(&fake, d_fake, &mut grad.critic);
            }
            if w.dz != 0.0 {
                let real_trace = self.critic.forward(real);
                losses.dz = -fake.score + real_trace.score;
                self.critic.backward(&real_trace, w.dz, &mut grad.critic);
            }
            if w.adv_g == 0.0 {
                losses.g = 0.0;
            }
        }

        if w.cls1 != 0.0 {
            let trace = self.classifier.forward(&row_mean(z));
            let (l, d_p) = cross_entropy(&input.y, &trace.probs);
            losses.cls1 = l;
            let d_p: Vec<f64> = d_p.iter().map(|g| g * w.cls1).collect();
            let d_pooled = self.classifier.backward(&trace, &d_p, &mut grad.classifier);
            d_z += mean_pool_backward(&d_pooled, z.nrows());
        }

        self.encoder.backward(
            Some(input.a_hat),
            Activation::Tanh,
            Activation::Identity,
            &enc,
            &d_z,
            &mut grad.encoder,
        );
        (losses, grad)
    }
}

/// `A' = sigmoid(Z Zᵀ)`.
pub fn decode_adjacency(z: &Mat) -> Mat {
    sigmoid_gram(z)
}

pub fn discriminate_z(critic: &LatentCritic, z: &Mat) -> Result<f64> {
    if z.ncols() != critic.node_filter.nrows() || z.nrows() != critic.readout.nrows() {
        return Err(Error::Shape {
            field: "latent".into(),
            expected: format!("{}x{}", critic.readout.nrows(), critic.node_filter.nrows()),
            found: format!("{}x{}", z.nrows(), z.ncols()),
        });
    }
    Ok(critic.score(z))
}

fn mean_score(critic: &LatentCritic, batch: &[Mat]) -> f64 {
    batch.iter().map(|z| critic.score(z)).sum::<f64>() / batch.len() as f64
}

/// `-mean D(fake) + mean D(real)`.
pub fn loss_dz(critic: &LatentCritic, fake: &[Mat], real: &[Mat]) -> f64 {
    -mean_score(critic, fake) + mean_score(critic, real)
}

/// `mean D(fake)`.
pub fn loss_g(critic: &LatentCritic, fake: &[Mat]) -> f64 {
    mean_score(critic, fake)
}

fn check_unit_interval(field: &str, m: &Mat) -> Result<()> {
    for i in 0..m.nrows() {
        for j in 0..m.ncols() {
            let v = m[(i, j)];
            if !(0.0..=1.0).contains(&v) {
                return Err(Error::InvalidArgument(format!(
                    "{field} entry ({i}, {j}) = {v} lies outside [0, 1]"
                )));
            }
        }
    }
    Ok(())
}

/// Feature plus adjacency reconstruction loss (sum of the two mean BCE terms).
pub fn loss_rec1(x: &Mat, x_rec: &Mat, a: &Mat, a_rec: &Mat) -> Result<f64> {
    check_unit_interval("feature target", x)?;
    check_unit_interval("adjacency target", a)?;
    Ok(bce_loss(x, x_rec).0 + bce_loss(a, a_rec).0)
}

/// Mean-pools node representations and applies the classifier.
pub fn classify(classifier: &Classifier, rep: &Mat) -> Vec<f64> {
    classifier.forward(&row_mean(rep)).probs
}

pub fn loss_cls(y: &[f64; 2], probs: &[f64]) -> f64 {
    cross_entropy(y, probs).0
}

pub(crate) fn mean_pool_backward(d_pooled: &Mat, n: usize) -> Mat {
    let scale = 1.0 / n as f64;
    Mat::from_fn(n, d_pooled.ncols(), |_, j| d_pooled[(0, j)] * scale)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::normalized_adjacency;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn zero_features_encode_to_zero() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let mut gan = GraphGan::new(5, 4, 3, 6, 6, 4, &mut rng);
        gan.encoder.hidden.bias.fill(0.0);
        gan.encoder.output.bias.fill(0.0);
        let a_hat = normalized_adjacency(&Mat::zeros(5, 5));
        let z = gan.encode(&a_hat, &Mat::zeros(5, 4));
        assert_eq!(z, Mat::zeros(5, 3));
    }

    #[test]
    fn zero_latent_decodes_to_half() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let gan = GraphGan::new(5, 4, 3, 6, 6, 4, &mut rng);
        let a_hat = normalized_adjacency(&Mat::zeros(5, 5));
        let x = gan.decode_features(&a_hat, &Mat::zeros(5, 3));
        assert!(x.iter().all(|&v| v == 0.5));
        assert!(decode_adjacency(&Mat::zeros(5, 3)).iter().all(|&v| v == 0.5));
    }

    #[test]
    fn decoded_features_stay_in_open_unit_interval() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let gan = GraphGan::new(6, 5, 3, 8, 8, 4, &mut rng);
        let a_hat = normalized_adjacency(&Mat::zeros(6, 6));
        let z = Mat::from_fn(6, 3, |i, j| (i as f64 - 2.0) * (j as f64 + 1.0));
        let x = gan.decode_features(&a_hat, &z);
        assert!(x.iter().all(|&v| v > 0.0 && v < 1.0));
    }

    #[test]
    fn replicated_unit_row_gives_sigmoid_one() {
        let mut z = Mat::zeros(4, 3);
        z.column_mut(0).fill(1.0);
        let a = decode_adjacency(&z);
        assert!(a.iter().all(|&v| (v - 0.731_058_578_630_004_9).abs() < 1e-12));
        assert_eq!(a, a.transpose());
    }

    #[test]
    fn critic_zero_input_and_readout_linearity() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let mut critic = LatentCritic::new(3, 4, &mut rng);
        assert_eq!(critic.score(&Mat::zeros(4, 3)), 0.0);
        let z = Mat::from_fn(4, 3, |i, j| (i + 2 * j) as f64 * 0.3 - 0.5);
        let s1 = critic.score(&z);
        critic.readout *= 2.0;
        assert!((critic.score(&z) - 2.0 * s1).abs() < 1e-12);
    }

    #[test]
    fn critic_loss_examples() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let critic = LatentCritic::new(2, 3, &mut rng);
        let batch = vec![Mat::from_element(3, 2, 0.4), Mat::from_element(3, 2, -1.0)];
        assert_eq!(loss_dz(&critic, &batch, &batch), 0.0);
    }

    #[test]
    fn rec1_rejects_targets_outside_unit_interval() {
        let x = Mat::from_element(2, 2, 1.5);
        let half = Mat::from_element(2, 2, 0.5);
        assert!(loss_rec1(&x, &half, &Mat::zeros(2, 2), &half).is_err());
    }

    #[test]
    fn wrong_latent_shape_is_rejected() {
        let critic = LatentCritic::zeros(3, 4);
        assert!(discriminate_z(&critic, &Mat::zeros(4, 2)).is_err());
    }
}
