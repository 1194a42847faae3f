//! Adversarial hypergraph fusion.
//!
//! Each modality's node representation yields a KNN hypergraph with one
//! hyperedge per node. Vertex aggregation maps node features to hyperedge
//! features; the CNN branch additionally passes through a trainable `Θ`. A
//! critic `D_H` scores hyperedge features (graph GAN branch = positive,
//! CNN branch = negative). Edge aggregation maps both back to nodes and sums
//! them into `F`, whose bilinear connectivity `sigmoid(F Fᵀ)` feeds the
//! classifier `C2`.

use rand::Rng;

use crate::config::Normalization;
use crate::error::{Error, Result};
use crate::impl_param_set;
use crate::linalg::{
    leaky_relu, leaky_relu_grad, row_mean, row_vec, sigmoid_gram, sigmoid_gram_backward,
    squared_distance, t_mul, Mat,
};
use crate::nn::{cross_entropy, xavier_uniform, Classifier, ParamSet};

/// Weight of the vertex-convolution term in the fusion objective.
pub const VER_WEIGHT: f64 = 0.1;

/// Node-by-hyperedge incidence with its degree diagonals.
#[derive(Clone, Debug, PartialEq)]
pub struct Hypergraph {
    pub incidence: Mat,
    /// Column sums (hyperedge sizes).
    pub edge_degree: Vec<f64>,
    /// Row sums (hyperedges per node).
    pub node_degree: Vec<f64>,
}

impl Hypergraph {
    pub fn from_incidence(incidence: Mat) -> Result<Self> {
        if incidence.iter().any(|&v| v != 0.0 && v != 1.0) {
            return Err(Error::InvalidArgument("incidence must be binary".into()));
        }
        let edge_degree: Vec<f64> = (0..incidence.ncols()).map(|e| incidence.column(e).sum()).collect();
        if let Some(e) = edge_degree.iter().position(|&d| d == 0.0) {
            return Err(Error::InvalidArgument(format!("hyperedge {e} is empty")));
        }
        let node_degree = (0..incidence.nrows()).map(|v| incidence.row(v).sum()).collect();
        Ok(Self {
            incidence,
            edge_degree,
            node_degree,
        })
    }

    pub fn n_nodes(&self) -> usize {
        self.incidence.nrows()
    }

    pub fn n_edges(&self) -> usize {
        self.incidence.ncols()
    }

    fn require_square(&self) -> Result<()> {
        if self.n_edges() != self.n_nodes() {
            return Err(Error::InvalidArgument(format!(
                "printed normalization needs as many hyperedges as nodes ({} vs {})",
                self.n_edges(),
                self.n_nodes()
            )));
        }
        Ok(())
    }

    /// Vertex aggregation operator (`E x N`).
    pub fn vertex_operator(&self, norm: Normalization) -> Result<Mat> {
        let inv_sqrt = |d: f64| if d > 0.0 { 1.0 / d.sqrt() } else { 0.0 };
        let h = &self.incidence;
        match norm {
            Normalization::Printed => {
                self.require_square()?;
                Ok(Mat::from_fn(self.n_edges(), self.n_nodes(), |e, v| {
                    inv_sqrt(self.edge_degree[e]) * h[(v, e)] * inv_sqrt(self.edge_degree[v])
                }))
            }
            Normalization::Standard => Ok(Mat::from_fn(self.n_edges(), self.n_nodes(), |e, v| {
                h[(v, e)] / self.edge_degree[e] * inv_sqrt(self.node_degree[v])
            })),
        }
    }

    /// Edge aggregation operator (`N x E`).
    pub fn edge_operator(&self, norm: Normalization) -> Result<Mat> {
        let inv_sqrt = |d: f64| if d > 0.0 { 1.0 / d.sqrt() } else { 0.0 };
        let h = &self.incidence;
        match norm {
            Normalization::Printed => {
                self.require_square()?;
                Ok(Mat::from_fn(self.n_nodes(), self.n_edges(), |v, e| {
                    inv_sqrt(self.node_degree[v]) * h[(v, e)] * inv_sqrt(self.node_degree[e])
                }))
            }
            Normalization::Standard => Ok(Mat::from_fn(self.n_nodes(), self.n_edges(), |v, e| {
                inv_sqrt(self.node_degree[v]) * h[(v, e)]
            })),
        }
    }
}

/// One hyperedge per node: the node itself plus its `k - 1` nearest
/// neighbors in Euclidean distance, ties broken by lower index.
pub fn build_hypergraph(rep: &Mat, k: usize) -> Result<Hypergraph> {
    let n = rep.nrows();
    if k == 0 || k > n {
        return Err(Error::InvalidArgument(format!("K = {k} out of range 1..={n}")));
    }
    if let Some((row, col)) = crate::linalg::first_non_finite(rep) {
        return Err(Error::NonFinite {
            field: "representation".into(),
            row,
            col,
        });
    }
    let rows: Vec<Vec<f64>> = (0..n).map(|i| row_vec(rep, i)).collect();
    let mut incidence = Mat::zeros(n, n);
    let mut order: Vec<(f64, usize)> = Vec::with_capacity(n);
    for center in 0..n {
        order.clear();
        order.extend(
            (0..n)
                .filter(|&v| v != center)
                .map(|v| (squared_distance(&rows[center], &rows[v]), v)),
        );
        order.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
        incidence[(center, center)] = 1.0;
        for &(_, v) in order.iter().take(k - 1) {
            incidence[(v, center)] = 1.0;
        }
    }
    Hypergraph::from_incidence(incidence)
}

pub fn vertex_aggregate(hg: &Hypergraph, z: &Mat, norm: Normalization) -> Result<Mat> {
    Ok(hg.vertex_operator(norm)? * z)
}

pub fn vertex_convolve(hg: &Hypergraph, r: &Mat, theta: &Mat, norm: Normalization) -> Result<Mat> {
    Ok(hg.vertex_operator(norm)? * r * theta)
}

pub fn edge_aggregate_fuse(
    h1: &Hypergraph,
    h2: &Hypergraph,
    z_h: &Mat,
    r_h: &Mat,
    norm: Normalization,
) -> Result<Mat> {
    Ok(h1.edge_operator(norm)? * z_h + h2.edge_operator(norm)? * r_h)
}

/// `sigmoid(F Fᵀ)`.
pub fn bilinear_connectivity(f: &Mat) -> Mat {
    sigmoid_gram(f)
}

/// Mean-pools the connectivity rows and applies `C2`.
pub fn classify_c2(classifier: &Classifier, conn: &Mat) -> Vec<f64> {
    classifier.forward(&row_mean(conn)).probs
}

/// Two-stage critic over hyperedge features `E x q`: a length-`E` filter
/// contracts the hyperedge axis (leaky ReLU), a length-`q` filter then
/// contracts the features.
#[derive(Clone, Debug, PartialEq)]
pub struct HyperedgeCritic {
    pub edge_filter: Mat,
    pub edge_bias: Mat,
    pub readout: Mat,
    pub readout_bias: Mat,
}

impl_param_set!(HyperedgeCritic { edge_filter, edge_bias, readout, readout_bias });

#[derive(Clone, Debug)]
pub struct HyperCriticTrace {
    input: Mat,
    pre: Mat,
    hidden: Mat,
    pub score: f64,
}

impl HyperedgeCritic {
    pub fn new<R: Rng>(e: usize, q: usize, rng: &mut R) -> Self {
        Self {
            edge_filter: xavier_uniform(e, 1, rng),
            edge_bias: Mat::zeros(1, 1),
            readout: xavier_uniform(q, 1, rng),
            readout_bias: Mat::zeros(1, 1),
        }
    }

    pub fn forward(&self, x: &Mat) -> HyperCriticTrace {
        let pre = t_mul(&self.edge_filter, &x).add_scalar(self.edge_bias[(0, 0)]);
        let hidden = pre.map(leaky_relu);
        let score = (&hidden * &self.readout)[(0, 0)] + self.readout_bias[(0, 0)];
        HyperCriticTrace {
            input: x.clone(),
            pre,
            hidden,
            score,
        }
    }

    pub fn backward(&self, trace: &HyperCriticTrace, d_score: f64, grad: &mut HyperedgeCritic) -> Mat {
        grad.readout += trace.hidden.transpose() * d_score;
        grad.readout_bias[(0, 0)] += d_score;
        let d_pre = Mat::from_fn(1, trace.pre.ncols(), |_, k| {
            leaky_relu_grad(trace.pre[(0, k)]) * self.readout[(k, 0)] * d_score
        });
        grad.edge_filter += &trace.input * d_pre.transpose();
        grad.edge_bias[(0, 0)] += d_pre.sum();
        &self.edge_filter * d_pre
    }

    pub fn score(&self, x: &Mat) -> f64 {
        self.forward(x).score
    }
}

pub fn discriminate_h(critic: &HyperedgeCritic, features: &Mat) -> Result<f64> {
    if features.nrows() != critic.edge_filter.nrows() || features.ncols() != critic.readout.nrows() {
        return Err(Error::Shape {
            field: "hyperedge features".into(),
            expected: format!("{}x{}", critic.edge_filter.nrows(), critic.readout.nrows()),
            found: format!("{}x{}", features.nrows(), features.ncols()),
        });
    }
    Ok(critic.score(features))
}

/// Trainable fusion parameters: `Θ`, the hyperedge critic and `C2`.
#[derive(Clone, Debug, PartialEq)]
pub struct FusionState {
    pub theta: Mat,
    pub critic: HyperedgeCritic,
    pub classifier: Classifier,
}

impl_param_set!(FusionState { theta, critic, classifier });

impl FusionState {
    pub fn new<R: Rng>(n: usize, q: usize, c2_hidden: usize, rng: &mut R) -> Self {
        Self {
            theta: xavier_uniform(q, q, rng),
            critic: HyperedgeCritic::new(n, q, rng),
            classifier: Classifier::new(n, c2_hidden, rng),
        }
    }
}

/// Precomputed aggregation operators of both hypergraphs.
#[derive(Clone, Debug)]
pub struct FusionOperators {
    pub vertex1: Mat,
    pub vertex2: Mat,
    pub edge1: Mat,
    pub edge2: Mat,
}

impl FusionOperators {
    pub fn new(h1: &Hypergraph, h2: &Hypergraph, norm: Normalization) -> Result<Self> {
        Ok(Self {
            vertex1: h1.vertex_operator(norm)?,
            vertex2: h2.vertex_operator(norm)?,
            edge1: h1.edge_operator(norm)?,
            edge2: h2.edge_operator(norm)?,
        })
    }
}

#[derive(Clone, Copy, Debug)]
pub struct FusionInput<'a> {
    /// Graph GAN latent `Ẑ`.
    pub z: &'a Mat,
    /// CNN autoencoder latent `R`.
    pub r: &'a Mat,
    pub ops: &'a FusionOperators,
    pub y: [f64; 2],
}

#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct AhfWeights {
    pub dh: f64,
    pub ver: f64,
    pub cls3: f64,
}

/// Components of the fusion objective.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct AhfLosses {
    /// `E[D_H(Ẑ_H)]`
    pub dh: f64,
    /// `-E[D_H(R_H)]`
    pub ver: f64,
    pub cls3: f64,
}

impl AhfLosses {
    /// `dh + 0.1 ver + cls3`
    pub fn total(&self) -> f64 {
        self.dh + VER_WEIGHT * self.ver + self.cls3
    }

    pub fn adversarial(&self) -> f64 {
        self.dh + VER_WEIGHT * self.ver
    }

    pub fn weighted(&self, w: &AhfWeights) -> f64 {
        w.dh * self.dh + w.ver * self.ver + w.cls3 * self.cls3
    }
}

/// Everything the fused forward pass produces for one subject.
#[derive(Clone, Debug)]
pub struct FusionOutput {
    pub z_h: Mat,
    pub r_h: Mat,
    pub fused: Mat,
    pub connectivity: Mat,
    pub probs: Vec<f64>,
}

/// Products that do not depend on any trainable parameter.
#[derive(Clone, Debug)]
pub struct FusionFixed {
    /// `Ẑ_H`
    pub z_h: Mat,
    /// Aggregated CNN latent before `Θ`.
    pub r_agg: Mat,
    /// Edge aggregation of `Ẑ_H`, the first term of `F`.
    pub graph_term: Mat,
}

impl FusionFixed {
    pub fn new(input: &FusionInput<'_>) -> Self {
        let z_h = &input.ops.vertex1 * input.z;
        let graph_term = &input.ops.edge1 * &z_h;
        Self {
            r_agg: &input.ops.vertex2 * input.r,
            z_h,
            graph_term,
        }
    }
}

impl FusionState {
    pub fn forward(&self, input: &FusionInput<'_>) -> FusionOutput {
        self.forward_fixed(input, &FusionFixed::new(input))
    }

    pub fn forward_fixed(&self, input: &FusionInput<'_>, fixed: &FusionFixed) -> FusionOutput {
        let r_h = &fixed.r_agg * &self.theta;
        let fused = &fixed.graph_term + &input.ops.edge2 * &r_h;
        let connectivity = bilinear_connectivity(&fused);
        let probs = classify_c2(&self.classifier, &connectivity);
        FusionOutput {
            z_h: fixed.z_h.clone(),
            r_h,
            fused,
            connectivity,
            probs,
        }
    }

    pub fn losses(&self, input: &FusionInput<'_>) -> AhfLosses {
        let out = self.forward(input);
        AhfLosses {
            dh: self.critic.score(&out.z_h),
            ver: -self.critic.score(&out.r_h),
            cls3: cross_entropy(&input.y, &out.probs).0,
        }
    }

    /// Gradient of `weights · losses` w.r.t. `Θ`, `D_H` and `C2`.
    pub fn loss_grads(&self, input: &FusionInput<'_>, w: &AhfWeights) -> (AhfLosses, FusionState) {
        self.loss_grads_fixed(input, &FusionFixed::new(input), w)
    }

    pub fn loss_grads_fixed(
        &self,
        input: &FusionInput<'_>,
        fixed: &FusionFixed,
        w: &AhfWeights,
    ) -> (AhfLosses, FusionState) {
        let mut grad = self.zeros_like();
        let mut losses = AhfLosses::default();
        let r_h = &fixed.r_agg * &self.theta;
        let mut d_rh = Mat::zeros(r_h.nrows(), r_h.ncols());

        if w.dh != 0.0 {
            let t = self.critic.forward(&fixed.z_h);
            losses.dh = t.score;
            self.critic.backward(&t, w.dh, &mut grad.critic);
        }
        if w.ver != 0.0 {
            let t = self.critic.forward(&r_h);
            losses.ver = -t.score;
            d_rh += self.critic.backward(&t, -w.ver, &mut grad.critic);
        }
        if w.cls3 != 0.0 {
            let fused = &fixed.graph_term + &input.ops.edge2 * &r_h;
            let conn = bilinear_connectivity(&fused);
            let trace = self.classifier.forward(&row_mean(&conn));
            let (l, d_p) = cross_entropy(&input.y, &trace.probs);
            losses.cls3 = l;
            let d_p: Vec<f64> = d_p.iter().map(|g| g * w.cls3).collect();
            let d_pooled = self.classifier.backward(&trace, &d_p, &mut grad.classifier);
            let n = conn.nrows() as f64;
            let d_conn = Mat::from_fn(conn.nrows(), conn.ncols(), |_, j| d_pooled[(0, j)] / n);
            let d_f = sigmoid_gram_backward(&fused, &conn, &d_conn);
            d_rh += t_mul(&input.ops.edge2, &d_f);
        }
        grad.theta += t_mul(&fixed.r_agg, &d_rh);
        (losses, grad)
    }
}

/// Batch fusion objective: expectations are means over subjects.
pub fn loss_ahf(
    critic: &HyperedgeCritic,
    z_h: &[Mat],
    r_h: &[Mat],
    y: &[[f64; 2]],
    probs: &[Vec<f64>],
) -> AhfLosses {
    let n = z_h.len() as f64;
    AhfLosses {
        dh: z_h.iter().map(|x| critic.score(x)).sum::<f64>() / n,
        ver: -r_h.iter().map(|x| critic.score(x)).sum::<f64>() / r_h.len() as f64,
        cls3: y
            .iter()
            .zip(probs)
            .map(|(y, p)| cross_entropy(y, p).0)
            .sum::<f64>()
            / y.len() as f64,
    }
}
