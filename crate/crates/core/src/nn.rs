//! Layers with explicit forward traces and hand-written backward passes.
//!
//! Every trainable block implements [`ParamSet`], which exposes its tensors by
//! dotted name. Gradients are stored in a value of the same type as the
//! parameters, so optimizers, clipping and checkpointing work uniformly over
//! any block.

use rand::Rng;

use crate::linalg::{add_row_bias, column_sums, softmax, t_mul, Mat};

fn join(prefix: &str, field: &str) -> String {
    if prefix.is_empty() {
        field.to_string()
    } else {
        format!("{prefix}.{field}")
    }
}

pub trait ParamSet: Clone {
    fn visit<'a>(&'a self, prefix: &str, out: &mut Vec<(String, &'a Mat)>);
    fn visit_mut<'a>(&'a mut self, prefix: &str, out: &mut Vec<(String, &'a mut Mat)>);

    fn named_tensors(&self) -> Vec<(String, &Mat)> {
        let mut out = Vec::new();
        self.visit("", &mut out);
        out
    }

    fn tensors_mut(&mut self) -> Vec<&mut Mat> {
        let mut out = Vec::new();
        self.visit_mut("", &mut out);
        out.into_iter().map(|(_, t)| t).collect()
    }

    fn zeros_like(&self) -> Self {
        let mut z = self.clone();
        for t in z.tensors_mut() {
            t.fill(0.0);
        }
        z
    }

    fn num_params(&self) -> usize {
        self.named_tensors().iter().map(|(_, t)| t.len()).sum()
    }

    /// `self += scale * other`
    fn add_scaled(&mut self, other: &Self, scale: f64) {
        let others: Vec<Mat> = other.named_tensors().into_iter().map(|(_, t)| t.clone()).collect();
        for (t, o) in self.tensors_mut().into_iter().zip(others.iter()) {
            *t += o * scale;
        }
    }

    fn scale(&mut self, factor: f64) {
        for t in self.tensors_mut() {
            *t *= factor;
        }
    }

    fn is_zero(&self) -> bool {
        let mut all = Vec::new();
        self.visit_tensors(&mut all);
        all.iter().all(|t| t.as_slice().iter().all(|&v| v == 0.0))
    }

    fn first_non_finite(&self) -> Option<String> {
        let mut all = Vec::new();
        self.visit_tensors(&mut all);
        if all.iter().all(|t| t.as_slice().iter().all(|v| v.is_finite())) {
            return None;
        }
        self.named_tensors()
            .into_iter()
            .find(|(_, t)| t.iter().any(|v| !v.is_finite()))
            .map(|(name, _)| name)
    }

    /// Like [`ParamSet::visit`] without building names.
    fn visit_tensors<'a>(&'a self, out: &mut Vec<&'a Mat>) {
        out.extend(self.named_tensors().into_iter().map(|(_, t)| t));
    }

    /// Clamps every entry into `[-bound, bound]` and returns how many entries moved.
    fn clip(&mut self, bound: f64) -> usize {
        let mut clipped = 0;
        for t in self.tensors_mut() {
            for v in t.iter_mut() {
                if *v > bound {
                    *v = bound;
                    clipped += 1;
                } else if *v < -bound {
                    *v = -bound;
                    clipped += 1;
                }
            }
        }
        clipped
    }

    fn flatten(&self) -> Vec<f64> {
        self.named_tensors().iter().flat_map(|(_, t)| t.iter().copied()).collect()
    }
}

impl ParamSet for Mat {
    fn visit<'a>(&'a self, prefix: &str, out: &mut Vec<(String, &'a Mat)>) {
        out.push((prefix.to_string(), self));
    }

    fn visit_mut<'a>(&'a mut self, prefix: &str, out: &mut Vec<(String, &'a mut Mat)>) {
        out.push((prefix.to_string(), self));
    }

    fn visit_tensors<'a>(&'a self, out: &mut Vec<&'a Mat>) {
        out.push(self);
    }
}

/// Implements [`ParamSet`] for a struct whose listed fields are all `ParamSet`s.
#[macro_export]
macro_rules! impl_param_set {
    ($ty:ty { $($field:ident),+ $(,)? }) => {
        impl $crate::nn::ParamSet for $ty {
            fn visit<'a>(
                &'a self,
                prefix: &str,
                out: &mut Vec<(String, &'a $crate::linalg::Mat)>,
            ) {
                $( $crate::nn::ParamSet::visit(&self.$field, &$crate::nn::join_name(prefix, stringify!($field)), out); )+
            }

            fn visit_mut<'a>(
                &'a mut self,
                prefix: &str,
                out: &mut Vec<(String, &'a mut $crate::linalg::Mat)>,
            ) {
                $( $crate::nn::ParamSet::visit_mut(&mut self.$field, &$crate::nn::join_name(prefix, stringify!($field)), out); )+
            }

            fn visit_tensors<'a>(&'a self, out: &mut Vec<&'a $crate::linalg::Mat>) {
                $( $crate::nn::ParamSet::visit_tensors(&self.$field, out); )+
            }
        }
    };
}

#[doc(hidden)]
pub fn join_name(prefix: &str, field: &str) -> String {
    join(prefix, field)
}

/// Uniform initialization in `±sqrt(6 / (fan_in + fan_out))`.
pub fn xavier_uniform<R: Rng>(rows: usize, cols: usize, rng: &mut R) -> Mat {
    let bound = (6.0 / (rows + cols) as f64).sqrt();
    Mat::from_fn(rows, cols, |_, _| rng.random_range(-bound..=bound))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Activation {
    Identity,
    Tanh,
    Sigmoid,
}

impl Activation {
    fn apply(self, m: &mut Mat) {
        match self {
            Activation::Identity => {}
            Activation::Tanh => m.apply(|v| *v = v.tanh()),
            Activation::Sigmoid => m.apply(|v| *v = crate::linalg::sigmoid(*v)),
        }
    }

    /// Derivative expressed through the activation output.
    fn backward(self, out: &Mat, d_out: &Mat) -> Mat {
        match self {
            Activation::Identity => d_out.clone(),
            Activation::Tanh => d_out.zip_map(out, |g, y| g * (1.0 - y * y)),
            Activation::Sigmoid => d_out.zip_map(out, |g, y| g * y * (1.0 - y)),
        }
    }
}

/// Affine map `input · weight + bias` with `weight: in x out`, `bias: 1 x out`.
#[derive(Clone, Debug, PartialEq)]
pub struct Linear {
    pub weight: Mat,
    pub bias: Mat,
}

impl_param_set!(Linear { weight, bias });

impl Linear {
    pub fn new<R: Rng>(in_dim: usize, out_dim: usize, rng: &mut R) -> Self {
        Self {
            weight: xavier_uniform(in_dim, out_dim, rng),
            bias: Mat::zeros(1, out_dim),
        }
    }

    pub fn zeros(in_dim: usize, out_dim: usize) -> Self {
        Self {
            weight: Mat::zeros(in_dim, out_dim),
            bias: Mat::zeros(1, out_dim),
        }
    }

    pub fn in_dim(&self) -> usize {
        self.weight.nrows()
    }

    pub fn out_dim(&self) -> usize {
        self.weight.ncols()
    }
}

#[derive(Clone, Debug)]
enum Propagation {
    /// No graph operator (per-node dense layer).
    None,
    /// `pre = Â (H W) + b`; used when the layer shrinks the width.
    Late,
    /// `pre = (Â H) W + b`; caches `Â H`.
    Early(Mat),
}

/// Forward record of one graph (or per-node) layer.
#[derive(Clone, Debug)]
pub struct LayerTrace {
    input: Mat,
    propagation: Propagation,
    pub output: Mat,
}

/// `act(Â · input · W + b)`; with `a_hat = None` the layer acts on each row independently.
pub fn graph_layer_forward(
    a_hat: Option<&Mat>,
    input: &Mat,
    layer: &Linear,
    act: Activation,
) -> LayerTrace {
    let (mut pre, propagation) = match a_hat {
        None => (input * &layer.weight, Propagation::None),
        Some(a) if layer.in_dim() > layer.out_dim() => {
            (a * (input * &layer.weight), Propagation::Late)
        }
        Some(a) => {
            let p = a * input;
            (&p * &layer.weight, Propagation::Early(p))
        }
    };
    add_row_bias(&mut pre, &layer.bias);
    act.apply(&mut pre);
    LayerTrace {
        input: input.clone(),
        propagation,
        output: pre,
    }
}

/// Accumulates parameter gradients into `grad` and returns the gradient w.r.t. the layer input.
pub fn graph_layer_backward(
    a_hat: Option<&Mat>,
    layer: &Linear,
    act: Activation,
    trace: &LayerTrace,
    d_out: &Mat,
    grad: &mut Linear,
) -> Mat {
    let d_pre = act.backward(&trace.output, d_out);
    grad.bias += column_sums(&d_pre);
    match (&trace.propagation, a_hat) {
        (Propagation::None, _) => {
            grad.weight += t_mul(&trace.input, &d_pre);
            &d_pre * layer.weight.transpose()
        }
        (Propagation::Late, Some(a)) => {
            let g = a * &d_pre;
            grad.weight += t_mul(&trace.input, &g);
            g * layer.weight.transpose()
        }
        (Propagation::Early(p), Some(a)) => {
            grad.weight += t_mul(&p, &d_pre);
            a * (&d_pre * layer.weight.transpose())
        }
        _ => unreachable!("graph operator must match the forward pass"),
    }
}

/// Two stacked graph layers (a two-layer GCN, or a per-node MLP without `Â`).
#[derive(Clone, Debug, PartialEq)]
pub struct GcnStack {
    pub hidden: Linear,
    pub output: Linear,
}

impl_param_set!(GcnStack { hidden, output });

#[derive(Clone, Debug)]
pub struct StackTrace {
    hidden: LayerTrace,
    out: LayerTrace,
}

impl StackTrace {
    pub fn output(&self) -> &Mat {
        &self.out.output
    }
}

impl GcnStack {
    pub fn new<R: Rng>(in_dim: usize, hidden: usize, out_dim: usize, rng: &mut R) -> Self {
        Self {
            hidden: Linear::new(in_dim, hidden, rng),
            output: Linear::new(hidden, out_dim, rng),
        }
    }

    pub fn forward(
        &self,
        a_hat: Option<&Mat>,
        input: &Mat,
        hidden_act: Activation,
        out_act: Activation,
    ) -> StackTrace {
        let hidden = graph_layer_forward(a_hat, input, &self.hidden, hidden_act);
        let out = graph_layer_forward(a_hat, &hidden.output, &self.output, out_act);
        StackTrace { hidden, out }
    }

    pub fn backward(
        &self,
        a_hat: Option<&Mat>,
        hidden_act: Activation,
        out_act: Activation,
        trace: &StackTrace,
        d_out: &Mat,
        grad: &mut GcnStack,
    ) -> Mat {
        let d_hidden =
            graph_layer_backward(a_hat, &self.output, out_act, &trace.out, d_out, &mut grad.output);
        graph_layer_backward(a_hat, &self.hidden, hidden_act, &trace.hidden, &d_hidden, &mut grad.hidden)
    }
}

/// Two-layer perceptron `in -> hidden (tanh) -> 2`, softmax output.
#[derive(Clone, Debug, PartialEq)]
pub struct Classifier {
    pub hidden: Linear,
    pub output: Linear,
}

impl_param_set!(Classifier { hidden, output });

#[derive(Clone, Debug)]
pub struct ClassifierTrace {
    input: Mat,
    hidden: Mat,
    pub probs: Vec<f64>,
}

impl Classifier {
    pub fn new<R: Rng>(in_dim: usize, hidden: usize, rng: &mut R) -> Self {
        Self {
            hidden: Linear::new(in_dim, hidden, rng),
            output: Linear::new(hidden, 2, rng),
        }
    }

    pub fn zeros(in_dim: usize, hidden: usize) -> Self {
        Self {
            hidden: Linear::zeros(in_dim, hidden),
            output: Linear::zeros(hidden, 2),
        }
    }

    pub fn in_dim(&self) -> usize {
        self.hidden.in_dim()
    }

    /// `input` is a `1 x in_dim` row.
    pub fn forward(&self, input: &Mat) -> ClassifierTrace {
        let mut h = input * &self.hidden.weight;
        add_row_bias(&mut h, &self.hidden.bias);
        h.apply(|v| *v = v.tanh());
        let mut logits = &h * &self.output.weight;
        add_row_bias(&mut logits, &self.output.bias);
        let probs = softmax(logits.as_slice());
        ClassifierTrace {
            input: input.clone(),
            hidden: h,
            probs,
        }
    }

    pub fn backward(&self, trace: &ClassifierTrace, d_probs: &[f64], grad: &mut Classifier) -> Mat {
        let p = &trace.probs;
        let inner: f64 = d_probs.iter().zip(p).map(|(g, p)| g * p).sum();
        let d_logits = Mat::from_fn(1, p.len(), |_, k| p[k] * (d_probs[k] - inner));
        grad.output.weight += t_mul(&trace.hidden, &d_logits);
        grad.output.bias += &d_logits;
        let d_h = &d_logits * self.output.weight.transpose();
        let d_pre = d_h.zip_map(&trace.hidden, |g, y| g * (1.0 - y * y));
        grad.hidden.weight += t_mul(&trace.input, &d_pre);
        grad.hidden.bias += &d_pre;
        d_pre * self.hidden.weight.transpose()
    }
}

/// Negated mean binary cross-entropy `-mean(a ln b + (1-a) ln(1-b))` and its gradient
/// w.r.t. `pred`. Terms with a zero coefficient are skipped (`0 · ln 0 := 0`).
pub fn bce_loss(target: &Mat, pred: &Mat) -> (f64, Mat) {
    let count = target.len() as f64;
    let mut loss = 0.0;
    let mut grad = Mat::zeros(pred.nrows(), pred.ncols());
    for ((&a, &b), g_out) in target
        .as_slice()
        .iter()
        .zip(pred.as_slice())
        .zip(grad.as_mut_slice())
    {
        let mut term = 0.0;
        let mut g = 0.0;
        if a != 0.0 {
            let b_lo = b.max(f64::MIN_POSITIVE);
            term += a * b_lo.ln();
            g -= a / b_lo;
        }
        if a != 1.0 {
            let b_hi = (1.0 - b).max(f64::MIN_POSITIVE);
            term += (1.0 - a) * b_hi.ln();
            g += (1.0 - a) / b_hi;
        }
        loss -= term;
        *g_out = g / count;
    }
    (loss / count, grad)
}

pub const PROB_CLAMP: f64 = 1e-12;

/// Negated cross-entropy `-sum_k y_k ln p_k` with `p` clamped to `[1e-12, 1 - 1e-12]`.
pub fn cross_entropy(y: &[f64], p: &[f64]) -> (f64, Vec<f64>) {
    let mut loss = 0.0;
    let mut grad = vec![0.0; p.len()];
    for k in 0..p.len() {
        if y[k] != 0.0 {
            let pk = p[k].clamp(PROB_CLAMP, 1.0 - PROB_CLAMP);
            loss -= y[k] * pk.ln();
            grad[k] = -y[k] / pk;
        }
    }
    (loss, grad)
}
