//! Staged optimization.
//!
//! Stage 1 learns the two latent representations. For every subject (batch
//! size 1, order reshuffled each epoch) it runs, in order: a generator step on
//! `rec1 + rec2 + g` over `G, G', S, S'`; a latent-critic step against a fresh
//! prior draw; a classification step on `cls1 + cls2` over `G, S, C1`.
//!
//! Stage 2 freezes both encoders, builds the hypergraphs from their outputs
//! and, per subject, steps the hyperedge critic, then `Θ`, then `C2`.

use std::fmt::Write as _;
use std::path::Path;

use rand::seq::SliceRandom;

use crate::cnnae::{distribute_features, CnnAe, CnnInput, CnnWeights};
use crate::config::{Modalities, ModelConfig};
use crate::datamodel::{one_hot, Subject};
use crate::error::{Error, Result};
use crate::graphgan::{GanWeights, GraphGan, GraphInput};
use crate::hyperfusion::{
    build_hypergraph, AhfWeights, FusionFixed, FusionInput, FusionOperators, FusionOutput, FusionState, VER_WEIGHT,
};
use crate::impl_param_set;
use crate::linalg::{min_max_scale, normalized_adjacency, Mat};
use crate::nn::ParamSet;
use crate::optim::Optimizer;
use crate::prior::{fit_prior, LatentPrior};
use crate::rng::{derive_seed, stream};

/// Weight of the latent-critic term in the reported total.
pub const DZ_WEIGHT: f64 = 0.1;

/// One subject with every derived input precomputed.
#[derive(Clone, Debug)]
pub struct PreparedSubject {
    pub id: String,
    pub label: usize,
    pub y: [f64; 2],
    pub adjacency: Mat,
    pub a_hat: Mat,
    pub features: Mat,
    /// Node features min-max rescaled into [0, 1].
    pub feature_target: Mat,
    /// Rescaled feature vector distributed over the nodes, `N x c`.
    pub fv_features: Mat,
    /// Feature vector min-max rescaled into [0, 1], `1 x c`.
    pub fv_target: Mat,
}

pub fn prepare_subject(s: &Subject, diffusion_steps: usize) -> Result<PreparedSubject> {
    let a_hat = normalized_adjacency(&s.adjacency);
    let fv = Mat::from_row_slice(1, s.feature_vector.len(), &s.feature_vector);
    let fv_target = min_max_scale(&fv);
    Ok(PreparedSubject {
        id: s.id.clone(),
        label: s.label,
        y: one_hot(s.label)?,
        adjacency: s.adjacency.clone(),
        fv_features: distribute_features(fv_target.as_slice(), &a_hat, diffusion_steps)?,
        a_hat,
        features: s.node_features.clone(),
        feature_target: min_max_scale(&s.node_features),
        fv_target,
    })
}

pub fn prepare_all(subjects: &[&Subject], diffusion_steps: usize) -> Result<Vec<PreparedSubject>> {
    subjects.iter().map(|s| prepare_subject(s, diffusion_steps)).collect()
}

impl PreparedSubject {
    pub fn graph_input(&self) -> GraphInput<'_> {
        GraphInput {
            adjacency: &self.adjacency,
            a_hat: &self.a_hat,
            features: &self.features,
            target: &self.feature_target,
            y: self.y,
        }
    }

    pub fn cnn_input(&self) -> CnnInput<'_> {
        CnnInput {
            a_hat: &self.a_hat,
            features: &self.fv_features,
            target: &self.fv_target,
            y: self.y,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Model {
    pub graphgan: GraphGan,
    pub cnnae: CnnAe,
    pub fusion: FusionState,
}

impl_param_set!(Model { graphgan, cnnae, fusion });

impl Model {
    pub fn new(cfg: &ModelConfig, seed: u64) -> Self {
        let mut rng = stream(seed, "init", 0);
        let (n, d, c, q) = (cfg.n_nodes, cfg.n_features, cfg.fv_len, cfg.latent_dim);
        let graphgan = GraphGan::new(n, d, q, cfg.encoder_hidden, cfg.decoder_hidden, cfg.c1_hidden, &mut rng);
        let cnnae = CnnAe::new(c, q, cfg.encoder_hidden, cfg.decoder_hidden, &mut rng);
        let fusion = FusionState::new(n, q, cfg.c2_hidden, &mut rng);
        Self {
            graphgan,
            cnnae,
            fusion,
        }
    }
}

/// One optimizer per trained module.
#[derive(Clone, Debug, PartialEq)]
pub struct Optimizers {
    pub graph_encoder: Optimizer,
    pub graph_decoder: Optimizer,
    pub cnn_encoder: Optimizer,
    pub cnn_decoder: Optimizer,
    pub latent_critic: Optimizer,
    pub c1: Optimizer,
    pub theta: Optimizer,
    pub hyper_critic: Optimizer,
    pub c2: Optimizer,
}

impl Optimizers {
    pub fn new(cfg: &ModelConfig, m: &Model) -> Self {
        let (kind, g, d) = (cfg.optimizer, cfg.lr_generator, cfg.lr_discriminator);
        Self {
            graph_encoder: Optimizer::new(kind, g, &m.graphgan.encoder),
            graph_decoder: Optimizer::new(kind, g, &m.graphgan.decoder),
            cnn_encoder: Optimizer::new(kind, g, &m.cnnae.encoder),
            cnn_decoder: Optimizer::new(kind, g, &m.cnnae.decoder),
            latent_critic: Optimizer::new(kind, d, &m.graphgan.critic),
            c1: Optimizer::new(kind, g, &m.graphgan.classifier),
            theta: Optimizer::new(cfg.theta_optimizer, g, &m.fusion.theta),
            hyper_critic: Optimizer::new(kind, d, &m.fusion.critic),
            c2: Optimizer::new(kind, g, &m.fusion.classifier),
        }
    }

    /// `(group name, optimizer)` in a fixed order.
    pub fn groups(&self) -> [(&'static str, &Optimizer); 9] {
        [
            ("graph_encoder", &self.graph_encoder),
            ("graph_decoder", &self.graph_decoder),
            ("cnn_encoder", &self.cnn_encoder),
            ("cnn_decoder", &self.cnn_decoder),
            ("latent_critic", &self.latent_critic),
            ("c1", &self.c1),
            ("theta", &self.theta),
            ("hyper_critic", &self.hyper_critic),
            ("c2", &self.c2),
        ]
    }

    pub fn groups_mut(&mut self) -> [(&'static str, &mut Optimizer); 9] {
        [
            ("graph_encoder", &mut self.graph_encoder),
            ("graph_decoder", &mut self.graph_decoder),
            ("cnn_encoder", &mut self.cnn_encoder),
            ("cnn_decoder", &mut self.cnn_decoder),
            ("latent_critic", &mut self.latent_critic),
            ("c1", &mut self.c1),
            ("theta", &mut self.theta),
            ("hyper_critic", &mut self.hyper_critic),
            ("c2", &mut self.c2),
        ]
    }
}

/// The terms of the overall objective.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct LossComponents {
    pub g: f64,
    pub dz: f64,
    pub rec1: f64,
    pub rec2: f64,
    pub cls1: f64,
    pub cls2: f64,
    pub ahf: f64,
}

/// `g + 0.1 dz + rec1 + rec2 + cls1 + cls2 + γ ahf`
pub fn total_loss(c: &LossComponents, gamma: f64) -> f64 {
    c.g + DZ_WEIGHT * c.dz + c.rec1 + c.rec2 + c.cls1 + c.cls2 + gamma * c.ahf
}

/// Mean component losses over the subject steps of one epoch.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct EpochLosses {
    pub stage: u8,
    /// 1-based within the stage.
    pub epoch: usize,
    pub components: LossComponents,
    pub dh: f64,
    pub ver: f64,
    pub cls3: f64,
    pub total: f64,
    /// Critic weights moved by clipping during the epoch.
    pub clipped: usize,
}

pub const LOSS_LOG_HEADER: &str = "stage,epoch,g,dz,rec1,rec2,cls1,cls2,ahf,dh,ver,cls3,total,clipped";

impl EpochLosses {
    pub fn csv_row(&self) -> String {
        let c = &self.components;
        format!(
            "{},{},{},{},{},{},{},{},{},{},{},{},{},{}",
            self.stage,
            self.epoch,
            c.g,
            c.dz,
            c.rec1,
            c.rec2,
            c.cls1,
            c.cls2,
            c.ahf,
            self.dh,
            self.ver,
            self.cls3,
            self.total,
            self.clipped
        )
    }
}

pub fn loss_log_csv(history: &[EpochLosses]) -> String {
    let mut out = String::from(LOSS_LOG_HEADER);
    out.push('\n');
    for row in history {
        let _ = writeln!(out, "{}", row.csv_row());
    }
    out
}

pub fn write_loss_log(path: &Path, history: &[EpochLosses]) -> Result<()> {
    std::fs::write(path, loss_log_csv(history))?;
    Ok(())
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum StepKind {
    Generator,
    LatentCritic,
    Classifier1,
    HyperCritic,
    Theta,
    Classifier2,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct UpdateEvent {
    pub stage: u8,
    pub epoch: usize,
    /// Position within the epoch's shuffled order.
    pub step: usize,
    pub kind: StepKind,
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrainState {
    pub config: ModelConfig,
    pub seed: u64,
    pub model: Model,
    pub optimizers: Optimizers,
    pub prior: Option<LatentPrior>,
    pub stage1_epochs: usize,
    pub stage2_epochs: usize,
    pub history: Vec<EpochLosses>,
    pub schedule: Vec<UpdateEvent>,
    /// Stage-1 components after the last stage-1 epoch; frozen during stage 2.
    pub frozen_components: LossComponents,
}

/// Both latents of one subject plus its fusion operators.
#[derive(Clone, Debug)]
pub struct FusionSample {
    pub z: Mat,
    pub r: Mat,
    pub ops: FusionOperators,
    pub fixed: FusionFixed,
    pub y: [f64; 2],
}

impl FusionSample {
    pub fn input(&self) -> FusionInput<'_> {
        FusionInput {
            z: &self.z,
            r: &self.r,
            ops: &self.ops,
            y: self.y,
        }
    }
}

/// Latents of one subject, before hypergraph construction.
#[derive(Clone, Debug)]
pub struct Latents {
    pub z: Mat,
    pub r: Mat,
    pub y: [f64; 2],
}

fn diverged(stage: u8, epoch: usize, step: usize, what: impl Into<String>) -> Error {
    Error::Diverged {
        stage,
        epoch,
        step,
        what: what.into(),
    }
}

fn check_losses(stage: u8, epoch: usize, step: usize, values: &[(&str, f64)]) -> Result<()> {
    match values.iter().find(|(_, v)| !v.is_finite()) {
        Some((name, v)) => Err(diverged(stage, epoch, step, format!("loss {name} = {v}"))),
        None => Ok(()),
    }
}

impl TrainState {
    pub fn new(config: &ModelConfig, prior: Option<LatentPrior>, seed: u64) -> Self {
        let model = Model::new(config, seed);
        let optimizers = Optimizers::new(config, &model);
        Self {
            config: config.clone(),
            seed,
            model,
            optimizers,
            prior,
            stage1_epochs: 0,
            stage2_epochs: 0,
            history: Vec::new(),
            schedule: Vec::new(),
            frozen_components: LossComponents::default(),
        }
    }

    fn trimodal(&self) -> bool {
        self.config.modalities == Modalities::Tri
    }

    fn check_params(&self, stage: u8, epoch: usize, step: usize) -> Result<()> {
        match self.model.first_non_finite() {
            Some(name) => Err(diverged(stage, epoch, step, format!("parameter {name} is not finite"))),
            None => Ok(()),
        }
    }

    fn log(&mut self, stage: u8, epoch: usize, step: usize, kind: StepKind) {
        self.schedule.push(UpdateEvent {
            stage,
            epoch,
            step,
            kind,
        });
    }

    fn epoch_order(&self, stage: u8, epoch: usize, n: usize) -> Vec<usize> {
        let mut order: Vec<usize> = (0..n).collect();
        let tag = if stage == 1 { "stage1-order" } else { "stage2-order" };
        order.shuffle(&mut stream(self.seed, tag, epoch as u64));
        order
    }

    /// Runs `config.epochs_stage1` further stage-1 epochs.
    pub fn run_stage1(&mut self, data: &[PreparedSubject]) -> Result<()> {
        if data.is_empty() {
            return Err(Error::InvalidArgument("empty training set".into()));
        }
        let prior = self
            .prior
            .clone()
            .ok_or_else(|| Error::InvalidArgument("stage 1 needs a fitted latent prior".into()))?;
        let tri = self.trimodal();
        let clip = self.config.weight_clip;
        let n_nodes = self.config.n_nodes;
        for _ in 0..self.config.epochs_stage1 {
            let epoch = self.stage1_epochs + 1;
            let order = self.epoch_order(1, epoch, data.len());
            let mut prior_rng = stream(self.seed, "stage1-prior", epoch as u64);
            let mut sums = LossComponents::default();
            let mut clipped = 0;
            for (step, &i) in order.iter().enumerate() {
                let s = &data[i];
                let gin = s.graph_input();
                let cin = s.cnn_input();

                // generators, encoders and decoders
                let real = prior.sample_with(n_nodes, &mut prior_rng);
                let (gl, gg) = self.model.graphgan.loss_grads(
                    &gin,
                    &real,
                    &GanWeights {
                        rec1: 1.0,
                        adv_g: 1.0,
                        ..Default::default()
                    },
                );
                let m = &mut self.model;
                self.optimizers.graph_encoder.step(&mut m.graphgan.encoder, &gg.encoder);
                self.optimizers.graph_decoder.step(&mut m.graphgan.decoder, &gg.decoder);
                let mut rec2 = 0.0;
                if tri {
                    let (cl, cg, _) = m.cnnae.loss_grads(
                        &m.graphgan.classifier,
                        &cin,
                        &CnnWeights {
                            rec2: 1.0,
                            cls2: 0.0,
                        },
                    );
                    rec2 = cl.rec2;
                    self.optimizers.cnn_encoder.step(&mut m.cnnae.encoder, &cg.encoder);
                    self.optimizers.cnn_decoder.step(&mut m.cnnae.decoder, &cg.decoder);
                }
                self.log(1, epoch, step, StepKind::Generator);

                // latent critic against the prior draw
                let gan = &self.model.graphgan;
                let z = gan.encode(&s.a_hat, &s.features);
                let fake = gan.critic.forward(&z);
                let real_t = gan.critic.forward(&real);
                let dz = -fake.score + real_t.score;
                let mut dg = gan.critic.zeros_like();
                gan.critic.backward(&fake, -1.0, &mut dg);
                gan.critic.backward(&real_t, 1.0, &mut dg);
                let critic = &mut self.model.graphgan.critic;
                self.optimizers.latent_critic.step(critic, &dg);
                if let Some(bound) = clip {
                    clipped += critic.clip(bound);
                }
                self.log(1, epoch, step, StepKind::LatentCritic);

                // encoders and the shared classifier
                let (cl1, mut cg1) = self.model.graphgan.loss_grads(
                    &gin,
                    &real,
                    &GanWeights {
                        cls1: 1.0,
                        ..Default::default()
                    },
                );
                let m = &mut self.model;
                let mut cls2 = 0.0;
                if tri {
                    let (cl2, cg2, c_grad) = m.cnnae.loss_grads(
                        &m.graphgan.classifier,
                        &cin,
                        &CnnWeights {
                            rec2: 0.0,
                            cls2: 1.0,
                        },
                    );
                    cls2 = cl2.cls2;
                    cg1.classifier.add_scaled(&c_grad, 1.0);
                    self.optimizers.cnn_encoder.step(&mut m.cnnae.encoder, &cg2.encoder);
                }
                self.optimizers.graph_encoder.step(&mut m.graphgan.encoder, &cg1.encoder);
                self.optimizers.c1.step(&mut m.graphgan.classifier, &cg1.classifier);
                self.log(1, epoch, step, StepKind::Classifier1);

                check_losses(
                    1,
                    epoch,
                    step,
                    &[
                        ("rec1", gl.rec1),
                        ("g", gl.g),
                        ("rec2", rec2),
                        ("dz", dz),
                        ("cls1", cl1.cls1),
                        ("cls2", cls2),
                    ],
                )?;
                self.check_params(1, epoch, step)?;
                sums.g += gl.g;
                sums.rec1 += gl.rec1;
                sums.rec2 += rec2;
                sums.dz += dz;
                sums.cls1 += cl1.cls1;
                sums.cls2 += cls2;
            }
            let n = data.len() as f64;
            let c = LossComponents {
                g: sums.g / n,
                dz: sums.dz / n,
                rec1: sums.rec1 / n,
                rec2: sums.rec2 / n,
                cls1: sums.cls1 / n,
                cls2: sums.cls2 / n,
                ahf: 0.0,
            };
            self.history.push(EpochLosses {
                stage: 1,
                epoch,
                components: c,
                total: total_loss(&c, self.config.gamma),
                clipped,
                ..Default::default()
            });
            self.frozen_components = c;
            self.stage1_epochs = epoch;
        }
        Ok(())
    }

    /// Stage-1 component losses of the current parameters, averaged over
    /// `data`, without updating anything.
    pub fn evaluate_stage1(&self, data: &[PreparedSubject]) -> Result<LossComponents> {
        let prior = self
            .prior
            .as_ref()
            .ok_or_else(|| Error::InvalidArgument("evaluation needs a fitted latent prior".into()))?;
        let mut rng = stream(self.seed, "evaluate-prior", 0);
        let mut c = LossComponents::default();
        for s in data {
            let real = prior.sample_with(self.config.n_nodes, &mut rng);
            let gl = self.model.graphgan.losses(&s.graph_input(), &real);
            c.g += gl.g;
            c.dz += gl.dz;
            c.rec1 += gl.rec1;
            c.cls1 += gl.cls1;
            if self.trimodal() {
                let cl = self.model.cnnae.losses(&self.model.graphgan.classifier, &s.cnn_input());
                c.rec2 += cl.rec2;
                c.cls2 += cl.cls2;
            }
        }
        let n = data.len().max(1) as f64;
        c.g /= n;
        c.dz /= n;
        c.rec1 /= n;
        c.rec2 /= n;
        c.cls1 /= n;
        c.cls2 /= n;
        Ok(c)
    }

    /// Encoder outputs; the bimodal variant uses the graph latent for both branches.
    pub fn latents(&self, s: &PreparedSubject) -> Latents {
        let z = self.model.graphgan.encode(&s.a_hat, &s.features);
        let r = if self.trimodal() {
            self.model.cnnae.encode_v(&s.a_hat, &s.fv_features)
        } else {
            z.clone()
        };
        Latents { z, r, y: s.y }
    }

    pub fn fusion_sample(&self, l: &Latents) -> Result<FusionSample> {
        let k = self.config.hyperedge_k;
        let h1 = build_hypergraph(&l.z, k)?;
        let h2 = if self.trimodal() { build_hypergraph(&l.r, k)? } else { h1.clone() };
        let ops = FusionOperators::new(&h1, &h2, self.config.normalization)?;
        let fixed = FusionFixed::new(&FusionInput {
            z: &l.z,
            r: &l.r,
            ops: &ops,
            y: l.y,
        });
        Ok(FusionSample {
            z: l.z.clone(),
            r: l.r.clone(),
            ops,
            fixed,
            y: l.y,
        })
    }

    /// Runs `config.epochs_stage2` further stage-2 epochs on frozen encoders.
    pub fn run_stage2(&mut self, data: &[PreparedSubject]) -> Result<()> {
        let latents: Vec<Latents> = data.iter().map(|s| self.latents(s)).collect();
        self.run_stage2_on_latents(&latents)
    }

    /// Stage 2 given the (frozen) latents directly.
    pub fn run_stage2_on_latents(&mut self, latents: &[Latents]) -> Result<()> {
        if latents.is_empty() {
            return Err(Error::InvalidArgument("empty training set".into()));
        }
        let clip = self.config.weight_clip;
        let mut samples: Vec<FusionSample> = Vec::new();
        for _ in 0..self.config.epochs_stage2 {
            let epoch = self.stage2_epochs + 1;
            // The encoders are frozen here, so a rebuild from the same latents
            // reproduces the same hypergraphs; build them once.
            if samples.is_empty() {
                samples = latents.iter().map(|l| self.fusion_sample(l)).collect::<Result<_>>()?;
            }
            let order = self.epoch_order(2, epoch, samples.len());
            let (mut dh, mut ver, mut cls3, mut clipped) = (0.0, 0.0, 0.0, 0);
            for (step, &i) in order.iter().enumerate() {
                let input = samples[i].input();

                let (l, g) = self.model.fusion.loss_grads_fixed(
                    &input,
                    &samples[i].fixed,
                    &AhfWeights {
                        dh: 1.0,
                        ver: self.config.critic_ver_weight,
                        cls3: 0.0,
                    },
                );
                let f = &mut self.model.fusion;
                self.optimizers.hyper_critic.step(&mut f.critic, &g.critic);
                if let Some(bound) = clip {
                    clipped += f.critic.clip(bound);
                }
                self.log(2, epoch, step, StepKind::HyperCritic);

                let (lv, g) = self.model.fusion.loss_grads_fixed(
                    &input,
                    &samples[i].fixed,
                    &AhfWeights {
                        ver: -1.0,
                        ..Default::default()
                    },
                );
                self.optimizers.theta.step(&mut self.model.fusion.theta, &g.theta);
                self.log(2, epoch, step, StepKind::Theta);

                let (lc, g) = self.model.fusion.loss_grads_fixed(
                    &input,
                    &samples[i].fixed,
                    &AhfWeights {
                        cls3: 1.0,
                        ..Default::default()
                    },
                );
                self.optimizers
                    .c2
                    .step(&mut self.model.fusion.classifier, &g.classifier);
                self.log(2, epoch, step, StepKind::Classifier2);

                check_losses(
                    2,
                    epoch,
                    step,
                    &[("dh", l.dh), ("ver", l.ver), ("ver", lv.ver), ("cls3", lc.cls3)],
                )?;
                self.check_params(2, epoch, step)?;
                dh += l.dh;
                ver += l.ver;
                cls3 += lc.cls3;
            }
            let n = samples.len() as f64;
            let (dh, ver, cls3) = (dh / n, ver / n, cls3 / n);
            let components = LossComponents {
                ahf: dh + VER_WEIGHT * ver + cls3,
                ..self.frozen_components
            };
            self.history.push(EpochLosses {
                stage: 2,
                epoch,
                components,
                dh,
                ver,
                cls3,
                total: total_loss(&components, self.config.gamma),
                clipped,
            });
            self.stage2_epochs = epoch;
        }
        Ok(())
    }

    /// Full fused forward pass for one subject.
    pub fn fuse(&self, s: &PreparedSubject) -> Result<FusionOutput> {
        let sample = self.fusion_sample(&self.latents(s))?;
        Ok(self.model.fusion.forward_fixed(&sample.input(), &sample.fixed))
    }

    /// Patient-class probability.
    pub fn predict(&self, s: &PreparedSubject) -> Result<f64> {
        Ok(self.fuse(s)?.probs[1])
    }
}

/// Gradient of `γ · £_AHF` with respect to the fusion parameters.
pub fn fusion_gradient(fusion: &FusionState, input: &FusionInput<'_>, gamma: f64) -> FusionState {
    fusion
        .loss_grads(
            input,
            &AhfWeights {
                dh: gamma,
                ver: gamma * VER_WEIGHT,
                cls3: gamma,
            },
        )
        .1
}

fn require_both_classes(subjects: &[&Subject]) -> Result<()> {
    if subjects.is_empty() {
        return Err(Error::InvalidArgument("empty training cohort".into()));
    }
    if !subjects.iter().any(|s| s.label == 0) || !subjects.iter().any(|s| s.label == 1) {
        return Err(Error::InvalidArgument("training cohort must contain both classes".into()));
    }
    Ok(())
}

/// Fits the latent prior on `subjects`, initializes every module from `seed`
/// and runs stage 1.
pub fn train_stage1(subjects: &[&Subject], config: &ModelConfig, seed: u64) -> Result<TrainState> {
    config.validate()?;
    require_both_classes(subjects)?;
    let fitted = fit_prior(
        subjects,
        config.prior_subset,
        config.latent_dim,
        config.dpp_ridge,
        config.roi_pool.as_deref(),
        config.bandwidth,
        derive_seed(seed, "prior", 0),
    )?;
    let mut state = TrainState::new(config, Some(fitted.kde), seed);
    state.run_stage1(&prepare_all(subjects, config.diffusion_steps)?)?;
    Ok(state)
}

pub fn train_stage2(mut state: TrainState, subjects: &[&Subject]) -> Result<TrainState> {
    require_both_classes(subjects)?;
    state.run_stage2(&prepare_all(subjects, state.config.diffusion_steps)?)?;
    Ok(state)
}

/// Per-run summary for the command line.
#[derive(Clone, Debug)]
pub struct TrainReport {
    pub history: Vec<EpochLosses>,
    pub wall_clock_secs: f64,
}
