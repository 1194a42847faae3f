//! Model hyperparameters and the flat `key = value` run configuration.

use std::collections::BTreeSet;
use std::fmt::Write as _;
use std::path::Path;

use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::optim::OptimizerKind;
use crate::synthdata::SynthSpec;

/// Environment variable consulted for seeds not given explicitly.
pub const SEED_ENV: &str = "HYPERFUSE_SEED";

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum BandwidthPolicy {
    /// `b = m^{-1/(q+4)} · mean per-dimension standard deviation of the centers`.
    Scott,
    Fixed(f64),
}

/// Normalization used by the hypergraph vertex/edge operators.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Normalization {
    /// `D_e^{-1/2} Hᵀ D_e^{-1/2}` and `D_v^{-1/2} H D_v^{-1/2}`; needs as many hyperedges as nodes.
    Printed,
    /// `D_e^{-1} Hᵀ D_v^{-1/2}` and `D_v^{-1/2} H` (HGNN style).
    Standard,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Modalities {
    /// SC + FT + FV: both representation branches feed the fusion.
    Tri,
    /// SC + FT only: the fusion uses the graph GAN latent on both sides.
    Bi,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ModelConfig {
    pub n_nodes: usize,
    pub n_features: usize,
    pub fv_len: usize,
    pub latent_dim: usize,
    pub prior_subset: usize,
    pub hyperedge_k: usize,
    pub gamma: f64,
    pub bandwidth: BandwidthPolicy,
    pub encoder_hidden: usize,
    pub decoder_hidden: usize,
    pub c1_hidden: usize,
    pub c2_hidden: usize,
    pub lr_generator: f64,
    pub lr_discriminator: f64,
    pub epochs_stage1: usize,
    pub epochs_stage2: usize,
    pub seed: u64,
    pub optimizer: OptimizerKind,
    /// Update rule for the vertex-convolution weight `Θ`.
    pub theta_optimizer: OptimizerKind,
    /// Weight of the `R_H` term in the hyperedge critic's own objective.
    pub critic_ver_weight: f64,
    pub weight_clip: Option<f64>,
    pub diffusion_steps: usize,
    pub normalization: Normalization,
    /// Stage 2 never moves the encoders, so frozen and per-epoch rebuilt
    /// hypergraphs coincide; both settings run the same code.
    pub freeze_hypergraphs: bool,
    pub modalities: Modalities,
    pub roi_pool: Option<Vec<usize>>,
    pub dpp_ridge: f64,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            n_nodes: 90,
            n_features: 187,
            fv_len: 128,
            latent_dim: 32,
            prior_subset: 10,
            hyperedge_k: 10,
            gamma: 0.5,
            bandwidth: BandwidthPolicy::Scott,
            encoder_hidden: 64,
            decoder_hidden: 64,
            c1_hidden: 16,
            c2_hidden: 90,
            lr_generator: 1e-3,
            lr_discriminator: 1e-4,
            epochs_stage1: 100,
            epochs_stage2: 200,
            seed: 0,
            optimizer: OptimizerKind::Adam,
            theta_optimizer: OptimizerKind::Sgd,
            critic_ver_weight: 1.0,
            weight_clip: Some(0.05),
            diffusion_steps: 1,
            normalization: Normalization::Printed,
            freeze_hypergraphs: false,
            modalities: Modalities::Tri,
            roi_pool: None,
            dpp_ridge: 1e-3,
        }
    }
}

impl ModelConfig {
    pub fn dims(&self) -> (usize, usize, usize) {
        (self.n_nodes, self.n_features, self.fv_len)
    }

    pub fn validate(&self) -> Result<()> {
        let fail = |msg: String| Err(Error::Config(msg));
        if self.n_nodes == 0 || self.n_features == 0 || self.fv_len == 0 {
            return fail("n_nodes, n_features and fv_len must be positive".into());
        }
        if self.latent_dim == 0 {
            return fail("latent_dim must be at least 1".into());
        }
        if self.prior_subset == 0 || self.prior_subset > self.n_nodes {
            return fail(format!(
                "prior_subset must lie in 1..={}, got {}",
                self.n_nodes, self.prior_subset
            ));
        }
        if self.hyperedge_k == 0 || self.hyperedge_k > self.n_nodes {
            return fail(format!(
                "hyperedge_k must lie in 1..={}, got {}",
                self.n_nodes, self.hyperedge_k
            ));
        }
        if !(self.gamma >= 0.0) || !self.gamma.is_finite() {
            return fail(format!("gamma must be a finite value >= 0, got {}", self.gamma));
        }
        if !(self.critic_ver_weight >= 0.0) || !self.critic_ver_weight.is_finite() {
            return fail(format!(
                "critic_ver_weight must be a finite value >= 0, got {}",
                self.critic_ver_weight
            ));
        }
        if let BandwidthPolicy::Fixed(b) = self.bandwidth {
            if !(b > 0.0) || !b.is_finite() {
                return fail(format!("bandwidth must be positive, got {b}"));
            }
        }
        for (name, w) in [
            ("encoder_hidden", self.encoder_hidden),
            ("decoder_hidden", self.decoder_hidden),
            ("c1_hidden", self.c1_hidden),
            ("c2_hidden", self.c2_hidden),
        ] {
            if w == 0 {
                return fail(format!("{name} must be positive"));
            }
        }
        for (name, lr) in [
            ("lr_generator", self.lr_generator),
            ("lr_discriminator", self.lr_discriminator),
        ] {
            if !(lr > 0.0) || !lr.is_finite() {
                return fail(format!("{name} must be positive, got {lr}"));
            }
        }
        if let Some(c) = self.weight_clip {
            if !(c > 0.0) {
                return fail(format!("weight_clip must be positive, got {c}"));
            }
        }
        if !(self.dpp_ridge > 0.0) {
            return fail(format!("dpp_ridge must be positive, got {}", self.dpp_ridge));
        }
        if let Some(pool) = &self.roi_pool {
            if let Some(&bad) = pool.iter().find(|&&i| i >= self.n_nodes) {
                return fail(format!("roi_pool index {bad} out of range"));
            }
            if pool.len() < self.prior_subset {
                return fail(format!(
                    "roi_pool has {} nodes, fewer than prior_subset = {}",
                    pool.len(),
                    self.prior_subset
                ));
            }
        }
        Ok(())
    }
}

/// Every knob a command can consume: model hyperparameters plus synthetic cohort settings.
#[derive(Clone, Debug, PartialEq)]
pub struct RunConfig {
    pub model: ModelConfig,
    pub synth: SynthSpec,
    explicit: BTreeSet<String>,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            model: ModelConfig::default(),
            synth: SynthSpec::default(),
            explicit: BTreeSet::new(),
        }
    }
}

fn parse_num<T: std::str::FromStr>(key: &str, value: &str) -> Result<T> {
    value
        .parse()
        .map_err(|_| Error::Config(format!("{key}: cannot parse `{value}`")))
}

fn parse_bool(key: &str, value: &str) -> Result<bool> {
    match value {
        "true" => Ok(true),
        "false" => Ok(false),
        _ => Err(Error::Config(format!("{key}: expected true or false, got `{value}`"))),
    }
}

fn parse_list(key: &str, value: &str) -> Result<Vec<usize>> {
    value
        .split(',')
        .map(|s| parse_num::<usize>(key, s.trim()))
        .collect()
}

fn fmt_list(list: &[usize]) -> String {
    list.iter().map(|i| i.to_string()).collect::<Vec<_>>().join(",")
}

impl RunConfig {
    pub fn keys() -> &'static [&'static str] {
        &[
            "n_nodes",
            "n_features",
            "fv_len",
            "latent_dim",
            "prior_subset",
            "hyperedge_k",
            "gamma",
            "bandwidth",
            "encoder_hidden",
            "decoder_hidden",
            "c1_hidden",
            "c2_hidden",
            "lr_generator",
            "lr_discriminator",
            "epochs_stage1",
            "epochs_stage2",
            "seed",
            "optimizer",
            "theta_optimizer",
            "critic_ver_weight",
            "weight_clip",
            "diffusion_steps",
            "normalization",
            "freeze_hypergraphs",
            "modalities",
            "roi_pool",
            "dpp_ridge",
            "synth.n_per_class",
            "synth.separation",
            "synth.noise",
            "synth.communities",
            "synth.p_intra",
            "synth.p_inter",
            "synth.disease_rois",
            "synth.sc_removal_rate",
            "synth.seed",
        ]
    }

    /// Parses `key = value` lines; `#` starts a comment. Unknown keys are rejected.
    pub fn parse(text: &str) -> Result<Self> {
        let mut cfg = Self::default();
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| {
                Error::Config(format!("line {}: expected key = value", lineno + 1))
            })?;
            cfg.set(key.trim(), value.trim())?;
        }
        Ok(cfg)
    }

    pub fn from_file(path: &Path) -> Result<Self> {
        if !path.exists() {
            return Err(Error::MissingFile(path.to_path_buf()));
        }
        Self::parse(&std::fs::read_to_string(path)?)
    }

    /// Applies a `key=value` override.
    pub fn apply_override(&mut self, assignment: &str) -> Result<()> {
        let (key, value) = assignment
            .split_once('=')
            .ok_or_else(|| Error::Config(format!("override `{assignment}` is not key=value")))?;
        self.set(key.trim(), value.trim())
    }

    /// Fills seeds that were not set explicitly from `HYPERFUSE_SEED`, if present.
    pub fn apply_seed_env(&mut self) -> Result<()> {
        if let Ok(v) = std::env::var(SEED_ENV) {
            let seed: u64 = parse_num(SEED_ENV, v.trim())?;
            if !self.explicit.contains("seed") {
                self.model.seed = seed;
            }
            if !self.explicit.contains("synth.seed") {
                self.synth.seed = seed;
            }
        }
        Ok(())
    }

    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let m = &mut self.model;
        let s = &mut self.synth;
        match key {
            "n_nodes" => m.n_nodes = parse_num(key, value)?,
            "n_features" => m.n_features = parse_num(key, value)?,
            "fv_len" => m.fv_len = parse_num(key, value)?,
            "latent_dim" => m.latent_dim = parse_num(key, value)?,
            "prior_subset" => m.prior_subset = parse_num(key, value)?,
            "hyperedge_k" => m.hyperedge_k = parse_num(key, value)?,
            "gamma" => m.gamma = parse_num(key, value)?,
            "bandwidth" => {
                m.bandwidth = match value {
                    "scott" => BandwidthPolicy::Scott,
                    v => BandwidthPolicy::Fixed(parse_num(key, v)?),
                }
            }
            "encoder_hidden" => m.encoder_hidden = parse_num(key, value)?,
            "decoder_hidden" => m.decoder_hidden = parse_num(key, value)?,
            "c1_hidden" => m.c1_hidden = parse_num(key, value)?,
            "c2_hidden" => m.c2_hidden = parse_num(key, value)?,
            "lr_generator" => m.lr_generator = parse_num(key, value)?,
            "lr_discriminator" => m.lr_discriminator = parse_num(key, value)?,
            "epochs_stage1" => m.epochs_stage1 = parse_num(key, value)?,
            "epochs_stage2" => m.epochs_stage2 = parse_num(key, value)?,
            "seed" => m.seed = parse_num(key, value)?,
            "optimizer" => {
                m.optimizer = OptimizerKind::parse(value)
                    .ok_or_else(|| Error::Config(format!("optimizer: unknown `{value}`")))?
            }
            "theta_optimizer" => {
                m.theta_optimizer = OptimizerKind::parse(value)
                    .ok_or_else(|| Error::Config(format!("theta_optimizer: unknown `{value}`")))?
            }
            "critic_ver_weight" => m.critic_ver_weight = parse_num(key, value)?,
            "weight_clip" => {
                m.weight_clip = match value {
                    "off" => None,
                    v => Some(parse_num(key, v)?),
                }
            }
            "diffusion_steps" => m.diffusion_steps = parse_num(key, value)?,
            "normalization" => {
                m.normalization = match value {
                    "printed" => Normalization::Printed,
                    "standard" => Normalization::Standard,
                    _ => return Err(Error::Config(format!("normalization: unknown `{value}`"))),
                }
            }
            "freeze_hypergraphs" => m.freeze_hypergraphs = parse_bool(key, value)?,
            "modalities" => {
                m.modalities = match value {
                    "tri" => Modalities::Tri,
                    "bi" => Modalities::Bi,
                    _ => return Err(Error::Config(format!("modalities: unknown `{value}`"))),
                }
            }
            "roi_pool" => {
                m.roi_pool = match value {
                    "all" => None,
                    v => Some(parse_list(key, v)?),
                }
            }
            "dpp_ridge" => m.dpp_ridge = parse_num(key, value)?,
            "synth.n_per_class" => s.n_per_class = parse_num(key, value)?,
            "synth.separation" => s.separation = parse_num(key, value)?,
            "synth.noise" => s.noise = parse_num(key, value)?,
            "synth.communities" => s.communities = parse_num(key, value)?,
            "synth.p_intra" => s.p_intra = parse_num(key, value)?,
            "synth.p_inter" => s.p_inter = parse_num(key, value)?,
            "synth.disease_rois" => {
                s.disease_rois = match value {
                    "auto" => None,
                    v => Some(parse_list(key, v)?),
                }
            }
            "synth.sc_removal_rate" => s.sc_removal_rate = parse_num(key, value)?,
            "synth.seed" => s.seed = parse_num(key, value)?,
            _ => return Err(Error::Config(format!("unknown key `{key}`"))),
        }
        self.explicit.insert(key.to_string());
        Ok(())
    }

    /// Synthetic spec with dimensions taken from the model section.
    pub fn synth_spec(&self) -> SynthSpec {
        SynthSpec {
            n_nodes: self.model.n_nodes,
            n_features: self.model.n_features,
            fv_len: self.model.fv_len,
            ..self.synth.clone()
        }
    }

    /// Every key with its effective value, one per line, in a fixed order.
    pub fn resolved(&self) -> String {
        let m = &self.model;
        let s = &self.synth;
        let mut out = String::new();
        let mut put = |k: &str, v: String| {
            let _ = writeln!(out, "{k} = {v}");
        };
        put("n_nodes", m.n_nodes.to_string());
        put("n_features", m.n_features.to_string());
        put("fv_len", m.fv_len.to_string());
        put("latent_dim", m.latent_dim.to_string());
        put("prior_subset", m.prior_subset.to_string());
        put("hyperedge_k", m.hyperedge_k.to_string());
        put("gamma", m.gamma.to_string());
        put(
            "bandwidth",
            match m.bandwidth {
                BandwidthPolicy::Scott => "scott".into(),
                BandwidthPolicy::Fixed(b) => b.to_string(),
            },
        );
        put("encoder_hidden", m.encoder_hidden.to_string());
        put("decoder_hidden", m.decoder_hidden.to_string());
        put("c1_hidden", m.c1_hidden.to_string());
        put("c2_hidden", m.c2_hidden.to_string());
        put("lr_generator", m.lr_generator.to_string());
        put("lr_discriminator", m.lr_discriminator.to_string());
        put("epochs_stage1", m.epochs_stage1.to_string());
        put("epochs_stage2", m.epochs_stage2.to_string());
        put("seed", m.seed.to_string());
        put("optimizer", m.optimizer.as_str().into());
        put("theta_optimizer", m.theta_optimizer.as_str().into());
        put("critic_ver_weight", m.critic_ver_weight.to_string());
        put(
            "weight_clip",
            m.weight_clip.map_or_else(|| "off".into(), |c| c.to_string()),
        );
        put("diffusion_steps", m.diffusion_steps.to_string());
        put(
            "normalization",
            match m.normalization {
                Normalization::Printed => "printed".into(),
                Normalization::Standard => "standard".into(),
            },
        );
        put("freeze_hypergraphs", m.freeze_hypergraphs.to_string());
        put(
            "modalities",
            match m.modalities {
                Modalities::Tri => "tri".into(),
                Modalities::Bi => "bi".into(),
            },
        );
        put(
            "roi_pool",
            m.roi_pool.as_deref().map_or_else(|| "all".into(), fmt_list),
        );
        put("dpp_ridge", m.dpp_ridge.to_string());
        put("synth.n_per_class", s.n_per_class.to_string());
        put("synth.separation", s.separation.to_string());
        put("synth.noise", s.noise.to_string());
        put("synth.communities", s.communities.to_string());
        put("synth.p_intra", s.p_intra.to_string());
        put("synth.p_inter", s.p_inter.to_string());
        put(
            "synth.disease_rois",
            s.disease_rois.as_deref().map_or_else(|| "auto".into(), fmt_list),
        );
        put("synth.sc_removal_rate", s.sc_removal_rate.to_string());
        put("synth.seed", s.seed.to_string());
        out
    }

    /// SHA-256 of the resolved text, hex encoded.
    pub fn hash(&self) -> String {
        hex::encode(Sha256::digest(self.resolved().as_bytes()))
    }
}
