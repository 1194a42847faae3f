//! Synthetic multimodal cohorts with a planted, tunable class signal.
//!
//! Class 1 differs from class 0 in three places, all scaled by the
//! separation `δ`: feature-vector means move by `δ` per coordinate, node
//! feature rows of the disease ROIs move by `±δ` per coordinate, and edges
//! incident to disease ROIs are dropped with probability
//! `min(1, sc_removal_rate · δ)`.

use std::path::{Path, PathBuf};

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::datamodel::{save_cohort, Cohort, Subject};
use crate::error::{Error, Result};
use crate::linalg::Mat;
use crate::rng::stream;

#[derive(Clone, Debug, PartialEq)]
pub struct SynthSpec {
    pub n_nodes: usize,
    pub n_features: usize,
    pub fv_len: usize,
    pub n_per_class: usize,
    pub separation: f64,
    pub noise: f64,
    pub communities: usize,
    pub p_intra: f64,
    pub p_inter: f64,
    /// `None` picks ten evenly spaced ROIs.
    pub disease_rois: Option<Vec<usize>>,
    pub sc_removal_rate: f64,
    pub seed: u64,
}

impl Default for SynthSpec {
    fn default() -> Self {
        Self {
            n_nodes: 90,
            n_features: 187,
            fv_len: 128,
            n_per_class: 40,
            separation: 2.0,
            noise: 1.0,
            communities: 4,
            p_intra: 0.6,
            p_inter: 0.1,
            disease_rois: None,
            sc_removal_rate: 0.1,
            seed: 0,
        }
    }
}

impl SynthSpec {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::Config(msg));
        if self.n_nodes == 0 || self.n_features == 0 || self.fv_len == 0 || self.n_per_class == 0 {
            return bad("synthetic cohort counts must be positive".into());
        }
        if !(self.separation.is_finite() && self.separation >= 0.0) {
            return bad(format!("synth.separation must be >= 0, got {}", self.separation));
        }
        if !(self.noise.is_finite() && self.noise > 0.0) {
            return bad(format!("synth.noise must be > 0, got {}", self.noise));
        }
        if self.communities == 0 || self.communities > self.n_nodes {
            return bad(format!(
                "synth.communities must be in 1..={}, got {}",
                self.n_nodes, self.communities
            ));
        }
        for (key, p) in [("synth.p_intra", self.p_intra), ("synth.p_inter", self.p_inter)] {
            if !(0.0..=1.0).contains(&p) {
                return bad(format!("{key} must be a probability, got {p}"));
            }
        }
        if !(self.sc_removal_rate.is_finite() && self.sc_removal_rate >= 0.0) {
            return bad(format!("synth.sc_removal_rate must be >= 0, got {}", self.sc_removal_rate));
        }
        if let Some(rois) = &self.disease_rois {
            if let Some(&r) = rois.iter().find(|&&r| r >= self.n_nodes) {
                return bad(format!("disease ROI {r} out of range for {} nodes", self.n_nodes));
            }
            let mut sorted = rois.clone();
            sorted.sort_unstable();
            sorted.dedup();
            if sorted.len() != rois.len() {
                return bad("disease ROIs must be distinct".into());
            }
        }
        Ok(())
    }

    pub fn disease_roi_set(&self) -> Vec<usize> {
        match &self.disease_rois {
            Some(r) => r.clone(),
            None => {
                let count = self.n_nodes.min(10);
                (0..count).map(|i| i * self.n_nodes / count).collect()
            }
        }
    }

    pub fn community_of(&self, node: usize) -> usize {
        node * self.communities / self.n_nodes
    }
}

fn gaussian<R: Rng>(rng: &mut R) -> f64 {
    StandardNormal.sample(rng)
}

/// Quantities shared by every subject of a cohort.
struct Layout {
    fv_base: Vec<f64>,
    fv_sign: Vec<f64>,
    ft_base: Mat,
    /// `±1` shift pattern per node; only disease ROIs use theirs.
    ft_shift: Mat,
    disease: Vec<bool>,
}

fn layout(spec: &SynthSpec) -> Layout {
    let mut rng = stream(spec.seed, "synth.layout", 0);
    let fv_base = (0..spec.fv_len).map(|_| rng.random_range(-1.0..1.0)).collect();
    let fv_sign = (0..spec.fv_len)
        .map(|_| if rng.random::<bool>() { 1.0 } else { -1.0 })
        .collect();
    let ft_base = Mat::from_fn(spec.n_nodes, spec.n_features, |_, _| rng.random_range(-1.0..1.0));
    let ft_shift = Mat::from_fn(spec.n_nodes, spec.n_features, |_, _| {
        if rng.random::<bool>() {
            1.0
        } else {
            -1.0
        }
    });
    let mut disease = vec![false; spec.n_nodes];
    for r in spec.disease_roi_set() {
        disease[r] = true;
    }
    Layout {
        fv_base,
        fv_sign,
        ft_base,
        ft_shift,
        disease,
    }
}

fn subject(spec: &SynthSpec, lay: &Layout, index: usize) -> Subject {
    let label = index % 2;
    let shift = if label == 1 { spec.separation } else { 0.0 };
    let mut rng = stream(spec.seed, "synth.subject", index as u64);
    let n = spec.n_nodes;

    let removal = if label == 1 {
        (spec.sc_removal_rate * spec.separation).min(1.0)
    } else {
        0.0
    };
    let mut adjacency = Mat::zeros(n, n);
    for i in 0..n {
        for j in i + 1..n {
            let p = if spec.community_of(i) == spec.community_of(j) {
                spec.p_intra
            } else {
                spec.p_inter
            };
            let mut edge = rng.random::<f64>() < p;
            let dropped = rng.random::<f64>() < removal;
            if edge && dropped && (lay.disease[i] || lay.disease[j]) {
                edge = false;
            }
            if edge {
                adjacency[(i, j)] = 1.0;
                adjacency[(j, i)] = 1.0;
            }
        }
    }

    let node_features = Mat::from_fn(n, spec.n_features, |r, k| {
        let planted = if lay.disease[r] { shift * lay.ft_shift[(r, k)] } else { 0.0 };
        lay.ft_base[(r, k)] + planted + spec.noise * gaussian(&mut rng)
    });

    let centered = if label == 1 { 0.5 } else { -0.5 };
    let feature_vector = (0..spec.fv_len)
        .map(|j| {
            lay.fv_base[j] + centered * spec.separation * lay.fv_sign[j] + spec.noise * gaussian(&mut rng)
        })
        .collect();

    Subject {
        id: format!("sub{index:03}"),
        adjacency,
        node_features,
        feature_vector,
        label,
    }
}

/// Balanced cohort with interleaved labels (even index = class 0).
pub fn generate_cohort(spec: &SynthSpec) -> Result<Cohort> {
    spec.validate()?;
    let lay = layout(spec);
    let subjects = (0..2 * spec.n_per_class).map(|i| subject(spec, &lay, i)).collect();
    Cohort::new(subjects)
}

pub fn write_cohort(cohort: &Cohort, dir: &Path) -> Result<PathBuf> {
    save_cohort(cohort, dir)
}
