//! Checkpoints as a JSON bundle of named arrays tagged with the config hash.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::config::ModelConfig;
use crate::error::{Error, Result};
use crate::linalg::Mat;
use crate::nn::ParamSet;
use crate::prior::LatentPrior;
use crate::trainer::{EpochLosses, LossComponents, TrainState};

pub const FORMAT: &str = "hyperfuse-ckpt-v1";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NamedArray {
    pub name: String,
    pub rows: usize,
    pub cols: usize,
    /// Row-major.
    pub data: Vec<f64>,
}

impl NamedArray {
    pub fn from_mat(name: impl Into<String>, m: &Mat) -> Self {
        let data = (0..m.nrows()).flat_map(|i| m.row(i).iter().copied().collect::<Vec<_>>()).collect();
        Self {
            name: name.into(),
            rows: m.nrows(),
            cols: m.ncols(),
            data,
        }
    }

    pub fn to_mat(&self) -> Result<Mat> {
        if self.data.len() != self.rows * self.cols {
            return Err(Error::Parse {
                path: self.name.clone().into(),
                message: format!("{} values for a {}x{} array", self.data.len(), self.rows, self.cols),
            });
        }
        Ok(Mat::from_row_slice(self.rows, self.cols, &self.data))
    }

    fn scalar(name: impl Into<String>, v: f64) -> Self {
        Self {
            name: name.into(),
            rows: 1,
            cols: 1,
            data: vec![v],
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub format: String,
    pub config_hash: String,
    /// Kept as text so every u64 survives the JSON round trip.
    pub seed: String,
    pub arrays: Vec<NamedArray>,
}

const HISTORY_COLS: usize = 14;

fn history_row(h: &EpochLosses) -> [f64; HISTORY_COLS] {
    let c = &h.components;
    [
        h.stage as f64,
        h.epoch as f64,
        c.g,
        c.dz,
        c.rec1,
        c.rec2,
        c.cls1,
        c.cls2,
        c.ahf,
        h.dh,
        h.ver,
        h.cls3,
        h.total,
        h.clipped as f64,
    ]
}

fn history_from_row(r: &[f64]) -> EpochLosses {
    EpochLosses {
        stage: r[0] as u8,
        epoch: r[1] as usize,
        components: LossComponents {
            g: r[2],
            dz: r[3],
            rec1: r[4],
            rec2: r[5],
            cls1: r[6],
            cls2: r[7],
            ahf: r[8],
        },
        dh: r[9],
        ver: r[10],
        cls3: r[11],
        total: r[12],
        clipped: r[13] as usize,
    }
}

impl Checkpoint {
    pub fn from_state(state: &TrainState, config_hash: &str) -> Self {
        let mut arrays = Vec::new();
        for (name, t) in state.model.named_tensors() {
            arrays.push(NamedArray::from_mat(format!("model.{name}"), t));
        }
        for (group, opt) in state.optimizers.groups() {
            arrays.push(NamedArray::scalar(format!("optim.{group}.steps"), opt.steps as f64));
            for (kind, i, m) in opt.moments() {
                arrays.push(NamedArray::from_mat(format!("optim.{group}.{kind}.{i}"), m));
            }
        }
        if let Some(p) = &state.prior {
            arrays.push(NamedArray::from_mat("prior.centers", &p.centers));
            arrays.push(NamedArray::scalar("prior.bandwidth", p.bandwidth));
        }
        arrays.push(NamedArray::scalar("epochs.stage1", state.stage1_epochs as f64));
        arrays.push(NamedArray::scalar("epochs.stage2", state.stage2_epochs as f64));
        let fc = EpochLosses {
            components: state.frozen_components,
            ..Default::default()
        };
        arrays.push(NamedArray {
            name: "frozen_components".into(),
            rows: 1,
            cols: HISTORY_COLS,
            data: history_row(&fc).to_vec(),
        });
        arrays.push(NamedArray {
            name: "history".into(),
            rows: state.history.len(),
            cols: HISTORY_COLS,
            data: state.history.iter().flat_map(history_row).collect(),
        });
        Self {
            format: FORMAT.into(),
            config_hash: config_hash.into(),
            seed: state.seed.to_string(),
            arrays,
        }
    }

    pub fn get(&self, name: &str) -> Result<&NamedArray> {
        self.arrays
            .iter()
            .find(|a| a.name == name)
            .ok_or_else(|| Error::InvalidArgument(format!("checkpoint has no array `{name}`")))
    }

    fn scalar(&self, name: &str) -> Result<f64> {
        Ok(self.get(name)?.data.first().copied().unwrap_or(0.0))
    }

    /// Rebuilds the training state; `config` must describe the same shapes.
    pub fn restore(&self, config: &ModelConfig) -> Result<TrainState> {
        if self.format != FORMAT {
            return Err(Error::InvalidArgument(format!("unknown checkpoint format `{}`", self.format)));
        }
        let seed: u64 = self
            .seed
            .parse()
            .map_err(|_| Error::InvalidArgument(format!("bad checkpoint seed `{}`", self.seed)))?;
        let prior = match self.get("prior.centers") {
            Ok(c) => Some(LatentPrior::new(c.to_mat()?, self.scalar("prior.bandwidth")?)?),
            Err(_) => None,
        };
        let mut state = TrainState::new(config, prior, seed);

        let names: Vec<String> = state.model.named_tensors().into_iter().map(|(n, _)| n).collect();
        for (name, t) in names.iter().zip(state.model.tensors_mut()) {
            load_into(self.get(&format!("model.{name}"))?, t)?;
        }
        for (group, opt) in state.optimizers.groups_mut() {
            opt.steps = self.scalar(&format!("optim.{group}.steps"))? as u64;
            for (i, m) in opt.first_moment.iter_mut().enumerate() {
                load_into(self.get(&format!("optim.{group}.m.{i}"))?, m)?;
            }
            for (i, v) in opt.second_moment.iter_mut().enumerate() {
                load_into(self.get(&format!("optim.{group}.v.{i}"))?, v)?;
            }
        }
        state.stage1_epochs = self.scalar("epochs.stage1")? as usize;
        state.stage2_epochs = self.scalar("epochs.stage2")? as usize;
        state.frozen_components = history_from_row(&self.get("frozen_components")?.data).components;
        state.history = self.get("history")?.data.chunks(HISTORY_COLS).map(history_from_row).collect();
        Ok(state)
    }

    pub fn to_json(&self) -> Result<String> {
        let mut s = serde_json::to_string(self)?;
        s.push('\n');
        Ok(s)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_json()?)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        if !path.exists() {
            return Err(Error::MissingFile(path.to_path_buf()));
        }
        let text = std::fs::read_to_string(path)?;
        Ok(serde_json::from_str(&text)?)
    }
}

fn load_into(a: &NamedArray, target: &mut Mat) -> Result<()> {
    if (a.rows, a.cols) != (target.nrows(), target.ncols()) {
        return Err(Error::Shape {
            field: a.name.clone(),
            expected: format!("{}x{}", target.nrows(), target.ncols()),
            found: format!("{}x{}", a.rows, a.cols),
        });
    }
    *target = a.to_mat()?;
    Ok(())
}
