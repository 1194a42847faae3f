//! Multimodal brain-network classification: a KDE-prior graph GAN over
//! structural connectivity and node time-series features, a graph
//! autoencoder over an image feature vector, and adversarial hypergraph
//! fusion of the two latent representations.

pub mod checkpoint;
pub mod cnnae;
pub mod config;
pub mod datamodel;
pub mod error;
pub mod evalharness;
pub mod graphgan;
pub mod hyperfusion;
pub mod linalg;
pub mod nn;
pub mod optim;
pub mod prior;
pub mod rng;
pub mod synthdata;
pub mod trainer;

pub use error::{Error, Result};
pub use linalg::Mat;
