//! Spatial interpolation of PM2.5 over sparse sensor networks with a
//! physics-guided graph neural network, classical geostatistical baselines,
//! and a convection-diffusion simulator for synthetic ground truth.

pub mod autodiff;
pub mod baselines;
pub mod data_io;
pub mod evaluation;
pub mod geo;
pub mod model;
pub mod training;
