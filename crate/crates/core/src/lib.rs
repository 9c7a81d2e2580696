pub mod autodiff;
pub mod config;
pub mod error;
pub mod fem;
pub mod ifenn;
pub mod landscape;
pub mod loss;
pub mod mesh;
pub mod network;
pub mod optim;

pub use error::{Error, Result};
