#![allow(clippy::needless_range_loop)]

pub mod cli;
pub mod cloud;
pub mod error;
pub mod field;
pub mod geom;
pub mod gradcheck;
pub mod io;
pub mod losses;
pub mod metrics;
pub mod model;
pub mod partsub;
pub mod perturb;
pub mod rng;
pub mod schema;
pub mod spatial;
pub mod synth;
pub mod trainer;
pub mod tree;

pub use error::{Error, Result};
