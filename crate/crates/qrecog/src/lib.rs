//! Classical simulator for recognizing spectral properties of black-box
//! unitaries: eigenvalue recognition, degeneracy counting, thermodynamic
//! estimates, circuit structure search and subspace distinguishability.

pub mod amplify;
pub mod circuit;
pub mod distinguish;
pub mod error;
pub mod fixtures;
pub mod linalg;
pub mod phase;
pub mod recognize;
pub mod report;
pub mod rng;
pub mod runner;
pub mod spectral;
pub mod statevec;
pub mod structure;
pub mod thermo;

pub use error::{Error, Result};
