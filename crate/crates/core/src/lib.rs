//! Numerical laboratory for self-conformal measures: holomorphic IFS
//! cocycles, twisted transfer operators, the model disintegration, Dolgopyat
//! operators, the norm/angle renewal walk and Fourier decay estimates.

pub mod dolgopyat;
pub mod error;
pub mod fixtures;
pub mod fourier;
pub mod grid;
pub mod ifs;
pub mod measure;
pub mod model;
pub mod renewal;
pub mod rng;
pub mod stats;
pub mod transfer;
pub mod uni;

pub use error::{Error, Result};
pub use ifs::{ConformalIfs, HolomorphicMap, MapKind, MapSpec, Word};
pub use grid::{DiscGrid, Field, GridFunction};
pub use measure::{EmpiricalMeasure, ProbVector};
pub use model::Model;
pub use num_complex::Complex64;
pub use transfer::TwistParams;
pub use uni::{InducingCertificate, UniWitness};
pub use dolgopyat::{DolgopyatParams, DolgopyatSetup, MeasuredConstants};
pub use fourier::DecayScan;
pub use renewal::{CircleUnit, StopRule};
