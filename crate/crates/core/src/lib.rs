//! Function-on-function Gaussian-process emulation with a spectral-distance
//! correlation, co-kriging over a strain grid, sparse MAP fitting, and
//! inverse design.

pub mod cokrige;
pub mod error;
pub mod estimate;
pub mod harness;
pub mod linalg;
pub mod mimic;
pub mod spectral;

pub use cokrige::{hpd_interval, Prediction, ResponseCurve, StrainGrid, TrainedEmulator};
pub use error::{Error, Result};
pub use estimate::{fit, FitConfig, FitTrace, TrainingData};
pub use mimic::{optimize, reconstruct_structure, MimicConfig, MimicProblem, MimicResult};
pub use spectral::{KernelFamily, KernelParams, StructureCurve, StructureDesign};
