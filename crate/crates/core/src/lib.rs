//! Calibration of oscillatory ODE models against periodic time series
//! through their harmonic power spectra.

pub mod bounds;
pub mod config;
pub mod data;
pub mod error;
pub mod intervention;
pub mod io;
pub mod model;
pub mod ode;
pub mod pipeline;
pub mod prognostic;
pub mod sampler;
pub mod special;
pub mod spectral;

pub use bounds::ParamBounds;
pub use config::RunConfig;
pub use data::ReplicateSeries;
pub use error::{Error, Result};
pub use model::{HierarchicalModel, LatentSpectra, PositivePrior, SpectrumSource};
pub use ode::{IntegrationFailure, OdeSettings, SystemState, ThetaVector, Trajectory, NUM_PARAMS};
pub use prognostic::{DesignEval, ProspectMap, ProspectSettings};
pub use sampler::{Gmss, SamplerConfig, StandardMh, StepSizes, Target, WeightedSample};
pub use spectral::{HarmonicCoefficients, NoiseScale, PowerSpectrum, VarianceConvention};
