pub mod biastest;
pub mod census;
pub mod estimator;
pub mod montecarlo;
pub mod report;
pub mod rng;
pub mod sampler;
pub mod statskit;
