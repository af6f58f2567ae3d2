pub mod config;
pub mod error;
pub mod exec;
pub mod experiment;
pub mod forward;
pub mod inference;
pub mod link;
pub mod obs;
pub mod prior;
pub mod quadrature;
pub mod rates;
pub mod rng;
pub mod special;
pub mod spectral;
