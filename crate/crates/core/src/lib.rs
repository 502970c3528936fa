//! Deep generative imputation for data that is missing not at random.
//!
//! The crate trains three VAE families on partially observed matrices:
//! GINA (identifiable VAE with an auxiliary-conditioned prior and an explicit
//! missing-mechanism model), PVAE and Not-MIWAE. All three maximize an
//! importance-weighted bound computed with the small reverse-mode engine in
//! [`autodiff`]. Around the models sit synthetic MNAR generators
//! ([`synthdata`]), data handling ([`dataio`]), metrics and identifiability
//! probes ([`evalsuite`]) and information-reward feature acquisition
//! ([`active`]).

pub mod active;
pub mod autodiff;
pub mod dataio;
pub mod distributions;
pub mod evalsuite;
pub mod models;
pub mod synthdata;
