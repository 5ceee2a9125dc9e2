//! Forward solver and fractional-order recovery for the subdiffusion equation
//! ∂_t^ρ u + A u = 0 whose operator has a negative leading eigenvalue.

pub mod cylinder;
pub mod experiment;
pub mod fractional_calculus;
pub mod logspace;
pub mod mittag_leffler;
pub mod order_estimator;
pub mod quadrature;
pub mod special;
pub mod spectral_model;
