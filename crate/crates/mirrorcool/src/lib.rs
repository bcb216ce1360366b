//! Mirror-mediated cooling of a two-level atom in front of a retroflected
//! pump beam: closed-form perturbative force and temperature expressions,
//! and a semiclassical multimode stochastic simulator.

pub mod analytic;
pub mod ensemble;
pub mod output;
pub mod params;
pub mod sde;
pub mod specfun;
