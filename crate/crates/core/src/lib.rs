pub mod error;
pub mod fourier;
pub mod hedging;
pub mod malliavin;
pub mod mmm;
pub mod models;
pub mod payoffs;
pub mod quadrature;
pub mod representation;
pub mod simulator;
pub mod special;

pub use error::{Error, Result};
pub use fourier::{EngineValue, FourierEngine, Multiplier, QuadratureGrid, Rule, VMax};
pub use models::{LevyExponent, LevyModel, ModelKind};
pub use payoffs::{DampedPayoff, PayoffKind};
