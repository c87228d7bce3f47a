//! Super Harmonic and Extreme Harmonic online bin packing with exact certification
//! of competitive ratios.

pub mod adversary;
pub mod certify;
pub mod error;
pub mod generate;
pub mod item;
pub mod knapsack;
pub mod packer;
pub mod paramfile;
pub mod params;
pub mod postprocess;
pub mod rational;
pub mod stream;
pub mod weights;

pub use error::{Error, ParseError};
pub use item::{Color, Mark};
pub use params::{DerivedTables, GeneratorConfig, Mode, ParameterSet};
pub use rational::{parse_rational, Rational};
