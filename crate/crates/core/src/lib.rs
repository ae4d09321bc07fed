// negated comparisons deliberately reject NaN
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod error;
pub mod field;
pub mod grid;
pub mod io;
pub mod mild;
pub mod noise;
pub mod nonlinearity;
pub mod path;
pub mod random;
pub mod run;
pub mod verify;
pub mod seed;

mod fft;

pub use error::{Error, Result};
pub use field::{PhysicalField, SobolevOrder, SpectralField};
pub use grid::Grid;
pub use path::{FieldPath, PathGrid};
