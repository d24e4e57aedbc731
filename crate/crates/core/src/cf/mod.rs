//! Scalar distributions, characteristic functions of linear combinations of
//! independent components, and numerical inversion back to cdf and pdf.

pub mod dist;
pub mod inversion;
pub mod lincombo;
pub mod quadrature;

use thiserror::Error;

pub use dist::{Mixture, ScalarDist};
pub use inversion::{
    clamped_pdf_count, gil_pelaez_cdf, invert_pdf, CdfGradient, CfTable, QuantileGradient,
};
pub use lincombo::LinComboCF;
pub use quadrature::{capped_grid_count, QuadratureSpec, Truncation};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum CfError {
    #[error("invalid distribution parameter: {0}")]
    InvalidParameter(String),
    #[error("random variable is almost surely constant (value {value})")]
    DegenerateDistribution { value: f64 },
    #[error("{coefficients} coefficients for {components} components")]
    LengthMismatch {
        coefficients: usize,
        components: usize,
    },
    #[error("probability {0} outside (0, 1)")]
    InvalidProbability(f64),
}
