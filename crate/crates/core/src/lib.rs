//! Numerical tools for nonlocal (fractional) perimeters and curvatures.

pub mod cli;
pub mod curvature;
pub mod domains;
pub mod error;
pub mod halfspace;
pub mod kernel;
pub mod perimeter;
pub mod potential;
pub mod quadrature;
pub mod reduction;
pub mod specfun;

pub use domains::{Domain, Region, StarSurface};
pub use error::{Error, Result};
pub use specfun::{FracParams, HarmonicBasis};

/// Least-squares slope of y against x.
pub fn fit_slope(x: &[f64], y: &[f64]) -> f64 {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = x.iter().map(|a| (a - mx) * (a - mx)).sum();
    sxy / sxx
}
