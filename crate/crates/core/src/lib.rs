pub mod bisubmersion;
pub mod calculus;
pub mod dense;
pub mod error;
pub mod exact;
pub mod expr;
pub mod foliation;
pub mod polysym;
pub mod quantize;
pub mod report;
pub mod ring;
pub mod scenario;
pub mod spectra;

pub use error::{Error, Result};
