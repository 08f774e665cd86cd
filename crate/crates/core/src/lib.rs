//! Robust market-potential assessment: a small expression IR, uncertainty
//! sets, a local NLP solver, and the cutting-set robust solver built on them.

pub mod cli;
pub mod data;
pub mod error;
pub mod experiments;
pub mod expr;
pub mod models;
pub mod nlp;
pub mod robust;
pub mod uncertainty;

pub use error::{Error, Result};
