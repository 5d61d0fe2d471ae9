#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod chansel;
pub mod datamodel;
pub mod dynwin;
pub mod error;
pub mod harness;
pub mod metrics;
pub mod sigproc;
pub mod simgen;
pub mod tdca;

pub use error::{Error, Result};
