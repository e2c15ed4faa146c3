//! Null vectors and singularity of adjacency matrices of random d-regular
//! multigraphs, over F_p and over the integers.

pub mod asymptotics;
pub mod bruteoracle;
pub mod confmodel;
pub mod error;
pub mod exactcount;
pub mod experiments;
pub mod gfcore;
pub mod walkdist;

pub use error::{Error, Result};
