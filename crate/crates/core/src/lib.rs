//! Testing whether languages are related: sound-class matrices, maximum
//! likelihood trees with invariant sites, a bootstrap likelihood ratio test,
//! a permutation-test baseline and quartet tree comparison.

pub mod bootsim;
pub mod cli;
pub mod cluster;
pub mod error;
pub mod lexdata;
pub mod lrt;
pub mod mlsearch;
pub mod msa;
pub mod permtest;
pub mod phylik;
pub mod rng;
pub mod soundclass;
pub mod submodel;
pub mod treecmp;

pub use error::{Error, Result};
