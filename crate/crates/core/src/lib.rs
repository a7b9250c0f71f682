#![no_std]
extern crate alloc;

pub mod error;
pub mod geometry;
pub mod ident;
pub mod linalg;
pub mod mpc;
pub mod optim;
pub mod plant;

pub use error::{Error, Result};
