pub mod densela;
pub mod error;
pub mod estimates;
pub mod io;
pub mod models;
pub mod qbsys;
pub mod rom;
pub mod sim;
pub mod validate;

pub use error::{Error, Result};
