//! Full-order model builders and small test systems.

mod burgers_fd;
mod burgers_fem;
mod fhn;
pub mod toy;

#[cfg(test)]
mod tests;

pub use burgers_fd::{build_burgers_fd, periodic_convection, BurgersFdConfig};
pub use burgers_fem::{build_burgers_fem, burgers_initial_profile, BurgersFemConfig};
pub use fhn::{build_fhn_lifted, fhn_current, fhn_input, FhnConfig, FhnMass};
pub use toy::{diagonal_2d, random_stable_system, scalar_system};
