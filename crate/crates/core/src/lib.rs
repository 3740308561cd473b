//! Simulation and design toolkit for a DC motor speed loop closed over a
//! wireless network with variable round-trip delay.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod delay_approx;
pub mod delay_est;
pub mod lti;
pub mod netchan;
pub mod pid;
pub mod plant;
pub mod scenario;
pub mod smith;
pub mod stability;
pub mod sysid;
