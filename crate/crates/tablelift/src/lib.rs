//! Service and command-line front ends for `tablelift-core`.

pub mod cli;
pub mod service;
