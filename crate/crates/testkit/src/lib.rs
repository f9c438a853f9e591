//! Test support shared by the workspace's integration suites.
//!
//! Nothing here depends on `ceph-core`: the oracles recompute expected
//! values along independent numerical routes.

pub mod csv_check;
pub mod dd;
pub mod http;
pub mod oracle;
pub mod synth;
