//! ÆtherFlow: a desk-scale wireless SDN testbed.
//!
//! The crate is layered bottom-up: `wire` is the OpenFlow-subset codec with
//! the wireless experimenter extension, `dataplane` is the simulated
//! switch/AP, `radio` the RF propagation and station mobility model,
//! `controller` the SDN controller core, `handoff` the L2 fast-handoff
//! application, and `harness` the deterministic experiment driver behind
//! the `afx` binary.

pub mod controller;
pub mod dataplane;
pub mod handoff;
pub mod harness;
pub mod radio;
pub mod wire;
