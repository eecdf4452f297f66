//! Deterministic discrete-round simulation of transaction scheduling in
//! sharded ledgers under adversarial transaction generation.
//!
//! Shards are atomic actors owning disjoint account sets and append-only
//! ledgers; transactions split into one subtransaction per destination
//! shard and commit atomically or not at all. An adversary injects
//! transactions under a `⌊rho*t⌋ + b` per-shard window budget. Two
//! schedulers are provided: a leader-based epoch scheduler for uniform
//! networks ([`bds`]) and a fully distributed, hierarchically clustered
//! scheduler for non-uniform ones ([`fds`]), together with stability
//! checkers, an overload construction, and a sweep/CLI front end.
//!
//! Start from [`config::RunConfig`] and [`config::execute`] for whole
//! runs, or drive [`engine::run_simulation`] directly with a scripted
//! [`adversary::InjectionTrace`]. The `examples/` directory contains one
//! runnable program per capability.

pub mod adversary;
pub mod bds;
pub mod cli;
pub mod cluster;
pub mod coloring;
pub mod config;
pub mod engine;
pub mod fds;
pub mod metrics;
pub mod model;
pub mod rate;
pub mod scenarios;
pub mod topology;
