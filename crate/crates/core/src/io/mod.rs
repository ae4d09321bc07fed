//! File formats: configuration, snapshots, trajectories and manifests.

pub mod config;
pub mod manifest;
pub mod snapshot;
pub mod trajectory;
