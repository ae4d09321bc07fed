//! Independent oracles and inequality audits.

pub mod audit;
pub mod calibrate;
pub mod oracle;
pub mod report;
