//! Abductive interpretation of time series driven by abstraction grammars.

pub mod ecg;
pub mod fixtures;
pub mod grammar;
pub mod interp;
pub mod io;
pub mod model;
pub mod oracle;
pub mod procedures;
pub mod reasoning;
pub mod report;
pub mod search;
pub mod temporal;
pub mod validate;
