//! Joint outcome tables from classical, sequential quantum and process-matrix
//! models, with the common-knowledge closure and agreement checks on top.

pub mod agreement;
pub mod classical;
pub mod error;
pub mod fuzz;
pub mod linalg;
pub mod probability;
pub mod process;
pub mod quantum;
pub mod random;
pub mod report;
pub mod scenario;
