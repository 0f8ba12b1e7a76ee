pub mod dsl;
pub mod engine;
pub mod instances;
pub mod list;
pub mod policy;
pub mod rank;
pub mod search;
pub mod topology;
pub mod trace;
pub mod workloads;
