pub mod adapter;
pub mod config;
pub mod dataset;
pub mod embedding;
pub mod gateway;
pub mod pipeline;
pub mod providers;
pub mod report;
pub mod synthetic;

pub use gdefense_core as core;
