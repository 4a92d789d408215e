pub mod cli;
pub mod data;
pub mod model;
pub mod report;
pub mod stats;
pub mod tensor;
pub mod train;
pub mod transfer;
