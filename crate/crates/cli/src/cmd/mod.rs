pub mod eval;
pub mod generate;
pub mod report;
pub mod synth;
pub mod train;
