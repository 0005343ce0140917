pub mod gen;
pub mod mask;
pub mod recon;
pub mod report;
pub mod score;
pub mod serve;
pub mod study;
