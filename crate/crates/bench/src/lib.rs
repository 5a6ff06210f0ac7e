//! Benchmark driver for the matrix-free weighted-quadrature solver:
//! configuration, solve pipeline, CSV output and command line.

pub mod cli;
pub mod config;
pub mod output;
pub mod run;

#[derive(Debug, thiserror::Error)]
pub enum BenchError {
    #[error("configuration: {0}")]
    Config(String),
    #[error(transparent)]
    Core(#[from] mfwq_core::Error),
    #[error("i/o: {0}")]
    Io(#[from] std::io::Error),
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
    #[error("toml: {0}")]
    Toml(#[from] toml::de::Error),
}
