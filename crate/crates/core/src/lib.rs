pub mod approx;
pub mod bench;
pub mod classify;
pub mod cli;
pub mod decomposition;
pub mod engine;
pub mod error;
pub mod exact;
pub mod graph;
pub mod io;
pub mod model;
pub mod numeric;
