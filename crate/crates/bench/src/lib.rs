//! Benchmarks for curvecast; see `benches/`.

pub use curvecast_core;
