//! Steady axisymmetric compressible subsonic jets issuing from a semi-infinite
//! nozzle, computed as minimizers of a truncated free-boundary functional for
//! the stream function.

pub mod flow_state;
pub mod asymptotics;
pub mod cli_io;
pub mod energy;
pub mod freeboundary_fit;
pub mod geometry;
pub mod numerics;
pub mod solver;
