//! Benchmark problems: a linear-quadratic test family, a kinematic car
//! passing a drifting obstacle, and coupled Kuramoto oscillators.

mod car;
mod kuramoto;
mod lq;

pub use car::{CarBenchmark, CarParams};
pub use kuramoto::{KuramotoBenchmark, KuramotoParams};
pub use lq::LinearQuadratic;
