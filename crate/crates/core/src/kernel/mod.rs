//! Certified approximation of the kernel `<X, Y> = integral over ordered
//! pairs (p, q) in R x R of Phi_X(p, q) Phi_Y(p, q)` by box subdivision.

mod cache;
mod engine;
mod geometry;
mod interval;

pub use cache::{DiagramCache, DEFAULT_CAPACITY};
pub use engine::{
    boxpair_interval, gram_matrix, kernel_approx, kernel_approx_cached, kernel_level,
    ClassCounts, EngineOptions, GramMatrix, KernelResult, KernelStats, LevelReport,
};
pub use geometry::{
    box_geometry, classify, classify_normalized, delta2_volume, geometry_of_boxes,
    trivial_upper, variation_delta, variation_delta_with_reach, BoxClass, BoxGeometry, BoxPair,
};
pub use interval::ApproxInterval;
