//! Certified kernel evaluation for two-parameter persistence.
//!
//! A tame bi-filtration is sliced along every positive-slope line through an
//! ordered pair of points `p < q`; the scale-space feature map of the slice
//! diagram, evaluated at the parameters of `p` and `q` and weighted by the
//! slope, gives a function `Phi_X(p, q)`. The kernel of two bi-filtrations is
//! the `L^2` inner product of these functions over ordered pairs in a
//! rectangle, computed here to a guaranteed accuracy by box subdivision.

pub mod bifiltration;
pub mod cli;
pub mod distances;
pub mod error;
pub mod feature;
pub mod kernel;
pub mod persistence;
pub mod point;
pub mod slicing;

pub use bifiltration::{parse_bifiltration, sublevel_bifiltration, BiFiltration, Function2D, Simplex};
pub use distances::{d_phi, matching_distance_sampled, DistanceResult};
pub use error::{Error, Result};
pub use feature::{
    bigphi_eval, derive_constants, phi_eval, weight, BaseKernel, EssentialPolicy,
    FeatureConstants, FeatureParams,
};
pub use kernel::{
    gram_matrix, kernel_approx, ApproxInterval, DiagramCache, EngineOptions, KernelResult,
};
pub use persistence::{bottleneck_distance, compute_diagram, PersistenceDiagram};
pub use point::{Point2, Rect};
pub use slicing::{restrict, slice_through, MonoFiltration, SliceLine};
