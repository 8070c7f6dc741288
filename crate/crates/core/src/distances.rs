//! Distances derived from the kernel, and a sampled lower bound for the
//! matching distance.

use std::f64::consts::FRAC_PI_2;

use rayon::prelude::*;
use serde::Serialize;

use crate::bifiltration::BiFiltration;
use crate::error::{Error, Result};
use crate::feature::FeatureParams;
use crate::kernel::{kernel_approx_cached, ApproxInterval, DiagramCache, EngineOptions, KernelResult};
use crate::persistence::{bottleneck_distance, Workspace};
use crate::point::Point2;
use crate::slicing::{entry_values_into, SliceLine};

#[derive(Debug, Clone, Serialize)]
pub struct DistanceResult {
    pub value: f64,
    pub interval: ApproxInterval,
    pub kernels: [KernelResult; 3],
}

/// `sqrt(<X,X> - 2 <X,Y> + <Y,Y>)`, each kernel certified to `epsilon / 3`.
pub fn d_phi(
    x: &BiFiltration,
    y: &BiFiltration,
    epsilon: f64,
    params: &FeatureParams,
    options: &EngineOptions,
) -> Result<DistanceResult> {
    if !(epsilon.is_finite() && epsilon > 0.0) {
        return Err(Error::InvalidParameter(format!("epsilon = {epsilon} must be positive")));
    }
    let cache = DiagramCache::with_capacity(options.cache_capacity);
    let e = epsilon / 3.0;
    let kxx = kernel_approx_cached(x, x, e, params, options, &cache)?;
    let kxy = kernel_approx_cached(x, y, e, params, options, &cache)?;
    let kyy = kernel_approx_cached(y, y, e, params, options, &cache)?;
    let (a, b, c) = (kxx.interval, kxy.interval, kyy.interval);
    let rad_lo = (a.lo - 2.0 * b.hi + c.lo).max(0.0);
    let rad_hi = (a.hi - 2.0 * b.lo + c.hi).max(0.0);
    let mid = (a.lo - 2.0 * b.lo + c.lo).clamp(rad_lo, rad_hi);
    Ok(DistanceResult {
        value: mid.sqrt(),
        interval: ApproxInterval::new(rad_lo.sqrt(), rad_hi.sqrt()),
        kernels: [kxx, kxy, kyy],
    })
}

/// The `k x k` grid of slices used by [`matching_distance_sampled`]: angles
/// `j pi / (2(k+1))` and base points at fractions `i / (k+1)` of the stretch
/// of the antidiagonal whose slices meet the rectangle.
pub fn sample_slices(params: &FeatureParams, k: usize) -> Vec<SliceLine> {
    let r = &params.rect;
    let mut out = Vec::with_capacity(k * k);
    for j in 1..=k {
        let theta = j as f64 * FRAC_PI_2 / (k + 1) as f64;
        let (s, c) = theta.sin_cos();
        let base = |p: Point2| (p.x * s - p.y * c) / (c + s);
        let (lo, hi) = (base(Point2::new(r.x0, r.y1)), base(Point2::new(r.x1, r.y0)));
        for i in 1..=k {
            let b1 = lo + (hi - lo) * i as f64 / (k + 1) as f64;
            let b = Point2::new(b1, -b1);
            if let Ok(line) = SliceLine::through_point(b, theta) {
                out.push(line);
            }
        }
    }
    out
}

/// Largest weighted bottleneck distance over the sampled slices; a lower bound
/// for the matching distance of the policy-adjusted diagrams.
pub fn matching_distance_sampled(
    x: &BiFiltration,
    y: &BiFiltration,
    k: usize,
    params: &FeatureParams,
) -> Result<f64> {
    if k == 0 {
        return Err(Error::InvalidParameter("at least one sample is required".into()));
    }
    params.validate()?;
    let lines = sample_slices(params, k);
    let per_line: Vec<f64> = lines
        .par_iter()
        .map_init(
            || (Workspace::default(), Vec::new()),
            |(ws, values), line| {
                entry_values_into(x, line, values);
                let dx = params.apply_policy(&ws.diagram_of_values(x, values, params.degree));
                entry_values_into(y, line, values);
                let dy = params.apply_policy(&ws.diagram_of_values(y, values, params.degree));
                line.weight() * bottleneck_distance(&dx, &dy)
            },
        )
        .collect();
    Ok(per_line.into_iter().fold(0.0, f64::max))
}
