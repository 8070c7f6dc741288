//! Feature maps: the one-parameter scale-space map `phi` on persistence
//! diagrams and the two-parameter map `Phi` obtained by evaluating `phi`
//! along the slice through a pair of ordered points.

use std::f64::consts::{FRAC_1_SQRT_2, PI, SQRT_2};

use serde::Serialize;

use crate::bifiltration::BiFiltration;
use crate::error::{Error, Result};
use crate::kernel::{ApproxInterval, DiagramCache};
use crate::persistence::PersistenceDiagram;
use crate::point::{Point2, Rect};
use crate::slicing::slice_through;

/// Shape of the peak placed on each diagram point.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum BaseKernel {
    /// `(1 / 4 pi t) exp(-|x - z|^2 / 4t)`.
    Gaussian,
    /// Cone of the same height with support radius `sqrt(4t)`.
    Triangle,
}

/// What to do with classes that never die.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum EssentialPolicy {
    Drop,
    /// Replace `+inf` by the given death value.
    Cap(f64),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct FeatureParams {
    pub t: f64,
    pub rect: Rect,
    pub base_kernel: BaseKernel,
    pub degree: usize,
    pub essential: EssentialPolicy,
}

impl Serialize for Rect {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        [self.x0, self.y0, self.x1, self.y1].serialize(s)
    }
}

impl Default for FeatureParams {
    fn default() -> Self {
        FeatureParams {
            t: 0.1,
            rect: Rect::UNIT,
            base_kernel: BaseKernel::Gaussian,
            degree: 0,
            essential: EssentialPolicy::Drop,
        }
    }
}

impl FeatureParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.t.is_finite() && self.t > 0.0) {
            return Err(Error::InvalidParameter(format!("t = {} must be positive", self.t)));
        }
        if !self.rect.is_valid() {
            return Err(Error::InvalidParameter(
                "rectangle must have positive width and height".into(),
            ));
        }
        if let EssentialPolicy::Cap(v) = self.essential {
            if !(v.is_finite() && v > self.rect.x1.max(self.rect.y1)) {
                return Err(Error::InvalidParameter(format!(
                    "cap value {v} must exceed the rectangle's top-right coordinates"
                )));
            }
        }
        Ok(())
    }

    /// Finite points of `d` after applying the essential-class policy.
    pub fn finite_points(&self, d: &PersistenceDiagram) -> Vec<(f64, f64)> {
        let mut out: Vec<(f64, f64)> = d.finite_points().collect();
        if let EssentialPolicy::Cap(v) = self.essential {
            out.extend(d.essential_births().filter(|&b| b < v).map(|b| (b, v)));
        }
        out
    }

    /// `d` with the policy applied, as a diagram without essential points.
    pub fn apply_policy(&self, d: &PersistenceDiagram) -> PersistenceDiagram {
        PersistenceDiagram::new(d.degree, self.finite_points(d))
    }

    pub(crate) fn peak(&self) -> Peak {
        Peak::new(self.base_kernel, self.t)
    }
}

/// Constants of the axioms satisfied by `phi`: boundedness `v1`, Lipschitz
/// `v2`, and internal stability `v3`, all per diagram point.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct FeatureConstants {
    pub v1: f64,
    pub v2: f64,
    pub v3: f64,
}

/// Closed-form axiom constants.
///
/// * `v1` is the peak height `1 / 4 pi t`; each summand `k(x, z) - k(x, z_bar)`
///   lies in `[0, v1]` above the diagonal because `x` is closer to `z` than to
///   its mirror image and the peak decreases with distance.
/// * `v2` bounds the gradient of one summand: twice the steepest slope of a
///   single peak. For the Gaussian that slope is `e^{-1/2} / (4 pi t sqrt(2t))`,
///   attained at radius `sqrt(2t)`; for the cone it is `v1 / sqrt(4t)`.
/// * `v3 = 2 sqrt(2) v2`: an optimal bottleneck matching moves every point by
///   at most `d_B` in the sup norm (`sqrt(2) d_B` in the Euclidean norm), the
///   summand is `v2`-Lipschitz in `z` and vanishes on the diagonal, and at most
///   `|d| + |d'| <= 2 max(|d|, |d'|)` matched pairs contribute.
pub fn derive_constants(params: &FeatureParams) -> FeatureConstants {
    let t = params.t;
    let v1 = 1.0 / (4.0 * PI * t);
    let v2 = match params.base_kernel {
        BaseKernel::Gaussian => (-0.5f64).exp() / (2.0 * PI * t * (2.0 * t).sqrt()),
        BaseKernel::Triangle => 2.0 * v1 / (4.0 * t).sqrt(),
    };
    FeatureConstants {
        v1,
        v2,
        v3: 2.0 * SQRT_2 * v2,
    }
}

/// A single radially decreasing peak of height `1 / 4 pi t`.
#[derive(Debug, Clone, Copy)]
pub(crate) struct Peak {
    kind: BaseKernel,
    height: f64,
    inv_4t: f64,
    radius: f64,
}

impl Peak {
    pub(crate) fn new(kind: BaseKernel, t: f64) -> Self {
        Peak {
            kind,
            height: 1.0 / (4.0 * PI * t),
            inv_4t: 1.0 / (4.0 * t),
            radius: (4.0 * t).sqrt(),
        }
    }

    /// Peak value at squared distance `r2`; non-increasing in `r2`.
    #[inline]
    pub(crate) fn at_sq(&self, r2: f64) -> f64 {
        match self.kind {
            BaseKernel::Gaussian => self.height * (-r2 * self.inv_4t).exp(),
            BaseKernel::Triangle => self.height * (1.0 - r2.sqrt() / self.radius).max(0.0),
        }
    }

    /// Largest slope of the peak profile at any distance `>= rho`.
    pub(crate) fn grad_beyond(&self, rho: f64) -> f64 {
        match self.kind {
            BaseKernel::Gaussian => {
                let r = rho.max(self.radius * FRAC_1_SQRT_2);
                self.height * r * 2.0 * self.inv_4t * (-r * r * self.inv_4t).exp()
            }
            BaseKernel::Triangle if rho < self.radius => self.height / self.radius,
            BaseKernel::Triangle => 0.0,
        }
    }

    /// Range of the derivative of the peak at `z - x` along one coordinate,
    /// given the ranges of that coordinate (`along`) and of the other one.
    pub(crate) fn partial(&self, along: ApproxInterval, other: ApproxInterval) -> ApproxInterval {
        let sq = |v: ApproxInterval| {
            let gap = v.lo.max(-v.hi).max(0.0);
            (gap * gap, v.mag() * v.mag())
        };
        match self.kind {
            BaseKernel::Gaussian => {
                // Separable: -(x e^{-x^2/4t}) (e^{-y^2/4t}) / 2t, where the first
                // factor increases on |x| <= sqrt(2t) and decreases beyond.
                let u = |x: f64| x * (-x * x * self.inv_4t).exp();
                let turn = (2.0 * self.inv_4t).recip().sqrt();
                let (mut lo, mut hi) = (u(along.lo).min(u(along.hi)), u(along.lo).max(u(along.hi)));
                if along.contains(turn) {
                    hi = u(turn);
                }
                if along.contains(-turn) {
                    lo = -u(turn);
                }
                let (o0, o1) = sq(other);
                let e = ApproxInterval::new((-o1 * self.inv_4t).exp(), (-o0 * self.inv_4t).exp());
                ApproxInterval::new(lo, hi)
                    .mul(&e)
                    .scale(self.height * 2.0 * self.inv_4t)
                    .neg()
            }
            BaseKernel::Triangle => {
                let (a0, a1) = sq(along);
                let (o0, o1) = sq(other);
                let (r0, r1) = ((a0 + o0).sqrt(), (a1 + o1).sqrt());
                if r0 >= self.radius {
                    return ApproxInterval::ZERO;
                }
                let unit = ApproxInterval::new(-1.0, 1.0);
                let ratio = if r0 > 0.0 {
                    along.div_pos(&ApproxInterval::new(r0, r1)).intersect(&unit)
                } else {
                    unit
                };
                let slope = self.height / self.radius;
                let coef = ApproxInterval::new(if r1 >= self.radius { 0.0 } else { slope }, slope);
                coef.mul(&ratio).neg()
            }
        }
    }

    /// One summand `k(x, z) - k(x, z_bar)` of `phi`.
    #[inline]
    pub(crate) fn summand(&self, x: (f64, f64), z: (f64, f64)) -> f64 {
        let near = (x.0 - z.0).powi(2) + (x.1 - z.1).powi(2);
        let far = (x.0 - z.1).powi(2) + (x.1 - z.0).powi(2);
        self.at_sq(near) - self.at_sq(far)
    }
}

/// `sum over finite points z of k(x, z) - k(x, z_bar)`.
pub(crate) fn phi_of_points(peak: &Peak, points: &[(f64, f64)], x: (f64, f64)) -> f64 {
    points.iter().map(|&z| peak.summand(x, z)).sum()
}

/// The scale-space feature map of `d` at `x` (with `x.x < x.y`).
pub fn phi_eval(d: &PersistenceDiagram, x: Point2, params: &FeatureParams) -> Result<f64> {
    if !(x.x < x.y) {
        return Err(Error::BelowDiagonal(x.x, x.y));
    }
    let points = params.finite_points(d);
    Ok(phi_of_points(&params.peak(), &points, (x.x, x.y)))
}

/// Slope weight of the slice through `p < q`, zero unless both lie in `rect`.
pub fn weight(p: Point2, q: Point2, rect: &Rect) -> Result<f64> {
    let line = slice_through(p, q)?;
    if !(rect.contains(&p) && rect.contains(&q)) {
        return Ok(0.0);
    }
    Ok(line.weight().min(FRAC_1_SQRT_2))
}

/// `Phi_X(p, q) = w(p, q) * phi(X restricted to the slice through p, q)(lambda_p, lambda_q)`.
///
/// The slice is replaced by its canonical representative (see
/// [`crate::slicing::SliceLine::canonical`]) so that cached and uncached
/// evaluations agree bit for bit.
pub fn bigphi_eval(
    x: &BiFiltration,
    p: Point2,
    q: Point2,
    params: &FeatureParams,
    cache: &DiagramCache,
) -> Result<f64> {
    let w = weight(p, q, &params.rect)?;
    if w == 0.0 || x.is_empty() {
        return Ok(0.0);
    }
    let line = slice_through(p, q)?.canonical();
    let diagram = cache.diagram(x, &line, params.degree);
    let lp = line.param_unchecked(p);
    let lq = line.param_unchecked(q);
    let points = params.finite_points(&diagram);
    Ok(w * phi_of_points(&params.peak(), &points, (lp, lq)))
}
