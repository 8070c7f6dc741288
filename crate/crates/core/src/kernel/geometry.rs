//! Box pairs at a fixed resolution and the geometry of the slices that
//! traverse them.

use std::f64::consts::FRAC_1_SQRT_2;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::feature::FeatureConstants;
use crate::point::{Point2, Rect};

/// Pair of grid boxes `B1 x B2` at resolution `s`: the rectangle is cut into
/// `2^s x 2^s` boxes and `(i, j)` indexes column `i`, row `j`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct BoxPair {
    pub s: u32,
    pub i1: u32,
    pub j1: u32,
    pub i2: u32,
    pub j2: u32,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum BoxClass {
    Null,
    Close,
    NonDiagonal,
    Good,
}

impl BoxPair {
    pub fn new(s: u32, i1: u32, j1: u32, i2: u32, j2: u32) -> Result<Self> {
        if s > 30 {
            return Err(Error::InvalidParameter(format!("resolution {s} is too large")));
        }
        let n = 1u32 << s;
        if [i1, j1, i2, j2].iter().any(|&k| k >= n) {
            return Err(Error::InvalidParameter(format!(
                "box indices must be below 2^{s} = {n}"
            )));
        }
        Ok(BoxPair { s, i1, j1, i2, j2 })
    }

    /// Side length in normalized (unit square) coordinates.
    pub fn side(&self) -> f64 {
        (-(self.s as f64)).exp2()
    }

    pub fn centers(&self) -> (Point2, Point2) {
        let u = self.side();
        (
            Point2::new((self.i1 as f64 + 0.5) * u, (self.j1 as f64 + 0.5) * u),
            Point2::new((self.i2 as f64 + 0.5) * u, (self.j2 as f64 + 0.5) * u),
        )
    }

    /// The two boxes in the coordinates of `rect`.
    pub fn boxes(&self, rect: &Rect) -> (Rect, Rect) {
        (
            grid_box(rect, self.s, self.i1, self.j1),
            grid_box(rect, self.s, self.i2, self.j2),
        )
    }
}

pub(crate) fn grid_box(rect: &Rect, s: u32, i: u32, j: u32) -> Rect {
    let n = (1u64 << s) as f64;
    let (w, h) = (rect.width() / n, rect.height() / n);
    Rect::new(
        rect.x0 + i as f64 * w,
        rect.y0 + j as f64 * h,
        rect.x0 + (i + 1) as f64 * w,
        rect.y0 + (j + 1) as f64 * h,
    )
}

pub fn classify(bp: &BoxPair) -> BoxClass {
    let (c1, c2) = bp.centers();
    classify_normalized(c1, c2, bp.side())
}

/// Classification of the pair of side-`u` boxes centred at `c1`, `c2`.
pub fn classify_normalized(c1: Point2, c2: Point2, u: f64) -> BoxClass {
    if !c1.le(&c2) {
        return BoxClass::Null;
    }
    if c2.sub(&c1).norm() < u.sqrt() {
        return BoxClass::Close;
    }
    let h = 0.5 * u;
    let frame = Frame::new(
        Rect::new(c1.x - h, c1.y - h, c1.x + h, c1.y + h),
        Rect::new(c2.x - h, c2.y - h, c2.x + h, c2.y + h),
    );
    match frame {
        Some(f) if f.w_max >= u.powf(0.2) => BoxClass::Good,
        _ => BoxClass::NonDiagonal,
    }
}

/// Bounds describing how much the slices traversing a box pair deviate from
/// the slice through the box centres.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct BoxGeometry {
    /// Max sup-norm distance of a traversing direction to the centre direction.
    pub a: f64,
    /// Max sup-norm distance of a traversing base point to the centre base point.
    pub b: f64,
    /// Max deviation of the slope weight.
    pub w: f64,
    /// Max deviation of the parameter of a point of `B1` (resp. `B2`) from
    /// that of `c1` (resp. `c2`).
    pub l: f64,
    /// Min slope weight over traversing slices.
    pub m: f64,
    /// Slope weight of the centre slice.
    pub lhat_c: f64,
}

/// Geometry of a good box pair at resolution `bp.s` inside `rect`.
pub fn box_geometry(bp: &BoxPair, rect: &Rect) -> Result<BoxGeometry> {
    if classify(bp) != BoxClass::Good {
        return Err(Error::NotGood);
    }
    let (b1, b2) = bp.boxes(rect);
    Frame::new(b1, b2)
        .map(|f| f.geometry())
        .ok_or(Error::NotGood)
}

/// Geometry of the slices through a point of `b1` and a larger point of `b2`,
/// or `None` when no such slice exists.
pub fn geometry_of_boxes(b1: Rect, b2: Rect) -> Option<BoxGeometry> {
    Frame::new(b1, b2).map(|f| f.geometry())
}

/// `v1^2 n^2 / 2^{4s + 1}`: the bound on the integral over one unit-square
/// box pair obtained from `|Phi| <= v1 n / sqrt(2)`.
pub fn trivial_upper(n: usize, s: u32, v1: f64) -> f64 {
    let n = n as f64;
    v1 * v1 * n * n * (-(4.0 * s as f64 + 1.0)).exp2()
}

/// Bound on `|Phi(p, q) - Phi(c1, c2)|` over a box pair whose critical points
/// lie within sup-distance 2 of the centre base point.
pub fn variation_delta(g: &BoxGeometry, n: usize, c: &FeatureConstants) -> f64 {
    variation_delta_with_reach(g, n, c, 2.0)
}

/// As [`variation_delta`], with `reach` bounding `|c_i - b_i|` for every
/// critical point `c` and the centre base point `b`.
///
/// Entry parameters move by at most `(reach A + B) / (M lhat_c)` between the
/// centre slice and any traversing slice, which bounds the bottleneck
/// distance of the two diagrams; the weight is at most `1 / sqrt(2)`.
pub fn variation_delta_with_reach(
    g: &BoxGeometry,
    n: usize,
    c: &FeatureConstants,
    reach: f64,
) -> f64 {
    if g.m <= 0.0 || g.lhat_c <= 0.0 {
        return f64::INFINITY;
    }
    let n = n as f64;
    c.v3 * n * (reach * g.a + g.b) / (std::f64::consts::SQRT_2 * g.m * g.lhat_c)
        + c.v1 * n * g.w
        + c.v2 * n * g.l
}

/// Area of `{(p, q) in [a0, a1] x [b0, b1] : p < q}`.
fn ordered_area(a0: f64, a1: f64, b0: f64, b1: f64) -> f64 {
    // Integrate the length of {q in [b0, b1] : q > p} over p in [a0, a1]:
    // constant b1 - b0 below b0, linear down to zero on [b0, b1].
    let full = (a1.min(b0) - a0).max(0.0) * (b1 - b0);
    let (lo, hi) = (a0.max(b0), a1.min(b1));
    let ramp = if hi > lo {
        0.5 * ((b1 - lo) + (b1 - hi)) * (hi - lo)
    } else {
        0.0
    };
    full + ramp
}

/// Exact 4-volume of `{(p, q) in b1 x b2 : p < q componentwise}`.
pub fn delta2_volume(b1: &Rect, b2: &Rect) -> f64 {
    ordered_area(b1.x0, b1.x1, b2.x0, b2.x1) * ordered_area(b1.y0, b1.y1, b2.y0, b2.y1)
}

#[inline]
fn slope_weight(a: Point2) -> f64 {
    a.x.min(a.y)
}

fn unit(x: f64, y: f64) -> Point2 {
    let n = x.hypot(y);
    Point2::new(x / n, y / n)
}

/// Base coordinate `b1` of the slice through `p` with unit direction `a`.
#[inline]
fn base_of(p: Point2, a: Point2) -> f64 {
    (p.x * a.y - p.y * a.x) / (a.x + a.y)
}

/// The family of slices through `p in b1` and `q in b2` with `p < q`.
///
/// Directions are those of `q - p`; they form an angular sector whose extreme
/// rays pass through opposite box corners.
#[derive(Debug, Clone, Copy)]
pub(crate) struct Frame {
    pub b1: Rect,
    pub b2: Rect,
    pub c1: Point2,
    pub c2: Point2,
    /// Shallowest and steepest directions.
    pub a_lo: Point2,
    pub a_hi: Point2,
    pub w_min: f64,
    pub w_max: f64,
    /// Range of `|q - p|`.
    pub r_min: f64,
    pub r_max: f64,
    /// Whether every direction has both components positive.
    pub interior: bool,
}

impl Frame {
    pub(crate) fn new(b1: Rect, b2: Rect) -> Option<Frame> {
        let (dx0, dx1) = (b2.x0 - b1.x1, b2.x1 - b1.x0);
        let (dy0, dy1) = (b2.y0 - b1.y1, b2.y1 - b1.y0);
        if dx1 <= 0.0 || dy1 <= 0.0 {
            return None;
        }
        let a_lo = unit(dx1, dy0.max(0.0));
        let a_hi = unit(dx0.max(0.0), dy1);
        let w_min = slope_weight(a_lo).min(slope_weight(a_hi));
        let w_max = if a_lo.y <= a_lo.x && a_hi.y >= a_hi.x {
            FRAC_1_SQRT_2
        } else {
            slope_weight(a_lo).max(slope_weight(a_hi))
        };
        Some(Frame {
            b1,
            b2,
            c1: b1.center(),
            c2: b2.center(),
            a_lo,
            a_hi,
            w_min,
            w_max,
            r_min: dx0.max(0.0).hypot(dy0.max(0.0)),
            r_max: dx1.hypot(dy1),
            interior: dx0 > 0.0 && dy0 > 0.0,
        })
    }

    pub(crate) fn center_direction(&self) -> Point2 {
        let d = self.c2.sub(&self.c1);
        unit(d.x.max(0.0), d.y.max(0.0))
    }

    /// Range of `(p1 + p2) / (a1 + a2)` over `p` in `b` and directions in the frame.
    pub(crate) fn lambda_range(&self, b: &Rect) -> (f64, f64) {
        let (n0, n1) = (b.x0 + b.y0, b.x1 + b.y1);
        let s_lo = (self.a_lo.x + self.a_lo.y).min(self.a_hi.x + self.a_hi.y);
        let s_hi = if self.w_max == FRAC_1_SQRT_2 {
            std::f64::consts::SQRT_2
        } else {
            (self.a_lo.x + self.a_lo.y).max(self.a_hi.x + self.a_hi.y)
        };
        let c = [n0 / s_lo, n0 / s_hi, n1 / s_lo, n1 / s_hi];
        (
            c.iter().copied().fold(f64::INFINITY, f64::min),
            c.iter().copied().fold(f64::NEG_INFINITY, f64::max),
        )
    }

    fn geometry(&self) -> BoxGeometry {
        let ac = self.center_direction();
        let ends = [self.a_lo, self.a_hi];

        let a = ends
            .iter()
            .map(|e| (e.x - ac.x).abs().max((e.y - ac.y).abs()))
            .fold(0.0, f64::max);

        // The base coordinate is affine in p and monotone in the angle.
        let bc = base_of(self.c1, ac);
        let corners = [
            Point2::new(self.b1.x0, self.b1.y0),
            Point2::new(self.b1.x0, self.b1.y1),
            Point2::new(self.b1.x1, self.b1.y0),
            Point2::new(self.b1.x1, self.b1.y1),
        ];
        let b = corners
            .iter()
            .flat_map(|p| ends.iter().map(move |e| (base_of(*p, *e) - bc).abs()))
            .fold(0.0, f64::max);

        let lhat_c = slope_weight(ac);
        let w = (self.w_max - lhat_c).max(lhat_c - self.w_min).max(0.0);

        let sc = ac.x + ac.y;
        let l = [(&self.b1, self.c1), (&self.b2, self.c2)]
            .iter()
            .map(|(bx, c)| {
                let (lo, hi) = self.lambda_range(bx);
                let lc = (c.x + c.y) / sc;
                (hi - lc).max(lc - lo)
            })
            .fold(0.0, f64::max);

        BoxGeometry {
            a,
            b,
            w,
            l,
            m: self.w_min,
            lhat_c,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::SQRT_2;

    fn around(c: Point2, u: f64) -> Rect {
        Rect::new(c.x - u / 2.0, c.y - u / 2.0, c.x + u / 2.0, c.y + u / 2.0)
    }

    #[test]
    fn classify_examples() {
        let u = 1.0 / 16.0;
        assert_eq!(
            classify_normalized(Point2::new(0.9, 0.9), Point2::new(0.1, 0.1), u),
            BoxClass::Null
        );
        let c = Point2::new(0.3, 0.6);
        assert_eq!(classify_normalized(c, c, u), BoxClass::Close);
        assert_eq!(
            classify_normalized(Point2::new(0.25, 0.25), Point2::new(0.75, 0.75), u),
            BoxClass::Good
        );
        assert_eq!(
            classify_normalized(Point2::new(0.05, 0.05), Point2::new(0.95, 0.1), u),
            BoxClass::NonDiagonal
        );
    }

    #[test]
    fn min_weight_of_example_pair() {
        let u = 1.0 / 16.0;
        let f = Frame::new(
            around(Point2::new(0.25, 0.25), u),
            around(Point2::new(0.75, 0.75), u),
        )
        .unwrap();
        // Shallowest traversing line: top-left corner of B1 to bottom-right of B2.
        let d = (0.5 + u, 0.5 - u);
        let expected = d.1 / (d.0 * d.0 + d.1 * d.1).sqrt();
        assert!((f.w_min - expected).abs() < 1e-15);
        assert!((f.w_min - 0.614).abs() < 1e-3);
        assert_eq!(f.w_max, FRAC_1_SQRT_2);
    }

    #[test]
    fn trivial_upper_examples() {
        assert_eq!(trivial_upper(2, 1, 1.0), 0.125);
        assert_eq!(trivial_upper(0, 3, 1.0), 0.0);
        assert_eq!(trivial_upper(3, 2, 0.7) / trivial_upper(3, 3, 0.7), 16.0);
    }

    #[test]
    fn variation_delta_examples() {
        let c1 = FeatureConstants {
            v1: 1.0,
            v2: 1.0,
            v3: 1.0,
        };
        let zero = BoxGeometry {
            a: 0.0,
            b: 0.0,
            w: 0.0,
            l: 0.0,
            m: FRAC_1_SQRT_2,
            lhat_c: FRAC_1_SQRT_2,
        };
        assert_eq!(variation_delta(&zero, 7, &c1), 0.0);
        let ones = BoxGeometry {
            a: 1.0,
            b: 1.0,
            w: 1.0,
            l: 1.0,
            ..zero
        };
        let d = variation_delta(&ones, 1, &c1);
        assert!((d - (3.0 * SQRT_2 + 2.0)).abs() < 1e-12, "{d}");
        let flat = BoxGeometry { m: 0.0, ..ones };
        assert_eq!(variation_delta(&flat, 1, &c1), f64::INFINITY);
    }

    #[test]
    fn delta2_volume_examples() {
        let u = 0.125;
        let b1 = Rect::new(0.0, 0.0, u, u);
        let b2 = Rect::new(0.5, 0.5, 0.5 + u, 0.5 + u);
        assert!((delta2_volume(&b1, &b2) - u.powi(4)).abs() < 1e-18);
        assert!((delta2_volume(&b1, &b1) - u.powi(4) / 4.0).abs() < 1e-18);
        assert_eq!(delta2_volume(&b2, &b1), 0.0);
        // Same column, higher row: only the x-coordinate constraint binds.
        let b3 = Rect::new(0.0, 0.5, u, 0.5 + u);
        assert!((delta2_volume(&b1, &b3) - u.powi(4) / 2.0).abs() < 1e-18);
    }

    #[test]
    fn ordered_area_matches_sampling() {
        let cases = [
            (0.0, 1.0, 0.5, 2.0),
            (0.3, 0.7, 0.0, 1.0),
            (0.0, 1.0, 0.0, 1.0),
            (0.6, 0.9, 0.1, 0.5),
            (-1.0, 0.2, 0.1, 0.15),
        ];
        let k = 400;
        for (a0, a1, b0, b1) in cases {
            let mut hits = 0usize;
            for i in 0..k {
                for j in 0..k {
                    let p = a0 + (a1 - a0) * (i as f64 + 0.5) / k as f64;
                    let q = b0 + (b1 - b0) * (j as f64 + 0.5) / k as f64;
                    if p < q {
                        hits += 1;
                    }
                }
            }
            let est = hits as f64 / (k * k) as f64 * (a1 - a0) * (b1 - b0);
            let exact = ordered_area(a0, a1, b0, b1);
            assert!((est - exact).abs() < 0.01 * (a1 - a0) * (b1 - b0), "{est} {exact}");
        }
    }

    #[test]
    fn degenerate_pair_has_vanishing_geometry() {
        let c1 = Point2::new(0.25, -0.25);
        let c2 = Point2::new(0.75, 0.5);
        let mut prev = f64::INFINITY;
        for k in 4..20 {
            let u = (-(k as f64)).exp2();
            let g = geometry_of_boxes(around(c1, u), around(c2, u)).unwrap();
            let worst = g.a.max(g.b).max(g.w).max(g.l).max(g.lhat_c - g.m);
            assert!(worst <= prev + 1e-15);
            prev = worst;
        }
        assert!(prev < 1e-4);
    }

    #[test]
    fn box_geometry_requires_good_pair() {
        let bp = BoxPair::new(2, 0, 0, 0, 0).unwrap();
        assert!(matches!(box_geometry(&bp, &Rect::UNIT), Err(Error::NotGood)));
        // At s = 2 even the diagonal corner pair is non-diagonal: 1/sqrt(2) < 4^{-1/5}.
        let bp = BoxPair::new(2, 0, 0, 3, 3).unwrap();
        assert_eq!(classify(&bp), BoxClass::NonDiagonal);
        let bp = BoxPair::new(4, 2, 2, 13, 13).unwrap();
        let g = box_geometry(&bp, &Rect::UNIT).unwrap();
        assert!(g.m <= g.lhat_c && g.lhat_c <= FRAC_1_SQRT_2 + 1e-15);
        assert!(BoxPair::new(2, 4, 0, 0, 0).is_err());
    }
}
