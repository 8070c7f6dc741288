//! Positive-slope lines through the parameter plane and the mono-filtrations
//! obtained by restricting a bi-filtration to them.

use crate::bifiltration::{BiFiltration, Simplex};
use crate::error::{Error, Result};
use crate::point::Point2;

const UNIT_TOL: f64 = 1e-12;
const ON_LINE_TOL: f64 = 1e-9;
const KEY_SCALE: f64 = 1e12;

/// The line `b + lambda * a` with `a` a positive unit vector and `b` on the
/// antidiagonal `x = -y`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SliceLine {
    a: Point2,
    b: Point2,
}

/// Cache key of a slice: direction and base point rounded to 12 decimals.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct SliceKey {
    pub a1: i64,
    pub b1: i64,
}

impl SliceLine {
    pub fn new(a: Point2, b: Point2) -> Result<Self> {
        if !(a.is_finite() && b.is_finite()) {
            return Err(Error::InvalidLine("non-finite parameters".into()));
        }
        if a.x <= 0.0 || a.y <= 0.0 {
            return Err(Error::InvalidLine(format!(
                "direction {a} does not have positive slope"
            )));
        }
        if (a.norm() - 1.0).abs() > UNIT_TOL {
            return Err(Error::InvalidLine(format!("direction {a} is not a unit vector")));
        }
        if (b.x + b.y).abs() > UNIT_TOL {
            return Err(Error::InvalidLine(format!(
                "base point {b} is not on the antidiagonal"
            )));
        }
        Ok(SliceLine { a, b })
    }

    /// Line with direction `(a1, sqrt(1 - a1^2))` and base point `(b1, -b1)`.
    pub fn from_parts(a1: f64, b1: f64) -> Result<Self> {
        if !(a1 > 0.0 && a1 < 1.0) {
            return Err(Error::InvalidLine(format!("a1 = {a1} must lie in (0, 1)")));
        }
        let a = Point2::new(a1, (1.0 - a1 * a1).sqrt());
        SliceLine::new(a, Point2::new(b1, -b1))
    }

    /// Line at angle `theta` (radians, strictly between 0 and pi/2) through `p`.
    pub fn through_point(p: Point2, theta: f64) -> Result<Self> {
        if !(theta > 0.0 && theta < std::f64::consts::FRAC_PI_2) {
            return Err(Error::InvalidLine(format!("angle {theta} out of range")));
        }
        let (s, c) = theta.sin_cos();
        let b1 = (p.x * s - p.y * c) / (c + s);
        Ok(SliceLine {
            a: Point2::new(c, s),
            b: Point2::new(b1, -b1),
        })
    }

    /// The diagonal line through the origin.
    pub fn diagonal() -> Self {
        let h = std::f64::consts::FRAC_1_SQRT_2;
        SliceLine {
            a: Point2::new(h, h),
            b: Point2::new(0.0, 0.0),
        }
    }

    pub fn direction(&self) -> Point2 {
        self.a
    }

    pub fn base(&self) -> Point2 {
        self.b
    }

    pub fn angle(&self) -> f64 {
        self.a.y.atan2(self.a.x)
    }

    /// `min(a1, a2)`, the slope weight of the line.
    pub fn weight(&self) -> f64 {
        self.a.x.min(self.a.y)
    }

    pub fn point_at(&self, lambda: f64) -> Point2 {
        Point2::new(self.b.x + lambda * self.a.x, self.b.y + lambda * self.a.y)
    }

    /// Parameter of a point on the line. Uses `(p1 + p2) / (a1 + a2)`, which
    /// equals `(p1 - b1) / a1` on the line and stays well conditioned near
    /// vertical directions.
    pub fn lambda_of(&self, p: Point2) -> Result<f64> {
        let lambda = self.param_unchecked(p);
        let back = self.point_at(lambda);
        let scale = 1.0 + p.x.abs().max(p.y.abs());
        if (back.x - p.x).abs().max((back.y - p.y).abs()) > ON_LINE_TOL * scale {
            return Err(Error::NotOnLine(p.x, p.y));
        }
        Ok(lambda)
    }

    #[inline]
    pub(crate) fn param_unchecked(&self, p: Point2) -> f64 {
        (p.x + p.y) / (self.a.x + self.a.y)
    }

    /// Smallest `lambda` with `b + lambda * a >= c` componentwise.
    #[inline]
    pub fn push_point(&self, c: Point2) -> f64 {
        ((c.x - self.b.x) / self.a.x).max((c.y - self.b.y) / self.a.y)
    }

    pub fn key(&self) -> SliceKey {
        SliceKey {
            a1: (self.a.x * KEY_SCALE).round() as i64,
            b1: (self.b.x * KEY_SCALE).round() as i64,
        }
    }

    /// The line reconstructed from its key. Two lines with equal keys have the
    /// same canonical representative.
    pub fn canonical(&self) -> SliceLine {
        SliceLine::from_key(self.key())
    }

    pub fn from_key(key: SliceKey) -> SliceLine {
        let a1 = key.a1 as f64 / KEY_SCALE;
        let b1 = key.b1 as f64 / KEY_SCALE;
        SliceLine {
            a: Point2::new(a1, (1.0 - a1 * a1).max(0.0).sqrt()),
            b: Point2::new(b1, -b1),
        }
    }
}

/// The unique slice through two strictly ordered points.
pub fn slice_through(p: Point2, q: Point2) -> Result<SliceLine> {
    if !p.lt(&q) {
        return Err(Error::NotStrictlyOrdered {
            p1: p.x,
            p2: p.y,
            q1: q.x,
            q2: q.y,
        });
    }
    let d = q.sub(&p);
    let len = d.norm();
    let a = Point2::new(d.x / len, d.y / len);
    let b1 = (p.x * a.y - p.y * a.x) / (a.x + a.y);
    Ok(SliceLine {
        a,
        b: Point2::new(b1, -b1),
    })
}

/// A filtration of a simplicial complex by one real parameter.
///
/// Entries are sorted by value, ties broken by dimension and then
/// lexicographically, so faces always precede their cofaces.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct MonoFiltration {
    simplices: Vec<Simplex>,
    values: Vec<f64>,
    boundaries: Vec<Vec<u32>>,
}

impl MonoFiltration {
    pub fn len(&self) -> usize {
        self.simplices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.simplices.is_empty()
    }

    pub fn simplices(&self) -> &[Simplex] {
        &self.simplices
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// Positions (in filtration order) of the facets of entry `i`.
    pub fn boundary(&self, i: usize) -> &[u32] {
        &self.boundaries[i]
    }

    pub fn entries(&self) -> impl Iterator<Item = (&Simplex, f64)> {
        self.simplices.iter().zip(self.values.iter().copied())
    }

    /// Mono-filtration of the sublevel sets of a face-monotone function.
    pub fn from_values(entries: Vec<(Simplex, f64)>) -> Result<Self> {
        let x = BiFiltration::new(
            entries
                .iter()
                .map(|(s, v)| (s.clone(), vec![Point2::new(*v, *v)]))
                .collect(),
        )?;
        let values: Vec<f64> = x
            .critical_sets()
            .iter()
            .map(|c| c[0].x)
            .collect();
        Ok(from_entry_values(&x, &values))
    }
}

/// Per-simplex entry parameter of `x` along `line`, indexed like `x.simplices()`.
pub(crate) fn entry_values_into(x: &BiFiltration, line: &SliceLine, out: &mut Vec<f64>) {
    out.clear();
    out.extend(x.critical_sets().iter().map(|crit| {
        crit.iter()
            .map(|c| line.push_point(*c))
            .fold(f64::INFINITY, f64::min)
    }));
}

/// Filtration order: value, then canonical simplex order (which is index order).
pub(crate) fn filtration_order(values: &[f64], order: &mut Vec<u32>) {
    order.clear();
    order.extend(0..values.len() as u32);
    order.sort_unstable_by(|&i, &j| {
        values[i as usize]
            .total_cmp(&values[j as usize])
            .then(i.cmp(&j))
    });
}

fn from_entry_values(x: &BiFiltration, values: &[f64]) -> MonoFiltration {
    let mut order = Vec::new();
    filtration_order(values, &mut order);
    let mut position = vec![0u32; values.len()];
    for (rank, &i) in order.iter().enumerate() {
        position[i as usize] = rank as u32;
    }
    let mut simplices = Vec::with_capacity(order.len());
    let mut sorted_values = Vec::with_capacity(order.len());
    let mut boundaries = Vec::with_capacity(order.len());
    for &i in &order {
        let i = i as usize;
        simplices.push(x.simplices()[i].clone());
        sorted_values.push(values[i]);
        let mut b: Vec<u32> = x.facets(i).iter().map(|&f| position[f as usize]).collect();
        b.sort_unstable();
        boundaries.push(b);
    }
    MonoFiltration {
        simplices,
        values: sorted_values,
        boundaries,
    }
}

/// Restriction of `x` to the slice `line`.
pub fn restrict(x: &BiFiltration, line: &SliceLine) -> MonoFiltration {
    let mut values = Vec::with_capacity(x.num_simplices());
    entry_values_into(x, line, &mut values);
    from_entry_values(x, &values)
}
