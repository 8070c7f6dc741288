use serde::Serialize;

/// Closed interval `[lo, hi]` certified to contain some true value.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ApproxInterval {
    pub lo: f64,
    pub hi: f64,
}

impl ApproxInterval {
    pub const ZERO: ApproxInterval = ApproxInterval { lo: 0.0, hi: 0.0 };

    pub fn new(lo: f64, hi: f64) -> Self {
        debug_assert!(lo <= hi, "empty interval [{lo}, {hi}]");
        ApproxInterval { lo, hi }
    }

    pub fn point(v: f64) -> Self {
        ApproxInterval { lo: v, hi: v }
    }

    pub fn width(&self) -> f64 {
        self.hi - self.lo
    }

    pub fn contains(&self, v: f64) -> bool {
        self.lo <= v && v <= self.hi
    }

    pub fn overlaps(&self, other: &ApproxInterval) -> bool {
        self.lo <= other.hi && other.lo <= self.hi
    }

    /// Intersection of two enclosures of the same value. Rounding can make two
    /// valid enclosures miss each other by a few ulps; the gap is then kept.
    pub fn intersect(&self, other: &ApproxInterval) -> ApproxInterval {
        let lo = self.lo.max(other.lo);
        let hi = self.hi.min(other.hi);
        if lo <= hi {
            ApproxInterval { lo, hi }
        } else {
            ApproxInterval { lo: hi, hi: lo }
        }
    }

    pub fn add(&self, other: &ApproxInterval) -> ApproxInterval {
        ApproxInterval {
            lo: self.lo + other.lo,
            hi: self.hi + other.hi,
        }
    }

    /// Product with a non-negative scalar.
    pub fn scale(&self, k: f64) -> ApproxInterval {
        debug_assert!(k >= 0.0);
        ApproxInterval {
            lo: self.lo * k,
            hi: self.hi * k,
        }
    }

    /// Product of two intervals of non-negative numbers.
    pub fn mul_nonneg(&self, other: &ApproxInterval) -> ApproxInterval {
        ApproxInterval {
            lo: self.lo.max(0.0) * other.lo.max(0.0),
            hi: self.hi * other.hi,
        }
    }

    pub fn sub(&self, other: &ApproxInterval) -> ApproxInterval {
        ApproxInterval {
            lo: self.lo - other.hi,
            hi: self.hi - other.lo,
        }
    }

    pub fn neg(&self) -> ApproxInterval {
        ApproxInterval {
            lo: -self.hi,
            hi: -self.lo,
        }
    }

    pub fn mul(&self, other: &ApproxInterval) -> ApproxInterval {
        let c = [
            self.lo * other.lo,
            self.lo * other.hi,
            self.hi * other.lo,
            self.hi * other.hi,
        ];
        ApproxInterval {
            lo: c.iter().copied().fold(f64::INFINITY, f64::min),
            hi: c.iter().copied().fold(f64::NEG_INFINITY, f64::max),
        }
    }

    /// Quotient by an interval of positive numbers.
    pub fn div_pos(&self, other: &ApproxInterval) -> ApproxInterval {
        debug_assert!(other.lo > 0.0);
        self.mul(&ApproxInterval {
            lo: 1.0 / other.hi,
            hi: 1.0 / other.lo,
        })
    }

    /// Smallest interval containing both.
    pub fn hull(&self, other: &ApproxInterval) -> ApproxInterval {
        ApproxInterval {
            lo: self.lo.min(other.lo),
            hi: self.hi.max(other.hi),
        }
    }

    /// Largest absolute value.
    pub fn mag(&self) -> f64 {
        self.lo.abs().max(self.hi.abs())
    }

    /// Widens by `rel` relative to the endpoint magnitudes.
    pub fn inflate(&self, rel: f64) -> ApproxInterval {
        ApproxInterval {
            lo: self.lo - rel * self.lo.abs(),
            hi: self.hi + rel * self.hi.abs(),
        }
    }
}

/// Compensated sum that also tracks the magnitude of what was added.
#[derive(Debug, Clone, Copy, Default)]
pub(crate) struct KahanSum {
    sum: f64,
    comp: f64,
    magnitude: f64,
}

impl KahanSum {
    pub(crate) fn add(&mut self, v: f64) {
        let y = v - self.comp;
        let t = self.sum + y;
        self.comp = (t - self.sum) - y;
        self.sum = t;
        self.magnitude += v.abs();
    }

    pub(crate) fn merge(&mut self, other: &KahanSum) {
        self.add(other.sum);
        self.add(-other.comp);
        self.magnitude += other.magnitude;
    }

    pub(crate) fn value(&self) -> f64 {
        self.sum
    }

    /// Bound on the accumulated rounding error.
    pub(crate) fn error_bound(&self) -> f64 {
        8.0 * f64::EPSILON * self.magnitude
    }
}
