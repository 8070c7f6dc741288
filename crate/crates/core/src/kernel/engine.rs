//! The subdivision loop: every box pair gets a certified enclosure of the
//! integral of `Phi_X(p, q) Phi_Y(p, q)` over its ordered part, and the sum
//! over all pairs at resolution `s` encloses the kernel.

use std::f64::consts::{FRAC_1_SQRT_2, SQRT_2};
use std::time::Instant;

use rayon::prelude::*;
use serde::Serialize;

use super::cache::{DiagramCache, DEFAULT_CAPACITY};
use super::geometry::{
    classify_normalized, delta2_volume, variation_delta_with_reach, BoxClass,
    BoxPair, Frame,
};
use super::interval::{ApproxInterval, KahanSum};
use crate::bifiltration::BiFiltration;
use crate::error::{Error, Result};
use crate::feature::{derive_constants, EssentialPolicy, FeatureConstants, FeatureParams, Peak};
use crate::persistence::{rank_and_betti, Workspace};
use crate::point::Point2;
use crate::slicing::{entry_values_into, slice_through, SliceLine};

/// Relative slack added to quantities derived from floating-point evaluation
/// of exact formulas.
const REL_SLACK: f64 = 1e-10;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct EngineOptions {
    /// Worker threads; 0 means one per available core.
    pub threads: usize,
    pub min_depth: u32,
    pub max_depth: u32,
    pub cache_capacity: usize,
}

impl Default for EngineOptions {
    fn default() -> Self {
        EngineOptions {
            threads: 0,
            min_depth: 1,
            max_depth: 12,
            cache_capacity: DEFAULT_CAPACITY,
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize)]
pub struct ClassCounts {
    pub null: u64,
    pub close: u64,
    pub non_diagonal: u64,
    pub good: u64,
}

impl ClassCounts {
    fn bump(&mut self, c: BoxClass) {
        match c {
            BoxClass::Null => self.null += 1,
            BoxClass::Close => self.close += 1,
            BoxClass::NonDiagonal => self.non_diagonal += 1,
            BoxClass::Good => self.good += 1,
        }
    }

    fn merge(&mut self, o: &ClassCounts) {
        self.null += o.null;
        self.close += o.close;
        self.non_diagonal += o.non_diagonal;
        self.good += o.good;
    }

    pub fn total(&self) -> u64 {
        self.null + self.close + self.non_diagonal + self.good
    }
}

/// Enclosure of the kernel at one resolution.
#[derive(Debug, Clone, Serialize)]
pub struct LevelReport {
    pub s: u32,
    pub interval: ApproxInterval,
    pub counts: ClassCounts,
    pub seconds: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct KernelStats {
    pub counts: ClassCounts,
    pub cache_hit_rate: f64,
    pub seconds: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct KernelResult {
    /// Left endpoint of the final interval.
    pub value: f64,
    pub interval: ApproxInterval,
    pub epsilon: f64,
    pub final_resolution: u32,
    pub stats: KernelStats,
    pub levels: Vec<LevelReport>,
}

/// A bi-filtration with the data the engine needs per evaluation.
struct Prepared<'a> {
    x: &'a BiFiltration,
    /// Upper bound on the number of points of any slice diagram after the
    /// essential-class policy.
    n_eff: usize,
    /// Rank of the boundary map into `degree`: the number of finite points
    /// any slice diagram can have.
    rank: usize,
    /// Simplices whose entry parameter can move a point of the diagram.
    relevant: Vec<u32>,
    crit_lo: Point2,
    crit_hi: Point2,
}

impl<'a> Prepared<'a> {
    fn new(x: &'a BiFiltration, params: &FeatureParams) -> Self {
        let k = params.degree;
        let (rank, betti) = rank_and_betti(x, k);
        let n_eff = match params.essential {
            EssentialPolicy::Drop => rank,
            EssentialPolicy::Cap(_) => rank + betti,
        };
        let relevant: Vec<u32> = (0..x.num_simplices())
            .filter(|&i| {
                let d = x.simplices()[i].dim();
                d == k || d == k + 1
            })
            .map(|i| i as u32)
            .collect();
        let mut crit_lo = Point2::new(f64::INFINITY, f64::INFINITY);
        let mut crit_hi = Point2::new(f64::NEG_INFINITY, f64::NEG_INFINITY);
        for &i in &relevant {
            for c in x.critical(i as usize) {
                crit_lo = Point2::new(crit_lo.x.min(c.x), crit_lo.y.min(c.y));
                crit_hi = Point2::new(crit_hi.x.max(c.x), crit_hi.y.max(c.y));
            }
        }
        Prepared {
            x,
            n_eff,
            rank,
            relevant,
            crit_lo,
            crit_hi,
        }
    }

    /// Largest `|c_i - b_i|` over critical points `c` for the base `(b1, -b1)`.
    fn reach(&self, b1: f64) -> f64 {
        (self.crit_hi.x - b1)
            .max(b1 - self.crit_lo.x)
            .max(self.crit_hi.y + b1)
            .max(-b1 - self.crit_lo.y)
            .max(0.0)
    }
}

/// A maximal chain of overlapping entry ranges among relevant simplices of
/// one dimension.
#[derive(Clone, Copy)]
struct Cluster {
    lo: f64,
    hi: f64,
    dim: usize,
    members: (usize, usize),
    /// Range of the derivatives of any entry parameter in the cluster with
    /// respect to `(p1, p2, q1, q2)`, once computed.
    grad: Option<[ApproxInterval; 4]>,
}

/// What one bi-filtration contributes to a box pair.
struct Factor {
    /// Enclosure of `Phi` over the pair.
    range: ApproxInterval,
    /// `Phi` at the pair of centres.
    center: f64,
    /// Ranges of the derivatives of `Phi` with respect to `(p1, p2, q1, q2)`.
    grad: Option<[ApproxInterval; 4]>,
}

#[derive(Default)]
struct Scratch {
    ws: Workspace,
    values: Vec<f64>,
    pairs: Vec<(u32, u32)>,
    essential: Vec<u32>,
    /// Per simplex: range of the entry parameter, relative to the parameter
    /// of `p`, over all traversing slices (and the centre slice).
    range: Vec<(f64, f64)>,
    /// Per simplex: index into `clusters`.
    cluster_of: Vec<u32>,
    clusters: Vec<Cluster>,
    /// Simplices grouped by cluster.
    members: Vec<u32>,
    points: Vec<Candidate>,
}

/// A point of the centre diagram in coordinates relative to `c1`'s parameter,
/// with a box containing its partner on every traversing slice.
#[derive(Debug, Clone, Copy)]
struct Candidate {
    z: (f64, f64),
    birth: (f64, f64),
    death: (f64, f64),
    /// Whether every traversing diagram has a partner for this point.
    forced: bool,
}

/// Evaluates box-pair enclosures for a fixed pair of bi-filtrations.
pub(crate) struct Engine<'a> {
    x: Prepared<'a>,
    y: Prepared<'a>,
    params: FeatureParams,
    consts: FeatureConstants,
    peak: Peak,
    same: bool,
}

/// Per-factor view of one box pair, shared by both filtrations.
struct PairContext {
    class: BoxClass,
    frame: Frame,
    line: Option<SliceLine>,
    lambda_c1: f64,
    lambda_c2: f64,
    /// Range of the parameter of `p in B1` over traversing slices.
    lambda_p: (f64, f64),
    reach_base: f64,
}

impl<'a> Engine<'a> {
    pub(crate) fn new(x: &'a BiFiltration, y: &'a BiFiltration, params: &FeatureParams) -> Result<Self> {
        params.validate()?;
        Ok(Engine {
            x: Prepared::new(x, params),
            y: Prepared::new(y, params),
            params: *params,
            consts: derive_constants(params),
            peak: params.peak(),
            same: x == y,
        })
    }

    /// Enclosure of the integral over the ordered part of one box pair.
    fn pair(&self, bp: &BoxPair, cache: &DiagramCache, sc: &mut Scratch) -> (BoxClass, ApproxInterval) {
        let (c1n, c2n) = bp.centers();
        let class = classify_normalized(c1n, c2n, bp.side());
        if class == BoxClass::Null || self.x.n_eff == 0 || self.y.n_eff == 0 {
            return (class, ApproxInterval::ZERO);
        }
        let (b1, b2) = bp.boxes(&self.params.rect);
        let vol = delta2_volume(&b1, &b2);
        let frame = match Frame::new(b1, b2) {
            Some(f) if vol > 0.0 => f,
            _ => return (class, ApproxInterval::ZERO),
        };
        let ctx = self.context(class, frame);
        let fx = self.factor(&self.x, &ctx, cache, sc);
        let fy = if self.same {
            None
        } else {
            Some(self.factor(&self.y, &ctx, cache, sc))
        };
        let fy = fy.as_ref().unwrap_or(&fx);
        let mut iv = fx.range.mul_nonneg(&fy.range).scale(vol);
        if let (Some(gx), Some(gy)) = (fx.grad, fy.grad) {
            // On a box symmetric about its centre c, the integral of any
            // linear function of u - c vanishes, so for every vector m the
            // integral of g is vol g(c) plus the integral of
            // g(u) - g(c) - m.(u - c), which is at most sum_j sup|dg/du_j - m_j|
            // |u_j - c_j|. Take m the midpoint of the derivative ranges.
            let half = [
                0.5 * frame.b1.width(),
                0.5 * frame.b1.height(),
                0.5 * frame.b2.width(),
                0.5 * frame.b2.height(),
            ];
            let mut err = 0.0;
            for j in 0..4 {
                let gj = fx.range.mul(&gy[j]).add(&fy.range.mul(&gx[j]));
                err += 0.5 * gj.width() * 0.5 * half[j];
            }
            let mid = fx.center * fy.center;
            let second = ApproxInterval::new(vol * (mid - err), vol * (mid + err));
            iv = iv.intersect(&second);
        }
        let iv = iv.inflate(REL_SLACK);
        (class, ApproxInterval::new(iv.lo.max(0.0), iv.hi.max(0.0)))
    }

    fn context(&self, class: BoxClass, frame: Frame) -> PairContext {
        let lambda_p = frame.lambda_range(&frame.b1);
        let mut ctx = PairContext {
            class,
            frame,
            line: None,
            lambda_c1: 0.0,
            lambda_c2: 0.0,
            lambda_p,
            reach_base: 0.0,
        };
        if frame.interior {
            if let Ok(line) = slice_through(frame.c1, frame.c2) {
                let line = line.canonical();
                ctx.lambda_c1 = line.param_unchecked(frame.c1);
                ctx.lambda_c2 = line.param_unchecked(frame.c2);
                ctx.reach_base = line.base().x;
                ctx.line = Some(line);
            }
        }
        ctx
    }

    /// Enclosure of `Phi_F(p, q)` over the box pair.
    fn factor(
        &self,
        f: &Prepared<'_>,
        ctx: &PairContext,
        _cache: &DiagramCache,
        sc: &mut Scratch,
    ) -> Factor {
        let c = &self.consts;
        let n = f.n_eff as f64;
        let fr = &ctx.frame;
        // |phi| <= v1 n everywhere, and each summand is at most v2 times the
        // distance of x = (lambda_p, lambda_q) to the diagonal, |q - p| / sqrt(2).
        let g_cap = c.v1.min(c.v2 * fr.r_max * FRAC_1_SQRT_2);
        let trivial = ApproxInterval::new(0.0, fr.w_max * n * g_cap);
        let Some(line) = ctx.line else {
            return Factor {
                range: trivial,
                center: f64::NAN,
                grad: None,
            };
        };

        let degree = self.params.degree;
        entry_values_into(f.x, &line, &mut sc.values);
        sc.ws
            .simplex_pairs(f.x, &sc.values, degree, &mut sc.pairs, &mut sc.essential);

        let (l1, l2) = (ctx.lambda_c1, ctx.lambda_c2);
        let rc = l2 - l1;
        let cap = match self.params.essential {
            EssentialPolicy::Cap(v) => Some(v),
            EssentialPolicy::Drop => None,
        };
        // Essential deaths are fixed in absolute terms, so relative to p they
        // move with the parameter of p.
        let cap_death = |v: f64| ((v - ctx.lambda_p.1).min(v - l1), (v - ctx.lambda_p.0).max(v - l1));

        let mut center = 0.0;
        for &(b, d) in &sc.pairs {
            let (vb, vd) = (sc.values[b as usize], sc.values[d as usize]);
            if vb < vd {
                center += self.peak.summand((l1, l2), (vb, vd));
            }
        }
        if let Some(v) = cap {
            for &e in &sc.essential {
                let vb = sc.values[e as usize];
                if vb < v {
                    center += self.peak.summand((l1, l2), (vb, v));
                }
            }
        }
        let center_weight = line.weight().min(FRAC_1_SQRT_2);
        let center_value = center_weight * center;

        let delta = self.entry_ranges(f, ctx, sc);
        self.build_clusters(f, sc);

        // Global matching: every point moves by at most delta.
        sc.points.clear();
        for &(b, d) in &sc.pairs {
            let z = (sc.values[b as usize] - l1, sc.values[d as usize] - l1);
            if z.0 < z.1 {
                sc.points.push(Candidate {
                    z,
                    birth: (z.0 - delta, z.0 + delta),
                    death: (z.1 - delta, z.1 + delta),
                    forced: z.1 - z.0 > 2.0 * delta,
                });
            }
        }
        if let Some(v) = cap {
            for &e in &sc.essential {
                let z = (sc.values[e as usize] - l1, v - l1);
                sc.points.push(Candidate {
                    z,
                    birth: (z.0 - delta, z.0 + delta),
                    death: cap_death(v),
                    forced: true,
                });
            }
        }
        let global = self.enclosure(f, fr, rc, delta, &sc.points, g_cap);

        // Tracked matching: points follow their simplices within clusters.
        // Points whose clusters are separated persist over the whole frame;
        // they get both a box bound and a first-order bound. Everything else
        // stays close to the diagonal.
        let s_new = self.newborn_bound(fr, sc, g_cap);
        let (r0, r1) = (fr.r_min, fr.r_max);
        let half = [
            0.5 * fr.b1.width(),
            0.5 * fr.b1.height(),
            0.5 * fr.b2.width(),
            0.5 * fr.b2.height(),
        ];
        let gr = {
            let ax = ApproxInterval::new(fr.a_hi.x, fr.a_lo.x);
            let ay = ApproxInterval::new(fr.a_lo.y, fr.a_hi.y);
            [ax.neg(), ay.neg(), ax, ay]
        };
        let mut grad = [ApproxInterval::ZERO; 4];
        let (mut forced_lo, mut forced_hi, mut forced_center) = (0.0, 0.0, 0.0);
        let mut rest = 0.0;
        let mut listed = 0usize;
        let mut forced = 0usize;
        for idx in 0..sc.pairs.len() {
            let (b, d) = sc.pairs[idx];
            let (vb, vd) = (sc.values[b as usize], sc.values[d as usize]);
            if !(vb < vd) {
                continue;
            }
            listed += 1;
            let (kb, kd) = (sc.cluster_of[b as usize] as usize, sc.cluster_of[d as usize] as usize);
            let (cb, cd) = (sc.clusters[kb], sc.clusters[kd]);
            let (lo, hi) = self.box_bounds((r0, r1), (cb.lo, cb.hi), (cd.lo, cd.hi));
            let hi = hi.min(g_cap).max(0.0);
            if cb.hi >= cd.lo {
                rest += hi.max(s_new);
                continue;
            }
            forced += 1;
            forced_lo += lo.max(0.0);
            forced_hi += hi;
            forced_center += self.peak.summand((0.0, rc), (vb - l1, vd - l1));
            let g = self.vine_grad(f, fr, sc, &gr, kb, kd);
            for j in 0..4 {
                grad[j] = grad[j].add(&g[j]);
            }
        }
        rest += f.rank.saturating_sub(listed) as f64 * s_new;
        let spread: f64 = (0..4).map(|j| grad[j].mag() * half[j]).sum();
        let mut lower = forced_lo.max(forced_center - spread);
        let mut upper = rest + forced_hi.min(forced_center + spread);
        if let Some(v) = cap {
            for &e in &sc.essential {
                let cb = sc.clusters[sc.cluster_of[e as usize] as usize];
                let death = cap_death(v);
                let (lo, hi) = self.box_bounds((r0, r1), (cb.lo, cb.hi), death);
                upper += hi.min(g_cap).max(0.0);
                if cb.hi < death.0 {
                    lower += lo.max(0.0);
                }
            }
        }
        
        let slack = REL_SLACK * (1.0 + c.v1 * n);
        let tracked = ApproxInterval::new(
            fr.w_min * (lower - slack).max(0.0),
            fr.w_max * (upper + slack),
        );

        let mut out = trivial.intersect(&global).intersect(&tracked);
        
        if ctx.class == BoxClass::Good {
            if let Some(g) = super::geometry::geometry_of_boxes(fr.b1, fr.b2) {
                let reach = f.reach(ctx.reach_base);
                let dv = variation_delta_with_reach(&g, f.n_eff, c, reach);
                if dv.is_finite() {
                    let dv = dv + REL_SLACK * (1.0 + c.v1 * n);
                    let paper = ApproxInterval::new((center_value - dv).max(0.0), center_value + dv);
                    out = out.intersect(&paper);
                }
            }
        }
        if cap.is_some() {
            return Factor {
                range: out,
                center: center_value,
                grad: None,
            };
        }
        // Any other point is, at every position in the frame, a point whose
        // birth and death clusters overlap, or absent.
        let free = f.rank.saturating_sub(forced);
        if free > 0 {
            let k = self.params.degree;
            let mut gn = [ApproxInterval::ZERO; 4];
            for kb in 0..sc.clusters.len() {
                if sc.clusters[kb].dim != k {
                    continue;
                }
                for kd in 0..sc.clusters.len() {
                    let (cb, cd) = (sc.clusters[kb], sc.clusters[kd]);
                    if cd.dim != k + 1 || cb.lo > cd.hi || cd.lo > cb.hi {
                        continue;
                    }
                    let g = self.vine_grad(f, fr, sc, &gr, kb, kd);
                    for j in 0..4 {
                        gn[j] = gn[j].hull(&g[j]);
                    }
                }
            }
            for j in 0..4 {
                grad[j] = grad[j].add(&gn[j].scale(free as f64));
            }
        }
        let phi = ApproxInterval::new(lower.max(0.0), upper.min(n * g_cap).max(lower.max(0.0)));
        let w = ApproxInterval::new(fr.w_min, fr.w_max);
        let gw = weight_grad(fr);
        let grad: [ApproxInterval; 4] = std::array::from_fn(|j| phi.mul(&gw[j]).add(&w.mul(&grad[j])));
        let half = [
            0.5 * fr.b1.width(),
            0.5 * fr.b1.height(),
            0.5 * fr.b2.width(),
            0.5 * fr.b2.height(),
        ];
        let spread: f64 = (0..4).map(|j| grad[j].mag() * half[j]).sum::<f64>() + slack;
        let out = out.intersect(&ApproxInterval::new(center_value - spread, center_value + spread));
        Factor {
            range: out,
            center: center_value,
            grad: Some(grad),
        }
    }

    /// Fills `sc.range` for the relevant simplices and returns the largest
    /// distance between a range and the centre value.
    fn entry_ranges(&self, f: &Prepared<'_>, ctx: &PairContext, sc: &mut Scratch) -> f64 {
        let fr = &ctx.frame;
        sc.range.resize(f.x.num_simplices(), (0.0, 0.0));
        let mut delta = 0.0f64;
        for &i in &f.relevant {
            let mut lo = f64::INFINITY;
            let mut hi = f64::INFINITY;
            for cp in f.x.critical(i as usize) {
                let (l, u) = crit_range(fr, *cp);
                lo = lo.min(l);
                hi = hi.min(u);
            }
            let m = sc.values[i as usize] - ctx.lambda_c1;
            let slack = REL_SLACK * (1.0 + m.abs() + lo.abs().max(hi.abs()));
            let (lo, hi) = (lo.min(m) - slack, hi.max(m) + slack);
            sc.range[i as usize] = (lo, hi);
            delta = delta.max((hi - m).max(m - lo));
        }
        delta
    }

    /// Groups the relevant simplices of each dimension into maximal chains of
    /// overlapping entry ranges. Along any path of slices inside the frame a
    /// diagram point only changes its birth (death) simplex when two entry
    /// parameters coincide, so it stays inside one cluster.
    fn build_clusters(&self, f: &Prepared<'_>, sc: &mut Scratch) {
        sc.cluster_of.resize(f.x.num_simplices(), 0);
        sc.clusters.clear();
        sc.members.clear();
        let k = self.params.degree;
        for dim in [k, k + 1] {
            let start = sc.members.len();
            sc.members.extend(
                f.relevant
                    .iter()
                    .copied()
                    .filter(|&i| f.x.simplices()[i as usize].dim() == dim),
            );
            let range = &sc.range;
            sc.members[start..]
                .sort_unstable_by(|&a, &b| range[a as usize].0.total_cmp(&range[b as usize].0));
            for pos in start..sc.members.len() {
                let i = sc.members[pos];
                let (lo, hi) = sc.range[i as usize];
                match sc.clusters.last_mut() {
                    Some(c) if c.dim == dim && lo <= c.hi => {
                        c.hi = c.hi.max(hi);
                        c.members.1 = pos + 1;
                    }
                    _ => sc.clusters.push(Cluster {
                        lo,
                        hi,
                        dim,
                        members: (pos, pos + 1),
                        grad: None,
                    }),
                }
                sc.cluster_of[i as usize] = (sc.clusters.len() - 1) as u32;
            }
        }
    }

    /// Derivative ranges of the entry parameters of a cluster, relative to
    /// `p`, over the frame. The entry parameter of a simplex is piecewise one
    /// of `(c1 - p1) / a1` or `(c2 - p2) / a2` for a critical point `c`, with
    /// `a = (q - p) / |q - p|`.
    fn cluster_grad(&self, f: &Prepared<'_>, fr: &Frame, sc: &mut Scratch, ci: usize) -> [ApproxInterval; 4] {
        if let Some(g) = sc.clusters[ci].grad {
            return g;
        }
        let iv = ApproxInterval::new;
        let b1 = &fr.b1;
        let r = iv(fr.r_min, fr.r_max);
        let ax = iv(fr.a_hi.x, fr.a_lo.x);
        let ay = iv(fr.a_lo.y, fr.a_hi.y);
        let tan = ay.div_pos(&ax);
        let cot = ax.div_pos(&ay);
        let inv_ax = iv(1.0 / fr.a_lo.x, 1.0 / fr.a_hi.x);
        let inv_ay = iv(1.0 / fr.a_hi.y, 1.0 / fr.a_lo.y);
        let cl = sc.clusters[ci];
        let mut out: Option<[ApproxInterval; 4]> = None;
        let mut add = |g: [ApproxInterval; 4]| {
            out = Some(match out {
                None => g,
                Some(o) => [o[0].hull(&g[0]), o[1].hull(&g[1]), o[2].hull(&g[2]), o[3].hull(&g[3])],
            });
        };
        for &i in &sc.members[cl.members.0..cl.members.1] {
            let (rlo, rhi) = sc.range[i as usize];
            for c in f.x.critical(i as usize) {
                let ca = iv(c.x - b1.x1, c.x - b1.x0);
                let cb = iv(c.y - b1.y1, c.y - b1.y0);
                let t1 = ca.mul(&inv_ax);
                let t2 = cb.mul(&inv_ay);
                // A term can only be active where it is the larger one, and
                // with a value in the range of the simplex.
                if t1.hi >= t2.lo && t1.lo <= rhi && t1.hi >= rlo {
                    let s = ca.div_pos(&r).mul(&tan);
                    let gq = [s.mul(&tan).neg(), s];
                    add([gq[0].neg().sub(&inv_ax), gq[1].neg(), gq[0], gq[1]]);
                }
                if t2.hi >= t1.lo && t2.lo <= rhi && t2.hi >= rlo {
                    let s = cb.div_pos(&r).mul(&cot);
                    let gq = [s, s.mul(&cot).neg()];
                    add([gq[0].neg(), gq[1].neg().sub(&inv_ay), gq[0], gq[1]]);
                }
            }
        }
        let g = out.unwrap_or([ApproxInterval::ZERO; 4]);
        sc.clusters[ci].grad = Some(g);
        g
    }

    /// Bound on one summand from a point created on the way from the centre
    /// slice: its birth and death clusters overlap, so it lies within the
    /// square spanned by their hull, close to the diagonal.
    fn newborn_bound(&self, fr: &Frame, sc: &Scratch, g_cap: f64) -> f64 {
        let k = self.params.degree;
        let mut best = 0.0f64;
        for cb in sc.clusters.iter().filter(|c| c.dim == k) {
            for cd in sc.clusters.iter().filter(|c| c.dim == k + 1) {
                if cb.lo > cd.hi || cd.lo > cb.hi {
                    continue;
                }
                let hull = (cb.lo.min(cd.lo), cb.hi.max(cd.hi));
                // Distance from x = (0, r) to the square hull x hull.
                let gx = (hull.0 - 0.0).max(0.0 - hull.1).max(0.0);
                let gy = (hull.0 - fr.r_max).max(fr.r_min - hull.1).max(0.0);
                let rho = gx.hypot(gy);
                let pers = (cd.hi - cb.lo).max(0.0);
                best = best.max(SQRT_2 * self.peak.grad_beyond(rho) * pers);
                if best >= g_cap {
                    return g_cap;
                }
            }
        }
        best
    }

    /// Bounds on `sum_z k(x, z) - k(x, z_bar)` for `x = (0, r)` with
    /// `r in [r_min, r_max]` and the diagram of any traversing slice, whose
    /// points lie within `delta` (sup norm) of the candidates or of the diagonal.
    fn enclosure(
        &self,
        f: &Prepared<'_>,
        fr: &Frame,
        rc: f64,
        delta: f64,
        points: &[Candidate],
        g_cap: f64,
    ) -> ApproxInterval {
        let v2 = self.consts.v2;
        let (r0, r1) = (fr.r_min, fr.r_max);
        let dr = (rc - r0).max(r1 - rc).max(0.0);
        // A point within delta of the diagonal is at Euclidean distance at
        // most sqrt(2) delta from it, where every summand vanishes.
        let s_diag = (SQRT_2 * v2 * delta).min(g_cap);
        let mut lower = 0.0;
        let mut upper = 0.0;
        for cand in points {
            let hc = self.peak.summand((0.0, rc), cand.z);
            let dz = (cand.z.0 - cand.birth.0)
                .max(cand.birth.1 - cand.z.0)
                .hypot((cand.z.1 - cand.death.0).max(cand.death.1 - cand.z.1));
            let lip = v2 * (dr + dz);
            let (box_lo, box_hi) = self.box_bounds((r0, r1), cand.birth, cand.death);
            let hi = box_hi.min(hc + lip).min(g_cap);
            upper += hi.max(s_diag);
            if cand.forced {
                lower += box_lo.max(hc - lip).max(0.0);
            }
        }
        let spare = f.n_eff.saturating_sub(points.len()) as f64;
        upper += spare * s_diag;
        let lower = lower * (1.0 - REL_SLACK);
        let upper = upper * (1.0 + REL_SLACK);
        ApproxInterval::new(fr.w_min * lower, fr.w_max * upper)
    }

    /// Derivative ranges of one summand whose birth and death stay in the
    /// given clusters.
    fn vine_grad(
        &self,
        f: &Prepared<'_>,
        fr: &Frame,
        sc: &mut Scratch,
        gr: &[ApproxInterval; 4],
        kb: usize,
        kd: usize,
    ) -> [ApproxInterval; 4] {
        let (cb, cd) = (sc.clusters[kb], sc.clusters[kd]);
        let df = self.summand_partials((fr.r_min, fr.r_max), (cb.lo, cb.hi), (cd.lo, cd.hi));
        let gb = self.cluster_grad(f, fr, sc, kb);
        let gd = self.cluster_grad(f, fr, sc, kd);
        std::array::from_fn(|j| {
            df[0].mul(&gb[j]).add(&df[1].mul(&gd[j])).add(&df[2].mul(&gr[j]))
        })
    }

    /// Ranges of the partial derivatives of `k(x, z) - k(x, z_bar)` in the
    /// birth, the death and `r`, over `x in {0} x r`, `z in birth x death`.
    fn summand_partials(&self, r: (f64, f64), birth: (f64, f64), death: (f64, f64)) -> [ApproxInterval; 3] {
        let iv = |p: (f64, f64)| ApproxInterval::new(p.0, p.1);
        let (b, d, r) = (iv(birth), iv(death), iv(r));
        let (dmr, bmr) = (d.sub(&r), b.sub(&r));
        // z - x = (b, d - r) for the point, (d, b - r) for its mirror image.
        let p = |along, other| self.peak.partial(along, other);
        [
            p(b, dmr).sub(&p(bmr, d)),
            p(dmr, b).sub(&p(d, bmr)),
            p(bmr, d).sub(&p(dmr, b)),
        ]
    }

    /// Range of `k(x, z) - k(x, z_bar)` over `x in {0} x r`, `z in birth x death`.
    fn box_bounds(&self, r: (f64, f64), birth: (f64, f64), death: (f64, f64)) -> (f64, f64) {
        let x0 = (0.0, 0.0);
        let near = (dist_sq_range(x0, birth), dist_sq_range(r, death));
        let far = (dist_sq_range(x0, death), dist_sq_range(r, birth));
        let (near_min, near_max) = (near.0 .0 + near.1 .0, near.0 .1 + near.1 .1);
        let (far_min, far_max) = (far.0 .0 + far.1 .0, far.0 .1 + far.1 .1);
        (
            self.peak.at_sq(near_max) - self.peak.at_sq(far_min),
            self.peak.at_sq(near_min) - self.peak.at_sq(far_max),
        )
    }

    pub(crate) fn level(
        &self,
        s: u32,
        cache: &DiagramCache,
    ) -> LevelReport {
        let start = Instant::now();
        let n = 1u32 << s;
        // One partition per first box, in index order; partial sums are
        // combined in the same order whatever the number of workers.
        let parts: Vec<(KahanSum, KahanSum, ClassCounts)> = (0..n * n)
            .into_par_iter()
            .map_init(Scratch::default, |sc, idx| {
                let (i1, j1) = (idx / n, idx % n);
                let mut lo = KahanSum::default();
                let mut hi = KahanSum::default();
                let mut counts = ClassCounts::default();
                for i2 in i1..n {
                    for j2 in j1..n {
                        let bp = BoxPair { s, i1, j1, i2, j2 };
                        let (class, iv) = self.pair(&bp, cache, sc);
                        counts.bump(class);
                        lo.add(iv.lo);
                        hi.add(iv.hi);
                    }
                }
                (lo, hi, counts)
            })
            .collect();
        let mut lo = KahanSum::default();
        let mut hi = KahanSum::default();
        let mut counts = ClassCounts::default();
        for (l, h, c) in &parts {
            lo.merge(l);
            hi.merge(h);
            counts.merge(c);
        }
        let total = 1u64 << (4 * s);
        counts.null += total - counts.total();
        let interval = ApproxInterval::new(
            (lo.value() - lo.error_bound()).max(0.0),
            hi.value() + hi.error_bound(),
        );
        LevelReport {
            s,
            interval,
            counts,
            seconds: start.elapsed().as_secs_f64(),
        }
    }
}

/// Derivative ranges of the slope weight `min(a1, a2)`, `a = (q - p) / |q - p|`,
/// with respect to `(p1, p2, q1, q2)` over the frame.
/// Range over the frame of the entry parameter, relative to `p`, of the
/// quadrant above `c` on the slice through `p` with direction `a`:
/// `max((c1 - p1) / a1, (c2 - p2) / a2)`. Both terms decrease in `p`; in the
/// angle each is monotone, so the maximum over the sector is at an end and
/// the minimum at an end or where the two terms cross.
fn crit_range(fr: &Frame, c: Point2) -> (f64, f64) {
    let (a_lo, a_hi, b1) = (fr.a_lo, fr.a_hi, &fr.b1);
    let mu = |a0: f64, b0: f64, a: Point2| (a0 / a.x).max(b0 / a.y);
    let (a0, b0) = (c.x - b1.x1, c.y - b1.y1);
    let mut lo = mu(a0, b0, a_lo).min(mu(a0, b0, a_hi));
    if a0 * b0 > 0.0 {
        let h = a0.hypot(b0);
        let cross = Point2::new(a0.abs() / h, b0.abs() / h);
        if in_sector(fr, cross) {
            lo = lo.min(mu(a0, b0, cross));
        }
    }
    let (a1, b1) = (c.x - b1.x0, c.y - b1.y0);
    (lo, mu(a1, b1, a_lo).max(mu(a1, b1, a_hi)))
}

fn in_sector(fr: &Frame, a: Point2) -> bool {
    a.y * fr.a_lo.x >= fr.a_lo.y * a.x && a.y * fr.a_hi.x <= fr.a_hi.y * a.x
}

fn weight_grad(fr: &Frame) -> [ApproxInterval; 4] {
    let iv = ApproxInterval::new;
    let inv_r = iv(1.0 / fr.r_max, 1.0 / fr.r_min);
    let ax = iv(fr.a_hi.x, fr.a_lo.x);
    let ay = iv(fr.a_lo.y, fr.a_hi.y);
    let xy = ax.mul(&ay).mul(&inv_r);
    let xx = ax.mul(&ax).mul(&inv_r);
    let yy = ay.mul(&ay).mul(&inv_r);
    let dx = [yy.neg(), xy, yy, xy.neg()];
    let dy = [xy, xx.neg(), xy.neg(), xx];
    let steep = fr.a_lo.x <= fr.a_lo.y;
    let shallow = fr.a_hi.y <= fr.a_hi.x;
    std::array::from_fn(|j| match (steep, shallow) {
        (true, false) => dx[j],
        (false, true) => dy[j],
        _ => dx[j].hull(&dy[j]),
    })
}

/// Range of `(a - b)^2` for `a in x`, `b in z`.
fn dist_sq_range(x: (f64, f64), z: (f64, f64)) -> (f64, f64) {
    let gap = (z.0 - x.1).max(x.0 - z.1).max(0.0);
    let far = (z.1 - x.0).abs().max((x.1 - z.0).abs());
    (gap * gap, far * far)
}

fn with_pool<T: Send>(threads: usize, f: impl FnOnce() -> T + Send) -> Result<T> {
    let mut b = rayon::ThreadPoolBuilder::new();
    if threads > 0 {
        b = b.num_threads(threads);
    }
    let pool = b
        .build()
        .map_err(|e| Error::InvalidParameter(format!("thread pool: {e}")))?;
    Ok(pool.install(f))
}

/// Certified enclosure of the kernel at a single resolution.
pub fn kernel_level(
    x: &BiFiltration,
    y: &BiFiltration,
    s: u32,
    params: &FeatureParams,
    cache: &DiagramCache,
    options: &EngineOptions,
) -> Result<LevelReport> {
    if s > 15 {
        return Err(Error::InvalidParameter(format!("resolution {s} is too large")));
    }
    let engine = Engine::new(x, y, params)?;
    with_pool(options.threads, || engine.level(s, cache))
}

/// Enclosure of one box pair's contribution.
pub fn boxpair_interval(
    bp: &BoxPair,
    x: &BiFiltration,
    y: &BiFiltration,
    params: &FeatureParams,
    cache: &DiagramCache,
) -> Result<ApproxInterval> {
    let engine = Engine::new(x, y, params)?;
    Ok(engine.pair(bp, cache, &mut Scratch::default()).1)
}

/// Doubles the resolution until the enclosure of the kernel is at most
/// `epsilon` wide.
pub fn kernel_approx(
    x: &BiFiltration,
    y: &BiFiltration,
    epsilon: f64,
    params: &FeatureParams,
    options: &EngineOptions,
) -> Result<KernelResult> {
    let cache = DiagramCache::with_capacity(options.cache_capacity);
    kernel_approx_cached(x, y, epsilon, params, options, &cache)
}

pub fn kernel_approx_cached(
    x: &BiFiltration,
    y: &BiFiltration,
    epsilon: f64,
    params: &FeatureParams,
    options: &EngineOptions,
    cache: &DiagramCache,
) -> Result<KernelResult> {
    if !(epsilon.is_finite() && epsilon > 0.0) {
        return Err(Error::InvalidParameter(format!("epsilon = {epsilon} must be positive")));
    }
    if options.max_depth > 15 || options.min_depth > options.max_depth {
        return Err(Error::InvalidParameter(format!(
            "depth range {}..={} is invalid",
            options.min_depth, options.max_depth
        )));
    }
    let engine = Engine::new(x, y, params)?;
    let start = Instant::now();
    let (h0, m0) = (cache.hits(), cache.misses());
    with_pool(options.threads, || {
        let mut levels: Vec<LevelReport> = Vec::new();
        for s in options.min_depth.max(1)..=options.max_depth {
            let report = engine.level(s, cache);
            let done = report.interval.width() <= epsilon;
            levels.push(report);
            if done {
                let last = levels.last().expect("just pushed");
                let (h, m) = (cache.hits() - h0, cache.misses() - m0);
                return Ok(KernelResult {
                    value: last.interval.lo,
                    interval: last.interval,
                    epsilon,
                    final_resolution: s,
                    stats: KernelStats {
                        counts: last.counts,
                        cache_hit_rate: if h + m == 0 { 0.0 } else { h as f64 / (h + m) as f64 },
                        seconds: start.elapsed().as_secs_f64(),
                    },
                    levels,
                });
            }
        }
        let best = levels
            .iter()
            .map(|l| l.interval)
            .min_by(|a, b| a.width().total_cmp(&b.width()))
            .unwrap_or(ApproxInterval::new(0.0, f64::INFINITY));
        Err(Error::ResolutionCap {
            max_depth: options.max_depth,
            best,
        })
    })?
}

/// Symmetric matrix of kernel values with the certified interval of each entry.
#[derive(Debug, Clone, Serialize)]
pub struct GramMatrix {
    pub values: Vec<Vec<f64>>,
    pub intervals: Vec<Vec<ApproxInterval>>,
    pub resolutions: Vec<Vec<u32>>,
    pub epsilon: f64,
}

pub fn gram_matrix(
    inputs: &[BiFiltration],
    epsilon: f64,
    params: &FeatureParams,
    options: &EngineOptions,
) -> Result<GramMatrix> {
    if inputs.is_empty() {
        return Err(Error::InvalidParameter("gram matrix of an empty list".into()));
    }
    let cache = DiagramCache::with_capacity(options.cache_capacity);
    let n = inputs.len();
    let mut values = vec![vec![0.0; n]; n];
    let mut intervals = vec![vec![ApproxInterval::ZERO; n]; n];
    let mut resolutions = vec![vec![0; n]; n];
    for i in 0..n {
        for j in i..n {
            let r = kernel_approx_cached(&inputs[i], &inputs[j], epsilon, params, options, &cache)?;
            for (a, b) in [(i, j), (j, i)] {
                values[a][b] = r.value;
                intervals[a][b] = r.interval;
                resolutions[a][b] = r.final_resolution;
            }
        }
    }
    Ok(GramMatrix {
        values,
        intervals,
        resolutions,
        epsilon,
    })
}
