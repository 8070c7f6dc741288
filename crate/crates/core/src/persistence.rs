//! Persistence diagrams over the two-element field and the bottleneck distance.

use std::fmt::Write as _;

use crate::bifiltration::BiFiltration;
use crate::slicing::{filtration_order, MonoFiltration};

/// Multiset of `(birth, death)` pairs in one homology degree.
///
/// Diagonal points are never stored; `death` may be `+inf`. Points are kept
/// sorted by birth, then death.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct PersistenceDiagram {
    pub degree: usize,
    points: Vec<(f64, f64)>,
}

impl PersistenceDiagram {
    pub fn new(degree: usize, points: Vec<(f64, f64)>) -> Self {
        let mut points: Vec<(f64, f64)> = points.into_iter().filter(|(b, d)| b < d).collect();
        sort_points(&mut points);
        PersistenceDiagram { degree, points }
    }

    pub fn points(&self) -> &[(f64, f64)] {
        &self.points
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn finite_points(&self) -> impl Iterator<Item = (f64, f64)> + '_ {
        self.points.iter().copied().filter(|(_, d)| d.is_finite())
    }

    pub fn essential_births(&self) -> impl Iterator<Item = f64> + '_ {
        self.points
            .iter()
            .filter(|(_, d)| d.is_infinite())
            .map(|(b, _)| *b)
    }

    pub fn num_essential(&self) -> usize {
        self.essential_births().count()
    }

    /// Multiset union.
    pub fn union(&self, other: &PersistenceDiagram) -> PersistenceDiagram {
        let mut points = self.points.clone();
        points.extend_from_slice(&other.points);
        sort_points(&mut points);
        PersistenceDiagram {
            degree: self.degree,
            points,
        }
    }

    /// Every point shifted by `delta` along the diagonal.
    pub fn shifted(&self, delta: f64) -> PersistenceDiagram {
        PersistenceDiagram {
            degree: self.degree,
            points: self.points.iter().map(|(b, d)| (b + delta, d + delta)).collect(),
        }
    }

    /// CSV rows `degree,birth,death` with `inf` for essential classes.
    pub fn to_csv(&self, out: &mut String, fmt: impl Fn(f64) -> String) {
        for (b, d) in &self.points {
            let death = if d.is_infinite() { "inf".to_string() } else { fmt(*d) };
            let _ = writeln!(out, "{},{},{}", self.degree, fmt(*b), death);
        }
    }
}

fn sort_points(points: &mut [(f64, f64)]) {
    points.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.total_cmp(&b.1)));
}

/// Reusable buffers for column reduction.
#[derive(Debug, Default)]
pub(crate) struct Workspace {
    order: Vec<u32>,
    position: Vec<u32>,
    columns: Vec<Vec<u32>>,
    pivot_owner: Vec<u32>,
    scratch: Vec<u32>,
    pairs: Vec<(u32, u32)>,
    essential: Vec<u32>,
}

const NONE: u32 = u32::MAX;

impl Workspace {
    /// Standard left-to-right column reduction restricted to the columns of
    /// dimension `degree` and `degree + 1`. Fills `pairs` with
    /// `(birth position, death position)` and `essential` with unpaired
    /// positive `degree`-simplices.
    fn reduce(
        &mut self,
        n: usize,
        degree: usize,
        dim_of: impl Fn(usize) -> usize,
        mut boundary: impl FnMut(usize, &mut Vec<u32>),
    ) {
        self.columns.resize_with(n, Vec::new);
        self.pivot_owner.clear();
        self.pivot_owner.resize(n, NONE);
        self.pairs.clear();
        self.essential.clear();

        let mut positive = Vec::new();
        for j in 0..n {
            let dim = dim_of(j);
            let mut col = std::mem::take(&mut self.columns[j]);
            col.clear();
            if dim != degree && dim != degree + 1 {
                self.columns[j] = col;
                continue;
            }
            boundary(j, &mut col);
            col.sort_unstable();
            while let Some(&low) = col.last() {
                let owner = self.pivot_owner[low as usize];
                if owner == NONE {
                    break;
                }
                symmetric_difference(&col, &self.columns[owner as usize], &mut self.scratch);
                std::mem::swap(&mut col, &mut self.scratch);
            }
            match col.last() {
                Some(&low) => {
                    self.pivot_owner[low as usize] = j as u32;
                    if dim == degree + 1 {
                        self.pairs.push((low, j as u32));
                    }
                }
                None if dim == degree => positive.push(j as u32),
                None => {}
            }
            self.columns[j] = col;
        }
        self.essential.extend(
            positive
                .into_iter()
                .filter(|&i| self.pivot_owner[i as usize] == NONE),
        );
    }

    fn diagram(&self, degree: usize, value_at: impl Fn(u32) -> f64) -> PersistenceDiagram {
        let mut points = Vec::with_capacity(self.pairs.len() + self.essential.len());
        for &(b, d) in &self.pairs {
            let (vb, vd) = (value_at(b), value_at(d));
            if vb < vd {
                points.push((vb, vd));
            }
        }
        for &e in &self.essential {
            points.push((value_at(e), f64::INFINITY));
        }
        sort_points(&mut points);
        PersistenceDiagram { degree, points }
    }

    /// Reduces `x` filtered by per-simplex `values` (indexed like
    /// `x.simplices()`); leaves `order` mapping positions to simplices.
    fn reduce_values(&mut self, x: &BiFiltration, values: &[f64], degree: usize) {
        let mut order = std::mem::take(&mut self.order);
        let mut position = std::mem::take(&mut self.position);
        filtration_order(values, &mut order);
        position.clear();
        position.resize(values.len(), 0);
        for (rank, &i) in order.iter().enumerate() {
            position[i as usize] = rank as u32;
        }
        let simplices = x.simplices();
        self.reduce(
            order.len(),
            degree,
            |j| simplices[order[j] as usize].dim(),
            |j, col| {
                col.extend(
                    x.facets(order[j] as usize)
                        .iter()
                        .map(|&f| position[f as usize]),
                )
            },
        );
        self.order = order;
        self.position = position;
    }

    /// Diagram of `x` filtered by per-simplex `values`.
    pub(crate) fn diagram_of_values(
        &mut self,
        x: &BiFiltration,
        values: &[f64],
        degree: usize,
    ) -> PersistenceDiagram {
        self.reduce_values(x, values, degree);
        let order = &self.order;
        self.diagram(degree, |pos| values[order[pos as usize] as usize])
    }

    /// Persistence pairs of `x` filtered by `values`, as simplex indices:
    /// `(birth, death)` pairs (including zero-length ones) and the unpaired
    /// `degree`-simplices.
    pub(crate) fn simplex_pairs(
        &mut self,
        x: &BiFiltration,
        values: &[f64],
        degree: usize,
        pairs: &mut Vec<(u32, u32)>,
        essential: &mut Vec<u32>,
    ) {
        self.reduce_values(x, values, degree);
        let order = &self.order;
        pairs.clear();
        pairs.extend(
            self.pairs
                .iter()
                .map(|&(b, d)| (order[b as usize], order[d as usize])),
        );
        essential.clear();
        essential.extend(self.essential.iter().map(|&e| order[e as usize]));
    }
}

fn symmetric_difference(a: &[u32], b: &[u32], out: &mut Vec<u32>) {
    out.clear();
    let (mut i, mut j) = (0, 0);
    while i < a.len() && j < b.len() {
        match a[i].cmp(&b[j]) {
            std::cmp::Ordering::Less => {
                out.push(a[i]);
                i += 1;
            }
            std::cmp::Ordering::Greater => {
                out.push(b[j]);
                j += 1;
            }
            std::cmp::Ordering::Equal => {
                i += 1;
                j += 1;
            }
        }
    }
    out.extend_from_slice(&a[i..]);
    out.extend_from_slice(&b[j..]);
}

/// Persistence diagram of a mono-filtration in the given degree.
pub fn compute_diagram(m: &MonoFiltration, degree: usize) -> PersistenceDiagram {
    let mut ws = Workspace::default();
    ws.reduce(
        m.len(),
        degree,
        |j| m.simplices()[j].dim(),
        |j, col| col.extend_from_slice(m.boundary(j)),
    );
    ws.diagram(degree, |pos| m.values()[pos as usize])
}

/// Number of finite off-diagonal points any filtration order of `x` can
/// produce in `degree`, i.e. the rank of the boundary map out of
/// `(degree + 1)`-chains. Also returns the `degree`-th Betti number of the
/// whole complex (the number of essential classes).
pub fn rank_and_betti(x: &BiFiltration, degree: usize) -> (usize, usize) {
    let mut ws = Workspace::default();
    let simplices = x.simplices();
    ws.reduce(
        x.num_simplices(),
        degree,
        |j| simplices[j].dim(),
        |j, col| col.extend_from_slice(x.facets(j)),
    );
    (ws.pairs.len(), ws.essential.len())
}

/// Exact bottleneck distance.
///
/// Essential points are matched among themselves by birth; diagrams with
/// different numbers of essential points are at distance `+inf`. Finite
/// points are matched with the diagonal available at cost `(death - birth) / 2`.
/// The optimum is selected exactly among the finitely many candidate costs by
/// binary search with a perfect-matching test.
pub fn bottleneck_distance(d1: &PersistenceDiagram, d2: &PersistenceDiagram) -> f64 {
    let mut e1: Vec<f64> = d1.essential_births().collect();
    let mut e2: Vec<f64> = d2.essential_births().collect();
    if e1.len() != e2.len() {
        return f64::INFINITY;
    }
    e1.sort_by(f64::total_cmp);
    e2.sort_by(f64::total_cmp);
    let essential = e1
        .iter()
        .zip(&e2)
        .map(|(a, b)| (a - b).abs())
        .fold(0.0, f64::max);

    let a: Vec<(f64, f64)> = d1.finite_points().collect();
    let b: Vec<(f64, f64)> = d2.finite_points().collect();
    essential.max(finite_bottleneck(&a, &b))
}

fn linf(p: (f64, f64), q: (f64, f64)) -> f64 {
    (p.0 - q.0).abs().max((p.1 - q.1).abs())
}

fn diagonal_cost(p: (f64, f64)) -> f64 {
    (p.1 - p.0) / 2.0
}

fn finite_bottleneck(a: &[(f64, f64)], b: &[(f64, f64)]) -> f64 {
    if a.is_empty() && b.is_empty() {
        return 0.0;
    }
    let mut candidates: Vec<f64> = Vec::with_capacity(a.len() * b.len() + a.len() + b.len() + 1);
    candidates.push(0.0);
    candidates.extend(a.iter().map(|&p| diagonal_cost(p)));
    candidates.extend(b.iter().map(|&q| diagonal_cost(q)));
    for &p in a {
        for &q in b {
            candidates.push(linf(p, q));
        }
    }
    candidates.sort_by(f64::total_cmp);
    candidates.dedup();

    // Matching everything to the diagonal is always feasible, so the largest
    // diagonal cost is an upper bound and the search range is non-empty.
    let (mut lo, mut hi) = (0usize, candidates.len() - 1);
    while lo < hi {
        let mid = (lo + hi) / 2;
        if perfect_matching_exists(a, b, candidates[mid]) {
            hi = mid;
        } else {
            lo = mid + 1;
        }
    }
    candidates[lo]
}

/// Left side: points of `a`, then diagonal copies of `b`.
/// Right side: points of `b`, then diagonal copies of `a`.
fn perfect_matching_exists(a: &[(f64, f64)], b: &[(f64, f64)], r: f64) -> bool {
    let (na, nb) = (a.len(), b.len());
    let n = na + nb;
    let mut adj: Vec<Vec<usize>> = vec![Vec::new(); n];
    for (i, &p) in a.iter().enumerate() {
        for (j, &q) in b.iter().enumerate() {
            if linf(p, q) <= r {
                adj[i].push(j);
            }
        }
        if diagonal_cost(p) <= r {
            adj[i].push(nb + i);
        }
    }
    for (j, &q) in b.iter().enumerate() {
        let left = na + j;
        if diagonal_cost(q) <= r {
            adj[left].push(j);
        }
        adj[left].extend((0..na).map(|i| nb + i));
    }

    let mut match_right = vec![usize::MAX; n];
    let mut visited = vec![0usize; n];
    for left in 0..n {
        if !augment(left, left + 1, &adj, &mut match_right, &mut visited) {
            return false;
        }
    }
    true
}

fn augment(
    left: usize,
    stamp: usize,
    adj: &[Vec<usize>],
    match_right: &mut [usize],
    visited: &mut [usize],
) -> bool {
    for &right in &adj[left] {
        if visited[right] == stamp {
            continue;
        }
        visited[right] = stamp;
        if match_right[right] == usize::MAX
            || augment(match_right[right], stamp, adj, match_right, visited)
        {
            match_right[right] = left;
            return true;
        }
    }
    false
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bifiltration::Simplex;

    fn s(v: &[u32]) -> Simplex {
        Simplex::new(v.to_vec()).unwrap()
    }

    fn diagram(points: &[(f64, f64)]) -> PersistenceDiagram {
        PersistenceDiagram::new(0, points.to_vec())
    }

    #[test]
    fn empty_filtration_has_empty_diagram() {
        assert!(compute_diagram(&MonoFiltration::default(), 0).is_empty());
    }

    #[test]
    fn two_vertices_and_an_edge() {
        let m = MonoFiltration::from_values(vec![
            (s(&[0]), 0.0),
            (s(&[1]), 1.0),
            (s(&[0, 1]), 2.0),
        ])
        .unwrap();
        let d = compute_diagram(&m, 0);
        assert_eq!(d.points(), &[(0.0, f64::INFINITY), (1.0, 2.0)]);
    }

    #[test]
    fn hollow_triangle_has_one_essential_loop() {
        let m = MonoFiltration::from_values(vec![
            (s(&[0]), 0.0),
            (s(&[1]), 0.0),
            (s(&[2]), 0.0),
            (s(&[0, 1]), 1.0),
            (s(&[0, 2]), 1.0),
            (s(&[1, 2]), 1.0),
        ])
        .unwrap();
        assert_eq!(compute_diagram(&m, 1).points(), &[(1.0, f64::INFINITY)]);
        assert_eq!(
            compute_diagram(&m, 0).points(),
            &[(0.0, 1.0), (0.0, 1.0), (0.0, f64::INFINITY)]
        );
        assert!(compute_diagram(&m, 3).is_empty());
    }

    #[test]
    fn filled_triangle_kills_the_loop() {
        let m = MonoFiltration::from_values(vec![
            (s(&[0]), 0.0),
            (s(&[1]), 0.0),
            (s(&[2]), 0.0),
            (s(&[0, 1]), 1.0),
            (s(&[0, 2]), 1.0),
            (s(&[1, 2]), 1.0),
            (s(&[0, 1, 2]), 3.0),
        ])
        .unwrap();
        assert_eq!(compute_diagram(&m, 1).points(), &[(1.0, 3.0)]);
    }

    #[test]
    fn bottleneck_examples() {
        let a = diagram(&[(0.0, 2.0)]);
        assert_eq!(bottleneck_distance(&a, &a), 0.0);
        assert_eq!(bottleneck_distance(&a, &diagram(&[])), 1.0);
        assert_eq!(bottleneck_distance(&a, &diagram(&[(0.5, 2.0)])), 0.5);
    }

    #[test]
    fn bottleneck_essential_points() {
        let a = diagram(&[(0.0, f64::INFINITY), (1.0, 1.5)]);
        let b = diagram(&[(0.3, f64::INFINITY)]);
        assert!((bottleneck_distance(&a, &b) - 0.3).abs() < 1e-15);
        assert_eq!(bottleneck_distance(&a, &diagram(&[(1.0, 1.5)])), f64::INFINITY);
    }

    #[test]
    fn rank_counts_finite_classes() {
        let m = crate::bifiltration::BiFiltration::new(vec![
            (s(&[0]), vec![crate::point::Point2::new(0.0, 0.0)]),
            (s(&[1]), vec![crate::point::Point2::new(0.0, 0.0)]),
            (s(&[2]), vec![crate::point::Point2::new(0.0, 0.0)]),
            (s(&[0, 1]), vec![crate::point::Point2::new(0.0, 0.0)]),
        ])
        .unwrap();
        assert_eq!(rank_and_betti(&m, 0), (1, 2));
        assert_eq!(rank_and_betti(&m, 1), (0, 0));
    }
}
