//! Tame bi-filtrations of finite simplicial complexes.
//!
//! A bi-filtration is stored as a simplicial complex where every simplex carries
//! a finite set of pairwise incomparable critical points. A simplex belongs to
//! the subcomplex at `p` iff one of its critical points is `<= p`.

use std::collections::hash_map::DefaultHasher;
use std::collections::HashMap;
use std::fmt::{self, Write as _};
use std::hash::{Hash, Hasher};
use std::io::Read;

use crate::error::{Error, Result};
use crate::point::Point2;

pub const FORMAT_HEADER: &str = "multipers-bifiltration v1";

/// An abstract simplex: a strictly increasing, non-empty list of vertex ids.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Simplex(Vec<u32>);

impl Simplex {
    pub fn new(vertices: Vec<u32>) -> Result<Self> {
        if vertices.is_empty() || vertices.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::InvalidSimplex(vertices));
        }
        Ok(Simplex(vertices))
    }

    /// Builds a simplex from vertices in any order; duplicates are rejected.
    pub fn from_unsorted(mut vertices: Vec<u32>) -> Result<Self> {
        vertices.sort_unstable();
        Simplex::new(vertices)
    }

    pub fn vertex(v: u32) -> Self {
        Simplex(vec![v])
    }

    pub fn vertices(&self) -> &[u32] {
        &self.0
    }

    pub fn dim(&self) -> usize {
        self.0.len() - 1
    }

    /// Codimension-one faces, in lexicographic order.
    pub fn facets(&self) -> impl Iterator<Item = Simplex> + '_ {
        let n = if self.0.len() > 1 { self.0.len() } else { 0 };
        (0..n).rev().map(move |skip| {
            Simplex(
                self.0
                    .iter()
                    .enumerate()
                    .filter(|&(i, _)| i != skip)
                    .map(|(_, &v)| v)
                    .collect(),
            )
        })
    }

    /// Canonical order: dimension first, then lexicographic.
    pub fn canonical_cmp(&self, other: &Simplex) -> std::cmp::Ordering {
        self.0
            .len()
            .cmp(&other.0.len())
            .then_with(|| self.0.cmp(&other.0))
    }

    fn shifted(&self, offset: u32) -> Simplex {
        Simplex(self.0.iter().map(|v| v + offset).collect())
    }
}

impl fmt::Display for Simplex {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{{")?;
        for (i, v) in self.0.iter().enumerate() {
            if i > 0 {
                write!(f, ",")?;
            }
            write!(f, "{v}")?;
        }
        write!(f, "}}")
    }
}

/// Removes dominated points and sorts the remainder by x, then y.
///
/// A point is dominated when another (distinct) point of the set is `<=` it.
pub fn minimal_points(points: &[Point2]) -> Vec<Point2> {
    let mut sorted = points.to_vec();
    sorted.sort_by(|a, b| a.x.total_cmp(&b.x).then(a.y.total_cmp(&b.y)));
    sorted.dedup();
    // Sweeping by increasing x, a point survives iff its y is strictly below
    // every y seen so far.
    let mut out: Vec<Point2> = Vec::with_capacity(sorted.len());
    let mut best_y = f64::INFINITY;
    for p in sorted {
        if p.y < best_y {
            best_y = p.y;
            out.push(p);
        }
    }
    out
}

/// Immutable, validated tame bi-filtration in canonical form.
#[derive(Debug, Clone)]
pub struct BiFiltration {
    simplices: Vec<Simplex>,
    critical: Vec<Vec<Point2>>,
    facets: Vec<Vec<u32>>,
    index: HashMap<Simplex, usize>,
    fingerprint: u64,
}

impl PartialEq for BiFiltration {
    fn eq(&self, other: &Self) -> bool {
        self.simplices == other.simplices && self.critical == other.critical
    }
}

impl BiFiltration {
    pub fn empty() -> Self {
        BiFiltration::new(Vec::new()).expect("empty bi-filtration is valid")
    }

    /// Validates and canonicalizes a list of simplices with critical points.
    pub fn new(entries: Vec<(Simplex, Vec<Point2>)>) -> Result<Self> {
        let mut entries = entries;
        for (s, crit) in &entries {
            if crit.is_empty() {
                return Err(Error::EmptyCriticalSet(s.0.clone()));
            }
            if let Some(p) = crit.iter().find(|p| !p.is_finite()) {
                return Err(Error::NonFinite(format!("critical point {p} of {s}")));
            }
        }
        entries.sort_by(|a, b| a.0.canonical_cmp(&b.0));
        for w in entries.windows(2) {
            if w[0].0 == w[1].0 {
                return Err(Error::DuplicateSimplex(w[0].0 .0.clone()));
            }
        }

        let mut index = HashMap::with_capacity(entries.len());
        for (i, (s, _)) in entries.iter().enumerate() {
            index.insert(s.clone(), i);
        }
        let (simplices, critical): (Vec<_>, Vec<_>) = entries
            .into_iter()
            .map(|(s, c)| (s, minimal_points(&c)))
            .unzip();

        let mut facets = Vec::with_capacity(simplices.len());
        for (s, crit) in simplices.iter().zip(&critical) {
            let mut ids = Vec::with_capacity(s.0.len());
            for face in s.facets() {
                let Some(&fi) = index.get(&face) else {
                    return Err(Error::FaceClosure {
                        simplex: s.0.clone(),
                        missing: face.0,
                    });
                };
                // Facets suffice: monotonicity is transitive along face chains.
                for q in crit {
                    if !critical[fi].iter().any(|p| p.le(q)) {
                        return Err(Error::Monotonicity {
                            simplex: s.0.clone(),
                            face: face.0.clone(),
                            x: q.x,
                            y: q.y,
                        });
                    }
                }
                ids.push(fi as u32);
            }
            facets.push(ids);
        }

        let mut hasher = DefaultHasher::new();
        for (s, crit) in simplices.iter().zip(&critical) {
            s.hash(&mut hasher);
            for p in crit {
                p.x.to_bits().hash(&mut hasher);
                p.y.to_bits().hash(&mut hasher);
            }
        }
        let fingerprint = hasher.finish();

        Ok(BiFiltration {
            simplices,
            critical,
            facets,
            index,
            fingerprint,
        })
    }

    pub fn simplices(&self) -> &[Simplex] {
        &self.simplices
    }

    pub fn critical(&self, i: usize) -> &[Point2] {
        &self.critical[i]
    }

    pub fn critical_sets(&self) -> &[Vec<Point2>] {
        &self.critical
    }

    /// Indices of the codimension-one faces of simplex `i`.
    pub fn facets(&self, i: usize) -> &[u32] {
        &self.facets[i]
    }

    pub fn index_of(&self, s: &Simplex) -> Option<usize> {
        self.index.get(s).copied()
    }

    pub fn num_simplices(&self) -> usize {
        self.simplices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.simplices.is_empty()
    }

    /// Total number of critical points over all simplices.
    pub fn size(&self) -> usize {
        self.critical.iter().map(Vec::len).sum()
    }

    pub fn max_dim(&self) -> Option<usize> {
        self.simplices.last().map(Simplex::dim)
    }

    /// Content hash of the canonical form; stable across runs.
    pub fn fingerprint(&self) -> u64 {
        self.fingerprint
    }

    /// Whether `s` belongs to the subcomplex at `p` (closed sublevel convention).
    pub fn membership(&self, s: &Simplex, p: Point2) -> Result<bool> {
        let i = self
            .index_of(s)
            .ok_or_else(|| Error::UnknownSimplex(s.0.clone()))?;
        Ok(self.critical[i].iter().any(|c| c.le(&p)))
    }

    /// Disjoint union; vertices of `other` are relabelled past those of `self`.
    pub fn direct_sum(&self, other: &BiFiltration) -> BiFiltration {
        let offset = self
            .simplices
            .iter()
            .flat_map(|s| s.0.iter().copied())
            .max()
            .map_or(0, |v| v + 1);
        let mut entries: Vec<(Simplex, Vec<Point2>)> = self
            .simplices
            .iter()
            .cloned()
            .zip(self.critical.iter().cloned())
            .collect();
        entries.extend(
            other
                .simplices
                .iter()
                .map(|s| s.shifted(offset))
                .zip(other.critical.iter().cloned()),
        );
        BiFiltration::new(entries).expect("direct sum of valid bi-filtrations is valid")
    }

    /// `m` disjoint copies of `self`.
    pub fn repeated(&self, m: usize) -> BiFiltration {
        let mut out = BiFiltration::empty();
        for _ in 0..m {
            out = out.direct_sum(self);
        }
        out
    }

    pub fn parse_str(text: &str) -> Result<Self> {
        parse_bifiltration(text.as_bytes())
    }

    /// Serializes in the line-based text format, in canonical order.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "{FORMAT_HEADER}");
        let _ = writeln!(out, "{}", self.simplices.len());
        for (s, crit) in self.simplices.iter().zip(&self.critical) {
            let _ = write!(out, "{}", s.dim());
            for v in &s.0 {
                let _ = write!(out, " {v}");
            }
            let _ = write!(out, " ; {}", crit.len());
            for p in crit {
                let _ = write!(out, " {:?} {:?}", p.x, p.y);
            }
            out.push('\n');
        }
        out
    }
}

/// Parses the text format from any reader.
pub fn parse_bifiltration<R: Read>(mut input: R) -> Result<BiFiltration> {
    let mut text = String::new();
    input.read_to_string(&mut text).map_err(|e| {
        if e.kind() == std::io::ErrorKind::InvalidData {
            Error::Syntax {
                line: 0,
                message: "input is not valid UTF-8".into(),
            }
        } else {
            Error::Io(e)
        }
    })?;

    let mut lines = text
        .lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l.trim()))
        .filter(|(_, l)| !l.is_empty() && !l.starts_with('#'));

    let syntax = |line: usize, message: String| Error::Syntax { line, message };

    let (ln, header) = lines
        .next()
        .ok_or_else(|| syntax(1, "missing header".into()))?;
    if header != FORMAT_HEADER {
        return Err(syntax(ln, format!("expected header `{FORMAT_HEADER}`")));
    }
    let (ln, count) = lines
        .next()
        .ok_or_else(|| syntax(ln + 1, "missing simplex count".into()))?;
    let count: usize = count
        .parse()
        .map_err(|_| syntax(ln, format!("invalid simplex count `{count}`")))?;

    let mut entries = Vec::with_capacity(count);
    let mut last_line = ln;
    for (ln, line) in lines {
        last_line = ln;
        if entries.len() == count {
            return Err(syntax(ln, format!("more than {count} simplices")));
        }
        let (lhs, rhs) = line
            .split_once(';')
            .ok_or_else(|| syntax(ln, "missing `;` separator".into()))?;
        let head: Vec<&str> = lhs.split_whitespace().collect();
        let dim: usize = head
            .first()
            .ok_or_else(|| syntax(ln, "missing dimension".into()))?
            .parse()
            .map_err(|_| syntax(ln, "invalid dimension".into()))?;
        if head.len() != dim + 2 {
            return Err(syntax(
                ln,
                format!("dimension {dim} needs {} vertices, got {}", dim + 1, head.len() - 1),
            ));
        }
        let verts = head[1..]
            .iter()
            .map(|v| v.parse::<u32>())
            .collect::<std::result::Result<Vec<_>, _>>()
            .map_err(|_| syntax(ln, "invalid vertex id".into()))?;
        let simplex = Simplex::from_unsorted(verts.clone())
            .map_err(|_| syntax(ln, format!("repeated vertex in {verts:?}")))?;

        let tail: Vec<&str> = rhs.split_whitespace().collect();
        let k: usize = tail
            .first()
            .ok_or_else(|| syntax(ln, "missing critical point count".into()))?
            .parse()
            .map_err(|_| syntax(ln, "invalid critical point count".into()))?;
        if k == 0 {
            return Err(Error::EmptyCriticalSet(simplex.0));
        }
        if tail.len() != 2 * k + 1 {
            return Err(syntax(
                ln,
                format!("expected {} coordinates, got {}", 2 * k, tail.len() - 1),
            ));
        }
        let mut crit = Vec::with_capacity(k);
        for pair in tail[1..].chunks(2) {
            let x: f64 = pair[0]
                .parse()
                .map_err(|_| syntax(ln, format!("invalid coordinate `{}`", pair[0])))?;
            let y: f64 = pair[1]
                .parse()
                .map_err(|_| syntax(ln, format!("invalid coordinate `{}`", pair[1])))?;
            if !x.is_finite() || !y.is_finite() {
                return Err(syntax(ln, "coordinates must be finite".into()));
            }
            crit.push(Point2::new(x, y));
        }
        entries.push((simplex, crit));
    }
    if entries.len() != count {
        return Err(syntax(
            last_line,
            format!("expected {count} simplices, found {}", entries.len()),
        ));
    }
    BiFiltration::new(entries)
}

/// A function on simplices with values in the plane, monotone along faces.
#[derive(Debug, Clone, Default)]
pub struct Function2D {
    pub values: Vec<(Simplex, Point2)>,
}

impl Function2D {
    pub fn new(values: Vec<(Simplex, Point2)>) -> Self {
        Function2D { values }
    }

    /// Largest componentwise deviation `max_s |f(s) - g(s)|_inf` over shared simplices.
    pub fn sup_distance(&self, other: &Function2D) -> f64 {
        let theirs: HashMap<&Simplex, &Point2> =
            other.values.iter().map(|(s, p)| (s, p)).collect();
        self.values
            .iter()
            .filter_map(|(s, p)| theirs.get(s).map(|q| (p.x - q.x).abs().max((p.y - q.y).abs())))
            .fold(0.0, f64::max)
    }
}

/// Sublevel-set bi-filtration: every simplex has the single critical point `f(s)`.
pub fn sublevel_bifiltration(f: &Function2D) -> Result<BiFiltration> {
    BiFiltration::new(
        f.values
            .iter()
            .map(|(s, p)| (s.clone(), vec![*p]))
            .collect(),
    )
}

#[cfg(test)]
mod tests {
    use super::*;

    fn s(v: &[u32]) -> Simplex {
        Simplex::new(v.to_vec()).unwrap()
    }

    fn p(x: f64, y: f64) -> Point2 {
        Point2::new(x, y)
    }

    #[test]
    fn parses_single_vertex() {
        let x = BiFiltration::parse_str("multipers-bifiltration v1\n1\n0 0 ; 1 0 0\n").unwrap();
        assert_eq!(x.size(), 1);
        assert_eq!(x.critical(0), &[p(0.0, 0.0)]);
    }

    #[test]
    fn missing_face_is_rejected() {
        let text = "multipers-bifiltration v1\n2\n0 0 ; 1 0 0\n1 0 1 ; 1 1 1\n";
        match BiFiltration::parse_str(text) {
            Err(Error::FaceClosure { missing, .. }) => assert_eq!(missing, vec![1]),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn dominated_points_are_removed() {
        let text = "multipers-bifiltration v1\n1\n0 0 ; 3 0 1 1 0 1 1\n";
        let x = BiFiltration::parse_str(text).unwrap();
        assert_eq!(x.critical(0), &[p(0.0, 1.0), p(1.0, 0.0)]);
        assert_eq!(x.size(), 2);
    }

    #[test]
    fn syntax_errors_report_line_numbers() {
        let text = "multipers-bifiltration v1\n# comment\n2\n0 0 ; 1 0 0\n0 1 ; 1 0 zz\n";
        match BiFiltration::parse_str(text) {
            Err(Error::Syntax { line, .. }) => assert_eq!(line, 5),
            other => panic!("unexpected {other:?}"),
        }
        assert!(matches!(
            BiFiltration::parse_str("wrong header\n0\n"),
            Err(Error::Syntax { line: 1, .. })
        ));
        assert!(matches!(
            BiFiltration::parse_str("multipers-bifiltration v1\n2\n0 0 ; 1 0 0\n"),
            Err(Error::Syntax { .. })
        ));
    }

    #[test]
    fn empty_critical_set_is_rejected() {
        let text = "multipers-bifiltration v1\n1\n0 0 ; 0\n";
        assert!(matches!(
            BiFiltration::parse_str(text),
            Err(Error::EmptyCriticalSet(_))
        ));
    }

    #[test]
    fn monotonicity_violation_is_rejected() {
        let text = "multipers-bifiltration v1\n3\n0 0 ; 1 1 1\n0 1 ; 1 0 0\n1 0 1 ; 1 0.5 2\n";
        assert!(matches!(
            BiFiltration::parse_str(text),
            Err(Error::Monotonicity { .. })
        ));
    }

    #[test]
    fn canonical_order_and_roundtrip() {
        let text = "multipers-bifiltration v1\n3\n1 1 0 ; 1 1 1\n0 1 ; 1 0.5 0\n0 0 ; 2 0 0.25 0.1 0\n";
        let x = BiFiltration::parse_str(text).unwrap();
        assert_eq!(x.simplices(), &[s(&[0]), s(&[1]), s(&[0, 1])]);
        let again = BiFiltration::parse_str(&x.to_text()).unwrap();
        assert_eq!(x, again);
        assert_eq!(x.to_text(), again.to_text());
        assert_eq!(x.fingerprint(), again.fingerprint());
    }

    #[test]
    fn sublevel_examples() {
        let f = Function2D::new(vec![(s(&[0]), p(0.0, 0.0))]);
        let x = sublevel_bifiltration(&f).unwrap();
        assert_eq!(x.num_simplices(), 1);
        assert_eq!(x.critical(0), &[p(0.0, 0.0)]);

        let f = Function2D::new(vec![
            (s(&[0]), p(0.0, 0.0)),
            (s(&[1]), p(1.0, 0.0)),
            (s(&[0, 1]), p(1.0, 1.0)),
        ]);
        let x = sublevel_bifiltration(&f).unwrap();
        for (simplex, value) in &f.values {
            let i = x.index_of(simplex).unwrap();
            assert_eq!(x.critical(i), &[*value]);
        }

        let f = Function2D::new(vec![
            (s(&[0]), p(1.0, 1.0)),
            (s(&[1]), p(0.0, 0.0)),
            (s(&[0, 1]), p(0.0, 0.0)),
        ]);
        assert!(matches!(
            sublevel_bifiltration(&f),
            Err(Error::Monotonicity { .. })
        ));
    }

    #[test]
    fn membership_examples() {
        let x = BiFiltration::new(vec![(s(&[0]), vec![p(1.0, 0.0)])]).unwrap();
        assert!(x.membership(&s(&[0]), p(2.0, 0.0)).unwrap());
        assert!(!x.membership(&s(&[0]), p(0.0, 5.0)).unwrap());

        let x = BiFiltration::new(vec![(s(&[0]), vec![p(2.0, 0.0), p(0.0, 2.0)])]).unwrap();
        assert!(!x.membership(&s(&[0]), p(1.0, 1.0)).unwrap());
        assert!(x.membership(&s(&[0]), p(2.0, 1.0)).unwrap());
        assert!(matches!(
            x.membership(&s(&[7]), p(0.0, 0.0)),
            Err(Error::UnknownSimplex(_))
        ));
    }

    #[test]
    fn direct_sum_relabels() {
        let x = BiFiltration::new(vec![
            (s(&[0]), vec![p(0.0, 0.0)]),
            (s(&[1]), vec![p(0.0, 0.0)]),
            (s(&[0, 1]), vec![p(0.5, 0.5)]),
        ])
        .unwrap();
        let y = x.direct_sum(&x);
        assert_eq!(y.num_simplices(), 6);
        assert_eq!(y.size(), 2 * x.size());
        assert!(y.index_of(&s(&[2, 3])).is_some());
        assert_eq!(x.repeated(3).num_simplices(), 9);
    }

    #[test]
    fn facets_are_indexed() {
        let x = BiFiltration::new(vec![
            (s(&[0]), vec![p(0.0, 0.0)]),
            (s(&[1]), vec![p(0.0, 0.0)]),
            (s(&[2]), vec![p(0.0, 0.0)]),
            (s(&[0, 1]), vec![p(0.0, 0.0)]),
            (s(&[0, 2]), vec![p(0.0, 0.0)]),
            (s(&[1, 2]), vec![p(0.0, 0.0)]),
            (s(&[0, 1, 2]), vec![p(0.0, 0.0)]),
        ])
        .unwrap();
        let tri = x.index_of(&s(&[0, 1, 2])).unwrap();
        let mut f: Vec<u32> = x.facets(tri).to_vec();
        f.sort();
        assert_eq!(f, vec![3, 4, 5]);
        assert!(x.facets(0).is_empty());
    }
}
