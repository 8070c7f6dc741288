use mpkernel::kernel::{boxpair_interval, kernel_level, BoxPair};
use mpkernel::{
    bigphi_eval, bottleneck_distance, derive_constants, restrict, BiFiltration, DiagramCache,
    EngineOptions, FeatureParams, PersistenceDiagram, Point2, Simplex, SliceLine,
};
use proptest::prelude::*;

fn diagram() -> impl Strategy<Value = PersistenceDiagram> {
    prop::collection::vec((-1.0f64..2.0, 0.0f64..1.5), 0..6)
        .prop_map(|v| PersistenceDiagram::new(0, v.into_iter().map(|(b, l)| (b, b + l)).collect()))
}

/// Vertices and a path of edges, each edge dominating one critical point of
/// both endpoints.
fn graph() -> impl Strategy<Value = BiFiltration> {
    (2usize..5)
        .prop_flat_map(|nv| {
            (
                prop::collection::vec(prop::collection::vec((0.0f64..0.7, 0.0f64..0.7), 1..3), nv),
                prop::collection::vec((0.0f64..0.3, 0.0f64..0.3), nv - 1),
            )
        })
        .prop_map(|(verts, offsets)| {
            let mut entries: Vec<(Simplex, Vec<Point2>)> = verts
                .iter()
                .enumerate()
                .map(|(v, c)| {
                    (Simplex::vertex(v as u32), c.iter().map(|&(x, y)| Point2::new(x, y)).collect())
                })
                .collect();
            for (i, &(dx, dy)) in offsets.iter().enumerate() {
                let (a, b) = (verts[i][0], verts[i + 1][0]);
                entries.push((
                    Simplex::new(vec![i as u32, i as u32 + 1]).unwrap(),
                    vec![Point2::new(a.0.max(b.0) + dx, a.1.max(b.1) + dy)],
                ));
            }
            BiFiltration::new(entries).unwrap()
        })
}

fn ordered_pair() -> impl Strategy<Value = (Point2, Point2)> {
    (0.0f64..1.0, 0.0f64..1.0, 0.0f64..1.0, 0.0f64..1.0).prop_map(|(a, b, c, d)| {
        (Point2::new(a.min(c), b.min(d)), Point2::new(a.max(c), b.max(d)))
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn bottleneck_is_a_metric(a in diagram(), b in diagram(), c in diagram()) {
        prop_assert_eq!(bottleneck_distance(&a, &a), 0.0);
        let ab = bottleneck_distance(&a, &b);
        prop_assert_eq!(ab, bottleneck_distance(&b, &a));
        let bc = bottleneck_distance(&b, &c);
        prop_assert!(bottleneck_distance(&a, &c) <= ab + bc + 1e-12);
    }

    #[test]
    fn shifting_a_diagram_moves_it_by_the_shift(a in diagram(), delta in -0.5f64..0.5) {
        prop_assert!(bottleneck_distance(&a, &a.shifted(delta)) <= delta.abs() + 1e-12);
    }

    #[test]
    fn slices_respect_faces(x in graph(), angle in 0.05f64..1.52, offset in -0.5f64..0.5) {
        let line = SliceLine::through_point(Point2::new(offset, -offset), angle).unwrap();
        let m = restrict(&x, &line);
        for i in 0..m.len() {
            for &f in m.boundary(i) {
                prop_assert!((f as usize) < i);
                prop_assert!(m.values()[f as usize] <= m.values()[i]);
            }
        }
    }

    #[test]
    fn text_format_round_trips(x in graph()) {
        let y = BiFiltration::parse_str(&x.to_text()).unwrap();
        prop_assert_eq!(x.fingerprint(), y.fingerprint());
        prop_assert_eq!(x.critical_sets(), y.critical_sets());
    }

    #[test]
    fn big_phi_is_bounded_and_additive(x in graph(), y in graph(), (p, q) in ordered_pair()) {
        let params = FeatureParams::default();
        let c = derive_constants(&params);
        let cache = DiagramCache::default();
        let fx = bigphi_eval(&x, p, q, &params, &cache).unwrap();
        let n = x.num_simplices() as f64;
        prop_assert!(fx >= 0.0);
        prop_assert!(fx <= c.v1 * n / std::f64::consts::SQRT_2 + 1e-12);
        let fy = bigphi_eval(&y, p, q, &params, &cache).unwrap();
        let fxy = bigphi_eval(&x.direct_sum(&y), p, q, &params, &cache).unwrap();
        prop_assert!((fxy - fx - fy).abs() <= 1e-12);
    }

    #[test]
    fn refined_box_pairs_agree_with_their_parent(
        x in graph(),
        y in graph(),
        cell in (0u32..4, 0u32..4, 0u32..4, 0u32..4),
    ) {
        let params = FeatureParams::default();
        let cache = DiagramCache::default();
        let bp = BoxPair::new(2, cell.0, cell.1, cell.2, cell.3).unwrap();
        let parent = boxpair_interval(&bp, &x, &y, &params, &cache).unwrap();
        prop_assert!(0.0 <= parent.lo && parent.lo <= parent.hi);
        let (mut lo, mut hi) = (0.0, 0.0);
        for k in 0..16u32 {
            let child = BoxPair::new(
                3,
                2 * cell.0 + (k & 1),
                2 * cell.1 + ((k >> 1) & 1),
                2 * cell.2 + ((k >> 2) & 1),
                2 * cell.3 + ((k >> 3) & 1),
            )
            .unwrap();
            let iv = boxpair_interval(&child, &x, &y, &params, &cache).unwrap();
            lo += iv.lo;
            hi += iv.hi;
        }
        // Both enclose the same integral.
        prop_assert!(lo <= parent.hi * (1.0 + 1e-9) + 1e-15, "{lo} > {parent:?}");
        prop_assert!(parent.lo <= hi * (1.0 + 1e-9) + 1e-15, "{hi} < {parent:?}");
    }
}

#[test]
fn level_enclosures_overlap_across_resolutions() {
    let params = FeatureParams::default();
    let cache = DiagramCache::default();
    let options = EngineOptions { threads: 1, ..EngineOptions::default() };
    let x = BiFiltration::parse_str(
        "multipers-bifiltration v1\n3\n0 0 ; 1 0.1 0.2\n0 1 ; 1 0.2 0.1\n1 0 1 ; 1 0.6 0.7\n",
    )
    .unwrap();
    let levels: Vec<_> = (1..=4)
        .map(|s| kernel_level(&x, &x, s, &params, &cache, &options).unwrap().interval)
        .collect();
    for a in &levels {
        for b in &levels {
            assert!(a.lo <= b.hi && b.lo <= a.hi, "{a:?} vs {b:?}");
        }
    }
}
