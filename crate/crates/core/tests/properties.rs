use approx::assert_abs_diff_eq;
use proptest::prelude::*;

use sentry_core::features::{
    analytic_hostility, attributes, feature_vector, inefficiency_index, suspect_target_distance, Scales, ScorerWeights,
};
use sentry_core::som::Tagger;
use sentry_core::track::{path_length, Sample};
use sentry_core::{
    logistic, roc_auc, Bounds, FeatureConfig, FeatureVector, Frame, LabeledExample, LocationTable, Mlp, ObjectId,
    Position, SomGrid, SomParams, Track, Zone, ZoneEntry, ATTRIBUTES_PER_OBJECT,
};

#[derive(Debug, Clone, Copy)]
struct Rigid {
    theta: f64,
    dx: f64,
    dy: f64,
}

impl Rigid {
    fn apply(self, p: Position) -> Position {
        let (s, c) = self.theta.sin_cos();
        Position::new(c * p.x - s * p.y + self.dx, s * p.x + c * p.y + self.dy)
    }
}

fn rigid() -> impl Strategy<Value = Rigid> {
    (0.0..std::f64::consts::TAU, -1e4..1e4, -1e4..1e4).prop_map(|(theta, dx, dy)| Rigid { theta, dx, dy })
}

fn position(extent: f64) -> impl Strategy<Value = Position> {
    (-extent..extent, -extent..extent).prop_map(|(x, y)| Position::new(x, y))
}

fn track_points(max: usize) -> impl Strategy<Value = Vec<Position>> {
    prop::collection::vec(position(2000.0), 2..max)
}

fn track_of(points: &[Position]) -> Track {
    Track::from_samples(
        ObjectId(1),
        points.iter().enumerate().map(|(i, &p)| (10.0 * i as f64, p)),
    )
    .unwrap()
}

fn entry_at(track: &Track, k: usize) -> ZoneEntry {
    let Sample { t, position } = track.history()[k];
    ZoneEntry {
        object_id: track.object_id(),
        entry_point: position,
        entry_time: t,
    }
}

/// Regular pentagon, counter-clockwise.
fn pentagon(center: Position, r: f64) -> Vec<Position> {
    (0..5)
        .map(|k| {
            let a = std::f64::consts::TAU * k as f64 / 5.0 + 0.3;
            Position::new(center.x + r * a.cos(), center.y + r * a.sin())
        })
        .collect()
}

/// Even-odd ray casting.
fn ray_cast(poly: &[Position], p: Position) -> bool {
    let mut inside = false;
    let n = poly.len();
    for i in 0..n {
        let (a, b) = (poly[i], poly[(i + 1) % n]);
        if (a.y > p.y) != (b.y > p.y) && p.x < (b.x - a.x) * (p.y - a.y) / (b.y - a.y) + a.x {
            inside = !inside;
        }
    }
    inside
}

fn boundary_distance(poly: &[Position], p: Position) -> f64 {
    let n = poly.len();
    (0..n)
        .map(|i| {
            let (a, b) = (poly[i], poly[(i + 1) % n]);
            let ab = b - a;
            let t = ((p.x - a.x) * ab.x + (p.y - a.y) * ab.y) / (ab.x * ab.x + ab.y * ab.y);
            p.distance(a + ab.scale(t.clamp(0.0, 1.0)))
        })
        .fold(f64::INFINITY, f64::min)
}

#[test]
fn convex_pentagon_matches_ray_casting() {
    use rand::{Rng, SeedableRng};
    let poly = pentagon(Position::new(100.0, -50.0), 300.0);
    let zone = Zone::polygon(poly.clone()).unwrap();
    let mut r = rand_xoshiro::Xoshiro256PlusPlus::seed_from_u64(11);
    let mut inside = 0;
    for _ in 0..1000 {
        let p = Position::new(r.random_range(-300.0..500.0), r.random_range(-450.0..350.0));
        if boundary_distance(&poly, p) < 1e-6 {
            continue;
        }
        assert_eq!(zone.contains(p), ray_cast(&poly, p), "{p:?}");
        inside += usize::from(zone.contains(p));
    }
    assert!(inside > 100);
}

proptest! {
    #[test]
    fn contains_is_rigid_invariant(p in position(1000.0), m in rigid(), r in 10.0..800.0) {
        let poly = pentagon(Position::new(0.0, 0.0), r);
        let circle = Zone::circle(Position::new(0.0, 0.0), r).unwrap();
        let moved_circle = Zone::circle(m.apply(Position::new(0.0, 0.0)), r).unwrap();
        prop_assume!((p.distance(Position::new(0.0, 0.0)) - r).abs() > 1e-6);
        prop_assert_eq!(circle.contains(p), moved_circle.contains(m.apply(p)));

        prop_assume!(boundary_distance(&poly, p) > 1e-6);
        let zone = Zone::polygon(poly.clone()).unwrap();
        let moved = Zone::polygon(poly.iter().map(|&v| m.apply(v)).collect()).unwrap();
        prop_assert_eq!(zone.contains(p), moved.contains(m.apply(p)));
    }

    #[test]
    fn path_length_rigid_and_additive(points in track_points(30), m in rigid(), split in 0usize..30) {
        let track = track_of(&points);
        let moved = track_of(&points.iter().map(|&p| m.apply(p)).collect::<Vec<_>>());
        let t0 = track.history()[0].t;
        let whole = path_length(&track, t0).unwrap();
        prop_assert!((whole - path_length(&moved, t0).unwrap()).abs() < 1e-9);

        let k = split % points.len();
        let head = track_of(&points[..=k]);
        let tail = path_length(&track, track.history()[k].t).unwrap();
        assert_abs_diff_eq!(path_length(&head, t0).unwrap() + tail, whole, epsilon = 1e-9);
    }

    #[test]
    fn inefficiency_bounds_and_rigid_invariance(points in track_points(30), m in rigid(), k in 0usize..30, target in position(3000.0)) {
        let track = track_of(&points);
        let moved = track_of(&points.iter().map(|&p| m.apply(p)).collect::<Vec<_>>());
        let k = k % points.len();
        let i = inefficiency_index(&track, &entry_at(&track, k), 100.0);
        prop_assert!((1.0..=100.0).contains(&i));
        let j = inefficiency_index(&moved, &entry_at(&moved, k), 100.0);
        prop_assert!((i - j).abs() < 1e-9);

        let last = track.last().position;
        let d = suspect_target_distance(last, target);
        prop_assert!((d - suspect_target_distance(m.apply(last), m.apply(target))).abs() < 1e-9);
    }

    #[test]
    fn forward_collinear_motion_is_efficient(start in position(1000.0), heading in 0.0..std::f64::consts::TAU,
                                             steps in prop::collection::vec(0.5..50.0f64, 1..20)) {
        let dir = Position::new(heading.cos(), heading.sin());
        let mut points = vec![start];
        let mut s = 0.0;
        for d in steps {
            s += d;
            points.push(start + dir.scale(s));
        }
        let track = track_of(&points);
        assert_abs_diff_eq!(inefficiency_index(&track, &entry_at(&track, 0), 100.0), 1.0, epsilon = 1e-9);
    }

    #[test]
    fn analytic_score_bounded_and_monotone_in_inefficiency(d_t in 0.0..1e5, d_pn in 0.0..1e5, i in 1.0..100.0, di in 0.0..50.0,
                                                           w3 in 0.0..10.0) {
        let w = ScorerWeights { inefficiency: w3, ..ScorerWeights::default() };
        let scales = Scales::for_zone_radius(1500.0);
        let f = FeatureVector { d_t, d_pn, inefficiency: i, speed: 0.0, heading: 0.0, position: Position::new(0.0, 0.0) };
        let p = analytic_hostility(&f, &w, &scales);
        prop_assert!((0.0..=1.0).contains(&p));
        let g = FeatureVector { inefficiency: i + di, ..f };
        prop_assert!(analytic_hostility(&g, &w, &scales) >= p);
    }

    #[test]
    fn bmu_is_lowest_index_argmin_and_rigid_invariant(protos in prop::collection::vec(position(1000.0), 12), p in position(1500.0), m in rigid()) {
        let grid = SomGrid::from_prototypes(4, 3, protos.clone(), 0).unwrap();
        let d: Vec<f64> = protos.iter().map(|q| q.distance(p)).collect();
        let min = d.iter().copied().fold(f64::INFINITY, f64::min);
        let expected = d.iter().position(|&x| x == min).unwrap();
        prop_assert_eq!(grid.bmu(p), expected);

        // skip near-ties, where rounding under the motion may legitimately flip the winner
        let runner_up = d.iter().enumerate().filter(|&(i, _)| i != expected).map(|(_, &x)| x).fold(f64::INFINITY, f64::min);
        prop_assume!(runner_up - min > 1e-6);
        let moved = SomGrid::from_prototypes(4, 3, protos.iter().map(|&q| m.apply(q)).collect(), 0).unwrap();
        prop_assert_eq!(moved.bmu(m.apply(p)), expected);
    }

    #[test]
    fn train_step_contracts_toward_input(protos in prop::collection::vec(position(1000.0), 9), p in position(1000.0), t in 0u64..5000) {
        let mut grid = SomGrid::from_prototypes(3, 3, protos.clone(), t).unwrap();
        grid.train_step(p, &SomParams::default());
        for (before, after) in protos.iter().zip(grid.prototypes()) {
            prop_assert!(after.distance(p) <= before.distance(p) + 1e-9);
        }
    }

    #[test]
    fn association_is_injective_and_deterministic(frames in prop::collection::vec(prop::collection::vec(position(500.0), 0..12), 1..8),
                                                  gate in 1.0..400.0) {
        let grid = SomGrid::lattice(3, 3, &Bounds::new(-500.0, -500.0, 1000.0, 1000.0)).unwrap();
        let mut runs = Vec::new();
        for _ in 0..2 {
            let mut tagger = Tagger::new(gate).unwrap();
            let mut table = LocationTable::default();
            let mut ids = Vec::new();
            for (k, blips) in frames.iter().enumerate() {
                let frame = Frame::new(k as f64, blips.iter().copied()).unwrap();
                let a = tagger.associate(&frame, &table, &grid);
                let mut sorted = a.ids.clone();
                sorted.sort();
                sorted.dedup();
                prop_assert_eq!(sorted.len(), a.ids.len());
                a.apply(&frame, &mut table);
                ids.push(a.ids);
            }
            runs.push(ids);
        }
        prop_assert_eq!(&runs[0], &runs[1]);
    }

    #[test]
    fn attributes_have_fixed_length_and_unit_range(points in prop::collection::vec(position(6000.0), 1..40), entry in prop::option::of(0usize..40)) {
        let bounds = Bounds::new(-5000.0, -5000.0, 10000.0, 10000.0);
        let cfg = FeatureConfig::new(Position::new(0.0, 0.0), 1500.0, bounds);
        let track = track_of(&points);
        let entry = entry.map(|k| entry_at(&track, k % points.len()));
        let f = feature_vector(&track, &cfg, entry.as_ref()).unwrap();
        let a = attributes(&f, &cfg, entry.is_some());
        prop_assert_eq!(a.len(), ATTRIBUTES_PER_OBJECT);
        prop_assert!(a.iter().all(|v| (-1.0..=1.0).contains(v)), "{:?}", a);
    }

    #[test]
    fn logistic_symmetry(x in -1000.0..1000.0f64) {
        prop_assert!((logistic(x) + logistic(-x) - 1.0).abs() <= 1e-12);
    }

    #[test]
    fn forward_outputs_strictly_inside_unit_interval(seed in any::<u64>(), input in prop::collection::vec(-100.0..100.0f64, 5)) {
        let mlp = Mlp::new(5, 4, 3, seed);
        for p in mlp.forward(&input).unwrap() {
            prop_assert!(p > 0.0 && p < 1.0);
        }
    }

    #[test]
    fn masked_slot_gradient_ignores_its_inputs(seed in any::<u64>(), input in prop::collection::vec(-1.0..1.0f64, 4), bump in -5.0..5.0f64) {
        // two slots of two inputs each; slot 1 masked
        let mlp = Mlp::new(4, 3, 2, seed);
        let ex = |input: Vec<f64>| LabeledExample { input, target: vec![1.0, 0.0], mask: vec![true, false] };
        let g = mlp.gradient(&[ex(input.clone())]).unwrap();
        let mut other = input.clone();
        other[2] += bump;
        let h = mlp.gradient(&[ex(other)]).unwrap();
        // the masked output row never receives gradient
        prop_assert!(g.w2[3..].iter().chain(&h.w2[3..]).all(|&v| v == 0.0));
        prop_assert_eq!(g.b2[1], 0.0);
        prop_assert_eq!(h.b2[1], 0.0);
    }

    #[test]
    fn auc_is_invariant_under_monotone_maps(raw in prop::collection::vec((0.0..1.0f64, any::<bool>()), 2..100)) {
        prop_assume!(raw.iter().any(|s| s.1) && raw.iter().any(|s| !s.1));
        let a = roc_auc(&raw).unwrap();
        prop_assert!((0.0..=1.0).contains(&a));
        let mapped: Vec<_> = raw.iter().map(|&(s, l)| (3.0 * s * s * s + 7.0, l)).collect();
        prop_assert!((roc_auc(&mapped).unwrap() - a).abs() < 1e-12);
        let flipped: Vec<_> = raw.iter().map(|&(s, l)| (s, !l)).collect();
        prop_assert!((roc_auc(&flipped).unwrap() - (1.0 - a)).abs() < 1e-12);
    }

    #[test]
    fn frame_text_forms_roundtrip(t in 0.0..1e6f64, blips in prop::collection::vec(position(1e5), 0..10)) {
        let frame = Frame::new(t, blips).unwrap();
        prop_assert_eq!(&Frame::parse_text_line(&frame.to_text_line()).unwrap(), &frame);
        prop_assert_eq!(&Frame::parse_json_line(&frame.to_json_line()).unwrap(), &frame);
    }

    #[test]
    fn checkpoint_roundtrip_is_exact(seed in any::<u64>()) {
        let mlp = Mlp::new(7, 5, 2, seed);
        prop_assert_eq!(Mlp::from_checkpoint(&mlp.to_checkpoint()).unwrap(), mlp);
    }
}

#[test]
fn auc_near_half_for_independent_labels() {
    use rand::{Rng, SeedableRng};
    let mut r = rand_xoshiro::Xoshiro256PlusPlus::seed_from_u64(5);
    let s: Vec<(f64, bool)> = (0..10_000).map(|_| (r.random::<f64>(), r.random_bool(0.5))).collect();
    assert_abs_diff_eq!(roc_auc(&s).unwrap(), 0.5, epsilon = 0.05);
}
