mod common;

use proptest::prelude::*;
use qdaa::geometry::{
    kappa_grid_measure, tiles_approximating, tiles_of, Bounds, FacetRef, RectIndex, Side, TileParent, Tiling,
};
use qdaa::model::{builtin, Constants};
use qdaa::simulate::{rk4_step, ExitOutcome, IntegratorConfig, RectSimulator};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const KAPPAS: [usize; 5] = [2, 4, 8, 16, 32];
/// Boxes are drawn on this lattice so that a subgrid of `LATTICE / κ`
/// points per tile axis measures them exactly.
const LATTICE: usize = 64;

fn measure_of(b: &Bounds, boxes: &[Bounds], kappa: usize) -> f64 {
    let (part, rect) = common::single(b);
    let parent = TileParent::Rect(rect);
    let inside = |x: &[f64]| boxes.iter().any(|j| j.contains(x));
    let tiles = tiles_approximating(&part, inside, &parent, kappa, LATTICE / kappa);
    kappa_grid_measure(&part, &tiles, kappa)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn interval_error_within_n_v_over_kappa(seed in any::<u64>(), n in 1usize..=3) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let b = common::random_bounds(&mut rng, n);
        let j = common::lattice_box(&mut rng, &b, LATTICE);
        for k in KAPPAS {
            let err = (measure_of(&b, std::slice::from_ref(&j), k) - j.volume()).abs();
            prop_assert!(err <= n as f64 * b.volume() / k as f64 + 1e-12, "kappa {k}: error {err}");
        }
    }

    #[test]
    fn disjoint_union_measure_at_most_doubled(seed in any::<u64>(), n in 1usize..=3, k in prop::sample::select(vec![1usize, 2, 4])) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let b = common::random_bounds(&mut rng, n);
        let boxes: Vec<Bounds> = (0..k)
            .map(|s| {
                let mut slab = b.clone();
                slab.lo[0] = b.lo[0] + b.side(0) * s as f64 / k as f64;
                slab.hi[0] = b.lo[0] + b.side(0) * (s + 1) as f64 / k as f64;
                common::lattice_box(&mut rng, &slab, LATTICE / k)
            })
            .collect();
        let r: f64 = boxes.iter().map(Bounds::volume).sum();
        for kappa in KAPPAS {
            prop_assert!(measure_of(&b, &boxes, kappa) <= 2.0 * r + 1e-12);
        }
    }

    #[test]
    fn tiles_partition_their_parent(seed in any::<u64>(), n in 1usize..=4, kappa in 1usize..=6) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let b = common::random_bounds(&mut rng, n);
        let (part, rect) = common::single(&b);
        let mut parents = vec![TileParent::Rect(rect.clone())];
        parents.extend((0..n).map(|a| TileParent::Facet(FacetRef::new(rect.clone(), a, Side::Upper))));
        for parent in parents {
            let tiles = tiles_of(&part, &parent, kappa);
            let tiling = Tiling::for_parent(&part, &parent, kappa);
            let total = kappa_grid_measure(&part, &tiles, kappa);
            prop_assert!((total - tiling.parent_measure()).abs() <= 1e-12 * tiling.parent_measure());
        }
    }

    #[test]
    fn sampled_points_locate_to_their_tile(seed in any::<u64>(), n in 1usize..=3, kappa in 1usize..=8) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let b = common::random_bounds(&mut rng, n);
        let t = Tiling::of_box(b.clone(), kappa);
        let l = rng.gen_range(0..t.count());
        let x = t.sample(l, &mut rng);
        prop_assert!(b.contains(&x));
        prop_assert_eq!(t.locate(&x), l);
    }

    #[test]
    fn exit_points_lie_on_the_exit_facet(seed in any::<u64>(), n in 2usize..=3) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let field = common::random_field(&mut rng, n);
        let b = common::random_bounds(&mut rng, n);
        let (part, rect) = common::single(&b);
        let x: Vec<f64> = (0..n).map(|i| rng.gen_range(b.lo[i]..b.hi[i])).collect();
        let cfg = IntegratorConfig { t_max: 20.0, ..Default::default() };
        let mut sim = RectSimulator::new(&field, &part, &rect, cfg);
        if let Ok(ExitOutcome::Exited { facet, point, time }) = sim.run(&x) {
            let plane = if facet.side == Side::Lower { b.lo[facet.axis] } else { b.hi[facet.axis] };
            prop_assert!((point[facet.axis] - plane).abs() <= cfg.boundary_tol * (plane.abs() + 1.0));
            prop_assert!(b.contains(&point));
            prop_assert!(time > 0.0 && time <= cfg.t_max + sim.step());
            prop_assert!(facet.side.sign() * field.component(facet.axis, &point) > 0.0);
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn enzyme_conserves_totals(seed in any::<u64>()) {
        let enz = builtin("enzyme", &Constants::new()).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut x: Vec<f64> = (0..4).map(|_| rng.gen_range(0.01..100.0)).collect();
        let c0 = common::enzyme_invariants(&x);
        for _ in 0..50_000 {
            x = rk4_step(enz.field(), &x, 1e-3).unwrap();
            let c = common::enzyme_invariants(&x);
            for i in 0..2 {
                prop_assert!((c[i] - c0[i]).abs() <= 1e-6 * c0[i]);
            }
        }
    }
}

#[test]
fn reverse_flow_round_trip() {
    let mut rng = ChaCha8Rng::seed_from_u64(99);
    let rt = common::round_trips(&mut rng, 100);
    assert!(rt.passed >= 99, "{}/{}: {:?}", rt.passed, rt.cases, rt.failures);
    assert!(rt.worst_time_rel <= 1e-6, "exit times differ by {}", rt.worst_time_rel);
}

#[test]
fn measure_error_shrinks_with_kappa() {
    let unit = Bounds::new(vec![0.0, 0.0], vec![1.0, 1.0]);
    let unions = [
        vec![Bounds::new(vec![0.1, 0.13], vec![0.37, 0.71])],
        vec![
            Bounds::new(vec![0.05, 0.05], vec![0.3, 0.3]),
            Bounds::new(vec![0.42, 0.2], vec![0.93, 0.61]),
        ],
        vec![
            Bounds::new(vec![0.0, 0.6], vec![0.21, 0.97]),
            Bounds::new(vec![0.33, 0.0], vec![0.39, 0.55]),
            Bounds::new(vec![0.6, 0.31], vec![0.88, 0.45]),
        ],
    ];
    for xs in unions {
        let r: f64 = xs.iter().map(Bounds::volume).sum();
        let errs: Vec<f64> = (1..=7)
            .map(|p| {
                let t = Tiling::of_box(unit.clone(), 1 << p);
                (t.measure(t.approximate_by_fraction(|tile| common::covered_fraction(tile, &xs))) - r).abs()
            })
            .collect();
        assert!(errs[6] < errs[0] / 4.0, "{errs:?}");
    }
}

#[test]
fn facet_tile_measure_is_n_minus_one_dimensional() {
    let part = qdaa::model::Partition::new(vec![vec![0.0, 2.0], vec![0.0, 3.0], vec![0.0, 5.0]]).unwrap();
    let f = FacetRef::new(RectIndex::new(vec![0, 0, 0]), 1, Side::Lower);
    let tiles = tiles_of(&part, &TileParent::Facet(f), 4);
    assert_eq!(tiles.len(), 16);
    assert!((kappa_grid_measure(&part, &tiles, 4) - 10.0).abs() < 1e-12);
}
