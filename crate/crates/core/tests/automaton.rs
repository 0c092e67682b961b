mod common;

use proptest::prelude::*;
use qdaa::geometry::RectIndex;
use qdaa::model::{builtin, BiochemicalSystem, Constants, Partition};
use qdaa::qdaa::{build_rats, build_reachable, io, memory_stats, Node, Qdaa, RunConfig};
use qdaa::simulate::IntegratorConfig;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn short() -> IntegratorConfig {
    IntegratorConfig {
        t_max: 5.0,
        ..Default::default()
    }
}

fn random_system(seed: u64) -> BiochemicalSystem {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let field = common::random_field(&mut rng, 2);
    let grid = vec![0.0, 1.0, 2.0, 3.0];
    let init = RectIndex::new(vec![rng.gen_range(0..3), rng.gen_range(0..3)]);
    BiochemicalSystem::new(
        "random",
        vec!["x".into(), "y".into()],
        field,
        Partition::new(vec![grid.clone(), grid]).unwrap(),
        vec![init],
    )
    .unwrap()
}

fn check_reachability(q: &Qdaa) {
    let chain = q.chain();
    for &i in &q.initial {
        let r = q.nodes[i].rect().unwrap();
        assert_eq!(chain.first_passage_intensity(r), 1.0);
    }
    for (rect, h) in chain.intensities() {
        assert!(h > 0.0 && h <= 1.0, "{rect}: {h}");
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn random_systems_give_valid_automata(
        seed in any::<u64>(),
        kappa in 1usize..=4,
        sims in 1usize..=6,
        backward in any::<bool>(),
    ) {
        let sys = random_system(seed);
        let cfg = RunConfig { kappa, sims, seed, backward_refine: backward, integrator: short(), ..Default::default() };
        let q = build_reachable(&sys, &cfg).unwrap();
        prop_assert!(q.check_invariants().is_ok());
        prop_assert!(q.max_row_defect() <= 1e-12);
        prop_assert!(q.reachable_rects().is_subset(&build_rats(&sys).reachable));
        check_reachability(&q);
        let back = io::from_text(&io::to_text(&q)).unwrap();
        prop_assert_eq!(back, q);
    }
}

fn in_pool<T: Send>(threads: usize, f: impl FnOnce() -> T + Send) -> T {
    rayon::ThreadPoolBuilder::new().num_threads(threads).build().unwrap().install(f)
}

#[test]
fn worker_count_never_changes_the_automaton() {
    let osc = builtin("oscillatory", &Constants::new()).unwrap();
    let cfg = RunConfig {
        kappa: 4,
        sims: 10,
        seed: 3,
        backward_refine: true,
        ..Default::default()
    };
    let one = in_pool(1, || build_reachable(&osc, &cfg).unwrap());
    let three = in_pool(3, || build_reachable(&osc, &cfg).unwrap());
    assert_eq!(io::to_text(&one), io::to_text(&three));
    let again = in_pool(2, || build_reachable(&osc, &cfg).unwrap());
    assert_eq!(one, again);
}

#[test]
fn seeds_change_estimates_not_validity() {
    let osc = builtin("oscillatory", &Constants::new()).unwrap();
    let rats = build_rats(&osc);
    let mut texts = Vec::new();
    for seed in 0..3 {
        let cfg = RunConfig {
            kappa: 2,
            sims: 5,
            seed,
            ..Default::default()
        };
        let q = build_reachable(&osc, &cfg).unwrap();
        q.check_invariants().unwrap();
        assert!(q.reachable_rects().is_subset(&rats.reachable));
        check_reachability(&q);
        texts.push(io::to_text(&q));
    }
    assert!(texts[0] != texts[1] || texts[1] != texts[2]);
}

#[test]
fn enzyme_stays_inside_rectangular_abstraction() {
    let enz = builtin("enzyme", &Constants::new()).unwrap();
    let rats = build_rats(&enz);
    for backward in [false, true] {
        let cfg = RunConfig {
            kappa: 2,
            sims: 5,
            seed: 1,
            backward_refine: backward,
            integrator: IntegratorConfig {
                t_max: 20.0,
                ..Default::default()
            },
            ..Default::default()
        };
        let q = build_reachable(&enz, &cfg).unwrap();
        q.check_invariants().unwrap();
        let ours = q.reachable_rects();
        assert!(ours.is_subset(&rats.reachable));
        assert!(ours.len() < rats.reachable.len());
    }
}

#[test]
fn zero_field_memory_is_two_states_per_rectangle() {
    let sys = qdaa::model::parse_model(
        "model still\nvar a\nvar b\neq a = 0\neq b = 0\nthresholds a = 0 1 2\nthresholds b = 0 1\ninit a = [0, 2]\ninit b = [0, 1]\n",
    )
    .unwrap();
    let q = build_reachable(&sys, &RunConfig::default()).unwrap();
    let st = memory_stats(&q);
    assert_eq!((st.rects, st.rho), (2, 2.0));
    assert!(q.nodes.iter().all(|n| !matches!(n, Node::Sink)));
    assert_eq!(q.transition_count(), 4);
}
