mod common;

use moe_routing::routing::{
    route_bruteforce, route_eplb, route_metro, route_metro_parallel, route_optimal, search_space, BRUTEFORCE_LIMIT,
};
use moe_routing::{lambda_of, route, validate_assignment, ExpertLoadVector, PlacementMap, RouterKind};
use proptest::prelude::*;
use rand::Rng;

fn assert_sound(kind: RouterKind, loads: &ExpertLoadVector, placement: &PlacementMap) -> u64 {
    let a = route(kind, loads, placement, 11).unwrap();
    let report = validate_assignment(&a, placement, loads, kind.single_replica()).unwrap();
    assert!(report.is_valid(), "{kind}: {report}");
    assert_eq!(a.lambda, lambda_of(&a));
    for i in 0..loads.len() {
        let row: u64 = (0..placement.num_gpus()).map(|g| a.x(i, g)).sum();
        assert_eq!(row, loads[i], "{kind} expert {i}");
        if kind.single_replica() {
            assert!((0..placement.num_gpus()).all(|g| a.x(i, g) == 0 || a.x(i, g) == loads[i]));
        }
    }
    a.lambda
}

#[test]
fn optimal_equals_bruteforce_on_small_instances() {
    for seed in 0..1000 {
        let mut r = common::rng(seed);
        let (loads, placement) = common::small_instance(&mut r, 10, 4, 3);
        let opt = route_optimal(&loads, &placement).unwrap();
        let bf = route_bruteforce(&loads, &placement).unwrap();
        assert_eq!(opt.lambda, bf.lambda, "seed {seed}");
    }
}

#[test]
fn routers_sound_and_ordered_on_random_instances() {
    for seed in 0..400 {
        let mut r = common::rng(1_000 + seed);
        let (loads, placement) = common::small_instance(&mut r, 10, 4, 3);
        let e = assert_sound(RouterKind::Eplb, &loads, &placement);
        let m = assert_sound(RouterKind::Metro, &loads, &placement);
        let p = assert_sound(RouterKind::MetroParallel, &loads, &placement);
        let o = assert_sound(RouterKind::Optimal, &loads, &placement);
        let b = assert_sound(RouterKind::Bruteforce, &loads, &placement);
        assert!(o <= m && m <= e, "seed {seed}: {o} {m} {e}");
        assert!(o <= p);
        assert_eq!(o, b);
    }
}

#[test]
fn routers_sound_and_ordered_on_eplb_placements() {
    for seed in 0..300 {
        let mut r = common::rng(50_000 + seed);
        let (loads, placement, _) = common::eplb_instance(&mut r, 128, 8);
        let e = assert_sound(RouterKind::Eplb, &loads, &placement);
        let m = assert_sound(RouterKind::Metro, &loads, &placement);
        let o = assert_sound(RouterKind::Optimal, &loads, &placement);
        assert_sound(RouterKind::MetroParallel, &loads, &placement);
        assert!(o <= m && m <= e, "seed {seed}: {o} {m} {e}");
    }
}

#[test]
fn parallel_interleavings_stay_near_optimal() {
    // N = 32, G = 4, two or three replicas per expert, sixteen active experts.
    let mut r = common::rng(7);
    let sets: Vec<Vec<usize>> = (0..32)
        .map(|_| {
            let mut gpus: Vec<usize> = (0..4).collect();
            let k = r.gen_range(2..=3);
            rand::seq::SliceRandom::shuffle(gpus.as_mut_slice(), &mut r);
            gpus.truncate(k);
            gpus
        })
        .collect();
    let placement = PlacementMap::from_replica_sets(4, sets).unwrap();
    let mut loads = ExpertLoadVector::zeros(32);
    for i in 0..32 {
        if r.gen_bool(0.5) {
            loads.0[i] = r.gen_range(1..50);
        }
    }
    assert!(search_space(&loads, &placement) <= BRUTEFORCE_LIMIT);
    let bf = route_bruteforce(&loads, &placement).unwrap().lambda;
    let opt = route_optimal(&loads, &placement).unwrap().lambda;
    assert_eq!(bf, opt);
    let mut worst = 0;
    for seed in 0..200 {
        let a = route_metro_parallel(&loads, &placement, seed).unwrap();
        assert!(validate_assignment(&a, &placement, &loads, true).unwrap().is_valid());
        assert!(a.lambda >= opt);
        worst = worst.max(a.lambda);
    }
    assert!(worst <= bf + 2, "worst {worst}, optimum {bf}");
}

#[test]
fn metro_is_deterministic() {
    for seed in 0..50 {
        let mut r = common::rng(90_000 + seed);
        let (loads, placement, _) = common::eplb_instance(&mut r, 64, 8);
        assert_eq!(route_metro(&loads, &placement).unwrap(), route_metro(&loads, &placement).unwrap());
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(256))]

    #[test]
    fn dominance(seed in any::<u64>()) {
        let mut r = common::rng(seed);
        let (loads, placement) = common::small_instance(&mut r, 12, 6, 4);
        let e = route_eplb(&loads, &placement).unwrap().lambda;
        let m = route_metro(&loads, &placement).unwrap().lambda;
        let o = route_optimal(&loads, &placement).unwrap().lambda;
        prop_assert!(o <= m && m <= e);
        prop_assert!(m <= loads.active_experts().len() as u64);
    }

    #[test]
    fn conservation_for_every_router(seed in any::<u64>()) {
        let mut r = common::rng(seed);
        let (loads, placement) = common::small_instance(&mut r, 8, 4, 3);
        for kind in RouterKind::ALL {
            let a = route(kind, &loads, &placement, seed).unwrap();
            let total: u64 = a.tokens_per_gpu().iter().sum();
            prop_assert_eq!(total, loads.total());
        }
    }

    #[test]
    fn eplb_split_is_even(seed in any::<u64>()) {
        let mut r = common::rng(seed);
        let (loads, placement) = common::small_instance(&mut r, 8, 6, 6);
        let a = route_eplb(&loads, &placement).unwrap();
        for i in loads.active_experts() {
            let reps = placement.replicas(i);
            let q = loads[i] / reps.len() as u64;
            let rem = (loads[i] % reps.len() as u64) as usize;
            for (j, &g) in reps.iter().enumerate() {
                prop_assert_eq!(a.x(i, g), q + u64::from(j < rem));
            }
        }
    }
}
