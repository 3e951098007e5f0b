use opticenter_core::bench::{corrupt, generate_scene, replicate_rng, scene_rng, ScenarioConfig};
use opticenter_core::formulations::build;
use opticenter_core::solvers::{solve_tls, Method, PrimalDualConfig};
use opticenter_core::{
    DirectionMode, Layout, LineObservation, LossSpec, ObservationSet, Threshold,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn all_methods() -> Vec<Method> {
    let mut methods = vec![
        Method::wls(),
        Method::tls(Layout::Model1),
        Method::tls(Layout::Model2),
    ];
    for layout in [Layout::Model1, Layout::Model2] {
        for loss in [
            LossSpec::Abs,
            LossSpec::BlockNorm,
            LossSpec::HuberComponentwise(Threshold::Auto),
            LossSpec::BlockHuberNorm(Threshold::Fixed(5.0)),
            LossSpec::SquaredBlocks,
        ] {
            methods.push(Method::primal_dual(layout, loss));
        }
    }
    methods
}

fn small_scene(n: usize, seed: u64) -> (ScenarioConfig, ObservationSet) {
    let config = ScenarioConfig {
        n_beads: n,
        seed,
        ..ScenarioConfig::reference()
    };
    let scene = generate_scene(&config, &mut scene_rng(seed)).unwrap();
    (config, scene)
}

#[test]
fn noiseless_bundles_are_solved_exactly_by_every_method() {
    let (config, scene) = small_scene(40, 3);
    let truth = config.true_center;
    for method in all_methods() {
        let s = method
            .solve(&scene, DirectionMode::Unit, &PrimalDualConfig::default())
            .unwrap();
        assert!((s.center - truth).norm() < 1e-6, "{method}: {}", s.center);
    }
}

#[test]
fn weights_do_not_move_an_exact_intersection() {
    let (config, scene) = small_scene(30, 4);
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let reweighted: ObservationSet = scene
        .iter()
        .map(|o| (*o).with_weight(rng.random_range(0.1..10.0)).unwrap())
        .collect();
    for method in all_methods() {
        let s = method
            .solve(
                &reweighted,
                DirectionMode::Unit,
                &PrimalDualConfig::default(),
            )
            .unwrap();
        assert!(
            (s.center - config.true_center).norm() < 1e-6,
            "{method}: {}",
            s.center
        );
    }
}

#[test]
fn permuting_observations_does_not_move_the_center() {
    let (config, scene) = small_scene(30, 5);
    let noisy = corrupt(&scene, &config, &mut replicate_rng(5, 0)).unwrap();
    let mut shuffled: Vec<LineObservation> = noisy.iter().cloned().collect();
    shuffled.reverse();
    shuffled.rotate_left(7);
    let shuffled = ObservationSet::new(shuffled);
    let pd = PrimalDualConfig::default();
    for method in all_methods() {
        let a = method
            .solve(&noisy, DirectionMode::AsMeasured, &pd)
            .unwrap();
        let b = method
            .solve(&shuffled, DirectionMode::AsMeasured, &pd)
            .unwrap();
        let diff = (a.center - b.center).norm();
        assert!(
            diff <= 1e-9 * a.center.coords.norm(),
            "{method}: moved by {diff}"
        );
    }
}

#[test]
fn tls_is_scale_invariant_on_both_models() {
    let (config, scene) = small_scene(50, 6);
    let noisy = corrupt(&scene, &config, &mut replicate_rng(6, 0)).unwrap();
    for layout in [Layout::Model1, Layout::Model2] {
        let system = build(&noisy, layout, DirectionMode::AsMeasured).unwrap();
        let a = solve_tls(&system).unwrap();
        let b = solve_tls(&system.scaled(12.5)).unwrap();
        assert!((a.center - b.center).norm() <= 1e-9 * a.center.coords.norm());
    }
}

#[test]
fn tls_is_exact_to_rounding_on_consistent_bundles() {
    for (n, seed) in [(2, 1), (3, 2), (10, 3), (200, 4)] {
        let (config, scene) = small_scene(n, seed);
        for layout in [Layout::Model1, Layout::Model2] {
            let system = build(&scene, layout, DirectionMode::Unit).unwrap();
            let c = solve_tls(&system).unwrap().center;
            let err = (c - config.true_center).norm() / config.true_center.coords.norm();
            assert!(err < 1e-12, "{n} lines, {layout:?}: relative error {err:e}");
        }
    }
}
