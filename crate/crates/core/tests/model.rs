mod support;

use pathroute::model::{
    conv_flops, count_flops, flop_bounds, pathfinder_flops, residual_path_flops, select_action, Model, ModelConfig,
    RouteMode, SelectMode, BYPASS,
};
use pathroute::nn::{Tape, Tensor};
use proptest::prelude::*;
use support::{randomize, rng, set_param, tiny_config, unit_patch};

fn trained_like(cfg: ModelConfig, seed: u64) -> Model {
    let mut m = Model::new(cfg, &mut rng(seed)).unwrap();
    randomize(&mut m, "end.", 0.3, seed + 1);
    randomize(&mut m, "pathfinder.fc2", 1.0, seed + 2);
    m
}

#[test]
fn pathfinder_hand_set_logits() {
    let mut m = Model::new(tiny_config(2, 2), &mut rng(0)).unwrap();
    set_param(&mut m, "pathfinder.fc2.bias", &[0.0, 3f32.ln()]);
    let x = unit_patch(&mut rng(1), 1, 11, 11);
    let (_, actions, trace) = m.restore_patch(&x, RouteMode::Test).unwrap();
    for step in trace.unwrap().steps {
        assert!((step.probs[0] - 0.25).abs() < 1e-6);
        assert!((step.probs[1] - 0.75).abs() < 1e-6);
    }
    assert_eq!(actions, vec![1, 1]);
}

#[test]
fn select_action_examples() {
    let mut r = rng(2);
    assert_eq!(select_action(&[0.25, 0.75], SelectMode::Test, &mut r).unwrap(), 1);
    assert_eq!(select_action(&[0.5, 0.5], SelectMode::Test, &mut r).unwrap(), 0);
    assert!(select_action(&[0.5, 0.6], SelectMode::Test, &mut r).is_err());
    let hits = (0..10_000)
        .filter(|_| select_action(&[0.1, 0.9], SelectMode::Train, &mut r).unwrap() == 1)
        .count();
    assert!((8800..=9200).contains(&hits), "{hits}");
}

#[test]
fn replay_is_bit_exact() {
    let m = trained_like(tiny_config(4, 3), 3);
    let x = unit_patch(&mut rng(4), 1, 14, 12);
    let (sampled, actions, trace) = m.restore_patch(&x, RouteMode::Train(&mut rng(5))).unwrap();
    let (forced, _, none) = m.restore_patch(&x, RouteMode::Forced(&actions)).unwrap();
    assert_eq!(sampled, forced);
    assert!(none.is_none());
    let (replayed, _, scored) = m.restore_patch(&x, RouteMode::Replay(&actions)).unwrap();
    assert_eq!(replayed, sampled);
    assert_eq!(scored.unwrap(), trace.unwrap());
}

#[test]
fn intermediates_and_route_checks() {
    let m = trained_like(tiny_config(3, 2), 6);
    let x = unit_patch(&mut rng(7), 1, 11, 11);
    let mut tape = Tape::new();
    let v = tape.leaf(x.clone());
    let (_, inter) = m.forward_intermediate(&mut tape, v, &[0, 1, 0]).unwrap();
    assert_eq!(inter.len(), 3);
    assert!(m.forward_intermediate(&mut tape, v, &[0, 1]).is_err());
    assert!(m.restore_patch(&x, RouteMode::Forced(&[0, 2, 0])).is_err());
}

#[test]
fn determinism_in_test_mode() {
    let a = trained_like(tiny_config(3, 2), 8);
    let b = trained_like(tiny_config(3, 2), 8);
    let x = unit_patch(&mut rng(9), 1, 11, 11);
    assert_eq!(
        a.restore_patch(&x, RouteMode::Test).unwrap(),
        b.restore_patch(&x, RouteMode::Test).unwrap()
    );
}

#[test]
fn pathfinder_weights_are_shared_across_blocks() {
    let mut m = trained_like(tiny_config(4, 2), 10);
    let x = unit_patch(&mut rng(11), 1, 11, 11);
    let route = [1, 0, 1, 1];
    let before = m.restore_patch(&x, RouteMode::Replay(&route)).unwrap().2.unwrap();
    randomize(&mut m, "pathfinder.fc1", 0.5, 99);
    let after = m.restore_patch(&x, RouteMode::Replay(&route)).unwrap().2.unwrap();
    for (b, a) in before.steps.iter().zip(&after.steps) {
        assert_ne!(b.probs, a.probs);
    }
}

#[test]
fn flops_examples() {
    assert_eq!(conv_flops(3, 32, 32, 63, 63), 73_156_608);
    assert_eq!(2 * 9 * 32 * 32 * 63 * 63, 73_156_608u64);
    let cfg = ModelConfig::denoising();
    let bypass = count_flops(&[BYPASS; 6], &cfg).unwrap();
    let full = count_flops(&[1; 6], &cfg).unwrap();
    assert_eq!(full.total() - bypass.total(), 6 * residual_path_flops(&cfg));
    assert_eq!(residual_path_flops(&cfg), 2 * 73_156_608);
    assert_eq!(flop_bounds(&cfg), (bypass.total(), full.total()));
    let share = (6 * pathfinder_flops(&cfg)) as f64 / full.total() as f64;
    assert!(share < 0.03, "{share}");
}

#[test]
fn forced_bypass_costs_the_minimum() {
    let cfg = tiny_config(3, 2);
    let m = trained_like(cfg.clone(), 12);
    let x = unit_patch(&mut rng(13), 1, 11, 11);
    let (_, actions, _) = m.restore_patch(&x, RouteMode::Forced(&[BYPASS; 3])).unwrap();
    assert_eq!(m.count_flops(&actions).unwrap().total(), flop_bounds(&cfg).0);
}

#[test]
fn zero_end_conv_gives_identity() {
    let m = Model::new(tiny_config(2, 3), &mut rng(14)).unwrap();
    let x = unit_patch(&mut rng(15), 1, 13, 17);
    for route in [[0, 0], [1, 2], [2, 1]] {
        let (out, _, _) = m.restore_patch(&x, RouteMode::Forced(&route)).unwrap();
        assert_eq!(out, x);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn shapes_are_preserved(h in 9usize..20, w in 9usize..20, channels in prop::sample::select(vec![1usize, 3]), seed in 0u64..1000) {
        let cfg = ModelConfig { channels, ..tiny_config(2, 3) };
        let m = trained_like(cfg, seed);
        let x = unit_patch(&mut rng(seed), channels, h, w);
        let (out, actions, trace) = m.restore_patch(&x, RouteMode::Train(&mut rng(seed + 1))).unwrap();
        prop_assert_eq!(out.shape(), x.shape());
        prop_assert_eq!(actions.len(), 2);
        for step in trace.unwrap().steps {
            let total: f32 = step.probs.iter().sum();
            prop_assert!((total - 1.0).abs() < 1e-6);
            prop_assert!(step.probs.iter().all(|p| *p > 0.0));
            prop_assert!((step.probs[step.action].ln() - step.log_prob).abs() < 1e-5);
        }
    }

    #[test]
    fn bypass_route_is_cheapest(route in prop::collection::vec(0usize..4, 5)) {
        let cfg = ModelConfig::mixed();
        let cost = count_flops(&route, &cfg).unwrap().total();
        prop_assert!(cost >= count_flops(&[BYPASS; 5], &cfg).unwrap().total());
        prop_assert!(cost <= flop_bounds(&cfg).1);
    }

    #[test]
    fn flops_grow_with_active_blocks(route in prop::collection::vec(0usize..2, 6), flip in 0usize..6) {
        let cfg = ModelConfig::denoising();
        let mut more = route.clone();
        more[flip] = 1;
        prop_assert!(count_flops(&more, &cfg).unwrap().total() >= count_flops(&route, &cfg).unwrap().total());
    }
}

#[test]
fn tiny_input_is_rejected() {
    let m = Model::new(tiny_config(1, 2), &mut rng(16)).unwrap();
    let x = Tensor::zeros([1, 1, 8, 8]);
    assert!(m.restore_patch(&x, RouteMode::Test).is_err());
}
