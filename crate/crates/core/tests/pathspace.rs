use proptest::prelude::*;
use stoch_ham::model::{CoupledOscillators, HarmonicOscillator};
use stoch_ham::mpp::{minimize_om, MppOptions, MppProblem};
use stoch_ham::pathspace::{euler_lagrange_residual, holder_norm, om_functional, HolderConfig};
use stoch_ham::{integrate, DiffusionSchedule, DiscretePath, PhaseState, TimeGrid};

fn path_from(values: &[f64], grid: TimeGrid, dim: usize) -> DiscretePath {
    let w = 2 * dim;
    let data = (0..grid.n_nodes() * w).map(|i| values[i % values.len()] * (1.0 + (i / w) as f64 * 0.01)).collect();
    DiscretePath::from_flat(grid, dim, data).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn action_is_nonnegative_and_splits_into_its_terms(values in prop::collection::vec(-5.0f64..5.0, 4..40), eps in 0.0f64..0.3) {
        let grid = TimeGrid::new(0.0, 0.5, 30).unwrap();
        let model = CoupledOscillators::new(eps).unwrap();
        let sigma = DiffusionSchedule::periodic_coupled(1.0).unwrap();
        let v = om_functional(&path_from(&values, grid, 2), &model, &sigma).unwrap();
        prop_assert!(v.term_q >= 0.0 && v.term_p >= 0.0);
        prop_assert_eq!(v.action, v.term_q + v.term_p);
    }

    #[test]
    fn holder_norm_grows_with_the_exponent(values in prop::collection::vec(-2.0f64..2.0, 2..60), a in 0.01f64..0.24, b in 0.01f64..0.24) {
        let grid = TimeGrid::new(0.0, 1.0, values.len() - 1).unwrap();
        let path = DiscretePath::from_flat(grid, 1, values.iter().flat_map(|&v| [v, -0.5 * v]).collect()).unwrap();
        let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
        let n_lo = holder_norm(&path, &HolderConfig::with_alpha(lo).unwrap()).value;
        let n_hi = holder_norm(&path, &HolderConfig::with_alpha(hi).unwrap()).value;
        prop_assert!(n_lo <= n_hi * (1.0 + 1e-12));
    }

    #[test]
    fn accepted_steps_never_increase_the_action(q0 in -5.0f64..5.0, p0 in -5.0f64..5.0, shift in -2.0f64..2.0) {
        let model = HarmonicOscillator::new(1.0, 1.0).unwrap();
        let sigma = DiffusionSchedule::constant(1, 1.0, 1.0).unwrap();
        let grid = TimeGrid::new(0.0, 1.0, 100).unwrap();
        let x0 = PhaseState { q: vec![q0], p: vec![p0] };
        let init = DiscretePath::from_fn(grid, 1, |t| PhaseState { q: vec![q0 + shift * t], p: vec![p0 - shift * t * t] }).unwrap();
        let options = MppOptions { max_iter: 200, ..MppOptions::default() };
        let problem = MppProblem::new(x0, grid).with_init(init).unwrap().with_options(options);
        let sol = minimize_om(&model, &sigma, &problem).unwrap();
        prop_assert!(sol.action_history.windows(2).all(|w| w[1] <= w[0]));
    }
}

#[test]
fn action_vanishes_exactly_where_hamiltons_equations_hold() {
    let model = HarmonicOscillator::new(1.0, 1.0).unwrap();
    let sigma = DiffusionSchedule::constant(1, 1.0, 1.0).unwrap();
    let grid = TimeGrid::with_step(0.0, 1.0, 1e-3).unwrap();
    let x0 = PhaseState { q: vec![50.0], p: vec![0.0] };
    let flow = integrate::rk4(&model, &x0, &grid).unwrap();
    assert!(euler_lagrange_residual(&flow, &model).unwrap() < 1e-3);
    assert!(om_functional(&flow, &model, &sigma).unwrap().action < 1e-4);

    let bent = DiscretePath::from_fn(grid, 1, |t| {
        let x = model.exact(50.0, 0.0, t);
        PhaseState { q: vec![x.q[0] + 0.1 * t * t], p: x.p }
    })
    .unwrap();
    assert!(euler_lagrange_residual(&bent, &model).unwrap() > 0.1);
    assert!(om_functional(&bent, &model, &sigma).unwrap().action > 1e-3);
}
