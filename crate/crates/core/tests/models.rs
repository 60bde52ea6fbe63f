use proptest::prelude::*;
use rand_chacha::ChaCha8Rng;
use rand_core::SeedableRng;
use stoch_ham::model::{gradient_selfcheck, ActionAngleModel, CoupledOscillators, HarmonicOscillator, KickedRotors, ThreeBody};
use stoch_ham::HamiltonianModel;

fn catalog(eps: f64) -> Vec<Box<dyn HamiltonianModel>> {
    vec![
        Box::new(HarmonicOscillator::new(1.0, 1.0).unwrap()),
        Box::new(HarmonicOscillator::new(2.5, 0.4).unwrap()),
        Box::new(CoupledOscillators::new(eps).unwrap()),
        Box::new(ThreeBody::reference().0),
        Box::new(ActionAngleModel::new(KickedRotors::new(3).unwrap(), eps).unwrap()),
    ]
}

/// Second derivatives by central differences of the analytic gradients, as
/// `(d grad_q / dq, d grad_p / dq, d grad_p / dp)` in row-major blocks.
fn fd_hessian(model: &dyn HamiltonianModel, q: &[f64], p: &[f64]) -> (Vec<f64>, Vec<f64>, Vec<f64>) {
    let n = model.dim();
    let scales = model.typical_scales();
    let (mut qq, mut qp, mut pp) = (vec![0.0; n * n], vec![0.0; n * n], vec![0.0; n * n]);
    let (mut up, mut down) = (vec![0.0; n], vec![0.0; n]);
    for b in 0..n {
        let h = 1e-5 * scales.q[b];
        let mut qs = q.to_vec();
        qs[b] = q[b] + h;
        model.grad_q(0.0, &qs, p, &mut up);
        qs[b] = q[b] - h;
        model.grad_q(0.0, &qs, p, &mut down);
        for a in 0..n {
            qq[a * n + b] = (up[a] - down[a]) / (2.0 * h);
        }
        qs[b] = q[b] + h;
        model.grad_p(0.0, &qs, p, &mut up);
        qs[b] = q[b] - h;
        model.grad_p(0.0, &qs, p, &mut down);
        // d(dH/dp_a)/dq_b = d^2H / dq_b dp_a
        for a in 0..n {
            qp[b * n + a] = (up[a] - down[a]) / (2.0 * h);
        }
        let h = 1e-5 * scales.p[b];
        let mut ps = p.to_vec();
        ps[b] = p[b] + h;
        model.grad_p(0.0, q, &ps, &mut up);
        ps[b] = p[b] - h;
        model.grad_p(0.0, q, &ps, &mut down);
        for a in 0..n {
            pp[a * n + b] = (up[a] - down[a]) / (2.0 * h);
        }
    }
    (qq, qp, pp)
}

fn rel_diff(a: &[f64], b: &[f64]) -> f64 {
    let scale = a.iter().chain(b).fold(0.0f64, |m, v| m.max(v.abs())).max(f64::MIN_POSITIVE);
    a.iter().zip(b).fold(0.0f64, |m, (x, y)| m.max((x - y).abs())) / scale
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn hamiltonian_vector_fields_have_vanishing_symplectic_trace(seed in any::<u64>(), eps in 0.0f64..0.5) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for model in catalog(eps) {
            let x = model.sample_state(&mut rng);
            let h = model.hessian(0.0, &x.q, &x.p).expect("catalog models provide Hessians");
            let scale = h.qp.iter().fold(1.0f64, |m, v| m.max(v.abs()));
            prop_assert!(h.symplectic_trace_defect().abs() <= 1e-12 * scale, "{}", model.name());
        }
    }

    #[test]
    fn hessians_match_differences_of_the_gradients(seed in any::<u64>(), eps in 0.0f64..0.5) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for model in catalog(eps) {
            let x = model.sample_state(&mut rng);
            let h = model.hessian(0.0, &x.q, &x.p).unwrap();
            let (qq, qp, pp) = fd_hessian(&*model, &x.q, &x.p);
            let tol = if model.name() == "three_body" { 1e-4 } else { 1e-6 };
            prop_assert!(rel_diff(&h.qq, &qq) <= tol, "{} qq", model.name());
            prop_assert!(rel_diff(&h.qp, &qp) <= tol, "{} qp", model.name());
            prop_assert!(rel_diff(&h.pp, &pp) <= tol, "{} pp", model.name());
        }
    }

    #[test]
    fn harmonic_energy_is_constant_on_the_exact_flow(t in 0.0f64..100.0, m in 0.2f64..5.0, k in 0.2f64..5.0) {
        let model = HarmonicOscillator::new(m, k).unwrap();
        let x = model.exact(50.0, 0.0, t);
        let energy = model.energy(t, &x.q, &x.p);
        prop_assert!((energy - 1250.0 * k).abs() <= 1e-9 * 1250.0 * k);
    }

    #[test]
    fn unperturbed_coupled_oscillators_decouple(q in prop::array::uniform2(-3.0f64..3.0), p in prop::array::uniform2(-3.0f64..3.0)) {
        let h = CoupledOscillators::new(0.0).unwrap().hessian(0.0, &q, &p).unwrap();
        prop_assert_eq!(h.qq[1], 0.0);
        prop_assert_eq!(h.qq[2], 0.0);
        prop_assert_eq!(h.pp[1], 0.0);
        prop_assert_eq!(h.pp[2], 0.0);
    }
}

#[test]
fn analytic_gradients_pass_the_self_check() {
    for (model, tol) in [
        (Box::new(HarmonicOscillator::new(1.0, 1.0).unwrap()) as Box<dyn HamiltonianModel>, 1e-10),
        (Box::new(CoupledOscillators::new(0.1).unwrap()), 1e-6),
        (Box::new(ThreeBody::reference().0), 1e-5),
        (Box::new(ActionAngleModel::new(KickedRotors::new(2).unwrap(), 0.1).unwrap()), 1e-6),
    ] {
        let check = gradient_selfcheck(&*model, 100, 9, tol);
        assert!(check.passed(), "{}: {:e}", model.name(), check.max_rel_error);
    }
}
