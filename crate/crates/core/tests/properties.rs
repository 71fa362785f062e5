use faer::Mat;
use num_complex::Complex64;
use proptest::prelude::*;
use teleqcp::teleport::{
    bob_output, external_closed_form, external_detector, internal_closed_form, internal_detector, joint_input,
    outcome_probability, BellState, CorrectionSet, MIN_OUTCOME_PROBABILITY,
};
use teleqcp::{expectation, gibbs_state, partial_trace, Axis, DensityMatrix, ModelSpec, PauliString};

/// `(G G† + εI) / Tr`, full rank even for the all-zero draw.
fn state_from(entries: &[(f64, f64)], dim: usize) -> DensityMatrix {
    let g = Mat::from_fn(dim, dim, |i, j| {
        let (re, im) = entries[i * dim + j];
        Complex64::new(re, im)
    });
    let mut m = &g * g.adjoint();
    for i in 0..dim {
        m[(i, i)] += Complex64::new(1e-3, 0.0);
    }
    let tr: f64 = (0..dim).map(|i| m[(i, i)].re).sum();
    DensityMatrix::new(Mat::from_fn(dim, dim, |i, j| m[(i, j)] / tr)).expect("Gram matrices are states")
}

fn random_state(qubits: usize) -> impl Strategy<Value = DensityMatrix> {
    let dim = 1usize << qubits;
    prop::collection::vec((-1.0..1.0f64, -1.0..1.0f64), dim * dim).prop_map(move |e| state_from(&e, dim))
}

fn is_state(rho: &DensityMatrix, tol: f64) -> bool {
    let ev = rho.eigenvalues().unwrap();
    (rho.trace() - 1.0).abs() < tol && ev.iter().all(|&l| l > -tol)
}

/// Distinct 1-based sites, in random order.
fn subset(len: usize) -> impl Strategy<Value = Vec<usize>> {
    Just((1..=len).collect::<Vec<_>>()).prop_shuffle().prop_flat_map(move |v| (1..=len).prop_map(move |k| v[..k].to_vec()))
}

fn axis() -> impl Strategy<Value = Option<Axis>> {
    prop_oneof![Just(None), Just(Some(Axis::X)), Just(Some(Axis::Y)), Just(Some(Axis::Z))]
}

fn chain_model() -> impl Strategy<Value = ModelSpec> {
    prop_oneof![
        (-3.0..3.0f64, 0.0..8.0f64, 3usize..=5).prop_map(|(d, h, l)| ModelSpec::xxz(d, h, l).unwrap()),
        (0.0..2.0f64, -1.0..1.0f64, 3usize..=5).prop_map(|(lam, g, l)| ModelSpec::xy(lam, g, l).unwrap()),
    ]
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn partial_traces_compose(rho in random_state(4), keep in subset(4), inner in subset(4)) {
        // Tracing to `keep` and then to a subset of it equals tracing directly.
        let inner: Vec<usize> = inner.into_iter().filter(|s| keep.contains(s)).collect();
        prop_assume!(!inner.is_empty());
        let outer = partial_trace(&rho, &keep, 4).unwrap();
        let positions: Vec<usize> = inner.iter().map(|s| keep.iter().position(|k| k == s).unwrap() + 1).collect();
        let two_step = partial_trace(&outer, &positions, keep.len()).unwrap();
        let direct = partial_trace(&rho, &inner, 4).unwrap();
        prop_assert!(two_step.max_abs_diff(&direct) < 1e-12);
        prop_assert!(is_state(&outer, 1e-10));
    }

    #[test]
    fn pauli_expectations_are_bounded(rho in random_state(3), a in axis(), b in axis(), c in axis()) {
        let factors: Vec<(usize, Axis)> = [a, b, c].iter().enumerate().filter_map(|(j, x)| x.map(|x| (j + 1, x))).collect();
        let p = PauliString::new(3, factors).unwrap();
        prop_assert!(expectation(&rho, &p).unwrap().abs() <= 1.0 + 1e-12);
    }

    #[test]
    fn bell_outcomes_are_a_distribution(rho1 in random_state(1), rho23 in random_state(2)) {
        let rho = joint_input(&rho1, &rho23).unwrap();
        let q: Vec<f64> = BellState::ALL.iter().map(|&b| outcome_probability(&rho, b).unwrap()).collect();
        prop_assert!(q.iter().all(|&x| x >= -1e-14));
        prop_assert!((q.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        for (outcome, &qj) in BellState::ALL.into_iter().zip(&q) {
            for set in CorrectionSet::ALL {
                let out = bob_output(&rho, outcome, set);
                if qj > MIN_OUTCOME_PROBABILITY {
                    prop_assert!(is_state(&out.unwrap(), 1e-9));
                } else {
                    prop_assert!(out.is_err());
                }
            }
        }
    }

    #[test]
    fn detectors_stay_in_range(rho1 in random_state(1), rho23 in random_state(2)) {
        let d = internal_detector(&rho1, &rho23).unwrap().value;
        prop_assert!((0.0..=1.0).contains(&d));
        let f = external_detector(&rho23).unwrap().value;
        prop_assert!((0.5 - 1e-12..=1.0 + 1e-12).contains(&f));
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn closed_forms_match_the_protocol_on_chain_states(model in chain_model(), kt in 0.05..3.0f64) {
        let local = gibbs_state(&model, kt).unwrap().local_states().unwrap();
        let d = internal_detector(&local.site, &local.shifted_pair).unwrap().value;
        let f = external_detector(&local.shifted_pair).unwrap().value;
        prop_assert!((d - internal_closed_form(&local.correlators)).abs() < 1e-9);
        prop_assert!((f - external_closed_form(&local.correlators).value).abs() < 1e-9);
        prop_assert!((0.0..=1.0).contains(&d));
        prop_assert!((0.5..=1.0 + 1e-12).contains(&f));
    }
}
