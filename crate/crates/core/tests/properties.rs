use nadbound_core::bounds::{cd_integral_series, qgt_integral_series};
use nadbound_core::dynamics::transition_rate;
use nadbound_core::linalg::{identity, pauli, trace};
use nadbound_core::random::{random_density, random_hermitian, random_spline_schedule, random_unitary, rng};
use nadbound_core::scalar::c;
use nadbound_core::{
    bloch_rate, expi_step, fidelity, hamiltonian_at, operator_norm, BoundReport, CsvRow, FrameSeries, Frame64,
    Hamiltonian, Ising64, LandauZener, Matrix64, PropagatorPair, TimeGrid, TwoLevelField,
};
use proptest::prelude::*;

fn config(cases: u32) -> ProptestConfig {
    ProptestConfig {
        cases,
        ..ProptestConfig::default()
    }
}

fn random_frame(seed: u64, d: usize) -> Frame64 {
    let mut r = rng(seed);
    let h = random_hermitian(&mut r, d, 1.0);
    let h_dot = random_hermitian(&mut r, d, 1.0);
    Frame64::from_matrices(0.0, &h, &h_dot, None).unwrap()
}

/// `U diag(E) U†` with a doubly degenerate ground level.
fn degenerate_frame(seed: u64, d: usize) -> Frame64 {
    let mut r = rng(seed);
    let u = random_unitary(&mut r, d);
    let energies: Vec<f64> = (0..d).map(|k| if k < 2 { -1.0 } else { k as f64 }).collect();
    let diag = Matrix64::from_fn(d, d, |i, j| if i == j { c(energies[i], 0.0) } else { c(0.0, 0.0) });
    let h = &u * diag * u.adjoint();
    let h_dot = random_hermitian(&mut r, d, 1.0);
    Frame64::from_matrices(0.0, &h, &h_dot, None).unwrap()
}

fn bloch_hamiltonian(h: &[f64; 3]) -> Matrix64 {
    (pauli::x::<f64>().scale(h[0]) + pauli::y::<f64>().scale(h[1]) + pauli::z::<f64>().scale(h[2])).scale(0.5)
}

proptest! {
    #![proptest_config(config(64))]

    #[test]
    fn operator_norm_is_submultiplicative(seed in any::<u64>(), d in 1usize..7) {
        let mut r = rng(seed);
        let a = random_hermitian(&mut r, d, 1.0) * random_unitary(&mut r, d);
        let b = random_hermitian(&mut r, d, 2.0);
        let ab = operator_norm(&(&a * &b)).unwrap();
        prop_assert!(ab <= operator_norm(&a).unwrap() * operator_norm(&b).unwrap() * (1.0 + 1e-12));
    }

    #[test]
    fn exponentials_compose(seed in any::<u64>(), d in 1usize..7, t1 in -2.0f64..2.0, t2 in -2.0f64..2.0) {
        let a = random_hermitian(&mut rng(seed), d, 1.0);
        let lhs = expi_step(&a, t1).unwrap() * expi_step(&a, t2).unwrap();
        let rhs = expi_step(&a, t1 + t2).unwrap();
        prop_assert!(operator_norm(&(lhs - rhs)).unwrap() < 1e-10);
    }

    #[test]
    fn projectors_resolve_the_identity(seed in any::<u64>(), d in 2usize..9, degenerate in any::<bool>()) {
        let frame = if degenerate { degenerate_frame(seed, d) } else { random_frame(seed, d) };
        let ps = frame.projectors();
        let total = ps.iter().fold(Matrix64::zeros(d, d), |acc, p| acc + p);
        prop_assert!(operator_norm(&(total - identity::<f64>(d))).unwrap() < 1e-10);
        for p in &ps {
            prop_assert!(operator_norm(&(p * p - p)).unwrap() < 1e-10);
            prop_assert!((operator_norm(p).unwrap() - 1.0).abs() < 1e-10);
        }
    }

    #[test]
    fn qgt_norm_equals_cd_norm_on_level(seed in any::<u64>(), d in 2usize..9, degenerate in any::<bool>()) {
        let frame = if degenerate { degenerate_frame(seed, d) } else { random_frame(seed, d) };
        for m in 0..frame.n_levels() {
            let p = frame.projector(m).unwrap();
            let rhs = operator_norm(&(frame.h_cd() * &p)).unwrap();
            prop_assert!((frame.qgt_norm(m).unwrap() - rhs).abs() < 1e-8 * rhs.max(1.0));
            // H_cd has no weight inside a level, so its mean vanishes on any in-level state
            let inner = operator_norm(&(&p * frame.h_cd() * &p)).unwrap();
            prop_assert!(inner < 1e-10 * frame.cd_norm().max(1.0));
        }
    }

    #[test]
    fn qgt_norm_ignores_the_gauge_inside_levels(seed in any::<u64>(), d in 3usize..7) {
        let frame = degenerate_frame(seed, d);
        let mut eig = frame.eig().clone();
        let mix = random_unitary(&mut rng(seed ^ 0x5eed), 2);
        let block = eig.vectors.columns(0, 2) * mix;
        eig.vectors.columns_mut(0, 2).copy_from(&block);
        let h_dot = &frame.eig().vectors * frame.rate_in_eigenbasis() * frame.eig().vectors.adjoint();
        let remixed = Frame64::from_eig(0.0, eig, &h_dot, None).unwrap();
        for m in 0..frame.n_levels() {
            prop_assert!((frame.qgt_norm(m).unwrap() - remixed.qgt_norm(m).unwrap()).abs() < 1e-10);
        }
        prop_assert!(operator_norm(&(frame.h_cd() - remixed.h_cd())).unwrap() < 1e-10);
    }

    #[test]
    fn two_level_cd_lives_off_the_level(seed in any::<u64>()) {
        let frame = random_frame(seed, 2);
        let full = operator_norm(frame.h_cd()).unwrap();
        for m in 0..2 {
            let p = frame.projector(m).unwrap();
            prop_assert!((operator_norm(&(&p * frame.h_cd())).unwrap() - full).abs() < 1e-10);
        }
    }

    #[test]
    fn bloch_rate_matches_frame(h in prop::array::uniform3(-2.0f64..2.0), hd in prop::array::uniform3(-2.0f64..2.0)) {
        let norm = h.iter().map(|x| x * x).sum::<f64>().sqrt();
        prop_assume!(norm > 1e-2);
        let frame = Frame64::from_matrices(0.0, &bloch_hamiltonian(&h), &bloch_hamiltonian(&hd), None).unwrap();
        let rate = bloch_rate(&h, &hd).unwrap();
        prop_assert!((rate - frame.qgt_norm(0).unwrap()).abs() < 1e-10 * rate.max(1.0));
    }

    #[test]
    fn bloch_rate_ignores_field_strength(h in prop::array::uniform3(-2.0f64..2.0), hd in prop::array::uniform3(-2.0f64..2.0), s in 0.1f64..10.0, s_dot in -5.0f64..5.0) {
        prop_assume!(h.iter().map(|x| x * x).sum::<f64>() > 1e-4);
        let scaled = h.map(|x| s * x);
        let scaled_dot: [f64; 3] = std::array::from_fn(|i| s_dot * h[i] + s * hd[i]);
        let a = bloch_rate(&h, &hd).unwrap();
        prop_assert!((a - bloch_rate(&scaled, &scaled_dot).unwrap()).abs() < 1e-8 * a.max(1.0));
    }

    #[test]
    fn fidelity_is_symmetric_and_bounded(seed in any::<u64>(), d in 1usize..6, ra in 1usize..6, rb in 1usize..6) {
        let mut r = rng(seed);
        let a = random_density(&mut r, d, ra.min(d));
        let b = random_density(&mut r, d, rb.min(d));
        let (fab, fba) = (fidelity(&a, &b).unwrap(), fidelity(&b, &a).unwrap());
        prop_assert!((0.0..=1.0).contains(&fab));
        prop_assert!((fab - fba).abs() < 1e-9);
        prop_assert!((fidelity(&a, &a).unwrap() - 1.0).abs() < 1e-7);
    }

    #[test]
    fn built_in_families_are_hermitian(lam in prop::collection::vec(-3.0f64..3.0, 3)) {
        let ising = Ising64::new(3, vec![0.3, -0.2, 0.1]).unwrap();
        let models: [(&dyn Hamiltonian<f64>, usize); 3] = [(&TwoLevelField, 3), (&LandauZener, 2), (&ising, 2)];
        for (model, p) in models {
            let h = model.evaluate(&lam[..p]).unwrap();
            prop_assert!(operator_norm(&(&h - h.adjoint())).unwrap() < 1e-12 * operator_norm(&h).unwrap().max(1.0));
        }
    }

    #[test]
    fn csv_rows_round_trip(rows in prop::collection::vec((0.0f64..10.0, 0usize..4, 0usize..4, 0.0f64..1.0, prop::option::of(0.0f64..5.0), prop::option::of(-1.0f64..1.0)), 1..20)) {
        let report = BoundReport {
            records: rows
                .iter()
                .map(|&(t, n, m, p, b, margin)| nadbound_core::RateRecord {
                    t,
                    n,
                    m,
                    p,
                    qgt_bound: b,
                    universal_bound: b.map(|x| 2.0 * x),
                    remaining_bound: None,
                    universal_remaining: None,
                    margin,
                    warn: if margin.is_some_and(|x| x < 0.0) { "near-crossing;refine".into() } else { String::new() },
                })
                .collect(),
            ..BoundReport::default()
        };
        let mut buf = Vec::new();
        report.write_csv("r0", &mut buf).unwrap();
        let back: Vec<CsvRow> = BoundReport::read_csv(buf.as_slice()).unwrap();
        prop_assert_eq!(back, report.csv_rows("r0"));
    }
}

proptest! {
    #![proptest_config(config(12))]

    #[test]
    fn rates_are_probabilities_and_bounds_nest(seed in any::<u64>(), d in 2usize..5) {
        let mut r = rng(seed);
        let energies: Vec<f64> = (0..d).map(|k| 1.5 * k as f64).collect();
        let model = nadbound_core::ConjugatedSpectrum::new(&energies, random_hermitian(&mut r, d, 1.0)).unwrap();
        let sched = random_spline_schedule(&mut r, &[0.0], 1.0, 4, 2.0);
        let grid = TimeGrid::uniform(2.0, 200).unwrap();
        let frames = FrameSeries::build(&model, &sched, &grid, None).unwrap();
        let pair = PropagatorPair::build(&frames, &model, &sched).unwrap();
        let universal = cd_integral_series(&frames).unwrap();
        for m in 0..d {
            let series = qgt_integral_series(&frames, m).unwrap();
            for k in [0, 50, 200] {
                prop_assert!(series.squared(k) <= universal.squared(k) * (1.0 + 1e-12) + 1e-15);
            }
        }
        for n in 0..d {
            let row: Vec<f64> = (0..d).map(|m| transition_rate(pair.dynamical(200), frames.node(0), frames.node(200), n, m).unwrap()).collect();
            prop_assert!(row.iter().all(|p| (0.0..=1.0).contains(p)));
            prop_assert!((row.iter().sum::<f64>() - 1.0).abs() < 1e-8);
        }
        let h = hamiltonian_at(&model, &sched, 1.0).unwrap();
        prop_assert!(trace(&h).im.abs() < 1e-12);
    }
}
