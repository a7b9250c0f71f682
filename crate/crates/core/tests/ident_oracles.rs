use msmpc_core::ident::*;
use msmpc_core::linalg::Vector;
use msmpc_core::plant::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn second_order(v_bar: f64, d_bar: f64) -> ArxPlant {
    ArxPlant::new(2, vec![1.2, -0.5, 0.3, 0.2], v_bar, d_bar).unwrap()
}

fn data(plant: &ArxPlant, seed: u64, n_pairs: usize, p_bar: usize, order: usize, hold: usize) -> Dataset {
    let cfg = DataConfig { seed, n_pairs, p_bar, order, hold, levels: vec![-1.0, 0.0, 1.0] };
    generate_dataset(plant, &cfg).unwrap()
}

#[test]
fn regressor_rows_follow_hand_indices() {
    let y: Vec<f64> = (0..10).map(|k| k as f64).collect();
    let u: Vec<f64> = (0..10).map(|k| 100.0 + k as f64).collect();
    let t = build_regressors(&y, &u, 2, 3, 3).unwrap();
    assert_eq!(t.len(), 6);
    assert_eq!(t.first_k, 1);
    for r in 0..t.len() {
        let k = (r + 1) as f64;
        let expect = [k, k - 1.0, 100.0 + k - 1.0, 100.0 + k, 101.0 + k, 102.0 + k];
        assert_eq!(t.rows.row(r).iter().copied().collect::<Vec<_>>(), expect);
        assert_eq!(t.targets[r], k + 3.0);
    }
}

#[test]
fn one_step_iteration_closed_forms() {
    assert_eq!(iterate_one_step(&[0.5, 2.0], 1).unwrap(), vec![0.5, 2.0]);
    let (a, b) = (0.7, -1.3);
    let t = iterate_one_step(&[a, b], 2).unwrap();
    let expect = [a * a, a * b, b];
    for (x, e) in t.iter().zip(expect) {
        assert!((x - e).abs() < 1e-15);
    }
}

#[test]
fn iterated_one_step_reproduces_plant_simulation() {
    let plant = second_order(0.0, 0.0);
    let ds = data(&plant, 2, 60, 5, 2, 3);
    let theta = plant.padded_theta(2).unwrap();
    for p in 1..=5 {
        let coeffs = iterate_one_step(&theta, p).unwrap();
        let t = build_regressors(&ds.y, &ds.u, 2, p, 5).unwrap();
        let pred = &t.rows * Vector::from_column_slice(&coeffs);
        assert!((pred - &t.targets).amax() < 1e-12);
    }
}

#[test]
fn scalar_iterated_bound_is_geometric() {
    let (a, w1) = (0.6_f64, 0.2);
    let b = iterated_bounds(&[a], w1, 6);
    for (p, v) in b.iter().enumerate() {
        let closed = w1 * (0..=p).map(|s| a.abs().powi(s as i32)).sum::<f64>();
        assert!((v - closed).abs() < 1e-14);
    }
    assert_eq!(iterated_bounds(&[0.3, -0.2], 0.5, 1), vec![0.5]);
}

#[test]
fn noiseless_data_recovers_exact_predictors() {
    let plant = second_order(0.0, 0.0);
    let ds = data(&plant, 3, 150, 3, 2, 2);
    let opts = IdentOptions { o: 2, p_bar: 3, d_bar: 0.0, alpha: 1.0, gamma: 1.0 };
    let id = identify(&ds.y, &ds.u, &opts).unwrap();
    let truth = plant.padded_theta(2).unwrap();
    for fit in &id.fits {
        let m = &fit.model;
        assert!(m.eps_hat <= 1e-6, "p={} eps {}", m.p, m.eps_hat);
        let pred = &fit.table.rows * Vector::from_column_slice(&m.theta);
        assert!((pred - &fit.table.targets).amax() <= 1e-6);
        let it = iterate_one_step(&truth, m.p).unwrap();
        assert!(fit.fps.poly.contains(&Vector::from_column_slice(&it), 1e-6));
    }
}

#[test]
fn min_max_fit_beats_random_feasible_parameters() {
    let plant = second_order(0.01, 0.05);
    let ds = data(&plant, 4, 120, 2, 2, 6);
    let opts = IdentOptions { o: 2, p_bar: 2, d_bar: 0.05, alpha: 1.05, gamma: 1.0 };
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    for p in 1..=2 {
        let fit = identify_horizon(&ds.y, &ds.u, &opts, p).unwrap();
        let star = &fit.model;
        let mut tested = 0;
        while tested < 1000 {
            let theta: Vec<f64> = star
                .theta
                .iter()
                .enumerate()
                .map(|(i, t)| {
                    let span = fit.fps.bounds[i].1 - fit.fps.bounds[i].0;
                    t + rng.random_range(-0.5..0.5) * span
                })
                .collect();
            if !fit.fps.poly.contains(&Vector::from_column_slice(&theta), 0.0) {
                continue;
            }
            tested += 1;
            let tau = worst_case_error(&fit.fps, &fit.supports, &theta, &fit.table).unwrap();
            assert!(star.tau_lower <= tau + 1e-9);
        }
    }
}

#[test]
fn multi_step_bound_never_exceeds_iterated_model_bound() {
    let mut rng = ChaCha8Rng::seed_from_u64(10);
    for trial in 0..4 {
        let plant = loop {
            let r1: f64 = rng.random_range(0.2..0.8);
            let r2: f64 = rng.random_range(-0.6..0.6);
            let theta = vec![r1 + r2, -r1 * r2, rng.random_range(-0.5..0.5), rng.random_range(0.2..1.0)];
            if let Ok(p) = ArxPlant::new(2, theta, 0.01, 0.05) {
                break p;
            }
        };
        let ds = data(&plant, 100 + trial, 150, 4, 2, 5);
        let opts = IdentOptions { o: 2, p_bar: 4, d_bar: 0.05, alpha: 1.05, gamma: 1.2 };
        let id = identify(&ds.y, &ds.u, &opts).unwrap();
        let theta1 = id.bank.model(1).theta.clone();
        let rows = verify_thm1(&id.fits, &theta1, 1e-9).unwrap();
        assert_eq!(rows.len(), 4);
        assert!(rows[0].gap.abs() < 1e-9);
        for r in &rows {
            assert!(r.tau_star <= r.tau_iterated + 1e-9);
        }
    }
}

#[test]
fn fingerprint_tracks_the_data() {
    let plant = second_order(0.01, 0.05);
    let ds = data(&plant, 5, 50, 2, 2, 4);
    let a = dataset_fingerprint(&ds.y, &ds.u, 2, 2);
    let mut y = ds.y.clone();
    y[7] += 1e-9;
    assert_ne!(a, dataset_fingerprint(&y, &ds.u, 2, 2));
    assert_eq!(a, dataset_fingerprint(&ds.y, &ds.u, 2, 2));
}
