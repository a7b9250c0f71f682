use msmpc_core::geometry::Support;
use msmpc_core::ident::*;
use msmpc_core::linalg::{Mat, Vector};
use msmpc_core::mpc::*;
use msmpc_core::optim::solve_qp;
use msmpc_core::plant::*;

fn model(p: usize, o: usize, theta: Vec<f64>, tau: f64) -> PredictorModel {
    PredictorModel { p, o, theta, lambda: 0.0, eps_hat: 0.0, tau_lower: tau, tau_hat: tau, fps_residual: 0.0 }
}

fn bank(o: usize, models: Vec<PredictorModel>, d_bar: f64) -> PredictorBank {
    PredictorBank { o, p_bar: models.len(), d_bar, alpha: 1.0, gamma: 1.0, models, fingerprint: 0 }
}

/// Exact multi-step predictors of a known one-step model, with given bounds.
fn exact_bank(theta1: &[f64], p_bar: usize, tau: &[f64], d_bar: f64) -> PredictorBank {
    let o = theta1.len() / 2;
    let models = (1..=p_bar).map(|p| model(p, o, iterate_one_step(theta1, p).unwrap(), tau[p - 1])).collect();
    bank(o, models, d_bar)
}

fn scalar_plant(v_bar: f64, d_bar: f64) -> ArxPlant {
    ArxPlant::new(1, vec![0.8, 0.5], v_bar, d_bar).unwrap()
}

fn scalar_controller(np: usize) -> (ArxPlant, TubeController) {
    let plant = scalar_plant(0.01, 0.02);
    let cfg = DataConfig { seed: 21, n_pairs: 300, p_bar: 2, order: 1, hold: 4, levels: vec![-1.0, 0.0, 1.0] };
    let ds = generate_dataset(&plant, &cfg).unwrap();
    let opts = IdentOptions { o: 1, p_bar: 2, d_bar: 0.02, alpha: 1.05, gamma: 1.2 };
    let id = identify(&ds.y, &ds.u, &opts).unwrap();
    let so = SynthOptions::uniform(2, 1.0, 1.0, np, 10.0, 10.0);
    (plant, synth(&id.bank, &so).unwrap())
}

#[test]
fn lift_hand_case_first_order_two_steps() {
    let (a, b0, c, d0, d1) = (0.7, 0.4, 0.45, 0.3, 0.2);
    let bk = bank(1, vec![model(1, 1, vec![a, b0], 0.1), model(2, 1, vec![c, d0, d1], 0.2)], 0.0);
    let l = lift(&bk).unwrap();
    assert_eq!(l.a, Mat::from_element(1, 1, c));
    assert_eq!(l.b, Mat::from_row_slice(1, 2, &[d0, d1]));
    assert_eq!(l.m, Mat::from_row_slice(1, 2, &[0.0, 1.0]));
    assert_eq!(l.c, Mat::from_row_slice(2, 1, &[a, c]));
    assert_eq!(l.d, Mat::from_row_slice(2, 2, &[b0, 0.0, d0, d1]));
}

#[test]
fn lift_of_zero_bank_keeps_only_shift_structure() {
    let (o, pb) = (3, 5);
    let models = (1..=pb).map(|p| model(p, o, vec![0.0; regressor_width(o, p)], 0.0)).collect();
    let l = lift(&bank(o, models, 0.0)).unwrap();
    assert_eq!(l.a, Mat::zeros(5, 5));
    let mut b = Mat::zeros(5, pb);
    b[(3, 4)] = 1.0;
    b[(4, 3)] = 1.0;
    assert_eq!(l.b, b);
    let mut m = Mat::zeros(5, pb);
    m[(0, 4)] = 1.0;
    m[(1, 3)] = 1.0;
    m[(2, 2)] = 1.0;
    assert_eq!(l.m, m);
    assert_eq!(l.c, Mat::zeros(pb, 5));
    assert_eq!(l.d, Mat::zeros(pb, pb));
}

#[test]
fn lift_rejects_short_horizon() {
    let bk = exact_bank(&[0.5, 0.1, 0.2, 1.0], 2, &[0.0; 2], 0.0);
    assert!(matches!(lift(&bk), Err(msmpc_core::Error::Unsupported(_))));
}

#[test]
fn lift_matches_direct_prediction() {
    let bk = exact_bank(&[1.1, -0.3, 0.05, 0.4, -0.2, 0.7], 6, &[0.0; 6], 0.0);
    let l = lift(&bk).unwrap();
    assert!(exact_lift_consistency(&l, &bk, 1, 200).unwrap() <= 1e-12);
    // Equal to the plant's own response when the bank is exact.
    let plant = ArxPlant::new(3, vec![1.1, -0.3, 0.05, 0.4, -0.2, 0.7], 0.0, 0.0).unwrap();
    let u: Vec<f64> = (0..30).map(|k| ((k * 7) % 5) as f64 - 2.0).collect();
    let z0 = vec![0.0; 30];
    let (z, _) = simulate(&plant, &u, &z0, &z0, &[0.0; 3]).unwrap();
    let k = 12;
    let x = Vector::from_column_slice(&[z[k], z[k - 1], z[k - 2], u[k - 1], u[k - 2]]);
    let uu = Vector::from_iterator(6, (0..6).map(|j| u[k + j]));
    let zhat = &l.c * &x + &l.d * &uu;
    for p in 1..=6 {
        assert!((zhat[p - 1] - z[k + p]).abs() < 1e-12);
    }
}

#[test]
fn scalar_pipeline_synthesizes_with_strict_inclusions() {
    let (_, tc) = scalar_controller(3);
    let r = &tc.report;
    assert!(r.rho_closed < 1.0);
    assert!(r.input_margin > 0.0 && r.output_margin > 0.0);
    assert!(r.rpi_slack <= 1e-8);
    assert!(r.lyapunov_residual <= 1e-8 * r.lyapunov_scale);
    assert!(tc.xf.witness().unwrap().is_some());
    for i in 0..2 {
        assert!(tc.u_tight.upper()[i] < 10.0 && tc.z_tight.upper()[i] < tc.z_hat.upper()[i]);
        assert!((tc.w_bar[i] - tc.tau_hat[i] - 0.02).abs() < 1e-15);
    }
}

#[test]
fn zero_disturbance_needs_no_tightening() {
    let bk = exact_bank(&[0.6, 0.3, 0.2, 0.5], 3, &[0.0; 3], 0.0);
    let tc = synth(&bk, &SynthOptions::uniform(3, 10.0, 1.0, 2, 5.0, 5.0)).unwrap();
    let dirs = [Vector::from_column_slice(&[1.0, 0.0, 0.0]), Vector::from_column_slice(&[0.0, -1.0, 1.0])];
    for d in &dirs {
        assert!(tc.e.set.support(d).unwrap().abs() < 1e-12);
    }
    for i in 0..3 {
        assert!((tc.u_tight.upper()[i] - 5.0).abs() < 1e-12);
        assert!((tc.z_tight.upper()[i] - 5.0).abs() < 1e-12);
    }
}

#[test]
fn origin_is_optimal_at_rest() {
    let (_, tc) = scalar_controller(3);
    let mut c = Controller::new(tc).unwrap();
    let s = c.step(&Vector::zeros(1)).unwrap();
    assert!(s.j_star.abs() < 1e-14);
    assert!(s.applied_u.amax() < 1e-12 && s.x_bar.amax() < 1e-12);
}

#[test]
fn single_stage_qp_matches_grid_search() {
    let (_, tc) = scalar_controller(1);
    let c = Controller::new(tc).unwrap();
    let x_now = Vector::from_column_slice(&[1.3]);
    let qp = assemble_qp(&c.ctrl, &c.maps, &x_now, &[]).unwrap();
    // Without tube rows the grid is unbounded in X̄; use the pool, exact for a scalar tube.
    let qp = {
        let full = c.problem(&x_now).unwrap();
        assert_eq!(full.h, qp.h);
        full
    };
    let sol = solve_qp(&qp, 1e-12, None).unwrap();
    let best_at = |lo: &Vector, hi: &Vector, h: f64| -> (f64, Vector) {
        let n: Vec<usize> = (0..3).map(|i| ((hi[i] - lo[i]) / h).round() as usize).collect();
        let mut best = (f64::INFINITY, Vector::zeros(3));
        for i in 0..=n[0] {
            for j in 0..=n[1] {
                for k in 0..=n[2] {
                    let z = Vector::from_column_slice(&[
                        lo[0] + i as f64 * h,
                        lo[1] + j as f64 * h,
                        lo[2] + k as f64 * h,
                    ]);
                    if qp.violation(&z) <= 0.0 {
                        let v = qp.objective(&z);
                        if v < best.0 {
                            best = (v, z);
                        }
                    }
                }
            }
        }
        best
    };
    let coarse = best_at(&Vector::from_column_slice(&[0.0, -3.0, -3.0]), &Vector::from_column_slice(&[2.6, 3.0, 3.0]), 2e-2);
    let span = Vector::from_element(3, 0.04);
    let fine = best_at(&(&coarse.1 - &span), &(&coarse.1 + &span), 1e-3);
    assert!(sol.value <= fine.0 + 1e-12);
    assert!(fine.0 - sol.value <= 1e-3 * (1.0 + sol.value.abs()));
    assert!((fine.1 - &sol.x).amax() <= 5e-3);
}

#[test]
fn terminal_policy_bounds_the_optimal_cost() {
    let (_, tc) = scalar_controller(2);
    let p = tc.p[(0, 0)];
    let mut c = Controller::new(tc).unwrap();
    for x in [0.2, -0.5, 1.0] {
        let xv = Vector::from_column_slice(&[x]);
        if !c.ctrl.xf.contains(&xv, -1e-6) {
            continue;
        }
        let s = c.step(&xv).unwrap();
        assert!(s.j_star <= p * x * x + 1e-9);
    }
}

#[test]
fn noiseless_run_from_rest_stays_at_zero() {
    let (_, tc) = scalar_controller(3);
    let plant = scalar_plant(0.0, 0.0);
    let mut c = Controller::new(tc).unwrap();
    let opts = ClosedLoopOptions { long_steps: 10, excursion: Excursion { level: 0.0, steps: 2 }, ..Default::default() };
    let tr = run_closed_loop(&plant, &mut c, &opts).unwrap();
    assert!(tr.short.iter().all(|r| r.u == 0.0 && r.z == 0.0 && r.y == 0.0));
    assert!(tr.long.iter().all(|r| r.j_star.abs() < 1e-14));
}

#[test]
fn scalar_loop_survives_extreme_noise() {
    // Exact predictors with their true worst-case errors: |a|^p d̄ + v̄ sum_{i<p} |a|^i.
    let plant = scalar_plant(0.01, 0.02);
    let a: f64 = 0.8;
    let tau: Vec<f64> = (1..=2)
        .map(|p| a.powi(p) * plant.d_bar + plant.v_bar * (0..p).map(|i| a.powi(i)).sum::<f64>())
        .collect();
    let bk = exact_bank(&plant.theta_bar, 2, &tau, plant.d_bar);
    let tc = synth(&bk, &SynthOptions::uniform(2, 1.0, 1.0, 3, 10.0, 10.0)).unwrap();
    let mut c = Controller::new(tc).unwrap();
    let opts = ClosedLoopOptions {
        long_steps: 100,
        noise: NoiseMode::Extreme,
        excursion: Excursion { level: 1.0, steps: 5 },
        seed: 4,
        ..Default::default()
    };
    let tr = run_closed_loop(&plant, &mut c, &opts).unwrap();
    let a = tr.audits;
    assert!(a.cost_ok && a.tube_ok && a.candidates_ok && a.input_ok && a.output_ok, "{a:?}");
    assert_eq!(tr.long.len(), 100);
    assert_eq!(tr.short.len(), 5 + 200 + 1);
}

#[test]
fn settling_is_faster_than_open_loop() {
    let (plant, tc) = scalar_controller(3);
    let mut c = Controller::new(tc).unwrap();
    let opts = ClosedLoopOptions { long_steps: 20, excursion: Excursion { level: 1.0, steps: 10 }, ..Default::default() };
    let tr = run_closed_loop(&plant, &mut c, &opts).unwrap();
    let ol = simulate_open_loop(&plant, opts.excursion, opts.seed, opts.noise, 40).unwrap();
    let zc: Vec<f64> = tr.short.iter().map(|r| r.z).collect();
    let zo: Vec<f64> = ol.iter().map(|r| r.z).collect();
    let sc = settling_index(&zc, tr.start, 0.5).unwrap();
    let so = settling_index(&zo, tr.start, 0.5).unwrap();
    assert!(sc <= so);
    assert_eq!(&zc[..tr.start + 1], &zo[..tr.start + 1]);
}
