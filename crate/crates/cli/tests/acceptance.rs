//! Acceptance run: one PASS/FAIL line per criterion on the reference experiment.
//! Exits nonzero when any criterion fails.

use std::time::{Duration, Instant};

use msmpc::harness::{self, EndToEnd};
use msmpc::ExperimentConfig;
use msmpc_core::geometry::{linear_map, minkowski_sum, pontryagin_diff_box, rpi_slack, Hyperbox, Support, Zonotope};
use msmpc_core::ident::{build_regressors, identify, iterate_one_step, IdentOptions};
use msmpc_core::linalg::{norm2, Mat, Vector};
use msmpc_core::mpc::{synth, TubeController};
use msmpc_core::optim::{solve_lp, solve_qp, LpProblem, LpStatus, QpProblem};
use msmpc_core::plant::{discretize_zoh, generate_dataset, ArxPlant, DataConfig};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

struct Outcome {
    pass: bool,
    summary: String,
}

fn outcome(pass: bool, summary: impl Into<String>) -> Outcome {
    Outcome { pass, summary: summary.into() }
}

// ---------------------------------------------------------------- shared setup

struct Reference {
    cfg: ExperimentConfig,
    run: EndToEnd,
    _dir: tempfile::TempDir,
}

fn reference() -> Reference {
    let dir = tempfile::tempdir().expect("temp dir");
    let mut cfg = ExperimentConfig::default();
    cfg.output_dir = dir.path().to_path_buf();
    // The campaign is timed separately under criterion 4.
    cfg.monte_carlo.runs = 0;
    let run = harness::end_to_end(&cfg).expect("reference pipeline runs");
    Reference { cfg, run, _dir: dir }
}

// ---------------------------------------------------------------- criterion 1

fn random_plant(rng: &mut ChaCha8Rng) -> ArxPlant {
    loop {
        let n = rng.random_range(1..=3);
        // Characteristic polynomial from random stable poles.
        let mut poly = vec![1.0];
        let mut left = n;
        while left > 0 {
            let factor = if left >= 2 && rng.random_bool(0.5) {
                let r: f64 = rng.random_range(0.3..0.9);
                let w: f64 = rng.random_range(0.2..2.5);
                left -= 2;
                vec![1.0, -2.0 * r * w.cos(), r * r]
            } else {
                left -= 1;
                vec![1.0, -rng.random_range(-0.9..0.9)]
            };
            let mut next = vec![0.0; poly.len() + factor.len() - 1];
            for (i, a) in poly.iter().enumerate() {
                for (j, b) in factor.iter().enumerate() {
                    next[i + j] += a * b;
                }
            }
            poly = next;
        }
        let mut theta: Vec<f64> = poly[1..].iter().map(|c| -c).collect();
        for _ in 1..n {
            theta.push(rng.random_range(-0.5..0.5));
        }
        theta.push(rng.random_range(0.2..1.0) * if rng.random_bool(0.5) { 1.0 } else { -1.0 });
        if let Ok(p) = ArxPlant::new(n, theta, 0.01, 0.05) {
            return p;
        }
    }
}

fn thm1_instance(y: &[f64], u: &[f64], opts: &IdentOptions) -> Result<(f64, Duration), String> {
    let t0 = Instant::now();
    let id = identify(y, u, opts).map_err(|e| e.to_string())?;
    let rows = harness::thm1_stage(&id).map_err(|e| e.to_string())?;
    let worst = rows.iter().map(|r| r.tau_star - r.tau_iterated).fold(f64::NEG_INFINITY, f64::max);
    Ok((worst, t0.elapsed()))
}

fn criterion_1(r: &Reference) -> Outcome {
    let tol = 1e-9;
    let limit = Duration::from_secs(120);
    let mut worst_gap = f64::NEG_INFINITY;
    let mut slowest = Duration::ZERO;
    let mut failures = Vec::new();
    let ds = &r.run.dataset;
    match thm1_instance(&ds.y, &ds.u, &r.cfg.ident_options()) {
        Ok((gap, t)) => {
            worst_gap = worst_gap.max(gap);
            slowest = slowest.max(t);
        }
        Err(e) => failures.push(format!("reference: {e}")),
    }
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    for i in 0..20 {
        let plant = random_plant(&mut rng);
        let hold = rng.random_range(1..=10);
        let cfg = DataConfig { seed: 500 + i, n_pairs: 1000, p_bar: 10, order: plant.n, hold, levels: vec![-1.0, 0.0, 1.0] };
        let ds = generate_dataset(&plant, &cfg).expect("random plant data");
        let opts = IdentOptions { o: plant.n, p_bar: 10, d_bar: plant.d_bar, alpha: 1.05, gamma: 1.2 };
        match thm1_instance(&ds.y, &ds.u, &opts) {
            Ok((gap, t)) => {
                worst_gap = worst_gap.max(gap);
                slowest = slowest.max(t);
            }
            Err(e) => failures.push(format!("plant {i}: {e}")),
        }
    }
    let pass = failures.is_empty() && worst_gap <= tol && slowest < limit;
    let mut s = format!(
        "21 instances, max tau_star - tau_iterated = {worst_gap:.3e} (tol {tol:e}), slowest {:.1}s (limit 120s)",
        slowest.as_secs_f64()
    );
    if !failures.is_empty() {
        s += &format!("; errors: {}", failures.join(", "));
    }
    outcome(pass, s)
}

// ---------------------------------------------------------------- criteria 2, 3, 9, 10

fn criterion_2(r: &Reference) -> Outcome {
    let (multi, iterated) = harness::compare_bounds(&r.run.identification.bank);
    let shape = harness::bounds_shape(&multi, &iterated);
    let gaps: Vec<String> = iterated.iter().zip(&multi).skip(4).map(|(i, m)| format!("{:.3}", i - m)).collect();
    outcome(
        shape.dominates && shape.gap_increasing,
        format!(
            "min gap over p>=3 = {:.4}, gaps p=5..10 = [{}], increasing = {}",
            shape.min_gap_from_p3,
            gaps.join(", "),
            shape.gap_increasing
        ),
    )
}

fn criterion_3(r: &Reference, extra: &[TubeController]) -> Outcome {
    let rep = &r.run.controller.report;
    let all_stable = extra.iter().chain([&r.run.controller]).all(|c| c.report.rho_closed < 1.0);
    let pass = all_stable && (0.1..=0.6).contains(&rep.rho_closed) && rep.rho_closed < rep.rho_one_step;
    outcome(
        pass,
        format!(
            "rho = {:.4}, norm = {:.4}, one-step rho = {:.4}, rho < 1 for all {} controllers = {all_stable}",
            rep.rho_closed,
            rep.norm_closed,
            rep.rho_one_step,
            extra.len() + 1
        ),
    )
}

fn criterion_9(r: &Reference) -> Outcome {
    let v = &r.run.report.validation;
    let violations: usize = v.iter().map(|l| l.violations).sum();
    let samples: usize = v.iter().map(|l| l.samples).sum();
    let tightest = v
        .iter()
        .map(|l| (l.p, l.max_error / l.tau_hat))
        .fold((0, 0.0), |a, b| if b.1 > a.1 { b } else { a });
    outcome(
        violations == 0,
        format!(
            "{violations} of {samples} samples outside tau_hat (validation seed {}), largest error/tau_hat = {:.3} at p = {}",
            r.cfg.validation.seed, tightest.1, tightest.0
        ),
    )
}

fn criterion_10(r: &Reference) -> Outcome {
    let s = &r.run.simulation.settling;
    let show = |v: Option<usize>| v.map_or("never".to_string(), |k| k.to_string());
    outcome(
        s.ok,
        format!(
            "settling to |z| < {}: closed loop {} short steps, open loop {} short steps",
            r.cfg.sim.settle_band,
            show(s.closed_loop),
            show(s.open_loop)
        ),
    )
}

// ---------------------------------------------------------------- criterion 4

fn criterion_4(r: &Reference) -> Outcome {
    let mut cfg = r.cfg.clone();
    cfg.monte_carlo.runs = 20;
    cfg.sim.long_steps = 30;
    let t0 = Instant::now();
    let mc = match harness::monte_carlo(&cfg, &r.run.plant, &r.run.controller, None) {
        Ok(mc) => mc,
        Err(e) => return outcome(false, format!("campaign failed: {e}")),
    };
    let elapsed = t0.elapsed();
    let audits: Vec<_> = mc.per_run.iter().filter_map(|run| run.audits.as_ref()).collect();
    let infeasible = mc.runs - audits.len();
    let boxes = audits.iter().all(|a| a.input_ok && a.output_ok);
    let cost = audits.iter().all(|a| a.cost_ok);
    let tube = audits.iter().all(|a| a.tube_ok && a.candidates_ok);
    let pass = infeasible == 0 && boxes && cost && tube && elapsed < Duration::from_secs(300);
    outcome(
        pass,
        format!(
            "{} runs: {infeasible} infeasible, max|u| = {:.3}, max|z| = {:.3}, max cost slack = {:.2e}, \
             max tube violation = {:.2e}, {:.1}s (limit 300s)",
            mc.runs,
            mc.max_abs_u,
            mc.max_abs_z,
            mc.max_cost_slack,
            mc.max_tube_violation,
            elapsed.as_secs_f64()
        ),
    )
}

// ---------------------------------------------------------------- criteria 5 and 6

fn unit_directions(n: usize, random: usize, seed: u64) -> Vec<Vector> {
    let mut dirs = Vec::new();
    for i in 0..n {
        for s in [1.0, -1.0] {
            let mut e = Vector::zeros(n);
            e[i] = s;
            dirs.push(e);
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    while dirs.len() < 2 * n + random {
        let d = Vector::from_fn(n, |_, _| rng.random_range(-1.0..1.0));
        if d.norm() > 1e-6 {
            dirs.push(d.normalize());
        }
    }
    dirs
}

fn criterion_5(all: &[&TubeController]) -> Outcome {
    let mut worst = f64::NEG_INFINITY;
    for c in all {
        let f = c.closed_loop();
        let w = Hyperbox::symmetric(&c.w_bar).expect("disturbance box");
        let dirs = unit_directions(f.nrows(), 100, 77);
        worst = worst.max(rpi_slack(&f, &c.lifted.m, &w, &c.e.set, &dirs).expect("support evaluation"));
    }
    outcome(
        worst <= 1e-8,
        format!("{} controllers, worst support slack of F.E + M.W against E = {worst:.3e} (tol 1e-8)", all.len()),
    )
}

fn criterion_6(all: &[&TubeController]) -> Outcome {
    let mut worst_ratio: f64 = 0.0;
    let mut worst_res: f64 = 0.0;
    for c in all {
        let f = c.closed_loop();
        let g = c.g_bar();
        let q = Mat::from_diagonal(&Vector::from_column_slice(&c.q));
        let r = Mat::from_diagonal(&Vector::from_column_slice(&c.r));
        let s = g.transpose() * &q * &g + c.k.transpose() * &r * &c.k;
        let res = norm2(&(f.transpose() * &c.p * &f - &c.p + &s));
        let bound = 1e-8 * (1.0 + norm2(&s));
        worst_res = worst_res.max(res);
        worst_ratio = worst_ratio.max(res / bound);
    }
    outcome(
        worst_ratio <= 1.0,
        format!(
            "{} controllers, worst residual {worst_res:.3e}, worst residual / bound = {worst_ratio:.3e}",
            all.len()
        ),
    )
}

// ---------------------------------------------------------------- criterion 7

fn criterion_7() -> Outcome {
    let plant = discretize_zoh(&[160.0], &[1.0, 11.6, 32.0, 160.0], 0.1).expect("reference plant");
    let (o, p_bar) = (plant.n, 10);
    let data = |seed| {
        let cfg = DataConfig { seed, n_pairs: 500, p_bar, order: o, hold: 2, levels: vec![-1.0, 0.0, 1.0] };
        generate_dataset(&plant, &cfg).expect("noiseless data")
    };
    let (ds, fresh) = (data(31), data(32));
    let opts = IdentOptions { o, p_bar, d_bar: 0.0, alpha: 1.0, gamma: 1.0 };
    let id = match identify(&ds.y, &ds.u, &opts) {
        Ok(id) => id,
        Err(e) => return outcome(false, format!("identification failed: {e}")),
    };
    let truth = plant.padded_theta(o).expect("padded parameters");
    let (mut eps, mut pred_err, mut fps_excess) = (0.0f64, 0.0f64, f64::NEG_INFINITY);
    for fit in &id.fits {
        let m = &fit.model;
        eps = eps.max(m.eps_hat);
        let theta = Vector::from_column_slice(&m.theta);
        let t = build_regressors(&fresh.y, &fresh.u, o, m.p, p_bar).expect("fresh regressors");
        let pred = &t.rows * &theta;
        for r in 0..t.len() {
            pred_err = pred_err.max((pred[r] - fresh.z[t.first_k + r + m.p]).abs());
        }
        let it = Vector::from_column_slice(&iterate_one_step(&truth, m.p).expect("iterated parameters"));
        fps_excess = fps_excess.max((&fit.fps.poly.a * it - &fit.fps.poly.b).max());
    }
    let pass = eps <= 1e-6 && pred_err <= 1e-6 && fps_excess <= 1e-6;
    outcome(
        pass,
        format!(
            "max eps_hat = {eps:.2e}, max error against the true response on fresh data = {pred_err:.2e}, \
             true iterated parameters exceed the FPS by {fps_excess:.2e} (all tol 1e-6)"
        ),
    )
}

// ---------------------------------------------------------------- criterion 8

fn subsets(m: usize, k: usize) -> Vec<Vec<usize>> {
    fn rec(start: usize, m: usize, k: usize, cur: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
        if cur.len() == k {
            out.push(cur.clone());
            return;
        }
        for i in start..m {
            cur.push(i);
            rec(i + 1, m, k, cur, out);
            cur.pop();
        }
    }
    let mut out = Vec::new();
    rec(0, m, k, &mut Vec::new(), &mut out);
    out
}

fn rows(a: &Mat, idx: &[usize]) -> Mat {
    Mat::from_fn(idx.len(), a.ncols(), |i, j| a[(idx[i], j)])
}

fn lp_vertex_oracle(c: &Vector, a: &Mat, b: &Vector) -> Option<f64> {
    let n = c.len();
    let mut best: Option<f64> = None;
    for s in subsets(a.nrows(), n) {
        let ab = rows(a, &s);
        if ab.clone().svd(false, false).singular_values.min() < 1e-9 {
            continue;
        }
        let bb = Vector::from_iterator(n, s.iter().map(|&i| b[i]));
        let x = ab.lu().solve(&bb).expect("nonsingular vertex system");
        if (a * &x - b).max() <= 1e-9 {
            let v = c.dot(&x);
            best = Some(best.map_or(v, |b: f64| b.min(v)));
        }
    }
    best
}

fn qp_active_set_oracle(p: &QpProblem) -> f64 {
    let n = p.dim();
    let mut best = f64::INFINITY;
    for k in 0..=n.min(p.b.len()) {
        for s in subsets(p.b.len(), k) {
            let aw = rows(&p.a, &s);
            let mut kkt = Mat::zeros(n + k, n + k);
            kkt.view_mut((0, 0), (n, n)).copy_from(&p.h);
            kkt.view_mut((n, 0), (k, n)).copy_from(&aw);
            kkt.view_mut((0, n), (n, k)).copy_from(&aw.transpose());
            let mut rhs = Vector::zeros(n + k);
            rhs.rows_mut(0, n).copy_from(&(-&p.f));
            for (r, &i) in s.iter().enumerate() {
                rhs[n + r] = p.b[i];
            }
            if let Some(sol) = kkt.lu().solve(&rhs) {
                let x = sol.rows(0, n).into_owned();
                if p.violation(&x) <= 1e-10 {
                    best = best.min(p.objective(&x));
                }
            }
        }
    }
    best
}

fn zonotope_vertices_2d(z: &Zonotope) -> Vec<Vector> {
    let g = z.num_generators();
    (0..1u32 << g)
        .map(|mask| {
            let mut v = z.center.clone();
            for j in 0..g {
                let s = if mask >> j & 1 == 1 { 1.0 } else { -1.0 };
                v += z.generators.column(j) * s;
            }
            v
        })
        .collect()
}

fn criterion_8() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(808);
    let mut lp_worst: f64 = 0.0;
    let mut lp_status_ok = true;
    let mut lp_optimal = 0;
    for _ in 0..50 {
        let a = Mat::from_fn(12, 5, |_, _| rng.random_range(-1.0..1.0));
        let x0 = Vector::from_fn(5, |_, _| rng.random_range(-1.0..1.0));
        let b = &a * x0 + Vector::from_fn(12, |_, _| rng.random_range(0.0..1.0));
        let y = Vector::from_fn(12, |_, _| rng.random_range(0.0..1.0));
        let c = -(a.transpose() * y);
        let sol = solve_lp(&LpProblem::new(c.clone(), a.clone(), b.clone()).expect("lp"), 1e-9).expect("lp solve");
        match lp_vertex_oracle(&c, &a, &b) {
            Some(v) if sol.status == LpStatus::Optimal => {
                lp_optimal += 1;
                lp_worst = lp_worst.max((sol.value - v).abs() / (1.0 + v.abs()));
            }
            None if sol.status == LpStatus::Infeasible => {}
            _ => lp_status_ok = false,
        }
    }
    let mut qp_worst: f64 = 0.0;
    for _ in 0..50 {
        let n = 4;
        let m = Mat::from_fn(n, n, |_, _| rng.random_range(-1.0..1.0));
        let h = m.transpose() * &m + Mat::identity(n, n) * 0.1;
        let f = Vector::from_fn(n, |_, _| rng.random_range(-2.0..2.0));
        let a = Mat::from_fn(7, n, |_, _| rng.random_range(-1.0..1.0));
        let b = Vector::from_fn(7, |_, _| rng.random_range(0.0..1.0));
        let p = QpProblem::new(h, f, a, b, Mat::zeros(0, n), Vector::zeros(0)).expect("qp");
        let sol = solve_qp(&p, 1e-10, None).expect("qp solve");
        let oracle = qp_active_set_oracle(&p);
        qp_worst = qp_worst.max((sol.value - oracle).abs() / (1.0 + oracle.abs()));
    }
    // Pontryagin difference of a box and a zonotope against a grid membership test.
    let mut grid_mismatch = 0;
    let mut set_worst: f64 = 0.0;
    for _ in 0..10 {
        let bx = Hyperbox::symmetric(&[rng.random_range(2.0..3.0), rng.random_range(2.0..3.0)]).expect("box");
        let gens = Mat::from_fn(2, 3, |_, _| rng.random_range(-0.5..0.5));
        let z = Zonotope::new(Vector::zeros(2), gens).expect("zonotope");
        let diff = pontryagin_diff_box(&bx, &z).expect("nonempty difference");
        let verts = zonotope_vertices_2d(&z);
        for i in 0..=40 {
            for j in 0..=40 {
                let x = Vector::from_column_slice(&[-3.0 + 0.15 * i as f64, -3.0 + 0.15 * j as f64]);
                let inside = verts.iter().all(|v| bx.contains(&(&x + v), 0.0));
                let near_edge = verts.iter().any(|v| {
                    let y = &x + v;
                    (0..2).any(|k| (y[k].abs() - bx.upper()[k]).abs() < 1e-9)
                });
                if !near_edge && inside != diff.contains(&x, 0.0) {
                    grid_mismatch += 1;
                }
            }
        }
        // Minkowski sum and linear map against support-function identities.
        let other = Zonotope::new(Vector::from_column_slice(&[0.3, -0.2]), Mat::from_fn(2, 2, |_, _| rng.random_range(-1.0..1.0)))
            .expect("zonotope");
        let sum = minkowski_sum(&z, &other).expect("sum");
        let map = Mat::from_fn(2, 2, |_, _| rng.random_range(-1.0..1.0));
        let mapped = linear_map(&map, &z).expect("map");
        for d in unit_directions(2, 20, 9) {
            let s1 = sum.support(&d).unwrap() - z.support(&d).unwrap() - other.support(&d).unwrap();
            let s2 = mapped.support(&d).unwrap() - z.support(&(map.transpose() * &d)).unwrap();
            set_worst = set_worst.max(s1.abs()).max(s2.abs());
        }
    }
    let pass = lp_status_ok && lp_optimal == 50 && lp_worst <= 1e-8 && qp_worst <= 1e-7 && grid_mismatch == 0 && set_worst <= 1e-12;
    outcome(
        pass,
        format!(
            "{lp_optimal}/50 LPs optimal, LP rel. error {lp_worst:.2e} (tol 1e-8), QP rel. error {qp_worst:.2e} (tol 1e-7), \
             Pontryagin grid mismatches {grid_mismatch}, support identity error {set_worst:.2e}"
        ),
    )
}

// ---------------------------------------------------------------- main

fn main() {
    let t0 = Instant::now();
    let r = reference();
    let mut extra = Vec::new();
    for (q, rw) in [(1.0, 1.0), (10.0, 0.1)] {
        let mut opts = r.cfg.synth_options();
        opts.q = vec![q; r.cfg.ident.p_bar];
        opts.r = vec![rw; r.cfg.ident.p_bar];
        extra.push(synth(&r.run.identification.bank, &opts).expect("alternative weights synthesize"));
    }
    let all: Vec<&TubeController> = std::iter::once(&r.run.controller).chain(&extra).collect();

    let results = [
        (1, "optimal predictors never worse than the iterated one-step model", criterion_1(&r)),
        (2, "iterated-bound curve above the multi-step bounds", criterion_2(&r)),
        (3, "lifted closed-loop spectral radius", criterion_3(&r, &extra)),
        (4, "closed-loop audits over 20 noise realizations", criterion_4(&r)),
        (5, "tube invariance certificate", criterion_5(&all)),
        (6, "terminal weight equation residual", criterion_6(&all)),
        (7, "noiseless data recovers exact predictors", criterion_7()),
        (8, "solver and set operation oracles", criterion_8()),
        (9, "error bounds hold on fresh data", criterion_9(&r)),
        (10, "closed loop settles faster than open loop", criterion_10(&r)),
    ];
    let mut failed = 0;
    for (id, name, o) in &results {
        if !o.pass {
            failed += 1;
        }
        println!("criterion {id:>2} {}: {name}: {}", if o.pass { "PASS" } else { "FAIL" }, o.summary);
    }
    println!(
        "acceptance: {}/{} criteria passed in {:.1}s",
        results.len() - failed,
        results.len(),
        t0.elapsed().as_secs_f64()
    );
    if failed > 0 {
        std::process::exit(1);
    }
}
