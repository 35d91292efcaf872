//! Acceptance run: one PASS/FAIL line per criterion, nonzero exit on any
//! failure. `ACCEPTANCE_ONLY=1,3` restricts the run to the listed criteria
//! (criterion 8 needs 7, which runs with it).

use std::time::Instant;

use mpfc_tune::acquisition::{expected_improvement, probability_of_feasibility, Prediction};
use mpfc_tune::controller::{ControllerConfig, WeightVector};
use mpfc_tune::gpr::{matern52_ard, Dataset, GprHyperparams, GprMode, GprModel, GprOptions};
use mpfc_tune::optimizer::{
    dominates, hv_curve, run_pareto, run_single_objective, run_weighted_sum, scalarize, EvaluationRecord,
    OptimizerSettings, ParetoArchive, Session, WeightBox, WeightingScheme,
};
use mpfc_tune::pareto::{hypervolume, normalize_front, reference_point, Objectives};
use mpfc_tune::sim::{evaluate_weights, ObjectiveTriple, SimConfig};
use mpfc_tune::track::Track;
use mpfc_tune::vehicle::VehicleParams;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

struct Report {
    only: Option<Vec<u32>>,
    failures: usize,
}

impl Report {
    fn wants(&self, k: u32) -> bool {
        self.only.as_ref().is_none_or(|v| v.contains(&k))
    }

    fn record(&mut self, k: &str, pass: bool, detail: String) {
        if !pass {
            self.failures += 1;
        }
        println!("{} criterion {k}: {detail}", if pass { "PASS" } else { "FAIL" });
    }
}

fn main() {
    let only = std::env::var("ACCEPTANCE_ONLY")
        .ok()
        .map(|s| s.split(',').filter_map(|t| t.trim().parse().ok()).collect::<Vec<u32>>());
    let mut report = Report { only, failures: 0 };
    if report.wants(1) {
        criterion_1(&mut report);
    }
    if report.wants(2) {
        criterion_2(&mut report);
    }
    if report.wants(3) {
        criterion_3(&mut report);
    }
    if report.wants(4) {
        criterion_4(&mut report);
    }
    if report.wants(6) {
        criterion_6(&mut report);
    }
    if report.wants(5) || report.wants(7) || report.wants(8) {
        criteria_5_7_8(&mut report);
    }
    if report.failures > 0 {
        println!("{} criterion check(s) failed", report.failures);
        std::process::exit(1);
    }
}

fn pred(mean: f64, std: f64) -> Prediction {
    Prediction { mean, std }
}

/// Composite Simpson rule with `n` (even) panels.
fn simpson(f: impl Fn(f64) -> f64, a: f64, b: f64, n: usize) -> f64 {
    let h = (b - a) / n as f64;
    let inner: f64 = (1..n).map(|i| f(a + i as f64 * h) * if i % 2 == 1 { 4.0 } else { 2.0 }).sum();
    (f(a) + f(b) + inner) * h / 3.0
}

/// `exp(-a)` by its Taylor series summed in pairs after scaling `a` below 1/16.
fn exp_neg_series(a: f64) -> f64 {
    let mut k = 0;
    let mut x = a;
    while x > 1.0 / 16.0 {
        x /= 2.0;
        k += 1;
    }
    let mut term = 1.0;
    let mut sum = 1.0;
    for n in 1..30 {
        term *= -x / n as f64;
        sum += term;
    }
    (0..k).fold(sum, |s, _| s * s)
}

fn criterion_1(report: &mut Report) {
    let t = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(101);
    let mut ei_err: f64 = 0.0;
    for _ in 0..100 {
        let (m, s, best) = (rng.random_range(-2.0..2.0), rng.random_range(0.05..2.0), rng.random_range(-2.0..2.0));
        let n = 1_000_000;
        let mc: f64 = (0..n)
            .map(|_| {
                let z: f64 = rng.sample(StandardNormal);
                (best - (m + s * z)).max(0.0)
            })
            .sum::<f64>()
            / n as f64;
        ei_err = ei_err.max((expected_improvement(pred(m, s), best) - mc).abs());
    }
    let mut pof_err: f64 = 0.0;
    for _ in 0..100 {
        let (m, s, th) = (rng.random_range(-2.0..2.0), rng.random_range(0.05..2.0), rng.random_range(-2.0..2.0));
        let density = |y: f64| (-(y - m).powi(2) / (2.0 * s * s)).exp() / (s * (2.0 * std::f64::consts::PI).sqrt());
        let upper = m + 12.0 * s;
        let oracle = if th < upper { simpson(density, th, upper, 20_000) } else { 0.0 };
        pof_err = pof_err.max((probability_of_feasibility(pred(m, s), th) - oracle).abs());
    }
    let mut k_err: f64 = 0.0;
    let hyp = GprHyperparams::isotropic(1, 0.0, 1.0, 1.0, 0.0);
    let spec_value = matern52_ard(&[0.0], &[1.0], &hyp);
    k_err = k_err.max((spec_value - 0.52400).abs());
    for _ in 0..200 {
        let dim = 7;
        let x1: Vec<f64> = (0..dim).map(|_| rng.random()).collect();
        let x2: Vec<f64> = (0..dim).map(|_| rng.random()).collect();
        let h = GprHyperparams {
            mean: 0.0,
            signal_var: rng.random_range(0.1..5.0),
            lengthscales: (0..dim).map(|_| rng.random_range(0.05..3.0)).collect(),
            noise_var: 0.0,
        };
        let r2: f64 = x1.iter().zip(&x2).zip(&h.lengthscales).map(|((a, b), l)| ((a - b) / l).powi(2)).sum();
        let a = (5.0 * r2).sqrt();
        let oracle = h.signal_var * (1.0 + a + a * a / 3.0) * exp_neg_series(a);
        k_err = k_err.max((matern52_ard(&x1, &x2, &h) - oracle).abs());
    }
    let secs = t.elapsed().as_secs_f64();
    let pass = ei_err < 1e-2 && pof_err < 1e-4 && k_err < 1e-5 && secs < 60.0;
    report.record(
        "1",
        pass,
        format!(
            "analytic oracles: max |EI - MC| = {ei_err:.2e} (< 1e-2), max |PoF - quadrature| = {pof_err:.2e} (< 1e-4), \
             max |k - closed form| = {k_err:.2e} (< 1e-5), k(1) = {spec_value:.5}, {secs:.1} s (< 60 s)"
        ),
    );
}

fn criterion_2(report: &mut Report) {
    use std::f64::consts::PI;
    let t = Instant::now();
    let xs: Vec<Vec<f64>> = (0..20).map(|i| vec![i as f64 / 19.0]).collect();
    let ys: Vec<f64> = xs.iter().map(|x| (2.0 * PI * x[0]).sin()).collect();
    let sine = Dataset::new(xs.clone(), ys.clone()).unwrap();
    let m = GprModel::fit(&sine, GprMode::Exact, &GprOptions::default()).unwrap();
    let train_err = xs.iter().zip(&ys).map(|(x, y)| (m.predict(x).mean - y).abs()).fold(0.0, f64::max);
    let mid_err = (0..19)
        .map(|i| {
            let x = (i as f64 + 0.5) / 19.0;
            (m.predict(&[x]).mean - (2.0 * PI * x).sin()).abs()
        })
        .fold(0.0, f64::max);

    let mut rng = ChaCha8Rng::seed_from_u64(202);
    let x7: Vec<Vec<f64>> = (0..60).map(|_| (0..7).map(|_| rng.random()).collect()).collect();
    let y7: Vec<f64> = x7.iter().map(|x| x.iter().enumerate().map(|(d, v)| (d as f64 + 1.0) * v * v).sum::<f64>()).collect();
    let d7 = Dataset::new(x7, y7).unwrap();
    let m7 = GprModel::fit(&d7, GprMode::Exact, &GprOptions::default()).unwrap();
    let mut var_excess = f64::NEG_INFINITY;
    for (model, dim) in [(&m, 1usize), (&m7, 7)] {
        let h = model.hyperparams();
        let prior = h.signal_var + h.noise_var;
        for _ in 0..2000 {
            let x: Vec<f64> = (0..dim).map(|_| rng.random_range(-0.5..1.5)).collect();
            var_excess = var_excess.max(model.predict(&x).std.powi(2) - prior);
        }
    }

    let x50: Vec<Vec<f64>> = (0..50).map(|_| (0..7).map(|_| rng.random()).collect()).collect();
    let y50: Vec<f64> = x50.iter().map(|x| (3.0 * x[0]).sin() + x[1] * x[2]).collect();
    let d50 = Dataset::new(x50, y50).unwrap();
    let hyp = GprHyperparams { mean: 0.1, signal_var: 1.3, lengthscales: vec![0.6; 7], noise_var: 1e-4 };
    let exact = GprModel::with_hyperparams(&d50, &hyp, None).unwrap();
    let fitc = GprModel::with_hyperparams(&d50, &hyp, Some(d50.inputs())).unwrap();
    let fitc_err = (0..500)
        .map(|_| {
            let x: Vec<f64> = (0..7).map(|_| rng.random()).collect();
            (exact.predict(&x).mean - fitc.predict(&x).mean).abs()
        })
        .fold(0.0, f64::max);

    let secs = t.elapsed().as_secs_f64();
    let pass = train_err < 1e-6 && mid_err < 1e-2 && var_excess <= 1e-8 && fitc_err < 1e-6 && secs < 60.0;
    report.record(
        "2",
        pass,
        format!(
            "GPR: sine error {train_err:.2e} at training points (< 1e-6), {mid_err:.2e} at midpoints (< 1e-2); \
             max variance above prior {var_excess:.2e} (<= 1e-8); |FITC - exact| = {fitc_err:.2e} (< 1e-6); {secs:.1} s (< 60 s)"
        ),
    );
}

fn record_with(index: usize, v: Objectives, g: i8) -> EvaluationRecord {
    EvaluationRecord {
        index,
        approach: mpfc_tune::optimizer::Approach::Pareto,
        instance: 0,
        weighting: None,
        iteration: index,
        initial: false,
        weights: WeightVector::default(),
        unit: vec![0.5; 7],
        objectives: Some(ObjectiveTriple { e_jerk: v[0], e_v: v[1], e_lat: v[2], g }),
        sim_time: 0.0,
        overhead_time: 0.0,
        surrogates: Vec::new(),
    }
}

fn criterion_3(report: &mut Report) {
    let t = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(303);
    let mut archive_ok = true;
    for _ in 0..50 {
        let recs: Vec<EvaluationRecord> = (0..200)
            .map(|i| {
                let g = if rng.random::<f64>() < 0.2 { -1 } else { 1 };
                // coarse values so that ties and duplicates occur
                let v = std::array::from_fn(|_| rng.random_range(0..25) as f64 / 5.0);
                record_with(i, v, g)
            })
            .collect();
        let mut got: Vec<usize> = ParetoArchive::from_records(&recs).members.iter().map(|m| m.index).collect();
        got.sort_unstable();
        let brute: Vec<usize> = recs
            .iter()
            .filter(|r| r.g() > 0)
            .filter(|r| !recs.iter().any(|q| q.g() > 0 && dominates(&q.objectives.unwrap(), &r.objectives.unwrap())))
            .map(|r| r.index)
            .collect();
        archive_ok &= got == brute;
    }
    let mut hv_err: f64 = 0.0;
    for _ in 0..20 {
        let n = rng.random_range(5..30);
        let pts: Vec<Objectives> = (0..n)
            .map(|_| {
                let d: [f64; 3] = std::array::from_fn(|_| rng.random_range(0.05..1.0));
                let norm = d.iter().map(|v| v * v).sum::<f64>().sqrt();
                d.map(|v| v / norm)
            })
            .collect();
        let r = [1.1; 3];
        let exact = hypervolume(&pts, &r).unwrap();
        let samples = 10_000_000;
        let hits = (0..samples)
            .filter(|_| {
                let q: [f64; 3] = std::array::from_fn(|d| rng.random_range(0.0..r[d]));
                pts.iter().any(|p| p[0] <= q[0] && p[1] <= q[1] && p[2] <= q[2])
            })
            .count();
        let mc = hits as f64 / samples as f64 * r.iter().product::<f64>();
        hv_err = hv_err.max((exact - mc).abs() / mc);
    }
    let secs = t.elapsed().as_secs_f64();
    let pass = archive_ok && hv_err < 0.01 && secs < 120.0;
    report.record(
        "3",
        pass,
        format!(
            "Pareto/HV: archive equals brute force on 50 streams: {archive_ok}; max relative |HV - MC| over 20 fronts \
             = {hv_err:.2e} (< 1e-2); {secs:.1} s (< 120 s)"
        ),
    );
}

fn criterion_4(report: &mut Report) {
    let t = Instant::now();
    let track = Track::default_loop();
    let cfg = ControllerConfig::default();
    let params = VehicleParams::default();
    let sim = SimConfig::default();
    let (o, log) = evaluate_weights(&track, &cfg, &params, &sim, &WeightVector::default());
    let g = o.map_or(-1, |o| o.g);
    let half = 0.5 * track.lane_width();
    let max_elat = log.records.iter().map(|r| r.e_lat.abs()).fold(0.0, f64::max);
    let over = log.records.iter().map(|r| r.state.v - r.v_lim).fold(f64::NEG_INFINITY, f64::max);
    let ax_min = log.records.iter().map(|r| r.a_x).fold(f64::INFINITY, f64::min);
    let ax_max = log.records.iter().map(|r| r.a_x).fold(f64::NEG_INFINITY, f64::max);
    let alat = log.records.iter().map(|r| r.a_lat.abs()).fold(0.0, f64::max);
    let secs = t.elapsed().as_secs_f64();
    let pass = log.lap_complete
        && g == 1
        && max_elat < half
        && over <= 0.1
        && ax_min >= -3.5
        && ax_max <= 2.5
        && alat <= 0.3 * 9.81
        && secs < 300.0;
    report.record(
        "4",
        pass,
        format!(
            "default lap: complete {}, g = {g:+}, max |e_lat| = {max_elat:.3} m (< {half}), max v - v_lim = {over:.3} m/s \
             (<= 0.1), a_x in [{ax_min:.2}, {ax_max:.2}] (within [-3.5, 2.5]), max |a_lat| = {alat:.2} (<= {:.3}), {secs:.1} s (< 300 s)",
            log.lap_complete,
            0.3 * 9.81
        ),
    );
}

/// Sum of scaled quadratics with an infeasible ball next to the optimum.
fn synthetic_objective(u: &[f64]) -> (f64, bool) {
    const SCALE: [f64; 7] = [1.0, 2.0, 4.0, 0.5, 3.0, 1.5, 0.8];
    const CENTER: [f64; 7] = [0.3, 0.7, 0.45, 0.2, 0.6, 0.8, 0.35];
    let f = 1.0 + u.iter().zip(SCALE).zip(CENTER).map(|((x, s), c)| s * (x - c).powi(2)).sum::<f64>();
    let ball: f64 = u.iter().zip(CENTER).enumerate().map(|(d, (x, c))| (x - c - if d == 0 { 0.15 } else { 0.0 }).powi(2)).sum();
    (f, ball.sqrt() >= 0.2)
}

fn criterion_6(report: &mut Report) {
    let t = Instant::now();
    let bx = WeightBox::default();
    let w = WeightingScheme::new([1.0, 0.0, 0.0]).unwrap();
    let mut bo_best = Vec::new();
    let mut rs_best = Vec::new();
    for seed in 0..10u64 {
        let settings = OptimizerSettings { seed, ..Default::default() };
        let eval = |wv: &WeightVector| {
            let (f, ok) = synthetic_objective(&bx.to_unit(wv).unwrap());
            Some(ObjectiveTriple { e_jerk: f, e_v: 0.0, e_lat: 0.0, g: if ok { 1 } else { -1 } })
        };
        let mut session = Session::new(settings, eval);
        run_single_objective(&mut session, 0, w, 60, seed, None).unwrap();
        let best = session
            .records()
            .iter()
            .filter_map(|r| r.objectives.filter(ObjectiveTriple::is_feasible))
            .map(|o| scalarize(&o, &w))
            .fold(f64::INFINITY, f64::min);
        bo_best.push(best);

        let mut rng = ChaCha8Rng::seed_from_u64(10_000 + seed);
        let best = (0..60)
            .filter_map(|_| {
                let u: Vec<f64> = (0..7).map(|_| rng.random()).collect();
                let (f, ok) = synthetic_objective(&u);
                ok.then_some(f)
            })
            .fold(f64::INFINITY, f64::min);
        rs_best.push(best);
    }
    let median = |v: &mut Vec<f64>| {
        v.sort_by(f64::total_cmp);
        0.5 * (v[4] + v[5])
    };
    let (bo, rs) = (median(&mut bo_best), median(&mut rs_best));
    let secs = t.elapsed().as_secs_f64();
    report.record(
        "6",
        bo < rs && secs < 600.0,
        format!("BO beats random: median best feasible {bo:.4} (EIC-BO) vs {rs:.4} (random), 60 evaluations x 10 seeds, {secs:.1} s (< 600 s)"),
    );
}

fn best_for(records: &[EvaluationRecord], instance: usize, w: &WeightingScheme) -> Option<ObjectiveTriple> {
    records
        .iter()
        .filter(|r| r.instance == instance)
        .filter_map(|r| r.objectives.filter(ObjectiveTriple::is_feasible))
        .min_by(|a, b| scalarize(a, w).total_cmp(&scalarize(b, w)))
}

fn r_squared(x: &[f64], y: &[f64]) -> f64 {
    let n = x.len() as f64;
    let (mx, my) = (x.iter().sum::<f64>() / n, y.iter().sum::<f64>() / n);
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = x.iter().map(|a| (a - mx).powi(2)).sum();
    let syy: f64 = y.iter().map(|b| (b - my).powi(2)).sum();
    sxy * sxy / (sxx * syy)
}

fn mean_overhead(records: &[EvaluationRecord], lo: usize, hi: usize) -> f64 {
    let v: Vec<f64> = records.iter().filter(|r| (lo..=hi).contains(&r.iteration)).map(|r| r.overhead_time).collect();
    v.iter().sum::<f64>() / v.len() as f64
}

fn run_time(records: &[EvaluationRecord]) -> f64 {
    records.iter().map(|r| r.sim_time + r.overhead_time).sum()
}

fn criteria_5_7_8(report: &mut Report) {
    let track = Track::default_loop();
    let cfg = ControllerConfig::default();
    let params = VehicleParams::default();
    let sim = SimConfig::default();
    let expert = WeightVector::default();
    let lap = |w: &WeightVector| evaluate_weights(&track, &cfg, &params, &sim, w).0;
    let settings = OptimizerSettings::default();
    let n0 = settings.n0;

    // Approach 1; the three vertex instances double as the criterion-5 runs
    let weightings: Vec<WeightingScheme> =
        [[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0], [1.0 / 3.0, 1.0 / 3.0, 1.0 / 3.0], [0.5, 0.25, 0.25]]
            .into_iter()
            .map(|w| WeightingScheme::new(w).unwrap())
            .collect();
    let mut s1 = Session::new(settings.clone(), lap);
    run_weighted_sum(&mut s1, &weightings, 30, Some(&expert)).unwrap();
    let (a1, archive1) = s1.into_parts();

    if report.wants(5) {
        let jerk_w = &weightings[0];
        let speed_w = &weightings[1];
        let secs = run_time(&a1.iter().filter(|r| r.instance < 3).cloned().collect::<Vec<_>>());
        let detail;
        let pass = match (best_for(&a1, 0, jerk_w), best_for(&a1, 1, speed_w)) {
            (Some(j), Some(v)) => {
                detail = format!(
                    "best for w=(0,1,0): E_v = {:.4}, E_jerk = {:.4}; best for w=(1,0,0): E_v = {:.4}, E_jerk = {:.4}",
                    v.e_v, v.e_jerk, j.e_v, j.e_jerk
                );
                v.e_v < j.e_v && v.e_jerk > j.e_jerk && secs < 3600.0
            }
            _ => {
                detail = "a vertex weighting found no feasible point".into();
                false
            }
        };
        report.record("5", pass, format!("objective conflict: {detail}; {secs:.0} s (< 3600 s)"));
    }
    if !(report.wants(7) || report.wants(8)) {
        return;
    }

    let mut s2 = Session::new(settings.clone(), lap);
    run_pareto(&mut s2, 150, Some(&expert)).unwrap();
    let (a2, archive2) = s2.into_parts();

    let baseline = a2[0].feasible_values().expect("expert lap is feasible");
    let initial = ParetoArchive::from_records(&a2[..n0]);
    let f1 = normalize_front(&archive1.objectives(), &baseline).unwrap();
    let f2 = normalize_front(&archive2.objectives(), &baseline).unwrap();
    let f0 = normalize_front(&initial.objectives(), &baseline).unwrap();
    let reference = reference_point(&[&f1, &f2, &f0], 1.1).unwrap();
    let (hv1, hv2, hv0) =
        (hypervolume(&f1, &reference).unwrap(), hypervolume(&f2, &reference).unwrap(), hypervolume(&f0, &reference).unwrap());
    let c1 = hv_curve(&a1, &baseline, &reference).unwrap();
    let c2 = hv_curve(&a2, &baseline, &reference).unwrap();
    let monotone = |c: &[mpfc_tune::optimizer::HvPoint]| c.windows(2).all(|p| p[1].hypervolume >= p[0].hypervolume);
    let (t1, t2) = (run_time(&a1), run_time(&a2));
    if report.wants(7) {
        let pass = archive1.len() >= 5
            && archive2.len() >= 5
            && hv1 > hv0
            && hv2 > hv0
            && monotone(&c1)
            && monotone(&c2)
            && t1 + t2 < 4.0 * 3600.0;
        report.record(
            "7",
            pass,
            format!(
                "two approaches: Approach 1 {} evaluations, {} nondominated, HV {hv1:.4}, {t1:.0} s; Approach 2 {} evaluations, \
                 {} nondominated, HV {hv2:.4}, {t2:.0} s; initial-sample HV {hv0:.4}; HV curves non-decreasing: {}/{}; \
                 reference {reference:.3?}",
                a1.len(),
                archive1.len(),
                a2.len(),
                archive2.len(),
                monotone(&c1),
                monotone(&c2)
            ),
        );
    }
    if report.wants(8) {
        let x: Vec<f64> = c1.iter().map(|p| p.evaluations as f64).collect();
        let y: Vec<f64> = c1.iter().map(|p| p.cumulative_time).collect();
        let r2 = r_squared(&x, &y);
        let (early, late) = (mean_overhead(&a2, 10, 30), mean_overhead(&a2, 80, 100));
        report.record(
            "8",
            r2 >= 0.95 && late > early,
            format!(
                "scalability: Approach 1 cumulative time vs evaluations R^2 = {r2:.4} (>= 0.95); Approach 2 mean overhead \
                 {early:.3} s in iterations 10-30, {late:.3} s in iterations 80-100"
            ),
        );
    }

    if report.wants(7) {
        // Pareto runs with budget 100 over three seeds beat their initial samples
        let mut lines = Vec::new();
        let mut pass = true;
        for seed in [settings.seed, settings.seed + 1, settings.seed + 2] {
            let ledger: Vec<EvaluationRecord> = if seed == settings.seed {
                a2[..100].to_vec()
            } else {
                let mut s = Session::new(OptimizerSettings { seed, ..settings.clone() }, lap);
                run_pareto(&mut s, 100, Some(&expert)).unwrap();
                s.into_parts().0
            };
            let base = ledger[0].feasible_values().expect("expert lap is feasible");
            let fin = normalize_front(&ParetoArchive::from_records(&ledger).objectives(), &base).unwrap();
            let ini = normalize_front(&ParetoArchive::from_records(&ledger[..n0]).objectives(), &base).unwrap();
            let r = reference_point(&[&fin, &ini], 1.1).unwrap();
            let (hf, hi) = (hypervolume(&fin, &r).unwrap(), hypervolume(&ini, &r).unwrap());
            pass &= hf > hi;
            lines.push(format!("seed {seed}: {hf:.4} > {hi:.4}"));
        }
        report.record("7 (budget-100 Pareto runs)", pass, format!("final vs initial-sample HV, {}", lines.join(", ")));
    }
}
