use mpfc_tune::controller::{solve_ocp, AugmentedState, ControllerConfig, OcpContext, WeightVector};
use mpfc_tune::sim::{check_feasibility, compute_objectives, run_lap, start_state, SimConfig};
use mpfc_tune::track::{Segment, Track, TrackSpec};
use mpfc_tune::vehicle::{VehicleParams, VehicleState};

#[test]
fn default_lap_end_to_end() {
    let track = Track::default_loop();
    let cfg = ControllerConfig::default();
    let params = VehicleParams::default();
    let sim = SimConfig::default();
    let start = start_state(&track, &params, sim.start_speed);
    let log = run_lap(&track, &cfg, &params, &sim, start);
    assert!(log.lap_complete);
    let o = compute_objectives(&log, &track, &sim.limits).unwrap();
    assert_eq!(o.g, 1);
    assert_eq!(check_feasibility(&log, &track, &sim.limits), o.g);

    let ts = cfg.sample_time;
    for r in &log.records {
        assert!(r.e_lat.abs() < 0.5 * track.lane_width());
        assert!(r.state.v <= r.v_lim + 0.1, "v {} over limit {} at s {}", r.state.v, r.v_lim, r.s);
        assert!((-3.5..=2.5).contains(&r.a_x));
        assert!(r.a_lat.abs() <= 0.3 * 9.81);
        assert!(r.vartheta >= 0.0);
    }
    for w in log.records.windows(2) {
        assert!((w[1].s - w[0].s - w[0].vartheta * ts).abs() < 1e-9);
    }

    let again = run_lap(&track, &cfg, &params, &sim, start);
    assert_eq!(again, log);
}

fn straight() -> Track {
    Track::new(TrackSpec {
        lane_width: 3.5,
        closed: false,
        start: [0.0, 0.0, 0.0],
        segments: vec![Segment::straight(400.0, 10.0)],
    })
    .unwrap()
}

#[test]
fn raising_q_y_never_increases_lateral_deviation_cost() {
    let track = straight();
    let params = VehicleParams::default();
    let x0 = AugmentedState {
        vehicle: VehicleState { x: 50.0 - params.lf, y: 0.5, v: 9.0, v_ref: 9.0, ..Default::default() },
        s: 50.0,
    };
    // squared y deviation alone, integrated like the cost
    let probe_weights = WeightVector::from_array([0.0, 1.0, 0.0, 0.0, 0.0, 0.0, 0.0]);
    let probe_cfg = ControllerConfig { weights: probe_weights, penalty_weight: 0.0, ..Default::default() };
    let probe = OcpContext::new(&probe_cfg, &params, &track);
    let mut last = f64::INFINITY;
    for q_y in [1.0, 3.0, 10.0, 30.0, 100.0] {
        let mut cfg = ControllerConfig { max_iterations: 400, tolerance: 1e-10, ..Default::default() };
        cfg.weights.q_y = q_y;
        let sol = solve_ocp(&x0, &cfg, &params, &track, None);
        let z: Vec<f64> =
            sol.inputs.iter().zip(&sol.vartheta).flat_map(|(u, th)| [u.a_ref, u.omega_s_ref, *th]).collect();
        let j_y = probe.cost(&x0, &z);
        assert!(j_y <= last * (1.0 + 1e-6), "q_y = {q_y}: {j_y} after {last}");
        last = j_y;
    }
}

#[test]
fn closed_loop_converges_as_sample_time_shrinks() {
    let track = Track::new(TrackSpec {
        lane_width: 3.5,
        closed: false,
        start: [0.0, 0.0, 0.0],
        segments: vec![
            Segment::straight(30.0, 8.3),
            Segment::arc(40.0, 1.0 / 25.0, 8.3),
            Segment::straight(60.0, 8.3),
        ],
    })
    .unwrap();
    let params = VehicleParams::default();
    let sim = SimConfig { plant_step: 0.005, ..Default::default() };
    let mut start = start_state(&track, &params, 8.0);
    start.vehicle.y += 0.3;
    // converged solves so that solver residue does not mask the sampling effect;
    // e_lat sampled every 0.1 s
    let trace = |ts: f64| -> Vec<f64> {
        let cfg = ControllerConfig { sample_time: ts, max_iterations: 200, tolerance: 1e-9, ..Default::default() };
        let log = run_lap(&track, &cfg, &params, &sim, start);
        let stride = (0.1 / ts).round() as usize;
        log.records.iter().step_by(stride).map(|r| r.e_lat).collect()
    };
    let coarse = trace(0.1);
    let mid = trace(0.05);
    let fine = trace(0.025);
    let n = coarse.len().min(mid.len()).min(fine.len());
    assert!(n > 100);
    let rms = |a: &[f64], b: &[f64]| (a[..n].iter().zip(&b[..n]).map(|(x, y)| (x - y).powi(2)).sum::<f64>() / n as f64).sqrt();
    let d1 = rms(&coarse, &mid);
    let d2 = rms(&mid, &fine);
    assert!(d2 < d1, "difference did not shrink: {d1:.3e} then {d2:.3e}");
}
