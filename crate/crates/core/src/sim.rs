//! Closed-loop lap simulation and the objective/feasibility evaluation.

use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::controller::{AugmentedState, Controller, ControllerConfig, WeightVector};
use crate::error::{Error, Result};
use crate::track::Track;
use crate::vehicle::{self, ControlInput, VehicleParams, VehicleState, GRAVITY};

/// Bounds of the run constraints checked on the logged lap.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunLimits {
    pub a_x_min: f64,
    pub a_x_max: f64,
    pub a_lat_max: f64,
}

impl Default for RunLimits {
    fn default() -> Self {
        Self { a_x_min: -3.5, a_x_max: 2.5, a_lat_max: 0.3 * GRAVITY }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimConfig {
    /// plant integration step inside one controller period, s
    pub plant_step: f64,
    /// step budget as a multiple of the nominal lap time
    pub budget_factor: f64,
    /// explicit step budget overriding `budget_factor`
    pub max_steps: Option<usize>,
    /// initial speed at the start line, m/s
    pub start_speed: f64,
    /// stop once `|e_lat|` exceeds the full lane width
    pub abort_on_departure: bool,
    /// stop at the first run-constraint violation
    pub abort_on_violation: bool,
    pub limits: RunLimits,
}

impl Default for SimConfig {
    fn default() -> Self {
        Self {
            plant_step: 0.01,
            budget_factor: 3.0,
            max_steps: None,
            start_speed: 0.0,
            abort_on_departure: true,
            abort_on_violation: false,
            limits: RunLimits::default(),
        }
    }
}

impl SimConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.plant_step > 0.0 && self.budget_factor >= 0.0 && self.start_speed >= 0.0) {
            return Err(Error::InvalidArgument(
                "plant_step must be positive, budget_factor and start_speed nonnegative".into(),
            ));
        }
        Ok(())
    }

    pub fn step_budget(&self, track: &Track, sample_time: f64) -> usize {
        self.max_steps
            .unwrap_or_else(|| (self.budget_factor * track.nominal_lap_time() / sample_time).ceil() as usize)
    }
}

/// One logged controller period.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StepRecord {
    pub time: f64,
    pub state: VehicleState,
    pub input: ControlInput,
    pub s: f64,
    pub vartheta: f64,
    pub e_lat: f64,
    pub a_x: f64,
    pub a_lat: f64,
    pub v_lim: f64,
    pub jerk: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimulationLog {
    pub sample_time: f64,
    pub records: Vec<StepRecord>,
    pub lap_complete: bool,
}

impl SimulationLog {
    pub fn steps(&self) -> usize {
        self.records.len()
    }

    /// Builds a log from per-step signals, filling the jerk column.
    pub fn from_records(sample_time: f64, records: Vec<StepRecord>, lap_complete: bool) -> Self {
        let mut log = Self { sample_time, records, lap_complete };
        log.fill_jerk();
        log
    }

    /// Central differences of `a_x`, one-sided at both ends.
    fn fill_jerk(&mut self) {
        let n = self.records.len();
        let h = self.sample_time;
        let a: Vec<f64> = self.records.iter().map(|r| r.a_x).collect();
        for k in 0..n {
            self.records[k].jerk = if n < 2 {
                0.0
            } else if k == 0 {
                (a[1] - a[0]) / h
            } else if k == n - 1 {
                (a[n - 1] - a[n - 2]) / h
            } else {
                (a[k + 1] - a[k - 1]) / (2.0 * h)
            };
        }
    }

    /// CSV with the columns listed in [`CSV_COLUMNS`].
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(CSV_COLUMNS)?;
        for r in &self.records {
            let st = r.state.to_array();
            let row = [r.time]
                .into_iter()
                .chain(st)
                .chain([r.input.a_ref, r.input.omega_s_ref, r.s, r.vartheta, r.e_lat, r.a_x, r.a_lat, r.v_lim, r.jerk]);
            w.write_record(row.map(|v| v.to_string()))?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn save_csv(&self, path: &Path) -> Result<()> {
        self.write_csv(std::fs::File::create(path)?)
    }
}

pub const CSV_COLUMNS: [&str; 19] = [
    "time", "x", "y", "psi", "psi_dot", "beta", "v", "v_ref", "delta_s", "delta_s_ref", "a_ref",
    "omega_s_ref", "s", "vartheta", "e_lat", "a_x", "a_lat", "v_lim", "jerk",
];

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ObjectiveTriple {
    pub e_lat: f64,
    pub e_jerk: f64,
    pub e_v: f64,
    /// +1 feasible, -1 infeasible
    pub g: i8,
}

impl ObjectiveTriple {
    /// `[E_jerk, E_v, E_lat]`, the order used by the weighted sum and the Pareto front.
    pub fn values(&self) -> [f64; 3] {
        [self.e_jerk, self.e_v, self.e_lat]
    }

    pub fn is_feasible(&self) -> bool {
        self.g > 0
    }
}

/// Start state with the front axle on the path start, aligned with it.
pub fn start_state(track: &Track, params: &VehicleParams, speed: f64) -> AugmentedState {
    let [x, y, h] = track.spec().start;
    AugmentedState {
        vehicle: VehicleState {
            x: x - params.lf * h.cos(),
            y: y - params.lf * h.sin(),
            psi: h,
            v: speed,
            v_ref: speed,
            ..Default::default()
        },
        s: 0.0,
    }
}

/// Drives one lap from `start`. The lap is complete once both the path
/// parameter and the vehicle's own foot point have covered the track. Solver
/// or plant failures truncate the log and leave the lap incomplete.
pub fn run_lap(
    track: &Track,
    config: &ControllerConfig,
    params: &VehicleParams,
    sim: &SimConfig,
    start: AugmentedState,
) -> SimulationLog {
    let ts = config.sample_time;
    let budget = sim.step_budget(track, ts);
    let substeps = (ts / sim.plant_step).round().max(1.0) as usize;
    let h = ts / substeps as f64;
    let lane = 0.5 * track.lane_width();

    let mut controller = Controller::new(config, params, track);
    let mut aug = start;
    let mut records = Vec::with_capacity(budget.min(100_000));
    let mut complete = false;
    let mut s_foot = track.normalize_s(aug.s);
    // unwrapped foot-point distance actually covered by the vehicle
    let mut progress = 0.0;

    for k in 0..=budget {
        let out = vehicle::output(&aug.vehicle, params);
        let (foot, dev) = track.lateral_error(&out, s_foot);
        s_foot = foot;
        progress = unwrap_progress(track, progress, foot);
        if aug.s >= track.s_max() && progress >= track.s_max() {
            complete = true;
            break;
        }
        if k == budget {
            break;
        }
        let Ok((u, th, _)) = controller.step(&aug) else { break };
        let st = aug.vehicle;
        let rec = StepRecord {
            time: k as f64 * ts,
            state: st,
            input: u,
            s: aug.s,
            vartheta: th,
            e_lat: dev.e_lat,
            a_x: (st.v_ref - st.v) / params.tau_velocity,
            a_lat: vehicle::lateral_acceleration(&st),
            v_lim: track.speed_limit_extended(aug.s),
            jerk: 0.0,
        };
        records.push(rec);
        if sim.abort_on_departure && dev.e_lat.abs() > 2.0 * lane {
            break;
        }
        if sim.abort_on_violation && !record_within(&rec, &sim.limits, lane) {
            break;
        }
        let mut x = st;
        let mut failed = false;
        for _ in 0..substeps {
            match vehicle::step_rk4(&x, &u, params, h) {
                Ok(next) => x = next,
                Err(_) => {
                    failed = true;
                    break;
                }
            }
        }
        if failed {
            break;
        }
        aug.vehicle = x;
        aug.s += th * ts;
    }
    SimulationLog::from_records(ts, records, complete)
}

fn unwrap_progress(track: &Track, prev: f64, foot: f64) -> f64 {
    if !track.is_closed() {
        return foot;
    }
    let l = track.s_max();
    let base = (prev / l).floor() * l + foot;
    [base - l, base, base + l]
        .into_iter()
        .min_by(|a, b| (a - prev).abs().total_cmp(&(b - prev).abs()))
        .unwrap()
}

fn record_within(r: &StepRecord, lim: &RunLimits, lane_half: f64) -> bool {
    (lim.a_x_min..=lim.a_x_max).contains(&r.a_x)
        && r.a_lat.abs() <= lim.a_lat_max
        && r.e_lat.abs() <= lane_half
}

/// Mean squares of jerk, speed error `v_lim - v`, and lateral error.
pub fn compute_objectives(log: &SimulationLog, track: &Track, limits: &RunLimits) -> Result<ObjectiveTriple> {
    if log.records.is_empty() {
        return Err(Error::Empty("simulation log"));
    }
    let n = log.records.len() as f64;
    let ms = |f: &dyn Fn(&StepRecord) -> f64| log.records.iter().map(|r| f(r).powi(2)).sum::<f64>() / n;
    Ok(ObjectiveTriple {
        e_lat: ms(&|r| r.e_lat),
        e_jerk: ms(&|r| r.jerk),
        e_v: ms(&|r| r.v_lim - r.state.v),
        g: check_feasibility(log, track, limits),
    })
}

/// +1 iff the lap completed and every record satisfies the run constraints.
pub fn check_feasibility(log: &SimulationLog, track: &Track, limits: &RunLimits) -> i8 {
    let lane = 0.5 * track.lane_width();
    if log.lap_complete && !log.records.is_empty() && log.records.iter().all(|r| record_within(r, limits, lane)) {
        1
    } else {
        -1
    }
}

/// Runs one lap with `weights` and evaluates it. `None` when no controller
/// step was taken.
pub fn evaluate_weights(
    track: &Track,
    config: &ControllerConfig,
    params: &VehicleParams,
    sim: &SimConfig,
    weights: &WeightVector,
) -> (Option<ObjectiveTriple>, SimulationLog) {
    let cfg = ControllerConfig { weights: *weights, ..config.clone() };
    let log = run_lap(track, &cfg, params, sim, start_state(track, params, sim.start_speed));
    (compute_objectives(&log, track, &sim.limits).ok(), log)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn record(t: f64, v: f64, v_lim: f64, e_lat: f64, a_x: f64, a_lat: f64) -> StepRecord {
        StepRecord {
            time: t,
            state: VehicleState { v, ..Default::default() },
            input: ControlInput::default(),
            s: 0.0,
            vartheta: v,
            e_lat,
            a_x,
            a_lat,
            v_lim,
            jerk: 0.0,
        }
    }

    fn synthetic(n: usize, f: impl Fn(usize) -> StepRecord) -> SimulationLog {
        SimulationLog::from_records(0.1, (0..n).map(f).collect(), true)
    }

    #[test]
    fn ideal_log_scores_zero() {
        let track = Track::default_loop();
        let log = synthetic(50, |k| record(k as f64 * 0.1, 10.0, 10.0, 0.0, 0.0, 0.0));
        let o = compute_objectives(&log, &track, &RunLimits::default()).unwrap();
        assert_eq!(o.values(), [0.0, 0.0, 0.0]);
        assert_eq!(o.g, 1);
    }

    #[test]
    fn constant_lateral_error() {
        let track = Track::default_loop();
        let log = synthetic(30, |k| record(k as f64 * 0.1, 10.0, 10.0, 0.2, 0.0, 0.0));
        let o = compute_objectives(&log, &track, &RunLimits::default()).unwrap();
        assert!((o.e_lat - 0.04).abs() < 1e-12);
    }

    #[test]
    fn sine_acceleration_jerk() {
        let track = Track::default_loop();
        let h = 0.01;
        let recs = (0..10_000).map(|k| record(k as f64 * h, 0.0, 0.0, 0.0, (k as f64 * h).sin(), 0.0)).collect();
        let log = SimulationLog::from_records(h, recs, false);
        // mean of cos^2 over [0, 100)
        let t: f64 = 100.0;
        let exact = 0.5 + (2.0 * t).sin() / (4.0 * t);
        let o = compute_objectives(&log, &track, &RunLimits::default()).unwrap();
        assert!((o.e_jerk - exact).abs() / exact < 0.01, "{} vs {exact}", o.e_jerk);
        assert!((o.e_jerk - 0.5).abs() / 0.5 < 0.01);
    }

    #[test]
    fn feasibility_examples() {
        let track = Track::default_loop();
        let lim = RunLimits::default();
        let mut log = synthetic(20, |k| record(k as f64 * 0.1, 10.0, 10.0, 0.1, 0.5, 2.0));
        assert_eq!(check_feasibility(&log, &track, &lim), 1);
        log.records[7].a_x = -4.0;
        assert_eq!(check_feasibility(&log, &track, &lim), -1);
        log.records[7].a_x = 0.0;
        log.records[3].a_lat = -2.95;
        assert_eq!(check_feasibility(&log, &track, &lim), -1);
        log.records[3].a_lat = 0.0;
        log.records[4].e_lat = 1.76;
        assert_eq!(check_feasibility(&log, &track, &lim), -1);
        log.records[4].e_lat = 0.0;
        log.lap_complete = false;
        assert_eq!(check_feasibility(&log, &track, &lim), -1);
    }

    #[test]
    fn empty_log_is_an_error() {
        let track = Track::default_loop();
        let log = SimulationLog::from_records(0.1, vec![], false);
        assert!(compute_objectives(&log, &track, &RunLimits::default()).is_err());
        assert_eq!(check_feasibility(&log, &track, &RunLimits::default()), -1);
    }

    #[test]
    fn zero_budget_gives_incomplete_lap() {
        let track = Track::default_loop();
        let params = VehicleParams::default();
        let sim = SimConfig { max_steps: Some(0), ..Default::default() };
        let log = run_lap(&track, &ControllerConfig::default(), &params, &sim, start_state(&track, &params, 0.0));
        assert!(!log.lap_complete);
        assert_eq!(log.steps(), 0);
    }

    #[test]
    fn short_runs_are_deterministic() {
        let track = Track::default_loop();
        let params = VehicleParams::default();
        let sim = SimConfig { max_steps: Some(40), ..Default::default() };
        let cfg = ControllerConfig::default();
        let a = run_lap(&track, &cfg, &params, &sim, start_state(&track, &params, 5.0));
        let b = run_lap(&track, &cfg, &params, &sim, start_state(&track, &params, 5.0));
        assert_eq!(a, b);
        assert_eq!(a.steps(), 40);
        // uniform time grid
        for (k, r) in a.records.iter().enumerate() {
            assert_eq!(r.time, k as f64 * cfg.sample_time);
        }
    }

    #[test]
    fn csv_has_header_and_rows() {
        let log = synthetic(3, |k| record(k as f64 * 0.1, 1.0, 2.0, 0.0, 0.0, 0.0));
        let mut buf = Vec::new();
        log.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let mut lines = text.lines();
        assert_eq!(lines.next().unwrap(), CSV_COLUMNS.join(","));
        assert_eq!(lines.count(), 3);
    }

    proptest! {
        #[test]
        fn lateral_objective_scales_quadratically(
            e in prop::collection::vec(-1.5f64..1.5, 2..60),
            c in 0.1f64..3.0,
        ) {
            let track = Track::default_loop();
            let lim = RunLimits::default();
            let base = synthetic(e.len(), |k| record(k as f64 * 0.1, 5.0, 6.0, e[k], 0.0, 0.0));
            let scaled = synthetic(e.len(), |k| record(k as f64 * 0.1, 5.0, 6.0, c * e[k], 0.0, 0.0));
            let a = compute_objectives(&base, &track, &lim).unwrap();
            let b = compute_objectives(&scaled, &track, &lim).unwrap();
            prop_assert!((b.e_lat - c * c * a.e_lat).abs() <= 1e-12 * (1.0 + b.e_lat));
            prop_assert!(a.e_lat >= 0.0 && a.e_jerk >= 0.0 && a.e_v >= 0.0);
            prop_assert_eq!(check_feasibility(&base, &track, &lim), check_feasibility(&base, &track, &lim));
        }
    }
}
