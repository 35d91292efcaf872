//! Sampled-data model predictive path-following controller.
//!
//! The optimal control problem is transcribed by direct single shooting with
//! piecewise-constant inputs `(a_ref, omega_s_ref, vartheta)` on `N` intervals.
//! The cost integrates the tracking and input terms with the rectangle rule
//! and adds a terminal tracking term with the same weights. Path constraints
//! (lane keeping, longitudinal and lateral acceleration, speed ceiling) enter
//! as quadratic penalties scaled by the largest weight, so the whole cost is
//! linear in the weight vector. Gradients come from a discrete adjoint sweep
//! through the RK4 rollout; decision variables are kept inside their boxes by
//! projection in a projected quasi-Newton (BFGS) iteration.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::track::{wrap_angle, PathDeviation, SpeedEnvelope, Track};
use crate::vehicle::{
    self, ControlInput, VehicleParams, VehicleState, GRAVITY, IPSI, IR, IV, IVREF, IX, IY,
    NU, NX,
};

/// The seven tunable cost weights.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WeightVector {
    pub q_x: f64,
    pub q_y: f64,
    pub q_psi: f64,
    pub q_a: f64,
    pub r_a: f64,
    pub r_omega: f64,
    pub r_vartheta: f64,
}

pub const N_WEIGHTS: usize = 7;

impl WeightVector {
    pub const NAMES: [&'static str; N_WEIGHTS] =
        ["q_x", "q_y", "q_psi", "q_a", "r_a", "r_omega", "r_vartheta"];

    pub fn from_array(a: [f64; N_WEIGHTS]) -> Self {
        Self {
            q_x: a[0],
            q_y: a[1],
            q_psi: a[2],
            q_a: a[3],
            r_a: a[4],
            r_omega: a[5],
            r_vartheta: a[6],
        }
    }

    pub fn to_array(&self) -> [f64; N_WEIGHTS] {
        [self.q_x, self.q_y, self.q_psi, self.q_a, self.r_a, self.r_omega, self.r_vartheta]
    }

    pub fn validate(&self) -> Result<()> {
        for (name, w) in Self::NAMES.iter().zip(self.to_array()) {
            if !(w.is_finite() && w > 0.0) {
                return Err(Error::InvalidArgument(format!("weight {name} must be positive, got {w}")));
            }
        }
        Ok(())
    }

    pub fn scaled(&self, factor: f64) -> Self {
        Self::from_array(self.to_array().map(|w| w * factor))
    }

    fn max(&self) -> f64 {
        self.to_array().into_iter().fold(0.0, f64::max)
    }
}

impl Default for WeightVector {
    /// Hand-tuned parametrization that drives the default loop feasibly.
    fn default() -> Self {
        Self {
            q_x: 10.0,
            q_y: 10.0,
            q_psi: 1.0,
            q_a: 0.5,
            r_a: 1.0,
            r_omega: 1.0,
            r_vartheta: 1.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ControllerConfig {
    /// prediction horizon, s
    pub horizon: f64,
    /// controller sampling time, s
    pub sample_time: f64,
    pub intervals: usize,
    /// RK4 substeps per prediction interval
    pub prediction_substeps: usize,
    pub weights: WeightVector,
    /// upper bound of the virtual input; `None` uses the track's largest limit
    pub vartheta_max: Option<f64>,
    /// penalty multiplier relative to the largest weight
    pub penalty_weight: f64,
    pub lane_margin: f64,
    pub a_x_min: f64,
    pub a_x_max: f64,
    pub accel_margin: f64,
    pub a_lat_max: f64,
    pub a_lat_margin: f64,
    pub speed_margin: f64,
    /// lateral acceleration used to derive curve speeds of the speed ceiling
    pub design_lat_accel: f64,
    /// deceleration used to anticipate lower ceilings ahead
    pub design_decel: f64,
    pub max_iterations: usize,
    pub tolerance: f64,
}

impl Default for ControllerConfig {
    fn default() -> Self {
        Self {
            horizon: 2.0,
            sample_time: 0.1,
            intervals: 20,
            prediction_substeps: 2,
            weights: WeightVector::default(),
            vartheta_max: None,
            penalty_weight: 1e3,
            lane_margin: 0.35,
            a_x_min: -3.5,
            a_x_max: 2.5,
            accel_margin: 0.3,
            a_lat_max: 0.3 * GRAVITY,
            a_lat_margin: 0.3,
            speed_margin: 0.0,
            design_lat_accel: 0.8 * 0.3 * GRAVITY,
            design_decel: 1.5,
            max_iterations: 25,
            tolerance: 1e-6,
        }
    }
}

impl ControllerConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidArgument(m.to_string()));
        if !(self.sample_time > 0.0 && self.horizon >= self.sample_time) {
            return bad("controller timing must satisfy horizon >= sample_time > 0");
        }
        if self.intervals == 0 || self.prediction_substeps == 0 {
            return bad("intervals and prediction_substeps must be at least 1");
        }
        if !(self.penalty_weight >= 0.0) {
            return bad("penalty_weight must be nonnegative");
        }
        if !(self.a_x_min < 0.0 && self.a_x_max > 0.0 && self.a_lat_max > 0.0) {
            return bad("acceleration bounds must bracket zero");
        }
        if !(self.design_lat_accel > 0.0 && self.design_decel > 0.0) {
            return bad("speed ceiling design values must be positive");
        }
        if self.max_iterations == 0 {
            return bad("max_iterations must be at least 1");
        }
        self.weights.validate()
    }

    pub fn interval(&self) -> f64 {
        self.horizon / self.intervals as f64
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct AugmentedState {
    pub vehicle: VehicleState,
    /// path parameter, m
    pub s: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SolverStatus {
    Converged,
    IterationCap,
    InfeasibleStart,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OcpSolution {
    pub inputs: Vec<ControlInput>,
    pub vartheta: Vec<f64>,
    pub cost: f64,
    pub status: SolverStatus,
    pub iterations: usize,
}

impl OcpSolution {
    fn to_decision(&self) -> Vec<f64> {
        self.inputs
            .iter()
            .zip(&self.vartheta)
            .flat_map(|(u, th)| [u.a_ref, u.omega_s_ref, *th])
            .collect()
    }

    fn from_decision(z: &[f64], cost: f64, status: SolverStatus, iterations: usize) -> Self {
        let inputs = z.chunks(3).map(|c| ControlInput::new(c[0], c[1])).collect();
        let vartheta = z.chunks(3).map(|c| c[2]).collect();
        Self { inputs, vartheta, cost, status, iterations }
    }

    /// Drops the first interval and repeats the last one.
    pub fn shifted(&self) -> Self {
        let mut out = self.clone();
        if out.inputs.len() > 1 {
            out.inputs.remove(0);
            out.inputs.push(*out.inputs.last().unwrap());
            out.vartheta.remove(0);
            out.vartheta.push(*out.vartheta.last().unwrap());
        }
        out
    }
}

/// `||(e, a_lat)||_Q^2 + ||(u, vartheta - vartheta_ref)||_R^2`.
pub fn stage_cost(
    e: &PathDeviation,
    a_lat: f64,
    u: &ControlInput,
    vartheta: f64,
    vartheta_ref: f64,
    w: &WeightVector,
) -> f64 {
    let dth = vartheta - vartheta_ref;
    w.q_x * e.e[0].powi(2)
        + w.q_y * e.e[1].powi(2)
        + w.q_psi * e.e[2].powi(2)
        + w.q_a * a_lat.powi(2)
        + w.r_a * u.a_ref.powi(2)
        + w.r_omega * u.omega_s_ref.powi(2)
        + w.r_vartheta * dth.powi(2)
}

/// Everything the OCP needs besides the initial state.
pub struct OcpContext<'a> {
    pub config: &'a ControllerConfig,
    pub params: &'a VehicleParams,
    pub track: &'a Track,
    envelope: SpeedEnvelope,
    vartheta_max: f64,
}

impl<'a> OcpContext<'a> {
    pub fn new(config: &'a ControllerConfig, params: &'a VehicleParams, track: &'a Track) -> Self {
        let envelope = SpeedEnvelope::new(track, config.design_lat_accel, config.design_decel);
        let vartheta_max = config.vartheta_max.unwrap_or_else(|| track.max_speed_limit());
        Self { config, params, track, envelope, vartheta_max }
    }

    pub fn decision_len(&self) -> usize {
        3 * self.config.intervals
    }

    fn bounds(&self) -> ([f64; 3], [f64; 3]) {
        let p = self.params;
        (
            [p.a_ref_min, -p.omega_s_ref_max, 0.0],
            [p.a_ref_max, p.omega_s_ref_max, self.vartheta_max],
        )
    }

    fn project(&self, z: &mut [f64]) {
        let (lo, hi) = self.bounds();
        for (i, v) in z.iter_mut().enumerate() {
            *v = v.clamp(lo[i % 3], hi[i % 3]);
        }
    }

    /// Weighted tracking term plus constraint penalties at one predicted point,
    /// with gradients with respect to the state and the path parameter.
    fn state_terms(&self, x: &[f64; NX], s: f64) -> (f64, [f64; NX], f64) {
        let cfg = self.config;
        let w = &cfg.weights;
        let lf = self.params.lf;
        let mut gx = [0.0; NX];

        let ([xr, yr, psir], kappa) = self.track.pose_extended(s);
        let (sp, cp) = x[IPSI].sin_cos();
        let (sr, cr) = psir.sin_cos();
        let dx = x[IX] + lf * cp - xr;
        let dy = x[IY] + lf * sp - yr;
        let dpsi = wrap_angle(x[IPSI] - psir);
        let a_lat = x[IV] * x[IR];

        let mut val = w.q_x * dx * dx + w.q_y * dy * dy + w.q_psi * dpsi * dpsi + w.q_a * a_lat * a_lat;
        gx[IX] += 2.0 * w.q_x * dx;
        gx[IY] += 2.0 * w.q_y * dy;
        gx[IPSI] += 2.0 * w.q_x * dx * (-lf * sp) + 2.0 * w.q_y * dy * (lf * cp) + 2.0 * w.q_psi * dpsi;
        gx[IV] += 2.0 * w.q_a * a_lat * x[IR];
        gx[IR] += 2.0 * w.q_a * a_lat * x[IV];
        let mut gs = -2.0 * w.q_x * dx * cr - 2.0 * w.q_y * dy * sr - 2.0 * w.q_psi * dpsi * kappa;

        let rho = cfg.penalty_weight * w.max();
        if rho > 0.0 {
            let mut pen = 0.0;
            // lane keeping
            let e_lat = -sr * dx + cr * dy;
            let lane = 0.5 * self.track.lane_width() - cfg.lane_margin;
            let viol = e_lat.abs() - lane;
            if viol > 0.0 {
                pen += viol * viol;
                let g = 2.0 * rho * viol * e_lat.signum();
                gx[IX] += g * -sr;
                gx[IY] += g * cr;
                gx[IPSI] += g * (-sr * (-lf * sp) + cr * (lf * cp));
                gs += g * (-kappa * (cr * dx + sr * dy));
            }
            // longitudinal acceleration
            let tau = self.params.tau_velocity;
            let a_x = (x[IVREF] - x[IV]) / tau;
            let hi = a_x - (cfg.a_x_max - cfg.accel_margin);
            let lo = (cfg.a_x_min + cfg.accel_margin) - a_x;
            let da = if hi > 0.0 {
                pen += hi * hi;
                2.0 * rho * hi
            } else if lo > 0.0 {
                pen += lo * lo;
                -2.0 * rho * lo
            } else {
                0.0
            };
            gx[IVREF] += da / tau;
            gx[IV] -= da / tau;
            // lateral acceleration
            let viol = a_lat.abs() - (cfg.a_lat_max - cfg.a_lat_margin);
            if viol > 0.0 {
                pen += viol * viol;
                let g = 2.0 * rho * viol * a_lat.signum();
                gx[IV] += g * x[IR];
                gx[IR] += g * x[IV];
            }
            // speed ceiling
            let (ceiling, dceil) = self.envelope.eval(self.track, s);
            let viol = x[IV] - (ceiling - cfg.speed_margin);
            if viol > 0.0 {
                pen += viol * viol;
                gx[IV] += 2.0 * rho * viol;
                gs -= 2.0 * rho * viol * dceil;
            }
            if !self.track.is_closed() && s > self.track.s_max() {
                let viol = s - self.track.s_max();
                pen += viol * viol;
                gs += 2.0 * rho * viol;
            }
            val += rho * pen;
        }
        (val, gx, gs)
    }

    fn input_terms(&self, u: [f64; NU], th: f64, th_ref: f64) -> (f64, [f64; NU], f64) {
        let w = &self.config.weights;
        let d = th - th_ref;
        (
            w.r_a * u[0] * u[0] + w.r_omega * u[1] * u[1] + w.r_vartheta * d * d,
            [2.0 * w.r_a * u[0], 2.0 * w.r_omega * u[1]],
            2.0 * w.r_vartheta * d,
        )
    }

    fn rollout(&self, x0: &AugmentedState, z: &[f64], tape: Option<&mut Tape>) -> f64 {
        let cfg = self.config;
        let n = cfg.intervals;
        let m = cfg.prediction_substeps;
        let dt = cfg.interval();
        let h = dt / m as f64;
        let p = self.params;
        let mut x = x0.vehicle.to_array();
        let mut s = x0.s;
        let mut cost = 0.0;
        let mut tape = tape;
        if let Some(t) = tape.as_deref_mut() {
            t.clear();
        }
        for i in 0..n {
            let u = [z[3 * i], z[3 * i + 1]];
            let th = z[3 * i + 2];
            if let Some(t) = tape.as_deref_mut() {
                t.xs.push(x);
                t.ss.push(s);
            }
            let th_ref = self.track.speed_limit_extended(s);
            cost += dt * (self.state_terms(&x, s).0 + self.input_terms(u, th, th_ref).0);
            for _ in 0..m {
                let k1 = vehicle::rhs(&x, &u, p);
                let x2 = axpy(&x, &k1, 0.5 * h);
                let k2 = vehicle::rhs(&x2, &u, p);
                let x3 = axpy(&x, &k2, 0.5 * h);
                let k3 = vehicle::rhs(&x3, &u, p);
                let x4 = axpy(&x, &k3, h);
                let k4 = vehicle::rhs(&x4, &u, p);
                if let Some(t) = tape.as_deref_mut() {
                    t.stages.push([x, x2, x3, x4]);
                }
                for j in 0..NX {
                    x[j] += h / 6.0 * (k1[j] + 2.0 * k2[j] + 2.0 * k3[j] + k4[j]);
                }
                let mask = vehicle::project_state(&mut x, p);
                if let Some(t) = tape.as_deref_mut() {
                    t.masks.push(mask);
                }
            }
            s += th * dt;
        }
        if let Some(t) = tape.as_deref_mut() {
            t.xs.push(x);
            t.ss.push(s);
        }
        cost += self.state_terms(&x, s).0;
        if cost.is_finite() && x.iter().all(|v| v.is_finite()) {
            cost
        } else {
            f64::INFINITY
        }
    }

    /// Cost of a decision vector `[a_0, omega_0, vartheta_0, a_1, ...]`.
    pub fn cost(&self, x0: &AugmentedState, z: &[f64]) -> f64 {
        self.rollout(x0, z, None)
    }

    /// Cost and its exact gradient via the discrete adjoint of the rollout.
    pub fn cost_and_gradient(&self, x0: &AugmentedState, z: &[f64], grad: &mut [f64]) -> f64 {
        let mut tape = Tape::default();
        self.cost_and_gradient_with(x0, z, grad, &mut tape)
    }

    fn cost_and_gradient_with(
        &self,
        x0: &AugmentedState,
        z: &[f64],
        grad: &mut [f64],
        tape: &mut Tape,
    ) -> f64 {
        let cost = self.rollout(x0, z, Some(tape));
        grad.iter_mut().for_each(|g| *g = 0.0);
        if !cost.is_finite() {
            return cost;
        }
        let cfg = self.config;
        let n = cfg.intervals;
        let m = cfg.prediction_substeps;
        let dt = cfg.interval();
        let h = dt / m as f64;
        let p = self.params;

        let (_, gx, gs) = self.state_terms(&tape.xs[n], tape.ss[n]);
        let mut lx = gx;
        let mut ls = gs;
        for i in (0..n).rev() {
            let u = [z[3 * i], z[3 * i + 1]];
            let th = z[3 * i + 2];
            grad[3 * i + 2] += dt * ls;
            let mut gu = [0.0; NU];
            for j in (0..m).rev() {
                let idx = i * m + j;
                for (l, clamped) in lx.iter_mut().zip(tape.masks[idx]) {
                    if clamped {
                        *l = 0.0;
                    }
                }
                let [x1, x2, x3, x4] = &tape.stages[idx];
                let kb4 = lx.map(|l| h / 6.0 * l);
                let mut kb3 = lx.map(|l| h / 3.0 * l);
                let mut kb2 = lx.map(|l| h / 3.0 * l);
                let mut kb1 = kb4;
                let mut xb = lx;
                let mut back = |pt: &[f64; NX], kb: &[f64; NX], next: Option<(&mut [f64; NX], f64)>| {
                    let (jx, ju) = vehicle::rhs_jacobian(pt, &u, p);
                    let mut pb = [0.0; NX];
                    for r in 0..NX {
                        if kb[r] == 0.0 {
                            continue;
                        }
                        for c in 0..NX {
                            pb[c] += jx[r][c] * kb[r];
                        }
                        gu[0] += ju[r][0] * kb[r];
                        gu[1] += ju[r][1] * kb[r];
                    }
                    for c in 0..NX {
                        xb[c] += pb[c];
                    }
                    if let Some((k, scale)) = next {
                        for c in 0..NX {
                            k[c] += scale * pb[c];
                        }
                    }
                };
                back(x4, &kb4, Some((&mut kb3, h)));
                back(x3, &kb3, Some((&mut kb2, 0.5 * h)));
                back(x2, &kb2, Some((&mut kb1, 0.5 * h)));
                back(x1, &kb1, None);
                lx = xb;
            }
            let (_, gx, gs) = self.state_terms(&tape.xs[i], tape.ss[i]);
            let th_ref = self.track.speed_limit_extended(tape.ss[i]);
            let (_, du, dth) = self.input_terms(u, th, th_ref);
            for c in 0..NX {
                lx[c] += dt * gx[c];
            }
            ls += dt * gs;
            grad[3 * i] = gu[0] + dt * du[0];
            grad[3 * i + 1] = gu[1] + dt * du[1];
            grad[3 * i + 2] += dt * dth;
        }
        cost
    }

    fn initial_guess(&self, x0: &AugmentedState) -> Vec<f64> {
        let th = x0.vehicle.v.clamp(0.0, self.vartheta_max);
        (0..self.config.intervals).flat_map(|_| [0.0, 0.0, th]).collect()
    }
}

fn axpy(a: &[f64; NX], k: &[f64; NX], s: f64) -> [f64; NX] {
    let mut out = *a;
    for (o, ki) in out.iter_mut().zip(k) {
        *o += s * ki;
    }
    out
}

#[derive(Default)]
struct Tape {
    xs: Vec<[f64; NX]>,
    ss: Vec<f64>,
    stages: Vec<[[f64; NX]; 4]>,
    masks: Vec<[bool; NX]>,
}

impl Tape {
    fn clear(&mut self) {
        self.xs.clear();
        self.ss.clear();
        self.stages.clear();
        self.masks.clear();
    }
}

/// Cost `J` of given input trajectories from `x0`; non-finite rollouts give `+inf`.
pub fn trajectory_cost(
    x0: &AugmentedState,
    inputs: &[ControlInput],
    vartheta: &[f64],
    config: &ControllerConfig,
    params: &VehicleParams,
    track: &Track,
) -> Result<f64> {
    if inputs.len() != config.intervals || vartheta.len() != config.intervals {
        return Err(Error::InvalidArgument(format!(
            "expected {} intervals, got {} inputs and {} path velocities",
            config.intervals,
            inputs.len(),
            vartheta.len()
        )));
    }
    let z: Vec<f64> =
        inputs.iter().zip(vartheta).flat_map(|(u, th)| [u.a_ref, u.omega_s_ref, *th]).collect();
    Ok(OcpContext::new(config, params, track).cost(x0, &z))
}

/// Projected BFGS on the box-constrained shooting problem.
fn minimize(ctx: &OcpContext, x0: &AugmentedState, z0: Vec<f64>) -> OcpSolution {
    let cfg = ctx.config;
    let nz = z0.len();
    let (lo, hi) = ctx.bounds();
    let mut z = z0;
    ctx.project(&mut z);
    let mut tape = Tape::default();
    let mut g = vec![0.0; nz];
    let mut cost = ctx.cost_and_gradient_with(x0, &z, &mut g, &mut tape);
    if !cost.is_finite() {
        return OcpSolution::from_decision(&z, cost, SolverStatus::InfeasibleStart, 0);
    }
    let mut hinv = identity(nz);
    let mut fresh = true;
    let mut g_new = vec![0.0; nz];
    let mut trial = vec![0.0; nz];
    let mut d = vec![0.0; nz];
    let mut free = vec![true; nz];
    let mut status = SolverStatus::IterationCap;
    let mut iterations = 0;

    for it in 0..cfg.max_iterations {
        iterations = it + 1;
        // projected-gradient optimality measure
        let mut pg = 0.0f64;
        for i in 0..nz {
            let (l, u) = (lo[i % 3], hi[i % 3]);
            let step = (z[i] - g[i]).clamp(l, u) - z[i];
            pg = pg.max(step.abs());
            let eps = 1e-9 * (1.0 + (u - l).abs());
            free[i] = !((z[i] <= l + eps && g[i] > 0.0) || (z[i] >= u - eps && g[i] < 0.0));
        }
        if pg <= cfg.tolerance * (1.0 + cost.abs()) {
            status = SolverStatus::Converged;
            break;
        }
        let mut accepted = false;
        for attempt in 0..2 {
            for i in 0..nz {
                d[i] = 0.0;
                if !free[i] {
                    continue;
                }
                let mut acc = 0.0;
                for j in 0..nz {
                    if free[j] {
                        acc += hinv[i * nz + j] * g[j];
                    }
                }
                d[i] = -acc;
            }
            let slope: f64 = d.iter().zip(&g).map(|(a, b)| a * b).sum();
            if !(slope < 0.0) {
                hinv = identity(nz);
                fresh = true;
                for i in 0..nz {
                    d[i] = if free[i] { -g[i] } else { 0.0 };
                }
            }
            let mut alpha = 1.0;
            for _ in 0..30 {
                for i in 0..nz {
                    trial[i] = (z[i] + alpha * d[i]).clamp(lo[i % 3], hi[i % 3]);
                }
                let c = ctx.cost(x0, &trial);
                let decrease: f64 = g.iter().zip(trial.iter().zip(&z)).map(|(gi, (t, zi))| gi * (t - zi)).sum();
                if c.is_finite() && c <= cost + 1e-4 * decrease {
                    accepted = true;
                    break;
                }
                alpha *= 0.5;
            }
            if accepted || attempt == 1 || fresh {
                break;
            }
            hinv = identity(nz);
            fresh = true;
        }
        if !accepted {
            status = SolverStatus::Converged;
            break;
        }
        let new_cost = ctx.cost_and_gradient_with(x0, &trial, &mut g_new, &mut tape);
        let sv: Vec<f64> = trial.iter().zip(&z).map(|(a, b)| a - b).collect();
        let yv: Vec<f64> = g_new.iter().zip(&g).map(|(a, b)| a - b).collect();
        let sy: f64 = sv.iter().zip(&yv).map(|(a, b)| a * b).sum();
        let yy: f64 = yv.iter().map(|a| a * a).sum();
        let ss: f64 = sv.iter().map(|a| a * a).sum();
        if sy > 1e-12 * (ss * yy).sqrt() && sy > 0.0 {
            if fresh {
                let scale = sy / yy;
                hinv.iter_mut().for_each(|v| *v *= scale);
                fresh = false;
            }
            bfgs_update(&mut hinv, &sv, &yv, sy, nz);
        }
        let improvement = cost - new_cost;
        std::mem::swap(&mut z, &mut trial);
        std::mem::swap(&mut g, &mut g_new);
        cost = new_cost;
        if improvement <= 1e-12 * (1.0 + cost.abs()) {
            status = SolverStatus::Converged;
            break;
        }
    }
    OcpSolution::from_decision(&z, cost, status, iterations)
}

fn identity(n: usize) -> Vec<f64> {
    let mut m = vec![0.0; n * n];
    for i in 0..n {
        m[i * n + i] = 1.0;
    }
    m
}

/// Inverse-Hessian BFGS update `H <- (I - rho s y^T) H (I - rho y s^T) + rho s s^T`.
fn bfgs_update(h: &mut [f64], s: &[f64], y: &[f64], sy: f64, n: usize) {
    let rho = 1.0 / sy;
    let hy: Vec<f64> = (0..n).map(|i| (0..n).map(|j| h[i * n + j] * y[j]).sum()).collect();
    let yhy: f64 = y.iter().zip(&hy).map(|(a, b)| a * b).sum();
    let coef = rho * rho * yhy + rho;
    for i in 0..n {
        for j in 0..n {
            h[i * n + j] += -rho * (hy[i] * s[j] + s[i] * hy[j]) + coef * s[i] * s[j];
        }
    }
}

/// Approximately minimizes the trajectory cost from `x0`.
pub fn solve_ocp(
    x0: &AugmentedState,
    config: &ControllerConfig,
    params: &VehicleParams,
    track: &Track,
    warm_start: Option<&OcpSolution>,
) -> OcpSolution {
    let ctx = OcpContext::new(config, params, track);
    solve_with(&ctx, x0, warm_start)
}

fn solve_with(ctx: &OcpContext, x0: &AugmentedState, warm_start: Option<&OcpSolution>) -> OcpSolution {
    let z0 = match warm_start {
        Some(ws) if ws.inputs.len() == ctx.config.intervals && ws.status != SolverStatus::InfeasibleStart => {
            ws.to_decision()
        }
        _ => ctx.initial_guess(x0),
    };
    minimize(ctx, x0, z0)
}

/// One receding-horizon step: the first-interval input, the path velocity
/// driving `s' = vartheta`, and the full solution.
pub fn mpc_step(
    x0: &AugmentedState,
    config: &ControllerConfig,
    params: &VehicleParams,
    track: &Track,
    prev: Option<&OcpSolution>,
) -> Result<(ControlInput, f64, OcpSolution)> {
    let warm = prev.map(OcpSolution::shifted);
    let sol = solve_ocp(x0, config, params, track, warm.as_ref());
    if sol.status == SolverStatus::InfeasibleStart {
        return Err(Error::NonFinite("initial rollout of the optimal control problem"));
    }
    Ok((sol.inputs[0], sol.vartheta[0], sol))
}

/// Stateful controller keeping its warm start between calls.
pub struct Controller<'a> {
    ctx: OcpContext<'a>,
    previous: Option<OcpSolution>,
}

impl<'a> Controller<'a> {
    pub fn new(config: &'a ControllerConfig, params: &'a VehicleParams, track: &'a Track) -> Self {
        Self { ctx: OcpContext::new(config, params, track), previous: None }
    }

    pub fn step(&mut self, x0: &AugmentedState) -> Result<(ControlInput, f64, &OcpSolution)> {
        let warm = self.previous.as_ref().map(OcpSolution::shifted);
        let sol = solve_with(&self.ctx, x0, warm.as_ref());
        if sol.status == SolverStatus::InfeasibleStart {
            self.previous = None;
            return Err(Error::NonFinite("initial rollout of the optimal control problem"));
        }
        let prev = self.previous.insert(sol);
        Ok((prev.inputs[0], prev.vartheta[0], prev))
    }
}
