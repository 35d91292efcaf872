//! Nine-state single-track vehicle model with actuator tracking lags.
//!
//! The state is ordered `[x, y, psi, psi_dot, beta, v, v_ref, delta_s, delta_s_ref]`
//! and the input `[a_ref, omega_s_ref]`. Lateral dynamics use linear tire forces;
//! below `v_min` the model falls back to kinematic bicycle relations, with a
//! linear blend between `v_min` and `v_blend` so the right-hand side stays
//! continuous and the lateral modes stay non-stiff at low speed.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const NX: usize = 9;
pub const NU: usize = 2;

pub const IX: usize = 0;
pub const IY: usize = 1;
pub const IPSI: usize = 2;
pub const IR: usize = 3;
pub const IBETA: usize = 4;
pub const IV: usize = 5;
pub const IVREF: usize = 6;
pub const IDS: usize = 7;
pub const IDSREF: usize = 8;

pub const GRAVITY: f64 = 9.81;

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct VehicleState {
    pub x: f64,
    pub y: f64,
    pub psi: f64,
    pub psi_dot: f64,
    pub beta: f64,
    pub v: f64,
    pub v_ref: f64,
    pub delta_s: f64,
    pub delta_s_ref: f64,
}

/// Time derivative of a [`VehicleState`], same component layout.
pub type VehicleStateDerivative = VehicleState;

impl VehicleState {
    pub fn to_array(&self) -> [f64; NX] {
        [
            self.x,
            self.y,
            self.psi,
            self.psi_dot,
            self.beta,
            self.v,
            self.v_ref,
            self.delta_s,
            self.delta_s_ref,
        ]
    }

    pub fn from_array(a: &[f64; NX]) -> Self {
        Self {
            x: a[IX],
            y: a[IY],
            psi: a[IPSI],
            psi_dot: a[IR],
            beta: a[IBETA],
            v: a[IV],
            v_ref: a[IVREF],
            delta_s: a[IDS],
            delta_s_ref: a[IDSREF],
        }
    }

    pub fn is_finite(&self) -> bool {
        self.to_array().iter().all(|v| v.is_finite())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct ControlInput {
    pub a_ref: f64,
    pub omega_s_ref: f64,
}

impl ControlInput {
    pub fn new(a_ref: f64, omega_s_ref: f64) -> Self {
        Self { a_ref, omega_s_ref }
    }

    pub fn to_array(&self) -> [f64; NU] {
        [self.a_ref, self.omega_s_ref]
    }

    pub fn is_finite(&self) -> bool {
        self.a_ref.is_finite() && self.omega_s_ref.is_finite()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VehicleOutput {
    pub x_f: f64,
    pub y_f: f64,
    pub psi: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct VehicleParams {
    /// kg
    pub mass: f64,
    /// kg m^2
    pub yaw_inertia: f64,
    /// CoG to front axle, m
    pub lf: f64,
    /// CoG to rear axle, m
    pub lr: f64,
    /// N/rad
    pub cornering_front: f64,
    /// N/rad
    pub cornering_rear: f64,
    /// steering wheel angle / road wheel angle
    pub steering_ratio: f64,
    pub tau_velocity: f64,
    pub tau_steering: f64,
    /// below this speed the lateral dynamics are purely kinematic
    pub v_min: f64,
    /// above this speed the lateral dynamics are purely dynamic
    pub v_blend: f64,
    /// relaxation time of beta and yaw rate towards the kinematic values
    pub tau_kinematic: f64,
    pub a_ref_min: f64,
    pub a_ref_max: f64,
    pub omega_s_ref_max: f64,
    pub v_ref_max: f64,
    pub steering_wheel_max: f64,
}

impl Default for VehicleParams {
    fn default() -> Self {
        Self {
            mass: 1500.0,
            yaw_inertia: 2500.0,
            lf: 1.2,
            lr: 1.4,
            cornering_front: 80_000.0,
            cornering_rear: 80_000.0,
            steering_ratio: 15.0,
            tau_velocity: 0.5,
            tau_steering: 0.2,
            v_min: 0.5,
            v_blend: 3.0,
            tau_kinematic: 0.1,
            a_ref_min: -4.0,
            a_ref_max: 3.0,
            omega_s_ref_max: 4.0,
            v_ref_max: 20.0,
            steering_wheel_max: 7.5,
        }
    }
}

impl VehicleParams {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("mass", self.mass),
            ("yaw_inertia", self.yaw_inertia),
            ("cornering_front", self.cornering_front),
            ("cornering_rear", self.cornering_rear),
            ("steering_ratio", self.steering_ratio),
            ("tau_velocity", self.tau_velocity),
            ("tau_steering", self.tau_steering),
            ("v_min", self.v_min),
            ("tau_kinematic", self.tau_kinematic),
            ("omega_s_ref_max", self.omega_s_ref_max),
            ("v_ref_max", self.v_ref_max),
            ("steering_wheel_max", self.steering_wheel_max),
        ];
        for (name, value) in positive {
            if !(value.is_finite() && value > 0.0) {
                return Err(Error::InvalidArgument(format!(
                    "vehicle parameter {name} must be positive, got {value}"
                )));
            }
        }
        if !(self.lf >= 0.0 && self.lr >= 0.0 && self.lf + self.lr > 0.0) {
            return Err(Error::InvalidArgument(
                "axle distances must satisfy lf, lr >= 0 and lf + lr > 0".into(),
            ));
        }
        if self.v_blend <= self.v_min {
            return Err(Error::InvalidArgument("v_blend must exceed v_min".into()));
        }
        if !(self.a_ref_min < 0.0 && self.a_ref_max > 0.0) {
            return Err(Error::InvalidArgument(
                "acceleration input bounds must bracket zero".into(),
            ));
        }
        Ok(())
    }

    pub fn wheelbase(&self) -> f64 {
        self.lf + self.lr
    }

    pub fn clamp_input(&self, u: [f64; NU]) -> [f64; NU] {
        [
            u[0].clamp(self.a_ref_min, self.a_ref_max),
            u[1].clamp(-self.omega_s_ref_max, self.omega_s_ref_max),
        ]
    }

    fn blend_weight(&self, v: f64) -> (f64, f64) {
        let width = self.v_blend - self.v_min;
        if v <= self.v_min {
            (0.0, 0.0)
        } else if v >= self.v_blend {
            (1.0, 0.0)
        } else {
            ((v - self.v_min) / width, 1.0 / width)
        }
    }
}

/// Saturating integrator: the reference cannot be driven past its box.
fn saturated_rate(value: f64, rate: f64, lo: f64, hi: f64) -> (f64, f64) {
    if (value <= lo && rate < 0.0) || (value >= hi && rate > 0.0) {
        (0.0, 0.0)
    } else {
        (rate, 1.0)
    }
}

/// Unchecked right-hand side `f(x, u)`.
pub fn rhs(x: &[f64; NX], u: &[f64; NU], p: &VehicleParams) -> [f64; NX] {
    let psi = x[IPSI];
    let r = x[IR];
    let beta = x[IBETA];
    let v = x[IV];
    let delta = x[IDS] / p.steering_ratio;
    let (w, _) = p.blend_weight(v);

    let mut d = [0.0; NX];
    let (s, c) = (psi + beta).sin_cos();
    d[IX] = v * c;
    d[IY] = v * s;
    d[IPSI] = r;

    let (mut beta_dot, mut r_dot) = (0.0, 0.0);
    if w > 0.0 {
        let alpha_f = delta - beta - p.lf * r / v;
        let alpha_r = -beta + p.lr * r / v;
        let ff = p.cornering_front * alpha_f;
        let fr = p.cornering_rear * alpha_r;
        beta_dot += w * ((ff + fr) / (p.mass * v) - r);
        r_dot += w * (p.lf * ff - p.lr * fr) / p.yaw_inertia;
    }
    if w < 1.0 {
        let l = p.wheelbase();
        let t = delta.tan();
        let beta_k = (p.lr * t / l).atan();
        let r_k = v * beta_k.cos() * t / l;
        beta_dot += (1.0 - w) * (beta_k - beta) / p.tau_kinematic;
        r_dot += (1.0 - w) * (r_k - r) / p.tau_kinematic;
    }
    d[IR] = r_dot;
    d[IBETA] = beta_dot;

    d[IV] = (x[IVREF] - v) / p.tau_velocity;
    d[IVREF] = saturated_rate(x[IVREF], u[0], 0.0, p.v_ref_max).0;
    d[IDS] = (x[IDSREF] - x[IDS]) / p.tau_steering;
    d[IDSREF] = saturated_rate(
        x[IDSREF],
        u[1],
        -p.steering_wheel_max,
        p.steering_wheel_max,
    )
    .0;
    d
}

/// Row-major Jacobians `(df/dx, df/du)` of [`rhs`].
pub fn rhs_jacobian(
    x: &[f64; NX],
    u: &[f64; NU],
    p: &VehicleParams,
) -> ([[f64; NX]; NX], [[f64; NU]; NX]) {
    let mut jx = [[0.0; NX]; NX];
    let mut ju = [[0.0; NU]; NX];
    let psi = x[IPSI];
    let r = x[IR];
    let beta = x[IBETA];
    let v = x[IV];
    let ratio = p.steering_ratio;
    let delta = x[IDS] / ratio;
    let (w, dw) = p.blend_weight(v);

    let (s, c) = (psi + beta).sin_cos();
    jx[IX][IPSI] = -v * s;
    jx[IX][IBETA] = -v * s;
    jx[IX][IV] = c;
    jx[IY][IPSI] = v * c;
    jx[IY][IBETA] = v * c;
    jx[IY][IV] = s;
    jx[IPSI][IR] = 1.0;

    let (mut beta_dyn, mut r_dyn) = (0.0, 0.0);
    if w > 0.0 {
        let (m, iz) = (p.mass, p.yaw_inertia);
        let (cf, cr, lf, lr) = (p.cornering_front, p.cornering_rear, p.lf, p.lr);
        let alpha_f = delta - beta - lf * r / v;
        let alpha_r = -beta + lr * r / v;
        let n = cf * alpha_f + cr * alpha_r;
        beta_dyn = n / (m * v) - r;
        r_dyn = (lf * cf * alpha_f - lr * cr * alpha_r) / iz;

        let dn_dv = (cf * lf - cr * lr) * r / (v * v);
        jx[IBETA][IBETA] += w * (-(cf + cr) / (m * v));
        jx[IBETA][IR] += w * ((cr * lr - cf * lf) / (m * v * v) - 1.0);
        jx[IBETA][IDS] += w * cf / (m * v * ratio);
        jx[IBETA][IV] += w * (dn_dv / (m * v) - n / (m * v * v));

        jx[IR][IBETA] += w * (lr * cr - lf * cf) / iz;
        jx[IR][IR] += w * (-(lf * lf * cf + lr * lr * cr) / (v * iz));
        jx[IR][IDS] += w * lf * cf / (iz * ratio);
        jx[IR][IV] += w * (lf * lf * cf + lr * lr * cr) * r / (v * v * iz);
    }
    let (mut beta_kin, mut r_kin) = (0.0, 0.0);
    if w < 1.0 {
        let l = p.wheelbase();
        let tk = p.tau_kinematic;
        let t = delta.tan();
        let sec2 = 1.0 + t * t;
        let q = p.lr * t / l;
        let beta_k = q.atan();
        let dbeta_k = (p.lr / l) * sec2 / (1.0 + q * q);
        let (sb, cb) = beta_k.sin_cos();
        let r_k = v * cb * t / l;
        beta_kin = (beta_k - beta) / tk;
        r_kin = (r_k - r) / tk;

        let wk = 1.0 - w;
        jx[IBETA][IBETA] += wk * (-1.0 / tk);
        jx[IBETA][IDS] += wk * dbeta_k / (tk * ratio);
        jx[IR][IR] += wk * (-1.0 / tk);
        jx[IR][IV] += wk * cb * t / (l * tk);
        jx[IR][IDS] += wk * v * (-sb * dbeta_k * t + cb * sec2) / (l * tk * ratio);
    }
    if dw != 0.0 {
        jx[IBETA][IV] += dw * (beta_dyn - beta_kin);
        jx[IR][IV] += dw * (r_dyn - r_kin);
    }

    jx[IV][IV] = -1.0 / p.tau_velocity;
    jx[IV][IVREF] = 1.0 / p.tau_velocity;
    jx[IDS][IDS] = -1.0 / p.tau_steering;
    jx[IDS][IDSREF] = 1.0 / p.tau_steering;
    ju[IVREF][0] = saturated_rate(x[IVREF], u[0], 0.0, p.v_ref_max).1;
    ju[IDSREF][1] = saturated_rate(
        x[IDSREF],
        u[1],
        -p.steering_wheel_max,
        p.steering_wheel_max,
    )
    .1;
    (jx, ju)
}

/// `ẋ = f(x, u)` with input validation.
pub fn derivative(
    state: &VehicleState,
    input: &ControlInput,
    params: &VehicleParams,
) -> Result<VehicleStateDerivative> {
    if !state.is_finite() {
        return Err(Error::NonFinite("vehicle state"));
    }
    if !input.is_finite() {
        return Err(Error::NonFinite("control input"));
    }
    Ok(VehicleState::from_array(&rhs(
        &state.to_array(),
        &input.to_array(),
        params,
    )))
}

/// Front-axle midpoint and heading.
pub fn output(state: &VehicleState, params: &VehicleParams) -> VehicleOutput {
    let (s, c) = state.psi.sin_cos();
    VehicleOutput {
        x_f: state.x + params.lf * c,
        y_f: state.y + params.lf * s,
        psi: state.psi,
    }
}

/// Approximate lateral acceleration `v * psi_dot`.
pub fn lateral_acceleration(state: &VehicleState) -> f64 {
    state.v * state.psi_dot
}

/// One classical fourth-order Runge–Kutta step of `y' = f(y)`.
pub fn rk4<const N: usize>(y: &[f64; N], h: f64, f: impl Fn(&[f64; N]) -> [f64; N]) -> [f64; N] {
    let axpy = |a: &[f64; N], k: &[f64; N], s: f64| {
        let mut out = *a;
        for (o, ki) in out.iter_mut().zip(k) {
            *o += s * ki;
        }
        out
    };
    let k1 = f(y);
    let k2 = f(&axpy(y, &k1, 0.5 * h));
    let k3 = f(&axpy(y, &k2, 0.5 * h));
    let k4 = f(&axpy(y, &k3, h));
    let mut out = *y;
    for i in 0..N {
        out[i] += h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
    }
    out
}

/// Keeps the saturating states inside their boxes after a discrete step.
/// Returns a mask of the components that were clamped.
pub(crate) fn project_state(x: &mut [f64; NX], p: &VehicleParams) -> [bool; NX] {
    let mut clamped = [false; NX];
    let mut clamp = |i: usize, lo: f64, hi: f64| {
        if x[i] < lo {
            x[i] = lo;
            clamped[i] = true;
        } else if x[i] > hi {
            x[i] = hi;
            clamped[i] = true;
        }
    };
    clamp(IV, 0.0, f64::INFINITY);
    clamp(IVREF, 0.0, p.v_ref_max);
    clamp(IDSREF, -p.steering_wheel_max, p.steering_wheel_max);
    clamp(IDS, -p.steering_wheel_max, p.steering_wheel_max);
    clamped
}

pub(crate) fn step_raw(x: &[f64; NX], u: &[f64; NU], p: &VehicleParams, dt: f64) -> [f64; NX] {
    let mut next = rk4(x, dt, |y| rhs(y, u, p));
    project_state(&mut next, p);
    next
}

/// Advances the plant by `dt` seconds with one RK4 step.
pub fn step_rk4(
    state: &VehicleState,
    input: &ControlInput,
    params: &VehicleParams,
    dt: f64,
) -> Result<VehicleState> {
    if !(dt > 0.0 && dt.is_finite()) {
        return Err(Error::InvalidArgument(format!("step size must be positive, got {dt}")));
    }
    if !state.is_finite() {
        return Err(Error::NonFinite("vehicle state"));
    }
    if !input.is_finite() {
        return Err(Error::NonFinite("control input"));
    }
    let next = step_raw(&state.to_array(), &input.to_array(), params, dt);
    if next.iter().any(|v| !v.is_finite()) {
        return Err(Error::IntegrationFailure);
    }
    Ok(VehicleState::from_array(&next))
}
