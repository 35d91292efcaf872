//! Arc-length parameterized reference path built from straight and
//! constant-curvature segments.

use std::f64::consts::{FRAC_PI_2, PI, TAU};
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::vehicle::VehicleOutput;

const CLOSURE_TOL: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SegmentKind {
    Straight,
    Arc,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Segment {
    pub kind: SegmentKind,
    /// m
    pub length: f64,
    /// signed, 1/m; positive turns left
    #[serde(default)]
    pub curvature: f64,
    /// m/s
    pub v_lim: f64,
}

impl Segment {
    pub fn straight(length: f64, v_lim: f64) -> Self {
        Self { kind: SegmentKind::Straight, length, curvature: 0.0, v_lim }
    }

    pub fn arc(length: f64, curvature: f64, v_lim: f64) -> Self {
        Self { kind: SegmentKind::Arc, length, curvature, v_lim }
    }

    fn kappa(&self) -> f64 {
        match self.kind {
            SegmentKind::Straight => 0.0,
            SegmentKind::Arc => self.curvature,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrackSpec {
    pub lane_width: f64,
    #[serde(default = "default_closed")]
    pub closed: bool,
    /// start pose `[x, y, heading]`
    #[serde(default)]
    pub start: [f64; 3],
    pub segments: Vec<Segment>,
}

fn default_closed() -> bool {
    true
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PathPoint {
    pub x_ref: f64,
    pub y_ref: f64,
    /// continuous (unwrapped) tangent angle
    pub psi_ref: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PathDeviation {
    /// `(dx_f, dy_f, dpsi)`, heading difference wrapped to (-pi, pi]
    pub e: [f64; 3],
    /// signed lateral offset, left of the path positive
    pub e_lat: f64,
}

/// Wraps an angle to (-pi, pi].
pub fn wrap_angle(a: f64) -> f64 {
    let w = (a + PI).rem_euclid(TAU) - PI;
    if w <= -PI {
        w + TAU
    } else {
        w
    }
}

fn advance(pose: [f64; 3], kappa: f64, d: f64) -> [f64; 3] {
    let [x, y, psi] = pose;
    if kappa.abs() < 1e-12 {
        let (s, c) = psi.sin_cos();
        [x + d * c, y + d * s, psi]
    } else {
        let psi1 = psi + kappa * d;
        [
            x + (psi1.sin() - psi.sin()) / kappa,
            y - (psi1.cos() - psi.cos()) / kappa,
            psi1,
        ]
    }
}

/// Validated track with precomputed segment start poses.
#[derive(Debug, Clone)]
pub struct Track {
    spec: TrackSpec,
    starts: Vec<f64>,
    poses: Vec<[f64; 3]>,
    s_max: f64,
}

impl Track {
    pub fn new(spec: TrackSpec) -> Result<Self> {
        if spec.segments.is_empty() {
            return Err(Error::InvalidTrack("no segments".into()));
        }
        if !(spec.lane_width > 0.0 && spec.lane_width.is_finite()) {
            return Err(Error::InvalidTrack("lane width must be positive".into()));
        }
        if !spec.start.iter().all(|v| v.is_finite()) {
            return Err(Error::InvalidTrack("non-finite start pose".into()));
        }
        let mut starts = Vec::with_capacity(spec.segments.len());
        let mut poses = Vec::with_capacity(spec.segments.len());
        let mut s = 0.0;
        let mut pose = spec.start;
        for (i, seg) in spec.segments.iter().enumerate() {
            if !(seg.length > 0.0 && seg.length.is_finite()) {
                return Err(Error::InvalidTrack(format!("segment {i}: length must be positive")));
            }
            if !(seg.v_lim > 0.0 && seg.v_lim.is_finite()) {
                return Err(Error::InvalidTrack(format!("segment {i}: speed limit must be positive")));
            }
            if !seg.curvature.is_finite() {
                return Err(Error::InvalidTrack(format!("segment {i}: non-finite curvature")));
            }
            if seg.kind == SegmentKind::Arc && seg.curvature == 0.0 {
                return Err(Error::InvalidTrack(format!("segment {i}: arc with zero curvature")));
            }
            starts.push(s);
            poses.push(pose);
            s += seg.length;
            pose = advance(pose, seg.kappa(), seg.length);
        }
        if spec.closed {
            let [x0, y0, h0] = spec.start;
            let gap = ((pose[0] - x0).powi(2) + (pose[1] - y0).powi(2)).sqrt();
            if gap > CLOSURE_TOL {
                return Err(Error::InvalidTrack(format!("loop does not close: end gap {gap:e} m")));
            }
            let turns = (pose[2] - h0) / TAU;
            if (turns - turns.round()).abs() * TAU > 1e-6 || turns.round() == 0.0 {
                return Err(Error::InvalidTrack(format!(
                    "loop heading change {} rad is not a nonzero multiple of 2pi",
                    pose[2] - h0
                )));
            }
        }
        Ok(Self { spec, starts, poses, s_max: s })
    }

    pub fn spec(&self) -> &TrackSpec {
        &self.spec
    }

    pub fn s_max(&self) -> f64 {
        self.s_max
    }

    pub fn lane_width(&self) -> f64 {
        self.spec.lane_width
    }

    pub fn is_closed(&self) -> bool {
        self.spec.closed
    }

    pub fn segments(&self) -> &[Segment] {
        &self.spec.segments
    }

    /// Start arc-length of every segment.
    pub fn segment_starts(&self) -> &[f64] {
        &self.starts
    }

    fn check_range(&self, s: f64) -> Result<()> {
        if s.is_finite() && (0.0..=self.s_max).contains(&s) {
            Ok(())
        } else {
            Err(Error::OutOfRange { s, s_max: self.s_max })
        }
    }

    /// Index of the segment containing `s` (left-closed); `s_max` maps to the last one.
    pub fn segment_index(&self, s: f64) -> usize {
        let idx = self.starts.partition_point(|&st| st <= s);
        idx.saturating_sub(1).min(self.starts.len() - 1)
    }

    /// Maps any path parameter into `[0, s_max]`: wraps on closed loops,
    /// clamps on open tracks.
    pub fn normalize_s(&self, s: f64) -> f64 {
        if self.spec.closed {
            let w = s.rem_euclid(self.s_max);
            if w >= self.s_max {
                0.0
            } else {
                w
            }
        } else {
            s.clamp(0.0, self.s_max)
        }
    }

    /// Pose and curvature at any `s`; closed loops wrap, open tracks extrapolate
    /// along the end tangents. The heading gains `2pi * laps` on closed loops so
    /// it stays continuous in `s`.
    pub fn pose_extended(&self, s: f64) -> ([f64; 3], f64) {
        if self.spec.closed {
            let laps = (s / self.s_max).floor();
            let local = s - laps * self.s_max;
            let (mut pose, kappa) = self.pose_local(local.clamp(0.0, self.s_max));
            pose[2] += laps * (self.poses_end_heading() - self.spec.start[2]);
            (pose, kappa)
        } else if s < 0.0 {
            (advance(self.spec.start, 0.0, s), 0.0)
        } else if s > self.s_max {
            let (end, _) = self.pose_local(self.s_max);
            (advance(end, 0.0, s - self.s_max), 0.0)
        } else {
            self.pose_local(s)
        }
    }

    fn poses_end_heading(&self) -> f64 {
        let last = self.spec.segments.len() - 1;
        let seg = &self.spec.segments[last];
        self.poses[last][2] + seg.kappa() * seg.length
    }

    fn pose_local(&self, s: f64) -> ([f64; 3], f64) {
        let k = self.segment_index(s);
        let seg = &self.spec.segments[k];
        let d = (s - self.starts[k]).min(seg.length);
        (advance(self.poses[k], seg.kappa(), d), seg.kappa())
    }

    /// Curvature at `s` (extended like [`Track::pose_extended`]).
    pub fn curvature(&self, s: f64) -> f64 {
        self.pose_extended(s).1
    }

    pub fn eval_path(&self, s: f64) -> Result<PathPoint> {
        self.check_range(s)?;
        let ([x_ref, y_ref, psi_ref], _) = self.pose_local(s);
        Ok(PathPoint { x_ref, y_ref, psi_ref })
    }

    pub fn speed_limit(&self, s: f64) -> Result<f64> {
        self.check_range(s)?;
        Ok(self.spec.segments[self.segment_index(s)].v_lim)
    }

    /// Speed limit at any `s`, wrapping/clamping like [`Track::normalize_s`].
    pub fn speed_limit_extended(&self, s: f64) -> f64 {
        self.spec.segments[self.segment_index(self.normalize_s(s))].v_lim
    }

    pub fn max_speed_limit(&self) -> f64 {
        self.spec.segments.iter().map(|s| s.v_lim).fold(0.0, f64::max)
    }

    /// Nominal lap time when driving exactly at the speed limit.
    pub fn nominal_lap_time(&self) -> f64 {
        self.spec.segments.iter().map(|s| s.length / s.v_lim).sum()
    }

    pub fn path_deviation(&self, out: &VehicleOutput, s: f64) -> Result<PathDeviation> {
        self.check_range(s)?;
        let ([xr, yr, psir], _) = self.pose_local(s);
        Ok(deviation_at(out, [xr, yr, psir]))
    }

    /// Foot point of `(x, y)` on the centerline, searched among segments that
    /// overlap `[s_guess - window, s_guess + window]`. Returns the normalized `s`.
    pub fn project(&self, x: f64, y: f64, s_guess: f64, window: f64) -> f64 {
        let n = self.spec.segments.len();
        let guess = self.normalize_s(s_guess);
        let mut best = (f64::INFINITY, f64::INFINITY, guess);
        let mut consider = |k: usize| {
            let seg = &self.spec.segments[k];
            let d = foot_on_segment(self.poses[k], seg.kappa(), seg.length, x, y);
            let p = advance(self.poses[k], seg.kappa(), d);
            let dist2 = (p[0] - x).powi(2) + (p[1] - y).powi(2);
            let s = self.starts[k] + d;
            let along = {
                let raw = (s - guess).abs();
                if self.spec.closed {
                    raw.min(self.s_max - raw)
                } else {
                    raw
                }
            };
            if dist2 < best.0 - 1e-12 || ((dist2 - best.0).abs() <= 1e-12 && along < best.1) {
                best = (dist2, along, self.normalize_s(s));
            }
        };
        if window >= self.s_max {
            (0..n).for_each(&mut consider);
        } else {
            let k0 = self.segment_index(guess);
            consider(k0);
            // walk forward and backward until the window is covered
            let mut covered = self.starts[k0] + self.spec.segments[k0].length - guess;
            let mut k = k0;
            while covered < window {
                k = (k + 1) % n;
                if !self.spec.closed && k == 0 {
                    break;
                }
                consider(k);
                covered += self.spec.segments[k].length;
            }
            let mut covered = guess - self.starts[k0];
            let mut k = k0;
            while covered < window {
                if k == 0 {
                    if !self.spec.closed {
                        break;
                    }
                    k = n;
                }
                k -= 1;
                consider(k);
                covered += self.spec.segments[k].length;
            }
        }
        best.2
    }

    /// Deviation and lateral error measured from the foot point near `s_guess`.
    pub fn lateral_error(&self, out: &VehicleOutput, s_guess: f64) -> (f64, PathDeviation) {
        let s = self.project(out.x_f, out.y_f, s_guess, 30.0);
        let (pose, _) = self.pose_local(s);
        (s, deviation_at(out, pose))
    }

    pub fn to_text(&self) -> String {
        track_to_text(&self.spec)
    }

    /// Closed loop of straights (13.9 m/s) and left/right arcs with radii
    /// 15–30 m (8.3 m/s), lane width 3.5 m, about 1 km long.
    pub fn default_loop() -> Self {
        build_default_loop()
    }
}

pub(crate) fn deviation_at(out: &VehicleOutput, pose: [f64; 3]) -> PathDeviation {
    let [xr, yr, psir] = pose;
    let dx = out.x_f - xr;
    let dy = out.y_f - yr;
    let (s, c) = psir.sin_cos();
    PathDeviation {
        e: [dx, dy, wrap_angle(out.psi - psir)],
        e_lat: -s * dx + c * dy,
    }
}

fn foot_on_segment(pose: [f64; 3], kappa: f64, length: f64, x: f64, y: f64) -> f64 {
    let [x0, y0, psi0] = pose;
    if kappa.abs() < 1e-12 {
        let (s, c) = psi0.sin_cos();
        return ((x - x0) * c + (y - y0) * s).clamp(0.0, length);
    }
    let r = 1.0 / kappa;
    let cx = x0 - r * psi0.sin();
    let cy = y0 + r * psi0.cos();
    if (x - cx).hypot(y - cy) < 1e-12 {
        return 0.0;
    }
    let theta0 = (y0 - cy).atan2(x0 - cx);
    let phi = (y - cy).atan2(x - cx);
    let swept = if kappa > 0.0 {
        (phi - theta0).rem_euclid(TAU)
    } else {
        (theta0 - phi).rem_euclid(TAU)
    };
    let d = swept / kappa.abs();
    if d <= length {
        d
    } else {
        let end = advance(pose, kappa, length);
        let d_end = (end[0] - x).hypot(end[1] - y);
        let d_start = (x0 - x).hypot(y0 - y);
        if d_start < d_end {
            0.0
        } else {
            length
        }
    }
}

pub fn build_default_loop() -> Track {
    const V_STRAIGHT: f64 = 13.9;
    const V_ARC: f64 = 8.3;
    let quarter = |radius: f64, left: bool| {
        let kappa = if left { 1.0 / radius } else { -1.0 / radius };
        Segment::arc(FRAC_PI_2 * radius, kappa, V_ARC)
    };
    let mut segments = vec![
        Segment::straight(280.0, V_STRAIGHT),
        quarter(30.0, true),
        Segment::straight(120.0, V_STRAIGHT),
        quarter(15.0, true),
        Segment::straight(60.0, V_STRAIGHT),
        quarter(20.0, false),
        quarter(20.0, true),
        Segment::straight(1.0, V_STRAIGHT), // westbound, sized below
        quarter(25.0, true),
        Segment::straight(1.0, V_STRAIGHT), // southbound, sized below
        quarter(15.0, true),
    ];
    // Size the two closing straights so that the loop ends at the origin.
    let end = |segs: &[Segment]| {
        segs.iter().fold([0.0, 0.0, 0.0], |p, s| advance(p, s.kappa(), s.length))
    };
    segments[7].length = 0.0;
    segments[9].length = 0.0;
    let e = end(&segments);
    segments[7].length = e[0];
    segments[9].length = e[1];
    let spec = TrackSpec { lane_width: 3.5, closed: true, start: [0.0, 0.0, 0.0], segments };
    Track::new(spec).expect("default loop is valid")
}

/// Plain-text track description, one directive per line:
///
/// ```text
/// lane_width 3.5
/// closed true
/// start 0 0 0
/// straight <length> <v_lim>
/// arc <length> <curvature> <v_lim>
/// ```
pub fn track_to_text(spec: &TrackSpec) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "lane_width {}", spec.lane_width);
    let _ = writeln!(out, "closed {}", spec.closed);
    let _ = writeln!(out, "start {} {} {}", spec.start[0], spec.start[1], spec.start[2]);
    for seg in &spec.segments {
        let _ = match seg.kind {
            SegmentKind::Straight => writeln!(out, "straight {} {}", seg.length, seg.v_lim),
            SegmentKind::Arc => {
                writeln!(out, "arc {} {} {}", seg.length, seg.curvature, seg.v_lim)
            }
        };
    }
    out
}

pub fn track_from_text(text: &str) -> Result<TrackSpec> {
    let mut lane_width = None;
    let mut closed = true;
    let mut start = [0.0; 3];
    let mut segments = Vec::new();
    for (lineno, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let err = |msg: &str| Error::Parse(format!("track line {}: {msg}: `{raw}`", lineno + 1));
        let mut parts = line.split_whitespace();
        let key = parts.next().unwrap_or_default();
        let nums = |parts: std::str::SplitWhitespace, n: usize| -> Result<Vec<f64>> {
            let v: Vec<&str> = parts.collect();
            if v.len() != n {
                return Err(err(&format!("expected {n} numbers")));
            }
            v.iter()
                .map(|t| t.parse::<f64>().map_err(|_| err("bad number")))
                .collect()
        };
        match key {
            "lane_width" => lane_width = Some(nums(parts, 1)?[0]),
            "closed" => {
                closed = match parts.next() {
                    Some("true") => true,
                    Some("false") => false,
                    _ => return Err(err("expected true or false")),
                }
            }
            "start" => {
                let v = nums(parts, 3)?;
                start = [v[0], v[1], v[2]];
            }
            "straight" => {
                let v = nums(parts, 2)?;
                segments.push(Segment::straight(v[0], v[1]));
            }
            "arc" => {
                let v = nums(parts, 3)?;
                segments.push(Segment::arc(v[0], v[1], v[2]));
            }
            _ => return Err(err("unknown directive")),
        }
    }
    let lane_width = lane_width.ok_or_else(|| Error::Parse("track: missing lane_width".into()))?;
    Ok(TrackSpec { lane_width, closed, start, segments })
}

/// Anticipatory speed ceiling used by the controller's speed constraint.
///
/// Each segment gets a cap `min(v_lim, sqrt(a_lat / |kappa|))`; the ceiling at
/// `s` is the lowest cap ahead reachable by braking at `decel`. It never
/// exceeds the legal limit.
#[derive(Debug, Clone)]
pub struct SpeedEnvelope {
    caps: Vec<f64>,
    entry: Vec<f64>,
    decel: f64,
}

impl SpeedEnvelope {
    pub fn new(track: &Track, lat_accel: f64, decel: f64) -> Self {
        let segs = track.segments();
        let n = segs.len();
        let caps: Vec<f64> = segs
            .iter()
            .map(|s| {
                let k = s.kappa().abs();
                if k > 0.0 {
                    s.v_lim.min((lat_accel / k).sqrt())
                } else {
                    s.v_lim
                }
            })
            .collect();
        let mut entry = caps.clone();
        let passes = if track.is_closed() { 2 } else { 1 };
        for _ in 0..passes {
            for k in (0..n).rev() {
                let next = if k + 1 < n {
                    Some(entry[k + 1])
                } else if track.is_closed() {
                    Some(entry[0])
                } else {
                    None
                };
                entry[k] = match next {
                    Some(e) => caps[k].min((e * e + 2.0 * decel * segs[k].length).sqrt()),
                    None => caps[k],
                };
            }
        }
        Self { caps, entry, decel }
    }

    /// Ceiling and its derivative with respect to `s`.
    pub fn eval(&self, track: &Track, s: f64) -> (f64, f64) {
        let decel = self.decel;
        let s = track.normalize_s(s);
        let k = track.segment_index(s);
        let n = self.caps.len();
        let seg_end = track.segment_starts()[k] + track.segments()[k].length;
        let next = if k + 1 < n {
            Some(self.entry[k + 1])
        } else if track.is_closed() {
            Some(self.entry[0])
        } else {
            None
        };
        let cap = self.caps[k];
        match next {
            Some(e) => {
                let rem = (seg_end - s).max(0.0);
                let brake = (e * e + 2.0 * decel * rem).sqrt();
                if brake < cap {
                    (brake, -decel / brake)
                } else {
                    (cap, 0.0)
                }
            }
            None => (cap, 0.0),
        }
    }
}
