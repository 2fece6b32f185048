//! Adaptive Dormand–Prince 5(4) integration of one inter-event segment.
//!
//! Alongside the state the integrator carries the running integrals
//! `F(t) = ∫ f(x,u)`, `Γ(t) = ∫ g(x,u)` and the filter states `z = ∫ x`,
//! `w = ∫ u` as extra ODE components. Runge–Kutta steps and their dense output
//! are linear in the stage derivatives, so the identity
//! `x(t) - x(0) = F(t) - F(0) + (Γ(t) - Γ(0))θ` survives to round-off.

use crate::error::{Error, Result};
use crate::models::Dims;

/// Dynamics of one segment: a frozen feedback `u = k(θ̂, x)`, the plant pieces
/// `f`, `g` and the true parameter.
pub trait SegmentDynamics {
    fn dims(&self) -> Dims;
    fn theta(&self) -> &[f64];
    fn input(&self, x: &[f64], u: &mut [f64]);
    fn drift(&self, x: &[f64], u: &[f64], out: &mut [f64]);
    /// Row-major `n × l`.
    fn regressor(&self, x: &[f64], u: &[f64], out: &mut [f64]);
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SolverSettings {
    pub rtol: f64,
    pub atol: f64,
    /// Maximum spacing of logged samples; also caps the step size.
    pub dt_log: f64,
    /// Absolute event-localization tolerance; `None` means
    /// `1e-10 · max(1, t₀)` per segment.
    pub tol_event: Option<f64>,
    pub max_steps: usize,
}

impl SolverSettings {
    /// Defaults tied to the dwell cap `T`: `dt_log = T/200`.
    pub fn for_dwell(dwell: f64) -> Self {
        Self {
            rtol: 1e-10,
            atol: 1e-12,
            dt_log: dwell / 200.0,
            tol_event: None,
            max_steps: 10_000_000,
        }
    }

    pub fn event_tol(&self, t0: f64) -> f64 {
        self.tol_event.unwrap_or(1e-10 * t0.abs().max(1.0))
    }

    pub fn validate(&self) -> Result<()> {
        let pos = |v: f64| v > 0.0 && v.is_finite();
        if !pos(self.rtol) {
            return Err(Error::config("solver.rtol", "must be positive"));
        }
        if !pos(self.atol) {
            return Err(Error::config("solver.atol", "must be positive"));
        }
        if !pos(self.dt_log) {
            return Err(Error::config("solver.dt_log", "must be positive"));
        }
        if let Some(t) = self.tol_event {
            if !pos(t) {
                return Err(Error::config("solver.tol_event", "must be positive"));
            }
        }
        Ok(())
    }
}

/// Offsets of the augmented state `(x, F, Γ, z, w)`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Layout {
    pub dims: Dims,
}

impl Layout {
    pub fn new(dims: Dims) -> Self {
        Self { dims }
    }

    pub fn len(&self) -> usize {
        let Dims { n, m, l } = self.dims;
        3 * n + n * l + m
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn x(&self) -> std::ops::Range<usize> {
        0..self.dims.n
    }

    pub fn drift_integral(&self) -> std::ops::Range<usize> {
        let n = self.dims.n;
        n..2 * n
    }

    pub fn regressor_integral(&self) -> std::ops::Range<usize> {
        let Dims { n, l, .. } = self.dims;
        2 * n..2 * n + n * l
    }

    pub fn filter_z(&self) -> std::ops::Range<usize> {
        let Dims { n, l, .. } = self.dims;
        2 * n + n * l..3 * n + n * l
    }

    pub fn filter_w(&self) -> std::ops::Range<usize> {
        let s = self.filter_z().end;
        s..s + self.dims.m
    }

    /// Augmented state with `x = x0` and every integral at zero.
    pub fn initial(&self, x0: &[f64]) -> Vec<f64> {
        let mut y = vec![0.0; self.len()];
        y[self.x()].copy_from_slice(x0);
        y
    }
}

/// Dense time-stamped samples of the augmented state and the input.
#[derive(Clone, Debug, PartialEq)]
pub struct TrajectoryLog {
    layout: Layout,
    times: Vec<f64>,
    states: Vec<f64>,
    inputs: Vec<f64>,
    anchors: Vec<usize>,
}

impl TrajectoryLog {
    pub fn new(dims: Dims) -> Self {
        Self {
            layout: Layout::new(dims),
            times: Vec::new(),
            states: Vec::new(),
            inputs: Vec::new(),
            anchors: Vec::new(),
        }
    }

    pub fn dims(&self) -> Dims {
        self.layout.dims
    }

    pub fn layout(&self) -> Layout {
        self.layout
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn t(&self, k: usize) -> f64 {
        self.times[k]
    }

    pub fn augmented(&self, k: usize) -> &[f64] {
        let s = self.layout.len();
        &self.states[k * s..(k + 1) * s]
    }

    pub fn x(&self, k: usize) -> &[f64] {
        &self.augmented(k)[self.layout.x()]
    }

    pub fn u(&self, k: usize) -> &[f64] {
        let m = self.layout.dims.m;
        &self.inputs[k * m..(k + 1) * m]
    }

    /// `F(t_k) = ∫₀^{t_k} f(x, u)`.
    pub fn drift_integral(&self, k: usize) -> &[f64] {
        &self.augmented(k)[self.layout.drift_integral()]
    }

    /// `Γ(t_k) = ∫₀^{t_k} g(x, u)`, row-major `n × l`.
    pub fn regressor_integral(&self, k: usize) -> &[f64] {
        &self.augmented(k)[self.layout.regressor_integral()]
    }

    pub fn filter_z(&self, k: usize) -> &[f64] {
        &self.augmented(k)[self.layout.filter_z()]
    }

    pub fn filter_w(&self, k: usize) -> &[f64] {
        &self.augmented(k)[self.layout.filter_w()]
    }

    /// Sample indices of event times.
    pub fn anchors(&self) -> &[usize] {
        &self.anchors
    }

    pub fn is_anchor(&self, k: usize) -> bool {
        self.anchors.binary_search(&k).is_ok()
    }

    /// Index of the sample whose time is exactly `t`.
    pub fn index_of_time(&self, t: f64) -> Option<usize> {
        self.times
            .binary_search_by(|s| s.partial_cmp(&t).unwrap_or(std::cmp::Ordering::Less))
            .ok()
    }

    pub fn push(&mut self, t: f64, augmented: &[f64], u: &[f64]) {
        debug_assert_eq!(augmented.len(), self.layout.len());
        debug_assert!(self.times.last().is_none_or(|&last| t > last));
        self.times.push(t);
        self.states.extend_from_slice(augmented);
        self.inputs.extend_from_slice(u);
    }

    pub fn mark_anchor(&mut self, k: usize) {
        if !self.is_anchor(k) {
            self.anchors.push(k);
            self.anchors.sort_unstable();
        }
    }

    pub fn set_input(&mut self, k: usize, u: &[f64]) {
        let m = self.layout.dims.m;
        self.inputs[k * m..(k + 1) * m].copy_from_slice(u);
    }

    /// Appends another log whose first sample repeats this log's last one.
    pub fn append_continuation(&mut self, other: &TrajectoryLog) {
        let skip = match (self.times.last(), other.times.first()) {
            (Some(a), Some(b)) if a == b => 1,
            _ => 0,
        };
        for k in skip..other.len() {
            self.push(other.t(k), other.augmented(k), other.u(k));
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum StopReason {
    GuardCrossed(f64),
    HorizonReached,
    StateNonFinite,
}

#[derive(Clone, Debug)]
pub struct Segment {
    pub log: TrajectoryLog,
    pub stop: StopReason,
}

impl Segment {
    pub fn end_time(&self) -> f64 {
        *self.log.times().last().expect("segment log holds its start sample")
    }
}

// Dormand–Prince 5(4) coefficients.
const C: [f64; 7] = [0.0, 1.0 / 5.0, 3.0 / 10.0, 4.0 / 5.0, 8.0 / 9.0, 1.0, 1.0];
const A: [[f64; 6]; 7] = [
    [0.0; 6],
    [1.0 / 5.0, 0.0, 0.0, 0.0, 0.0, 0.0],
    [3.0 / 40.0, 9.0 / 40.0, 0.0, 0.0, 0.0, 0.0],
    [44.0 / 45.0, -56.0 / 15.0, 32.0 / 9.0, 0.0, 0.0, 0.0],
    [
        19372.0 / 6561.0,
        -25360.0 / 2187.0,
        64448.0 / 6561.0,
        -212.0 / 729.0,
        0.0,
        0.0,
    ],
    [
        9017.0 / 3168.0,
        -355.0 / 33.0,
        46732.0 / 5247.0,
        49.0 / 176.0,
        -5103.0 / 18656.0,
        0.0,
    ],
    [
        35.0 / 384.0,
        0.0,
        500.0 / 1113.0,
        125.0 / 192.0,
        -2187.0 / 6784.0,
        11.0 / 84.0,
    ],
];
const E: [f64; 7] = [
    71.0 / 57600.0,
    0.0,
    -71.0 / 16695.0,
    71.0 / 1920.0,
    -17253.0 / 339200.0,
    22.0 / 525.0,
    -1.0 / 40.0,
];
const D: [f64; 7] = [
    -12715105075.0 / 11282082432.0,
    0.0,
    87487479700.0 / 32700410799.0,
    -10690763975.0 / 1880347072.0,
    701980252875.0 / 199316789632.0,
    -1453857185.0 / 822651844.0,
    69997945.0 / 29380423.0,
];

struct Workspace {
    k: [Vec<f64>; 7],
    tmp: Vec<f64>,
    y_new: Vec<f64>,
    u: Vec<f64>,
    f: Vec<f64>,
    g: Vec<f64>,
}

impl Workspace {
    fn new(layout: Layout) -> Self {
        let s = layout.len();
        let Dims { n, m, l } = layout.dims;
        Self {
            k: std::array::from_fn(|_| vec![0.0; s]),
            tmp: vec![0.0; s],
            y_new: vec![0.0; s],
            u: vec![0.0; m],
            f: vec![0.0; n],
            g: vec![0.0; n * l],
        }
    }
}

fn derivative(
    dynamics: &dyn SegmentDynamics,
    layout: Layout,
    y: &[f64],
    dy: &mut [f64],
    u: &mut [f64],
    f: &mut [f64],
    g: &mut [f64],
) {
    let Dims { n, l, .. } = layout.dims;
    let theta = dynamics.theta();
    let x = &y[layout.x()];
    dynamics.input(x, u);
    dynamics.drift(x, u, f);
    dynamics.regressor(x, u, g);
    for i in 0..n {
        let gt: f64 = (0..l).map(|j| g[i * l + j] * theta[j]).sum();
        dy[i] = f[i] + gt;
    }
    dy[layout.drift_integral()].copy_from_slice(f);
    dy[layout.regressor_integral()].copy_from_slice(g);
    dy[layout.filter_z()].copy_from_slice(x);
    dy[layout.filter_w()].copy_from_slice(u);
}

/// Guard `(t, x) ↦ value`; a crossing is a change from negative to
/// non-negative.
pub type Guard<'a> = &'a dyn Fn(f64, &[f64]) -> f64;

/// Integrates from `x0` with all running integrals starting at zero.
pub fn integrate_segment(
    dynamics: &dyn SegmentDynamics,
    x0: &[f64],
    t0: f64,
    horizon: f64,
    guard: Option<Guard<'_>>,
    settings: &SolverSettings,
) -> Result<Segment> {
    let layout = Layout::new(dynamics.dims());
    if x0.len() != layout.dims.n {
        return Err(Error::dim("initial state", layout.dims.n, x0.len()));
    }
    continue_segment(dynamics, &layout.initial(x0), t0, horizon, guard, settings)
}

/// Integrates from a full augmented state (continuing the running integrals).
pub fn continue_segment(
    dynamics: &dyn SegmentDynamics,
    y0: &[f64],
    t0: f64,
    horizon: f64,
    guard: Option<Guard<'_>>,
    settings: &SolverSettings,
) -> Result<Segment> {
    settings.validate()?;
    let layout = Layout::new(dynamics.dims());
    let Dims { n, l, .. } = layout.dims;
    if y0.len() != layout.len() {
        return Err(Error::dim("augmented initial state", layout.len(), y0.len()));
    }
    if dynamics.theta().len() != l {
        return Err(Error::dim("true parameter", l, dynamics.theta().len()));
    }
    if !(horizon > 0.0) || !horizon.is_finite() {
        return Err(Error::invalid("segment horizon must be positive"));
    }
    if let Some(gd) = guard {
        let g0 = gd(t0, &y0[layout.x()]);
        if !(g0 < 0.0) {
            return Err(Error::invalid(format!(
                "guard must be negative at the segment start (got {g0:e})"
            )));
        }
    }

    let tol_event = settings.event_tol(t0);
    let t_end = t0 + horizon;
    let mut ws = Workspace::new(layout);
    let mut log = TrajectoryLog::new(layout.dims);
    let mut y = y0.to_vec();
    let mut t = t0;

    {
        let Workspace { k, u, f, g, .. } = &mut ws;
        derivative(dynamics, layout, &y, &mut k[0], u, f, g);
        log.push(t, &y, u);
    }
    if !y.iter().all(|v| v.is_finite()) {
        return Ok(Segment {
            log,
            stop: StopReason::StateNonFinite,
        });
    }

    let mut h = settings.dt_log.min(horizon);
    let mut g_prev = guard.map(|gd| gd(t, &y[..n]));
    let mut steps = 0usize;
    let mut last_rejected = false;

    loop {
        steps += 1;
        if steps > settings.max_steps {
            return Ok(Segment {
                log,
                stop: StopReason::StateNonFinite,
            });
        }
        let remaining = t_end - t;
        let mut last = false;
        if remaining <= h * (1.0 + 1e-9) {
            h = remaining;
            last = true;
        }
        if h < 1e-14 * t.abs().max(1.0) {
            return Ok(Segment {
                log,
                stop: StopReason::StateNonFinite,
            });
        }

        // stages 2..7 (k[0] holds the FSAL derivative at y)
        for s in 1..7 {
            for i in 0..y.len() {
                let mut acc = 0.0;
                for j in 0..s {
                    acc += A[s][j] * ws.k[j][i];
                }
                ws.tmp[i] = y[i] + h * acc;
            }
            if s == 6 {
                ws.y_new.copy_from_slice(&ws.tmp);
            }
            let Workspace { k, tmp, u, f, g, .. } = &mut ws;
            let _ = C[s];
            derivative(dynamics, layout, tmp, &mut k[s], u, f, g);
        }

        let mut err_sq = 0.0;
        for i in 0..y.len() {
            let e: f64 = h * (0..7).map(|j| E[j] * ws.k[j][i]).sum::<f64>();
            let sc = settings.atol + settings.rtol * y[i].abs().max(ws.y_new[i].abs());
            err_sq += (e / sc) * (e / sc);
        }
        let err = (err_sq / y.len() as f64).sqrt();

        if !err.is_finite() || !ws.y_new.iter().all(|v| v.is_finite()) {
            if h > 1e-14 * t.abs().max(1.0) && err.is_nan() {
                return Ok(Segment {
                    log,
                    stop: StopReason::StateNonFinite,
                });
            }
            h *= 0.1;
            last_rejected = true;
            continue;
        }

        if err > 1.0 {
            let fac = (0.9 * err.powf(-0.2)).max(0.2);
            h *= fac;
            last_rejected = true;
            continue;
        }

        let t_new = if last { t_end } else { t + h };

        if let (Some(gd), Some(gp)) = (guard, g_prev) {
            let g_new = gd(t_new, &ws.y_new[..n]);
            if gp < 0.0 && g_new >= 0.0 {
                let (t_star, y_star) = locate_crossing(gd, &ws, &y, t, t_new, h, tol_event, n);
                let Workspace { tmp, u, f, g, .. } = &mut ws;
                derivative(dynamics, layout, &y_star, tmp, u, f, g);
                if t_star > t {
                    log.push(t_star, &y_star, u);
                }
                return Ok(Segment {
                    log,
                    stop: StopReason::GuardCrossed(t_star),
                });
            }
            g_prev = Some(g_new);
        }

        // accept
        y.copy_from_slice(&ws.y_new);
        t = t_new;
        ws.k.swap(0, 6);
        {
            let Workspace { k, u, f, g, tmp, .. } = &mut ws;
            // k[0] now holds the FSAL stage; recompute u for the log
            let x = &y[layout.x()];
            dynamics.input(x, u);
            let _ = (&k, f, g, tmp);
        }
        log.push(t, &y, &ws.u);

        if last {
            return Ok(Segment {
                log,
                stop: StopReason::HorizonReached,
            });
        }

        let mut fac = 0.9 * err.max(1e-10).powf(-0.2);
        fac = fac.clamp(0.2, if last_rejected { 1.0 } else { 5.0 });
        last_rejected = false;
        h = (h * fac).min(settings.dt_log);
    }
}

/// Bisects the dense output of the step `[t, t_new]` until the bracket is below
/// `tol`. Returns the first time at which the guard is non-negative and the
/// interpolated state there.
#[allow(clippy::too_many_arguments)]
fn locate_crossing(
    guard: Guard<'_>,
    ws: &Workspace,
    y0: &[f64],
    t: f64,
    t_new: f64,
    h: f64,
    tol: f64,
    n: usize,
) -> (f64, Vec<f64>) {
    let mut lo = 0.0f64;
    let mut hi = 1.0f64;
    let span = t_new - t;
    let mut buf = vec![0.0; y0.len()];
    while (hi - lo) * span > tol {
        let mid = 0.5 * (lo + hi);
        let tm = t + mid * span;
        if tm <= t + lo * span || tm >= t + hi * span {
            break;
        }
        dense(ws, y0, h, mid, &mut buf);
        if guard(tm, &buf[..n]) >= 0.0 {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    if hi == 1.0 {
        return (t_new, ws.y_new.clone());
    }
    dense(ws, y0, h, hi, &mut buf);
    (t + hi * span, buf)
}

/// Fourth-order continuous extension at fraction `s` of the step.
fn dense(ws: &Workspace, y0: &[f64], h: f64, s: f64, out: &mut [f64]) {
    let s1 = 1.0 - s;
    for i in 0..y0.len() {
        let r1 = y0[i];
        let r2 = ws.y_new[i] - y0[i];
        let r3 = h * ws.k[0][i] - r2;
        let r4 = r2 - h * ws.k[6][i] - r3;
        let r5 = h * (0..7).map(|j| D[j] * ws.k[j][i]).sum::<f64>();
        out[i] = r1 + s * (r2 + s1 * (r3 + s * (r4 + s1 * r5)));
    }
}
