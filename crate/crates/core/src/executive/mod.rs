//! The hybrid closed loop: frozen-estimate feedback between events, the
//! Lyapunov-threshold trigger with a dwell cap, and the least-squares update at
//! every event.

mod config;
mod io;
mod plot;
mod verify;

use std::sync::Arc;

use serde::Serialize;

pub use config::{observability_from_config, scenario_from_config, ObservabilityConfig, OutputPaths, ScenarioConfig};
pub use io::{read_events_csv, read_trajectory_csv, write_events_csv, write_trajectory_csv};
pub use plot::{render_svg, write_svg};
pub use verify::{
    verify_invariants, verify_tables, Check, CheckStatus, TrajectoryTable, VerdictSheet, VerifyContext,
};

use crate::error::{Error, Result};
use crate::estimator::{compute_mu, gram_pair_with, linear_filter_gram_with, ls_update, GramSystem};
use crate::integrator::{continue_segment, Layout, SolverSettings, StopReason, TrajectoryLog};
use crate::models::{check_model, norm, ClosedLoop, Margin, Model, TriggerParams};
use crate::par::{map_slice, ExecMode};

/// Which estimator realization feeds the update.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Default, Serialize)]
pub enum Variant {
    /// Running integrals of `f` and `g`.
    #[default]
    Generic,
    /// Filter states `ż = x`, `ẇ = u` of a linear plant, with the radius
    /// trigger `|x(t)| = |x(τᵢ)|·√(a + M²)`.
    LinearFilter,
}

#[derive(Clone, Debug)]
pub struct Scenario {
    pub model: Arc<dyn Model>,
    pub trigger: TriggerParams,
    pub theta_true: Vec<f64>,
    pub thetahat0: Vec<f64>,
    pub x0: Vec<f64>,
    pub t_final: f64,
    pub solver: SolverSettings,
    pub variant: Variant,
    /// `N` from an observability certificate, when one is available.
    pub certified_n: Option<usize>,
    pub mode: ExecMode,
}

impl Scenario {
    /// A generic-variant scenario with solver defaults derived from `T`.
    pub fn new(
        model: Arc<dyn Model>,
        trigger: TriggerParams,
        theta_true: Vec<f64>,
        thetahat0: Vec<f64>,
        x0: Vec<f64>,
        t_final: f64,
    ) -> Result<Self> {
        let solver = SolverSettings::for_dwell(trigger.dwell);
        let s = Self {
            model,
            trigger,
            theta_true,
            thetahat0,
            x0,
            t_final,
            solver,
            variant: Variant::Generic,
            certified_n: None,
            mode: ExecMode::default(),
        };
        s.validate()?;
        Ok(s)
    }

    pub fn validate(&self) -> Result<()> {
        let d = self.model.dims();
        if !(self.t_final > 0.0) || !self.t_final.is_finite() {
            return Err(Error::config("t_final", "must be positive"));
        }
        self.trigger.validate(self.certified_n)?;
        self.solver.validate()?;
        let dim = |path: &str, want: usize, got: usize| {
            if want != got {
                Err(Error::config(
                    path,
                    format!("dimension mismatch: the model needs {want} entries, got {got}"),
                ))
            } else {
                Ok(())
            }
        };
        dim("theta_true", d.l, self.theta_true.len())?;
        dim("thetahat0", d.l, self.thetahat0.len())?;
        dim("x0", d.n, self.x0.len())?;
        if self.variant == Variant::LinearFilter {
            if self.model.as_linear().is_none() {
                return Err(Error::config("variant", "linear_filter needs a linear model"));
            }
            if !matches!(self.trigger.margin, Margin::Quadratic(_)) {
                return Err(Error::config("variant", "linear_filter needs a quadratic margin a|x|²"));
            }
        }
        Ok(())
    }

    /// Model spot-checks at the initial and true parameters.
    pub fn check_model(&self) -> Result<()> {
        check_model(
            self.model.as_ref(),
            &[self.thetahat0.clone(), self.theta_true.clone()],
        )
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum TriggerCause {
    DwellCap,
    ThresholdHit,
    ZeroState,
}

impl TriggerCause {
    pub fn as_str(self) -> &'static str {
        match self {
            TriggerCause::DwellCap => "dwell_cap",
            TriggerCause::ThresholdHit => "threshold_hit",
            TriggerCause::ZeroState => "zero_state",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "dwell_cap" => Some(TriggerCause::DwellCap),
            "threshold_hit" => Some(TriggerCause::ThresholdHit),
            "zero_state" => Some(TriggerCause::ZeroState),
            _ => None,
        }
    }
}

/// One event `τᵢ`, `i ≥ 1`, with the update it triggered.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct EventRecord {
    pub index: usize,
    pub time: f64,
    pub state: Vec<f64>,
    pub estimate_prev: Vec<f64>,
    pub estimate: Vec<f64>,
    pub cause: TriggerCause,
    pub window: (f64, f64),
    pub gram: GramSystem,
    pub rank: usize,
    pub update_distance: f64,
}

/// The inter-event interval `[τᵢ, τᵢ₊₁]` as realized.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Interval {
    pub start: f64,
    pub end: f64,
    pub estimate: Vec<f64>,
    /// `Q(θ̂ᵢ, xᵢ) + a(xᵢ)`, absent on the zero branch.
    pub threshold: Option<f64>,
    pub first_sample: usize,
    pub last_sample: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub enum RunOutcome {
    Completed,
    Aborted(String),
}

#[derive(Clone, Debug)]
pub struct SimulationResult {
    pub log: TrajectoryLog,
    pub events: Vec<EventRecord>,
    pub intervals: Vec<Interval>,
    /// `(time from which it holds, estimate)`, starting with `(0, θ̂₀)`.
    pub estimate_history: Vec<(f64, Vec<f64>)>,
    /// `V(θ̂ᵢ, x)` at every log sample, `θ̂ᵢ` the estimate of the interval the
    /// sample belongs to (at an event row, the interval ending there).
    pub lyapunov: Vec<f64>,
    pub theta_true: Vec<f64>,
    pub dwell: f64,
    pub certified_n: Option<usize>,
    pub t_final: f64,
    pub outcome: RunOutcome,
    /// First time the estimate is within `ε_id` of the true parameter.
    pub t_id: Option<f64>,
    pub verdicts: VerdictSheet,
}

/// `ε_id = 1e-6 · (1 + |θ|)`.
pub fn identification_tol(theta: &[f64]) -> f64 {
    1e-6 * (1.0 + norm(theta))
}

fn distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
}

impl SimulationResult {
    /// Piecewise-constant estimate in effect at `t` (right-continuous).
    pub fn estimate_at(&self, t: f64) -> &[f64] {
        let k = self.estimate_history.partition_point(|(s, _)| *s <= t);
        &self.estimate_history[k.saturating_sub(1)].1
    }

    pub fn event_times(&self) -> Vec<f64> {
        self.events.iter().map(|e| e.time).collect()
    }

    pub fn table(&self) -> TrajectoryTable {
        TrajectoryTable::from_result(self)
    }
}

/// `Q(θ̂ᵢ, xᵢ) + a(xᵢ)`.
pub fn trigger_threshold(model: &dyn Model, margin: &Margin, est: &[f64], x: &[f64]) -> Result<f64> {
    Ok(model.lyapunov_bound(est, x)? + margin.eval(x))
}

/// Radius of the linear trigger: `|xᵢ|·√(a + M²(θ̂ᵢ))`.
pub fn trigger_radius(model: &dyn Model, a_coeff: f64, est: &[f64], x: &[f64]) -> Result<f64> {
    let lin = model
        .as_linear()
        .ok_or_else(|| Error::invalid("radius trigger needs a linear model"))?;
    let m = lin.exp_bound(est)?;
    Ok(norm(x) * (a_coeff + m * m).sqrt())
}

/// Runs the hybrid loop until `t_final`, then verifies the invariants.
pub fn run_closed_loop(s: &Scenario) -> Result<SimulationResult> {
    s.validate()?;
    let model = s.model.as_ref();
    let d = model.dims();
    let layout = Layout::new(d);
    let dwell = s.trigger.dwell;
    let eps = 1e-9 * dwell;

    let mut log = TrajectoryLog::new(d);
    let mut y = layout.initial(&s.x0);
    let mut u = vec![0.0; d.m];
    model.feedback(&s.thetahat0, &s.x0, &mut u);
    log.push(0.0, &y, &u);
    log.mark_anchor(0);

    let mut est = s.thetahat0.clone();
    let mut t = 0.0;
    let mut event_times = vec![0.0];
    let mut events = Vec::new();
    let mut intervals: Vec<Interval> = Vec::new();
    let mut history = vec![(0.0, est.clone())];
    let mut outcome = RunOutcome::Completed;

    while s.t_final - t > eps {
        let x_i = y[layout.x()].to_vec();
        let remaining = s.t_final - t;
        let capped = remaining >= dwell - eps;
        let horizon = if capped { dwell } else { remaining };
        let zero = norm(&x_i) <= s.trigger.eps_zero;

        let threshold = if zero {
            None
        } else {
            Some(trigger_threshold(model, &s.trigger.margin, &est, &x_i)?)
        };
        let radius = match (s.variant, &s.trigger.margin, zero) {
            (Variant::LinearFilter, Margin::Quadratic(a), false) => {
                Some(trigger_radius(model, *a, &est, &x_i)?)
            }
            _ => None,
        };
        let est_ref = &est;
        let v_guard = |_t: f64, x: &[f64]| model.lyapunov(est_ref, x) - threshold.unwrap_or(0.0);
        let r_guard = |_t: f64, x: &[f64]| norm(x) - radius.unwrap_or(0.0);
        let guard: Option<&dyn Fn(f64, &[f64]) -> f64> = match (threshold, radius) {
            (None, _) => None,
            (Some(_), Some(_)) => Some(&r_guard),
            (Some(_), None) => Some(&v_guard),
        };

        let dynamics = ClosedLoop::new(model, &s.theta_true, &est)?;
        let seg = continue_segment(&dynamics, &y, t, horizon, guard, &s.solver)?;
        let first_sample = log.len() - 1;
        log.append_continuation(&seg.log);
        let last_sample = log.len() - 1;
        let t_end = log.t(last_sample);
        intervals.push(Interval {
            start: t,
            end: t_end,
            estimate: est.clone(),
            threshold,
            first_sample,
            last_sample,
        });
        y.copy_from_slice(log.augmented(last_sample));

        let cause = match seg.stop {
            StopReason::StateNonFinite => {
                outcome = RunOutcome::Aborted(format!(
                    "state became non-finite or the step size underflowed after t = {t_end}"
                ));
                break;
            }
            StopReason::GuardCrossed(_) => TriggerCause::ThresholdHit,
            StopReason::HorizonReached if !capped => break,
            StopReason::HorizonReached if zero => TriggerCause::ZeroState,
            StopReason::HorizonReached => TriggerCause::DwellCap,
        };

        log.mark_anchor(last_sample);
        let mu = compute_mu(&event_times, t_end, s.trigger.window, dwell)?;
        let gram = match s.variant {
            Variant::Generic => gram_pair_with(&log, mu, t_end, s.mode)?,
            Variant::LinearFilter => {
                let lin = model
                    .as_linear()
                    .ok_or_else(|| Error::invalid("linear_filter needs a linear model"))?;
                linear_filter_gram_with(&log, mu, t_end, lin.a(), lin.b(), lin.c(), s.mode)?
            }
        };
        let update = ls_update(&gram, &est)?;
        let x_event = log.x(last_sample).to_vec();
        events.push(EventRecord {
            index: events.len() + 1,
            time: t_end,
            state: x_event.clone(),
            estimate_prev: est.clone(),
            estimate: update.new.clone(),
            cause,
            window: (mu, t_end),
            rank: update.rank,
            update_distance: update.distance(),
            gram,
        });
        est = update.new;
        history.push((t_end, est.clone()));
        model.feedback(&est, &x_event, &mut u);
        log.set_input(last_sample, &u);
        event_times.push(t_end);
        t = t_end;
    }

    let mut lyapunov = vec![0.0; log.len()];
    for (j, iv) in intervals.iter().enumerate() {
        let from = if j == 0 { 0 } else { iv.first_sample + 1 };
        for k in from..=iv.last_sample {
            lyapunov[k] = model.lyapunov(&iv.estimate, log.x(k));
        }
    }
    if intervals.is_empty() {
        lyapunov[0] = model.lyapunov(&s.thetahat0, &s.x0);
    }

    let tol_id = identification_tol(&s.theta_true);
    let t_id = history
        .iter()
        .find(|(_, e)| distance(e, &s.theta_true) <= tol_id)
        .map(|(t, _)| *t);

    let mut result = SimulationResult {
        log,
        events,
        intervals,
        estimate_history: history,
        lyapunov,
        theta_true: s.theta_true.clone(),
        dwell,
        certified_n: s.certified_n,
        t_final: s.t_final,
        outcome,
        t_id,
        verdicts: VerdictSheet::default(),
    };
    result.verdicts = verify_invariants(&result, &s.theta_true);
    Ok(result)
}

/// Runs independent scenarios, concurrently when `mode` allows.
pub fn run_batch(scenarios: &[Scenario], mode: ExecMode) -> Vec<Result<SimulationResult>> {
    map_slice(mode, scenarios, run_closed_loop)
}

/// `(M̂, ω̂)` from a least-squares line through `log|x(t)|`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct DecayFit {
    pub m_hat: f64,
    pub omega_hat: f64,
    pub points: usize,
}

/// Fits `log|x(t)| ≈ c − ω̂ t` over log points with `t ≥ t_start` and
/// `|x(t)| > 1e-12`; `M̂ = max(1, e^c / |x₀|)`.
pub fn fit_decay(r: &SimulationResult, t_start: f64) -> Result<DecayFit> {
    let times = r.log.times();
    let norms: Vec<f64> = (0..r.log.len()).map(|k| norm(r.log.x(k))).collect();
    fit_decay_samples(times, &norms, t_start, norms.first().copied().unwrap_or(0.0))
}

pub fn fit_decay_samples(times: &[f64], norms: &[f64], t_start: f64, x0_norm: f64) -> Result<DecayFit> {
    let pts: Vec<(f64, f64)> = times
        .iter()
        .zip(norms)
        .filter(|(t, n)| **t >= t_start && **n > 1e-12)
        .map(|(t, n)| (*t, n.ln()))
        .collect();
    if pts.len() < 2 {
        return Err(Error::invalid(format!(
            "nothing to fit: fewer than two samples with |x| > 1e-12 after t = {t_start}"
        )));
    }
    let k = pts.len() as f64;
    let mt = pts.iter().map(|p| p.0).sum::<f64>() / k;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / k;
    let sxx: f64 = pts.iter().map(|p| (p.0 - mt) * (p.0 - mt)).sum();
    let sxy: f64 = pts.iter().map(|p| (p.0 - mt) * (p.1 - my)).sum();
    if sxx == 0.0 {
        return Err(Error::invalid("nothing to fit: all samples share one time"));
    }
    let slope = sxy / sxx;
    let intercept = my - slope * mt;
    let m_hat = if x0_norm > 0.0 {
        (intercept.exp() / x0_norm).max(1.0)
    } else {
        1.0
    };
    Ok(DecayFit {
        m_hat,
        omega_hat: slope.abs(),
        points: pts.len(),
    })
}
