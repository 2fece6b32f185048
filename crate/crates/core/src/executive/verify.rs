use std::fmt;

use serde::Serialize;

use super::{distance, identification_tol, EventRecord, RunOutcome, SimulationResult};
use crate::models::norm;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum CheckStatus {
    Pass,
    Fail,
    Skipped,
}

/// One invariant check. `margin` is the worst value of
/// `lhs − bound − tolerance`; the check passes when it is `≤ 0`.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Check {
    pub name: String,
    pub status: CheckStatus,
    pub margin: Option<f64>,
    pub detail: String,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize)]
pub struct VerdictSheet {
    pub checks: Vec<Check>,
}

impl VerdictSheet {
    pub fn get(&self, name: &str) -> Option<&Check> {
        self.checks.iter().find(|c| c.name == name)
    }

    /// No check failed (skipped checks do not count against the run).
    pub fn all_passed(&self) -> bool {
        self.checks.iter().all(|c| c.status != CheckStatus::Fail)
    }

    pub fn failed(&self) -> Vec<&Check> {
        self.checks.iter().filter(|c| c.status == CheckStatus::Fail).collect()
    }
}

impl fmt::Display for VerdictSheet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for c in &self.checks {
            let status = match c.status {
                CheckStatus::Pass => "PASS",
                CheckStatus::Fail => "FAIL",
                CheckStatus::Skipped => "SKIP",
            };
            write!(f, "{status:<5} {:<32}", c.name)?;
            if let Some(m) = c.margin {
                write!(f, " margin {m:+.3e}")?;
            }
            if !c.detail.is_empty() {
                write!(f, "  {}", c.detail)?;
            }
            writeln!(f)?;
        }
        Ok(())
    }
}

/// The trajectory as written to (and read from) the trajectory CSV.
#[derive(Clone, Debug, PartialEq)]
pub struct TrajectoryTable {
    pub t: Vec<f64>,
    pub x: Vec<Vec<f64>>,
    pub u: Vec<Vec<f64>>,
    pub thetahat: Vec<Vec<f64>>,
    pub v: Vec<f64>,
    /// `NaN` on the zero branch.
    pub threshold: Vec<f64>,
    pub event_flag: Vec<bool>,
}

impl TrajectoryTable {
    pub fn from_result(r: &SimulationResult) -> Self {
        let len = r.log.len();
        let mut threshold = vec![f64::NAN; len];
        for (j, iv) in r.intervals.iter().enumerate() {
            let from = if j == 0 { 0 } else { iv.first_sample + 1 };
            for th in &mut threshold[from..=iv.last_sample] {
                *th = iv.threshold.unwrap_or(f64::NAN);
            }
        }
        Self {
            t: r.log.times().to_vec(),
            x: (0..len).map(|k| r.log.x(k).to_vec()).collect(),
            u: (0..len).map(|k| r.log.u(k).to_vec()).collect(),
            thetahat: (0..len).map(|k| r.estimate_at(r.log.t(k)).to_vec()).collect(),
            v: r.lyapunov.clone(),
            threshold,
            event_flag: (0..len).map(|k| k > 0 && r.log.is_anchor(k)).collect(),
        }
    }

    pub fn len(&self) -> usize {
        self.t.len()
    }

    pub fn is_empty(&self) -> bool {
        self.t.is_empty()
    }
}

/// Inputs the verifier cannot read from the tables themselves.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct VerifyContext {
    pub theta_true: Option<Vec<f64>>,
    pub dwell: Option<f64>,
    pub certified_n: Option<usize>,
    pub aborted: Option<String>,
}

fn tol_event(t: f64) -> f64 {
    1e-10 * t.abs().max(1.0)
}

struct Acc {
    worst: Option<f64>,
    at: String,
}

impl Acc {
    fn new() -> Self {
        Self { worst: None, at: String::new() }
    }

    fn add(&mut self, margin: f64, at: impl FnOnce() -> String) {
        if self.worst.is_none_or(|w| margin > w || margin.is_nan()) {
            self.worst = Some(margin);
            self.at = at();
        }
    }

    fn finish(self, name: &str, vacuous: &str) -> Check {
        match self.worst {
            None => Check {
                name: name.into(),
                status: CheckStatus::Pass,
                margin: None,
                detail: vacuous.into(),
            },
            Some(m) => Check {
                name: name.into(),
                status: if m <= 0.0 { CheckStatus::Pass } else { CheckStatus::Fail },
                margin: Some(m),
                detail: format!("worst {}", self.at),
            },
        }
    }
}

fn skipped(name: &str, why: &str) -> Check {
    Check {
        name: name.into(),
        status: CheckStatus::Skipped,
        margin: None,
        detail: why.into(),
    }
}

/// Checks a finished run against its own true parameter.
pub fn verify_invariants(r: &SimulationResult, theta_true: &[f64]) -> VerdictSheet {
    let ctx = VerifyContext {
        theta_true: Some(theta_true.to_vec()),
        dwell: Some(r.dwell),
        certified_n: r.certified_n,
        aborted: match &r.outcome {
            RunOutcome::Completed => None,
            RunOutcome::Aborted(why) => Some(why.clone()),
        },
    };
    verify_tables(&r.events, &r.table(), &ctx)
}

/// Checks event records and the trajectory table. Checks whose inputs are
/// missing from `ctx` are reported as skipped.
pub fn verify_tables(events: &[EventRecord], table: &TrajectoryTable, ctx: &VerifyContext) -> VerdictSheet {
    let mut checks = Vec::new();

    // state_finite
    let finite = table.x.iter().flatten().all(|v| v.is_finite());
    checks.push(Check {
        name: "state_finite".into(),
        status: if finite && ctx.aborted.is_none() {
            CheckStatus::Pass
        } else {
            CheckStatus::Fail
        },
        margin: None,
        detail: ctx.aborted.clone().unwrap_or_default(),
    });

    let times: Vec<f64> = std::iter::once(0.0).chain(events.iter().map(|e| e.time)).collect();

    // dwell_cap
    match ctx.dwell {
        Some(dwell) => {
            let mut acc = Acc::new();
            for w in times.windows(2) {
                acc.add(w[1] - w[0] - dwell - tol_event(w[0]), || format!("gap ending at t = {}", w[1]));
            }
            checks.push(acc.finish("dwell_cap", "no events"));
        }
        None => checks.push(skipped("dwell_cap", "dwell cap T not supplied")),
    }

    // lyapunov_bound
    let mut acc = Acc::new();
    for k in 0..table.len() {
        let th = table.threshold[k];
        if th.is_finite() {
            acc.add(table.v[k] - th - 1e-8 * (1.0 + th), || format!("at t = {}", table.t[k]));
        }
    }
    checks.push(acc.finish("lyapunov_bound", "no thresholded intervals"));

    let theta = ctx.theta_true.as_deref();
    match theta {
        Some(theta) => {
            let tol = 1e-8 * (1.0 + norm(theta));
            let mut jump = Acc::new();
            let mut growth = Acc::new();
            let mut gram = Acc::new();
            let mut psd = Acc::new();
            for e in events {
                let moved = distance(&e.estimate, &e.estimate_prev);
                let err_prev = distance(theta, &e.estimate_prev);
                let err_new = distance(theta, &e.estimate);
                let at = || format!("event {} (t = {})", e.index, e.time);
                jump.add(moved - err_prev - tol, at);
                growth.add(err_new - 2.0 * err_prev - tol, at);
                if e.gram.dim() == theta.len() {
                    let zn = e.gram.z.norm();
                    gram.add(e.gram.residual(theta) - 1e-6 * (1.0 + zn), at);
                }
                psd.add(-e.gram.min_relative_eigenvalue() - 1e-10, at);
            }
            checks.push(jump.finish("jump_bound", "no updates"));
            checks.push(growth.finish("growth_bound", "no updates"));
            checks.push(gram.finish("gram_consistency", "no Gram systems"));
            checks.push(psd.finish("gram_semidefinite", "no Gram systems"));
        }
        None => {
            for n in ["jump_bound", "growth_bound", "gram_consistency"] {
                checks.push(skipped(n, "true parameter not supplied"));
            }
            let mut psd = Acc::new();
            for e in events {
                psd.add(-e.gram.min_relative_eigenvalue() - 1e-10, || format!("event {}", e.index));
            }
            checks.push(psd.finish("gram_semidefinite", "no Gram systems"));
        }
    }

    // identification-dependent checks
    let est0 = table.thetahat.first().cloned().or_else(|| events.first().map(|e| e.estimate_prev.clone()));
    let t_end = table.t.last().copied().unwrap_or(0.0);
    let x0_nonzero = table.x.first().is_some_and(|x| norm(x) > 0.0);
    match (theta, est0) {
        (Some(theta), Some(est0)) => {
            let eps_id = identification_tol(theta);
            let ests: Vec<(f64, Vec<f64>)> = std::iter::once((0.0, est0))
                .chain(events.iter().map(|e| (e.time, e.estimate.clone())))
                .collect();
            let id = ests.iter().position(|(_, e)| distance(e, theta) <= eps_id);

            match (id, ctx.dwell) {
                (Some(j), Some(dwell)) => {
                    let mut acc = Acc::new();
                    for w in times[j..].windows(2) {
                        acc.add((w[1] - w[0] - dwell).abs() - tol_event(w[1]), || {
                            format!("gap ending at t = {}", w[1])
                        });
                    }
                    checks.push(acc.finish("post_identification_spacing", "no events after identification"));
                }
                (None, Some(_)) => checks.push(skipped("post_identification_spacing", "never identified")),
                (_, None) => checks.push(skipped("post_identification_spacing", "dwell cap T not supplied")),
            }
            match id {
                Some(j) => {
                    let mut acc = Acc::new();
                    let base = &ests[j].1;
                    for (t, e) in &ests[j + 1..] {
                        acc.add(distance(e, base) - 1e-10, || format!("at t = {t}"));
                    }
                    checks.push(acc.finish("post_identification_constancy", "no events after identification"));
                }
                None => checks.push(skipped("post_identification_constancy", "never identified")),
            }

            match (ctx.certified_n, ctx.dwell) {
                (Some(n), Some(dwell)) if x0_nonzero && t_end >= n as f64 * dwell => {
                    let bound = n as f64 * dwell;
                    let (margin, detail) = match id {
                        Some(j) => (
                            ests[j].0 - bound - tol_event(bound),
                            format!("t_id = {}, N·T = {bound}", ests[j].0),
                        ),
                        None => (f64::INFINITY, format!("not identified by t = {t_end}")),
                    };
                    checks.push(Check {
                        name: "finite_time_identification".into(),
                        status: if margin <= 0.0 { CheckStatus::Pass } else { CheckStatus::Fail },
                        margin: Some(margin),
                        detail,
                    });
                }
                (Some(_), Some(_)) if !x0_nonzero => {
                    checks.push(skipped("finite_time_identification", "x0 = 0"))
                }
                (Some(_), Some(_)) => checks.push(skipped("finite_time_identification", "run shorter than N·T")),
                _ => checks.push(skipped("finite_time_identification", "certified N or T not supplied")),
            }
        }
        _ => {
            for n in [
                "post_identification_spacing",
                "post_identification_constancy",
                "finite_time_identification",
            ] {
                checks.push(skipped(n, "true parameter not supplied"));
            }
        }
    }

    // event_count
    match (ctx.certified_n, ctx.dwell) {
        (Some(n), Some(dwell)) => {
            let bound = (t_end / dwell - 1e-9).ceil() + n as f64 + 1.0;
            let count = events.len() as f64;
            checks.push(Check {
                name: "event_count".into(),
                status: if count <= bound { CheckStatus::Pass } else { CheckStatus::Fail },
                margin: Some(count - bound),
                detail: format!("{} events, bound {bound}", events.len()),
            });
        }
        _ => checks.push(skipped("event_count", "certified N or T not supplied")),
    }

    VerdictSheet { checks }
}
