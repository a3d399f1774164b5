//! Trajectory integration: full-batch gradient descent under a learning-rate
//! schedule, fixed-step RK4 for the gradient flow, and the invariant monitors
//! (balance, sign stability, the early-phase norm envelope).

use std::path::Path;

use crate::activation::ActivationCfg;
use crate::error::{Error, Result};
use crate::linalg::{angle_between, dot, norm, LabeledDataset};
use crate::network::{flow_rhs_with_margins, linearized_rhs, margins, mean_loss, Params, Tangent};

#[derive(Clone, Debug, PartialEq)]
pub enum Schedule {
    Constant(f64),
    /// The four-phase schedule of the four-neuron experiment: 4 for the first 12
    /// epochs, then `2^-7`, then a linear and finally an exponential ramp.
    Sec54,
    /// `(first_epoch, η)` pairs sorted by epoch; the first must start at 0.
    PiecewiseTable(Vec<(u64, f64)>),
}

impl Schedule {
    pub fn validate(&self) -> Result<()> {
        match self {
            Schedule::Constant(eta) if !(*eta > 0.0 && eta.is_finite()) => {
                Err(Error::domain(format!("learning rate must be positive, got {eta}")))
            }
            Schedule::PiecewiseTable(t) => {
                if t.first().map(|e| e.0) != Some(0) {
                    return Err(Error::domain("schedule table must start at epoch 0"));
                }
                if t.windows(2).any(|w| w[1].0 <= w[0].0) {
                    return Err(Error::domain("schedule table epochs must increase"));
                }
                if t.iter().any(|e| !(e.1 > 0.0 && e.1.is_finite())) {
                    return Err(Error::domain("schedule table rates must be positive"));
                }
                Ok(())
            }
            _ => Ok(()),
        }
    }
}

/// `η_t`
pub fn schedule_eval(s: &Schedule, t: i64) -> Result<f64> {
    if t < 0 {
        return Err(Error::domain(format!("negative epoch {t}")));
    }
    Ok(eta_at(s, t as u64))
}

fn eta_at(s: &Schedule, t: u64) -> f64 {
    match s {
        Schedule::Constant(eta) => *eta,
        Schedule::Sec54 => {
            let base = 2f64.powi(-7);
            let t0 = (1u64 << 13) as f64;
            let tf = t as f64;
            if t < 12 {
                4.0
            } else if t < 1 << 13 {
                base
            } else if t < 1 << 14 {
                base * (1.0 + 32.0 * (tf / t0 - 1.0))
            } else {
                base * (1.0 + 2f64.powf(5.0 + (tf - 2.0 * t0) / 512.0))
            }
        }
        Schedule::PiecewiseTable(table) => {
            let k = table.partition_point(|e| e.0 <= t);
            table[k.saturating_sub(1)].1
        }
    }
}

/// What to log: cadence, reference directions for angles, and which neurons to record.
#[derive(Clone, Debug, PartialEq)]
pub struct LogSpec {
    pub every: u64,
    pub refs: Vec<Vec<f64>>,
    /// Neurons whose per-neuron columns are recorded.
    pub tracked: Vec<usize>,
    /// Keep a copy of `θ` at every logged epoch in [`Run::snapshots`].
    pub snapshots: bool,
}

impl LogSpec {
    pub fn new(every: u64) -> Self {
        LogSpec {
            every: every.max(1),
            refs: Vec::new(),
            tracked: Vec::new(),
            snapshots: false,
        }
    }

    pub fn with_refs(mut self, refs: Vec<Vec<f64>>) -> Self {
        self.refs = refs;
        self
    }

    pub fn tracking(mut self, tracked: Vec<usize>) -> Self {
        self.tracked = tracked;
        self
    }

    pub fn keeping_snapshots(mut self) -> Self {
        self.snapshots = true;
        self
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct NeuronState {
    pub index: usize,
    pub u: f64,
    pub v_norm: f64,
    /// Angle between `v_j` and each reference direction, NaN if `v_j = 0`.
    /// Signed in `(-π, π]` (counter-clockwise from the reference) when `d = 2`,
    /// otherwise in `[0, π]`.
    pub angles: Vec<f64>,
    /// `(u_j² - ||v_j||²) - (u_j(0)² - ||v_j(0)||²)`
    pub balance_drift: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrajectoryRecord {
    pub epoch: u64,
    /// Continuous time: `Σ η_t` for gradient descent, `step · h` for RK4.
    pub time: f64,
    pub loss: f64,
    pub min_margin: f64,
    pub first_layer_scale: f64,
    /// `||θ||_[m]`
    pub max_neuron_norm: f64,
    /// Neurons whose `u_j` has the opposite sign from initialization.
    pub sign_violations: usize,
    pub neurons: Vec<NeuronState>,
}

#[derive(Clone, Debug)]
pub struct Run {
    pub records: Vec<TrajectoryRecord>,
    /// `θ` at every record when [`LogSpec::snapshots`] is set, otherwise empty.
    pub snapshots: Vec<Params>,
    pub final_params: Params,
}

struct Logger<'a> {
    spec: &'a LogSpec,
    balance0: Vec<f64>,
    records: Vec<TrajectoryRecord>,
    snapshots: Vec<Params>,
}

/// Counter-clockwise angle from `r` to `v` in the plane.
pub fn signed_angle_2d(r: &[f64], v: &[f64]) -> f64 {
    let cross = r[0] * v[1] - r[1] * v[0];
    cross.atan2(dot(r, v))
}

impl<'a> Logger<'a> {
    fn new(spec: &'a LogSpec, theta0: &Params) -> Result<Self> {
        if let Some(&j) = spec.tracked.iter().find(|&&j| j >= theta0.m()) {
            return Err(Error::domain(format!("tracked neuron {j} out of range (m = {})", theta0.m())));
        }
        if spec.refs.iter().any(|r| r.len() != theta0.dim()) {
            return Err(Error::domain("reference direction dimension mismatch"));
        }
        Ok(Logger {
            spec,
            balance0: (0..theta0.m()).map(|j| theta0.balance(j)).collect(),
            records: Vec::new(),
            snapshots: Vec::new(),
        })
    }

    fn push(&mut self, epoch: u64, time: f64, theta: &Params, margins: &[f64]) -> Result<()> {
        let loss = mean_loss(margins);
        check_finite(epoch, theta, loss)?;
        let neurons = self
            .spec
            .tracked
            .iter()
            .map(|&j| {
                let v = theta.v(j);
                let vn = norm(v);
                NeuronState {
                    index: j,
                    u: theta.u(j),
                    v_norm: vn,
                    angles: self
                        .spec
                        .refs
                        .iter()
                        .map(|r| match (vn > 0.0, v.len()) {
                            (false, _) => f64::NAN,
                            (true, 2) => signed_angle_2d(r, v),
                            (true, _) => angle_between(v, r),
                        })
                        .collect(),
                    balance_drift: theta.balance(j) - self.balance0[j],
                }
            })
            .collect();
        self.records.push(TrajectoryRecord {
            epoch,
            time,
            loss,
            min_margin: margins.iter().copied().fold(f64::INFINITY, f64::min),
            first_layer_scale: theta.first_layer_scale(),
            max_neuron_norm: theta.max_neuron_norm(),
            sign_violations: sign_violations(theta),
            neurons,
        });
        if self.spec.snapshots {
            self.snapshots.push(theta.clone());
        }
        Ok(())
    }
}

/// Neurons with `u_j ≠ 0` whose sign differs from `s_j`.
pub fn sign_violations(theta: &Params) -> usize {
    (0..theta.m())
        .filter(|&j| {
            let u = theta.u(j);
            u != 0.0 && (u > 0.0) != (theta.sign(j) > 0)
        })
        .count()
}

fn check_finite(epoch: u64, theta: &Params, loss: f64) -> Result<()> {
    let bad = (0..theta.m()).find(|&j| !theta.u(j).is_finite() || theta.v(j).iter().any(|c| !c.is_finite()));
    if bad.is_some() || !loss.is_finite() {
        return Err(Error::NonFinite { epoch, neuron: bad });
    }
    Ok(())
}

/// Full-batch gradient descent `θ ← θ + η_t · (-∇L(θ))`.
///
/// Logs every `log.every` epochs and always logs the final state.
pub fn gd_run(
    theta0: &Params,
    cfg: &ActivationCfg,
    data: &LabeledDataset,
    schedule: &Schedule,
    epochs: u64,
    log: &LogSpec,
) -> Result<Run> {
    schedule.validate()?;
    let mut logger = Logger::new(log, theta0)?;
    let mut theta = theta0.clone();
    let mut time = 0.0;
    for epoch in 0..epochs {
        let (rhs, m) = flow_rhs_with_margins(&theta, cfg, data)?;
        if epoch % log.every == 0 {
            logger.push(epoch, time, &theta, &m)?;
        }
        let eta = eta_at(schedule, epoch);
        theta.step_in_place(eta, &rhs);
        time += eta;
    }
    let m = margins(&theta, cfg, data)?;
    logger.push(epochs, time, &theta, &m)?;
    Ok(Run {
        records: logger.records,
        snapshots: logger.snapshots,
        final_params: theta,
    })
}

/// One classical RK4 step of the gradient flow.
pub fn rk4_step(theta: &Params, cfg: &ActivationCfg, data: &LabeledDataset, h: f64) -> Result<Params> {
    rk4_step_with(theta, h, |p| flow_rhs_with_margins(p, cfg, data).map(|(t, _)| t))
}

/// One classical RK4 step of an arbitrary parameter-space field.
pub fn rk4_step_with<F>(theta: &Params, h: f64, field: F) -> Result<Params>
where
    F: Fn(&Params) -> Result<Tangent>,
{
    let k1 = field(theta)?;
    let k2 = field(&theta.step(h / 2.0, &k1))?;
    let k3 = field(&theta.step(h / 2.0, &k2))?;
    let k4 = field(&theta.step(h, &k3))?;
    let combine = |a: &[f64], b: &[f64], c: &[f64], d: &[f64]| -> Vec<f64> {
        a.iter()
            .zip(b)
            .zip(c)
            .zip(d)
            .map(|(((a, b), c), d)| (a + 2.0 * b + 2.0 * c + d) / 6.0)
            .collect()
    };
    let incr = Tangent {
        du: combine(&k1.du, &k2.du, &k3.du, &k4.du),
        dv: combine(&k1.dv, &k2.dv, &k3.dv, &k4.dv),
    };
    Ok(theta.step(h, &incr))
}

/// Integrates the linearized system to `t_end` by RK4 with `ceil(t_end / h)` equal steps.
pub fn linearized_run(theta0: &Params, cfg: &ActivationCfg, data: &LabeledDataset, t_end: f64, h: f64) -> Result<Params> {
    integrate_to(theta0, t_end, h, |p| linearized_rhs(p, cfg, data))
}

/// Integrates the full gradient flow to `t_end` by RK4 with `ceil(t_end / h)` equal steps.
pub fn flow_to(theta0: &Params, cfg: &ActivationCfg, data: &LabeledDataset, t_end: f64, h: f64) -> Result<Params> {
    integrate_to(theta0, t_end, h, |p| flow_rhs_with_margins(p, cfg, data).map(|(t, _)| t))
}

fn integrate_to<F>(theta0: &Params, t_end: f64, h: f64, field: F) -> Result<Params>
where
    F: Fn(&Params) -> Result<Tangent>,
{
    if !(h > 0.0) || !(t_end >= 0.0) || !t_end.is_finite() {
        return Err(Error::domain(format!("invalid horizon {t_end} or step {h}")));
    }
    let steps = (t_end / h).ceil() as u64;
    if steps == 0 {
        return Ok(theta0.clone());
    }
    let step = t_end / steps as f64;
    let mut theta = theta0.clone();
    for _ in 0..steps {
        theta = rk4_step_with(&theta, step, &field)?;
    }
    Ok(theta)
}

/// Gradient flow to `t_end` by RK4 with fixed step `h`; logs every `log.every` steps.
pub fn flow_run(
    theta0: &Params,
    cfg: &ActivationCfg,
    data: &LabeledDataset,
    t_end: f64,
    h: f64,
    log: &LogSpec,
) -> Result<Run> {
    if !(h > 0.0) || !h.is_finite() {
        return Err(Error::domain(format!("step size must be positive, got {h}")));
    }
    if !(t_end >= 0.0) || !t_end.is_finite() {
        return Err(Error::domain(format!("t_end must be non-negative, got {t_end}")));
    }
    let steps = (t_end / h).round() as u64;
    let mut logger = Logger::new(log, theta0)?;
    let mut theta = theta0.clone();
    for step in 0..steps {
        if step % log.every == 0 {
            let m = margins(&theta, cfg, data)?;
            logger.push(step, step as f64 * h, &theta, &m)?;
        }
        theta = rk4_step(&theta, cfg, data, h)?;
    }
    let m = margins(&theta, cfg, data)?;
    logger.push(steps, steps as f64 * h, &theta, &m)?;
    Ok(Run {
        records: logger.records,
        snapshots: logger.snapshots,
        final_params: theta,
    })
}

#[derive(Clone, Debug, PartialEq)]
pub struct EnvelopeReport {
    /// End of the window in which the bound applies.
    pub t1: f64,
    /// Largest `||θ(t)||²_[m] / (2 ||θ(0)||²_[m] e^{2λt})` over logged `t ≤ t1`.
    pub max_ratio: f64,
    pub records_checked: usize,
    pub pass: bool,
}

/// Slack on the envelope ratio for integrator error.
pub const ENVELOPE_TOL: f64 = 1e-9;

/// `a = m(1 + ξ)²/4`
pub fn growth_constant(m: usize, xi: f64) -> f64 {
    m as f64 * (1.0 + xi).powi(2) / 4.0
}

/// Checks `||θ(t)||²_[m] ≤ 2||θ(0)||²_[m] e^{2λt}` for logged `t ≤ t1`, where
/// `t1 = ln(λ / (2a||θ(0)||²_[m])) / (2λ)`.
pub fn norm_envelope_check(traj: &[TrajectoryRecord], theta0: &Params, lambda: f64, xi: f64) -> Result<EnvelopeReport> {
    if !(lambda > 0.0) {
        return Err(Error::domain("λ must be positive"));
    }
    let n0 = theta0.max_neuron_norm().powi(2);
    let a = growth_constant(theta0.m(), xi);
    let t1 = (lambda / (2.0 * a * n0)).ln() / (2.0 * lambda);
    let mut max_ratio: f64 = 0.0;
    let mut checked = 0;
    for rec in traj.iter().filter(|r| r.time <= t1) {
        let ratio = rec.max_neuron_norm.powi(2) / (2.0 * n0 * (2.0 * lambda * rec.time).exp());
        max_ratio = max_ratio.max(ratio);
        checked += 1;
    }
    Ok(EnvelopeReport {
        t1,
        max_ratio,
        records_checked: checked,
        pass: max_ratio <= 1.0 + ENVELOPE_TOL,
    })
}

/// Timescales of the two-phase analysis.
#[derive(Clone, Debug, PartialEq)]
pub struct PhasePlan {
    pub r: f64,
    pub kappa_star: f64,
    /// `σ = r^{1+κ*}`
    pub sigma: f64,
    pub lambda: f64,
    /// `T1 = ln(r/σ)/λ`
    pub t1: f64,
    /// `a = m(1+ξ)²/4`
    pub a: f64,
    pub epsilon: f64,
    /// `t4 = ln(λε / (2a r² ||θ*||²_[m])) / (2λ)`
    pub t4_eps: f64,
    /// `T2 = T1 + t4`
    pub t2_eps: f64,
}

impl PhasePlan {
    /// `theta_star_mnorm` is `||θ*||_[m]` of the phase-1 limit.
    pub fn new(r: f64, kappa_star: f64, lambda: f64, m: usize, xi: f64, epsilon: f64, theta_star_mnorm: f64) -> Result<Self> {
        if !(r > 0.0 && r < 1.0) {
            return Err(Error::domain(format!("r = {r} outside (0, 1)")));
        }
        if !(kappa_star > 0.0) || !(lambda > 0.0) {
            return Err(Error::domain("κ* and λ must be positive"));
        }
        let sigma = r.powf(1.0 + kappa_star);
        let t1 = (r / sigma).ln() / lambda;
        let a = growth_constant(m, xi);
        let t4_eps = (lambda * epsilon / (2.0 * a * r * r * theta_star_mnorm.powi(2))).ln() / (2.0 * lambda);
        Ok(PhasePlan {
            r,
            kappa_star,
            sigma,
            lambda,
            t1,
            a,
            epsilon,
            t4_eps,
            t2_eps: t1 + t4_eps,
        })
    }
}

/// Trajectory CSV.
///
/// Columns: `epoch,time,loss,min_margin`, then for each tracked neuron `j`:
/// `n{j}_u,n{j}_v_norm,n{j}_angle_to_ref_0..,n{j}_balance_drift`, then
/// `first_layer_scale,max_neuron_norm,sign_violations`.
pub fn write_trajectory_csv(path: &Path, records: &[TrajectoryRecord]) -> Result<()> {
    use crate::csvio::fmt;
    let mut w = crate::csvio::writer(path)?;
    let mut header: Vec<String> = ["epoch", "time", "loss", "min_margin"].map(String::from).to_vec();
    if let Some(first) = records.first() {
        for n in &first.neurons {
            let j = n.index;
            header.push(format!("n{j}_u"));
            header.push(format!("n{j}_v_norm"));
            header.extend((0..n.angles.len()).map(|k| format!("n{j}_angle_to_ref_{k}")));
            header.push(format!("n{j}_balance_drift"));
        }
    }
    header.extend(["first_layer_scale", "max_neuron_norm", "sign_violations"].map(String::from));
    w.write_record(&header)?;
    for r in records {
        let mut row = vec![r.epoch.to_string(), fmt(r.time), fmt(r.loss), fmt(r.min_margin)];
        for n in &r.neurons {
            row.push(fmt(n.u));
            row.push(fmt(n.v_norm));
            row.extend(n.angles.iter().map(|a| fmt(*a)));
            row.push(fmt(n.balance_drift));
        }
        row.push(fmt(r.first_layer_scale));
        row.push(fmt(r.max_neuron_norm));
        row.push(r.sign_violations.to_string());
        w.write_record(&row)?;
    }
    crate::csvio::finish(w, path)
}
