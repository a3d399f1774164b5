//! Normalized margin `γ = min_i f(θ, x_i) y_i / ||θ||²`, the four-neuron
//! max-margin direction `θ̆`, a brute-force local-maximality probe, and the
//! first-time detector for a margin threshold.

use rand_distr::{Distribution, StandardNormal};

use crate::activation::{ActivationCfg, ActivationKind};
use crate::dynamics::TrajectoryRecord;
use crate::error::{Error, Result};
use crate::linalg::{dot, norm, LabeledDataset};
use crate::network::{margins, Params};
use crate::rng::rng_from_seed;

/// Margin level guaranteeing perfect classification in the four-neuron analysis.
pub const ACCURACY_MARGIN: f64 = 4.67;

#[derive(Clone, Debug, PartialEq)]
pub struct MarginReport {
    pub gamma: f64,
    pub argmin: usize,
    pub margins: Vec<f64>,
}

pub fn normalized_margin(theta: &Params, cfg: &ActivationCfg, data: &LabeledDataset) -> Result<MarginReport> {
    let n2 = theta.norm_sq();
    if n2 == 0.0 {
        return Err(Error::domain("normalized margin of θ = 0"));
    }
    let m = margins(theta, cfg, data)?;
    let (argmin, min) = m
        .iter()
        .enumerate()
        .fold((0, f64::INFINITY), |b, (i, &v)| if v < b.1 { (i, v) } else { b });
    Ok(MarginReport {
        gamma: min / n2,
        argmin,
        margins: m,
    })
}

/// Cluster directions in neuron order: `e1 (u > 0)`, `e2 (u < 0)`, `-e1 (u > 0)`, `-e2 (u < 0)`.
pub fn cluster_directions(d: usize) -> Result<[(Vec<f64>, i8); 4]> {
    if d < 2 {
        return Err(Error::domain("cluster directions need d ≥ 2"));
    }
    let e = |k: usize, s: f64| {
        let mut v = vec![0.0; d];
        v[k] = s;
        v
    };
    Ok([(e(0, 1.0), 1), (e(1, 1.0), -1), (e(0, -1.0), 1), (e(1, -1.0), -1)])
}

/// `θ̆`: one unit-balanced neuron per cluster, `|u_k| = ||v_k|| = 1`, so `||θ̆||² = 8`.
pub fn theta_breve(d: usize) -> Result<Params> {
    let neurons: Vec<(f64, Vec<f64>)> = cluster_directions(d)?
        .into_iter()
        .map(|(v, s)| (f64::from(s), v))
        .collect();
    Params::from_neurons(d, &neurons)
}

/// `θ / ||θ||`
pub fn unit_direction_of(theta: &Params) -> Result<Params> {
    let n = theta.norm_sq().sqrt();
    if n == 0.0 {
        return Err(Error::domain("direction of θ = 0"));
    }
    Ok(theta.scaled(1.0 / n))
}

/// Activation region of every neuron on every point; a probe must not change it.
fn activation_pattern(theta: &Params, cfg: &ActivationCfg, data: &LabeledDataset) -> Vec<i8> {
    let mut out = Vec::with_capacity(theta.m() * data.len());
    for j in 0..theta.m() {
        let v = theta.v(j);
        let vn = norm(v);
        for x in data.points() {
            let vx = dot(v, x);
            let region = match cfg.kind() {
                ActivationKind::ExactRelu => {
                    if vx > 0.0 {
                        1
                    } else if vx < 0.0 {
                        -1
                    } else {
                        0
                    }
                }
                ActivationKind::Smoothed => {
                    let c = if vn > 0.0 { vx / (cfg.xi() * vn) } else { 0.0 };
                    if c >= 1.0 {
                        1
                    } else if c <= -1.0 {
                        -1
                    } else {
                        0
                    }
                }
            };
            out.push(region);
        }
    }
    out
}

#[derive(Clone, Debug, PartialEq)]
pub struct ProbeReport {
    pub base_gamma: f64,
    /// `max_s γ(θ̂ + p_s) - γ(θ̂)` over the samples.
    pub max_gain: f64,
    /// Samples with `γ(θ̂ + p_s) - γ(θ̂) > PROBE_TOL`.
    pub improved: usize,
    pub samples: usize,
    pub radius: f64,
    /// No sample improves the margin beyond `PROBE_TOL`.
    pub pass: bool,
}

pub const PROBE_TOL: f64 = 1e-12;

/// Samples `n_perturb` perturbations of norm `radius` in parameter space around
/// the unit-norm direction `θ̂` and reports the largest margin gain.
///
/// Every perturbation must keep the activation pattern on the data fixed;
/// otherwise the radius is rejected.
pub fn local_max_margin_probe(
    theta_hat: &Params,
    cfg: &ActivationCfg,
    data: &LabeledDataset,
    n_perturb: usize,
    radius: f64,
    seed: u64,
) -> Result<ProbeReport> {
    if !(radius >= 0.0) {
        return Err(Error::domain("probe radius must be non-negative"));
    }
    let base = unit_direction_of(theta_hat)?;
    let base_gamma = normalized_margin(&base, cfg, data)?.gamma;
    let pattern = activation_pattern(&base, cfg, data);
    let flat = base.flat();
    let mut rng = rng_from_seed(seed);
    let mut max_gain = if n_perturb == 0 { 0.0 } else { f64::NEG_INFINITY };
    let mut improved = 0;
    for sample in 0..n_perturb {
        let mut z: Vec<f64> = (0..flat.len()).map(|_| StandardNormal.sample(&mut rng)).collect();
        let zn = norm(&z);
        z.iter_mut().for_each(|c| *c *= radius / zn);
        let moved: Vec<f64> = flat.iter().zip(&z).map(|(a, b)| a + b).collect();
        let cand = unit_direction_of(&base.from_flat(&moved))?;
        if activation_pattern(&cand, cfg, data) != pattern {
            return Err(Error::RadiusTooLarge { sample, radius });
        }
        let gain = normalized_margin(&cand, cfg, data)?.gamma - base_gamma;
        if gain > PROBE_TOL {
            improved += 1;
        }
        max_gain = max_gain.max(gain);
    }
    Ok(ProbeReport {
        base_gamma,
        max_gain,
        improved,
        samples: n_perturb,
        radius,
        pass: improved == 0,
    })
}

/// Deliberately unbalanced control: `u_k` doubled, then renormalized.
pub fn unbalanced_control(theta: &Params, k: usize) -> Result<Params> {
    if k >= theta.m() {
        return Err(Error::domain(format!("neuron {k} out of range")));
    }
    let mut out = theta.clone();
    let v = theta.v(k).to_vec();
    out.set_neuron(k, 2.0 * theta.u(k), &v);
    unit_direction_of(&out)
}

/// First logged epoch whose minimum margin exceeds `threshold`.
pub fn accuracy_time_detector(traj: &[TrajectoryRecord], threshold: f64) -> Option<u64> {
    traj.iter().find(|r| r.min_margin > threshold).map(|r| r.epoch)
}
