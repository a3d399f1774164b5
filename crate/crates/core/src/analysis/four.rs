//! The four-neuron XOR experiment: neurons start on the cluster directions with
//! prescribed second-layer weights and are trained by gradient descent.

use crate::activation::ActivationCfg;
use crate::dynamics::{gd_run, LogSpec, Run, Schedule};
use crate::error::{Error, Result};
use crate::linalg::{norm, sub, LabeledDataset};
use crate::network::Params;

use super::margin::{cluster_directions, theta_breve, unit_direction_of};

/// Window boundaries of the evolution figure, in epochs.
pub const WINDOW_EDGES: [u64; 2] = [3584, 15872];

/// `u_k(0) = init_k`, `v_k(0) = |init_k| · dir_k`. The sign of `init_k` must
/// match the sign of cluster `k`.
pub fn four_neuron_init(init: [f64; 4], d: usize) -> Result<Params> {
    let dirs = cluster_directions(d)?;
    let mut neurons = Vec::with_capacity(4);
    for (k, ((dir, s), u)) in dirs.into_iter().zip(init).enumerate() {
        if !(u.is_finite() && u != 0.0) || (u > 0.0) != (s > 0) {
            return Err(Error::domain(format!(
                "init {k} = {u} must be nonzero with the sign of its cluster ({s})"
            )));
        }
        neurons.push((u, dir.iter().map(|c| u.abs() * c).collect()));
    }
    Params::from_neurons(d, &neurons)
}

/// `||θ/||θ|| - θ̆/||θ̆|| ||`
pub fn breve_distance(theta: &Params) -> Result<f64> {
    let a = unit_direction_of(theta)?.flat();
    let b = unit_direction_of(&theta_breve(theta.dim())?)?.flat();
    Ok(norm(&sub(&a, &b)))
}

/// Gradient descent with the adaptive schedule, logging all four neurons,
/// their signed angles to the cluster directions, and parameter snapshots.
pub fn train4(theta0: &Params, cfg: &ActivationCfg, data: &LabeledDataset, epochs: u64, log_every: u64) -> Result<Run> {
    if theta0.m() != 4 {
        return Err(Error::domain("train4 needs exactly four neurons"));
    }
    let refs = cluster_directions(theta0.dim())?.map(|(v, _)| v).to_vec();
    let log = LogSpec::new(log_every)
        .with_refs(refs)
        .tracking(vec![0, 1, 2, 3])
        .keeping_snapshots();
    gd_run(theta0, cfg, data, &Schedule::Sec54, epochs, &log)
}

#[derive(Clone, Debug, PartialEq)]
pub struct FourSummary {
    /// Angle of `v_k` to its own cluster direction at the final record.
    pub alphas: [f64; 4],
    pub v_norms: [f64; 4],
    /// `max ||v_k|| / min ||v_k|| - 1`
    pub norm_spread: f64,
    /// `(epoch, breve_distance)` for records at or after the last window edge.
    pub last_window: Vec<(u64, f64)>,
}

impl FourSummary {
    pub fn last_window_decreasing(&self) -> bool {
        self.last_window.len() >= 2 && self.last_window.windows(2).all(|w| w[1].1 < w[0].1)
    }

    pub fn max_abs_alpha(&self) -> f64 {
        self.alphas.iter().map(|a| a.abs()).fold(0.0, f64::max)
    }

    /// `max(|α₁ - α₃|, |α₂ - α₄|)`
    pub fn pairing_gap(&self) -> f64 {
        (self.alphas[0] - self.alphas[2])
            .abs()
            .max((self.alphas[1] - self.alphas[3]).abs())
    }
}

/// Needs a run from [`train4`].
pub fn summarize_four(run: &Run) -> Result<FourSummary> {
    let last = run.records.last().ok_or_else(|| Error::domain("empty run"))?;
    if last.neurons.len() != 4 || run.snapshots.len() != run.records.len() {
        return Err(Error::domain("run was not produced by train4"));
    }
    let alphas = std::array::from_fn(|k| last.neurons[k].angles[k]);
    let v_norms: [f64; 4] = std::array::from_fn(|k| last.neurons[k].v_norm);
    let hi = v_norms.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let lo = v_norms.iter().copied().fold(f64::INFINITY, f64::min);
    let last_window = run
        .records
        .iter()
        .zip(&run.snapshots)
        .filter(|(r, _)| r.epoch >= WINDOW_EDGES[1])
        .map(|(r, th)| Ok((r.epoch, breve_distance(th)?)))
        .collect::<Result<_>>()?;
    Ok(FourSummary {
        alphas,
        v_norms,
        norm_spread: hi / lo - 1.0,
        last_window,
    })
}
