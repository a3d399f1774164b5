//! Phase-1 coupling: integrate the full and the linearized systems from
//! `σ θ⁰` to `T1 = ln(r/σ)/λ` for a sweep of `r` and measure how closely the
//! full network follows the landscape prediction.

use std::path::Path;

use rayon::prelude::*;

use crate::activation::ActivationCfg;
use crate::csvio::fmt;
use crate::dynamics::{flow_to, linearized_run};
use crate::error::{Error, Result};
use crate::gfield::{g_value, sphere_ascend, AscentCfg, GLandscape};
use crate::linalg::{basis, norm, sub, unit_direction, LabeledDataset};
use crate::network::{init_params, InitSpec, Params};

/// Relative slack on `s_j G(v̂*_j) = λ` when classifying prominent neurons.
pub const PROMINENT_REL_TOL: f64 = 1e-6;

/// Small steps so the discrete ascent stays in the basin the continuous flow would pick.
pub fn flow_following_ascent() -> AscentCfg {
    AscentCfg {
        h0: 0.25,
        h_max: 0.5,
        ..AscentCfg::default()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct NeuronLimit {
    /// Terminal direction `v̂*_j` of the sphere flow started at `v̂_j(0)`.
    pub direction: Vec<f64>,
    /// Exponential growth rate `λ_j = s_j G(v̂*_j)`.
    pub rate: f64,
    pub prominent: bool,
    /// `u*_j ≈ ū_j(T) e^{-λT}` from the linearized run of the unscaled base.
    pub u_star: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct CouplingRow {
    pub r: f64,
    pub sigma: f64,
    pub t1: f64,
    /// `max_{j∈P} ||v̂_j(T1) - v̂*_j||` for the full system.
    pub dir_err_p: f64,
    /// Same for the linearized system.
    pub lin_dir_err_p: f64,
    /// `max_{j∈P} |u_j(T1) - r u*_j| / r`
    pub u_gap_over_r: f64,
    /// `||θ(T1) - θ̄(T1)||`
    pub full_lin_dist: f64,
    pub full_lin_dist_over_r: f64,
    pub r_scale_max: f64,
    pub p_scale_min: f64,
    /// `r_scale_max / p_scale_min`
    pub scale_gap: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct CouplingReport {
    pub lambda: f64,
    pub kappa_star: f64,
    pub limits: Vec<NeuronLimit>,
    pub rows: Vec<CouplingRow>,
}

fn strictly_decreasing(xs: impl Iterator<Item = f64>) -> bool {
    let v: Vec<f64> = xs.collect();
    v.windows(2).all(|w| w[1] < w[0])
}

impl CouplingReport {
    pub fn prominent(&self) -> Vec<usize> {
        (0..self.limits.len()).filter(|&j| self.limits[j].prominent).collect()
    }

    pub fn dir_err_decreasing(&self) -> bool {
        strictly_decreasing(self.rows.iter().map(|r| r.dir_err_p))
    }

    pub fn scale_gap_decreasing(&self) -> bool {
        strictly_decreasing(self.rows.iter().map(|r| r.scale_gap))
    }

    pub fn distance_over_r_decreasing(&self) -> bool {
        strictly_decreasing(self.rows.iter().map(|r| r.full_lin_dist_over_r))
    }

    /// Log-log slopes of the prominent direction error between consecutive rows.
    pub fn dir_err_slopes(&self) -> Vec<f64> {
        self.rows
            .windows(2)
            .map(|w| (w[1].dir_err_p / w[0].dir_err_p).ln() / (w[1].r / w[0].r).ln())
            .collect()
    }

    pub fn to_text(&self) -> String {
        let mut s = format!(
            "lambda {:.6e}, kappa* {}, |P| = {}, |R| = {}\n",
            self.lambda,
            self.kappa_star,
            self.prominent().len(),
            self.limits.len() - self.prominent().len()
        );
        s.push_str("r         sigma      T1        dir_err_P  dist/r     R/P scale\n");
        for r in &self.rows {
            s.push_str(&format!(
                "{:<9.4} {:<10.3e} {:<9.4} {:<10.3e} {:<10.3e} {:<10.3e}\n",
                r.r, r.sigma, r.t1, r.dir_err_p, r.full_lin_dist_over_r, r.scale_gap
            ));
        }
        s.push_str(&format!("direction-error slopes: {:?}\n", self.dir_err_slopes()));
        s
    }

    /// Columns: `r,sigma,t1,dir_err_p,lin_dir_err_p,u_gap_over_r,full_lin_dist,full_lin_dist_over_r,r_scale_max,p_scale_min,scale_gap`.
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut w = crate::csvio::writer(path)?;
        w.write_record([
            "r",
            "sigma",
            "t1",
            "dir_err_p",
            "lin_dir_err_p",
            "u_gap_over_r",
            "full_lin_dist",
            "full_lin_dist_over_r",
            "r_scale_max",
            "p_scale_min",
            "scale_gap",
        ])?;
        for r in &self.rows {
            w.write_record(
                [
                    r.r,
                    r.sigma,
                    r.t1,
                    r.dir_err_p,
                    r.lin_dir_err_p,
                    r.u_gap_over_r,
                    r.full_lin_dist,
                    r.full_lin_dist_over_r,
                    r.r_scale_max,
                    r.p_scale_min,
                    r.scale_gap,
                ]
                .map(fmt),
            )?;
        }
        crate::csvio::finish(w, path)
    }
}

/// Unit-balanced random neurons plus neurons parked on coordinate directions
/// `±e_k` with every sign `s` for which `s·G(±e_k)` falls short of `λ`.
///
/// On symmetric data the coordinate directions are critical points of the
/// sphere flow, so the parked neurons stay put and populate the residual set.
pub fn coupling_base(
    data: &LabeledDataset,
    cfg: &ActivationCfg,
    landscape: &GLandscape,
    m_random: usize,
    seed: u64,
) -> Result<Params> {
    let d = cfg.dim();
    let mut neurons: Vec<(f64, Vec<f64>)> = Vec::new();
    if m_random > 0 {
        let random = init_params(&InitSpec::new(1.0, m_random, d, seed), cfg)?;
        neurons.extend((0..m_random).map(|j| (random.u(j), random.v(j).to_vec())));
    }
    for k in 0..d {
        for b in [1.0, -1.0] {
            let v: Vec<f64> = basis(d, k).iter().map(|c| b * c).collect();
            let gv = g_value(data, cfg, &v)?;
            for s in [1.0, -1.0] {
                if s * gv < landscape.lambda * (1.0 - 1e-3) {
                    neurons.push((s, v.clone()));
                }
            }
        }
    }
    Params::from_neurons(d, &neurons)
}

fn neuron_scale(theta: &Params, j: usize) -> f64 {
    theta.u(j).abs().max(norm(theta.v(j)))
}

/// Runs the `r` sweep. `h` is the RK4 step for both systems.
pub fn phase1_coupling(
    data: &LabeledDataset,
    cfg: &ActivationCfg,
    theta0_base: &Params,
    landscape: &GLandscape,
    r_list: &[f64],
    kappa_star: f64,
    h: f64,
) -> Result<CouplingReport> {
    let lambda = landscape.lambda;
    if !(lambda > 0.0) {
        return Err(Error::domain("landscape has λ = 0"));
    }
    if r_list.is_empty() || r_list.iter().any(|&r| !(r > 0.0 && r < 1.0)) {
        return Err(Error::domain("every r must lie in (0, 1)"));
    }
    if !(kappa_star > 0.0) {
        return Err(Error::domain("κ* must be positive"));
    }
    let m = theta0_base.m();
    let ascent = flow_following_ascent();
    let mut limits: Vec<NeuronLimit> = (0..m)
        .into_par_iter()
        .map(|j| -> Result<NeuronLimit> {
            let start = unit_direction(theta0_base.v(j))?;
            let s = theta0_base.sign(j);
            let dir = match sphere_ascend(data, cfg, &start, s, &ascent) {
                Ok(out) => out.direction,
                Err(Error::NoConvergence { last, .. }) => last,
                Err(e) => return Err(e),
            };
            let rate = f64::from(s) * g_value(data, cfg, &dir)?;
            Ok(NeuronLimit {
                prominent: rate >= lambda * (1.0 - PROMINENT_REL_TOL),
                direction: dir,
                rate,
                u_star: 0.0,
            })
        })
        .collect::<Result<_>>()?;
    let prominent: Vec<usize> = (0..m).filter(|&j| limits[j].prominent).collect();
    let residual: Vec<usize> = (0..m).filter(|&j| !limits[j].prominent).collect();
    if prominent.is_empty() {
        return Err(Error::NoProminentNeurons);
    }

    let t1_of = |r: f64| (1.0 / r.powf(kappa_star)).ln() / lambda;
    let t_max = r_list.iter().map(|&r| t1_of(r)).fold(0.0, f64::max);
    let base_lin = linearized_run(theta0_base, cfg, data, t_max, h)?;
    for (j, lim) in limits.iter_mut().enumerate() {
        lim.u_star = base_lin.u(j) * (-lambda * t_max).exp();
    }

    let rows: Vec<CouplingRow> = r_list
        .par_iter()
        .map(|&r| -> Result<CouplingRow> {
            let sigma = r.powf(1.0 + kappa_star);
            let t1 = (r / sigma).ln() / lambda;
            let theta0 = theta0_base.scaled(sigma);
            let full = flow_to(&theta0, cfg, data, t1, h)?;
            let lin = linearized_run(&theta0, cfg, data, t1, h)?;
            let dir_err = |th: &Params| -> Result<f64> {
                let mut worst: f64 = 0.0;
                for &j in &prominent {
                    let vh = unit_direction(th.v(j))?;
                    worst = worst.max(norm(&sub(&vh, &limits[j].direction)));
                }
                Ok(worst)
            };
            let dir_err_p = dir_err(&full)?;
            let lin_dir_err_p = dir_err(&lin)?;
            let u_gap_over_r = prominent
                .iter()
                .map(|&j| (full.u(j) - r * limits[j].u_star).abs() / r)
                .fold(0.0, f64::max);
            let full_lin_dist = norm(&sub(&full.flat(), &lin.flat()));
            let r_scale_max = residual.iter().map(|&j| neuron_scale(&full, j)).fold(0.0, f64::max);
            let p_scale_min = prominent.iter().map(|&j| neuron_scale(&full, j)).fold(f64::INFINITY, f64::min);
            Ok(CouplingRow {
                r,
                sigma,
                t1,
                dir_err_p,
                lin_dir_err_p,
                u_gap_over_r,
                full_lin_dist,
                full_lin_dist_over_r: full_lin_dist / r,
                r_scale_max,
                p_scale_min,
                scale_gap: r_scale_max / p_scale_min,
            })
        })
        .collect::<Result<_>>()?;
    Ok(CouplingReport {
        lambda,
        kappa_star,
        limits,
        rows,
    })
}
