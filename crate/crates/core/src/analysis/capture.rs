//! Monte-Carlo estimate of the probability that `m` random neurons capture
//! every extremum of `|G|` with the right sign under the linearized sphere flow.

use std::path::Path;

use rand::Rng as _;
use rayon::prelude::*;

use crate::activation::ActivationCfg;
use crate::csvio::fmt;
use crate::error::{Error, Result};
use crate::gfield::{sphere_ascend, AscentCfg, GLandscape};
use crate::linalg::LabeledDataset;
use crate::network::sample_sphere;
use crate::rng::{rng_from_seed, substream_seed};

/// A terminal within this angle (radians) of an extremum counts as captured by it.
pub const CAPTURE_ANGLE: f64 = 0.05;

/// Terminals only need to land in the right basin, so the ascent is loose.
pub fn capture_ascent() -> AscentCfg {
    AscentCfg {
        h0: 0.25,
        h_max: 0.5,
        max_steps: 20_000,
        grad_tol: 1e-6,
        ..AscentCfg::default()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct CaptureRow {
    pub m: usize,
    pub captures: usize,
    pub trials: usize,
    pub frequency: f64,
    /// `1 - 4 h^m`, the checked lower bound.
    pub bound: f64,
    /// `(1 - h^m)^4`, reported for comparison.
    pub product_bound: f64,
    /// Binomial standard error at the bound.
    pub std_err: f64,
    /// `frequency ≥ bound - 2 std_err`
    pub pass: bool,
}

#[derive(Clone, Debug, PartialEq)]
pub struct CaptureReport {
    /// Per-neuron miss probability `h = 1 - (1 - (δ+ξ))/4`.
    pub h: f64,
    pub n_extrema: usize,
    pub rows: Vec<CaptureRow>,
}

impl CaptureReport {
    pub fn all_pass(&self) -> bool {
        self.rows.iter().all(|r| r.pass)
    }

    /// Frequencies never drop by more than two standard errors as `m` grows.
    pub fn monotone_within_error(&self) -> bool {
        self.rows.windows(2).all(|w| {
            let se = |r: &CaptureRow| (r.frequency * (1.0 - r.frequency) / r.trials as f64).sqrt();
            w[1].frequency >= w[0].frequency - 2.0 * (se(&w[0]) + se(&w[1]))
        })
    }

    pub fn to_text(&self) -> String {
        let mut s = format!("h = {:.6}, extrema = {}\n", self.h, self.n_extrema);
        s.push_str("m     freq      bound      (1-h^m)^4  pass\n");
        for r in &self.rows {
            s.push_str(&format!(
                "{:<5} {:<9.6} {:<10.6} {:<10.6} {}\n",
                r.m, r.frequency, r.bound, r.product_bound, r.pass
            ));
        }
        s
    }

    /// Columns: `m,captures,trials,frequency,bound,product_bound,std_err,pass`.
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut w = crate::csvio::writer(path)?;
        w.write_record(["m", "captures", "trials", "frequency", "bound", "product_bound", "std_err", "pass"])?;
        for r in &self.rows {
            w.write_record([
                r.m.to_string(),
                r.captures.to_string(),
                r.trials.to_string(),
                fmt(r.frequency),
                fmt(r.bound),
                fmt(r.product_bound),
                fmt(r.std_err),
                r.pass.to_string(),
            ])?;
        }
        crate::csvio::finish(w, path)
    }
}

/// Extremum index captured by one neuron, if any.
fn captured_by(
    data: &LabeledDataset,
    cfg: &ActivationCfg,
    land: &GLandscape,
    start: &[f64],
    s: i8,
    opts: &AscentCfg,
) -> Result<Option<usize>> {
    let terminal = match sphere_ascend(data, cfg, start, s, opts) {
        Ok(out) => out.direction,
        Err(Error::NoConvergence { last, .. }) => last,
        Err(e) => return Err(e),
    };
    let (k, angle) = land.nearest(&terminal);
    Ok((angle <= CAPTURE_ANGLE && land.extrema[k].sign == s).then_some(k))
}

/// `m_list` must be increasing. Each trial draws `max(m_list)` neurons once and
/// evaluates every `m` on a prefix, so frequencies are coupled across `m`.
/// `delta_plus_xi` enters only the reported bound.
pub fn capture_probability_mc(
    data: &LabeledDataset,
    cfg: &ActivationCfg,
    land: &GLandscape,
    m_list: &[usize],
    n_trials: usize,
    delta_plus_xi: f64,
    seed: u64,
) -> Result<CaptureReport> {
    if m_list.is_empty() || m_list.windows(2).any(|w| w[1] <= w[0]) || m_list[0] == 0 {
        return Err(Error::domain("m_list must be positive and strictly increasing"));
    }
    if n_trials == 0 {
        return Err(Error::domain("n_trials must be positive"));
    }
    if !(0.0..1.0).contains(&delta_plus_xi) {
        return Err(Error::domain("δ+ξ must lie in [0, 1)"));
    }
    let p = land.extrema.len();
    if p == 0 {
        return Err(Error::domain("landscape has no extrema"));
    }
    let m_max = *m_list.last().expect("non-empty");
    let d = cfg.dim();
    let opts = capture_ascent();

    // per trial: first prefix length at which all extrema are captured
    let first_full: Vec<Option<usize>> = (0..n_trials as u64)
        .into_par_iter()
        .map(|t| -> Result<Option<usize>> {
            let mut rng = rng_from_seed(substream_seed(seed, t));
            let mut seen = vec![false; p];
            let mut left = p;
            for j in 0..m_max {
                let start = sample_sphere(&mut rng, d);
                let s: i8 = if rng.random::<bool>() { 1 } else { -1 };
                if let Some(k) = captured_by(data, cfg, land, &start, s, &opts)? {
                    if !seen[k] {
                        seen[k] = true;
                        left -= 1;
                        if left == 0 {
                            return Ok(Some(j + 1));
                        }
                    }
                }
            }
            Ok(None)
        })
        .collect::<Result<_>>()?;

    let h = 1.0 - (1.0 - delta_plus_xi) / 4.0;
    let rows = m_list
        .iter()
        .map(|&m| {
            let captures = first_full.iter().filter(|f| f.is_some_and(|k| k <= m)).count();
            let frequency = captures as f64 / n_trials as f64;
            let hm = h.powi(m as i32);
            let bound = 1.0 - 4.0 * hm;
            let b = bound.clamp(0.0, 1.0);
            let std_err = (b * (1.0 - b) / n_trials as f64).sqrt();
            CaptureRow {
                m,
                captures,
                trials: n_trials,
                frequency,
                bound,
                product_bound: (1.0 - hm).powi(4),
                std_err,
                pass: frequency >= bound - 2.0 * std_err,
            }
        })
        .collect();
    Ok(CaptureReport { h, n_extrema: p, rows })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::datasets::{gen_xor, XorSpec};
    use crate::gfield::find_extrema;

    fn setup() -> (LabeledDataset, ActivationCfg, GLandscape) {
        let data = gen_xor(&XorSpec {
            d: 3,
            per_cluster: 1,
            delta: 0.01,
            delta0: 0.001,
            xi: 0.001,
            seed: 4,
        })
        .unwrap();
        let cfg = ActivationCfg::smoothed(3, 0.001).unwrap();
        let land = find_extrema(&data, &cfg, 64, 2, 0.01).unwrap();
        (data, cfg, land)
    }

    #[test]
    fn one_neuron_never_captures_four() {
        let (data, cfg, land) = setup();
        assert_eq!(land.extrema.len(), 4);
        let rep = capture_probability_mc(&data, &cfg, &land, &[1, 2, 8], 50, 0.011, 1).unwrap();
        assert_eq!(rep.rows[0].captures, 0);
        assert!(rep.monotone_within_error());
        assert!(rep.rows.windows(2).all(|w| w[1].captures >= w[0].captures));
    }

    #[test]
    fn deterministic_and_validated() {
        let (data, cfg, land) = setup();
        let a = capture_probability_mc(&data, &cfg, &land, &[4], 10, 0.0, 9).unwrap();
        let b = capture_probability_mc(&data, &cfg, &land, &[4], 10, 0.0, 9).unwrap();
        assert_eq!(a, b);
        assert!(capture_probability_mc(&data, &cfg, &land, &[4, 4], 10, 0.0, 9).is_err());
        assert!(capture_probability_mc(&data, &cfg, &land, &[0], 10, 0.0, 9).is_err());
    }
}
