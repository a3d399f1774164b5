//! Where the hidden neurons point, and how much of the first-layer mass sits
//! near each reference direction.

use std::path::Path;

use crate::csvio::fmt;
use crate::error::{Error, Result};
use crate::linalg::{angle_between, dot, norm};
use crate::network::Params;

#[derive(Clone, Debug, PartialEq)]
pub struct NeuronAlignment {
    pub index: usize,
    /// Nearest reference by angle; `None` for a zero neuron.
    pub nearest: Option<usize>,
    pub angle: f64,
    /// `||v_j||² / Σ_k ||v_k||²`
    pub relative_scale: f64,
    /// `atan2(v_j[1], v_j[0])`, the polar angle in the first coordinate plane.
    pub polar_angle: f64,
    pub u: f64,
    pub v_norm: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct AlignmentReport {
    pub neurons: Vec<NeuronAlignment>,
    pub tol_angle: f64,
    /// Relative-scale mass within `tol_angle` of each reference.
    pub mass_within_tol: Vec<f64>,
    /// `sqrt(Σ_j ||v_j||²)`
    pub first_layer_scale: f64,
}

impl AlignmentReport {
    pub fn total_aligned_mass(&self) -> f64 {
        self.mass_within_tol.iter().sum()
    }

    pub fn to_text(&self) -> String {
        let mut s = format!(
            "first-layer scale {:.6}\naligned mass within {:.3} rad: {:.6}\n",
            self.first_layer_scale,
            self.tol_angle,
            self.total_aligned_mass()
        );
        for (k, m) in self.mass_within_tol.iter().enumerate() {
            s.push_str(&format!("  ref {k}: {m:.6}\n"));
        }
        s
    }

    /// Columns: `neuron,polar_angle,nearest_ref,angle_to_nearest,relative_scale,u,v_norm`.
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut w = crate::csvio::writer(path)?;
        w.write_record(["neuron", "polar_angle", "nearest_ref", "angle_to_nearest", "relative_scale", "u", "v_norm"])?;
        for n in &self.neurons {
            w.write_record([
                n.index.to_string(),
                fmt(n.polar_angle),
                n.nearest.map_or_else(|| "-1".to_string(), |k| k.to_string()),
                fmt(n.angle),
                fmt(n.relative_scale),
                fmt(n.u),
                fmt(n.v_norm),
            ])?;
        }
        crate::csvio::finish(w, path)
    }
}

pub fn alignment_report(theta: &Params, refs: &[Vec<f64>], tol_angle: f64) -> Result<AlignmentReport> {
    if refs.is_empty() {
        return Err(Error::domain("alignment needs at least one reference direction"));
    }
    if refs.iter().any(|r| r.len() != theta.dim() || (norm(r) - 1.0).abs() > 1e-10) {
        return Err(Error::domain("reference directions must be unit vectors of the network dimension"));
    }
    let total: f64 = (0..theta.m()).map(|j| dot(theta.v(j), theta.v(j))).sum();
    let mut mass = vec![0.0; refs.len()];
    let neurons = (0..theta.m())
        .map(|j| {
            let v = theta.v(j);
            let vn = norm(v);
            let rel = if total > 0.0 { vn * vn / total } else { 0.0 };
            let (nearest, angle) = if vn > 0.0 {
                let (k, a) = refs
                    .iter()
                    .enumerate()
                    .map(|(k, r)| (k, angle_between(v, r)))
                    .fold((0, f64::INFINITY), |b, c| if c.1 < b.1 { c } else { b });
                if a <= tol_angle {
                    mass[k] += rel;
                }
                (Some(k), a)
            } else {
                (None, f64::NAN)
            };
            let polar_angle = if theta.dim() >= 2 { v[1].atan2(v[0]) } else { 0.0 };
            NeuronAlignment {
                index: j,
                nearest,
                angle,
                relative_scale: rel,
                polar_angle,
                u: theta.u(j),
                v_norm: vn,
            }
        })
        .collect();
    Ok(AlignmentReport {
        neurons,
        tol_angle,
        mass_within_tol: mass,
        first_layer_scale: total.sqrt(),
    })
}
