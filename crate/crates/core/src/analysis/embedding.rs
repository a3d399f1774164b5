//! The embedding `χ` from a `p`-neuron network into the full `m`-neuron one,
//! and the reduction that builds the `p`-neuron initialization from a
//! phase-1 terminal state.

use crate::error::{Error, Result};
use crate::gfield::GLandscape;
use crate::linalg::norm;
use crate::network::Params;

/// Tolerance on the group-sum condition `Σ_j c_j² = 1`.
pub const GROUP_SUM_TOL: f64 = 1e-9;

#[derive(Clone, Debug, PartialEq)]
pub struct EmbeddingGroup {
    pub members: Vec<usize>,
    /// Shared unit direction `v̂*` of the group.
    pub direction: Vec<f64>,
    pub sign: i8,
    /// Phase-1 limit scales `u*_j`, one per member.
    pub u_star: Vec<f64>,
}

impl EmbeddingGroup {
    /// `√Σ_j (u*_j)²`
    pub fn u_star_norm(&self) -> f64 {
        norm(&self.u_star)
    }

    /// `χ` coefficients `r u*_j / ũ_k(T1) = u*_j / (s √Σ(u*)²)`.
    pub fn coefficients(&self) -> Vec<f64> {
        let n = self.u_star_norm();
        let s = f64::from(self.sign);
        self.u_star.iter().map(|u| u / (s * n)).collect()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct EmbeddingMap {
    pub m: usize,
    pub groups: Vec<EmbeddingGroup>,
    pub residual: Vec<usize>,
}

impl EmbeddingMap {
    /// Checks that groups and residual partition `[m]` and members agree in shape.
    pub fn new(m: usize, groups: Vec<EmbeddingGroup>, residual: Vec<usize>) -> Result<Self> {
        let mut seen = vec![false; m];
        let mut mark = |j: usize| -> Result<()> {
            if j >= m {
                return Err(Error::Consistency(format!("neuron {j} out of range (m = {m})")));
            }
            if seen[j] {
                return Err(Error::Consistency(format!("neuron {j} appears twice")));
            }
            seen[j] = true;
            Ok(())
        };
        for g in &groups {
            if g.members.len() != g.u_star.len() || g.members.is_empty() {
                return Err(Error::Consistency("group members and u* differ in length".into()));
            }
            if g.sign.abs() != 1 {
                return Err(Error::Consistency("group sign must be ±1".into()));
            }
            for &j in &g.members {
                mark(j)?;
            }
        }
        for &j in &residual {
            mark(j)?;
        }
        if let Some(j) = seen.iter().position(|s| !s) {
            return Err(Error::Consistency(format!("neuron {j} is in no group and not residual")));
        }
        Ok(EmbeddingMap { m, groups, residual })
    }

    pub fn p(&self) -> usize {
        self.groups.len()
    }

    pub fn prominent(&self) -> Vec<usize> {
        let mut out: Vec<usize> = self.groups.iter().flat_map(|g| g.members.iter().copied()).collect();
        out.sort_unstable();
        out
    }
}

/// Splits neurons of a phase-1 terminal state into groups around landscape
/// extrema (`P`) and the residual set (`R`).
///
/// `j ∈ P` iff `v̂_j` is within `angle_tol` of an extremum and
/// `max(|u_j|, ||v_j||) ≥ scale_tol · ||θ||_[m]`. The limit scales are read
/// off as `u*_j = u_j(T1) / r`.
pub fn group_prominent(
    theta_t1: &Params,
    landscape: &GLandscape,
    angle_tol: f64,
    scale_tol: f64,
    r: f64,
) -> Result<EmbeddingMap> {
    if landscape.extrema.is_empty() {
        return Err(Error::NoProminentNeurons);
    }
    let top = theta_t1.max_neuron_norm();
    let mut members: Vec<Vec<usize>> = vec![Vec::new(); landscape.extrema.len()];
    let mut residual = Vec::new();
    for j in 0..theta_t1.m() {
        let v = theta_t1.v(j);
        let scale = theta_t1.u(j).abs().max(norm(v));
        if norm(v) == 0.0 || scale < scale_tol * top {
            residual.push(j);
            continue;
        }
        let (k, angle) = landscape.nearest(v);
        if angle <= angle_tol {
            members[k].push(j);
        } else {
            residual.push(j);
        }
    }
    let groups: Vec<EmbeddingGroup> = members
        .into_iter()
        .enumerate()
        .filter(|(_, m)| !m.is_empty())
        .map(|(k, m)| {
            let e = &landscape.extrema[k];
            EmbeddingGroup {
                u_star: m.iter().map(|&j| theta_t1.u(j) / r).collect(),
                members: m,
                direction: e.direction.clone(),
                sign: e.sign,
            }
        })
        .collect();
    if groups.is_empty() {
        return Err(Error::NoProminentNeurons);
    }
    EmbeddingMap::new(theta_t1.m(), groups, residual)
}

/// `p`-neuron initialization `ũ_k = s r √Σ(u*_j)²`, `ṽ_k = r |ũ_k| v̂*`.
pub fn reduce_to_p(theta_t1: &Params, emb: &EmbeddingMap, r: f64) -> Result<Params> {
    if theta_t1.m() != emb.m {
        return Err(Error::Consistency(format!(
            "embedding is for m = {}, parameters have m = {}",
            emb.m,
            theta_t1.m()
        )));
    }
    if emb.groups.is_empty() {
        return Err(Error::NoProminentNeurons);
    }
    let neurons: Vec<(f64, Vec<f64>)> = emb
        .groups
        .iter()
        .map(|g| {
            let u = f64::from(g.sign) * r * g.u_star_norm();
            let v = g.direction.iter().map(|c| r * u.abs() * c).collect();
            (u, v)
        })
        .collect();
    Params::from_neurons(theta_t1.dim(), &neurons)
}

/// `χ(θ_p)`: member `j` of group `k` gets `c_j (ũ_k, ṽ_k)`, residual neurons get zero.
pub fn embed_chi(emb: &EmbeddingMap, theta_p: &Params) -> Result<Params> {
    if theta_p.m() != emb.p() {
        return Err(Error::Consistency(format!(
            "{} groups but {} reduced neurons",
            emb.p(),
            theta_p.m()
        )));
    }
    let d = theta_p.dim();
    let mut u = vec![0.0; emb.m];
    let mut v = vec![0.0; emb.m * d];
    let mut signs = vec![1i8; emb.m];
    for (k, g) in emb.groups.iter().enumerate() {
        let c = g.coefficients();
        let sum_sq: f64 = c.iter().map(|x| x * x).sum();
        if !((sum_sq - 1.0).abs() <= GROUP_SUM_TOL) {
            return Err(Error::Consistency(format!(
                "group {k}: Σ c_j² = {sum_sq}, expected 1"
            )));
        }
        for (&j, &cj) in g.members.iter().zip(&c) {
            u[j] = cj * theta_p.u(k);
            for (dst, src) in v[j * d..(j + 1) * d].iter_mut().zip(theta_p.v(k)) {
                *dst = cj * src;
            }
            signs[j] = g.sign;
        }
    }
    Params::with_signs(d, u, v, signs)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::activation::ActivationCfg;
    use crate::gfield::ExtremumRecord;
    use crate::network::{forward, sample_sphere};
    use crate::rng::rng_from_seed;

    fn landscape(dirs: &[(Vec<f64>, i8)]) -> GLandscape {
        GLandscape {
            extrema: dirs
                .iter()
                .map(|(d, s)| ExtremumRecord {
                    direction: d.clone(),
                    value: f64::from(*s) * 0.125,
                    sign: *s,
                    basin_hits: 1,
                })
                .collect(),
            lambda: 0.125,
            dataset_digest: String::new(),
        }
    }

    #[test]
    fn neurons_on_extrema_are_all_prominent() {
        let land = landscape(&[(vec![1.0, 0.0], 1), (vec![0.0, 1.0], -1)]);
        let th = Params::from_neurons(2, &[(1.0, vec![1.0, 0.0]), (-1.0, vec![0.0, 1.0]), (1.0, vec![1.0, 0.0])]).unwrap();
        let emb = group_prominent(&th, &land, 0.1, 1e-2, 1.0).unwrap();
        assert!(emb.residual.is_empty());
        assert_eq!(emb.p(), 2);
        assert_eq!(emb.groups[0].members, vec![0, 2]);
    }

    #[test]
    fn small_neurons_are_residual() {
        let land = landscape(&[(vec![1.0, 0.0], 1)]);
        let th = Params::from_neurons(2, &[(1.0, vec![1.0, 0.0]), (1e-6, vec![0.0, 1e-6])]).unwrap();
        let emb = group_prominent(&th, &land, 0.1, 1e-3, 1.0).unwrap();
        assert_eq!(emb.prominent(), vec![0]);
        assert_eq!(emb.residual, vec![1]);
        let far = Params::from_neurons(2, &[(1.0, vec![0.0, 1.0])]).unwrap();
        assert!(matches!(group_prominent(&far, &land, 0.1, 1e-3, 1.0), Err(Error::NoProminentNeurons)));
    }

    #[test]
    fn grouping_is_permutation_equivariant() {
        let land = landscape(&[(vec![1.0, 0.0], 1), (vec![0.0, 1.0], -1)]);
        let neurons = vec![(1.0, vec![1.0, 0.01]), (-0.5, vec![0.0, 0.5]), (1e-5, vec![0.7e-5, 0.7e-5]), (0.8, vec![0.8, -0.02])];
        let perm = [2usize, 0, 3, 1];
        let permuted: Vec<(f64, Vec<f64>)> = perm.iter().map(|&i| neurons[i].clone()).collect();
        let a = group_prominent(&Params::from_neurons(2, &neurons).unwrap(), &land, 0.1, 1e-3, 1.0).unwrap();
        let b = group_prominent(&Params::from_neurons(2, &permuted).unwrap(), &land, 0.1, 1e-3, 1.0).unwrap();
        for (ga, gb) in a.groups.iter().zip(&b.groups) {
            let mut mapped: Vec<usize> = gb.members.iter().map(|&j| perm[j]).collect();
            mapped.sort_unstable();
            assert_eq!(mapped, ga.members);
        }
        let mapped_r: Vec<usize> = b.residual.iter().map(|&j| perm[j]).collect();
        assert_eq!(mapped_r, a.residual);
    }

    #[test]
    fn reduction_examples() {
        let single = EmbeddingMap::new(
            1,
            vec![EmbeddingGroup {
                members: vec![0],
                direction: vec![1.0, 0.0],
                sign: 1,
                u_star: vec![1.0],
            }],
            vec![],
        )
        .unwrap();
        let th = Params::from_neurons(2, &[(0.1, vec![0.1, 0.0])]).unwrap();
        let p = reduce_to_p(&th, &single, 0.1).unwrap();
        assert!((p.u(0) - 0.1).abs() < 1e-15);
        assert!((p.v(0)[0] - 0.01).abs() < 1e-15 && p.v(0)[1] == 0.0);
        assert!((norm(p.v(0)) - 0.1 * p.u(0).abs()).abs() < 1e-15);

        let pair = EmbeddingMap::new(
            2,
            vec![EmbeddingGroup {
                members: vec![0, 1],
                direction: vec![0.0, 1.0],
                sign: 1,
                u_star: vec![3.0, 4.0],
            }],
            vec![],
        )
        .unwrap();
        let th2 = Params::from_neurons(2, &[(3.0, vec![0.0, 3.0]), (4.0, vec![0.0, 4.0])]).unwrap();
        assert_eq!(reduce_to_p(&th2, &pair, 1.0).unwrap().u(0), 5.0);
    }

    #[test]
    fn chi_identity_and_residual_zero() {
        let groups: Vec<EmbeddingGroup> = (0..3)
            .map(|k| EmbeddingGroup {
                members: vec![k],
                direction: if k % 2 == 0 { vec![1.0, 0.0] } else { vec![0.0, 1.0] },
                sign: 1,
                u_star: vec![2.0],
            })
            .collect();
        let emb = EmbeddingMap::new(4, groups, vec![3]).unwrap();
        let tp = Params::from_neurons(2, &[(0.3, vec![0.2, 0.1]), (0.5, vec![-0.1, 0.4]), (0.2, vec![0.3, 0.3])]).unwrap();
        let full = embed_chi(&emb, &tp).unwrap();
        for k in 0..3 {
            assert_eq!(full.u(k), tp.u(k));
            assert_eq!(full.v(k), tp.v(k));
        }
        assert_eq!(full.u(3), 0.0);
        assert_eq!(full.v(3), &[0.0, 0.0]);
    }

    #[test]
    fn chi_preserves_function() {
        let emb = EmbeddingMap::new(
            2,
            vec![EmbeddingGroup {
                members: vec![0, 1],
                direction: vec![0.6, 0.8],
                sign: 1,
                u_star: vec![3.0, 4.0],
            }],
            vec![],
        )
        .unwrap();
        let c = emb.groups[0].coefficients();
        assert!((c[0] - 0.6).abs() < 1e-15 && (c[1] - 0.8).abs() < 1e-15);
        let tp = Params::from_neurons(3, &[(0.7, vec![0.3, -0.2, 0.5])]).unwrap();
        let full = embed_chi(&emb, &tp).unwrap();
        let mut rng = rng_from_seed(1);
        for cfg in [ActivationCfg::exact_relu(3).unwrap(), ActivationCfg::smoothed(3, 0.2).unwrap()] {
            for _ in 0..100 {
                let x: Vec<f64> = sample_sphere(&mut rng, 3).iter().map(|c| 0.9 * c).collect();
                let a = forward(&tp, &cfg, &x).unwrap();
                let b = forward(&full, &cfg, &x).unwrap();
                assert!((a - b).abs() <= 1e-12 * a.abs() + 1e-15, "{a} vs {b}");
            }
        }
    }

    #[test]
    fn bad_maps_are_rejected() {
        let g = |members: Vec<usize>| EmbeddingGroup {
            u_star: vec![1.0; members.len()],
            members,
            direction: vec![1.0, 0.0],
            sign: 1,
        };
        assert!(EmbeddingMap::new(2, vec![g(vec![0]), g(vec![0])], vec![1]).is_err());
        assert!(EmbeddingMap::new(3, vec![g(vec![0])], vec![1]).is_err());
        let mut bad = EmbeddingMap::new(1, vec![g(vec![0])], vec![]).unwrap();
        bad.groups[0].u_star = vec![f64::NAN];
        let tp = Params::from_neurons(2, &[(1.0, vec![1.0, 0.0])]).unwrap();
        assert!(matches!(embed_chi(&bad, &tp), Err(Error::Consistency(_))));
    }
}
