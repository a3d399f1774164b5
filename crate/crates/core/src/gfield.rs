//! The landscape function `G(v) = (1/n) Σ_i (-ℓ'(0)) φ(v, x_i) y_i` that drives
//! early training, its gradient `g = ∇G`, projected ascent on the unit sphere,
//! and enumeration of the global extrema of `|G|`.

use std::path::Path;

use rayon::prelude::*;
use sha2::{Digest, Sha256};

use crate::activation::{ActivationCfg, ActivationKind};
use crate::error::{Error, Result};
use crate::linalg::{angle_between, dot, norm, LabeledDataset, UNIT_TOL};
use crate::network::{neg_loss_derivative_at_zero, sample_sphere, weighted_phi_and_grad};
use crate::rng::{rng_from_seed, substream_seed};

/// Default angle below which two ascent terminals count as the same extremum.
pub const DEFAULT_DEDUP_ANGLE: f64 = 0.01;

/// Relative tolerance on `|G|` for an extremum to count as global.
pub const GLOBAL_REL_TOL: f64 = 1e-6;

#[derive(Clone, Debug, PartialEq)]
pub struct ExtremumRecord {
    pub direction: Vec<f64>,
    pub value: f64,
    pub sign: i8,
    /// Number of multi-start ascents that terminated here.
    pub basin_hits: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub struct GLandscape {
    pub extrema: Vec<ExtremumRecord>,
    /// `λ = max |G|` over the unit sphere.
    pub lambda: f64,
    /// SHA-256 of the dataset contents, hex encoded.
    pub dataset_digest: String,
}

impl GLandscape {
    pub fn directions(&self) -> Vec<Vec<f64>> {
        self.extrema.iter().map(|e| e.direction.clone()).collect()
    }

    /// Index of the extremum closest in angle to `v`, and that angle.
    pub fn nearest(&self, v: &[f64]) -> (usize, f64) {
        self.extrema
            .iter()
            .enumerate()
            .map(|(k, e)| (k, angle_between(v, &e.direction)))
            .fold((0, f64::INFINITY), |best, cur| if cur.1 < best.1 { cur } else { best })
    }
}

fn landscape_coef(data: &LabeledDataset) -> Vec<f64> {
    let w = neg_loss_derivative_at_zero();
    data.labels().iter().map(|y| w * y).collect()
}

fn check_dims(data: &LabeledDataset, cfg: &ActivationCfg, v: &[f64]) -> Result<()> {
    if v.len() != cfg.dim() || data.dim() != cfg.dim() {
        return Err(Error::domain(format!(
            "dimension mismatch: |v| = {}, activation d = {}, data d = {}",
            v.len(),
            cfg.dim(),
            data.dim()
        )));
    }
    Ok(())
}

/// `G(v)`; 1-homogeneous in `v`.
pub fn g_value(data: &LabeledDataset, cfg: &ActivationCfg, v: &[f64]) -> Result<f64> {
    check_dims(data, cfg, v)?;
    let w = neg_loss_derivative_at_zero();
    let terms: Vec<f64> = (0..data.len())
        .map(|i| w * cfg.phi_unchecked(v, data.point(i)) * data.label(i))
        .collect();
    Ok(crate::network::pairwise_scalar(&terms) / data.len() as f64)
}

/// `g(v) = ∇G(v)`.
pub fn g_grad(data: &LabeledDataset, cfg: &ActivationCfg, v: &[f64]) -> Result<Vec<f64>> {
    g_value_and_grad(data, cfg, v).map(|(_, g)| g)
}

/// `(G(v), g(v))` in one pass over the data.
pub fn g_value_and_grad(data: &LabeledDataset, cfg: &ActivationCfg, v: &[f64]) -> Result<(f64, Vec<f64>)> {
    check_dims(data, cfg, v)?;
    if cfg.kind() == ActivationKind::Smoothed && norm(v) == 0.0 {
        return Err(Error::domain("g(v) at v = 0 under the smoothed activation"));
    }
    Ok(weighted_phi_and_grad(cfg, v, data, &landscape_coef(data)))
}

fn check_unit(v: &[f64]) -> Result<()> {
    let n = norm(v);
    if (n - 1.0).abs() > 1e-10 {
        return Err(Error::domain(format!("direction has norm {n}, expected 1")));
    }
    Ok(())
}

/// Step-size controls for [`sphere_ascend`].
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AscentCfg {
    pub h0: f64,
    pub h_max: f64,
    /// Step size below which ascent is declared stuck at a nonsmooth critical point.
    pub h_min: f64,
    pub max_steps: usize,
    /// Stop when `||P_r g|| ≤ grad_tol · max(1, |G|)`.
    pub grad_tol: f64,
}

impl Default for AscentCfg {
    fn default() -> Self {
        AscentCfg {
            h0: 1.0,
            h_max: 64.0,
            h_min: 1e-13,
            max_steps: 200_000,
            grad_tol: 1e-10,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Termination {
    /// Projected gradient below tolerance.
    Stationary,
    /// Every step, however small, decreased `s·G`: a kink maximum of the exact ReLU landscape.
    StepCollapse,
}

#[derive(Clone, Debug, PartialEq)]
pub struct AscentOutcome {
    pub direction: Vec<f64>,
    pub value: f64,
    pub steps: usize,
    pub grad_norm: f64,
    pub termination: Termination,
}

/// Projected ascent of `s·G` on the sphere: `r ← normalize(r + h s P_r g(r))`.
///
/// A step is accepted only if `s·G` does not decrease; otherwise `h` is halved.
/// After an accepted step `h` grows by 1.25 up to `h_max`.
pub fn sphere_ascend(
    data: &LabeledDataset,
    cfg: &ActivationCfg,
    start: &[f64],
    s: i8,
    opts: &AscentCfg,
) -> Result<AscentOutcome> {
    check_dims(data, cfg, start)?;
    check_unit(start)?;
    if s.abs() != 1 {
        return Err(Error::domain("ascent sign must be ±1"));
    }
    let sf = f64::from(s);
    let mut r = start.to_vec();
    let (mut val, mut g) = g_value_and_grad(data, cfg, &r)?;
    let mut h = opts.h0;
    let mut pg = vec![0.0; r.len()];
    let mut trial = vec![0.0; r.len()];
    for step in 0..opts.max_steps {
        let gr = dot(&g, &r);
        for ((p, gi), ri) in pg.iter_mut().zip(&g).zip(&r) {
            *p = gi - gr * ri;
        }
        let pn = norm(&pg);
        if pn <= opts.grad_tol * val.abs().max(1.0) {
            return Ok(AscentOutcome {
                direction: r,
                value: val,
                steps: step,
                grad_norm: pn,
                termination: Termination::Stationary,
            });
        }
        loop {
            for ((t, ri), p) in trial.iter_mut().zip(&r).zip(&pg) {
                *t = ri + h * sf * p;
            }
            let tn = norm(&trial);
            trial.iter_mut().for_each(|t| *t /= tn);
            let (tv, tg) = g_value_and_grad(data, cfg, &trial)?;
            if sf * tv >= sf * val {
                std::mem::swap(&mut r, &mut trial);
                val = tv;
                g = tg;
                h = (h * 1.25).min(opts.h_max);
                break;
            }
            h *= 0.5;
            if h < opts.h_min {
                return Ok(AscentOutcome {
                    direction: r,
                    value: val,
                    steps: step,
                    grad_norm: pn,
                    termination: Termination::StepCollapse,
                });
            }
        }
        debug_assert!((norm(&r) - 1.0).abs() <= UNIT_TOL);
    }
    let gr = dot(&g, &r);
    let pn = g.iter().zip(&r).map(|(gi, ri)| (gi - gr * ri).powi(2)).sum::<f64>().sqrt();
    Err(Error::NoConvergence {
        steps: opts.max_steps,
        grad_norm: pn,
        last: r,
    })
}

/// Multi-start ascent for each sign, deduplicated, keeping only global extrema of `|G|`.
pub fn find_extrema(
    data: &LabeledDataset,
    cfg: &ActivationCfg,
    n_starts: usize,
    seed: u64,
    dedup_angle: f64,
) -> Result<GLandscape> {
    find_extrema_with(data, cfg, n_starts, seed, dedup_angle, &AscentCfg::default())
}

pub fn find_extrema_with(
    data: &LabeledDataset,
    cfg: &ActivationCfg,
    n_starts: usize,
    seed: u64,
    dedup_angle: f64,
    opts: &AscentCfg,
) -> Result<GLandscape> {
    if n_starts == 0 {
        return Err(Error::domain("n_starts must be at least 1"));
    }
    if data.dim() != cfg.dim() {
        return Err(Error::domain("dataset and activation dimensions differ"));
    }
    let d = cfg.dim();
    let jobs: Vec<(i8, usize)> = [1i8, -1]
        .iter()
        .flat_map(|&s| (0..n_starts).map(move |k| (s, k)))
        .collect();
    let terminals: Vec<(Vec<f64>, f64)> = jobs
        .par_iter()
        .map(|&(s, k)| -> Result<(Vec<f64>, f64)> {
            let mut rng = rng_from_seed(substream_seed(seed, k as u64));
            let start = sample_sphere(&mut rng, d);
            match sphere_ascend(data, cfg, &start, s, opts) {
                Ok(out) => Ok((out.direction, out.value)),
                Err(Error::NoConvergence { last, grad_norm, .. }) => {
                    log::debug!("ascent {k} (s = {s}) stopped at projected gradient {grad_norm:.3e}");
                    let v = g_value(data, cfg, &last)?;
                    Ok((last, v))
                }
                Err(e) => Err(e),
            }
        })
        .collect::<Result<_>>()?;

    // Representatives are the best |G| within each angular cluster.
    let mut order: Vec<usize> = (0..terminals.len()).collect();
    order.sort_by(|&a, &b| {
        terminals[b].1.abs().total_cmp(&terminals[a].1.abs()).then(a.cmp(&b))
    });
    let mut reps: Vec<ExtremumRecord> = Vec::new();
    for &i in &order {
        let (dir, val) = &terminals[i];
        if let Some(rep) = reps
            .iter_mut()
            .find(|r| angle_between(&r.direction, dir) <= dedup_angle)
        {
            rep.basin_hits += 1;
            continue;
        }
        reps.push(ExtremumRecord {
            direction: dir.clone(),
            value: *val,
            sign: if *val < 0.0 { -1 } else { 1 },
            basin_hits: 1,
        });
    }
    let lambda = reps.iter().map(|r| r.value.abs()).fold(0.0, f64::max);
    let mut extrema: Vec<ExtremumRecord> = reps
        .into_iter()
        .filter(|r| r.value.abs() >= lambda * (1.0 - GLOBAL_REL_TOL))
        .collect();
    // Values equal up to rounding sort by direction, so symmetric landscapes order stably.
    let key = |r: &ExtremumRecord| -> i64 {
        if lambda > 0.0 {
            (r.value.abs() / lambda * 1e9).round() as i64
        } else {
            0
        }
    };
    extrema.sort_by(|a, b| {
        key(b).cmp(&key(a)).then_with(|| {
            a.direction
                .iter()
                .zip(&b.direction)
                .map(|(x, y)| x.total_cmp(y))
                .find(|o| o.is_ne())
                .unwrap_or(std::cmp::Ordering::Equal)
        })
    });
    Ok(GLandscape {
        extrema,
        lambda,
        dataset_digest: dataset_digest(data),
    })
}

/// Hex SHA-256 of the dataset contents.
pub fn dataset_digest(data: &LabeledDataset) -> String {
    let hash = Sha256::digest(data.digest_bytes());
    hash.iter().map(|b| format!("{b:02x}")).collect()
}

/// `min_i |v̂·x_i| ≥ Δ`
pub fn is_delta_regular(data: &LabeledDataset, v_hat: &[f64], delta: f64) -> Result<bool> {
    if v_hat.len() != data.dim() {
        return Err(Error::domain("dimension mismatch in regularity check"));
    }
    check_unit(v_hat)?;
    Ok(data.points().all(|x| dot(v_hat, x).abs() >= delta))
}

/// Landscape CSV: `dir_0..dir_{d-1}, g_value, sign, basin_hits`.
pub fn write_landscape_csv(path: &Path, land: &GLandscape) -> Result<()> {
    let mut w = crate::csvio::writer(path)?;
    let d = land.extrema.first().map_or(0, |e| e.direction.len());
    let mut header: Vec<String> = (0..d).map(|k| format!("dir_{k}")).collect();
    header.extend(["g_value", "sign", "basin_hits"].map(String::from));
    w.write_record(&header)?;
    for e in &land.extrema {
        let mut row: Vec<String> = e.direction.iter().map(|x| crate::csvio::fmt(*x)).collect();
        row.push(crate::csvio::fmt(e.value));
        row.push(e.sign.to_string());
        row.push(e.basin_hits.to_string());
        w.write_record(&row)?;
    }
    crate::csvio::finish(w, path)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::basis;
    use proptest::prelude::*;
    use std::f64::consts::PI;

    fn ideal_xor() -> LabeledDataset {
        LabeledDataset::new(
            2,
            vec![vec![1.0, 0.0], vec![-1.0, 0.0], vec![0.0, 1.0], vec![0.0, -1.0]],
            vec![1, 1, -1, -1],
        )
        .unwrap()
    }

    fn polar(a: f64) -> Vec<f64> {
        vec![a.cos(), a.sin()]
    }

    #[test]
    fn g_on_ideal_xor() {
        let relu = ActivationCfg::exact_relu(2).unwrap();
        let data = ideal_xor();
        assert_eq!(g_value(&data, &relu, &[1.0, 0.0]).unwrap(), 0.125);
        for a in [0.1, 0.5, 1.0, 1.4] {
            let g = g_value(&data, &relu, &polar(a)).unwrap();
            assert!((g - (a.cos() - a.sin()) / 8.0).abs() < 1e-15);
        }
        let g = g_grad(&data, &relu, &[1.0, 0.0]).unwrap();
        assert_eq!(g, vec![0.125, 0.0]);
        let single = LabeledDataset::new(2, vec![vec![1.0, 0.0]], vec![1]).unwrap();
        assert_eq!(g_value(&single, &relu, &[-1.0, 0.0]).unwrap(), 0.0);
    }

    #[test]
    fn smoothed_zero_vector_rejected() {
        let cfg = ActivationCfg::smoothed(3, 0.1).unwrap();
        let data = LabeledDataset::new(3, vec![vec![0.5, 0.0, 0.0]], vec![1]).unwrap();
        assert!(g_grad(&data, &cfg, &[0.0; 3]).is_err());
    }

    fn random_data(seed: u64, n: usize) -> LabeledDataset {
        use rand::Rng as _;
        let mut rng = rng_from_seed(seed);
        let pts: Vec<Vec<f64>> = (0..n)
            .map(|_| {
                let s = sample_sphere(&mut rng, 3);
                let r: f64 = 0.2 + 0.7 * rng.random::<f64>();
                s.iter().map(|x| r * x).collect()
            })
            .collect();
        let labels = (0..n).map(|_| if rng.random::<bool>() { 1 } else { -1 }).collect();
        LabeledDataset::new(3, pts, labels).unwrap()
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]

        #[test]
        fn euler_identity(seed in 0u64..10_000, scale in 0.1f64..10.0) {
            let cfg = ActivationCfg::smoothed(3, 0.2).unwrap();
            let data = random_data(seed, 12);
            let mut rng = rng_from_seed(seed + 1);
            let v: Vec<f64> = sample_sphere(&mut rng, 3).iter().map(|x| scale * x).collect();
            let (gv, g) = g_value_and_grad(&data, &cfg, &v).unwrap();
            prop_assert!((dot(&v, &g) - gv).abs() <= 1e-10);
        }

        #[test]
        fn g_grad_matches_finite_differences(seed in 0u64..10_000) {
            let cfg = ActivationCfg::smoothed(3, 0.2).unwrap();
            let data = random_data(seed, 12);
            let mut rng = rng_from_seed(seed + 2);
            let v = sample_sphere(&mut rng, 3);
            for x in data.points() {
                prop_assume!((dot(&v, x).abs() / 0.2 - 1.0).abs() > 0.05);
            }
            let g = g_grad(&data, &cfg, &v).unwrap();
            let gn = norm(&g);
            for k in 0..3 {
                let h = 1e-6;
                let mut p = v.clone();
                let mut q = v.clone();
                p[k] += h;
                q[k] -= h;
                let fd = (g_value(&data, &cfg, &p).unwrap() - g_value(&data, &cfg, &q).unwrap()) / (2.0 * h);
                prop_assert!((fd - g[k]).abs() <= 1e-5 * gn.max(1e-3));
            }
        }
    }

    #[test]
    fn ascent_on_ideal_xor() {
        let relu = ActivationCfg::exact_relu(2).unwrap();
        let data = ideal_xor();
        let opts = AscentCfg::default();
        let out = sphere_ascend(&data, &relu, &polar(0.7), 1, &opts).unwrap();
        assert!(angle_between(&out.direction, &[1.0, 0.0]) < 1e-6, "{:?}", out);
        let stay = sphere_ascend(&data, &relu, &[0.0, 1.0], 1, &opts).unwrap();
        assert_eq!(stay.direction, vec![0.0, 1.0]);
        assert_eq!(stay.termination, Termination::Stationary);
        let down = sphere_ascend(&data, &relu, &polar(PI + 0.6), -1, &opts).unwrap();
        let to_minus = angle_between(&down.direction, &[0.0, -1.0]).min(angle_between(&down.direction, &[0.0, 1.0]));
        assert!(to_minus < 1e-6, "{:?}", down);
        assert!(sphere_ascend(&data, &relu, &[2.0, 0.0], 1, &opts).is_err());
    }

    #[test]
    fn ascent_is_monotone_and_stays_on_sphere() {
        let cfg = ActivationCfg::smoothed(3, 0.2).unwrap();
        let data = random_data(5, 20);
        let mut rng = rng_from_seed(11);
        let mut r = sample_sphere(&mut rng, 3);
        let one = AscentCfg {
            max_steps: 1,
            ..AscentCfg::default()
        };
        let mut prev = g_value(&data, &cfg, &r).unwrap();
        for _ in 0..200 {
            match sphere_ascend(&data, &cfg, &r, 1, &one) {
                Ok(out) => {
                    assert!(out.value >= prev);
                    break;
                }
                Err(Error::NoConvergence { last, .. }) => {
                    assert!((norm(&last) - 1.0).abs() <= 1e-12);
                    let v = g_value(&data, &cfg, &last).unwrap();
                    assert!(v >= prev);
                    prev = v;
                    r = last;
                }
                Err(e) => panic!("{e}"),
            }
        }
    }

    #[test]
    fn single_direction_landscape() {
        let relu = ActivationCfg::exact_relu(2).unwrap();
        let data = LabeledDataset::new(2, vec![vec![1.0, 0.0]], vec![1]).unwrap();
        let land = find_extrema(&data, &relu, 16, 3, DEFAULT_DEDUP_ANGLE).unwrap();
        assert_eq!(land.extrema.len(), 1);
        assert!(angle_between(&land.extrema[0].direction, &[1.0, 0.0]) < 1e-6);
        assert_eq!(land.extrema[0].sign, 1);
        assert!((land.lambda - 0.5).abs() < 1e-12);
    }

    #[test]
    fn ideal_xor_landscape_matches_grid() {
        let relu = ActivationCfg::exact_relu(2).unwrap();
        let data = ideal_xor();
        let land = find_extrema(&data, &relu, 64, 1, DEFAULT_DEDUP_ANGLE).unwrap();
        assert_eq!(land.extrema.len(), 4);
        for target in [[1.0, 0.0], [-1.0, 0.0], [0.0, 1.0], [0.0, -1.0]] {
            assert!(land.extrema.iter().any(|e| angle_between(&e.direction, &target) < 1e-6));
        }
        let grid = (0..100_000)
            .map(|k| g_value(&data, &relu, &polar(2.0 * PI * k as f64 / 1e5)).unwrap().abs())
            .fold(0.0, f64::max);
        assert!((land.lambda - grid).abs() < 1e-4);
        assert_eq!(land.dataset_digest.len(), 64);
    }

    #[test]
    fn smoothed_landscape_matches_fibonacci_grid() {
        let cfg = ActivationCfg::smoothed(3, 0.05).unwrap();
        let data = random_data(21, 24);
        let land = find_extrema(&data, &cfg, 128, 4, DEFAULT_DEDUP_ANGLE).unwrap();
        let n = 1_000_000;
        let golden = PI * (3.0 - 5f64.sqrt());
        let grid = (0..n)
            .into_par_iter()
            .map(|k| {
                let z = 1.0 - 2.0 * (k as f64 + 0.5) / n as f64;
                let rho = (1.0 - z * z).sqrt();
                let th = golden * k as f64;
                g_value(&data, &cfg, &[rho * th.cos(), rho * th.sin(), z]).unwrap().abs()
            })
            .reduce(|| 0.0, f64::max);
        assert!(land.lambda >= grid - 1e-12);
        assert!((land.lambda - grid).abs() < 1e-4, "{} vs {}", land.lambda, grid);
    }

    #[test]
    fn delta_regularity() {
        let data = LabeledDataset::new(2, vec![vec![0.3, 0.1], vec![-0.5, 0.2]], vec![1, -1]).unwrap();
        assert!(is_delta_regular(&data, &basis(2, 0), 0.2).unwrap());
        assert!(!is_delta_regular(&data, &basis(2, 0), 0.31).unwrap());
        assert!(is_delta_regular(&data, &[2.0, 0.0], 0.2).is_err());
    }

    #[test]
    fn landscape_csv_has_schema() {
        let relu = ActivationCfg::exact_relu(2).unwrap();
        let land = find_extrema(&ideal_xor(), &relu, 16, 1, DEFAULT_DEDUP_ANGLE).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("land.csv");
        write_landscape_csv(&p, &land).unwrap();
        let text = std::fs::read_to_string(&p).unwrap();
        assert!(text.starts_with("dir_0,dir_1,g_value,sign,basin_hits\n"));
        assert_eq!(text.lines().count(), 5);
    }
}
