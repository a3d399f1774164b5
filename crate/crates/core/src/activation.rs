//! Exact ReLU and the ball-smoothed ReLU
//!
//! ```text
//! φ(v, x) = E_{z ~ U(D^d)} (vᵀ(x + ξz))_+
//! ```
//!
//! Slicing the ball along `v̂` reduces the expectation to a one-dimensional
//! integral over `a ∈ [-c, 1]` with weight `(1 - a²)^((d-1)/2)`, where
//! `c = clamp(vᵀx / (ξ||v||), -1, 1)`. For odd `d` that weight is a polynomial
//! and both moments have closed forms:
//!
//! ```text
//! i0(c) = ∫_{-c}^{1} (1 - a²)^((d-1)/2) da
//! i1(c) = ∫_{-c}^{1} a (1 - a²)^((d-1)/2) da = (1 - c²)^((d+1)/2) / (d + 1)
//! φ(v, x)   = κ [ (vᵀx) i0 + ξ||v|| i1 ]
//! ∇φ(v, x)  = κ [ x i0 + ξ v̂ i1 ]
//! ```
//!
//! with `κ = Vol(D^{d-1}) / Vol(D^d)`. Even `d` would bring in `arcsin` terms and
//! is rejected.

use crate::error::{Error, Result};
use crate::linalg::{dot, norm, Matrix};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ActivationKind {
    ExactRelu,
    Smoothed,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ActivationCfg {
    kind: ActivationKind,
    xi: f64,
    dim: usize,
    // Cached Vol(D^{d-1}) / Vol(D^d); unused for ExactRelu.
    kappa: f64,
}

impl ActivationCfg {
    pub fn exact_relu(dim: usize) -> Result<Self> {
        if dim == 0 {
            return Err(Error::domain("dimension must be at least 1"));
        }
        Ok(ActivationCfg {
            kind: ActivationKind::ExactRelu,
            xi: 0.0,
            dim,
            kappa: 0.0,
        })
    }

    /// Smoothed ReLU with radius `xi ∈ (0, 1)` in odd dimension `dim ≥ 3`.
    pub fn smoothed(dim: usize, xi: f64) -> Result<Self> {
        if dim < 2 {
            return Err(Error::domain(format!(
                "smoothed activation needs d >= 2, got {dim}"
            )));
        }
        if dim.is_multiple_of(2) {
            return Err(Error::domain(format!(
                "smoothed activation is only defined in closed form for odd d (got d = {dim}); \
                 even d would need arcsin terms"
            )));
        }
        if !(xi > 0.0 && xi < 1.0) {
            return Err(Error::domain(format!("smoothing radius must be in (0, 1), got {xi}")));
        }
        Ok(ActivationCfg {
            kind: ActivationKind::Smoothed,
            xi,
            dim,
            kappa: kappa_ratio(dim)?,
        })
    }

    /// `ExactRelu` when `xi == 0`, `Smoothed` otherwise.
    pub fn from_xi(dim: usize, xi: f64) -> Result<Self> {
        if xi == 0.0 {
            Self::exact_relu(dim)
        } else {
            Self::smoothed(dim, xi)
        }
    }

    pub fn kind(&self) -> ActivationKind {
        self.kind
    }

    /// Smoothing radius; zero for exact ReLU.
    pub fn xi(&self) -> f64 {
        self.xi
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    fn check_dims(&self, v: &[f64], x: &[f64]) -> Result<()> {
        if v.len() != self.dim || x.len() != self.dim {
            return Err(Error::domain(format!(
                "dimension mismatch: cfg d = {}, |v| = {}, |x| = {}",
                self.dim,
                v.len(),
                x.len()
            )));
        }
        Ok(())
    }

    /// Activation value. Extends continuously to `φ(0, x) = 0`.
    pub fn phi(&self, v: &[f64], x: &[f64]) -> Result<f64> {
        self.check_dims(v, x)?;
        Ok(self.phi_unchecked(v, x))
    }

    #[inline]
    pub(crate) fn phi_unchecked(&self, v: &[f64], x: &[f64]) -> f64 {
        let vx = dot(v, x);
        match self.kind {
            ActivationKind::ExactRelu => vx.max(0.0),
            ActivationKind::Smoothed => {
                let vn = norm(v);
                if vn == 0.0 {
                    return 0.0;
                }
                let c = vx / (self.xi * vn);
                if c >= 1.0 {
                    vx
                } else if c <= -1.0 {
                    0.0
                } else {
                    let (i0, i1) = moments(c, self.dim);
                    self.kappa * (vx * i0 + self.xi * vn * i1)
                }
            }
        }
    }

    /// Gradient of `φ` in `v`. Exact ReLU uses the subgradient `[vᵀx ≥ 0] x`.
    pub fn grad_phi(&self, v: &[f64], x: &[f64]) -> Result<Vec<f64>> {
        self.check_dims(v, x)?;
        if norm(v) == 0.0 {
            return Err(Error::domain("gradient of φ at v = 0"));
        }
        let mut out = vec![0.0; self.dim];
        self.add_grad_phi(1.0, v, x, &mut out);
        Ok(out)
    }

    /// `out += scale * ∇_v φ(v, x)` and returns `φ(v, x)`. Caller guarantees
    /// matching dimensions and, for the smoothed kind, `v ≠ 0`.
    #[inline]
    pub(crate) fn add_grad_phi(&self, scale: f64, v: &[f64], x: &[f64], out: &mut [f64]) -> f64 {
        let vx = dot(v, x);
        match self.kind {
            ActivationKind::ExactRelu => {
                if vx >= 0.0 {
                    for (o, xi) in out.iter_mut().zip(x) {
                        *o += scale * xi;
                    }
                }
                vx.max(0.0)
            }
            ActivationKind::Smoothed => {
                let vn = norm(v);
                let c = vx / (self.xi * vn);
                if c >= 1.0 {
                    for (o, xi) in out.iter_mut().zip(x) {
                        *o += scale * xi;
                    }
                    vx
                } else if c <= -1.0 {
                    0.0
                } else {
                    let (i0, i1) = moments(c, self.dim);
                    let a = scale * self.kappa * i0;
                    let b = scale * self.kappa * self.xi * i1 / vn;
                    for ((o, xi), vi) in out.iter_mut().zip(x).zip(v) {
                        *o += a * xi + b * vi;
                    }
                    self.kappa * (vx * i0 + self.xi * vn * i1)
                }
            }
        }
    }

    /// Hessian of the smoothed activation in `v`:
    ///
    /// ```text
    /// κ [ P_v ξ(1-c²)^((d+1)/2) / ((d+1)||v||) + (P_v x)(P_v x)ᵀ (1-c²)^((d-1)/2) / (ξ||v||) ]
    /// ```
    ///
    /// for `|c| < 1` and zero otherwise.
    pub fn hessian_phi(&self, v: &[f64], x: &[f64]) -> Result<Matrix> {
        if self.kind == ActivationKind::ExactRelu {
            return Err(Error::Unsupported(
                "Hessian of exact ReLU is not defined".into(),
            ));
        }
        self.check_dims(v, x)?;
        let vn = norm(v);
        if vn == 0.0 {
            return Err(Error::domain("Hessian of φ at v = 0"));
        }
        let d = self.dim;
        let mut h = Matrix::zeros(d);
        let c = dot(v, x) / (self.xi * vn);
        if c.abs() >= 1.0 {
            return Ok(h);
        }
        let vh: Vec<f64> = v.iter().map(|vi| vi / vn).collect();
        let vx_hat = dot(&vh, x);
        let px: Vec<f64> = x.iter().zip(&vh).map(|(xi, vi)| xi - vx_hat * vi).collect();
        let w = 1.0 - c * c;
        let half = (d - 1) / 2;
        let wp = w.powi(half as i32);
        let iso = self.kappa * self.xi * wp * w / ((d + 1) as f64 * vn);
        let rank1 = self.kappa * wp / (self.xi * vn);
        for i in 0..d {
            for j in 0..d {
                let proj = if i == j { 1.0 } else { 0.0 } - vh[i] * vh[j];
                h.set(i, j, iso * proj + rank1 * px[i] * px[j]);
            }
        }
        Ok(h)
    }
}

/// `Vol(D^{d-1}) / Vol(D^d) = Γ(d/2 + 1) / (√π Γ((d+1)/2))`.
///
/// Uses `Vol(D^d) = (2π/d) Vol(D^{d-2})`, which gives the ratio recurrence
/// `κ(d) = d/(d-1) κ(d-2)` from `κ(1) = 1/2`, `κ(2) = 2/π`.
pub fn kappa_ratio(d: usize) -> Result<f64> {
    if d < 2 {
        return Err(Error::domain(format!("kappa ratio needs d >= 2, got {d}")));
    }
    let (mut k, mut dd) = if d % 2 == 1 {
        (0.5, 1usize)
    } else {
        (2.0 / std::f64::consts::PI, 2usize)
    };
    while dd < d {
        dd += 2;
        k *= dd as f64 / (dd - 1) as f64;
    }
    Ok(k)
}

/// The pair of one-dimensional moments behind the smoothed activation.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EdgeProfile {
    pub c: f64,
    pub i0: f64,
    pub i1: f64,
    pub kappa: f64,
}

/// Moments `i0(c)`, `i1(c)` for odd `d ≥ 3`.
pub fn edge_profile(c: f64, d: usize) -> Result<EdgeProfile> {
    if !(-1.0..=1.0).contains(&c) {
        return Err(Error::domain(format!("edge profile needs c in [-1, 1], got {c}")));
    }
    if d < 3 || d.is_multiple_of(2) {
        return Err(Error::domain(format!(
            "edge profile needs odd d >= 3, got {d}"
        )));
    }
    let (i0, i1) = moments(c, d);
    Ok(EdgeProfile {
        c,
        i0,
        i1,
        kappa: kappa_ratio(d)?,
    })
}

/// `i0` by the integration-by-parts recurrence
/// `I_m = (c (1-c²)^m + 2m I_{m-1}) / (2m + 1)`, `I_0 = 1 + c`, with
/// `m = (d-1)/2`; every term is a polynomial in `c`.
#[inline]
fn moments(c: f64, d: usize) -> (f64, f64) {
    let w = 1.0 - c * c;
    let m = (d - 1) / 2;
    let mut i0 = 1.0 + c;
    let mut wp = 1.0;
    for k in 1..=m {
        wp *= w;
        i0 = (c * wp + 2.0 * k as f64 * i0) / (2 * k + 1) as f64;
    }
    let i1 = wp * w / (d + 1) as f64;
    (i0, i1)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::{basis, project_orthogonal, unit_direction};
    use crate::rng::rng_from_seed;
    use proptest::prelude::*;
    use rand::Rng;
    use rand_distr::{Distribution, StandardNormal};

    /// Adaptive Simpson quadrature (test oracle only).
    fn adaptive_simpson(f: &dyn Fn(f64) -> f64, a: f64, b: f64, tol: f64) -> f64 {
        fn simpson(f: &dyn Fn(f64) -> f64, a: f64, b: f64) -> f64 {
            let m = 0.5 * (a + b);
            (b - a) / 6.0 * (f(a) + 4.0 * f(m) + f(b))
        }
        fn rec(f: &dyn Fn(f64) -> f64, a: f64, b: f64, whole: f64, tol: f64, depth: u32) -> f64 {
            let m = 0.5 * (a + b);
            let left = simpson(f, a, m);
            let right = simpson(f, m, b);
            if depth == 0 || (left + right - whole).abs() <= 15.0 * tol {
                return left + right + (left + right - whole) / 15.0;
            }
            rec(f, a, m, left, tol / 2.0, depth - 1) + rec(f, m, b, right, tol / 2.0, depth - 1)
        }
        rec(f, a, b, simpson(f, a, b), tol, 50)
    }

    /// Binomial expansion of (1-a²)^m integrated term by term, Horner in a².
    fn i0_binomial(c: f64, d: usize) -> f64 {
        let m = (d - 1) / 2;
        let mut coef = Vec::with_capacity(m + 1);
        let mut binom = 1.0f64;
        for k in 0..=m {
            let sign = if k % 2 == 0 { 1.0 } else { -1.0 };
            coef.push(sign * binom / (2 * k + 1) as f64);
            binom = binom * (m - k) as f64 / (k + 1) as f64;
        }
        let antider = |a: f64| {
            let a2 = a * a;
            a * coef.iter().rev().fold(0.0, |acc, &ck| acc * a2 + ck)
        };
        antider(1.0) + antider(c)
    }

    /// Lanczos log-gamma (test oracle for ball-volume ratios).
    fn ln_gamma(x: f64) -> f64 {
        const G: [f64; 9] = [
            0.999_999_999_999_809_9,
            676.520_368_121_885_1,
            -1_259.139_216_722_402_8,
            771.323_428_777_653_1,
            -176.615_029_162_140_6,
            12.507_343_278_686_905,
            -0.138_571_095_265_720_12,
            9.984_369_578_019_572e-6,
            1.505_632_735_149_311_6e-7,
        ];
        let x = x - 1.0;
        let t = x + 7.5;
        let mut s = G[0];
        for (i, g) in G.iter().enumerate().skip(1) {
            s += g / (x + i as f64);
        }
        0.5 * (2.0 * std::f64::consts::PI).ln() + (x + 0.5) * t.ln() - t + s.ln()
    }

    fn mc_phi(v: &[f64], x: &[f64], xi: f64, samples: usize, seed: u64) -> (f64, f64) {
        let d = v.len();
        let mut rng = rng_from_seed(seed);
        let (mut s, mut s2) = (0.0, 0.0);
        let mut z = vec![0.0; d];
        for _ in 0..samples {
            for zi in z.iter_mut() {
                *zi = StandardNormal.sample(&mut rng);
            }
            let r: f64 = rng.random::<f64>().powf(1.0 / d as f64) / norm(&z);
            let val: f64 = v.iter().zip(x).zip(&z).map(|((vi, xi_), zi)| vi * (xi_ + xi * r * zi)).sum();
            let val = val.max(0.0);
            s += val;
            s2 += val * val;
        }
        let n = samples as f64;
        let mean = s / n;
        (mean, ((s2 / n - mean * mean) / n).sqrt())
    }

    #[test]
    fn kappa_examples() {
        assert!((kappa_ratio(3).unwrap() - 0.75).abs() < 1e-15);
        assert!((kappa_ratio(2).unwrap() - 2.0 / std::f64::consts::PI).abs() < 1e-15);
        assert!((kappa_ratio(5).unwrap() - 15.0 / 16.0).abs() < 1e-15);
        assert!(kappa_ratio(1).is_err());
        for d in 2..40usize {
            let df = d as f64;
            let oracle = (ln_gamma(df / 2.0 + 1.0) - ln_gamma((df + 1.0) / 2.0)).exp()
                / std::f64::consts::PI.sqrt();
            assert!((kappa_ratio(d).unwrap() - oracle).abs() < 1e-12 * oracle, "d = {d}");
        }
    }

    #[test]
    fn edge_profile_examples() {
        let p = edge_profile(1.0, 3).unwrap();
        assert!((p.i0 - 4.0 / 3.0).abs() < 1e-15 && p.i1 == 0.0);
        for d in [3, 5, 7, 11] {
            let p = edge_profile(-1.0, d).unwrap();
            assert_eq!((p.i0, p.i1), (0.0, 0.0));
        }
        let p = edge_profile(0.0, 3).unwrap();
        assert!((p.i0 - 2.0 / 3.0).abs() < 1e-15);
        assert!((p.i1 - 0.25).abs() < 1e-15);
        let q0 = adaptive_simpson(&|a: f64| 1.0 - a * a, 0.0, 1.0, 1e-13);
        let q1 = adaptive_simpson(&|a: f64| a * (1.0 - a * a), 0.0, 1.0, 1e-13);
        assert!((p.i0 - q0).abs() < 1e-10 && (p.i1 - q1).abs() < 1e-10);
        assert!(edge_profile(1.5, 3).is_err());
        assert!(edge_profile(0.5, 4).is_err());
        assert!(edge_profile(0.5, 1).is_err());
    }

    #[test]
    fn edge_profile_matches_quadrature_and_binomial_route() {
        for d in [3usize, 5, 7, 9, 15] {
            let half = ((d - 1) / 2) as i32;
            let p1 = edge_profile(1.0, d).unwrap();
            assert!((p1.kappa * p1.i0 - 1.0).abs() < 1e-12, "d = {d}");
            for k in 0..=20 {
                let c = -1.0 + 0.1 * k as f64;
                let p = edge_profile(c, d).unwrap();
                let q0 = adaptive_simpson(&|a: f64| (1.0 - a * a).powi(half), -c, 1.0, 1e-13);
                let q1 = adaptive_simpson(&|a: f64| a * (1.0 - a * a).powi(half), -c, 1.0, 1e-13);
                assert!((p.i0 - q0).abs() < 1e-10, "d={d} c={c}: {} vs {q0}", p.i0);
                assert!((p.i1 - q1).abs() < 1e-10, "d={d} c={c}");
                assert!((p.i0 - i0_binomial(c, d)).abs() < 1e-12, "d={d} c={c}");
                assert!(p.i0 >= 0.0 && p.i0 <= p1.i0 + 1e-15);
            }
        }
    }

    #[test]
    fn config_validation() {
        assert!(ActivationCfg::smoothed(2, 0.1).is_err());
        assert!(ActivationCfg::smoothed(4, 0.1).is_err());
        assert!(ActivationCfg::smoothed(1, 0.1).is_err());
        assert!(ActivationCfg::smoothed(3, 0.0).is_err());
        assert!(ActivationCfg::smoothed(3, 1.0).is_err());
        assert!(ActivationCfg::smoothed(3, 0.1).is_ok());
        assert!(ActivationCfg::exact_relu(2).is_ok());
        let err = ActivationCfg::smoothed(4, 0.1).unwrap_err().to_string();
        assert!(err.contains("odd"));
    }

    #[test]
    fn phi_examples() {
        let cfg = ActivationCfg::smoothed(3, 0.1).unwrap();
        let e1 = basis(3, 0);
        let e2 = basis(3, 1);
        assert_eq!(cfg.phi(&e1, &[0.5, 0.0, 0.0]).unwrap(), 0.5);
        assert_eq!(cfg.phi(&e1, &[-0.5, 0.0, 0.0]).unwrap(), 0.0);
        assert!((cfg.phi(&e1, &e2).unwrap() - 0.01875).abs() < 1e-15);
        assert!(cfg.phi(&e1, &[1.0, 0.0]).is_err());
        assert_eq!(cfg.phi(&[0.0; 3], &e2).unwrap(), 0.0);
        let relu = ActivationCfg::exact_relu(3).unwrap();
        assert_eq!(relu.phi(&e1, &[-0.5, 0.2, 0.0]).unwrap(), 0.0);
        assert_eq!(relu.phi(&e1, &[0.5, 0.2, 0.0]).unwrap(), 0.5);
    }

    #[test]
    fn phi_matches_monte_carlo_at_c_zero() {
        let cfg = ActivationCfg::smoothed(3, 0.1).unwrap();
        let (mean, _se) = mc_phi(&basis(3, 0), &basis(3, 1), 0.1, 10_000_000, 11);
        assert!((mean - 0.01875).abs() < 1e-4, "{mean}");
        assert!((cfg.phi(&basis(3, 0), &basis(3, 1)).unwrap() - mean).abs() < 1e-4);
    }

    #[test]
    fn grad_examples() {
        let cfg = ActivationCfg::smoothed(3, 0.1).unwrap();
        let e1 = basis(3, 0);
        let e2 = basis(3, 1);
        let g = cfg.grad_phi(&e1, &e2).unwrap();
        assert!((g[0] - 0.01875).abs() < 1e-15);
        assert!((g[1] - 0.5).abs() < 1e-15);
        assert_eq!(g[2], 0.0);
        let x = [0.3, -0.2, 0.1];
        let v = [1.0, 0.0, 0.0];
        assert_eq!(cfg.grad_phi(&v, &x).unwrap(), x.to_vec());
        assert!(cfg.grad_phi(&[0.0; 3], &x).is_err());
        let relu = ActivationCfg::exact_relu(2).unwrap();
        assert_eq!(relu.grad_phi(&[1.0, 0.0], &[-1.0, 0.0]).unwrap(), vec![0.0, 0.0]);
        // tie at vᵀx = 0 resolves to active
        assert_eq!(relu.grad_phi(&[1.0, 0.0], &[0.0, 1.0]).unwrap(), vec![0.0, 1.0]);
    }

    #[test]
    fn hessian_examples() {
        let cfg = ActivationCfg::smoothed(3, 0.1).unwrap();
        let e1 = basis(3, 0);
        let h = cfg.hessian_phi(&e1, &[0.5, 0.1, 0.0]).unwrap();
        assert_eq!(h.max_abs(), 0.0);
        let h = cfg.hessian_phi(&e1, &basis(3, 1)).unwrap();
        // 0.75 [0.1/4 P_e1 + (1/0.1) e2 e2ᵀ]
        assert!((h.get(1, 1) - 0.75 * (0.025 + 10.0)).abs() < 1e-12);
        assert!((h.get(2, 2) - 0.75 * 0.025).abs() < 1e-12);
        assert_eq!(h.get(0, 0), 0.0);
        assert!(ActivationCfg::exact_relu(3).unwrap().hessian_phi(&e1, &e1).is_err());
        assert!(cfg.hessian_phi(&[0.0; 3], &e1).is_err());
    }

    fn fd_hessian(cfg: &ActivationCfg, v: &[f64], x: &[f64]) -> Matrix {
        let d = v.len();
        let h = 1e-6 * norm(v);
        let mut m = Matrix::zeros(d);
        for j in 0..d {
            let mut vp = v.to_vec();
            let mut vm = v.to_vec();
            vp[j] += h;
            vm[j] -= h;
            let gp = cfg.grad_phi(&vp, x).unwrap();
            let gm = cfg.grad_phi(&vm, x).unwrap();
            for i in 0..d {
                m.set(i, j, (gp[i] - gm[i]) / (2.0 * h));
            }
        }
        m
    }

    #[test]
    fn hessian_matches_finite_differences() {
        let cfg = ActivationCfg::smoothed(3, 0.1).unwrap();
        let cases: [(&[f64], &[f64]); 3] = [
            (&[1.0, 0.0, 0.0], &[0.0, 1.0, 0.0]),
            (&[0.8, -0.3, 0.5], &[0.02, 0.7, -0.4]),
            (&[-0.2, 0.9, 0.1], &[0.5, 0.03, 0.6]),
        ];
        for (v, x) in cases {
            let h = cfg.hessian_phi(v, x).unwrap();
            let fd = fd_hessian(&cfg, v, x);
            let scale = 1.0 + h.max_abs();
            for k in 0..9 {
                assert!((h.data[k] - fd.data[k]).abs() < 1e-4 * scale, "{v:?} {x:?}");
            }
        }
    }

    fn random_unit(rng: &mut crate::rng::Rng, d: usize) -> Vec<f64> {
        let z: Vec<f64> = (0..d).map(|_| StandardNormal.sample(rng)).collect();
        unit_direction(&z).unwrap()
    }

    #[test]
    fn phi_matches_monte_carlo_on_random_inputs() {
        let mut rng = rng_from_seed(2024);
        for case in 0..200 {
            let d = [3usize, 5][case % 2];
            let xi = 0.05 + 0.4 * rng.random::<f64>();
            let cfg = ActivationCfg::smoothed(d, xi).unwrap();
            let v: Vec<f64> = random_unit(&mut rng, d).iter().map(|a| a * (0.2 + rng.random::<f64>())).collect();
            // keep the point close to the activation boundary so c ∈ (-1, 1) often
            let vh = unit_direction(&v).unwrap();
            let mut x = random_unit(&mut rng, d);
            let shift = xi * (2.0 * rng.random::<f64>() - 1.0) - dot(&x, &vh) * 0.9;
            crate::linalg::axpy(shift, &vh, &mut x);
            let n = norm(&x);
            if n > 1.0 {
                x.iter_mut().for_each(|a| *a /= n);
            }
            let (mean, se) = mc_phi(&v, &x, xi, 1_000_000, 1000 + case as u64);
            let exact = cfg.phi(&v, &x).unwrap();
            assert!(
                (exact - mean).abs() <= 3.0 * se + 1e-15,
                "case {case}: exact {exact} mc {mean} ± {se}"
            );
        }
    }

    fn arb_case() -> impl Strategy<Value = (Vec<f64>, Vec<f64>, f64)> {
        (
            prop::collection::vec(-1.0f64..1.0, 3),
            prop::collection::vec(-0.57f64..0.57, 3),
            0.05f64..0.5,
        )
    }

    proptest! {
        #[test]
        fn homogeneity((v, x, xi) in arb_case(), c in 0.01f64..100.0) {
            prop_assume!(norm(&v) > 1e-3);
            let cfg = ActivationCfg::smoothed(3, xi).unwrap();
            let cv: Vec<f64> = v.iter().map(|a| a * c).collect();
            let lhs = cfg.phi(&cv, &x).unwrap();
            let rhs = c * cfg.phi(&v, &x).unwrap();
            prop_assert!((lhs - rhs).abs() <= 1e-12 * (1.0 + rhs.abs()));
        }

        #[test]
        fn within_xi_of_relu((v, x, xi) in arb_case()) {
            let cfg = ActivationCfg::smoothed(3, xi).unwrap();
            let relu = dot(&v, &x).max(0.0);
            prop_assert!((cfg.phi(&v, &x).unwrap() - relu).abs() <= xi * norm(&v) + 1e-15);
        }

        #[test]
        fn euler_identity((v, x, xi) in arb_case()) {
            prop_assume!(norm(&v) > 1e-3);
            let cfg = ActivationCfg::smoothed(3, xi).unwrap();
            let g = cfg.grad_phi(&v, &x).unwrap();
            prop_assert!((dot(&v, &g) - cfg.phi(&v, &x).unwrap()).abs() <= 1e-10);
        }

        #[test]
        fn gradient_matches_central_differences((v, x, xi) in arb_case()) {
            prop_assume!(norm(&v) > 1e-2);
            let cfg = ActivationCfg::smoothed(3, xi).unwrap();
            let c = dot(&v, &x) / (xi * norm(&v));
            prop_assume!(c.abs() < 0.99);
            let g = cfg.grad_phi(&v, &x).unwrap();
            let h = 1e-6 * norm(&v);
            for k in 0..3 {
                let mut vp = v.clone();
                let mut vm = v.clone();
                vp[k] += h;
                vm[k] -= h;
                let fd = (cfg.phi(&vp, &x).unwrap() - cfg.phi(&vm, &x).unwrap()) / (2.0 * h);
                prop_assert!((fd - g[k]).abs() <= 1e-5 * (norm(&g) + 1e-6), "k={} fd={} g={}", k, fd, g[k]);
            }
        }

        #[test]
        fn hessian_structure((v, x, xi) in arb_case()) {
            prop_assume!(norm(&v) > 1e-2);
            let cfg = ActivationCfg::smoothed(3, xi).unwrap();
            let h = cfg.hessian_phi(&v, &x).unwrap();
            let scale = 1.0 + h.max_abs();
            let hv = h.mul_vec(&v);
            prop_assert!(norm(&hv) <= 1e-10 * scale * norm(&v).max(1.0));
            for i in 0..3 {
                for j in 0..3 {
                    prop_assert!((h.get(i, j) - h.get(j, i)).abs() <= 1e-12 * scale);
                }
            }
            // H = P_v H P_v, checked column by column
            for j in 0..3 {
                let col: Vec<f64> = (0..3).map(|i| h.get(i, j)).collect();
                let pc = project_orthogonal(&v, &col).unwrap();
                for i in 0..3 {
                    prop_assert!((pc[i] - col[i]).abs() <= 1e-10 * scale);
                }
            }
        }
    }
}
