//! Two-layer network `f(θ, x) = Σ_j u_j φ(v_j, x)`, logistic loss, and the
//! gradient-flow field `dθ/dt = -∇L(θ)`.
//!
//! Sums over training examples use a fixed pairwise tree so results are
//! bit-identical regardless of how many threads evaluate neurons.

use std::path::Path;

use rand::Rng as _;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;

use crate::activation::{ActivationCfg, ActivationKind};
use crate::csvio::fmt;
use crate::error::{Error, Result};
use crate::linalg::{dot, norm, LabeledDataset};
use crate::rng::rng_from_seed;

/// Network parameters `θ = (u_1..u_m, v_1..v_m)` plus the signs `s_j = sign(u_j(0))`.
#[derive(Clone, Debug, PartialEq)]
pub struct Params {
    dim: usize,
    u: Vec<f64>,
    v: Vec<f64>,
    signs: Vec<i8>,
}

/// Time derivative (or any tangent vector) in parameter space.
#[derive(Clone, Debug, PartialEq)]
pub struct Tangent {
    pub du: Vec<f64>,
    /// Row-major `m × d`.
    pub dv: Vec<f64>,
}

fn sign_of(u: f64) -> i8 {
    if u < 0.0 {
        -1
    } else {
        1
    }
}

impl Params {
    /// Builds parameters from `(u_j, v_j)` pairs; signs are taken from `u_j`.
    pub fn from_neurons(dim: usize, neurons: &[(f64, Vec<f64>)]) -> Result<Self> {
        if neurons.is_empty() {
            return Err(Error::domain("network needs at least one neuron"));
        }
        let mut u = Vec::with_capacity(neurons.len());
        let mut v = Vec::with_capacity(neurons.len() * dim);
        for (j, (uj, vj)) in neurons.iter().enumerate() {
            if vj.len() != dim {
                return Err(Error::domain(format!(
                    "neuron {j} has dimension {}, expected {dim}",
                    vj.len()
                )));
            }
            u.push(*uj);
            v.extend_from_slice(vj);
        }
        let signs = u.iter().map(|&x| sign_of(x)).collect();
        Ok(Params { dim, u, v, signs })
    }

    /// Builds parameters with explicit signs (e.g. neurons whose `u_j` is zero).
    pub fn with_signs(dim: usize, u: Vec<f64>, v: Vec<f64>, signs: Vec<i8>) -> Result<Self> {
        if u.is_empty() || v.len() != u.len() * dim || signs.len() != u.len() {
            return Err(Error::domain("inconsistent parameter shapes"));
        }
        if signs.iter().any(|s| s.abs() != 1) {
            return Err(Error::domain("signs must be ±1"));
        }
        Ok(Params { dim, u, v, signs })
    }

    #[inline]
    pub fn m(&self) -> usize {
        self.u.len()
    }

    #[inline]
    pub fn dim(&self) -> usize {
        self.dim
    }

    #[inline]
    pub fn u(&self, j: usize) -> f64 {
        self.u[j]
    }

    #[inline]
    pub fn v(&self, j: usize) -> &[f64] {
        &self.v[j * self.dim..(j + 1) * self.dim]
    }

    pub fn u_all(&self) -> &[f64] {
        &self.u
    }

    pub fn v_all(&self) -> &[f64] {
        &self.v
    }

    pub fn signs(&self) -> &[i8] {
        &self.signs
    }

    pub fn sign(&self, j: usize) -> i8 {
        self.signs[j]
    }

    pub fn set_neuron(&mut self, j: usize, u: f64, v: &[f64]) {
        self.u[j] = u;
        self.v[j * self.dim..(j + 1) * self.dim].copy_from_slice(v);
    }

    /// `cθ`
    pub fn scaled(&self, c: f64) -> Params {
        Params {
            dim: self.dim,
            u: self.u.iter().map(|x| c * x).collect(),
            v: self.v.iter().map(|x| c * x).collect(),
            signs: self.signs.clone(),
        }
    }

    /// `θ + h·t` (signs are kept from `self`).
    pub fn step(&self, h: f64, t: &Tangent) -> Params {
        Params {
            dim: self.dim,
            u: self.u.iter().zip(&t.du).map(|(a, b)| a + h * b).collect(),
            v: self.v.iter().zip(&t.dv).map(|(a, b)| a + h * b).collect(),
            signs: self.signs.clone(),
        }
    }

    pub fn step_in_place(&mut self, h: f64, t: &Tangent) {
        for (a, b) in self.u.iter_mut().zip(&t.du) {
            *a += h * b;
        }
        for (a, b) in self.v.iter_mut().zip(&t.dv) {
            *a += h * b;
        }
    }

    /// `||θ||² = Σ_j u_j² + ||v_j||²`
    pub fn norm_sq(&self) -> f64 {
        dot(&self.u, &self.u) + dot(&self.v, &self.v)
    }

    /// `||θ||_[m] = max_j max(|u_j|, ||v_j||)`
    pub fn max_neuron_norm(&self) -> f64 {
        (0..self.m())
            .map(|j| self.u[j].abs().max(norm(self.v(j))))
            .fold(0.0, f64::max)
    }

    /// `u_j² - ||v_j||²`, conserved along exact gradient flow.
    pub fn balance(&self, j: usize) -> f64 {
        let v = self.v(j);
        self.u[j] * self.u[j] - dot(v, v)
    }

    /// First-layer scale `sqrt(Σ_j ||v_j||²)`.
    pub fn first_layer_scale(&self) -> f64 {
        dot(&self.v, &self.v).sqrt()
    }

    /// Flattened `(u, v)` for distances and probes.
    pub fn flat(&self) -> Vec<f64> {
        let mut out = self.u.clone();
        out.extend_from_slice(&self.v);
        out
    }

    pub fn from_flat(&self, flat: &[f64]) -> Params {
        let m = self.m();
        Params {
            dim: self.dim,
            u: flat[..m].to_vec(),
            v: flat[m..].to_vec(),
            signs: self.signs.clone(),
        }
    }

    /// Keeps only the listed neurons, in the given order.
    pub fn subset(&self, idx: &[usize]) -> Params {
        let mut u = Vec::with_capacity(idx.len());
        let mut v = Vec::with_capacity(idx.len() * self.dim);
        let mut signs = Vec::with_capacity(idx.len());
        for &j in idx {
            u.push(self.u[j]);
            v.extend_from_slice(self.v(j));
            signs.push(self.signs[j]);
        }
        Params {
            dim: self.dim,
            u,
            v,
            signs,
        }
    }
}

impl Tangent {
    pub fn zeros_like(p: &Params) -> Tangent {
        Tangent {
            du: vec![0.0; p.m()],
            dv: vec![0.0; p.v.len()],
        }
    }

    pub fn norm(&self) -> f64 {
        (dot(&self.du, &self.du) + dot(&self.dv, &self.dv)).sqrt()
    }
}

fn check_shapes(theta: &Params, cfg: &ActivationCfg, data: &LabeledDataset) -> Result<()> {
    if theta.dim != cfg.dim() || data.dim() != cfg.dim() {
        return Err(Error::domain(format!(
            "dimension mismatch: params d = {}, activation d = {}, data d = {}",
            theta.dim,
            cfg.dim(),
            data.dim()
        )));
    }
    Ok(())
}

// Below this many neuron-example pairs the thread pool costs more than it saves.
const PAR_THRESHOLD: usize = 1 << 14;

/// `f(θ, x)`
pub fn forward(theta: &Params, cfg: &ActivationCfg, x: &[f64]) -> Result<f64> {
    if theta.dim != cfg.dim() || x.len() != cfg.dim() {
        return Err(Error::domain("dimension mismatch in forward"));
    }
    Ok(forward_unchecked(theta, cfg, x))
}

#[inline]
fn forward_unchecked(theta: &Params, cfg: &ActivationCfg, x: &[f64]) -> f64 {
    let mut f = 0.0;
    for j in 0..theta.m() {
        let uj = theta.u[j];
        if uj != 0.0 {
            f += uj * cfg.phi_unchecked(theta.v(j), x);
        }
    }
    f
}

/// Margins `f(θ, x_i) y_i` for every example.
pub fn margins(theta: &Params, cfg: &ActivationCfg, data: &LabeledDataset) -> Result<Vec<f64>> {
    check_shapes(theta, cfg, data)?;
    Ok(margins_unchecked(theta, cfg, data))
}

fn margins_unchecked(theta: &Params, cfg: &ActivationCfg, data: &LabeledDataset) -> Vec<f64> {
    let n = data.len();
    if n * theta.m() >= PAR_THRESHOLD {
        (0..n)
            .into_par_iter()
            .map(|i| forward_unchecked(theta, cfg, data.point(i)) * data.label(i))
            .collect()
    } else {
        (0..n)
            .map(|i| forward_unchecked(theta, cfg, data.point(i)) * data.label(i))
            .collect()
    }
}

/// `ℓ(z) = ln(1 + e^{-z})`, evaluated without overflow.
#[inline]
pub fn logistic_loss(z: f64) -> f64 {
    (-z).max(0.0) + (-z.abs()).exp().ln_1p()
}

/// `-ℓ'(z) = 1 / (1 + e^z)`, evaluated without overflow.
#[inline]
pub fn neg_loss_derivative(z: f64) -> f64 {
    if z > 0.0 {
        let e = (-z).exp();
        e / (1.0 + e)
    } else {
        1.0 / (1.0 + z.exp())
    }
}

/// `-ℓ'(0)`, the weight of every example in the linearized dynamics.
pub fn neg_loss_derivative_at_zero() -> f64 {
    neg_loss_derivative(0.0)
}

/// Mean logistic loss over the dataset.
pub fn loss(theta: &Params, cfg: &ActivationCfg, data: &LabeledDataset) -> Result<f64> {
    let m = margins(theta, cfg, data)?;
    Ok(mean_loss(&m))
}

pub(crate) fn mean_loss(margins: &[f64]) -> f64 {
    let terms: Vec<f64> = margins.iter().map(|&z| logistic_loss(z)).collect();
    pairwise_scalar(&terms) / margins.len() as f64
}

const BLOCK: usize = 8;

/// Pairwise sum of `width`-vectors `term(i)` over `i ∈ [lo, hi)` into `out`,
/// which must be zeroed. `scratch` needs `width * tree_depth(hi - lo)` entries.
fn pairwise_accumulate<F>(lo: usize, hi: usize, width: usize, term: &F, out: &mut [f64], scratch: &mut [f64])
where
    F: Fn(usize, &mut [f64]),
{
    if hi - lo <= BLOCK {
        for i in lo..hi {
            term(i, out);
        }
        return;
    }
    let mid = lo + (hi - lo) / 2;
    pairwise_accumulate(lo, mid, width, term, out, scratch);
    let (tmp, rest) = scratch.split_at_mut(width);
    tmp.fill(0.0);
    pairwise_accumulate(mid, hi, width, term, tmp, rest);
    for (o, t) in out.iter_mut().zip(tmp.iter()) {
        *o += *t;
    }
}

fn tree_depth(n: usize) -> usize {
    let mut depth = 1;
    let mut len = n;
    while len > BLOCK {
        len = len.div_ceil(2);
        depth += 1;
    }
    depth
}

pub(crate) fn pairwise_scalar(xs: &[f64]) -> f64 {
    let mut out = [0.0];
    let mut scratch = vec![0.0; tree_depth(xs.len())];
    pairwise_accumulate(0, xs.len(), 1, &|i, acc: &mut [f64]| acc[0] += xs[i], &mut out, &mut scratch);
    out[0]
}

/// `(1/n) Σ_i c_i (φ(v, x_i), ∇_v φ(v, x_i))` with a pairwise tree over `i`.
/// Returns `(Σ c_i φ, Σ c_i ∇φ)`.
pub(crate) fn weighted_phi_and_grad(
    cfg: &ActivationCfg,
    v: &[f64],
    data: &LabeledDataset,
    coef: &[f64],
) -> (f64, Vec<f64>) {
    let d = v.len();
    let width = d + 1;
    let n = data.len();
    let mut acc = vec![0.0; width];
    let mut scratch = vec![0.0; width * tree_depth(n)];
    let term = |i: usize, out: &mut [f64]| {
        let c = coef[i];
        if c != 0.0 {
            let (head, tail) = out.split_at_mut(1);
            head[0] += c * cfg.add_grad_phi(c, v, data.point(i), tail);
        }
    };
    pairwise_accumulate(0, n, width, &term, &mut acc, &mut scratch);
    let inv_n = 1.0 / n as f64;
    let phi_sum = acc[0] * inv_n;
    let grad: Vec<f64> = acc[1..].iter().map(|g| g * inv_n).collect();
    (phi_sum, grad)
}

/// Gradient-flow field `-∇L(θ)` together with the current margins.
pub fn flow_rhs_with_margins(
    theta: &Params,
    cfg: &ActivationCfg,
    data: &LabeledDataset,
) -> Result<(Tangent, Vec<f64>)> {
    check_shapes(theta, cfg, data)?;
    if cfg.kind() == ActivationKind::Smoothed {
        if let Some(j) = (0..theta.m()).find(|&j| norm(theta.v(j)) == 0.0) {
            return Err(Error::ZeroNeuron { neuron: j });
        }
    }
    let margins = margins_unchecked(theta, cfg, data);
    let coef: Vec<f64> = margins
        .iter()
        .zip(data.labels())
        .map(|(&z, &y)| neg_loss_derivative(z) * y)
        .collect();
    Ok((rhs_with_coef(theta, cfg, data, &coef), margins))
}

/// `du_j = (1/n) Σ c_i φ(v_j, x_i)`, `dv_j = u_j (1/n) Σ c_i ∇φ(v_j, x_i)`.
fn rhs_with_coef(theta: &Params, cfg: &ActivationCfg, data: &LabeledDataset, coef: &[f64]) -> Tangent {
    let d = theta.dim;
    let m = theta.m();
    let neuron = |j: usize| weighted_phi_and_grad(cfg, theta.v(j), data, coef);
    let per_neuron: Vec<(f64, Vec<f64>)> = if m * data.len() >= PAR_THRESHOLD {
        (0..m).into_par_iter().map(neuron).collect()
    } else {
        (0..m).map(neuron).collect()
    };
    let mut t = Tangent {
        du: Vec::with_capacity(m),
        dv: Vec::with_capacity(m * d),
    };
    for (j, (phi_sum, grad)) in per_neuron.into_iter().enumerate() {
        t.du.push(phi_sum);
        let uj = theta.u[j];
        t.dv.extend(grad.iter().map(|g| uj * g));
    }
    t
}

/// Field of the system linearized at zero output: `du_j = G(v_j)`,
/// `dv_j = u_j g(v_j)`. Neurons do not interact.
pub fn linearized_rhs(theta: &Params, cfg: &ActivationCfg, data: &LabeledDataset) -> Result<Tangent> {
    check_shapes(theta, cfg, data)?;
    if cfg.kind() == ActivationKind::Smoothed {
        if let Some(j) = (0..theta.m()).find(|&j| norm(theta.v(j)) == 0.0) {
            return Err(Error::ZeroNeuron { neuron: j });
        }
    }
    let w = neg_loss_derivative_at_zero();
    let coef: Vec<f64> = data.labels().iter().map(|y| w * y).collect();
    Ok(rhs_with_coef(theta, cfg, data, &coef))
}

/// Gradient-flow field `dθ/dt = -∇L(θ)`.
pub fn flow_rhs(theta: &Params, cfg: &ActivationCfg, data: &LabeledDataset) -> Result<Tangent> {
    flow_rhs_with_margins(theta, cfg, data).map(|(t, _)| t)
}

/// Balanced small initialization `θ(0) = σ θ⁰`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct InitSpec {
    pub sigma: f64,
    pub m: usize,
    pub d: usize,
    pub seed: u64,
    /// `|u⁰_j| = ||v⁰_j||`; 1 by default.
    pub radius: f64,
}

impl InitSpec {
    pub fn new(sigma: f64, m: usize, d: usize, seed: u64) -> Self {
        InitSpec {
            sigma,
            m,
            d,
            seed,
            radius: 1.0,
        }
    }

    pub fn with_radius(mut self, radius: f64) -> Self {
        self.radius = radius;
        self
    }
}

/// Draws `v̂⁰_j` uniformly on the sphere and a Rademacher sign for `u⁰_j`, with
/// `|u⁰_j| = ||v⁰_j|| = radius`, then scales everything by `σ`.
pub fn init_params(spec: &InitSpec, cfg: &ActivationCfg) -> Result<Params> {
    if !(spec.sigma > 0.0) || !spec.sigma.is_finite() {
        return Err(Error::domain(format!("sigma must be positive, got {}", spec.sigma)));
    }
    if !(spec.radius > 0.0) || !spec.radius.is_finite() {
        return Err(Error::domain(format!("radius must be positive, got {}", spec.radius)));
    }
    if spec.m == 0 {
        return Err(Error::domain("m must be at least 1"));
    }
    if spec.d != cfg.dim() {
        return Err(Error::domain(format!(
            "init dimension {} does not match activation dimension {}",
            spec.d,
            cfg.dim()
        )));
    }
    let mut rng = rng_from_seed(spec.seed);
    let scale = spec.sigma * spec.radius;
    let mut neurons = Vec::with_capacity(spec.m);
    for _ in 0..spec.m {
        let dir = sample_sphere(&mut rng, spec.d);
        let s = if rng.random::<bool>() { 1.0 } else { -1.0 };
        neurons.push((s * scale, dir.iter().map(|x| scale * x).collect()));
    }
    Params::from_neurons(spec.d, &neurons)
}

/// Uniform direction on `S^{d-1}`.
pub fn sample_sphere<R: rand::Rng + ?Sized>(rng: &mut R, d: usize) -> Vec<f64> {
    loop {
        let z: Vec<f64> = (0..d).map(|_| StandardNormal.sample(rng)).collect();
        let n = norm(&z);
        if n > 1e-12 {
            return z.iter().map(|x| x / n).collect();
        }
    }
}

/// Writes `u,sign,v_0..v_{d-1}`, one row per neuron, with round-trip floats.
pub fn save_params(path: &Path, theta: &Params) -> Result<()> {
    let mut w = crate::csvio::writer(path)?;
    let mut header = vec!["u".to_string(), "sign".to_string()];
    header.extend((0..theta.dim()).map(|k| format!("v_{k}")));
    w.write_record(&header)?;
    for j in 0..theta.m() {
        let mut row = vec![fmt(theta.u(j)), theta.sign(j).to_string()];
        row.extend(theta.v(j).iter().map(|&c| fmt(c)));
        w.write_record(&row)?;
    }
    crate::csvio::finish(w, path)
}

pub fn load_params(path: &Path) -> Result<Params> {
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).from_reader(file);
    let parse_err = |line: u64, msg: String| Error::Parse {
        path: path.to_path_buf(),
        line,
        msg,
    };
    let header = rdr.headers()?.clone();
    let d = header.len().saturating_sub(2);
    let expected: Vec<String> = ["u".to_string(), "sign".to_string()]
        .into_iter()
        .chain((0..d).map(|k| format!("v_{k}")))
        .collect();
    if d == 0 || header.iter().map(str::trim).ne(expected.iter().map(String::as_str)) {
        return Err(parse_err(1, format!("header must be {}", expected.join(","))));
    }
    let (mut u, mut v, mut signs) = (Vec::new(), Vec::new(), Vec::new());
    for rec in rdr.records() {
        let rec = rec?;
        let line = rec.position().map_or(0, |p| p.line());
        if rec.len() != d + 2 {
            return Err(parse_err(line, format!("expected {} fields, found {}", d + 2, rec.len())));
        }
        let num = |k: usize| -> Result<f64> {
            rec[k]
                .trim()
                .parse::<f64>()
                .ok()
                .filter(|x| x.is_finite())
                .ok_or_else(|| parse_err(line, format!("'{}' is not a finite number", &rec[k])))
        };
        u.push(num(0)?);
        signs.push(match rec[1].trim() {
            "1" | "+1" => 1,
            "-1" => -1,
            other => return Err(parse_err(line, format!("sign '{other}' is not ±1"))),
        });
        for k in 0..d {
            v.push(num(k + 2)?);
        }
    }
    Params::with_signs(d, u, v, signs)
}
