//! XOR-like and skewed-XOR data generators, the symmetry/regularity validator,
//! and the dataset CSV format.
//!
//! XOR data is built by orbit closure: base points are drawn near `e1` and the
//! full group generated by the coordinate swap `P`, the reflections `R1`, `R2`
//! and `R_r` (negate coordinates 3..d) is applied, so the symmetry clauses hold
//! exactly rather than statistically.

use std::collections::HashSet;
use std::path::Path;

use rand::Rng as _;

use crate::error::{Error, Result};
use crate::linalg::{norm, LabeledDataset, NORM_BOUND_SLACK};
use crate::network::sample_sphere;
use crate::rng::{rng_from_seed, Rng};

const MAX_ATTEMPTS_PER_POINT: usize = 100_000;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct XorSpec {
    pub d: usize,
    /// Base points per cluster before symmetry closure.
    pub per_cluster: usize,
    /// Cluster radius `δ`.
    pub delta: f64,
    /// Regularity margin `Δ`.
    pub delta0: f64,
    pub xi: f64,
    pub seed: u64,
}

impl XorSpec {
    pub fn validate(&self) -> Result<()> {
        if self.d < 2 {
            return Err(Error::domain("XOR data needs d ≥ 2"));
        }
        if self.per_cluster == 0 {
            return Err(Error::domain("per_cluster must be at least 1"));
        }
        if !(0.0..std::f64::consts::FRAC_1_SQRT_2).contains(&self.delta) {
            return Err(Error::domain(format!("delta = {} outside [0, √2/2)", self.delta)));
        }
        if self.delta0 < 0.0 || self.xi < 0.0 {
            return Err(Error::domain("delta0 and xi must be non-negative"));
        }
        let floor = self.xi + 2.0 * self.delta0;
        // Coordinates other than the cluster axis only reach δ.
        if floor > self.delta {
            return Err(Error::domain(format!(
                "xi + 2·delta0 = {floor} exceeds delta = {}: no point can satisfy the regularity margin",
                self.delta
            )));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SkewSpec {
    /// Angle between the positive and negative cluster directions, radians.
    pub alpha: f64,
    pub per_cluster: usize,
    pub delta: f64,
    pub seed: u64,
}

impl SkewSpec {
    pub fn validate(&self) -> Result<()> {
        if !(self.alpha > 0.0 && self.alpha < std::f64::consts::PI) {
            return Err(Error::domain(format!("alpha = {} outside (0, π)", self.alpha)));
        }
        if self.per_cluster == 0 {
            return Err(Error::domain("per_cluster must be at least 1"));
        }
        if !(0.0..std::f64::consts::FRAC_1_SQRT_2).contains(&self.delta) {
            return Err(Error::domain(format!("delta = {} outside [0, √2/2)", self.delta)));
        }
        Ok(())
    }
}

/// Uniform point in the `δ`-ball around `e1`, accepted by `keep`.
fn draw_near_e1(rng: &mut Rng, d: usize, delta: f64, keep: impl Fn(&[f64]) -> bool) -> Result<Vec<f64>> {
    for _ in 0..MAX_ATTEMPTS_PER_POINT {
        let dir = sample_sphere(rng, d);
        let rad = delta * rng.random::<f64>().powf(1.0 / d as f64);
        let mut x: Vec<f64> = dir.iter().map(|c| rad * c).collect();
        x[0] += 1.0;
        if norm(&x) <= 1.0 && keep(&x) {
            return Ok(x);
        }
    }
    Err(Error::Generation(format!(
        "no acceptable point near e1 after {MAX_ATTEMPTS_PER_POINT} draws (delta = {delta})"
    )))
}

fn swap12(x: &[f64]) -> Vec<f64> {
    let mut y = x.to_vec();
    y.swap(0, 1);
    y
}

fn reflect(x: &[f64], k: usize) -> Vec<f64> {
    let mut y = x.to_vec();
    y[k] = -y[k];
    y
}

fn reflect_rest(x: &[f64]) -> Vec<f64> {
    let mut y = x.to_vec();
    for c in y.iter_mut().skip(2) {
        *c = -*c;
    }
    y
}

fn bits_key(x: &[f64]) -> Vec<u64> {
    // +0.0 and -0.0 are the same point
    x.iter().map(|&c| if c == 0.0 { 0 } else { c.to_bits() }).collect()
}

/// Orbit of `x` under `<P, R1, R2, R_r>`, in breadth-first order.
fn orbit(x: &[f64]) -> Vec<Vec<f64>> {
    let mut seen = HashSet::new();
    let mut out = vec![x.to_vec()];
    seen.insert(bits_key(x));
    let mut head = 0;
    while head < out.len() {
        let p = out[head].clone();
        head += 1;
        for q in [swap12(&p), reflect(&p, 0), reflect(&p, 1), reflect_rest(&p)] {
            if seen.insert(bits_key(&q)) {
                out.push(q);
            }
        }
    }
    out
}

/// Label rule: clusters around `±e1` are positive, around `±e2` negative.
fn xor_label(x: &[f64]) -> i8 {
    if x[0].abs() > x[1].abs() {
        1
    } else {
        -1
    }
}

/// XOR-like data satisfying all four symmetry/regularity clauses by construction.
pub fn gen_xor(spec: &XorSpec) -> Result<LabeledDataset> {
    spec.validate()?;
    let mut rng = rng_from_seed(spec.seed);
    let floor = spec.xi + 2.0 * spec.delta0;
    let mut seen = HashSet::new();
    let mut points = Vec::new();
    let mut labels = Vec::new();
    for _ in 0..spec.per_cluster {
        let base = draw_near_e1(&mut rng, spec.d, spec.delta, |x| x.iter().all(|c| c.abs() >= floor))?;
        for p in orbit(&base) {
            if seen.insert(bits_key(&p)) {
                labels.push(xor_label(&p));
                points.push(p);
            }
        }
    }
    LabeledDataset::new(spec.d, points, labels)
}

fn rotate(x: &[f64], theta: f64) -> Vec<f64> {
    let (s, c) = theta.sin_cos();
    vec![c * x[0] - s * x[1], s * x[0] + c * x[1]]
}

/// Planar XOR with positive clusters at angles `0, π` and negative clusters at `α, π + α`.
///
/// Each base point `p` and its mirror `(p1, -p2)` are rotated into all four
/// clusters, so the clusters are congruent and labels are exactly balanced.
pub fn gen_skewed_xor(spec: &SkewSpec) -> Result<LabeledDataset> {
    spec.validate()?;
    let mut rng = rng_from_seed(spec.seed);
    let mut seen = HashSet::new();
    let mut points = Vec::new();
    let mut labels = Vec::new();
    let angles = [
        (0.0, 1i8),
        (spec.alpha, -1),
        (std::f64::consts::PI, 1),
        (std::f64::consts::PI + spec.alpha, -1),
    ];
    for _ in 0..spec.per_cluster {
        let p = draw_near_e1(&mut rng, 2, spec.delta, |_| true)?;
        let mirror = vec![p[0], -p[1]];
        for &(theta, y) in &angles {
            for q in [&p, &mirror] {
                let r = rotate(q, theta);
                if seen.insert(bits_key(&r)) {
                    points.push(r);
                    labels.push(y);
                }
            }
        }
    }
    LabeledDataset::new(2, points, labels)
}

#[derive(Clone, Debug, PartialEq)]
pub struct ClauseCheck {
    pub pass: bool,
    /// Index of the worst offending point, if any point fails.
    pub worst_index: Option<usize>,
    /// Clause-specific worst value (distance, mismatch, or margin).
    pub worst_value: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct XorReport {
    /// Clause 1: each point lies within some `δ < √2/2` of its cluster center with the right label.
    pub membership: ClauseCheck,
    /// Largest distance from a point to its cluster center.
    pub delta_hat: f64,
    /// Clause 2: closure under `R1`, `R2`, `R_r`.
    pub reflections: ClauseCheck,
    /// Clause 3: closure under `P`.
    pub permutation: ClauseCheck,
    /// Clause 4: `|x_i^k| ≥ ξ + 2Δ` for every coordinate.
    pub regularity: ClauseCheck,
}

impl XorReport {
    pub fn all_pass(&self) -> bool {
        self.membership.pass && self.reflections.pass && self.permutation.pass && self.regularity.pass
    }
}

const SYMMETRY_TOL: f64 = 1e-9;

type PointMap = fn(&[f64]) -> Vec<f64>;

fn closure_check(data: &LabeledDataset, maps: &[PointMap]) -> ClauseCheck {
    let mut worst = (None, 0.0);
    for (i, x) in data.points().enumerate() {
        for map in maps {
            let y = map(x);
            let gap = data
                .points()
                .map(|z| z.iter().zip(&y).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max))
                .fold(f64::INFINITY, f64::min);
            if gap > worst.1 {
                worst = (Some(i), gap);
            }
        }
    }
    ClauseCheck {
        pass: worst.1 <= SYMMETRY_TOL,
        worst_index: if worst.1 > SYMMETRY_TOL { worst.0 } else { None },
        worst_value: worst.1,
    }
}

/// Checks the four clauses of the XOR data assumption and reports the worst offender of each.
pub fn validate_xor_assumptions(data: &LabeledDataset, xi: f64, delta0: f64) -> Result<XorReport> {
    let d = data.dim();
    if d < 2 {
        return Err(Error::domain("XOR validation needs d ≥ 2"));
    }
    let centers: [(usize, f64, i8); 4] = [(0, 1.0, 1), (0, -1.0, 1), (1, 1.0, -1), (1, -1.0, -1)];
    let mut delta_hat: f64 = 0.0;
    let mut far = (None, 0.0);
    let mut bad_label = None;
    for (i, x) in data.points().enumerate() {
        let (dist, label) = centers
            .iter()
            .map(|&(k, b, y)| {
                let dist = x
                    .iter()
                    .enumerate()
                    .map(|(j, c)| if j == k { (c - b).powi(2) } else { c * c })
                    .sum::<f64>()
                    .sqrt();
                (dist, y)
            })
            .fold((f64::INFINITY, 0), |best, cur| if cur.0 < best.0 { cur } else { best });
        if label != data.label_i8(i) && bad_label.is_none() {
            bad_label = Some(i);
        }
        if dist > far.1 {
            far = (Some(i), dist);
        }
        delta_hat = delta_hat.max(dist);
    }
    let bound = std::f64::consts::FRAC_1_SQRT_2;
    let membership = match bad_label {
        Some(i) => ClauseCheck {
            pass: false,
            worst_index: Some(i),
            worst_value: delta_hat,
        },
        None => ClauseCheck {
            pass: delta_hat < bound,
            worst_index: if delta_hat < bound { None } else { far.0 },
            worst_value: delta_hat,
        },
    };
    let reflections = closure_check(
        data,
        &[|x| reflect(x, 0), |x| reflect(x, 1), reflect_rest],
    );
    let permutation = closure_check(data, &[swap12]);
    let floor = xi + 2.0 * delta0;
    let mut low = (None, f64::INFINITY);
    for (i, x) in data.points().enumerate() {
        let m = x.iter().fold(f64::INFINITY, |a, c| a.min(c.abs()));
        if m < low.1 {
            low = (Some(i), m);
        }
    }
    let regularity = ClauseCheck {
        pass: low.1 >= floor,
        worst_index: if low.1 >= floor { None } else { low.0 },
        worst_value: low.1,
    };
    Ok(XorReport {
        membership,
        delta_hat,
        reflections,
        permutation,
        regularity,
    })
}

/// Writes `x_0..x_{d-1},y` with 17 significant digits.
pub fn save_dataset(path: &Path, data: &LabeledDataset) -> Result<()> {
    let mut w = crate::csvio::writer(path)?;
    let mut header: Vec<String> = (0..data.dim()).map(|k| format!("x_{k}")).collect();
    header.push("y".into());
    w.write_record(&header)?;
    for (i, x) in data.points().enumerate() {
        let mut row: Vec<String> = x.iter().map(|c| format!("{c:.16e}")).collect();
        row.push(data.label_i8(i).to_string());
        w.write_record(&row)?;
    }
    crate::csvio::finish(w, path)
}

/// Reads a dataset CSV, rejecting malformed rows with their line number.
pub fn load_dataset(path: &Path) -> Result<LabeledDataset> {
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).from_reader(file);
    let parse_err = |line: u64, msg: String| Error::Parse {
        path: path.to_path_buf(),
        line,
        msg,
    };
    let header = rdr.headers()?.clone();
    let d = header.len().checked_sub(1).filter(|&d| d >= 1).ok_or_else(|| parse_err(1, "need at least one coordinate column and y".into()))?;
    for (k, name) in header.iter().enumerate() {
        let want = if k == d { "y".to_string() } else { format!("x_{k}") };
        if name.trim() != want {
            return Err(parse_err(1, format!("column {k} is '{name}', expected '{want}'")));
        }
    }
    let mut points = Vec::new();
    let mut labels = Vec::new();
    for rec in rdr.records() {
        let rec = rec?;
        let line = rec.position().map_or(0, |p| p.line());
        if rec.len() != d + 1 {
            return Err(parse_err(line, format!("expected {} fields, found {}", d + 1, rec.len())));
        }
        let mut x = Vec::with_capacity(d);
        for field in rec.iter().take(d) {
            let v: f64 = field
                .trim()
                .parse()
                .map_err(|_| parse_err(line, format!("'{field}' is not a number")))?;
            if !v.is_finite() {
                return Err(parse_err(line, format!("non-finite coordinate '{field}'")));
            }
            x.push(v);
        }
        if norm(&x) > 1.0 + NORM_BOUND_SLACK {
            return Err(parse_err(line, format!("point norm {} exceeds 1", norm(&x))));
        }
        let y = match rec[d].trim() {
            "1" | "+1" | "1.0" => 1,
            "-1" | "-1.0" => -1,
            other => return Err(parse_err(line, format!("label '{other}' is not ±1"))),
        };
        points.push(x);
        labels.push(y);
    }
    if points.is_empty() {
        return Err(parse_err(1, "no data rows".into()));
    }
    LabeledDataset::new(d, points, labels)
}
