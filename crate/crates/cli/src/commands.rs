//! One handler per subcommand. Each reads its settings, checks for unused
//! keys before doing any work, writes its outputs and reports where they went.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use log::info;

use simbias::analysis::capture::capture_probability_mc;
use simbias::analysis::coupling::{coupling_base, phase1_coupling};
use simbias::analysis::margin::{theta_breve, unbalanced_control, ACCURACY_MARGIN};
use simbias::analysis::{
    accuracy_time_detector, alignment_report, four_neuron_init, local_max_margin_probe, normalized_margin,
    summarize_four, train4,
};
use simbias::datasets::{gen_skewed_xor, gen_xor, load_dataset, save_dataset, validate_xor_assumptions, SkewSpec, XorSpec};
use simbias::dynamics::{gd_run, write_trajectory_csv, LogSpec, Schedule};
use simbias::gfield::{find_extrema, write_landscape_csv, GLandscape};
use simbias::linalg::LabeledDataset;
use simbias::network::{init_params, load_params, save_params, InitSpec, Params};
use simbias::rng::stream_seed;
use simbias::ActivationCfg;

use crate::settings::Settings;

/// Where a command put its results; the manifest goes next to them.
pub struct Written {
    pub manifest: Option<PathBuf>,
    pub outputs: Vec<PathBuf>,
}

fn out_dir(s: &mut Settings, default: &str) -> PathBuf {
    PathBuf::from(s.string("out", default))
}

fn make_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).with_context(|| format!("{}: cannot create output directory", dir.display()))
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).with_context(|| format!("{}: cannot write", path.display()))
}

fn load(path: &Path) -> Result<LabeledDataset> {
    load_dataset(path).context("loading dataset")
}

fn xor_spec(s: &mut Settings, d: usize, per_cluster: usize, delta: f64, delta0: f64, xi: f64, seed: u64) -> Result<XorSpec> {
    Ok(XorSpec {
        d: s.get("d", d)?,
        per_cluster: s.get("per_cluster", per_cluster)?,
        delta: s.get("delta", delta)?,
        delta0: s.get("delta0", delta0)?,
        xi: s.get("xi", xi)?,
        seed: stream_seed(seed, "dataset"),
    })
}

fn finish_file(out: PathBuf) -> Written {
    Written {
        manifest: Some(crate::manifest::path_for(&out, false)),
        outputs: vec![out],
    }
}

fn finish_dir(dir: &Path, files: &[&str]) -> Written {
    Written {
        manifest: Some(crate::manifest::path_for(dir, true)),
        outputs: files.iter().map(|f| dir.join(f)).collect(),
    }
}

pub fn gen_xor_cmd(s: &mut Settings) -> Result<Written> {
    let seed = s.get("seed", 1u64)?;
    let spec = xor_spec(s, 2, 8, 0.05, 0.01, 0.0, seed)?;
    let out = PathBuf::from(s.string("out", "data.csv"));
    s.finish()?;
    let data = gen_xor(&spec)?;
    save_dataset(&out, &data)?;
    println!("wrote {} points in d = {} to {}", data.len(), data.dim(), out.display());
    Ok(finish_file(out))
}

pub fn gen_skew_cmd(s: &mut Settings) -> Result<Written> {
    let seed = s.get("seed", 1u64)?;
    let spec = SkewSpec {
        alpha: s.angle("alpha_rad", "pi/3")?,
        per_cluster: s.get("per_cluster", 16usize)?,
        delta: s.get("delta", 0.05)?,
        seed: stream_seed(seed, "dataset"),
    };
    let out = PathBuf::from(s.string("out", "data.csv"));
    s.finish()?;
    let data = gen_skewed_xor(&spec)?;
    save_dataset(&out, &data)?;
    println!("wrote {} points to {}", data.len(), out.display());
    Ok(finish_file(out))
}

fn landscape_text(land: &GLandscape) -> String {
    let mut t = format!("λ = {:.9e}, {} extrema\n", land.lambda, land.extrema.len());
    for e in &land.extrema {
        let polar = if e.direction.len() >= 2 { e.direction[1].atan2(e.direction[0]) } else { 0.0 };
        let _ = writeln!(
            t,
            "  G = {:+.9e}  sign {:+}  hits {:>4}  polar {:+.6} rad  {:?}",
            e.value, e.sign, e.basin_hits, polar, e.direction
        );
    }
    t
}

pub fn landscape_cmd(s: &mut Settings) -> Result<Written> {
    let data_path = s.path_required("data")?;
    let xi = s.get("xi", 0.0)?;
    let n_starts = s.get("n_starts", 256usize)?;
    let dedup = s.get("dedup_rad", simbias::gfield::DEFAULT_DEDUP_ANGLE)?;
    let seed = s.get("seed", 1u64)?;
    let out = PathBuf::from(s.string("out", "landscape.csv"));
    s.finish()?;
    let data = load(&data_path)?;
    let cfg = ActivationCfg::from_xi(data.dim(), xi)?;
    let land = find_extrema(&data, &cfg, n_starts, stream_seed(seed, "landscape"), dedup)?;
    write_landscape_csv(&out, &land)?;
    print!("{}", landscape_text(&land));
    Ok(finish_file(out))
}

pub fn train_cmd(s: &mut Settings) -> Result<Written> {
    let seed = s.get("seed", 1u64)?;
    let data = match s.path_opt("data") {
        Some(p) => load(&p)?,
        None => gen_skewed_xor(&SkewSpec {
            alpha: s.angle("alpha_rad", "pi/2")?,
            per_cluster: s.get("per_cluster", 16usize)?,
            delta: s.get("delta", 0.05)?,
            seed: stream_seed(seed, "dataset"),
        })?,
    };
    let xi = s.get("xi", 0.0)?;
    let m = s.get("m", 4096usize)?;
    let sigma = s.get("sigma", 2f64.powi(-7))?;
    let radius = s.get("init_radius", 1.0 / 3f64.sqrt())?;
    let lr = s.get("lr", 2f64.powi(-4))?;
    let epochs = s.get("epochs", 8192u64)?;
    let every = s.get("log_every", 64u64)?;
    let track = s.get("track", 16usize)?;
    let n_starts = s.get("n_starts", 256usize)?;
    let tol = s.angle("align_tol_rad", "0.1")?;
    let dir = out_dir(s, "runs/train");
    s.finish()?;

    make_dir(&dir)?;
    let cfg = ActivationCfg::from_xi(data.dim(), xi)?;
    let land = find_extrema(&data, &cfg, n_starts, stream_seed(seed, "landscape"), simbias::gfield::DEFAULT_DEDUP_ANGLE)?;
    info!("landscape: λ = {:.6e}, {} extrema", land.lambda, land.extrema.len());
    let theta0 = init_params(&InitSpec::new(sigma, m, data.dim(), stream_seed(seed, "init")).with_radius(radius), &cfg)?;
    let log = LogSpec::new(every)
        .with_refs(land.directions())
        .tracking((0..track.min(m)).collect());
    info!("training {m} neurons for {epochs} epochs");
    let run = gd_run(&theta0, &cfg, &data, &Schedule::Constant(lr), epochs, &log)?;
    let align = alignment_report(&run.final_params, &land.directions(), tol)?;

    save_dataset(&dir.join("data.csv"), &data)?;
    write_landscape_csv(&dir.join("landscape.csv"), &land)?;
    write_trajectory_csv(&dir.join("trajectory.csv"), &run.records)?;
    align.write_csv(&dir.join("alignment.csv"))?;
    save_params(&dir.join("params.csv"), &run.final_params)?;
    let last = run.records.last().expect("final record");
    let summary = format!(
        "first-layer scale {:.6} -> {:.6}\nfinal loss {:.6e}, min margin {:.6}\n{}{}",
        run.records[0].first_layer_scale,
        last.first_layer_scale,
        last.loss,
        last.min_margin,
        landscape_text(&land),
        align.to_text()
    );
    write_text(&dir.join("summary.txt"), &summary)?;
    print!("{summary}");
    Ok(finish_dir(
        &dir,
        &["data.csv", "landscape.csv", "trajectory.csv", "alignment.csv", "params.csv", "summary.txt"],
    ))
}

pub fn train4_cmd(s: &mut Settings) -> Result<Written> {
    let seed = s.get("seed", 1u64)?;
    let data = match s.path_opt("data") {
        Some(p) => load(&p)?,
        None => gen_xor(&xor_spec(s, 2, 4, 0.01, 0.001, 0.0, seed)?)?,
    };
    let init: Vec<f64> = s.list("init", "1e-4,-1e-5,1e-7,-1e-6")?;
    let epochs = s.get("epochs", 20_000u64)?;
    let every = s.get("log_every", 64u64)?;
    let xi = s.get("activation_xi", 0.0)?;
    let dir = out_dir(s, "runs/train4");
    s.finish()?;
    let init: [f64; 4] = init
        .try_into()
        .map_err(|v: Vec<f64>| anyhow::anyhow!("init needs four values, got {}", v.len()))?;

    make_dir(&dir)?;
    let cfg = ActivationCfg::from_xi(data.dim(), xi)?;
    let run = train4(&four_neuron_init(init, data.dim())?, &cfg, &data, epochs, every)?;
    let sum = summarize_four(&run)?;
    save_dataset(&dir.join("data.csv"), &data)?;
    write_trajectory_csv(&dir.join("trajectory.csv"), &run.records)?;
    save_params(&dir.join("params.csv"), &run.final_params)?;
    let hit = accuracy_time_detector(&run.records, ACCURACY_MARGIN);
    let summary = format!(
        "alphas (rad) {:?}\n||v_k|| {:?}\nnorm spread {:.6}\npairing gap {:.6}\nlast-window distance to θ̆ decreasing: {}\nfirst logged epoch with min margin > {ACCURACY_MARGIN}: {}\n",
        sum.alphas,
        sum.v_norms,
        sum.norm_spread,
        sum.pairing_gap(),
        sum.last_window_decreasing(),
        hit.map_or("none".to_string(), |e| e.to_string())
    );
    write_text(&dir.join("summary.txt"), &summary)?;
    print!("{summary}");
    Ok(finish_dir(&dir, &["data.csv", "trajectory.csv", "params.csv", "summary.txt"]))
}

pub fn couple_cmd(s: &mut Settings) -> Result<Written> {
    let seed = s.get("seed", 1u64)?;
    let data = match s.path_opt("data") {
        Some(p) => load(&p)?,
        None => gen_xor(&xor_spec(s, 3, 2, 0.05, 0.005, 0.01, seed)?)?,
    };
    let xi = s.get("activation_xi", 0.01)?;
    let r_list: Vec<f64> = s.list("r_list", "0.2,0.1,0.05,0.025")?;
    let kappa = s.get("kappa_star", 0.5)?;
    let m_random = s.get("m_random", 16usize)?;
    let h = s.get("h", 0.01)?;
    let n_starts = s.get("n_starts", 256usize)?;
    let dir = out_dir(s, "runs/couple");
    s.finish()?;

    make_dir(&dir)?;
    let cfg = ActivationCfg::from_xi(data.dim(), xi)?;
    let land = find_extrema(&data, &cfg, n_starts, stream_seed(seed, "landscape"), simbias::gfield::DEFAULT_DEDUP_ANGLE)?;
    let base = coupling_base(&data, &cfg, &land, m_random, stream_seed(seed, "init"))?;
    let rep = phase1_coupling(&data, &cfg, &base, &land, &r_list, kappa, h)?;
    rep.write_csv(&dir.join("coupling.csv"))?;
    let summary = format!(
        "{}direction error decreasing: {}\nR/P scale gap decreasing: {}\ndistance/r decreasing: {}\n",
        rep.to_text(),
        rep.dir_err_decreasing(),
        rep.scale_gap_decreasing(),
        rep.distance_over_r_decreasing()
    );
    write_text(&dir.join("summary.txt"), &summary)?;
    print!("{summary}");
    Ok(finish_dir(&dir, &["coupling.csv", "summary.txt"]))
}

fn params_or_breve(s: &mut Settings, d: usize) -> Result<Params> {
    match s.path_opt("params") {
        Some(p) => load_params(&p).context("loading parameters"),
        None => Ok(theta_breve(d)?),
    }
}

/// Optional text report; the manifest sits beside it when present.
fn report(s: &mut Settings, text: &str) -> Result<Written> {
    print!("{text}");
    match s.path_opt("out") {
        Some(out) => {
            write_text(&out, text)?;
            Ok(finish_file(out))
        }
        None => Ok(Written {
            manifest: None,
            outputs: vec![],
        }),
    }
}

pub fn margin_cmd(s: &mut Settings) -> Result<Written> {
    let data = load(&s.path_required("data")?)?;
    let theta = params_or_breve(s, data.dim())?;
    let xi = s.get("xi", 0.0)?;
    let _ = s.path_opt("out");
    s.finish()?;
    let cfg = ActivationCfg::from_xi(data.dim(), xi)?;
    let rep = normalized_margin(&theta, &cfg, &data)?;
    let min = rep.margins[rep.argmin];
    let text = format!(
        "normalized margin γ = {:.12e}\nminimum f·y = {:.12e} at point {}\nall points classified correctly: {}\n",
        rep.gamma,
        min,
        rep.argmin,
        min > 0.0
    );
    report(s, &text)
}

pub fn probe_cmd(s: &mut Settings) -> Result<Written> {
    let data = load(&s.path_required("data")?)?;
    let theta = params_or_breve(s, data.dim())?;
    let xi = s.get("xi", 0.0)?;
    let samples = s.get("samples", 10_000usize)?;
    let radius = s.get("radius", 1e-3)?;
    let seed = s.get("seed", 1u64)?;
    let control: Option<usize> = s.get_opt("control")?;
    let _ = s.path_opt("out");
    s.finish()?;
    let cfg = ActivationCfg::from_xi(data.dim(), xi)?;
    let mc = stream_seed(seed, "mc");
    let rep = local_max_margin_probe(&theta, &cfg, &data, samples, radius, mc)?;
    let mut text = format!(
        "base γ = {:.12e}\nsamples {} at radius {:e}: {} improve γ, max gain {:.6e}\nlocal max-margin: {}\n",
        rep.base_gamma, rep.samples, rep.radius, rep.improved, rep.max_gain, rep.pass
    );
    if let Some(k) = control {
        let c = local_max_margin_probe(&unbalanced_control(&theta, k)?, &cfg, &data, samples, radius, mc)?;
        let _ = writeln!(
            text,
            "control (u_{k} doubled): base γ = {:.12e}, {} improve, max gain {:.6e}",
            c.base_gamma, c.improved, c.max_gain
        );
    }
    report(s, &text)
}

pub fn capture_cmd(s: &mut Settings) -> Result<Written> {
    let seed = s.get("seed", 1u64)?;
    let (data, gen_dx) = match s.path_opt("data") {
        Some(p) => (load(&p)?, None),
        None => {
            let spec = xor_spec(s, 3, 1, 0.01, 0.001, 0.001, seed)?;
            (gen_xor(&spec)?, Some(spec.delta + spec.xi))
        }
    };
    let xi = s.get("activation_xi", 0.001)?;
    let m_list: Vec<usize> = s.list("m_list", "1,2,4,8,16,32")?;
    let trials = s.get("trials", 2000usize)?;
    let n_starts = s.get("n_starts", 64usize)?;
    // δ + ξ enters only the bound; known exactly when the data was generated here
    let dx = match gen_dx {
        Some(v) if !s.has("delta_plus_xi") => v,
        _ => s.get("delta_plus_xi", 0.0)?,
    };
    let out = PathBuf::from(s.string("out", "capture.csv"));
    s.finish()?;
    let cfg = ActivationCfg::from_xi(data.dim(), xi)?;
    let land = find_extrema(&data, &cfg, n_starts, stream_seed(seed, "landscape"), simbias::gfield::DEFAULT_DEDUP_ANGLE)?;
    let rep = capture_probability_mc(&data, &cfg, &land, &m_list, trials, dx, stream_seed(seed, "mc"))?;
    rep.write_csv(&out)?;
    print!("{}", rep.to_text());
    Ok(finish_file(out))
}

pub fn validate_cmd(s: &mut Settings) -> Result<Written> {
    let data = load(&s.path_required("data")?)?;
    let xi = s.get("xi", 0.0)?;
    let delta0 = s.get("delta0", 0.0)?;
    let _ = s.path_opt("out");
    s.finish()?;
    let rep = validate_xor_assumptions(&data, xi, delta0)?;
    let line = |name: &str, c: &simbias::datasets::ClauseCheck| {
        format!(
            "{name:<12} {}  worst value {:.3e}{}\n",
            if c.pass { "pass" } else { "FAIL" },
            c.worst_value,
            c.worst_index.map_or(String::new(), |i| format!(" at point {i}"))
        )
    };
    let text = format!(
        "δ̂ = {:.6e}\n{}{}{}{}",
        rep.delta_hat,
        line("membership", &rep.membership),
        line("reflections", &rep.reflections),
        line("permutation", &rep.permutation),
        line("regularity", &rep.regularity)
    );
    let written = report(s, &text)?;
    if !rep.all_pass() {
        bail!("dataset violates the XOR assumptions");
    }
    Ok(written)
}
