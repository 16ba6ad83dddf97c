use anyhow::{bail, Context, Result};
use mkdv_core::flow::{
    cauchy_gap, central_difference, conservation_report, default_dt, default_fd_step, e_star_analytic, e_star_finite_difference, evolve,
    trajectory, FlowParams,
};
use mkdv_core::measures::{
    almost_invariance, map_indexed, mode_std, norm_statistics, sample_gaussians, sample_mu, GaussianSamplerSpec, InvarianceSetup, McEstimate,
};
use mkdv_core::pairing::{
    annal_bound, count_family, decay_fit, estar_l2_decay, pathwise_sum, wick_second_moment, CoefficientKind, FamilyTag, WICK_MAX_N,
};
use mkdv_core::{Complex64, SpectralField};
use serde_json::{json, Value};

use crate::config::{Radius, RunConfig};
use crate::output::{num, Outputs};

/// Config plus the seed every random stream of the run derives from.
pub struct Ctx<'a> {
    pub cfg: &'a RunConfig,
    pub seed: u64,
}

pub fn sample(ctx: &Ctx, out: &mut Outputs) -> Result<Value> {
    let cfg = ctx.cfg;
    let k = cfg.k.context("sample needs \"K\"")?;
    let count = cfg.n_samples.max(1);
    let spec = GaussianSamplerSpec::new(cfg.n, k, ctx.seed, "sampler");
    let fields: Vec<SpectralField> = map_indexed(count, |i| sample_mu(&spec.for_sample(i as u64)));

    let keep = cfg.max_states.unwrap_or(10).min(count);
    for (i, u) in fields.iter().take(keep).enumerate() {
        out.json(&format!("state_{i:05}.json"), u)?;
    }

    let mut rows = Vec::new();
    let mut worst_z = 0.0f64;
    for j in -(k as i64)..=k as i64 {
        let vals: Vec<f64> = fields.iter().map(|u| u.coeff(j).norm_sqr()).collect();
        let est = McEstimate::from_values(&vals, ctx.seed);
        let expected = mode_std(j, cfg.n).powi(2);
        let z = if count > 1 { est.z_score(expected) } else { f64::NAN };
        if z.is_finite() {
            worst_z = worst_z.max(z);
        }
        rows.push(format!("{j},{},{},{},{}", num(est.mean), num(est.stderr), num(expected), num(z)));
    }
    out.csv("spectrum.csv", "j,mean_abs2,stderr,expected,z", &rows)?;

    let l2: Vec<f64> = fields.iter().map(SpectralField::l2_norm_sq).collect();
    let est = McEstimate::from_values(&l2, ctx.seed);
    // ‖u‖² = 2π Σ|û_j|², so the mean is Σ 1/(1+j^{2n}).
    let expected: f64 = (-(k as i64)..=k as i64).map(|j| 2.0 * std::f64::consts::PI * mode_std(j, cfg.n).powi(2)).sum();
    Ok(json!({
        "samples": count,
        "l2_sq_mean": est.mean,
        "l2_sq_stderr": est.stderr,
        "l2_sq_expected": expected,
        "spectrum_max_z": worst_z,
    }))
}

/// Initial datum selected by `data` (default: one sample of `μ_n`).
fn initial_datum(cfg: &RunConfig, k: usize, seed: u64, stream: &str) -> Result<SpectralField> {
    match cfg.data.as_deref().unwrap_or("random") {
        "random" => Ok(sample_mu(&GaussianSamplerSpec::new(cfg.n, k, seed, stream))),
        "plane_wave" => {
            let a = cfg.amplitude.unwrap_or([1.0, 0.0]);
            Ok(SpectralField::plane_wave(k, cfg.wave_k.unwrap_or(1), Complex64::new(a[0], a[1]))?)
        }
        "state" => {
            let path = cfg.state.as_ref().context("data = \"state\" needs \"state\"")?;
            let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
            let u = SpectralField::from_json(&text)?;
            Ok(u.with_cutoff(k.max(u.cutoff())))
        }
        other => bail!("unknown data {other:?}; expected random, plane_wave or state"),
    }
}

fn plane_wave_exact(cfg: &RunConfig, k: usize, t: f64) -> Option<SpectralField> {
    if cfg.data.as_deref() != Some("plane_wave") {
        return None;
    }
    let a = cfg.amplitude.unwrap_or([1.0, 0.0]);
    let a = Complex64::new(a[0], a[1]);
    let kw = cfg.wave_k.unwrap_or(1) as f64;
    let phase = (kw.powi(3) + 6.0 * a.norm_sqr() * kw) * t;
    SpectralField::plane_wave(k, cfg.wave_k.unwrap_or(1), a * Complex64::from_polar(1.0, phase)).ok()
}

pub fn evolve_cmd(ctx: &Ctx, out: &mut Outputs) -> Result<Value> {
    let cfg = ctx.cfg;
    let n = *cfg.ladder_or_fail()?.first().unwrap();
    let k = cfg.k.unwrap_or(3 * n + 1);
    let u0 = initial_datum(cfg, k, ctx.seed, "evolve")?;
    let dt = cfg.dt.unwrap_or_else(|| default_dt(&u0, n));
    let p = FlowParams::new(n, u0.cutoff(), dt)?;
    let intervals = cfg.intervals.unwrap_or(100);
    let traj = trajectory(&u0, cfg.t, intervals, &p, &cfg.s)?;

    out.csv("trajectory.csv", &traj.csv_header(), &traj.csv_rows())?;
    out.json("state_initial.json", &u0)?;
    let last = traj.snapshots.last().context("empty trajectory")?;
    out.json("state_final.json", last)?;

    let report = conservation_report(&traj);
    let mut summary = json!({
        "N": n,
        "K": u0.cutoff(),
        "dt": dt,
        "alias_safe": p.alias_safe(),
        "samples": traj.len(),
        "conservation": report,
        "blow_up": traj.blow_up.map(|t| json!({ "at": t, "last_good_time": traj.times.last() })),
    });
    if let Some(ex) = plane_wave_exact(cfg, u0.cutoff(), *traj.times.last().unwrap()) {
        summary["plane_wave_error"] = json!(distance(last, &ex));
    }
    if cfg.refine.unwrap_or(false) && traj.blow_up.is_none() {
        let at = |h: f64| evolve(&u0, cfg.t, &FlowParams { dt: h, ..p });
        let (a, b, c) = (at(dt)?, at(dt / 2.0)?, at(dt / 4.0)?);
        let (d1, d2) = (distance(&a, &b), distance(&b, &c));
        summary["refinement"] = json!({ "diff_dt": d1, "diff_dt_half": d2, "ratio": d1 / d2 });
    }
    Ok(summary)
}

fn distance(a: &SpectralField, b: &SpectralField) -> f64 {
    let k = a.cutoff().max(b.cutoff());
    let d = SpectralField::from_fn(k, |j| a.coeff(j) - b.coeff(j));
    d.l2_norm()
}

pub fn estar(ctx: &Ctx, out: &mut Outputs) -> Result<Value> {
    let cfg = ctx.cfg;
    let ladder = cfg.ladder_or_fail()?.to_vec();
    let k = cfg.ambient(cfg.max_ladder())?;
    let count = cfg.n_samples.max(1);
    let spec = GaussianSamplerSpec::new(cfg.n, k, ctx.seed, "estar");
    let rows: Vec<Result<Vec<(String, f64, f64)>>> = map_indexed(count, |i| {
        let u = initial_datum_or_sample(cfg, &spec, i)?;
        let h = cfg.h.unwrap_or_else(|| default_fd_step(&u));
        let mut lines = Vec::new();
        for &n in &ladder {
            for j in [3usize, 5] {
                let analytic = e_star_analytic(&u, j, n)?;
                let fd = e_star_finite_difference(&u, j, n, h)?;
                let e1 = (central_difference(&u, j, n, h)? - analytic).abs();
                let e2 = (central_difference(&u, j, n, h / 2.0)? - analytic).abs();
                let ratio = if fd != 0.0 { analytic / fd } else { f64::NAN };
                let diff = (analytic - fd).abs();
                lines.push((
                    format!(
                        "{i},{n},{j},{},{},{},{},{},{},{},{}",
                        num(analytic),
                        num(fd),
                        num(diff),
                        num(ratio),
                        num(h),
                        num(e1),
                        num(e2),
                        num(e1 / e2)
                    ),
                    diff / (1.0 + analytic.abs()),
                    e1 / e2,
                ));
            }
        }
        Ok(lines)
    });
    let mut csv = Vec::new();
    let mut worst = 0.0f64;
    let mut shrink = Vec::new();
    for r in rows {
        for (line, rel, s) in r? {
            csv.push(line);
            worst = worst.max(rel);
            if s.is_finite() {
                shrink.push(s);
            }
        }
    }
    out.csv("estar.csv", "sample,N,j,analytic,fd,abs_diff,ratio,h,cd_err_h,cd_err_h2,cd_shrink", &csv)?;
    shrink.sort_by(f64::total_cmp);
    Ok(json!({
        "rows": csv.len(),
        "max_rel_diff": worst,
        "median_cd_shrink": shrink.get(shrink.len() / 2),
    }))
}

/// `estar` uses the configured datum when `data` is given, else sample `i`.
fn initial_datum_or_sample(cfg: &RunConfig, spec: &GaussianSamplerSpec, i: usize) -> Result<SpectralField> {
    match cfg.data.as_deref() {
        None | Some("random") => Ok(sample_mu(&spec.for_sample(i as u64))),
        Some(_) => initial_datum(cfg, spec.cutoff_k, spec.seed, "estar"),
    }
}

fn default_families() -> Vec<FamilyTag> {
    let mut v = vec![FamilyTag::I0];
    v.extend(FamilyTag::all_pairs());
    for (p, m) in [(6, 2), (6, 3)] {
        v.extend(FamilyTag::tilde(p, m));
        v.extend(FamilyTag::hat(p, m));
    }
    v
}

pub fn decay(ctx: &Ctx, out: &mut Outputs) -> Result<Value> {
    let cfg = ctx.cfg;
    let ladder = cfg.ladder_or_fail()?.to_vec();
    let families = match &cfg.families {
        Some(names) => names
            .iter()
            .map(|s| s.parse::<FamilyTag>().map_err(|e| anyhow::anyhow!("{s}: {e}")))
            .collect::<Result<Vec<_>>>()?,
        None => default_families(),
    };
    let kinds = match &cfg.kinds {
        Some(names) => names
            .iter()
            .map(|s| s.parse::<CoefficientKind>().map_err(|e| anyhow::anyhow!("{s}: {e}")))
            .collect::<Result<Vec<_>>>()?,
        None => vec![CoefficientKind::A, CoefficientKind::B],
    };

    let mut rows = Vec::new();
    let mut fits = Vec::new();
    let mut fit_json = Vec::new();
    let mut tilde_im = 0.0f64;
    for &f in &families {
        for &kind in &kinds {
            let mut pts = Vec::new();
            for &n in &ladder {
                let count = count_family(n, f);
                let bound = annal_bound(n, f, kind);
                let wick = if n <= WICK_MAX_N {
                    num(wick_second_moment(n, f, kind)?)
                } else {
                    "MC".to_string()
                };
                let (mc, im) = mc_second_moment(n, f, kind, ctx.seed, cfg.n_samples)?;
                if matches!(f, FamilyTag::TildeI(..)) {
                    tilde_im = tilde_im.max(im);
                }
                let (mean, se) = mc.map(|e| (num(e.mean), num(e.stderr))).unwrap_or_default();
                rows.push(format!("{n},\"{f}\",{kind},{count},{},{wick},{mean},{se},{}", num(bound), num(im)));
                pts.push((n as f64, bound));
            }
            let (status, slope, se) = if pts.iter().all(|p| p.1 == 0.0) {
                ("empty", f64::NAN, f64::NAN)
            } else {
                match decay_fit(&pts) {
                    Ok((a, b)) => ("fit", a, b),
                    Err(_) => ("unavailable", f64::NAN, f64::NAN),
                }
            };
            fits.push(format!("\"{f}\",{kind},{status},{},{}", num(slope), num(se)));
            fit_json.push(json!({ "family": f.to_string(), "kind": kind.to_string(), "status": status, "slope": slope, "stderr": se }));
        }
    }
    out.csv("decay.csv", "N,family,kind,members,bound,wick,mc_mean,mc_stderr,im_max_rel", &rows)?;
    out.csv("decay_fit.csv", "family,kind,status,slope,stderr", &fits)?;

    let mut summary = json!({ "fits": fit_json, "tilde_im_max_rel": tilde_im });
    if cfg.estar.unwrap_or(false) {
        let k = cfg.ambient(cfg.max_ladder())?;
        let spec = GaussianSamplerSpec::new(2, k, ctx.seed, "estar-l2");
        let samples = cfg.n_samples.max(2);
        let mut lines = Vec::new();
        let mut slopes = Vec::new();
        for j in [3usize, 5] {
            let est = estar_l2_decay(j, &ladder, cfg.r, &spec, samples)?;
            for (n, e) in &est {
                lines.push(format!("{n},{j},{},{}", num(e.mean), num(e.stderr)));
            }
            let pts: Vec<(f64, f64)> = est.iter().map(|(n, e)| (*n as f64, e.mean)).collect();
            slopes.push(json!({ "j": j, "slope": decay_fit(&pts).ok().map(|p| p.0) }));
        }
        out.csv("estar_decay.csv", "N,j,mean_sq,stderr", &lines)?;
        summary["estar_slopes"] = json!(slopes);
    }
    Ok(summary)
}

/// `E|S|²` over `draws` Gaussian draws and the largest `|Im S| / scale`.
fn mc_second_moment(n: usize, f: FamilyTag, kind: CoefficientKind, seed: u64, draws: usize) -> Result<(Option<McEstimate>, f64)> {
    if draws == 0 {
        return Ok((None, f64::NAN));
    }
    let spec = GaussianSamplerSpec::new(0, n, seed, "mc");
    let sums = map_indexed(draws, |i| pathwise_sum(n, f, kind, &sample_gaussians(&spec.for_sample(i as u64))));
    let mut vals = Vec::with_capacity(draws);
    let mut im = 0.0f64;
    for s in sums {
        let s = s?;
        vals.push(s.value.norm_sqr());
        if s.scale > 0.0 {
            im = im.max(s.value.im.abs() / s.scale);
        }
    }
    let est = (draws >= 2).then(|| McEstimate::from_values(&vals, seed));
    Ok((est, im))
}

pub fn invariance(ctx: &Ctx, out: &mut Outputs) -> Result<Value> {
    let cfg = ctx.cfg;
    let ladder = cfg.ladder_or_fail()?.to_vec();
    let k = cfg.ambient(cfg.max_ladder())?;
    let s = cfg.first_s(1.4);
    let samples = cfg.n_samples;
    let spec = GaussianSamplerSpec::new(cfg.n, k, ctx.seed, "invariance");
    let radius = match &cfg.radius {
        None => norm_statistics(&spec.with_stream("radius"), s, samples).0,
        Some(Radius::Value(r)) => *r,
        Some(Radius::Named(name)) => match name.as_str() {
            "median" => norm_statistics(&spec.with_stream("radius"), s, samples).0,
            "inf" => f64::INFINITY,
            other => bail!("radius must be a number, \"median\" or \"inf\", got {other:?}"),
        },
    };
    let setup = InvarianceSetup {
        radius,
        s,
        t: cfg.t,
        n: cfg.n,
        r: cfg.r,
        ladder,
        dt: cfg.dt,
    };
    let rows = almost_invariance(&setup, &spec, samples)?;
    let csv: Vec<String> = rows
        .iter()
        .map(|r| format!("{},{},{},{}", r.cutoff_n, num(r.defect.mean), num(r.defect.stderr), r.defect.n_flagged))
        .collect();
    out.csv("invariance.csv", "N,defect,stderr,flagged", &csv)?;

    let monotone = rows.windows(2).all(|w| {
        let (a, b) = (w[0].defect, w[1].defect);
        let tol = 2.0 * (a.stderr.powi(2) + b.stderr.powi(2)).sqrt();
        b.mean.abs() <= a.mean.abs() + if tol.is_finite() { tol } else { 0.0 }
    });
    let last = rows.last().unwrap().defect;
    Ok(json!({
        "radius": if radius.is_finite() { json!(radius) } else { json!("inf") },
        "rows": rows,
        "nonincreasing_within_errors": monotone,
        "last_within_2se": last.mean == 0.0 || last.mean.abs() <= 2.0 * last.stderr,
    }))
}

pub fn converge(ctx: &Ctx, out: &mut Outputs) -> Result<Value> {
    let cfg = ctx.cfg;
    let ladder = cfg.ladder_or_fail()?.to_vec();
    let factor = cfg.m_factor.unwrap_or(2);
    if factor == 0 {
        bail!("m_factor must be at least 1");
    }
    let top = cfg.max_ladder().unwrap() * factor;
    let k = cfg.ambient(Some(top))?;
    let s = cfg.first_s(1.5);
    let mut u = initial_datum(cfg, k, ctx.seed, "cauchy")?;
    if cfg.data.as_deref().unwrap_or("random") == "random" {
        // Fix the H^s size so runs at different levels are comparable.
        u = u.scale_real(1.0 / u.sobolev_norm(s));
    }
    let p = match cfg.dt {
        Some(dt) => FlowParams::new(top, u.cutoff(), dt)?,
        None => FlowParams::for_field(&u, top)?,
    };
    let samples = cfg.intervals.unwrap_or(20);
    let mut pts = Vec::new();
    let mut csv = Vec::new();
    for &n in &ladder {
        let m = factor * n;
        let gap = cauchy_gap(&u, n, m, cfg.t, samples, &p)?;
        csv.push(format!("{n},{m},{}", num(gap)));
        pts.push((n as f64, gap));
    }
    out.csv("converge.csv", "N,M,gap", &csv)?;
    let fit = decay_fit(&pts).ok();
    Ok(json!({
        "dt": p.dt,
        "gaps": pts.iter().map(|p| p.1).collect::<Vec<_>>(),
        "slope": fit.map(|f| f.0),
        "slope_stderr": fit.map(|f| f.1),
    }))
}
