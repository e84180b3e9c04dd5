//! Dispatch from a validated config to the experiment it names.

use conformal_core::dolgopyat::{
    cone_and_contraction_test, direction_data, domination_select, random_dominated_pair, vitali_cover, DolgopyatSetup,
};
use conformal_core::fourier::{decay_fit, decay_pipeline_report, fourier_mc, PipelineConfig};
use conformal_core::grid::DiscGrid;
use conformal_core::ifs::validate_ifs;
use conformal_core::measure::{default_depth, doubling_ratio, local_dimension_estimate, sample_batch, sample_coded};
use conformal_core::model::{build_model, collapse_suspected, cylinder_geometry, draw_omega, sample_mu_given};
use conformal_core::renewal::{lyapunov_chi, overshoot_law, walk_until, StopRule};
use conformal_core::transfer::{spectral_decay_experiment, SpectralConfig};
use conformal_core::uni::{inducing_search, nonconcentration_estimate, tn_check, uni_scan, words_up_to, InducingConfig};
use conformal_core::{ConformalIfs, Error, Model, ProbVector, TwistParams};
use serde_json::{json, Value};

use crate::config::{ConfigErrors, Experiment, ExperimentConfig, StopKind};
use crate::output::{line_chart, sha256_hex, Artifacts, Cell, Format, Table};

#[derive(Debug, thiserror::Error)]
pub enum RunError {
    #[error("config: {0}")]
    Config(#[from] ConfigErrors),
    #[error("{module}: {source}")]
    Module {
        module: &'static str,
        #[source]
        source: Error,
    },
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
}

/// Tables and findings of one run; findings are results the hypotheses
/// predicted would not occur.
#[derive(Clone, Debug, Default)]
pub struct Outcome {
    pub artifacts: Artifacts,
    pub findings: Vec<String>,
    pub summary: Value,
}

impl Outcome {
    pub fn exit_code(&self) -> i32 {
        if self.findings.is_empty() {
            0
        } else {
            2
        }
    }
}

fn module(name: &'static str) -> impl Fn(Error) -> RunError {
    move |source| RunError::Module { module: name, source }
}

pub const VERSION: &str = concat!("v", env!("CARGO_PKG_VERSION"));

/// Hash of the resolved config, the identity of a run together with the version.
pub fn config_hash(cfg: &ExperimentConfig) -> String {
    sha256_hex(cfg.to_toml().as_bytes())
}

/// Manifest header: everything but the file list.
pub fn manifest_header(cfg: &ExperimentConfig, outcome: &Outcome) -> Value {
    json!({
        "version": VERSION,
        "experiment": cfg.experiment.map(Experiment::name),
        "seed": cfg.seed,
        "config_hash": config_hash(cfg),
        "config": cfg.to_toml(),
        "exit_code": outcome.exit_code(),
        "findings": outcome.findings,
        "summary": outcome.summary,
    })
}

pub fn run_experiment(cfg: &ExperimentConfig, format: Format) -> Result<Outcome, RunError> {
    let experiment = cfg
        .experiment
        .ok_or_else(|| ConfigErrors(vec!["experiment: not given in the config or on the command line".into()]))?;
    let (ifs, p) = cfg.resolve_ifs()?;
    let mut out = Outcome::default();
    match experiment {
        Experiment::Validate => validate(cfg, &ifs, &mut out)?,
        Experiment::Sample => sample(cfg, &ifs, &p, format, &mut out)?,
        Experiment::Fourier => fourier(cfg, &ifs, &p, format, &mut out)?,
        Experiment::SpectralGap => spectral(cfg, &ifs, &p, format, &mut out)?,
        Experiment::Uni => uni(cfg, &ifs, &p, &mut out)?,
        Experiment::Model => {
            if let Some(m) = model_for(cfg, &ifs, &p, &mut out)? {
                model(cfg, &m, format, &mut out)?;
            }
        }
        Experiment::Dolgopyat => {
            if let Some(m) = model_for(cfg, &ifs, &p, &mut out)? {
                dolgopyat(cfg, &m, format, &mut out)?;
            }
        }
        Experiment::Renewal => renewal(cfg, &ifs, &p, format, &mut out)?,
        Experiment::Pipeline => pipeline(cfg, &ifs, &p, format, &mut out)?,
    }
    Ok(out)
}

fn validate(cfg: &ExperimentConfig, ifs: &ConformalIfs, out: &mut Outcome) -> Result<(), RunError> {
    let v = &cfg.validate;
    let rep = validate_ifs(ifs, v.boundary_samples, v.margin, v.distortion_depth).map_err(module("validate"))?;
    if !rep.is_valid() {
        out.findings.push(format!("standing hypotheses fail: {} violation(s)", rep.violations.len()));
    }
    out.summary = json!({ "valid": rep.is_valid(), "rho": rep.rho, "rho_min": rep.rho_min });
    out.artifacts.json("validation.json", &rep);
    Ok(())
}

fn sample(cfg: &ExperimentConfig, ifs: &ConformalIfs, p: &ProbVector, format: Format, out: &mut Outcome) -> Result<(), RunError> {
    let s = &cfg.sample;
    let depth = if s.depth == 0 { default_depth(ifs.rho, 1e-12) } else { s.depth };
    let em = sample_batch(ifs, p, s.count, depth, cfg.seed).map_err(module("measure"))?;
    let dim = local_dimension_estimate(&em, s.centers, &s.radii).map_err(module("measure"))?;
    let dbl = doubling_ratio(&em, s.centers, s.doubling_radius, s.doubling_factor).map_err(module("measure"))?;
    if s.dump {
        let mut t = Table::new(&["re", "im"]);
        for z in &em.points {
            t.push(vec![z.re.into(), z.im.into()]);
        }
        out.artifacts.table("samples", &t, format);
    }
    out.summary = json!({ "depth": depth, "count": em.len(), "local_dimension": dim, "doubling": dbl });
    out.artifacts.json("sample.json", &out.summary);
    Ok(())
}

fn fourier(cfg: &ExperimentConfig, ifs: &ConformalIfs, p: &ProbVector, format: Format, out: &mut Outcome) -> Result<(), RunError> {
    let f = &cfg.fourier;
    let em = sample_batch(ifs, p, f.count, f.depth, cfg.seed).map_err(module("fourier"))?;
    let mut scan = Table::new(&["direction_x", "direction_y", "q_abs", "re", "im", "stderr"]);
    let mut fits = Vec::new();
    let mut series = Vec::new();
    for (i, &d) in f.directions.iter().enumerate() {
        let n = d[0].hypot(d[1]);
        let dir = [d[0] / n, d[1] / n];
        let mut curve = Vec::new();
        for &r in &f.radii {
            let (est, se) = fourier_mc(&em, [r * dir[0], r * dir[1]]);
            scan.push(vec![dir[0].into(), dir[1].into(), r.into(), est.re.into(), est.im.into(), se.into()]);
            curve.push((r.ln(), est.norm().ln()));
        }
        series.push((format!("({:.3}, {:.3})", dir[0], dir[1]), curve));
        match decay_fit(&em, d, &f.radii, f.count, f.resamples, cfg.seed.wrapping_add(i as u64)) {
            Ok(s) => fits.push(json!({
                "direction": s.direction,
                "alpha_hat": s.alpha_hat,
                "ci_low": s.ci.0,
                "ci_high": s.ci.1,
                "radii_used": s.radii_used,
                "noise_floor": s.noise_floor,
            })),
            Err(Error::FitRefused(why)) => {
                out.findings.push(format!("decay fit refused along ({:.3}, {:.3}): {why}", dir[0], dir[1]));
                fits.push(json!({ "direction": dir, "refused": why }));
            }
            Err(e) => return Err(module("fourier")(e)),
        }
    }
    out.artifacts.table("decay_scan", &scan, format);
    out.summary = json!({ "fits": fits });
    out.artifacts.json("fit.json", &fits);
    if cfg.svg {
        out.artifacts.raw("decay.svg", line_chart("Fourier decay", "log |q|", "log |F(q)|", &series));
    }
    Ok(())
}

fn spectral(cfg: &ExperimentConfig, ifs: &ConformalIfs, p: &ProbVector, format: Format, out: &mut Outcome) -> Result<(), RunError> {
    let s = &cfg.spectral;
    let sc = SpectralConfig {
        a_list: s.a_list.clone(),
        b_list: s.b_list.clone(),
        ell_list: s.ell_list.clone(),
        n_max: s.n_max,
        h: s.h,
        probes: s.probes,
        strip: s.strip,
        frequency_threshold: s.frequency_threshold,
        seed: cfg.seed,
    };
    let table = spectral_decay_experiment(ifs, p, &sc).map_err(module("transfer"))?;
    let mut t = Table::new(&["a", "b", "ell", "n", "c1_norm"]);
    for r in &table.rows {
        t.push(vec![r.a.into(), r.b.into(), r.ell.into(), r.n.into(), r.c1_norm.into()]);
    }
    for fit in &table.fits {
        if !(fit.alpha_hat < s.decay_threshold) {
            out.findings.push(format!(
                "no decay at a={}, b={}, ell={}: alpha_hat = {:.6}",
                fit.a, fit.b, fit.ell, fit.alpha_hat
            ));
        }
    }
    out.artifacts.table("decay", &t, format);
    out.summary = json!({ "fits": table.fits, "gamma_hat": table.gamma_hat, "gamma_residual": table.gamma_residual });
    out.artifacts.json("fits.json", &out.summary);
    if cfg.svg {
        let series: Vec<(String, Vec<(f64, f64)>)> = table
            .fits
            .iter()
            .map(|f| {
                let pts = table
                    .rows
                    .iter()
                    .filter(|r| r.a == f.a && r.b == f.b && r.ell == f.ell)
                    .map(|r| (r.n as f64, r.c1_norm.ln()))
                    .collect();
                (format!("b={} ell={}", f.b, f.ell), pts)
            })
            .collect();
        out.artifacts.raw("decay.svg", line_chart("Transfer operator norms", "n", "log C1 norm", &series));
    }
    Ok(())
}

fn inducing_config(cfg: &ExperimentConfig) -> InducingConfig {
    let u = &cfg.uni;
    InducingConfig {
        n_min: u.n_min,
        n_max: u.n_max,
        grid_step: u.grid_step,
        map_cap: u.map_cap,
        pair_pool: u.pair_pool,
    }
}

fn uni(cfg: &ExperimentConfig, ifs: &ConformalIfs, p: &ProbVector, out: &mut Outcome) -> Result<(), RunError> {
    let u = &cfg.uni;
    let witness = uni_scan(ifs, u.n, u.grid_step, u.pair_budget).map_err(module("uni"))?;
    let tn = tn_check(ifs, &witness, u.tn_grid_step).map_err(module("uni"))?;
    let search = inducing_search(ifs, p, &inducing_config(cfg)).map_err(module("uni"))?;
    let em = sample_coded(ifs, p, u.nc_count, u.nc_depth, cfg.seed).map_err(module("uni"))?;
    let words = words_up_to(ifs.len(), u.nc_word_depth);
    let nc = nonconcentration_estimate(ifs, &em, &words, u.nc_directions).map_err(module("uni"))?;
    if witness.m_hat == 0.0 {
        out.findings.push("UNI fails: the best pair has a zero gradient somewhere on the grid".into());
    }
    if search.certificate.is_none() {
        out.findings.push("no inducing depth admits a certificate".into());
    }
    if let Some(c) = &search.certificate {
        out.artifacts.json("certificate.json", c);
    }
    out.summary = json!({ "witness": witness, "tn": tn, "inducing": search, "nonconcentration": nc });
    out.artifacts.json("uni.json", &out.summary);
    Ok(())
}

/// The model behind `model` and `dolgopyat`; a missing certificate is a finding.
fn model_for(cfg: &ExperimentConfig, ifs: &ConformalIfs, p: &ProbVector, out: &mut Outcome) -> Result<Option<Model>, RunError> {
    let search = inducing_search(ifs, p, &inducing_config(cfg)).map_err(module("uni"))?;
    match &search.certificate {
        Some(cert) => {
            out.artifacts.json("certificate.json", cert);
            Ok(Some(build_model(ifs, p, cert).map_err(module("model"))?))
        }
        None => {
            out.findings.push("no inducing depth admits a certificate, so no model exists".into());
            out.summary = json!({ "inducing": search });
            out.artifacts.json("inducing.json", &search);
            Ok(None)
        }
    }
}

fn model(cfg: &ExperimentConfig, m: &Model, format: Format, out: &mut Outcome) -> Result<(), RunError> {
    let s = &cfg.model;
    let omega = draw_omega(m, s.omega_len, cfg.seed, 0);
    let pairs: Vec<(usize, usize)> = s.depth_pairs.iter().map(|p| (p[0], p[1])).collect();
    let geo = cylinder_geometry(m, &omega, &pairs, s.trials, &s.radii, cfg.seed).map_err(module("model"))?;
    let mu = sample_mu_given(m, &omega, s.count, cfg.seed, false).map_err(module("model"))?;
    if collapse_suspected(&mu) {
        out.findings.push("samples of mu_omega collapse to a point".into());
    }
    let mut t = Table::new(&["outer_depth", "inner_depth", "ratio"]);
    for r in &geo.rows {
        t.push(vec![r.outer_depth.into(), r.inner_depth.into(), r.ratio.into()]);
    }
    out.artifacts.json("model.json", &m.record());
    out.artifacts.table("cylinders", &t, format);
    out.summary = json!({
        "omega": omega,
        "c_fit": geo.c_fit,
        "r1": geo.r1,
        "r2": geo.r2,
        "b1_hat": geo.b1_hat,
        "balls_tested": geo.balls_tested,
        "separation_violations": m.separation_violations().len(),
    });
    out.artifacts.json("geometry.json", &out.summary);
    Ok(())
}

fn dolgopyat(cfg: &ExperimentConfig, m: &Model, format: Format, out: &mut Outcome) -> Result<(), RunError> {
    let d = &cfg.dolgopyat;
    let dm = module("dolgopyat");
    let setup = DolgopyatSetup::solve(m, d.count, d.depth, cfg.seed, d.n_cap).map_err(&dm)?;
    let k = d.b.abs() + d.ell.unsigned_abs() as f64;
    let cover = vitali_cover(&setup.samples.points, setup.params.eps_tilde(k)).map_err(&dm)?;
    let check = cover.check(&setup.samples.points);
    let prefix = &setup.omega[..setup.n()];
    let omega_hash = sha256_hex(format!("{prefix:?}").as_bytes())[..16].to_string();
    let rep = cone_and_contraction_test(&setup, d.b, d.ell, &cover, d.trials, d.grid_h).map_err(&dm)?;
    let mut t = Table::new(&["omega_prefix_hash", "b", "ell", "trial", "cone_ok", "ratio"]);
    for r in &rep.rows {
        t.push(vec![omega_hash.clone().into(), d.b.into(), d.ell.into(), r.trial.into(), r.cone_ok.into(), r.ratio.into()]);
    }
    out.artifacts.table("contraction", &t, format);
    let mut dom = Table::new(&[
        "pair",
        "verified",
        "dense",
        "failures",
        "arg_violations",
        "worst_margin",
        "covers_100",
        "eps2_hat",
    ]);
    let mut verified = 0;
    let mut failures = Vec::new();
    if d.pairs > 0 {
        let dd = direction_data(&setup, d.b, d.ell, &cover, d.nc_factor, d.refine).map_err(&dm)?;
        let grid = DiscGrid::new(d.grid_h).map_err(&dm)?;
        let tp = TwistParams::new(0.0, d.b, d.ell);
        for i in 0..d.pairs {
            let (f, h) = random_dominated_pair(&grid, setup.params.a_cone * k, cfg.seed, i as u64).map_err(&dm)?;
            let o = domination_select(&setup, &tp, &f, &h, &cover, &dd).map_err(&dm)?;
            let ok = o.verified && o.dense;
            verified += ok as usize;
            if !ok {
                failures.push(json!({ "pair": i, "failures": o.failures }));
            }
            dom.push(vec![
                i.into(),
                o.verified.into(),
                o.dense.into(),
                o.failures.len().into(),
                o.arg_violations.into(),
                o.worst_margin.into(),
                o.covers_100.into(),
                o.eps2_hat.into(),
            ]);
        }
        out.artifacts.table("domination", &dom, format);
    }
    let dom_fraction = if d.pairs > 0 { verified as f64 / d.pairs as f64 } else { 1.0 };
    if rep.cone_ok_fraction < 0.99 {
        out.findings.push(format!("cone stability holds for only {:.1}% of trials", 100.0 * rep.cone_ok_fraction));
    }
    if !(rep.alpha_hat < 1.0) {
        out.findings.push(format!("no L2 contraction: alpha_hat = {}", rep.alpha_hat));
    }
    if dom_fraction < 0.95 {
        out.findings.push(format!("domination verified for only {:.1}% of pairs", 100.0 * dom_fraction));
    }
    out.summary = json!({
        "omega": setup.omega,
        "omega_prefix_hash": omega_hash,
        "constants": setup.constants,
        "params": setup.params,
        "alpha": setup.alpha,
        "eta": setup.eta,
        "centers": cover.len(),
        "cover": { "disjoint": check.disjoint, "covering": check.covering },
        "cone_ok_fraction": rep.cone_ok_fraction,
        "alpha_hat": rep.alpha_hat,
        "domination_fraction": dom_fraction,
        "domination_failures": failures,
    });
    out.artifacts.json("dolgopyat.json", &out.summary);
    Ok(())
}

fn renewal(cfg: &ExperimentConfig, ifs: &ConformalIfs, p: &ProbVector, format: Format, out: &mut Outcome) -> Result<(), RunError> {
    let r = &cfg.renewal;
    let rm = module("renewal");
    let (chi, chi_se) = lyapunov_chi(ifs, p, r.chi_walk_length, r.chi_trials, cfg.seed).map_err(&rm)?;
    let mut walks = Table::new(&["k", "trial", "tau", "overshoot", "angle"]);
    let mut laws = Vec::new();
    for &k in &r.k_list {
        let law = overshoot_law(ifs, p, k, r.trials, cfg.seed, r.unit).map_err(&rm)?;
        match r.stop {
            StopKind::Tau => {
                for i in 0..law.overshoots.len().min(r.dump_walks) {
                    walks.push(vec![k.into(), i.into(), law.taus[i].into(), law.overshoots[i].into(), law.angles[i].into()]);
                }
            }
            StopKind::Beta => {
                for i in 0..r.dump_walks.min(r.trials) {
                    let w = walk_until(ifs, p, k, cfg.seed, i as u64, StopRule::Beta { eps: r.eps }).map_err(&rm)?;
                    let m = w.beta.unwrap_or(w.tau);
                    walks.push(vec![
                        k.into(),
                        i.into(),
                        m.into(),
                        (w.s[m - 1] - k).into(),
                        r.unit.report(w.angles[m - 1]).into(),
                    ]);
                }
            }
        }
        laws.push(json!({ "k": k, "ks_overshoot": law.ks_overshoot, "ks_angle": law.ks_angle, "chi_hat": law.chi_hat }));
    }
    let last = laws.last().expect("k_list is nonempty");
    let floor = 0.05f64.max(5.0 / (r.trials as f64).sqrt());
    let (k, ks_o, ks_a) = (last["k"].as_f64().unwrap_or(0.0), last["ks_overshoot"].as_f64().unwrap_or(1.0), last["ks_angle"].as_f64().unwrap_or(1.0));
    if ks_o > floor {
        out.findings.push(format!("overshoot law at k = {k} is still {ks_o:.4} from its limit in KS distance"));
    }
    if ks_a > floor {
        out.findings.push(format!("stopping angle at k = {k} is {ks_a:.4} from uniform in KS distance"));
    }
    out.artifacts.table("walks", &walks, format);
    out.summary = json!({ "chi_hat": chi, "chi_stderr": chi_se, "laws": laws });
    out.artifacts.json("law.json", &out.summary);
    Ok(())
}

fn pipeline(cfg: &ExperimentConfig, ifs: &ConformalIfs, p: &ProbVector, format: Format, out: &mut Outcome) -> Result<(), RunError> {
    let s = &cfg.pipeline;
    let pc = PipelineConfig {
        samples: s.samples,
        depth: s.depth,
        walks: s.walks,
        words: s.words,
        grid: (s.grid[0], s.grid[1]),
        seed: cfg.seed,
    };
    let rep = decay_pipeline_report(ifs, p, &s.q_list, s.eps, &pc).map_err(module("fourier"))?;
    let mut t = Table::new(&[
        "q_abs",
        "k",
        "r",
        "beta",
        "linearization",
        "equidistribution",
        "oscillatory",
        "budget",
        "measured",
        "measured_stderr",
        "within_budget",
    ]);
    for r in &rep.rows {
        let row: Vec<Cell> = vec![
            r.q_abs.into(),
            r.k.into(),
            r.r.into(),
            r.beta.into(),
            r.linearization.into(),
            r.equidistribution.into(),
            r.oscillatory.into(),
            r.budget.into(),
            r.measured.into(),
            r.measured_stderr.into(),
            r.within_budget.into(),
        ];
        t.push(row);
        if !r.within_budget {
            out.findings.push(format!("|F(q)| exceeds the budget at |q| = {}", r.q_abs));
        }
    }
    if rep.on_a_line {
        out.findings.push("the attractor lies on a line: no decay along its normal".into());
    }
    out.artifacts.table("budget", &t, format);
    out.summary = json!({ "eps": rep.eps, "on_a_line": rep.on_a_line, "normal_modulus": rep.normal_modulus });
    out.artifacts.json("pipeline.json", &out.summary);
    Ok(())
}
