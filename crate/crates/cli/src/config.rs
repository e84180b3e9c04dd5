//! Experiment configuration: a TOML document with one table per experiment.
//!
//! ```toml
//! experiment = "fourier"        # optional when the subcommand names it
//! seed = 7
//! output_dir = "out"
//! p = [0.5, 0.5]                # defaults to the fixture weights or uniform
//!
//! [ifs]
//! fixture = "lebesgue-segment"  # or an explicit map list:
//! # maps = [{ kind = "affine", coefficients = [[0.0, 0.0], [0.5, 0.0]] }]
//!
//! [fourier]
//! radii = [0.5, 1.5, 3.5]
//! ```
//!
//! Affine coefficients are `[b, a]` for `a z + b`, polynomial coefficients go
//! by ascending power and moebius takes `[a, b, c, d]`. Every table accepts a
//! subset of its keys; missing keys take the defaults below.

use std::fmt;
use std::path::PathBuf;

use conformal_core::fixtures;
use conformal_core::renewal::CircleUnit;
use conformal_core::{ConformalIfs, MapSpec, ProbVector};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Experiment {
    Validate,
    Sample,
    Fourier,
    SpectralGap,
    Uni,
    Model,
    Dolgopyat,
    Renewal,
    Pipeline,
}

impl Experiment {
    pub fn name(self) -> &'static str {
        match self {
            Experiment::Validate => "validate",
            Experiment::Sample => "sample",
            Experiment::Fourier => "fourier",
            Experiment::SpectralGap => "spectral-gap",
            Experiment::Uni => "uni",
            Experiment::Model => "model",
            Experiment::Dolgopyat => "dolgopyat",
            Experiment::Renewal => "renewal",
            Experiment::Pipeline => "pipeline",
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct IfsBlock {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fixture: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub maps: Option<Vec<MapSpec>>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ValidateSection {
    pub boundary_samples: usize,
    pub margin: f64,
    pub distortion_depth: usize,
}

impl Default for ValidateSection {
    fn default() -> Self {
        ValidateSection {
            boundary_samples: 1024,
            margin: 0.0,
            distortion_depth: 2,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SampleSection {
    pub count: usize,
    /// 0 picks a depth from the contraction rate.
    pub depth: usize,
    pub centers: usize,
    pub radii: Vec<f64>,
    pub doubling_radius: f64,
    pub doubling_factor: f64,
    pub dump: bool,
}

impl Default for SampleSection {
    fn default() -> Self {
        SampleSection {
            count: 20_000,
            depth: 0,
            centers: 200,
            radii: vec![0.01, 0.02, 0.04, 0.08, 0.16],
            doubling_radius: 0.05,
            doubling_factor: 2.0,
            dump: true,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FourierSection {
    pub count: usize,
    pub depth: usize,
    pub directions: Vec<[f64; 2]>,
    pub radii: Vec<f64>,
    pub resamples: usize,
}

impl Default for FourierSection {
    fn default() -> Self {
        FourierSection {
            count: 100_000,
            depth: 40,
            directions: vec![[1.0, 0.0], [0.0, 1.0]],
            radii: vec![0.5, 1.5, 3.5, 7.5, 15.5, 31.5],
            resamples: 200,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SpectralSection {
    pub a_list: Vec<f64>,
    pub b_list: Vec<f64>,
    pub ell_list: Vec<i64>,
    pub n_max: usize,
    pub h: f64,
    pub probes: usize,
    pub strip: f64,
    pub frequency_threshold: f64,
    /// A fit with `α̂` at or above this counts as no decay.
    pub decay_threshold: f64,
}

impl Default for SpectralSection {
    fn default() -> Self {
        SpectralSection {
            a_list: vec![0.0],
            b_list: vec![50.0, 100.0, 200.0],
            ell_list: vec![0],
            n_max: 12,
            h: 0.01,
            probes: 4,
            strip: 0.05,
            frequency_threshold: 0.0,
            decay_threshold: 0.98,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct UniSection {
    pub n: usize,
    pub grid_step: f64,
    pub pair_budget: usize,
    pub tn_grid_step: f64,
    pub n_min: usize,
    pub n_max: usize,
    pub map_cap: usize,
    pub pair_pool: usize,
    pub nc_count: usize,
    pub nc_depth: usize,
    pub nc_word_depth: usize,
    pub nc_directions: usize,
}

impl Default for UniSection {
    fn default() -> Self {
        UniSection {
            n: 2,
            grid_step: 0.05,
            pair_budget: 4096,
            tn_grid_step: 0.02,
            n_min: 1,
            n_max: 4,
            map_cap: 256,
            pair_pool: 64,
            nc_count: 20_000,
            nc_depth: 20,
            nc_word_depth: 2,
            nc_directions: 64,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelSection {
    pub omega_len: usize,
    pub count: usize,
    pub depth_pairs: Vec<[usize; 2]>,
    pub trials: usize,
    pub radii: Vec<f64>,
}

impl Default for ModelSection {
    fn default() -> Self {
        ModelSection {
            omega_len: 8,
            count: 10_000,
            depth_pairs: vec![[1, 2], [1, 3], [2, 4], [2, 6]],
            trials: 16,
            radii: vec![0.2, 0.05],
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DolgopyatSection {
    pub count: usize,
    pub depth: usize,
    pub n_cap: usize,
    pub b: f64,
    pub ell: i64,
    pub trials: usize,
    pub pairs: usize,
    pub grid_h: f64,
    pub nc_factor: f64,
    pub refine: usize,
}

impl Default for DolgopyatSection {
    fn default() -> Self {
        DolgopyatSection {
            count: 200,
            depth: 16,
            n_cap: 12,
            b: 50.0,
            ell: 0,
            trials: 20,
            pairs: 10,
            grid_h: 0.1,
            nc_factor: 0.01,
            refine: 64,
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StopKind {
    #[default]
    Tau,
    Beta,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RenewalSection {
    pub k_list: Vec<f64>,
    pub trials: usize,
    pub unit: CircleUnit,
    pub stop: StopKind,
    pub eps: f64,
    /// Walks written to the dump per level.
    pub dump_walks: usize,
    pub chi_walk_length: usize,
    pub chi_trials: usize,
}

impl Default for RenewalSection {
    fn default() -> Self {
        RenewalSection {
            k_list: vec![5.0, 10.0, 20.0],
            trials: 100_000,
            unit: CircleUnit::Turns,
            stop: StopKind::Tau,
            eps: 0.1,
            dump_walks: 1000,
            chi_walk_length: 200,
            chi_trials: 2000,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineSection {
    pub q_list: Vec<f64>,
    pub eps: f64,
    pub samples: usize,
    pub depth: usize,
    pub walks: usize,
    pub words: usize,
    pub grid: [usize; 2],
}

impl Default for PipelineSection {
    fn default() -> Self {
        PipelineSection {
            q_list: vec![10.0, 30.0, 100.0],
            eps: 0.5,
            samples: 20_000,
            depth: 30,
            walks: 10_000,
            words: 32,
            grid: [12, 8],
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub experiment: Option<Experiment>,
    pub seed: u64,
    pub output_dir: PathBuf,
    /// Emit SVG line charts next to the tables.
    pub svg: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub p: Option<Vec<f64>>,
    pub ifs: IfsBlock,
    pub validate: ValidateSection,
    pub sample: SampleSection,
    pub fourier: FourierSection,
    pub spectral: SpectralSection,
    pub uni: UniSection,
    pub model: ModelSection,
    pub dolgopyat: DolgopyatSection,
    pub renewal: RenewalSection,
    pub pipeline: PipelineSection,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            experiment: None,
            seed: 0,
            output_dir: PathBuf::from("out"),
            svg: false,
            p: None,
            ifs: IfsBlock {
                fixture: Some("lebesgue-segment".into()),
                maps: None,
            },
            validate: Default::default(),
            sample: Default::default(),
            fourier: Default::default(),
            spectral: Default::default(),
            uni: Default::default(),
            model: Default::default(),
            dolgopyat: Default::default(),
            renewal: Default::default(),
            pipeline: Default::default(),
        }
    }
}

/// Every problem found in a config, in document order.
#[derive(Clone, Debug, PartialEq)]
pub struct ConfigErrors(pub Vec<String>);

impl fmt::Display for ConfigErrors {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (i, e) in self.0.iter().enumerate() {
            if i > 0 {
                writeln!(f)?;
            }
            write!(f, "{e}")?;
        }
        Ok(())
    }
}

impl std::error::Error for ConfigErrors {}

const TOP_KEYS: &[&str] = &[
    "experiment",
    "seed",
    "output_dir",
    "svg",
    "p",
    "ifs",
    "validate",
    "sample",
    "fourier",
    "spectral",
    "uni",
    "model",
    "dolgopyat",
    "renewal",
    "pipeline",
];

fn known_keys<T: Serialize + Default>() -> Vec<String> {
    match toml::Value::try_from(T::default()) {
        Ok(toml::Value::Table(t)) => t.keys().cloned().collect(),
        _ => Vec::new(),
    }
}

/// Deserialize one table, reporting every unknown key before the first type error.
fn section<T: Serialize + DeserializeOwned + Default>(name: &str, value: Option<toml::Value>, errors: &mut Vec<String>) -> T {
    let Some(value) = value else {
        return T::default();
    };
    let toml::Value::Table(mut table) = value else {
        errors.push(format!("{name}: expected a table"));
        return T::default();
    };
    let known = known_keys::<T>();
    let unknown: Vec<String> = table.keys().filter(|k| !known.contains(k)).cloned().collect();
    for k in unknown {
        errors.push(format!("{name}.{k}: unknown key"));
        table.remove(&k);
    }
    match toml::Value::Table(table).try_into::<T>() {
        Ok(v) => v,
        Err(e) => {
            errors.push(format!("{name}: {}", e.message().trim()));
            T::default()
        }
    }
}

fn scalar<T: DeserializeOwned>(name: &str, value: Option<toml::Value>, errors: &mut Vec<String>) -> Option<T> {
    let value = value?;
    match value.try_into::<T>() {
        Ok(v) => Some(v),
        Err(e) => {
            errors.push(format!("{name}: {}", e.message().trim()));
            None
        }
    }
}

pub fn parse_config(text: &str) -> Result<ExperimentConfig, ConfigErrors> {
    let mut table: toml::Table = text.parse().map_err(|e: toml::de::Error| ConfigErrors(vec![e.message().trim().to_string()]))?;
    let mut errors = Vec::new();
    for k in table.keys() {
        if !TOP_KEYS.contains(&k.as_str()) {
            errors.push(format!("{k}: unknown key"));
        }
    }
    let d = ExperimentConfig::default();
    let ifs = match table.remove("ifs") {
        None => d.ifs.clone(),
        Some(v) => match v.try_into::<IfsBlock>() {
            Ok(b) => b,
            Err(e) => {
                errors.push(format!("ifs: {}", e.message().trim()));
                d.ifs.clone()
            }
        },
    };
    let cfg = ExperimentConfig {
        experiment: scalar("experiment", table.remove("experiment"), &mut errors),
        seed: scalar("seed", table.remove("seed"), &mut errors).unwrap_or(d.seed),
        output_dir: scalar("output_dir", table.remove("output_dir"), &mut errors).unwrap_or(d.output_dir),
        svg: scalar("svg", table.remove("svg"), &mut errors).unwrap_or(d.svg),
        p: scalar("p", table.remove("p"), &mut errors),
        ifs,
        validate: section("validate", table.remove("validate"), &mut errors),
        sample: section("sample", table.remove("sample"), &mut errors),
        fourier: section("fourier", table.remove("fourier"), &mut errors),
        spectral: section("spectral", table.remove("spectral"), &mut errors),
        uni: section("uni", table.remove("uni"), &mut errors),
        model: section("model", table.remove("model"), &mut errors),
        dolgopyat: section("dolgopyat", table.remove("dolgopyat"), &mut errors),
        renewal: section("renewal", table.remove("renewal"), &mut errors),
        pipeline: section("pipeline", table.remove("pipeline"), &mut errors),
    };
    errors.extend(cfg.range_errors());
    if errors.is_empty() {
        Ok(cfg)
    } else {
        Err(ConfigErrors(errors))
    }
}

impl ExperimentConfig {
    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    /// Maps and weights, from the fixture or the explicit list.
    pub fn resolve_ifs(&self) -> Result<(ConformalIfs, ProbVector), ConfigErrors> {
        let (ifs, fixture_p) = match (&self.ifs.fixture, &self.ifs.maps) {
            (Some(name), None) => match fixtures::by_name(name) {
                Some(f) => (f.ifs, Some(f.p)),
                None => return Err(ConfigErrors(vec![format!("ifs.fixture: unknown fixture `{name}`")])),
            },
            (None, Some(maps)) => {
                let ifs = ConformalIfs::from_specs(maps).map_err(|e| ConfigErrors(vec![format!("ifs.maps: {e}")]))?;
                (ifs, None)
            }
            _ => return Err(ConfigErrors(vec!["ifs: give exactly one of `fixture` and `maps`".into()])),
        };
        let p = match (&self.p, fixture_p) {
            (Some(w), _) => ProbVector::new(w.clone()).map_err(|e| ConfigErrors(vec![format!("p: {e}")]))?,
            (None, Some(p)) => p,
            (None, None) => ProbVector::uniform(ifs.len()),
        };
        if p.len() != ifs.len() {
            return Err(ConfigErrors(vec![format!("p: {} weights for {} maps", p.len(), ifs.len())]));
        }
        Ok((ifs, p))
    }

    fn range_errors(&self) -> Vec<String> {
        let mut e = Vec::new();
        let mut need = |ok: bool, field: &str, msg: &str| {
            if !ok {
                e.push(format!("{field}: {msg}"));
            }
        };
        match (&self.ifs.fixture, &self.ifs.maps) {
            (Some(name), None) => need(fixtures::by_name(name).is_some(), "ifs.fixture", &format!("unknown fixture `{name}`")),
            (None, Some(maps)) => need(maps.len() >= 2, "ifs.maps", "need at least two maps"),
            _ => need(false, "ifs", "give exactly one of `fixture` and `maps`"),
        }
        if let Some(w) = &self.p {
            let sum: f64 = w.iter().sum();
            need(w.iter().all(|&x| x > 0.0 && x.is_finite()), "p", "weights must be positive");
            need((sum - 1.0).abs() <= 1e-9, "p", &format!("weights sum to {sum}, expected 1"));
            if let Some(maps) = &self.ifs.maps {
                need(w.len() == maps.len(), "p", &format!("{} weights for {} maps", w.len(), maps.len()));
            }
        }
        let v = &self.validate;
        need(v.boundary_samples >= 256, "validate.boundary_samples", "must be at least 256");
        need((0.0..1.0).contains(&v.margin), "validate.margin", "must lie in [0, 1)");
        let s = &self.sample;
        need(s.count > 0, "sample.count", "must be positive");
        need(s.radii.len() >= 3, "sample.radii", "need at least 3 radii");
        need(s.radii.iter().all(|&r| r > 0.0), "sample.radii", "radii must be positive");
        need(s.doubling_radius > 0.0, "sample.doubling_radius", "must be positive");
        need(s.doubling_factor >= 1.0, "sample.doubling_factor", "must be at least 1");
        let f = &self.fourier;
        need(f.count >= 500, "fourier.count", "must be at least 500");
        need(f.depth > 0, "fourier.depth", "must be positive");
        need(!f.directions.is_empty(), "fourier.directions", "need at least one direction");
        need(f.directions.iter().all(|d| d[0].hypot(d[1]) > 0.0), "fourier.directions", "directions must be nonzero");
        need(f.radii.len() >= 2, "fourier.radii", "need at least 2 radii");
        need(f.radii.iter().all(|&r| r > 0.0), "fourier.radii", "radii must be positive");
        let sp = &self.spectral;
        need(sp.n_max >= 2, "spectral.n_max", "must be at least 2");
        need(sp.h > 0.0 && sp.h <= 0.5, "spectral.h", "must lie in (0, 0.5]");
        need(sp.a_list.iter().all(|a| a.abs() <= sp.strip), "spectral.a_list", "|a| must not exceed spectral.strip");
        need(!sp.b_list.is_empty() && !sp.ell_list.is_empty(), "spectral.b_list", "b_list and ell_list must be nonempty");
        let u = &self.uni;
        need(u.n >= 1, "uni.n", "must be at least 1");
        need(u.grid_step > 0.0 && u.grid_step <= 0.5, "uni.grid_step", "must lie in (0, 0.5]");
        need(u.tn_grid_step > 0.0 && u.tn_grid_step <= 0.1, "uni.tn_grid_step", "must lie in (0, 0.1]");
        need(u.n_min >= 1 && u.n_min <= u.n_max, "uni.n_min", "need 1 <= n_min <= n_max");
        need(u.nc_directions >= 1, "uni.nc_directions", "must be positive");
        let m = &self.model;
        need(m.omega_len >= 1, "model.omega_len", "must be positive");
        need(
            m.depth_pairs.iter().all(|p| p[0] < p[1] && p[1] <= m.omega_len),
            "model.depth_pairs",
            "need outer < inner <= omega_len",
        );
        let dg = &self.dolgopyat;
        need(dg.count > 0 && dg.depth > 0, "dolgopyat.count", "count and depth must be positive");
        need(dg.b.abs() + dg.ell.unsigned_abs() as f64 > 0.0, "dolgopyat.b", "|b| + |ell| must be positive");
        need(dg.trials > 0, "dolgopyat.trials", "must be positive");
        need(dg.grid_h > 0.0 && dg.grid_h <= 0.5, "dolgopyat.grid_h", "must lie in (0, 0.5]");
        need(dg.nc_factor > 0.0 && dg.nc_factor <= 1.0, "dolgopyat.nc_factor", "must lie in (0, 1]");
        need(dg.refine > 0, "dolgopyat.refine", "must be positive");
        let r = &self.renewal;
        need(!r.k_list.is_empty() && r.k_list.iter().all(|&k| k > 0.0), "renewal.k_list", "levels must be positive");
        need(r.trials > 0, "renewal.trials", "must be positive");
        need(r.eps > 0.0, "renewal.eps", "must be positive");
        let pl = &self.pipeline;
        need(!pl.q_list.is_empty() && pl.q_list.iter().all(|&q| q > 1.0), "pipeline.q_list", "every |q| must exceed 1");
        need(pl.eps > 0.0, "pipeline.eps", "must be positive");
        need(pl.samples > 0 && pl.walks > 0 && pl.words > 0, "pipeline.samples", "samples, walks and words must be positive");
        need(pl.grid[0] > 0 && pl.grid[1] > 0, "pipeline.grid", "must be nonempty");
        e
    }
}
