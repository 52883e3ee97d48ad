//! Configuration files, parameter sweeps and CSV output.
//!
//! A run file is flat TOML. Scenario keys are the field names of
//! [`ScenarioConfig`]; optimizer keys and sweep keys are listed in
//! [`AO_KEYS`] and [`SWEEP_KEYS`]. Unknown keys are rejected.
//!
//! ```toml
//! p_t = 10.0
//! m = 8
//! sweep_param = "p_t"
//! sweep_grid = [5.0, 15.0, 25.0]
//! schemes = ["proposed", "transmit_only"]
//! cases = ["bs", "irs"]
//! n_draws = 5
//! ```

use crate::error::{Error, Result};
use crate::fim::SensingCase;
use crate::optimizer::{run_benchmark, AoOptions, AoStatus, Scheme};
use crate::scenario::{ChannelSet, ScenarioConfig};
use rayon::prelude::*;
use serde::Deserialize;
use std::collections::BTreeMap;
use std::fmt;
use std::io::Write;
use std::path::Path;
use std::str::FromStr;
use std::time::Instant;

/// Optimizer keys accepted in a run file.
pub const AO_KEYS: [&str; 8] = [
    "max_outer_iters",
    "max_sca_iters",
    "rel_tol",
    "n_randomizations",
    "transmit_first",
    "passive_zero_sigma_r",
    "sdp_tol",
    "sdp_max_iter",
];

/// Sweep keys accepted in a run file.
pub const SWEEP_KEYS: [&str; 6] = [
    "sweep_param",
    "sweep_grid",
    "a_max_grid",
    "schemes",
    "cases",
    "n_draws",
];

/// CSV header, in column order.
pub const CSV_COLUMNS: [&str; 13] = [
    "case",
    "scheme",
    "param",
    "value",
    "a_max",
    "draw",
    "status",
    "max_crb",
    "per_irs_crb",
    "outer_iterations",
    "sca_iterations",
    "passive_zero_sigma_r",
    "error",
];

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum SweepParam {
    Pt,
    Ps,
    M,
    AMax,
}

impl SweepParam {
    pub fn label(&self) -> &'static str {
        match self {
            SweepParam::Pt => "p_t",
            SweepParam::Ps => "p_s",
            SweepParam::M => "m",
            SweepParam::AMax => "a_max",
        }
    }

    /// Copy of `base` with the swept parameter set to `value`.
    pub fn apply(&self, base: &ScenarioConfig, value: f64) -> Result<ScenarioConfig> {
        let mut cfg = base.clone();
        match self {
            SweepParam::Pt => cfg.p_t = value,
            SweepParam::Ps => cfg.p_s = value,
            SweepParam::AMax => cfg.a_max = value,
            SweepParam::M => {
                if value < 1.0 || value.fract() != 0.0 {
                    return Err(Error::Config(format!(
                        "antenna count must be a positive integer, got {value}"
                    )));
                }
                cfg.m = value as usize;
            }
        }
        Ok(cfg)
    }
}

impl fmt::Display for SweepParam {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

impl FromStr for SweepParam {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "p_t" | "pt" => Ok(SweepParam::Pt),
            "p_s" | "ps" => Ok(SweepParam::Ps),
            "m" => Ok(SweepParam::M),
            "a_max" | "amax" => Ok(SweepParam::AMax),
            _ => Err(Error::Config(format!(
                "unknown sweep parameter '{s}' (expected p_t, p_s, m or a_max)"
            ))),
        }
    }
}

pub fn parse_case(s: &str) -> Result<SensingCase> {
    match s.to_ascii_lowercase().as_str() {
        "bs" | "at_bs" => Ok(SensingCase::AtBs),
        "irs" | "at_irs" => Ok(SensingCase::AtIrs),
        _ => Err(Error::Config(format!(
            "unknown sensing case '{s}' (expected bs or irs)"
        ))),
    }
}

#[derive(Debug, Clone)]
pub struct SweepSpec {
    pub param: SweepParam,
    pub grid: Vec<f64>,
    /// Optional second grid over `a_max`; empty keeps the base value.
    pub a_max_grid: Vec<f64>,
    pub base: ScenarioConfig,
    pub opts: AoOptions,
    pub schemes: Vec<Scheme>,
    pub cases: Vec<SensingCase>,
    pub n_draws: usize,
    pub seed: u64,
}

impl SweepSpec {
    /// Single-point spec over the base config.
    pub fn new(base: ScenarioConfig, opts: AoOptions) -> Self {
        SweepSpec {
            param: SweepParam::Pt,
            grid: vec![base.p_t],
            a_max_grid: Vec::new(),
            seed: base.seed,
            base,
            opts,
            schemes: Scheme::ALL.to_vec(),
            cases: vec![SensingCase::AtBs, SensingCase::AtIrs],
            n_draws: 1,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.grid.is_empty() {
            return Err(Error::Config("sweep grid is empty".into()));
        }
        for g in [&self.grid, &self.a_max_grid] {
            if g.windows(2).any(|w| w[0] >= w[1]) || g.iter().any(|v| !v.is_finite()) {
                return Err(Error::Config(
                    "sweep grids must be finite and strictly increasing".into(),
                ));
            }
        }
        if self.n_draws == 0 {
            return Err(Error::Config("n_draws must be at least 1".into()));
        }
        if self.schemes.is_empty() || self.cases.is_empty() {
            return Err(Error::Config("schemes and cases must be non-empty".into()));
        }
        for &v in &self.grid {
            for a in self.a_max_values() {
                let mut cfg = self.param.apply(&self.base, v)?;
                cfg.a_max = a;
                cfg.validate()?;
            }
        }
        self.opts.validate()
    }

    fn a_max_values(&self) -> Vec<f64> {
        if self.a_max_grid.is_empty() {
            vec![self.base.a_max]
        } else {
            self.a_max_grid.clone()
        }
    }

    /// Every `(case, scheme, grid index, a_max index, draw)` in output order.
    fn jobs(&self) -> Vec<(SensingCase, Scheme, usize, usize, usize)> {
        let mut out = Vec::new();
        for &case in &self.cases {
            for &scheme in &self.schemes {
                for gi in 0..self.grid.len() {
                    for ai in 0..self.a_max_values().len() {
                        for d in 0..self.n_draws {
                            out.push((case, scheme, gi, ai, d));
                        }
                    }
                }
            }
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepRow {
    pub case: SensingCase,
    pub scheme: Scheme,
    pub param: SweepParam,
    pub value: f64,
    pub a_max: f64,
    pub draw: usize,
    /// `Err` carries the failure message of this row.
    pub max_crb: std::result::Result<f64, String>,
    pub per_irs_crb: Vec<f64>,
    pub outer_iterations: usize,
    pub sca_iterations: usize,
    pub converged: bool,
    pub passive_zero_sigma_r: bool,
    pub wall_time_s: f64,
}

impl SweepRow {
    pub fn is_ok(&self) -> bool {
        self.max_crb.is_ok()
    }

    fn status(&self) -> &'static str {
        match (&self.max_crb, self.converged) {
            (Err(_), _) => "failed",
            (Ok(_), true) => "converged",
            (Ok(_), false) => "max_iter",
        }
    }

    /// CSV fields in [`CSV_COLUMNS`] order. Floats use the shortest
    /// representation that round-trips exactly.
    pub fn csv_record(&self) -> Vec<String> {
        let (crb, err) = match &self.max_crb {
            Ok(v) => (v.to_string(), String::new()),
            Err(e) => ("NaN".to_string(), e.clone()),
        };
        vec![
            self.case.label().to_string(),
            self.scheme.label().to_string(),
            self.param.label().to_string(),
            self.value.to_string(),
            self.a_max.to_string(),
            self.draw.to_string(),
            self.status().to_string(),
            crb,
            self.per_irs_crb
                .iter()
                .map(|v| v.to_string())
                .collect::<Vec<_>>()
                .join(";"),
            self.outer_iterations.to_string(),
            self.sca_iterations.to_string(),
            self.passive_zero_sigma_r.to_string(),
            err,
        ]
    }
}

/// Runs every job of `spec` on the rayon pool. Rows come back in job order;
/// a failing row is recorded and the sweep continues.
pub fn run_sweep(spec: &SweepSpec) -> Result<Vec<SweepRow>> {
    spec.validate()?;
    let a_values = spec.a_max_values();
    let jobs = spec.jobs();
    log::info!("sweep over {} with {} jobs", spec.param, jobs.len());
    let rows = jobs
        .par_iter()
        .map(|&(case, scheme, gi, ai, draw)| {
            let value = spec.grid[gi];
            let a_max = a_values[ai];
            let start = Instant::now();
            let outcome = (|| {
                let mut cfg = spec.param.apply(&spec.base, value)?;
                cfg.a_max = a_max;
                cfg.seed = spec.seed;
                let channel = ChannelSet::synthesize(&cfg, draw)?;
                let opts = AoOptions {
                    seed: spec.seed,
                    draw,
                    ..spec.opts.clone()
                };
                run_benchmark(scheme, case, &channel, &cfg, &opts)
            })();
            let wall = start.elapsed().as_secs_f64();
            let mut row = SweepRow {
                case,
                scheme,
                param: spec.param,
                value,
                a_max,
                draw,
                max_crb: Err(String::new()),
                per_irs_crb: Vec::new(),
                outer_iterations: 0,
                sca_iterations: 0,
                converged: false,
                passive_zero_sigma_r: spec.opts.passive_zero_sigma_r,
                wall_time_s: wall,
            };
            match outcome {
                Ok(trace) if !trace.final_max_crb().is_finite() => {
                    row.max_crb = Err("CRB unbounded: target parameters unobservable".into());
                }
                Ok(trace) => {
                    row.max_crb = Ok(trace.final_max_crb());
                    row.per_irs_crb = trace.per_irs_crb.clone();
                    row.outer_iterations = trace.outer_iterations();
                    row.sca_iterations = trace.sca_iterations;
                    row.converged = trace.status == AoStatus::Converged;
                }
                Err(e) => {
                    log::warn!(
                        "{} {scheme} {}={value} draw {draw}: {e}",
                        case.label(),
                        spec.param
                    );
                    row.max_crb = Err(e.to_string());
                }
            }
            log::debug!(
                "{} {scheme} {}={value} draw {draw} took {wall:.2}s",
                case.label(),
                spec.param
            );
            row
        })
        .collect();
    Ok(rows)
}

/// CSV text for `rows`: header line then one record per row.
pub fn csv_string(rows: &[SweepRow]) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    let io = |e: csv::Error| Error::Io(e.to_string());
    w.write_record(CSV_COLUMNS).map_err(io)?;
    for r in rows {
        w.write_record(r.csv_record()).map_err(io)?;
    }
    let bytes = w.into_inner().map_err(|e| Error::Io(e.to_string()))?;
    String::from_utf8(bytes).map_err(|e| Error::Io(e.to_string()))
}

/// Writes the CSV through a temporary file in the target directory, then
/// renames it into place.
pub fn write_csv(rows: &[SweepRow], path: &Path) -> Result<()> {
    let text = csv_string(rows)?;
    let dir = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p,
        _ => Path::new("."),
    };
    let io = |e: std::io::Error| Error::Io(format!("{}: {e}", path.display()));
    let mut tmp = tempfile::NamedTempFile::new_in(dir).map_err(io)?;
    tmp.write_all(text.as_bytes()).map_err(io)?;
    tmp.as_file().sync_all().map_err(io)?;
    tmp.persist(path).map_err(|e| io(e.error))?;
    Ok(())
}

/// Mean max-CRB per grid value for one `(case, scheme)`, over successful rows.
pub fn mean_by_value(rows: &[SweepRow], case: SensingCase, scheme: Scheme) -> Vec<(f64, f64)> {
    let mut acc: BTreeMap<u64, (f64, f64, usize)> = BTreeMap::new();
    for r in rows.iter().filter(|r| r.case == case && r.scheme == scheme) {
        if let Ok(v) = r.max_crb {
            let e = acc.entry(r.value.to_bits()).or_insert((r.value, 0.0, 0));
            e.1 += v;
            e.2 += 1;
        }
    }
    let mut out: Vec<(f64, f64)> = acc
        .into_values()
        .map(|(x, s, n)| (x, s / n as f64))
        .collect();
    out.sort_by(|a, b| a.0.total_cmp(&b.0));
    out
}

#[derive(Debug, Default, Deserialize)]
#[serde(default)]
struct AoFile {
    max_outer_iters: Option<usize>,
    max_sca_iters: Option<usize>,
    rel_tol: Option<f64>,
    n_randomizations: Option<usize>,
    transmit_first: Option<bool>,
    passive_zero_sigma_r: Option<bool>,
    sdp_tol: Option<f64>,
    sdp_max_iter: Option<usize>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(default)]
struct SweepFile {
    sweep_param: Option<String>,
    sweep_grid: Option<Vec<f64>>,
    a_max_grid: Option<Vec<f64>>,
    schemes: Option<Vec<String>>,
    cases: Option<Vec<String>>,
    n_draws: Option<usize>,
}

/// Everything a run file can set.
#[derive(Debug, Clone)]
pub struct RunFile {
    pub scenario: ScenarioConfig,
    pub opts: AoOptions,
    pub sweep: SweepSpec,
}

fn scenario_keys() -> Vec<String> {
    let mut full = ScenarioConfig::default();
    full.d_h = Some(0.0);
    full.d_v = Some(0.0);
    full.sensor_d_h = Some(0.0);
    full.sensor_d_v = Some(0.0);
    full.beta = Some(Vec::new());
    match toml::Value::try_from(&full) {
        Ok(toml::Value::Table(t)) => t.keys().cloned().collect(),
        _ => Vec::new(),
    }
}

/// Parses a run file. Every key must be a scenario, optimizer or sweep key.
pub fn parse_run_file(text: &str) -> Result<RunFile> {
    let table: toml::Table = text
        .parse()
        .map_err(|e: toml::de::Error| Error::Config(e.message().to_string()))?;
    let scen_keys = scenario_keys();
    let mut scen = toml::Table::new();
    let mut ao = toml::Table::new();
    let mut sw = toml::Table::new();
    for (k, v) in table {
        if scen_keys.contains(&k) {
            scen.insert(k, v);
        } else if AO_KEYS.contains(&k.as_str()) {
            ao.insert(k, v);
        } else if SWEEP_KEYS.contains(&k.as_str()) {
            sw.insert(k, v);
        } else {
            return Err(Error::Config(format!("unknown key '{k}'")));
        }
    }
    let bad = |e: toml::de::Error| Error::Config(e.message().to_string());
    let scenario: ScenarioConfig = scen.try_into().map_err(bad)?;
    let aof: AoFile = ao.try_into().map_err(bad)?;
    let swf: SweepFile = sw.try_into().map_err(bad)?;

    let d = AoOptions::default();
    let opts = AoOptions {
        max_outer_iters: aof.max_outer_iters.unwrap_or(d.max_outer_iters),
        max_sca_iters: aof.max_sca_iters.unwrap_or(d.max_sca_iters),
        rel_tol: aof.rel_tol.unwrap_or(d.rel_tol),
        n_randomizations: aof.n_randomizations.unwrap_or(d.n_randomizations),
        seed: scenario.seed,
        draw: 0,
        transmit_first: aof.transmit_first.unwrap_or(d.transmit_first),
        passive_zero_sigma_r: aof.passive_zero_sigma_r.unwrap_or(d.passive_zero_sigma_r),
        sdp_tol: aof.sdp_tol.unwrap_or(d.sdp_tol),
        sdp_max_iter: aof.sdp_max_iter.unwrap_or(d.sdp_max_iter),
    };
    let mut sweep = SweepSpec::new(scenario.clone(), opts.clone());
    if let Some(p) = swf.sweep_param {
        sweep.param = p.parse()?;
    }
    sweep.grid = match swf.sweep_grid {
        Some(g) => g,
        None => vec![current_value(sweep.param, &scenario)],
    };
    sweep.a_max_grid = swf.a_max_grid.unwrap_or_default();
    if let Some(s) = swf.schemes {
        sweep.schemes = s.iter().map(|x| x.parse()).collect::<Result<_>>()?;
    }
    if let Some(c) = swf.cases {
        sweep.cases = c.iter().map(|x| parse_case(x)).collect::<Result<_>>()?;
    }
    sweep.n_draws = swf.n_draws.unwrap_or(1);
    Ok(RunFile {
        scenario,
        opts,
        sweep,
    })
}

fn current_value(p: SweepParam, cfg: &ScenarioConfig) -> f64 {
    match p {
        SweepParam::Pt => cfg.p_t,
        SweepParam::Ps => cfg.p_s,
        SweepParam::M => cfg.m as f64,
        SweepParam::AMax => cfg.a_max,
    }
}

pub fn load_run_file(path: &Path) -> Result<RunFile> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
    parse_run_file(&text).map_err(|e| match e {
        Error::Config(m) => Error::Config(format!("{}: {m}", path.display())),
        other => other,
    })
}

impl RunFile {
    /// Overrides the seed everywhere it is used.
    pub fn set_seed(&mut self, seed: u64) {
        self.scenario.seed = seed;
        self.opts.seed = seed;
        self.sweep.base.seed = seed;
        self.sweep.opts.seed = seed;
        self.sweep.seed = seed;
    }
}
