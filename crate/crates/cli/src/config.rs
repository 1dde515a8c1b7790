//! Run configuration: strict TOML schema with units in every key name.
//!
//! Parsing never stops at the first problem; all violations are collected
//! and reported together.

use std::collections::BTreeSet;

use toml::{Table, Value};

use hostcap::inverter::{split_winding_leakage, InverterParams};
use hostcap::sim::{SimConfig, SimMode};
use hostcap::stability::default_margin_tol;
use hostcap::system::{GridParams, GridRatings, PlantGroup};

pub const DEFAULT_PROFILE: &str = include_str!("../profiles/default.toml");

#[derive(Debug, Clone, PartialEq)]
pub struct Transformer {
    pub uz_pct: f64,
    pub u_low: f64,
    pub s_winding: f64,
    pub include_in_margin: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GroupSpec {
    pub label: String,
    pub td: f64,
    pub count: u32,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Analysis {
    pub n_max: u32,
    pub margin_tol: f64,
    pub swept_label: Option<String>,
    pub margin_step: f64,
    pub margin_max: f64,
    pub locus_counts: (u32, u32),
    pub locus_top_k: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum Format {
    Json,
    Csv,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Output {
    pub directory: String,
    pub formats: BTreeSet<Format>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    /// Inverter defaults; each group overrides only the loop delay.
    pub inverter: InverterParams,
    pub transformer: Transformer,
    pub grid: GridParams,
    pub groups: Vec<GroupSpec>,
    pub analysis: Analysis,
    pub sim: SimConfig,
    pub output: Output,
    /// Canonical text of the effective configuration minus the output
    /// directory, used for hashing.
    pub canonical: String,
}

impl RunConfig {
    pub fn leakage(&self) -> hostcap::error::Result<f64> {
        let t = &self.transformer;
        split_winding_leakage(t.uz_pct, t.u_low, t.s_winding, self.inverter.omega0)
    }

    pub fn params_with_td(&self, td: f64) -> InverterParams {
        self.inverter.clone().with_td(td)
    }

    pub fn plant_groups(&self) -> hostcap::error::Result<Vec<PlantGroup>> {
        let lt = self.leakage()?;
        Ok(self
            .groups
            .iter()
            .map(|g| PlantGroup::new(g.label.clone(), self.params_with_td(g.td), lt, g.count))
            .collect())
    }

    /// Swept groups: the configured one, or every group in file order.
    pub fn swept_labels(&self) -> Vec<String> {
        match &self.analysis.swept_label {
            Some(l) => vec![l.clone()],
            None => self.groups.iter().map(|g| g.label.clone()).collect(),
        }
    }
}

/// Parse `text`, apply `overrides` (`dotted.key=value`), then validate.
pub fn parse_config(text: &str, overrides: &[String]) -> Result<RunConfig, Vec<String>> {
    let mut root: Table = text.parse().map_err(|e: toml::de::Error| vec![format!("TOML syntax: {}", e.message())])?;
    let mut errors = Vec::new();
    for o in overrides {
        if let Err(e) = apply_override(&mut root, o) {
            errors.push(e);
        }
    }
    if !errors.is_empty() {
        return Err(errors);
    }
    // where results are written does not change them
    let mut hashed = root.clone();
    if let Some(Value::Table(o)) = hashed.get_mut("output") {
        o.remove("directory");
    }
    let canonical = toml::to_string(&hashed).map_err(|e| vec![e.to_string()])?;
    let cfg = Reader::new(&mut errors).run_config(&root, canonical);
    match cfg {
        Some(c) if errors.is_empty() => Ok(c),
        _ => Err(errors),
    }
}

fn apply_override(root: &mut Table, spec: &str) -> Result<(), String> {
    let (path, raw) = spec.split_once('=').ok_or_else(|| format!("override `{spec}` is not key=value"))?;
    let path: Vec<&str> = path.trim().split('.').collect();
    if path.iter().any(|p| p.is_empty()) {
        return Err(format!("override `{spec}` has an empty key segment"));
    }
    let raw = raw.trim();
    let value = format!("v = {raw}")
        .parse::<Table>()
        .ok()
        .and_then(|mut t| t.remove("v"))
        .unwrap_or_else(|| Value::String(raw.to_string()));

    let mut node = Value::Table(std::mem::take(root));
    let res = set_path(&mut node, &path, value, spec);
    if let Value::Table(t) = node {
        *root = t;
    }
    res
}

fn set_path(node: &mut Value, path: &[&str], value: Value, spec: &str) -> Result<(), String> {
    let (head, rest) = (path[0], &path[1..]);
    let child = match node {
        Value::Table(t) => {
            if rest.is_empty() {
                t.insert(head.to_string(), value);
                return Ok(());
            }
            t.entry(head.to_string()).or_insert_with(|| Value::Table(Table::new()))
        }
        Value::Array(a) => {
            let i: usize = head.parse().map_err(|_| format!("override `{spec}`: `{head}` is not an array index"))?;
            let len = a.len();
            let slot = a.get_mut(i).ok_or_else(|| format!("override `{spec}`: index {i} out of range (len {len})"))?;
            if rest.is_empty() {
                *slot = value;
                return Ok(());
            }
            slot
        }
        _ => return Err(format!("override `{spec}`: `{head}` is not inside a table or array")),
    };
    set_path(child, rest, value, spec)
}

/// Key visitor that records every violation and the keys it consumed.
struct Reader<'e> {
    errors: &'e mut Vec<String>,
}

struct Section<'t> {
    name: String,
    table: Option<&'t Table>,
    seen: BTreeSet<&'static str>,
}

impl<'e> Reader<'e> {
    fn new(errors: &'e mut Vec<String>) -> Self {
        Self { errors }
    }

    fn err(&mut self, msg: String) {
        self.errors.push(msg);
    }

    fn section<'t>(&mut self, root: &'t Table, name: &str) -> Section<'t> {
        let table = match root.get(name) {
            Some(Value::Table(t)) => Some(t),
            Some(_) => {
                self.err(format!("{name}: expected a table"));
                None
            }
            None => {
                self.err(format!("missing required section [{name}]"));
                None
            }
        };
        Section { name: name.to_string(), table, seen: BTreeSet::new() }
    }

    fn raw<'t>(&mut self, s: &mut Section<'t>, key: &'static str, required: bool) -> Option<&'t Value> {
        s.seen.insert(key);
        let v = s.table?.get(key);
        if v.is_none() && required {
            self.err(format!("{}.{key}: missing required key", s.name));
        }
        v
    }

    fn number(&mut self, s: &mut Section<'_>, key: &'static str, required: bool) -> Option<f64> {
        match self.raw(s, key, required)? {
            Value::Float(x) => Some(*x),
            Value::Integer(i) => Some(*i as f64),
            _ => {
                self.err(format!("{}.{key}: expected a number", s.name));
                None
            }
        }
    }

    fn positive(&mut self, s: &mut Section<'_>, key: &'static str) -> Option<f64> {
        let x = self.number(s, key, true)?;
        if !(x > 0.0 && x.is_finite()) {
            self.err(format!("{}.{key}: must be positive, got {x}", s.name));
            return None;
        }
        Some(x)
    }

    fn non_negative(&mut self, s: &mut Section<'_>, key: &'static str) -> Option<f64> {
        let x = self.number(s, key, true)?;
        if !(x >= 0.0 && x.is_finite()) {
            self.err(format!("{}.{key}: must be non-negative, got {x}", s.name));
            return None;
        }
        Some(x)
    }

    fn count(&mut self, s: &mut Section<'_>, key: &'static str, min: u32) -> Option<u32> {
        match self.raw(s, key, true)? {
            Value::Integer(i) if *i >= min as i64 && *i <= u32::MAX as i64 => Some(*i as u32),
            Value::Integer(i) => {
                self.err(format!("{}.{key}: must be an integer >= {min}, got {i}", s.name));
                None
            }
            _ => {
                self.err(format!("{}.{key}: expected an integer", s.name));
                None
            }
        }
    }

    fn string(&mut self, s: &mut Section<'_>, key: &'static str, required: bool) -> Option<String> {
        match self.raw(s, key, required)? {
            Value::String(x) => Some(x.clone()),
            _ => {
                self.err(format!("{}.{key}: expected a string", s.name));
                None
            }
        }
    }

    fn boolean(&mut self, s: &mut Section<'_>, key: &'static str) -> Option<bool> {
        match self.raw(s, key, true)? {
            Value::Boolean(b) => Some(*b),
            _ => {
                self.err(format!("{}.{key}: expected true or false", s.name));
                None
            }
        }
    }

    /// Report keys the section did not consume. A key sharing its stem with
    /// a known key but carrying another unit suffix is a unit violation.
    fn finish(&mut self, s: Section<'_>) {
        let Some(t) = s.table else { return };
        for key in t.keys() {
            if s.seen.contains(key.as_str()) {
                continue;
            }
            let stem = |k: &str| k.split_once('_').map_or(k.to_string(), |(a, _)| a.to_string());
            match s.seen.iter().find(|known| stem(known) == stem(key) && known.contains('_')) {
                Some(known) => self.err(format!("{}.{key}: unit violation, expected `{known}`", s.name)),
                None => self.err(format!("{}.{key}: unknown key", s.name)),
            }
        }
    }

    fn run_config(&mut self, root: &Table, canonical: String) -> Option<RunConfig> {
        const SECTIONS: [&str; 7] = ["inverter", "transformer", "grid", "groups", "analysis", "sim", "output"];
        for key in root.keys() {
            if !SECTIONS.contains(&key.as_str()) {
                self.err(format!("{key}: unknown section"));
            }
        }
        let inverter = self.inverter(root);
        let transformer = self.transformer(root);
        let grid = self.grid(root);
        let groups = self.groups(root);
        let analysis = self.analysis(root, inverter.as_ref().map(|p| p.omega0), groups.as_deref());
        let sim = self.sim(root);
        let output = self.output(root);
        Some(RunConfig {
            inverter: inverter?,
            transformer: transformer?,
            grid: grid?,
            groups: groups?,
            analysis: analysis?,
            sim: sim?,
            output: output?,
            canonical,
        })
    }

    fn inverter(&mut self, root: &Table) -> Option<InverterParams> {
        let mut s = self.section(root, "inverter");
        let kp = self.positive(&mut s, "kp");
        let kr = self.non_negative(&mut s, "kr");
        let kd = self.non_negative(&mut s, "kd");
        let omega0 = self.positive(&mut s, "omega0_rad_s");
        let omega_i = self.positive(&mut s, "omega_i_rad_s");
        let vdc = self.positive(&mut s, "vdc_V");
        let l1 = self.positive(&mut s, "L1_uH");
        let l2 = self.positive(&mut s, "L2_uH");
        let cf = self.positive(&mut s, "Cf_uF");
        let ts = self.positive(&mut s, "Ts_us");
        let lambda = self.positive(&mut s, "lambda");
        let fsw = self.positive(&mut s, "fsw_kHz");
        if let Some(l) = lambda {
            if l > 1.0 {
                self.err(format!("inverter.lambda: must lie in (0, 1], got {l}"));
            }
        }
        self.finish(s);
        Some(InverterParams {
            kp: kp?,
            kr: kr?,
            kd: kd?,
            omega0: omega0?,
            omega_i: omega_i?,
            vdc: vdc?,
            l1: l1? * 1e-6,
            l2: l2? * 1e-6,
            cf: cf? * 1e-6,
            ts: ts? * 1e-6,
            td: None,
            lambda: lambda.filter(|l| *l <= 1.0)?,
            fsw: fsw? * 1e3,
        })
    }

    fn transformer(&mut self, root: &Table) -> Option<Transformer> {
        let mut s = self.section(root, "transformer");
        let uz_pct = self.positive(&mut s, "uz_pct");
        let u_low = self.positive(&mut s, "u_low_V");
        let s_winding = self.positive(&mut s, "s_winding_kVA");
        let include = self.boolean(&mut s, "include_in_margin");
        self.finish(s);
        Some(Transformer { uz_pct: uz_pct?, u_low: u_low?, s_winding: s_winding? * 1e3, include_in_margin: include? })
    }

    fn grid(&mut self, root: &Table) -> Option<GridParams> {
        let mut s = self.section(root, "grid");
        let mode = self.string(&mut s, "mode", true);
        let lg_scale = self.positive(&mut s, "lg_scale");
        let omega0 = match root.get("inverter").and_then(|v| v.get("omega0_rad_s")) {
            Some(Value::Float(x)) => *x,
            Some(Value::Integer(i)) => *i as f64,
            _ => 100.0 * std::f64::consts::PI,
        };
        let spec = match mode.as_deref() {
            Some("ratings") => {
                let r = GridRatings {
                    s_stepup: self.positive(&mut s, "s_stepup_MVA").unwrap_or(f64::NAN) * 1e6,
                    us_pct: self.positive(&mut s, "us_pct").unwrap_or(f64::NAN),
                    u_h: self.positive(&mut s, "u_high_kV").unwrap_or(f64::NAN) * 1e3,
                    u_l: self.positive(&mut s, "u_low_kV").unwrap_or(f64::NAN) * 1e3,
                    r_line: self.non_negative(&mut s, "r_line_ohm_per_km").unwrap_or(f64::NAN),
                    x_line: self.non_negative(&mut s, "x_line_ohm_per_km").unwrap_or(f64::NAN),
                    length_km: self.non_negative(&mut s, "length_km").unwrap_or(f64::NAN),
                    base_voltage: self.positive(&mut s, "base_voltage_V").unwrap_or(f64::NAN),
                    omega0,
                };
                let ok = [r.s_stepup, r.us_pct, r.u_h, r.u_l, r.r_line, r.x_line, r.length_km, r.base_voltage]
                    .iter()
                    .all(|x| !x.is_nan());
                ok.then(|| GridParams::ratings(r))
            }
            Some("direct") => {
                let rg = self.non_negative(&mut s, "Rg_ohm");
                let lg = self.positive(&mut s, "Lg_uH");
                Some(GridParams::direct(rg?, lg? * 1e-6))
            }
            Some(other) => {
                self.err(format!("grid.mode: expected \"ratings\" or \"direct\", got \"{other}\""));
                None
            }
            None => None,
        };
        self.finish(s);
        Some(spec?.with_lg_scale(lg_scale?))
    }

    fn groups(&mut self, root: &Table) -> Option<Vec<GroupSpec>> {
        let list = match root.get("groups") {
            Some(Value::Array(a)) => a,
            Some(_) => {
                self.err("groups: expected an array of tables ([[groups]])".into());
                return None;
            }
            None => {
                self.err("missing required section [[groups]]".into());
                return None;
            }
        };
        if list.is_empty() {
            self.err("groups: at least one group is required".into());
            return None;
        }
        let mut out = Vec::new();
        let mut labels = BTreeSet::new();
        let mut ok = true;
        for (i, v) in list.iter().enumerate() {
            let name = format!("groups.{i}");
            let Value::Table(t) = v else {
                self.err(format!("{name}: expected a table"));
                ok = false;
                continue;
            };
            let mut s = Section { name: name.clone(), table: Some(t), seen: BTreeSet::new() };
            let label = self.string(&mut s, "label", true);
            let td = self.non_negative(&mut s, "Td_us");
            let count = self.count(&mut s, "count", 1);
            self.finish(s);
            if let Some(l) = &label {
                if l.is_empty() {
                    self.err(format!("{name}.label: must not be empty"));
                } else if !labels.insert(l.clone()) {
                    self.err(format!("{name}.label: duplicate label \"{l}\""));
                }
            }
            match (label, td, count) {
                (Some(label), Some(td), Some(count)) => out.push(GroupSpec { label, td: td * 1e-6, count }),
                _ => ok = false,
            }
        }
        ok.then_some(out)
    }

    fn analysis(&mut self, root: &Table, omega0: Option<f64>, groups: Option<&[GroupSpec]>) -> Option<Analysis> {
        let mut s = self.section(root, "analysis");
        let n_max = self.count(&mut s, "n_max", 1);
        let tol = match self.number(&mut s, "margin_tol_rad_s", false) {
            Some(x) if x > 0.0 && x.is_finite() => Some(x),
            Some(x) => {
                self.err(format!("analysis.margin_tol_rad_s: must be positive, got {x}"));
                None
            }
            None => omega0.map(default_margin_tol),
        };
        let swept = self.string(&mut s, "swept_label", false);
        let step = self.positive(&mut s, "margin_step_us");
        let max = self.positive(&mut s, "margin_max_us");
        let lo = self.count(&mut s, "locus_count_min", 1);
        let hi = self.count(&mut s, "locus_count_max", 1);
        let top_k = self.count(&mut s, "locus_top_k", 1);
        self.finish(s);
        if let (Some(lo), Some(hi)) = (lo, hi) {
            if lo > hi {
                self.err(format!("analysis.locus_count_min: {lo} exceeds locus_count_max {hi}"));
            }
        }
        if let (Some(label), Some(groups)) = (&swept, groups) {
            if !groups.iter().any(|g| &g.label == label) {
                self.err(format!("analysis.swept_label: no group labelled \"{label}\""));
            }
        }
        Some(Analysis {
            n_max: n_max?,
            margin_tol: tol?,
            swept_label: swept,
            margin_step: step? * 1e-6,
            margin_max: max? * 1e-6,
            locus_counts: (lo?, hi?),
            locus_top_k: top_k? as usize,
        })
    }

    fn sim(&mut self, root: &Table) -> Option<SimConfig> {
        let mut s = self.section(root, "sim");
        let mode = match self.string(&mut s, "mode", true).as_deref() {
            Some("pade-linear") => Some(SimMode::PadeLinear),
            Some("sampled") => Some(SimMode::SampledData),
            Some(other) => {
                self.err(format!("sim.mode: expected \"pade-linear\" or \"sampled\", got \"{other}\""));
                None
            }
            None => None,
        };
        let duration = self.positive(&mut s, "duration_s");
        let substeps = self.count(&mut s, "substeps_per_ts", 1);
        let amp = self.non_negative(&mut s, "reference_A");
        let grid_rms = self.non_negative(&mut s, "grid_rms_V");
        let window = self.positive(&mut s, "divergence_window_s");
        let factor = self.positive(&mut s, "divergence_factor");
        self.finish(s);
        let cfg = SimConfig {
            mode: mode?,
            duration: duration?,
            substeps_per_ts: substeps?,
            reference_amplitude: amp?,
            grid_rms: grid_rms?,
            divergence_window: window?,
            divergence_factor: factor?,
        };
        if let Err(e) = cfg.validate() {
            self.err(format!("sim: {e}"));
            return None;
        }
        Some(cfg)
    }

    fn output(&mut self, root: &Table) -> Option<Output> {
        let mut s = self.section(root, "output");
        let directory = self.string(&mut s, "directory", true);
        let formats = match self.raw(&mut s, "formats", true) {
            Some(Value::Array(a)) => {
                let mut set = BTreeSet::new();
                for f in a {
                    match f.as_str() {
                        Some("json") => {
                            set.insert(Format::Json);
                        }
                        Some("csv") => {
                            set.insert(Format::Csv);
                        }
                        _ => self.err(format!("output.formats: expected \"json\" or \"csv\", got {f}")),
                    }
                }
                Some(set)
            }
            Some(_) => {
                self.err("output.formats: expected an array of strings".into());
                None
            }
            None => None,
        };
        self.finish(s);
        if directory.as_deref() == Some("") {
            self.err("output.directory: must not be empty".into());
            return None;
        }
        Some(Output { directory: directory?, formats: formats? })
    }
}
