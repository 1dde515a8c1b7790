use serde_json::{json, Value};

use hostcap::inverter::{delay_margin, DelayMargin};
use hostcap::sim::{build_statespace, detect_stability, run_linear, run_sampled, SimMode, SimPlant, SimUnit, SimVerdict};
use hostcap::stability::{delay_sweep, evaluate, find_ranges, locus_trace, StabilityRange};
use hostcap::system::{compose, grid_impedance, PlantGroup, SystemModel};

use crate::config::{Format, RunConfig};
use crate::emit::{fmt_f64, provenance, to_csv, to_json, Artifacts};
use crate::error::CliError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum Command {
    Margin,
    Ranges,
    Locus,
    Simulate,
    DeriveGrid,
    ReproduceTables,
}

impl Command {
    pub fn name(self) -> &'static str {
        match self {
            Command::Margin => "margin",
            Command::Ranges => "ranges",
            Command::Locus => "locus",
            Command::Simulate => "simulate",
            Command::DeriveGrid => "derive-grid",
            Command::ReproduceTables => "reproduce-tables",
        }
    }

    fn formats(self) -> &'static [Format] {
        match self {
            Command::Locus => &[Format::Csv],
            Command::Simulate => &[Format::Csv, Format::Json],
            _ => &[Format::Json],
        }
    }
}

pub fn execute(cmd: Command, cfg: &RunConfig) -> Result<Artifacts, CliError> {
    if !cmd.formats().iter().any(|f| cfg.output.formats.contains(f)) {
        return Err(CliError::Validation(vec![format!(
            "output.formats: `{}` writes {:?} but none is enabled",
            cmd.name(),
            cmd.formats()
        )]));
    }
    match cmd {
        Command::Margin => margin(cfg),
        Command::Ranges => ranges(cfg),
        Command::Locus => locus(cfg),
        Command::Simulate => simulate(cfg),
        Command::DeriveGrid => derive_grid(cfg),
        Command::ReproduceTables => reproduce_tables(cfg),
    }
}

fn json_doc(cfg: &RunConfig, cmd: Command, mut body: Value) -> String {
    body["provenance"] = provenance(&cfg.canonical, cmd.name());
    to_json(&body)
}

fn model(cfg: &RunConfig) -> Result<SystemModel, CliError> {
    Ok(compose(cfg.plant_groups()?, &cfg.grid)?)
}

fn margin(cfg: &RunConfig) -> Result<Artifacts, CliError> {
    let lt = if cfg.transformer.include_in_margin { Some(cfg.leakage()?) } else { None };
    let a = &cfg.analysis;
    let result = delay_margin(&cfg.inverter, lt, (0.0, a.margin_max), a.margin_step)?;
    let mut body = match result {
        DelayMargin::Crossing { td, tolerance } => json!({
            "status": "crossing",
            "margin_us": td * 1e6,
            "tolerance_us": tolerance * 1e6,
        }),
        DelayMargin::StableThroughout { upper } => json!({
            "status": "stable-throughout",
            "margin_us": null,
            "tolerance_us": null,
            "searched_up_to_us": upper * 1e6,
        }),
    };
    body["search_step_us"] = json!(a.margin_step * 1e6);
    body["include_transformer"] = json!(cfg.transformer.include_in_margin);
    let mut out = Artifacts::default();
    out.push("margin.json", json_doc(cfg, Command::Margin, body));
    Ok(out)
}

fn range_report(m: &SystemModel, r: &StabilityRange, tol: f64) -> Result<Value, CliError> {
    let verdict = |n: u32| -> Result<Value, CliError> {
        let v = evaluate(&m.with_count(&r.swept_label, n)?, tol)?;
        Ok(json!({"count": n, "stable": v.stable, "max_real_rad_s": v.max_real}))
    };
    let mut boundaries = Vec::new();
    for b in &r.boundaries {
        boundaries.push(json!({
            "kind": if b.is_loss() { "loss" } else { "regain" },
            "stable_side": verdict(b.stable)?,
            "unstable_side": verdict(b.unstable)?,
        }));
    }
    Ok(json!({
        "swept_label": r.swept_label,
        "fixed_counts": r.fixed_counts,
        "n_max": r.n_max,
        "stable_intervals": r.stable_set.iter().map(|(a, b)| json!([a, b])).collect::<Vec<_>>(),
        "first_unstable": r.first_unstable(),
        "last_unstable": r.last_unstable(),
        "boundaries": boundaries,
    }))
}

fn ranges(cfg: &RunConfig) -> Result<Artifacts, CliError> {
    let m = model(cfg)?;
    let tol = cfg.analysis.margin_tol;
    let mut reports = Vec::new();
    for label in cfg.swept_labels() {
        let r = find_ranges(&m, &label, cfg.analysis.n_max, tol)?;
        reports.push(range_report(&m, &r, tol)?);
    }
    let body = json!({"margin_tol_rad_s": tol, "ranges": reports});
    let mut out = Artifacts::default();
    out.push("ranges.json", json_doc(cfg, Command::Ranges, body));
    Ok(out)
}

fn locus(cfg: &RunConfig) -> Result<Artifacts, CliError> {
    let m = model(cfg)?;
    let label = cfg.swept_labels().remove(0);
    let (lo, hi) = cfg.analysis.locus_counts;
    let trace = locus_trace(&m, &label, lo..=hi, cfg.analysis.locus_top_k)?;
    let header: Vec<String> = ["count", "branch_id", "re_rad_s", "im_rad_s"].map(String::from).to_vec();
    let rows = trace
        .rows
        .iter()
        .map(|r| vec![r.count.to_string(), r.branch_id.to_string(), fmt_f64(r.re), fmt_f64(r.im)]);
    let mut out = Artifacts::default();
    out.push("locus.csv", to_csv(&header, rows));
    out.warnings = trace.warnings;
    Ok(out)
}

fn simulate(cfg: &RunConfig) -> Result<Artifacts, CliError> {
    let m = model(cfg)?;
    let engine = evaluate(&m, cfg.analysis.margin_tol)?;
    let lt = cfg.leakage()?;
    let units = cfg
        .groups
        .iter()
        .map(|g| SimUnit { label: g.label.clone(), params: cfg.params_with_td(g.td), lt, count: g.count })
        .collect();
    let plant = SimPlant::new(units, m.grid().rg, m.grid().lg)?;
    let sim = &cfg.sim;
    let w = match sim.mode {
        SimMode::PadeLinear => run_linear(&build_statespace(&plant)?, sim)?,
        SimMode::SampledData => run_sampled(&plant, sim)?,
    };
    let verdict = detect_stability(&w, sim)?;

    let mut out = Artifacts::default();
    if cfg.output.formats.contains(&Format::Csv) {
        let mut header = vec!["t_s".to_string()];
        header.extend(w.labels.iter().map(|l| format!("i_s_{l}")));
        header.push("v_pcc".into());
        let rows = (0..w.times.len()).map(|k| {
            let mut row = vec![fmt_f64(w.times[k])];
            row.extend(w.currents.iter().map(|c| fmt_f64(c[k])));
            row.push(fmt_f64(w.pcc_voltage[k]));
            row
        });
        out.push("simulate.csv", to_csv(&header, rows));
    }
    if cfg.output.formats.contains(&Format::Json) {
        let body = json!({
            "verdict": match verdict {
                SimVerdict::Stable => "stable",
                SimVerdict::Unstable => "unstable",
                SimVerdict::Indeterminate => "indeterminate",
            },
            "mode": match sim.mode {
                SimMode::PadeLinear => "pade-linear",
                SimMode::SampledData => "sampled",
            },
            "counts": m.counts(),
            "duration_s": sim.duration,
            "samples": w.times.len(),
            "diverged_at_s": w.diverged_at,
            "divergence_window_s": sim.divergence_window,
            "divergence_factor": sim.divergence_factor,
            "engine": {"stable": engine.stable, "max_real_rad_s": engine.max_real},
        });
        out.push("simulate.json", json_doc(cfg, Command::Simulate, body));
    }
    if verdict == SimVerdict::Stable && !engine.stable {
        out.warnings.push(format!(
            "engine growth rate {:.3} rad/s is too slow for a tenfold rise within {} s; waveform reads as stable",
            engine.max_real, sim.divergence_window
        ));
    }
    Ok(out)
}

fn derive_grid(cfg: &RunConfig) -> Result<Artifacts, CliError> {
    let g = grid_impedance(&cfg.grid)?;
    let trace: Vec<Value> = g
        .trace
        .iter()
        .map(|s| json!({"label": s.label, "r_ohm": s.r_ohm, "x_ohm": s.x_ohm, "voltage_V": s.voltage}))
        .collect();
    let body = json!({"Rg_ohm": g.rg, "Lg_H": g.lg, "lg_scale": cfg.grid.lg_scale, "trace": trace});
    let mut out = Artifacts::default();
    out.push("grid.json", json_doc(cfg, Command::DeriveGrid, body));
    Ok(out)
}

/// Loop delays of the five inverter populations used by the stock studies.
const POPULATIONS: [(&str, f64); 5] = [("N1", 67.5), ("N2", 72.0), ("N3", 75.0), ("N4", 79.5), ("N5", 82.5)];

const IDENTICAL_DELAYS_US: [f64; 4] = [0.0, 67.5, 75.0, 82.5];

struct Study {
    case: &'static str,
    originals: &'static [(&'static str, u32)],
    added: &'static [&'static str],
}

const STUDIES: [Study; 10] = [
    Study { case: "I", originals: &[("N1", 8)], added: &["N3", "N5"] },
    Study { case: "I", originals: &[("N1", 32)], added: &["N3", "N5"] },
    Study { case: "II", originals: &[("N5", 2)], added: &["N1", "N3"] },
    Study { case: "II", originals: &[("N5", 8)], added: &["N1", "N3"] },
    Study { case: "III", originals: &[("N1", 2), ("N3", 6)], added: &["N4", "N5"] },
    Study { case: "III", originals: &[("N1", 6), ("N3", 2)], added: &["N4", "N5"] },
    Study { case: "IV", originals: &[("N1", 2), ("N5", 6)], added: &["N3", "N4"] },
    Study { case: "IV", originals: &[("N1", 6), ("N5", 2)], added: &["N3", "N4"] },
    Study { case: "V", originals: &[("N3", 2), ("N5", 6)], added: &["N1", "N2"] },
    Study { case: "V", originals: &[("N3", 6), ("N5", 2)], added: &["N1", "N2"] },
];

fn delay_of(label: &str) -> f64 {
    POPULATIONS.iter().find(|(l, _)| *l == label).map(|(_, td)| td * 1e-6).unwrap()
}

fn reproduce_tables(cfg: &RunConfig) -> Result<Artifacts, CliError> {
    let lt = cfg.leakage()?;
    let (n_max, tol) = (cfg.analysis.n_max, cfg.analysis.margin_tol);
    let group = |label: &str, count| PlantGroup::new(label, cfg.params_with_td(delay_of(label)), lt, count);

    let base = compose(vec![PlantGroup::new("N", cfg.params_with_td(0.0), lt, 1)], &cfg.grid)?;
    let tds: Vec<f64> = IDENTICAL_DELAYS_US.iter().map(|t| t * 1e-6).collect();
    let mut identical = Vec::new();
    for (td, r) in delay_sweep(&base, "N", &tds, n_max, tol)? {
        let m = base.with_params("N", cfg.params_with_td(td))?;
        let mut row = range_report(&m, &r, tol)?;
        row["Td_us"] = json!(td * 1e6);
        identical.push(row);
    }

    let mut cases = Vec::new();
    for s in &STUDIES {
        let mut swept = Vec::new();
        for added in s.added {
            let mut groups: Vec<PlantGroup> = s.originals.iter().map(|&(l, n)| group(l, n)).collect();
            groups.push(group(added, 1));
            let m = compose(groups, &cfg.grid)?;
            let r = find_ranges(&m, added, n_max, tol)?;
            let mut row = range_report(&m, &r, tol)?;
            row["Td_us"] = json!(delay_of(added) * 1e6);
            swept.push(row);
        }
        let originals: serde_json::Map<String, Value> = s
            .originals
            .iter()
            .map(|&(l, n)| (l.to_string(), json!({"count": n, "Td_us": delay_of(l) * 1e6})))
            .collect();
        cases.push(json!({"case": s.case, "originals": originals, "added": swept}));
    }
    let body = json!({"margin_tol_rad_s": tol, "identical_delay": identical, "mixed_delay": cases});
    let mut out = Artifacts::default();
    out.push("tables.json", json_doc(cfg, Command::ReproduceTables, body));
    Ok(out)
}
