//! Pole classification, inverter-count sweeps and root-locus traces.

use std::collections::BTreeMap;
use std::ops::RangeInclusive;

use num_complex::Complex64;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::system::{PlantGroup, SystemModel};
use crate::tf::{poly_roots, PoleSet, DEFAULT_POLISH_ITERS};

pub const DEFAULT_N_MAX: u32 = 1000;
pub const MAX_SWEEP_COUNT: u32 = 10_000;

/// Branches closer than this (relative) cannot be told apart by the tracker.
pub const BRANCH_AMBIGUITY_REL: f64 = 1e-6;

/// `1e-3 * omega0`
pub fn default_margin_tol(omega0: f64) -> f64 {
    1e-3 * omega0
}

#[derive(Debug, Clone, PartialEq)]
pub struct StabilityVerdict {
    pub max_real: f64,
    pub stable: bool,
    /// Poles attaining `max_real` (a conjugate pair, or one real pole).
    pub dominant: Vec<Complex64>,
    pub margin_tol: f64,
    /// Some pole lies within `margin_tol` of the imaginary axis.
    pub marginal: bool,
}

pub fn classify(poles: &PoleSet, margin_tol: f64) -> Result<StabilityVerdict> {
    if poles.is_empty() {
        return Err(Error::input("cannot classify an empty pole set"));
    }
    if !(margin_tol >= 0.0) {
        return Err(Error::input(format!("margin_tol must be non-negative, got {margin_tol}")));
    }
    let max_real = poles.max_real();
    let dominant = poles
        .values
        .iter()
        .copied()
        .filter(|p| (p.re - max_real).abs() <= 1e-9 * p.norm().max(1.0))
        .collect();
    let marginal = poles.values.iter().any(|p| p.re.abs() <= margin_tol);
    Ok(StabilityVerdict { max_real, stable: max_real < -margin_tol, dominant, margin_tol, marginal })
}

/// Closed-loop poles of the whole system.
pub fn system_poles(m: &SystemModel) -> Result<PoleSet> {
    poly_roots(&m.characteristic_polynomial()?, DEFAULT_POLISH_ITERS)
}

pub fn evaluate(m: &SystemModel, margin_tol: f64) -> Result<StabilityVerdict> {
    classify(&system_poles(m)?, margin_tol)
}

fn check_counts(counts: &RangeInclusive<u32>) -> Result<()> {
    if *counts.start() < 1 || *counts.end() > MAX_SWEEP_COUNT || counts.is_empty() {
        return Err(Error::input(format!(
            "count range {}..={} must be nonempty within [1, {MAX_SWEEP_COUNT}]",
            counts.start(),
            counts.end()
        )));
    }
    Ok(())
}

/// Verdict for every count of `swept`, in count order.
pub fn sweep_counts(
    m: &SystemModel,
    swept: &str,
    counts: RangeInclusive<u32>,
    margin_tol: f64,
) -> Result<Vec<(u32, StabilityVerdict)>> {
    check_counts(&counts)?;
    m.group(swept)?;
    counts
        .into_par_iter()
        .map(|n| {
            let v = m
                .with_count(swept, n)
                .and_then(|mn| evaluate(&mn, margin_tol))
                .map_err(|e| e.context(format!("{swept} = {n}")))?;
            Ok((n, v))
        })
        .collect()
}

/// Transition between adjacent counts `stable` and `unstable` (|difference| = 1).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Boundary {
    pub stable: u32,
    pub unstable: u32,
}

impl Boundary {
    /// Stability is lost when the count grows past this boundary.
    pub fn is_loss(&self) -> bool {
        self.unstable > self.stable
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct StabilityRange {
    pub swept_label: String,
    /// Counts of all other groups.
    pub fixed_counts: BTreeMap<String, u32>,
    pub n_max: u32,
    /// Disjoint, sorted, inclusive intervals of stable counts.
    pub stable_set: Vec<(u32, u32)>,
    pub boundaries: Vec<Boundary>,
}

impl StabilityRange {
    pub fn is_stable(&self, n: u32) -> bool {
        self.stable_set.iter().any(|&(a, b)| a <= n && n <= b)
    }

    /// First unstable count above a stable low-count interval.
    pub fn first_unstable(&self) -> Option<u32> {
        self.boundaries.iter().find(|b| b.is_loss()).map(|b| b.unstable)
    }

    /// Last unstable count before the final stable interval.
    pub fn last_unstable(&self) -> Option<u32> {
        self.boundaries.iter().rev().find(|b| !b.is_loss()).map(|b| b.unstable)
    }
}

fn intervals_from(verdicts: &[(u32, bool)]) -> (Vec<(u32, u32)>, Vec<Boundary>) {
    let mut set: Vec<(u32, u32)> = Vec::new();
    let mut boundaries = Vec::new();
    for (i, &(n, stable)) in verdicts.iter().enumerate() {
        if stable {
            match set.last_mut() {
                Some(last) if last.1 + 1 == n => last.1 = n,
                _ => set.push((n, n)),
            }
        }
        if let Some(&(prev, prev_stable)) = i.checked_sub(1).map(|j| &verdicts[j]) {
            if prev_stable && !stable {
                boundaries.push(Boundary { stable: prev, unstable: n });
            } else if !prev_stable && stable {
                boundaries.push(Boundary { stable: n, unstable: prev });
            }
        }
    }
    (set, boundaries)
}

/// Stable counts of `swept` in `[1, n_max]`, other groups fixed.
///
/// Every boundary is re-checked on a model composed from scratch (no shared
/// caches); disagreement is reported as a diagnostic.
pub fn find_ranges(m: &SystemModel, swept: &str, n_max: u32, margin_tol: f64) -> Result<StabilityRange> {
    if n_max < 1 {
        return Err(Error::input("n_max must be at least 1"));
    }
    let sweep = sweep_counts(m, swept, 1..=n_max, margin_tol)?;
    let flags: Vec<(u32, bool)> = sweep.iter().map(|(n, v)| (*n, v.stable)).collect();
    let (stable_set, boundaries) = intervals_from(&flags);

    let groups: Vec<PlantGroup> = m.groups().to_vec();
    let grid = crate::system::GridParams::direct(m.grid().rg, m.grid().lg);
    let recheck = |n: u32| -> Result<bool> {
        let mut g = groups.clone();
        for x in g.iter_mut().filter(|x| x.label == swept) {
            x.count = n;
        }
        Ok(evaluate(&crate::system::compose(g, &grid)?, margin_tol)?.stable)
    };
    boundaries.par_iter().try_for_each(|b| {
        if !recheck(b.stable)? || recheck(b.unstable)? {
            return Err(Error::Diagnostic(format!(
                "boundary {}/{} of '{swept}' not reproduced on re-evaluation",
                b.stable, b.unstable
            )));
        }
        Ok(())
    })?;

    let fixed_counts = m.counts().into_iter().filter(|(k, _)| k != swept).collect();
    Ok(StabilityRange { swept_label: swept.to_string(), fixed_counts, n_max, stable_set, boundaries })
}

/// `find_ranges` for each total delay of the swept group.
pub fn delay_sweep(
    m: &SystemModel,
    group: &str,
    td_values: &[f64],
    n_max: u32,
    margin_tol: f64,
) -> Result<Vec<(f64, StabilityRange)>> {
    let base = m.group(group)?.params.clone();
    td_values
        .iter()
        .map(|&td| {
            if !(td >= 0.0 && td.is_finite()) {
                return Err(Error::input(format!("delay must be non-negative, got {td}")));
            }
            let mt = m.with_params(group, base.clone().with_td(td))?;
            Ok((td, find_ranges(&mt, group, n_max, margin_tol)?))
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LocusRow {
    pub count: u32,
    pub branch_id: usize,
    pub re: f64,
    pub im: f64,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct LocusTrace {
    pub rows: Vec<LocusRow>,
    pub warnings: Vec<String>,
}

fn top_poles(m: &SystemModel, swept: &str, n: u32, top_k: usize) -> Result<Vec<Complex64>> {
    let mut p = system_poles(&m.with_count(swept, n)?)
        .map_err(|e| e.context(format!("{swept} = {n}")))?
        .values;
    p.sort_by(|a, b| b.re.total_cmp(&a.re).then(b.im.total_cmp(&a.im)));
    // never split a conjugate pair at the cut
    let mut keep = top_k.min(p.len());
    if keep < p.len() {
        let (last, next) = (p[keep - 1], p[keep]);
        if last.im != 0.0 && (next - last.conj()).norm() <= 1e-9 * last.norm().max(1.0) {
            keep += 1;
        }
    }
    p.truncate(keep);
    Ok(p)
}

/// The `top_k` rightmost poles per count (one more when the cut would split a
/// conjugate pair), linked into branches by greedy nearest-neighbour matching
/// against the previous count.
pub fn locus_trace(m: &SystemModel, swept: &str, counts: RangeInclusive<u32>, top_k: usize) -> Result<LocusTrace> {
    if top_k < 1 {
        return Err(Error::input("top_k must be at least 1"));
    }
    check_counts(&counts)?;
    m.group(swept)?;
    let per_count: Vec<(u32, Vec<Complex64>)> = counts
        .into_par_iter()
        .map(|n| Ok((n, top_poles(m, swept, n, top_k)?)))
        .collect::<Result<_>>()?;

    let mut trace = LocusTrace::default();
    let mut prev: Vec<Complex64> = Vec::new();
    for (n, poles) in per_count {
        let mut ids = vec![usize::MAX; poles.len()];
        if prev.is_empty() {
            ids.iter_mut().enumerate().for_each(|(i, id)| *id = i);
        } else {
            let mut pairs: Vec<(f64, usize, usize)> = Vec::new();
            for (b, q) in prev.iter().enumerate() {
                for (i, p) in poles.iter().enumerate() {
                    pairs.push(((p - q).norm(), b, i));
                }
            }
            pairs.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)).then(a.2.cmp(&b.2)));
            let mut branch_used = vec![false; prev.len()];
            for (_, b, i) in pairs {
                if !branch_used[b] && ids[i] == usize::MAX {
                    branch_used[b] = true;
                    ids[i] = b;
                }
            }
            // poles beyond the previous branch count start new branches
            for (next, id) in (prev.len()..).zip(ids.iter_mut().filter(|id| **id == usize::MAX)) {
                *id = next;
            }
        }
        for i in 0..poles.len() {
            for j in i + 1..poles.len() {
                let scale = poles[i].norm().max(poles[j].norm()).max(1.0);
                if (poles[i] - poles[j]).norm() <= BRANCH_AMBIGUITY_REL * scale && ids[i] != ids[j] {
                    let shared = ids[i].min(ids[j]);
                    trace.warnings.push(format!(
                        "count {n}: branches {} and {} coincide near {}; reported as branch {shared}",
                        ids[i], ids[j], poles[i]
                    ));
                    ids[i] = shared;
                    ids[j] = shared;
                }
            }
        }
        let mut slots = vec![Complex64::new(f64::NAN, f64::NAN); ids.iter().max().map_or(0, |m| m + 1)];
        for (i, p) in poles.iter().enumerate() {
            trace.rows.push(LocusRow { count: n, branch_id: ids[i], re: p.re, im: p.im });
            slots[ids[i]] = *p;
        }
        // carry the last known position of branches that dropped out of the top set
        for (b, q) in prev.iter().enumerate() {
            if b < slots.len() && slots[b].re.is_nan() {
                slots[b] = *q;
            }
        }
        prev = slots.into_iter().filter(|p| !p.re.is_nan()).collect();
    }
    trace.rows.sort_by(|a, b| a.count.cmp(&b.count).then(a.branch_id.cmp(&b.branch_id)).then(a.im.total_cmp(&b.im)));
    Ok(trace)
}
