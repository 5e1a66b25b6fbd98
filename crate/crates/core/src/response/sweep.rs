//! Frequency and force sweeps of the stationary states, branch linking,
//! fold location and peak-response analysis.
//!
//! States at each sweep point are ordered along the slaving curve, so
//! branches continue by index while the number of states is unchanged.
//! Where it changes, the adjacent pair of states that best explains the
//! difference is taken to be born or annihilated in a saddle-node; the pair is
//! joined into one branch. Branches not connected to the states at the sweep
//! endpoints are isolated.

use rayon::prelude::*;
use serde::Serialize;

use super::{count_states, golden_min, stationary_states, DriveConfig, ResponseState};
use crate::error::{ModelError, Result};
use crate::params::{Decays, RwaParams, SystemParams};

/// Sweep window margin beyond any fold, in units of `Γ₁`.
pub const WINDOW_MARGIN_GAMMA1: f64 = 20.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SweepOptions {
    /// Tolerance on fold positions in the swept variable.
    pub fold_tol: f64,
    /// Tolerance used when approaching folds to check their eigenvalues,
    /// relative to `max(1, |control|)`.
    pub eigen_tol: f64,
}

impl Default for SweepOptions {
    fn default() -> Self {
        Self {
            fold_tol: 1e-4,
            eigen_tol: 1e-12,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum SweepKind {
    /// Drive detuning swept at fixed `f_d1`.
    Frequency,
    /// Drive amplitude swept at fixed detuning.
    Force,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepColumn {
    pub control: f64,
    pub states: Vec<ResponseState>,
}

/// A saddle-node where two states coalesce.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Fold {
    /// Location in the swept variable.
    pub control: f64,
    pub branch_id: usize,
    /// `|u₁|²` of the two states just before they coalesce.
    pub u1_sq: [f64; 2],
    pub critical_re: [f64; 2],
    pub unstable_counts: [usize; 2],
    /// The two states differ by exactly one unstable eigenvalue and both
    /// have that eigenvalue within `1e-6·Γ₂` of zero.
    pub single_crossing: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BranchSummary {
    pub branch_id: usize,
    pub isolated: bool,
    pub u1_sq_max: f64,
    pub a1_max_m: f64,
    /// Swept-variable value at the peak.
    pub control_at_max: f64,
    /// `f_d1 / (2|u₁|max)`, identical to `F_d1/(4m₁ω₁a₁max)`.
    pub gamma_peak_per_s: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ResponseSummary {
    pub branches: Vec<BranchSummary>,
    /// Lowest fold of the isolated branches.
    pub omega_l: Option<f64>,
    /// Highest fold of the isolated branches.
    pub omega_h: Option<f64>,
    pub isolated_branch: bool,
    /// Every fold lies at least `20Γ₁` inside a frequency-sweep window.
    pub window_margin_ok: bool,
    /// Links where two choices were equally good; resolved toward the lowest
    /// index.
    pub ambiguous_links: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepResult {
    pub kind: SweepKind,
    /// Drive amplitude of a frequency sweep or detuning of a force sweep.
    pub fixed: f64,
    pub columns: Vec<SweepColumn>,
    pub folds: Vec<Fold>,
    /// Some control value has more than one state.
    pub hysteretic: bool,
    pub summary: ResponseSummary,
}

impl SweepResult {
    /// All states with their control values, column by column.
    pub fn rows(&self) -> impl Iterator<Item = (f64, &ResponseState)> {
        self.columns
            .iter()
            .flat_map(|c| c.states.iter().map(move |s| (c.control, s)))
    }
}

struct UnionFind(Vec<usize>);

impl UnionFind {
    fn new(n: usize) -> Self {
        Self((0..n).collect())
    }

    fn find(&mut self, mut i: usize) -> usize {
        while self.0[i] != i {
            self.0[i] = self.0[self.0[i]];
            i = self.0[i];
        }
        i
    }

    fn union(&mut self, a: usize, b: usize) {
        let (ra, rb) = (self.find(a), self.find(b));
        if ra != rb {
            let (lo, hi) = if ra < rb { (ra, rb) } else { (rb, ra) };
            self.0[hi] = lo;
        }
    }
}

fn link_distance(a: &ResponseState, b: &ResponseState) -> f64 {
    (a.u1_sq.ln() - b.u1_sq.ln()).abs() + ((1.0 + a.u2_sq).ln() - (1.0 + b.u2_sq).ln()).abs()
}

/// Matches the larger set of states against the smaller one by removing
/// adjacent pairs. Returns the removed pairs (indices into `larger`), the
/// surviving indices in order, and whether any removal was a tie.
fn match_by_removal(larger: &[ResponseState], smaller: &[ResponseState]) -> (Vec<[usize; 2]>, Vec<usize>, bool) {
    let mut kept: Vec<usize> = (0..larger.len()).collect();
    let mut removed = Vec::new();
    let mut ambiguous = false;
    while kept.len() > smaller.len() {
        let width = if kept.len() - smaller.len() >= 2 { 2 } else { 1 };
        let mut best: Option<(usize, f64)> = None;
        let mut tie = false;
        for j in 0..=kept.len() - width {
            let cost: f64 = kept
                .iter()
                .enumerate()
                .filter(|(k, _)| *k < j || *k >= j + width)
                .map(|(_, &idx)| idx)
                .zip(smaller)
                .map(|(idx, s)| link_distance(&larger[idx], s))
                .sum();
            match best {
                None => best = Some((j, cost)),
                Some((_, c)) if cost < c * (1.0 - 1e-12) => {
                    best = Some((j, cost));
                    tie = false;
                }
                Some((_, c)) if cost <= c * (1.0 + 1e-12) => tie = true,
                _ => {}
            }
        }
        let (j, _) = best.expect("at least one candidate");
        ambiguous |= tie;
        if width == 2 {
            removed.push([kept[j], kept[j + 1]]);
        }
        kept.drain(j..j + width);
    }
    (removed, kept, ambiguous)
}

/// Bisection on the number of states between two controls with different
/// counts. Returns the final bracket.
fn bisect_count(
    count: &(impl Fn(f64) -> Result<usize> + Sync),
    mut lo: f64,
    mut hi: f64,
    tol: f64,
) -> Result<(f64, f64)> {
    let n_lo = count(lo)?;
    while (hi - lo).abs() > tol {
        let mid = 0.5 * (lo + hi);
        if mid == lo || mid == hi {
            break;
        }
        if count(mid)? == n_lo {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok((lo, hi))
}

struct Problem<'a, S, C> {
    kind: SweepKind,
    fixed: f64,
    sys: &'a SystemParams,
    solve: S,
    count: C,
    drive_at: fn(f64, f64) -> f64,
    opts: SweepOptions,
}

fn run_sweep<S, C>(prob: Problem<S, C>, controls: Vec<f64>) -> Result<SweepResult>
where
    S: Fn(f64) -> Result<Vec<ResponseState>> + Sync,
    C: Fn(f64) -> Result<usize> + Sync,
{
    let decays = prob.sys.decays();
    let columns: Vec<SweepColumn> = controls
        .par_iter()
        .map(|&c| {
            Ok(SweepColumn {
                control: c,
                states: (prob.solve)(c)?,
            })
        })
        .collect::<Result<_>>()?;

    let offsets: Vec<usize> = columns
        .iter()
        .scan(0, |acc, c| {
            let o = *acc;
            *acc += c.states.len();
            Some(o)
        })
        .collect();
    let total = offsets.last().unwrap() + columns.last().unwrap().states.len();
    let mut uf = UnionFind::new(total);
    let mut ambiguous = 0;
    // (column pair index, node pair)
    let mut coarse_folds: Vec<(usize, [usize; 2])> = Vec::new();

    for i in 0..columns.len() - 1 {
        let (a, b) = (&columns[i].states, &columns[i + 1].states);
        let (oa, ob) = (offsets[i], offsets[i + 1]);
        if a.len() == b.len() {
            for k in 0..a.len() {
                uf.union(oa + k, ob + k);
            }
            continue;
        }
        let (larger, smaller, ol, os) = if b.len() > a.len() {
            (b, a, ob, oa)
        } else {
            (a, b, oa, ob)
        };
        let (pairs, kept, tie) = match_by_removal(larger, smaller);
        ambiguous += usize::from(tie);
        for (k, &idx) in kept.iter().enumerate() {
            uf.union(os + k, ol + idx);
        }
        for pair in pairs {
            uf.union(ol + pair[0], ol + pair[1]);
            coarse_folds.push((i, [ol + pair[0], ol + pair[1]]));
        }
    }

    // main branch: everything connected to the endpoint columns
    let last = columns.len() - 1;
    let endpoint_nodes: Vec<usize> = (0..columns[0].states.len())
        .map(|k| offsets[0] + k)
        .chain((0..columns[last].states.len()).map(|k| offsets[last] + k))
        .collect();
    let main_roots: Vec<usize> = endpoint_nodes.iter().map(|&n| uf.find(n)).collect();
    let mut labels: Vec<(usize, usize)> = Vec::new();
    let mut branch_of = vec![0usize; total];
    let mut next_isolated = 1;
    for (node, slot) in branch_of.iter_mut().enumerate() {
        let root = uf.find(node);
        *slot = if main_roots.contains(&root) {
            0
        } else if let Some(&(_, id)) = labels.iter().find(|(r, _)| *r == root) {
            id
        } else {
            labels.push((root, next_isolated));
            next_isolated += 1;
            next_isolated - 1
        };
    }
    let mut columns = columns;
    for (ci, col) in columns.iter_mut().enumerate() {
        for (k, s) in col.states.iter_mut().enumerate() {
            s.branch_id = branch_of[offsets[ci] + k];
        }
    }

    // refine folds
    let eig_tol_abs = 1e-6 * decays.gamma2;
    let mut folds = Vec::new();
    let mut fold_states: Vec<(usize, f64, ResponseState)> = Vec::new();
    for &(i, nodes) in &coarse_folds {
        let branch_id = branch_of[nodes[0]];
        let (c0, c1) = (columns[i].control, columns[i + 1].control);
        let (lo, hi) = bisect_count(&prob.count, c0, c1, prob.opts.fold_tol)?;
        let position = 0.5 * (lo + hi);
        let scale = position.abs().max(1.0);
        let (flo, fhi) = bisect_count(&prob.count, lo, hi, prob.opts.eigen_tol * scale)?;
        let (s_lo, s_hi) = ((prob.solve)(flo)?, (prob.solve)(fhi)?);
        let (inside, outside, control_inside) = if s_lo.len() > s_hi.len() {
            (s_lo, s_hi, flo)
        } else {
            (s_hi, s_lo, fhi)
        };
        let (pairs, _, _) = match_by_removal(&inside, &outside);
        // the fine pair closest to the coarse one
        let coarse_x = prob_state(&columns, &offsets, nodes[0]).u1_sq;
        let Some(pair) = pairs
            .iter()
            .min_by(|p, q| {
                let dp = (inside[p[0]].u1_sq.ln() - coarse_x.ln()).abs();
                let dq = (inside[q[0]].u1_sq.ln() - coarse_x.ln()).abs();
                dp.total_cmp(&dq)
            })
            .copied()
        else {
            continue;
        };
        let (sa, sb) = (&inside[pair[0]], &inside[pair[1]]);
        let counts = [sa.unstable_count, sb.unstable_count];
        let single_crossing = counts[0].abs_diff(counts[1]) == 1
            && sa.critical_re.abs() < eig_tol_abs
            && sb.critical_re.abs() < eig_tol_abs;
        for s in [sa, sb] {
            let mut s = s.clone();
            s.branch_id = branch_id;
            fold_states.push((branch_id, control_inside, s));
        }
        folds.push(Fold {
            control: position,
            branch_id,
            u1_sq: [sa.u1_sq, sb.u1_sq],
            critical_re: [sa.critical_re, sb.critical_re],
            unstable_counts: counts,
            single_crossing,
        });
    }
    folds.sort_by(|a, b| a.control.total_cmp(&b.control));

    let isolated_folds: Vec<f64> = folds.iter().filter(|f| f.branch_id != 0).map(|f| f.control).collect();
    let omega_l = isolated_folds.iter().copied().reduce(f64::min);
    let omega_h = isolated_folds.iter().copied().reduce(f64::max);

    let window_margin_ok = match prob.kind {
        SweepKind::Frequency => {
            let margin = WINDOW_MARGIN_GAMMA1 * decays.gamma1;
            let (c_first, c_last) = (columns[0].control, columns[last].control);
            folds
                .iter()
                .all(|f| f.control - c_first >= margin && c_last - f.control >= margin)
        }
        SweepKind::Force => true,
    };

    let branches = (0..next_isolated)
        .map(|id| branch_peak(&prob, &columns, &fold_states, id))
        .collect::<Result<Vec<_>>>()?;

    Ok(SweepResult {
        kind: prob.kind,
        fixed: prob.fixed,
        hysteretic: columns.iter().any(|c| c.states.len() > 1),
        columns,
        folds,
        summary: ResponseSummary {
            branches,
            omega_l,
            omega_h,
            isolated_branch: next_isolated > 1,
            window_margin_ok,
            ambiguous_links: ambiguous,
        },
    })
}

fn prob_state<'c>(columns: &'c [SweepColumn], offsets: &[usize], node: usize) -> &'c ResponseState {
    let ci = offsets.partition_point(|&o| o <= node) - 1;
    &columns[ci].states[node - offsets[ci]]
}

/// Peak `|u₁|²` of one branch: the largest sampled or fold state, refined by
/// golden section when it lies between samples with an unchanged count.
fn branch_peak<S, C>(
    prob: &Problem<S, C>,
    columns: &[SweepColumn],
    fold_states: &[(usize, f64, ResponseState)],
    id: usize,
) -> Result<BranchSummary>
where
    S: Fn(f64) -> Result<Vec<ResponseState>> + Sync,
    C: Fn(f64) -> Result<usize> + Sync,
{
    // (u1_sq, control, column and state index)
    type Peak = (f64, f64, Option<(usize, usize)>);
    let mut best: Option<Peak> = None;
    for (ci, col) in columns.iter().enumerate() {
        for (k, s) in col.states.iter().enumerate() {
            if s.branch_id == id && best.is_none_or(|b| s.u1_sq > b.0) {
                best = Some((s.u1_sq, col.control, Some((ci, k))));
            }
        }
    }
    for (bid, control, s) in fold_states {
        if *bid == id && best.is_none_or(|b| s.u1_sq > b.0) {
            best = Some((s.u1_sq, *control, None));
        }
    }
    let (mut x_max, mut at, origin) = best.ok_or_else(|| ModelError::Solver {
        message: format!("branch {id} has no states"),
        residual: f64::NAN,
    })?;

    if let Some((ci, k)) = origin {
        if ci > 0 && ci + 1 < columns.len() {
            let n = columns[ci].states.len();
            if columns[ci - 1].states.len() == n && columns[ci + 1].states.len() == n {
                let value = |c: f64| -> f64 {
                    match (prob.solve)(c) {
                        Ok(states) if states.len() == n => -states[k].u1_sq,
                        _ => f64::INFINITY,
                    }
                };
                let (c, v) = golden_min(
                    value,
                    columns[ci - 1].control,
                    columns[ci + 1].control,
                    f64::NEG_INFINITY,
                );
                if -v > x_max {
                    x_max = -v;
                    at = c;
                }
            }
        }
    }
    let f_d1 = (prob.drive_at)(prob.fixed, at);
    Ok(BranchSummary {
        branch_id: id,
        isolated: id != 0,
        u1_sq_max: x_max,
        a1_max_m: prob.sys.a1(x_max.sqrt()),
        control_at_max: at,
        gamma_peak_per_s: f_d1 / (2.0 * x_max.sqrt()),
    })
}

fn linspace(range: (f64, f64), n: usize) -> Vec<f64> {
    (0..n)
        .map(|i| range.0 + (range.1 - range.0) * i as f64 / (n - 1) as f64)
        .collect()
}

fn check_sweep_args(range: (f64, f64), n_points: usize) -> Result<()> {
    if n_points < 2 {
        return Err(ModelError::Domain(format!(
            "a sweep needs at least 2 points, got {n_points}"
        )));
    }
    if !(range.0.is_finite() && range.1.is_finite() && range.0 < range.1) {
        return Err(ModelError::Domain(format!("invalid sweep range {range:?}")));
    }
    Ok(())
}

/// Stationary states over a range of drive detunings (rad/s) at fixed
/// `f_d1`, linked into branches.
pub fn frequency_sweep(
    sys: &SystemParams,
    f_d1: f64,
    detune_range: (f64, f64),
    n_points: usize,
    opts: &SweepOptions,
) -> Result<SweepResult> {
    check_sweep_args(detune_range, n_points)?;
    frequency_sweep_on_grid(sys, f_d1, linspace(detune_range, n_points), opts)
}

/// Frequency sweep on an explicit increasing grid of detunings (rad/s).
pub fn frequency_sweep_on_grid(
    sys: &SystemParams,
    f_d1: f64,
    detunes: Vec<f64>,
    opts: &SweepOptions,
) -> Result<SweepResult> {
    if detunes.len() < 2 || detunes.windows(2).any(|w| !(w[0] < w[1])) {
        return Err(ModelError::Domain(
            "detuning grid must be increasing with at least 2 points".into(),
        ));
    }
    let (p, decays) = (&sys.rwa, sys.decays());
    run_sweep(
        Problem {
            kind: SweepKind::Frequency,
            fixed: f_d1,
            sys,
            solve: |nu| stationary_states(DriveConfig::new(f_d1, nu), p, decays),
            count: |nu| count_states(DriveConfig::new(f_d1, nu), p, decays),
            drive_at: |f, _| f,
            opts: *opts,
        },
        detunes,
    )
}

/// Stationary states over a range of drive amplitudes at fixed detuning
/// (rad/s), linked into branches. The grid is uniform in `f_d1`.
pub fn force_sweep(
    sys: &SystemParams,
    detune: f64,
    f_d1_range: (f64, f64),
    n_points: usize,
    opts: &SweepOptions,
) -> Result<SweepResult> {
    check_sweep_args(f_d1_range, n_points)?;
    if f_d1_range.0 <= 0.0 {
        return Err(ModelError::Domain("force sweep range must be positive".into()));
    }
    let (p, decays) = (&sys.rwa, sys.decays());
    run_sweep(
        Problem {
            kind: SweepKind::Force,
            fixed: detune,
            sys,
            solve: |f| stationary_states(DriveConfig::new(f, detune), p, decays),
            count: |f| count_states(DriveConfig::new(f, detune), p, decays),
            drive_at: |_, f| f,
            opts: *opts,
        },
        linspace(f_d1_range, n_points),
    )
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GammaPeakPoint {
    pub f_d1: f64,
    pub branch_id: usize,
    pub isolated: bool,
    pub a1_max_m: f64,
    pub gamma_peak_per_s: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GammaPeakCurve {
    pub points: Vec<GammaPeakPoint>,
    /// Drives at which more than one branch (peak) exists.
    pub multivalued: Vec<f64>,
    /// Smallest and largest sampled multivalued drive.
    pub multivalued_range: Option<(f64, f64)>,
    /// Sweeps whose folds came closer than `20Γ₁` to the window edge.
    pub narrow_windows: usize,
}

/// `Γ_peak` of every branch for each drive amplitude.
pub fn gamma_peak_curve(
    sys: &SystemParams,
    drives: &[f64],
    detune_range: (f64, f64),
    n_points: usize,
    opts: &SweepOptions,
) -> Result<GammaPeakCurve> {
    let sweeps: Vec<SweepResult> = drives
        .iter()
        .map(|&f| frequency_sweep(sys, f, detune_range, n_points, opts))
        .collect::<Result<_>>()?;
    let mut points = Vec::new();
    let mut multivalued = Vec::new();
    let mut narrow_windows = 0;
    for (sweep, &f) in sweeps.iter().zip(drives) {
        if sweep.summary.branches.len() > 1 {
            multivalued.push(f);
        }
        narrow_windows += usize::from(!sweep.summary.window_margin_ok);
        for b in &sweep.summary.branches {
            points.push(GammaPeakPoint {
                f_d1: f,
                branch_id: b.branch_id,
                isolated: b.isolated,
                a1_max_m: b.a1_max_m,
                gamma_peak_per_s: b.gamma_peak_per_s,
            });
        }
    }
    let multivalued_range = multivalued.iter().fold(None, |acc: Option<(f64, f64)>, &f| match acc {
        None => Some((f, f)),
        Some((lo, hi)) => Some((lo.min(f), hi.max(f))),
    });
    Ok(GammaPeakCurve {
        points,
        multivalued,
        multivalued_range,
        narrow_windows,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SharpeningReport {
    pub drive_ratio: f64,
    /// Ratio of the peak amplitudes of the lowest state at the two drives.
    pub peak_ratio: f64,
    /// Detuning and `a₁(large)/a₁(small)` of the lowest state at each point.
    pub pointwise: Vec<(f64, f64)>,
    /// Largest `|pointwise − drive_ratio|`.
    pub max_pointwise_deviation: f64,
}

/// Compares the response curves of the lowest state at two drives, as seen
/// in a sweep started from rest. A linear resonator responds in
/// proportion; negative nonlinear friction makes the peak grow faster than
/// the drive.
pub fn peak_sharpening_check(
    p: &RwaParams,
    decays: Decays,
    f_d1_pair: (f64, f64),
    detunes: &[f64],
) -> Result<SharpeningReport> {
    let (f_small, f_large) = f_d1_pair;
    if !(f_small > 0.0 && f_large > f_small) {
        return Err(ModelError::Domain(format!(
            "need 0 < small < large drive, got {f_d1_pair:?}"
        )));
    }
    let rows: Vec<(f64, f64, f64, f64)> = detunes
        .par_iter()
        .map(|&nu| {
            let small = stationary_states(DriveConfig::new(f_small, nu), p, decays)?;
            let large = stationary_states(DriveConfig::new(f_large, nu), p, decays)?;
            Ok((
                nu,
                (large[0].u1_sq / small[0].u1_sq).sqrt(),
                small[0].u1_sq,
                large[0].u1_sq,
            ))
        })
        .collect::<Result<_>>()?;
    let drive_ratio = f_large / f_small;
    let peak_small = rows.iter().map(|r| r.2).fold(0.0, f64::max);
    let peak_large = rows.iter().map(|r| r.3).fold(0.0, f64::max);
    let pointwise: Vec<(f64, f64)> = rows.iter().map(|r| (r.0, r.1)).collect();
    let max_pointwise_deviation = pointwise
        .iter()
        .map(|(_, r)| (r - drive_ratio).abs())
        .fold(0.0, f64::max);
    Ok(SharpeningReport {
        drive_ratio,
        peak_ratio: (peak_large / peak_small).sqrt(),
        pointwise,
        max_pointwise_deviation,
    })
}
