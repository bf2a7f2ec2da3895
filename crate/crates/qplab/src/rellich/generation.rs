//! Resonance covers of a curve's codomain and construction of the next
//! generation of Rellich curves: simple-resonance children by continuation,
//! double resonances resolved into branch pairs, and the straddle pathway
//! that re-resolves a near-collapsed brother pair across its gap.

use serde::Serialize;

use crate::error::Error;
use crate::lattice::norm1;
use crate::operator::OperatorParams;
use crate::Result;

use super::doubles::{resolve_straddle, DoubleResolution, StraddleSpec};
use super::{
    domain_adjust, find_double_resonances, monotonicity_split, morse_check, resolve_double,
    CurveId, CurveKind, DoubleOrigin, DoubleResonance, Interval, InterlacingPair,
    MonotonePiece, RellichCurve, RellichTree, TrackedBranch,
};
use super::doubles::ResolveOpts;

/// Parameters of one resonance cover.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct CoverParams {
    /// Target width of the simple intervals (actual widths lie in
    /// `[min(width, component), 2·width]`).
    pub width: f64,
    /// Exact overlap of adjacent intervals.
    pub overlap: f64,
    /// Radius of the double-resonance windows `B̄(e_k)`.
    pub double_radius: f64,
    /// Search radius for the translations `0 < ‖k‖₁ ≤ k_radius`.
    pub k_radius: u32,
}

/// What an interval of the cover is responsible for.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub enum CoverKind {
    Simple,
    /// Index into the double-resonance list handed to [`build_cover`].
    Double(usize),
    /// The forced interval straddling a Type-3 pair's collapsed gap.
    Straddle,
}

#[derive(Debug, Clone, Serialize)]
pub struct CoverInterval {
    pub lo: f64,
    pub hi: f64,
    pub kind: CoverKind,
}

impl CoverInterval {
    pub fn interval(&self) -> Interval {
        Interval::new(self.lo, self.hi)
    }
}

/// A cover of an energy region by overlapping simple intervals and
/// double-resonance windows.
#[derive(Debug, Clone, Serialize)]
pub struct ResonanceCover {
    pub intervals: Vec<CoverInterval>,
    pub overlap: f64,
    pub region: Interval,
}

impl ResonanceCover {
    pub fn count(&self) -> usize {
        self.intervals.len()
    }
}

/// Cover `region` by simple intervals of width in `[width, 2·width]`
/// overlapping adjacent intervals by exactly `overlap`, around the blocked
/// double windows `B̄_{double_radius}(e_k)` (and a forced straddle interval,
/// when given). Double energies whose window does not fit inside the region
/// with a one-radius margin are dropped.
pub fn build_cover(
    region: Interval,
    params: &CoverParams,
    double_energies: &[f64],
    forced: Option<Interval>,
) -> Result<ResonanceCover> {
    if region.len() <= 0.0 {
        return Err(Error::InvalidArgument("empty cover region".into()));
    }
    let w = params.width;
    let ov = params.overlap;
    if !(w > 0.0) || !(ov >= 0.0) || ov >= w {
        return Err(Error::InvalidArgument(format!(
            "cover needs 0 <= overlap < width, got width = {w}, overlap = {ov}"
        )));
    }
    let dr = params.double_radius;

    // blocked windows, each tagged with its cover kind
    let mut blocked: Vec<CoverInterval> = Vec::new();
    for (i, &e) in double_energies.iter().enumerate() {
        if e - 2.0 * dr < region.lo || e + 2.0 * dr > region.hi {
            continue; // window too close to the region boundary
        }
        blocked.push(CoverInterval { lo: e - dr, hi: e + dr, kind: CoverKind::Double(i) });
    }
    // separation precondition among the kept double energies
    for a in 0..blocked.len() {
        for b in (a + 1)..blocked.len() {
            let (ea, eb) = (
                0.5 * (blocked[a].lo + blocked[a].hi),
                0.5 * (blocked[b].lo + blocked[b].hi),
            );
            if (ea - eb).abs() <= 4.0 * dr {
                return Err(Error::CoverInfeasible(format!(
                    "double energies {ea} and {eb} are separated by {:.3e} <= 4·radius = {:.3e}",
                    (ea - eb).abs(),
                    4.0 * dr
                )));
            }
        }
    }
    if let Some(f) = forced {
        for b in &blocked {
            if f.hi > b.lo && b.hi > f.lo {
                return Err(Error::CoverInfeasible(
                    "forced straddle interval collides with a double window".into(),
                ));
            }
        }
        blocked.push(CoverInterval { lo: f.lo, hi: f.hi, kind: CoverKind::Straddle });
    }
    blocked.sort_by(|x, y| x.lo.partial_cmp(&y.lo).unwrap());

    let mut intervals: Vec<CoverInterval> = Vec::new();
    // complement components of the blocked windows inside the region
    let mut cursor = region.lo;
    let mut components: Vec<(f64, f64, bool, bool)> = Vec::new(); // (lo, hi, left_blocked, right_blocked)
    for b in &blocked {
        if b.lo > cursor {
            components.push((cursor, b.lo, cursor > region.lo, true));
        }
        cursor = cursor.max(b.hi);
    }
    if cursor < region.hi {
        components.push((cursor, region.hi, cursor > region.lo, false));
    }
    if blocked.is_empty() {
        components.clear();
        components.push((region.lo, region.hi, false, false));
    }

    for (lo, hi, left_blocked, right_blocked) in components {
        // extend into blocked neighbors so the junction overlap is exact
        let a = if left_blocked { lo - ov } else { lo };
        let b = if right_blocked { hi + ov } else { hi };
        let len = b - a;
        if len <= 0.0 {
            continue;
        }
        let q = if len <= w {
            1
        } else {
            ((len - ov) / (w - ov)).ceil() as usize
        };
        let wa = (len + (q as f64 - 1.0) * ov) / q as f64;
        let mut s = a;
        for i in 0..q {
            let e = if i + 1 == q { b } else { s + wa };
            intervals.push(CoverInterval { lo: s, hi: e, kind: CoverKind::Simple });
            s = e - ov;
        }
    }
    intervals.extend(blocked);
    intervals.sort_by(|x, y| x.lo.partial_cmp(&y.lo).unwrap());
    Ok(ResonanceCover { intervals, overlap: ov, region })
}

/// All resolved parameters of one generation step `n → n+1`.
///
/// Cover widths are fractions of each parent's region: codomain sizes differ
/// by orders of magnitude between simple- and double-resonance parents of the
/// same scale.
#[derive(Debug, Clone)]
pub struct GenStep {
    pub scale_to: usize,
    /// Simple-interval width as a fraction of the parent region.
    pub width_frac: f64,
    /// Double-window radius as a fraction of the parent region.
    pub dr_frac: f64,
    /// Double-resonance search radius.
    pub k_radius: u32,
    /// Block radius for simple-resonance children.
    pub block1: f64,
    /// Base block radius for double-resonance children (grown automatically
    /// to host the translated parent block).
    pub block2: f64,
    pub grid_simple: usize,
    pub grid_double: usize,
    /// Bound on `|E_child − E_parent|` over the child grid.
    pub child_tol: f64,
    /// `δ_{n−1}`: margin basis of the parent's trimmed codomain region.
    pub delta_margin: f64,
    /// `δ_n`: overlap scale and children's modified-codomain margin basis.
    pub delta_here: f64,
    /// `δ_{n+1}`: Type-3 gap threshold and critical-end extension.
    pub delta_next: f64,
    /// Small-derivative threshold of the Morse checks.
    pub morse_small: f64,
    /// Pair-gap ceiling of the quadratic-separation certificate.
    pub cert_gap: f64,
    /// Residual tolerance of the double-resonance bisection.
    pub residual_tol: f64,
    pub select_halfwidth: f64,
    pub lambda_halfwidth: f64,
    pub crossing_tol: f64,
}

impl GenStep {
    fn resolve_opts(&self) -> ResolveOpts {
        ResolveOpts {
            grid_n: self.grid_double,
            select_halfwidth: self.select_halfwidth,
            lambda_halfwidth: self.lambda_halfwidth,
            crossing_tol: self.crossing_tol,
            exclusion_steps: 10,
        }
    }

    /// Cover parameters for one parent region. The double-window radius
    /// carries an absolute floor of `30·δ_next` so that samples in adjacent
    /// simple intervals stay far outside the separation window of the
    /// resolved pair.
    fn cover_for(&self, region: Interval) -> CoverParams {
        let width = self.width_frac * region.len();
        let dr = (self.dr_frac * region.len()).max(30.0 * self.delta_next);
        let overlap = (3.0 * self.delta_here).min(0.2 * width).min(0.2 * dr);
        CoverParams { width, overlap, double_radius: dr, k_radius: self.k_radius }
    }
}

/// Per-parent summary of one generation step.
#[derive(Debug, Clone, Serialize)]
pub struct ParentReport {
    pub parent: CurveId,
    pub children: Vec<CurveId>,
    pub cover_count: usize,
    pub doubles_found: usize,
    pub doubles_covered: usize,
    /// Codomain-covering check: shortfalls at the top and bottom (0 = pass),
    /// `None` where the corresponding end is critical (vacuous).
    pub h5_top_shortfall: Option<f64>,
    pub h5_bottom_shortfall: Option<f64>,
    pub max_child_deviation: f64,
}

impl ParentReport {
    pub fn h5_ok(&self) -> bool {
        self.h5_top_shortfall.map_or(true, |s| s <= 0.0)
            && self.h5_bottom_shortfall.map_or(true, |s| s <= 0.0)
    }
}

/// Margin caps as fractions of the codomain: the printed margins `f·δ_prev`
/// presume codomains far wider than the resonance widths, which finite-scale
/// runs do not satisfy. The cover is built over the tighter region (`9/8`
/// margins, capped lower) and the covering predicate compares the wider
/// `5/4`-margined codomains, so a strict slack survives the cap.
pub const REGION_CAP_FRAC: f64 = 0.03;
pub const MARGIN_CAP_FRAC: f64 = 0.06;

/// Modified codomain of a curve with margin factor `f` (`9/8` or `5/4`):
/// trimmed by `min(f·δ_prev, cap_frac·|J|)` at non-critical ends, extended by
/// `2·δ_here` at critical ends. Type-3 members use the pair-level region.
pub fn modified_codomain_capped(
    tree: &RellichTree,
    id: CurveId,
    factor: f64,
    delta_prev: f64,
    delta_here: f64,
    cap_frac: f64,
) -> Interval {
    let c = &tree.curves[id];
    let (lo, hi, min_crit, max_crit) = match &c.kind {
        CurveKind::Type3 { brother, .. } => {
            let b = &tree.curves[*brother];
            let (lo, hi) = (
                c.codomain.lo.min(b.codomain.lo),
                c.codomain.hi.max(b.codomain.hi),
            );
            (lo, hi, false, false)
        }
        CurveKind::Root => (c.codomain.lo, c.codomain.hi, true, true),
        CurveKind::Type1 => (c.codomain.lo, c.codomain.hi, false, false),
        CurveKind::Type2 { is_minimum, .. } => {
            (c.codomain.lo, c.codomain.hi, *is_minimum, !*is_minimum)
        }
    };
    let m = (factor * delta_prev).min(cap_frac * (hi - lo));
    let new_lo = if min_crit { lo - 2.0 * delta_here } else { lo + m };
    let new_hi = if max_crit { hi + 2.0 * delta_here } else { hi - m };
    Interval::new(new_lo, new_hi)
}

/// The `5/4`-margined codomain used by the covering predicate.
pub fn modified_codomain(
    tree: &RellichTree,
    id: CurveId,
    factor: f64,
    delta_prev: f64,
    delta_here: f64,
) -> Interval {
    modified_codomain_capped(tree, id, factor, delta_prev, delta_here, MARGIN_CAP_FRAC)
}

fn branch_deviation(ops: &OperatorParams, parent: &RellichCurve, b: &TrackedBranch) -> f64 {
    let mut dev = 0.0f64;
    for (t, v) in b.thetas.iter().zip(&b.values) {
        if let Some(p) = parent.eval_interp(*t) {
            dev = dev.max((v - p).abs());
        } else if let CurveKind::Root = parent.kind {
            dev = dev.max((v - ops.potential.v(crate::lattice::reduce_mod1(*t))).abs());
        }
    }
    dev
}

/// Preimage of the energy interval `j` under the two pieces of `source`,
/// merged across the critical point when `j` reaches a critical value.
/// Returns 1 or 2 lift intervals.
fn preimage_components(source: &RellichCurve, j: Interval) -> Result<Vec<Interval>> {
    let jj = j.intersect(&source.codomain);
    if jj.len() <= 0.0 {
        return Err(Error::GenerationInvalid(format!(
            "cover interval [{}, {}] misses the source codomain",
            j.lo, j.hi
        )));
    }
    let tol = 1e-12 * (1.0 + source.codomain.hi.abs());
    let m_lo = source.minus.invert(jj.hi).unwrap();
    let m_hi = source.minus.invert(jj.lo).unwrap();
    let p_lo = source.plus.invert(jj.lo).unwrap();
    let p_hi = source.plus.invert(jj.hi).unwrap();
    let minus_iv = Interval::new(m_lo, m_hi);
    let plus_iv = Interval::new(p_lo, p_hi);

    let touches_max = source.max_is_critical() && jj.hi >= source.codomain.hi - tol;
    let touches_min = source.min_is_critical() && jj.lo <= source.codomain.lo + tol;

    if touches_min {
        // pieces meet at the minimum: minus ends where plus begins
        if (source.minus.domain().hi - source.plus.domain().lo).abs() < 1e-9 {
            return Ok(vec![Interval::new(minus_iv.lo, plus_iv.hi)]);
        }
    }
    if touches_max {
        // pieces meet at the maximum: plus ends where minus begins, possibly
        // across the torus seam (plus ends one period up)
        if (source.plus.domain().hi - source.minus.domain().lo).abs() < 1e-9 {
            return Ok(vec![Interval::new(plus_iv.lo, minus_iv.hi)]);
        }
        if (source.plus.domain().hi - 1.0 - source.minus.domain().lo).abs() < 1e-9 {
            return Ok(vec![Interval::new(plus_iv.lo - 1.0, minus_iv.hi)]);
        }
    }
    Ok(vec![minus_iv, plus_iv])
}

struct BuiltChild {
    minus: MonotonePiece,
    plus: MonotonePiece,
    codomain: Interval,
    trimmed: f64,
    critical: Option<f64>,
    deviation: f64,
}

fn build_child_from_branches(
    ops: &OperatorParams,
    parent: &RellichCurve,
    branches: &[TrackedBranch],
    step: &GenStep,
    enforce_tol: bool,
) -> Result<BuiltChild> {
    let mut deviation = 0.0f64;
    for b in branches {
        deviation = deviation.max(branch_deviation(ops, parent, b));
        let rep = morse_check(&b.thetas, &b.d1, &b.d2, step.morse_small);
        if !rep.ok {
            return Err(Error::GenerationInvalid(format!(
                "child violates the Morse condition at θ = {} (|E''| = {})",
                rep.worst_theta, rep.worst_d2
            )));
        }
    }
    if enforce_tol && deviation > step.child_tol {
        return Err(Error::GenerationInvalid(format!(
            "child deviates from its parent by {deviation:e} > {:e}",
            step.child_tol
        )));
    }
    let split = monotonicity_split(branches, step.cert_gap).map_err(|e| {
        Error::GenerationInvalid(format!("monotonicity split failed: {e}"))
    })?;
    let adj = domain_adjust(&split.minus, &split.plus)
        .map_err(|e| Error::GenerationInvalid(format!("domain adjustment failed: {e}")))?;
    Ok(BuiltChild {
        minus: adj.minus,
        plus: adj.plus,
        codomain: adj.codomain,
        trimmed: adj.trimmed,
        critical: split.critical,
        deviation,
    })
}

fn classify_single(child: &BuiltChild) -> CurveKind {
    match child.critical {
        None => CurveKind::Type1,
        Some(t) => {
            // minimum iff the critical value sits at the bottom of the image
            let at = child
                .minus
                .eval_lift(t)
                .or_else(|| child.plus.eval_lift(t))
                .unwrap_or(child.codomain.lo);
            CurveKind::Type2 {
                critical: t,
                is_minimum: (at - child.codomain.lo).abs() < (at - child.codomain.hi).abs(),
            }
        }
    }
}

/// Turn a resolved branch pair into two curves (brothers or two Type-2
/// curves, depending on the adjusted gap), register them in the tree and
/// return their ids `(lower, upper)`.
#[allow(clippy::too_many_arguments)]
fn register_pair(
    ops: &OperatorParams,
    tree: &mut RellichTree,
    parent: &RellichCurve,
    res: &DoubleResolution,
    res_class: u8,
    block_radius: f64,
    origin: DoubleOrigin,
    step: &GenStep,
) -> Result<(CurveId, CurveId)> {
    let mk_branch = |vals: &super::BranchSamples| TrackedBranch {
        thetas: res.thetas.clone(),
        values: vals.values.clone(),
        d1: vals.d1.clone(),
        d2: vals.d2.clone(),
    };
    let upper = build_child_from_branches(ops, parent, &[mk_branch(&res.upper)], step, false)?;
    let lower = build_child_from_branches(ops, parent, &[mk_branch(&res.lower)], step, false)?;
    // the sampled codomain gap can overshoot a grid-straddled crossing, so
    // the bisection-refined gap at θ_s decides the classification
    let gap = (upper.codomain.lo - lower.codomain.hi)
        .min(res.gap_at_crossing.unwrap_or(f64::INFINITY))
        .max(0.0);
    let is_type3 = gap <= 3.0 * step.delta_next;

    let scale = step.scale_to;
    let base = |c: BuiltChild, kind: CurveKind| RellichCurve {
        id: 0,
        parent: Some(parent.id),
        scale,
        res_class,
        block_radius,
        minus: c.minus,
        plus: c.plus,
        codomain: c.codomain,
        kind,
        trimmed: c.trimmed,
        origin_double: Some(origin.clone()),
        interlacing: None,
    };

    let lower_kind = if is_type3 {
        CurveKind::Type3 {
            brother: usize::MAX, // patched below
            critical: lower.critical.unwrap_or(res.theta_minus_lift),
            is_minimum: false,
            gap,
        }
    } else {
        classify_single(&lower)
    };
    let upper_kind = if is_type3 {
        CurveKind::Type3 {
            brother: usize::MAX,
            critical: upper.critical.unwrap_or(res.theta_minus_lift),
            is_minimum: true,
            gap,
        }
    } else {
        classify_single(&upper)
    };

    let lower_id = tree.add(base(lower, lower_kind));
    let mut upper_curve = base(upper, upper_kind);
    upper_curve.interlacing = Some(InterlacingPair {
        thetas: res.thetas.clone(),
        lambda_plus: res.lambda_plus.clone(),
        lambda_minus: res.lambda_minus.clone(),
        theta_s: res.theta_s.unwrap_or(f64::NAN),
        sep_constant: res.sep_constant,
        level_crossing: res.level_crossing,
    });
    let upper_id = tree.add(upper_curve);
    if is_type3 {
        if let CurveKind::Type3 { brother, .. } = &mut tree.curves[lower_id].kind {
            *brother = upper_id;
        }
        if let CurveKind::Type3 { brother, .. } = &mut tree.curves[upper_id].kind {
            *brother = lower_id;
        }
    }
    Ok((lower_id, upper_id))
}

/// Build the next generation below the given parents.
///
/// Per parent (Type-3 pairs are processed jointly at their upper member):
/// find double resonances, cover the trimmed codomain, continue a child
/// branch on every simple interval, resolve every double window into a
/// branch pair, run the straddle pathway on a Type-3 pair's gap interval,
/// domain-adjust and classify everything, and evaluate the codomain-covering
/// predicate. Children violating the Morse condition or the two-monotonicity
/// structure abort with [`Error::GenerationInvalid`].
pub fn build_generation(
    ops: &OperatorParams,
    tree: &mut RellichTree,
    parents: &[CurveId],
    step: &GenStep,
) -> Result<Vec<ParentReport>> {
    let mut reports = Vec::new();
    for &pid in parents {
        let parent = tree.curves[pid].clone();
        // pairs are handled once, from the upper brother
        let lower_twin: Option<RellichCurve> = match &parent.kind {
            CurveKind::Type3 { brother, is_minimum, .. } => {
                if !*is_minimum {
                    continue;
                }
                Some(tree.curves[*brother].clone())
            }
            _ => None,
        };

        let span = match &lower_twin {
            Some(low) => parent.codomain.hi - low.codomain.lo,
            None => parent.codomain.len(),
        };
        // region trim sized so that the covering predicate keeps slack: the
        // parent's 5/4-margin must absorb the trim, the children's own
        // margins, and the tracking/adjustment edge losses
        let m_parent = (1.25 * step.delta_margin).min(MARGIN_CAP_FRAC * span);
        let m = (m_parent - 1.25 * step.delta_here - 10.0 * step.child_tol)
            .clamp(0.0, REGION_CAP_FRAC * span);
        let region = match (&parent.kind, &lower_twin) {
            (CurveKind::Root, _) => parent.codomain,
            (CurveKind::Type1, _) => parent.codomain.grow(-m),
            (CurveKind::Type2 { is_minimum, .. }, _) => {
                if *is_minimum {
                    Interval::new(parent.codomain.lo, parent.codomain.hi - m)
                } else {
                    Interval::new(parent.codomain.lo + m, parent.codomain.hi)
                }
            }
            (CurveKind::Type3 { .. }, Some(low)) => {
                Interval::new(low.codomain.lo + m, parent.codomain.hi - m)
            }
            (CurveKind::Type3 { .. }, None) => unreachable!("upper twin carries the pair"),
        };
        if region.len() <= 0.0 {
            return Err(Error::GenerationInvalid(format!(
                "curve {pid}: codomain region degenerate after margin trim"
            )));
        }
        let cover_params = step.cover_for(region);
        let forced = lower_twin.as_ref().map(|low| {
            Interval::new(
                low.codomain.hi - 0.5 * cover_params.width - cover_params.overlap,
                parent.codomain.lo + 0.5 * cover_params.width + cover_params.overlap,
            )
        });

        // double resonances (per brother for pairs), deterministic order
        let mut doubles: Vec<(CurveId, DoubleResonance)> = Vec::new();
        for owner in std::iter::once(&parent).chain(lower_twin.iter()) {
            for dr in find_double_resonances(ops, owner, step.k_radius, step.residual_tol)? {
                doubles.push((owner.id, dr));
            }
        }
        let energies: Vec<f64> = doubles.iter().map(|(_, d)| d.e_k).collect();
        let cover = build_cover(region, &cover_params, &energies, forced)?;

        let mut children = Vec::new();
        let mut max_dev = 0.0f64;
        let mut doubles_covered = 0usize;
        for ci in &cover.intervals {
            match &ci.kind {
                CoverKind::Simple => {
                    let source: &RellichCurve = match &lower_twin {
                        None => &parent,
                        Some(low) => {
                            // pick the brother whose codomain holds this interval
                            if ci.lo >= parent.codomain.lo - 1e-12 {
                                &parent
                            } else {
                                low
                            }
                        }
                    };
                    let comps = preimage_components(source, ci.interval())?;
                    let j_eff = ci.interval().intersect(&source.codomain);
                    let mut branches = Vec::new();
                    for comp in &comps {
                        let theta0 = comp.mid();
                        let e0 = source.eval_exact(ops, theta0)?;
                        // the seed may sit at an end of the energy range
                        // (critical-end intervals), so size the window from
                        // the actual span around it
                        let span = (j_eff.hi - e0).abs().max((e0 - j_eff.lo).abs());
                        let window = 1.25 * span + 10.0 * step.child_tol;
                        let block = crate::lattice::make_cube(step.block1, ops.dim())?;
                        let (branch, _rep) = super::track_branch(
                            ops,
                            &block,
                            *comp,
                            (theta0, e0),
                            step.grid_simple,
                            window,
                        )
                        .map_err(|e| {
                            Error::GenerationInvalid(format!(
                                "curve {} (kind {}), interval [{:.6}, {:.6}], component \
                                 [{:.6}, {:.6}], seed ({theta0:.6}, {e0:.6}), window {window:.3e}: {e}",
                                source.id,
                                source.kind.tag(),
                                ci.lo,
                                ci.hi,
                                comp.lo,
                                comp.hi
                            ))
                        })?;
                        branches.push(branch);
                    }
                    let built =
                        build_child_from_branches(ops, source, &branches, step, true)?;
                    max_dev = max_dev.max(built.deviation);
                    let kind = classify_single(&built);
                    // children of pair members keep the two-site support of
                    // the pair, so the deflation origin is inherited
                    let id = tree.add(RellichCurve {
                        id: 0,
                        parent: Some(source.id),
                        scale: step.scale_to,
                        res_class: 1,
                        block_radius: step.block1,
                        minus: built.minus,
                        plus: built.plus,
                        codomain: built.codomain,
                        kind,
                        trimmed: built.trimmed,
                        origin_double: source.origin_double.clone(),
                        interlacing: None,
                    });
                    children.push(id);
                }
                CoverKind::Double(i) => {
                    doubles_covered += 1;
                    let (owner_id, dres) = &doubles[*i];
                    let owner = if *owner_id == parent.id {
                        &parent
                    } else {
                        lower_twin.as_ref().expect("double owner is the pair")
                    };
                    let b2 = step
                        .block2
                        .max(owner.block_radius + norm1(&dres.k) as f64 + 2.0);
                    let res = resolve_double(
                        ops,
                        owner,
                        dres,
                        ci.interval(),
                        b2,
                        &step.resolve_opts(),
                    )?;
                    let origin = DoubleOrigin {
                        k: dres.k.clone(),
                        ancestor: if owner.scale == 0 { None } else { Some(owner.id) },
                    };
                    let (lo_id, hi_id) =
                        register_pair(ops, tree, owner, &res, 2, b2, origin, step)?;
                    children.push(lo_id);
                    children.push(hi_id);
                }
                CoverKind::Straddle => {
                    let low = lower_twin.as_ref().expect("straddle only below a pair");
                    let origin = parent.origin_double.clone().ok_or_else(|| {
                        Error::GenerationInvalid(
                            "Type-3 pair lacks its double-resonance origin".into(),
                        )
                    })?;
                    let anc_r = origin
                        .ancestor
                        .map(|a| tree.curves[a].block_radius)
                        .unwrap_or(0.0);
                    let spec = StraddleSpec {
                        window: ci.interval(),
                        block_radius: step
                            .block1
                            .max(anc_r + norm1(&origin.k) as f64 + 2.0),
                        origin: origin.clone(),
                    };
                    let res = resolve_straddle(
                        ops,
                        tree,
                        &parent,
                        low,
                        &spec,
                        &step.resolve_opts(),
                    )?;
                    let (lo_id, hi_id) =
                        register_pair(ops, tree, &parent, &res, 1, spec.block_radius, origin, step)?;
                    children.push(lo_id);
                    children.push(hi_id);
                }
            }
        }

        // codomain-covering predicate (vacuous at critical ends)
        let parent_mod = modified_codomain(tree, pid, 1.25, step.delta_margin, step.delta_here);
        let mut child_sup = f64::NEG_INFINITY;
        let mut child_inf = f64::INFINITY;
        for &cid in &children {
            let jc = modified_codomain(tree, cid, 1.25, step.delta_here, step.delta_next);
            child_sup = child_sup.max(jc.hi);
            child_inf = child_inf.min(jc.lo);
        }
        let pair_max_crit = parent.max_is_critical();
        let pair_min_crit = match &lower_twin {
            Some(low) => low.min_is_critical(),
            None => parent.min_is_critical(),
        };
        let h5_top = if pair_max_crit || children.is_empty() {
            None
        } else {
            Some(parent_mod.hi - child_sup)
        };
        let h5_bottom = if pair_min_crit || children.is_empty() {
            None
        } else {
            Some(child_inf - parent_mod.lo)
        };

        reports.push(ParentReport {
            parent: pid,
            children,
            cover_count: cover.count(),
            doubles_found: doubles.len(),
            doubles_covered,
            h5_top_shortfall: h5_top,
            h5_bottom_shortfall: h5_bottom,
            max_child_deviation: max_dev,
        });
    }
    Ok(reports)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn cover_plain_tiling() {
        let region = Interval::new(0.0, 1.0);
        let params =
            CoverParams { width: 0.1, overlap: 0.003, double_radius: 0.05, k_radius: 1 };
        let cover = build_cover(region, &params, &[], None).unwrap();
        assert!(cover.count() >= 10 && cover.count() <= 21, "count {}", cover.count());
        // exact overlaps, full coverage
        let iv = &cover.intervals;
        assert!((iv[0].lo - 0.0).abs() < 1e-14);
        assert!((iv.last().unwrap().hi - 1.0).abs() < 1e-14);
        for w in iv.windows(2) {
            assert!(
                (w[0].hi - w[1].lo - 0.003).abs() < 1e-12,
                "overlap {} != 0.003",
                w[0].hi - w[1].lo
            );
            let len = w[0].hi - w[0].lo;
            assert!(len <= 0.2 + 1e-12 && len >= 0.05);
        }
    }

    #[test]
    fn cover_with_one_double_window() {
        let region = Interval::new(0.0, 1.0);
        let params =
            CoverParams { width: 0.1, overlap: 0.003, double_radius: 0.04, k_radius: 1 };
        let cover = build_cover(region, &params, &[0.47], None).unwrap();
        let dbl: Vec<_> = cover
            .intervals
            .iter()
            .filter(|c| matches!(c.kind, CoverKind::Double(_)))
            .collect();
        assert_eq!(dbl.len(), 1);
        assert!((dbl[0].lo - 0.43).abs() < 1e-14);
        assert!((dbl[0].hi - 0.51).abs() < 1e-14);
        // junction overlaps are exact
        for w in cover.intervals.windows(2) {
            assert!((w[0].hi - w[1].lo - 0.003).abs() < 1e-12);
        }
        // count bound: simple tiles + doubles
        assert!(cover.count() as f64 <= 2.0 * region.len() / params.width + 1.0 + 1.0);
    }

    #[test]
    fn cover_rejects_colliding_doubles() {
        let region = Interval::new(0.0, 1.0);
        let params =
            CoverParams { width: 0.1, overlap: 0.003, double_radius: 0.04, k_radius: 1 };
        let err = build_cover(region, &params, &[0.5, 0.55], None).unwrap_err();
        assert!(matches!(err, Error::CoverInfeasible(_)));
    }

    #[test]
    fn cover_drops_boundary_doubles() {
        let region = Interval::new(0.0, 1.0);
        let params =
            CoverParams { width: 0.1, overlap: 0.003, double_radius: 0.04, k_radius: 1 };
        let cover = build_cover(region, &params, &[0.01], None).unwrap();
        assert!(cover
            .intervals
            .iter()
            .all(|c| matches!(c.kind, CoverKind::Simple)));
    }
}
