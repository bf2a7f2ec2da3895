//! Double resonances: detection of phases where a curve meets its own
//! `k·ω`-translate, resolution of the resonance into a sorted branch pair
//! `E_> ≥ E_<` over the joined domain, the auxiliary interlacing curves `λ±`
//! from rank-one compressions, the crossing point `θ_s`, and the derivative
//! formulas that transfer the Morse condition to the branch pair.
//!
//! The same machinery re-resolves a near-collapsed Type-3 brother pair on the
//! interval straddling its gap (the straddle pathway), with the deflation
//! family taken from the scale where the double resonance originated.

use serde::Serialize;

use crate::error::Error;
use crate::lattice::{make_cube, norm1, reduce_mod1, LatticeBlock, Site, TorusPoint};
use crate::operator::{assemble, OperatorParams};
use crate::par::maybe_par_map;
use crate::spectral::{eigh, symmetric_eigen};
use crate::Result;

use super::{
    fh_from_spectral, intersect_on_torus, CurveKind, DoubleOrigin, Interval, RellichCurve,
    RellichTree,
};

/// A phase where the curve collides with its `k·ω`-translate:
/// `E(θ_{k,−}) = E(θ_{k,−} + k·ω)` with `θ_{k,−}` on the decreasing piece and
/// the translate on the increasing piece.
#[derive(Debug, Clone, Serialize)]
pub struct DoubleResonance {
    pub k: Site,
    /// The colliding phase on the decreasing piece (torus coordinates).
    pub theta_minus: f64,
    /// The common energy.
    pub e_k: f64,
    /// `E'(θ_{k,−})` on the decreasing side (negative).
    pub deriv_minus: f64,
    /// `E'(θ_{k,+})` on the increasing side (positive).
    pub deriv_plus: f64,
    /// `max(|E'₊|, |E'₋|) / min(|E'₊|, |E'₋|) ≥ 1`.
    pub r_ratio: f64,
    /// `|E(θ_{k,−}) − E(θ_{k,−} + k·ω)|` after bisection.
    pub residual: f64,
}

fn curve_deriv(ops: &OperatorParams, curve: &RellichCurve, theta: f64) -> Result<f64> {
    if let CurveKind::Root = curve.kind {
        return Ok(ops.potential.dv(reduce_mod1(theta)));
    }
    let target = curve
        .eval_interp(theta)
        .ok_or_else(|| Error::InvalidArgument(format!("phase {theta} outside curve domain")))?;
    let block = curve.block(ops.dim())?;
    Ok(super::fh_derivatives(ops, &block, theta, target)?.d1)
}

/// Scan all `0 < ‖k‖₁ ≤ k_radius` for double resonances of the curve.
///
/// The defining equation `E(θ) = E(θ + k·ω)` with `θ` on the decreasing and
/// `θ + k·ω` on the increasing piece is solved by bisection on the strictly
/// decreasing difference. Roots are kept when the residual after bisection is
/// at most `residual_tol`. The empty list is a valid outcome.
pub fn find_double_resonances(
    ops: &OperatorParams,
    curve: &RellichCurve,
    k_radius: u32,
    residual_tol: f64,
) -> Result<Vec<DoubleResonance>> {
    let d = ops.dim();
    let ball = make_cube(k_radius as f64, d)?;
    let minus_dom = curve.minus.domain();
    let plus_dom = curve.plus.domain();
    let mut out = Vec::new();

    for k in ball.sites() {
        if norm1(k) == 0 {
            continue;
        }
        let kshift = ops.freq.dot(k);
        // θ with θ ∈ I₋ and θ + k·ω ∈ I₊ (on the torus)
        let candidates = intersect_on_torus(minus_dom, plus_dom.shift(-kshift));
        for cand in candidates {
            if cand.len() < 1e-13 {
                continue;
            }
            let g = |t: f64| -> Result<f64> {
                Ok(curve.eval_exact(ops, t)? - curve.eval_exact(ops, t + kshift)?)
            };
            let (mut lo, mut hi) = (cand.lo, cand.hi);
            let (glo, ghi) = (g(lo)?, g(hi)?);
            // decreasing difference: root iff it changes sign downward
            if !(glo >= 0.0 && ghi <= 0.0) {
                continue;
            }
            for _ in 0..80 {
                let mid = 0.5 * (lo + hi);
                if g(mid)? >= 0.0 {
                    lo = mid;
                } else {
                    hi = mid;
                }
                if hi - lo < 1e-15 {
                    break;
                }
            }
            let t = 0.5 * (lo + hi);
            let residual = g(t)?.abs();
            if residual > residual_tol {
                continue;
            }
            let e_k = curve.eval_exact(ops, t)?;
            let deriv_minus = curve_deriv(ops, curve, t)?;
            let deriv_plus = curve_deriv(ops, curve, t + kshift)?;
            let (a, b) = (deriv_plus.abs(), deriv_minus.abs());
            let r_ratio = if a.min(b) > 0.0 { a.max(b) / a.min(b) } else { f64::INFINITY };
            out.push(DoubleResonance {
                k: k.clone(),
                theta_minus: reduce_mod1(t),
                e_k,
                deriv_minus,
                deriv_plus,
                r_ratio,
                residual,
            });
        }
    }
    Ok(out)
}

/// Samples of one resolved branch over the joined domain.
#[derive(Debug, Clone, Serialize)]
pub struct BranchSamples {
    pub values: Vec<f64>,
    pub d1: Vec<f64>,
    pub d2: Vec<f64>,
    /// Mass on the origin-side deflation direction (normalized so that
    /// `mass_o² + mass_k² = 1`).
    pub mass_o: Vec<f64>,
    pub mass_k: Vec<f64>,
}

impl BranchSamples {
    fn new() -> Self {
        BranchSamples {
            values: Vec::new(),
            d1: Vec::new(),
            d2: Vec::new(),
            mass_o: Vec::new(),
            mass_k: Vec::new(),
        }
    }
}

/// A resolved pair: the sorted branches, the interlacing curves, the crossing
/// point and its separation data.
#[derive(Debug, Clone, Serialize)]
pub struct DoubleResolution {
    /// Grid in lift coordinates anchored at the decreasing piece.
    pub thetas: Vec<f64>,
    /// Lift of the anchor phase (`θ_{k,−}`, or the pair's critical point).
    pub theta_minus_lift: f64,
    pub upper: BranchSamples,
    pub lower: BranchSamples,
    /// `⟨ψ_>, V' ψ_<⟩` per grid point.
    pub cross_term: Vec<f64>,
    pub lambda_plus: Vec<f64>,
    pub lambda_minus: Vec<f64>,
    /// Root of `λ₊ − λ₋`, in the grid's lift coordinates.
    pub theta_s: Option<f64>,
    /// Measured constant `c` in `E_> − E_< ≥ c·|θ − θ_s|` (grid minimum,
    /// excluding the cells adjacent to `θ_s`).
    pub sep_constant: f64,
    /// Smallest branch gap on the grid.
    pub min_gap: f64,
    /// Worst violation of `E_< ≤ λ∓ ≤ E_>` (0 when clean).
    pub interlace_violation: f64,
    /// Whether `λ₊` increased and `λ₋` decreased at every grid step.
    pub lambda_monotone: bool,
    pub level_crossing: bool,
    /// Exact branch gap at `θ_s` (bisection-refined), when `θ_s` exists.
    pub gap_at_crossing: Option<f64>,
}

/// Options of the pair resolutions.
#[derive(Debug, Clone, Copy)]
pub struct ResolveOpts {
    pub grid_n: usize,
    /// Half-width of the energy window used to select the two branch
    /// eigenvalues around the parent predictions.
    pub select_halfwidth: f64,
    /// Half-width for the unique near-resonant eigenvalue of each compressed
    /// operator.
    pub lambda_halfwidth: f64,
    /// Branch gap at `θ_s` below this is classified as a level crossing.
    pub crossing_tol: f64,
    /// Grid steps around `θ_s` excluded from the separation statistic.
    pub exclusion_steps: usize,
}

impl Default for ResolveOpts {
    fn default() -> Self {
        ResolveOpts {
            grid_n: 512,
            select_halfwidth: 0.05,
            lambda_halfwidth: 0.05,
            crossing_tol: 1e-7,
            exclusion_steps: 10,
        }
    }
}

/// Deflation family of the compression: delta functions at the first scale,
/// embedded previous-scale eigenvectors afterwards.
enum Deflation {
    Delta { row_o: usize, row_k: usize },
    Embedded { ancestor_radius: f64, k: Site },
}

fn embed_vector(
    big: &LatticeBlock,
    small: &LatticeBlock,
    offset: &[i64],
    v: &[f64],
) -> Result<Vec<f64>> {
    let mut out = vec![0.0f64; big.len()];
    for (i, site) in small.sites().iter().enumerate() {
        let shifted: Site = site.iter().zip(offset).map(|(a, b)| a + b).collect();
        let row = big.row(&shifted).ok_or_else(|| {
            Error::InvalidArgument(format!(
                "embedded block leaves the host block at site {shifted:?}"
            ))
        })?;
        out[row] = v[i];
    }
    Ok(out)
}

/// Eigenvalues of `Q H Q` restricted to `Image(Q)` for `Q = Id − |w⟩⟨w|`,
/// realized without a basis completion: `Q H Q + c·|w⟩⟨w|` has the same
/// spectrum plus the single far-away eigenvalue `c`.
fn deflated_eigenvalues(h: &[f64], n: usize, w: &[f64], shift: f64) -> Result<Vec<f64>> {
    let mut hw = vec![0.0f64; n];
    for i in 0..n {
        let mut acc = 0.0;
        for j in 0..n {
            acc += h[i * n + j] * w[j];
        }
        hw[i] = acc;
    }
    let whw: f64 = w.iter().zip(&hw).map(|(a, b)| a * b).sum();
    let mut m = h.to_vec();
    for i in 0..n {
        for j in 0..n {
            m[i * n + j] += -hw[i] * w[j] - w[i] * hw[j] + (whw + shift) * w[i] * w[j];
        }
    }
    let (vals, _) = symmetric_eigen(&m, n)?;
    Ok(vals
        .into_iter()
        .filter(|v| (v - shift).abs() > 1e-6 * (1.0 + shift.abs()))
        .collect())
}

/// Eigenvalues of the operator with one site removed (compression by a
/// coordinate vector); preserves banded structure.
fn site_deleted_eigenvalues(h: &[f64], n: usize, row: usize) -> Result<Vec<f64>> {
    let m = n - 1;
    let mut sub = vec![0.0f64; m * m];
    for i in 0..m {
        let si = if i < row { i } else { i + 1 };
        for j in 0..m {
            let sj = if j < row { j } else { j + 1 };
            sub[i * m + j] = h[si * n + sj];
        }
    }
    let (vals, _) = symmetric_eigen(&sub, m)?;
    Ok(vals)
}

/// The eigenvalue nearest `center`, required to lie within `halfwidth`.
fn nearest_in_window(vals: &[f64], center: f64, halfwidth: f64) -> Result<f64> {
    let best = vals
        .iter()
        .copied()
        .min_by(|a, b| (a - center).abs().partial_cmp(&(b - center).abs()).unwrap())
        .ok_or_else(|| Error::InterlacingFailed("compressed spectrum is empty".into()))?;
    if (best - center).abs() > halfwidth {
        return Err(Error::InterlacingFailed(format!(
            "no compressed eigenvalue within {halfwidth:e} of {center:.6} (nearest at {best:.6})"
        )));
    }
    Ok(best)
}

struct ResolvedPoint {
    upper: (f64, f64, f64, f64, f64), // value, d1, d2, mass_o, mass_k
    lower: (f64, f64, f64, f64, f64),
    cross: f64,
    lambda_plus: f64,
    lambda_minus: f64,
}

/// Shared per-point machinery: select the two branch eigenvalues inside the
/// window, project onto the deflation directions, differentiate, and extract
/// the unique compressed eigenvalues.
#[allow(clippy::too_many_arguments)]
fn resolve_point_generic(
    ops: &OperatorParams,
    block: &LatticeBlock,
    t: f64,
    deflation: &Deflation,
    sel_lo: f64,
    sel_hi: f64,
    lam_center_minus: f64,
    lam_center_plus: f64,
    lambda_halfwidth: f64,
    pred_minus: f64,
    pred_plus: f64,
) -> Result<ResolvedPoint> {
    let theta = TorusPoint::new(t);
    let op = assemble(ops, block, theta);
    let spec = eigh(&op)?;
    // the two branch eigenvalues: nearest to each prediction, disambiguated
    // through the pair midpoint when both predictions pick the same level
    let halfwidth = 0.5 * (sel_hi - sel_lo);
    let center = 0.5 * (sel_hi + sel_lo);
    let near = |target: f64, skip: Option<usize>| -> Option<usize> {
        (0..spec.n)
            .filter(|&i| Some(i) != skip)
            .min_by(|&a, &b| {
                (spec.eigenvalues[a] - target)
                    .abs()
                    .partial_cmp(&(spec.eigenvalues[b] - target).abs())
                    .unwrap()
            })
    };
    let i1 = near(pred_minus, None)
        .ok_or_else(|| Error::InterlacingFailed("empty spectrum".into()))?;
    let mut i2 = near(pred_plus, None).unwrap();
    if i2 == i1 {
        i2 = near(center, Some(i1))
            .ok_or_else(|| Error::InterlacingFailed("one-dimensional spectrum".into()))?;
    }
    for (i, p) in [(i1, pred_minus), (i2, pred_plus)] {
        if (spec.eigenvalues[i] - p).abs() > halfwidth {
            return Err(Error::InterlacingFailed(format!(
                "branch eigenvalue {:.6} strays {:.3e} from its prediction {p:.6} at θ = {t:.6}",
                spec.eigenvalues[i],
                (spec.eigenvalues[i] - p).abs()
            )));
        }
    }
    let (ilo, ihi) = if spec.eigenvalues[i1] <= spec.eigenvalues[i2] {
        (i1, i2)
    } else {
        (i2, i1)
    };

    let d = ops.dim();
    let (w_o, w_k): (Vec<f64>, Vec<f64>) = match deflation {
        Deflation::Delta { row_o, row_k } => {
            let mut a = vec![0.0; spec.n];
            let mut b = vec![0.0; spec.n];
            a[*row_o] = 1.0;
            b[*row_k] = 1.0;
            (a, b)
        }
        Deflation::Embedded { ancestor_radius, k } => {
            let small = make_cube(*ancestor_radius, d)?;
            let sm_op = assemble(ops, &small, theta);
            let sm_spec = eigh(&sm_op)?;
            let km = sm_spec.nearest(pred_minus);
            let w_minus = embed_vector(block, &small, &vec![0; d], sm_spec.vector(km))?;
            let kshift = ops.freq.dot(k);
            let sp_op = assemble(ops, &small, TorusPoint::new(t + kshift));
            let sp_spec = eigh(&sp_op)?;
            let kp = sp_spec.nearest(pred_plus);
            let w_plus = embed_vector(block, &small, k, sp_spec.vector(kp))?;
            (w_minus, w_plus)
        }
    };

    let masses = |idx: usize| -> (f64, f64) {
        let psi = spec.vector(idx);
        let a: f64 = w_o.iter().zip(psi).map(|(x, y)| x * y).sum();
        let b: f64 = w_k.iter().zip(psi).map(|(x, y)| x * y).sum();
        let norm = (a * a + b * b).sqrt();
        if norm > 0.0 {
            (a / norm, b / norm)
        } else {
            (0.0, 0.0)
        }
    };
    let (alo, blo) = masses(ilo);
    let (ahi, bhi) = masses(ihi);
    let (d1lo, d2lo) = fh_from_spectral(ops, block, t, &spec, ilo);
    let (d1hi, d2hi) = fh_from_spectral(ops, block, t, &spec, ihi);

    let cross: f64 = {
        let pu = spec.vector(ihi);
        let pl = spec.vector(ilo);
        block
            .sites()
            .iter()
            .enumerate()
            .map(|(i, site)| ops.potential.dv(ops.freq.shift(t, site)) * pu[i] * pl[i])
            .sum()
    };

    // deflating the k-side yields λ₋ (origin-side level), deflating the
    // origin side yields λ₊
    let lam = |w: &[f64], delta_row: Option<usize>, center: f64| -> Result<f64> {
        let vals = match delta_row {
            Some(row) => site_deleted_eigenvalues(&op.matrix, spec.n, row)?,
            None => {
                let shift = 100.0 * (1.0 + spec.norm_bound());
                deflated_eigenvalues(&op.matrix, spec.n, w, shift)?
            }
        };
        nearest_in_window(&vals, center, lambda_halfwidth)
    };
    let (lambda_minus, lambda_plus) = match deflation {
        Deflation::Delta { row_o, row_k } => (
            lam(&w_k, Some(*row_k), lam_center_minus)?,
            lam(&w_o, Some(*row_o), lam_center_plus)?,
        ),
        Deflation::Embedded { .. } => (
            lam(&w_k, None, lam_center_minus)?,
            lam(&w_o, None, lam_center_plus)?,
        ),
    };

    Ok(ResolvedPoint {
        upper: (spec.eigenvalues[ihi], d1hi, d2hi, ahi, bhi),
        lower: (spec.eigenvalues[ilo], d1lo, d2lo, alo, blo),
        cross,
        lambda_plus,
        lambda_minus,
    })
}

/// Collect per-point results and derive the crossing/separation diagnostics.
fn finish_resolution<F>(
    thetas: Vec<f64>,
    anchor: f64,
    points: Vec<ResolvedPoint>,
    point_fn: F,
    opts: &ResolveOpts,
) -> Result<DoubleResolution>
where
    F: Fn(f64) -> Result<ResolvedPoint>,
{
    let grid_n = thetas.len();
    let mut upper = BranchSamples::new();
    let mut lower = BranchSamples::new();
    let mut cross_term = Vec::new();
    let mut lambda_plus = Vec::new();
    let mut lambda_minus = Vec::new();
    for p in points {
        let push = |bs: &mut BranchSamples, row: (f64, f64, f64, f64, f64)| {
            bs.values.push(row.0);
            bs.d1.push(row.1);
            bs.d2.push(row.2);
            bs.mass_o.push(row.3);
            bs.mass_k.push(row.4);
        };
        push(&mut upper, p.upper);
        push(&mut lower, p.lower);
        cross_term.push(p.cross);
        lambda_plus.push(p.lambda_plus);
        lambda_minus.push(p.lambda_minus);
    }

    let mut interlace_violation = 0.0f64;
    for i in 0..grid_n {
        for l in [lambda_plus[i], lambda_minus[i]] {
            interlace_violation = interlace_violation
                .max(lower.values[i] - l)
                .max(l - upper.values[i]);
        }
    }
    let mut lambda_monotone = true;
    for i in 1..grid_n {
        if lambda_plus[i] <= lambda_plus[i - 1] || lambda_minus[i] >= lambda_minus[i - 1] {
            lambda_monotone = false;
        }
    }

    let diff: Vec<f64> = lambda_plus.iter().zip(&lambda_minus).map(|(p, m)| p - m).collect();
    let mut theta_s = None;
    for i in 1..grid_n {
        if diff[i - 1] <= 0.0 && diff[i] > 0.0 {
            let (mut a, mut b) = (thetas[i - 1], thetas[i]);
            for _ in 0..60 {
                let mid = 0.5 * (a + b);
                let p = point_fn(mid)?;
                if p.lambda_plus - p.lambda_minus <= 0.0 {
                    a = mid;
                } else {
                    b = mid;
                }
            }
            theta_s = Some(0.5 * (a + b));
            break;
        }
    }

    let mut min_gap = f64::INFINITY;
    for i in 0..grid_n {
        min_gap = min_gap.min(upper.values[i] - lower.values[i]);
    }
    let (sep_constant, level_crossing, gap_at_crossing) = match theta_s {
        Some(ts) => {
            let h = (thetas[grid_n - 1] - thetas[0]) / (grid_n - 1) as f64;
            let excl = opts.exclusion_steps as f64 * h;
            let mut c = f64::INFINITY;
            for i in 0..grid_n {
                let dist = (thetas[i] - ts).abs();
                if dist > excl {
                    c = c.min((upper.values[i] - lower.values[i]) / dist);
                }
            }
            let gap_at_s = {
                let p = point_fn(ts)?;
                p.upper.0 - p.lower.0
            };
            (c, gap_at_s <= opts.crossing_tol, Some(gap_at_s))
        }
        None => (f64::INFINITY, false, None),
    };

    Ok(DoubleResolution {
        thetas,
        theta_minus_lift: anchor,
        upper,
        lower,
        cross_term,
        lambda_plus,
        lambda_minus,
        theta_s,
        sep_constant,
        min_gap,
        interlace_violation,
        lambda_monotone,
        level_crossing,
        gap_at_crossing,
    })
}

/// Resolve a double resonance of `parent` at translation `k` on the block
/// `Λ_block_radius`: the two sorted branches over the joined domain
/// `I_{k,∪}`, their interlacing curves `λ∓`, the crossing `θ_s`, and the
/// measured separation constant.
pub fn resolve_double(
    ops: &OperatorParams,
    parent: &RellichCurve,
    dres: &DoubleResonance,
    window: Interval,
    block_radius: f64,
    opts: &ResolveOpts,
) -> Result<DoubleResolution> {
    let d = ops.dim();
    let block = make_cube(block_radius, d)?;
    let kshift = ops.freq.dot(&dres.k);

    let wlo = window.lo.max(parent.codomain.lo);
    let whi = window.hi.min(parent.codomain.hi);
    let t0 = parent
        .minus
        .lift(dres.theta_minus)
        .ok_or_else(|| Error::InvalidArgument("θ_{k,-} not on the decreasing piece".into()))?;
    let m_a = parent.minus.invert(whi).unwrap_or(t0);
    let m_b = parent.minus.invert(wlo).unwrap_or(t0);
    let tp0 = parent
        .plus
        .lift(dres.theta_minus + kshift)
        .ok_or_else(|| Error::InvalidArgument("θ_{k,+} not on the increasing piece".into()))?;
    let p_a = parent.plus.invert(wlo).unwrap_or(tp0);
    let p_b = parent.plus.invert(whi).unwrap_or(tp0);
    let shift_back = t0 - tp0;
    let lo = m_a.min(p_a + shift_back);
    let hi = m_b.max(p_b + shift_back);
    if !(lo < t0 && t0 < hi) {
        return Err(Error::InvalidArgument(
            "joined double-resonance domain does not contain θ_{k,-}".into(),
        ));
    }

    let deflation = match &parent.kind {
        CurveKind::Root => {
            let row_o = block
                .row(&vec![0; d])
                .ok_or_else(|| Error::InvalidArgument("block does not contain the origin".into()))?;
            let row_k = block.row(&dres.k).ok_or_else(|| {
                Error::InvalidArgument(format!("block does not contain k = {:?}", dres.k))
            })?;
            Deflation::Delta { row_o, row_k }
        }
        _ => {
            let r = parent.block_radius;
            if block_radius < r + norm1(&dres.k) as f64 {
                return Err(Error::InvalidArgument(format!(
                    "block radius {block_radius} cannot host the translated parent block \
                     (parent radius {r}, ‖k‖₁ = {})",
                    norm1(&dres.k)
                )));
            }
            Deflation::Embedded { ancestor_radius: r, k: dres.k.clone() }
        }
    };

    let grid_n = opts.grid_n.max(32);
    let thetas: Vec<f64> = (0..grid_n)
        .map(|i| lo + (hi - lo) * i as f64 / (grid_n - 1) as f64)
        .collect();

    let predict_minus = |t: f64| -> f64 {
        parent
            .minus
            .eval_lift(t)
            .unwrap_or_else(|| dres.e_k + dres.deriv_minus * (t - t0))
    };
    let predict_plus = |t: f64| -> f64 {
        parent
            .plus
            .eval_lift(t - shift_back)
            .unwrap_or_else(|| dres.e_k + dres.deriv_plus * (t - t0))
    };

    let point = |t: f64| -> Result<ResolvedPoint> {
        let (pm, pp) = (predict_minus(t), predict_plus(t));
        resolve_point_generic(
            ops,
            &block,
            t,
            &deflation,
            pm.min(pp) - opts.select_halfwidth,
            pm.max(pp) + opts.select_halfwidth,
            pm,
            pp,
            opts.lambda_halfwidth,
            pm,
            pp,
        )
    };

    let results: Vec<Result<ResolvedPoint>> = maybe_par_map(&thetas, |&t| point(t));
    let mut points = Vec::with_capacity(grid_n);
    for p in results {
        points.push(p?);
    }
    finish_resolution(thetas, t0, points, point, opts)
}

/// Straddle resolution of a Type-3 brother pair on the interval spanning its
/// collapsed gap.
#[derive(Debug, Clone)]
pub struct StraddleSpec {
    /// The straddling energy interval.
    pub window: Interval,
    /// Host block radius.
    pub block_radius: f64,
    /// Deflation origin (inherited from the double resonance that created
    /// the pair).
    pub origin: DoubleOrigin,
}

/// Re-resolve a Type-3 pair `upper`/`lower` across its gap: two branch
/// eigenvalues of `H_Λ(θ)` on the joined preimage of the straddle window,
/// interlaced by the compressions against the origin's deflation family.
pub fn resolve_straddle(
    ops: &OperatorParams,
    tree: &RellichTree,
    upper: &RellichCurve,
    lower: &RellichCurve,
    spec: &StraddleSpec,
    opts: &ResolveOpts,
) -> Result<DoubleResolution> {
    let d = ops.dim();
    let block = make_cube(spec.block_radius, d)?;
    let w = spec.window;

    // preimage of the window under the V-shaped upper brother
    let up_hi = w.hi.min(upper.codomain.hi);
    let u_lo = upper.minus.invert(up_hi).unwrap_or(upper.minus.domain().hi);
    let u_hi = upper.plus.invert(up_hi).unwrap_or(upper.plus.domain().lo);
    // preimage under the Λ-shaped lower brother
    let low_lo = w.lo.max(lower.codomain.lo);
    let l_lo = lower.plus.invert(low_lo).unwrap_or(lower.plus.domain().lo);
    let l_hi = lower.minus.invert(low_lo).unwrap_or(lower.minus.domain().hi);

    // align the lower interval's lift with the upper one
    let mid_u = 0.5 * (u_lo + u_hi);
    let mut mid_l = 0.5 * (l_lo + l_hi);
    let mut offset = 0.0;
    while mid_l + offset < mid_u - 0.5 {
        offset += 1.0;
    }
    while mid_l + offset > mid_u + 0.5 {
        offset -= 1.0;
    }
    mid_l += offset;
    let lo = u_lo.min(l_lo + offset);
    let hi = u_hi.max(l_hi + offset);
    if !(hi > lo) {
        return Err(Error::InvalidArgument("straddle preimage degenerate".into()));
    }
    let anchor = 0.5 * (mid_u + mid_l);

    let deflation = match spec.origin.ancestor {
        None => {
            let row_o = block
                .row(&vec![0; d])
                .ok_or_else(|| Error::InvalidArgument("block does not contain the origin".into()))?;
            let row_k = block.row(&spec.origin.k).ok_or_else(|| {
                Error::InvalidArgument(format!(
                    "block does not contain k = {:?}",
                    spec.origin.k
                ))
            })?;
            Deflation::Delta { row_o, row_k }
        }
        Some(aid) => Deflation::Embedded {
            ancestor_radius: tree.curves[aid].block_radius,
            k: spec.origin.k.clone(),
        },
    };

    let grid_n = opts.grid_n.max(32);
    let thetas: Vec<f64> = (0..grid_n)
        .map(|i| lo + (hi - lo) * i as f64 / (grid_n - 1) as f64)
        .collect();
    let center = w.mid();
    let half = 0.5 * w.len() + opts.select_halfwidth;

    let point = |t: f64| -> Result<ResolvedPoint> {
        resolve_point_generic(
            ops,
            &block,
            t,
            &deflation,
            center - half,
            center + half,
            center,
            center,
            half,
            center,
            center,
        )
    };
    let results: Vec<Result<ResolvedPoint>> = maybe_par_map(&thetas, |&t| point(t));
    let mut points = Vec::with_capacity(grid_n);
    for p in results {
        points.push(p?);
    }
    finish_resolution(thetas, anchor, points, point, opts)
}

/// Residual report of the branch derivative formulas.
#[derive(Debug, Clone, Serialize)]
pub struct DerivReport {
    /// Signed slope ratio `r = −E'₊/E'₋` at `θ_{k,−}` (positive).
    pub r_signed: f64,
    /// Worst `|E' − (A² − r·B²)·E'₋(θ)|` over the admitted samples, per
    /// branch (each branch with its own masses).
    pub max_residual_upper: f64,
    pub max_residual_lower: f64,
    /// Sign-law checks `sign(E'') = sign(E − ℰ)` at small-`|E'|` samples.
    pub sign_law_checked: usize,
    pub sign_law_violations: usize,
    /// Median of `E'' / (2⟨ψ, V'Ψ⟩²/(E − ℰ))` over admitted samples.
    pub dominant_ratio_median: f64,
    pub samples_used: usize,
    pub excluded_near_crossing: usize,
}

/// Check the first- and second-derivative formulas of a resolved pair against
/// the parent derivative data.
///
/// Samples within 10 grid cells of `θ_s` are excluded (the formulas assume
/// simple eigenvalues); the sign law is evaluated at samples with
/// `|E'| ≤ morse_small` and branch gap at least `min_gap_for_sign`.
pub fn double_derivative_analysis(
    ops: &OperatorParams,
    parent: &RellichCurve,
    dres: &DoubleResonance,
    res: &DoubleResolution,
    morse_small: f64,
    min_gap_for_sign: f64,
) -> Result<DerivReport> {
    let r_signed = -dres.deriv_plus / dres.deriv_minus;
    if !(r_signed > 0.0) {
        return Err(Error::InvalidArgument(
            "parent derivatives at θ_{k,-} do not have opposite signs".into(),
        ));
    }
    let grid_n = res.thetas.len();
    let h = if grid_n > 1 { res.thetas[1] - res.thetas[0] } else { 0.0 };
    let ts = res.theta_s.unwrap_or(res.theta_minus_lift);
    let excl = 10.0 * h;

    let parent_dminus = |t: f64| -> f64 {
        if let CurveKind::Root = parent.kind {
            return ops.potential.dv(reduce_mod1(t));
        }
        parent.minus.deriv_lift(t).unwrap_or(dres.deriv_minus)
    };

    let mut max_res = [0.0f64; 2];
    let mut sign_checked = 0usize;
    let mut sign_viol = 0usize;
    let mut ratios: Vec<f64> = Vec::new();
    let mut used = 0usize;
    let mut excluded = 0usize;

    for i in 0..grid_n {
        let t = res.thetas[i];
        if (t - ts).abs() <= excl {
            excluded += 1;
            continue;
        }
        used += 1;
        let dvm = parent_dminus(t);
        let gap = res.upper.values[i] - res.lower.values[i];
        for (which, bs, other) in [
            (0usize, &res.upper, &res.lower),
            (1usize, &res.lower, &res.upper),
        ] {
            let a2 = bs.mass_o[i] * bs.mass_o[i];
            let b2 = bs.mass_k[i] * bs.mass_k[i];
            let predicted = (a2 - r_signed * b2) * dvm;
            let resid = (bs.d1[i] - predicted).abs();
            if resid > max_res[which] {
                max_res[which] = resid;
            }
            if bs.d1[i].abs() <= morse_small && gap >= min_gap_for_sign {
                sign_checked += 1;
                let diff = bs.values[i] - other.values[i];
                if (bs.d2[i] >= 0.0) != (diff >= 0.0) {
                    sign_viol += 1;
                }
            }
            if gap >= min_gap_for_sign {
                let denom = 2.0 * res.cross_term[i] * res.cross_term[i]
                    / (bs.values[i] - other.values[i]);
                if denom.abs() > 1e-300 {
                    ratios.push(bs.d2[i] / denom);
                }
            }
        }
    }
    ratios.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let dominant_ratio_median =
        if ratios.is_empty() { f64::NAN } else { ratios[ratios.len() / 2] };
    Ok(DerivReport {
        r_signed,
        max_residual_upper: max_res[0],
        max_residual_lower: max_res[1],
        sign_law_checked: sign_checked,
        sign_law_violations: sign_viol,
        dominant_ratio_median,
        samples_used: used,
        excluded_near_crossing: excluded,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lattice::Frequency;
    use crate::operator::{builtin_potential, PotentialKind};
    use crate::rellich::RellichTree;

    fn ops(eps: f64, kind: PotentialKind) -> OperatorParams {
        OperatorParams::new(
            eps,
            eps.max(1e-9),
            Frequency::golden(1.5, 1e-3).unwrap(),
            builtin_potential(kind).unwrap(),
        )
        .unwrap()
    }

    #[test]
    fn cosine_double_resonances_match_closed_form() {
        let ops = ops(0.0, PotentialKind::Cosine { c: 1.0 });
        let tree = RellichTree::seed(&ops, 2048);
        let found = find_double_resonances(&ops, tree.root(), 3, 1e-10).unwrap();
        assert!(!found.is_empty());
        let omega = ops.freq.omega[0];
        for dr in &found {
            let k = dr.k[0];
            // cosine symmetry forces θ_{k,−} ≡ −kω/2 (mod 1/2)
            let expect_halfmod = reduce_mod1(-(k as f64) * omega / 2.0);
            let diff =
                crate::lattice::dist_to_integers(2.0 * (dr.theta_minus - expect_halfmod));
            assert!(diff < 1e-8, "θ_(k,-) = {} for k = {k}", dr.theta_minus);
            let expect_e = (std::f64::consts::PI * k as f64 * omega).cos();
            assert!(
                (dr.e_k - expect_e).abs() < 1e-8 || (dr.e_k + expect_e).abs() < 1e-8,
                "e_k = {} expected ±{}",
                dr.e_k,
                expect_e
            );
            assert!(dr.residual <= 1e-10);
            assert!((dr.r_ratio - 1.0).abs() < 1e-6, "cosine is symmetric, r = 1");
        }
    }

    #[test]
    fn asymmetric_double_resonance_has_residual_within_tol() {
        let ops = ops(0.0, PotentialKind::Asymmetric { c1: 1.0, c2: 0.05 });
        let tree = RellichTree::seed(&ops, 2048);
        let found = find_double_resonances(&ops, tree.root(), 2, 1e-10).unwrap();
        assert!(!found.is_empty());
        for dr in &found {
            assert!(dr.residual <= 1e-10);
            assert!(dr.r_ratio >= 1.0);
        }
    }

    #[test]
    fn resolve_double_zero_hopping_degenerates_to_minmax() {
        let ops = ops(0.0, PotentialKind::Cosine { c: 1.0 });
        let tree = RellichTree::seed(&ops, 4096);
        let found = find_double_resonances(&ops, tree.root(), 2, 1e-10).unwrap();
        let dr = &found[0];
        let window = Interval::new(dr.e_k - 0.05, dr.e_k + 0.05);
        let opts = ResolveOpts {
            grid_n: 64,
            select_halfwidth: 0.04,
            lambda_halfwidth: 0.04,
            ..Default::default()
        };
        let res = resolve_double(&ops, tree.root(), dr, window, 12.0, &opts).unwrap();
        let kshift = ops.freq.dot(&dr.k);
        for (i, &t) in res.thetas.iter().enumerate() {
            let a = ops.potential.v(reduce_mod1(t));
            let b = ops.potential.v(reduce_mod1(t + kshift));
            assert!((res.upper.values[i] - a.max(b)).abs() < 1e-12);
            assert!((res.lower.values[i] - a.min(b)).abs() < 1e-12);
        }
        assert!(res.interlace_violation <= 1e-12);
        // zero hopping: the branches genuinely cross
        assert!(res.level_crossing);
    }

    #[test]
    fn resolve_double_small_hopping_interlaces() {
        let ops = ops(1e-2, PotentialKind::Cosine { c: 1.0 });
        let tree = RellichTree::seed(&ops, 8192);
        let found = find_double_resonances(&ops, tree.root(), 2, 1e-10).unwrap();
        let dr = found.iter().find(|d| d.k[0].abs() == 2).unwrap_or(&found[0]);
        let window = Interval::new(dr.e_k - 0.004, dr.e_k + 0.004);
        let opts = ResolveOpts {
            grid_n: 128,
            select_halfwidth: 0.02,
            lambda_halfwidth: 0.02,
            ..Default::default()
        };
        let res = resolve_double(&ops, tree.root(), dr, window, 15.0, &opts).unwrap();
        assert!(res.interlace_violation <= 1e-9, "violation {}", res.interlace_violation);
        assert!(res.lambda_monotone);
        let ts = res.theta_s.expect("crossing of λ exists");
        // symmetric cosine: θ_s within 1e-3 of θ_{k,-}
        assert!(
            (ts - res.theta_minus_lift).abs() < 1e-3,
            "θ_s = {ts} vs θ_(k,-) = {}",
            res.theta_minus_lift
        );
        assert!(res.sep_constant > 0.0);

        let report =
            double_derivative_analysis(&ops, tree.root(), dr, &res, 0.1, 1e-6).unwrap();
        assert_eq!(report.sign_law_violations, 0);
        let grid_err = {
            let h = res.thetas[1] - res.thetas[0];
            ops.potential.bound_d * h
        };
        assert!(
            report.max_residual_upper <= 10.0 * (ops.epsilon + grid_err),
            "upper residual {}",
            report.max_residual_upper
        );
        assert!(
            report.max_residual_lower <= 10.0 * (ops.epsilon + grid_err),
            "lower residual {}",
            report.max_residual_lower
        );
    }
}
