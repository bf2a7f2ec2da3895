//! Localization observables: eigenfunction decay profiles, dynamical moments
//! of the time evolution, amplitude stratification, and Monte-Carlo estimates
//! of the bad phase sets where double resonances occur.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::error::Error;
use crate::lattice::{dist1, norm1, LatticeBlock, TorusPoint};
use crate::operator::{assemble, OperatorParams};
use crate::par::maybe_par_map;
use crate::rellich::{CurveKind, Interval, RellichTree};
use crate::spectral::{decay_fit, eigh, SpectralData};
use crate::Result;

/// Decay profile of one eigenfunction about its amplitude peak.
#[derive(Debug, Clone, Serialize)]
pub struct DecayProfile {
    /// Site of the largest amplitude.
    pub center: Vec<i64>,
    /// Per ℓ¹-distance class: distance and log of the envelope amplitude.
    pub distances: Vec<f64>,
    pub log_amplitudes: Vec<f64>,
    /// Fitted decay rate (infinite for single-site support).
    pub gamma_hat: f64,
    pub fit_r2: f64,
    pub eigenvalue: f64,
}

/// Fit the decay profile of the eigenvector with eigenvalue nearest `energy`.
///
/// The profile is the per-distance amplitude envelope about the argmax site;
/// the rate comes from a log-linear fit over distances at least `dist_floor`.
/// Degenerate selections (gap below `1e−10`) are refused.
pub fn eigenfunction_decay(
    ops: &OperatorParams,
    block: &LatticeBlock,
    theta: f64,
    energy: f64,
    dist_floor: f64,
) -> Result<DecayProfile> {
    let op = assemble(ops, block, TorusPoint::new(theta));
    let spec = eigh(&op)?;
    let k = spec.nearest(energy);
    let gap = spec.isolation(k);
    if gap < 1e-10 {
        return Err(Error::DegenerateEigenvalue { gap, required: 1e-10 });
    }
    Ok(profile_of_vector(block, spec.vector(k), spec.eigenvalues[k], dist_floor))
}

/// Profile of an explicit vector (used for in-memory spectra).
pub fn profile_of_vector(
    block: &LatticeBlock,
    psi: &[f64],
    eigenvalue: f64,
    dist_floor: f64,
) -> DecayProfile {
    let center_row = psi
        .iter()
        .enumerate()
        .max_by(|a, b| a.1.abs().partial_cmp(&b.1.abs()).unwrap())
        .map(|(i, _)| i)
        .unwrap_or(0);
    let center = block.site(center_row).clone();
    use std::collections::BTreeMap;
    let mut classes: BTreeMap<i64, f64> = BTreeMap::new();
    for (i, s) in block.sites().iter().enumerate() {
        let d = dist1(s, &center);
        let slot = classes.entry(d).or_insert(0.0);
        if psi[i].abs() > *slot {
            *slot = psi[i].abs();
        }
    }
    let mut distances = Vec::new();
    let mut log_amplitudes = Vec::new();
    let mut pts = Vec::new();
    for (d, amp) in &classes {
        if *amp > 0.0 {
            distances.push(*d as f64);
            log_amplitudes.push(amp.ln());
        }
        pts.push((*d as f64, *amp));
    }
    let (gamma_hat, fit_r2) =
        match decay_fit(&pts, (dist_floor.max(1.0), 2.0 * block.radius() as f64)) {
            Ok(fit) => (fit.gamma_hat, fit.r2),
            Err(Error::UnderflowDegenerate) => (f64::INFINITY, 1.0),
            Err(_) => (f64::NAN, 0.0),
        };
    DecayProfile { center, distances, log_amplitudes, gamma_hat, fit_r2, eigenvalue }
}

/// Position moments of the evolved state `e^{itH} e₀`.
#[derive(Debug, Clone, Serialize)]
pub struct MomentSeries {
    pub q: f64,
    pub times: Vec<f64>,
    /// `Σ_x (1 + ‖x‖₁)^q |⟨e^{itH}e₀, e_x⟩|` per time.
    pub moments: Vec<f64>,
    pub sup_moment: f64,
    /// Worst deviation of `Σ_x |amplitude|²` from 1 over the grid.
    pub unitarity_defect: f64,
    /// Mass beyond `‖x‖₁ ≥ N/2` at the final time (truncation diagnostic).
    pub boundary_mass: f64,
}

/// Evolve `e₀` under the box restriction by spectral synthesis and report the
/// `q`-moments over the time grid.
pub fn evolve_moment(
    ops: &OperatorParams,
    box_radius: f64,
    theta: f64,
    q: f64,
    times: &[f64],
) -> Result<MomentSeries> {
    let block = crate::lattice::make_cube(box_radius, ops.dim())?;
    let op = assemble(ops, &block, TorusPoint::new(theta));
    let spec = eigh(&op)?;
    let n = spec.n;
    let origin = block
        .row(&vec![0; ops.dim()])
        .ok_or_else(|| Error::InvalidArgument("box does not contain the origin".into()))?;

    // e₀ = Σ_α φ_α(0) φ_α
    let weights: Vec<f64> = (0..n).map(|a| spec.vector(a)[origin]).collect();
    let norms: Vec<f64> = block
        .sites()
        .iter()
        .map(|s| (1.0 + norm1(s) as f64).powf(q))
        .collect();

    struct Point {
        moment: f64,
        defect: f64,
        boundary: f64,
    }
    let pts: Vec<Point> = maybe_par_map(times, |&t| {
        let mut re = vec![0.0f64; n];
        let mut im = vec![0.0f64; n];
        for a in 0..n {
            let (s, c) = (t * spec.eigenvalues[a]).sin_cos();
            let w = weights[a];
            let phi = spec.vector(a);
            for x in 0..n {
                re[x] += c * w * phi[x];
                im[x] += s * w * phi[x];
            }
        }
        let mut moment = 0.0;
        let mut total = 0.0;
        let mut boundary = 0.0;
        for x in 0..n {
            let amp2 = re[x] * re[x] + im[x] * im[x];
            let amp = amp2.sqrt();
            total += amp2;
            moment += norms[x] * amp;
            if norm1(block.site(x)) as f64 >= box_radius / 2.0 {
                boundary += amp;
            }
        }
        Point { moment, defect: (total - 1.0).abs(), boundary }
    });

    let moments: Vec<f64> = pts.iter().map(|p| p.moment).collect();
    let sup_moment = moments.iter().fold(0.0f64, |m, &v| m.max(v));
    let unitarity_defect = pts.iter().fold(0.0f64, |m, p| m.max(p.defect));
    let boundary_mass = pts.last().map(|p| p.boundary).unwrap_or(0.0);
    Ok(MomentSeries {
        q,
        times: times.to_vec(),
        moments,
        sup_moment,
        unitarity_defect,
        boundary_mass,
    })
}

/// Stratification of eigenfunctions by their amplitude at the origin.
#[derive(Debug, Clone, Serialize)]
pub struct Strata {
    /// Thresholds `e^{−γ₀ l_j}` per stratum.
    pub thresholds: Vec<f64>,
    /// `|A_j| = #{α : |φ_α(0)| > e^{−γ₀ l_j}}`.
    pub counts: Vec<usize>,
    /// `|A_j| / l_j^d` — the Hilbert–Schmidt-style growth constants.
    pub growth_constants: Vec<f64>,
    /// `Σ_α |φ_α(0)|²` (completeness; equals 1).
    pub completeness: f64,
}

/// Count the strata `A_j = {α : |φ_α(0)| > e^{−γ₀ l_j}}` of a spectrum on a
/// block containing the origin.
pub fn stratify_eigenfunctions(
    spec: &SpectralData,
    block: &LatticeBlock,
    gamma0: f64,
    l_table: &[f64],
    dim: usize,
) -> Result<Strata> {
    let origin = block
        .row(&vec![0; dim])
        .ok_or_else(|| Error::InvalidArgument("block does not contain the origin".into()))?;
    let amps: Vec<f64> = (0..spec.n).map(|a| spec.vector(a)[origin].abs()).collect();
    let completeness: f64 = amps.iter().map(|a| a * a).sum();
    let mut thresholds = Vec::new();
    let mut counts = Vec::new();
    let mut growth = Vec::new();
    for &l in l_table {
        let thr = (-gamma0.min(700.0) * l).exp();
        let count = amps.iter().filter(|&&a| a > thr).count();
        thresholds.push(thr);
        counts.push(count);
        growth.push(count as f64 / l.powi(dim as i32).max(1.0));
    }
    Ok(Strata { thresholds, counts, growth_constants: growth, completeness })
}

/// Monte-Carlo (and, in one dimension, exact) estimate of the bad phase set
/// at one scale.
#[derive(Debug, Clone, Serialize)]
pub struct BadPhaseEstimate {
    pub scale: usize,
    pub samples: usize,
    pub hits: usize,
    pub hit_fraction: f64,
    /// Exact measure of the union in one dimension (interval arithmetic).
    pub exact_measure: Option<f64>,
    /// The analytic target the fraction is compared against.
    pub bound: f64,
    /// Number of (curve, translate) preimage windows in the union.
    pub windows: usize,
}

/// Phase intervals (torus) where the curve lands in the energy window.
fn preimage_intervals(tree: &RellichTree, id: usize, window: Interval) -> Vec<Interval> {
    let curve = &tree.curves[id];
    let mut out = Vec::new();
    for piece in [&curve.minus, &curve.plus] {
        let img = piece.image();
        let w = window.intersect(&img);
        if w.len() <= 0.0 {
            continue;
        }
        let (a, b) = if piece.increasing() {
            (piece.invert(w.lo), piece.invert(w.hi))
        } else {
            (piece.invert(w.hi), piece.invert(w.lo))
        };
        if let (Some(a), Some(b)) = (a, b) {
            if b > a {
                out.push(Interval::new(a, b));
            }
        }
    }
    out
}

/// Estimate the measure of the bad set at scale `n`: the union over scale-`n`
/// curves of the `‖k‖₁ ≤ translate_radius` translates of the preimage of the
/// double-resonant energy window `B_{dr_radius}(e_k)`.
///
/// Monte-Carlo over uniform phases, with the exact interval-union measure as
/// the one-dimensional oracle.
pub fn bad_set_estimate(
    ops: &OperatorParams,
    tree: &RellichTree,
    scale: usize,
    dr_radius: f64,
    translate_radius: u32,
    k_search: u32,
    samples: usize,
    seed: u64,
    bound: f64,
) -> Result<BadPhaseEstimate> {
    // collect the double-resonant windows of every scale-n curve
    let mut phase_windows: Vec<Interval> = Vec::new();
    for id in tree.generation(scale) {
        if matches!(tree.curves[id].kind, CurveKind::Type3 { is_minimum: false, .. }) {
            continue; // pair handled at the upper member
        }
        let doubles =
            crate::rellich::find_double_resonances(ops, &tree.curves[id], k_search, 1e-8)?;
        for dr in doubles {
            let window = Interval::new(dr.e_k - dr_radius, dr.e_k + dr_radius);
            for iv in preimage_intervals(tree, id, window) {
                phase_windows.push(iv);
            }
        }
    }
    // translates by k·ω
    let ball = crate::lattice::make_cube(translate_radius as f64, ops.dim())?;
    let mut translated: Vec<Interval> = Vec::new();
    for iv in &phase_windows {
        for k in ball.sites() {
            let s = ops.freq.dot(k);
            let lo = crate::lattice::reduce_mod1(iv.lo + s);
            translated.push(Interval::new(lo, lo + iv.len()));
        }
    }
    let windows = translated.len();

    // exact union measure in d = 1 via interval merging on the torus
    let exact_measure = if ops.dim() == 1 {
        let mut arcs: Vec<Interval> = Vec::new();
        for iv in &translated {
            if iv.len() >= 1.0 {
                arcs.push(Interval::new(0.0, 1.0));
            } else {
                let lo = crate::lattice::reduce_mod1(iv.lo);
                let hi = lo + iv.len();
                if hi <= 1.0 {
                    arcs.push(Interval::new(lo, hi));
                } else {
                    arcs.push(Interval::new(lo, 1.0));
                    arcs.push(Interval::new(0.0, hi - 1.0));
                }
            }
        }
        arcs.sort_by(|a, b| a.lo.partial_cmp(&b.lo).unwrap());
        let mut measure = 0.0;
        let mut cursor = 0.0f64;
        for a in &arcs {
            let lo = a.lo.max(cursor);
            if a.hi > lo {
                measure += a.hi - lo;
                cursor = a.hi;
            }
        }
        Some(measure.min(1.0))
    } else {
        None
    };

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut hits = 0usize;
    for _ in 0..samples {
        let theta = rng.gen::<f64>();
        // θ lies in the torus arc [iv.lo, iv.lo + len] iff the forward
        // distance from iv.lo to θ is at most len
        let hit = translated
            .iter()
            .any(|iv| crate::lattice::reduce_mod1(theta - iv.lo) <= iv.len());
        if hit {
            hits += 1;
        }
    }
    Ok(BadPhaseEstimate {
        scale,
        samples,
        hits,
        hit_fraction: hits as f64 / samples.max(1) as f64,
        exact_measure,
        bound,
        windows,
    })
}
