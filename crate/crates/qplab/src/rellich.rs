//! Rellich eigenvalue curves: sampled eigenvalue branches `θ ↦ E(θ)` of the
//! finite restrictions `H_B(θ)`, with Feynman–Hellman derivatives, Morse and
//! two-monotonicity structure, domain adjustment, and the machinery that
//! resolves double resonances into interlaced branch pairs.
//!
//! A curve is stored as two sampled monotone pieces (decreasing, increasing)
//! with a common image. Branch continuation matches eigenvectors by maximal
//! overlap across the grid, never by eigenvalue ordering: ordering breaks at
//! level crossings, which are exactly the cases the interlacing device is for.

mod doubles;
mod generation;

pub use doubles::{
    double_derivative_analysis, find_double_resonances, resolve_double, resolve_straddle,
    BranchSamples, DerivReport, DoubleResolution, DoubleResonance, ResolveOpts, StraddleSpec,
};
pub use generation::{
    build_cover, build_generation, modified_codomain, modified_codomain_capped, CoverInterval,
    CoverKind, CoverParams,
    GenStep, ParentReport, ResonanceCover, MARGIN_CAP_FRAC, REGION_CAP_FRAC,
};

use serde::Serialize;

use crate::error::Error;
use crate::lattice::{make_cube, reduce_mod1, LatticeBlock, TorusPoint};
use crate::operator::{assemble, OperatorParams};
use crate::par::maybe_par_map;
use crate::spectral::{eigh, SpectralData};
use crate::Result;

/// A closed interval `[lo, hi]` of reals (phases in lift coordinates, or
/// energies).
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Interval {
    pub lo: f64,
    pub hi: f64,
}

impl Interval {
    pub fn new(lo: f64, hi: f64) -> Self {
        Interval { lo, hi }
    }

    pub fn len(&self) -> f64 {
        (self.hi - self.lo).max(0.0)
    }

    pub fn is_empty(&self) -> bool {
        self.hi < self.lo
    }

    pub fn contains(&self, x: f64) -> bool {
        self.lo <= x && x <= self.hi
    }

    pub fn mid(&self) -> f64 {
        0.5 * (self.lo + self.hi)
    }

    pub fn intersect(&self, other: &Interval) -> Interval {
        Interval::new(self.lo.max(other.lo), self.hi.min(other.hi))
    }

    pub fn shift(&self, dx: f64) -> Interval {
        Interval::new(self.lo + dx, self.hi + dx)
    }

    pub fn grow(&self, dx: f64) -> Interval {
        Interval::new(self.lo - dx, self.hi + dx)
    }
}

/// Intersection of two torus arcs (each of length `< 1`, given as lift
/// intervals). Returns sub-intervals in the lift coordinates of `a`.
pub fn intersect_on_torus(a: Interval, b: Interval) -> Vec<Interval> {
    let mut out = Vec::new();
    let base = (a.lo - b.lo).floor() - 1.0;
    for m in 0..4 {
        let shifted = b.shift(base + m as f64);
        let cap = a.intersect(&shifted);
        if !cap.is_empty() && cap.len() > 0.0 {
            out.push(cap);
        }
    }
    out.sort_by(|x, y| x.lo.partial_cmp(&y.lo).unwrap());
    out.dedup_by(|x, y| (x.lo - y.lo).abs() < 1e-15 && (x.hi - y.hi).abs() < 1e-15);
    out
}

/// One monotone piece of a curve: ascending sample phases (lift coordinates)
/// with values and Feynman–Hellman derivatives.
#[derive(Debug, Clone, Serialize)]
pub struct MonotonePiece {
    pub thetas: Vec<f64>,
    pub values: Vec<f64>,
    pub d1: Vec<f64>,
    pub d2: Vec<f64>,
}

impl MonotonePiece {
    pub fn len(&self) -> usize {
        self.thetas.len()
    }

    pub fn is_empty(&self) -> bool {
        self.thetas.is_empty()
    }

    pub fn domain(&self) -> Interval {
        Interval::new(self.thetas[0], *self.thetas.last().unwrap())
    }

    pub fn increasing(&self) -> bool {
        *self.values.last().unwrap() >= self.values[0]
    }

    pub fn image(&self) -> Interval {
        let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
        for &v in &self.values {
            lo = lo.min(v);
            hi = hi.max(v);
        }
        Interval::new(lo, hi)
    }

    /// Linear interpolation at a lift phase inside the domain.
    pub fn eval_lift(&self, t: f64) -> Option<f64> {
        let dom = self.domain();
        if t < dom.lo - 1e-12 || t > dom.hi + 1e-12 {
            return None;
        }
        let t = t.clamp(dom.lo, dom.hi);
        let i = match self.thetas.binary_search_by(|x| x.partial_cmp(&t).unwrap()) {
            Ok(i) => return Some(self.values[i]),
            Err(i) => i,
        };
        if i == 0 {
            return Some(self.values[0]);
        }
        if i >= self.len() {
            return Some(*self.values.last().unwrap());
        }
        let (t0, t1) = (self.thetas[i - 1], self.thetas[i]);
        let w = if t1 > t0 { (t - t0) / (t1 - t0) } else { 0.0 };
        Some(self.values[i - 1] * (1.0 - w) + self.values[i] * w)
    }

    /// Map a torus phase into this piece's lift coordinates, if it lands in
    /// the domain.
    pub fn lift(&self, torus_theta: f64) -> Option<f64> {
        let dom = self.domain();
        let t = reduce_mod1(torus_theta);
        let base = dom.lo.floor() - 1.0;
        for m in 0..4 {
            let cand = t + base + m as f64;
            if cand >= dom.lo - 1e-12 && cand <= dom.hi + 1e-12 {
                return Some(cand.clamp(dom.lo, dom.hi));
            }
        }
        None
    }

    pub fn eval_torus(&self, torus_theta: f64) -> Option<f64> {
        self.lift(torus_theta).and_then(|t| self.eval_lift(t))
    }

    /// First derivative by interpolation of the sampled `d1`.
    pub fn deriv_lift(&self, t: f64) -> Option<f64> {
        let dom = self.domain();
        if t < dom.lo - 1e-12 || t > dom.hi + 1e-12 {
            return None;
        }
        let t = t.clamp(dom.lo, dom.hi);
        let i = self.thetas.partition_point(|&x| x < t).clamp(1, self.len() - 1);
        let (t0, t1) = (self.thetas[i - 1], self.thetas[i]);
        let w = if t1 > t0 { (t - t0) / (t1 - t0) } else { 0.0 };
        Some(self.d1[i - 1] * (1.0 - w) + self.d1[i] * w)
    }

    /// Monotone inversion: the lift phase where the piece attains `e`.
    pub fn invert(&self, e: f64) -> Option<f64> {
        let img = self.image();
        if e < img.lo - 1e-12 || e > img.hi + 1e-12 {
            return None;
        }
        let inc = self.increasing();
        let pred = |v: f64| if inc { v < e } else { v > e };
        let mut i = self.values.partition_point(|&v| pred(v));
        i = i.clamp(1, self.len() - 1);
        let (v0, v1) = (self.values[i - 1], self.values[i]);
        let (t0, t1) = (self.thetas[i - 1], self.thetas[i]);
        if (v1 - v0).abs() < 1e-300 {
            return Some(t0);
        }
        let w = ((e - v0) / (v1 - v0)).clamp(0.0, 1.0);
        Some(t0 + w * (t1 - t0))
    }

    fn interp_row(&self, t: f64) -> (f64, f64, f64) {
        let i = self.thetas.partition_point(|&x| x < t).clamp(1, self.len() - 1);
        let (t0, t1) = (self.thetas[i - 1], self.thetas[i]);
        let w = if t1 > t0 { ((t - t0) / (t1 - t0)).clamp(0.0, 1.0) } else { 0.0 };
        (
            self.values[i - 1] * (1.0 - w) + self.values[i] * w,
            self.d1[i - 1] * (1.0 - w) + self.d1[i] * w,
            self.d2[i - 1] * (1.0 - w) + self.d2[i] * w,
        )
    }

    /// Trim the piece to the preimage of `[elo, ehi]`, inserting interpolated
    /// boundary samples at the exact cuts. Returns the removed phase measure.
    pub fn trim_to_image(&mut self, elo: f64, ehi: f64) -> Result<f64> {
        let img = self.image();
        if ehi < img.lo || elo > img.hi {
            return Err(Error::AdjustFailed(
                "requested image does not meet the piece image".into(),
            ));
        }
        let inc = self.increasing();
        let (tcut_lo, tcut_hi) = if inc {
            (
                self.invert(elo.max(img.lo)).unwrap(),
                self.invert(ehi.min(img.hi)).unwrap(),
            )
        } else {
            (
                self.invert(ehi.min(img.hi)).unwrap(),
                self.invert(elo.max(img.lo)).unwrap(),
            )
        };
        let dom = self.domain();
        let removed = (tcut_lo - dom.lo).max(0.0) + (dom.hi - tcut_hi).max(0.0);

        let mut thetas = Vec::new();
        let mut values = Vec::new();
        let mut d1 = Vec::new();
        let mut d2 = Vec::new();
        let (v, a, b) = self.interp_row(tcut_lo);
        thetas.push(tcut_lo);
        values.push(v);
        d1.push(a);
        d2.push(b);
        for i in 0..self.len() {
            let t = self.thetas[i];
            if t > tcut_lo + 1e-15 && t < tcut_hi - 1e-15 {
                thetas.push(t);
                values.push(self.values[i]);
                d1.push(self.d1[i]);
                d2.push(self.d2[i]);
            }
        }
        if tcut_hi > tcut_lo + 1e-15 {
            let (v, a, b) = self.interp_row(tcut_hi);
            thetas.push(tcut_hi);
            values.push(v);
            d1.push(a);
            d2.push(b);
        }
        if thetas.len() < 2 {
            return Err(Error::AdjustFailed(
                "piece degenerated to fewer than 2 samples".into(),
            ));
        }
        self.thetas = thetas;
        self.values = values;
        self.d1 = d1;
        self.d2 = d2;
        Ok(removed)
    }
}

/// Identifier of a curve inside its tree.
pub type CurveId = usize;

/// Where a double resonance was resolved: the translation `k` and the
/// ancestor whose eigenvectors act as the deflation family (`None` at the
/// first scale: delta functions at the origin and `k`).
#[derive(Debug, Clone, Serialize)]
pub struct DoubleOrigin {
    pub k: Vec<i64>,
    pub ancestor: Option<CurveId>,
}

/// Classification of a curve.
#[derive(Debug, Clone, Serialize)]
pub enum CurveKind {
    /// The sampling function itself (generation zero).
    Root,
    /// No critical point; the two monotone pieces live on disjoint intervals.
    Type1,
    /// One critical point; single-interval domain.
    Type2 { critical: f64, is_minimum: bool },
    /// Member of a near-resonant brother pair with collapsed gap.
    Type3 {
        brother: CurveId,
        critical: f64,
        is_minimum: bool,
        /// Gap between the brothers' critical values.
        gap: f64,
    },
}

impl CurveKind {
    pub fn tag(&self) -> &'static str {
        match self {
            CurveKind::Root => "root",
            CurveKind::Type1 => "type1",
            CurveKind::Type2 { .. } => "type2",
            CurveKind::Type3 { .. } => "type3",
        }
    }
}

/// Auxiliary interlacing pair `λ±` attached to a resolved double resonance.
#[derive(Debug, Clone, Serialize)]
pub struct InterlacingPair {
    pub thetas: Vec<f64>,
    pub lambda_plus: Vec<f64>,
    pub lambda_minus: Vec<f64>,
    /// Root of `λ₊ − λ₋`.
    pub theta_s: f64,
    /// Measured constant in `E_> − E_< ≥ c·|θ − θ_s|`.
    pub sep_constant: f64,
    /// Whether the branches themselves cross at `θ_s` (collapsed gap).
    pub level_crossing: bool,
}

/// A sampled Rellich curve: an eigenvalue branch of `H_B(θ)` with the
/// two-monotonicity structure and equal image on both pieces.
#[derive(Debug, Clone, Serialize)]
pub struct RellichCurve {
    pub id: CurveId,
    pub parent: Option<CurveId>,
    pub scale: usize,
    /// Resonance class relative to the parent: 1 simple, 2 double.
    pub res_class: u8,
    /// Radius of the cube block; 0 at the root (single site).
    pub block_radius: f64,
    /// Decreasing piece.
    pub minus: MonotonePiece,
    /// Increasing piece.
    pub plus: MonotonePiece,
    /// Common image of both pieces after domain adjustment.
    pub codomain: Interval,
    pub kind: CurveKind,
    /// Phase measure removed by the domain adjustment.
    pub trimmed: f64,
    pub origin_double: Option<DoubleOrigin>,
    /// Interlacing data, held by the upper member of a resolved pair.
    pub interlacing: Option<InterlacingPair>,
}

impl RellichCurve {
    /// Domain components (one interval for Type 2/3 and the root, two for
    /// Type 1), in lift coordinates.
    pub fn domain_components(&self) -> Vec<Interval> {
        let dm = self.minus.domain();
        let dp = self.plus.domain();
        if (dm.hi - dp.lo).abs() < 1e-9 {
            vec![Interval::new(dm.lo, dp.hi)]
        } else if (dp.hi - dm.lo).abs() < 1e-9 {
            vec![Interval::new(dp.lo, dm.hi)]
        } else {
            let mut v = vec![dm, dp];
            v.sort_by(|a, b| a.lo.partial_cmp(&b.lo).unwrap());
            v
        }
    }

    /// Total phase measure of the domain.
    pub fn domain_measure(&self) -> f64 {
        self.domain_components().iter().map(|c| c.len()).sum()
    }

    /// Interpolated evaluation at a torus phase; `None` outside the domain.
    pub fn eval_interp(&self, torus_theta: f64) -> Option<f64> {
        self.minus
            .eval_torus(torus_theta)
            .or_else(|| self.plus.eval_torus(torus_theta))
    }

    /// The block the curve is an eigenvalue branch of.
    pub fn block(&self, dim: usize) -> Result<LatticeBlock> {
        make_cube(self.block_radius, dim)
    }

    /// Eigensolve-backed evaluation: the eigenvalue of `H_B(θ)` nearest the
    /// interpolated prediction. At the root this is the sampling function.
    pub fn eval_exact(&self, ops: &OperatorParams, torus_theta: f64) -> Result<f64> {
        if let CurveKind::Root = self.kind {
            return Ok(ops.potential.v(reduce_mod1(torus_theta)));
        }
        let predict = self.eval_interp(torus_theta).ok_or_else(|| {
            Error::InvalidArgument(format!("phase {torus_theta} outside curve domain"))
        })?;
        let block = self.block(ops.dim())?;
        let op = assemble(ops, &block, TorusPoint::new(torus_theta));
        let vals = crate::spectral::eigvals_matrix(&op.matrix, op.n())?;
        Ok(vals
            .into_iter()
            .min_by(|a, b| (a - predict).abs().partial_cmp(&(b - predict).abs()).unwrap())
            .expect("nonempty spectrum"))
    }

    /// Eigensolve-backed branch eigenpair at a torus phase.
    pub fn eval_eigenpair(
        &self,
        ops: &OperatorParams,
        torus_theta: f64,
    ) -> Result<(f64, Vec<f64>, LatticeBlock)> {
        let block = self.block(ops.dim())?;
        if let CurveKind::Root = self.kind {
            return Ok((ops.potential.v(reduce_mod1(torus_theta)), vec![1.0], block));
        }
        let predict = self.eval_interp(torus_theta).ok_or_else(|| {
            Error::InvalidArgument(format!("phase {torus_theta} outside curve domain"))
        })?;
        let op = assemble(ops, &block, TorusPoint::new(torus_theta));
        let spec = eigh(&op)?;
        let k = spec.nearest(predict);
        Ok((spec.eigenvalues[k], spec.vector(k).to_vec(), block))
    }

    /// Whether the codomain maximum is attained at a critical point.
    pub fn max_is_critical(&self) -> bool {
        matches!(
            self.kind,
            CurveKind::Root
                | CurveKind::Type2 { is_minimum: false, .. }
                | CurveKind::Type3 { is_minimum: false, .. }
        )
    }

    pub fn min_is_critical(&self) -> bool {
        matches!(
            self.kind,
            CurveKind::Root
                | CurveKind::Type2 { is_minimum: true, .. }
                | CurveKind::Type3 { is_minimum: true, .. }
        )
    }
}

/// The tree of curves across scales.
#[derive(Debug, Clone)]
pub struct RellichTree {
    pub curves: Vec<RellichCurve>,
    pub children: Vec<Vec<CurveId>>,
}

impl RellichTree {
    /// Seed the tree with the sampling function as generation zero.
    pub fn seed(ops: &OperatorParams, grid: usize) -> Self {
        let pot = &ops.potential;
        let tmax = pot.theta_max.value();
        let tmin = {
            let t = pot.theta_min.value();
            if t > tmax {
                t
            } else {
                t + 1.0
            }
        };
        let sample = |lo: f64, hi: f64| {
            let m = grid.max(32);
            let mut thetas = Vec::with_capacity(m + 1);
            let mut values = Vec::with_capacity(m + 1);
            let mut d1 = Vec::with_capacity(m + 1);
            let mut d2 = Vec::with_capacity(m + 1);
            for i in 0..=m {
                let t = lo + (hi - lo) * i as f64 / m as f64;
                thetas.push(t);
                values.push(pot.v(t));
                d1.push(pot.dv(t));
                d2.push(pot.d2v(t));
            }
            MonotonePiece { thetas, values, d1, d2 }
        };
        let minus = sample(tmax, tmin);
        let plus = sample(tmin, tmax + 1.0);
        let codomain = Interval::new(pot.v(tmin), pot.v(tmax));
        let root = RellichCurve {
            id: 0,
            parent: None,
            scale: 0,
            res_class: 1,
            block_radius: 0.0,
            minus,
            plus,
            codomain,
            kind: CurveKind::Root,
            trimmed: 0.0,
            origin_double: None,
            interlacing: None,
        };
        RellichTree { curves: vec![root], children: vec![Vec::new()] }
    }

    pub fn root(&self) -> &RellichCurve {
        &self.curves[0]
    }

    pub fn add(&mut self, mut curve: RellichCurve) -> CurveId {
        let id = self.curves.len();
        curve.id = id;
        if let Some(p) = curve.parent {
            self.children[p].push(id);
        }
        self.curves.push(curve);
        self.children.push(Vec::new());
        id
    }

    /// Chain of ancestors from the root down to (and including) `id`.
    pub fn ancestry(&self, id: CurveId) -> Vec<CurveId> {
        let mut chain = vec![id];
        let mut cur = id;
        while let Some(p) = self.curves[cur].parent {
            chain.push(p);
            cur = p;
        }
        chain.reverse();
        chain
    }

    /// Ids of one generation.
    pub fn generation(&self, scale: usize) -> Vec<CurveId> {
        self.curves
            .iter()
            .filter(|c| c.scale == scale)
            .map(|c| c.id)
            .collect()
    }
}

/// Feynman–Hellman data of one simple eigenvalue of `H_B(θ)`.
#[derive(Debug, Clone)]
pub struct FhData {
    pub index: usize,
    pub value: f64,
    /// `E' = ⟨ψ, V'ψ⟩`.
    pub d1: f64,
    /// `E'' = ⟨ψ, V''ψ⟩ − 2⟨V'ψ, G^⊥(E) V'ψ⟩`.
    pub d2: f64,
    pub vector: Vec<f64>,
}

/// Feynman–Hellman first and second derivatives of the eigenvalue of
/// `H_block(θ)` nearest `target`.
///
/// The hopping term is phase-independent, so `H' = V'` and `H'' = V''`
/// (diagonal). Requires the eigenvalue to be simple: gap at least
/// `1e−8·(1 + ‖H‖)`, otherwise [`Error::DegenerateEigenvalue`] directs the
/// caller to the brother-pair pathway.
pub fn fh_derivatives(
    ops: &OperatorParams,
    block: &LatticeBlock,
    theta: f64,
    target: f64,
) -> Result<FhData> {
    let op = assemble(ops, block, TorusPoint::new(theta));
    let spec = eigh(&op)?;
    let k = spec.nearest(target);
    let gap = spec.isolation(k);
    let required = 1e-8 * (1.0 + spec.norm_bound());
    if gap < required {
        return Err(Error::DegenerateEigenvalue { gap, required });
    }
    let (d1, d2) = fh_from_spectral(ops, block, theta, &spec, k);
    Ok(FhData {
        index: k,
        value: spec.eigenvalues[k],
        d1,
        d2,
        vector: spec.vector(k).to_vec(),
    })
}

/// Derivatives from an existing eigendecomposition. No simplicity guard: the
/// diverging brother term near an avoided crossing is genuine.
pub fn fh_from_spectral(
    ops: &OperatorParams,
    block: &LatticeBlock,
    theta: f64,
    spec: &SpectralData,
    k: usize,
) -> (f64, f64) {
    let n = spec.n;
    let psi = spec.vector(k);
    let mut vp = vec![0.0f64; n];
    let mut d1 = 0.0;
    let mut d2a = 0.0;
    for (i, site) in block.sites().iter().enumerate() {
        let phase = ops.freq.shift(theta, site);
        let v1 = ops.potential.dv(phase);
        let v2 = ops.potential.d2v(phase);
        d1 += v1 * psi[i] * psi[i];
        d2a += v2 * psi[i] * psi[i];
        vp[i] = v1 * psi[i];
    }
    let mut corr = 0.0;
    for j in 0..n {
        if j == k {
            continue;
        }
        let uj = spec.vector(j);
        let c: f64 = vp.iter().zip(uj).map(|(a, b)| a * b).sum();
        let denom = spec.eigenvalues[j] - spec.eigenvalues[k];
        if denom != 0.0 {
            corr += c * c / denom;
        } else if c != 0.0 {
            corr += f64::INFINITY;
        }
    }
    (d1, d2a - 2.0 * corr)
}

/// Second-derivative splitting against a distinguished second eigenpair `l`:
/// `⟨H'ψ, G^⊥ H'ψ⟩ = −⟨Ψ, H'ψ⟩²/(E − ℰ) + ⟨H'ψ, G^⊥⊥ H'ψ⟩`.
/// Returns `(pair_term, remainder)` with `pair_term = −⟨Ψ, H'ψ⟩²/(E − ℰ)`.
pub fn fh_second_split(
    ops: &OperatorParams,
    block: &LatticeBlock,
    theta: f64,
    spec: &SpectralData,
    k: usize,
    l: usize,
) -> (f64, f64) {
    let n = spec.n;
    let psi = spec.vector(k);
    let mut vp = vec![0.0f64; n];
    for (i, site) in block.sites().iter().enumerate() {
        vp[i] = ops.potential.dv(ops.freq.shift(theta, site)) * psi[i];
    }
    let mut pair = 0.0;
    let mut rest = 0.0;
    for j in 0..n {
        if j == k {
            continue;
        }
        let uj = spec.vector(j);
        let c: f64 = vp.iter().zip(uj).map(|(a, b)| a * b).sum();
        let term = c * c / (spec.eigenvalues[j] - spec.eigenvalues[k]);
        if j == l {
            pair = -c * c / (spec.eigenvalues[k] - spec.eigenvalues[l]);
        } else {
            rest += term;
        }
    }
    (pair, rest)
}

/// A branch produced by continuation over one interval (not yet split into
/// monotone pieces).
#[derive(Debug, Clone)]
pub struct TrackedBranch {
    pub thetas: Vec<f64>,
    pub values: Vec<f64>,
    pub d1: Vec<f64>,
    pub d2: Vec<f64>,
}

impl TrackedBranch {
    pub fn len(&self) -> usize {
        self.thetas.len()
    }

    pub fn is_empty(&self) -> bool {
        self.thetas.is_empty()
    }
}

/// Diagnostics of one continuation run.
#[derive(Debug, Clone, Serialize)]
pub struct TrackReport {
    /// Grid points where the second-best overlap came within 0.1 of the best.
    pub ambiguous: usize,
    pub grid: usize,
    /// Worst winning overlap along the sweep.
    pub min_overlap: f64,
}

struct GridPoint {
    values: Vec<f64>,
    d1: Vec<f64>,
    d2: Vec<f64>,
    vectors: Vec<Vec<f64>>,
}

/// Continue an eigenvalue branch of `H_block(θ)` across `interval` from a
/// seed `(θ₀, E₀)` by maximal eigenvector overlap with the previous grid
/// point.
///
/// `window` is a half-width in energy around the seed value: only eigenpairs
/// inside it are continuation candidates. Ambiguity at more than 1% of grid
/// points aborts with [`Error::ContinuationAmbiguous`] — the caller must
/// refine the grid.
pub fn track_branch(
    ops: &OperatorParams,
    block: &LatticeBlock,
    interval: Interval,
    seed: (f64, f64),
    grid_n: usize,
    window: f64,
) -> Result<(TrackedBranch, TrackReport)> {
    if grid_n < 16 {
        return Err(Error::InvalidArgument(format!("grid_n = {grid_n} must be >= 16")));
    }
    let (theta0, e0) = seed;
    let thetas: Vec<f64> = (0..grid_n)
        .map(|i| interval.lo + interval.len() * i as f64 / (grid_n - 1) as f64)
        .collect();

    // phase 1: independent eigensolves, keeping the in-window candidates
    let pts: Vec<Result<GridPoint>> = maybe_par_map(&thetas, |&t| {
        let op = assemble(ops, block, TorusPoint::new(t));
        let spec = eigh(&op)?;
        let mut values = Vec::new();
        let mut d1 = Vec::new();
        let mut d2 = Vec::new();
        let mut vectors = Vec::new();
        for k in 0..spec.n {
            if (spec.eigenvalues[k] - e0).abs() <= window {
                let (a, b) = fh_from_spectral(ops, block, t, &spec, k);
                values.push(spec.eigenvalues[k]);
                d1.push(a);
                d2.push(b);
                vectors.push(spec.vector(k).to_vec());
            }
        }
        Ok(GridPoint { values, d1, d2, vectors })
    });
    let mut pts_ok = Vec::with_capacity(grid_n);
    for p in pts {
        pts_ok.push(p?);
    }

    // seed: nearest grid point, candidate nearest E0
    let i0 = thetas
        .iter()
        .enumerate()
        .min_by(|a, b| (a.1 - theta0).abs().partial_cmp(&(b.1 - theta0).abs()).unwrap())
        .unwrap()
        .0;
    if pts_ok[i0].values.is_empty() {
        return Err(Error::PreconditionFailed(
            "no eigenvalue inside the window at the seed phase".into(),
        ));
    }
    let k0 = pts_ok[i0]
        .values
        .iter()
        .enumerate()
        .min_by(|a, b| (a.1 - e0).abs().partial_cmp(&(b.1 - e0).abs()).unwrap())
        .unwrap()
        .0;
    if (pts_ok[i0].values[k0] - e0).abs() > 1e-6 + 0.25 * window {
        return Err(Error::PreconditionFailed(format!(
            "seed energy {e0} not matched by the spectrum (nearest {})",
            pts_ok[i0].values[k0]
        )));
    }

    let mut chosen = vec![usize::MAX; grid_n];
    chosen[i0] = k0;
    let mut ambiguous = 0usize;
    let mut min_overlap = 1.0f64;
    {
        let mut step = |from: usize, to: usize, chosen: &mut [usize]| -> Result<()> {
            let prev = &pts_ok[from].vectors[chosen[from]];
            let cands = &pts_ok[to];
            if cands.values.is_empty() {
                return Err(Error::ContinuationAmbiguous { ambiguous: grid_n, total: grid_n });
            }
            let mut best = (0usize, -1.0f64);
            let mut second = -1.0f64;
            for (c, vec) in cands.vectors.iter().enumerate() {
                let ov: f64 = prev.iter().zip(vec).map(|(a, b)| a * b).sum::<f64>().abs();
                if ov > best.1 {
                    second = best.1;
                    best = (c, ov);
                } else if ov > second {
                    second = ov;
                }
            }
            // close runner-up or an outright lost track both count as ambiguity
            if (second >= 0.0 && best.1 - second < 0.1) || best.1 < 0.3 {
                ambiguous += 1;
            }
            min_overlap = min_overlap.min(best.1);
            chosen[to] = best.0;
            Ok(())
        };
        for i in (i0 + 1)..grid_n {
            step(i - 1, i, &mut chosen)?;
        }
        for i in (0..i0).rev() {
            step(i + 1, i, &mut chosen)?;
        }
    }

    if ambiguous * 100 > grid_n {
        return Err(Error::ContinuationAmbiguous { ambiguous, total: grid_n });
    }

    let mut values = Vec::with_capacity(grid_n);
    let mut d1 = Vec::with_capacity(grid_n);
    let mut d2 = Vec::with_capacity(grid_n);
    for (i, p) in pts_ok.iter().enumerate() {
        let k = chosen[i];
        values.push(p.values[k]);
        d1.push(p.d1[k]);
        d2.push(p.d2[k]);
    }
    Ok((
        TrackedBranch { thetas, values, d1, d2 },
        TrackReport { ambiguous, grid: grid_n, min_overlap },
    ))
}

/// Morse-condition report.
#[derive(Debug, Clone, Serialize)]
pub struct MorseReport {
    pub ok: bool,
    /// Worst sampled phase among small-derivative points (by `|E''|`).
    pub worst_theta: f64,
    pub worst_d2: f64,
    /// Signs of `E''` per connected small-derivative cluster.
    pub cluster_signs: Vec<i8>,
    pub small_points: usize,
}

/// Check the Morse condition on sampled data: wherever `|E'| ≤ delta`, demand
/// `|E''| ≥ 2` with a constant sign within each connected small-derivative
/// cluster (one cluster per critical point).
pub fn morse_check(thetas: &[f64], d1: &[f64], d2: &[f64], delta: f64) -> MorseReport {
    let mut ok = true;
    let mut worst_theta = f64::NAN;
    let mut worst_d2 = f64::INFINITY;
    let mut cluster_signs = Vec::new();
    let mut small_points = 0usize;
    let mut in_cluster = false;
    let mut cluster_sign = 0i8;
    for i in 0..thetas.len() {
        if d1[i].abs() <= delta {
            small_points += 1;
            let s = if d2[i] >= 0.0 { 1i8 } else { -1i8 };
            if d2[i].abs() < 2.0 {
                ok = false;
            }
            if d2[i].abs() < worst_d2 {
                worst_d2 = d2[i].abs();
                worst_theta = thetas[i];
            }
            if !in_cluster {
                in_cluster = true;
                cluster_sign = s;
                cluster_signs.push(s);
            } else if s != cluster_sign {
                ok = false;
            }
        } else {
            in_cluster = false;
        }
    }
    MorseReport { ok, worst_theta, worst_d2, cluster_signs, small_points }
}

/// Quadratic-separation certificate of the monotone pieces.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct QuadSeparation {
    /// `min |E(θ₁) − E(θ₂)| / |θ₁ − θ₂|²` over the sampled pairs.
    pub min_ratio: f64,
    /// Fraction of sampled pairs with ratio at least 1/2.
    pub frac_above_half: f64,
    pub pairs: usize,
}

/// Result of splitting a branch into its two monotone pieces.
#[derive(Debug, Clone)]
pub struct SplitResult {
    /// Decreasing piece.
    pub minus: MonotonePiece,
    /// Increasing piece.
    pub plus: MonotonePiece,
    /// Interior critical point, when the domain is a single interval.
    pub critical: Option<f64>,
    pub certificate: QuadSeparation,
}

fn piece_from_branch(b: &TrackedBranch, lo: usize, hi: usize) -> MonotonePiece {
    MonotonePiece {
        thetas: b.thetas[lo..=hi].to_vec(),
        values: b.values[lo..=hi].to_vec(),
        d1: b.d1[lo..=hi].to_vec(),
        d2: b.d2[lo..=hi].to_vec(),
    }
}

fn quad_certificate(pieces: &[&MonotonePiece], max_gap: f64) -> QuadSeparation {
    let mut min_ratio = f64::INFINITY;
    let mut above = 0usize;
    let mut pairs = 0usize;
    for p in pieces {
        let n = p.len();
        if n < 4 {
            continue;
        }
        let stride = (n * n / 20_000).max(1);
        let mut c = 0usize;
        // endpoint samples are excluded: a piece boundary adjacent to a
        // critical point measures the quadratic separation at sub-grid error
        for i in 1..(n - 1) {
            for j in (i + 1)..(n - 1) {
                c += 1;
                if c % stride != 0 {
                    continue;
                }
                let dt = p.thetas[j] - p.thetas[i];
                if dt <= 0.0 || dt > max_gap {
                    continue;
                }
                let ratio = (p.values[j] - p.values[i]).abs() / (dt * dt);
                pairs += 1;
                if ratio >= 0.5 {
                    above += 1;
                }
                if ratio < min_ratio {
                    min_ratio = ratio;
                }
            }
        }
    }
    QuadSeparation {
        min_ratio,
        frac_above_half: if pairs > 0 { above as f64 / pairs as f64 } else { 1.0 },
        pairs,
    }
}

/// Split sampled branch data into its two monotone pieces.
///
/// With two disjoint branches (Type-1 geometry) each must be monotone on its
/// own. A single branch may have at most one interior sign change of `E'`;
/// more is a structure violation. Also certifies the quadratic separation
/// `|E(θ₁) − E(θ₂)| ≥ c·|θ₁ − θ₂|²` over sampled pairs with gap at most
/// `cert_gap`.
pub fn monotonicity_split(branches: &[TrackedBranch], cert_gap: f64) -> Result<SplitResult> {
    let sign_changes = |b: &TrackedBranch| -> Vec<usize> {
        let mut out = Vec::new();
        for i in 1..b.len() {
            if b.d1[i - 1].signum() != b.d1[i].signum() && b.d1[i] != 0.0 && b.d1[i - 1] != 0.0 {
                out.push(i);
            }
        }
        out
    };
    match branches {
        [a, b] => {
            if !sign_changes(a).is_empty() || !sign_changes(b).is_empty() {
                return Err(Error::StructureViolation(
                    "disjoint components must each be monotone".into(),
                ));
            }
            let pa = piece_from_branch(a, 0, a.len() - 1);
            let pb = piece_from_branch(b, 0, b.len() - 1);
            let (minus, plus) = if pa.increasing() { (pb, pa) } else { (pa, pb) };
            if minus.increasing() || !plus.increasing() {
                return Err(Error::StructureViolation(
                    "components do not have opposite monotonicity".into(),
                ));
            }
            let certificate = quad_certificate(&[&minus, &plus], cert_gap);
            Ok(SplitResult { minus, plus, critical: None, certificate })
        }
        [a] => {
            let ch = sign_changes(a);
            if ch.len() > 1 {
                return Err(Error::StructureViolation(format!(
                    "{} monotonicity components detected, expected at most 2",
                    ch.len() + 1
                )));
            }
            if ch.is_empty() {
                return Err(Error::StructureViolation(
                    "single monotone component; cannot split into two pieces".into(),
                ));
            }
            // split at the sampled extremum bracketing the sign change
            let i = ch[0];
            let to_minimum = a.d1[i] > 0.0; // derivative turns positive after a minimum
            let split = if to_minimum {
                if a.values[i - 1] <= a.values[i] {
                    i - 1
                } else {
                    i
                }
            } else if a.values[i - 1] >= a.values[i] {
                i - 1
            } else {
                i
            };
            let split = split.clamp(1, a.len() - 2);
            let left = piece_from_branch(a, 0, split);
            let right = piece_from_branch(a, split, a.len() - 1);
            let (minus, plus) = if left.increasing() { (right, left) } else { (left, right) };
            let certificate = quad_certificate(&[&minus, &plus], cert_gap);
            Ok(SplitResult { minus, plus, critical: Some(a.thetas[split]), certificate })
        }
        _ => Err(Error::InvalidArgument(format!(
            "expected 1 or 2 branch components, got {}",
            branches.len()
        ))),
    }
}

/// Outcome of a domain adjustment.
#[derive(Debug, Clone)]
pub struct AdjustedDomain {
    pub minus: MonotonePiece,
    pub plus: MonotonePiece,
    pub codomain: Interval,
    pub trimmed: f64,
}

/// Shrink the two monotone pieces so both have the identical image
/// `J = Image(minus) ∩ Image(plus)`, by monotone inversion on the grid.
pub fn domain_adjust(minus: &MonotonePiece, plus: &MonotonePiece) -> Result<AdjustedDomain> {
    let im = minus.image();
    let ip = plus.image();
    let j = im.intersect(&ip);
    if j.is_empty() || j.len() <= 0.0 {
        return Err(Error::AdjustFailed(format!(
            "empty image intersection: [{}, {}] vs [{}, {}]",
            im.lo, im.hi, ip.lo, ip.hi
        )));
    }
    let mut m = minus.clone();
    let mut p = plus.clone();
    let tm = m.trim_to_image(j.lo, j.hi)?;
    let tp = p.trim_to_image(j.lo, j.hi)?;
    Ok(AdjustedDomain { minus: m, plus: p, codomain: j, trimmed: tm + tp })
}
