//! Sampling potentials and assembly of the finite restriction
//! `H_Λ(θ) = εΔ + diag(v(θ + x·ω))` with Dirichlet boundary conditions,
//! together with the boundary coupling `Γ`.

use serde::Serialize;

use crate::error::Error;
use crate::lattice::{dist1, reduce_mod1, Frequency, LatticeBlock, Site, TorusPoint};
use crate::Result;

/// Analytic family of a sampling potential. Derivatives are exact, not
/// numerical: the Rellich machinery consumes `v'` and `v''` directly and the
/// finite-difference route is kept as a cross-check only.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub enum PotentialKind {
    /// `v(θ) = C·cos(2πθ)`
    Cosine { c: f64 },
    /// `v(θ) = C₁·cos(2πθ) + C₂·sin(4πθ)`; a representative of the
    /// asymmetric class, `v(θ) ≠ v(−θ)` for `C₂ ≠ 0`.
    Asymmetric { c1: f64, c2: f64 },
}

const TAU: f64 = std::f64::consts::TAU; // 2π

impl PotentialKind {
    fn v(&self, theta: f64) -> f64 {
        match *self {
            PotentialKind::Cosine { c } => c * (TAU * theta).cos(),
            PotentialKind::Asymmetric { c1, c2 } => {
                c1 * (TAU * theta).cos() + c2 * (2.0 * TAU * theta).sin()
            }
        }
    }

    fn dv(&self, theta: f64) -> f64 {
        match *self {
            PotentialKind::Cosine { c } => -c * TAU * (TAU * theta).sin(),
            PotentialKind::Asymmetric { c1, c2 } => {
                -c1 * TAU * (TAU * theta).sin() + 2.0 * TAU * c2 * (2.0 * TAU * theta).cos()
            }
        }
    }

    fn d2v(&self, theta: f64) -> f64 {
        match *self {
            PotentialKind::Cosine { c } => -c * TAU * TAU * (TAU * theta).cos(),
            PotentialKind::Asymmetric { c1, c2 } => {
                -c1 * TAU * TAU * (TAU * theta).cos()
                    - 4.0 * TAU * TAU * c2 * (2.0 * TAU * theta).sin()
            }
        }
    }
}

/// A `C²` sampling function on the torus with exactly two non-degenerate
/// critical points, its margin `a` and `C²` bound `D`.
#[derive(Debug, Clone, Serialize)]
pub struct SamplingPotential {
    pub kind: PotentialKind,
    /// Location of the maximum.
    pub theta_max: TorusPoint,
    /// Location of the minimum.
    pub theta_min: TorusPoint,
    /// Neighborhood radius around the critical points: `|v''| > 3` within
    /// distance `a` of either critical point, `|v'| > 3` outside both.
    pub margin_a: f64,
    /// `sup max(|v|, |v'|, |v''|)`.
    pub bound_d: f64,
    /// True when the normalization checks were skipped at construction.
    pub unchecked: bool,
}

impl SamplingPotential {
    pub fn v(&self, theta: f64) -> f64 {
        self.kind.v(theta)
    }

    pub fn dv(&self, theta: f64) -> f64 {
        self.kind.dv(theta)
    }

    pub fn d2v(&self, theta: f64) -> f64 {
        self.kind.d2v(theta)
    }

    /// Image interval `[min v, max v]`.
    pub fn codomain(&self) -> (f64, f64) {
        (self.v(self.theta_min.value()), self.v(self.theta_max.value()))
    }
}

const VALIDATION_GRID: usize = 20_000;

/// Locate the zeros of `dv` by sign change on a dense grid, refined by
/// bisection. Returns ascending phases in `[0, 1)`.
fn critical_points(kind: &PotentialKind, grid: usize) -> Vec<f64> {
    let h = 1.0 / grid as f64;
    let mut zeros = Vec::new();
    let mut prev = kind.dv(0.0);
    for i in 1..=grid {
        let theta = i as f64 * h;
        let cur = kind.dv(theta);
        if prev == 0.0 {
            zeros.push((i - 1) as f64 * h);
        } else if prev * cur < 0.0 {
            let mut lo = (i - 1) as f64 * h;
            let mut hi = theta;
            let flo = prev;
            for _ in 0..80 {
                let mid = 0.5 * (lo + hi);
                let fm = kind.dv(mid);
                if fm == 0.0 {
                    lo = mid;
                    hi = mid;
                    break;
                }
                if (fm > 0.0) == (flo > 0.0) {
                    lo = mid;
                } else {
                    hi = mid;
                }
            }
            zeros.push(reduce_mod1(0.5 * (lo + hi)));
        }
        prev = cur;
    }
    zeros.sort_by(|a, b| a.partial_cmp(b).unwrap());
    zeros
}

fn sup_bound(kind: &PotentialKind, grid: usize) -> f64 {
    match *kind {
        // cosine suprema are exact
        PotentialKind::Cosine { c } => (TAU * TAU * c).max(TAU * c).max(c),
        _ => {
            let mut d = 0.0f64;
            for i in 0..grid {
                let t = i as f64 / grid as f64;
                d = d
                    .max(kind.v(t).abs())
                    .max(kind.dv(t).abs())
                    .max(kind.d2v(t).abs());
            }
            d
        }
    }
}

fn torus_gap(a: f64, b: f64) -> f64 {
    crate::lattice::dist_to_integers(a - b)
}

/// Check the normalization margins for a candidate radius `a`: `|v''| > 3`
/// within `a` of either critical point and `|v'| > 3` outside both.
fn margin_ok(kind: &PotentialKind, tmax: f64, tmin: f64, a: f64, grid: usize) -> bool {
    for i in 0..grid {
        let t = i as f64 / grid as f64;
        let near = torus_gap(t, tmax) < a || torus_gap(t, tmin) < a;
        if near {
            if kind.d2v(t).abs() <= 3.0 {
                return false;
            }
        } else if kind.dv(t).abs() <= 3.0 {
            return false;
        }
    }
    true
}

fn build_potential(kind: PotentialKind, unchecked: bool) -> Result<SamplingPotential> {
    let zeros = critical_points(&kind, VALIDATION_GRID);
    if !unchecked && zeros.len() != 2 {
        return Err(Error::ValidationFailed(format!(
            "expected exactly two critical points, found {} at {:?}",
            zeros.len(),
            zeros
        )));
    }
    // global extremizers; for a valid potential these are the two critical
    // points, and the unchecked path still gets usable anchors
    let (mut tmax, mut tmin) = (0.0, 0.0);
    let (mut vmax, mut vmin) = (f64::NEG_INFINITY, f64::INFINITY);
    for i in 0..VALIDATION_GRID {
        let t = i as f64 / VALIDATION_GRID as f64;
        let v = kind.v(t);
        if v > vmax {
            vmax = v;
            tmax = t;
        }
        if v < vmin {
            vmin = v;
            tmin = t;
        }
    }
    for &z in &zeros {
        if kind.v(z) > vmax {
            vmax = kind.v(z);
            tmax = z;
        }
        if kind.v(z) < vmin {
            vmin = kind.v(z);
            tmin = z;
        }
    }
    if !unchecked && (kind.d2v(tmax) >= 0.0 || kind.d2v(tmin) <= 0.0) {
        return Err(Error::ValidationFailed(
            "critical points are not a non-degenerate max/min pair".into(),
        ));
    }
    let bound_d = sup_bound(&kind, VALIDATION_GRID);

    let half_sep = 0.5 * torus_gap(tmax, tmin);
    let mut margin_a = f64::NAN;
    if !unchecked {
        // scan candidate margins, keep the midpoint of the valid range
        let mut valid: Vec<f64> = Vec::new();
        for i in 1..128 {
            let a = half_sep * i as f64 / 128.0;
            if margin_ok(&kind, tmax, tmin, a, VALIDATION_GRID / 4) {
                valid.push(a);
            }
        }
        match (valid.first(), valid.last()) {
            (Some(lo), Some(hi)) => margin_a = 0.5 * (lo + hi),
            _ => {
                return Err(Error::ValidationFailed(
                    "no margin a with |v''| > 3 near critical points and |v'| > 3 elsewhere"
                        .into(),
                ))
            }
        }
        // re-verify the chosen margin on the full grid
        if !margin_ok(&kind, tmax, tmin, margin_a, VALIDATION_GRID) {
            return Err(Error::ValidationFailed(
                "margin verification failed on the dense grid".into(),
            ));
        }
    }

    Ok(SamplingPotential {
        kind,
        theta_max: TorusPoint::new(tmax),
        theta_min: TorusPoint::new(tmin),
        margin_a,
        bound_d,
        unchecked,
    })
}

/// Construct a built-in potential and validate the standing assumptions.
pub fn builtin_potential(kind: PotentialKind) -> Result<SamplingPotential> {
    match kind {
        PotentialKind::Cosine { c } if !(c >= 1.0) => Err(Error::ValidationFailed(format!(
            "cosine amplitude C = {c} must be >= 1"
        ))),
        _ => build_potential(kind, false),
    }
}

/// Construct a potential without the normalization checks (the `--unchecked`
/// path). Critical points must still exist and be a max/min pair.
pub fn builtin_potential_unchecked(kind: PotentialKind) -> Result<SamplingPotential> {
    build_potential(kind, true)
}

/// Model parameters: hopping `ε ≤ ε₀`, frequency, potential.
#[derive(Debug, Clone)]
pub struct OperatorParams {
    pub epsilon: f64,
    pub epsilon0: f64,
    pub freq: Frequency,
    pub potential: SamplingPotential,
}

impl OperatorParams {
    pub fn new(
        epsilon: f64,
        epsilon0: f64,
        freq: Frequency,
        potential: SamplingPotential,
    ) -> Result<Self> {
        if !(epsilon >= 0.0) || !(epsilon <= epsilon0) {
            return Err(Error::InvalidArgument(format!(
                "need 0 <= epsilon <= epsilon0, got epsilon = {epsilon}, epsilon0 = {epsilon0}"
            )));
        }
        Ok(OperatorParams { epsilon, epsilon0, freq, potential })
    }

    pub fn dim(&self) -> usize {
        self.freq.dim()
    }

    /// `γ₀ = ½|log ε|`; infinite at `ε = 0`.
    pub fn gamma0(&self) -> f64 {
        if self.epsilon == 0.0 {
            f64::INFINITY
        } else {
            0.5 * self.epsilon.ln().abs()
        }
    }

    /// Diagonal entry at site `x` for phase `θ`.
    pub fn diagonal(&self, theta: f64, x: &[i64]) -> f64 {
        self.potential.v(self.freq.shift(theta, x))
    }
}

/// Dense symmetric restriction of `H(θ)` to a block.
#[derive(Debug, Clone)]
pub struct AssembledOperator {
    pub block: LatticeBlock,
    pub theta: TorusPoint,
    /// Row-major `n × n`, exactly symmetric by construction.
    pub matrix: Vec<f64>,
}

impl AssembledOperator {
    pub fn n(&self) -> usize {
        self.block.len()
    }

    pub fn entry(&self, i: usize, j: usize) -> f64 {
        self.matrix[i * self.n() + j]
    }
}

/// Assemble `H_Λ(θ)`: diagonal `v(θ + x·ω)`, off-diagonal `ε` exactly on
/// ℓ¹-nearest neighbors inside the block. Both triangles are written from one
/// evaluation, so the matrix is exactly symmetric.
pub fn assemble(params: &OperatorParams, block: &LatticeBlock, theta: TorusPoint) -> AssembledOperator {
    let n = block.len();
    let mut m = vec![0.0f64; n * n];
    for (i, x) in block.sites().iter().enumerate() {
        m[i * n + i] = params.diagonal(theta.value(), x);
    }
    if params.epsilon != 0.0 {
        // enumerate each site's 2d neighbors instead of scanning all pairs
        for (i, x) in block.sites().iter().enumerate() {
            let mut nb = x.clone();
            for k in 0..block.dim() {
                for step in [-1i64, 1] {
                    nb[k] += step;
                    if let Some(j) = block.row(&nb) {
                        if j > i {
                            m[i * n + j] = params.epsilon;
                            m[j * n + i] = params.epsilon;
                        }
                    }
                    nb[k] -= step;
                }
            }
        }
    }
    AssembledOperator { block: block.clone(), theta, matrix: m }
}

/// Diagonal of `H_{Λ_N}(θ)` in d = 1 in site order `−N..N`, for tridiagonal
/// paths that must not materialize a dense matrix.
pub fn assemble_chain_diagonal(params: &OperatorParams, radius: i64, theta: f64) -> Vec<f64> {
    assert_eq!(params.dim(), 1, "chain assembly is one-dimensional");
    (-radius..=radius)
        .map(|x| params.diagonal(theta, &[x]))
        .collect()
}

/// Max entrywise deviation `|H_{Λ+x}(θ) − H_Λ(θ + x·ω)|` under the translated
/// index map. Translation covariance makes this vanish up to rounding of the
/// phase reduction; the contract is `≤ 1e−12`.
pub fn translation_covariance_check(
    params: &OperatorParams,
    block: &LatticeBlock,
    x: &[i64],
    theta: TorusPoint,
) -> f64 {
    let translated = block.translate(x);
    let lhs = assemble(params, &translated, theta);
    let shifted = TorusPoint::new(theta.value() + params.freq.dot(x));
    let rhs = assemble(params, block, shifted);
    // lexicographic order is preserved by translation, so rows align 1:1
    lhs.matrix
        .iter()
        .zip(&rhs.matrix)
        .map(|(a, b)| (a - b).abs())
        .fold(0.0, f64::max)
}

/// One boundary bond of the coupling operator `Γ`.
#[derive(Debug, Clone, Serialize)]
pub struct CouplingEntry {
    pub inner_site: Site,
    pub outer_site: Site,
    pub inner_row: usize,
    pub outer_row: usize,
    pub eps: f64,
}

/// The coupling `Γ_{z,z'} = ε` for `z ∈ inner`, `z' ∈ outer ∖ inner`,
/// `‖z − z'‖₁ = 1`.
pub fn boundary_coupling(
    outer: &LatticeBlock,
    inner: &LatticeBlock,
    epsilon: f64,
) -> Result<Vec<CouplingEntry>> {
    if !inner.is_subset_of(outer) {
        return Err(Error::InvalidArgument(
            "inner block is not contained in the outer block".into(),
        ));
    }
    let mut entries = Vec::new();
    for (i, z) in inner.sites().iter().enumerate() {
        let mut nb = z.clone();
        for k in 0..inner.dim() {
            for step in [-1i64, 1] {
                nb[k] += step;
                if !inner.contains(&nb) {
                    if let Some(j) = outer.row(&nb) {
                        entries.push(CouplingEntry {
                            inner_site: z.clone(),
                            outer_site: nb.clone(),
                            inner_row: i,
                            outer_row: j,
                            eps: epsilon,
                        });
                    }
                }
                nb[k] -= step;
            }
        }
    }
    Ok(entries)
}

/// Number of ℓ¹-neighbors of `x` inside the block.
pub fn neighbors_inside(block: &LatticeBlock, x: &[i64]) -> usize {
    block
        .sites()
        .iter()
        .filter(|y| dist1(x, y) == 1)
        .count()
}

/// `S₀(θ*, E*) ∩ box`: the 0-scale resonant sites `|v(θ* + x·ω) − E*| < δ₀`.
pub fn zero_resonant_sites(
    params: &OperatorParams,
    theta_star: f64,
    e_star: f64,
    search: &LatticeBlock,
    delta0: f64,
) -> Vec<Site> {
    search
        .sites()
        .iter()
        .filter(|x| (params.potential.v(params.freq.shift(theta_star, x)) - e_star).abs() < delta0)
        .cloned()
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lattice::make_cube;

    fn golden_params(eps: f64, kind: PotentialKind) -> OperatorParams {
        let freq = Frequency::golden(1.5, 1e-3).unwrap();
        let pot = builtin_potential(kind).unwrap();
        OperatorParams::new(eps, eps.max(1e-12), freq, pot).unwrap()
    }

    #[test]
    fn cosine_critical_points_and_bound() {
        let p = builtin_potential(PotentialKind::Cosine { c: 1.0 }).unwrap();
        assert!(p.theta_max.value() < 1e-6 || p.theta_max.value() > 1.0 - 1e-6);
        assert!((p.theta_min.value() - 0.5).abs() < 1e-6);
        assert!((p.bound_d - TAU * TAU).abs() < 1e-9);
        assert!(p.margin_a > 0.05 && p.margin_a < 0.25);
    }

    #[test]
    fn asymmetric_small_coefficient_validates() {
        let p = builtin_potential(PotentialKind::Asymmetric { c1: 1.0, c2: 0.05 }).unwrap();
        // two critical points near 0 and 1/2
        assert!(crate::lattice::dist_to_integers(p.theta_max.value()) < 0.05);
        assert!((p.theta_min.value() - 0.5).abs() < 0.05);
        // asymmetry witness
        let v = |t: f64| p.v(t);
        assert!((v(0.13) - v(-0.13)).abs() > 1e-3);
    }

    #[test]
    fn asymmetric_large_coefficient_fails_validation() {
        let err = builtin_potential(PotentialKind::Asymmetric { c1: 1.0, c2: 0.5 }).unwrap_err();
        match err {
            Error::ValidationFailed(msg) => assert!(msg.contains("critical points"), "{msg}"),
            other => panic!("unexpected error {other:?}"),
        }
    }

    #[test]
    fn derivatives_match_finite_differences() {
        for kind in [
            PotentialKind::Cosine { c: 1.7 },
            PotentialKind::Asymmetric { c1: 1.0, c2: 0.05 },
        ] {
            let p = build_potential(kind, true).unwrap();
            let h = 1e-5;
            for i in 0..97 {
                let t = i as f64 / 97.0;
                let fd1 = (p.v(t + h) - p.v(t - h)) / (2.0 * h);
                let fd2 = (p.v(t + h) - 2.0 * p.v(t) + p.v(t - h)) / (h * h);
                assert!((fd1 - p.dv(t)).abs() < 1e-5 * (1.0 + p.dv(t).abs()));
                assert!((fd2 - p.d2v(t)).abs() < 1e-3 * (1.0 + p.d2v(t).abs()));
            }
        }
    }

    #[test]
    fn assemble_single_site() {
        let params = golden_params(0.3, PotentialKind::Cosine { c: 1.0 });
        let block = make_cube(0.0, 1).unwrap();
        let theta = TorusPoint::new(0.37);
        let op = assemble(&params, &block, theta);
        assert_eq!(op.matrix.len(), 1);
        assert!((op.matrix[0] - params.potential.v(0.37)).abs() < 1e-15);
    }

    #[test]
    fn assemble_zero_hopping_is_diagonal() {
        let params = golden_params(0.0, PotentialKind::Cosine { c: 1.0 });
        let block = make_cube(3.0, 2).unwrap();
        let op = assemble(&params, &block, TorusPoint::new(0.11));
        let n = op.n();
        for i in 0..n {
            for j in 0..n {
                if i != j {
                    assert_eq!(op.entry(i, j), 0.0);
                }
            }
        }
    }

    #[test]
    fn assemble_1d_chain_is_tridiagonal() {
        let params = golden_params(0.05, PotentialKind::Cosine { c: 1.0 });
        let block = make_cube(1.0, 1).unwrap(); // sites -1, 0, 1
        let op = assemble(&params, &block, TorusPoint::new(0.2));
        assert_eq!(op.entry(0, 1), 0.05);
        assert_eq!(op.entry(1, 2), 0.05);
        assert_eq!(op.entry(0, 2), 0.0);
        for i in 0..3 {
            let s = op.block.site(i);
            assert!((op.entry(i, i) - params.diagonal(0.2, s)).abs() < 1e-15);
        }
    }

    #[test]
    fn assemble_exact_symmetry_and_row_sums() {
        let params = golden_params(0.07, PotentialKind::Asymmetric { c1: 1.0, c2: 0.05 });
        let block = make_cube(2.0, 2).unwrap();
        let op = assemble(&params, &block, TorusPoint::new(0.91));
        let n = op.n();
        for i in 0..n {
            for j in 0..n {
                assert_eq!(op.entry(i, j), op.entry(j, i));
            }
            let hop_sum: f64 = (0..n).filter(|&j| j != i).map(|j| op.entry(i, j)).sum();
            let count = neighbors_inside(&block, block.site(i));
            assert!((hop_sum - params.epsilon * count as f64).abs() < 1e-12);
        }
    }

    #[test]
    fn covariance_identities() {
        let params = golden_params(0.0, PotentialKind::Cosine { c: 1.0 });
        let block = make_cube(4.0, 1).unwrap();
        assert_eq!(
            translation_covariance_check(&params, &block, &[0], TorusPoint::new(0.3)),
            0.0
        );
        let dev = translation_covariance_check(&params, &block, &[7], TorusPoint::new(0.3));
        assert!(dev <= 1e-12, "dev = {dev}");
    }

    #[test]
    fn covariance_randomized_2d() {
        use rand::Rng;
        use rand::SeedableRng;
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(5);
        let freq = Frequency::new(vec![2f64.sqrt() - 1.0, 3f64.sqrt() - 1.0], 3.0, 1e-4).unwrap();
        let pot = builtin_potential(PotentialKind::Cosine { c: 1.0 }).unwrap();
        let params = OperatorParams::new(0.02, 0.02, freq, pot).unwrap();
        for _ in 0..50 {
            let block = make_cube(rng.gen_range(1..4) as f64, 2).unwrap();
            let x = vec![rng.gen_range(-40..40), rng.gen_range(-40..40)];
            let theta = TorusPoint::new(rng.gen::<f64>());
            let dev = translation_covariance_check(&params, &block, &x, theta);
            assert!(dev <= 1e-12, "dev = {dev} at x = {x:?}");
        }
    }

    #[test]
    fn coupling_examples() {
        let outer = make_cube(1.0, 1).unwrap();
        let inner = make_cube(0.0, 1).unwrap();
        let g = boundary_coupling(&outer, &inner, 0.4).unwrap();
        assert_eq!(g.len(), 2);
        for e in &g {
            assert_eq!(e.inner_site, vec![0]);
            assert_eq!(e.eps, 0.4);
        }

        let same = boundary_coupling(&outer, &outer, 0.4).unwrap();
        assert!(same.is_empty());

        let outer2 = make_cube(2.0, 2).unwrap();
        let inner2 = make_cube(1.0, 2).unwrap();
        let g2 = boundary_coupling(&outer2, &inner2, 1.0).unwrap();
        // each of the 4 arm sites of the ℓ¹ ball Λ₁ has 3 neighbors in Λ₂∖Λ₁
        assert_eq!(g2.len(), 12);
        for e in &g2 {
            assert_eq!(dist1(&e.inner_site, &e.outer_site), 1);
            assert!(inner2.contains(&e.inner_site));
            assert!(!inner2.contains(&e.outer_site));
            assert!(outer2.contains(&e.outer_site));
        }

        let err = boundary_coupling(&inner2, &outer2, 1.0).unwrap_err();
        assert!(matches!(err, Error::InvalidArgument(_)));
    }

    #[test]
    fn params_reject_epsilon_above_seed() {
        let freq = Frequency::golden(1.5, 1e-3).unwrap();
        let pot = builtin_potential(PotentialKind::Cosine { c: 1.0 }).unwrap();
        assert!(OperatorParams::new(0.2, 0.1, freq, pot).is_err());
    }
}
