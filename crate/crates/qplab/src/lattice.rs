//! Lattice geometry of `Z^d` and torus arithmetic.
//!
//! Blocks are explicit site lists with a site↔row bijection, so translates,
//! annuli and deformations are first-class values and every matrix built on a
//! block inherits one deterministic (lexicographic) ordering.

use std::collections::{HashMap, HashSet};

use serde::Serialize;

use crate::error::Error;
use crate::Result;

/// A point of `Z^d`.
pub type Site = Vec<i64>;

/// ℓ¹ norm of a site.
pub fn norm1(x: &[i64]) -> i64 {
    x.iter().map(|c| c.abs()).sum()
}

/// ℓ¹ distance between two sites of equal dimension.
pub fn dist1(x: &[i64], y: &[i64]) -> i64 {
    x.iter().zip(y).map(|(a, b)| (a - b).abs()).sum()
}

/// A finite subset of `Z^d` with a fixed row ordering.
#[derive(Debug, Clone)]
pub struct LatticeBlock {
    dim: usize,
    sites: Vec<Site>,
    index: HashMap<Site, usize>,
}

impl LatticeBlock {
    /// Build a block from a list of sites. Sites are deduplicated and sorted
    /// lexicographically; the row index is their position in that order.
    pub fn from_sites(dim: usize, sites: impl IntoIterator<Item = Site>) -> Result<Self> {
        if dim == 0 {
            return Err(Error::InvalidArgument("dimension must be >= 1".into()));
        }
        let mut sites: Vec<Site> = sites.into_iter().collect();
        for s in &sites {
            if s.len() != dim {
                return Err(Error::InvalidArgument(format!(
                    "site {:?} has {} coordinates, expected {}",
                    s,
                    s.len(),
                    dim
                )));
            }
        }
        sites.sort();
        sites.dedup();
        let index = sites
            .iter()
            .enumerate()
            .map(|(i, s)| (s.clone(), i))
            .collect();
        Ok(LatticeBlock { dim, sites, index })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.sites.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sites.is_empty()
    }

    pub fn sites(&self) -> &[Site] {
        &self.sites
    }

    pub fn site(&self, row: usize) -> &Site {
        &self.sites[row]
    }

    /// Row of a site, if present.
    pub fn row(&self, site: &[i64]) -> Option<usize> {
        self.index.get(site).copied()
    }

    pub fn contains(&self, site: &[i64]) -> bool {
        self.index.contains_key(site)
    }

    pub fn is_subset_of(&self, other: &LatticeBlock) -> bool {
        self.sites.iter().all(|s| other.contains(s))
    }

    /// Translate the whole block by `x`.
    pub fn translate(&self, x: &[i64]) -> LatticeBlock {
        let sites = self
            .sites
            .iter()
            .map(|s| s.iter().zip(x).map(|(a, b)| a + b).collect())
            .collect::<Vec<Site>>();
        LatticeBlock::from_sites(self.dim, sites).expect("translate preserves validity")
    }

    /// Set difference `self ∖ other`.
    pub fn minus(&self, other: &LatticeBlock) -> LatticeBlock {
        let sites = self
            .sites
            .iter()
            .filter(|s| !other.contains(s))
            .cloned()
            .collect::<Vec<_>>();
        LatticeBlock::from_sites(self.dim, sites).expect("subset preserves validity")
    }

    /// Set difference against an explicit site list.
    pub fn minus_sites(&self, remove: &HashSet<Site>) -> LatticeBlock {
        let sites = self
            .sites
            .iter()
            .filter(|s| !remove.contains(*s))
            .cloned()
            .collect::<Vec<_>>();
        LatticeBlock::from_sites(self.dim, sites).expect("subset preserves validity")
    }

    /// Union of two blocks of the same dimension.
    pub fn union(&self, other: &LatticeBlock) -> LatticeBlock {
        let sites = self.sites.iter().chain(other.sites.iter()).cloned();
        LatticeBlock::from_sites(self.dim, sites.collect::<Vec<_>>())
            .expect("union preserves validity")
    }

    /// ℓ¹ distance from a site to the block (0 if inside).
    pub fn dist_to(&self, x: &[i64]) -> i64 {
        self.sites.iter().map(|s| dist1(s, x)).min().unwrap_or(i64::MAX)
    }

    /// Largest ℓ¹ norm among the sites.
    pub fn radius(&self) -> i64 {
        self.sites.iter().map(|s| norm1(s)).max().unwrap_or(0)
    }

    /// Sites of `self` whose ℓ¹ distance to the complement of `self` within
    /// `outer` is 1, paired across the boundary. Used by the Poisson formula.
    pub fn interior_of(&self, outer: &LatticeBlock) -> bool {
        self.is_subset_of(outer)
    }
}

/// The ℓ¹ ball `Λ_L = {x ∈ Z^d : ‖x‖₁ ≤ L}` with lexicographic ordering.
pub fn make_cube(l: f64, d: usize) -> Result<LatticeBlock> {
    if d == 0 {
        return Err(Error::InvalidArgument("dimension must be >= 1".into()));
    }
    if l < 0.0 || !l.is_finite() {
        return Err(Error::InvalidArgument(format!("radius {l} must be >= 0")));
    }
    let r = l.floor() as i64;
    let mut sites = Vec::new();
    let mut cur = vec![-r; d];
    loop {
        if norm1(&cur) <= r {
            sites.push(cur.clone());
        }
        // odometer over the bounding box [-r, r]^d
        let mut k = d;
        loop {
            if k == 0 {
                return LatticeBlock::from_sites(d, sites);
            }
            k -= 1;
            cur[k] += 1;
            if cur[k] <= r {
                break;
            }
            cur[k] = -r;
        }
    }
}

/// Annulus `Λ_outer ∖ Λ_inner` centered at a site.
pub fn make_annulus(outer: f64, inner: f64, d: usize, center: &[i64]) -> Result<LatticeBlock> {
    let big = make_cube(outer, d)?.translate(center);
    let small = make_cube(inner, d)?.translate(center);
    Ok(big.minus(&small))
}

/// A phase on the torus `T = R/Z`, stored reduced to `[0, 1)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TorusPoint(f64);

impl TorusPoint {
    pub fn new(theta: f64) -> Self {
        TorusPoint(reduce_mod1(theta))
    }

    pub fn value(self) -> f64 {
        self.0
    }
}

/// Reduce a real number to `[0, 1)`.
pub fn reduce_mod1(x: f64) -> f64 {
    let r = x - x.floor();
    // x.floor() for tiny negative x can round to -0.0 leaving r == 1.0
    if r >= 1.0 {
        r - 1.0
    } else {
        r
    }
}

/// Distance to the nearest integer, `‖x‖ = inf_{l∈Z} |l − x|`, in `[0, 1/2]`.
pub fn dist_to_integers(x: f64) -> f64 {
    let r = reduce_mod1(x);
    r.min(1.0 - r)
}

/// Torus distance between two phases, in `[0, 1/2]`.
pub fn torus_dist(a: TorusPoint, b: TorusPoint) -> f64 {
    dist_to_integers(a.value() - b.value())
}

/// A frequency vector `ω ∈ [0,1)^d` with Diophantine parameters `τ > d`,
/// `γ > 0`. Whether `ω` actually satisfies the Diophantine condition up to a
/// finite radius is checked by [`diophantine_margin`], not assumed.
#[derive(Debug, Clone, Serialize)]
pub struct Frequency {
    pub omega: Vec<f64>,
    pub tau: f64,
    pub gamma_dc: f64,
}

impl Frequency {
    pub fn new(omega: Vec<f64>, tau: f64, gamma_dc: f64) -> Result<Self> {
        let d = omega.len();
        if d == 0 {
            return Err(Error::InvalidArgument("frequency must have d >= 1 components".into()));
        }
        if !(tau > d as f64) {
            return Err(Error::InvalidArgument(format!(
                "tau = {tau} must exceed the dimension {d}"
            )));
        }
        if !(gamma_dc > 0.0) {
            return Err(Error::InvalidArgument("gamma must be positive".into()));
        }
        let omega = omega.into_iter().map(reduce_mod1).collect();
        Ok(Frequency { omega, tau, gamma_dc })
    }

    /// The golden-mean frequency `(√5−1)/2` in one dimension.
    pub fn golden(tau: f64, gamma_dc: f64) -> Result<Self> {
        Frequency::new(vec![(5.0f64.sqrt() - 1.0) / 2.0], tau, gamma_dc)
    }

    pub fn dim(&self) -> usize {
        self.omega.len()
    }

    /// `x·ω` as a real number (not reduced).
    pub fn dot(&self, x: &[i64]) -> f64 {
        x.iter().zip(&self.omega).map(|(k, w)| *k as f64 * w).sum()
    }

    /// The phase `θ + x·ω` reduced to the torus.
    pub fn shift(&self, theta: f64, x: &[i64]) -> f64 {
        reduce_mod1(theta + self.dot(x))
    }
}

/// Exhaustive Diophantine scan: minimize `‖x·ω‖ · ‖x‖₁^τ` over `0 < ‖x‖₁ ≤ X`.
///
/// The frequency satisfies the Diophantine condition up to radius `X` iff the
/// returned margin is at least `gamma_dc`.
pub fn diophantine_margin(freq: &Frequency, x_radius: u32) -> Result<(Site, f64)> {
    if x_radius == 0 {
        return Err(Error::InvalidArgument("check radius must be >= 1".into()));
    }
    let d = freq.dim();
    let ball = make_cube(x_radius as f64, d)?;
    let mut worst_site: Option<Site> = None;
    let mut worst = f64::INFINITY;
    for x in ball.sites() {
        if norm1(x) == 0 {
            continue;
        }
        let val = dist_to_integers(freq.dot(x)) * (norm1(x) as f64).powf(freq.tau);
        if val < worst {
            worst = val;
            worst_site = Some(x.clone());
        }
    }
    Ok((worst_site.expect("nonempty scan"), worst))
}

/// One round of the deformation fixed-point map: adjoin every translate
/// `Λ_L + x`, `x ∈ S`, that touches the current set.
fn deformation_round(current: &LatticeBlock, s: &[Site], template: &LatticeBlock) -> LatticeBlock {
    let mut grown = current.clone();
    for x in s {
        let translate = template.translate(x);
        let touches = translate.sites().iter().any(|p| current.contains(p));
        if touches && !translate.is_subset_of(&grown) {
            grown = grown.union(&translate);
        }
    }
    grown
}

/// Regularizing deformation of a block.
///
/// Given resonant sites `S` whose triples are ℓ¹-separated (every three
/// distinct points have pairwise max distance exceeding `sep_multiplier·L`,
/// checked), grow `B` by whole blocks `Λ_L + x` until every translate that
/// meets the set is wholly contained in it. The fixed point is reached in at
/// most two rounds; we iterate to stabilization and assert the postconditions.
///
/// The separation multiplier is a parameter (`100` reproduces the stated
/// hypothesis) since downstream uses require different slack.
pub fn regular_deformation(
    b: &LatticeBlock,
    s: &[Site],
    l: u32,
    sep_multiplier: f64,
) -> Result<LatticeBlock> {
    if l == 0 {
        return Err(Error::InvalidArgument("deformation scale L must be >= 1".into()));
    }
    let d = b.dim();
    for x in s {
        if x.len() != d {
            return Err(Error::InvalidArgument("site dimension mismatch in S".into()));
        }
    }
    // triple-separation precondition
    let need = sep_multiplier * l as f64;
    for i in 0..s.len() {
        for j in (i + 1)..s.len() {
            for k in (j + 1)..s.len() {
                let m = dist1(&s[i], &s[j])
                    .max(dist1(&s[j], &s[k]))
                    .max(dist1(&s[i], &s[k]));
                if (m as f64) <= need {
                    return Err(Error::PreconditionFailed(format!(
                        "triple {:?}, {:?}, {:?} has max pairwise distance {} <= {}",
                        s[i], s[j], s[k], m, need
                    )));
                }
            }
        }
    }

    let template = make_cube(l as f64, d)?;
    let mut current = b.clone();
    let mut rounds = 0usize;
    loop {
        let next = deformation_round(&current, s, &template);
        if next.len() == current.len() {
            break;
        }
        current = next;
        rounds += 1;
        if rounds > 3 {
            return Err(Error::NumericFailure(
                "deformation failed to stabilize in 3 rounds".into(),
            ));
        }
    }

    // postconditions: B ⊆ B* ⊆ {dist to B ≤ 50L}, and full translates inside
    debug_assert!(b.is_subset_of(&current));
    for x in s {
        let translate = template.translate(x);
        let touches = translate.sites().iter().any(|p| current.contains(p));
        if touches && !translate.is_subset_of(&current) {
            return Err(Error::NumericFailure(
                "deformation postcondition violated: partial translate remains".into(),
            ));
        }
    }
    Ok(current)
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Independent ℓ¹-ball count by scanning the whole bounding box.
    fn ball_count_bruteforce(l: i64, d: usize) -> usize {
        fn rec(d: usize, l: i64, partial: i64, count: &mut usize) {
            if d == 0 {
                if partial <= l {
                    *count += 1;
                }
                return;
            }
            for c in -l..=l {
                if partial + c.abs() <= l {
                    rec(d - 1, l, partial + c.abs(), count);
                }
            }
        }
        let mut count = 0;
        rec(d, l, 0, &mut count);
        count
    }

    #[test]
    fn cube_trivial_cases() {
        let b = make_cube(0.0, 3).unwrap();
        assert_eq!(b.sites(), &[vec![0, 0, 0]]);

        let b = make_cube(1.0, 2).unwrap();
        assert_eq!(b.len(), 5);
        assert!(b.contains(&[0, 0]));
        assert!(b.contains(&[1, 0]));
        assert!(b.contains(&[-1, 0]));
        assert!(b.contains(&[0, 1]));
        assert!(b.contains(&[0, -1]));

        let b = make_cube(2.0, 1).unwrap();
        assert_eq!(
            b.sites(),
            &[vec![-2], vec![-1], vec![0], vec![1], vec![2]]
        );
    }

    #[test]
    fn cube_matches_enumeration_oracle() {
        for d in 1..=3usize {
            for l in 0..=10i64 {
                let b = make_cube(l as f64, d).unwrap();
                assert_eq!(b.len(), ball_count_bruteforce(l, d), "d={d} L={l}");
            }
        }
    }

    #[test]
    fn cube_rejects_bad_arguments() {
        assert!(make_cube(1.0, 0).is_err());
        assert!(make_cube(-1.0, 1).is_err());
    }

    #[test]
    fn block_index_is_bijection() {
        let b = make_cube(3.0, 2).unwrap();
        for (i, s) in b.sites().iter().enumerate() {
            assert_eq!(b.row(s), Some(i));
        }
        let mut seen = std::collections::HashSet::new();
        for s in b.sites() {
            assert!(seen.insert(s.clone()), "duplicate site {s:?}");
            assert_eq!(s.len(), 2);
        }
    }

    #[test]
    fn torus_distance_examples() {
        assert!((torus_dist(TorusPoint::new(0.1), TorusPoint::new(0.9)) - 0.2).abs() < 1e-15);
        assert_eq!(torus_dist(TorusPoint::new(0.25), TorusPoint::new(0.25)), 0.0);
        assert!((torus_dist(TorusPoint::new(0.0), TorusPoint::new(0.5)) - 0.5).abs() < 1e-15);
    }

    #[test]
    fn reduce_mod1_edge_cases() {
        assert_eq!(reduce_mod1(1.0), 0.0);
        assert_eq!(reduce_mod1(-0.25), 0.75);
        assert!(reduce_mod1(-1e-18) < 1.0);
        assert!(reduce_mod1(-1e-18) >= 0.0);
    }

    #[test]
    fn golden_mean_margin_positive() {
        let f = Frequency::golden(1.5, 1e-3).unwrap();
        let (site, margin) = diophantine_margin(&f, 100).unwrap();
        assert!(margin > 0.0, "golden mean margin must be positive, got {margin}");
        // continued-fraction worst case sits at a Fibonacci denominator
        let fib = [1i64, 2, 3, 5, 8, 13, 21, 34, 55, 89];
        assert!(
            fib.contains(&site[0].abs()),
            "worst site {site:?} is not a Fibonacci denominator"
        );
    }

    #[test]
    fn rational_frequency_hits_zero_margin() {
        let f = Frequency::new(vec![2.0 / 7.0], 1.5, 1e-3).unwrap();
        let (site, margin) = diophantine_margin(&f, 10).unwrap();
        assert!(margin < 1e-12, "exact resonance expected, got {margin}");
        assert_eq!(site[0].abs(), 7);
    }

    #[test]
    fn two_dim_margin_positive() {
        let f = Frequency::new(vec![2f64.sqrt() - 1.0, 3f64.sqrt() - 1.0], 3.0, 1e-4).unwrap();
        let (_, margin) = diophantine_margin(&f, 50).unwrap();
        assert!(margin > 0.0);
    }

    #[test]
    fn margin_monotone_in_radius() {
        let f = Frequency::golden(1.5, 1e-3).unwrap();
        let mut prev = f64::INFINITY;
        for x in [5, 10, 20, 40, 80] {
            let (_, m) = diophantine_margin(&f, x).unwrap();
            assert!(m <= prev + 1e-15);
            prev = m;
        }
    }

    #[test]
    fn deformation_empty_s_is_identity() {
        let b = make_cube(4.0, 2).unwrap();
        let out = regular_deformation(&b, &[], 2, 100.0).unwrap();
        assert_eq!(out.len(), b.len());
    }

    #[test]
    fn deformation_single_site_unions_one_translate() {
        let b = make_cube(3.0, 1).unwrap();
        let s = vec![vec![4i64]];
        let out = regular_deformation(&b, &s, 2, 100.0).unwrap();
        let expected = b.union(&make_cube(2.0, 1).unwrap().translate(&[4]));
        assert_eq!(out.sites(), expected.sites());
    }

    #[test]
    fn deformation_triple_violation_reported() {
        let b = make_cube(3.0, 1).unwrap();
        let s = vec![vec![0i64], vec![2], vec![4]];
        let err = regular_deformation(&b, &s, 2, 100.0).unwrap_err();
        match err {
            Error::PreconditionFailed(msg) => assert!(msg.contains("triple")),
            other => panic!("unexpected error {other:?}"),
        }
    }

    #[test]
    fn deformation_postconditions_randomized() {
        use rand::Rng;
        use rand::SeedableRng;
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(11);
        for _ in 0..20 {
            let l = 1 + rng.gen_range(0..2u32);
            let b = make_cube(rng.gen_range(2..5) as f64, 2).unwrap();
            // sites far apart in a line, separation > 100 L
            let mut s = Vec::new();
            let mut base = 0i64;
            for _ in 0..rng.gen_range(0..3) {
                base += 101 * l as i64 + rng.gen_range(0..50);
                s.push(vec![base, rng.gen_range(-3..3)]);
            }
            let out = regular_deformation(&b, &s, l, 100.0).unwrap();
            assert!(b.is_subset_of(&out));
            let template = make_cube(l as f64, 2).unwrap();
            for x in &s {
                let t = template.translate(x);
                let touches = t.sites().iter().any(|p| out.contains(p));
                if touches {
                    assert!(t.is_subset_of(&out));
                }
            }
            // growth cap: at most #S * #Λ_L new sites
            assert!(out.len() <= b.len() + s.len() * template.len());
            for x in out.sites() {
                assert!(b.dist_to(x) <= 50 * l as i64);
            }
            // idempotence
            let again = regular_deformation(&out, &s, l, 100.0).unwrap();
            assert_eq!(again.sites(), out.sites());
        }
    }
}
