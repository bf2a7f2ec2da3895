//! Multi-scale bookkeeping: scale parameters, resonant-site sets, the
//! nonresonant/regular/good predicates, Green's-function verification on good
//! sets, and the certification harness that runs the whole induction as a
//! checklist of executable predicates.

mod certify;

pub use certify::{
    certify_config_from, desk_certify_config, msa_certify, CertEntry, Certificate, CertifyConfig,
};

use serde::Serialize;

use crate::error::Error;
use crate::lattice::{dist1, make_cube, LatticeBlock, Site, TorusPoint};
use crate::operator::{assemble, OperatorParams};
use crate::rellich::{CurveId, CurveKind, RellichCurve, RellichTree};
use crate::spectral::{decay_fit, greens, greens_decay_points};
use crate::Result;

/// Scale policy: the printed parameter ladder, or a user table with the
/// ratio constraint `δ_n = e^{−l_n^{2/3}}` preserved.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum ScalePolicy {
    Paper,
    Desk,
}

/// Parameters of one scale `(n, j)`.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct ScaleParams {
    pub n: usize,
    pub j: u8,
    pub l: f64,
    pub delta: f64,
    pub gamma: f64,
    pub policy: ScalePolicy,
}

/// The resolved ladder of scales up to a depth cap.
#[derive(Debug, Clone, Serialize)]
pub struct ScaleTable {
    pub policy: ScalePolicy,
    pub epsilon0: f64,
    pub gamma0: f64,
    /// Per scale `n`: `(l_n^{(1)}, l_n^{(2)})`; at `n = 0` the block is the
    /// single origin site and `l_0` only seeds `δ_0`.
    pub lengths: Vec<(f64, f64)>,
    /// Per scale `n`: `(δ_n^{(1)}, δ_n^{(2)})`, with `δ_0 = ε_0^{1/20}` under
    /// the paper policy and `e^{−l_0^{2/3}}` under the desk policy.
    pub deltas: Vec<(f64, f64)>,
    /// Non-increasing decay rates with `γ_n ≥ γ_0/2`.
    pub gammas: Vec<f64>,
}

fn delta_of(l: f64) -> f64 {
    (-l.powf(2.0 / 3.0)).exp()
}

impl ScaleTable {
    /// The printed ladder: `l_n^{(j)} = (|log ε₀|^{4^n})^j`,
    /// `δ_n^{(j)} = e^{−(l_n^{(j)})^{2/3}}`, `δ₀ = ε₀^{1/20}`.
    pub fn paper(epsilon0: f64, gamma0: f64, depth: usize) -> Result<Self> {
        if !(epsilon0 > 0.0 && epsilon0 < 1.0) {
            return Err(Error::InvalidArgument("need 0 < epsilon0 < 1".into()));
        }
        let log = epsilon0.ln().abs();
        let mut lengths = vec![(0.0, 0.0)];
        let mut deltas = vec![(epsilon0.powf(1.0 / 20.0), epsilon0.powf(1.0 / 20.0))];
        let mut gammas = vec![gamma0];
        for n in 1..=depth {
            let l1 = log.powi(4i32.pow(n as u32));
            let l2 = l1 * l1;
            lengths.push((l1, l2));
            deltas.push((delta_of(l1), delta_of(l2)));
            let prev = gammas[n - 1];
            gammas.push((prev * (1.0 - l1.powf(-1.0 / 30.0))).max(0.5 * gamma0));
        }
        Ok(ScaleTable { policy: ScalePolicy::Paper, epsilon0, gamma0, lengths, deltas, gammas })
    }

    /// Desk ladder from a user table of `l_n` (strictly increasing).
    pub fn desk(epsilon0: f64, gamma0: f64, ls: &[f64]) -> Result<Self> {
        if ls.len() < 2 {
            return Err(Error::MissingConfig(
                "desk policy needs a table of at least l_0, l_1".into(),
            ));
        }
        for w in ls.windows(2) {
            if !(w[1] > w[0]) {
                return Err(Error::InvalidArgument(
                    "desk lengths must be strictly increasing".into(),
                ));
            }
        }
        if !(epsilon0 > 0.0 && epsilon0 < 1.0) {
            return Err(Error::InvalidArgument("need 0 < epsilon0 < 1".into()));
        }
        let mut lengths = Vec::new();
        let mut deltas = Vec::new();
        let mut gammas = Vec::new();
        for (n, &l) in ls.iter().enumerate() {
            let l2 = if n == 0 { l } else { (l * l).min(4.0 * l).max(l) };
            lengths.push((l, l2));
            let d = delta_of(l);
            deltas.push((d, if n == 0 { d } else { delta_of(l2) }));
            if n == 0 {
                gammas.push(gamma0);
            } else {
                let prev = gammas[n - 1];
                gammas.push((prev * (1.0 - l.powf(-1.0 / 30.0))).max(0.5 * gamma0));
            }
        }
        Ok(ScaleTable { policy: ScalePolicy::Desk, epsilon0, gamma0, lengths, deltas, gammas })
    }

    pub fn depth(&self) -> usize {
        self.lengths.len() - 1
    }

    pub fn params(&self, n: usize, j: u8) -> Result<ScaleParams> {
        if n > self.depth() || !(j == 1 || j == 2) {
            return Err(Error::InvalidArgument(format!("no scale ({n}, {j}) in the table")));
        }
        let l = if j == 1 { self.lengths[n].0 } else { self.lengths[n].1 };
        let delta = if j == 1 { self.deltas[n].0 } else { self.deltas[n].1 };
        Ok(ScaleParams { n, j, l, delta, gamma: self.gammas[n], policy: self.policy })
    }

    /// `δ_n` ignoring the resonance class (the `j = 1` value).
    pub fn delta(&self, n: usize) -> f64 {
        self.deltas[n.min(self.depth())].0
    }

    pub fn length(&self, n: usize) -> f64 {
        self.lengths[n.min(self.depth())].0
    }
}

/// The set of `n`-resonant sites relative to `(θ*, E*)` and a curve.
#[derive(Debug, Clone, Serialize)]
pub struct ResonantSet {
    pub scale: usize,
    pub curve: CurveId,
    pub theta_star: f64,
    pub e_star: f64,
    pub sites: Vec<Site>,
    /// Curve values were interpolated from the stored grids (always true for
    /// scales ≥ 1; the root evaluates exactly).
    pub interpolated: bool,
}

/// Whether `x` is resonant for the given curve: `θ* + x·ω` in the domain and
/// the curve value within `delta` of `E*` (Type-3 members take the min over
/// both brothers).
pub fn site_is_resonant(
    ops: &OperatorParams,
    tree: &RellichTree,
    curve_id: CurveId,
    theta_star: f64,
    e_star: f64,
    delta: f64,
    x: &[i64],
) -> bool {
    let phase = ops.freq.shift(theta_star, x);
    let curve = &tree.curves[curve_id];
    let hit = |c: &RellichCurve| -> bool {
        match c.eval_interp(phase) {
            Some(v) => (v - e_star).abs() < delta,
            None => false,
        }
    };
    match &curve.kind {
        CurveKind::Type3 { brother, .. } => hit(curve) || hit(&tree.curves[*brother]),
        _ => hit(curve),
    }
}

/// Exhaustive scan of a search box for `n`-resonant sites.
pub fn resonant_set(
    ops: &OperatorParams,
    tree: &RellichTree,
    curve_id: CurveId,
    theta_star: f64,
    e_star: f64,
    delta: f64,
    search: &LatticeBlock,
) -> ResonantSet {
    let sites = search
        .sites()
        .iter()
        .filter(|x| site_is_resonant(ops, tree, curve_id, theta_star, e_star, delta, x))
        .cloned()
        .collect();
    ResonantSet {
        scale: tree.curves[curve_id].scale,
        curve: curve_id,
        theta_star,
        e_star,
        sites,
        interpolated: tree.curves[curve_id].scale > 0,
    }
}

/// Triple-separation check: every three distinct resonant sites must have
/// pairwise-max ℓ¹ distance above `multiplier · δ^{−1/(2τ)}`.
pub fn triple_separation_check(
    sites: &[Site],
    tau: f64,
    delta: f64,
    multiplier: f64,
) -> (bool, Option<[Site; 3]>) {
    let threshold = multiplier * delta.powf(-1.0 / (2.0 * tau));
    for i in 0..sites.len() {
        for j in (i + 1)..sites.len() {
            for k in (j + 1)..sites.len() {
                let m = dist1(&sites[i], &sites[j])
                    .max(dist1(&sites[j], &sites[k]))
                    .max(dist1(&sites[i], &sites[k]));
                if (m as f64) <= threshold {
                    return (
                        false,
                        Some([sites[i].clone(), sites[j].clone(), sites[k].clone()]),
                    );
                }
            }
        }
    }
    (true, None)
}

/// Outcome of the good-set predicates for one set.
#[derive(Debug, Clone, Serialize)]
pub struct GoodSetReport {
    pub nonresonant: bool,
    pub regular: bool,
    pub strongly_regular: bool,
    /// Resonant sites of the top scale found inside the set.
    pub resonant_hits: Vec<Site>,
    /// `(scale, site)` pairs witnessing a regularity violation.
    pub regular_violations: Vec<(usize, Site)>,
}

impl GoodSetReport {
    pub fn good(&self) -> bool {
        self.nonresonant && self.regular
    }
}

/// Evaluate the `n`-nonresonant / `n`-regular / `n`-strongly-regular
/// predicates of a set relative to a root-to-leaf ancestry chain.
///
/// Nonresonance is against the leaf curve's resonant set; regularity demands,
/// for every ancestor scale `i < n`, that each `i`-resonant site in the set
/// carry its whole `Λ_{2·l_{i+1}}` block inside the set (strong regularity
/// quantifies over all `i`-resonant sites whose block meets the set).
pub fn good_set_check(
    ops: &OperatorParams,
    tree: &RellichTree,
    leaf: CurveId,
    lambda: &LatticeBlock,
    theta_star: f64,
    e_star: f64,
    table: &ScaleTable,
) -> Result<GoodSetReport> {
    let chain = tree.ancestry(leaf);
    let n = tree.curves[leaf].scale;
    if chain.len() != n + 1 {
        return Err(Error::InvalidArgument(
            "ancestry chain does not reach the root".into(),
        ));
    }
    let delta_n = table.delta(n);
    let resonant_hits: Vec<Site> = lambda
        .sites()
        .iter()
        .filter(|x| site_is_resonant(ops, tree, leaf, theta_star, e_star, delta_n, x))
        .cloned()
        .collect();

    let mut regular = true;
    let mut strongly_regular = true;
    let mut regular_violations = Vec::new();
    for (i, &aid) in chain.iter().enumerate().take(n) {
        let delta_i = table.delta(i);
        let li1 = table.length(i + 1);
        let block = make_cube(2.0 * li1, ops.dim())?;
        for x in lambda.sites() {
            if site_is_resonant(ops, tree, aid, theta_star, e_star, delta_i, x)
                && !block.translate(x).is_subset_of(lambda)
            {
                regular = false;
                regular_violations.push((i, x.clone()));
            }
        }
        let dilated_radius = lambda.radius() + 2 * li1 as i64 + 1;
        let search = make_cube(dilated_radius as f64, ops.dim())?;
        for x in search.sites() {
            if site_is_resonant(ops, tree, aid, theta_star, e_star, delta_i, x) {
                let b = block.translate(x);
                let touches = b.sites().iter().any(|s| lambda.contains(s));
                if touches && !b.is_subset_of(lambda) {
                    strongly_regular = false;
                }
            }
        }
    }
    Ok(GoodSetReport {
        nonresonant: resonant_hits.is_empty(),
        regular,
        strongly_regular,
        resonant_hits,
        regular_violations,
    })
}

/// Green's-function verification report on one set.
#[derive(Debug, Clone, Serialize)]
pub struct GreenReport {
    /// `max ‖G‖ · δ_n / 10` over the sampled window; `≤ 1` passes.
    pub norm_ratio: f64,
    /// Fitted off-diagonal decay rate (infinite when off-diagonals vanish).
    pub gamma_hat: f64,
    /// Target rate `γ_n`.
    pub gamma_target: f64,
    pub samples: usize,
}

impl GreenReport {
    pub fn norm_ok(&self) -> bool {
        self.norm_ratio <= 1.0
    }

    pub fn decay_ok(&self) -> bool {
        self.gamma_hat >= self.gamma_target
    }
}

/// Verify `‖G_Λ(θ,E)‖ ≤ 10·δ_n^{−1}` and the off-diagonal decay over the
/// window `|θ−θ*| < δ_n/(10D)`, `|E−E*| < δ_n/5`, on a set already known to
/// be `n`-good. The decay is fitted over distances in `[l_n^{5/6}, diam]`.
pub fn verify_good_green(
    ops: &OperatorParams,
    lambda: &LatticeBlock,
    theta_star: f64,
    e_star: f64,
    delta_n: f64,
    gamma_target: f64,
    l_n: f64,
    samples_per_axis: usize,
) -> Result<GreenReport> {
    let dd = ops.potential.bound_d;
    let m = samples_per_axis.max(1);
    let offsets: Vec<f64> = (0..m)
        .map(|i| if m == 1 { 0.0 } else { -0.9 + 1.8 * i as f64 / (m - 1) as f64 })
        .collect();
    let mut norm_ratio = 0.0f64;
    let mut points = Vec::new();
    let mut samples = 0;
    for dt in &offsets {
        for de in &offsets {
            let theta = TorusPoint::new(theta_star + dt * delta_n / (10.0 * dd));
            let e = e_star + de * delta_n / 5.0;
            let op = assemble(ops, lambda, theta);
            let g = greens(&op, e)?;
            samples += 1;
            norm_ratio = norm_ratio.max(g.op_norm * delta_n / 10.0);
            points.extend(greens_decay_points(&g, lambda));
        }
    }
    let window_lo = l_n.powf(5.0 / 6.0).max(1.0);
    let diam = 2.0 * lambda.radius() as f64 + 1.0;
    let gamma_hat = match decay_fit(&points, (window_lo, diam)) {
        Ok(fit) => fit.gamma_hat,
        Err(Error::UnderflowDegenerate) => f64::INFINITY,
        Err(e) => return Err(e),
    };
    Ok(GreenReport { norm_ratio, gamma_hat, gamma_target, samples })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lattice::Frequency;
    use crate::operator::{builtin_potential, PotentialKind};
    use crate::rellich::RellichTree;

    fn ops(eps: f64) -> OperatorParams {
        OperatorParams::new(
            eps,
            eps.max(1e-9),
            Frequency::golden(1.5, 1e-3).unwrap(),
            builtin_potential(PotentialKind::Cosine { c: 1.0 }).unwrap(),
        )
        .unwrap()
    }

    #[test]
    fn paper_scale_formulas() {
        let eps0 = (-10.0f64).exp();
        let t = ScaleTable::paper(eps0, 0.5 * 10.0, 1).unwrap();
        let p11 = t.params(1, 1).unwrap();
        assert!((p11.l - 1e4).abs() < 1e-6);
        let p12 = t.params(1, 2).unwrap();
        assert!((p12.l - 1e8).abs() < 1e-2);
        assert!((t.delta(0) - (-0.5f64).exp()).abs() < 1e-12);
        assert!((p11.delta - (-(1e4f64).powf(2.0 / 3.0)).exp()).abs() < 1e-18);
    }

    #[test]
    fn desk_table_constraints() {
        let t = ScaleTable::desk(1e-2, 2.3, &[3.5, 40.0, 60.0]).unwrap();
        assert_eq!(t.depth(), 2);
        for n in 0..=2 {
            let p = t.params(n, 1).unwrap();
            assert!((p.delta - delta_of(p.l)).abs() < 1e-15);
        }
        assert!(t.gammas.windows(2).all(|w| w[1] <= w[0]));
        assert!(t.gammas.iter().all(|&g| g >= 0.5 * t.gamma0));
        assert!(ScaleTable::desk(1e-2, 2.3, &[5.0, 4.0]).is_err());
        assert!(ScaleTable::desk(1e-2, 2.3, &[5.0]).is_err());
    }

    #[test]
    fn zero_scale_resonant_set_matches_definition() {
        let ops = ops(0.0);
        let tree = RellichTree::seed(&ops, 1024);
        let search = make_cube(50.0, 1).unwrap();
        let (theta, e, delta) = (0.137, 0.4, 0.1);
        let set = resonant_set(&ops, &tree, 0, theta, e, delta, &search);
        for x in search.sites() {
            let expect = (ops.potential.v(ops.freq.shift(theta, x)) - e).abs() < delta;
            assert_eq!(set.sites.contains(x), expect, "site {x:?}");
        }
        let set = resonant_set(&ops, &tree, 0, theta, -2.0, 0.5, &search);
        assert!(set.sites.is_empty());
    }

    #[test]
    fn equidistribution_of_zero_scale_count() {
        let ops = ops(0.0);
        let tree = RellichTree::seed(&ops, 1024);
        let search = make_cube(2000.0, 1).unwrap();
        let (theta, e, delta) = (0.011, 0.3, 0.05);
        let set = resonant_set(&ops, &tree, 0, theta, e, delta, &search);
        // measure of v^{-1}(e ± delta) for v = cos(2πθ): the IDS increment
        let f = |x: f64| (x.clamp(-1.0, 1.0)).acos() / std::f64::consts::PI;
        let measure = f(e - delta) - f(e + delta);
        let expect = measure * 4001.0;
        assert!(
            (set.sites.len() as f64 - expect).abs() <= 0.2 * expect,
            "count {} vs equidistribution {expect}",
            set.sites.len()
        );
    }

    #[test]
    fn triple_separation_examples() {
        let (ok, _) = triple_separation_check(&[vec![0], vec![5]], 1.5, 1e-3, 0.1);
        assert!(ok, "two sites are vacuously separated");
        let planted = vec![vec![0i64], vec![2], vec![4]];
        let (ok, worst) = triple_separation_check(&planted, 1.5, 1e-3, 1.0);
        assert!(!ok);
        assert!(worst.is_some());
    }

    #[test]
    fn zero_scale_triples_separated_at_small_delta() {
        let ops = ops(0.0);
        let tree = RellichTree::seed(&ops, 1024);
        let search = make_cube(300.0, 1).unwrap();
        let delta = 1e-4;
        let set = resonant_set(&ops, &tree, 0, 0.05, 0.4, delta, &search);
        let (ok, worst) = triple_separation_check(&set.sites, 1.5, delta, 0.1);
        assert!(ok, "violating triple {worst:?}");
    }

    #[test]
    fn good_set_monotone_under_inclusion() {
        let ops = ops(0.0);
        let tree = RellichTree::seed(&ops, 1024);
        let table = ScaleTable::desk(1e-2, ops.gamma0(), &[3.5, 10.0]).unwrap();
        let big = make_cube(30.0, 1).unwrap();
        let small = make_cube(10.0, 1).unwrap();
        let (theta, e) = (0.021, 1.7);
        let rb = good_set_check(&ops, &tree, 0, &big, theta, e, &table).unwrap();
        let rs = good_set_check(&ops, &tree, 0, &small, theta, e, &table).unwrap();
        if rb.nonresonant {
            assert!(rs.nonresonant, "subset of a nonresonant set is nonresonant");
        }
        assert!(rb.regular && rs.regular);
    }

    #[test]
    fn verify_green_zero_hopping() {
        let ops = ops(0.0);
        let block = make_cube(10.0, 1).unwrap();
        // E* = 2 is at distance >= 1 from the spectrum [-1, 1]
        let rep = verify_good_green(&ops, &block, 0.3, 2.0, 0.1, 1.0, 3.5, 3).unwrap();
        assert!(rep.norm_ok(), "ratio {}", rep.norm_ratio);
        assert!(rep.gamma_hat.is_infinite());
    }
}
