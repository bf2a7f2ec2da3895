//! Command-line laboratory for quasi-periodic Schrödinger operators.
//!
//! Every command is deterministic given `(config, seed)`: re-running writes
//! byte-identical CSV/JSON outputs. Exit codes: 0 success (a failing
//! certificate is still 0, with `pass = false` in the output), 1 computation
//! failure, 2 configuration error.

mod config;

use std::fmt::Write as _;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use qplab::lattice::{make_cube, TorusPoint};
use qplab::msa::{certify_config_from, msa_certify};
use qplab::operator::{assemble, OperatorParams};
use qplab::rellich::{build_generation, CurveKind, RellichTree};
use qplab::spectral::{eigh, greens_from_spectral};

use config::Config;

const VERSION: &str = env!("CARGO_PKG_VERSION");

#[derive(Parser)]
#[command(name = "qplab", version, about = "Quasi-periodic operator laboratory")]
struct Cli {
    #[command(flatten)]
    common: Common,
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Args, Clone)]
struct Common {
    /// Configuration file (TOML); defaults apply when absent.
    #[arg(long, global = true)]
    config: Option<String>,
    /// Override the run seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Cap the worker-thread count (0 = library default).
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Output directory.
    #[arg(long, global = true)]
    out: Option<String>,
    /// Skip the potential normalization checks.
    #[arg(long, global = true, default_value_t = false)]
    unchecked: bool,
}

#[derive(Subcommand)]
enum Cmd {
    /// Eigenvalue summary and Green's-norm scan of one block restriction.
    Spectrum {
        /// Block radius L (ℓ¹ ball).
        #[arg(long, default_value_t = 20.0)]
        block: f64,
        /// Phase θ.
        #[arg(long)]
        theta: Option<f64>,
    },
    /// Build the curve tree and export curves (CSV) and structure (JSON).
    Rellich {
        #[arg(long)]
        depth: Option<usize>,
    },
    /// Run the multi-scale certification checklist.
    Certify {
        #[arg(long)]
        depth: Option<usize>,
    },
    /// Finite-volume integrated density of states and Hölder moduli.
    Ids {
        /// Number of Hölder centers across the spectrum.
        #[arg(long, default_value_t = 9)]
        centers: usize,
    },
    /// Dynamical moments of the evolved origin state.
    Moment,
    /// Bad-phase-set estimate at one scale.
    Badset {
        #[arg(long, default_value_t = 0)]
        scale: usize,
        #[arg(long, default_value_t = 20000)]
        samples: usize,
        /// Energy radius of the double-resonance windows.
        #[arg(long, default_value_t = 1e-3)]
        dr_radius: f64,
    },
    /// Eigenfunction decay profile.
    Decay {
        /// Target energy (defaults to the potential value at θ).
        #[arg(long)]
        energy: Option<f64>,
    },
    /// Resolvent-controlled box deformation and the counting bound.
    Deform {
        #[arg(long, default_value_t = 0.3)]
        energy: f64,
        #[arg(long, default_value_t = 1e-3)]
        eta: f64,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let mut cfg = match &cli.common.config {
        Some(path) => match Config::load(path) {
            Ok(c) => c,
            Err(e) => {
                eprintln!("config error: {e}");
                return ExitCode::from(2);
            }
        },
        None => Config::default(),
    };
    if let Some(seed) = cli.common.seed {
        cfg.run.seed = seed;
    }
    if let Some(threads) = cli.common.threads {
        cfg.run.threads = threads;
    }
    if let Some(out) = &cli.common.out {
        cfg.run.out = out.clone();
    }
    if cfg.run.threads > 0 {
        qplab::par::limit_threads(cfg.run.threads);
    }
    let ops = match cfg.build_ops(cli.common.unchecked) {
        Ok(o) => o,
        Err(e) => {
            eprintln!("config error: {e}");
            return ExitCode::from(2);
        }
    };
    let outdir = PathBuf::from(&cfg.run.out);
    if let Err(e) = std::fs::create_dir_all(&outdir) {
        eprintln!("config error: cannot create output directory: {e}");
        return ExitCode::from(2);
    }
    let w = Writer { dir: outdir, hash: cfg.hash(), seed: cfg.run.seed };

    let result = match &cli.cmd {
        Cmd::Spectrum { block, theta } => cmd_spectrum(&cfg, &ops, &w, *block, *theta),
        Cmd::Rellich { depth } => cmd_rellich(&cfg, &ops, &w, *depth),
        Cmd::Certify { depth } => cmd_certify(&cfg, &ops, &w, *depth),
        Cmd::Ids { centers } => cmd_ids(&cfg, &ops, &w, *centers),
        Cmd::Moment => cmd_moment(&cfg, &ops, &w),
        Cmd::Badset { scale, samples, dr_radius } => {
            cmd_badset(&cfg, &ops, &w, *scale, *samples, *dr_radius)
        }
        Cmd::Decay { energy } => cmd_decay(&cfg, &ops, &w, *energy),
        Cmd::Deform { energy, eta } => cmd_deform(&cfg, &ops, &w, *energy, *eta),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(1)
        }
    }
}

/// Output writer stamping every file with the artifact version, config hash
/// and seed.
struct Writer {
    dir: PathBuf,
    hash: u64,
    seed: u64,
}

impl Writer {
    fn csv(&self, name: &str, header: &str, rows: &str) -> Result<(), String> {
        let mut text = format!(
            "# qplab {VERSION} config {:016x} seed {}\n{header}\n",
            self.hash, self.seed
        );
        text.push_str(rows);
        std::fs::write(self.dir.join(name), text)
            .map_err(|e| format!("writing {name}: {e}"))
    }

    fn json(&self, name: &str, data: serde_json::Value) -> Result<(), String> {
        let doc = serde_json::json!({
            "artifact_version": VERSION,
            "config_hash": format!("{:016x}", self.hash),
            "seed": self.seed,
            "data": data,
        });
        let text = serde_json::to_string_pretty(&doc).map_err(|e| e.to_string())?;
        std::fs::write(self.dir.join(name), text + "\n")
            .map_err(|e| format!("writing {name}: {e}"))
    }

    fn path(&self, name: &str) -> PathBuf {
        self.dir.join(name)
    }
}

/// 17-significant-digit decimal form, locale-independent.
fn fmt(x: f64) -> String {
    if x.is_finite() {
        format!("{x:.16e}")
    } else if x.is_infinite() {
        if x > 0.0 { "inf".into() } else { "-inf".into() }
    } else {
        "nan".into()
    }
}

fn cmd_spectrum(
    cfg: &Config,
    ops: &OperatorParams,
    w: &Writer,
    block_radius: f64,
    theta: Option<f64>,
) -> Result<(), String> {
    let theta = theta.unwrap_or(cfg.run.theta);
    let block = make_cube(block_radius, ops.dim()).map_err(|e| e.to_string())?;
    let op = assemble(ops, &block, TorusPoint::new(theta));
    let spec = eigh(&op).map_err(|e| e.to_string())?;

    let mut rows = String::new();
    for k in 0..spec.n {
        let psi = spec.vector(k);
        let (amax, ipr) = {
            let mut amax = 0usize;
            let mut best = 0.0f64;
            let mut p4 = 0.0f64;
            for (i, v) in psi.iter().enumerate() {
                if v.abs() > best {
                    best = v.abs();
                    amax = i;
                }
                p4 += v * v * v * v;
            }
            (amax, 1.0 / p4)
        };
        let site = block
            .site(amax)
            .iter()
            .map(|c| c.to_string())
            .collect::<Vec<_>>()
            .join(";");
        let _ = writeln!(rows, "{k},{},{site},{}", fmt(spec.eigenvalues[k]), fmt(ipr));
    }
    w.csv("eigenvalues.csv", "index,eigenvalue,peak_site,participation_ratio", &rows)?;

    let lo = spec.eigenvalues[0] - 0.5;
    let hi = spec.eigenvalues[spec.n - 1] + 0.5;
    let m = cfg.grids.energy.max(8);
    let mut rows = String::new();
    for i in 0..m {
        let e = lo + (hi - lo) * i as f64 / (m - 1) as f64;
        match greens_from_spectral(&spec, e) {
            Ok(g) => {
                let _ = writeln!(rows, "{},{},{}", fmt(e), fmt(g.op_norm), fmt(g.dist));
            }
            Err(_) => {
                let _ = writeln!(rows, "{},inf,0", fmt(e));
            }
        }
    }
    w.csv("green_norms.csv", "energy,norm,dist", &rows)?;
    println!("spectrum: {} eigenvalues -> {}", spec.n, w.path("eigenvalues.csv").display());
    Ok(())
}

fn build_tree(
    cfg: &Config,
    ops: &OperatorParams,
    depth: usize,
) -> Result<(RellichTree, usize), String> {
    let table = cfg.scale_table(ops).map_err(|e| e.to_string())?;
    let ccfg =
        certify_config_from(ops, depth, cfg.run.seed, table).map_err(|e| e.to_string())?;
    let mut tree = RellichTree::seed(ops, cfg.grids.theta.max(1024));
    let depth = depth.min(ccfg.steps.len());
    for n in 0..depth {
        let parents = tree.generation(n);
        build_generation(ops, &mut tree, &parents, &ccfg.steps[n])
            .map_err(|e| e.to_string())?;
    }
    Ok((tree, depth))
}

fn kind_brother(kind: &CurveKind) -> Option<usize> {
    match kind {
        CurveKind::Type3 { brother, .. } => Some(*brother),
        _ => None,
    }
}

fn cmd_rellich(
    cfg: &Config,
    ops: &OperatorParams,
    w: &Writer,
    depth: Option<usize>,
) -> Result<(), String> {
    let depth = depth.unwrap_or(cfg.scales.depth);
    let (tree, built) = build_tree(cfg, ops, depth)?;

    let mut rows = String::new();
    for curve in &tree.curves {
        let mut samples: Vec<(f64, f64, f64, f64)> = Vec::new();
        for piece in [&curve.minus, &curve.plus] {
            for i in 0..piece.len() {
                samples.push((piece.thetas[i], piece.values[i], piece.d1[i], piece.d2[i]));
            }
        }
        samples.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap());
        for (t, e, d1, d2) in samples {
            let _ = writeln!(
                rows,
                "{},{},{},{},{},{},{}",
                fmt(t),
                fmt(e),
                fmt(d1),
                fmt(d2),
                curve.kind.tag(),
                curve.scale,
                curve.id
            );
        }
    }
    w.csv("curves.csv", "theta,E,dE,d2E,type,scale,branch_id", &rows)?;

    let curves: Vec<serde_json::Value> = tree
        .curves
        .iter()
        .map(|c| {
            serde_json::json!({
                "id": c.id,
                "parent": c.parent,
                "scale": c.scale,
                "res_class": c.res_class,
                "type": c.kind.tag(),
                "brother": kind_brother(&c.kind),
                "block_radius": c.block_radius,
                "codomain": [c.codomain.lo, c.codomain.hi],
                "domain": c.domain_components().iter().map(|i| vec![i.lo, i.hi]).collect::<Vec<_>>(),
                "trimmed": c.trimmed,
                "children": tree.children[c.id],
            })
        })
        .collect();
    w.json("tree.json", serde_json::json!({ "depth": built, "curves": curves }))?;
    println!(
        "rellich: {} curves to depth {built} -> {}",
        tree.curves.len(),
        w.path("tree.json").display()
    );
    Ok(())
}

fn cmd_certify(
    cfg: &Config,
    ops: &OperatorParams,
    w: &Writer,
    depth: Option<usize>,
) -> Result<(), String> {
    let depth = depth.unwrap_or(cfg.scales.depth);
    let table = cfg.scale_table(ops).map_err(|e| e.to_string())?;
    let ccfg =
        certify_config_from(ops, depth, cfg.run.seed, table).map_err(|e| e.to_string())?;
    let (cert, _tree) = msa_certify(ops, &ccfg).map_err(|e| e.to_string())?;

    println!("hypothesis  pass  fail");
    for (h, p, f) in cert.summary() {
        println!("{h:<11} {p:>5} {f:>5}");
    }
    println!("curves: {}   all_pass: {}", cert.curves_built, cert.all_pass);
    for e in cert.entries.iter().filter(|e| !e.pass).take(20) {
        println!("FAIL scale {} curve {:?} {}: {}", e.scale, e.curve, e.hypothesis, e.witness);
    }
    w.json(
        "certificate.json",
        serde_json::to_value(&cert).map_err(|e| e.to_string())?,
    )?;
    println!("certificate -> {}", w.path("certificate.json").display());
    Ok(())
}

fn cmd_ids(cfg: &Config, ops: &OperatorParams, w: &Writer, centers: usize) -> Result<(), String> {
    let n = cfg.run.box_radius;
    let theta = cfg.run.theta;
    let vals = qplab::ids::box_spectrum(ops, n, theta).map_err(|e| e.to_string())?;
    let (lo, hi) = (vals[0], *vals.last().unwrap());
    let m = cfg.grids.energy.max(8);
    let energies: Vec<f64> = (0..m)
        .map(|i| lo - 0.05 + (hi - lo + 0.1) * i as f64 / (m - 1) as f64)
        .collect();
    let sample = qplab::ids::ids_finite(ops, n, theta, &energies).map_err(|e| e.to_string())?;
    let mut rows = String::new();
    for (e, c) in sample.energies.iter().zip(&sample.counts) {
        let _ = writeln!(rows, "{},{},{}", fmt(*e), sample.sites, fmt(*c));
    }
    w.csv("ids.csv", "E,N,ids", &rows)?;

    let eta = cfg.eta_grid();
    let mut rows = String::new();
    let mut fits = Vec::new();
    for i in 0..centers.max(2) {
        let e_center = lo + (hi - lo) * i as f64 / (centers.max(2) - 1) as f64;
        match qplab::ids::holder_fit(ops, n, theta, e_center, &eta) {
            Ok(fit) => {
                for (et, md) in fit.eta_grid.iter().zip(&fit.moduli) {
                    let _ = writeln!(rows, "{},{},{}", fmt(e_center), fmt(*et), fmt(*md));
                }
                fits.push(serde_json::to_value(&fit).map_err(|e| e.to_string())?);
            }
            Err(qplab::Error::GapDetected(msg)) => {
                fits.push(serde_json::json!({
                    "e_center": e_center,
                    "gap_detected": msg,
                }));
            }
            Err(e) => return Err(e.to_string()),
        }
    }
    w.csv("holder.csv", "center,eta,modulus", &rows)?;
    w.json("ids_summary.json", serde_json::json!({ "holder_fits": fits }))?;
    println!("ids: {} sites -> {}", sample.sites, w.path("ids.csv").display());
    Ok(())
}

fn cmd_moment(cfg: &Config, ops: &OperatorParams, w: &Writer) -> Result<(), String> {
    let times = cfg.time_grid();
    let ms = qplab::loclab::evolve_moment(
        ops,
        cfg.run.box_radius,
        cfg.run.theta,
        cfg.grids.moment_q,
        &times,
    )
    .map_err(|e| e.to_string())?;
    let mut rows = String::new();
    for (t, m) in ms.times.iter().zip(&ms.moments) {
        let _ = writeln!(rows, "{},{}", fmt(*t), fmt(*m));
    }
    w.csv("moment.csv", "t,moment", &rows)?;
    w.json("moment.json", serde_json::to_value(&ms).map_err(|e| e.to_string())?)?;
    println!("moment: sup = {:.6} -> {}", ms.sup_moment, w.path("moment.csv").display());
    Ok(())
}

fn cmd_badset(
    cfg: &Config,
    ops: &OperatorParams,
    w: &Writer,
    scale: usize,
    samples: usize,
    dr_radius: f64,
) -> Result<(), String> {
    let (tree, _) = build_tree(cfg, ops, scale)?;
    let table = cfg.scale_table(ops).map_err(|e| e.to_string())?;
    let translate = table.length(scale + 1).min(500.0) as u32;
    let est = qplab::loclab::bad_set_estimate(
        ops,
        &tree,
        scale,
        dr_radius,
        translate,
        translate,
        samples,
        cfg.run.seed,
        table.delta(scale.max(1) - 1),
    )
    .map_err(|e| e.to_string())?;
    w.json("badset.json", serde_json::to_value(&est).map_err(|e| e.to_string())?)?;
    println!(
        "badset: fraction {:.4} over {} samples -> {}",
        est.hit_fraction,
        est.samples,
        w.path("badset.json").display()
    );
    Ok(())
}

fn cmd_decay(
    cfg: &Config,
    ops: &OperatorParams,
    w: &Writer,
    energy: Option<f64>,
) -> Result<(), String> {
    let theta = cfg.run.theta;
    let energy = energy.unwrap_or_else(|| ops.potential.v(theta));
    let block = make_cube(cfg.run.box_radius, ops.dim()).map_err(|e| e.to_string())?;
    let profile = qplab::loclab::eigenfunction_decay(ops, &block, theta, energy, 1.0)
        .map_err(|e| e.to_string())?;
    let mut rows = String::new();
    for (d, a) in profile.distances.iter().zip(&profile.log_amplitudes) {
        let _ = writeln!(rows, "{},{}", fmt(*d), fmt(*a));
    }
    w.csv("decay.csv", "dist,log_amp", &rows)?;
    w.json("decay.json", serde_json::to_value(&profile).map_err(|e| e.to_string())?)?;
    println!(
        "decay: rate {:.4} about {:?} -> {}",
        profile.gamma_hat,
        profile.center,
        w.path("decay.csv").display()
    );
    Ok(())
}

fn cmd_deform(
    cfg: &Config,
    ops: &OperatorParams,
    w: &Writer,
    energy: f64,
    eta: f64,
) -> Result<(), String> {
    let theta = cfg.run.theta;
    let n = cfg.run.box_radius;
    let (lambda_prime, def) = qplab::ids::make_resolvent_deformation(
        ops, n, theta, energy, eta, None, 0, 0.0,
    )
    .map_err(|e| e.to_string())?;
    let lambda = make_cube(n, ops.dim()).map_err(|e| e.to_string())?;
    let count = if def.certificate_ok {
        let cb = qplab::ids::eig_count_bound_check(ops, &lambda, &lambda_prime, theta, energy, eta)
            .map_err(|e| e.to_string())?;
        Some(serde_json::to_value(&cb).map_err(|e| e.to_string())?)
    } else {
        None
    };
    w.json(
        "deform.json",
        serde_json::json!({
            "deformation": serde_json::to_value(&def).map_err(|e| e.to_string())?,
            "count_bound": count,
        }),
    )?;
    println!(
        "deform: removed {} sites, norm {:.4e} -> {}",
        def.removed,
        def.norm,
        w.path("deform.json").display()
    );
    Ok(())
}
