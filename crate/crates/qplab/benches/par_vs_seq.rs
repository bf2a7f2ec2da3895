//! Parallel-vs-sequential comparison of the two dominant inner loops: the
//! θ-grid eigensolve sweep behind curve continuation, and the spectral
//! synthesis behind the dynamical moments. `maybe_par_map` dispatches to
//! rayon under the default `parallel` feature; `seq_map` is the like-for-like
//! sequential baseline.

use criterion::{black_box, criterion_group, criterion_main, BenchmarkId, Criterion};

use qplab::lattice::{make_cube, Frequency, TorusPoint};
use qplab::operator::{assemble, builtin_potential, OperatorParams, PotentialKind};
use qplab::par::{maybe_par_map, seq_map};
use qplab::spectral::eigh;

fn ops() -> OperatorParams {
    OperatorParams::new(
        1e-2,
        1e-2,
        Frequency::golden(1.5, 1e-3).unwrap(),
        builtin_potential(PotentialKind::Cosine { c: 1.0 }).unwrap(),
    )
    .unwrap()
}

fn theta_sweep(c: &mut Criterion) {
    let ops = ops();
    let block = make_cube(20.0, 1).unwrap();
    let thetas: Vec<f64> = (0..64).map(|i| i as f64 / 64.0).collect();
    let solve = |t: &f64| {
        let op = assemble(&ops, &block, TorusPoint::new(*t));
        eigh(&op).unwrap().eigenvalues[0]
    };

    let mut group = c.benchmark_group("theta_sweep_eigh");
    group.sample_size(10);
    group.bench_with_input(BenchmarkId::new("maybe_par", 64), &thetas, |b, ts| {
        b.iter(|| black_box(maybe_par_map(ts, solve)))
    });
    group.bench_with_input(BenchmarkId::new("sequential", 64), &thetas, |b, ts| {
        b.iter(|| black_box(seq_map(ts, solve)))
    });
    group.finish();
}

fn moment_synthesis(c: &mut Criterion) {
    let ops = ops();
    let times: Vec<f64> = (0..40).map(|i| 10f64.powf(5.0 * i as f64 / 39.0)).collect();
    let block = make_cube(60.0, 1).unwrap();
    let op = assemble(&ops, &block, TorusPoint::new(0.37));
    let spec = eigh(&op).unwrap();
    let origin = block.row(&[0]).unwrap();
    let weights: Vec<f64> = (0..spec.n).map(|a| spec.vector(a)[origin]).collect();
    let synth = |t: &f64| {
        let n = spec.n;
        let mut total = 0.0f64;
        for x in 0..n {
            let mut re = 0.0;
            let mut im = 0.0;
            for a in 0..n {
                let (s, c) = (t * spec.eigenvalues[a]).sin_cos();
                re += c * weights[a] * spec.vector(a)[x];
                im += s * weights[a] * spec.vector(a)[x];
            }
            total += (re * re + im * im).sqrt();
        }
        total
    };

    let mut group = c.benchmark_group("moment_synthesis");
    group.sample_size(10);
    group.bench_with_input(BenchmarkId::new("maybe_par", 40), &times, |b, ts| {
        b.iter(|| black_box(maybe_par_map(ts, synth)))
    });
    group.bench_with_input(BenchmarkId::new("sequential", 40), &times, |b, ts| {
        b.iter(|| black_box(seq_map(ts, synth)))
    });
    group.finish();
}

criterion_group!(benches, theta_sweep, moment_synthesis);
criterion_main!(benches);
