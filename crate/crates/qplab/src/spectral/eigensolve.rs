//! Dense symmetric eigensolver: Householder reduction to tridiagonal form
//! followed by the implicitly shifted QL iteration, with a hard cap of 30
//! sweeps per eigenvalue. Ported from the classical EISPACK `tred2`/`tql2`
//! routines (Bowdler, Martin, Reinsch, Wilkinson; Handbook for Automatic
//! Computation, Vol. II).
//!
//! Matrices already in tridiagonal form (every `|i−j| ≥ 2` entry exactly
//! zero) skip the Householder phase entirely; one-dimensional restrictions
//! assemble as tridiagonal, so their eigensolves are cheap.

use crate::error::Error;
use crate::Result;

const MAX_QL_SWEEPS: usize = 30;

/// Householder reduction of a symmetric matrix to tridiagonal form with
/// accumulation of the orthogonal transformation.
///
/// `v` holds the matrix row-major on entry and the accumulated transformation
/// on exit (column `j` of `v` is the `j`-th basis vector). `d` receives the
/// diagonal, `e` the subdiagonal with `e[0] = 0`, `e[i] = T[i][i−1]`.
fn tred2(n: usize, v: &mut [f64], d: &mut [f64], e: &mut [f64]) {
    for j in 0..n {
        d[j] = v[(n - 1) * n + j];
    }

    for i in (1..n).rev() {
        let mut h = 0.0f64;
        let mut scale = 0.0f64;
        for item in d.iter().take(i) {
            scale += item.abs();
        }
        if scale == 0.0 {
            e[i] = d[i - 1];
            for j in 0..i {
                d[j] = v[(i - 1) * n + j];
                v[i * n + j] = 0.0;
                v[j * n + i] = 0.0;
            }
        } else {
            for item in d.iter_mut().take(i) {
                *item /= scale;
                h += *item * *item;
            }
            let f = d[i - 1];
            let mut g = h.sqrt();
            if f > 0.0 {
                g = -g;
            }
            e[i] = scale * g;
            h -= f * g;
            d[i - 1] = f - g;
            for item in e.iter_mut().take(i) {
                *item = 0.0;
            }

            // similarity transformation applied to the remaining columns
            for j in 0..i {
                let f = d[j];
                v[j * n + i] = f;
                let mut g = e[j] + v[j * n + j] * f;
                for k in (j + 1)..i {
                    g += v[k * n + j] * d[k];
                    e[k] += v[k * n + j] * f;
                }
                e[j] = g;
            }
            let mut f = 0.0;
            for j in 0..i {
                e[j] /= h;
                f += e[j] * d[j];
            }
            let hh = f / (h + h);
            for j in 0..i {
                e[j] -= hh * d[j];
            }
            for j in 0..i {
                let f = d[j];
                let g = e[j];
                for k in j..i {
                    v[k * n + j] -= f * e[k] + g * d[k];
                }
                d[j] = v[(i - 1) * n + j];
                v[i * n + j] = 0.0;
            }
        }
        d[i] = h;
    }

    // accumulate the transformations
    for i in 0..(n - 1) {
        v[(n - 1) * n + i] = v[i * n + i];
        v[i * n + i] = 1.0;
        let h = d[i + 1];
        if h != 0.0 {
            for (k, item) in d.iter_mut().enumerate().take(i + 1) {
                *item = v[k * n + i + 1] / h;
            }
            for j in 0..=i {
                let mut g = 0.0;
                for k in 0..=i {
                    g += v[k * n + i + 1] * v[k * n + j];
                }
                for (k, item) in d.iter().enumerate().take(i + 1) {
                    v[k * n + j] -= g * item;
                }
            }
        }
        for k in 0..=i {
            v[k * n + i + 1] = 0.0;
        }
    }
    for j in 0..n {
        d[j] = v[(n - 1) * n + j];
        v[(n - 1) * n + j] = 0.0;
    }
    v[(n - 1) * n + n - 1] = 1.0;
    e[0] = 0.0;
}

/// Implicitly shifted QL on a symmetric tridiagonal matrix.
///
/// On entry `d` is the diagonal and `e[i]` connects `i` and `i+1` (`e[n−1]`
/// ignored). If `v` is `Some`, the rotations are accumulated into it (JAMA
/// layout: column `j` is the `j`-th vector). Eigenvalues come out ascending
/// with matching column order.
fn tql(n: usize, d: &mut [f64], e: &mut [f64], mut v: Option<&mut [f64]>) -> Result<()> {
    if n == 0 {
        return Ok(());
    }
    e[n - 1] = 0.0;
    let eps = 2.0f64.powi(-52);
    let mut f = 0.0f64;
    let mut tst1 = 0.0f64;

    for l in 0..n {
        tst1 = tst1.max(d[l].abs() + e[l].abs());
        let mut m = l;
        while m < n {
            if e[m].abs() <= eps * tst1 {
                break;
            }
            m += 1;
        }
        if m == n {
            m = n - 1;
        }

        if m > l {
            let mut iter = 0usize;
            loop {
                iter += 1;
                if iter > MAX_QL_SWEEPS {
                    return Err(Error::NumericFailure(format!(
                        "QL failed to converge for eigenvalue {l} of {n} after {MAX_QL_SWEEPS} sweeps \
                         (|e| = {:e}, threshold {:e})",
                        e[l].abs(),
                        eps * tst1
                    )));
                }

                // implicit shift
                let g = d[l];
                let mut p = (d[l + 1] - g) / (2.0 * e[l]);
                let mut r = p.hypot(1.0);
                if p < 0.0 {
                    r = -r;
                }
                d[l] = e[l] / (p + r);
                d[l + 1] = e[l] * (p + r);
                let dl1 = d[l + 1];
                let mut h = g - d[l];
                for item in d.iter_mut().take(n).skip(l + 2) {
                    *item -= h;
                }
                f += h;

                // QL sweep
                p = d[m];
                let mut c = 1.0f64;
                let mut c2 = c;
                let mut c3 = c;
                let el1 = e[l + 1];
                let mut s = 0.0f64;
                let mut s2 = 0.0f64;
                for i in (l..m).rev() {
                    c3 = c2;
                    c2 = c;
                    s2 = s;
                    let g = c * e[i];
                    h = c * p;
                    r = p.hypot(e[i]);
                    e[i + 1] = s * r;
                    s = e[i] / r;
                    c = p / r;
                    p = c * d[i] - s * g;
                    d[i + 1] = h + s * (c * g + s * d[i]);

                    if let Some(vv) = v.as_deref_mut() {
                        for k in 0..n {
                            let h = vv[k * n + i + 1];
                            vv[k * n + i + 1] = s * vv[k * n + i] + c * h;
                            vv[k * n + i] = c * vv[k * n + i] - s * h;
                        }
                    }
                }
                p = -s * s2 * c3 * el1 * e[l] / dl1;
                e[l] = s * p;
                d[l] = c * p;

                if e[l].abs() <= eps * tst1 {
                    break;
                }
            }
        }
        d[l] += f;
        e[l] = 0.0;
    }

    // sort ascending, reordering columns alongside
    for i in 0..n.saturating_sub(1) {
        let mut k = i;
        let mut p = d[i];
        for j in (i + 1)..n {
            if d[j] < p {
                k = j;
                p = d[j];
            }
        }
        if k != i {
            d[k] = d[i];
            d[i] = p;
            if let Some(vv) = v.as_deref_mut() {
                for r in 0..n {
                    vv.swap(r * n + i, r * n + k);
                }
            }
        }
    }
    Ok(())
}

/// True when every entry beyond the first off-diagonal is exactly zero.
fn is_tridiagonal(a: &[f64], n: usize) -> bool {
    for i in 0..n {
        for j in (i + 2)..n {
            if a[i * n + j] != 0.0 || a[j * n + i] != 0.0 {
                return false;
            }
        }
    }
    true
}

/// Full eigendecomposition of a dense symmetric matrix (row-major).
///
/// Returns ascending eigenvalues and eigenvectors stored contiguously:
/// `vectors[k·n .. (k+1)·n]` is the unit eigenvector of `values[k]`.
pub fn symmetric_eigen(a: &[f64], n: usize) -> Result<(Vec<f64>, Vec<f64>)> {
    assert_eq!(a.len(), n * n, "matrix size mismatch");
    if n == 0 {
        return Ok((Vec::new(), Vec::new()));
    }
    let mut d = vec![0.0f64; n];
    let mut e = vec![0.0f64; n];
    let mut v;
    if is_tridiagonal(a, n) {
        for i in 0..n {
            d[i] = a[i * n + i];
            if i + 1 < n {
                e[i] = a[i * n + i + 1];
            }
        }
        v = vec![0.0f64; n * n];
        for i in 0..n {
            v[i * n + i] = 1.0;
        }
    } else {
        v = a.to_vec();
        tred2(n, &mut v, &mut d, &mut e);
        // shift EISPACK's e (subdiagonal at [i, i-1]) to the QL convention
        for i in 1..n {
            e[i - 1] = e[i];
        }
        e[n - 1] = 0.0;
    }
    tql(n, &mut d, &mut e, Some(&mut v))?;

    // transpose into eigenvector-contiguous layout
    let mut vectors = vec![0.0f64; n * n];
    for k in 0..n {
        for i in 0..n {
            vectors[k * n + i] = v[i * n + k];
        }
    }
    Ok((d, vectors))
}

/// Eigenvalues (ascending) of a symmetric tridiagonal matrix given its
/// diagonal and off-diagonal (`e[i]` connects `i` and `i+1`).
pub fn tridiagonal_eigenvalues(mut d: Vec<f64>, mut e: Vec<f64>) -> Result<Vec<f64>> {
    let n = d.len();
    if n == 0 {
        return Ok(d);
    }
    if e.len() + 1 == n {
        e.push(0.0);
    }
    assert_eq!(e.len(), n, "off-diagonal length must be n or n-1");
    tql(n, &mut d, &mut e, None)?;
    Ok(d)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn matvec(a: &[f64], n: usize, x: &[f64], y: &mut [f64]) {
        for i in 0..n {
            let mut acc = 0.0;
            for j in 0..n {
                acc += a[i * n + j] * x[j];
            }
            y[i] = acc;
        }
    }

    fn check_decomposition(a: &[f64], n: usize, tol: f64) {
        let (vals, vecs) = symmetric_eigen(a, n).unwrap();
        let scale = 1.0 + vals.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        let mut y = vec![0.0; n];
        for k in 0..n {
            let u = &vecs[k * n..(k + 1) * n];
            matvec(a, n, u, &mut y);
            let res: f64 = y
                .iter()
                .zip(u)
                .map(|(yi, ui)| (yi - vals[k] * ui) * (yi - vals[k] * ui))
                .sum::<f64>()
                .sqrt();
            assert!(res <= tol * scale, "residual {res} for eigenvalue {k}");
        }
        for k in 0..n {
            for l in k..n {
                let dot: f64 = (0..n).map(|i| vecs[k * n + i] * vecs[l * n + i]).sum();
                let expect = if k == l { 1.0 } else { 0.0 };
                assert!((dot - expect).abs() < tol, "gram[{k}][{l}] = {dot}");
            }
        }
        for k in 1..n {
            assert!(vals[k] >= vals[k - 1]);
        }
    }

    #[test]
    fn one_by_one() {
        let (vals, vecs) = symmetric_eigen(&[3.25], 1).unwrap();
        assert_eq!(vals, vec![3.25]);
        assert_eq!(vecs, vec![1.0]);
    }

    #[test]
    fn two_by_two_swap() {
        let a = [0.0, 1.0, 1.0, 0.0];
        let (vals, _) = symmetric_eigen(&a, 2).unwrap();
        assert!((vals[0] + 1.0).abs() < 1e-14);
        assert!((vals[1] - 1.0).abs() < 1e-14);
        check_decomposition(&a, 2, 1e-12);
    }

    #[test]
    fn random_dense_matrices() {
        use rand::Rng;
        use rand::SeedableRng;
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(42);
        for n in [3usize, 10, 50] {
            for _ in 0..5 {
                let mut a = vec![0.0f64; n * n];
                for i in 0..n {
                    for j in 0..=i {
                        let x = rng.gen_range(-1.0..1.0);
                        a[i * n + j] = x;
                        a[j * n + i] = x;
                    }
                }
                check_decomposition(&a, n, 1e-10);
            }
        }
    }

    #[test]
    fn tridiagonal_path_matches_dense() {
        use rand::Rng;
        use rand::SeedableRng;
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(43);
        let n = 40;
        let d: Vec<f64> = (0..n).map(|_| rng.gen_range(-2.0..2.0)).collect();
        let e: Vec<f64> = (0..n - 1).map(|_| rng.gen_range(-0.5..0.5)).collect();
        let mut a = vec![0.0f64; n * n];
        for i in 0..n {
            a[i * n + i] = d[i];
            if i + 1 < n {
                a[i * n + i + 1] = e[i];
                a[(i + 1) * n + i] = e[i];
            }
        }
        check_decomposition(&a, n, 1e-12);
        let vals_fast = tridiagonal_eigenvalues(d, e).unwrap();
        let (vals_dense, _) = symmetric_eigen(&a, n).unwrap();
        for (x, y) in vals_fast.iter().zip(&vals_dense) {
            assert!((x - y).abs() < 1e-12);
        }
    }

    #[test]
    fn diagonal_degenerate_input() {
        let a = [2.0, 0.0, 0.0, 0.0, 2.0, 0.0, 0.0, 0.0, -1.0];
        let (vals, _) = symmetric_eigen(&a, 3).unwrap();
        assert_eq!(vals, vec![-1.0, 2.0, 2.0]);
        check_decomposition(&a, 3, 1e-13);
    }
}
