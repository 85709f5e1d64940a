//! Dense helpers: subspaces via SVD, Hermitian extremes, Schur reordering and
//! triangular Sylvester solves.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64 as C64;

pub type CMat = DMatrix<C64>;
pub type CVec = DVector<C64>;

pub fn c(x: f64) -> C64 {
    C64::new(x, 0.0)
}

pub fn cmat_from_real(rows: usize, cols: usize, data: &[f64]) -> CMat {
    CMat::from_row_slice(rows, cols, &data.iter().map(|&x| c(x)).collect::<Vec<_>>())
}

pub fn spectral_norm(m: &CMat) -> f64 {
    singular_values(m).first().copied().unwrap_or(0.0)
}

fn to_faer(m: &CMat) -> faer::Mat<C64> {
    faer::Mat::from_fn(m.nrows(), m.ncols(), |i, j| m[(i, j)])
}

// nalgebra's SVD returns wrong singular vectors for some rank-deficient
// inputs, so all SVDs go through faer.
pub fn singular_values(m: &CMat) -> Vec<f64> {
    if m.is_empty() {
        return Vec::new();
    }
    let mut s = to_faer(m).singular_values().expect("svd did not converge");
    s.sort_by(|a, b| b.partial_cmp(a).unwrap());
    s
}

pub fn sigma_min(m: &CMat) -> f64 {
    singular_values(m).last().copied().unwrap_or(0.0)
}

/// Smallest eigenvalue of the Hermitian part `(m + m^*)/2`.
pub fn lambda_min_hermitian_part(m: &CMat) -> f64 {
    let h = (m + m.adjoint()) * c(0.5);
    if h.nrows() == 1 {
        return h[(0, 0)].re;
    }
    h.symmetric_eigen().eigenvalues.min()
}

pub fn hermitian_eigen(h: &CMat) -> (Vec<f64>, CMat) {
    let e = h.clone().symmetric_eigen();
    let mut idx: Vec<usize> = (0..h.nrows()).collect();
    idx.sort_by(|&a, &b| e.eigenvalues[a].partial_cmp(&e.eigenvalues[b]).unwrap());
    let vals = idx.iter().map(|&i| e.eigenvalues[i]).collect();
    let vecs = CMat::from_fn(h.nrows(), h.ncols(), |r, k| e.eigenvectors[(r, idx[k])]);
    (vals, vecs)
}

/// Full SVD: `u` is `r x r`, `v` is `c x c`, singular values descend.
fn full_svd(m: &CMat) -> (CMat, Vec<f64>, CMat) {
    let (r, cdim) = m.shape();
    let svd = to_faer(m).svd().expect("svd did not converge");
    let (u, d, v) = (svd.U(), svd.S().column_vector(), svd.V());
    let k = r.min(cdim);
    let mut idx: Vec<usize> = (0..k).collect();
    idx.sort_by(|&a, &b| d[b].re.partial_cmp(&d[a].re).unwrap());
    let s = idx.iter().map(|&i| d[i].re).collect();
    // keep the trailing (null) vectors in place after the sorted leading ones
    let perm = |i: usize| if i < k { idx[i] } else { i };
    let u = CMat::from_fn(r, r, |a, b| u[(a, perm(b))]);
    let v = CMat::from_fn(cdim, cdim, |a, b| v[(a, perm(b))]);
    (u, s, v)
}

/// Numerical rank with threshold `tol * sigma_max`.
pub fn rank(m: &CMat, tol: f64) -> usize {
    let s = singular_values(m);
    let smax = s.first().copied().unwrap_or(0.0);
    if smax == 0.0 {
        return 0;
    }
    s.iter().filter(|&&x| x > tol * smax).count()
}

/// Orthonormal basis of `ran m`.
pub fn orth(m: &CMat, tol: f64) -> CMat {
    orth_scaled(m, tol, 0.0)
}

/// Like [`orth`], with the threshold `tol * max(scale, sigma_max)`.
pub fn orth_scaled(m: &CMat, tol: f64, scale: f64) -> CMat {
    if m.ncols() == 0 || m.nrows() == 0 {
        return CMat::zeros(m.nrows(), 0);
    }
    let (u, s, _) = full_svd(m);
    let smax = s[0];
    let thresh = tol * scale.max(smax);
    let r = if smax == 0.0 { 0 } else { s.iter().take(m.nrows().min(m.ncols())).filter(|&&x| x > thresh).count() };
    u.columns(0, r).into_owned()
}

/// First `d` left singular vectors of `m`.
pub fn leading_left(m: &CMat, d: usize) -> CMat {
    if d == 0 || m.nrows() == 0 {
        return CMat::zeros(m.nrows(), 0);
    }
    let (u, _, _) = full_svd(m);
    u.columns(0, d.min(m.nrows())).into_owned()
}

/// Orthonormal basis of `ker m`; `scale` sets the absolute threshold together with `tol`.
pub fn null_space(m: &CMat, tol: f64, scale: f64) -> CMat {
    let n = m.ncols();
    if m.nrows() == 0 || n == 0 {
        return CMat::identity(n, n);
    }
    let (_, s, v) = full_svd(m);
    let thresh = tol * scale.max(s[0]);
    let r = if s[0] == 0.0 { 0 } else { s.iter().take(m.nrows().min(n)).filter(|&&x| x > thresh).count() };
    v.columns(r, n - r).into_owned()
}

/// Sine of the largest principal angle; `1` when dimensions differ.
pub fn subspace_distance(a: &CMat, b: &CMat) -> f64 {
    if a.ncols() != b.ncols() {
        return 1.0;
    }
    if a.ncols() == 0 {
        return 0.0;
    }
    let proj = b * b.adjoint();
    let r = a - &proj * a;
    spectral_norm(&r)
}

pub fn orthogonal_projector(basis: &CMat) -> CMat {
    basis * basis.adjoint()
}

/// Moore-Penrose pseudoinverse with relative cutoff.
pub fn pinv(m: &CMat, tol: f64) -> CMat {
    let (u, s, v) = full_svd(m);
    let smax = s.first().copied().unwrap_or(0.0);
    let k = m.nrows().min(m.ncols());
    let mut out = CMat::zeros(m.ncols(), m.nrows());
    for i in 0..k {
        if smax > 0.0 && s[i] > tol * smax {
            out += v.column(i) * u.column(i).adjoint() * c(1.0 / s[i]);
        }
    }
    out
}

pub fn inverse(m: &CMat) -> Option<CMat> {
    m.clone().try_inverse()
}

/// Complex Schur form `a = z t z^*`.
pub fn schur(a: &CMat) -> (CMat, CMat) {
    let (z, t) = a.clone().schur().unpack();
    let mut t = t;
    for j in 0..t.ncols() {
        for i in j + 1..t.nrows() {
            t[(i, j)] = c(0.0);
        }
    }
    (z, t)
}

/// Swaps diagonal entries `i` and `i+1` of the upper-triangular `t`, updating `z`.
pub fn swap_adjacent(t: &mut CMat, z: &mut CMat, i: usize) {
    let n = t.nrows();
    let t11 = t[(i, i)];
    let t22 = t[(i + 1, i + 1)];
    let v1 = t[(i, i + 1)];
    let v2 = t22 - t11;
    let nrm = (v1.norm_sqr() + v2.norm_sqr()).sqrt();
    if nrm == 0.0 {
        return;
    }
    // first column: eigenvector of t22 in the 2x2 block
    let g11 = v1 / nrm;
    let g21 = v2 / nrm;
    let g12 = -g21.conj();
    let g22 = g11.conj();
    // rows: t <- g^* t
    for j in 0..n {
        let a = t[(i, j)];
        let b = t[(i + 1, j)];
        t[(i, j)] = g11.conj() * a + g21.conj() * b;
        t[(i + 1, j)] = g12.conj() * a + g22.conj() * b;
    }
    // columns: t <- t g, z <- z g
    for r in 0..n {
        let a = t[(r, i)];
        let b = t[(r, i + 1)];
        t[(r, i)] = a * g11 + b * g21;
        t[(r, i + 1)] = a * g12 + b * g22;
        let a = z[(r, i)];
        let b = z[(r, i + 1)];
        z[(r, i)] = a * g11 + b * g21;
        z[(r, i + 1)] = a * g12 + b * g22;
    }
    t[(i + 1, i)] = c(0.0);
    t[(i, i)] = t22;
    t[(i + 1, i + 1)] = t11;
}

/// Reorders the Schur form so that diagonal positions flagged in `to_bottom`
/// end up in the trailing block, preserving relative order otherwise.
pub fn reorder_schur(t: &mut CMat, z: &mut CMat, to_bottom: &[bool]) {
    let mut flags = to_bottom.to_vec();
    let n = flags.len();
    loop {
        let mut moved = false;
        for i in 0..n.saturating_sub(1) {
            if flags[i] && !flags[i + 1] {
                swap_adjacent(t, z, i);
                flags.swap(i, i + 1);
                moved = true;
            }
        }
        if !moved {
            break;
        }
    }
}

/// Solves `a x - x b = rhs` with `a`, `b` upper triangular.
pub fn sylvester_upper(a: &CMat, b: &CMat, rhs: &CMat) -> CMat {
    let k = a.nrows();
    let l = b.nrows();
    let mut x = CMat::zeros(k, l);
    for j in 0..l {
        let mut col: Vec<C64> = (0..k).map(|i| rhs[(i, j)]).collect();
        for p in 0..j {
            let bpj = b[(p, j)];
            if bpj != c(0.0) {
                for i in 0..k {
                    col[i] += x[(i, p)] * bpj;
                }
            }
        }
        let mu = b[(j, j)];
        for i in (0..k).rev() {
            let mut s = col[i];
            for q in i + 1..k {
                s -= a[(i, q)] * x[(q, j)];
            }
            x[(i, j)] = s / (a[(i, i)] - mu);
        }
    }
    x
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random(rng: &mut ChaCha8Rng, r: usize, k: usize) -> CMat {
        CMat::from_fn(r, k, |_, _| C64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)))
    }

    #[test]
    fn orth_and_null() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let b = random(&mut rng, 5, 2);
        let m = &b * random(&mut rng, 2, 4);
        let o = orth(&m, 1e-10);
        assert_eq!(o.ncols(), 2);
        assert!(subspace_distance(&o, &orth(&b, 1e-10)) < 1e-12);
        let k = null_space(&m, 1e-10, 0.0);
        assert_eq!(k.ncols(), 2);
        assert!((&m * &k).norm() < 1e-12);
        assert_eq!(rank(&m, 1e-10), 2);
        let z = CMat::zeros(3, 3);
        assert_eq!(orth(&z, 1e-10).ncols(), 0);
        assert_eq!(null_space(&z, 1e-10, 0.0).ncols(), 3);
    }

    #[test]
    fn rank_one_left_vectors() {
        // nalgebra returns a wrong leading vector for this input
        let d = [0.11398069091464627, -0.8860844789167637, 0.0056126647593080226, -0.04363278629632131, 0.02054534097534176, -0.1597192261795939, 0.02020609489775314, -0.15708193137577853];
        let m = cmat_from_real(4, 2, &d);
        let u = orth(&m, 1e-8);
        assert_eq!(u.ncols(), 1);
        assert!((&u * u.adjoint() * &m - &m).norm() < 1e-14);
    }

    #[test]
    fn pinv_identities() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let m = random(&mut rng, 4, 2) * random(&mut rng, 2, 5);
        let p = pinv(&m, 1e-12);
        assert!((&m * &p * &m - &m).norm() < 1e-12);
        assert!((&p * &m * &p - &p).norm() < 1e-12);
    }

    #[test]
    fn schur_reordering() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let a = random(&mut rng, 6, 6);
        let (mut z, mut t) = schur(&a);
        let flags: Vec<bool> = (0..6).map(|i| t[(i, i)].norm() < 1.0).collect();
        let count = flags.iter().filter(|&&f| f).count();
        reorder_schur(&mut t, &mut z, &flags);
        assert!((&z * &t * z.adjoint() - &a).norm() < 1e-12);
        for i in 0..6 {
            let small = t[(i, i)].norm() < 1.0;
            assert_eq!(small, i >= 6 - count);
            for j in 0..i {
                assert_eq!(t[(i, j)], c(0.0));
            }
        }
    }

    #[test]
    fn sylvester_solution() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let mut a = random(&mut rng, 3, 3).upper_triangle();
        for i in 0..3 {
            a[(i, i)] += c(3.0);
        }
        let b = random(&mut rng, 2, 2).upper_triangle();
        let r = random(&mut rng, 3, 2);
        let x = sylvester_upper(&a, &b, &r);
        assert!((&a * &x - &x * &b - r).norm() < 1e-12);
    }

    #[test]
    fn hermitian_extremes() {
        let m = cmat_from_real(2, 2, &[2.0, 1.0, 1.0, 2.0]);
        assert!((lambda_min_hermitian_part(&m) - 1.0).abs() < 1e-14);
        let (vals, vecs) = hermitian_eigen(&m);
        assert!((vals[0] - 1.0).abs() < 1e-14 && (vals[1] - 3.0).abs() < 1e-14);
        assert!((&m * vecs.column(1) - vecs.column(1) * c(3.0)).norm() < 1e-13);
    }
}
