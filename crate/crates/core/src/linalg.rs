//! Small dense complex-matrix helpers.
//!
//! Fiber ranks are at most 4 and base dimensions at most 2, so everything
//! here operates on flat `&[Complex64]` slices (row-major r×r) or small
//! nalgebra matrices. Hot per-grid-point kernels use the slice API; anything
//! that needs a factorization goes through nalgebra.

use nalgebra::{Complex, DMatrix, DVector};
use num_complex::Complex64;

pub const ZERO: Complex64 = Complex64::new(0.0, 0.0);
pub const ONE: Complex64 = Complex64::new(1.0, 0.0);
pub const I: Complex64 = Complex64::new(0.0, 1.0);

#[inline]
pub fn c(re: f64, im: f64) -> Complex64 {
    Complex64::new(re, im)
}

/// out = a * b for r×r row-major slices.
#[inline]
pub fn mat_mul(out: &mut [Complex64], a: &[Complex64], b: &[Complex64], r: usize) {
    for i in 0..r {
        for j in 0..r {
            let mut s = ZERO;
            for k in 0..r {
                s += a[i * r + k] * b[k * r + j];
            }
            out[i * r + j] = s;
        }
    }
}

/// out += scale * a * b
#[inline]
pub fn mat_mul_acc(
    out: &mut [Complex64],
    scale: Complex64,
    a: &[Complex64],
    b: &[Complex64],
    r: usize,
) {
    for i in 0..r {
        for j in 0..r {
            let mut s = ZERO;
            for k in 0..r {
                s += a[i * r + k] * b[k * r + j];
            }
            out[i * r + j] += scale * s;
        }
    }
}

/// Conjugate transpose.
#[inline]
pub fn mat_adjoint(out: &mut [Complex64], a: &[Complex64], r: usize) {
    for i in 0..r {
        for j in 0..r {
            out[i * r + j] = a[j * r + i].conj();
        }
    }
}

pub fn mat_identity(r: usize) -> Vec<Complex64> {
    let mut m = vec![ZERO; r * r];
    for i in 0..r {
        m[i * r + i] = ONE;
    }
    m
}

pub fn mat_trace(a: &[Complex64], r: usize) -> Complex64 {
    (0..r).map(|i| a[i * r + i]).sum()
}

pub fn mat_frob(a: &[Complex64]) -> f64 {
    a.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
}

/// Gauss-Jordan inverse with partial pivoting. Ranks here are ≤ 4, so this
/// is both fast and accurate enough.
pub fn mat_inverse(a: &[Complex64], r: usize) -> Option<Vec<Complex64>> {
    let mut m = a.to_vec();
    let mut inv = mat_identity(r);
    for col in 0..r {
        let mut piv = col;
        let mut best = m[col * r + col].norm();
        for row in (col + 1)..r {
            let v = m[row * r + col].norm();
            if v > best {
                best = v;
                piv = row;
            }
        }
        if best == 0.0 {
            return None;
        }
        if piv != col {
            for j in 0..r {
                m.swap(col * r + j, piv * r + j);
                inv.swap(col * r + j, piv * r + j);
            }
        }
        let d = m[col * r + col];
        for j in 0..r {
            m[col * r + j] /= d;
            inv[col * r + j] /= d;
        }
        for row in 0..r {
            if row == col {
                continue;
            }
            let f = m[row * r + col];
            if f == ZERO {
                continue;
            }
            for j in 0..r {
                let mcj = m[col * r + j];
                let icj = inv[col * r + j];
                m[row * r + j] -= f * mcj;
                inv[row * r + j] -= f * icj;
            }
        }
    }
    Some(inv)
}

pub fn to_dmatrix(a: &[Complex64], rows: usize, cols: usize) -> DMatrix<Complex<f64>> {
    DMatrix::from_fn(rows, cols, |i, j| a[i * cols + j])
}

pub fn from_dmatrix(m: &DMatrix<Complex<f64>>) -> Vec<Complex64> {
    let (rows, cols) = m.shape();
    let mut out = vec![ZERO; rows * cols];
    for i in 0..rows {
        for j in 0..cols {
            out[i * cols + j] = m[(i, j)];
        }
    }
    out
}

/// Eigen-decomposition of a Hermitian matrix given as a flat slice.
/// Returns (eigenvalues ascending, column eigenvectors).
pub fn herm_eig(a: &[Complex64], r: usize) -> (Vec<f64>, DMatrix<Complex<f64>>) {
    let m = to_dmatrix(a, r, r);
    let se = m.symmetric_eigen();
    let mut idx: Vec<usize> = (0..r).collect();
    idx.sort_by(|&i, &j| se.eigenvalues[i].partial_cmp(&se.eigenvalues[j]).unwrap());
    let vals = idx.iter().map(|&i| se.eigenvalues[i]).collect();
    let vecs = DMatrix::from_fn(r, r, |i, j| se.eigenvectors[(i, idx[j])]);
    (vals, vecs)
}

/// Apply a real function to a Hermitian matrix through its spectrum.
pub fn herm_fn(a: &[Complex64], r: usize, f: impl Fn(f64) -> f64) -> Vec<Complex64> {
    let (vals, vecs) = herm_eig(a, r);
    let d = DMatrix::from_diagonal(&DVector::from_iterator(
        r,
        vals.iter().map(|&v| Complex::new(f(v), 0.0)),
    ));
    from_dmatrix(&(&vecs * d * vecs.adjoint()))
}

/// exp(M) for a matrix that is selfadjoint with respect to the Hermitian
/// inner product H (i.e. H M is Hermitian). Conjugating by H^{1/2} reduces to
/// the Hermitian case.
pub fn h_selfadjoint_exp(m: &[Complex64], h: &[Complex64], r: usize) -> Vec<Complex64> {
    h_selfadjoint_fn(m, h, r, f64::exp)
}

pub fn h_selfadjoint_log(m: &[Complex64], h: &[Complex64], r: usize) -> Vec<Complex64> {
    h_selfadjoint_fn(m, h, r, f64::ln)
}

pub fn h_selfadjoint_fn(
    m: &[Complex64],
    h: &[Complex64],
    r: usize,
    f: impl Fn(f64) -> f64,
) -> Vec<Complex64> {
    let hs = herm_fn(h, r, f64::sqrt);
    let hsi = herm_fn(h, r, |v| 1.0 / v.sqrt());
    let mut t1 = vec![ZERO; r * r];
    let mut herm = vec![ZERO; r * r];
    mat_mul(&mut t1, &hs, m, r);
    mat_mul(&mut herm, &t1, &hsi, r);
    // symmetrize away round-off before the spectral call
    for i in 0..r {
        for j in 0..=i {
            let avg = 0.5 * (herm[i * r + j] + herm[j * r + i].conj());
            herm[i * r + j] = avg;
            herm[j * r + i] = avg.conj();
        }
    }
    let fh = herm_fn(&herm, r, f);
    mat_mul(&mut t1, &hsi, &fh, r);
    let mut out = vec![ZERO; r * r];
    mat_mul(&mut out, &t1, &hs, r);
    out
}

/// Smallest/largest eigenvalue of a Hermitian matrix.
pub fn herm_extremes(a: &[Complex64], r: usize) -> (f64, f64) {
    let (vals, _) = herm_eig(a, r);
    (vals[0], vals[r - 1])
}

/// Roots of a monic polynomial with the Durand–Kerner iteration.
/// Coefficients are `[c_0, c_1, .., c_{d-1}]` for x^d + c_{d-1} x^{d-1} + ... + c_0.
pub fn poly_roots(coeffs: &[Complex64]) -> Vec<Complex64> {
    let d = coeffs.len();
    if d == 0 {
        return vec![];
    }
    let eval = |x: Complex64| -> Complex64 {
        let mut v = ONE;
        for k in (0..d).rev() {
            v = v * x + coeffs[k];
        }
        v
    };
    let radius = 1.0
        + coeffs
            .iter()
            .map(|c| c.norm())
            .fold(0.0_f64, f64::max);
    let mut roots: Vec<Complex64> = (0..d)
        .map(|k| {
            let ang = 2.0 * std::f64::consts::PI * (k as f64 + 0.25) / d as f64;
            radius * c(ang.cos(), ang.sin())
        })
        .collect();
    for _ in 0..200 {
        let mut delta = 0.0_f64;
        for i in 0..d {
            let mut denom = ONE;
            for j in 0..d {
                if i != j {
                    denom *= roots[i] - roots[j];
                }
            }
            if denom.norm() < 1e-300 {
                continue;
            }
            let step = eval(roots[i]) / denom;
            roots[i] -= step;
            delta = delta.max(step.norm());
        }
        if delta < 1e-14 * radius.max(1.0) {
            break;
        }
    }
    roots
}

/// Eigenvalues of a small general complex matrix (Schur diagonal).
pub fn eigenvalues(a: &[Complex64], r: usize) -> Vec<Complex64> {
    let m = to_dmatrix(a, r, r);
    if let Some(s) = m.clone().try_schur(1e-14, 200 * r * r) {
        let (_, t) = s.unpack();
        return (0..r).map(|i| t[(i, i)]).collect();
    }
    // Schur can stall on defective matrices; fall back to char-poly roots.
    let coeffs = char_poly(a, r);
    poly_roots(&coeffs)
}

/// Characteristic polynomial coefficients via Faddeev–LeVerrier,
/// returned monic as `[c_0, .., c_{r-1}]`.
pub fn char_poly(a: &[Complex64], r: usize) -> Vec<Complex64> {
    let mut coeffs = vec![ZERO; r];
    let mut m = mat_identity(r);
    let mut cs = Vec::with_capacity(r);
    let mut work = vec![ZERO; r * r];
    for k in 1..=r {
        mat_mul(&mut work, a, &m, r);
        let ck = -mat_trace(&work, r) / c(k as f64, 0.0);
        cs.push(ck);
        m.copy_from_slice(&work);
        for i in 0..r {
            m[i * r + i] += ck;
        }
    }
    for (k, ck) in cs.iter().enumerate() {
        // cs[k-1] multiplies x^{r-k}
        coeffs[r - 1 - k] = *ck;
    }
    coeffs
}

/// Orthonormal basis for the (numerical) nullspace of `m`, columns of the
/// result. `tol` is relative to the largest singular value.
pub fn nullspace(m: &DMatrix<Complex<f64>>, tol: f64) -> DMatrix<Complex<f64>> {
    let cols = m.ncols();
    let svd = m.clone().svd(false, true);
    let smax = svd.singular_values.iter().cloned().fold(0.0_f64, f64::max);
    let cutoff = tol * smax.max(1.0);
    let vt = svd.v_t.expect("requested V^T");
    let mut keep = Vec::new();
    for i in 0..svd.singular_values.len() {
        if svd.singular_values[i] <= cutoff {
            keep.push(i);
        }
    }
    // rows of vt beyond the singular-value count also span the nullspace
    for i in svd.singular_values.len()..vt.nrows() {
        keep.push(i);
    }
    let mut out = DMatrix::zeros(cols, keep.len());
    for (j, &row) in keep.iter().enumerate() {
        for i in 0..cols {
            out[(i, j)] = vt[(row, i)].conj();
        }
    }
    out
}

/// Smallest singular value.
pub fn sigma_min(m: &DMatrix<Complex<f64>>) -> f64 {
    let svd = m.clone().svd(false, false);
    svd.singular_values
        .iter()
        .cloned()
        .fold(f64::INFINITY, f64::min)
}

/// Gram–Schmidt against the Hermitian inner product ⟨s,t⟩ = t^† H s.
/// Columns of `v` are orthonormalized in place-order; returns the basis.
pub fn h_orthonormalize(
    v: &DMatrix<Complex<f64>>,
    h: &DMatrix<Complex<f64>>,
) -> DMatrix<Complex<f64>> {
    let n = v.nrows();
    let k = v.ncols();
    let mut out = DMatrix::zeros(n, k);
    let mut kept = 0;
    for j in 0..k {
        let mut col = v.column(j).clone_owned();
        for l in 0..kept {
            let b = out.column(l).clone_owned();
            let proj = (b.adjoint() * h * &col)[(0, 0)];
            col -= b * proj;
        }
        let norm = (col.adjoint() * h * &col)[(0, 0)].re.max(0.0).sqrt();
        if norm > 1e-12 {
            out.set_column(kept, &(col / Complex::new(norm, 0.0)));
            kept += 1;
        }
    }
    out.columns(0, kept).clone_owned()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn inverse_roundtrip() {
        let a = [c(2.0, 1.0), c(0.3, -0.2), c(0.0, 0.5), c(1.5, 0.0)];
        let inv = mat_inverse(&a, 2).unwrap();
        let mut prod = vec![ZERO; 4];
        mat_mul(&mut prod, &a, &inv, 2);
        assert!((prod[0] - ONE).norm() < 1e-13);
        assert!(prod[1].norm() < 1e-13);
        assert!((prod[3] - ONE).norm() < 1e-13);
    }

    #[test]
    fn h_selfadjoint_exp_log_invert() {
        // H positive, M selfadjoint w.r.t. H: M = H^{-1} S with S Hermitian
        let h = [c(2.0, 0.0), c(0.4, 0.3), c(0.4, -0.3), c(1.0, 0.0)];
        let s = [c(0.5, 0.0), c(0.1, -0.7), c(0.1, 0.7), c(-0.2, 0.0)];
        let hinv = mat_inverse(&h, 2).unwrap();
        let mut m = vec![ZERO; 4];
        mat_mul(&mut m, &hinv, &s, 2);
        let e = h_selfadjoint_exp(&m, &h, 2);
        let back = h_selfadjoint_log(&e, &h, 2);
        for k in 0..4 {
            assert!((back[k] - m[k]).norm() < 1e-10, "entry {k}");
        }
    }

    #[test]
    fn char_poly_matches_eigenvalues() {
        let a = [
            c(1.0, 0.0),
            c(2.0, 0.0),
            c(0.0, 0.0),
            c(3.0, 0.0),
        ];
        let mut eig = eigenvalues(&a, 2);
        eig.sort_by(|x, y| x.re.partial_cmp(&y.re).unwrap());
        assert!((eig[0] - c(1.0, 0.0)).norm() < 1e-10);
        assert!((eig[1] - c(3.0, 0.0)).norm() < 1e-10);
        let roots = poly_roots(&char_poly(&a, 2));
        let mut sum: Complex64 = roots.iter().sum();
        sum -= c(4.0, 0.0);
        assert!(sum.norm() < 1e-9);
    }

    #[test]
    fn nullspace_of_projection() {
        let m = to_dmatrix(&[ONE, ZERO, ZERO, ZERO], 2, 2);
        let ns = nullspace(&m, 1e-10);
        assert_eq!(ns.ncols(), 1);
        assert!(ns[(0, 0)].norm() < 1e-12);
        assert!((ns[(1, 0)].norm() - 1.0).abs() < 1e-12);
    }
}
