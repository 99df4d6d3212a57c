//! Kernel and smallest-singular-value searches for connections and Higgs
//! operators acting on sections.
//!
//! Constant-coefficient operators block-diagonalize over Fourier modes:
//! on the mode e^{2πi m·x} the operator is a small stacked matrix, so the
//! global σ_min and the kernel sections are exact per-mode quantities.
//! Lattice-mode operators are assembled densely at desk-scale grids.

use nalgebra::{Complex, DMatrix, DVector};
use num_complex::Complex64;

use crate::bundle::{Connection, HiggsOperator};
use crate::error::Result;
use crate::geometry::{FormField, LatticeTorus};
use crate::linalg::{c, sigma_min, ZERO};

/// Iterate all signed frequency vectors of the grid.
pub fn grid_modes(base: &LatticeTorus) -> Vec<Vec<i64>> {
    let grid = base.grid();
    let naxes = base.dims().len();
    let mut out = Vec::with_capacity(grid.npoints);
    for idx in 0..grid.npoints {
        let mut m = vec![0i64; naxes];
        let mut rem = idx;
        for ax in 0..naxes {
            let k = rem / grid.strides[ax];
            rem %= grid.strides[ax];
            m[ax] = crate::geometry::grid::Grid::freq(k, base.dims()[ax]);
        }
        out.push(m);
    }
    out
}

/// Per-mode matrix of D on sections: rows stack the dz^α components
/// (ζ_α(m)·I + A′_α) and the dz̄^β components (ζ̄_β(m)·I + A″_β).
pub fn connection_mode_matrix(
    ap: &[Vec<Complex64>],
    app: &[Vec<Complex64>],
    base: &LatticeTorus,
    rank: usize,
    m: &[i64],
) -> DMatrix<Complex<f64>> {
    let n = base.n();
    let mut out = DMatrix::zeros(2 * n * rank, rank);
    for a in 0..n {
        let z = base.zeta(a, m);
        for i in 0..rank {
            for j in 0..rank {
                let mut v = ap[a][i * rank + j];
                if i == j {
                    v += z;
                }
                out[(a * rank + i, j)] = v;
            }
        }
    }
    for b in 0..n {
        let z = base.zeta_bar(b, m);
        for i in 0..rank {
            for j in 0..rank {
                let mut v = app[b][i * rank + j];
                if i == j {
                    v += z;
                }
                out[((n + b) * rank + i, j)] = v;
            }
        }
    }
    out
}

/// Per-mode matrix of d″ = ∂̄ + θ on sections: the ∂̄ rows carry the
/// derivative symbol, the θ rows are purely multiplicative.
pub fn higgs_mode_matrix(
    theta: &[Vec<Complex64>],
    b01: &[Vec<Complex64>],
    base: &LatticeTorus,
    rank: usize,
    m: &[i64],
) -> DMatrix<Complex<f64>> {
    let n = base.n();
    let mut out = DMatrix::zeros(2 * n * rank, rank);
    for b in 0..n {
        let z = base.zeta_bar(b, m);
        for i in 0..rank {
            for j in 0..rank {
                let mut v = b01[b][i * rank + j];
                if i == j {
                    v += z;
                }
                out[(b * rank + i, j)] = v;
            }
        }
    }
    for a in 0..n {
        for i in 0..rank {
            for j in 0..rank {
                out[((n + a) * rank + i, j)] = theta[a][i * rank + j];
            }
        }
    }
    out
}

/// A near-kernel section of a constant-coefficient operator: the Fourier
/// mode and the fiber vector.
#[derive(Debug, Clone)]
pub struct KernelMode {
    pub mode: Vec<i64>,
    pub vector: Vec<Complex64>,
    pub singular_value: f64,
}

pub struct ModeScan {
    pub sigma_min: f64,
    pub kernel: Vec<KernelMode>,
}

fn scan_modes(
    base: &LatticeTorus,
    rank: usize,
    tol: f64,
    matrix_of: impl Fn(&[i64]) -> DMatrix<Complex<f64>>,
) -> ModeScan {
    let mut best = f64::INFINITY;
    let mut kernel = Vec::new();
    for m in grid_modes(base) {
        let mat = matrix_of(&m);
        let svd = mat.clone().svd(false, true);
        let mut smin = f64::INFINITY;
        let mut arg = 0usize;
        for (i, &s) in svd.singular_values.iter().enumerate() {
            if s < smin {
                smin = s;
                arg = i;
            }
        }
        best = best.min(smin);
        if smin < tol {
            let vt = svd.v_t.as_ref().expect("v_t");
            let v: Vec<Complex64> = (0..rank).map(|i| vt[(arg, i)].conj()).collect();
            kernel.push(KernelMode {
                mode: m,
                vector: v,
                singular_value: smin,
            });
        }
    }
    ModeScan {
        sigma_min: best,
        kernel,
    }
}

/// σ_min of D on sections and its near-kernel modes (constant mode only).
pub fn connection_kernel_scan(d: &Connection, tol: f64) -> Result<ModeScan> {
    let (ap, app) = d
        .const_parts()
        .ok_or(crate::error::Error::ConstantModeRequired)?;
    let base = d.base();
    let rank = d.rank();
    Ok(scan_modes(base, rank, tol, |m| {
        connection_mode_matrix(ap, app, base, rank, m)
    }))
}

/// σ_min of d″ on sections and its near-kernel modes (constant mode only).
pub fn higgs_kernel_scan(dpp: &HiggsOperator, tol: f64) -> Result<ModeScan> {
    let (theta, b01) = dpp
        .const_parts()
        .ok_or(crate::error::Error::ConstantModeRequired)?;
    let base = dpp.base();
    let rank = dpp.rank();
    Ok(scan_modes(base, rank, tol, |m| {
        higgs_mode_matrix(theta, b01, base, rank, m)
    }))
}

/// ‖d″(s)‖/‖s‖ for a kernel mode section against a constant-mode Higgs
/// operator (exact per-mode evaluation).
pub fn higgs_apply_ratio(dpp: &HiggsOperator, km: &KernelMode) -> Result<f64> {
    let (theta, b01) = dpp
        .const_parts()
        .ok_or(crate::error::Error::ConstantModeRequired)?;
    let mat = higgs_mode_matrix(theta, b01, dpp.base(), dpp.rank(), &km.mode);
    let v = DVector::from_iterator(dpp.rank(), km.vector.iter().cloned());
    let out = mat * &v;
    Ok(out.norm() / v.norm().max(1e-300))
}

/// Apply a lattice connection to a section field (layout [fiber]·np + pt).
pub fn apply_connection_to_section(
    a10: &FormField,
    a01: &FormField,
    s: &[Complex64],
) -> Vec<Complex64> {
    let base = a10.base();
    let n = base.n();
    let r = a10.rank();
    let np = base.npoints();
    // output layout: [comp (2n: dz then dz̄)][fiber]·np + pt
    let mut out = vec![ZERO; 2 * n * r * np];
    for a in 0..n {
        let ca = a10.find_comp(1 << a, 0).unwrap();
        for i in 0..r {
            let ds = base.d_z(&s[i * np..(i + 1) * np], a);
            let dst = &mut out[(a * r + i) * np..(a * r + i + 1) * np];
            dst.copy_from_slice(&ds);
        }
        for pt in 0..np {
            let am = a10.matrix_at(ca, pt);
            for i in 0..r {
                let mut acc = ZERO;
                for j in 0..r {
                    acc += am[i * r + j] * s[j * np + pt];
                }
                out[(a * r + i) * np + pt] += acc;
            }
        }
    }
    for b in 0..n {
        let cb = a01.find_comp(0, 1 << b).unwrap();
        for i in 0..r {
            let ds = base.d_zbar(&s[i * np..(i + 1) * np], b);
            let dst = &mut out[((n + b) * r + i) * np..((n + b) * r + i + 1) * np];
            dst.copy_from_slice(&ds);
        }
        for pt in 0..np {
            let am = a01.matrix_at(cb, pt);
            for i in 0..r {
                let mut acc = ZERO;
                for j in 0..r {
                    acc += am[i * r + j] * s[j * np + pt];
                }
                out[((n + b) * r + i) * np + pt] += acc;
            }
        }
    }
    out
}

/// Dense matrix of a linear map given by a closure (desk-scale only).
pub fn dense_operator_matrix(
    dim_in: usize,
    dim_out: usize,
    apply: impl Fn(&[Complex64]) -> Vec<Complex64>,
) -> DMatrix<Complex<f64>> {
    let mut m = DMatrix::zeros(dim_out, dim_in);
    let mut e = vec![ZERO; dim_in];
    for col in 0..dim_in {
        e[col] = c(1.0, 0.0);
        let out = apply(&e);
        for row in 0..dim_out {
            m[(row, col)] = out[row];
        }
        e[col] = ZERO;
    }
    m
}

/// σ_min of a lattice-mode connection on sections via the dense assembly.
pub fn lattice_connection_sigma_min(d: &Connection) -> f64 {
    let base = d.base();
    let n = base.n();
    let r = d.rank();
    let np = base.npoints();
    let a10 = d.a10_field();
    let a01 = d.a01_field();
    let m = dense_operator_matrix(r * np, 2 * n * r * np, |s| {
        apply_connection_to_section(&a10, &a01, s)
    });
    sigma_min(&m)
}

/// Near-null sections of a lattice connection (columns), with σ values.
pub fn lattice_connection_kernel(
    d: &Connection,
    tol: f64,
) -> (Vec<Vec<Complex64>>, Vec<f64>) {
    let base = d.base();
    let n = base.n();
    let r = d.rank();
    let np = base.npoints();
    let a10 = d.a10_field();
    let a01 = d.a01_field();
    let m = dense_operator_matrix(r * np, 2 * n * r * np, |s| {
        apply_connection_to_section(&a10, &a01, s)
    });
    let svd = m.svd(false, true);
    let vt = svd.v_t.expect("v_t");
    let mut sections = Vec::new();
    let mut sigmas = Vec::new();
    for (i, &s) in svd.singular_values.iter().enumerate() {
        if s < tol {
            sections.push((0..r * np).map(|k| vt[(i, k)].conj()).collect());
            sigmas.push(s);
        }
    }
    (sections, sigmas)
}

/// Apply a lattice Higgs operator to a section field; layout as in
/// [`apply_connection_to_section`] with ∂̄ rows first.
pub fn apply_higgs_to_section(
    theta: &FormField,
    b01: &FormField,
    s: &[Complex64],
) -> Vec<Complex64> {
    let base = theta.base();
    let n = base.n();
    let r = theta.rank();
    let np = base.npoints();
    let mut out = vec![ZERO; 2 * n * r * np];
    for b in 0..n {
        let cb = b01.find_comp(0, 1 << b).unwrap();
        for i in 0..r {
            let ds = base.d_zbar(&s[i * np..(i + 1) * np], b);
            out[(b * r + i) * np..(b * r + i + 1) * np].copy_from_slice(&ds);
        }
        for pt in 0..np {
            let am = b01.matrix_at(cb, pt);
            for i in 0..r {
                let mut acc = ZERO;
                for j in 0..r {
                    acc += am[i * r + j] * s[j * np + pt];
                }
                out[(b * r + i) * np + pt] += acc;
            }
        }
    }
    for a in 0..n {
        let ca = theta.find_comp(1 << a, 0).unwrap();
        for pt in 0..np {
            let am = theta.matrix_at(ca, pt);
            for i in 0..r {
                let mut acc = ZERO;
                for j in 0..r {
                    acc += am[i * r + j] * s[j * np + pt];
                }
                out[((n + a) * r + i) * np + pt] = acc;
            }
        }
    }
    out
}
