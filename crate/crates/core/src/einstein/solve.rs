//! Einstein-metric solvers.
//!
//! Production path: a damped multiplicative flow h ← h·exp(−η(iΛG_h − c)),
//! with the ε·log f regularizer of the continuity equation retained as an
//! annealed stabilizer and det f ≡ 1 enforced by trace projection. Step
//! sizes backtrack on the stage residual; on lattice fields the update
//! exponent is Fourier-damped so all frequencies contract at a comparable
//! rate.
//!
//! Divergence is a reported outcome, not an error: the dominant eigenspace
//! of f at blowup is handed back as a candidate destabilizing subbundle.
//!
//! The ε-continuity strategy (staged Newton in ε, ending with a Newton
//! polish at ε = 0) is implemented for constant-coefficient inputs.

use nalgebra::{Complex, DMatrix, DVector};
use num_complex::Complex64;

use super::{
    einstein_constant_flat, einstein_constant_higgs, k_field_flat, k_field_higgs,
    mean_normalize, DivergenceWitness, EinsteinReport, Side, SolveSchedule, Strategy,
};
use crate::bundle::ops::{
    const_higgs_coeffs, const_ilam_pseudocurvature, flatness_residual, integrability_residual,
};
use crate::bundle::{BundleMetric, Connection, HiggsOperator};
use crate::error::{Error, Result};
use crate::geometry::form::l2_norm;
use crate::geometry::{FormField, HermitianMetric};
use crate::linalg::{
    c, h_selfadjoint_exp, h_selfadjoint_log, herm_eig, mat_inverse, mat_mul, to_dmatrix, ONE,
    ZERO,
};
use crate::tol;

/// Determinant by Gaussian elimination (ranks ≤ 4).
fn mat_det(a: &[Complex64], r: usize) -> Complex64 {
    let mut m = a.to_vec();
    let mut det = ONE;
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
            return ZERO;
        }
        if piv != col {
            for j in 0..r {
                m.swap(col * r + j, piv * r + j);
            }
            det = -det;
        }
        let d = m[col * r + col];
        det *= d;
        for row in (col + 1)..r {
            let f = m[row * r + col] / d;
            for j in col..r {
                let v = m[col * r + j];
                m[row * r + j] -= f * v;
            }
        }
    }
    det
}

fn is_constant_metric(g: &HermitianMetric) -> bool {
    let n = g.n();
    for a in 0..n {
        for b in 0..n {
            let s = g.g_at(a, b);
            let first = s[0];
            if s.iter().any(|v| (v - first).norm() > 1e-13) {
                return false;
            }
        }
    }
    true
}

fn ginv_matrix(g: &HermitianMetric) -> Vec<Complex64> {
    let n = g.n();
    let mut m = vec![ZERO; n * n];
    for a in 0..n {
        for b in 0..n {
            m[a * n + b] = g.ginv_at(a, b)[0];
        }
    }
    m
}

/// Constant-mode Einstein operator K(H) as a matrix.
struct ConstProblem {
    side: Side,
    /// flat: (A′, A″); higgs: (θ, B)
    p: Vec<Vec<Complex64>>,
    q: Vec<Vec<Complex64>>,
    ginv: Vec<Complex64>,
    /// iΛF₀ of a line-bundle background, as a real scalar added to K
    background_k: f64,
    rank: usize,
}

impl ConstProblem {
    fn k(&self, hm: &[Complex64], hinv: &[Complex64]) -> Vec<Complex64> {
        let r = self.rank;
        let mut k = match self.side {
            Side::Flat => {
                let (theta, b01) = const_higgs_coeffs(&self.p, &self.q, hm, hinv, r);
                const_ilam_pseudocurvature(&theta, &b01, &self.ginv, r)
            }
            Side::Higgs => {
                // A′ = −B^{*h} + θ, A″ = B + θ^{*h}
                let n = self.p.len();
                let mut ap = Vec::with_capacity(n);
                let mut app = Vec::with_capacity(n);
                for a in 0..n {
                    let badj = h_adjoint(&self.q[a], hm, hinv, r);
                    let tadj = h_adjoint(&self.p[a], hm, hinv, r);
                    let mut apv = vec![ZERO; r * r];
                    let mut appv = vec![ZERO; r * r];
                    for kk in 0..r * r {
                        apv[kk] = self.p[a][kk] - badj[kk];
                        appv[kk] = self.q[a][kk] + tadj[kk];
                    }
                    ap.push(apv);
                    app.push(appv);
                }
                const_ilam_pseudocurvature(&ap, &app, &self.ginv, r)
            }
        };
        for i in 0..r {
            k[i * r + i] += c(self.background_k, 0.0);
        }
        k
    }
}

fn h_adjoint(a: &[Complex64], hm: &[Complex64], hinv: &[Complex64], r: usize) -> Vec<Complex64> {
    let mut adj = vec![ZERO; r * r];
    crate::linalg::mat_adjoint(&mut adj, a, r);
    let mut t = vec![ZERO; r * r];
    mat_mul(&mut t, &adj, hm, r);
    let mut out = vec![ZERO; r * r];
    mat_mul(&mut out, hinv, &t, r);
    out
}

/// h-weighted deviation norm sqrt(tr(M·M^{*h})·Vol).
fn const_resid_norm(m: &[Complex64], hm: &[Complex64], hinv: &[Complex64], r: usize, vol: f64) -> f64 {
    let madj = h_adjoint(m, hm, hinv, r);
    let mut prod = vec![ZERO; r * r];
    mat_mul(&mut prod, m, &madj, r);
    let tr: Complex64 = (0..r).map(|i| prod[i * r + i]).sum();
    (tr.re.max(0.0) * vol).sqrt()
}

fn witness_from_f(f: &[Complex64], h0: &[Complex64], r: usize) -> DivergenceWitness {
    // conjugate to the Hermitian frame: F = H0^{1/2} f H0^{-1/2}
    let hs = crate::linalg::herm_fn(h0, r, f64::sqrt);
    let hsi = crate::linalg::herm_fn(h0, r, |v| 1.0 / v.sqrt());
    let mut t = vec![ZERO; r * r];
    let mut fh = vec![ZERO; r * r];
    mat_mul(&mut t, &hs, f, r);
    mat_mul(&mut fh, &t, &hsi, r);
    for i in 0..r {
        for j in 0..=i {
            let avg = 0.5 * (fh[i * r + j] + fh[j * r + i].conj());
            fh[i * r + j] = avg;
            fh[j * r + i] = avg.conj();
        }
    }
    let (vals, vecs) = herm_eig(&fh, r);
    let lmax = vals[r - 1].max(1e-300);
    let lmin = vals[0].max(1e-300);
    // dominant cluster: eigenvalues within a factor 4 of the top
    let mut cols = Vec::new();
    for (i, &v) in vals.iter().enumerate() {
        if v > lmax / 4.0 {
            cols.push(i);
        }
    }
    if cols.len() == r {
        // no separation; report the single top direction
        cols = vec![r - 1];
    }
    let mut basis = Vec::new();
    for &ci in &cols {
        let mut col = DVector::zeros(r);
        for i in 0..r {
            col[i] = vecs[(i, ci)];
        }
        // back to the original frame
        let hsi_m = to_dmatrix(&hsi, r, r);
        let v = hsi_m * col;
        let norm = v.norm();
        basis.push((0..r).map(|i| v[i] / Complex::new(norm, 0.0)).collect());
    }
    DivergenceWitness {
        basis,
        log_spread: (lmax / lmin).ln(),
    }
}

fn const_flow(
    prob: &ConstProblem,
    h0: &BundleMetric,
    c_target: f64,
    vol: f64,
    schedule: &SolveSchedule,
) -> (BundleMetric, EinsteinReport) {
    let r = prob.rank;
    let h0m = h0.matrix_at(0);
    let mut hm = h0m.clone();
    let mut history = Vec::new();
    let mut iterations = 0usize;
    let mut witness = None;
    let mut diverged = false;
    let stages: Vec<f64> = if schedule.epsilon_schedule.is_empty() {
        vec![0.0]
    } else {
        schedule.epsilon_schedule.clone()
    };
    'outer: for (si, &eps) in stages.iter().enumerate() {
        let last_stage = si + 1 == stages.len();
        let mut hinv = mat_inverse(&hm, r).expect("metric invertible");
        let mut k = prob.k(&hm, &hinv);
        let mut eta = schedule.eta0.unwrap_or_else(|| {
            let kinf = crate::linalg::mat_frob(&k);
            0.1 / (1.0 + kinf)
        });
        for _ in 0..schedule.max_iters {
            iterations += 1;
            let h0inv = h0.inverse_at(0);
            let mut f = vec![ZERO; r * r];
            mat_mul(&mut f, &h0inv, &hm, r);
            let logf = h_selfadjoint_log(&f, &h0m, r);
            // stage residual R = K − c + ε·log f
            let mut rmat = k.clone();
            for i in 0..r {
                rmat[i * r + i] -= c(c_target, 0.0);
            }
            let true_resid = const_resid_norm(&rmat, &hm, &hinv, r, vol);
            for (v, l) in rmat.iter_mut().zip(&logf) {
                *v += c(eps, 0.0) * l;
            }
            let stage_resid = const_resid_norm(&rmat, &hm, &hinv, r, vol);
            history.push(true_resid);
            // blowup detection via the size of log f
            if crate::linalg::mat_frob(&logf) > 40.0 {
                witness = Some(witness_from_f(&f, &h0m, r));
                diverged = true;
                break 'outer;
            }
            if last_stage && true_resid < schedule.tol {
                break 'outer;
            }
            if !last_stage && stage_resid < schedule.tol.max(eps * 1e-3) {
                break;
            }
            // backtracking step on the stage residual
            let mut accepted = false;
            for _try in 0..25 {
                let mut step = rmat.clone();
                for v in &mut step {
                    *v *= c(-eta, 0.0);
                }
                let e = h_selfadjoint_exp(&step, &hm, r);
                let mut hnew = vec![ZERO; r * r];
                mat_mul(&mut hnew, &hm, &e, r);
                for i in 0..r {
                    for j in 0..=i {
                        let avg = 0.5 * (hnew[i * r + j] + hnew[j * r + i].conj());
                        hnew[i * r + j] = avg;
                        hnew[j * r + i] = avg.conj();
                    }
                }
                // det f = 1
                let mut fnew = vec![ZERO; r * r];
                mat_mul(&mut fnew, &h0inv, &hnew, r);
                let det = mat_det(&fnew, r);
                let scale = det.norm().powf(-1.0 / r as f64);
                for v in &mut hnew {
                    *v *= c(scale, 0.0);
                }
                let hinv_new = match mat_inverse(&hnew, r) {
                    Some(x) => x,
                    None => {
                        eta *= 0.5;
                        continue;
                    }
                };
                let knew = prob.k(&hnew, &hinv_new);
                let mut rnew = knew.clone();
                for i in 0..r {
                    rnew[i * r + i] -= c(c_target, 0.0);
                }
                let mut f2 = vec![ZERO; r * r];
                mat_mul(&mut f2, &h0inv, &hnew, r);
                let logf2 = h_selfadjoint_log(&f2, &h0m, r);
                for (v, l) in rnew.iter_mut().zip(&logf2) {
                    *v += c(eps, 0.0) * l;
                }
                let res_new = const_resid_norm(&rnew, &hnew, &hinv_new, r, vol);
                if res_new < stage_resid * (1.0 - 1e-6) || res_new < schedule.tol * 0.5 {
                    hm = hnew;
                    hinv = hinv_new;
                    k = knew;
                    eta = (eta * 1.2).min(2.0);
                    accepted = true;
                    break;
                }
                eta *= 0.5;
            }
            if !accepted {
                if last_stage {
                    // stalled: treat as non-convergence with witness
                    let mut f = vec![ZERO; r * r];
                    mat_mul(&mut f, &h0.inverse_at(0), &hm, r);
                    witness = Some(witness_from_f(&f, &h0m, r));
                    diverged = true;
                }
                break;
            }
        }
    }
    let hinv = mat_inverse(&hm, r).expect("metric invertible");
    let k = prob.k(&hm, &hinv);
    let trk: Complex64 = (0..r).map(|i| k[i * r + i]).sum();
    let c_mean = trk.re / r as f64;
    let mut dev = k;
    for i in 0..r {
        dev[i * r + i] -= c(c_mean, 0.0);
    }
    let residual_norm = {
        let mut rm = dev.clone();
        for i in 0..r {
            rm[i * r + i] += c(c_mean - c_target, 0.0);
        }
        const_resid_norm(&rm, &hm, &hinv, r, vol)
    };
    let converged = !diverged && residual_norm < schedule.tol;
    let h = BundleMetric::from_constant(h0.base().clone(), r, &hm).expect("metric stays positive");
    (
        h,
        EinsteinReport {
            residual_norm,
            c: c_mean,
            iterations,
            converged,
            history,
            witness,
        },
    )
}

/// Newton stages along the ε-continuity path (constant mode). Parametrizes
/// f = H₀^{-1/2} exp(X) H₀^{1/2} with X Hermitian traceless, so det f ≡ 1.
fn const_continuity(
    prob: &ConstProblem,
    h0: &BundleMetric,
    c_target: f64,
    vol: f64,
    schedule: &SolveSchedule,
) -> (BundleMetric, EinsteinReport) {
    let r = prob.rank;
    let h0m = h0.matrix_at(0);
    let hs = crate::linalg::herm_fn(&h0m, r, f64::sqrt);
    let hsi = crate::linalg::herm_fn(&h0m, r, |v| 1.0 / v.sqrt());
    // Hermitian traceless basis
    let mut basis: Vec<Vec<Complex64>> = Vec::new();
    for i in 1..r {
        let mut m = vec![ZERO; r * r];
        m[0] = ONE;
        m[i * r + i] = -ONE;
        basis.push(m);
    }
    for i in 0..r {
        for j in (i + 1)..r {
            let mut m = vec![ZERO; r * r];
            m[i * r + j] = ONE;
            m[j * r + i] = ONE;
            basis.push(m);
            let mut m2 = vec![ZERO; r * r];
            m2[i * r + j] = c(0.0, 1.0);
            m2[j * r + i] = c(0.0, -1.0);
            basis.push(m2);
        }
    }
    let nb = basis.len();
    let mut x = vec![0.0f64; nb];
    let h_of_x = |x: &[f64]| -> Vec<Complex64> {
        let mut xm = vec![ZERO; r * r];
        for (k, b) in basis.iter().enumerate() {
            for (v, bv) in xm.iter_mut().zip(b) {
                *v += c(x[k], 0.0) * bv;
            }
        }
        let ex = crate::linalg::herm_fn(&xm, r, f64::exp);
        // f = H0^{-1/2} e^X H0^{1/2}; H = H0 f = H0^{1/2} e^X H0^{1/2}
        let mut t = vec![ZERO; r * r];
        let mut h = vec![ZERO; r * r];
        mat_mul(&mut t, &hs, &ex, r);
        mat_mul(&mut h, &t, &hs, r);
        h
    };
    // residual vector in the Hermitian frame, flattened to real coords
    let resid_vec = |x: &[f64], eps: f64| -> Vec<f64> {
        let hm = h_of_x(x);
        let hinv = mat_inverse(&hm, r).expect("pd");
        let k = prob.k(&hm, &hinv);
        let mut rmat = k;
        for i in 0..r {
            rmat[i * r + i] -= c(c_target, 0.0);
        }
        if eps != 0.0 {
            // log f in the frame: exactly X
            let mut xm = vec![ZERO; r * r];
            for (kk, b) in basis.iter().enumerate() {
                for (v, bv) in xm.iter_mut().zip(b) {
                    *v += c(x[kk], 0.0) * bv;
                }
            }
            let mut t = vec![ZERO; r * r];
            let mut logf = vec![ZERO; r * r];
            mat_mul(&mut t, &hsi, &xm, r);
            mat_mul(&mut logf, &t, &hs, r);
            for (v, l) in rmat.iter_mut().zip(&logf) {
                *v += c(eps, 0.0) * l;
            }
        }
        // conjugate to Hermitian frame: H^{1/2} R H^{-1/2}
        let hs2 = crate::linalg::herm_fn(&hm, r, f64::sqrt);
        let hsi2 = crate::linalg::herm_fn(&hm, r, |v| 1.0 / v.sqrt());
        let mut t = vec![ZERO; r * r];
        let mut rh = vec![ZERO; r * r];
        mat_mul(&mut t, &hs2, &rmat, r);
        mat_mul(&mut rh, &t, &hsi2, r);
        let mut out = Vec::with_capacity(r * r);
        for i in 0..r {
            out.push(rh[i * r + i].re);
        }
        for i in 0..r {
            for j in (i + 1)..r {
                out.push(rh[i * r + j].re + rh[j * r + i].re);
                out.push(rh[i * r + j].im - rh[j * r + i].im);
            }
        }
        out
    };
    let mut iterations = 0;
    let mut history = Vec::new();
    let stages: Vec<f64> = {
        let mut s: Vec<f64> = schedule
            .epsilon_schedule
            .iter()
            .cloned()
            .filter(|&e| e > 0.0)
            .collect();
        if s.is_empty() {
            s = vec![1.0, 0.3, 0.1, 0.03, 0.01, 1e-3, 1e-4];
        }
        s.push(0.0);
        s
    };
    for &eps in &stages {
        for _ in 0..60 {
            iterations += 1;
            let f0 = resid_vec(&x, eps);
            let n0 = f0.iter().map(|v| v * v).sum::<f64>().sqrt();
            history.push(n0 * vol.sqrt());
            if n0 < schedule.tol * 0.1 {
                break;
            }
            // finite-difference Jacobian
            let m = f0.len();
            let mut jac = DMatrix::<f64>::zeros(m, nb);
            let dx = 1e-6 * (1.0 + x.iter().map(|v| v.abs()).fold(0.0, f64::max));
            for kcol in 0..nb {
                let mut xp = x.to_vec();
                xp[kcol] += dx;
                let fp = resid_vec(&xp, eps);
                for row in 0..m {
                    jac[(row, kcol)] = (fp[row] - f0[row]) / dx;
                }
            }
            let rhs = DVector::from_iterator(m, f0.iter().map(|v| -v));
            let svd = jac.svd(true, true);
            let step = svd.solve(&rhs, 1e-12).expect("lsq solve");
            // damped update
            let mut lam = 1.0;
            let mut improved = false;
            for _ in 0..20 {
                let xt: Vec<f64> = x
                    .iter()
                    .zip(step.iter())
                    .map(|(xv, sv)| xv + lam * sv)
                    .collect();
                let ft = resid_vec(&xt, eps);
                let nt = ft.iter().map(|v| v * v).sum::<f64>().sqrt();
                if nt < n0 {
                    x = xt;
                    improved = true;
                    break;
                }
                lam *= 0.5;
            }
            if !improved {
                break;
            }
            if x.iter().map(|v| v.abs()).fold(0.0, f64::max) > 40.0 {
                break;
            }
        }
    }
    // final report via the true residual
    let hm = h_of_x(&x);
    let hinv = mat_inverse(&hm, r).expect("pd");
    let k = prob.k(&hm, &hinv);
    let trk: Complex64 = (0..r).map(|i| k[i * r + i]).sum();
    let c_mean = trk.re / r as f64;
    let mut rmat = k;
    for i in 0..r {
        rmat[i * r + i] -= c(c_target, 0.0);
    }
    let residual_norm = const_resid_norm(&rmat, &hm, &hinv, r, vol);
    let converged = residual_norm < schedule.tol;
    let witness = if converged {
        None
    } else {
        let h0inv = h0.inverse_at(0);
        let mut f = vec![ZERO; r * r];
        mat_mul(&mut f, &h0inv, &hm, r);
        Some(witness_from_f(&f, &h0m, r))
    };
    let h = BundleMetric::from_constant(h0.base().clone(), r, &hm).expect("pd");
    (
        h,
        EinsteinReport {
            residual_norm,
            c: c_mean,
            iterations,
            converged,
            history,
            witness,
        },
    )
}

/// Lattice-mode flow on the full metric field.
fn lattice_flow(
    keval: &dyn Fn(&BundleMetric) -> Result<FormField>,
    g: &HermitianMetric,
    h0: &BundleMetric,
    c_target: f64,
    schedule: &SolveSchedule,
) -> Result<(BundleMetric, EinsteinReport)> {
    let r = h0.rank();
    let base = h0.base().clone();
    let np = base.npoints();
    let mut h = h0.clone();
    let mut history = Vec::new();
    let mut iterations = 0usize;
    let mut witness = None;
    let mut diverged = false;
    // Fourier damping profile from the scalar Laplacian symbol
    let damping: Option<Vec<f64>> = if schedule.spectral_damping {
        let op = crate::geometry::scalar_ops::EllipticOp::p_operator(g);
        Some(op.symbol_sqnorm().iter().map(|&s| s.sqrt()).collect())
    } else {
        None
    };
    let stages: Vec<f64> = if schedule.epsilon_schedule.is_empty() {
        vec![0.0]
    } else {
        schedule.epsilon_schedule.clone()
    };
    let resid_of = |k: &FormField, h: &BundleMetric, eps: f64, logf: &FormField| -> f64 {
        let mut dev = k.clone();
        let npts = dev.base().npoints();
        for i in 0..r {
            let slot = dev.slot_mut(0, i, i);
            for pt in 0..npts {
                slot[pt] -= c(c_target, 0.0);
            }
        }
        if eps != 0.0 {
            dev.add_scaled(logf, c(eps, 0.0)).unwrap();
        }
        l2_norm(&dev, g, Some(h))
    };
    let log_f_field = |h: &BundleMetric| -> FormField {
        let mut out = FormField::zero(base.clone(), vec![(0, 0)], r);
        for pt in 0..np {
            let h0m = h0.matrix_at(pt);
            let h0i = h0.inverse_at(pt);
            let hm = h.matrix_at(pt);
            let mut f = vec![ZERO; r * r];
            mat_mul(&mut f, &h0i, &hm, r);
            let lf = h_selfadjoint_log(&f, &h0m, r);
            out.set_matrix_at(0, pt, &lf);
        }
        out
    };
    'outer: for (si, &eps) in stages.iter().enumerate() {
        let last_stage = si + 1 == stages.len();
        let mut k = keval(&h)?;
        let mut eta = schedule.eta0.unwrap_or_else(|| 0.1 / (1.0 + k.max_abs()));
        for _ in 0..schedule.max_iters {
            iterations += 1;
            let logf = log_f_field(&h);
            let spread = logf.max_abs();
            if spread > 40.0 {
                let meanf = h0.relative_endomorphism(&h).harmonic_mean().matrix_at(0, 0);
                witness = Some(witness_from_f(&meanf, &h0.matrix_at(0), r));
                diverged = true;
                break 'outer;
            }
            let mut dev = k.clone();
            for i in 0..r {
                let slot = dev.slot_mut(0, i, i);
                for pt in 0..np {
                    slot[pt] -= c(c_target, 0.0);
                }
            }
            let true_resid = l2_norm(&dev, g, Some(&h));
            history.push(true_resid);
            let mut rfield = dev;
            if eps != 0.0 {
                rfield.add_scaled(&logf, c(eps, 0.0))?;
            }
            let stage_resid = l2_norm(&rfield, g, Some(&h));
            if last_stage && true_resid < schedule.tol {
                break 'outer;
            }
            if !last_stage && stage_resid < schedule.tol.max(eps * 1e-3) {
                break;
            }
            let mut accepted = false;
            for _try in 0..25 {
                let hc = step_metric(&h, &rfield, eta, &damping, &base, h0)?;
                let kc = keval(&hc)?;
                let logfc = log_f_field(&hc);
                let res_new = resid_of(&kc, &hc, eps, &logfc);
                if res_new < stage_resid * (1.0 - 1e-6) || res_new < schedule.tol * 0.5 {
                    h = hc;
                    k = kc;
                    eta = (eta * 1.2).min(2.0);
                    accepted = true;
                    break;
                }
                eta *= 0.5;
            }
            if !accepted {
                if last_stage && stage_resid > schedule.tol {
                    let meanf = h0.relative_endomorphism(&h).harmonic_mean().matrix_at(0, 0);
                    witness = Some(witness_from_f(&meanf, &h0.matrix_at(0), r));
                    diverged = true;
                }
                break;
            }
        }
    }
    let k = keval(&h)?;
    let (_, c_mean) = mean_normalize(&k, g)?;
    let mut dev = k;
    for i in 0..r {
        let slot = dev.slot_mut(0, i, i);
        for pt in 0..np {
            slot[pt] -= c(c_target, 0.0);
        }
    }
    let residual_norm = l2_norm(&dev, g, Some(&h));
    let converged = !diverged && residual_norm < schedule.tol;
    Ok((
        h,
        EinsteinReport {
            residual_norm,
            c: c_mean,
            iterations,
            converged,
            history,
            witness,
        },
    ))
}

/// One multiplicative step h ← h·exp(−η·W[R]) with optional Fourier damping
/// of the exponent and pointwise det-f normalization.
fn step_metric(
    h: &BundleMetric,
    rfield: &FormField,
    eta: f64,
    damping: &Option<Vec<f64>>,
    base: &crate::geometry::LatticeTorus,
    h0: &BundleMetric,
) -> Result<BundleMetric> {
    let r = h.rank();
    let np = base.npoints();
    let mut e = rfield.scaled(c(-eta, 0.0));
    if let Some(sym) = damping {
        let grid = base.grid();
        for i in 0..r {
            for j in 0..r {
                let mut spec = e.slot(0, i, j).to_vec();
                grid.fft_all(&mut spec, false);
                for (v, &s) in spec.iter_mut().zip(sym.iter()) {
                    *v /= c(1.0 + eta * s, 0.0);
                }
                grid.fft_all(&mut spec, true);
                e.slot_mut(0, i, j).copy_from_slice(&spec);
            }
        }
        // restore h-selfadjointness lost to the pointwise-varying frame
        let eadj = e.adjoint_h(Some(h));
        e = e.plus(&eadj)?.scaled(c(0.5, 0.0));
    }
    let mut data = vec![ZERO; r * r * np];
    for pt in 0..np {
        let hm = h.matrix_at(pt);
        let em = e.matrix_at(0, pt);
        let ex = h_selfadjoint_exp(&em, &hm, r);
        let mut hnew = vec![ZERO; r * r];
        mat_mul(&mut hnew, &hm, &ex, r);
        for i in 0..r {
            for j in 0..=i {
                let avg = 0.5 * (hnew[i * r + j] + hnew[j * r + i].conj());
                hnew[i * r + j] = avg;
                hnew[j * r + i] = avg.conj();
            }
        }
        // det f = 1 pointwise
        let h0i = h0.inverse_at(pt);
        let mut f = vec![ZERO; r * r];
        mat_mul(&mut f, &h0i, &hnew, r);
        let det = mat_det(&f, r);
        let scale = det.norm().powf(-1.0 / r as f64);
        for (slot, v) in hnew.iter().enumerate() {
            data[slot * np + pt] = v * c(scale, 0.0);
        }
    }
    BundleMetric::from_field(base.clone(), r, data)
}

fn build_const_problem(
    side: Side,
    p: &[Vec<Complex64>],
    q: &[Vec<Complex64>],
    g: &HermitianMetric,
    background: Option<&crate::bundle::LineBackground>,
    rank: usize,
) -> ConstProblem {
    let n = g.n();
    let ginv = ginv_matrix(g);
    let background_k = background
        .map(|bg| {
            // iΛF₀ = Σ ginv[β][α]·f0[α][β] (real scalar)
            let mut s = ZERO;
            for a in 0..n {
                for b in 0..n {
                    s += ginv[b * n + a] * bg.f0[a * n + b];
                }
            }
            s.re
        })
        .unwrap_or(0.0);
    ConstProblem {
        side,
        p: p.to_vec(),
        q: q.to_vec(),
        ginv,
        background_k,
        rank,
    }
}

/// Solve iΛ_g G_{f·h₀} = c·id for a flat connection. Divergence is reported
/// in the `EinsteinReport` (converged = false, witness attached), matching
/// the fact that non-polystable inputs must blow up.
pub fn solve_flat_einstein(
    d: &Connection,
    g: &HermitianMetric,
    h0: &BundleMetric,
    schedule: &SolveSchedule,
) -> Result<(BundleMetric, EinsteinReport)> {
    let fr = flatness_residual(d);
    if fr > tol::RESIDUAL_GATE {
        return Err(Error::ResidualGate {
            what: "flatness",
            value: fr,
            tol: tol::RESIDUAL_GATE,
        });
    }
    let c_target = einstein_constant_flat(d, g, h0)?;
    if let (Some((ap, app)), true, true) =
        (d.const_parts(), h0.is_constant(), is_constant_metric(g))
    {
        let prob = build_const_problem(Side::Flat, ap, app, g, d.background(), d.rank());
        let out = match schedule.strategy {
            Strategy::Flow => const_flow(&prob, h0, c_target, g.volume(), schedule),
            Strategy::Continuity => const_continuity(&prob, h0, c_target, g.volume(), schedule),
        };
        return Ok(out);
    }
    if schedule.strategy == Strategy::Continuity {
        return Err(Error::ConstantModeRequired);
    }
    let dc = d.clone();
    let gc = g.clone();
    lattice_flow(
        &move |h: &BundleMetric| k_field_flat(&dc, &gc, h),
        g,
        h0,
        c_target,
        schedule,
    )
}

/// Higgs-side mirror: solve iΛ_g F_{f·h₀} = c·id for an integrable d″.
pub fn solve_higgs_einstein(
    dpp: &HiggsOperator,
    g: &HermitianMetric,
    h0: &BundleMetric,
    schedule: &SolveSchedule,
) -> Result<(BundleMetric, EinsteinReport)> {
    let ir = integrability_residual(dpp);
    if ir > tol::RESIDUAL_GATE {
        return Err(Error::ResidualGate {
            what: "integrability",
            value: ir,
            tol: tol::RESIDUAL_GATE,
        });
    }
    let c_target = einstein_constant_higgs(dpp, g, h0)?;
    if let (Some((theta, b01)), true, true) =
        (dpp.const_parts(), h0.is_constant(), is_constant_metric(g))
    {
        let prob =
            build_const_problem(Side::Higgs, theta, b01, g, dpp.background(), dpp.rank());
        let out = match schedule.strategy {
            Strategy::Flow => const_flow(&prob, h0, c_target, g.volume(), schedule),
            Strategy::Continuity => const_continuity(&prob, h0, c_target, g.volume(), schedule),
        };
        return Ok(out);
    }
    if schedule.strategy == Strategy::Continuity {
        return Err(Error::ConstantModeRequired);
    }
    let dc = dpp.clone();
    let gc = g.clone();
    lattice_flow(
        &move |h: &BundleMetric| k_field_higgs(&dc, &gc, h),
        g,
        h0,
        c_target,
        schedule,
    )
}

/// Conformal transfer (flat side): given h Einstein for (D, g) and
/// g̃ = φ·g, produce h̃ = e^f·h Einstein for (D, g̃) by solving
/// P̃(f) = 4(c/φ − c̃).
pub fn conformal_transfer_flat(
    d: &Connection,
    g: &HermitianMetric,
    h: &BundleMetric,
    phi: &[f64],
) -> Result<(BundleMetric, f64)> {
    let rep = super::einstein_residual_flat(d, g, h)?;
    if rep.residual_norm > 1e-5 {
        return Err(Error::ResidualGate {
            what: "input Einstein residual",
            value: rep.residual_norm,
            tol: 1e-5,
        });
    }
    let g_tilde = g.conformal(phi)?;
    let rhs: Vec<f64> = phi.iter().map(|&p| 4.0 * rep.c / p).collect();
    let (f, c4) = crate::geometry::scalar_ops::solve_p(&rhs, &g_tilde)?;
    let h_tilde = h.conformal_exp(&f);
    Ok((h_tilde, c4 / 4.0))
}

/// Conformal transfer (Higgs side): F_{e^f·h} = F_h + ∂̄∂(f)·id, so the
/// transfer solves P̃(f) = c̃ − c/φ.
pub fn conformal_transfer_higgs(
    dpp: &HiggsOperator,
    g: &HermitianMetric,
    h: &BundleMetric,
    phi: &[f64],
) -> Result<(BundleMetric, f64)> {
    let rep = super::einstein_residual_higgs(dpp, g, h)?;
    if rep.residual_norm > 1e-5 {
        return Err(Error::ResidualGate {
            what: "input Einstein residual",
            value: rep.residual_norm,
            tol: 1e-5,
        });
    }
    let g_tilde = g.conformal(phi)?;
    let rhs: Vec<f64> = phi.iter().map(|&p| -rep.c / p).collect();
    let (f, cneg) = crate::geometry::scalar_ops::solve_p(&rhs, &g_tilde)?;
    let h_tilde = h.conformal_exp(&f);
    Ok((h_tilde, -cneg))
}

/// Deviation of h₂ from λ·h₁ minimized over λ > 0 (the uniqueness probe):
/// near zero certifies "unique up to a positive scalar" for simple inputs.
pub fn uniqueness_probe(h1: &BundleMetric, h2: &BundleMetric) -> f64 {
    let r = h1.rank();
    let np = h1.base().npoints();
    let mut num = 0.0f64;
    let mut den = 0.0f64;
    let mut n2 = 0.0f64;
    for i in 0..r {
        for j in 0..r {
            let a = h1.slot(i, j);
            let b = h2.slot(i, j);
            for pt in 0..np {
                num += (a[pt].conj() * b[pt]).re;
                den += a[pt].norm_sqr();
                n2 += b[pt].norm_sqr();
            }
        }
    }
    let lambda = (num / den).max(1e-300);
    let mut dev = 0.0f64;
    for i in 0..r {
        for j in 0..r {
            let a = h1.slot(i, j);
            let b = h2.slot(i, j);
            for pt in 0..np {
                dev += (b[pt] - c(lambda, 0.0) * a[pt]).norm_sqr();
            }
        }
    }
    (dev / n2.max(1e-300)).sqrt()
}
