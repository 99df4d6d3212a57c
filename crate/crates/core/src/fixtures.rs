//! Seeded fixture generators for connections, Higgs operators, metrics, and
//! gauge fields. Everything is driven by one explicit ChaCha stream so runs
//! are reproducible from a single u64 seed.

use num_complex::Complex64;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::bundle::{BundleMetric, Connection, HiggsOperator};
use crate::geometry::{FormField, HermitianMetric, LatticeTorus};
use crate::linalg::{c, mat_identity, mat_inverse, mat_mul, ZERO};

pub type Seed = u64;

pub fn rng(seed: Seed) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn gauss(rng: &mut ChaCha8Rng) -> f64 {
    // Box–Muller
    let u1: f64 = rng.random::<f64>().max(1e-12);
    let u2: f64 = rng.random();
    (-2.0 * u1.ln()).sqrt() * (2.0 * std::f64::consts::PI * u2).cos()
}

pub fn cgauss(rng: &mut ChaCha8Rng) -> Complex64 {
    c(gauss(rng), gauss(rng)) * c(std::f64::consts::FRAC_1_SQRT_2, 0.0)
}

pub fn random_matrix(rng: &mut ChaCha8Rng, r: usize) -> Vec<Complex64> {
    (0..r * r).map(|_| cgauss(rng)).collect()
}

/// Random unitary via QR of a Gaussian matrix.
pub fn random_unitary(rng: &mut ChaCha8Rng, r: usize) -> Vec<Complex64> {
    let m = random_matrix(rng, r);
    let dm = crate::linalg::to_dmatrix(&m, r, r);
    let qr = dm.qr();
    crate::linalg::from_dmatrix(&qr.q())
}

/// Random invertible matrix with moderate condition number.
pub fn random_invertible(rng: &mut ChaCha8Rng, r: usize) -> Vec<Complex64> {
    loop {
        let mut m = random_matrix(rng, r);
        for i in 0..r {
            m[i * r + i] += c(2.0, 0.0);
        }
        if mat_inverse(&m, r).is_some() {
            return m;
        }
    }
}

/// Random Hermitian positive-definite matrix, eigenvalues in
/// [e^{-spread}, e^{spread}].
pub fn random_hpd(rng: &mut ChaCha8Rng, r: usize, spread: f64) -> Vec<Complex64> {
    let u = random_unitary(rng, r);
    let mut d = vec![ZERO; r * r];
    for i in 0..r {
        d[i * r + i] = c((spread * (2.0 * rng.random::<f64>() - 1.0)).exp(), 0.0);
    }
    let mut t = vec![ZERO; r * r];
    let mut ua = vec![ZERO; r * r];
    crate::linalg::mat_adjoint(&mut ua, &u, r);
    mat_mul(&mut t, &u, &d, r);
    let mut out = vec![ZERO; r * r];
    mat_mul(&mut out, &t, &ua, r);
    // re-hermitize round-off
    for i in 0..r {
        for j in 0..=i {
            let avg = 0.5 * (out[i * r + j] + out[j * r + i].conj());
            out[i * r + j] = avg;
            out[j * r + i] = avg.conj();
        }
    }
    out
}

/// Joint eigenvalue tuples with a minimum pairwise gap (so classification
/// and eigenspace clustering stay unambiguous).
fn separated_eigenvalues(rng: &mut ChaCha8Rng, count: usize, axes: usize) -> Vec<Vec<Complex64>> {
    loop {
        let cand: Vec<Vec<Complex64>> = (0..count)
            .map(|_| (0..axes).map(|_| cgauss(rng) * c(0.8, 0.0)).collect())
            .collect();
        let mut ok = true;
        for i in 0..count {
            for j in (i + 1)..count {
                let d: f64 = (0..axes)
                    .map(|a| (cand[i][a] - cand[j][a]).norm_sqr())
                    .sum::<f64>()
                    .sqrt();
                if d < 0.35 {
                    ok = false;
                }
            }
        }
        if ok {
            return cand;
        }
    }
}

/// The kind of constant-mode flat connection to synthesize.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FlatKind {
    /// rank 1 (always stable)
    Line,
    /// commuting normal family in a unitary frame — already Einstein at h = id
    PolystableUnitary,
    /// commuting diagonalizable family conjugated by a non-unitary frame
    PolystableSkew,
    /// commuting family with a nontrivial Jordan block — not polystable
    Nilpotent,
}

/// Random constant-coefficient flat connection. All 2n component matrices
/// commute (flatness), with structure picked by `kind`.
pub fn random_flat_connection(
    rng: &mut ChaCha8Rng,
    base: &LatticeTorus,
    rank: usize,
    kind: FlatKind,
) -> Connection {
    let n = base.n();
    let axes = 2 * n;
    match kind {
        FlatKind::Line => {
            let ap: Vec<Vec<Complex64>> = (0..n).map(|_| vec![cgauss(rng)]).collect();
            let app: Vec<Vec<Complex64>> = (0..n).map(|_| vec![cgauss(rng)]).collect();
            Connection::constant(base.clone(), 1, ap, app).unwrap()
        }
        FlatKind::PolystableUnitary | FlatKind::PolystableSkew => {
            let frame = if kind == FlatKind::PolystableUnitary {
                random_unitary(rng, rank)
            } else {
                random_invertible(rng, rank)
            };
            let finv = mat_inverse(&frame, rank).unwrap();
            let eigs = separated_eigenvalues(rng, rank, axes);
            let mut mats = Vec::with_capacity(axes);
            for a in 0..axes {
                let mut d = vec![ZERO; rank * rank];
                for i in 0..rank {
                    d[i * rank + i] = eigs[i][a];
                }
                let mut t = vec![ZERO; rank * rank];
                mat_mul(&mut t, &frame, &d, rank);
                let mut m = vec![ZERO; rank * rank];
                mat_mul(&mut m, &t, &finv, rank);
                mats.push(m);
            }
            let (ap, app) = mats.split_at(n);
            Connection::constant(base.clone(), rank, ap.to_vec(), app.to_vec()).unwrap()
        }
        FlatKind::Nilpotent => {
            assert!(rank >= 2, "nilpotent fixture needs rank ≥ 2");
            // single Jordan block J plus commuting polynomials in J
            let mut jordan = vec![ZERO; rank * rank];
            for i in 0..rank - 1 {
                jordan[i * rank + i + 1] = c(1.0, 0.0);
            }
            let frame = random_invertible(rng, rank);
            let finv = mat_inverse(&frame, rank).unwrap();
            let mut mats = Vec::with_capacity(axes);
            for ax in 0..axes {
                let lam = cgauss(rng) * c(0.5, 0.0);
                let coef = if ax == 0 { c(1.0, 0.0) } else { cgauss(rng) };
                let mut m = mat_identity(rank);
                for v in &mut m {
                    *v *= lam;
                }
                for (mv, jv) in m.iter_mut().zip(&jordan) {
                    *mv += coef * jv;
                }
                let mut t = vec![ZERO; rank * rank];
                mat_mul(&mut t, &frame, &m, rank);
                let mut out = vec![ZERO; rank * rank];
                mat_mul(&mut out, &t, &finv, rank);
                mats.push(out);
            }
            let (ap, app) = mats.split_at(n);
            Connection::constant(base.clone(), rank, ap.to_vec(), app.to_vec()).unwrap()
        }
    }
}

/// Random constant-mode integrable Higgs operator: the family {B_β, θ_α}
/// commutes. `nilpotent_theta` puts a Jordan block in θ.
pub fn random_higgs_operator(
    rng: &mut ChaCha8Rng,
    base: &LatticeTorus,
    rank: usize,
    nilpotent_theta: bool,
) -> HiggsOperator {
    let n = base.n();
    if nilpotent_theta {
        let mut jordan = vec![ZERO; rank * rank];
        for i in 0..rank - 1 {
            jordan[i * rank + i + 1] = c(1.0, 0.0);
        }
        let theta: Vec<Vec<Complex64>> = (0..n)
            .map(|a| {
                if a == 0 {
                    jordan.clone()
                } else {
                    let co = cgauss(rng);
                    jordan.iter().map(|v| v * co).collect()
                }
            })
            .collect();
        let b01: Vec<Vec<Complex64>> = (0..n)
            .map(|_| {
                let lam = cgauss(rng) * c(0.4, 0.0);
                let co = cgauss(rng) * c(0.3, 0.0);
                let mut m = mat_identity(rank);
                for v in &mut m {
                    *v *= lam;
                }
                for (mv, jv) in m.iter_mut().zip(&jordan) {
                    *mv += co * jv;
                }
                m
            })
            .collect();
        HiggsOperator::constant(base.clone(), rank, theta, b01).unwrap()
    } else {
        let frame = random_invertible(rng, rank);
        let finv = mat_inverse(&frame, rank).unwrap();
        let eigs = separated_eigenvalues(rng, rank, 2 * n);
        let mut mats = Vec::with_capacity(2 * n);
        for a in 0..2 * n {
            let mut d = vec![ZERO; rank * rank];
            for i in 0..rank {
                d[i * rank + i] = eigs[i][a];
            }
            let mut t = vec![ZERO; rank * rank];
            mat_mul(&mut t, &frame, &d, rank);
            let mut m = vec![ZERO; rank * rank];
            mat_mul(&mut m, &t, &finv, rank);
            mats.push(m);
        }
        let (theta, b01) = mats.split_at(n);
        HiggsOperator::constant(base.clone(), rank, theta.to_vec(), b01.to_vec()).unwrap()
    }
}

/// Smooth real scalar field: low trigonometric modes with given amplitude.
pub fn smooth_real_field(rng: &mut ChaCha8Rng, base: &LatticeTorus, amplitude: f64) -> Vec<f64> {
    let np = base.npoints();
    let axes = base.dims().len();
    let tp = 2.0 * std::f64::consts::PI;
    let mut modes = Vec::new();
    for ax in 0..axes {
        modes.push((ax, 1.0, rng.random::<f64>() * tp, gauss(rng)));
        modes.push((ax, 2.0, rng.random::<f64>() * tp, 0.35 * gauss(rng)));
    }
    let mut out = vec![0.0; np];
    for pt in 0..np {
        let uv = base.point_coords(pt);
        let mut v = 0.0;
        for &(ax, k, phase, amp) in &modes {
            v += amp * (tp * k * uv[ax] + phase).cos();
        }
        out[pt] = amplitude * v;
    }
    out
}

/// Frequency-1 trig field (one cosine per axis, random phase/amplitude).
fn lowest_mode_field(rng: &mut ChaCha8Rng, base: &LatticeTorus) -> Vec<f64> {
    let np = base.npoints();
    let axes = base.dims().len();
    let tp = 2.0 * std::f64::consts::PI;
    let modes: Vec<(usize, f64, f64)> = (0..axes)
        .map(|ax| (ax, rng.random::<f64>() * tp, gauss(rng)))
        .collect();
    let mut out = vec![0.0; np];
    for pt in 0..np {
        let uv = base.point_coords(pt);
        out[pt] = modes
            .iter()
            .map(|&(ax, phase, amp)| amp * (tp * uv[ax] + phase).cos())
            .sum();
    }
    out
}

/// Smooth positive scalar field 1 + (bounded perturbation).
pub fn smooth_positive_field(
    rng: &mut ChaCha8Rng,
    base: &LatticeTorus,
    amplitude: f64,
) -> Vec<f64> {
    let raw = smooth_real_field(rng, base, amplitude);
    let maxv = raw.iter().map(|v| v.abs()).fold(0.0, f64::max);
    let scale = if maxv > 0.8 { 0.8 / maxv } else { 1.0 };
    raw.iter().map(|&v| 1.0 + scale * v).collect()
}

/// Smooth invertible gauge transformation f = exp(M(x)) with M a small
/// random matrix-valued trig polynomial.
pub fn smooth_gauge(
    rng: &mut ChaCha8Rng,
    base: &LatticeTorus,
    rank: usize,
    amplitude: f64,
) -> FormField {
    let np = base.npoints();
    let mut entries = Vec::with_capacity(rank * rank);
    for _ in 0..rank * rank {
        let re = lowest_mode_field(rng, base);
        let im = lowest_mode_field(rng, base);
        entries.push((re, im));
    }
    // normalize so max ‖M(x)‖_F = amplitude; with only frequency-1 content
    // in M, the spectral tail of exp(M) at the grid cutoff is amplitude^{N/2}/(N/2)!,
    // far below the lattice-mode tolerances
    let mut maxfrob = 0.0f64;
    for pt in 0..np {
        let fr: f64 = entries
            .iter()
            .map(|(re, im)| re[pt] * re[pt] + im[pt] * im[pt])
            .sum::<f64>()
            .sqrt();
        maxfrob = maxfrob.max(fr);
    }
    let scale = if maxfrob > 0.0 { amplitude / maxfrob } else { 0.0 };
    let mut out = FormField::zero(base.clone(), vec![(0, 0)], rank);
    for pt in 0..np {
        let mut m = vec![ZERO; rank * rank];
        for (k, (re, im)) in entries.iter().enumerate() {
            m[k] = c(scale * re[pt], scale * im[pt]);
        }
        let e = matrix_exp(&m, rank);
        out.set_matrix_at(0, pt, &e);
    }
    out
}

fn matrix_exp(m: &[Complex64], r: usize) -> Vec<Complex64> {
    let norm = crate::linalg::mat_frob(m);
    let s = (norm.log2().ceil().max(0.0) as u32).min(30);
    let scale = c(2f64.powi(-(s as i32)), 0.0);
    let ms: Vec<Complex64> = m.iter().map(|v| v * scale).collect();
    // Taylor to order 12 on the scaled matrix
    let mut term = mat_identity(r);
    let mut acc = mat_identity(r);
    for k in 1..=12 {
        let mut next = vec![ZERO; r * r];
        mat_mul(&mut next, &term, &ms, r);
        for v in &mut next {
            *v /= c(k as f64, 0.0);
        }
        for (a, b) in acc.iter_mut().zip(&next) {
            *a += b;
        }
        term = next;
    }
    for _ in 0..s {
        let mut sq = vec![ZERO; r * r];
        mat_mul(&mut sq, &acc, &acc, r);
        acc = sq;
    }
    acc
}

/// Random smooth bundle metric H(x) = L(x)·L(x)^† with L = exp(small M).
pub fn random_bundle_metric(
    rng: &mut ChaCha8Rng,
    base: &LatticeTorus,
    rank: usize,
    amplitude: f64,
) -> BundleMetric {
    let l = smooth_gauge(rng, base, rank, amplitude);
    let np = base.npoints();
    let mut data = vec![ZERO; rank * rank * np];
    for pt in 0..np {
        let lm = l.matrix_at(0, pt);
        let mut la = vec![ZERO; rank * rank];
        crate::linalg::mat_adjoint(&mut la, &lm, rank);
        let mut h = vec![ZERO; rank * rank];
        mat_mul(&mut h, &lm, &la, rank);
        for i in 0..rank {
            for j in 0..rank {
                data[(i * rank + j) * np + pt] = h[i * rank + j];
            }
        }
    }
    BundleMetric::from_field(base.clone(), rank, data).expect("L·L† is positive")
}

/// Random constant bundle metric.
pub fn random_constant_metric(
    rng: &mut ChaCha8Rng,
    base: &LatticeTorus,
    rank: usize,
) -> BundleMetric {
    let h = random_hpd(rng, rank, 0.8);
    BundleMetric::from_constant(base.clone(), rank, &h).unwrap()
}

/// Random smooth Hermitian base metric: conformal + off-diagonal
/// perturbation of the euclidean metric, positive definite by construction.
pub fn random_base_metric(
    rng: &mut ChaCha8Rng,
    base: &LatticeTorus,
    scale: f64,
    amplitude: f64,
) -> HermitianMetric {
    let n = base.n();
    let np = base.npoints();
    let mut g = vec![ZERO; n * n * np];
    let diag: Vec<Vec<f64>> = (0..n)
        .map(|_| smooth_positive_field(rng, base, amplitude))
        .collect();
    if n == 1 {
        for pt in 0..np {
            g[pt] = c(scale * diag[0][pt], 0.0);
        }
    } else {
        let off_re = smooth_real_field(rng, base, amplitude * 0.2);
        let off_im = smooth_real_field(rng, base, amplitude * 0.2);
        for pt in 0..np {
            g[pt] = c(scale * diag[0][pt], 0.0);
            g[3 * np + pt] = c(scale * diag[1][pt], 0.0);
            let off = c(scale * off_re[pt], scale * off_im[pt]);
            g[np + pt] = off;
            g[2 * np + pt] = off.conj();
        }
    }
    HermitianMetric::from_field(base.clone(), g).expect("perturbation kept positivity")
}

/// Gauge-twist a constant-mode connection into an honest lattice-mode one
/// (same isomorphism class, spatially varying coefficients).
pub fn twist_to_lattice(
    rng: &mut ChaCha8Rng,
    d: &Connection,
    amplitude: f64,
) -> (Connection, FormField) {
    let f = smooth_gauge(rng, d.base(), d.rank(), amplitude);
    let twisted = crate::bundle::ops::gauge_transform_connection(d, &f).expect("gauge transform");
    (twisted, f)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bundle::ops::flatness_residual;

    #[test]
    fn flat_fixtures_are_flat() {
        let base = LatticeTorus::square(1, 8).unwrap();
        let mut r = rng(7);
        for kind in [
            FlatKind::Line,
            FlatKind::PolystableUnitary,
            FlatKind::PolystableSkew,
            FlatKind::Nilpotent,
        ] {
            let rank = if kind == FlatKind::Line { 1 } else { 2 };
            let d = random_flat_connection(&mut r, &base, rank, kind);
            assert!(
                flatness_residual(&d) < 1e-12,
                "{kind:?}: {}",
                flatness_residual(&d)
            );
        }
    }

    #[test]
    fn gauge_twist_preserves_flatness() {
        let base = LatticeTorus::square(1, 16).unwrap();
        let mut r = rng(11);
        let d = random_flat_connection(&mut r, &base, 2, FlatKind::PolystableUnitary);
        let (dl, _) = twist_to_lattice(&mut r, &d, 0.15);
        assert!(flatness_residual(&dl) < 1e-9, "{}", flatness_residual(&dl));
    }

    #[test]
    fn higgs_fixtures_are_integrable() {
        let base = LatticeTorus::square(2, 4).unwrap();
        let mut r = rng(3);
        for nil in [false, true] {
            let dpp = random_higgs_operator(&mut r, &base, 2, nil);
            assert!(crate::bundle::ops::integrability_residual(&dpp) < 1e-12);
        }
    }
}
