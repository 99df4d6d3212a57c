//! Connection/Higgs-operator calculus: the δ_h adjoint connection, the
//! decomposition D = d_h + Θ_h, the bijection I_h and its inverse,
//! pseudocurvature and curvature, covariant derivatives, conformal change,
//! and gauge transformations.
//!
//! Conventions (fixed once, everything else follows):
//!   h(s,t) = t^† H s,          P^{*h} = H^{-1} P^† H,
//!   δ_h″ = ∂̄ + H^{-1}∂̄H − (A′)^{*h},   δ_h′ = ∂ + H^{-1}∂H − (A″)^{*h},
//! derived from the defining identities
//!   ∂[h(s,t)]  = h(D′s, t) + h(s, δ_h″ t),
//!   ∂̄[h(s,t)] = h(D″s, t) + h(s, δ_h′ t).

use num_complex::Complex64;

use super::{BundleMetric, Connection, Decomposition, HiggsOperator, Semiconnection};
use crate::error::{Error, Result};
use crate::geometry::form::{del, delbar};
use crate::geometry::FormField;
use crate::linalg::{c, mat_adjoint, mat_inverse, mat_mul, mat_mul_acc, ONE, ZERO};

/// Pointwise left multiplication of every component of `f` by an End-valued
/// (0,0) field `m` (given as matrix-at-point closure).
fn left_mul(mfield: &FormField, f: &FormField) -> FormField {
    let r = f.rank();
    let np = f.base().npoints();
    let mut out = FormField::zero(f.base().clone(), f.comps().to_vec(), r);
    for ci in 0..f.comps().len() {
        for pt in 0..np {
            let a = mfield.matrix_at(0, pt);
            let b = f.matrix_at(ci, pt);
            let mut prod = vec![ZERO; r * r];
            mat_mul(&mut prod, &a, &b, r);
            out.set_matrix_at(ci, pt, &prod);
        }
    }
    out
}

/// H as an End-valued (0,0) field.
pub fn metric_form(h: &BundleMetric) -> FormField {
    let r = h.rank();
    let mut f = FormField::zero(h.base().clone(), vec![(0, 0)], r);
    for i in 0..r {
        for j in 0..r {
            let src = h.slot(i, j).to_vec();
            f.slot_mut(0, i, j).copy_from_slice(&src);
        }
    }
    f
}

/// H^{-1} as an End-valued (0,0) field.
pub fn metric_inverse_form(h: &BundleMetric) -> FormField {
    let r = h.rank();
    let mut f = FormField::zero(h.base().clone(), vec![(0, 0)], r);
    for i in 0..r {
        for j in 0..r {
            let src = h.slot_inv(i, j).to_vec();
            f.slot_mut(0, i, j).copy_from_slice(&src);
        }
    }
    f
}

/// The adjoint connection δ_h = δ_h′ + δ_h″ determined by the defining
/// sesquilinearity identities. Returned as a connection whose coefficient
/// forms are (B′, B″).
pub fn adjoint_connection(d: &Connection, h: &BundleMetric) -> Result<Connection> {
    d.base().check_same_base(h.base())?;
    if d.rank() != h.rank() {
        return Err(Error::RankMismatch(d.rank(), h.rank()));
    }
    if let (Some((ap, app)), true) = (d.const_parts(), h.is_constant()) {
        let hm = h.matrix_at(0);
        let hinv = h.inverse_at(0);
        let r = d.rank();
        let n = d.base().n();
        let mut bp = Vec::with_capacity(n);
        let mut bq = Vec::with_capacity(n);
        for a in 0..n {
            bp.push(neg_h_adjoint(&app[a], &hm, &hinv, r));
            bq.push(neg_h_adjoint(&ap[a], &hm, &hinv, r));
        }
        let mut delta = Connection::constant(d.base().clone(), r, bp, bq)?;
        delta.background = d.background.clone();
        return Ok(delta);
    }
    let hform = metric_form(h);
    let hinv = metric_inverse_form(h);
    let a10 = d.a10_field();
    let a01 = d.a01_field();
    // B″ = H^{-1}∂̄H − (A′)^{*h}
    let mut bq = left_mul(&hinv, &delbar(&hform));
    bq.add_scaled(&a10.adjoint_h(Some(h)), -ONE)?;
    // B′ = H^{-1}∂H − (A″)^{*h}
    let mut bp = left_mul(&hinv, &del(&hform));
    bp.add_scaled(&a01.adjoint_h(Some(h)), -ONE)?;
    let mut delta = Connection::lattice(bp, bq, None)?;
    delta.background = d.background.clone();
    Ok(delta)
}

fn neg_h_adjoint(
    a: &[Complex64],
    hm: &[Complex64],
    hinv: &[Complex64],
    r: usize,
) -> Vec<Complex64> {
    let mut adj = vec![ZERO; r * r];
    mat_adjoint(&mut adj, a, r);
    let mut t = vec![ZERO; r * r];
    mat_mul(&mut t, &adj, hm, r);
    let mut out = vec![ZERO; r * r];
    mat_mul(&mut out, hinv, &t, r);
    for v in &mut out {
        *v = -*v;
    }
    out
}

/// D = d_h + Θ_h with d_h = ½(D + δ_h) and Θ_h = ½(D − δ_h).
pub fn decompose(d: &Connection, h: &BundleMetric) -> Result<Decomposition> {
    let delta = adjoint_connection(d, h)?;
    let a10 = d.a10_field();
    let a01 = d.a01_field();
    let bp = delta.a10_field();
    let bq = delta.a01_field();
    let half = c(0.5, 0.0);
    let p10 = a10.plus(&bp)?.scaled(half);
    let q01 = a01.plus(&bq)?.scaled(half);
    let theta = a10.minus(&bp)?.scaled(half);
    let theta_star = a01.minus(&bq)?.scaled(half);
    Ok(Decomposition {
        base: d.base().clone(),
        rank: d.rank(),
        p10,
        q01,
        theta,
        theta_star,
        bp10: bp,
        bq01: bq,
        background: d.background.clone(),
    })
}

/// The map I_h: d″_h = ∂̄_h + θ_h associated to (D, h).
pub fn to_higgs(d: &Connection, h: &BundleMetric) -> Result<HiggsOperator> {
    if let (Some((ap, app)), true) = (d.const_parts(), h.is_constant()) {
        let hm = h.matrix_at(0);
        let hinv = h.inverse_at(0);
        let r = d.rank();
        let n = d.base().n();
        let mut theta = Vec::with_capacity(n);
        let mut b01 = Vec::with_capacity(n);
        for a in 0..n {
            // θ_α = ½(A′_α + (A″_α)^{*h}),  B_α = ½(A″_α − (A′_α)^{*h})
            let adj_app = neg_h_adjoint(&app[a], &hm, &hinv, r);
            let adj_ap = neg_h_adjoint(&ap[a], &hm, &hinv, r);
            let mut th = vec![ZERO; r * r];
            let mut bb = vec![ZERO; r * r];
            for k in 0..r * r {
                th[k] = c(0.5, 0.0) * (ap[a][k] - adj_app[k]);
                bb[k] = c(0.5, 0.0) * (app[a][k] + adj_ap[k]);
            }
            theta.push(th);
            b01.push(bb);
        }
        let mut out = HiggsOperator::constant(d.base().clone(), r, theta, b01)?;
        out.background = d.background.clone();
        return Ok(out);
    }
    decompose(d, h)?.higgs_operator()
}

/// The inverse I_h^{-1}: D_h = d_h + θ + θ^{*h}, where ∂_h is the unique
/// (1,0)-semiconnection making ∂_h + ∂̄ h-unitary (Chern construction).
pub fn from_higgs(dpp: &HiggsOperator, h: &BundleMetric) -> Result<Connection> {
    dpp.base().check_same_base(h.base())?;
    if dpp.rank() != h.rank() {
        return Err(Error::RankMismatch(dpp.rank(), h.rank()));
    }
    if let (Some((theta, b01)), true) = (dpp.const_parts(), h.is_constant()) {
        let hm = h.matrix_at(0);
        let hinv = h.inverse_at(0);
        let r = dpp.rank();
        let n = dpp.base().n();
        let mut ap = Vec::with_capacity(n);
        let mut app = Vec::with_capacity(n);
        for a in 0..n {
            // C′_α = −(B_α)^{*h},  A′ = C′ + θ,  A″ = B + θ^{*h}
            let c_pr = neg_h_adjoint(&b01[a], &hm, &hinv, r);
            let th_adj = neg_h_adjoint(&theta[a], &hm, &hinv, r);
            let mut apv = vec![ZERO; r * r];
            let mut appv = vec![ZERO; r * r];
            for k in 0..r * r {
                apv[k] = c_pr[k] + theta[a][k];
                appv[k] = b01[a][k] - th_adj[k];
            }
            ap.push(apv);
            app.push(appv);
        }
        let mut out = Connection::constant(dpp.base().clone(), r, ap, app)?;
        out.background = dpp.background.clone();
        return Ok(out);
    }
    let hform = metric_form(h);
    let hinv = metric_inverse_form(h);
    let b01 = dpp.b01_field();
    let theta = dpp.theta_field();
    // Chern (1,0)-part: C′ = H^{-1}∂H − B^{*h}
    let mut cp = left_mul(&hinv, &del(&hform));
    cp.add_scaled(&b01.adjoint_h(Some(h)), -ONE)?;
    let a10 = cp.plus(&theta)?;
    let a01 = b01.plus(&theta.adjoint_h(Some(h)))?;
    let mut out = Connection::lattice(a10, a01, None)?;
    out.background = dpp.background.clone();
    Ok(out)
}

/// Chern connection of a holomorphic structure (∂̄, h): the unique h-unitary
/// connection with (0,1)-part ∂̄.
pub fn chern_connection(semi: &Semiconnection, h: &BundleMetric) -> Result<Connection> {
    semi.base().check_same_base(h.base())?;
    let hform = metric_form(h);
    let hinv = metric_inverse_form(h);
    let b01 = semi.b01_field();
    let mut cp = left_mul(&hinv, &del(&hform));
    cp.add_scaled(&b01.adjoint_h(Some(h)), -ONE)?;
    let mut out = Connection::lattice(cp, b01, None)?;
    out.background = semi.background.clone();
    Ok(out)
}

/// D² = d(A) + A∧A, including any line-bundle background curvature.
/// A mixed 2-form with (2,0), (1,1), (0,2) components.
pub fn connection_curvature(d: &Connection) -> FormField {
    let a10 = d.a10_field();
    let a01 = d.a01_field();
    let a = a10.plus(&a01).expect("same base");
    let mut f = del(&a);
    f.add_scaled(&delbar(&a), ONE).unwrap();
    f.add_scaled(&a.wedge(&a).unwrap(), ONE).unwrap();
    if let Some(bg) = &d.background {
        f.add_scaled(&bg.curvature_form(d.base()), ONE).unwrap();
    }
    f
}

/// (d″)² = ∂̄(B + θ) + (B + θ)∧(B + θ). The exterior part of a Higgs
/// operator is ∂̄ only, so no ∂ appears; a line-bundle background has no
/// (0,2)-component and drops out.
pub fn higgs_square(dpp: &HiggsOperator) -> FormField {
    let b = dpp.b01_field();
    let th = dpp.theta_field();
    let w = b.plus(&th).expect("same base");
    let mut f = delbar(&w);
    f.add_scaled(&w.wedge(&w).unwrap(), ONE).unwrap();
    f
}

/// ∂̄² of a semiconnection: ∂̄(B) + B∧B, the (0,2) obstruction to being a
/// holomorphic structure.
pub fn semiconnection_curvature(semi: &Semiconnection) -> FormField {
    let b = semi.b01_field();
    let mut f = delbar(&b);
    f.add_scaled(&b.wedge(&b).unwrap(), ONE).unwrap();
    f
}

/// Pseudocurvature G_h = (d″_h)² of (D, h).
pub fn pseudocurvature(d: &Connection, h: &BundleMetric) -> Result<FormField> {
    Ok(higgs_square(&to_higgs(d, h)?))
}

/// Curvature F_h = D_h² of (d″, h).
pub fn curvature_higgs(dpp: &HiggsOperator, h: &BundleMetric) -> Result<FormField> {
    Ok(connection_curvature(&from_higgs(dpp, h)?))
}

/// Root-mean-square coefficient norm of a form field — the metric-free
/// residual measure used by the flatness/integrability predicates.
pub fn rms_norm(f: &FormField) -> f64 {
    let np = f.base().npoints();
    if f.comps().is_empty() {
        return 0.0;
    }
    let total: f64 = f.data().iter().map(|z| z.norm_sqr()).sum();
    (total / np as f64).sqrt()
}

/// ‖D²‖ — zero iff D is flat (includes the background curvature, so a
/// nonzero-degree line connection is correctly not flat).
pub fn flatness_residual(d: &Connection) -> f64 {
    rms_norm(&connection_curvature(d))
}

/// ‖(d″)²‖ — zero iff d″ is integrable.
pub fn integrability_residual(dpp: &HiggsOperator) -> f64 {
    rms_norm(&higgs_square(dpp))
}

/// Covariant ∂̄ on End-valued forms: ∂̄φ + Q∧φ − (−1)^{deg φ} φ∧Q.
pub fn dbar_cov(phi: &FormField, q01: &FormField) -> Result<FormField> {
    let deg = phi
        .total_degree()
        .ok_or(Error::DegreeUnsupported(255, 255))?;
    let sign = if deg % 2 == 0 { -ONE } else { ONE };
    let mut out = delbar(phi);
    out.add_scaled(&q01.wedge(phi)?, ONE)?;
    out.add_scaled(&phi.wedge(q01)?, sign)?;
    Ok(out)
}

/// Covariant ∂ on End-valued forms.
pub fn del_cov(phi: &FormField, p10: &FormField) -> Result<FormField> {
    let deg = phi
        .total_degree()
        .ok_or(Error::DegreeUnsupported(255, 255))?;
    let sign = if deg % 2 == 0 { -ONE } else { ONE };
    let mut out = del(phi);
    out.add_scaled(&p10.wedge(phi)?, ONE)?;
    out.add_scaled(&phi.wedge(p10)?, sign)?;
    Ok(out)
}

/// Full covariant exterior derivative for a connection with coefficients
/// (p10, q01).
pub fn d_cov(phi: &FormField, p10: &FormField, q01: &FormField) -> Result<FormField> {
    let mut out = del_cov(phi, p10)?;
    out.add_scaled(&dbar_cov(phi, q01)?, ONE)?;
    Ok(out)
}

/// Pointwise inverse of an invertible End-valued (0,0) field.
pub fn endo_inverse(f: &FormField) -> Result<FormField> {
    let r = f.rank();
    let np = f.base().npoints();
    let mut out = FormField::zero(f.base().clone(), vec![(0, 0)], r);
    for pt in 0..np {
        let m = f.matrix_at(0, pt);
        let inv = mat_inverse(&m, r).ok_or(Error::InvalidInput(format!(
            "endomorphism not invertible at grid point {pt}"
        )))?;
        out.set_matrix_at(0, pt, &inv);
    }
    Ok(out)
}

/// Gauge action on connections: D ↦ f^{-1}∘D∘f, i.e.
/// A ↦ f^{-1} A f + f^{-1} df.
pub fn gauge_transform_connection(d: &Connection, f: &FormField) -> Result<Connection> {
    d.base().check_same_base(f.base())?;
    let finv = endo_inverse(f)?;
    let conj_part = |a: &FormField| -> Result<FormField> {
        let af = a.wedge(f)?; // composition on (0,0)-valued f is matrix product
        Ok(left_mul(&finv, &af))
    };
    let a10 = d.a10_field();
    let a01 = d.a01_field();
    let mut new10 = conj_part(&a10)?;
    new10.add_scaled(&left_mul(&finv, &del(f)), ONE)?;
    let mut new01 = conj_part(&a01)?;
    new01.add_scaled(&left_mul(&finv, &delbar(f)), ONE)?;
    let mut out = Connection::lattice(new10, new01, None)?;
    out.background = d.background.clone();
    Ok(out)
}

/// Gauge action on Higgs operators: B ↦ f^{-1}Bf + f^{-1}∂̄f, θ ↦ f^{-1}θf.
pub fn gauge_transform_higgs(dpp: &HiggsOperator, f: &FormField) -> Result<HiggsOperator> {
    dpp.base().check_same_base(f.base())?;
    let finv = endo_inverse(f)?;
    let b01 = dpp.b01_field();
    let th = dpp.theta_field();
    let mut newb = left_mul(&finv, &b01.wedge(f)?);
    newb.add_scaled(&left_mul(&finv, &delbar(f)), ONE)?;
    let newth = left_mul(&finv, &th.wedge(f)?);
    let mut out = HiggsOperator::lattice(newth, newb, None)?;
    out.background = dpp.background.clone();
    Ok(out)
}

/// Conformal change of the Higgs operator by a metric rescale h ↦ f·h with
/// f h-selfadjoint positive, via the closed formula
///   d″_{f·h} = d″_h + ½ f^{-1} δ_h″(f) − ½ f^{-1} δ_h′(f)
/// (End-covariant δ-derivatives of f). Must agree with recomputing
/// I_{f·h}(D) from scratch.
pub fn conformal_change_higgs(
    dpp_h: &HiggsOperator,
    h: &BundleMetric,
    f: &FormField,
) -> Result<HiggsOperator> {
    dpp_h.base().check_same_base(h.base())?;
    let r = dpp_h.rank();
    // validate: f h-selfadjoint positive definite
    let fadj = f.adjoint_h(Some(h));
    let sa_resid = fadj.minus(f)?.max_abs();
    if sa_resid > 1e-8 * (1.0 + f.max_abs()) {
        return Err(Error::InvalidInput(
            "conformal factor is not h-selfadjoint".into(),
        ));
    }
    for pt in 0..f.base().npoints() {
        let hm = h.matrix_at(pt);
        let fm = f.matrix_at(0, pt);
        // H·f Hermitian positive ⇔ f positive w.r.t. h
        let mut hf = vec![ZERO; r * r];
        mat_mul(&mut hf, &hm, &fm, r);
        let (lo, _) = crate::linalg::herm_extremes(&hf, r);
        if lo <= 0.0 {
            return Err(Error::NotPositiveDefinite(pt));
        }
    }
    let d = from_higgs(dpp_h, h)?;
    let decomp = decompose(&d, h)?;
    let finv = endo_inverse(f)?;
    let dq = dbar_cov(f, &decomp.bq01)?; // δ″_End(f)
    let dp = del_cov(f, &decomp.bp10)?; // δ′_End(f)
    let half = c(0.5, 0.0);
    let mut newb = dpp_h.b01_field();
    newb.add_scaled(&left_mul(&finv, &dq), half)?;
    let mut newth = dpp_h.theta_field();
    newth.add_scaled(&left_mul(&finv, &dp), -half)?;
    let mut out = HiggsOperator::lattice(newth, newb, None)?;
    out.background = dpp_h.background.clone();
    Ok(out)
}

/// Induced connection on Hom(E₁, E₂): D(f) = D₂∘f − f∘D₁. Hom-vectors are
/// flattened row-major, index (i₂, i₁) ↦ i₂·r₁ + i₁.
pub fn induced_hom_connection(d1: &Connection, d2: &Connection) -> Result<Connection> {
    d1.base().check_same_base(d2.base())?;
    let (r1, r2) = (d1.rank(), d2.rank());
    let rh = r1 * r2;
    let n = d1.base().n();
    let np = d1.base().npoints();
    let a1_10 = d1.a10_field();
    let a1_01 = d1.a01_field();
    let a2_10 = d2.a10_field();
    let a2_01 = d2.a01_field();
    let build = |a1: &FormField, a2: &FormField, anti: bool| -> FormField {
        let comps: Vec<(u8, u8)> = (0..n)
            .map(|k| {
                if anti {
                    (0u8, 1u8 << k)
                } else {
                    (1u8 << k, 0u8)
                }
            })
            .collect();
        let mut out = FormField::zero(d1.base().clone(), comps, rh);
        for k in 0..n {
            for pt in 0..np {
                let m1 = a1.matrix_at(k, pt);
                let m2 = a2.matrix_at(k, pt);
                // (A_Hom)[(i2,i1),(k2,k1)] = A2[i2][k2] δ_{i1 k1} − δ_{i2 k2} A1[k1][i1]
                for i2 in 0..r2 {
                    for i1 in 0..r1 {
                        let row = i2 * r1 + i1;
                        for k2 in 0..r2 {
                            for k1 in 0..r1 {
                                let col = k2 * r1 + k1;
                                let mut v = ZERO;
                                if i1 == k1 {
                                    v += m2[i2 * r2 + k2];
                                }
                                if i2 == k2 {
                                    v -= m1[k1 * r1 + i1];
                                }
                                if v != ZERO {
                                    out.slot_mut(k, row, col)[pt] = v;
                                }
                            }
                        }
                    }
                }
            }
        }
        out
    };
    Connection::lattice(
        build(&a1_10, &a2_10, false),
        build(&a1_01, &a2_01, true),
        None,
    )
}

/// Induced Higgs operator on Hom(E₁, E₂): d″(f) = d″₂∘f − f∘d″₁.
pub fn induced_hom_higgs(d1: &HiggsOperator, d2: &HiggsOperator) -> Result<HiggsOperator> {
    // reuse the connection builder on the coefficient pair (θ, B)
    let c1 = Connection::lattice(d1.theta_field(), d1.b01_field(), None)?;
    let c2 = Connection::lattice(d2.theta_field(), d2.b01_field(), None)?;
    let hom = induced_hom_connection(&c1, &c2)?;
    HiggsOperator::lattice(hom.a10_field(), hom.a01_field(), None)
}

/// Induced metric on Hom(E₁, E₂): ⟨f, g⟩ = tr(H₁^{-1} g^† H₂ f).
pub fn induced_hom_metric(h1: &BundleMetric, h2: &BundleMetric) -> Result<BundleMetric> {
    h1.base().check_same_base(h2.base())?;
    let (r1, r2) = (h1.rank(), h2.rank());
    let rh = r1 * r2;
    let np = h1.base().npoints();
    let mut data = vec![ZERO; rh * rh * np];
    for pt in 0..np {
        let h1i = h1.inverse_at(pt);
        let h2m = h2.matrix_at(pt);
        // H_Hom[(c,b)][(d,a)] = H₂[c][d] · H₁^{-1}[a][b]
        for cc in 0..r2 {
            for b in 0..r1 {
                let row = cc * r1 + b;
                for dd in 0..r2 {
                    for a in 0..r1 {
                        let col = dd * r1 + a;
                        data[(row * rh + col) * np + pt] =
                            h2m[cc * r2 + dd] * h1i[a * r1 + b];
                    }
                }
            }
        }
    }
    BundleMetric::from_field(h1.base().clone(), rh, data)
}

/// Apply an End-valued 2-form (e.g. a curvature) to a Hom-element:
/// G_Hom(f) = G₂∘f − f∘G₁, all (rank, comps) matching pointwise.
pub fn hom_apply_curvature(
    g1: &FormField,
    g2: &FormField,
    f: &FormField,
) -> Result<FormField> {
    let mut out = g2.wedge(f)?;
    out.add_scaled(&f.wedge(g1)?, -ONE)?;
    Ok(out)
}

/// Residuals of the two defining identities of δ_h on given constant test
/// section vectors (s, t): max over the grid of
/// |∂h(s,t) − h(D′s,t) − h(s, δ″t)| and the ∂̄ counterpart.
pub fn sesquilinearity_residual(
    d: &Connection,
    delta: &Connection,
    h: &BundleMetric,
    s: &[Complex64],
    t: &[Complex64],
) -> f64 {
    let base = d.base();
    let np = base.npoints();
    let n = base.n();
    let r = d.rank();
    // h(s,t) as a scalar field
    let mut pair = vec![ZERO; np];
    for pt in 0..np {
        pair[pt] = h.pair_at(s, t, pt);
    }
    let a10 = d.a10_field();
    let a01 = d.a01_field();
    let bq = delta.a01_field();
    let bp = delta.a10_field();
    let mut worst = 0.0f64;
    let apply = |m: &[Complex64], v: &[Complex64]| -> Vec<Complex64> {
        let mut out = vec![ZERO; r];
        for i in 0..r {
            for j in 0..r {
                out[i] += m[i * r + j] * v[j];
            }
        }
        out
    };
    for alpha in 0..n {
        let dpair = base.d_z(&pair, alpha);
        let dbar_pair = base.d_zbar(&pair, alpha);
        let ca10 = a10.find_comp(1 << alpha, 0).unwrap();
        let ca01 = a01.find_comp(0, 1 << alpha).unwrap();
        let cbq = bq.find_comp(0, 1 << alpha).unwrap();
        let cbp = bp.find_comp(1 << alpha, 0).unwrap();
        for pt in 0..np {
            // ∂: h(A′s, t) + h(s, B″t)
            let m1 = a10.matrix_at(ca10, pt);
            let m2 = bq.matrix_at(cbq, pt);
            let lhs = dpair[pt];
            let rhs = h.pair_at(&apply(&m1, s), t, pt) + h.pair_at(s, &apply(&m2, t), pt);
            worst = worst.max((lhs - rhs).norm());
            // ∂̄: h(A″s, t) + h(s, B′t)
            let m3 = a01.matrix_at(ca01, pt);
            let m4 = bp.matrix_at(cbp, pt);
            let lhs2 = dbar_pair[pt];
            let rhs2 = h.pair_at(&apply(&m3, s), t, pt) + h.pair_at(s, &apply(&m4, t), pt);
            worst = worst.max((lhs2 - rhs2).norm());
        }
    }
    worst
}

/// Residual of h-unitarity of a connection with coefficients (p10, q01) on
/// constant test vectors: d[h(s,t)] − h(∇s,t) − h(s,∇t).
pub fn unitarity_residual(
    p10: &FormField,
    q01: &FormField,
    h: &BundleMetric,
    s: &[Complex64],
    t: &[Complex64],
) -> f64 {
    let base = p10.base();
    let np = base.npoints();
    let n = base.n();
    let r = p10.rank();
    let mut pair = vec![ZERO; np];
    for pt in 0..np {
        pair[pt] = h.pair_at(s, t, pt);
    }
    let apply = |m: &[Complex64], v: &[Complex64]| -> Vec<Complex64> {
        let mut out = vec![ZERO; r];
        for i in 0..r {
            for j in 0..r {
                out[i] += m[i * r + j] * v[j];
            }
        }
        out
    };
    let mut worst = 0.0f64;
    for alpha in 0..n {
        let dpair = base.d_z(&pair, alpha);
        let dbar_pair = base.d_zbar(&pair, alpha);
        let cp = p10.find_comp(1 << alpha, 0).unwrap();
        let cq = q01.find_comp(0, 1 << alpha).unwrap();
        for pt in 0..np {
            let pm = p10.matrix_at(cp, pt);
            let qm = q01.matrix_at(cq, pt);
            // (1,0): ∂h(s,t) = h(P s, t) + h(s, Q t)
            let rhs1 = h.pair_at(&apply(&pm, s), t, pt) + h.pair_at(s, &apply(&qm, t), pt);
            worst = worst.max((dpair[pt] - rhs1).norm());
            // (0,1): ∂̄h(s,t) = h(Q s, t) + h(s, P t)
            let rhs2 = h.pair_at(&apply(&qm, s), t, pt) + h.pair_at(s, &apply(&pm, t), pt);
            worst = worst.max((dbar_pair[pt] - rhs2).norm());
        }
    }
    worst
}

/// Constant-mode fast path: the Higgs coefficients (θ_α, B_β) of I_h(D) as
/// matrices, for constant H.
pub fn const_higgs_coeffs(
    ap: &[Vec<Complex64>],
    app: &[Vec<Complex64>],
    hm: &[Complex64],
    hinv: &[Complex64],
    r: usize,
) -> (Vec<Vec<Complex64>>, Vec<Vec<Complex64>>) {
    let n = ap.len();
    let mut theta = Vec::with_capacity(n);
    let mut b01 = Vec::with_capacity(n);
    for a in 0..n {
        let adj_app = neg_h_adjoint(&app[a], hm, hinv, r);
        let adj_ap = neg_h_adjoint(&ap[a], hm, hinv, r);
        let mut th = vec![ZERO; r * r];
        let mut bb = vec![ZERO; r * r];
        for k in 0..r * r {
            th[k] = c(0.5, 0.0) * (ap[a][k] - adj_app[k]);
            bb[k] = c(0.5, 0.0) * (app[a][k] + adj_ap[k]);
        }
        theta.push(th);
        b01.push(bb);
    }
    (theta, b01)
}

/// Constant-mode iΛ_g G_h for a flat connection: Σ ginv[β][α]·[θ_α, B_β].
pub fn const_ilam_pseudocurvature(
    theta: &[Vec<Complex64>],
    b01: &[Vec<Complex64>],
    ginv: &[Complex64],
    r: usize,
) -> Vec<Complex64> {
    let n = theta.len();
    let mut out = vec![ZERO; r * r];
    for a in 0..n {
        for b in 0..n {
            let w = ginv[b * n + a];
            if w == ZERO {
                continue;
            }
            mat_mul_acc(&mut out, w, &theta[a], &b01[b], r);
            mat_mul_acc(&mut out, -w, &b01[b], &theta[a], r);
        }
    }
    out
}

/// Constant-mode iΛ_g F_h for a Higgs operator: Σ ginv[β][α]·[A′_α, A″_β].
pub fn const_ilam_curvature(
    ap: &[Vec<Complex64>],
    app: &[Vec<Complex64>],
    ginv: &[Complex64],
    r: usize,
) -> Vec<Complex64> {
    const_ilam_pseudocurvature(ap, app, ginv, r)
}
