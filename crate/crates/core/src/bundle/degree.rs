//! Degree and slope of holomorphic structures, flat connections, and Higgs
//! operators against a Gauduchon base metric, with the pseudocurvature and
//! curvature integral formulas as independent routes.

use super::ops::{
    chern_connection, connection_curvature, curvature_higgs, flatness_residual,
    integrability_residual, pseudocurvature, rms_norm, semiconnection_curvature,
};
use super::{BundleMetric, Connection, HiggsOperator, Semiconnection};
use crate::error::{Error, Result};
use crate::geometry::form::{integrate, lambda_contract};
use crate::geometry::scalar_ops::gauduchon_residual;
use crate::geometry::HermitianMetric;
use crate::linalg::c;
use crate::tol;

fn gauduchon_gate(g: &HermitianMetric) -> Result<()> {
    let resid = gauduchon_residual(g);
    if resid > tol::GAUDUCHON {
        return Err(Error::NotGauduchon {
            residual: resid,
            tol: tol::GAUDUCHON,
        });
    }
    Ok(())
}

fn factorial(n: usize) -> f64 {
    (1..=n).product::<usize>() as f64
}

/// deg_g(∂̄) = (i/2π) ∫ tr(d²) ∧ ω^{n-1}, d the Chern connection of (∂̄, h).
/// Well defined (h-independent) because g is Gauduchon.
pub fn degree(semi: &Semiconnection, g: &HermitianMetric, h: &BundleMetric) -> Result<f64> {
    semi.base().check_same_base(g.base())?;
    gauduchon_gate(g)?;
    let integ = rms_norm(&semiconnection_curvature(semi));
    if integ > tol::RESIDUAL_GATE {
        return Err(Error::ResidualGate {
            what: "semiconnection integrability",
            value: integ,
            tol: tol::RESIDUAL_GATE,
        });
    }
    let chern = chern_connection(semi, h)?;
    let f = connection_curvature(&chern);
    let trf = f.trace();
    let integrand = if g.n() == 1 {
        trf
    } else {
        trf.wedge(&g.omega())?
    };
    let val = integrate(&integrand, g)?;
    let deg = c(0.0, 1.0) * val / c(2.0 * std::f64::consts::PI, 0.0);
    if deg.im.abs() > 1e-6 * (1.0 + deg.re.abs()) {
        return Err(Error::NonConvergence(format!(
            "degree has imaginary residue {:.3e}",
            deg.im
        )));
    }
    Ok(deg.re)
}

/// deg_g(D) := deg_g(D″) for a flat connection.
pub fn degree_flat(d: &Connection, g: &HermitianMetric, h: &BundleMetric) -> Result<f64> {
    let fr = flatness_residual(d);
    if fr > tol::RESIDUAL_GATE {
        return Err(Error::ResidualGate {
            what: "flatness",
            value: fr,
            tol: tol::RESIDUAL_GATE,
        });
    }
    degree(&d.dbar_part(), g, h)
}

/// deg_g(d″) := deg_g(∂̄) for an integrable Higgs operator.
pub fn degree_higgs(dpp: &HiggsOperator, g: &HermitianMetric, h: &BundleMetric) -> Result<f64> {
    let ir = integrability_residual(dpp);
    if ir > tol::RESIDUAL_GATE {
        return Err(Error::ResidualGate {
            what: "integrability",
            value: ir,
            tol: tol::RESIDUAL_GATE,
        });
    }
    degree(&dpp.semiconnection(), g, h)
}

pub fn slope(deg: f64, rank: usize) -> f64 {
    deg / rank as f64
}

pub fn slope_flat(d: &Connection, g: &HermitianMetric, h: &BundleMetric) -> Result<f64> {
    Ok(slope(degree_flat(d, g, h)?, d.rank()))
}

pub fn slope_higgs(dpp: &HiggsOperator, g: &HermitianMetric, h: &BundleMetric) -> Result<f64> {
    Ok(slope(degree_higgs(dpp, g, h)?, dpp.rank()))
}

/// deg_g(D) = −(i/nπ) ∫ tr Λ_g G_h · ω_g^n (pseudocurvature route).
pub fn degree_via_pseudocurvature(
    d: &Connection,
    g: &HermitianMetric,
    h: &BundleMetric,
) -> Result<f64> {
    gauduchon_gate(g)?;
    let fr = flatness_residual(d);
    if fr > tol::RESIDUAL_GATE {
        return Err(Error::ResidualGate {
            what: "flatness",
            value: fr,
            tol: tol::RESIDUAL_GATE,
        });
    }
    let n = g.n();
    let gh = pseudocurvature(d, h)?;
    let lam = lambda_contract(&gh, g)?.trace();
    let val = integrate(&lam, g)?; // ∫ trΛG vol; ∫·ω^n = n!·this
    let deg = c(0.0, -1.0) * c(factorial(n) / (n as f64 * std::f64::consts::PI), 0.0) * val;
    if deg.im.abs() > 1e-6 * (1.0 + deg.re.abs()) {
        return Err(Error::NonConvergence(format!(
            "degree has imaginary residue {:.3e}",
            deg.im
        )));
    }
    Ok(deg.re)
}

/// deg_g(d″) = (i/2nπ) ∫ tr Λ_g F_h · ω_g^n (curvature route). Note the
/// −1/n vs +1/2n asymmetry against the pseudocurvature formula.
pub fn degree_via_curvature(
    dpp: &HiggsOperator,
    g: &HermitianMetric,
    h: &BundleMetric,
) -> Result<f64> {
    gauduchon_gate(g)?;
    let ir = integrability_residual(dpp);
    if ir > tol::RESIDUAL_GATE {
        return Err(Error::ResidualGate {
            what: "integrability",
            value: ir,
            tol: tol::RESIDUAL_GATE,
        });
    }
    let n = g.n();
    let fh = curvature_higgs(dpp, h)?;
    let lam = lambda_contract(&fh, g)?.trace();
    let val = integrate(&lam, g)?;
    let deg =
        c(0.0, 1.0) * c(factorial(n) / (2.0 * n as f64 * std::f64::consts::PI), 0.0) * val;
    if deg.im.abs() > 1e-6 * (1.0 + deg.re.abs()) {
        return Err(Error::NonConvergence(format!(
            "degree has imaginary residue {:.3e}",
            deg.im
        )));
    }
    Ok(deg.re)
}
