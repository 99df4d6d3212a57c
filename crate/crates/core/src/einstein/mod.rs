//! Einstein metrics for flat connections and Higgs operators.
//!
//! Flat side: h is g-Einstein for (E, D) when iΛ_g G_h = c·id. Higgs side:
//! K_h = iΛ_g F_h = c·id. The Einstein constant is pinned by the degree:
//!   c = −π·μ_g(D) / ((n−1)!·Vol_g)      (flat),
//!   c = 2π·μ_g(d″) / ((n−1)!·Vol_g)     (Higgs);
//! the sign and factor-2 asymmetry is structural and tested.

pub mod kernel;
pub mod solve;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::bundle::ops::{curvature_higgs, pseudocurvature};
use crate::bundle::{BundleMetric, Connection, HiggsOperator};
use crate::error::Result;
use crate::geometry::form::{form_inner, l2_norm, lambda_contract};
use crate::geometry::{FormField, HermitianMetric};
use crate::linalg::c;

pub use solve::{
    conformal_transfer_flat, conformal_transfer_higgs, solve_flat_einstein,
    solve_higgs_einstein, uniqueness_probe,
};

/// Which Einstein equation a quantity refers to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Side {
    Flat,
    Higgs,
}

/// Solver strategy: the damped exponential flow (production default), or
/// the ε-continuity path with Newton stages (constant-coefficient mode).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Strategy {
    Flow,
    Continuity,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SolveSchedule {
    /// Iteration budget per ε-stage.
    pub max_iters: usize,
    /// Target residual for ‖iΛG_h − c·id‖ (L², h-weighted).
    pub tol: f64,
    /// Initial step; None picks 0.1/(1+‖iΛG‖∞).
    pub eta0: Option<f64>,
    /// Annealed regularization weights, ending in 0 for the true equation.
    pub epsilon_schedule: Vec<f64>,
    pub strategy: Strategy,
    /// Fourier damping of the update exponent (lattice mode only).
    pub spectral_damping: bool,
}

impl Default for SolveSchedule {
    fn default() -> Self {
        SolveSchedule {
            max_iters: 4000,
            tol: 1e-8,
            eta0: None,
            epsilon_schedule: vec![1e-2, 1e-4, 0.0],
            strategy: Strategy::Flow,
            spectral_damping: true,
        }
    }
}

/// Candidate destabilizing subbundle reported on divergence: the dominant
/// eigenspace of the conformal endomorphism f when its spectrum blows up.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DivergenceWitness {
    /// Orthonormal columns spanning the dominant eigenspace (fiber rank × k).
    pub basis: Vec<Vec<Complex64>>,
    /// log-spectral spread of f at blowup.
    pub log_spread: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EinsteinReport {
    pub residual_norm: f64,
    pub c: f64,
    pub iterations: usize,
    pub converged: bool,
    pub history: Vec<f64>,
    pub witness: Option<DivergenceWitness>,
}

/// Closed-form Einstein constant from the slope.
pub fn einstein_constant_from_slope(n: usize, volume: f64, mu: f64, side: Side) -> f64 {
    let fac: f64 = (1..n).product::<usize>() as f64; // (n-1)!
    match side {
        Side::Flat => -std::f64::consts::PI * mu / (fac * volume),
        Side::Higgs => 2.0 * std::f64::consts::PI * mu / (fac * volume),
    }
}

/// c = −π·μ_g(D)/((n−1)!·Vol_g(X)) for a flat connection (g Gauduchon).
pub fn einstein_constant_flat(
    d: &Connection,
    g: &HermitianMetric,
    h: &BundleMetric,
) -> Result<f64> {
    let mu = crate::bundle::degree::slope_flat(d, g, h)?;
    Ok(einstein_constant_from_slope(g.n(), g.volume(), mu, Side::Flat))
}

/// c = 2π·μ_g(d″)/((n−1)!·Vol_g(X)) for an integrable Higgs operator.
pub fn einstein_constant_higgs(
    dpp: &HiggsOperator,
    g: &HermitianMetric,
    h: &BundleMetric,
) -> Result<f64> {
    let mu = crate::bundle::degree::slope_higgs(dpp, g, h)?;
    Ok(einstein_constant_from_slope(g.n(), g.volume(), mu, Side::Higgs))
}

/// K = iΛ_g G_h as an End-valued (0,0) field.
pub fn k_field_flat(
    d: &Connection,
    g: &HermitianMetric,
    h: &BundleMetric,
) -> Result<FormField> {
    let gh = pseudocurvature(d, h)?;
    Ok(lambda_contract(&gh, g)?.scaled(c(0.0, 1.0)))
}

/// K = iΛ_g F_h for the Higgs side.
pub fn k_field_higgs(
    dpp: &HiggsOperator,
    g: &HermitianMetric,
    h: &BundleMetric,
) -> Result<FormField> {
    let fh = curvature_higgs(dpp, h)?;
    Ok(lambda_contract(&fh, g)?.scaled(c(0.0, 1.0)))
}

/// Subtract the identity-trace part: returns (K − c·id, c) where c is the
/// volume-average (1/(r·Vol)) ∫ tr K vol.
pub fn mean_normalize(
    k: &FormField,
    g: &HermitianMetric,
) -> Result<(FormField, f64)> {
    let r = k.rank();
    let tr = k.trace();
    let integral = crate::geometry::form::integrate(&tr, g)?;
    let cval = integral.re / (r as f64 * g.volume());
    let mut out = k.clone();
    let np = k.base().npoints();
    for i in 0..r {
        let slot = out.slot_mut(0, i, i);
        for pt in 0..np {
            slot[pt] -= c(cval, 0.0);
        }
    }
    Ok((out, cval))
}

fn residual_report(
    k: &FormField,
    g: &HermitianMetric,
    h: &BundleMetric,
) -> Result<EinsteinReport> {
    let (dev, cval) = mean_normalize(k, g)?;
    let resid = l2_norm(&dev, g, Some(h));
    Ok(EinsteinReport {
        residual_norm: resid,
        c: cval,
        iterations: 0,
        converged: resid < 1e-12,
        history: vec![resid],
        witness: None,
    })
}

/// Single evaluation of the flat-side Einstein residual: c is taken as the
/// mean normalization and residual_norm = ‖iΛ_g G_h − c·id‖_{L²}.
pub fn einstein_residual_flat(
    d: &Connection,
    g: &HermitianMetric,
    h: &BundleMetric,
) -> Result<EinsteinReport> {
    residual_report(&k_field_flat(d, g, h)?, g, h)
}

/// Higgs-side mirror of [`einstein_residual_flat`].
pub fn einstein_residual_higgs(
    dpp: &HiggsOperator,
    g: &HermitianMetric,
    h: &BundleMetric,
) -> Result<EinsteinReport> {
    residual_report(&k_field_higgs(dpp, g, h)?, g, h)
}

/// Pointwise h-selfadjointness residual of iΛ_gG_h: ‖K − K^{*h}‖ (max).
pub fn selfadjointness_residual(
    k: &FormField,
    h: &BundleMetric,
    g: &HermitianMetric,
) -> f64 {
    let kst = k.adjoint_h(Some(h));
    match k.minus(&kst) {
        Ok(diff) => {
            let _ = g;
            diff.max_abs()
        }
        Err(_) => f64::NAN,
    }
}

/// L²(g,h) distance between K and c·id (used by certificates).
pub fn deviation_from_constant(
    k: &FormField,
    cval: f64,
    g: &HermitianMetric,
    h: &BundleMetric,
) -> f64 {
    let r = k.rank();
    let np = k.base().npoints();
    let mut dev = k.clone();
    for i in 0..r {
        let slot = dev.slot_mut(0, i, i);
        for pt in 0..np {
            slot[pt] -= c(cval, 0.0);
        }
    }
    form_inner(&dev, &dev, g, Some(h))
        .map(|v| v.re.max(0.0).sqrt())
        .unwrap_or(f64::NAN)
}
