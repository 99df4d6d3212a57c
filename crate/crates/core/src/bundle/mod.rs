//! Bundle-level objects over the lattice torus: connections D = d + A,
//! Hermitian bundle metrics h, semiconnections ∂̄, Higgs operators
//! d″ = ∂̄ + θ, and the metric decomposition D = d_h + Θ_h.
//!
//! All bundles are topologically trivial in the testbed; a connection is its
//! global coefficient 1-form. Nonzero first Chern class is carried by an
//! explicit constant-curvature line-bundle background (see
//! [`LineBackground`]): the background is a fixed unitary connection whose
//! curvature F₀ enters every full-curvature quantity but none of the
//! coefficient algebra.
//!
//! Constant-coefficient (homogeneous) objects keep their fiber matrices and
//! admit exact matrix-level evaluation; `*_field` accessors materialize them
//! on the grid when a spectral computation needs them.

pub mod degree;
pub mod ops;
pub mod twisted;

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::geometry::{form::mask_list, FormField, HermitianMetric, LatticeTorus};
use crate::linalg::{c, mat_adjoint, mat_inverse, mat_mul, ZERO};

/// A Hermitian bundle metric: positive-definite H(x) with h(s,t) = t^† H s
/// (conjugate-linear in the second slot).
#[derive(Debug, Clone)]
pub struct BundleMetric {
    base: LatticeTorus,
    rank: usize,
    /// h[(i·r+j)·np + pt]
    h: Vec<Complex64>,
    hinv: Vec<Complex64>,
}

impl BundleMetric {
    pub fn from_field(base: LatticeTorus, rank: usize, h: Vec<Complex64>) -> Result<Self> {
        let np = base.npoints();
        if h.len() != rank * rank * np {
            return Err(Error::InvalidInput("bundle metric field has wrong size".into()));
        }
        let mut hinv = vec![ZERO; rank * rank * np];
        let mut m = vec![ZERO; rank * rank];
        for pt in 0..np {
            for i in 0..rank {
                for j in 0..rank {
                    m[i * rank + j] = h[(i * rank + j) * np + pt];
                }
            }
            for i in 0..rank {
                for j in 0..rank {
                    if (m[i * rank + j] - m[j * rank + i].conj()).norm() > 1e-9 {
                        return Err(Error::NotPositiveDefinite(pt));
                    }
                }
            }
            let (lo, _) = crate::linalg::herm_extremes(&m, rank);
            if lo <= 0.0 {
                return Err(Error::NotPositiveDefinite(pt));
            }
            let inv = mat_inverse(&m, rank).ok_or(Error::NotPositiveDefinite(pt))?;
            for i in 0..rank {
                for j in 0..rank {
                    hinv[(i * rank + j) * np + pt] = inv[i * rank + j];
                }
            }
        }
        Ok(BundleMetric {
            base,
            rank,
            h,
            hinv,
        })
    }

    pub fn identity(base: LatticeTorus, rank: usize) -> Self {
        let np = base.npoints();
        let mut h = vec![ZERO; rank * rank * np];
        for i in 0..rank {
            for pt in 0..np {
                h[(i * rank + i) * np + pt] = c(1.0, 0.0);
            }
        }
        BundleMetric::from_field(base, rank, h).expect("identity metric")
    }

    pub fn from_constant(base: LatticeTorus, rank: usize, m: &[Complex64]) -> Result<Self> {
        let np = base.npoints();
        let mut h = vec![ZERO; rank * rank * np];
        for i in 0..rank {
            for j in 0..rank {
                h[(i * rank + j) * np..(i * rank + j + 1) * np].fill(m[i * rank + j]);
            }
        }
        BundleMetric::from_field(base, rank, h)
    }

    pub fn base(&self) -> &LatticeTorus {
        &self.base
    }

    pub fn rank(&self) -> usize {
        self.rank
    }

    #[inline]
    pub fn slot(&self, i: usize, j: usize) -> &[Complex64] {
        let np = self.base.npoints();
        &self.h[(i * self.rank + j) * np..(i * self.rank + j + 1) * np]
    }

    #[inline]
    pub fn slot_inv(&self, i: usize, j: usize) -> &[Complex64] {
        let np = self.base.npoints();
        &self.hinv[(i * self.rank + j) * np..(i * self.rank + j + 1) * np]
    }

    pub fn matrix_at(&self, pt: usize) -> Vec<Complex64> {
        let r = self.rank;
        let mut m = vec![ZERO; r * r];
        for i in 0..r {
            for j in 0..r {
                m[i * r + j] = self.slot(i, j)[pt];
            }
        }
        m
    }

    pub fn inverse_at(&self, pt: usize) -> Vec<Complex64> {
        let r = self.rank;
        let mut m = vec![ZERO; r * r];
        for i in 0..r {
            for j in 0..r {
                m[i * r + j] = self.slot_inv(i, j)[pt];
            }
        }
        m
    }

    /// True when the field is spatially uniform.
    pub fn is_constant(&self) -> bool {
        let np = self.base.npoints();
        let r = self.rank;
        for s in 0..r * r {
            let first = self.h[s * np];
            if self.h[s * np..(s + 1) * np]
                .iter()
                .any(|v| (v - first).norm() > 1e-13)
            {
                return false;
            }
        }
        true
    }

    /// h(s, t) = t^† H s for constant section vectors at a point.
    pub fn pair_at(&self, s: &[Complex64], t: &[Complex64], pt: usize) -> Complex64 {
        let r = self.rank;
        let mut acc = ZERO;
        for i in 0..r {
            for j in 0..r {
                acc += t[i].conj() * self.slot(i, j)[pt] * s[j];
            }
        }
        acc
    }

    /// Given A^† (conjugate transpose already applied), return the h-adjoint
    /// H^{-1} A^† H at a grid point.
    pub fn conjugate_adjoint_at(&self, adj: &[Complex64], pt: usize) -> Vec<Complex64> {
        let r = self.rank;
        let hinv = self.inverse_at(pt);
        let h = self.matrix_at(pt);
        let mut t = vec![ZERO; r * r];
        let mut out = vec![ZERO; r * r];
        mat_mul(&mut t, adj, &h, r);
        mat_mul(&mut out, &hinv, &t, r);
        out
    }

    /// h-adjoint of an End-valued (0,0) field, pointwise H^{-1} P^† H.
    pub fn endo_adjoint(&self, p: &FormField) -> FormField {
        p.adjoint_h(Some(self))
    }

    /// The rescaled metric f·h, h'(s,t) = h(f s, t), i.e. H' = H·f.
    /// `f` must be h-selfadjoint positive for h' to be a metric.
    pub fn rescale(&self, f: &FormField) -> Result<Self> {
        let np = self.base.npoints();
        let r = self.rank;
        let mut out = vec![ZERO; r * r * np];
        let mut hm = vec![ZERO; r * r];
        let mut prod = vec![ZERO; r * r];
        for pt in 0..np {
            let fm = f.matrix_at(0, pt);
            for i in 0..r {
                for j in 0..r {
                    hm[i * r + j] = self.slot(i, j)[pt];
                }
            }
            mat_mul(&mut prod, &hm, &fm, r);
            for i in 0..r {
                for j in 0..r {
                    out[(i * r + j) * np + pt] = prod[i * r + j];
                }
            }
        }
        BundleMetric::from_field(self.base.clone(), r, out)
    }

    /// Conformal rescale e^φ·h by a real scalar field.
    pub fn conformal_exp(&self, phi: &[f64]) -> Self {
        let np = self.base.npoints();
        let r = self.rank;
        let mut h = self.h.clone();
        for s in 0..r * r {
            for pt in 0..np {
                h[s * np + pt] *= c(phi[pt].exp(), 0.0);
            }
        }
        BundleMetric::from_field(self.base.clone(), r, h).expect("conformal factor is positive")
    }

    /// Pullback along a gauge transformation: (f^*h)(s,t) = h(f s, f t),
    /// i.e. H ↦ f^† H f.
    pub fn pullback(&self, f: &FormField) -> Result<Self> {
        let np = self.base.npoints();
        let r = self.rank;
        let mut out = vec![ZERO; r * r * np];
        let mut hm = vec![ZERO; r * r];
        let mut fa = vec![ZERO; r * r];
        let mut t = vec![ZERO; r * r];
        let mut prod = vec![ZERO; r * r];
        for pt in 0..np {
            let fm = f.matrix_at(0, pt);
            mat_adjoint(&mut fa, &fm, r);
            for i in 0..r {
                for j in 0..r {
                    hm[i * r + j] = self.slot(i, j)[pt];
                }
            }
            mat_mul(&mut t, &hm, &fm, r);
            mat_mul(&mut prod, &fa, &t, r);
            for i in 0..r {
                for j in 0..r {
                    out[(i * r + j) * np + pt] = prod[i * r + j];
                }
            }
        }
        BundleMetric::from_field(self.base.clone(), r, out)
    }

    /// f with h₂ = f·h₁ (f = H₁^{-1}H₂), as an End-valued (0,0) field.
    pub fn relative_endomorphism(&self, other: &BundleMetric) -> FormField {
        let np = self.base.npoints();
        let r = self.rank;
        let mut out = FormField::zero(self.base.clone(), vec![(0, 0)], r);
        let mut prod = vec![ZERO; r * r];
        for pt in 0..np {
            let h1inv = self.inverse_at(pt);
            let h2 = other.matrix_at(pt);
            mat_mul(&mut prod, &h1inv, &h2, r);
            out.set_matrix_at(0, pt, &prod);
        }
        out
    }
}

/// Constant-curvature background for line bundles of nonzero degree.
///
/// The background stands for a fixed h-unitary connection with globally
/// well-defined curvature F₀ = Σ f0_{αβ̄} dz^α∧dz̄^β (times id); the
/// twisted-periodicity bookkeeping never leaks out of this struct. It adds
/// to every full-curvature quantity (connection curvature, Chern curvature)
/// and to nothing else.
#[derive(Debug, Clone, PartialEq)]
pub struct LineBackground {
    /// Prescribed Chern integral against the reference metric.
    pub degree: f64,
    /// n×n coefficient matrix of F₀ (row-major).
    pub f0: Vec<Complex64>,
}

impl LineBackground {
    /// Background with (i/2π)∫ F₀ ∧ ω_g^{n-1} = deg, proportional to ω_g's
    /// mean coefficient (an anti-selfadjoint, constant (1,1)-form).
    pub fn with_degree(g: &HermitianMetric, deg: f64) -> Result<Self> {
        let base = g.base();
        let n = base.n();
        let np = base.npoints();
        // candidate F₀ = -i · mean(g_{αβ̄})
        let mut f0 = vec![ZERO; n * n];
        for a in 0..n {
            for b in 0..n {
                let mean: Complex64 =
                    g.g_at(a, b).iter().sum::<Complex64>() / c(np as f64, 0.0);
                f0[a * n + b] = c(0.0, -1.0) * mean;
            }
        }
        let cand = LineBackground { degree: 0.0, f0 };
        let d0 = cand.chern_integral(g)?;
        if d0.abs() < 1e-14 {
            return Err(Error::InvalidInput("degenerate background candidate".into()));
        }
        let scale = deg / d0;
        Ok(LineBackground {
            degree: deg,
            f0: cand.f0.iter().map(|v| v * c(scale, 0.0)).collect(),
        })
    }

    /// The background curvature as a (1,1) form field (rank 1).
    pub fn curvature_form(&self, base: &LatticeTorus) -> FormField {
        let n = base.n();
        let mut f = FormField::zero_pure(base.clone(), 1, 1, 1);
        let np = base.npoints();
        for a in 0..n {
            for b in 0..n {
                let ci = f.find_comp(1 << a, 1 << b).unwrap();
                f.slot_mut(ci, 0, 0)[..np].fill(self.f0[a * n + b]);
            }
        }
        f
    }

    /// (i/2π) ∫ F₀ ∧ ω^{n-1}.
    pub fn chern_integral(&self, g: &HermitianMetric) -> Result<f64> {
        let base = g.base();
        let f = self.curvature_form(base);
        let wedge = if base.n() == 1 {
            f
        } else {
            f.wedge(&g.omega())?
        };
        let v = crate::geometry::form::integrate(&wedge, g)?;
        Ok((c(0.0, 1.0) * v / c(2.0 * std::f64::consts::PI, 0.0)).re)
    }
}

/// Storage for the two coefficient 1-forms of a connection (or the pair
/// (∂̄-part, θ) of a Higgs operator).
#[derive(Debug, Clone)]
pub enum PairParts {
    Lattice {
        /// (1,0)-coefficients
        p: FormField,
        /// (0,1)-coefficients
        q: FormField,
    },
    /// Spatially uniform coefficients: one r×r matrix per dz^α resp. dz̄^β.
    Constant {
        p: Vec<Vec<Complex64>>,
        q: Vec<Vec<Complex64>>,
    },
}

/// A linear connection D = d + A in the global trivialization.
/// `p` holds A′ (type (1,0)) and `q` holds A″ (type (0,1)).
#[derive(Debug, Clone)]
pub struct Connection {
    pub(crate) base: LatticeTorus,
    pub(crate) rank: usize,
    pub(crate) parts: PairParts,
    pub(crate) background: Option<LineBackground>,
}

/// A Higgs operator d″ = ∂̄ + θ. `p` of the parts holds θ (type (1,0)),
/// `q` holds the semiconnection coefficient B (type (0,1)).
#[derive(Debug, Clone)]
pub struct HiggsOperator {
    pub(crate) base: LatticeTorus,
    pub(crate) rank: usize,
    pub(crate) parts: PairParts,
    pub(crate) background: Option<LineBackground>,
}

/// A semiconnection of type (0,1) — a holomorphic structure when integrable.
#[derive(Debug, Clone)]
pub struct Semiconnection {
    pub(crate) base: LatticeTorus,
    pub(crate) rank: usize,
    /// (0,1) coefficient field or constant matrices per dz̄^β.
    pub(crate) q: QParts,
    pub(crate) background: Option<LineBackground>,
}

#[derive(Debug, Clone)]
pub enum QParts {
    Lattice(FormField),
    Constant(Vec<Vec<Complex64>>),
}

fn constant_one_form(
    base: &LatticeTorus,
    rank: usize,
    mats: &[Vec<Complex64>],
    anti: bool,
) -> FormField {
    let n = base.n();
    let comps: Vec<(u8, u8)> = if anti {
        mask_list(n, 1).into_iter().map(|m| (0, m)).collect()
    } else {
        mask_list(n, 1).into_iter().map(|m| (m, 0)).collect()
    };
    FormField::constant(base.clone(), comps, rank, mats)
}

impl Connection {
    pub fn lattice(p: FormField, q: FormField, background: Option<LineBackground>) -> Result<Self> {
        p.base().check_same_base(q.base())?;
        if p.rank() != q.rank() {
            return Err(Error::RankMismatch(p.rank(), q.rank()));
        }
        if p.bidegree() != Some((1, 0)) || q.bidegree() != Some((0, 1)) {
            return Err(Error::InvalidInput("connection parts must be (1,0) and (0,1)".into()));
        }
        if background.is_some() && p.rank() != 1 {
            return Err(Error::LineBundleOnly(p.rank()));
        }
        Ok(Connection {
            base: p.base().clone(),
            rank: p.rank(),
            parts: PairParts::Lattice { p, q },
            background,
        })
    }

    /// Constant-coefficient connection: `ap[α]` is the matrix of A′ on dz^α,
    /// `app[β]` the matrix of A″ on dz̄^β.
    pub fn constant(
        base: LatticeTorus,
        rank: usize,
        ap: Vec<Vec<Complex64>>,
        app: Vec<Vec<Complex64>>,
    ) -> Result<Self> {
        let n = base.n();
        if ap.len() != n || app.len() != n {
            return Err(Error::InvalidInput("need one matrix per coordinate".into()));
        }
        for m in ap.iter().chain(app.iter()) {
            if m.len() != rank * rank {
                return Err(Error::RankMismatch(m.len(), rank * rank));
            }
        }
        Ok(Connection {
            base,
            rank,
            parts: PairParts::Constant { p: ap, q: app },
            background: None,
        })
    }

    /// The trivial connection D = d.
    pub fn trivial(base: LatticeTorus, rank: usize) -> Self {
        let n = base.n();
        let zero = vec![vec![ZERO; rank * rank]; n];
        Connection::constant(base, rank, zero.clone(), zero).expect("trivial connection")
    }

    pub fn base(&self) -> &LatticeTorus {
        &self.base
    }

    pub fn rank(&self) -> usize {
        self.rank
    }

    pub fn background(&self) -> Option<&LineBackground> {
        self.background.as_ref()
    }

    pub fn with_background(mut self, bg: LineBackground) -> Result<Self> {
        if self.rank != 1 {
            return Err(Error::LineBundleOnly(self.rank));
        }
        self.background = Some(bg);
        Ok(self)
    }

    pub fn is_constant(&self) -> bool {
        matches!(self.parts, PairParts::Constant { .. })
    }

    pub fn const_parts(&self) -> Option<(&[Vec<Complex64>], &[Vec<Complex64>])> {
        match &self.parts {
            PairParts::Constant { p, q } => Some((p, q)),
            _ => None,
        }
    }

    /// A′ as a lattice field (materialized for constant mode).
    pub fn a10_field(&self) -> FormField {
        match &self.parts {
            PairParts::Lattice { p, .. } => p.clone(),
            PairParts::Constant { p, .. } => constant_one_form(&self.base, self.rank, p, false),
        }
    }

    /// A″ as a lattice field.
    pub fn a01_field(&self) -> FormField {
        match &self.parts {
            PairParts::Lattice { q, .. } => q.clone(),
            PairParts::Constant { q, .. } => constant_one_form(&self.base, self.rank, q, true),
        }
    }

    /// The (0,1)-part D″ as a semiconnection (holomorphic structure when D
    /// is flat).
    pub fn dbar_part(&self) -> Semiconnection {
        Semiconnection {
            base: self.base.clone(),
            rank: self.rank,
            q: match &self.parts {
                PairParts::Lattice { q, .. } => QParts::Lattice(q.clone()),
                PairParts::Constant { q, .. } => QParts::Constant(q.clone()),
            },
            background: self.background.clone(),
        }
    }
}

impl HiggsOperator {
    pub fn lattice(
        theta: FormField,
        b01: FormField,
        background: Option<LineBackground>,
    ) -> Result<Self> {
        theta.base().check_same_base(b01.base())?;
        if theta.rank() != b01.rank() {
            return Err(Error::RankMismatch(theta.rank(), b01.rank()));
        }
        if theta.bidegree() != Some((1, 0)) || b01.bidegree() != Some((0, 1)) {
            return Err(Error::InvalidInput("higgs parts must be (1,0) and (0,1)".into()));
        }
        if background.is_some() && theta.rank() != 1 {
            return Err(Error::LineBundleOnly(theta.rank()));
        }
        Ok(HiggsOperator {
            base: theta.base().clone(),
            rank: theta.rank(),
            parts: PairParts::Lattice { p: theta, q: b01 },
            background,
        })
    }

    pub fn constant(
        base: LatticeTorus,
        rank: usize,
        theta: Vec<Vec<Complex64>>,
        b01: Vec<Vec<Complex64>>,
    ) -> Result<Self> {
        let n = base.n();
        if theta.len() != n || b01.len() != n {
            return Err(Error::InvalidInput("need one matrix per coordinate".into()));
        }
        Ok(HiggsOperator {
            base,
            rank,
            parts: PairParts::Constant { p: theta, q: b01 },
            background: None,
        })
    }

    pub fn trivial(base: LatticeTorus, rank: usize) -> Self {
        let n = base.n();
        let zero = vec![vec![ZERO; rank * rank]; n];
        HiggsOperator::constant(base, rank, zero.clone(), zero).expect("trivial higgs operator")
    }

    pub fn base(&self) -> &LatticeTorus {
        &self.base
    }

    pub fn rank(&self) -> usize {
        self.rank
    }

    pub fn background(&self) -> Option<&LineBackground> {
        self.background.as_ref()
    }

    pub fn with_background(mut self, bg: LineBackground) -> Result<Self> {
        if self.rank != 1 {
            return Err(Error::LineBundleOnly(self.rank));
        }
        self.background = Some(bg);
        Ok(self)
    }

    pub fn is_constant(&self) -> bool {
        matches!(self.parts, PairParts::Constant { .. })
    }

    pub fn const_parts(&self) -> Option<(&[Vec<Complex64>], &[Vec<Complex64>])> {
        match &self.parts {
            PairParts::Constant { p, q } => Some((p, q)),
            _ => None,
        }
    }

    pub fn theta_field(&self) -> FormField {
        match &self.parts {
            PairParts::Lattice { p, .. } => p.clone(),
            PairParts::Constant { p, .. } => constant_one_form(&self.base, self.rank, p, false),
        }
    }

    pub fn b01_field(&self) -> FormField {
        match &self.parts {
            PairParts::Lattice { q, .. } => q.clone(),
            PairParts::Constant { q, .. } => constant_one_form(&self.base, self.rank, q, true),
        }
    }

    pub fn semiconnection(&self) -> Semiconnection {
        Semiconnection {
            base: self.base.clone(),
            rank: self.rank,
            q: match &self.parts {
                PairParts::Lattice { q, .. } => QParts::Lattice(q.clone()),
                PairParts::Constant { q, .. } => QParts::Constant(q.clone()),
            },
            background: self.background.clone(),
        }
    }
}

impl Semiconnection {
    pub fn from_b01(b01: FormField, background: Option<LineBackground>) -> Result<Self> {
        if b01.bidegree() != Some((0, 1)) {
            return Err(Error::InvalidInput("semiconnection coefficient must be (0,1)".into()));
        }
        Ok(Semiconnection {
            base: b01.base().clone(),
            rank: b01.rank(),
            q: QParts::Lattice(b01),
            background,
        })
    }

    pub fn trivial(base: LatticeTorus, rank: usize) -> Self {
        let n = base.n();
        Semiconnection {
            base,
            rank,
            q: QParts::Constant(vec![vec![ZERO; rank * rank]; n]),
            background: None,
        }
    }

    pub fn base(&self) -> &LatticeTorus {
        &self.base
    }

    pub fn rank(&self) -> usize {
        self.rank
    }

    pub fn background(&self) -> Option<&LineBackground> {
        self.background.as_ref()
    }

    pub fn b01_field(&self) -> FormField {
        match &self.q {
            QParts::Lattice(q) => q.clone(),
            QParts::Constant(q) => constant_one_form(&self.base, self.rank, q, true),
        }
    }

    /// As a Higgs operator with θ = 0.
    pub fn with_zero_theta(&self) -> HiggsOperator {
        HiggsOperator {
            base: self.base.clone(),
            rank: self.rank,
            parts: match &self.q {
                QParts::Lattice(q) => PairParts::Lattice {
                    p: FormField::zero_pure(self.base.clone(), 1, 0, self.rank),
                    q: q.clone(),
                },
                QParts::Constant(q) => PairParts::Constant {
                    p: vec![vec![ZERO; self.rank * self.rank]; self.base.n()],
                    q: q.clone(),
                },
            },
            background: self.background.clone(),
        }
    }
}

/// The metric decomposition D = d_h + Θ_h = ∂_h + ∂̄_h + θ_h + θ_h^*,
/// together with the auxiliary connection δ_h = δ_h′ + δ_h″.
///
/// All members are coefficient forms in the trivialization: `p10`/`q01` are
/// the (1,0)/(0,1) coefficients of the h-unitary connection d_h, `bp10`/`bq01`
/// those of δ_h.
#[derive(Debug, Clone)]
pub struct Decomposition {
    pub base: LatticeTorus,
    pub rank: usize,
    pub p10: FormField,
    pub q01: FormField,
    pub theta: FormField,
    pub theta_star: FormField,
    pub bp10: FormField,
    pub bq01: FormField,
    pub(crate) background: Option<LineBackground>,
}

impl Decomposition {
    /// Reassemble D = d_h + Θ_h (exact algebraic identity).
    pub fn reassemble(&self) -> Result<Connection> {
        let a10 = self.p10.plus(&self.theta)?;
        let a01 = self.q01.plus(&self.theta_star)?;
        Connection::lattice(a10, a01, self.background.clone())
    }

    /// The associated Higgs operator I_h(D) = ∂̄_h + θ_h.
    pub fn higgs_operator(&self) -> Result<HiggsOperator> {
        HiggsOperator::lattice(self.theta.clone(), self.q01.clone(), self.background.clone())
    }

    /// δ_h as a connection (for residual checks: δ_h² = 0 for flat D).
    pub fn delta_connection(&self) -> Result<Connection> {
        Connection::lattice(self.bp10.clone(), self.bq01.clone(), self.background.clone())
    }
}
