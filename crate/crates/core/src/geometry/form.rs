//! Differential-form fields with End(E)-valued coefficients.
//!
//! A component is indexed by a pair of bitmasks (S, T) over {0..n-1},
//! standing for dz^S ∧ dz̄^T with strictly increasing factors. A pure
//! (p,q)-form carries every component with |S| = p, |T| = q; curvature-type
//! objects are allowed to mix bidegrees within one total degree.
//! Antisymmetry in the form indices is structural: only increasing
//! multi-indices are stored.
//!
//! Storage is slot-major: slot(comp, i, j) is a contiguous grid field, which
//! keeps FFT passes and pointwise matrix kernels tight.

use num_complex::Complex64;

use super::{HermitianMetric, LatticeTorus};
use crate::error::{Error, Result};
use crate::linalg::{c, ONE, ZERO};

/// Bitmask multi-index helpers.
pub(crate) fn mask_list(n: usize, p: usize) -> Vec<u8> {
    (0u8..(1 << n))
        .filter(|m| m.count_ones() as usize == p)
        .collect()
}

/// Sign of sorting the concatenation (sorted A, sorted B), A ∩ B = ∅.
#[inline]
pub(crate) fn shuffle_sign(a: u8, b: u8) -> f64 {
    let mut inversions = 0u32;
    let mut bits = a;
    while bits != 0 {
        let low = bits & bits.wrapping_neg();
        let idx = low.trailing_zeros();
        // elements of b strictly below idx
        inversions += (b & ((1u8 << idx) - 1)).count_ones();
        bits ^= low;
    }
    if inversions % 2 == 0 {
        1.0
    } else {
        -1.0
    }
}

#[derive(Debug, Clone)]
pub struct FormField {
    base: LatticeTorus,
    rank: usize,
    comps: Vec<(u8, u8)>,
    /// len = comps * rank * rank * npoints
    data: Vec<Complex64>,
}

impl FormField {
    pub fn zero(base: LatticeTorus, comps: Vec<(u8, u8)>, rank: usize) -> Self {
        let np = base.npoints();
        let len = comps.len() * rank * rank * np;
        FormField {
            base,
            rank,
            comps,
            data: vec![ZERO; len],
        }
    }

    /// Zero form of pure bidegree (p, q).
    pub fn zero_pure(base: LatticeTorus, p: usize, q: usize, rank: usize) -> Self {
        let n = base.n();
        let mut comps = Vec::new();
        for s in mask_list(n, p) {
            for t in mask_list(n, q) {
                comps.push((s, t));
            }
        }
        FormField::zero(base, comps, rank)
    }

    /// Scalar (0,0)-field from grid data.
    pub fn scalar(base: LatticeTorus, data: Vec<Complex64>) -> Self {
        assert_eq!(data.len(), base.npoints());
        FormField {
            base,
            rank: 1,
            comps: vec![(0, 0)],
            data,
        }
    }

    /// Spatially constant form: one fiber matrix per component.
    pub fn constant(base: LatticeTorus, comps: Vec<(u8, u8)>, rank: usize, mats: &[Vec<Complex64>]) -> Self {
        let mut f = FormField::zero(base, comps, rank);
        let np = f.base.npoints();
        for (ci, m) in mats.iter().enumerate() {
            assert_eq!(m.len(), rank * rank);
            for i in 0..rank {
                for j in 0..rank {
                    let v = m[i * rank + j];
                    f.slot_mut(ci, i, j)[..np].fill(v);
                }
            }
        }
        f
    }

    pub fn base(&self) -> &LatticeTorus {
        &self.base
    }

    pub fn rank(&self) -> usize {
        self.rank
    }

    pub fn comps(&self) -> &[(u8, u8)] {
        &self.comps
    }

    /// Bidegree when the form is pure; None for mixed-degree fields.
    pub fn bidegree(&self) -> Option<(u8, u8)> {
        let mut it = self.comps.iter();
        let first = it.next()?;
        let pq = (first.0.count_ones() as u8, first.1.count_ones() as u8);
        for co in it {
            if (co.0.count_ones() as u8, co.1.count_ones() as u8) != pq {
                return None;
            }
        }
        Some(pq)
    }

    pub fn total_degree(&self) -> Option<u8> {
        let mut it = self.comps.iter();
        let d = it
            .next()
            .map(|co| (co.0.count_ones() + co.1.count_ones()) as u8)?;
        for co in it {
            if (co.0.count_ones() + co.1.count_ones()) as u8 != d {
                return None;
            }
        }
        Some(d)
    }

    pub fn find_comp(&self, hol: u8, anti: u8) -> Option<usize> {
        self.comps.iter().position(|&(s, t)| s == hol && t == anti)
    }

    #[inline]
    fn offset(&self, comp: usize, i: usize, j: usize) -> usize {
        ((comp * self.rank + i) * self.rank + j) * self.base.npoints()
    }

    #[inline]
    pub fn slot(&self, comp: usize, i: usize, j: usize) -> &[Complex64] {
        let o = self.offset(comp, i, j);
        &self.data[o..o + self.base.npoints()]
    }

    #[inline]
    pub fn slot_mut(&mut self, comp: usize, i: usize, j: usize) -> &mut [Complex64] {
        let o = self.offset(comp, i, j);
        let np = self.base.npoints();
        &mut self.data[o..o + np]
    }

    pub fn data(&self) -> &[Complex64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [Complex64] {
        &mut self.data
    }

    /// Fiber matrix of one component at one grid point.
    pub fn matrix_at(&self, comp: usize, pt: usize) -> Vec<Complex64> {
        let r = self.rank;
        let mut m = vec![ZERO; r * r];
        for i in 0..r {
            for j in 0..r {
                m[i * r + j] = self.slot(comp, i, j)[pt];
            }
        }
        m
    }

    pub fn set_matrix_at(&mut self, comp: usize, pt: usize, m: &[Complex64]) {
        let r = self.rank;
        for i in 0..r {
            for j in 0..r {
                self.slot_mut(comp, i, j)[pt] = m[i * r + j];
            }
        }
    }

    pub fn scale(&mut self, s: Complex64) {
        for v in &mut self.data {
            *v *= s;
        }
    }

    pub fn scaled(&self, s: Complex64) -> Self {
        let mut out = self.clone();
        out.scale(s);
        out
    }

    /// self += s · other, matching components by multi-index. Components of
    /// `other` absent here are appended.
    pub fn add_scaled(&mut self, other: &FormField, s: Complex64) -> Result<()> {
        self.base.check_same_base(&other.base)?;
        if self.rank != other.rank {
            return Err(Error::RankMismatch(self.rank, other.rank));
        }
        let np = self.base.npoints();
        for (oc, &(hol, anti)) in other.comps.iter().enumerate() {
            let ci = match self.find_comp(hol, anti) {
                Some(ci) => ci,
                None => {
                    self.comps.push((hol, anti));
                    self.data
                        .extend(std::iter::repeat(ZERO).take(self.rank * self.rank * np));
                    self.comps.len() - 1
                }
            };
            for i in 0..self.rank {
                for j in 0..self.rank {
                    let src = other.slot(oc, i, j).to_vec();
                    let dst = self.slot_mut(ci, i, j);
                    for pt in 0..np {
                        dst[pt] += s * src[pt];
                    }
                }
            }
        }
        Ok(())
    }

    pub fn plus(&self, other: &FormField) -> Result<FormField> {
        let mut out = self.clone();
        out.add_scaled(other, ONE)?;
        Ok(out)
    }

    pub fn minus(&self, other: &FormField) -> Result<FormField> {
        let mut out = self.clone();
        out.add_scaled(other, -ONE)?;
        Ok(out)
    }

    /// Largest coefficient magnitude over all slots and points.
    pub fn max_abs(&self) -> f64 {
        self.data.iter().map(|z| z.norm()).fold(0.0, f64::max)
    }

    /// Wedge product with fiber composition (matrix product).
    pub fn wedge(&self, other: &FormField) -> Result<FormField> {
        self.base.check_same_base(&other.base)?;
        if self.rank != other.rank {
            return Err(Error::RankMismatch(self.rank, other.rank));
        }
        let n = self.base.n();
        let r = self.rank;
        let np = self.base.npoints();
        let full: u8 = (1 << n) - 1;
        let _ = full;
        let mut out_comps: Vec<(u8, u8)> = Vec::new();
        // collect target comps first
        for &(sa, ta) in &self.comps {
            for &(sb, tb) in &other.comps {
                if sa & sb != 0 || ta & tb != 0 {
                    continue;
                }
                let tgt = (sa | sb, ta | tb);
                if !out_comps.contains(&tgt) {
                    out_comps.push(tgt);
                }
            }
        }
        out_comps.sort();
        let mut out = FormField::zero(self.base.clone(), out_comps, r);
        for (ca, &(sa, ta)) in self.comps.iter().enumerate() {
            for (cb, &(sb, tb)) in other.comps.iter().enumerate() {
                if sa & sb != 0 || ta & tb != 0 {
                    continue;
                }
                let cross = if (ta.count_ones() * sb.count_ones()) % 2 == 0 {
                    1.0
                } else {
                    -1.0
                };
                let sign = cross * shuffle_sign(sa, sb) * shuffle_sign(ta, tb);
                let ci = out.find_comp(sa | sb, ta | tb).unwrap();
                for i in 0..r {
                    for j in 0..r {
                        for k in 0..r {
                            let a = self.slot(ca, i, k).to_vec();
                            let b = other.slot(cb, k, j).to_vec();
                            let dst = out.slot_mut(ci, i, j);
                            let s = c(sign, 0.0);
                            for pt in 0..np {
                                dst[pt] += s * a[pt] * b[pt];
                            }
                        }
                    }
                }
            }
        }
        Ok(out)
    }

    /// Fiber trace: End-valued → scalar-valued form.
    pub fn trace(&self) -> FormField {
        let np = self.base.npoints();
        let mut out = FormField::zero(self.base.clone(), self.comps.clone(), 1);
        for ci in 0..self.comps.len() {
            for i in 0..self.rank {
                let src = self.slot(ci, i, i).to_vec();
                let dst = out.slot_mut(ci, 0, 0);
                for pt in 0..np {
                    dst[pt] += src[pt];
                }
            }
        }
        out
    }

    /// Pointwise multiply every slot by a scalar grid field.
    pub fn mul_scalar_field(&self, field: &[Complex64]) -> FormField {
        let np = self.base.npoints();
        assert_eq!(field.len(), np);
        let mut out = self.clone();
        let nslots = out.comps.len() * out.rank * out.rank;
        for s in 0..nslots {
            for pt in 0..np {
                out.data[s * np + pt] *= field[pt];
            }
        }
        out
    }

    /// Complex conjugate: swaps dz^S∧dz̄^T → dz^T∧dz̄^S with the reordering
    /// sign (-1)^{|S||T|}; fiber entries are conjugated entrywise (no
    /// transpose).
    pub fn conj_form(&self) -> FormField {
        let np = self.base.npoints();
        let r = self.rank;
        let mut comps: Vec<(u8, u8)> = self.comps.iter().map(|&(s, t)| (t, s)).collect();
        comps.sort();
        comps.dedup();
        let mut out = FormField::zero(self.base.clone(), comps, r);
        for (ci, &(s, t)) in self.comps.iter().enumerate() {
            let sign = if (s.count_ones() * t.count_ones()) % 2 == 0 {
                1.0
            } else {
                -1.0
            };
            let co = out.find_comp(t, s).unwrap();
            for i in 0..r {
                for j in 0..r {
                    let src = self.slot(ci, i, j).to_vec();
                    let dst = out.slot_mut(co, i, j);
                    for pt in 0..np {
                        dst[pt] += c(sign, 0.0) * src[pt].conj();
                    }
                }
            }
        }
        out
    }

    /// Hermitian adjoint with respect to a bundle metric H (α ↦ α^{*h}):
    /// type swap with sign as in [`conj_form`], fiber matrices H^{-1} α^† H.
    /// `h` = None means the flat metric (plain conjugate transpose).
    pub fn adjoint_h(&self, h: Option<&crate::bundle::BundleMetric>) -> FormField {
        let np = self.base.npoints();
        let r = self.rank;
        let mut comps: Vec<(u8, u8)> = self.comps.iter().map(|&(s, t)| (t, s)).collect();
        comps.sort();
        comps.dedup();
        let mut out = FormField::zero(self.base.clone(), comps, r);
        let mut m = vec![ZERO; r * r];
        let mut adj = vec![ZERO; r * r];
        for (ci, &(s, t)) in self.comps.iter().enumerate() {
            let sign = if (s.count_ones() * t.count_ones()) % 2 == 0 {
                ONE
            } else {
                -ONE
            };
            let co = out.find_comp(t, s).unwrap();
            for pt in 0..np {
                for i in 0..r {
                    for j in 0..r {
                        m[i * r + j] = self.slot(ci, i, j)[pt];
                    }
                }
                crate::linalg::mat_adjoint(&mut adj, &m, r);
                let final_m = match h {
                    None => adj.clone(),
                    Some(bm) => bm.conjugate_adjoint_at(&adj, pt),
                };
                for i in 0..r {
                    for j in 0..r {
                        out.slot_mut(co, i, j)[pt] += sign * final_m[i * r + j];
                    }
                }
            }
        }
        out
    }

    /// Project every slot to its grid mean (the harmonic part on the flat
    /// torus).
    pub fn harmonic_mean(&self) -> FormField {
        let np = self.base.npoints();
        let mut out = self.clone();
        let nslots = out.comps.len() * out.rank * out.rank;
        for s in 0..nslots {
            let mean = out.data[s * np..(s + 1) * np]
                .iter()
                .sum::<Complex64>()
                / c(np as f64, 0.0);
            out.data[s * np..(s + 1) * np].fill(mean);
        }
        out
    }
}

/// ∂f: holomorphic exterior derivative, bidegree (p,q) → (p+1,q).
/// Degree overflow yields the zero form of the formal bidegree.
pub fn del(f: &FormField) -> FormField {
    exterior(f, false)
}

/// ∂̄f: antiholomorphic exterior derivative, bidegree (p,q) → (p,q+1).
pub fn delbar(f: &FormField) -> FormField {
    exterior(f, true)
}

fn exterior(f: &FormField, anti: bool) -> FormField {
    let n = f.base.n();
    let r = f.rank;
    let np = f.base.npoints();
    let mut out_comps: Vec<(u8, u8)> = Vec::new();
    for &(s, t) in &f.comps {
        for a in 0..n {
            let bit = 1u8 << a;
            let tgt = if anti {
                if t & bit != 0 {
                    continue;
                }
                (s, t | bit)
            } else {
                if s & bit != 0 {
                    continue;
                }
                (s | bit, t)
            };
            if !out_comps.contains(&tgt) {
                out_comps.push(tgt);
            }
        }
    }
    out_comps.sort();
    let mut out = FormField::zero(f.base.clone(), out_comps, r);
    for (ci, &(s, t)) in f.comps.iter().enumerate() {
        for a in 0..n {
            let bit = 1u8 << a;
            let (tgt, sign) = if anti {
                if t & bit != 0 {
                    continue;
                }
                // dz̄^a passes dz^S then earlier dz̄'s
                let sgn = if s.count_ones() % 2 == 0 { 1.0 } else { -1.0 };
                ((s, t | bit), sgn * shuffle_sign(bit, t))
            } else {
                if s & bit != 0 {
                    continue;
                }
                ((s | bit, t), shuffle_sign(bit, s))
            };
            let co = out.find_comp(tgt.0, tgt.1).unwrap();
            for i in 0..r {
                for j in 0..r {
                    let d = if anti {
                        f.base.d_zbar(f.slot(ci, i, j), a)
                    } else {
                        f.base.d_z(f.slot(ci, i, j), a)
                    };
                    let dst = out.slot_mut(co, i, j);
                    for pt in 0..np {
                        dst[pt] += c(sign, 0.0) * d[pt];
                    }
                }
            }
        }
    }
    out
}

/// Contraction Λ_g of a 2-form: the trace of its (1,1)-part against ω_g,
/// normalized so that Λ_g(ω_g) = n. The (2,0)/(0,2) parts contract to zero.
pub fn lambda_contract(f: &FormField, g: &HermitianMetric) -> Result<FormField> {
    f.base().check_same_base(g.base())?;
    let n = g.n();
    let r = f.rank;
    let np = f.base.npoints();
    let mut out = FormField::zero(f.base.clone(), vec![(0, 0)], r);
    for (ci, &(s, t)) in f.comps.iter().enumerate() {
        if s.count_ones() != 1 || t.count_ones() != 1 {
            continue;
        }
        let a = s.trailing_zeros() as usize;
        let b = t.trailing_zeros() as usize;
        // Λ(M) = -i Σ (G^{-1})[b][a] M[a][b]
        let w = g.ginv_at(b, a).to_vec();
        let _ = n;
        for i in 0..r {
            for j in 0..r {
                let src = f.slot(ci, i, j).to_vec();
                let dst = out.slot_mut(0, i, j);
                for pt in 0..np {
                    dst[pt] += c(0.0, -1.0) * w[pt] * src[pt];
                }
            }
        }
    }
    Ok(out)
}

/// Hodge star. Supported: 2-forms on surfaces (n = 2), plus the trivial
/// (0,0) ↔ (n,n) pairing. On a surface, 2-forms split pointwise into
/// self-dual (2,0) ⊕ (0,2) ⊕ ℂ·ω and anti-self-dual primitive (1,1) parts;
/// the star is computed from that decomposition, which is exact for every
/// Hermitian metric.
pub fn hodge_star(f: &FormField, g: &HermitianMetric) -> Result<FormField> {
    f.base().check_same_base(g.base())?;
    let n = g.n();
    let deg = f.total_degree();
    match deg {
        Some(0) => {
            // *φ = φ · vol
            let full: u8 = (1 << n) - 1;
            let mut out = FormField::zero(f.base.clone(), vec![(full, full)], f.rank);
            let volc = g.vol_coefficient();
            let np = f.base.npoints();
            for i in 0..f.rank {
                for j in 0..f.rank {
                    let src = f.slot(0, i, j).to_vec();
                    let dst = out.slot_mut(0, i, j);
                    for pt in 0..np {
                        dst[pt] = src[pt] * volc[pt];
                    }
                }
            }
            Ok(out)
        }
        Some(d) if d as usize == 2 * n => {
            let full: u8 = (1 << n) - 1;
            let ci = f
                .find_comp(full, full)
                .ok_or(Error::DegreeUnsupported(n as u8, n as u8))?;
            let mut out = FormField::zero(f.base.clone(), vec![(0, 0)], f.rank);
            let volc = g.vol_coefficient();
            let np = f.base.npoints();
            for i in 0..f.rank {
                for j in 0..f.rank {
                    let src = f.slot(ci, i, j).to_vec();
                    let dst = out.slot_mut(0, i, j);
                    for pt in 0..np {
                        dst[pt] = src[pt] / volc[pt];
                    }
                }
            }
            Ok(out)
        }
        Some(2) if n == 2 => {
            let r = f.rank;
            let np = f.base.npoints();
            let s_field = lambda_contract(f, g)?;
            let mut out = FormField::zero_pure(f.base.clone(), 2, 0, r);
            let mut comps = out.comps.clone();
            comps.extend(FormField::zero_pure(f.base.clone(), 1, 1, r).comps.iter());
            comps.extend(FormField::zero_pure(f.base.clone(), 0, 2, r).comps.iter());
            out = FormField::zero(f.base.clone(), comps, r);
            // copy (2,0) and (0,2) parts
            for (ci, &(s, t)) in f.comps.iter().enumerate() {
                let (p, q) = (s.count_ones(), t.count_ones());
                if (p, q) == (2, 0) || (p, q) == (0, 2) {
                    let co = out.find_comp(s, t).unwrap();
                    for i in 0..r {
                        for j in 0..r {
                            let src = f.slot(ci, i, j).to_vec();
                            out.slot_mut(co, i, j).copy_from_slice(&src);
                        }
                    }
                }
            }
            // (1,1)-part ↦ (Λf)·ω − f^{1,1}
            for a in 0..2u8 {
                for b in 0..2u8 {
                    let co = out.find_comp(1 << a, 1 << b).unwrap();
                    let gab = g.g_at(a as usize, b as usize).to_vec();
                    for i in 0..r {
                        for j in 0..r {
                            let sv = s_field.slot(0, i, j).to_vec();
                            let orig = f
                                .find_comp(1 << a, 1 << b)
                                .map(|c0| f.slot(c0, i, j).to_vec());
                            let dst = out.slot_mut(co, i, j);
                            for pt in 0..np {
                                let mut v = sv[pt] * c(0.0, 1.0) * gab[pt];
                                if let Some(o) = &orig {
                                    v -= o[pt];
                                }
                                dst[pt] = v;
                            }
                        }
                    }
                }
            }
            Ok(out)
        }
        _ => Err(Error::DegreeUnsupported(
            deg.unwrap_or(255),
            0,
        )),
    }
}

/// ∫_X f. Accepts scalar (0,0)-fields (integrated against vol_g) and scalar
/// top-degree forms (integrated as forms). End-valued input is rejected;
/// take the trace upstream.
pub fn integrate(f: &FormField, g: &HermitianMetric) -> Result<Complex64> {
    f.base().check_same_base(g.base())?;
    if f.rank != 1 {
        return Err(Error::NonScalarFiber);
    }
    let n = g.n();
    let full: u8 = (1 << n) - 1;
    if f.comps.is_empty() {
        return Ok(ZERO);
    }
    if f.comps == vec![(0u8, 0u8)] {
        return Ok(g.integrate_scalar(f.slot(0, 0, 0)));
    }
    if let Some(ci) = f.find_comp(full, full) {
        // a top-degree form: Σ coef · κ / npoints; other comps must be absent
        if f.comps.len() != 1 {
            return Err(Error::DegreeUnsupported(n as u8, n as u8));
        }
        let np = f.base.npoints();
        let mean = f.slot(ci, 0, 0).iter().sum::<Complex64>() / c(np as f64, 0.0);
        return Ok(mean * f.base.kappa());
    }
    Err(Error::DegreeUnsupported(0, 0))
}

/// Pointwise Gram coefficient ⟨dz^A∧dz̄^B, dz^C∧dz̄^D⟩ at a grid point.
fn gram_entry(
    g: &HermitianMetric,
    pt: usize,
    (sa, ta): (u8, u8),
    (sc, tc): (u8, u8),
) -> Complex64 {
    if sa.count_ones() != sc.count_ones() || ta.count_ones() != tc.count_ones() {
        return ZERO;
    }
    let minor = |rows: u8, cols: u8| -> Complex64 {
        let r: Vec<usize> = (0..8).filter(|k| rows & (1 << k) != 0).collect();
        let cidx: Vec<usize> = (0..8).filter(|k| cols & (1 << k) != 0).collect();
        match r.len() {
            0 => ONE,
            1 => g.ginv_at(cidx[0], r[0])[pt],
            2 => {
                let a = g.ginv_at(cidx[0], r[0])[pt];
                let b = g.ginv_at(cidx[1], r[0])[pt];
                let d = g.ginv_at(cidx[0], r[1])[pt];
                let e = g.ginv_at(cidx[1], r[1])[pt];
                a * e - b * d
            }
            _ => unreachable!("n ≤ 2"),
        }
    };
    minor(sa, sc) * minor(ta, tc).conj()
}

/// L²(g, h) inner product of two forms of the same fiber rank.
/// The fiber pairing is tr(a · b^{*h}); `h` = None uses the flat fiber
/// metric (Frobenius).
pub fn form_inner(
    a: &FormField,
    b: &FormField,
    g: &HermitianMetric,
    h: Option<&crate::bundle::BundleMetric>,
) -> Result<Complex64> {
    a.base().check_same_base(b.base())?;
    a.base().check_same_base(g.base())?;
    if a.rank != b.rank {
        return Err(Error::RankMismatch(a.rank, b.rank));
    }
    let r = a.rank;
    let np = a.base.npoints();
    let mut dens = vec![ZERO; np];
    let mut bm = vec![ZERO; r * r];
    let mut badj = vec![ZERO; r * r];
    for (ca, &ka) in a.comps.iter().enumerate() {
        for (cb, &kb) in b.comps.iter().enumerate() {
            if ka.0.count_ones() != kb.0.count_ones() || ka.1.count_ones() != kb.1.count_ones()
            {
                continue;
            }
            for pt in 0..np {
                let gram = gram_entry(g, pt, ka, kb);
                if gram == ZERO {
                    continue;
                }
                for i in 0..r {
                    for j in 0..r {
                        bm[i * r + j] = b.slot(cb, i, j)[pt];
                    }
                }
                crate::linalg::mat_adjoint(&mut badj, &bm, r);
                let badj_h = match h {
                    None => badj.clone(),
                    Some(m) => m.conjugate_adjoint_at(&badj, pt),
                };
                // tr(a · badj_h)
                let mut tr = ZERO;
                for i in 0..r {
                    for k in 0..r {
                        tr += a.slot(ca, i, k)[pt] * badj_h[k * r + i];
                    }
                }
                dens[pt] += gram * tr;
            }
        }
    }
    Ok(g.integrate_scalar(&dens))
}

/// L²(g, h) norm.
pub fn l2_norm(
    a: &FormField,
    g: &HermitianMetric,
    h: Option<&crate::bundle::BundleMetric>,
) -> f64 {
    form_inner(a, a, g, h)
        .map(|v| v.re.max(0.0).sqrt())
        .unwrap_or(f64::NAN)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::c;

    fn torus1() -> LatticeTorus {
        LatticeTorus::square(1, 16).unwrap()
    }

    fn smooth_scalar(base: &LatticeTorus, seedphase: f64) -> FormField {
        let np = base.npoints();
        let tp = 2.0 * std::f64::consts::PI;
        let mut data = vec![ZERO; np];
        for pt in 0..np {
            let uv = base.point_coords(pt);
            let mut v = c(0.3, 0.0);
            for (k, &x) in uv.iter().enumerate() {
                v += c(
                    (tp * x + seedphase * (k as f64 + 1.0)).cos() * 0.4,
                    (tp * x * ((k % 2) as f64 + 1.0) + seedphase).sin() * 0.2,
                );
            }
            data[pt] = v;
        }
        FormField::scalar(base.clone(), data)
    }

    #[test]
    fn delbar_of_constant_is_zero() {
        let t = torus1();
        let f = FormField::scalar(t.clone(), vec![c(2.5, -1.0); t.npoints()]);
        let d = delbar(&f);
        assert!(d.max_abs() < 1e-13);
    }

    #[test]
    fn del_matches_analytic_derivative() {
        // f = exp(2πi·Re z¹) on the square torus: Re z = u (τ = i), so
        // ∂f = πi·f·dz since ∂_z u = 1/2 ... with τ = i: ∂_z = (∂_u + i∂_v)/2·...
        let t = torus1();
        let np = t.npoints();
        let tp = 2.0 * std::f64::consts::PI;
        let mut data = vec![ZERO; np];
        for pt in 0..np {
            let uv = t.point_coords(pt);
            data[pt] = c(0.0, tp * uv[0]).exp();
        }
        let f = FormField::scalar(t.clone(), data.clone());
        let df = del(&f);
        let ci = df.find_comp(1, 0).unwrap();
        let a = t.z_coeffs(0)[0]; // ∂u/∂z
        let mut max_rel = 0.0f64;
        for pt in 0..np {
            let expect = c(0.0, tp) * a * data[pt];
            let got = df.slot(ci, 0, 0)[pt];
            max_rel = max_rel.max((got - expect).norm() / expect.norm());
        }
        assert!(max_rel < 1e-12, "relative error {max_rel}");
    }

    #[test]
    fn delbar_squared_is_zero_on_random_smooth_field() {
        for (n, pts) in [(1usize, 16usize), (2, 6)] {
            let t = LatticeTorus::square(n, pts).unwrap();
            let f = smooth_scalar(&t, 0.7);
            let dd = delbar(&delbar(&f));
            assert!(dd.max_abs() < 1e-12, "n={n}: {}", dd.max_abs());
            let dd2 = del(&del(&f));
            assert!(dd2.max_abs() < 1e-12);
            let mixed = del(&delbar(&f)).plus(&delbar(&del(&f))).unwrap();
            assert!(mixed.max_abs() < 1e-12);
        }
    }

    #[test]
    fn lambda_of_omega_is_n() {
        for (n, pts) in [(1usize, 8usize), (2, 4)] {
            let t = LatticeTorus::square(n, pts).unwrap();
            let g = HermitianMetric::euclidean(t.clone(), 0.8);
            let om = g.omega();
            let lam = lambda_contract(&om, &g).unwrap();
            for pt in 0..t.npoints() {
                assert!((lam.slot(0, 0, 0)[pt] - c(n as f64, 0.0)).norm() < 1e-12);
            }
        }
    }

    #[test]
    fn lambda_normalization_hand_value() {
        // Λ(i dz¹∧dz̄¹) = 1 for the euclidean metric g = Id on n = 1
        let t = torus1();
        let g = HermitianMetric::euclidean(t.clone(), 1.0);
        let mut f = FormField::zero_pure(t.clone(), 1, 1, 1);
        let np = t.npoints();
        f.slot_mut(0, 0, 0)[..np].fill(c(0.0, 1.0));
        let lam = lambda_contract(&f, &g).unwrap();
        assert!((lam.slot(0, 0, 0)[0] - ONE).norm() < 1e-14);
    }

    #[test]
    fn lambda_kills_two_zero_part() {
        let t = LatticeTorus::square(2, 4).unwrap();
        let g = HermitianMetric::euclidean(t.clone(), 1.0);
        let mut f = FormField::zero_pure(t.clone(), 2, 0, 1);
        let np = t.npoints();
        f.slot_mut(0, 0, 0)[..np].fill(ONE);
        let lam = lambda_contract(&f, &g).unwrap();
        assert!(lam.max_abs() < 1e-15);
    }

    #[test]
    fn integrate_normalized_volume() {
        let t = torus1();
        let g = HermitianMetric::euclidean_unit_volume(t.clone());
        let one = FormField::scalar(t.clone(), vec![ONE; t.npoints()]);
        let v = integrate(&one, &g).unwrap();
        assert!((v - ONE).norm() < 1e-12);
    }

    #[test]
    fn integrate_oscillatory_mode_vanishes() {
        let t = torus1();
        let g = HermitianMetric::euclidean_unit_volume(t.clone());
        let np = t.npoints();
        let tp = 2.0 * std::f64::consts::PI;
        let mut data = vec![ZERO; np];
        for pt in 0..np {
            let uv = t.point_coords(pt);
            data[pt] = c(0.0, tp * uv[0]).exp();
        }
        let f = FormField::scalar(t.clone(), data);
        let v = integrate(&f, &g).unwrap();
        assert!(v.norm() < 1e-13);
    }

    #[test]
    fn integrate_matches_double_resolution_riemann_sum() {
        // volume density of a curved metric integrated on N and 2N grids
        let mk = |pts: usize| {
            let t = LatticeTorus::square(1, pts).unwrap();
            let np = t.npoints();
            let tp = 2.0 * std::f64::consts::PI;
            let mut gfield = vec![ZERO; np];
            for pt in 0..np {
                let uv = t.point_coords(pt);
                gfield[pt] = c(
                    0.8 + 0.2 * (tp * uv[0]).cos() + 0.1 * (tp * uv[1]).sin(),
                    0.0,
                );
            }
            let g = HermitianMetric::from_field(t.clone(), gfield).unwrap();
            g.volume()
        };
        let coarse = mk(16);
        let fine = mk(32);
        assert!((coarse - fine).abs() < 1e-8, "{coarse} vs {fine}");
    }

    #[test]
    fn wedge_anticommutes_for_one_forms() {
        let t = LatticeTorus::square(2, 4).unwrap();
        let mut a = FormField::zero_pure(t.clone(), 1, 0, 1);
        let mut b = FormField::zero_pure(t.clone(), 0, 1, 1);
        let np = t.npoints();
        a.slot_mut(0, 0, 0)[..np].fill(c(1.0, 0.3));
        a.slot_mut(1, 0, 0)[..np].fill(c(-0.4, 0.2));
        b.slot_mut(0, 0, 0)[..np].fill(c(0.7, -0.1));
        b.slot_mut(1, 0, 0)[..np].fill(c(0.2, 0.9));
        let ab = a.wedge(&b).unwrap();
        let ba = b.wedge(&a).unwrap();
        let sum = ab.plus(&ba).unwrap();
        assert!(sum.max_abs() < 1e-14);
    }

    #[test]
    fn hodge_star_fixed_points_on_surface() {
        let t = LatticeTorus::square(2, 4).unwrap();
        let g = HermitianMetric::euclidean(t.clone(), 0.5);
        // *ω = ω
        let om = g.omega();
        let som = hodge_star(&om, &g).unwrap();
        let diff = som.minus(&om).unwrap();
        assert!(diff.max_abs() < 1e-12);
        // *(dz¹∧dz²) = dz¹∧dz² (self-dual (2,0))
        let mut f20 = FormField::zero_pure(t.clone(), 2, 0, 1);
        let np = t.npoints();
        f20.slot_mut(0, 0, 0)[..np].fill(ONE);
        let s = hodge_star(&f20, &g).unwrap();
        let d = s.minus(&f20).unwrap();
        assert!(d.max_abs() < 1e-13);
    }

    #[test]
    fn hodge_star_negates_primitive_one_one() {
        let t = LatticeTorus::square(2, 4).unwrap();
        let g = HermitianMetric::euclidean(t.clone(), 1.0);
        // α = i(dz¹∧dz̄¹ - dz²∧dz̄²) is primitive: Λα = 0
        let mut a = FormField::zero_pure(t.clone(), 1, 1, 1);
        let np = t.npoints();
        let c11 = a.find_comp(1, 1).unwrap();
        let c22 = a.find_comp(2, 2).unwrap();
        a.slot_mut(c11, 0, 0)[..np].fill(c(0.0, 1.0));
        a.slot_mut(c22, 0, 0)[..np].fill(c(0.0, -1.0));
        let lam = lambda_contract(&a, &g).unwrap();
        assert!(lam.max_abs() < 1e-14);
        let s = hodge_star(&a, &g).unwrap();
        let sum = s.plus(&a).unwrap();
        assert!(sum.max_abs() < 1e-12);
        // *² = id on 2-forms
        let ss = hodge_star(&s, &g).unwrap();
        let d = ss.minus(&a).unwrap();
        assert!(d.max_abs() < 1e-12);
    }

    #[test]
    fn lambda_is_adjoint_of_wedging_omega() {
        // ⟨ω∧u, v⟩ = ⟨u, Λv⟩ pointwise — integrated form here
        let t = LatticeTorus::square(2, 4).unwrap();
        let np = t.npoints();
        // mildly curved metric
        let tp = 2.0 * std::f64::consts::PI;
        let mut gf = vec![ZERO; 4 * np];
        for pt in 0..np {
            let uv = t.point_coords(pt);
            let bump = 0.1 * (tp * uv[0]).cos();
            gf[pt] = c(1.0 + bump, 0.0);
            gf[3 * np + pt] = c(1.2 - bump, 0.0);
            gf[np + pt] = c(0.05, 0.02);
            gf[2 * np + pt] = c(0.05, -0.02);
        }
        let g = HermitianMetric::from_field(t.clone(), gf).unwrap();
        let u = smooth_scalar(&t, 0.3);
        let mut v = FormField::zero_pure(t.clone(), 1, 1, 1);
        for ci in 0..v.comps().len() {
            let f = smooth_scalar(&t, 0.9 + ci as f64);
            let src = f.slot(0, 0, 0).to_vec();
            v.slot_mut(ci, 0, 0).copy_from_slice(&src);
        }
        let om = g.omega();
        let wu = om.wedge(&u).unwrap();
        let lhs = form_inner(&wu, &v, &g, None).unwrap();
        let lv = lambda_contract(&v, &g).unwrap();
        let rhs = form_inner(&u, &lv, &g, None).unwrap();
        assert!(
            (lhs - rhs).norm() < 1e-10 * (1.0 + lhs.norm()),
            "{lhs} vs {rhs}"
        );
    }

    #[test]
    fn inner_product_matches_star_pairing() {
        // ⟨α, β⟩·Vol-integrated = ∫ α ∧ *β̄ for scalar 2-forms on a surface
        let t = LatticeTorus::square(2, 4).unwrap();
        let g = HermitianMetric::euclidean(t.clone(), 0.9);
        let mut alpha = FormField::zero_pure(t.clone(), 1, 1, 1);
        let mut beta = FormField::zero_pure(t.clone(), 1, 1, 1);
        let np = t.npoints();
        for (ci, val) in [(0usize, c(0.5, 0.1)), (1, c(-0.2, 0.4)), (2, c(0.3, 0.0)), (3, c(0.0, -0.7))] {
            alpha.slot_mut(ci, 0, 0)[..np].fill(val);
            beta.slot_mut(ci, 0, 0)[..np].fill(val * c(0.3, -0.8) + c(0.1, 0.0));
        }
        let lhs = form_inner(&alpha, &beta, &g, None).unwrap();
        let sb = hodge_star(&beta.conj_form(), &g).unwrap();
        let wedge = alpha.wedge(&sb).unwrap();
        let rhs = integrate(&wedge, &g).unwrap();
        assert!((lhs - rhs).norm() < 1e-10 * (1.0 + lhs.norm()), "{lhs} vs {rhs}");
    }
}
