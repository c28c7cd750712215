//! Pseudo-quon pairs `a = S c S⁻¹`, `b = S c† S⁻¹` generated by a bounded
//! similarity `S`, their biorthogonal families `φ_n = S e_n`,
//! `Ψ_n = (S†)⁻¹ e_n`, and the metric operator `Θ`.
//!
//! The rank-one deformation `S = 1 + α P_{u,v}` with `P_{u,v} f = ⟨u,f⟩ v`,
//! `⟨u,v⟩ = 1` and `α + β + αβ = 0` has the exact inverse `1 + β P_{u,v}`.
//! With `u`, `v` compactly supported the deformation lives in a leading block
//! and the truncation only clips the q-mutator on the last basis vector.

use std::collections::BTreeMap;

use serde::Serialize;

use crate::fock::{check_dims, make_quon_c, max_abs, max_column_norm, FockVector, TruncatedOperator};
use crate::qcore::{BetaSequence, QParam};
use crate::{CMatrix, CVector, Error, Result, C64};

const UNIT_PAIRING_TOL: f64 = 1e-14;

fn one() -> C64 {
    C64::new(1.0, 0.0)
}

/// `P_{x,y} = y x†`, i.e. `P_{x,y} f = ⟨x, f⟩ y`.
pub fn projector(x: &CVector, y: &CVector) -> CMatrix {
    y * x.adjoint()
}

/// Parameters of `S = 1 + α P_{u,v}`.
#[derive(Debug, Clone, PartialEq)]
pub struct RankOneDeformation {
    u: FockVector,
    v: FockVector,
    alpha: C64,
    beta: C64,
}

impl RankOneDeformation {
    /// Solves `β = -α/(1+α)` from the constraint; rejects `α = -1`.
    pub fn new(u: FockVector, v: FockVector, alpha: C64) -> Result<Self> {
        let denom = one() + alpha;
        if denom.norm() < 1e-12 {
            return Err(Error::InvalidDeformation("alpha = -1 makes S singular".into()));
        }
        let beta = -alpha / denom;
        Self::with_parameters(u, v, alpha, beta)
    }

    /// Takes both parameters; they must satisfy `α + β + αβ = 0`.
    pub fn with_parameters(u: FockVector, v: FockVector, alpha: C64, beta: C64) -> Result<Self> {
        let constraint = alpha + beta + alpha * beta;
        if constraint.norm() > UNIT_PAIRING_TOL {
            return Err(Error::InvalidDeformation(format!(
                "alpha + beta + alpha*beta = {constraint} is not zero"
            )));
        }
        let n = u.dim().max(v.dim());
        let (u, v) = (u.embed(n)?, v.embed(n)?);
        let pairing = u.inner(&v);
        if (pairing - one()).norm() > UNIT_PAIRING_TOL {
            return Err(Error::InvalidDeformation(format!("<u, v> = {pairing}, expected 1")));
        }
        Ok(Self { u, v, alpha, beta })
    }

    pub fn alpha(&self) -> C64 {
        self.alpha
    }

    pub fn beta(&self) -> C64 {
        self.beta
    }

    pub fn u(&self) -> &FockVector {
        &self.u
    }

    pub fn v(&self) -> &FockVector {
        &self.v
    }

    /// Largest index where `u` or `v` is nonzero.
    pub fn max_support(&self) -> usize {
        self.u.max_support().unwrap_or(0).max(self.v.max_support().unwrap_or(0))
    }

    fn vectors(&self, dim: usize) -> Result<(CVector, CVector)> {
        Ok((self.u.embed(dim)?.0, self.v.embed(dim)?.0))
    }
}

/// Disjoint index sets `I_0, I_1, I_2` with weights `γ_k`, defining
/// `u = c_0 + c_1`, `v = c_0 + c_2` where `c_j = Σ_{k∈I_j} γ_k e_k` and
/// `‖c_0‖ = 1`.
#[derive(Debug, Clone, PartialEq)]
pub struct SplitSupport {
    pub i0: Vec<(usize, C64)>,
    pub i1: Vec<(usize, C64)>,
    pub i2: Vec<(usize, C64)>,
}

impl SplitSupport {
    pub fn new(i0: Vec<(usize, C64)>, i1: Vec<(usize, C64)>, i2: Vec<(usize, C64)>) -> Result<Self> {
        let mut seen = std::collections::BTreeSet::new();
        for (k, _) in i0.iter().chain(&i1).chain(&i2) {
            if !seen.insert(*k) {
                return Err(Error::InvalidDeformation(format!("index {k} appears in two sets")));
            }
        }
        let mass: f64 = i0.iter().map(|(_, g)| g.norm_sqr()).sum();
        if (mass - 1.0).abs() > UNIT_PAIRING_TOL {
            return Err(Error::InvalidDeformation(format!("sum over I_0 of |gamma|^2 = {mass}")));
        }
        Ok(Self { i0, i1, i2 })
    }

    /// The configuration used across tests and the CLI default: supports
    /// below index 10.
    pub fn standard() -> Self {
        Self::new(
            vec![(1, C64::new(0.6, 0.0)), (4, C64::new(0.0, 0.8))],
            vec![(2, C64::new(0.5, 0.0)), (7, C64::new(-0.3, 0.2))],
            vec![(3, C64::new(0.0, 0.4)), (9, C64::new(0.25, 0.0))],
        )
        .expect("standard split support is valid")
    }

    fn dense(parts: &[&[(usize, C64)]]) -> FockVector {
        let top = parts.iter().flat_map(|p| p.iter().map(|(k, _)| *k)).max().unwrap_or(0);
        let mut v = CVector::zeros(top + 1);
        for (k, g) in parts.iter().flat_map(|p| p.iter()) {
            v[*k] = *g;
        }
        FockVector(v)
    }

    pub fn u(&self) -> FockVector {
        Self::dense(&[&self.i0, &self.i1])
    }

    pub fn v(&self) -> FockVector {
        Self::dense(&[&self.i0, &self.i2])
    }

    pub fn gamma(&self, k: usize) -> Option<C64> {
        self.i0.iter().chain(&self.i1).chain(&self.i2).find(|(i, _)| *i == k).map(|(_, g)| *g)
    }

    /// Indices of `I_0 ∪ I_1` (the support of `u`).
    pub fn u_indices(&self) -> impl Iterator<Item = (usize, C64)> + '_ {
        self.i0.iter().chain(&self.i1).copied()
    }

    /// Indices of `I_0 ∪ I_2` (the support of `v`).
    pub fn v_indices(&self) -> impl Iterator<Item = (usize, C64)> + '_ {
        self.i0.iter().chain(&self.i2).copied()
    }

    pub fn deformation(&self, alpha: C64) -> Result<RankOneDeformation> {
        RankOneDeformation::new(self.u(), self.v(), alpha)
    }
}

/// The bounded similarity maps available in Fock coordinates. The unbounded
/// multiplication `e^{γx}` lives in [`crate::positionrep`].
#[derive(Debug, Clone, PartialEq)]
pub enum SimilarityOperator {
    Identity,
    RankOne(RankOneDeformation),
}

#[derive(Debug, Clone, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum SimilarityDescriptor {
    Identity,
    RankOne { alpha: [f64; 2], beta: [f64; 2], u: Vec<[f64; 2]>, v: Vec<[f64; 2]> },
}

pub(crate) fn pair(c: C64) -> [f64; 2] {
    [c.re, c.im]
}

impl SimilarityOperator {
    fn with_rank_one(&self, dim: usize, coef: impl Fn(&RankOneDeformation) -> C64, flip: bool) -> Result<CMatrix> {
        let mut m = CMatrix::identity(dim, dim);
        if let SimilarityOperator::RankOne(def) = self {
            let (u, v) = def.vectors(dim)?;
            let p = if flip { projector(&v, &u) } else { projector(&u, &v) };
            m += p * coef(def);
        }
        Ok(m)
    }

    /// `S = 1 + α P_{u,v}`.
    pub fn forward(&self, dim: usize) -> Result<CMatrix> {
        self.with_rank_one(dim, |d| d.alpha, false)
    }

    /// `S⁻¹ = 1 + β P_{u,v}`.
    pub fn inverse(&self, dim: usize) -> Result<CMatrix> {
        self.with_rank_one(dim, |d| d.beta, false)
    }

    /// `S† = 1 + ᾱ P_{v,u}`.
    pub fn adjoint(&self, dim: usize) -> Result<CMatrix> {
        self.with_rank_one(dim, |d| d.alpha.conj(), true)
    }

    /// `(S†)⁻¹ = 1 + β̄ P_{v,u}`.
    pub fn adjoint_inverse(&self, dim: usize) -> Result<CMatrix> {
        self.with_rank_one(dim, |d| d.beta.conj(), true)
    }

    /// Leading block where truncation leaves the algebra intact:
    /// `K - 2` for the identity and `K - 2 - max supp(u, v, c†u, cv)` for a
    /// rank-one map.
    pub fn k_safe(&self, dim: usize) -> usize {
        let pad = match self {
            SimilarityOperator::Identity => 0,
            SimilarityOperator::RankOne(def) => {
                let u_top = def.u.max_support().unwrap_or(0);
                let v_top = def.v.max_support().unwrap_or(0);
                // c†u reaches one index above u; cv one below v.
                (u_top + 1).max(v_top)
            }
        };
        dim.saturating_sub(2 + pad)
    }

    /// Upper bounds `(1 + |α|‖u‖‖v‖, 1 + |β|‖u‖‖v‖)` on `‖S‖` and `‖S⁻¹‖`,
    /// valid without truncation.
    pub fn norm_bounds(&self) -> (f64, f64) {
        match self {
            SimilarityOperator::Identity => (1.0, 1.0),
            SimilarityOperator::RankOne(d) => {
                let p = d.u.norm() * d.v.norm();
                (1.0 + d.alpha.norm() * p, 1.0 + d.beta.norm() * p)
            }
        }
    }

    pub fn describe(&self) -> SimilarityDescriptor {
        match self {
            SimilarityOperator::Identity => SimilarityDescriptor::Identity,
            SimilarityOperator::RankOne(d) => SimilarityDescriptor::RankOne {
                alpha: pair(d.alpha),
                beta: pair(d.beta),
                u: d.u.0.iter().copied().map(pair).collect(),
                v: d.v.0.iter().copied().map(pair).collect(),
            },
        }
    }
}

/// The deformed ladder pair `(a, b)` on a truncation.
#[derive(Debug, Clone)]
pub struct LadderPair {
    pub q: QParam,
    pub a: TruncatedOperator,
    pub b: TruncatedOperator,
}

impl LadderPair {
    pub fn dim(&self) -> usize {
        self.a.dim()
    }

    /// `N = ba`.
    pub fn number(&self) -> TruncatedOperator {
        TruncatedOperator::new("N", self.b.matrix() * self.a.matrix()).expect("finite product")
    }
}

/// `S X S⁻¹`, using the rank-one form of `S` and `S⁻¹` so the cost is
/// quadratic in the truncation.
fn conjugate(s: &SimilarityOperator, x: &CMatrix, dim: usize) -> Result<CMatrix> {
    match s {
        SimilarityOperator::Identity => Ok(x.clone()),
        SimilarityOperator::RankOne(def) => {
            let (u, v) = def.vectors(dim)?;
            // S S⁻¹ - 1 = (α + β + αβ⟨u,v⟩) P_{u,v}
            let gap = (def.alpha + def.beta + def.alpha * def.beta * u.dotc(&v)).norm() * u.camax() * v.camax();
            if !(gap < 1e-12) {
                return Err(Error::Singular(format!("S S^-1 - 1 has entries up to {gap:e}")));
            }
            let right = x + projector(&u, &(x * &v)) * def.beta;
            let left = &right + projector(&(right.adjoint() * &u), &v) * def.alpha;
            Ok(left)
        }
    }
}

/// `a = S c S⁻¹`, `b = S c† S⁻¹`.
pub fn make_pair(s: &SimilarityOperator, q: QParam, dim: usize) -> Result<LadderPair> {
    let c = make_quon_c(q, dim)?;
    let a = conjugate(s, c.matrix(), dim)?;
    let b = conjugate(s, &c.matrix().adjoint(), dim)?;
    Ok(LadderPair { q, a: TruncatedOperator::new("a", a)?, b: TruncatedOperator::new("b", b)? })
}

/// The same pair assembled term by term:
/// `a = c + α P_{c†u,v} + β P_{u,cv} + αβ P_{⟨cv,u⟩u,v}` and
/// `b = c† + α P_{cu,v} + β P_{u,c†v} + αβ P_{⟨c†v,u⟩u,v}`.
pub fn expanded_pair(def: &RankOneDeformation, q: QParam, dim: usize) -> Result<LadderPair> {
    let c = make_quon_c(q, dim)?.into_matrix();
    let cd = c.adjoint();
    let (u, v) = def.vectors(dim)?;
    let (al, be) = (def.alpha, def.beta);
    let build = |low: &CMatrix, high: &CMatrix| {
        let cv = low * &v;
        let shifted_u = u.clone() * cv.dotc(&u);
        low + projector(&(high * &u), &v) * al + projector(&u, &cv) * be + projector(&shifted_u, &v) * (al * be)
    };
    let a = build(&c, &cd);
    let b = build(&cd, &c);
    Ok(LadderPair { q, a: TruncatedOperator::new("a", a)?, b: TruncatedOperator::new("b", b)? })
}

/// Paired families `φ_n` (columns of `phi`) and `Ψ_n` (columns of `psi`).
#[derive(Debug, Clone)]
pub struct BiorthogonalFamily {
    q: QParam,
    phi: CMatrix,
    psi: CMatrix,
    source: SimilarityOperator,
    k_safe: usize,
    construction_defect: f64,
}

/// Direct `φ_n = S e_n`, `Ψ_n = (S†)⁻¹ e_n`, cross-checked against the
/// ladder construction `φ_n = b φ_{n-1}/β_{n-1}`, `Ψ_n = a† Ψ_{n-1}/β_{n-1}`
/// started from the vacua of `a` and `b†`.
pub fn build_family(s: &SimilarityOperator, q: QParam, dim: usize) -> Result<BiorthogonalFamily> {
    if q.value() <= -1.0 {
        return Err(Error::QOutOfRange { q: q.value(), expected: "(-1, inf) for ladder-built families" });
    }
    let pair = make_pair(s, q, dim)?;
    let phi = s.forward(dim)?;
    let psi = s.adjoint_inverse(dim)?;
    let k_safe = s.k_safe(dim);
    let betas = BetaSequence::new(q, dim);

    let a_dag = pair.a.matrix().adjoint();
    let mut phi_it = phi.column(0).into_owned();
    let mut psi_it = psi.column(0).into_owned();
    let mut defect: f64 = 0.0;
    for n in 1..k_safe {
        let inv_beta = C64::new(1.0 / betas.beta(n as i64 - 1), 0.0);
        phi_it = pair.b.matrix() * &phi_it * inv_beta;
        psi_it = &a_dag * &psi_it * inv_beta;
        defect = defect.max((&phi_it - phi.column(n)).norm()).max((&psi_it - psi.column(n)).norm());
    }
    Ok(BiorthogonalFamily { q, phi, psi, source: s.clone(), k_safe, construction_defect: defect })
}

impl BiorthogonalFamily {
    pub fn q(&self) -> QParam {
        self.q
    }

    pub fn dim(&self) -> usize {
        self.phi.nrows()
    }

    pub fn k_safe(&self) -> usize {
        self.k_safe
    }

    pub fn source(&self) -> &SimilarityOperator {
        &self.source
    }

    /// Largest gap between the ladder-built and the direct vectors.
    pub fn construction_defect(&self) -> f64 {
        self.construction_defect
    }

    pub fn phi(&self, n: usize) -> FockVector {
        FockVector(self.phi.column(n).into_owned())
    }

    pub fn psi(&self, n: usize) -> FockVector {
        FockVector(self.psi.column(n).into_owned())
    }

    pub fn phi_matrix(&self) -> &CMatrix {
        &self.phi
    }

    pub fn psi_matrix(&self) -> &CMatrix {
        &self.psi
    }

    pub fn phi_norms(&self) -> Vec<f64> {
        self.phi.column_iter().map(|c| c.norm()).collect()
    }

    pub fn psi_norms(&self) -> Vec<f64> {
        self.psi.column_iter().map(|c| c.norm()).collect()
    }

    /// `G_{nm} = ⟨φ_n, Ψ_m⟩`.
    pub fn gram(&self) -> CMatrix {
        self.phi.adjoint() * &self.psi
    }

    /// `max |G - 1|`.
    pub fn biorthogonality_defect(&self) -> f64 {
        max_abs(&(self.gram() - CMatrix::identity(self.dim(), self.dim())))
    }

    /// JSON export: `{K, q, similarity, phi, psi, residuals}`.
    pub fn document(&self, residuals: &BTreeMap<String, f64>) -> serde_json::Value {
        let cols = |m: &CMatrix| -> Vec<Vec<[f64; 2]>> {
            m.column_iter().map(|c| c.iter().copied().map(pair).collect()).collect()
        };
        serde_json::json!({
            "K": self.dim(),
            "q": self.q.value(),
            "similarity": self.source.describe(),
            "phi": cols(&self.phi),
            "psi": cols(&self.psi),
            "residuals": residuals,
        })
    }
}

/// Maxima over `n < K_safe` of the four ladder residuals plus the vacuum
/// conditions `aφ_0 = 0`, `b†Ψ_0 = 0`.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct LadderReport {
    pub b_raises_phi: f64,
    pub a_lowers_phi: f64,
    pub a_dagger_raises_psi: f64,
    pub b_dagger_lowers_psi: f64,
    pub vacuum_a: f64,
    pub vacuum_b_dagger: f64,
}

impl LadderReport {
    pub fn max(&self) -> f64 {
        [
            self.b_raises_phi,
            self.a_lowers_phi,
            self.a_dagger_raises_psi,
            self.b_dagger_lowers_psi,
            self.vacuum_a,
            self.vacuum_b_dagger,
        ]
        .into_iter()
        .fold(0.0, f64::max)
    }
}

pub fn check_ladder(family: &BiorthogonalFamily, pair: &LadderPair) -> Result<LadderReport> {
    check_dims(family.dim(), pair.dim())?;
    let betas = BetaSequence::new(family.q, family.dim());
    let (a, b) = (pair.a.matrix(), pair.b.matrix());
    let (a_dag, b_dag) = (a.adjoint(), b.adjoint());
    let a_phi = a * &family.phi;
    let b_phi = b * &family.phi;
    let ad_psi = &a_dag * &family.psi;
    let bd_psi = &b_dag * &family.psi;

    let mut r = LadderReport {
        b_raises_phi: 0.0,
        a_lowers_phi: 0.0,
        a_dagger_raises_psi: 0.0,
        b_dagger_lowers_psi: 0.0,
        vacuum_a: a_phi.column(0).norm(),
        vacuum_b_dagger: bd_psi.column(0).norm(),
    };
    for n in 0..family.k_safe {
        let up = C64::new(betas.beta(n as i64), 0.0);
        let down = C64::new(betas.beta(n as i64 - 1), 0.0);
        let lower = |m: &CMatrix| if n == 0 { CVector::zeros(m.nrows()) } else { m.column(n - 1) * down };
        r.b_raises_phi = r.b_raises_phi.max((b_phi.column(n) - family.phi.column(n + 1) * up).norm());
        r.a_dagger_raises_psi = r.a_dagger_raises_psi.max((ad_psi.column(n) - family.psi.column(n + 1) * up).norm());
        r.a_lowers_phi = r.a_lowers_phi.max((a_phi.column(n) - lower(&family.phi)).norm());
        r.b_dagger_lowers_psi = r.b_dagger_lowers_psi.max((bd_psi.column(n) - lower(&family.psi)).norm());
    }
    Ok(r)
}

/// Residuals of `N φ_n = β²_{n-1} φ_n` and `N† Ψ_n = β²_{n-1} Ψ_n`.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct NumberReport {
    pub phi_residual: f64,
    pub psi_residual: f64,
}

pub fn number_eigencheck(family: &BiorthogonalFamily, pair: &LadderPair) -> Result<NumberReport> {
    check_dims(family.dim(), pair.dim())?;
    let betas = BetaSequence::new(family.q, family.dim());
    let n_op = pair.number().into_matrix();
    let n_phi = &n_op * &family.phi;
    let nd_psi = n_op.adjoint() * &family.psi;
    let mut r = NumberReport { phi_residual: 0.0, psi_residual: 0.0 };
    for n in 0..family.k_safe {
        let ev = C64::new(betas.beta_sq(n as i64 - 1), 0.0);
        r.phi_residual = r.phi_residual.max((n_phi.column(n) - family.phi.column(n) * ev).norm());
        r.psi_residual = r.psi_residual.max((nd_psi.column(n) - family.psi.column(n) * ev).norm());
    }
    Ok(r)
}

/// Sorted eigenvalues of the leading `K_safe` blocks of `N` and `N†`.
#[derive(Debug, Clone)]
pub struct SpectrumReport {
    pub n_spectrum: Vec<C64>,
    pub n_dagger_spectrum: Vec<C64>,
    /// Largest pairwise gap between the two sorted spectra.
    pub max_gap: f64,
    /// Largest gap between the spectrum of `N` and `{β²_{k-1}}`.
    pub max_gap_to_beta_sq: f64,
}

fn sorted_eigenvalues(m: CMatrix) -> Result<Vec<C64>> {
    let ev = m
        .eigenvalues()
        .ok_or_else(|| Error::InvalidArgument("Schur decomposition did not converge".into()))?;
    let mut ev: Vec<C64> = ev.iter().copied().collect();
    ev.sort_by(|x, y| x.re.total_cmp(&y.re).then(x.im.total_cmp(&y.im)));
    Ok(ev)
}

pub fn isospectrality(pair: &LadderPair, k_safe: usize) -> Result<SpectrumReport> {
    if k_safe >= pair.dim() {
        return Err(Error::SafeBlockTooLarge { k_safe, dim: pair.dim() });
    }
    let n_op = pair.number().into_matrix();
    let block = n_op.view((0, 0), (k_safe, k_safe)).into_owned();
    let block_dag = n_op.adjoint().view((0, 0), (k_safe, k_safe)).into_owned();
    let n_spectrum = sorted_eigenvalues(block)?;
    let n_dagger_spectrum = sorted_eigenvalues(block_dag)?;
    let betas = BetaSequence::new(pair.q, k_safe);
    let max_gap = n_spectrum.iter().zip(&n_dagger_spectrum).map(|(x, y)| (x - y).norm()).fold(0.0, f64::max);
    let max_gap_to_beta_sq = n_spectrum
        .iter()
        .enumerate()
        .map(|(k, x)| (x - C64::new(betas.beta_sq(k as i64 - 1), 0.0)).norm())
        .fold(0.0, f64::max);
    Ok(SpectrumReport { n_spectrum, n_dagger_spectrum, max_gap, max_gap_to_beta_sq })
}

/// The metric `Θ = Σ |Ψ_n⟩⟨Ψ_n|` and its inverse `Σ |φ_n⟩⟨φ_n|`.
#[derive(Debug, Clone)]
pub struct Theta {
    pub theta: TruncatedOperator,
    pub theta_inv: TruncatedOperator,
}

impl Theta {
    /// Wrap an arbitrary candidate metric, inverting it by LU.
    pub fn from_matrix(theta: CMatrix) -> Result<Self> {
        let n = theta.nrows();
        let inv = theta
            .clone()
            .try_inverse()
            .ok_or_else(|| Error::Singular("candidate metric is not invertible".into()))?;
        let _ = n;
        Ok(Self { theta: TruncatedOperator::new("Θ", theta)?, theta_inv: TruncatedOperator::new("Θ⁻¹", inv)? })
    }
}

pub fn build_theta(family: &BiorthogonalFamily) -> Theta {
    let theta = &family.psi * family.psi.adjoint();
    let theta_inv = &family.phi * family.phi.adjoint();
    Theta {
        theta: TruncatedOperator::new("Θ", theta).expect("finite family"),
        theta_inv: TruncatedOperator::new("Θ⁻¹", theta_inv).expect("finite family"),
    }
}

/// `(S S†)⁻¹`, the closed form of `Θ` for a bounded similarity.
pub fn theta_closed_form(s: &SimilarityOperator, dim: usize) -> Result<CMatrix> {
    let sst = s.forward(dim)? * s.adjoint(dim)?;
    sst.try_inverse().ok_or_else(|| Error::Singular("S S† is not invertible".into()))
}

#[derive(Debug, Clone, Copy, Serialize)]
pub struct ThetaReport {
    pub self_adjoint_defect: f64,
    /// `max_n ‖Θ φ_n - Ψ_n‖`.
    pub maps_phi_to_psi: f64,
    /// `max(|ΘΘ⁻¹ - 1|, |Θ⁻¹Θ - 1|)` entrywise.
    pub inverse_defect: f64,
    /// `max |Θ - (SS†)⁻¹|` entrywise.
    pub closed_form_gap: f64,
    /// Smallest eigenvalue of the Hermitian part of the safe block.
    pub min_eigenvalue: f64,
    /// `max_{n<K_safe} ‖(N†Θ - ΘN) φ_n‖`.
    pub intertwining: f64,
}

pub fn check_theta(family: &BiorthogonalFamily, pair: &LadderPair, theta: &Theta) -> Result<ThetaReport> {
    check_dims(family.dim(), theta.theta.dim())?;
    let dim = family.dim();
    let t = theta.theta.matrix();
    let ti = theta.theta_inv.matrix();
    let id = CMatrix::identity(dim, dim);
    let closed = theta_closed_form(&family.source, dim)?;
    let k = family.k_safe;
    let block = t.view((0, 0), (k, k)).into_owned();
    let herm = (&block + block.adjoint()) * C64::new(0.5, 0.0);
    let min_eigenvalue = herm.symmetric_eigenvalues().min();
    let n_op = pair.number().into_matrix();
    let inter = (n_op.adjoint() * t - t * &n_op) * &family.phi;
    Ok(ThetaReport {
        self_adjoint_defect: max_abs(&(t - t.adjoint())),
        maps_phi_to_psi: max_column_norm(&(t * &family.phi - &family.psi), dim),
        inverse_defect: max_abs(&(t * ti - &id)).max(max_abs(&(ti * t - &id))),
        closed_form_gap: max_abs(&(t - closed)),
        min_eigenvalue,
        intertwining: max_column_norm(&inter, k),
    })
}

#[derive(Debug, Clone, Copy, Serialize)]
pub struct ConjugacyReport {
    /// `max_{n<K_safe} ‖a e_n - Θ⁻¹ b† Θ e_n‖`.
    pub conjugacy_residual: f64,
    /// `max_{n<K_safe} ‖Ψ_n - Θ φ_n‖`.
    pub psi_theta_phi: f64,
}

pub fn check_theta_conjugate(
    family: &BiorthogonalFamily,
    pair: &LadderPair,
    theta: &Theta,
    k_safe: usize,
) -> Result<ConjugacyReport> {
    check_dims(pair.dim(), theta.theta.dim())?;
    if k_safe >= pair.dim() {
        return Err(Error::SafeBlockTooLarge { k_safe, dim: pair.dim() });
    }
    let t = theta.theta.matrix();
    let ti = theta.theta_inv.matrix();
    let id = CMatrix::identity(pair.dim(), pair.dim());
    if !(max_abs(&(t * ti - &id)) < 1e-8) {
        return Err(Error::Singular("Θ⁻¹ does not invert Θ".into()));
    }
    let conj = ti * pair.b.matrix().adjoint() * t;
    Ok(ConjugacyReport {
        conjugacy_residual: max_column_norm(&(pair.a.matrix() - conj), k_safe),
        psi_theta_phi: max_column_norm(&(&family.psi - t * &family.phi), k_safe),
    })
}

/// `(Σ_n ⟨f,φ_n⟩⟨Ψ_n,g⟩, Σ_n ⟨f,Ψ_n⟩⟨φ_n,g⟩)`, both equal to `⟨f,g⟩` for
/// `f`, `g` supported in the safe block.
pub fn weak_resolution_check(family: &BiorthogonalFamily, f: &FockVector, g: &FockVector) -> Result<(C64, C64)> {
    let k = family.k_safe;
    for v in [f, g] {
        if let Some(top) = v.max_support() {
            if top >= k {
                return Err(Error::SupportViolation { index: top, limit: k });
            }
        }
    }
    let f = f.embed(family.dim())?.0;
    let g = g.embed(family.dim())?.0;
    let f_phi = family.phi.adjoint() * &f; // conj(⟨f, φ_n⟩)
    let f_psi = family.psi.adjoint() * &f;
    let psi_g = family.psi.adjoint() * &g; // ⟨Ψ_n, g⟩
    let phi_g = family.phi.adjoint() * &g;
    let first = f_phi.iter().zip(psi_g.iter()).map(|(x, y)| x.conj() * y).sum();
    let second = f_psi.iter().zip(phi_g.iter()).map(|(x, y)| x.conj() * y).sum();
    Ok((first, second))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fock::qmutator_residual;
    use crate::qcore::beta_sq;

    fn q(v: f64) -> QParam {
        QParam::new(v).unwrap()
    }

    fn paper_alpha() -> C64 {
        C64::new(0.0, 1.0)
    }

    fn rank_one() -> SimilarityOperator {
        SimilarityOperator::RankOne(SplitSupport::standard().deformation(paper_alpha()).unwrap())
    }

    #[test]
    fn beta_from_alpha() {
        let def = SplitSupport::standard().deformation(paper_alpha()).unwrap();
        assert!((def.beta() - C64::new(-0.5, -0.5)).norm() < 1e-16);
        assert!(RankOneDeformation::new(def.u().clone(), def.v().clone(), C64::new(-1.0, 0.0)).is_err());
        let bad = RankOneDeformation::with_parameters(
            def.u().clone(),
            def.v().clone(),
            C64::new(0.0, 1.0),
            C64::new(0.5, 0.0),
        );
        assert!(bad.is_err());
    }

    #[test]
    fn rejects_unpaired_vectors() {
        let u = FockVector::basis(0, 3);
        let v = FockVector::basis(1, 3);
        assert!(RankOneDeformation::new(u, v, C64::new(0.5, 0.0)).is_err());
    }

    #[test]
    fn exact_inverse() {
        for s in [SimilarityOperator::Identity, rank_one()] {
            let dim = 16;
            let id = CMatrix::identity(dim, dim);
            let (f, i) = (s.forward(dim).unwrap(), s.inverse(dim).unwrap());
            assert!(max_abs(&(&f * &i - &id)) < 1e-14);
            assert!(max_abs(&(&i * &f - &id)) < 1e-14);
            let (fa, ia) = (s.adjoint(dim).unwrap(), s.adjoint_inverse(dim).unwrap());
            assert!(max_abs(&(&fa - f.adjoint())) < 1e-15);
            assert!(max_abs(&(&fa * &ia - &id)) < 1e-14);
        }
    }

    #[test]
    fn undeformed_pair_is_c_and_c_dagger() {
        let pair = make_pair(&SimilarityOperator::Identity, q(0.4), 10).unwrap();
        let c = make_quon_c(q(0.4), 10).unwrap();
        assert_eq!(pair.a.matrix(), c.matrix());
        assert_eq!(pair.b.matrix(), &c.matrix().adjoint());
    }

    #[test]
    fn expansion_matches_similarity() {
        let def = SplitSupport::standard().deformation(paper_alpha()).unwrap();
        let s = SimilarityOperator::RankOne(def.clone());
        for qv in [0.2, 0.7] {
            let direct = make_pair(&s, q(qv), 32).unwrap();
            let expanded = expanded_pair(&def, q(qv), 32).unwrap();
            assert!(max_abs(&(direct.a.matrix() - expanded.a.matrix())) < 1e-13);
            assert!(max_abs(&(direct.b.matrix() - expanded.b.matrix())) < 1e-13);
            // b is not a† once S†S != 1
            assert!(max_abs(&(direct.b.matrix() - direct.a.matrix().adjoint())) > 0.1);
        }
    }

    #[test]
    fn deformed_mutator_on_safe_block() {
        let s = rank_one();
        let dim = 64;
        let qv = q(0.35);
        let pair = make_pair(&s, qv, dim).unwrap();
        assert_eq!(s.k_safe(dim), 64 - 2 - 9);
        assert!(qmutator_residual(&pair.a, &pair.b, qv, s.k_safe(dim)).unwrap() < 1e-12);
    }

    #[test]
    fn split_support_closed_forms() {
        let split = SplitSupport::standard();
        let alpha = paper_alpha();
        let def = split.deformation(alpha).unwrap();
        let beta = def.beta();
        let s = SimilarityOperator::RankOne(def);
        let dim = 20;
        let fam = build_family(&s, q(0.5), dim).unwrap();
        let (u, v) = (split.u().embed(dim).unwrap().0, split.v().embed(dim).unwrap().0);
        for k in 0..dim {
            let e = FockVector::basis(k, dim).0;
            let in_u = split.u_indices().any(|(i, _)| i == k);
            let in_v = split.v_indices().any(|(i, _)| i == k);
            let g = split.gamma(k).unwrap_or(C64::new(0.0, 0.0));
            let phi = if in_u { &e + &v * (alpha * g.conj()) } else { e.clone() };
            let psi = if in_v { &e + &u * (beta * g).conj() } else { e.clone() };
            assert!((fam.phi(k).0 - phi).norm() < 1e-15, "phi_{k}");
            assert!((fam.psi(k).0 - psi).norm() < 1e-15, "psi_{k}");
        }
        assert!(fam.biorthogonality_defect() < 1e-15);
    }

    #[test]
    fn identity_family_is_canonical_basis() {
        let fam = build_family(&SimilarityOperator::Identity, q(0.6), 12).unwrap();
        for n in 0..12 {
            assert_eq!(fam.phi(n), FockVector::basis(n, 12));
            assert_eq!(fam.psi(n), FockVector::basis(n, 12));
        }
        assert!(fam.construction_defect() < 1e-15);
    }

    #[test]
    fn ladder_construction_agrees_with_direct() {
        let fam = build_family(&rank_one(), q(0.4), 64).unwrap();
        assert!(fam.construction_defect() < 1e-11, "{}", fam.construction_defect());
        assert!((fam.phi(0).inner(&fam.psi(0)) - C64::new(1.0, 0.0)).norm() < 1e-15);
    }

    #[test]
    fn ladder_relations() {
        for (s, tol) in [(SimilarityOperator::Identity, 1e-13), (rank_one(), 1e-11)] {
            let qv = q(0.4);
            let fam = build_family(&s, qv, 64).unwrap();
            let pair = make_pair(&s, qv, 64).unwrap();
            let r = check_ladder(&fam, &pair).unwrap();
            assert!(r.max() < tol, "{r:?}");
            assert!(r.vacuum_a < 1e-15 && r.vacuum_b_dagger < 1e-15);
        }
    }

    #[test]
    fn number_operator_eigenvalues() {
        let s = rank_one();
        let qv = q(0.5);
        let fam = build_family(&s, qv, 48).unwrap();
        let pair = make_pair(&s, qv, 48).unwrap();
        let r = number_eigencheck(&fam, &pair).unwrap();
        assert!(r.phi_residual < 1e-11 && r.psi_residual < 1e-11, "{r:?}");
        // n = 3 explicitly: β²_2 = 1.75
        let n_phi3 = pair.number().apply(&fam.phi(3)).unwrap();
        assert!((n_phi3.0 - fam.phi(3).0 * C64::new(1.75, 0.0)).norm() < 1e-11);
        let n_phi0 = pair.number().apply(&fam.phi(0)).unwrap();
        assert!(n_phi0.norm() < 1e-15);

        let bos = q(1.0);
        let fam = build_family(&SimilarityOperator::Identity, bos, 16).unwrap();
        let pair = make_pair(&SimilarityOperator::Identity, bos, 16).unwrap();
        for n in 0..14 {
            let got = pair.number().apply(&fam.phi(n)).unwrap();
            assert!((got.0 - fam.phi(n).0 * C64::new(n as f64, 0.0)).norm() < 1e-13);
        }
    }

    #[test]
    fn spectra_agree() {
        let s = rank_one();
        let qv = q(0.6);
        let pair = make_pair(&s, qv, 64).unwrap();
        let r = isospectrality(&pair, s.k_safe(64)).unwrap();
        assert!(r.max_gap < 1e-9, "{}", r.max_gap);
        assert!(r.max_gap_to_beta_sq < 1e-9, "{}", r.max_gap_to_beta_sq);
        assert_eq!(r.n_spectrum.len(), s.k_safe(64));
        let _ = beta_sq(qv, 0);
    }

    #[test]
    fn theta_identities() {
        let s = rank_one();
        let qv = q(0.4);
        let dim = 64;
        let fam = build_family(&s, qv, dim).unwrap();
        let pair = make_pair(&s, qv, dim).unwrap();
        let theta = build_theta(&fam);
        let r = check_theta(&fam, &pair, &theta).unwrap();
        assert!(r.closed_form_gap < 1e-11, "{r:?}");
        assert!(r.self_adjoint_defect < 1e-14);
        assert!(r.maps_phi_to_psi < 1e-12);
        assert!(r.inverse_defect < 1e-11);
        assert!(r.min_eigenvalue > 0.0);
        assert!(r.intertwining < 1e-10);

        let id_fam = build_family(&SimilarityOperator::Identity, qv, 8).unwrap();
        let t = build_theta(&id_fam);
        assert_eq!(t.theta.matrix(), &CMatrix::identity(8, 8));
    }

    #[test]
    fn theta_conjugacy_and_negative_control() {
        let s = rank_one();
        let qv = q(0.4);
        let dim = 64;
        let fam = build_family(&s, qv, dim).unwrap();
        let pair = make_pair(&s, qv, dim).unwrap();
        let good = check_theta_conjugate(&fam, &pair, &build_theta(&fam), fam.k_safe()).unwrap();
        assert!(good.conjugacy_residual < 1e-10 && good.psi_theta_phi < 1e-12, "{good:?}");
        let wrong = Theta::from_matrix(CMatrix::identity(dim, dim)).unwrap();
        let bad = check_theta_conjugate(&fam, &pair, &wrong, fam.k_safe()).unwrap();
        assert!(bad.conjugacy_residual > 0.1);
        assert!(bad.psi_theta_phi > 0.1);

        let id = SimilarityOperator::Identity;
        let fam = build_family(&id, qv, 10).unwrap();
        let pair = make_pair(&id, qv, 10).unwrap();
        let r = check_theta_conjugate(&fam, &pair, &build_theta(&fam), 8).unwrap();
        assert_eq!(r.conjugacy_residual, 0.0);
    }

    #[test]
    fn weak_resolution_examples() {
        let id = build_family(&SimilarityOperator::Identity, q(0.5), 10).unwrap();
        let e0 = FockVector::basis(0, 10);
        let (x, y) = weak_resolution_check(&id, &e0, &e0).unwrap();
        assert_eq!((x, y), (C64::new(1.0, 0.0), C64::new(1.0, 0.0)));

        let fam = build_family(&rank_one(), q(0.5), 32).unwrap();
        let (x, y) = weak_resolution_check(&fam, &FockVector::basis(1, 32), &FockVector::basis(2, 32)).unwrap();
        assert!(x.norm() < 1e-11 && y.norm() < 1e-11);
        let far = FockVector::basis(31, 32);
        assert!(matches!(weak_resolution_check(&fam, &far, &e0), Err(Error::SupportViolation { .. })));
    }

    #[test]
    fn riesz_bounds() {
        let def = SplitSupport::standard().deformation(paper_alpha()).unwrap();
        let (al, be) = (def.alpha().norm(), def.beta().norm());
        let s = SimilarityOperator::RankOne(def);
        let dim = 32;
        let fam = build_family(&s, q(0.5), dim).unwrap();
        let s_norm = TruncatedOperator::new("S", s.forward(dim).unwrap()).unwrap().operator_norm();
        let s_inv_norm = TruncatedOperator::new("S⁻¹", s.inverse(dim).unwrap()).unwrap().operator_norm();
        for n in 0..dim {
            assert!(fam.phi(n).norm() <= s_norm + 1e-14);
            assert!(fam.psi(n).norm() <= s_inv_norm + 1e-14);
            assert!(fam.phi(n).norm() <= 1.0 + al);
            assert!(fam.psi(n).norm() <= 1.0 + be);
        }
    }

    #[test]
    fn export_document_shape() {
        let fam = build_family(&rank_one(), q(0.5), 12).unwrap();
        let mut res = BTreeMap::new();
        res.insert("biorthogonality".to_string(), fam.biorthogonality_defect());
        let doc = fam.document(&res);
        assert_eq!(doc["K"], 12);
        assert_eq!(doc["phi"].as_array().unwrap().len(), 12);
        assert_eq!(doc["similarity"]["kind"], "rank_one");
    }
}
