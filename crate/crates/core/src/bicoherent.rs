//! Bi-coherent states `φ(z) = N(|z|) Σ_k z^k/β_{k-1}! φ_k` and
//! `Ψ(z) = N(|z|) Σ_k z^k/β_{k-1}! Ψ_k`, their convergence radii and the
//! pseudo-expectation uncertainty product.
//!
//! Series lengths are chosen from geometric tail bounds: the ratio of
//! consecutive coefficients `|z|/β_k` decreases in `k`, so the tail past `K`
//! is bounded by the `K`-th term over `1 - |z|/β_K`.

use rayon::prelude::*;
use serde::Serialize;

use crate::fock::{check_dims, FockVector, TruncatedOperator};
use crate::pseudoquon::{BiorthogonalFamily, LadderPair, SimilarityOperator, SplitSupport};
use crate::qcore::{beta, q_factorial, BetaSequence, QParam};
use crate::{CVector, Error, Result, C64};

/// Relative tail mass accepted when truncating a series.
pub const TAIL_TARGET: f64 = 1e-12;
/// Longest series ever summed.
pub const MAX_TERMS: usize = 4096;

/// Smallest `K` with `scale · tail_K < TAIL_TARGET · partial_K`, where the
/// terms are `(r^k/β_{k-1}!)^p`. Returns `(K, partial sum, tail bound)`.
fn adaptive_length(q: QParam, r: f64, p: i32, scale: f64) -> Result<(usize, f64, f64)> {
    let mut term = 1.0;
    let mut partial = 0.0;
    for k in 0..MAX_TERMS {
        // term == (r^k / β_{k-1}!)^p
        let ratio = (r / beta(q, k as i64)).powi(p);
        let tail = if ratio < 1.0 { term / (1.0 - ratio) } else { f64::INFINITY };
        if k > 0 && scale * tail < TAIL_TARGET * partial {
            return Ok((k, partial, tail));
        }
        partial += term;
        term *= ratio;
    }
    Err(Error::SeriesTooShort { needed: MAX_TERMS + 1, available: MAX_TERMS })
}

fn check_disc(q: QParam, r: f64) -> Result<()> {
    let rho = q.coherent_radius();
    if !(r >= 0.0 && r < rho) {
        return Err(Error::OutsideDisc { modulus: r, rho });
    }
    Ok(())
}

/// `N(r)` with the number of terms summed and the relative tail bound.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct Normalization {
    pub value: f64,
    pub terms: usize,
    pub tail_bound: f64,
}

/// `N(r) = (Σ_{k<K} r^{2k}/(β_{k-1}!)²)^{-1/2}`; fails when the relative tail
/// bound at `K` exceeds [`TAIL_TARGET`].
pub fn normalization(q: QParam, r: f64, terms: usize) -> Result<Normalization> {
    let q = QParam::coherent(q.value())?;
    check_disc(q, r)?;
    let mut term = 1.0;
    let mut partial = 0.0;
    for k in 0..terms {
        partial += term;
        term *= (r / beta(q, k as i64)).powi(2);
    }
    let ratio = (r / beta(q, terms as i64)).powi(2);
    let tail = if ratio < 1.0 { term / (1.0 - ratio) } else { f64::INFINITY };
    let tail_bound = tail / partial;
    if !(tail_bound <= TAIL_TARGET) {
        let needed = adaptive_length(q, r, 2, 1.0)?.0;
        return Err(Error::SeriesTooShort { needed, available: terms });
    }
    Ok(Normalization { value: partial.powf(-0.5), terms, tail_bound })
}

/// [`normalization`] with the shortest admissible number of terms.
pub fn normalization_adaptive(q: QParam, r: f64) -> Result<Normalization> {
    let q = QParam::coherent(q.value())?;
    check_disc(q, r)?;
    let (terms, _, _) = adaptive_length(q, r, 2, 1.0)?;
    normalization(q, r, terms)
}

/// Series coefficients `z^k/β_{k-1}!`, `k < terms`.
pub fn series_coefficients(q: QParam, z: C64, terms: usize) -> Vec<C64> {
    let betas = BetaSequence::new(q, terms.max(1));
    let mut out = Vec::with_capacity(terms);
    let mut c = C64::new(1.0, 0.0);
    for k in 0..terms {
        out.push(c);
        c = c * z / betas.beta(k as i64);
    }
    out
}

#[derive(Debug, Clone)]
pub struct BiCoherentState {
    pub z: C64,
    pub q: QParam,
    pub norm_const: Normalization,
    pub phi_z: FockVector,
    pub psi_z: FockVector,
    /// Bound on `‖φ(z) - φ_K(z)‖` and `‖Ψ(z) - Ψ_K(z)‖` from the norm bounds
    /// of the family.
    pub tail_bound: f64,
    pub terms: usize,
}

impl BiCoherentState {
    /// `⟨φ(z), Ψ(z)⟩`.
    pub fn pairing(&self) -> C64 {
        self.phi_z.inner(&self.psi_z)
    }
}

/// Sum the two series over a bounded-similarity family. Both radii equal
/// `1/√(1-q)` there. `terms = None` picks the length adaptively; the series
/// must stop two rows short of the truncation so that the ladder operators
/// still act exactly on every summed vector.
pub fn bicoherent_state(family: &BiorthogonalFamily, z: C64, terms: Option<usize>) -> Result<BiCoherentState> {
    let q = QParam::coherent(family.q().value())?;
    let r = z.norm();
    check_disc(q, r)?;
    let (a_phi, a_psi) = family.source().norm_bounds();
    let scale = a_phi.max(a_psi);
    let terms = match terms {
        Some(t) => t,
        None => adaptive_length(q, r, 1, scale)?.0,
    };
    let available = family.dim().saturating_sub(2);
    if terms > available {
        return Err(Error::SeriesTooShort { needed: terms, available });
    }
    let norm_const = normalization_adaptive(q, r)?;
    let coeffs = CVector::from_vec(series_coefficients(q, z, terms));
    let n = C64::new(norm_const.value, 0.0);
    let phi_z = family.phi_matrix().columns(0, terms) * &coeffs * n;
    let psi_z = family.psi_matrix().columns(0, terms) * &coeffs * n;

    let last = series_coefficients(q, C64::new(r, 0.0), terms + 1)[terms].re;
    let ratio = r / beta(q, terms as i64);
    let tail_bound = if ratio < 1.0 { scale * norm_const.value * last / (1.0 - ratio) } else { f64::INFINITY };
    Ok(BiCoherentState { z, q, norm_const, phi_z: FockVector(phi_z), psi_z: FockVector(psi_z), tail_bound, terms })
}

/// `(‖aφ(z) - zφ(z)‖, ‖b†Ψ(z) - zΨ(z)‖)`.
pub fn eigen_check(state: &BiCoherentState, pair: &LadderPair) -> Result<(f64, f64)> {
    check_dims(state.phi_z.dim(), pair.dim())?;
    let a_phi = pair.a.matrix() * &state.phi_z.0;
    let bd_psi = pair.b.matrix().adjoint() * &state.psi_z.0;
    Ok(((a_phi - &state.phi_z.0 * state.z).norm(), (bd_psi - &state.psi_z.0 * state.z).norm()))
}

/// `e(z) + αN(|z|)Γ₁(z)v` and `e(z) + β̄N(|z|)Γ₂(z)u` with
/// `Γ_j(z) = Σ z^k conj(γ_k)/β_{k-1}!` over the supports of `u` and `v`.
pub fn split_support_closed_form(
    split: &SplitSupport,
    alpha: C64,
    q: QParam,
    z: C64,
    dim: usize,
) -> Result<(FockVector, FockVector)> {
    let def = split.deformation(alpha)?;
    let (a_phi, a_psi) = SimilarityOperator::RankOne(def.clone()).norm_bounds();
    let (bare, n) = build_quon_state(q, z, dim, a_phi.max(a_psi))?;
    let gamma = |idx: &mut dyn Iterator<Item = (usize, C64)>| -> C64 {
        idx.map(|(k, g)| z.powu(k as u32) * g.conj() / q_factorial(q, k as i64 - 1)).sum()
    };
    let g1 = gamma(&mut split.u_indices());
    let g2 = gamma(&mut split.v_indices());
    let (u, v) = (split.u().embed(dim)?.0, split.v().embed(dim)?.0);
    let phi = &bare + v * (def.alpha() * n * g1);
    let psi = bare + u * (def.beta().conj() * n * g2);
    Ok((FockVector(phi), FockVector(psi)))
}

/// The undeformed state `e(z)` on a `dim`-row truncation, summed to the
/// length a family with norm bound `scale` would use.
fn build_quon_state(q: QParam, z: C64, dim: usize, scale: f64) -> Result<(CVector, f64)> {
    let q = QParam::coherent(q.value())?;
    check_disc(q, z.norm())?;
    let terms = adaptive_length(q, z.norm(), 1, scale)?.0;
    let available = dim.saturating_sub(2);
    if terms > available {
        return Err(Error::SeriesTooShort { needed: terms, available });
    }
    let n = normalization_adaptive(q, z.norm())?.value;
    let mut e = CVector::zeros(dim);
    for (k, c) in series_coefficients(q, z, terms).into_iter().enumerate() {
        e[k] = c * n;
    }
    Ok((e, n))
}

/// A bound `‖φ_n‖ ≤ A r^n M_n`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct NormBound {
    pub a: f64,
    pub r: f64,
    pub m: MSequence,
}

/// Candidate sequences `M_n`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum MSequence {
    /// `M_n = 1`.
    Constant,
    /// `M_n = M^n`.
    Geometric { m: f64 },
    /// `M_n = β_{n-1}!`.
    QFactorial { q: f64 },
    /// `M_n = (n+1)√([n]!) = (n+1) β_{n-1}!`.
    PolyQFactorial { q: f64 },
}

fn finite_q(q: f64) -> QParam {
    QParam::new(q).expect("q stored in an MSequence is finite")
}

impl MSequence {
    pub fn ln_value(&self, n: usize) -> f64 {
        match *self {
            MSequence::Constant => 0.0,
            MSequence::Geometric { m } => n as f64 * m.ln(),
            MSequence::QFactorial { q } => q_factorial(finite_q(q), n as i64 - 1).ln(),
            MSequence::PolyQFactorial { q } => ((n + 1) as f64).ln() + q_factorial(finite_q(q), n as i64 - 1).ln(),
        }
    }

    /// `M = lim M_n/M_{n+1}`.
    pub fn limit_ratio(&self) -> f64 {
        match *self {
            MSequence::Constant => 1.0,
            MSequence::Geometric { m } => 1.0 / m,
            MSequence::QFactorial { q } | MSequence::PolyQFactorial { q } => {
                if q < 1.0 {
                    (1.0 - q).sqrt()
                } else {
                    0.0
                }
            }
        }
    }
}

impl NormBound {
    pub fn ln_bound(&self, n: usize) -> f64 {
        self.a.ln() + n as f64 * self.r.ln() + self.m.ln_value(n)
    }

    /// `min(1/√(1-q), M/(r√(1-q)))`.
    pub fn radius(&self, q: QParam) -> f64 {
        let base = q.coherent_radius();
        base.min(self.m.limit_ratio() / self.r * base)
    }
}

#[derive(Debug, Clone, Copy)]
pub enum FitPolicy {
    /// Known bounds; the norms are checked against them.
    Analytic { phi: NormBound, psi: NormBound },
    /// Least-squares fit over `{constant, β_{n-1}!, (n+1)β_{n-1}!}`.
    Fitted,
}

#[derive(Debug, Clone, Copy, Serialize)]
pub struct RadiusReport {
    pub rho_phi: f64,
    pub rho_psi: f64,
    pub rho: f64,
    pub phi_bound: NormBound,
    pub psi_bound: NormBound,
    /// Root-test radii from `‖φ_k‖/β_{k-1}!`.
    pub empirical_phi: f64,
    pub empirical_psi: f64,
    pub empirical: f64,
}

const MIN_SAMPLES: usize = 16;

/// Root-test estimate `(c_m/c_n)^{1/(n-m)}` with `c_k = ‖φ_k‖/β_{k-1}!`,
/// `n` the last sample and `m = n/2`.
pub fn empirical_radius(norms: &[f64], q: QParam) -> Result<f64> {
    check_norms(norms)?;
    let n = norms.len() - 1;
    let m = n / 2;
    let ln_c = |k: usize| norms[k].ln() - q_factorial(q, k as i64 - 1).ln();
    Ok(((ln_c(m) - ln_c(n)) / (n - m) as f64).exp())
}

fn check_norms(norms: &[f64]) -> Result<()> {
    if norms.len() < MIN_SAMPLES {
        return Err(Error::TooFewSamples { needed: MIN_SAMPLES, got: norms.len() });
    }
    if let Some(i) = norms.iter().position(|x| !(*x > 0.0 && x.is_finite())) {
        return Err(Error::NonPositiveNorm(i));
    }
    Ok(())
}

fn validate(norms: &[f64], bound: &NormBound) -> Result<()> {
    for (n, x) in norms.iter().enumerate() {
        let b = bound.ln_bound(n).exp();
        if *x > b * (1.0 + 1e-9) {
            return Err(Error::BoundViolated { n, norm: *x, bound: b });
        }
    }
    Ok(())
}

fn fit(norms: &[f64], q: QParam) -> NormBound {
    let menu = [MSequence::Constant, MSequence::QFactorial { q: q.value() }, MSequence::PolyQFactorial { q: q.value() }];
    let mut best: Option<(f64, NormBound)> = None;
    for m in menu {
        let pts: Vec<(f64, f64)> = norms.iter().enumerate().map(|(n, x)| (n as f64, x.ln() - m.ln_value(n))).collect();
        let len = pts.len() as f64;
        let (mx, my) = pts.iter().fold((0.0, 0.0), |(a, b), (x, y)| (a + x / len, b + y / len));
        let sxy: f64 = pts.iter().map(|(x, y)| (x - mx) * (y - my)).sum();
        let sxx: f64 = pts.iter().map(|(x, _)| (x - mx).powi(2)).sum();
        let slope = sxy / sxx;
        let rss: f64 = pts.iter().map(|(x, y)| (y - my - slope * (x - mx)).powi(2)).sum();
        // Lift the line so that it covers every sample.
        let ln_a = pts.iter().map(|(x, y)| y - slope * x).fold(f64::NEG_INFINITY, f64::max);
        let bound = NormBound { a: ln_a.exp(), r: slope.exp(), m };
        if best.as_ref().is_none_or(|(b, _)| rss < *b) {
            best = Some((rss, bound));
        }
    }
    best.expect("menu is not empty").1
}

pub fn radius_report(phi_norms: &[f64], psi_norms: &[f64], q: QParam, policy: &FitPolicy) -> Result<RadiusReport> {
    let q = QParam::coherent(q.value())?;
    check_norms(phi_norms)?;
    check_norms(psi_norms)?;
    let (phi_bound, psi_bound) = match *policy {
        FitPolicy::Analytic { phi, psi } => {
            validate(phi_norms, &phi)?;
            validate(psi_norms, &psi)?;
            (phi, psi)
        }
        FitPolicy::Fitted => (fit(phi_norms, q), fit(psi_norms, q)),
    };
    let rho_phi = phi_bound.radius(q);
    let rho_psi = psi_bound.radius(q);
    let empirical_phi = empirical_radius(phi_norms, q)?;
    let empirical_psi = empirical_radius(psi_norms, q)?;
    Ok(RadiusReport {
        rho_phi,
        rho_psi,
        rho: rho_phi.min(rho_psi),
        phi_bound,
        psi_bound,
        empirical_phi,
        empirical_psi,
        empirical: empirical_phi.min(empirical_psi),
    })
}

/// Analytic report for a bounded-similarity family: `A_φ = ‖S‖`,
/// `A_Ψ = ‖S⁻¹‖`, `r = M_n = 1`.
pub fn family_radius_report(family: &BiorthogonalFamily) -> Result<RadiusReport> {
    let dim = family.dim();
    let s = family.source();
    let s_norm = TruncatedOperator::new("S", s.forward(dim)?)?.operator_norm();
    let s_inv_norm = TruncatedOperator::new("S⁻¹", s.inverse(dim)?)?.operator_norm();
    let bound = |a: f64| NormBound { a, r: 1.0, m: MSequence::Constant };
    let policy = FitPolicy::Analytic { phi: bound(s_norm), psi: bound(s_inv_norm) };
    radius_report(&family.phi_norms(), &family.psi_norms(), family.q(), &policy)
}

/// Pseudo-variances of `Q = (b+a)/√2` and `P = i(b-a)/√2` under
/// `⟨T⟩ = ⟨Ψ(z), Tφ(z)⟩`, with their product and the prediction
/// `½(1 + (q-1)|z|²)`.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct Uncertainty {
    pub var_q: [f64; 2],
    pub var_p: [f64; 2],
    /// Principal square root of `var_q · var_p`.
    pub product: [f64; 2],
    pub predicted: f64,
}

impl Uncertainty {
    pub fn error(&self) -> f64 {
        C64::new(self.product[0] - self.predicted, self.product[1]).norm()
    }
}

pub fn uncertainty_product(state: &BiCoherentState, pair: &LadderPair) -> Result<Uncertainty> {
    check_dims(state.phi_z.dim(), pair.dim())?;
    let s2 = C64::new(std::f64::consts::FRAC_1_SQRT_2, 0.0);
    let i = C64::new(0.0, 1.0);
    let (a, b) = (pair.a.matrix(), pair.b.matrix());
    let q_op = (b + a) * s2;
    let p_op = (b - a) * (i * s2);
    let phi = &state.phi_z.0;
    let psi = &state.psi_z.0;
    let variance = |t: &crate::CMatrix| {
        let t_phi = t * phi;
        let tt_phi = t * &t_phi;
        let mean = psi.dotc(&t_phi);
        psi.dotc(&tt_phi) - mean * mean
    };
    let vq = variance(&q_op);
    let vp = variance(&p_op);
    let product = (vq * vp).sqrt();
    let predicted = 0.5 * (1.0 + (state.q.value() - 1.0) * state.z.norm_sqr());
    Ok(Uncertainty { var_q: [vq.re, vq.im], var_p: [vp.re, vp.im], product: [product.re, product.im], predicted })
}

/// Polar grid: radii `(j+1)/n_r · r_max` for `j < n_r`, angles `2πm/n_theta`.
pub fn polar_grid(r_max: f64, n_r: usize, n_theta: usize) -> Vec<C64> {
    let mut out = Vec::with_capacity(n_r * n_theta);
    for j in 0..n_r {
        let r = (j + 1) as f64 / n_r as f64 * r_max;
        for m in 0..n_theta {
            out.push(C64::from_polar(r, std::f64::consts::TAU * m as f64 / n_theta as f64));
        }
    }
    out
}

/// Per-point diagnostics for a z-grid.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct ZRecord {
    pub re_z: f64,
    pub im_z: f64,
    pub norm_const: f64,
    pub eigen_phi: f64,
    pub eigen_psi: f64,
    pub pairing_re: f64,
    pub pairing_im: f64,
    pub uncertainty_computed: f64,
    pub uncertainty_predicted: f64,
}

/// Evaluates every point of `zs` in parallel.
pub fn evaluate_grid(family: &BiorthogonalFamily, pair: &LadderPair, zs: &[C64]) -> Result<Vec<ZRecord>> {
    zs.par_iter()
        .map(|&z| {
            let state = bicoherent_state(family, z, None)?;
            let (eigen_phi, eigen_psi) = eigen_check(&state, pair)?;
            let unc = uncertainty_product(&state, pair)?;
            let p = state.pairing();
            Ok(ZRecord {
                re_z: z.re,
                im_z: z.im,
                norm_const: state.norm_const.value,
                eigen_phi,
                eigen_psi,
                pairing_re: p.re,
                pairing_im: p.im,
                uncertainty_computed: unc.product[0],
                uncertainty_predicted: unc.predicted,
            })
        })
        .collect()
}
