//! The deformed quon pair on `L²(ℝ)`:
//!
//! `a = (e^{-2iαx} - e^{iα d/dx} e^{-iα(x+γ)}) / (-i√(1-q))`,
//! `b = (e^{2iαx} - e^{iα(x-γ)} e^{iα d/dx}) / (i√(1-q))`, `q = e^{-2α²}`.
//!
//! `e^{iα d/dx}` is the complex translation `f(x) → f(x + iα)`. It is applied
//! exactly to functions of the form
//! `exp(-x²/2 + σx) Σ c_{j,m} x^j e^{iαmx}`, which is closed under every
//! operator here; the grid is only used to sample and integrate.

use std::collections::BTreeMap;
use std::io::Write;

use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::Serialize;

use crate::bicoherent::{radius_report, FitPolicy, MSequence, NormBound, RadiusReport};
use crate::qcore::{q_number_factorial, BetaSequence, QParam};
use crate::{CVector, Error, Result, C64};

/// `q`, `α = √(-ln q / 2)` and the shift `γ`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PositionParams {
    q: QParam,
    alpha: f64,
    gamma: f64,
}

impl PositionParams {
    pub fn new(q: QParam, gamma: f64) -> Result<Self> {
        let q = QParam::in_unit_interval(q.value())?;
        if !gamma.is_finite() {
            return Err(Error::InvalidArgument(format!("gamma = {gamma} is not finite")));
        }
        Ok(Self { q, alpha: (-q.value().ln() / 2.0).sqrt(), gamma })
    }

    pub fn q(&self) -> QParam {
        self.q
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn gamma(&self) -> f64 {
        self.gamma
    }

    /// Same `q`, shift `-γ`.
    pub fn mirrored(&self) -> Self {
        Self { gamma: -self.gamma, ..*self }
    }

    fn denom(&self) -> f64 {
        (1.0 - self.q.value()).sqrt()
    }
}

/// `exp(-x²/2 + σx) Σ c_{j,m} x^j e^{iαmx}` for a fixed `α`.
#[derive(Debug, Clone, PartialEq)]
pub struct AnalyticFunction {
    alpha: f64,
    sigma: C64,
    terms: BTreeMap<(u32, i64), C64>,
}

impl AnalyticFunction {
    pub fn zero(alpha: f64, sigma: C64) -> Self {
        Self { alpha, sigma, terms: BTreeMap::new() }
    }

    /// `c · exp(-x²/2 + σx) x^j e^{iαmx}`.
    pub fn monomial(alpha: f64, sigma: C64, j: u32, m: i64, c: C64) -> Self {
        let mut f = Self::zero(alpha, sigma);
        f.push(j, m, c);
        f
    }

    pub fn sigma(&self) -> C64 {
        self.sigma
    }

    pub fn coefficient(&self, j: u32, m: i64) -> C64 {
        self.terms.get(&(j, m)).copied().unwrap_or_default()
    }

    pub fn terms(&self) -> impl Iterator<Item = ((u32, i64), C64)> + '_ {
        self.terms.iter().map(|(k, v)| (*k, *v))
    }

    fn push(&mut self, j: u32, m: i64, c: C64) {
        *self.terms.entry((j, m)).or_default() += c;
    }

    fn compatible(&self, other: &Self) -> Result<()> {
        if self.alpha != other.alpha || self.sigma != other.sigma {
            return Err(Error::InvalidArgument("functions with different envelopes cannot be added".into()));
        }
        Ok(())
    }

    pub fn add(&self, other: &Self) -> Result<Self> {
        self.compatible(other)?;
        let mut out = self.clone();
        for ((j, m), c) in other.terms() {
            out.push(j, m, c);
        }
        Ok(out)
    }

    pub fn sub(&self, other: &Self) -> Result<Self> {
        self.add(&other.scale(C64::new(-1.0, 0.0)))
    }

    pub fn scale(&self, s: C64) -> Self {
        let mut out = self.clone();
        out.terms.values_mut().for_each(|c| *c *= s);
        out
    }

    /// Multiplication by `e^{ikαx}`.
    pub fn mul_phase(&self, k: i64) -> Self {
        let terms = self.terms.iter().map(|(&(j, m), &c)| ((j, m + k), c)).collect();
        Self { terms, ..*self }
    }

    /// Multiplication by `e^{gx}`.
    pub fn mul_exp(&self, g: f64) -> Self {
        Self { sigma: self.sigma + g, ..self.clone() }
    }

    /// `f(x) → f(x + iα)`.
    pub fn shift(&self) -> Self {
        let a = self.alpha;
        let ia = C64::new(0.0, a);
        let envelope = (C64::new(a * a / 2.0, 0.0) + ia * self.sigma).exp();
        let mut out = Self::zero(a, self.sigma);
        for (&(j, m), &c) in &self.terms {
            let base = c * envelope * (-a * a * m as f64).exp();
            // (x + iα)^j = Σ_i C(j,i) x^i (iα)^{j-i}
            let mut binom = 1.0;
            for i in 0..=j {
                out.push(i, m - 1, base * binom * ia.powu(j - i));
                binom = binom * (j - i) as f64 / (i + 1) as f64;
            }
        }
        out
    }

    pub fn eval(&self, x: f64) -> C64 {
        let env = (C64::new(-x * x / 2.0, 0.0) + self.sigma * x).exp();
        let sum: C64 = self
            .terms
            .iter()
            .map(|(&(j, m), &c)| c * x.powi(j as i32) * C64::from_polar(1.0, self.alpha * m as f64 * x))
            .sum();
        env * sum
    }

    /// Samples on `grid`, rejecting functions that have not decayed at the
    /// boundary.
    pub fn sample(&self, grid: &Grid) -> Result<GridFunction> {
        let values: Vec<C64> = grid.points().par_iter().map(|&x| self.eval(x)).collect();
        let peak = values.iter().map(|v| v.norm()).fold(0.0, f64::max);
        let edge = values[0].norm().max(values[values.len() - 1].norm());
        if edge > BOUNDARY_TOL * peak.max(1.0) {
            return Err(Error::SupportEscape { value: edge });
        }
        Ok(GridFunction { grid: *grid, values: CVector::from_vec(values) })
    }
}

const BOUNDARY_TOL: f64 = 1e-14;

/// Uniform grid on `[x_min, x_max]` with trapezoid integration.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Grid {
    pub x_min: f64,
    pub x_max: f64,
    pub n_pts: usize,
}

impl Grid {
    pub fn new(x_min: f64, x_max: f64, n_pts: usize) -> Result<Self> {
        if !(x_min < x_max) || n_pts < 3 {
            return Err(Error::InvalidArgument(format!("bad grid [{x_min}, {x_max}] with {n_pts} points")));
        }
        Ok(Self { x_min, x_max, n_pts })
    }

    /// `[-12-|γ|, 12+|γ|]` with 4096 points.
    pub fn default_for(gamma: f64) -> Self {
        let half = 12.0 + gamma.abs();
        Self { x_min: -half, x_max: half, n_pts: 4096 }
    }

    pub fn dx(&self) -> f64 {
        (self.x_max - self.x_min) / (self.n_pts - 1) as f64
    }

    pub fn points(&self) -> Vec<f64> {
        (0..self.n_pts).map(|i| self.x_min + i as f64 * self.dx()).collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GridFunction {
    pub grid: Grid,
    pub values: CVector,
}

impl GridFunction {
    /// Trapezoid rule for `∫ conj(f) g`.
    pub fn inner(&self, other: &GridFunction) -> Result<C64> {
        if self.grid != other.grid {
            return Err(Error::InvalidArgument("grid functions live on different grids".into()));
        }
        let n = self.values.len();
        let mut s = self.values.dotc(&other.values);
        s -= (self.values[0].conj() * other.values[0] + self.values[n - 1].conj() * other.values[n - 1]) * 0.5;
        Ok(s * self.grid.dx())
    }

    pub fn norm(&self) -> f64 {
        self.inner(self).map(|v| v.re.max(0.0).sqrt()).unwrap_or(0.0)
    }

    pub fn max_abs_diff(&self, other: &GridFunction) -> f64 {
        self.values.iter().zip(other.values.iter()).map(|(a, b)| (a - b).norm()).fold(0.0, f64::max)
    }

    pub fn sub(&self, other: &GridFunction) -> GridFunction {
        GridFunction { grid: self.grid, values: &self.values - &other.values }
    }
}

fn phase(t: f64) -> C64 {
    C64::from_polar(1.0, t)
}

pub fn apply_a(p: &PositionParams, f: &AnalyticFunction) -> AnalyticFunction {
    let inner = f.mul_phase(-1).shift().scale(phase(-p.alpha * p.gamma));
    let num = f.mul_phase(-2).sub(&inner).expect("same envelope");
    num.scale(C64::new(0.0, 1.0 / p.denom()))
}

pub fn apply_b(p: &PositionParams, f: &AnalyticFunction) -> AnalyticFunction {
    let inner = f.shift().mul_phase(1).scale(phase(-p.alpha * p.gamma));
    let num = f.mul_phase(2).sub(&inner).expect("same envelope");
    num.scale(C64::new(0.0, -1.0 / p.denom()))
}

pub fn apply_a_dagger(p: &PositionParams, f: &AnalyticFunction) -> AnalyticFunction {
    let inner = f.shift().mul_phase(1).scale(phase(p.alpha * p.gamma));
    let num = f.mul_phase(2).sub(&inner).expect("same envelope");
    num.scale(C64::new(0.0, -1.0 / p.denom()))
}

pub fn apply_b_dagger(p: &PositionParams, f: &AnalyticFunction) -> AnalyticFunction {
    let inner = f.mul_phase(-1).shift().scale(phase(p.alpha * p.gamma));
    let num = f.mul_phase(-2).sub(&inner).expect("same envelope");
    num.scale(C64::new(0.0, 1.0 / p.denom()))
}

fn vacuum(p: &PositionParams, gamma: f64) -> AnalyticFunction {
    let sigma = C64::new(gamma, 1.5 * p.alpha);
    AnalyticFunction::monomial(p.alpha, sigma, 0, 0, C64::new(std::f64::consts::PI.powf(-0.25), 0.0))
}

/// `φ_0 = π^{-1/4} exp(-x²/2 + x(γ + 3iα/2))`.
pub fn phi_vacuum(p: &PositionParams) -> AnalyticFunction {
    vacuum(p, p.gamma)
}

/// `Ψ_0 = π^{-1/4} exp(-x²/2 + x(-γ + 3iα/2))`.
pub fn psi_vacuum(p: &PositionParams) -> AnalyticFunction {
    vacuum(p, -p.gamma)
}

/// Rows `c^{(n)} = (c_0^{(n)}, …, c_n^{(n)})` of
/// `φ_n = (1/β_{n-1}!) (-i/√(1-q))^n φ_0 Σ_k c_k^{(n)} e^{2iαkx}`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CoefficientTable {
    pub rows: Vec<Vec<[f64; 2]>>,
}

impl CoefficientTable {
    pub fn get(&self, n: usize, k: usize) -> C64 {
        let [re, im] = self.rows[n][k];
        C64::new(re, im)
    }
}

fn prefactor(p: &PositionParams, betas: &BetaSequence, n: usize) -> C64 {
    C64::new(0.0, -1.0 / p.denom()).powu(n as u32) / betas.factorial(n as i64 - 1)
}

/// Builds `φ_n = b φ_{n-1}/β_{n-1}` symbolically and reads the coefficients
/// off the result.
pub fn coefficient_recursion(p: &PositionParams, n_max: usize) -> Result<CoefficientTable> {
    let betas = BetaSequence::new(p.q, n_max + 1);
    let phi0 = phi_vacuum(p);
    let norm0 = phi0.coefficient(0, 0);
    let mut phi = phi0;
    let mut rows = Vec::with_capacity(n_max + 1);
    for n in 0..=n_max {
        if n > 0 {
            phi = apply_b(p, &phi).scale(C64::new(1.0 / betas.beta(n as i64 - 1), 0.0));
        }
        let scale = norm0 * prefactor(p, &betas, n);
        for ((j, m), c) in phi.terms() {
            let stray = j != 0 || m < 0 || m % 2 != 0 || m > 2 * n as i64;
            if stray && c.norm() > 1e-12 * scale.norm() {
                return Err(Error::InvalidArgument(format!("unexpected term x^{j} e^{{i{m}αx}} in φ_{n}")));
            }
        }
        rows.push((0..=n).map(|k| crate::pseudoquon::pair(phi.coefficient(0, 2 * k as i64) / scale)).collect());
    }
    Ok(CoefficientTable { rows })
}

/// The same table from `c_k^{(n)} = c_{k-1}^{(n-1)} - e^{-α²(2k+1)} c_k^{(n-1)}`.
pub fn coefficients_closed_form(p: &PositionParams, n_max: usize) -> Vec<Vec<f64>> {
    let a2 = p.alpha * p.alpha;
    let mut rows = vec![vec![1.0]];
    for n in 1..=n_max {
        let prev = &rows[n - 1];
        let row: Vec<f64> = (0..=n)
            .map(|k| {
                let up = if k > 0 { prev[k - 1] } else { 0.0 };
                let stay = if k < n { prev[k] } else { 0.0 };
                up - (-a2 * (2 * k + 1) as f64).exp() * stay
            })
            .collect();
        rows.push(row);
    }
    rows
}

/// `φ_n` (or `Ψ_n` with the mirrored parameters) from the closed form.
pub fn eigenfunction(p: &PositionParams, n: usize) -> AnalyticFunction {
    let betas = BetaSequence::new(p.q, n + 1);
    let coeffs = &coefficients_closed_form(p, n)[n];
    let v = vacuum(p, p.gamma);
    let base = v.coefficient(0, 0) * prefactor(p, &betas, n);
    let mut f = AnalyticFunction::zero(p.alpha, v.sigma());
    for (k, c) in coeffs.iter().enumerate() {
        f.push(0, 2 * k as i64, base * *c);
    }
    f
}

/// `φ_n` and `Ψ_n` for `n ≤ n_max`.
#[derive(Debug, Clone)]
pub struct PositionFamily {
    pub params: PositionParams,
    pub phi: Vec<AnalyticFunction>,
    pub psi: Vec<AnalyticFunction>,
}

pub fn position_family(p: &PositionParams, n_max: usize) -> PositionFamily {
    let m = p.mirrored();
    PositionFamily {
        params: *p,
        phi: (0..=n_max).map(|n| eigenfunction(p, n)).collect(),
        psi: (0..=n_max).map(|n| eigenfunction(&m, n)).collect(),
    }
}

impl PositionFamily {
    /// Rows `n, x, re, im` for every `φ_n` (or `Ψ_n`) sample.
    pub fn write_csv<W: Write>(&self, grid: &Grid, psi: bool, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        let err = |e: csv::Error| Error::InvalidArgument(format!("csv: {e}"));
        w.write_record(["n", "x", "re", "im"]).map_err(err)?;
        let set = if psi { &self.psi } else { &self.phi };
        let xs = grid.points();
        for (n, f) in set.iter().enumerate() {
            let g = f.sample(grid)?;
            for (x, v) in xs.iter().zip(g.values.iter()) {
                w.write_record([n.to_string(), format!("{x:e}"), format!("{:e}", v.re), format!("{:e}", v.im)])
                    .map_err(err)?;
            }
        }
        w.flush().map_err(|e| Error::InvalidArgument(e.to_string()))?;
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, Serialize)]
pub struct PositionLadderReport {
    pub b_raises_phi: f64,
    pub a_lowers_phi: f64,
    pub a_dagger_raises_psi: f64,
    pub b_dagger_lowers_psi: f64,
    pub vacuum_a: f64,
    pub vacuum_b_dagger: f64,
}

impl PositionLadderReport {
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

fn grid_gap(lhs: &AnalyticFunction, rhs: &AnalyticFunction, grid: &Grid) -> Result<f64> {
    Ok(lhs.sample(grid)?.sub(&rhs.sample(grid)?).norm())
}

/// Grid-norm residuals of the four ladder relations for `n ≤ n_max`, with the
/// closed-form eigenfunctions on both sides.
pub fn ladder_check(p: &PositionParams, n_max: usize, grid: &Grid) -> Result<PositionLadderReport> {
    let fam = position_family(p, n_max + 1);
    let betas = BetaSequence::new(p.q, n_max + 1);
    let mut r = PositionLadderReport {
        b_raises_phi: 0.0,
        a_lowers_phi: 0.0,
        a_dagger_raises_psi: 0.0,
        b_dagger_lowers_psi: 0.0,
        vacuum_a: apply_a(p, &fam.phi[0]).sample(grid)?.norm(),
        vacuum_b_dagger: apply_b_dagger(p, &fam.psi[0]).sample(grid)?.norm(),
    };
    for n in 0..=n_max {
        let up = C64::new(betas.beta(n as i64), 0.0);
        r.b_raises_phi = r.b_raises_phi.max(grid_gap(&apply_b(p, &fam.phi[n]), &fam.phi[n + 1].scale(up), grid)?);
        r.a_dagger_raises_psi =
            r.a_dagger_raises_psi.max(grid_gap(&apply_a_dagger(p, &fam.psi[n]), &fam.psi[n + 1].scale(up), grid)?);
        if n > 0 {
            let down = C64::new(betas.beta(n as i64 - 1), 0.0);
            r.a_lowers_phi = r.a_lowers_phi.max(grid_gap(&apply_a(p, &fam.phi[n]), &fam.phi[n - 1].scale(down), grid)?);
            r.b_dagger_lowers_psi =
                r.b_dagger_lowers_psi.max(grid_gap(&apply_b_dagger(p, &fam.psi[n]), &fam.psi[n - 1].scale(down), grid)?);
        }
    }
    Ok(r)
}

/// Largest grid norm of `[a,b]_q f - f` over the test functions.
pub fn qmutation_grid_check(p: &PositionParams, tests: &[AnalyticFunction], grid: &Grid) -> Result<f64> {
    let q = C64::new(p.q.value(), 0.0);
    let mut worst: f64 = 0.0;
    for f in tests {
        let ab = apply_a(p, &apply_b(p, f));
        let ba = apply_b(p, &apply_a(p, f));
        let res = ab.sub(&ba.scale(q))?.sub(f)?;
        worst = worst.max(res.sample(grid)?.norm());
    }
    Ok(worst)
}

/// `x² e^{-x²/2}`, a test function outside the eigenfamily.
pub fn hermite_test_function(p: &PositionParams) -> AnalyticFunction {
    AnalyticFunction::monomial(p.alpha, C64::new(0.0, 0.0), 2, 0, C64::new(1.0, 0.0))
}

#[derive(Debug, Clone, Copy, Serialize)]
pub struct SimilarityReport {
    /// `max_n max_x |φ_n^{(γ)} - e^{γx} φ_n^{(0)}|`.
    pub phi_vs_s: f64,
    /// `max_n max_x |Ψ_n^{(γ)} - e^{-γx} φ_n^{(0)}|`.
    pub psi_vs_s_inverse: f64,
    /// `max_n max_x |Ψ_n^{(γ)} - φ_n^{(-γ)}|` with `φ` built by `b`.
    pub gamma_mirror: f64,
    /// `max |⟨φ_n, Ψ_m⟩ - δ_{nm}|`.
    pub biorthogonality: f64,
    /// Largest grid norm of `a f - Θ⁻¹ b† Θ f`, `Θ = e^{-2γx}`, on the family.
    pub theta_conjugacy: f64,
    /// Condition number of the Gram matrix `⟨φ_n, φ_m⟩`.
    pub phi_gram_condition: f64,
}

pub fn similarity_check(p: &PositionParams, n_max: usize, grid: &Grid) -> Result<SimilarityReport> {
    let fam = position_family(p, n_max);
    let bare = position_family(&PositionParams::new(p.q, 0.0)?, n_max);
    let mirror = p.mirrored();
    let betas = BetaSequence::new(p.q, n_max + 1);

    // φ_n^{(-γ)} through the ladder, independent of the closed form.
    let mut ladder_mirror = Vec::with_capacity(n_max + 1);
    let mut f = phi_vacuum(&mirror);
    for n in 0..=n_max {
        if n > 0 {
            f = apply_b(&mirror, &f).scale(C64::new(1.0 / betas.beta(n as i64 - 1), 0.0));
        }
        ladder_mirror.push(f.clone());
    }

    let mut r = SimilarityReport {
        phi_vs_s: 0.0,
        psi_vs_s_inverse: 0.0,
        gamma_mirror: 0.0,
        biorthogonality: 0.0,
        theta_conjugacy: 0.0,
        phi_gram_condition: 0.0,
    };
    let phi_s: Vec<GridFunction> = fam.phi.iter().map(|f| f.sample(grid)).collect::<Result<_>>()?;
    let psi_s: Vec<GridFunction> = fam.psi.iter().map(|f| f.sample(grid)).collect::<Result<_>>()?;
    for n in 0..=n_max {
        let s_phi = bare.phi[n].mul_exp(p.gamma).sample(grid)?;
        let s_inv_phi = bare.phi[n].mul_exp(-p.gamma).sample(grid)?;
        r.phi_vs_s = r.phi_vs_s.max(phi_s[n].max_abs_diff(&s_phi));
        r.psi_vs_s_inverse = r.psi_vs_s_inverse.max(psi_s[n].max_abs_diff(&s_inv_phi));
        r.gamma_mirror = r.gamma_mirror.max(psi_s[n].max_abs_diff(&ladder_mirror[n].sample(grid)?));

        let f = &fam.phi[n];
        let direct = apply_a(p, f);
        let theta_f = f.mul_exp(-2.0 * p.gamma);
        let conj = apply_b_dagger(p, &theta_f).mul_exp(2.0 * p.gamma);
        r.theta_conjugacy = r.theta_conjugacy.max(grid_gap(&direct, &conj, grid)?);
    }
    let dim = n_max + 1;
    let mut gram = DMatrix::<C64>::zeros(dim, dim);
    for n in 0..dim {
        for m in 0..dim {
            let g = phi_s[n].inner(&psi_s[m])?;
            let target = if n == m { 1.0 } else { 0.0 };
            r.biorthogonality = r.biorthogonality.max((g - target).norm());
            gram[(n, m)] = phi_s[n].inner(&phi_s[m])?;
        }
    }
    let ev = gram.symmetric_eigenvalues();
    r.phi_gram_condition = ev.max() / ev.min();
    Ok(r)
}

/// `L_n = Σ_{k,l} (-1)^{k+l} e^{-α²(k+l+(l-k)²)} e^{2iαγ(l-k)} / ([k]![l]![n-k]![n-l]!)`.
pub fn l_n(p: &PositionParams, n: usize) -> C64 {
    let q = p.q;
    let a2 = p.alpha * p.alpha;
    let fact = |k: usize| q_number_factorial(q, k as i64);
    let mut sum = C64::new(0.0, 0.0);
    for k in 0..=n {
        for l in 0..=n {
            let sign = if (k + l) % 2 == 0 { 1.0 } else { -1.0 };
            let d = l as f64 - k as f64;
            let mag = sign * (-a2 * (k as f64 + l as f64 + d * d)).exp() / (fact(k) * fact(l) * fact(n - k) * fact(n - l));
            sum += phase(2.0 * p.alpha * p.gamma * d) * mag;
        }
    }
    sum
}

/// `[n]! e^{γ²} (1-q)^{-n} Re L_n`.
pub fn norm_sq_formula(p: &PositionParams, n: usize) -> f64 {
    let q = p.q.value();
    q_number_factorial(p.q, n as i64) * (p.gamma * p.gamma).exp() * (1.0 - q).powi(-(n as i32)) * l_n(p, n).re
}

#[derive(Debug, Clone, Serialize)]
pub struct NormFormulaRow {
    pub n: usize,
    pub phi_norm_sq: f64,
    pub psi_norm_sq: f64,
    pub formula: f64,
    pub relative_error: f64,
    pub l_n: [f64; 2],
    pub l_n_bound: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct NormFormulaReport {
    pub rows: Vec<NormFormulaRow>,
}

impl NormFormulaReport {
    pub fn max_relative_error(&self) -> f64 {
        self.rows.iter().map(|r| r.relative_error).fold(0.0, f64::max)
    }

    /// Every `L_n` real to `1e-12` relative and below `(n+1)²`.
    pub fn bound_holds(&self) -> bool {
        self.rows.iter().all(|r| r.l_n[0] <= r.l_n_bound && r.l_n[1].abs() <= 1e-12 * r.l_n[0].abs().max(1e-300))
    }

    /// `max_n |‖φ_n‖² - ‖Ψ_n‖²| / ‖φ_n‖²`.
    pub fn phi_psi_gap(&self) -> f64 {
        self.rows.iter().map(|r| (r.phi_norm_sq - r.psi_norm_sq).abs() / r.phi_norm_sq).fold(0.0, f64::max)
    }
}

pub fn norm_formula_check(p: &PositionParams, n_max: usize, grid: &Grid) -> Result<NormFormulaReport> {
    let fam = position_family(p, n_max);
    let mut rows = Vec::with_capacity(n_max + 1);
    for n in 0..=n_max {
        let phi = fam.phi[n].sample(grid)?.norm().powi(2);
        let psi = fam.psi[n].sample(grid)?.norm().powi(2);
        let formula = norm_sq_formula(p, n);
        let l = l_n(p, n);
        rows.push(NormFormulaRow {
            n,
            phi_norm_sq: phi,
            psi_norm_sq: psi,
            formula,
            relative_error: (phi - formula).abs() / formula.abs(),
            l_n: [l.re, l.im],
            l_n_bound: ((n + 1) * (n + 1)) as f64,
        });
    }
    Ok(NormFormulaReport { rows })
}

/// Grid norms `(‖φ_n‖, ‖Ψ_n‖)`, `n ≤ n_max`.
pub fn position_norms(p: &PositionParams, n_max: usize, grid: &Grid) -> Result<(Vec<f64>, Vec<f64>)> {
    let fam = position_family(p, n_max);
    let norms = |set: &[AnalyticFunction]| set.iter().map(|f| f.sample(grid).map(|g| g.norm())).collect::<Result<Vec<_>>>();
    Ok((norms(&fam.phi)?, norms(&fam.psi)?))
}

/// Radius report with `A = e^{γ²/2}`, `r = 1/√(1-q)`, `M_n = (n+1)√([n]!)`.
pub fn position_radius_report(p: &PositionParams, n_max: usize, grid: &Grid) -> Result<RadiusReport> {
    let (phi, psi) = position_norms(p, n_max, grid)?;
    let bound = NormBound {
        a: (p.gamma * p.gamma / 2.0).exp(),
        r: 1.0 / p.denom(),
        m: MSequence::PolyQFactorial { q: p.q.value() },
    };
    radius_report(&phi, &psi, p.q, &FitPolicy::Analytic { phi: bound, psi: bound })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn params(q: f64, gamma: f64) -> PositionParams {
        PositionParams::new(QParam::new(q).unwrap(), gamma).unwrap()
    }

    #[test]
    fn alpha_from_q() {
        for q in [0.1, 0.5, 0.9] {
            let p = params(q, 0.0);
            assert!(((-2.0 * p.alpha() * p.alpha()).exp() - q).abs() < 1e-14);
        }
        assert!(PositionParams::new(QParam::new(1.0).unwrap(), 0.0).is_err());
    }

    #[test]
    fn shift_is_translation() {
        // For an entire function, f(x + iα) can be checked against direct
        // complex evaluation of the symbolic form.
        let p = params(0.5, 0.3);
        let f = eigenfunction(&p, 2).add(&AnalyticFunction::monomial(p.alpha(), phi_vacuum(&p).sigma(), 3, 1, C64::new(0.2, -0.1))).unwrap();
        let g = f.shift();
        for x in [-1.3, 0.0, 0.7, 2.1] {
            let z = C64::new(x, p.alpha());
            let env = (-z * z / 2.0 + f.sigma() * z).exp();
            let direct: C64 = f
                .terms()
                .map(|((j, m), c)| c * z.powu(j) * (C64::new(0.0, p.alpha() * m as f64) * z).exp())
                .sum::<C64>()
                * env;
            assert!((g.eval(x) - direct).norm() < 1e-13 * direct.norm().max(1.0));
        }
    }

    #[test]
    fn vacua_annihilated() {
        let p = params(0.5, 0.7);
        let grid = Grid::default_for(0.7);
        assert!(apply_a(&p, &phi_vacuum(&p)).sample(&grid).unwrap().norm() < 1e-12);
        assert!(apply_b_dagger(&p, &psi_vacuum(&p)).sample(&grid).unwrap().norm() < 1e-12);
        let pairing = phi_vacuum(&p).sample(&grid).unwrap().inner(&psi_vacuum(&p).sample(&grid).unwrap()).unwrap();
        assert!((pairing - C64::new(1.0, 0.0)).norm() < 1e-10);
    }

    #[test]
    fn first_excited_state() {
        let p = params(0.4, 0.5);
        let grid = Grid::default_for(0.5);
        let phi1 = apply_b(&p, &phi_vacuum(&p));
        let a2 = p.alpha() * p.alpha();
        let expected = phi_vacuum(&p)
            .mul_phase(2)
            .sub(&phi_vacuum(&p).scale(C64::new((-a2).exp(), 0.0)))
            .unwrap()
            .scale(C64::new(0.0, -1.0 / (1.0 - (-2.0 * a2).exp()).sqrt()));
        assert!(grid_gap(&phi1, &expected, &grid).unwrap() < 1e-13);
    }

    #[test]
    fn undeformed_operators_are_adjoint() {
        let p = params(0.5, 0.0);
        let f = eigenfunction(&p, 3);
        assert_eq!(apply_a(&p, &f), apply_b_dagger(&p, &f));
        assert_eq!(apply_b(&p, &f), apply_a_dagger(&p, &f));
    }

    #[test]
    fn coefficient_table_small_n() {
        let p = params(0.6, 0.8);
        let t = coefficient_recursion(&p, 2).unwrap();
        let e = |s: f64| C64::new((-s * p.alpha() * p.alpha()).exp(), 0.0);
        let one = C64::new(1.0, 0.0);
        let close = |x: C64, y: C64| (x - y).norm() < 1e-15;
        assert!(close(t.get(0, 0), one));
        assert!(close(t.get(1, 0), -e(1.0)) && close(t.get(1, 1), one));
        assert!(close(t.get(2, 0), e(2.0)));
        assert!(close(t.get(2, 1), -e(1.0) - e(3.0)));
        assert!(close(t.get(2, 2), one));
    }

    #[test]
    fn coefficients_independent_of_gamma() {
        let a = coefficient_recursion(&params(0.3, 0.0), 6).unwrap();
        let b = coefficient_recursion(&params(0.3, 1.1), 6).unwrap();
        let closed = coefficients_closed_form(&params(0.3, 0.0), 6);
        for n in 0..=6 {
            for k in 0..=n {
                assert!((a.get(n, k) - b.get(n, k)).norm() < 1e-13);
                assert!((a.get(n, k) - C64::new(closed[n][k], 0.0)).norm() < 1e-13);
            }
        }
    }

    #[test]
    fn q_mutation_on_tests() {
        let p = params(0.5, 0.6);
        let grid = Grid::default_for(0.6);
        let tests = [phi_vacuum(&p), hermite_test_function(&p), eigenfunction(&p, 2)];
        assert!(qmutation_grid_check(&p, &tests, &grid).unwrap() < 1e-10);
    }

    #[test]
    fn ladder_relations_on_grid() {
        let p = params(0.5, 0.7);
        let r = ladder_check(&p, 6, &Grid::default_for(0.7)).unwrap();
        assert!(r.max() < 1e-10, "{r:?}");
    }

    #[test]
    fn similarity_and_biorthogonality() {
        let p = params(0.5, 0.7);
        let r = similarity_check(&p, 6, &Grid::default_for(0.7)).unwrap();
        assert!(r.phi_vs_s < 1e-11 && r.psi_vs_s_inverse < 1e-11, "{r:?}");
        assert!(r.gamma_mirror < 1e-11);
        assert!(r.biorthogonality < 1e-9);
        assert!(r.theta_conjugacy < 1e-10);
        assert!(r.phi_gram_condition >= 1.0);

        let r0 = similarity_check(&params(0.5, 0.0), 3, &Grid::default_for(0.0)).unwrap();
        assert_eq!(r0.phi_vs_s, 0.0);
    }

    #[test]
    fn norm_formula() {
        let p = params(0.5, 0.3);
        let r = norm_formula_check(&p, 5, &Grid::default_for(0.3)).unwrap();
        assert!(r.max_relative_error() < 1e-6, "{r:?}");
        assert!(r.bound_holds());
        assert!(r.phi_psi_gap() < 1e-10);
        assert!((l_n(&p, 0) - C64::new(1.0, 0.0)).norm() < 1e-15);
        assert!((r.rows[0].formula - (0.09f64).exp()).abs() < 1e-15);
    }

    #[test]
    fn undeformed_family_is_orthonormal() {
        let p = params(0.3, 0.0);
        for n in 0..8 {
            assert!((norm_sq_formula(&p, n) - 1.0).abs() < 1e-10, "n={n}");
        }
    }

    #[test]
    fn escape_is_detected() {
        let p = params(0.5, 0.0);
        let wide = AnalyticFunction::monomial(p.alpha(), C64::new(20.0, 0.0), 0, 0, C64::new(1.0, 0.0));
        assert!(matches!(wide.sample(&Grid::default_for(0.0)), Err(Error::SupportEscape { .. })));
    }

    #[test]
    fn analytic_radius_is_sqrt_one_minus_q() {
        for q in [0.3, 0.5, 0.8] {
            let p = params(q, 0.5);
            let r = position_radius_report(&p, 23, &Grid::default_for(0.5)).unwrap();
            assert!((r.rho - (1.0 - q).sqrt()).abs() < 1e-14);
        }
    }

    #[test]
    fn csv_dump() {
        let p = params(0.5, 0.2);
        let grid = Grid::new(-10.0, 10.0, 5).unwrap();
        let fam = position_family(&p, 1);
        let mut buf = Vec::new();
        fam.write_csv(&grid, false, &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(text.lines().count(), 1 + 2 * 5);
        assert!(text.starts_with("n,x,re,im\n0,"));
    }
}
