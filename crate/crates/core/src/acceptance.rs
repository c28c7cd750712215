//! End-to-end verification suite. Each criterion collects named checks and
//! passes only when all of them hold.

use std::fmt::Write as _;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::bicoherent::{
    bicoherent_state, eigen_check, family_radius_report, polar_grid, series_coefficients, split_support_closed_form,
    uncertainty_product,
};
use crate::fock::{make_quon_c, qmutator_residual, FockVector};
use crate::positionrep::{
    coefficient_recursion, coefficients_closed_form, ladder_check, norm_formula_check, position_radius_report, Grid,
    PositionParams,
};
use crate::pseudoquon::{
    build_family, build_theta, check_ladder, check_theta, check_theta_conjugate, isospectrality, make_pair,
    number_eigencheck, BiorthogonalFamily, LadderPair, SimilarityOperator, SplitSupport,
};
use crate::qcore::{beta, beta_sq, QParam};
use crate::resolution::{resolution_check, solve_moment_measure};
use crate::{Result, C64};

/// Number of criteria in the suite.
pub const CRITERIA: usize = 12;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Bound {
    /// `value <= limit`.
    AtMost(f64),
    /// A boolean property, recorded as 1 or 0.
    Holds,
}

#[derive(Debug, Clone)]
pub struct Check {
    pub label: String,
    pub value: f64,
    pub bound: Bound,
    pub pass: bool,
}

impl Check {
    pub fn at_most(label: impl Into<String>, value: f64, limit: f64) -> Self {
        Self { label: label.into(), value, bound: Bound::AtMost(limit), pass: value <= limit }
    }

    pub fn holds(label: impl Into<String>, ok: bool) -> Self {
        Self { label: label.into(), value: if ok { 1.0 } else { 0.0 }, bound: Bound::Holds, pass: ok }
    }

    /// `|value - target| <= rel·|target|`, recorded as the relative gap.
    pub fn within(label: impl Into<String>, value: f64, target: f64, rel: f64) -> Self {
        Self::at_most(label, (value - target).abs() / target.abs(), rel)
    }
}

#[derive(Debug, Clone)]
pub struct CriterionReport {
    pub id: usize,
    pub title: &'static str,
    pub checks: Vec<Check>,
    pub error: Option<String>,
}

impl CriterionReport {
    pub fn pass(&self) -> bool {
        self.error.is_none() && !self.checks.is_empty() && self.checks.iter().all(|c| c.pass)
    }

    pub fn failed_checks(&self) -> impl Iterator<Item = &Check> {
        self.checks.iter().filter(|c| !c.pass)
    }

    pub fn render(&self) -> String {
        let mut s = String::new();
        let status = if self.pass() { "pass" } else { "FAIL" };
        let _ = writeln!(s, "[{status}] criterion {:>2}: {}", self.id, self.title);
        for c in &self.checks {
            let mark = if c.pass { "ok  " } else { "FAIL" };
            match c.bound {
                Bound::AtMost(limit) => {
                    let _ = writeln!(s, "    {mark} {:<48} {:.3e} <= {:.1e}", c.label, c.value, limit);
                }
                Bound::Holds => {
                    let _ = writeln!(s, "    {mark} {}", c.label);
                }
            }
        }
        if let Some(e) = &self.error {
            let _ = writeln!(s, "    error: {e}");
        }
        s
    }
}

const TITLES: [&str; CRITERIA] = [
    "q-mutator identity on the safe block",
    "biorthogonality of the split-support family",
    "ladder relations in Fock space and on the line",
    "number-operator eigenvalues and isospectrality",
    "metric operator",
    "bi-coherent eigenvalue property and pairing",
    "radii of convergence, analytic and empirical",
    "resolution of the identity",
    "uncertainty product",
    "position-space coefficients and norms",
    "closed-form split-support bi-coherent states",
    "bosonic and fermionic limits",
];

/// Runs criterion `id` (1-based).
pub fn run_criterion(id: usize) -> CriterionReport {
    let title = TITLES.get(id.wrapping_sub(1)).copied().unwrap_or("unknown criterion");
    let outcome = match id {
        1 => qmutator_identity(),
        2 => biorthogonality(),
        3 => ladder_relations(),
        4 => number_spectrum(),
        5 => metric_operator(),
        6 => bicoherent_eigen(),
        7 => radii(),
        8 => resolution_of_identity(),
        9 => uncertainty(),
        10 => position_example(),
        11 => closed_form_states(),
        12 => limits(),
        _ => Err(crate::Error::InvalidArgument(format!("no criterion {id}"))),
    };
    match outcome {
        Ok(checks) => CriterionReport { id, title, checks, error: None },
        Err(e) => CriterionReport { id, title, checks: Vec::new(), error: Some(e.to_string()) },
    }
}

pub fn all() -> Vec<CriterionReport> {
    (1..=CRITERIA).into_par_iter().map(run_criterion).collect()
}

/// The standard split-support deformation with strength `α = i`.
fn split_operator() -> Result<SimilarityOperator> {
    Ok(SimilarityOperator::RankOne(SplitSupport::standard().deformation(C64::new(0.0, 1.0))?))
}

/// Identity and split-support operators, labelled.
fn both_kinds() -> Result<Vec<(&'static str, SimilarityOperator)>> {
    Ok(vec![("identity", SimilarityOperator::Identity), ("rank-one", split_operator()?)])
}

fn setup(s: &SimilarityOperator, q: f64, dim: usize) -> Result<(BiorthogonalFamily, LadderPair)> {
    let q = QParam::new(q)?;
    Ok((build_family(s, q, dim)?, make_pair(s, q, dim)?))
}

fn qmutator_identity() -> Result<Vec<Check>> {
    let mut checks = Vec::new();
    for (name, s) in both_kinds()? {
        for q in [0.1, 0.3, 0.5, 0.7, 0.9] {
            let (family, pair) = setup(&s, q, 64)?;
            let r = qmutator_residual(&pair.a, &pair.b, pair.q, family.k_safe())?;
            checks.push(Check::at_most(format!("{name} q={q} residual"), r, 1e-12));
        }
    }
    Ok(checks)
}

fn biorthogonality() -> Result<Vec<Check>> {
    let s = split_operator()?;
    let mut checks = Vec::new();
    if let SimilarityOperator::RankOne(def) = &s {
        let expected = C64::new(-0.5, -0.5);
        checks.push(Check::at_most("beta = -(1+i)/2", (def.beta() - expected).norm(), 1e-15));
    }
    for q in [0.3, 0.5, 0.9] {
        let family = build_family(&s, QParam::new(q)?, 64)?;
        checks.push(Check::at_most(format!("q={q} |Gram - I|_max"), family.biorthogonality_defect(), 1e-11));
    }
    Ok(checks)
}

fn ladder_relations() -> Result<Vec<Check>> {
    let mut checks = Vec::new();
    for (name, s) in both_kinds()? {
        for q in [0.3, 0.5, 0.9] {
            let (family, pair) = setup(&s, q, 64)?;
            checks.push(Check::at_most(format!("{name} q={q} ladder"), check_ladder(&family, &pair)?.max(), 1e-11));
        }
    }
    for q in [0.3, 0.6] {
        for gamma in [0.0, 0.5, 1.0] {
            let p = PositionParams::new(QParam::new(q)?, gamma)?;
            let r = ladder_check(&p, 6, &Grid::default_for(gamma))?;
            checks.push(Check::at_most(format!("position q={q} gamma={gamma} ladder"), r.max(), 1e-10));
        }
    }
    Ok(checks)
}

fn number_spectrum() -> Result<Vec<Check>> {
    let mut checks = Vec::new();
    for (name, s) in both_kinds()? {
        for q in [0.3, 0.5, 0.9] {
            let (family, pair) = setup(&s, q, 64)?;
            let n = number_eigencheck(&family, &pair)?;
            checks.push(Check::at_most(format!("{name} q={q} N phi_n"), n.phi_residual, 1e-11));
            checks.push(Check::at_most(format!("{name} q={q} N† Psi_n"), n.psi_residual, 1e-11));
            let spec = isospectrality(&pair, family.k_safe())?;
            checks.push(Check::at_most(format!("{name} q={q} spectra of N and N†"), spec.max_gap, 1e-9));
        }
    }
    Ok(checks)
}

fn metric_operator() -> Result<Vec<Check>> {
    let s = split_operator()?;
    let mut checks = Vec::new();
    for q in [0.3, 0.5, 0.9] {
        let (family, pair) = setup(&s, q, 64)?;
        let theta = build_theta(&family);
        let r = check_theta(&family, &pair, &theta)?;
        let c = check_theta_conjugate(&family, &pair, &theta, family.k_safe())?;
        checks.push(Check::at_most(format!("q={q} Theta vs (SS†)^-1"), r.closed_form_gap, 1e-11));
        checks.push(Check::at_most(format!("q={q} conjugacy a = Theta^-1 b† Theta"), c.conjugacy_residual, 1e-10));
        checks.push(Check::at_most(format!("q={q} Theta Theta^-1 = I"), r.inverse_defect, 1e-11));
        checks.push(Check::holds(format!("q={q} Theta positive definite (min eig {:.3e})", r.min_eigenvalue), r.min_eigenvalue > 0.0));
    }
    Ok(checks)
}

fn bicoherent_eigen() -> Result<Vec<Check>> {
    let q = 0.5;
    let rho = QParam::new(q)?.coherent_radius();
    let zs = polar_grid(0.9 * rho, 5, 8);
    let mut checks = Vec::new();
    for (name, s) in both_kinds()? {
        let (family, pair) = setup(&s, q, 384)?;
        let (mut e_phi, mut e_psi, mut pairing) = (0.0f64, 0.0f64, 0.0f64);
        for &z in &zs {
            let state = bicoherent_state(&family, z, None)?;
            let (a, b) = eigen_check(&state, &pair)?;
            e_phi = e_phi.max(a);
            e_psi = e_psi.max(b);
            pairing = pairing.max((state.pairing() - 1.0).norm());
        }
        checks.push(Check::at_most(format!("{name} |a phi(z) - z phi(z)|"), e_phi, 1e-9));
        checks.push(Check::at_most(format!("{name} |b† Psi(z) - z Psi(z)|"), e_psi, 1e-9));
        checks.push(Check::at_most(format!("{name} |<phi(z), Psi(z)> - 1|"), pairing, 1e-9));
    }
    Ok(checks)
}

fn radii() -> Result<Vec<Check>> {
    let s = split_operator()?;
    let mut checks = Vec::new();
    for q in [0.3, 0.5, 0.8] {
        let qp = QParam::new(q)?;
        let family = build_family(&s, qp, 64)?;
        let r = family_radius_report(&family)?;
        let target = 1.0 / (1.0 - q).sqrt();
        checks.push(Check::within(format!("rank-one q={q} analytic rho"), r.rho, target, 1e-12));
        checks.push(Check::within(format!("rank-one q={q} empirical rho"), r.empirical, target, 0.05));

        let gamma = 0.5;
        let p = PositionParams::new(qp, gamma)?;
        let r = position_radius_report(&p, 16, &Grid::default_for(gamma))?;
        let target = (1.0 - q).sqrt();
        checks.push(Check::within(format!("position q={q} analytic rho"), r.rho, target, 1e-12));
        checks.push(Check::within(format!("position q={q} empirical rho"), r.empirical, target, 0.05));
    }
    Ok(checks)
}

/// Seed of the random test vectors.
pub const RESOLUTION_SEED: u64 = 20_240_917;

fn resolution_of_identity() -> Result<Vec<Check>> {
    let q = QParam::new(0.5)?;
    let quad = solve_moment_measure(q, q.coherent_radius(), 12)?;
    let mut checks = vec![
        Check::holds("quadrature feasible", quad.feasible),
        Check::at_most("moment residual", quad.max_residual(), 1e-10),
    ];
    for (name, s) in both_kinds()? {
        let family = build_family(&s, q, 64)?;
        let mut rng = ChaCha8Rng::seed_from_u64(RESOLUTION_SEED);
        let mut worst: f64 = 0.0;
        for _ in 0..20 {
            let f = FockVector::random(&mut rng, 6);
            let g = FockVector::random(&mut rng, 6);
            let value = resolution_check(&family, &quad, 64, &f, &g)?;
            worst = worst.max((value - f.inner(&g)).norm());
        }
        checks.push(Check::at_most(format!("{name} max |resolution - <f,g>|"), worst, 1e-8));
    }
    Ok(checks)
}

fn uncertainty() -> Result<Vec<Check>> {
    let s = split_operator()?;
    let mut checks = Vec::new();
    let angle = C64::from_polar(1.0, 0.7);
    for q in [0.5, 0.9] {
        let (family, pair) = setup(&s, q, 128)?;
        let rho = family.q().coherent_radius();
        for frac in [0.0, 0.3, 0.6] {
            let z = angle * (frac * rho);
            let u = uncertainty_product(&bicoherent_state(&family, z, None)?, &pair)?;
            checks.push(Check::at_most(format!("q={q} |z|={frac}rho product error"), u.error(), 1e-7));
        }
    }
    let q = 1.0 - 1e-6;
    let (family, pair) = setup(&s, q, 128)?;
    for r in [0.0, 0.3, 0.6] {
        let u = uncertainty_product(&bicoherent_state(&family, angle * r, None)?, &pair)?;
        let gap = C64::new(u.product[0] - 0.5, u.product[1]).norm();
        checks.push(Check::at_most(format!("q=1-1e-6 |z|={r} product vs 1/2"), gap, 1e-4));
    }
    Ok(checks)
}

fn position_example() -> Result<Vec<Check>> {
    let mut checks = Vec::new();
    for q in [0.3, 0.6] {
        let p = PositionParams::new(QParam::new(q)?, 0.5)?;
        let e = |k: f64| (-p.alpha() * p.alpha() * k).exp();
        let expected: [&[f64]; 3] = [&[1.0], &[-e(1.0), 1.0], &[e(2.0), -e(1.0) - e(3.0), 1.0]];
        let symbolic = coefficient_recursion(&p, 2)?;
        let closed = coefficients_closed_form(&p, 2);
        let mut gap: f64 = 0.0;
        for (n, row) in expected.iter().enumerate() {
            for (k, &c) in row.iter().enumerate() {
                gap = gap.max((symbolic.get(n, k) - c).norm()).max((closed[n][k] - c).abs());
            }
        }
        checks.push(Check::at_most(format!("q={q} coefficient table n<=2"), gap, 1e-15));
        for gamma in [0.0, 0.5, 1.0] {
            let p = PositionParams::new(QParam::new(q)?, gamma)?;
            let grid = Grid::default_for(gamma);
            let r5 = norm_formula_check(&p, 5, &grid)?;
            checks.push(Check::at_most(format!("q={q} gamma={gamma} norm formula n<=5"), r5.max_relative_error(), 1e-6));
            let r8 = norm_formula_check(&p, 8, &grid)?;
            checks.push(Check::holds(format!("q={q} gamma={gamma} L_n <= (n+1)^2, n<=8"), r8.bound_holds()));
        }
    }
    Ok(checks)
}

fn closed_form_states() -> Result<Vec<Check>> {
    let q = QParam::new(0.5)?;
    let alpha = C64::new(0.0, 1.0);
    let split = SplitSupport::standard();
    let s = SimilarityOperator::RankOne(split.deformation(alpha)?);
    let family = build_family(&s, q, 384)?;
    let rho = q.coherent_radius();
    let mut checks = Vec::new();
    for j in 0..10 {
        let z = C64::from_polar(rho * (0.05 + 0.09 * j as f64), 0.6 * j as f64 + 0.3);
        let state = bicoherent_state(&family, z, None)?;
        let (phi, psi) = split_support_closed_form(&split, alpha, q, z, family.dim())?;
        let gap = (&state.phi_z.0 - &phi.0).norm().max((&state.psi_z.0 - &psi.0).norm());
        checks.push(Check::at_most(format!("z = {:.3}{:+.3}i", z.re, z.im), gap, 1e-10));
    }
    Ok(checks)
}

fn limits() -> Result<Vec<Check>> {
    let q = QParam::new(1.0 - 1e-6)?;
    let z = C64::new(1.0, 0.0);
    let coeffs = series_coefficients(q, z, 21);
    let mut fact = 1.0f64;
    let mut gap: f64 = 0.0;
    for (k, c) in coeffs.iter().enumerate() {
        if k > 0 {
            fact *= k as f64;
        }
        gap = gap.max((c.re - 1.0 / fact.sqrt()).abs());
    }
    let boson = QParam::new(1.0)?;
    let exact = (0..64).all(|n| beta_sq(boson, n) == (n + 1) as f64);
    let fermion = QParam::new(-1.0)?;
    let c = make_quon_c(fermion, 4)?;
    Ok(vec![
        Check::at_most("q=1-1e-6 coefficients vs 1/sqrt(k!), k<=20", gap, 1e-4),
        Check::holds("q=1 gives beta_n^2 = n+1 exactly", exact),
        Check::holds("q=-1 gives beta_1 = 0 exactly", beta(fermion, 1) == 0.0),
        Check::holds("q=-1 truncated c has (c)_{1,2} = 0", c.matrix()[(1, 2)] == C64::new(0.0, 0.0)),
        Check::holds("q=-1 truncated c has (c)_{0,1} = 1", c.matrix()[(0, 1)] == C64::new(1.0, 0.0)),
    ])
}
