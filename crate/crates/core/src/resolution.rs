//! Radial measures `dλ(r)` on `[0, ρ)` with moments
//! `∫ r^{2k} dλ = [k]!/(2π)`, and the discretised resolution of the
//! identity they induce.
//!
//! Quadratures are built in the scaled variable `s = r²/ρ²`, where the target
//! moments become `(q;q)_k/(2π)` when `ρ² = 1/(1-q)`. The Gauss rule comes from
//! the Chebyshev algorithm and Golub–Welsch, followed by a Newton polish of
//! nodes and weights. When the moment sequence is not positive the solver
//! falls back to nonnegative least squares on a grid refined toward `ρ`.

use std::f64::consts::TAU;
use std::io::Write;

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rayon::prelude::*;
use serde::Serialize;

use crate::fock::FockVector;
use crate::pseudoquon::BiorthogonalFamily;
use crate::qcore::{q_number_factorial, BetaSequence, QParam};
use crate::{Error, Result, C64};

/// Default relative tolerance on each matched moment.
pub const MOMENT_TOL: f64 = 1e-10;
/// Largest moment count attempted in double precision.
pub const MAX_MOMENTS: usize = 40;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum QuadratureMethod {
    Gauss,
    Nnls,
}

#[derive(Debug, Clone, Serialize)]
pub struct RadialQuadrature {
    pub q: f64,
    pub rho: f64,
    /// Radii `r_j`.
    pub nodes: Vec<f64>,
    pub weights: Vec<f64>,
    pub k_mom: usize,
    /// Relative mismatch of moment `k`, `k < k_mom`.
    pub residuals: Vec<f64>,
    pub method: QuadratureMethod,
    /// All residuals within [`MOMENT_TOL`], weights nonnegative, nodes in `[0, ρ)`.
    pub feasible: bool,
}

impl RadialQuadrature {
    pub fn max_residual(&self) -> f64 {
        self.residuals.iter().copied().fold(0.0, f64::max)
    }

    /// `Σ_j w_j r_j^{2k}`.
    pub fn moment(&self, k: usize) -> f64 {
        self.nodes.iter().zip(&self.weights).map(|(r, w)| w * r.powi(2 * k as i32)).sum()
    }

    /// CSV with header `r,w`.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["r", "w"]).map_err(io_err)?;
        for (r, wt) in self.nodes.iter().zip(&self.weights) {
            w.write_record([format!("{r:e}"), format!("{wt:e}")]).map_err(io_err)?;
        }
        w.flush().map_err(|e| Error::InvalidArgument(e.to_string()))?;
        Ok(())
    }
}

fn io_err(e: csv::Error) -> Error {
    Error::InvalidArgument(format!("csv: {e}"))
}

/// `μ_k = [k]!/(2π)`.
pub fn target_moment(q: QParam, k: usize) -> f64 {
    q_number_factorial(q, k as i64) / TAU
}

/// Recurrence coefficients `(α_k, β_k)`, `k < n`, of the orthogonal
/// polynomials of the moment sequence `m_0..m_{2n-1}`. `None` when some
/// `β_k` is not positive.
fn chebyshev(m: &[f64], n: usize) -> Option<(Vec<f64>, Vec<f64>)> {
    let len = 2 * n;
    let mut alpha = vec![0.0; n];
    let mut beta = vec![0.0; n];
    let mut prev = vec![0.0; len];
    let mut cur: Vec<f64> = m[..len].to_vec();
    alpha[0] = m[1] / m[0];
    beta[0] = m[0];
    for k in 1..n {
        let mut next = vec![0.0; len];
        for l in k..(len - k) {
            next[l] = cur[l + 1] - alpha[k - 1] * cur[l] - beta[k - 1] * prev[l];
        }
        if !(next[k] > 0.0) {
            return None;
        }
        alpha[k] = next[k + 1] / next[k] - cur[k] / cur[k - 1];
        beta[k] = next[k] / cur[k - 1];
        prev = cur;
        cur = next;
    }
    Some((alpha, beta))
}

/// Gauss nodes and weights from the Jacobi matrix.
fn golub_welsch(alpha: &[f64], beta: &[f64]) -> (Vec<f64>, Vec<f64>) {
    let n = alpha.len();
    let mut j = DMatrix::<f64>::zeros(n, n);
    for k in 0..n {
        j[(k, k)] = alpha[k];
        if k + 1 < n {
            let off = beta[k + 1].sqrt();
            j[(k, k + 1)] = off;
            j[(k + 1, k)] = off;
        }
    }
    let eig = SymmetricEigen::new(j);
    let mut pairs: Vec<(f64, f64)> = (0..n)
        .map(|i| (eig.eigenvalues[i], beta[0] * eig.eigenvectors[(0, i)].powi(2)))
        .collect();
    pairs.sort_by(|a, b| a.0.total_cmp(&b.0));
    pairs.into_iter().unzip()
}

/// Newton iterations on `Σ_i w_i x_i^k / m_k = 1`, `k < 2n`.
fn polish(x: &mut [f64], w: &mut [f64], m: &[f64]) {
    let n = x.len();
    let eqs = 2 * n;
    for _ in 0..20 {
        let mut f = DVector::<f64>::zeros(eqs);
        let mut jac = DMatrix::<f64>::zeros(eqs, eqs);
        for k in 0..eqs {
            for i in 0..n {
                let pk = x[i].powi(k as i32);
                f[k] += w[i] * pk / m[k];
                jac[(k, i)] = pk / m[k];
                jac[(k, n + i)] = if k == 0 { 0.0 } else { k as f64 * w[i] * x[i].powi(k as i32 - 1) / m[k] };
            }
            f[k] -= 1.0;
        }
        let Some(step) = jac.lu().solve(&f) else { return };
        for i in 0..n {
            w[i] -= step[i];
            x[i] -= step[n + i];
        }
        if step.amax() < 1e-15 {
            return;
        }
    }
}

/// Lawson–Hanson nonnegative least squares: `min ‖Ax - b‖` over `x ≥ 0`.
pub fn nnls(a: &DMatrix<f64>, b: &DVector<f64>) -> DVector<f64> {
    let cols = a.ncols();
    let mut x = DVector::<f64>::zeros(cols);
    let mut passive = vec![false; cols];
    let tol = 1e-12 * a.amax().max(1.0) * b.amax().max(1.0);
    let solve_passive = |passive: &[bool]| -> DVector<f64> {
        let idx: Vec<usize> = (0..cols).filter(|&j| passive[j]).collect();
        let sub = a.select_columns(&idx);
        let sol = sub.svd(true, true).solve(b, 1e-14).expect("SVD with both factors");
        let mut full = DVector::zeros(cols);
        for (p, &j) in idx.iter().enumerate() {
            full[j] = sol[p];
        }
        full
    };
    for _ in 0..3 * cols {
        let grad = a.transpose() * (b - a * &x);
        let candidate = (0..cols).filter(|&j| !passive[j]).max_by(|&i, &j| grad[i].total_cmp(&grad[j]));
        let Some(j) = candidate.filter(|&j| grad[j] > tol) else { break };
        passive[j] = true;
        loop {
            let s = solve_passive(&passive);
            let blocked: Vec<usize> = (0..cols).filter(|&i| passive[i] && s[i] <= 0.0).collect();
            if blocked.is_empty() {
                x = s;
                break;
            }
            let step = blocked.iter().map(|&i| x[i] / (x[i] - s[i])).fold(f64::INFINITY, f64::min);
            x += (s - &x) * step;
            for i in 0..cols {
                if passive[i] && x[i] <= 1e-300 {
                    passive[i] = false;
                    x[i] = 0.0;
                }
            }
        }
    }
    x
}

/// Grid on `[0, 1)` in the scaled variable, uniform on the bulk and
/// geometrically refined toward `1`.
fn refined_grid(points: usize) -> Vec<f64> {
    let half = points / 2;
    let mut s: Vec<f64> = (0..half).map(|i| i as f64 / half as f64).collect();
    for i in 0..(points - half) {
        let e = 0.3 + 11.7 * i as f64 / (points - half - 1).max(1) as f64;
        s.push(1.0 - 10f64.powf(-e));
    }
    s.sort_by(f64::total_cmp);
    s.dedup();
    s
}

fn finish(q: QParam, rho: f64, k_mom: usize, nodes_s: Vec<f64>, weights: Vec<f64>, method: QuadratureMethod) -> RadialQuadrature {
    let rho2 = rho * rho;
    let nodes: Vec<f64> = nodes_s.iter().map(|s| (s * rho2).max(0.0).sqrt()).collect();
    let mut quad = RadialQuadrature {
        q: q.value(),
        rho,
        nodes,
        weights,
        k_mom,
        residuals: Vec::new(),
        method,
        feasible: false,
    };
    quad.residuals = (0..k_mom)
        .map(|k| {
            let target = target_moment(q, k);
            (quad.moment(k) - target).abs() / target
        })
        .collect();
    quad.feasible = quad.max_residual() <= MOMENT_TOL
        && quad.weights.iter().all(|w| *w >= 0.0)
        && quad.nodes.iter().all(|r| *r >= 0.0 && *r < rho);
    quad
}

/// Nodes and nonnegative weights matching `[k]!/(2π)` for `k < k_mom`.
/// Infeasible targets return the least-mismatch measure with
/// `feasible = false`.
pub fn solve_moment_measure(q: QParam, rho: f64, k_mom: usize) -> Result<RadialQuadrature> {
    let q = QParam::in_unit_interval(q.value())?;
    if k_mom == 0 {
        return Err(Error::InvalidArgument("at least one moment must be matched".into()));
    }
    if k_mom > MAX_MOMENTS {
        return Err(Error::Conditioning(k_mom));
    }
    if !(rho > 0.0 && rho.is_finite()) {
        return Err(Error::InvalidArgument(format!("radius {rho} must be positive")));
    }
    let n = k_mom.div_ceil(2);
    let rho2 = rho * rho;
    let scaled: Vec<f64> = (0..2 * n).map(|k| target_moment(q, k) / rho2.powi(k as i32)).collect();
    // A measure on [0, ρ²) in t needs μ_k < ρ² μ_{k-1}.
    let admissible = scaled.windows(2).take(k_mom.saturating_sub(1)).all(|w| w[1] <= w[0]);

    if admissible {
        if let Some((alpha, beta)) = chebyshev(&scaled, n) {
            let (mut x, mut w) = golub_welsch(&alpha, &beta);
            polish(&mut x, &mut w, &scaled);
            let quad = finish(q, rho, k_mom, x, w, QuadratureMethod::Gauss);
            if quad.feasible {
                return Ok(quad);
            }
        }
    }

    let grid = refined_grid(400);
    let a = DMatrix::from_fn(k_mom, grid.len(), |k, j| grid[j].powi(k as i32) / scaled[k]);
    let b = DVector::from_element(k_mom, 1.0);
    let sol = nnls(&a, &b);
    let (x, w): (Vec<f64>, Vec<f64>) = grid.iter().zip(sol.iter()).filter(|(_, w)| **w > 0.0).map(|(s, w)| (*s, *w)).unzip();
    Ok(finish(q, rho, k_mom, x, w, QuadratureMethod::Nnls))
}

/// `(⟨f, φ_k⟩, ⟨Ψ_k, g⟩)` for every `k` of the truncation.
fn projections(family: &BiorthogonalFamily, f: &FockVector, g: &FockVector) -> Result<(Vec<C64>, Vec<C64>)> {
    let f = f.embed(family.dim())?.0;
    let g = g.embed(family.dim())?.0;
    let p: Vec<C64> = (family.phi_matrix().adjoint() * &f).iter().map(|x| x.conj()).collect();
    let s: Vec<C64> = (family.psi_matrix().adjoint() * &g).iter().copied().collect();
    Ok((p, s))
}

fn support(v: &[C64]) -> Vec<usize> {
    v.iter().enumerate().filter(|(_, x)| x.norm() > 0.0).map(|(k, _)| k).collect()
}

/// `Σ_j w_j Σ_m (2π/n_θ) N(|z|)^{-2} ⟨f, φ(z)⟩⟨Ψ(z), g⟩` over the polar
/// nodes `z = r_j e^{2πim/n_θ}`. The normalisation cancels, leaving the
/// power series in `z` with coefficients `⟨f, φ_k⟩/β_{k-1}!`.
pub fn resolution_check(
    family: &BiorthogonalFamily,
    quad: &RadialQuadrature,
    n_theta: usize,
    f: &FockVector,
    g: &FockVector,
) -> Result<C64> {
    let (p, s) = projections(family, f, g)?;
    let (sp, ss) = (support(&p), support(&s));
    let top = sp.iter().chain(&ss).copied().max().unwrap_or(0);
    if top >= quad.k_mom {
        return Err(Error::SupportViolation { index: top, limit: quad.k_mom });
    }
    let spread = sp.iter().flat_map(|k| ss.iter().map(move |l| k.abs_diff(*l))).max().unwrap_or(0);
    if n_theta <= spread {
        return Err(Error::AngularTooCoarse { n_theta, spread });
    }
    let betas = BetaSequence::new(family.q(), top + 1);
    let fact: Vec<f64> = (0..=top).map(|k| betas.factorial(k as i64 - 1)).collect();
    let dtheta = TAU / n_theta as f64;
    // Collected before summing so the result does not depend on scheduling.
    let per_node: Vec<C64> = quad
        .nodes
        .par_iter()
        .zip(quad.weights.par_iter())
        .map(|(&r, &w)| {
            let mut acc = C64::new(0.0, 0.0);
            for m in 0..n_theta {
                let z = C64::from_polar(r, dtheta * m as f64);
                let mut zk = C64::new(1.0, 0.0);
                let (mut left, mut right) = (C64::new(0.0, 0.0), C64::new(0.0, 0.0));
                for k in 0..=top {
                    left += zk / fact[k] * p[k];
                    right += zk.conj() / fact[k] * s[k];
                    zk *= z;
                }
                acc += left * right;
            }
            acc * (w * dtheta)
        })
        .collect();
    Ok(per_node.into_iter().sum())
}

/// The same pairing evaluated with exact angular integration and supplied
/// radial moments: `Σ_k ⟨f,φ_k⟩⟨Ψ_k,g⟩ · 2π m_k/[k]!`.
pub fn telescoped_value(
    family: &BiorthogonalFamily,
    f: &FockVector,
    g: &FockVector,
    moment: impl Fn(usize) -> f64,
) -> Result<C64> {
    let (p, s) = projections(family, f, g)?;
    let q = family.q();
    Ok((0..p.len()).map(|k| p[k] * s[k] * (TAU * moment(k) / q_number_factorial(q, k as i64))).sum())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::pseudoquon::{build_family, SimilarityOperator, SplitSupport};

    fn q(v: f64) -> QParam {
        QParam::new(v).unwrap()
    }

    fn rank_one() -> SimilarityOperator {
        SimilarityOperator::RankOne(SplitSupport::standard().deformation(C64::new(0.0, 1.0)).unwrap())
    }

    #[test]
    fn single_moment_is_total_mass() {
        let quad = solve_moment_measure(q(0.5), 2f64.sqrt(), 1).unwrap();
        let mass: f64 = quad.weights.iter().sum();
        assert!((mass - 1.0 / TAU).abs() < 1e-15);
        assert!(quad.feasible);
    }

    #[test]
    fn eight_moments_at_half() {
        let rho = q(0.5).coherent_radius();
        let quad = solve_moment_measure(q(0.5), rho, 8).unwrap();
        assert_eq!(quad.method, QuadratureMethod::Gauss);
        assert!(quad.feasible);
        assert!(quad.max_residual() < 1e-10, "{:?}", quad.residuals);
        assert!(quad.weights.iter().all(|w| *w > 0.0));
        assert!(quad.nodes.iter().all(|r| *r < rho));
    }

    #[test]
    fn near_bosonic_moments() {
        let qv = q(0.999);
        let quad = solve_moment_measure(qv, qv.coherent_radius(), 6).unwrap();
        let mut fact = 1.0;
        for k in 0..6 {
            if k > 0 {
                fact *= k as f64;
            }
            assert!((quad.moment(k) / (fact / TAU) - 1.0).abs() < 1e-2, "k={k}");
        }
    }

    #[test]
    fn against_jackson_measure() {
        // The q-integral atoms t_m = q^m/(1-q) with weights q^m (q^{m+1};q)_∞
        // reproduce [k]!/(2π) after dividing by 2π.
        let qv = 0.5f64;
        let mut atoms = Vec::new();
        for m in 0..200 {
            let t = qv.powi(m) / (1.0 - qv);
            let mut inf = 1.0;
            for j in (m + 1)..400 {
                inf *= 1.0 - qv.powi(j);
            }
            atoms.push((t, qv.powi(m) * inf / TAU));
        }
        for k in 0..12 {
            let got: f64 = atoms.iter().map(|(t, w)| w * t.powi(k)).sum();
            let want = target_moment(q(qv), k as usize);
            assert!((got / want - 1.0).abs() < 1e-12, "k={k}");
        }
    }

    #[test]
    fn too_small_radius_is_flagged() {
        let quad = solve_moment_measure(q(0.5), 1.0, 8).unwrap();
        assert!(!quad.feasible);
        assert_eq!(quad.method, QuadratureMethod::Nnls);
        assert!(quad.max_residual() > MOMENT_TOL);
        assert!(quad.weights.iter().all(|w| *w >= 0.0));
    }

    #[test]
    fn conditioning_limit() {
        assert!(matches!(solve_moment_measure(q(0.5), 1.4, 41), Err(Error::Conditioning(41))));
        assert!(solve_moment_measure(q(1.0), 1.0, 4).is_err());
    }

    #[test]
    fn nnls_small_example() {
        let a = DMatrix::from_row_slice(2, 3, &[1.0, 0.0, 1.0, 0.0, 1.0, 1.0]);
        let b = DVector::from_vec(vec![1.0, -1.0]);
        let x = nnls(&a, &b);
        assert!(x.iter().all(|v| *v >= 0.0));
        assert!((x[0] - 1.0).abs() < 1e-12 && x[1] == 0.0 && x[2] == 0.0);
    }

    #[test]
    fn vacuum_resolution() {
        let qv = q(0.5);
        let fam = build_family(&SimilarityOperator::Identity, qv, 32).unwrap();
        let quad = solve_moment_measure(qv, qv.coherent_radius(), 12).unwrap();
        let e0 = FockVector::basis(0, 32);
        let v = resolution_check(&fam, &quad, 64, &e0, &e0).unwrap();
        assert!((v - C64::new(1.0, 0.0)).norm() < 1e-10);
        let v = resolution_check(&fam, &quad, 64, &FockVector::basis(1, 32), &FockVector::basis(3, 32)).unwrap();
        assert!(v.norm() < 1e-9);
    }

    #[test]
    fn rank_one_resolution() {
        let qv = q(0.5);
        let fam = build_family(&rank_one(), qv, 32).unwrap();
        let quad = solve_moment_measure(qv, qv.coherent_radius(), 12).unwrap();
        let s = 0.5f64.sqrt();
        let f = FockVector::from_slice(&[C64::new(s, 0.0), C64::new(0.0, 0.0), C64::new(s, 0.0)]);
        let v = resolution_check(&fam, &quad, 64, &f, &f).unwrap();
        assert!((v - C64::new(1.0, 0.0)).norm() < 1e-8, "{v}");
    }

    #[test]
    fn telescoping_with_exact_moments() {
        let qv = q(0.3);
        let fam = build_family(&rank_one(), qv, 32).unwrap();
        let f = FockVector::from_slice(&[C64::new(0.2, 0.1), C64::new(-0.4, 0.0), C64::new(0.0, 0.3)]);
        let g = FockVector::from_slice(&[C64::new(0.5, 0.0), C64::new(0.1, -0.2), C64::new(0.0, 0.0), C64::new(0.7, 0.0)]);
        let got = telescoped_value(&fam, &f, &g, |k| target_moment(qv, k)).unwrap();
        let want = f.embed(4).unwrap().inner(&g);
        assert!((got - want).norm() < 1e-14);
    }

    #[test]
    fn argument_checks() {
        let qv = q(0.5);
        let fam = build_family(&SimilarityOperator::Identity, qv, 32).unwrap();
        let quad = solve_moment_measure(qv, qv.coherent_radius(), 4).unwrap();
        let e = |k| FockVector::basis(k, 32);
        assert!(matches!(resolution_check(&fam, &quad, 64, &e(5), &e(0)), Err(Error::SupportViolation { .. })));
        assert!(matches!(resolution_check(&fam, &quad, 3, &e(0), &e(3)), Err(Error::AngularTooCoarse { .. })));
    }

    #[test]
    fn csv_export() {
        let quad = solve_moment_measure(q(0.5), 2f64.sqrt(), 2).unwrap();
        let mut buf = Vec::new();
        quad.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with("r,w\n"));
        assert_eq!(text.lines().count(), 2);
    }
}
