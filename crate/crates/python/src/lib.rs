//! Python bindings: β-sequences, biorthogonal families, bi-coherent states,
//! the radial quadrature, the position representation and the config runner.

use dquon::bicoherent::{bicoherent_state, eigen_check, family_radius_report, uncertainty_product};
use dquon::cli::{ExperimentConfig, RunOptions};
use dquon::fock::{qmutator_residual, FockVector};
use dquon::positionrep::{coefficient_recursion, norm_formula_check, Grid, PositionParams};
use dquon::pseudoquon::{
    build_family, build_theta, check_ladder, check_theta, check_theta_conjugate, make_pair, BiorthogonalFamily,
    LadderPair, SimilarityOperator, SplitSupport,
};
use dquon::qcore::{self, QParam};
use dquon::resolution::{resolution_check, solve_moment_measure};
use num_complex::Complex64;
use pyo3::create_exception;
use pyo3::exceptions::PyValueError;
use pyo3::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

create_exception!(pydquon, DquonError, PyValueError, "Raised when a numerical precondition fails.");

fn err(e: impl std::fmt::Display) -> PyErr {
    DquonError::new_err(e.to_string())
}

fn qparam(q: f64) -> PyResult<QParam> {
    QParam::new(q).map_err(err)
}

/// Converts any serialisable value to Python objects through JSON.
fn to_py<'py>(py: Python<'py>, value: &impl serde::Serialize) -> PyResult<Bound<'py, PyAny>> {
    let text = serde_json::to_string(value).map_err(err)?;
    py.import("json")?.call_method1("loads", (text,))
}

fn column(v: &FockVector) -> Vec<Complex64> {
    v.0.iter().copied().collect()
}

/// `β_n²`.
#[pyfunction]
fn beta_sq(q: f64, n: i64) -> PyResult<f64> {
    Ok(qcore::beta_sq(qparam(q)?, n))
}

/// `β_n`.
#[pyfunction]
fn beta(q: f64, n: i64) -> PyResult<f64> {
    Ok(qcore::beta(qparam(q)?, n))
}

/// `β_n! = β_0 β_1 ⋯ β_n`, with `β_{-1}! = 1`.
#[pyfunction]
fn q_factorial(q: f64, n: i64) -> PyResult<f64> {
    Ok(qcore::q_factorial(qparam(q)?, n))
}

/// `1/√(1-q)`, infinite for `q >= 1`.
#[pyfunction]
fn coherent_radius(q: f64) -> PyResult<f64> {
    Ok(qparam(q)?.coherent_radius())
}

/// A biorthogonal family on a `k`-dimensional truncation. `alpha=None`
/// gives the undeformed quon basis, a complex `alpha` the standard
/// split-support deformation.
#[pyclass(module = "pydquon", frozen)]
struct Family {
    similarity: SimilarityOperator,
    family: BiorthogonalFamily,
    pair: LadderPair,
}

#[pymethods]
impl Family {
    #[new]
    #[pyo3(signature = (q, k=64, alpha=None))]
    fn new(q: f64, k: usize, alpha: Option<Complex64>) -> PyResult<Self> {
        let similarity = match alpha {
            None => SimilarityOperator::Identity,
            Some(a) => SimilarityOperator::RankOne(SplitSupport::standard().deformation(a).map_err(err)?),
        };
        let q = qparam(q)?;
        let family = build_family(&similarity, q, k).map_err(err)?;
        let pair = make_pair(&similarity, q, k).map_err(err)?;
        Ok(Self { similarity, family, pair })
    }

    #[getter]
    fn dim(&self) -> usize {
        self.family.dim()
    }

    #[getter]
    fn k_safe(&self) -> usize {
        self.family.k_safe()
    }

    fn phi(&self, n: usize) -> PyResult<Vec<Complex64>> {
        self.check_index(n)?;
        Ok(column(&self.family.phi(n)))
    }

    fn psi(&self, n: usize) -> PyResult<Vec<Complex64>> {
        self.check_index(n)?;
        Ok(column(&self.family.psi(n)))
    }

    /// `max |⟨φ_n, Ψ_m⟩ - δ_{nm}|`.
    fn biorthogonality_defect(&self) -> f64 {
        self.family.biorthogonality_defect()
    }

    /// `max_{n < K_safe} ‖(ab - q ba - 1) e_n‖`.
    fn qmutator_residual(&self) -> PyResult<f64> {
        qmutator_residual(&self.pair.a, &self.pair.b, self.pair.q, self.family.k_safe()).map_err(err)
    }

    fn ladder_report<'py>(&self, py: Python<'py>) -> PyResult<Bound<'py, PyAny>> {
        to_py(py, &check_ladder(&self.family, &self.pair).map_err(err)?)
    }

    fn theta_report<'py>(&self, py: Python<'py>) -> PyResult<Bound<'py, PyAny>> {
        let theta = build_theta(&self.family);
        let report = check_theta(&self.family, &self.pair, &theta).map_err(err)?;
        let conj = check_theta_conjugate(&self.family, &self.pair, &theta, self.family.k_safe()).map_err(err)?;
        let out = to_py(py, &report)?;
        out.set_item("conjugacy_residual", conj.conjugacy_residual)?;
        Ok(out)
    }

    fn radius_report<'py>(&self, py: Python<'py>) -> PyResult<Bound<'py, PyAny>> {
        to_py(py, &family_radius_report(&self.family).map_err(err)?)
    }

    /// `φ(z)`, `Ψ(z)` with the normalisation, pairing, eigen residuals and
    /// the uncertainty product.
    fn bicoherent<'py>(&self, py: Python<'py>, z: Complex64) -> PyResult<Bound<'py, PyAny>> {
        let state = bicoherent_state(&self.family, z, None).map_err(err)?;
        let (eigen_phi, eigen_psi) = eigen_check(&state, &self.pair).map_err(err)?;
        let unc = uncertainty_product(&state, &self.pair).map_err(err)?;
        let out = pyo3::types::PyDict::new(py);
        out.set_item("phi", column(&state.phi_z))?;
        out.set_item("psi", column(&state.psi_z))?;
        out.set_item("norm_const", state.norm_const.value)?;
        out.set_item("terms", state.terms)?;
        out.set_item("pairing", state.pairing())?;
        out.set_item("eigen_phi", eigen_phi)?;
        out.set_item("eigen_psi", eigen_psi)?;
        out.set_item("uncertainty", Complex64::new(unc.product[0], unc.product[1]))?;
        out.set_item("uncertainty_predicted", unc.predicted)?;
        Ok(out.into_any())
    }

    /// Largest `|resolution_check(f, g) - ⟨f, g⟩|` over seeded random pairs.
    #[pyo3(signature = (k_mom=12, n_theta=64, pairs=20, support=6, seed=0))]
    fn resolution_error(&self, k_mom: usize, n_theta: usize, pairs: usize, support: usize, seed: u64) -> PyResult<f64> {
        let q = self.family.q();
        let quad = solve_moment_measure(q, q.coherent_radius(), k_mom).map_err(err)?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut worst: f64 = 0.0;
        for _ in 0..pairs {
            let f = FockVector::random(&mut rng, support);
            let g = FockVector::random(&mut rng, support);
            let v = resolution_check(&self.family, &quad, n_theta, &f, &g).map_err(err)?;
            worst = worst.max((v - f.inner(&g)).norm());
        }
        Ok(worst)
    }

    fn __repr__(&self) -> String {
        let kind = match &self.similarity {
            SimilarityOperator::Identity => "identity".to_string(),
            SimilarityOperator::RankOne(d) => format!("rank_one(alpha={})", d.alpha()),
        };
        format!("Family(q={}, k={}, {kind})", self.family.q().value(), self.family.dim())
    }
}

impl Family {
    fn check_index(&self, n: usize) -> PyResult<()> {
        if n >= self.family.dim() {
            return Err(pyo3::exceptions::PyIndexError::new_err(format!("n = {n} outside 0..{}", self.family.dim())));
        }
        Ok(())
    }
}

/// Moment-matched radial quadrature on `[0, ρ)`: `(nodes, weights, feasible)`.
#[pyfunction]
#[pyo3(signature = (q, k_mom=12))]
fn radial_quadrature(q: f64, k_mom: usize) -> PyResult<(Vec<f64>, Vec<f64>, bool)> {
    let q = qparam(q)?;
    let quad = solve_moment_measure(q, q.coherent_radius(), k_mom).map_err(err)?;
    Ok((quad.nodes, quad.weights, quad.feasible))
}

/// Rows of `c_k^{(n)}` for `n <= n_max`, read off the symbolic ladder.
#[pyfunction]
fn position_coefficients(q: f64, n_max: usize) -> PyResult<Vec<Vec<Complex64>>> {
    let p = PositionParams::new(qparam(q)?, 0.0).map_err(err)?;
    let table = coefficient_recursion(&p, n_max).map_err(err)?;
    Ok((0..=n_max).map(|n| (0..=n).map(|k| table.get(n, k)).collect()).collect())
}

/// Grid norms of the position eigenfunctions against the closed formula.
#[pyfunction]
#[pyo3(signature = (q, gamma, n_max=5))]
fn position_norms<'py>(py: Python<'py>, q: f64, gamma: f64, n_max: usize) -> PyResult<Bound<'py, PyAny>> {
    let p = PositionParams::new(qparam(q)?, gamma).map_err(err)?;
    to_py(py, &norm_formula_check(&p, n_max, &Grid::default_for(gamma)).map_err(err)?)
}

/// Runs a JSON experiment config and returns the summary.
#[pyfunction]
#[pyo3(signature = (config, out=None, seed=None, tolerance_scale=1.0))]
fn run_config<'py>(
    py: Python<'py>,
    config: &str,
    out: Option<std::path::PathBuf>,
    seed: Option<u64>,
    tolerance_scale: f64,
) -> PyResult<Bound<'py, PyAny>> {
    let cfg = ExperimentConfig::from_json(config).map_err(err)?;
    let opts = RunOptions { out, seed, tolerance_scale };
    let summary = py.detach(|| dquon::cli::run(&cfg, &opts)).map_err(err)?;
    to_py(py, &summary)
}

/// `[(id, title, passed)]` for the requested acceptance criteria.
#[pyfunction]
#[pyo3(signature = (ids=None))]
fn selftest(py: Python<'_>, ids: Option<Vec<usize>>) -> Vec<(usize, String, bool)> {
    let reports = py.detach(|| match ids {
        None => dquon::acceptance::all(),
        Some(ids) => ids.into_iter().map(dquon::acceptance::run_criterion).collect(),
    });
    reports.into_iter().map(|r| (r.id, r.title.to_string(), r.pass())).collect()
}

#[pymodule]
fn pydquon(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add("DquonError", m.py().get_type::<DquonError>())?;
    m.add_class::<Family>()?;
    m.add_function(wrap_pyfunction!(beta_sq, m)?)?;
    m.add_function(wrap_pyfunction!(beta, m)?)?;
    m.add_function(wrap_pyfunction!(q_factorial, m)?)?;
    m.add_function(wrap_pyfunction!(coherent_radius, m)?)?;
    m.add_function(wrap_pyfunction!(radial_quadrature, m)?)?;
    m.add_function(wrap_pyfunction!(position_coefficients, m)?)?;
    m.add_function(wrap_pyfunction!(position_norms, m)?)?;
    m.add_function(wrap_pyfunction!(run_config, m)?)?;
    m.add_function(wrap_pyfunction!(selftest, m)?)?;
    Ok(())
}
