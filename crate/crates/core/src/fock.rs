//! Truncated Fock space: dense `K×K` matrices of quon ladder operators on
//! `span{e_0, …, e_{K-1}}` and residuals of the q-mutation relation.
//!
//! Truncation breaks `cc†` on the last basis vector, so every identity check
//! takes a safe block size `K_safe` and only tests `e_0, …, e_{K_safe-1}`.

use std::io::Write;

use nalgebra::DMatrix;

use crate::pseudoquon::BiorthogonalFamily;
use crate::qcore::{BetaSequence, QParam};
use crate::{CMatrix, CVector, Error, Result, C64};

/// A vector in the `e_n` coordinates. The inner product is conjugate-linear
/// in the first argument.
#[derive(Debug, Clone, PartialEq)]
pub struct FockVector(pub CVector);

impl FockVector {
    pub fn zeros(dim: usize) -> Self {
        Self(CVector::zeros(dim))
    }

    pub fn basis(k: usize, dim: usize) -> Self {
        let mut v = CVector::zeros(dim);
        v[k] = C64::new(1.0, 0.0);
        Self(v)
    }

    pub fn from_slice(coeffs: &[C64]) -> Self {
        Self(CVector::from_column_slice(coeffs))
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    /// `⟨self, other⟩`.
    pub fn inner(&self, other: &FockVector) -> C64 {
        self.0.dotc(&other.0)
    }

    pub fn norm(&self) -> f64 {
        self.0.norm()
    }

    /// Largest index holding a nonzero coefficient.
    pub fn max_support(&self) -> Option<usize> {
        self.0.iter().rposition(|c| *c != C64::new(0.0, 0.0))
    }

    /// Coefficients uniform in the unit square on indices `< support`.
    pub fn random<R: rand::Rng + ?Sized>(rng: &mut R, support: usize) -> Self {
        let coeffs: Vec<C64> =
            (0..support).map(|_| C64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0))).collect();
        Self::from_slice(&coeffs)
    }

    /// Zero-pad (or reject truncating) to `dim` coordinates.
    pub fn embed(&self, dim: usize) -> Result<FockVector> {
        if let Some(top) = self.max_support() {
            if top >= dim {
                return Err(Error::SupportViolation { index: top, limit: dim });
            }
        }
        let mut v = CVector::zeros(dim);
        for (i, c) in self.0.iter().enumerate().take(dim) {
            v[i] = *c;
        }
        Ok(FockVector(v))
    }
}

/// A ladder, number or metric operator truncated to `K` basis vectors.
#[derive(Debug, Clone, PartialEq)]
pub struct TruncatedOperator {
    label: String,
    matrix: CMatrix,
}

impl TruncatedOperator {
    pub fn new(label: impl Into<String>, matrix: CMatrix) -> Result<Self> {
        if matrix.nrows() != matrix.ncols() {
            return Err(Error::DimensionMismatch { left: matrix.nrows(), right: matrix.ncols() });
        }
        if matrix.iter().any(|c| !c.re.is_finite() || !c.im.is_finite()) {
            return Err(Error::InvalidArgument("operator has non-finite entries".into()));
        }
        Ok(Self { label: label.into(), matrix })
    }

    pub fn identity(dim: usize) -> Self {
        Self { label: "I".into(), matrix: CMatrix::identity(dim, dim) }
    }

    pub fn dim(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn label(&self) -> &str {
        &self.label
    }

    pub fn matrix(&self) -> &CMatrix {
        &self.matrix
    }

    pub fn into_matrix(self) -> CMatrix {
        self.matrix
    }

    /// Conjugate transpose, labelled `X†`.
    pub fn adjoint(&self) -> Self {
        Self { label: format!("{}†", self.label), matrix: self.matrix.adjoint() }
    }

    pub fn apply(&self, f: &FockVector) -> Result<FockVector> {
        check_dims(self.dim(), f.dim())?;
        Ok(FockVector(&self.matrix * &f.0))
    }

    /// `self · other`.
    pub fn compose(&self, other: &TruncatedOperator) -> Result<Self> {
        check_dims(self.dim(), other.dim())?;
        Ok(Self {
            label: format!("{}{}", self.label, other.label),
            matrix: &self.matrix * &other.matrix,
        })
    }

    /// Largest singular value.
    pub fn operator_norm(&self) -> f64 {
        self.matrix.clone().singular_values().max()
    }

    /// Row-major CSV, one matrix row per line, each cell a `"re,im"` field.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut wtr = csv::WriterBuilder::new().has_headers(false).from_writer(out);
        for row in self.matrix.row_iter() {
            let cells: Vec<String> = row.iter().map(|c| format!("{:e},{:e}", c.re, c.im)).collect();
            wtr.write_record(&cells).map_err(|e| Error::InvalidArgument(e.to_string()))?;
        }
        wtr.flush().map_err(|e| Error::InvalidArgument(e.to_string()))?;
        Ok(())
    }
}

pub(crate) fn check_dims(left: usize, right: usize) -> Result<()> {
    if left != right {
        return Err(Error::DimensionMismatch { left, right });
    }
    Ok(())
}

/// The `K×K` truncation of the quon annihilator: `(c)_{k,k+1} = β_k`.
pub fn make_quon_c(q: QParam, dim: usize) -> Result<TruncatedOperator> {
    if dim < 2 {
        return Err(Error::TruncationTooSmall(dim));
    }
    let betas = BetaSequence::new(q, dim);
    let matrix = DMatrix::from_fn(dim, dim, |i, j| {
        if j == i + 1 {
            C64::new(betas.beta(i as i64), 0.0)
        } else {
            C64::new(0.0, 0.0)
        }
    });
    Ok(TruncatedOperator { label: "c".into(), matrix })
}

/// `XY - qYX`.
pub fn qmutator(x: &TruncatedOperator, y: &TruncatedOperator, q: QParam) -> Result<TruncatedOperator> {
    check_dims(x.dim(), y.dim())?;
    let xy = &x.matrix * &y.matrix;
    let yx = &y.matrix * &x.matrix;
    Ok(TruncatedOperator {
        label: format!("[{},{}]_q", x.label, y.label),
        matrix: xy - yx * C64::new(q.value(), 0.0),
    })
}

/// `max_{n < K_safe} ‖(XY - qYX - 1) e_n‖`.
pub fn qmutator_residual(
    x: &TruncatedOperator,
    y: &TruncatedOperator,
    q: QParam,
    k_safe: usize,
) -> Result<f64> {
    let m = qmutator(x, y, q)?;
    if k_safe >= m.dim() {
        return Err(Error::SafeBlockTooLarge { k_safe, dim: m.dim() });
    }
    let dim = m.dim();
    let defect = m.matrix - CMatrix::identity(dim, dim);
    Ok(max_column_norm(&defect, k_safe))
}

/// Largest entry modulus.
pub(crate) fn max_abs(m: &CMatrix) -> f64 {
    m.iter().map(|z| z.norm()).fold(0.0, f64::max)
}

pub(crate) fn max_column_norm(m: &CMatrix, columns: usize) -> f64 {
    (0..columns).map(|n| m.column(n).norm()).fold(0.0, f64::max)
}

/// Lower bounds `β²_{n-1}(‖φ_{n-1}‖/‖φ_n‖)²` on `‖a‖²` for `n = 1..K-1`,
/// together with the operator norm of the truncated `a`.
#[derive(Debug, Clone)]
pub struct NormGrowth {
    pub ratios: Vec<f64>,
    pub operator_norm: f64,
}

pub fn norm_growth_probe(a: &TruncatedOperator, family: &BiorthogonalFamily) -> Result<NormGrowth> {
    check_dims(a.dim(), family.dim())?;
    let betas = BetaSequence::new(family.q(), family.dim());
    let norms = family.phi_norms();
    if let Some(n) = norms.iter().position(|&x| x == 0.0) {
        return Err(Error::ZeroNorm(n));
    }
    let ratios = (1..family.dim())
        .map(|n| betas.beta_sq(n as i64 - 1) * (norms[n - 1] / norms[n]).powi(2))
        .collect();
    Ok(NormGrowth { ratios, operator_norm: a.operator_norm() })
}

/// Coordinates of `e_n` images, i.e. column `n` of the operator.
pub fn column(op: &TruncatedOperator, n: usize) -> FockVector {
    FockVector(op.matrix.column(n).into_owned())
}
