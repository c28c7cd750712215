//! Scalar machinery for q-deformed oscillators: the sequence `β_n`, the
//! q-factorials `β_n!`, q-numbers and the spectrum of the log-number operator.
//!
//! Indices are signed so that the conventions `β_{-1} = 0` and
//! `β_{-1}! = β_0! = 1` can be used directly in formulas that shift by one.

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// Deformation parameter `q` of the q-mutator `XY - qYX`.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd, Serialize, Deserialize)]
#[serde(transparent)]
pub struct QParam(f64);

impl QParam {
    /// Any finite real `q`. Algebraic constructions accept the whole line.
    pub fn new(q: f64) -> Result<Self> {
        if !q.is_finite() {
            return Err(Error::QOutOfRange { q, expected: "the finite reals" });
        }
        Ok(Self(q))
    }

    /// `0 < q < 1`, the range where bi-coherent states and the log-number
    /// operator are defined.
    pub fn in_unit_interval(q: f64) -> Result<Self> {
        if !(q > 0.0 && q < 1.0) {
            return Err(Error::QOutOfRange { q, expected: "(0, 1)" });
        }
        Ok(Self(q))
    }

    /// `0 < q <= 1`; `q = 1` is the bosonic limit of the coherent states.
    pub fn coherent(q: f64) -> Result<Self> {
        if !(q > 0.0 && q <= 1.0) {
            return Err(Error::QOutOfRange { q, expected: "(0, 1]" });
        }
        Ok(Self(q))
    }

    pub fn value(self) -> f64 {
        self.0
    }

    /// `lim β_n² = 1/(1-q)` for `0 < q < 1`, infinite for `q >= 1`.
    pub fn beta_sq_limit(self) -> f64 {
        if self.0 < 1.0 && self.0 > -1.0 {
            1.0 / (1.0 - self.0)
        } else {
            f64::INFINITY
        }
    }

    /// Radius `1/√(1-q)` of the disc where the normalisation series converges.
    pub fn coherent_radius(self) -> f64 {
        self.beta_sq_limit().sqrt()
    }
}

/// `β_n²` from the closed form, `n + 1` at `q = 1`, and `0` for `n <= -1`.
pub fn beta_sq(q: QParam, n: i64) -> f64 {
    if n < 0 {
        return 0.0;
    }
    let q = q.value();
    let m = n + 1;
    if q == 1.0 {
        m as f64
    } else if q > 0.0 {
        // (1 - q^m)/(1 - q) through expm1 keeps full precision near q = 1.
        let lq = q.ln();
        (m as f64 * lq).exp_m1() / lq.exp_m1()
    } else {
        (1.0 - q.powi(m as i32)) / (1.0 - q)
    }
}

/// `β_n² = 1 + q β_{n-1}²` iterated from `β_0² = 1`. Kept as an independent
/// route to [`beta_sq`].
pub fn beta_sq_recursive(q: QParam, n: i64) -> f64 {
    if n < 0 {
        return 0.0;
    }
    let mut b2 = 1.0;
    for _ in 0..n {
        b2 = 1.0 + q.value() * b2;
    }
    b2
}

/// `β_n`, the nonnegative root of [`beta_sq`].
pub fn beta(q: QParam, n: i64) -> f64 {
    beta_sq(q, n).max(0.0).sqrt()
}

/// q-number `[n] = β_{n-1}²`, so that `[n+1] = β_n²` and `[0] = 0`.
pub fn q_number(q: QParam, n: i64) -> f64 {
    beta_sq(q, n - 1)
}

/// `(β_n!)² = [n+1]!`, the empty product being `1` for `n <= 0`.
pub fn q_factorial_sq(q: QParam, n: i64) -> f64 {
    (1..=n).map(|k| beta_sq(q, k)).product()
}

/// q-factorial `β_n! = β_n β_{n-1} ··· β_1`, with `β_{-1}! = β_0! = 1`.
pub fn q_factorial(q: QParam, n: i64) -> f64 {
    (1..=n).map(|k| beta(q, k)).product()
}

/// `[n]! = (β_{n-1}!)²`.
pub fn q_number_factorial(q: QParam, n: i64) -> f64 {
    q_factorial_sq(q, n - 1)
}

/// Eigenvalue of the log-number operator `N = log(1 - N_0(1-q))/log q` on
/// `e_n`, where `N_0 e_n = β²_{n-1} e_n`.
///
/// The argument `1 - (1-q)β²_{n-1}` cancels catastrophically as
/// `β² → 1/(1-q)`. From `β²_{n-1} = 1 + qβ²_{n-2}` it obeys
/// `d_n = q d_{n-1}`, `d_0 = 1`, which is how it is evaluated here.
pub fn log_number_eigenvalue(q: QParam, n: usize) -> Result<f64> {
    let q = QParam::in_unit_interval(q.value())?;
    let mut complement = 1.0;
    for _ in 0..n {
        complement *= q.value();
    }
    Ok(complement.ln() / q.value().ln())
}

/// The log-number map applied to an arbitrary `N_0` eigenvalue `x`. Well
/// conditioned only while `(1-q)x` stays away from `1`.
pub fn log_number_of(q: QParam, x: f64) -> Result<f64> {
    let q = QParam::in_unit_interval(q.value())?;
    Ok((-(1.0 - q.value()) * x).ln_1p() / q.value().ln())
}

/// Cached `β_n`, `β_n²` and `β_n!` for `n = 0..=n_max`, addressed with the
/// same signed-index conventions as the free functions.
#[derive(Debug, Clone)]
pub struct BetaSequence {
    q: QParam,
    values_sq: Vec<f64>,
    factorials: Vec<f64>,
}

impl BetaSequence {
    pub fn new(q: QParam, n_max: usize) -> Self {
        let values_sq: Vec<f64> = (0..=n_max as i64).map(|n| beta_sq(q, n)).collect();
        let mut factorials = Vec::with_capacity(n_max + 1);
        let mut acc = 1.0;
        for (n, b2) in values_sq.iter().enumerate() {
            if n > 0 {
                acc *= b2.max(0.0).sqrt();
            }
            factorials.push(acc);
        }
        Self { q, values_sq, factorials }
    }

    pub fn q(&self) -> QParam {
        self.q
    }

    pub fn n_max(&self) -> usize {
        self.values_sq.len() - 1
    }

    pub fn beta_sq(&self, n: i64) -> f64 {
        if n < 0 {
            0.0
        } else {
            self.values_sq[n as usize]
        }
    }

    pub fn beta(&self, n: i64) -> f64 {
        self.beta_sq(n).max(0.0).sqrt()
    }

    pub fn factorial(&self, n: i64) -> f64 {
        if n < 0 {
            1.0
        } else {
            self.factorials[n as usize]
        }
    }

    pub fn values(&self) -> impl Iterator<Item = f64> + '_ {
        self.values_sq.iter().map(|b2| b2.max(0.0).sqrt())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn q(v: f64) -> QParam {
        QParam::new(v).unwrap()
    }

    #[test]
    fn bosonic_beta() {
        assert_eq!(beta(q(1.0), 3), 2.0);
        assert_eq!(beta_sq(q(1.0), 10), 11.0);
    }

    #[test]
    fn beta_minus_one_is_zero() {
        for v in [-1.0, 0.0, 0.3, 1.0, 1.7] {
            assert_eq!(beta(q(v), -1), 0.0);
        }
    }

    #[test]
    fn fermionic_limit() {
        assert_eq!(beta(q(-1.0), 1), 0.0);
        let seq: Vec<f64> = (0..6).map(|n| beta(q(-1.0), n)).collect();
        assert_eq!(seq, vec![1.0, 0.0, 1.0, 0.0, 1.0, 0.0]);
    }

    #[test]
    fn half_q_values() {
        // β_1² = 1 + 0.5, β_2² = 1 + 0.5·1.5
        assert_relative_eq!(beta_sq(q(0.5), 1), 1.5, epsilon = 1e-15);
        assert_relative_eq!(beta_sq(q(0.5), 2), 1.75, epsilon = 1e-15);
    }

    #[test]
    fn factorials() {
        assert_relative_eq!(q_factorial(q(1.0), 3), 24f64.sqrt(), epsilon = 1e-14);
        for v in [0.2, 0.5, 1.0, 3.0] {
            assert_eq!(q_factorial(q(v), 0), 1.0);
            assert_eq!(q_factorial(q(v), -1), 1.0);
        }
        assert_relative_eq!(q_factorial(q(0.5), 2), (1.5f64 * 1.75).sqrt(), epsilon = 1e-15);
        assert_relative_eq!(q_number_factorial(q(0.5), 3), 1.5 * 1.75, epsilon = 1e-15);
    }

    #[test]
    fn log_number_examples() {
        assert_eq!(log_number_eigenvalue(q(0.5), 0).unwrap(), 0.0);
        assert_relative_eq!(log_number_eigenvalue(q(0.5), 5).unwrap(), 5.0, epsilon = 1e-13);
        assert_relative_eq!(log_number_eigenvalue(q(0.9), 12).unwrap(), 12.0, epsilon = 1e-12);
        assert!(log_number_eigenvalue(q(1.0), 2).is_err());
        assert!(log_number_eigenvalue(q(0.0), 2).is_err());
    }

    #[test]
    fn log_number_grid() {
        for i in 1..=99 {
            let qv = q(i as f64 / 100.0);
            for n in 0..=100 {
                let got = log_number_eigenvalue(qv, n).unwrap();
                assert!((got - n as f64).abs() < 1e-10, "q={} n={n} got {got}", qv.value());
            }
        }
    }

    #[test]
    fn log_number_map_on_spectrum() {
        // The direct map is accurate while the complement q^n is not tiny.
        let qv = q(0.7);
        for n in 0..20 {
            let x = beta_sq(qv, n as i64 - 1);
            assert!((log_number_of(qv, x).unwrap() - n as f64).abs() < 1e-9);
        }
    }

    #[test]
    fn sequence_cache_matches_free_functions() {
        let qv = q(0.37);
        let seq = BetaSequence::new(qv, 40);
        for n in -1..=40 {
            assert_eq!(seq.beta_sq(n), beta_sq(qv, n));
            assert_relative_eq!(seq.factorial(n), q_factorial(qv, n), max_relative = 1e-14);
        }
    }
}
