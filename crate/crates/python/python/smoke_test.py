"""Smoke test for the pydquon extension module.

Build the extension and make it importable, e.g.

    cargo build -p dquon-python --release
    cp target/release/libpydquon.so crates/python/python/pydquon.so
    python3 crates/python/python/smoke_test.py
"""

import cmath
import json
import math
import os
import sys

sys.path.insert(0, os.path.dirname(os.path.abspath(__file__)))

import pydquon  # noqa: E402


def close(a, b, tol):
    return abs(a - b) <= tol


def main():
    q = 0.5
    assert close(pydquon.beta_sq(q, 0), 1.0, 1e-15)
    assert close(pydquon.beta_sq(q, 1), 1.5, 1e-15)
    assert pydquon.beta(-1.0, 1) == 0.0
    assert close(pydquon.coherent_radius(q), math.sqrt(2.0), 1e-15)
    assert close(pydquon.q_factorial(q, 2), math.sqrt(1.0 * 1.5 * 1.75), 1e-14)

    fam = pydquon.Family(q, 64, 1j)
    assert fam.dim == 64 and fam.k_safe < 64
    assert fam.biorthogonality_defect() < 1e-11
    assert fam.qmutator_residual() < 1e-12
    assert max(fam.ladder_report().values()) < 1e-11
    theta = fam.theta_report()
    assert theta["closed_form_gap"] < 1e-11 and theta["min_eigenvalue"] > 0
    assert close(fam.radius_report()["rho"], math.sqrt(2.0), 1e-12)

    z = 0.6 * cmath.exp(0.4j)
    state = fam.bicoherent(z)
    assert abs(state["pairing"] - 1) < 1e-9
    assert state["eigen_phi"] < 1e-9 and state["eigen_psi"] < 1e-9
    assert abs(state["uncertainty"] - state["uncertainty_predicted"]) < 1e-7
    assert fam.resolution_error(pairs=5, seed=3) < 1e-8

    try:
        fam.bicoherent(2.0)
    except pydquon.DquonError:
        pass
    else:
        raise AssertionError("|z| beyond the radius must raise")

    nodes, weights, feasible = pydquon.radial_quadrature(q, 12)
    assert feasible and all(w >= 0 for w in weights)
    assert all(0 <= r < math.sqrt(2.0) for r in nodes)

    alpha2 = -math.log(0.3) / 2
    rows = pydquon.position_coefficients(0.3, 2)
    assert close(rows[1][0].real, -math.exp(-alpha2), 1e-15)
    assert close(rows[2][1].real, -math.exp(-alpha2) - math.exp(-3 * alpha2), 1e-15)
    norms = pydquon.position_norms(0.3, 0.5, 5)
    assert max(r["relative_error"] for r in norms["rows"]) < 1e-6

    cfg = {"q": 0.5, "K": 64, "family": {"kind": "identity"}, "tasks": ["mutator"]}
    summary = pydquon.run_config(json.dumps(cfg))
    assert summary["pass"] is True
    assert summary["tasks"]["mutator"]["metrics"]["qmutator_residual"]["value"] < 1e-12

    results = pydquon.selftest([1, 12])
    assert [r[2] for r in results] == [True, True], results
    print("pydquon smoke test passed")


if __name__ == "__main__":
    main()
