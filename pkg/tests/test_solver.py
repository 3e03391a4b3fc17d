import numpy as np
import pytest

from conftest import p1
from quantding.bergman import quantised_ding
from quantding.hermitian import logdet, random_hermitian
from quantding.solver import (
    CONVERGED,
    MAX_ITERS,
    SolverConfig,
    SolverError,
    certify,
    probe_directions,
    solve_balanced,
)


def _start(m, seed, norm=0.5):
    M = p1(m)
    return M, np.eye(M.N) + random_hermitian(np.random.default_rng(seed), M.N, norm)


def test_config_validation():
    with pytest.raises(ValueError):
        SolverConfig(method="newton")
    with pytest.raises(ValueError):
        SolverConfig(damping=1.0)
    with pytest.raises(ValueError):
        SolverConfig(residual_tol=0)


def test_reference_converges_immediately():
    M = p1(3)
    H, trace, status = solve_balanced(M, np.eye(M.N))
    assert status == CONVERGED and len(trace) <= 2


@pytest.mark.parametrize("method", ["fixed-point", "gradient"])
def test_converges_and_certifies(method):
    M, H0 = _start(3, 0)
    H, trace, status = solve_balanced(M, H0, SolverConfig(method=method))
    assert status == CONVERGED
    assert trace.residual[-1] < 1e-8
    assert trace.oscillation[-1] < 1e-7
    assert abs(logdet(H)) < 1e-10  # gauge normalised
    cert = certify(M, H, tol=1e-7)
    assert cert.balanced
    assert quantised_ding(M, H) <= quantised_ding(M, np.eye(M.N)) + 1e-12


def test_damped_fixed_point():
    M, H0 = _start(2, 1)
    _, trace, status = solve_balanced(M, H0, SolverConfig(damping=0.3))
    assert status == CONVERGED


def test_gradient_monotone():
    M, H0 = _start(4, 2)
    _, trace, status = solve_balanced(M, H0, SolverConfig(method="gradient"))
    assert status == CONVERGED
    assert np.all(np.diff(trace.ding) <= 1e-12)


def test_gauge_independence():
    M, H0 = _start(3, 3)
    a = solve_balanced(M, H0).H
    b = solve_balanced(M, np.exp(2.3) * H0).H
    assert np.abs(a - b).max() < 1e-8


def test_max_iters_status():
    M, H0 = _start(3, 4)
    _, trace, status = solve_balanced(M, H0, SolverConfig(max_iters=2))
    assert status == MAX_ITERS and len(trace) == 3


def test_not_positive_definite_reports_iteration():
    M = p1(2)
    with pytest.raises(SolverError) as exc:
        solve_balanced(M, -np.eye(M.N), SolverConfig(gauge=False))
    assert exc.value.iteration == 0


def test_certificate_translation_and_failure():
    M, H0 = _start(3, 5)
    H = solve_balanced(M, H0).H
    a, b = certify(M, H).to_dict(), certify(M, np.exp(0.9) * H).to_dict()
    for k in ("moment_norm", "bergman_oscillation", "fixed_point_gap", "max_ding_derivative"):
        assert abs(a[k] - b[k]) < 1e-9
    bad = certify(M, H0)
    assert not bad.balanced
    assert max(bad.moment_norm, bad.bergman_oscillation, bad.fixed_point_gap, bad.max_ding_derivative) > 1e-3


def test_certificates_move_together():
    # all four residuals small together or large together
    rng = np.random.default_rng(6)
    logs = []
    for m in (2, 3):
        M = p1(m)
        for _ in range(15):
            H = np.eye(M.N) + random_hermitian(rng, M.N, 10 ** rng.uniform(-6, -0.5))
            c = certify(M, H)
            logs.append(np.log([c.moment_norm, c.bergman_oscillation, c.fixed_point_gap, c.max_ding_derivative]))
    corr = np.corrcoef(np.array(logs).T)
    assert np.all(corr > 0)


def test_probe_directions_orthonormal():
    B = probe_directions(3)
    G = np.array([[np.vdot(a, b).real for b in B] for a in B])
    assert len(B) == 9 and np.allclose(G, np.eye(9))


def test_trace_csv():
    M, H0 = _start(2, 7)
    trace = solve_balanced(M, H0).trace
    lines = trace.to_csv().splitlines()
    assert lines[0] == "iteration,ding,residual,oscillation,step"
    assert len(lines) == len(trace) + 1
