import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from certrom.certifier import CertStepConfig, run_certified
from certrom.estimates import (
    aposteriori_bound,
    apriori_report,
    best_approximation_error,
    convective_lipschitz,
    eta_estimator,
    residual_series,
    time_derivative,
    trapezoid,
    true_error,
    x_norm,
)
from certrom.reduced import RegimeSet, SnapshotSet, assemble_reduced, basis_from_fields, lift, pod_basis, project
from certrom.spectral import norms, random_field, run_fom, taylor_green


def _tg_rom(grid, amplitude=1.0):
    tg = taylor_green(grid)
    b = basis_from_fields((tg / norms(grid, tg)[0])[None])
    return b, assemble_reduced(grid, b), amplitude * norms(grid, tg)[0]


def test_trapezoid_exact_for_linear():
    t = np.linspace(0, 2, 7)
    assert trapezoid(3 * t + 1, t) == pytest.approx(8.0, rel=1e-14)
    assert trapezoid([5.0], [0.0]) == 0.0


def test_time_derivative_exact_for_quadratics():
    t = np.linspace(0, 1, 11)
    d = time_derivative((t**2 - 3 * t)[:, None], 0.1)
    assert np.allclose(d[:, 0], 2 * t - 3, atol=1e-12)
    with pytest.raises(ValueError):
        time_derivative(np.zeros((1, 2)), 0.1)


def test_manufactured_residual_second_order(grid):
    # Taylor-Green is an exact one-mode solution: the only residual source is the
    # discrete time derivative, so the residual must shrink like dt^2
    b, ops, a0 = _tg_rom(grid)
    peaks = []
    for dt in (0.04, 0.02, 0.01):
        tr = run_certified(np.array([a0]), ops, CertStepConfig(0.5, dt), int(round(0.4 / dt)), RegimeSet(10.0))
        res = residual_series(tr, b, ops, grid)
        assert res.residual_computed
        peaks.append(res.dual_norms.max())
    assert peaks[0] / peaks[1] == pytest.approx(4.0, rel=0.15)
    assert peaks[1] / peaks[2] == pytest.approx(4.0, rel=0.15)


def test_residual_flag_requires_trajectory_operators(grid):
    b, ops, a0 = _tg_rom(grid)
    tr = run_certified(np.array([a0]), ops, CertStepConfig(0.5, 0.05), 4, RegimeSet(10.0))
    ops.convection[0, 0, 0] = 1e-3
    assert not residual_series(tr, b, ops, grid).residual_computed


def test_eta_closed_form(grid, rng):
    b, ops, a0 = _tg_rom(grid)
    tr = run_certified(np.array([a0]), ops, CertStepConfig(0.5, 0.05), 4, RegimeSet(10.0))
    res = residual_series(tr, b, ops, grid)
    res.dual_norms = np.full_like(res.dual_norms, 2.0)
    w = random_field(grid, rng, norm=1.0)
    w = w - lift(b, project(b, w))
    u0 = lift(b, tr.states[0]) + w
    eta, rl2, init = eta_estimator(res, u0, b, grid, 0.1)
    assert rl2 == pytest.approx(2.0 * math.sqrt(0.2), rel=1e-13)
    assert init == pytest.approx(0.1 * norms(grid, w)[0], rel=1e-12)
    assert eta == rl2 + init


def test_bound_arithmetic():
    assert aposteriori_bound(1.0, 0.0, 0.0, 2.0, 5.0) == 1.0
    assert aposteriori_bound(0.5, 0.1, 0.1, 0.1, 1.0) == pytest.approx(math.sqrt(20) * math.e**2 * 0.5, rel=1e-14)
    assert aposteriori_bound(0.0, 3.0, 0.0, 0.1, 1.0) == 0.0
    with pytest.raises(ValueError):
        aposteriori_bound(1.0, 0.0, 0.0, 0.0, 1.0)


@given(st.floats(0, 10), st.floats(0, 5), st.floats(0.1, 1), st.floats(0, 2))
def test_bound_monotone_in_inputs(eta, L, nu, T):
    b = aposteriori_bound(eta, L, 0.0, nu, T)
    assert aposteriori_bound(eta, L + 0.5, 0.0, nu, T) >= b
    assert aposteriori_bound(2 * eta, L, 0.0, nu, T) >= b


def test_apriori_report():
    r = apriori_report(0.3, 0.0, 0.1, 1.0)
    assert r.C_pr == 1.0 and r.bound == 0.3
    assert apriori_report(0.3, 0.1, 0.1, 1.0).bound == pytest.approx(0.3 * math.e, rel=1e-14)
    with pytest.raises(ValueError):
        apriori_report(0.3, -1.0, 0.1, 1.0)


def test_lipschitz_running_max(grid, rng):
    u0 = taylor_green(grid) + random_field(grid, rng, kcut=3, norm=0.3)
    _, states = run_fom(grid, u0, 0.5, 0.02, 20)
    b = pod_basis(grid, SnapshotSet(states, np.ones(len(states))), 4)
    ops = assemble_reduced(grid, b)
    tr = run_certified(project(b, u0), ops, CertStepConfig(0.5, 0.02), 20, RegimeSet(10.0))
    L, prov, hist = convective_lipschitz(grid, b, tr, reference=states, trials=60,
                                         rng=np.random.default_rng(5), return_history=True)
    assert prov == "estimated" and L == hist[-1] > 0
    assert np.all(np.diff(hist) >= 0)
    L2, _ = convective_lipschitz(grid, b, tr, reference=states, trials=60, rng=np.random.default_rng(5))
    assert L2 == L
    assert convective_lipschitz(grid, mode="declared", declared=2.5) == (2.5, "declared")
    with pytest.raises(ValueError):
        convective_lipschitz(grid, mode="declared")


def test_x_norm_and_true_error_offset(grid, rng):
    b, ops, a0 = _tg_rom(grid)
    tr = run_certified(np.array([a0]), ops, CertStepConfig(0.5, 0.05), 20, RegimeSet(10.0))
    w = random_field(grid, rng, norm=0.7)
    ref = np.stack([lift(b, a) for a in tr.states]) + w
    l2, gr, _ = norms(grid, w)
    T = tr.times[-1] - tr.times[0]
    assert true_error(tr, b, grid, tr.times, ref) == pytest.approx(math.sqrt(l2**2 + T * gr**2), rel=1e-12)
    with pytest.raises(ValueError):
        true_error(tr, b, grid, tr.times + 1e-3, ref)
    assert x_norm([3.0, 4.0], [0.0, 0.0], [0.0, 1.0]) == 4.0


def test_best_approximation_decreases_with_n(grid, rng):
    u0 = taylor_green(grid) + random_field(grid, rng, kcut=4, norm=0.5)
    times, states = run_fom(grid, u0, 0.5, 0.02, 30)
    snaps = SnapshotSet(states, np.ones(len(states)))
    errs = [best_approximation_error(pod_basis(grid, snaps, n), grid, times, states) for n in (1, 2, 3, 5)]
    assert all(e1 >= e2 - 1e-12 for e1, e2 in zip(errs, errs[1:]))
    assert errs[-1] < errs[0]
