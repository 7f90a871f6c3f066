import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from certrom.spectral import TorusGrid, random_field, taylor_green, to_physical
from certrom.transition import (
    EnstrophyThresholdInput,
    ResolventQuery,
    SingularShift,
    amplification_verdict,
    energy_barrier_check,
    enstrophy_threshold_check,
    linearized_operator,
    resolvent_norm,
    shear_constant,
    sigma_sweep,
    vorticity_norm,
    write_sweep_csv,
)


def test_taylor_green_shear_constant(grid):
    # grad of (sin x cos y, -cos x sin y) has spectral norm exactly 1 at x = y = 0
    for refine in (1, 2, 4):
        assert shear_constant(grid, taylor_green(grid), refine).gamma_U == pytest.approx(1.0, rel=1e-12)
    assert shear_constant(grid, 0.3 * taylor_green(grid)).gamma_U == pytest.approx(0.3, rel=1e-12)
    assert shear_constant(grid, grid.zeros()).gamma_U == 0.0


def test_shear_constant_upper_bounds_skew_form(grid, rng):
    from certrom.spectral import convection_apply, inner, norms

    U = random_field(grid, rng, kcut=3, norm=1.0)
    g = shear_constant(grid, U, refine=4).gamma_U
    for _ in range(50):
        v = random_field(grid, rng, kcut=5, norm=1.0)
        lhs = abs(inner(convection_apply(grid, v, U), v))
        l2, gr, _ = norms(grid, v)
        assert lhs <= g * l2 * gr * (1 + 1e-10)


def test_energy_barrier_verdicts(grid):
    flow = shear_constant(grid, 0.01 * taylor_green(grid))
    v = energy_barrier_check(flow, 0.1)
    assert v.verdict == "stable" and v.margin == pytest.approx(0.09, rel=1e-10)
    v = energy_barrier_check(shear_constant(grid, taylor_green(grid)), 0.1)
    assert v.verdict == "not-decided"
    assert "unstable" not in v.as_dict().values()


def test_enstrophy_threshold_closed_form():
    inp = EnstrophyThresholdInput(nu=1.0, G_times=[0, 1], G_values=[0.5, 1.0], R=2.0)
    v, rmin = enstrophy_threshold_check(inp)
    # eps = nu/2: R_min = G C / sqrt(2 * 1/2 * 1/2) = sqrt(2)
    assert rmin == pytest.approx(math.sqrt(2), rel=1e-15)
    assert v.verdict == "invariant"
    v, _ = enstrophy_threshold_check(EnstrophyThresholdInput(1.0, [0], [1.0], R=1.4))
    assert v.verdict == "not-decided"
    v, _ = enstrophy_threshold_check(EnstrophyThresholdInput(1.0, [0], [1.0], R=2.0, omega0_norm=3.0))
    assert v.verdict == "not-decided"


@given(st.floats(0.01, 10), st.floats(0.05, 0.95), st.floats(0, 100), st.floats(0.1, 100))
def test_enstrophy_rmin_is_the_threshold(nu, frac, G, R):
    inp = EnstrophyThresholdInput(nu, [0.0], [G], R, epsilon=frac * nu)
    v, rmin = enstrophy_threshold_check(inp)
    if R > rmin * (1 + 1e-9):
        assert v.verdict == "invariant"
    elif R < rmin * (1 - 1e-9):
        assert v.verdict == "not-decided"


def test_enstrophy_rejects_3d_and_bad_eps():
    with pytest.raises(ValueError, match="2D"):
        EnstrophyThresholdInput(1.0, [0], [1.0], 1.0, dimension=3)
    with pytest.raises(ValueError):
        EnstrophyThresholdInput(1.0, [0], [1.0], 1.0, epsilon=1.0)


def test_vorticity_norm_taylor_green(grid):
    # curl of TG is -2 sin x sin y, whose L2 norm is 2 * pi
    assert vorticity_norm(grid, taylor_green(grid)) == pytest.approx(2 * math.pi, rel=1e-12)


def test_resolvent_zero_base_flow():
    grid = TorusGrid(16, 0.2)
    op = linearized_operator(grid, grid.zeros(), 3)
    for s in (0.05, 0.5, 3.0):
        assert resolvent_norm(op, s) == pytest.approx(1 / (s + 0.2), rel=1e-13)


def test_linearized_matches_direct_application(grid, rng):
    from certrom.spectral import convection_apply, stokes_apply

    U = random_field(grid, rng, kcut=2, norm=0.5)
    op = linearized_operator(grid, U, 2)
    c = rng.standard_normal(len(op.basis))
    v = np.tensordot(c, op.basis, axes=1)
    Lv = -grid.nu * stokes_apply(grid, v) - convection_apply(grid, U, v) - convection_apply(grid, v, U)
    proj = np.array([np.real(np.vdot(p, Lv)) for p in op.basis])
    assert np.allclose(op.matrix @ c, proj, atol=1e-12)


def test_singular_shift():
    L = np.diag([-1.0, 0.5])
    with pytest.raises(SingularShift):
        resolvent_norm(L, 0.5)
    assert resolvent_norm(L, 1.5) == pytest.approx(1.0)


def test_amplification_verdict_and_sweep(tmp_path):
    L = np.diag([-1.0, -0.1])
    q = ResolventQuery(sigma=0.1, truncation=1, theta_threshold=4.0, forcing_bound=1.0)
    v = amplification_verdict(q, resolvent_norm(L, 0.1))
    assert v.verdict == "amplification-certified" and v.caveat == "linear proxy only"
    q2 = ResolventQuery(sigma=0.1, truncation=1, theta_threshold=6.0, forcing_bound=1.0)
    assert amplification_verdict(q2, 5.0).verdict == "below-threshold"
    rows = sigma_sweep(L, [0.1, 0.9])
    assert rows == [(0.1, pytest.approx(5.0)), (0.9, pytest.approx(1.0))]
    text = write_sweep_csv(rows)
    assert text.splitlines()[0] == "sigma,resolvent_norm"
    assert float(text.splitlines()[1].split(",")[1]) == rows[0][1]
    with pytest.raises(ValueError):
        ResolventQuery(sigma=0.0, truncation=1, theta_threshold=1, forcing_bound=1)
