import numpy as np
import pytest

from certrom.certifier import (
    CertStepConfig,
    FlagTable,
    dissipation_defect,
    regime_ball_states,
    rom_theta_step,
    run_certified,
    skew_defect,
)
from certrom.reduced import (
    EddyViscosity,
    LinearDamping,
    NegativeDampingProbe,
    RegimeSet,
    SnapshotSet,
    assemble_reduced,
    basis_from_fields,
    lift,
    pod_basis,
    project,
)
from certrom.spectral import TorusGrid, fom_theta_step, fourier_basis, norms, random_field, run_fom, taylor_green


@pytest.fixture
def ops4(grid, rng):
    u0 = taylor_green(grid) + random_field(grid, rng, kcut=3, norm=0.2)
    _, states = run_fom(grid, u0, 0.5, 0.02, 25)
    b = pod_basis(grid, SnapshotSet(states, np.ones(len(states))), 4)
    return assemble_reduced(grid, b)


def test_config_domain():
    with pytest.raises(ValueError, match=r"\[1/2, 1\]"):
        CertStepConfig(theta=0.5 - 1e-12)
    CertStepConfig(theta=0.5)
    with pytest.raises(ValueError):
        CertStepConfig(dt=0)
    with pytest.raises(ValueError):
        CertStepConfig(young_epsilon=0.2).epsilon(0.1)
    assert CertStepConfig().epsilon(0.1) == 0.05
    assert CertStepConfig(solver_tol=1e-9).ledger_tol == pytest.approx(1e-8)


@pytest.mark.parametrize("closure", [None, LinearDamping(0.2), EddyViscosity(0.05, 5.0)])
def test_zero_forcing_step_decays(ops4, rng, closure):
    if closure is not None:
        ops4.closure = closure
    cfg = CertStepConfig(0.5, 0.05)
    a = rng.standard_normal(4)
    for k in range(10):
        a1, e = rom_theta_step(a, ops4, cfg, k * cfg.dt, k)
        assert e.energy_after <= e.energy_before + cfg.solver_tol
        assert e.inequality_slack >= -cfg.ledger_tol
        assert e.young_lhs <= e.young_rhs + cfg.ledger_tol
        a = a1


def test_full_dimension_rom_matches_fom():
    grid = TorusGrid(8, 0.1)
    phis, _ = fourier_basis(grid)
    b = basis_from_fields(phis)
    ops = assemble_reduced(grid, b)
    rng = np.random.default_rng(3)
    u = random_field(grid, rng, norm=1.0)
    cfg = CertStepConfig(0.5, 0.02, solver_tol=1e-12)
    a1, _ = rom_theta_step(project(b, u), ops, cfg)
    u1, _ = fom_theta_step(grid, u, 0.5, 0.02, solver_tol=1e-12)
    assert norms(grid, lift(b, a1) - u1)[0] <= 1e-10


def test_skew_defect(ops4, rng):
    assert skew_defect(ops4, np.zeros(4)) == 0.0
    assert max(skew_defect(ops4, a) for a in rng.standard_normal((100, 4))) <= 1e-12
    ops4.convection[0, 1, 2] += 0.1
    d = max(skew_defect(ops4, a) for a in regime_ball_states(4, 3.0, 100, rng))
    assert d > 1e-3


def test_dissipation_defect(ops4, rng):
    a = rng.standard_normal(4)
    assert dissipation_defect(LinearDamping(0.4), ops4, a) == 0.0
    assert dissipation_defect(NegativeDampingProbe(0.1), ops4, np.zeros(4)) == 0.0
    assert dissipation_defect(NegativeDampingProbe(0.1), ops4, a) == pytest.approx(0.1, rel=1e-14)


def test_regime_ball_states(rng):
    s = regime_ball_states(6, 2.5, 500, rng)
    assert s.shape == (500, 6)
    assert np.linalg.norm(s, axis=1).max() <= 2.5
    s2 = regime_ball_states(6, 2.5, 500, np.random.default_rng(1))
    s3 = regime_ball_states(6, 2.5, 500, np.random.default_rng(1))
    assert np.array_equal(s2, s3)


def test_run_certified_zero_forcing(ops4, rng):
    a0 = rng.standard_normal(4)
    tr = run_certified(a0, ops4, CertStepConfig(0.5, 0.02), 50, RegimeSet(10.0), seed=3)
    r = np.linalg.norm(tr.states, axis=1)
    assert r.max() <= r[0] * (1 + 1e-12)
    assert tr.flags.skew_ok and tr.flags.diss_ok and tr.flags.regime_ok
    assert tr.energy_bound_holds
    assert tr.energy_bound["lhs"] <= tr.energy_bound["rhs"] + 1e-9
    assert len(tr.ledger) == 50 and np.all(np.diff(tr.times) > 0)


def test_run_certified_forced_bound(grid, rng):
    from certrom.spectral import ForcingSpec

    u0 = taylor_green(grid)
    f = ForcingSpec(grid, constant=random_field(grid, rng, kcut=3, norm=2.0))
    _, states = run_fom(grid, u0, 0.5, 0.02, 25, forcing=f)
    b = pod_basis(grid, SnapshotSet(states, np.ones(len(states))), 4)
    ops = assemble_reduced(grid, b, forcing=f)
    assert not ops.forcing_is_zero
    tr = run_certified(project(b, u0), ops, CertStepConfig(0.5, 0.02), 50, RegimeSet(20.0))
    assert all(e.inequality_slack >= -1e-9 for e in tr.ledger)
    assert tr.energy_bound_holds
    assert np.isfinite(tr.energy_bound["lhs"]) and np.isfinite(tr.energy_bound["rhs"])


def test_leaving_regime_flags_but_continues(ops4, rng):
    a0 = rng.standard_normal(4)
    tr = run_certified(a0, ops4, CertStepConfig(0.5, 0.02), 10, RegimeSet(0.5 * np.linalg.norm(a0)))
    assert tr.flags.regime_ok is False
    assert tr.steps == 10


def test_negative_damping_probe_flags(ops4, rng):
    ops4.closure = NegativeDampingProbe(0.1)
    tr = run_certified(rng.standard_normal(4), ops4, CertStepConfig(0.5, 0.02), 5, RegimeSet(10.0))
    assert tr.flags.diss_ok is False
    assert tr.flags.max_diss_defect == pytest.approx(0.1, rel=1e-12)


def test_nonconvergence_truncates(ops4, rng):
    cfg = CertStepConfig(0.5, 5.0, max_iter=1)
    tr = run_certified(50 * rng.standard_normal(4), ops4, cfg, 5, RegimeSet(1e3))
    assert tr.uncertified_reason is not None
    assert tr.flags.regime_ok is False
    with pytest.raises(Exception):
        run_certified(50 * rng.standard_normal(4), ops4, cfg, 5, on_failure="abort")


def test_flag_table_semantics():
    t = FlagTable(skew_ok=True, diss_ok=True)
    assert t.certified and set(t.evaluated) == {"skew-ok", "diss-ok"}
    assert list(t.as_dict()) == ["skew-ok", "diss-ok", "margin-ok", "residual-computed", "regime-ok"]
    t.diss_ok = False
    assert not t.certified
