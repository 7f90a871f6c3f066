"""Certified theta-scheme for the reduced model, per-step energy ledger,
structure-defect monitors and the failure-flag table."""

from __future__ import annotations

from dataclasses import asdict, dataclass, field

import numpy as np

from .reduced import ReducedOperators, RegimeSet, closure_eval, closure_jacobian
from .spectral import NonConvergence

__all__ = [
    "CertStepConfig",
    "LedgerEntry",
    "FlagTable",
    "CertifiedTrajectory",
    "rom_theta_step",
    "skew_defect",
    "dissipation_defect",
    "regime_ball_states",
    "run_certified",
    "DEFECT_THRESHOLD",
    "FLAG_NAMES",
]

DEFECT_THRESHOLD = 1e-10
MACHINE_EPS = float(np.finfo(float).eps)
FLAG_NAMES = ("skew-ok", "diss-ok", "margin-ok", "residual-computed", "regime-ok")


@dataclass(frozen=True)
class CertStepConfig:
    theta: float = 0.5
    dt: float = 1e-2
    solver_tol: float = 1e-10
    max_iter: int = 100
    young_epsilon: float | None = None
    machine_guard: float = MACHINE_EPS

    def __post_init__(self):
        if not 0.5 <= self.theta <= 1.0:
            raise ValueError(
                f"theta={self.theta} outside [1/2, 1]: the scheme is only certified for theta in [1/2, 1]"
            )
        if not self.dt > 0:
            raise ValueError("dt must be positive")
        if not self.solver_tol > 0:
            raise ValueError("solver_tol must be positive")
        if self.max_iter < 1:
            raise ValueError("max_iter must be >= 1")

    def epsilon(self, nu: float) -> float:
        eps = nu / 2.0 if self.young_epsilon is None else self.young_epsilon
        if not 0 < eps < nu:
            raise ValueError(f"Young parameter must lie in (0, nu={nu}), got {eps}")
        return eps

    @property
    def ledger_tol(self) -> float:
        return 10.0 * self.solver_tol


@dataclass
class LedgerEntry:
    step: int
    time: float
    energy_before: float
    energy_after: float
    viscous_dissipation: float
    closure_dissipation: float
    forcing_work: float
    inequality_slack: float
    young_lhs: float
    young_rhs: float
    forcing_dual_sq: float
    grad_sq_theta: float
    skew_defect_obs: float
    diss_defect_obs: float
    solver_iters: int

    CSV_COLUMNS = (
        "step", "time", "energy_before", "energy_after", "viscous_dissipation",
        "closure_dissipation", "forcing_work", "inequality_slack", "young_lhs",
        "young_rhs", "skew_defect_obs", "diss_defect_obs", "solver_iters",
    )


@dataclass
class FlagTable:
    """Boolean verdicts; ``None`` marks a flag whose stage was not requested."""

    skew_ok: bool | None = None
    diss_ok: bool | None = None
    margin_ok: bool | None = None
    residual_computed: bool | None = None
    regime_ok: bool | None = None
    max_skew_defect: float | None = None
    max_diss_defect: float | None = None
    threshold: float = DEFECT_THRESHOLD
    regime_qualifier: str | None = None

    def as_dict(self) -> dict:
        return {
            "skew-ok": self.skew_ok,
            "diss-ok": self.diss_ok,
            "margin-ok": self.margin_ok,
            "residual-computed": self.residual_computed,
            "regime-ok": self.regime_ok,
        }

    @property
    def evaluated(self) -> dict:
        return {k: v for k, v in self.as_dict().items() if v is not None}

    @property
    def certified(self) -> bool:
        return all(self.evaluated.values())


@dataclass
class CertifiedTrajectory:
    times: np.ndarray
    states: np.ndarray
    ledger: list
    flags: FlagTable
    config: CertStepConfig
    ops_fingerprint: str
    energy_bound: dict
    young_epsilon: float
    regime_radius: float | None = None
    uncertified_reason: str | None = None
    test_set_size: int = 0
    extra: dict = field(default_factory=dict)

    @property
    def energy_bound_holds(self) -> bool:
        """Cumulative energy bound, checked at every horizon k <= K."""
        return self.energy_bound["min_slack"] >= -self.config.ledger_tol

    @property
    def steps(self) -> int:
        return len(self.ledger)

    def ledger_rows(self):
        for e in self.ledger:
            d = asdict(e)
            yield [d[c] for c in LedgerEntry.CSV_COLUMNS]


# --------------------------------------------------------------------------
# defects


def skew_defect(ops: ReducedOperators, a: np.ndarray, guard: float = MACHINE_EPS) -> float:
    a = np.asarray(a, dtype=float)
    r = np.linalg.norm(a)
    return float(abs(a @ ops.nonlinear(a)) / (r**3 + guard))


def dissipation_defect(closure, ops: ReducedOperators, a: np.ndarray, guard: float = MACHINE_EPS) -> float:
    a = np.asarray(a, dtype=float)
    r = np.linalg.norm(a)
    return float(max(0.0, -(closure_eval(closure, ops, a) @ a)) / (r**2 + guard))


def regime_ball_states(n: int, radius: float, count: int, rng: np.random.Generator) -> np.ndarray:
    """Uniform samples from the coefficient ball of the given radius."""
    g = rng.standard_normal((count, n))
    g /= np.linalg.norm(g, axis=1, keepdims=True)
    r = radius * rng.random(count) ** (1.0 / n)
    return g * r[:, None]


# --------------------------------------------------------------------------
# stepping


def _dual_sq(ops: ReducedOperators, f: np.ndarray) -> float:
    if not np.any(f):
        return 0.0
    return float(f @ np.linalg.solve(ops.stokes, f))


def rom_theta_step(a_prev, ops: ReducedOperators, cfg: CertStepConfig, t: float = 0.0, step: int = 0):
    """One certified theta-step solved by Newton's method.

    Returns ``(a_next, LedgerEntry)``; both sides of the discrete energy
    inequality and of its Young form are evaluated on the converged state.
    """
    a0 = np.asarray(a_prev, dtype=float)
    th, dt, nu = cfg.theta, cfg.dt, ops.nu
    f = ops.forcing(t + th * dt)
    closure = ops.closure
    n = ops.n
    I = np.eye(n)

    def G(a1):
        am = th * a1 + (1 - th) * a0
        return a1 - a0 + dt * (nu * ops.stokes @ am + ops.nonlinear(am) + closure_eval(closure, ops, am) - f)

    a1 = a0.copy()
    scale = max(np.linalg.norm(a0), np.finfo(float).tiny)
    inc = np.inf
    for it in range(1, cfg.max_iter + 1):
        am = th * a1 + (1 - th) * a0
        J = I + dt * th * (nu * ops.stokes + ops.nonlinear_jacobian(am) + closure_jacobian(closure, ops, am))
        da = np.linalg.solve(J, -G(a1))
        a1 = a1 + da
        inc = np.linalg.norm(da) / scale
        if inc <= cfg.solver_tol:
            break
    else:
        raise NonConvergence(cfg.max_iter, inc)

    am = th * a1 + (1 - th) * a0
    e0, e1 = 0.5 * a0 @ a0, 0.5 * a1 @ a1
    grad_sq = float(am @ ops.stokes @ am)
    visc = nu * dt * grad_sq
    clos = dt * float(closure_eval(closure, ops, am) @ am)
    work = dt * float(f @ am)
    eps = cfg.epsilon(nu)
    fdual = _dual_sq(ops, f)
    entry = LedgerEntry(
        step=step,
        time=t + dt,
        energy_before=float(e0),
        energy_after=float(e1),
        viscous_dissipation=float(visc),
        closure_dissipation=clos,
        forcing_work=work,
        inequality_slack=float(work - (e1 - e0 + visc + clos)),
        young_lhs=float(e1 - e0 + (nu - eps) * dt * grad_sq),
        young_rhs=float(dt / (4 * eps) * fdual),
        forcing_dual_sq=fdual,
        grad_sq_theta=grad_sq,
        skew_defect_obs=skew_defect(ops, am, cfg.machine_guard),
        diss_defect_obs=dissipation_defect(closure, ops, am, cfg.machine_guard),
        solver_iters=it,
    )
    return a1, entry


def run_certified(
    a0,
    ops: ReducedOperators,
    cfg: CertStepConfig,
    steps: int,
    regime: RegimeSet | None = None,
    seed: int = 0,
    test_set_size: int = 100,
    on_failure: str = "record",
) -> CertifiedTrajectory:
    """March ``steps`` certified steps and compute the flag evidence.

    Defects are monitored on the trajectory (theta-states and nodes) plus a
    seeded batch of regime-ball states. A solver failure truncates the run
    and marks it uncertified; ``on_failure="abort"`` re-raises instead.
    """
    a = np.asarray(a0, dtype=float)
    states = [a]
    times = [0.0]
    ledger = []
    reason = None
    for k in range(steps):
        try:
            a, entry = rom_theta_step(a, ops, cfg, k * cfg.dt, k)
        except (NonConvergence, np.linalg.LinAlgError) as exc:
            if on_failure == "abort":
                raise
            reason = f"step {k}: {exc}"
            break
        states.append(a)
        times.append((k + 1) * cfg.dt)
        ledger.append(entry)
    states = np.array(states)

    radius = regime.coefficient_radius if regime is not None else None
    test_radius = radius if radius is not None else max(1.0, float(np.linalg.norm(states, axis=1).max()))
    rng = np.random.default_rng(seed)
    probe = regime_ball_states(ops.n, test_radius, test_set_size, rng)
    test_states = np.concatenate([states, probe])
    guard = cfg.machine_guard
    max_skew = max(
        max((skew_defect(ops, s, guard) for s in test_states), default=0.0),
        max((e.skew_defect_obs for e in ledger), default=0.0),
    )
    max_diss = max(
        max((dissipation_defect(ops.closure, ops, s, guard) for s in test_states), default=0.0),
        max((e.diss_defect_obs for e in ledger), default=0.0),
    )

    eps = cfg.epsilon(ops.nu)
    norms_sq = np.sum(states**2, axis=1)
    visc_cum = np.concatenate([[0.0], np.cumsum([cfg.dt * e.grad_sq_theta for e in ledger])])
    forc_cum = np.concatenate([[0.0], np.cumsum([cfg.dt * e.forcing_dual_sq for e in ledger])])
    # summed inequality at every horizon k: ||a^k||^2 + 2(nu-eps) sum_{j<k} <= ||a^0||^2 + sum_{j<k}/(2 eps)
    lhs_k = norms_sq + 2 * (ops.nu - eps) * visc_cum
    rhs_k = norms_sq[0] + forc_cum / (2 * eps)
    bound = {
        "lhs": float(lhs_k.max()),
        "rhs": float(rhs_k[-1]),
        "min_slack": float(np.min(rhs_k - lhs_k)),
        "literal_lhs": float(norms_sq.max() + 2 * (ops.nu - eps) * visc_cum[-1]),
        "literal_rhs": float(rhs_k[-1]),
    }
    in_regime = True if regime is None else all(regime.contains(s) for s in states)
    ledger_ok = all(e.inequality_slack >= -cfg.ledger_tol for e in ledger)
    flags = FlagTable(
        skew_ok=bool(max_skew <= DEFECT_THRESHOLD),
        diss_ok=bool(max_diss <= DEFECT_THRESHOLD),
        regime_ok=bool(in_regime and reason is None),
        max_skew_defect=float(max_skew),
        max_diss_defect=float(max_diss),
    )
    if reason is None and not ledger_ok:
        reason = "energy ledger slack below tolerance"
    return CertifiedTrajectory(
        times=np.array(times),
        states=states,
        ledger=ledger,
        flags=flags,
        config=cfg,
        ops_fingerprint=ops.fingerprint(),
        energy_bound=bound,
        young_epsilon=eps,
        regime_radius=radius,
        uncertified_reason=reason,
        test_set_size=test_set_size,
        extra={"ledger_ok": ledger_ok},
    )
