"""Residual-based a posteriori bound, conditional a priori rate, and
true-error evaluation against a full-order reference."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .certifier import CertifiedTrajectory
from .reduced import ReducedOperators, RomBasis, closure_eval, lift, project
from .spectral import ForcingSpec, TorusGrid, convection_apply, leray_project, norms, stokes_apply

__all__ = [
    "ResidualSeries",
    "ErrorCertificate",
    "AprioriReport",
    "time_derivative",
    "residual_series",
    "eta_estimator",
    "convective_lipschitz",
    "aposteriori_bound",
    "apriori_report",
    "x_norm",
    "true_error",
    "trapezoid",
]

QUADRATURE_RULE = "trapezoid-on-step-nodes"
RIESZ_METHOD = "diagonal Fourier multiplier 1/|k| after Leray projection (exact; solver tolerance 0)"


@dataclass
class ResidualSeries:
    times: np.ndarray
    dual_norms: np.ndarray
    quadrature: str = QUADRATURE_RULE
    operator_fingerprint: str = ""
    computed_with_trajectory_operators: bool = False

    @property
    def residual_computed(self) -> bool:
        return bool(self.computed_with_trajectory_operators and np.all(np.isfinite(self.dual_norms)))


@dataclass
class ErrorCertificate:
    eta: float
    residual_l2: float
    initial_mismatch: float
    L_n: float
    L_n_provenance: str
    L_C: float
    M_n: float
    nu: float
    T: float
    gronwall_factor: float
    bound: float
    true_error: float | None = None
    effectivity: float | None = None

    @property
    def label(self) -> str:
        return "estimated" if self.L_n_provenance == "estimated" else "certified"


@dataclass
class AprioriReport:
    epsilon_n: float
    epsilon_source: str  # "pod-tail-surrogate" | "exact-against-reference"
    L_reg: float
    C_pr: float
    bound: float


def trapezoid(values, times) -> float:
    values = np.asarray(values, dtype=float)
    times = np.asarray(times, dtype=float)
    if len(values) < 2:
        return 0.0
    return float(np.sum(0.5 * (values[1:] + values[:-1]) * np.diff(times)))


def time_derivative(states: np.ndarray, dt: float) -> np.ndarray:
    """Second-order nodal difference quotients of a uniformly stepped series.

    Centered in the interior, one-sided three-point at the two ends.
    """
    states = np.asarray(states)
    K = len(states) - 1
    if K < 1:
        raise ValueError("need at least two states")
    d = np.empty_like(states, dtype=float)
    if K == 1:
        d[0] = d[1] = (states[1] - states[0]) / dt
        return d
    d[1:-1] = (states[2:] - states[:-2]) / (2 * dt)
    d[0] = (-3 * states[0] + 4 * states[1] - states[2]) / (2 * dt)
    d[-1] = (3 * states[-1] - 4 * states[-2] + states[-3]) / (2 * dt)
    return d


def residual_series(
    traj: CertifiedTrajectory,
    basis: RomBasis,
    ops: ReducedOperators,
    grid: TorusGrid,
    forcing: ForcingSpec | None = None,
) -> ResidualSeries:
    """Dual norm of the continuous-time residual at every step node.

    The residual of the lifted trajectory is assembled in the full spectral
    space: d/dt u_n + nu A u_n + B(u_n, u_n) + C_n(u_n) - P_n f, with the time
    derivative reconstructed at second order from the discrete states.
    """
    if traj.states.shape[1] != basis.n or ops.n != basis.n:
        raise ValueError("trajectory, basis and operators disagree on the reduced dimension")
    states = traj.states
    dt = traj.config.dt
    da = time_derivative(states, dt)
    out = np.empty(len(states))
    for k, (a, ad) in enumerate(zip(states, da)):
        t = traj.times[k]
        u = lift(basis, a)
        r = lift(basis, ad + closure_eval(ops.closure, ops, a))
        r = r + grid.nu * stokes_apply(grid, u) + convection_apply(grid, u, u)
        if forcing is not None and not forcing.is_zero:
            r = r - lift(basis, project(basis, forcing(t)))
        out[k] = norms(grid, leray_project(grid, r))[2]
    return ResidualSeries(
        times=np.asarray(traj.times, dtype=float),
        dual_norms=out,
        operator_fingerprint=ops.fingerprint(),
        computed_with_trajectory_operators=ops.fingerprint() == traj.ops_fingerprint,
    )


def eta_estimator(res: ResidualSeries, u0, basis: RomBasis, grid: TorusGrid, nu: float) -> tuple[float, float, float]:
    """Return ``(eta, residual L2(0,T;V') norm, nu * ||(I - P_n) u0||)``."""
    rl2 = math.sqrt(trapezoid(res.dual_norms**2, res.times))
    rest = u0 - lift(basis, project(basis, u0))
    init = nu * norms(grid, rest)[0]
    return rl2 + init, rl2, init


def convective_lipschitz(
    grid: TorusGrid,
    basis: RomBasis | None = None,
    traj: CertifiedTrajectory | None = None,
    reference: np.ndarray | None = None,
    mode: str = "estimated",
    declared: float | None = None,
    trials: int = 200,
    regime_radius: float | None = None,
    rng: np.random.Generator | None = None,
    return_history: bool = False,
):
    """Constant L_n in |<B(u,u) - B(v,v), w>| <= L_n ||u - v||_H ||w||_V.

    ``declared`` mode passes a user constant through. ``estimated`` mode is a
    seeded random search: u is drawn from the reference states, the
    trajectory, or the regime ball; v from the trajectory or the ball. The
    supremum over w is exact (dual norm of the representer).
    """
    if mode == "declared":
        if declared is None:
            raise ValueError("declared mode needs a constant")
        return (float(declared), "declared", [float(declared)]) if return_history else (float(declared), "declared")
    if mode != "estimated":
        raise ValueError(f"unknown mode {mode!r}")
    if trials < 1:
        raise ValueError("trials must be >= 1")
    rng = np.random.default_rng(0) if rng is None else rng
    pool_u, pool_v = [], []
    if traj is not None and basis is not None:
        pool_v.extend(lift(basis, a) for a in traj.states)
    if reference is not None:
        pool_u.extend(reference)
    pool_u.extend(pool_v)
    n = basis.n if basis is not None else 0
    R = regime_radius
    if R is None and traj is not None:
        R = float(np.linalg.norm(traj.states, axis=1).max())

    def draw(pool):
        if pool and (n == 0 or rng.random() < 0.5):
            return pool[rng.integers(len(pool))]
        if n == 0 or not R:
            return grid.zeros()
        g = rng.standard_normal(n)
        g *= R * rng.random() ** (1.0 / n) / np.linalg.norm(g)
        return lift(basis, g)

    best = 0.0
    history = []
    for _ in range(trials):
        u, v = draw(pool_u), draw(pool_v)
        e = u - v
        el2 = norms(grid, e)[0]
        if el2 > 1e-14 * max(norms(grid, u)[0], norms(grid, v)[0], 1e-300):
            g = convection_apply(grid, u, u) - convection_apply(grid, v, v)
            best = max(best, norms(grid, g)[2] / el2)
        history.append(best)
    if return_history:
        return best, "estimated", history
    return best, "estimated"


def aposteriori_bound(eta: float, L_n: float, L_C: float, nu: float, T: float) -> float:
    if not nu > 0:
        raise ValueError("nu must be positive")
    return math.sqrt(2.0 / nu) * math.exp((L_n + L_C) * T / nu) * eta


def apriori_report(epsilon_n: float, L_reg: float, nu: float, T: float,
                   source: str = "pod-tail-surrogate") -> AprioriReport:
    if L_reg < 0:
        raise ValueError("L_reg must be non-negative")
    C = math.exp(L_reg * T / nu)
    return AprioriReport(float(epsilon_n), source, float(L_reg), C, C * float(epsilon_n))


def x_norm(l2: np.ndarray, grad: np.ndarray, times: np.ndarray) -> float:
    """sqrt(max_t ||w||_H^2 + int ||grad w||^2 dt) from sampled norms."""
    l2 = np.asarray(l2, dtype=float)
    grad = np.asarray(grad, dtype=float)
    return math.sqrt(float(np.max(l2**2)) + trapezoid(grad**2, times))


def true_error(traj: CertifiedTrajectory, basis: RomBasis, grid: TorusGrid,
               ref_times: np.ndarray, ref_states: np.ndarray) -> float:
    """X(0,T)-norm of u_ref - lift(a) on the shared time grid."""
    if len(ref_times) != len(traj.times) or not np.allclose(ref_times, traj.times, rtol=0, atol=1e-12):
        raise ValueError("reference and ROM time grids do not match")
    l2, gr = [], []
    for a, u in zip(traj.states, ref_states):
        n = norms(grid, u - lift(basis, a))
        l2.append(n[0])
        gr.append(n[1])
    return x_norm(np.array(l2), np.array(gr), traj.times)


def best_approximation_error(basis: RomBasis, grid: TorusGrid, times, ref_states) -> float:
    """inf over span(basis) of ||u_ref - v||_{L2(0,T;V)}, computed exactly.

    The basis is orthonormal in H, not V, so the V-best approximation at each
    time solves the small Galerkin system with the reduced Stokes matrix.
    """
    phis = basis.basis
    A = np.array([[np.real(np.vdot(p, stokes_apply(grid, q))) for q in phis] for p in phis])
    vals = []
    for u in ref_states:
        rhs = np.array([np.real(np.vdot(p, stokes_apply(grid, u))) for p in phis])
        c = np.linalg.solve(A, rhs)
        vals.append(norms(grid, u - lift(basis, c))[1] ** 2)
    return math.sqrt(trapezoid(np.array(vals), times))
