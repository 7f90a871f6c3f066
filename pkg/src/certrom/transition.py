"""Computable transition indicators: energy barrier, 2D enstrophy ball and
resolvent amplification proxy.

Every verdict is one-sided. A failed barrier is "not-decided", never
"unstable", and resolvent verdicts are tagged as a linear proxy.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .spectral import (
    POINCARE_CONSTANT,
    TorusGrid,
    convection_apply,
    curl_2d,
    fourier_basis,
    norms,
    stokes_apply,
)

__all__ = [
    "BaseFlow",
    "EnstrophyThresholdInput",
    "ResolventQuery",
    "SingularShift",
    "Verdict",
    "shear_constant",
    "energy_barrier_check",
    "enstrophy_threshold_check",
    "vorticity_norm",
    "linearized_operator",
    "resolvent_norm",
    "amplification_verdict",
    "sigma_sweep",
    "write_sweep_csv",
]

LINEAR_PROXY_CAVEAT = "linear proxy only"
GAMMA_REALIZATION = "gamma_U = C_P * max_x |grad U(x)|_2 on a 2x oversampled collocation grid"


class SingularShift(ValueError):
    """sigma is numerically in the spectrum of the linearized operator."""

    def __init__(self, sigma, smin, scale):
        super().__init__(f"sigma={sigma}: sigma_min={smin:.3e} below 1e-14 * {scale:.3e}")
        self.sigma = sigma
        self.sigma_min = smin


@dataclass
class Verdict:
    indicator: str
    verdict: str
    inequality: str
    constants: dict
    margin: float | None = None
    caveat: str | None = None

    def as_dict(self) -> dict:
        out = {
            "indicator": self.indicator,
            "verdict": self.verdict,
            "inequality": self.inequality,
            "constants": self.constants,
            "margin": self.margin,
        }
        if self.caveat:
            out["caveat"] = self.caveat
        return out


# --------------------------------------------------------------------------
# energy barrier


@dataclass
class BaseFlow:
    U: np.ndarray
    grad_sup: float
    gamma_U: float
    poincare: float = POINCARE_CONSTANT
    realization: str = GAMMA_REALIZATION


def _grad_sup(grid: TorusGrid, U: np.ndarray, refine: int) -> float:
    """max over an (refine*N)^2 grid of the spectral norm of grad U."""
    N, M = grid.N, refine * grid.N
    k = np.fft.fftfreq(N, 1.0 / N)
    # zero-pad into the finer grid; the active set sits well below both Nyquists
    idx = np.where(np.abs(k) < N // 2)[0]
    fi = (k[idx].astype(int)) % M
    J = np.empty((2, 2, M, M))
    for i in range(2):
        for j, kj in enumerate((grid.k1, grid.k2)):
            c = np.zeros((M, M), dtype=complex)
            c[np.ix_(fi, fi)] = (1j * kj * U[i])[np.ix_(idx, idx)]
            J[i, j] = np.fft.ifft2(c * (M**2 / (2 * np.pi))).real
    # largest singular value of a 2x2 real matrix, in the cancellation-free form
    a, b, c, d = J[0, 0], J[0, 1], J[1, 0], J[1, 1]
    smax = 0.5 * (np.hypot(a + d, c - b) + np.hypot(a - d, b + c))
    return float(smax.max())


def shear_constant(grid: TorusGrid, U: np.ndarray, refine: int = 2) -> BaseFlow:
    """Realize the shear bound |<(v.grad)U, v>| <= gamma_U ||v||_H ||v||_V."""
    if refine < 1:
        raise ValueError("refine must be >= 1")
    gs = _grad_sup(grid, np.asarray(U), refine)
    return BaseFlow(U=np.asarray(U), grad_sup=gs, gamma_U=POINCARE_CONSTANT * gs)


def energy_barrier_check(flow: BaseFlow, nu: float) -> Verdict:
    margin = nu - flow.gamma_U * flow.poincare
    return Verdict(
        indicator="energy-barrier",
        verdict="stable" if margin > 0 else "not-decided",
        inequality="nu > gamma_U * C_P",
        constants={
            "nu": {"value": float(nu), "provenance": "declared"},
            "gamma_U": {"value": flow.gamma_U, "provenance": "computed", "realization": flow.realization},
            "C_P": {"value": flow.poincare, "provenance": "computed", "note": "2pi-torus, lowest |k| = 1"},
        },
        margin=float(margin),
    )


# --------------------------------------------------------------------------
# enstrophy


@dataclass
class EnstrophyThresholdInput:
    nu: float
    G_times: np.ndarray
    G_values: np.ndarray
    R: float
    epsilon: float | None = None
    C_P_omega: float = 1.0
    omega0_norm: float | None = None
    dimension: int = 2

    def __post_init__(self):
        if self.dimension != 2:
            raise ValueError(
                f"enstrophy indicator is 2D only (got dimension {self.dimension}); "
                "vortex stretching is not sign-definite in 3D"
            )
        if self.epsilon is None:
            self.epsilon = self.nu / 2.0
        if not 0 < self.epsilon < self.nu:
            raise ValueError("epsilon must lie in (0, nu)")
        self.G_times = np.atleast_1d(np.asarray(self.G_times, dtype=float))
        self.G_values = np.atleast_1d(np.asarray(self.G_values, dtype=float))
        if np.any(self.G_values < 0):
            raise ValueError("G samples must be non-negative")
        if self.G_times.shape != self.G_values.shape:
            raise ValueError("G times and values differ in length")


def enstrophy_threshold_check(inp: EnstrophyThresholdInput) -> tuple[Verdict, float]:
    """Return the verdict and the smallest radius satisfying the threshold.

    G^2/(4 eps) <= (nu - eps) R^2 / (2 C^2) at every sample is equivalent to
    R >= G C / sqrt(2 eps (nu - eps)).
    """
    nu, eps, C = inp.nu, inp.epsilon, inp.C_P_omega
    Gmax = float(inp.G_values.max()) if inp.G_values.size else 0.0
    r_min = Gmax * C / math.sqrt(2 * eps * (nu - eps))
    lhs = inp.G_values**2 / (4 * eps)
    rhs = (nu - eps) * inp.R**2 / (2 * C**2)
    holds = bool(np.all(lhs <= rhs))
    start_ok = inp.omega0_norm is None or inp.omega0_norm <= inp.R
    v = Verdict(
        indicator="enstrophy-threshold",
        verdict="invariant" if holds and start_ok else "not-decided",
        inequality="G(t)^2/(4 eps) <= (nu - eps) R^2 / (2 C_P_omega^2) at every sample; ||omega(0)|| <= R",
        constants={
            "nu": {"value": float(nu), "provenance": "declared"},
            "epsilon": {"value": float(eps), "provenance": "declared"},
            "C_P_omega": {"value": float(C), "provenance": "computed", "note": "mean-free vorticity on the 2pi-torus"},
            "R": {"value": float(inp.R), "provenance": "declared"},
            "R_min": {"value": r_min, "provenance": "computed"},
            "G_max": {"value": Gmax, "provenance": "computed"},
            "omega0_norm": {"value": inp.omega0_norm, "provenance": "computed"},
        },
        margin=float(inp.R - r_min),
    )
    return v, r_min


def vorticity_norm(grid: TorusGrid, u_hat: np.ndarray) -> float:
    return float(np.sqrt(np.sum(np.abs(curl_2d(grid, u_hat)) ** 2)))


# --------------------------------------------------------------------------
# resolvent


@dataclass
class ResolventQuery:
    sigma: float
    truncation: int
    theta_threshold: float
    forcing_bound: float

    def __post_init__(self):
        if not self.sigma > 0:
            raise ValueError("sigma must be positive")
        if self.truncation < 1:
            raise ValueError("truncation must be >= 1")


@dataclass
class LinearizedOperator:
    matrix: np.ndarray
    basis: np.ndarray
    labels: list = field(default_factory=list)


def linearized_operator(grid: TorusGrid, U: np.ndarray, truncation: int) -> LinearizedOperator:
    """Galerkin matrix of L v = -nu A v - B(U, v) - B(v, U) on the real
    orthonormal Fourier basis with |k|_inf <= truncation."""
    if truncation > grid.kmax:
        raise ValueError(f"truncation {truncation} exceeds the dealiased range {grid.kmax}")
    phis, labels = fourier_basis(grid, truncation)
    U = np.asarray(U)
    cols = []
    for p in phis:
        Lp = -grid.nu * stokes_apply(grid, p)
        if np.any(U):
            Lp = Lp - convection_apply(grid, U, p) - convection_apply(grid, p, U)
        cols.append(Lp)
    R = phis.reshape(len(phis), -1)
    C = np.stack(cols).reshape(len(phis), -1)
    L = np.real(R.conj() @ C.T)  # L[i, j] = <phi_i, L phi_j>
    return LinearizedOperator(matrix=L, basis=phis, labels=labels)


def resolvent_norm(op, sigma: float) -> float:
    L = op.matrix if isinstance(op, LinearizedOperator) else np.asarray(op, dtype=float)
    S = sigma * np.eye(L.shape[0]) - L
    sv = np.linalg.svd(S, compute_uv=False)
    if sv[-1] < 1e-14 * sv[0]:
        raise SingularShift(sigma, sv[-1], sv[0])
    return float(1.0 / sv[-1])


def amplification_verdict(query: ResolventQuery, norm: float) -> Verdict:
    amp = norm * query.forcing_bound
    return Verdict(
        indicator="resolvent-proxy",
        verdict="amplification-certified" if amp > query.theta_threshold else "below-threshold",
        inequality="||R_U(sigma)|| * sup ||g||_H > Theta",
        constants={
            "sigma": {"value": float(query.sigma), "provenance": "declared"},
            "resolvent_norm": {"value": float(norm), "provenance": "computed",
                               "method": f"1/sigma_min of sigma I - L, |k|_inf <= {query.truncation}"},
            "forcing_bound": {"value": float(query.forcing_bound), "provenance": "declared"},
            "Theta": {"value": float(query.theta_threshold), "provenance": "declared"},
        },
        margin=float(amp - query.theta_threshold),
        caveat=LINEAR_PROXY_CAVEAT,
    )


def sigma_sweep(op, sigmas) -> list[tuple[float, float]]:
    return [(float(s), resolvent_norm(op, s)) for s in sigmas]


def write_sweep_csv(rows) -> str:
    lines = ["sigma,resolvent_norm"]
    lines += [f"{s!r},{r!r}" for s, r in rows]
    return "\n".join(lines) + "\n"


def forcing_curl_norms(grid: TorusGrid, forcing, times) -> np.ndarray:
    """G(t) = ||curl f(t)|| at the given sample times."""
    return np.array([vorticity_norm(grid, forcing(t)) for t in times])
