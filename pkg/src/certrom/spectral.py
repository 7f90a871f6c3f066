"""Fourier-Galerkin discretization of 2D incompressible Navier-Stokes on the
2pi-periodic torus.

Velocity fields are stored as complex arrays of shape ``(2, N, N)`` holding
scaled FFT coefficients ``c = 2*pi * fft2(u) / N**2``. With this scaling the
discrete inner product ``Re sum(conj(c_u) * c_v)`` equals the physical
``integral(u . v)`` for band-limited fields.

All fields live in the dealiased active set ``|k1|, |k2| <= kmax``, ``k != 0``;
the set is closed under ``k -> -k`` so real fields stay real.
"""

from __future__ import annotations

import io
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np

__all__ = [
    "TorusGrid",
    "ForcingSpec",
    "NonConvergence",
    "StepInfo",
    "leray_project",
    "stokes_apply",
    "skew_trilinear",
    "convection_apply",
    "curl_2d",
    "norms",
    "inner",
    "fom_theta_step",
    "run_fom",
    "taylor_green",
    "random_field",
    "fourier_basis",
    "to_physical",
    "from_physical",
    "write_state_csv",
    "read_state_csv",
]

TWO_PI = 2.0 * np.pi
POINCARE_CONSTANT = 1.0
STATE_FORMAT_VERSION = "certrom-state-v1"


class NonConvergence(RuntimeError):
    """Raised when an implicit step fails to reach the solver tolerance."""

    def __init__(self, iterations, residual):
        super().__init__(
            f"implicit step did not converge: {iterations} iterations, "
            f"final relative increment {residual:.3e}"
        )
        self.iterations = iterations
        self.residual = residual


@dataclass(frozen=True)
class TorusGrid:
    """N x N Fourier grid on [0, 2pi)^2 with viscosity ``nu``."""

    modes_per_dim: int
    viscosity: float
    dealias_fraction: float = 2.0 / 3.0

    def __post_init__(self):
        N = self.modes_per_dim
        if int(N) != N or N < 4 or N % 2:
            raise ValueError(f"modes_per_dim must be an even integer >= 4, got {N}")
        if not self.viscosity > 0:
            raise ValueError(f"viscosity must be positive, got {self.viscosity}")
        if not 0 < self.dealias_fraction <= 1:
            raise ValueError("dealias_fraction must lie in (0, 1]")
        if self.kmax < 1:
            raise ValueError("dealias fraction leaves no active modes")

    @property
    def N(self) -> int:
        return int(self.modes_per_dim)

    @property
    def nu(self) -> float:
        return float(self.viscosity)

    @property
    def poincare(self) -> float:
        return POINCARE_CONSTANT

    @cached_property
    def kmax(self) -> int:
        # largest integer strictly below fraction * N / 2
        bound = self.dealias_fraction * self.modes_per_dim / 2.0
        k = int(np.floor(bound))
        if k >= bound:
            k -= 1
        return k

    @cached_property
    def k1(self) -> np.ndarray:
        k = np.fft.fftfreq(self.N, 1.0 / self.N)
        return np.broadcast_to(k[:, None], (self.N, self.N)).copy()

    @cached_property
    def k2(self) -> np.ndarray:
        k = np.fft.fftfreq(self.N, 1.0 / self.N)
        return np.broadcast_to(k[None, :], (self.N, self.N)).copy()

    @cached_property
    def ksq(self) -> np.ndarray:
        return self.k1**2 + self.k2**2

    @cached_property
    def mask(self) -> np.ndarray:
        m = (np.abs(self.k1) <= self.kmax) & (np.abs(self.k2) <= self.kmax)
        m[0, 0] = False
        return m

    @cached_property
    def inv_ksq(self) -> np.ndarray:
        out = np.zeros_like(self.ksq)
        out[self.mask] = 1.0 / self.ksq[self.mask]
        return out

    @cached_property
    def x(self) -> np.ndarray:
        return np.arange(self.N) * TWO_PI / self.N

    @property
    def dimension(self) -> int:
        """Real dimension of the discrete solenoidal space."""
        return int(self.mask.sum())

    def zeros(self) -> np.ndarray:
        return np.zeros((2, self.N, self.N), dtype=complex)


# --------------------------------------------------------------------------
# transforms


def to_physical(grid: TorusGrid, coeffs: np.ndarray) -> np.ndarray:
    """Scaled coefficients -> real grid values (last two axes)."""
    return np.fft.ifft2(coeffs * (grid.N**2 / TWO_PI), axes=(-2, -1)).real


def from_physical(grid: TorusGrid, values: np.ndarray) -> np.ndarray:
    """Real grid values -> scaled coefficients (unmasked)."""
    return np.fft.fft2(values, axes=(-2, -1)) * (TWO_PI / grid.N**2)


def _gradient(grid: TorusGrid, u_hat: np.ndarray) -> np.ndarray:
    """Grid values of du_i/dx_j as an array indexed [i, j]."""
    dk = np.stack([1j * grid.k1, 1j * grid.k2])
    return to_physical(grid, u_hat[:, None] * dk[None, :])


def _quadrature(grid: TorusGrid, values: np.ndarray) -> float:
    return float(values.sum() * (TWO_PI / grid.N) ** 2)


# --------------------------------------------------------------------------
# linear operators


def leray_project(grid: TorusGrid, u_hat: np.ndarray) -> np.ndarray:
    """Remove the gradient part mode by mode and restrict to the active set."""
    div = grid.k1 * u_hat[0] + grid.k2 * u_hat[1]
    out = np.empty_like(u_hat, dtype=complex)
    out[0] = u_hat[0] - div * grid.k1 * grid.inv_ksq
    out[1] = u_hat[1] - div * grid.k2 * grid.inv_ksq
    out[:, ~grid.mask] = 0.0
    return out


def stokes_apply(grid: TorusGrid, u_hat: np.ndarray) -> np.ndarray:
    """Discrete Stokes operator: multiplication by |k|^2."""
    return grid.ksq * u_hat


def inner(u_hat: np.ndarray, v_hat: np.ndarray) -> float:
    """Discrete energy inner product <u, v>_h."""
    return float(np.real(np.vdot(u_hat, v_hat)))


def norms(grid: TorusGrid, u_hat: np.ndarray) -> tuple[float, float, float]:
    """Return ``(l2, grad, dual)`` norms of a field.

    ``dual`` is the norm of the functional ``<u, .>`` over the gradient-norm
    space, i.e. the exact spectral solution of the Riesz problem.
    """
    power = np.sum(np.abs(u_hat) ** 2, axis=0)
    l2 = np.sqrt(power.sum())
    grad = np.sqrt((grid.ksq * power).sum())
    dual = np.sqrt((grid.inv_ksq * power).sum())
    return float(l2), float(grad), float(dual)


def curl_2d(grid: TorusGrid, u_hat: np.ndarray) -> np.ndarray:
    """Scalar vorticity coefficients ``i (k1 u2 - k2 u1)``."""
    return 1j * (grid.k1 * u_hat[1] - grid.k2 * u_hat[0])


# --------------------------------------------------------------------------
# convection


def skew_trilinear(grid: TorusGrid, w_hat, u_hat, v_hat) -> float:
    """b(w, u, v) = 1/2 <(w.grad)u, v> - 1/2 <(w.grad)v, u>.

    Products are formed on the collocation grid; for fields in the active set
    the three-fold products are resolved exactly there.
    """
    w = to_physical(grid, w_hat)
    u = to_physical(grid, u_hat)
    v = to_physical(grid, v_hat)
    gu = _gradient(grid, u_hat)
    gv = _gradient(grid, v_hat)
    adv_u = np.einsum("jxy,ijxy->ixy", w, gu)
    adv_v = np.einsum("jxy,ijxy->ixy", w, gv)
    return 0.5 * (_quadrature(grid, adv_u * v) - _quadrature(grid, adv_v * u))


def convection_apply(grid: TorusGrid, w_hat: np.ndarray, u_hat: np.ndarray) -> np.ndarray:
    """Riesz representer of ``v -> b(w, u, v)`` in the solenoidal space.

    Written as 1/2 P[(w.grad)u + div(w (x) u)], which is the exact adjoint
    split of the antisymmetrized form, so <B(w, v), v>_h vanishes to roundoff.
    """
    w = to_physical(grid, w_hat)
    u = to_physical(grid, u_hat)
    gu = _gradient(grid, u_hat)
    adv = from_physical(grid, np.einsum("jxy,ijxy->ixy", w, gu))
    flux = from_physical(grid, w[None, :] * u[:, None])  # [i, j] = w_j u_i
    div = 1j * (grid.k1 * flux[:, 0] + grid.k2 * flux[:, 1])
    return leray_project(grid, 0.5 * (adv + div))


# --------------------------------------------------------------------------
# forcing


@dataclass
class ForcingSpec:
    """Body force: constant field, or samples with piecewise-linear interpolation.

    Samples are Leray-projected on construction.
    """

    grid: TorusGrid
    constant: np.ndarray | None = None
    times: np.ndarray | None = None
    samples: np.ndarray | None = None
    interpolation: str = field(default="piecewise-linear")

    def __post_init__(self):
        if self.constant is not None:
            self.constant = leray_project(self.grid, np.asarray(self.constant, dtype=complex))
        if self.samples is not None:
            self.times = np.asarray(self.times, dtype=float)
            if np.any(np.diff(self.times) <= 0):
                raise ValueError("forcing sample times must be strictly increasing")
            self.samples = np.stack(
                [leray_project(self.grid, np.asarray(s, dtype=complex)) for s in self.samples]
            )
            if len(self.samples) != len(self.times):
                raise ValueError("forcing times and samples differ in length")

    @classmethod
    def zero(cls, grid: TorusGrid) -> "ForcingSpec":
        return cls(grid)

    @property
    def is_zero(self) -> bool:
        if self.constant is not None:
            return not np.any(self.constant)
        if self.samples is not None:
            return not np.any(self.samples)
        return True

    def __call__(self, t: float) -> np.ndarray:
        if self.constant is not None:
            return self.constant.copy()
        if self.samples is None:
            return self.grid.zeros()
        ts = self.times
        if t <= ts[0]:
            return self.samples[0].copy()
        if t >= ts[-1]:
            return self.samples[-1].copy()
        j = int(np.searchsorted(ts, t, side="right")) - 1
        s = (t - ts[j]) / (ts[j + 1] - ts[j])
        return (1.0 - s) * self.samples[j] + s * self.samples[j + 1]


# --------------------------------------------------------------------------
# time stepping


@dataclass
class StepInfo:
    iterations: int
    increment: float


def fom_theta_step(
    grid: TorusGrid,
    u_prev: np.ndarray,
    theta: float,
    dt: float,
    forcing: ForcingSpec | None = None,
    t: float = 0.0,
    solver_tol: float = 1e-10,
    max_iter: int = 100,
    damping: float = 1.0,
) -> tuple[np.ndarray, StepInfo]:
    """One implicit theta-step of the full-order model.

    Solves for the intermediate state ``u_theta`` by damped fixed-point
    iteration on ``(u_theta - u_prev)/(theta dt) + nu A u_theta
    + B(u_theta, u_theta) = f(t + theta dt)``, then extrapolates to ``u_next``.
    """
    if not 0.5 <= theta <= 1.0:
        raise ValueError(f"theta must lie in [1/2, 1], got {theta}")
    if not dt > 0:
        raise ValueError("dt must be positive")
    f = forcing(t + theta * dt) if forcing is not None else grid.zeros()
    tdt = theta * dt
    inv = 1.0 / (1.0 + tdt * grid.nu * grid.ksq)
    u_th = u_prev.copy()
    scale = max(norms(grid, u_prev)[0], np.finfo(float).tiny)
    increment = np.inf
    for it in range(1, max_iter + 1):
        rhs = u_prev + tdt * (f - convection_apply(grid, u_th, u_th))
        candidate = inv * rhs
        candidate[:, ~grid.mask] = 0.0
        new = (1.0 - damping) * u_th + damping * candidate
        increment = norms(grid, new - u_th)[0] / scale
        u_th = new
        if increment <= solver_tol:
            break
    else:
        raise NonConvergence(max_iter, increment)
    u_next = (u_th - (1.0 - theta) * u_prev) / theta
    return leray_project(grid, u_next), StepInfo(it, increment)


def run_fom(
    grid: TorusGrid,
    u0: np.ndarray,
    theta: float,
    dt: float,
    steps: int,
    forcing: ForcingSpec | None = None,
    solver_tol: float = 1e-10,
    max_iter: int = 100,
    keep_every: int = 1,
):
    """March the full-order model; returns (times, states) for kept steps."""
    u = leray_project(grid, u0)
    times = [0.0]
    states = [u]
    for k in range(steps):
        u, _ = fom_theta_step(grid, u, theta, dt, forcing, k * dt, solver_tol, max_iter)
        if (k + 1) % keep_every == 0 or k + 1 == steps:
            times.append((k + 1) * dt)
            states.append(u)
    return np.array(times), np.stack(states)


# --------------------------------------------------------------------------
# fields


def taylor_green(grid: TorusGrid, amplitude: float = 1.0) -> np.ndarray:
    """amplitude * (sin x cos y, -cos x sin y)."""
    X, Y = np.meshgrid(grid.x, grid.x, indexing="ij")
    u = amplitude * np.stack([np.sin(X) * np.cos(Y), -np.cos(X) * np.sin(Y)])
    return leray_project(grid, from_physical(grid, u))


def random_field(grid: TorusGrid, rng: np.random.Generator, kcut: int | None = None,
                 norm: float | None = 1.0) -> np.ndarray:
    """Random real solenoidal field supported on |k|_inf <= kcut."""
    kcut = grid.kmax if kcut is None else min(kcut, grid.kmax)
    X = rng.standard_normal((2, grid.N, grid.N))
    u_hat = from_physical(grid, X)
    u_hat[:, (np.abs(grid.k1) > kcut) | (np.abs(grid.k2) > kcut)] = 0.0
    u_hat = leray_project(grid, u_hat)
    if norm is not None:
        u_hat *= norm / norms(grid, u_hat)[0]
    return u_hat


def fourier_basis(grid: TorusGrid, kcut: int | None = None):
    """Real orthonormal basis of the solenoidal space, eigenbasis of A_h.

    Returns ``(basis, wavevectors)`` with basis of shape ``(m, 2, N, N)``; each
    wavevector pair contributes a cosine and a sine mode along ``k^perp/|k|``.
    Ordered by |k|^2, then lexicographically.
    """
    kcut = grid.kmax if kcut is None else kcut
    if kcut > grid.kmax:
        raise ValueError(f"truncation {kcut} exceeds dealiased range {grid.kmax}")
    reps = []
    for a in range(-kcut, kcut + 1):
        for b in range(-kcut, kcut + 1):
            if (a, b) == (0, 0):
                continue
            if a > 0 or (a == 0 and b > 0):
                reps.append((a, b))
    reps.sort(key=lambda k: (k[0] ** 2 + k[1] ** 2, k))
    N = grid.N
    amp = 1.0 / (np.pi * np.sqrt(2.0))
    basis = []
    labels = []
    for a, b in reps:
        kn = np.hypot(a, b)
        e = np.array([-b, a]) / kn
        for kind in ("cos", "sin"):
            phi = np.zeros((2, N, N), dtype=complex)
            # cos(k.x) = (e^{ikx} + e^{-ikx})/2 ; sin(k.x) = (e^{ikx} - e^{-ikx})/(2i)
            cp, cm = (0.5, 0.5) if kind == "cos" else (-0.5j, 0.5j)
            phi[:, a % N, b % N] += TWO_PI * amp * cp * e
            phi[:, (-a) % N, (-b) % N] += TWO_PI * amp * cm * e
            basis.append(phi)
            labels.append((a, b, kind))
    return np.stack(basis), labels


# --------------------------------------------------------------------------
# serialization


def write_state_csv(grid: TorusGrid, u_hat: np.ndarray, time: float) -> str:
    """Serialize a field as CSV text (header block, then active modes)."""
    buf = io.StringIO()
    buf.write(f"# {STATE_FORMAT_VERSION}\n")
    buf.write(f"# N={grid.N},nu={grid.nu!r},dealias_fraction={grid.dealias_fraction!r},time={float(time)!r}\n")
    buf.write("k1,k2,re_u1,im_u1,re_u2,im_u2\n")
    idx = np.argwhere(grid.mask)
    for i, j in idx:
        k1, k2 = int(grid.k1[i, j]), int(grid.k2[i, j])
        c1, c2 = u_hat[0, i, j], u_hat[1, i, j]
        vals = (float(c1.real), float(c1.imag), float(c2.real), float(c2.imag))
        buf.write(f"{k1},{k2}," + ",".join(repr(v) for v in vals) + "\n")
    return buf.getvalue()


def read_state_csv(text: str) -> tuple[TorusGrid, np.ndarray, float]:
    lines = text.splitlines()
    if not lines or lines[0].strip() != f"# {STATE_FORMAT_VERSION}":
        raise ValueError("not a certrom state file")
    meta = dict(item.split("=") for item in lines[1][1:].strip().split(","))
    grid = TorusGrid(int(meta["N"]), float(meta["nu"]), float(meta["dealias_fraction"]))
    u = grid.zeros()
    N = grid.N
    for line in lines[3:]:
        if not line.strip():
            continue
        k1, k2, a, b, c, d = line.split(",")
        u[0, int(k1) % N, int(k2) % N] = complex(float(a), float(b))
        u[1, int(k1) % N, int(k2) % N] = complex(float(c), float(d))
    return grid, u, float(meta["time"])
