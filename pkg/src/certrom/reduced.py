"""POD bases, structure-preserving reduced operators and admissible closures."""

from __future__ import annotations

import hashlib
import io
import json
import zipfile
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .spectral import (
    ForcingSpec,
    TorusGrid,
    from_physical,
    inner,
    leray_project,
    norms,
    stokes_apply,
    to_physical,
)

__all__ = [
    "RankDeficient",
    "SnapshotSet",
    "RomBasis",
    "Closure",
    "NoClosure",
    "LinearDamping",
    "EddyViscosity",
    "NegativeDampingProbe",
    "ReducedOperators",
    "RegimeSet",
    "pod_basis",
    "basis_from_fields",
    "assemble_reduced",
    "closure_eval",
    "closure_lipschitz",
    "lift",
    "project",
    "save_reduced",
    "load_reduced",
]

ROM_FORMAT_VERSION = "certrom-rom-v1"


class RankDeficient(ValueError):
    def __init__(self, n, rank):
        super().__init__(f"requested {n} modes but snapshot set has numerical rank {rank}")
        self.n = n
        self.rank = rank


@dataclass
class SnapshotSet:
    fields: np.ndarray  # (m, 2, N, N)
    weights: np.ndarray
    times: np.ndarray | None = None
    run_id: str = ""

    def __post_init__(self):
        self.fields = np.asarray(self.fields)
        self.weights = np.asarray(self.weights, dtype=float)
        if self.weights.shape != (len(self.fields),):
            raise ValueError("one weight per snapshot required")
        if np.any(self.weights <= 0):
            raise ValueError("snapshot weights must be positive")


@dataclass
class RomBasis:
    basis: np.ndarray  # (n, 2, N, N)
    gram: np.ndarray
    pod_spectrum: np.ndarray
    tail_energy: float

    @property
    def n(self) -> int:
        return len(self.basis)


def _real_view(fields: np.ndarray) -> np.ndarray:
    """Flatten complex fields to real vectors whose dot product is <.,.>_h."""
    flat = fields.reshape(len(fields), -1)
    return np.concatenate([flat.real, flat.imag], axis=1)


def _gram(basis: np.ndarray) -> np.ndarray:
    R = _real_view(basis)
    return R @ R.T


def pod_basis(grid: TorusGrid, snapshots: SnapshotSet, n: int, rank_tol: float = 1e-12) -> RomBasis:
    """Method of snapshots in the discrete energy inner product.

    The weighted correlation matrix ``W^1/2 S^T S W^1/2`` is diagonalized; modes
    are the normalized snapshot combinations of its leading eigenvectors. One
    Householder QR pass in the energy inner product removes roundoff-level
    loss of orthogonality from small eigenvalues.
    """
    if n < 1:
        raise ValueError("n must be >= 1")
    S = _real_view(snapshots.fields)
    sw = np.sqrt(snapshots.weights)
    C = (S * sw[:, None]) @ (S * sw[:, None]).T
    lam, V = np.linalg.eigh(C)
    order = np.argsort(lam)[::-1]
    lam, V = lam[order], V[:, order]
    lam = np.clip(lam, 0.0, None)
    rank = int(np.sum(lam > rank_tol * lam[0])) if lam[0] > 0 else 0
    if n > rank:
        raise RankDeficient(n, rank)
    coef = (V[:, :n] * sw[:, None]) / np.sqrt(lam[:n])
    modes = np.einsum("mi,m...->i...", coef, snapshots.fields)
    modes = np.stack([leray_project(grid, m) for m in modes])
    Q, R = np.linalg.qr(_real_view(modes).T)
    Tinv = np.linalg.inv(R)
    modes = np.einsum("ji,j...->i...", Tinv, modes)
    signs = np.sign(np.diag(R))
    modes = modes * signs[:, None, None, None]
    return RomBasis(modes, _gram(modes), lam, float(lam[n:].sum()))


def basis_from_fields(fields: np.ndarray) -> RomBasis:
    """Wrap an already orthonormal set of solenoidal fields as a RomBasis."""
    fields = np.asarray(fields)
    G = _gram(fields)
    if np.abs(G - np.eye(len(fields))).max() > 1e-10:
        raise ValueError("fields are not orthonormal in the energy inner product")
    return RomBasis(fields, G, np.ones(len(fields)), 0.0)


# --------------------------------------------------------------------------
# closures


@dataclass(frozen=True)
class Closure:
    kind = "none"

    def params(self) -> dict:
        return {}


@dataclass(frozen=True)
class NoClosure(Closure):
    kind = "none"


@dataclass(frozen=True)
class LinearDamping(Closure):
    alpha: float = 0.0
    kind = "linear_damping"

    def __post_init__(self):
        if self.alpha < 0:
            raise ValueError("linear damping coefficient must be non-negative")

    def params(self):
        return {"alpha": self.alpha}


@dataclass(frozen=True)
class EddyViscosity(Closure):
    """C(a) = c * ||a|| * A a, with Lipschitz constant quoted on the ball ||a|| <= R."""

    c: float = 0.0
    regime_radius: float = 1.0
    kind = "eddy_viscosity"

    def __post_init__(self):
        if self.c < 0:
            raise ValueError("eddy viscosity coefficient must be non-negative")
        if not self.regime_radius > 0:
            raise ValueError("regime radius must be positive")

    def params(self):
        return {"c": self.c, "regime_radius": self.regime_radius}


@dataclass(frozen=True)
class NegativeDampingProbe(Closure):
    """Anti-dissipative probe C(a) = -strength * a.

    Not admissible; exists only to demonstrate that the dissipation monitor
    fires.
    """

    strength: float = 0.1
    kind = "negative_damping_probe"

    def params(self):
        return {"strength": self.strength}


# --------------------------------------------------------------------------
# reduced operators


@dataclass
class RegimeSet:
    coefficient_radius: float
    trajectory_grad_bound: float | None = None

    def __post_init__(self):
        if not self.coefficient_radius > 0:
            raise ValueError("regime radius must be positive")

    def contains(self, a: np.ndarray, rtol: float = 1e-12) -> bool:
        return float(np.linalg.norm(a)) <= self.coefficient_radius * (1 + rtol)


@dataclass
class ReducedOperators:
    """Coefficient objects of the reduced ODE.

    ``convection[j, k, i] = b(phi_j, phi_k, phi_i)``; antisymmetric in the last
    two slots, so ``N_i(a) = sum_jk a_j a_k T[j, k, i]`` satisfies a.N(a) = 0.
    """

    stokes: np.ndarray
    convection: np.ndarray
    nu: float
    closure: Closure = field(default_factory=NoClosure)
    forcing_fn: object = None  # callable t -> reduced forcing vector
    forcing_is_zero: bool = True

    @property
    def n(self) -> int:
        return self.stokes.shape[0]

    def nonlinear(self, a: np.ndarray) -> np.ndarray:
        return np.einsum("jki,j,k->i", self.convection, a, a)

    def nonlinear_jacobian(self, a: np.ndarray) -> np.ndarray:
        T = self.convection
        return np.einsum("mki,k->im", T, a) + np.einsum("jmi,j->im", T, a)

    def forcing(self, t: float) -> np.ndarray:
        if self.forcing_fn is None:
            return np.zeros(self.n)
        return np.asarray(self.forcing_fn(t), dtype=float)

    def fingerprint(self) -> str:
        h = hashlib.sha256()
        h.update(np.ascontiguousarray(self.stokes).tobytes())
        h.update(np.ascontiguousarray(self.convection).tobytes())
        h.update(repr((self.nu, self.closure.kind, sorted(self.closure.params().items()))).encode())
        return h.hexdigest()


def _gradients(grid: TorusGrid, fields: np.ndarray) -> np.ndarray:
    dk = np.stack([1j * grid.k1, 1j * grid.k2])
    return to_physical(grid, fields[:, :, None] * dk[None, None, :])


def _convection_batch(grid: TorusGrid, w: np.ndarray, us: np.ndarray, grads: np.ndarray) -> np.ndarray:
    """convection_apply(w, u) for a stack of u given grid values; same arithmetic."""
    adv = from_physical(grid, np.einsum("jxy,mijxy->mixy", w, grads))
    flux = from_physical(grid, w[None, None, :] * us[:, :, None])
    div = 1j * (grid.k1 * flux[:, :, 0] + grid.k2 * flux[:, :, 1])
    return np.stack([leray_project(grid, 0.5 * r) for r in adv + div])


def lift(basis: RomBasis, a: np.ndarray) -> np.ndarray:
    return np.tensordot(np.asarray(a, dtype=float), basis.basis, axes=(0, 0))


def project(basis: RomBasis, u_hat: np.ndarray) -> np.ndarray:
    return np.array([inner(phi, u_hat) for phi in basis.basis])


def assemble_reduced(
    grid: TorusGrid,
    basis: RomBasis,
    forcing: ForcingSpec | None = None,
    closure: Closure | None = None,
) -> ReducedOperators:
    """Galerkin reduced operators with exactly antisymmetric convection storage."""
    phis = basis.basis
    n = len(phis)
    A = np.array([[inner(phis[i], stokes_apply(grid, phis[j])) for j in range(n)] for i in range(n)])
    A = 0.5 * (A + A.T)
    T = np.zeros((n, n, n))
    phys = to_physical(grid, phis)
    grads = _gradients(grid, phis)
    R = _real_view(phis)
    for j in range(n):
        reps = _convection_batch(grid, phys[j], phys, grads)
        vals = _real_view(reps) @ R.T  # vals[k, i] = b(phi_j, phi_k, phi_i)
        iu = np.triu_indices(n, 1)
        T[j][iu] = vals[iu]
        T[j][(iu[1], iu[0])] = -vals[iu]
    closure = NoClosure() if closure is None else closure
    ops = ReducedOperators(A, T, grid.nu, closure)
    if forcing is not None and not forcing.is_zero:
        ops.forcing_fn = lambda t, _b=basis, _f=forcing: project(_b, _f(t))
        ops.forcing_is_zero = False
    return ops


def closure_eval(closure: Closure, ops: ReducedOperators, a: np.ndarray) -> np.ndarray:
    a = np.asarray(a, dtype=float)
    if isinstance(closure, LinearDamping):
        return closure.alpha * a
    if isinstance(closure, EddyViscosity):
        return closure.c * np.linalg.norm(a) * (ops.stokes @ a)
    if isinstance(closure, NegativeDampingProbe):
        return -closure.strength * a
    return np.zeros_like(a)


def closure_jacobian(closure: Closure, ops: ReducedOperators, a: np.ndarray) -> np.ndarray:
    n = len(a)
    if isinstance(closure, LinearDamping):
        return closure.alpha * np.eye(n)
    if isinstance(closure, EddyViscosity):
        r = np.linalg.norm(a)
        J = closure.c * r * ops.stokes
        if r > 0:
            J = J + closure.c * np.outer(ops.stokes @ a, a) / r
        return J
    if isinstance(closure, NegativeDampingProbe):
        return -closure.strength * np.eye(n)
    return np.zeros((n, n))


def closure_lipschitz(closure: Closure, ops: ReducedOperators, regime: RegimeSet | None = None) -> float:
    """Lipschitz constant of the closure on the regime ball."""
    if isinstance(closure, LinearDamping):
        return float(closure.alpha)
    if isinstance(closure, EddyViscosity):
        R = closure.regime_radius if regime is None else regime.coefficient_radius
        return float(2.0 * closure.c * R * np.linalg.norm(ops.stokes, 2))
    if isinstance(closure, NegativeDampingProbe):
        return float(abs(closure.strength))
    return 0.0


# --------------------------------------------------------------------------
# container


def _write_npz(path: Path, **arrays):
    """np.savez-compatible archive with fixed member timestamps, so equal
    arrays give equal bytes."""
    with zipfile.ZipFile(path, "w", compression=zipfile.ZIP_STORED) as zf:
        for name, arr in arrays.items():
            buf = io.BytesIO()
            np.lib.format.write_array(buf, np.ascontiguousarray(arr), allow_pickle=False)
            info = zipfile.ZipInfo(f"{name}.npy", date_time=(1980, 1, 1, 0, 0, 0))
            zf.writestr(info, buf.getvalue())


def save_reduced(path: str | Path, grid: TorusGrid, basis: RomBasis, ops: ReducedOperators) -> dict:
    """Write ``<path>.npz`` plus a JSON manifest ``<path>.json``; returns the manifest."""
    path = Path(path)
    _write_npz(
        path.with_suffix(".npz"),
        basis=basis.basis,
        gram=basis.gram,
        pod_spectrum=basis.pod_spectrum,
        stokes=ops.stokes,
        convection=ops.convection,
    )
    manifest = {
        "format": ROM_FORMAT_VERSION,
        "n": basis.n,
        "grid": {"N": grid.N, "nu": grid.nu, "dealias_fraction": grid.dealias_fraction},
        "pod_spectrum": [float(x) for x in basis.pod_spectrum],
        "tail_energy": basis.tail_energy,
        "closure": {"kind": ops.closure.kind, **ops.closure.params()},
        "gram_explicit_path": "unimplemented (basis always orthonormalized)",
    }
    path.with_suffix(".json").write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")
    return manifest


_CLOSURES = {
    "none": lambda p: NoClosure(),
    "linear_damping": lambda p: LinearDamping(p["alpha"]),
    "eddy_viscosity": lambda p: EddyViscosity(p["c"], p["regime_radius"]),
    "negative_damping_probe": lambda p: NegativeDampingProbe(p["strength"]),
}


def load_reduced(path: str | Path):
    path = Path(path)
    manifest = json.loads(path.with_suffix(".json").read_text())
    if manifest.get("format") != ROM_FORMAT_VERSION:
        raise ValueError(f"unsupported reduced-model container {manifest.get('format')!r}")
    data = np.load(path.with_suffix(".npz"))
    g = manifest["grid"]
    grid = TorusGrid(g["N"], g["nu"], g["dealias_fraction"])
    basis = RomBasis(data["basis"], data["gram"], data["pod_spectrum"], manifest["tail_energy"])
    closure = _CLOSURES[manifest["closure"]["kind"]](manifest["closure"])
    ops = ReducedOperators(data["stokes"], data["convection"], grid.nu, closure)
    return grid, basis, ops
