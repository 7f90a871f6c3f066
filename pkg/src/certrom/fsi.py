"""FSI stability margins and a 1D Robin-Robin partitioned testbed.

The testbed couples a linear diffusion surrogate on (0, 1), with u(0) = 0,
to an elastic rod on (1, 2), with eta(2) = 0, through the interface node
x = 1. Both sides use P1 elements. The fluid has no convection and no
incompressibility constraint, so it is the Stokes-structure case with the
pressure dropped.
"""

from __future__ import annotations

import io
import json
import math
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np
import scipy.linalg as sla

__all__ = [
    "FsiParams",
    "StructureMatrices",
    "IndefiniteMass",
    "MarginReport",
    "CoupledLedgerEntry",
    "Testbed",
    "FsiRun",
    "lambda_h",
    "added_mass_coefficient",
    "dt_margin",
    "alpha_margin",
    "regime_check",
    "margin_report",
    "p1_matrices",
    "trace_constant",
    "robin_partitioned_run",
    "write_triplets",
    "read_triplets",
    "ledger_csv",
]

TESTBED_HEADER = (
    "1D linear testbed: diffusion surrogate fluid on (0,1) (no convection, no "
    "incompressibility), P1 elastic rod on (1,2), interface at x=1"
)
MATRIX_FORMAT_VERSION = "certrom-triplets-v1"


class IndefiniteMass(ValueError):
    """The mass matrix could not be Cholesky-factorized."""


@dataclass(frozen=True)
class FsiParams:
    rho_f: float
    rho_s: float
    nu: float
    alpha: float
    dt: float
    C_tr_h: float = 1.0
    Lambda_h: float = 1.0
    c_C_h: float = 1.0
    kappa: float = 0.5

    def __post_init__(self):
        for name in ("rho_f", "rho_s", "nu", "alpha", "dt", "C_tr_h", "c_C_h"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive")
        if not self.Lambda_h >= 0:
            raise ValueError("Lambda_h must be non-negative")
        if not 0 < self.kappa < 1:
            raise ValueError("kappa must lie in (0, 1)")


@dataclass
class StructureMatrices:
    K: np.ndarray
    M: np.ndarray

    def __post_init__(self):
        self.K = np.asarray(self.K, dtype=float)
        self.M = np.asarray(self.M, dtype=float)
        for name, A in (("K", self.K), ("M", self.M)):
            if A.ndim != 2 or A.shape[0] != A.shape[1]:
                raise ValueError(f"{name} must be square")
            if np.abs(A - A.T).max() > 1e-12 * max(1.0, np.abs(A).max()):
                raise ValueError(f"{name} is not symmetric")
        if self.K.shape != self.M.shape:
            raise ValueError("K and M differ in shape")


# --------------------------------------------------------------------------
# margin formulas


def lambda_h(m: StructureMatrices) -> float:
    """Largest lambda with K x = lambda M x, via the Cholesky factor of M."""
    try:
        L = np.linalg.cholesky(m.M)
    except np.linalg.LinAlgError as exc:
        raise IndefiniteMass("mass matrix is not positive definite") from exc
    Li = sla.solve_triangular(L, np.eye(len(L)), lower=True)
    S = Li @ m.K @ Li.T
    return float(np.linalg.eigvalsh(0.5 * (S + S.T))[-1])


def added_mass_coefficient(p: FsiParams) -> float:
    return p.rho_f / p.rho_s * p.C_tr_h**2 * p.Lambda_h


def dt_margin(alpha: float, C_am: float) -> float:
    return alpha / (2.0 * C_am * alpha + 1.0)


def alpha_margin(dt: float, C_am: float) -> float:
    return (math.sqrt(1.0 + 8.0 * C_am * dt) - 1.0) / (2.0 * dt)


def regime_check(p: FsiParams, sup_l2: float, grad_l2: float) -> bool:
    """Smallness of the fluid convection: rho_f * sup||u|| * ||grad u|| <= kappa nu."""
    return bool(p.rho_f * sup_l2 * grad_l2 <= p.kappa * p.nu)


@dataclass
class MarginReport:
    C_am: float
    dt_max: float
    alpha_min: float
    margin_ok: bool
    alpha_condition_ok: bool
    regime_ok: bool | None
    inputs: dict = field(default_factory=dict)

    def as_dict(self) -> dict:
        return asdict(self)


def margin_report(p: FsiParams, flow_norms: tuple[float, float] | None = None,
                  provenance: dict | None = None) -> MarginReport:
    """margin_ok is the time-step margin; the alpha >= 2 C_am absorption
    condition is reported next to it."""
    cam = added_mass_coefficient(p)
    dtm = dt_margin(p.alpha, cam)
    am = alpha_margin(p.dt, cam)
    prov = provenance or {}
    inputs = {
        k: {"value": float(getattr(p, k)), "provenance": prov.get(k, "declared")}
        for k in ("rho_f", "rho_s", "nu", "alpha", "dt", "C_tr_h", "Lambda_h", "c_C_h", "kappa")
    }
    return MarginReport(
        C_am=cam,
        dt_max=dtm,
        alpha_min=am,
        margin_ok=bool(p.dt <= dtm),
        alpha_condition_ok=bool(p.alpha >= 2.0 * cam),
        regime_ok=None if flow_norms is None else regime_check(p, *flow_norms),
        inputs=inputs,
    )


# --------------------------------------------------------------------------
# triplet I/O


def _triplets(A: np.ndarray) -> str:
    r, c = np.nonzero(A)
    return "".join(f"{i} {j} {float(A[i, j])!r}\n" for i, j in zip(r, c))


def write_triplets(m: StructureMatrices, directory: str | Path, stem: str = "structure") -> dict:
    """Write ``<stem>_K.txt``, ``<stem>_M.txt`` (row col value, 0-based) and a manifest."""
    d = Path(directory)
    d.mkdir(parents=True, exist_ok=True)
    (d / f"{stem}_K.txt").write_text(_triplets(m.K))
    (d / f"{stem}_M.txt").write_text(_triplets(m.M))
    manifest = {
        "format": MATRIX_FORMAT_VERSION,
        "size": int(m.K.shape[0]),
        "indexing": "0-based",
        "stiffness": f"{stem}_K.txt",
        "mass": f"{stem}_M.txt",
    }
    (d / f"{stem}.json").write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")
    return manifest


def read_triplets(manifest_path: str | Path) -> StructureMatrices:
    mp = Path(manifest_path)
    man = json.loads(mp.read_text())
    if man.get("format") != MATRIX_FORMAT_VERSION:
        raise ValueError(f"unsupported matrix manifest {man.get('format')!r}")
    n = int(man["size"])
    base = 1 if man.get("indexing") == "1-based" else 0

    def load(name):
        A = np.zeros((n, n))
        for line in (mp.parent / name).read_text().splitlines():
            if line.strip() and not line.startswith("#"):
                i, j, v = line.split()
                A[int(i) - base, int(j) - base] += float(v)
        return A

    return StructureMatrices(load(man["stiffness"]), load(man["mass"]))


# --------------------------------------------------------------------------
# testbed


def p1_matrices(cells: int, length: float = 1.0) -> tuple[np.ndarray, np.ndarray]:
    """Stiffness and consistent mass of P1 elements on a uniform mesh (all nodes)."""
    h = length / cells
    n = cells + 1
    K = np.zeros((n, n))
    M = np.zeros((n, n))
    ke = np.array([[1.0, -1.0], [-1.0, 1.0]]) / h
    me = np.array([[2.0, 1.0], [1.0, 2.0]]) * h / 6.0
    for e in range(cells):
        s = slice(e, e + 2)
        K[s, s] += ke
        M[s, s] += me
    return K, M


@dataclass(frozen=True)
class Testbed:
    fluid_cells: int = 10
    structure_cells: int = 10
    stiffness: float = 1.0  # elastic modulus E of the rod

    def matrices(self):
        Kf, Mf = p1_matrices(self.fluid_cells)
        Ks, Ms = p1_matrices(self.structure_cells)
        # fluid drops x=0 (interface is its last dof); rod drops x=2 (interface is its first dof)
        return Kf[1:, 1:], Mf[1:, 1:], Ks[:-1, :-1], Ms[:-1, :-1]

    def structure(self) -> StructureMatrices:
        _, _, Ks, Ms = self.matrices()
        return StructureMatrices(self.stiffness * Ks, Ms)


def trace_constant(testbed: Testbed) -> float:
    """Exact discrete trace constant: |v(1)| <= C ||v||_{H1} on both P1 spaces.

    For a single interface node the extremal ratio is e^T (M + K)^{-1} e.
    """
    Kf, Mf, Ks, Ms = testbed.matrices()
    ef = np.zeros(len(Kf))
    ef[-1] = 1.0
    es = np.zeros(len(Ks))
    es[0] = 1.0
    cf = ef @ np.linalg.solve(Mf + Kf, ef)
    cs = es @ np.linalg.solve(Ms + Ks, es)
    return float(math.sqrt(max(cf, cs)))


def testbed_params(testbed: Testbed, rho_f, rho_s, nu, alpha, dt, kappa=0.5) -> tuple[FsiParams, dict]:
    """FsiParams with the discrete constants computed from the assembled matrices."""
    _, _, Ks, _ = testbed.matrices()
    p = FsiParams(
        rho_f=rho_f, rho_s=rho_s, nu=nu, alpha=alpha, dt=dt,
        C_tr_h=trace_constant(testbed),
        Lambda_h=lambda_h(testbed.structure()),
        c_C_h=float(sla.eigh(testbed.stiffness * Ks, Ks, eigvals_only=True)[0]),
        kappa=kappa,
    )
    return p, {"C_tr_h": "computed", "Lambda_h": "computed", "c_C_h": "computed"}


@dataclass
class CoupledLedgerEntry:
    step: int
    fluid_kinetic: float
    structure_kinetic: float
    elastic: float
    energy: float
    viscous_dissipation: float
    penalty_partition: float  # alpha dt |u^{k+1} - w^k|^2 at the interface
    penalty_coupling: float  # alpha dt |w^{k+1} - u^{k+1}|^2 at the interface
    forcing_work: float
    inequality_slack: float  # RHS - LHS of the coupled inequality, remainder absorbed
    energy_decrease: float  # E^k - E^{k+1}
    interface_storage: float  # alpha dt |w^{k+1}|^2 / 2 at the interface
    augmented_decrease: float  # decrease of E + interface_storage
    identity_residual: float

    CSV_COLUMNS = (
        "step", "fluid_kinetic", "structure_kinetic", "elastic", "energy",
        "viscous_dissipation", "penalty_partition", "penalty_coupling", "forcing_work",
        "inequality_slack", "energy_decrease", "interface_storage", "augmented_decrease",
        "identity_residual",
    )


@dataclass
class FsiRun:
    u: np.ndarray
    w: np.ndarray
    eta: np.ndarray
    ledger: list
    report: MarginReport
    params: FsiParams
    energy0: float
    header: str = TESTBED_HEADER

    @property
    def tolerance(self) -> float:
        return 1e-10 * self.energy0

    @property
    def energy_nonincreasing(self) -> bool:
        return all(e.energy_decrease >= -self.tolerance for e in self.ledger)

    @property
    def inequality_holds(self) -> bool:
        return all(e.inequality_slack >= -self.tolerance for e in self.ledger)

    @property
    def augmented_nonincreasing(self) -> bool:
        return all(e.augmented_decrease >= -self.tolerance for e in self.ledger)

    def summary(self) -> dict:
        led = self.ledger
        return {
            "header": self.header,
            "steps": len(led),
            "energy0": self.energy0,
            "min_energy_decrease": min((e.energy_decrease for e in led), default=0.0),
            "min_inequality_slack": min((e.inequality_slack for e in led), default=0.0),
            "min_augmented_decrease": min((e.augmented_decrease for e in led), default=0.0),
            "max_identity_residual": max((e.identity_residual for e in led), default=0.0),
            "energy_nonincreasing": self.energy_nonincreasing,
            "inequality_holds": self.inequality_holds,
            "augmented_nonincreasing": self.augmented_nonincreasing,
        }


def robin_partitioned_run(
    testbed: Testbed,
    p: FsiParams,
    steps: int,
    u0=None,
    w0=None,
    eta0=None,
    f_fluid=None,
    f_struct=None,
    provenance: dict | None = None,
) -> FsiRun:
    """March the Robin-Robin partitioned scheme and evaluate the energy ledger.

    Fluid step, with the previous structure velocity as Robin datum:
        rho_f M_f (u+ - u)/dt + nu K_f u+ + alpha e (u+_G - w_G) = f_f
    Structure step, with the new fluid trace as Robin datum:
        rho_s M_s (w+ - w)/dt + K_s eta+ + alpha e (w+_G - u+_G) = f_s,
        eta+ = eta + dt w+.
    """
    Kf, Mf, Ks, Ms = testbed.matrices()
    Ks = testbed.stiffness * Ks
    nf, ns = len(Kf), len(Ks)
    ef = np.zeros(nf)
    ef[-1] = 1.0
    es = np.zeros(ns)
    es[0] = 1.0
    u = np.zeros(nf) if u0 is None else np.asarray(u0, dtype=float).copy()
    w = np.zeros(ns) if w0 is None else np.asarray(w0, dtype=float).copy()
    eta = np.zeros(ns) if eta0 is None else np.asarray(eta0, dtype=float).copy()
    ff = np.zeros(nf) if f_fluid is None else np.asarray(f_fluid, dtype=float)
    fs = np.zeros(ns) if f_struct is None else np.asarray(f_struct, dtype=float)
    rf, rs, nu, a, dt = p.rho_f, p.rho_s, p.nu, p.alpha, p.dt

    Af = rf * Mf / dt + nu * Kf + a * np.outer(ef, ef)
    As = rs * Ms / dt + dt * Ks + a * np.outer(es, es)
    cf = sla.cho_factor(Af)
    cs = sla.cho_factor(As)

    def parts(u, w, eta):
        return 0.5 * rf * u @ Mf @ u, 0.5 * rs * w @ Ms @ w, 0.5 * eta @ Ks @ eta

    E0 = float(sum(parts(u, w, eta)))
    ledger = []
    U, W, H = [u.copy()], [w.copy()], [eta.copy()]
    for k in range(steps):
        e_old = sum(parts(u, w, eta))
        un = sla.cho_solve(cf, rf * Mf @ u / dt + a * w[0] * ef + ff)
        wn = sla.cho_solve(cs, rs * Ms @ w / dt - Ks @ eta + a * un[-1] * es + fs)
        etan = eta + dt * wn
        fk, sk, el = parts(un, wn, etan)
        e_new = fk + sk + el
        visc = nu * dt * float(un @ Kf @ un)
        pen1 = a * dt * (un[-1] - w[0]) ** 2
        pen2 = a * dt * (wn[0] - un[-1]) ** 2
        work = dt * float(ff @ un + fs @ wn)
        lhs = e_new - e_old + visc + pen1 + pen2
        store_old, store_new = 0.5 * a * dt * w[0] ** 2, 0.5 * a * dt * wn[0] ** 2
        # exact balance of the scheme: increments of E and of the interface storage,
        # plus dissipation, half-penalties and the implicit-Euler numerical dissipation
        num = (0.5 * rf * (un - u) @ Mf @ (un - u) + 0.5 * rs * (wn - w) @ Ms @ (wn - w)
               + 0.5 * (etan - eta) @ Ks @ (etan - eta))
        ident = e_new - e_old + store_new - store_old + visc + 0.5 * (pen1 + pen2) + num - work
        ledger.append(CoupledLedgerEntry(
            step=k,
            fluid_kinetic=float(fk),
            structure_kinetic=float(sk),
            elastic=float(el),
            energy=float(e_new),
            viscous_dissipation=visc,
            penalty_partition=float(pen1),
            penalty_coupling=float(pen2),
            forcing_work=work,
            inequality_slack=float(work - lhs),
            energy_decrease=float(e_old - e_new),
            interface_storage=float(store_new),
            augmented_decrease=float(e_old + store_old - e_new - store_new),
            identity_residual=float(abs(ident)),
        ))
        u, w, eta = un, wn, etan
        U.append(u.copy())
        W.append(w.copy())
        H.append(eta.copy())

    return FsiRun(
        u=np.array(U), w=np.array(W), eta=np.array(H), ledger=ledger,
        report=margin_report(p, provenance=provenance), params=p, energy0=E0,
    )


def ledger_csv(rows, columns) -> str:
    """Generic CSV writer for ledger dataclasses (floats in repr precision)."""
    buf = io.StringIO()
    buf.write(",".join(columns) + "\n")
    for r in rows:
        d = asdict(r)
        buf.write(",".join(repr(float(d[c])) if isinstance(d[c], float) else str(d[c]) for c in columns) + "\n")
    return buf.getvalue()
