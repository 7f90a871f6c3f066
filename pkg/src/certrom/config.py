"""Run configuration: JSON file, validated against a schema, then lifted into
dataclasses with defaults filled in."""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path

import jsonschema

__all__ = [
    "SchemaError",
    "RunConfig",
    "parse_config",
    "load_config",
    "CONFIG_SCHEMA",
    "UNSUPPORTED_KEYS",
]


class SchemaError(ValueError):
    """Configuration violates the schema; ``path`` is the offending key path."""

    def __init__(self, path: str, message: str):
        super().__init__(f"{path or '<root>'}: {message}")
        self.path = path
        self.message = message


# Keys that name features which are deliberately absent; rejected with a reason.
UNSUPPORTED_KEYS = {
    "hyperreduction": "hyper-reduction is not supported; the convection tensor is assembled exactly",
    "hyper_reduction": "hyper-reduction is not supported; the convection tensor is assembled exactly",
    "learned_closure": "learned closures are not supported; only linear damping and eddy viscosity",
    "operator_inference": "operator-inference closures are not supported",
    "no_slip": "no-slip walls are not realizable with the Fourier discretization; only the torus is supported",
    "dimension": "only 2D flows are supported",
    "gram_matrix": "non-orthonormal bases are not supported; the basis is always orthonormalized",
    "adaptive_dt": "adaptive time stepping is not supported",
    "pressure": "velocity-pressure reduced pairs are not supported; pressure is eliminated",
}

_num = {"type": "number"}
_pos = {"type": "number", "exclusiveMinimum": 0}
_int = {"type": "integer"}
_opt_num = {"type": ["number", "null"]}


def _obj(props: dict, required=()) -> dict:
    return {"type": "object", "properties": props, "required": list(required), "additionalProperties": False}


_FIELD_SPEC = _obj(
    {
        "kind": {"enum": ["none", "zero", "taylor_green", "random", "state_csv", "taylor_green_samples"]},
        "amplitude": _num,
        "perturbation": _num,
        "kcut": _int,
        "norm": _num,
        "path": {"type": "string"},
        "times": {"type": "array", "items": _num},
        "amplitudes": {"type": "array", "items": _num},
    },
    required=["kind"],
)

_STEP = {
    "theta": _num,
    "dt": _num,
    "steps": _int,
    "solver_tol": _num,
    "max_iter": _int,
}

CONFIG_SCHEMA = _obj(
    {
        "scenario": {"type": "string"},
        "seed": _int,
        "grid": _obj({"N": _int, "nu": _num, "dealias_fraction": _num}, required=["N", "nu"]),
        "initial": _FIELD_SPEC,
        "forcing": _FIELD_SPEC,
        "fom": _obj({**_STEP, "snapshot_count": _int, "regime_radius": _opt_num, "keep_every": _int}),
        "rom": _obj(
            {
                "n": _int,
                "closure": _obj(
                    {
                        "kind": {"enum": ["none", "linear_damping", "eddy_viscosity", "negative_damping_probe"]},
                        "alpha": _num,
                        "c": _num,
                        "regime_radius": _num,
                        "strength": _num,
                    },
                    required=["kind"],
                ),
                "regime_radius": _num,
                "tamper": _obj({"j": _int, "k": _int, "i": _int, "delta": _num}, required=["delta"]),
            },
            required=["n", "regime_radius"],
        ),
        "cert": _obj({**_STEP, "young_epsilon": _opt_num, "test_set_size": _int,
                      "on_failure": {"enum": ["record", "abort"]}}),
        "estimator": _obj(
            {
                "L_n_mode": {"enum": ["declared", "estimated"]},
                "L_n": _opt_num,
                "trials": _int,
                "L_reg": _num,
                "apriori_source": {"enum": ["pod-tail-surrogate", "exact-against-reference"]},
            }
        ),
        "transition": _obj(
            {
                "base_flow": _FIELD_SPEC,
                "barrier": {"type": "boolean"},
                "enstrophy": _obj(
                    {"R": _opt_num, "epsilon": _opt_num, "C_P_omega": _num, "simulate": {"type": "boolean"},
                     "dimension": _int}
                ),
                "resolvent": _obj(
                    {
                        "sigmas": {"type": "array", "items": _num, "minItems": 1},
                        "truncation": _int,
                        "theta_threshold": _num,
                        "forcing_bound": _num,
                    },
                    required=["sigmas"],
                ),
            }
        ),
        "fsi": _obj(
            {
                "rho_f": _num, "rho_s": _num, "nu": _num, "alpha": _num, "dt": _num,
                "C_tr_h": _num, "Lambda_h": _num, "c_C_h": _num, "kappa": _num,
                "flow_norms": {"type": "array", "items": _num, "minItems": 2, "maxItems": 2},
                "structure_manifest": {"type": "string"},
            },
            required=["rho_f", "rho_s", "nu", "alpha", "dt"],
        ),
        "fsi_run": _obj(
            {
                "rho_f": _num, "rho_s": _num, "nu": _num, "dt": _num, "steps": _int,
                "alpha": _num, "alpha_factor": _num, "kappa": _num,
                "fluid_cells": _int, "structure_cells": _int, "stiffness": _num,
                "initial_scale": _num,
            },
            required=["rho_f", "rho_s", "nu", "dt", "steps"],
        ),
    },
    required=["grid"],
)


# --------------------------------------------------------------------------
# typed sections


@dataclass
class FieldSpec:
    kind: str = "none"
    amplitude: float = 1.0
    perturbation: float = 0.0
    kcut: int = 3
    norm: float = 1.0
    path: str | None = None
    times: list = field(default_factory=list)
    amplitudes: list = field(default_factory=list)


@dataclass
class GridSection:
    N: int
    nu: float
    dealias_fraction: float = 2.0 / 3.0


@dataclass
class StepSection:
    theta: float = 0.5
    dt: float = 1e-2
    steps: int = 100
    solver_tol: float = 1e-10
    max_iter: int = 100


@dataclass
class FomSection(StepSection):
    snapshot_count: int = 50
    regime_radius: float | None = None
    keep_every: int = 1


@dataclass
class ClosureSection:
    kind: str = "none"
    alpha: float = 0.0
    c: float = 0.0
    regime_radius: float = 1.0
    strength: float = 0.1


@dataclass
class TamperSection:
    delta: float
    j: int = 0
    k: int = 1
    i: int = 0


@dataclass
class RomSection:
    n: int
    regime_radius: float
    closure: ClosureSection = field(default_factory=ClosureSection)
    tamper: TamperSection | None = None


@dataclass
class CertSection(StepSection):
    young_epsilon: float | None = None
    test_set_size: int = 100
    on_failure: str = "record"


@dataclass
class EstimatorSection:
    L_n_mode: str = "estimated"
    L_n: float | None = None
    trials: int = 200
    L_reg: float = 0.0
    apriori_source: str = "pod-tail-surrogate"


@dataclass
class EnstrophySection:
    R: float | None = None
    epsilon: float | None = None
    C_P_omega: float = 1.0
    simulate: bool = True
    dimension: int = 2


@dataclass
class ResolventSection:
    sigmas: list
    truncation: int = 3
    theta_threshold: float = 10.0
    forcing_bound: float = 1.0


@dataclass
class TransitionSection:
    base_flow: FieldSpec = field(default_factory=lambda: FieldSpec(kind="zero"))
    barrier: bool = True
    enstrophy: EnstrophySection | None = None
    resolvent: ResolventSection | None = None


@dataclass
class FsiSection:
    rho_f: float
    rho_s: float
    nu: float
    alpha: float
    dt: float
    C_tr_h: float = 1.0
    Lambda_h: float = 1.0
    c_C_h: float = 1.0
    kappa: float = 0.5
    flow_norms: list | None = None
    structure_manifest: str | None = None


@dataclass
class FsiRunSection:
    rho_f: float
    rho_s: float
    nu: float
    dt: float
    steps: int
    alpha: float | None = None
    alpha_factor: float = 1.0  # alpha = alpha_factor * 2 C_am when alpha is not given
    kappa: float = 0.5
    fluid_cells: int = 10
    structure_cells: int = 10
    stiffness: float = 1.0
    initial_scale: float = 1.0


@dataclass
class RunConfig:
    grid: GridSection
    scenario: str = "unnamed"
    seed: int | None = None
    initial: FieldSpec = field(default_factory=lambda: FieldSpec(kind="taylor_green"))
    forcing: FieldSpec = field(default_factory=FieldSpec)
    fom: FomSection | None = None
    rom: RomSection | None = None
    cert: CertSection | None = None
    estimator: EstimatorSection | None = None
    transition: TransitionSection | None = None
    fsi: FsiSection | None = None
    fsi_run: FsiRunSection | None = None
    base_dir: str = "."

    def to_dict(self) -> dict:
        d = asdict(self)
        d.pop("base_dir")
        return d


_NESTED = {
    "grid": GridSection,
    "initial": FieldSpec,
    "forcing": FieldSpec,
    "fom": FomSection,
    "rom": RomSection,
    "cert": CertSection,
    "estimator": EstimatorSection,
    "transition": TransitionSection,
    "fsi": FsiSection,
    "fsi_run": FsiRunSection,
    "closure": ClosureSection,
    "tamper": TamperSection,
    "base_flow": FieldSpec,
    "enstrophy": EnstrophySection,
    "resolvent": ResolventSection,
}


def _build(cls, data: dict):
    kw = {}
    names = {f.name for f in fields(cls)}
    for k, v in data.items():
        if k in _NESTED and isinstance(v, dict) and k in names:
            v = _build(_NESTED[k], v)
        kw[k] = v
    return cls(**kw)


def _check_unsupported(node, path=""):
    if isinstance(node, dict):
        for k, v in node.items():
            p = f"{path}.{k}" if path else k
            if k in UNSUPPORTED_KEYS:
                raise SchemaError(p, f"unsupported feature: {UNSUPPORTED_KEYS[k]}")
            _check_unsupported(v, p)


def _domain_checks(cfg: RunConfig):
    def need(cond, path, msg):
        if not cond:
            raise SchemaError(path, msg)

    g = cfg.grid
    need(g.N >= 4 and g.N % 2 == 0, "grid.N", f"N={g.N} must be even and >= 4")
    need(g.nu > 0, "grid.nu", "viscosity must be positive")
    need(0 < g.dealias_fraction <= 1, "grid.dealias_fraction", "must lie in (0, 1]")
    for name in ("fom", "cert"):
        s = getattr(cfg, name)
        if s is None:
            continue
        need(0.5 <= s.theta <= 1.0, f"{name}.theta",
             f"theta={s.theta} outside [1/2, 1], the interval on which the theta-scheme is certified")
        need(s.dt > 0, f"{name}.dt", "dt must be positive")
        need(s.steps >= 1, f"{name}.steps", "steps must be >= 1")
        need(s.solver_tol > 0, f"{name}.solver_tol", "must be positive")
        need(s.max_iter >= 1, f"{name}.max_iter", "must be >= 1")
    if cfg.cert is not None and cfg.cert.young_epsilon is not None:
        need(0 < cfg.cert.young_epsilon < g.nu, "cert.young_epsilon", "must lie in (0, nu)")
    if cfg.rom is not None:
        need(cfg.fom is not None, "rom", "the reduced model needs a fom section for snapshots")
        need(cfg.rom.n >= 1, "rom.n", "n must be >= 1")
        need(cfg.rom.regime_radius > 0, "rom.regime_radius", "must be positive")
        c = cfg.rom.closure
        need(c.alpha >= 0, "rom.closure.alpha", "damping must be non-negative")
        need(c.c >= 0, "rom.closure.c", "eddy-viscosity coefficient must be non-negative")
    if cfg.estimator is not None:
        need(cfg.rom is not None, "estimator", "estimation needs a rom section")
        e = cfg.estimator
        need(e.L_n_mode != "declared" or e.L_n is not None, "estimator.L_n", "declared mode needs L_n")
        need(e.trials >= 1, "estimator.trials", "must be >= 1")
        need(e.L_reg >= 0, "estimator.L_reg", "must be non-negative")
    if cfg.transition is not None and cfg.transition.enstrophy is not None:
        en = cfg.transition.enstrophy
        need(en.dimension == 2, "transition.enstrophy.dimension",
             "the enstrophy indicator is 2D only; vortex stretching is not sign-definite in 3D")
    for name in ("fsi", "fsi_run"):
        s = getattr(cfg, name)
        if s is None:
            continue
        for k in ("rho_f", "rho_s", "nu", "dt"):
            need(getattr(s, k) > 0, f"{name}.{k}", "must be positive")
        need(0 < s.kappa < 1, f"{name}.kappa", "kappa must lie in (0, 1)")


def parse_config(data: dict, base_dir: str | Path = ".") -> RunConfig:
    """Validate a decoded config mapping; raise SchemaError on the first violation."""
    _check_unsupported(data)
    validator = jsonschema.Draft202012Validator(CONFIG_SCHEMA)
    errors = sorted(validator.iter_errors(data), key=lambda e: list(e.absolute_path))
    if errors:
        err = errors[0]
        path = ".".join(str(p) for p in err.absolute_path)
        if err.validator == "additionalProperties":
            extra = sorted(set(err.instance) - set(err.schema.get("properties", {})))
            raise SchemaError(".".join(filter(None, [path, extra[0]])) if extra else path, f"unknown key(s) {extra}")
        raise SchemaError(path, err.message)
    cfg = _build(RunConfig, data)
    cfg.base_dir = str(base_dir)
    _domain_checks(cfg)
    return cfg


def load_config(path: str | Path) -> RunConfig:
    p = Path(path)
    try:
        text = p.read_text()
    except OSError as exc:
        raise OSError(f"cannot read config {p}: {exc}") from exc
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise SchemaError("", f"invalid JSON: {exc}") from exc
    return parse_config(data, base_dir=p.parent)
