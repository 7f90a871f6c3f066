"""Run orchestration and report emission.

A run executes the requested stages in order (FOM, POD, certified ROM,
error certificate, transition indicators, FSI margins, FSI testbed), folds
every constant into the report with a provenance tag, and emits a
deterministic JSON report, a text summary and CSV artifacts.
"""

from __future__ import annotations

import hashlib
import io
import json
import math
import tempfile
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from . import __version__
from .certifier import FLAG_NAMES, CertStepConfig, LedgerEntry, run_certified
from .config import RunConfig, SchemaError
from .estimates import (
    QUADRATURE_RULE,
    RIESZ_METHOD,
    aposteriori_bound,
    apriori_report,
    best_approximation_error,
    convective_lipschitz,
    eta_estimator,
    residual_series,
    true_error,
)
from .fsi import (
    CoupledLedgerEntry,
    FsiParams,
    Testbed,
    added_mass_coefficient,
    alpha_margin,
    dt_margin,
    lambda_h,
    ledger_csv,
    margin_report,
    read_triplets,
    robin_partitioned_run,
    testbed_params,
    write_triplets,
)
from .reduced import (
    EddyViscosity,
    LinearDamping,
    NegativeDampingProbe,
    NoClosure,
    RegimeSet,
    SnapshotSet,
    assemble_reduced,
    closure_lipschitz,
    lift,
    pod_basis,
    project,
    save_reduced,
)
from .spectral import (
    ForcingSpec,
    NonConvergence,
    TorusGrid,
    fom_theta_step,
    leray_project,
    norms,
    random_field,
    read_state_csv,
    taylor_green,
    write_state_csv,
)
from .transition import (
    EnstrophyThresholdInput,
    ResolventQuery,
    amplification_verdict,
    energy_barrier_check,
    enstrophy_threshold_check,
    forcing_curl_norms,
    linearized_operator,
    shear_constant,
    sigma_sweep,
    vorticity_norm,
    write_sweep_csv,
)

__all__ = ["RunReport", "orchestrate", "emit", "exit_code", "recompute_bounds", "STAGES", "stages_for"]

REPORT_FORMAT = "certrom-report-v1"
STAGES = ("fom", "pod", "certify", "estimate", "transition", "fsi_margin", "fsi_run")
_SECTION = {
    "fom": "fom",
    "pod": "rom",
    "certify": "rom",
    "estimate": "estimator",
    "transition": "transition",
    "fsi_margin": "fsi",
    "fsi_run": "fsi_run",
}
_PREREQ = {"pod": ("fom",), "certify": ("fom", "pod"), "estimate": ("fom", "pod", "certify")}


@dataclass
class RunReport:
    body: dict
    artifacts: dict = field(default_factory=dict)  # file name -> bytes

    @property
    def flags(self) -> dict:
        return self.body["flags"]


def stages_for(cfg: RunConfig, requested=None) -> list[str]:
    """Stages to run: the requested ones plus prerequisites, or every stage
    whose config section is present."""
    if requested is None:
        want = [s for s in STAGES if getattr(cfg, _SECTION[s]) is not None]
    else:
        want = set()
        for s in requested:
            want.add(s)
            want.update(_PREREQ.get(s, ()))
        want = [s for s in STAGES if s in want]
    for s in want:
        if getattr(cfg, _SECTION[s]) is None:
            raise SchemaError(_SECTION[s], f"section required by stage '{s}' is missing")
    return want


# --------------------------------------------------------------------------
# helpers


def _clean(x):
    """Convert numpy scalars/arrays for JSON; keep full float precision."""
    if isinstance(x, dict):
        return {str(k): _clean(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_clean(v) for v in x]
    if isinstance(x, np.ndarray):
        return [_clean(v) for v in x.tolist()]
    if isinstance(x, (np.bool_,)):
        return bool(x)
    if isinstance(x, np.integer):
        return int(x)
    if isinstance(x, (float, np.floating)):
        v = float(x)
        return v if math.isfinite(v) else repr(v)
    return x


def _const(value, provenance, **extra):
    return {"value": value, "provenance": provenance, **extra}


def _field(grid: TorusGrid, spec, rng, base_dir) -> np.ndarray:
    kind = spec.kind
    if kind in ("none", "zero"):
        return grid.zeros()
    if kind == "taylor_green":
        u = taylor_green(grid, spec.amplitude)
        if spec.perturbation:
            u = u + random_field(grid, rng, kcut=spec.kcut, norm=spec.perturbation)
        return u
    if kind == "random":
        return random_field(grid, rng, kcut=spec.kcut, norm=spec.norm)
    if kind == "state_csv":
        g2, u, _ = read_state_csv((Path(base_dir) / spec.path).read_text())
        if g2.N != grid.N:
            raise SchemaError("path", f"state file has N={g2.N}, grid has N={grid.N}")
        return leray_project(grid, u)
    raise SchemaError("kind", f"field kind {kind!r} not valid here")


def _forcing(grid: TorusGrid, spec, rng, base_dir) -> ForcingSpec:
    if spec.kind == "taylor_green_samples":
        if len(spec.times) != len(spec.amplitudes) or not spec.times:
            raise SchemaError("forcing", "times and amplitudes must be non-empty and of equal length")
        tg = taylor_green(grid)
        return ForcingSpec(grid, times=spec.times, samples=[a * tg for a in spec.amplitudes])
    return ForcingSpec(grid, constant=_field(grid, spec, rng, base_dir))


def _closure(c):
    if c.kind == "none":
        return NoClosure()
    if c.kind == "linear_damping":
        return LinearDamping(c.alpha)
    if c.kind == "eddy_viscosity":
        return EddyViscosity(c.c, c.regime_radius)
    return NegativeDampingProbe(c.strength)


def _csv(header, rows) -> bytes:
    buf = io.StringIO()
    buf.write(",".join(header) + "\n")
    for r in rows:
        buf.write(",".join(repr(float(v)) if isinstance(v, (float, np.floating)) else str(v) for v in r) + "\n")
    return buf.getvalue().encode()


# --------------------------------------------------------------------------
# orchestration


def orchestrate(cfg: RunConfig, stages=None) -> RunReport:
    stages = stages_for(cfg, stages)
    randomized = any(s in stages for s in ("certify", "estimate", "fsi_run")) or cfg.initial.kind == "random" \
        or cfg.initial.perturbation or cfg.forcing.kind == "random"
    if cfg.seed is None and randomized:
        raise SchemaError("seed", "a seed is mandatory for randomized stages")
    seed = 0 if cfg.seed is None else int(cfg.seed)
    streams = np.random.SeedSequence(seed).spawn(5)
    rng_field, rng_cert, rng_est, rng_fsi, _ = (np.random.default_rng(s) for s in streams)

    grid = TorusGrid(cfg.grid.N, cfg.grid.nu, cfg.grid.dealias_fraction)
    body = {
        "format": REPORT_FORMAT,
        "version": __version__,
        "scenario": cfg.scenario,
        "seed": seed,
        "config": cfg.to_dict(),
        "stages_requested": stages,
        "stages": {},
        "constants": {},
        "errors": [],
        "solver_policy": {},
    }
    flags = {k: None for k in FLAG_NAMES}
    qualifiers = {}
    evidence = {}
    art: dict[str, bytes] = {}
    consts = body["constants"]
    S = body["stages"]
    ctx = {}

    def fail(stage, exc):
        body["errors"].append({"stage": stage, "error": f"{type(exc).__name__}: {exc}"})

    u0 = _field(grid, cfg.initial, rng_field, cfg.base_dir)
    forcing = _forcing(grid, cfg.forcing, rng_field, cfg.base_dir)
    consts["nu"] = _const(grid.nu, "declared")
    consts["C_P"] = _const(grid.poincare, "computed", note="2pi-torus, lowest |k| = 1")

    # ---- full-order model
    def stage_fom():
        f = cfg.fom
        times, states, reason = [0.0], [leray_project(grid, u0)], None
        iters = []
        u = states[0]
        for k in range(f.steps):
            try:
                u, info = fom_theta_step(grid, u, f.theta, f.dt, forcing, k * f.dt, f.solver_tol, f.max_iter)
            except NonConvergence as exc:
                reason = f"step {k}: {exc}"
                break
            iters.append(info.iterations)
            times.append((k + 1) * f.dt)
            states.append(u)
        times, states = np.array(times), np.stack(states)
        l2 = np.array([norms(grid, s)[0] for s in states])
        in_ball = True if f.regime_radius is None else bool(np.all(l2 <= f.regime_radius * (1 + 1e-12)))
        S["fom"] = {
            "steps_completed": len(times) - 1,
            "theta": f.theta, "dt": f.dt, "T": float(times[-1]),
            "max_l2": float(l2.max()), "final_l2": float(l2[-1]),
            "max_solver_iterations": int(max(iters, default=0)),
            "regime_radius": f.regime_radius,
            "uncertified_reason": reason,
        }
        evidence["fom_regime"] = {"converged": reason is None, "in_declared_ball": in_ball}
        flags["regime-ok"] = bool(reason is None and in_ball)
        body["solver_policy"]["fom"] = {"method": "fixed-point on u_theta", "tol": f.solver_tol, "max_iter": f.max_iter}
        art["fom_final_state.csv"] = write_state_csv(grid, states[-1], times[-1]).encode()
        ctx["fom"] = (times, states)

    # ---- POD
    def stage_pod():
        times, states = ctx["fom"]
        cnt = min(cfg.fom.snapshot_count, len(states))
        idx = np.unique(np.round(np.linspace(0, len(states) - 1, cnt)).astype(int))
        w = np.full(len(idx), times[-1] / len(idx) if times[-1] > 0 else 1.0)
        snaps = SnapshotSet(states[idx], w, times[idx], run_id=cfg.scenario)
        basis = pod_basis(grid, snaps, cfg.rom.n)
        ops = assemble_reduced(grid, basis, forcing, _closure(cfg.rom.closure))
        tamper = cfg.rom.tamper
        if tamper is not None:
            # break one antisymmetric pair: only T[j, k, i] moves
            ops.convection[tamper.j, tamper.k, tamper.i] += tamper.delta
        S["pod"] = {
            "n": basis.n,
            "snapshots": int(len(idx)),
            "pod_spectrum": basis.pod_spectrum,
            "tail_energy": basis.tail_energy,
            "gram_max_deviation": float(np.abs(basis.gram - np.eye(basis.n)).max()),
            "closure": {"kind": ops.closure.kind, **ops.closure.params()},
            "tampered": None if tamper is None else asdict(tamper),
            "operator_fingerprint": ops.fingerprint(),
        }
        with tempfile.TemporaryDirectory() as td:
            save_reduced(Path(td) / "rom", grid, basis, ops)
            art["rom.npz"] = (Path(td) / "rom.npz").read_bytes()
            art["rom.json"] = (Path(td) / "rom.json").read_bytes()
        ctx["pod"] = (basis, ops)

    # ---- certified ROM
    def stage_certify():
        basis, ops = ctx["pod"]
        c = cfg.cert or _inherit_cert(cfg)
        scfg = CertStepConfig(c.theta, c.dt, c.solver_tol, c.max_iter, c.young_epsilon)
        regime = RegimeSet(cfg.rom.regime_radius)
        a0 = project(basis, u0)
        traj = run_certified(a0, ops, scfg, c.steps, regime, seed=int(rng_cert.integers(2**31)),
                             test_set_size=c.test_set_size, on_failure=c.on_failure)
        ft = traj.flags
        flags["skew-ok"] = ft.skew_ok
        flags["diss-ok"] = ft.diss_ok
        cert_ok = bool(ft.regime_ok and traj.extra["ledger_ok"] and traj.energy_bound_holds)
        flags["regime-ok"] = bool((flags["regime-ok"] is not False) and cert_ok)
        slacks = [e.inequality_slack for e in traj.ledger]
        S["certify"] = {
            "theta": c.theta, "dt": c.dt, "steps_completed": traj.steps, "T": float(traj.times[-1]),
            "young_epsilon": traj.young_epsilon,
            "ledger_tol": scfg.ledger_tol,
            "min_inequality_slack": float(min(slacks, default=0.0)),
            "young_min_margin": float(min((e.young_rhs - e.young_lhs for e in traj.ledger), default=0.0)),
            "energy_bound": traj.energy_bound,
            "energy_bound_holds": traj.energy_bound_holds,
            "ledger_ok": traj.extra["ledger_ok"],
            "max_skew_defect": ft.max_skew_defect,
            "max_diss_defect": ft.max_diss_defect,
            "defect_threshold": ft.threshold,
            "test_set_size": traj.test_set_size,
            "regime_radius": traj.regime_radius,
            "stayed_in_regime": ft.regime_ok,
            "max_reduced_norm": float(np.linalg.norm(traj.states, axis=1).max()),
            "uncertified_reason": traj.uncertified_reason,
            "operator_fingerprint": traj.ops_fingerprint,
        }
        evidence["certify"] = {
            "skew": {"max": ft.max_skew_defect, "threshold": ft.threshold},
            "diss": {"max": ft.max_diss_defect, "threshold": ft.threshold},
            "regime": {"in_ball": ft.regime_ok, "ledger_ok": traj.extra["ledger_ok"],
                       "energy_bound_holds": traj.energy_bound_holds},
        }
        body["solver_policy"]["rom"] = {
            "method": "Newton", "tol": c.solver_tol, "max_iter": c.max_iter,
            "ledger_slack": "10 * solver_tol", "on_failure": c.on_failure,
        }
        consts["young_epsilon"] = _const(traj.young_epsilon, "declared" if c.young_epsilon else "computed",
                                         note="default nu/2")
        art["ledger.csv"] = _csv(LedgerEntry.CSV_COLUMNS, traj.ledger_rows())
        ctx["certify"] = traj

    # ---- error certificate
    def stage_estimate():
        basis, ops = ctx["pod"]
        traj = ctx["certify"]
        e = cfg.estimator
        res = residual_series(traj, basis, ops, grid, forcing)
        eta, rl2, init = eta_estimator(res, u0, basis, grid, grid.nu)
        times, states = ctx["fom"]
        L_n, prov = convective_lipschitz(
            grid, basis, traj, reference=states, mode=e.L_n_mode, declared=e.L_n, trials=e.trials,
            regime_radius=cfg.rom.regime_radius, rng=rng_est,
        )
        regime = RegimeSet(cfg.rom.regime_radius)
        L_C = closure_lipschitz(ops.closure, ops, regime)
        T = float(traj.times[-1])
        bound = aposteriori_bound(eta, L_n, L_C, grid.nu, T)
        M_n = float(max(norms(grid, lift(basis, a))[1] for a in traj.states))
        matched = len(times) == len(traj.times) and np.allclose(times, traj.times, rtol=0, atol=1e-12)
        terr = true_error(traj, basis, grid, times, states) if matched else None
        effectivity = bound / terr if terr else None
        if e.apriori_source == "exact-against-reference" and matched:
            eps_n, src = best_approximation_error(basis, grid, times, states), "exact-against-reference"
        else:
            eps_n, src = math.sqrt(basis.tail_energy), "pod-tail-surrogate"
        ap = apriori_report(eps_n, e.L_reg, grid.nu, T, src)
        flags["residual-computed"] = res.residual_computed
        gronwall = math.exp((L_n + L_C) * T / grid.nu)
        S["estimate"] = {
            "eta": eta, "residual_l2": rl2, "initial_mismatch": init,
            "L_n": L_n, "L_n_provenance": prov, "L_C": L_C, "M_n": M_n,
            "nu": grid.nu, "T": T, "gronwall_factor": gronwall, "bound": bound,
            "bound_label": "estimated" if prov == "estimated" else "certified",
            "true_error": terr, "effectivity": effectivity,
            "reference_grid_matched": bool(matched),
            "quadrature": QUADRATURE_RULE, "riesz_map": RIESZ_METHOD,
            "residual_operator_fingerprint": res.operator_fingerprint,
            "apriori": asdict(ap),
        }
        consts["L_n"] = _const(L_n, prov, trials=e.trials if prov == "estimated" else None)
        consts["L_C"] = _const(L_C, "computed", closure=ops.closure.kind)
        consts["M_n"] = _const(M_n, "computed")
        consts["L_reg"] = _const(e.L_reg, "declared")
        consts["epsilon_n"] = _const(eps_n, "computed" if src == "exact-against-reference" else "estimated",
                                     source=src)
        if prov == "estimated":
            qualifiers["regime-ok"] = "estimated-constants"
        evidence["residual"] = {"same_operators": res.computed_with_trajectory_operators,
                                "finite": bool(np.all(np.isfinite(res.dual_norms)))}
        art["residual.csv"] = _csv(("time", "dual_norm"), zip(res.times, res.dual_norms))

    # ---- transition indicators
    def stage_transition():
        tr = cfg.transition
        out = {}
        U = _field(grid, tr.base_flow, rng_field, cfg.base_dir)
        if tr.barrier:
            flow = shear_constant(grid, U)
            v = energy_barrier_check(flow, grid.nu)
            out["energy_barrier"] = v.as_dict()
            consts["gamma_U"] = _const(flow.gamma_U, "computed", realization=flow.realization)
        if tr.enstrophy is not None:
            en = tr.enstrophy
            st = cfg.fom or _default_steps()
            tgrid = np.arange(st.steps + 1) * st.dt
            sample_t = np.concatenate([tgrid, tgrid[:-1] + st.theta * st.dt])
            sample_t.sort()
            G = forcing_curl_norms(grid, forcing, sample_t)
            w0 = vorticity_norm(grid, u0)
            probe = EnstrophyThresholdInput(grid.nu, sample_t, G, 1.0, en.epsilon, en.C_P_omega, w0, en.dimension)
            _, r_min = enstrophy_threshold_check(probe)
            R = en.R if en.R is not None else max(r_min, w0)
            v, _ = enstrophy_threshold_check(
                EnstrophyThresholdInput(grid.nu, sample_t, G, R, en.epsilon, en.C_P_omega, w0, en.dimension))
            block = v.as_dict()
            if en.simulate:
                if "fom" in ctx:
                    _, states = ctx["fom"]
                else:
                    states = _simulate(grid, u0, forcing, st)
                wn = np.array([vorticity_norm(grid, s) for s in states])
                block["simulation"] = {"max_vorticity_norm": float(wn.max()), "R": R,
                                       "stayed_in_ball": bool(np.all(wn <= R * (1 + 1e-12)))}
            out["enstrophy_threshold"] = block
        if tr.resolvent is not None:
            rq = tr.resolvent
            op = linearized_operator(grid, U, rq.truncation)
            rows = sigma_sweep(op, rq.sigmas)
            out["resolvent"] = [
                amplification_verdict(ResolventQuery(s, rq.truncation, rq.theta_threshold, rq.forcing_bound), r).as_dict()
                for s, r in rows
            ]
            art["sigma_sweep.csv"] = write_sweep_csv(rows).encode()
        S["transition"] = out

    # ---- FSI margins
    margin_flags = []
    def stage_fsi_margin():
        s = cfg.fsi
        prov = {}
        Lam = s.Lambda_h
        if s.structure_manifest:
            Lam = lambda_h(read_triplets(Path(cfg.base_dir) / s.structure_manifest))
            prov["Lambda_h"] = "computed"
        p = FsiParams(s.rho_f, s.rho_s, s.nu, s.alpha, s.dt, s.C_tr_h, Lam, s.c_C_h, s.kappa)
        rep = margin_report(p, tuple(s.flow_norms) if s.flow_norms else None, prov)
        S["fsi_margin"] = rep.as_dict()
        margin_flags.append(rep.margin_ok)
        if rep.regime_ok is not None:
            flags["regime-ok"] = bool((flags["regime-ok"] is not False) and rep.regime_ok)
        evidence["fsi_margin"] = {"dt": p.dt, "dt_max": rep.dt_max}

    def stage_fsi_run():
        s = cfg.fsi_run
        tb = Testbed(s.fluid_cells, s.structure_cells, s.stiffness)
        p0, prov = testbed_params(tb, s.rho_f, s.rho_s, s.nu, 1.0, s.dt, s.kappa)
        cam = added_mass_coefficient(p0)
        alpha = s.alpha if s.alpha is not None else s.alpha_factor * 2.0 * cam
        prov["alpha"] = "declared" if s.alpha is not None else "computed"
        p, _ = testbed_params(tb, s.rho_f, s.rho_s, s.nu, alpha, s.dt, s.kappa)
        nf, ns = s.fluid_cells, s.structure_cells
        run = robin_partitioned_run(
            tb, p, s.steps,
            u0=s.initial_scale * rng_fsi.standard_normal(nf),
            w0=s.initial_scale * rng_fsi.standard_normal(ns),
            eta0=0.1 * s.initial_scale * rng_fsi.standard_normal(ns),
            provenance=prov,
        )
        S["fsi_run"] = {"margin": run.report.as_dict(), "ledger_summary": run.summary(),
                        "ledger_tolerance": run.tolerance}
        margin_flags.append(run.report.alpha_condition_ok)
        evidence["fsi_run"] = {"alpha": p.alpha, "two_C_am": 2 * run.report.C_am}
        art["fsi_ledger.csv"] = ledger_csv(run.ledger, CoupledLedgerEntry.CSV_COLUMNS).encode()
        with tempfile.TemporaryDirectory() as td:
            write_triplets(tb.structure(), td, "structure")
            for name in ("structure.json", "structure_K.txt", "structure_M.txt"):
                art[name] = (Path(td) / name).read_bytes()
    runners = {name: fn for name, fn in locals().items() if name.startswith("stage_")}
    failed = set()
    for name in stages:
        if failed.intersection(_PREREQ.get(name, ())):
            failed.add(name)
            body["errors"].append({"stage": name, "error": "skipped: a prerequisite stage failed"})
            continue
        try:
            runners[f"stage_{name}"]()
        except Exception as exc:  # recorded, never dropped
            failed.add(name)
            fail(name, exc)

    if margin_flags:
        flags["margin-ok"] = bool(all(margin_flags))

    body["flags"] = flags
    body["flag_evidence"] = evidence
    body["flag_qualifiers"] = qualifiers
    evaluated = {k: v for k, v in flags.items() if v is not None}
    body["certified"] = bool(evaluated) and all(evaluated.values()) and not body["errors"]
    return RunReport(_clean(body), art)


def _inherit_cert(cfg):
    from .config import CertSection

    f = cfg.fom
    return CertSection(theta=f.theta, dt=f.dt, steps=f.steps, solver_tol=f.solver_tol, max_iter=f.max_iter)


def _default_steps():
    from .config import StepSection

    return StepSection()


def _simulate(grid, u0, forcing, st):
    u = leray_project(grid, u0)
    out = [u]
    for k in range(st.steps):
        u, _ = fom_theta_step(grid, u, st.theta, st.dt, forcing, k * st.dt, st.solver_tol, st.max_iter)
        out.append(u)
    return out


# --------------------------------------------------------------------------
# exit codes, emission, self-containment


def exit_code(report: RunReport) -> int:
    if report.body.get("errors"):
        return 1
    vals = [v for v in report.flags.values() if v is not None]
    return 0 if all(vals) else 2


def _summary(body: dict) -> str:
    lines = [f"certrom report ({body['format']}), scenario {body['scenario']}, seed {body['seed']}", ""]
    lines.append("flag table")
    for k in FLAG_NAMES:
        v = body["flags"][k]
        q = body["flag_qualifiers"].get(k)
        state = "not requested" if v is None else ("true" if v else "FALSE")
        lines.append(f"  {k:<18} {state}" + (f" ({q})" if q else ""))
    lines.append("")
    lines.append(f"certified: {body['certified']}")
    st = body["stages"]
    if "certify" in st:
        c = st["certify"]
        lines.append(f"ledger: min slack {c['min_inequality_slack']!r}, tolerance {c['ledger_tol']!r}")
        lines.append(f"defects: skew {c['max_skew_defect']!r}, diss {c['max_diss_defect']!r}")
    if "estimate" in st:
        e = st["estimate"]
        lines.append(f"a posteriori bound ({e['bound_label']}): {e['bound']!r}; true error {e['true_error']!r}; "
                     f"effectivity {e['effectivity']!r}")
    if "fsi_margin" in st:
        m = st["fsi_margin"]
        lines.append(f"fsi: C_am {m['C_am']!r}, dt_max {m['dt_max']!r}, alpha_min {m['alpha_min']!r}")
    if "fsi_run" in st:
        r = st["fsi_run"]["ledger_summary"]
        lines.append(f"fsi testbed: {r['header']}")
        lines.append(f"  coupled energy non-increasing: {r['energy_nonincreasing']}; "
                     f"with interface storage: {r['augmented_nonincreasing']}")
    if "transition" in st:
        for name, blk in st["transition"].items():
            blks = blk if isinstance(blk, list) else [blk]
            for b in blks:
                tail = f" [{b['caveat']}]" if b.get("caveat") else ""
                lines.append(f"{b['indicator']}: {b['verdict']}{tail}")
    for err in body["errors"]:
        lines.append(f"error in {err['stage']}: {err['error']}")
    return "\n".join(lines) + "\n"


def emit(report: RunReport, out_dir: str | Path) -> list[Path]:
    """Write artifacts, summary and report.json; returns written paths."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    written = []
    inventory = []
    files = dict(report.artifacts)
    files["summary.txt"] = _summary(report.body).encode()
    for name in sorted(files):
        data = files[name]
        (out / name).write_bytes(data)
        written.append(out / name)
        inventory.append({"file": name, "bytes": len(data), "sha256": hashlib.sha256(data).hexdigest()})
    body = dict(report.body)
    body["artifacts"] = inventory
    text = json.dumps(body, indent=2, sort_keys=True, allow_nan=False) + "\n"
    (out / "report.json").write_text(text)
    written.append(out / "report.json")
    return written


def recompute_bounds(body: dict) -> dict:
    """Redo the bound arithmetic from the numbers stored in a report."""
    out = {}
    st = body["stages"]
    if "estimate" in st:
        e = st["estimate"]
        out["aposteriori"] = (e["bound"], aposteriori_bound(e["eta"], e["L_n"], e["L_C"], e["nu"], e["T"]))
        a = e["apriori"]
        out["apriori"] = (a["bound"], apriori_report(a["epsilon_n"], a["L_reg"], e["nu"], e["T"]).bound)
    for key in ("fsi_margin",):
        if key in st:
            m = st[key]
            out.update(_margin_recompute(m, key))
    if "fsi_run" in st:
        out.update(_margin_recompute(st["fsi_run"]["margin"], "fsi_run"))
    return out


def _margin_recompute(m: dict, key: str) -> dict:
    v = {k: m["inputs"][k]["value"] for k in m["inputs"]}
    p = FsiParams(**v)
    cam = added_mass_coefficient(p)
    return {
        f"{key}.C_am": (m["C_am"], cam),
        f"{key}.dt_max": (m["dt_max"], dt_margin(p.alpha, cam)),
        f"{key}.alpha_min": (m["alpha_min"], alpha_margin(p.dt, cam)),
    }
