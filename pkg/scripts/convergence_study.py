"""Time-step convergence of the full-order Taylor-Green run and of the
full-dimension residual estimator eta, for theta = 1/2 and theta = 1."""

import argparse
import math

import numpy as np

from certrom.certifier import CertStepConfig, run_certified
from certrom.estimates import eta_estimator, residual_series
from certrom.reduced import RegimeSet, assemble_reduced, basis_from_fields, project
from certrom.spectral import TorusGrid, fourier_basis, norms, random_field, run_fom, taylor_green


def fom_errors(N, nu, T, dts, theta):
    grid = TorusGrid(N, nu)
    u0 = taylor_green(grid)
    exact = u0 * math.exp(-2 * nu * T)
    out = []
    for dt in dts:
        steps = int(round(T / dt))
        _, s = run_fom(grid, u0, theta, dt, steps, keep_every=steps)
        out.append(norms(grid, s[-1] - exact)[0] / norms(grid, exact)[0])
    return out


def eta_values(N, nu, T, dts, theta, seed=0):
    grid = TorusGrid(N, nu)
    phis, _ = fourier_basis(grid)
    basis = basis_from_fields(phis)
    ops = assemble_reduced(grid, basis)
    u0 = taylor_green(grid) + random_field(grid, np.random.default_rng(seed), norm=1.0)
    out = []
    for dt in dts:
        tr = run_certified(project(basis, u0), ops, CertStepConfig(theta, dt, solver_tol=1e-13),
                           int(round(T / dt)), RegimeSet(1e3))
        out.append(eta_estimator(residual_series(tr, basis, ops, grid), u0, basis, grid, nu)[0])
    return out


if __name__ == "__main__":
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--nu", type=float, default=0.1)
    args = ap.parse_args()
    dts = [0.04, 0.02, 0.01, 0.005]
    for theta in (0.5, 1.0):
        e = fom_errors(16, args.nu, 1.0, dts, theta)
        h = eta_values(8, args.nu, 0.4, dts, theta)
        print(f"theta={theta}")
        for i, dt in enumerate(dts):
            r1 = e[i - 1] / e[i] if i else float("nan")
            r2 = h[i - 1] / h[i] if i else float("nan")
            print(f"  dt={dt:<6} fom err {e[i]:.3e} (ratio {r1:5.2f})   eta {h[i]:.3e} (ratio {r2:5.2f})")
