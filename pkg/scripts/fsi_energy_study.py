"""Robin-Robin testbed: coupled energy E versus E plus the interface storage
alpha*dt*|w_G|^2/2, over alpha = factor * 2 C_am and density ratios."""

import argparse

import numpy as np

from certrom.fsi import Testbed, added_mass_coefficient, robin_partitioned_run, testbed_params


def study(seed, steps, dt):
    rng = np.random.default_rng(seed)
    tb = Testbed()
    Kf, _, Ks, _ = tb.matrices()
    u0, w0 = rng.standard_normal(len(Kf)), rng.standard_normal(len(Ks))
    eta0 = 0.1 * rng.standard_normal(len(Ks))
    for ratio in (0.1, 1.0, 10.0):
        p0, _ = testbed_params(tb, ratio, 1.0, 0.1, 1.0, dt)
        cam = added_mass_coefficient(p0)
        for factor in (0.5, 1.0, 4.0, 16.0):
            p, _ = testbed_params(tb, ratio, 1.0, 0.1, factor * 2 * cam, dt)
            s = robin_partitioned_run(tb, p, steps, u0, w0, eta0).summary()
            yield ratio, factor, s


if __name__ == "__main__":
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--steps", type=int, default=100)
    ap.add_argument("--dt", type=float, default=0.01)
    args = ap.parse_args()
    print("rho_f/rho_s  alpha/2C_am  min dE/E0     min d(E+store)/E0  identity residual")
    for ratio, factor, s in study(args.seed, args.steps, args.dt):
        print(f"{ratio:>11}  {factor:>11}  {s['min_energy_decrease'] / s['energy0']:+.3e}  "
              f"{s['min_augmented_decrease'] / s['energy0']:+.3e}         {s['max_identity_residual']:.1e}")
