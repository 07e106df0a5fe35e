"""Cluster-reduced solve against the full-field reference.

Runs the same two-particle cell twice — once with the cluster-reduced
solver at a handful of clusters per phase, once with the full-field
spectral solver — from a single shared configuration, then compares
homogenized curves and the final plastic strain field as the cluster
count grows.
"""

import numpy as np

from crom.config import parse_config
from crom.oracle import rmse_field
from crom.pipeline import resolve_grid, run_oracle, run_reduced

CONFIG = """\
[run]
mode = sca
output = unused
seed = 11

[rve]
kind = two_particle
dims = 32 32
volume_fraction = 0.15

[material.0]
model = von_mises
young = 100.0
poisson = 0.3
yield_stress = 0.5
hardening_coef = 0.2
hardening_exp = 0.4

[material.1]
model = elastic
young = 1.0
poisson = 0.19

[clustering]
clusters = 0:%d 1:%d
n_init = 4

[loading]
increments = 25
strain_xx = 0.03

[solver]
newton_tol = 1e-9
"""


def main():
    cfg = parse_config("demo.cfg", text=CONFIG % (4, 2))
    grid, _ = resolve_grid(cfg)

    print("full-field reference ...")
    oracle_hist, oracle_dumps, _ = run_oracle(cfg, grid)
    ref_curve = np.array([(r["eps_xx"], r["sig_xx"])
                          for r in oracle_hist])
    ref_field = oracle_dumps[("acc_p", len(oracle_hist))]

    print("\n %-9s %10s %12s %14s"
          % ("clusters", "n_c", "sig_xx error", "acc_p rmse"))
    for c0, c1 in ((4, 2), (8, 2), (16, 4), (32, 8)):
        cfg = parse_config("demo.cfg", text=CONFIG % (c0, c1))
        hist, _, dumps, system = run_reduced(cfg, grid, adaptive=False)
        curve = np.array([(r["eps_xx"], r["sig_xx"]) for r in hist])
        sig_err = np.abs(curve[:, 1] - ref_curve[:, 1]).max() \
            / np.abs(ref_curve[:, 1]).max()
        field_err = rmse_field(dumps[("acc_p", len(hist))], ref_field)
        print(" %-9s %10d %12.4e %14.4e"
              % ("%d+%d" % (c0, c1), system.n_c, sig_err, field_err))

    print("\nhomogenized curves agree to a few percent at a few dozen "
          "clusters;\nthe local plastic strain field converges more "
          "slowly, which is what\nthe adaptive refinement demo targets.")


if __name__ == "__main__":
    main()
