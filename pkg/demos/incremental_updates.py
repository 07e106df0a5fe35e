"""Incremental interaction-matrix updates after cluster splits.

When a refinement step splits a handful of clusters, most rows and
columns of the cluster interaction matrix are unaffected: entries
between retained clusters can be kept, new entries involving a created
cluster need one convolution each, and the transposed couplings follow
from the exchange symmetry instead of a second convolution.  This demo
refines a synthetic decomposition — three quarters of the clusters are
kept, the rest are split — and compares the incremental update against
a from-scratch reassembly: wall time, tensor-computation counters and
the worst entry deviation.
"""

import numpy as np

from crom.cit import benchmark_cit_update, expected_update_counts
from crom.spectral import VoxelGrid


def main():
    dims = (48, 48)
    grid = VoxelGrid(dims, (1.0, 1.0), np.zeros(dims, dtype=int))
    print("synthetic refinements on a %dx%d grid: keep 3/4 of the "
          "clusters,\nsplit the rest (cluster count grows by a quarter), "
          "3 repeats" % grid.dims)

    header = (" %-7s %-10s %12s %12s %9s %10s"
              % ("n_init", "kept/new", "full scratch", "full incr.",
                 "speedup", "max diff"))
    print("\n" + header)
    for n_init in (8, 16, 32, 64):
        result = benchmark_cit_update(grid, n_init=n_init, alpha=0.75,
                                      beta=0.25, seed=17, repeats=3)
        expected_full, _ = expected_update_counts(result["n_retained"],
                                                  result["n_created"])
        assert result["full_proposed"] == expected_full
        print(" %-7d %-10s %12d %12d %8.2fx %10.2e"
              % (n_init,
                 "%d/%d" % (result["n_retained"], result["n_created"]),
                 result["full_standard"], result["full_proposed"],
                 result["time_standard"] / result["time_proposed"],
                 result["max_rel_diff"]))

    print("\nthe scratch pass recomputes every pair; the incremental "
          "pass only\ntouches pairs involving a created cluster and "
          "mirrors half of those\nthrough the exchange symmetry.")


if __name__ == "__main__":
    main()
