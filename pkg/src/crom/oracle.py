"""Full-field spectral reference solver and field-comparison metrics.

The reference solver iterates the periodic equilibrium fixed point on the
voxel grid in incremental form: given the macroscale strain increment, the
per-voxel strain increment field is repeatedly replaced by

    de  <-  - conv( green, ds_hat(de) - D0 : de ),    mean(de) = de_macro,

where ds_hat is the constitutive stress increment of each voxel and the
zero-frequency mode is pinned to the prescribed macroscale increment. The
scheme is the plain (basic) fixed point: slow but dependable, which is what
a reference implementation should be. The reference material is fixed for
the whole path (volume-average isotropic moduli by default).

Also here: the elastic strain concentration features used by the offline
clustering (three unit-macro-strain linear solves per grid) and the scalar
error metrics used to compare reduced and reference solutions.
"""

import numpy as np

from crom.clustering import FeatureDataset
from crom.materials import StateBatch, state_update
from crom.solver import (IncrementFailure, homogenize, initial_reference,
                         fraction_above)
from crom.spectral import assemble_green_operator, spectral_transform
from crom.tensors import extract4_to3

FIXED_POINT_MAX_ITER = 50000
FIXED_POINT_MAX_CUTS = 4


class FullFieldSolution:
    """Homogenized history plus per-voxel checkpoint fields of a
    full-field solve."""

    def __init__(self, grid):
        self.grid = grid
        self.macro_strain = []
        self.macro_stress = []
        self.iterations = []
        self.cuts = []
        self.fractured = []
        self.reference = None
        self.checkpoint_fields = {}

    def finalize(self):
        self.macro_strain = np.asarray(self.macro_strain)
        self.macro_stress = np.asarray(self.macro_stress)
        self.iterations = np.asarray(self.iterations, dtype=int)
        self.cuts = np.asarray(self.cuts, dtype=int)
        self.fractured = np.asarray(self.fractured, dtype=bool)
        return self

    @property
    def n_increments(self):
        return len(self.macro_strain)

    @property
    def fracture_increment(self):
        hits = np.flatnonzero(self.fractured)
        return int(hits[0]) if hits.size else None

    def checkpoint(self, increment):
        return self.checkpoint_fields[increment]


def _store_checkpoint(solution, increment, states):
    solution.checkpoint_fields[increment] = {
        "strain": states.strain.copy(),
        "stress": states.stress.copy(),
        "acc_p": states.acc_p.copy(),
        "work_p": states.work_p.copy(),
    }


def _voxel_materials(grid, phase_materials):
    """Phase id -> flat voxel rows, validated against the material map."""
    rows = {}
    flat = grid.labels.reshape(-1)
    for phase in grid.phases:
        if int(phase) not in phase_materials:
            raise ValueError("no material for phase %d" % phase)
        rows[int(phase)] = np.flatnonzero(flat == phase)
    return rows


def _trial_field_update(phase_rows, phase_materials, states, delta_field):
    """Vectorized constitutive update of every voxel (state untouched)."""
    n = len(states)
    trial = StateBatch(n)
    delta_sig = np.empty((n, 3))
    for phase, rows in phase_rows.items():
        sub_new, _ = state_update(phase_materials[phase],
                                  states.subset(rows), delta_field[rows])
        trial.assign(rows, sub_new)
        delta_sig[rows] = extract4_to3(sub_new.stress
                                       - states.stress[rows])
    return trial, delta_sig


def _fixed_point_increment(green, phase_rows, phase_materials, states,
                           d0, delta_macro, tol, warm_start=None):
    """Solve one increment of the discretized periodic equilibrium.

    Returns (trial states, converged strain-increment field, iterations).
    """
    dims = green.dims
    n_v = int(np.prod(dims))
    if warm_start is None:
        delta = np.tile(delta_macro, (n_v, 1))
    else:
        delta = warm_start.copy()
    pin = n_v * delta_macro  # unnormalized forward transform at zero freq
    for it in range(1, FIXED_POINT_MAX_ITER + 1):
        trial, delta_sig = _trial_field_update(phase_rows, phase_materials,
                                               states, delta)
        tau = delta_sig - delta @ d0.T
        tau_hat = spectral_transform(tau.reshape(dims + (3,)), "forward")
        new_hat = -np.einsum("...ab,...b->...a", green.components, tau_hat)
        new_hat[(0,) * len(dims)] = pin
        new = spectral_transform(new_hat, "inverse").real.reshape(n_v, 3)
        change = np.linalg.norm(new - delta)
        scale = max(np.linalg.norm(new), 1e-30)
        delta = new
        if change / scale < tol:
            trial, _ = _trial_field_update(phase_rows, phase_materials,
                                           states, delta)
            return trial, delta, it
    raise IncrementFailure("fixed point stalled after %d iterations"
                           % FIXED_POINT_MAX_ITER)


def solve_full_field(grid, phase_materials, loading, reference=None,
                     tol=1e-8, checkpoints=(), fracture=None):
    """Full-field solve of a strain-driven loading path.

    Parameters
    ----------
    grid : VoxelGrid
    phase_materials : dict phase id -> PhaseMaterial
    loading : LoadingPath
        Must be purely strain-driven.
    reference : ReferenceMaterial, optional
        Fixed for the whole path; defaults to the volume-average moduli.
    tol : float
        Relative strain-field change driving fixed-point convergence.
    checkpoints : iterable of int
        Increment indices whose per-voxel fields are retained (the final
        increment is always retained).
    fracture : FractureCriterion, optional
        Evaluated per increment on the voxel accumulated plastic strain.

    Returns
    -------
    FullFieldSolution
    """
    if not np.all(loading.strain_flags):
        raise ValueError("the reference solver is strain-driven only")
    if reference is None:
        reference = initial_reference(grid, phase_materials)
    green = assemble_green_operator(reference, grid)
    d0 = reference.elasticity3
    phase_rows = _voxel_materials(grid, phase_materials)
    n_v = grid.n_voxels
    states = StateBatch(n_v)
    solution = FullFieldSolution(grid)
    solution.reference = reference
    checkpoints = set(int(c) for c in checkpoints)
    warm = None
    weights = np.full(n_v, 1.0 / n_v)

    def advance(states, delta_macro, warm, depth):
        try:
            return (*_fixed_point_increment(green, phase_rows,
                                            phase_materials, states, d0,
                                            delta_macro, tol,
                                            warm_start=warm), depth)
        except IncrementFailure:
            if depth >= FIXED_POINT_MAX_CUTS:
                raise
        half = delta_macro / 2.0
        sub_warm = None if warm is None else warm / 2.0
        states, field, it1, d1 = advance(states, half, sub_warm, depth + 1)
        states, field, it2, d2 = advance(states, half, field, depth + 1)
        return states, field, it1 + it2, max(d1, d2)

    for m in range(loading.n_increments):
        _, deltas = loading.increment(m)
        new_states, field, iters, cuts = advance(states, deltas, warm, 0)
        states = new_states
        warm = field
        solution.macro_strain.append(
            homogenize(extract4_to3(states.strain), weights))
        solution.macro_stress.append(
            homogenize(extract4_to3(states.stress), weights))
        solution.iterations.append(iters)
        solution.cuts.append(cuts)
        if fracture is not None:
            frac = fraction_above(
                states.acc_p[phase_rows[fracture.phase]],
                weights[phase_rows[fracture.phase]],
                fracture.acc_p_threshold)
            solution.fractured.append(
                frac >= fracture.volume_fraction_threshold)
        else:
            solution.fractured.append(False)
        if m in checkpoints or m == loading.n_increments - 1:
            _store_checkpoint(solution, m, states)
    return solution.finalize()


def elastic_concentration_features(grid, phase_materials, tol=1e-10,
                                   reference=None):
    """Per-voxel elastic strain concentration rows for clustering.

    Three linear full-field solves (one per unit macroscale strain
    component) give each voxel's 3x3 concentration matrix, flattened
    row-major into a 9-component feature vector.
    """
    from crom.materials import PhaseMaterial
    from crom.solver import LoadingPath

    elastic = {}
    for phase, mat in phase_materials.items():
        elastic[phase] = PhaseMaterial("elastic", mat.young, mat.poisson)
    if reference is None:
        reference = initial_reference(grid, elastic)
    n_v = grid.n_voxels
    columns = np.empty((n_v, 3, 3))
    for k in range(3):
        unit = np.zeros(3)
        unit[k] = 1.0
        loading = LoadingPath(np.ones((1, 3), dtype=bool), unit[None, :])
        sol = solve_full_field(grid, elastic, loading,
                               reference=reference, tol=tol)
        final = sol.checkpoint(0)
        columns[:, :, k] = extract4_to3(final["strain"])
    rows = columns.reshape(n_v, 9)
    return FeatureDataset(rows, np.arange(n_v, dtype=np.intp))


# =============================================================================
# Comparison metrics
# =============================================================================
def relative_error(reduced, reference):
    """Relative error in percent, |a - b| / |b| * 100."""
    if reference == 0.0:
        raise ValueError("relative error undefined for a zero reference")
    return abs(reduced - reference) / abs(reference) * 100.0


def rmse_field(reduced, reference):
    """Root-mean-square difference of two per-voxel fields."""
    reduced = np.asarray(reduced, dtype=float)
    reference = np.asarray(reference, dtype=float)
    if reduced.shape != reference.shape:
        raise ValueError("field shapes differ: %r vs %r"
                         % (reduced.shape, reference.shape))
    return float(np.sqrt(np.mean((reduced - reference) ** 2)))


def cluster_field_to_voxels(cluster_map, values):
    """Spread per-cluster values to voxels (piecewise-uniform fields).

    ``values`` rows follow the ascending active-id order; returns the
    per-voxel array."""
    values = np.asarray(values, dtype=float)
    ids = cluster_map.active_ids()
    if values.shape[0] != ids.size:
        raise ValueError("one value row per active cluster required")
    out = np.empty((cluster_map.grid.n_voxels,) + values.shape[1:])
    for row, cid in enumerate(ids):
        out[cluster_map.members(cid)] = values[row]
    return out
