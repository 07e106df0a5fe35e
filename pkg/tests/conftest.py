"""Shared builders for the test suite.

Everything here is deliberately dumb and explicit: closed-form oracles are
written from first principles (interface statics, scalar return mapping)
so they share no code path with the package internals they check.
"""

import numpy as np

from crom.clustering import ClusterMap, ClusterRecord
from crom.materials import PhaseMaterial
from crom.spectral import VoxelGrid


# =============================================================================
# Materials
# =============================================================================
def benchmark_materials():
    """The standard two-phase system used across the suite: a stiff
    elasto-plastic matrix (phase 0) with soft elastic inclusions (phase 1)."""
    return {
        0: PhaseMaterial("von_mises", young=100.0, poisson=0.3,
                         sigma_y0=0.5, hardening_coef=0.2,
                         hardening_exp=0.4),
        1: PhaseMaterial("elastic", young=1.0, poisson=0.19),
    }


def elastic_materials():
    """Elastic twin of the benchmark pair (same moduli, no yielding)."""
    return {
        0: PhaseMaterial("elastic", young=100.0, poisson=0.3),
        1: PhaseMaterial("elastic", young=1.0, poisson=0.19),
    }


# =============================================================================
# Grids
# =============================================================================
def disc_grid(n, radius=None, lengths=None):
    """n x n two-phase grid with one centered disc of phase 1."""
    if radius is None:
        radius = 0.25 * n
    lengths = lengths or (float(n), float(n))
    labels = np.zeros((n, n), dtype=np.int64)
    centers = np.indices((n, n)) + 0.5
    r2 = (centers[0] - n / 2.0) ** 2 + (centers[1] - n / 2.0) ** 2
    labels[r2 <= radius ** 2] = 1
    return VoxelGrid((n, n), lengths, labels)


def stripe_grid(n1=8, n2=8, boundary=None, lengths=None):
    """Two-phase laminate: phase 0 fills rows [0, boundary) of the first
    axis, phase 1 the rest, so the layer interfaces are normal to axis 0."""
    boundary = n1 // 2 if boundary is None else boundary
    labels = np.zeros((n1, n2), dtype=np.int64)
    labels[boundary:, :] = 1
    return VoxelGrid((n1, n2), lengths or (float(n1), float(n2)), labels)


def uniform_grid(n1=4, n2=4, phase=0):
    """Single-phase grid."""
    return VoxelGrid((n1, n2), (float(n1), float(n2)),
                     np.full((n1, n2), phase, dtype=np.int64))


# =============================================================================
# Cluster maps without K-Means
# =============================================================================
def map_from_labels(grid, labels):
    """ClusterMap from an explicit per-voxel cluster labeling (each label
    value becomes a base cluster; labels must be phase-pure)."""
    labels = np.array(labels, dtype=np.intp).reshape(-1)  # private copy
    phase_flat = grid.labels.reshape(-1)
    records = {}
    for cid in np.unique(labels):
        voxels = np.flatnonzero(labels == cid)
        records[int(cid)] = ClusterRecord(int(cid),
                                          int(phase_flat[voxels[0]]),
                                          voxels)
    return ClusterMap(grid, labels, records)


def singleton_map(grid):
    """Voxel-per-cluster map (the exact reduced model)."""
    return map_from_labels(grid, np.arange(grid.n_voxels))


def phase_map(grid):
    """One cluster per phase."""
    return map_from_labels(grid, grid.labels.reshape(-1))


# =============================================================================
# Reduced-system assembly shortcut
# =============================================================================
def reduced_system(grid, cmap, materials, reference):
    """Assemble Green operator + interaction matrix and wrap a system."""
    from crom.cit import assemble_matrix
    from crom.solver import ReducedSystem
    from crom.spectral import assemble_green_operator

    green = assemble_green_operator(reference, grid)
    cit = assemble_matrix(cmap, green)
    return ReducedSystem(cmap, materials, cit, reference)


# =============================================================================
# Laminate closed form (independent oracle)
# =============================================================================
def laminate_fields(mat_a, mat_b, f_a, macro):
    """Exact elastic fields of a two-layer laminate with interfaces normal
    to the first axis, under plane strain.

    Derived in the test suite from interface statics alone: the traction
    components sigma_11 and sigma_12 are continuous across the layers, the
    remaining strain components are uniform, and the volume average of the
    strain equals the macroscale strain.

    Parameters
    ----------
    mat_a, mat_b : PhaseMaterial (elastic)
    f_a : float
        Volume fraction of layer a.
    macro : (3,) in-plane Mandel strain (e11, e22, sqrt2*e12).

    Returns
    -------
    dict with per-layer Mandel strain/stress ('strain_a', ...) and the
    homogenized Mandel stress ('macro_stress').
    """
    lam_a, mu_a = mat_a.lame
    lam_b, mu_b = mat_b.lame
    f_b = 1.0 - f_a
    ca = lam_a + 2.0 * mu_a
    cb = lam_b + 2.0 * mu_b
    e11, e22, g = (float(x) for x in macro)

    # normal direction: C_p e11_p + lam_p e22 = s in both layers
    h = 1.0 / (f_a / ca + f_b / cb)
    s = h * (e11 + f_a * lam_a * e22 / ca + f_b * lam_b * e22 / cb)
    e11_a = (s - lam_a * e22) / ca
    e11_b = (s - lam_b * e22) / cb

    # shear: 2 mu_p g_p = t in both layers (Mandel shear components)
    t = g / (f_a / (2.0 * mu_a) + f_b / (2.0 * mu_b))
    g_a = t / (2.0 * mu_a)
    g_b = t / (2.0 * mu_b)

    strain_a = np.array([e11_a, e22, g_a])
    strain_b = np.array([e11_b, e22, g_b])
    stress_a = np.array([s, lam_a * e11_a + ca * e22, t])
    stress_b = np.array([s, lam_b * e11_b + cb * e22, t])
    macro_stress = f_a * stress_a + f_b * stress_b
    return {
        "strain_a": strain_a, "strain_b": strain_b,
        "stress_a": stress_a, "stress_b": stress_b,
        "macro_stress": macro_stress,
    }
