"""Clustering-based reduced-order micromechanics on periodic voxel grids.

The package solves the homogenized elasto-plastic response of periodic
two-dimensional (plane strain) representative volume elements with a
cluster-reduced Lippmann-Schwinger solver, supports on-the-fly adaptive
refinement of the cluster decomposition (including solution rewinding and
incremental interaction-tensor updates), and ships a full-field spectral
reference solver used to verify the reduced solutions.

Modules
-------
tensors
    Mandel matricial notation kit and isotropic elasticity tensors.
spectral
    Voxel grids, discrete Fourier transforms and the reference-material
    Green operator in the frequency domain.
materials
    Isotropic elasticity and von Mises plasticity with the consistent
    (algorithmic) tangent, vectorized over batches of material points.
clustering
    K-Means machinery (Lloyd, K-Means++, mini-batch) and the per-phase
    base clustering of the voxel grid.
cit
    Cluster interaction tensors: assembly, cluster symmetry, incremental
    update and the update-strategy benchmark.
solver
    Reduced Newton-Raphson solver with the regression-based
    self-consistent scheme, homogenization, fracture and toughness.
adaptivity
    Target selection by feature-jump scanning, cluster splitting, budget
    enforcement and solution rewinding.
oracle
    Full-field spectral elasto-plastic reference solver and error metrics.
rve / config / outputs / pipeline / cli
    Input generation and parsing, on-disk artifact formats, run
    orchestration and the ``crom`` command line.
"""

__version__ = "0.1.0"

from crom.spectral import VoxelGrid, ReferenceMaterial
from crom.materials import PhaseMaterial
from crom.clustering import ClusterMap

__all__ = [
    "VoxelGrid",
    "ReferenceMaterial",
    "PhaseMaterial",
    "ClusterMap",
    "__version__",
]
