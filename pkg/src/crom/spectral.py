"""Periodic voxel grids, tensor-field DFTs and the reference Green operator.

The regular grid discretizing the periodic cell has ``n_i`` voxels and
physical edge length ``l_i`` per dimension. Sample coordinates and angular
frequencies follow

    Y_i    = (l_i / n_i) * s_i,          s_i = 0, 1, ..., n_i - 1,
    zeta_i = (2*pi / l_i) * s_i,

with frequencies folded to the signed (negative-alias) convention above the
Nyquist index, as produced by the standard FFT ordering. Transforms are
unnormalized forward and carry the 1/n_v factor on the inverse.

The Green operator of the isotropic reference material (lambda0, mu0) is
assembled from the classical continuous frequency-domain expression of
spectral homogenization,

    G_ijkl(zeta) = [d_ki z_l z_j + d_kj z_l z_i + d_li z_k z_j
                    + d_lj z_k z_i] / (4 mu0 |zeta|^2)
                   - (lambda0 + mu0) / (mu0 (lambda0 + 2 mu0))
                     * z_i z_j z_k z_l / |zeta|^4,

evaluated at the signed discrete frequencies and set to zero at the
homogeneous (zero-frequency) mode, which carries the prescribed macroscale
strain instead.
"""

import numpy as np

from crom.tensors import mandel3x3_from_tensor4, iso_stiffness3, iso_stiffness4


# =============================================================================
# Voxel grid
# =============================================================================
class VoxelGrid:
    """Periodic regular grid of voxels with per-voxel phase labels.

    Attributes
    ----------
    dims : tuple[int]
        Number of voxels per dimension (n_1, n_2).
    lengths : tuple[float]
        Physical edge lengths of the periodic cell per dimension.
    labels : numpy.ndarray[int]
        Per-voxel material-phase identifier, shape ``dims`` (row-major
        with respect to the on-disk format).
    """

    def __init__(self, dims, lengths, labels):
        dims = tuple(int(n) for n in dims)
        lengths = tuple(float(l) for l in lengths)
        labels = np.ascontiguousarray(labels, dtype=np.int64)
        if len(dims) != len(lengths):
            raise ValueError("dims and lengths must have the same rank")
        if any(n < 2 for n in dims):
            raise ValueError("every grid dimension needs at least 2 voxels")
        if any(l <= 0.0 for l in lengths):
            raise ValueError("every cell edge length must be positive")
        if labels.shape != dims:
            if labels.size == int(np.prod(dims)):
                labels = labels.reshape(dims)
            else:
                raise ValueError(
                    "label array size %d does not match grid dims %s"
                    % (labels.size, dims))
        self.dims = dims
        self.lengths = lengths
        self.labels = labels

    @property
    def n_dim(self):
        return len(self.dims)

    @property
    def n_voxels(self):
        return int(np.prod(self.dims))

    @property
    def phases(self):
        """Sorted array of the phase identifiers present in the grid."""
        return np.unique(self.labels)

    def phase_fractions(self):
        """Volume fraction of each phase as a dict phase -> fraction."""
        phases, counts = np.unique(self.labels, return_counts=True)
        return {int(p): c / self.n_voxels for p, c in zip(phases, counts)}

    def __eq__(self, other):
        return (isinstance(other, VoxelGrid)
                and self.dims == other.dims
                and self.lengths == other.lengths
                and np.array_equal(self.labels, other.labels))


def sample_coordinates(grid, index):
    """Physical coordinates of the voxel at a multi-index.

    Parameters
    ----------
    grid : VoxelGrid
    index : sequence[int]
        Multi-index (s_1, s_2) with 0 <= s_i < n_i.

    Returns
    -------
    numpy.ndarray
        Position vector with components (l_i / n_i) * s_i.
    """
    index = tuple(int(i) for i in index)
    if len(index) != grid.n_dim:
        raise ValueError("index rank does not match grid rank")
    for i, n in zip(index, grid.dims):
        if not 0 <= i < n:
            raise IndexError("index %s out of range for dims %s"
                             % (index, grid.dims))
    return np.array([l / n * s
                     for l, n, s in zip(grid.lengths, grid.dims, index)])


def frequency_vector(grid, index, fold=True):
    """Angular frequency (wave vector) of the sample at a multi-index.

    Components are (2*pi / l_i) * s_i; with ``fold`` (the convention used
    throughout the package) indices above the Nyquist index are mapped to
    their negative aliases, e.g. s = n-1 -> -1.
    """
    index = tuple(int(i) for i in index)
    if len(index) != grid.n_dim:
        raise ValueError("index rank does not match grid rank")
    comps = []
    for i, n, l in zip(index, grid.dims, grid.lengths):
        if not 0 <= i < n:
            raise IndexError("index %s out of range for dims %s"
                             % (index, grid.dims))
        # signed alias: indices above (n-1)//2 fold to negatives, so for
        # even n the Nyquist sample sits at -n/2 (the fftfreq layout)
        s = i if not fold or i <= (n - 1) // 2 else i - n
        comps.append(2.0 * np.pi / l * s)
    return np.array(comps)


class FrequencyGrid:
    """Signed angular-frequency samples laid out like the voxel grid.

    Attributes
    ----------
    wave_vectors : numpy.ndarray
        Shape ``dims + (n_dim,)``; entry [0, 0, :] is the zero vector.
    """

    def __init__(self, grid):
        axes = [2.0 * np.pi * np.fft.fftfreq(n, d=l / n)
                for n, l in zip(grid.dims, grid.lengths)]
        mesh = np.meshgrid(*axes, indexing="ij")
        self.wave_vectors = np.stack(mesh, axis=-1)
        self.dims = grid.dims


# =============================================================================
# Discrete Fourier transforms of tensor fields
# =============================================================================
def spectral_transform(field, direction, n_dim=2):
    """Component-wise multidimensional DFT of a per-voxel tensor field.

    Parameters
    ----------
    field : numpy.ndarray
        Leading ``n_dim`` axes are the grid axes; trailing axes (if any)
        are tensor components transformed independently.
    direction : {'forward', 'inverse'}
        Forward is unnormalized; inverse carries the 1/n_v factor.

    Returns
    -------
    numpy.ndarray (complex)
    """
    field = np.asarray(field)
    if field.ndim < n_dim:
        raise ValueError("field has fewer axes than the grid rank")
    axes = tuple(range(n_dim))
    if direction == "forward":
        return np.fft.fftn(field, axes=axes)
    if direction == "inverse":
        return np.fft.ifftn(field, axes=axes)
    raise ValueError("direction must be 'forward' or 'inverse'")


# =============================================================================
# Reference material and Green operator
# =============================================================================
class ReferenceMaterial:
    """Isotropic elastic reference material (lambda0, mu0)."""

    def __init__(self, lame_lambda, shear_mu, n_dim=2):
        lame_lambda = float(lame_lambda)
        shear_mu = float(shear_mu)
        if shear_mu <= 0.0:
            raise ValueError("reference shear modulus must be positive")
        if lame_lambda + 2.0 * shear_mu / n_dim <= 0.0:
            raise ValueError("reference bulk modulus must be positive")
        self.lame_lambda = lame_lambda
        self.shear_mu = shear_mu
        self.n_dim = n_dim

    @property
    def elasticity3(self):
        """In-plane Mandel matrix of the reference elasticity tensor."""
        return iso_stiffness3(self.lame_lambda, self.shear_mu)

    @property
    def elasticity4(self):
        """Internal-order Mandel matrix of the reference elasticity tensor."""
        return iso_stiffness4(self.lame_lambda, self.shear_mu)

    def __repr__(self):
        return ("ReferenceMaterial(lame_lambda=%r, shear_mu=%r)"
                % (self.lame_lambda, self.shear_mu))


class GreenOperator:
    """Frequency-domain Green operator of the reference material.

    Attributes
    ----------
    components : numpy.ndarray
        In-plane Mandel matrices per frequency sample, shape
        ``dims + (3, 3)``; identically zero at the zero-frequency sample.
    reference : ReferenceMaterial
        The material the operator was assembled with.
    """

    def __init__(self, components, reference, dims):
        self.components = components
        self.reference = reference
        self.dims = dims

    def apply(self, field_hat):
        """Contract the operator with a frequency-domain Mandel field
        (shape ``dims + (3,)``)."""
        return np.einsum("...ab,...b->...a", self.components, field_hat)


def assemble_green_operator(reference, grid):
    """Assemble the reference-material Green operator on a grid.

    Parameters
    ----------
    reference : ReferenceMaterial
    grid : VoxelGrid

    Returns
    -------
    GreenOperator
    """
    lam0 = reference.lame_lambda
    mu0 = reference.shear_mu
    freq = FrequencyGrid(grid)
    zeta = freq.wave_vectors                              # dims + (2,)
    zsq = np.sum(zeta ** 2, axis=-1)                      # dims
    nonzero = zsq > 0.0
    inv_zsq = np.where(nonzero, 1.0 / np.where(nonzero, zsq, 1.0), 0.0)

    c1 = 1.0 / (4.0 * mu0)
    c2 = (lam0 + mu0) / (mu0 * (lam0 + 2.0 * mu0))

    n_dim = grid.n_dim
    shape4 = zsq.shape + (n_dim,) * 4
    tensor4 = np.zeros(shape4)
    delta = np.eye(n_dim)
    for i in range(n_dim):
        for j in range(n_dim):
            for k in range(n_dim):
                for l in range(n_dim):
                    term1 = (delta[k, i] * zeta[..., l] * zeta[..., j]
                             + delta[k, j] * zeta[..., l] * zeta[..., i]
                             + delta[l, i] * zeta[..., k] * zeta[..., j]
                             + delta[l, j] * zeta[..., k] * zeta[..., i])
                    term2 = (zeta[..., i] * zeta[..., j]
                             * zeta[..., k] * zeta[..., l])
                    tensor4[..., i, j, k, l] = (
                        c1 * term1 * inv_zsq
                        - c2 * term2 * inv_zsq ** 2)

    components = mandel3x3_from_tensor4(tensor4)
    return GreenOperator(components, reference, grid.dims)
