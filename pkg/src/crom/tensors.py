"""Matricial (Mandel) notation kit for 2D plane-strain micromechanics.

Symmetric second-order tensors and fourth-order tensors with minor
symmetries are stored in Mandel matricial form, so that the double
contraction of tensors becomes a plain matrix-vector (or matrix-matrix)
product and tensor norms become Euclidean norms.

Two component orders are used throughout the package:

* in-plane order ``['11', '22', '12']`` — the 3 independent plane-strain
  components handled by the reduced and full-field solvers;
* internal order ``['11', '22', '33', '12']`` — used inside constitutive
  updates, where the out-of-plane normal components are nonzero even
  though the out-of-plane strain is kinematically constrained to zero.

Shear components carry the Mandel weight sqrt(2) in both orders.

Functions
---------
nint
    Nearest integer, rounding half away from zero.
mandel3_from_tensor / tensor_from_mandel3
    Convert between 2x2 symmetric tensors and in-plane Mandel vectors.
mandel3x3_from_tensor4
    Convert a fourth-order 2D tensor to its 3x3 Mandel matrix.
expand3_to4 / extract4_to3 / extract4_to3_matrix
    Move between the in-plane and internal component orders.
iso_stiffness3 / iso_stiffness4
    Isotropic elasticity tensors in both orders.
deviatoric_projector4 / trace4 / dev4
    Deviatoric algebra in the internal order.
lame_from_young / young_from_lame
    Elastic constant conversions.
"""

import numpy as np

# Mandel weight applied to shear components
SQRT2 = np.sqrt(2.0)

# Index pairs of the in-plane order ['11', '22', '12'] in a 2x2 tensor
_INPLANE_PAIRS = ((0, 0), (1, 1), (0, 1))

# Rows/columns of the internal order ['11', '22', '33', '12'] that carry
# the in-plane components
INPLANE_OF_4 = np.array([0, 1, 3])


def nint(x):
    """Nearest integer of x, rounding half away from zero."""
    return int(np.floor(np.abs(x) + 0.5) * np.sign(x)) if x != 0 else 0


def lame_from_young(young, poisson):
    """Lame parameters (lambda, mu) from Young's modulus and Poisson ratio."""
    lam = (young * poisson) / ((1.0 + poisson) * (1.0 - 2.0 * poisson))
    mu = young / (2.0 * (1.0 + poisson))
    return lam, mu


def young_from_lame(lam, mu):
    """Young's modulus and Poisson ratio from the Lame parameters."""
    young = mu * (3.0 * lam + 2.0 * mu) / (lam + mu)
    poisson = lam / (2.0 * (lam + mu))
    return young, poisson


# =============================================================================
# Second-order tensors
# =============================================================================
def mandel3_from_tensor(tensor):
    """Store a symmetric 2x2 tensor (last two axes) as an in-plane Mandel
    3-vector [t11, t22, sqrt2*t12]."""
    tensor = np.asarray(tensor, dtype=float)
    out = np.empty(tensor.shape[:-2] + (3,))
    out[..., 0] = tensor[..., 0, 0]
    out[..., 1] = tensor[..., 1, 1]
    out[..., 2] = SQRT2 * tensor[..., 0, 1]
    return out


def tensor_from_mandel3(vec):
    """Recover the symmetric 2x2 tensor from an in-plane Mandel 3-vector."""
    vec = np.asarray(vec, dtype=float)
    out = np.empty(vec.shape[:-1] + (2, 2))
    out[..., 0, 0] = vec[..., 0]
    out[..., 1, 1] = vec[..., 1]
    out[..., 0, 1] = vec[..., 2] / SQRT2
    out[..., 1, 0] = vec[..., 2] / SQRT2
    return out


def mandel3x3_from_tensor4(tensor4):
    """Store a fourth-order 2D tensor (last four axes, minor symmetries
    assumed) as a 3x3 Mandel matrix in the in-plane order."""
    tensor4 = np.asarray(tensor4, dtype=float)
    out = np.empty(tensor4.shape[:-4] + (3, 3))
    for a, (i, j) in enumerate(_INPLANE_PAIRS):
        wa = 1.0 if i == j else SQRT2
        for b, (k, l) in enumerate(_INPLANE_PAIRS):
            wb = 1.0 if k == l else SQRT2
            out[..., a, b] = wa * wb * tensor4[..., i, j, k, l]
    return out


# =============================================================================
# In-plane <-> internal component orders
# =============================================================================
def expand3_to4(vec3):
    """Embed in-plane Mandel vectors into the internal order with a zero
    out-of-plane component (plane-strain kinematics)."""
    vec3 = np.asarray(vec3, dtype=float)
    out = np.zeros(vec3.shape[:-1] + (4,))
    out[..., 0] = vec3[..., 0]
    out[..., 1] = vec3[..., 1]
    out[..., 3] = vec3[..., 2]
    return out


def extract4_to3(vec4):
    """Drop the out-of-plane component of internal-order Mandel vectors."""
    vec4 = np.asarray(vec4, dtype=float)
    return vec4[..., INPLANE_OF_4]


def extract4_to3_matrix(mat4):
    """In-plane 3x3 block of internal-order 4x4 Mandel matrices.

    Under plane strain the out-of-plane strain is prescribed (zero), so the
    in-plane tangent is exactly this submatrix — no static condensation.
    """
    mat4 = np.asarray(mat4, dtype=float)
    return mat4[..., INPLANE_OF_4[:, None], INPLANE_OF_4[None, :]]


# =============================================================================
# Isotropic elasticity
# =============================================================================
def iso_stiffness3(lam, mu):
    """Plane-strain isotropic stiffness, in-plane 3x3 Mandel matrix.

    D = lam * (e x e) + 2 mu * I with e = [1, 1, 0] (the in-plane block of
    the three-dimensional isotropic tensor).
    """
    e = np.array([1.0, 1.0, 0.0])
    return lam * np.outer(e, e) + 2.0 * mu * np.eye(3)


def iso_stiffness4(lam, mu):
    """Isotropic stiffness in the internal order, 4x4 Mandel matrix."""
    e = np.array([1.0, 1.0, 1.0, 0.0])
    return lam * np.outer(e, e) + 2.0 * mu * np.eye(4)


def deviatoric_projector4():
    """Deviatoric projector in the internal order (4x4 Mandel matrix)."""
    e = np.array([1.0, 1.0, 1.0, 0.0])
    return np.eye(4) - np.outer(e, e) / 3.0


def trace4(vec4):
    """Trace of internal-order Mandel vectors."""
    vec4 = np.asarray(vec4, dtype=float)
    return vec4[..., 0] + vec4[..., 1] + vec4[..., 2]


def dev4(vec4):
    """Deviatoric part of internal-order Mandel vectors."""
    vec4 = np.asarray(vec4, dtype=float)
    out = vec4.copy()
    tr3 = trace4(vec4) / 3.0
    out[..., 0] -= tr3
    out[..., 1] -= tr3
    out[..., 2] -= tr3
    return out
