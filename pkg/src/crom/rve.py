"""Voxel RVE input/output and synthetic microstructure generators.

File format: one header line ``n1 n2 l1 l2`` followed by the integer
phase labels in row-major order, whitespace-separated. Generators paint
circular particles (phase 1) into a matrix (phase 0) with periodic
wrapping, either a fixed two-particle pair on the horizontal midline or
randomly placed non-overlapping discs targeting a volume fraction.
"""

import math

import numpy as np

from crom.spectral import VoxelGrid

GENERATOR_KINDS = ("two_particle", "multi_particle")
FRACTION_TOL = 0.02       # achieved vs requested particle fraction
PLACEMENT_TRIES = 20000


def load_rve(path):
    """Read a voxel grid from the plain-text format."""
    with open(path) as handle:
        tokens = handle.read().split()
    if len(tokens) < 4:
        raise ValueError("%s: header needs 'n1 n2 l1 l2'" % path)
    try:
        n1, n2 = int(tokens[0]), int(tokens[1])
        l1, l2 = float(tokens[2]), float(tokens[3])
    except ValueError:
        raise ValueError("%s: malformed header %r" % (path, tokens[:4]))
    body = tokens[4:]
    if len(body) != n1 * n2:
        raise ValueError("%s: expected %d labels for a %dx%d grid, found "
                         "%d" % (path, n1 * n2, n1, n2, len(body)))
    try:
        labels = np.array([int(t) for t in body], dtype=int)
    except ValueError:
        raise ValueError("%s: non-integer phase label in body" % path)
    if labels.min() < 0:
        raise ValueError("%s: negative phase label" % path)
    return VoxelGrid((n1, n2), (l1, l2), labels.reshape(n1, n2))


def save_rve(grid, path):
    """Write a voxel grid in the plain-text format (one grid row per
    line)."""
    n1, n2 = grid.dims
    lines = ["%d %d %.17g %.17g" % (n1, n2, grid.lengths[0],
                                    grid.lengths[1])]
    body = grid.labels.reshape(n1, n2)
    for i in range(n1):
        lines.append(" ".join(str(int(v)) for v in body[i]))
    with open(path, "w") as handle:
        handle.write("\n".join(lines) + "\n")


class GeneratorSpec:
    """Synthetic microstructure request."""

    def __init__(self, kind, dims, lengths=None, volume_fraction=None,
                 radius=None, centers=None, count=None, seed=None):
        if kind not in GENERATOR_KINDS:
            raise ValueError("unknown generator kind %r (one of %r)"
                             % (kind, GENERATOR_KINDS))
        self.kind = kind
        self.dims = (int(dims[0]), int(dims[1]))
        if self.dims[0] < 2 or self.dims[1] < 2:
            raise ValueError("generator dims must be at least 2x2")
        if lengths is None:
            lengths = (float(self.dims[0]), float(self.dims[1]))
        self.lengths = (float(lengths[0]), float(lengths[1]))
        self.volume_fraction = None if volume_fraction is None \
            else float(volume_fraction)
        if self.volume_fraction is not None \
                and not 0.0 < self.volume_fraction < 1.0:
            raise ValueError("volume_fraction must lie in (0, 1)")
        self.radius = None if radius is None else float(radius)
        if self.radius is not None and self.radius <= 0.0:
            raise ValueError("radius must be positive")
        self.centers = None if centers is None else \
            [(float(a), float(b)) for a, b in centers]
        self.count = None if count is None else int(count)
        if self.count is not None and self.count < 1:
            raise ValueError("count must be >= 1")
        self.seed = seed
        if self.volume_fraction is None and self.radius is None:
            raise ValueError("need volume_fraction or radius")


def _paint_discs(dims, centers, radius):
    """Phase labels with 1 inside any periodic-wrapped disc.

    Membership is tested at voxel centers (s + 1/2 in voxel units)
    against the minimum-image distance to each disc center.
    """
    n1, n2 = dims
    ii = np.arange(n1)[:, None] + 0.5
    jj = np.arange(n2)[None, :] + 0.5
    labels = np.zeros(dims, dtype=int)
    r2 = radius * radius
    for ci, cj in centers:
        di = np.abs(ii - ci)
        di = np.minimum(di, n1 - di)
        dj = np.abs(jj - cj)
        dj = np.minimum(dj, n2 - dj)
        labels[di * di + dj * dj <= r2] = 1
    return labels


def _min_image_dist2(a, b, dims):
    di = abs(a[0] - b[0])
    di = min(di, dims[0] - di)
    dj = abs(a[1] - b[1])
    dj = min(dj, dims[1] - dj)
    return di * di + dj * dj


def _two_particle_centers(dims, radius):
    """Pair of centers on the horizontal midline, surfaces separated by
    about a quarter of the domain along the first axis."""
    n1, n2 = dims
    gap = n1 / 4.0
    half = radius + gap / 2.0
    # the wrap-around separation must also keep the discs apart
    if n1 - 2.0 * half < 2.0 * radius:
        raise ValueError(
            "radius %.3g too large for a quarter-domain gap on a grid of "
            "%d voxels" % (radius, n1))
    return [(n1 / 2.0 - half, n2 / 2.0), (n1 / 2.0 + half, n2 / 2.0)]


def generate_rve(spec):
    """Build a voxel grid from a GeneratorSpec.

    Returns (grid, achieved particle volume fraction). The achieved
    fraction is checked against the requested one (when given) within
    an absolute tolerance of 2%.
    """
    dims = spec.dims
    area = dims[0] * dims[1]
    if spec.radius is not None:
        radius = spec.radius
    else:
        n_discs = 2 if spec.kind == "two_particle" else \
            (spec.count if spec.count is not None else None)
        if n_discs is not None:
            radius = math.sqrt(spec.volume_fraction * area
                               / (n_discs * math.pi))
        else:
            # sensible default size for an unspecified swarm
            radius = max(2.0, math.sqrt(area) / 16.0)

    if spec.kind == "two_particle":
        centers = spec.centers if spec.centers is not None \
            else _two_particle_centers(dims, radius)
        if len(centers) != 2:
            raise ValueError("two_particle expects exactly 2 centers")
        labels = _paint_discs(dims, centers, radius)
    else:
        if spec.centers is not None:
            centers = spec.centers
            labels = _paint_discs(dims, centers, radius)
        else:
            if spec.volume_fraction is None:
                raise ValueError("multi_particle without centers needs a "
                                 "volume_fraction target")
            rng = np.random.default_rng(spec.seed)
            min_d2 = (2.0 * radius + 1.0) ** 2
            centers = []
            labels = np.zeros(dims, dtype=int)
            tries = 0
            while labels.sum() / area < spec.volume_fraction \
                    - FRACTION_TOL / 2.0:
                if tries >= PLACEMENT_TRIES:
                    raise RuntimeError(
                        "could not reach particle fraction %.3g (placed "
                        "%d discs, achieved %.3g)"
                        % (spec.volume_fraction, len(centers),
                           labels.sum() / area))
                tries += 1
                cand = (rng.uniform(0.0, dims[0]),
                        rng.uniform(0.0, dims[1]))
                if any(_min_image_dist2(cand, c, dims) < min_d2
                       for c in centers):
                    continue
                centers.append(cand)
                labels = _paint_discs(dims, centers, radius)

    achieved = labels.sum() / area
    if spec.volume_fraction is not None \
            and abs(achieved - spec.volume_fraction) > FRACTION_TOL:
        raise RuntimeError(
            "achieved particle fraction %.4f misses the requested %.4f "
            "by more than %.2f" % (achieved, spec.volume_fraction,
                                   FRACTION_TOL))
    return VoxelGrid(dims, spec.lengths, labels), float(achieved)
