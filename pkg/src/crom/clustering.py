"""K-Means machinery and per-phase base clustering of voxel grids.

The clustering groups voxels with similar elastic strain concentration into
clusters, independently within each material phase. The K-Means stack is
self-contained: K-Means++ seeding, Lloyd iteration with deterministic
empty-cluster repair, an optional mini-batch variant for large grids, and
best-of-n restarts that may run in parallel (thread pool) while staying
bitwise deterministic for a given seed.

Cluster ids are global, contiguous and stable: the base clustering assigns
0..n_c-1 walking the phases in ascending phase-label order; later splits
append fresh ids and retire the parent. The full parent/child forest is
kept so that refinement levels and state inheritance can be resolved.
"""

import os
from concurrent.futures import ThreadPoolExecutor

import numpy as np

# Lloyd iteration limits (centroid movement, max sweeps)
KMEANS_MOVE_TOL = 1e-8
KMEANS_MAX_ITER = 300
MINI_BATCH_DEFAULT = 1024


def worker_count():
    """Number of parallel workers requested via the CROM_WORKERS
    environment variable (default 1)."""
    try:
        n = int(os.environ.get("CROM_WORKERS", "1"))
    except ValueError:
        return 1
    return max(1, n)


class FeatureDataset:
    """Per-voxel feature rows used for clustering.

    Parameters
    ----------
    rows : (n, m) array
        One feature vector per voxel (the flattened per-voxel elastic
        strain concentration matrix; m = 9 in 2D).
    voxel_ids : (n,) int array
        Linear (row-major) voxel index of each row; must be unique.
    """

    def __init__(self, rows, voxel_ids):
        rows = np.asarray(rows, dtype=float)
        voxel_ids = np.asarray(voxel_ids, dtype=np.intp)
        if rows.ndim != 2:
            raise ValueError("feature rows must be a 2-D array")
        if voxel_ids.shape != (rows.shape[0],):
            raise ValueError("one voxel id is required per feature row")
        if np.unique(voxel_ids).size != voxel_ids.size:
            raise ValueError("voxel ids must be unique")
        self.rows = rows
        self.voxel_ids = voxel_ids

    def __len__(self):
        return self.rows.shape[0]

    def row_of_voxel(self):
        """Map linear voxel index -> row index (-1 where absent)."""
        out = np.full(self.voxel_ids.max() + 1, -1, dtype=np.intp)
        out[self.voxel_ids] = np.arange(len(self), dtype=np.intp)
        return out


def _as_rng(seed):
    if isinstance(seed, np.random.Generator):
        return seed
    return np.random.default_rng(seed)


# =============================================================================
# K-Means
# =============================================================================
def kmeans_seed_plusplus(rows, k, seed):
    """K-Means++ initial centroids (D^2-weighted draws).

    Parameters
    ----------
    rows : (n, m) array
    k : int
        Number of centroids, 1 <= k <= n.
    seed : int or numpy Generator

    Returns
    -------
    (k, m) array of centroids (copies of data rows).
    """
    rows = np.asarray(rows, dtype=float)
    n = rows.shape[0]
    if not 1 <= k <= n:
        raise ValueError("need 1 <= k <= %d, got k = %d" % (n, k))
    rng = _as_rng(seed)
    chosen = np.empty(k, dtype=np.intp)
    chosen[0] = rng.integers(n)
    d2 = np.sum((rows - rows[chosen[0]]) ** 2, axis=1)
    for j in range(1, k):
        total = d2.sum()
        if total > 0.0:
            idx = rng.choice(n, p=d2 / total)
        else:
            # every remaining row coincides with a centroid; take the
            # lowest-index row not yet chosen so k = n still exhausts
            free = np.ones(n, dtype=bool)
            free[chosen[:j]] = False
            idx = np.flatnonzero(free)[0]
        chosen[j] = idx
        d2 = np.minimum(d2, np.sum((rows - rows[idx]) ** 2, axis=1))
    return rows[chosen].copy()


def _assign(rows, centroids):
    """Nearest-centroid assignment; returns labels and squared distance
    of every row to its centroid."""
    # ||x - c||^2 = ||x||^2 - 2 x.c + ||c||^2, row term dropped for the
    # argmin and restored for the distances
    cross = rows @ centroids.T
    c2 = np.einsum("ij,ij->i", centroids, centroids)
    scores = c2[None, :] - 2.0 * cross
    labels = np.argmin(scores, axis=1)
    r2 = np.einsum("ij,ij->i", rows, rows)
    d2 = np.maximum(r2 + scores[np.arange(rows.shape[0]), labels], 0.0)
    return labels, d2


def _repair_empty(labels, d2, k):
    """Deterministic empty-cluster repair: each empty cluster (ascending
    id) captures the row currently farthest from its own centroid, drawn
    only from clusters that keep at least one member."""
    counts = np.bincount(labels, minlength=k)
    for cid in np.flatnonzero(counts == 0):
        eligible = counts[labels] > 1
        far = int(np.argmax(np.where(eligible, d2, -np.inf)))
        counts[labels[far]] -= 1
        labels[far] = cid
        counts[cid] = 1
        d2[far] = 0.0
    return labels


def lloyd_iteration(rows, k, rng, mini_batch=None):
    """One full K-Means run from a fresh K-Means++ seeding.

    Returns
    -------
    labels : (n,) int array
    centroids : (k, m) array
    inertia : float
        Within-cluster sum of squares of the final assignment.
    history : list of float
        Inertia after every assignment sweep (full Lloyd mode only).
    """
    rows = np.asarray(rows, dtype=float)
    n = rows.shape[0]
    centroids = kmeans_seed_plusplus(rows, k, rng)
    history = []
    if mini_batch is not None:
        batch = min(int(mini_batch), n)
        counts = np.zeros(k)
        for _ in range(KMEANS_MAX_ITER):
            take = rng.choice(n, size=batch, replace=False)
            sub = rows[take]
            labels, _ = _assign(sub, centroids)
            old = centroids.copy()
            hit = np.bincount(labels, minlength=k).astype(float)
            seen = hit > 0
            sums = np.zeros_like(centroids)
            np.add.at(sums, labels, sub)
            counts += hit
            # running per-centre average with decaying step 1/count
            centroids[seen] += (hit[seen] / counts[seen])[:, None] * (
                sums[seen] / hit[seen][:, None] - centroids[seen])
            if np.linalg.norm(centroids - old, axis=1).max() \
                    < KMEANS_MOVE_TOL:
                break
    else:
        for _ in range(KMEANS_MAX_ITER):
            labels, d2 = _assign(rows, centroids)
            labels = _repair_empty(labels, d2, k)
            history.append(float(d2.sum()))
            old = centroids
            sums = np.zeros_like(centroids)
            np.add.at(sums, labels, rows)
            sizes = np.bincount(labels, minlength=k).astype(float)
            centroids = sums / sizes[:, None]
            if np.linalg.norm(centroids - old, axis=1).max() \
                    < KMEANS_MOVE_TOL:
                break
    labels, d2 = _assign(rows, centroids)
    labels = _repair_empty(labels, d2, k)
    return labels, centroids, float(d2.sum()), history


def kmeans_lloyd(rows, k, n_init=10, seed=None, mini_batch=None,
                 n_workers=None):
    """Best-of-n-restarts K-Means labeling.

    Parameters
    ----------
    rows : (n, m) array
    k : int
    n_init : int
        Independent restarts; the labeling with the smallest within-
        cluster sum of squares wins (ties: lowest restart index).
    seed : int, SeedSequence or Generator
        Restart streams are spawned from this, so the result does not
        depend on the number of workers.
    mini_batch : int, optional
        Batch size; enables the mini-batch variant.
    n_workers : int, optional
        Parallel restart threads (default: the CROM_WORKERS variable).

    Returns
    -------
    labels : (n,) int array
    """
    rows = np.asarray(rows, dtype=float)
    n = rows.shape[0]
    if not 1 <= k <= n:
        raise ValueError("need 1 <= k <= %d, got k = %d" % (n, k))
    if n_init < 1:
        raise ValueError("n_init must be >= 1")
    if k == n:
        # singleton clusters are the exact optimum (zero inertia)
        return np.arange(n, dtype=np.intp)
    if isinstance(seed, (np.random.Generator, np.random.SeedSequence)):
        streams = seed.spawn(n_init)
    else:
        streams = np.random.SeedSequence(seed).spawn(n_init)
    rngs = [_as_rng(s) for s in streams]

    def run(i):
        labels, _, inertia, _ = lloyd_iteration(rows, k, rngs[i],
                                                mini_batch=mini_batch)
        return inertia, i, labels

    n_workers = worker_count() if n_workers is None else max(1, n_workers)
    if n_workers > 1 and n_init > 1:
        with ThreadPoolExecutor(max_workers=n_workers) as pool:
            results = list(pool.map(run, range(n_init)))
    else:
        results = [run(i) for i in range(n_init)]
    results.sort(key=lambda item: (item[0], item[1]))
    return results[0][2]


# =============================================================================
# Cluster map
# =============================================================================
class ClusterRecord:
    """Bookkeeping record of one cluster."""

    __slots__ = ("cid", "phase", "voxels", "level", "parent", "children",
                 "birth")

    def __init__(self, cid, phase, voxels, level=0, parent=None, birth=0):
        self.cid = int(cid)
        self.phase = int(phase)
        self.voxels = np.sort(np.asarray(voxels, dtype=np.intp))
        self.level = int(level)
        self.parent = parent
        self.children = []
        self.birth = int(birth)

    @property
    def active(self):
        return not self.children


class ClusterMap:
    """Partition of a voxel grid into phase-pure clusters.

    Holds the per-voxel labeling by *active* cluster id together with the
    full refinement forest (split parents stay on record, flagged
    inactive). Active ids in ascending order define the row/column order
    of all cluster-indexed arrays elsewhere in the package.
    """

    def __init__(self, grid, labels, records):
        self.grid = grid
        self.labels = np.asarray(labels, dtype=np.intp).reshape(-1)
        self.records = dict(records)
        self._next_id = max(self.records) + 1 if self.records else 0

    # -- queries ----------------------------------------------------------
    @property
    def n_c(self):
        return len(self.active_ids())

    def active_ids(self):
        """Ascending array of active (leaf) cluster ids."""
        return np.array(sorted(cid for cid, rec in self.records.items()
                               if rec.active), dtype=np.intp)

    def members(self, cid):
        return self.records[cid].voxels

    def fraction(self, cid):
        return self.records[cid].voxels.size / self.grid.n_voxels

    def fractions(self):
        """Volume fractions aligned with active_ids()."""
        return np.array([self.fraction(c) for c in self.active_ids()])

    def phase_of(self, cid):
        return self.records[cid].phase

    def level_of(self, cid):
        return self.records[cid].level

    def parent_of(self, cid):
        return self.records[cid].parent

    def is_active(self, cid):
        return self.records[cid].active

    def ancestry(self, cid):
        """Ids from cid up to its base ancestor (cid first)."""
        chain = [cid]
        while self.records[chain[-1]].parent is not None:
            chain.append(self.records[chain[-1]].parent)
        return chain

    # -- mutation ---------------------------------------------------------
    def register_children(self, parent_id, child_voxel_lists, birth=0):
        """Split an active cluster into the given voxel groups.

        The groups must partition the parent's voxels into at least two
        non-empty parts. Returns the fresh child ids (ascending).
        """
        rec = self.records[parent_id]
        if not rec.active:
            raise ValueError("cluster %d was already split" % parent_id)
        if len(child_voxel_lists) < 2:
            raise ValueError("a split needs at least two children")
        pooled = np.concatenate([np.asarray(v, dtype=np.intp)
                                 for v in child_voxel_lists])
        if np.any(np.bincount(pooled).max() > 1) \
                or not np.array_equal(np.sort(pooled), rec.voxels):
            raise ValueError("children must partition the parent voxels")
        child_ids = []
        for voxels in child_voxel_lists:
            voxels = np.asarray(voxels, dtype=np.intp)
            if voxels.size == 0:
                raise ValueError("empty child cluster")
            cid = self._next_id
            self._next_id += 1
            self.records[cid] = ClusterRecord(
                cid, rec.phase, voxels, level=rec.level + 1,
                parent=parent_id, birth=birth)
            self.labels[voxels] = cid
            child_ids.append(cid)
        rec.children = child_ids
        return child_ids

    def copy(self):
        out = ClusterMap.__new__(ClusterMap)
        out.grid = self.grid
        out.labels = self.labels.copy()
        out.records = {}
        for cid, rec in self.records.items():
            dup = ClusterRecord(rec.cid, rec.phase, rec.voxels,
                                level=rec.level, parent=rec.parent,
                                birth=rec.birth)
            dup.children = list(rec.children)
            out.records[cid] = dup
        out._next_id = self._next_id
        return out

    def validate(self):
        """Raise AssertionError unless all map invariants hold."""
        active = self.active_ids()
        assert active.size > 0, "no active clusters"
        seen = np.zeros(self.grid.n_voxels, dtype=np.intp)
        phase_flat = self.grid.labels.reshape(-1)
        total_f = 0.0
        for cid in active:
            rec = self.records[cid]
            voxels = rec.voxels
            assert voxels.size > 0, "empty cluster %d" % cid
            seen[voxels] += 1
            assert np.all(self.labels[voxels] == cid), \
                "label array out of sync for cluster %d" % cid
            assert np.unique(phase_flat[voxels]).size == 1, \
                "cluster %d mixes phases" % cid
            assert phase_flat[voxels[0]] == rec.phase, \
                "cluster %d phase mismatch" % cid
            total_f += self.fraction(cid)
        assert np.all(seen == 1), "labels do not partition the voxels"
        assert abs(total_f - 1.0) <= 1e-12, "fractions do not sum to 1"
        for cid, rec in self.records.items():
            if rec.parent is not None:
                parent = self.records[rec.parent]
                assert rec.level == parent.level + 1, \
                    "level of %d not parent level + 1" % cid
                assert cid in parent.children
            else:
                assert rec.level == 0, "base cluster %d at level > 0" % cid
        return True


def base_clustering(grid, features, clusters_per_phase, seed=None,
                    n_init=10, mini_batch=None, n_workers=None):
    """Per-phase K-Means clustering of a voxel grid.

    Parameters
    ----------
    grid : VoxelGrid
    features : FeatureDataset
        Must contain a row for every voxel of the grid.
    clusters_per_phase : dict phase id -> cluster count
    seed : int, SeedSequence or Generator, optional
        One independent stream is spawned per phase.

    Returns
    -------
    ClusterMap with contiguous ids 0..n_c-1, all at level 0.
    """
    phases = [int(p) for p in grid.phases]
    for phase, count in clusters_per_phase.items():
        if int(phase) not in phases:
            raise ValueError("phase %r has no voxels but requests %d "
                             "clusters" % (phase, count))
    for phase in phases:
        if phase not in {int(p) for p in clusters_per_phase}:
            raise ValueError("no cluster count given for phase %d" % phase)
    if len(features) != grid.n_voxels:
        raise ValueError("feature dataset does not cover the grid "
                         "(%d rows for %d voxels)"
                         % (len(features), grid.n_voxels))
    row_of = features.row_of_voxel()
    phase_flat = grid.labels.reshape(-1)
    if isinstance(seed, (np.random.Generator, np.random.SeedSequence)):
        streams = seed.spawn(len(phases))
    else:
        streams = np.random.SeedSequence(seed).spawn(len(phases))

    labels = np.full(grid.n_voxels, -1, dtype=np.intp)
    records = {}
    offset = 0
    for phase, stream in zip(phases, streams):
        count = int(clusters_per_phase[phase])
        voxels = np.flatnonzero(phase_flat == phase)
        if count < 1:
            raise ValueError("phase %d requests %d clusters" % (phase,
                                                                count))
        if count > voxels.size:
            raise ValueError("phase %d has %d voxels, cannot form %d "
                             "clusters" % (phase, voxels.size, count))
        rows = features.rows[row_of[voxels]]
        local = kmeans_lloyd(rows, count, n_init=n_init, seed=stream,
                             mini_batch=mini_batch, n_workers=n_workers)
        for j in range(count):
            cid = offset + j
            members = voxels[local == j]
            records[cid] = ClusterRecord(cid, phase, members)
            labels[members] = cid
        offset += count
    return ClusterMap(grid, labels, records)
