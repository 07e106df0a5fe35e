"""Adaptive cluster refinement: targeting, splitting, rewinding.

After selected converged increments the cluster layout is refined where the
solution localizes. The step has three blocks:

(A) target selection — scan the voxel grid line by line and evaluate the
    normalized feature jump between adjacent voxels of different clusters;
    a jump at or above the trigger ratio marks both clusters (subject to
    refinement-level gates). Scanning may stride with a random per-step
    offset; the first and last voxels of every line are always visited and
    the last pairs with the first across the periodic boundary.
(B) adaptive cluster analysis — each target is split by (mini-batch)
    K-Means on the offline per-voxel features into a number of children
    set by the split factor, statically or scaled by the jump magnitude;
    children inherit the parent's constitutive state verbatim.
(C) interaction-tensor update — delegated to the incremental update, which
    only computes entries involving the new clusters.

Rewinding support stores a deep snapshot of the run when a trigger first
fires (default: first plastic increment) and can later restore it onto a
refined clustering, giving every cluster the state of its youngest
ancestor alive at snapshot time, so the path is re-solved from the
snapshot with the better layout.
"""

import time

import numpy as np

from crom.cit import incremental_update
from crom.clustering import kmeans_lloyd, MINI_BATCH_DEFAULT
from crom.materials import StateBatch
from crom.solver import ReducedSystem
from crom.tensors import nint

FEATURES = ("acc_p", "plastic_work_density", "h_norm")


class AdaptivityConfig:
    """Knobs of the adaptive refinement loop (all range-checked)."""

    def __init__(self, feature="acc_p", trigger_ratio=0.1,
                 child_volume_fraction=0.5, split_factor=1.0,
                 split_amplitude=0.0, magnitude_exponent=1.0,
                 theta_low=1.0, frequency=1, max_consecutive_steps=1,
                 cluster_budget=10**9, min_feature_value=0.0,
                 max_level=10**9, max_level_gap=None,
                 min_voxels_per_cluster=2, scan_frequency=1,
                 repeat_increment=True, adaptive_phases=()):
        if feature not in FEATURES:
            raise ValueError("unknown adaptivity feature %r (one of %r)"
                             % (feature, FEATURES))
        if not 0.0 <= trigger_ratio <= 1.0:
            raise ValueError("trigger_ratio must lie in [0, 1]")
        if not 0.0 < child_volume_fraction <= 1.0:
            raise ValueError("child_volume_fraction must lie in (0, 1]")
        if not 0.0 <= split_factor <= 1.0:
            raise ValueError("split_factor must lie in [0, 1]")
        if not 0.0 <= split_amplitude <= 1.0:
            raise ValueError("split_amplitude must lie in [0, 1]")
        if magnitude_exponent <= 0.0:
            raise ValueError("magnitude_exponent must be positive")
        if not 0.0 <= theta_low <= 1.0:
            raise ValueError("theta_low must lie in [0, 1]")
        if frequency < 1 or scan_frequency < 1:
            raise ValueError("frequencies must be >= 1")
        if max_consecutive_steps < 1:
            raise ValueError("max_consecutive_steps must be >= 1")
        if cluster_budget < 1:
            raise ValueError("cluster_budget must be >= 1")
        if min_feature_value < 0.0:
            raise ValueError("min_feature_value must be >= 0")
        if max_level < 1:
            raise ValueError("max_level must be >= 1")
        if max_level_gap is not None and max_level_gap < 0:
            raise ValueError("max_level_gap must be >= 0")
        if min_voxels_per_cluster < 2:
            raise ValueError("min_voxels_per_cluster must be >= 2 "
                             "(a smaller cluster cannot split)")
        self.feature = feature
        self.trigger_ratio = float(trigger_ratio)
        self.child_volume_fraction = float(child_volume_fraction)
        self.split_factor = float(split_factor)
        self.split_amplitude = float(split_amplitude)
        self.magnitude_exponent = float(magnitude_exponent)
        self.theta_low = float(theta_low)
        self.frequency = int(frequency)
        self.max_consecutive_steps = int(max_consecutive_steps)
        self.cluster_budget = int(cluster_budget)
        self.min_feature_value = float(min_feature_value)
        self.max_level = int(max_level)
        self.max_level_gap = None if max_level_gap is None \
            else int(max_level_gap)
        self.min_voxels_per_cluster = int(min_voxels_per_cluster)
        self.scan_frequency = int(scan_frequency)
        self.repeat_increment = bool(repeat_increment)
        self.adaptive_phases = frozenset(int(p) for p in adaptive_phases)

    @property
    def max_children(self):
        return nint(1.0 / self.child_volume_fraction)


class Target:
    """One cluster marked for splitting."""

    __slots__ = ("cid", "max_jump", "low_side", "n_child")

    def __init__(self, cid, max_jump, low_side):
        self.cid = cid
        self.max_jump = max_jump
        self.low_side = low_side
        self.n_child = None

    def __repr__(self):
        return ("Target(cid=%d, max_jump=%.6g, low_side=%r, n_child=%r)"
                % (self.cid, self.max_jump, self.low_side, self.n_child))


# =============================================================================
# Feature fields and condition gate
# =============================================================================
def cluster_feature_values(system, features, config):
    """Per-cluster scalar feature values in active-id order."""
    kind = config.feature
    if kind == "acc_p":
        return system.states.acc_p.copy()
    if kind == "plastic_work_density":
        return system.states.work_p.copy()
    if kind == "h_norm":
        row_of = features.row_of_voxel()
        values = np.empty(system.n_c)
        for k, cid in enumerate(system.cluster_ids):
            rows = features.rows[row_of[system.cluster_map.members(cid)]]
            values[k] = np.linalg.norm(rows.mean(axis=0))
        return values
    raise ValueError("unknown adaptivity feature %r" % (kind,))


def reconstruct_voxel_feature(cluster_map, values):
    """Spread per-cluster feature values to a per-voxel scalar field."""
    values = np.asarray(values, dtype=float)
    ids = cluster_map.active_ids()
    if values.shape != (ids.size,):
        raise ValueError("need one scalar per active cluster")
    out = np.empty(cluster_map.grid.n_voxels)
    for row, cid in enumerate(ids):
        out[cluster_map.members(cid)] = values[row]
    return out


def evaluate_adaptivity_conditions(increment, consecutive_steps, system,
                                   cluster_values, config):
    """Gate of the adaptivity step: phase id -> eligible flag.

    ``increment`` is the 1-based index of the increment just solved.
    """
    go_global = (increment % config.frequency == 0
                 and consecutive_steps < config.max_consecutive_steps
                 and system.n_c < config.cluster_budget)
    eligible = {}
    for phase in np.unique(system.cluster_phases):
        phase = int(phase)
        if not go_global or phase not in config.adaptive_phases:
            eligible[phase] = False
            continue
        rows = system.cluster_phases == phase
        eligible[phase] = bool(
            cluster_values[rows].max() >= config.min_feature_value)
    return eligible


# =============================================================================
# Block A: target selection
# =============================================================================
def _line_anchors(n, stride, offset):
    """Indices visited along a periodic line of n voxels: every ``stride``
    voxels from ``offset``, plus the first and last voxels."""
    anchors = set(range(offset % stride if stride > 1 else 0, n,
                        stride))
    anchors.add(0)
    anchors.add(n - 1)
    return sorted(anchors)


def select_targets(field, cluster_map, eligible_phases, config, rng):
    """Scan the grid for feature jumps and mark clusters for splitting.

    Returns a list of Target entries (ascending cluster id). Both clusters
    of a triggering jump are marked unless the refinement-level gates veto
    one: clusters at the maximum level never split, and when the pair's
    level gap exceeds the allowed one only the lower-level cluster is
    marked. The lower-valued side of each jump is remembered so its
    magnitude can be damped when sizing the split.

    A trigger ratio of one is the off switch: no refinement ever, which
    guarantees a run with refinement enabled but never triggered matches
    the static run exactly (a jump can equal one when a phase's extreme-
    valued clusters touch, so the threshold alone would not).
    """
    if config.trigger_ratio >= 1.0:
        return []
    grid = cluster_map.grid
    dims = grid.dims
    labels = cluster_map.labels.reshape(dims)
    phases = grid.labels.reshape(dims)
    values = np.asarray(field, dtype=float).reshape(dims)

    # phase-wide normalization ranges (degenerate range -> phase skipped)
    ranges = {}
    for phase, go in eligible_phases.items():
        if not go:
            continue
        mask = phases == phase
        span = float(values[mask].max() - values[mask].min())
        if span > 0.0:
            ranges[phase] = span

    stride = config.scan_frequency
    offset = int(rng.integers(stride)) if stride > 1 else 0
    found = {}

    def consider(i_a, i_b):
        """One adjacent voxel pair given as flat grid indices."""
        cid_a = int(labels.flat[i_a])
        cid_b = int(labels.flat[i_b])
        if cid_a == cid_b:
            return
        phase = int(phases.flat[i_a])
        if phase != int(phases.flat[i_b]) or phase not in ranges:
            return
        v_a = values.flat[i_a]
        v_b = values.flat[i_b]
        jump = abs(v_a - v_b) / ranges[phase]
        if jump < config.trigger_ratio:
            return
        lev_a = cluster_map.level_of(cid_a)
        lev_b = cluster_map.level_of(cid_b)
        marks = [(cid_a, lev_a, v_a <= v_b), (cid_b, lev_b, v_b < v_a)]
        if config.max_level_gap is not None \
                and abs(lev_a - lev_b) > config.max_level_gap:
            keep_level = min(lev_a, lev_b)
            marks = [m for m in marks if m[1] == keep_level]
        for cid, level, low_side in marks:
            if level >= config.max_level:
                continue
            if cluster_map.members(cid).size \
                    < config.min_voxels_per_cluster:
                continue
            hit = found.get(cid)
            if hit is None or jump > hit.max_jump:
                found[cid] = Target(cid, jump, low_side)

    n1, n2 = dims
    flat = np.arange(grid.n_voxels).reshape(dims)
    for j in range(n2):          # lines along axis 0
        for i in _line_anchors(n1, stride, offset):
            consider(flat[i, j], flat[(i + 1) % n1, j])
    for i in range(n1):          # lines along axis 1
        for j in _line_anchors(n2, stride, offset):
            consider(flat[i, j], flat[i, (j + 1) % n2])
    return [found[cid] for cid in sorted(found)]


# =============================================================================
# Block B: split sizing and execution
# =============================================================================
def child_count(target, config, parent_voxel_count):
    """Number of children for a target cluster.

    Static mode (zero split amplitude) uses the split factor directly;
    dynamic mode shifts the factor within +-amplitude/2 according to a
    power law of the jump magnitude above the trigger.
    """
    n_max = config.max_children
    if config.split_amplitude == 0.0:
        n = max(2, nint(config.split_factor * n_max))
    else:
        s = target.max_jump - config.trigger_ratio
        if target.low_side:
            s *= config.theta_low
        span = 1.0 - config.trigger_ratio
        if span <= 0.0:
            g = 0.0 if s <= 0.0 else 1.0
        else:
            g = (s / span) ** config.magnitude_exponent
        gamma = (config.split_factor - 0.5 * config.split_amplitude
                 + g * config.split_amplitude)
        gamma = min(max(gamma, 0.0), 1.0)
        n = max(2, nint(gamma * n_max))
    return min(n, int(parent_voxel_count))


def enforce_budget(targets, config, current_n_c):
    """Greedy budget pruning: targets sorted by jump magnitude descending
    are accepted while the projected cluster count is still below the
    budget (so the overshoot is at most one split's net growth)."""
    ordered = sorted(targets, key=lambda t: (-t.max_jump, t.cid))
    kept = []
    projected = int(current_n_c)
    for target in ordered:
        if projected >= config.cluster_budget:
            break
        kept.append(target)
        projected += target.n_child - 1
    kept.sort(key=lambda t: t.cid)
    return kept


def split_cluster(cluster_map, parent_cid, n_child, features, rng,
                  birth=0, n_init=10):
    """Split one cluster by K-Means on its offline feature rows.

    Mutates ``cluster_map`` (fresh child ids, parent retired) and returns
    the child ids.
    """
    voxels = cluster_map.members(parent_cid)
    if n_child > voxels.size:
        raise ValueError("cannot split %d voxels into %d children"
                         % (voxels.size, n_child))
    row_of = features.row_of_voxel()
    rows = features.rows[row_of[voxels]]
    mini = MINI_BATCH_DEFAULT if rows.shape[0] > MINI_BATCH_DEFAULT \
        else None
    local = kmeans_lloyd(rows, n_child, n_init=n_init, seed=rng,
                         mini_batch=mini)
    groups = [voxels[local == k] for k in range(n_child)]
    return cluster_map.register_children(parent_cid, groups, birth=birth)


def inherit_states(old_states, old_ids, new_map):
    """Build a state batch for ``new_map`` by ancestor lookup.

    Clusters alive in the old batch keep their rows; fresh clusters walk
    their parent links upward until an old-batch ancestor is found and
    copy its row (children inherit the parent state verbatim).
    """
    old_pos = {int(c): k for k, c in enumerate(old_ids)}
    new_ids = new_map.active_ids()
    out = StateBatch(new_ids.size)
    for k, cid in enumerate(new_ids):
        source = None
        for ancestor in new_map.ancestry(int(cid)):
            if int(ancestor) in old_pos:
                source = old_pos[int(ancestor)]
                break
        if source is None:
            raise RuntimeError("cluster %d has no ancestor in the state "
                               "snapshot (hierarchy corruption)" % cid)
        out.assign([k], old_states.subset([source]))
    return out


# =============================================================================
# The adaptivity step (Blocks A + B + C)
# =============================================================================
def adaptivity_step(system, green, features, config, rng, increment,
                    consecutive=0, cache=None, split_n_init=10):
    """One refinement pass over a converged system.

    Returns (new system or the same object when nothing split, event
    record dict). The input system is not mutated when splits happen; the
    caller swaps in the returned one atomically.
    """
    event = {"increment": increment, "n_c_before": system.n_c,
             "targets": [], "jumps": [], "children": [],
             "time_select": 0.0, "time_split": 0.0, "time_cit": 0.0}
    values = cluster_feature_values(system, features, config)
    eligible = evaluate_adaptivity_conditions(
        increment, consecutive, system, values, config)

    tic = time.perf_counter()
    field = reconstruct_voxel_feature(system.cluster_map, values)
    targets = select_targets(field, system.cluster_map, eligible, config,
                             rng)
    for target in targets:
        target.n_child = child_count(
            target, config, system.cluster_map.members(target.cid).size)
    targets = enforce_budget(targets, config, system.n_c)
    event["time_select"] = time.perf_counter() - tic
    if not targets:
        event["n_c_after"] = system.n_c
        return system, event

    tic = time.perf_counter()
    new_map = system.cluster_map.copy()
    for target in targets:
        split_cluster(new_map, target.cid, target.n_child, features, rng,
                      birth=increment, n_init=split_n_init)
        event["targets"].append(int(target.cid))
        event["jumps"].append(float(target.max_jump))
        event["children"].append(int(target.n_child))
    event["time_split"] = time.perf_counter() - tic

    tic = time.perf_counter()
    new_cit = incremental_update(system.cit, system.cluster_map, new_map,
                                 green, cache=cache)
    event["time_cit"] = time.perf_counter() - tic

    new_system = ReducedSystem(new_map, system.phase_materials, new_cit,
                               system.reference)
    new_system.states = inherit_states(system.states, system.cluster_ids,
                                       new_map)
    new_system.far_delta = system.far_delta.copy()
    new_system.total_strain = system.total_strain.copy()
    new_system.total_stress = system.total_stress.copy()
    event["n_c_after"] = new_system.n_c
    return new_system, event


# =============================================================================
# Rewind support
# =============================================================================
class RewindState:
    """Deep snapshot of a run, taken when the rewind trigger first fires."""

    def __init__(self, increment, system, history):
        self.increment = increment
        self.states = system.states.copy()
        self.cluster_ids = system.cluster_ids.copy()
        self.map_snapshot = system.cluster_map.copy()
        self.reference = system.reference
        self.far_delta = system.far_delta.copy()
        self.total_strain = system.total_strain.copy()
        self.total_stress = system.total_stress.copy()
        self.history = [dict(row) for row in history]


def rewind_trigger(system):
    """Default trigger: the run has started yielding plastically."""
    return bool(np.any(system.states.acc_p > 0.0))


def store_rewind_state(increment, system, history):
    return RewindState(increment, system, history)


def perform_rewind(system, rewind):
    """Restore a snapshot onto the (refined) current clustering.

    The system keeps its cluster map and interaction matrix; states are
    inherited from the snapshot by upward ancestor search, and loading
    position, totals and reference material return to snapshot time.
    Returns the history prefix to resume from.
    """
    system.states = inherit_states(rewind.states, rewind.cluster_ids,
                                   system.cluster_map)
    system.far_delta = rewind.far_delta.copy()
    system.total_strain = rewind.total_strain.copy()
    system.total_stress = rewind.total_stress.copy()
    system.reference = rewind.reference
    return [dict(row) for row in rewind.history]
