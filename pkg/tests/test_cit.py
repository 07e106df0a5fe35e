"""Cluster interaction tensors: assembly, symmetry, incremental updates."""

import numpy as np
import pytest

from crom.cit import (ConvolutionCache, assemble_matrix,
                      benchmark_cit_update, cluster_convolution,
                      expected_assembly_counts, expected_update_counts,
                      incremental_update, interaction_tensor,
                      load_interaction_matrix, save_interaction_matrix,
                      symmetry_counterpart, synthetic_refinement)
from crom.spectral import ReferenceMaterial, assemble_green_operator

from conftest import disc_grid, map_from_labels, uniform_grid


def checkerboard_map(grid, blocks):
    """Split the grid into equal index blocks (phase-agnostic test map)."""
    n1, n2 = grid.dims
    labels = np.zeros((n1, n2), dtype=np.intp)
    rows = np.array_split(np.arange(n1), blocks)
    for k, chunk in enumerate(rows):
        labels[chunk, :] = k
    return map_from_labels(grid, labels.reshape(-1))


def full_assembly_no_symmetry(cluster_map, green):
    """Independent assembly computing every entry by convolution."""
    ids = cluster_map.active_ids()
    n = ids.size
    tensors = np.zeros((n, n, 3, 3))
    for j in range(n):
        conv = cluster_convolution(green, cluster_map.members(ids[j]))
        for i in range(n):
            tensors[i, j] = interaction_tensor(
                cluster_map.members(ids[i]), conv)
    return tensors


# =============================================================================
# Closed-form computation counts
# =============================================================================
def test_expected_counts_closed_forms():
    assert expected_assembly_counts(4) == (10, 6)
    assert expected_assembly_counts(6) == (21, 15)
    assert expected_assembly_counts(20) == (210, 190)
    assert expected_update_counts(3, 2) == (9, 7)
    assert expected_update_counts(12, 8) == (132, 124)
    assert expected_update_counts(0, 4) == (10, 6)  # all-new == assembly


# =============================================================================
# Assembly and the exchange symmetry
# =============================================================================
def test_assembly_matches_all_full_reference_and_counts():
    grid = uniform_grid(8, 8)
    cmap = checkerboard_map(grid, 4)
    green = assemble_green_operator(ReferenceMaterial(1.3, 0.8), grid)
    matrix = assemble_matrix(cmap, green)
    reference = full_assembly_no_symmetry(cmap, green)
    scale = np.abs(reference).max()
    assert np.abs(matrix.tensors - reference).max() <= 1e-12 * scale
    assert (matrix.full_count, matrix.symmetry_count) \
        == expected_assembly_counts(4)
    counts = matrix.provenance_counts()
    assert counts["full"] == 10 and counts["symmetry"] == 6
    assert counts["retained"] == 0


def test_exchange_symmetry_holds_on_independent_entries():
    # computed without any symmetry shortcut, the discrete identity
    # f_I T(I,J) = f_J T(J,I) must hold to machine precision
    grid = disc_grid(8)
    cmap = checkerboard_map(grid, 5)
    green = assemble_green_operator(ReferenceMaterial(2.0, 1.0), grid)
    tensors = full_assembly_no_symmetry(cmap, green)
    f = cmap.fractions()
    lhs = tensors * f[:, None, None, None]
    rhs = tensors.transpose(1, 0, 2, 3) * f[None, :, None, None]
    assert np.abs(lhs - rhs).max() <= 1e-12 * np.abs(lhs).max()


def test_max_symmetry_deviation_reports_violations():
    grid = uniform_grid(4, 4)
    cmap = checkerboard_map(grid, 2)
    green = assemble_green_operator(ReferenceMaterial(1.0, 1.0), grid)
    matrix = assemble_matrix(cmap, green)
    assert matrix.max_symmetry_deviation() <= 1e-14
    matrix.tensors[0, 1] *= 1.5
    assert matrix.max_symmetry_deviation() > 1e-3


def test_symmetry_counterpart_formula():
    t = np.arange(9.0).reshape(3, 3)
    np.testing.assert_allclose(symmetry_counterpart(t, 0.25, 0.5), 0.5 * t)
    with pytest.raises(ValueError):
        symmetry_counterpart(t, 0.0, 0.5)


# =============================================================================
# Convolution cache
# =============================================================================
def test_convolution_cache_hits_and_invalidation():
    grid = uniform_grid(4, 4)
    green = assemble_green_operator(ReferenceMaterial(1.0, 1.0), grid)
    cache = ConvolutionCache()
    voxels = np.arange(8)
    first = cluster_convolution(green, voxels, cache=cache, cid=0)
    second = cluster_convolution(green, voxels, cache=cache, cid=0)
    assert first is second  # cache hit returns the stored field
    assert 0 in cache and len(cache) == 1
    cache.invalidate([0])
    third = cluster_convolution(green, voxels, cache=cache, cid=0)
    assert third is not second
    np.testing.assert_allclose(third, second)
    with pytest.raises(ValueError):
        cluster_convolution(green, np.array([], dtype=int))


# =============================================================================
# Incremental update
# =============================================================================
def test_incremental_update_equals_fresh_assembly():
    grid = disc_grid(8)
    cmap = checkerboard_map(grid, 4)
    green = assemble_green_operator(ReferenceMaterial(1.0, 0.7), grid)
    old = assemble_matrix(cmap, green)

    new_map = cmap.copy()
    v1 = new_map.members(1)
    new_map.register_children(1, [v1[: v1.size // 2],
                                  v1[v1.size // 2:]])
    v3 = new_map.members(3)
    new_map.register_children(3, [v3[: v3.size // 3],
                                  v3[v3.size // 3: 2 * v3.size // 3],
                                  v3[2 * v3.size // 3:]])

    updated = incremental_update(old, cmap, new_map, green)
    fresh = assemble_matrix(new_map, green)
    scale = np.abs(fresh.tensors).max()
    assert np.abs(updated.tensors - fresh.tensors).max() <= 1e-12 * scale
    np.testing.assert_array_equal(updated.cluster_ids,
                                  new_map.active_ids())
    # 2 retained clusters (0, 2), 5 created children
    assert (updated.full_count, updated.symmetry_count) \
        == expected_update_counts(2, 5)
    counts = updated.provenance_counts()
    assert counts["retained"] == 4  # the 2x2 retained block
    assert counts["full"] + counts["symmetry"] + counts["retained"] == 49


def test_incremental_update_without_splits_returns_the_old_matrix():
    grid = uniform_grid(4, 4)
    cmap = checkerboard_map(grid, 2)
    green = assemble_green_operator(ReferenceMaterial(1.0, 1.0), grid)
    old = assemble_matrix(cmap, green)
    assert incremental_update(old, cmap, cmap.copy(), green) is old


def test_incremental_update_rejects_mutated_retained_clusters():
    grid = uniform_grid(4, 4)
    cmap = checkerboard_map(grid, 2)
    green = assemble_green_operator(ReferenceMaterial(1.0, 1.0), grid)
    old = assemble_matrix(cmap, green)
    tampered = cmap.copy()
    tampered.records[0].voxels = tampered.records[0].voxels[:-1]
    with pytest.raises(ValueError, match="changed voxels"):
        incremental_update(old, cmap, tampered, green)


def test_incremental_update_invalidates_split_parents_in_cache():
    grid = uniform_grid(4, 4)
    cmap = checkerboard_map(grid, 2)
    green = assemble_green_operator(ReferenceMaterial(1.0, 1.0), grid)
    cache = ConvolutionCache()
    old = assemble_matrix(cmap, green, cache=cache)
    assert 0 in cache and 1 in cache
    new_map = cmap.copy()
    v = new_map.members(0)
    new_map.register_children(0, [v[:4], v[4:]])
    incremental_update(old, cmap, new_map, green, cache=cache)
    assert 0 not in cache       # split parent dropped
    assert 1 in cache           # retained cluster kept


# =============================================================================
# Dump / load
# =============================================================================
def test_save_load_round_trip_and_digest_guard(tmp_path):
    grid = disc_grid(8)
    cmap = checkerboard_map(grid, 3)
    green = assemble_green_operator(ReferenceMaterial(1.5, 0.9), grid)
    matrix = assemble_matrix(cmap, green)
    path = tmp_path / "cit.bin"
    save_interaction_matrix(path, matrix, cmap)
    loaded = load_interaction_matrix(path, cmap)
    np.testing.assert_array_equal(loaded.tensors, matrix.tensors)
    np.testing.assert_array_equal(loaded.cluster_ids, matrix.cluster_ids)
    np.testing.assert_array_equal(loaded.provenance, matrix.provenance)
    assert loaded.reference.lame_lambda == 1.5
    assert loaded.full_count == matrix.full_count
    other = checkerboard_map(grid, 4)
    with pytest.raises(ValueError, match="different clustering"):
        load_interaction_matrix(path, other)
    with pytest.raises(ValueError, match="different grid"):
        load_interaction_matrix(path, checkerboard_map(uniform_grid(8, 8),
                                                       3))
    (tmp_path / "junk.bin").write_bytes(b"junkjunk" + b"\x00" * 100)
    with pytest.raises(ValueError, match="not an interaction"):
        load_interaction_matrix(tmp_path / "junk.bin", cmap)


# =============================================================================
# Synthetic refinement and the update benchmark
# =============================================================================
def test_synthetic_refinement_cluster_counts():
    grid = uniform_grid(16, 16)
    old_map, new_map = synthetic_refinement(grid, 10, 0.5, 1.0, seed=0)
    assert old_map.n_c == 10
    assert new_map.n_c == 20
    retained = set(int(c) for c in old_map.active_ids()) \
        & set(int(c) for c in new_map.active_ids())
    assert len(retained) == 5           # kept 5, split 5 into 15
    assert new_map.validate()
    old_map, new_map = synthetic_refinement(grid, 16, 0.75, 0.25, seed=0)
    assert old_map.n_c == 16 and new_map.n_c == 20
    with pytest.raises(ValueError, match="feasible"):
        synthetic_refinement(grid, 10, 0.5, 0.25)  # beta < 1 - alpha
    with pytest.raises(ValueError, match="single-phase"):
        synthetic_refinement(disc_grid(8), 4, 0.75, 1.0)


def test_benchmark_verifies_strategies_and_counts():
    grid = uniform_grid(12, 12)
    result = benchmark_cit_update(grid, 8, 0.75, 0.5, seed=1, repeats=1)
    assert result["n_retained"] == 6
    assert result["n_created"] == 6
    assert result["n_total"] == 12
    assert (result["full_proposed"], result["symmetry_proposed"]) \
        == expected_update_counts(6, 6)
    assert (result["full_standard"], result["symmetry_standard"]) \
        == expected_assembly_counts(12)
    assert result["full_proposed"] < result["full_standard"]
    assert result["max_rel_diff"] <= 1e-12
    assert result["time_standard"] > 0.0
    assert result["time_proposed"] > 0.0
