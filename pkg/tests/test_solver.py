"""Reduced incremental solver: loading paths, Newton solves, the
reference-material regression, fracture bookkeeping and toughness."""

import numpy as np
import pytest

from crom.materials import PhaseMaterial, StateBatch, state_update
from crom.solver import (FractureCriterion, IncrementFailure, LoadingPath,
                         SolverConfig, advance_increment, check_fracture,
                         compute_toughness, fraction_above, homogenize,
                         initial_reference, run_self_consistent_increment,
                         self_consistent_fit)
from crom.spectral import ReferenceMaterial
from crom.tensors import extract4_to3, lame_from_young

from conftest import (benchmark_materials, elastic_materials,
                      laminate_fields, map_from_labels, phase_map,
                      reduced_system, stripe_grid, uniform_grid)


STRAIN_DRIVEN = np.array([True, True, True])


# =============================================================================
# Loading paths
# =============================================================================
def test_linear_ramp_splits_totals_evenly():
    path = LoadingPath.linear_ramp(4, strain_totals={0: 0.02},
                                   stress_totals={1: 8.0})
    assert path.n_increments == 4
    flags, deltas = path.increment(0)
    np.testing.assert_array_equal(flags, [True, False, True])
    np.testing.assert_allclose(deltas, [0.005, 2.0, 0.0])
    total = np.sum([path.increment(m)[1] for m in range(4)], axis=0)
    np.testing.assert_allclose(total, [0.02, 8.0, 0.0])


def test_linear_ramp_rejects_doubly_prescribed_components():
    with pytest.raises(ValueError, match="both"):
        LoadingPath.linear_ramp(2, strain_totals={0: 0.1},
                                stress_totals={0: 1.0})
    with pytest.raises(ValueError, match="at least one"):
        LoadingPath.linear_ramp(0, strain_totals={0: 0.1})


def test_loading_path_shape_validation():
    with pytest.raises(ValueError):
        LoadingPath(np.ones((3, 2), dtype=bool), np.zeros((3, 2)))
    with pytest.raises(ValueError):
        LoadingPath(np.ones((3, 3), dtype=bool), np.zeros((2, 3)))


def test_solver_config_validation():
    with pytest.raises(ValueError):
        SolverConfig(newton_tol=0.0)
    with pytest.raises(ValueError):
        SolverConfig(newton_max_iter=0)
    with pytest.raises(ValueError):
        SolverConfig(max_cuts=-1)


# =============================================================================
# Initial reference material
# =============================================================================
def test_initial_reference_is_the_voigt_average():
    grid = stripe_grid(8, 8, boundary=2)  # 25% phase 0, 75% phase 1
    mats = elastic_materials()
    ref = initial_reference(grid, mats)
    lam0, mu0 = lame_from_young(100.0, 0.3)
    lam1, mu1 = lame_from_young(1.0, 0.19)
    assert ref.lame_lambda == pytest.approx(0.25 * lam0 + 0.75 * lam1,
                                            rel=1e-14)
    assert ref.shear_mu == pytest.approx(0.25 * mu0 + 0.75 * mu1,
                                         rel=1e-14)


def test_initial_reference_respects_pinned_moduli():
    grid = uniform_grid(4, 4)
    config = SolverConfig(ref_lambda=3.0, ref_mu=4.0)
    ref = initial_reference(grid, elastic_materials(), config)
    assert (ref.lame_lambda, ref.shear_mu) == (3.0, 4.0)


# =============================================================================
# Isotropic regression of the reference material
# =============================================================================
def test_planted_moduli_are_recovered_exactly():
    rng = np.random.default_rng(30)
    for _ in range(200):
        lam, mu = rng.uniform(0.5, 50.0, size=2)
        eps = rng.normal(size=3)
        sig = lam * (eps[0] + eps[1]) * np.array([1.0, 1.0, 0.0]) \
            + 2.0 * mu * eps
        lam_hat, mu_hat, flag = self_consistent_fit(eps, sig, (1.0, 1.0))
        assert flag is None
        assert lam_hat == pytest.approx(lam, rel=1e-12)
        assert mu_hat == pytest.approx(mu, rel=1e-12)


def test_fit_handles_deviatoric_and_degenerate_increments():
    # purely deviatoric increment: no volumetric information, mu-only fit
    eps = np.array([0.5, -0.5, 0.3])
    sig = 2.0 * 7.0 * eps
    lam_hat, mu_hat, flag = self_consistent_fit(eps, sig, (11.0, 1.0))
    assert flag == "mu-only"
    assert lam_hat == 11.0
    assert mu_hat == pytest.approx(7.0, rel=1e-13)
    # zero increment: nothing to fit
    lam_hat, mu_hat, flag = self_consistent_fit(np.zeros(3), np.zeros(3),
                                                (11.0, 3.0))
    assert flag == "kept-previous"
    assert (lam_hat, mu_hat) == (11.0, 3.0)
    # nonphysical fit (negative shear response) is rejected
    lam_hat, mu_hat, flag = self_consistent_fit(eps, -sig, (11.0, 3.0))
    assert flag == "kept-previous"


# =============================================================================
# Reduced solves on closed-form problems
# =============================================================================
def fixed_config(**kw):
    kw.setdefault("newton_tol", 1e-12)
    kw.setdefault("self_consistent", False)
    return SolverConfig(**kw)


def test_homogeneous_medium_any_clustering_gives_uniform_fields():
    grid = uniform_grid(6, 6)
    mat = {0: PhaseMaterial("elastic", 10.0, 0.25)}
    labels = np.arange(36) % 4  # four interleaved clusters
    cmap = map_from_labels(grid, labels)
    system = reduced_system(grid, cmap, mat,
                            ReferenceMaterial(3.0, 2.0))  # off reference
    deltas = np.array([0.01, -0.002, 0.004])
    info = run_self_consistent_increment(system, STRAIN_DRIVEN, deltas,
                                         fixed_config())
    # every cluster carries the macroscale increment, no fluctuation
    np.testing.assert_allclose(extract4_to3(system.states.strain),
                               np.tile(deltas, (4, 1)), rtol=0, atol=1e-13)
    np.testing.assert_allclose(system.total_strain, deltas, atol=1e-14)
    np.testing.assert_allclose(
        system.total_stress, mat[0].stiffness3 @ deltas, rtol=1e-12)
    assert info["newton_iterations"] >= 1


def test_self_consistent_regression_finds_homogeneous_moduli():
    grid = uniform_grid(6, 6)
    mat = {0: PhaseMaterial("elastic", 10.0, 0.25)}
    cmap = phase_map(grid)
    # start the reference far away; the regression must land on the
    # material's own moduli after one elastic increment
    system = reduced_system(grid, cmap, mat, ReferenceMaterial(30.0, 9.0))
    config = SolverConfig(newton_tol=1e-12, self_consistent=True,
                          sc_tol=1e-10)
    run_self_consistent_increment(system, STRAIN_DRIVEN,
                                  np.array([0.01, 0.003, 0.002]), config)
    lam, mu = mat[0].lame
    assert system.reference.lame_lambda == pytest.approx(lam, rel=1e-10)
    assert system.reference.shear_mu == pytest.approx(mu, rel=1e-10)


def test_laminate_closed_form_normal_loading():
    grid = stripe_grid(8, 8, boundary=4)
    mats = elastic_materials()
    cmap = phase_map(grid)
    system = reduced_system(grid, cmap, mats, ReferenceMaterial(20.0, 15.0))
    macro = np.array([0.01, 0.0, 0.0])
    run_self_consistent_increment(system, STRAIN_DRIVEN, macro,
                                  fixed_config())
    exact = laminate_fields(mats[0], mats[1], 0.5, macro)
    got = extract4_to3(system.states.strain)
    np.testing.assert_allclose(got[0], exact["strain_a"], rtol=1e-10,
                               atol=1e-14)
    np.testing.assert_allclose(got[1], exact["strain_b"], rtol=1e-10,
                               atol=1e-14)
    np.testing.assert_allclose(system.total_stress, exact["macro_stress"],
                               rtol=1e-10, atol=1e-14)


def test_laminate_closed_form_shear_and_mixed_strain():
    grid = stripe_grid(8, 8, boundary=2)  # f_a = 0.25
    mats = elastic_materials()
    cmap = phase_map(grid)
    macro = np.array([0.004, -0.002, 0.006])
    for ref in (ReferenceMaterial(20.0, 15.0), ReferenceMaterial(2.0, 1.0)):
        system = reduced_system(grid, cmap, mats, ref)
        run_self_consistent_increment(system, STRAIN_DRIVEN, macro,
                                      fixed_config())
        exact = laminate_fields(mats[0], mats[1], 0.25, macro)
        got = extract4_to3(system.states.strain)
        np.testing.assert_allclose(got[0], exact["strain_a"], rtol=1e-9,
                                   atol=1e-13)
        np.testing.assert_allclose(got[1], exact["strain_b"], rtol=1e-9,
                                   atol=1e-13)
        np.testing.assert_allclose(system.total_stress,
                                   exact["macro_stress"], rtol=1e-9)


def test_stress_driven_homogeneous_plane_strain():
    grid = uniform_grid(4, 4)
    mat = {0: PhaseMaterial("elastic", 10.0, 0.25)}
    cmap = phase_map(grid)
    system = reduced_system(grid, cmap, mat,
                            initial_reference(grid, mat))
    s = 0.15
    flags = np.array([False, False, True])   # both normal stresses driven
    deltas = np.array([s, 0.0, 0.0])
    run_self_consistent_increment(system, flags, deltas, fixed_config())
    lam, mu = mat[0].lame
    c = lam + 2.0 * mu
    det = c * c - lam * lam
    np.testing.assert_allclose(system.total_strain,
                               [s * c / det, -s * lam / det, 0.0],
                               rtol=1e-10, atol=1e-14)
    np.testing.assert_allclose(system.total_stress, [s, 0.0, 0.0],
                               rtol=1e-10, atol=1e-12)


def test_single_cluster_plasticity_reduces_to_the_material_law():
    # the interaction tensor of the whole-domain cluster vanishes, so the
    # reduced solve must reproduce the bare constitutive ramp
    grid = uniform_grid(4, 4)
    mats = {0: benchmark_materials()[0]}
    cmap = phase_map(grid)
    system = reduced_system(grid, cmap, mats,
                            initial_reference(grid, mats))
    assert np.abs(system.cit.tensors).max() < 1e-14
    n_inc = 8
    delta = np.array([0.02 / n_inc, 0.0, 0.0])
    direct = StateBatch(1)
    for _ in range(n_inc):
        advance_increment(system, STRAIN_DRIVEN, delta,
                          fixed_config(newton_max_iter=30))
        direct, _ = state_update(mats[0], direct, delta[None, :])
        np.testing.assert_allclose(system.states.stress, direct.stress,
                                   rtol=1e-10, atol=1e-13)
    assert system.states.acc_p[0] > 0.0  # the ramp actually yielded


def _yielding_laminate():
    # a stiff elastic layer forces the plastic layer to carry real strain
    grid = stripe_grid(8, 8, boundary=4)
    mats = {0: benchmark_materials()[0],
            1: PhaseMaterial("elastic", 300.0, 0.3)}
    return reduced_system(grid, phase_map(grid), mats,
                          initial_reference(grid, mats))


def test_increment_cutting_recovers_from_a_hard_step():
    system = _yielding_laminate()
    # a giant plastic step under a tight iteration cap forces subdivision
    config = fixed_config(newton_max_iter=3, max_cuts=8)
    info = advance_increment(system, STRAIN_DRIVEN,
                             np.array([0.05, 0.0, 0.02]), config)
    assert info["cuts"] >= 1
    assert system.states.acc_p[0] > 0.01
    np.testing.assert_allclose(system.total_strain, [0.05, 0.0, 0.02],
                               atol=1e-12)


def test_increment_failure_when_cutting_is_exhausted():
    system = _yielding_laminate()
    config = fixed_config(newton_max_iter=1, max_cuts=0)
    with pytest.raises(IncrementFailure):
        advance_increment(system, STRAIN_DRIVEN,
                          np.array([0.05, 0.0, 0.02]), config)


def test_snapshot_restore_round_trip():
    grid = uniform_grid(4, 4)
    mats = {0: benchmark_materials()[0]}
    system = reduced_system(grid, phase_map(grid), mats,
                            initial_reference(grid, mats))
    advance_increment(system, STRAIN_DRIVEN, np.array([0.01, 0.0, 0.0]),
                      fixed_config(newton_max_iter=30))
    snap = system.snapshot()
    stress_before = system.states.stress.copy()
    advance_increment(system, STRAIN_DRIVEN, np.array([0.01, 0.0, 0.0]),
                      fixed_config(newton_max_iter=30))
    assert not np.allclose(system.states.stress, stress_before)
    system.restore(snap)
    np.testing.assert_array_equal(system.states.stress, stress_before)
    np.testing.assert_array_equal(system.total_strain, [0.01, 0.0, 0.0])


# =============================================================================
# Fracture and toughness
# =============================================================================
def test_fraction_above_is_strict_and_weighted():
    acc = np.array([0.3, 0.1, 0.25])
    w = np.array([0.5, 0.25, 0.25])
    assert fraction_above(acc, w, 0.25) == pytest.approx(0.5)
    assert fraction_above(acc, w, 0.05) == pytest.approx(1.0)
    assert fraction_above(acc, w, 0.3) == pytest.approx(0.0)


def test_check_fracture_normalizes_within_the_phase():
    grid = stripe_grid(8, 8, boundary=4)
    mats = benchmark_materials()
    cmap = phase_map(grid)
    system = reduced_system(grid, cmap, mats,
                            initial_reference(grid, mats))
    system.states.acc_p[:] = [0.3, 0.0]  # all of phase 0, none of phase 1
    criterion = FractureCriterion(0, 0.5, 0.25)
    assert check_fracture(system, criterion)
    criterion = FractureCriterion(0, 0.5, 0.35)
    assert not check_fracture(system, criterion)
    with pytest.raises(ValueError, match="no clusters"):
        check_fracture(system, FractureCriterion(9, 0.5, 0.25))


def test_compute_toughness_trapezoid_values():
    assert compute_toughness([1.0, 2.0], [1.0, 1.0]) == pytest.approx(1.5)
    assert compute_toughness([1.0, 2.0], [1.0, 1.0], end_index=0) \
        == pytest.approx(0.5)
    assert compute_toughness([0.01], [2.0]) == pytest.approx(0.01)
    with pytest.raises(ValueError):
        compute_toughness([1.0, 2.0], [1.0])


def test_homogenize_weights_rows():
    values = np.array([[1.0, 0.0, 0.0], [0.0, 1.0, 0.0]])
    np.testing.assert_allclose(homogenize(values, [0.25, 0.75]),
                               [0.25, 0.75, 0.0])
