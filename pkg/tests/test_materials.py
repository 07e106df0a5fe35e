"""Constitutive models: elasticity, radial return, consistent tangents.

The plasticity checks lean on an independent scalar oracle implemented
here with bisection only, so agreement is meaningful.
"""

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from crom.materials import (PhaseMaterial, StateBatch, hardening_slope,
                            hardening_stress, state_update, state_update4)
from crom.tensors import dev4, expand3_to4, iso_stiffness4, trace4

from conftest import benchmark_materials


def matrix_material():
    return benchmark_materials()[0]


# =============================================================================
# Independent scalar oracle (bisection-only radial return)
# =============================================================================
def oracle_update(material, e_strain_old, acc_p_old, delta4):
    """Reference elastic-predictor / radial-return update of one point."""
    lam, mu = material.lame
    d4 = iso_stiffness4(lam, mu)
    e_trial = e_strain_old + delta4
    sig_trial = d4 @ e_trial
    s_trial = dev4(sig_trial)
    q_trial = np.sqrt(1.5) * np.linalg.norm(s_trial)

    def sigma_y(p):
        return (material.sigma_y0
                + material.hardening_coef * p ** material.hardening_exp)

    if q_trial - sigma_y(acc_p_old) <= 0.0:
        return sig_trial, e_trial, acc_p_old

    def g(dg):
        return q_trial - 3.0 * mu * dg - sigma_y(acc_p_old + dg)

    lo, hi = 0.0, (q_trial - sigma_y(acc_p_old)) / (3.0 * mu)
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        if g(mid) > 0.0:
            lo = mid
        else:
            hi = mid
    dgamma = 0.5 * (lo + hi)
    sig_new = sig_trial - (3.0 * mu * dgamma / q_trial) * s_trial
    dep = np.sqrt(1.5) * dgamma * s_trial / np.linalg.norm(s_trial)
    return sig_new, e_trial - dep, acc_p_old + dgamma


# =============================================================================
# Parameter validation and the hardening law
# =============================================================================
def test_material_validation():
    with pytest.raises(ValueError, match="unknown material kind"):
        PhaseMaterial("rubber", 1.0, 0.3)
    with pytest.raises(ValueError, match="must be positive"):
        PhaseMaterial("elastic", -1.0, 0.3)
    with pytest.raises(ValueError, match="Poisson"):
        PhaseMaterial("elastic", 1.0, 0.5)
    with pytest.raises(ValueError, match="needs sigma_y0"):
        PhaseMaterial("von_mises", 1.0, 0.3)
    with pytest.raises(ValueError, match="yield stress"):
        PhaseMaterial("von_mises", 1.0, 0.3, sigma_y0=0.0,
                      hardening_coef=0.1, hardening_exp=0.5)
    with pytest.raises(ValueError, match="exponent"):
        PhaseMaterial("von_mises", 1.0, 0.3, sigma_y0=1.0,
                      hardening_coef=0.1, hardening_exp=1.5)


def test_hardening_law_endpoints():
    mat = matrix_material()
    assert hardening_stress(mat, 0.0) == 0.5
    assert hardening_stress(mat, 1.0) == pytest.approx(0.7, rel=0,
                                                       abs=1e-16)
    assert hardening_stress(mat, 0.0625) == pytest.approx(
        0.5659753955386447, rel=1e-15)
    with pytest.raises(ValueError):
        hardening_stress(mat, -0.1)


def test_hardening_slope_is_floored_near_zero():
    mat = matrix_material()
    assert np.isfinite(hardening_slope(mat, 0.0))
    assert hardening_slope(mat, 0.0) == hardening_slope(mat, 1e-13)


# =============================================================================
# Elastic updates
# =============================================================================
def test_elastic_update_is_linear_with_constant_tangent():
    mat = PhaseMaterial("elastic", 7.0, 0.22)
    rng = np.random.default_rng(10)
    state = StateBatch(5)
    delta = rng.normal(scale=0.01, size=(5, 3))
    new, tangent = state_update(mat, state, delta)
    d4 = mat.stiffness4
    np.testing.assert_allclose(new.stress, expand3_to4(delta) @ d4.T,
                               atol=1e-15)
    np.testing.assert_allclose(tangent,
                               np.broadcast_to(mat.stiffness3, (5, 3, 3)))
    np.testing.assert_array_equal(new.acc_p, 0.0)
    np.testing.assert_array_equal(new.work_p, 0.0)
    np.testing.assert_allclose(new.eps_p, 0.0)


def test_volumetric_increment_never_yields():
    mat = matrix_material()
    state = StateBatch(1)
    delta4 = 0.5 * np.array([[1.0, 1.0, 1.0, 0.0]])  # huge but hydrostatic
    new, tangent = state_update4(mat, state, delta4)
    lam, mu = mat.lame
    assert new.acc_p[0] == 0.0
    np.testing.assert_allclose(dev4(new.stress), 0.0, atol=1e-12)
    assert trace4(new.stress)[0] == pytest.approx(
        (3.0 * lam + 2.0 * mu) * 1.5, rel=1e-13)
    np.testing.assert_allclose(tangent[0], mat.stiffness4)


# =============================================================================
# Radial return against the oracle
# =============================================================================
def test_plastic_update_matches_frozen_example():
    # virgin matrix material, one in-plane increment; expected values from
    # the bisection oracle, frozen
    mat = matrix_material()
    state = StateBatch(1)
    delta3 = np.array([[0.02, -0.006, 0.008 * np.sqrt(2.0)]])
    new, _ = state_update(mat, state, delta3)
    np.testing.assert_allclose(
        new.stress[0],
        [1.4670783561668355, 0.9576846217969841, 1.0752370220361807,
         0.22165893161037586], rtol=1e-12)
    assert new.acc_p[0] == pytest.approx(0.013589156074171056, rel=1e-12)


def test_plastic_update_matches_bisection_oracle_on_random_paths():
    mat = matrix_material()
    rng = np.random.default_rng(11)
    n = 40
    state = StateBatch(n)
    for _ in range(3):  # three increments so states leave the virgin cone
        delta = rng.normal(scale=0.01, size=(n, 3))
        expected = [oracle_update(mat, state.e_strain[i], state.acc_p[i],
                                  expand3_to4(delta[i]))
                    for i in range(n)]
        state, _ = state_update(mat, state, delta)
        for i, (sig, e_el, acc) in enumerate(expected):
            np.testing.assert_allclose(state.stress[i], sig, rtol=1e-10,
                                       atol=1e-13)
            np.testing.assert_allclose(state.e_strain[i], e_el, rtol=1e-10,
                                       atol=1e-13)
            assert state.acc_p[i] == pytest.approx(acc, rel=1e-10,
                                                   abs=1e-15)


def test_yield_consistency_on_many_random_states():
    # after any plastic update the stress must sit on the yield surface
    mat = matrix_material()
    rng = np.random.default_rng(12)
    n = 2000
    state = StateBatch(n)
    prior, _ = state_update(mat, state,
                            rng.normal(scale=0.02, size=(n, 3)))
    state, _ = state_update(mat, prior,
                            rng.normal(scale=0.02, size=(n, 3)))
    # rows that yielded in the last update end exactly on the hardened
    # yield surface (rows that unloaded elastically sit inside it)
    plastic = state.acc_p > prior.acc_p
    assert plastic.sum() > n // 2
    q = np.sqrt(1.5) * np.linalg.norm(dev4(state.stress[plastic]), axis=1)
    sig_y = hardening_stress(mat, state.acc_p[plastic])
    assert np.abs(q - sig_y).max() <= 1e-10 * mat.sigma_y0


def test_accumulated_plastic_strain_never_decreases():
    mat = matrix_material()
    rng = np.random.default_rng(13)
    state = StateBatch(20)
    previous = state.acc_p.copy()
    for _ in range(6):
        state, _ = state_update(mat, state,
                                rng.normal(scale=0.015, size=(20, 3)))
        assert np.all(state.acc_p >= previous)
        previous = state.acc_p.copy()
    # and the stress never leaves the hardened yield surface
    q = np.sqrt(1.5) * np.linalg.norm(dev4(state.stress), axis=1)
    assert np.all(q <= hardening_stress(mat, state.acc_p) + 1e-9)


def test_plastic_work_matches_midpoint_rule():
    mat = matrix_material()
    rng = np.random.default_rng(14)
    n = 30
    state = StateBatch(n)
    delta = rng.normal(scale=0.02, size=(n, 3))
    new, _ = state_update(mat, state, delta)
    dep = expand3_to4(delta) - (new.e_strain - state.e_strain)
    midpoint = np.einsum("ij,ij->i", 0.5 * (state.stress + new.stress),
                         dep)
    np.testing.assert_allclose(new.work_p - state.work_p, midpoint,
                               atol=1e-14)
    plastic = new.acc_p > 0.0
    assert np.all(new.work_p[plastic] > 0.0)
    np.testing.assert_array_equal(new.work_p[~plastic], 0.0)


# =============================================================================
# Consistent tangent vs. finite differences
# =============================================================================
def _fd_tangent(mat, state, delta, h=1e-7):
    """Central finite differences of the in-plane stress increment;
    returns the 3x3 matrix and whether all probes stayed in one regime."""
    base_plastic = state_update(mat, state, delta[None, :])[0].acc_p[0] \
        > state.acc_p[0]
    tangent = np.empty((3, 3))
    clean = True
    for k in range(3):
        probe = np.zeros(3)
        probe[k] = h
        up, _ = state_update(mat, state, (delta + probe)[None, :])
        dn, _ = state_update(mat, state, (delta - probe)[None, :])
        for side in (up, dn):
            if (side.acc_p[0] > state.acc_p[0]) != base_plastic:
                clean = False
        tangent[:, k] = (up.stress[0, [0, 1, 3]]
                         - dn.stress[0, [0, 1, 3]]) / (2.0 * h)
    return tangent, clean


def test_consistent_tangent_matches_finite_differences():
    mat = matrix_material()
    rng = np.random.default_rng(15)
    checked_plastic = 0
    checked_elastic = 0
    for trial in range(90):
        # small increments stay elastic (the yield strain is ~0.5%),
        # large ones yield; every third trial probes the elastic branch
        scale = 0.0008 if trial % 3 == 0 else 0.02
        state = StateBatch(1)
        # optional prior increment so some probes start hardened
        if scale > 0.001 and rng.random() < 0.5:
            state, _ = state_update(mat, state,
                                    rng.normal(scale=0.02, size=(1, 3)))
        delta = rng.normal(scale=scale, size=3)
        new, tangent = state_update(mat, state, delta[None, :])
        fd, clean = _fd_tangent(mat, state, delta)
        if not clean:
            continue  # probe straddled the elastic/plastic boundary
        scale = max(np.abs(fd).max(), 1.0)
        assert np.abs(tangent[0] - fd).max() <= 1e-5 * scale
        if new.acc_p[0] > state.acc_p[0]:
            checked_plastic += 1
        else:
            checked_elastic += 1
    assert checked_plastic >= 10
    assert checked_elastic >= 5


# =============================================================================
# StateBatch mechanics
# =============================================================================
def test_state_batch_subset_assign_round_trip():
    rng = np.random.default_rng(16)
    state = StateBatch(6)
    state.strain = rng.normal(size=(6, 4))
    state.acc_p = rng.uniform(size=6)
    sub = state.subset([1, 4])
    sub.acc_p[:] = 99.0
    assert state.acc_p[1] != 99.0  # subset copies
    state.assign([1, 4], sub)
    assert state.acc_p[1] == 99.0 and state.acc_p[4] == 99.0


def test_state_update_batch_size_mismatch():
    mat = matrix_material()
    with pytest.raises(ValueError, match="does not match"):
        state_update(mat, StateBatch(3), np.zeros((2, 3)))


@settings(max_examples=30, deadline=None)
@given(scale=st.floats(1e-4, 0.1), seed=st.integers(0, 10_000))
def test_update_consistency_property(scale, seed):
    # invariants under arbitrary increments: consistency, monotone acc_p,
    # elastic stress-strain relation on the elastic part
    mat = matrix_material()
    rng = np.random.default_rng(seed)
    state = StateBatch(8)
    new, _ = state_update(mat, state, rng.normal(scale=scale, size=(8, 3)))
    d4 = mat.stiffness4
    np.testing.assert_allclose(new.stress, new.e_strain @ d4.T, rtol=1e-10,
                               atol=1e-14)
    q = np.sqrt(1.5) * np.linalg.norm(dev4(new.stress), axis=1)
    assert np.all(q <= hardening_stress(mat, new.acc_p)
                  + 1e-9 * mat.sigma_y0)
    assert np.all(new.acc_p >= 0.0)
