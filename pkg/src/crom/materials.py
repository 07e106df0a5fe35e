"""Constitutive models: isotropic elasticity and von Mises plasticity.

State updates are strain-driven and incremental. The von Mises model uses
an elastic-predictor / radial-return corrector with associative flow and
isotropic power-law hardening

    sigma_y(acc_p) = sigma_y0 + H_coef * acc_p ** exponent,

and returns the consistent (algorithmic) tangent of the update. All
computations run in the internal Mandel order (11, 22, 33, 12) so the
out-of-plane normal components are carried exactly under plane strain;
the public entry points take and return in-plane quantities.

Updates are vectorized over a batch of material points: the reduced solver
calls them with one row per cluster and the full-field solver with one row
per voxel.

The scalar return-mapping equation is solved by a safeguarded Newton
iteration (bracketed, with bisection fallback). The hardening law has an
unbounded slope at acc_p = 0 for exponent < 1, so the slope is evaluated
with the accumulated plastic strain floored at 1e-12; the safeguard makes
the iteration robust to that stiff start.
"""

import numpy as np

from crom.tensors import (SQRT2, iso_stiffness4, deviatoric_projector4,
                          expand3_to4, extract4_to3, extract4_to3_matrix,
                          dev4, lame_from_young)

# Floor applied to the accumulated plastic strain inside hardening-slope
# evaluations (the power law has infinite initial slope for exponent < 1)
ACC_P_SLOPE_FLOOR = 1e-12

# Return-mapping iteration limits
RETMAP_MAX_ITER = 100
RETMAP_RTOL = 1e-12


class PhaseMaterial:
    """Constitutive model of one material phase.

    Parameters
    ----------
    kind : {'elastic', 'von_mises'}
    young : float
        Young's modulus (stress units).
    poisson : float
        Poisson's ratio, in (-1, 0.5).
    sigma_y0, hardening_coef, hardening_exp : float, optional
        Parameters of the isotropic hardening law (von Mises only):
        sigma_y = sigma_y0 + hardening_coef * acc_p ** hardening_exp.
    """

    def __init__(self, kind, young, poisson, sigma_y0=None,
                 hardening_coef=None, hardening_exp=None):
        if kind not in ("elastic", "von_mises"):
            raise ValueError("unknown material kind: %r" % (kind,))
        young = float(young)
        poisson = float(poisson)
        if young <= 0.0:
            raise ValueError("Young's modulus must be positive")
        if not -1.0 < poisson < 0.5:
            raise ValueError("Poisson's ratio must lie in (-1, 0.5)")
        self.kind = kind
        self.young = young
        self.poisson = poisson
        if kind == "von_mises":
            if sigma_y0 is None or hardening_coef is None \
                    or hardening_exp is None:
                raise ValueError("von Mises material needs sigma_y0, "
                                 "hardening_coef and hardening_exp")
            sigma_y0 = float(sigma_y0)
            hardening_coef = float(hardening_coef)
            hardening_exp = float(hardening_exp)
            if sigma_y0 <= 0.0:
                raise ValueError("initial yield stress must be positive")
            if hardening_coef < 0.0:
                raise ValueError("hardening coefficient must be >= 0")
            if not 0.0 < hardening_exp <= 1.0:
                raise ValueError("hardening exponent must lie in (0, 1]")
            self.sigma_y0 = sigma_y0
            self.hardening_coef = hardening_coef
            self.hardening_exp = hardening_exp
        else:
            self.sigma_y0 = None
            self.hardening_coef = None
            self.hardening_exp = None

    @property
    def lame(self):
        """Lame parameters (lambda, mu)."""
        return lame_from_young(self.young, self.poisson)

    @property
    def stiffness4(self):
        """Elastic stiffness, internal-order 4x4 Mandel matrix."""
        lam, mu = self.lame
        return iso_stiffness4(lam, mu)

    @property
    def stiffness3(self):
        """Elastic stiffness, in-plane 3x3 Mandel matrix."""
        return extract4_to3_matrix(self.stiffness4)

    def __repr__(self):
        if self.kind == "elastic":
            return ("PhaseMaterial('elastic', young=%r, poisson=%r)"
                    % (self.young, self.poisson))
        return ("PhaseMaterial('von_mises', young=%r, poisson=%r, "
                "sigma_y0=%r, hardening_coef=%r, hardening_exp=%r)"
                % (self.young, self.poisson, self.sigma_y0,
                   self.hardening_coef, self.hardening_exp))


def hardening_stress(material, acc_p):
    """Yield stress of the isotropic hardening law at a given accumulated
    plastic strain (scalar or array)."""
    if material.kind != "von_mises":
        raise ValueError("hardening law undefined for %r materials"
                         % (material.kind,))
    acc_p = np.asarray(acc_p, dtype=float)
    if np.any(acc_p < 0.0):
        raise ValueError("accumulated plastic strain must be >= 0")
    return (material.sigma_y0
            + material.hardening_coef * acc_p ** material.hardening_exp)


def hardening_slope(material, acc_p):
    """Derivative of the hardening law, floored near acc_p = 0."""
    acc_p = np.maximum(np.asarray(acc_p, dtype=float), ACC_P_SLOPE_FLOOR)
    a = material.hardening_exp
    return material.hardening_coef * a * acc_p ** (a - 1.0)


# =============================================================================
# Material state
# =============================================================================
class StateBatch:
    """Constitutive state of a batch of material points.

    Attributes (all numpy arrays, first axis = point)
    ----------
    strain : (n, 4)     total strain, internal Mandel order
    e_strain : (n, 4)   elastic strain
    stress : (n, 4)     total stress
    acc_p : (n,)        accumulated plastic strain
    work_p : (n,)       plastic work density
    last_delta : (n, 3) last converged in-plane strain increment
    """

    __slots__ = ("strain", "e_strain", "stress", "acc_p", "work_p",
                 "last_delta")

    def __init__(self, n):
        self.strain = np.zeros((n, 4))
        self.e_strain = np.zeros((n, 4))
        self.stress = np.zeros((n, 4))
        self.acc_p = np.zeros(n)
        self.work_p = np.zeros(n)
        self.last_delta = np.zeros((n, 3))

    def __len__(self):
        return self.acc_p.shape[0]

    @property
    def eps_p(self):
        """Plastic strain (total minus elastic), internal order."""
        return self.strain - self.e_strain

    def copy(self):
        out = StateBatch(0)
        for name in self.__slots__:
            setattr(out, name, getattr(self, name).copy())
        return out

    def subset(self, idx):
        """New StateBatch holding copies of the selected rows."""
        out = StateBatch(0)
        for name in self.__slots__:
            setattr(out, name, getattr(self, name)[idx].copy())
        return out

    def assign(self, idx, other):
        """Write another batch's rows into the selected rows."""
        for name in self.__slots__:
            getattr(self, name)[idx] = getattr(other, name)
        return self


# =============================================================================
# State update
# =============================================================================
def state_update(material, state, delta3):
    """Incremental state update under plane strain.

    Parameters
    ----------
    material : PhaseMaterial
    state : StateBatch
        Last converged state (not modified).
    delta3 : (n, 3) array
        In-plane strain increments, Mandel components.

    Returns
    -------
    new_state : StateBatch
    tangent3 : (n, 3, 3) array
        Consistent tangent of the update, in-plane Mandel block.
    """
    delta3 = np.atleast_2d(np.asarray(delta3, dtype=float))
    new_state, tangent4 = state_update4(material, state,
                                        expand3_to4(delta3))
    new_state.last_delta = delta3.copy()
    return new_state, extract4_to3_matrix(tangent4)


def state_update4(material, state, delta4):
    """Incremental state update in the internal component order.

    Same contract as :func:`state_update` but takes 4-component strain
    increments (general triaxiality) and returns the 4x4 tangent.
    """
    delta4 = np.atleast_2d(np.asarray(delta4, dtype=float))
    n = delta4.shape[0]
    if len(state) != n:
        raise ValueError("state batch size %d does not match %d increments"
                         % (len(state), n))
    d4 = material.stiffness4
    e_trial = state.e_strain + delta4
    stress_trial = e_trial @ d4.T

    new = state.copy()
    new.strain = state.strain + delta4
    new.e_strain = e_trial
    new.stress = stress_trial
    tangent4 = np.broadcast_to(d4, (n, 4, 4)).copy()

    if material.kind == "elastic":
        return new, tangent4

    lam, mu = material.lame
    dev_trial = dev4(stress_trial)
    norm_dev = np.linalg.norm(dev_trial, axis=-1)
    q_trial = np.sqrt(1.5) * norm_dev
    sigma_y_old = hardening_stress(material, state.acc_p)
    plastic = q_trial - sigma_y_old > 0.0
    if not np.any(plastic):
        return new, tangent4

    # --- radial return on the plastic rows -----------------------------
    q_tr = q_trial[plastic]
    p_old = state.acc_p[plastic]
    dgamma = _solve_plastic_multiplier(material, mu, q_tr, p_old)

    n_unit = dev_trial[plastic] / norm_dev[plastic][:, None]
    dep = np.sqrt(1.5) * dgamma[:, None] * n_unit
    e_new = e_trial[plastic] - dep
    stress_new = e_new @ d4.T
    new.e_strain[plastic] = e_new
    new.stress[plastic] = stress_new
    new.acc_p[plastic] = p_old + dgamma
    # plastic work by the midpoint rule over the increment
    sig_mid = 0.5 * (state.stress[plastic] + stress_new)
    new.work_p[plastic] = state.work_p[plastic] \
        + np.einsum("ij,ij->i", sig_mid, dep)

    # --- consistent tangent ---------------------------------------------
    slope = hardening_slope(material, new.acc_p[plastic])
    factor1 = 6.0 * mu ** 2 * dgamma / q_tr
    factor2 = 6.0 * mu ** 2 * (dgamma / q_tr - 1.0 / (3.0 * mu + slope))
    pdev = deviatoric_projector4()
    nxn = np.einsum("ij,ik->ijk", n_unit, n_unit)
    tangent4[plastic] = (d4
                         - factor1[:, None, None] * pdev
                         + factor2[:, None, None] * nxn)
    return new, tangent4


def _solve_plastic_multiplier(material, mu, q_tr, p_old):
    """Solve q_tr - 3 mu dg - sigma_y(p_old + dg) = 0 for dg > 0.

    Safeguarded Newton. Both single-term roots bound the true root from
    above (each dropped term is non-negative): the elastic one
    (q_tr - sigma_y(p_old)) / (3 mu) and the inverted hardening law
    ((q_tr - sigma_y0) / H) ** (1/a) - p_old. Starting from the tighter
    bound matters: a virgin state barely past yield has its root on the
    near-vertical wall of the hardening curve (slope -> inf as
    acc_p -> 0 for exponents < 1), where Newton from dg = 0 advances in
    steps too small to ever leave the bracket. Iterates that leave the
    bracket, or that cannot beat bisection, bisect instead.
    """
    tol = RETMAP_RTOL * material.sigma_y0
    lo = np.zeros_like(q_tr)
    hi = (q_tr - hardening_stress(material, p_old)) / (3.0 * mu)
    if material.hardening_coef > 0.0:
        inv = ((q_tr - material.sigma_y0) / material.hardening_coef) \
            ** (1.0 / material.hardening_exp) - p_old
        dg = np.minimum(hi, np.maximum(inv, 0.0))
    else:
        dg = hi.copy()
    converged = np.zeros(q_tr.shape, dtype=bool)
    for _ in range(RETMAP_MAX_ITER):
        f = q_tr - 3.0 * mu * dg \
            - hardening_stress(material, p_old + dg)
        converged |= np.abs(f) <= tol
        if np.all(converged):
            break
        widen = ~converged
        lo = np.where(widen & (f > 0.0), dg, lo)
        hi = np.where(widen & (f < 0.0), dg, hi)
        fprime = -3.0 * mu - hardening_slope(material, p_old + dg)
        step = dg - f / fprime
        outside = (step <= lo) | (step >= hi) | ~np.isfinite(step)
        slow = np.abs(2.0 * f) > (hi - lo) * np.abs(fprime)
        step = np.where(outside | slow, 0.5 * (lo + hi), step)
        dg = np.where(converged, dg, step)
    else:
        raise RuntimeError(
            "return mapping failed to converge in %d iterations "
            "(pathological hardening state)" % RETMAP_MAX_ITER)
    return dg
