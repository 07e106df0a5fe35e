"""Cluster-reduced incremental solver.

Per macroscale loading increment the reduced equilibrium system couples the
per-cluster strain increments with a homogeneous far-field strain increment:

    R(I) = de(I) + sum_J T(I,J) : (ds_hat(J) - D0 : de(J)) - de_far = 0

plus one constraint row per strain component that prescribes either the
volume-averaged strain increment or the volume-averaged stress increment
(mixed control is per-component). The system is solved by Newton-Raphson
with the consistent constitutive tangents; an outer self-consistent loop
refits the isotropic reference material (lambda0, mu0) to the homogenized
increment by linear regression and repeats the Newton solve until the
reference stabilizes.

Interaction tensors are assembled once per clustering with the reference
material of that assembly and are *not* re-assembled when the
self-consistent loop moves (lambda0, mu0); the reference enters the
residual only through the D0 polarization term.

All cluster-indexed arrays follow the ascending active-id order of the
cluster map, which is also the row order of the interaction matrix.
"""

import numpy as np

from crom.materials import StateBatch, state_update
from crom.spectral import ReferenceMaterial
from crom.tensors import extract4_to3

N_COMP = 3  # independent in-plane strain components

_trapz = getattr(np, "trapezoid", np.trapz if hasattr(np, "trapz") else None)


class IncrementFailure(RuntimeError):
    """A loading increment could not be solved (after any allowed cuts)."""


class _NewtonDidNotConverge(RuntimeError):
    """Inner signal: one Newton solve failed; the driver may cut."""


# =============================================================================
# Loading, configuration, fracture criterion
# =============================================================================
class LoadingPath:
    """Sequence of mixed strain/stress macroscale constraint increments.

    Parameters
    ----------
    strain_flags : (n_inc, 3) bool array
        True where the component is strain-driven, False where the stress
        increment is prescribed instead.
    deltas : (n_inc, 3) array
        Prescribed increment of the flagged quantity per component
        (strain units where flagged, stress units elsewhere).
    """

    def __init__(self, strain_flags, deltas):
        strain_flags = np.asarray(strain_flags, dtype=bool)
        deltas = np.asarray(deltas, dtype=float)
        if strain_flags.ndim != 2 or strain_flags.shape[1] != N_COMP:
            raise ValueError("strain_flags must be (n_inc, 3)")
        if deltas.shape != strain_flags.shape:
            raise ValueError("deltas shape must match strain_flags")
        if strain_flags.shape[0] < 1:
            raise ValueError("a loading path needs at least one increment")
        self.strain_flags = strain_flags
        self.deltas = deltas

    @classmethod
    def linear_ramp(cls, n_increments, strain_totals=None,
                    stress_totals=None):
        """Equal increments towards per-component totals.

        Exactly one of strain/stress total must be given per component;
        components given in neither dict default to strain-driven 0.
        """
        strain_totals = dict(strain_totals or {})
        stress_totals = dict(stress_totals or {})
        if n_increments < 1:
            raise ValueError("need at least one increment")
        flags = np.ones((n_increments, N_COMP), dtype=bool)
        deltas = np.zeros((n_increments, N_COMP))
        for k in range(N_COMP):
            if k in strain_totals and k in stress_totals:
                raise ValueError("component %d prescribed in both strain "
                                 "and stress" % k)
            if k in stress_totals:
                flags[:, k] = False
                deltas[:, k] = stress_totals[k] / n_increments
            else:
                deltas[:, k] = strain_totals.get(k, 0.0) / n_increments
        return cls(flags, deltas)

    @property
    def n_increments(self):
        return self.deltas.shape[0]

    def increment(self, m):
        return self.strain_flags[m], self.deltas[m]


class SolverConfig:
    """Tolerances and caps of the reduced solve."""

    def __init__(self, newton_tol=1e-6, newton_max_iter=12, sc_tol=1e-4,
                 sc_max_iter=20, self_consistent=True, max_cuts=4,
                 ref_lambda=None, ref_mu=None):
        if newton_tol <= 0.0 or sc_tol <= 0.0:
            raise ValueError("tolerances must be positive")
        if newton_max_iter < 1 or sc_max_iter < 1:
            raise ValueError("iteration caps must be >= 1")
        if max_cuts < 0:
            raise ValueError("max_cuts must be >= 0")
        self.newton_tol = float(newton_tol)
        self.newton_max_iter = int(newton_max_iter)
        self.sc_tol = float(sc_tol)
        self.sc_max_iter = int(sc_max_iter)
        self.self_consistent = bool(self_consistent)
        self.max_cuts = int(max_cuts)
        self.ref_lambda = None if ref_lambda is None else float(ref_lambda)
        self.ref_mu = None if ref_mu is None else float(ref_mu)


class FractureCriterion:
    """Fracture when a volume fraction of one phase accumulates plastic
    strain beyond a threshold."""

    def __init__(self, phase, volume_fraction_threshold, acc_p_threshold):
        if volume_fraction_threshold <= 0.0 or acc_p_threshold <= 0.0:
            raise ValueError("fracture thresholds must be positive")
        self.phase = int(phase)
        self.volume_fraction_threshold = float(volume_fraction_threshold)
        self.acc_p_threshold = float(acc_p_threshold)


def initial_reference(grid, phase_materials, config=None):
    """Initial reference material: volume-fraction (Voigt) average of the
    phase elastic moduli, unless the config pins explicit values."""
    if config is not None and config.ref_lambda is not None \
            and config.ref_mu is not None:
        return ReferenceMaterial(config.ref_lambda, config.ref_mu)
    fractions = grid.phase_fractions()
    lam0 = 0.0
    mu0 = 0.0
    for phase, frac in fractions.items():
        lam, mu = phase_materials[phase].lame
        lam0 += frac * lam
        mu0 += frac * mu
    return ReferenceMaterial(lam0, mu0)


# =============================================================================
# Residual and Jacobian
# =============================================================================
def _stress_row_scale(reference):
    """Scale applied to stress-prescribed constraint components so the
    stacked residual is uniformly strain-like."""
    return 1.0 / (reference.lame_lambda + 2.0 * reference.shear_mu)


def loading_norm(strain_flags, deltas, reference):
    """Norm of the prescribed increment used to make the Newton residual
    relative; falls back to 1 for a zero increment."""
    scaled = np.where(strain_flags, deltas,
                      deltas * _stress_row_scale(reference))
    norm = np.linalg.norm(scaled)
    return norm if norm > 1e-14 else 1.0


def assemble_residual(delta_strains, far_field, delta_stresses, cit,
                      reference, fractions, strain_flags, deltas):
    """Stacked residual of the reduced system.

    Rows 0..3*n_c-1: per-cluster equilibrium; last 3 rows: macroscale
    constraints (strain rows as-is, stress rows scaled to strain units).
    """
    delta_strains = np.asarray(delta_strains, dtype=float)
    delta_stresses = np.asarray(delta_stresses, dtype=float)
    n_c = cit.n_c
    if delta_strains.shape != (n_c, N_COMP) \
            or delta_stresses.shape != (n_c, N_COMP):
        raise ValueError("need one 3-component increment per cluster")
    d0 = reference.elasticity3
    polarization = delta_stresses - delta_strains @ d0.T
    res = np.empty((n_c + 1) * N_COMP)
    res[:n_c * N_COMP] = (
        delta_strains
        + np.einsum("ijab,jb->ia", cit.tensors, polarization)
        - far_field[None, :]).reshape(-1)
    macro_eps = fractions @ delta_strains
    macro_sig = fractions @ delta_stresses
    scale = _stress_row_scale(reference)
    constraint = np.where(strain_flags, macro_eps - deltas,
                          (macro_sig - deltas) * scale)
    res[n_c * N_COMP:] = constraint
    return res


def assemble_jacobian(tangents, cit, reference, fractions, strain_flags):
    """Dense Jacobian of :func:`assemble_residual` w.r.t. the stacked
    unknowns (cluster strain increments, then the far-field increment)."""
    n_c = cit.n_c
    d0 = reference.elasticity3
    size = (n_c + 1) * N_COMP
    jac = np.zeros((size, size))
    sensitivity = tangents - d0[None, :, :]
    # cluster-block rows: identity + T(I,K) (Dt(K) - D0), far-field -I
    blocks = np.einsum("ikab,kbc->ikac", cit.tensors, sensitivity)
    blocks[np.arange(n_c), np.arange(n_c)] += np.eye(N_COMP)
    jac[:n_c * N_COMP, :n_c * N_COMP] = \
        blocks.transpose(0, 2, 1, 3).reshape(n_c * N_COMP, n_c * N_COMP)
    jac[:n_c * N_COMP, n_c * N_COMP:] = \
        np.tile(-np.eye(N_COMP), (n_c, 1))
    # constraint rows
    scale = _stress_row_scale(reference)
    for k in range(n_c):
        block = np.where(strain_flags[:, None], np.eye(N_COMP),
                         tangents[k] * scale)
        jac[n_c * N_COMP:, k * N_COMP:(k + 1) * N_COMP] = \
            fractions[k] * block
    return jac


# =============================================================================
# Reduced system
# =============================================================================
class ReducedSystem:
    """Mutable bundle of everything one reduced solve advances.

    Holds the clustering, the per-cluster constitutive states (rows in
    ascending active-id order), the interaction matrix, the current
    reference material and the running homogenized totals.
    """

    def __init__(self, cluster_map, phase_materials, cit, reference):
        self.cluster_map = cluster_map
        self.phase_materials = dict(phase_materials)
        self.cit = cit
        self.reference = reference
        ids = cluster_map.active_ids()
        if not np.array_equal(ids, cit.cluster_ids):
            raise ValueError("interaction matrix order does not match "
                             "the cluster map")
        self.cluster_ids = ids
        self.fractions = cluster_map.fractions()
        self.cluster_phases = np.array(
            [cluster_map.phase_of(c) for c in ids])
        self.states = StateBatch(ids.size)
        self.far_delta = np.zeros(N_COMP)
        self.total_strain = np.zeros(N_COMP)
        self.total_stress = np.zeros(N_COMP)
        self.sc_flags = []

    @property
    def n_c(self):
        return self.cluster_ids.size

    def phase_rows(self):
        """Map phase id -> row indices into the cluster arrays."""
        out = {}
        for phase in np.unique(self.cluster_phases):
            out[int(phase)] = np.flatnonzero(self.cluster_phases == phase)
        return out

    def trial_update(self, delta_strains):
        """Constitutive update of every cluster for trial increments.

        Returns (trial state batch, in-plane stress increments, in-plane
        consistent tangents); the stored states are left untouched.
        """
        n = self.n_c
        trial = StateBatch(n)
        delta_sig = np.empty((n, N_COMP))
        tangents = np.empty((n, N_COMP, N_COMP))
        for phase, rows in self.phase_rows().items():
            material = self.phase_materials[phase]
            sub_new, sub_tan = state_update(
                material, self.states.subset(rows), delta_strains[rows])
            trial.assign(rows, sub_new)
            delta_sig[rows] = extract4_to3(sub_new.stress
                                           - self.states.stress[rows])
            tangents[rows] = sub_tan
        return trial, delta_sig, tangents

    def accept(self, trial_states, far_field, macro_eps, macro_sig):
        self.states = trial_states
        self.far_delta = far_field.copy()
        self.total_strain = self.total_strain + macro_eps
        self.total_stress = self.total_stress + macro_sig

    def snapshot(self):
        """Immutable-by-copy snapshot for rewinding."""
        return {
            "states": self.states.copy(),
            "far_delta": self.far_delta.copy(),
            "total_strain": self.total_strain.copy(),
            "total_stress": self.total_stress.copy(),
            "reference": self.reference,
        }

    def restore(self, snap):
        self.states = snap["states"].copy()
        self.far_delta = snap["far_delta"].copy()
        self.total_strain = snap["total_strain"].copy()
        self.total_stress = snap["total_stress"].copy()
        self.reference = snap["reference"]


def homogenize(values, fractions):
    """Volume-fraction-weighted average of per-cluster rows."""
    values = np.asarray(values, dtype=float)
    return np.asarray(fractions, dtype=float) @ values


def newton_solve_increment(system, strain_flags, deltas, config,
                           delta_guess=None, far_guess=None):
    """One Newton-Raphson solve of the reduced increment system.

    Returns (trial states, delta_strains, far_field, macro strain
    increment, macro stress increment, iteration count). Raises
    _NewtonDidNotConverge when the cap is hit or the Jacobian is
    singular; callers may subdivide the increment.
    """
    n_c = system.n_c
    if delta_guess is None:
        delta = system.states.last_delta.copy()
    else:
        delta = delta_guess.copy()
    if far_guess is None:
        far = np.where(strain_flags, deltas, 0.0)
    else:
        far = far_guess.copy()
    norm0 = loading_norm(strain_flags, deltas, system.reference)
    solves = 0
    for _ in range(config.newton_max_iter + 1):
        trial, delta_sig, tangents = system.trial_update(delta)
        res = assemble_residual(delta, far, delta_sig, system.cit,
                                system.reference, system.fractions,
                                strain_flags, deltas)
        if np.linalg.norm(res) / norm0 < config.newton_tol:
            macro_eps = homogenize(delta, system.fractions)
            macro_sig = homogenize(delta_sig, system.fractions)
            return (trial, delta, far, macro_eps, macro_sig,
                    max(solves, 1))
        if solves >= config.newton_max_iter:
            raise _NewtonDidNotConverge(
                "no convergence in %d iterations" % config.newton_max_iter)
        jac = assemble_jacobian(tangents, system.cit, system.reference,
                                system.fractions, strain_flags)
        try:
            step = np.linalg.solve(jac, -res)
        except np.linalg.LinAlgError as exc:
            raise _NewtonDidNotConverge(
                "singular Jacobian (%s); cut the increment" % exc)
        delta = delta + step[:n_c * N_COMP].reshape(n_c, N_COMP)
        far = far + step[n_c * N_COMP:]
        solves += 1
    raise _NewtonDidNotConverge("iteration cap")


def self_consistent_fit(delta_eps_macro, delta_sig_macro, previous):
    """Least-squares isotropic moduli from a homogenized increment pair.

    Fits sigma ~ lambda tr(eps) 1 + 2 mu eps in Mandel components.

    Returns (lambda0, mu0, flag) where flag is None for a clean two-
    parameter fit, 'mu-only' when the volumetric equation is void
    (deviatoric increment: lambda is retained from ``previous``), and
    'kept-previous' when the system is singular or the fit nonphysical.
    """
    eps = np.asarray(delta_eps_macro, dtype=float)
    sig = np.asarray(delta_sig_macro, dtype=float)
    lam_prev, mu_prev = previous
    a = (eps[0] + eps[1]) * np.array([1.0, 1.0, 0.0])
    b = 2.0 * eps
    aa = a @ a
    bb = b @ b
    ab = a @ b
    if bb <= 0.0:
        return lam_prev, mu_prev, "kept-previous"
    if aa <= 1e-24 * bb:
        # volumetric row void: deviatoric-only increment fits mu alone
        mu = (b @ sig) / bb
        if mu <= 0.0:
            return lam_prev, mu_prev, "kept-previous"
        return lam_prev, mu, "mu-only"
    det = aa * bb - ab * ab
    if det <= 1e-12 * aa * bb:
        return lam_prev, mu_prev, "kept-previous"
    lam = (bb * (a @ sig) - ab * (b @ sig)) / det
    mu = (aa * (b @ sig) - ab * (a @ sig)) / det
    if mu <= 0.0 or lam + mu <= 0.0:
        return lam_prev, mu_prev, "kept-previous"
    return lam, mu, None


def run_self_consistent_increment(system, strain_flags, deltas, config):
    """Newton solve wrapped in the reference-material regression loop.

    Alternates a full Newton solve with the isotropic least-squares refit
    of (lambda0, mu0) to the homogenized increment until the reference
    stabilizes; the system is advanced with the last Newton state.

    Returns an info dict (iteration counts, reference history, flags).
    """
    info = {"newton_iterations": 0, "sc_iterations": 0, "sc_flag": None,
            "reference": (system.reference.lame_lambda,
                          system.reference.shear_mu)}
    delta_guess = None
    far_guess = None
    best = None
    n_pass = 1 if not config.self_consistent else config.sc_max_iter
    for it in range(n_pass):
        trial, delta, far, macro_eps, macro_sig, n_newton = \
            newton_solve_increment(system, strain_flags, deltas, config,
                                   delta_guess=delta_guess,
                                   far_guess=far_guess)
        info["newton_iterations"] += n_newton
        info["sc_iterations"] = it + 1
        best = (trial, delta, far, macro_eps, macro_sig)
        if not config.self_consistent:
            break
        lam_old = system.reference.lame_lambda
        mu_old = system.reference.shear_mu
        lam, mu, flag = self_consistent_fit(macro_eps, macro_sig,
                                            (lam_old, mu_old))
        if flag == "kept-previous":
            info["sc_flag"] = flag
            break
        change = np.hypot(lam - lam_old, mu - mu_old) \
            / np.hypot(lam_old, mu_old)
        system.reference = ReferenceMaterial(lam, mu)
        if change < config.sc_tol:
            break
        delta_guess, far_guess = delta, far
    else:
        if config.self_consistent:
            info["sc_flag"] = "no-sc-convergence"
    trial, delta, far, macro_eps, macro_sig = best
    system.accept(trial, far, macro_eps, macro_sig)
    info["reference"] = (system.reference.lame_lambda,
                         system.reference.shear_mu)
    return info


def advance_increment(system, strain_flags, deltas, config, _depth=0):
    """Advance one loading increment, subdividing on Newton failure.

    Each failed solve halves the increment (recursively, up to
    ``config.max_cuts`` levels) before giving up with IncrementFailure.
    Returns the merged info dict of all sub-solves.
    """
    try:
        info = run_self_consistent_increment(system, strain_flags, deltas,
                                             config)
        info["cuts"] = _depth
        return info
    except _NewtonDidNotConverge as exc:
        if _depth >= config.max_cuts:
            raise IncrementFailure(
                "increment failed after %d subdivisions: %s"
                % (_depth, exc))
    half = np.asarray(deltas, dtype=float) / 2.0
    first = advance_increment(system, strain_flags, half, config,
                              _depth=_depth + 1)
    second = advance_increment(system, strain_flags, half, config,
                               _depth=_depth + 1)
    return {
        "newton_iterations": (first["newton_iterations"]
                              + second["newton_iterations"]),
        "sc_iterations": max(first["sc_iterations"],
                             second["sc_iterations"]),
        "sc_flag": second["sc_flag"] or first["sc_flag"],
        "reference": second["reference"],
        "cuts": max(first["cuts"], second["cuts"]),
    }


# =============================================================================
# Fracture and toughness
# =============================================================================
def fraction_above(acc_p, weights, threshold):
    """Weight of entries with acc_p strictly above the threshold, as a
    fraction of the total weight."""
    acc_p = np.asarray(acc_p, dtype=float)
    weights = np.asarray(weights, dtype=float)
    total = weights.sum()
    return float(weights[acc_p > threshold].sum() / total)


def check_fracture(system, criterion):
    """Evaluate the phase-volume fracture criterion on cluster states."""
    rows = np.flatnonzero(system.cluster_phases == criterion.phase)
    if rows.size == 0:
        raise ValueError("no clusters of phase %d" % criterion.phase)
    frac = fraction_above(system.states.acc_p[rows],
                          system.fractions[rows],
                          criterion.acc_p_threshold)
    return frac >= criterion.volume_fraction_threshold


def compute_toughness(strain_history, stress_history, end_index=None):
    """Trapezoidal integral of the stress-strain curve up to (and
    including) ``end_index``; the origin (0, 0) is prepended."""
    eps = np.asarray(strain_history, dtype=float)
    sig = np.asarray(stress_history, dtype=float)
    if eps.shape != sig.shape:
        raise ValueError("strain and stress histories differ in length")
    if end_index is not None:
        eps = eps[:end_index + 1]
        sig = sig[:end_index + 1]
    eps = np.concatenate([[0.0], eps])
    sig = np.concatenate([[0.0], sig])
    return float(_trapz(sig, eps))
