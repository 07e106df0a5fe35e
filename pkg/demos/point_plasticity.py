"""Single material point under strain cycling.

Drives one von Mises point through a tension / reversal / re-tension
strain path, printing the uniaxial response, and cross-checks the
consistent tangent returned by the state update against a central
finite difference at the most plastic state reached.
"""

import numpy as np

from crom.materials import PhaseMaterial, StateBatch, hardening_stress, \
    state_update


def drive(material, strain_steps):
    """Apply in-plane strain increments to a single point, one row per
    converged increment."""
    state = StateBatch(1)
    rows = []
    for delta in strain_steps:
        state, tangent = state_update(material, state, delta[None, :])
        rows.append((state.strain[0, 0], state.stress[0, 0],
                     state.acc_p[0], tangent[0]))
    return state, rows


def fd_tangent(material, state, delta, h=1e-7):
    """Central finite difference of the incremental stress map."""
    tangent = np.zeros((3, 3))
    for j in range(3):
        bump = np.zeros(3)
        bump[j] = h
        plus, _ = state_update(material, state, (delta + bump)[None, :])
        minus, _ = state_update(material, state, (delta - bump)[None, :])
        tangent[:, j] = (plus.stress[0, [0, 1, 3]]
                         - minus.stress[0, [0, 1, 3]]) / (2.0 * h)
    return tangent


def main():
    material = PhaseMaterial("von_mises", young=100.0, poisson=0.3,
                             sigma_y0=0.5, hardening_coef=0.2,
                             hardening_exp=0.4)
    print("hardening curve: sigma_y(0) = %.3f, sigma_y(1) = %.3f"
          % (hardening_stress(material, 0.0),
             hardening_stress(material, 1.0)))

    # uniaxial in-plane straining: load, reverse, reload
    step = np.array([1.2e-3, 0.0, 0.0])
    path = [step] * 12 + [-step] * 8 + [step] * 12
    state, rows = drive(material, path)

    print("\n %-3s %10s %10s %9s" % ("inc", "eps_xx", "sig_xx", "acc_p"))
    for k, (eps, sig, acc_p, _) in enumerate(rows):
        marker = " <- yielded" if k and acc_p > rows[k - 1][2] + 1e-14 \
            else ""
        print(" %-3d %10.4e %10.4e %9.5f%s" % (k + 1, eps, sig, acc_p,
                                               marker))

    # tangent consistency at the final (plastic) state
    probe_state, _ = drive(material, path[:-1])
    delta = path[-1]
    _, tangent = state_update(material, probe_state, delta[None, :])
    approx = fd_tangent(material, probe_state, delta)
    err = np.abs(tangent[0] - approx).max() / np.abs(approx).max()
    print("\nconsistent tangent vs central difference: "
          "max relative deviation %.2e" % err)


if __name__ == "__main__":
    main()
