"""Return to equilibrium with and without gap eigenstates.

    python3 scripts/ness_return.py
"""

import numpy as np

from fermikms.dynamics import compute_K, switched_potential, wavepacket
from fermikms.entropy import ness_rel_entropy_closed
from fermikms.model import LatticeModel, build_dirac, build_potential, bump_profile
from fermikms.ness import (bound_state_data, bound_states, ness_vs_ergodic_gap,
                           return_to_equilibrium_probe)

BETA = 1.0


def bound_sweep():
    model = LatticeModel(1, 41, 20.0)
    D = build_dirac(model)
    print("A^0 well: gap eigenvalues against coupling")
    for amp in (-0.5, -1.0, -2.0, -4.0):
        K = build_potential(model, bump_profile(model, radius=4.0, amplitude=amp))
        g = bound_states(D, K, model.mass, margin=0.05)
        data = bound_state_data(g, D, BETA)
        print(f"  amplitude {amp:5.1f}: {g.count} states, energies {np.round(g.energies, 3)}, "
              f"NESS entropy {ness_rel_entropy_closed(BETA, data):.4f}, "
              f"NESS vs ergodic {ness_vs_ergodic_gap(D, K, BETA, model.mass, 0.05):.3e}")
    K = build_potential(model, bump_profile(model, radius=4.0, amplitude=-2.0))
    g = bound_states(D, K, model.mass, margin=0.05)
    print("persistent gap for the lowest gap eigenvector:")
    for T in (1.0, 10.0, 100.0, 1000.0):
        r = return_to_equilibrium_probe(D, K, BETA, [g.vectors[:, 0]], T, m=model.mass, margin=0.05)
        print(f"  T {T:7.1f}: gap {r.max_gap:.6f}, occupation mismatch {abs(r.bound_mismatch[0]):.6f}")


def no_bound_states():
    model = LatticeModel(1, 101, 100.0)
    D = build_dirac(model)
    prof = bump_profile(model, radius=4.0, amplitude=0.3, component=1, epsilon=1.0)
    K = compute_K(D, switched_potential(model, prof))
    print(f"weak vector potential: {bound_states(D, K, model.mass).count} gap eigenvalues")
    f = wavepacket(model, 0.0, 2.0)
    for T in (2.0, 5.0, 10.0, 20.0, 40.0, 80.0):
        r = return_to_equilibrium_probe(D, K, BETA, [f], T)
        print(f"  T {T:5.1f}: Cesaro gap {r.max_gap:.3e}")


if __name__ == "__main__":
    bound_sweep()
    no_bound_states()
