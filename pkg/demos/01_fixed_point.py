"""
Finding a CTC fixed point
=========================

A cyclic shift over a system slot and N CTC slots has a single consistent CTC
state: N copies of the system. Iterating the consistency map from the
maximally mixed state reaches it in exactly N steps.
"""

import numpy as np

from dctcsim import ClonerSpec, cloner_input, cloner_interaction
from dctcsim.ctc import solve_fixed_point_iterate, solve_fixed_point_spectral
from dctcsim.qmath import DensityOperator, tensor_power, trace_distance

# A qutrit that is diagonal in the computational basis.
rho = DensityOperator.from_matrix(np.diag([0.5, 0.3, 0.2]), labels=["S"])

# Shift through 3 CTC slots, each copied onto an ancilla by a modular add.
spec = ClonerSpec(d=3, n_ctc=3)
ix = cloner_interaction(spec)
rho_s = cloner_input(spec, rho)
print("slots:", ix.layout.labels)

fp = solve_fixed_point_iterate(ix, rho_s)
for k, r in enumerate(fp.residuals, start=1):
    print(f"iteration {k}: residual {r:.2e}")

# The spectral route finds the same state and checks that it is unique.
sp = solve_fixed_point_spectral(ix, rho_s)
print("eigenvalue-1 multiplicity:", sp.ev1_multiplicity)
print("distance to rho^3:", trace_distance(fp.sigma, tensor_power(rho, 3)))
