"""
Coherent readout
================

Replace the measurement with its unitary dilation and let each CTC slot carry
a pair (post-measurement system, pointer). The CTC then holds copies of the
decohered dilation output, and the pointers still carry the SIC statistics.
"""

import numpy as np

from dctcsim import ClonerSpec, cloner_input, cloner_interaction
from dctcsim.ctc import solve_fixed_point_iterate
from dctcsim.povm import outcome_probabilities, sic_qubit, stinespring_unitary
from dctcsim.qmath import apply_unitary, basis_state, random_density_operator, tensor_states, trace_distance
from dctcsim.validation import coherent_fixed_point_target

p = sic_qubit()
rho = random_density_operator(2, "mixed", 4)

spec = ClonerSpec(d=4, n_ctc=1, variant="coherent", d_env=2)
ix = cloner_interaction(spec)
print("slots:", ix.layout.labels, " CTC:", ix.c_slots)

# Start from rho on E and the pointer B in |0>, then apply the dilation.
dilated = apply_unitary(tensor_states(rho.relabel(["E"]), basis_state(4, 0, "B")), stinespring_unitary(p))
fp = solve_fixed_point_iterate(ix, cloner_input(spec, dilated))
target = coherent_fixed_point_target(p, rho)
print("CTC state vs sum_x sqrt(M_x) rho sqrt(M_x) (x) |x><x|:",
      f"{trace_distance(fp.sigma.mat, target):.1e}")
print("pointer populations:", np.round(outcome_probabilities(p, rho), 4))
