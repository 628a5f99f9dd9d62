"""
A nonlinear state map
=====================

Once the state is known to good precision, any function of it can be prepared.
Here the map sends a state to its dominant eigenvector, which no channel can
do. Feeding in a labeled mixture shows that only the average state matters.
"""

import numpy as np

from dctcsim import CloneRunConfig
from dctcsim.cloning import apply_nonlinear_map, labeled_mixture_behavior
from dctcsim.qmath import DensityOperator, basis_state, trace_distance


def purify(r):
    w, v = np.linalg.eigh(r.mat)
    return DensityOperator.from_ket(v[:, -1])


cfg = CloneRunConfig(n_ctc=10**6, seed=3)
rho = DensityOperator.from_matrix(np.diag([0.9, 0.1]))
out = apply_nonlinear_map(purify, rho, cfg)
print("distance of output to |0><0|:", f"{trace_distance(out, basis_state(2, 0)):.2e}")

# Half |0>, half |1>: the protocol sees I/2, not either label.
res = labeled_mixture_behavior([(0.5, basis_state(2, 0)), (0.5, basis_state(2, 1))], cfg)
print("estimate of the mixture:\n", np.round(res.rho_hat.mat.real, 4))
print("one clone per label?", res.metadata["per_label_clones"])
