"""
Cloning an unknown qubit
========================

Measure with the tetrahedral SIC, copy the classical outcome state into N CTC
slots, read the copies and invert the counts. The median infidelity of the
clone keeps falling as N grows.
"""

import numpy as np

from dctcsim import CloneRunConfig
from dctcsim.experiments import median_infidelity_by_n, sweep

ns = [10**2, 10**3, 10**4, 10**5, 10**6]
rows = sweep(ns, trials=200, seed=2013, base=CloneRunConfig(), timing=False)

for n, med in median_infidelity_by_n(rows).items():
    print(f"N = {n:>8d}   median infidelity {med:.2e}   N * infidelity {n * med:.2f}")

# Uncomment for an SVG of the curve (needs matplotlib):
# from dctcsim.experiments import plot_fidelity_curve
# plot_fidelity_curve(rows, "fidelity.svg")

# Small runs can be checked against the full circuit simulation, too.
from dctcsim.cloning import run_protocol
from dctcsim.qmath import random_density_operator

rho = random_density_operator(2, "pure", 0)
res = run_protocol(rho, CloneRunConfig(n_ctc=3, mode="dense", seed=1))
print("dense N=3: ancillas match the tensor power to", f"{res.readout_error:.1e}")
print("estimate from 3 shots:\n", np.round(res.rho_hat.mat, 3))
