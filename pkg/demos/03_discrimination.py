"""
Telling |0> from |+>
====================

No measurement in ordinary quantum mechanics identifies one of these two states
with success better than about 0.854. Estimating the state from many CTC copies
does much better.
"""

import numpy as np

from dctcsim import CloneRunConfig
from dctcsim.cloning import discriminate
from dctcsim.qmath import DensityOperator
from dctcsim.validation import helstrom_bound

zero = DensityOperator.from_ket([1, 0])
plus = DensityOperator.from_ket([1, 1])
print(f"best linear success probability: {helstrom_bound(zero, plus):.4f}")

rng = np.random.default_rng(7)
for n in (10, 100, 10**4):
    hits = 0
    for _ in range(500):
        truth = int(rng.integers(2))
        cfg = CloneRunConfig(n_ctc=n, seed=int(rng.integers(2**63)))
        hits += discriminate(zero, plus, (zero, plus)[truth], cfg) == truth
    print(f"N = {n:>6d}: success {hits / 500:.3f}")
