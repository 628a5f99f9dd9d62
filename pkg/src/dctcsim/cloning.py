"""Approximate cloning with a CTC-assisted readout, plus its corollaries.

The protocol:

1. measure the input with an IC-POVM, giving the classical state ``omega``;
2. cyclically shift ``omega`` through ``N`` CTC slots and copy each CTC slot
   into an ancilla with a modular addition;
3. the ancillas end up in ``omega``'s tensor power;
4. read the ancillas in the computational basis and count frequencies;
5. invert the frequencies into an estimate ``rho_hat`` and hand out copies of it.

``mode="dense"`` simulates steps 2-3 with the fixed-point solver and samples the
resulting ancilla state. ``mode="structured"`` uses the known fixed point
directly, which reduces step 4 to one multinomial draw and allows very large N.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from . import povm as _povm
from .circuits import ClonerSpec, cloner_input, cloner_interaction
from .ctc import ctc_output, solve_fixed_point_iterate
from .qmath import (
    DENSE_CAP,
    DensityOperator,
    DimensionError,
    fidelity,
    partial_trace,
    tensor_power,
    trace_distance,
)

MAX_STRUCTURED_N = 10**8


@dataclass(frozen=True)
class CloneRunConfig:
    """Settings for one protocol run.

    ``povm`` is ``"sic"``, ``"random"`` or a ready :class:`~dctcsim.povm.Povm`;
    ``"sic"`` is only available for qubits.
    """

    d: int = 2
    n_ctc: int = 1000
    povm: object = "sic"
    povm_seed: int = 0
    mode: str = "structured"
    n_clones_out: int = 1
    seed: int | None = None
    dense_cap: int = DENSE_CAP

    def __post_init__(self):
        if self.d < 2:
            raise ValueError("d must be at least 2")
        if self.n_ctc < 1:
            raise ValueError("n_ctc must be at least 1")
        if self.mode not in ("dense", "structured"):
            raise ValueError(f"mode must be 'dense' or 'structured', got {self.mode!r}")
        if self.mode == "structured" and self.n_ctc > MAX_STRUCTURED_N:
            raise ValueError(f"structured mode supports N up to {MAX_STRUCTURED_N}")
        if self.n_clones_out < 0:
            raise ValueError("n_clones_out must be non-negative")
        if isinstance(self.povm, str) and self.povm not in ("sic", "random"):
            raise ValueError(f"povm must be 'sic', 'random' or a Povm, got {self.povm!r}")
        if self.povm == "sic" and self.d != 2:
            raise ValueError("the SIC choice is only built in for d=2; use povm='random'")

    def resolve_povm(self) -> _povm.Povm:
        if isinstance(self.povm, _povm.Povm):
            if self.povm.d_in != self.d:
                raise DimensionError("POVM input dimension does not match d")
            return self.povm
        if self.povm == "sic":
            return _povm.sic_qubit()
        return _povm.random_ic_povm(self.d, self.povm_seed)


@dataclass(frozen=True, eq=False)
class CloneRunResult:
    rho_in: DensityOperator
    probs: np.ndarray
    empirical_freqs: np.ndarray
    rho_hat: DensityOperator
    clone_fidelity: float
    clone_trace_distance: float
    n_used: int
    mode: str
    clones: tuple[DensityOperator, ...] = ()
    readout_error: float | None = None
    metadata: dict = field(default_factory=dict)

    @property
    def infidelity(self) -> float:
        return 1.0 - self.clone_fidelity

    @property
    def max_freq_error(self) -> float:
        return float(np.max(np.abs(self.empirical_freqs - self.probs)))


_FRAMES: dict[int, _povm.ReconstructionFrame] = {}


def _frame(p: _povm.Povm) -> _povm.ReconstructionFrame:
    # frames are immutable; cache by identity of the (immutable) POVM object
    key = id(p)
    hit = _FRAMES.get(key)
    if hit is None or hit.povm is not p:
        hit = _FRAMES[key] = _povm.build_frame(p)
    return hit


def empirical_frequencies(probs, n: int, seed=None) -> np.ndarray:
    """Outcome frequencies of ``n`` independent draws from ``probs``."""
    if n < 1:
        raise ValueError("n must be at least 1")
    probs = np.clip(np.asarray(probs, dtype=float), 0.0, None)
    rng = np.random.default_rng(seed)
    return rng.multinomial(n, probs / probs.sum()) / n


def dense_ancilla_state(omega: DensityOperator, n_ctc: int,
                        cap: int = DENSE_CAP) -> tuple[DensityOperator, DensityOperator]:
    """Solve the cloner's CTC and return (system+ancilla output, ancilla marginal)."""
    spec = ClonerSpec(omega.dim, n_ctc, cap=cap)
    ix = cloner_interaction(spec)
    rho_s = cloner_input(spec, omega)
    fp = solve_fixed_point_iterate(ix, rho_s)
    if not fp.converged:
        raise RuntimeError(f"cloner fixed point did not converge (residual {fp.residual:.3g})")
    out = ctc_output(ix, rho_s, fp)
    anc = partial_trace(out, [f"A{i}" for i in range(1, n_ctc + 1)])
    return out, anc


def sample_ancillas(anc: DensityOperator, n_shots: int, seed=None) -> np.ndarray:
    """Computational-basis readout of every ancilla, ``n_shots`` times.

    Returns an integer array of shape ``(n_shots, n_ancillas)``.
    """
    probs = np.clip(np.real(np.diag(anc.mat)), 0.0, None)
    rng = np.random.default_rng(seed)
    flat = rng.choice(probs.size, size=n_shots, p=probs / probs.sum())
    return np.stack(np.unravel_index(flat, anc.layout.dims), axis=1)


def run_protocol(rho: DensityOperator, cfg: CloneRunConfig) -> CloneRunResult:
    """Run the five protocol steps on ``rho`` and report clone quality."""
    if rho.dim != cfg.d:
        raise DimensionError(f"input has dim {rho.dim}, config says d={cfg.d}")
    p = cfg.resolve_povm()
    frame = _frame(p)
    rng = np.random.default_rng(cfg.seed)
    probs = _povm.outcome_probabilities(p, rho)
    readout_error = None
    if cfg.mode == "dense":
        omega = _povm.measurement_map(p, rho, label="S")
        _, anc = dense_ancilla_state(omega, cfg.n_ctc, cfg.dense_cap)
        readout_error = trace_distance(anc.mat, tensor_power(omega, cfg.n_ctc).mat)
        shot = sample_ancillas(anc, 1, rng)[0]
        freqs = np.bincount(shot, minlength=p.d_out) / cfg.n_ctc
    else:
        freqs = empirical_frequencies(probs, cfg.n_ctc, rng)
    rho_hat = _povm.reconstruct(frame, freqs)
    return CloneRunResult(
        rho_in=rho,
        probs=probs,
        empirical_freqs=freqs,
        rho_hat=rho_hat,
        clone_fidelity=fidelity(rho, rho_hat),
        clone_trace_distance=trace_distance(rho, rho_hat),
        n_used=cfg.n_ctc,
        mode=cfg.mode,
        clones=(rho_hat,) * cfg.n_clones_out,
        readout_error=readout_error,
    )


def hoeffding_bound(n: int, delta: float, clip: bool = True) -> float:
    """Probability bound ``2 exp(-2 n delta^2)`` for one frequency to miss by more than delta."""
    if n < 1 or delta <= 0:
        raise ValueError("need n >= 1 and delta > 0")
    b = 2.0 * math.exp(-2.0 * n * delta * delta)
    return min(1.0, b) if clip else b


def required_n(delta: float, eps_fail: float) -> int:
    """Smallest ``n`` with ``2 exp(-2 n delta^2) <= eps_fail`` (at least 1)."""
    if delta <= 0 or eps_fail <= 0:
        raise ValueError("delta and eps_fail must be positive")
    return max(1, math.ceil(math.log(2.0 / eps_fail) / (2.0 * delta * delta)))


@dataclass(frozen=True)
class SamplePlan:
    delta: float
    eps_fail: float
    n_outcomes: int
    n_per_coordinate: int
    n_union: int
    note: str


def plan_samples(delta: float, eps_fail: float, n_outcomes: int) -> SamplePlan:
    """CTC count so that *all* ``n_outcomes`` frequencies are within delta.

    The single-frequency bound is combined over outcomes with a union bound,
    i.e. each coordinate gets failure budget ``eps_fail / n_outcomes``.
    """
    if n_outcomes < 1:
        raise ValueError("n_outcomes must be positive")
    return SamplePlan(
        delta, eps_fail, n_outcomes,
        n_per_coordinate=required_n(delta, eps_fail),
        n_union=required_n(delta, eps_fail / n_outcomes),
        note=f"union bound over {n_outcomes} outcomes: per-outcome budget eps_fail/{n_outcomes}",
    )


def apply_nonlinear_map(f: Callable[[DensityOperator], DensityOperator],
                        rho: DensityOperator, cfg: CloneRunConfig) -> DensityOperator:
    """Estimate ``rho`` with the protocol, then prepare ``f`` of the estimate."""
    return f(run_protocol(rho, cfg).rho_hat)


def discriminate(rho0: DensityOperator, rho1: DensityOperator, state: DensityOperator,
                 cfg: CloneRunConfig) -> int:
    """Guess whether ``state`` is ``rho0`` or ``rho1`` (ties go to 0)."""
    if rho0.dim != rho1.dim or rho0.dim != state.dim:
        raise DimensionError("all three states must have the same dimension")
    if trace_distance(rho0, rho1) <= 1e-12:
        raise ValueError("rho0 and rho1 coincide; there is nothing to discriminate")
    rho_hat = run_protocol(state, cfg).rho_hat
    return int(trace_distance(rho_hat, rho1) < trace_distance(rho_hat, rho0))


def labeled_mixture_behavior(ensemble: Sequence[tuple[float, DensityOperator]],
                             cfg: CloneRunConfig) -> CloneRunResult:
    """Feed the reduced state of a labeled ensemble through the protocol.

    The consistency condition only sees the reduced state, so the result is a
    clone of the ensemble average, not one clone per label.
    """
    if not ensemble:
        raise ValueError("ensemble is empty")
    weights = np.array([w for w, _ in ensemble], dtype=float)
    if np.any(weights < 0) or abs(weights.sum() - 1.0) > 1e-9:
        raise ValueError("weights must form a probability distribution")
    layout = ensemble[0][1].layout
    avg = sum(w * s.mat for w, s in ensemble)
    res = run_protocol(DensityOperator(avg, layout), cfg)
    res.metadata.update(per_label_clones=False, average_state=res.rho_in,
                        n_components=len(ensemble))
    return res
