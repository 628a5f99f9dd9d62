"""End-to-end checks of the simulator against the protocol's analytic claims.

Each ``check_*`` function runs one criterion at its fixed tolerance and returns a
:class:`Check`. :func:`run_all` is what ``dctc-sim --command validate`` executes.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, replace
from typing import Callable

import numpy as np
import scipy.stats

from . import povm as _povm
from .circuits import ClonerSpec, cloner_input, cloner_interaction, decohere_in_basis
from .cloning import (
    CloneRunConfig,
    dense_ancilla_state,
    discriminate,
    hoeffding_bound,
    labeled_mixture_behavior,
    required_n,
    run_protocol,
    sample_ancillas,
)
from .ctc import ctc_output, solve_fixed_point_iterate, solve_fixed_point_spectral
from .experiments import median_infidelity_by_n, sweep
from .qmath import (
    DensityOperator,
    apply_unitary,
    basis_state,
    partial_trace,
    random_density_operator,
    tensor_power,
    tensor_states,
    trace_distance,
)

SWEEP_NS = (10**2, 10**3, 10**4, 10**5, 10**6)
FAULTS = ("frame",)


@dataclass(frozen=True)
class Check:
    name: str
    passed: bool
    detail: str
    seconds: float = 0.0

    def line(self) -> str:
        return f"[{'PASS' if self.passed else 'FAIL'}] {self.name}: {self.detail} ({self.seconds:.1f}s)"


def _timed(fn: Callable[..., tuple[bool, str]], name: str, *args, **kwargs) -> Check:
    t0 = time.perf_counter()
    ok, detail = fn(*args, **kwargs)
    return Check(name, bool(ok), detail, time.perf_counter() - t0)


def diagonal_state(d: int) -> DensityOperator:
    """Non-uniform diagonal state ``diag(1, 2, ..., d) / sum``."""
    p = np.arange(1, d + 1, dtype=float)
    return DensityOperator.from_matrix(np.diag(p / p.sum()), labels=["S"])


# ---------------------------------------------------------------------------


def _fixed_point_structure(dims=(2, 3), ns=(1, 2, 3), budget_s=30.0):
    t0 = time.perf_counter()
    worst, bad = 0.0, []
    for d in dims:
        rho = diagonal_state(d)
        for n in ns:
            spec = ClonerSpec(d, n)
            ix = cloner_interaction(spec)
            rho_s = cloner_input(spec, rho)
            fp = solve_fixed_point_iterate(ix, rho_s)
            sp = solve_fixed_point_spectral(ix, rho_s)
            dist = trace_distance(fp.sigma, tensor_power(rho, n))
            worst = max(worst, dist, fp.residual)
            if not (fp.converged and fp.iterations == n and fp.residual < 1e-10 and dist < 1e-10
                    and sp.ev1_multiplicity == 1):
                bad.append((d, n, fp.iterations, sp.ev1_multiplicity))
    elapsed = time.perf_counter() - t0
    ok = not bad and elapsed < budget_s
    return ok, f"worst distance/residual {worst:.2e}, failures {bad}, {elapsed:.1f}s of {budget_s:.0f}s"


def check_fixed_point_structure(**kw) -> Check:
    return _timed(_fixed_point_structure, "fixed_point_structure", **kw)


def _clone_readout(ns=(1, 2, 3), seed=11):
    p = _povm.sic_qubit()
    worst = 0.0
    for n in ns:
        rho = random_density_operator(2, "mixed", seed + n)
        omega = _povm.measurement_map(p, rho, label="S")
        out, _ = dense_ancilla_state(omega, n)
        worst = max(worst, trace_distance(out, tensor_power(omega, n + 1)))
    return worst <= 1e-9, f"max trace distance to omega^(N+1) {worst:.2e} (tol 1e-9)"


def check_clone_readout(**kw) -> Check:
    return _timed(_clone_readout, "clone_readout", **kw)


def _decoherence(ns=(1, 2, 3), seed=23):
    worst = 0.0
    for n in ns:
        rho = random_density_operator(2, "mixed", seed + n, labels=["S"])
        spec = ClonerSpec(2, n)
        ix = cloner_interaction(spec)
        rho_s = cloner_input(spec, rho)
        fp = solve_fixed_point_iterate(ix, rho_s)
        anc = partial_trace(ctc_output(ix, rho_s, fp), [f"A{i}" for i in range(1, n + 1)])
        target = tensor_power(decohere_in_basis(rho, "S"), n)
        worst = max(worst, trace_distance(anc, target))
    return worst <= 1e-9, f"max trace distance to decohered copies {worst:.2e} (tol 1e-9)"


def check_decoherence(**kw) -> Check:
    return _timed(_decoherence, "decoherence", **kw)


def coherent_fixed_point_target(p: _povm.Povm, rho: DensityOperator) -> np.ndarray:
    """``sum_x sqrt(M_x) rho sqrt(M_x) (x) |x><x|`` on (E, B)."""
    k = _povm.kraus_operators(p)
    out = np.zeros((p.d_in * p.d_out,) * 2, dtype=complex)
    for x in range(p.d_out):
        proj = np.zeros((p.d_out, p.d_out))
        proj[x, x] = 1.0
        out += np.kron(k[x] @ rho.mat @ k[x].conj().T, proj)
    return out


def _coherent(seeds=(1, 2, 3)):
    p = _povm.sic_qubit()
    u_icm = _povm.stinespring_unitary(p)
    spec = ClonerSpec(p.d_out, 1, "coherent", d_env=p.d_in)
    ix = cloner_interaction(spec)
    worst = 0.0
    for s in seeds:
        rho = random_density_operator(2, "pure", s, labels=["E"])
        eb = apply_unitary(tensor_states(rho, basis_state(p.d_out, 0, "B")), u_icm)
        fp = solve_fixed_point_iterate(ix, cloner_input(spec, eb))
        worst = max(worst, trace_distance(fp.sigma.mat, coherent_fixed_point_target(p, rho)))
    return worst <= 1e-8, f"max trace distance to decohered dilation {worst:.2e} (tol 1e-8)"


def check_coherent(**kw) -> Check:
    return _timed(_coherent, "coherent_variant", **kw)


def _perturb(frame: _povm.ReconstructionFrame) -> _povm.ReconstructionFrame:
    pinv = frame.pseudoinverse_map.copy()
    pinv[0, 0] += 1e-3
    return replace(frame, pseudoinverse_map=pinv)


def _tomography(n_states=100, seed=5, fault=None):
    worst = 0.0
    for p, d in ((_povm.sic_qubit(), 2), (_povm.random_ic_povm(3, seed), 3)):
        frame = _povm.build_frame(p)
        if fault == "frame":
            frame = _perturb(frame)
        rng = np.random.default_rng(seed)
        for i in range(n_states):
            rho = random_density_operator(d, "pure" if i % 2 else "mixed", rng)
            est = _povm.reconstruct(frame, _povm.outcome_probabilities(p, rho))
            worst = max(worst, float(np.max(np.abs(est.mat - rho.mat))))
    return worst <= 1e-9, f"max entry error over {n_states} states x 2 POVMs {worst:.2e} (tol 1e-9)"


def check_tomography(**kw) -> Check:
    return _timed(_tomography, "tomography_roundtrip", **kw)


def _convergence(ns=SWEEP_NS, trials=200, seed=2013, threshold=1e-4, budget_s=600.0):
    t0 = time.perf_counter()
    rows = sweep(ns, trials, seed, CloneRunConfig(d=2, povm="sic"))
    med = median_infidelity_by_n(rows)
    vals = [med[n] for n in ns]
    monotone = all(b <= a for a, b in zip(vals, vals[1:]))
    elapsed = time.perf_counter() - t0
    ok = monotone and vals[-1] < threshold and elapsed < budget_s
    pretty = ", ".join(f"N={n}: {v:.2e}" for n, v in zip(ns, vals))
    return ok, f"median infidelity {pretty}; non-increasing={monotone}; {elapsed:.1f}s"


def check_convergence(**kw) -> Check:
    return _timed(_convergence, "fidelity_convergence", **kw)


def _hoeffding(n=1000, delta=0.05, trials=10**4, seed=7):
    probs = _povm.outcome_probabilities(_povm.sic_qubit(),
                                        random_density_operator(2, "pure", seed))
    rng = np.random.default_rng(seed)
    freqs = rng.multinomial(n, probs, size=trials) / n
    rates = np.mean(np.abs(freqs - probs) > delta, axis=0)
    bound = hoeffding_bound(n, delta)
    rn = required_n(0.05, 0.01)
    ok = bool(np.all(rates <= bound)) and rn == 1060
    return ok, (f"per-coordinate violation rates {np.array2string(rates, precision=4)} "
                f"<= bound {bound:.5f}; required_n(0.05, 0.01) = {rn}")


def check_hoeffding(**kw) -> Check:
    return _timed(_hoeffding, "hoeffding", **kw)


def _dense_vs_structured(n=3, shots=10**4, seed=17, alpha=0.01):
    p = _povm.sic_qubit()
    rho = random_density_operator(2, "mixed", seed)
    probs = _povm.outcome_probabilities(p, rho)
    omega = _povm.measurement_map(p, rho, label="S")
    _, anc = dense_ancilla_state(omega, n)
    samples = sample_ancillas(anc, shots, seed)
    joint = np.ravel_multi_index(tuple(samples.T), (p.d_out,) * n)
    observed = np.bincount(joint, minlength=p.d_out**n)
    expected = shots * tensor_power(DensityOperator.from_matrix(np.diag(probs)), n).mat.diagonal().real
    pval = scipy.stats.chisquare(observed, expected).pvalue
    return pval > alpha, f"chi-square p-value {pval:.3f} over {p.d_out**n} joint outcomes (reject below {alpha})"


def check_dense_vs_structured(**kw) -> Check:
    return _timed(_dense_vs_structured, "dense_vs_structured", **kw)


def helstrom_bound(rho0: DensityOperator, rho1: DensityOperator) -> float:
    return 0.5 * (1.0 + trace_distance(rho0, rho1))


def _discrimination(n=10**6, trials=1000, seed=29, min_rate=0.99):
    rho0 = DensityOperator.from_ket([1, 0])
    rho1 = DensityOperator.from_ket([1, 1])
    correct = 0
    for t in range(trials):
        truth = t % 2
        cfg = CloneRunConfig(d=2, n_ctc=n, seed=np.random.SeedSequence(seed, spawn_key=(t,)))
        correct += discriminate(rho0, rho1, (rho0, rho1)[truth], cfg) == truth
    rate = correct / trials
    helstrom = helstrom_bound(rho0, rho1)
    ok = rate >= min_rate and rate > helstrom
    return ok, f"success rate {rate:.4f} (need >= {min_rate}); Helstrom bound {helstrom:.4f}"


def check_discrimination(**kw) -> Check:
    return _timed(_discrimination, "discrimination", **kw)


def _nonlinearity(n=10**6, seed=31, min_gap=0.1):
    rho1, rho2 = basis_state(2, 0), basis_state(2, 1)
    cfg = CloneRunConfig(d=2, n_ctc=n, seed=seed)
    mixed = labeled_mixture_behavior([(0.5, rho1), (0.5, rho2)], cfg).rho_hat
    hats = [run_protocol(r, replace(cfg, seed=seed + 1 + i)).rho_hat for i, r in enumerate((rho1, rho2))]
    # two-clone output: a linear map would send the mixture to the mixture of outputs
    on_mixture = np.kron(mixed.mat, mixed.mat)
    mixture_of_outputs = 0.5 * sum(np.kron(h.mat, h.mat) for h in hats)
    gap = trace_distance(on_mixture, mixture_of_outputs)
    to_avg = trace_distance(mixed.mat, np.eye(2) / 2)
    return gap > min_gap, (f"two-clone output gap {gap:.3f} (need > {min_gap}); "
                           f"clone of mixture is {to_avg:.1e} from the average state")


def check_nonlinearity(**kw) -> Check:
    return _timed(_nonlinearity, "nonlinearity_witness", **kw)


def run_all(fault: str | None = None, include_sweep: bool = True,
            report: Callable[[str], None] | None = None) -> list[Check]:
    if fault is not None and fault not in FAULTS:
        raise ValueError(f"unknown fault {fault!r}; choose from {FAULTS}")
    runners = [
        check_fixed_point_structure,
        check_clone_readout,
        check_decoherence,
        check_coherent,
        lambda: check_tomography(fault=fault),
        check_hoeffding,
        check_dense_vs_structured,
        check_discrimination,
        check_nonlinearity,
    ]
    if include_sweep:
        runners.insert(5, check_convergence)
    checks = []
    for fn in runners:
        c = fn()
        checks.append(c)
        if report:
            report(c.line())
    return checks
