"""Seeded Monte-Carlo sweeps and their CSV output."""

from __future__ import annotations

import csv
import io
import os
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from .cloning import CloneRunConfig, run_protocol
from .qmath import random_density_operator

COLUMNS = ("seed", "d", "N", "povm", "mode", "fidelity", "trace_distance", "max_freq_error",
           "wall_time")
THREADS_ENV = "DCTC_SIM_THREADS"
SUMMARY_QUANTILES = (("q25", 0.25), ("median", 0.5), ("q75", 0.75))


def thread_count(default: int = 1) -> int:
    raw = os.environ.get(THREADS_ENV)
    if raw is None:
        return default
    n = int(raw)
    if n < 1:
        raise ValueError(f"{THREADS_ENV} must be a positive integer, got {raw!r}")
    return n


def map_trials(fn: Callable, items: Sequence, threads: int | None = None) -> list:
    """Apply ``fn`` to every item; results come back in item order regardless of scheduling."""
    threads = thread_count() if threads is None else threads
    if threads <= 1:
        return [fn(x) for x in items]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(fn, items))


def trial_seed(seed: int, *key: int) -> int:
    """Independent 63-bit seed for one trial, derived from the global seed."""
    ss = np.random.SeedSequence(seed, spawn_key=tuple(key))
    return int(ss.generate_state(1, np.uint64)[0] >> np.uint64(1))


@dataclass(frozen=True)
class ResultRow:
    seed: object
    d: int
    N: int
    povm: str
    mode: str
    fidelity: float
    trace_distance: float
    max_freq_error: float
    wall_time: float

    def as_list(self) -> list[str]:
        return [str(self.seed), str(self.d), str(self.N), self.povm, self.mode,
                _fmt(self.fidelity), _fmt(self.trace_distance), _fmt(self.max_freq_error),
                _fmt(self.wall_time)]


def _fmt(x: float) -> str:
    return f"{x:.17g}"


def povm_name(cfg: CloneRunConfig) -> str:
    return cfg.povm if isinstance(cfg.povm, str) else "custom"


def run_trial(seed: int, base: CloneRunConfig, n: int, timing: bool = True) -> ResultRow:
    """Haar-random pure input drawn from ``seed``, then one protocol run."""
    t0 = time.perf_counter()
    rng = np.random.default_rng(seed)
    rho = random_density_operator(base.d, "pure", rng)
    cfg = CloneRunConfig(d=base.d, n_ctc=n, povm=base.povm, povm_seed=base.povm_seed,
                         mode=base.mode, n_clones_out=base.n_clones_out,
                         seed=int(rng.integers(2**63)), dense_cap=base.dense_cap)
    res = run_protocol(rho, cfg)
    wall = time.perf_counter() - t0 if timing else 0.0
    return ResultRow(seed, base.d, n, povm_name(base), base.mode, res.clone_fidelity,
                     res.clone_trace_distance, res.max_freq_error, wall)


def sweep(n_list: Sequence[int], trials: int, seed: int, base: CloneRunConfig,
          threads: int | None = None, timing: bool = True,
          progress: Callable[[str], None] | None = None) -> list[ResultRow]:
    """One row per (N, trial); rows ordered by N then trial index."""
    if not n_list:
        raise ValueError("n_list must not be empty")
    rows: list[ResultRow] = []
    for i, n in enumerate(n_list):
        seeds = [trial_seed(seed, i, t) for t in range(trials)]
        rows += map_trials(lambda s, n=n: run_trial(s, base, n, timing), seeds, threads)
        if progress:
            med = 1.0 - np.median([r.fidelity for r in rows[-trials:]])
            progress(f"N={n}: {trials} trials, median infidelity {med:.3g}")
    return rows


def summarize(rows: Sequence[ResultRow]) -> list[ResultRow]:
    """Quantile rows per N; the ``seed`` column names the quantile."""
    out = []
    for n in dict.fromkeys(r.N for r in rows):
        group = [r for r in rows if r.N == n]
        cols = {c: np.array([getattr(r, c) for r in group])
                for c in ("fidelity", "trace_distance", "max_freq_error", "wall_time")}
        for name, q in SUMMARY_QUANTILES:
            vals = {c: float(np.quantile(v, q)) for c, v in cols.items()}
            out.append(ResultRow(name, group[0].d, n, group[0].povm, group[0].mode, **vals))
    return out


def median_infidelity_by_n(rows: Sequence[ResultRow]) -> dict[int, float]:
    out = {}
    for n in dict.fromkeys(r.N for r in rows):
        out[n] = float(np.median([1.0 - r.fidelity for r in rows if r.N == n]))
    return out


def rows_to_csv(rows: Sequence[ResultRow]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(COLUMNS)
    for r in rows:
        w.writerow(r.as_list())
    return buf.getvalue()


def read_csv(path) -> list[dict[str, str]]:
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


def plot_fidelity_curve(rows: Sequence[ResultRow], path) -> None:
    """Median infidelity against N on log-log axes, saved as SVG."""
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    med = median_infidelity_by_n(rows)
    fig, ax = plt.subplots(figsize=(5, 3.5))
    ax.loglog(list(med), [max(v, 1e-16) for v in med.values()], "o-")
    ax.set_xlabel("number of CTC systems N")
    ax.set_ylabel("median 1 - F")
    ax.grid(True, which="both", alpha=0.3)
    fig.tight_layout()
    fig.savefig(path, format="svg", metadata={"Date": None})
    plt.close(fig)
