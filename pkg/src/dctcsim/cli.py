"""Command-line entry point: ``dctc-sim --command <name> [options]``.

Exit codes: 0 success, 1 check or I/O failure, 2 configuration error,
3 dense-cap error. Progress goes to stderr; data goes to ``--out`` only.
"""

from __future__ import annotations

import argparse
import csv
import json
import sys
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path

import numpy as np

from .circuits import ClonerSpec, cloner_input, cloner_interaction
from .cloning import CloneRunConfig, apply_nonlinear_map, discriminate
from .ctc import DctcInteraction, solve_fixed_point_iterate, solve_fixed_point_spectral
from .experiments import (
    plot_fidelity_curve,
    rows_to_csv,
    summarize,
    sweep,
    thread_count,
    trial_seed,
)
from .qmath import (
    DENSE_CAP,
    CapExceededError,
    DensityOperator,
    SubsystemLayout,
    UnitaryOperator,
    trace_distance,
)
from .validation import FAULTS, diagonal_state, helstrom_bound, run_all

COMMANDS = ("fixed-point", "clone", "sweep", "discriminate", "nonlinear", "validate")
EXIT_OK, EXIT_CHECK, EXIT_CONFIG, EXIT_CAP = 0, 1, 2, 3


@dataclass
class ExperimentConfig:
    command: str = "validate"
    d: int = 2
    n: list[int] = field(default_factory=lambda: [1000])
    povm: str = "sic"
    povm_seed: int = 0
    mode: str = "structured"
    trials: int = 1
    seed: int = 0
    out: str | None = None
    dense_cap: int = DENSE_CAP
    interaction: str = "cloner"
    plot: str | None = None
    timing: bool = True
    inject_fault: str | None = None

    def __post_init__(self):
        if self.command not in COMMANDS:
            raise ValueError(f"unknown command {self.command!r}; choose from {COMMANDS}")
        if self.povm not in ("sic", "random"):
            raise ValueError("povm must be 'sic' or 'random'")
        if self.mode not in ("dense", "structured"):
            raise ValueError("mode must be 'dense' or 'structured'")
        if self.interaction not in ("cloner", "identity", "swap"):
            raise ValueError("interaction must be 'cloner', 'identity' or 'swap'")
        if self.trials < 1 or self.d < 2 or not self.n or min(self.n) < 1:
            raise ValueError("need trials >= 1, d >= 2 and a nonempty list of positive N")
        if self.inject_fault is not None and self.inject_fault not in FAULTS:
            raise ValueError(f"unknown fault {self.inject_fault!r}")

    def to_json(self) -> str:
        return json.dumps(asdict(self), indent=2, sort_keys=True)

    @classmethod
    def from_dict(cls, data: dict) -> "ExperimentConfig":
        known = {f.name for f in fields(cls)}
        extra = set(data) - known
        if extra:
            raise ValueError(f"unknown config keys: {sorted(extra)}")
        data = dict(data)
        if "n" in data and not isinstance(data["n"], list):
            data["n"] = [data["n"]]
        return cls(**data)

    def clone_config(self) -> CloneRunConfig:
        povm = self.povm if self.d == 2 else "random"
        return CloneRunConfig(d=self.d, n_ctc=self.n[0], povm=povm, povm_seed=self.povm_seed,
                              mode=self.mode, seed=self.seed, dense_cap=self.dense_cap)


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="dctc-sim", description=__doc__.splitlines()[0])
    ap.add_argument("--command", choices=COMMANDS)
    ap.add_argument("--d", type=int)
    ap.add_argument("--n", type=int, action="append", help="number of CTC systems (repeatable)")
    ap.add_argument("--povm", choices=("sic", "random"))
    ap.add_argument("--povm-seed", dest="povm_seed", type=int)
    ap.add_argument("--mode", choices=("dense", "structured"))
    ap.add_argument("--trials", type=int)
    ap.add_argument("--seed", type=int)
    ap.add_argument("--out")
    ap.add_argument("--dense-cap", dest="dense_cap", type=int)
    ap.add_argument("--config", help="JSON file with any of the options above")
    ap.add_argument("--interaction", choices=("cloner", "identity", "swap"),
                    help="fixed-point command only")
    ap.add_argument("--plot", help="sweep only: write median infidelity vs N as SVG")
    ap.add_argument("--no-timing", dest="timing", action="store_const", const=False,
                    help="write 0 in the wall_time column so reruns are byte-identical")
    ap.add_argument("--inject-fault", dest="inject_fault", choices=FAULTS, help=argparse.SUPPRESS)
    return ap


def parse_config(argv=None) -> ExperimentConfig:
    args = build_parser().parse_args(argv)
    data: dict = {}
    if args.config:
        data.update(json.loads(Path(args.config).read_text()))
    for k, v in vars(args).items():
        if k != "config" and v is not None:
            data[k] = v
    return ExperimentConfig.from_dict(data)


def _log(msg: str) -> None:
    print(msg, file=sys.stderr, flush=True)


def _out_path(cfg: ExperimentConfig) -> Path:
    return Path(cfg.out or f"dctc_{cfg.command.replace('-', '_')}.csv")


def _write_table(path: Path, header, rows) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        w.writerows(rows)


def _fixed_point_problem(cfg: ExperimentConfig):
    d, n = cfg.d, cfg.n[0]
    if cfg.interaction == "cloner":
        spec = ClonerSpec(d, n, cap=cfg.dense_cap)
        return cloner_interaction(spec), cloner_input(spec, diagonal_state(d))
    layout = SubsystemLayout((d, d), ("S", "C"))
    if cfg.interaction == "identity":
        u = UnitaryOperator.from_permutation(np.arange(d * d), layout)
    else:
        xs, ys = np.divmod(np.arange(d * d), d)
        u = UnitaryOperator.from_permutation(ys * d + xs, layout)
    return DctcInteraction(u, ("C",), cap=cfg.dense_cap), diagonal_state(d)


def cmd_fixed_point(cfg: ExperimentConfig) -> int:
    ix, rho_s = _fixed_point_problem(cfg)
    fp = solve_fixed_point_iterate(ix, rho_s)
    for k, r in enumerate(fp.residuals, start=1):
        _log(f"iteration {k}: residual {r:.3e}")
    mult = solve_fixed_point_spectral(ix, rho_s).ev1_multiplicity
    _log(f"converged={fp.converged} after {fp.iterations} iterations; eigenvalue-1 multiplicity {mult}")
    _write_table(_out_path(cfg), ("iteration", "residual"),
                 [(k, f"{r:.17g}") for k, r in enumerate(fp.residuals, start=1)])
    return EXIT_OK if fp.converged else EXIT_CHECK


def _sweep_rows(cfg: ExperimentConfig):
    return sweep(cfg.n, cfg.trials, cfg.seed, cfg.clone_config(), threads=thread_count(),
                 timing=cfg.timing, progress=_log)


def cmd_clone(cfg: ExperimentConfig) -> int:
    rows = _sweep_rows(cfg)
    _out_path(cfg).write_text(rows_to_csv(rows))
    return EXIT_OK


def cmd_sweep(cfg: ExperimentConfig) -> int:
    rows = _sweep_rows(cfg)
    _out_path(cfg).write_text(rows_to_csv(rows + summarize(rows)))
    if cfg.plot:
        plot_fidelity_curve(rows, cfg.plot)
    return EXIT_OK


def _discrimination_pair(cfg: ExperimentConfig) -> tuple[DensityOperator, DensityOperator]:
    if cfg.d == 2:
        return DensityOperator.from_ket([1, 0]), DensityOperator.from_ket([1, 1])
    rng = np.random.default_rng(cfg.seed)
    kets = rng.standard_normal((2, cfg.d)) + 1j * rng.standard_normal((2, cfg.d))
    return DensityOperator.from_ket(kets[0]), DensityOperator.from_ket(kets[1])


def cmd_discriminate(cfg: ExperimentConfig) -> int:
    rho0, rho1 = _discrimination_pair(cfg)
    base = cfg.clone_config()
    rows, correct = [], 0
    for n in cfg.n:
        for t in range(cfg.trials):
            s = trial_seed(cfg.seed, n, t)
            truth = t % 2
            run = CloneRunConfig(**{**asdict(base), "n_ctc": n, "seed": s})
            guess = discriminate(rho0, rho1, (rho0, rho1)[truth], run)
            correct += guess == truth
            rows.append((s, cfg.d, n, truth, guess))
        _log(f"N={n}: success rate {sum(r[3] == r[4] for r in rows[-cfg.trials:]) / cfg.trials:.4f}")
    _log(f"Helstrom bound for a linear measurement: {helstrom_bound(rho0, rho1):.4f}")
    _write_table(_out_path(cfg), ("seed", "d", "N", "truth", "guess"), rows)
    return EXIT_OK


def nearest_pure_state(rho: DensityOperator) -> DensityOperator:
    w, v = np.linalg.eigh(rho.mat)
    return DensityOperator.from_ket(v[:, -1], rho.layout.dims, rho.layout.labels)


def cmd_nonlinear(cfg: ExperimentConfig) -> int:
    """Purify a slightly mixed state near |0>: a map no linear channel implements."""
    d = cfg.d
    target = np.zeros((d, d))
    target[0, 0] = 1.0
    rho = DensityOperator.from_matrix(0.9 * target + 0.1 * np.eye(d) / d)
    base = cfg.clone_config()
    rows = []
    for n in cfg.n:
        for t in range(cfg.trials):
            s = trial_seed(cfg.seed, n, t)
            out = apply_nonlinear_map(nearest_pure_state, rho,
                                      CloneRunConfig(**{**asdict(base), "n_ctc": n, "seed": s}))
            rows.append((s, d, n, f"{trace_distance(out.mat, target):.17g}"))
        _log(f"N={n}: median distance to |0><0| "
             f"{np.median([float(r[3]) for r in rows[-cfg.trials:]]):.3e}")
    _write_table(_out_path(cfg), ("seed", "d", "N", "trace_distance_to_target"), rows)
    return EXIT_OK


def cmd_validate(cfg: ExperimentConfig) -> int:
    checks = run_all(fault=cfg.inject_fault, report=_log)
    failed = [c.name for c in checks if not c.passed]
    if failed:
        _log(f"FAILED: {', '.join(failed)}")
        return EXIT_CHECK
    _log(f"all {len(checks)} checks passed")
    return EXIT_OK


HANDLERS = {
    "fixed-point": cmd_fixed_point,
    "clone": cmd_clone,
    "sweep": cmd_sweep,
    "discriminate": cmd_discriminate,
    "nonlinear": cmd_nonlinear,
    "validate": cmd_validate,
}


def main(argv=None) -> int:
    try:
        cfg = parse_config(argv)
    except SystemExit as exc:
        return EXIT_CONFIG if exc.code else EXIT_OK
    except (ValueError, TypeError, OSError, json.JSONDecodeError) as exc:
        _log(f"configuration error: {exc}")
        return EXIT_CONFIG
    try:
        return HANDLERS[cfg.command](cfg)
    except CapExceededError as exc:
        _log(f"resource cap: {exc}")
        return EXIT_CAP
    except ValueError as exc:
        _log(f"configuration error: {exc}")
        return EXIT_CONFIG
    except OSError as exc:
        _log(f"I/O error: {exc}")
        return EXIT_CHECK


if __name__ == "__main__":
    sys.exit(main())
