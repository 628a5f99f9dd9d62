"""Permutation circuits for the cloner: cyclic shift, modular addition, readout.

Circuits are described by a :class:`Netlist` (named slots plus an ordered gate
list) which can be written to and read from a small text format, and compiled
into a permutation :class:`~dctcsim.qmath.UnitaryOperator`.

Netlist text format::

    slot S 2 cr
    slot A1 2 cr
    slot C1 2 ctc
    gate shift S C1
    gate modadd C1 A1

Shift units made of several slots are joined with ``+`` (``gate shift E+B E1+B1``).
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .ctc import DctcInteraction
from .qmath import (
    DENSE_CAP,
    CapExceededError,
    DensityOperator,
    SubsystemLayout,
    UnitaryOperator,
    as_matrix,
    check_cap,
    tensor_product,
)


@dataclass(frozen=True)
class Gate:
    """``shift``: units move one position right, last unit wraps to the front.
    ``modadd``: units are ``((control,), (target,))``; target += control mod d."""

    kind: str
    units: tuple[tuple[str, ...], ...]

    def __post_init__(self):
        if self.kind not in ("shift", "modadd"):
            raise ValueError(f"unknown gate kind {self.kind!r}")
        if self.kind == "modadd" and (len(self.units) != 2 or any(len(u) != 1 for u in self.units)):
            raise ValueError("modadd takes exactly one control slot and one target slot")
        if self.kind == "shift" and len(self.units) < 2:
            raise ValueError("shift needs at least two units")

    def slots(self) -> tuple[str, ...]:
        return tuple(lb for unit in self.units for lb in unit)


@dataclass(frozen=True)
class Netlist:
    layout: SubsystemLayout
    ctc: tuple[str, ...]
    gates: tuple[Gate, ...]

    def __post_init__(self):
        for lb in self.ctc:
            self.layout.index(lb)
        for g in self.gates:
            dims = [tuple(self.layout.dim(lb) for lb in unit) for unit in g.units]
            if len(set(dims)) != 1:
                raise ValueError(f"{g.kind} gate mixes units of different dimensions: {dims}")

    def count(self, kind: str) -> int:
        return sum(g.kind == kind for g in self.gates)

    def to_text(self) -> str:
        lines = []
        for d, lb in zip(self.layout.dims, self.layout.labels):
            lines.append(f"slot {lb} {d} {'ctc' if lb in self.ctc else 'cr'}")
        for g in self.gates:
            lines.append("gate " + g.kind + " " + " ".join("+".join(u) for u in g.units))
        return "\n".join(lines) + "\n"

    @classmethod
    def from_text(cls, text: str) -> "Netlist":
        dims, labels, ctc, gates = [], [], [], []
        for raw in text.splitlines():
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            head, *rest = line.split()
            if head == "slot":
                lb, d, role = rest
                if role not in ("cr", "ctc"):
                    raise ValueError(f"slot role must be 'cr' or 'ctc', got {role!r}")
                labels.append(lb)
                dims.append(int(d))
                if role == "ctc":
                    ctc.append(lb)
            elif head == "gate":
                kind, *units = rest
                gates.append(Gate(kind, tuple(tuple(u.split("+")) for u in units)))
            else:
                raise ValueError(f"unrecognized netlist line: {raw!r}")
        return cls(SubsystemLayout(tuple(dims), tuple(labels)), tuple(ctc), tuple(gates))

    def permutation(self) -> np.ndarray:
        """``perm[i]`` is the image of basis index ``i`` under the whole circuit."""
        dims = self.layout.dims
        digits = np.array(np.unravel_index(np.arange(self.layout.total), dims))
        for g in self.gates:
            pos = [[self.layout.index(lb) for lb in unit] for unit in g.units]
            if g.kind == "shift":
                old = digits.copy()
                for i, unit in enumerate(pos):
                    digits[unit] = old[pos[i - 1]]
            else:
                (c,), (t,) = pos
                digits[t] = (digits[c] + digits[t]) % dims[t]
        return np.ravel_multi_index(tuple(digits), dims)

    def unitary(self, cap: int | None = None) -> UnitaryOperator:
        check_cap(self.layout.total, cap, "circuit dimension")
        return UnitaryOperator.from_permutation(self.permutation(), self.layout)


def cyclic_shift_unitary(d: int, k: int, cap: int | None = None) -> UnitaryOperator:
    """``|x1 ... xk> -> |xk x1 ... x(k-1)>`` on ``k`` qudits of dimension ``d``."""
    if k < 2:
        raise ValueError("k must be at least 2")
    if d < 1:
        raise ValueError("d must be positive")
    check_cap(d**k, cap, "cyclic shift dimension")
    layout = SubsystemLayout.of([d] * k)
    return Netlist(layout, (), (Gate("shift", tuple((lb,) for lb in layout.labels)),)).unitary(cap)


def modular_add_gate(d: int) -> UnitaryOperator:
    """``|x>|y> -> |x>|(x + y) mod d>``; the CNOT for ``d = 2``."""
    if d < 2:
        raise ValueError("d must be at least 2")
    layout = SubsystemLayout((d, d), ("control", "target"))
    return Netlist(layout, (), (Gate("modadd", (("control",), ("target",))),)).unitary()


@dataclass(frozen=True)
class ClonerSpec:
    """Cloner shape.

    ``d`` is the dimension of the slots carrying the classical register (the POVM
    outcome count once a measurement map is in front). For ``variant="coherent"``
    each register slot travels with an environment slot of dimension ``d_env``.
    ``readout_basis`` is a ``d x d`` unitary whose columns are the basis in which
    the modular additions act; ``None`` means the computational basis.
    """

    d: int
    n_ctc: int
    variant: str = "measured"
    readout_basis: np.ndarray | None = None
    d_env: int = 1
    cap: int = DENSE_CAP

    def __post_init__(self):
        if self.d < 2:
            raise ValueError("d must be at least 2")
        if self.n_ctc < 1:
            raise ValueError("n_ctc must be at least 1")
        if self.variant not in ("measured", "coherent"):
            raise ValueError(f"variant must be 'measured' or 'coherent', got {self.variant!r}")
        if self.variant == "coherent" and self.readout_basis is not None:
            raise ValueError("a custom readout basis is only supported for the measured variant")
        if self.d_env < 1:
            raise ValueError("d_env must be positive")

    @property
    def total_dim(self) -> int:
        env = self.d_env if self.variant == "coherent" else 1
        return self.d ** (2 * self.n_ctc + 1) * env ** (self.n_ctc + 1)


def cloner_netlist(spec: ClonerSpec) -> Netlist:
    n, d = spec.n_ctc, spec.d
    anc = [f"A{i}" for i in range(1, n + 1)]
    if spec.variant == "measured":
        ctc = [f"C{i}" for i in range(1, n + 1)]
        labels = ["S", *anc, *ctc]
        dims = [d] * len(labels)
        units = [("S",)] + [(c,) for c in ctc]
        reads = ctc
    else:
        env = [(f"E{i}", f"B{i}") for i in range(1, n + 1)]
        ctc = [lb for pair in env for lb in pair]
        labels = ["E", "B", *anc, *ctc]
        dims = [spec.d_env, d] + [d] * n + [spec.d_env, d] * n
        units = [("E", "B")] + env
        reads = [b for _, b in env]
    gates = [Gate("shift", tuple(units))]
    gates += [Gate("modadd", ((r,), (a,))) for r, a in zip(reads, anc)]
    return Netlist(SubsystemLayout(tuple(dims), tuple(labels)), tuple(ctc), tuple(gates))


def cloner_interaction(spec: ClonerSpec) -> DctcInteraction:
    """One pass of the cloner: cyclic shift first, then the readout additions."""
    total = spec.total_dim
    if total > spec.cap:
        base = f"{spec.d}^(2*{spec.n_ctc}+1)"
        if spec.variant == "coherent":
            base += f" * {spec.d_env}^({spec.n_ctc}+1)"
        raise CapExceededError(f"cloner dimension {base} = {total} exceeds dense cap {spec.cap}")
    net = cloner_netlist(spec)
    u = net.unitary(spec.cap)
    if spec.readout_basis is not None:
        v = as_matrix(spec.readout_basis)
        w = tensor_product(*[v] * len(net.layout))
        u = UnitaryOperator(w @ u.mat @ w.conj().T, net.layout)
    return DctcInteraction(u, net.ctc, netlist=net, cap=spec.cap)


def cloner_input(spec: ClonerSpec, system: DensityOperator) -> DensityOperator:
    """Chronology-respecting input: the system state followed by ancillas in ``|0>``.

    ``system`` lives on ``S`` for the measured variant and on ``(E, B)`` for the
    coherent variant.
    """
    ket0 = np.zeros(spec.d, dtype=complex)
    ket0[0] = 1.0
    if spec.readout_basis is not None:
        ket0 = as_matrix(spec.readout_basis) @ ket0
    anc = np.outer(ket0, ket0.conj())
    mat = tensor_product(system.mat, *[anc] * spec.n_ctc)
    head = ["S"] if spec.variant == "measured" else ["E", "B"]
    labels = head + [f"A{i}" for i in range(1, spec.n_ctc + 1)]
    dims = list(system.layout.dims) + [spec.d] * spec.n_ctc
    return DensityOperator(mat, SubsystemLayout.of(dims, labels))


def decohere_in_basis(rho: DensityOperator, slot: str, basis=None) -> DensityOperator:
    """Remove coherences of one slot in the given basis (computational by default)."""
    pos = rho.layout.index(slot)
    dims = rho.layout.dims
    mat = rho.mat
    if basis is not None:
        w = _embed(as_matrix(basis), dims, pos)
        mat = w.conj().T @ mat @ w
    n = len(dims)
    t = mat.reshape(dims + dims).copy()
    d = dims[pos]
    mask_shape = [1] * (2 * n)
    mask_shape[pos] = d
    mask_shape[n + pos] = d
    t = t * np.eye(d).reshape(mask_shape)
    out = t.reshape(rho.dim, rho.dim)
    if basis is not None:
        out = w @ out @ w.conj().T
    return DensityOperator(out, rho.layout)


def _embed(op: np.ndarray, dims: tuple[int, ...], pos: int) -> np.ndarray:
    left = math.prod(dims[:pos])
    right = math.prod(dims[pos + 1:])
    return np.kron(np.kron(np.eye(left), op), np.eye(right))
