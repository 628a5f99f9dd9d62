"""Deutsch self-consistency: solve ``sigma = Tr_S[U (rho (x) sigma) U^dagger]``.

Interactions whose unitary is a basis permutation (every circuit in
:mod:`dctcsim.circuits`) go through an index-gather path that never forms the
joint ``d_S * d_C`` matrix. Any other unitary goes through the literal dense
route.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property
from typing import Any

import numpy as np

from .qmath import (
    DENSE_CAP,
    DensityOperator,
    DimensionError,
    SubsystemLayout,
    UnitaryOperator,
    check_cap,
    conjugate_array,
    maximally_mixed,
    nearest_density_operator,
    permute_slots_array,
    ptrace_array,
    trace_distance,
)

EV1_TOL = 1e-9
DEFAULT_TOL = 1e-12


class FixedPointError(RuntimeError):
    """The superoperator has no eigenvalue 1; only possible after numerical corruption."""


@dataclass(frozen=True, eq=False)
class DctcInteraction:
    """A unitary on chronology-respecting (S) and CTC (C) slots.

    ``u`` may list its slots in any order; internally the unitary is re-expressed
    with all S slots first, then all C slots, each group in layout order.
    """

    u: UnitaryOperator
    c_slots: tuple[str, ...]
    netlist: Any = None
    cap: int = DENSE_CAP

    def __post_init__(self):
        c = tuple(self.c_slots)
        for lb in c:
            self.u.layout.index(lb)
        if not c or len(set(c)) != len(c):
            raise ValueError("c_slots must be a nonempty set of distinct labels")
        if len(c) == len(self.u.layout):
            raise ValueError("at least one chronology-respecting slot is required")
        object.__setattr__(self, "c_slots", c)
        check_cap(self.u.layout.total, self.cap, "interaction dimension")

    @property
    def layout(self) -> SubsystemLayout:
        return self.u.layout

    @property
    def s_slots(self) -> tuple[str, ...]:
        return tuple(lb for lb in self.layout.labels if lb not in self.c_slots)

    @property
    def s_layout(self) -> SubsystemLayout:
        return self.layout.select(self.s_slots)

    @property
    def c_layout(self) -> SubsystemLayout:
        return self.layout.select(self.c_slots)

    @property
    def d_s(self) -> int:
        return self.s_layout.total

    @property
    def d_c(self) -> int:
        return self.c_layout.total

    @cached_property
    def _order(self) -> list[int]:
        labels = self.layout.labels
        return [i for i, lb in enumerate(labels) if lb not in self.c_slots] + \
               [i for i, lb in enumerate(labels) if lb in self.c_slots]

    @cached_property
    def u_sc(self) -> UnitaryOperator:
        """The unitary with slots reordered to (S..., C...)."""
        order = self._order
        if order == list(range(len(order))):
            return self.u
        dims = self.layout.dims
        layout = SubsystemLayout(tuple(dims[i] for i in order),
                                 tuple(self.layout.labels[i] for i in order))
        if self.u.perm is not None:
            # new_to_old[j]: layout index of canonical basis index j
            new_to_old = np.arange(self.layout.total).reshape(dims).transpose(order).ravel()
            old_to_new = np.empty_like(new_to_old)
            old_to_new[new_to_old] = np.arange(new_to_old.size)
            return UnitaryOperator.from_permutation(old_to_new[self.u.perm[new_to_old]], layout)
        return UnitaryOperator(permute_slots_array(self.u.mat, dims, order), layout)

    @cached_property
    def _gather(self) -> tuple[np.ndarray, np.ndarray]:
        """Preimage (s, c) of every output basis pair (s', c') under the permutation."""
        perm = self.u_sc.perm
        inv = np.empty_like(perm)
        inv[perm] = np.arange(perm.size)
        s_old, c_old = np.divmod(inv.reshape(self.d_s, self.d_c), self.d_c)
        return s_old, c_old


@dataclass(frozen=True, eq=False)
class FixedPointResult:
    sigma: DensityOperator
    iterations: int
    residual: float
    method: str
    converged: bool = True
    ev1_multiplicity: int | None = None
    residuals: tuple[float, ...] = field(default=())


def _as_input(state: DensityOperator, layout: SubsystemLayout, role: str) -> np.ndarray:
    if state.dim != layout.total:
        raise DimensionError(f"{role} has dim {state.dim}, interaction expects {layout.total}")
    return state.mat


def _joint(ix: DctcInteraction, rho: np.ndarray, sigma: np.ndarray) -> np.ndarray:
    return conjugate_array(ix.u_sc, np.kron(rho, sigma))


def _phi_array(ix: DctcInteraction, rho: np.ndarray, sigma: np.ndarray) -> np.ndarray:
    if ix.u_sc.perm is not None:
        s_old, c_old = ix._gather
        r = rho[s_old[:, :, None], s_old[:, None, :]]
        g = sigma[c_old[:, :, None], c_old[:, None, :]]
        return np.einsum("sij,sij->ij", r, g)
    dims = ix.u_sc.layout.dims
    n_s = len(ix.s_slots)
    return ptrace_array(_joint(ix, rho, sigma), dims, range(n_s, len(dims)))


def _out_array(ix: DctcInteraction, rho: np.ndarray, sigma: np.ndarray) -> np.ndarray:
    if ix.u_sc.perm is not None:
        s_old, c_old = ix._gather
        r = rho[s_old[:, None, :], s_old[None, :, :]]
        g = sigma[c_old[:, None, :], c_old[None, :, :]]
        return np.einsum("abc,abc->ab", r, g)
    dims = ix.u_sc.layout.dims
    return ptrace_array(_joint(ix, rho, sigma), dims, range(len(ix.s_slots)))


def apply_phi(ix: DctcInteraction, rho_s: DensityOperator, sigma: DensityOperator) -> DensityOperator:
    """One application of the consistency map; the result lives on the CTC slots."""
    rho = _as_input(rho_s, ix.s_layout, "rho_s")
    sig = _as_input(sigma, ix.c_layout, "sigma")
    return DensityOperator(_phi_array(ix, rho, sig), ix.c_layout)


def phi_superoperator(ix: DctcInteraction, rho_s: DensityOperator) -> np.ndarray:
    """Matrix ``S`` with ``vec(Phi(sigma)) = S @ vec(sigma)`` (row-major vec)."""
    rho = _as_input(rho_s, ix.s_layout, "rho_s")
    dc = ix.d_c
    check_cap(dc * dc, ix.cap, "superoperator dimension")
    if ix.u_sc.perm is not None:
        s_old, c_old = ix._gather
        vals = rho[s_old[:, :, None], s_old[:, None, :]]
        rows = np.broadcast_to(np.arange(dc)[:, None] * dc + np.arange(dc)[None, :], vals.shape)
        cols = c_old[:, :, None] * dc + c_old[:, None, :]
        sup = np.zeros((dc * dc, dc * dc), dtype=complex)
        np.add.at(sup, (rows.ravel(), cols.ravel()), vals.ravel())
        return sup
    u4 = ix.u_sc.mat.reshape(ix.d_s, dc, ix.d_s, dc)
    t = np.einsum("xiaj,ab->xijb", u4, rho)
    return np.einsum("xijb,xkbl->ikjl", t, u4.conj()).reshape(dc * dc, dc * dc)


def solve_fixed_point_iterate(ix: DctcInteraction, rho_s: DensityOperator,
                              sigma0: DensityOperator | None = None,
                              tol: float = DEFAULT_TOL,
                              max_iter: int | None = None) -> FixedPointResult:
    """Iterate the consistency map from ``sigma0`` (maximally mixed by default).

    ``iterations`` counts map applications up to the returned iterate, and
    ``residuals[k-1]`` is the trace distance between iterate ``k`` and its image.
    Running out of iterations is reported through ``converged=False``.
    """
    if tol <= 0:
        raise ValueError("tol must be positive")
    if max_iter is None:
        max_iter = 10 * ix.d_c**2 + 100
    rho = _as_input(rho_s, ix.s_layout, "rho_s")
    sigma = maximally_mixed(ix.c_layout).mat if sigma0 is None else \
        _as_input(sigma0, ix.c_layout, "sigma0")
    cur = _phi_array(ix, rho, sigma)
    residuals = []
    k = 1
    while True:
        nxt = _phi_array(ix, rho, cur)
        r = trace_distance(nxt, cur)
        residuals.append(r)
        if r <= tol or k >= max_iter:
            return FixedPointResult(DensityOperator(cur, ix.c_layout), k, r, "iterate",
                                    converged=r <= tol, residuals=tuple(residuals))
        cur = nxt
        k += 1


def _hermitian_dimension(basis: np.ndarray, dc: int) -> int:
    """Real dimension of the Hermitian operators inside span(basis columns)."""
    mats = basis.T.reshape(-1, dc, dc)
    herm = 0.5 * (mats + mats.conj().transpose(0, 2, 1))
    anti = 0.5j * (mats - mats.conj().transpose(0, 2, 1))
    stack = np.concatenate([herm, anti]).reshape(2 * len(mats), -1)
    real = np.concatenate([stack.real, stack.imag], axis=1)
    sv = np.linalg.svd(real, compute_uv=False)
    return int(np.sum(sv > EV1_TOL * max(1.0, sv[0])))


def solve_fixed_point_spectral(ix: DctcInteraction, rho_s: DensityOperator) -> FixedPointResult:
    """Fixed space of the consistency map from the superoperator's eigenvalue-1 space.

    The returned state is the maximally mixed state projected onto the fixed space,
    so when the fixed point is not unique the choice is reported via
    ``ev1_multiplicity`` rather than resolved.
    """
    sup = phi_superoperator(ix, rho_s)
    dc = ix.d_c
    _, sv, vh = np.linalg.svd(sup - np.eye(dc * dc))
    fixed = vh[sv < EV1_TOL].conj().T
    if fixed.shape[1] == 0:
        raise FixedPointError(f"no eigenvalue within {EV1_TOL} of 1 (smallest gap {sv[-1]:.3g})")
    mult = _hermitian_dimension(fixed, dc)
    pi = np.eye(dc).ravel() / dc
    proj = (fixed @ (fixed.conj().T @ pi)).reshape(dc, dc)
    proj = 0.5 * (proj + proj.conj().T)
    sigma = nearest_density_operator(proj / np.trace(proj).real, ix.c_layout)
    residual = trace_distance(apply_phi(ix, rho_s, sigma), sigma)
    return FixedPointResult(sigma, 0, residual, "spectral", converged=True, ev1_multiplicity=mult)


def ctc_output(ix: DctcInteraction, rho_s: DensityOperator, fp: FixedPointResult) -> DensityOperator:
    """Chronology-respecting output ``Tr_C[U (rho (x) sigma) U^dagger]``."""
    rho = _as_input(rho_s, ix.s_layout, "rho_s")
    sig = _as_input(fp.sigma, ix.c_layout, "sigma")
    return DensityOperator(_out_array(ix, rho, sig), ix.s_layout)
