"""Informationally complete measurements and linear-inversion tomography."""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np
import scipy.linalg

from .qmath import (
    TOL_HERM,
    TOL_PSD,
    DensityOperator,
    DimensionError,
    SubsystemLayout,
    UnitaryOperator,
    _parse_matrix_lines,
    format_matrix,
    nearest_density_operator,
    sqrt_psd,
)

TOL_COMPLETE = 1e-10
RANK_RTOL = 1e-9
FREQ_SUM_TOL = 1e-6
MAX_POVM_RETRIES = 16


class NotInformationallyCompleteError(ValueError):
    pass


@dataclass(frozen=True, eq=False)
class Povm:
    """Effects ``M_x`` stacked as an array of shape ``(d_out, d_in, d_in)``."""

    effects: np.ndarray

    def __post_init__(self):
        e = np.array(self.effects, dtype=complex)
        if e.ndim != 3 or e.shape[1] != e.shape[2]:
            raise DimensionError(f"effects must have shape (n, d, d), got {e.shape}")
        for k, m in enumerate(e):
            if np.max(np.abs(m - m.conj().T)) > TOL_HERM:
                raise ValueError(f"effect {k} is not Hermitian")
            if np.linalg.eigvalsh(m)[0] < -TOL_PSD:
                raise ValueError(f"effect {k} is not positive semidefinite")
        defect = np.max(np.abs(e.sum(axis=0) - np.eye(e.shape[1])))
        if defect > TOL_COMPLETE:
            raise ValueError(f"effects do not sum to the identity (defect {defect:.3g})")
        e.setflags(write=False)
        object.__setattr__(self, "effects", e)

    @property
    def d_in(self) -> int:
        return self.effects.shape[1]

    @property
    def d_out(self) -> int:
        return self.effects.shape[0]

    def vectorized(self) -> np.ndarray:
        """Rows ``a_x`` with ``a_x . vec(rho) = Tr(M_x rho)`` (row-major vec)."""
        return self.effects.transpose(0, 2, 1).reshape(self.d_out, -1)

    def to_text(self) -> str:
        parts = [f"{self.d_in} {self.d_out}\n"] + [format_matrix(m) for m in self.effects]
        return "".join(parts)

    @classmethod
    def from_text(cls, text: str) -> "Povm":
        lines = iter(ln for ln in text.split("\n") if ln.strip())
        d_in, d_out = (int(v) for v in next(lines).split())
        effects = [_parse_matrix_lines(lines) for _ in range(d_out)]
        if any(m.shape != (d_in, d_in) for m in effects):
            raise DimensionError("effect dimension does not match header")
        return cls(np.stack(effects))


_PAULI = np.array([[[0, 1], [1, 0]], [[0, -1j], [1j, 0]], [[1, 0], [0, -1]]], dtype=complex)

TETRAHEDRON = np.array([[1, 1, 1], [1, -1, -1], [-1, 1, -1], [-1, -1, 1]], dtype=float) / np.sqrt(3)


def sic_qubit() -> Povm:
    """Tetrahedral qubit SIC-POVM, ``M_k = (I + v_k . sigma) / 4``."""
    effects = [(np.eye(2) + np.einsum("i,ijk->jk", v, _PAULI)) / 4 for v in TETRAHEDRON]
    return Povm(np.stack(effects))


def computational_povm(d: int) -> Povm:
    """Projective measurement in the computational basis (not IC for d > 1)."""
    return Povm(np.stack([np.diag(np.eye(d)[k]).astype(complex) for k in range(d)]))


def random_ic_povm(d: int, seed=None) -> Povm:
    """Seeded rank-one IC-POVM with ``d**2`` outcomes.

    Random rank-one operators ``G_x`` are normalized by ``S**(-1/2) G_x S**(-1/2)``
    where ``S = sum_x G_x``. Draws that come out rank deficient are discarded and
    the generator is advanced.
    """
    if d < 2:
        raise ValueError("d must be at least 2")
    rng = np.random.default_rng(seed)
    for _ in range(MAX_POVM_RETRIES):
        g = rng.standard_normal((d * d, d)) + 1j * rng.standard_normal((d * d, d))
        raw = np.einsum("xi,xj->xij", g, g.conj())
        s_inv_half = np.linalg.inv(sqrt_psd(raw.sum(axis=0)))
        eff = np.einsum("ij,xjk,kl->xil", s_inv_half, raw, s_inv_half)
        eff = 0.5 * (eff + eff.conj().transpose(0, 2, 1))
        # absorb the residual roundoff of the normalization into the last effect
        eff[-1] += np.eye(d) - eff.sum(axis=0)
        p = Povm(eff)
        if completeness_rank(p) == d * d:
            return p
    raise RuntimeError(f"could not draw an IC-POVM in dimension {d} after {MAX_POVM_RETRIES} tries")


def default_povm(d: int, seed=None) -> Povm:
    return sic_qubit() if d == 2 else random_ic_povm(d, seed)


def completeness_rank(p: Povm) -> int:
    sv = np.linalg.svd(p.vectorized(), compute_uv=False)
    return int(np.sum(sv > RANK_RTOL * sv[0]))


def is_informationally_complete(p: Povm) -> bool:
    return completeness_rank(p) == p.d_in**2


def _check_input(p: Povm, rho: DensityOperator) -> None:
    if rho.dim != p.d_in:
        raise DimensionError(f"POVM acts on dimension {p.d_in}, state has {rho.dim}")


def outcome_probabilities(p: Povm, rho: DensityOperator) -> np.ndarray:
    """``Tr(M_x rho)`` for every outcome, tiny negatives clipped to zero."""
    _check_input(p, rho)
    probs = np.einsum("xij,ji->x", p.effects, rho.mat).real
    probs[(probs < 0) & (probs >= -1e-12)] = 0.0
    return probs


def measurement_map(p: Povm, rho: DensityOperator, label: str = "X") -> DensityOperator:
    """Classical state ``sum_x Tr(M_x rho) |x><x|`` on a fresh ``d_out`` slot."""
    if not is_informationally_complete(p):
        warnings.warn("measurement map with a POVM that is not informationally complete",
                      stacklevel=2)
    probs = outcome_probabilities(p, rho)
    return DensityOperator(np.diag(probs / probs.sum()), SubsystemLayout((p.d_out,), (label,)))


def kraus_operators(p: Povm) -> np.ndarray:
    """Positive square roots ``sqrt(M_x)``."""
    return np.stack([sqrt_psd(m) for m in p.effects])


def stinespring_unitary(p: Povm, labels: tuple[str, str] = ("E", "B")) -> UnitaryOperator:
    """Unitary on input (E) x pointer (B) with ``|psi>|0> -> sum_x sqrt(M_x)|psi> |x>``.

    The pointer has ``d_out`` levels; no extra padding slot is needed because the
    input-times-pointer space already has room for the isometry's range.
    """
    d, n = p.d_in, p.d_out
    k = kraus_operators(p)
    iso = np.einsum("xei->exi", k).reshape(d * n, d)
    u = np.zeros((d * n, d * n), dtype=complex)
    cols_in = np.arange(d) * n
    u[:, cols_in] = iso
    rest = np.setdiff1d(np.arange(d * n), cols_in)
    u[:, rest] = scipy.linalg.null_space(iso.conj().T)
    return UnitaryOperator(u, SubsystemLayout((d, n), labels))


@dataclass(frozen=True, eq=False)
class ReconstructionFrame:
    """Pseudoinverse of the vectorized effect matrix."""

    povm: Povm
    pseudoinverse_map: np.ndarray


def build_frame(p: Povm) -> ReconstructionFrame:
    rank = completeness_rank(p)
    if rank != p.d_in**2:
        raise NotInformationallyCompleteError(
            f"completeness rank {rank} < {p.d_in**2}; state cannot be reconstructed")
    pinv = np.linalg.pinv(p.vectorized())
    pinv.setflags(write=False)
    return ReconstructionFrame(p, pinv)


def reconstruct(f: ReconstructionFrame, probs) -> DensityOperator:
    """Linear inversion of outcome frequencies, then projection onto density operators."""
    probs = np.asarray(probs, dtype=float)
    if probs.shape != (f.povm.d_out,):
        raise DimensionError(f"expected {f.povm.d_out} probabilities, got shape {probs.shape}")
    if np.any(probs < -FREQ_SUM_TOL):
        raise ValueError("probabilities must be non-negative")
    total = probs.sum()
    if abs(total - 1.0) > FREQ_SUM_TOL:
        raise ValueError(f"probabilities sum to {total}, expected 1")
    d = f.povm.d_in
    est = (f.pseudoinverse_map @ (probs / total)).reshape(d, d)
    return nearest_density_operator(est)
